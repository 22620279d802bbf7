//! Magnetometric sensitivity analysis of the entanglement-lifetime
//! observable.
//!
//! The chain of reasoning implemented here: a shot-noise-limited energy
//! measurement over time `T` with `n` probes resolves `dE = 1/(T sqrt(n))`;
//! reading the field through the electron Zeeman splitting for the duration
//! of the reaction (`T_r`) therefore resolves at best
//! `dB_fund = 1/((S/N) gamma T_r)`. Reading the field through *any*
//! observable `O(B)` instead resolves `dB = dO / |dO/dB|`. For the
//! entanglement lifetime `O = T_E`, whose own measurement precision is
//! `dT_E = T_E^2 / ((S/N) T_r)`, the quotient of the two routes is
//!
//! `r = dB_TE / dB_fund = gamma T_E^2 / |dT_E/dB|`,
//!
//! independent of S/N and T_r. A physically consistent observable can never
//! beat the fundamental route, so `r >= 1` everywhere; `r < 1` flags a model
//! assumption that manufactures field information out of nothing. The scan
//! here computes `T_E(B)` over a field grid, differentiates it by finite
//! differences (deliberately *without* smoothing: steep stretches are the
//! whole point), and reports every grid point where `r` dips below 1.
//!
//! Lifetime-versus-field sweeps run the per-field extractions in parallel;
//! each extraction is deterministic and the reduction preserves grid order,
//! so sweep output is bit-identical regardless of thread count.

use crate::dynamics::RadicalPairModel;
use crate::entanglement::{model_lifetime, LifetimeResult, LifetimeSettings};
use rayon::prelude::*;
use thiserror::Error;

/// Jump-detection threshold on |T_E(B_{i+1}) - T_E(B_i)|, ns: generously
/// above refinement noise (1e-3 ns) and far below the ~50 ns jumps the
/// one-nucleus model produces.
pub const DEFAULT_JUMP_THRESHOLD: f64 = 5.0;
/// Half-width of the automatic zoom window around the steepest point, mT.
pub const DEFAULT_ZOOM_HALF_WIDTH: f64 = 0.25;
/// Field step of the zoom pass, mT.
pub const DEFAULT_ZOOM_STEP: f64 = 0.001;
/// Minimum run of consecutive non-censored points required for slope
/// analysis.
pub const MIN_SLOPE_RUN: usize = 3;

/// Errors from the metrology layer.
#[derive(Debug, Error)]
pub enum MagnetometryError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("invalid field grid: {0}")]
    InvalidGrid(String),
    #[error(
        "slope analysis needs a run of at least {needed} consecutive non-censored points, \
         longest available run has {found}"
    )]
    TooFewPoints { needed: usize, found: usize },
    #[error(transparent)]
    Entanglement(#[from] crate::entanglement::EntanglementError),
}

/// Measurement-budget parameters for the precision formulas.
#[derive(Clone, Copy, Debug)]
pub struct MagnetometryParams {
    /// Signal-to-noise ratio (dimensionless), > 0.
    pub snr: f64,
    /// Reaction time `T_r`, ns, > 0.
    pub reaction_time: f64,
    /// Electron gyromagnetic ratio, rad ns^-1 mT^-1, > 0.
    pub gamma: f64,
}

impl MagnetometryParams {
    pub fn new(snr: f64, reaction_time: f64, gamma: f64) -> Result<Self, MagnetometryError> {
        let p = MagnetometryParams {
            snr,
            reaction_time,
            gamma,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), MagnetometryError> {
        for (name, v) in [
            ("snr", self.snr),
            ("reaction_time", self.reaction_time),
            ("gamma", self.gamma),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(MagnetometryError::InvalidParams(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Precision formulas
// ---------------------------------------------------------------------------

/// Shot-noise energy precision `dE = 1/(T sqrt(n))` for `n` probes measured
/// over `duration` ns; result in rad/ns.
pub fn shot_noise_precision(n_probes: u64, duration: f64) -> Result<f64, MagnetometryError> {
    if n_probes == 0 {
        return Err(MagnetometryError::InvalidParams(
            "probe count must be at least 1".into(),
        ));
    }
    if !(duration > 0.0 && duration.is_finite()) {
        return Err(MagnetometryError::InvalidParams(format!(
            "duration must be positive and finite, got {duration}"
        )));
    }
    Ok(1.0 / (duration * (n_probes as f64).sqrt()))
}

/// Fundamental field-measurement limit `dB_fund = 1/((S/N) gamma T_r)`, mT:
/// the best any readout of this radical pair can do, set by the reaction
/// time alone.
pub fn fundamental_field_limit(params: &MagnetometryParams) -> f64 {
    1.0 / (params.snr * params.gamma * params.reaction_time)
}

/// Field precision through an arbitrary observable: `dB = dO / |dO/dB|`.
/// A zero slope means the observable carries no field information; the
/// sentinel `+inf` is returned.
pub fn observable_field_sensitivity(
    delta_o: f64,
    slope: f64,
) -> Result<f64, MagnetometryError> {
    if !delta_o.is_finite() || delta_o < 0.0 {
        return Err(MagnetometryError::InvalidParams(format!(
            "observable precision must be non-negative and finite, got {delta_o}"
        )));
    }
    if !slope.is_finite() {
        return Err(MagnetometryError::InvalidParams(format!(
            "slope must be finite, got {slope}"
        )));
    }
    let magnitude = slope.abs();
    if magnitude == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(delta_o / magnitude)
}

/// Precision of a lifetime measurement: `dT_E = T_E^2 / ((S/N) T_r)`, ns —
/// the lifetime read as a frequency `1/T_E` over the reaction window.
pub fn lifetime_measurement_precision(
    params: &MagnetometryParams,
    lifetime: f64,
) -> Result<f64, MagnetometryError> {
    params.validate()?;
    if !(lifetime > 0.0 && lifetime.is_finite()) {
        return Err(MagnetometryError::InvalidParams(format!(
            "lifetime must be positive and finite (censored points have no precision), got {lifetime}"
        )));
    }
    Ok(lifetime * lifetime / (params.snr * params.reaction_time))
}

/// Field precision through the entanglement lifetime:
/// `dB_TE = (1/(S/N)) (T_E^2/T_r) / |dT_E/dB|`, mT. Exactly the composition
/// of [`observable_field_sensitivity`] with [`lifetime_measurement_precision`].
pub fn lifetime_field_sensitivity(
    params: &MagnetometryParams,
    lifetime: f64,
    slope: f64,
) -> Result<f64, MagnetometryError> {
    let delta_te = lifetime_measurement_precision(params, lifetime)?;
    observable_field_sensitivity(delta_te, slope)
}

/// The consistency ratio `r = gamma T_E^2 / |dT_E/dB|` — the lifetime route's
/// field precision over the fundamental limit. Independent of S/N and T_r.
/// `+inf` when the slope vanishes. Values below 1 are unphysical.
pub fn sensitivity_ratio(gamma: f64, lifetime: f64, slope: f64) -> Result<f64, MagnetometryError> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(MagnetometryError::InvalidParams(format!(
            "gamma must be positive and finite, got {gamma}"
        )));
    }
    if !(lifetime > 0.0 && lifetime.is_finite()) {
        return Err(MagnetometryError::InvalidParams(format!(
            "lifetime must be positive and finite, got {lifetime}"
        )));
    }
    if !slope.is_finite() {
        return Err(MagnetometryError::InvalidParams(format!(
            "slope must be finite, got {slope}"
        )));
    }
    let magnitude = slope.abs();
    if magnitude == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(gamma * lifetime * lifetime / magnitude)
}

// ---------------------------------------------------------------------------
// Lifetime-versus-field curves
// ---------------------------------------------------------------------------

/// A per-point extraction failure, kept as text so a single bad point cannot
/// abort a long sweep.
#[derive(Clone, Debug, Error)]
#[error("{0}")]
pub struct PointFailure(pub String);

/// One sweep point: the field and the extraction outcome there.
#[derive(Clone, Debug)]
pub struct CurvePoint {
    pub field: f64,
    pub result: Result<LifetimeResult, PointFailure>,
}

impl CurvePoint {
    /// The lifetime value when the point is usable for curve analysis
    /// (extraction succeeded, not censored; dead-at-birth contributes 0).
    pub fn lifetime(&self) -> Option<f64> {
        self.result.as_ref().ok().and_then(|r| r.value())
    }
}

/// `T_E` sampled over a strictly increasing field grid, with censoring and
/// per-point failures kept in-band.
#[derive(Clone, Debug)]
pub struct LifetimeCurve {
    points: Vec<CurvePoint>,
}

impl LifetimeCurve {
    pub fn new(points: Vec<CurvePoint>) -> Result<Self, MagnetometryError> {
        validate_field_grid_values(points.iter().map(|p| p.field))?;
        Ok(LifetimeCurve { points })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[CurvePoint] {
        &self.points
    }

    pub fn fields(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.iter().map(|p| p.field)
    }

    /// Smallest spacing between consecutive grid points, mT.
    pub fn min_spacing(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| w[1].field - w[0].field)
            .fold(f64::INFINITY, f64::min)
    }
}

fn validate_field_grid_values(fields: impl Iterator<Item = f64>) -> Result<(), MagnetometryError> {
    let mut prev: Option<f64> = None;
    let mut count = 0usize;
    for b in fields {
        if !(b >= 0.0 && b.is_finite()) {
            return Err(MagnetometryError::InvalidGrid(format!(
                "field values must be non-negative and finite, got {b}"
            )));
        }
        if let Some(p) = prev {
            // b is already known finite here, so <= is a total comparison.
            if b <= p {
                return Err(MagnetometryError::InvalidGrid(format!(
                    "grid must be strictly increasing (duplicates rejected), got {p} then {b}"
                )));
            }
        }
        prev = Some(b);
        count += 1;
    }
    if count == 0 {
        return Err(MagnetometryError::InvalidGrid("empty field grid".into()));
    }
    Ok(())
}

/// Uniform field grid from `min` to `max` (mT) in steps of `step`:
/// `floor((max-min)/step) + 1` points at `min + i*step`. The division gets a
/// tiny forward nudge so that ranges meant to land exactly on `max` are not
/// truncated by representation error (e.g. 10/0.02 evaluating just below
/// 500).
pub fn field_grid(min: f64, max: f64, step: f64) -> Result<Vec<f64>, MagnetometryError> {
    if !(min >= 0.0 && min.is_finite() && max.is_finite() && max >= min) {
        return Err(MagnetometryError::InvalidGrid(format!(
            "need 0 <= min <= max, got [{min}, {max}]"
        )));
    }
    if !(step > 0.0 && step.is_finite()) {
        return Err(MagnetometryError::InvalidGrid(format!(
            "step must be positive and finite, got {step}"
        )));
    }
    let count = ((max - min) / step + 1e-9).floor() as usize + 1;
    Ok((0..count).map(|i| min + i as f64 * step).collect())
}

/// Extract `T_E` at every grid field, in parallel. Each point builds the
/// Hamiltonian at its field from the template model, propagates, and runs
/// lifetime extraction; failures are recorded per-point. Grid order is
/// preserved and every per-point computation is deterministic, so the curve
/// is bit-identical no matter how many threads run it.
pub fn sweep_lifetime_vs_field(
    template: &RadicalPairModel,
    b_grid: &[f64],
    settings: &LifetimeSettings,
) -> Result<LifetimeCurve, MagnetometryError> {
    validate_field_grid_values(b_grid.iter().copied())?;
    settings.validate()?;
    let points: Vec<CurvePoint> = b_grid
        .par_iter()
        .map(|&b| {
            let model = template.with_field(b);
            let result = model_lifetime(&model, settings).map_err(|e| PointFailure(e.to_string()));
            CurvePoint { field: b, result }
        })
        .collect();
    LifetimeCurve::new(points)
}

// ---------------------------------------------------------------------------
// Slopes, jumps, and the violation audit
// ---------------------------------------------------------------------------

/// Finite-difference slope `dT_E/dB` (ns/mT) per grid point: central
/// differences at interior points with usable neighbors on both sides,
/// one-sided differences at the grid boundary and next to censored/failed
/// points, `None` at unusable points and isolated singletons. No smoothing
/// whatsoever: where the curve jumps, the raw difference quotient is the
/// honest (and divergent) answer.
///
/// Errors unless the curve contains at least one run of [`MIN_SLOPE_RUN`]
/// consecutive usable points.
pub fn finite_difference_slope(
    curve: &LifetimeCurve,
) -> Result<Vec<Option<f64>>, MagnetometryError> {
    let pts = curve.points();
    let values: Vec<Option<f64>> = pts.iter().map(|p| p.lifetime()).collect();

    let mut longest_run = 0usize;
    let mut run = 0usize;
    for v in &values {
        run = if v.is_some() { run + 1 } else { 0 };
        longest_run = longest_run.max(run);
    }
    if longest_run < MIN_SLOPE_RUN {
        return Err(MagnetometryError::TooFewPoints {
            needed: MIN_SLOPE_RUN,
            found: longest_run,
        });
    }

    let n = pts.len();
    let slope_between = |i: usize, j: usize| -> f64 {
        (values[j].unwrap() - values[i].unwrap()) / (pts[j].field - pts[i].field)
    };
    let mut slopes = Vec::with_capacity(n);
    for i in 0..n {
        if values[i].is_none() {
            slopes.push(None);
            continue;
        }
        let left = i > 0 && values[i - 1].is_some();
        let right = i + 1 < n && values[i + 1].is_some();
        slopes.push(match (left, right) {
            (true, true) => Some(slope_between(i - 1, i + 1)),
            (false, true) => Some(slope_between(i, i + 1)),
            (true, false) => Some(slope_between(i - 1, i)),
            (false, false) => None,
        });
    }
    Ok(slopes)
}

/// A discontinuity candidate: consecutive usable grid points whose lifetimes
/// differ by more than the detection threshold.
#[derive(Clone, Copy, Debug)]
pub struct JumpEdge {
    /// Index of the left point in the curve.
    pub left_index: usize,
    pub field_lo: f64,
    pub field_hi: f64,
    pub lifetime_lo: f64,
    pub lifetime_hi: f64,
    /// Signed height `T_E(hi) - T_E(lo)`, ns.
    pub height: f64,
}

impl JumpEdge {
    /// Midpoint of the bracketing fields, mT.
    pub fn midpoint(&self) -> f64 {
        0.5 * (self.field_lo + self.field_hi)
    }
}

/// Scan consecutive usable point pairs for lifetime changes exceeding
/// `threshold` ns (strictly). Censored and failed points break pairs.
pub fn detect_jumps(curve: &LifetimeCurve, threshold: f64) -> Vec<JumpEdge> {
    let pts = curve.points();
    let mut jumps = Vec::new();
    for i in 0..pts.len().saturating_sub(1) {
        if let (Some(lo), Some(hi)) = (pts[i].lifetime(), pts[i + 1].lifetime()) {
            let height = hi - lo;
            if height.abs() > threshold {
                jumps.push(JumpEdge {
                    left_index: i,
                    field_lo: pts[i].field,
                    field_hi: pts[i + 1].field,
                    lifetime_lo: lo,
                    lifetime_hi: hi,
                    height,
                });
            }
        }
    }
    jumps
}

/// Sensitivity quantities at one grid point. `delta_b_fund` exists for every
/// point (it does not depend on the curve); the slope-derived quantities are
/// `None` at censored/failed/isolated points and `+inf` where the slope is
/// exactly zero.
#[derive(Clone, Copy, Debug)]
pub struct SensitivityRecord {
    pub field: f64,
    pub lifetime: Option<f64>,
    /// Raw finite-difference slope, ns/mT.
    pub slope: Option<f64>,
    /// Consistency ratio `r`.
    pub ratio: Option<f64>,
    /// Fundamental limit, mT.
    pub delta_b_fund: f64,
    /// Lifetime-route field precision, mT.
    pub delta_b_lifetime: Option<f64>,
}

/// A maximal run of consecutive grid points with `r < 1`.
#[derive(Clone, Copy, Debug)]
pub struct ViolationInterval {
    pub field_start: f64,
    pub field_end: f64,
    /// Number of grid points in the run.
    pub points: usize,
}

/// Output of [`bound_violation_scan`].
#[derive(Clone, Debug)]
pub struct SensitivityReport {
    pub params: MagnetometryParams,
    pub records: Vec<SensitivityRecord>,
    /// Smallest ratio over the scan and the field where it occurs (first
    /// occurrence on ties); `None` when no point yielded a ratio.
    pub min_ratio: Option<(f64, f64)>,
    /// Maximal runs where `r < 1` strictly.
    pub violations: Vec<ViolationInterval>,
    /// Smallest grid spacing, mT — the resolution at which the raw slopes
    /// were taken.
    pub grid_step: f64,
}

impl SensitivityReport {
    /// Total number of grid points violating the bound.
    pub fn violation_point_count(&self) -> usize {
        self.violations.iter().map(|v| v.points).sum()
    }
}

/// Evaluate the full sensitivity audit over a lifetime curve: per-point
/// slope, `r`, both field precisions, the minimum ratio, and every maximal
/// run of bound violations (`r < 1`, strict — the bound is an inequality,
/// not an estimate, so no tolerance band is applied).
pub fn bound_violation_scan(
    curve: &LifetimeCurve,
    params: &MagnetometryParams,
) -> Result<SensitivityReport, MagnetometryError> {
    params.validate()?;
    let slopes = finite_difference_slope(curve)?;
    let delta_b_fund = fundamental_field_limit(params);

    let mut records = Vec::with_capacity(curve.len());
    for (point, slope) in curve.points().iter().zip(&slopes) {
        let lifetime = point.lifetime();
        let (ratio, delta_b_lifetime) = match (lifetime, slope) {
            (Some(te), Some(s)) if te > 0.0 => (
                Some(sensitivity_ratio(params.gamma, te, *s)?),
                Some(lifetime_field_sensitivity(params, te, *s)?),
            ),
            _ => (None, None),
        };
        records.push(SensitivityRecord {
            field: point.field,
            lifetime,
            slope: *slope,
            ratio,
            delta_b_fund,
            delta_b_lifetime,
        });
    }

    let mut min_ratio: Option<(f64, f64)> = None;
    for rec in &records {
        if let Some(r) = rec.ratio {
            if min_ratio.is_none_or(|(_, best)| r < best) {
                min_ratio = Some((rec.field, r));
            }
        }
    }

    let mut violations = Vec::new();
    let mut run_start: Option<(f64, usize)> = None;
    let mut last_field = 0.0;
    for rec in &records {
        let violating = rec.ratio.is_some_and(|r| r < 1.0);
        if violating {
            last_field = rec.field;
            run_start = match run_start {
                Some((start, count)) => Some((start, count + 1)),
                None => Some((rec.field, 1)),
            };
        } else if let Some((start, count)) = run_start.take() {
            violations.push(ViolationInterval {
                field_start: start,
                field_end: last_field,
                points: count,
            });
        }
    }
    if let Some((start, count)) = run_start {
        violations.push(ViolationInterval {
            field_start: start,
            field_end: last_field,
            points: count,
        });
    }

    Ok(SensitivityReport {
        params: *params,
        records,
        min_ratio,
        violations,
        grid_step: curve.min_spacing(),
    })
}

// ---------------------------------------------------------------------------
// Two-pass sweep (coarse + automatic zoom)
// ---------------------------------------------------------------------------

/// The zoom pass: a fine re-sweep centered on the steepest stretch of the
/// coarse curve.
#[derive(Clone, Debug)]
pub struct ZoomPass {
    /// Coarse-grid field with the largest |slope|, mT.
    pub center: f64,
    /// Window actually swept (clamped to the coarse domain), mT.
    pub window: (f64, f64),
    pub step: f64,
    pub curve: LifetimeCurve,
}

/// Coarse sweep plus optional zoom.
#[derive(Clone, Debug)]
pub struct TwoPassSweep {
    pub coarse: LifetimeCurve,
    pub zoom: Option<ZoomPass>,
}

/// Field of the largest finite |slope| on a curve (first occurrence on
/// ties); `None` when no slopes are available at all.
pub fn steepest_field(
    curve: &LifetimeCurve,
    slopes: &[Option<f64>],
) -> Option<f64> {
    let mut best: Option<(f64, f64)> = None;
    for (point, slope) in curve.points().iter().zip(slopes) {
        if let Some(s) = *slope {
            let mag = s.abs();
            if mag.is_finite() && best.is_none_or(|(_, b)| mag > b) {
                best = Some((point.field, mag));
            }
        }
    }
    best.map(|(field, _)| field)
}

/// Run the coarse sweep over `[min, max]` with `step`, and when `zoom` is
/// requested re-sweep ±[`DEFAULT_ZOOM_HALF_WIDTH`] around the steepest coarse
/// point at [`DEFAULT_ZOOM_STEP`] resolution (window clamped to the coarse
/// domain). The zoom is skipped — not an error — when the coarse curve has
/// too few usable points to define a steepest stretch.
pub fn two_pass_sweep(
    template: &RadicalPairModel,
    min: f64,
    max: f64,
    step: f64,
    zoom: bool,
    settings: &LifetimeSettings,
) -> Result<TwoPassSweep, MagnetometryError> {
    let grid = field_grid(min, max, step)?;
    let coarse = sweep_lifetime_vs_field(template, &grid, settings)?;
    let mut zoom_pass = None;
    if zoom {
        if let Ok(slopes) = finite_difference_slope(&coarse) {
            if let Some(center) = steepest_field(&coarse, &slopes) {
                let lo = (center - DEFAULT_ZOOM_HALF_WIDTH).max(min);
                let hi = (center + DEFAULT_ZOOM_HALF_WIDTH).min(max);
                let zoom_grid = field_grid(lo, hi, DEFAULT_ZOOM_STEP)?;
                let curve = sweep_lifetime_vs_field(template, &zoom_grid, settings)?;
                zoom_pass = Some(ZoomPass {
                    center,
                    window: (lo, hi),
                    step: DEFAULT_ZOOM_STEP,
                    curve,
                });
            }
        }
    }
    Ok(TwoPassSweep {
        coarse,
        zoom: zoom_pass,
    })
}
