//! Two-qubit entanglement: Wootters concurrence, electron-pair concurrence
//! along radical-pair trajectories, and entanglement-lifetime extraction.
//!
//! The lifetime `T_E` is the *first* time the electron-pair concurrence falls
//! to (or below) a small threshold — entanglement sudden death. Concurrence
//! can revive afterwards; the first-death convention is what makes `T_E(B)`
//! jump discontinuously when a zero-dip of `C(t)` slips in or out of
//! detectability, and a separate [`DeathMode::PermanentDeath`] variant is
//! provided for the alternative reading.
//!
//! Extraction is a two-stage search: walk a uniform scan grid until the first
//! sample at or below the threshold, then bisect the bracketing interval down
//! to a fixed refinement width, re-evaluating the concurrence by exact (or
//! RK4) propagation at every probe. The final accuracy is set by the
//! refinement width, not the scan grid — but whether a short-lived death
//! window is seen at all is set by the scan grid, which is why the scan step
//! is part of [`LifetimeSettings`] and recorded alongside results.

use crate::dynamics::{
    DynamicsError, HaberkornPropagator, RadicalPairModel, SpectralPropagator, Trajectory,
};
use crate::spin::{
    eigh, kron, partial_trace_raw, pauli, sqrt_psd, trace, CMat, DensityMatrix, SpinAxis,
    SpinError, SystemLayout,
};
use thiserror::Error;

/// Default concurrence death threshold (absolute). Concurrence hits exactly
/// zero analytically; a tiny positive threshold keeps bisection well-posed
/// against floating-point noise.
pub const DEFAULT_DEATH_THRESHOLD: f64 = 1e-6;
/// Default scan horizon, ns.
pub const DEFAULT_HORIZON: f64 = 2000.0;
/// Default scan grid step, ns. Fine enough to resolve every oscillation of
/// the dynamics treated here (periods are 25 ns and up), and deliberately not
/// an exact divisor of those periods, so a periodic comb of zero-dips cannot
/// lock onto the grid and be sampled at the exact same phase forever.
pub const DEFAULT_SCAN_DT: f64 = 0.3;
/// Default bisection refinement width, ns.
pub const DEFAULT_REFINE_WIDTH: f64 = 1e-3;
/// Reduced states with trace below this are considered fully reacted.
pub const TRACE_FLOOR: f64 = 1e-12;

/// Errors from concurrence evaluation and lifetime extraction.
#[derive(Debug, Error)]
pub enum EntanglementError {
    #[error(transparent)]
    Spin(#[from] SpinError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error("concurrence is defined for two qubits (dimension 4), got dimension {0}")]
    WrongDimension(usize),
    #[error("state trace {0} deviates from 1 by more than 1e-6; renormalize first")]
    TraceNotUnit(f64),
    #[error("invalid lifetime settings: {0}")]
    InvalidSettings(String),
}

// ---------------------------------------------------------------------------
// Concurrence
// ---------------------------------------------------------------------------

/// Wootters concurrence of a two-qubit density matrix with unit trace:
/// `C = max(0, l1 - l2 - l3 - l4)` where `l_i` are the decreasingly ordered
/// square roots of the eigenvalues of `rho * (sy ⊗ sy) rho* (sy ⊗ sy)`
/// (conjugation in the computational product basis). 0 for separable states,
/// 1 for Bell states.
pub fn concurrence(rho: &DensityMatrix) -> Result<f64, EntanglementError> {
    if rho.dim() != 4 {
        return Err(EntanglementError::WrongDimension(rho.dim()));
    }
    let tr = rho.trace();
    if (tr - 1.0).abs() > 1e-6 {
        return Err(EntanglementError::TraceNotUnit(tr));
    }
    concurrence_raw(rho.matrix())
}

/// Concurrence on a raw 4x4 matrix assumed Hermitian/positive within
/// round-off. Uses the Hermitian route: with `R = sqrt(rho)`, the spectrum of
/// `rho * rho_tilde` equals that of the Hermitian PSD matrix
/// `R * rho_tilde * R`, so one symmetric eigensolver serves throughout.
pub(crate) fn concurrence_raw(rho: &CMat) -> Result<f64, EntanglementError> {
    let yy = kron(&pauli(SpinAxis::Y), &pauli(SpinAxis::Y));
    let flipped = yy.dot(&rho.mapv(|v| v.conj())).dot(&yy);
    let root = sqrt_psd(rho)?;
    let m = root.dot(&flipped).dot(&root);
    let (w, _) = eigh(&m)?;
    // Square roots of the eigenvalues, descending.
    let lam: Vec<f64> = w.iter().rev().map(|&x| x.max(0.0).sqrt()).collect();
    let c = lam[0] - lam[1] - lam[2] - lam[3];
    Ok(c.clamp(0.0, 1.0))
}

// ---------------------------------------------------------------------------
// Concurrence along a trajectory
// ---------------------------------------------------------------------------

/// Electron-pair concurrence sampled over time.
#[derive(Clone, Debug)]
pub struct ConcurrenceSeries {
    pub times: Vec<f64>,
    /// Concurrence values, clamped to [0, 1].
    pub values: Vec<f64>,
    /// Whether states were trace-normalized (conditional state of surviving
    /// pairs) before reduction.
    pub normalized: bool,
    /// Set when the series stops early because the trace fell below
    /// [`TRACE_FLOOR`] (all pairs reacted): the first truncated time.
    pub truncated_at: Option<f64>,
}

/// Concurrence of the two-electron reduced state at every trajectory sample.
///
/// With `normalize` set, each state is divided by its trace first — the
/// conditional state of pairs that have not yet reacted. This is mandatory
/// when recombination drains the trace; without recombination the trace stays
/// 1 and the flag is a no-op. A trace below [`TRACE_FLOOR`] truncates the
/// series at that point rather than erroring.
pub fn electron_concurrence_trajectory(
    traj: &Trajectory,
    layout: &SystemLayout,
    normalize: bool,
) -> Result<ConcurrenceSeries, EntanglementError> {
    layout.require_radical_pair()?;
    let n = layout.num_particles();
    let mut times = Vec::with_capacity(traj.len());
    let mut values = Vec::with_capacity(traj.len());
    let mut truncated_at = None;
    for (&t, state) in traj.times().iter().zip(traj.states()) {
        let tr = state.trace();
        if tr < TRACE_FLOOR {
            truncated_at = Some(t);
            break;
        }
        let reduced = if normalize {
            partial_trace_raw(&state.matrix().mapv(|v| v.scale(1.0 / tr)), &[0, 1], n)
        } else {
            let tr_err = (tr - 1.0).abs();
            if tr_err > 1e-6 {
                return Err(EntanglementError::TraceNotUnit(tr));
            }
            partial_trace_raw(state.matrix(), &[0, 1], n)
        };
        times.push(t);
        values.push(concurrence_raw(&reduced)?);
    }
    Ok(ConcurrenceSeries {
        times,
        values,
        normalized: normalize,
        truncated_at,
    })
}

// ---------------------------------------------------------------------------
// Concurrence sources (time -> C(t) evaluators)
// ---------------------------------------------------------------------------

/// Anything that can produce the electron-pair concurrence at an arbitrary
/// time. Lifetime extraction drives a source with a monotone scan followed by
/// out-of-order bisection probes, so implementations must answer arbitrary
/// `t >= 0` (they may cache internally; see [`HaberkornSource`]).
pub trait ConcurrenceSource {
    fn concurrence_at(&mut self, t: f64) -> Result<f64, EntanglementError>;
}

/// Source backed by a plain function of time — analytic toys and tests.
pub struct FunctionSource<F: FnMut(f64) -> f64>(pub F);

impl<F: FnMut(f64) -> f64> ConcurrenceSource for FunctionSource<F> {
    fn concurrence_at(&mut self, t: f64) -> Result<f64, EntanglementError> {
        Ok((self.0)(t))
    }
}

fn reduced_concurrence(
    state: &CMat,
    n_slots: usize,
    normalize: bool,
) -> Result<f64, EntanglementError> {
    let tr = trace(state).re;
    if normalize {
        if tr < TRACE_FLOOR {
            return Err(EntanglementError::Spin(SpinError::VanishingTrace {
                trace: tr,
            }));
        }
        let reduced = partial_trace_raw(&state.mapv(|v| v.scale(1.0 / tr)), &[0, 1], n_slots);
        concurrence_raw(&reduced)
    } else {
        if (tr - 1.0).abs() > 1e-6 {
            return Err(EntanglementError::TraceNotUnit(tr));
        }
        concurrence_raw(&partial_trace_raw(state, &[0, 1], n_slots))
    }
}

/// Exact concurrence source for closed evolution: spectral propagation per
/// query, no state between calls, any query order.
pub struct UnitarySource {
    propagator: SpectralPropagator,
    n_slots: usize,
    normalize: bool,
}

impl UnitarySource {
    /// Build from a non-reacting model (`k_S = k_T = 0`).
    pub fn for_model(model: &RadicalPairModel, normalize: bool) -> Result<Self, EntanglementError> {
        if model.k_singlet > 0.0 || model.k_triplet > 0.0 {
            return Err(EntanglementError::InvalidSettings(
                "unitary source requires k_singlet = k_triplet = 0; use HaberkornSource".into(),
            ));
        }
        let h = model.hamiltonian()?;
        let rho0 = model.initial_state()?;
        Ok(UnitarySource {
            propagator: SpectralPropagator::new(&h, &rho0)?,
            n_slots: model.layout.num_particles(),
            normalize,
        })
    }
}

impl ConcurrenceSource for UnitarySource {
    fn concurrence_at(&mut self, t: f64) -> Result<f64, EntanglementError> {
        reduced_concurrence(&self.propagator.state_matrix_at(t), self.n_slots, self.normalize)
    }
}

/// Concurrence source under recombination kinetics, built around the RK4
/// integrator.
///
/// The extraction pattern is a monotone scan with occasional backwards probes
/// (bisection inside the most recent scan interval). The source therefore
/// keeps two states: the `cursor` at the furthest time reached, and an
/// `anchor` at the scan point just before it. Monotone queries advance the
/// cursor (moving the anchor up behind it); a query between anchor and cursor
/// integrates a fresh copy forward from the anchor, leaving both untouched.
/// Queries before the anchor restart from t = 0. All three paths are
/// deterministic, so extraction results do not depend on query history.
pub struct HaberkornSource {
    propagator: HaberkornPropagator,
    n_slots: usize,
    normalize: bool,
    rho0: CMat,
    anchor_t: f64,
    anchor: CMat,
    cursor_t: f64,
    cursor: CMat,
}

impl HaberkornSource {
    pub fn for_model(model: &RadicalPairModel, normalize: bool) -> Result<Self, EntanglementError> {
        if (model.k_singlet > 0.0 || model.k_triplet > 0.0) && !normalize {
            return Err(EntanglementError::InvalidSettings(
                "recombination drains the trace; concurrence must be taken on the \
                 trace-normalized (conditional) state"
                    .into(),
            ));
        }
        let propagator = HaberkornPropagator::for_model(model)?;
        let rho0 = model.initial_state()?.into_matrix();
        Ok(HaberkornSource {
            propagator,
            n_slots: model.layout.num_particles(),
            normalize,
            anchor_t: 0.0,
            anchor: rho0.clone(),
            cursor_t: 0.0,
            cursor: rho0.clone(),
            rho0,
        })
    }

    /// Override the integrator step cap (convergence checks).
    pub fn with_max_step(mut self, max_step: f64) -> Result<Self, EntanglementError> {
        self.propagator = self.propagator.with_max_step(max_step)?;
        Ok(self)
    }
}

impl ConcurrenceSource for HaberkornSource {
    fn concurrence_at(&mut self, t: f64) -> Result<f64, EntanglementError> {
        if t >= self.cursor_t {
            if t > self.cursor_t {
                self.anchor_t = self.cursor_t;
                std::mem::swap(&mut self.anchor, &mut self.cursor);
                self.cursor = self.propagator.advance(&self.anchor, t - self.anchor_t)?;
                self.cursor_t = t;
            }
            let state = self.cursor.clone();
            reduced_concurrence(&state, self.n_slots, self.normalize)
        } else if t >= self.anchor_t {
            let state = self.propagator.advance(&self.anchor, t - self.anchor_t)?;
            reduced_concurrence(&state, self.n_slots, self.normalize)
        } else {
            let state = self.propagator.advance(&self.rho0, t)?;
            reduced_concurrence(&state, self.n_slots, self.normalize)
        }
    }
}

/// Pick the right source for a model: exact spectral propagation when there
/// is no recombination, RK4 otherwise. States are trace-normalized before
/// reduction either way (a no-op in the closed case).
pub fn source_for_model(
    model: &RadicalPairModel,
) -> Result<Box<dyn ConcurrenceSource + Send>, EntanglementError> {
    if model.k_singlet > 0.0 || model.k_triplet > 0.0 {
        Ok(Box::new(HaberkornSource::for_model(model, true)?))
    } else {
        Ok(Box::new(UnitarySource::for_model(model, true)?))
    }
}

// ---------------------------------------------------------------------------
// Lifetime extraction
// ---------------------------------------------------------------------------

/// Which death ends the lifetime clock.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DeathMode {
    /// First crossing below the threshold (default; concurrence may revive
    /// later).
    FirstDeath,
    /// Last crossing after which the concurrence stays below the threshold
    /// for the remainder of the horizon.
    PermanentDeath,
}

/// How the extraction ended.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DeathKind {
    /// `C(0)` was already at or below the threshold; lifetime 0, flagged.
    DeadAtBirth,
    /// A death was located and refined.
    Death,
    /// No death within the horizon.
    Censored,
}

/// Outcome of a lifetime extraction.
#[derive(Clone, Copy, Debug)]
pub struct LifetimeResult {
    /// Refined lifetime, ns; `None` when censored.
    pub lifetime: Option<f64>,
    pub kind: DeathKind,
    /// Scan horizon in force, ns.
    pub horizon: f64,
    /// Width of the final bisection bracket, ns (0 when not refined).
    pub refinement_width: f64,
}

impl LifetimeResult {
    pub fn is_censored(&self) -> bool {
        matches!(self.kind, DeathKind::Censored)
    }

    /// Lifetime value for non-censored results.
    pub fn value(&self) -> Option<f64> {
        self.lifetime
    }
}

/// Knobs for lifetime extraction.
#[derive(Clone, Copy, Debug)]
pub struct LifetimeSettings {
    /// Death threshold on the concurrence (absolute).
    pub threshold: f64,
    /// Scan horizon, ns.
    pub horizon: f64,
    /// Scan grid step, ns.
    pub scan_dt: f64,
    /// Bisection target width, ns.
    pub refine_width: f64,
    pub death_mode: DeathMode,
}

impl Default for LifetimeSettings {
    fn default() -> Self {
        LifetimeSettings {
            threshold: DEFAULT_DEATH_THRESHOLD,
            horizon: DEFAULT_HORIZON,
            scan_dt: DEFAULT_SCAN_DT,
            refine_width: DEFAULT_REFINE_WIDTH,
            death_mode: DeathMode::FirstDeath,
        }
    }
}

impl LifetimeSettings {
    pub fn validate(&self) -> Result<(), EntanglementError> {
        if !(self.threshold >= 0.0 && self.threshold.is_finite()) {
            return Err(EntanglementError::InvalidSettings(format!(
                "threshold must be non-negative and finite, got {}",
                self.threshold
            )));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(EntanglementError::InvalidSettings(format!(
                "horizon must be positive and finite, got {}",
                self.horizon
            )));
        }
        if !(self.scan_dt > 0.0 && self.scan_dt <= self.horizon) {
            return Err(EntanglementError::InvalidSettings(format!(
                "scan step must lie in (0, horizon], got {}",
                self.scan_dt
            )));
        }
        if !(self.refine_width > 0.0 && self.refine_width.is_finite()) {
            return Err(EntanglementError::InvalidSettings(format!(
                "refinement width must be positive and finite, got {}",
                self.refine_width
            )));
        }
        Ok(())
    }

    /// The scan grid: `k * scan_dt` for `k = 0..` up to the horizon, with the
    /// horizon itself appended when the last step falls short of it.
    pub fn scan_times(&self) -> impl Iterator<Item = f64> + '_ {
        let n = (self.horizon / self.scan_dt + 1e-9).floor() as u64;
        let last = n as f64 * self.scan_dt;
        let extra = if last < self.horizon - 1e-12 {
            Some(self.horizon)
        } else {
            None
        };
        (0..=n).map(move |k| k as f64 * self.scan_dt).chain(extra)
    }
}

/// Locate the entanglement lifetime: scan the grid for the first sample at or
/// below the threshold, then bisect the bracketing interval to the refinement
/// width. The reported lifetime is the final bracket midpoint. Dead-at-birth
/// and censored cases are flagged in [`LifetimeResult::kind`].
pub fn extract_lifetime<S: ConcurrenceSource + ?Sized>(
    source: &mut S,
    settings: &LifetimeSettings,
) -> Result<LifetimeResult, EntanglementError> {
    settings.validate()?;
    let eps = settings.threshold;

    let mut prev_t: Option<f64> = None;
    // For permanent-death mode: the alive->dead bracket most recently seen,
    // discarded whenever a revival follows it.
    let mut open_bracket: Option<(f64, f64)> = None;

    for t in settings.scan_times() {
        let c = source.concurrence_at(t)?;
        let dead = c <= eps;
        match (settings.death_mode, dead, prev_t) {
            (_, true, None) => {
                // C(0) <= eps: entanglement dead at birth.
                return Ok(LifetimeResult {
                    lifetime: Some(0.0),
                    kind: DeathKind::DeadAtBirth,
                    horizon: settings.horizon,
                    refinement_width: 0.0,
                });
            }
            (DeathMode::FirstDeath, true, Some(lo)) => {
                return refine_bracket(source, lo, t, eps, settings);
            }
            (DeathMode::PermanentDeath, true, Some(lo)) => {
                if open_bracket.is_none() {
                    open_bracket = Some((lo, t));
                }
            }
            (DeathMode::PermanentDeath, false, _) => {
                open_bracket = None;
            }
            (DeathMode::FirstDeath, false, _) => {}
        }
        if !dead {
            prev_t = Some(t);
        } else if settings.death_mode == DeathMode::PermanentDeath {
            // Keep prev_t at the last *alive* time; the bracket is pinned.
        }
    }

    if let Some((lo, hi)) = open_bracket {
        return refine_bracket(source, lo, hi, eps, settings);
    }
    Ok(LifetimeResult {
        lifetime: None,
        kind: DeathKind::Censored,
        horizon: settings.horizon,
        refinement_width: 0.0,
    })
}

fn refine_bracket<S: ConcurrenceSource + ?Sized>(
    source: &mut S,
    mut lo: f64,
    mut hi: f64,
    eps: f64,
    settings: &LifetimeSettings,
) -> Result<LifetimeResult, EntanglementError> {
    while hi - lo > settings.refine_width {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break; // interval at floating-point resolution
        }
        if source.concurrence_at(mid)? <= eps {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(LifetimeResult {
        lifetime: Some(0.5 * (lo + hi)),
        kind: DeathKind::Death,
        horizon: settings.horizon,
        refinement_width: hi - lo,
    })
}

/// Convenience wrapper: build the appropriate source for `model` and extract
/// the lifetime in one call.
pub fn model_lifetime(
    model: &RadicalPairModel,
    settings: &LifetimeSettings,
) -> Result<LifetimeResult, EntanglementError> {
    let mut source = source_for_model(model)?;
    extract_lifetime(source.as_mut(), settings)
}
