//! Radical-pair model, Hamiltonian construction, and density-matrix
//! propagation.
//!
//! The model is two electron spins and `N` spin-1/2 nuclei with
//!
//! `H = gamma * B * (S_1z + S_2z) + sum_k A_k * (S_x I_x + S_y I_y + S_z I_z)`
//!
//! in angular units of rad/ns (hbar = 1), fields in mT, times in ns. Nuclear
//! Zeeman terms are omitted: nuclear gyromagnetic ratios are three orders of
//! magnitude below the electron's and contribute nothing at the mT fields and
//! ns times treated here.
//!
//! Two propagators are provided. For closed (non-reacting) evolution the
//! [`SpectralPropagator`] diagonalizes `H` once and evaluates
//! `rho(t) = e^{-iHt} rho0 e^{+iHt}` exactly per requested time — no step
//! error at all. With spin-selective recombination the master equation gains
//! the Haberkorn sink `-(k_S/2){Q_S, rho} - (k_T/2){Q_T, rho}` and is
//! integrated by fixed-step classical RK4 with a deterministic step policy,
//! so results are bit-identical across runs and thread counts.

use crate::spin::{
    self, anticommutator, commutator, eigh, frobenius_norm, identity, kron, singlet_projector,
    spin_half, trace, triplet_projector, CMat, DensityMatrix, OperatorMatrix, ParticleKind,
    PureState, SpinAxis, SpinError, SystemLayout, C64,
};
use thiserror::Error;

/// Electron gyromagnetic ratio in rad ns^-1 mT^-1 (equivalently 28 MHz/mT).
pub const DEFAULT_GAMMA: f64 = 0.176;

/// RK4 step cap as a fraction of the inverse Hamiltonian norm: the per-step
/// phase advance `h * ||H||_F` stays at or below this value.
const STEP_PHASE_BUDGET: f64 = 0.02;
/// RK4 step cap relative to the fastest recombination rate.
const STEP_RATE_BUDGET: f64 = 0.1;
/// Below this step size the integration is declared infeasible rather than
/// ground through silently.
const STEP_UNDERFLOW: f64 = 1e-9;

/// Errors from model validation and propagation.
#[derive(Debug, Error)]
pub enum DynamicsError {
    #[error(transparent)]
    Spin(#[from] SpinError),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("invalid time grid: {0}")]
    InvalidGrid(String),
    #[error("integration step {step:.3e} ns underflowed the minimum {minimum:.0e} ns")]
    StepUnderflow { step: f64, minimum: f64 },
}

/// Isotropic hyperfine coupling between one electron and one nucleus.
#[derive(Clone, Debug, PartialEq)]
pub struct HyperfineCoupling {
    pub electron_slot: usize,
    pub nucleus_slot: usize,
    /// Angular coupling constant in rad/ns.
    pub coupling: f64,
}

impl HyperfineCoupling {
    pub fn new(electron_slot: usize, nucleus_slot: usize, coupling: f64) -> Self {
        HyperfineCoupling {
            electron_slot,
            nucleus_slot,
            coupling,
        }
    }
}

/// Physical parameters of a radical pair in a static field along z.
#[derive(Clone, Debug)]
pub struct RadicalPairModel {
    pub layout: SystemLayout,
    /// Electron gyromagnetic ratio, rad ns^-1 mT^-1.
    pub gamma: f64,
    /// Static magnetic field, mT.
    pub field: f64,
    pub hyperfine: Vec<HyperfineCoupling>,
    /// Singlet recombination rate, ns^-1.
    pub k_singlet: f64,
    /// Triplet recombination rate, ns^-1.
    pub k_triplet: f64,
}

impl RadicalPairModel {
    /// The workhorse configuration: two electrons, one nucleus coupled to
    /// electron 1 with angular strength `coupling` (rad/ns), electron 2 bare.
    pub fn single_nucleus(
        gamma: f64,
        field: f64,
        coupling: f64,
        k_singlet: f64,
        k_triplet: f64,
    ) -> Result<Self, DynamicsError> {
        let model = RadicalPairModel {
            layout: SystemLayout::radical_pair(1)?,
            gamma,
            field,
            hyperfine: vec![HyperfineCoupling::new(0, 2, coupling)],
            k_singlet,
            k_triplet,
        };
        model.validate()?;
        Ok(model)
    }

    /// Copy of the model at a different field value.
    pub fn with_field(&self, field: f64) -> Self {
        let mut copy = self.clone();
        copy.field = field;
        copy
    }

    /// Verify parameter ranges and that every hyperfine entry references an
    /// actual electron/nucleus pair.
    pub fn validate(&self) -> Result<(), DynamicsError> {
        self.layout.require_radical_pair()?;
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(DynamicsError::InvalidModel(format!(
                "gamma must be positive and finite, got {}",
                self.gamma
            )));
        }
        if !(self.field >= 0.0 && self.field.is_finite()) {
            return Err(DynamicsError::InvalidModel(format!(
                "field must be non-negative and finite, got {}",
                self.field
            )));
        }
        for (name, k) in [("k_singlet", self.k_singlet), ("k_triplet", self.k_triplet)] {
            if !(k >= 0.0 && k.is_finite()) {
                return Err(DynamicsError::InvalidModel(format!(
                    "{name} must be non-negative and finite, got {k}"
                )));
            }
        }
        let particles = self.layout.particles();
        for hf in &self.hyperfine {
            let ok_e = particles
                .get(hf.electron_slot)
                .is_some_and(|p| p.kind == ParticleKind::Electron);
            let ok_n = particles
                .get(hf.nucleus_slot)
                .is_some_and(|p| p.kind == ParticleKind::Nucleus);
            if !ok_e || !ok_n {
                return Err(DynamicsError::InvalidModel(format!(
                    "hyperfine entry ({}, {}) does not reference an electron and a nucleus",
                    hf.electron_slot, hf.nucleus_slot
                )));
            }
            if !hf.coupling.is_finite() {
                return Err(DynamicsError::InvalidModel(format!(
                    "hyperfine coupling must be finite, got {}",
                    hf.coupling
                )));
            }
        }
        Ok(())
    }

    /// Zeeman plus isotropic hyperfine Hamiltonian, rad/ns.
    pub fn hamiltonian(&self) -> Result<OperatorMatrix, DynamicsError> {
        self.validate()?;
        let layout = &self.layout;
        let dim = layout.dim();
        let mut h: CMat = CMat::zeros((dim, dim));

        let zeeman = self.gamma * self.field;
        if zeeman != 0.0 {
            for slot in layout.electron_slots() {
                let sz = spin::embed_operator(&spin_half(SpinAxis::Z), slot, layout)?;
                h = h + sz.mapv(|v| v.scale(zeeman));
            }
        }
        for hf in &self.hyperfine {
            if hf.coupling == 0.0 {
                continue;
            }
            for axis in [SpinAxis::X, SpinAxis::Y, SpinAxis::Z] {
                let se = spin::embed_operator(&spin_half(axis), hf.electron_slot, layout)?;
                let in_ = spin::embed_operator(&spin_half(axis), hf.nucleus_slot, layout)?;
                h = h + se.dot(&in_).mapv(|v| v.scale(hf.coupling));
            }
        }
        Ok(OperatorMatrix::new_hermitian(h)?)
    }

    /// The singlet-born radical-pair state for this model's layout.
    pub fn initial_state(&self) -> Result<DensityMatrix, DynamicsError> {
        initial_radical_pair_state(&self.layout)
    }
}

/// The standard radical-pair birth state: electrons in the singlet, nuclei
/// maximally mixed — `|S><S| ⊗ I / 2^N`. Trace 1.
pub fn initial_radical_pair_state(layout: &SystemLayout) -> Result<DensityMatrix, DynamicsError> {
    layout.require_radical_pair()?;
    let singlet = PureState::singlet().to_density();
    let nuclear_dim = layout.dim() / 4;
    if nuclear_dim == 1 {
        return Ok(singlet);
    }
    let nuclear_mix = identity(nuclear_dim).mapv(|v| v.scale(1.0 / nuclear_dim as f64));
    Ok(DensityMatrix::with_basic_checks(kron(
        singlet.matrix(),
        &nuclear_mix,
    ))?)
}

/// A time-sampled density-matrix trajectory. Times are strictly increasing,
/// start at 0, and `states[0]` is the supplied initial state.
#[derive(Clone, Debug)]
pub struct Trajectory {
    times: Vec<f64>,
    states: Vec<DensityMatrix>,
}

impl Trajectory {
    pub fn new(times: Vec<f64>, states: Vec<DensityMatrix>) -> Result<Self, DynamicsError> {
        validate_time_grid(&times)?;
        if times.len() != states.len() {
            return Err(DynamicsError::InvalidGrid(format!(
                "{} times vs {} states",
                times.len(),
                states.len()
            )));
        }
        Ok(Trajectory { times, states })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn states(&self) -> &[DensityMatrix] {
        &self.states
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Require a sampling grid that starts at 0 and increases strictly.
pub fn validate_time_grid(times: &[f64]) -> Result<(), DynamicsError> {
    if times.is_empty() {
        return Err(DynamicsError::InvalidGrid("empty time grid".into()));
    }
    if times[0] != 0.0 {
        return Err(DynamicsError::InvalidGrid(format!(
            "grid must start at 0, got {}",
            times[0]
        )));
    }
    for pair in times.windows(2) {
        if !pair[1].is_finite() || pair[1] <= pair[0] {
            return Err(DynamicsError::InvalidGrid(format!(
                "grid not strictly increasing at {} -> {}",
                pair[0], pair[1]
            )));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Exact unitary propagation by spectral decomposition
// ---------------------------------------------------------------------------

/// Exact propagator for closed evolution: diagonalize `H` once, then evaluate
/// `rho(t) = V e^{-i w t} (V† rho0 V) e^{+i w t} V†` at any `t` with no
/// accumulation of step error.
pub struct SpectralPropagator {
    eigvals: Vec<f64>,
    vecs: CMat,
    vecs_dag: CMat,
    rho0_eig: CMat,
}

impl SpectralPropagator {
    pub fn new(h: &OperatorMatrix, rho0: &DensityMatrix) -> Result<Self, DynamicsError> {
        if !h.is_hermitian() {
            return Err(DynamicsError::InvalidModel(
                "unitary propagation needs a Hermitian Hamiltonian".into(),
            ));
        }
        if h.dim() != rho0.dim() {
            return Err(DynamicsError::InvalidModel(format!(
                "Hamiltonian dimension {} vs state dimension {}",
                h.dim(),
                rho0.dim()
            )));
        }
        let (eigvals, vecs) = eigh(h.matrix())?;
        let vecs_dag = spin::adjoint(&vecs);
        let rho0_eig = vecs_dag.dot(rho0.matrix()).dot(&vecs);
        Ok(SpectralPropagator {
            eigvals,
            vecs,
            vecs_dag,
            rho0_eig,
        })
    }

    /// Raw state matrix at time `t` (ns).
    pub fn state_matrix_at(&self, t: f64) -> CMat {
        let n = self.eigvals.len();
        let mut in_eig: CMat = CMat::zeros((n, n));
        for j in 0..n {
            for k in 0..n {
                // e^{-i (w_j - w_k) t} phase on the eigenbasis entry.
                let angle = -(self.eigvals[j] - self.eigvals[k]) * t;
                in_eig[[j, k]] = self.rho0_eig[[j, k]] * C64::from_polar(1.0, angle);
            }
        }
        self.vecs.dot(&in_eig).dot(&self.vecs_dag)
    }

    /// Validated state at time `t`.
    pub fn state_at(&self, t: f64) -> Result<DensityMatrix, DynamicsError> {
        Ok(DensityMatrix::with_basic_checks(self.state_matrix_at(t))?)
    }
}

/// Closed-system trajectory `rho(t) = e^{-iHt} rho0 e^{+iHt}`, exact per time
/// point (spectral decomposition, no step error). Trace and purity are
/// preserved to round-off.
pub fn evolve_unitary(
    h: &OperatorMatrix,
    rho0: &DensityMatrix,
    times: &[f64],
) -> Result<Trajectory, DynamicsError> {
    validate_time_grid(times)?;
    let prop = SpectralPropagator::new(h, rho0)?;
    let mut states = Vec::with_capacity(times.len());
    states.push(rho0.clone());
    for &t in &times[1..] {
        states.push(prop.state_at(t)?);
    }
    Trajectory::new(times.to_vec(), states)
}

// ---------------------------------------------------------------------------
// Haberkorn recombination kinetics
// ---------------------------------------------------------------------------

/// Spin-selective recombination kinetics: a function mapping the current
/// state to the reaction (sink) term of the master equation. Implementations
/// other than the shipped Haberkorn form can be plugged into
/// [`MasterEquation`] through this seam.
pub trait ReactionKinetics {
    /// The kinetic contribution `drho/dt |_reaction` at state `rho`.
    fn sink(&self, rho: &CMat) -> CMat;
    /// Fastest rate in the kinetics, used by the step-size policy (ns^-1).
    fn max_rate(&self) -> f64;
}

/// The conventional Haberkorn sink
/// `-(k_S/2) {Q_S, rho} - (k_T/2) {Q_T, rho}`: singlet and triplet pairs
/// drain at their own rates, and the lost trace counts reacted pairs.
pub struct HaberkornKinetics {
    q_singlet: CMat,
    q_triplet: CMat,
    k_singlet: f64,
    k_triplet: f64,
}

impl HaberkornKinetics {
    pub fn new(model: &RadicalPairModel) -> Result<Self, DynamicsError> {
        model.validate()?;
        Ok(HaberkornKinetics {
            q_singlet: singlet_projector(&model.layout)?.into_matrix(),
            q_triplet: triplet_projector(&model.layout)?.into_matrix(),
            k_singlet: model.k_singlet,
            k_triplet: model.k_triplet,
        })
    }
}

impl ReactionKinetics for HaberkornKinetics {
    fn sink(&self, rho: &CMat) -> CMat {
        let dim = rho.nrows();
        let mut out: CMat = CMat::zeros((dim, dim));
        if self.k_singlet > 0.0 {
            out = out - anticommutator(&self.q_singlet, rho).mapv(|v| v.scale(self.k_singlet / 2.0));
        }
        if self.k_triplet > 0.0 {
            out = out - anticommutator(&self.q_triplet, rho).mapv(|v| v.scale(self.k_triplet / 2.0));
        }
        out
    }

    fn max_rate(&self) -> f64 {
        self.k_singlet.max(self.k_triplet)
    }
}

/// Master-equation integrator: `drho/dt = -i[H, rho] + sink(rho)`, classical
/// fixed-step RK4.
///
/// The step cap is `min(0.02 / ||H||_F, 0.1 / max_rate)`; each [`advance`]
/// call then subdivides its interval into equal substeps no larger than the
/// cap, landing on the target time exactly. The policy, the fixed sweep
/// order, and the absence of threading make every trajectory bit-identical
/// across runs.
///
/// [`advance`]: MasterEquation::advance
pub struct MasterEquation<K: ReactionKinetics> {
    hamiltonian: CMat,
    kinetics: K,
    max_step: f64,
}

/// Haberkorn-kinetics master equation, the form used everywhere in this
/// crate.
pub type HaberkornPropagator = MasterEquation<HaberkornKinetics>;

impl HaberkornPropagator {
    /// Build the standard Haberkorn integrator for a model.
    pub fn for_model(model: &RadicalPairModel) -> Result<Self, DynamicsError> {
        let h = model.hamiltonian()?.into_matrix();
        let kinetics = HaberkornKinetics::new(model)?;
        MasterEquation::new(h, kinetics)
    }
}

impl<K: ReactionKinetics> MasterEquation<K> {
    pub fn new(hamiltonian: CMat, kinetics: K) -> Result<Self, DynamicsError> {
        let h_norm = frobenius_norm(&hamiltonian);
        let mut cap = f64::INFINITY;
        if h_norm > 0.0 {
            cap = cap.min(STEP_PHASE_BUDGET / h_norm);
        }
        let rate = kinetics.max_rate();
        if rate > 0.0 {
            cap = cap.min(STEP_RATE_BUDGET / rate);
        }
        if cap < STEP_UNDERFLOW {
            return Err(DynamicsError::StepUnderflow {
                step: cap,
                minimum: STEP_UNDERFLOW,
            });
        }
        Ok(MasterEquation {
            hamiltonian,
            kinetics,
            max_step: cap,
        })
    }

    /// Override the step cap (e.g. to verify convergence by step halving).
    pub fn with_max_step(mut self, max_step: f64) -> Result<Self, DynamicsError> {
        if !(max_step > 0.0 && max_step.is_finite()) {
            return Err(DynamicsError::InvalidModel(format!(
                "step override must be positive and finite, got {max_step}"
            )));
        }
        if max_step < STEP_UNDERFLOW {
            return Err(DynamicsError::StepUnderflow {
                step: max_step,
                minimum: STEP_UNDERFLOW,
            });
        }
        self.max_step = max_step;
        Ok(self)
    }

    /// Current step cap, ns.
    pub fn max_step(&self) -> f64 {
        self.max_step
    }

    fn rhs(&self, rho: &CMat) -> CMat {
        // -i [H, rho]: multiply (a + ib) by -i entrywise -> (b, -a).
        let mut out = commutator(&self.hamiltonian, rho).mapv(|v| C64::new(v.im, -v.re));
        out = out + self.kinetics.sink(rho);
        out
    }

    fn rk4_step(&self, rho: &CMat, h: f64) -> CMat {
        let k1 = self.rhs(rho);
        let k2 = self.rhs(&(rho + &k1.mapv(|v| v.scale(h / 2.0))));
        let k3 = self.rhs(&(rho + &k2.mapv(|v| v.scale(h / 2.0))));
        let k4 = self.rhs(&(rho + &k3.mapv(|v| v.scale(h))));
        let mut incr = k1;
        incr = incr + k2.mapv(|v| v.scale(2.0));
        incr = incr + k3.mapv(|v| v.scale(2.0));
        incr = incr + k4;
        rho + &incr.mapv(|v| v.scale(h / 6.0))
    }

    /// Integrate a raw state forward by `dt` (ns), landing exactly on the
    /// target via equal substeps of at most the step cap.
    pub fn advance(&self, rho: &CMat, dt: f64) -> Result<CMat, DynamicsError> {
        if dt < 0.0 || !dt.is_finite() {
            return Err(DynamicsError::InvalidGrid(format!(
                "cannot advance by {dt} ns"
            )));
        }
        if dt == 0.0 {
            return Ok(rho.clone());
        }
        let n = (dt / self.max_step).ceil().max(1.0) as u64;
        let h = dt / n as f64;
        let mut state = rho.clone();
        for _ in 0..n {
            state = self.rk4_step(&state, h);
        }
        Ok(state)
    }

    /// Integrate over a full sampling grid.
    pub fn evolve(&self, rho0: &DensityMatrix, times: &[f64]) -> Result<Trajectory, DynamicsError> {
        validate_time_grid(times)?;
        let mut states = Vec::with_capacity(times.len());
        states.push(rho0.clone());
        let mut current = rho0.matrix().clone();
        for pair in times.windows(2) {
            current = self.advance(&current, pair[1] - pair[0])?;
            states.push(DensityMatrix::with_basic_checks(current.clone())?);
        }
        Trajectory::new(times.to_vec(), states)
    }
}

/// Haberkorn-kinetics trajectory:
/// `drho/dt = -i[H, rho] - (k_S/2){Q_S, rho} - (k_T/2){Q_T, rho}`.
pub fn evolve_haberkorn(
    model: &RadicalPairModel,
    rho0: &DensityMatrix,
    times: &[f64],
) -> Result<Trajectory, DynamicsError> {
    HaberkornPropagator::for_model(model)?.evolve(rho0, times)
}

/// Singlet population `tr(Q_S rho) / tr(rho)` along a trajectory — the
/// surviving-pair singlet fraction.
pub fn singlet_probability(
    traj: &Trajectory,
    layout: &SystemLayout,
) -> Result<Vec<f64>, DynamicsError> {
    let qs = singlet_projector(layout)?;
    traj.states()
        .iter()
        .map(|rho| {
            let tr = rho.trace();
            if tr < 1e-12 {
                return Err(DynamicsError::Spin(SpinError::VanishingTrace { trace: tr }));
            }
            Ok(trace(&qs.matrix().dot(rho.matrix())).re / tr)
        })
        .collect()
}
