//! Dense spin-1/2 operator algebra on small tensor-product Hilbert spaces.
//!
//! Conventions shared by the whole crate:
//!
//! - Particles are spin-1/2 and occupy tensor slots in the order given by
//!   [`SystemLayout`]. Slot 0 is the leftmost Kronecker factor, i.e. the most
//!   significant bit of a basis index.
//! - The basis is the z-product basis; bit value 0 means spin up (m = +1/2),
//!   bit value 1 means spin down.
//! - hbar = 1, so single-spin operators have eigenvalues ±1/2 and
//!   `S_z = diag(+1/2, -1/2)`.
//! - Everything is dense `Complex64`. Dimensions stay at or below 2^6 in
//!   practice, where dense kernels beat any sparse bookkeeping.
//!
//! The eigensolver at the bottom of this module is a cyclic complex Jacobi
//! iteration rather than a LAPACK binding: at 8x8 it is plenty fast, and its
//! fixed sweep order makes every result bit-reproducible across runs and
//! thread counts, which the output layer of this project depends on.

use ndarray::{Array1, Array2};
use num_complex::Complex64;
use thiserror::Error;

/// Complex scalar used throughout.
pub type C64 = Complex64;
/// Dense complex matrix.
pub type CMat = Array2<C64>;
/// Dense complex vector.
pub type CVec = Array1<C64>;

/// Relative max-norm tolerance for the Hermiticity tag on [`OperatorMatrix`].
pub const HERMITIAN_TAG_TOL: f64 = 1e-12;
/// Relative max-norm Hermiticity tolerance for [`DensityMatrix`].
pub const DENSITY_HERMITIAN_TOL: f64 = 1e-10;
/// Eigenvalue floor for density-matrix positivity (absolute).
pub const DENSITY_POSITIVITY_FLOOR: f64 = -1e-10;
/// Allowed overshoot of a density-matrix trace above 1 (absolute).
pub const DENSITY_TRACE_SLACK: f64 = 1e-10;
/// Norm tolerance for [`PureState`] (absolute, on the 2-norm).
pub const PURE_STATE_NORM_TOL: f64 = 1e-12;

/// Errors from the spin-algebra layer.
#[derive(Debug, Error)]
pub enum SpinError {
    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("slot {slot} out of range for {count} particle(s)")]
    SlotOutOfRange { slot: usize, count: usize },
    #[error("invalid layout: {0}")]
    InvalidLayout(String),
    #[error("matrix not Hermitian: max deviation {deviation:.3e} exceeds {tolerance:.3e}")]
    NotHermitian { deviation: f64, tolerance: f64 },
    #[error("density-matrix trace {trace:.6e} outside (0, 1 + {slack:.0e}]")]
    TraceOutOfRange { trace: f64, slack: f64 },
    #[error("density matrix not positive semidefinite: eigenvalue {eigenvalue:.3e}")]
    NotPositive { eigenvalue: f64 },
    #[error("state-vector norm {norm} deviates from 1 by more than {tolerance:.0e}")]
    NotNormalized { norm: f64, tolerance: f64 },
    #[error("invalid partial-trace keep set: {0}")]
    InvalidKeepSet(String),
    #[error("trace {trace:.3e} is too small to renormalize by")]
    VanishingTrace { trace: f64 },
    #[error("Jacobi eigensolver stalled after {sweeps} sweeps (off-diagonal norm {off_norm:.3e})")]
    EigensolverStalled { sweeps: usize, off_norm: f64 },
}

// ---------------------------------------------------------------------------
// Elementary matrices and helpers
// ---------------------------------------------------------------------------

/// Cartesian axis label for spin operators.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpinAxis {
    X,
    Y,
    Z,
}

/// 2x2 Pauli matrix (eigenvalues ±1).
pub fn pauli(axis: SpinAxis) -> CMat {
    let z = C64::new(0.0, 0.0);
    let one = C64::new(1.0, 0.0);
    let i = C64::new(0.0, 1.0);
    match axis {
        SpinAxis::X => ndarray::array![[z, one], [one, z]],
        SpinAxis::Y => ndarray::array![[z, -i], [i, z]],
        SpinAxis::Z => ndarray::array![[one, z], [z, -one]],
    }
}

/// 2x2 spin-1/2 operator `S_axis = sigma_axis / 2` (eigenvalues ±1/2, hbar = 1).
pub fn spin_half(axis: SpinAxis) -> CMat {
    pauli(axis).mapv(|v| v.scale(0.5))
}

/// Complex identity matrix of the given dimension.
pub fn identity(dim: usize) -> CMat {
    Array2::eye(dim)
}

/// Kronecker product in slot order: the left factor owns the most significant
/// bits of the result's basis index.
pub fn kron(a: &CMat, b: &CMat) -> CMat {
    ndarray::linalg::kron(a, b)
}

/// Conjugate transpose.
pub fn adjoint(m: &CMat) -> CMat {
    m.t().mapv(|v| v.conj())
}

/// Matrix trace.
pub fn trace(m: &CMat) -> C64 {
    m.diag().sum()
}

/// Commutator `[a, b] = ab - ba`.
pub fn commutator(a: &CMat, b: &CMat) -> CMat {
    a.dot(b) - b.dot(a)
}

/// Anticommutator `{a, b} = ab + ba`.
pub fn anticommutator(a: &CMat, b: &CMat) -> CMat {
    a.dot(b) + b.dot(a)
}

/// Largest entry modulus (max norm).
pub fn max_abs(m: &CMat) -> f64 {
    m.iter().fold(0.0, |acc, v| acc.max(v.norm()))
}

/// Frobenius norm; an inexpensive upper bound on the spectral norm.
pub fn frobenius_norm(m: &CMat) -> f64 {
    m.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

/// Largest modulus of `m - m†` over all entries.
pub fn hermiticity_deviation(m: &CMat) -> f64 {
    let n = m.nrows();
    let mut dev: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            dev = dev.max((m[[i, j]] - m[[j, i]].conj()).norm());
        }
    }
    dev
}

fn ensure_square(m: &CMat) -> Result<usize, SpinError> {
    if m.nrows() != m.ncols() {
        return Err(SpinError::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    Ok(m.nrows())
}

// ---------------------------------------------------------------------------
// System layout
// ---------------------------------------------------------------------------

/// What kind of spin-1/2 particle sits in a tensor slot.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParticleKind {
    Electron,
    Nucleus,
}

/// One spin-1/2 particle in the layout.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Particle {
    pub kind: ParticleKind,
    pub label: String,
}

impl Particle {
    pub fn electron(label: impl Into<String>) -> Self {
        Particle {
            kind: ParticleKind::Electron,
            label: label.into(),
        }
    }

    pub fn nucleus(label: impl Into<String>) -> Self {
        Particle {
            kind: ParticleKind::Nucleus,
            label: label.into(),
        }
    }
}

/// Ordered roster of spin-1/2 particles defining the Hilbert-space
/// factorization. Slot order is the canonical basis order; total dimension is
/// `2^(number of particles)`.
///
/// The general constructor accepts any roster (handy for single-spin checks
/// and algebra tests); the radical-pair operations additionally demand the
/// canonical arrangement of two electrons in slots 0 and 1, enforced by
/// [`SystemLayout::require_radical_pair`] at their call sites.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SystemLayout {
    particles: Vec<Particle>,
}

impl SystemLayout {
    /// Maximum particle count (keeps dimensions within dense-matrix sanity).
    pub const MAX_PARTICLES: usize = 16;

    /// General layout from an explicit particle list.
    pub fn new(particles: Vec<Particle>) -> Result<Self, SpinError> {
        if particles.is_empty() {
            return Err(SpinError::InvalidLayout(
                "layout needs at least one particle".into(),
            ));
        }
        if particles.len() > Self::MAX_PARTICLES {
            return Err(SpinError::InvalidLayout(format!(
                "{} particles exceed the supported maximum of {}",
                particles.len(),
                Self::MAX_PARTICLES
            )));
        }
        Ok(SystemLayout { particles })
    }

    /// Canonical radical-pair layout: electron 1, electron 2, then `n_nuclei`
    /// nuclei, in that slot order.
    pub fn radical_pair(n_nuclei: usize) -> Result<Self, SpinError> {
        let mut particles = vec![Particle::electron("e1"), Particle::electron("e2")];
        for k in 0..n_nuclei {
            particles.push(Particle::nucleus(format!("n{}", k + 1)));
        }
        Self::new(particles)
    }

    /// Number of tensor slots.
    pub fn num_particles(&self) -> usize {
        self.particles.len()
    }

    /// Total Hilbert-space dimension `2^(number of particles)`.
    pub fn dim(&self) -> usize {
        1usize << self.particles.len()
    }

    /// Particle descriptors in slot order.
    pub fn particles(&self) -> &[Particle] {
        &self.particles
    }

    /// Slots occupied by electrons, ascending.
    pub fn electron_slots(&self) -> Vec<usize> {
        self.particles
            .iter()
            .enumerate()
            .filter(|(_, p)| p.kind == ParticleKind::Electron)
            .map(|(s, _)| s)
            .collect()
    }

    /// Slots occupied by nuclei, ascending.
    pub fn nucleus_slots(&self) -> Vec<usize> {
        self.particles
            .iter()
            .enumerate()
            .filter(|(_, p)| p.kind == ParticleKind::Nucleus)
            .map(|(s, _)| s)
            .collect()
    }

    /// Number of nuclei.
    pub fn num_nuclei(&self) -> usize {
        self.nucleus_slots().len()
    }

    /// Demand the canonical radical-pair arrangement: exactly two electrons,
    /// sitting in slots 0 and 1.
    pub fn require_radical_pair(&self) -> Result<(), SpinError> {
        let electrons = self.electron_slots();
        if electrons != [0, 1] {
            return Err(SpinError::InvalidLayout(format!(
                "radical-pair operations need exactly two electrons in slots 0 and 1, \
                 found electrons in slots {electrons:?}"
            )));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Operator and state types
// ---------------------------------------------------------------------------

/// A dense complex square matrix with an optional Hermiticity tag.
///
/// The tag is checked at construction (`max|M - M†| <= 1e-12 * max|M|`), so a
/// tagged operator can be trusted downstream without re-verification.
#[derive(Clone, Debug)]
pub struct OperatorMatrix {
    mat: CMat,
    hermitian: bool,
}

impl OperatorMatrix {
    /// Wrap a matrix and verify the Hermiticity tag.
    pub fn new_hermitian(mat: CMat) -> Result<Self, SpinError> {
        ensure_square(&mat)?;
        let tolerance = HERMITIAN_TAG_TOL * max_abs(&mat).max(f64::MIN_POSITIVE);
        let deviation = hermiticity_deviation(&mat);
        if deviation > tolerance {
            return Err(SpinError::NotHermitian {
                deviation,
                tolerance,
            });
        }
        Ok(OperatorMatrix {
            mat,
            hermitian: true,
        })
    }

    /// Wrap a general (not necessarily Hermitian) square matrix.
    pub fn new_general(mat: CMat) -> Result<Self, SpinError> {
        ensure_square(&mat)?;
        Ok(OperatorMatrix {
            mat,
            hermitian: false,
        })
    }

    /// Identity operator of the given dimension.
    pub fn identity(dim: usize) -> Self {
        OperatorMatrix {
            mat: identity(dim),
            hermitian: true,
        }
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn matrix(&self) -> &CMat {
        &self.mat
    }

    pub fn into_matrix(self) -> CMat {
        self.mat
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    /// Kronecker product preserving the Hermiticity tag when both factors
    /// carry it.
    pub fn tensor(&self, other: &Self) -> Self {
        OperatorMatrix {
            mat: kron(&self.mat, &other.mat),
            hermitian: self.hermitian && other.hermitian,
        }
    }
}

/// A normalized state vector (`||psi||_2 = 1` within 1e-12).
#[derive(Clone, Debug)]
pub struct PureState {
    amps: CVec,
}

impl PureState {
    pub fn new(amps: CVec) -> Result<Self, SpinError> {
        let norm = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > PURE_STATE_NORM_TOL {
            return Err(SpinError::NotNormalized {
                norm,
                tolerance: PURE_STATE_NORM_TOL,
            });
        }
        Ok(PureState { amps })
    }

    /// Two-electron singlet `(|up,down> - |down,up>)/sqrt(2)` (dimension 4).
    pub fn singlet() -> Self {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let z = C64::new(0.0, 0.0);
        PureState {
            amps: ndarray::array![z, C64::new(s, 0.0), C64::new(-s, 0.0), z],
        }
    }

    /// Computational basis state `|index>` of the given dimension.
    pub fn basis_state(dim: usize, index: usize) -> Result<Self, SpinError> {
        if index >= dim {
            return Err(SpinError::DimensionMismatch {
                expected: dim,
                got: index,
            });
        }
        let mut amps = Array1::zeros(dim);
        amps[index] = C64::new(1.0, 0.0);
        Ok(PureState { amps })
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &CVec {
        &self.amps
    }

    /// Rank-one density matrix `|psi><psi|`.
    pub fn to_density(&self) -> DensityMatrix {
        let d = self.dim();
        let mut mat = Array2::zeros((d, d));
        for i in 0..d {
            for j in 0..d {
                mat[[i, j]] = self.amps[i] * self.amps[j].conj();
            }
        }
        DensityMatrix { mat }
    }
}

/// A density matrix: Hermitian within 1e-10 (relative max norm), positive
/// semidefinite within an eigenvalue floor of -1e-10, trace in (0, 1 + 1e-10].
///
/// Trace below 1 is legitimate — recombination kinetics drain population, and
/// the trace then counts surviving pairs. [`DensityMatrix::new`] verifies all
/// three invariants, including positivity via eigendecomposition; the crate's
/// propagators use a cheaper internal constructor that skips the eigenvalue
/// check (their schemes preserve positivity by construction, and the test
/// suite asserts it along whole trajectories).
#[derive(Clone, Debug)]
pub struct DensityMatrix {
    mat: CMat,
}

impl DensityMatrix {
    /// Construct with full invariant verification (including positivity).
    pub fn new(mat: CMat) -> Result<Self, SpinError> {
        let rho = Self::with_basic_checks(mat)?;
        rho.check_positive_semidefinite(DENSITY_POSITIVITY_FLOOR)?;
        Ok(rho)
    }

    /// Construct with the cheap invariants only (square, Hermitian, trace
    /// bounds). Reserved for propagation outputs whose positivity is
    /// guaranteed by the numerical scheme.
    pub(crate) fn with_basic_checks(mat: CMat) -> Result<Self, SpinError> {
        ensure_square(&mat)?;
        let tolerance = DENSITY_HERMITIAN_TOL * max_abs(&mat).max(f64::MIN_POSITIVE);
        let deviation = hermiticity_deviation(&mat);
        if deviation > tolerance {
            return Err(SpinError::NotHermitian {
                deviation,
                tolerance,
            });
        }
        let tr = trace(&mat).re;
        if !(tr > 0.0 && tr <= 1.0 + DENSITY_TRACE_SLACK) {
            return Err(SpinError::TraceOutOfRange {
                trace: tr,
                slack: DENSITY_TRACE_SLACK,
            });
        }
        Ok(DensityMatrix { mat })
    }

    /// Maximally mixed state `I/dim`.
    pub fn maximally_mixed(dim: usize) -> Result<Self, SpinError> {
        if dim == 0 {
            return Err(SpinError::InvalidLayout("dimension 0 state".into()));
        }
        Ok(DensityMatrix {
            mat: identity(dim).mapv(|v| v.scale(1.0 / dim as f64)),
        })
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn matrix(&self) -> &CMat {
        &self.mat
    }

    pub fn into_matrix(self) -> CMat {
        self.mat
    }

    /// Real part of the trace (the imaginary part is zero within the
    /// Hermiticity tolerance).
    pub fn trace(&self) -> f64 {
        trace(&self.mat).re
    }

    /// Purity `tr(rho^2) / tr(rho)^2`-free raw form: `tr(rho^2)`.
    pub fn purity(&self) -> f64 {
        self.mat.iter().map(|v| v.norm_sqr()).sum()
    }

    /// Trace-normalized copy (the conditional state of surviving pairs under
    /// recombination). Errors when the trace has decayed below 1e-12.
    pub fn normalized(&self) -> Result<Self, SpinError> {
        let tr = self.trace();
        if tr < 1e-12 {
            return Err(SpinError::VanishingTrace { trace: tr });
        }
        Ok(DensityMatrix {
            mat: self.mat.mapv(|v| v.scale(1.0 / tr)),
        })
    }

    /// Expectation value `Re tr(op * rho)` of a Hermitian operator.
    pub fn expectation(&self, op: &OperatorMatrix) -> Result<f64, SpinError> {
        if op.dim() != self.dim() {
            return Err(SpinError::DimensionMismatch {
                expected: self.dim(),
                got: op.dim(),
            });
        }
        Ok(trace(&op.matrix().dot(&self.mat)).re)
    }

    /// Tensor product of two density matrices.
    pub fn tensor(&self, other: &Self) -> Result<Self, SpinError> {
        Self::with_basic_checks(kron(&self.mat, &other.mat))
    }

    /// Assert positivity by eigendecomposition: every eigenvalue must be at
    /// least `floor` (a small negative number absorbing round-off).
    pub fn check_positive_semidefinite(&self, floor: f64) -> Result<(), SpinError> {
        let (eigs, _) = eigh(&self.mat)?;
        match eigs.first() {
            Some(&lowest) if lowest < floor => Err(SpinError::NotPositive { eigenvalue: lowest }),
            _ => Ok(()),
        }
    }
}

// ---------------------------------------------------------------------------
// Embedding, partial trace, projectors
// ---------------------------------------------------------------------------

/// Embed a single-spin (2x2) operator into the full space: identity on every
/// slot except `slot`.
pub fn embed_operator(op: &CMat, slot: usize, layout: &SystemLayout) -> Result<CMat, SpinError> {
    if op.nrows() != 2 || op.ncols() != 2 {
        return Err(SpinError::DimensionMismatch {
            expected: 2,
            got: op.nrows().max(op.ncols()),
        });
    }
    let n = layout.num_particles();
    if slot >= n {
        return Err(SpinError::SlotOutOfRange { slot, count: n });
    }
    let eye2 = identity(2);
    let mut acc = identity(1);
    for s in 0..n {
        acc = kron(&acc, if s == slot { op } else { &eye2 });
    }
    Ok(acc)
}

/// Spin-1/2 operator along `axis` acting on `slot`, identity elsewhere.
pub fn spin_operator(
    axis: SpinAxis,
    slot: usize,
    layout: &SystemLayout,
) -> Result<OperatorMatrix, SpinError> {
    let mat = embed_operator(&spin_half(axis), slot, layout)?;
    // Embedding a Hermitian 2x2 via identity factors is exactly Hermitian.
    OperatorMatrix::new_hermitian(mat)
}

/// Scatter the bits of `sub` (one bit per listed slot, slot order = bit order
/// from the most significant end) into a full basis index.
fn scatter_bits(slots: &[usize], sub: usize, n_slots: usize) -> usize {
    let mut full = 0usize;
    for (j, &s) in slots.iter().enumerate() {
        if (sub >> (slots.len() - 1 - j)) & 1 == 1 {
            full |= 1usize << (n_slots - 1 - s);
        }
    }
    full
}

/// Partial trace over every slot *not* in `keep`, on a raw matrix. `keep`
/// must be sorted ascending and valid; the output keeps canonical slot order.
pub(crate) fn partial_trace_raw(m: &CMat, keep: &[usize], n_slots: usize) -> CMat {
    let env: Vec<usize> = (0..n_slots).filter(|s| !keep.contains(s)).collect();
    let kd = 1usize << keep.len();
    let ed = 1usize << env.len();
    let keep_map: Vec<usize> = (0..kd).map(|a| scatter_bits(keep, a, n_slots)).collect();
    let env_map: Vec<usize> = (0..ed).map(|e| scatter_bits(&env, e, n_slots)).collect();
    let mut out: CMat = Array2::zeros((kd, kd));
    for a in 0..kd {
        for b in 0..kd {
            let mut acc = C64::new(0.0, 0.0);
            for &e in &env_map {
                acc += m[[keep_map[a] | e, keep_map[b] | e]];
            }
            out[[a, b]] = acc;
        }
    }
    out
}

/// Reduced density matrix on the slots in `keep` (any order, no duplicates),
/// output in canonical slot order. Preserves the trace exactly.
pub fn partial_trace(
    rho: &DensityMatrix,
    keep: &[usize],
    layout: &SystemLayout,
) -> Result<DensityMatrix, SpinError> {
    if layout.dim() != rho.dim() {
        return Err(SpinError::DimensionMismatch {
            expected: layout.dim(),
            got: rho.dim(),
        });
    }
    if keep.is_empty() {
        return Err(SpinError::InvalidKeepSet("keep set is empty".into()));
    }
    let n = layout.num_particles();
    let mut sorted = keep.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != keep.len() {
        return Err(SpinError::InvalidKeepSet(format!(
            "duplicate slots in {keep:?}"
        )));
    }
    if let Some(&bad) = sorted.iter().find(|&&s| s >= n) {
        return Err(SpinError::SlotOutOfRange { slot: bad, count: n });
    }
    DensityMatrix::with_basic_checks(partial_trace_raw(rho.matrix(), &sorted, n))
}

/// Projector onto the two-electron singlet subspace:
/// `|S><S|_electrons ⊗ identity_nuclei`. Idempotent, Hermitian, rank `2^N`.
pub fn singlet_projector(layout: &SystemLayout) -> Result<OperatorMatrix, SpinError> {
    layout.require_radical_pair()?;
    let qs4 = PureState::singlet().to_density().into_matrix();
    let nuclear_dim = layout.dim() / 4;
    OperatorMatrix::new_hermitian(kron(&qs4, &identity(nuclear_dim)))
}

/// Projector onto the two-electron triplet subspace: `identity - Q_S`.
pub fn triplet_projector(layout: &SystemLayout) -> Result<OperatorMatrix, SpinError> {
    let qs = singlet_projector(layout)?;
    OperatorMatrix::new_hermitian(identity(layout.dim()) - qs.matrix())
}

// ---------------------------------------------------------------------------
// Hermitian eigendecomposition (cyclic complex Jacobi)
// ---------------------------------------------------------------------------

const JACOBI_MAX_SWEEPS: usize = 64;

/// Eigendecomposition of a Hermitian matrix: eigenvalues ascending plus the
/// unitary matrix with eigenvectors as columns, so `m ≈ v · diag(w) · v†`.
///
/// Implementation: cyclic complex Jacobi rotations with a fixed pivot order.
/// Single-threaded, allocation-light, no platform-specific kernels — results
/// are bit-identical for identical inputs, and at the dimensions used here
/// (≤ 16) accuracy is at the round-off level. Input may deviate from exact
/// Hermiticity by round-off; it is symmetrized once before iterating.
pub fn eigh(m: &CMat) -> Result<(Vec<f64>, CMat), SpinError> {
    let n = ensure_square(m)?;
    // Guard against callers handing over something genuinely non-Hermitian.
    let scale = max_abs(m);
    let deviation = hermiticity_deviation(m);
    if deviation > 1e-8 * scale.max(1.0) {
        return Err(SpinError::NotHermitian {
            deviation,
            tolerance: 1e-8 * scale.max(1.0),
        });
    }
    if n == 0 {
        return Ok((Vec::new(), identity(0)));
    }

    // Work on the exactly Hermitian part; round-off asymmetry would otherwise
    // leak into the rotations.
    let mut a = m.mapv(|v| v.scale(0.5)) + adjoint(m).mapv(|v| v.scale(0.5));
    let mut v: CMat = identity(n);

    let fro = frobenius_norm(&a);
    if fro == 0.0 {
        return Ok((vec![0.0; n], v));
    }
    // Converged when the total off-diagonal Frobenius mass is at round-off.
    let tol_sq = (1e-15 * fro).powi(2);

    for sweep in 1..=JACOBI_MAX_SWEEPS {
        let mut off_sq = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off_sq += a[[p, q]].norm_sqr();
            }
        }
        if 2.0 * off_sq <= tol_sq {
            return Ok(sorted_eigensystem(&a, v));
        }

        for p in 0..(n - 1) {
            for q in (p + 1)..n {
                let apq = a[[p, q]];
                let abs = apq.norm();
                if abs == 0.0 {
                    continue;
                }
                // Unitary 2x2 rotation G with G[p,p] = c, G[p,q] = s*phase,
                // G[q,p] = -s*conj(phase), G[q,q] = c chosen so (G† A G)[p,q]
                // vanishes; phase = A[p,q]/|A[p,q]|, and t = s/c is the
                // smaller-magnitude root of t^2 - 2*tau*t - 1 = 0 with
                // tau = (A[p,p] - A[q,q]) / (2|A[p,q]|).
                let phase = apq.unscale(abs);
                let tau = (a[[p, p]].re - a[[q, q]].re) / (2.0 * abs);
                let hyp = (1.0 + tau * tau).sqrt();
                let t = if tau >= 0.0 {
                    -1.0 / (tau + hyp)
                } else {
                    1.0 / (-tau + hyp)
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;

                // Columns: A <- A * G.
                for k in 0..n {
                    let akp = a[[k, p]];
                    let akq = a[[k, q]];
                    a[[k, p]] = akp.scale(c) - (phase.conj() * akq).scale(s);
                    a[[k, q]] = (phase * akp).scale(s) + akq.scale(c);
                }
                // Rows: A <- G† * A.
                for k in 0..n {
                    let apk = a[[p, k]];
                    let aqk = a[[q, k]];
                    a[[p, k]] = apk.scale(c) - (phase * aqk).scale(s);
                    a[[q, k]] = (phase.conj() * apk).scale(s) + aqk.scale(c);
                }
                // Eigenvector accumulation: V <- V * G.
                for k in 0..n {
                    let vkp = v[[k, p]];
                    let vkq = v[[k, q]];
                    v[[k, p]] = vkp.scale(c) - (phase.conj() * vkq).scale(s);
                    v[[k, q]] = (phase * vkp).scale(s) + vkq.scale(c);
                }
                // The pivot is zero by construction; pin it and keep the
                // diagonal exactly real to stop round-off accumulating.
                a[[p, q]] = C64::new(0.0, 0.0);
                a[[q, p]] = C64::new(0.0, 0.0);
                a[[p, p]] = C64::new(a[[p, p]].re, 0.0);
                a[[q, q]] = C64::new(a[[q, q]].re, 0.0);
            }
        }

        if sweep == JACOBI_MAX_SWEEPS {
            let mut off_sq = 0.0;
            for p in 0..n {
                for q in (p + 1)..n {
                    off_sq += a[[p, q]].norm_sqr();
                }
            }
            return Err(SpinError::EigensolverStalled {
                sweeps: sweep,
                off_norm: (2.0 * off_sq).sqrt(),
            });
        }
    }
    unreachable!("loop either returns or errors on the final sweep");
}

/// Sort the diagonal ascending and permute eigenvector columns to match.
fn sorted_eigensystem(a: &CMat, v: CMat) -> (Vec<f64>, CMat) {
    let n = a.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    let diag: Vec<f64> = (0..n).map(|i| a[[i, i]].re).collect();
    order.sort_by(|&i, &j| diag[i].total_cmp(&diag[j]));
    let w: Vec<f64> = order.iter().map(|&i| diag[i]).collect();
    let mut vs: CMat = Array2::zeros((n, n));
    for (new_col, &old_col) in order.iter().enumerate() {
        vs.column_mut(new_col).assign(&v.column(old_col));
    }
    (w, vs)
}

/// Square root of a positive-semidefinite Hermitian matrix via
/// eigendecomposition, clamping tiny negative round-off eigenvalues to zero.
pub fn sqrt_psd(m: &CMat) -> Result<CMat, SpinError> {
    let (w, v) = eigh(m)?;
    let n = w.len();
    let mut scaled = v.clone();
    for (j, &val) in w.iter().enumerate() {
        let root = val.max(0.0).sqrt();
        for i in 0..n {
            scaled[[i, j]] = scaled[[i, j]].scale(root);
        }
    }
    Ok(scaled.dot(&adjoint(&v)))
}
