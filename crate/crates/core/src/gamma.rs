//! The penalty factor `γ(A, T, G)`.
//!
//! For each group `Gᵢ` the submatrix `A_{GᵢT}` is row-normalized and its
//! `2→1` operator norm `max_{‖f‖₂=1} ‖M f‖₁` is evaluated; `γ` is the largest
//! of these over the groups. By duality `‖M‖₂→₁ = max_u ‖Mᴴ u‖₂` over
//! vectors `u` with unimodular entries (signs in the real field), so
//!
//! * for real `M` with few rows the norm is computed exactly by enumerating
//!   sign vectors ([`norm_2to1_exact_real`]);
//! * any unimodular `u` gives a lower bound, improved by fixed-point phase
//!   iteration ([`norm_2to1_lower`]);
//! * the semidefinite relaxation `max { Re tr(M Mᴴ W) : W ⪰ 0, diag W = 1 }`
//!   gives an upper bound at most `K_p` times the norm, with `K_p = √(π/2)`
//!   over the reals and `√(4/π)` over the complex field
//!   ([`norm_2to1_upper_sdp`]).
//!
//! The relaxation is solved in factored form `W = R Rᴴ` by block-coordinate
//! ascent over the unit-norm rows of `R`. A feasible `R` only bounds the
//! relaxation from below, so the reported upper bound comes from a diagonal
//! dual certificate `Λ ⪰ M Mᴴ`, which is valid whether or not the ascent
//! reached the optimum.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grouping::GroupStructure;
use crate::linalg::{self, phase_or};
use crate::operators::{normalize_rows, MeasurementEnsemble, SupportSet};
use crate::{CMatrix, CVector, C64};

/// Default row limit for exact sign enumeration (`2^19` candidates).
pub const DEFAULT_ENUM_LIMIT: usize = 20;
/// Default number of phase-iteration restarts.
pub const DEFAULT_RESTARTS: usize = 64;

const ROUNDING_SLACK: f64 = 1e-12;

const PHASE_ITERS: usize = 200;
const PHASE_TOL: f64 = 1e-10;
const SDP_RESTARTS: usize = 4;
const SDP_MAX_SWEEPS: usize = 5000;
const SDP_STALL_TOL: f64 = 1e-13;
const SDP_ROUNDINGS: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Field {
    Real,
    Complex,
}

impl Field {
    pub fn of(m: &CMatrix) -> Self {
        if linalg::is_real(m) {
            Field::Real
        } else {
            Field::Complex
        }
    }

    /// Worst-case ratio between the relaxation bound and the true norm.
    pub fn pietsch_constant(self) -> f64 {
        match self {
            Field::Real => (PI / 2.0).sqrt(),
            Field::Complex => (4.0 / PI).sqrt(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GammaMode {
    /// Sign enumeration only; fails for complex ensembles or large groups.
    Exact,
    /// Phase-iteration lower bound and relaxation upper bound only.
    Sandwich,
    /// Exact when possible, otherwise the sandwich.
    Auto,
    /// The sandwich, plus the exact value when possible.
    Full,
}

impl std::str::FromStr for GammaMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(GammaMode::Exact),
            "sandwich" => Ok(GammaMode::Sandwich),
            "auto" => Ok(GammaMode::Auto),
            "full" => Ok(GammaMode::Full),
            other => Err(Error::invalid(format!("unknown gamma mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GammaMethod {
    ExactSignEnum,
    PhaseIterLower,
    SdpUpper,
    Sandwich,
}

impl std::fmt::Display for GammaMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            GammaMethod::ExactSignEnum => "exact_sign_enum",
            GammaMethod::PhaseIterLower => "phase_iter_lower",
            GammaMethod::SdpUpper => "sdp_upper",
            GammaMethod::Sandwich => "sandwich",
        })
    }
}

impl std::str::FromStr for GammaMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact_sign_enum" => Ok(GammaMethod::ExactSignEnum),
            "phase_iter_lower" => Ok(GammaMethod::PhaseIterLower),
            "sdp_upper" => Ok(GammaMethod::SdpUpper),
            "sandwich" => Ok(GammaMethod::Sandwich),
            other => Err(Error::invalid(format!("unknown gamma method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct GammaOptions {
    pub mode: GammaMode,
    pub enum_limit: usize,
    pub restarts: usize,
    /// Master seed; group `i` uses stream `i` of a ChaCha generator.
    pub seed: u64,
}

impl Default for GammaOptions {
    fn default() -> Self {
        Self { mode: GammaMode::Auto, enum_limit: DEFAULT_ENUM_LIMIT, restarts: DEFAULT_RESTARTS, seed: 0 }
    }
}

/// Bounds on `γ`; `exact` is present when sign enumeration applied.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaEstimate {
    pub lower: f64,
    pub upper: f64,
    pub exact: Option<f64>,
    pub method: GammaMethod,
    pub argmax_group: usize,
    pub field: Field,
    /// Some group's relaxation solve stalled and fell back to `√g·σ_max`.
    pub degraded: bool,
}

impl GammaEstimate {
    /// The exact value when known, otherwise the upper bound.
    pub fn value(&self) -> f64 {
        self.exact.unwrap_or(self.upper)
    }
}

/// `‖M‖₂→₁` of a real matrix by enumerating the `2^(g−1)` sign vectors with
/// the first sign fixed to `+1`.
pub fn norm_2to1_exact_real(m: &CMatrix, enum_limit: usize) -> Result<f64> {
    if !linalg::is_real(m) {
        return Err(Error::ComplexInput);
    }
    let g = m.nrows();
    if g > enum_limit {
        return Err(Error::EnumLimit { rows: g, limit: enum_limit });
    }
    if g == 0 || m.ncols() == 0 {
        return Ok(0.0);
    }
    let rows: Vec<Vec<f64>> = (0..g).map(|i| m.row(i).iter().map(|z| z.re).collect()).collect();
    let mut signs = vec![1.0f64; g];
    let mut acc: Vec<f64> = (0..m.ncols()).map(|j| rows.iter().map(|r| r[j]).sum()).collect();
    let mut best = acc.iter().map(|x| x * x).sum::<f64>();
    // Gray code over signs[1..]: step k flips the sign at 1 + trailing_zeros(k)
    for k in 1u64..(1u64 << (g - 1)) {
        let i = 1 + k.trailing_zeros() as usize;
        let delta = -2.0 * signs[i];
        for (a, x) in acc.iter_mut().zip(&rows[i]) {
            *a += delta * x;
        }
        signs[i] = -signs[i];
        best = best.max(acc.iter().map(|x| x * x).sum());
    }
    Ok(best.sqrt())
}

/// `‖Mᴴ u‖₂` after fixed-point iteration `u ← phase(M Mᴴ u)`, which never
/// decreases the objective because `M Mᴴ` is positive semidefinite.
fn phase_ascent(m: &CMatrix, q: &CMatrix, mut u: CVector) -> f64 {
    for _ in 0..PHASE_ITERS {
        let w = q * &u;
        let mut change = 0.0f64;
        for (ui, wi) in u.iter_mut().zip(w.iter()) {
            let next = phase_or(*wi, *ui);
            change = change.max((next - *ui).norm());
            *ui = next;
        }
        if change < PHASE_TOL {
            break;
        }
    }
    (m.adjoint() * u).norm()
}

/// Derandomized start: choose each `uᵢ` in turn so the running sum
/// `Σ uᵢ conj(mᵢ)` never loses the expected squared norm of a random choice,
/// which guarantees `‖Mᴴ u‖₂² ≥ Σ ‖mᵢ‖²`.
fn greedy_start(m: &CMatrix) -> CVector {
    let mut partial = CVector::zeros(m.ncols());
    let mut u = CVector::from_element(m.nrows(), C64::new(1.0, 0.0));
    for i in 0..m.nrows() {
        let row = m.row(i).adjoint();
        let s = row.dotc(&partial);
        u[i] = phase_or(s, C64::new(1.0, 0.0));
        partial += &row * u[i];
    }
    u
}

fn sign_start(g: usize, k: u64) -> CVector {
    CVector::from_fn(g, |i, _| {
        let negative = i > 0 && (k >> (i - 1)) & 1 == 1;
        C64::new(if negative { -1.0 } else { 1.0 }, 0.0)
    })
}

fn random_start<R: Rng + ?Sized>(g: usize, field: Field, rng: &mut R) -> CVector {
    CVector::from_fn(g, |_, _| match field {
        Field::Real => C64::new(if rng.random::<bool>() { 1.0 } else { -1.0 }, 0.0),
        Field::Complex => C64::from_polar(1.0, rng.random_range(0.0..2.0 * PI)),
    })
}

fn lower_with_field<R: Rng + ?Sized>(m: &CMatrix, q: &CMatrix, field: Field, restarts: usize, rng: &mut R) -> f64 {
    let g = m.nrows();
    let mut best = phase_ascent(m, q, greedy_start(m));
    let sign_count = if g == 0 {
        1
    } else if g > 60 {
        u64::MAX
    } else {
        1u64 << (g - 1)
    };
    for k in 0..restarts {
        let start = if (k as u64) < sign_count { sign_start(g, k as u64) } else { random_start(g, field, rng) };
        best = best.max(phase_ascent(m, q, start));
    }
    best
}

/// Lower bound on `‖M‖₂→₁` from phase iteration.
///
/// Besides a greedy start that guarantees at least `(Σ‖mᵢ‖²)^{1/2}`, the
/// `k`-th restart begins at the `k`-th sign vector while those last, then at
/// random signs (real `M`) or random phases (complex `M`). Real matrices
/// stay in the real field throughout. The result is a running maximum, so it
/// never decreases as `restarts` grows.
pub fn norm_2to1_lower<R: Rng + ?Sized>(m: &CMatrix, restarts: usize, rng: &mut R) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    let q = m * m.adjoint();
    lower_with_field(m, &q, Field::of(m), restarts, rng)
}

/// Result of the semidefinite relaxation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SdpBound {
    /// Certified upper bound on `‖M‖₂→₁`.
    pub upper: f64,
    /// Best lower bound found by rounding the factored solution.
    pub lower: f64,
    /// Square root of the best primal relaxation value reached.
    pub primal: f64,
    /// True when no restart reached stationarity; `upper` is then `√g·σ_max`.
    pub degraded: bool,
}

/// Upper bound on `‖M‖₂→₁` from the semidefinite relaxation of the dual
/// `∞→2` problem, solved with seeded low-rank restarts.
pub fn norm_2to1_upper_sdp<R: Rng + ?Sized>(m: &CMatrix, rng: &mut R) -> SdpBound {
    let field = Field::of(m);
    let q = m * m.adjoint();
    relaxation_bound(m, &q, field, SDP_RESTARTS, rng)
}

fn random_normal<R: Rng + ?Sized>(field: Field, rng: &mut R) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = match field {
        Field::Real => 0.0,
        Field::Complex => rng.sample(StandardNormal),
    };
    C64::new(re, im)
}

/// Block-coordinate ascent on `Re tr(Q R Rᴴ)` over rows of unit norm.
/// Returns the factor and whether the objective stalled before the cap.
fn factored_ascent<R: Rng + ?Sized>(q: &CMatrix, rank: usize, field: Field, rng: &mut R) -> (CMatrix, bool) {
    let g = q.nrows();
    let mut r = CMatrix::from_fn(g, rank, |_, _| random_normal(field, rng));
    for i in 0..g {
        let norm = r.row(i).norm();
        r.row_mut(i).unscale_mut(norm);
    }
    let objective = |r: &CMatrix| (0..g).map(|i| row_dual(q, r, i)).sum::<f64>();
    let mut prev = objective(&r);
    for _ in 0..SDP_MAX_SWEEPS {
        for i in 0..g {
            let mut v = nalgebra::RowDVector::<C64>::zeros(rank);
            for j in (0..g).filter(|&j| j != i) {
                v += r.row(j) * q[(i, j)];
            }
            let norm = v.norm();
            if norm > 0.0 {
                r.set_row(i, &(v / C64::new(norm, 0.0)));
            }
        }
        let cur = objective(&r);
        if (cur - prev).abs() <= SDP_STALL_TOL * cur.abs().max(1e-300) {
            return (r, true);
        }
        prev = cur;
    }
    (r, false)
}

/// `Re ⟨(Q R)ᵢ, rᵢ⟩`, the stationary diagonal multiplier for row `i`.
fn row_dual(q: &CMatrix, r: &CMatrix, i: usize) -> f64 {
    let mut acc = C64::new(0.0, 0.0);
    for j in 0..q.ncols() {
        let qij = q[(i, j)];
        for k in 0..r.ncols() {
            acc += qij * r[(j, k)] * r[(i, k)].conj();
        }
    }
    acc.re
}

/// `Σᵢ λᵢ` for a diagonal `Λ ⪰ Q` built from the stationarity multipliers
/// of `r`, shifted by the most negative eigenvalue of `Λ − Q` plus a
/// round-off margin.
fn dual_certificate_value(q: &CMatrix, r: &CMatrix) -> f64 {
    let g = q.nrows();
    let lambda: Vec<f64> = (0..g).map(|i| row_dual(q, r, i)).collect();
    let mut s = -q.clone();
    for (i, l) in lambda.iter().enumerate() {
        s[(i, i)] += C64::new(*l, 0.0);
    }
    let scale = s.iter().fold(0.0f64, |acc, z| acc.max(z.norm())).max(1e-300);
    let min_eig = linalg::hermitian_eigenvalues(&s)[0];
    let margin = 64.0 * f64::EPSILON * scale * g as f64;
    let shift = (margin - min_eig).max(0.0);
    lambda.iter().sum::<f64>() + g as f64 * shift
}

fn relaxation_bound<R: Rng + ?Sized>(m: &CMatrix, q: &CMatrix, field: Field, restarts: usize, rng: &mut R) -> SdpBound {
    let g = q.nrows();
    if g == 0 || m.ncols() == 0 {
        return SdpBound { upper: 0.0, lower: 0.0, primal: 0.0, degraded: false };
    }
    let lambda_max = *linalg::hermitian_eigenvalues(q).last().unwrap();
    let trivial = (g as f64 * lambda_max.max(0.0)).sqrt();
    let row_sum: f64 = (0..g).map(|i| m.row(i).norm()).sum();
    let rank = g.min(((2.0 * g as f64).sqrt().ceil() as usize) + 1);

    let mut best_dual = f64::INFINITY;
    let mut best_primal = 0.0f64;
    let mut lower = 0.0f64;
    let mut any_converged = false;
    for _ in 0..restarts.max(1) {
        let (r, converged) = factored_ascent(q, rank, field, rng);
        let primal: f64 = (0..g).map(|i| row_dual(q, &r, i)).sum();
        best_primal = best_primal.max(primal);
        if converged {
            any_converged = true;
            best_dual = best_dual.min(dual_certificate_value(q, &r));
        }
        for _ in 0..SDP_ROUNDINGS {
            let z = CVector::from_fn(rank, |_, _| random_normal(field, rng));
            let proj = &r * z;
            let u = proj.map(|x| phase_or(x, C64::new(1.0, 0.0)));
            lower = lower.max(phase_ascent(m, q, u));
        }
    }
    let primal = best_primal.max(0.0).sqrt();
    if !any_converged {
        return SdpBound { upper: trivial, lower, primal, degraded: true };
    }
    let upper = best_dual.max(0.0).sqrt().min(trivial).min(row_sum);
    SdpBound { upper, lower, primal, degraded: false }
}

#[derive(Debug, Clone, Copy)]
struct GroupValue {
    lower: f64,
    upper: f64,
    exact: Option<f64>,
    degraded: bool,
}

fn group_value(m: &CMatrix, field: Field, opts: &GammaOptions, stream: u64) -> Result<GroupValue> {
    if m.nrows() == 1 {
        // a single normalized row has norm exactly 1 (or 0), in either field
        let v = if m.iter().any(|z| z.norm_sqr() > 0.0) { 1.0 } else { 0.0 };
        return Ok(GroupValue { lower: v, upper: v, exact: Some(v), degraded: false });
    }
    let exact_possible = field == Field::Real && m.nrows() <= opts.enum_limit;
    let want_exact = match opts.mode {
        GammaMode::Exact => {
            if field == Field::Complex {
                return Err(Error::ComplexInput);
            }
            if !exact_possible {
                return Err(Error::EnumLimit { rows: m.nrows(), limit: opts.enum_limit });
            }
            true
        }
        GammaMode::Sandwich => false,
        GammaMode::Auto | GammaMode::Full => exact_possible,
    };
    let exact = if want_exact { Some(norm_2to1_exact_real(m, opts.enum_limit)?) } else { None };
    let need_bounds =
        matches!(opts.mode, GammaMode::Sandwich | GammaMode::Full) || (opts.mode == GammaMode::Auto && exact.is_none());
    if !need_bounds {
        let v = exact.expect("exact value computed when bounds are skipped");
        return Ok(GroupValue { lower: v, upper: v, exact, degraded: false });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    rng.set_stream(stream);
    let q = m * m.adjoint();
    let phase = lower_with_field(m, &q, field, opts.restarts, &mut rng);
    let sdp = relaxation_bound(m, &q, field, SDP_RESTARTS, &mut rng);
    let mut lower = phase.max(sdp.lower);
    // both ends can be attained (e.g. equal rows); keep rounding from inverting them
    if lower > sdp.upper && lower <= sdp.upper * (1.0 + ROUNDING_SLACK) {
        lower = sdp.upper;
    }
    Ok(GroupValue { lower, upper: sdp.upper, exact, degraded: sdp.degraded })
}

/// `γ(A, T, G) = maxᵢ ‖normalize_rows(A_{GᵢT})‖₂→₁`.
///
/// The field is that of the whole ensemble: a complex `A` is always treated
/// over the complex numbers even if some submatrix happens to be real.
/// Groups are evaluated in parallel with per-group random streams, so the
/// result does not depend on scheduling.
pub fn penalty_gamma(
    e: &MeasurementEnsemble,
    t: &SupportSet,
    gs: &GroupStructure,
    opts: &GammaOptions,
) -> Result<GammaEstimate> {
    if gs.n() != e.n() {
        return Err(Error::DimensionMismatch { expected: e.n(), found: gs.n() });
    }
    if t.n() != e.n() {
        return Err(Error::DimensionMismatch { expected: e.n(), found: t.n() });
    }
    let field = if e.is_real() { Field::Real } else { Field::Complex };
    let values: Vec<GroupValue> = (0..gs.num_groups())
        .into_par_iter()
        .map(|i| {
            let sub = e.submatrix(gs.group(i), t)?;
            let normalized = normalize_rows(&sub).matrix;
            group_value(&normalized, field, opts, i as u64)
        })
        .collect::<Result<_>>()?;

    let headline = |v: &GroupValue| v.exact.unwrap_or(v.upper);
    let mut argmax_group = 0;
    for (i, v) in values.iter().enumerate() {
        if headline(v) > headline(&values[argmax_group]) {
            argmax_group = i;
        }
    }
    let lower = values.iter().map(|v| v.lower).fold(0.0, f64::max);
    let upper = values.iter().map(|v| v.upper).fold(0.0, f64::max);
    let exact = values.iter().map(|v| v.exact).try_fold(0.0f64, |acc, x| x.map(|x| acc.max(x)));
    let method = match (opts.mode, exact.is_some()) {
        (GammaMode::Exact, _) | (GammaMode::Auto, true) => GammaMethod::ExactSignEnum,
        _ => GammaMethod::Sandwich,
    };
    Ok(GammaEstimate {
        lower,
        upper,
        exact: if values.is_empty() { None } else { exact },
        method,
        argmax_group,
        field,
        degraded: values.iter().any(|v| v.degraded),
    })
}

/// Real matrix helper used by tests and examples.
pub fn real_matrix(rows: usize, cols: usize, data: &[f64]) -> CMatrix {
    linalg::to_complex(&DMatrix::from_row_slice(rows, cols, data))
}


#[cfg(test)]
mod props {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn sandwich_contains_exact(seed in any::<u64>(), g in 2usize..=8, t in 2usize..=16) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let raw = CMatrix::from_fn(g, t, |_, _| C64::new(rng.sample(StandardNormal), 0.0));
            let m = normalize_rows(&raw).matrix;
            let exact = norm_2to1_exact_real(&m, 20).unwrap();
            let lower = norm_2to1_lower(&m, 64, &mut rng);
            let sdp = norm_2to1_upper_sdp(&m, &mut rng);
            let gf = g as f64;
            prop_assert!(lower <= exact + 1e-12);
            prop_assert!(exact <= sdp.upper + 1e-12);
            prop_assert!(sdp.upper / lower <= Field::Real.pietsch_constant() + 1e-9);
            prop_assert!(lower >= gf.sqrt() - 1e-12 && sdp.upper <= gf + 1e-12);
        }
    }
}
