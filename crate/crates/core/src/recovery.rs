//! `ℓ1` recovery and the dual certificate.
//!
//! [`basis_pursuit`] solves `min ‖c‖₁ s.t. A_Ω c = y` over complex vectors
//! (the `ℓ1` norm is the sum of moduli) with the alternating direction
//! method of multipliers:
//!
//! ```text
//! x ← P(z − u)                  projection onto {x : A_Ω x = y}
//! x̂ ← αx + (1 − α)z             over-relaxation, α = 1.6
//! z ← shrink(x̂ + u, 1/ρ)        complex soft threshold
//! u ← u + x̂ − z
//! ```
//!
//! Each iteration costs `O(MN)`. Every few iterations the support of `z`,
//! cut at a few relative magnitudes, is polished by least squares and the scaled multiplier `ρu` is projected
//! onto the row space of `A_Ω` to obtain a dual feasible point, giving a
//! certified duality gap. The solve stops once the iterate is feasible and
//! either the gap or the change between successive iterates is below
//! tolerance.

use nalgebra::Cholesky;

use crate::error::{Error, Result};
use crate::grouping::SampleSet;
use crate::linalg::{self, l1_norm};
use crate::operators::{MeasurementEnsemble, SupportSet};
use crate::{CMatrix, CVector, C64};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Relative feasibility tolerance `‖A_Ω ĉ − y‖₂ / ‖y‖₂`.
    pub tol_feas: f64,
    /// Relative tolerance on the objective (certified duality gap).
    pub tol_obj: f64,
    pub max_iters: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tol_feas: 1e-8, tol_obj: 1e-6, max_iters: 20_000 }
    }
}

/// `min ‖c‖₁ s.t. A_Ω c = y`.
#[derive(Debug, Clone)]
pub struct RecoveryProblem {
    a_omega: CMatrix,
    y: CVector,
    pub options: SolverOptions,
}

impl RecoveryProblem {
    pub fn new(a_omega: CMatrix, y: CVector, options: SolverOptions) -> Result<Self> {
        if a_omega.nrows() != y.len() {
            return Err(Error::DimensionMismatch { expected: a_omega.nrows(), found: y.len() });
        }
        if a_omega.nrows() > a_omega.ncols() {
            return Err(Error::invalid(format!(
                "{} measurements exceed the {} unknowns",
                a_omega.nrows(),
                a_omega.ncols()
            )));
        }
        let finite = |z: &C64| z.re.is_finite() && z.im.is_finite();
        if !a_omega.iter().all(finite) || !y.iter().all(finite) {
            return Err(Error::NonFinite);
        }
        if !(options.tol_feas > 0.0 && options.tol_obj > 0.0) {
            return Err(Error::invalid("solver tolerances must be positive"));
        }
        Ok(Self { a_omega, y, options })
    }

    /// Measurements `y = A_Ω c₀` of a known coefficient vector.
    pub fn from_ensemble(
        e: &MeasurementEnsemble,
        omega: &SampleSet,
        c0: &CVector,
        options: SolverOptions,
    ) -> Result<Self> {
        if c0.len() != e.n() {
            return Err(Error::DimensionMismatch { expected: e.n(), found: c0.len() });
        }
        let a_omega = e.rows(&omega.omega)?;
        let y = &a_omega * c0;
        Self::new(a_omega, y, options)
    }

    pub fn a_omega(&self) -> &CMatrix {
        &self.a_omega
    }

    pub fn y(&self) -> &CVector {
        &self.y
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryResult {
    pub c_hat: CVector,
    /// `‖A_Ω ĉ − y‖₂ / ‖y‖₂` (absolute when `y = 0`).
    pub feas_residual: f64,
    /// `‖ĉ‖₁`.
    pub objective: f64,
    /// Certified lower bound on the optimal value.
    pub dual_bound: f64,
    pub iterations: usize,
    pub converged: bool,
    /// False when `A_Ω A_Ωᴴ` was numerically singular and regularized.
    pub full_row_rank: bool,
}

const CHECK_EVERY: usize = 10;
const POWER_ITERS: usize = 50;
const STEP_TOL: f64 = 1e-13;
/// Over-relaxation factor of the splitting iteration.
const RELAXATION: f64 = 1.6;
const BALANCE_EVERY: usize = 50;

struct Projector {
    a: CMatrix,
    /// `A_Ωᴴ (A_Ω A_Ωᴴ)⁻¹`
    pinv: CMatrix,
    full_row_rank: bool,
}

impl Projector {
    fn new(a: &CMatrix) -> Self {
        let m = a.nrows();
        let gram = a * a.adjoint();
        let (chol, full_row_rank) = match Cholesky::new(gram.clone()) {
            Some(c) if c.l().diagonal().iter().all(|d| d.re > 1e-10) => (c, true),
            _ => {
                let trace: f64 = gram.diagonal().iter().map(|z| z.re).sum();
                let eps = 1e-12 * (trace / m.max(1) as f64).max(1e-300);
                let reg = gram + CMatrix::identity(m, m) * C64::new(eps, 0.0);
                (Cholesky::new(reg).expect("regularized Gram matrix is positive definite"), false)
            }
        };
        let pinv = chol.solve(a).adjoint();
        Self { a: a.clone(), pinv, full_row_rank }
    }

    /// Closest point to `v` on `{x : A x = y}`.
    fn project(&self, v: &CVector, y: &CVector) -> CVector {
        let r = &self.a * v - y;
        v - &self.pinv * r
    }

    /// Component of `w` in the row space of `A`, written as `Aᴴ ν`; returns `ν`.
    fn row_space_coords(&self, w: &CVector) -> CVector {
        self.pinv.adjoint() * w
    }
}

fn shrink(v: &CVector, tau: f64) -> CVector {
    v.map(|z| {
        let r = z.norm();
        if r <= tau {
            C64::new(0.0, 0.0)
        } else {
            z * ((r - tau) / r)
        }
    })
}

fn residual(a: &CMatrix, c: &CVector, y: &CVector) -> f64 {
    let r = (a * c - y).norm();
    let ny = y.norm();
    if ny > 0.0 {
        r / ny
    } else {
        r
    }
}

/// Relative magnitude cut-offs defining the supports tried by [`polish`].
const POLISH_CUTS: [f64; 4] = [1e-9, 1e-6, 1e-3, 1e-2];

fn polish_support(z: &CVector, cut: f64) -> Vec<usize> {
    let scale = z.iter().fold(0.0f64, |acc, v| acc.max(v.norm()));
    if scale == 0.0 {
        return Vec::new();
    }
    (0..z.len()).filter(|&j| z[j].norm() > cut * scale).collect()
}

/// Least squares on `support`, if that support can explain `y`.
fn polish(a: &CMatrix, y: &CVector, support: &[usize]) -> Option<CVector> {
    if support.is_empty() || support.len() > a.nrows() {
        return None;
    }
    let a_s = a.select_columns(support);
    let normal = a_s.adjoint() * &a_s;
    let chol = Cholesky::new(normal)?;
    let coef = chol.solve(&(a_s.adjoint() * y));
    let mut c = CVector::zeros(a.ncols());
    for (k, &j) in support.iter().enumerate() {
        c[j] = coef[k];
    }
    Some(c)
}

/// Solves the basis pursuit program. Deterministic in its inputs.
pub fn basis_pursuit(p: &RecoveryProblem) -> RecoveryResult {
    let (a, y, opts) = (&p.a_omega, &p.y, p.options);
    let n = a.ncols();
    if a.nrows() == 0 || y.norm() == 0.0 {
        let c_hat = CVector::zeros(n);
        return RecoveryResult {
            feas_residual: residual(a, &c_hat, y),
            c_hat,
            objective: 0.0,
            dual_bound: 0.0,
            iterations: 0,
            converged: true,
            full_row_rank: true,
        };
    }

    let proj = Projector::new(a);
    let sigma = linalg::spectral_norm_power(a, POWER_ITERS).max(1e-300);
    let x_ls = &proj.pinv * y;
    // threshold tied to the data scale: scaling y scales every iterate
    let scale = (a.adjoint() * y).iter().fold(0.0f64, |acc, z| acc.max(z.norm())) / (sigma * sigma);
    let mut rho = 1.0 / (0.1 * scale.max(1e-300));

    let mut x = x_ls.clone();
    let mut z = x.clone();
    let mut u = CVector::zeros(n);

    let mut best = x_ls.clone();
    let mut best_obj = l1_norm(&best);
    let mut best_feas = residual(a, &best, y);
    let mut dual_bound = 0.0f64;
    let mut converged = false;
    let mut iterations = 0;
    let mut polished: [Vec<usize>; POLISH_CUTS.len()] = Default::default();

    for it in 1..=opts.max_iters {
        iterations = it;
        x = proj.project(&(&z - &u), y);
        let z_prev = z.clone();
        let x_hat = &x * C64::new(RELAXATION, 0.0) + &z * C64::new(1.0 - RELAXATION, 0.0);
        z = shrink(&(&x_hat + &u), 1.0 / rho);
        u += &x_hat - &z;

        let primal_res = (&x - &z).norm();
        let dual_res = rho * (&z - &z_prev).norm();
        // residual balancing; rescale the scaled multiplier with rho
        if it % BALANCE_EVERY == 0 {
            if primal_res > 10.0 * dual_res {
                rho *= 2.0;
                u /= C64::new(2.0, 0.0);
            } else if dual_res > 10.0 * primal_res {
                rho /= 2.0;
                u *= C64::new(2.0, 0.0);
            }
        }

        if it % CHECK_EVERY != 0 && it != opts.max_iters {
            continue;
        }

        let mut candidates = vec![x.clone()];
        for (cut, last) in POLISH_CUTS.iter().zip(polished.iter_mut()) {
            // the least-squares fit only depends on the support
            let support = polish_support(&z, *cut);
            if support != *last {
                candidates.extend(polish(a, y, &support));
                *last = support;
            }
        }
        for c in candidates {
            let feas = residual(a, &c, y);
            if feas <= opts.tol_feas {
                let obj = l1_norm(&c);
                if best_feas > opts.tol_feas || obj < best_obj {
                    best = c;
                    best_obj = obj;
                    best_feas = feas;
                }
            }
        }

        // dual point: ν with Aᴴν the row-space part of ρu, scaled into ‖·‖∞ ≤ 1
        let nu = proj.row_space_coords(&(&u * C64::new(rho, 0.0)));
        let pi = a.adjoint() * &nu;
        let pi_max = pi.iter().fold(0.0f64, |acc, z| acc.max(z.norm())).max(1.0);
        let dual_obj = nu.dotc(y).re / pi_max;
        dual_bound = dual_bound.max(dual_obj);

        let step = (&z - &z_prev).norm() / z.norm().max(1e-300);
        let gap_ok = best_obj - dual_bound <= opts.tol_obj * best_obj;
        let stalled = step <= STEP_TOL && primal_res <= STEP_TOL * z.norm();
        if best_feas <= opts.tol_feas && (gap_ok || stalled) {
            converged = true;
            break;
        }
    }

    RecoveryResult {
        c_hat: best,
        feas_residual: best_feas,
        objective: best_obj,
        dual_bound,
        iterations,
        converged,
        full_row_rank: proj.full_row_rank,
    }
}

/// Normalized recovery error `‖s − ŝ‖₂ / ‖s‖₂`.
pub fn nre(s_true: &CVector, s_hat: &CVector) -> Result<f64> {
    if s_true.len() != s_hat.len() {
        return Err(Error::DimensionMismatch { expected: s_true.len(), found: s_hat.len() });
    }
    let denom = s_true.norm();
    if denom == 0.0 {
        return Err(Error::ZeroSignal);
    }
    Ok((s_true - s_hat).norm() / denom)
}

/// Singular values of the Gram matrix below this count as non-invertible.
pub const INVERTIBLE_TOL: f64 = 1e-10;
/// `|π(t)| < 1` off the support is tested as `|π(t)| ≤ 1 − OFFSUPPORT_MARGIN`.
pub const OFFSUPPORT_MARGIN: f64 = 1e-9;
const SIGN_MATCH_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct CertificateReport {
    pub invertible: bool,
    /// Smallest singular value of `A_ΩTᴴ A_ΩT`.
    pub min_singular: f64,
    /// `π = A_Ωᴴ A_ΩT (A_ΩTᴴ A_ΩT)⁻¹ z`, absent when the Gram matrix is singular.
    pub pi: Option<CVector>,
    /// `max_{t ∉ T} |π(t)|`.
    pub max_offsupport: f64,
    /// `max_{t ∈ T} |π(t) − z(t)|`.
    pub sign_mismatch: f64,
    pub holds: bool,
}

/// Builds the candidate dual vector for support `t` with sign pattern `z`
/// (unit-modulus entries, one per index of `t`) and checks it.
pub fn dual_certificate(
    e: &MeasurementEnsemble,
    omega: &SampleSet,
    t: &SupportSet,
    z: &[C64],
) -> Result<CertificateReport> {
    if z.len() != t.len() {
        return Err(Error::DimensionMismatch { expected: t.len(), found: z.len() });
    }
    let singular = |min_singular: f64| CertificateReport {
        invertible: false,
        min_singular,
        pi: None,
        max_offsupport: f64::INFINITY,
        sign_mismatch: f64::INFINITY,
        holds: false,
    };
    if t.is_empty() {
        return Ok(singular(0.0));
    }
    let a_omega = e.rows(&omega.omega)?;
    let a_omega_t = a_omega.select_columns(t.indices());
    let gram = a_omega_t.adjoint() * &a_omega_t;
    let min_singular = linalg::hermitian_eigenvalues(&gram)[0].max(0.0);
    if omega.omega.len() < t.len() || min_singular <= INVERTIBLE_TOL {
        return Ok(singular(min_singular));
    }
    let z0 = CVector::from_column_slice(z);
    let Some(solved) = gram.lu().solve(&z0) else {
        return Ok(singular(min_singular));
    };
    let pi = a_omega.adjoint() * (&a_omega_t * solved);
    let mut max_offsupport = 0.0f64;
    let mut sign_mismatch = 0.0f64;
    let mut k = 0;
    for i in 0..pi.len() {
        if k < t.len() && t.indices()[k] == i {
            sign_mismatch = sign_mismatch.max((pi[i] - z0[k]).norm());
            k += 1;
        } else {
            max_offsupport = max_offsupport.max(pi[i].norm());
        }
    }
    let holds = max_offsupport <= 1.0 - OFFSUPPORT_MARGIN && sign_mismatch <= SIGN_MATCH_TOL;
    Ok(CertificateReport { invertible: true, min_singular, pi: Some(pi), max_offsupport, sign_mismatch, holds })
}

/// Row `t0` of `A_Ωᴴ A_ΩT`: `Σ_{l∈Ω} conj(A(l, t0)) A(l, T)`.
pub fn offsupport_row(e: &MeasurementEnsemble, omega: &[usize], t: &SupportSet, t0: usize) -> Result<CVector> {
    let n = e.n();
    if t0 >= n {
        return Err(Error::IndexOutOfRange { index: t0, bound: n });
    }
    let a = e.a();
    let mut v = CVector::zeros(t.len());
    for &l in omega {
        if l >= n {
            return Err(Error::IndexOutOfRange { index: l, bound: n });
        }
        let w = a[(l, t0)].conj();
        for (k, &col) in t.indices().iter().enumerate() {
            v[k] += w * a[(l, col)];
        }
    }
    Ok(v)
}

/// Unit-modulus sign pattern of `c` on `t`.
pub fn sign_pattern(c: &CVector, t: &SupportSet) -> Vec<C64> {
    t.indices().iter().map(|&i| linalg::phase_or(c[i], C64::new(1.0, 0.0))).collect()
}
