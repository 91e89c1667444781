//! Measurement-count bounds and Monte-Carlo checks of the two statements
//! that can be tested directly at small scale: concentration of the sampled
//! Gram matrix and the second-moment bound on off-support correlations.
//!
//! Logarithms are natural. The universal constant in the recovery bounds is
//! unknown and exposed as [`BoundQuery::constant`] (default 1).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gamma::{penalty_gamma, GammaEstimate, GammaOptions};
use crate::grouping::{draw_bernoulli, GroupStructure};
use crate::linalg;
use crate::operators::{MeasurementEnsemble, SupportSet};
use crate::recovery::offsupport_row;
use crate::{CMatrix, C64};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundQuery {
    pub n: usize,
    pub t_size: usize,
    pub mu: f64,
    pub gamma: f64,
    pub delta: f64,
    pub constant: f64,
}

impl BoundQuery {
    pub fn validate(&self) -> Result<()> {
        let positive = self.n > 0
            && self.t_size > 0
            && self.mu > 0.0
            && self.gamma > 0.0
            && self.delta > 0.0
            && self.constant > 0.0;
        if !positive || self.delta >= 1.0 {
            return Err(Error::invalid(format!("invalid bound query {self:?}")));
        }
        Ok(())
    }
}

/// `const · N μ² |T| ln(N/δ)`: independent uniform sampling.
pub fn bound_candes(q: &BoundQuery) -> f64 {
    q.constant * q.n as f64 * q.mu.powi(2) * q.t_size as f64 * (q.n as f64 / q.delta).ln()
}

/// `γ · const · μ³ N^{3/2} |T| ln(N/δ)`: grouped sampling.
pub fn bound_grouped(q: &BoundQuery) -> f64 {
    q.gamma * q.constant * q.mu.powi(3) * (q.n as f64).powf(1.5) * q.t_size as f64 * (q.n as f64 / q.delta).ln()
}

/// `(28/3) γ N μ² |T| ln(|T|/δ)`: sample size for the Gram matrix to stay
/// within 1/2 of the identity (after scaling by `N/M`) with probability
/// at least `1 − δ`.
pub fn bound_gram(q: &BoundQuery) -> f64 {
    28.0 / 3.0 * q.gamma * q.n as f64 * q.mu.powi(2) * q.t_size as f64 * (q.t_size as f64 / q.delta).ln()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConcentrationStats {
    /// `‖(N/M) A_ΩTᴴ A_ΩT − I‖` per trial.
    pub deviations: Vec<f64>,
    /// Fraction of trials with deviation `≥ 1/2`.
    pub fail_rate: f64,
    pub trials: usize,
}

impl ConcentrationStats {
    /// Binomial standard error of `fail_rate`.
    pub fn fail_rate_sigma(&self) -> f64 {
        (self.fail_rate * (1.0 - self.fail_rate) / self.trials.max(1) as f64).sqrt()
    }

    pub fn mean_deviation(&self) -> f64 {
        self.deviations.iter().sum::<f64>() / self.deviations.len().max(1) as f64
    }
}

fn trial_seeds<R: Rng + ?Sized>(trials: usize, rng: &mut R) -> Vec<u64> {
    (0..trials).map(|_| rng.random()).collect()
}

fn check_common(e: &MeasurementEnsemble, t: &SupportSet, gs: &GroupStructure, m: usize) -> Result<()> {
    if gs.n() != e.n() || t.n() != e.n() {
        return Err(Error::DimensionMismatch { expected: e.n(), found: gs.n() });
    }
    if m == 0 || m > e.n() {
        return Err(Error::invalid(format!("m must lie in 1..={}, got {m}", e.n())));
    }
    Ok(())
}

/// Spectral deviation of the rescaled sampled Gram matrix under the
/// Bernoulli group model, over `trials` independent draws.
pub fn validate_gram_concentration<R: Rng + ?Sized>(
    e: &MeasurementEnsemble,
    t: &SupportSet,
    gs: &GroupStructure,
    m: usize,
    trials: usize,
    rng: &mut R,
) -> Result<ConcentrationStats> {
    check_common(e, t, gs, m)?;
    let a_t = e.a().select_columns(t.indices());
    let scale = e.n() as f64 / m as f64;
    let deviations: Vec<f64> = trial_seeds(trials, rng)
        .into_par_iter()
        .map(|seed| -> Result<f64> {
            let mut trng = ChaCha8Rng::seed_from_u64(seed);
            let omega = draw_bernoulli(gs, m, &mut trng)?;
            let sub = a_t.select_rows(&omega.omega);
            let mut y = sub.adjoint() * &sub * C64::new(scale, 0.0);
            for i in 0..y.nrows() {
                y[(i, i)] -= C64::new(1.0, 0.0);
            }
            Ok(linalg::hermitian_norm(&y))
        })
        .collect::<Result<_>>()?;
    let fails = deviations.iter().filter(|&&d| d >= 0.5).count();
    Ok(ConcentrationStats { fail_rate: fails as f64 / trials.max(1) as f64, deviations, trials })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Lemma1Check {
    /// Monte-Carlo mean of `‖v⁰‖²`.
    pub empirical_mean: f64,
    /// `(M/√N) μ³ |T| γ` with `γ` taken from `gamma.lower`.
    pub bound: f64,
    pub gamma: GammaEstimate,
}

/// Empirical second moment of the off-support row `v⁰` of `A_Ωᴴ A_ΩT`
/// (centered by its expectation) under the Bernoulli group model, against
/// its closed-form bound. The bound uses the certified lower end of the `γ`
/// estimate, which only makes the comparison stricter.
pub fn validate_lemma1<R: Rng + ?Sized>(
    e: &MeasurementEnsemble,
    t: &SupportSet,
    gs: &GroupStructure,
    m: usize,
    t0: usize,
    trials: usize,
    rng: &mut R,
) -> Result<Lemma1Check> {
    check_common(e, t, gs, m)?;
    if t.contains(t0) {
        return Err(Error::invalid(format!("t0 = {t0} lies in the support")));
    }
    if t0 >= e.n() {
        return Err(Error::IndexOutOfRange { index: t0, bound: e.n() });
    }
    let gamma = penalty_gamma(e, t, gs, &GammaOptions { seed: rng.random(), ..Default::default() })?;
    let p = m as f64 / e.n() as f64;
    let all: Vec<usize> = (0..e.n()).collect();
    // zero up to round-off since the columns of A are orthonormal
    let expectation = offsupport_row(e, &all, t, t0)? * C64::new(p, 0.0);
    let squares: Vec<f64> = trial_seeds(trials, rng)
        .into_par_iter()
        .map(|seed| -> Result<f64> {
            let mut trng = ChaCha8Rng::seed_from_u64(seed);
            let omega = draw_bernoulli(gs, m, &mut trng)?;
            let v0 = offsupport_row(e, &omega.omega, t, t0)? - &expectation;
            Ok(v0.norm_squared())
        })
        .collect::<Result<_>>()?;
    let empirical_mean = squares.iter().sum::<f64>() / trials.max(1) as f64;
    let bound = m as f64 / (e.n() as f64).sqrt() * e.mu().powi(3) * t.len() as f64 * gamma.lower;
    Ok(Lemma1Check { empirical_mean, bound, gamma })
}

/// Closed-form `E‖v⁰‖²` under the Bernoulli model:
/// `p(1 − p) Σᵢ ‖Σ_{l∈Gᵢ} conj(A(l,t0)) A(l,T)‖²`.
pub fn lemma1_expectation(
    e: &MeasurementEnsemble,
    t: &SupportSet,
    gs: &GroupStructure,
    m: usize,
    t0: usize,
) -> Result<f64> {
    check_common(e, t, gs, m)?;
    let p = m as f64 / e.n() as f64;
    let mut total = 0.0;
    for group in gs.groups() {
        total += offsupport_row(e, group, t, t0)?.norm_squared();
    }
    Ok(p * (1.0 - p) * total)
}

/// `A_ΩT` for a given sample set.
pub fn sampled_support_matrix(e: &MeasurementEnsemble, omega: &[usize], t: &SupportSet) -> Result<CMatrix> {
    e.submatrix(omega, t)
}
