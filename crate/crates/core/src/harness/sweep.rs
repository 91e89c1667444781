//! Minimal-`M` searches and the `γ` versus `M` scatter.
//!
//! Every trial draws its own RNG from a SHA-256 hash of the master seed,
//! the structure label, the support key, `m` and the trial index, so the
//! results do not depend on thread scheduling or on which other records
//! are computed in the same run.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use super::output::{fmt_f64, Table};
use super::signal::draw_coefficients;
use crate::error::{Error, Result};
use crate::gamma::{penalty_gamma, Field, GammaEstimate, GammaMethod, GammaOptions};
use crate::grouping::{draw_uniform, singletons, GroupStructure, StructureLabel};
use crate::operators::{MeasurementEnsemble, SupportSet};
use crate::recovery::{basis_pursuit, nre, RecoveryProblem, SolverOptions};
use crate::CVector;

/// Hashes a master seed and a sequence of labels to a 64-bit seed.
pub fn derive_seed(master: u64, parts: &[&str]) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    for p in parts {
        h.update([0x1f]);
        h.update(p.as_bytes());
    }
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("32-byte digest"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    /// Ascending candidate values of `M`.
    pub m_grid: Vec<usize>,
    pub trials_per_m: usize,
    /// A trial succeeds when `NRE < success_nre`.
    pub success_nre: f64,
    /// Fraction of trials that must succeed, e.g. `0.99`, `0.98`, `0.95`.
    pub success_quota: f64,
    /// Redraw the coefficient values on the fixed support in every trial.
    pub fresh_coefficients: bool,
    /// Stop the trials at a given `m` once the quota is met or out of reach.
    /// Off by default so every tested `m` runs exactly `trials_per_m` trials.
    pub early_decision: bool,
    pub master_seed: u64,
    pub solver: SolverOptions,
}

impl SweepConfig {
    /// Multiples of `step` from `step` up to `n`.
    pub fn grid(step: usize, n: usize) -> Vec<usize> {
        (1..=n / step.max(1)).map(|i| i * step).collect()
    }

    /// Grid of multiples of `4g`, one trial count and quota, fresh
    /// coefficients, `NRE < 10⁻³`.
    pub fn new(n: usize, g: usize, trials_per_m: usize, success_quota: f64, master_seed: u64) -> Self {
        Self {
            m_grid: Self::grid(4 * g, n),
            trials_per_m,
            success_nre: 1e-3,
            success_quota,
            fresh_coefficients: true,
            early_decision: false,
            master_seed,
            solver: SolverOptions::default(),
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.m_grid.is_empty() {
            return Err(Error::Config("m_grid is empty".into()));
        }
        if self.m_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("m_grid must be strictly ascending".into()));
        }
        if self.m_grid[0] == 0 || *self.m_grid.last().unwrap() > n {
            return Err(Error::Config(format!("m_grid values must lie in 1..={n}")));
        }
        if self.trials_per_m == 0 {
            return Err(Error::Config("trials_per_m must be positive".into()));
        }
        if !(self.success_quota > 0.0 && self.success_quota <= 1.0) {
            return Err(Error::Config("success_quota must lie in (0, 1]".into()));
        }
        if self.success_nre.is_nan() || self.success_nre <= 0.0 {
            return Err(Error::Config("success_nre must be positive".into()));
        }
        Ok(())
    }

    /// Successes needed out of `trials_per_m`.
    pub fn required_successes(&self) -> usize {
        (self.success_quota * self.trials_per_m as f64 - 1e-9).ceil() as usize
    }
}

/// Smallest successful grid value, or saturation when none succeeded.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MMin {
    At(usize),
    Saturated,
}

impl MMin {
    pub fn value(self) -> Option<usize> {
        match self {
            MMin::At(m) => Some(m),
            MMin::Saturated => None,
        }
    }
}

impl fmt::Display for MMin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MMin::At(m) => write!(f, "{m}"),
            MMin::Saturated => f.write_str("saturated"),
        }
    }
}

impl FromStr for MMin {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "saturated" => Ok(MMin::Saturated),
            _ => s.parse().map(MMin::At).map_err(|_| Error::invalid(format!("bad m_min {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MStats {
    pub m: usize,
    pub trials: usize,
    pub successes: usize,
    pub success: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MinMResult {
    pub m_min: MMin,
    pub per_m: Vec<MStats>,
}

/// Outcome of one grouped recovery: draw `m/g` groups, recover, compare.
pub fn recovery_trial(
    e: &MeasurementEnsemble,
    gs: &GroupStructure,
    t: &SupportSet,
    c0: &CVector,
    m: usize,
    seed: u64,
    cfg: &SweepConfig,
) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let omega = draw_uniform(gs, m, &mut rng)?;
    let fresh;
    let c = if cfg.fresh_coefficients {
        fresh = draw_coefficients(t, &mut rng);
        &fresh
    } else {
        c0
    };
    let problem = RecoveryProblem::from_ensemble(e, &omega, c, cfg.solver)?;
    let result = basis_pursuit(&problem);
    nre(c, &result.c_hat)
}

fn run_trials(
    e: &MeasurementEnsemble,
    gs: &GroupStructure,
    t: &SupportSet,
    c0: &CVector,
    m: usize,
    support_key: &str,
    cfg: &SweepConfig,
) -> Result<MStats> {
    let label = gs.label().to_string();
    let m_key = m.to_string();
    let seed_of = |trial: usize| derive_seed(cfg.master_seed, &[&label, support_key, &m_key, &trial.to_string()]);
    let needed = cfg.required_successes();
    let batch = if cfg.early_decision { rayon::current_num_threads().max(1) } else { cfg.trials_per_m };
    let (mut done, mut successes) = (0, 0);
    while done < cfg.trials_per_m {
        let end = (done + batch).min(cfg.trials_per_m);
        let outcomes: Vec<f64> = (done..end)
            .into_par_iter()
            .map(|trial| recovery_trial(e, gs, t, c0, m, seed_of(trial), cfg))
            .collect::<Result<_>>()?;
        successes += outcomes.iter().filter(|&&x| x < cfg.success_nre).count();
        done = end;
        let failures = done - successes;
        if cfg.early_decision && (successes >= needed || failures > cfg.trials_per_m - needed) {
            break;
        }
    }
    Ok(MStats { m, trials: done, successes, success: successes >= needed })
}

/// Scans the grid upward and stops at the first `m` meeting the quota.
/// `support_key` distinguishes supports in the seed derivation.
pub fn find_min_m(
    e: &MeasurementEnsemble,
    gs: &GroupStructure,
    t: &SupportSet,
    c0: &CVector,
    cfg: &SweepConfig,
    support_key: &str,
) -> Result<MinMResult> {
    cfg.validate(e.n())?;
    if t.is_empty() {
        return Err(Error::ZeroSignal);
    }
    if let Some(&bad) = cfg.m_grid.iter().find(|&&m| m % gs.g() != 0) {
        return Err(Error::Divisibility { g: gs.g(), n: bad });
    }
    let mut per_m = Vec::new();
    for &m in &cfg.m_grid {
        let stats = run_trials(e, gs, t, c0, m, support_key, cfg)?;
        per_m.push(stats);
        if stats.success {
            return Ok(MinMResult { m_min: MMin::At(m), per_m });
        }
    }
    Ok(MinMResult { m_min: MMin::Saturated, per_m })
}

/// A fixed support with reference coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct SupportEntry {
    /// Short description, also used as the seed key.
    pub descriptor: String,
    pub t: SupportSet,
    pub c0: CVector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRecord {
    pub structure: StructureLabel,
    pub g: usize,
    pub support: String,
    pub t_size: usize,
    pub gamma: GammaEstimate,
    pub m_min: MMin,
    /// Minimal `M` of the singleton baseline under the same protocol.
    pub m0: MMin,
    pub trials: usize,
    pub seed: u64,
}

pub const RECORD_HEADER: [&str; 15] = [
    "structure",
    "g",
    "support",
    "t_size",
    "gamma",
    "gamma_lower",
    "gamma_upper",
    "gamma_exact",
    "gamma_method",
    "gamma_field",
    "gamma_degraded",
    "argmax_group",
    "m_min",
    "m0",
    "trials",
];

impl SweepRecord {
    fn row(&self) -> Vec<String> {
        vec![
            self.structure.to_string(),
            self.g.to_string(),
            self.support.clone(),
            self.t_size.to_string(),
            fmt_f64(self.gamma.value()),
            fmt_f64(self.gamma.lower),
            fmt_f64(self.gamma.upper),
            self.gamma.exact.map(fmt_f64).unwrap_or_default(),
            self.gamma.method.to_string(),
            match self.gamma.field {
                Field::Real => "real".into(),
                Field::Complex => "complex".into(),
            },
            self.gamma.degraded.to_string(),
            self.gamma.argmax_group.to_string(),
            self.m_min.to_string(),
            self.m0.to_string(),
            self.trials.to_string(),
        ]
    }

    fn from_row(row: &[String], seed: u64) -> Result<Self> {
        if row.len() != RECORD_HEADER.len() {
            return Err(Error::invalid(format!("expected {} columns, found {}", RECORD_HEADER.len(), row.len())));
        }
        let num = |s: &str| -> Result<f64> { s.parse().map_err(|_| Error::invalid(format!("bad number {s:?}"))) };
        let int = |s: &str| -> Result<usize> { s.parse().map_err(|_| Error::invalid(format!("bad integer {s:?}"))) };
        let field = match row[9].as_str() {
            "real" => Field::Real,
            "complex" => Field::Complex,
            other => return Err(Error::invalid(format!("bad field {other:?}"))),
        };
        Ok(Self {
            structure: row[0].parse()?,
            g: int(&row[1])?,
            support: row[2].clone(),
            t_size: int(&row[3])?,
            gamma: GammaEstimate {
                lower: num(&row[5])?,
                upper: num(&row[6])?,
                exact: if row[7].is_empty() { None } else { Some(num(&row[7])?) },
                method: row[8].parse::<GammaMethod>()?,
                argmax_group: int(&row[11])?,
                field,
                degraded: row[10].parse().map_err(|_| Error::invalid(format!("bad flag {:?}", row[10])))?,
            },
            m_min: row[12].parse()?,
            m0: row[13].parse()?,
            trials: int(&row[14])?,
            seed,
        })
    }
}

/// Sweep records as a table; the master seed goes in a trailing column.
pub fn records_table(records: &[SweepRecord]) -> Table {
    let mut header: Vec<&str> = RECORD_HEADER.to_vec();
    header.push("seed");
    let mut table = Table::new(&header);
    for r in records {
        let mut row = r.row();
        row.push(r.seed.to_string());
        table.push(row);
    }
    table
}

pub fn parse_records(csv_text: &str) -> Result<Vec<SweepRecord>> {
    let table = Table::read_csv(csv_text)?;
    let mut expected: Vec<String> = RECORD_HEADER.iter().map(|s| s.to_string()).collect();
    expected.push("seed".into());
    if table.header != expected {
        return Err(Error::invalid("unexpected sweep header"));
    }
    table
        .rows
        .iter()
        .map(|row| {
            let (last, rest) = row.split_last().ok_or_else(|| Error::invalid("empty row"))?;
            let seed = last.parse().map_err(|_| Error::invalid(format!("bad seed {last:?}")))?;
            SweepRecord::from_row(rest, seed)
        })
        .collect()
}

/// For every support and then every structure: `γ`, minimal `M`, and the
/// singleton baseline `M₀` (computed once per support).
pub fn scatter_gamma_vs_m(
    e: &MeasurementEnsemble,
    structures: &[GroupStructure],
    supports: &[SupportEntry],
    cfg: &SweepConfig,
    gamma_opts: &GammaOptions,
) -> Result<Vec<SweepRecord>> {
    let baseline = singletons(e.n())?;
    let mut records = Vec::with_capacity(structures.len() * supports.len());
    for s in supports {
        let m0 = find_min_m(e, &baseline, &s.t, &s.c0, cfg, &s.descriptor)?.m_min;
        for gs in structures {
            let gamma = penalty_gamma(e, &s.t, gs, gamma_opts)?;
            let m_min = if gs.label() == StructureLabel::Singletons {
                m0
            } else {
                find_min_m(e, gs, &s.t, &s.c0, cfg, &s.descriptor)?.m_min
            };
            records.push(SweepRecord {
                structure: gs.label(),
                g: gs.g(),
                support: s.descriptor.clone(),
                t_size: s.t.len(),
                gamma,
                m_min,
                m0,
                trials: cfg.trials_per_m,
                seed: cfg.master_seed,
            });
        }
    }
    Ok(records)
}
