//! Command-line entry point. Every subcommand reads a JSON config and
//! writes one CSV table to stdout or `--out`.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{Config, Setup};
use super::output::{fmt_f64, Table};
use super::pgm::write_pgm;
use super::signal::to_image;
use super::sweep::{derive_seed, records_table, scatter_gamma_vs_m};
use crate::bounds::{
    bound_candes, bound_gram, bound_grouped, validate_gram_concentration, validate_lemma1, BoundQuery,
};
use crate::error::{Error, Result};
use crate::gamma::{penalty_gamma, GammaMode};
use crate::grouping::{draw_uniform, GroupStructure};
use crate::recovery::{basis_pursuit, dual_certificate, nre, sign_pattern, RecoveryProblem};

#[derive(Debug, Parser)]
#[command(name = "grouped-sensing", version, about = "Grouped incoherent measurements for compressive sensing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// JSON experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// Overrides `seeds.master`.
    #[arg(long)]
    seed: Option<u64>,
    /// Write the CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (defaults to all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Penalty-factor mode: exact, sandwich, auto or full.
    #[arg(long)]
    mode: Option<GammaMode>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Check {
    /// Spectral deviation of the sampled Gram matrix.
    Gram,
    /// Second moment of the off-support correlation row.
    Lemma1,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Penalty factor for every structure and support.
    Gamma(Common),
    /// Minimal measurement counts and the singleton baseline.
    Sweep(Common),
    /// Measurement-count bounds.
    Bounds(Common),
    /// Monte-Carlo checks of the concentration statements.
    Validate {
        check: Check,
        #[command(flatten)]
        common: Common,
    },
    /// List the groups of each configured structure.
    GenGroups(Common),
    /// One grouped recovery per structure and support.
    Recover(Common),
}

/// Parses `args` (including the program name), runs the subcommand and
/// returns the process exit code.
pub fn run_cli<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            let sink: &mut dyn Write = if e.use_stderr() { stderr } else { stdout };
            let _ = sink.write_all(text.as_bytes());
            return e.exit_code();
        }
    };
    match dispatch(&cli.command, stdout) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            match e {
                Error::Config(_) | Error::Json(_) => 2,
                _ => 1,
            }
        }
    }
}

fn dispatch(command: &Command, stdout: &mut dyn Write) -> Result<()> {
    let common = match command {
        Command::Gamma(c) | Command::Sweep(c) | Command::Bounds(c) | Command::GenGroups(c) | Command::Recover(c) => c,
        Command::Validate { common, .. } => common,
    };
    let config = Config::load(&common.config)?;
    let run = || -> Result<Table> {
        let setup = config.setup(common.seed)?;
        if setup.structures.is_empty() {
            return Err(Error::Config("no structure configured".into()));
        }
        let needs_support = !matches!(command, Command::GenGroups(_));
        if needs_support && setup.supports.is_empty() {
            return Err(Error::Config("no support configured".into()));
        }
        match command {
            Command::Gamma(c) => gamma_table(&config, &setup, c.mode),
            Command::Sweep(c) => {
                let cfg = config.sweep_config(setup.ensemble.n(), &setup.structures, setup.master_seed)?;
                let opts = config.gamma_options(setup.master_seed, c.mode);
                let records = scatter_gamma_vs_m(&setup.ensemble, &setup.structures, &setup.supports, &cfg, &opts)?;
                Ok(records_table(&records))
            }
            Command::Bounds(c) => bounds_table(&config, &setup, c.mode),
            Command::Validate { check: Check::Gram, common } => gram_table(&config, &setup, common.mode),
            Command::Validate { check: Check::Lemma1, .. } => lemma1_table(&config, &setup),
            Command::GenGroups(_) => Ok(groups_table(&setup.structures)),
            Command::Recover(_) => recover_table(&config, &setup),
        }
    };
    let table = match common.threads {
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build()
            .map_err(|e| Error::invalid(e.to_string()))?
            .install(run)?,
        None => run()?,
    };
    match &common.out {
        Some(path) => table.write_csv(std::fs::File::create(path)?),
        None => table.write_csv(stdout),
    }
}

fn pairs(setup: &Setup) -> impl Iterator<Item = (usize, &GroupStructure, &super::sweep::SupportEntry)> {
    setup.supports.iter().enumerate().flat_map(move |(i, s)| setup.structures.iter().map(move |gs| (i, gs, s)))
}

fn gamma_table(config: &Config, setup: &Setup, mode: Option<GammaMode>) -> Result<Table> {
    let mut table = Table::new(&[
        "structure",
        "g",
        "support",
        "t_size",
        "mu",
        "gamma",
        "gamma_lower",
        "gamma_upper",
        "gamma_exact",
        "gamma_method",
        "argmax_group",
        "degraded",
    ]);
    let opts = config.gamma_options(setup.master_seed, mode);
    for (_, gs, s) in pairs(setup) {
        let est = penalty_gamma(&setup.ensemble, &s.t, gs, &opts)?;
        table.push(vec![
            gs.label().to_string(),
            gs.g().to_string(),
            s.descriptor.clone(),
            s.t.len().to_string(),
            fmt_f64(setup.ensemble.mu()),
            fmt_f64(est.value()),
            fmt_f64(est.lower),
            fmt_f64(est.upper),
            est.exact.map(fmt_f64).unwrap_or_default(),
            est.method.to_string(),
            est.argmax_group.to_string(),
            est.degraded.to_string(),
        ]);
    }
    Ok(table)
}

fn bounds_table(config: &Config, setup: &Setup, mode: Option<GammaMode>) -> Result<Table> {
    let mut table = Table::new(&[
        "structure",
        "g",
        "support",
        "n",
        "t_size",
        "mu",
        "gamma",
        "delta",
        "constant",
        "bound_candes",
        "bound_grouped",
        "bound_gram",
    ]);
    let opts = config.gamma_options(setup.master_seed, mode);
    let n = setup.ensemble.n();
    for (_, gs, s) in pairs(setup) {
        let gamma = penalty_gamma(&setup.ensemble, &s.t, gs, &opts)?.value();
        let q = BoundQuery {
            n,
            t_size: s.t.len(),
            mu: setup.ensemble.mu(),
            gamma,
            delta: config.bounds.delta,
            constant: config.bounds.constant,
        };
        q.validate().map_err(|e| Error::Config(e.to_string()))?;
        table.push(vec![
            gs.label().to_string(),
            gs.g().to_string(),
            s.descriptor.clone(),
            n.to_string(),
            q.t_size.to_string(),
            fmt_f64(q.mu),
            fmt_f64(gamma),
            fmt_f64(q.delta),
            fmt_f64(q.constant),
            fmt_f64(bound_candes(&q)),
            fmt_f64(bound_grouped(&q)),
            fmt_f64(bound_gram(&q)),
        ]);
    }
    Ok(table)
}

fn validate_rng(setup: &Setup, check: &str, gs: &GroupStructure, support: &str, m: usize) -> ChaCha8Rng {
    let label = gs.label().to_string();
    ChaCha8Rng::seed_from_u64(derive_seed(setup.master_seed, &[check, &label, support, &m.to_string()]))
}

fn m_values(config: &Config, n: usize) -> Vec<usize> {
    config.validate.m_values.clone().unwrap_or_else(|| vec![n / 8, n / 4, n / 2, n])
}

fn gram_table(config: &Config, setup: &Setup, mode: Option<GammaMode>) -> Result<Table> {
    let mut table = Table::new(&[
        "structure",
        "g",
        "support",
        "m",
        "trials",
        "fail_rate",
        "fail_rate_sigma",
        "mean_deviation",
        "max_deviation",
        "bound_gram",
    ]);
    let opts = config.gamma_options(setup.master_seed, mode);
    let n = setup.ensemble.n();
    for (_, gs, s) in pairs(setup) {
        let gamma = penalty_gamma(&setup.ensemble, &s.t, gs, &opts)?.value();
        let q = BoundQuery {
            n,
            t_size: s.t.len(),
            mu: setup.ensemble.mu(),
            gamma,
            delta: config.bounds.delta,
            constant: config.bounds.constant,
        };
        for m in m_values(config, n) {
            let mut rng = validate_rng(setup, "gram", gs, &s.descriptor, m);
            let stats = validate_gram_concentration(&setup.ensemble, &s.t, gs, m, config.validate.trials, &mut rng)?;
            let max_dev = stats.deviations.iter().copied().fold(0.0, f64::max);
            table.push(vec![
                gs.label().to_string(),
                gs.g().to_string(),
                s.descriptor.clone(),
                m.to_string(),
                stats.trials.to_string(),
                fmt_f64(stats.fail_rate),
                fmt_f64(stats.fail_rate_sigma()),
                fmt_f64(stats.mean_deviation()),
                fmt_f64(max_dev),
                fmt_f64(bound_gram(&q)),
            ]);
        }
    }
    Ok(table)
}

fn lemma1_table(config: &Config, setup: &Setup) -> Result<Table> {
    let mut table = Table::new(&[
        "structure",
        "g",
        "support",
        "m",
        "t0",
        "trials",
        "empirical_mean",
        "bound",
        "gamma_lower",
        "within_bound",
    ]);
    let n = setup.ensemble.n();
    for (_, gs, s) in pairs(setup) {
        let t0 = match config.validate.t0 {
            Some(t0) => t0,
            None => *s.t.complement().first().ok_or_else(|| Error::Config("support covers every index".into()))?,
        };
        for m in m_values(config, n) {
            let mut rng = validate_rng(setup, "lemma1", gs, &s.descriptor, m);
            let check = validate_lemma1(&setup.ensemble, &s.t, gs, m, t0, config.validate.trials, &mut rng)?;
            table.push(vec![
                gs.label().to_string(),
                gs.g().to_string(),
                s.descriptor.clone(),
                m.to_string(),
                t0.to_string(),
                config.validate.trials.to_string(),
                fmt_f64(check.empirical_mean),
                fmt_f64(check.bound),
                fmt_f64(check.gamma.lower),
                (check.empirical_mean <= check.bound).to_string(),
            ]);
        }
    }
    Ok(table)
}

fn groups_table(structures: &[GroupStructure]) -> Table {
    let mut table = Table::new(&["structure", "g", "group", "indices"]);
    for gs in structures {
        for (i, group) in gs.groups().iter().enumerate() {
            let indices: Vec<String> = group.iter().map(|x| x.to_string()).collect();
            table.push(vec![gs.label().to_string(), gs.g().to_string(), i.to_string(), indices.join(" ")]);
        }
    }
    table
}

fn pgm_path(base: &Path, single: bool, gs: &GroupStructure, support: usize) -> PathBuf {
    if single {
        return base.to_path_buf();
    }
    let stem = base.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    base.with_file_name(format!("{stem}-{}-{support}.pgm", gs.label()).replace(':', "_"))
}

fn recover_table(config: &Config, setup: &Setup) -> Result<Table> {
    let mut table = Table::new(&[
        "structure",
        "g",
        "support",
        "m",
        "nre",
        "feas_residual",
        "objective",
        "dual_bound",
        "iterations",
        "converged",
        "certificate_holds",
    ]);
    let n = setup.ensemble.n();
    let single = setup.structures.len() * setup.supports.len() == 1;
    for (i, gs, s) in pairs(setup) {
        let m = config.recover.m.unwrap_or(n / 2 / gs.g() * gs.g()).max(gs.g());
        let mut rng = validate_rng(setup, "recover", gs, &s.descriptor, m);
        let omega = draw_uniform(gs, m, &mut rng)?;
        let problem = RecoveryProblem::from_ensemble(&setup.ensemble, &omega, &s.c0, config.solver_options())?;
        let result = basis_pursuit(&problem);
        let cert = dual_certificate(&setup.ensemble, &omega, &s.t, &sign_pattern(&s.c0, &s.t))?;
        if let (Some(base), Some((rows, cols))) = (&config.recover.pgm_out, setup.shape) {
            let x_hat = setup.sparsity.entries() * &result.c_hat;
            write_pgm(&pgm_path(base, single, gs, i), &to_image(&x_hat, rows, cols))?;
        }
        table.push(vec![
            gs.label().to_string(),
            gs.g().to_string(),
            s.descriptor.clone(),
            m.to_string(),
            fmt_f64(nre(&s.c0, &result.c_hat)?),
            fmt_f64(result.feas_residual),
            fmt_f64(result.objective),
            fmt_f64(result.dual_bound),
            result.iterations.to_string(),
            result.converged.to_string(),
            cert.holds.to_string(),
        ]);
    }
    Ok(table)
}
