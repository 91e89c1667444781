//! JSON experiment configuration. Unknown keys are rejected everywhere.
//!
//! ```json
//! {
//!   "ensemble": { "measurement": "identity", "sparsity": "dft1d", "n": 220 },
//!   "structure": [ { "kind": "strided_1d", "g": 11 }, { "kind": "contiguous_1d", "g": 11 } ],
//!   "support": { "kind": "subband", "k": 11, "channels": 2, "channel_width_frac": 0.05, "draws": 10 },
//!   "sweep": { "trials_per_m": 20, "success_quota": 0.95 },
//!   "seeds": { "master": 7 }
//! }
//! ```

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use super::pgm;
use super::signal::{draw_coefficients, draw_support, image_to_sparse, synthetic_image, SupportModel};
use super::sweep::{derive_seed, SupportEntry, SweepConfig};
use crate::error::{Error, Result};
use crate::gamma::{GammaMode, GammaOptions, DEFAULT_ENUM_LIMIT, DEFAULT_RESTARTS};
use crate::grouping::{
    contiguous_1d, lines_2d, max_manhattan_2d, random_groups, rect_2d, singletons, spiral_2d, strided_1d,
    GroupStructure, Orientation,
};
use crate::operators::{BasisKind, MeasurementEnsemble, OrthonormalBasis, SupportSet};
use crate::recovery::SolverOptions;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub ensemble: EnsembleConfig,
    #[serde(default)]
    pub structure: Vec<StructureConfig>,
    pub support: Option<SupportConfig>,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub seeds: SeedsSection,
    #[serde(default)]
    pub bounds: BoundsSection,
    #[serde(default)]
    pub validate: ValidateSection,
    #[serde(default)]
    pub recover: RecoverSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisName {
    Identity,
    Dft1d,
    Dft2d,
    Haar2d,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleConfig {
    pub measurement: BasisName,
    pub sparsity: BasisName,
    pub n: Option<usize>,
    pub rows: Option<usize>,
    pub cols: Option<usize>,
    /// Haar levels; defaults to `log2(min(rows, cols))`.
    pub levels: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StructureKind {
    #[serde(rename = "strided_1d")]
    Strided1d,
    #[serde(rename = "contiguous_1d")]
    Contiguous1d,
    #[serde(rename = "vlines_2d")]
    Vlines2d,
    #[serde(rename = "hlines_2d")]
    Hlines2d,
    #[serde(rename = "rect_2d")]
    Rect2d,
    #[serde(rename = "spiral_2d")]
    Spiral2d,
    #[serde(rename = "cyclic_spiral_2d")]
    CyclicSpiral2d,
    #[serde(rename = "max_manhattan_2d")]
    MaxManhattan2d,
    RandomGroups,
    Singletons,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StructureConfig {
    pub kind: StructureKind,
    #[serde(default = "one")]
    pub g: usize,
    /// Only for `random_groups`; defaults to a hash of the master seed.
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SupportConfig {
    Unrestricted {
        k: usize,
        #[serde(default = "one")]
        draws: usize,
    },
    Subband {
        k: usize,
        channels: usize,
        channel_width_frac: f64,
        #[serde(default = "one")]
        draws: usize,
    },
    Explicit {
        indices: Vec<usize>,
    },
    Image {
        path: PathBuf,
        k: usize,
    },
    SyntheticImage {
        k: usize,
        #[serde(default = "one")]
        draws: usize,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub m_grid: Option<Vec<usize>>,
    /// Grid step when `m_grid` is absent; defaults to `4·lcm(g)`.
    pub step: Option<usize>,
    pub trials_per_m: usize,
    pub success_nre: f64,
    pub success_quota: f64,
    pub fresh_coefficients: bool,
    pub early_decision: bool,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            m_grid: None,
            step: None,
            trials_per_m: 100,
            success_nre: 1e-3,
            success_quota: 0.99,
            fresh_coefficients: true,
            early_decision: false,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub tol_feas: f64,
    pub tol_obj: f64,
    pub max_iters: usize,
    pub restarts: usize,
    pub enum_limit: usize,
    pub gamma_mode: GammaModeName,
}

impl Default for SolverSection {
    fn default() -> Self {
        let s = SolverOptions::default();
        Self {
            tol_feas: s.tol_feas,
            tol_obj: s.tol_obj,
            max_iters: s.max_iters,
            restarts: DEFAULT_RESTARTS,
            enum_limit: DEFAULT_ENUM_LIMIT,
            gamma_mode: GammaModeName::Auto,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GammaModeName {
    Exact,
    Sandwich,
    Auto,
    Full,
}

impl From<GammaModeName> for GammaMode {
    fn from(m: GammaModeName) -> Self {
        match m {
            GammaModeName::Exact => GammaMode::Exact,
            GammaModeName::Sandwich => GammaMode::Sandwich,
            GammaModeName::Auto => GammaMode::Auto,
            GammaModeName::Full => GammaMode::Full,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SeedsSection {
    pub master: u64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoundsSection {
    pub delta: f64,
    pub constant: f64,
}

impl Default for BoundsSection {
    fn default() -> Self {
        Self { delta: 0.05, constant: 1.0 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ValidateSection {
    /// Defaults to `{n/8, n/4, n/2, n}`.
    pub m_values: Option<Vec<usize>>,
    pub trials: usize,
    /// Off-support index for the correlation check; defaults to the
    /// smallest index outside the support.
    pub t0: Option<usize>,
}

impl Default for ValidateSection {
    fn default() -> Self {
        Self { m_values: None, trials: 500, t0: None }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RecoverSection {
    /// Defaults to the largest multiple of `g` not above `n/2`.
    pub m: Option<usize>,
    /// Where to write reconstructed images (2-D ensembles only).
    pub pgm_out: Option<PathBuf>,
}

fn one() -> usize {
    1
}

/// Everything a subcommand needs, built from a [`Config`].
#[derive(Debug, Clone)]
pub struct Setup {
    pub ensemble: MeasurementEnsemble,
    pub sparsity: OrthonormalBasis,
    pub shape: Option<(usize, usize)>,
    pub structures: Vec<GroupStructure>,
    pub supports: Vec<SupportEntry>,
    pub master_seed: u64,
}

impl Config {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    fn shape(&self) -> Result<(usize, Option<(usize, usize)>)> {
        let en = &self.ensemble;
        let shape = match (en.rows, en.cols) {
            (Some(r), Some(c)) => Some((r, c)),
            (None, None) => None,
            _ => return Err(Error::Config("ensemble needs both rows and cols".into())),
        };
        let n = match (en.n, shape) {
            (Some(n), Some((r, c))) if n != r * c => {
                return Err(Error::Config(format!("ensemble n = {n} but rows·cols = {}", r * c)))
            }
            (Some(n), _) => n,
            (None, Some((r, c))) => r * c,
            (None, None) => return Err(Error::Config("ensemble needs n or rows and cols".into())),
        };
        Ok((n, shape))
    }

    fn basis(&self, name: BasisName, n: usize, shape: Option<(usize, usize)>) -> Result<OrthonormalBasis> {
        let need_shape = || shape.ok_or_else(|| Error::Config(format!("{name:?} needs rows and cols")));
        let kind = match name {
            BasisName::Identity => BasisKind::Identity,
            BasisName::Dft1d => BasisKind::Dft1D,
            BasisName::Dft2d => {
                let (rows, cols) = need_shape()?;
                BasisKind::Dft2D { rows, cols }
            }
            BasisName::Haar2d => {
                let (rows, cols) = need_shape()?;
                match self.ensemble.levels {
                    Some(levels) => BasisKind::Haar2D { rows, cols, levels },
                    None => BasisKind::haar2d(rows, cols),
                }
            }
        };
        OrthonormalBasis::new(kind, n)
    }

    pub fn gamma_options(&self, master_seed: u64, mode: Option<GammaMode>) -> GammaOptions {
        GammaOptions {
            mode: mode.unwrap_or(self.solver.gamma_mode.into()),
            enum_limit: self.solver.enum_limit,
            restarts: self.solver.restarts,
            seed: derive_seed(master_seed, &["gamma"]),
        }
    }

    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions { tol_feas: self.solver.tol_feas, tol_obj: self.solver.tol_obj, max_iters: self.solver.max_iters }
    }

    /// The sweep protocol; the default grid step is `4·lcm` of the
    /// configured group sizes.
    pub fn sweep_config(&self, n: usize, structures: &[GroupStructure], master_seed: u64) -> Result<SweepConfig> {
        let s = &self.sweep;
        let lcm = structures.iter().map(|gs| gs.g()).fold(1, lcm);
        let m_grid = match (&s.m_grid, s.step) {
            (Some(grid), _) => grid.clone(),
            (None, Some(step)) => SweepConfig::grid(step, n),
            (None, None) => SweepConfig::grid(4 * lcm, n),
        };
        let cfg = SweepConfig {
            m_grid,
            trials_per_m: s.trials_per_m,
            success_nre: s.success_nre,
            success_quota: s.success_quota,
            fresh_coefficients: s.fresh_coefficients,
            early_decision: s.early_decision,
            master_seed,
            solver: self.solver_options(),
        };
        cfg.validate(n)?;
        Ok(cfg)
    }

    pub fn setup(&self, seed_override: Option<u64>) -> Result<Setup> {
        let master_seed = seed_override.unwrap_or(self.seeds.master);
        let (n, shape) = self.shape()?;
        let v = self.basis(self.ensemble.measurement, n, shape)?;
        let u = self.basis(self.ensemble.sparsity, n, shape)?;
        let ensemble = MeasurementEnsemble::new(&v, &u)?;
        let structures =
            self.structure.iter().map(|s| build_structure(s, n, shape, master_seed)).collect::<Result<Vec<_>>>()?;
        let supports = match &self.support {
            Some(sc) => build_supports(sc, n, shape, master_seed)?,
            None => Vec::new(),
        };
        Ok(Setup { ensemble, sparsity: u, shape, structures, supports, master_seed })
    }
}

fn lcm(a: usize, b: usize) -> usize {
    fn gcd(a: usize, b: usize) -> usize {
        if b == 0 {
            a
        } else {
            gcd(b, a % b)
        }
    }
    a / gcd(a, b) * b
}

pub fn build_structure(
    s: &StructureConfig,
    n: usize,
    shape: Option<(usize, usize)>,
    master_seed: u64,
) -> Result<GroupStructure> {
    let grid = || shape.ok_or_else(|| Error::Config(format!("{:?} needs ensemble rows and cols", s.kind)));
    match s.kind {
        StructureKind::Strided1d => strided_1d(n, s.g),
        StructureKind::Contiguous1d => contiguous_1d(n, s.g),
        StructureKind::Vlines2d => {
            let (r, c) = grid()?;
            lines_2d(r, c, s.g, Orientation::Vertical)
        }
        StructureKind::Hlines2d => {
            let (r, c) = grid()?;
            lines_2d(r, c, s.g, Orientation::Horizontal)
        }
        StructureKind::Rect2d => {
            let (r, c) = grid()?;
            rect_2d(r, c, s.g)
        }
        StructureKind::Spiral2d => {
            let (r, c) = grid()?;
            spiral_2d(r, c, s.g, false)
        }
        StructureKind::CyclicSpiral2d => {
            let (r, c) = grid()?;
            spiral_2d(r, c, s.g, true)
        }
        StructureKind::MaxManhattan2d => {
            let (r, c) = grid()?;
            max_manhattan_2d(r, c, s.g)
        }
        StructureKind::RandomGroups => {
            let seed = s.seed.unwrap_or_else(|| derive_seed(master_seed, &["random_groups"]));
            random_groups(n, s.g, seed)
        }
        StructureKind::Singletons => singletons(n),
    }
}

fn draw_rng(master_seed: u64, draw: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master_seed, &["support", &draw.to_string()]))
}

pub fn build_supports(
    sc: &SupportConfig,
    n: usize,
    shape: Option<(usize, usize)>,
    master_seed: u64,
) -> Result<Vec<SupportEntry>> {
    let random = |k: usize, draws: usize, model: SupportModel, name: String| -> Result<Vec<SupportEntry>> {
        (0..draws)
            .map(|d| {
                let mut rng = draw_rng(master_seed, d);
                let t = draw_support(n, k, &model, &mut rng)?;
                let c0 = draw_coefficients(&t, &mut rng);
                Ok(SupportEntry { descriptor: format!("{name}#{d}"), t, c0 })
            })
            .collect()
    };
    let image_shape = || shape.ok_or_else(|| Error::Config("image supports need ensemble rows and cols".into()));
    match sc {
        SupportConfig::Unrestricted { k, draws } => {
            random(*k, *draws, SupportModel::Unrestricted, "unrestricted".into())
        }
        SupportConfig::Subband { k, channels, channel_width_frac, draws } => random(
            *k,
            *draws,
            SupportModel::SubbandChannels { channel_count: *channels, channel_width_frac: *channel_width_frac },
            format!("subband:{channels}x{channel_width_frac}"),
        ),
        SupportConfig::Explicit { indices } => {
            let t = SupportSet::new(indices.clone(), n)?;
            let c0 = draw_coefficients(&t, &mut draw_rng(master_seed, 0));
            Ok(vec![SupportEntry { descriptor: "explicit".into(), t, c0 }])
        }
        SupportConfig::Image { path, k } => {
            let (rows, cols) = image_shape()?;
            let img = pgm::read_pgm(path)?;
            if img.shape() != (rows, cols) {
                return Err(Error::Config(format!(
                    "image is {}x{}, ensemble is {rows}x{cols}",
                    img.nrows(),
                    img.ncols()
                )));
            }
            let (t, c0) = image_to_sparse(&img, *k)?;
            let name = path.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default();
            Ok(vec![SupportEntry { descriptor: format!("image:{name}"), t, c0 }])
        }
        SupportConfig::SyntheticImage { k, draws } => {
            let (rows, cols) = image_shape()?;
            (0..*draws)
                .map(|d| {
                    let seed = derive_seed(master_seed, &["synthetic_image", &d.to_string()]);
                    let (t, c0) = image_to_sparse(&synthetic_image(rows, cols, seed), *k)?;
                    Ok(SupportEntry { descriptor: format!("synthetic_image#{d}"), t, c0 })
                })
                .collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIG1: &str = r#"{
        "ensemble": { "measurement": "identity", "sparsity": "dft1d", "n": 220 },
        "structure": [ { "kind": "strided_1d", "g": 11 }, { "kind": "contiguous_1d", "g": 11 } ],
        "support": { "kind": "subband", "k": 11, "channels": 2, "channel_width_frac": 0.05, "draws": 3 },
        "sweep": { "trials_per_m": 20, "success_quota": 0.95 },
        "seeds": { "master": 7 }
    }"#;

    #[test]
    fn parses_and_builds() {
        let cfg = Config::from_json(FIG1).unwrap();
        let setup = cfg.setup(None).unwrap();
        assert_eq!(setup.ensemble.n(), 220);
        assert_eq!(setup.structures.len(), 2);
        assert_eq!(setup.supports.len(), 3);
        assert_eq!(setup.supports[0].descriptor, "subband:2x0.05#0");
        let sweep = cfg.sweep_config(220, &setup.structures, 7).unwrap();
        assert_eq!(sweep.m_grid, vec![44, 88, 132, 176, 220]);
        assert_eq!(sweep.required_successes(), 19);
    }

    #[test]
    fn rejects_unknown_keys() {
        let bad = FIG1.replace("\"trials_per_m\"", "\"trials\"");
        assert!(matches!(Config::from_json(&bad), Err(Error::Config(_))));
        let bad = FIG1.replace("\"channels\"", "\"channel\"");
        assert!(Config::from_json(&bad).is_err());
        let bad = FIG1.replace("\"seeds\"", "\"seed\"");
        assert!(Config::from_json(&bad).is_err());
        let bad = FIG1.replace("\"g\": 11 }, {", "\"g\": 11, \"rows\": 3 }, {");
        assert!(Config::from_json(&bad).is_err());
    }

    #[test]
    fn rejects_inconsistent_dimensions() {
        let bad = FIG1.replace("\"n\": 220", "\"n\": 221");
        let cfg = Config::from_json(&bad).unwrap();
        assert!(cfg.setup(None).is_err());
        let two_d = r#"{ "ensemble": { "measurement": "identity", "sparsity": "haar2d", "n": 64 } }"#;
        assert!(Config::from_json(two_d).unwrap().setup(None).is_err());
    }

    #[test]
    fn seed_override_changes_supports() {
        let cfg = Config::from_json(FIG1).unwrap();
        let a = cfg.setup(None).unwrap();
        let b = cfg.setup(Some(8)).unwrap();
        let c = cfg.setup(Some(7)).unwrap();
        assert_ne!(a.supports[0].t, b.supports[0].t);
        assert_eq!(a.supports[0].t, c.supports[0].t);
    }

    #[test]
    fn image_ensemble() {
        let text = r#"{
            "ensemble": { "measurement": "identity", "sparsity": "haar2d", "rows": 8, "cols": 8 },
            "structure": [ { "kind": "max_manhattan_2d", "g": 4 }, { "kind": "random_groups", "g": 4 } ],
            "support": { "kind": "synthetic_image", "k": 6, "draws": 2 }
        }"#;
        let setup = Config::from_json(text).unwrap().setup(None).unwrap();
        assert_eq!(setup.ensemble.n(), 64);
        assert_eq!(setup.supports.len(), 2);
        assert!(setup.supports.iter().all(|s| s.t.len() <= 6));
    }
}
