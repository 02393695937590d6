//! Run configuration: named circle maps, grid maps, foliations and pairs,
//! plus one optional table per command.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Deserialize;

use super::CliError;
use crate::circle::{arnold_with_translation, CircleLift};
use crate::foliation::{grid_compose, grid_invert, read_grid, Foliation, GridFormat, GridHomeomorphism, Section};
use crate::geom::Vec2;
use crate::straighten::StraighteningParams;

pub const SCHEMA_VERSION: u32 = 1;
const MAX_RESOLUTION: usize = 4096;

fn default_shift() -> i64 {
    0
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum CircleSpec {
    Rotation {
        theta: f64,
        #[serde(default = "default_shift")]
        shift: i64,
    },
    Arnold {
        theta: f64,
        k: f64,
        #[serde(default = "default_shift")]
        shift: i64,
    },
    /// Arnold map with parameter `k` tuned so its translation number is `target`.
    ArnoldTuned {
        k: f64,
        target: f64,
        #[serde(default = "default_tune_iterations")]
        iterations: i64,
    },
    Samples {
        knots: Vec<f64>,
        values: Vec<f64>,
        #[serde(default = "default_shift")]
        shift: i64,
    },
    /// Outermost first.
    Composition {
        parts: Vec<String>,
        #[serde(default = "default_shift")]
        shift: i64,
    },
    Inverse {
        of: String,
    },
}

fn default_tune_iterations() -> i64 {
    1_000_000
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GridSpec {
    Identity { resolution: usize },
    Translation { resolution: usize, c: [f64; 2] },
    /// `(x, y) ↦ (x + a sin 2πy, y)` followed by `(x, y) ↦ (x, y + b sin 2πx)`.
    Shear { resolution: usize, a: f64, b: f64 },
    DehnTwist {
        resolution: usize,
        #[serde(default = "default_lo")]
        lo: f64,
        #[serde(default = "default_hi")]
        hi: f64,
    },
    File { path: PathBuf, format: GridFormat },
    Inverse { of: String },
    /// `outer ∘ inner`.
    Compose { outer: String, inner: String },
}

fn default_lo() -> f64 {
    0.25
}

fn default_hi() -> f64 {
    0.75
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FoliationSpec {
    Linear {
        direction: [f64; 2],
        #[serde(default)]
        reversed: bool,
    },
    SuspensionH {
        map: String,
        #[serde(default)]
        reversed: bool,
    },
    SuspensionV {
        map: String,
        #[serde(default)]
        reversed: bool,
    },
    Pushforward {
        base: String,
        map: String,
        #[serde(default)]
        reversed: bool,
    },
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairSpec {
    pub alpha: String,
    pub beta: String,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConjugacySpec {
    pub orbit_length: usize,
    pub resolution: usize,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MinimalitySpec {
    pub iterations: usize,
    pub epsilon: f64,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RotnumCmd {
    pub map: String,
    pub iterations: i64,
    pub conjugacy: Option<ConjugacySpec>,
    pub minimality: Option<MinimalitySpec>,
}

fn default_points() -> Vec<[f64; 2]> {
    vec![[0.0, 0.0]]
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CycleCmd {
    pub foliation: String,
    #[serde(default = "default_points")]
    pub points: Vec<[f64; 2]>,
    /// Extra uniformly random base points drawn from the run seed.
    #[serde(default)]
    pub random_points: usize,
    pub t_max: f64,
    pub max_step: Option<f64>,
}

fn default_knots() -> usize {
    512
}

fn default_budget() -> f64 {
    16.0
}

fn default_fr_iterations() -> i64 {
    100_000
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FirstReturnCmd {
    pub foliation: String,
    pub section: Section,
    #[serde(default = "default_knots")]
    pub knots: usize,
    #[serde(default = "default_budget")]
    pub budget: f64,
    #[serde(default = "default_fr_iterations")]
    pub iterations: i64,
    pub max_step: Option<f64>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExportSpec {
    pub path: PathBuf,
    pub format: GridFormat,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StraightenCmd {
    pub pair: String,
    #[serde(default)]
    pub params: StraighteningParams,
    pub export: Option<ExportSpec>,
    /// Grid map whose inverse is the expected answer.
    pub truth: Option<String>,
}

fn default_samples() -> usize {
    64
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyCmd {
    pub pair: String,
    pub phi: String,
    pub targets: [[f64; 2]; 2],
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default)]
    pub basepoint: [f64; 2],
    pub tolerance: Option<f64>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RigidityCmd {
    pub delta: f64,
    pub delta_prime: f64,
    pub a: f64,
    pub a_prime: f64,
    pub b: f64,
    pub b_prime: f64,
    #[serde(default)]
    pub require_origin_fixed: bool,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SymmetriesCmd {
    pub delta: f64,
    pub delta_prime: f64,
    pub bound: i64,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub seed: u64,
    /// Default output directory.
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub circle: BTreeMap<String, CircleSpec>,
    #[serde(default)]
    pub grid: BTreeMap<String, GridSpec>,
    #[serde(default)]
    pub foliation: BTreeMap<String, FoliationSpec>,
    #[serde(default)]
    pub bifoliation: BTreeMap<String, PairSpec>,
    pub rotnum: Option<RotnumCmd>,
    pub cycle: Option<CycleCmd>,
    pub first_return: Option<FirstReturnCmd>,
    pub straighten: Option<StraightenCmd>,
    pub verify: Option<VerifyCmd>,
    pub rigidity: Option<RigidityCmd>,
    pub symmetries: Option<SymmetriesCmd>,
    /// Directory relative paths resolve against; not part of the file.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| invalid(format!("config: {e}")))?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(invalid(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                cfg.schema_version
            )));
        }
        cfg.check_ranges()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<(Self, String), CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((cfg, text))
    }

    fn check_ranges(&self) -> Result<(), CliError> {
        for (name, g) in &self.grid {
            let n = match g {
                GridSpec::Identity { resolution }
                | GridSpec::Translation { resolution, .. }
                | GridSpec::Shear { resolution, .. }
                | GridSpec::DehnTwist { resolution, .. } => Some(*resolution),
                _ => None,
            };
            if let Some(n) = n {
                if !(2..=MAX_RESOLUTION).contains(&n) {
                    return Err(invalid(format!("grid.{name}: resolution {n} outside 2..={MAX_RESOLUTION}")));
                }
            }
        }
        if let Some(c) = &self.rotnum {
            if c.iterations < 1 {
                return Err(invalid("rotnum.iterations must be >= 1"));
            }
        }
        if let Some(c) = &self.cycle {
            if !c.t_max.is_finite() || c.t_max < 0.0 {
                return Err(invalid("cycle.t_max must be finite and non-negative"));
            }
        }
        if let Some(c) = &self.first_return {
            if c.knots < 2 || c.iterations < 1 || !(c.budget > 0.0) {
                return Err(invalid("first_return: knots >= 2, iterations >= 1, budget > 0 required"));
            }
        }
        if let Some(c) = &self.straighten {
            c.params.validate().map_err(|e| invalid(format!("straighten.params: {e}")))?;
            if c.params.resolution > MAX_RESOLUTION {
                return Err(invalid("straighten.params.resolution too large"));
            }
        }
        if let Some(c) = &self.verify {
            if c.samples == 0 {
                return Err(invalid("verify.samples must be >= 1"));
            }
        }
        Ok(())
    }
}

/// Memoized construction of named objects with cycle detection.
pub struct Resolver<'a> {
    cfg: &'a RunConfig,
    circles: HashMap<String, CircleLift>,
    grids: HashMap<String, Arc<GridHomeomorphism>>,
    inverses: HashMap<String, Arc<GridHomeomorphism>>,
    foliations: HashMap<String, Foliation>,
    visiting: HashSet<String>,
}

impl<'a> Resolver<'a> {
    pub fn new(cfg: &'a RunConfig) -> Self {
        Resolver {
            cfg,
            circles: HashMap::new(),
            grids: HashMap::new(),
            inverses: HashMap::new(),
            foliations: HashMap::new(),
            visiting: HashSet::new(),
        }
    }

    fn enter(&mut self, key: String) -> Result<(), CliError> {
        if !self.visiting.insert(key.clone()) {
            return Err(invalid(format!("cyclic reference through {key}")));
        }
        Ok(())
    }

    pub fn circle(&mut self, name: &str) -> Result<CircleLift, CliError> {
        if let Some(c) = self.circles.get(name) {
            return Ok(c.clone());
        }
        let spec = self
            .cfg
            .circle
            .get(name)
            .ok_or_else(|| invalid(format!("unknown circle map '{name}'")))?
            .clone();
        let key = format!("circle.{name}");
        self.enter(key.clone())?;
        let bad = |e: crate::circle::CircleError| invalid(format!("{key}: {e}"));
        let lift = match spec {
            CircleSpec::Rotation { theta, shift } => CircleLift::rotation(theta).map_err(bad)?.shifted(shift),
            CircleSpec::Arnold { theta, k, shift } => CircleLift::arnold(theta, k).map_err(bad)?.shifted(shift),
            CircleSpec::ArnoldTuned { k, target, iterations } => {
                arnold_with_translation(k, target, iterations).map_err(bad)?
            }
            CircleSpec::Samples { knots, values, shift } => {
                CircleLift::from_samples(knots, values).map_err(bad)?.shifted(shift)
            }
            CircleSpec::Composition { parts, shift } => {
                if parts.is_empty() {
                    return Err(invalid(format!("{key}: empty composition")));
                }
                let mut acc: Option<CircleLift> = None;
                for p in parts.iter().rev() {
                    let next = self.circle(p)?;
                    acc = Some(match acc {
                        None => next,
                        Some(inner) => CircleLift::compose(&next, &inner),
                    });
                }
                acc.unwrap().shifted(shift)
            }
            CircleSpec::Inverse { of } => self.circle(&of)?.inverse(),
        };
        self.visiting.remove(&key);
        self.circles.insert(name.to_string(), lift.clone());
        Ok(lift)
    }

    pub fn grid(&mut self, name: &str) -> Result<Arc<GridHomeomorphism>, CliError> {
        if let Some(g) = self.grids.get(name) {
            return Ok(g.clone());
        }
        let spec = self
            .cfg
            .grid
            .get(name)
            .ok_or_else(|| invalid(format!("unknown grid map '{name}'")))?
            .clone();
        let key = format!("grid.{name}");
        self.enter(key.clone())?;
        let bad = |e: crate::foliation::FoliationError| invalid(format!("{key}: {e}"));
        let g = match spec {
            GridSpec::Identity { resolution } => GridHomeomorphism::identity(resolution),
            GridSpec::Translation { resolution, c } => GridHomeomorphism::translation(resolution, c.into()),
            GridSpec::Shear { resolution, a, b } => GridHomeomorphism::shear(resolution, a, b).map_err(bad)?,
            GridSpec::DehnTwist { resolution, lo, hi } => GridHomeomorphism::dehn_twist(resolution, lo, hi).map_err(bad)?,
            GridSpec::File { path, format } => {
                let path = self.cfg.base_dir.join(path);
                let mut f = std::fs::File::open(&path).map_err(|e| invalid(format!("{key}: {}: {e}", path.display())))?;
                read_grid(&mut f, format).map_err(|e| invalid(format!("{key}: {}: {e}", path.display())))?
            }
            GridSpec::Inverse { of } => {
                let inv = self.inverse(&of)?;
                (*inv).clone()
            }
            GridSpec::Compose { outer, inner } => {
                let (o, i) = (self.grid(&outer)?, self.grid(&inner)?);
                grid_compose(&o, &i).map_err(bad)?
            }
        };
        self.visiting.remove(&key);
        let g = Arc::new(g);
        self.grids.insert(name.to_string(), g.clone());
        Ok(g)
    }

    /// Numerical inverse of a named grid map (computation error on failure).
    pub fn inverse(&mut self, name: &str) -> Result<Arc<GridHomeomorphism>, CliError> {
        if let Some(g) = self.inverses.get(name) {
            return Ok(g.clone());
        }
        let g = self.grid(name)?;
        let inv = Arc::new(grid_invert(&g).map_err(|e| CliError::Computation {
            stage: "grid_invert".into(),
            message: format!("grid.{name}: {e}"),
        })?);
        self.inverses.insert(name.to_string(), inv.clone());
        Ok(inv)
    }

    pub fn foliation(&mut self, name: &str) -> Result<Foliation, CliError> {
        if let Some(f) = self.foliations.get(name) {
            return Ok(f.clone());
        }
        let spec = self
            .cfg
            .foliation
            .get(name)
            .ok_or_else(|| invalid(format!("unknown foliation '{name}'")))?
            .clone();
        let key = format!("foliation.{name}");
        self.enter(key.clone())?;
        let (f, reversed) = match spec {
            FoliationSpec::Linear { direction, reversed } => (
                Foliation::linear_from(Vec2::from(direction)).map_err(|e| invalid(format!("{key}: {e}")))?,
                reversed,
            ),
            FoliationSpec::SuspensionH { map, reversed } => (Foliation::suspension_h(self.circle(&map)?), reversed),
            FoliationSpec::SuspensionV { map, reversed } => (Foliation::suspension_v(self.circle(&map)?), reversed),
            FoliationSpec::Pushforward { base, map, reversed } => {
                let b = self.foliation(&base)?;
                let g = self.grid(&map)?;
                let inv = self.inverse(&map)?;
                (Foliation::pushforward_with_inverse(b, g, inv), reversed)
            }
        };
        let f = if reversed { f.reversed() } else { f };
        self.visiting.remove(&key);
        self.foliations.insert(name.to_string(), f.clone());
        Ok(f)
    }

    pub fn pair(&mut self, name: &str) -> Result<(Foliation, Foliation), CliError> {
        let spec = self
            .cfg
            .bifoliation
            .get(name)
            .ok_or_else(|| invalid(format!("unknown bifoliation '{name}'")))?
            .clone();
        Ok((self.foliation(&spec.alpha)?, self.foliation(&spec.beta)?))
    }

    /// Resolve every named object, surfacing dangling or cyclic references
    /// before any command runs.
    pub fn resolve_all(&mut self) -> Result<(), CliError> {
        let cfg = self.cfg;
        for name in cfg.circle.keys() {
            self.circle(name)?;
        }
        for (name, spec) in &cfg.grid {
            // inverses are computations, checked lazily
            if !matches!(spec, GridSpec::Inverse { .. }) {
                self.grid(name)?;
            }
        }
        for (name, spec) in &cfg.bifoliation {
            for r in [&spec.alpha, &spec.beta] {
                if !cfg.foliation.contains_key(r) {
                    return Err(invalid(format!("bifoliation.{name}: unknown foliation '{r}'")));
                }
            }
        }
        Ok(())
    }
}
