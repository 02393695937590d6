//! Configuration-driven front end: one command per invocation, a JSON report
//! on stdout and in the output directory, grids exported on request.

pub mod config;
pub mod report;

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::ValueEnum;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use thiserror::Error;

use crate::circle::{conjugacy_to_rotation, minimality_density, rotation_number_enclosure};
use crate::foliation::{first_return, write_grid, GridFormat, GridHomeomorphism, HalfLine, SectionOptions, TraceOptions};
use crate::geom::Vec2;
use crate::homology::{asymptotic_cycle, induced_h1};
use crate::rigidity::{affine_from_slope_data, find_affine_symmetries, rigidity_identity_check, EIGEN_TOL};
use crate::straighten::{straighten_pipeline, verify_conjugacy, QualityFlag, VerifyOptions};

pub use config::{Resolver, RunConfig, SCHEMA_VERSION};
pub use report::{sha256_hex, Inputs, Report, Status};

/// `φ` counts as the identity when every node moves less than this.
pub const IDENTITY_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Validation(String),
    #[error("{stage}: {message}")]
    Computation { stage: String, message: String },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    fn computation(stage: &str, e: impl std::fmt::Display) -> Self {
        CliError::Computation {
            stage: stage.to_string(),
            message: e.to_string(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Command {
    Rotnum,
    Cycle,
    FirstReturn,
    Straighten,
    Verify,
    Rigidity,
    Symmetries,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Rotnum => "rotnum",
            Command::Cycle => "cycle",
            Command::FirstReturn => "first-return",
            Command::Straighten => "straighten",
            Command::Verify => "verify",
            Command::Rigidity => "rigidity",
            Command::Symmetries => "symmetries",
        }
    }
}

/// Command-line overrides of the configuration.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
}

/// Write `φ` in the documented layout, atomically.
pub fn export_grid(phi: &GridHomeomorphism, path: &Path, format: GridFormat) -> Result<(), CliError> {
    let mut buf = Vec::new();
    write_grid(&mut buf, phi, format).map_err(|e| CliError::Io {
        path: path.to_path_buf(),
        source: std::io::Error::other(e.to_string()),
    })?;
    report::write_atomic(path, &buf)
}

struct Outcome {
    payload: Value,
    flags: Vec<Value>,
}

fn section<'a, T>(t: &'a Option<T>, name: &str) -> Result<&'a T, CliError> {
    t.as_ref()
        .ok_or_else(|| CliError::Validation(format!("missing [{name}] table")))
}

fn to_value<T: serde::Serialize>(t: &T) -> Value {
    serde_json::to_value(t).expect("payload serializes")
}

fn halfline(v: [f64; 2], what: &str) -> Result<HalfLine, CliError> {
    HalfLine::from_vector(Vec2::from(v)).map_err(|e| CliError::Validation(format!("{what}: {e}")))
}

fn trace_options(max_step: Option<f64>) -> Result<TraceOptions, CliError> {
    match max_step {
        None => Ok(TraceOptions::default()),
        Some(s) if s > 0.0 && s <= 0.25 => Ok(TraceOptions { max_step: s }),
        Some(s) => Err(CliError::Validation(format!("max_step {s} outside (0, 0.25]"))),
    }
}

/// Run one command. Failures are recorded in the report, never panicked on.
pub fn run_command(cfg: &RunConfig, config_text: &str, command: Command, ov: &Overrides) -> Report {
    let start = Instant::now();
    let seed = ov.seed.unwrap_or(cfg.seed);
    let mut report = Report::new(
        command.name(),
        Inputs {
            config_sha256: sha256_hex(config_text.as_bytes()),
            seed,
        },
    );
    let out_dir = ov.out_dir.clone().or_else(|| cfg.out_dir.as_ref().map(|d| cfg.base_dir.join(d)));
    match dispatch(cfg, command, seed, out_dir.as_deref()) {
        Ok(o) => {
            report.payload = o.payload;
            report.status = if o.flags.is_empty() { Status::Ok } else { Status::Degraded };
            report.quality_flags = o.flags;
        }
        Err(e) => report.fail(&e),
    }
    report.timing_ms = start.elapsed().as_secs_f64() * 1e3;
    report
}

fn dispatch(cfg: &RunConfig, command: Command, seed: u64, out_dir: Option<&Path>) -> Result<Outcome, CliError> {
    let mut r = Resolver::new(cfg);
    r.resolve_all()?;
    match command {
        Command::Rotnum => rotnum(cfg, &mut r),
        Command::Cycle => cycle(cfg, &mut r, seed),
        Command::FirstReturn => first_return_cmd(cfg, &mut r),
        Command::Straighten => straighten(cfg, &mut r, seed, out_dir),
        Command::Verify => verify(cfg, &mut r, seed),
        Command::Rigidity => rigidity(cfg),
        Command::Symmetries => symmetries(cfg),
    }
}

fn clean(payload: Value) -> Result<Outcome, CliError> {
    Ok(Outcome {
        payload,
        flags: Vec::new(),
    })
}

fn rotnum(cfg: &RunConfig, r: &mut Resolver) -> Result<Outcome, CliError> {
    let c = section(&cfg.rotnum, "rotnum")?;
    let f = r.circle(&c.map)?;
    let enc = rotation_number_enclosure(&f, c.iterations).map_err(|e| CliError::computation("rotnum", e))?;
    let mut payload = json!({
        "map": c.map,
        "family": f.family_name(),
        "shift": f.shift(),
        "enclosure": { "lo": enc.lo, "hi": enc.hi, "width": enc.width(), "iterations": enc.iterations },
        "reduced": to_value(&enc.reduced()),
    });
    if let Some(m) = &c.minimality {
        let rep = minimality_density(&f, 0.0, m.iterations, m.epsilon);
        payload["minimality"] = json!({ "max_gap": rep.max_gap, "epsilon": m.epsilon, "iterations": m.iterations, "pass": rep.pass });
    }
    if let Some(cj) = &c.conjugacy {
        let conj = conjugacy_to_rotation(&f, cj.orbit_length, cj.resolution)
            .map_err(|e| CliError::computation("conjugacy", e))?;
        payload["conjugacy"] = json!({
            "translation": conj.translation,
            "translation_enclosure": to_value(&conj.enclosure),
            "orbit_length": conj.orbit_length,
            "resolution": cj.resolution,
            "sup_residual": conj.residual(&f),
        });
    }
    clean(payload)
}

fn cycle(cfg: &RunConfig, r: &mut Resolver, seed: u64) -> Result<Outcome, CliError> {
    let c = section(&cfg.cycle, "cycle")?;
    let f = r.foliation(&c.foliation)?;
    let opts = trace_options(c.max_step)?;
    let mut points: Vec<Vec2> = c.points.iter().map(|&p| Vec2::from(p)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    points.extend((0..c.random_points).map(|_| Vec2::new(rng.gen(), rng.gen())));
    if points.is_empty() {
        return Err(CliError::Validation("cycle: no base points".into()));
    }
    let estimates = points
        .iter()
        .map(|&q| asymptotic_cycle(&f, q, c.t_max, &opts))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| CliError::computation("cycle", e))?;
    let mut max_excess = f64::NEG_INFINITY;
    for (i, a) in estimates.iter().enumerate() {
        for b in &estimates[i + 1..] {
            max_excess = max_excess.max(a.direction.angle_to(&b.direction) - (a.bound + b.bound));
        }
    }
    let agree = estimates.len() < 2 || max_excess <= 0.0;
    let list: Vec<Value> = points
        .iter()
        .zip(&estimates)
        .map(|(p, e)| {
            json!({
                "point": [p.x, p.y],
                "angle": e.direction.angle(),
                "estimate": to_value(e),
            })
        })
        .collect();
    let mut flags = Vec::new();
    if !agree {
        flags.push(json!({ "flag": "base_points_disagree", "excess": max_excess }));
    }
    Ok(Outcome {
        payload: json!({
            "foliation": c.foliation,
            "t_max": c.t_max,
            "max_step": opts.max_step,
            "estimates": list,
            "pairwise_agree": agree,
            "max_angle_minus_summed_bounds": if estimates.len() < 2 { Value::Null } else { json!(max_excess) },
        }),
        flags,
    })
}

fn first_return_cmd(cfg: &RunConfig, r: &mut Resolver) -> Result<Outcome, CliError> {
    let c = section(&cfg.first_return, "first_return")?;
    let f = r.foliation(&c.foliation)?;
    let opts = SectionOptions {
        knots: c.knots,
        budget: c.budget,
        trace: trace_options(c.max_step)?,
    };
    let fr = first_return(&f, c.section, &opts).map_err(|e| CliError::computation("first_return", e))?;
    let enc = rotation_number_enclosure(&fr.map, c.iterations).map_err(|e| CliError::computation("rotnum", e))?;
    clean(json!({
        "foliation": c.foliation,
        "section": to_value(&c.section),
        "knots": c.knots,
        "side": fr.side,
        "max_return_length": fr.max_return_length,
        "budget": c.budget,
        "enclosure": { "lo": enc.lo, "hi": enc.hi, "width": enc.width(), "iterations": enc.iterations },
        "reduced": to_value(&enc.reduced()),
    }))
}

fn grid_summary(phi: &GridHomeomorphism) -> Value {
    let mut bin = Vec::new();
    write_grid(&mut bin, phi, GridFormat::Binary).expect("in-memory write");
    let sup = phi.sup_displacement();
    json!({
        "resolution": phi.resolution(),
        "linear": to_value(&phi.linear()),
        "induced_h1": to_value(&induced_h1(phi)),
        "sup_displacement": sup,
        "identity": { "tolerance": IDENTITY_TOLERANCE, "holds": sup <= IDENTITY_TOLERANCE },
        "binary_sha256": sha256_hex(&bin),
    })
}

fn straighten(cfg: &RunConfig, r: &mut Resolver, seed: u64, out_dir: Option<&Path>) -> Result<Outcome, CliError> {
    let c = section(&cfg.straighten, "straighten")?;
    let (alpha, beta) = r.pair(&c.pair)?;
    let mut params = c.params.clone();
    params.seed = seed;
    let res = straighten_pipeline(&alpha, &beta, &params).map_err(|e| CliError::Computation {
        stage: format!("straighten/{}", to_value(&e.stage).as_str().unwrap_or("?")),
        message: e.source.to_string(),
    })?;
    let summary = grid_summary(&res.phi);
    let sup = res.phi.sup_displacement();
    let mut payload = json!({
        "pair": c.pair,
        "params": to_value(&params),
        "summary": if sup <= IDENTITY_TOLERANCE {
            format!("identity within {IDENTITY_TOLERANCE:e}")
        } else {
            format!("non-identity, sup displacement {sup:.3e}")
        },
        "phi": summary,
        "quality": to_value(&res.quality),
        "suspension": to_value(&res.suspension),
        "verification": to_value(&res.verification),
    });
    if let Some(t) = &c.truth {
        let inv = r.inverse(t)?;
        let d = res.phi.sup_distance(&inv);
        payload["truth"] = json!({ "inverse_of": t, "sup_distance": d });
    }
    if let Some(ex) = &c.export {
        let base = out_dir.map(Path::to_path_buf).unwrap_or_else(|| cfg.base_dir.clone());
        let path = base.join(&ex.path);
        export_grid(&res.phi, &path, ex.format)?;
        payload["export"] = json!({ "path": ex.path, "format": to_value(&ex.format) });
    }
    let flags = res.quality.flags.iter().map(to_value).collect();
    Ok(Outcome { payload, flags })
}

fn verify(cfg: &RunConfig, r: &mut Resolver, seed: u64) -> Result<Outcome, CliError> {
    let c = section(&cfg.verify, "verify")?;
    let (alpha, beta) = r.pair(&c.pair)?;
    let phi = r.grid(&c.phi)?;
    let targets = (halfline(c.targets[0], "verify.targets[0]")?, halfline(c.targets[1], "verify.targets[1]")?);
    let opts = VerifyOptions {
        n_samples: c.samples,
        seed,
        basepoint: Vec2::from(c.basepoint),
        tolerance: c.tolerance.unwrap_or(VerifyOptions::default().tolerance),
        ..Default::default()
    };
    let rep = verify_conjugacy(&phi, &alpha, &beta, targets, &opts);
    let flags = if rep.pass { Vec::new() } else { vec![to_value(&QualityFlag::VerificationFailed)] };
    Ok(Outcome {
        payload: json!({ "pair": c.pair, "phi": c.phi, "report": to_value(&rep) }),
        flags,
    })
}

fn rigidity(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let c = section(&cfg.rigidity, "rigidity")?;
    let auto = affine_from_slope_data(c.delta, c.delta_prime, c.a, c.a_prime, c.b, c.b_prime)
        .map_err(|e| CliError::Validation(format!("rigidity: {e}")))?;
    let verdict = rigidity_identity_check(&auto, c.require_origin_fixed);
    clean(json!({
        "automorphism": to_value(&auto),
        "verdict": to_value(&verdict),
        "tolerance": crate::rigidity::IDENTITY_TOL,
    }))
}

fn symmetries(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let c = section(&cfg.symmetries, "symmetries")?;
    let syms = find_affine_symmetries(c.delta, c.delta_prime, c.bound)
        .map_err(|e| CliError::Validation(format!("symmetries: {e}")))?;
    clean(json!({
        "delta": c.delta,
        "delta_prime": c.delta_prime,
        "bound": c.bound,
        "eigen_tolerance": EIGEN_TOL,
        "count": syms.len(),
        "matrices": syms.iter().map(|m| to_value(&m.rows())).collect::<Vec<_>>(),
    }))
}
