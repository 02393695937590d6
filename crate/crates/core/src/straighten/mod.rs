//! Simultaneous straightening of a minimal transverse bi-foliation.
//!
//! Stage one straightens `β` (suspension-type or horizontal-transverse)
//! through the conjugacy of its first return to a rotation. Stage two builds
//! `φ` on one dense `α`-leaf by sliding along the (now linear) `β`-lines onto
//! the line of the asymptotic direction, then extends to grid nodes from the
//! nearest leaf sample. The pipeline composes both and verifies the result.

mod holonomy;
mod projection;
mod suspension;
mod verify;

use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::circle::{CircleError, MinimalityReport, RotationEnclosure};
use crate::foliation::{
    grid_compose, grid_invert, transversality_margin, Foliation, FoliationError, GridHomeomorphism, HalfLine,
    TraceOptions,
};
use crate::geom::Vec2;
use crate::homology::{induced_h1, CycleError, CycleEstimate, IntMatrix};

pub use holonomy::{holonomy_straighten, simultaneous_straighten, HolonomyOutput};
pub use projection::{oblique_projection, ObliqueProjector};
pub use suspension::{straighten_suspension_beta, SuspensionOutput};
pub use verify::{verify_conjugacy, FoliationResidual, VerificationReport, VerifyOptions};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StraightenError {
    #[error("projection directions are parallel")]
    Parallel,
    #[error("beta must be linear for the holonomy stage")]
    BetaNotLinear,
    #[error("beta is not transverse to horizontal circles (margin {margin:.3e}); only suspension-type beta is handled")]
    BetaNotHandled { margin: f64 },
    #[error("transversality margin {margin:.3e} below threshold {threshold}")]
    Transversality { margin: f64, threshold: f64 },
    #[error("{which} first return fails the minimality check (max gap {max_gap:.3e})")]
    NonMinimal { which: &'static str, max_gap: f64 },
    #[error("leaf budget too small: extension gap {gap:.3e} exceeds 10ε = {limit:.3e}")]
    Coverage { gap: f64, limit: f64 },
    #[error("result acts non-trivially on H1: {0:?}")]
    NonTrivialH1(IntMatrix),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Cycle(#[from] CycleError),
    #[error(transparent)]
    Foliation(#[from] FoliationError),
    #[error(transparent)]
    Circle(#[from] CircleError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Setup,
    Suspension,
    Holonomy,
    Compose,
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("{stage:?} stage: {source}")]
pub struct PipelineError {
    pub stage: Stage,
    #[source]
    pub source: StraightenError,
}

trait Tag<T> {
    fn at(self, stage: Stage) -> Result<T, PipelineError>;
}

impl<T, E: Into<StraightenError>> Tag<T> for Result<T, E> {
    fn at(self, stage: Stage) -> Result<T, PipelineError> {
        self.map_err(|e| PipelineError {
            stage,
            source: e.into(),
        })
    }
}

/// Which halves of the basepoint leaf are traced.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LeafSides {
    Both,
    Forward,
    Backward,
}

#[derive(Clone, Debug, PartialEq, Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StraighteningParams {
    pub basepoint: Vec2,
    /// Arclength `L` traced on each side of the basepoint leaf.
    pub leaf_budget: f64,
    /// Output grid resolution `N`.
    pub resolution: usize,
    /// Accepted nearest-sample distance ε.
    pub epsilon: f64,
    pub transversality_threshold: f64,
    /// Sample grid for the transversality margin.
    pub margin_grid: usize,
    /// Orbit length for the conjugacy of the β first return.
    pub orbit_length: usize,
    /// Knot count of that conjugacy.
    pub conjugacy_resolution: usize,
    /// Section knots for first returns.
    pub section_knots: usize,
    /// Arclength budget per first return.
    pub section_budget: f64,
    /// Iterations of the rotation enclosure fixing the α direction.
    pub refine_iterations: i64,
    pub minimality_iterations: usize,
    pub minimality_epsilon: f64,
    /// Tracing step; `None` uses `1/(4N)`.
    pub max_step: Option<f64>,
    pub sides: LeafSides,
    pub verify_samples: usize,
    pub seed: u64,
}

impl Default for StraighteningParams {
    fn default() -> Self {
        StraighteningParams {
            basepoint: Vec2::ZERO,
            leaf_budget: 2000.0,
            resolution: 256,
            epsilon: 0.01,
            transversality_threshold: 0.05,
            margin_grid: 64,
            orbit_length: 1 << 21,
            conjugacy_resolution: 1024,
            section_knots: 4096,
            section_budget: 16.0,
            refine_iterations: 10_000_000,
            minimality_iterations: 100_000,
            minimality_epsilon: 1e-3,
            max_step: None,
            sides: LeafSides::Both,
            verify_samples: 64,
            seed: 0,
        }
    }
}

impl StraighteningParams {
    pub fn trace_options(&self) -> TraceOptions {
        match self.max_step {
            Some(h) => TraceOptions { max_step: h },
            None => TraceOptions::for_resolution(self.resolution),
        }
    }

    pub fn validate(&self) -> Result<(), StraightenError> {
        let bad = |m: &str| Err(StraightenError::InvalidParams(m.to_string()));
        if !self.basepoint.is_finite() {
            return bad("basepoint must be finite");
        }
        if !(self.leaf_budget > 0.0 && self.leaf_budget.is_finite()) {
            return bad("leaf_budget must be positive");
        }
        if self.resolution < 4 {
            return bad("resolution must be at least 4");
        }
        if !(self.epsilon > 0.0) {
            return bad("epsilon must be positive");
        }
        if !(0.0..=1.0).contains(&self.transversality_threshold) {
            return bad("transversality_threshold must lie in [0, 1]");
        }
        if self.section_knots < 8 || self.margin_grid < 1 {
            return bad("section_knots >= 8 and margin_grid >= 1 required");
        }
        if self.refine_iterations < 1 || self.minimality_iterations < 2 {
            return bad("iteration counts must be positive");
        }
        if let Some(h) = self.max_step {
            if !(h > 0.0 && h <= 0.25) {
                return bad("max_step must lie in (0, 1/4]");
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "flag", rename_all = "snake_case")]
pub enum QualityFlag {
    /// Some grid node is farther than ε from every traced sample.
    GapAboveEpsilon { gap: f64, epsilon: f64 },
    /// ε below the `2/L` coverage heuristic.
    EpsilonBelowHeuristic { epsilon: f64, heuristic: f64 },
    /// The refined α direction left the bound of the coarse cycle estimate.
    CycleRefinementDisagrees { angle: f64, bound: f64 },
    /// The final verification failed.
    VerificationFailed,
}

/// Diagnostics of a straightening run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QualityReport {
    pub max_gap: f64,
    pub mean_gap: f64,
    pub samples: usize,
    /// `|Φ(p) − p|`.
    pub basepoint_residual: f64,
    pub induced_h1: IntMatrix,
    pub h1_identity: bool,
    pub transversality_margin: f64,
    pub alpha_direction: HalfLine,
    pub beta_direction: HalfLine,
    /// Enclosure behind the α direction, absent for linear α.
    pub alpha_enclosure: Option<RotationEnclosure>,
    pub alpha_coarse_cycle: Option<CycleEstimate>,
    /// `max |(φ̃(x) − x) × dβ|` over leaf samples.
    pub fiber_residual: f64,
    pub flags: Vec<QualityFlag>,
}

/// Stage-one diagnostics.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SuspensionReport {
    pub translation: f64,
    pub enclosure: RotationEnclosure,
    pub conjugacy_residual: f64,
    pub minimality: MinimalityReport,
    pub direction: HalfLine,
    pub horizontal_margin: f64,
}

pub struct StraighteningResult {
    pub phi: GridHomeomorphism,
    pub quality: QualityReport,
    pub suspension: Option<SuspensionReport>,
    pub verification: VerificationReport,
}

impl StraighteningResult {
    /// True when no quality flag is raised.
    pub fn is_clean(&self) -> bool {
        self.quality.flags.is_empty()
    }
}

pub(crate) fn check_margin(alpha: &Foliation, beta: &Foliation, params: &StraighteningParams) -> Result<f64, StraightenError> {
    let margin = transversality_margin(alpha, beta, params.margin_grid);
    if margin < params.transversality_threshold {
        return Err(StraightenError::Transversality {
            margin,
            threshold: params.transversality_threshold,
        });
    }
    Ok(margin)
}

/// Full pipeline: `φ = φ₂ ∘ φ₁`, normalized by `φ(p) = p`, verified.
pub fn straighten_pipeline(
    alpha: &Foliation,
    beta: &Foliation,
    params: &StraighteningParams,
) -> Result<StraighteningResult, PipelineError> {
    params.validate().at(Stage::Setup)?;
    let margin = check_margin(alpha, beta, params).at(Stage::Setup)?;
    let p = params.basepoint;
    let n = params.resolution;

    let (phi1, d_beta, stage1, alpha1) = match beta.linear_direction() {
        Some(d) => (GridHomeomorphism::identity(n), d, None, alpha.clone()),
        None => {
            let s1 = straighten_suspension_beta(beta, params).at(Stage::Suspension)?;
            let map = Arc::new(s1.phi.clone());
            let inv = Arc::new(grid_invert(&map).at(Stage::Suspension)?);
            let alpha1 = Foliation::pushforward_with_inverse(alpha.clone(), map, inv);
            (s1.phi, s1.report.direction, Some(s1.report), alpha1)
        }
    };

    let source = phi1.apply(p);
    let s2 = holonomy_straighten(&alpha1, &d_beta, source, p, params).at(Stage::Holonomy)?;

    let composed = grid_compose(&s2.phi, &phi1).at(Stage::Compose)?;
    // resampling moves Φ(p) by the interpolation bias; translate it back
    let phi = composed.translated(p - composed.apply(p));
    let h1 = induced_h1(&phi);
    if !h1.is_identity() {
        return Err(PipelineError {
            stage: Stage::Compose,
            source: StraightenError::NonTrivialH1(h1),
        });
    }

    let verification = verify_conjugacy(
        &phi,
        alpha,
        beta,
        (s2.direction, d_beta),
        &VerifyOptions::from_params(params),
    );
    let mut flags = s2.flags;
    if !verification.pass {
        flags.push(QualityFlag::VerificationFailed);
    }
    let quality = QualityReport {
        max_gap: s2.max_gap,
        mean_gap: s2.mean_gap,
        samples: s2.samples,
        basepoint_residual: (phi.apply(p) - p).norm(),
        induced_h1: h1,
        h1_identity: true,
        transversality_margin: margin,
        alpha_direction: s2.direction,
        beta_direction: d_beta,
        alpha_enclosure: s2.enclosure,
        alpha_coarse_cycle: s2.coarse_cycle,
        fiber_residual: s2.fiber_residual,
        flags,
    };
    Ok(StraighteningResult {
        phi,
        quality,
        suspension: stage1,
        verification,
    })
}
