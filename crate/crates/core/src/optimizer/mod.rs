//! Black-box search for one universal patch.

mod swarm;

pub use swarm::{pso_step, run_swarm, sphere_fitness, Particle, SearchSpace, SwarmConfig, SwarmOutcome, V_MAX};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attack::{AttackError, FrameView, PatchLayer, RasterCache, TargetDraw};
use crate::oracle::{check_scores, Oracle, OracleError};
use crate::patchgen::{edge_count, project_delta, BoundaryKind, PatchError, PatchTheta, DEFAULT_ANCHOR};
use crate::rng::{self, tag};
use crate::scene::SceneSample;
use crate::transforms::{EotConfig, TransformError};

#[derive(Debug, Error)]
pub enum OptimizeError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("particle has {found} coordinates, expected {expected}")]
    Length { expected: usize, found: usize },
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Patch(#[from] PatchError),
    #[error(transparent)]
    Transform(#[from] TransformError),
}

impl From<AttackError> for OptimizeError {
    fn from(e: AttackError) -> Self {
        match e {
            AttackError::Patch(e) => Self::Patch(e),
            AttackError::Transform(e) => Self::Transform(e),
        }
    }
}

impl OptimizeError {
    /// Whether rerunning against a fresh oracle connection may succeed.
    pub fn is_retriable(&self) -> bool {
        matches!(self, Self::Oracle(e) if e.is_retriable())
    }
}

/// Experiment constants of the patch; fixed during a search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PatchConsts {
    pub dim: usize,
    pub width_frac: f64,
    pub gray: f64,
    pub boundary_kind: BoundaryKind,
    /// Patch center height below the box top, as a fraction of box height.
    pub anchor: f64,
}

impl Default for PatchConsts {
    fn default() -> Self {
        Self {
            dim: 6,
            width_frac: 0.25,
            gray: 0.0,
            boundary_kind: BoundaryKind::Bezier,
            anchor: DEFAULT_ANCHOR,
        }
    }
}

impl PatchConsts {
    pub fn validate(&self) -> Result<(), String> {
        if self.dim == 0 {
            return Err("dim must be at least 1".into());
        }
        if !(self.width_frac > 0.0 && self.width_frac <= 1.0) {
            return Err(format!("width_frac {} outside (0, 1]", self.width_frac));
        }
        if !(0.0..=1.0).contains(&self.gray) {
            return Err(format!("gray {} outside [0, 1]", self.gray));
        }
        if !(0.0..=1.0).contains(&self.anchor) {
            return Err(format!("anchor {} outside [0, 1]", self.anchor));
        }
        Ok(())
    }
}

/// Builds the patch a particle stands for: the first `2D(D+1)` coordinates
/// are projected into edge offsets, the remaining `D^2` become mask bits
/// (`logit >= 0.5`, row-major).
pub fn decode(position: &[f64], consts: &PatchConsts, tau: f64) -> Result<PatchTheta, OptimizeError> {
    let dim = consts.dim;
    let n_edges = edge_count(dim);
    let expected = n_edges + dim * dim;
    if position.len() != expected {
        return Err(OptimizeError::Length {
            expected,
            found: position.len(),
        });
    }
    let mut theta = PatchTheta::regular(dim, consts.width_frac, consts.gray, consts.boundary_kind);
    for (d, &x) in theta.deltas.iter_mut().zip(&position[..n_edges]) {
        *d = project_delta(x, tau);
    }
    for (k, &logit) in position[n_edges..].iter().enumerate() {
        theta.mask[k / dim][k % dim] = u8::from(logit >= 0.5);
    }
    Ok(theta)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitnessReport {
    pub mean_objectness: f64,
    pub fitness: f64,
    /// Mean objectness of each sample over its boxes and draws.
    pub per_sample: Vec<f64>,
}

impl FitnessReport {
    fn from_scores(per_query: Vec<Vec<f64>>) -> Self {
        let total: usize = per_query.iter().map(Vec::len).sum();
        let sum: f64 = per_query.iter().flatten().sum();
        let mean = (sum / total as f64).clamp(0.0, 1.0);
        Self {
            mean_objectness: mean,
            fitness: 1.0 - mean,
            per_sample: per_query
                .iter()
                .map(|s| s.iter().sum::<f64>() / s.len() as f64)
                .collect(),
        }
    }
}

/// Universal fitness of `theta`: one minus the mean objectness over every
/// ground-truth box of every sample and `eot.draws_per_eval` transform
/// draws. Draw `j` of box `b` in sample `i` uses the stream
/// `(seed, stream_prefix.., i, b, j)`.
pub fn fitness(
    theta: &PatchTheta,
    dataset: &[SceneSample],
    oracle: &(impl Oracle + ?Sized),
    eot: &EotConfig,
    anchor: f64,
    seed: u64,
    stream_prefix: &[u64],
) -> Result<FitnessReport, OptimizeError> {
    if dataset.is_empty() {
        return Err(OptimizeError::EmptyDataset);
    }
    eot.validate()?;
    let draws = eot.draws_per_eval.max(1);
    let rasters = RasterCache::build(theta, dataset.iter().flat_map(|s| &s.boxes))?;
    let per_sample = dataset
        .par_iter()
        .enumerate()
        .map(|(i, sample)| -> Result<Vec<f64>, OptimizeError> {
            let (w, h) = (sample.image.width(), sample.image.height());
            let mut scores = Vec::with_capacity(sample.boxes.len() * draws);
            for (b, target) in sample.boxes.iter().enumerate() {
                for j in 0..draws {
                    let mut path = stream_prefix.to_vec();
                    path.extend([i as u64, b as u64, j as u64]);
                    let mut rng = rng::stream(seed, &path);
                    let draw = TargetDraw::sample(&mut rng, Some(eot), target, w, h)?;
                    let layer = PatchLayer::new(theta, &rasters, target, &draw, anchor)?;
                    let frame = FrameView::new(&sample.image, target, Some(&layer), &draw);
                    let s = oracle.score_source(&frame, &[draw.moved])?;
                    check_scores(&s)?;
                    scores.extend(s);
                }
            }
            Ok(scores)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(FitnessReport::from_scores(per_sample))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizeResult {
    #[serde(rename = "theta")]
    pub best_theta: PatchTheta,
    pub best_fitness: f64,
    pub history: Vec<f64>,
    pub initial_mean_fitness: f64,
}

impl OptimizeResult {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("result serializes") + "\n"
    }
}

/// Searches for the patch minimizing mean objectness over `dataset`.
/// `observe(iteration, decoded_thetas, fitness)` runs after every round.
pub fn optimize_observed(
    dataset: &[SceneSample],
    oracle: &(impl Oracle + ?Sized),
    cfg: &SwarmConfig,
    eot: &EotConfig,
    consts: &PatchConsts,
    mut observe: impl FnMut(usize, &[PatchTheta], &[f64]),
) -> Result<OptimizeResult, OptimizeError> {
    if dataset.is_empty() {
        return Err(OptimizeError::EmptyDataset);
    }
    cfg.validate().map_err(OptimizeError::Config)?;
    consts.validate().map_err(OptimizeError::Config)?;
    eot.validate()?;
    let space = SearchSpace::for_grid(consts.dim, cfg.tau);
    let evaluate = |k: usize, x: &[f64]| -> Result<f64, OptimizeError> {
        let theta = decode(x, consts, cfg.tau)?;
        let r = fitness(&theta, dataset, oracle, eot, consts.anchor, cfg.seed, &[tag::FITNESS, k as u64])?;
        Ok(r.fitness)
    };
    let outcome = run_swarm(&space, cfg, evaluate, |it, particles, f| {
        let thetas: Vec<PatchTheta> = particles
            .iter()
            .map(|p| decode(&p.position, consts, cfg.tau).expect("layout matches"))
            .collect();
        observe(it, &thetas, f);
    })?;
    Ok(OptimizeResult {
        best_theta: decode(&outcome.best_position, consts, cfg.tau)?,
        best_fitness: outcome.best_fitness,
        history: outcome.history,
        initial_mean_fitness: outcome.initial_mean_fitness,
    })
}

pub fn optimize(
    dataset: &[SceneSample],
    oracle: &(impl Oracle + ?Sized),
    cfg: &SwarmConfig,
    eot: &EotConfig,
    consts: &PatchConsts,
) -> Result<OptimizeResult, OptimizeError> {
    optimize_observed(dataset, oracle, cfg, eot, consts, |_, _, _| {})
}
