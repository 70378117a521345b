//! Particle swarm over the mixed delta / mask-logit search space.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::patchgen::{edge_count, project_delta, TAU};
use crate::rng::{self, tag};

/// Velocity bound per coordinate.
pub const V_MAX: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SwarmConfig {
    pub pop: usize,
    pub iters: usize,
    pub inertia: f64,
    pub cognitive: f64,
    pub social: f64,
    pub r1: f64,
    pub r2: f64,
    /// Redraw `r1`, `r2` uniformly per coordinate and step instead of using
    /// the fixed values.
    pub random_factors: bool,
    pub seed: u64,
    pub tau: f64,
}

impl Default for SwarmConfig {
    fn default() -> Self {
        Self {
            pop: 50,
            iters: 10,
            inertia: 0.9,
            cognitive: 1.6,
            social: 1.4,
            r1: 0.5,
            r2: 0.5,
            random_factors: false,
            seed: 0,
            tau: TAU,
        }
    }
}

impl SwarmConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.pop < 2 {
            return Err(format!("pop must be at least 2, got {}", self.pop));
        }
        if self.iters < 1 {
            return Err("iters must be at least 1".into());
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(format!("tau must be positive, got {}", self.tau));
        }
        let coeffs = [self.inertia, self.cognitive, self.social, self.r1, self.r2];
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err("swarm coefficients must be finite".into());
        }
        Ok(())
    }
}

/// Layout of a particle: `n_deltas` edge offsets bounded by `tau`, then
/// `n_logits` mask logits in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchSpace {
    pub n_deltas: usize,
    pub n_logits: usize,
    pub tau: f64,
}

impl SearchSpace {
    pub fn for_grid(dim: usize, tau: f64) -> Self {
        Self {
            n_deltas: edge_count(dim),
            n_logits: dim * dim,
            tau,
        }
    }

    pub fn len(&self) -> usize {
        self.n_deltas + self.n_logits
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn bounds(&self, i: usize) -> (f64, f64) {
        if i < self.n_deltas {
            (-self.tau, self.tau)
        } else {
            (0.0, 1.0)
        }
    }

    /// Feasibility projection: deltas through the radial threshold, logits
    /// clamped.
    pub fn project(&self, x: &mut [f64]) {
        let (deltas, logits) = x.split_at_mut(self.n_deltas);
        for d in deltas {
            *d = project_delta(*d, self.tau);
        }
        for l in logits {
            *l = if l.is_nan() { 0.0 } else { l.clamp(0.0, 1.0) };
        }
    }

    pub fn sample(&self, rng: &mut impl Rng) -> Vec<f64> {
        (0..self.len())
            .map(|i| {
                let (lo, hi) = self.bounds(i);
                lo + (hi - lo) * rng.random::<f64>()
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Particle {
    pub position: Vec<f64>,
    pub velocity: Vec<f64>,
    pub pbest_position: Vec<f64>,
    pub pbest_fitness: f64,
}

impl Particle {
    pub fn at_rest(position: Vec<f64>) -> Self {
        Self {
            velocity: vec![0.0; position.len()],
            pbest_position: position.clone(),
            position,
            pbest_fitness: f64::NEG_INFINITY,
        }
    }
}

/// One velocity and position update for every particle, in place.
///
/// `v <- w v + c1 r1 (pbest - x) + c2 r2 (gbest - x)`, `x <- x + v`, then
/// `x` is projected into the search space and `v` clamped to `V_MAX`.
/// `step` keys the factor redraws when `cfg.random_factors` is set.
pub fn pso_step(particles: &mut [Particle], gbest: &[f64], cfg: &SwarmConfig, space: &SearchSpace, step: usize) {
    for (k, p) in particles.iter_mut().enumerate() {
        debug_assert_eq!(p.position.len(), gbest.len());
        let mut factors = cfg
            .random_factors
            .then(|| rng::stream(cfg.seed, &[tag::SWARM_STEP, step as u64, k as u64]));
        for (i, &g) in gbest.iter().enumerate() {
            let (r1, r2) = match &mut factors {
                Some(r) => (r.random::<f64>(), r.random::<f64>()),
                None => (cfg.r1, cfg.r2),
            };
            let x = p.position[i];
            let v = cfg.inertia * p.velocity[i]
                + cfg.cognitive * r1 * (p.pbest_position[i] - x)
                + cfg.social * r2 * (g - x);
            p.position[i] = x + v;
            p.velocity[i] = v.clamp(-V_MAX, V_MAX);
        }
        space.project(&mut p.position);
    }
}

/// What one swarm run produced.
#[derive(Debug, Clone, PartialEq)]
pub struct SwarmOutcome {
    pub best_position: Vec<f64>,
    pub best_fitness: f64,
    /// Global-best fitness after each iteration.
    pub history: Vec<f64>,
    /// Mean fitness of the initial population.
    pub initial_mean_fitness: f64,
    pub evaluations: usize,
}

/// Maximizes `evaluate(particle_index, position)`. Evaluations within an
/// iteration run on the rayon pool and are merged in particle order, so the
/// outcome does not depend on the thread count. `observe` sees the swarm
/// and its fitness values after every evaluation round.
pub fn run_swarm<E: Send>(
    space: &SearchSpace,
    cfg: &SwarmConfig,
    evaluate: impl Fn(usize, &[f64]) -> Result<f64, E> + Sync,
    mut observe: impl FnMut(usize, &[Particle], &[f64]),
) -> Result<SwarmOutcome, E> {
    let mut init = rng::stream(cfg.seed, &[tag::SWARM_INIT]);
    let mut particles: Vec<Particle> = (0..cfg.pop).map(|_| Particle::at_rest(space.sample(&mut init))).collect();
    let mut gbest = particles[0].position.clone();
    let mut gbest_fitness = f64::NEG_INFINITY;
    let mut history = Vec::with_capacity(cfg.iters);
    let mut initial_mean_fitness = f64::NAN;
    let mut evaluations = 0;

    for it in 0..cfg.iters {
        let fitness: Vec<f64> = particles
            .par_iter()
            .enumerate()
            .map(|(k, p)| evaluate(k, &p.position))
            .collect::<Result<_, E>>()?;
        evaluations += fitness.len();
        if it == 0 {
            initial_mean_fitness = fitness.iter().sum::<f64>() / fitness.len() as f64;
        }
        for (p, &f) in particles.iter_mut().zip(&fitness) {
            if f > p.pbest_fitness {
                p.pbest_fitness = f;
                p.pbest_position.clone_from(&p.position);
            }
            if f > gbest_fitness {
                gbest_fitness = f;
                gbest.clone_from(&p.position);
            }
        }
        history.push(gbest_fitness);
        observe(it, &particles, &fitness);
        if it + 1 < cfg.iters {
            pso_step(&mut particles, &gbest, cfg, space, it);
        }
    }
    Ok(SwarmOutcome {
        best_position: gbest,
        best_fitness: gbest_fitness,
        history,
        initial_mean_fitness,
        evaluations,
    })
}

/// `1 - |x - x0|^2 / |hi - lo|^2` over the search box; 1 at the optimum.
pub fn sphere_fitness(space: &SearchSpace, x0: &[f64], x: &[f64]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..space.len() {
        let (lo, hi) = space.bounds(i);
        num += (x[i] - x0[i]).powi(2);
        den += (hi - lo).powi(2);
    }
    1.0 - num / den
}
