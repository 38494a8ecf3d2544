//! Exact branching-process simulator of Hawkes cascades via the cluster
//! representation: the seed event spawns Poisson(n*) offspring with delays
//! drawn from the memory kernel, recursively, breadth first. This is the
//! independent oracle behind every distributional claim in the crate.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use crate::borel::BranchingFactor;
use crate::cascade::Cascade;
use crate::error::Result;
use crate::kernel::KernelParams;

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub n_star: BranchingFactor,
    pub kernel: KernelParams,
    /// Hard cap on generated events; near-critical n* has heavy-tailed sizes.
    pub max_events: usize,
    pub seed: u64,
    /// Optional time cap; offspring past the horizon are dropped together
    /// with their subtrees.
    pub horizon: Option<f64>,
}

impl SimConfig {
    pub fn new(n_star: BranchingFactor, kernel: KernelParams, seed: u64) -> Self {
        Self { n_star, kernel, max_events: 1_000_000, seed, horizon: None }
    }
}

/// A simulated cascade plus branching-process instrumentation.
#[derive(Debug, Clone)]
pub struct SimOutcome {
    pub cascade: Cascade,
    /// True when generation stopped at `max_events`.
    pub truncated: bool,
    /// Event counts per generation (Z_0, Z_1, ...).
    pub generation_sizes: Vec<usize>,
}

/// Deterministic per-task RNG stream derived from a master seed; stream `i`
/// is independent of stream `j` for i != j.
pub fn rng_for_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn draw_offspring_count<R: Rng + ?Sized>(n_star: f64, rng: &mut R) -> u64 {
    if n_star == 0.0 {
        return 0;
    }
    let poi = Poisson::new(n_star).expect("n_star > 0");
    poi.sample(rng) as u64
}

fn poisson_sample<R: Rng + ?Sized>(lambda: f64, rng: &mut R) -> u64 {
    if lambda <= 0.0 {
        return 0;
    }
    Poisson::new(lambda).expect("lambda > 0").sample(rng) as u64
}

/// Simulates one cascade with a fresh RNG seeded from the config.
pub fn simulate_cascade(cfg: &SimConfig) -> SimOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    simulate_cascade_with(cfg, &mut rng)
}

/// Simulates one cascade drawing randomness from the caller's RNG.
pub fn simulate_cascade_with<R: Rng + ?Sized>(cfg: &SimConfig, rng: &mut R) -> SimOutcome {
    let n = cfg.n_star.value();
    let mut times = vec![0.0f64];
    let mut generation_sizes = vec![1usize];
    let mut truncated = false;

    // breadth-first: parents of the current generation, in event order
    let mut current: Vec<f64> = vec![0.0];
    while !current.is_empty() {
        let mut next: Vec<f64> = Vec::new();
        'parents: for &parent in &current {
            let kids = draw_offspring_count(n, rng);
            for _ in 0..kids {
                let t = parent + cfg.kernel.sample_delay(rng);
                if let Some(h) = cfg.horizon {
                    if t >= h {
                        continue;
                    }
                }
                if times.len() >= cfg.max_events {
                    truncated = true;
                    break 'parents;
                }
                times.push(t);
                next.push(t);
            }
        }
        if !next.is_empty() {
            generation_sizes.push(next.len());
        }
        if truncated {
            break;
        }
        current = next;
    }

    times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let cascade = match cfg.horizon {
        Some(h) => Cascade::with_horizon(times, h),
        None => Cascade::new(times),
    }
    .expect("simulated times are valid");
    SimOutcome { cascade, truncated, generation_sizes }
}

/// Simulates the future of an observed prefix: direct offspring of observed
/// events arrive as a Poisson count with the residual intensity, each delayed
/// by its parent's residual kernel density, and each seeds an independent
/// branching subtree. Returns the merged full cascade.
pub fn simulate_continuation(observed: &Cascade, t_obs: f64, cfg: &SimConfig) -> Result<SimOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    simulate_continuation_with(observed, t_obs, cfg, &mut rng)
}

pub fn simulate_continuation_with<R: Rng + ?Sized>(
    observed: &Cascade,
    t_obs: f64,
    cfg: &SimConfig,
    rng: &mut R,
) -> Result<SimOutcome> {
    let n = cfg.n_star.value();
    let parents: Vec<f64> =
        observed.times().iter().copied().take_while(|&t| t < t_obs).collect();
    let tails: Vec<f64> = parents
        .iter()
        .map(|&tj| cfg.kernel.tail(t_obs - tj))
        .collect::<Result<_>>()?;
    let tail_sum: f64 = tails.iter().sum();
    let residual = n * tail_sum;

    let mut times = parents.clone();
    let mut truncated = false;

    let direct = poisson_sample(residual, rng);
    let mut seeds: Vec<f64> = Vec::with_capacity(direct as usize);
    for _ in 0..direct {
        // parent chosen proportionally to its residual mass
        let mut u: f64 = rng.random::<f64>() * tail_sum;
        let mut idx = 0;
        for (i, &w) in tails.iter().enumerate() {
            if u < w || i == tails.len() - 1 {
                idx = i;
                break;
            }
            u -= w;
        }
        let t = parents[idx] + cfg.kernel.sample_delay_beyond(t_obs - parents[idx], rng);
        seeds.push(t);
    }

    for &seed_time in &seeds {
        if times.len() >= cfg.max_events {
            truncated = true;
            break;
        }
        times.push(seed_time);
        // independent subtree rooted at the direct offspring
        let mut current = vec![seed_time];
        'tree: while !current.is_empty() {
            let mut next = Vec::new();
            for &parent in &current {
                let kids = draw_offspring_count(n, rng);
                for _ in 0..kids {
                    if times.len() >= cfg.max_events {
                        truncated = true;
                        break 'tree;
                    }
                    let t = parent + cfg.kernel.sample_delay(rng);
                    times.push(t);
                    next.push(t);
                }
            }
            current = next;
        }
        if truncated {
            break;
        }
    }

    times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(SimOutcome {
        cascade: Cascade::new(times).expect("merged times are valid"),
        truncated,
        generation_sizes: Vec::new(),
    })
}
