//! Forecasting for unseen content: publisher model pooling, the posterior
//! final-size distribution of a partially observed cascade (a Poisson number
//! of direct offspring, each spawning a Borel-Tanner progeny), closed-form
//! size prediction, expected holdout log-likelihood, and evaluation metrics.

use serde::{Deserialize, Serialize};

use crate::borel::{borel_tanner_log_pmf, BranchingFactor};
use crate::cascade::Cascade;
use crate::error::{Error, Result};
use crate::kernel::KernelParams;
use crate::likelihood::{full_log_likelihood, HawkesParams, COMPLETION_HORIZON_SECS};
use crate::mixture::{assemble_dual, BorelMixture, DualMixture, KernelMixture};
use crate::numeric::log_sum_exp;

/// Default probability threshold terminating the Poisson sum of the
/// posterior size distribution.
pub const DEFAULT_EPS_P: f64 = 1e-10;

/// Mixture model for a publisher's future items, pooled from the fitted
/// models of its recent items.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PublisherModel {
    pub borel: BorelMixture,
    pub kernel: KernelMixture,
    pub dual: DualMixture,
    /// Historical average number of cascades per item.
    pub avg_cascades_per_item: f64,
    pub source_items: Vec<String>,
}

/// Pools per-item dual mixtures into one publisher model: the union of
/// components with each item contributing weight / (number of pooled items).
/// Only the `max_items` most recent items are pooled; `item_models` is
/// ordered oldest to newest. The average cascade count is taken over the
/// same pooled items.
pub fn pool_publisher_model(
    item_models: &[DualMixture],
    cascade_counts: &[usize],
    max_items: usize,
) -> Result<PublisherModel> {
    if item_models.is_empty() {
        return Err(Error::EmptyInput("item models"));
    }
    if cascade_counts.len() != item_models.len() {
        return Err(Error::LengthMismatch(item_models.len(), cascade_counts.len()));
    }
    if max_items == 0 {
        return Err(Error::Domain("max_items must be >= 1".into()));
    }
    let start = item_models.len().saturating_sub(max_items);
    let pooled = &item_models[start..];
    let counts = &cascade_counts[start..];
    let share = 1.0 / pooled.len() as f64;

    let mut borel_components = Vec::new();
    let mut kernel_components = Vec::new();
    for m in pooled {
        for b in &m.borel.components {
            borel_components.push(crate::mixture::BorelComponent {
                n_star: b.n_star,
                weight: b.weight * share,
            });
        }
        for k in &m.kernel.components {
            kernel_components.push(crate::mixture::KernelComponent {
                kernel: k.kernel,
                weight: k.weight * share,
            });
        }
    }
    let borel = BorelMixture::new(borel_components)?;
    let kernel = KernelMixture::new(kernel_components)?;
    let dual = assemble_dual(&borel, &kernel);
    let avg = counts.iter().sum::<usize>() as f64 / counts.len() as f64;
    Ok(PublisherModel {
        borel,
        kernel,
        dual,
        avg_cascades_per_item: avg,
        source_items: Vec::new(),
    })
}

/// Expected number of direct offspring of observed events arriving after T:
/// n* times the summed kernel tails, in closed form.
pub fn residual_intensity(
    n_star: BranchingFactor,
    kernel: &KernelParams,
    c: &Cascade,
    t_obs: f64,
) -> Result<f64> {
    if !(t_obs > 0.0) || !t_obs.is_finite() {
        return Err(Error::InvalidHorizon(t_obs));
    }
    let mut acc = 0.0;
    for &tj in c.times().iter().take_while(|&&t| t < t_obs) {
        acc += kernel.tail(t_obs - tj)?;
    }
    Ok(n_star.value() * acc)
}

/// Truncated posterior distribution of the final cascade size.
#[derive(Debug, Clone)]
pub struct SizePosterior {
    /// Events observed up to T; the distribution is supported on
    /// `observed + m` for m = 0, 1, ...
    pub observed: u64,
    /// probs[m] = P[final size = observed + m].
    pub probs: Vec<f64>,
    /// Total retained mass; 1 minus this bounds the truncation error.
    pub total_mass: f64,
}

impl SizePosterior {
    pub fn mean(&self) -> f64 {
        let m: f64 = self
            .probs
            .iter()
            .enumerate()
            .map(|(i, &p)| (self.observed as f64 + i as f64) * p)
            .sum();
        m / self.total_mass
    }

    pub fn variance(&self) -> f64 {
        let mean = self.mean();
        let second: f64 = self
            .probs
            .iter()
            .enumerate()
            .map(|(i, &p)| {
                let x = self.observed as f64 + i as f64;
                x * x * p
            })
            .sum::<f64>()
            / self.total_mass;
        (second - mean * mean).max(0.0)
    }

    /// P[final size = n], 0 outside the retained support.
    pub fn pmf(&self, n: u64) -> f64 {
        if n < self.observed {
            return 0.0;
        }
        self.probs.get((n - self.observed) as usize).copied().unwrap_or(0.0)
    }
}

/// Posterior final-size distribution of a cascade observed to T: the number
/// of direct offspring is Poisson with the residual intensity, and each
/// possible count z contributes a Borel-Tanner progeny law with z initial
/// events. The Poisson sum terminates once its term drops below `eps_p`
/// after passing the mode.
pub fn posterior_size_pmf(
    n_star: BranchingFactor,
    kernel: &KernelParams,
    c: &Cascade,
    t_obs: f64,
    eps_p: f64,
) -> Result<SizePosterior> {
    if !(eps_p > 0.0 && eps_p < 1.0) {
        return Err(Error::Domain(format!("eps_p must be in (0, 1), got {eps_p}")));
    }
    let lambda = residual_intensity(n_star, kernel, c, t_obs)?;
    let observed = c.times().iter().take_while(|&&t| t < t_obs).count() as u64;
    let n = n_star.value();

    if lambda == 0.0 {
        return Ok(SizePosterior { observed, probs: vec![1.0], total_mass: 1.0 });
    }

    let mut probs: Vec<f64> = vec![0.0];
    let mut log_poi = -lambda; // log Poi(0 | lambda)
    let mut z: u64 = 0;
    loop {
        let poi = log_poi.exp();
        if z as f64 > lambda && poi < eps_p {
            break;
        }
        if z == 0 {
            // zero direct offspring: no future events at all
            probs[0] += poi;
        } else {
            // Borel-Tanner progeny of z initial events, truncated once its
            // own tail mass is negligible
            let mean = z as f64 / (1.0 - n);
            let sd = (z as f64 * n / (1.0 - n).powi(3)).sqrt();
            let m_cap = ((mean + 40.0 * sd + 100.0) as usize).max(z as usize + 1);
            let mut bt_mass = 0.0;
            let mut m = z;
            while (m as usize) <= m_cap && bt_mass < 1.0 - 1e-13 {
                let p = borel_tanner_log_pmf(n_star, z, m)?.exp();
                bt_mass += p;
                let idx = m as usize;
                if probs.len() <= idx {
                    probs.resize(idx + 1, 0.0);
                }
                probs[idx] += poi * p;
                m += 1;
            }
        }
        z += 1;
        log_poi += lambda.ln() - (z as f64).ln();
    }

    let total_mass: f64 = probs.iter().sum();
    Ok(SizePosterior { observed, probs, total_mass })
}

/// Closed-form posterior mean of the final cascade size:
/// N(T) + residual intensity / (1 - n*).
pub fn predict_cascade_size(
    n_star: BranchingFactor,
    kernel: &KernelParams,
    c: &Cascade,
    t_obs: f64,
) -> Result<f64> {
    let lambda = residual_intensity(n_star, kernel, c, t_obs)?;
    let observed = c.times().iter().take_while(|&&t| t < t_obs).count() as f64;
    Ok(observed + lambda / (1.0 - n_star.value()))
}

/// Posterior variance of the final cascade size, computed numerically from
/// the truncated posterior PMF (and therefore eps_p-dependent).
pub fn predict_cascade_variance(
    n_star: BranchingFactor,
    kernel: &KernelParams,
    c: &Cascade,
    t_obs: f64,
    eps_p: f64,
) -> Result<f64> {
    Ok(posterior_size_pmf(n_star, kernel, c, t_obs, eps_p)?.variance())
}

/// Closed-form variance of the future-event count under one component:
/// the Poisson-mixed Borel-Tanner compound has variance
/// Lambda * (n* / (1-n*)^3 + 1 / (1-n*)^2).
fn continuation_variance(lambda: f64, n: f64) -> f64 {
    let s = 1.0 - n;
    lambda * (n / (s * s * s) + 1.0 / (s * s))
}

/// Predicted final popularity of an item: the mixture expectation of the
/// future-cascade term (a Borel-Tanner mean with the publisher's average
/// cascade count as initial events) plus per-cascade posterior means.
pub fn predict_item_popularity(
    pm: &PublisherModel,
    observed: &[Cascade],
    t_obs: f64,
) -> Result<f64> {
    let mut acc = 0.0;
    for comp in &pm.dual.product {
        let n = comp.n_star.value();
        let mut term = pm.avg_cascades_per_item / (1.0 - n);
        for c in observed {
            term += predict_cascade_size(comp.n_star, &comp.kernel, c, t_obs)?;
        }
        acc += comp.weight * term;
    }
    Ok(acc)
}

/// Item popularity prediction with its mixture variance (law of total
/// variance over the dual components; per-component variances in closed
/// form).
pub fn predict_item_popularity_with_variance(
    pm: &PublisherModel,
    observed: &[Cascade],
    t_obs: f64,
) -> Result<(f64, f64)> {
    let mut mean = 0.0;
    let mut second = 0.0;
    for comp in &pm.dual.product {
        let n = comp.n_star.value();
        let s = 1.0 - n;
        let mut m_k = pm.avg_cascades_per_item / s;
        // future cascades: Borel-Tanner with avg_cascades initial events
        let mut v_k = pm.avg_cascades_per_item * n / (s * s * s);
        for c in observed {
            let lambda = residual_intensity(comp.n_star, &comp.kernel, c, t_obs)?;
            let obs = c.times().iter().take_while(|&&t| t < t_obs).count() as f64;
            m_k += obs + lambda / s;
            v_k += continuation_variance(lambda, n);
        }
        mean += comp.weight * m_k;
        second += comp.weight * (v_k + m_k * m_k);
    }
    Ok((mean, (second - mean * mean).max(0.0)))
}

/// Expected holdout log-likelihood of one cascade under a publisher model.
#[derive(Debug, Clone)]
pub struct HoldoutReport {
    /// Posterior-weighted holdout log-likelihood (Eq.-wise: full window
    /// minus observed window, averaged over component posteriors).
    pub expected_hll: f64,
    /// expected_hll divided by the number of holdout events, when any.
    pub per_event: Option<f64>,
    pub holdout_events: usize,
    /// Posterior probability of each dual component given the observed
    /// window; sums to 1.
    pub posterior: Vec<f64>,
    /// Horizon used as the full-window integration end: last event plus the
    /// 30-day completion gap.
    pub full_horizon: f64,
}

/// Computes the expected holdout log-likelihood: component posteriors come
/// from the censored likelihood of the observed window, and each component's
/// holdout term is the likelihood difference between the full window (last
/// event + completion horizon) and the observed window.
pub fn expected_holdout_ll(
    pm: &PublisherModel,
    c_full: &Cascade,
    t_obs: f64,
) -> Result<HoldoutReport> {
    let truncated = c_full.truncate(t_obs)?;
    let holdout_events = c_full.size() - truncated.size();
    let full_horizon = c_full.last_event_time() + COMPLETION_HORIZON_SECS;

    let k = pm.dual.product.len();
    let mut log_post = Vec::with_capacity(k);
    let mut hll = Vec::with_capacity(k);
    for comp in &pm.dual.product {
        let params = HawkesParams::cascade(comp.n_star, comp.kernel);
        let ll_obs = full_log_likelihood(&params, &truncated, t_obs)?;
        let ll_full = full_log_likelihood(&params, c_full, full_horizon)?;
        log_post.push(comp.weight.ln() + ll_obs);
        hll.push(ll_full - ll_obs);
    }
    let norm = log_sum_exp(&log_post);
    let posterior: Vec<f64> = log_post.iter().map(|&l| (l - norm).exp()).collect();
    let expected: f64 = posterior.iter().zip(&hll).map(|(&p, &h)| p * h).sum();
    Ok(HoldoutReport {
        expected_hll: expected,
        per_event: if holdout_events > 0 {
            Some(expected / holdout_events as f64)
        } else {
            None
        },
        holdout_events,
        posterior,
        full_horizon,
    })
}

/// |predicted - actual| / actual, the popularity prediction metric.
pub fn absolute_relative_error(predicted: f64, actual: u64) -> Result<f64> {
    if actual == 0 {
        return Err(Error::UndefinedMetric);
    }
    Ok((predicted - actual as f64).abs() / actual as f64)
}
