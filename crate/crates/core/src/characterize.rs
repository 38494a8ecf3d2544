//! Item- and publisher-level characterization: single-value summaries of a
//! dual mixture, quantile-binned diffusion embeddings, and the closed-form
//! Wasserstein-1 distance between embeddings.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::KernelFamily;
use crate::mixture::DualMixture;

/// Default number of quantile bins per parameter.
pub const DEFAULT_BINS: usize = 10;

/// Mixture-weighted means of the component parameters: content virality
/// (n*), kernel cutoff, and influence decay (theta).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n_star_hat: f64,
    pub c_hat: f64,
    pub theta_hat: f64,
}

/// Weighted means under the marginal mixtures; the product assembly plays
/// no role here.
pub fn summarize(d: &DualMixture) -> Summary {
    let n_star_hat =
        d.borel.components.iter().map(|c| c.n_star.value() * c.weight).sum();
    let c_hat = d.kernel.components.iter().map(|c| c.kernel.c * c.weight).sum();
    let theta_hat = d.kernel.components.iter().map(|c| c.kernel.theta * c.weight).sum();
    Summary { n_star_hat, c_hat, theta_hat }
}

/// Quantile of a weighted sample by cumulative-weight linear interpolation.
///
/// Weights are first normalized to sum to the sample count; the quantile is
/// then read off the implied expanded order statistics, interpolating
/// linearly between distinct values. With all weights equal this matches the
/// standard interpolated sample quantile exactly.
pub fn weighted_quantile(samples: &[(f64, f64)], level: f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptyInput("weighted samples"));
    }
    if !(0.0..=1.0).contains(&level) {
        return Err(Error::Domain(format!("quantile level must be in [0, 1], got {level}")));
    }
    for &(v, w) in samples {
        if !v.is_finite() || !w.is_finite() || w <= 0.0 {
            return Err(Error::Domain(format!("invalid weighted sample ({v}, {w})")));
        }
    }
    let mut pts: Vec<(f64, f64)> = samples.to_vec();
    pts.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    // merge ties so plateaus are well defined
    let mut merged: Vec<(f64, f64)> = Vec::with_capacity(pts.len());
    for (v, w) in pts {
        match merged.last_mut() {
            Some(last) if last.0 == v => last.1 += w,
            _ => merged.push((v, w)),
        }
    }
    let n = samples.len() as f64;
    let total: f64 = merged.iter().map(|p| p.1).sum();
    let scale = n / total;
    if merged.len() == 1 || n <= 1.0 {
        return Ok(merged[0].0);
    }

    // rank position of the query on the expanded order statistics
    let h = level * (n - 1.0);
    // value i occupies ranks [cum_prev, max(cum_prev, cum - 1)], then
    // interpolates linearly toward the next value over a unit rank gap
    let mut cum_prev = 0.0;
    for (i, &(v, w)) in merged.iter().enumerate() {
        let cum = cum_prev + w * scale;
        let plateau_end = (cum - 1.0).max(cum_prev);
        if h <= plateau_end || i == merged.len() - 1 {
            return Ok(v);
        }
        let next_start = cum;
        if h < next_start {
            let frac = (h - plateau_end) / (next_start - plateau_end);
            return Ok(v + frac * (merged[i + 1].0 - v));
        }
        cum_prev = cum;
    }
    Ok(merged.last().unwrap().0)
}

/// Quantiles at several levels of one weighted sample.
pub fn weighted_quantiles(samples: &[(f64, f64)], levels: &[f64]) -> Result<Vec<f64>> {
    levels.iter().map(|&l| weighted_quantile(samples, l)).collect()
}

/// Global quantile bin edges shared by all embeddings of a corpus: for each
/// parameter, the interior quantiles at levels 1/B .. (B-1)/B of the pooled
/// weighted component samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinEdges {
    pub bins: usize,
    pub n_star: Vec<f64>,
    pub c: Vec<f64>,
    pub theta: Vec<f64>,
}

/// Computes corpus-wide bin edges from all fitted mixtures.
pub fn corpus_bin_edges(mixtures: &[&DualMixture], bins: usize) -> Result<BinEdges> {
    if mixtures.is_empty() {
        return Err(Error::EmptyInput("mixtures"));
    }
    if bins < 1 {
        return Err(Error::Domain("bin count must be >= 1".into()));
    }
    let mut n_samples = Vec::new();
    let mut c_samples = Vec::new();
    let mut t_samples = Vec::new();
    for m in mixtures {
        for b in &m.borel.components {
            n_samples.push((b.n_star.value(), b.weight));
        }
        for k in &m.kernel.components {
            c_samples.push((k.kernel.c, k.weight));
            t_samples.push((k.kernel.theta, k.weight));
        }
    }
    let levels: Vec<f64> = (1..bins).map(|i| i as f64 / bins as f64).collect();
    Ok(BinEdges {
        bins,
        n_star: weighted_quantiles(&n_samples, &levels)?,
        c: weighted_quantiles(&c_samples, &levels)?,
        theta: weighted_quantiles(&t_samples, &levels)?,
    })
}

/// Three quantile-binned weight vectors describing one item (or publisher).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffusionEmbedding {
    pub m_n_star: Vec<f64>,
    pub m_c: Vec<f64>,
    pub m_theta: Vec<f64>,
    pub edges: BinEdges,
    /// True when some component parameter fell outside the corpus edge range
    /// and was routed to a boundary bin.
    pub out_of_range: bool,
}

/// Bin index under the half-open rule (q_{i-1}, q_i]: values at or below the
/// first edge land in bin 0, values above the last edge in the final bin.
fn bin_index(edges: &[f64], x: f64) -> usize {
    edges.iter().position(|&e| x <= e).unwrap_or(edges.len())
}

/// Routes each mixture component's weight into its quantile bin.
pub fn build_embedding(d: &DualMixture, edges: &BinEdges) -> Result<DiffusionEmbedding> {
    let expected = edges.bins.saturating_sub(1);
    if edges.n_star.len() != expected
        || edges.c.len() != expected
        || edges.theta.len() != expected
    {
        return Err(Error::Domain(format!(
            "bin edge count does not match {} bins",
            edges.bins
        )));
    }
    let mut m_n = vec![0.0; edges.bins];
    let mut m_c = vec![0.0; edges.bins];
    let mut m_t = vec![0.0; edges.bins];
    let mut out_of_range = false;
    let mut check_range = |edges: &[f64], x: f64| {
        // values beyond the last quantile are routed to the final bin
        if let Some(&hi) = edges.last() {
            out_of_range |= x > hi;
        }
    };
    for b in &d.borel.components {
        let v = b.n_star.value();
        check_range(&edges.n_star, v);
        m_n[bin_index(&edges.n_star, v)] += b.weight;
    }
    for k in &d.kernel.components {
        check_range(&edges.c, k.kernel.c);
        check_range(&edges.theta, k.kernel.theta);
        m_c[bin_index(&edges.c, k.kernel.c)] += k.weight;
        m_t[bin_index(&edges.theta, k.kernel.theta)] += k.weight;
    }
    Ok(DiffusionEmbedding {
        m_n_star: m_n,
        m_c,
        m_theta: m_t,
        edges: edges.clone(),
        out_of_range,
    })
}

/// Closed-form Wasserstein-1 distance between two histograms on the same
/// support: the sum of absolute cumulative-weight differences.
pub fn wasserstein1(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch(a.len(), b.len()));
    }
    let mut ca = 0.0;
    let mut cb = 0.0;
    let mut dist = 0.0;
    for i in 0..a.len() {
        ca += a[i];
        cb += b[i];
        dist += (ca - cb).abs();
    }
    Ok(dist)
}

/// Distance between two embeddings: the sum of the three per-parameter
/// Wasserstein-1 terms. Requires shared bin edges.
pub fn embedding_distance(a: &DiffusionEmbedding, b: &DiffusionEmbedding) -> Result<f64> {
    if a.edges != b.edges {
        return Err(Error::EdgeMismatch);
    }
    Ok(wasserstein1(&a.m_n_star, &b.m_n_star)?
        + wasserstein1(&a.m_c, &b.m_c)?
        + wasserstein1(&a.m_theta, &b.m_theta)?)
}

/// Publisher-level embedding: element-wise mean of the item embeddings,
/// renormalized per vector.
pub fn pool_publisher_embedding(embeddings: &[DiffusionEmbedding]) -> Result<DiffusionEmbedding> {
    let first = embeddings.first().ok_or(Error::EmptyInput("embeddings"))?;
    for e in embeddings {
        if e.edges != first.edges {
            return Err(Error::EdgeMismatch);
        }
    }
    let mean_norm = |pick: fn(&DiffusionEmbedding) -> &Vec<f64>| -> Vec<f64> {
        let b = pick(first).len();
        let mut acc = vec![0.0; b];
        for e in embeddings {
            for (i, v) in pick(e).iter().enumerate() {
                acc[i] += v / embeddings.len() as f64;
            }
        }
        let s: f64 = acc.iter().sum();
        if s > 0.0 {
            for v in acc.iter_mut() {
                *v /= s;
            }
        }
        acc
    };
    Ok(DiffusionEmbedding {
        m_n_star: mean_norm(|e| &e.m_n_star),
        m_c: mean_norm(|e| &e.m_c),
        m_theta: mean_norm(|e| &e.m_theta),
        edges: first.edges.clone(),
        out_of_range: embeddings.iter().any(|e| e.out_of_range),
    })
}

/// True when the mixture's kernel family has a cutoff parameter; the c block
/// of an exponential-family embedding is degenerate (all mass in bin 0).
pub fn family_has_cutoff(family: KernelFamily) -> bool {
    family == KernelFamily::PowerLaw
}
