//! EM fitting of the Borel mixture model (BMM) over cascade sizes and the
//! kernel mixture model (KMM) over inter-arrival structure, AIC component
//! selection, and the cartesian-product assembly of the two into one
//! Hawkes component set.
//!
//! The BMM runs on a compressed (size, count) representation: cascade sizes
//! are heavily skewed toward small values, so summing over distinct sizes
//! weighted by their counts gives identical results at a fraction of the
//! cost. Both E/M steps of the BMM are analytic; the KMM M-step maximizes a
//! weighted kernel likelihood with a bounded simplex search over
//! log-parameters, keeping the best point seen so each EM iteration is
//! non-decreasing up to the inner solver tolerance.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::borel::{borel_log_pmf, BranchingFactor, N_STAR_MAX};
use crate::cascade::Cascade;
use crate::characterize::weighted_quantile;
use crate::error::{Error, Result};
use crate::kernel::{KernelFamily, KernelParams, C_MAX, C_MIN, THETA_MAX, THETA_MIN};
use crate::likelihood::fit_kernel_mle;
use crate::numeric::log_sum_exp;
use crate::optim::{nelder_mead_max, Bounds, NelderMeadOpts};
use crate::simulate::rng_for_stream;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BorelComponent {
    pub n_star: BranchingFactor,
    pub weight: f64,
}

/// Weighted Borel components fitted on final cascade sizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BorelMixture {
    pub components: Vec<BorelComponent>,
}

impl BorelMixture {
    pub fn new(components: Vec<BorelComponent>) -> Result<Self> {
        validate_weights(components.iter().map(|c| c.weight))?;
        Ok(Self { components })
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelComponent {
    pub kernel: KernelParams,
    pub weight: f64,
}

/// Weighted kernel components fitted on inter-arrival times; all components
/// share one kernel family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelMixture {
    pub components: Vec<KernelComponent>,
}

impl KernelMixture {
    pub fn new(components: Vec<KernelComponent>) -> Result<Self> {
        validate_weights(components.iter().map(|c| c.weight))?;
        if components.windows(2).any(|w| w[0].kernel.family != w[1].kernel.family) {
            return Err(Error::Domain("kernel mixture mixes kernel families".into()));
        }
        Ok(Self { components })
    }

    pub fn family(&self) -> Option<KernelFamily> {
        self.components.first().map(|c| c.kernel.family)
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }
}

fn validate_weights(weights: impl Iterator<Item = f64>) -> Result<()> {
    let mut sum = 0.0;
    let mut any = false;
    for w in weights {
        any = true;
        if !(w > 0.0 && w <= 1.0 + 1e-12) {
            return Err(Error::Domain(format!("mixture weight out of (0, 1]: {w}")));
        }
        sum += w;
    }
    if !any {
        return Err(Error::EmptyInput("mixture components"));
    }
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::Domain(format!("mixture weights sum to {sum}, expected 1")));
    }
    Ok(())
}

/// One component of the cartesian-product Hawkes mixture.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DualComponent {
    pub n_star: BranchingFactor,
    pub kernel: KernelParams,
    pub weight: f64,
}

/// The product set of BMM and KMM components: every (n*, kernel) pair with
/// weight p^B * p^g.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualMixture {
    pub borel: BorelMixture,
    pub kernel: KernelMixture,
    pub product: Vec<DualComponent>,
}

/// Builds the dual mixture as the cartesian product of the two marginals.
pub fn assemble_dual(borel: &BorelMixture, kernel: &KernelMixture) -> DualMixture {
    let mut product = Vec::with_capacity(borel.len() * kernel.len());
    for b in &borel.components {
        for k in &kernel.components {
            product.push(DualComponent {
                n_star: b.n_star,
                kernel: k.kernel,
                weight: b.weight * k.weight,
            });
        }
    }
    DualMixture { borel: borel.clone(), kernel: kernel.clone(), product }
}

/// EM configuration shared by both mixture fits.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmConfig {
    /// Relative log-likelihood change below which EM stops.
    pub tol: f64,
    pub max_iterations: usize,
    /// Random restarts; the best final likelihood wins.
    pub restarts: usize,
    pub seed: u64,
    /// Components whose weight drops below this are frozen out and the rest
    /// renormalized.
    pub collapse_threshold: f64,
    /// Evaluation budget of the inner solver per KMM M-step.
    pub inner_max_evals: usize,
    /// Keep the per-observation posterior matrix in the report.
    pub keep_membership: bool,
}

impl EmConfig {
    pub fn bmm() -> Self {
        Self {
            tol: 1e-8,
            max_iterations: 1000,
            restarts: 5,
            seed: 0,
            collapse_threshold: 1e-6,
            inner_max_evals: 0,
            keep_membership: false,
        }
    }

    pub fn kmm() -> Self {
        Self { max_iterations: 200, inner_max_evals: 200, ..Self::bmm() }
    }
}

impl Default for EmConfig {
    fn default() -> Self {
        Self::bmm()
    }
}

/// Diagnostics of one EM fit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitReport {
    pub final_log_likelihood: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Components frozen out because their weight collapsed.
    pub collapsed_components: usize,
    /// Log-likelihood after each EM iteration, for the winning restart.
    pub ll_trace: Vec<f64>,
    /// Posterior membership rows (one per observation: distinct size for the
    /// BMM, cascade for the KMM), each summing to 1.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub membership: Option<Vec<Vec<f64>>>,
}

/// Compresses a size multiset into sorted (size, count) pairs.
pub fn compress_sizes(sizes: &[u64]) -> Result<Vec<(u64, f64)>> {
    if sizes.is_empty() {
        return Err(Error::EmptyInput("sizes"));
    }
    let mut counts: BTreeMap<u64, u64> = BTreeMap::new();
    for &s in sizes {
        if s == 0 {
            return Err(Error::ZeroSize);
        }
        *counts.entry(s).or_insert(0) += 1;
    }
    Ok(counts.into_iter().map(|(s, c)| (s, c as f64)).collect())
}

/// Fits a k-component Borel mixture on final cascade sizes by EM.
pub fn fit_bmm(sizes: &[u64], k: usize, cfg: &EmConfig) -> Result<(BorelMixture, FitReport)> {
    let counts = compress_sizes(sizes)?;
    fit_bmm_counts(&counts, k, cfg)
}

/// Same as [`fit_bmm`] but on the compressed (size, count) representation;
/// the two paths produce identical results.
pub fn fit_bmm_counts(
    counts: &[(u64, f64)],
    k: usize,
    cfg: &EmConfig,
) -> Result<(BorelMixture, FitReport)> {
    if counts.is_empty() {
        return Err(Error::EmptyInput("sizes"));
    }
    if k == 0 {
        return Err(Error::Domain("component count must be >= 1".into()));
    }

    // weighted quantiles of the per-cascade naive estimates (N-1)/N
    let naive: Vec<(f64, f64)> =
        counts.iter().map(|&(s, c)| ((s as f64 - 1.0) / s as f64, c)).collect();
    let spread = {
        let lo = naive.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
        let hi = naive.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
        (hi - lo).max(0.05)
    };
    let base_init: Vec<f64> = (0..k)
        .map(|j| {
            let level = (j as f64 + 0.5) / k as f64;
            weighted_quantile(&naive, level).expect("naive estimates are non-empty")
        })
        .collect();

    let mut best: Option<(Vec<f64>, Vec<f64>, FitReport)> = None;
    for restart in 0..cfg.restarts.max(1) {
        let mut rng = rng_for_stream(cfg.seed, restart as u64);
        let init: Vec<f64> = base_init
            .iter()
            .map(|&n| {
                let jitter = if restart == 0 {
                    0.0
                } else {
                    (rng.random::<f64>() - 0.5) * spread
                };
                (n + jitter).clamp(0.0, N_STAR_MAX)
            })
            .collect();
        let (ns, ws, report) = run_bmm_em(counts, &init, cfg);
        if best
            .as_ref()
            .is_none_or(|(_, _, r)| report.final_log_likelihood > r.final_log_likelihood)
        {
            best = Some((ns, ws, report));
        }
    }
    let (ns, ws, report) = best.expect("at least one restart");

    let mut components: Vec<BorelComponent> = ns
        .iter()
        .zip(&ws)
        .filter(|(_, &w)| w > 0.0)
        .map(|(&n, &w)| BorelComponent { n_star: BranchingFactor::new(n).unwrap(), weight: w })
        .collect();
    components.sort_by(|a, b| a.n_star.value().partial_cmp(&b.n_star.value()).unwrap());
    Ok((BorelMixture::new(components)?, report))
}

/// One EM run from a fixed initialization. Returns surviving component
/// parameters, their weights (renormalized after collapses), and the report.
fn run_bmm_em(counts: &[(u64, f64)], init: &[f64], cfg: &EmConfig) -> (Vec<f64>, Vec<f64>, FitReport) {
    let k = init.len();
    let total: f64 = counts.iter().map(|&(_, c)| c).sum();
    let mut ns: Vec<f64> = init.to_vec();
    let mut ws: Vec<f64> = vec![1.0 / k as f64; k];
    let mut active: Vec<bool> = vec![true; k];

    let mut ll_trace = Vec::new();
    let mut membership: Vec<Vec<f64>> = Vec::new();
    let mut prev_ll = f64::NEG_INFINITY;
    let mut converged = false;
    let mut iterations = 0;

    let mut log_q = vec![0.0f64; k];
    for iter in 0..cfg.max_iterations {
        iterations = iter + 1;
        // E-step + likelihood
        let mut ll = 0.0;
        let mut resp: Vec<Vec<f64>> = vec![Vec::with_capacity(k); counts.len()];
        for (i, &(size, count)) in counts.iter().enumerate() {
            for j in 0..k {
                log_q[j] = if active[j] {
                    ws[j].ln() + borel_log_pmf_clamped(ns[j], size)
                } else {
                    f64::NEG_INFINITY
                };
            }
            let norm = log_sum_exp(&log_q);
            ll += count * norm;
            resp[i] = log_q.iter().map(|&q| (q - norm).exp()).collect();
        }
        ll_trace.push(ll);

        // M-step
        let mut any_collapse = false;
        for j in 0..k {
            if !active[j] {
                continue;
            }
            let mut excess = 0.0;
            let mut mass = 0.0;
            let mut resp_sum = 0.0;
            for (i, &(size, count)) in counts.iter().enumerate() {
                let g = count * resp[i][j];
                excess += g * (size as f64 - 1.0);
                mass += g * size as f64;
                resp_sum += g;
            }
            let w_new = resp_sum / total;
            if w_new < cfg.collapse_threshold {
                active[j] = false;
                ws[j] = 0.0;
                any_collapse = true;
                continue;
            }
            ns[j] = if mass > 0.0 { (excess / mass).clamp(0.0, N_STAR_MAX) } else { ns[j] };
            ws[j] = w_new;
        }
        if any_collapse {
            let s: f64 = ws.iter().sum();
            for w in ws.iter_mut() {
                *w /= s;
            }
        }

        membership = resp;
        if iter > 0 && (ll - prev_ll).abs() <= cfg.tol * ll.abs().max(1.0) {
            converged = true;
            prev_ll = ll;
            break;
        }
        prev_ll = ll;
    }

    let report = FitReport {
        final_log_likelihood: prev_ll,
        iterations,
        converged,
        collapsed_components: active.iter().filter(|a| !**a).count(),
        ll_trace,
        membership: if cfg.keep_membership { Some(membership) } else { None },
    };
    (ns, ws, report)
}

/// Borel log-PMF over a raw f64 branching factor already inside [0, 1).
fn borel_log_pmf_clamped(n: f64, size: u64) -> f64 {
    borel_log_pmf(BranchingFactor::new(n).expect("EM keeps n* in range"), size)
        .expect("size >= 1")
}

/// AIC-based component count selection for the BMM.
#[derive(Debug, Clone)]
pub struct KSelection {
    pub best_k: usize,
    /// (k, AIC) for every candidate.
    pub aic_table: Vec<(usize, f64)>,
    pub best_mixture: BorelMixture,
    pub best_report: FitReport,
}

/// Fits every k in the range and returns the AIC minimizer (2k - 2L), ties
/// broken toward smaller k.
pub fn select_k_bmm(
    sizes: &[u64],
    k_range: core::ops::RangeInclusive<usize>,
    cfg: &EmConfig,
) -> Result<KSelection> {
    if k_range.is_empty() {
        return Err(Error::EmptyInput("k range"));
    }
    let counts = compress_sizes(sizes)?;
    let mut table = Vec::new();
    let mut best: Option<(usize, f64, BorelMixture, FitReport)> = None;
    for k in k_range {
        let (mix, report) = fit_bmm_counts(&counts, k, cfg)?;
        let aic = 2.0 * k as f64 - 2.0 * report.final_log_likelihood;
        table.push((k, aic));
        if best.as_ref().is_none_or(|(_, b, _, _)| aic < *b) {
            best = Some((k, aic, mix, report));
        }
    }
    let (best_k, _, best_mixture, best_report) = best.expect("non-empty range");
    Ok(KSelection { best_k, aic_table: table, best_mixture, best_report })
}

/// Fits a k-component kernel mixture on the multi-event cascades of a group.
/// Single-event cascades carry no inter-arrival information and are skipped.
pub fn fit_kmm(
    group: &[Cascade],
    k: usize,
    family: KernelFamily,
    cfg: &EmConfig,
) -> Result<(KernelMixture, FitReport)> {
    if k == 0 {
        return Err(Error::Domain("component count must be >= 1".into()));
    }
    let multi: Vec<&Cascade> = group.iter().filter(|c| c.size() >= 2).collect();
    if multi.is_empty() {
        return Err(Error::InsufficientData);
    }

    // per cascade, per event after the seed: delays from all earlier events
    let deltas: Vec<Vec<Vec<f64>>> = multi
        .iter()
        .map(|c| {
            let t = c.times();
            (1..t.len()).map(|j| (0..j).map(|z| t[j] - t[z]).collect()).collect()
        })
        .collect();

    let owned: Vec<Cascade> = multi.iter().map(|&c| c.clone()).collect();
    let mle = fit_kernel_mle(&owned, family)?;

    let mut best: Option<(Vec<KernelParams>, Vec<f64>, FitReport)> = None;
    for restart in 0..cfg.restarts.max(1) {
        let mut rng = rng_for_stream(cfg.seed.wrapping_add(1), restart as u64);
        // thetas log-spaced over one decade around the single-kernel MLE,
        // jittered on restarts
        let init: Vec<KernelParams> = (0..k)
            .map(|j| {
                let offset = if k == 1 {
                    0.0
                } else {
                    -1.0 + 2.0 * j as f64 / (k as f64 - 1.0)
                };
                let jitter = if restart == 0 {
                    0.0
                } else {
                    rng.random::<f64>() - 0.5
                };
                let theta =
                    (mle.theta * 10f64.powf(offset + jitter)).clamp(THETA_MIN, THETA_MAX);
                let c_jitter = if restart == 0 {
                    1.0
                } else {
                    10f64.powf(rng.random::<f64>() - 0.5)
                };
                match family {
                    KernelFamily::Exponential => KernelParams { family, theta, c: 0.0 },
                    KernelFamily::PowerLaw => KernelParams {
                        family,
                        theta,
                        c: (mle.c * c_jitter).clamp(C_MIN, C_MAX),
                    },
                }
            })
            .collect();
        let (kernels, ws, report) = run_kmm_em(&deltas, &init, family, cfg);
        if best
            .as_ref()
            .is_none_or(|(_, _, r)| report.final_log_likelihood > r.final_log_likelihood)
        {
            best = Some((kernels, ws, report));
        }
    }
    let (kernels, ws, report) = best.expect("at least one restart");

    let mut components: Vec<KernelComponent> = kernels
        .iter()
        .zip(&ws)
        .filter(|(_, &w)| w > 0.0)
        .map(|(&kernel, &w)| KernelComponent { kernel, weight: w })
        .collect();
    components.sort_by(|a, b| a.kernel.theta.partial_cmp(&b.kernel.theta).unwrap());
    Ok((KernelMixture::new(components)?, report))
}

fn log_f_deltas(kernel: &KernelParams, deltas: &[Vec<f64>]) -> f64 {
    let mut acc = 0.0;
    let mut terms = Vec::new();
    for ds in deltas {
        terms.clear();
        for &d in ds {
            terms.push(kernel.log_pdf_raw(d));
        }
        acc += log_sum_exp(&terms);
    }
    acc
}

fn run_kmm_em(
    deltas: &[Vec<Vec<f64>>],
    init: &[KernelParams],
    family: KernelFamily,
    cfg: &EmConfig,
) -> (Vec<KernelParams>, Vec<f64>, FitReport) {
    let k = init.len();
    let m = deltas.len();
    let mut kernels: Vec<KernelParams> = init.to_vec();
    let mut ws: Vec<f64> = vec![1.0 / k as f64; k];
    let mut active: Vec<bool> = vec![true; k];

    let bounds = match family {
        KernelFamily::Exponential => Bounds::new(vec![THETA_MIN.ln()], vec![THETA_MAX.ln()]),
        KernelFamily::PowerLaw => Bounds::new(
            vec![THETA_MIN.ln(), C_MIN.ln()],
            vec![THETA_MAX.ln(), C_MAX.ln()],
        ),
    };
    let opts = NelderMeadOpts { max_evals: cfg.inner_max_evals.max(50), ..Default::default() };

    let mut ll_trace = Vec::new();
    let mut membership: Vec<Vec<f64>> = Vec::new();
    let mut prev_ll = f64::NEG_INFINITY;
    let mut converged = false;
    let mut iterations = 0;

    // cached log f per cascade per component
    let mut log_f: Vec<Vec<f64>> = vec![vec![0.0; k]; m];
    for i in 0..m {
        for j in 0..k {
            log_f[i][j] = log_f_deltas(&kernels[j], &deltas[i]);
        }
    }

    let mut log_q = vec![0.0f64; k];
    for iter in 0..cfg.max_iterations {
        iterations = iter + 1;
        // E-step
        let mut ll = 0.0;
        let mut resp: Vec<Vec<f64>> = vec![Vec::with_capacity(k); m];
        for i in 0..m {
            for j in 0..k {
                log_q[j] =
                    if active[j] { ws[j].ln() + log_f[i][j] } else { f64::NEG_INFINITY };
            }
            let norm = log_sum_exp(&log_q);
            ll += norm;
            resp[i] = log_q.iter().map(|&q| (q - norm).exp()).collect();
        }
        ll_trace.push(ll);

        // M-step
        let mut any_collapse = false;
        for j in 0..k {
            if !active[j] {
                continue;
            }
            let resp_sum: f64 = (0..m).map(|i| resp[i][j]).sum();
            let w_new = resp_sum / m as f64;
            if w_new < cfg.collapse_threshold {
                active[j] = false;
                ws[j] = 0.0;
                any_collapse = true;
                continue;
            }
            ws[j] = w_new;

            let x0 = match family {
                KernelFamily::Exponential => vec![kernels[j].theta.ln()],
                KernelFamily::PowerLaw => vec![kernels[j].theta.ln(), kernels[j].c.ln()],
            };
            let r = nelder_mead_max(
                |x| {
                    let cand = kernel_from_logs(family, x);
                    (0..m)
                        .map(|i| {
                            if resp[i][j] > 0.0 {
                                resp[i][j] * log_f_deltas(&cand, &deltas[i])
                            } else {
                                0.0
                            }
                        })
                        .sum()
                },
                &x0,
                &bounds,
                &opts,
            );
            kernels[j] = kernel_from_logs(family, &r.x);
            for i in 0..m {
                log_f[i][j] = log_f_deltas(&kernels[j], &deltas[i]);
            }
        }
        if any_collapse {
            let s: f64 = ws.iter().sum();
            for w in ws.iter_mut() {
                *w /= s;
            }
        }

        membership = resp;
        if iter > 0 && (ll - prev_ll).abs() <= cfg.tol * ll.abs().max(1.0) {
            converged = true;
            prev_ll = ll;
            break;
        }
        prev_ll = ll;
    }

    let report = FitReport {
        final_log_likelihood: prev_ll,
        iterations,
        converged,
        collapsed_components: active.iter().filter(|a| !**a).count(),
        ll_trace,
        membership: if cfg.keep_membership { Some(membership) } else { None },
    };
    (kernels, ws, report)
}

fn kernel_from_logs(family: KernelFamily, x: &[f64]) -> KernelParams {
    match family {
        KernelFamily::Exponential => KernelParams {
            family,
            theta: x[0].exp().clamp(THETA_MIN, THETA_MAX),
            c: 0.0,
        },
        KernelFamily::PowerLaw => KernelParams {
            family,
            theta: x[0].exp().clamp(THETA_MIN, THETA_MAX),
            c: x[1].exp().clamp(C_MIN, C_MAX),
        },
    }
}
