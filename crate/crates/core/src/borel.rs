//! Borel and Borel-Tanner distributions.
//!
//! The Borel distribution is the law of the total progeny of a Galton-Watson
//! branching process with Poisson(n*) offspring, and therefore the final-size
//! law of a single-seed subcritical Hawkes cascade. The Borel-Tanner
//! generalization starts the process from `d` initial events. All PMFs are
//! computed in log space with the log-gamma function; factorials overflow at
//! k ~ 171 in double precision and cascades routinely exceed that.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// Fitted branching factors are clamped strictly below 1: moments and the
/// size-prediction formulas all divide by (1 - n*).
pub const N_STAR_MAX: f64 = 1.0 - 1e-9;

/// Expected number of direct offspring per event; subcritical, in [0, 1).
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct BranchingFactor(f64);

impl BranchingFactor {
    pub fn new(value: f64) -> Result<Self> {
        if !value.is_finite() || !(0.0..1.0).contains(&value) {
            return Err(Error::InvalidBranchingFactor(value));
        }
        Ok(Self(value))
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for BranchingFactor {
    type Error = Error;
    fn try_from(v: f64) -> Result<Self> {
        Self::new(v)
    }
}

impl From<BranchingFactor> for f64 {
    fn from(b: BranchingFactor) -> f64 {
        b.0
    }
}

/// log B(k | n*) = log[ (k n*)^(k-1) e^(-k n*) / k! ], k >= 1.
///
/// At n* = 0 the distribution is a point mass at k = 1; the log-PMF is 0 at
/// k = 1 and `NEG_INFINITY` otherwise.
pub fn borel_log_pmf(n_star: BranchingFactor, k: u64) -> Result<f64> {
    if k < 1 {
        return Err(Error::Domain(format!("Borel PMF requires k >= 1, got {k}")));
    }
    let n = n_star.value();
    if k == 1 {
        return Ok(-n);
    }
    if n == 0.0 {
        return Ok(f64::NEG_INFINITY);
    }
    let kf = k as f64;
    Ok((kf - 1.0) * (kf * n).ln() - kf * n - ln_gamma(kf + 1.0))
}

/// Mean 1/(1-n*) and variance n*/(1-n*)^3 of the Borel distribution.
pub fn borel_mean_var(n_star: BranchingFactor) -> (f64, f64) {
    let n = n_star.value();
    let d = 1.0 - n;
    (1.0 / d, n / (d * d * d))
}

/// log B(k | n*, d): total progeny of `d` initial events, supported on
/// k >= d, with the convention PMF(0 | n*, 0) = 1.
pub fn borel_tanner_log_pmf(n_star: BranchingFactor, n_initial: u64, k: u64) -> Result<f64> {
    if k < n_initial {
        return Err(Error::Domain(format!(
            "Borel-Tanner PMF requires k >= n_initial, got k = {k}, n_initial = {n_initial}"
        )));
    }
    let n = n_star.value();
    if n_initial == 0 {
        // zero direct offspring forces zero progeny
        return Ok(if k == 0 { 0.0 } else { f64::NEG_INFINITY });
    }
    let d = n_initial as f64;
    let kf = k as f64;
    if k == n_initial {
        return Ok(-kf * n);
    }
    if n == 0.0 {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(d.ln() + (kf - d) * (kf * n).ln() - kf * n - kf.ln() - ln_gamma(kf - d + 1.0))
}

/// Mean d/(1-n*) and variance d n*/(1-n*)^3 of the Borel-Tanner distribution.
pub fn borel_tanner_mean_var(n_star: BranchingFactor, n_initial: u64) -> (f64, f64) {
    let n = n_star.value();
    let d = n_initial as f64;
    let s = 1.0 - n;
    (d / s, d * n / (s * s * s))
}

/// Analytic maximum-likelihood estimate of the branching factor from final
/// cascade sizes: n* = sum(N_i - 1) / sum(N_i), clamped below 1.
pub fn fit_borel_mle(sizes: &[u64]) -> Result<BranchingFactor> {
    if sizes.is_empty() {
        return Err(Error::EmptyInput("sizes"));
    }
    let mut total = 0.0f64;
    let mut excess = 0.0f64;
    for &s in sizes {
        if s == 0 {
            return Err(Error::ZeroSize);
        }
        total += s as f64;
        excess += (s - 1) as f64;
    }
    BranchingFactor::new((excess / total).clamp(0.0, N_STAR_MAX))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bf(v: f64) -> BranchingFactor {
        BranchingFactor::new(v).unwrap()
    }

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b}");
    }

    #[test]
    fn borel_log_pmf_examples() {
        assert_eq!(borel_log_pmf(bf(0.0), 1).unwrap(), 0.0);
        assert_eq!(borel_log_pmf(bf(0.0), 2).unwrap(), f64::NEG_INFINITY);
        assert_close(borel_log_pmf(bf(0.5), 1).unwrap(), -0.5, 1e-15);
        // (2 * 0.5)^1 e^{-1} / 2! = e^{-1} / 2
        assert_close(borel_log_pmf(bf(0.5), 2).unwrap(), (0.5f64 * (-1.0f64).exp()).ln(), 1e-14);
        assert!(borel_log_pmf(bf(0.5), 0).is_err());
    }

    #[test]
    fn borel_moments() {
        assert_eq!(borel_mean_var(bf(0.0)), (1.0, 0.0));
        let (m, v) = borel_mean_var(bf(0.5));
        assert_close(m, 2.0, 1e-15);
        assert_close(v, 4.0, 1e-15);
        let (m, v) = borel_mean_var(bf(0.9));
        assert_close(m, 10.0, 1e-12);
        assert_close(v, 900.0, 1e-9);
    }

    #[test]
    fn borel_normalizes() {
        for n in [0.1, 0.5, 0.9] {
            let mass: f64 =
                (1..=10_000u64).map(|k| borel_log_pmf(bf(n), k).unwrap().exp()).sum();
            let tol = if n < 0.9 { 1e-9 } else { 1e-6 };
            assert_close(mass, 1.0, tol);
        }
    }

    #[test]
    fn borel_tanner_examples() {
        assert_eq!(borel_tanner_log_pmf(bf(0.5), 0, 0).unwrap(), 0.0);
        assert_eq!(borel_tanner_log_pmf(bf(0.5), 0, 3).unwrap(), f64::NEG_INFINITY);
        // one initial event reduces to plain Borel
        for k in 1..=50 {
            assert_close(
                borel_tanner_log_pmf(bf(0.37), 1, k).unwrap(),
                borel_log_pmf(bf(0.37), k).unwrap(),
                1e-12,
            );
        }
        // kappa = n_initial term: 2 * 1 * e^{-1} / 2 = e^{-1}
        assert_close(borel_tanner_log_pmf(bf(0.5), 2, 2).unwrap(), -1.0, 1e-15);
        assert!(borel_tanner_log_pmf(bf(0.5), 3, 2).is_err());
    }

    #[test]
    fn borel_tanner_normalizes() {
        for (n, d) in [(0.3, 2u64), (0.6, 5)] {
            let mass: f64 = (d..=20_000u64)
                .map(|k| borel_tanner_log_pmf(bf(n), d, k).unwrap().exp())
                .sum();
            assert_close(mass, 1.0, 1e-9);
        }
    }

    #[test]
    fn borel_tanner_moments() {
        let (m, v) = borel_tanner_mean_var(bf(0.5), 2);
        assert_close(m, 4.0, 1e-15);
        assert_close(v, 8.0, 1e-15);
        assert_eq!(borel_tanner_mean_var(bf(0.7), 0), (0.0, 0.0));
        let (m, v) = borel_tanner_mean_var(bf(0.0), 3);
        assert_eq!((m, v), (3.0, 0.0));
    }

    #[test]
    fn borel_tanner_moments_match_pmf() {
        let n = bf(0.4);
        let d = 3u64;
        let mut mean = 0.0;
        let mut second = 0.0;
        for k in d..=5_000 {
            let p = borel_tanner_log_pmf(n, d, k).unwrap().exp();
            mean += k as f64 * p;
            second += (k as f64) * (k as f64) * p;
        }
        let (em, ev) = borel_tanner_mean_var(n, d);
        assert_close(mean, em, 1e-8);
        assert_close(second - mean * mean, ev, 1e-6);
    }

    #[test]
    fn mle_examples() {
        assert_eq!(fit_borel_mle(&[1, 1, 1]).unwrap().value(), 0.0);
        assert_close(fit_borel_mle(&[2, 2]).unwrap().value(), 0.5, 1e-15);
        assert_close(fit_borel_mle(&[10]).unwrap().value(), 0.9, 1e-15);
        assert!(fit_borel_mle(&[]).is_err());
        assert!(fit_borel_mle(&[1, 0]).is_err());
    }

    #[test]
    fn mle_invariant_to_order_and_replication() {
        let a = fit_borel_mle(&[3, 1, 7, 2]).unwrap();
        let b = fit_borel_mle(&[7, 2, 3, 1]).unwrap();
        assert_eq!(a.value(), b.value());
        let rep: Vec<u64> = [3, 1, 7, 2].repeat(5);
        assert_close(fit_borel_mle(&rep).unwrap().value(), a.value(), 1e-15);
    }

    #[test]
    fn mle_is_stationary_point_of_l_n() {
        // finite-difference derivative of L_n at the estimate
        let sizes = [3u64, 1, 7, 2, 2, 5];
        let n = fit_borel_mle(&sizes).unwrap().value();
        let ln_of = |x: f64| -> f64 {
            sizes.iter().map(|&s| (s as f64 - 1.0) * x.ln() - s as f64 * x).sum()
        };
        let h = 1e-6;
        let d = (ln_of(n + h) - ln_of(n - h)) / (2.0 * h);
        assert!(d.abs() < 1e-6, "dL_n/dn* = {d}");
    }

    #[test]
    fn branching_factor_bounds() {
        assert!(BranchingFactor::new(1.0).is_err());
        assert!(BranchingFactor::new(-0.1).is_err());
        assert!(BranchingFactor::new(f64::NAN).is_err());
        assert!(BranchingFactor::new(0.0).is_ok());
        assert!(BranchingFactor::new(N_STAR_MAX).is_ok());
    }
}
