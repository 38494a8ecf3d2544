//! Memory kernel families: the normalized density over parent-to-offspring
//! delays, with closed-form tails and inverse-CDF sampling.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lower box bound on the decay parameter theta during optimization.
pub const THETA_MIN: f64 = 1e-6;
/// Upper box bound on theta.
pub const THETA_MAX: f64 = 1e4;
/// Lower box bound on the power-law cutoff c.
pub const C_MIN: f64 = 1e-6;
/// Upper box bound on c.
pub const C_MAX: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    Exponential,
    PowerLaw,
}

/// Parameters of one memory kernel. For the exponential family
/// g(tau) = theta * exp(-theta * tau); for the power-law family
/// g(tau) = theta * c^theta * (tau + c)^-(1 + theta). Both integrate to 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub family: KernelFamily,
    pub theta: f64,
    /// Power-law cutoff; stored as 0 and unused for the exponential family.
    pub c: f64,
}

impl KernelParams {
    pub fn exponential(theta: f64) -> Result<Self> {
        if !(theta > 0.0) || !theta.is_finite() {
            return Err(Error::InvalidKernelParam { name: "theta", value: theta });
        }
        Ok(Self { family: KernelFamily::Exponential, theta, c: 0.0 })
    }

    pub fn power_law(theta: f64, c: f64) -> Result<Self> {
        if !(theta > 0.0) || !theta.is_finite() {
            return Err(Error::InvalidKernelParam { name: "theta", value: theta });
        }
        if !(c > 0.0) || !c.is_finite() {
            return Err(Error::InvalidKernelParam { name: "c", value: c });
        }
        Ok(Self { family: KernelFamily::PowerLaw, theta, c })
    }

    /// Density g(tau). Finite at tau = 0 for both families, so tied
    /// timestamps need no special-casing.
    pub fn pdf(&self, tau: f64) -> Result<f64> {
        if tau < 0.0 || tau.is_nan() {
            return Err(Error::Domain(format!("kernel pdf requires tau >= 0, got {tau}")));
        }
        Ok(self.pdf_raw(tau))
    }

    /// log g(tau), stable for delays far beyond the scale of the kernel.
    pub fn log_pdf(&self, tau: f64) -> Result<f64> {
        if tau < 0.0 || tau.is_nan() {
            return Err(Error::Domain(format!("kernel log pdf requires tau >= 0, got {tau}")));
        }
        Ok(self.log_pdf_raw(tau))
    }

    /// Tail mass 1 - integral_0^x g(tau) dtau, in closed form.
    pub fn tail(&self, x: f64) -> Result<f64> {
        if x < 0.0 || x.is_nan() {
            return Err(Error::Domain(format!("kernel tail requires x >= 0, got {x}")));
        }
        Ok(self.tail_raw(x))
    }

    #[inline]
    pub(crate) fn pdf_raw(&self, tau: f64) -> f64 {
        debug_assert!(tau >= 0.0);
        match self.family {
            KernelFamily::Exponential => self.theta * (-self.theta * tau).exp(),
            KernelFamily::PowerLaw => self.log_pdf_raw(tau).exp(),
        }
    }

    #[inline]
    pub(crate) fn log_pdf_raw(&self, tau: f64) -> f64 {
        debug_assert!(tau >= 0.0);
        match self.family {
            KernelFamily::Exponential => self.theta.ln() - self.theta * tau,
            KernelFamily::PowerLaw => {
                self.theta.ln() + self.theta * self.c.ln() - (1.0 + self.theta) * (tau + self.c).ln()
            }
        }
    }

    #[inline]
    pub(crate) fn tail_raw(&self, x: f64) -> f64 {
        debug_assert!(x >= 0.0);
        match self.family {
            KernelFamily::Exponential => (-self.theta * x).exp(),
            KernelFamily::PowerLaw => (self.theta * (self.c.ln() - (x + self.c).ln())).exp(),
        }
    }

    /// Draws one delay from g by inverse-CDF.
    pub fn sample_delay<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        // u is in [0, 1); use 1 - u to keep the argument in (0, 1].
        let u = 1.0 - u;
        match self.family {
            KernelFamily::Exponential => -u.ln() / self.theta,
            KernelFamily::PowerLaw => self.c * (u.powf(-1.0 / self.theta) - 1.0),
        }
    }

    /// Draws one delay from g conditioned on exceeding `elapsed`, i.e.
    /// from the normalized residual density. The returned value already
    /// includes `elapsed`.
    pub fn sample_delay_beyond<R: Rng + ?Sized>(&self, elapsed: f64, rng: &mut R) -> f64 {
        debug_assert!(elapsed >= 0.0);
        let u: f64 = rng.random();
        let u = 1.0 - u;
        match self.family {
            // memoryless
            KernelFamily::Exponential => elapsed + -u.ln() / self.theta,
            // P[tau > x | tau > s] = ((s + c) / (x + c))^theta
            KernelFamily::PowerLaw => (elapsed + self.c) * u.powf(-1.0 / self.theta) - self.c,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b}");
    }

    #[test]
    fn pdf_matches_closed_forms() {
        let exp1 = KernelParams::exponential(1.0).unwrap();
        assert_close(exp1.pdf(0.0).unwrap(), 1.0, 1e-15);

        let exp2 = KernelParams::exponential(2.0).unwrap();
        assert_close(exp2.pdf(1.0).unwrap(), 2.0 * (-2.0f64).exp(), 1e-15);

        let pl = KernelParams::power_law(1.0, 1.0).unwrap();
        assert_close(pl.pdf(1.0).unwrap(), 0.25, 1e-15);
    }

    #[test]
    fn tail_matches_analytic_integrals() {
        let exp1 = KernelParams::exponential(1.0).unwrap();
        let pl = KernelParams::power_law(2.0, 1.0).unwrap();
        assert_close(exp1.tail(0.0).unwrap(), 1.0, 0.0);
        assert_close(pl.tail(0.0).unwrap(), 1.0, 0.0);
        assert_close(exp1.tail(1.0).unwrap(), (-1.0f64).exp(), 1e-15);
        assert_close(pl.tail(1.0).unwrap(), 0.25, 1e-15);
    }

    #[test]
    fn log_pdf_is_stable_for_huge_delays() {
        let exp1 = KernelParams::exponential(1.0).unwrap();
        assert_close(exp1.log_pdf(0.0).unwrap(), 0.0, 0.0);
        assert_close(exp1.log_pdf(700.0).unwrap(), -700.0, 1e-12);
        // far beyond where pdf underflows
        assert!(exp1.log_pdf(1e9).unwrap().is_finite());

        let pl = KernelParams::power_law(1.0, 1.0).unwrap();
        assert_close(pl.log_pdf(1.0).unwrap(), 0.25f64.ln(), 1e-15);
        assert!(pl.log_pdf(1e9).unwrap().is_finite());
    }

    #[test]
    fn log_pdf_consistent_with_pdf() {
        for k in [
            KernelParams::exponential(0.3).unwrap(),
            KernelParams::exponential(5.0).unwrap(),
            KernelParams::power_law(0.7, 10.0).unwrap(),
            KernelParams::power_law(2.5, 0.1).unwrap(),
        ] {
            for tau in [0.0, 0.01, 1.0, 13.7, 400.0] {
                let p = k.pdf(tau).unwrap();
                if p > 0.0 {
                    let rel = (k.log_pdf(tau).unwrap() - p.ln()).abs() / p.ln().abs().max(1.0);
                    assert!(rel < 1e-12);
                }
            }
        }
    }

    #[test]
    fn tail_matches_quadrature() {
        // trapezoid integration of pdf over [0, x] vs 1 - tail(x)
        for k in [
            KernelParams::exponential(1.3).unwrap(),
            KernelParams::power_law(1.8, 2.0).unwrap(),
        ] {
            let x = 8.0;
            let n = 400_000;
            let h = x / n as f64;
            let mut acc = 0.5 * (k.pdf(0.0).unwrap() + k.pdf(x).unwrap());
            for i in 1..n {
                acc += k.pdf(i as f64 * h).unwrap();
            }
            let integral = acc * h;
            assert_close(integral, 1.0 - k.tail(x).unwrap(), 1e-8);
        }
    }

    #[test]
    fn negative_arguments_are_domain_errors() {
        let k = KernelParams::exponential(1.0).unwrap();
        assert!(k.pdf(-0.1).is_err());
        assert!(k.log_pdf(-0.1).is_err());
        assert!(k.tail(-0.1).is_err());
    }

    #[test]
    fn invalid_parameters_rejected() {
        assert!(KernelParams::exponential(0.0).is_err());
        assert!(KernelParams::exponential(-1.0).is_err());
        assert!(KernelParams::power_law(1.0, 0.0).is_err());
        assert!(KernelParams::power_law(f64::INFINITY, 1.0).is_err());
    }
}
