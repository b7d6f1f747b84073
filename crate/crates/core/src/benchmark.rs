//! Closed-form Epstein-Zin consumption and the Merton special case.

use crate::error::{Error, Result};
use crate::hjbode::{investment_fraction, PolicyCurve};
use crate::model::{KmPreferences, MarketParams};

/// Below this `|nu|` the annuity uses its `nu -> 0` limit.
const NU_LIMIT: f64 = 1e-8;

/// `nu = delta/(1-rho) + (1 - 1/(1-rho)) (r + lambda^2/(2 alpha sigma^2))`.
pub fn ez_nu(market: &MarketParams, prefs: &KmPreferences) -> f64 {
    let rho = prefs.rho();
    let merton_rate = market.r
        + market.lambda * market.lambda / (2.0 * prefs.alpha() * market.sigma * market.sigma);
    prefs.delta() / (1.0 - rho) + (1.0 - 1.0 / (1.0 - rho)) * merton_rate
}

/// EZ optimum `c* = x / a(t)` with `a(t) = 1/nu + (1 - 1/nu) e^(nu (t - T))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EzSolution {
    pub nu: f64,
    pub horizon: f64,
}

impl EzSolution {
    pub fn new(market: &MarketParams, prefs: &KmPreferences) -> Self {
        Self {
            nu: ez_nu(market, prefs),
            horizon: prefs.horizon(),
        }
    }

    fn remaining(&self, t: f64) -> Result<f64> {
        let slack = 1e-12 * self.horizon;
        if !(t >= -slack && t <= self.horizon + slack) {
            return Err(Error::OutOfDomain {
                t,
                horizon: self.horizon,
            });
        }
        Ok((self.horizon - t).max(0.0))
    }

    /// `a(t)`, written as `e^(-nu s) + (1 - e^(-nu s)) / nu` with `s = T - t`.
    /// Near `nu = 0` the second term switches to its Taylor series, whose
    /// limit is `1 + s`.
    pub fn annuity(&self, t: f64) -> Result<f64> {
        let s = self.remaining(t)?;
        let nu = self.nu;
        if nu.abs() < NU_LIMIT {
            let x = nu * s;
            return Ok((-x).exp() + s * (1.0 - x / 2.0 + x * x / 6.0));
        }
        Ok((-nu * s).exp() + (-(-nu * s).exp_m1()) / nu)
    }

    /// `a'(t) = nu a(t) - 1`.
    pub fn annuity_rate(&self, t: f64) -> Result<f64> {
        Ok(self.nu * self.annuity(t)? - 1.0)
    }

    /// Policy curve with `g = 1/a` on `steps` uniform intervals.
    pub fn policy(
        &self,
        market: &MarketParams,
        prefs: &KmPreferences,
        steps: usize,
    ) -> PolicyCurve {
        let steps = steps + steps % 2;
        let h = self.horizon / steps as f64;
        let times: Vec<f64> = (0..=steps).map(|i| i as f64 * h).collect();
        let a: Vec<f64> = times.iter().map(|&t| self.annuity(t).unwrap()).collect();
        let g = a.iter().map(|v| 1.0 / v).collect();
        let rates = a.iter().map(|v| -(self.nu * v - 1.0) / v).collect();
        PolicyCurve::with_log_rates(investment_fraction(market, prefs), times, g, rates)
    }
}

/// Free-function form of [`EzSolution::annuity`].
pub fn ez_annuity(sol: &EzSolution, t: f64) -> Result<f64> {
    sol.annuity(t)
}

/// Merton's time-additive annuity: the EZ formula under `rho = 1 - alpha`.
pub fn merton_annuity(market: &MarketParams, prefs: &KmPreferences, t: f64) -> Result<f64> {
    if (prefs.rho() - (1.0 - prefs.alpha())).abs() > 1e-12 {
        return Err(Error::Unsupported(format!(
            "Merton case needs rho = 1 - alpha, got rho = {} and alpha = {}",
            prefs.rho(),
            prefs.alpha()
        )));
    }
    EzSolution::new(market, prefs).annuity(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sol(alpha: f64) -> EzSolution {
        EzSolution::new(&MarketParams::reference(), &KmPreferences::reference(alpha))
    }

    #[test]
    fn nu_values() {
        assert!((sol(2.0).nu - 0.030_312_5).abs() < 1e-15);
        // 0.005 + 0.5 (0.02 + 0.0049 / 0.8)
        assert!((sol(10.0).nu - 0.018_062_5).abs() < 1e-15);
    }

    #[test]
    fn annuity_at_maturity_is_one() {
        for alpha in [2.0, 3.0, 4.0, 10.0] {
            assert!((sol(alpha).annuity(40.0).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn matches_direct_formula() {
        let s = sol(3.0);
        for t in [0.0, 5.0, 17.3, 39.0] {
            let direct = 1.0 / s.nu + (1.0 - 1.0 / s.nu) * (s.nu * (t - 40.0)).exp();
            assert!((s.annuity(t).unwrap() / direct - 1.0).abs() < 1e-13);
        }
    }

    #[test]
    fn small_nu_limit_is_continuous() {
        let zero = EzSolution {
            nu: 0.0,
            horizon: 40.0,
        };
        assert_eq!(zero.annuity(10.0).unwrap(), 31.0);
        let nu = 5e-9;
        let s = 30.0f64;
        let closed = (-nu * s).exp() + (-(-nu * s).exp_m1()) / nu;
        let series = EzSolution { nu, horizon: 40.0 }.annuity(10.0).unwrap();
        assert!((series - closed).abs() < 1e-12);
    }

    #[test]
    fn merton_requires_matching_rho() {
        let mk = MarketParams::reference();
        let ok = merton_annuity(&mk, &KmPreferences::reference(2.0), 15.0).unwrap();
        // the published 17.99 is 17.997 cut to two decimals
        assert!((17.99..18.0).contains(&ok));
        assert!(merton_annuity(&mk, &KmPreferences::reference(3.0), 15.0).is_err());
    }

    #[test]
    fn out_of_domain() {
        assert!(matches!(
            sol(2.0).annuity(41.0),
            Err(Error::OutOfDomain { .. })
        ));
    }

    proptest! {
        #[test]
        fn differential_identity(alpha in 0.5f64..12.0, rho in -3.0f64..0.9, t in 0.0f64..39.99) {
            prop_assume!(rho.abs() > 1e-3);
            let s = EzSolution::new(&MarketParams::reference(), &KmPreferences::new(alpha, rho, 0.01, 40.0));
            let e = 1e-5;
            let fd = (s.annuity(t + e).unwrap() - s.annuity(t - e.min(t)).unwrap()) / (e + e.min(t));
            prop_assert!((fd - s.annuity_rate(t).unwrap()).abs() < 1e-9 * s.annuity(t).unwrap().max(1.0));
        }

        #[test]
        fn annuity_is_positive(alpha in 0.5f64..12.0, rho in -3.0f64..0.9, t in 0.0f64..40.0) {
            prop_assume!(rho.abs() > 1e-3);
            let s = EzSolution::new(&MarketParams::reference(), &KmPreferences::new(alpha, rho, 0.01, 40.0));
            prop_assert!(s.annuity(t).unwrap() > 0.0);
        }
    }
}
