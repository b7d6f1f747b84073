//! Market and preference parameters, solver settings, and the validated
//! bundle every solver in this crate consumes.

use std::fmt;

use thiserror::Error;

/// Default tolerance for recognising an integer `kappa`.
pub const CLOSURE_TOL: f64 = 1e-9;

/// Black-Scholes market: money market at rate `r`, one stock with excess
/// drift `lambda` and volatility `sigma`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarketParams {
    pub r: f64,
    pub lambda: f64,
    pub sigma: f64,
}

impl MarketParams {
    pub fn new(r: f64, lambda: f64, sigma: f64) -> Self {
        Self { r, lambda, sigma }
    }

    /// `(r, lambda, sigma) = (0.02, 0.07, 0.2)`.
    pub fn reference() -> Self {
        Self::new(0.02, 0.07, 0.2)
    }
}

/// CRRA-CES Kihlstrom-Mirman preferences.
///
/// `kappa = (1 - alpha) / rho` is the exponent of the outer transform and is
/// always recomputed from `alpha` and `rho`, so the fields are read through
/// accessors only.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KmPreferences {
    alpha: f64,
    rho: f64,
    delta: f64,
    horizon: f64,
    kappa: f64,
}

impl KmPreferences {
    pub fn new(alpha: f64, rho: f64, delta: f64, horizon: f64) -> Self {
        Self {
            alpha,
            rho,
            delta,
            horizon,
            kappa: (1.0 - alpha) / rho,
        }
    }

    /// `rho = -1, delta = 0.01, T = 40` with the given risk aversion.
    pub fn reference(alpha: f64) -> Self {
        Self::new(alpha, -1.0, 0.01, 40.0)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }
    pub fn rho(&self) -> f64 {
        self.rho
    }
    pub fn delta(&self) -> f64 {
        self.delta
    }
    pub fn horizon(&self) -> f64 {
        self.horizon
    }
    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn with_alpha(&self, alpha: f64) -> Self {
        Self::new(alpha, self.rho, self.delta, self.horizon)
    }

    pub fn with_delta(&self, delta: f64) -> Self {
        Self::new(self.alpha, self.rho, delta, self.horizon)
    }

    pub fn with_horizon(&self, horizon: f64) -> Self {
        Self::new(self.alpha, self.rho, self.delta, horizon)
    }

    pub fn is_unit_rra(&self) -> bool {
        self.alpha == 1.0
    }

    /// `Phi(y) = y^kappa / (1 - alpha)`, or `log(y) / rho` when `alpha = 1`.
    pub fn phi(&self, y: f64) -> f64 {
        if self.is_unit_rra() {
            y.ln() / self.rho
        } else {
            y.powf(self.kappa) / (1.0 - self.alpha)
        }
    }
}

/// Hierarchy depth requested from the ODE solver.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Truncation {
    /// Exact closure when `kappa` is a positive integer, otherwise
    /// `ceil(kappa) + 10` levels.
    Auto,
    Depth(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub ode_steps: usize,
    pub truncation: Truncation,
    pub convergence_tol: f64,
    pub mc_paths: usize,
    pub mc_seed: u64,
    pub x0: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            ode_steps: 4000,
            truncation: Truncation::Auto,
            convergence_tol: 1e-6,
            mc_paths: 100_000,
            mc_seed: 20_240_917,
            x0: 1000.0,
        }
    }
}

/// Which ODE system describes the equilibrium.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    /// `alpha != 1`: `A(t)` and the hierarchy `A^(k)(t)`.
    General,
    /// `alpha = 1`: `B(t)`, `L(t)` and `B^(k)(t)`.
    UnitRra,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Variant::General => f.write_str("general"),
            Variant::UnitRra => f.write_str("unit-rra"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamError {
    #[error("sigma must be positive, got {0}")]
    NonPositiveSigma(f64),
    #[error("rho must satisfy rho < 1 and rho != 0, got {0}")]
    RhoOutOfRange(f64),
    #[error("horizon must be positive, got {0}")]
    NonPositiveHorizon(f64),
    #[error("alpha must be finite and non-negative, got {0}")]
    NegativeAlpha(f64),
    #[error("delta must lie in [0, 1], got {0}")]
    DeltaOutOfRange(f64),
    #[error("risk premium lambda must be finite and non-negative, got {0}")]
    NegativeRiskPremium(f64),
    #[error("r must be finite, got {0}")]
    NonFiniteRate(f64),
    #[error("ode_steps must be at least 100, got {0}")]
    TooFewOdeSteps(usize),
    #[error("truncation_K must be at least 1")]
    ZeroTruncation,
    #[error("convergence_tol must be positive, got {0}")]
    NonPositiveTolerance(f64),
    #[error("x0 must be positive, got {0}")]
    NonPositiveWealth(f64),
}

impl ParamError {
    /// Name of the offending field.
    pub fn field(&self) -> &'static str {
        match self {
            ParamError::NonPositiveSigma(_) => "sigma",
            ParamError::RhoOutOfRange(_) => "rho",
            ParamError::NonPositiveHorizon(_) => "horizon",
            ParamError::NegativeAlpha(_) => "alpha",
            ParamError::DeltaOutOfRange(_) => "delta",
            ParamError::NegativeRiskPremium(_) => "lambda",
            ParamError::NonFiniteRate(_) => "r",
            ParamError::TooFewOdeSteps(_) => "ode_steps",
            ParamError::ZeroTruncation => "truncation_K",
            ParamError::NonPositiveTolerance(_) => "convergence_tol",
            ParamError::NonPositiveWealth(_) => "x0",
        }
    }
}

/// Every violation found by [`validate`], in field order.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("invalid parameters: {}", .0.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("; "))]
pub struct ValidationErrors(pub Vec<ParamError>);

/// A parameter set that passed [`validate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Model {
    market: MarketParams,
    prefs: KmPreferences,
    cfg: SolverConfig,
    variant: Variant,
}

impl Model {
    pub fn market(&self) -> &MarketParams {
        &self.market
    }
    pub fn prefs(&self) -> &KmPreferences {
        &self.prefs
    }
    pub fn cfg(&self) -> &SolverConfig {
        &self.cfg
    }
    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn with_cfg(&self, cfg: SolverConfig) -> Result<Model, ValidationErrors> {
        validate(self.market, self.prefs, cfg)
    }

    pub fn with_prefs(&self, prefs: KmPreferences) -> Result<Model, ValidationErrors> {
        validate(self.market, prefs, self.cfg)
    }

    pub fn with_market(&self, market: MarketParams) -> Result<Model, ValidationErrors> {
        validate(market, self.prefs, self.cfg)
    }
}

pub fn validate(
    market: MarketParams,
    prefs: KmPreferences,
    cfg: SolverConfig,
) -> Result<Model, ValidationErrors> {
    let mut errors = Vec::new();

    if !market.r.is_finite() {
        errors.push(ParamError::NonFiniteRate(market.r));
    }
    if !(market.lambda.is_finite() && market.lambda >= 0.0) {
        errors.push(ParamError::NegativeRiskPremium(market.lambda));
    }
    if !(market.sigma.is_finite() && market.sigma > 0.0) {
        errors.push(ParamError::NonPositiveSigma(market.sigma));
    }
    if !(prefs.alpha.is_finite() && prefs.alpha >= 0.0) {
        errors.push(ParamError::NegativeAlpha(prefs.alpha));
    }
    if !(prefs.rho.is_finite() && prefs.rho < 1.0 && prefs.rho != 0.0) {
        errors.push(ParamError::RhoOutOfRange(prefs.rho));
    }
    if !(0.0..=1.0).contains(&prefs.delta) {
        errors.push(ParamError::DeltaOutOfRange(prefs.delta));
    }
    if !(prefs.horizon.is_finite() && prefs.horizon > 0.0) {
        errors.push(ParamError::NonPositiveHorizon(prefs.horizon));
    }
    if cfg.ode_steps < 100 {
        errors.push(ParamError::TooFewOdeSteps(cfg.ode_steps));
    }
    if cfg.truncation == Truncation::Depth(0) {
        errors.push(ParamError::ZeroTruncation);
    }
    if !(cfg.convergence_tol > 0.0) {
        errors.push(ParamError::NonPositiveTolerance(cfg.convergence_tol));
    }
    if !(cfg.x0.is_finite() && cfg.x0 > 0.0) {
        errors.push(ParamError::NonPositiveWealth(cfg.x0));
    }

    if !errors.is_empty() {
        return Err(ValidationErrors(errors));
    }

    // Rebuild so kappa can never disagree with alpha and rho.
    let prefs = KmPreferences::new(prefs.alpha, prefs.rho, prefs.delta, prefs.horizon);
    let variant = if prefs.is_unit_rra() {
        Variant::UnitRra
    } else {
        Variant::General
    };
    Ok(Model {
        market,
        prefs,
        cfg,
        variant,
    })
}

/// Index `kbar` at which the hierarchy closes exactly with `A^(kbar) = 1`,
/// i.e. when `kappa` is a positive integer up to `tol`.
pub fn exact_closure_order(prefs: &KmPreferences, tol: f64) -> Option<usize> {
    if prefs.is_unit_rra() {
        return None;
    }
    let kappa = prefs.kappa();
    let nearest = kappa.round();
    if (kappa - nearest).abs() < tol && nearest >= 1.0 {
        Some(nearest as usize)
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn reference_model() -> Result<Model, ValidationErrors> {
        validate(
            MarketParams::reference(),
            KmPreferences::reference(2.0),
            SolverConfig::default(),
        )
    }

    #[test]
    fn reference_parameters_are_valid() {
        let model = reference_model().unwrap();
        assert_eq!(model.variant(), Variant::General);
        assert_eq!(model.prefs().kappa(), 1.0);
    }

    #[test]
    fn zero_sigma_is_rejected() {
        let err = validate(
            MarketParams::new(0.02, 0.07, 0.0),
            KmPreferences::reference(2.0),
            SolverConfig::default(),
        )
        .unwrap_err();
        assert_eq!(err.0, vec![ParamError::NonPositiveSigma(0.0)]);
        assert_eq!(err.0[0].field(), "sigma");
    }

    #[test]
    fn rho_of_one_is_rejected() {
        let err = validate(
            MarketParams::reference(),
            KmPreferences::new(2.0, 1.0, 0.01, 40.0),
            SolverConfig::default(),
        )
        .unwrap_err();
        assert_eq!(err.0, vec![ParamError::RhoOutOfRange(1.0)]);
    }

    #[test]
    fn all_violations_are_reported() {
        let err = validate(
            MarketParams::new(0.02, 0.07, -1.0),
            KmPreferences::new(2.0, 0.0, 0.01, 0.0),
            SolverConfig::default(),
        )
        .unwrap_err();
        let fields: Vec<_> = err.0.iter().map(ParamError::field).collect();
        assert_eq!(fields, vec!["sigma", "rho", "horizon"]);
    }

    #[test]
    fn unit_risk_aversion_routes_to_log_system() {
        let model = validate(
            MarketParams::reference(),
            KmPreferences::reference(1.0),
            SolverConfig::default(),
        )
        .unwrap();
        assert_eq!(model.variant(), Variant::UnitRra);
    }

    #[test]
    fn closure_orders() {
        assert_eq!(
            exact_closure_order(&KmPreferences::reference(2.0), CLOSURE_TOL),
            Some(1)
        );
        assert_eq!(
            exact_closure_order(&KmPreferences::reference(10.0), CLOSURE_TOL),
            Some(9)
        );
        assert_eq!(
            exact_closure_order(&KmPreferences::reference(2.5), CLOSURE_TOL),
            None
        );
        assert_eq!(
            exact_closure_order(&KmPreferences::reference(1.0), CLOSURE_TOL),
            None
        );
        // kappa = -1 is an integer but not positive
        assert_eq!(
            exact_closure_order(&KmPreferences::reference(0.0), CLOSURE_TOL),
            None
        );
        assert_eq!(
            exact_closure_order(&KmPreferences::new(3.0, 0.5, 0.01, 40.0), CLOSURE_TOL),
            None
        );
    }

    proptest! {
        #[test]
        fn closure_matches_integer_kappa(k in 1i32..40, m in 1i32..6) {
            // rho = -1/m and alpha = 1 + k/m give kappa = k exactly in rationals
            let rho = -1.0 / m as f64;
            let alpha = 1.0 + k as f64 / m as f64;
            let prefs = KmPreferences::new(alpha, rho, 0.01, 40.0);
            prop_assert_eq!(exact_closure_order(&prefs, CLOSURE_TOL), Some(k as usize));
        }

        #[test]
        fn half_integer_kappa_has_no_closure(k in 0i32..40) {
            let prefs = KmPreferences::new(1.0 + k as f64 + 0.5, -1.0, 0.01, 40.0);
            prop_assert_eq!(exact_closure_order(&prefs, CLOSURE_TOL), None);
        }

        #[test]
        fn validate_is_idempotent(alpha in 0.0f64..12.0, rho in -3.0f64..0.99, delta in 0.0f64..1.0) {
            prop_assume!(rho.abs() > 1e-6);
            let model = validate(
                MarketParams::reference(),
                KmPreferences::new(alpha, rho, delta, 40.0),
                SolverConfig::default(),
            ).unwrap();
            let again = validate(*model.market(), *model.prefs(), *model.cfg()).unwrap();
            prop_assert_eq!(model, again);
        }
    }
}
