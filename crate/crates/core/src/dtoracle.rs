//! Discrete-time equilibrium on a lattice in the reduced state `w = z / x^rho`.
//!
//! For a proportional policy the auxiliary function of the discrete
//! extended Bellman system is homogeneous,
//! `f_n(x, z) = x^(1-alpha) F_n(z / x^rho)`, and exponential discounting moves
//! the evaluation time into a rescaling of `z`. Each backward step finds the
//! period-`n` equilibrium action at `w = 0` and then updates `F_n` on the
//! whole grid with that action held fixed.
//!
//! `F` is stored as `L = ln((1 - alpha) F)`, which is finite for every `w`
//! since `(1 - alpha) F_N(w) = (1 + w)^kappa`, and interpolated in
//! `u = ln(1 + w)`.

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::golden::maximize;
use crate::hjbode::{investment_fraction, PolicyCurve};
use crate::interp::MonotoneCubic;
use crate::model::{KmPreferences, MarketParams};
use crate::paths::{mean_and_se, nested_stream, path_rng};
use crate::quadrature::NormalQuadrature;

/// Smallest positive node of the reduced-state grid.
const W_MIN: f64 = 1e-6;

/// Arguments beyond `w_max` times this factor are treated as leaving the grid.
const EXTRAPOLATION_LIMIT: f64 = 1e6;

/// Alternating coordinate searches stop after this many rounds.
const MAX_ROUNDS: usize = 50;

/// When consumption is taken within a period.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Timing {
    /// `X' = (1 - phi) X R`: the period's return accrues first and the
    /// fraction `phi` of grown wealth is consumed at the end of the period.
    GrowThenConsume,
    /// `X' = (X - c h) R`: consume at the start of the period.
    ConsumeThenGrow,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatticeConfig {
    pub periods: usize,
    pub grid_size: usize,
    pub quad_order: usize,
    pub timing: Timing,
    /// Largest grid node; sized from the market when `None`.
    pub w_max: Option<f64>,
    /// Golden-section bracket tolerance.
    pub tol: f64,
}

impl LatticeConfig {
    pub fn new(periods: usize) -> Self {
        Self {
            periods,
            ..Self::default()
        }
    }
}

impl Default for LatticeConfig {
    fn default() -> Self {
        Self {
            periods: 400,
            grid_size: 400,
            quad_order: 16,
            timing: Timing::GrowThenConsume,
            w_max: None,
            tol: 1e-10,
        }
    }
}

/// `w = z / x^rho`.
pub fn reduce(x: f64, z: f64, rho: f64) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::NonPositiveWealth(x));
    }
    Ok(z / x.powf(rho))
}

/// Upper end of the grid: accumulated utility relative to `x^rho` after a
/// six-standard-deviation wealth move over the whole horizon.
pub fn default_w_max(market: &MarketParams, prefs: &KmPreferences) -> f64 {
    let pi = investment_fraction(market, prefs);
    let t = prefs.horizon();
    let drift = (market.r + market.lambda * pi).abs() * t;
    let spread = 6.0 * pi.abs() * market.sigma * t.sqrt();
    let scale = (1.0 + t) * (prefs.rho().abs() * (drift + spread)).exp();
    scale.max(1e8)
}

#[derive(Debug, Clone)]
pub struct LatticeValue {
    pub w_grid: Vec<f64>,
    /// `ln((1 - alpha) F_n)` at the grid nodes for `n = 0..=N`.
    pub log_values: Vec<Vec<f64>>,
    /// Fraction of wealth consumed in period `n`, `n = 0..N`.
    pub c_frac: Vec<f64>,
    /// Optimised investment fraction in period `n`.
    pub pi: Vec<f64>,
    pub h: f64,
    pub alpha: f64,
    pub rho: f64,
    pub timing: Timing,
    u_grid: Vec<f64>,
}

impl LatticeValue {
    pub fn periods(&self) -> usize {
        self.c_frac.len()
    }

    /// Consumption rate `c_frac / h` in period `n`, comparable with `g(t_n)`.
    pub fn consumption_rate(&self, n: usize) -> f64 {
        self.c_frac[n] / self.h
    }

    /// `F_n(w)` by monotone interpolation of the stored log values.
    pub fn f_value(&self, n: usize, w: f64) -> f64 {
        let c = MonotoneCubic::pchip(self.u_grid.clone(), self.log_values[n].clone());
        c.eval(w.ln_1p()).exp() / (1.0 - self.alpha)
    }

    /// `f_n(x, z) = x^(1-alpha) F_n(z / x^rho)`.
    pub fn reconstruct(&self, n: usize, x: f64, z: f64) -> Result<f64> {
        let w = reduce(x, z, self.rho)?;
        Ok(x.powf(1.0 - self.alpha) * self.f_value(n, w))
    }
}

struct Step<'a> {
    market: &'a MarketParams,
    alpha: f64,
    rho: f64,
    h: f64,
    log_discount: f64,
    growth: f64,
    timing: Timing,
    quad: &'a NormalQuadrature,
    log_weights: Vec<f64>,
}

impl Step<'_> {
    /// `ln((1 - alpha) F_n(w))` for action `(phi, pi)` given `F_{n+1}`.
    fn log_value(&self, next: &MonotoneCubic, phi: f64, pi: f64, w: f64) -> f64 {
        let MarketParams { r, lambda, sigma } = *self.market;
        let (alpha, rho, h) = (self.alpha, self.rho, self.h);
        let mean = (r + lambda * pi - 0.5 * pi * pi * sigma * sigma) * h;
        let vol = pi * sigma * h.sqrt();
        let current = h.powf(1.0 - rho) * phi.powf(rho);
        let keep = (1.0 - phi).powf(-rho);
        let mut buf = [0.0; 64];
        let terms = &mut buf[..self.quad.nodes().len()];
        let mut peak = f64::NEG_INFINITY;
        for (j, &xi) in self.quad.nodes().iter().enumerate() {
            let log_r = mean + vol * xi;
            let arg = match self.timing {
                Timing::GrowThenConsume => {
                    (self.growth * w * (-rho * log_r).exp() + current) * keep
                }
                Timing::ConsumeThenGrow => {
                    self.growth * (current + w) * keep * (-rho * log_r).exp()
                }
            };
            let v = self.log_weights[j] + next.eval(arg.ln_1p()) + (1.0 - alpha) * log_r;
            terms[j] = v;
            peak = peak.max(v);
        }
        let sum: f64 = terms.iter().map(|v| (v - peak).exp()).sum();
        self.log_discount + (1.0 - alpha) * (1.0 - phi).ln() + peak + sum.ln()
    }

    /// Largest reduced argument reached from node `w`.
    fn max_argument(&self, phi: f64, pi: f64, w: f64) -> f64 {
        let MarketParams { r, lambda, sigma } = *self.market;
        let (rho, h) = (self.rho, self.h);
        let mean = (r + lambda * pi - 0.5 * pi * pi * sigma * sigma) * h;
        let vol = pi * sigma * h.sqrt();
        let current = h.powf(1.0 - rho) * phi.powf(rho);
        let keep = (1.0 - phi).powf(-rho);
        self.quad
            .nodes()
            .iter()
            .map(|&xi| {
                let log_r = mean + vol * xi;
                match self.timing {
                    Timing::GrowThenConsume => {
                        (self.growth * w * (-rho * log_r).exp() + current) * keep
                    }
                    Timing::ConsumeThenGrow => {
                        self.growth * (current + w) * keep * (-rho * log_r).exp()
                    }
                }
            })
            .fold(f64::NEG_INFINITY, |a, b| {
                if b.is_nan() {
                    f64::NAN
                } else {
                    a.max(b)
                }
            })
    }
}

/// Backward induction of the reduced discrete extended Bellman system.
pub fn dt_equilibrium(
    market: &MarketParams,
    prefs: &KmPreferences,
    cfg: &LatticeConfig,
) -> Result<LatticeValue> {
    if prefs.is_unit_rra() {
        return Err(Error::Unsupported(
            "the lattice uses the power transform and needs alpha != 1".into(),
        ));
    }
    assert!(cfg.periods >= 1 && cfg.grid_size >= 3 && cfg.quad_order >= 1 && cfg.quad_order <= 64);
    let (alpha, rho, delta) = (prefs.alpha(), prefs.rho(), prefs.delta());
    let kappa = prefs.kappa();
    let h = prefs.horizon() / cfg.periods as f64;
    let w_max = cfg.w_max.unwrap_or_else(|| default_w_max(market, prefs));

    let mut w_grid = Vec::with_capacity(cfg.grid_size);
    w_grid.push(0.0);
    let m = cfg.grid_size - 1;
    let ratio = (w_max / W_MIN).ln();
    for i in 0..m {
        w_grid.push(W_MIN * (ratio * i as f64 / (m - 1).max(1) as f64).exp());
    }
    let u_grid: Vec<f64> = w_grid.iter().map(|w| w.ln_1p()).collect();

    let quad = NormalQuadrature::new(cfg.quad_order);
    let step = Step {
        market,
        alpha,
        rho,
        h,
        log_discount: -delta * kappa * h,
        growth: (delta * h).exp(),
        timing: cfg.timing,
        quad: &quad,
        log_weights: quad.weights().iter().map(|w| w.ln()).collect(),
    };
    // maximise F = e^L / (1 - alpha)
    let sense = if alpha < 1.0 { 1.0 } else { -1.0 };
    let pi0 = investment_fraction(market, prefs);
    let pi_half_width = pi0.abs().max(1.0);
    let q_lo = 1e-8;
    let q_hi = 1.0 / h - 1e-8;

    let n_periods = cfg.periods;
    let mut log_values = vec![Vec::new(); n_periods + 1];
    log_values[n_periods] = u_grid.iter().map(|u| kappa * u).collect();
    let mut c_frac = vec![0.0; n_periods];
    let mut pis = vec![0.0; n_periods];

    for n in (0..n_periods).rev() {
        let next = MonotoneCubic::pchip(u_grid.clone(), log_values[n + 1].clone());
        let mut pi = pi0;
        let mut q = f64::NAN;
        for _ in 0..MAX_ROUNDS {
            let best_q = maximize(
                |q| sense * step.log_value(&next, q * h, pi, 0.0),
                q_lo,
                q_hi,
                cfg.tol,
            )
            .map_err(|source| Error::NoInteriorMax { step: n, source })?
            .argmax;
            let best_pi = maximize(
                |p| sense * step.log_value(&next, best_q * h, p, 0.0),
                pi0 - pi_half_width,
                pi0 + pi_half_width,
                cfg.tol,
            )
            .map_err(|source| Error::NoInteriorMax { step: n, source })?
            .argmax;
            let settled =
                (best_q - q).abs() <= 10.0 * cfg.tol && (best_pi - pi).abs() <= 10.0 * cfg.tol;
            q = best_q;
            pi = best_pi;
            if settled {
                break;
            }
        }
        let phi = q * h;
        let limit = w_max * EXTRAPOLATION_LIMIT;
        let reach = step.max_argument(phi, pi, w_max);
        if !(reach <= limit) {
            return Err(Error::GridUnderflow {
                w: reach,
                w_max,
                step: n,
            });
        }
        log_values[n] = w_grid
            .par_iter()
            .map(|&w| step.log_value(&next, phi, pi, w))
            .collect();
        c_frac[n] = phi;
        pis[n] = pi;
    }

    Ok(LatticeValue {
        w_grid,
        log_values,
        c_frac,
        pi: pis,
        h,
        alpha,
        rho,
        timing: cfg.timing,
        u_grid,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecursionOptions {
    /// Simulation step for the utility integral; `t`, `t + h` and `T` should
    /// be multiples of it.
    pub substep: f64,
    /// Include `int e^(-delta (s - tau)) c^rho ds`; off leaves only the
    /// terminal term.
    pub running_utility: bool,
}

impl Default for RecursionOptions {
    fn default() -> Self {
        Self {
            substep: 1.0 / 12.0,
            running_utility: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecursionCheck {
    pub lhs: f64,
    pub lhs_se: f64,
    pub rhs: f64,
    pub rhs_se: f64,
    pub deviation: f64,
    pub combined_se: f64,
}

impl RecursionCheck {
    /// Deviation in units of the combined standard error.
    pub fn z_score(&self) -> f64 {
        if self.combined_se == 0.0 {
            if self.deviation == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            self.deviation / self.combined_se
        }
    }
}

/// Precomputed per-substep coefficients for one simulation leg.
struct Leg {
    log_drift: Vec<f64>,
    vol: f64,
    /// Trapezoid weight times `e^(-delta (s - tau)) g(s)^rho` at each node.
    weight: Vec<f64>,
}

fn leg(
    policy: &PolicyCurve,
    market: &MarketParams,
    prefs: &KmPreferences,
    from: f64,
    to: f64,
    tau: f64,
    opts: &RecursionOptions,
) -> Result<Leg> {
    let steps = ((to - from) / opts.substep).round().max(0.0) as usize;
    let pi = policy.pi_hat();
    let vol_sq = pi * pi * market.sigma * market.sigma;
    let mut log_drift = Vec::with_capacity(steps);
    let mut weight = vec![0.0; steps + 1];
    if steps == 0 {
        return Ok(Leg {
            log_drift,
            vol: 0.0,
            weight,
        });
    }
    let dt = (to - from) / steps as f64;
    let base = market.r + market.lambda * pi - 0.5 * vol_sq;
    let mut prev = policy.integral_g(from)?;
    for i in 0..steps {
        let t1 = from + (i + 1) as f64 * dt;
        let int = policy.integral_g(t1)?;
        log_drift.push(base * dt - (int - prev));
        prev = int;
    }
    if opts.running_utility {
        let rho = prefs.rho();
        for (i, w) in weight.iter_mut().enumerate() {
            let s = from + i as f64 * dt;
            let end = if i == 0 || i == steps { 0.5 } else { 1.0 };
            *w = end * dt * (-prefs.delta() * (s - tau)).exp() * policy.g(s)?.powf(rho);
        }
    }
    Ok(Leg {
        log_drift,
        vol: pi * market.sigma * dt.sqrt(),
        weight,
    })
}

/// Run a leg from `log_x`: returns `(log X_end, sum of weighted X^rho)`.
fn run_leg(leg: &Leg, rho: f64, mut log_x: f64, rng: &mut rand_chacha::ChaCha8Rng) -> (f64, f64) {
    let mut acc = leg.weight[0] * (rho * log_x).exp();
    for (i, d) in leg.log_drift.iter().enumerate() {
        let xi: f64 = StandardNormal.sample(rng);
        log_x += d + leg.vol * xi;
        acc += leg.weight[i + 1] * (rho * log_x).exp();
    }
    (log_x, acc)
}

/// Nested Monte Carlo check of
/// `f(t, x, 0, t) = E[f(t + h, X_{t+h}, int_t^{t+h} e^(-delta (s-t)) c^rho ds, t)]`
/// for the CRRA-CES `f`.
///
/// The left side uses `n_outer * n_inner` direct paths from `(t, x0)`. The
/// right side draws `n_outer` states at `t + h` and averages `n_inner`
/// continuations from each, so its standard error reflects both levels.
/// Both sides share the same trapezoid rule, which splits exactly at `t + h`.
#[allow(clippy::too_many_arguments)]
pub fn f_recursion_check(
    policy: &PolicyCurve,
    market: &MarketParams,
    prefs: &KmPreferences,
    x0: f64,
    t: f64,
    h: f64,
    n_outer: usize,
    n_inner: usize,
    seed: u64,
    opts: &RecursionOptions,
) -> Result<RecursionCheck> {
    if prefs.is_unit_rra() {
        return Err(Error::Unsupported(
            "recursion check needs alpha != 1".into(),
        ));
    }
    assert!(n_outer >= 2 && n_inner >= 1 && h >= 0.0);
    let horizon = prefs.horizon();
    if !(t >= 0.0 && t + h <= horizon + 1e-12) {
        return Err(Error::OutOfDomain { t: t + h, horizon });
    }
    let rho = prefs.rho();
    let kappa = prefs.kappa();
    let scale = 1.0 / (1.0 - prefs.alpha());
    let terminal_discount = (-prefs.delta() * (horizon - t)).exp();
    let phi = |total: f64| scale * total.powf(kappa);

    let full = leg(policy, market, prefs, t, horizon, t, opts)?;
    let lhs_seed = seed ^ 0x9e37_79b9_7f4a_7c15;
    let lhs_samples: Vec<f64> = (0..n_outer)
        .into_par_iter()
        .flat_map_iter(|i| {
            let full = &full;
            (0..n_inner).map(move |j| {
                let mut rng = path_rng(lhs_seed, nested_stream(i as u64, j as u64));
                let (log_x, acc) = run_leg(full, rho, x0.ln(), &mut rng);
                phi(acc + terminal_discount * (rho * log_x).exp())
            })
        })
        .collect();
    let (lhs, lhs_se) = mean_and_se(&lhs_samples);

    if h == 0.0 {
        return Ok(RecursionCheck {
            lhs,
            lhs_se,
            rhs: lhs,
            rhs_se: lhs_se,
            deviation: 0.0,
            combined_se: lhs_se * std::f64::consts::SQRT_2,
        });
    }

    let first = leg(policy, market, prefs, t, t + h, t, opts)?;
    let rest = leg(policy, market, prefs, t + h, horizon, t, opts)?;
    let outer_means: Vec<f64> = (0..n_outer)
        .into_par_iter()
        .map(|i| {
            let mut rng = path_rng(seed, i as u64);
            let (log_mid, z) = run_leg(&first, rho, x0.ln(), &mut rng);
            // the node at t + h is shared by both legs
            let z = z - first.weight[first.weight.len() - 1] * (rho * log_mid).exp();
            let mut sum = 0.0;
            for j in 0..n_inner {
                let mut rng = path_rng(seed, nested_stream(i as u64, j as u64));
                let (log_x, acc) = run_leg(&rest, rho, log_mid, &mut rng);
                sum += phi(z + acc + terminal_discount * (rho * log_x).exp());
            }
            sum / n_inner as f64
        })
        .collect();
    let (rhs, rhs_se) = mean_and_se(&outer_means);
    let deviation = (lhs - rhs).abs();
    Ok(RecursionCheck {
        lhs,
        lhs_se,
        rhs,
        rhs_se,
        deviation,
        combined_se: (lhs_se * lhs_se + rhs_se * rhs_se).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hjbode::solve_coefficients;
    use crate::model::{validate, SolverConfig};

    fn policy(alpha: f64) -> PolicyCurve {
        let m = validate(
            MarketParams::reference(),
            KmPreferences::reference(alpha),
            SolverConfig::default(),
        )
        .unwrap();
        PolicyCurve::from_table(&solve_coefficients(&m).unwrap())
    }

    #[test]
    fn reduce_cases() {
        assert_eq!(reduce(3.0, 0.0, -1.0).unwrap(), 0.0);
        let a = reduce(1.7, 0.4, -1.0).unwrap();
        let b = reduce(3.4, 0.4 * 2f64.powf(-1.0), -1.0).unwrap();
        assert!((a - b).abs() < 1e-15);
        assert!(matches!(
            reduce(0.0, 1.0, -1.0),
            Err(Error::NonPositiveWealth(_))
        ));
    }

    #[test]
    fn terminal_layer_is_exact() {
        let v = dt_equilibrium(
            &MarketParams::reference(),
            &KmPreferences::reference(3.0),
            &LatticeConfig::new(4),
        )
        .unwrap();
        let kappa = 2.0;
        for (w, l) in v.w_grid.iter().zip(&v.log_values[4]) {
            assert_eq!(*l, kappa * w.ln_1p());
        }
        assert_eq!(v.f_value(4, 0.0), 1.0 / (1.0 - 3.0));
    }

    #[test]
    fn reconstruction_is_homogeneous() {
        let v = dt_equilibrium(
            &MarketParams::reference(),
            &KmPreferences::reference(3.0),
            &LatticeConfig::new(8),
        )
        .unwrap();
        for (x, z) in [(1.0, 0.0), (2.5, 0.3), (700.0, 1e-4)] {
            let a = v.reconstruct(3, x, z).unwrap();
            let b = v.reconstruct(3, 2.0 * x, 2f64.powf(-1.0) * z).unwrap();
            assert!((b / a - 2f64.powf(-2.0)).abs() < 1e-10);
        }
    }

    #[test]
    fn reduced_values_are_monotone() {
        let v = dt_equilibrium(
            &MarketParams::reference(),
            &KmPreferences::reference(4.0),
            &LatticeConfig::new(10),
        )
        .unwrap();
        // F decreases in w when rho < 0: more past utility lowers Phi
        for n in 0..=10 {
            let f: Vec<f64> = v.w_grid.iter().map(|&w| v.f_value(n, w)).collect();
            assert!(f.windows(2).all(|p| p[1] <= p[0]), "step {n}");
        }
    }

    #[test]
    fn without_discounting_growth_factor_is_one() {
        let prefs = KmPreferences::reference(3.0).with_delta(0.0);
        let a = dt_equilibrium(&MarketParams::reference(), &prefs, &LatticeConfig::new(5)).unwrap();
        assert!(a.c_frac.iter().all(|&c| c > 0.0 && c < 1.0));
    }

    #[test]
    fn unit_risk_aversion_is_unsupported() {
        let err = dt_equilibrium(
            &MarketParams::reference(),
            &KmPreferences::reference(1.0),
            &LatticeConfig::new(5),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Unsupported(_)));
    }

    #[test]
    fn single_period_consumes_interior_fraction() {
        let v = dt_equilibrium(
            &MarketParams::reference(),
            &KmPreferences::reference(2.0),
            &LatticeConfig::new(1),
        )
        .unwrap();
        assert_eq!(v.periods(), 1);
        assert!(v.c_frac[0] > 0.0 && v.c_frac[0] < 1.0);
    }

    #[test]
    fn zero_step_recursion_is_identity() {
        let p = policy(3.0);
        let c = f_recursion_check(
            &p,
            &MarketParams::reference(),
            &KmPreferences::reference(3.0),
            1000.0,
            30.0,
            0.0,
            20,
            10,
            5,
            &RecursionOptions::default(),
        )
        .unwrap();
        assert_eq!(c.lhs, c.rhs);
        assert_eq!(c.deviation, 0.0);
    }

    #[test]
    fn terminal_only_tower_property() {
        let prefs = KmPreferences::reference(3.0).with_delta(0.0);
        let m = validate(MarketParams::reference(), prefs, SolverConfig::default()).unwrap();
        let p = PolicyCurve::from_table(&solve_coefficients(&m).unwrap());
        let opts = RecursionOptions {
            running_utility: false,
            ..RecursionOptions::default()
        };
        let c = f_recursion_check(
            &p,
            &MarketParams::reference(),
            &prefs,
            1000.0,
            30.0,
            5.0,
            200,
            50,
            9,
            &opts,
        )
        .unwrap();
        assert!(c.z_score() < 4.0, "{c:?}");
    }
}
