//! Backward integration of the separated ODE hierarchy and the equilibrium
//! policy it induces.
//!
//! With `V = A(t) x^(1-alpha) / (1-alpha)` and `V^(k) = A^(k)(t) x^(1-alpha-k rho)`
//! the extended HJB system collapses to ODEs in `t`. For `alpha = 1` the
//! ansatz is `V = B(t) log x + L(t)` and `V^(k) = B^(k)(t) x^(-k rho)`.

use crate::error::{Error, Result};
use crate::interp::MonotoneCubic;
use crate::model::{
    exact_closure_order, KmPreferences, MarketParams, Model, Truncation, Variant, CLOSURE_TOL,
};
use crate::quadrature::cumulative_simpson;

/// Smallest value a coefficient may take before the solve is abandoned.
pub const COEFFICIENT_FLOOR: f64 = 1e-300;

/// Extra levels used by the truncation-convergence check.
pub const REFINEMENT_LEVELS: usize = 5;

/// How the hierarchy was closed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Closure {
    /// `A^(kbar) = 1` identically.
    Exact(usize),
    /// `A^(K+1) := A^(K)`.
    Truncated(usize),
}

impl Closure {
    pub fn depth(&self) -> usize {
        match *self {
            Closure::Exact(k) | Closure::Truncated(k) => k,
        }
    }
}

/// `pi_hat = lambda / (alpha sigma^2)`, or `lambda / sigma^2` when `alpha = 1`.
pub fn investment_fraction(market: &MarketParams, prefs: &KmPreferences) -> f64 {
    let s2 = market.sigma * market.sigma;
    if prefs.is_unit_rra() {
        market.lambda / s2
    } else {
        market.lambda / (prefs.alpha() * s2)
    }
}

fn check_positive(name: impl FnOnce() -> String, t: f64, value: f64) -> Result<()> {
    if value.is_finite() && value > COEFFICIENT_FLOOR {
        Ok(())
    } else {
        Err(Error::NonPositiveCoefficient {
            name: name(),
            t,
            value,
        })
    }
}

/// Time derivatives of `(A, A^(1), ..., A^(K))`.
///
/// `levels` holds `A^(1)..A^(K+1)`, the last entry supplied by the closure;
/// `out` receives `K + 1` derivatives with `out[0] = dA/dt`.
pub fn rhs_general(
    t: f64,
    a: f64,
    levels: &[f64],
    market: &MarketParams,
    prefs: &KmPreferences,
    out: &mut [f64],
) -> Result<()> {
    assert!(!levels.is_empty());
    assert_eq!(out.len(), levels.len());
    check_positive(|| "A".into(), t, a)?;
    for (i, &v) in levels.iter().enumerate() {
        check_positive(|| format!("A_{}", i + 1), t, v)?;
    }
    let (alpha, rho, delta) = (prefs.alpha(), prefs.rho(), prefs.delta());
    let kappa = prefs.kappa();
    let MarketParams { r, lambda, sigma } = *market;
    let s2 = sigma * sigma;

    let ratio = a / levels[0];
    let g = ratio.powf(1.0 / (rho - 1.0));
    let g_rho = ratio.powf(rho / (rho - 1.0));
    let base = r + lambda * lambda / (2.0 * alpha * s2) - delta / rho;

    out[0] = -(1.0 - alpha) * a * base + (1.0 - alpha) * (1.0 - 1.0 / rho) * a * g;
    for k in 1..levels.len() {
        let kf = k as f64;
        let beta = 1.0 - alpha - kf * rho;
        let ak = levels[k - 1];
        let drift = base - kf * rho * lambda * lambda / (2.0 * alpha * alpha * s2);
        out[k] = -beta * ak * drift + beta * ak * g - (kappa - kf) * levels[k] * g_rho;
    }
    Ok(())
}

/// Time derivatives of `(B, L, B^(1), ..., B^(K))`.
///
/// `levels` holds `B^(1)..B^(K+1)`; `out` receives `K + 2` entries with
/// `out[0] = dB/dt = 0` and `out[1] = dL/dt`.
pub fn rhs_unit_rra(
    t: f64,
    b: f64,
    l: f64,
    levels: &[f64],
    market: &MarketParams,
    prefs: &KmPreferences,
    out: &mut [f64],
) -> Result<()> {
    assert!(!levels.is_empty());
    assert_eq!(out.len(), levels.len() + 1);
    check_positive(|| "B".into(), t, b)?;
    if !l.is_finite() {
        return Err(Error::NonPositiveCoefficient {
            name: "L".into(),
            t,
            value: l,
        });
    }
    for (i, &v) in levels.iter().enumerate() {
        check_positive(|| format!("B_{}", i + 1), t, v)?;
    }
    let (rho, delta) = (prefs.rho(), prefs.delta());
    let MarketParams { r, lambda, sigma } = *market;
    let s2 = sigma * sigma;

    let ratio = b / levels[0];
    let g = ratio.powf(1.0 / (rho - 1.0));
    let g_rho = ratio.powf(rho / (rho - 1.0));
    let growth = r + lambda * lambda / (2.0 * s2) - g;

    out[0] = 0.0;
    out[1] = -(b * growth + levels[0] * g_rho / rho - delta / rho);
    for k in 1..levels.len() {
        let kf = k as f64;
        let bk = levels[k - 1];
        out[k + 1] = -(-kf * rho * bk * growth
            + 0.5 * kf * kf * rho * rho * bk * lambda * lambda / s2
            + kf * delta * bk
            - kf * levels[k] * g_rho);
    }
    Ok(())
}

/// Solved coefficients on the uniform grid `t_i = i T / M`.
#[derive(Debug, Clone)]
pub struct CoefficientTable {
    times: Vec<f64>,
    lead: Vec<f64>,
    lead_rate: Vec<f64>,
    offset: Option<Vec<f64>>,
    offset_rate: Option<Vec<f64>>,
    levels: Vec<Vec<f64>>,
    level_rates: Vec<Vec<f64>>,
    variant: Variant,
    closure: Closure,
    market: MarketParams,
    prefs: KmPreferences,
    log_lead: MonotoneCubic,
    log_first: MonotoneCubic,
}

impl CoefficientTable {
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn step(&self) -> f64 {
        self.times[1] - self.times[0]
    }

    /// `A(t_i)` in the general case, `B(t_i)` for unit risk aversion.
    pub fn lead(&self) -> &[f64] {
        &self.lead
    }

    pub fn lead_rate(&self) -> &[f64] {
        &self.lead_rate
    }

    /// `L(t_i)`, only present for unit risk aversion.
    pub fn offset(&self) -> Option<&[f64]> {
        self.offset.as_deref()
    }

    pub fn offset_rate(&self) -> Option<&[f64]> {
        self.offset_rate.as_deref()
    }

    /// Number of stored hierarchy levels.
    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    /// `A^(k)(t_i)` for `k = 1..=depth`.
    pub fn level(&self, k: usize) -> &[f64] {
        &self.levels[k - 1]
    }

    pub fn level_rate(&self, k: usize) -> &[f64] {
        &self.level_rates[k - 1]
    }

    /// Value the closure assigns to level `depth + 1` at node `i`.
    pub fn closure_value(&self, i: usize) -> f64 {
        match self.closure {
            Closure::Exact(_) => 1.0,
            Closure::Truncated(k) => self.levels[k - 1][i],
        }
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn closure(&self) -> Closure {
        self.closure
    }

    pub fn market(&self) -> &MarketParams {
        &self.market
    }

    pub fn prefs(&self) -> &KmPreferences {
        &self.prefs
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn pi_hat(&self) -> f64 {
        investment_fraction(&self.market, &self.prefs)
    }

    /// `g(t_i)` at every node.
    pub fn g_nodes(&self) -> Vec<f64> {
        let e = 1.0 / (self.prefs.rho() - 1.0);
        self.lead
            .iter()
            .zip(&self.levels[0])
            .map(|(a, a1)| (a / a1).powf(e))
            .collect()
    }

    /// `d log g / dt` at every node, from the exact right-hand sides.
    pub fn log_g_rate_nodes(&self) -> Vec<f64> {
        let e = 1.0 / (self.prefs.rho() - 1.0);
        (0..self.times.len())
            .map(|i| {
                e * (self.lead_rate[i] / self.lead[i] - self.level_rates[0][i] / self.levels[0][i])
            })
            .collect()
    }

    /// Copy with the lead coefficient scaled by `factor`; the rates scale with
    /// it so only the policy feedback is disturbed. Used as a sensitivity
    /// probe for residual checks.
    pub fn with_scaled_lead(&self, factor: f64) -> CoefficientTable {
        let mut out = self.clone();
        for v in out.lead.iter_mut().chain(out.lead_rate.iter_mut()) {
            *v *= factor;
        }
        out.rebuild_interpolants();
        out
    }

    fn rebuild_interpolants(&mut self) {
        self.log_lead = log_interpolant(&self.times, &self.lead, &self.lead_rate);
        self.log_first = log_interpolant(&self.times, &self.levels[0], &self.level_rates[0]);
    }

    fn check_domain(&self, t: f64) -> Result<f64> {
        let horizon = self.horizon();
        let slack = 1e-12 * horizon;
        if !(t >= -slack && t <= horizon + slack) {
            return Err(Error::OutOfDomain { t, horizon });
        }
        Ok(t.clamp(0.0, horizon))
    }
}

fn log_interpolant(times: &[f64], values: &[f64], rates: &[f64]) -> MonotoneCubic {
    let y: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    let d: Vec<f64> = rates.iter().zip(values).map(|(r, v)| r / v).collect();
    MonotoneCubic::with_slopes(times.to_vec(), y, d)
}

/// `g(t) = (A(t) / A^(1)(t))^(1/(rho-1))`, interpolating `log A` and
/// `log A^(1)` with monotone cubics between nodes.
pub fn consumption_fraction(table: &CoefficientTable, t: f64) -> Result<f64> {
    let t = table.check_domain(t)?;
    let e = 1.0 / (table.prefs.rho() - 1.0);
    Ok((e * (table.log_lead.eval(t) - table.log_first.eval(t))).exp())
}

/// Depth the solver uses for `Truncation::Auto` when no exact closure exists.
pub fn default_depth(prefs: &KmPreferences) -> usize {
    let kappa = if prefs.is_unit_rra() {
        0.0
    } else {
        prefs.kappa()
    };
    (kappa.ceil() + 10.0).max(1.0) as usize
}

/// Closure chosen for the model's truncation setting.
pub fn choose_closure(model: &Model) -> Closure {
    let prefs = model.prefs();
    let kbar = exact_closure_order(prefs, CLOSURE_TOL);
    match (model.cfg().truncation, kbar) {
        (Truncation::Auto, Some(k)) => Closure::Exact(k),
        (Truncation::Auto, None) => Closure::Truncated(default_depth(prefs)),
        (Truncation::Depth(d), Some(k)) if k <= d => Closure::Exact(k),
        (Truncation::Depth(d), _) => Closure::Truncated(d),
    }
}

/// Solve the hierarchy and, for truncated closures, confirm that adding
/// [`REFINEMENT_LEVELS`] levels moves `g` by less than `convergence_tol`.
pub fn solve_coefficients(model: &Model) -> Result<CoefficientTable> {
    let closure = choose_closure(model);
    let table = solve_with_closure(model, closure)?;
    if let Closure::Truncated(depth) = closure {
        let tol = model.cfg().convergence_tol;
        let deviation =
            match solve_with_closure(model, Closure::Truncated(depth + REFINEMENT_LEVELS)) {
                Ok(finer) => max_abs_diff(&table.g_nodes(), &finer.g_nodes()),
                Err(_) => f64::INFINITY,
            };
        if !(deviation < tol) {
            return Err(Error::TruncationNotConverged {
                depth,
                deviation,
                tol,
            });
        }
    }
    Ok(table)
}

/// Solve with `A^(K+1) := A^(K)` at the given depth, skipping the
/// convergence check. An exact closure at or below `depth` still wins.
pub fn solve_hierarchy(model: &Model, depth: usize) -> Result<CoefficientTable> {
    assert!(depth >= 1);
    let closure = match exact_closure_order(model.prefs(), CLOSURE_TOL) {
        Some(k) if k <= depth => Closure::Exact(k),
        _ => Closure::Truncated(depth),
    };
    solve_with_closure(model, closure)
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Right-hand side in terms of the integrated state vector.
struct System<'a> {
    market: &'a MarketParams,
    prefs: &'a KmPreferences,
    variant: Variant,
    closure: Closure,
    /// Levels carried in the state; the exact closure keeps `A^(kbar)` out.
    dynamic: usize,
    scratch: Vec<f64>,
}

impl<'a> System<'a> {
    fn new(model: &'a Model, closure: Closure) -> Self {
        let dynamic = match closure {
            Closure::Exact(k) => k - 1,
            Closure::Truncated(k) => k,
        };
        Self {
            market: model.market(),
            prefs: model.prefs(),
            variant: model.variant(),
            closure,
            dynamic,
            scratch: vec![0.0; dynamic + 1],
        }
    }

    /// Number of entries before the hierarchy levels in the state vector.
    fn head(&self) -> usize {
        match self.variant {
            Variant::General => 1,
            Variant::UnitRra => 2,
        }
    }

    fn state_len(&self) -> usize {
        self.head() + self.dynamic
    }

    fn terminal(&self) -> Vec<f64> {
        let mut y = vec![1.0; self.state_len()];
        if self.variant == Variant::UnitRra {
            y[1] = 0.0;
        }
        y
    }

    fn eval(&mut self, t: f64, y: &[f64], out: &mut [f64]) -> Result<()> {
        let head = self.head();
        let n = self.dynamic;
        self.scratch[..n].copy_from_slice(&y[head..]);
        self.scratch[n] = match self.closure {
            Closure::Exact(_) => 1.0,
            Closure::Truncated(_) => y[head + n - 1],
        };
        match self.variant {
            Variant::General => rhs_general(t, y[0], &self.scratch, self.market, self.prefs, out),
            Variant::UnitRra => {
                rhs_unit_rra(t, y[0], y[1], &self.scratch, self.market, self.prefs, out)
            }
        }
    }
}

fn solve_with_closure(model: &Model, closure: Closure) -> Result<CoefficientTable> {
    let steps = model.cfg().ode_steps;
    let horizon = model.prefs().horizon();
    let h = horizon / steps as f64;
    let mut sys = System::new(model, closure);
    let n = sys.state_len();

    let mut states = vec![vec![0.0; n]; steps + 1];
    let mut rates = vec![vec![0.0; n]; steps + 1];
    states[steps] = sys.terminal();

    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    for i in (0..steps).rev() {
        let t = (i + 1) as f64 * h;
        let y = states[i + 1].clone();
        sys.eval(t, &y, &mut k1)?;
        rates[i + 1].copy_from_slice(&k1);
        for j in 0..n {
            tmp[j] = y[j] - 0.5 * h * k1[j];
        }
        sys.eval(t - 0.5 * h, &tmp, &mut k2)?;
        for j in 0..n {
            tmp[j] = y[j] - 0.5 * h * k2[j];
        }
        sys.eval(t - 0.5 * h, &tmp, &mut k3)?;
        for j in 0..n {
            tmp[j] = y[j] - h * k3[j];
        }
        sys.eval(t - h, &tmp, &mut k4)?;
        let next = &mut states[i];
        for j in 0..n {
            next[j] = y[j] - h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
    }
    let y0 = states[0].clone();
    sys.eval(0.0, &y0, &mut k1)?;
    rates[0].copy_from_slice(&k1);

    let times: Vec<f64> = (0..=steps).map(|i| i as f64 * h).collect();
    let column = |m: &Vec<Vec<f64>>, j: usize| -> Vec<f64> { m.iter().map(|row| row[j]).collect() };
    let head = sys.head();
    let mut levels: Vec<Vec<f64>> = (0..sys.dynamic)
        .map(|j| column(&states, head + j))
        .collect();
    let mut level_rates: Vec<Vec<f64>> =
        (0..sys.dynamic).map(|j| column(&rates, head + j)).collect();
    if let Closure::Exact(_) = closure {
        levels.push(vec![1.0; steps + 1]);
        level_rates.push(vec![0.0; steps + 1]);
    }
    let (offset, offset_rate) = match sys.variant {
        Variant::General => (None, None),
        Variant::UnitRra => (Some(column(&states, 1)), Some(column(&rates, 1))),
    };
    let lead = column(&states, 0);
    let lead_rate = column(&rates, 0);
    let log_lead = log_interpolant(&times, &lead, &lead_rate);
    let log_first = log_interpolant(&times, &levels[0], &level_rates[0]);
    Ok(CoefficientTable {
        times,
        lead,
        lead_rate,
        offset,
        offset_rate,
        levels,
        level_rates,
        variant: sys.variant,
        closure,
        market: *model.market(),
        prefs: *model.prefs(),
        log_lead,
        log_first,
    })
}

/// Equilibrium policy: constant `pi_hat` and a consumption-fraction curve
/// `g` on a uniform grid over `[0, T]`.
#[derive(Debug, Clone)]
pub struct PolicyCurve {
    pi_hat: f64,
    times: Vec<f64>,
    g: Vec<f64>,
    log_g: MonotoneCubic,
    cumulative: Vec<f64>,
}

impl PolicyCurve {
    /// From node values only; slopes of `log g` come from PCHIP. The grid
    /// must be uniform with an even number of intervals.
    pub fn new(pi_hat: f64, times: Vec<f64>, g: Vec<f64>) -> Self {
        let log = g.iter().map(|v| v.ln()).collect();
        let log_g = MonotoneCubic::pchip(times.clone(), log);
        Self::assemble(pi_hat, times, g, log_g)
    }

    /// From node values and exact `d log g / dt` at the nodes.
    pub fn with_log_rates(pi_hat: f64, times: Vec<f64>, g: Vec<f64>, log_rates: Vec<f64>) -> Self {
        let log = g.iter().map(|v| v.ln()).collect();
        let log_g = MonotoneCubic::with_slopes(times.clone(), log, log_rates);
        Self::assemble(pi_hat, times, g, log_g)
    }

    pub fn from_table(table: &CoefficientTable) -> Self {
        Self::with_log_rates(
            table.pi_hat(),
            table.times.clone(),
            table.g_nodes(),
            table.log_g_rate_nodes(),
        )
    }

    fn assemble(pi_hat: f64, times: Vec<f64>, g: Vec<f64>, log_g: MonotoneCubic) -> Self {
        assert!(times.len() >= 3 && times.len() == g.len());
        let h = times[1] - times[0];
        debug_assert!(times
            .windows(2)
            .all(|w| ((w[1] - w[0]) - h).abs() <= 1e-9 * h));
        let cumulative = cumulative_simpson(&g, h);
        Self {
            pi_hat,
            times,
            g,
            log_g,
            cumulative,
        }
    }

    pub fn pi_hat(&self) -> f64 {
        self.pi_hat
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn g_nodes(&self) -> &[f64] {
        &self.g
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().unwrap()
    }

    fn check_domain(&self, t: f64) -> Result<f64> {
        let horizon = self.horizon();
        let slack = 1e-12 * horizon;
        if !(t >= -slack && t <= horizon + slack) {
            return Err(Error::OutOfDomain { t, horizon });
        }
        Ok(t.clamp(0.0, horizon))
    }

    fn node_index(&self, t: f64) -> Option<usize> {
        let h = self.times[1] - self.times[0];
        let i = (t / h).round();
        ((t - i * h).abs() <= 1e-9 * h).then_some(i as usize)
    }

    /// Consumption fraction `g(t)`.
    pub fn g(&self, t: f64) -> Result<f64> {
        let t = self.check_domain(t)?;
        if let Some(i) = self.node_index(t) {
            return Ok(self.g[i]);
        }
        Ok(self.log_g.eval(t).exp())
    }

    /// Annuity demand `1 / g(t)`.
    pub fn annuity(&self, t: f64) -> Result<f64> {
        Ok(1.0 / self.g(t)?)
    }

    /// `int_0^t g(s) ds`: composite Simpson up to the last node, then
    /// Simpson's rule on the interpolant for the remainder.
    pub fn integral_g(&self, t: f64) -> Result<f64> {
        let t = self.check_domain(t)?;
        if let Some(i) = self.node_index(t) {
            return Ok(self.cumulative[i]);
        }
        let h = self.times[1] - self.times[0];
        let i = ((t / h).floor() as usize).min(self.times.len() - 2);
        let a = self.times[i];
        let m = 0.5 * (a + t);
        let f = |s: f64| self.log_g.eval(s).exp();
        Ok(self.cumulative[i] + (t - a) / 6.0 * (f(a) + 4.0 * f(m) + f(t)))
    }
}
