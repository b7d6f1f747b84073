//! Residual and Monte Carlo checks of the equilibrium value representations,
//! and the suite behind the `verify` command.

use std::fmt;
use std::str::FromStr;

use rand_distr::{Distribution, StandardNormal};

use crate::benchmark::EzSolution;
use crate::dtoracle::{dt_equilibrium, f_recursion_check, LatticeConfig, RecursionOptions};
use crate::error::{Error, Result};
use crate::hjbode::{solve_coefficients, CoefficientTable, PolicyCurve};
use crate::model::{validate, KmPreferences, MarketParams, SolverConfig, Variant};
use crate::paths::{map_paths, mean_and_se};
use crate::quadrature::simpson_weights;

/// Normalized residuals `|sum of terms| / max |term|`, one row per time node.
#[derive(Debug, Clone)]
pub struct ResidualGrid {
    pub t_nodes: Vec<f64>,
    pub x_nodes: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

impl ResidualGrid {
    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .flatten()
            .fold(0.0, |a, &b| if b.is_nan() { f64::NAN } else { a.max(b) })
    }
}

/// Fourth-order finite-difference derivative at node `i` of the uniform
/// grid sequence `y(0..n)`.
fn fd_derivative_by(y: impl Fn(usize) -> f64, n: usize, i: usize, h: f64) -> f64 {
    assert!(n >= 5);
    let d = if i >= 2 && i + 2 < n {
        y(i - 2) - 8.0 * y(i - 1) + 8.0 * y(i + 1) - y(i + 2)
    } else if i == 0 {
        -25.0 * y(0) + 48.0 * y(1) - 36.0 * y(2) + 16.0 * y(3) - 3.0 * y(4)
    } else if i == 1 {
        -3.0 * y(0) - 10.0 * y(1) + 18.0 * y(2) - 6.0 * y(3) + y(4)
    } else if i == n - 1 {
        3.0 * y(n - 5) - 16.0 * y(n - 4) + 36.0 * y(n - 3) - 48.0 * y(n - 2) + 25.0 * y(n - 1)
    } else {
        -y(n - 5) + 6.0 * y(n - 4) - 18.0 * y(n - 3) + 10.0 * y(n - 2) + 3.0 * y(n - 1)
    };
    d / (12.0 * h)
}

fn fd_derivative(y: &[f64], i: usize, h: f64) -> f64 {
    fd_derivative_by(|j| y[j], y.len(), i, h)
}

/// Derivative of a positive coefficient, differencing its logarithm.
fn fd_log_derivative(y: &[f64], i: usize, h: f64) -> f64 {
    y[i] * fd_derivative_by(|j| y[j].ln(), y.len(), i, h)
}

fn normalized(terms: &[f64]) -> f64 {
    let scale = terms.iter().fold(0.0f64, |a, t| a.max(t.abs()));
    if scale == 0.0 {
        return 0.0;
    }
    terms.iter().sum::<f64>().abs() / scale
}

/// Residuals of the value equation and every auxiliary equation at each
/// `(t, x)`, using the ansatz `V = A x^(1-alpha) / (1-alpha)`,
/// `V^(k) = A^(k) x^(1-alpha-k rho)` (or `B log x + L`, `B^(k) x^(-k rho)`
/// for unit risk aversion) with coefficients at the nearest solver node.
/// Time derivatives are fourth-order differences on the solver grid, taken
/// in `log` for the positive coefficients since they behave like
/// exponentials near maturity.
pub fn pde_residual_grid(
    table: &CoefficientTable,
    t_nodes: &[f64],
    x_nodes: &[f64],
) -> Result<ResidualGrid> {
    let horizon = table.horizon();
    let h = table.step();
    let MarketParams { r, lambda, sigma } = *table.market();
    let prefs = table.prefs();
    let (alpha, rho, delta) = (prefs.alpha(), prefs.rho(), prefs.delta());
    let pi = table.pi_hat();
    let g_nodes = table.g_nodes();
    let growth = r + pi * lambda;
    let var = sigma * sigma * pi * pi;
    let depth = table.depth();
    let lead_dot: Vec<f64> = (0..table.times().len())
        .map(|i| fd_log_derivative(table.lead(), i, h))
        .collect();

    let mut values = Vec::with_capacity(t_nodes.len());
    for &t in t_nodes {
        if !(t >= 0.0 && t <= horizon) {
            return Err(Error::OutOfDomain { t, horizon });
        }
        let i = ((t / h).round() as usize).min(table.times().len() - 1);
        let g = g_nodes[i];
        let g_rho = g.powf(rho);
        let a = table.lead()[i];
        let a1 = table.level(1)[i];
        let level_terms = |k: usize, x: f64| -> [f64; 6] {
            let kf = k as f64;
            let ak = table.level(k)[i];
            let next = if k < depth {
                table.level(k + 1)[i]
            } else {
                table.closure_value(i)
            };
            let dot = fd_log_derivative(table.level(k), i, h);
            let (beta, coupling, decay) = match table.variant() {
                Variant::General => {
                    let kappa = prefs.kappa();
                    (
                        1.0 - alpha - kf * rho,
                        (kappa - kf) * next * g_rho,
                        -delta * (kappa - kf) * ak,
                    )
                }
                Variant::UnitRra => (-kf * rho, -kf * next * g_rho, kf * delta * ak),
            };
            let p = x.powf(beta);
            [
                dot * p,
                beta * ak * growth * p,
                -beta * ak * g * p,
                0.5 * beta * (beta - 1.0) * ak * var * p,
                coupling * p,
                decay * p,
            ]
        };
        let mut row = Vec::with_capacity(x_nodes.len());
        for &x in x_nodes {
            if !(x > 0.0) {
                return Err(Error::NonPositiveWealth(x));
            }
            let value = match table.variant() {
                Variant::General => {
                    let p = x.powf(1.0 - alpha);
                    [
                        lead_dot[i] / (1.0 - alpha) * p,
                        a * growth * p,
                        -a * g * p,
                        -0.5 * alpha * a * var * p,
                        a1 * g_rho / rho * p,
                        -delta / rho * a * p,
                    ]
                    .to_vec()
                }
                Variant::UnitRra => {
                    let l = table.offset().expect("unit table has an offset");
                    vec![
                        lead_dot[i] * x.ln(),
                        fd_derivative(l, i, h),
                        a * growth,
                        -a * g,
                        -0.5 * a * var,
                        a1 * g_rho / rho,
                        -delta / rho,
                    ]
                }
            };
            let mut worst = normalized(&value);
            for k in 1..=depth {
                worst = worst.max(normalized(&level_terms(k, x)));
            }
            row.push(worst);
        }
        values.push(row);
    }
    Ok(ResidualGrid {
        t_nodes: t_nodes.to_vec(),
        x_nodes: x_nodes.to_vec(),
        values,
    })
}

/// `n` evenly spaced points on `[lo, hi]`.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RepresentationCheck {
    pub k: usize,
    pub mc: f64,
    pub std_error: f64,
    pub ode: f64,
}

impl RepresentationCheck {
    pub fn z_score(&self) -> f64 {
        let d = (self.mc - self.ode).abs();
        if d == 0.0 {
            0.0
        } else {
            d / self.std_error
        }
    }
}

/// Simulation step for the discounted-utility integral.
pub const DAILY: f64 = 1.0 / 365.0;

/// Monte Carlo estimates of `V(0, x0)` (`k = 0`) and `V^(k)(0, x0)` from
/// equilibrium paths, against the ODE coefficients. The utility integral
/// uses Simpson's rule on substeps of about `substep`; all `ks` share the
/// same paths.
#[allow(clippy::too_many_arguments)]
pub fn probabilistic_representation_check(
    table: &CoefficientTable,
    policy: &PolicyCurve,
    ks: &[usize],
    n_paths: usize,
    seed: u64,
    x0: f64,
    substep: f64,
) -> Result<Vec<RepresentationCheck>> {
    assert!(n_paths >= 2);
    let prefs = table.prefs();
    let market = table.market();
    let (alpha, rho, delta) = (prefs.alpha(), prefs.rho(), prefs.delta());
    let horizon = table.horizon();
    for &k in ks {
        if k > table.depth() {
            return Err(Error::Unsupported(format!(
                "level {k} exceeds depth {}",
                table.depth()
            )));
        }
    }
    let mut steps = ((horizon / substep).round() as usize).max(2);
    steps += steps % 2;
    let dt = horizon / steps as f64;
    let pi = policy.pi_hat();
    let vol = pi * market.sigma;
    let drift = market.r + market.lambda * pi - 0.5 * vol * vol;
    let mut log_drift = Vec::with_capacity(steps);
    let mut prev = 0.0;
    for i in 1..=steps {
        let int = policy.integral_g(i as f64 * dt)?;
        log_drift.push(drift * dt - (int - prev));
        prev = int;
    }
    let weights: Vec<f64> = simpson_weights(steps, dt)
        .iter()
        .enumerate()
        .map(|(i, w)| {
            let s = i as f64 * dt;
            Ok(w * (-delta * s).exp() * policy.g(s)?.powf(rho))
        })
        .collect::<Result<_>>()?;
    let shock = vol * dt.sqrt();
    let terminal = (-delta * horizon).exp();

    let totals = map_paths(n_paths, seed, |_, rng| {
        let mut log_x = x0.ln();
        let mut acc = weights[0] * (rho * log_x).exp();
        for (i, d) in log_drift.iter().enumerate() {
            let xi: f64 = StandardNormal.sample(rng);
            log_x += d + shock * xi;
            acc += weights[i + 1] * (rho * log_x).exp();
        }
        acc + terminal * (rho * log_x).exp()
    });

    let last = 0;
    let mut out = Vec::with_capacity(ks.len());
    for &k in ks {
        let kf = k as f64;
        let (samples, ode): (Vec<f64>, f64) = match table.variant() {
            Variant::General => {
                let kappa = prefs.kappa();
                if k == 0 {
                    let s = totals
                        .iter()
                        .map(|w| w.powf(kappa) / (1.0 - alpha))
                        .collect();
                    (s, table.lead()[last] * x0.powf(1.0 - alpha) / (1.0 - alpha))
                } else {
                    let s = totals.iter().map(|w| w.powf(kappa - kf)).collect();
                    (s, table.level(k)[last] * x0.powf(1.0 - alpha - kf * rho))
                }
            }
            Variant::UnitRra => {
                if k == 0 {
                    let s = totals.iter().map(|w| w.ln() / rho).collect();
                    let l = table.offset().expect("unit table has an offset")[last];
                    (s, table.lead()[last] * x0.ln() + l)
                } else {
                    let s = totals.iter().map(|w| w.powf(-kf)).collect();
                    (s, table.level(k)[last] * x0.powf(-kf * rho))
                }
            }
        };
        let (mc, std_error) = mean_and_se(&samples);
        out.push(RepresentationCheck {
            k,
            mc,
            std_error,
            ode,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecursiveProbe {
    pub direct: f64,
    pub recursive: f64,
    pub rel_error: f64,
}

/// For the riskless stream `c = g X` with `pi = 0`, compare
/// `U_0 = Phi(int e^(-delta s) c^rho ds + e^(-delta T) X_T^rho)` by Simpson's
/// rule with the backward RK4 solution of
/// `U' = -(1/rho) c^rho ((1-alpha) U)^(1 - rho/(1-alpha)) + delta (1-alpha)/rho U`.
/// Both use the policy grid, RK4 with a double step so that its midpoints
/// land on nodes.
pub fn recursive_representation_probe(
    policy: &PolicyCurve,
    market: &MarketParams,
    prefs: &KmPreferences,
    x0: f64,
) -> Result<RecursiveProbe> {
    if prefs.is_unit_rra() {
        return Err(Error::Unsupported(
            "the recursive probe needs alpha != 1".into(),
        ));
    }
    let (alpha, rho, delta) = (prefs.alpha(), prefs.rho(), prefs.delta());
    let times = policy.times();
    let n = times.len() - 1;
    if !n.is_multiple_of(2) {
        return Err(Error::Unsupported(
            "the probe needs an even number of intervals".into(),
        ));
    }
    let horizon = policy.horizon();
    let fine = n * PROBE_SUBSTEPS;
    let h = horizon / fine as f64;
    let nodes: Vec<f64> = (0..=fine).map(|j| j as f64 * h).collect();
    let c: Vec<f64> = nodes
        .iter()
        .map(|&t| Ok(policy.g(t)? * x0 * (market.r * t - policy.integral_g(t)?).exp()))
        .collect::<Result<_>>()?;
    let x_t = x0 * (market.r * horizon - policy.integral_g(horizon)?).exp();

    let w = simpson_weights(fine, h);
    let running: f64 = w
        .iter()
        .zip(nodes.iter().zip(&c))
        .map(|(w, (t, c))| w * (-delta * t).exp() * c.powf(rho))
        .sum();
    let direct =
        (running + (-delta * horizon).exp() * x_t.powf(rho)).powf(prefs.kappa()) / (1.0 - alpha);

    let e = 1.0 - rho / (1.0 - alpha);
    let rate = |i: usize, u: f64| {
        -c[i].powf(rho) / rho * ((1.0 - alpha) * u).powf(e) + delta * (1.0 - alpha) / rho * u
    };
    let mut u = x_t.powf(1.0 - alpha) / (1.0 - alpha);
    let step = 2.0 * h;
    let mut i = fine;
    while i >= 2 {
        let k1 = rate(i, u);
        let k2 = rate(i - 1, u - 0.5 * step * k1);
        let k3 = rate(i - 1, u - 0.5 * step * k2);
        let k4 = rate(i - 2, u - step * k3);
        u -= step / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        i -= 2;
    }
    Ok(RecursiveProbe {
        direct,
        recursive: u,
        rel_error: (u / direct - 1.0).abs(),
    })
}

/// Checks the `verify` suite can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckKind {
    PdeResidual,
    Representation,
    RecursiveProbe,
    Lattice,
    FRecursion,
    Merton,
}

impl CheckKind {
    pub const ALL: [CheckKind; 6] = [
        CheckKind::PdeResidual,
        CheckKind::Representation,
        CheckKind::RecursiveProbe,
        CheckKind::Lattice,
        CheckKind::FRecursion,
        CheckKind::Merton,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CheckKind::PdeResidual => "pde_residual",
            CheckKind::Representation => "representation",
            CheckKind::RecursiveProbe => "recursive_probe",
            CheckKind::Lattice => "lattice",
            CheckKind::FRecursion => "f_recursion",
            CheckKind::Merton => "merton",
        }
    }
}

impl fmt::Display for CheckKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CheckKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        CheckKind::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| format!("unknown check `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
}

impl CheckResult {
    fn below(name: String, value: f64, threshold: f64) -> Self {
        Self {
            name,
            value,
            threshold,
            pass: value < threshold,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SuiteConfig {
    pub market: MarketParams,
    pub prefs: Vec<KmPreferences>,
    pub solver: SolverConfig,
    pub checks: Vec<CheckKind>,
    /// Percentage added to the lead coefficient before table-based checks.
    pub perturb_lead_pct: Option<f64>,
}

pub const RESIDUAL_TOL: f64 = 1e-6;
pub const MC_SIGMAS: f64 = 3.0;
/// Sub-steps per policy interval used by the recursive probe.
pub const PROBE_SUBSTEPS: usize = 8;
pub const PROBE_TOL: f64 = 1e-8;
pub const LATTICE_PERIODS: usize = 400;
pub const LATTICE_G_TOL: f64 = 0.02;
pub const LATTICE_PI_TOL: f64 = 1e-3;
pub const MERTON_TOL: f64 = 1e-5;
/// `(t, h, n_outer, n_inner)` for the nested recursion check.
pub const RECURSION_SETUP: (f64, f64, usize, usize) = (10.0, 5.0, 2000, 2000);

/// Run the selected checks for every preference set. Checks that do not
/// apply (lattice and probes at unit risk aversion, the Merton comparison
/// away from `rho = 1 - alpha`) are skipped.
pub fn run_suite(cfg: &SuiteConfig) -> Result<Vec<CheckResult>> {
    run_suite_with(cfg, |_| {})
}

/// [`run_suite`], calling `on_result` as each check finishes.
pub fn run_suite_with(
    cfg: &SuiteConfig,
    mut on_result: impl FnMut(&CheckResult),
) -> Result<Vec<CheckResult>> {
    let mut out: Vec<CheckResult> = Vec::new();
    if cfg.checks.is_empty() {
        return Ok(out);
    }
    let market = cfg.market;
    let mut reported = 0;
    for prefs in &cfg.prefs {
        let tag = |name: &str| format!("{name}[alpha={}]", prefs.alpha());
        let model = validate(market, *prefs, cfg.solver)?;
        let mut table = solve_coefficients(&model)?;
        if let Some(pct) = cfg.perturb_lead_pct {
            table = table.with_scaled_lead(1.0 + pct / 100.0);
        }
        let policy = PolicyCurve::from_table(&table);
        let unit = prefs.is_unit_rra();
        for &check in &cfg.checks {
            match check {
                CheckKind::PdeResidual => {
                    let horizon = prefs.horizon();
                    let t = linspace(
                        0.5f64.min(horizon / 4.0),
                        horizon - 0.5f64.min(horizon / 4.0),
                        50,
                    );
                    let x = linspace(100.0, 5000.0, 50);
                    let grid = pde_residual_grid(&table, &t, &x)?;
                    out.push(CheckResult::below(
                        tag("pde_residual"),
                        grid.max(),
                        RESIDUAL_TOL,
                    ));
                }
                CheckKind::Representation => {
                    let checks = probabilistic_representation_check(
                        &table,
                        &policy,
                        &[0, 1],
                        cfg.solver.mc_paths.max(2),
                        cfg.solver.mc_seed,
                        cfg.solver.x0,
                        DAILY,
                    )?;
                    for c in checks {
                        out.push(CheckResult::below(
                            tag(&format!("representation_k{}", c.k)),
                            c.z_score(),
                            MC_SIGMAS,
                        ));
                    }
                }
                CheckKind::RecursiveProbe if !unit => {
                    let p = recursive_representation_probe(&policy, &market, prefs, cfg.solver.x0)?;
                    out.push(CheckResult::below(
                        tag("recursive_probe"),
                        p.rel_error,
                        PROBE_TOL,
                    ));
                }
                CheckKind::Lattice if !unit => {
                    let v = dt_equilibrium(&market, prefs, &LatticeConfig::new(LATTICE_PERIODS))?;
                    let g0 = policy.g(0.0)?;
                    out.push(CheckResult::below(
                        tag("lattice_g0"),
                        (v.consumption_rate(0) / g0 - 1.0).abs(),
                        LATTICE_G_TOL,
                    ));
                    let dpi =
                        v.pi.iter()
                            .map(|p| (p - table.pi_hat()).abs())
                            .fold(0.0, f64::max);
                    out.push(CheckResult::below(tag("lattice_pi"), dpi, LATTICE_PI_TOL));
                }
                CheckKind::FRecursion if !unit => {
                    let (t, h, n_outer, n_inner) = RECURSION_SETUP;
                    let scale = (prefs.horizon() / 40.0).min(1.0);
                    let c = f_recursion_check(
                        &policy,
                        &market,
                        prefs,
                        cfg.solver.x0,
                        t * scale,
                        h * scale,
                        n_outer,
                        n_inner,
                        cfg.solver.mc_seed,
                        &RecursionOptions::default(),
                    )?;
                    out.push(CheckResult::below(
                        tag("f_recursion"),
                        c.z_score(),
                        MC_SIGMAS,
                    ));
                }
                CheckKind::Merton if (prefs.rho() - (1.0 - prefs.alpha())).abs() < 1e-12 => {
                    let ez = EzSolution::new(&market, prefs);
                    let mut worst = 0.0f64;
                    for &t in table.times() {
                        let a = ez.annuity(t)?;
                        worst = worst.max((policy.annuity(t)? - a).abs() / a);
                    }
                    out.push(CheckResult::below(tag("merton"), worst, MERTON_TOL));
                }
                _ => {}
            }
            for r in &out[reported..] {
                on_result(r);
            }
            reported = out.len();
        }
    }
    Ok(out)
}
