//! Mean wealth and consumption under a proportional policy, deterministic
//! and by exact lognormal simulation, and the per-alpha report built on them.

use std::fmt;

use rand_distr::{Distribution, StandardNormal};

use crate::benchmark::EzSolution;
use crate::error::{Error, Result};
use crate::hjbode::{solve_coefficients, PolicyCurve};
use crate::model::{validate, KmPreferences, MarketParams, SolverConfig};
use crate::paths::{map_paths, mean_and_se};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MomentSource {
    Deterministic,
    MonteCarlo,
}

impl fmt::Display for MomentSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MomentSource::Deterministic => f.write_str("deterministic"),
            MomentSource::MonteCarlo => f.write_str("monte-carlo"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentCurves {
    pub times: Vec<f64>,
    pub mean_wealth: Vec<f64>,
    pub mean_consumption: Vec<f64>,
    pub annuity: Vec<f64>,
    pub source: MomentSource,
    /// Standard errors of the sample means; empty for deterministic curves.
    pub std_error_wealth: Vec<f64>,
    pub std_error_consumption: Vec<f64>,
}

/// `{0, 5, 10, ..., T}` with `T` appended if it is not a multiple of 5.
pub fn default_dates(horizon: f64) -> Vec<f64> {
    let mut dates: Vec<f64> = (0..)
        .map(|i| 5.0 * i as f64)
        .take_while(|&t| t <= horizon + 1e-9)
        .collect();
    if (dates.last().copied().unwrap_or(-1.0) - horizon).abs() > 1e-9 {
        dates.push(horizon);
    }
    dates
}

/// `E[X_t] = x0 exp(int_0^t (r + lambda pi - g(s)) ds)`.
pub fn mean_wealth_deterministic(
    policy: &PolicyCurve,
    market: &MarketParams,
    x0: f64,
    t: f64,
) -> Result<f64> {
    let drift = market.r + market.lambda * policy.pi_hat();
    Ok(x0 * (drift * t - policy.integral_g(t)?).exp())
}

/// `E[c(t, X_t)] = g(t) E[X_t]`.
pub fn mean_consumption(
    policy: &PolicyCurve,
    market: &MarketParams,
    x0: f64,
    t: f64,
) -> Result<f64> {
    Ok(policy.g(t)? * mean_wealth_deterministic(policy, market, x0, t)?)
}

pub fn deterministic_curves(
    policy: &PolicyCurve,
    market: &MarketParams,
    x0: f64,
    dates: &[f64],
) -> Result<MomentCurves> {
    let mut mean_wealth = Vec::with_capacity(dates.len());
    let mut mean_consumption = Vec::with_capacity(dates.len());
    let mut annuity = Vec::with_capacity(dates.len());
    for &t in dates {
        let g = policy.g(t)?;
        let x = mean_wealth_deterministic(policy, market, x0, t)?;
        mean_wealth.push(x);
        mean_consumption.push(g * x);
        annuity.push(1.0 / g);
    }
    Ok(MomentCurves {
        times: dates.to_vec(),
        mean_wealth,
        mean_consumption,
        annuity,
        source: MomentSource::Deterministic,
        std_error_wealth: Vec::new(),
        std_error_consumption: Vec::new(),
    })
}

/// Simulate at [`default_dates`].
pub fn simulate_paths(
    policy: &PolicyCurve,
    market: &MarketParams,
    x0: f64,
    n_paths: usize,
    seed: u64,
) -> Result<MomentCurves> {
    simulate_paths_at(
        policy,
        market,
        x0,
        n_paths,
        seed,
        &default_dates(policy.horizon()),
    )
}

/// Sample means of `X_t` and `g(t) X_t` at ascending `dates`, stepping each
/// path exactly between consecutive dates with one normal draw per step:
/// `X' = X exp((r + lambda pi - pi^2 sigma^2 / 2) dt - int g + pi sigma sqrt(dt) xi)`.
pub fn simulate_paths_at(
    policy: &PolicyCurve,
    market: &MarketParams,
    x0: f64,
    n_paths: usize,
    seed: u64,
    dates: &[f64],
) -> Result<MomentCurves> {
    assert!(n_paths >= 1, "need at least one path");
    assert!(dates.windows(2).all(|w| w[1] >= w[0]), "dates must ascend");
    let pi = policy.pi_hat();
    let vol = pi * market.sigma;
    let drift = market.r + market.lambda * pi - 0.5 * vol * vol;

    let mut log_drift = Vec::with_capacity(dates.len());
    let mut shock = Vec::with_capacity(dates.len());
    let mut g = Vec::with_capacity(dates.len());
    let mut prev_t = 0.0;
    let mut prev_int = 0.0;
    for &t in dates {
        let int = policy.integral_g(t)?;
        let dt = t - prev_t;
        log_drift.push(drift * dt - (int - prev_int));
        shock.push(vol * dt.sqrt());
        g.push(policy.g(t)?);
        prev_t = t;
        prev_int = int;
    }

    let n_dates = dates.len();
    let samples = map_paths(n_paths, seed, |_, rng| {
        let mut log_x = x0.ln();
        let mut out = Vec::with_capacity(n_dates);
        for j in 0..n_dates {
            if shock[j] > 0.0 {
                let xi: f64 = StandardNormal.sample(rng);
                log_x += log_drift[j] + shock[j] * xi;
            } else {
                log_x += log_drift[j];
            }
            out.push(log_x.exp());
        }
        out
    });

    let mut mean_wealth = Vec::with_capacity(n_dates);
    let mut mean_consumption = Vec::with_capacity(n_dates);
    let mut se_w = Vec::with_capacity(n_dates);
    let mut se_c = Vec::with_capacity(n_dates);
    let mut column = vec![0.0; n_paths];
    for j in 0..n_dates {
        for (c, s) in column.iter_mut().zip(&samples) {
            *c = s[j];
        }
        let (m, se) = mean_and_se(&column);
        mean_wealth.push(m);
        se_w.push(se);
        mean_consumption.push(g[j] * m);
        se_c.push(g[j] * se);
    }
    Ok(MomentCurves {
        times: dates.to_vec(),
        mean_wealth,
        mean_consumption,
        annuity: g.iter().map(|v| 1.0 / v).collect(),
        source: MomentSource::MonteCarlo,
        std_error_wealth: se_w,
        std_error_consumption: se_c,
    })
}

/// Equilibrium (KM) or closed-form Epstein-Zin policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Engine {
    Km,
    Ez,
}

impl fmt::Display for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Engine::Km => f.write_str("km"),
            Engine::Ez => f.write_str("ez"),
        }
    }
}

/// Policy curve for one engine and parameter set.
pub fn engine_policy(
    engine: Engine,
    market: &MarketParams,
    prefs: &KmPreferences,
    cfg: &SolverConfig,
) -> Result<PolicyCurve> {
    let model = validate(*market, *prefs, *cfg)?;
    match engine {
        Engine::Km => Ok(PolicyCurve::from_table(&solve_coefficients(&model)?)),
        Engine::Ez => Ok(EzSolution::new(market, prefs).policy(market, prefs, cfg.ode_steps)),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub engine: Engine,
    pub alpha: f64,
    pub t: f64,
    pub mean_consumption: f64,
    pub annuity: f64,
    pub mean_wealth: f64,
    pub source: MomentSource,
    /// Standard error of the mean wealth; `None` for deterministic rows.
    pub std_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RowFailure {
    pub engine: Engine,
    pub alpha: f64,
    pub error: Error,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Report {
    pub rows: Vec<ReportRow>,
    pub failures: Vec<RowFailure>,
}

impl Report {
    pub fn find(&self, engine: Engine, alpha: f64, t: f64) -> Option<&ReportRow> {
        self.rows
            .iter()
            .find(|r| r.engine == engine && r.alpha == alpha && (r.t - t).abs() < 1e-9)
    }
}

/// Rows for every `(engine, alpha, date)`, KM block first. A failing
/// parameter set is recorded in `failures` and the rest still run.
pub fn build_report(
    market: &MarketParams,
    prefs_list: &[KmPreferences],
    cfg: &SolverConfig,
    dates: &[f64],
    source: MomentSource,
) -> Report {
    let mut report = Report::default();
    for engine in [Engine::Km, Engine::Ez] {
        for prefs in prefs_list {
            let curves =
                engine_policy(engine, market, prefs, cfg).and_then(|policy| match source {
                    MomentSource::Deterministic => {
                        deterministic_curves(&policy, market, cfg.x0, dates)
                    }
                    MomentSource::MonteCarlo => {
                        simulate_paths_at(&policy, market, cfg.x0, cfg.mc_paths, cfg.mc_seed, dates)
                    }
                });
            match curves {
                Ok(c) => {
                    for (j, &t) in c.times.iter().enumerate() {
                        report.rows.push(ReportRow {
                            engine,
                            alpha: prefs.alpha(),
                            t,
                            mean_consumption: c.mean_consumption[j],
                            annuity: c.annuity[j],
                            mean_wealth: c.mean_wealth[j],
                            source: c.source,
                            std_error: c.std_error_wealth.get(j).copied(),
                        });
                    }
                }
                Err(error) => report.failures.push(RowFailure {
                    engine,
                    alpha: prefs.alpha(),
                    error,
                }),
            }
        }
    }
    report
}
