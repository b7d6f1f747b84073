//! Nested Monte Carlo check that the auxiliary function satisfies its
//! one-step recursion at (t, h) = (10, 5).

use std::time::Instant;

use kmeq::dtoracle::{f_recursion_check, RecursionOptions};
use kmeq::{solve_coefficients, validate, KmPreferences, MarketParams, PolicyCurve, SolverConfig};

fn main() {
    let market = MarketParams::reference();
    let cfg = SolverConfig::default();
    for alpha in [2.0, 3.0] {
        let prefs = KmPreferences::reference(alpha);
        let model = validate(market, prefs, cfg).unwrap();
        let policy = PolicyCurve::from_table(&solve_coefficients(&model).unwrap());
        let start = Instant::now();
        let c = f_recursion_check(
            &policy,
            &market,
            &prefs,
            cfg.x0,
            10.0,
            5.0,
            2000,
            2000,
            cfg.mc_seed,
            &RecursionOptions::default(),
        )
        .unwrap();
        println!(
            "alpha={alpha} lhs={:.10e} rhs={:.10e} dev={:.3e} se={:.3e} z={:.2} ({:.1}s)",
            c.lhs,
            c.rhs,
            c.deviation,
            c.combined_se,
            c.z_score(),
            start.elapsed().as_secs_f64()
        );
    }
}
