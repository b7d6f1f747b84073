//! Monte Carlo estimates of V and V^(1) at time zero against the ODE coefficients.

use std::time::Instant;

use kmeq::verify::{probabilistic_representation_check, DAILY};
use kmeq::{solve_coefficients, validate, KmPreferences, MarketParams, PolicyCurve, SolverConfig};

fn main() {
    let cfg = SolverConfig::default();
    for alpha in [2.0, 3.0] {
        let start = Instant::now();
        let model = validate(
            MarketParams::reference(),
            KmPreferences::reference(alpha),
            cfg,
        )
        .unwrap();
        let table = solve_coefficients(&model).unwrap();
        let policy = PolicyCurve::from_table(&table);
        let checks = probabilistic_representation_check(
            &table,
            &policy,
            &[0, 1],
            cfg.mc_paths,
            cfg.mc_seed,
            cfg.x0,
            DAILY,
        )
        .unwrap();
        for c in checks {
            println!(
                "alpha={alpha} k={} mc={:.10e} se={:.3e} ode={:.10e} z={:.2}",
                c.k,
                c.mc,
                c.std_error,
                c.ode,
                c.z_score()
            );
        }
        println!("  {:.1}s", start.elapsed().as_secs_f64());
    }
}
