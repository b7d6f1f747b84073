//! Discrete-time lattice consumption rate against the continuous policy at t = 0.

use std::time::Instant;

use kmeq::dtoracle::{dt_equilibrium, LatticeConfig, Timing};
use kmeq::{solve_coefficients, validate, KmPreferences, MarketParams, PolicyCurve, SolverConfig};

fn main() {
    let market = MarketParams::reference();
    for alpha in [2.0, 3.0] {
        let prefs = KmPreferences::reference(alpha);
        let model = validate(market, prefs, SolverConfig::default()).unwrap();
        let g0 = PolicyCurve::from_table(&solve_coefficients(&model).unwrap())
            .g(0.0)
            .unwrap();
        println!("alpha={alpha} continuous g(0)={g0:.6}");
        for timing in [Timing::GrowThenConsume, Timing::ConsumeThenGrow] {
            for n in [25, 50, 100, 200, 400] {
                let start = Instant::now();
                let cfg = LatticeConfig {
                    timing,
                    ..LatticeConfig::new(n)
                };
                let v = dt_equilibrium(&market, &prefs, &cfg).unwrap();
                let pi0 = market.lambda / (alpha * market.sigma * market.sigma);
                let dpi = v.pi.iter().map(|p| (p - pi0).abs()).fold(0.0, f64::max);
                let rate = v.consumption_rate(0);
                println!(
                    "  {timing:?} N={n:<4} c/h={rate:.6} rel.err={:.2e} max|pi-pi0|={dpi:.1e} ({:.2}s)",
                    (rate / g0 - 1.0).abs(),
                    start.elapsed().as_secs_f64()
                );
            }
        }
    }
}
