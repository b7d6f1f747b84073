//! Monte Carlo wealth and consumption means against the deterministic moments.

use kmeq::moments::{deterministic_curves, engine_policy, simulate_paths, Engine};
use kmeq::{KmPreferences, MarketParams, SolverConfig};

fn main() {
    let market = MarketParams::reference();
    let cfg = SolverConfig::default();
    for alpha in [2.0, 4.0] {
        let policy =
            engine_policy(Engine::Km, &market, &KmPreferences::reference(alpha), &cfg).unwrap();
        let mc = simulate_paths(&policy, &market, cfg.x0, cfg.mc_paths, cfg.mc_seed).unwrap();
        let det = deterministic_curves(&policy, &market, cfg.x0, &mc.times).unwrap();
        println!("alpha={alpha}");
        for j in 0..mc.times.len() {
            let se = mc.std_error_wealth[j];
            let z = if se > 1e-9 * det.mean_wealth[j] {
                (mc.mean_wealth[j] - det.mean_wealth[j]) / se
            } else {
                0.0
            };
            println!(
                "  t={:>4} E[X] mc={:>9.2} (se {:>6.2}) det={:>9.2} z={:+.2}  E[c] mc={:>7.2} det={:>7.2}",
                mc.times[j], mc.mean_wealth[j], mc.std_error_wealth[j], det.mean_wealth[j], z,
                mc.mean_consumption[j], det.mean_consumption[j]
            );
        }
    }
}
