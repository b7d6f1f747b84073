//! Deterministic Table-1 style moments for both engines.

use kmeq::moments::{build_report, MomentSource};
use kmeq::{KmPreferences, MarketParams, SolverConfig};

fn main() {
    let market = MarketParams::reference();
    let prefs: Vec<_> = [2.0, 3.0, 4.0, 10.0].map(KmPreferences::reference).to_vec();
    let report = build_report(
        &market,
        &prefs,
        &SolverConfig::default(),
        &[5.0, 15.0, 25.0, 35.0],
        MomentSource::Deterministic,
    );
    println!(
        "{:<4} {:>5} {:>4} {:>12} {:>10} {:>12}",
        "eng", "alpha", "t", "E[c]", "annuity", "E[X]"
    );
    for row in &report.rows {
        println!(
            "{:<4} {:>5} {:>4} {:>12.2} {:>10.2} {:>12.2}",
            row.engine, row.alpha, row.t, row.mean_consumption, row.annuity, row.mean_wealth
        );
    }
    for f in &report.failures {
        eprintln!("{} alpha={}: {}", f.engine, f.alpha, f.error);
    }
}
