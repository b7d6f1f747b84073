//! Epstein-Zin closed form, and its coincidence with the KM policy when rho = 1 - alpha.

use kmeq::moments::{engine_policy, Engine};
use kmeq::{merton_annuity, EzSolution, KmPreferences, MarketParams, SolverConfig};

fn main() {
    let market = MarketParams::reference();
    for alpha in [2.0, 3.0, 4.0, 10.0] {
        let ez = EzSolution::new(&market, &KmPreferences::reference(alpha));
        let a: Vec<String> = [5.0, 15.0, 25.0, 35.0]
            .iter()
            .map(|&t| format!("{:.2}", ez.annuity(t).unwrap()))
            .collect();
        println!(
            "alpha={alpha:<4} nu={:.7} a(5,15,25,35) = {}",
            ez.nu,
            a.join(" ")
        );
    }

    let prefs = KmPreferences::reference(2.0);
    let km = engine_policy(Engine::Km, &market, &prefs, &SolverConfig::default()).unwrap();
    let worst = km
        .times()
        .iter()
        .map(|&t| {
            let m = merton_annuity(&market, &prefs, t).unwrap();
            (km.annuity(t).unwrap() - m).abs() / m
        })
        .fold(0.0, f64::max);
    println!("alpha=2, rho=-1: max relative KM vs Merton annuity gap {worst:.2e}");
}
