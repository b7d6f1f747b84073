//! Behaviour of the flat truncation when kappa is not a positive integer.

use kmeq::hjbode::solve_hierarchy;
use kmeq::{solve_coefficients, validate, KmPreferences, MarketParams, PolicyCurve, SolverConfig};

fn main() {
    let market = MarketParams::reference();
    for alpha in [2.5, 1.5, 1.0] {
        let prefs = KmPreferences::reference(alpha);
        let model = validate(market, prefs, SolverConfig::default()).unwrap();
        println!(
            "alpha={alpha} kappa={}",
            if prefs.is_unit_rra() {
                0.0
            } else {
                prefs.kappa()
            }
        );
        for depth in 1..=8 {
            match solve_hierarchy(&model, depth) {
                Ok(t) => println!(
                    "  K={depth:<2} g(0)={:.8}",
                    PolicyCurve::from_table(&t).g(0.0).unwrap()
                ),
                Err(e) => println!("  K={depth:<2} {e}"),
            }
        }
        match solve_coefficients(&model) {
            Ok(t) => println!("  default closure {:?} accepted", t.closure()),
            Err(e) => println!("  default closure rejected: {e}"),
        }
    }
}
