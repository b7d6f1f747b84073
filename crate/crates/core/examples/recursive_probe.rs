//! Riskless consumption stream: direct quadrature of the KM utility against
//! its backward recursive representation.

use kmeq::verify::recursive_representation_probe;
use kmeq::{solve_coefficients, validate, KmPreferences, MarketParams, PolicyCurve, SolverConfig};

fn main() {
    let market = MarketParams::reference();
    for alpha in [2.0, 3.0, 4.0, 10.0] {
        let prefs = KmPreferences::reference(alpha);
        let model = validate(market, prefs, SolverConfig::default()).unwrap();
        let policy = PolicyCurve::from_table(&solve_coefficients(&model).unwrap());
        let p = recursive_representation_probe(&policy, &market, &prefs, 1000.0).unwrap();
        println!(
            "alpha={alpha:<4} direct={:.15e} recursive={:.15e} rel={:.1e}",
            p.direct, p.recursive, p.rel_error
        );
    }
}
