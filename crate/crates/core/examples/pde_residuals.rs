//! Normalized residuals of the value and auxiliary equations, with and
//! without a 1% perturbation of the lead coefficient.

use kmeq::verify::{linspace, pde_residual_grid};
use kmeq::{solve_coefficients, validate, KmPreferences, MarketParams, SolverConfig};

fn main() {
    let t = linspace(0.5, 39.5, 50);
    let x = linspace(100.0, 5000.0, 50);
    for alpha in [2.0, 3.0, 4.0, 10.0] {
        let model = validate(
            MarketParams::reference(),
            KmPreferences::reference(alpha),
            SolverConfig::default(),
        )
        .unwrap();
        let table = solve_coefficients(&model).unwrap();
        let clean = pde_residual_grid(&table, &t, &x).unwrap().max();
        let bumped = pde_residual_grid(&table.with_scaled_lead(1.01), &t, &x)
            .unwrap()
            .max();
        println!("alpha={alpha:<4} max residual {clean:.2e}, with A +1%: {bumped:.2e}");
    }
}
