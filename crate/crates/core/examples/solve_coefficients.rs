//! Solve the coefficient hierarchy for alpha = 3 and print the policy.

use kmeq::{
    exact_closure_order, solve_coefficients, validate, KmPreferences, MarketParams, PolicyCurve,
    SolverConfig,
};

fn main() {
    let prefs = KmPreferences::reference(3.0);
    let model = validate(MarketParams::reference(), prefs, SolverConfig::default())
        .expect("valid parameters");
    let table = solve_coefficients(&model).expect("solvable");
    println!(
        "kappa = {}, exact closure at k = {:?}",
        prefs.kappa(),
        exact_closure_order(&prefs, 1e-9)
    );
    println!("closure {:?}, pi_hat = {}", table.closure(), table.pi_hat());
    let policy = PolicyCurve::from_table(&table);
    println!(
        "{:>5} {:>14} {:>14} {:>10} {:>10}",
        "t", "A", "A_1", "g", "annuity"
    );
    let stride = table.times().len() / 8;
    for i in (0..table.times().len()).step_by(stride) {
        let t = table.times()[i];
        println!(
            "{:>5.1} {:>14.6e} {:>14.6e} {:>10.6} {:>10.4}",
            t,
            table.lead()[i],
            table.level(1)[i],
            policy.g(t).unwrap(),
            policy.annuity(t).unwrap()
        );
    }
}
