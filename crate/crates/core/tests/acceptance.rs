//! Acceptance criteria, one test per criterion. Each prints a PASS or FAIL
//! line directly to stderr so it shows even when output is captured.

use std::io::Write;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use kmeq::cli::{cmd_table, RunConfig};
use kmeq::dtoracle::{dt_equilibrium, f_recursion_check, LatticeConfig, RecursionOptions};
use kmeq::moments::{deterministic_curves, engine_policy, simulate_paths, Engine};
use kmeq::verify::{
    linspace, pde_residual_grid, probabilistic_representation_check,
    recursive_representation_probe, DAILY,
};
use kmeq::{
    solve_coefficients, validate, Closure, EzSolution, KmPreferences, MarketParams, PolicyCurve,
    SolverConfig, Truncation,
};

static SERIAL: Mutex<()> = Mutex::new(());

const ALPHAS: [f64; 4] = [2.0, 3.0, 4.0, 10.0];
const DATES: [f64; 4] = [5.0, 15.0, 25.0, 35.0];

/// Published panel values: rows alpha = 2, 3, 4, 10; columns t = 5, 15, 25, 35.
struct Panel {
    consumption: [[f64; 4]; 4],
    annuity: [[f64; 4]; 4],
    wealth: [[f64; 4]; 4],
}

const KM: Panel = Panel {
    consumption: [
        [54.95, 91.9, 153.39, 256.77],
        [46.34, 66.89, 96.47, 139.76],
        [42.62, 57.01, 76.25, 102.39],
        [36.81, 42.74, 49.63, 57.74],
    ],
    annuity: [
        [21.88, 17.95, 12.63, 5.42],
        [23.9, 19.22, 13.20, 5.51],
        [24.93, 19.83, 13.47, 5.55],
        [26.69, 20.86, 13.91, 5.62],
    ],
    wealth: [
        [1202.33, 1649.7, 1936.63, 1390.53],
        [1107.96, 1285.54, 1273.87, 770.31],
        [1062.32, 1130.76, 1027.28, 568.63],
        [982.69, 891.65, 690.09, 324.44],
    ],
};

const EZ: Panel = Panel {
    consumption: [
        [54.87, 91.78, 153.19, 256.43],
        [46.71, 66.96, 95.79, 137.43],
        [43.04, 57.11, 75.69, 100.45],
        [37.06, 42.77, 49.33, 56.98],
    ],
    annuity: [
        [21.92, 17.99, 12.69, 5.49],
        [23.66, 19.08, 13.17, 5.58],
        [24.62, 19.65, 13.43, 5.62],
        [26.47, 20.75, 13.9, 5.69],
    ],
    wealth: [
        [1202.69, 1651.81, 1943.64, 1410.09],
        [1105.6, 1277.55, 1262.1, 766.77],
        [1059.65, 1122.45, 1015.88, 564.53],
        [981.04, 887.67, 685.88, 324.49],
    ],
};

fn report(id: &str, pass: bool, elapsed: Duration, budget: Duration, detail: &str) -> bool {
    let in_time = elapsed < budget;
    let ok = pass && in_time;
    let _ = writeln!(
        std::io::stderr(),
        "{} {id}: {detail} [{:.2}s of {:.0}s{}]",
        if ok { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64(),
        budget.as_secs_f64(),
        if in_time { "" } else { ", over budget" }
    );
    ok
}

fn rel(a: f64, b: f64) -> f64 {
    (a / b - 1.0).abs()
}

fn model(alpha: f64) -> kmeq::Model {
    validate(
        MarketParams::reference(),
        KmPreferences::reference(alpha),
        SolverConfig::default(),
    )
    .unwrap()
}

#[test]
fn c1_km_panel() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let dir = tempfile::tempdir().unwrap();
    let start = Instant::now();
    let cfg = RunConfig {
        output_dir: dir.path().to_path_buf(),
        ..RunConfig::default()
    };
    let path = cmd_table(&cfg).unwrap();
    let elapsed = start.elapsed();
    let text = std::fs::read_to_string(path).unwrap();
    let rows: Vec<Vec<&str>> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').collect())
        .collect();
    let mut worst = (0.0, String::new());
    let mut count = 0;
    for (ia, &alpha) in ALPHAS.iter().enumerate() {
        for (it, &t) in DATES.iter().enumerate() {
            let row = rows
                .iter()
                .find(|r| {
                    r[0] == "km"
                        && r[1].parse::<f64>().unwrap() == alpha
                        && r[2].parse::<f64>().unwrap() == t
                })
                .expect("row present");
            let got = |c: usize| row[c].parse::<f64>().unwrap();
            for (name, value, paper) in [
                ("E[c]", got(3), KM.consumption[ia][it]),
                ("annuity", got(4), KM.annuity[ia][it]),
                ("E[X]", got(5), KM.wealth[ia][it]),
            ] {
                count += 1;
                let e = rel(value, paper);
                if e > worst.0 {
                    worst = (
                        e,
                        format!("{name} alpha={alpha} t={t}: {value:.2} vs {paper}"),
                    );
                }
            }
        }
    }
    let pass = count == 48 && worst.0 < 0.02;
    let detail = format!(
        "{count} KM entries, worst {:.2}% ({})",
        100.0 * worst.0,
        worst.1
    );
    assert!(report(
        "C1",
        pass,
        elapsed,
        Duration::from_secs(10),
        &detail
    ));
}

#[test]
fn c2_ez_panel() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let market = MarketParams::reference();
    let cfg = SolverConfig::default();
    let start = Instant::now();
    let mut curves = Vec::new();
    for alpha in ALPHAS {
        let p = engine_policy(Engine::Ez, &market, &KmPreferences::reference(alpha), &cfg).unwrap();
        curves.push(deterministic_curves(&p, &market, cfg.x0, &DATES).unwrap());
    }
    let elapsed = start.elapsed();
    let mut worst = 0.0f64;
    let mut worst_annuity = 0.0f64;
    for ia in 0..4 {
        for it in 0..4 {
            let c = &curves[ia];
            worst = worst
                .max(rel(c.mean_consumption[it], EZ.consumption[ia][it]))
                .max(rel(c.mean_wealth[it], EZ.wealth[ia][it]));
            worst_annuity = worst_annuity.max(rel(c.annuity[it], EZ.annuity[ia][it]));
        }
    }
    let a5 = EzSolution::new(&market, &KmPreferences::reference(2.0))
        .annuity(5.0)
        .unwrap();
    let pass = worst < 0.02 && worst_annuity < 0.005 && rel(a5, 21.92) < 0.005;
    let detail = format!(
        "48 EZ entries, moments worst {:.2}%, annuity worst {:.3}%, a(5)|alpha=2 = {a5:.4}",
        100.0 * worst,
        100.0 * worst_annuity
    );
    assert!(report("C2", pass, elapsed, Duration::from_secs(1), &detail));
}

#[test]
fn c3_merton_coincidence() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let m = model(2.0);
    let km = PolicyCurve::from_table(&solve_coefficients(&m).unwrap());
    let ez = EzSolution::new(m.market(), m.prefs());
    let worst = km
        .times()
        .iter()
        .map(|&t| {
            let a = ez.annuity(t).unwrap();
            (km.annuity(t).unwrap() - a).abs() / a
        })
        .fold(0.0, f64::max);
    let elapsed = start.elapsed();
    let detail = format!(
        "max relative annuity gap {worst:.2e} over {} nodes",
        km.times().len()
    );
    assert!(report(
        "C3",
        worst < 1e-5,
        elapsed,
        Duration::from_secs(2),
        &detail
    ));
}

#[test]
fn c4_pde_residuals() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let t = linspace(0.5, 39.5, 50);
    let x = linspace(100.0, 5000.0, 50);
    let mut parts = Vec::new();
    let mut pass = true;
    for alpha in ALPHAS {
        let table = solve_coefficients(&model(alpha)).unwrap();
        let exact = matches!(table.closure(), Closure::Exact(_));
        let r = pde_residual_grid(&table, &t, &x).unwrap().max();
        pass &= exact && r < 1e-6;
        parts.push(format!("alpha={alpha}: {r:.1e}"));
    }
    let elapsed = start.elapsed();
    assert!(report(
        "C4",
        pass,
        elapsed,
        Duration::from_secs(5),
        &parts.join(", ")
    ));
}

#[test]
fn c5_probabilistic_representation() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let cfg = SolverConfig::default();
    let start = Instant::now();
    let mut parts = Vec::new();
    let mut pass = true;
    for alpha in [2.0, 3.0] {
        let table = solve_coefficients(&model(alpha)).unwrap();
        let policy = PolicyCurve::from_table(&table);
        let checks = probabilistic_representation_check(
            &table,
            &policy,
            &[0, 1],
            100_000,
            cfg.mc_seed,
            cfg.x0,
            DAILY,
        )
        .unwrap();
        for c in checks {
            pass &= c.z_score() < 3.0;
            parts.push(format!("alpha={alpha} k={}: {:.2} se", c.k, c.z_score()));
        }
    }
    let elapsed = start.elapsed();
    assert!(report(
        "C5",
        pass,
        elapsed,
        Duration::from_secs(60),
        &parts.join(", ")
    ));
}

#[test]
fn c6_lattice_oracle() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let market = MarketParams::reference();
    let start = Instant::now();
    let mut parts = Vec::new();
    let mut pass = true;
    for alpha in [2.0, 3.0] {
        let prefs = KmPreferences::reference(alpha);
        let table = solve_coefficients(&model(alpha)).unwrap();
        let g0 = PolicyCurve::from_table(&table).g(0.0).unwrap();
        let v = dt_equilibrium(&market, &prefs, &LatticeConfig::new(400)).unwrap();
        let e = rel(v.consumption_rate(0), g0);
        let dpi =
            v.pi.iter()
                .map(|p| (p - table.pi_hat()).abs())
                .fold(0.0, f64::max);
        pass &= e < 0.02 && dpi < 1e-3;
        parts.push(format!(
            "alpha={alpha}: g(0) gap {:.3}%, max pi gap {dpi:.1e}",
            100.0 * e
        ));
    }
    let elapsed = start.elapsed();
    assert!(report(
        "C6",
        pass,
        elapsed,
        Duration::from_secs(120),
        &parts.join(", ")
    ));
}

#[test]
fn c7_recursion_check() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let market = MarketParams::reference();
    let cfg = SolverConfig::default();
    let prefs = KmPreferences::reference(3.0);
    let start = Instant::now();
    let policy = PolicyCurve::from_table(&solve_coefficients(&model(3.0)).unwrap());
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
    let elapsed = start.elapsed();
    let detail = format!(
        "alpha=3 deviation {:.3e} = {:.2} combined se",
        c.deviation,
        c.z_score()
    );
    assert!(report(
        "C7",
        c.z_score() < 3.0,
        elapsed,
        Duration::from_secs(60),
        &detail
    ));
}

#[test]
fn c8_property_suites() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let market = MarketParams::reference();
    let start = Instant::now();
    let mut parts: Vec<(String, bool)> = Vec::new();

    let mut terminal = true;
    let mut positive = true;
    let mut g_end = true;
    let mut halving = 0.0f64;
    for alpha in ALPHAS {
        let m = model(alpha);
        let table = solve_coefficients(&m).unwrap();
        let last = table.times().len() - 1;
        terminal &=
            table.lead()[last] == 1.0 && (1..=table.depth()).all(|k| table.level(k)[last] == 1.0);
        positive &= table.lead().iter().all(|&v| v > 0.0)
            && (1..=table.depth()).all(|k| table.level(k).iter().all(|&v| v > 0.0));
        g_end &= PolicyCurve::from_table(&table).g(40.0).unwrap() == 1.0;
        let fine = m
            .with_cfg(SolverConfig {
                ode_steps: 2 * m.cfg().ode_steps,
                ..*m.cfg()
            })
            .unwrap();
        let g0 = PolicyCurve::from_table(&table).g(0.0).unwrap();
        let g0_fine = PolicyCurve::from_table(&solve_coefficients(&fine).unwrap())
            .g(0.0)
            .unwrap();
        halving = halving.max(rel(g0_fine, g0));
    }
    parts.push(("terminal conditions exact".into(), terminal));
    parts.push(("positivity".into(), positive));
    parts.push(("g(T) = 1".into(), g_end));
    parts.push((format!("step halving {halving:.1e}"), halving < 1e-8));

    let m = validate(
        market,
        KmPreferences::reference(2.5),
        SolverConfig::default(),
    )
    .unwrap();
    let truncation = match solve_coefficients(&m) {
        Ok(t) => match t.closure() {
            Closure::Truncated(k) => {
                let g = |d: usize| {
                    let cfg = SolverConfig {
                        truncation: Truncation::Depth(d),
                        ..SolverConfig::default()
                    };
                    let mm = m.with_cfg(cfg).unwrap();
                    solve_coefficients(&mm).map(|t| PolicyCurve::from_table(&t))
                };
                match (g(k), g(k + 5)) {
                    (Ok(a), Ok(b)) => {
                        let dev = a
                            .times()
                            .iter()
                            .map(|&t| (a.g(t).unwrap() - b.g(t).unwrap()).abs())
                            .fold(0.0, f64::max);
                        (format!("alpha=2.5 K={k} vs K+5: {dev:.1e}"), dev < 1e-6)
                    }
                    (Err(e), _) | (_, Err(e)) => (format!("alpha=2.5 truncation: {e}"), false),
                }
            }
            Closure::Exact(_) => ("alpha=2.5 unexpectedly exact".into(), false),
        },
        Err(e) => (format!("alpha=2.5 truncation: {e}"), false),
    };
    parts.push(truncation);

    let unit = validate(
        market,
        KmPreferences::reference(1.0),
        SolverConfig::default(),
    )
    .unwrap();
    let continuity = match solve_coefficients(&unit) {
        Ok(u) => {
            let g1 = PolicyCurve::from_table(&u).g(0.0).unwrap();
            let mut worst = 0.0f64;
            let mut err = None;
            for a in [1.0 - 1e-3, 1.0 + 1e-3] {
                match solve_coefficients(&unit.with_prefs(KmPreferences::reference(a)).unwrap()) {
                    Ok(t) => {
                        worst = worst.max(rel(PolicyCurve::from_table(&t).g(0.0).unwrap(), g1))
                    }
                    Err(e) => err = Some(format!("alpha={a}: {e}")),
                }
            }
            match err {
                Some(e) => (format!("alpha->1 continuity: {e}"), false),
                None => (
                    format!("alpha->1 continuity {:.2}%", 100.0 * worst),
                    worst < 0.01,
                ),
            }
        }
        Err(e) => (format!("alpha->1 continuity: unit solution {e}"), false),
    };
    parts.push(continuity);

    let policy = engine_policy(
        Engine::Km,
        &market,
        &KmPreferences::reference(3.0),
        &SolverConfig::default(),
    )
    .unwrap();
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| simulate_paths(&policy, &market, 1000.0, 20_000, 7).unwrap())
    };
    let (a, b) = (run(1), run(4));
    let same = a
        .mean_wealth
        .iter()
        .chain(&a.std_error_wealth)
        .zip(b.mean_wealth.iter().chain(&b.std_error_wealth))
        .all(|(x, y)| x.to_bits() == y.to_bits());
    parts.push(("MC bit-identical across 1 and 4 threads".into(), same));

    let elapsed = start.elapsed();
    let pass = parts.iter().all(|p| p.1);
    let detail = parts
        .iter()
        .map(|(d, ok)| format!("{d} {}", if *ok { "ok" } else { "FAILED" }))
        .collect::<Vec<_>>()
        .join("; ");
    assert!(report(
        "C8",
        pass,
        elapsed,
        Duration::from_secs(30),
        &detail
    ));
}

#[test]
fn c9_recursive_probe() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let market = MarketParams::reference();
    let start = Instant::now();
    let mut worst = 0.0f64;
    for alpha in ALPHAS {
        let prefs = KmPreferences::reference(alpha);
        let policy = PolicyCurve::from_table(&solve_coefficients(&model(alpha)).unwrap());
        worst = worst.max(
            recursive_representation_probe(&policy, &market, &prefs, 1000.0)
                .unwrap()
                .rel_error,
        );
    }
    let elapsed = start.elapsed();
    let detail = format!("max relative gap {worst:.1e} over four alphas");
    assert!(report(
        "C9",
        worst < 1e-8,
        elapsed,
        Duration::from_secs(1),
        &detail
    ));
}
