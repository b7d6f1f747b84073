//! Command-line front end: flat `key = value` configuration, the `solve`,
//! `table`, `simulate`, `verify` and `compare` commands, and CSV output.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use thiserror::Error;

use crate::error::Error as SolverError;
use crate::hjbode::{solve_coefficients, CoefficientTable, PolicyCurve};
use crate::model::{
    validate, KmPreferences, MarketParams, SolverConfig, Truncation, ValidationErrors, Variant,
};
use crate::moments::{
    build_report, default_dates, deterministic_curves, engine_policy, simulate_paths_at, Engine,
    MomentSource,
};
use crate::verify::{run_suite_with, CheckKind, CheckResult, SuiteConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VERIFY: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: io::Error },
    #[error("line {line}: expected `key = value`, got `{text}`")]
    Malformed { line: usize, text: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: key `{key}` given twice")]
    DuplicateKey { line: usize, key: String },
    #[error("missing key `{0}`")]
    MissingKey(&'static str),
    #[error("give either `alpha` or `alpha_list`, not both")]
    ConflictingAlpha,
    #[error("key `{key}`: cannot parse `{value}`")]
    BadValue { key: String, value: String },
    #[error("{0}")]
    Invalid(#[from] ValidationErrors),
    #[error("--perturb-A only applies to `verify`")]
    PerturbOutsideVerify,
}

impl ConfigError {
    /// Key the error refers to, if any.
    pub fn key(&self) -> Option<&str> {
        match self {
            ConfigError::UnknownKey { key, .. } | ConfigError::DuplicateKey { key, .. } => {
                Some(key)
            }
            ConfigError::BadValue { key, .. } => Some(key),
            ConfigError::MissingKey(k) => Some(k),
            ConfigError::Invalid(v) => v.0.first().map(|e| match e.field() {
                "lambda" => "risk_premium",
                f => f,
            }),
            _ => None,
        }
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("solver error: {0}")]
    Solver(#[from] SolverError),
    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Write { .. } => EXIT_CONFIG,
            CliError::Solver(_) => EXIT_SOLVER,
        }
    }
}

const KEYS: [&str; 17] = [
    "r",
    "risk_premium",
    "sigma",
    "alpha",
    "alpha_list",
    "rho",
    "delta",
    "horizon",
    "ode_steps",
    "truncation_K",
    "convergence_tol",
    "x0",
    "paths",
    "seed",
    "report_dates",
    "output_dir",
    "checks",
];

/// Everything a run needs. Market and preference keys are required in a
/// config file; solver, simulation and output keys fall back to the defaults.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub r: f64,
    pub risk_premium: f64,
    pub sigma: f64,
    pub alphas: Vec<f64>,
    pub rho: f64,
    pub delta: f64,
    pub horizon: f64,
    pub ode_steps: usize,
    pub truncation: Truncation,
    pub convergence_tol: f64,
    pub x0: f64,
    pub paths: usize,
    pub seed: u64,
    pub report_dates: Vec<f64>,
    pub output_dir: PathBuf,
    pub checks: Vec<CheckKind>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let m = MarketParams::reference();
        let p = KmPreferences::reference(2.0);
        let s = SolverConfig::default();
        Self {
            r: m.r,
            risk_premium: m.lambda,
            sigma: m.sigma,
            alphas: vec![2.0, 3.0, 4.0, 10.0],
            rho: p.rho(),
            delta: p.delta(),
            horizon: p.horizon(),
            ode_steps: s.ode_steps,
            truncation: s.truncation,
            convergence_tol: s.convergence_tol,
            x0: s.x0,
            paths: s.mc_paths,
            seed: s.mc_seed,
            report_dates: vec![5.0, 15.0, 25.0, 35.0],
            output_dir: PathBuf::from("."),
            checks: CheckKind::ALL.to_vec(),
        }
    }
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

fn join_f64(v: &[f64]) -> String {
    v.iter()
        .map(|x| format!("{x:?}"))
        .collect::<Vec<_>>()
        .join(",")
}

impl RunConfig {
    pub fn market(&self) -> MarketParams {
        MarketParams::new(self.r, self.risk_premium, self.sigma)
    }

    pub fn prefs(&self) -> Vec<KmPreferences> {
        self.alphas
            .iter()
            .map(|&a| KmPreferences::new(a, self.rho, self.delta, self.horizon))
            .collect()
    }

    pub fn solver(&self) -> SolverConfig {
        SolverConfig {
            ode_steps: self.ode_steps,
            truncation: self.truncation,
            convergence_tol: self.convergence_tol,
            mc_paths: self.paths,
            mc_seed: self.seed,
            x0: self.x0,
        }
    }

    /// Run every parameter set through [`validate`].
    pub fn validate(&self) -> Result<(), ConfigError> {
        let alphas: &[f64] = if self.alphas.is_empty() {
            &[1.0]
        } else {
            &self.alphas
        };
        for &a in alphas {
            validate(
                self.market(),
                KmPreferences::new(a, self.rho, self.delta, self.horizon),
                self.solver(),
            )?;
        }
        Ok(())
    }

    /// Config file text that parses back to `self`.
    pub fn to_config_string(&self) -> String {
        let mut s = String::new();
        let truncation = match self.truncation {
            Truncation::Auto => "auto".to_string(),
            Truncation::Depth(k) => k.to_string(),
        };
        let _ = writeln!(s, "# market");
        let _ = writeln!(s, "r = {:?}", self.r);
        let _ = writeln!(s, "risk_premium = {:?}", self.risk_premium);
        let _ = writeln!(s, "sigma = {:?}", self.sigma);
        let _ = writeln!(s, "# preferences");
        let _ = writeln!(s, "alpha_list = {}", join_f64(&self.alphas));
        let _ = writeln!(s, "rho = {:?}", self.rho);
        let _ = writeln!(s, "delta = {:?}", self.delta);
        let _ = writeln!(s, "horizon = {:?}", self.horizon);
        let _ = writeln!(s, "# solver");
        let _ = writeln!(s, "ode_steps = {}", self.ode_steps);
        let _ = writeln!(s, "truncation_K = {truncation}");
        let _ = writeln!(s, "convergence_tol = {:?}", self.convergence_tol);
        let _ = writeln!(s, "# simulation");
        let _ = writeln!(s, "x0 = {:?}", self.x0);
        let _ = writeln!(s, "paths = {}", self.paths);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "report_dates = {}", join_f64(&self.report_dates));
        let _ = writeln!(s, "# output");
        let _ = writeln!(s, "output_dir = {}", self.output_dir.display());
        let _ = writeln!(s, "checks = {}", join(&self.checks));
        s
    }
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError> {
    value.parse().map_err(|_| ConfigError::BadValue {
        key: key.into(),
        value: value.into(),
    })
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>, ConfigError> {
    value
        .split(',')
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(|v| parse_value(key, v))
        .collect()
}

/// Parse config text. Unknown and duplicate keys are errors, and the result
/// is validated.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let mut map: BTreeMap<&str, &str> = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Malformed {
            line: n + 1,
            text: raw.to_string(),
        })?;
        let (key, value) = (key.trim(), value.trim());
        if !KEYS.contains(&key) {
            return Err(ConfigError::UnknownKey {
                line: n + 1,
                key: key.into(),
            });
        }
        if map.insert(key, value).is_some() {
            return Err(ConfigError::DuplicateKey {
                line: n + 1,
                key: key.into(),
            });
        }
    }
    let required = |key: &'static str| map.get(key).copied().ok_or(ConfigError::MissingKey(key));
    let mut cfg = RunConfig::default();
    cfg.r = parse_value("r", required("r")?)?;
    cfg.risk_premium = parse_value("risk_premium", required("risk_premium")?)?;
    cfg.sigma = parse_value("sigma", required("sigma")?)?;
    cfg.alphas = match (map.get("alpha"), map.get("alpha_list")) {
        (Some(_), Some(_)) => return Err(ConfigError::ConflictingAlpha),
        (Some(v), None) => vec![parse_value("alpha", v)?],
        (None, Some(v)) => parse_list("alpha_list", v)?,
        (None, None) => return Err(ConfigError::MissingKey("alpha")),
    };
    cfg.rho = parse_value("rho", required("rho")?)?;
    cfg.delta = parse_value("delta", required("delta")?)?;
    cfg.horizon = parse_value("horizon", required("horizon")?)?;
    if let Some(v) = map.get("ode_steps") {
        cfg.ode_steps = parse_value("ode_steps", v)?;
    }
    if let Some(v) = map.get("truncation_K") {
        cfg.truncation = if v.eq_ignore_ascii_case("auto") || v.eq_ignore_ascii_case("exact") {
            Truncation::Auto
        } else {
            Truncation::Depth(parse_value("truncation_K", v)?)
        };
    }
    if let Some(v) = map.get("convergence_tol") {
        cfg.convergence_tol = parse_value("convergence_tol", v)?;
    }
    if let Some(v) = map.get("x0") {
        cfg.x0 = parse_value("x0", v)?;
    }
    if let Some(v) = map.get("paths") {
        cfg.paths = parse_value("paths", v)?;
    }
    if let Some(v) = map.get("seed") {
        cfg.seed = parse_value("seed", v)?;
    }
    if let Some(v) = map.get("report_dates") {
        cfg.report_dates = parse_list("report_dates", v)?;
    }
    if let Some(v) = map.get("output_dir") {
        cfg.output_dir = PathBuf::from(v);
    }
    if let Some(v) = map.get("checks") {
        cfg.checks = parse_list("checks", v)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text)
}

/// Numeric CSV field: 17 significant digits, so it parses back to the same double.
pub fn fmt_num(x: f64) -> String {
    format!("{x:.16e}")
}

fn write_file(dir: &Path, name: &str, body: &str) -> Result<PathBuf, CliError> {
    fs::create_dir_all(dir).map_err(|source| CliError::Write {
        path: dir.to_path_buf(),
        source,
    })?;
    let path = dir.join(name);
    fs::write(&path, body).map_err(|source| CliError::Write {
        path: path.clone(),
        source,
    })?;
    Ok(path)
}

/// Header and rows of the coefficients file for one solved table.
pub fn coefficients_csv(table: &CoefficientTable) -> String {
    let depth = table.depth();
    let mut header: Vec<String> = vec!["t".into()];
    match table.variant() {
        Variant::General => {
            header.push("A".into());
            header.extend((1..=depth).map(|k| format!("A_{k}")));
        }
        Variant::UnitRra => {
            header.push("B".into());
            header.push("L".into());
            header.extend((1..=depth).map(|k| format!("B_{k}")));
        }
    }
    header.extend(["g", "annuity", "pi_hat"].map(String::from));
    let mut s = header.join(",");
    s.push('\n');
    let g = table.g_nodes();
    let pi = table.pi_hat();
    for (i, &t) in table.times().iter().enumerate() {
        let mut row = vec![fmt_num(t), fmt_num(table.lead()[i])];
        if let Some(l) = table.offset() {
            row.push(fmt_num(l[i]));
        }
        row.extend((1..=depth).map(|k| fmt_num(table.level(k)[i])));
        row.extend([fmt_num(g[i]), fmt_num(1.0 / g[i]), fmt_num(pi)]);
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}

fn alpha_tag(alpha: f64) -> String {
    format!("coefficients_alpha{alpha}.csv")
}

/// Solve every alpha; one `coefficients.csv`, or one file per alpha when
/// there are several.
pub fn cmd_solve(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let mut out = Vec::new();
    for prefs in cfg.prefs() {
        let model = validate(cfg.market(), prefs, cfg.solver()).map_err(ConfigError::from)?;
        let table = solve_coefficients(&model)?;
        let name = if cfg.alphas.len() == 1 {
            "coefficients.csv".to_string()
        } else {
            alpha_tag(prefs.alpha())
        };
        out.push(write_file(
            &cfg.output_dir,
            &name,
            &coefficients_csv(&table),
        )?);
    }
    Ok(out)
}

/// Deterministic Table-1 style report for both engines into `report.csv`.
/// Rows of parameter sets that solve are written even when another fails.
pub fn cmd_table(cfg: &RunConfig) -> Result<PathBuf, CliError> {
    let report = build_report(
        &cfg.market(),
        &cfg.prefs(),
        &cfg.solver(),
        &cfg.report_dates,
        MomentSource::Deterministic,
    );
    let mut s =
        String::from("engine,alpha,t,mean_consumption,annuity,mean_wealth,source,std_error\n");
    for r in &report.rows {
        let se = r.std_error.map(fmt_num).unwrap_or_default();
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            r.engine,
            fmt_num(r.alpha),
            fmt_num(r.t),
            fmt_num(r.mean_consumption),
            fmt_num(r.annuity),
            fmt_num(r.mean_wealth),
            r.source,
            se
        );
    }
    let path = write_file(&cfg.output_dir, "report.csv", &s)?;
    match report.failures.into_iter().next() {
        Some(f) => Err(f.error.into()),
        None => Ok(path),
    }
}

/// Monte Carlo curves at `0, 5, ..., T` for both engines into `curves.csv`.
pub fn cmd_simulate(cfg: &RunConfig) -> Result<PathBuf, CliError> {
    let market = cfg.market();
    let solver = cfg.solver();
    let mut s = String::from(
        "engine,alpha,t,mean_wealth,mean_consumption,annuity,std_error_wealth,std_error_consumption\n",
    );
    for engine in [Engine::Km, Engine::Ez] {
        for prefs in cfg.prefs() {
            let policy = engine_policy(engine, &market, &prefs, &solver)?;
            let dates = default_dates(prefs.horizon());
            let c =
                simulate_paths_at(&policy, &market, cfg.x0, cfg.paths.max(1), cfg.seed, &dates)?;
            for j in 0..c.times.len() {
                let _ = writeln!(
                    s,
                    "{engine},{},{},{},{},{},{},{}",
                    fmt_num(prefs.alpha()),
                    fmt_num(c.times[j]),
                    fmt_num(c.mean_wealth[j]),
                    fmt_num(c.mean_consumption[j]),
                    fmt_num(c.annuity[j]),
                    fmt_num(c.std_error_wealth[j]),
                    fmt_num(c.std_error_consumption[j])
                );
            }
        }
    }
    write_file(&cfg.output_dir, "curves.csv", &s)
}

/// Run the check suite into `verify.csv`; returns the results so the
/// caller can pick the exit code.
pub fn cmd_verify(
    cfg: &RunConfig,
    perturb_lead_pct: Option<f64>,
) -> Result<(PathBuf, Vec<CheckResult>), CliError> {
    cmd_verify_with(cfg, perturb_lead_pct, |_| {})
}

/// [`cmd_verify`] with a callback per finished check.
pub fn cmd_verify_with(
    cfg: &RunConfig,
    perturb_lead_pct: Option<f64>,
    on_result: impl FnMut(&CheckResult),
) -> Result<(PathBuf, Vec<CheckResult>), CliError> {
    let suite = SuiteConfig {
        market: cfg.market(),
        prefs: cfg.prefs(),
        solver: cfg.solver(),
        checks: cfg.checks.clone(),
        perturb_lead_pct,
    };
    let results = run_suite_with(&suite, on_result)?;
    let mut s = String::from("check,value,threshold,pass\n");
    for c in &results {
        let _ = writeln!(
            s,
            "{},{},{},{}",
            c.name,
            fmt_num(c.value),
            fmt_num(c.threshold),
            c.pass
        );
    }
    let path = write_file(&cfg.output_dir, "verify.csv", &s)?;
    Ok((path, results))
}

/// KM against EZ at the report dates into `compare.csv`.
pub fn cmd_compare(cfg: &RunConfig) -> Result<PathBuf, CliError> {
    let market = cfg.market();
    let solver = cfg.solver();
    let mut s = String::from(
        "alpha,t,annuity_km,annuity_ez,annuity_rel_diff,mean_consumption_km,mean_consumption_ez,mean_wealth_km,mean_wealth_ez\n",
    );
    for prefs in cfg.prefs() {
        let curves = |e: Engine| -> Result<_, CliError> {
            let p: PolicyCurve = engine_policy(e, &market, &prefs, &solver)?;
            Ok(deterministic_curves(
                &p,
                &market,
                cfg.x0,
                &cfg.report_dates,
            )?)
        };
        let km = curves(Engine::Km)?;
        let ez = curves(Engine::Ez)?;
        for j in 0..km.times.len() {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{}",
                fmt_num(prefs.alpha()),
                fmt_num(km.times[j]),
                fmt_num(km.annuity[j]),
                fmt_num(ez.annuity[j]),
                fmt_num(km.annuity[j] / ez.annuity[j] - 1.0),
                fmt_num(km.mean_consumption[j]),
                fmt_num(ez.mean_consumption[j]),
                fmt_num(km.mean_wealth[j]),
                fmt_num(ez.mean_wealth[j])
            );
        }
    }
    write_file(&cfg.output_dir, "compare.csv", &s)
}

#[derive(Debug, Parser)]
#[command(
    name = "kmeq",
    version,
    about = "Equilibrium consumption-investment under KM preferences"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Flat `key = value` config file; the reference parameters when absent.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory, overriding `output_dir`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Comma-separated risk aversions, overriding the config.
    #[arg(long, global = true, value_delimiter = ',')]
    pub alpha: Option<Vec<f64>>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Scale the lead coefficient by `1 + pct/100` before verifying.
    #[arg(long = "perturb-A", global = true, allow_negative_numbers = true)]
    pub perturb_a: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Write the ODE coefficients on the solver grid.
    Solve,
    /// Write the deterministic report for both engines.
    Table,
    /// Write Monte Carlo mean curves for both engines.
    Simulate,
    /// Run the check suite.
    Verify,
    /// Write KM against EZ differences.
    Compare,
}

/// Config after applying command-line overrides.
pub fn resolve_config(cli: &Cli) -> Result<RunConfig, ConfigError> {
    let mut cfg = match &cli.config {
        Some(p) => load_config(p)?,
        None => RunConfig::default(),
    };
    if let Some(a) = &cli.alpha {
        cfg.alphas = a.clone();
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.output_dir = o.clone();
    }
    if cli.perturb_a.is_some() && cli.command != Command::Verify {
        return Err(ConfigError::PerturbOutsideVerify);
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Run a parsed command and return the process exit code.
pub fn execute(cli: &Cli) -> i32 {
    let cfg = match resolve_config(cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config error: {e}");
            return EXIT_CONFIG;
        }
    };
    let result = match cli.command {
        Command::Solve => {
            cmd_solve(&cfg).map(|p| p.into_iter().for_each(|p| println!("{}", p.display())))
        }
        Command::Table => cmd_table(&cfg).map(|p| println!("{}", p.display())),
        Command::Simulate => cmd_simulate(&cfg).map(|p| println!("{}", p.display())),
        Command::Compare => cmd_compare(&cfg).map(|p| println!("{}", p.display())),
        Command::Verify => match cmd_verify_with(&cfg, cli.perturb_a, |c| {
            println!(
                "{} {} {:e} < {:e}",
                if c.pass { "PASS" } else { "FAIL" },
                c.name,
                c.value,
                c.threshold
            );
        }) {
            Ok((path, results)) => {
                println!("{}", path.display());
                if results.iter().all(|c| c.pass) {
                    return EXIT_OK;
                }
                return EXIT_VERIFY;
            }
            Err(e) => Err(e),
        },
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}

/// Parse `args` (including the program name) and run.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => execute(&cli),
        Err(e) => {
            let _ = e.print();
            if e.use_stderr() {
                EXIT_CONFIG
            } else {
                EXIT_OK
            }
        }
    }
}
