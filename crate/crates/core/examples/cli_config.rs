//! Write the reference configuration and drive the command-line front end
//! with it.

use kmeq::cli::{run, RunConfig};

fn main() {
    let dir = std::env::temp_dir().join("kmeq-example");
    std::fs::create_dir_all(&dir).unwrap();
    let cfg = RunConfig {
        output_dir: dir.clone(),
        checks: vec![],
        ..RunConfig::default()
    };
    let path = dir.join("paper.cfg");
    std::fs::write(&path, cfg.to_config_string()).unwrap();
    print!("{}", cfg.to_config_string());
    for cmd in ["solve", "table", "compare", "verify"] {
        let code = run(["kmeq", cmd, "--config", path.to_str().unwrap()]);
        println!("{cmd}: exit {code}");
    }
}
