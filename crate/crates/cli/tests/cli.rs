use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const FAST: &str = "[monte_carlo]\nsamples = 10000\n";

struct Run {
    dir: tempfile::TempDir,
}

impl Run {
    fn new(config: &str) -> Self {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("run.toml"), config).unwrap();
        Self { dir }
    }

    fn out(&self) -> PathBuf {
        self.dir.path().join("out")
    }

    fn nftrap(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_nftrap"))
            .current_dir(self.dir.path())
            .env("RUST_LOG", "warn")
            .args(args)
            .args(["--config", "run.toml", "--out", "out"])
            .output()
            .unwrap()
    }

    fn ok(&self, args: &[&str]) {
        let o = self.nftrap(args);
        assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    }

    fn read(&self, name: &str) -> String {
        std::fs::read_to_string(self.out().join(name)).unwrap()
    }

    fn json(&self, name: &str) -> serde_json::Value {
        serde_json::from_str(&self.read(name)).unwrap()
    }
}

fn column(csv: &str, name: &str) -> Vec<f64> {
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let i = header.iter().position(|h| *h == name).unwrap();
    lines.map(|l| l.split(',').nth(i).unwrap().parse().unwrap()).collect()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn spectrum_rows_follow_floor_formula() {
    let run = Run::new("");
    run.ok(&["spectrum"]);
    assert_eq!(column(&run.read("spectrum.csv"), "n").len(), 62);

    let run = Run::new("[trap]\ndepth_uK = 120\n");
    run.ok(&["spectrum"]);
    let cs = nftrap_core::constants::cesium_defaults();
    let depth = cs.micro_kelvin(120.0);
    let expected = ((2.0 * cs.mass * depth).sqrt() / (5.85e6 * cs.constants.hbar) - 0.5).floor() as usize + 1;
    let rows = column(&run.read("spectrum.csv"), "n");
    assert_eq!(rows.len(), expected);
    assert!(expected < 62);
}

#[test]
fn zero_bound_states_is_a_config_error() {
    let run = Run::new("[trap]\ndepth_uK = 0.001\n");
    let o = run.nftrap(&["spectrum"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("bound"), "{}", stderr(&o));
}

#[test]
fn config_errors_are_line_anchored() {
    let run = Run::new("[trap]\ndepth_uK = 240\n\nbogus_key = 1\n");
    let o = run.nftrap(&["spectrum"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("run.toml:4"), "{}", stderr(&o));

    let run = Run::new("[dynamics]\ninitial_atoms = -3\n");
    let o = run.nftrap(&["simulate"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("run.toml:2"), "{}", stderr(&o));
}

#[test]
fn usage_errors_exit_one() {
    let run = Run::new("");
    assert_eq!(run.nftrap(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(run.nftrap(&["fit", "--model", "cubic", "--data", "x.csv"]).status.code(), Some(1));
    assert_eq!(run.nftrap(&["spectrum", "--threads", "0"]).status.code(), Some(1));
    let help = Command::new(env!("CARGO_BIN_EXE_nftrap")).arg("--help").output().unwrap();
    assert_eq!(help.status.code(), Some(0));
}

#[test]
fn coupling_sweep_columns() {
    let half = 240.0 / std::f64::consts::LN_2;
    let run = Run::new(&format!("[sweep]\ntemperature_min_uK = {half}\ntemperature_max_uK = 1e6\npoints = 60\n"));
    run.ok(&["coupling"]);
    let csv = run.read("coupling.csv");
    let beta = column(&csv, "mean_beta");
    let frac = column(&csv, "remaining_fraction");
    assert!((frac[0] - 0.5).abs() < 1e-9, "{}", frac[0]);
    assert!(beta.windows(2).all(|w| w[1] < w[0]));
    let tail = beta[beta.len() - 1];
    assert!((tail / 0.012 - 1.0).abs() < 0.1, "{tail}");
    let states = run.read("coupling_states.csv");
    assert_eq!(column(&states, "beta").len(), 62);
}

#[test]
fn heating_tables_are_reproducible() {
    let a = Run::new(FAST);
    a.ok(&["heating", "--seed", "5"]);
    let t_rec = a.json("heating_summary.json")["recoil_temperature_k"].as_f64().unwrap();
    let curve = column(&a.read("heating_curve.csv"), "delta_T_K");
    assert!(curve.iter().all(|h| *h >= t_rec));
    // A second run hits the cache; a third in a fresh directory recomputes.
    a.ok(&["heating", "--seed", "5"]);
    let b = Run::new(FAST);
    b.ok(&["heating", "--seed", "5", "--threads", "1"]);
    for f in ["heating_states.csv", "heating_curve.csv", "heating_summary.json"] {
        assert_eq!(a.read(f), b.read(f), "{f}");
    }
    let c = Run::new(FAST);
    c.ok(&["heating", "--seed", "6"]);
    assert_ne!(a.read("heating_states.csv"), c.read("heating_states.csv"));
}

#[test]
fn recoil_only_summary_rate() {
    let run = Run::new("[monte_carlo]\nheating = \"recoil-only\"\n");
    run.ok(&["heating"]);
    let s = run.json("heating_summary.json");
    let rate = s["recoil_only_rate_k_per_s"].as_f64().unwrap();
    assert!((0.8..=1.2).contains(&rate), "{rate}");
    let states = column(&run.read("heating_states.csv"), "delta_T_K");
    assert!(states.iter().all(|h| *h == 0.0));
}

#[test]
fn fit_round_trip_on_simulated_trace() {
    let run = Run::new(&format!(
        "{FAST}[simulate]\nrecipe = \"schedule\"\nsegments = [{{ kind = \"probe\", duration_us = 1000, power = 0.1 }}]\n"
    ));
    run.ok(&["simulate"]);
    let s = run.json("simulate_summary.json");
    let gamma = s["probes"][0]["gamma_per_s"].as_f64().unwrap();
    let data = run.out().join("trace.csv");
    let data = data.to_str().unwrap();
    run.ok(&["fit", "--model", "double-exp", "--data", data, "--from", "10e-6", "--to", "500e-6"]);
    let f = run.json("fit.json");
    let fitted = f["parameters"][1]["value"].as_f64().unwrap();
    assert_eq!(f["parameters"][1]["name"], "gamma");
    assert!((fitted / gamma - 1.0).abs() < 0.05, "{fitted} vs {gamma}");
    assert_eq!(f["x_column"], "time_s");
    assert_eq!(f["y_column"], "transmission");
}

#[test]
fn malformed_data_reports_line() {
    let run = Run::new("");
    let data = run.dir.path().join("bad.csv");
    std::fs::write(&data, "time_s,transmission\n0,0.1\n1e-6,0.2\n2e-6,oops\n").unwrap();
    let o = run.nftrap(&["fit", "--model", "double-exp", "--data", data.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("bad.csv:4"), "{}", stderr(&o));
}

#[test]
fn od_spectrum_fit_is_flagged() {
    let run = Run::new("");
    let linewidth = 2.0 * std::f64::consts::PI * 5.22e6;
    let model = nftrap_core::fitting::model_od_spectrum(linewidth);
    let mut text = String::from("detuning_rad_s,transmission\n");
    for k in -20..=20 {
        let x = k as f64 * 0.2 * linewidth;
        text.push_str(&format!("{x:e},{:e}\n", model.eval(x, &[1.3, 0.4])));
    }
    let data = run.dir.path().join("spectrum.csv");
    std::fs::write(&data, text).unwrap();
    run.ok(&["fit", "--model", "od-spectrum", "--data", data.to_str().unwrap()]);
    let f = run.json("fit.json");
    assert!(f["note"].as_str().unwrap().contains("Lorentzian"));
    assert!((f["parameters"][0]["value"].as_f64().unwrap() / 1.3 - 1.0).abs() < 1e-8);
}

#[test]
fn calibrate_reports_targets_and_failures() {
    let run = Run::new(FAST);
    run.ok(&["calibrate"]);
    let c = run.json("calibration.json");
    assert!(c["residual"].as_f64().unwrap() < 1e-6);
    assert!((c["beta_cold"].as_f64().unwrap() / 0.024 - 1.0).abs() < 1e-6);
    assert!((c["beta_infinite"].as_f64().unwrap() / 0.012 - 1.0).abs() < 1e-6);
    let b100 = c["beta_100uK"].as_f64().unwrap();
    assert!((0.015..=0.019).contains(&b100), "{b100}");

    let infeasible = Run::new("[coupling]\nbeta_hot = 0.03\nbeta_cold = 0.01\n");
    let o = infeasible.nftrap(&["calibrate"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).to_lowercase().contains("calibration"), "{}", stderr(&o));
}

#[test]
fn every_recipe_parses() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("recipes");
    let mut count = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        nftrap_cli::config::LoadedConfig::from_file(&path).unwrap_or_else(|e| panic!("{e}"));
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("# nftrap "), "{} lacks its command line", path.display());
        count += 1;
    }
    assert!(count >= 10);
}
