use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const UNIFORM: &str = r#"
schema_version = 1
supplies = [0.1, 0.1]

[distribution]
family = "uniform_square"
"#;

const CORNER: &str = r#"
schema_version = 1
supplies = [0.1, 0.1]
mc_samples = 200000

[distribution]
family = "corner_mass"
a = 0.2
hi = 20.0
lo = 0.20833333333333334
"#;

struct Workspace {
    dir: tempfile::TempDir,
}

impl Workspace {
    fn new() -> Self {
        Self {
            dir: tempfile::tempdir().unwrap(),
        }
    }

    fn file(&self, name: &str, contents: &str) -> PathBuf {
        let p = self.dir.path().join(name);
        std::fs::write(&p, contents).unwrap();
        p
    }

    fn out(&self) -> PathBuf {
        self.dir.path().join("out")
    }

    fn run(&self, config: &Path, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_ceei"))
            .arg("--config")
            .arg(config)
            .arg("--out")
            .arg(self.out())
            .args(args)
            .output()
            .unwrap()
    }

    fn report(&self, name: &str) -> Value {
        let text = std::fs::read_to_string(self.out().join(name)).unwrap();
        serde_json::from_str(&text).unwrap()
    }
}

fn floats(v: &Value) -> Vec<f64> {
    v.as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn ceei_reports_quantities() {
    let ws = Workspace::new();
    let cfg = ws.file("u.toml", UNIFORM);
    let o = ws.run(&cfg, &["ceei"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let q = floats(&ws.report("ceei.json")["result"]["q"]);
    assert!((q[0] - 0.2).abs() < 1e-6 && (q[1] - 0.2).abs() < 1e-6);

    let cfg = ws.file("a.toml", &UNIFORM.replace("[0.1, 0.1]", "[0.1, 0.3]"));
    assert!(ws.run(&cfg, &["ceei"]).status.success());
    let r = ws.report("ceei.json");
    let q = floats(&r["result"]["q"]);
    assert!((q[0] - 0.3).abs() < 1e-3 && (q[1] - 0.45).abs() < 1e-3);
    for key in ["y", "p", "theta0", "region_masses", "clearing_residual", "iterations"] {
        assert!(!r["result"][key].is_null(), "missing {key}");
    }
}

#[test]
fn invalid_inputs_exit_with_two() {
    let ws = Workspace::new();
    let cfg = ws.file("neg.toml", &UNIFORM.replace("[0.1, 0.1]", "[-1.0, 0.1]"));
    let o = ws.run(&cfg, &["ceei"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("supplies must be strictly positive"));

    let cfg = ws.file(
        "few.toml",
        &UNIFORM.replace("schema_version = 1", "schema_version = 1\nmc_samples = 10"),
    );
    assert_eq!(ws.run(&cfg, &["ceei"]).status.code(), Some(2));

    let cfg = ws.file("u.toml", UNIFORM);
    assert_eq!(
        ws.run(&ws.dir.path().join("missing.toml"), &["ceei"]).status.code(),
        Some(2)
    );
    let menu = ws.file("bad.json", "{\"bundles\": [[0.2, 0.0], ");
    assert_eq!(
        ws.run(&cfg, &["evaluate", "--menu", menu.to_str().unwrap()])
            .status
            .code(),
        Some(2)
    );
    let menu = ws.file("neg.json", "[[0.2, -0.1]]");
    assert_eq!(
        ws.run(&cfg, &["evaluate", "--menu", menu.to_str().unwrap()])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn shadow_costs_and_method_limits() {
    let ws = Workspace::new();
    let cfg = ws.file("u.toml", UNIFORM);
    assert!(ws.run(&cfg, &["shadow"]).status.success());
    let c = floats(&ws.report("shadow.json")["result"]["c"]);
    assert!(c.iter().all(|x| (x - 2.0 / 3.0).abs() < 1e-6), "{c:?}");

    let embedded = UNIFORM.replace("[0.1, 0.1]", "[0.1, 0.3]") + "\n[shadow]\nscaling = \"embedded\"\n";
    let cfg = ws.file("e.toml", &embedded);
    assert!(ws.run(&cfg, &["shadow"]).status.success());
    let c = floats(&ws.report("shadow.json")["result"]["c"]);
    let r2 = 2f64.sqrt();
    let t = 0.6;
    let c1 = ((2.0 - 2.0 * r2) * t * t + (4.0 + 6.0 * r2) * t - r2)
        / (3.0 * (1.0 - t) * ((7.0 + 5.0 * r2) * t - (1.0 + r2)));
    let c2 = ((2.0 + 4.0 * r2) * t * t + (2.0 - 2.0 * r2) * t + (r2 - 1.0)) / (3.0 * t * ((3.0 + 2.0 * r2) * t - 1.0));
    assert!(
        (c[0] / c1 - 1.0).abs() < 0.01 && (c[1] / c2 - 1.0).abs() < 0.01,
        "{c:?}"
    );

    let four = r#"
schema_version = 1
supplies = [0.1, 0.1, 0.1, 0.1]

[distribution]
family = "iid"
n_goods = 4
marginal = { kind = "uniform", upper = 1.0 }

[shadow]
method = "geometric"
"#;
    let o = ws.run(&ws.file("n4.toml", four), &["shadow"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("geometric method requires N ≤ 3"));
}

#[test]
fn certify_verdicts() {
    let ws = Workspace::new();
    let three = r#"
schema_version = 1
supplies = [0.1, 0.1, 0.1]

[distribution]
family = "iid"
n_goods = 3
marginal = { kind = "uniform", upper = 1.0 }
"#;
    for (cfg, verdict) in [
        (UNIFORM, "certified_optimal"),
        (CORNER, "certificate_fails"),
        (three, "certified_optimal"),
    ] {
        let path = ws.file("c.toml", cfg);
        let o = ws.run(&path, &["certify"]);
        assert!(o.status.success(), "{}", stderr(&o));
        assert_eq!(ws.report("certify.json")["result"]["verdict"], verdict);
    }
}

#[test]
fn twogood_report_and_curve() {
    let ws = Workspace::new();
    let cfg = ws.file("c.toml", &(CORNER.to_owned() + "\n[grids]\nz_grid_size = 101\n"));
    let o = ws.run(&cfg, &["twogood"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let r = &ws.report("twogood.json")["result"]["solution"];
    assert_eq!(r["verdict"], "three_option_optimal");
    assert!((r["z_star"].as_f64().unwrap() - 0.6297).abs() < 1e-3);
    assert_eq!(r["menu"]["bundles"].as_array().unwrap().len(), 3);
    let csv = std::fs::read_to_string(ws.out().join("twogood_curve.csv")).unwrap();
    assert!(!csv.contains('\r'));
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "z,zeta,r");
    assert_eq!(lines.len() - 1, 101);

    let cfg = ws.file("u.toml", UNIFORM);
    assert!(ws.run(&cfg, &["twogood"]).status.success());
    let r = &ws.report("twogood.json")["result"]["solution"];
    assert_eq!(r["verdict"], "two_option_optimal");
    for b in r["menu"]["bundles"].as_array().unwrap() {
        assert!((floats(b).iter().sum::<f64>() - 0.2).abs() < 1e-12);
    }

    let cfg = ws.file("a.toml", &UNIFORM.replace("[0.1, 0.1]", "[0.1, 0.2]"));
    assert_eq!(ws.run(&cfg, &["twogood"]).status.code(), Some(2));
}

#[test]
fn evaluate_menus() {
    let ws = Workspace::new();
    let cfg = ws.file("u.toml", UNIFORM);
    let menu = ws.file("two.json", "[[0.2, 0.0], [0.0, 0.2]]");
    assert!(ws
        .run(&cfg, &["evaluate", "--menu", menu.to_str().unwrap()])
        .status
        .success());
    let r = &ws.report("evaluate.json")["result"];
    let w = &r["welfare"]["welfare_v_space"];
    let (v, se) = (w["value"].as_f64().unwrap(), w["std_error"].as_f64().unwrap());
    assert!((v - 0.4 / 3.0).abs() <= 3.0 * se, "{v} +- {se}");
    assert_eq!(r["ratio_violations"], 0);

    // the optimized three-option menu beats pure options on the corner model
    let corner = ws.file("c.toml", CORNER);
    assert!(ws.run(&corner, &["twogood"]).status.success());
    let three = ws.report("twogood.json")["result"]["solution"]["menu"].to_string();
    let three = ws.file("three.json", &three);
    let welfare = |menu: &Path| {
        assert!(ws
            .run(&corner, &["evaluate", "--menu", menu.to_str().unwrap()])
            .status
            .success());
        let w = ws.report("evaluate.json")["result"]["welfare"]["welfare_v_space"].clone();
        (w["value"].as_f64().unwrap(), w["std_error"].as_f64().unwrap())
    };
    let (w3, se3) = welfare(&three);
    let (w2, se2) = welfare(&menu);
    assert!(w3 - w2 > 3.0 * (se3 * se3 + se2 * se2).sqrt(), "{w3} vs {w2}");
}

#[test]
fn identical_runs_give_identical_bytes() {
    let ws = Workspace::new();
    let cfg = ws.file("c.toml", CORNER);
    let mut outputs = Vec::new();
    for _ in 0..2 {
        let o = ws.run(&cfg, &["--mode", "mc", "--samples", "20000", "--seed", "7", "ceei"]);
        assert!(o.status.success(), "{}", stderr(&o));
        outputs.push(std::fs::read(ws.out().join("ceei.json")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    let r: Value = serde_json::from_slice(&outputs[0]).unwrap();
    assert_eq!(r["config"]["seed"], 7);
    assert_eq!(r["result"]["backend"], "monte_carlo");
}

#[test]
fn reproduce_examples_passes() {
    let ws = Workspace::new();
    let o = Command::new(env!("CARGO_BIN_EXE_ceei"))
        .args(["reproduce-examples", "--samples", "200000", "--out"])
        .arg(ws.out())
        .output()
        .unwrap();
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert_eq!(o.status.code(), Some(0), "{stdout}");
    assert_eq!(stdout.lines().filter(|l| l.starts_with("PASS")).count(), 10);
    let summary = ws.report("reproduce.json");
    assert_eq!(summary["failed"], 0);
    assert_eq!(summary["rows"].as_array().unwrap().len(), 10);
}
