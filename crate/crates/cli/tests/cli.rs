use fracpme_cli::config::ExperimentConfig;
use serde_json::Value;
use sha2::{Digest, Sha256};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_fracpme"));
    c.env_remove("FRACPME_THREADS");
    c
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

fn run(config: &Path, out: &Path, threads: Option<&str>) -> Output {
    let mut c = bin();
    c.arg("run").arg(config).arg("--output").arg(out);
    if let Some(t) = threads {
        c.env("FRACPME_THREADS", t);
    }
    c.output().unwrap()
}

fn manifest(out: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap()
}

const ZERO_SOLVE: &str = r#"
experiment = "solve"

[grid]
n = 64
length = 8.0

[kernel]
kind = "fractional"
a = 1.0

[solver]
dt = 1e-2
t_final = 0.1
"#;

#[test]
fn zero_data_solve_has_zero_diagnostics() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "zero.toml", ZERO_SOLVE);
    let out = tmp.path().join("out");
    let o = run(&cfg, &out, None);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let diag = fs::read_to_string(out.join("diagnostics.csv")).unwrap();
    let mut lines = diag.lines();
    assert!(lines.next().unwrap().starts_with("t,mass,l1"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 11);
    for r in rows {
        assert!(r.split(',').skip(1).all(|v| v.parse::<f64>().unwrap() == 0.0), "{r}");
    }
}

#[test]
fn verify_symbol_on_the_fractional_kernel() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "sym.toml",
        r#"
experiment = "verify-symbol"
seed = 3

[grid]
n = 64
length = 4.0

[kernel]
kind = "fractional"
a = 1.0

[verify_symbol]
samples = 40
"#,
    );
    let out = tmp.path().join("out");
    assert!(run(&cfg, &out, None).status.success());
    let report: Value = serde_json::from_str(&fs::read_to_string(out.join("bound_report.json")).unwrap()).unwrap();
    let c = report["c_est"].as_f64().unwrap();
    assert!((c - 1.0).abs() <= 0.05, "{c}");
    assert!(report["M_est"].as_f64().unwrap() <= 1e-6);
    assert_eq!(manifest(&out)["seed"], 3);
}

#[test]
fn regularity_sweep_threshold_on_the_closed_form() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "sweep.toml",
        r#"
experiment = "regularity-sweep"

[grid]
n = 512
length = 16.0

[kernel]
kind = "fractional"
a = 2.0

[nonlinearity]
kind = "power"
m = 2.0

[sweep]
p = 2.0
mu_power = 1.0
"#,
    );
    let out = tmp.path().join("out");
    assert!(run(&cfg, &out, None).status.success());
    let t = manifest(&out)["summary"]["threshold"].as_f64().unwrap();
    assert!((t - 1.0).abs() <= 0.1, "{t}");
    assert!(fs::read_to_string(out.join("sweep.csv")).unwrap().starts_with("sigma,N,value,divergent\n"));
}

#[test]
fn runs_are_reproducible_and_manifest_hashes_every_output() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "k.toml",
        r#"
experiment = "kinetic-check"
threads = 1

[grid]
n = 64
length = 12.0

[kernel]
kind = "fractional"
a = 1.0

[solver]
dt = 1e-3
t_final = 0.2
eps2 = 5e-3

[initial]
kind = "bump"
radius = 2.0
"#,
    );
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert!(run(&cfg, &a, None).status.success());
    assert!(run(&cfg, &b, Some("3")).status.success());
    let (ma, mb) = (manifest(&a), manifest(&b));
    assert_eq!(ma["threads"], 1);
    assert_eq!(mb["threads"], 3);
    let files = ma["outputs"].as_array().unwrap();
    assert!(files.len() >= 2);
    for f in files {
        let rel = f["path"].as_str().unwrap();
        let (x, y) = (fs::read(a.join(rel)).unwrap(), fs::read(b.join(rel)).unwrap());
        assert_eq!(x, y, "{rel} differs between runs");
        assert_eq!(format!("{:x}", Sha256::digest(&x)), f["sha256"].as_str().unwrap());
    }
    assert_eq!(ma["outputs"], mb["outputs"]);
    let listed: Vec<&str> = files.iter().map(|f| f["path"].as_str().unwrap()).collect();
    for e in fs::read_dir(&a).unwrap() {
        let name = e.unwrap().file_name().into_string().unwrap();
        assert!(name == "manifest.json" || listed.contains(&name.as_str()), "{name} missing from manifest");
    }
}

#[test]
fn list_names_seven_experiments() {
    let o = bin().arg("list").output().unwrap();
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    let names: Vec<&str> = text.lines().map(|l| l.split_whitespace().next().unwrap()).collect();
    assert_eq!(
        names,
        ["solve", "barenblatt", "norms", "verify-symbol", "scaling-check", "kinetic-check", "regularity-sweep"]
    );
}

#[test]
fn unknown_experiment_names_the_nearest_match() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "bad.toml", &ZERO_SOLVE.replace("\"solve\"", "\"barenblat\""));
    let o = run(&cfg, &tmp.path().join("out"), None);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8(o.stderr).unwrap();
    assert!(err.contains("bad.toml:2:"), "{err}");
    assert!(err.contains("did you mean 'barenblatt'"), "{err}");
    assert!(!tmp.path().join("out").exists());
}

#[test]
fn invalid_values_are_line_anchored() {
    let tmp = tempfile::tempdir().unwrap();
    let cases = [
        (ZERO_SOLVE.replace("n = 64", "n = 48"), ":5:"),
        (ZERO_SOLVE.replace("t_final = 0.1", "t_final = 0.105"), ":14:"),
        (ZERO_SOLVE.replace("length = 8.0", "length = \"eight\""), ":6:"),
        (ZERO_SOLVE.replace("dt = 1e-2", "dt = 1e-2\nstep = 3"), ":14:"),
    ];
    for (body, anchor) in cases {
        let cfg = write_config(tmp.path(), "c.toml", &body);
        let o = run(&cfg, &tmp.path().join("out"), None);
        assert_eq!(o.status.code(), Some(1));
        let err = String::from_utf8(o.stderr).unwrap();
        assert!(err.contains(anchor), "expected {anchor} in {err}");
    }
}

#[test]
fn runtime_failure_writes_structured_error() {
    let tmp = tempfile::tempdir().unwrap();
    let body = ZERO_SOLVE.replace("t_final = 0.1", "t_final = 0.1\nscheme = \"explicit\"")
        + "\n[initial]\nkind = \"bump\"\nradius = 2.0\nheight = 10.0\n";
    let cfg = write_config(tmp.path(), "cfl.toml", &body);
    let out = tmp.path().join("out");
    let o = run(&cfg, &out, None);
    assert_eq!(o.status.code(), Some(2));
    let err: Value = serde_json::from_str(String::from_utf8(o.stderr).unwrap().trim()).unwrap();
    assert_eq!(err["error"], "cfl_violation");
    let on_disk: Value = serde_json::from_str(&fs::read_to_string(out.join("error.json")).unwrap()).unwrap();
    assert_eq!(on_disk, err);
    assert_eq!(manifest(&out)["status"], "error");
}

#[test]
fn bad_thread_override_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "zero.toml", ZERO_SOLVE);
    let o = run(&cfg, &tmp.path().join("out"), Some("many"));
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8(o.stderr).unwrap().contains("FRACPME_THREADS"));
}

#[test]
fn help_and_version() {
    let o = bin().arg("--help").output().unwrap();
    let text = String::from_utf8(o.stdout).unwrap();
    for word in ["run", "list", "--help", "--version"] {
        assert!(text.contains(word), "{word} missing from {text}");
    }
    let o = bin().args(["run", "--help"]).output().unwrap();
    assert!(String::from_utf8(o.stdout).unwrap().contains("--output"));
    let o = bin().arg("--version").output().unwrap();
    assert_eq!(String::from_utf8(o.stdout).unwrap().trim(), format!("fracpme {}", env!("CARGO_PKG_VERSION")));
}

#[test]
fn shipped_configs_parse_and_round_trip() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for e in fs::read_dir(dir).unwrap() {
        let path = e.unwrap().path();
        let cfg = ExperimentConfig::parse(&fs::read_to_string(&path).unwrap()).unwrap();
        let again = ExperimentConfig::parse(&cfg.to_toml()).unwrap();
        assert_eq!(cfg, again, "{}", path.display());
        seen += 1;
    }
    assert!(seen >= 7);
}
