use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};

fn stride(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stride")).args(args).output().unwrap()
}

fn small_config(dir: &Path) -> std::path::PathBuf {
    let config = json!({
        "generator": { "seed": 3, "depth": 3, "steps": 1, "height": 8, "width": 8, "feat_dim": 8, "out_dim": 3 },
        "seed": 11,
        "prompts": 3,
        "samples_per_prompt": 4,
        "method": "stride",
        "stride": {
            "alpha": 0.5, "f_alpha": 1.0, "patch_size": 2, "stride": 2, "k_components": 4,
            "power_iterations": 2, "layer_set": [0], "step_gate": [0], "seed": 0, "energy_match": true
        },
        "metrics": { "in_batch_sim": true, "vendi": true, "kid": true, "kid_blocks": 2 }
    });
    let path = dir.join("config.json");
    std::fs::write(&path, config.to_string()).unwrap();
    path
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn run_twice_gives_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path());
    let outs = [dir.path().join("a"), dir.path().join("b")];
    for out in &outs {
        let o = stride(&[
            "run",
            "--config",
            path_str(&config),
            "--methods",
            "baseline,no_pca,stride",
            "--out",
            path_str(out),
            "--quiet",
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        assert!(o.stdout.is_empty());
    }
    for name in ["results.csv", "pareto.svg", "manifest.json"] {
        let a = std::fs::read(outs[0].join(name)).unwrap();
        let b = std::fs::read(outs[1].join(name)).unwrap();
        assert_eq!(a, b, "{name}");
    }
    let svg = std::fs::read_to_string(outs[0].join("pareto.svg")).unwrap();
    assert_eq!(svg.matches(r#"<g class="series""#).count(), 3);
    let manifest: Value =
        serde_json::from_slice(&std::fs::read(outs[0].join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["tool"], "stride");
    assert_eq!(manifest["config"]["seed"], 11);
    assert_eq!(manifest["run"]["pareto_axes"], json!(["in_batch_sim", "kid"]));
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path());
    let out = dir.path().join("o");
    let o = stride(&["run", "--config", path_str(&config), "--seed", "99", "--out", path_str(&out)]);
    assert!(o.status.success());
    let manifest: Value = serde_json::from_slice(&std::fs::read(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["seed"], 99);
    assert!(String::from_utf8_lossy(&o.stdout).contains("stride"));
}

#[test]
fn sweep_writes_tagged_rows() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path());
    let out = dir.path().join("sweep");
    let o = stride(&[
        "sweep",
        "--config",
        path_str(&config),
        "--axis",
        "P",
        "--values",
        "[1, 2, 4]",
        "--out",
        path_str(&out),
        "--quiet",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.join("results.csv")).unwrap();
    for p in ["1", "2", "4"] {
        assert_eq!(csv.lines().filter(|l| l.starts_with(&format!("P,{p},"))).count(), 3);
    }
}

#[test]
fn invalid_configs_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path());
    let mut value: Value = serde_json::from_str(&std::fs::read_to_string(&config).unwrap()).unwrap();
    value["stride"]["alpah"] = json!(1.0);
    let typo = dir.path().join("typo.json");
    std::fs::write(&typo, value.to_string()).unwrap();
    let broken = dir.path().join("broken.json");
    std::fs::write(&broken, "{ not json").unwrap();
    value["stride"].as_object_mut().unwrap().remove("alpah");
    value["prompts"] = json!(0);
    let zero = dir.path().join("zero.json");
    std::fs::write(&zero, value.to_string()).unwrap();
    for path in [&typo, &broken, &zero] {
        let o = stride(&["run", "--config", path_str(path), "--out", path_str(&dir.path().join("x"))]);
        assert_eq!(o.status.code(), Some(2), "{}", path.display());
    }
    let o = stride(&["sweep", "--config", path_str(&config), "--axis", "gamma", "--values", "[1]"]);
    assert_eq!(o.status.code(), Some(2));
    let o = stride(&["run", "--config", path_str(&config), "--methods", "magic"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn io_failures_exit_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let o = stride(&["run", "--config", path_str(&dir.path().join("missing.json"))]);
    assert_eq!(o.status.code(), Some(3));
    let config = small_config(dir.path());
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "").unwrap();
    let o = stride(&["run", "--config", path_str(&config), "--out", path_str(&blocker.join("sub"))]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn shipped_config_is_the_demo() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/demo.json");
    let text = std::fs::read_to_string(path).unwrap();
    let spec: stride_core::experiment::ExperimentSpec = serde_json::from_str(&text).unwrap();
    assert_eq!(spec, stride_core::experiment::ExperimentSpec::demo());
}
