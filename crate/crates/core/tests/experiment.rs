mod common;

use common::band_ratio;
use stride_core::experiment::{
    compare_methods, csv_string, emit_csv, emit_pareto_svg, run_experiment, sweep, ExperimentSpec, Method,
    SweepAxis,
};
use stride_core::inject::stride_direction;
use stride_core::{GeneratorSpec, StrideConfig, ToyGenerator};

fn small_spec() -> ExperimentSpec {
    let mut spec = ExperimentSpec::demo();
    spec.prompts = 4;
    spec.samples_per_prompt = 3;
    spec.generator = GeneratorSpec { height: 8, width: 8, feat_dim: 8, depth: 3, ..GeneratorSpec::default() };
    spec.stride = StrideConfig { energy_match: true, ..StrideConfig::for_depth(3) };
    spec.metrics.kid = true;
    spec.metrics.kid_blocks = 2;
    spec
}

#[test]
fn reports_are_byte_identical_across_runs() {
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for dir in &dirs {
        let rows = compare_methods(&small_spec(), &Method::ALL).unwrap();
        emit_csv(&rows, &dir.path().join("results.csv")).unwrap();
        emit_pareto_svg(&rows, "in_batch_sim", "kid", &dir.path().join("pareto.svg")).unwrap();
    }
    for name in ["results.csv", "pareto.svg"] {
        let a = std::fs::read(dirs[0].path().join(name)).unwrap();
        let b = std::fs::read(dirs[1].path().join(name)).unwrap();
        assert_eq!(a, b, "{name}");
    }
}

#[test]
fn baseline_injects_nothing_and_stride_does() {
    let rows = compare_methods(&small_spec(), &[Method::Baseline, Method::Stride]).unwrap();
    for row in &rows {
        match row.method {
            Method::Baseline => assert_eq!(row.perturbation_energy, 0.0),
            _ => assert!(row.perturbation_energy > 0.0),
        }
    }
}

#[test]
fn shared_digest_across_methods() {
    let rows = compare_methods(&small_spec(), &Method::ALL).unwrap();
    assert!(rows.iter().all(|r| r.config_digest == rows[0].config_digest));
    assert_eq!(rows.len(), 4 * 4);
}

#[test]
fn sweep_rows_carry_axis_values() {
    let values = [serde_json::json!(0.0), serde_json::json!(2.0)];
    let rows = sweep(&small_spec(), SweepAxis::FAlpha, &values).unwrap();
    let csv = csv_string(&rows);
    assert!(csv.lines().skip(1).all(|l| l.starts_with("f_alpha,0,") || l.starts_with("f_alpha,2,")));
    assert_ne!(rows[0].config_digest, rows[rows.len() - 1].config_digest);
}

#[test]
fn injected_spectrum_follows_exponent() {
    let gen =
        ToyGenerator::build(GeneratorSpec { height: 32, width: 32, ..GeneratorSpec::default() }).unwrap();
    let out = gen.generate(&gen.sample_latent(1), None).unwrap();
    let features = &out.trace[0].images()[0];
    let ratio = |f_alpha: f64| {
        let cfg = StrideConfig { f_alpha, ..StrideConfig::for_depth(6) };
        (0..8)
            .map(|id| {
                let d = stride_direction(features, &cfg, id, 0, 0).unwrap().direction;
                let (h, w, c) = d.shape();
                (0..c)
                    .map(|ch| {
                        let plane: Vec<f64> = (0..h * w).map(|i| d.data()[i * c + ch]).collect();
                        band_ratio(&plane, h, w)
                    })
                    .sum::<f64>()
            })
            .sum::<f64>()
    };
    let (white, pink, brown) = (ratio(0.0), ratio(1.0), ratio(2.0));
    assert!(white > pink && pink > brown, "{white} {pink} {brown}");
}

#[test]
fn unknown_config_keys_are_rejected() {
    let mut value = serde_json::to_value(ExperimentSpec::demo()).unwrap();
    value["stride"]["alpah"] = serde_json::json!(1.0);
    assert!(serde_json::from_value::<ExperimentSpec>(value).is_err());
}

#[test]
fn single_method_run_is_deterministic() {
    let spec = small_spec();
    let a: Vec<_> = run_experiment(&spec).unwrap().iter().map(|r| r.untimed()).collect();
    let b: Vec<_> = run_experiment(&spec).unwrap().iter().map(|r| r.untimed()).collect();
    assert_eq!(a, b);
}
