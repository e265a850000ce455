use std::path::Path;
use std::process::{Command, Output};

fn ditwpc(args: &[&str], envs: &[(&str, &Path)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_ditwpc"));
    cmd.args(args).env_remove("DITWPC_OUT_DIR");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

const TINY: &str = r#"
[synthesis]
n_samples = 3
seed = 2
discard_prob = 0.0

[raster]
width = 64
height = 64
x_pixel_range = [8, 57]
y_pixel_range = [8, 57]
marker_px_per_unit = 0.25
line_width = 1

[network]
image_size = 64
base_channels = 2
depth = 2

[train]
n_iter = 1
batch_size = 2

[extraction]
poly_order = 12

[search]
iterations = 60

[snn]
epochs = 200
"#;

fn scada_csv(dir: &Path) -> std::path::PathBuf {
    let mut text = String::from("timestamp,wind_speed,wind_power\n");
    for i in 0..400 {
        let v = i as f64 * 0.06;
        let p = 2000.0 * (-20.0 * (-10.0 * v / 25.0).exp()).exp();
        text.push_str(&format!("{i},{v},{p}\n"));
    }
    text.push_str("400,NaN,100\n");
    let path = dir.join("scada.csv");
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn show_config_round_trips() {
    let text = ok(&ditwpc(&["show-config"], &[]));
    assert!(text.contains("[network]") && text.contains("image_size = 256"));
    let desk = ok(&ditwpc(&["show-config", "--desk"], &[]));
    assert!(desk.contains("image_size = 64"));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("desk.toml");
    std::fs::write(&path, &desk).unwrap();
    assert_eq!(ok(&ditwpc(&["show-config", "--config", path.to_str().unwrap()], &[])), desk);
}

#[test]
fn bad_config_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "[train]\nnot_a_field = 1\n").unwrap();
    let out = ditwpc(&["show-config", "--config", path.to_str().unwrap()], &[]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("not_a_field"));
}

#[test]
fn synth_is_deterministic_and_honours_the_env_dir() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("tiny.toml");
    std::fs::write(&cfg, TINY).unwrap();
    let a = dir.path().join("a");
    ok(&ditwpc(&["synth", "--config", cfg.to_str().unwrap(), "--images"], &[("DITWPC_OUT_DIR", &a)]));
    assert!(a.join("samples/sample_00002.csv").exists());
    assert!(a.join("samples/sample_00000_neat.png").exists());
    let b = dir.path().join("b");
    ok(&ditwpc(&["synth", "--config", cfg.to_str().unwrap(), "--out", b.to_str().unwrap()], &[]));
    assert_eq!(
        std::fs::read(a.join("synth_manifest.json")).unwrap(),
        std::fs::read(b.join("synth_manifest.json")).unwrap()
    );
}

#[test]
fn train_then_infer() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("tiny.toml");
    std::fs::write(&cfg, TINY).unwrap();
    let c = cfg.to_str().unwrap();
    let out = dir.path().join("run");
    let o = out.to_str().unwrap();
    ok(&ditwpc(&["train", "--config", c, "--out", o], &[]));
    assert!(out.join("checkpoint.bin").exists());
    assert!(out.join("loss_history.csv").exists());

    // an untrained generator may or may not yield an extractable image; the
    // generated image is written either way
    let csv = scada_csv(dir.path());
    let _ = ditwpc(&["infer", "--config", c, "--out", o, "--input", csv.to_str().unwrap()], &[]);
    assert!(out.join("generated.png").exists());

    let missing = ditwpc(&["infer", "--config", c, "--out", o], &[]);
    assert!(!missing.status.success());
    let wrong = ditwpc(
        &["infer", "--out", o, "--input", csv.to_str().unwrap()],
        &[],
    );
    assert!(String::from_utf8_lossy(&wrong.stderr).contains("architecture mismatch"));
}

#[test]
fn evaluate_and_plot_a_saved_curve() {
    let dir = tempfile::tempdir().unwrap();
    let csv = scada_csv(dir.path());
    let curve = dir.path().join("de.json");
    std::fs::write(&curve, r#"{"model":"parametric","family":"DE","params":[20.0,-10.0]}"#).unwrap();
    let cfg = dir.path().join("norm.toml");
    std::fs::write(&cfg, "[normalization]\nrated_power = 2000.0\ncutout_speed = 25.0\n").unwrap();
    let out = dir.path().join("eval");
    let text = ok(&ditwpc(
        &[
            "evaluate",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--curve",
            curve.to_str().unwrap(),
            "--input",
            csv.to_str().unwrap(),
        ],
        &[],
    ));
    assert!(text.contains("rmse 0.00000"), "{text}");
    let metrics = std::fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert!(metrics.lines().nth(1).unwrap().starts_with("400,"));

    ok(&ditwpc(
        &[
            "plot",
            "--out",
            out.to_str().unwrap(),
            "--input",
            csv.to_str().unwrap(),
            "--curve",
            curve.to_str().unwrap(),
        ],
        &[],
    ));
    let png = std::fs::read(out.join("plot.png")).unwrap();
    assert_eq!(&png[1..4], b"PNG");
    // width and height live in the IHDR chunk
    assert_eq!(u32::from_be_bytes(png[16..20].try_into().unwrap()), 256);
    assert_eq!(u32::from_be_bytes(png[20..24].try_into().unwrap()), 256);
}

#[test]
fn benchmark_table_on_synthetic_data() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("tiny.toml");
    std::fs::write(&cfg, TINY).unwrap();
    let out = dir.path().join("bench");
    let text = ok(&ditwpc(
        &["benchmark", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--runtime"],
        &[],
    ));
    assert!(text.contains("1120 train / 280 test"), "{text}");
    let table = std::fs::read_to_string(out.join("benchmark.csv")).unwrap();
    assert_eq!(table.lines().next().unwrap(), "model,scenario,pattern,metric,value,status");
    for model in ["DE", "ADE", "4PLF", "5PLF", "SNN", "SR"] {
        assert!(table.lines().any(|l| l.starts_with(&format!("{model},S1,NP,rmse,"))), "{model}");
    }
    let runtime = std::fs::read_to_string(out.join("runtime.csv")).unwrap();
    assert_eq!(runtime.lines().count(), 7);
}
