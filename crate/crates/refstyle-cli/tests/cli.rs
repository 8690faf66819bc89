//! End-to-end exercises of the `refstyle` binary: dataset synthesis,
//! training, inference commands, config plumbing and exit codes.

use refstyle::config::{parse_config, RunConfig};
use refstyle::Tensor;
use std::path::Path;
use std::process::Command;

fn run(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_refstyle"))
        .args(args)
        .output()
        .expect("binary must spawn");
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn write_config(dir: &Path) -> std::path::PathBuf {
    let data = dir.join("data");
    let runs = dir.join("runs");
    let cfg = format!(
        r#"
experiment = "t"
out_dir = "{runs}"

[network]
resolution = 32
base_channels = 8
max_channels = 16
style_dim = 8
rep_dim = 16

[dataset]
root = "{data}"
resolution = 32

[synthetic]
num_images = 12
resolution = 32
num_styles = 2

[train]
batch_size = 4
total_iters = 2
log_every = 1
seed = 11

[train.contrastive]
queue_capacity = 16

[eval]
references_per_input = 2
batch = 4
"#,
        runs = runs.display(),
        data = data.display(),
    );
    let path = dir.join("cfg.toml");
    std::fs::write(&path, cfg).unwrap();
    path
}

#[test]
fn full_pipeline_runs_and_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let cfg_path = write_config(dir);
    let cfg_arg = cfg_path.to_str().unwrap();
    let data = dir.join("data");
    let runs = dir.join("runs");

    let (code, out, err) = run(&["--config", cfg_arg, "make-synthetic"]);
    assert_eq!(code, 0, "make-synthetic failed: {err}");
    assert!(out.contains("12 images"), "got: {out}");
    assert!(data.join("labels.csv").is_file());
    assert!(data.join("synthetic_00011.png").is_file());

    let (code, _, err) = run(&["--config", cfg_arg, "train"]);
    assert_eq!(code, 0, "train failed: {err}");
    let ckpt = runs.join("t/checkpoints/step_0000002.ckpt");
    assert!(ckpt.is_file(), "final checkpoint must exist");
    let csv = std::fs::read_to_string(runs.join("t/metrics/losses.csv")).unwrap();
    assert!(csv.starts_with("step,adv_d,adv_g,ct_d,ct_g,cyc,r1"), "got: {csv}");
    assert_eq!(csv.lines().count(), 3, "header + 2 logged steps: {csv}");

    // The echoed effective config parses back to the config the run used.
    let echoed = parse_config(&runs.join("t/config.toml")).unwrap();
    let mut expected = parse_config(&cfg_path).unwrap();
    expected.validate().unwrap();
    assert_eq!(echoed, expected, "config echo must round-trip");

    let ck = ckpt.to_str().unwrap();
    let in0 = data.join("synthetic_00000.png");
    let in1 = data.join("synthetic_00001.png");
    let tx = dir.join("tx");

    // 1 input x 1 reference: one output plus the 2x2 grid.
    let (code, out, err) = run(&[
        "translate",
        "--checkpoint",
        ck,
        "--input",
        in0.to_str().unwrap(),
        "--reference",
        in1.to_str().unwrap(),
        "--output",
        tx.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "translate failed: {err}");
    assert!(out.contains("1 translations"), "got: {out}");
    let written: Vec<String> = std::fs::read_dir(&tx)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    assert_eq!(written.len(), 2, "one pair output + grid.png: {written:?}");
    assert!(written.iter().any(|n| n == "grid.png"));

    // n x m from directories: n*m outputs.
    let tx2 = dir.join("tx2");
    let (code, out, _) = run(&[
        "translate",
        "--checkpoint",
        ck,
        "--input",
        data.to_str().unwrap(),
        "--reference",
        data.to_str().unwrap(),
        "--output",
        tx2.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    assert!(out.contains("144 translations"), "12x12 pairs, got: {out}");

    let interp = dir.join("interp");
    let (code, _, err) = run(&[
        "interpolate",
        "--checkpoint",
        ck,
        "--input",
        in0.to_str().unwrap(),
        "--reference",
        in1.to_str().unwrap(),
        "--steps",
        "3",
        "--output",
        interp.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "interpolate failed: {err}");
    for f in ["step_00.png", "step_01.png", "step_02.png", "strip.png"] {
        assert!(interp.join(f).is_file(), "missing {f}");
    }

    let (code, out, _) = run(&[
        "search",
        "--checkpoint",
        ck,
        "--query",
        in0.to_str().unwrap(),
        "--corpus",
        data.to_str().unwrap(),
        "--k",
        "3",
    ]);
    assert_eq!(code, 0);
    let rank1 = out.lines().nth(1).expect("one hit printed");
    assert!(
        rank1.contains("synthetic_00000.png") && rank1.contains("+1.0000"),
        "query must match itself first: {out}"
    );

    // Evaluate twice with labels; the reports must be byte-identical.
    let label_set = format!("dataset.label_file=\"{}\"", data.join("labels.csv").display());
    let eval_args = [
        "--config",
        cfg_arg,
        "--set",
        label_set.as_str(),
        "evaluate",
        "--checkpoint",
        ck,
    ];
    let (code, out1, err) = run(&eval_args);
    assert_eq!(code, 0, "evaluate failed: {err}");
    assert!(out1.contains("translation accuracy"), "labels provided: {out1}");
    let report_path = runs.join("t/metrics/report_step_0000002.json");
    let report1 = std::fs::read(&report_path).unwrap();
    let (code, out2, _) = run(&eval_args);
    assert_eq!(code, 0);
    assert_eq!(out1, out2, "evaluation must be deterministic");
    assert_eq!(std::fs::read(&report_path).unwrap(), report1);

    // Without --config the checkpoint's embedded config drives evaluation.
    let (code, out3, err) = run(&["evaluate", "--checkpoint", ck]);
    assert_eq!(code, 0, "embedded-config evaluate failed: {err}");
    assert!(out3.contains("FID"), "got: {out3}");
}

#[test]
fn errors_exit_with_categorized_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let cfg_path = write_config(dir);
    let cfg_arg = cfg_path.to_str().unwrap();
    let data = dir.join("data");

    // Unknown config key: exit 2, message names key and line.
    let bad = dir.join("bad.toml");
    std::fs::write(&bad, "[train]\nbatch_size = 4\nbogus = 1\n").unwrap();
    let (code, _, err) = run(&["--config", bad.to_str().unwrap(), "train"]);
    assert_eq!(code, 2, "config errors exit 2: {err}");
    assert!(err.contains("bogus") && err.contains("line 3"), "got: {err}");

    // Invariant violation via override: exit 2.
    let (code, _, err) = run(&["--config", cfg_arg, "--set", "train.batch_size=31", "train"]);
    assert_eq!(code, 2);
    assert!(err.contains("31"), "got: {err}");

    // Missing checkpoint: exit 3 (I/O).
    let (code, _, _) = run(&["evaluate", "--checkpoint", "/nonexistent/x.ckpt"]);
    assert_eq!(code, 3);

    // Prepare a real checkpoint for the remaining cases.
    run(&["--config", cfg_arg, "make-synthetic"]);
    let (code, _, err) = run(&["--config", cfg_arg, "train"]);
    assert_eq!(code, 0, "train failed: {err}");
    let ckpt = dir.join("runs/t/checkpoints/step_0000002.ckpt");
    let ck = ckpt.to_str().unwrap();
    let in0 = data.join("synthetic_00000.png");

    // Architecture mismatch against the stored weights: exit 4.
    let (code, _, err) = run(&[
        "--set",
        "network.base_channels=4",
        "evaluate",
        "--checkpoint",
        ck,
    ]);
    assert_eq!(code, 4, "checkpoint mismatch exits 4: {err}");

    // Resolution mismatch on translate: exit 2 and a clear message.
    let small = dir.join("small.png");
    refstyle::vis::save_png(&small, &Tensor::<f32>::zeros(ndarray::IxDyn(&[3, 16, 16])))
        .unwrap();
    let (code, _, err) = run(&[
        "translate",
        "--checkpoint",
        ck,
        "--input",
        small.to_str().unwrap(),
        "--reference",
        in0.to_str().unwrap(),
    ]);
    assert_eq!(code, 2, "resolution mismatch is a config error: {err}");
    assert!(err.contains("does not match the network's 32x32"), "got: {err}");
}
