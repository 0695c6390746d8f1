use std::path::{Path, PathBuf};
use std::process::Command;

use otfuse::cli::run;
use otfuse::model::{checkpoint_to_string, load_checkpoint, Activation, Checkpoint, LayerSpec, LayerWeights, Meta};
use otfuse::Matrix;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn otfuse(args: &[&str]) -> (i32, String) {
    let mut out = Vec::new();
    let code = run(std::iter::once("otfuse").chain(args.iter().copied()), &mut out);
    (code, String::from_utf8(out).unwrap())
}

fn binary(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_otfuse")).args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Synthetic data plus two small trained checkpoints in `dir`.
fn setup(dir: &Path) -> (PathBuf, PathBuf, PathBuf) {
    let data = dir.join("data");
    assert_eq!(otfuse(&["gen-data", "--out", s(&data), "--seed", "5"]).0, 0);
    let arch = dir.join("arch.json");
    std::fs::write(&arch, r#"{"widths": [8, 12, 12, 4], "activation": "relu"}"#).unwrap();
    let a = dir.join("a.json");
    let b = dir.join("b.json");
    let train_a = data.join("train_a.csv");
    let train_u = data.join("train_union.csv");
    for (out, set, seed) in [(&a, &train_a, "1"), (&b, &train_u, "2")] {
        let (code, _) = otfuse(&["train", "--arch", s(&arch), "--data", s(set), "--epochs", "20", "--seed", seed, "--out", s(out)]);
        assert_eq!(code, 0);
    }
    (data, a, b)
}

#[test]
fn golden_minimal_checkpoint() {
    let ckpt = Checkpoint::new(
        vec![LayerSpec::new(2, 1, Activation::Identity)],
        vec![LayerWeights {
            w: Matrix::from_rows(&[[1.0, -2.0]]).unwrap(),
            b: vec![0.5],
        }],
        Meta {
            seed: 7,
            training_epochs: 3,
            tag: "golden".into(),
            ..Meta::default()
        },
    )
    .unwrap();
    let golden = std::fs::read_to_string(fixture("minimal_checkpoint.json")).unwrap();
    assert_eq!(checkpoint_to_string(&ckpt), golden);
    assert_eq!(load_checkpoint(fixture("minimal_checkpoint.json")).unwrap(), ckpt);
}

#[test]
fn wer_report_matches_hand_computation() {
    let refs = fixture("refs.txt");
    let (code, out) = otfuse(&["wer", "--refs", s(&refs), s(&fixture("system_a.txt")), s(&fixture("system_b.txt"))]);
    assert_eq!(code, 0);
    assert_eq!(
        out,
        "system    wer_pct\n-----------------\nsystem_a  18.2\nsystem_b  18.2\noracle    9.1\nsbf       9.1\n"
    );
}

#[test]
fn wer_identical_systems_score_zero() {
    let refs = fixture("refs.txt");
    let (code, out) = otfuse(&["wer", "--refs", s(&refs), s(&refs), "--format", "csv"]);
    assert_eq!(code, 0);
    // References carry no confidences, so confidence selection is not applicable.
    assert_eq!(out, "system,wer_pct\nrefs,0.0\noracle,0.0\nsbf,n/a\n");
}

#[test]
fn self_alignment_objectives_are_zero() {
    let dir = tempfile::tempdir().unwrap();
    let (_, a, _) = setup(dir.path());
    let out = dir.path().join("self.json");
    let (code, report) = otfuse(&["align", s(&a), s(&a), "--out", s(&out), "--format", "csv"]);
    assert_eq!(code, 0);
    let rows: Vec<&str> = report.lines().skip(1).collect();
    assert_eq!(rows.len(), 3);
    for row in rows {
        let fields: Vec<&str> = row.split(',').collect();
        assert_eq!(fields[2], "0.00000", "{row}");
        assert_eq!(fields[3], "hard");
    }
    assert_eq!(load_checkpoint(&out).unwrap().layers(), load_checkpoint(&a).unwrap().layers());
    let maps: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("self.json.maps.json")).unwrap()).unwrap();
    assert_eq!(maps["layers"][0]["permutation"], serde_json::json!((0..12).collect::<Vec<_>>()));
}

#[test]
fn full_pipeline_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let (data, a, b) = setup(dir.path());
    let p = |n: &str| dir.path().join(n);
    let union = data.join("train_union.csv");
    let heldout = data.join("heldout_union.csv");

    assert_eq!(otfuse(&["align", s(&a), s(&b), "--out", s(&p("al.json"))]).0, 0);
    assert_eq!(otfuse(&["fuse", s(&p("al.json")), s(&b), "--lambda", "0.5", "--out", s(&p("f.json"))]).0, 0);
    assert_eq!(otfuse(&["finetune", s(&p("f.json")), "--data", s(&union), "--out", s(&p("ft.json"))]).0, 0);
    assert_eq!(load_checkpoint(p("ft.json")).unwrap().meta.training_epochs, 10);

    let (code, out) = otfuse(&["eval", s(&p("ft.json")), "--data", s(&heldout), "--format", "csv"]);
    assert_eq!(code, 0);
    let fields: Vec<String> = out.lines().nth(1).unwrap().split(',').map(String::from).collect();
    assert_eq!(fields[2], "800");
    assert!(fields[1].parse::<f64>().unwrap() > 0.5);

    let curve = p("curve.csv");
    let (code, _) = otfuse(&["landscape", s(&a), s(&p("ft.json")), "--data", s(&heldout), "--points", "5", "--out", s(&curve)]);
    assert_eq!(code, 0);
    let text = std::fs::read_to_string(&curve).unwrap();
    assert!(text.starts_with("alpha,loss\n0.00000,"));
    assert_eq!(text.lines().count(), 6);

    // Soft alignment runs through the same command.
    let (code, report) = otfuse(&["align", s(&a), s(&b), "--solver", "sinkhorn", "--out", s(&p("soft.json"))]);
    assert_eq!(code, 0, "{report}");
}

#[test]
fn commands_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (data, a, b) = setup(dir.path());
    let first = std::fs::read(&a).unwrap();
    let arch = dir.path().join("arch.json");
    let again = dir.path().join("again.json");
    let train_a = data.join("train_a.csv");
    otfuse(&["train", "--arch", s(&arch), "--data", s(&train_a), "--epochs", "20", "--seed", "1", "--out", s(&again)]);
    assert_eq!(std::fs::read(&again).unwrap(), first);

    let m1 = dir.path().join("m1.json");
    let m2 = dir.path().join("m2.json");
    otfuse(&["align", s(&a), s(&b), "--out", s(&m1)]);
    otfuse(&["align", s(&a), s(&b), "--out", s(&m2)]);
    assert_eq!(std::fs::read(&m1).unwrap(), std::fs::read(&m2).unwrap());
    assert_eq!(
        std::fs::read(dir.path().join("m1.json.maps.json")).unwrap(),
        std::fs::read(dir.path().join("m2.json.maps.json")).unwrap()
    );
}

#[test]
fn experiment_report_rows_and_stability() {
    let dir = tempfile::tempdir().unwrap();
    let r1 = dir.path().join("r1");
    let r2 = dir.path().join("r2");
    // Fine-tuning and the broad model's adaptation switched off; the
    // constituents still train normally.
    let args = |out: &Path| {
        vec![
            "experiment".to_string(),
            "--seeds".into(),
            "3".into(),
            "--finetune-epochs".into(),
            "0".into(),
            "--broad-adapt-epochs".into(),
            "0".into(),
            "--format".into(),
            "csv".into(),
            "--out".into(),
            out.to_str().unwrap().into(),
        ]
    };
    let (code, out) = otfuse(&args(&r1).iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(code, 0);
    otfuse(&args(&r2).iter().map(String::as_str).collect::<Vec<_>>());
    for f in ["report.csv", "per_seed.csv"] {
        assert_eq!(std::fs::read(r1.join(f)).unwrap(), std::fs::read(r2.join(f)).unwrap(), "{f}");
    }
    let row = |key: &str| -> Vec<f64> {
        let line = out.lines().find(|l| l.starts_with(&format!("{key},"))).unwrap();
        line.split(',').skip(1).map(|v| v.parse().unwrap()).collect()
    };
    assert_eq!(out.lines().count(), 10);
    // acc_union_mean is the 7th numeric column.
    assert!(row("direct_avg")[6] <= row("aligned_avg")[6]);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(binary(&[]).status.code(), Some(1));
    assert_eq!(binary(&["train"]).status.code(), Some(1));
    assert_eq!(binary(&["eval", "x", "--data", "y", "--format", "xml"]).status.code(), Some(1));
    assert_eq!(binary(&["--help"]).status.code(), Some(0));
    // Missing --out is a usage error even with valid inputs.
    assert_eq!(binary(&["fuse", "a.json", "b.json"]).status.code(), Some(1));

    let missing = binary(&["eval", "/nonexistent.json", "--data", "/nonexistent.csv"]);
    assert_eq!(missing.status.code(), Some(2));
    let stderr = String::from_utf8(missing.stderr).unwrap();
    assert_eq!(stderr.lines().count(), 1, "{stderr}");

    let (_, a, b) = setup(dir.path());
    let out = dir.path().join("x.json");
    assert_eq!(binary(&["fuse", s(&a), s(&b), "--lambda", "1.5", "--out", s(&out)]).status.code(), Some(2));
    let corrupt = dir.path().join("corrupt.json");
    std::fs::write(&corrupt, "{\"format_version\": 1").unwrap();
    assert_eq!(binary(&["fuse", s(&corrupt), s(&b), "--out", s(&out)]).status.code(), Some(2));
    // An eps this small overflows the kernel exponent.
    let numerical = binary(&["align", s(&a), s(&b), "--solver", "sinkhorn", "--eps", "1e-320", "--out", s(&out)]);
    assert_eq!(numerical.status.code(), Some(3), "{}", String::from_utf8_lossy(&numerical.stderr));
}
