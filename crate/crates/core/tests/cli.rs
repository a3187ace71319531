use std::path::Path;
use std::process::{Command, Output};

use weaklabel::datasetgen::DatasetFile;
use weaklabel::eval::{parse_report_csv, Metric, Protocol, ResultFile};

fn weaklabel(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_weaklabel"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str], cwd: &Path) -> String {
    let out = weaklabel(args, cwd);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn small_corpus(cwd: &Path) {
    std::fs::write(
        cwd.join("synth.toml"),
        "n_classes = 3\nvideos_per_class = [3, 3]\nframes_per_video = 6\nextra_detection_rate = 0.2\n",
    )
    .unwrap();
    ok(
        &[
            "synth",
            "--config",
            "synth.toml",
            "--seed",
            "4",
            "-o",
            "corpus",
        ],
        cwd,
    );
}

fn read<T: serde::de::DeserializeOwned>(path: impl AsRef<Path>) -> T {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn build_keeps_only_confident_samples() {
    let dir = tempfile::tempdir().unwrap();
    let cwd = dir.path();
    small_corpus(cwd);
    let base = [
        "--manifest",
        "corpus/manifest.csv",
        "--detections",
        "corpus/detections.jsonl",
    ];
    let line = ok(
        &[
            &["build", "--variant", "roi,s0.5"],
            &base[..],
            &["-o", "roi05"],
        ]
        .concat(),
        cwd,
    );
    assert!(line.starts_with("build: ROI,S0.5 -> "), "{line}");
    ok(
        &[
            &["build", "--variant", "noroi,s0"],
            &base[..],
            &["-o", "all"],
        ]
        .concat(),
        cwd,
    );

    let roi: DatasetFile = read(cwd.join("roi05/dataset.json"));
    let all: DatasetFile = read(cwd.join("all/dataset.json"));
    assert!(roi.variant.use_roi && roi.variant.score_threshold == 0.5);
    assert!(!roi.samples.is_empty() && roi.samples.len() < all.samples.len());
    assert!(roi
        .samples
        .iter()
        .all(|s| s.score >= 0.5 && s.crop.is_some()));
    assert!(all.samples.iter().all(|s| s.crop.is_none()));
    assert_eq!(all.samples.len(), 3 * 3 * 6);
}

#[test]
fn split_is_byte_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cwd = dir.path();
    small_corpus(cwd);
    for out in ["a.json", "b.json"] {
        ok(
            &[
                "split",
                "--mode",
                "video",
                "--manifest",
                "corpus/manifest.csv",
                "--ratios",
                "0.6,0.2,0.2",
                "--seed",
                "7",
                "-o",
                out,
            ],
            cwd,
        );
    }
    let a = std::fs::read(cwd.join("a.json")).unwrap();
    assert_eq!(a, std::fs::read(cwd.join("b.json")).unwrap());
    let v: serde_json::Value = serde_json::from_slice(&a).unwrap();
    assert_eq!(v["seed"], 7);
    assert_eq!(v["ratios"], serde_json::json!([0.6, 0.2, 0.2]));
    // 3 videos per individual apportion to 2/0/1 at (0.6, 0.2, 0.2).
    assert_eq!(v["train"].as_array().unwrap().len(), 6);
    assert_eq!(v["test"].as_array().unwrap().len(), 3);

    ok(
        &[
            "build",
            "--variant",
            "noroi,s0",
            "--manifest",
            "corpus/manifest.csv",
            "--detections",
            "corpus/detections.jsonl",
            "-o",
            "ds",
        ],
        cwd,
    );
    for out in ["f1.json", "f2.json"] {
        ok(
            &[
                "split",
                "--mode",
                "frame",
                "--dataset",
                "ds/dataset.json",
                "--k",
                "3",
                "-o",
                out,
            ],
            cwd,
        );
    }
    assert_eq!(
        std::fs::read(cwd.join("f1.json")).unwrap(),
        std::fs::read(cwd.join("f2.json")).unwrap()
    );
}

#[test]
fn errors_are_machine_parseable() {
    let dir = tempfile::tempdir().unwrap();
    let cwd = dir.path();
    std::fs::write(cwd.join("m.csv"), "video_id,weak_label\n").unwrap();
    std::fs::write(cwd.join("d.jsonl"), "").unwrap();
    let out = weaklabel(
        &[
            "build",
            "--variant",
            "roi,s0",
            "--manifest",
            "m.csv",
            "--detections",
            "d.jsonl",
            "-o",
            "x",
        ],
        cwd,
    );
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.starts_with("error: module=ingest kind="), "{err}");

    let out = weaklabel(
        &[
            "split",
            "--mode",
            "video",
            "--manifest",
            "missing.csv",
            "-o",
            "s.json",
        ],
        cwd,
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8(out.stderr)
        .unwrap()
        .starts_with("error: module=io kind=Io"));

    let out = weaklabel(
        &[
            "build",
            "--variant",
            "roi",
            "--manifest",
            "m.csv",
            "--detections",
            "d.jsonl",
            "-o",
            "x",
        ],
        cwd,
    );
    assert_eq!(out.status.code(), Some(2));
    let out = weaklabel(&["split", "--mode", "frame", "-o", "s.json"], cwd);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8(out.stderr)
        .unwrap()
        .starts_with("error: module=cli kind=Usage"));
}

#[test]
fn neural_train_and_eval() {
    let dir = tempfile::tempdir().unwrap();
    let cwd = dir.path();
    small_corpus(cwd);
    ok(
        &[
            "build",
            "--variant",
            "roi,s0",
            "--manifest",
            "corpus/manifest.csv",
            "--detections",
            "corpus/detections.jsonl",
            "-o",
            "ds",
        ],
        cwd,
    );
    ok(
        &[
            "split",
            "--manifest",
            "corpus/manifest.csv",
            "--ratios",
            "0.4,0.3,0.3",
            "-o",
            "split.json",
        ],
        cwd,
    );
    let args = [
        "train-nn",
        "--dataset",
        "ds/dataset.json",
        "--split",
        "split.json",
        "--epochs",
        "3",
        "--batch-size",
        "8",
        "--input-size",
        "32",
        "--loss",
        "weighted-ce",
        "--threads",
        "1",
        "-o",
    ];
    let line = ok(&[&args[..], &["nn"]].concat(), cwd);
    assert!(
        line.starts_with("train-nn: CNN fine-tune on ROI,S0 best epoch "),
        "{line}"
    );
    ok(&[&args[..], &["nn2"]].concat(), cwd);
    for f in [
        "checkpoint.json",
        "checkpoint.bin",
        "curves.csv",
        "result.json",
    ] {
        assert_eq!(
            std::fs::read(cwd.join("nn").join(f)).unwrap(),
            std::fs::read(cwd.join("nn2").join(f)).unwrap(),
            "{f}"
        );
    }
    let curves = std::fs::read_to_string(cwd.join("nn/curves.csv")).unwrap();
    assert_eq!(curves.lines().next(), Some("epoch,lr,train_loss,val_acc"));
    assert_eq!(curves.lines().count(), 4);

    let trained: ResultFile = read(cwd.join("nn/result.json"));
    assert_eq!(trained.spec["train"]["loss"], "weighted_ce");
    ok(
        &[
            "eval",
            "--model",
            "nn",
            "--dataset",
            "ds/dataset.json",
            "--split",
            "split.json",
            "--part",
            "test",
            "-o",
            "ev",
        ],
        cwd,
    );
    let evaluated: ResultFile = read(cwd.join("ev/result.json"));
    assert_eq!(
        evaluated.metrics[&Metric::Test],
        trained.metrics[&Metric::Test]
    );
    assert_eq!(
        evaluated.metrics[&Metric::AvgT],
        trained.metrics[&Metric::AvgT]
    );
    assert!(cwd.join("ev/confusion.png").exists());
}

/// synth → build ×4 → split → features → fit rf → cross-validate rf → report.
#[test]
fn full_pipeline_shows_leakage_gap() {
    let dir = tempfile::tempdir().unwrap();
    let cwd = dir.path();
    ok(&["synth", "-o", "corpus"], cwd);
    for v in ["noroi,s0", "roi,s0", "noroi,s0.5", "roi,s0.5"] {
        let out = format!("ds_{}", v.replace(',', "_"));
        ok(
            &[
                "build",
                "--variant",
                v,
                "--manifest",
                "corpus/manifest.csv",
                "--detections",
                "corpus/detections.jsonl",
                "-o",
                &out,
            ],
            cwd,
        );
    }
    ok(
        &[
            "split",
            "--mode",
            "video",
            "--manifest",
            "corpus/manifest.csv",
            "--ratios",
            "0.6,0.2,0.2",
            "--seed",
            "0",
            "-o",
            "split.json",
        ],
        cwd,
    );
    ok(
        &[
            "features",
            "--dataset",
            "ds_noroi_s0/dataset.json",
            "-o",
            "features.csv",
        ],
        cwd,
    );
    let sidecar: serde_json::Value = read(cwd.join("features.csv.json"));
    assert_eq!(sidecar["dim"], 532);
    assert_eq!(sidecar["variant"], "noROI,S0");

    ok(
        &[
            "fit",
            "--features",
            "features.csv",
            "--split",
            "split.json",
            "--algorithm",
            "rf",
            "-o",
            "fit_rf",
        ],
        cwd,
    );
    ok(
        &[
            "cross-validate",
            "--features",
            "features.csv",
            "--algorithm",
            "rf",
            "--k",
            "10",
            "-o",
            "cv_rf",
        ],
        cwd,
    );
    ok(
        &[
            "eval",
            "--model",
            "fit_rf/model.json",
            "--features",
            "features.csv",
            "--split",
            "split.json",
            "-o",
            "eval_rf",
        ],
        cwd,
    );
    let text = ok(
        &["report", "fit_rf", "cv_rf/result.json", "-o", "report"],
        cwd,
    );
    assert!(text.contains("Leakage gap"), "{text}");

    let fit: ResultFile = read(cwd.join("fit_rf/result.json"));
    let evaluated: ResultFile = read(cwd.join("eval_rf/result.json"));
    assert_eq!(fit.metrics[&Metric::Test], evaluated.metrics[&Metric::Test]);

    let entries =
        parse_report_csv(&std::fs::read_to_string(cwd.join("report/report.csv")).unwrap()).unwrap();
    let value = |protocol: Protocol, metric: Metric| {
        entries
            .iter()
            .find(|e| {
                e.model == "RF"
                    && e.dataset == "noROI,S0"
                    && e.protocol == protocol
                    && e.metric == metric
            })
            .map(|e| e.value)
            .unwrap()
    };
    let cv = value(Protocol::FrameCv, Metric::Cv);
    let test = value(Protocol::VideoSplit, Metric::Test);
    assert!(cv >= 0.95, "cv {cv}");
    assert!(cv - test >= 0.20, "cv {cv} test {test}");
    assert!(std::fs::read_to_string(cwd.join("report/report.txt"))
        .unwrap()
        .contains("Leakage gap"));
}
