use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use hrtf_cli::{resolve_config, ExperimentArgs};
use hrtf_core::grouping::Strategy;
use hrtf_core::pipeline::ExperimentConfig;

fn hrtfgroup(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hrtfgroup"))
        .args(args)
        .arg("--quiet")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = hrtfgroup(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn synth(dir: &Path, subjects: &str, seed: &str) {
    ok(&[
        "synth",
        "--subjects",
        subjects,
        "--seed",
        seed,
        "--out",
        dir.to_str().unwrap(),
    ]);
}

#[test]
fn synth_writes_file_contract_and_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    synth(&a, "3", "5");
    synth(&b, "3", "5");
    let mut names: Vec<String> = fs::read_dir(&a)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    assert_eq!(
        names,
        [
            "anthro.csv",
            "hrir_synth_000.f64",
            "hrir_synth_001.f64",
            "hrir_synth_002.f64",
            "manifest.json",
            "synth.json"
        ]
    );
    for n in &names {
        assert_eq!(
            fs::read(a.join(n)).unwrap(),
            fs::read(b.join(n)).unwrap(),
            "{n} differs"
        );
    }
}

#[test]
fn unwritable_output_fails_cleanly() {
    let tmp = tempfile::tempdir().unwrap();
    let blocker = tmp.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let out = hrtfgroup(&[
        "synth",
        "--subjects",
        "3",
        "--out",
        blocker.join("data").to_str().unwrap(),
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
}

#[test]
fn groupmap_covers_grid_with_strategy_labels() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    synth(&data, "3", "1");
    for (strategy, labels) in [
        (
            "sl",
            vec!["left_back", "left_front", "right_back", "right_front"],
        ),
        ("hybrid", vec!["inner", "left_back", "left_front", "outer"]),
        ("global", vec!["all"]),
    ] {
        let csv = tmp.path().join(format!("{strategy}.csv"));
        ok(&[
            "groupmap",
            "--data",
            data.to_str().unwrap(),
            "--strategy",
            strategy,
            "--out",
            csv.to_str().unwrap(),
        ]);
        let text = fs::read_to_string(&csv).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("azimuth,elevation,x,y,z,group"));
        let mut seen: Vec<&str> = Vec::new();
        let mut rows = 0;
        for line in lines {
            rows += 1;
            let label = line.rsplit(',').next().unwrap();
            if !seen.contains(&label) {
                seen.push(label);
            }
        }
        seen.sort();
        assert_eq!(rows, 1250);
        assert_eq!(seen, labels);
        assert!(csv.with_extension("config.json").exists());
    }
}

#[test]
fn train_rejects_unknown_fold_before_writing() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    synth(&data, "3", "1");
    let models = tmp.path().join("models");
    let out = hrtfgroup(&[
        "train",
        "--data",
        data.to_str().unwrap(),
        "--strategy",
        "sl",
        "--fold",
        "nobody",
        "--out",
        models.to_str().unwrap(),
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("nobody"));
    assert!(!models.exists());
}

#[test]
fn evaluate_names_missing_checkpoint_group() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    synth(&data, "3", "2");
    let models = tmp.path().join("models");
    ok(&[
        "train",
        "--data",
        data.to_str().unwrap(),
        "--strategy",
        "sl",
        "--desk",
        "--vae-epochs",
        "1",
        "--dnn-epochs",
        "1",
        "--fold",
        "synth_001",
        "--out",
        models.to_str().unwrap(),
    ]);
    let eval = tmp.path().join("eval");
    let table = ok(&[
        "evaluate",
        "--models",
        models.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
        "--out",
        eval.to_str().unwrap(),
    ]);
    assert!(table.contains("overall"));
    for f in ["records.csv", "summary.json", "experiment.json"] {
        assert!(eval.join(f).exists(), "{f}");
    }
    // 1250 directions of one held-out subject plus the header
    assert_eq!(
        fs::read_to_string(eval.join("records.csv"))
            .unwrap()
            .lines()
            .count(),
        1251
    );

    fs::remove_file(models.join("folds/synth_001/groups/right_back/dnn.json")).unwrap();
    let out = hrtfgroup(&[
        "evaluate",
        "--models",
        models.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
        "--out",
        eval.to_str().unwrap(),
    ]);
    assert!(!out.status.success());
    assert!(
        String::from_utf8_lossy(&out.stderr).contains("missing checkpoint for group sl/right_back")
    );
}

#[test]
fn evaluate_rejects_models_trained_on_other_data() {
    let tmp = tempfile::tempdir().unwrap();
    let (data, other) = (tmp.path().join("data"), tmp.path().join("other"));
    synth(&data, "3", "3");
    synth(&other, "3", "4");
    let models = tmp.path().join("models");
    ok(&[
        "train",
        "--data",
        data.to_str().unwrap(),
        "--strategy",
        "global",
        "--desk",
        "--vae-epochs",
        "1",
        "--dnn-epochs",
        "1",
        "--fold",
        "synth_000",
        "--out",
        models.to_str().unwrap(),
    ]);
    let out = hrtfgroup(&[
        "evaluate",
        "--models",
        models.to_str().unwrap(),
        "--data",
        other.to_str().unwrap(),
        "--out",
        tmp.path().join("eval").to_str().unwrap(),
    ]);
    assert!(!out.status.success());
}

#[test]
fn gradcheck_command_passes() {
    let stdout = ok(&["gradcheck", "--samples", "100"]);
    assert_eq!(stdout.matches("PASS").count(), 2);
}

#[test]
fn flags_override_config_file() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("experiment.json");
    fs::write(
        &path,
        r#"{"strategy": "sl", "seed": 9, "train": {"vae_epochs": 7}}"#,
    )
    .unwrap();
    let args = ExperimentArgs {
        config: Some(path.clone()),
        seed: Some(3),
        ..Default::default()
    };
    let cfg = resolve_config(&args).unwrap();
    assert_eq!(cfg.strategy, Strategy::Sl);
    assert_eq!(cfg.seed, 3);
    assert_eq!(cfg.train.vae_epochs, 7);
    assert_eq!(
        cfg.train.dnn_epochs,
        ExperimentConfig::default().train.dnn_epochs
    );

    // the desk preset fills keys the file leaves out
    let desk = resolve_config(&ExperimentArgs {
        config: Some(path),
        desk: true,
        ..Default::default()
    })
    .unwrap();
    assert_eq!(desk.train.vae_epochs, 7);
    assert_eq!(
        desk.train.batch_size,
        ExperimentConfig::desk().train.batch_size
    );
}
