//! The command-line entry point: outputs and exit codes.

use std::path::Path;

use idioprobe::cli::main_with_args;
use idioprobe::report::read_report;

fn run(args: &[&str]) -> i32 {
    main_with_args(std::iter::once("idioprobe").chain(args.iter().copied()))
}

fn synth(dir: &Path, extra: &[&str]) -> std::path::PathBuf {
    let out = dir.join("data");
    let mut args = vec!["synth", "--out", out.to_str().unwrap(), "--preset", "tiny"];
    args.extend_from_slice(extra);
    assert_eq!(run(&args), 0);
    out
}

#[test]
fn probe_writes_report_directory() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), &[]);
    let out = dir.path().join("rep");
    let code = run(&[
        "probe",
        "--config",
        data.join("run.toml").to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--feature",
        "signal",
    ]);
    assert_eq!(code, 0);
    for f in ["report.json", "meta.json", "tables/table1_person_vs_population.csv", "pca/L0_d8.pca", "probes/L0_d8_signal.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let report = read_report(out.join("report.json")).unwrap();
    assert_eq!(report.cells.len(), 1);
    assert_eq!(report.cells[0].person.len(), 4);

    // meta.json is accepted back as a config.
    let again = dir.path().join("again");
    let code = run(&[
        "probe",
        "--config",
        out.join("meta.json").to_str().unwrap(),
        "--out",
        again.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    assert_eq!(
        std::fs::read(out.join("report.json")).unwrap(),
        std::fs::read(again.join("report.json")).unwrap()
    );
}

#[test]
fn report_regenerates_tables() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), &[]);
    let out = dir.path().join("rep");
    let cfg = data.join("run.toml");
    assert_eq!(run(&["transfer", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]), 0);
    let table = out.join("tables/transfer_summary.csv");
    let before = std::fs::read(&table).unwrap();
    std::fs::remove_dir_all(out.join("tables")).unwrap();
    assert_eq!(run(&["report", "--out", out.to_str().unwrap()]), 0);
    assert_eq!(std::fs::read(&table).unwrap(), before);
}

#[test]
fn crossdataset_needs_both_corpora() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), &["--second-corpus", "same"]);
    let cfg = data.join("run.toml");
    let out = dir.path().join("x");
    let ok = run(&[
        "crossdataset",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--train-corpus",
        "synth",
        "--test-corpus",
        "synth_b",
    ]);
    assert_eq!(ok, 0);
    let report = read_report(out.join("report.json")).unwrap();
    assert_eq!(report.cross_dataset.len(), 2);
    let missing = run(&[
        "crossdataset",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--train-corpus",
        "synth",
        "--test-corpus",
        "other",
    ]);
    assert_eq!(missing, 1);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), &[]);
    let cfg = data.join("run.toml");
    let cfg = cfg.to_str().unwrap();
    let out = dir.path().join("o");
    let out = out.to_str().unwrap();

    assert_eq!(run(&["--help"]), 0);
    assert_eq!(run(&["frobnicate"]), 1);
    assert_eq!(run(&["probe", "--config", cfg, "--out", out, "--k-folds", "1"]), 1);
    assert_eq!(run(&["probe", "--config", cfg, "--out", out, "--feature", "nope"]), 1);
    assert_eq!(run(&["probe", "--config", cfg, "--out", out, "--layers", "3"]), 1);
    assert_eq!(run(&["probe", "--config", cfg, "--out", out, "--participants", "P99"]), 1);
    assert_eq!(run(&["probe", "--config", cfg, "--out", out, "--threads", "many"]), 1);

    std::fs::write(data.join("emb/layer_0.emb"), b"NOPE").unwrap();
    assert_eq!(run(&["probe", "--config", cfg, "--out", out]), 1);

    // Training folds smaller than the PCA dimension fail while computing.
    let small = synth(&dir.path().join("small"), &["--n-sentences", "5", "--words-per-sentence", "2"]);
    let code = run(&[
        "probe",
        "--config",
        small.join("run.toml").to_str().unwrap(),
        "--out",
        out,
        "--k-folds",
        "5",
        "--pca-dim",
        "8",
    ]);
    assert_eq!(code, 2);
}
