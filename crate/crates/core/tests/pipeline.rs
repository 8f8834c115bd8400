mod common;

use std::process::Command;

use sleepwake::config::PipelineConfig;
use sleepwake::features::{FeatureTable, FEATURE_COUNT};
use sleepwake::pipeline::{diagnose, extract_run_features, RunMetadata, SubjectStatus};

use common::{run, snapshot, subject, write_cohort};

#[test]
fn cohort_fans_out_and_flags_the_unusable_subject() {
    let data = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    let subjects = write_cohort(
        data.path(),
        &[
            subject("a", 3, 1, 0.05),
            subject("b", 3, 2, 0.05),
            subject("c", 3, 3, 0.05),
            subject("bad", 3, 4, 0.5),
        ],
    );
    let report = run(&subjects, &PipelineConfig::default(), out.path());
    assert!(report.failed().is_empty());
    let ids: Vec<&str> = report.subjects.iter().map(|s| s.subject.as_str()).collect();
    assert_eq!(ids, ["a", "b", "bad", "c"]);

    let unusable: Vec<&str> = report.unusable().iter().map(|s| s.subject.as_str()).collect();
    assert_eq!(unusable, ["bad"]);
    for id in ["a", "b", "c"] {
        assert!(out.path().join("sessions").join(format!("{id}.csv")).exists());
    }
    assert!(!out.path().join("sessions/bad.csv").exists());

    let table = FeatureTable::read_csv(&out.path().join("features.csv")).unwrap();
    assert_eq!(table.columns.len(), FEATURE_COUNT);
    assert_eq!(table.subjects(), ["a", "b", "c"]);

    // every epoch lands in exactly one final status
    for s in &report.subjects {
        let total: usize = s.status_counts.values().sum();
        assert_eq!(total, s.n_epochs, "{}", s.subject);
    }
    let ok = report.subjects.iter().filter(|s| s.status == SubjectStatus::Ok).count();
    assert_eq!(ok, 3);

    let meta: RunMetadata =
        serde_json::from_slice(&std::fs::read(out.path().join("run-metadata.json")).unwrap()).unwrap();
    assert_eq!(meta.config_hash, PipelineConfig::default().hash());

    let again = extract_run_features(out.path(), None).unwrap();
    assert_eq!(again.rows.len(), table.rows.len());
    let day0 = extract_run_features(out.path(), Some(0)).unwrap();
    assert!(day0.rows.iter().all(|r| r.day == 0));
}

#[test]
fn reruns_are_byte_identical() {
    let data = tempfile::tempdir().unwrap();
    let subjects = write_cohort(data.path(), &[subject("x", 2, 7, 0.05), subject("y", 2, 8, 0.05)]);
    let cfg = PipelineConfig {
        seed: 11,
        ..Default::default()
    };
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run(&subjects, &cfg, a.path());
    run(&subjects, &cfg, b.path());
    let (sa, sb) = (snapshot(a.path()), snapshot(b.path()));
    assert!(!sa.is_empty());
    assert_eq!(sa.keys().collect::<Vec<_>>(), sb.keys().collect::<Vec<_>>());
    for (k, v) in &sa {
        assert!(v == &sb[k], "{} differs", k.display());
    }
}

#[test]
fn diagnose_writes_pca_and_marginal_tables() {
    let data = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    let subjects = write_cohort(data.path(), &[subject("p", 2, 3, 0.05)]);
    run(&subjects, &PipelineConfig::default(), out.path());
    let d = diagnose(out.path()).unwrap();
    assert!(d.errors.is_empty(), "{:?}", d.errors);
    assert_eq!(d.pca.len(), 1);
    assert!(out.path().join("pca/p.csv").exists());
    assert!(out.path().join("marginal_si.csv").exists());
    assert!(!d.marginal.is_empty());
}

fn cli() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sleepwake"))
}

#[test]
fn cli_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let st = cli()
        .args(["simulate", "--subjects", "2", "--days", "2", "--out"])
        .arg(&data)
        .output()
        .unwrap();
    assert!(st.status.success(), "{}", String::from_utf8_lossy(&st.stderr));

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"epoch_length": -1}"#).unwrap();
    let st = cli()
        .args(["detect", "--manifest"])
        .arg(data.join("manifest.json"))
        .arg("--config")
        .arg(&bad)
        .arg("--out")
        .arg(dir.path().join("run"))
        .output()
        .unwrap();
    assert_eq!(st.status.code(), Some(2));

    let st = cli()
        .args(["detect", "--manifest"])
        .arg(data.join("manifest.json"))
        .arg("--out")
        .arg(dir.path().join("run"))
        .output()
        .unwrap();
    assert_eq!(st.status.code(), Some(0), "{}", String::from_utf8_lossy(&st.stderr));

    // a subject whose stream file is missing fails alone
    std::fs::remove_file(data.join("sim02_HR.csv")).unwrap();
    let st = cli()
        .args(["detect", "--manifest"])
        .arg(data.join("manifest.json"))
        .arg("--out")
        .arg(dir.path().join("run2"))
        .output()
        .unwrap();
    assert_eq!(st.status.code(), Some(1));
    assert!(dir.path().join("run2/sessions/sim01.csv").exists());
}
