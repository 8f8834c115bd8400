#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use sleepwake::config::PipelineConfig;
use sleepwake::ingest::{Manifest, SubjectEntry};
use sleepwake::pipeline::{run_pipeline, select_subjects, RunReport};
use sleepwake::synth::{inject_abnormal, simulate_cohort, AbnormalKind, SimConfig};

/// Default simulated subject with `fraction` of its epochs in abnormal 30-epoch blocks.
pub fn subject(id: &str, days: usize, seed: u64, fraction: f64) -> SimConfig {
    let mut c = SimConfig::new(id, days, seed);
    if fraction > 0.0 {
        inject_abnormal(&mut c, fraction, &AbnormalKind::ALL, 30, seed + 1000).unwrap();
    }
    c
}

/// Writes the cohort into `dir` and returns its manifest entries, resolved.
pub fn write_cohort(dir: &Path, configs: &[SimConfig]) -> Vec<SubjectEntry> {
    simulate_cohort(dir, configs).unwrap();
    let manifest = Manifest::load(&dir.join("manifest.json")).unwrap();
    select_subjects(&manifest, None).unwrap()
}

pub fn run(subjects: &[SubjectEntry], cfg: &PipelineConfig, out: &Path) -> RunReport {
    run_pipeline(subjects, cfg, out).unwrap()
}

/// Every file under `dir`, keyed by relative path.
pub fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_path_buf();
                out.insert(rel, std::fs::read(&path).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}

/// Rows of `excluded/<id>.csv` as (epoch_start, category).
pub fn read_excluded(out: &Path, id: &str) -> Vec<(f64, String)> {
    let mut r = csv::Reader::from_path(out.join("excluded").join(format!("{id}.csv"))).unwrap();
    r.records()
        .map(|rec| {
            let rec = rec.unwrap();
            (rec[0].parse().unwrap(), rec[1].to_string())
        })
        .collect()
}
