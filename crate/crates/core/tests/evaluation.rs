use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sleepwake::evaluation::{evaluate, OutcomeLabels};
use sleepwake::features::{FeatureRow, FeatureTable};

/// Independent features and labels: each feature's LOOCV AUC stays at or below
/// 0.85 in at least 95% of reruns.
#[test]
fn null_simulation_rarely_exceeds_085() {
    let reruns = 40;
    let n = 20;
    let mut high = vec![0usize; FeatureTable::default().columns.len()];
    for seed in 0..reruns {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut table = FeatureTable::default();
        let p = table.columns.len();
        let mut labels = Vec::new();
        for i in 0..n {
            let subject = format!("s{i:02}");
            table.rows.push(FeatureRow {
                subject: subject.clone(),
                day: 0,
                values: (0..p).map(|_| rng.random::<f64>()).collect(),
            });
            labels.push(OutcomeLabels {
                subject,
                binary: Some(i % 2 == 0),
                ordinal: None,
            });
        }
        let e = evaluate(&table, &labels, 0).unwrap();
        for r in &e.binary {
            if r.auc > 0.85 {
                high[table.column_index(&r.feature).unwrap()] += 1;
            }
        }
    }
    let worst = *high.iter().max().unwrap();
    assert!(
        worst as f64 <= 0.05 * reruns as f64,
        "a feature exceeded 0.85 in {worst} of {reruns} reruns"
    );
}
