use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use sleepwake::anomaly::ScreenedSeries;
use sleepwake::hmm::{select_model, ModelConfig};
use sleepwake::ingest::EpochSeries;
use sleepwake::signal::{vars, Signal};

const N: usize = 1440;

/// ACC and HR epochs alternating between two states in 120-epoch blocks.
/// `acc` and `hr` give (sleep, wake, noise sd) for ACC SD and every HR statistic.
fn series(acc: (f64, f64, f64), hr: (f64, f64, f64), seed: u64) -> ScreenedSeries {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = Normal::new(0.0, 1.0).unwrap();
    let mut stats = Vec::with_capacity(6 * N);
    for j in 0..N {
        let sleep = (j / 120) % 2 == 0;
        let pick = |p: (f64, f64, f64)| if sleep { p.0 } else { p.1 };
        let acc_sd = pick(acc) + acc.2 * unit.sample(&mut rng);
        let hr_level = pick(hr) + hr.2 * unit.sample(&mut rng);
        stats.extend([1.0, 1.0, acc_sd]);
        stats.extend([hr_level + 0.1, hr_level, 3.0 + 0.2 * unit.sample(&mut rng)]);
    }
    let s = EpochSeries::from_parts("s", 60.0, 0.0, vec![Signal::Acc, Signal::Hr], stats, vec![false; N]).unwrap();
    ScreenedSeries::unscreened(s)
}

#[test]
fn singleton_pool_is_returned() {
    let s = series((0.02, 0.1, 0.01), (60.0, 62.0, 3.0), 1);
    let cfg = ModelConfig::new(vec![vars::HR_MED], 2);
    let sel = select_model(&s, std::slice::from_ref(&cfg), 86_400.0, 0).unwrap();
    assert_eq!(sel.config, cfg);
    assert_eq!(sel.candidates.len(), 1);
    assert_eq!(sel.epochs.len(), N);
}

#[test]
fn more_separable_configuration_wins() {
    let s = series((0.02, 0.1, 0.01), (60.0, 61.0, 3.0), 2);
    let strong = ModelConfig::new(vec![vars::ACC_SD], 2);
    let weak = ModelConfig::new(vec![vars::HR_MED], 2);
    let sel = select_model(&s, &[weak, strong.clone()], 86_400.0, 0).unwrap();
    assert_eq!(sel.config, strong);
    let si: Vec<f64> = sel.candidates.iter().map(|c| c.si.unwrap()).collect();
    assert!(si[1] > 0.95, "{si:?}");
    assert!(si[1] - si[0] > 0.05, "{si:?}");
}

#[test]
fn equal_separability_prefers_fewer_features() {
    let s = series((0.02, 0.5, 0.005), (50.0, 90.0, 1.0), 3);
    let three = ModelConfig::new(vec![vars::HR_MEAN, vars::HR_MED, vars::ACC_SD], 2);
    let two = ModelConfig::new(vec![vars::HR_MED, vars::ACC_SD], 2);
    let sel = select_model(&s, &[three, two.clone()], 86_400.0, 0).unwrap();
    let si: Vec<f64> = sel.candidates.iter().map(|c| c.si.unwrap()).collect();
    assert_eq!(si, [1.0, 1.0]);
    assert_eq!(sel.config, two);
}

#[test]
fn all_failures_are_listed() {
    let s = series((0.02, 0.1, 0.01), (60.0, 62.0, 3.0), 4);
    let missing = ModelConfig::new(vec![vars::TEMP_MED], 2);
    let err = select_model(&s, &[missing], 86_400.0, 0).unwrap_err().to_string();
    assert!(err.contains("TEMP_MED"), "{err}");
}
