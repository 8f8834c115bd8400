//! Two-class Fisher linear discriminant with a variance-weighted decision rule.
//!
//! Labels are booleans: `true` is sleep (class 1), `false` is wake (class 0).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats;

/// Ridge strength relative to `trace(S_W) / dim`.
pub const RIDGE_LAMBDA: f64 = 1e-8;

/// Cholesky pivots whose squared ratio falls below this trigger the ridge.
const CONDITION_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdaClassifier {
    pub w: Vec<f64>,
    /// Mean projected score of wake (0) and sleep (1).
    pub score_means: [f64; 2],
    /// Sample variances (n - 1) of projected scores per class.
    pub score_vars: [f64; 2],
    pub gamma: f64,
    pub centroids: [Vec<f64>; 2],
    /// Within-class scatter, row-major.
    pub scatter: Vec<f64>,
    pub counts: [usize; 2],
    /// Whether the ridge was added to the scatter before solving.
    pub regularized: bool,
}

fn check_rows(x: &[Vec<f64>], y: &[bool]) -> Result<usize> {
    if x.len() != y.len() {
        return Err(Error::Dimension {
            expected: x.len(),
            got: y.len(),
        });
    }
    let dim = x.first().map_or(0, Vec::len);
    if dim == 0 {
        return Err(Error::Data("LDA needs at least one feature".into()));
    }
    for row in x {
        if row.len() != dim {
            return Err(Error::Dimension {
                expected: dim,
                got: row.len(),
            });
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("LDA input contains non-finite values".into()));
        }
    }
    Ok(dim)
}

/// Solves `S w = d`, adding a ridge only when `S` is singular or badly conditioned.
fn solve_scatter(s: &DMatrix<f64>, d: &DVector<f64>) -> Result<(DVector<f64>, bool)> {
    if let Some(ch) = s.clone().cholesky() {
        let diag = ch.l_dirty().diagonal();
        let (lo, hi) = diag
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        if hi > 0.0 && (lo / hi).powi(2) >= CONDITION_FLOOR {
            return Ok((ch.solve(d), false));
        }
    }
    let dim = s.nrows();
    let ridge = RIDGE_LAMBDA * s.trace() / dim as f64;
    if !(ridge > 0.0) {
        return Err(Error::Degenerate(
            "within-class scatter is zero; classes have no spread".into(),
        ));
    }
    let reg = s + DMatrix::identity(dim, dim) * ridge;
    let ch = reg
        .cholesky()
        .ok_or_else(|| Error::Fit("regularized within-class scatter is not positive definite".into()))?;
    Ok((ch.solve(d), true))
}

/// Fits the discriminant direction `S_W^-1 (xbar_1 - xbar_0)` and class score statistics.
pub fn fit_lda(x: &[Vec<f64>], y: &[bool], gamma: f64) -> Result<LdaClassifier> {
    let dim = check_rows(x, y)?;
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::Config(format!("gamma must be positive, got {gamma}")));
    }
    let n1 = y.iter().filter(|&&v| v).count();
    let counts = [y.len() - n1, n1];
    if counts.iter().any(|&c| c < 2) {
        return Err(Error::SingleClass(format!(
            "LDA needs at least 2 samples per class, got wake={} sleep={}",
            counts[0], counts[1]
        )));
    }

    let mut centroids = [vec![0.0; dim], vec![0.0; dim]];
    for (row, &label) in x.iter().zip(y) {
        let c = &mut centroids[usize::from(label)];
        for (a, v) in c.iter_mut().zip(row) {
            *a += v;
        }
    }
    for k in 0..2 {
        for a in &mut centroids[k] {
            *a /= counts[k] as f64;
        }
    }

    let mut s = DMatrix::<f64>::zeros(dim, dim);
    let mut dev = DVector::<f64>::zeros(dim);
    for (row, &label) in x.iter().zip(y) {
        let c = &centroids[usize::from(label)];
        for i in 0..dim {
            dev[i] = row[i] - c[i];
        }
        s.ger(1.0, &dev, &dev, 1.0);
    }
    let diff = DVector::from_iterator(dim, (0..dim).map(|i| centroids[1][i] - centroids[0][i]));
    let (w, regularized) = solve_scatter(&s, &diff)?;
    if w.iter().any(|v| !v.is_finite()) || w.iter().all(|&v| v == 0.0) {
        return Err(Error::Degenerate("LDA direction is zero or non-finite".into()));
    }
    let w: Vec<f64> = w.iter().copied().collect();

    let mut scores: [Vec<f64>; 2] = [Vec::with_capacity(counts[0]), Vec::with_capacity(counts[1])];
    for (row, &label) in x.iter().zip(y) {
        scores[usize::from(label)].push(dot(&w, row));
    }
    let score_means = [stats::mean(&scores[0]), stats::mean(&scores[1])];
    let score_vars = [stats::sample_variance(&scores[0]), stats::sample_variance(&scores[1])];
    if score_vars.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::Degenerate(
            "a class has zero variance along the discriminant direction".into(),
        ));
    }

    Ok(LdaClassifier {
        w,
        score_means,
        score_vars,
        gamma,
        centroids,
        scatter: s.transpose().iter().copied().collect(),
        counts,
        regularized,
    })
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl LdaClassifier {
    pub fn dim(&self) -> usize {
        self.w.len()
    }

    pub fn score(&self, x: &[f64]) -> f64 {
        dot(&self.w, x)
    }

    /// Left side minus right side of the decision inequality; positive means sleep.
    pub fn margin(&self, z: f64) -> f64 {
        let [m0, m1] = self.score_means;
        let [v0, v1] = self.score_vars;
        (z - m0).powi(2) / v0 - (z - m1).powi(2) / v1 - (self.gamma * v1 / v0).ln()
    }

    pub fn classify_score(&self, z: f64) -> bool {
        self.margin(z) > 0.0
    }

    pub fn classify(&self, x: &[f64]) -> bool {
        self.classify_score(self.score(x))
    }

    pub fn with_gamma(&self, gamma: f64) -> Self {
        LdaClassifier { gamma, ..self.clone() }
    }
}

/// Ratio of between-class to within-class variation of the projected scores.
pub fn fisher_criterion(x: &[Vec<f64>], y: &[bool], w: &[f64]) -> f64 {
    let z: Vec<f64> = x.iter().map(|r| dot(w, r)).collect();
    let overall = stats::mean(&z);
    let mut num = 0.0;
    let mut den = 0.0;
    for k in [false, true] {
        let zk: Vec<f64> = z.iter().zip(y).filter(|(_, &l)| l == k).map(|(&v, _)| v).collect();
        let mk = stats::mean(&zk);
        num += (mk - overall).powi(2);
        den += zk.iter().map(|v| (v - mk).powi(2)).sum::<f64>();
    }
    num / den
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal, StandardNormal};

    fn hand_instance() -> (Vec<Vec<f64>>, Vec<bool>) {
        let base = [(0.0, 1.0), (0.0, -1.0), (1.0, 0.0), (-1.0, 0.0)];
        let mut x = Vec::new();
        let mut y = Vec::new();
        for &(a, b) in &base {
            x.push(vec![a, b]);
            y.push(false);
        }
        for &(a, b) in &base {
            x.push(vec![a + 3.0, b]);
            y.push(true);
        }
        (x, y)
    }

    fn gaussian_classes(rng: &mut ChaCha8Rng, n: usize, dim: usize, shift: f64) -> (Vec<Vec<f64>>, Vec<bool>) {
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..2 * n {
            let label = i >= n;
            let row = (0..dim)
                .map(|d| {
                    let z: f64 = StandardNormal.sample(rng);
                    z * (1.0 + 0.3 * d as f64) + if label { shift } else { 0.0 }
                })
                .collect();
            x.push(row);
            y.push(label);
        }
        (x, y)
    }

    #[test]
    fn hand_computed_direction() {
        let (x, y) = hand_instance();
        let c = fit_lda(&x, &y, 1.0).unwrap();
        assert_eq!(c.scatter, vec![4.0, 0.0, 0.0, 4.0]);
        assert!((c.w[0] - 0.75).abs() < 1e-12);
        assert!(c.w[1].abs() < 1e-12);
        assert!(!c.regularized);
    }

    #[test]
    fn flipping_labels_negates_direction() {
        let (x, y) = hand_instance();
        let flipped: Vec<bool> = y.iter().map(|v| !v).collect();
        let a = fit_lda(&x, &y, 1.0).unwrap();
        let b = fit_lda(&x, &flipped, 1.0).unwrap();
        for (p, q) in a.w.iter().zip(&b.w) {
            assert!((p + q).abs() < 1e-12);
        }
        for t in [-2.0, 0.3, 2.7, 5.0] {
            let pt = [t, 0.2];
            if a.margin(a.score(&pt)).abs() > 1e-9 {
                assert_eq!(a.classify(&pt), !b.classify(&pt));
            }
        }
    }

    #[test]
    fn equal_variance_midpoint_goes_to_wake() {
        let (x, y) = hand_instance();
        let c = fit_lda(&x, &y, 1.0).unwrap();
        assert_eq!(c.score_vars[0], c.score_vars[1]);
        assert!(!c.classify(&[1.5, 0.0]));
        assert!(c.classify(&[1.5 + 1e-9, 0.0]));
        assert!(c.classify(&c.centroids[1].clone()));
        assert!(!c.classify(&c.centroids[0].clone()));
    }

    #[test]
    fn class_variances_use_n_minus_one() {
        let (x, y) = hand_instance();
        let c = fit_lda(&x, &y, 1.0).unwrap();
        // wake scores 0.75 * {0, 0, 1, -1}
        let expected = 0.75f64.powi(2) * 2.0 / 3.0;
        assert!((c.score_vars[0] - expected).abs() < 1e-12);
    }

    #[test]
    fn missing_or_singleton_class_is_rejected() {
        let x = vec![vec![0.0], vec![1.0], vec![2.0]];
        assert!(matches!(
            fit_lda(&x, &[false, false, false], 1.0),
            Err(Error::SingleClass(_))
        ));
        assert!(matches!(
            fit_lda(&x, &[false, false, true], 1.0),
            Err(Error::SingleClass(_))
        ));
        let bad = vec![vec![0.0], vec![f64::NAN], vec![2.0], vec![3.0]];
        assert!(matches!(
            fit_lda(&bad, &[false, false, true, true], 1.0),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn collinear_features_fall_back_to_ridge() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (x, y) = gaussian_classes(&mut rng, 30, 1, 3.0);
        let x: Vec<Vec<f64>> = x.into_iter().map(|r| vec![r[0], 2.0 * r[0]]).collect();
        let c = fit_lda(&x, &y, 1.0).unwrap();
        assert!(c.regularized);
        let acc = x.iter().zip(&y).filter(|(r, &l)| c.classify(r) == l).count();
        assert!(acc as f64 / x.len() as f64 > 0.9);
    }

    #[test]
    fn direction_is_a_local_maximum_of_the_criterion() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..10 {
            let (x, y) = gaussian_classes(&mut rng, 40, 3, 1.0);
            let c = fit_lda(&x, &y, 1.0).unwrap();
            let j0 = fisher_criterion(&x, &y, &c.w);
            let norm = c.w.iter().map(|v| v * v).sum::<f64>().sqrt();
            for _ in 0..100 {
                let d: Vec<f64> = (0..3).map(|_| StandardNormal.sample(&mut rng)).collect();
                let dn = d.iter().map(|v: &f64| v * v).sum::<f64>().sqrt();
                let w2: Vec<f64> = c.w.iter().zip(&d).map(|(w, e)| w + 0.01 * norm * e / dn).collect();
                assert!(fisher_criterion(&x, &y, &w2) <= j0 * (1.0 + 1e-12));
            }
        }
    }

    /// Gaussian class posterior comparison with prior ratio pi0/pi1 = sqrt(gamma).
    fn naive_bayes(z: f64, m: [f64; 2], v: [f64; 2], gamma: f64) -> bool {
        let pi1 = 1.0 / (1.0 + gamma.sqrt());
        let pi0 = 1.0 - pi1;
        let dens = |k: usize| (-(z - m[k]).powi(2) / (2.0 * v[k])).exp() / (2.0 * std::f64::consts::PI * v[k]).sqrt();
        pi1 * dens(1) > pi0 * dens(0)
    }

    #[test]
    fn decisions_match_naive_bayes_on_scores() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for gamma in [1.0, 0.5, 3.0] {
            let (x, y) = gaussian_classes(&mut rng, 50, 1, 2.0);
            let c = fit_lda(&x, &y, gamma).unwrap();
            let spread = Normal::new(1.0, 3.0).unwrap();
            for _ in 0..1000 {
                let p: f64 = spread.sample(&mut rng);
                let z = c.score(&[p]);
                if c.margin(z).abs() < 1e-9 {
                    continue;
                }
                assert_eq!(c.classify(&[p]), naive_bayes(z, c.score_means, c.score_vars, gamma));
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn decisions_are_affine_invariant(
            seed in any::<u64>(),
            m in prop::array::uniform4(-2.0f64..2.0),
        ) {
            let det = m[0] * m[3] - m[1] * m[2];
            prop_assume!(det.abs() > 0.2);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (x, y) = gaussian_classes(&mut rng, 25, 2, 1.5);
            let map = |r: &Vec<f64>| vec![m[0] * r[0] + m[1] * r[1], m[2] * r[0] + m[3] * r[1]];
            let xt: Vec<Vec<f64>> = x.iter().map(map).collect();
            let a = fit_lda(&x, &y, 1.0).unwrap();
            let b = fit_lda(&xt, &y, 1.0).unwrap();
            for _ in 0..50 {
                let p = vec![rng.random_range(-3.0..4.5), rng.random_range(-3.0..4.5)];
                if a.margin(a.score(&p)).abs() < 1e-6 {
                    continue;
                }
                prop_assert_eq!(a.classify(&p), b.classify(&map(&p)));
            }
        }

        #[test]
        fn larger_gamma_never_turns_wake_into_sleep(
            seed in any::<u64>(),
            g1 in 0.05f64..20.0,
            factor in 1.0f64..50.0,
            z in -10.0f64..10.0,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (x, y) = gaussian_classes(&mut rng, 20, 2, 1.0);
            let c = fit_lda(&x, &y, g1).unwrap();
            if !c.classify_score(z) {
                prop_assert!(!c.with_gamma(g1 * factor).classify_score(z));
            }
        }

        #[test]
        fn well_separated_centroids_classify_to_their_class(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (x, y) = gaussian_classes(&mut rng, 30, 2, 12.0);
            let c = fit_lda(&x, &y, 1.0).unwrap();
            let gap = (c.score_means[1] - c.score_means[0]).abs();
            let pooled = ((c.score_vars[0] + c.score_vars[1]) / 2.0).sqrt();
            prop_assume!(gap > 4.0 * pooled);
            prop_assert!(c.classify(&c.centroids[1]));
            prop_assert!(!c.classify(&c.centroids[0]));
        }
    }
}
