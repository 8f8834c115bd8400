//! Marginal logistic and continuation-ratio regression, Mann-Whitney AUC, and
//! leave-one-out evaluation.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const IRLS_TOLERANCE: f64 = 1e-8;
pub const IRLS_MAX_ITER: usize = 100;
/// Coefficient magnitude treated as divergence under separation.
pub const COEF_CAP: f64 = 30.0;

fn sigmoid(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

fn log_likelihood(x: &DMatrix<f64>, y: &[bool], beta: &DVector<f64>) -> f64 {
    let eta = x * beta;
    eta.iter()
        .zip(y)
        .map(|(&e, &yi)| {
            // log(1 + exp(e)) computed stably
            let softplus = if e > 0.0 {
                e + (-e).exp().ln_1p()
            } else {
                e.exp().ln_1p()
            };
            if yi {
                e - softplus
            } else {
                -softplus
            }
        })
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IrlsFit {
    /// Intercept first.
    pub coef: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub log_likelihood_trace: Vec<f64>,
}

/// Newton-Raphson (IRLS) with step halving on the logistic likelihood.
/// Under separation the coefficients are rescaled so the largest has
/// magnitude [`COEF_CAP`] and the fit is marked unconverged.
fn irls(x: &DMatrix<f64>, y: &[bool]) -> IrlsFit {
    let (n, p) = x.shape();
    let mut beta = DVector::<f64>::zeros(p);
    let mut ll = log_likelihood(x, y, &beta);
    let mut trace = vec![ll];
    let mut converged = false;
    let mut iterations = 0;
    let mut diverged = false;
    for _ in 0..IRLS_MAX_ITER {
        iterations += 1;
        let eta = x * &beta;
        let mu: Vec<f64> = eta.iter().map(|&e| sigmoid(e)).collect();
        let mut grad = DVector::<f64>::zeros(p);
        let mut hess = DMatrix::<f64>::zeros(p, p);
        for i in 0..n {
            let xi = x.row(i).transpose();
            let r = f64::from(u8::from(y[i])) - mu[i];
            grad += &xi * r;
            hess.ger(mu[i] * (1.0 - mu[i]), &xi, &xi, 1.0);
        }
        let step = match hess.clone().cholesky() {
            Some(ch) => ch.solve(&grad),
            None => {
                let ridge = 1e-10 * hess.trace().max(1e-300);
                match (hess + DMatrix::identity(p, p) * ridge).cholesky() {
                    Some(ch) => ch.solve(&grad),
                    None => {
                        diverged = true;
                        break;
                    }
                }
            }
        };
        let mut s = 1.0;
        let mut next = &beta + &step * s;
        let mut next_ll = log_likelihood(x, y, &next);
        while next_ll < ll && s > 1e-10 {
            s *= 0.5;
            next = &beta + &step * s;
            next_ll = log_likelihood(x, y, &next);
        }
        if next_ll < ll {
            converged = true;
            break;
        }
        let change = (&next - &beta).amax();
        beta = next;
        ll = next_ll;
        trace.push(ll);
        if beta.amax() > COEF_CAP {
            diverged = true;
            break;
        }
        if change < IRLS_TOLERANCE {
            converged = true;
            break;
        }
    }
    if diverged || !converged || beta.amax() > COEF_CAP {
        let m = beta.amax();
        if m > COEF_CAP {
            beta *= COEF_CAP / m;
        }
        converged = false;
    }
    IrlsFit {
        coef: beta.iter().copied().collect(),
        converged,
        iterations,
        log_likelihood_trace: trace,
    }
}

fn check_binary(n: usize, y: &[bool]) -> Result<()> {
    if n != y.len() {
        return Err(Error::Dimension {
            expected: n,
            got: y.len(),
        });
    }
    let pos = y.iter().filter(|&&v| v).count();
    if pos == 0 || pos == y.len() {
        return Err(Error::SingleClass(
            "logistic regression needs both outcome classes".into(),
        ));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryModel {
    pub beta0: f64,
    pub beta1: f64,
    pub converged: bool,
    pub feature: Option<String>,
}

impl BinaryModel {
    pub fn probability(&self, x: f64) -> f64 {
        sigmoid(self.beta0 + self.beta1 * x)
    }
}

pub fn fit_logistic(x: &[f64], y: &[bool]) -> Result<BinaryModel> {
    check_binary(x.len(), y)?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("logistic regression input is non-finite".into()));
    }
    let design = DMatrix::from_fn(x.len(), 2, |i, j| if j == 0 { 1.0 } else { x[i] });
    let fit = irls(&design, y);
    Ok(BinaryModel {
        beta0: fit.coef[0],
        beta1: fit.coef[1],
        converged: fit.converged,
        feature: None,
    })
}

/// Full IRLS details for a single-feature fit.
pub fn fit_logistic_trace(x: &[f64], y: &[bool]) -> Result<IrlsFit> {
    check_binary(x.len(), y)?;
    let design = DMatrix::from_fn(x.len(), 2, |i, j| if j == 0 { 1.0 } else { x[i] });
    Ok(irls(&design, y))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiModel {
    /// Intercept first.
    pub coef: Vec<f64>,
    pub converged: bool,
}

impl MultiModel {
    pub fn probability(&self, x: &[f64]) -> f64 {
        let eta = self.coef[0] + self.coef[1..].iter().zip(x).map(|(b, v)| b * v).sum::<f64>();
        sigmoid(eta)
    }
}

/// Joint logistic regression on several features.
pub fn fit_logistic_multi(x: &[Vec<f64>], y: &[bool]) -> Result<MultiModel> {
    check_binary(x.len(), y)?;
    let p = x.first().map_or(0, Vec::len);
    if x.iter().any(|r| r.len() != p || r.iter().any(|v| !v.is_finite())) {
        return Err(Error::Data("logistic design is ragged or non-finite".into()));
    }
    let design = DMatrix::from_fn(x.len(), p + 1, |i, j| if j == 0 { 1.0 } else { x[i][j - 1] });
    let fit = irls(&design, y);
    Ok(MultiModel {
        coef: fit.coef,
        converged: fit.converged,
    })
}

/// One conditional logit of the continuation-ratio model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Submodel {
    Fitted(BinaryModel),
    /// Conditioning subset held a single outcome; probability is constant.
    Constant {
        probability: f64,
    },
}

impl Submodel {
    pub fn probability(&self, x: f64) -> f64 {
        match self {
            Submodel::Fitted(m) => m.probability(x),
            Submodel::Constant { probability } => *probability,
        }
    }

    pub fn coefficients(&self) -> Option<(f64, f64)> {
        match self {
            Submodel::Fitted(m) => Some((m.beta0, m.beta1)),
            Submodel::Constant { .. } => None,
        }
    }
}

/// `logit Pr(Y = j | Y >= j) = b0j + b1j x` for `j = 1, 2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrdinalModel {
    pub levels: [Submodel; 2],
}

impl OrdinalModel {
    /// Probabilities of levels 1, 2 and 3.
    pub fn class_probabilities(&self, x: f64) -> [f64; 3] {
        let p1 = self.levels[0].probability(x);
        let p2 = (1.0 - p1) * self.levels[1].probability(x);
        [p1, p2, 1.0 - p1 - p2]
    }
}

fn submodel(x: &[f64], y: &[bool]) -> Result<Submodel> {
    if y.is_empty() {
        return Err(Error::Data(
            "empty conditioning subset in continuation-ratio model".into(),
        ));
    }
    let pos = y.iter().filter(|&&v| v).count();
    if pos == 0 || pos == y.len() {
        return Ok(Submodel::Constant {
            probability: pos as f64 / y.len() as f64,
        });
    }
    Ok(Submodel::Fitted(fit_logistic(x, y)?))
}

pub fn fit_continuation_ratio(x: &[f64], y: &[u8]) -> Result<OrdinalModel> {
    if x.len() != y.len() {
        return Err(Error::Dimension {
            expected: x.len(),
            got: y.len(),
        });
    }
    if let Some(bad) = y.iter().find(|v| !(1..=3).contains(*v)) {
        return Err(Error::Data(format!("ordinal level {bad} is outside 1..=3")));
    }
    let populated = (1..=3u8).filter(|l| y.contains(l)).count();
    if populated < 2 {
        return Err(Error::SingleClass(
            "continuation-ratio model needs at least two populated levels".into(),
        ));
    }
    let first = submodel(x, &y.iter().map(|&v| v == 1).collect::<Vec<_>>())?;
    let (x2, y2): (Vec<f64>, Vec<bool>) = x
        .iter()
        .zip(y)
        .filter(|(_, &v)| v >= 2)
        .map(|(&xi, &v)| (xi, v == 2))
        .unzip();
    let second = submodel(&x2, &y2)?;
    Ok(OrdinalModel {
        levels: [first, second],
    })
}

/// Mann-Whitney AUC: share of (positive, negative) pairs ranked correctly,
/// ties counted as one half.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    check_binary(scores.len(), labels)?;
    if scores.iter().any(|v| v.is_nan()) {
        return Err(Error::Data("AUC of NaN scores".into()));
    }
    let n = scores.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = mid;
        }
        i = j + 1;
    }
    let n_pos = labels.iter().filter(|&&v| v).count() as f64;
    let n_neg = n as f64 - n_pos;
    let rank_sum: f64 = ranks.iter().zip(labels).filter(|(_, &l)| l).map(|(r, _)| r).sum();
    Ok((rank_sum - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoocvResult {
    pub auc: f64,
    /// Held-out score per sample; `None` for skipped folds.
    pub scores: Vec<Option<f64>>,
    pub skipped: Vec<usize>,
}

fn held_out_auc(scores: &[Option<f64>], labels: &[bool]) -> Result<f64> {
    let (s, l): (Vec<f64>, Vec<bool>) = scores
        .iter()
        .zip(labels)
        .filter_map(|(s, &l)| s.map(|v| (v, l)))
        .unzip();
    auc(&s, &l)
}

/// Leave-one-out AUC of a marginal logistic model.
pub fn loocv_auc(x: &[f64], y: &[bool]) -> Result<LoocvResult> {
    check_binary(x.len(), y)?;
    if x.len() < 4 {
        return Err(Error::Data("LOOCV needs at least 4 samples".into()));
    }
    let mut scores = vec![None; x.len()];
    let mut skipped = Vec::new();
    for i in 0..x.len() {
        let xs: Vec<f64> = x.iter().enumerate().filter(|&(k, _)| k != i).map(|(_, &v)| v).collect();
        let ys: Vec<bool> = y.iter().enumerate().filter(|&(k, _)| k != i).map(|(_, &v)| v).collect();
        match fit_logistic(&xs, &ys) {
            Ok(m) => scores[i] = Some(m.probability(x[i])),
            Err(Error::SingleClass(_)) => skipped.push(i),
            Err(e) => return Err(e),
        }
    }
    Ok(LoocvResult {
        auc: held_out_auc(&scores, y)?,
        scores,
        skipped,
    })
}

/// Leave-one-out AUC of a joint logistic model.
pub fn loocv_auc_multi(x: &[Vec<f64>], y: &[bool]) -> Result<LoocvResult> {
    check_binary(x.len(), y)?;
    if x.len() < 4 {
        return Err(Error::Data("LOOCV needs at least 4 samples".into()));
    }
    let mut scores = vec![None; x.len()];
    let mut skipped = Vec::new();
    for i in 0..x.len() {
        let xs: Vec<Vec<f64>> = x
            .iter()
            .enumerate()
            .filter(|&(k, _)| k != i)
            .map(|(_, v)| v.clone())
            .collect();
        let ys: Vec<bool> = y.iter().enumerate().filter(|&(k, _)| k != i).map(|(_, &v)| v).collect();
        match fit_logistic_multi(&xs, &ys) {
            Ok(m) => scores[i] = Some(m.probability(&x[i])),
            Err(Error::SingleClass(_)) => skipped.push(i),
            Err(e) => return Err(e),
        }
    }
    Ok(LoocvResult {
        auc: held_out_auc(&scores, y)?,
        scores,
        skipped,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrdinalLoocv {
    /// One-vs-rest AUC for levels 1, 2, 3; NaN when a level is absent.
    pub auc: [f64; 3],
    pub probabilities: Vec<Option<[f64; 3]>>,
    pub skipped: Vec<usize>,
}

/// Leave-one-out one-vs-rest AUCs of a marginal continuation-ratio model.
pub fn loocv_auc_ordinal(x: &[f64], y: &[u8]) -> Result<OrdinalLoocv> {
    if x.len() != y.len() {
        return Err(Error::Dimension {
            expected: x.len(),
            got: y.len(),
        });
    }
    if x.len() < 4 {
        return Err(Error::Data("LOOCV needs at least 4 samples".into()));
    }
    let mut probabilities = vec![None; x.len()];
    let mut skipped = Vec::new();
    for i in 0..x.len() {
        let xs: Vec<f64> = x.iter().enumerate().filter(|&(k, _)| k != i).map(|(_, &v)| v).collect();
        let ys: Vec<u8> = y.iter().enumerate().filter(|&(k, _)| k != i).map(|(_, &v)| v).collect();
        match fit_continuation_ratio(&xs, &ys) {
            Ok(m) => probabilities[i] = Some(m.class_probabilities(x[i])),
            Err(Error::SingleClass(_)) => skipped.push(i),
            Err(e) => return Err(e),
        }
    }
    let mut aucs = [f64::NAN; 3];
    for (c, a) in aucs.iter_mut().enumerate() {
        let scores: Vec<Option<f64>> = probabilities.iter().map(|p| p.map(|p| p[c])).collect();
        let labels: Vec<bool> = y.iter().map(|&v| usize::from(v) == c + 1).collect();
        *a = held_out_auc(&scores, &labels).unwrap_or(f64::NAN);
    }
    Ok(OrdinalLoocv {
        auc: aucs,
        probabilities,
        skipped,
    })
}
