//! Multivariate Gaussian hidden Markov models for the initial, unperturbed
//! stretch of a recording: Baum-Welch fitting, Viterbi decoding, sleep-state
//! identification, and model selection by separability index.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adaptive::separability_index;
use crate::anomaly::ScreenedSeries;
use crate::error::{Error, Result};
use crate::lda::fit_lda;
use crate::signal::{vars, Variable};

pub const EM_TOLERANCE: f64 = 1e-6;
pub const EM_MAX_ITER: usize = 500;
pub const EM_RESTARTS: u64 = 5;
/// Covariance eigenvalue floor, relative to each feature's variance.
pub const COV_FLOOR: f64 = 1e-6;
/// Minimum observation rows per state per dimension.
pub const ROWS_PER_PARAM: usize = 10;
pub const MAX_STATES: usize = 4;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModelConfig {
    pub features: Vec<Variable>,
    pub k: usize,
}

impl ModelConfig {
    pub fn new(features: Vec<Variable>, k: usize) -> Self {
        ModelConfig { features, k }
    }

    pub fn validate(&self) -> Result<()> {
        if self.features.is_empty() {
            return Err(Error::Config("HMM config has no features".into()));
        }
        if !(2..=MAX_STATES).contains(&self.k) {
            return Err(Error::Config(format!(
                "HMM state count must be in 2..={MAX_STATES}, got {}",
                self.k
            )));
        }
        Ok(())
    }

    pub fn label(&self) -> String {
        let f: Vec<String> = self.features.iter().map(Variable::to_string).collect();
        format!("{}|K={}", f.join("+"), self.k)
    }
}

/// HR MED + HR SD + ACC SD with two and three states.
pub fn default_pool() -> Vec<ModelConfig> {
    let features = vec![vars::HR_MED, vars::HR_SD, vars::ACC_SD];
    vec![ModelConfig::new(features.clone(), 2), ModelConfig::new(features, 3)]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HmmModel {
    pub k: usize,
    pub features: Vec<Variable>,
    pub means: Vec<Vec<f64>>,
    /// Row-major `dim x dim` covariance per state.
    pub covariances: Vec<Vec<f64>>,
    pub transition: Vec<Vec<f64>>,
    pub initial: Vec<f64>,
    pub log_likelihood: f64,
    /// Log-likelihood before each M-step, then the final value.
    pub log_likelihood_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub seed: u64,
}

struct Emission {
    means: Vec<DVector<f64>>,
    chol: Vec<DMatrix<f64>>,
    log_norm: Vec<f64>,
}

impl Emission {
    fn new(means: &[Vec<f64>], covs: &[Vec<f64>]) -> Result<Self> {
        let dim = means[0].len();
        let mut chol = Vec::with_capacity(means.len());
        let mut log_norm = Vec::with_capacity(means.len());
        for c in covs {
            let m = DMatrix::from_row_slice(dim, dim, c);
            let l = m
                .cholesky()
                .ok_or_else(|| Error::Fit("state covariance is not positive definite".into()))?
                .unpack();
            let log_det: f64 = 2.0 * l.diagonal().iter().map(|v| v.ln()).sum::<f64>();
            log_norm.push(-0.5 * (dim as f64 * LN_2PI + log_det));
            chol.push(l);
        }
        Ok(Emission {
            means: means.iter().map(|m| DVector::from_column_slice(m)).collect(),
            chol,
            log_norm,
        })
    }

    fn log_density(&self, k: usize, x: &[f64]) -> f64 {
        let d = DVector::from_column_slice(x) - &self.means[k];
        let z = self.chol[k]
            .solve_lower_triangular(&d)
            .expect("Cholesky factor has a positive diagonal");
        self.log_norm[k] - 0.5 * z.norm_squared()
    }

    fn table(&self, obs: &[Vec<f64>]) -> Vec<Vec<f64>> {
        obs.iter()
            .map(|x| (0..self.means.len()).map(|k| self.log_density(k, x)).collect())
            .collect()
    }
}

struct ForwardBackward {
    gamma: Vec<Vec<f64>>,
    xi_sum: Vec<Vec<f64>>,
    log_likelihood: f64,
}

/// Scaled forward pass. Returns normalized alphas, scale factors and per-step maxima.
#[allow(clippy::type_complexity)]
fn forward(log_b: &[Vec<f64>], a: &[Vec<f64>], pi: &[f64]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<f64>, f64) {
    let k = pi.len();
    let n = log_b.len();
    let mut e = Vec::with_capacity(n);
    let mut alpha = Vec::with_capacity(n);
    let mut scale = Vec::with_capacity(n);
    let mut ll = 0.0;
    for t in 0..n {
        let m = log_b[t].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let et: Vec<f64> = log_b[t].iter().map(|v| (v - m).exp()).collect();
        let mut at: Vec<f64> = if t == 0 {
            (0..k).map(|j| pi[j] * et[j]).collect()
        } else {
            let prev: &Vec<f64> = &alpha[t - 1];
            (0..k)
                .map(|j| (0..k).map(|i| prev[i] * a[i][j]).sum::<f64>() * et[j])
                .collect()
        };
        let c: f64 = at.iter().sum();
        for v in &mut at {
            *v /= c;
        }
        ll += c.ln() + m;
        alpha.push(at);
        scale.push(c);
        e.push(et);
    }
    (alpha, e, scale, ll)
}

fn forward_backward(log_b: &[Vec<f64>], a: &[Vec<f64>], pi: &[f64]) -> ForwardBackward {
    let k = pi.len();
    let n = log_b.len();
    let (alpha, e, scale, ll) = forward(log_b, a, pi);
    let mut beta = vec![vec![1.0; k]; n];
    for t in (0..n - 1).rev() {
        for i in 0..k {
            beta[t][i] = (0..k).map(|j| a[i][j] * e[t + 1][j] * beta[t + 1][j]).sum::<f64>() / scale[t + 1];
        }
    }
    let mut gamma = Vec::with_capacity(n);
    for t in 0..n {
        let mut g: Vec<f64> = (0..k).map(|i| alpha[t][i] * beta[t][i]).collect();
        let s: f64 = g.iter().sum();
        for v in &mut g {
            *v /= s;
        }
        gamma.push(g);
    }
    let mut xi_sum = vec![vec![0.0; k]; k];
    for t in 0..n.saturating_sub(1) {
        for i in 0..k {
            for j in 0..k {
                xi_sum[i][j] += alpha[t][i] * a[i][j] * e[t + 1][j] * beta[t + 1][j] / scale[t + 1];
            }
        }
    }
    ForwardBackward {
        gamma,
        xi_sum,
        log_likelihood: ll,
    }
}

fn feature_variances(obs: &[Vec<f64>]) -> Vec<f64> {
    let dim = obs[0].len();
    (0..dim)
        .map(|d| {
            let col: Vec<f64> = obs.iter().map(|r| r[d]).collect();
            crate::stats::sample_variance(&col)
        })
        .collect()
}

/// Clamps eigenvalues of the covariance, in coordinates scaled by each
/// feature's variance, from below at [`COV_FLOOR`].
fn floor_covariance(cov: &DMatrix<f64>, scale: &[f64]) -> DMatrix<f64> {
    let dim = cov.nrows();
    let s = DVector::from_iterator(dim, scale.iter().map(|v| v.sqrt()));
    let mut w = cov.clone();
    for i in 0..dim {
        for j in 0..dim {
            w[(i, j)] /= s[i] * s[j];
        }
    }
    w = (&w + w.transpose()) * 0.5;
    let eig = SymmetricEigen::new(w);
    let clamped = eig.eigenvalues.map(|v| v.max(COV_FLOOR));
    let mut out = &eig.eigenvectors * DMatrix::from_diagonal(&clamped) * eig.eigenvectors.transpose();
    for i in 0..dim {
        for j in 0..dim {
            out[(i, j)] *= s[i] * s[j];
        }
    }
    (&out + out.transpose()) * 0.5
}

fn to_rows(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().iter().copied().collect()
}

/// Lloyd's algorithm with k-means++ seeding on standardized rows.
fn kmeans(obs: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n = obs.len();
    let dist2 = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>();
    let mut centers: Vec<Vec<f64>> = vec![obs[rng.random_range(0..n)].clone()];
    while centers.len() < k {
        let d: Vec<f64> = obs
            .iter()
            .map(|x| centers.iter().map(|c| dist2(x, c)).fold(f64::INFINITY, f64::min))
            .collect();
        let total: f64 = d.iter().sum();
        let next = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, &di) in d.iter().enumerate() {
                if u < di {
                    pick = i;
                    break;
                }
                u -= di;
            }
            pick
        } else {
            rng.random_range(0..n)
        };
        centers.push(obs[next].clone());
    }
    let nearest = |x: &[f64], centers: &[Vec<f64>]| {
        let mut best = 0;
        let mut bd = f64::INFINITY;
        for (c, m) in centers.iter().enumerate() {
            let dd = dist2(x, m);
            if dd < bd {
                bd = dd;
                best = c;
            }
        }
        best
    };
    let mut assign: Vec<usize> = obs.iter().map(|x| nearest(x, &centers)).collect();
    for _ in 0..100 {
        let dim = obs[0].len();
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (x, &a) in obs.iter().zip(&assign) {
            counts[a] += 1;
            for (s, v) in sums[a].iter_mut().zip(x) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                centers[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
        let next: Vec<usize> = obs.iter().map(|x| nearest(x, &centers)).collect();
        if next == assign {
            break;
        }
        assign = next;
    }
    assign
}

fn weighted_moments(obs: &[Vec<f64>], weights: &[f64], var_scale: &[f64]) -> (Vec<f64>, DMatrix<f64>) {
    let dim = obs[0].len();
    let total: f64 = weights.iter().sum();
    let mut mean = vec![0.0; dim];
    for (x, &w) in obs.iter().zip(weights) {
        for d in 0..dim {
            mean[d] += w * x[d];
        }
    }
    for m in &mut mean {
        *m /= total;
    }
    let mut cov = DMatrix::<f64>::zeros(dim, dim);
    let mut dev = DVector::<f64>::zeros(dim);
    for (x, &w) in obs.iter().zip(weights) {
        for d in 0..dim {
            dev[d] = x[d] - mean[d];
        }
        cov.ger(w / total, &dev, &dev, 1.0);
    }
    (mean, floor_covariance(&cov, var_scale))
}

struct EmRun {
    means: Vec<Vec<f64>>,
    covs: Vec<Vec<f64>>,
    a: Vec<Vec<f64>>,
    pi: Vec<f64>,
    ll: f64,
    trace: Vec<f64>,
    iterations: usize,
    converged: bool,
}

fn em(obs: &[Vec<f64>], k: usize, var_scale: &[f64], rng: &mut ChaCha8Rng) -> Result<EmRun> {
    let n = obs.len();
    let dim = obs[0].len();
    let sd: Vec<f64> = var_scale.iter().map(|v| v.sqrt()).collect();
    let mu: Vec<f64> = (0..dim)
        .map(|d| obs.iter().map(|r| r[d]).sum::<f64>() / n as f64)
        .collect();
    let standardized: Vec<Vec<f64>> = obs
        .iter()
        .map(|r| (0..dim).map(|d| (r[d] - mu[d]) / sd[d]).collect())
        .collect();
    let assign = kmeans(&standardized, k, rng);

    let mut means = Vec::with_capacity(k);
    let mut covs = Vec::with_capacity(k);
    let all = vec![1.0; n];
    for c in 0..k {
        let w: Vec<f64> = assign.iter().map(|&a| f64::from(u8::from(a == c))).collect();
        let count: f64 = w.iter().sum();
        let (m, cov) = if count >= 2.0 {
            weighted_moments(obs, &w, var_scale)
        } else {
            weighted_moments(obs, &all, var_scale)
        };
        means.push(m);
        covs.push(to_rows(&cov));
    }
    let off = if k > 1 { 0.1 / (k - 1) as f64 } else { 0.0 };
    let mut a: Vec<Vec<f64>> = (0..k)
        .map(|i| (0..k).map(|j| if i == j { 0.9 } else { off }).collect())
        .collect();
    let mut pi = vec![1.0 / k as f64; k];

    let mut trace = Vec::new();
    let mut prev = f64::NEG_INFINITY;
    let mut converged = false;
    let mut iterations = 0;
    for _ in 0..EM_MAX_ITER {
        let emis = Emission::new(&means, &covs)?;
        let fb = forward_backward(&emis.table(obs), &a, &pi);
        let ll = fb.log_likelihood;
        if !ll.is_finite() {
            return Err(Error::Fit("log-likelihood became non-finite".into()));
        }
        trace.push(ll);
        if prev.is_finite() && (ll - prev).abs() <= EM_TOLERANCE * ll.abs().max(1.0) {
            converged = true;
            break;
        }
        prev = ll;
        iterations += 1;

        pi = fb.gamma[0].clone();
        for i in 0..k {
            let row_total: f64 = fb.xi_sum[i].iter().sum();
            if row_total > 0.0 {
                for j in 0..k {
                    a[i][j] = fb.xi_sum[i][j] / row_total;
                }
            }
        }
        for c in 0..k {
            let w: Vec<f64> = fb.gamma.iter().map(|g| g[c]).collect();
            if w.iter().sum::<f64>() <= f64::MIN_POSITIVE {
                continue;
            }
            let (m, cov) = weighted_moments(obs, &w, var_scale);
            means[c] = m;
            covs[c] = to_rows(&cov);
        }
    }
    let final_ll = if converged {
        *trace.last().expect("non-empty trace")
    } else {
        let emis = Emission::new(&means, &covs)?;
        let ll = forward(&emis.table(obs), &a, &pi).3;
        trace.push(ll);
        ll
    };
    Ok(EmRun {
        means,
        covs,
        a,
        pi,
        ll: final_ll,
        trace,
        iterations,
        converged,
    })
}

/// Fits a `k`-state Gaussian HMM by Baum-Welch, keeping the best of several restarts.
pub fn fit_hmm(obs: &[Vec<f64>], k: usize, seed: u64) -> Result<HmmModel> {
    if k < 2 {
        return Err(Error::Config(format!("HMM needs at least 2 states, got {k}")));
    }
    let dim = obs.first().map_or(0, Vec::len);
    if dim == 0 {
        return Err(Error::Data("HMM observations have no features".into()));
    }
    if obs.iter().any(|r| r.len() != dim || r.iter().any(|v| !v.is_finite())) {
        return Err(Error::Data("HMM observations are ragged or non-finite".into()));
    }
    let needed = ROWS_PER_PARAM * k * dim;
    if obs.len() < needed {
        return Err(Error::Data(format!(
            "HMM with K={k} on {dim} features needs at least {needed} rows, got {}",
            obs.len()
        )));
    }
    let var_scale = feature_variances(obs);
    if let Some(d) = var_scale.iter().position(|v| !(*v > 0.0)) {
        return Err(Error::Fit(format!(
            "feature {d} is constant over the fitting window; covariance is degenerate"
        )));
    }

    let mut best: Option<(EmRun, u64)> = None;
    let mut failures = Vec::new();
    for r in 0..EM_RESTARTS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(r));
        match em(obs, k, &var_scale, &mut rng) {
            Ok(run) => {
                if best.as_ref().is_none_or(|(b, _)| run.ll > b.ll) {
                    best = Some((run, r));
                }
            }
            Err(e) => failures.push(e.to_string()),
        }
    }
    let (run, _) = best.ok_or_else(|| Error::Fit(format!("every EM restart failed: {}", failures.join("; "))))?;
    Ok(HmmModel {
        k,
        features: Vec::new(),
        means: run.means,
        covariances: run.covs,
        transition: run.a,
        initial: run.pi,
        log_likelihood: run.ll,
        log_likelihood_trace: run.trace,
        iterations: run.iterations,
        converged: run.converged,
        seed,
    })
}

impl HmmModel {
    pub fn dim(&self) -> usize {
        self.means.first().map_or(0, Vec::len)
    }

    pub fn with_features(mut self, features: Vec<Variable>) -> Self {
        self.features = features;
        self
    }

    fn check_obs(&self, obs: &[Vec<f64>]) -> Result<()> {
        for r in obs {
            if r.len() != self.dim() {
                return Err(Error::Dimension {
                    expected: self.dim(),
                    got: r.len(),
                });
            }
        }
        Ok(())
    }

    /// Per-state, per-observation emission log densities.
    pub fn log_emissions(&self, obs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        self.check_obs(obs)?;
        Ok(Emission::new(&self.means, &self.covariances)?.table(obs))
    }

    /// Total log-likelihood of a sequence by the scaled forward pass.
    pub fn forward_log_likelihood(&self, obs: &[Vec<f64>]) -> Result<f64> {
        if obs.is_empty() {
            return Ok(0.0);
        }
        let b = self.log_emissions(obs)?;
        Ok(forward(&b, &self.transition, &self.initial).3)
    }
}

/// Most probable state path; ties go to the lower state index.
pub fn decode(model: &HmmModel, obs: &[Vec<f64>]) -> Result<Vec<usize>> {
    if obs.is_empty() {
        return Ok(Vec::new());
    }
    let b = model.log_emissions(obs)?;
    let k = model.k;
    let ln_a: Vec<Vec<f64>> = model
        .transition
        .iter()
        .map(|r| r.iter().map(|v| v.ln()).collect())
        .collect();
    let mut delta: Vec<f64> = (0..k).map(|j| model.initial[j].ln() + b[0][j]).collect();
    let mut back = vec![vec![0usize; k]; obs.len()];
    for t in 1..obs.len() {
        let mut next = vec![f64::NEG_INFINITY; k];
        for j in 0..k {
            let mut arg = 0;
            let mut best = f64::NEG_INFINITY;
            for i in 0..k {
                let v = delta[i] + ln_a[i][j];
                if v > best {
                    best = v;
                    arg = i;
                }
            }
            back[t][j] = arg;
            next[j] = best + b[t][j];
        }
        delta = next;
    }
    let mut state = 0;
    for j in 1..k {
        if delta[j] > delta[state] {
            state = j;
        }
    }
    let mut path = vec![0; obs.len()];
    for t in (0..obs.len()).rev() {
        path[t] = state;
        state = back[t][state];
    }
    Ok(path)
}

/// State whose emission mean marks sleep: lowest heart rate, else lowest movement.
pub fn sleep_state(model: &HmmModel) -> usize {
    let preference = [vars::HR_MED, vars::HR_MEAN, vars::HR_SD, vars::ACC_SD];
    let col = preference
        .iter()
        .find_map(|v| model.features.iter().position(|f| f == v))
        .unwrap_or(0);
    let mut best = 0;
    for s in 1..model.k {
        if model.means[s][col] < model.means[best][col] {
            best = s;
        }
    }
    best
}

/// Maps the sleep state to `true` and every other state to `false`.
pub fn derive_sleep_labels(model: &HmmModel, states: &[usize]) -> Vec<bool> {
    let s = sleep_state(model);
    states.iter().map(|&u| u == s).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateReport {
    pub config: ModelConfig,
    pub si: Option<f64>,
    pub log_likelihood: Option<f64>,
    pub error: Option<String>,
}

/// Chosen bootstrap model and the labels it assigns to the initial window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HmmSelection {
    pub config: ModelConfig,
    pub model: HmmModel,
    pub si: f64,
    /// Grid index of the last epoch in the initial window.
    pub end_index: usize,
    /// Usable epochs in the initial window, in time order.
    pub epochs: Vec<usize>,
    pub labels: Vec<bool>,
    pub candidates: Vec<CandidateReport>,
}

/// Index of the last epoch starting before `initial_end`.
pub fn initial_end_index(screened: &ScreenedSeries, initial_end: f64) -> Result<usize> {
    let s = &screened.series;
    let n = (0..s.len()).take_while(|&j| s.epoch_start(j) < initial_end).count();
    if n == 0 {
        return Err(Error::Config(format!(
            "initial window ending at {initial_end} contains no epochs"
        )));
    }
    Ok(n - 1)
}

/// Rows of the requested variables for the given epochs.
pub fn gather_rows(screened: &ScreenedSeries, features: &[Variable], epochs: &[usize]) -> Result<Vec<Vec<f64>>> {
    let cols: Vec<usize> = features
        .iter()
        .map(|v| screened.series.require_column(*v))
        .collect::<Result<_>>()?;
    Ok(epochs.iter().map(|&j| screened.series.gather(j, &cols)).collect())
}

fn evaluate_config(
    obs_all: &ScreenedSeries,
    epochs: &[usize],
    cfg: &ModelConfig,
    seed: u64,
) -> Result<(HmmModel, Vec<bool>, f64)> {
    cfg.validate()?;
    let obs = gather_rows(obs_all, &cfg.features, epochs)?;
    let model = fit_hmm(&obs, cfg.k, seed)?.with_features(cfg.features.clone());
    let states = decode(&model, &obs)?;
    let labels = derive_sleep_labels(&model, &states);
    let lda = fit_lda(&obs, &labels, 1.0)?;
    let si = separability_index(&obs, &labels, &lda.w)?;
    Ok((model, labels, si))
}

/// Fits every configuration on the initial window and keeps the one whose
/// derived labels are most separable; ties prefer fewer features, then fewer states.
pub fn select_model(
    screened: &ScreenedSeries,
    configs: &[ModelConfig],
    initial_end: f64,
    seed: u64,
) -> Result<HmmSelection> {
    if configs.is_empty() {
        return Err(Error::Config("HMM config pool is empty".into()));
    }
    let end_index = initial_end_index(screened, initial_end)?;
    let epochs: Vec<usize> = (0..=end_index).filter(|&j| screened.is_usable(j)).collect();
    let results: Vec<Result<(HmmModel, Vec<bool>, f64)>> = configs
        .par_iter()
        .map(|cfg| evaluate_config(screened, &epochs, cfg, seed))
        .collect();

    let mut candidates = Vec::with_capacity(configs.len());
    let mut best: Option<usize> = None;
    for (i, (cfg, res)) in configs.iter().zip(&results).enumerate() {
        match res {
            Ok((model, _, si)) => {
                candidates.push(CandidateReport {
                    config: cfg.clone(),
                    si: Some(*si),
                    log_likelihood: Some(model.log_likelihood),
                    error: None,
                });
                let better = match best {
                    None => true,
                    Some(b) => {
                        let (bsi, bcfg) = (results[b].as_ref().unwrap().2, &configs[b]);
                        si > &bsi || (*si == bsi && (cfg.features.len(), cfg.k) < (bcfg.features.len(), bcfg.k))
                    }
                };
                if better {
                    best = Some(i);
                }
            }
            Err(e) => candidates.push(CandidateReport {
                config: cfg.clone(),
                si: None,
                log_likelihood: None,
                error: Some(e.to_string()),
            }),
        }
    }
    let Some(b) = best else {
        let causes: Vec<String> = candidates
            .iter()
            .map(|c| format!("{}: {}", c.config.label(), c.error.as_deref().unwrap_or("")))
            .collect();
        return Err(Error::Fit(format!(
            "no HMM configuration could be fitted ({})",
            causes.join("; ")
        )));
    };
    let (model, labels, si) = results.into_iter().nth(b).unwrap().unwrap();
    Ok(HmmSelection {
        config: configs[b].clone(),
        model,
        si,
        end_index,
        epochs,
        labels,
        candidates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn simulate(means: &[f64], a: &[Vec<f64>], n: usize, rng: &mut ChaCha8Rng) -> (Vec<Vec<f64>>, Vec<usize>) {
        let mut state = 0;
        let mut obs = Vec::with_capacity(n);
        let mut states = Vec::with_capacity(n);
        for _ in 0..n {
            let z: f64 = StandardNormal.sample(rng);
            obs.push(vec![means[state] + z]);
            states.push(state);
            let u: f64 = rng.random();
            let mut acc = 0.0;
            for (j, p) in a[state].iter().enumerate() {
                acc += p;
                if u < acc {
                    state = j;
                    break;
                }
            }
        }
        (obs, states)
    }

    fn random_model(rng: &mut ChaCha8Rng, k: usize, dim: usize) -> HmmModel {
        let simplex = |rng: &mut ChaCha8Rng| {
            let v: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..1.0)).collect();
            let s: f64 = v.iter().sum();
            v.into_iter().map(|x| x / s).collect::<Vec<f64>>()
        };
        let mut covariances = Vec::new();
        let mut means = Vec::new();
        for _ in 0..k {
            means.push((0..dim).map(|_| rng.random_range(-2.0..2.0)).collect());
            let b: Vec<f64> = (0..dim * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            let b = DMatrix::from_row_slice(dim, dim, &b);
            let c = &b * b.transpose() + DMatrix::identity(dim, dim) * 0.3;
            covariances.push(to_rows(&c));
        }
        HmmModel {
            k,
            features: vec![],
            means,
            covariances,
            transition: (0..k).map(|_| simplex(rng)).collect(),
            initial: simplex(rng),
            log_likelihood: 0.0,
            log_likelihood_trace: vec![],
            iterations: 0,
            converged: true,
            seed: 0,
        }
    }

    /// Log joint probability of every path, enumerated.
    fn enumerate_paths(model: &HmmModel, obs: &[Vec<f64>]) -> Vec<(Vec<usize>, f64)> {
        let b = model.log_emissions(obs).unwrap();
        let n = obs.len();
        let k = model.k;
        let mut out = Vec::new();
        for code in 0..k.pow(n as u32) {
            let mut path = Vec::with_capacity(n);
            let mut c = code;
            for _ in 0..n {
                path.push(c % k);
                c /= k;
            }
            path.reverse();
            let mut lp = model.initial[path[0]].ln() + b[0][path[0]];
            for t in 1..n {
                lp += model.transition[path[t - 1]][path[t]].ln() + b[t][path[t]];
            }
            out.push((path, lp));
        }
        out
    }

    #[test]
    fn recovers_a_two_state_chain() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let a = vec![vec![0.9, 0.1], vec![0.1, 0.9]];
        let (obs, _) = simulate(&[0.0, 10.0], &a, 500, &mut rng);
        let m = fit_hmm(&obs, 2, 3).unwrap();
        let (lo, hi) = if m.means[0][0] < m.means[1][0] { (0, 1) } else { (1, 0) };
        assert!(m.means[lo][0].abs() < 0.5);
        assert!((m.means[hi][0] - 10.0).abs() < 0.5);
        assert!((m.transition[lo][lo] - 0.9).abs() < 0.05);
        assert!((m.transition[hi][hi] - 0.9).abs() < 0.05);
        for row in &m.transition {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        }
        assert!((m.initial.iter().sum::<f64>() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn em_log_likelihood_never_decreases() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = vec![vec![0.8, 0.15, 0.05], vec![0.1, 0.8, 0.1], vec![0.05, 0.15, 0.8]];
        let (x, _) = simulate(&[0.0, 2.0, 4.0], &a, 400, &mut rng);
        let obs: Vec<Vec<f64>> = x
            .iter()
            .map(|r| {
                vec![r[0], {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    0.5 * r[0] + z * 0.7
                }]
            })
            .collect();
        let m = fit_hmm(&obs, 3, 11).unwrap();
        for pair in m.log_likelihood_trace.windows(2) {
            assert!(pair[1] >= pair[0] - 1e-9 * pair[0].abs());
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let obs: Vec<Vec<f64>> = (0..100).map(|i| vec![f64::from(i % 7)]).collect();
        assert!(fit_hmm(&obs, 1, 0).unwrap_err().is_config());
        let constant = vec![vec![3.0, 1.0]; 200];
        assert!(matches!(fit_hmm(&constant, 2, 0), Err(Error::Fit(_))));
        assert!(matches!(fit_hmm(&obs[..10], 2, 0), Err(Error::Data(_))));
    }

    #[test]
    fn absorbing_start_gives_constant_path() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut m = random_model(&mut rng, 3, 2);
        m.transition = vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]];
        m.initial = vec![1.0, 0.0, 0.0];
        let obs: Vec<Vec<f64>> = (0..6).map(|i| vec![f64::from(i), -f64::from(i)]).collect();
        assert_eq!(decode(&m, &obs).unwrap(), vec![0; 6]);
    }

    #[test]
    fn single_observation_at_a_state_mean() {
        let m = HmmModel {
            k: 2,
            features: vec![],
            means: vec![vec![0.0], vec![10.0]],
            covariances: vec![vec![1.0], vec![1.0]],
            transition: vec![vec![0.5, 0.5], vec![0.5, 0.5]],
            initial: vec![0.5, 0.5],
            log_likelihood: 0.0,
            log_likelihood_trace: vec![],
            iterations: 0,
            converged: true,
            seed: 0,
        };
        assert_eq!(decode(&m, &[vec![10.0]]).unwrap(), vec![1]);
        assert!(decode(&m, &[vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn sleep_state_prefers_heart_rate_then_movement() {
        let mut m = HmmModel {
            k: 3,
            features: vec![vars::ACC_SD, vars::HR_MED],
            means: vec![vec![0.01, 70.0], vec![0.2, 55.0], vec![0.5, 95.0]],
            covariances: vec![vec![1.0, 0.0, 0.0, 1.0]; 3],
            transition: vec![vec![1.0 / 3.0; 3]; 3],
            initial: vec![1.0 / 3.0; 3],
            log_likelihood: 0.0,
            log_likelihood_trace: vec![],
            iterations: 0,
            converged: true,
            seed: 0,
        };
        assert_eq!(sleep_state(&m), 1);
        assert_eq!(derive_sleep_labels(&m, &[0, 1, 2, 1]), vec![false, true, false, true]);
        m.features = vec![vars::ACC_SD, vars::TEMP_MED];
        assert_eq!(sleep_state(&m), 0);
    }

    #[test]
    fn acc_only_fit_labels_the_still_state_as_sleep() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let a = vec![vec![0.95, 0.05], vec![0.05, 0.95]];
        let (_, truth) = simulate(&[0.0, 1.0], &a, 400, &mut rng);
        let obs: Vec<Vec<f64>> = truth
            .iter()
            .map(|&s| {
                let z: f64 = StandardNormal.sample(&mut rng);
                vec![if s == 0 { 0.01 + 0.003 * z } else { 0.2 + 0.05 * z }]
            })
            .collect();
        let m = fit_hmm(&obs, 2, 1).unwrap().with_features(vec![vars::ACC_SD]);
        let labels = derive_sleep_labels(&m, &decode(&m, &obs).unwrap());
        let agree = labels.iter().zip(&truth).filter(|(l, &s)| **l == (s == 0)).count();
        assert!(agree as f64 / truth.len() as f64 > 0.95);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(60))]

        #[test]
        fn viterbi_and_forward_match_enumeration(
            seed in any::<u64>(),
            k in 2usize..=3,
            n in 1usize..=7,
            dim in 1usize..=2,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = random_model(&mut rng, k, dim);
            let obs: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..dim).map(|_| rng.random_range(-3.0..3.0)).collect())
                .collect();
            let paths = enumerate_paths(&m, &obs);
            let (best_path, best_lp) = paths
                .iter()
                .fold((vec![], f64::NEG_INFINITY), |acc, (p, lp)| if *lp > acc.1 { (p.clone(), *lp) } else { acc });
            prop_assert_eq!(decode(&m, &obs).unwrap(), best_path);
            let max = best_lp;
            let total = max + paths.iter().map(|(_, lp)| (lp - max).exp()).sum::<f64>().ln();
            let fwd = m.forward_log_likelihood(&obs).unwrap();
            // relative error of the likelihood itself
            prop_assert!((fwd - total).abs() < 1e-9);
        }

        #[test]
        fn exactly_one_sleep_state(seed in any::<u64>(), k in 2usize..=4) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = random_model(&mut rng, k, 2).with_features(vec![vars::HR_MED, vars::ACC_SD]);
            let all: Vec<usize> = (0..k).collect();
            let labels = derive_sleep_labels(&m, &all);
            prop_assert_eq!(labels.iter().filter(|&&l| l).count(), 1);
        }
    }
}
