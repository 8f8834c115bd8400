//! Principal components of the epoch summary statistics, for plotting.

use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::adaptive::EpochStatus;
use crate::error::{Error, Result};
use crate::ingest::EpochSeries;
use crate::stats;

/// Eigenvalues below this share of the total count as zero when checking rank.
const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pca {
    pub columns: Vec<String>,
    /// Constant columns left out of the decomposition.
    pub dropped: Vec<String>,
    pub explained_variance_ratio: Vec<f64>,
    /// First two loading vectors over `columns`.
    pub loadings: [Vec<f64>; 2],
    /// PC1 and PC2 score per input row.
    pub scores: Vec<[f64; 2]>,
}

/// PCA on the correlation matrix. Each loading vector is signed so its
/// largest-magnitude entry is positive.
pub fn pca(rows: &[Vec<f64>], names: &[String]) -> Result<Pca> {
    let n = rows.len();
    let p = names.len();
    if n < 3 {
        return Err(Error::Data(format!("PCA needs at least 3 rows, got {n}")));
    }
    if rows.iter().any(|r| r.len() != p || r.iter().any(|v| !v.is_finite())) {
        return Err(Error::Data(
            "PCA rows must be complete and match the column list".into(),
        ));
    }
    let mut keep = Vec::new();
    let mut dropped = Vec::new();
    let mut center = Vec::new();
    let mut scale = Vec::new();
    for (c, name) in names.iter().enumerate() {
        let col: Vec<f64> = rows.iter().map(|r| r[c]).collect();
        let mean = stats::mean(&col);
        let sd = stats::sample_sd(&col);
        if sd > 1e-12 * mean.abs().max(1.0) {
            keep.push(c);
            center.push(mean);
            scale.push(sd);
        } else {
            dropped.push(name.clone());
        }
    }
    let q = keep.len();
    let z = DMatrix::from_fn(n, q, |i, k| (rows[i][keep[k]] - center[k]) / scale[k]);
    let corr = (z.transpose() * &z) / (n as f64 - 1.0);
    let eig = SymmetricEigen::new(corr);
    let mut order: Vec<usize> = (0..q).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let total: f64 = eig.eigenvalues.iter().map(|v| v.max(0.0)).sum();
    let rank = eig.eigenvalues.iter().filter(|&&v| v > RANK_TOLERANCE * total).count();
    if rank < 2 {
        return Err(Error::Degenerate(format!(
            "summary statistics have rank {rank} after scaling; two components are needed"
        )));
    }
    let loading = |k: usize| {
        let mut v: Vec<f64> = eig.eigenvectors.column(order[k]).iter().copied().collect();
        let lead = v
            .iter()
            .copied()
            .max_by(|a, b| a.abs().total_cmp(&b.abs()))
            .unwrap_or(0.0);
        if lead < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        v
    };
    let loadings = [loading(0), loading(1)];
    let scores = (0..n)
        .map(|i| {
            let s = |l: &[f64]| (0..q).map(|k| z[(i, k)] * l[k]).sum::<f64>();
            [s(&loadings[0]), s(&loadings[1])]
        })
        .collect();
    Ok(Pca {
        columns: keep.iter().map(|&c| names[c].clone()).collect(),
        dropped,
        explained_variance_ratio: order.iter().map(|&k| eig.eigenvalues[k].max(0.0) / total).collect(),
        loadings,
        scores,
    })
}

/// PC scores of every non-NA epoch with its final status.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaDiagnostics {
    pub pca: Pca,
    pub epochs: Vec<usize>,
    pub statuses: Vec<EpochStatus>,
}

pub fn pca_diagnostics(series: &EpochSeries, statuses: &[EpochStatus]) -> Result<PcaDiagnostics> {
    if statuses.len() != series.len() {
        return Err(Error::Dimension {
            expected: series.len(),
            got: statuses.len(),
        });
    }
    let epochs: Vec<usize> = (0..series.len()).filter(|&j| !series.is_na(j)).collect();
    let rows: Vec<Vec<f64>> = epochs.iter().map(|&j| series.row(j).to_vec()).collect();
    let names: Vec<String> = series.variables().iter().map(ToString::to_string).collect();
    let pca = pca(&rows, &names)?;
    Ok(PcaDiagnostics {
        statuses: epochs.iter().map(|&j| statuses[j]).collect(),
        epochs,
        pca,
    })
}

impl PcaDiagnostics {
    /// `epoch_start,status,pc1,pc2`.
    pub fn write_csv(&self, path: &Path, series: &EpochSeries) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["epoch_start", "status", "pc1", "pc2"])?;
        for ((&j, status), s) in self.epochs.iter().zip(&self.statuses).zip(&self.pca.scores) {
            w.write_record([
                series.epoch_start(j).to_string(),
                status.name().to_string(),
                s[0].to_string(),
                s[1].to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}
