//! Column-wise z-scoring with statistics fitted on training rows.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub means: Vec<f64>,
    /// Population standard deviations; zero marks a constant column.
    pub stds: Vec<f64>,
}

impl Normalizer {
    pub fn fit(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.len() < 2 {
            return Err(Error::invalid("normalize", format!("{} rows; need at least 2", rows.len())));
        }
        let d = rows[0].len();
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::shape("normalize", "ragged feature matrix"));
        }
        let n = rows.len() as f64;
        let means: Vec<f64> = (0..d).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n).collect();
        let stds = (0..d)
            .map(|j| {
                let v = rows.iter().map(|r| (r[j] - means[j]).powi(2)).sum::<f64>() / n;
                let sd = v.sqrt();
                if sd > 1e-12 * (1.0 + means[j].abs()) {
                    sd
                } else {
                    0.0
                }
            })
            .collect();
        Ok(Normalizer { means, stds })
    }

    pub fn identity(dim: usize) -> Self {
        Normalizer {
            means: vec![0.0; dim],
            stds: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.means.len()
    }

    pub fn apply_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.means.iter().zip(&self.stds))
            .map(|(&v, (&m, &s))| if s > 0.0 { (v - m) / s } else { 0.0 })
            .collect()
    }

    pub fn apply(&self, rows: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        if let Some(r) = rows.iter().find(|r| r.len() != self.dim()) {
            return Err(Error::shape(
                "normalize",
                format!("row of {} values for {} columns", r.len(), self.dim()),
            ));
        }
        Ok(rows.iter().map(|r| self.apply_row(r)).collect())
    }
}

/// Fits on `train` and returns the normalised rows with the statistics.
pub fn normalize_features(train: &[Vec<f64>]) -> Result<(Vec<Vec<f64>>, Normalizer)> {
    let n = Normalizer::fit(train)?;
    Ok((n.apply(train)?, n))
}
