//! RBF support vector machine trained by SMO, one-vs-one for multi-class.

use super::normalize::Normalizer;
use crate::error::{Error, Result};
use crate::par::{self, Execution};
use crate::tensor::container::{self, Record};
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const MODEL_MAGIC: [u8; 4] = *b"SVM1";
const MODEL_VERSION: u32 = 1;
const TAU: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SvmParams {
    pub c: f64,
    pub gamma: f64,
    /// Stop once the maximal KKT violation drops to this value.
    pub tolerance: f64,
    pub max_iter: usize,
}

impl Default for SvmParams {
    fn default() -> Self {
        SvmParams {
            c: 1.0,
            gamma: 0.1,
            tolerance: 1e-3,
            max_iter: 200_000,
        }
    }
}

impl SvmParams {
    fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.gamma > 0.0 && self.tolerance > 0.0) {
            return Err(Error::invalid(
                "svm",
                format!("C={} gamma={} tolerance={} must be positive", self.c, self.gamma, self.tolerance),
            ));
        }
        Ok(())
    }
}

/// Solution of one binary dual problem.
#[derive(Clone, Debug, PartialEq)]
pub struct SmoSolution {
    pub alpha: Vec<f64>,
    pub rho: f64,
    pub iterations: usize,
    /// `max_{I_up} -y G - min_{I_low} -y G` at exit.
    pub max_violation: f64,
    pub converged: bool,
    /// Dual objective after every iteration when requested.
    pub objective: Option<Vec<f64>>,
}

/// Solves `min 1/2 a'Qa - e'a` s.t. `0 <= a <= C`, `y'a = 0`, with
/// `Q_ij = y_i y_j K_ij`, using second-order working set selection.
pub fn smo(kernel: &[f64], y: &[f64], c: f64, tolerance: f64, max_iter: usize, trace: bool) -> SmoSolution {
    let n = y.len();
    let k = |i: usize, j: usize| kernel[i * n + j];
    let mut alpha = vec![0.0f64; n];
    let mut grad = vec![-1.0f64; n];
    let mut objective = trace.then(Vec::new);
    let in_up = |a: f64, yi: f64| (yi > 0.0 && a < c) || (yi < 0.0 && a > 0.0);
    let in_low = |a: f64, yi: f64| (yi > 0.0 && a > 0.0) || (yi < 0.0 && a < c);
    let mut iterations = 0;
    let mut violation;
    loop {
        let mut gmax = f64::NEG_INFINITY;
        let mut i = usize::MAX;
        for t in 0..n {
            if in_up(alpha[t], y[t]) {
                let f = -y[t] * grad[t];
                if f >= gmax {
                    gmax = f;
                    i = t;
                }
            }
        }
        let mut gmin = f64::INFINITY;
        let mut j = usize::MAX;
        let mut best = f64::INFINITY;
        for t in 0..n {
            if !in_low(alpha[t], y[t]) {
                continue;
            }
            let f = -y[t] * grad[t];
            gmin = gmin.min(f);
            if i != usize::MAX && f < gmax {
                let b = gmax - f;
                let mut a = k(i, i) + k(t, t) - 2.0 * k(i, t);
                if a <= 0.0 {
                    a = TAU;
                }
                let score = -b * b / a;
                if score <= best {
                    best = score;
                    j = t;
                }
            }
        }
        violation = if i == usize::MAX || gmin == f64::INFINITY { 0.0 } else { gmax - gmin };
        if violation <= tolerance || j == usize::MAX || iterations >= max_iter {
            break;
        }
        iterations += 1;

        let (ai, aj) = (alpha[i], alpha[j]);
        let mut quad = k(i, i) + k(j, j) - 2.0 * k(i, j);
        if quad <= 0.0 {
            quad = TAU;
        }
        if y[i] != y[j] {
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - ai, alpha[j] - aj);
        for t in 0..n {
            grad[t] += y[t] * (y[i] * k(t, i) * di + y[j] * k(t, j) * dj);
        }
        if let Some(obj) = objective.as_mut() {
            // dual objective e'a - 1/2 a'Qa = -1/2 sum a_t (G_t - 1)
            obj.push(-0.5 * alpha.iter().zip(&grad).map(|(a, g)| a * (g - 1.0)).sum::<f64>());
        }
    }

    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut free_sum, mut free_n) = (0.0, 0usize);
    for t in 0..n {
        let yg = y[t] * grad[t];
        if alpha[t] >= c {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free_sum += yg;
            free_n += 1;
        }
    }
    let rho = if free_n > 0 {
        free_sum / free_n as f64
    } else if ub.is_finite() && lb.is_finite() {
        (ub + lb) / 2.0
    } else {
        0.0
    };
    SmoSolution {
        alpha,
        rho,
        iterations,
        max_violation: violation,
        converged: violation <= tolerance,
        objective,
    }
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Pairwise squared distances of a row set, shared across a parameter grid.
#[derive(Clone, Debug)]
pub struct DistanceMatrix {
    n: usize,
    d2: Vec<f64>,
}

impl DistanceMatrix {
    pub fn new(rows: &[Vec<f64>]) -> Self {
        let n = rows.len();
        let mut d2 = vec![0.0; n * n];
        for i in 0..n {
            for j in i + 1..n {
                let v = squared_distance(&rows[i], &rows[j]);
                d2[i * n + j] = v;
                d2[j * n + i] = v;
            }
        }
        DistanceMatrix { n, d2 }
    }

    fn kernel(&self, idx: &[usize], gamma: f64) -> Vec<f64> {
        let m = idx.len();
        let mut k = vec![0.0; m * m];
        for (a, &i) in idx.iter().enumerate() {
            for (b, &j) in idx.iter().enumerate() {
                k[a * m + b] = (-gamma * self.d2[i * self.n + j]).exp();
            }
        }
        k
    }
}

/// One pairwise classifier: positive decision values vote for `positive`.
#[derive(Clone, Debug, PartialEq)]
pub struct BinarySvm {
    pub positive: usize,
    pub negative: usize,
    pub support: Vec<Vec<f64>>,
    /// `y_i * alpha_i` of each support vector.
    pub coef: Vec<f64>,
    pub rho: f64,
    pub iterations: usize,
    pub max_violation: f64,
    pub converged: bool,
}

impl BinarySvm {
    pub fn decision(&self, x: &[f64], gamma: f64) -> f64 {
        self.support
            .iter()
            .zip(&self.coef)
            .map(|(s, &c)| c * (-gamma * squared_distance(s, x)).exp())
            .sum::<f64>()
            - self.rho
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SvmModel {
    pub params: SvmParams,
    /// Sorted class labels.
    pub classes: Vec<usize>,
    pub machines: Vec<BinarySvm>,
    pub normalizer: Normalizer,
}

fn train_with(
    rows: &[Vec<f64>],
    labels: &[usize],
    params: SvmParams,
    dist: &DistanceMatrix,
) -> Result<SvmModel> {
    params.validate()?;
    let mut classes: Vec<usize> = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() < 2 {
        return Err(Error::DegenerateData(format!("svm needs two classes, got {classes:?}")));
    }
    let mut machines = Vec::new();
    for (a, &ca) in classes.iter().enumerate() {
        for &cb in &classes[a + 1..] {
            let idx: Vec<usize> = (0..rows.len()).filter(|&i| labels[i] == ca || labels[i] == cb).collect();
            let y: Vec<f64> = idx.iter().map(|&i| if labels[i] == ca { 1.0 } else { -1.0 }).collect();
            let k = dist.kernel(&idx, params.gamma);
            let sol = smo(&k, &y, params.c, params.tolerance, params.max_iter, false);
            if !sol.converged {
                log::warn!(
                    "svm {ca} vs {cb}: stopped after {} iterations with KKT violation {:.3e}",
                    sol.iterations,
                    sol.max_violation
                );
            }
            let (mut support, mut coef) = (Vec::new(), Vec::new());
            for (p, &i) in idx.iter().enumerate() {
                if sol.alpha[p] > 0.0 {
                    support.push(rows[i].clone());
                    coef.push(y[p] * sol.alpha[p]);
                }
            }
            machines.push(BinarySvm {
                positive: ca,
                negative: cb,
                support,
                coef,
                rho: sol.rho,
                iterations: sol.iterations,
                max_violation: sol.max_violation,
                converged: sol.converged,
            });
        }
    }
    Ok(SvmModel {
        params,
        classes,
        machines,
        normalizer: Normalizer::identity(rows[0].len()),
    })
}

fn check_rows(rows: &[Vec<f64>], labels: &[usize]) -> Result<()> {
    if rows.len() != labels.len() || rows.is_empty() {
        return Err(Error::shape(
            "svm_train",
            format!("{} rows for {} labels", rows.len(), labels.len()),
        ));
    }
    let d = rows[0].len();
    if rows.iter().any(|r| r.len() != d) {
        return Err(Error::shape("svm_train", "ragged feature matrix"));
    }
    Ok(())
}

/// Trains on rows that are already normalised; the model's normalizer is
/// the identity.
pub fn svm_train(rows: &[Vec<f64>], labels: &[usize], params: SvmParams) -> Result<SvmModel> {
    check_rows(rows, labels)?;
    train_with(rows, labels, params, &DistanceMatrix::new(rows))
}

impl SvmModel {
    /// True when every pairwise problem met the tolerance.
    pub fn converged(&self) -> bool {
        self.machines.iter().all(|m| m.converged)
    }

    pub fn max_violation(&self) -> f64 {
        self.machines.iter().map(|m| m.max_violation).fold(0.0, f64::max)
    }

    /// Majority vote; ties go to the lowest class label. Rows are
    /// normalised with the stored statistics first.
    pub fn predict_one(&self, raw: &[f64]) -> usize {
        let x = self.normalizer.apply_row(raw);
        let mut votes = vec![0usize; self.classes.len()];
        let pos = |c: usize| self.classes.binary_search(&c).expect("known class");
        for m in &self.machines {
            let winner = if m.decision(&x, self.params.gamma) > 0.0 { m.positive } else { m.negative };
            votes[pos(winner)] += 1;
        }
        let mut best = 0;
        for i in 1..votes.len() {
            if votes[i] > votes[best] {
                best = i;
            }
        }
        self.classes[best]
    }

    pub fn predict(&self, rows: &[Vec<f64>]) -> Vec<usize> {
        rows.iter().map(|r| self.predict_one(r)).collect()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let d = self.normalizer.dim() as u32;
        let mut records = vec![
            Record {
                tag: 1,
                shape: vec![4],
                data: vec![self.params.c, self.params.gamma, self.params.tolerance, self.params.max_iter as f64],
            },
            Record {
                tag: 2,
                shape: vec![self.classes.len() as u32],
                data: self.classes.iter().map(|&c| c as f64).collect(),
            },
            Record {
                tag: 3,
                shape: vec![2, d],
                data: self.normalizer.means.iter().chain(&self.normalizer.stds).copied().collect(),
            },
        ];
        for m in &self.machines {
            records.push(Record {
                tag: 4,
                shape: vec![6],
                data: vec![
                    m.positive as f64,
                    m.negative as f64,
                    m.rho,
                    m.iterations as f64,
                    m.max_violation,
                    m.converged as u8 as f64,
                ],
            });
            let mut data = Vec::with_capacity(m.coef.len() * (d as usize + 1));
            for (s, &c) in m.support.iter().zip(&m.coef) {
                data.push(c);
                data.extend_from_slice(s);
            }
            records.push(Record {
                tag: 5,
                shape: vec![m.coef.len() as u32, d + 1],
                data,
            });
        }
        container::encode(MODEL_MAGIC, MODEL_VERSION, &records)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (version, records) = container::decode::<f64>(bytes, MODEL_MAGIC)?;
        if version != MODEL_VERSION {
            return Err(Error::Format(format!("unsupported svm version {version}")));
        }
        let bad = |m: &str| Error::Format(format!("svm model: {m}"));
        if records.len() < 3 || (records.len() - 3) % 2 != 0 {
            return Err(bad("unexpected record count"));
        }
        let (h, cl, nm) = (&records[0], &records[1], &records[2]);
        if h.tag != 1 || h.data.len() != 4 || cl.tag != 2 || nm.tag != 3 || nm.shape.len() != 2 {
            return Err(bad("malformed header"));
        }
        let params = SvmParams {
            c: h.data[0],
            gamma: h.data[1],
            tolerance: h.data[2],
            max_iter: h.data[3] as usize,
        };
        let d = nm.shape[1] as usize;
        if nm.data.len() != 2 * d {
            return Err(bad("normalizer length"));
        }
        let normalizer = Normalizer {
            means: nm.data[..d].to_vec(),
            stds: nm.data[d..].to_vec(),
        };
        let mut machines = Vec::new();
        for pair in records[3..].chunks(2) {
            let (meta, sv) = (&pair[0], &pair[1]);
            if meta.tag != 4 || meta.data.len() != 6 || sv.tag != 5 || sv.shape.len() != 2 || sv.shape[1] as usize != d + 1 {
                return Err(bad("malformed machine"));
            }
            let mut support = Vec::new();
            let mut coef = Vec::new();
            for row in sv.data.chunks(d + 1) {
                coef.push(row[0]);
                support.push(row[1..].to_vec());
            }
            machines.push(BinarySvm {
                positive: meta.data[0] as usize,
                negative: meta.data[1] as usize,
                rho: meta.data[2],
                iterations: meta.data[3] as usize,
                max_violation: meta.data[4],
                converged: meta.data[5] != 0.0,
                support,
                coef,
            });
        }
        Ok(SvmModel {
            params,
            classes: cl.data.iter().map(|&c| c as usize).collect(),
            machines,
            normalizer,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
    }
}

/// Validation accuracy of one grid point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridScore {
    pub c: f64,
    pub gamma: f64,
    pub accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SvmGrid {
    pub c: Vec<f64>,
    pub gamma: Vec<f64>,
    pub tolerance: f64,
    pub max_iter: usize,
}

impl Default for SvmGrid {
    fn default() -> Self {
        SvmGrid {
            c: vec![0.1, 1.0, 10.0, 100.0],
            gamma: vec![0.01, 0.1, 1.0],
            tolerance: 1e-3,
            max_iter: 200_000,
        }
    }
}

/// Normalises raw training rows, fits every grid point and keeps the one
/// with the best validation accuracy (first in grid order on ties).
pub fn train_classifier(
    train: &[Vec<f64>],
    train_labels: &[usize],
    validation: &[Vec<f64>],
    validation_labels: &[usize],
    grid: &SvmGrid,
    exec: Execution,
) -> Result<(SvmModel, Vec<GridScore>)> {
    check_rows(train, train_labels)?;
    if grid.c.is_empty() || grid.gamma.is_empty() {
        return Err(Error::invalid("svm_grid", "empty parameter grid"));
    }
    let normalizer = Normalizer::fit(train)?;
    let x = normalizer.apply(train)?;
    let dist = DistanceMatrix::new(&x);
    let points: Vec<SvmParams> = grid
        .c
        .iter()
        .flat_map(|&c| {
            grid.gamma.iter().map(move |&gamma| SvmParams {
                c,
                gamma,
                tolerance: grid.tolerance,
                max_iter: grid.max_iter,
            })
        })
        .collect();
    let models = par::try_map(exec, &points, |&p| {
        let mut m = train_with(&x, train_labels, p, &dist)?;
        m.normalizer = normalizer.clone();
        Ok::<_, Error>(m)
    })?;
    let mut scores = Vec::with_capacity(models.len());
    let mut best = 0;
    for (i, m) in models.iter().enumerate() {
        let accuracy = if validation.is_empty() {
            let hits = m.predict(train).iter().zip(train_labels).filter(|(a, b)| a == b).count();
            hits as f64 / train.len() as f64
        } else {
            let hits = m
                .predict(validation)
                .iter()
                .zip(validation_labels)
                .filter(|(a, b)| a == b)
                .count();
            hits as f64 / validation.len() as f64
        };
        scores.push(GridScore {
            c: m.params.c,
            gamma: m.params.gamma,
            accuracy,
        });
        if accuracy > scores[best].accuracy {
            best = i;
        }
    }
    let model = models.into_iter().nth(best).expect("non-empty grid");
    Ok((model, scores))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_points() {
        let rows = vec![vec![0.0], vec![1.0]];
        let m = svm_train(&rows, &[0, 1], SvmParams { c: 10.0, gamma: 1.0, ..SvmParams::default() }).unwrap();
        assert_eq!(m.predict(&rows), vec![0, 1]);
        assert!(m.converged());
    }

    #[test]
    fn single_class_rejected() {
        let rows = vec![vec![0.0], vec![1.0]];
        assert!(svm_train(&rows, &[2, 2], SvmParams::default()).is_err());
    }

    #[test]
    fn roundtrip() {
        let rows: Vec<Vec<f64>> = (0..12).map(|i| vec![i as f64, (i * i % 5) as f64]).collect();
        let labels: Vec<usize> = (0..12).map(|i| i % 3).collect();
        let m = svm_train(&rows, &labels, SvmParams::default()).unwrap();
        let back = SvmModel::from_bytes(&m.to_bytes()).unwrap();
        assert_eq!(m, back);
    }
}
