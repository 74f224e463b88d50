//! Ridge regression probes with an unpenalized intercept.
//!
//! Predictors and targets are centered before solving
//! `(XcᵀXc + αI) β = Xcᵀyc`; the intercept is recovered as
//! `mean(y) - mean(X)·β`. Inputs are not variance-standardized.

use serde::{Deserialize, Serialize};

use crate::dataio::AlignedDataset;
use crate::error::{Error, Result};
use crate::numerics::{dot, Cholesky, Matrix};
use crate::stats::spearman;

/// Regularization strengths searched during alpha selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct AlphaGrid {
    values: Vec<f64>,
}

impl AlphaGrid {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidGrid("empty".into()));
        }
        if values.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::InvalidGrid("values must be finite and > 0".into()));
        }
        if values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidGrid("values must be strictly increasing".into()));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

impl Default for AlphaGrid {
    fn default() -> Self {
        Self {
            values: vec![0.01, 0.1, 1.0, 10.0, 100.0, 1000.0],
        }
    }
}

impl TryFrom<Vec<f64>> for AlphaGrid {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<AlphaGrid> for Vec<f64> {
    fn from(g: AlphaGrid) -> Self {
        g.values
    }
}

/// Who a probe was trained on.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    Person,
    Population,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeProbe {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub alpha: f64,
}

/// A probe together with the cell it belongs to, as written to disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledProbe {
    pub scope: Scope,
    pub participant_id: String,
    pub feature_name: String,
    pub layer: u32,
    #[serde(flatten)]
    pub probe: RidgeProbe,
}

/// Centered sufficient statistics of one training set; solving for several
/// alphas reuses them.
#[derive(Debug, Clone)]
pub struct RidgeSystem {
    x_mean: Vec<f64>,
    y_mean: f64,
    gram: Matrix,
    xty: Vec<f64>,
}

impl RidgeSystem {
    pub fn new(x: &Matrix, y: &[f64]) -> Result<Self> {
        if x.rows() != y.len() {
            return Err(Error::LengthMismatch(x.rows(), y.len()));
        }
        let d = x.cols();
        if x.rows() < d + 1 {
            return Err(Error::TooFewRows {
                needed: d + 1,
                got: x.rows(),
            });
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("ridge targets"));
        }
        let x_mean = x.column_means();
        let y_mean = y.iter().sum::<f64>() / y.len() as f64;
        let gram = x.centered_cross_product(&x_mean);
        let mut xty = vec![0.0; d];
        for (i, yi) in y.iter().enumerate() {
            let yc = yi - y_mean;
            for ((acc, xv), m) in xty.iter_mut().zip(x.row(i)).zip(&x_mean) {
                *acc += (xv - m) * yc;
            }
        }
        Ok(Self {
            x_mean,
            y_mean,
            gram,
            xty,
        })
    }

    pub fn solve(&self, alpha: f64) -> Result<RidgeProbe> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Error::InvalidArgument(format!("alpha must be > 0, got {alpha}")));
        }
        let mut a = self.gram.clone();
        for i in 0..a.rows() {
            a.set(i, i, a.get(i, i) + alpha);
        }
        let weights = Cholesky::factor(&a)?.solve(&self.xty)?;
        let bias = self.y_mean - dot(&self.x_mean, &weights);
        Ok(RidgeProbe {
            weights,
            bias,
            alpha,
        })
    }
}

pub fn fit_ridge(x: &Matrix, y: &[f64], alpha: f64) -> Result<RidgeProbe> {
    RidgeSystem::new(x, y)?.solve(alpha)
}

pub fn predict(probe: &RidgeProbe, x: &Matrix) -> Result<Vec<f64>> {
    if x.cols() != probe.weights.len() {
        return Err(Error::DimMismatch {
            expected: probe.weights.len(),
            got: x.cols(),
        });
    }
    Ok((0..x.rows())
        .map(|i| dot(x.row(i), &probe.weights) + probe.bias)
        .collect())
}

/// Picks the grid value whose fit on the training rows maximizes Spearman
/// correlation on the validation rows; ties go to the larger alpha. Alphas
/// whose validation correlation is undefined are skipped.
pub fn select_alpha(
    x_train: &Matrix,
    y_train: &[f64],
    x_val: &Matrix,
    y_val: &[f64],
    grid: &AlphaGrid,
) -> Result<(f64, f64)> {
    if x_val.rows() == 0 {
        return Err(Error::Empty("validation rows"));
    }
    let system = RidgeSystem::new(x_train, y_train)?;
    let mut best: Option<(f64, f64)> = None;
    for &alpha in grid.values() {
        let probe = system.solve(alpha)?;
        let pred = predict(&probe, x_val)?;
        let rho = match spearman(&pred, y_val) {
            Ok(r) => r,
            Err(Error::ConstantInput) | Err(Error::TooFewSamples { .. }) => continue,
            Err(e) => return Err(e),
        };
        if best.is_none_or(|(_, b)| rho >= b) {
            best = Some((alpha, rho));
        }
    }
    best.ok_or(Error::DegenerateValidation)
}

/// Ridge fit on the row-concatenation of every participant's aligned rows.
pub fn fit_population(datasets: &[&AlignedDataset], alpha: f64) -> Result<RidgeProbe> {
    let (x, y) = pool(datasets)?;
    fit_ridge(&x, &y, alpha)
}

pub(crate) fn pool(datasets: &[&AlignedDataset]) -> Result<(Matrix, Vec<f64>)> {
    let first = datasets.first().ok_or(Error::Empty("population datasets"))?;
    if let Some(other) = datasets.iter().find(|d| d.feature_name != first.feature_name) {
        return Err(Error::InvalidArgument(format!(
            "population pooling mixes features {} and {}",
            first.feature_name, other.feature_name
        )));
    }
    let x = Matrix::vstack(&datasets.iter().map(|d| &d.x).collect::<Vec<_>>())?;
    let y = datasets.iter().flat_map(|d| d.y.iter().copied()).collect();
    Ok((x, y))
}
