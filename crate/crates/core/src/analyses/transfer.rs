use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataio::AlignedDataset;
use crate::error::{Error, Result};
use crate::evaluation::{score_folds, CvOutcome, FoldPlan, FoldSplit};
use crate::numerics::Matrix;
use crate::stats::{mean, paired_t};

/// Cell `(i, j)` is participant i's probe scored on participant j's
/// held-out sentences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferMatrix {
    pub participant_ids: Vec<String>,
    pub rho: Matrix,
    pub self_mean: f64,
    pub other_mean: f64,
    pub t: f64,
    pub p_self_vs_other: f64,
}

/// Uses each participant's per-fold probes from `person`; fold `f` of probe
/// i is scored on the fold-`f` test rows of participant j, so no sentence is
/// ever on both sides.
pub fn transfer_matrix(person: &[CvOutcome], datasets: &[AlignedDataset], plan: &FoldPlan) -> Result<TransferMatrix> {
    if datasets.len() < 2 {
        return Err(Error::TooFewSamples {
            needed: 2,
            got: datasets.len(),
        });
    }
    let probes = datasets
        .iter()
        .map(|d| {
            person
                .iter()
                .find(|o| o.result.participant_id == d.participant_id)
                .map(|o| &o.fold_probes)
                .ok_or_else(|| Error::MissingProbe(d.participant_id.clone()))
        })
        .collect::<Result<Vec<_>>>()?;
    let splits = datasets
        .iter()
        .map(|d| FoldSplit::new(plan, d))
        .collect::<Result<Vec<_>>>()?;
    let n = datasets.len();
    let rows = probes
        .par_iter()
        .map(|fold_probes| {
            datasets
                .iter()
                .zip(&splits)
                .map(|(d, s)| Ok(mean(&score_folds(fold_probes, d, s)?.0)))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let rho = Matrix::from_rows(&rows)?;
    let diag: Vec<f64> = (0..n).map(|i| rho.get(i, i)).collect();
    let other: Vec<f64> = (0..n)
        .map(|i| (0..n).filter(|&j| j != i).map(|j| rho.get(i, j)).sum::<f64>() / (n - 1) as f64)
        .collect();
    let (t, p) = match paired_t(&diag, &other) {
        Ok(tt) => (tt.t, tt.p),
        Err(Error::ZeroVariance) => (0.0, 1.0),
        Err(e) => return Err(e),
    };
    Ok(TransferMatrix {
        participant_ids: datasets.iter().map(|d| d.participant_id.clone()).collect(),
        self_mean: mean(&diag),
        other_mean: mean(&other),
        rho,
        t,
        p_self_vs_other: p,
    })
}
