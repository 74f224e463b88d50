use serde::{Deserialize, Serialize};

use crate::dataio::AlignedDataset;
use crate::error::{Error, Result};
use crate::evaluation::{fold_rho, rows_xy, CvOutcome, FoldPlan, FoldSplit, ProbeResult};
use crate::probes::{fit_ridge, predict, RidgeProbe, Scope};
use crate::stats::{mean, one_sample_t};

/// Scores a participant's person probe against what the population probe
/// leaves unexplained: on each fold the target is replaced by
/// `y - population(x)`.
///
/// With `retrain`, the person probe is refit on training-row residuals at its
/// original alpha instead of being reused as trained.
pub fn residual_independence(
    person: &CvOutcome,
    population_folds: &[RidgeProbe],
    dataset: &AlignedDataset,
    plan: &FoldPlan,
    retrain: bool,
) -> Result<ProbeResult> {
    if person.result.participant_id != dataset.participant_id {
        return Err(Error::MissingProbe(dataset.participant_id.clone()));
    }
    if person.fold_probes.len() != plan.k || population_folds.len() != plan.k {
        return Err(Error::InvalidArgument(format!(
            "expected {} fold probes, got {} person and {} population",
            plan.k,
            person.fold_probes.len(),
            population_folds.len()
        )));
    }
    let split = FoldSplit::new(plan, dataset)?;
    let alpha = person.result.alpha_used;
    let mut per_fold_rho = Vec::with_capacity(plan.k);
    let mut undefined_folds = 0;
    for f in 0..plan.k {
        let (x_test, y_test) = rows_xy(dataset, &split.test[f]);
        let pop_pred = predict(&population_folds[f], &x_test)?;
        let resid: Vec<f64> = y_test.iter().zip(&pop_pred).map(|(y, p)| y - p).collect();
        let probe = if retrain {
            let (x_train, y_train) = rows_xy(dataset, &split.train[f]);
            let pop_train = predict(&population_folds[f], &x_train)?;
            let r_train: Vec<f64> = y_train.iter().zip(&pop_train).map(|(y, p)| y - p).collect();
            fit_ridge(&x_train, &r_train, alpha)?
        } else {
            person.fold_probes[f].clone()
        };
        match fold_rho(&predict(&probe, &x_test)?, &resid)? {
            Some(r) => per_fold_rho.push(r),
            None => {
                undefined_folds += 1;
                per_fold_rho.push(0.0);
            }
        }
    }
    Ok(ProbeResult {
        scope: Scope::Person,
        participant_id: dataset.participant_id.clone(),
        feature_name: dataset.feature_name.clone(),
        layer: dataset.layer,
        input_dim: dataset.x.cols(),
        mean_rho: mean(&per_fold_rho),
        per_fold_rho,
        alpha_used: alpha,
        alpha_fold: person.result.alpha_fold,
        n_words_per_fold: split.test.iter().map(Vec::len).collect(),
        undefined_folds,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualSummary {
    pub retrained: bool,
    pub mean_rho: f64,
    pub unresidualized_mean_rho: f64,
    /// One-sample t-test of per-participant residual correlation against 0.
    pub t: Option<f64>,
    pub p: Option<f64>,
    pub per_participant: Vec<ProbeResult>,
}

impl ResidualSummary {
    pub fn new(retrained: bool, per_participant: Vec<ProbeResult>, unresidualized_mean_rho: f64) -> Self {
        let rhos: Vec<f64> = per_participant.iter().map(|r| r.mean_rho).collect();
        let test = one_sample_t(&rhos).ok();
        Self {
            retrained,
            mean_rho: mean(&rhos),
            unresidualized_mean_rho,
            t: test.as_ref().map(|t| t.t),
            p: test.map(|t| t.p),
            per_participant,
        }
    }
}
