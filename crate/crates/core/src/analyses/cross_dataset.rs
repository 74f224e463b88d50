use serde::{Deserialize, Serialize};

use super::{align_all, plan_for};
use crate::dataio::{EmbeddingMatrix, TargetTable};
use crate::error::{Error, Result};
use crate::evaluation::{population_cv, rows_xy, FoldSplit, ALPHA_FOLD};
use crate::probes::{fit_population, predict, select_alpha, AlphaGrid};
use crate::stats::mean;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossDatasetResult {
    pub layer: u32,
    pub pca_dim: usize,
    pub train_corpus: String,
    pub test_corpus: String,
    pub feature_name: String,
    /// Population cross-validation inside the test corpus.
    pub within_rho: f64,
    /// Population probe fit on all of the train corpus, scored on all of the
    /// test corpus, averaged over test participants.
    pub cross_rho: f64,
    pub retention: f64,
    pub alpha_within: f64,
    pub alpha_cross: f64,
}

/// `emb` must hold both corpora in one shared (already reduced) space.
/// Alpha for the cross probe is chosen on fold 0 of the train corpus.
pub fn cross_dataset_transfer(
    emb: &EmbeddingMatrix,
    tables: &[TargetTable],
    train_corpus: &str,
    test_corpus: &str,
    feature: &str,
    k_folds: usize,
    fold_seed: u64,
    grid: &AlphaGrid,
) -> Result<CrossDatasetResult> {
    let pick = |corpus: &str| -> Result<(EmbeddingMatrix, Vec<TargetTable>)> {
        let tabs: Vec<TargetTable> = tables.iter().filter(|t| t.corpus_id == corpus).cloned().collect();
        if tabs.is_empty() || !emb.corpora().iter().any(|c| c == corpus) {
            return Err(Error::CorpusMissing(corpus.to_owned()));
        }
        Ok((emb.filter_corpus(corpus)?, tabs))
    };
    let (train_emb, train_tabs) = pick(train_corpus)?;
    let (test_emb, test_tabs) = pick(test_corpus)?;

    let test_plan = plan_for(&test_emb, k_folds, fold_seed)?;
    let test_sets = align_all(&test_emb, &test_tabs, feature)?;
    let within = population_cv(&test_sets, &test_plan, grid)?;

    let train_plan = plan_for(&train_emb, k_folds, fold_seed)?;
    let train_sets = align_all(&train_emb, &train_tabs, feature)?;
    let splits = train_sets
        .iter()
        .map(|d| FoldSplit::new(&train_plan, d))
        .collect::<Result<Vec<_>>>()?;
    let gather = |test_side: bool| -> (Vec<_>, Vec<f64>) {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for (d, s) in train_sets.iter().zip(&splits) {
            let rows = if test_side { &s.test[ALPHA_FOLD] } else { &s.train[ALPHA_FOLD] };
            let (x, y) = rows_xy(d, rows);
            xs.push(x);
            ys.extend(y);
        }
        (xs, ys)
    };
    let (xt, yt) = gather(false);
    let (xv, yv) = gather(true);
    let xt = crate::numerics::Matrix::vstack(&xt.iter().collect::<Vec<_>>())?;
    let xv = crate::numerics::Matrix::vstack(&xv.iter().collect::<Vec<_>>())?;
    let (alpha_cross, _) = select_alpha(&xt, &yt, &xv, &yv, grid)?;
    drop((xt, yt, xv, yv));

    let probe = fit_population(&train_sets.iter().collect::<Vec<_>>(), alpha_cross)?;
    let cross = test_sets
        .iter()
        .map(|d| {
            let pred = predict(&probe, &d.x)?;
            Ok(crate::evaluation::fold_rho(&pred, &d.y)?.unwrap_or(0.0))
        })
        .collect::<Result<Vec<f64>>>()?;
    let within_rho = within.summary.mean_rho;
    let cross_rho = mean(&cross);
    Ok(CrossDatasetResult {
        layer: emb.layer,
        pca_dim: emb.dim(),
        train_corpus: train_corpus.to_owned(),
        test_corpus: test_corpus.to_owned(),
        feature_name: feature.to_owned(),
        within_rho,
        cross_rho,
        retention: if within_rho != 0.0 { cross_rho / within_rho } else { 0.0 },
        alpha_within: within.alpha,
        alpha_cross,
    })
}
