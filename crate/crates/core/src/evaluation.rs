//! Sentence-stratified k-fold cross-validation of person and population
//! probes.
//!
//! Every word of a sentence lands in the same fold. Alpha is chosen once per
//! probe cell: trained on folds `1..k`, validated on fold 0, then frozen for
//! all k test folds. Fold 0 is also scored as a test fold.

use std::collections::{BTreeMap, HashMap};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataio::{AlignedDataset, SentenceKey};
use crate::error::{Error, Result};
use crate::numerics::Matrix;
use crate::probes::{fit_ridge, pool, predict, select_alpha, AlphaGrid, RidgeProbe, Scope};
use crate::stats::{one_sample_t, spearman};

/// Fold used for alpha validation.
pub const ALPHA_FOLD: usize = 0;

pub const POPULATION_ID: &str = "POPULATION";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub seed: u64,
    #[serde(with = "assignment_list")]
    pub assignment: BTreeMap<SentenceKey, usize>,
}

mod assignment_list {
    use super::*;
    use serde::{Deserializer, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Entry {
        corpus_id: String,
        sentence_id: u32,
        fold: usize,
    }

    pub fn serialize<S: Serializer>(m: &BTreeMap<SentenceKey, usize>, s: S) -> std::result::Result<S::Ok, S::Error> {
        let entries: Vec<Entry> = m
            .iter()
            .map(|(k, f)| Entry {
                corpus_id: k.corpus_id.clone(),
                sentence_id: k.sentence_id,
                fold: *f,
            })
            .collect();
        entries.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<BTreeMap<SentenceKey, usize>, D::Error> {
        let entries = Vec::<Entry>::deserialize(d)?;
        Ok(entries
            .into_iter()
            .map(|e| {
                (
                    SentenceKey {
                        corpus_id: e.corpus_id,
                        sentence_id: e.sentence_id,
                    },
                    e.fold,
                )
            })
            .collect())
    }
}

impl FoldPlan {
    pub fn fold_of(&self, sentence: &SentenceKey) -> Result<usize> {
        self.assignment
            .get(sentence)
            .copied()
            .ok_or_else(|| Error::SentenceNotInPlan(sentence.to_string()))
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for f in self.assignment.values() {
            sizes[*f] += 1;
        }
        sizes
    }

    /// Fold id of every row in `dataset`.
    pub fn row_folds(&self, dataset: &AlignedDataset) -> Result<Vec<usize>> {
        let mut cache: HashMap<(&str, u32), usize> = HashMap::new();
        dataset
            .keys
            .iter()
            .map(|k| {
                if let Some(f) = cache.get(&(k.corpus_id.as_str(), k.sentence_id)) {
                    return Ok(*f);
                }
                let f = self.fold_of(&k.sentence())?;
                cache.insert((k.corpus_id.as_str(), k.sentence_id), f);
                Ok(f)
            })
            .collect()
    }
}

/// Seeded shuffle of the sorted sentence list, dealt round-robin into `k`
/// folds.
pub fn make_folds<I>(sentences: I, k: usize, seed: u64) -> Result<FoldPlan>
where
    I: IntoIterator<Item = SentenceKey>,
{
    let mut list: Vec<SentenceKey> = sentences.into_iter().collect();
    list.sort();
    list.dedup();
    if k < 2 {
        return Err(Error::InvalidArgument(format!("k must be at least 2, got {k}")));
    }
    if list.len() < k {
        return Err(Error::TooFewSentences { k, got: list.len() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    list.shuffle(&mut rng);
    let assignment = list.into_iter().enumerate().map(|(i, s)| (s, i % k)).collect();
    Ok(FoldPlan { k, seed, assignment })
}

/// Cross-validated scores of one probe cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub scope: Scope,
    pub participant_id: String,
    pub feature_name: String,
    pub layer: u32,
    pub input_dim: usize,
    pub per_fold_rho: Vec<f64>,
    pub mean_rho: f64,
    pub alpha_used: f64,
    pub alpha_fold: usize,
    pub n_words_per_fold: Vec<usize>,
    /// Folds whose correlation was undefined (constant predictions or
    /// targets) and were scored as 0.
    pub undefined_folds: usize,
}

/// Spearman correlation, or `None` when it is undefined on this fold.
pub(crate) fn fold_rho(pred: &[f64], y: &[f64]) -> Result<Option<f64>> {
    match spearman(pred, y) {
        Ok(r) => Ok(Some(r)),
        Err(Error::ConstantInput) | Err(Error::TooFewSamples { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Train/test row indices of each fold.
#[derive(Debug, Clone)]
pub struct FoldSplit {
    pub train: Vec<Vec<usize>>,
    pub test: Vec<Vec<usize>>,
}

impl FoldSplit {
    pub fn new(plan: &FoldPlan, dataset: &AlignedDataset) -> Result<Self> {
        let folds = plan.row_folds(dataset)?;
        let mut train = vec![Vec::new(); plan.k];
        let mut test = vec![Vec::new(); plan.k];
        for (row, f) in folds.iter().enumerate() {
            for (g, tr) in train.iter_mut().enumerate() {
                if g != *f {
                    tr.push(row);
                }
            }
            test[*f].push(row);
        }
        for (f, t) in test.iter().enumerate() {
            if t.is_empty() {
                return Err(Error::FoldEmpty {
                    fold: f,
                    side: "test",
                    participant: dataset.participant_id.clone(),
                });
            }
        }
        Ok(Self { train, test })
    }
}

pub(crate) fn score_folds(
    fold_probes: &[RidgeProbe],
    dataset: &AlignedDataset,
    split: &FoldSplit,
) -> Result<(Vec<f64>, usize)> {
    let mut rhos = Vec::with_capacity(fold_probes.len());
    let mut undefined = 0;
    for (probe, rows) in fold_probes.iter().zip(&split.test) {
        let x = dataset.x.select_rows(rows);
        let y: Vec<f64> = rows.iter().map(|&i| dataset.y[i]).collect();
        match fold_rho(&predict(probe, &x)?, &y)? {
            Some(r) => rhos.push(r),
            None => {
                undefined += 1;
                rhos.push(0.0);
            }
        }
    }
    Ok((rhos, undefined))
}

/// Cross-validation outcome including the per-fold probes.
#[derive(Debug, Clone)]
pub struct CvOutcome {
    pub result: ProbeResult,
    pub fold_probes: Vec<RidgeProbe>,
    pub validation_rho: f64,
}

impl CvOutcome {
    /// Element-wise mean of the per-fold weight vectors.
    pub fn mean_weights(&self) -> Vec<f64> {
        mean_weights(&self.fold_probes)
    }
}

pub fn mean_weights(probes: &[RidgeProbe]) -> Vec<f64> {
    let d = probes.first().map_or(0, |p| p.weights.len());
    let mut w = vec![0.0; d];
    for p in probes {
        for (a, b) in w.iter_mut().zip(&p.weights) {
            *a += b;
        }
    }
    w.iter_mut().for_each(|a| *a /= probes.len() as f64);
    w
}

pub(crate) fn rows_xy(dataset: &AlignedDataset, rows: &[usize]) -> (Matrix, Vec<f64>) {
    (
        dataset.x.select_rows(rows),
        rows.iter().map(|&i| dataset.y[i]).collect(),
    )
}

/// Person-probe cross-validation of one participant's dataset.
pub fn cross_validate(dataset: &AlignedDataset, plan: &FoldPlan, grid: &AlphaGrid) -> Result<CvOutcome> {
    let split = FoldSplit::new(plan, dataset)?;
    let (xt, yt) = rows_xy(dataset, &split.train[ALPHA_FOLD]);
    let (xv, yv) = rows_xy(dataset, &split.test[ALPHA_FOLD]);
    let (alpha, validation_rho) = select_alpha(&xt, &yt, &xv, &yv, grid)?;
    let fold_probes = split
        .train
        .iter()
        .map(|rows| {
            let (x, y) = rows_xy(dataset, rows);
            fit_ridge(&x, &y, alpha)
        })
        .collect::<Result<Vec<_>>>()?;
    let (per_fold_rho, undefined_folds) = score_folds(&fold_probes, dataset, &split)?;
    let result = ProbeResult {
        scope: Scope::Person,
        participant_id: dataset.participant_id.clone(),
        feature_name: dataset.feature_name.clone(),
        layer: dataset.layer,
        input_dim: dataset.x.cols(),
        mean_rho: crate::stats::mean(&per_fold_rho),
        per_fold_rho,
        alpha_used: alpha,
        alpha_fold: ALPHA_FOLD,
        n_words_per_fold: split.test.iter().map(Vec::len).collect(),
        undefined_folds,
    };
    Ok(CvOutcome {
        result,
        fold_probes,
        validation_rho,
    })
}

pub fn run_cv(dataset: &AlignedDataset, plan: &FoldPlan, grid: &AlphaGrid) -> Result<ProbeResult> {
    Ok(cross_validate(dataset, plan, grid)?.result)
}

/// Population-probe cross-validation: one probe per fold trained on every
/// participant's training rows, scored separately on each participant's
/// test rows.
#[derive(Debug, Clone)]
pub struct PopulationCv {
    pub alpha: f64,
    pub validation_rho: f64,
    pub fold_probes: Vec<RidgeProbe>,
    /// Population probe scored on each participant, in input order.
    pub per_participant: Vec<ProbeResult>,
    /// Per-fold means over participants.
    pub summary: ProbeResult,
}

pub fn population_cv(datasets: &[AlignedDataset], plan: &FoldPlan, grid: &AlphaGrid) -> Result<PopulationCv> {
    let first = datasets.first().ok_or(Error::Empty("population datasets"))?;
    let splits = datasets
        .iter()
        .map(|d| FoldSplit::new(plan, d))
        .collect::<Result<Vec<_>>>()?;
    let pooled_rows = |side: &dyn Fn(&FoldSplit) -> &Vec<usize>| -> Vec<AlignedDataset> {
        datasets
            .iter()
            .zip(&splits)
            .map(|(d, s)| d.subset(side(s)))
            .collect()
    };
    let train0 = pooled_rows(&|s| &s.train[ALPHA_FOLD]);
    let val0 = pooled_rows(&|s| &s.test[ALPHA_FOLD]);
    let (xt, yt) = pool(&train0.iter().collect::<Vec<_>>())?;
    let (xv, yv) = pool(&val0.iter().collect::<Vec<_>>())?;
    drop((train0, val0));
    let (alpha, validation_rho) = select_alpha(&xt, &yt, &xv, &yv, grid)?;
    drop((xt, yt, xv, yv));

    let fold_probes = (0..plan.k)
        .into_par_iter()
        .map(|f| {
            let parts = pooled_rows(&|s| &s.train[f]);
            let (x, y) = pool(&parts.iter().collect::<Vec<_>>())?;
            fit_ridge(&x, &y, alpha)
        })
        .collect::<Result<Vec<_>>>()?;

    let per_participant = datasets
        .par_iter()
        .zip(&splits)
        .map(|(d, s)| {
            let (per_fold_rho, undefined_folds) = score_folds(&fold_probes, d, s)?;
            Ok(ProbeResult {
                scope: Scope::Population,
                participant_id: d.participant_id.clone(),
                feature_name: d.feature_name.clone(),
                layer: d.layer,
                input_dim: d.x.cols(),
                mean_rho: crate::stats::mean(&per_fold_rho),
                per_fold_rho,
                alpha_used: alpha,
                alpha_fold: ALPHA_FOLD,
                n_words_per_fold: s.test.iter().map(Vec::len).collect(),
                undefined_folds,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let per_fold_rho: Vec<f64> = (0..plan.k)
        .map(|f| crate::stats::mean(&per_participant.iter().map(|r| r.per_fold_rho[f]).collect::<Vec<_>>()))
        .collect();
    let summary = ProbeResult {
        scope: Scope::Population,
        participant_id: POPULATION_ID.to_owned(),
        feature_name: first.feature_name.clone(),
        layer: first.layer,
        input_dim: first.x.cols(),
        mean_rho: crate::stats::mean(&per_fold_rho),
        per_fold_rho,
        alpha_used: alpha,
        alpha_fold: ALPHA_FOLD,
        n_words_per_fold: (0..plan.k)
            .map(|f| splits.iter().map(|s| s.test[f].len()).sum())
            .collect(),
        undefined_folds: per_participant.iter().map(|r| r.undefined_folds).sum(),
    };
    Ok(PopulationCv {
        alpha,
        validation_rho,
        fold_probes,
        per_participant,
        summary,
    })
}

/// Paired person-vs-population comparison across participants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedComparison {
    pub feature_name: String,
    pub layer: u32,
    pub n: usize,
    pub person_mean_rho: f64,
    pub population_mean_rho: f64,
    pub delta_mean: f64,
    pub t: f64,
    pub df: f64,
    pub p: f64,
    pub ln_p: f64,
}

/// `Δᵢ = ρ̄ᵢ(person) − ρ̄ᵢ(population on i)`, tested with a paired t-test.
pub fn paired_compare(person: &[ProbeResult], population: &[ProbeResult]) -> Result<PairedComparison> {
    let first = person.first().ok_or(Error::Empty("person results"))?;
    let by_id: HashMap<&str, &ProbeResult> = population
        .iter()
        .map(|r| (r.participant_id.as_str(), r))
        .collect();
    let mut a = Vec::with_capacity(person.len());
    let mut b = Vec::with_capacity(person.len());
    for r in person {
        if r.feature_name != first.feature_name || r.layer != first.layer {
            return Err(Error::InvalidArgument("person results span several cells".into()));
        }
        let pop = by_id
            .get(r.participant_id.as_str())
            .ok_or_else(|| Error::MissingProbe(r.participant_id.clone()))?;
        if pop.feature_name != r.feature_name || pop.layer != r.layer {
            return Err(Error::InvalidArgument(format!(
                "population result for {} belongs to another cell",
                r.participant_id
            )));
        }
        a.push(r.mean_rho);
        b.push(pop.mean_rho);
    }
    let diffs: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
    let test = one_sample_t(&diffs)?;
    Ok(PairedComparison {
        feature_name: first.feature_name.clone(),
        layer: first.layer,
        n: diffs.len(),
        person_mean_rho: crate::stats::mean(&a),
        population_mean_rho: crate::stats::mean(&b),
        delta_mean: test.mean_diff,
        t: test.t,
        df: test.df,
        p: test.p,
        ln_p: test.ln_p,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::WordKey;
    use rand_distr::{Distribution, StandardNormal};

    fn sentences(n: u32) -> Vec<SentenceKey> {
        (0..n)
            .map(|i| SentenceKey {
                corpus_id: "c".into(),
                sentence_id: i,
            })
            .collect()
    }

    fn planted(seed: u64, n_sent: u32, words: u32, noise: f64) -> AlignedDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = 5;
        let beta = [1.0, -0.5, 0.25, 0.0, 2.0];
        let mut keys = Vec::new();
        let mut data = Vec::new();
        let mut y = Vec::new();
        for s in 0..n_sent {
            for w in 0..words {
                keys.push(WordKey::new("c", s, w, "w"));
                let row: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
                let e: f64 = StandardNormal.sample(&mut rng);
                y.push(row.iter().zip(beta).map(|(a, b)| a * b).sum::<f64>() + noise * e);
                data.extend(row);
            }
        }
        AlignedDataset {
            participant_id: format!("p{seed}"),
            feature_name: "f".into(),
            layer: 1,
            x: Matrix::new(keys.len(), d, data).unwrap(),
            keys,
            y,
            coverage: 1.0,
        }
    }

    #[test]
    fn folds_exact_and_remainder() {
        let p = make_folds(sentences(10), 5, 42).unwrap();
        assert_eq!(p.fold_sizes(), vec![2; 5]);
        let p = make_folds(sentences(11), 5, 42).unwrap();
        let mut sizes = p.fold_sizes();
        sizes.sort();
        assert_eq!(sizes, vec![2, 2, 2, 2, 3]);
        assert_eq!(make_folds(sentences(11), 5, 42).unwrap(), p);
        assert!(matches!(
            make_folds(sentences(3), 5, 1),
            Err(Error::TooFewSentences { k: 5, got: 3 })
        ));
    }

    #[test]
    fn folds_ignore_input_order() {
        let mut s = sentences(23);
        let a = make_folds(s.clone(), 5, 9).unwrap();
        s.reverse();
        assert_eq!(make_folds(s, 5, 9).unwrap(), a);
    }

    #[test]
    fn noiseless_signal_is_perfectly_ranked() {
        let d = planted(1, 40, 10, 0.0);
        let plan = make_folds(sentences(40), 5, 42).unwrap();
        let r = run_cv(&d, &plan, &AlphaGrid::default()).unwrap();
        assert!(r.mean_rho >= 0.999, "{}", r.mean_rho);
        assert_eq!(r.per_fold_rho.len(), 5);
        assert_eq!(r.n_words_per_fold.iter().sum::<usize>(), 400);
        assert!((r.mean_rho - crate::stats::mean(&r.per_fold_rho)).abs() < 1e-15);
    }

    #[test]
    fn train_and_test_sentences_disjoint() {
        let d = planted(2, 30, 7, 1.0);
        let plan = make_folds(sentences(30), 5, 3).unwrap();
        let split = FoldSplit::new(&plan, &d).unwrap();
        let mut all_test: Vec<usize> = Vec::new();
        for f in 0..5 {
            let tr: std::collections::HashSet<_> = split.train[f].iter().map(|&i| d.keys[i].sentence_id).collect();
            let te: std::collections::HashSet<_> = split.test[f].iter().map(|&i| d.keys[i].sentence_id).collect();
            assert!(tr.is_disjoint(&te));
            assert_eq!(split.train[f].len() + split.test[f].len(), d.len());
            all_test.extend(&split.test[f]);
        }
        all_test.sort();
        assert_eq!(all_test, (0..d.len()).collect::<Vec<_>>());
    }

    #[test]
    fn pure_noise_is_near_zero() {
        let mut within = 0;
        for seed in 0..20 {
            let mut d = planted(100 + seed, 50, 20, 1.0);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            d.y = (0..d.len()).map(|_| StandardNormal.sample(&mut rng)).collect();
            let plan = make_folds(sentences(50), 5, seed).unwrap();
            let r = run_cv(&d, &plan, &AlphaGrid::default()).unwrap();
            if r.mean_rho.abs() <= 3.0 / (200f64).sqrt() {
                within += 1;
            }
        }
        assert!(within >= 19);
    }

    #[test]
    fn fold_without_test_words() {
        let mut d = planted(3, 10, 5, 1.0);
        let plan = make_folds(sentences(10), 5, 1).unwrap();
        let dropped_fold = 2;
        let keep: Vec<usize> = (0..d.len())
            .filter(|&i| plan.fold_of(&d.keys[i].sentence()).unwrap() != dropped_fold)
            .collect();
        d = d.subset(&keep);
        assert!(matches!(
            run_cv(&d, &plan, &AlphaGrid::default()),
            Err(Error::FoldEmpty { fold: 2, .. })
        ));
    }

    #[test]
    fn result_invariant_to_row_order() {
        let d = planted(4, 30, 8, 0.7);
        let plan = make_folds(sentences(30), 5, 5).unwrap();
        let a = run_cv(&d, &plan, &AlphaGrid::default()).unwrap();
        let rev: Vec<usize> = (0..d.len()).rev().collect();
        let b = run_cv(&d.subset(&rev), &plan, &AlphaGrid::default()).unwrap();
        assert_eq!(a.alpha_used, b.alpha_used);
        for (x, y) in a.per_fold_rho.iter().zip(&b.per_fold_rho) {
            assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn population_uses_same_rows_and_pairs() {
        let ds: Vec<AlignedDataset> = (0..4).map(|s| planted(10 + s, 25, 6, 1.0)).collect();
        let plan = make_folds(sentences(25), 5, 42).unwrap();
        let pop = population_cv(&ds, &plan, &AlphaGrid::default()).unwrap();
        let person: Vec<ProbeResult> = ds
            .iter()
            .map(|d| run_cv(d, &plan, &AlphaGrid::default()).unwrap())
            .collect();
        for (a, b) in person.iter().zip(&pop.per_participant) {
            assert_eq!(a.n_words_per_fold, b.n_words_per_fold);
        }
        let cmp = paired_compare(&person, &pop.per_participant).unwrap();
        assert_eq!(cmp.n, 4);
        assert!(matches!(
            paired_compare(&person, &person),
            Err(Error::ZeroVariance)
        ));
    }
}
