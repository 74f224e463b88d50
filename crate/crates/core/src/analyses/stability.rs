use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataio::AlignedDataset;
use crate::error::{Error, Result};
use crate::probes::{fit_ridge, select_alpha, AlphaGrid};
use crate::stats::{cosine, mean};

/// One in this many sentences of each half goes to the internal validation
/// split used to choose alpha.
const VALIDATION_EVERY: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitHalf {
    pub participant_id: String,
    pub cosine: f64,
    pub alpha_first: f64,
    pub alpha_second: f64,
    pub n_first: usize,
    pub n_second: usize,
}

/// Rows ordered by (corpus, sentence, word position) stand in for reading
/// order. The first half of that order and the second half each get their
/// own probe; alpha is chosen inside each half on every fifth sentence.
pub fn split_half(dataset: &AlignedDataset, grid: &AlphaGrid) -> Result<SplitHalf> {
    let d = dataset.x.cols();
    let n = dataset.len();
    if n < 2 * (d + 1) {
        return Err(Error::TooFewRows {
            needed: 2 * (d + 1),
            got: n,
        });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        let (a, b) = (&dataset.keys[i], &dataset.keys[j]);
        (&a.corpus_id, a.sentence_id, a.word_pos).cmp(&(&b.corpus_id, b.sentence_id, b.word_pos))
    });
    let (first, second) = order.split_at(n / 2);
    let a = fit_half(dataset, first, grid)?;
    let b = fit_half(dataset, second, grid)?;
    Ok(SplitHalf {
        participant_id: dataset.participant_id.clone(),
        cosine: cosine(&a.0, &b.0)?,
        alpha_first: a.1,
        alpha_second: b.1,
        n_first: first.len(),
        n_second: second.len(),
    })
}

fn fit_half(dataset: &AlignedDataset, rows: &[usize], grid: &AlphaGrid) -> Result<(Vec<f64>, f64)> {
    // Sentence rank within the half decides the internal split, so two halves
    // with the same layout get the same split whatever their sentence ids.
    let mut rank = 0usize;
    let mut prev: Option<(&str, u32)> = None;
    let (mut train, mut val) = (Vec::new(), Vec::new());
    for &i in rows {
        let k = &dataset.keys[i];
        let id = (k.corpus_id.as_str(), k.sentence_id);
        if prev.is_some_and(|p| p != id) {
            rank += 1;
        }
        prev = Some(id);
        if rank % VALIDATION_EVERY == VALIDATION_EVERY - 1 {
            val.push(i);
        } else {
            train.push(i);
        }
    }
    if val.is_empty() {
        // Fewer than five sentences: fall back to the last fifth of rows.
        let cut = rows.len() - rows.len() / VALIDATION_EVERY;
        train = rows[..cut].to_vec();
        val = rows[cut..].to_vec();
    }
    let part = |idx: &[usize]| (dataset.x.select_rows(idx), idx.iter().map(|&i| dataset.y[i]).collect::<Vec<_>>());
    let (xt, yt) = part(&train);
    let (xv, yv) = part(&val);
    let (alpha, _) = select_alpha(&xt, &yt, &xv, &yv, grid)?;
    let (x, y) = part(rows);
    Ok((fit_ridge(&x, &y, alpha)?.weights, alpha))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitHalfSummary {
    pub mean_cosine: f64,
    pub per_participant: Vec<SplitHalf>,
}

pub fn split_half_all(datasets: &[AlignedDataset], grid: &AlphaGrid) -> Result<SplitHalfSummary> {
    let per_participant = datasets
        .par_iter()
        .map(|d| split_half(d, grid))
        .collect::<Result<Vec<_>>>()?;
    Ok(SplitHalfSummary {
        mean_cosine: mean(&per_participant.iter().map(|s| s.cosine).collect::<Vec<_>>()),
        per_participant,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightGeometry {
    pub mean_pairwise_cosine: f64,
    pub mean_cosine_to_population: f64,
    pub n_pairs: usize,
}

/// Cosine structure of fold-averaged person weight vectors, among
/// themselves and against the population weights.
pub fn weight_geometry(person: &[Vec<f64>], population: &[f64]) -> Result<WeightGeometry> {
    if person.len() < 2 {
        return Err(Error::TooFewSamples {
            needed: 2,
            got: person.len(),
        });
    }
    for w in person {
        if w.len() != population.len() {
            return Err(Error::DimMismatch {
                expected: population.len(),
                got: w.len(),
            });
        }
    }
    let mut pair = Vec::new();
    for i in 0..person.len() {
        for j in i + 1..person.len() {
            pair.push(cosine(&person[i], &person[j])?);
        }
    }
    let to_pop = person
        .iter()
        .map(|w| cosine(w, population))
        .collect::<Result<Vec<_>>>()?;
    Ok(WeightGeometry {
        mean_pairwise_cosine: mean(&pair),
        mean_cosine_to_population: mean(&to_pop),
        n_pairs: pair.len(),
    })
}
