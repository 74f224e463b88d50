use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{align_all, plan_for, run_cell, CellRun};
use crate::dataio::{EmbeddingMatrix, TargetTable};
use crate::error::{Error, Result};
use crate::numerics::{orthonormal_basis, Matrix};
use crate::pca::{fit_pca, project};
use crate::probes::AlphaGrid;
use crate::stats::{mean, paired_t, sample_sd};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ControlKind {
    /// Targets permuted within each participant.
    Shuffle,
    /// PCA components swapped for random orthonormal directions.
    RandomProjection,
    /// Every word occurrence gets a fixed Gaussian vector.
    RandomEmbedding,
    /// An external embedding file replaces the layer embeddings.
    StaticEmbedding,
    /// The pipeline rerun on a feature expected to carry no signal.
    NegativeFeature,
}

impl ControlKind {
    pub const ALL: [ControlKind; 5] = [
        ControlKind::Shuffle,
        ControlKind::RandomProjection,
        ControlKind::RandomEmbedding,
        ControlKind::StaticEmbedding,
        ControlKind::NegativeFeature,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ControlKind::Shuffle => "SHUFFLE",
            ControlKind::RandomProjection => "RANDOM_PROJECTION",
            ControlKind::RandomEmbedding => "RANDOM_EMBEDDING",
            ControlKind::StaticEmbedding => "STATIC_EMBEDDING",
            ControlKind::NegativeFeature => "NEGATIVE_FEATURE",
        }
    }
}

impl std::str::FromStr for ControlKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_uppercase().replace('-', "_");
        ControlKind::ALL
            .into_iter()
            .find(|k| k.name() == norm)
            .ok_or_else(|| Error::ConfigError(format!("unknown control kind '{s}'")))
    }
}

pub struct ControlInputs<'a> {
    /// Layer embeddings before PCA.
    pub embeddings: &'a EmbeddingMatrix,
    pub tables: &'a [TargetTable],
    pub feature: &'a str,
    pub pca_dim: usize,
    pub k_folds: usize,
    pub fold_seed: u64,
    pub grid: &'a AlphaGrid,
    pub seed: u64,
    pub n_permutations: usize,
    pub static_embeddings: Option<&'a EmbeddingMatrix>,
    pub negative_feature: Option<&'a str>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlOutcome {
    pub control_kind: ControlKind,
    pub feature_name: String,
    pub person_rho: f64,
    pub pop_rho: f64,
    pub delta: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub p: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub n_permutations: Option<usize>,
    /// Person-minus-population difference of each permutation.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub permutation_deltas: Option<Vec<f64>>,
}

fn reduce(emb: &EmbeddingMatrix, d: usize) -> Result<EmbeddingMatrix> {
    if emb.dim() <= d {
        return Ok(emb.clone());
    }
    let model = fit_pca(emb.values(), d)?;
    emb.with_values(project(&model, emb.values())?)
}

fn run_on(emb: &EmbeddingMatrix, inputs: &ControlInputs, feature: &str) -> Result<CellRun> {
    let plan = plan_for(emb, inputs.k_folds, inputs.fold_seed)?;
    let datasets = align_all(emb, inputs.tables, feature)?;
    run_cell(&datasets, &plan, inputs.grid)
}

fn outcome(kind: ControlKind, feature: &str, person: &[f64], pop: &[f64]) -> ControlOutcome {
    let p = paired_t(person, pop).ok().map(|t| t.p);
    let (pr, qr) = (mean(person), mean(pop));
    ControlOutcome {
        control_kind: kind,
        feature_name: feature.to_owned(),
        person_rho: pr,
        pop_rho: qr,
        delta: pr - qr,
        p,
        n_permutations: None,
        permutation_deltas: None,
    }
}

fn from_cell(kind: ControlKind, feature: &str, cell: &CellRun) -> ControlOutcome {
    outcome(kind, feature, &cell.person_rhos(), &cell.population_rhos())
}

/// Fixed Gaussian vector per word occurrence, drawn in sorted key order so
/// the vectors do not depend on row order.
pub fn random_word_vectors(emb: &EmbeddingMatrix, dim: usize, seed: u64) -> Result<EmbeddingMatrix> {
    let mut order: Vec<usize> = (0..emb.len()).collect();
    order.sort_by(|&a, &b| emb.index()[a].cmp(&emb.index()[b]));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = vec![0.0; emb.len() * dim];
    for &row in &order {
        for v in &mut data[row * dim..(row + 1) * dim] {
            *v = StandardNormal.sample(&mut rng);
        }
    }
    emb.with_values(Matrix::new(emb.len(), dim, data)?)
}

pub fn run_control(kind: ControlKind, inputs: &ControlInputs) -> Result<ControlOutcome> {
    let feature = inputs.feature;
    match kind {
        ControlKind::Shuffle => {
            if inputs.n_permutations == 0 {
                return Err(Error::InvalidArgument("shuffle control needs at least one permutation".into()));
            }
            let emb = reduce(inputs.embeddings, inputs.pca_dim)?;
            let plan = plan_for(&emb, inputs.k_folds, inputs.fold_seed)?;
            let datasets = align_all(&emb, inputs.tables, feature)?;
            let n = datasets.len();
            let (mut person, mut pop) = (vec![0.0; n], vec![0.0; n]);
            let mut deltas = Vec::with_capacity(inputs.n_permutations);
            for perm in 0..inputs.n_permutations {
                let shuffled = datasets
                    .iter()
                    .enumerate()
                    .map(|(i, d)| {
                        let mut rng = ChaCha8Rng::seed_from_u64(inputs.seed.wrapping_add(perm as u64));
                        rng.set_stream(i as u64);
                        let mut y = d.y.clone();
                        y.shuffle(&mut rng);
                        d.with_targets(y)
                    })
                    .collect::<Result<Vec<_>>>()?;
                let cell = run_cell(&shuffled, &plan, inputs.grid)?;
                for (acc, v) in person.iter_mut().zip(cell.person_rhos()) {
                    *acc += v / inputs.n_permutations as f64;
                }
                for (acc, v) in pop.iter_mut().zip(cell.population_rhos()) {
                    *acc += v / inputs.n_permutations as f64;
                }
                deltas.push(cell.person_mean() - cell.population_mean());
            }
            let mut out = outcome(kind, feature, &person, &pop);
            out.n_permutations = Some(inputs.n_permutations);
            out.permutation_deltas = Some(deltas);
            Ok(out)
        }
        ControlKind::RandomProjection => {
            let model = fit_pca(inputs.embeddings.values(), inputs.pca_dim)?;
            let basis = orthonormal_basis(inputs.seed, inputs.embeddings.dim(), inputs.pca_dim)?;
            let random = model.with_components(basis)?;
            let emb = inputs.embeddings.with_values(project(&random, inputs.embeddings.values())?)?;
            Ok(from_cell(kind, feature, &run_on(&emb, inputs, feature)?))
        }
        ControlKind::RandomEmbedding => {
            let emb = random_word_vectors(inputs.embeddings, inputs.pca_dim, inputs.seed)?;
            Ok(from_cell(kind, feature, &run_on(&emb, inputs, feature)?))
        }
        ControlKind::StaticEmbedding => {
            let stat = inputs
                .static_embeddings
                .ok_or_else(|| Error::ConfigError("static embedding control needs a static embedding file".into()))?;
            let emb = reduce(stat, inputs.pca_dim)?;
            Ok(from_cell(kind, feature, &run_on(&emb, inputs, feature)?))
        }
        ControlKind::NegativeFeature => {
            let neg = inputs
                .negative_feature
                .ok_or_else(|| Error::ConfigError("negative-feature control needs a feature name".into()))?;
            let emb = reduce(inputs.embeddings, inputs.pca_dim)?;
            Ok(from_cell(kind, neg, &run_on(&emb, inputs, neg)?))
        }
    }
}

/// Whether the mean permutation delta lies within two standard deviations
/// of the permutation distribution.
pub fn shuffle_delta_is_null(outcome: &ControlOutcome) -> Option<bool> {
    let d = outcome.permutation_deltas.as_ref()?;
    if d.len() < 2 {
        return None;
    }
    Some(mean(d).abs() < 2.0 * sample_sd(d))
}
