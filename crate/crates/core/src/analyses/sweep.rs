//! The (layer × PCA dimension × feature) grid, with any enabled battery items
//! run on every cell.

use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::confounds::{residualize_all, NuisanceFit};
use super::{
    align_all, plan_for, residual_independence, run_cell, run_control, split_half_all, transfer_matrix,
    weight_geometry, ControlInputs, ControlKind, ControlOutcome, ParticipantRho, ResidualSummary, SplitHalfSummary,
    TransferMatrix, WeightGeometry,
};
use crate::dataio::{read_embeddings, EmbeddingMatrix, TargetTable};
use crate::error::{Error, Result};
use crate::evaluation::{mean_weights, FoldPlan, PairedComparison, ProbeResult, ALPHA_FOLD};
use crate::pca::{fit_pca, project, PcaModel};
use crate::probes::{AlphaGrid, LabeledProbe, Scope};
use crate::stats::{bootstrap_ci, cohens_d_paired, BootStat, BootstrapCi};

pub const REPORT_VERSION: u32 = 1;

/// Substitutes `{layer}` in `pattern`.
pub fn layer_path(pattern: &str, layer: u32) -> PathBuf {
    PathBuf::from(pattern.replace("{layer}", &layer.to_string()))
}

/// Reads one EMB1 file per layer, in parallel.
pub fn load_layers(pattern: &str, layers: &[u32]) -> Result<Vec<EmbeddingMatrix>> {
    for &layer in layers {
        let path = layer_path(pattern, layer);
        if !path.is_file() {
            return Err(Error::MissingLayerFile { layer, path });
        }
    }
    layers
        .par_iter()
        .map(|&layer| {
            let path = layer_path(pattern, layer);
            let emb = read_embeddings(&path)?;
            if emb.layer != layer {
                return Err(Error::ConfigError(format!(
                    "{} holds layer {}, expected {layer}",
                    path.display(),
                    emb.layer
                )));
            }
            Ok(emb)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSettings {
    pub resamples: usize,
    pub confidence: f64,
    pub seed: u64,
}

/// Battery items to run on every cell.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Battery {
    pub transfer: bool,
    pub split_half: bool,
    pub geometry: bool,
    pub residual: bool,
    pub residual_retrain: bool,
    pub confounds: bool,
    pub controls: Vec<ControlKind>,
}

pub struct SweepOptions<'a> {
    pub pca_dims: Vec<usize>,
    pub features: Vec<String>,
    pub k_folds: usize,
    pub fold_seed: u64,
    pub grid: AlphaGrid,
    pub bootstrap: Option<BootstrapSettings>,
    pub battery: Battery,
    pub control_seed: u64,
    pub n_permutations: usize,
    pub static_embeddings: Option<&'a EmbeddingMatrix>,
    pub negative_feature: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaSummary {
    pub layer: u32,
    pub pca_dim: usize,
    pub input_dim: usize,
    pub n_samples: usize,
    pub variance_retained: f64,
    pub explained_variance_ratio: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfoundSummary {
    pub mean_r_squared: f64,
    pub fits: Vec<NuisanceFit>,
    pub person_rho: f64,
    pub population_rho: f64,
    pub comparison: Option<PairedComparison>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub layer: u32,
    pub pca_dim: usize,
    pub feature: String,
    pub person: Vec<ProbeResult>,
    /// Population probe summary: per-fold means over participants.
    pub population: ProbeResult,
    pub population_by_participant: Vec<ParticipantRho>,
    pub person_mean_rho: f64,
    pub population_mean_rho: f64,
    pub comparison: Option<PairedComparison>,
    pub cohens_d: Option<f64>,
    pub delta_ci: Option<BootstrapCi>,
    pub person_ci: Option<BootstrapCi>,
    pub population_ci: Option<BootstrapCi>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub transfer: Option<TransferMatrix>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub geometry: Option<WeightGeometry>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub split_half: Option<SplitHalfSummary>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub residual: Vec<ResidualSummary>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub confounds: Option<ConfoundSummary>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub controls: Vec<ControlOutcome>,
}

impl CellReport {
    /// Every probe result of the cell: one per participant plus the
    /// population summary.
    pub fn probe_results(&self) -> impl Iterator<Item = &ProbeResult> {
        self.person.iter().chain(std::iter::once(&self.population))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepMetadata {
    pub k_folds: usize,
    pub fold_seed: u64,
    pub alpha_grid: Vec<f64>,
    pub alpha_fold: usize,
    pub bootstrap: Option<BootstrapSettings>,
    pub control_seed: u64,
    pub n_permutations: usize,
    pub participants: Vec<String>,
    /// PCA is fit on one row per word occurrence.
    pub pca_rows: String,
    pub split_half_order: String,
    pub weight_vectors: String,
    pub residual_mode: String,
    pub pca: Vec<PcaSummary>,
    pub fold_plan: FoldPlan,
}

/// Full grid of results plus everything needed to reproduce them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub report_version: u32,
    pub metadata: SweepMetadata,
    pub cells: Vec<CellReport>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub cross_dataset: Vec<super::CrossDatasetResult>,
}

/// Fitted artifacts written next to the report.
#[derive(Debug, Clone)]
pub struct SweepArtifacts {
    pub pca: Vec<(u32, usize, PcaModel)>,
    pub probes: Vec<ProbeSet>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredProbe {
    pub fold: usize,
    #[serde(flatten)]
    pub probe: LabeledProbe,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeSet {
    pub layer: u32,
    pub pca_dim: usize,
    pub feature: String,
    pub probes: Vec<StoredProbe>,
}

fn ci(samples: &[f64], settings: Option<BootstrapSettings>) -> Result<Option<BootstrapCi>> {
    let Some(s) = settings else { return Ok(None) };
    match bootstrap_ci(samples, BootStat::Mean, s.resamples, s.confidence, s.seed) {
        Ok(c) => Ok(Some(c)),
        Err(Error::TooFewSamples { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Runs every (layer, PCA dim, feature) cell. `layers` must already be
/// loaded; `tables` are the participants to include.
pub fn run_sweep(
    layers: &[EmbeddingMatrix],
    tables: &[TargetTable],
    opts: &SweepOptions,
) -> Result<(SweepReport, SweepArtifacts)> {
    let first = layers.first().ok_or(Error::ConfigError("no layers requested".into()))?;
    if tables.is_empty() {
        return Err(Error::ConfigError("no participants selected".into()));
    }
    for f in &opts.features {
        if !tables.iter().any(|t| t.features().contains(f)) {
            return Err(Error::FeatureUnknown(f.clone()));
        }
    }
    if let Some(neg) = &opts.negative_feature {
        if opts.battery.controls.contains(&ControlKind::NegativeFeature)
            && !tables.iter().any(|t| t.features().contains(neg))
        {
            return Err(Error::FeatureUnknown(neg.clone()));
        }
    }
    let plan = plan_for(first, opts.k_folds, opts.fold_seed)?;

    let mut cells = Vec::new();
    let mut pca_summaries = Vec::new();
    let mut artifacts = SweepArtifacts {
        pca: Vec::new(),
        probes: Vec::new(),
    };
    for emb in layers {
        if emb.sentences() != first.sentences() {
            return Err(Error::ConfigError(format!(
                "layer {} indexes different sentences than layer {}",
                emb.layer, first.layer
            )));
        }
        for &d in &opts.pca_dims {
            let model = fit_pca(emb.values(), d)?;
            let reduced = emb.with_values(project(&model, emb.values())?)?;
            pca_summaries.push(PcaSummary {
                layer: emb.layer,
                pca_dim: d,
                input_dim: emb.dim(),
                n_samples: model.n_samples,
                variance_retained: model.variance_retained(),
                explained_variance_ratio: model.explained_variance_ratio.clone(),
            });
            for feature in &opts.features {
                let (cell, probes) = run_one(emb, &reduced, tables, feature, d, &plan, opts)?;
                cells.push(cell);
                artifacts.probes.push(probes);
            }
            artifacts.pca.push((emb.layer, d, model));
        }
    }
    let report = SweepReport {
        report_version: REPORT_VERSION,
        metadata: SweepMetadata {
            k_folds: opts.k_folds,
            fold_seed: opts.fold_seed,
            alpha_grid: opts.grid.values().to_vec(),
            alpha_fold: ALPHA_FOLD,
            bootstrap: opts.bootstrap,
            control_seed: opts.control_seed,
            n_permutations: opts.n_permutations,
            participants: tables.iter().map(|t| t.participant_id.clone()).collect(),
            pca_rows: "word_occurrence".into(),
            split_half_order: "corpus_id,sentence_id,word_pos".into(),
            weight_vectors: "mean_of_fold_weights".into(),
            residual_mode: if opts.battery.residual_retrain { "evaluate_and_retrain" } else { "evaluate" }.into(),
            pca: pca_summaries,
            fold_plan: plan,
        },
        cells,
        cross_dataset: Vec::new(),
    };
    Ok((report, artifacts))
}

fn run_one(
    raw: &EmbeddingMatrix,
    reduced: &EmbeddingMatrix,
    tables: &[TargetTable],
    feature: &str,
    pca_dim: usize,
    plan: &FoldPlan,
    opts: &SweepOptions,
) -> Result<(CellReport, ProbeSet)> {
    let datasets = align_all(reduced, tables, feature)?;
    let run = run_cell(&datasets, plan, &opts.grid)?;
    let person_rhos = run.person_rhos();
    let pop_rhos = run.population_rhos();
    let deltas: Vec<f64> = person_rhos.iter().zip(&pop_rhos).map(|(a, b)| a - b).collect();
    let cohens_d = match cohens_d_paired(&person_rhos, &pop_rhos) {
        Ok(d) => Some(d),
        Err(Error::ZeroVariance) | Err(Error::TooFewSamples { .. }) => None,
        Err(e) => return Err(e),
    };
    let b = &opts.battery;

    let transfer = if b.transfer { Some(transfer_matrix(&run.person, &datasets, plan)?) } else { None };
    let geometry = if b.geometry {
        let person_w: Vec<Vec<f64>> = run.person.iter().map(|o| o.mean_weights()).collect();
        Some(weight_geometry(&person_w, &mean_weights(&run.population.fold_probes))?)
    } else {
        None
    };
    let split_half = if b.split_half { Some(split_half_all(&datasets, &opts.grid)?) } else { None };
    let mut residual = Vec::new();
    if b.residual || b.residual_retrain {
        let modes: &[bool] = if b.residual_retrain { &[false, true] } else { &[false] };
        for &retrain in modes {
            let per = run
                .person
                .par_iter()
                .zip(&datasets)
                .map(|(o, d)| residual_independence(o, &run.population.fold_probes, d, plan, retrain))
                .collect::<Result<Vec<_>>>()?;
            residual.push(ResidualSummary::new(retrain, per, run.person_mean()));
        }
    }
    let confounds = if b.confounds {
        let (resid_tables, fits) = residualize_all(tables, feature)?;
        let rsets = align_all(reduced, &resid_tables, feature)?;
        let rrun = run_cell(&rsets, plan, &opts.grid)?;
        Some(ConfoundSummary {
            mean_r_squared: crate::stats::mean(&fits.iter().map(|f| f.r_squared).collect::<Vec<_>>()),
            fits,
            person_rho: rrun.person_mean(),
            population_rho: rrun.population_mean(),
            comparison: rrun.comparison,
        })
    } else {
        None
    };
    let controls = b
        .controls
        .iter()
        .map(|&kind| {
            run_control(
                kind,
                &ControlInputs {
                    embeddings: raw,
                    tables,
                    feature,
                    pca_dim,
                    k_folds: plan.k,
                    fold_seed: plan.seed,
                    grid: &opts.grid,
                    seed: opts.control_seed,
                    n_permutations: opts.n_permutations,
                    static_embeddings: opts.static_embeddings,
                    negative_feature: opts.negative_feature.as_deref(),
                },
            )
        })
        .collect::<Result<Vec<_>>>()?;

    let mut stored = Vec::new();
    for o in &run.person {
        for (fold, p) in o.fold_probes.iter().enumerate() {
            stored.push(StoredProbe {
                fold,
                probe: LabeledProbe {
                    scope: Scope::Person,
                    participant_id: o.result.participant_id.clone(),
                    feature_name: feature.to_owned(),
                    layer: raw.layer,
                    probe: p.clone(),
                },
            });
        }
    }
    for (fold, p) in run.population.fold_probes.iter().enumerate() {
        stored.push(StoredProbe {
            fold,
            probe: LabeledProbe {
                scope: Scope::Population,
                participant_id: crate::evaluation::POPULATION_ID.into(),
                feature_name: feature.to_owned(),
                layer: raw.layer,
                probe: p.clone(),
            },
        });
    }

    let cell = CellReport {
        layer: raw.layer,
        pca_dim,
        feature: feature.to_owned(),
        person_mean_rho: run.person_mean(),
        population_mean_rho: run.population_mean(),
        person: run.person.iter().map(|o| o.result.clone()).collect(),
        population: run.population.summary.clone(),
        population_by_participant: run
            .population
            .per_participant
            .iter()
            .map(|r| ParticipantRho {
                participant_id: r.participant_id.clone(),
                rho: r.mean_rho,
            })
            .collect(),
        comparison: run.comparison.clone(),
        cohens_d,
        delta_ci: ci(&deltas, opts.bootstrap)?,
        person_ci: ci(&person_rhos, opts.bootstrap)?,
        population_ci: ci(&pop_rhos, opts.bootstrap)?,
        transfer,
        geometry,
        split_half,
        residual,
        confounds,
        controls,
    };
    let probes = ProbeSet {
        layer: raw.layer,
        pca_dim,
        feature: feature.to_owned(),
        probes: stored,
    };
    Ok((cell, probes))
}
