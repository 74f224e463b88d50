//! The characterization and robustness battery built on probes and
//! cross-validation.

mod confounds;
mod controls;
mod cross_dataset;
mod residual;
mod stability;
mod sweep;
mod transfer;

pub use confounds::{residualize_all, residualize_confounds, ConfoundResidualization, NuisanceFit};
pub use controls::{random_word_vectors, run_control, shuffle_delta_is_null, ControlInputs, ControlKind, ControlOutcome};
pub use cross_dataset::{cross_dataset_transfer, CrossDatasetResult};
pub use residual::{residual_independence, ResidualSummary};
pub use stability::{split_half, split_half_all, weight_geometry, SplitHalf, SplitHalfSummary, WeightGeometry};
pub use sweep::{
    layer_path, load_layers, run_sweep, Battery, BootstrapSettings, CellReport, ConfoundSummary, PcaSummary, ProbeSet,
    StoredProbe, SweepArtifacts, SweepMetadata, SweepOptions, SweepReport, REPORT_VERSION,
};
pub use transfer::{transfer_matrix, TransferMatrix};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataio::{align, AlignedDataset, EmbeddingMatrix, TargetTable};
use crate::error::{Error, Result};
use crate::evaluation::{cross_validate, make_folds, paired_compare, population_cv, CvOutcome, FoldPlan, PairedComparison, PopulationCv};
use crate::probes::AlphaGrid;

/// Aligns every table to `emb` for one feature; tables lacking the feature
/// are an error.
pub fn align_all(emb: &EmbeddingMatrix, tables: &[TargetTable], feature: &str) -> Result<Vec<AlignedDataset>> {
    tables.par_iter().map(|t| align(emb, t, feature)).collect()
}

/// Fold plan over every sentence in the embedding index.
pub fn plan_for(emb: &EmbeddingMatrix, k: usize, seed: u64) -> Result<FoldPlan> {
    make_folds(emb.sentences(), k, seed)
}

/// Person and population cross-validation on one (layer, dim, feature) cell.
#[derive(Debug, Clone)]
pub struct CellRun {
    pub person: Vec<CvOutcome>,
    pub population: PopulationCv,
    /// `None` when the paired test is undefined (one participant, or all
    /// differences equal).
    pub comparison: Option<PairedComparison>,
}

impl CellRun {
    pub fn person_mean(&self) -> f64 {
        crate::stats::mean(&self.person.iter().map(|o| o.result.mean_rho).collect::<Vec<_>>())
    }

    pub fn population_mean(&self) -> f64 {
        self.population.summary.mean_rho
    }

    pub fn person_rhos(&self) -> Vec<f64> {
        self.person.iter().map(|o| o.result.mean_rho).collect()
    }

    pub fn population_rhos(&self) -> Vec<f64> {
        self.population.per_participant.iter().map(|r| r.mean_rho).collect()
    }
}

pub fn run_cell(datasets: &[AlignedDataset], plan: &FoldPlan, grid: &AlphaGrid) -> Result<CellRun> {
    if datasets.is_empty() {
        return Err(Error::Empty("cell datasets"));
    }
    let person = datasets
        .par_iter()
        .map(|d| cross_validate(d, plan, grid))
        .collect::<Result<Vec<_>>>()?;
    let population = population_cv(datasets, plan, grid)?;
    let person_results: Vec<_> = person.iter().map(|o| o.result.clone()).collect();
    let comparison = match paired_compare(&person_results, &population.per_participant) {
        Ok(c) => Some(c),
        Err(Error::ZeroVariance) | Err(Error::TooFewSamples { .. }) => None,
        Err(e) => return Err(e),
    };
    Ok(CellRun {
        person,
        population,
        comparison,
    })
}

/// Participant-level correlation, used wherever a table is keyed by
/// participant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticipantRho {
    pub participant_id: String,
    pub rho: f64,
}
