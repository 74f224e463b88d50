//! Synthetic multi-participant data with planted linear directions.
//!
//! Word vectors are standard Gaussian. Each participant's target is
//! `a·(x·γ) + b·(x·βᵢ) + σ·ε`, with a shared population direction `γ` and a
//! person direction `βᵢ`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataio::{Confounds, EmbeddingMatrix, TargetRow, TargetTable, WordKey};
use crate::error::{Error, Result};
use crate::numerics::{dot, norm, orthonormal_basis, Matrix};

pub const SIGNAL_FEATURE: &str = "signal";
/// Pure-noise feature with no relation to the embeddings.
pub const NEGATIVE_FEATURE: &str = "negative";
pub const SYNTH_MODEL_ID: &str = "synthetic";

const STREAM_EMBEDDINGS: u64 = 1;
const STREAM_DIRECTIONS: u64 = 2;
const STREAM_CONFOUNDS: u64 = 3;
const STREAM_PARTICIPANT_BASE: u64 = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PersonDirs {
    /// Independent uniformly random unit vectors.
    #[default]
    RandomUnit,
    /// Mutually orthogonal person directions, also orthogonal to the
    /// population direction when `n_participants < dim`.
    Orthogonal,
    /// One direction shared by everybody.
    Shared,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_participants: usize,
    pub n_sentences: usize,
    pub words_per_sentence: usize,
    pub dim: usize,
    pub pop_strength: f64,
    pub person_strength: f64,
    pub noise_sd: f64,
    pub person_dirs: PersonDirs,
    pub missing_rate: f64,
    pub seed: u64,
    pub corpus_id: String,
    pub layer: u32,
    /// Replaces the drawn population direction (normalized before use).
    pub pop_direction: Option<Vec<f64>>,
    /// Correlation of `freq_log` with `x·γ`, in `[-1, 1]`.
    pub confound_coupling: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self::reference()
    }
}

impl SynthConfig {
    /// 30 participants, 50 dimensions, 5000 words, a = 0.1, b = 0.3, σ = 1.
    pub fn reference() -> Self {
        Self {
            n_participants: 30,
            n_sentences: 250,
            words_per_sentence: 20,
            dim: 50,
            pop_strength: 0.1,
            person_strength: 0.3,
            noise_sd: 1.0,
            person_dirs: PersonDirs::RandomUnit,
            missing_rate: 0.0,
            seed: 42,
            corpus_id: "synth".into(),
            layer: 0,
            pop_direction: None,
            confound_coupling: 0.0,
        }
    }

    /// Small instance for smoke tests.
    pub fn tiny() -> Self {
        Self {
            n_participants: 4,
            n_sentences: 40,
            words_per_sentence: 10,
            dim: 8,
            ..Self::reference()
        }
    }

    pub fn n_words(&self) -> usize {
        self.n_sentences * self.words_per_sentence
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::ConfigInvalid(m));
        if self.n_participants == 0 || self.n_sentences == 0 || self.words_per_sentence == 0 || self.dim == 0 {
            return bad("participant, sentence, word and dimension counts must be positive".into());
        }
        for (name, v) in [("pop_strength", self.pop_strength), ("person_strength", self.person_strength)] {
            if !v.is_finite() || v < 0.0 {
                return bad(format!("{name} must be finite and non-negative, got {v}"));
            }
        }
        if !self.noise_sd.is_finite() || self.noise_sd <= 0.0 {
            return bad(format!("noise_sd must be positive, got {}", self.noise_sd));
        }
        if !(0.0..1.0).contains(&self.missing_rate) {
            return bad(format!("missing_rate must lie in [0, 1), got {}", self.missing_rate));
        }
        if !(-1.0..=1.0).contains(&self.confound_coupling) {
            return bad(format!("confound_coupling must lie in [-1, 1], got {}", self.confound_coupling));
        }
        if self.person_dirs == PersonDirs::Orthogonal && self.n_participants > self.dim {
            return bad(format!(
                "orthogonal person directions need n_participants <= dim ({} > {})",
                self.n_participants, self.dim
            ));
        }
        if let Some(g) = &self.pop_direction {
            if g.len() != self.dim {
                return bad(format!("pop_direction has length {}, expected {}", g.len(), self.dim));
            }
            if !(norm(g) > 0.0) || g.iter().any(|v| !v.is_finite()) {
                return bad("pop_direction must be a finite nonzero vector".into());
            }
        }
        if self.corpus_id.is_empty() {
            return bad("corpus_id must be nonempty".into());
        }
        Ok(())
    }

    pub fn participant_ids(&self) -> Vec<String> {
        let width = self.n_participants.to_string().len().max(2);
        (1..=self.n_participants).map(|i| format!("P{i:0width$}")).collect()
    }
}

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

fn gauss(r: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(r)
}

fn unit(r: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| gauss(r)).collect();
        let n = norm(&v);
        if n > 1e-12 {
            return v.into_iter().map(|a| a / n).collect();
        }
    }
}

/// Population direction and one direction per participant.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedDirections {
    pub population: Vec<f64>,
    pub person: Vec<Vec<f64>>,
}

pub fn planted_directions(cfg: &SynthConfig) -> Result<PlantedDirections> {
    cfg.validate()?;
    let (n, dim) = (cfg.n_participants, cfg.dim);
    let mut r = rng(cfg.seed, STREAM_DIRECTIONS);
    let (mut population, person) = match cfg.person_dirs {
        PersonDirs::RandomUnit => {
            let g = unit(&mut r, dim);
            let p = (0..n).map(|_| unit(&mut r, dim)).collect();
            (g, p)
        }
        PersonDirs::Shared => {
            let g = unit(&mut r, dim);
            let b = unit(&mut r, dim);
            (g, vec![b; n])
        }
        PersonDirs::Orthogonal => {
            let basis_seed: u64 = r.random();
            if n < dim {
                let q = orthonormal_basis(basis_seed, dim, n + 1)?;
                (q.column(0), (1..=n).map(|j| q.column(j)).collect())
            } else {
                let q = orthonormal_basis(basis_seed, dim, n)?;
                (unit(&mut r, dim), (0..n).map(|j| q.column(j)).collect())
            }
        }
    };
    if let Some(g) = &cfg.pop_direction {
        let s = norm(g);
        population = g.iter().map(|v| v / s).collect();
    }
    Ok(PlantedDirections { population, person })
}

/// Generated inputs plus the ground truth used to make them.
#[derive(Debug, Clone)]
pub struct SynthData {
    pub embeddings: EmbeddingMatrix,
    pub tables: Vec<TargetTable>,
    pub directions: PlantedDirections,
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthData> {
    let directions = planted_directions(cfg)?;
    let (n_words, dim) = (cfg.n_words(), cfg.dim);

    let mut r = rng(cfg.seed, STREAM_EMBEDDINGS);
    let data: Vec<f64> = (0..n_words * dim).map(|_| gauss(&mut r)).collect();
    let x = Matrix::new(n_words, dim, data)?;
    let mut index = Vec::with_capacity(n_words);
    for s in 0..cfg.n_sentences {
        for w in 0..cfg.words_per_sentence {
            index.push(WordKey::new(&cfg.corpus_id, s as u32, w as u32, &format!("w{s}_{w}")));
        }
    }

    let pop_score: Vec<f64> = (0..n_words).map(|i| dot(x.row(i), &directions.population)).collect();

    let mut r = rng(cfg.seed, STREAM_CONFOUNDS);
    let c = cfg.confound_coupling;
    let wps = cfg.words_per_sentence;
    let confounds: Vec<Confounds> = (0..n_words)
        .map(|i| {
            let z = (1.0 - c * c).sqrt() * gauss(&mut r) + c * pop_score[i];
            let len: u32 = r.random_range(1..=12);
            Confounds {
                freq_log: 3.0 + z,
                length: f64::from(len),
                sent_position: if wps > 1 { (i % wps) as f64 / (wps - 1) as f64 } else { 0.0 },
                surprisal: 8.0 + 2.0 * gauss(&mut r),
            }
        })
        .collect();

    let features = vec![SIGNAL_FEATURE.to_owned(), NEGATIVE_FEATURE.to_owned()];
    let tables = cfg
        .participant_ids()
        .into_iter()
        .enumerate()
        .map(|(p, pid)| {
            let mut r = rng(cfg.seed, STREAM_PARTICIPANT_BASE + p as u64);
            let beta = &directions.person[p];
            let rows = (0..n_words)
                .map(|i| {
                    let y = cfg.pop_strength * pop_score[i]
                        + cfg.person_strength * dot(x.row(i), beta)
                        + cfg.noise_sd * gauss(&mut r);
                    let neg = gauss(&mut r);
                    let missing = cfg.missing_rate > 0.0 && r.random::<f64>() < cfg.missing_rate;
                    TargetRow {
                        key: index[i].clone(),
                        values: if missing { vec![None, None] } else { vec![Some(y), Some(neg)] },
                        confounds: Some(confounds[i]),
                    }
                })
                .collect();
            TargetTable::new(pid, cfg.corpus_id.clone(), features.clone(), rows)
        })
        .collect::<Result<Vec<_>>>()?;

    let embeddings = EmbeddingMatrix::new(SYNTH_MODEL_ID, cfg.layer, index, x)?;
    Ok(SynthData {
        embeddings,
        tables,
        directions,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SecondCorpus {
    /// Same population direction as the first corpus.
    Same,
    /// Population direction orthogonal to the first corpus's.
    Disjoint,
}

/// Two corpora in one embedding space: the first from `cfg`, the second
/// with fresh words and noise (seed + 1) under `second_id`.
pub fn generate_two_corpora(cfg: &SynthConfig, second_id: &str, mode: SecondCorpus) -> Result<SynthData> {
    let a = generate(cfg)?;
    let gamma = &a.directions.population;
    let pop_b = match mode {
        SecondCorpus::Same => gamma.clone(),
        SecondCorpus::Disjoint => {
            if cfg.dim < 2 {
                return Err(Error::ConfigInvalid("disjoint corpora need dim >= 2".into()));
            }
            let mut r = rng(cfg.seed, STREAM_DIRECTIONS + 7);
            loop {
                let mut v = unit(&mut r, cfg.dim);
                let c = dot(&v, gamma);
                v.iter_mut().zip(gamma).for_each(|(x, g)| *x -= c * g);
                let n = norm(&v);
                if n > 1e-6 {
                    break v.into_iter().map(|x| x / n).collect();
                }
            }
        }
    };
    let cfg_b = SynthConfig {
        seed: cfg.seed.wrapping_add(1),
        corpus_id: second_id.to_owned(),
        pop_direction: Some(pop_b),
        ..cfg.clone()
    };
    if cfg_b.corpus_id == cfg.corpus_id {
        return Err(Error::ConfigInvalid("second corpus needs a distinct corpus id".into()));
    }
    let b = generate(&cfg_b)?;
    let embeddings = EmbeddingMatrix::concat(&[&a.embeddings, &b.embeddings])?;
    let mut tables = a.tables;
    tables.extend(b.tables);
    Ok(SynthData {
        embeddings,
        tables,
        directions: a.directions,
    })
}

/// Monte Carlo expectation of cross-validated person and population
/// correlation under a config.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleRho {
    pub person: f64,
    pub population: f64,
    pub trials: usize,
}

/// Brute-force reference: simulates the generative model directly, fits
/// ordinary least squares on a random 80% of each participant's words and
/// scores Spearman correlation on the remaining 20%. Shares no fitting,
/// ranking or fold code with the main pipeline.
pub fn oracle_expected_rho(cfg: &SynthConfig, trials: usize) -> Result<OracleRho> {
    cfg.validate()?;
    if trials < 10 {
        return Err(Error::ConfigInvalid(format!("oracle needs at least 10 trials, got {trials}")));
    }
    use rayon::prelude::*;
    let per_trial = (0..trials)
        .into_par_iter()
        .map(|t| oracle_trial(cfg, t as u64))
        .collect::<Vec<(f64, f64)>>();
    let k = per_trial.len() as f64;
    Ok(OracleRho {
        person: per_trial.iter().map(|p| p.0).sum::<f64>() / k,
        population: per_trial.iter().map(|p| p.1).sum::<f64>() / k,
        trials,
    })
}

fn oracle_trial(cfg: &SynthConfig, trial: u64) -> (f64, f64) {
    let mut r = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_0000_0000_0000);
    r.set_stream(trial);
    let (n, p) = (cfg.n_participants, cfg.dim);
    let words = ((cfg.n_words() as f64) * (1.0 - cfg.missing_rate)).round().max(10.0) as usize;
    let n_train = words * 4 / 5;

    let draw_unit = |r: &mut ChaCha8Rng| -> Vec<f64> {
        let v: Vec<f64> = (0..p).map(|_| gauss(r)).collect();
        let s = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        v.into_iter().map(|a| a / s).collect()
    };
    let gamma = match &cfg.pop_direction {
        Some(g) => {
            let s = g.iter().map(|a| a * a).sum::<f64>().sqrt();
            g.iter().map(|a| a / s).collect()
        }
        None => draw_unit(&mut r),
    };
    let betas: Vec<Vec<f64>> = match cfg.person_dirs {
        PersonDirs::RandomUnit => (0..n).map(|_| draw_unit(&mut r)).collect(),
        PersonDirs::Shared => vec![draw_unit(&mut r); n],
        PersonDirs::Orthogonal => {
            // Classical Gram-Schmidt against gamma (when room) and earlier betas.
            let mut out: Vec<Vec<f64>> = Vec::with_capacity(n);
            let against_gamma = n < p;
            while out.len() < n {
                let mut v = draw_unit(&mut r);
                let mut prev: Vec<&Vec<f64>> = out.iter().collect();
                if against_gamma {
                    prev.push(&gamma);
                }
                for _ in 0..2 {
                    for q in &prev {
                        let c: f64 = v.iter().zip(q.iter()).map(|(a, b)| a * b).sum();
                        v.iter_mut().zip(q.iter()).for_each(|(a, b)| *a -= c * b);
                    }
                }
                let s = v.iter().map(|a| a * a).sum::<f64>().sqrt();
                if s > 1e-8 {
                    out.push(v.into_iter().map(|a| a / s).collect());
                }
            }
            out
        }
    };

    // Each participant reads every word; the train/test split is shared.
    let xs: Vec<Vec<f64>> = (0..words).map(|_| (0..p).map(|_| gauss(&mut r)).collect()).collect();
    let mut order: Vec<usize> = (0..words).collect();
    for i in (1..words).rev() {
        let j = r.random_range(0..=i);
        order.swap(i, j);
    }
    let (train, test) = order.split_at(n_train);
    let lin = |x: &[f64], w: &[f64]| x.iter().zip(w).map(|(a, b)| a * b).sum::<f64>();
    let ys: Vec<Vec<f64>> = betas
        .iter()
        .map(|b| {
            xs.iter()
                .map(|x| cfg.pop_strength * lin(x, &gamma) + cfg.person_strength * lin(x, b) + cfg.noise_sd * gauss(&mut r))
                .collect()
        })
        .collect();

    // Normal equations with an intercept column, shared Gram across people.
    let q = p + 1;
    let aug = |x: &[f64]| -> Vec<f64> { std::iter::once(1.0).chain(x.iter().copied()).collect() };
    let mut gram = vec![0.0; q * q];
    for &i in train {
        let a = aug(&xs[i]);
        for u in 0..q {
            for v in 0..q {
                gram[u * q + v] += a[u] * a[v];
            }
        }
    }
    let xty = |y: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; q];
        for &i in train {
            let a = aug(&xs[i]);
            for u in 0..q {
                out[u] += a[u] * y[i];
            }
        }
        out
    };
    let score = |w: &[f64], y: &[f64]| -> f64 {
        let pred: Vec<f64> = test.iter().map(|&i| lin(&aug(&xs[i]), w)).collect();
        let obs: Vec<f64> = test.iter().map(|&i| y[i]).collect();
        oracle_spearman(&pred, &obs)
    };

    let mut person = 0.0;
    let mut pooled_rhs = vec![0.0; q];
    for y in &ys {
        let rhs = xty(y);
        pooled_rhs.iter_mut().zip(&rhs).for_each(|(a, b)| *a += b);
        person += score(&gauss_solve(gram.clone(), rhs, q), y);
    }
    // Pooling n copies of the same design multiplies the Gram by n; the
    // solution is that of the summed right-hand side divided by n.
    let pooled_rhs: Vec<f64> = pooled_rhs.iter().map(|v| v / n as f64).collect();
    let w_pop = gauss_solve(gram, pooled_rhs, q);
    let population: f64 = ys.iter().map(|y| score(&w_pop, y)).sum();
    (person / n as f64, population / n as f64)
}

/// Gaussian elimination with partial pivoting.
fn gauss_solve(mut a: Vec<f64>, mut b: Vec<f64>, n: usize) -> Vec<f64> {
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i * n + col].abs().total_cmp(&a[j * n + col].abs()))
            .unwrap_or(col);
        if piv != col {
            for k in 0..n {
                a.swap(col * n + k, piv * n + k);
            }
            b.swap(col, piv);
        }
        let d = a[col * n + col];
        for row in col + 1..n {
            let f = a[row * n + col] / d;
            if f != 0.0 {
                for k in col..n {
                    a[row * n + k] -= f * a[col * n + k];
                }
                b[row] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row * n + k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row * n + row];
    }
    x
}

/// Spearman via sorted positions (continuous data, so ties have
/// probability zero) and the `1 - 6Σd²/(n(n²-1))` formula.
fn oracle_spearman(a: &[f64], b: &[f64]) -> f64 {
    let ranks = |v: &[f64]| -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
        let mut r = vec![0.0; v.len()];
        for (pos, &i) in idx.iter().enumerate() {
            r[i] = pos as f64;
        }
        r
    };
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let d2: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - y) * (x - y)).sum();
    1.0 - 6.0 * d2 / (n * (n * n - 1.0))
}
