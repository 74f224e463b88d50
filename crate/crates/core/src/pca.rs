//! Principal-components reduction of word-occurrence embeddings.
//!
//! Components are the leading eigenvectors of the sample covariance of the
//! mean-centered data (no per-dimension scaling). Each component is signed
//! so that its largest-magnitude entry is positive.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::dataio::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::numerics::{dot, sym_eig, Matrix};

pub const PCA1_MAGIC: &[u8; 4] = b"PCA1";

#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// `dim x d`, orthonormal columns.
    pub components: Matrix,
    pub explained_variance: Vec<f64>,
    pub explained_variance_ratio: Vec<f64>,
    pub total_variance: f64,
    pub n_samples: usize,
}

impl PcaModel {
    pub fn dim(&self) -> usize {
        self.components.rows()
    }

    pub fn n_components(&self) -> usize {
        self.components.cols()
    }

    pub fn variance_retained(&self) -> f64 {
        self.explained_variance_ratio.iter().sum()
    }

    /// A model that centers with `mean` and projects on arbitrary
    /// orthonormal `components` (used by the random-projection control).
    pub fn with_components(&self, components: Matrix) -> Result<PcaModel> {
        if components.rows() != self.dim() {
            return Err(Error::DimMismatch {
                expected: self.dim(),
                got: components.rows(),
            });
        }
        Ok(PcaModel {
            mean: self.mean.clone(),
            explained_variance: vec![0.0; components.cols()],
            explained_variance_ratio: vec![0.0; components.cols()],
            components,
            total_variance: self.total_variance,
            n_samples: self.n_samples,
        })
    }
}

pub fn fit_pca(data: &Matrix, d: usize) -> Result<PcaModel> {
    let (n, p) = (data.rows(), data.cols());
    if n < 2 {
        return Err(Error::TooFewRows { needed: 2, got: n });
    }
    let max = (n - 1).min(p);
    if d == 0 || d > max {
        return Err(Error::DTooLarge { d, max });
    }
    let mean = data.column_means();
    let mut cov = data.centered_cross_product(&mean);
    let scale = 1.0 / (n - 1) as f64;
    for i in 0..p {
        for j in 0..p {
            cov.set(i, j, cov.get(i, j) * scale);
        }
    }
    let total = cov.trace();
    if !(total > 0.0) {
        return Err(Error::DegenerateData);
    }
    let eig = sym_eig(&cov)?;
    let mut components = Matrix::zeros(p, d);
    for k in 0..d {
        let col = eig.eigenvectors.column(k);
        let pivot = col
            .iter()
            .enumerate()
            .fold((0, 0.0_f64), |best, (i, v)| if v.abs() > best.1 { (i, v.abs()) } else { best })
            .0;
        let sign = if col[pivot] < 0.0 { -1.0 } else { 1.0 };
        for (i, v) in col.iter().enumerate() {
            components.set(i, k, sign * v);
        }
    }
    let explained_variance: Vec<f64> = eig.eigenvalues[..d].iter().map(|v| v.max(0.0)).collect();
    let explained_variance_ratio = explained_variance.iter().map(|v| (v / total).min(1.0)).collect();
    Ok(PcaModel {
        mean,
        components,
        explained_variance,
        explained_variance_ratio,
        total_variance: total,
        n_samples: n,
    })
}

/// `(rows - mean) * components`.
pub fn project(model: &PcaModel, rows: &Matrix) -> Result<Matrix> {
    if rows.cols() != model.dim() {
        return Err(Error::DimMismatch {
            expected: model.dim(),
            got: rows.cols(),
        });
    }
    let d = model.n_components();
    let comps_t = model.components.transpose();
    let mut out = Vec::with_capacity(rows.rows() * d);
    let mut centered = vec![0.0; model.dim()];
    for i in 0..rows.rows() {
        for ((c, x), m) in centered.iter_mut().zip(rows.row(i)).zip(&model.mean) {
            *c = x - m;
        }
        for k in 0..d {
            out.push(dot(&centered, comps_t.row(k)));
        }
    }
    Matrix::new(rows.rows(), d, out)
}

/// Maps projected scores back to the input space.
pub fn reconstruct(model: &PcaModel, scores: &Matrix) -> Result<Matrix> {
    let back = scores.matmul(&model.components.transpose())?;
    let mut data = back.into_data();
    let p = model.dim();
    for (i, v) in data.iter_mut().enumerate() {
        *v += model.mean[i % p];
    }
    Matrix::new(scores.rows(), p, data)
}

/// Fits on every row of `emb` and returns the model plus the reduced matrix.
pub fn reduce_embeddings(emb: &EmbeddingMatrix, d: usize) -> Result<(PcaModel, EmbeddingMatrix)> {
    let model = fit_pca(emb.values(), d)?;
    let reduced = emb.with_values(project(&model, emb.values())?)?;
    Ok((model, reduced))
}

pub fn write_pca(model: &PcaModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let res: std::io::Result<()> = (|| {
        w.write_all(PCA1_MAGIC)?;
        w.write_u32::<LittleEndian>(1)?;
        w.write_u32::<LittleEndian>(model.dim() as u32)?;
        w.write_u32::<LittleEndian>(model.n_components() as u32)?;
        w.write_u64::<LittleEndian>(model.n_samples as u64)?;
        w.write_f64::<LittleEndian>(model.total_variance)?;
        for v in model
            .mean
            .iter()
            .chain(model.components.data())
            .chain(&model.explained_variance)
            .chain(&model.explained_variance_ratio)
        {
            w.write_f64::<LittleEndian>(*v)?;
        }
        w.flush()
    })();
    res.map_err(|e| Error::io(path, e))
}

pub fn read_pca(path: impl AsRef<Path>) -> Result<PcaModel> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    if bytes.len() < 4 || &bytes[..4] != PCA1_MAGIC {
        return Err(Error::BadMagic { path: path.to_owned() });
    }
    let truncated = || Error::TruncatedFile { path: path.to_owned() };
    let mut r = &bytes[4..];
    let version = r.read_u32::<LittleEndian>().map_err(|_| truncated())?;
    if version != 1 {
        return Err(Error::VersionUnsupported {
            path: path.to_owned(),
            version,
        });
    }
    let dim = r.read_u32::<LittleEndian>().map_err(|_| truncated())? as usize;
    let d = r.read_u32::<LittleEndian>().map_err(|_| truncated())? as usize;
    let n_samples = r.read_u64::<LittleEndian>().map_err(|_| truncated())? as usize;
    let total_variance = r.read_f64::<LittleEndian>().map_err(|_| truncated())?;
    let mut take = |count: usize| -> Result<Vec<f64>> {
        (0..count)
            .map(|_| r.read_f64::<LittleEndian>().map_err(|_| truncated()))
            .collect()
    };
    let mean = take(dim)?;
    let components = Matrix::new(dim, d, take(dim * d)?)?;
    let explained_variance = take(d)?;
    let explained_variance_ratio = take(d)?;
    Ok(PcaModel {
        mean,
        components,
        explained_variance,
        explained_variance_ratio,
        total_variance,
        n_samples,
    })
}
