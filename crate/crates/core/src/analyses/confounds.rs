use serde::{Deserialize, Serialize};

use crate::dataio::{Confounds, TargetTable};
use crate::error::{Error, Result};
use crate::numerics::{dot, norm};

/// A column whose component orthogonal to the earlier ones is below this
/// fraction of its own norm is treated as collinear and dropped.
const COLLINEAR_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct ConfoundResidualization {
    pub table: TargetTable,
    pub r_squared: f64,
    /// Confound columns dropped as collinear with earlier ones.
    pub dropped: Vec<String>,
    pub n_rows: usize,
}

/// Replaces `feature` with its least-squares residuals on an intercept plus
/// the four confounds, over the rows where the feature is present.
pub fn residualize_confounds(table: &TargetTable, feature: &str) -> Result<ConfoundResidualization> {
    let j = table.feature_index(feature)?;
    let present: Vec<(usize, f64, Confounds)> = table
        .rows()
        .iter()
        .enumerate()
        .filter_map(|(i, r)| r.values[j].map(|v| (i, v, r.confounds)))
        .map(|(i, v, c)| {
            c.map(|c| (i, v, c)).ok_or_else(|| {
                Error::InvalidTargets(format!("row {} has no confounds", table.rows()[i].key))
            })
        })
        .collect::<Result<_>>()?;
    if present.is_empty() {
        return Err(Error::EmptyIntersection {
            participant: table.participant_id.clone(),
            feature: feature.to_owned(),
        });
    }
    let n = present.len();
    let mut columns: Vec<(String, Vec<f64>)> = vec![("intercept".into(), vec![1.0; n])];
    for (c, name) in Confounds::NAMES.iter().enumerate() {
        columns.push((name.to_string(), present.iter().map(|p| p.2.as_array()[c]).collect()));
    }

    // Modified Gram-Schmidt with one re-orthogonalization pass.
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut dropped = Vec::new();
    for (name, mut col) in columns {
        let original = norm(&col);
        for _ in 0..2 {
            for q in &basis {
                let c = dot(&col, q);
                col.iter_mut().zip(q).for_each(|(a, b)| *a -= c * b);
            }
        }
        let remaining = norm(&col);
        if original == 0.0 || remaining <= COLLINEAR_TOL * original {
            dropped.push(name);
            continue;
        }
        basis.push(col.into_iter().map(|a| a / remaining).collect());
    }
    if basis.len() <= 1 {
        return Err(Error::RankDeficientConfounds);
    }

    let y: Vec<f64> = present.iter().map(|p| p.1).collect();
    let mut resid = y.clone();
    for _ in 0..2 {
        for q in &basis {
            let c = dot(&resid, q);
            resid.iter_mut().zip(q).for_each(|(a, b)| *a -= c * b);
        }
    }
    let y_mean = y.iter().sum::<f64>() / n as f64;
    let ss_tot: f64 = y.iter().map(|v| (v - y_mean).powi(2)).sum();
    let ss_res: f64 = resid.iter().map(|v| v * v).sum();
    let r_squared = if ss_tot > 0.0 { (1.0 - ss_res / ss_tot).clamp(0.0, 1.0) } else { 0.0 };

    let mut new_values: Vec<Option<f64>> = vec![None; table.rows().len()];
    for (p, r) in present.iter().zip(resid) {
        new_values[p.0] = Some(r);
    }
    Ok(ConfoundResidualization {
        table: table.with_feature_values(feature, &new_values)?,
        r_squared,
        dropped,
        n_rows: n,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NuisanceFit {
    pub participant_id: String,
    pub corpus_id: String,
    pub r_squared: f64,
    pub dropped: Vec<String>,
}

/// Residualizes every table for `feature`; returns the new tables and the
/// per-table nuisance fits.
pub fn residualize_all(tables: &[TargetTable], feature: &str) -> Result<(Vec<TargetTable>, Vec<NuisanceFit>)> {
    let mut out = Vec::with_capacity(tables.len());
    let mut fits = Vec::with_capacity(tables.len());
    for t in tables {
        let r = residualize_confounds(t, feature)?;
        fits.push(NuisanceFit {
            participant_id: t.participant_id.clone(),
            corpus_id: t.corpus_id.clone(),
            r_squared: r.r_squared,
            dropped: r.dropped,
        });
        out.push(r.table);
    }
    Ok((out, fits))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::{TargetRow, WordKey};

    fn table(f: impl Fn(usize, &Confounds) -> f64, collinear: bool) -> TargetTable {
        let rows = (0..60)
            .map(|i| {
                let c = Confounds {
                    freq_log: (i as f64 * 0.37).sin() * 2.0,
                    length: (i % 7) as f64 + 1.0,
                    sent_position: (i % 10) as f64 / 9.0,
                    surprisal: if collinear { 2.0 * ((i % 7) as f64 + 1.0) } else { (i as f64 * 1.3).cos() * 3.0 + 8.0 },
                };
                TargetRow {
                    key: WordKey::new("c", (i / 10) as u32, (i % 10) as u32, "w"),
                    values: vec![if i % 11 == 3 { None } else { Some(f(i, &c)) }],
                    confounds: Some(c),
                }
            })
            .collect();
        TargetTable::new("p", "c", vec!["f".into()], rows).unwrap()
    }

    #[test]
    fn exact_linear_feature_leaves_nothing() {
        let t = table(|_, c| 1.0 + 2.0 * c.freq_log - c.length + 0.5 * c.surprisal, false);
        let r = residualize_confounds(&t, "f").unwrap();
        assert!(r.r_squared > 1.0 - 1e-10);
        for row in r.table.rows() {
            if let Some(v) = row.values[0] {
                assert!(v.abs() < 1e-9);
            }
        }
        assert_eq!(r.table.rows()[3].values[0], None);
    }

    #[test]
    fn residuals_orthogonal_to_confounds() {
        let t = table(|i, c| (i as f64 * 0.91).sin() + 0.3 * c.length, false);
        let r = residualize_confounds(&t, "f").unwrap();
        let rows: Vec<_> = r.table.rows().iter().filter(|x| x.values[0].is_some()).collect();
        let resid: Vec<f64> = rows.iter().map(|x| x.values[0].unwrap()).collect();
        for k in 0..4 {
            let col: Vec<f64> = rows.iter().map(|x| x.confounds.unwrap().as_array()[k]).collect();
            assert!(dot(&resid, &col).abs() <= 1e-8 * norm(&resid) * norm(&col));
        }
        assert!(resid.iter().sum::<f64>().abs() < 1e-8);
    }

    #[test]
    fn collinear_column_dropped() {
        let t = table(|i, _| i as f64, true);
        let r = residualize_confounds(&t, "f").unwrap();
        assert_eq!(r.dropped, vec!["surprisal".to_string()]);
    }
}
