//! The report directory.
//!
//! ```text
//! report.json        full SweepReport (report_version 1)
//! meta.json          tool version, thread count, effective config
//! tables/*.csv       summaries derived from report.json alone
//! probes/*.json      per-fold probes of every cell
//! pca/*.pca          fitted PCA models (PCA1 format)
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::analyses::{SweepArtifacts, SweepReport, REPORT_VERSION};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::pca::write_pca;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Meta {
    pub tool: String,
    pub tool_version: String,
    pub report_version: u32,
    pub command: String,
    pub threads: usize,
    pub config: RunConfig,
}

impl Meta {
    pub fn new(command: &str, threads: usize, config: RunConfig) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").into(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            report_version: REPORT_VERSION,
            command: command.into(),
            threads,
            config,
        }
    }
}

fn ser<T: Serialize>(v: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(v).map_err(|e| Error::Serialize(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

/// The exact bytes written to `report.json`.
pub fn report_json(report: &SweepReport) -> Result<String> {
    ser(report)
}

pub fn read_report(path: impl AsRef<Path>) -> Result<SweepReport> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let report: SweepReport = serde_json::from_str(&text).map_err(|e| Error::ParseError {
        path: path.to_owned(),
        line: e.line() as u64,
        message: e.to_string(),
    })?;
    if report.report_version != REPORT_VERSION {
        return Err(Error::VersionUnsupported {
            path: path.to_owned(),
            version: report.report_version,
        });
    }
    Ok(report)
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn mkdir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn cell_tag(layer: u32, pca_dim: usize, feature: &str) -> String {
    let safe: String = feature
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect();
    format!("L{layer}_d{pca_dim}_{safe}")
}

pub fn write_report_dir(out: &Path, report: &SweepReport, artifacts: Option<&SweepArtifacts>, meta: &Meta) -> Result<()> {
    mkdir(out)?;
    write(&out.join("report.json"), &report_json(report)?)?;
    write(&out.join("meta.json"), &ser(meta)?)?;
    write_tables(out, report)?;
    if let Some(a) = artifacts {
        let probes = out.join("probes");
        mkdir(&probes)?;
        for set in &a.probes {
            write(&probes.join(format!("{}.json", cell_tag(set.layer, set.pca_dim, &set.feature))), &ser(set)?)?;
        }
        let pca = out.join("pca");
        mkdir(&pca)?;
        for (layer, d, model) in &a.pca {
            write_pca(model, pca.join(format!("L{layer}_d{d}.pca")))?;
        }
    }
    Ok(())
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn csv_text(header: &[&str], rows: Vec<Vec<String>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| Error::Serialize(e.to_string());
    w.write_record(header).map_err(err)?;
    for r in rows {
        w.write_record(&r).map_err(err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Serialize(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Serialize(e.to_string()))
}

/// Every CSV table derivable from `report`, as (file name, contents).
pub fn render_tables(report: &SweepReport) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    let key = |c: &crate::analyses::CellReport| vec![c.layer.to_string(), c.pca_dim.to_string(), c.feature.clone()];

    let rows = report
        .cells
        .iter()
        .map(|c| {
            let cmp = c.comparison.as_ref();
            let mut r = key(c);
            r.extend([
                c.person.len().to_string(),
                c.person_mean_rho.to_string(),
                c.population_mean_rho.to_string(),
                (c.person_mean_rho - c.population_mean_rho).to_string(),
                opt(cmp.map(|x| x.t)),
                opt(cmp.map(|x| x.p)),
                opt(c.cohens_d),
                opt(c.delta_ci.map(|x| x.low)),
                opt(c.delta_ci.map(|x| x.high)),
                c.population.alpha_used.to_string(),
            ]);
            r
        })
        .collect();
    out.push((
        "table1_person_vs_population.csv".into(),
        csv_text(
            &[
                "layer", "pca_dim", "feature", "n", "person_rho", "population_rho", "delta", "t", "p", "cohens_d",
                "delta_ci_low", "delta_ci_high", "population_alpha",
            ],
            rows,
        )?,
    ));

    let mut rows = Vec::new();
    for c in &report.cells {
        for (p, q) in c.person.iter().zip(&c.population_by_participant) {
            let mut r = key(c);
            r.extend([
                p.participant_id.clone(),
                p.mean_rho.to_string(),
                q.rho.to_string(),
                (p.mean_rho - q.rho).to_string(),
                p.alpha_used.to_string(),
                p.undefined_folds.to_string(),
            ]);
            rows.push(r);
        }
    }
    out.push((
        "participants.csv".into(),
        csv_text(
            &["layer", "pca_dim", "feature", "participant", "person_rho", "population_rho", "delta", "alpha", "undefined_folds"],
            rows,
        )?,
    ));

    let rows: Vec<_> = report
        .metadata
        .pca
        .iter()
        .map(|p| {
            vec![
                p.layer.to_string(),
                p.pca_dim.to_string(),
                p.input_dim.to_string(),
                p.n_samples.to_string(),
                p.variance_retained.to_string(),
            ]
        })
        .collect();
    out.push((
        "pca_variance.csv".into(),
        csv_text(&["layer", "pca_dim", "input_dim", "n_samples", "variance_retained"], rows)?,
    ));

    let conf: Vec<_> = report
        .cells
        .iter()
        .filter_map(|c| c.confounds.as_ref().map(|s| (c, s)))
        .map(|(c, s)| {
            let mut r = key(c);
            r.extend([
                s.mean_r_squared.to_string(),
                c.person_mean_rho.to_string(),
                c.population_mean_rho.to_string(),
                s.person_rho.to_string(),
                s.population_rho.to_string(),
                (s.person_rho - s.population_rho).to_string(),
                opt(s.comparison.as_ref().map(|x| x.p)),
            ]);
            r
        })
        .collect();
    if !conf.is_empty() {
        out.push((
            "table2_confounds.csv".into(),
            csv_text(
                &[
                    "layer", "pca_dim", "feature", "mean_r_squared", "raw_person_rho", "raw_population_rho",
                    "person_rho", "population_rho", "delta", "p",
                ],
                conf,
            )?,
        ));
    }

    let mut ctrl = Vec::new();
    for c in report.cells.iter().filter(|c| !c.controls.is_empty()) {
        let mut r = key(c);
        r.extend([
            "PCA".to_string(),
            c.feature.clone(),
            c.person_mean_rho.to_string(),
            c.population_mean_rho.to_string(),
            (c.person_mean_rho - c.population_mean_rho).to_string(),
            opt(c.comparison.as_ref().map(|x| x.p)),
            String::new(),
        ]);
        ctrl.push(r);
        for o in &c.controls {
            let mut r = key(c);
            r.extend([
                o.control_kind.name().to_string(),
                o.feature_name.clone(),
                o.person_rho.to_string(),
                o.pop_rho.to_string(),
                o.delta.to_string(),
                opt(o.p),
                o.n_permutations.map(|n| n.to_string()).unwrap_or_default(),
            ]);
            ctrl.push(r);
        }
    }
    if !ctrl.is_empty() {
        out.push((
            "table3_controls.csv".into(),
            csv_text(
                &[
                    "layer", "pca_dim", "feature", "control", "scored_feature", "person_rho", "population_rho", "delta",
                    "p", "n_permutations",
                ],
                ctrl,
            )?,
        ));
    }

    let mut summary = Vec::new();
    for c in &report.cells {
        if let Some(t) = &c.transfer {
            let mut r = key(c);
            r.extend([
                t.self_mean.to_string(),
                t.other_mean.to_string(),
                t.t.to_string(),
                t.p_self_vs_other.to_string(),
            ]);
            summary.push(r);
            let mut header = vec!["probe_of".to_string()];
            header.extend(t.participant_ids.iter().cloned());
            let rows = t
                .participant_ids
                .iter()
                .enumerate()
                .map(|(i, id)| {
                    let mut r = vec![id.clone()];
                    r.extend((0..t.participant_ids.len()).map(|j| t.rho.get(i, j).to_string()));
                    r
                })
                .collect();
            let header: Vec<&str> = header.iter().map(String::as_str).collect();
            out.push((
                format!("transfer_{}.csv", cell_tag(c.layer, c.pca_dim, &c.feature)),
                csv_text(&header, rows)?,
            ));
        }
    }
    if !summary.is_empty() {
        out.push((
            "transfer_summary.csv".into(),
            csv_text(&["layer", "pca_dim", "feature", "self_mean", "other_mean", "t", "p"], summary)?,
        ));
    }

    let mut stab = Vec::new();
    for c in &report.cells {
        if let Some(s) = &c.split_half {
            for h in &s.per_participant {
                let mut r = key(c);
                r.extend([h.participant_id.clone(), h.cosine.to_string(), h.alpha_first.to_string(), h.alpha_second.to_string()]);
                stab.push(r);
            }
        }
    }
    if !stab.is_empty() {
        out.push((
            "split_half.csv".into(),
            csv_text(&["layer", "pca_dim", "feature", "participant", "cosine", "alpha_first", "alpha_second"], stab)?,
        ));
    }

    let geo: Vec<_> = report
        .cells
        .iter()
        .filter_map(|c| c.geometry.as_ref().map(|g| (c, g)))
        .map(|(c, g)| {
            let mut r = key(c);
            r.extend([
                g.mean_pairwise_cosine.to_string(),
                g.mean_cosine_to_population.to_string(),
                g.n_pairs.to_string(),
            ]);
            r
        })
        .collect();
    if !geo.is_empty() {
        out.push((
            "weight_geometry.csv".into(),
            csv_text(&["layer", "pca_dim", "feature", "mean_pairwise_cosine", "mean_cosine_to_population", "n_pairs"], geo)?,
        ));
    }

    let mut res = Vec::new();
    for c in &report.cells {
        for s in &c.residual {
            let mut r = key(c);
            r.extend([
                if s.retrained { "retrain" } else { "evaluate" }.to_string(),
                s.unresidualized_mean_rho.to_string(),
                s.mean_rho.to_string(),
                opt(s.t),
                opt(s.p),
            ]);
            res.push(r);
        }
    }
    if !res.is_empty() {
        out.push((
            "residual.csv".into(),
            csv_text(&["layer", "pca_dim", "feature", "mode", "person_rho", "residual_rho", "t", "p"], res)?,
        ));
    }

    if !report.cross_dataset.is_empty() {
        let rows = report
            .cross_dataset
            .iter()
            .map(|x| {
                vec![
                    x.layer.to_string(),
                    x.pca_dim.to_string(),
                    x.train_corpus.clone(),
                    x.test_corpus.clone(),
                    x.feature_name.clone(),
                    x.within_rho.to_string(),
                    x.cross_rho.to_string(),
                    x.retention.to_string(),
                ]
            })
            .collect();
        out.push((
            "cross_dataset.csv".into(),
            csv_text(&["layer", "pca_dim", "train_corpus", "test_corpus", "feature", "within_rho", "cross_rho", "retention"], rows)?,
        ));
    }
    Ok(out)
}

pub fn write_tables(out: &Path, report: &SweepReport) -> Result<()> {
    let dir = out.join("tables");
    mkdir(&dir)?;
    for (name, text) in render_tables(report)? {
        write(&dir.join(name), &text)?;
    }
    Ok(())
}
