//! Commands behind the `lcpose` binary. Each returns its result so tests
//! can drive them without a process boundary.

use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::eval::{clustering_score, pcp_poses, F1Variant};
use crate::features::FeatureCache;
use crate::inference::{brute_force_joint, infer_joint, SCORE_TOL};
use crate::io::{
    check_compatible, read_dataset, read_model, read_predictions, report_to_string, write_dataset, write_model,
    write_png, write_predictions, Dataset, Metrics, Model, Prediction, RunConfig,
};
use crate::learning::{train, ReportRow, TrainObserver, TrainReport};
use crate::model::{Polarity, TrainConfig};
use crate::render::overlay;
use crate::synth::{generate, SynthConfig};

struct Progress;

impl TrainObserver for Progress {
    fn on_row(&mut self, r: &ReportRow) {
        eprintln!(
            "relabel {} iter {}: objective {:.6}, changes {}, mined {}, cache {}",
            r.relabel, r.iteration, r.objective, r.label_changes, r.mined, r.cache_size
        );
        if let Some(w) = &r.warning {
            eprintln!("warning: {w}");
        }
    }
}

/// Trains on a dataset and writes the model and a JSONL report.
pub fn cmd_train(
    dataset: &Path,
    cfg: &TrainConfig,
    seed: u64,
    model_out: &Path,
    report_out: &Path,
    verbose: bool,
) -> Result<TrainReport> {
    cfg.validate()?;
    let ds = read_dataset(dataset)?;
    let samples = ds.samples();
    let pos = samples.iter().filter(|s| s.polarity == Polarity::Positive).count();
    if pos == 0 || pos == samples.len() {
        return Err(Error::config(format!(
            "training needs at least one positive and one negative, found {pos} and {}",
            samples.len() - pos
        )));
    }
    let out = if verbose {
        train(&ds.structure, &samples, cfg, seed, &mut Progress)?
    } else {
        train(&ds.structure, &samples, cfg, seed, &mut crate::learning::NoObserver)?
    };
    write_model(
        model_out,
        &Model {
            structure: ds.structure,
            params: out.params,
            seed,
            train_config: cfg.clone(),
        },
    )?;
    std::fs::write(report_out, report_to_string(&out.report.rows)?).map_err(|e| Error::io(report_out, e))?;
    Ok(out.report)
}

/// Joint inference on every record, in parallel, in input order.
pub fn predict(model: &Model, ds: &Dataset, max_iters: usize) -> Result<Vec<Prediction>> {
    check_compatible(&model.structure, &ds.structure)?;
    if max_iters == 0 {
        return Err(Error::config("max_iters must be at least 1"));
    }
    ds.records
        .par_iter()
        .enumerate()
        .map(|(i, r)| {
            let cache = FeatureCache::build(&r.sample.image, &r.sample.grid, &model.structure)
                .map_err(|e| Error::data(format!("record {}: {e}", i + 1)))?;
            let res = infer_joint(&model.structure, &cache, &model.params, max_iters)?;
            Ok(Prediction::from_result(i, &res))
        })
        .collect()
}

pub fn cmd_infer(model: &Path, dataset: &Path, out: &Path, max_iters: usize) -> Result<Vec<Prediction>> {
    let model = read_model(model)?;
    let ds = read_dataset(dataset)?;
    let preds = predict(&model, &ds, max_iters)?;
    write_predictions(out, &preds)?;
    Ok(preds)
}

/// PCP over records with a ground-truth pose; F1 over those records when
/// every one of them carries annotated attributes.
pub fn evaluate(preds: &[Prediction], ds: &Dataset, threshold: f64, variant: F1Variant) -> Result<Metrics> {
    if preds.len() != ds.len() {
        return Err(Error::data(format!(
            "{} predictions for {} dataset records",
            preds.len(),
            ds.len()
        )));
    }
    if let Some((i, p)) = preds.iter().enumerate().find(|(i, p)| p.index != *i) {
        return Err(Error::data(format!("prediction {} carries index {}", i + 1, p.index)));
    }
    let (mut pred_poses, mut true_poses, mut grids) = (Vec::new(), Vec::new(), Vec::new());
    let (mut pred_attrs, mut true_attrs, mut annotated) = (Vec::new(), Vec::new(), true);
    for (p, r) in preds.iter().zip(&ds.records) {
        let Some(truth) = &r.sample.pose else { continue };
        pred_poses.push(p.label.pose.clone());
        true_poses.push(truth.clone());
        grids.push(r.sample.grid.clone());
        match &r.attributes {
            Some(a) => {
                pred_attrs.push(p.label.attributes.clone());
                true_attrs.push(a.clone());
            }
            None => annotated = false,
        }
    }
    if true_poses.is_empty() {
        return Err(Error::data("no record carries a ground-truth pose"));
    }
    let pcp = pcp_poses(&pred_poses, &true_poses, &grids, threshold)?;
    let f1 = if annotated {
        match clustering_score(&pred_attrs, &true_attrs, variant) {
            Ok(s) => Some(s),
            Err(Error::UndefinedMetric(_)) => None,
            Err(e) => return Err(e),
        }
    } else {
        None
    };
    Ok(Metrics {
        part_names: ds.structure.tree.names().to_vec(),
        pcp,
        attribute_names: ds.structure.schema.attributes().iter().map(|a| a.name.clone()).collect(),
        f1,
    })
}

pub fn cmd_eval(
    predictions: &Path,
    dataset: &Path,
    out: Option<&Path>,
    threshold: f64,
    variant: F1Variant,
) -> Result<Metrics> {
    let preds = read_predictions(predictions)?;
    let ds = read_dataset(dataset)?;
    let m = evaluate(&preds, &ds, threshold, variant)?;
    if let Some(out) = out {
        std::fs::write(out, crate::io::metrics_to_string(&m)).map_err(|e| Error::io(out, e))?;
    }
    Ok(m)
}

/// Writes a synthetic dataset annotated with the hidden attribute labels.
pub fn cmd_synth(cfg: &SynthConfig, out: &Path) -> Result<Dataset> {
    let d = generate(cfg)?;
    let ds = Dataset::from_samples(d.structure, d.samples, d.hidden)?;
    write_dataset(out, &ds)?;
    Ok(ds)
}

/// Agreement of alternating inference with exhaustive search.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleReport {
    pub checked: usize,
    /// Label identical to the exhaustive argmax.
    pub exact: usize,
    /// Score within tolerance of the exhaustive maximum.
    pub score_match: usize,
    /// Records whose label space exceeds the budget.
    pub skipped: usize,
    /// Largest shortfall of the alternating score.
    pub max_gap: f64,
}

impl OracleReport {
    pub fn recovery_rate(&self) -> f64 {
        if self.checked == 0 {
            f64::NAN
        } else {
            self.exact as f64 / self.checked as f64
        }
    }
}

pub fn oracle_check(model: &Model, ds: &Dataset, max_iters: usize, budget: u128) -> Result<OracleReport> {
    check_compatible(&model.structure, &ds.structure)?;
    let rows = ds
        .records
        .par_iter()
        .map(|r| {
            let cache = FeatureCache::build(&r.sample.image, &r.sample.grid, &model.structure)?;
            let oracle = match brute_force_joint(&model.structure, &cache, &model.params, budget) {
                Ok(o) => o,
                Err(Error::OracleBudget { .. }) => return Ok(None),
                Err(e) => return Err(e),
            };
            let alt = infer_joint(&model.structure, &cache, &model.params, max_iters)?;
            Ok(Some((alt.label == oracle.label, oracle.score - alt.score)))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rep = OracleReport {
        checked: 0,
        exact: 0,
        score_match: 0,
        skipped: 0,
        max_gap: 0.0,
    };
    for row in rows {
        match row {
            None => rep.skipped += 1,
            Some((same, gap)) => {
                rep.checked += 1;
                rep.exact += same as usize;
                rep.score_match += (gap <= SCORE_TOL) as usize;
                rep.max_gap = rep.max_gap.max(gap);
            }
        }
    }
    Ok(rep)
}

pub fn cmd_oracle_check(model: &Path, dataset: &Path, max_iters: usize, budget: u128) -> Result<OracleReport> {
    oracle_check(&read_model(model)?, &read_dataset(dataset)?, max_iters, budget)
}

/// Renders record `index` with its predicted boxes; parts that fail PCP
/// against the record's ground truth are drawn in the error color.
pub fn cmd_overlay(
    dataset: &Path,
    predictions: &Path,
    index: usize,
    out: &Path,
    threshold: f64,
) -> Result<()> {
    let ds = read_dataset(dataset)?;
    let preds = read_predictions(predictions)?;
    let rec = ds
        .records
        .get(index)
        .ok_or_else(|| Error::data(format!("dataset has {} records, asked for {}", ds.len(), index + 1)))?;
    let pred = preds
        .iter()
        .find(|p| p.index == index)
        .ok_or_else(|| Error::data(format!("no prediction for record {}", index + 1)))?;
    if !crate::model::pose_is_valid(&pred.label.pose, &rec.sample.grid) {
        return Err(Error::data("prediction does not index the record's candidates"));
    }
    let boxes = rec.sample.grid.select(&pred.label.pose);
    let truth = rec.sample.pose.as_ref().map(|p| rec.sample.grid.select(p));
    let img = overlay(
        &rec.sample.image,
        &boxes,
        truth.as_deref(),
        ds.structure.features.box_aspect,
        threshold,
    );
    write_png(out, &img)
}

/// Loads a run configuration, or the defaults when no path is given.
pub fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        Some(p) => RunConfig::read(p),
        None => Ok(RunConfig::default()),
    }
}
