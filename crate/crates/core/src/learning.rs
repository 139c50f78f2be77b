//! Latent structured SVM training.
//!
//! Latent attributes of the positives start from per-attribute K-Means on
//! the ground-truth-pose descriptors. The weights are then refit with
//! Pegasos while the positives' attributes are relabeled under the current
//! model and hard negatives are mined from person-free samples.

use std::collections::HashSet;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{dot, FeatureCache, ModelStructure};
use crate::inference::{infer_joint_excluding, Potentials};
use crate::model::{
    AttributeAssignment, JointLabel, MiningMode, ModelParams, Polarity, PoseAssignment, TrainConfig,
    TrainingSample,
};

/// Lloyd iteration cap.
pub const KMEANS_MAX_ITERS: usize = 100;

/// A sample with its descriptors extracted once.
#[derive(Debug, Clone)]
pub struct PreparedSample {
    pub cache: FeatureCache,
    pub pose: Option<PoseAssignment>,
    pub polarity: Polarity,
}

impl PreparedSample {
    pub fn new(sample: &TrainingSample, structure: &ModelStructure) -> Result<Self> {
        Ok(Self {
            cache: FeatureCache::build(&sample.image, &sample.grid, structure)?,
            pose: sample.pose.clone(),
            polarity: sample.polarity,
        })
    }
}

/// Extracts descriptors for every sample in parallel, keeping input order.
pub fn prepare(samples: &[TrainingSample], structure: &ModelStructure) -> Result<Vec<PreparedSample>> {
    samples.par_iter().map(|s| PreparedSample::new(s, structure)).collect()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (k, c) in centroids.iter().enumerate() {
        let d = sq_dist(point, c);
        if d < best.1 {
            best = (k, d);
        }
    }
    best
}

/// One Lloyd iteration's within-cluster sums of squares.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WcssStep {
    /// Previous assignment against the updated centroids.
    pub before_assign: f64,
    /// New assignment against the same centroids.
    pub after_assign: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansResult {
    pub centroids: Vec<Vec<f64>>,
    pub assignment: Vec<usize>,
    pub iterations: usize,
    pub converged: bool,
    pub wcss: Vec<WcssStep>,
}

fn kmeans_pp_seed(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut centroids = vec![points[rng.gen_range(0..points.len())].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.gen::<f64>() * total;
            let mut idx = points.len() - 1;
            for (i, &w) in d2.iter().enumerate() {
                if u < w {
                    idx = i;
                    break;
                }
                u -= w;
            }
            idx
        } else {
            // every point coincides with a centroid: duplicate one
            rng.gen_range(0..points.len())
        };
        let c = points[pick].clone();
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &c));
        }
        centroids.push(c);
    }
    centroids
}

/// Lloyd's algorithm with k-means++ seeding. Ties go to the lowest centroid
/// index; a cluster left empty is re-seeded at the point farthest from its
/// assigned centroid.
pub fn kmeans(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Result<KMeansResult> {
    if k == 0 || points.is_empty() {
        return Err(Error::config("k-means needs k >= 1 and at least one point"));
    }
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim || p.iter().any(|v| !v.is_finite())) {
        return Err(Error::data("k-means points must be finite and of equal length"));
    }
    let mut centroids = kmeans_pp_seed(points, k, rng);
    let mut assignment: Vec<usize> = points.iter().map(|p| nearest(p, &centroids).0).collect();
    let mut wcss = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    while iterations < KMEANS_MAX_ITERS {
        iterations += 1;
        // update
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &a) in points.iter().zip(&assignment) {
            counts[a] += 1;
            sums[a].iter_mut().zip(p).for_each(|(s, v)| *s += v);
        }
        for j in 0..k {
            if counts[j] > 0 {
                centroids[j] = sums[j].iter().map(|s| s / counts[j] as f64).collect();
            }
        }
        for j in 0..k {
            if counts[j] == 0 {
                let mut far = (0, -1.0);
                for (i, p) in points.iter().enumerate() {
                    let d = sq_dist(p, &centroids[assignment[i]]);
                    if d > far.1 {
                        far = (i, d);
                    }
                }
                centroids[j] = points[far.0].clone();
            }
        }
        // assign
        let before: f64 = points.iter().zip(&assignment).map(|(p, &a)| sq_dist(p, &centroids[a])).sum();
        let next: Vec<(usize, f64)> = points.iter().map(|p| nearest(p, &centroids)).collect();
        let after: f64 = next.iter().map(|&(_, d)| d).sum();
        wcss.push(WcssStep {
            before_assign: before,
            after_assign: after,
        });
        let next: Vec<usize> = next.into_iter().map(|(a, _)| a).collect();
        if next == assignment {
            converged = true;
            break;
        }
        assignment = next;
    }
    Ok(KMeansResult {
        centroids,
        assignment,
        iterations,
        converged,
        wcss,
    })
}

/// Per-attribute clustering used to initialize the latent attributes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansState {
    pub attributes: Vec<KMeansResult>,
}

/// Clusters each attribute's descriptors under the ground-truth poses with
/// `K = T_r` and labels each positive by its nearest centroid.
pub fn kmeans_init(
    structure: &ModelStructure,
    positives: &[PreparedSample],
    seed: u64,
) -> Result<(Vec<AttributeAssignment>, KMeansState)> {
    if positives.is_empty() {
        return Err(Error::config("k-means initialization needs at least one positive"));
    }
    let poses = ground_truth_poses(positives)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut results = Vec::with_capacity(structure.schema.len());
    for r in 0..structure.schema.len() {
        let points: Vec<Vec<f64>> = positives
            .iter()
            .zip(&poses)
            .map(|(s, p)| s.cache.attribute_descriptor(structure, r, p))
            .collect();
        results.push(kmeans(&points, structure.schema.get(r).values, &mut rng)?);
    }
    let labels = (0..positives.len())
        .map(|i| AttributeAssignment(results.iter().map(|res| res.assignment[i]).collect()))
        .collect();
    Ok((labels, KMeansState { attributes: results }))
}

fn ground_truth_poses(positives: &[PreparedSample]) -> Result<Vec<&PoseAssignment>> {
    positives
        .iter()
        .map(|s| match (&s.pose, s.polarity) {
            (Some(p), Polarity::Positive) => Ok(p),
            _ => Err(Error::data("positive sample without a ground-truth pose")),
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PegasosConfig {
    pub c: f64,
    pub epochs: usize,
    pub project: bool,
    pub seed: u64,
}

/// Result of one Pegasos run.
#[derive(Debug, Clone, PartialEq)]
pub struct PegasosFit {
    pub beta: Vec<f64>,
    /// Global step counter after the run, to continue the step-size
    /// schedule on a warm start.
    pub steps: u64,
}

/// Regularization of the per-example form of the objective.
pub fn pegasos_lambda(c: f64, q: usize) -> f64 {
    1.0 / (c * q as f64)
}

/// One subgradient step at global step `t` (1-based).
pub fn pegasos_step(beta: &mut [f64], v: &[f64], z: f64, lambda: f64, t: u64, project: bool) {
    let eta = 1.0 / (lambda * t as f64);
    let margin = z * dot(beta, v);
    let shrink = 1.0 - eta * lambda;
    beta.iter_mut().for_each(|b| *b *= shrink);
    if margin < 1.0 {
        beta.iter_mut().zip(v).for_each(|(b, x)| *b += eta * z * x);
    }
    if project {
        let radius = 1.0 / lambda.sqrt();
        let norm = dot(beta, beta).sqrt();
        if norm > radius {
            let scale = radius / norm;
            beta.iter_mut().for_each(|b| *b *= scale);
        }
    }
}

/// Stochastic subgradient descent on
/// `lambda/2 |beta|^2 + 1/q sum_k max(0, 1 - z_k <beta, v_k>)`,
/// `lambda = 1/(C q)`. Each epoch visits every example once in a seeded
/// shuffle order. The step counter continues from `step_offset`.
pub fn pegasos_fit(
    examples: &[(&[f64], Polarity)],
    beta_init: Vec<f64>,
    cfg: &PegasosConfig,
    step_offset: u64,
) -> Result<PegasosFit> {
    if !(cfg.c.is_finite() && cfg.c > 0.0) {
        return Err(Error::config("C must be > 0"));
    }
    let dim = beta_init.len();
    for (v, _) in examples {
        if v.len() != dim {
            return Err(Error::schema(format!("feature length {} != weight length {dim}", v.len())));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::data("non-finite feature value"));
        }
    }
    let mut beta = beta_init;
    let mut t = step_offset;
    if examples.is_empty() {
        return Ok(PegasosFit { beta, steps: t });
    }
    let lambda = pegasos_lambda(cfg.c, examples.len());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for &k in &order {
            t += 1;
            let (v, z) = examples[k];
            pegasos_step(&mut beta, v, z.sign(), lambda, t, cfg.project);
        }
    }
    Ok(PegasosFit { beta, steps: t })
}

/// `1/2 |beta|^2 + C sum_k max(0, 1 - z_k <beta, v_k>)`.
pub fn objective(beta: &[f64], examples: &[(&[f64], Polarity)], c: f64) -> f64 {
    let hinge: f64 = examples
        .iter()
        .map(|(v, z)| (1.0 - z.sign() * dot(beta, v)).max(0.0))
        .sum();
    0.5 * dot(beta, beta) + c * hinge
}

/// A mined negative label and its joint feature.
#[derive(Debug, Clone, PartialEq)]
pub struct CachedNegative {
    pub sample: usize,
    pub label: JointLabel,
    pub features: Vec<f64>,
    /// `<beta, v>` under the weights it was mined with.
    pub mined_score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NegativeCache {
    entries: Vec<CachedNegative>,
    capacity: usize,
}

impl NegativeCache {
    pub fn new(capacity: usize) -> Self {
        Self {
            entries: Vec::new(),
            capacity,
        }
    }

    pub fn entries(&self) -> &[CachedNegative] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    fn contains(&self, sample: usize, label: &JointLabel) -> bool {
        self.entries.iter().any(|e| e.sample == sample && &e.label == label)
    }

    /// Appends and, past capacity, drops the entries with the smallest
    /// `|mined_score|` (earliest first among ties). Returns the number
    /// evicted.
    pub fn extend(&mut self, new: Vec<CachedNegative>) -> usize {
        self.entries.extend(new);
        let excess = self.entries.len().saturating_sub(self.capacity);
        if excess == 0 {
            return 0;
        }
        let mut order: Vec<usize> = (0..self.entries.len()).collect();
        order.sort_by(|&a, &b| {
            self.entries[a]
                .mined_score
                .abs()
                .total_cmp(&self.entries[b].mined_score.abs())
                .then(a.cmp(&b))
        });
        let drop: HashSet<usize> = order.into_iter().take(excess).collect();
        let mut i = 0;
        self.entries.retain(|_| {
            let keep = !drop.contains(&i);
            i += 1;
            keep
        });
        excess
    }
}

/// Whether a label with score `s` on a negative sample is collected.
pub fn is_hard(s: f64, mode: MiningMode, threshold: f64) -> bool {
    match mode {
        MiningMode::Standard => s <= threshold,
        MiningMode::Literal => Polarity::Negative.sign() * s < threshold,
        MiningMode::Margin => s > threshold,
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MiningOutcome {
    pub added: usize,
    pub evicted: usize,
    /// Labels examined on each negative before stopping.
    pub searches: Vec<usize>,
}

/// Mines each negative independently under frozen weights: repeatedly take
/// the best label outside the already-excluded poses, collect it while it
/// is hard, and exclude its pose. At most `exclusion_cap` labels are
/// examined per sample.
pub fn mine_hard_negatives(
    structure: &ModelStructure,
    negatives: &[PreparedSample],
    params: &ModelParams,
    cfg: &TrainConfig,
    cache: &mut NegativeCache,
) -> Result<MiningOutcome> {
    let per_sample: Vec<(Vec<CachedNegative>, usize)> = negatives
        .par_iter()
        .enumerate()
        .map(|(idx, sample)| {
            let pot = Potentials::new(structure, &sample.cache, params)?;
            let mut excluded = HashSet::new();
            let mut found = Vec::new();
            let mut searches = 0;
            while searches < cfg.exclusion_cap {
                let Some(res) = infer_joint_excluding(structure, &pot, cfg.max_infer_iters, &excluded) else {
                    break;
                };
                searches += 1;
                if !is_hard(res.score, cfg.mining, cfg.margin_threshold) {
                    break;
                }
                let features = sample.cache.joint_feature(structure, &res.label)?.into_vec();
                let mined_score = dot(params.as_slice(), &features);
                excluded.insert(res.label.pose.clone());
                found.push(CachedNegative {
                    sample: idx,
                    label: res.label,
                    features,
                    mined_score,
                });
            }
            Ok((found, searches))
        })
        .collect::<Result<_>>()?;
    let mut outcome = MiningOutcome::default();
    let mut fresh = Vec::new();
    for (found, searches) in per_sample {
        outcome.searches.push(searches);
        for entry in found {
            if !cache.contains(entry.sample, &entry.label) && !fresh.iter().any(|e: &CachedNegative| e.sample == entry.sample && e.label == entry.label) {
                fresh.push(entry);
            }
        }
    }
    outcome.added = fresh.len();
    outcome.evicted = cache.extend(fresh);
    Ok(outcome)
}

/// Keeps exactly the entries with `<beta, v> >= threshold`.
pub fn shrink_cache(cache: NegativeCache, params: &ModelParams, threshold: f64) -> NegativeCache {
    let NegativeCache { entries, capacity } = cache;
    NegativeCache {
        entries: entries
            .into_iter()
            .filter(|e| dot(params.as_slice(), &e.features) >= threshold)
            .collect(),
        capacity,
    }
}

/// One row per (relabel, mining) iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub relabel: usize,
    pub iteration: usize,
    /// Objective over the positives and the cache the fit used.
    pub objective: f64,
    /// Attribute values changed by this relabel round.
    pub label_changes: usize,
    pub mined: usize,
    pub cache_size: usize,
    pub evicted: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Objective of the initial fit on positives alone.
    pub initial_objective: f64,
    pub rows: Vec<ReportRow>,
}

/// Hooks into the training loop, for tests and progress output.
pub trait TrainObserver {
    /// Called once per positive per relabel round with the pose the
    /// attributes are inferred under.
    fn on_relabel(&mut self, _sample: usize, _pose: &PoseAssignment) {}
    fn on_row(&mut self, _row: &ReportRow) {}
}

pub struct NoObserver;
impl TrainObserver for NoObserver {}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutput {
    pub params: ModelParams,
    pub report: TrainReport,
    /// Latent attributes of the positives from K-Means, in positive order.
    pub initial_attributes: Vec<AttributeAssignment>,
    /// Latent attributes after the last relabel round.
    pub attributes: Vec<AttributeAssignment>,
    pub kmeans: KMeansState,
}

/// Trains from raw samples; see [`train_prepared`].
pub fn train(
    structure: &ModelStructure,
    samples: &[TrainingSample],
    cfg: &TrainConfig,
    seed: u64,
    observer: &mut dyn TrainObserver,
) -> Result<TrainOutput> {
    let prepared = prepare(samples, structure)?;
    train_prepared(structure, &prepared, cfg, seed, observer)
}

/// The full loop: K-Means labels, an initial fit on positives, then
/// `t_1` relabel rounds of `t_2` (mine, fit, shrink) iterations. The
/// negative cache persists across relabel rounds. Pegasos warm-starts from
/// the previous weights and continues its step schedule.
pub fn train_prepared(
    structure: &ModelStructure,
    samples: &[PreparedSample],
    cfg: &TrainConfig,
    seed: u64,
    observer: &mut dyn TrainObserver,
) -> Result<TrainOutput> {
    cfg.validate()?;
    let (positives, negatives): (Vec<PreparedSample>, Vec<PreparedSample>) =
        samples.iter().cloned().partition(|s| s.polarity == Polarity::Positive);
    if positives.is_empty() || negatives.is_empty() {
        return Err(Error::config("training needs at least one positive and one negative sample"));
    }
    let poses: Vec<PoseAssignment> = ground_truth_poses(&positives)?.into_iter().cloned().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (initial_attributes, kmeans) = kmeans_init(structure, &positives, rng.gen())?;
    let layout = structure.layout();
    let mut attributes = initial_attributes.clone();
    let positive_features = |attrs: &[AttributeAssignment]| -> Result<Vec<Vec<f64>>> {
        positives
            .par_iter()
            .zip(&poses)
            .zip(attrs)
            .map(|((s, p), a)| {
                let label = JointLabel {
                    pose: p.clone(),
                    attributes: a.clone(),
                };
                Ok(s.cache.joint_feature(structure, &label)?.into_vec())
            })
            .collect()
    };
    let pegasos = |seed: u64| PegasosConfig {
        c: cfg.c,
        epochs: cfg.pegasos_epochs,
        project: cfg.pegasos_project,
        seed,
    };

    let mut fp = positive_features(&attributes)?;
    let examples: Vec<(&[f64], Polarity)> = fp.iter().map(|v| (v.as_slice(), Polarity::Positive)).collect();
    let fit = pegasos_fit(&examples, vec![0.0; layout.len()], &pegasos(rng.gen()), 0)?;
    let initial_objective = objective(&fit.beta, &examples, cfg.c);
    let mut steps = fit.steps;
    let mut params = ModelParams::from_vec(layout, fit.beta)?;
    let mut cache = NegativeCache::new(cfg.cache_capacity);
    let mut rows = Vec::with_capacity(cfg.relabel_iters * cfg.mining_iters);

    for relabel in 1..=cfg.relabel_iters {
        let started = Instant::now();
        let mut changes = 0;
        for (i, (s, pose)) in positives.iter().zip(&poses).enumerate() {
            observer.on_relabel(i, pose);
            let pot = Potentials::new(structure, &s.cache, &params)?;
            let next = pot.best_attributes(pose);
            changes += next.0.iter().zip(&attributes[i].0).filter(|(a, b)| a != b).count();
            attributes[i] = next;
        }
        fp = positive_features(&attributes)?;
        for iteration in 1..=cfg.mining_iters {
            let mined = mine_hard_negatives(structure, &negatives, &params, cfg, &mut cache)?;
            let mut examples: Vec<(&[f64], Polarity)> =
                fp.iter().map(|v| (v.as_slice(), Polarity::Positive)).collect();
            examples.extend(cache.entries().iter().map(|e| (e.features.as_slice(), Polarity::Negative)));
            let fit = pegasos_fit(&examples, params.as_slice().to_vec(), &pegasos(rng.gen()), steps)?;
            steps = fit.steps;
            let objective = objective(&fit.beta, &examples, cfg.c);
            if !objective.is_finite() {
                return Err(Error::data("training objective is not finite"));
            }
            params = ModelParams::from_vec(params.layout().clone(), fit.beta)?;
            cache = shrink_cache(cache, &params, cfg.margin_threshold);
            let row = ReportRow {
                relabel,
                iteration,
                objective,
                label_changes: changes,
                mined: mined.added,
                cache_size: cache.len(),
                evicted: mined.evicted,
                warning: (mined.evicted > 0)
                    .then(|| format!("negative cache over capacity, evicted {}", mined.evicted)),
                wall_seconds: started.elapsed().as_secs_f64(),
            };
            observer.on_row(&row);
            rows.push(row);
        }
    }
    Ok(TrainOutput {
        params,
        report: TrainReport { initial_objective, rows },
        initial_attributes,
        attributes,
        kmeans,
    })
}
