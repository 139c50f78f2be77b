//! Metrics: PCP for poses, clustering F1 for latent attributes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AttributeAssignment, CandidateGrid, PartCandidate, PoseAssignment};

pub const DEFAULT_PCP_THRESHOLD: f64 = 0.5;

/// Ends of the box's major axis: `center -+ (s/2)(cos theta, sin theta)`.
pub fn part_endpoints(c: &PartCandidate) -> ([f64; 2], [f64; 2]) {
    let (sin, cos) = c.theta.sin_cos();
    let h = c.s / 2.0;
    ([c.x - h * cos, c.y - h * sin], [c.x + h * cos, c.y + h * sin])
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Both predicted endpoints within `threshold * true length` of the
/// corresponding true endpoints. `None` for a zero-length true part.
pub fn part_correct(pred: &PartCandidate, truth: &PartCandidate, threshold: f64) -> Option<bool> {
    let (t0, t1) = part_endpoints(truth);
    let len = dist(t0, t1);
    if len <= 0.0 {
        return None;
    }
    let (p0, p1) = part_endpoints(pred);
    let tol = threshold * len;
    Some(dist(p0, t0) <= tol && dist(p1, t1) <= tol)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcpResult {
    /// Fraction correct per part over the images where it was evaluable.
    pub per_part: Vec<Option<f64>>,
    /// Mean of the defined per-part rates.
    pub total: f64,
    /// `verdicts[image][part]`; `None` marks a skipped zero-length part.
    pub verdicts: Vec<Vec<Option<bool>>>,
    pub skipped: usize,
}

impl PcpResult {
    /// Rates of parts merged by name after dropping a `left-`/`right-`
    /// prefix, in first-appearance order.
    pub fn group_rates(&self, names: &[String]) -> Vec<(String, f64)> {
        let mut groups: Vec<(String, usize, usize)> = Vec::new();
        for (part, name) in names.iter().enumerate() {
            let key = name
                .strip_prefix("left-")
                .or_else(|| name.strip_prefix("right-"))
                .unwrap_or(name)
                .to_string();
            let (hit, seen) = self.verdicts.iter().fold((0, 0), |(h, s), v| match v[part] {
                Some(ok) => (h + ok as usize, s + 1),
                None => (h, s),
            });
            match groups.iter_mut().find(|g| g.0 == key) {
                Some(g) => {
                    g.1 += hit;
                    g.2 += seen;
                }
                None => groups.push((key, hit, seen)),
            }
        }
        groups
            .into_iter()
            .filter(|g| g.2 > 0)
            .map(|(k, h, s)| (k, h as f64 / s as f64))
            .collect()
    }

    /// Unweighted mean over the groups of [`PcpResult::group_rates`].
    pub fn group_mean(&self, names: &[String]) -> f64 {
        let g = self.group_rates(names);
        if g.is_empty() {
            0.0
        } else {
            g.iter().map(|(_, r)| r).sum::<f64>() / g.len() as f64
        }
    }
}

/// PCP over aligned lists of predicted and true boxes, one list per image.
pub fn pcp(predicted: &[Vec<PartCandidate>], truth: &[Vec<PartCandidate>], threshold: f64) -> Result<PcpResult> {
    if predicted.len() != truth.len() {
        return Err(Error::data(format!(
            "{} predictions for {} ground-truth images",
            predicted.len(),
            truth.len()
        )));
    }
    if !(threshold.is_finite() && threshold >= 0.0) {
        return Err(Error::config("PCP threshold must be finite and >= 0"));
    }
    let parts = truth.first().map_or(0, |t| t.len());
    let mut verdicts = Vec::with_capacity(truth.len());
    for (p, t) in predicted.iter().zip(truth) {
        if p.len() != parts || t.len() != parts {
            return Err(Error::schema("images disagree on the number of parts"));
        }
        verdicts.push(p.iter().zip(t).map(|(a, b)| part_correct(a, b, threshold)).collect::<Vec<_>>());
    }
    let mut skipped = 0;
    let per_part: Vec<Option<f64>> = (0..parts)
        .map(|i| {
            let (hit, seen) = verdicts.iter().fold((0usize, 0usize), |(h, s), v: &Vec<Option<bool>>| match v[i] {
                Some(ok) => (h + ok as usize, s + 1),
                None => (h, s),
            });
            skipped += verdicts.len() - seen;
            (seen > 0).then(|| hit as f64 / seen as f64)
        })
        .collect();
    let defined: Vec<f64> = per_part.iter().flatten().copied().collect();
    let total = if defined.is_empty() {
        0.0
    } else {
        defined.iter().sum::<f64>() / defined.len() as f64
    };
    Ok(PcpResult {
        per_part,
        total,
        verdicts,
        skipped,
    })
}

/// PCP of pose indices into per-image grids.
pub fn pcp_poses(
    predicted: &[PoseAssignment],
    truth: &[PoseAssignment],
    grids: &[CandidateGrid],
    threshold: f64,
) -> Result<PcpResult> {
    if predicted.len() != grids.len() || truth.len() != grids.len() {
        return Err(Error::data("predictions, truth and grids are not aligned"));
    }
    let boxes = |poses: &[PoseAssignment]| -> Vec<Vec<PartCandidate>> {
        poses.iter().zip(grids).map(|(p, g)| g.select(p)).collect()
    };
    pcp(&boxes(predicted), &boxes(truth), threshold)
}

/// Integer contingency table of two labelings.
fn contingency(a: &[usize], b: &[usize]) -> Vec<Vec<u64>> {
    let na = a.iter().max().map_or(0, |m| m + 1);
    let nb = b.iter().max().map_or(0, |m| m + 1);
    let mut table = vec![vec![0u64; nb]; na];
    for (&x, &y) in a.iter().zip(b) {
        table[x][y] += 1;
    }
    table
}

fn pairs(n: u64) -> u64 {
    n * n.saturating_sub(1) / 2
}

/// F1 of the "same cluster" relation over all unordered sample pairs.
/// Two all-singleton partitions score 1.
pub fn pairwise_f1(predicted: &[usize], truth: &[usize]) -> Result<f64> {
    if predicted.len() != truth.len() {
        return Err(Error::data("predicted and true labels differ in length"));
    }
    if predicted.len() < 2 {
        return Err(Error::UndefinedMetric(format!(
            "pairwise F1 needs at least two samples, got {}",
            predicted.len()
        )));
    }
    let table = contingency(predicted, truth);
    let tp: u64 = table.iter().flatten().map(|&n| pairs(n)).sum();
    let pred_pairs: u64 = table.iter().map(|row| pairs(row.iter().sum())).sum();
    let truth_pairs: u64 = (0..table[0].len()).map(|j| pairs(table.iter().map(|row| row[j]).sum())).sum();
    let fp = pred_pairs - tp;
    let fn_ = truth_pairs - tp;
    if tp + fp + fn_ == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * tp as f64 / (2 * tp + fp + fn_) as f64)
}

/// Maximum-weight assignment on a square matrix; `result[row] = col`.
pub fn hungarian_max(weights: &[Vec<f64>]) -> Vec<usize> {
    let n = weights.len();
    if n == 0 {
        return Vec::new();
    }
    // Shortest augmenting path on costs = -weights, 1-based potentials.
    let cost = |i: usize, j: usize| -weights[i - 1][j - 1];
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost(i0, j) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut result = vec![0; n];
    for j in 1..=n {
        if p[j] > 0 {
            result[p[j] - 1] = j - 1;
        }
    }
    result
}

/// Matches true classes to predicted clusters one-to-one maximizing
/// overlap, then macro-averages per-class F1 over the true classes.
pub fn matched_f1(predicted: &[usize], truth: &[usize]) -> Result<f64> {
    if predicted.len() != truth.len() {
        return Err(Error::data("predicted and true labels differ in length"));
    }
    if predicted.is_empty() {
        return Err(Error::UndefinedMetric("matched F1 needs at least one sample".into()));
    }
    let table = contingency(truth, predicted);
    let nt = table.len();
    let np = table[0].len();
    let n = nt.max(np);
    let weights: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i < nt && j < np { table[i][j] as f64 } else { 0.0 }).collect())
        .collect();
    let matching = hungarian_max(&weights);
    let pred_sizes: Vec<u64> = (0..np).map(|j| table.iter().map(|row| row[j]).sum()).collect();
    let mut sum = 0.0;
    let mut classes = 0;
    for (t, row) in table.iter().enumerate() {
        let size: u64 = row.iter().sum();
        if size == 0 {
            continue;
        }
        classes += 1;
        let j = matching[t];
        if j < np && table[t][j] > 0 {
            let hit = table[t][j] as f64;
            sum += 2.0 * hit / (size + pred_sizes[j]) as f64;
        }
    }
    Ok(sum / classes as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum F1Variant {
    #[default]
    Pairwise,
    Matched,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusteringScore {
    pub per_attribute: Vec<f64>,
    pub total: f64,
}

/// F1 per attribute over aligned predicted and annotated assignments.
pub fn clustering_score(
    predicted: &[AttributeAssignment],
    truth: &[AttributeAssignment],
    variant: F1Variant,
) -> Result<ClusteringScore> {
    if predicted.len() != truth.len() {
        return Err(Error::data("predicted and annotated attributes are not aligned"));
    }
    let n_attr = truth.first().map_or(0, |a| a.0.len());
    if predicted.iter().chain(truth).any(|a| a.0.len() != n_attr) {
        return Err(Error::schema("attribute assignments differ in length"));
    }
    if n_attr == 0 {
        return Err(Error::UndefinedMetric("no attributes to score".into()));
    }
    let per_attribute = (0..n_attr)
        .map(|r| {
            let p: Vec<usize> = predicted.iter().map(|a| a.0[r]).collect();
            let t: Vec<usize> = truth.iter().map(|a| a.0[r]).collect();
            match variant {
                F1Variant::Pairwise => pairwise_f1(&p, &t),
                F1Variant::Matched => matched_f1(&p, &t),
            }
        })
        .collect::<Result<Vec<f64>>>()?;
    let total = per_attribute.iter().sum::<f64>() / n_attr as f64;
    Ok(ClusteringScore { per_attribute, total })
}
