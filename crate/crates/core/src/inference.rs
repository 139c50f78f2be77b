//! Scoring and inference.
//!
//! With the attributes fixed, the score decomposes over the kinematic tree
//! and the best pose is found exactly by max-product dynamic programming.
//! With the pose fixed, attributes own disjoint weight blocks and each is
//! maximized on its own. [`infer_joint`] alternates the two exact steps,
//! so its score sequence never decreases.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};

use crate::error::{Error, Result};
use crate::features::{dot, edge_deformation, FeatureCache, ModelStructure};
use crate::model::{
    attributes_are_valid, pose_is_valid, AttributeAssignment, JointLabel, ModelParams,
    PoseAssignment,
};

/// Absolute tolerance for "the best score did not change".
pub const SCORE_TOL: f64 = 1e-9;

/// Default enumeration budget of [`brute_force_joint`].
pub const DEFAULT_ORACLE_BUDGET: u128 = 1_000_000;

/// `<beta, J(x, y)>` accumulated from the cached descriptors block by block.
pub fn score(
    structure: &ModelStructure,
    cache: &FeatureCache,
    label: &JointLabel,
    params: &ModelParams,
) -> Result<f64> {
    structure.check_params(params)?;
    let grid = cache.grid();
    if !pose_is_valid(&label.pose, grid) {
        return Err(Error::data("pose does not index the candidate grid"));
    }
    if !attributes_are_valid(&label.attributes, &structure.schema) {
        return Err(Error::schema("attribute assignment does not fit the schema"));
    }
    let mut s = 0.0;
    for (part, &c) in label.pose.0.iter().enumerate() {
        s += dot(params.unary(part), cache.hog(part, c));
    }
    let selected = grid.select(&label.pose);
    for (e, &(p, c)) in structure.tree.edges().iter().enumerate() {
        s += dot(params.pair(e), &edge_deformation(&selected[p], &selected[c], &structure.features));
    }
    for (r, &value) in label.attributes.0.iter().enumerate() {
        let f = cache.attribute_descriptor(structure, r, &label.pose);
        s += dot(params.attr_column(r, value), &f);
    }
    Ok(s)
}

/// Every score term of one grid under one weight vector, tabulated per
/// candidate.
#[derive(Debug, Clone)]
pub struct Potentials {
    counts: Vec<usize>,
    /// `<beta_unary_i, hog(i, c)>`.
    appearance: Vec<Vec<f64>>,
    /// `[r][j][c][k]`: share of attribute `r` contributed by its `j`-th part
    /// at candidate `c` when the attribute takes value `k`, already divided
    /// by the attribute's part count.
    attribute: Vec<Vec<Vec<Vec<f64>>>>,
    attribute_parts: Vec<Vec<usize>>,
    value_counts: Vec<usize>,
    /// `[e][parent candidate][child candidate]`.
    pair: Vec<Vec<Vec<f64>>>,
    edges: Vec<(usize, usize)>,
}

impl Potentials {
    pub fn new(structure: &ModelStructure, cache: &FeatureCache, params: &ModelParams) -> Result<Self> {
        structure.check_params(params)?;
        let grid = cache.grid();
        grid.check_for(&structure.tree)?;
        let counts = grid.candidate_counts();
        let appearance = counts
            .iter()
            .enumerate()
            .map(|(i, &n)| (0..n).map(|c| dot(params.unary(i), cache.hog(i, c))).collect())
            .collect();
        let mut attribute = Vec::with_capacity(structure.schema.len());
        let mut attribute_parts = Vec::with_capacity(structure.schema.len());
        for (r, spec) in structure.schema.attributes().iter().enumerate() {
            let share = 1.0 / spec.parts.len() as f64;
            let per_part = spec
                .parts
                .iter()
                .map(|&part| {
                    (0..counts[part])
                        .map(|c| {
                            let d = cache.descriptor(part, c, spec.kind);
                            (0..spec.values)
                                .map(|k| share * dot(params.attr_column(r, k), d))
                                .collect()
                        })
                        .collect()
                })
                .collect();
            attribute.push(per_part);
            attribute_parts.push(spec.parts.clone());
        }
        let pair = structure
            .tree
            .edges()
            .iter()
            .enumerate()
            .map(|(e, &(p, c))| {
                let w = params.pair(e);
                grid.candidates(p)
                    .iter()
                    .map(|cp| {
                        grid.candidates(c)
                            .iter()
                            .map(|cc| dot(w, &edge_deformation(cp, cc, &structure.features)))
                            .collect()
                    })
                    .collect()
            })
            .collect();
        Ok(Self {
            counts,
            appearance,
            attribute,
            attribute_parts,
            value_counts: structure.schema.value_counts(),
            pair,
            edges: structure.tree.edges().to_vec(),
        })
    }

    pub fn candidate_counts(&self) -> &[usize] {
        &self.counts
    }

    /// `m(p_i)` for every part and candidate. `None` drops the attribute terms.
    pub fn node_scores(&self, attributes: Option<&AttributeAssignment>) -> Vec<Vec<f64>> {
        let mut m = self.appearance.clone();
        if let Some(a) = attributes {
            for (r, parts) in self.attribute_parts.iter().enumerate() {
                let k = a.0[r];
                for (j, &part) in parts.iter().enumerate() {
                    for (c, v) in m[part].iter_mut().enumerate() {
                        *v += self.attribute[r][j][c][k];
                    }
                }
            }
        }
        m
    }

    /// `<beta_attr_r[:, k], F_r(P_r)>` for every value `k`.
    pub fn attribute_scores(&self, r: usize, pose: &PoseAssignment) -> Vec<f64> {
        (0..self.value_counts[r])
            .map(|k| {
                self.attribute_parts[r]
                    .iter()
                    .enumerate()
                    .map(|(j, &part)| self.attribute[r][j][pose.0[part]][k])
                    .sum()
            })
            .collect()
    }

    pub fn best_attributes(&self, pose: &PoseAssignment) -> AttributeAssignment {
        AttributeAssignment(
            (0..self.value_counts.len())
                .map(|r| argmax(&self.attribute_scores(r, pose)))
                .collect(),
        )
    }

    /// Pose part of the score: appearance plus deformation.
    pub fn pose_score(&self, pose: &PoseAssignment) -> f64 {
        let mut s: f64 = pose.0.iter().enumerate().map(|(i, &c)| self.appearance[i][c]).sum();
        for (e, &(p, c)) in self.edges.iter().enumerate() {
            s += self.pair[e][pose.0[p]][pose.0[c]];
        }
        s
    }

    pub fn total(&self, label: &JointLabel) -> f64 {
        let mut s = self.pose_score(&label.pose);
        for (r, &k) in label.attributes.0.iter().enumerate() {
            s += self.attribute_scores(r, &label.pose)[k];
        }
        s
    }

    pub fn pair_table(&self, edge: usize) -> &[Vec<f64>] {
        &self.pair[edge]
    }
}

/// First index of the maximum; ties go to the lowest index.
fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Message-passing state of one tree DP run.
#[derive(Debug, Clone)]
pub struct ScoreTable {
    /// `m(p_i)` per part and candidate.
    pub node: Vec<Vec<f64>>,
    /// `B_i(p_j)`: message from part `i` to its parent, indexed by the parent's
    /// candidate. Empty for the root.
    pub messages: Vec<Vec<f64>>,
    /// Best candidate of part `i` for each parent candidate.
    pub backpointers: Vec<Vec<usize>>,
    /// `m(p_0) + sum of child messages` at the root.
    pub root_scores: Vec<f64>,
}

/// Exact max-product over the tree. Candidates masked out by `allowed` are
/// never chosen; returns `None` if no pose is allowed.
pub fn tree_dp(
    structure: &ModelStructure,
    potentials: &Potentials,
    node: Vec<Vec<f64>>,
    allowed: Option<&[Vec<bool>]>,
) -> Option<(PoseAssignment, f64, ScoreTable)> {
    let tree = &structure.tree;
    let m = tree.part_count();
    let ok = |i: usize, c: usize| allowed.is_none_or(|a| a[i][c]);
    // belief(i, c) = m(c) + sum of messages from i's children
    let mut belief: Vec<Vec<f64>> = node
        .iter()
        .enumerate()
        .map(|(i, row)| {
            row.iter()
                .enumerate()
                .map(|(c, &v)| if ok(i, c) { v } else { f64::NEG_INFINITY })
                .collect()
        })
        .collect();
    let mut messages = vec![Vec::new(); m];
    let mut backpointers = vec![Vec::new(); m];
    for &i in tree.topological_order().iter().rev() {
        let (Some(j), Some(e)) = (tree.parent(i), tree.parent_edge(i)) else {
            continue;
        };
        let pair = potentials.pair_table(e);
        let mut msg = Vec::with_capacity(pair.len());
        let mut bp = Vec::with_capacity(pair.len());
        for row in pair {
            let mut best = f64::NEG_INFINITY;
            let mut arg = 0;
            for (c, (&b, &l)) in belief[i].iter().zip(row).enumerate() {
                let v = b + l;
                if v > best {
                    best = v;
                    arg = c;
                }
            }
            msg.push(best);
            bp.push(arg);
        }
        for (bj, &v) in belief[j].iter_mut().zip(&msg) {
            *bj += v;
        }
        messages[i] = msg;
        backpointers[i] = bp;
    }
    let root = tree.root();
    let root_scores = belief[root].clone();
    let best_root = argmax(&root_scores);
    let best = root_scores[best_root];
    if best == f64::NEG_INFINITY {
        return None;
    }
    let mut pose = vec![0; m];
    pose[root] = best_root;
    for &i in tree.topological_order() {
        if let Some(j) = tree.parent(i) {
            pose[i] = backpointers[i][pose[j]];
        }
    }
    Some((
        PoseAssignment(pose),
        best,
        ScoreTable {
            node,
            messages,
            backpointers,
            root_scores,
        },
    ))
}

/// Constraint set of one Lawler-Murty subproblem.
#[derive(Clone)]
struct Subspace {
    allowed: Vec<Vec<bool>>,
}

struct Candidate {
    score: f64,
    seq: usize,
    pose: PoseAssignment,
    space: Subspace,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Candidate {}
impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        // max-heap on score, earlier subproblems first on ties
        self.score
            .total_cmp(&other.score)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

/// Best pose outside `excluded` for fixed node scores, by partitioning the
/// pose space around each excluded optimum and re-running the DP on each
/// part.
pub fn best_pose_excluding(
    structure: &ModelStructure,
    potentials: &Potentials,
    node: &[Vec<f64>],
    excluded: &HashSet<PoseAssignment>,
) -> Option<(PoseAssignment, f64)> {
    let full = Subspace {
        allowed: potentials.candidate_counts().iter().map(|&n| vec![true; n]).collect(),
    };
    let (pose, score, _) = tree_dp(structure, potentials, node.to_vec(), None)?;
    if !excluded.contains(&pose) {
        return Some((pose, score));
    }
    let mut heap = BinaryHeap::new();
    let mut seq = 0;
    heap.push(Candidate { score, seq, pose, space: full });
    while let Some(top) = heap.pop() {
        if !excluded.contains(&top.pose) {
            return Some((top.pose, top.score));
        }
        // Split top.space \ {top.pose}: fix parts in order, forbid the
        // optimum's candidate at the first unfixed part.
        let mut prefix = top.space.clone();
        for (i, &c) in top.pose.0.iter().enumerate() {
            let mut branch = prefix.clone();
            branch.allowed[i][c] = false;
            if let Some((pose, score, _)) = tree_dp(structure, potentials, node.to_vec(), Some(&branch.allowed)) {
                seq += 1;
                heap.push(Candidate { score, seq, pose, space: branch });
            }
            prefix.allowed[i].iter_mut().enumerate().for_each(|(k, a)| *a = *a && k == c);
        }
    }
    None
}

/// Exact argmax over poses for fixed attributes.
pub fn infer_pose(
    structure: &ModelStructure,
    cache: &FeatureCache,
    attributes: &AttributeAssignment,
    params: &ModelParams,
) -> Result<PoseAssignment> {
    if !attributes_are_valid(attributes, &structure.schema) {
        return Err(Error::schema("attribute assignment does not fit the schema"));
    }
    let pot = Potentials::new(structure, cache, params)?;
    let node = pot.node_scores(Some(attributes));
    let (pose, _, _) = tree_dp(structure, &pot, node, None).expect("unmasked grid has a pose");
    Ok(pose)
}

/// Message tables of the pose DP for fixed attributes.
pub fn pose_score_table(
    structure: &ModelStructure,
    cache: &FeatureCache,
    attributes: &AttributeAssignment,
    params: &ModelParams,
) -> Result<ScoreTable> {
    let pot = Potentials::new(structure, cache, params)?;
    let node = pot.node_scores(Some(attributes));
    Ok(tree_dp(structure, &pot, node, None).expect("unmasked grid has a pose").2)
}

/// Per-attribute argmax for a fixed pose.
pub fn infer_attributes(
    structure: &ModelStructure,
    cache: &FeatureCache,
    pose: &PoseAssignment,
    params: &ModelParams,
) -> Result<AttributeAssignment> {
    structure.check_params(params)?;
    if !pose_is_valid(pose, cache.grid()) {
        return Err(Error::data("pose does not index the candidate grid"));
    }
    Ok(AttributeAssignment(
        (0..structure.schema.len())
            .map(|r| {
                let f = cache.attribute_descriptor(structure, r, pose);
                let scores: Vec<f64> = (0..structure.schema.get(r).values)
                    .map(|k| dot(params.attr_column(r, k), &f))
                    .collect();
                argmax(&scores)
            })
            .collect(),
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct InferenceResult {
    pub label: JointLabel,
    pub score: f64,
    /// Rounds of attribute + pose updates.
    pub iterations: usize,
    pub converged: bool,
    /// Best score after each round; non-decreasing.
    pub trace: Vec<f64>,
}

/// Alternating maximization: start from the best pose without attribute
/// terms, then repeat (best attributes for the pose, best pose for the
/// attributes) until the best score stops changing.
pub fn infer_joint(
    structure: &ModelStructure,
    cache: &FeatureCache,
    params: &ModelParams,
    max_iters: usize,
) -> Result<InferenceResult> {
    let pot = Potentials::new(structure, cache, params)?;
    Ok(alternate(structure, &pot, max_iters, &HashSet::new()).expect("unmasked grid has a pose"))
}

/// [`infer_joint`] restricted to poses outside `excluded`. `None` when
/// every pose is excluded.
pub fn infer_joint_excluding(
    structure: &ModelStructure,
    potentials: &Potentials,
    max_iters: usize,
    excluded: &HashSet<PoseAssignment>,
) -> Option<InferenceResult> {
    alternate(structure, potentials, max_iters, excluded)
}

fn alternate(
    structure: &ModelStructure,
    pot: &Potentials,
    max_iters: usize,
    excluded: &HashSet<PoseAssignment>,
) -> Option<InferenceResult> {
    let max_iters = max_iters.max(1);
    let (mut pose, _) = best_pose_excluding(structure, pot, &pot.node_scores(None), excluded)?;
    let mut best: Option<(f64, JointLabel)> = None;
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    while iterations < max_iters {
        iterations += 1;
        let attributes = pot.best_attributes(&pose);
        let (next, _) = best_pose_excluding(structure, pot, &pot.node_scores(Some(&attributes)), excluded)
            .expect("the previous pose is still allowed");
        let label = JointLabel { pose: next.clone(), attributes };
        let s = pot.total(&label);
        let improved = match &best {
            None => true,
            Some((b, _)) => s > b + SCORE_TOL,
        };
        if improved {
            best = Some((s, label));
        }
        trace.push(best.as_ref().map(|(b, _)| *b).unwrap_or(s));
        // A repeated pose gives the same attributes next round: fixed point.
        if !improved || next == pose {
            converged = true;
            break;
        }
        pose = next;
    }
    let (score, label) = best.expect("at least one round ran");
    Some(InferenceResult {
        label,
        score,
        iterations,
        converged,
        trace,
    })
}

/// Iterates poses in lexicographic order (part 0 most significant).
fn for_each_pose(counts: &[usize], mut f: impl FnMut(&PoseAssignment)) {
    let mut pose = PoseAssignment(vec![0; counts.len()]);
    loop {
        f(&pose);
        let mut i = counts.len();
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            pose.0[i] += 1;
            if pose.0[i] < counts[i] {
                break;
            }
            pose.0[i] = 0;
        }
    }
}

fn for_each_attributes(counts: &[usize], mut f: impl FnMut(&AttributeAssignment)) {
    let mut a = AttributeAssignment(vec![0; counts.len()]);
    for_each_pose(counts, |p| {
        a.0.clone_from(&p.0);
        f(&a)
    });
}

/// Exhaustive maximum over poses for fixed attributes, ties to the
/// lexicographically smallest pose.
pub fn brute_force_pose(
    structure: &ModelStructure,
    cache: &FeatureCache,
    attributes: &AttributeAssignment,
    params: &ModelParams,
    budget: u128,
) -> Result<(PoseAssignment, f64)> {
    let pot = Potentials::new(structure, cache, params)?;
    let space: u128 = pot.counts.iter().map(|&n| n as u128).product();
    if space > budget {
        return Err(Error::OracleBudget { space, budget });
    }
    let mut best: Option<(PoseAssignment, f64)> = None;
    for_each_pose(&pot.counts, |p| {
        let s = pot.total(&JointLabel { pose: p.clone(), attributes: attributes.clone() });
        if best.as_ref().is_none_or(|(_, b)| s > *b) {
            best = Some((p.clone(), s));
        }
    });
    Ok(best.expect("non-empty pose space"))
}

/// Exhaustive maximum over attributes for a fixed pose.
pub fn brute_force_attributes(
    structure: &ModelStructure,
    cache: &FeatureCache,
    pose: &PoseAssignment,
    params: &ModelParams,
) -> Result<(AttributeAssignment, f64)> {
    let pot = Potentials::new(structure, cache, params)?;
    let mut best: Option<(AttributeAssignment, f64)> = None;
    for_each_attributes(&pot.value_counts, |a| {
        let s = pot.total(&JointLabel { pose: pose.clone(), attributes: a.clone() });
        if best.as_ref().is_none_or(|(_, b)| s > *b) {
            best = Some((a.clone(), s));
        }
    });
    Ok(best.expect("non-empty attribute space"))
}

/// Exhaustive joint maximum; ties broken by pose, then attributes, in
/// lexicographic order. Refuses label spaces larger than `budget`.
pub fn brute_force_joint(
    structure: &ModelStructure,
    cache: &FeatureCache,
    params: &ModelParams,
    budget: u128,
) -> Result<InferenceResult> {
    let pot = Potentials::new(structure, cache, params)?;
    let poses: u128 = pot.counts.iter().map(|&n| n as u128).product();
    let space = poses * structure.schema.space_size();
    if space > budget {
        return Err(Error::OracleBudget { space, budget });
    }
    let mut best: Option<(JointLabel, f64)> = None;
    for_each_pose(&pot.counts, |p| {
        let base = pot.pose_score(p);
        let per_attr: Vec<Vec<f64>> = (0..pot.value_counts.len()).map(|r| pot.attribute_scores(r, p)).collect();
        for_each_attributes(&pot.value_counts, |a| {
            let s = base + a.0.iter().enumerate().map(|(r, &k)| per_attr[r][k]).sum::<f64>();
            if best.as_ref().is_none_or(|(_, b)| s > *b) {
                best = Some((JointLabel { pose: p.clone(), attributes: a.clone() }, s));
            }
        });
    });
    let (label, score) = best.expect("non-empty label space");
    Ok(InferenceResult {
        label,
        score,
        iterations: 1,
        converged: true,
        trace: vec![score],
    })
}
