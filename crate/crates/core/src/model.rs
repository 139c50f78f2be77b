//! Domain types shared by every other module: rasters, part candidates,
//! pose and attribute assignments, the kinematic tree, the attribute
//! schema and the weight vector.
//!
//! Indices are 0-based everywhere in memory. Files use 1-based indices and
//! convert at the boundary (see [`crate::io`]).

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// 8-bit RGB image, row-major, 3 bytes per pixel.
#[derive(Clone, PartialEq, Eq)]
pub struct ImageRaster {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl std::fmt::Debug for ImageRaster {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ImageRaster")
            .field("width", &self.width)
            .field("height", &self.height)
            .finish_non_exhaustive()
    }
}

impl ImageRaster {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::data(format!("empty raster {width}x{height}")));
        }
        if data.len() != width * height * 3 {
            return Err(Error::data(format!(
                "raster {width}x{height} needs {} bytes, got {}",
                width * height * 3,
                data.len()
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Result<Self> {
        let data = rgb.iter().copied().cycle().take(width * height * 3).collect();
        Self::new(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn put_pixel(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }
}

/// Wraps an angle into `[-pi, pi)`.
pub fn wrap_angle(theta: f64) -> f64 {
    let mut t = (theta + PI).rem_euclid(2.0 * PI) - PI;
    if t >= PI {
        t -= 2.0 * PI;
    }
    t
}

/// Oriented bounding box hypothesis for one body part. The box is `s` long
/// along the direction `theta` and `s * aspect` wide (see
/// [`crate::features::FeatureConfig::box_aspect`]).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartCandidate {
    pub x: f64,
    pub y: f64,
    pub s: f64,
    pub theta: f64,
}

impl PartCandidate {
    pub fn new(x: f64, y: f64, s: f64, theta: f64) -> Result<Self> {
        let c = Self { x, y, s, theta };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.x.is_finite() && self.y.is_finite()) {
            return Err(Error::data("candidate center is not finite"));
        }
        if !(self.s.is_finite() && self.s > 0.0) {
            return Err(Error::data(format!("candidate scale must be > 0, got {}", self.s)));
        }
        if !(-PI..PI).contains(&self.theta) {
            return Err(Error::data(format!(
                "candidate orientation {} outside [-pi, pi)",
                self.theta
            )));
        }
        Ok(())
    }
}

/// The input space element: one non-empty candidate list per part.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateGrid {
    parts: Vec<Vec<PartCandidate>>,
}

impl CandidateGrid {
    pub fn new(parts: Vec<Vec<PartCandidate>>) -> Result<Self> {
        if parts.is_empty() {
            return Err(Error::data("candidate grid has no parts"));
        }
        for (i, list) in parts.iter().enumerate() {
            if list.is_empty() {
                return Err(Error::data(format!("part {i} has no candidates")));
            }
            for c in list {
                c.validate()?;
            }
        }
        Ok(Self { parts })
    }

    pub fn part_count(&self) -> usize {
        self.parts.len()
    }

    pub fn candidates(&self, part: usize) -> &[PartCandidate] {
        &self.parts[part]
    }

    pub fn candidate_counts(&self) -> Vec<usize> {
        self.parts.iter().map(Vec::len).collect()
    }

    pub fn parts(&self) -> &[Vec<PartCandidate>] {
        &self.parts
    }

    /// Candidates selected by `pose`, one per part.
    pub fn select(&self, pose: &PoseAssignment) -> Vec<PartCandidate> {
        pose.0
            .iter()
            .enumerate()
            .map(|(i, &p)| self.parts[i][p])
            .collect()
    }

    pub fn check_for(&self, tree: &SkeletonTree) -> Result<()> {
        if self.part_count() != tree.part_count() {
            return Err(Error::schema(format!(
                "grid has {} parts, skeleton has {}",
                self.part_count(),
                tree.part_count()
            )));
        }
        Ok(())
    }
}

/// Candidate index per part (0-based).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PoseAssignment(pub Vec<usize>);

/// Value index per attribute (0-based).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AttributeAssignment(pub Vec<usize>);

impl AttributeAssignment {
    /// Every attribute at its first value.
    pub fn first(schema: &AttributeSchema) -> Self {
        Self(vec![0; schema.len()])
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct JointLabel {
    pub pose: PoseAssignment,
    pub attributes: AttributeAssignment,
}

pub fn pose_is_valid(pose: &PoseAssignment, grid: &CandidateGrid) -> bool {
    pose.0.len() == grid.part_count()
        && pose
            .0
            .iter()
            .zip(grid.parts())
            .all(|(&p, list)| p < list.len())
}

pub fn attributes_are_valid(a: &AttributeAssignment, schema: &AttributeSchema) -> bool {
    a.0.len() == schema.len()
        && a.0
            .iter()
            .zip(schema.attributes())
            .all(|(&v, spec)| v < spec.values)
}

/// True iff every pose index addresses an existing candidate and every
/// attribute value is within its range.
pub fn validate_joint_label(
    label: &JointLabel,
    grid: &CandidateGrid,
    schema: &AttributeSchema,
) -> bool {
    pose_is_valid(&label.pose, grid) && attributes_are_valid(&label.attributes, schema)
}

/// Serialized form of [`SkeletonTree`]; validated on conversion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkeletonSpec {
    pub names: Vec<String>,
    pub root: usize,
    pub edges: Vec<(usize, usize)>,
}

/// Kinematic tree over the parts. Edges are (parent, child).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SkeletonSpec", into = "SkeletonSpec")]
pub struct SkeletonTree {
    names: Vec<String>,
    root: usize,
    edges: Vec<(usize, usize)>,
    parent: Vec<Option<usize>>,
    /// Edge index connecting each non-root part to its parent.
    parent_edge: Vec<Option<usize>>,
    children: Vec<Vec<usize>>,
    /// Parents before children.
    order: Vec<usize>,
}

impl SkeletonTree {
    pub fn new(names: Vec<String>, root: usize, edges: Vec<(usize, usize)>) -> Result<Self> {
        let m = names.len();
        if m == 0 {
            return Err(Error::schema("skeleton has no parts"));
        }
        if root >= m {
            return Err(Error::schema(format!("root {root} out of range for {m} parts")));
        }
        if edges.len() != m - 1 {
            return Err(Error::schema(format!(
                "a tree over {m} parts needs {} edges, got {}",
                m - 1,
                edges.len()
            )));
        }
        let mut parent = vec![None; m];
        let mut parent_edge = vec![None; m];
        let mut children = vec![Vec::new(); m];
        for (e, &(p, c)) in edges.iter().enumerate() {
            if p >= m || c >= m {
                return Err(Error::schema(format!("edge ({p}, {c}) out of range")));
            }
            if c == root || p == c {
                return Err(Error::schema(format!("edge ({p}, {c}) points into the root or itself")));
            }
            if parent[c].is_some() {
                return Err(Error::schema(format!("part {c} has two parents")));
            }
            parent[c] = Some(p);
            parent_edge[c] = Some(e);
            children[p].push(c);
        }
        // With m - 1 edges and one parent per non-root node, the graph is a
        // tree iff everything is reachable from the root.
        let mut order = Vec::with_capacity(m);
        let mut stack = vec![root];
        let mut seen = vec![false; m];
        while let Some(v) = stack.pop() {
            if seen[v] {
                return Err(Error::schema("skeleton edges contain a cycle"));
            }
            seen[v] = true;
            order.push(v);
            stack.extend(children[v].iter().rev());
        }
        if order.len() != m {
            return Err(Error::schema("skeleton edges leave parts disconnected from the root"));
        }
        Ok(Self {
            names,
            root,
            edges,
            parent,
            parent_edge,
            children,
            order,
        })
    }

    pub fn part_count(&self) -> usize {
        self.names.len()
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn parent(&self, part: usize) -> Option<usize> {
        self.parent[part]
    }

    pub fn parent_edge(&self, part: usize) -> Option<usize> {
        self.parent_edge[part]
    }

    pub fn children(&self, part: usize) -> &[usize] {
        &self.children[part]
    }

    /// Pre-order traversal from the root; reversed it visits leaves first.
    pub fn topological_order(&self) -> &[usize] {
        &self.order
    }
}

impl TryFrom<SkeletonSpec> for SkeletonTree {
    type Error = Error;

    fn try_from(s: SkeletonSpec) -> Result<Self> {
        SkeletonTree::new(s.names, s.root, s.edges)
    }
}

impl From<SkeletonTree> for SkeletonSpec {
    fn from(t: SkeletonTree) -> Self {
        SkeletonSpec {
            names: t.names,
            root: t.root,
            edges: t.edges,
        }
    }
}

pub const TORSO: usize = 0;
pub const HEAD: usize = 1;
pub const LEFT_UPPER_ARM: usize = 2;
pub const RIGHT_UPPER_ARM: usize = 3;
pub const LEFT_LOWER_ARM: usize = 4;
pub const RIGHT_LOWER_ARM: usize = 5;

/// Six-part upper body rooted at the torso.
pub fn default_skeleton() -> SkeletonTree {
    let names = [
        "torso",
        "head",
        "left-upper-arm",
        "right-upper-arm",
        "left-lower-arm",
        "right-lower-arm",
    ]
    .map(String::from)
    .to_vec();
    SkeletonTree::new(
        names,
        TORSO,
        vec![
            (TORSO, HEAD),
            (TORSO, LEFT_UPPER_ARM),
            (TORSO, RIGHT_UPPER_ARM),
            (LEFT_UPPER_ARM, LEFT_LOWER_ARM),
            (RIGHT_UPPER_ARM, RIGHT_LOWER_ARM),
        ],
    )
    .expect("default skeleton is a tree")
}

/// Low-level descriptor an attribute is read from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    ColorHist,
    Hog,
    Lbp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeSpec {
    pub name: String,
    /// Associated part indices.
    pub parts: Vec<usize>,
    pub kind: FeatureKind,
    /// Number of values the attribute can take.
    pub values: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AttributeSchema {
    attributes: Vec<AttributeSpec>,
}

impl AttributeSchema {
    pub fn new(attributes: Vec<AttributeSpec>) -> Result<Self> {
        for a in &attributes {
            if a.values == 0 {
                return Err(Error::schema(format!("attribute {} has no values", a.name)));
            }
            if a.parts.is_empty() {
                return Err(Error::schema(format!("attribute {} has no parts", a.name)));
            }
            let mut sorted = a.parts.clone();
            sorted.sort_unstable();
            sorted.dedup();
            if sorted.len() != a.parts.len() {
                return Err(Error::schema(format!("attribute {} lists a part twice", a.name)));
            }
        }
        Ok(Self { attributes })
    }

    pub fn check_for(&self, tree: &SkeletonTree) -> Result<()> {
        for a in &self.attributes {
            if let Some(&p) = a.parts.iter().find(|&&p| p >= tree.part_count()) {
                return Err(Error::schema(format!(
                    "attribute {} refers to part {p}, skeleton has {}",
                    a.name,
                    tree.part_count()
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.attributes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.attributes.is_empty()
    }

    pub fn attributes(&self) -> &[AttributeSpec] {
        &self.attributes
    }

    pub fn get(&self, r: usize) -> &AttributeSpec {
        &self.attributes[r]
    }

    pub fn value_counts(&self) -> Vec<usize> {
        self.attributes.iter().map(|a| a.values).collect()
    }

    /// Number of joint attribute configurations.
    pub fn space_size(&self) -> u128 {
        self.attributes.iter().map(|a| a.values as u128).product()
    }
}

/// Sleeve (arms, color histogram, 3 values), neckline (torso + head, HOG,
/// 4 values), pattern (torso, LBP, 5 values).
pub fn default_schema() -> AttributeSchema {
    AttributeSchema::new(vec![
        AttributeSpec {
            name: "sleeve".into(),
            parts: vec![LEFT_UPPER_ARM, RIGHT_UPPER_ARM, LEFT_LOWER_ARM, RIGHT_LOWER_ARM],
            kind: FeatureKind::ColorHist,
            values: 3,
        },
        AttributeSpec {
            name: "neckline".into(),
            parts: vec![TORSO, HEAD],
            kind: FeatureKind::Hog,
            values: 4,
        },
        AttributeSpec {
            name: "pattern".into(),
            parts: vec![TORSO],
            kind: FeatureKind::Lbp,
            values: 5,
        },
    ])
    .expect("default schema is valid")
}

/// Block layout shared by [`ModelParams`] and
/// [`crate::features::JointFeature`]: per-part unary blocks, then per-edge
/// deformation blocks, then one `dim(F_r) x T_r` block per attribute
/// stored column-major (column `k` holds the weights for value `k`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamLayout {
    pub unary_dim: usize,
    pub parts: usize,
    pub edges: usize,
    /// `(descriptor dim, value count)` per attribute.
    pub attributes: Vec<(usize, usize)>,
}

pub const DEFORMATION_DIM: usize = 4;

impl ParamLayout {
    pub fn unary_offset(&self, part: usize) -> usize {
        part * self.unary_dim
    }

    pub fn pair_offset(&self, edge: usize) -> usize {
        self.parts * self.unary_dim + edge * DEFORMATION_DIM
    }

    pub fn attr_offset(&self, r: usize) -> usize {
        self.parts * self.unary_dim
            + self.edges * DEFORMATION_DIM
            + self.attributes[..r].iter().map(|(d, t)| d * t).sum::<usize>()
    }

    pub fn pose_len(&self) -> usize {
        self.parts * self.unary_dim + self.edges * DEFORMATION_DIM
    }

    pub fn len(&self) -> usize {
        self.pose_len() + self.attributes.iter().map(|(d, t)| d * t).sum::<usize>()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Weight vector `beta`, stored flat in [`ParamLayout`] order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    layout: ParamLayout,
    weights: Vec<f64>,
}

impl ModelParams {
    pub fn zeros(layout: ParamLayout) -> Self {
        let weights = vec![0.0; layout.len()];
        Self { layout, weights }
    }

    pub fn from_vec(layout: ParamLayout, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != layout.len() {
            return Err(Error::schema(format!(
                "weight vector has length {}, layout needs {}",
                weights.len(),
                layout.len()
            )));
        }
        Ok(Self { layout, weights })
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.weights
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.weights
    }

    pub fn unary(&self, part: usize) -> &[f64] {
        let o = self.layout.unary_offset(part);
        &self.weights[o..o + self.layout.unary_dim]
    }

    pub fn pair(&self, edge: usize) -> &[f64] {
        let o = self.layout.pair_offset(edge);
        &self.weights[o..o + DEFORMATION_DIM]
    }

    /// Whole `dim x T` block of attribute `r`.
    pub fn attr_block(&self, r: usize) -> &[f64] {
        let (d, t) = self.layout.attributes[r];
        let o = self.layout.attr_offset(r);
        &self.weights[o..o + d * t]
    }

    pub fn attr_block_mut(&mut self, r: usize) -> &mut [f64] {
        let (d, t) = self.layout.attributes[r];
        let o = self.layout.attr_offset(r);
        &mut self.weights[o..o + d * t]
    }

    /// Column `value` of attribute `r`'s block.
    pub fn attr_column(&self, r: usize, value: usize) -> &[f64] {
        let (d, _) = self.layout.attributes[r];
        let o = self.layout.attr_offset(r) + value * d;
        &self.weights[o..o + d]
    }

    /// Copy with every attribute block set to zero.
    pub fn without_attributes(&self) -> Self {
        let mut out = self.clone();
        let start = self.layout.pose_len();
        out.weights[start..].iter_mut().for_each(|w| *w = 0.0);
        out
    }

    pub fn norm_sq(&self) -> f64 {
        self.weights.iter().map(|w| w * w).sum()
    }
}

/// Sample polarity `z`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Polarity {
    Positive,
    Negative,
}

impl Polarity {
    pub fn sign(self) -> f64 {
        match self {
            Polarity::Positive => 1.0,
            Polarity::Negative => -1.0,
        }
    }

    pub fn from_sign(z: i64) -> Result<Self> {
        match z {
            1 => Ok(Polarity::Positive),
            -1 => Ok(Polarity::Negative),
            other => Err(Error::data(format!("polarity must be 1 or -1, got {other}"))),
        }
    }
}

/// One training example. Positives carry their ground-truth pose; attribute
/// labels are latent and never stored here.
#[derive(Debug, Clone)]
pub struct TrainingSample {
    pub image: Arc<ImageRaster>,
    pub grid: CandidateGrid,
    pub pose: Option<PoseAssignment>,
    pub polarity: Polarity,
}

impl TrainingSample {
    pub fn positive(image: Arc<ImageRaster>, grid: CandidateGrid, pose: PoseAssignment) -> Result<Self> {
        if !pose_is_valid(&pose, &grid) {
            return Err(Error::data("ground-truth pose does not index the grid"));
        }
        Ok(Self {
            image,
            grid,
            pose: Some(pose),
            polarity: Polarity::Positive,
        })
    }

    pub fn negative(image: Arc<ImageRaster>, grid: CandidateGrid) -> Self {
        Self {
            image,
            grid,
            pose: None,
            polarity: Polarity::Negative,
        }
    }
}

/// How mined negatives are collected and the cache is shrunk.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MiningMode {
    /// Collect the top label while `S* <= -1`, stop once `S* > -1`;
    /// the cache keeps entries with `<beta, v> >= -1`.
    #[default]
    Standard,
    /// Hardness tested on the signed score: collect while `z * S* < -1`
    /// (for negatives, `S* > 1`), stop otherwise; same cache shrinkage.
    Literal,
    /// Margin violators: collect while `S* > -1`, stop once `S* <= -1`;
    /// same cache shrinkage.
    Margin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Trade-off `C` between the regularizer and the hinge sum.
    pub c: f64,
    /// Relabel iterations `t_1`.
    pub relabel_iters: usize,
    /// Hard-negative mining iterations `t_2` per relabel iteration.
    pub mining_iters: usize,
    pub pegasos_epochs: usize,
    /// Project onto the ball of radius `1/sqrt(lambda)` after each step.
    pub pegasos_project: bool,
    pub max_infer_iters: usize,
    /// Score threshold for negatives. Fixed at -1.
    pub margin_threshold: f64,
    /// Maximum labels mined per negative sample.
    pub exclusion_cap: usize,
    pub cache_capacity: usize,
    pub mining: MiningMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            c: 1.0,
            relabel_iters: 5,
            mining_iters: 3,
            pegasos_epochs: 10,
            pegasos_project: true,
            max_infer_iters: 50,
            margin_threshold: -1.0,
            exclusion_cap: 20,
            cache_capacity: 50_000,
            mining: MiningMode::Standard,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c.is_finite() && self.c > 0.0) {
            return Err(Error::config(format!("C must be > 0, got {}", self.c)));
        }
        let counts = [
            ("relabel_iters", self.relabel_iters),
            ("mining_iters", self.mining_iters),
            ("pegasos_epochs", self.pegasos_epochs),
            ("max_infer_iters", self.max_infer_iters),
            ("exclusion_cap", self.exclusion_cap),
            ("cache_capacity", self.cache_capacity),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::config(format!("{name} must be >= 1")));
            }
        }
        if self.margin_threshold != -1.0 {
            return Err(Error::config("margin_threshold is fixed at -1"));
        }
        Ok(())
    }
}
