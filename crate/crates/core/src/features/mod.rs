//! Descriptors and the joint feature map `J(x, y)`.
//!
//! `J` is laid out exactly like [`ModelParams`]: one HOG block per part,
//! one 4-vector deformation block per tree edge, then one
//! `dim(F_r) x T_r` outer-product block per attribute. An attribute that
//! spans several parts uses the mean of the per-part descriptors, which
//! lets pose inference split the attribute score across tree nodes.

mod color;
mod hog;
mod lbp;
mod patch;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    attributes_are_valid, pose_is_valid, AttributeAssignment, AttributeSchema, CandidateGrid,
    FeatureKind, ImageRaster, JointLabel, ModelParams, ParamLayout, PartCandidate,
    PoseAssignment, SkeletonTree, DEFORMATION_DIM,
};

pub use color::{color_dim, color_histogram};
pub use hog::{cell_histograms, hog_descriptor, hog_dim};
pub use lbp::{lbp_codes, lbp_descriptor, transitions, uniform_bin_table, LBP_BINS};
pub use patch::{bilinear, extract_patch, sample_point, Patch};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    /// Patch samples along the box's long side.
    pub patch_rows: usize,
    /// Patch samples across the box.
    pub patch_cols: usize,
    /// Box width as a fraction of its length `s`.
    pub box_aspect: f64,
    pub hog_cell: usize,
    pub hog_bins: usize,
    /// Block side in cells; blocks overlap with a one-cell stride.
    pub hog_block: usize,
    /// L2-Hys clipping level.
    pub hog_clip: f64,
    pub lbp_neighbors: usize,
    pub lbp_radius: usize,
    /// Bins per RGB channel.
    pub color_bins: usize,
    /// Length unit, in pixels, for the deformation offsets in `J`.
    pub deformation_unit: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            patch_rows: 64,
            patch_cols: 32,
            box_aspect: 0.5,
            hog_cell: 8,
            hog_bins: 9,
            hog_block: 2,
            hog_clip: 0.2,
            lbp_neighbors: 8,
            lbp_radius: 1,
            color_bins: 8,
            deformation_unit: 1.0,
        }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("patch_rows", self.patch_rows),
            ("patch_cols", self.patch_cols),
            ("hog_cell", self.hog_cell),
            ("hog_bins", self.hog_bins),
            ("hog_block", self.hog_block),
            ("color_bins", self.color_bins),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::config(format!("{name} must be >= 1")));
            }
        }
        if !self.patch_rows.is_multiple_of(self.hog_cell) || !self.patch_cols.is_multiple_of(self.hog_cell) {
            return Err(Error::config("patch size must be divisible by the HOG cell size"));
        }
        if self.patch_rows / self.hog_cell < self.hog_block || self.patch_cols / self.hog_cell < self.hog_block {
            return Err(Error::config("patch holds fewer cells than one HOG block"));
        }
        if self.patch_rows < 3 || self.patch_cols < 3 {
            return Err(Error::config("patch must be at least 3x3"));
        }
        if (self.lbp_neighbors, self.lbp_radius) != (8, 1) {
            return Err(Error::config("only 8-neighbour radius-1 uniform LBP is supported"));
        }
        if !(self.box_aspect > 0.0 && self.box_aspect.is_finite()) {
            return Err(Error::config("box_aspect must be > 0"));
        }
        if !(self.hog_clip > 0.0 && self.hog_clip <= 1.0) {
            return Err(Error::config("hog_clip must lie in (0, 1]"));
        }
        if !(self.deformation_unit > 0.0 && self.deformation_unit.is_finite()) {
            return Err(Error::config("deformation_unit must be > 0"));
        }
        Ok(())
    }

    pub fn descriptor_dim(&self, kind: FeatureKind) -> usize {
        match kind {
            FeatureKind::ColorHist => color_dim(self),
            FeatureKind::Hog => hog_dim(self),
            FeatureKind::Lbp => LBP_BINS,
        }
    }

    pub fn layout(&self, tree: &SkeletonTree, schema: &AttributeSchema) -> ParamLayout {
        ParamLayout {
            unary_dim: hog_dim(self),
            parts: tree.part_count(),
            edges: tree.edges().len(),
            attributes: schema
                .attributes()
                .iter()
                .map(|a| (self.descriptor_dim(a.kind), a.values))
                .collect(),
        }
    }
}

/// Descriptor of `kind` computed on one patch.
pub fn base_descriptor(patch: &Patch, kind: FeatureKind, cfg: &FeatureConfig) -> Result<Vec<f64>> {
    match kind {
        FeatureKind::ColorHist => Ok(color_histogram(patch, cfg)),
        FeatureKind::Hog => hog_descriptor(patch, cfg),
        FeatureKind::Lbp => lbp_descriptor(patch),
    }
}

/// `[dx, dy, dx^2, dy^2]` with `dx = x_j - x_i`, `dy = y_j - y_i`.
pub fn deformation_feature(ci: &PartCandidate, cj: &PartCandidate) -> [f64; DEFORMATION_DIM] {
    let dx = cj.x - ci.x;
    let dy = cj.y - ci.y;
    [dx, dy, dx * dx, dy * dy]
}

/// Deformation of an edge as it enters `J`: offsets measured in
/// `cfg.deformation_unit` pixels.
pub fn edge_deformation(parent: &PartCandidate, child: &PartCandidate, cfg: &FeatureConfig) -> [f64; DEFORMATION_DIM] {
    if cfg.deformation_unit == 1.0 {
        return deformation_feature(parent, child);
    }
    let u = cfg.deformation_unit;
    let scale = |c: &PartCandidate| PartCandidate {
        x: c.x / u,
        y: c.y / u,
        ..*c
    };
    deformation_feature(&scale(parent), &scale(child))
}

/// One-hot vector of length `count` with the `value`-th entry set (0-based).
pub fn indicator(value: usize, count: usize) -> Result<Vec<f64>> {
    if value >= count {
        return Err(Error::schema(format!(
            "attribute value {} outside 1..={count}",
            value + 1
        )));
    }
    let mut v = vec![0.0; count];
    v[value] = 1.0;
    Ok(v)
}

/// Vectorized outer product `f (x) e_value`: column `value` holds `f`, the
/// other columns are zero.
pub fn outer_with_indicator(f: &[f64], value: usize, count: usize) -> Result<Vec<f64>> {
    let e = indicator(value, count)?;
    let mut out = Vec::with_capacity(f.len() * count);
    for ek in e {
        out.extend(f.iter().map(|x| x * ek));
    }
    Ok(out)
}

/// Tree, attribute schema and feature configuration, checked against each
/// other. Fixes the parameter layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelStructure {
    pub tree: SkeletonTree,
    pub schema: AttributeSchema,
    pub features: FeatureConfig,
}

impl ModelStructure {
    pub fn new(tree: SkeletonTree, schema: AttributeSchema, features: FeatureConfig) -> Result<Self> {
        features.validate()?;
        schema.check_for(&tree)?;
        Ok(Self { tree, schema, features })
    }

    pub fn default_upper_body() -> Self {
        Self::new(
            crate::model::default_skeleton(),
            crate::model::default_schema(),
            FeatureConfig::default(),
        )
        .expect("default structure is consistent")
    }

    pub fn layout(&self) -> ParamLayout {
        self.features.layout(&self.tree, &self.schema)
    }

    pub fn check_params(&self, params: &ModelParams) -> Result<()> {
        let want = self.layout();
        if *params.layout() != want {
            return Err(Error::schema(format!(
                "parameter layout {:?} does not match feature layout {:?}",
                params.layout(),
                want
            )));
        }
        Ok(())
    }

    /// Parts whose candidates need a descriptor of `kind` for some attribute.
    fn needs(&self, part: usize, kind: FeatureKind) -> bool {
        self.schema
            .attributes()
            .iter()
            .any(|a| a.kind == kind && a.parts.contains(&part))
    }
}

/// `F_r(P_r)`: mean over the attribute's parts of its base descriptor on the
/// selected candidates' patches.
pub fn attribute_part_descriptor(
    image: &ImageRaster,
    grid: &CandidateGrid,
    pose: &PoseAssignment,
    r: usize,
    schema: &AttributeSchema,
    cfg: &FeatureConfig,
) -> Result<Vec<f64>> {
    if !pose_is_valid(pose, grid) {
        return Err(Error::data("pose does not index the candidate grid"));
    }
    let spec = schema.get(r);
    let mut acc = vec![0.0; cfg.descriptor_dim(spec.kind)];
    for &part in &spec.parts {
        let patch = extract_patch(image, &grid.candidates(part)[pose.0[part]], cfg)?;
        let d = base_descriptor(&patch, spec.kind, cfg)?;
        acc.iter_mut().zip(&d).for_each(|(a, x)| *a += x);
    }
    let n = spec.parts.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    Ok(acc)
}

/// Per-attribute blocks `F_r(P_r) (x) L(a_r)`.
pub fn pose_attribute_feature(
    image: &ImageRaster,
    grid: &CandidateGrid,
    pose: &PoseAssignment,
    attributes: &AttributeAssignment,
    schema: &AttributeSchema,
    cfg: &FeatureConfig,
) -> Result<Vec<Vec<f64>>> {
    if !attributes_are_valid(attributes, schema) {
        return Err(Error::schema("attribute assignment does not fit the schema"));
    }
    (0..schema.len())
        .map(|r| {
            let f = attribute_part_descriptor(image, grid, pose, r, schema, cfg)?;
            outer_with_indicator(&f, attributes.0[r], schema.get(r).values)
        })
        .collect()
}

/// Dense vector in [`ParamLayout`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct JointFeature {
    layout: ParamLayout,
    values: Vec<f64>,
}

impl JointFeature {
    pub fn from_vec(layout: ParamLayout, values: Vec<f64>) -> Result<Self> {
        if values.len() != layout.len() {
            return Err(Error::schema(format!(
                "feature vector has length {}, layout needs {}",
                values.len(),
                layout.len()
            )));
        }
        Ok(Self { layout, values })
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    pub fn unary(&self, part: usize) -> &[f64] {
        let o = self.layout.unary_offset(part);
        &self.values[o..o + self.layout.unary_dim]
    }

    pub fn pair(&self, edge: usize) -> &[f64] {
        let o = self.layout.pair_offset(edge);
        &self.values[o..o + DEFORMATION_DIM]
    }

    pub fn attr_block(&self, r: usize) -> &[f64] {
        let (d, t) = self.layout.attributes[r];
        let o = self.layout.attr_offset(r);
        &self.values[o..o + d * t]
    }

    /// `<beta, J>` accumulated block by block.
    pub fn dot(&self, params: &ModelParams) -> Result<f64> {
        if *params.layout() != self.layout {
            return Err(Error::schema("feature and parameter layouts differ"));
        }
        let mut s = 0.0;
        for i in 0..self.layout.parts {
            s += dot(params.unary(i), self.unary(i));
        }
        for e in 0..self.layout.edges {
            s += dot(params.pair(e), self.pair(e));
        }
        for r in 0..self.layout.attributes.len() {
            s += dot(params.attr_block(r), self.attr_block(r));
        }
        Ok(s)
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `J(x, y)` computed straight from the image.
pub fn joint_feature(
    image: &ImageRaster,
    grid: &CandidateGrid,
    label: &JointLabel,
    structure: &ModelStructure,
) -> Result<JointFeature> {
    let cfg = &structure.features;
    let tree = &structure.tree;
    grid.check_for(tree)?;
    if !pose_is_valid(&label.pose, grid) {
        return Err(Error::data("pose does not index the candidate grid"));
    }
    let layout = structure.layout();
    let mut values = Vec::with_capacity(layout.len());
    let selected = grid.select(&label.pose);
    for c in &selected {
        let patch = extract_patch(image, c, cfg)?;
        values.extend(hog_descriptor(&patch, cfg)?);
    }
    for &(p, c) in tree.edges() {
        values.extend(edge_deformation(&selected[p], &selected[c], cfg));
    }
    for block in pose_attribute_feature(image, grid, &label.pose, &label.attributes, &structure.schema, cfg)? {
        values.extend(block);
    }
    JointFeature::from_vec(layout, values)
}

/// Descriptors of one candidate.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateDescriptors {
    pub hog: Vec<f64>,
    pub color: Option<Vec<f64>>,
    pub lbp: Option<Vec<f64>>,
}

impl CandidateDescriptors {
    pub fn get(&self, kind: FeatureKind) -> Option<&[f64]> {
        match kind {
            FeatureKind::Hog => Some(&self.hog),
            FeatureKind::ColorHist => self.color.as_deref(),
            FeatureKind::Lbp => self.lbp.as_deref(),
        }
    }
}

/// Every descriptor the model needs for every candidate of one grid,
/// computed once so that inference and training never touch pixels again.
#[derive(Debug, Clone)]
pub struct FeatureCache {
    grid: CandidateGrid,
    descriptors: Vec<Vec<CandidateDescriptors>>,
}

impl FeatureCache {
    pub fn build(image: &ImageRaster, grid: &CandidateGrid, structure: &ModelStructure) -> Result<Self> {
        grid.check_for(&structure.tree)?;
        let cfg = &structure.features;
        let mut descriptors = Vec::with_capacity(grid.part_count());
        for (part, list) in grid.parts().iter().enumerate() {
            let want_color = structure.needs(part, FeatureKind::ColorHist);
            let want_lbp = structure.needs(part, FeatureKind::Lbp);
            let mut per_part = Vec::with_capacity(list.len());
            for c in list {
                let patch = extract_patch(image, c, cfg)?;
                per_part.push(CandidateDescriptors {
                    hog: hog_descriptor(&patch, cfg)?,
                    color: want_color.then(|| color_histogram(&patch, cfg)),
                    lbp: if want_lbp { Some(lbp_descriptor(&patch)?) } else { None },
                });
            }
            descriptors.push(per_part);
        }
        Ok(Self {
            grid: grid.clone(),
            descriptors,
        })
    }

    /// Cache over externally supplied descriptors. Each candidate must carry
    /// every descriptor kind the schema asks of its part.
    pub fn from_descriptors(
        grid: CandidateGrid,
        descriptors: Vec<Vec<CandidateDescriptors>>,
        structure: &ModelStructure,
    ) -> Result<Self> {
        grid.check_for(&structure.tree)?;
        if descriptors.len() != grid.part_count()
            || descriptors.iter().zip(grid.parts()).any(|(d, c)| d.len() != c.len())
        {
            return Err(Error::schema("descriptor table does not match the candidate grid"));
        }
        let cfg = &structure.features;
        for (part, list) in descriptors.iter().enumerate() {
            for d in list {
                if d.hog.len() != hog_dim(cfg) {
                    return Err(Error::schema("HOG descriptor has the wrong dimension"));
                }
                for a in structure.schema.attributes().iter().filter(|a| a.parts.contains(&part)) {
                    match d.get(a.kind) {
                        Some(v) if v.len() == cfg.descriptor_dim(a.kind) => {}
                        _ => {
                            return Err(Error::schema(format!(
                                "part {part} lacks a {:?} descriptor for attribute {}",
                                a.kind, a.name
                            )))
                        }
                    }
                }
            }
        }
        Ok(Self { grid, descriptors })
    }

    pub fn grid(&self) -> &CandidateGrid {
        &self.grid
    }

    pub fn descriptors(&self, part: usize, candidate: usize) -> &CandidateDescriptors {
        &self.descriptors[part][candidate]
    }

    pub fn hog(&self, part: usize, candidate: usize) -> &[f64] {
        &self.descriptors[part][candidate].hog
    }

    pub fn descriptor(&self, part: usize, candidate: usize, kind: FeatureKind) -> &[f64] {
        self.descriptors[part][candidate]
            .get(kind)
            .expect("cache holds every descriptor the schema uses")
    }

    /// `F_r(P_r)` from cached descriptors.
    pub fn attribute_descriptor(&self, structure: &ModelStructure, r: usize, pose: &PoseAssignment) -> Vec<f64> {
        let spec = structure.schema.get(r);
        let mut acc = vec![0.0; structure.features.descriptor_dim(spec.kind)];
        for &part in &spec.parts {
            let d = self.descriptor(part, pose.0[part], spec.kind);
            acc.iter_mut().zip(d).for_each(|(a, x)| *a += x);
        }
        let n = spec.parts.len() as f64;
        acc.iter_mut().for_each(|a| *a /= n);
        acc
    }

    /// `J(x, y)` from cached descriptors; same values as [`joint_feature`].
    pub fn joint_feature(&self, structure: &ModelStructure, label: &JointLabel) -> Result<JointFeature> {
        if !pose_is_valid(&label.pose, &self.grid) {
            return Err(Error::data("pose does not index the candidate grid"));
        }
        if !attributes_are_valid(&label.attributes, &structure.schema) {
            return Err(Error::schema("attribute assignment does not fit the schema"));
        }
        let layout = structure.layout();
        let mut values = Vec::with_capacity(layout.len());
        for (part, &c) in label.pose.0.iter().enumerate() {
            values.extend_from_slice(self.hog(part, c));
        }
        let selected = self.grid.select(&label.pose);
        for &(p, c) in structure.tree.edges() {
            values.extend(edge_deformation(&selected[p], &selected[c], &structure.features));
        }
        for (r, spec) in structure.schema.attributes().iter().enumerate() {
            let f = self.attribute_descriptor(structure, r, &label.pose);
            values.extend(outer_with_indicator(&f, label.attributes.0[r], spec.values)?);
        }
        JointFeature::from_vec(layout, values)
    }
}
