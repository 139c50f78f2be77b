//! File formats: datasets, models, predictions, reports, metrics and
//! run configuration.
//!
//! Datasets and predictions are line-delimited JSON. A dataset starts with
//! a header pinning the tree, attribute schema and feature configuration.
//! Candidate, pose and attribute indices are 1-based in files and 0-based
//! in memory.

use std::io::Cursor;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{ClusteringScore, F1Variant, PcpResult, DEFAULT_PCP_THRESHOLD};
use crate::features::{FeatureConfig, ModelStructure};
use crate::inference::InferenceResult;
use crate::learning::ReportRow;
use crate::model::{
    attributes_are_valid, AttributeAssignment, AttributeSchema, AttributeSpec, CandidateGrid,
    ImageRaster, JointLabel, ModelParams, PartCandidate, Polarity, PoseAssignment, SkeletonTree,
    TrainConfig, TrainingSample,
};
use crate::synth::SynthConfig;

pub const DATASET_FORMAT: &str = "lcpose-dataset";
pub const MODEL_FORMAT: &str = "lcpose-model";
pub const FORMAT_VERSION: u32 = 1;

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn parse_err(line: usize, e: impl std::fmt::Display) -> Error {
    Error::Parse {
        line,
        message: e.to_string(),
    }
}

fn check_header(format: &str, version: u32, want: &str) -> Result<()> {
    if format != want {
        return Err(Error::schema(format!("expected format {want:?}, found {format:?}")));
    }
    if version != FORMAT_VERSION {
        return Err(Error::schema(format!(
            "unsupported {want} version {version}, expected {FORMAT_VERSION}"
        )));
    }
    Ok(())
}

fn to_one_based(v: &[usize]) -> Vec<usize> {
    v.iter().map(|i| i + 1).collect()
}

fn from_one_based(v: &[usize], what: &str) -> Result<Vec<usize>> {
    v.iter()
        .map(|&i| {
            i.checked_sub(1)
                .ok_or_else(|| Error::data(format!("{what} indices are 1-based, found 0")))
        })
        .collect()
}

/// Decodes a PNG into an RGB raster.
pub fn decode_png(bytes: &[u8]) -> Result<ImageRaster> {
    let img = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)?.to_rgb8();
    ImageRaster::new(img.width() as usize, img.height() as usize, img.into_raw())
}

pub fn encode_png(raster: &ImageRaster) -> Result<Vec<u8>> {
    let img = image::RgbImage::from_raw(raster.width() as u32, raster.height() as u32, raster.data().to_vec())
        .ok_or_else(|| Error::data("raster buffer does not match its size"))?;
    let mut out = Cursor::new(Vec::new());
    img.write_to(&mut out, image::ImageFormat::Png)?;
    Ok(out.into_inner())
}

pub fn read_png(path: &Path) -> Result<ImageRaster> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_png(&bytes)
}

pub fn write_png(path: &Path, raster: &ImageRaster) -> Result<()> {
    std::fs::write(path, encode_png(raster)?).map_err(|e| Error::io(path, e))
}

/// Where a record's image lives in the file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ImageSource {
    /// Base64 PNG inside the record.
    Inline,
    /// Path as written, resolved against the dataset's directory.
    Path(String),
}

#[derive(Debug, Clone)]
pub struct DatasetRecord {
    pub sample: TrainingSample,
    /// Annotated attributes, used only for evaluation.
    pub attributes: Option<AttributeAssignment>,
    pub source: ImageSource,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub structure: ModelStructure,
    pub records: Vec<DatasetRecord>,
}

impl Dataset {
    /// Inline-image dataset from in-memory samples.
    pub fn from_samples(
        structure: ModelStructure,
        samples: Vec<TrainingSample>,
        attributes: Vec<Option<AttributeAssignment>>,
    ) -> Result<Self> {
        if samples.len() != attributes.len() {
            return Err(Error::data("one attribute entry per sample is required"));
        }
        let records = samples
            .into_iter()
            .zip(attributes)
            .map(|(sample, attributes)| DatasetRecord {
                sample,
                attributes,
                source: ImageSource::Inline,
            })
            .collect();
        Ok(Self { structure, records })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn samples(&self) -> Vec<TrainingSample> {
        self.records.iter().map(|r| r.sample.clone()).collect()
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DatasetHeader {
    format: String,
    version: u32,
    tree: SkeletonTree,
    schema: Vec<AttributeSpec>,
    features: FeatureConfig,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RecordLine {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    png_base64: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    path: Option<String>,
    /// Per part, `[x, y, s, theta]` per candidate.
    candidates: Vec<Vec<[f64; 4]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pose: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    attributes: Option<Vec<usize>>,
    polarity: i64,
}

fn structure_from(
    tree: SkeletonTree,
    schema: Vec<AttributeSpec>,
    features: FeatureConfig,
) -> Result<ModelStructure> {
    ModelStructure::new(tree, AttributeSchema::new(schema)?, features)
}

fn parse_record(line: &str, structure: &ModelStructure, base: &Path) -> Result<DatasetRecord> {
    let rec: RecordLine = serde_json::from_str(line).map_err(|e| Error::data(e.to_string()))?;
    let (image, source) = match (rec.png_base64, rec.path) {
        (Some(b64), None) => {
            let bytes = BASE64
                .decode(b64.as_bytes())
                .map_err(|e| Error::data(format!("bad base64 image: {e}")))?;
            (decode_png(&bytes)?, ImageSource::Inline)
        }
        (None, Some(p)) => (read_png(&base.join(&p))?, ImageSource::Path(p)),
        _ => return Err(Error::data("a record needs exactly one of png_base64 and path")),
    };
    let parts = rec
        .candidates
        .iter()
        .map(|cands| {
            cands
                .iter()
                .map(|&[x, y, s, theta]| PartCandidate::new(x, y, s, theta))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let grid = CandidateGrid::new(parts)?;
    grid.check_for(&structure.tree)?;
    let image = Arc::new(image);
    let sample = match (Polarity::from_sign(rec.polarity)?, rec.pose) {
        (Polarity::Positive, Some(pose)) => {
            TrainingSample::positive(image, grid, PoseAssignment(from_one_based(&pose, "pose")?))?
        }
        (Polarity::Positive, None) => return Err(Error::data("positive record without a pose")),
        (Polarity::Negative, None) => TrainingSample::negative(image, grid),
        (Polarity::Negative, Some(_)) => return Err(Error::data("negative record carries a pose")),
    };
    let attributes = match rec.attributes {
        Some(a) => {
            let a = AttributeAssignment(from_one_based(&a, "attribute")?);
            if !attributes_are_valid(&a, &structure.schema) {
                return Err(Error::data("attribute values do not fit the schema"));
            }
            Some(a)
        }
        None => None,
    };
    Ok(DatasetRecord {
        sample,
        attributes,
        source,
    })
}

/// Parses dataset text; image paths resolve against `base`. Record errors
/// carry their 1-based line number.
pub fn parse_dataset(text: &str, base: &Path) -> Result<Dataset> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, first) = lines.next().ok_or_else(|| parse_err(1, "empty dataset"))?;
    let header: DatasetHeader = serde_json::from_str(first).map_err(|e| parse_err(1, e))?;
    check_header(&header.format, header.version, DATASET_FORMAT)?;
    let structure = structure_from(header.tree, header.schema, header.features)?;
    let records = lines
        .map(|(i, l)| parse_record(l, &structure, base).map_err(|e| parse_err(i + 1, e)))
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset { structure, records })
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let base = path.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."));
    parse_dataset(&read_text(path)?, &base)
}

pub fn dataset_to_string(ds: &Dataset) -> Result<String> {
    let header = DatasetHeader {
        format: DATASET_FORMAT.into(),
        version: FORMAT_VERSION,
        tree: ds.structure.tree.clone(),
        schema: ds.structure.schema.attributes().to_vec(),
        features: ds.structure.features.clone(),
    };
    let mut out = serde_json::to_string(&header).map_err(|e| Error::data(e.to_string()))?;
    out.push('\n');
    for r in &ds.records {
        let (png_base64, path) = match &r.source {
            ImageSource::Inline => (Some(BASE64.encode(encode_png(&r.sample.image)?)), None),
            ImageSource::Path(p) => (None, Some(p.clone())),
        };
        let line = RecordLine {
            png_base64,
            path,
            candidates: r
                .sample
                .grid
                .parts()
                .iter()
                .map(|cs| cs.iter().map(|c| [c.x, c.y, c.s, c.theta]).collect())
                .collect(),
            pose: r.sample.pose.as_ref().map(|p| to_one_based(&p.0)),
            attributes: r.attributes.as_ref().map(|a| to_one_based(&a.0)),
            polarity: r.sample.polarity.sign() as i64,
        };
        out.push_str(&serde_json::to_string(&line).map_err(|e| Error::data(e.to_string()))?);
        out.push('\n');
    }
    Ok(out)
}

/// Writes the dataset. Images of path-sourced records are not rewritten.
pub fn write_dataset(path: &Path, ds: &Dataset) -> Result<()> {
    write_text(path, &dataset_to_string(ds)?)
}

/// A trained model with the structure and settings that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub structure: ModelStructure,
    pub params: ModelParams,
    pub seed: u64,
    pub train_config: TrainConfig,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    format: String,
    version: u32,
    features: FeatureConfig,
    tree: SkeletonTree,
    schema: Vec<AttributeSpec>,
    seed: u64,
    train_config: TrainConfig,
    params: ParamBlocks,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamBlocks {
    /// Per part.
    unary: Vec<Vec<f64>>,
    /// Per edge: `[dx, dy, dx^2, dy^2]` weights.
    deformation: Vec<Vec<f64>>,
    /// Per attribute, `dim(F_r) x T_r` column-major.
    attributes: Vec<Vec<f64>>,
}

fn check_block(kind: &str, index: usize, got: usize, want: usize) -> Result<()> {
    if got != want {
        return Err(Error::schema(format!(
            "{kind} block {index} has dimension {got}, layout requires {want}"
        )));
    }
    Ok(())
}

fn check_count(kind: &str, got: usize, want: usize) -> Result<()> {
    if got != want {
        return Err(Error::schema(format!("model has {got} {kind} blocks, layout requires {want}")));
    }
    Ok(())
}

pub fn model_to_string(model: &Model) -> Result<String> {
    let p = &model.params;
    let l = p.layout();
    let file = ModelFile {
        format: MODEL_FORMAT.into(),
        version: FORMAT_VERSION,
        features: model.structure.features.clone(),
        tree: model.structure.tree.clone(),
        schema: model.structure.schema.attributes().to_vec(),
        seed: model.seed,
        train_config: model.train_config.clone(),
        params: ParamBlocks {
            unary: (0..l.parts).map(|i| p.unary(i).to_vec()).collect(),
            deformation: (0..l.edges).map(|e| p.pair(e).to_vec()).collect(),
            attributes: (0..l.attributes.len()).map(|r| p.attr_block(r).to_vec()).collect(),
        },
    };
    let mut out = serde_json::to_string(&file).map_err(|e| Error::data(e.to_string()))?;
    out.push('\n');
    Ok(out)
}

/// Parses a model and checks every block against the layout its own
/// structure implies.
pub fn parse_model(text: &str) -> Result<Model> {
    let file: ModelFile = serde_json::from_str(text).map_err(|e| parse_err(e.line(), e))?;
    check_header(&file.format, file.version, MODEL_FORMAT)?;
    let structure = structure_from(file.tree, file.schema, file.features)?;
    file.train_config.validate()?;
    let layout = structure.layout();
    let b = file.params;
    check_count("unary", b.unary.len(), layout.parts)?;
    check_count("deformation", b.deformation.len(), layout.edges)?;
    check_count("attribute", b.attributes.len(), layout.attributes.len())?;
    let mut weights = Vec::with_capacity(layout.len());
    for (i, u) in b.unary.iter().enumerate() {
        check_block("unary", i, u.len(), layout.unary_dim)?;
        weights.extend_from_slice(u);
    }
    for (e, d) in b.deformation.iter().enumerate() {
        check_block("deformation", e, d.len(), crate::model::DEFORMATION_DIM)?;
        weights.extend_from_slice(d);
    }
    for (r, (a, &(dim, t))) in b.attributes.iter().zip(&layout.attributes).enumerate() {
        check_block("attribute", r, a.len(), dim * t)?;
        weights.extend_from_slice(a);
    }
    if weights.iter().any(|w| !w.is_finite()) {
        return Err(Error::data("model weights must be finite"));
    }
    let params = ModelParams::from_vec(layout, weights)?;
    Ok(Model {
        structure,
        params,
        seed: file.seed,
        train_config: file.train_config,
    })
}

pub fn read_model(path: &Path) -> Result<Model> {
    parse_model(&read_text(path)?)
}

pub fn write_model(path: &Path, model: &Model) -> Result<()> {
    write_text(path, &model_to_string(model)?)
}

/// Fails with a schema error naming the first dimension where a model and a
/// dataset disagree.
pub fn check_compatible(model: &ModelStructure, data: &ModelStructure) -> Result<()> {
    let (a, b) = (model.tree.part_count(), data.tree.part_count());
    if a != b {
        return Err(Error::schema(format!("part count: model {a}, dataset {b}")));
    }
    if model.tree != data.tree {
        return Err(Error::schema("skeleton tree: model and dataset edges differ"));
    }
    let (a, b) = (model.schema.len(), data.schema.len());
    if a != b {
        return Err(Error::schema(format!("attribute count: model {a}, dataset {b}")));
    }
    for (r, (x, y)) in model.schema.attributes().iter().zip(data.schema.attributes()).enumerate() {
        if x.values != y.values {
            return Err(Error::schema(format!(
                "attribute {r} ({}) value count: model {}, dataset {}",
                x.name, x.values, y.values
            )));
        }
        if x != y {
            return Err(Error::schema(format!("attribute {r} ({}) definition differs", x.name)));
        }
    }
    if model.features != data.features {
        let (a, b) = (
            serde_json::to_value(&model.features).unwrap_or_default(),
            serde_json::to_value(&data.features).unwrap_or_default(),
        );
        if let (Some(a), Some(b)) = (a.as_object(), b.as_object()) {
            if let Some((k, v)) = a.iter().find(|(k, v)| b.get(*k) != Some(*v)) {
                let other = b.get(k).cloned().unwrap_or_default();
                return Err(Error::schema(format!("feature config {k}: model {v}, dataset {other}")));
            }
        }
        return Err(Error::schema("feature configuration differs"));
    }
    Ok(())
}

/// One inferred label for one dataset record.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub index: usize,
    pub label: JointLabel,
    pub score: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl Prediction {
    pub fn from_result(index: usize, r: &InferenceResult) -> Self {
        Self {
            index,
            label: r.label.clone(),
            score: r.score,
            iterations: r.iterations,
            converged: r.converged,
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PredictionLine {
    index: usize,
    pose: Vec<usize>,
    attributes: Vec<usize>,
    score: f64,
    iterations: usize,
    converged: bool,
}

pub fn predictions_to_string(preds: &[Prediction]) -> Result<String> {
    let mut out = String::new();
    for p in preds {
        let line = PredictionLine {
            index: p.index,
            pose: to_one_based(&p.label.pose.0),
            attributes: to_one_based(&p.label.attributes.0),
            score: p.score,
            iterations: p.iterations,
            converged: p.converged,
        };
        out.push_str(&serde_json::to_string(&line).map_err(|e| Error::data(e.to_string()))?);
        out.push('\n');
    }
    Ok(out)
}

pub fn parse_predictions(text: &str) -> Result<Vec<Prediction>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let p: PredictionLine = serde_json::from_str(l).map_err(|e| parse_err(i + 1, e))?;
            Ok(Prediction {
                index: p.index,
                label: JointLabel {
                    pose: PoseAssignment(from_one_based(&p.pose, "pose").map_err(|e| parse_err(i + 1, e))?),
                    attributes: AttributeAssignment(
                        from_one_based(&p.attributes, "attribute").map_err(|e| parse_err(i + 1, e))?,
                    ),
                },
                score: p.score,
                iterations: p.iterations,
                converged: p.converged,
            })
        })
        .collect()
}

pub fn read_predictions(path: &Path) -> Result<Vec<Prediction>> {
    parse_predictions(&read_text(path)?)
}

pub fn write_predictions(path: &Path, preds: &[Prediction]) -> Result<()> {
    write_text(path, &predictions_to_string(preds)?)
}

/// One JSON object per training row.
pub fn report_to_string(rows: &[ReportRow]) -> Result<String> {
    let mut out = String::new();
    for r in rows {
        out.push_str(&serde_json::to_string(r).map_err(|e| Error::data(e.to_string()))?);
        out.push('\n');
    }
    Ok(out)
}

pub fn parse_report(text: &str) -> Result<Vec<ReportRow>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| parse_err(i + 1, e)))
        .collect()
}

/// Evaluation output: PCP per part and total, clustering F1 per attribute
/// and total when annotations exist.
#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub part_names: Vec<String>,
    pub pcp: PcpResult,
    pub attribute_names: Vec<String>,
    pub f1: Option<ClusteringScore>,
}

/// `name<TAB>value` lines. PCP values are percentages; an undefined part
/// rate prints `nan`.
pub fn metrics_to_string(m: &Metrics) -> String {
    let mut out = String::new();
    for (name, rate) in m.part_names.iter().zip(&m.pcp.per_part) {
        let v = rate.map(|r| format!("{:.4}", 100.0 * r)).unwrap_or_else(|| "nan".into());
        out.push_str(&format!("pcp.{name}\t{v}\n"));
    }
    out.push_str(&format!("pcp.total\t{:.4}\n", 100.0 * m.pcp.total));
    match &m.f1 {
        Some(f1) => {
            for (name, v) in m.attribute_names.iter().zip(&f1.per_attribute) {
                out.push_str(&format!("f1.{name}\t{v:.6}\n"));
            }
            out.push_str(&format!("f1.total\t{:.6}\n", f1.total));
        }
        None => out.push_str("f1\tunavailable\n"),
    }
    out
}

/// Reads `name<TAB>value` lines back into pairs.
pub fn parse_metrics(text: &str) -> Result<Vec<(String, String)>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.split_once('\t')
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .ok_or_else(|| parse_err(i + 1, "expected name<TAB>value"))
        })
        .collect()
}

/// Evaluation settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub pcp_threshold: f64,
    pub f1_variant: F1Variant,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            pcp_threshold: DEFAULT_PCP_THRESHOLD,
            f1_variant: F1Variant::default(),
        }
    }
}

/// Inference settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InferConfig {
    pub max_iters: usize,
}

impl Default for InferConfig {
    fn default() -> Self {
        Self {
            max_iters: TrainConfig::default().max_infer_iters,
        }
    }
}

/// TOML run configuration; every section and key is optional.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub infer: InferConfig,
    pub eval: EvalConfig,
    pub synth: SynthConfig,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&read_text(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.synth.validate()?;
        if self.infer.max_iters == 0 {
            return Err(Error::config("infer.max_iters must be at least 1"));
        }
        if !(self.eval.pcp_threshold > 0.0 && self.eval.pcp_threshold.is_finite()) {
            return Err(Error::config("eval.pcp_threshold must be positive"));
        }
        Ok(())
    }
}
