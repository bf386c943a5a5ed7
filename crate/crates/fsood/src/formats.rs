//! JSON, JSON-lines and CSV formats read and written by the command line.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use fsood_core::evaluation::{BoxGeom, Detection, EvalReport};
use fsood_core::fewshot::{SplitSpec, DOTA_NOVEL_CATEGORIES, DOTA_V1_CATEGORIES};
use fsood_core::geometry::GeometryError;
use fsood_core::membank::{EnqueuePolicy, MemoryBank, ProposalRecord};
use fsood_core::toytrain::LossRecord;
use fsood_core::{AxisAlignedBox, OrientedBox};

use crate::error::{Error, Result};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Every JSON document written by the tool starts with these two fields.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Envelope<C, B> {
    pub tool_version: String,
    pub resolved_config: C,
    #[serde(flatten)]
    pub body: B,
}

impl<C, B> Envelope<C, B> {
    pub fn new(resolved_config: C, body: B) -> Self {
        Self {
            tool_version: TOOL_VERSION.to_string(),
            resolved_config,
            body,
        }
    }
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable value");
    s.push('\n');
    s
}

pub fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|e| Error::schema(path, e.line(), e.to_string()))
}

/// `{"categories"?: [...], "base"?: [...], "novel": [...]}`. Categories
/// default to the DOTA v1.0 list and base to every non-novel category.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub categories: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base: Option<Vec<String>>,
    pub novel: Vec<String>,
}

impl SplitFile {
    pub fn dota() -> Self {
        Self {
            categories: None,
            base: None,
            novel: DOTA_NOVEL_CATEGORIES.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn category_names(&self) -> Vec<String> {
        match &self.categories {
            Some(c) => c.clone(),
            None => DOTA_V1_CATEGORIES.iter().map(|s| s.to_string()).collect(),
        }
    }

    /// Category names and the resolved split.
    pub fn resolve(&self, path: &Path) -> Result<(Vec<String>, SplitSpec)> {
        let categories = self.category_names();
        let lookup = |name: &String| -> Result<u32> {
            categories
                .iter()
                .position(|c| c == name)
                .map(|i| i as u32)
                .ok_or_else(|| Error::schema(path, 0, format!("unknown category {name:?}")))
        };
        let novel: Vec<u32> = self.novel.iter().map(lookup).collect::<Result<_>>()?;
        let base: Vec<u32> = match &self.base {
            Some(b) => b.iter().map(lookup).collect::<Result<_>>()?,
            None => (0..categories.len() as u32).filter(|c| !novel.contains(c)).collect(),
        };
        let spec = SplitSpec::new(base, novel).map_err(|e| Error::schema(path, 0, e.to_string()))?;
        Ok((categories, spec))
    }
}

pub fn load_split(path: Option<&Path>) -> Result<(SplitFile, Vec<String>, SplitSpec)> {
    let file = match path {
        Some(p) => read_json::<SplitFile>(p)?,
        None => SplitFile::dota(),
    };
    let (names, spec) = file.resolve(path.unwrap_or(Path::new("<default split>")))?;
    Ok((file, names, spec))
}

/// Category given by name or by id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CategoryRef {
    Id(u32),
    Name(String),
}

/// One line of a detections file. `box` is `[cx, cy, w, h, angle]` or
/// `[xmin, ymin, xmax, ymax]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionLine {
    pub image: String,
    pub category: CategoryRef,
    #[serde(rename = "box")]
    pub bbox: Vec<f64>,
    pub score: f64,
}

pub fn parse_box(values: &[f64]) -> std::result::Result<BoxGeom, String> {
    let describe = |e: GeometryError| e.to_string();
    match values.len() {
        5 => OrientedBox::new(values[0], values[1], values[2], values[3], values[4])
            .map(BoxGeom::Oriented)
            .map_err(describe),
        4 => AxisAlignedBox::new(values[0], values[1], values[2], values[3])
            .map(BoxGeom::Axis)
            .map_err(describe),
        n => Err(format!("box needs 4 or 5 numbers, found {n}")),
    }
}

/// Reads a detections file. Image names are mapped through `images`; names
/// not present there get fresh ids after the known ones.
pub fn read_detections(
    path: &Path,
    categories: &[String],
    images: &mut BTreeMap<String, u32>,
) -> Result<Vec<Detection>> {
    let text = read_text(path)?;
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let lineno = n + 1;
        if line.trim().is_empty() {
            continue;
        }
        let row: DetectionLine =
            serde_json::from_str(line).map_err(|e| Error::schema(path, lineno, e.to_string()))?;
        let category = match &row.category {
            CategoryRef::Id(id) if (*id as usize) < categories.len() => *id,
            CategoryRef::Name(name) => categories
                .iter()
                .position(|c| c == name)
                .ok_or_else(|| Error::schema(path, lineno, format!("unknown category {name:?}")))?
                as u32,
            CategoryRef::Id(id) => return Err(Error::schema(path, lineno, format!("unknown category id {id}"))),
        };
        if !(row.score >= 0.0 && row.score <= 1.0) {
            return Err(Error::schema(path, lineno, "score must lie in [0, 1]"));
        }
        let geom = parse_box(&row.bbox).map_err(|m| Error::schema(path, lineno, m))?;
        let next = images.len() as u32;
        let image = *images.entry(row.image).or_insert(next);
        out.push(Detection {
            image,
            category,
            geom,
            score: row.score,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskedImage {
    pub image: String,
    /// `[cx, cy, w, h, angle]` per unselected instance.
    pub regions: Vec<[f64; 5]>,
}

/// The K-shot episode written by `sample-shots` and read by `mask`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeBody {
    pub seed: u64,
    pub k: usize,
    pub categories: Vec<String>,
    pub selected: Vec<u64>,
    pub masked: Vec<MaskedImage>,
}

/// Format tag of bank checkpoints.
pub const BANK_FORMAT: &str = "fsood-memory-bank";
pub const BANK_VERSION: u32 = 1;

/// Bank checkpoint: records oldest first, embeddings as written by the
/// trainer (unit norm to 1e-6).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BankCheckpoint {
    pub format: String,
    pub version: u32,
    pub capacity: usize,
    pub policy: EnqueuePolicy,
    pub current_step: u64,
    pub dim: Option<usize>,
    pub records: Vec<ProposalRecord>,
}

impl BankCheckpoint {
    pub fn from_bank(bank: &MemoryBank) -> Self {
        Self {
            format: BANK_FORMAT.to_string(),
            version: BANK_VERSION,
            capacity: bank.capacity(),
            policy: bank.policy(),
            current_step: bank.current_step(),
            dim: bank.dim(),
            records: bank.records().cloned().collect(),
        }
    }

    pub fn into_bank(self, path: &Path) -> Result<MemoryBank> {
        if self.format != BANK_FORMAT || self.version != BANK_VERSION {
            return Err(Error::schema(
                path,
                0,
                format!("expected {BANK_FORMAT} version {BANK_VERSION}, found {} version {}", self.format, self.version),
            ));
        }
        if let Some(d) = self.dim {
            if self.records.iter().any(|r| r.embedding.len() != d) {
                return Err(Error::schema(path, 0, "record dimension differs from the declared dim"));
            }
        }
        Ok(MemoryBank::from_parts(self.capacity, self.policy, self.current_step, self.records)?)
    }
}

pub fn loss_csv(history: &[LossRecord]) -> String {
    let mut s = String::from("iteration,total,in_batch,cross_batch,classification\n");
    for r in history {
        writeln!(s, "{},{},{},{},{}", r.iteration, r.total, r.in_batch, r.cross_batch, r.classification).unwrap();
    }
    s
}

/// `label,dim0,dim1,...` with one row per embedding.
pub fn embeddings_csv(embeddings: &[f64], dim: usize, labels: &[u32]) -> String {
    let mut s = String::from("label");
    for d in 0..dim {
        write!(s, ",dim{d}").unwrap();
    }
    s.push('\n');
    for (row, label) in embeddings.chunks(dim).zip(labels) {
        write!(s, "{label}").unwrap();
        for v in row {
            write!(s, ",{v}").unwrap();
        }
        s.push('\n');
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassRow {
    pub category: String,
    pub group: String,
    pub ap: f64,
    pub positives: usize,
    pub detections: usize,
    pub true_positives: usize,
    pub no_ground_truth: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportBody {
    pub per_class: BTreeMap<String, ClassRow>,
    pub base_map: Option<f64>,
    pub novel_map: Option<f64>,
    pub all_map: Option<f64>,
    /// Categories without any non-difficult ground truth.
    pub warnings: Vec<String>,
}

impl ReportBody {
    pub fn new(report: &EvalReport, categories: &[String], split: &SplitSpec) -> Self {
        let mut per_class = BTreeMap::new();
        let mut warnings = Vec::new();
        for c in &report.per_class {
            let name = categories[c.category as usize].clone();
            let group = if split.novel.contains(&c.category) {
                "novel"
            } else if split.base.contains(&c.category) {
                "base"
            } else {
                "other"
            };
            if c.no_ground_truth {
                warnings.push(format!("{name}: no ground truth, AP set to 0"));
            }
            per_class.insert(
                name.clone(),
                ClassRow {
                    category: name,
                    group: group.to_string(),
                    ap: c.ap,
                    positives: c.positives,
                    detections: c.detections,
                    true_positives: c.true_positives,
                    no_ground_truth: c.no_ground_truth,
                },
            );
        }
        Self {
            per_class,
            base_map: report.base_map,
            novel_map: report.novel_map,
            all_map: report.all_map,
            warnings,
        }
    }

    /// Aligned plain-text table, categories in id order.
    pub fn table(&self, categories: &[String]) -> String {
        let width = categories.iter().map(|c| c.len()).max().unwrap_or(0).max("category".len());
        let mut s = String::new();
        writeln!(s, "{:<width$}  {:<5}  {:>6}  {:>5}  {:>5}  {:>5}", "category", "group", "AP50", "gt", "det", "tp").unwrap();
        for name in categories {
            if let Some(r) = self.per_class.get(name) {
                writeln!(
                    s,
                    "{:<width$}  {:<5}  {:>6.4}  {:>5}  {:>5}  {:>5}",
                    name, r.group, r.ap, r.positives, r.detections, r.true_positives
                )
                .unwrap();
            }
        }
        let fmt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"));
        writeln!(s, "{:<width$}  {:<5}  {:>6}", "mAP", "base", fmt(self.base_map)).unwrap();
        writeln!(s, "{:<width$}  {:<5}  {:>6}", "mAP", "novel", fmt(self.novel_map)).unwrap();
        writeln!(s, "{:<width$}  {:<5}  {:>6}", "mAP", "all", fmt(self.all_map)).unwrap();
        s
    }
}
