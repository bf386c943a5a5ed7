//! Dataset index, base/novel splitting, K-shot sampling, shot masking and
//! tiling.
//!
//! Shot sampling is reproducible across implementations: for each requested
//! category (ascending id) the instance ids of that category are sorted
//! ascending and a partial Fisher-Yates shuffle picks the first `k` using
//! `rng::generator(seed, category)`. Step `i` swaps position `i` with
//! `i + below(n - i)`, where `below` is the rejection sampler in [`crate::rng`].

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::geometry::{obb_to_hbb, obb_to_polygon, quad_to_obb, OrientedBox, Point};
use crate::{math, rng};

/// DOTA v1.0 categories in their conventional order.
pub const DOTA_V1_CATEGORIES: [&str; 15] = [
    "plane",
    "ship",
    "storage-tank",
    "baseball-diamond",
    "tennis-court",
    "basketball-court",
    "ground-track-field",
    "harbor",
    "bridge",
    "large-vehicle",
    "small-vehicle",
    "helicopter",
    "roundabout",
    "soccer-ball-field",
    "swimming-pool",
];

/// Novel categories of the DOTA few-shot split.
pub const DOTA_NOVEL_CATEGORIES: [&str; 3] = ["plane", "baseball-diamond", "tennis-court"];

pub const DEFAULT_TILE: u32 = 1024;
pub const DEFAULT_STRIDE: u32 = 824;
pub const DEFAULT_BLUR_SIGMA: f64 = 8.0;
pub const DEFAULT_BLUR_RADIUS: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct LineError {
    /// 1-based.
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FewShotError {
    Parse(Vec<LineError>),
    DuplicateImage(u32),
    DuplicateInstance(u64),
    UnknownImage(u32),
    UnknownCategory(String),
    CategoryId(u32),
    InvalidImage(u32),
    SplitOverlap(u32),
    InvalidShots,
    InsufficientInstances { category: u32, available: usize, k: usize },
    InvalidRaster,
    InvalidBlur,
    InvalidTiling,
}

impl fmt::Display for FewShotError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FewShotError::Parse(lines) => {
                f.write_str("malformed annotation lines:")?;
                for e in lines {
                    write!(f, " line {}: {};", e.line, e.message)?;
                }
                Ok(())
            }
            FewShotError::DuplicateImage(id) => write!(f, "duplicate image id {id}"),
            FewShotError::DuplicateInstance(id) => write!(f, "duplicate instance id {id}"),
            FewShotError::UnknownImage(id) => write!(f, "unknown image id {id}"),
            FewShotError::UnknownCategory(name) => write!(f, "unknown category {name:?}"),
            FewShotError::CategoryId(id) => write!(f, "category id {id} is out of range"),
            FewShotError::InvalidImage(id) => write!(f, "image {id} has a zero dimension"),
            FewShotError::SplitOverlap(id) => write!(f, "category {id} is both base and novel"),
            FewShotError::InvalidShots => f.write_str("k must be at least 1"),
            FewShotError::InsufficientInstances { category, available, k } => {
                write!(f, "category {category} has {available} instances, fewer than k = {k}")
            }
            FewShotError::InvalidRaster => f.write_str("raster needs positive size, 1 or 3 channels and matching data"),
            FewShotError::InvalidBlur => f.write_str("blur needs sigma > 0 and radius >= 1"),
            FewShotError::InvalidTiling => f.write_str("tiling needs 0 < stride <= tile"),
        }
    }
}

impl core::error::Error for FewShotError {}

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ImageInfo {
    pub id: u32,
    pub width: u32,
    pub height: u32,
    pub path: String,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Instance {
    pub id: u64,
    pub image: u32,
    pub category: u32,
    pub obb: OrientedBox,
    pub difficult: bool,
}

/// Categories, images and annotated instances; checked on construction.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetIndex {
    categories: Vec<String>,
    images: Vec<ImageInfo>,
    instances: Vec<Instance>,
}

impl DatasetIndex {
    pub fn new(
        categories: Vec<String>,
        images: Vec<ImageInfo>,
        instances: Vec<Instance>,
    ) -> Result<Self, FewShotError> {
        let mut image_ids = BTreeSet::new();
        for im in &images {
            if !image_ids.insert(im.id) {
                return Err(FewShotError::DuplicateImage(im.id));
            }
            if im.width == 0 || im.height == 0 {
                return Err(FewShotError::InvalidImage(im.id));
            }
        }
        let mut ids = BTreeSet::new();
        for inst in &instances {
            if !ids.insert(inst.id) {
                return Err(FewShotError::DuplicateInstance(inst.id));
            }
            if !image_ids.contains(&inst.image) {
                return Err(FewShotError::UnknownImage(inst.image));
            }
            if inst.category as usize >= categories.len() {
                return Err(FewShotError::CategoryId(inst.category));
            }
        }
        Ok(Self {
            categories,
            images,
            instances,
        })
    }

    pub fn categories(&self) -> &[String] {
        &self.categories
    }

    pub fn images(&self) -> &[ImageInfo] {
        &self.images
    }

    pub fn instances(&self) -> &[Instance] {
        &self.instances
    }

    pub fn image(&self, id: u32) -> Option<&ImageInfo> {
        self.images.iter().find(|im| im.id == id)
    }

    pub fn category_id(&self, name: &str) -> Option<u32> {
        self.categories.iter().position(|c| c == name).map(|i| i as u32)
    }

    pub fn instances_on(&self, image: u32) -> impl Iterator<Item = &Instance> {
        self.instances.iter().filter(move |i| i.image == image)
    }
}

/// One object from a label file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabeledObject {
    pub category: u32,
    pub obb: OrientedBox,
    pub difficult: bool,
}

/// Parses DOTA-style labels: `x1 y1 x2 y2 x3 y3 x4 y4 category difficult` per
/// line. Blank lines and `imagesource:` / `gsd:` headers are skipped. Category
/// names are resolved against `categories`. Every malformed line is reported.
pub fn parse_annotations(text: &str, categories: &[String]) -> Result<Vec<LabeledObject>, FewShotError> {
    let mut objects = Vec::new();
    let mut errors = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with("imagesource:") || line.starts_with("gsd:") {
            continue;
        }
        match parse_line(line, categories) {
            Ok(obj) => objects.push(obj),
            Err(message) => errors.push(LineError { line: n + 1, message }),
        }
    }
    if errors.is_empty() {
        Ok(objects)
    } else {
        Err(FewShotError::Parse(errors))
    }
}

fn parse_line(line: &str, categories: &[String]) -> Result<LabeledObject, String> {
    let tokens: Vec<&str> = line.split_whitespace().collect();
    if tokens.len() != 10 {
        return Err(format!("expected 10 fields, found {}", tokens.len()));
    }
    let mut coords = [0.0f64; 8];
    for (k, t) in tokens[..8].iter().enumerate() {
        coords[k] = match t.parse::<f64>() {
            Ok(v) if v.is_finite() => v,
            _ => return Err(format!("coordinate {} is not a number: {t:?}", k + 1)),
        };
    }
    let category = categories
        .iter()
        .position(|c| c == tokens[8])
        .ok_or_else(|| format!("unknown category {:?}", tokens[8]))? as u32;
    let difficult = match tokens[9] {
        "0" => false,
        "1" => true,
        other => return Err(format!("difficult flag must be 0 or 1, found {other:?}")),
    };
    let quad = [
        Point::new(coords[0], coords[1]),
        Point::new(coords[2], coords[3]),
        Point::new(coords[4], coords[5]),
        Point::new(coords[6], coords[7]),
    ];
    let obb = quad_to_obb(&quad).map_err(|e| e.to_string())?;
    Ok(LabeledObject {
        category,
        obb,
        difficult,
    })
}

/// Disjoint base and novel category ids.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SplitSpec {
    pub base: BTreeSet<u32>,
    pub novel: BTreeSet<u32>,
}

impl SplitSpec {
    pub fn new(
        base: impl IntoIterator<Item = u32>,
        novel: impl IntoIterator<Item = u32>,
    ) -> Result<Self, FewShotError> {
        let spec = Self {
            base: base.into_iter().collect(),
            novel: novel.into_iter().collect(),
        };
        if let Some(&c) = spec.base.intersection(&spec.novel).next() {
            return Err(FewShotError::SplitOverlap(c));
        }
        Ok(spec)
    }

    /// Named novel categories; every other category of `categories` is base.
    pub fn with_novel(categories: &[String], novel: &[&str]) -> Result<Self, FewShotError> {
        let mut ids = BTreeSet::new();
        for name in novel {
            let id = categories
                .iter()
                .position(|c| c == name)
                .ok_or_else(|| FewShotError::UnknownCategory((*name).to_string()))?;
            ids.insert(id as u32);
        }
        let base: Vec<u32> = (0..categories.len() as u32).filter(|c| !ids.contains(c)).collect();
        Self::new(base, ids)
    }

    /// The DOTA split over [`DOTA_V1_CATEGORIES`].
    pub fn dota() -> Self {
        let cats: Vec<String> = DOTA_V1_CATEGORIES.iter().map(|s| s.to_string()).collect();
        Self::with_novel(&cats, &DOTA_NOVEL_CATEGORIES).expect("static split is valid")
    }

    pub fn validate(&self, num_categories: usize) -> Result<(), FewShotError> {
        if let Some(&c) = self.base.intersection(&self.novel).next() {
            return Err(FewShotError::SplitOverlap(c));
        }
        match self.base.iter().chain(&self.novel).find(|&&c| c as usize >= num_categories) {
            Some(&c) => Err(FewShotError::CategoryId(c)),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    /// Images holding at least one base instance, with their base instances.
    pub base: DatasetIndex,
    /// Images holding at least one novel instance, with their novel instances.
    pub novel: DatasetIndex,
    /// Novel instances on base images; they must be masked before base
    /// training uses those images.
    pub flagged: Vec<Instance>,
}

/// Splits an index by category group. Instances of categories in neither
/// group are dropped.
pub fn split_dataset(index: &DatasetIndex, split: &SplitSpec) -> Result<DatasetSplit, FewShotError> {
    split.validate(index.categories.len())?;
    let side = |ids: &BTreeSet<u32>| -> (Vec<ImageInfo>, Vec<Instance>) {
        let instances: Vec<Instance> = index.instances.iter().filter(|i| ids.contains(&i.category)).copied().collect();
        let used: BTreeSet<u32> = instances.iter().map(|i| i.image).collect();
        let images = index.images.iter().filter(|im| used.contains(&im.id)).cloned().collect();
        (images, instances)
    };
    let (base_images, base_instances) = side(&split.base);
    let (novel_images, novel_instances) = side(&split.novel);
    let base_image_ids: BTreeSet<u32> = base_images.iter().map(|im| im.id).collect();
    let flagged = novel_instances.iter().filter(|i| base_image_ids.contains(&i.image)).copied().collect();
    Ok(DatasetSplit {
        base: DatasetIndex::new(index.categories.clone(), base_images, base_instances)?,
        novel: DatasetIndex::new(index.categories.clone(), novel_images, novel_instances)?,
        flagged,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EpisodeSpec {
    pub k: usize,
    pub seed: u64,
    pub categories: BTreeSet<u32>,
    /// Take every instance of a category that has fewer than `k`.
    pub take_all: bool,
}

/// Draws exactly `k` instances per requested category, uniformly without
/// replacement (see the module docs for the exact procedure).
pub fn sample_k_shots(index: &DatasetIndex, spec: &EpisodeSpec) -> Result<BTreeSet<u64>, FewShotError> {
    if spec.k == 0 {
        return Err(FewShotError::InvalidShots);
    }
    let mut by_category: BTreeMap<u32, Vec<u64>> = BTreeMap::new();
    for inst in &index.instances {
        by_category.entry(inst.category).or_default().push(inst.id);
    }
    let mut selected = BTreeSet::new();
    for &category in &spec.categories {
        if category as usize >= index.categories.len() {
            return Err(FewShotError::CategoryId(category));
        }
        let mut ids = by_category.remove(&category).unwrap_or_default();
        ids.sort_unstable();
        let n = ids.len();
        if n < spec.k && !spec.take_all {
            return Err(FewShotError::InsufficientInstances {
                category,
                available: n,
                k: spec.k,
            });
        }
        let take = spec.k.min(n);
        let mut g = rng::generator(spec.seed, category as u64);
        for i in 0..take {
            let j = i + rng::below(&mut g, (n - i) as u64) as usize;
            ids.swap(i, j);
        }
        selected.extend(&ids[..take]);
    }
    Ok(selected)
}

/// Boxes of every unselected instance on `image`, whatever its category.
pub fn mask_plan(index: &DatasetIndex, selected: &BTreeSet<u64>, image: u32) -> Vec<OrientedBox> {
    index
        .instances_on(image)
        .filter(|i| !selected.contains(&i.id))
        .map(|i| i.obb)
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeImage {
    pub image: u32,
    /// Selected instances kept as annotations.
    pub kept: Vec<u64>,
    /// Unselected instances to blur out; their annotations are dropped.
    pub masked: Vec<Instance>,
}

/// The fine-tuning set: every image holding a selected instance, with the
/// rest of its instances scheduled for masking.
pub fn build_episode(index: &DatasetIndex, selected: &BTreeSet<u64>) -> Vec<EpisodeImage> {
    index
        .images
        .iter()
        .filter_map(|im| {
            let (kept, masked): (Vec<&Instance>, Vec<&Instance>) =
                index.instances_on(im.id).partition(|i| selected.contains(&i.id));
            if kept.is_empty() {
                return None;
            }
            Some(EpisodeImage {
                image: im.id,
                kept: kept.iter().map(|i| i.id).collect(),
                masked: masked.into_iter().copied().collect(),
            })
        })
        .collect()
}

/// 8-bit raster, row-major, channels interleaved.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageRaster {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<u8>,
}

impl ImageRaster {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<u8>) -> Result<Self, FewShotError> {
        if width == 0 || height == 0 || !(channels == 1 || channels == 3) || data.len() != width * height * channels {
            return Err(FewShotError::InvalidRaster);
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: u8) -> Result<Self, FewShotError> {
        Self::new(width, height, channels, vec![value; width * height * channels])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    pub fn get(&self, x: usize, y: usize, c: usize) -> u8 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    fn set(&mut self, x: usize, y: usize, c: usize, v: u8) {
        self.data[(y * self.width + x) * self.channels + c] = v;
    }
}

/// Symmetric reflection: `... c b a | a b c ... x y z | z y x ...`.
fn reflect(i: isize, n: usize) -> usize {
    let period = 2 * n as isize;
    let m = i.rem_euclid(period);
    if m < n as isize {
        m as usize
    } else {
        (period - 1 - m) as usize
    }
}

fn gaussian_kernel(sigma: f64, radius: usize) -> Vec<f64> {
    let r = radius as isize;
    let raw: Vec<f64> = (-r..=r)
        .map(|k| math::exp(-((k * k) as f64) / (2.0 * sigma * sigma)))
        .collect();
    let sum: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / sum).collect()
}

/// Replaces every pixel whose center lies inside one of `regions` with the
/// Gaussian-blurred input (separable kernel of `2·radius + 1` taps,
/// symmetric reflection at the borders). Blur values always come from the
/// unmodified input, so overlapping regions do not blur twice. Other pixels
/// are copied unchanged.
pub fn apply_gaussian_mask(
    raster: &ImageRaster,
    regions: &[OrientedBox],
    sigma: f64,
    radius: usize,
) -> Result<ImageRaster, FewShotError> {
    if !(sigma > 0.0 && sigma.is_finite()) || radius == 0 {
        return Err(FewShotError::InvalidBlur);
    }
    let kernel = gaussian_kernel(sigma, radius);
    let (w, h, ch) = (raster.width, raster.height, raster.channels);
    let mut out = raster.clone();
    let r = radius as isize;
    for region in regions {
        let env = obb_to_hbb(region);
        // Pixel x is covered when its center x + 0.5 is inside.
        let lo_x = math::floor(env.xmin() - 0.5) + 1.0;
        let hi_x = math::floor(env.xmax() - 0.5);
        let lo_y = math::floor(env.ymin() - 0.5) + 1.0;
        let hi_y = math::floor(env.ymax() - 0.5);
        let x0 = lo_x.max(0.0) as usize;
        let y0 = lo_y.max(0.0) as usize;
        if hi_x < 0.0 || hi_y < 0.0 || x0 >= w || y0 >= h {
            continue;
        }
        let x1 = (hi_x as usize).min(w - 1);
        let y1 = (hi_y as usize).min(h - 1);
        if x0 > x1 || y0 > y1 {
            continue;
        }
        let poly = obb_to_polygon(region);
        let inside: Vec<(usize, usize)> = (y0..=y1)
            .flat_map(|y| (x0..=x1).map(move |x| (x, y)))
            .filter(|&(x, y)| poly.contains(Point::new(x as f64 + 0.5, y as f64 + 0.5)))
            .collect();
        if inside.is_empty() {
            continue;
        }
        // Horizontal pass over the rows the vertical pass will read.
        let bw = x1 - x0 + 1;
        let rows = (y1 - y0 + 1) + 2 * radius;
        let mut horiz = vec![0.0f64; rows * bw * ch];
        for row in 0..rows {
            let sy = reflect(y0 as isize - r + row as isize, h);
            for bx in 0..bw {
                let x = (x0 + bx) as isize;
                for c in 0..ch {
                    let mut acc = 0.0;
                    for (t, kv) in kernel.iter().enumerate() {
                        let sx = reflect(x - r + t as isize, w);
                        acc += kv * raster.get(sx, sy, c) as f64;
                    }
                    horiz[(row * bw + bx) * ch + c] = acc;
                }
            }
        }
        for (x, y) in inside {
            let bx = x - x0;
            let row0 = y - y0;
            for c in 0..ch {
                let mut acc = 0.0;
                for (t, kv) in kernel.iter().enumerate() {
                    acc += kv * horiz[((row0 + t) * bw + bx) * ch + c];
                }
                out.set(x, y, c, math::round(acc).clamp(0.0, 255.0) as u8);
            }
        }
    }
    Ok(out)
}

/// A crop window in pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Window {
    pub x: u32,
    pub y: u32,
    pub width: u32,
    pub height: u32,
}

fn axis_origins(size: u32, tile: u32, stride: u32) -> Vec<u32> {
    if size <= tile {
        return vec![0];
    }
    let mut origins = Vec::new();
    let mut o = 0u32;
    loop {
        if o + tile >= size {
            origins.push(o.min(size - tile));
            return origins;
        }
        origins.push(o);
        o += stride;
    }
}

/// Tiles an image with windows of side `tile` placed every `stride` pixels;
/// the last window on each axis is shifted back to end at the border. Sides
/// shorter than `tile` get one window covering the whole side.
pub fn tile_windows(width: u32, height: u32, tile: u32, stride: u32) -> Result<Vec<Window>, FewShotError> {
    if tile == 0 || stride == 0 || stride > tile || width == 0 || height == 0 {
        return Err(FewShotError::InvalidTiling);
    }
    let xs = axis_origins(width, tile, stride);
    let ys = axis_origins(height, tile, stride);
    let mut windows = Vec::with_capacity(xs.len() * ys.len());
    for &y in &ys {
        for &x in &xs {
            windows.push(Window {
                x,
                y,
                width: tile.min(width),
                height: tile.min(height),
            });
        }
    }
    Ok(windows)
}

/// Instances of `image` whose center lies in the half-open window, moved to
/// window coordinates. Extents may leave the window.
pub fn crop_instances(index: &DatasetIndex, image: u32, window: &Window) -> Vec<Instance> {
    let (x0, y0) = (window.x as f64, window.y as f64);
    let (x1, y1) = (x0 + window.width as f64, y0 + window.height as f64);
    index
        .instances_on(image)
        .filter(|i| {
            let c = i.obb.center();
            c.x >= x0 && c.x < x1 && c.y >= y0 && c.y < y1
        })
        .map(|i| Instance {
            obb: i.obb.translated(-x0, -y0),
            ..*i
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cats(names: &[&str]) -> Vec<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    fn image(id: u32) -> ImageInfo {
        ImageInfo {
            id,
            width: 100,
            height: 100,
            path: format!("img{id}.png"),
        }
    }

    fn inst(id: u64, image: u32, category: u32) -> Instance {
        Instance {
            id,
            image,
            category,
            obb: OrientedBox::new(10.0 + id as f64, 20.0, 6.0, 4.0, 0.0).unwrap(),
            difficult: false,
        }
    }

    #[test]
    fn parse_examples() {
        let c = cats(&["plane", "ship"]);
        assert!(parse_annotations("", &c).unwrap().is_empty());
        let objs = parse_annotations("imagesource:GoogleEarth\ngsd:0.1\n0 0 10 0 10 10 0 10 ship 0\n", &c).unwrap();
        assert_eq!(objs.len(), 1);
        assert_eq!(objs[0].category, 1);
        assert_eq!(objs[0].obb.angle(), 0.0);
        assert!(objs[0].obb.is_equivalent(&OrientedBox::new(5.0, 5.0, 10.0, 10.0, 0.0).unwrap(), 1e-12));
        match parse_annotations("0 0 10 0 10 10 ship\n", &c) {
            Err(FewShotError::Parse(lines)) => assert_eq!(lines[0].line, 1),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn parse_reports_every_bad_line() {
        let c = cats(&["plane"]);
        let text = "0 0 1 0 1 1 0 1 plane 0\n0 0 a 0 1 1 0 1 plane 0\n0 0 1 0 1 1 0 1 boat 0\n0 0 1 0 1 1 0 1 plane 2\n";
        match parse_annotations(text, &c) {
            Err(FewShotError::Parse(lines)) => {
                assert_eq!(lines.iter().map(|l| l.line).collect::<Vec<_>>(), [2, 3, 4]);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn index_rejects_duplicates_and_dangling_references() {
        let c = cats(&["a"]);
        assert_eq!(
            DatasetIndex::new(c.clone(), vec![image(0)], vec![inst(1, 0, 0), inst(1, 0, 0)]),
            Err(FewShotError::DuplicateInstance(1))
        );
        assert_eq!(
            DatasetIndex::new(c.clone(), vec![image(0)], vec![inst(1, 5, 0)]),
            Err(FewShotError::UnknownImage(5))
        );
        assert_eq!(DatasetIndex::new(c, vec![image(0)], vec![inst(1, 0, 3)]), Err(FewShotError::CategoryId(3)));
    }

    #[test]
    fn dota_split_has_twelve_base_categories() {
        let s = SplitSpec::dota();
        assert_eq!(s.novel, [0u32, 3, 4].into_iter().collect());
        assert_eq!(s.base.len(), 12);
        assert!(s.base.contains(&8));
    }

    #[test]
    fn split_flags_novel_instances_on_base_images() {
        let c = cats(&["a", "b", "c"]);
        let idx = DatasetIndex::new(
            c,
            vec![image(0), image(1), image(2)],
            vec![inst(1, 0, 0), inst(2, 0, 2), inst(3, 1, 2), inst(4, 2, 1)],
        )
        .unwrap();
        let s = split_dataset(&idx, &SplitSpec::new([0, 1], [2]).unwrap()).unwrap();
        assert_eq!(s.base.images().iter().map(|i| i.id).collect::<Vec<_>>(), [0, 2]);
        assert_eq!(s.base.instances().len(), 2);
        assert_eq!(s.flagged.iter().map(|i| i.id).collect::<Vec<_>>(), [2]);
        assert_eq!(s.novel.images().iter().map(|i| i.id).collect::<Vec<_>>(), [0, 1]);

        let all_base = split_dataset(&idx, &SplitSpec::new([0, 1, 2], []).unwrap()).unwrap();
        assert!(all_base.novel.instances().is_empty());
        assert!(all_base.novel.images().is_empty());
        assert_eq!(
            split_dataset(&idx, &SplitSpec::new([0], [7]).unwrap()),
            Err(FewShotError::CategoryId(7))
        );
        assert_eq!(SplitSpec::new([1], [1]), Err(FewShotError::SplitOverlap(1)));
    }

    fn ten_instance_index() -> DatasetIndex {
        DatasetIndex::new(cats(&["a", "b"]), vec![image(0)], (0..10).map(|i| inst(i, 0, 0)).collect()).unwrap()
    }

    #[test]
    fn sampling_examples() {
        let idx = DatasetIndex::new(cats(&["a"]), vec![image(0)], vec![inst(7, 0, 0)]).unwrap();
        let spec = EpisodeSpec {
            k: 1,
            seed: 3,
            categories: [0].into_iter().collect(),
            take_all: false,
        };
        assert_eq!(sample_k_shots(&idx, &spec).unwrap(), [7].into_iter().collect());

        let idx = ten_instance_index();
        let mut spec = EpisodeSpec {
            k: 3,
            seed: 0,
            categories: [0].into_iter().collect(),
            take_all: false,
        };
        let a = sample_k_shots(&idx, &spec).unwrap();
        assert_eq!(a, sample_k_shots(&idx, &spec).unwrap());
        let distinct: BTreeSet<BTreeSet<u64>> = (0..20)
            .map(|seed| {
                spec.seed = seed;
                let s = sample_k_shots(&idx, &spec).unwrap();
                assert_eq!(s.len(), 3);
                s
            })
            .collect();
        assert!(distinct.len() > 1);
    }

    #[test]
    fn sampling_shortfall() {
        let idx = ten_instance_index();
        let mut spec = EpisodeSpec {
            k: 3,
            seed: 0,
            categories: [0, 1].into_iter().collect(),
            take_all: false,
        };
        assert_eq!(
            sample_k_shots(&idx, &spec),
            Err(FewShotError::InsufficientInstances {
                category: 1,
                available: 0,
                k: 3
            })
        );
        spec.take_all = true;
        assert_eq!(sample_k_shots(&idx, &spec).unwrap().len(), 3);
        spec.k = 0;
        assert_eq!(sample_k_shots(&idx, &spec), Err(FewShotError::InvalidShots));
    }

    #[test]
    fn mask_plan_is_the_complement() {
        let idx = DatasetIndex::new(cats(&["a", "b"]), vec![image(0)], (0..5).map(|i| inst(i, 0, (i % 2) as u32)).collect())
            .unwrap();
        let all: BTreeSet<u64> = (0..5).collect();
        assert!(mask_plan(&idx, &all, 0).is_empty());
        assert_eq!(mask_plan(&idx, &BTreeSet::new(), 0).len(), 5);
        let some: BTreeSet<u64> = [0, 2, 4].into_iter().collect();
        let plan = mask_plan(&idx, &some, 0);
        assert_eq!(plan, [idx.instances()[1].obb, idx.instances()[3].obb]);
    }

    #[test]
    fn episode_keeps_only_images_with_shots() {
        let idx = DatasetIndex::new(
            cats(&["a"]),
            vec![image(0), image(1)],
            vec![inst(1, 0, 0), inst(2, 0, 0), inst(3, 1, 0)],
        )
        .unwrap();
        let ep = build_episode(&idx, &[1].into_iter().collect());
        assert_eq!(ep.len(), 1);
        assert_eq!(ep[0].kept, [1]);
        assert_eq!(ep[0].masked.iter().map(|i| i.id).collect::<Vec<_>>(), [2]);
    }

    #[test]
    fn reflect_indexing() {
        assert_eq!((-3..8).map(|i| reflect(i, 4)).collect::<Vec<_>>(), [2, 1, 0, 0, 1, 2, 3, 3, 2, 1, 0]);
        assert_eq!(reflect(-1, 1), 0);
        assert_eq!(reflect(5, 1), 0);
    }

    fn checkerboard(w: usize, h: usize, ch: usize) -> ImageRaster {
        let data = (0..h)
            .flat_map(|y| (0..w).flat_map(move |x| core::iter::repeat_n(if (x + y) % 2 == 0 { 255u8 } else { 0 }, ch)))
            .collect();
        ImageRaster::new(w, h, ch, data).unwrap()
    }

    #[test]
    fn mask_examples() {
        let img = checkerboard(40, 30, 3);
        assert_eq!(apply_gaussian_mask(&img, &[], 8.0, 16).unwrap(), img);
        let flat = ImageRaster::filled(40, 30, 1, 77).unwrap();
        let region = OrientedBox::new(20.0, 15.0, 16.0, 10.0, 0.5).unwrap();
        assert_eq!(apply_gaussian_mask(&flat, &[region], 8.0, 16).unwrap(), flat);

        let out = apply_gaussian_mask(&img, &[region], 2.0, 4).unwrap();
        let poly = obb_to_polygon(&region);
        let mut before = Vec::new();
        let mut after = Vec::new();
        for y in 0..30 {
            for x in 0..40 {
                let inside = poly.contains(Point::new(x as f64 + 0.5, y as f64 + 0.5));
                for c in 0..3 {
                    if inside {
                        before.push(img.get(x, y, c) as f64);
                        after.push(out.get(x, y, c) as f64);
                    } else {
                        assert_eq!(img.get(x, y, c), out.get(x, y, c));
                    }
                }
            }
        }
        let var = |v: &[f64]| {
            let m = v.iter().sum::<f64>() / v.len() as f64;
            v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64
        };
        assert!(!before.is_empty());
        assert!(var(&after) < var(&before));
    }

    #[test]
    fn mask_outside_raster_is_a_no_op() {
        let img = checkerboard(10, 10, 1);
        let far = OrientedBox::new(500.0, 500.0, 10.0, 10.0, 0.2).unwrap();
        assert_eq!(apply_gaussian_mask(&img, &[far], 1.0, 2).unwrap(), img);
        assert_eq!(apply_gaussian_mask(&img, &[far], 0.0, 2), Err(FewShotError::InvalidBlur));
        assert_eq!(apply_gaussian_mask(&img, &[far], 1.0, 0), Err(FewShotError::InvalidBlur));
    }

    #[test]
    fn tiling_examples() {
        let xs = |w, h| {
            tile_windows(w, h, 1024, 824)
                .unwrap()
                .iter()
                .map(|t| (t.x, t.y))
                .collect::<Vec<_>>()
        };
        assert_eq!(xs(1024, 1024), [(0, 0)]);
        assert_eq!(xs(1848, 1024), [(0, 0), (824, 0)]);
        assert_eq!(xs(2000, 1024), [(0, 0), (824, 0), (976, 0)]);
        let small = tile_windows(300, 200, 1024, 824).unwrap();
        assert_eq!(small, [Window { x: 0, y: 0, width: 300, height: 200 }]);
        assert_eq!(tile_windows(10, 10, 0, 1), Err(FewShotError::InvalidTiling));
        assert_eq!(tile_windows(10, 10, 4, 5), Err(FewShotError::InvalidTiling));
    }

    #[test]
    fn crop_uses_centers() {
        let c = cats(&["a"]);
        let b = |cx, cy| OrientedBox::new(cx, cy, 30.0, 10.0, 0.3).unwrap();
        let idx = DatasetIndex::new(
            c,
            vec![ImageInfo {
                id: 0,
                width: 200,
                height: 200,
                path: String::new(),
            }],
            vec![
                Instance { id: 0, image: 0, category: 0, obb: b(50.0, 50.0), difficult: false },
                Instance { id: 1, image: 0, category: 0, obb: b(150.0, 50.0), difficult: false },
                Instance { id: 2, image: 0, category: 0, obb: b(98.0, 50.0), difficult: false },
            ],
        )
        .unwrap();
        let w = Window { x: 0, y: 0, width: 100, height: 100 };
        let kept = crop_instances(&idx, 0, &w);
        assert_eq!(kept.iter().map(|i| i.id).collect::<Vec<_>>(), [0, 2]);
        assert!(obb_to_hbb(&kept[1].obb).xmax() > 100.0);
        let w2 = Window { x: 40, y: 10, width: 100, height: 100 };
        let moved = crop_instances(&idx, 0, &w2);
        assert_eq!(moved[0].obb.center(), Point::new(10.0, 40.0));
    }
}
