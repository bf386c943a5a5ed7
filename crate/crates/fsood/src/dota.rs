//! DOTA-style label directories.
//!
//! A dataset root holds `labelTxt/<name>.txt` and optionally
//! `images/<name>.png`. Images are numbered in ascending name order and
//! instances sequentially in that order, line by line.

use std::fs;
use std::path::{Path, PathBuf};

use fsood_core::fewshot::{self, DatasetIndex, FewShotError, ImageInfo, Instance, LabeledObject};
use fsood_core::geometry::obb_to_hbb;

use crate::error::{Error, Result};

pub const LABEL_DIR: &str = "labelTxt";
pub const IMAGE_DIR: &str = "images";

#[derive(Debug, Clone)]
pub struct LabelFile {
    /// File stem, used as the image name.
    pub name: String,
    pub objects: Vec<LabeledObject>,
}

/// Parses one label file. All malformed lines are reported in one error,
/// located at the first of them.
pub fn read_label_file(path: &Path, categories: &[String]) -> Result<Vec<LabeledObject>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    match fewshot::parse_annotations(&text, categories) {
        Ok(objects) => Ok(objects),
        Err(FewShotError::Parse(lines)) => {
            let first = lines.first().map_or(0, |l| l.line);
            let message = lines
                .iter()
                .map(|l| format!("line {}: {}", l.line, l.message))
                .collect::<Vec<_>>()
                .join("; ");
            Err(Error::schema(path, first, message))
        }
        Err(e) => Err(e.into()),
    }
}

/// Every `*.txt` file of `dir`, sorted by name.
pub fn read_label_dir(dir: &Path, categories: &[String]) -> Result<Vec<LabelFile>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "txt"))
        .collect();
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            let name = p.file_stem().unwrap_or_default().to_string_lossy().into_owned();
            Ok(LabelFile {
                objects: read_label_file(&p, categories)?,
                name,
            })
        })
        .collect()
}

/// Image size from the PNG header, or else the smallest frame that holds
/// every annotated box.
fn image_size(root: &Path, name: &str, objects: &[LabeledObject]) -> Result<(u32, u32)> {
    let path = root.join(IMAGE_DIR).join(format!("{name}.png"));
    if path.exists() {
        return image::image_dimensions(&path).map_err(|source| Error::Image { path, source });
    }
    let (mut w, mut h) = (1.0f64, 1.0f64);
    for o in objects {
        let env = obb_to_hbb(&o.obb);
        w = w.max(env.xmax().ceil());
        h = h.max(env.ymax().ceil());
    }
    Ok((w as u32, h as u32))
}

/// Loads a dataset root into an index; image ids follow name order.
pub fn load_dataset(root: &Path, categories: &[String]) -> Result<DatasetIndex> {
    let files = read_label_dir(&root.join(LABEL_DIR), categories)?;
    let mut images = Vec::with_capacity(files.len());
    let mut instances = Vec::new();
    for (id, file) in files.iter().enumerate() {
        let (width, height) = image_size(root, &file.name, &file.objects)?;
        images.push(ImageInfo {
            id: id as u32,
            width,
            height,
            path: format!("{IMAGE_DIR}/{}.png", file.name),
        });
        for o in &file.objects {
            instances.push(Instance {
                id: instances.len() as u64,
                image: id as u32,
                category: o.category,
                obb: o.obb,
                difficult: o.difficult,
            });
        }
    }
    Ok(DatasetIndex::new(categories.to_vec(), images, instances)?)
}

/// Image name (file stem) of an indexed image.
pub fn image_name(info: &ImageInfo) -> &str {
    Path::new(&info.path)
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or(&info.path)
}
