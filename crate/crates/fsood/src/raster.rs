//! 8-bit PNG reading and writing.

use std::path::Path;

use image::{DynamicImage, GrayImage, RgbImage};

use fsood_core::fewshot::ImageRaster;

use crate::error::{Error, Result};

/// Loads a PNG as gray or RGB. Other layouts are converted to 8-bit RGB
/// (alpha is dropped).
pub fn read_png(path: &Path) -> Result<ImageRaster> {
    let img = image::open(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let raster = match img {
        DynamicImage::ImageLuma8(g) => ImageRaster::new(w, h, 1, g.into_raw()),
        other => ImageRaster::new(w, h, 3, other.into_rgb8().into_raw()),
    };
    Ok(raster?)
}

pub fn write_png(path: &Path, raster: &ImageRaster) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let (w, h) = (raster.width() as u32, raster.height() as u32);
    let data = raster.data().to_vec();
    let result = if raster.channels() == 1 {
        GrayImage::from_raw(w, h, data).expect("raster size checked").save(path)
    } else {
        RgbImage::from_raw(w, h, data).expect("raster size checked").save(path)
    };
    result.map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })
}
