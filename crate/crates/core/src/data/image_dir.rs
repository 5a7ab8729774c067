//! PNG directory ingestion and emission.

use std::path::Path;

use image::imageops::FilterType;
use image::{ImageReader, RgbImage};

use crate::data::dataset::Dataset;
use crate::data::image_batch::ImageBatch;
use crate::error::{Error, Result};

/// Load every `.png` in a directory (sorted by filename) as C=3 NCHW u8.
///
/// With `expected = Some((h, w))`, files of other sizes are resized when
/// `resize` is set and rejected (listing the offenders) otherwise. Without
/// an expectation the first file fixes the resolution.
pub fn load_image_dir(dir: &Path, expected: Option<(usize, usize)>, resize: bool) -> Result<Dataset> {
    if !dir.is_dir() {
        return Err(Error::data(format!("image directory {} does not exist", dir.display())));
    }
    let mut names: Vec<String> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .filter_map(|e| {
            let name = e.file_name().to_string_lossy().into_owned();
            name.to_ascii_lowercase().ends_with(".png").then_some(name)
        })
        .collect();
    names.sort();
    if names.is_empty() {
        return Err(Error::data(format!("no PNG files in {}", dir.display())));
    }

    let mut decoded: Vec<RgbImage> = Vec::with_capacity(names.len());
    for name in &names {
        let img = ImageReader::open(dir.join(name))
            .map_err(|e| Error::data(format!("cannot open {name}: {e}")))?
            .decode()
            .map_err(|e| Error::data(format!("cannot decode {name}: {e}")))?
            .to_rgb8();
        decoded.push(img);
    }

    let (h, w) = expected.unwrap_or_else(|| {
        (decoded[0].height() as usize, decoded[0].width() as usize)
    });
    let mut offenders = Vec::new();
    for (name, img) in names.iter().zip(&decoded) {
        if img.height() as usize != h || img.width() as usize != w {
            offenders.push(format!("{name} ({}x{})", img.height(), img.width()));
        }
    }
    if !offenders.is_empty() && !resize {
        return Err(Error::data(format!(
            "size mismatch (expected {h}x{w}) without resize enabled: {}",
            offenders.join(", ")
        )));
    }

    let mut batch = ImageBatch::zeros(names.len(), 3, h, w);
    for (i, img) in decoded.into_iter().enumerate() {
        let img = if img.height() as usize != h || img.width() as usize != w {
            image::imageops::resize(&img, w as u32, h as u32, FilterType::Triangle)
        } else {
            img
        };
        let dst = batch.image_mut(i);
        for y in 0..h {
            for x in 0..w {
                let px = img.get_pixel(x as u32, y as u32);
                for c in 0..3 {
                    dst[(c * h + y) * w + x] = px.0[c];
                }
            }
        }
    }
    Dataset::from_images(names, batch)
}

/// Write a batch as PNG files. `ids` must match the batch size; falls back
/// to `img_{i:05}.png` names when empty.
pub fn save_image_dir(dir: &Path, images: &ImageBatch, ids: &[String]) -> Result<()> {
    if images.c != 3 {
        return Err(Error::data(format!("PNG output requires 3 channels, got {}", images.c)));
    }
    if !ids.is_empty() && ids.len() != images.n {
        return Err(Error::data(format!("{} ids for {} images", ids.len(), images.n)));
    }
    std::fs::create_dir_all(dir)?;
    let (h, w) = (images.h, images.w);
    for i in 0..images.n {
        let src = images.image(i);
        let mut img = RgbImage::new(w as u32, h as u32);
        for y in 0..h {
            for x in 0..w {
                let px = image::Rgb([
                    src[y * w + x],
                    src[(h + y) * w + x],
                    src[(2 * h + y) * w + x],
                ]);
                img.put_pixel(x as u32, y as u32, px);
            }
        }
        let name = if ids.is_empty() { format!("img_{i:05}.png") } else { ids[i].clone() };
        img.save(dir.join(&name))
            .map_err(|e| Error::data(format!("cannot write {name}: {e}")))?;
    }
    Ok(())
}
