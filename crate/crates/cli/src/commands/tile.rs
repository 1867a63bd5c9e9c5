use std::collections::HashSet;
use std::io::Cursor;
use std::path::Path;

use featdistill::augment::{augment_pipeline, sample_rng, tile_image, AugmentConfig, AugmentRecord, RasterImage};
use featdistill::Error;
use image::{ImageFormat, RgbImage};
use serde::{Deserialize, Serialize};

use super::{start, write_report};
use crate::args::TileArgs;
use crate::config::resolve;
use crate::{CliError, CliResult};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TileConfig {
    /// Augmented crops written per kept tile.
    pub n_augment: usize,
    pub augment: AugmentConfig,
}

#[derive(Serialize)]
struct TileEntry {
    sample_id: String,
    bag_id: String,
    x: usize,
    y: usize,
    path: String,
    augmented: Vec<AugmentedEntry>,
}

#[derive(Serialize)]
struct AugmentedEntry {
    path: String,
    record: AugmentRecord,
}

#[derive(Serialize)]
struct TileSummary {
    images: Vec<ImageEntry>,
    tiles: Vec<TileEntry>,
}

#[derive(Serialize)]
struct ImageEntry {
    path: String,
    width: usize,
    height: usize,
    kept: usize,
    grid: usize,
}

fn decode(path: &Path, bytes: &[u8]) -> CliResult<RasterImage> {
    let img = image::load_from_memory(bytes)
        .map_err(|source| CliError::Image {
            path: path.to_path_buf(),
            source,
        })?
        .to_rgb8();
    let (w, h) = img.dimensions();
    Ok(RasterImage::new(w as usize, h as usize, img.into_raw())?)
}

fn encode_png(img: &RasterImage, path: &Path) -> CliResult<Vec<u8>> {
    let buf = RgbImage::from_raw(img.width() as u32, img.height() as u32, img.data().to_vec())
        .expect("buffer matches dimensions");
    let mut out = Cursor::new(Vec::new());
    buf.write_to(&mut out, ImageFormat::Png).map_err(|source| CliError::Image {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(out.into_inner())
}

pub fn run(args: TileArgs) -> CliResult<()> {
    let mut flags = serde_json::to_value(&args.flags).expect("flags serialize");
    if let Some(seed) = args.common.seed {
        flags["augment"]["seed"] = seed.into();
    }
    let config: TileConfig = resolve(args.common.config.as_deref(), flags)?;
    config.augment.validate()?;
    let aug = &config.augment;
    let mut run = start(&args.common, "tile");

    let mut stems = HashSet::new();
    let mut images = Vec::new();
    let mut entries = Vec::new();
    let mut index = 0u64;
    for path in &args.input {
        let stem = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .ok_or_else(|| Error::Invalid(format!("{}: no file name", path.display())))?;
        if !stems.insert(stem.clone()) {
            return Err(Error::Invalid(format!("two inputs share the name `{stem}`")).into());
        }
        let bytes = run.input_file("image", path)?;
        let img = decode(path, &bytes)?;
        let tiles = tile_image(&img, aug.tile, aug.fg_saturation_threshold, aug.fg_min_fraction);
        images.push(ImageEntry {
            path: path.display().to_string(),
            width: img.width(),
            height: img.height(),
            kept: tiles.len(),
            grid: (img.width() / aug.tile) * (img.height() / aug.tile),
        });
        for t in tiles {
            let id = format!("{stem}_x{}_y{}", t.x, t.y);
            let name = format!("tiles/{id}.png");
            let png = encode_png(&t.image, &run.path(&name))?;
            run.output_file("tile", &name, &png)?;
            let mut augmented = Vec::with_capacity(config.n_augment);
            for j in 0..config.n_augment {
                let mut rng = sample_rng(aug.seed, index * config.n_augment as u64 + j as u64);
                let (crop, record) = augment_pipeline(&t.image, aug, &mut rng)?;
                let aname = format!("augmented/{id}_a{j}.png");
                let png = encode_png(&crop, &run.path(&aname))?;
                run.output_file("augmented", &aname, &png)?;
                augmented.push(AugmentedEntry { path: aname, record });
            }
            index += 1;
            entries.push(TileEntry {
                sample_id: id,
                bag_id: stem.clone(),
                x: t.x,
                y: t.y,
                path: name,
                augmented,
            });
        }
    }
    eprintln!("tile: {} tiles from {} images", entries.len(), images.len());
    let summary = TileSummary { images, tiles: entries };
    write_report(&mut run, "tile", &config, &summary)?;
    run.finish(&config, aug.seed)?;
    Ok(())
}
