//! Directories of `name.mhd` images paired with `name_segmentation.mhd` labels.

use std::fs;
use std::path::{Path, PathBuf};

use crate::data::metaimage::{read_metaimage, write_metaimage, write_metaimage_as, ElementType};
use crate::data::volume::Volume;
use crate::error::{Error, Result};

pub const LABEL_SUFFIX: &str = "_segmentation";

/// A named labelled volume.
#[derive(Debug, Clone, PartialEq)]
pub struct Case {
    pub name: String,
    pub volume: Volume,
}

/// Image headers in `dir` that have a matching label file, sorted by name.
pub fn list_cases(dir: impl AsRef<Path>) -> Result<Vec<(String, PathBuf, PathBuf)>> {
    let dir = dir.as_ref();
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut cases = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("mhd") {
            continue;
        }
        let Some(stem) = path.file_stem().and_then(|s| s.to_str()) else {
            continue;
        };
        if stem.ends_with(LABEL_SUFFIX) {
            continue;
        }
        let label = dir.join(format!("{stem}{LABEL_SUFFIX}.mhd"));
        if label.exists() {
            cases.push((stem.to_string(), path.clone(), label));
        }
    }
    cases.sort();
    Ok(cases)
}

/// Loads every labelled case in `dir`; nonzero label voxels become 1.
pub fn load_dataset(dir: impl AsRef<Path>) -> Result<Vec<Case>> {
    list_cases(dir)?
        .into_iter()
        .map(|(name, image, label)| {
            let img = read_metaimage(&image)?;
            let lab = read_metaimage(&label)?;
            if lab.extents() != img.extents() {
                return Err(Error::Shape(format!(
                    "{name}: label extents {:?} differ from image {:?}",
                    lab.extents(),
                    img.extents()
                )));
            }
            let mask = lab.values().iter().map(|&v| (v != 0.0) as u8).collect();
            Ok(Case {
                name,
                volume: img.with_label(mask)?,
            })
        })
        .collect()
}

/// Writes each case as `name.mhd` (float) and `name_segmentation.mhd` (uchar).
pub fn write_dataset(dir: impl AsRef<Path>, cases: &[Case]) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for case in cases {
        write_metaimage(&case.volume, dir.join(format!("{}.mhd", case.name)))?;
        if let Some(mask) = case.volume.label_volume() {
            write_metaimage_as(
                &mask,
                dir.join(format!("{}{LABEL_SUFFIX}.mhd", case.name)),
                ElementType::Uchar,
            )?;
        }
    }
    Ok(())
}
