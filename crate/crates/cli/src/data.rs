//! Manifest loading: registries, decoded images, labelled and scored samples.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use log::warn;
use rayon::prelude::*;

use agropath::classifier::LabeledImage;
use agropath::imaging::{ImagePlanar, ImageRgb};
use agropath::io::manifest::SampleManifest;
use agropath::quality::QualitySample;
use agropath::registry::LabelRegistry;
use agropath::{Error, Result};

/// A built-in registry name, or a path to a registry text file.
pub fn registry_arg(arg: &str) -> Result<LabelRegistry> {
    if let Some(r) = LabelRegistry::builtin(arg) {
        return Ok(r);
    }
    let path = Path::new(arg);
    if !path.is_file() {
        return Err(Error::Usage(format!(
            "registry '{arg}' is neither a built-in (plantvillage-38, synthetic-leaves-4) nor a file"
        )));
    }
    let text = std::fs::read_to_string(path)?;
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    LabelRegistry::parse_text(&text, &stem)
}

/// Explicit registry, else the manifest's built-in registry, else its sorted labels.
pub fn resolve_registry(arg: Option<&str>, manifest: &SampleManifest) -> Result<LabelRegistry> {
    if let Some(a) = arg {
        return registry_arg(a);
    }
    if let Some(r) = manifest.registry_name.as_deref().and_then(LabelRegistry::builtin) {
        return Ok(r);
    }
    let labels: BTreeSet<&str> = manifest.rows.iter().map(|r| r.label.as_str()).collect();
    let name = manifest.registry_name.clone().unwrap_or_else(|| "manifest-labels".into());
    warn!("no registry given; using the {} sorted manifest labels as '{name}'", labels.len());
    LabelRegistry::new(name, labels.into_iter().map(String::from).collect())
        .map(|r| r.with_declared_total(manifest.declared_total))
}

pub struct LoadedManifest {
    pub manifest: SampleManifest,
    pub paths: Vec<PathBuf>,
}

/// Reads a manifest; relative row paths resolve against its directory.
pub fn read_manifest(path: &Path) -> Result<LoadedManifest> {
    let manifest = SampleManifest::read(path)?;
    if manifest.rows.is_empty() {
        return Err(Error::Data(format!("manifest {} has no rows", path.display())));
    }
    let base = path.parent().unwrap_or(Path::new("."));
    let paths = manifest.resolve(base);
    Ok(LoadedManifest { manifest, paths })
}

pub fn decode_all(paths: &[PathBuf]) -> Result<Vec<ImagePlanar>> {
    paths
        .par_iter()
        .map(|p| ImageRgb::open(p).map(|img| img.to_planar()))
        .collect()
}

pub fn labeled(loaded: &LoadedManifest, registry: &LabelRegistry) -> Result<Vec<LabeledImage>> {
    let labels = loaded.manifest.label_indices(registry)?;
    let images = decode_all(&loaded.paths)?;
    for (i, class) in registry.classes().iter().enumerate() {
        if !labels.contains(&i) {
            warn!("class '{class}' has no samples in the manifest");
        }
    }
    Ok(images
        .into_iter()
        .zip(labels)
        .map(|(image, label)| LabeledImage { image, label })
        .collect())
}

pub fn scored(loaded: &LoadedManifest) -> Result<Vec<QualitySample>> {
    if !loaded.manifest.has_mos() {
        return Err(Error::Data("manifest has no mos column values".into()));
    }
    let images = decode_all(&loaded.paths)?;
    Ok(images
        .into_iter()
        .zip(&loaded.manifest.rows)
        .map(|(image, row)| QualitySample { image, mos: row.mos })
        .collect())
}
