//! Builds a manifest from a directory tree with one subdirectory per class.

use std::path::{Path, PathBuf};

use log::warn;
use rayon::prelude::*;

use super::manifest::{ManifestRow, SampleManifest};
use crate::error::{Error, Result};
use crate::imaging::ImageRgb;
use crate::registry::{total_mismatch, LabelRegistry};

#[derive(Debug, Clone, PartialEq)]
pub struct IngestOutcome {
    pub manifest: SampleManifest,
    /// Rows per registry class, in registry order.
    pub class_counts: Vec<(String, usize)>,
    /// Subdirectories whose name is not a registry class.
    pub unmapped: Vec<String>,
    /// Files that failed to decode, with the reason.
    pub skipped: Vec<(PathBuf, String)>,
    pub warnings: Vec<String>,
}

fn sorted_entries(dir: &Path) -> Result<Vec<std::fs::DirEntry>> {
    let mut entries = std::fs::read_dir(dir)?.collect::<std::io::Result<Vec<_>>>()?;
    entries.sort_by_key(|e| e.file_name());
    Ok(entries)
}

fn hidden(entry: &std::fs::DirEntry) -> bool {
    entry.file_name().to_string_lossy().starts_with('.')
}

/// One row per decodable image under `root/<class>/`, sorted by path.
pub fn ingest(root: &Path, registry: &LabelRegistry) -> Result<IngestOutcome> {
    let top = sorted_entries(root).map_err(|e| Error::Data(format!("cannot read {}: {e}", root.display())))?;
    let mut unmapped = Vec::new();
    let mut candidates: Vec<(PathBuf, String)> = Vec::new();
    let mut seen_dirs = vec![false; registry.len()];
    for entry in top {
        if hidden(&entry) || !entry.file_type()?.is_dir() {
            continue;
        }
        let name = entry.file_name().to_string_lossy().into_owned();
        let Some(idx) = registry.index_of(&name) else {
            unmapped.push(name);
            continue;
        };
        seen_dirs[idx] = true;
        for file in sorted_entries(&entry.path())? {
            if !hidden(&file) && file.file_type()?.is_file() {
                candidates.push((root.join(&name).join(file.file_name()), name.clone()));
            }
        }
    }

    let decoded: Vec<Option<String>> = candidates
        .par_iter()
        .map(|(path, _)| ImageRgb::open(path).err().map(|e| e.to_string()))
        .collect();

    let mut rows = Vec::with_capacity(candidates.len());
    let mut skipped = Vec::new();
    let mut counts = vec![0usize; registry.len()];
    for ((path, label), failure) in candidates.into_iter().zip(decoded) {
        match failure {
            Some(reason) => skipped.push((path, reason)),
            None => {
                counts[registry.index_of(&label).expect("mapped above")] += 1;
                rows.push(ManifestRow {
                    path,
                    label,
                    mos: None,
                });
            }
        }
    }
    rows.sort_by(|a, b| a.path.cmp(&b.path));

    let mut warnings = Vec::new();
    for (i, class) in registry.classes().iter().enumerate() {
        if seen_dirs[i] && counts[i] == 0 {
            warnings.push(format!("class directory '{class}' contains no decodable images"));
        }
    }
    for (path, reason) in &skipped {
        warnings.push(format!("skipped {}: {reason}", path.display()));
    }
    if !unmapped.is_empty() {
        warnings.push(format!(
            "{} subdirectories not in registry '{}': {}",
            unmapped.len(),
            registry.name(),
            unmapped.join(", ")
        ));
    }
    if let Some(w) = total_mismatch(rows.len() as u64, registry.declared_total()) {
        warnings.push(w);
    }
    for w in &warnings {
        warn!("{w}");
    }

    Ok(IngestOutcome {
        manifest: SampleManifest {
            registry_name: Some(registry.name().to_string()),
            declared_total: registry.declared_total(),
            rows,
        },
        class_counts: registry.classes().iter().cloned().zip(counts).collect(),
        unmapped,
        skipped,
        warnings,
    })
}
