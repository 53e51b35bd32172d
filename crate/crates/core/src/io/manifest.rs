//! Sample manifest CSV: optional `# key = value` metadata lines, then `path,label,mos`.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::registry::LabelRegistry;

pub const HEADER: [&str; 3] = ["path", "label", "mos"];

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestRow {
    pub path: PathBuf,
    pub label: String,
    pub mos: Option<f32>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SampleManifest {
    pub registry_name: Option<String>,
    pub declared_total: Option<u64>,
    pub rows: Vec<ManifestRow>,
}

impl SampleManifest {
    pub fn validate(&self) -> Result<()> {
        let with_mos = self.rows.iter().filter(|r| r.mos.is_some()).count();
        if with_mos != 0 && with_mos != self.rows.len() {
            return Err(Error::Data(format!(
                "mos given for {with_mos} of {} rows; it must be present for all rows or none",
                self.rows.len()
            )));
        }
        for (i, r) in self.rows.iter().enumerate() {
            if r.path.as_os_str().is_empty() {
                return Err(Error::Data(format!("row {} has an empty path", i + 1)));
            }
            if let Some(m) = r.mos {
                if !(0.0..=1.0).contains(&m) {
                    return Err(Error::Data(format!("row {}: mos {m} outside [0, 1]", i + 1)));
                }
            }
        }
        Ok(())
    }

    pub fn has_mos(&self) -> bool {
        !self.rows.is_empty() && self.rows.iter().all(|r| r.mos.is_some())
    }

    /// Label index of every row; unknown labels are a registry mismatch.
    pub fn label_indices(&self, registry: &LabelRegistry) -> Result<Vec<usize>> {
        self.rows
            .iter()
            .map(|r| {
                registry.index_of(&r.label).ok_or_else(|| {
                    Error::RegistryMismatch(format!(
                        "label '{}' of {} not in registry '{}'",
                        r.label,
                        r.path.display(),
                        registry.name()
                    ))
                })
            })
            .collect()
    }

    /// Resolves relative row paths against `base`.
    pub fn resolve(&self, base: &Path) -> Vec<PathBuf> {
        self.rows.iter().map(|r| base.join(&r.path)).collect()
    }

    pub fn to_csv(&self) -> Result<String> {
        self.validate()?;
        let mut out = String::new();
        if let Some(name) = &self.registry_name {
            out.push_str(&format!("# registry = {name}\n"));
        }
        if let Some(total) = self.declared_total {
            out.push_str(&format!("# declared_total = {total}\n"));
        }
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        w.write_record(HEADER)?;
        for r in &self.rows {
            let path = r
                .path
                .to_str()
                .ok_or_else(|| Error::Data(format!("path {} is not UTF-8", r.path.display())))?;
            let mos = r.mos.map(|m| m.to_string()).unwrap_or_default();
            w.write_record([path, r.label.as_str(), mos.as_str()])?;
        }
        let body = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        out.push_str(std::str::from_utf8(&body).expect("csv writes UTF-8"));
        Ok(out)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut manifest = SampleManifest::default();
        for line in text.lines().take_while(|l| l.starts_with('#')) {
            let Some((k, v)) = line[1..].split_once('=') else {
                continue;
            };
            match k.trim() {
                "registry" => manifest.registry_name = Some(v.trim().to_string()),
                "declared_total" => {
                    manifest.declared_total = Some(v.trim().parse().map_err(|_| {
                        Error::Data(format!("declared_total '{}' is not an integer", v.trim()))
                    })?)
                }
                _ => {}
            }
        }
        let mut reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_reader(text.as_bytes());
        let header = reader.headers()?.clone();
        if header.iter().collect::<Vec<_>>() != HEADER {
            return Err(Error::Data(format!(
                "manifest header must be 'path,label,mos', found '{}'",
                header.iter().collect::<Vec<_>>().join(",")
            )));
        }
        for (i, rec) in reader.records().enumerate() {
            let rec = rec?;
            let mos = match rec[2].trim() {
                "" => None,
                s => Some(s.parse::<f32>().map_err(|_| {
                    Error::Data(format!("row {}: mos '{s}' is not a number", i + 1))
                })?),
            };
            manifest.rows.push(ManifestRow {
                path: PathBuf::from(&rec[0]),
                label: rec[1].to_string(),
                mos,
            });
        }
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        super::write_atomic(path, self.to_csv()?.as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_with_metadata() {
        let m = SampleManifest {
            registry_name: Some("plantvillage-38".into()),
            declared_total: Some(54_306),
            rows: vec![
                ManifestRow {
                    path: "a/x.png".into(),
                    label: "A".into(),
                    mos: Some(0.5),
                },
                ManifestRow {
                    path: "b/y, z.png".into(),
                    label: "B".into(),
                    mos: Some(1.0),
                },
            ],
        };
        let text = m.to_csv().unwrap();
        assert!(text.starts_with("# registry = plantvillage-38\n# declared_total = 54306\npath,label,mos\n"));
        assert!(!text.contains('\r'));
        assert_eq!(SampleManifest::parse(&text).unwrap(), m);
    }

    #[test]
    fn partial_mos_rejected() {
        let text = "path,label,mos\na.png,A,0.3\nb.png,A,\n";
        assert!(matches!(SampleManifest::parse(text), Err(Error::Data(_))));
    }

    #[test]
    fn bad_header_rejected() {
        assert!(SampleManifest::parse("file,label\nx,y\n").is_err());
    }
}
