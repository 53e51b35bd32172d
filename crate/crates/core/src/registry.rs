//! Ordered class-label registries.

use std::collections::HashSet;

use crate::error::{Error, Result};

/// PlantVillage inventory: (crop, condition, image count).
pub const PLANT_VILLAGE: [(&str, &str, u64); 38] = [
    ("Apple", "Cedar apple rust", 276),
    ("Apple", "Apple scab", 630),
    ("Apple", "Apple rot", 621),
    ("Apple", "healthy", 1645),
    ("Blueberry", "healthy", 1502),
    ("Cherry", "Powdery mildew", 1052),
    ("Cherry", "healthy", 854),
    ("Corn", "Cercosporin leaf spot", 513),
    ("Corn", "Common rust", 1192),
    ("Corn", "Northern leaf blight", 985),
    ("Corn", "healthy", 1162),
    ("Grape", "Black rot", 1180),
    ("Grape", "Esca (Black measles)", 1384),
    ("Grape", "Leaf blight", 1076),
    ("Grape", "healthy", 423),
    ("Orange", "Huanglongbing", 5507),
    ("Peach", "Bacterial spot", 2291),
    ("Peach", "healthy", 360),
    ("Bell pepper", "Bacterial spot", 997),
    ("Bell pepper", "healthy", 1148),
    ("Potato", "Early blight", 1000),
    ("Potato", "Late blight", 1000),
    ("Potato", "healthy", 152),
    ("Raspberry", "healthy", 371),
    ("Soybean", "healthy", 5090),
    ("Squash", "Powdery mildew", 1835),
    ("Strawberry", "Leaf scorch", 1109),
    ("Strawberry", "healthy", 456),
    ("Tomato", "Early blight", 1000),
    ("Tomato", "Septoria leaf spot", 1771),
    ("Tomato", "Target spot", 1404),
    ("Tomato", "Leaf mold", 952),
    ("Tomato", "Bacterial spot", 2127),
    ("Tomato", "Late blight", 1910),
    ("Tomato", "Yellow leaf curl", 5357),
    ("Tomato", "Mosaic virus", 373),
    ("Tomato", "Spider mites", 1676),
    ("Tomato", "healthy", 1592),
];

/// Total image count stated for the PlantVillage release.
pub const PLANT_VILLAGE_DECLARED_TOTAL: u64 = 54_306;

/// Directory-style class name: `Crop___Condition` with spaces as underscores.
pub fn class_name(crop: &str, condition: &str) -> String {
    format!("{}___{}", crop.replace(' ', "_"), condition.replace(' ', "_"))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelRegistry {
    name: String,
    classes: Vec<String>,
    expected_counts: Option<Vec<u64>>,
    declared_total: Option<u64>,
}

impl LabelRegistry {
    pub fn new(name: impl Into<String>, classes: Vec<String>) -> Result<Self> {
        let mut seen = HashSet::new();
        for c in &classes {
            if c.is_empty() || c.contains([',', '\n', '\r']) {
                return Err(Error::InvalidArgument(format!("invalid class name {c:?}")));
            }
            if !seen.insert(c.as_str()) {
                return Err(Error::InvalidArgument(format!("duplicate class name {c:?}")));
            }
        }
        if classes.is_empty() {
            return Err(Error::InvalidArgument("registry needs at least one class".into()));
        }
        Ok(Self {
            name: name.into(),
            classes,
            expected_counts: None,
            declared_total: None,
        })
    }

    /// The 38-class PlantVillage registry with per-class counts and declared total.
    pub fn plant_village() -> Self {
        let classes = PLANT_VILLAGE
            .iter()
            .map(|(crop, cond, _)| class_name(crop, cond))
            .collect();
        let mut reg = Self::new("plantvillage-38", classes).expect("static table is valid");
        reg.expected_counts = Some(PLANT_VILLAGE.iter().map(|e| e.2).collect());
        reg.declared_total = Some(PLANT_VILLAGE_DECLARED_TOTAL);
        reg
    }

    /// Registries shipped with the crate, by name.
    pub fn builtin(name: &str) -> Option<Self> {
        match name {
            "plantvillage-38" => Some(Self::plant_village()),
            "synthetic-leaves-4" => Some(crate::synth::leaf_registry()),
            _ => None,
        }
    }

    /// One class per line; optional `# registry = <name>` and
    /// `# declared_total = <n>` lines; blank lines ignored.
    pub fn parse_text(text: &str, default_name: &str) -> Result<Self> {
        let mut name = default_name.to_string();
        let mut declared = None;
        let mut classes = Vec::new();
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
            if let Some(meta) = line.strip_prefix('#') {
                match meta.split_once('=').map(|(k, v)| (k.trim(), v.trim())) {
                    Some(("registry", v)) => name = v.to_string(),
                    Some(("declared_total", v)) => {
                        declared = Some(
                            v.parse()
                                .map_err(|_| Error::Data(format!("registry declared_total '{v}'")))?,
                        )
                    }
                    _ => {}
                }
            } else {
                classes.push(line.to_string());
            }
        }
        Ok(Self::new(name, classes)?.with_declared_total(declared))
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("# registry = {}\n", self.name);
        if let Some(d) = self.declared_total {
            out.push_str(&format!("# declared_total = {d}\n"));
        }
        for c in &self.classes {
            out.push_str(c);
            out.push('\n');
        }
        out
    }

    pub fn with_declared_total(mut self, total: Option<u64>) -> Self {
        self.declared_total = total;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn index_of(&self, class: &str) -> Option<usize> {
        self.classes.iter().position(|c| c == class)
    }

    pub fn class(&self, index: usize) -> Option<&str> {
        self.classes.get(index).map(String::as_str)
    }

    pub fn expected_counts(&self) -> Option<&[u64]> {
        self.expected_counts.as_deref()
    }

    pub fn declared_total(&self) -> Option<u64> {
        self.declared_total
    }
}

/// Warning text when a per-class row sum disagrees with a declared total.
pub fn total_mismatch(row_sum: u64, declared_total: Option<u64>) -> Option<String> {
    match declared_total {
        Some(d) if d != row_sum => Some(format!(
            "per-class row sum {row_sum} differs from declared total {d}"
        )),
        _ => None,
    }
}
