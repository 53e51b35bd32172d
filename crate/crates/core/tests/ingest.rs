use std::path::Path;

use agropath::imaging::ImagePlanar;
use agropath::io::ingest::ingest;
use agropath::registry::LabelRegistry;

fn write_image(path: &Path, v: f32) {
    std::fs::create_dir_all(path.parent().unwrap()).unwrap();
    ImagePlanar::filled(3, 2, [v, v, v])
        .to_rgb()
        .write_ppm(std::fs::File::create(path).unwrap())
        .unwrap();
}

fn registry() -> LabelRegistry {
    LabelRegistry::new("pair", vec!["healthy".into(), "rust".into(), "blight".into()])
        .unwrap()
        .with_declared_total(Some(4))
}

#[test]
fn tree_becomes_sorted_rows() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    for class in ["rust", "healthy"] {
        for name in ["b.ppm", "a.ppm"] {
            write_image(&root.join(class).join(name), 0.5);
        }
    }
    let out = ingest(root, &registry()).unwrap();
    let rows: Vec<(String, &str)> = out
        .manifest
        .rows
        .iter()
        .map(|r| (r.path.strip_prefix(root).unwrap().display().to_string(), r.label.as_str()))
        .collect();
    assert_eq!(
        rows,
        [
            ("healthy/a.ppm".to_string(), "healthy"),
            ("healthy/b.ppm".to_string(), "healthy"),
            ("rust/a.ppm".to_string(), "rust"),
            ("rust/b.ppm".to_string(), "rust"),
        ]
    );
    assert_eq!(
        out.class_counts,
        [("healthy".to_string(), 2), ("rust".to_string(), 2), ("blight".to_string(), 0)]
    );
    assert!(out.warnings.is_empty(), "{:?}", out.warnings);
    assert_eq!(out.manifest.registry_name.as_deref(), Some("pair"));
    assert_eq!(ingest(root, &registry()).unwrap(), out);
}

#[test]
fn problems_become_warnings() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    write_image(&root.join("healthy/ok.ppm"), 0.2);
    std::fs::create_dir_all(root.join("blight")).unwrap();
    std::fs::write(root.join("blight/broken.jpg"), b"\xff\xd8 truncated").unwrap();
    write_image(&root.join("mildew/x.ppm"), 0.4);
    write_image(&root.join(".cache/y.ppm"), 0.4);
    std::fs::write(root.join("notes.txt"), "loose file").unwrap();

    let out = ingest(root, &registry()).unwrap();
    assert_eq!(out.manifest.rows.len(), 1);
    assert_eq!(out.unmapped, ["mildew"]);
    assert_eq!(out.skipped.len(), 1);
    assert!(out.skipped[0].0.ends_with("blight/broken.jpg"));
    let joined = out.warnings.join("\n");
    assert!(joined.contains("'blight' contains no decodable images"), "{joined}");
    assert!(joined.contains("mildew"), "{joined}");
    assert!(joined.contains("per-class row sum 1 differs from declared total 4"), "{joined}");
}

#[test]
fn missing_root_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let err = ingest(&dir.path().join("absent"), &registry()).unwrap_err();
    assert!(matches!(err, agropath::Error::Data(_)), "{err}");
}
