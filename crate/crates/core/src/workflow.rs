//! Gate-then-classify prediction: one shared preprocessing pass, a quality
//! score, and a diagnosis only for images that clear the threshold.

use std::path::Path;

use sha2::{Digest, Sha256};

use crate::classifier::{predict_preprocessed, ClassifierModel, Prediction};
use crate::error::{Error, Result};
use crate::imaging::{equalize_intensity, gray_world_balance, resize_bilinear, ImagePlanar, ImageRgb};
use crate::quality::{gate, score_preprocessed, IqaModel};
use crate::registry::LabelRegistry;

#[derive(Debug, Clone, PartialEq)]
pub enum WorkflowStatus {
    Rejected,
    Diagnosed {
        class_index: usize,
        class_name: String,
        probabilities: Vec<f32>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorkflowResult {
    pub status: WorkflowStatus,
    pub score: f32,
    pub threshold: f32,
    /// Digests of the image each stage consumed; equal when both models
    /// share an input size.
    pub quality_input_digest: String,
    pub classifier_input_digest: String,
}

impl WorkflowResult {
    pub fn is_rejected(&self) -> bool {
        self.status == WorkflowStatus::Rejected
    }

    pub fn class_name(&self) -> Option<&str> {
        match &self.status {
            WorkflowStatus::Diagnosed { class_name, .. } => Some(class_name),
            WorkflowStatus::Rejected => None,
        }
    }
}

/// Hex of the first 8 bytes of SHA-256 over the image's dimensions and pixels.
pub fn image_digest(image: &ImagePlanar) -> String {
    let mut h = Sha256::new();
    h.update((image.width() as u64).to_le_bytes());
    h.update((image.height() as u64).to_le_bytes());
    h.update(image.to_le_bytes());
    h.finalize()[..8].iter().map(|b| format!("{b:02x}")).collect()
}

/// Gate decision plus a lazily computed diagnosis for passing items.
pub fn decide(
    score: f32,
    threshold: f32,
    classify: impl FnOnce() -> Result<Prediction>,
) -> Result<WorkflowStatus> {
    if !gate(score, threshold).passed {
        return Ok(WorkflowStatus::Rejected);
    }
    let p = classify()?;
    Ok(WorkflowStatus::Diagnosed {
        class_index: p.class_index,
        class_name: p.class_name,
        probabilities: p.probabilities,
    })
}

/// Runs the workflow on an already decoded image.
pub fn run_workflow_image(
    image: &ImagePlanar,
    iqa: &IqaModel,
    classifier: &ClassifierModel,
    threshold: f32,
) -> Result<WorkflowResult> {
    let balanced = gray_world_balance(&equalize_intensity(image))?;
    let for_quality = resize_bilinear(&balanced, iqa.input_size, iqa.input_size)?;
    let for_classifier = if classifier.input_size == iqa.input_size {
        for_quality.clone()
    } else {
        resize_bilinear(&balanced, classifier.input_size, classifier.input_size)?
    };
    let score = score_preprocessed(iqa, &for_quality)?;
    let status = decide(score, threshold, || {
        Ok(predict_preprocessed(classifier, std::slice::from_ref(&for_classifier))?.remove(0))
    })?;
    Ok(WorkflowResult {
        status,
        score,
        threshold,
        quality_input_digest: image_digest(&for_quality),
        classifier_input_digest: image_digest(&for_classifier),
    })
}

/// Decodes `path` and runs the workflow. When `expected` is given, the
/// classifier's embedded registry must match it exactly.
pub fn run_workflow(
    path: &Path,
    iqa: &IqaModel,
    classifier: &ClassifierModel,
    threshold: f32,
    expected: Option<&LabelRegistry>,
) -> Result<WorkflowResult> {
    if let Some(reg) = expected {
        if reg.name() != classifier.registry.name() || reg.classes() != classifier.registry.classes() {
            return Err(Error::RegistryMismatch(format!(
                "classifier registry '{}' ({} classes) differs from expected '{}' ({} classes)",
                classifier.registry.name(),
                classifier.registry.len(),
                reg.name(),
                reg.len()
            )));
        }
    }
    if !threshold.is_finite() {
        return Err(Error::InvalidArgument(format!("threshold {threshold}")));
    }
    let image = ImageRgb::open(path)?.to_planar();
    run_workflow_image(&image, iqa, classifier, threshold)
}
