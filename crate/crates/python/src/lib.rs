//! Python bindings: images, preprocessing, synthetic data, both models,
//! metrics, the quality gate and manifest/ingest helpers.

use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyOSError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use agropath::classifier::{self as clf, ClassifierConfig, ClassifierModel, ClassifierPreset, LabeledImage};
use agropath::imaging::{self, ImagePlanar, ImageRgb};
use agropath::io::{ingest as ingest_tree, manifest::SampleManifest, model_file};
use agropath::metrics::{self, Averaging};
use agropath::nn::EpochRecord;
use agropath::quality::{self as iqa, IqaModel, IqaPreset, QualitySample};
use agropath::registry::LabelRegistry;
use agropath::{synth, workflow, Error};

create_exception!(agropath, AgropathError, PyException);
create_exception!(agropath, ModelFileError, AgropathError);

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io(io) => PyOSError::new_err(io.to_string()),
        Error::ModelFile(m) => ModelFileError::new_err(m.to_string()),
        other => AgropathError::new_err(other.to_string()),
    }
}

trait IntoPy<T> {
    fn py_err(self) -> PyResult<T>;
}

impl<T> IntoPy<T> for agropath::Result<T> {
    fn py_err(self) -> PyResult<T> {
        self.map_err(to_py)
    }
}

/// RGB image with float channels in `[0, 1]`.
#[pyclass(name = "Image", module = "agropath", from_py_object)]
#[derive(Clone)]
struct PyImage(ImagePlanar);

#[pymethods]
impl PyImage {
    /// Decodes a PNG, JPEG or binary PPM file.
    #[staticmethod]
    fn open(path: PathBuf) -> PyResult<Self> {
        Ok(Self(ImageRgb::open(&path).py_err()?.to_planar()))
    }

    /// Builds an image from row-major interleaved 8-bit RGB bytes.
    #[staticmethod]
    fn from_rgb_bytes(width: usize, height: usize, data: Vec<u8>) -> PyResult<Self> {
        Ok(Self(ImageRgb::new(width, height, data).py_err()?.to_planar()))
    }

    #[staticmethod]
    fn filled(width: usize, height: usize, rgb: [f32; 3]) -> Self {
        Self(ImagePlanar::filled(width, height, rgb))
    }

    #[getter]
    fn width(&self) -> usize {
        self.0.width()
    }

    #[getter]
    fn height(&self) -> usize {
        self.0.height()
    }

    fn pixel(&self, x: usize, y: usize) -> PyResult<[f32; 3]> {
        if x >= self.0.width() || y >= self.0.height() {
            return Err(pyo3::exceptions::PyIndexError::new_err(format!("pixel ({x}, {y}) out of range")));
        }
        Ok(self.0.pixel(x, y))
    }

    fn channel_means(&self) -> [f64; 3] {
        self.0.channel_means()
    }

    /// Interleaved 8-bit RGB bytes.
    fn to_rgb_bytes(&self) -> Vec<u8> {
        self.0.to_rgb().data().to_vec()
    }

    fn save_ppm(&self, path: PathBuf) -> PyResult<()> {
        let file = std::fs::File::create(&path)?;
        self.0.to_rgb().write_ppm(std::io::BufWriter::new(file)).py_err()
    }

    fn __repr__(&self) -> String {
        format!("Image({}x{})", self.0.width(), self.0.height())
    }
}

#[pyfunction]
fn equalize_intensity(image: &PyImage) -> PyImage {
    PyImage(imaging::equalize_intensity(&image.0))
}

#[pyfunction]
fn gray_world_balance(image: &PyImage) -> PyResult<PyImage> {
    Ok(PyImage(imaging::gray_world_balance(&image.0).py_err()?))
}

#[pyfunction]
fn resize(image: &PyImage, width: usize, height: usize) -> PyResult<PyImage> {
    Ok(PyImage(imaging::resize_bilinear(&image.0, width, height).py_err()?))
}

/// Equalization, gray-world balance, then a square resize.
#[pyfunction]
fn preprocess(image: &PyImage, size: usize) -> PyResult<PyImage> {
    Ok(PyImage(imaging::preprocess(&image.0, size).py_err()?))
}

#[pyclass(name = "LabelRegistry", module = "agropath", from_py_object)]
#[derive(Clone)]
struct PyRegistry(LabelRegistry);

#[pymethods]
impl PyRegistry {
    #[new]
    #[pyo3(signature = (name, classes, declared_total=None))]
    fn new(name: String, classes: Vec<String>, declared_total: Option<u64>) -> PyResult<Self> {
        Ok(Self(LabelRegistry::new(name, classes).py_err()?.with_declared_total(declared_total)))
    }

    /// `plantvillage-38` or `synthetic-leaves-4`.
    #[staticmethod]
    fn builtin(name: &str) -> PyResult<Self> {
        LabelRegistry::builtin(name)
            .map(Self)
            .ok_or_else(|| AgropathError::new_err(format!("unknown built-in registry '{name}'")))
    }

    #[getter]
    fn name(&self) -> String {
        self.0.name().to_string()
    }

    #[getter]
    fn classes(&self) -> Vec<String> {
        self.0.classes().to_vec()
    }

    #[getter]
    fn declared_total(&self) -> Option<u64> {
        self.0.declared_total()
    }

    fn index_of(&self, class: &str) -> Option<usize> {
        self.0.index_of(class)
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn __repr__(&self) -> String {
        format!("LabelRegistry('{}', {} classes)", self.0.name(), self.0.len())
    }
}

fn history_dicts<'py>(py: Python<'py>, history: &[EpochRecord]) -> PyResult<Vec<Bound<'py, PyDict>>> {
    history
        .iter()
        .map(|r| {
            let d = PyDict::new(py);
            d.set_item("epoch", r.epoch)?;
            d.set_item("lr", r.lr)?;
            d.set_item("train_loss", r.train_loss)?;
            d.set_item("val_loss", r.val_loss)?;
            d.set_item("val_accuracy", r.val_accuracy)?;
            d.set_item("improved", r.improved)?;
            Ok(d)
        })
        .collect()
}

fn training_summary<'py>(
    py: Python<'py>,
    history: &[EpochRecord],
    best_epoch: usize,
    stopped_early: bool,
    warnings: &[String],
) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("history", history_dicts(py, history)?)?;
    d.set_item("best_epoch", best_epoch)?;
    d.set_item("stopped_early", stopped_early)?;
    d.set_item("warnings", warnings.to_vec())?;
    Ok(d)
}

fn labeled(images: Vec<PyImage>, labels: Vec<usize>) -> PyResult<Vec<LabeledImage>> {
    if images.len() != labels.len() {
        return Err(AgropathError::new_err(format!(
            "{} images but {} labels",
            images.len(),
            labels.len()
        )));
    }
    Ok(images
        .into_iter()
        .zip(labels)
        .map(|(i, label)| LabeledImage { image: i.0, label })
        .collect())
}

/// Disease classifier bound to a label registry.
#[pyclass(name = "Classifier", module = "agropath", from_py_object)]
#[derive(Clone)]
struct PyClassifier(ClassifierModel);

#[pymethods]
impl PyClassifier {
    #[new]
    #[pyo3(signature = (registry, preset="mobile", input_size=64, seed=0))]
    fn new(registry: &PyRegistry, preset: &str, input_size: usize, seed: u64) -> PyResult<Self> {
        let preset: ClassifierPreset = preset.parse().py_err()?;
        Ok(Self(clf::build_classifier(preset, registry.0.clone(), input_size, seed).py_err()?))
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self(model_file::load_classifier(&path).py_err()?))
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        model_file::save(&path, &model_file::SavedModel::Classifier(self.0.clone())).py_err()
    }

    #[getter]
    fn registry(&self) -> PyRegistry {
        PyRegistry(self.0.registry.clone())
    }

    #[getter]
    fn preset(&self) -> String {
        self.0.preset.clone()
    }

    #[getter]
    fn input_size(&self) -> usize {
        self.0.input_size
    }

    fn param_count(&self) -> usize {
        self.0.network.param_count()
    }

    /// Trains in place and returns the epoch history and best epoch.
    #[pyo3(signature = (images, labels, seed=0, max_epochs=None, expansion=None))]
    fn train<'py>(
        &mut self,
        py: Python<'py>,
        images: Vec<PyImage>,
        labels: Vec<usize>,
        seed: u64,
        max_epochs: Option<usize>,
        expansion: Option<usize>,
    ) -> PyResult<Bound<'py, PyDict>> {
        let samples = labeled(images, labels)?;
        let preset: ClassifierPreset = self.0.preset.parse().py_err()?;
        let mut config = ClassifierConfig::for_preset(preset).with_seed(seed);
        if let Some(n) = max_epochs {
            config.train.max_epochs = n;
            config.train.patience = config.train.patience.min(n);
        }
        if let Some(f) = expansion {
            config.expansion = f;
        }
        let model = self.0.clone();
        let run = py
            .detach(|| clf::train_classifier(model, &samples, &config))
            .py_err()?;
        self.0 = run.model;
        training_summary(py, &run.history, run.best_epoch, run.stopped_early, &run.warnings)
    }

    /// Returns `(class_name, probabilities)`.
    fn predict(&self, image: &PyImage) -> PyResult<(String, Vec<f32>)> {
        let p = clf::predict(&self.0, &image.0).py_err()?;
        Ok((p.class_name, p.probabilities))
    }

    /// Confusion matrix (rows are true classes) and summary scores.
    #[pyo3(signature = (images, labels, averaging="macro"))]
    fn evaluate<'py>(
        &self,
        py: Python<'py>,
        images: Vec<PyImage>,
        labels: Vec<usize>,
        averaging: &str,
    ) -> PyResult<Bound<'py, PyDict>> {
        let samples = labeled(images, labels)?;
        let averaging: Averaging = averaging.parse().py_err()?;
        let (cm, report) = py
            .detach(|| clf::evaluate_classifier(&self.0, &samples, averaging))
            .py_err()?;
        let d = PyDict::new(py);
        let k = cm.k();
        let rows: Vec<Vec<u64>> = (0..k).map(|t| (0..k).map(|p| cm.get(t, p)).collect()).collect();
        d.set_item("confusion", rows)?;
        d.set_item("accuracy", report.accuracy)?;
        d.set_item("precision", report.precision)?;
        d.set_item("recall", report.recall)?;
        d.set_item("f1", report.f1)?;
        Ok(d)
    }

    fn __repr__(&self) -> String {
        format!(
            "Classifier(preset='{}', input_size={}, classes={})",
            self.0.preset,
            self.0.input_size,
            self.0.registry.len()
        )
    }
}

fn scored(images: Vec<PyImage>, mos: Vec<f32>) -> PyResult<Vec<QualitySample>> {
    if images.len() != mos.len() {
        return Err(AgropathError::new_err(format!(
            "{} images but {} scores",
            images.len(),
            mos.len()
        )));
    }
    Ok(images
        .into_iter()
        .zip(mos)
        .map(|(i, m)| QualitySample {
            image: i.0,
            mos: Some(m),
        })
        .collect())
}

/// No-reference quality regressor scoring images in `[0, 1]`.
#[pyclass(name = "QualityModel", module = "agropath", from_py_object)]
#[derive(Clone)]
struct PyQualityModel(IqaModel);

#[pymethods]
impl PyQualityModel {
    #[new]
    #[pyo3(signature = (preset="small", input_size=64, seed=0))]
    fn new(preset: &str, input_size: usize, seed: u64) -> PyResult<Self> {
        let preset: IqaPreset = preset.parse().py_err()?;
        Ok(Self(iqa::build_iqa_model(preset, input_size, seed).py_err()?))
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self(model_file::load_quality(&path).py_err()?))
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        model_file::save(&path, &model_file::SavedModel::Quality(self.0.clone())).py_err()
    }

    #[getter]
    fn input_size(&self) -> usize {
        self.0.input_size
    }

    fn param_count(&self) -> usize {
        self.0.network.param_count()
    }

    /// Trains in place on normalized MOS targets.
    #[pyo3(signature = (train_images, train_mos, val_images, val_mos, max_epochs=None))]
    fn train<'py>(
        &mut self,
        py: Python<'py>,
        train_images: Vec<PyImage>,
        train_mos: Vec<f32>,
        val_images: Vec<PyImage>,
        val_mos: Vec<f32>,
        max_epochs: Option<usize>,
    ) -> PyResult<Bound<'py, PyDict>> {
        let train = scored(train_images, train_mos)?;
        let val = scored(val_images, val_mos)?;
        let mut config = iqa::default_iqa_config();
        if let Some(n) = max_epochs {
            config.max_epochs = n;
            config.patience = config.patience.min(n);
        }
        let model = self.0.clone();
        let run = py.detach(|| iqa::train_iqa(model, &train, &val, &config)).py_err()?;
        self.0 = run.model;
        training_summary(py, &run.history, run.best_epoch, run.stopped_early, &run.warnings)
    }

    fn score(&self, image: &PyImage) -> PyResult<f32> {
        iqa::score_quality(&self.0, &image.0).py_err()
    }

    fn __repr__(&self) -> String {
        format!("QualityModel(preset='{}', input_size={})", self.0.preset, self.0.input_size)
    }
}

/// Threshold that rejects `floor(discard_fraction * n)` of the scores.
#[pyfunction]
fn calibrate_threshold(scores: Vec<f32>, discard_fraction: f64) -> PyResult<f32> {
    iqa::calibrate_threshold(&scores, discard_fraction).py_err()
}

/// True when the score clears the threshold.
#[pyfunction]
fn gate(score: f32, threshold: f32) -> bool {
    iqa::gate(score, threshold).passed
}

/// Scores the image and classifies it only if it passes the gate.
#[pyfunction]
fn run_workflow<'py>(
    py: Python<'py>,
    image: &PyImage,
    quality: &PyQualityModel,
    classifier: &PyClassifier,
    threshold: f32,
) -> PyResult<Bound<'py, PyDict>> {
    let r = workflow::run_workflow_image(&image.0, &quality.0, &classifier.0, threshold).py_err()?;
    let d = PyDict::new(py);
    d.set_item("score", r.score)?;
    d.set_item("threshold", r.threshold)?;
    d.set_item("rejected", r.is_rejected())?;
    match r.status {
        workflow::WorkflowStatus::Rejected => {
            d.set_item("class", py.None())?;
            d.set_item("probabilities", py.None())?;
        }
        workflow::WorkflowStatus::Diagnosed {
            class_name,
            probabilities,
            ..
        } => {
            d.set_item("class", class_name)?;
            d.set_item("probabilities", probabilities)?;
        }
    }
    Ok(d)
}

#[pyfunction]
fn srocc(pred: Vec<f64>, target: Vec<f64>) -> PyResult<f64> {
    metrics::srocc(&pred, &target).py_err()
}

#[pyfunction]
fn plcc(pred: Vec<f64>, target: Vec<f64>) -> PyResult<f64> {
    metrics::plcc(&pred, &target).py_err()
}

#[pyfunction]
fn rmse(pred: Vec<f64>, target: Vec<f64>) -> PyResult<f64> {
    metrics::rmse(&pred, &target).py_err()
}

/// `k × k` counts with true classes as rows.
#[pyfunction]
fn confusion_matrix(predictions: Vec<usize>, labels: Vec<usize>, k: usize) -> PyResult<Vec<Vec<u64>>> {
    let m = metrics::confusion_matrix(&predictions, &labels, k).py_err()?;
    Ok((0..k).map(|t| (0..k).map(|p| m.get(t, p)).collect()).collect())
}

/// Synthetic four-class leaf images as `(images, labels)`.
#[pyfunction]
fn leaf_dataset(per_class: usize, size: usize, seed: u64) -> PyResult<(Vec<PyImage>, Vec<usize>)> {
    Ok(synth::leaf_dataset(per_class, size, seed)
        .py_err()?
        .into_iter()
        .map(|s| (PyImage(s.image), s.label))
        .unzip())
}

/// Blurred textures with scores falling as blur grows, as `(images, mos)`.
#[pyfunction]
fn blur_dataset(per_level: usize, size: usize, seed: u64) -> PyResult<(Vec<PyImage>, Vec<f32>)> {
    Ok(synth::blur_dataset(per_level, size, seed)
        .py_err()?
        .into_iter()
        .map(|s| (PyImage(s.image), s.mos.unwrap_or_default()))
        .unzip())
}

#[pyfunction]
fn leaf_registry() -> PyRegistry {
    PyRegistry(synth::leaf_registry())
}

/// Rows of a manifest CSV as `(path, label, mos)` tuples.
#[pyfunction]
fn read_manifest(path: PathBuf) -> PyResult<Vec<(PathBuf, String, Option<f32>)>> {
    let m = SampleManifest::read(&path).py_err()?;
    Ok(m.rows.into_iter().map(|r| (r.path, r.label, r.mos)).collect())
}

/// Scans `root/<class>/` directories and optionally writes the manifest.
#[pyfunction]
#[pyo3(signature = (root, registry, out=None))]
fn ingest<'py>(
    py: Python<'py>,
    root: PathBuf,
    registry: &PyRegistry,
    out: Option<PathBuf>,
) -> PyResult<Bound<'py, PyDict>> {
    let outcome = py.detach(|| ingest_tree::ingest(&root, &registry.0)).py_err()?;
    if let Some(path) = out {
        outcome.manifest.write(&path).py_err()?;
    }
    let d = PyDict::new(py);
    let rows: Vec<(PathBuf, String)> = outcome
        .manifest
        .rows
        .into_iter()
        .map(|r| (r.path, r.label))
        .collect();
    d.set_item("rows", rows)?;
    d.set_item("class_counts", outcome.class_counts)?;
    d.set_item("unmapped", outcome.unmapped)?;
    d.set_item("warnings", outcome.warnings)?;
    Ok(d)
}

#[pymodule]
#[pyo3(name = "agropath")]
fn agropath_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("AgropathError", m.py().get_type::<AgropathError>())?;
    m.add("ModelFileError", m.py().get_type::<ModelFileError>())?;
    m.add_class::<PyImage>()?;
    m.add_class::<PyRegistry>()?;
    m.add_class::<PyClassifier>()?;
    m.add_class::<PyQualityModel>()?;
    m.add_function(wrap_pyfunction!(equalize_intensity, m)?)?;
    m.add_function(wrap_pyfunction!(gray_world_balance, m)?)?;
    m.add_function(wrap_pyfunction!(resize, m)?)?;
    m.add_function(wrap_pyfunction!(preprocess, m)?)?;
    m.add_function(wrap_pyfunction!(calibrate_threshold, m)?)?;
    m.add_function(wrap_pyfunction!(gate, m)?)?;
    m.add_function(wrap_pyfunction!(run_workflow, m)?)?;
    m.add_function(wrap_pyfunction!(srocc, m)?)?;
    m.add_function(wrap_pyfunction!(plcc, m)?)?;
    m.add_function(wrap_pyfunction!(rmse, m)?)?;
    m.add_function(wrap_pyfunction!(confusion_matrix, m)?)?;
    m.add_function(wrap_pyfunction!(leaf_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(blur_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(leaf_registry, m)?)?;
    m.add_function(wrap_pyfunction!(read_manifest, m)?)?;
    m.add_function(wrap_pyfunction!(ingest, m)?)?;
    Ok(())
}
