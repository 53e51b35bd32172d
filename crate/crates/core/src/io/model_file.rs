//! Binary model container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "AGRP"            magic
//! u16               format version (1)
//! u8                kind: 0 quality regressor, 1 classifier
//! u16 + bytes       preset name (UTF-8)
//! u32               input size (square)
//! [classifier only] u16 + bytes registry name, u32 class count, then u16 + bytes per class
//! u32               layer count, then per layer: u8 tag + u32 fields
//! u64               float count
//! f32 × count       per layer: parameters, then buffers, in declaration order
//! u64               first 8 bytes of SHA-256 over everything after the version field
//! ```

use std::path::Path;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::classifier::ClassifierModel;
use crate::error::Result;
use crate::nn::{Activation, LayerSpec, Network};
use crate::quality::IqaModel;
use crate::registry::LabelRegistry;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"AGRP";
pub const FORMAT_VERSION: u16 = 1;
const HEADER_LEN: usize = 6;
const CHECKSUM_LEN: usize = 8;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ModelFileError {
    #[error("not a model file (bad magic bytes)")]
    BadMagic,
    #[error("unsupported model file version {0}")]
    UnsupportedVersion(u16),
    #[error("model file checksum mismatch (stored {stored:016x}, computed {computed:016x})")]
    ChecksumMismatch { stored: u64, computed: u64 },
    #[error("model file is truncated")]
    Truncated,
    #[error("malformed model file: {0}")]
    Malformed(String),
    #[error("expected a {expected} model, found a {found} model")]
    WrongKind {
        expected: &'static str,
        found: &'static str,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Quality,
    Classifier,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Quality => "quality",
            ModelKind::Classifier => "classifier",
        }
    }
}

#[derive(Debug, Clone)]
pub enum SavedModel {
    Quality(IqaModel),
    Classifier(ClassifierModel),
}

impl SavedModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            SavedModel::Quality(_) => ModelKind::Quality,
            SavedModel::Classifier(_) => ModelKind::Classifier,
        }
    }
}

pub fn checksum(bytes: &[u8]) -> u64 {
    let digest = Sha256::digest(bytes);
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u16(&mut self, v: u16) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u32(&mut self, v: usize) -> Result<(), ModelFileError> {
        let v = u32::try_from(v).map_err(|_| ModelFileError::Malformed(format!("{v} exceeds u32")))?;
        self.0.extend_from_slice(&v.to_le_bytes());
        Ok(())
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn str(&mut self, s: &str) -> Result<(), ModelFileError> {
        let n = u16::try_from(s.len()).map_err(|_| ModelFileError::Malformed("string too long".into()))?;
        self.u16(n);
        self.0.extend_from_slice(s.as_bytes());
        Ok(())
    }
}

fn activation_code(a: Activation) -> usize {
    match a {
        Activation::Swish => 0,
        Activation::Relu => 1,
        Activation::Sigmoid => 2,
    }
}

fn write_layer(w: &mut Writer, layer: &LayerSpec) -> Result<(), ModelFileError> {
    match *layer {
        LayerSpec::Conv2d {
            in_ch,
            out_ch,
            kernel,
            stride,
            padding,
        } => {
            w.u8(0);
            for v in [in_ch, out_ch, kernel, stride, padding] {
                w.u32(v)?;
            }
        }
        LayerSpec::DepthwiseConv2d {
            ch,
            kernel,
            stride,
            padding,
        } => {
            w.u8(1);
            for v in [ch, kernel, stride, padding] {
                w.u32(v)?;
            }
        }
        LayerSpec::PointwiseConv2d { in_ch, out_ch } => {
            w.u8(2);
            w.u32(in_ch)?;
            w.u32(out_ch)?;
        }
        LayerSpec::BatchNorm {
            ch,
            epsilon,
            momentum,
        } => {
            w.u8(3);
            w.u32(ch)?;
            w.u32(epsilon.to_bits() as usize)?;
            w.u32(momentum.to_bits() as usize)?;
        }
        LayerSpec::Activation(a) => {
            w.u8(4);
            w.u32(activation_code(a))?;
        }
        LayerSpec::SqueezeExcite { ch, reduction } => {
            w.u8(5);
            w.u32(ch)?;
            w.u32(reduction)?;
        }
        LayerSpec::GlobalMaxPool => w.u8(6),
        LayerSpec::GlobalAvgPool => w.u8(7),
        LayerSpec::Dense { in_dim, out_dim } => {
            w.u8(8);
            w.u32(in_dim)?;
            w.u32(out_dim)?;
        }
        LayerSpec::Dropout { p } => {
            w.u8(9);
            w.u32(p.to_bits() as usize)?;
        }
        LayerSpec::Softmax => w.u8(10),
    }
    Ok(())
}

fn encode_parts(
    kind: ModelKind,
    preset: &str,
    input_size: usize,
    registry: Option<&LabelRegistry>,
    network: &Network,
) -> Result<Vec<u8>, ModelFileError> {
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(MAGIC);
    w.u16(FORMAT_VERSION);
    w.u8(match kind {
        ModelKind::Quality => 0,
        ModelKind::Classifier => 1,
    });
    w.str(preset)?;
    w.u32(input_size)?;
    if let Some(reg) = registry {
        w.str(reg.name())?;
        w.u32(reg.len())?;
        for c in reg.classes() {
            w.str(c)?;
        }
    }
    w.u32(network.layers().len())?;
    for layer in network.layers() {
        write_layer(&mut w, layer)?;
    }
    let floats: usize = network
        .params()
        .iter()
        .chain(network.buffers())
        .flatten()
        .map(Tensor::len)
        .sum();
    w.u64(floats as u64);
    for (ps, bs) in network.params().iter().zip(network.buffers()) {
        for t in ps.iter().chain(bs) {
            for v in t.data() {
                w.0.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    let sum = checksum(&w.0[HEADER_LEN..]);
    w.u64(sum);
    Ok(w.0)
}

pub fn encode(model: &SavedModel) -> Result<Vec<u8>, ModelFileError> {
    match model {
        SavedModel::Quality(m) => encode_parts(ModelKind::Quality, &m.preset, m.input_size, None, &m.network),
        SavedModel::Classifier(m) => encode_parts(
            ModelKind::Classifier,
            &m.preset,
            m.input_size,
            Some(&m.registry),
            &m.network,
        ),
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ModelFileError> {
        let end = self.pos.checked_add(n).ok_or(ModelFileError::Truncated)?;
        let s = self.buf.get(self.pos..end).ok_or(ModelFileError::Truncated)?;
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8, ModelFileError> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16, ModelFileError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
    fn u32(&mut self) -> Result<u32, ModelFileError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn usize(&mut self) -> Result<usize, ModelFileError> {
        Ok(self.u32()? as usize)
    }
    fn u64(&mut self) -> Result<u64, ModelFileError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn str(&mut self) -> Result<String, ModelFileError> {
        let n = self.u16()? as usize;
        String::from_utf8(self.take(n)?.to_vec())
            .map_err(|_| ModelFileError::Malformed("string is not UTF-8".into()))
    }
}

fn read_layer(r: &mut Reader<'_>) -> Result<LayerSpec, ModelFileError> {
    let tag = r.u8()?;
    Ok(match tag {
        0 => LayerSpec::Conv2d {
            in_ch: r.usize()?,
            out_ch: r.usize()?,
            kernel: r.usize()?,
            stride: r.usize()?,
            padding: r.usize()?,
        },
        1 => LayerSpec::DepthwiseConv2d {
            ch: r.usize()?,
            kernel: r.usize()?,
            stride: r.usize()?,
            padding: r.usize()?,
        },
        2 => LayerSpec::PointwiseConv2d {
            in_ch: r.usize()?,
            out_ch: r.usize()?,
        },
        3 => LayerSpec::BatchNorm {
            ch: r.usize()?,
            epsilon: f32::from_bits(r.u32()?),
            momentum: f32::from_bits(r.u32()?),
        },
        4 => LayerSpec::Activation(match r.u32()? {
            0 => Activation::Swish,
            1 => Activation::Relu,
            2 => Activation::Sigmoid,
            a => return Err(ModelFileError::Malformed(format!("unknown activation {a}"))),
        }),
        5 => LayerSpec::SqueezeExcite {
            ch: r.usize()?,
            reduction: r.usize()?,
        },
        6 => LayerSpec::GlobalMaxPool,
        7 => LayerSpec::GlobalAvgPool,
        8 => LayerSpec::Dense {
            in_dim: r.usize()?,
            out_dim: r.usize()?,
        },
        9 => LayerSpec::Dropout {
            p: f32::from_bits(r.u32()?),
        },
        10 => LayerSpec::Softmax,
        t => return Err(ModelFileError::Malformed(format!("unknown layer tag {t}"))),
    })
}

fn read_tensors(r: &mut Reader<'_>, shapes: Vec<Vec<usize>>) -> Result<Vec<Tensor>, ModelFileError> {
    shapes
        .into_iter()
        .map(|shape| {
            let n = shape.iter().try_fold(4usize, |n, &d| n.checked_mul(d));
            let bytes = r.take(n.ok_or(ModelFileError::Truncated)?)?;
            let data = bytes
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
                .collect();
            Tensor::new(shape, data).map_err(|e| ModelFileError::Malformed(e.to_string()))
        })
        .collect()
}

fn parse(bytes: &[u8]) -> Result<SavedModel, ModelFileError> {
    let mut r = Reader { buf: bytes, pos: HEADER_LEN };
    let kind = match r.u8()? {
        0 => ModelKind::Quality,
        1 => ModelKind::Classifier,
        k => return Err(ModelFileError::Malformed(format!("unknown model kind {k}"))),
    };
    let preset = r.str()?;
    let input_size = r.usize()?;
    let registry = if kind == ModelKind::Classifier {
        let name = r.str()?;
        let n = r.usize()?;
        let mut classes = Vec::new();
        for _ in 0..n {
            classes.push(r.str()?);
        }
        Some(LabelRegistry::new(name, classes).map_err(|e| ModelFileError::Malformed(e.to_string()))?)
    } else {
        None
    };
    let n_layers = r.usize()?;
    let mut layers = Vec::new();
    for _ in 0..n_layers {
        layers.push(read_layer(&mut r)?);
    }
    let floats = r.u64()?;
    Network::<f32>::shape_chain(&layers, &[3, input_size, input_size])
        .map_err(|e| ModelFileError::Malformed(e.to_string()))?;
    let expected = layers
        .iter()
        .flat_map(|l| l.param_shapes().into_iter().chain(l.buffer_shapes()))
        .try_fold(0usize, |acc, s| {
            s.iter().try_fold(1usize, |n, &d| n.checked_mul(d))?.checked_add(acc)
        })
        .ok_or_else(|| ModelFileError::Malformed("layer table size overflows".into()))?;
    if floats != expected as u64 {
        return Err(ModelFileError::Malformed(format!(
            "float count {floats} does not match layer table ({expected})"
        )));
    }
    let mut params = Vec::with_capacity(layers.len());
    let mut buffers = Vec::with_capacity(layers.len());
    for l in &layers {
        params.push(read_tensors(&mut r, l.param_shapes())?);
        buffers.push(read_tensors(&mut r, l.buffer_shapes())?);
    }
    r.u64()?;
    if r.pos != bytes.len() {
        return Err(ModelFileError::Malformed("trailing bytes after checksum".into()));
    }
    let network = Network::from_parts(layers, &[3, input_size, input_size], params, buffers)
        .map_err(|e| ModelFileError::Malformed(e.to_string()))?;
    Ok(match registry {
        None => SavedModel::Quality(IqaModel {
            network,
            preset,
            input_size,
        }),
        Some(registry) => {
            if network.output_shape() != [registry.len()] {
                return Err(ModelFileError::Malformed(format!(
                    "network outputs {:?} but registry has {} classes",
                    network.output_shape(),
                    registry.len()
                )));
            }
            SavedModel::Classifier(ClassifierModel {
                network,
                preset,
                input_size,
                registry,
            })
        }
    })
}

pub fn decode(bytes: &[u8]) -> Result<SavedModel, ModelFileError> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(ModelFileError::BadMagic);
    }
    if bytes.len() < HEADER_LEN {
        return Err(ModelFileError::Truncated);
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != FORMAT_VERSION {
        return Err(ModelFileError::UnsupportedVersion(version));
    }
    if bytes.len() < HEADER_LEN + CHECKSUM_LEN {
        return Err(ModelFileError::Truncated);
    }
    let body_end = bytes.len() - CHECKSUM_LEN;
    let stored = u64::from_le_bytes(bytes[body_end..].try_into().unwrap());
    let computed = checksum(&bytes[HEADER_LEN..body_end]);
    if stored != computed {
        // A short file also fails the checksum; report it as truncation.
        return Err(match parse(bytes) {
            Err(ModelFileError::Truncated) => ModelFileError::Truncated,
            _ => ModelFileError::ChecksumMismatch { stored, computed },
        });
    }
    parse(bytes)
}

pub fn save(path: &Path, model: &SavedModel) -> Result<()> {
    super::write_atomic(path, &encode(model)?)
}

pub fn load(path: &Path) -> Result<SavedModel> {
    let bytes = std::fs::read(path)?;
    Ok(decode(&bytes)?)
}

pub fn load_quality(path: &Path) -> Result<IqaModel> {
    match load(path)? {
        SavedModel::Quality(m) => Ok(m),
        other => Err(ModelFileError::WrongKind {
            expected: ModelKind::Quality.as_str(),
            found: other.kind().as_str(),
        }
        .into()),
    }
}

pub fn load_classifier(path: &Path) -> Result<ClassifierModel> {
    match load(path)? {
        SavedModel::Classifier(m) => Ok(m),
        other => Err(ModelFileError::WrongKind {
            expected: ModelKind::Classifier.as_str(),
            found: other.kind().as_str(),
        }
        .into()),
    }
}
