//! Raster types and the preprocessing chain: intensity histogram equalization,
//! gray-world color balance, bilinear resizing and network input conversion.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// 8-bit interleaved RGB raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageRgb {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl ImageRgb {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidArgument("zero-area image".into()));
        }
        if data.len() != width * height * 3 {
            return Err(Error::InvalidArgument(format!(
                "{width}×{height} RGB image needs {} bytes, got {}",
                width * height * 3,
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn to_planar(&self) -> ImagePlanar {
        let n = self.width * self.height;
        let mut planes = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
        for (i, px) in self.data.chunks_exact(3).enumerate() {
            for c in 0..3 {
                planes[c][i] = px[c] as f32 / 255.0;
            }
        }
        ImagePlanar {
            width: self.width,
            height: self.height,
            planes,
        }
    }

    /// Reads a binary PPM (`P6`, maxval 255).
    pub fn read_ppm(reader: impl Read) -> Result<Self> {
        let mut r = BufReader::new(reader);
        let mut fields = Vec::with_capacity(4);
        let mut token = Vec::new();
        while fields.len() < 4 {
            let mut byte = [0u8; 1];
            if r.read(&mut byte)? == 0 {
                return Err(ppm_err("truncated header"));
            }
            match byte[0] {
                b'#' if token.is_empty() => {
                    let mut skip = Vec::new();
                    r.read_until(b'\n', &mut skip)?;
                }
                b if b.is_ascii_whitespace() => {
                    if !token.is_empty() {
                        fields.push(String::from_utf8_lossy(&token).into_owned());
                        token.clear();
                    }
                }
                b => token.push(b),
            }
        }
        if fields[0] != "P6" {
            return Err(ppm_err("not a binary PPM (P6)"));
        }
        let parse = |s: &str| s.parse::<usize>().map_err(|_| ppm_err("bad header number"));
        let (w, h, maxval) = (parse(&fields[1])?, parse(&fields[2])?, parse(&fields[3])?);
        if maxval != 255 {
            return Err(ppm_err("only maxval 255 is supported"));
        }
        let mut data = vec![0u8; w * h * 3];
        r.read_exact(&mut data).map_err(|_| ppm_err("truncated pixel data"))?;
        Self::new(w, h, data)
    }

    pub fn write_ppm(&self, mut writer: impl Write) -> Result<()> {
        write!(writer, "P6\n{} {}\n255\n", self.width, self.height)?;
        writer.write_all(&self.data)?;
        Ok(())
    }

    /// Decodes PNG, JPEG or binary PPM; grayscale and alpha inputs become 8-bit RGB.
    pub fn open(path: &Path) -> Result<Self> {
        let decode_err = |message: String| Error::Decode {
            path: path.to_path_buf(),
            message,
        };
        let bytes = std::fs::read(path).map_err(|e| decode_err(e.to_string()))?;
        if bytes.starts_with(b"P6") {
            return Self::read_ppm(bytes.as_slice()).map_err(|e| decode_err(e.to_string()));
        }
        let img = image::load_from_memory(&bytes).map_err(|e| decode_err(e.to_string()))?;
        let rgb = img.to_rgb8();
        let (w, h) = rgb.dimensions();
        Self::new(w as usize, h as usize, rgb.into_raw())
    }
}

fn ppm_err(msg: &str) -> Error {
    Error::Data(format!("PPM: {msg}"))
}

/// Three float planes (R, G, B) with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImagePlanar {
    width: usize,
    height: usize,
    planes: [Vec<f32>; 3],
}

impl ImagePlanar {
    /// Builds an image from planes, clamping every value into `[0, 1]`.
    pub fn new(width: usize, height: usize, planes: [Vec<f32>; 3]) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidArgument("zero-area image".into()));
        }
        if planes.iter().any(|p| p.len() != width * height) {
            return Err(Error::InvalidArgument(format!(
                "planes must hold {} values",
                width * height
            )));
        }
        let mut img = Self {
            width,
            height,
            planes,
        };
        img.clamp();
        Ok(img)
    }

    pub fn filled(width: usize, height: usize, rgb: [f32; 3]) -> Self {
        Self::new(
            width,
            height,
            rgb.map(|v| vec![v; width * height]),
        )
        .expect("non-zero size")
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn plane(&self, c: usize) -> &[f32] {
        &self.planes[c]
    }

    pub fn planes(&self) -> &[Vec<f32>; 3] {
        &self.planes
    }

    pub fn get(&self, c: usize, x: usize, y: usize) -> f32 {
        self.planes[c][y * self.width + x]
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f32; 3] {
        let i = y * self.width + x;
        [self.planes[0][i], self.planes[1][i], self.planes[2][i]]
    }

    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [f32; 3]) {
        let i = y * self.width + x;
        for c in 0..3 {
            self.planes[c][i] = rgb[c].clamp(0.0, 1.0);
        }
    }

    fn clamp(&mut self) {
        for p in &mut self.planes {
            for v in p.iter_mut() {
                // NaN also collapses to 0.
                *v = if *v > 0.0 { v.min(1.0) } else { 0.0 };
            }
        }
    }

    pub fn channel_means(&self) -> [f64; 3] {
        let n = (self.width * self.height) as f64;
        [0, 1, 2].map(|c| self.planes[c].iter().map(|&v| v as f64).sum::<f64>() / n)
    }

    pub fn to_rgb(&self) -> ImageRgb {
        let mut data = Vec::with_capacity(self.width * self.height * 3);
        for i in 0..self.width * self.height {
            for c in 0..3 {
                data.push((self.planes[c][i] * 255.0).round() as u8);
            }
        }
        ImageRgb::new(self.width, self.height, data).expect("valid size")
    }

    /// Little-endian bytes of all three planes; used for hashing and parity checks.
    pub fn to_le_bytes(&self) -> Vec<u8> {
        self.planes
            .iter()
            .flat_map(|p| p.iter().flat_map(|v| v.to_le_bytes()))
            .collect()
    }
}

pub const EQUALIZE_EPSILON: f32 = 1e-6;

/// Histogram-equalizes the intensity `(R+G+B)/3` over 256 bins and rescales
/// each pixel's RGB by the intensity ratio, preserving hue.
pub fn equalize_intensity(image: &ImagePlanar) -> ImagePlanar {
    let n = image.width * image.height;
    let [r, g, b] = &image.planes;
    let intensity: Vec<f32> = (0..n).map(|i| (r[i] + g[i] + b[i]) / 3.0).collect();
    let bins: Vec<usize> = intensity
        .iter()
        .map(|&v| ((v * 255.0).round() as usize).min(255))
        .collect();
    let mut hist = [0usize; 256];
    for &b in &bins {
        hist[b] += 1;
    }
    if hist.iter().filter(|&&c| c > 0).count() < 2 {
        return image.clone();
    }
    let mut cdf = [0usize; 256];
    let mut acc = 0;
    for (v, &h) in hist.iter().enumerate() {
        acc += h;
        cdf[v] = acc;
    }
    let cdf_min = cdf[hist.iter().position(|&c| c > 0).unwrap()];
    let denom = (n - cdf_min) as f64;
    let remap: Vec<f32> = cdf
        .iter()
        .map(|&c| (c.saturating_sub(cdf_min) as f64 / denom) as f32)
        .collect();

    let mut out = image.clone();
    for i in 0..n {
        let scale = (remap[bins[i]] + EQUALIZE_EPSILON) / (intensity[i] + EQUALIZE_EPSILON);
        for c in 0..3 {
            out.planes[c][i] = image.planes[c][i] * scale;
        }
    }
    out.clamp();
    out
}

/// Per-channel gray-world gains: global mean of the channel means over each channel's mean.
pub fn gray_world_scales(image: &ImagePlanar) -> Result<[f64; 3]> {
    let means = image.channel_means();
    if let Some(c) = means.iter().position(|&m| m <= 0.0) {
        return Err(Error::Degenerate(format!(
            "channel {c} has zero mean; gray-world balance is undefined"
        )));
    }
    let global = means.iter().sum::<f64>() / 3.0;
    Ok(means.map(|m| global / m))
}

pub fn gray_world_balance(image: &ImagePlanar) -> Result<ImagePlanar> {
    let scales = gray_world_scales(image)?;
    let mut out = image.clone();
    for (c, plane) in out.planes.iter_mut().enumerate() {
        for v in plane.iter_mut() {
            *v = (*v as f64 * scales[c]) as f32;
        }
    }
    out.clamp();
    Ok(out)
}

/// Bilinear resampling with half-pixel centers and edge clamping.
pub fn resize_bilinear(image: &ImagePlanar, target_w: usize, target_h: usize) -> Result<ImagePlanar> {
    if target_w == 0 || target_h == 0 {
        return Err(Error::InvalidArgument("resize target must be at least 1×1".into()));
    }
    if target_w == image.width && target_h == image.height {
        return Ok(image.clone());
    }
    let taps = |src: usize, dst: usize| -> Vec<(usize, usize, f32)> {
        let scale = src as f64 / dst as f64;
        (0..dst)
            .map(|i| {
                let s = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (src - 1) as f64);
                let i0 = s.floor() as usize;
                let i1 = (i0 + 1).min(src - 1);
                (i0, i1, (s - i0 as f64) as f32)
            })
            .collect()
    };
    let xs = taps(image.width, target_w);
    let ys = taps(image.height, target_h);
    let w = image.width;
    let planes = [0, 1, 2].map(|c| {
        let src = &image.planes[c];
        let mut dst = Vec::with_capacity(target_w * target_h);
        for &(y0, y1, fy) in &ys {
            for &(x0, x1, fx) in &xs {
                let top = src[y0 * w + x0] * (1.0 - fx) + src[y0 * w + x1] * fx;
                let bot = src[y1 * w + x0] * (1.0 - fx) + src[y1 * w + x1] * fx;
                dst.push(top * (1.0 - fy) + bot * fy);
            }
        }
        dst
    });
    ImagePlanar::new(target_w, target_h, planes)
}

pub const INPUT_MEAN: f32 = 0.5;
pub const INPUT_SCALE: f32 = 2.0;

/// Channel-major `3×H×W` tensor with values mapped `v ↦ (v − 0.5)·2`.
pub fn to_sample_tensor(image: &ImagePlanar) -> Tensor {
    let mut data = Vec::with_capacity(3 * image.width * image.height);
    for p in &image.planes {
        data.extend(p.iter().map(|&v| (v - INPUT_MEAN) * INPUT_SCALE));
    }
    Tensor::new(vec![3, image.height, image.width], data).expect("valid image")
}

/// `1×3×H×W` network input for a single image.
pub fn to_input_tensor(image: &ImagePlanar) -> Tensor {
    let t = to_sample_tensor(image);
    t.reshape(vec![1, 3, image.height, image.width]).expect("same length")
}

/// The full preprocessing chain shared by both pipeline stages:
/// equalize, gray-world balance, then resize to `size×size`.
pub fn preprocess(image: &ImagePlanar, size: usize) -> Result<ImagePlanar> {
    let eq = equalize_intensity(image);
    let balanced = gray_world_balance(&eq)?;
    resize_bilinear(&balanced, size, size)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gray(w: usize, h: usize, levels: &[f32]) -> ImagePlanar {
        ImagePlanar::new(w, h, [levels.to_vec(), levels.to_vec(), levels.to_vec()]).unwrap()
    }

    #[test]
    fn constant_image_is_unchanged_by_equalization() {
        let img = ImagePlanar::filled(5, 4, [0.3, 0.6, 0.2]);
        assert_eq!(equalize_intensity(&img), img);
    }

    #[test]
    fn extremal_halves_are_unchanged() {
        let img = gray(2, 2, &[0.0, 1.0, 0.0, 1.0]);
        let out = equalize_intensity(&img);
        assert_eq!(out, img);
    }

    #[test]
    fn four_pixel_cdf_table() {
        // Levels 52, 52, 154, 205: cdf = 2, 2, 3, 4 with cdf_min = 2, N = 4
        // → remapped levels 0, 0, 127.5, 255.
        let img = gray(2, 2, &[52.0 / 255.0, 52.0 / 255.0, 154.0 / 255.0, 205.0 / 255.0]);
        let out = equalize_intensity(&img);
        let expect = [0.0, 0.0, 0.5, 1.0];
        for (i, &e) in expect.iter().enumerate() {
            for c in 0..3 {
                assert!((out.plane(c)[i] - e).abs() < 1e-4, "px {i}: {}", out.plane(c)[i]);
            }
        }
    }

    #[test]
    fn gray_world_hand_example() {
        let img = ImagePlanar::filled(3, 3, [0.6, 0.3, 0.3]);
        let s = gray_world_scales(&img).unwrap();
        assert!((s[0] - 2.0 / 3.0).abs() < 1e-6);
        assert!((s[1] - 4.0 / 3.0).abs() < 1e-6);
        assert!((s[2] - 4.0 / 3.0).abs() < 1e-6);
        let out = gray_world_balance(&img).unwrap();
        for m in out.channel_means() {
            assert!((m - 0.4).abs() < 1e-6, "{m}");
        }
    }

    #[test]
    fn gray_world_neutral_and_degenerate() {
        let img = ImagePlanar::filled(2, 2, [0.5, 0.5, 0.5]);
        assert_eq!(gray_world_balance(&img).unwrap(), img);
        let red = ImagePlanar::filled(2, 2, [0.5, 0.0, 0.0]);
        assert!(matches!(gray_world_balance(&red), Err(Error::Degenerate(_))));
    }

    #[test]
    fn resize_identity_and_constant() {
        let img = gray(3, 2, &[0.1, 0.2, 0.3, 0.4, 0.5, 0.6]);
        assert_eq!(resize_bilinear(&img, 3, 2).unwrap(), img);
        let c = ImagePlanar::filled(2, 2, [0.7, 0.7, 0.7]);
        let r = resize_bilinear(&c, 1, 1).unwrap();
        assert!((r.get(0, 0, 0) - 0.7).abs() < 1e-7);
    }

    #[test]
    fn resize_row_half_pixel_convention() {
        let img = gray(2, 1, &[0.0, 1.0]);
        let r = resize_bilinear(&img, 4, 1).unwrap();
        let expect = [0.0, 0.25, 0.75, 1.0];
        for (x, e) in expect.iter().enumerate() {
            assert!((r.get(0, x, 0) - e).abs() < 1e-7);
        }
    }

    #[test]
    fn tensor_mapping_and_layout() {
        let half = ImagePlanar::filled(2, 2, [0.5; 3]);
        assert!(to_input_tensor(&half).data().iter().all(|&v| v == 0.0));

        let mut img = ImagePlanar::filled(3, 2, [0.5; 3]);
        img.set_pixel(1, 0, [1.0, 0.0, 0.0]);
        let t = to_input_tensor(&img);
        assert_eq!(t.shape(), &[1, 3, 2, 3]);
        let at = |c: usize, y: usize, x: usize| t.data()[(c * 2 + y) * 3 + x];
        assert_eq!([at(0, 0, 1), at(1, 0, 1), at(2, 0, 1)], [1.0, -1.0, -1.0]);

        let planes = [0, 1, 2].map(|c| (0..6).map(|i| (c * 6 + i) as f32 / 20.0).collect());
        let img = ImagePlanar::new(3, 2, planes).unwrap();
        let t = to_input_tensor(&img);
        for c in 0..3 {
            for y in 0..2 {
                for x in 0..3 {
                    assert_eq!(t.data()[(c * 2 + y) * 3 + x], (img.get(c, x, y) - 0.5) * 2.0);
                }
            }
        }
    }

    #[test]
    fn ppm_roundtrip() {
        let rgb = ImageRgb::new(2, 1, vec![1, 2, 3, 250, 251, 252]).unwrap();
        let mut buf = Vec::new();
        rgb.write_ppm(&mut buf).unwrap();
        assert!(buf.starts_with(b"P6\n2 1\n255\n"));
        assert_eq!(ImageRgb::read_ppm(buf.as_slice()).unwrap(), rgb);
        let with_comment = b"P6\n# note\n1 1\n255\n\x01\x02\x03";
        assert_eq!(ImageRgb::read_ppm(&with_comment[..]).unwrap().pixel(0, 0), [1, 2, 3]);
        assert!(ImageRgb::read_ppm(&b"P3\n1 1\n255\n1 2 3"[..]).is_err());
    }

    #[test]
    fn zero_area_rejected() {
        assert!(ImagePlanar::new(0, 3, [vec![], vec![], vec![]]).is_err());
    }
}
