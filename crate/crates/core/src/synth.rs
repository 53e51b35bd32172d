//! Procedural leaf images and blur-graded texture sets for tests and demos.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::classifier::LabeledImage;
use crate::error::{Error, Result};
use crate::imaging::ImagePlanar;
use crate::quality::QualitySample;
use crate::registry::LabelRegistry;

pub const LEAF_CLASSES: [&str; 4] = ["healthy", "leaf_spot", "chlorosis", "ring_rot"];

pub fn leaf_registry() -> LabelRegistry {
    LabelRegistry::new(
        "synthetic-leaves-4",
        LEAF_CLASSES.iter().map(|s| s.to_string()).collect(),
    )
    .expect("static names are valid")
}

fn blend(dst: [f32; 3], src: [f32; 3], alpha: f32) -> [f32; 3] {
    [0, 1, 2].map(|c| dst[c] * (1.0 - alpha) + src[c] * alpha)
}

fn jitter(rng: &mut ChaCha8Rng, rgb: [f32; 3], amount: f32) -> [f32; 3] {
    rgb.map(|v| (v + rng.gen_range(-amount..=amount)).clamp(0.0, 1.0))
}

struct Spot {
    x: f32,
    y: f32,
    r: f32,
}

/// One synthetic leaf of class `label` (index into [`LEAF_CLASSES`]).
pub fn leaf_image(label: usize, size: usize, seed: u64) -> Result<ImagePlanar> {
    if label >= LEAF_CLASSES.len() {
        return Err(Error::Index(format!("leaf class {label}")));
    }
    if size < 16 {
        return Err(Error::InvalidArgument(format!("leaf image size {size} below 16")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = size as f32;
    let cx = s / 2.0 + rng.gen_range(-0.05..0.05) * s;
    let cy = s / 2.0 + rng.gen_range(-0.05..0.05) * s;
    let a = s * rng.gen_range(0.44..0.48);
    let b = s * rng.gen_range(0.3..0.36);
    let theta: f32 = rng.gen_range(0.0..std::f32::consts::PI);
    let (sin, cos) = theta.sin_cos();
    let background = jitter(&mut rng, [0.3, 0.3, 0.28], 0.04);
    let leaf = jitter(&mut rng, [0.24, 0.52, 0.2], 0.04);

    // Lesions in leaf-local coordinates (unit ellipse).
    let (count, radius, color, ring) = match label {
        0 => (0, (0.0, 0.0), [0.0; 3], false),
        1 => (rng.gen_range(6..10), (0.045, 0.06), [0.32, 0.18, 0.08], false),
        2 => (rng.gen_range(2..4), (0.12, 0.16), [0.86, 0.8, 0.22], false),
        _ => (rng.gen_range(3..5), (0.09, 0.11), [0.7, 0.6, 0.4], true),
    };
    let mut spots = Vec::with_capacity(count);
    while spots.len() < count {
        let (x, y) = (rng.gen_range(-0.75f32..0.75), rng.gen_range(-0.7f32..0.7));
        if x * x + y * y < 0.6 {
            spots.push(Spot {
                x: x * a,
                y: y * b,
                r: rng.gen_range(radius.0..radius.1) * s,
            });
        }
    }

    // Flat fills only: equalization stretches any shading or pixel noise
    // into high-contrast structure.
    let mut img = ImagePlanar::filled(size, size, background);
    for py in 0..size {
        for px in 0..size {
            let dx = px as f32 + 0.5 - cx;
            let dy = py as f32 + 0.5 - cy;
            let u = dx * cos + dy * sin;
            let v = -dx * sin + dy * cos;
            let e = (u / a).powi(2) + (v / b).powi(2);
            let mut rgb = background;
            if e <= 1.0 {
                rgb = leaf;
                if v.abs() < 0.6 && u.abs() < a * 0.9 {
                    rgb = blend(rgb, [0.5, 0.7, 0.35], 0.5);
                }
                for sp in &spots {
                    let d = ((u - sp.x).powi(2) + (v - sp.y).powi(2)).sqrt();
                    if ring {
                        if d < sp.r {
                            rgb = color;
                        } else if d < sp.r + 2.0 {
                            rgb = [0.14, 0.08, 0.04];
                        }
                    } else if d < sp.r {
                        let alpha = if label == 2 { (1.0 - d / sp.r).sqrt() } else { 1.0 };
                        rgb = blend(rgb, color, alpha);
                    }
                }
            } else if e <= 1.08 {
                rgb = blend(rgb, leaf, 0.5);
            }
            img.set_pixel(px, py, rgb.map(|c| c.clamp(0.0, 1.0)));
        }
    }
    Ok(img)
}

/// `per_class` leaves of each of the four classes, interleaved by class.
pub fn leaf_dataset(per_class: usize, size: usize, seed: u64) -> Result<Vec<LabeledImage>> {
    let mut out = Vec::with_capacity(per_class * LEAF_CLASSES.len());
    for i in 0..per_class {
        for label in 0..LEAF_CLASSES.len() {
            let item = (i * LEAF_CLASSES.len() + label) as u64;
            let image = leaf_image(label, size, seed.wrapping_mul(0x9E37_79B9).wrapping_add(item))?;
            out.push(LabeledImage { image, label });
        }
    }
    Ok(out)
}

/// Separable Gaussian blur with edge replication; `sigma == 0` copies the image.
pub fn gaussian_blur(image: &ImagePlanar, sigma: f32) -> Result<ImagePlanar> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidArgument(format!("blur sigma {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(image.clone());
    }
    let radius = (3.0 * sigma).ceil() as isize;
    let mut kernel: Vec<f32> = (-radius..=radius)
        .map(|i| (-(i * i) as f32 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f32 = kernel.iter().sum();
    kernel.iter_mut().for_each(|k| *k /= total);
    let (w, h) = (image.width(), image.height());
    let clampi = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
    let planes = [0, 1, 2].map(|c| {
        let src = image.plane(c);
        let mut tmp = vec![0.0f32; w * h];
        for y in 0..h {
            for x in 0..w {
                tmp[y * w + x] = kernel
                    .iter()
                    .enumerate()
                    .map(|(j, k)| k * src[y * w + clampi(x as isize + j as isize - radius, w)])
                    .sum();
            }
        }
        let mut out = vec![0.0f32; w * h];
        for y in 0..h {
            for x in 0..w {
                out[y * w + x] = kernel
                    .iter()
                    .enumerate()
                    .map(|(j, k)| k * tmp[clampi(y as isize + j as isize - radius, h) * w + x])
                    .sum();
            }
        }
        out
    });
    ImagePlanar::new(w, h, planes)
}

/// Random shapes over a gradient with fine grain: plenty of edges for blur to remove.
pub fn texture_image(size: usize, seed: u64) -> ImagePlanar {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c0: [f32; 3] = [rng.gen(), rng.gen(), rng.gen()];
    let c1: [f32; 3] = [rng.gen(), rng.gen(), rng.gen()];
    let mut img = ImagePlanar::filled(size, size, c0);
    for y in 0..size {
        for x in 0..size {
            let t = (x + y) as f32 / (2 * size) as f32;
            img.set_pixel(x, y, blend(c0, c1, t));
        }
    }
    let s = size as f32;
    for _ in 0..rng.gen_range(12..20) {
        let color: [f32; 3] = [rng.gen(), rng.gen(), rng.gen()];
        let (x0, y0) = (rng.gen_range(0.0..s), rng.gen_range(0.0..s));
        let r = rng.gen_range(0.04..0.18) * s;
        let square = rng.gen_bool(0.5);
        for y in 0..size {
            for x in 0..size {
                let (dx, dy) = ((x as f32 - x0).abs(), (y as f32 - y0).abs());
                let inside = if square { dx.max(dy) < r } else { dx * dx + dy * dy < r * r };
                if inside {
                    img.set_pixel(x, y, color);
                }
            }
        }
    }
    for y in 0..size {
        for x in 0..size {
            let p = img.pixel(x, y);
            let n = rng.gen_range(-0.06f32..0.06);
            img.set_pixel(x, y, p.map(|v| (v + n).clamp(0.0, 1.0)));
        }
    }
    img
}

pub const BLUR_LEVELS: [f32; 5] = [0.0, 1.0, 2.0, 3.0, 4.0];

/// Textures blurred at each level in [`BLUR_LEVELS`]; MOS falls linearly
/// from 1 (sharp) to 0 (σ = 4).
pub fn blur_dataset(per_level: usize, size: usize, seed: u64) -> Result<Vec<QualitySample>> {
    let mut out = Vec::with_capacity(per_level * BLUR_LEVELS.len());
    for i in 0..per_level {
        for (lvl, &sigma) in BLUR_LEVELS.iter().enumerate() {
            let item = (i * BLUR_LEVELS.len() + lvl) as u64;
            let base = texture_image(size, seed.wrapping_mul(0x2545_F491).wrapping_add(item));
            out.push(QualitySample {
                image: gaussian_blur(&base, sigma)?,
                mos: Some(1.0 - sigma / 4.0),
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blur_preserves_constant_image() {
        let img = ImagePlanar::filled(9, 7, [0.2, 0.5, 0.9]);
        let b = gaussian_blur(&img, 1.5).unwrap();
        for c in 0..3 {
            for (x, y) in img.plane(c).iter().zip(b.plane(c)) {
                assert!((x - y).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn blur_reduces_variation() {
        let img = texture_image(32, 4);
        let tv = |im: &ImagePlanar| -> f32 {
            let p = im.plane(1);
            p.windows(2).map(|w| (w[1] - w[0]).abs()).sum()
        };
        let b = gaussian_blur(&img, 2.0).unwrap();
        assert!(tv(&b) < tv(&img) * 0.5);
    }

    #[test]
    fn leaf_dataset_is_deterministic() {
        let a = leaf_dataset(2, 32, 9).unwrap();
        let b = leaf_dataset(2, 32, 9).unwrap();
        assert_eq!(a.len(), 8);
        assert!(a.iter().zip(&b).all(|(x, y)| x.image == y.image && x.label == y.label));
        assert_eq!(a.iter().map(|s| s.label).collect::<Vec<_>>(), [0, 1, 2, 3, 0, 1, 2, 3]);
    }

    #[test]
    fn blur_mos_levels() {
        let d = blur_dataset(1, 16, 0).unwrap();
        let mos: Vec<f32> = d.iter().map(|s| s.mos.unwrap()).collect();
        assert_eq!(mos, [1.0, 0.75, 0.5, 0.25, 0.0]);
    }
}
