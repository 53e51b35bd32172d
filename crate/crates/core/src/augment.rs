//! Seeded geometric augmentation: reflections, rotation, per-axis scaling and
//! translation, composed into a single affine warp about the image center.
//! No shear and no photometric changes are ever produced.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::imaging::ImagePlanar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub const fn point(v: f64) -> Self {
        Self { lo: v, hi: v }
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }

    fn sample(&self, rng: &mut impl Rng) -> f64 {
        if self.lo == self.hi {
            // Keep the stream aligned with the non-degenerate case.
            rng.gen::<f64>();
            self.lo
        } else {
            rng.gen_range(self.lo..=self.hi)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentConfig {
    pub flip_h_enabled: bool,
    pub flip_v_enabled: bool,
    pub rotation_deg: Interval,
    pub scale: Interval,
    pub translate_px: Interval,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            flip_h_enabled: true,
            flip_v_enabled: true,
            rotation_deg: Interval::new(-45.0, 45.0),
            scale: Interval::new(0.75, 1.25),
            translate_px: Interval::new(-10.0, 10.0),
        }
    }
}

impl AugmentConfig {
    /// Flips disabled and every interval collapsed to its neutral point.
    pub fn identity() -> Self {
        Self {
            flip_h_enabled: false,
            flip_v_enabled: false,
            rotation_deg: Interval::point(0.0),
            scale: Interval::point(1.0),
            translate_px: Interval::point(0.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, iv) in [
            ("rotation_deg", self.rotation_deg),
            ("scale", self.scale),
            ("translate_px", self.translate_px),
        ] {
            if !(iv.lo.is_finite() && iv.hi.is_finite() && iv.lo <= iv.hi) {
                return Err(Error::InvalidArgument(format!(
                    "{name} interval [{}, {}] is not well-ordered",
                    iv.lo, iv.hi
                )));
            }
        }
        if self.scale.lo <= 0.0 {
            return Err(Error::InvalidArgument("scale must be positive".into()));
        }
        Ok(())
    }

    pub fn admits(&self, p: &AugmentParams) -> bool {
        (self.flip_h_enabled || !p.flip_h)
            && (self.flip_v_enabled || !p.flip_v)
            && self.rotation_deg.contains(p.angle_deg)
            && self.scale.contains(p.scale_x)
            && self.scale.contains(p.scale_y)
            && self.translate_px.contains(p.dx_px)
            && self.translate_px.contains(p.dy_px)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentParams {
    pub flip_h: bool,
    pub flip_v: bool,
    pub angle_deg: f64,
    pub scale_x: f64,
    pub scale_y: f64,
    pub dx_px: f64,
    pub dy_px: f64,
}

impl AugmentParams {
    pub const IDENTITY: Self = Self {
        flip_h: false,
        flip_v: false,
        angle_deg: 0.0,
        scale_x: 1.0,
        scale_y: 1.0,
        dx_px: 0.0,
        dy_px: 0.0,
    };

    pub fn is_identity(&self) -> bool {
        *self == Self::IDENTITY
    }

    /// Forward linear part `S·R·F` as a row-major 2×2 matrix acting on
    /// center-relative `(x, y)` with `y` pointing down.
    pub fn linear_matrix(&self) -> [[f64; 2]; 2] {
        let fx = if self.flip_h { -1.0 } else { 1.0 };
        let fy = if self.flip_v { -1.0 } else { 1.0 };
        let (s, c) = self.angle_deg.to_radians().sin_cos();
        // Positive angles turn content counter-clockwise on screen.
        let r = [[c, s], [-s, c]];
        [
            [self.scale_x * r[0][0] * fx, self.scale_x * r[0][1] * fy],
            [self.scale_y * r[1][0] * fx, self.scale_y * r[1][1] * fy],
        ]
    }
}

/// Draws flips (probability ½ each when enabled), then angle, x/y scale and
/// x/y translation uniformly from their intervals.
pub fn sample_params(config: &AugmentConfig, seed: u64) -> AugmentParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let flip_h = rng.gen_bool(0.5) && config.flip_h_enabled;
    let flip_v = rng.gen_bool(0.5) && config.flip_v_enabled;
    AugmentParams {
        flip_h,
        flip_v,
        angle_deg: config.rotation_deg.sample(&mut rng),
        scale_x: config.scale.sample(&mut rng),
        scale_y: config.scale.sample(&mut rng),
        dx_px: config.translate_px.sample(&mut rng),
        dy_px: config.translate_px.sample(&mut rng),
    }
}

/// Warps `image` by inverse mapping each output pixel through the composed
/// transform; samples bilinearly with edge replication.
pub fn apply_affine(image: &ImagePlanar, params: &AugmentParams) -> ImagePlanar {
    if params.is_identity() {
        return image.clone();
    }
    let (w, h) = (image.width(), image.height());
    let (cx, cy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
    let m = params.linear_matrix();
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let inv = [
        [m[1][1] / det, -m[0][1] / det],
        [-m[1][0] / det, m[0][0] / det],
    ];
    let clamp = |v: f64, n: usize| v.clamp(0.0, (n - 1) as f64);
    let planes = [0, 1, 2].map(|c| {
        let src = image.plane(c);
        let mut dst = Vec::with_capacity(w * h);
        for y in 0..h {
            for x in 0..w {
                let ox = x as f64 - cx - params.dx_px;
                let oy = y as f64 - cy - params.dy_px;
                let sx = clamp(inv[0][0] * ox + inv[0][1] * oy + cx, w);
                let sy = clamp(inv[1][0] * ox + inv[1][1] * oy + cy, h);
                let (x0, y0) = (sx.floor() as usize, sy.floor() as usize);
                let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
                let (fx, fy) = ((sx - x0 as f64) as f32, (sy - y0 as f64) as f32);
                let top = src[y0 * w + x0] * (1.0 - fx) + src[y0 * w + x1] * fx;
                let bot = src[y1 * w + x0] * (1.0 - fx) + src[y1 * w + x1] * fx;
                dst.push(top * (1.0 - fy) + bot * fy);
            }
        }
        dst
    });
    ImagePlanar::new(w, h, planes).expect("same size")
}

/// Seed for augmented copy `copy` of item `index`, independent of processing order.
pub fn item_seed(master_seed: u64, index: usize, copy: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index as u64);
    rng.set_word_pos(copy as u128 * 2);
    rng.next_u64()
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedSample {
    pub source_index: usize,
    /// `None` for a retained original.
    pub params: Option<AugmentParams>,
    pub image: ImagePlanar,
}

/// Produces `expansion` augmented copies per item; with `expansion > 1` the
/// original is kept in front of its copies. Items are processed on the
/// current rayon pool, results are in item order.
pub fn augment_batch(
    items: &[ImagePlanar],
    config: &AugmentConfig,
    master_seed: u64,
    expansion: usize,
) -> Result<Vec<AugmentedSample>> {
    if items.is_empty() {
        return Err(Error::Data("augment_batch needs at least one item".into()));
    }
    if expansion == 0 {
        return Err(Error::InvalidArgument("expansion factor must be >= 1".into()));
    }
    config.validate()?;
    let per_item: Vec<Vec<AugmentedSample>> = items
        .par_iter()
        .enumerate()
        .map(|(index, img)| {
            let mut out = Vec::with_capacity(expansion + 1);
            if expansion > 1 {
                out.push(AugmentedSample {
                    source_index: index,
                    params: None,
                    image: img.clone(),
                });
            }
            for copy in 0..expansion {
                let params = sample_params(config, item_seed(master_seed, index, copy));
                out.push(AugmentedSample {
                    source_index: index,
                    params: Some(params),
                    image: apply_affine(img, &params),
                });
            }
            out
        })
        .collect();
    Ok(per_item.into_iter().flatten().collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(w: usize, h: usize) -> ImagePlanar {
        let planes = [0, 1, 2].map(|c| {
            (0..w * h)
                .map(|i| ((i * 7 + c * 13) % 97) as f32 / 96.0)
                .collect()
        });
        ImagePlanar::new(w, h, planes).unwrap()
    }

    #[test]
    fn collapsed_config_gives_identity() {
        for seed in 0..20 {
            assert!(sample_params(&AugmentConfig::identity(), seed).is_identity());
        }
    }

    #[test]
    fn sampling_is_seeded() {
        let c = AugmentConfig::default();
        assert_eq!(sample_params(&c, 42), sample_params(&c, 42));
        assert_ne!(sample_params(&c, 42), sample_params(&c, 43));
    }

    #[test]
    fn identity_warp_is_exact() {
        let img = ramp(7, 5);
        assert_eq!(apply_affine(&img, &AugmentParams::IDENTITY), img);
    }

    #[test]
    fn flips_are_involutions() {
        let img = ramp(6, 5);
        for (fh, fv) in [(true, false), (false, true), (true, true)] {
            let p = AugmentParams {
                flip_h: fh,
                flip_v: fv,
                ..AugmentParams::IDENTITY
            };
            let once = apply_affine(&img, &p);
            assert_ne!(once, img);
            assert_eq!(apply_affine(&once, &p), img);
        }
        let p = AugmentParams {
            flip_h: true,
            ..AugmentParams::IDENTITY
        };
        let f = apply_affine(&img, &p);
        assert_eq!(f.get(0, 0, 2), img.get(0, 5, 2));
    }

    #[test]
    fn translation_moves_content_right() {
        let mut img = ImagePlanar::filled(9, 9, [0.0; 3]);
        img.set_pixel(4, 4, [1.0; 3]);
        let p = AugmentParams {
            dx_px: 2.0,
            ..AugmentParams::IDENTITY
        };
        let out = apply_affine(&img, &p);
        assert_eq!(out.get(0, 6, 4), 1.0);
        assert_eq!(out.get(0, 4, 4), 0.0);
    }

    #[test]
    fn no_shear_in_matrix() {
        let c = AugmentConfig::default();
        for seed in 0..200 {
            let p = sample_params(&c, seed);
            let m = p.linear_matrix();
            // Rows of S·R·F are orthogonal: no shear component.
            let dot = m[0][0] * m[1][0] + m[0][1] * m[1][1];
            assert!(dot.abs() < 1e-12);
            assert!(c.admits(&p));
        }
    }

    #[test]
    fn expansion_counts() {
        let items: Vec<ImagePlanar> = (0..10).map(|_| ramp(4, 4)).collect();
        let out = augment_batch(&items, &AugmentConfig::default(), 3, 3).unwrap();
        assert_eq!(out.len(), 40);
        assert_eq!(out.iter().filter(|s| s.params.is_none()).count(), 10);
        let single = augment_batch(&items, &AugmentConfig::identity(), 3, 1).unwrap();
        assert_eq!(single.len(), 10);
        assert!(single.iter().zip(&items).all(|(s, i)| &s.image == i));
        assert!(augment_batch(&[], &AugmentConfig::default(), 0, 1).is_err());
    }

    #[test]
    fn item_seeds_differ() {
        assert_ne!(item_seed(1, 0, 0), item_seed(1, 1, 0));
        assert_ne!(item_seed(1, 0, 0), item_seed(1, 0, 1));
        assert_eq!(item_seed(1, 5, 2), item_seed(1, 5, 2));
    }
}
