//! Stochastic training-time augmentation: a single affine transform combining
//! scaling, rotation, shifting and horizontal flipping, gated by one apply
//! probability, plus per-image intensity centering.

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentConfig {
    /// Chance a sample is transformed at all.
    pub apply_probability: f64,
    /// Rotation drawn from U(-rotation_deg, rotation_deg).
    pub rotation_deg: f64,
    /// Shift per axis drawn from U(-shift_fraction, shift_fraction) of the side length.
    pub shift_fraction: f64,
    /// Isotropic scale drawn from U(scale_range.0, scale_range.1).
    pub scale_range: (f64, f64),
    /// Enables the coin-flip horizontal mirror.
    pub hflip: bool,
    pub seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            apply_probability: 0.8,
            rotation_deg: 30.0,
            shift_fraction: 0.2,
            scale_range: (0.8, 1.2),
            hflip: true,
            seed: 0,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.apply_probability) {
            return Err(Error::validation(format!(
                "apply_probability must be in [0, 1], got {}",
                self.apply_probability
            )));
        }
        if self.scale_range.0 > self.scale_range.1 || self.scale_range.0 <= 0.0 {
            return Err(Error::validation(format!(
                "scale_range must satisfy 0 < low <= high, got {:?}",
                self.scale_range
            )));
        }
        if self.rotation_deg < 0.0 || self.shift_fraction < 0.0 {
            return Err(Error::validation("rotation_deg and shift_fraction must be >= 0"));
        }
        Ok(())
    }

    /// Config that passes every sample through untouched.
    pub fn disabled() -> Self {
        AugmentConfig { apply_probability: 0.0, ..Default::default() }
    }
}

/// Forward affine map `output = A * input + b` acting on (row, col) points.
#[derive(Debug, Clone, Copy)]
struct Affine {
    a: [[f64; 2]; 2],
    b: [f64; 2],
}

impl Affine {
    fn inverse(&self) -> Affine {
        let det = self.a[0][0] * self.a[1][1] - self.a[0][1] * self.a[1][0];
        let inv = [
            [self.a[1][1] / det, -self.a[0][1] / det],
            [-self.a[1][0] / det, self.a[0][0] / det],
        ];
        let bx = -(inv[0][0] * self.b[0] + inv[0][1] * self.b[1]);
        let by = -(inv[1][0] * self.b[0] + inv[1][1] * self.b[1]);
        Affine { a: inv, b: [bx, by] }
    }

    fn apply(&self, y: f64, x: f64) -> (f64, f64) {
        (
            self.a[0][0] * y + self.a[0][1] * x + self.b[0],
            self.a[1][0] * y + self.a[1][1] * x + self.b[1],
        )
    }
}

/// Builds the forward transform about the image center:
/// flip, then scale, then rotate, then shift.
fn build_affine(
    shape: (usize, usize),
    rot_deg: f64,
    shift: (f64, f64),
    scale: f64,
    flip: bool,
) -> Affine {
    let (h, w) = shape;
    let cy = (h as f64 - 1.0) / 2.0;
    let cx = (w as f64 - 1.0) / 2.0;
    let (sin, cos) = rot_deg.to_radians().sin_cos();
    let fx = if flip { -1.0 } else { 1.0 };
    // rotate(scale(flip(p - c))) + c + t
    let a = [[cos * scale, -sin * scale * fx], [sin * scale, cos * scale * fx]];
    let b = [
        cy - a[0][0] * cy - a[0][1] * cx + shift.0 * h as f64,
        cx - a[1][0] * cy - a[1][1] * cx + shift.1 * w as f64,
    ];
    Affine { a, b }
}

fn warp_bilinear(src: &Array2<f32>, inv: &Affine) -> Array2<f32> {
    let (h, w) = src.dim();
    let mut out = Array2::<f32>::zeros((h, w));
    for oy in 0..h {
        for ox in 0..w {
            let (sy, sx) = inv.apply(oy as f64, ox as f64);
            let y0 = sy.floor();
            let x0 = sx.floor();
            let wy = (sy - y0) as f32;
            let wx = (sx - x0) as f32;
            let mut acc = 0.0f32;
            for (dy, vy) in [(0isize, 1.0 - wy), (1, wy)] {
                for (dx, vx) in [(0isize, 1.0 - wx), (1, wx)] {
                    let yy = y0 as isize + dy;
                    let xx = x0 as isize + dx;
                    let val = if yy >= 0 && (yy as usize) < h && xx >= 0 && (xx as usize) < w {
                        src[[yy as usize, xx as usize]]
                    } else {
                        0.0
                    };
                    acc += val * vy * vx;
                }
            }
            out[[oy, ox]] = acc;
        }
    }
    out
}

fn warp_nearest(src: &Array2<u8>, inv: &Affine) -> Array2<u8> {
    let (h, w) = src.dim();
    let mut out = Array2::<u8>::zeros((h, w));
    for oy in 0..h {
        for ox in 0..w {
            let (sy, sx) = inv.apply(oy as f64, ox as f64);
            let yy = sy.round() as isize;
            let xx = sx.round() as isize;
            out[[oy, ox]] = if yy >= 0 && (yy as usize) < h && xx >= 0 && (xx as usize) < w {
                src[[yy as usize, xx as usize]]
            } else {
                0
            };
        }
    }
    out
}

/// With probability `apply_probability` draws rotation, per-axis shift,
/// scale and flip, composes them into one affine transform and applies it to
/// both arrays (image bilinearly, label map nearest-neighbor, out-of-frame
/// filled with 0). Otherwise returns the inputs unchanged. Deterministic
/// given the rng state.
pub fn augment_pair(
    image: &Array2<f32>,
    label_map: &Array2<u8>,
    cfg: &AugmentConfig,
    rng: &mut rand::rngs::StdRng,
) -> Result<(Array2<f32>, Array2<u8>)> {
    if image.dim() != label_map.dim() {
        return Err(Error::validation(format!(
            "image {:?} and label map {:?} shapes differ",
            image.dim(),
            label_map.dim()
        )));
    }
    cfg.validate()?;
    if cfg.apply_probability == 0.0 || !rng.gen_bool(cfg.apply_probability) {
        return Ok((image.clone(), label_map.clone()));
    }
    let rot = rng.gen_range(-cfg.rotation_deg..=cfg.rotation_deg);
    let shift_y = rng.gen_range(-cfg.shift_fraction..=cfg.shift_fraction);
    let shift_x = rng.gen_range(-cfg.shift_fraction..=cfg.shift_fraction);
    let scale = rng.gen_range(cfg.scale_range.0..=cfg.scale_range.1);
    let flip = cfg.hflip && rng.gen_bool(0.5);

    let affine = build_affine(image.dim(), rot, (shift_y, shift_x), scale, flip);
    let inv = affine.inverse();
    Ok((warp_bilinear(image, &inv), warp_nearest(label_map, &inv)))
}

/// Subtracts the per-image mean so the output has zero mean. The mean is
/// accumulated at 64-bit so the residual stays below 1e-6 on large images.
pub fn center_intensity(image: &Array2<f32>) -> Array2<f32> {
    let mean = (image.iter().map(|&v| v as f64).sum::<f64>() / image.len() as f64) as f32;
    image.mapv(|v| v - mean)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthgen::{self};
    use rand::SeedableRng;

    fn rng(seed: u64) -> rand::rngs::StdRng {
        rand::rngs::StdRng::seed_from_u64(seed)
    }

    fn phantom() -> (Array2<f32>, Array2<u8>) {
        synthgen::render_view(crate::dataset::View::FourChamber, 128, (0.0, 0.0, 0.0), None)
    }

    #[test]
    fn zero_probability_is_identity() {
        let (img, lab) = phantom();
        let cfg = AugmentConfig::disabled();
        let (i2, l2) = augment_pair(&img, &lab, &cfg, &mut rng(0)).unwrap();
        assert_eq!(i2, img);
        assert_eq!(l2, lab);
    }

    #[test]
    fn hflip_is_an_involution() {
        // force a pure flip: rotation/shift/scale ranges collapsed
        let cfg = AugmentConfig {
            apply_probability: 1.0,
            rotation_deg: 0.0,
            shift_fraction: 0.0,
            scale_range: (1.0, 1.0),
            hflip: true,
            seed: 0,
        };
        let (img, lab) = phantom();
        // find a seed whose coin flip fires
        let mut seed = 0;
        loop {
            let mut r = rng(seed);
            let (_, l1) = augment_pair(&img, &lab, &cfg, &mut r).unwrap();
            if l1 != lab {
                let mut r2 = rng(seed);
                let (i2, l2) = augment_pair(&img, &lab, &cfg, &mut r2).unwrap();
                // replay determinism while we're here
                assert_eq!(l1, l2);
                let mut r3 = rng(seed);
                let (i3, l3) = augment_pair(&i2, &l2, &cfg, &mut r3).unwrap();
                assert_eq!(l3, lab, "flip twice must restore the label map");
                let max_err = (&i3 - &img).iter().fold(0.0f32, |m, v| m.max(v.abs()));
                assert!(max_err < 1e-5, "flip twice must restore the image, err {}", max_err);
                break;
            }
            seed += 1;
            assert!(seed < 64, "no flip drawn in 64 seeds");
        }
    }

    #[test]
    fn label_value_set_never_grows() {
        let (img, lab) = phantom();
        let cfg = AugmentConfig { apply_probability: 1.0, ..Default::default() };
        let before: std::collections::BTreeSet<u8> = lab.iter().copied().collect();
        for seed in 0..12 {
            let (_, l2) = augment_pair(&img, &lab, &cfg, &mut rng(seed)).unwrap();
            for &v in l2.iter() {
                assert!(v == 0 || before.contains(&v), "new label value {}", v);
            }
        }
    }

    #[test]
    fn rotation_roundtrip_keeps_interior_counts() {
        // rotate +30 then -30 via two forced transforms; interior structure
        // pixel counts should change by less than 5%
        let (img, lab) = phantom();
        let mk = |deg: f64| AugmentConfig {
            apply_probability: 1.0,
            rotation_deg: deg,
            shift_fraction: 0.0,
            scale_range: (1.0, 1.0),
            hflip: false,
            seed: 0,
        };
        // rotation_deg bounds the uniform draw; collapse it by sampling until
        // the draw is within 0.5 degree of the bound
        let force_rot = |src_img: &Array2<f32>, src_lab: &Array2<u8>, deg: f64| {
            let cfg = mk(deg.abs());
            for seed in 0..4000u64 {
                let mut r = rng(seed);
                if !r.gen_bool(cfg.apply_probability) {
                    continue;
                }
                let rot = r.gen_range(-cfg.rotation_deg..=cfg.rotation_deg);
                if (rot - deg).abs() < 0.5 {
                    let mut r2 = rng(seed);
                    return augment_pair(src_img, src_lab, &cfg, &mut r2).unwrap();
                }
            }
            panic!("no seed produced rotation near {}", deg);
        };
        let (i1, l1) = force_rot(&img, &lab, 30.0);
        let (_, l2) = force_rot(&i1, &l1, -30.0);
        let count = |m: &Array2<u8>, l: u8| m.iter().filter(|&&v| v == l).count() as f64;
        for label in [1u8, 2, 3, 4] {
            let c0 = count(&lab, label);
            let c2 = count(&l2, label);
            assert!(
                (c2 - c0).abs() / c0 < 0.05,
                "label {} count drifted {} -> {}",
                label,
                c0,
                c2
            );
        }
    }

    #[test]
    fn image_and_labels_receive_identical_transform() {
        // warp a label-region indicator through the image path and compare
        // with the warped label region
        let (img, lab) = phantom();
        let cfg = AugmentConfig { apply_probability: 1.0, ..Default::default() };
        for seed in [3u64, 5, 8] {
            let (_, l2) = augment_pair(&img, &lab, &cfg, &mut rng(seed)).unwrap();
            let indicator = lab.mapv(|v| if v == 1 { 1.0f32 } else { 0.0 });
            let (ind2, _) = augment_pair(&indicator, &lab, &cfg, &mut rng(seed)).unwrap();
            let warped_mask: Vec<bool> = ind2.iter().map(|&v| v > 0.5).collect();
            let label_mask: Vec<bool> = l2.iter().map(|&v| v == 1).collect();
            let inter = warped_mask
                .iter()
                .zip(&label_mask)
                .filter(|(a, b)| **a && **b)
                .count() as f64;
            let union = warped_mask
                .iter()
                .zip(&label_mask)
                .filter(|(a, b)| **a || **b)
                .count() as f64;
            assert!(inter / union >= 0.99, "seed {}: overlap {:.4}", seed, inter / union);
        }
    }

    #[test]
    fn center_intensity_constant_becomes_zero() {
        let img = Array2::<f32>::from_elem((8, 8), 5.0);
        let out = center_intensity(&img);
        assert!(out.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn center_intensity_matches_direct_recomputation() {
        let (img, _) = phantom();
        let out = center_intensity(&img);
        let mean = out.sum() / out.len() as f32;
        assert!(mean.abs() < 1e-6);
        let src_mean = img.sum() / img.len() as f32;
        for (o, i) in out.iter().zip(img.iter()) {
            assert!((o - (i - src_mean)).abs() < 1e-6);
        }
    }

    #[test]
    fn deterministic_given_rng_state() {
        let (img, lab) = phantom();
        let cfg = AugmentConfig { apply_probability: 0.8, ..Default::default() };
        for seed in 0..8 {
            let a = augment_pair(&img, &lab, &cfg, &mut rng(seed)).unwrap();
            let b = augment_pair(&img, &lab, &cfg, &mut rng(seed)).unwrap();
            assert_eq!(a.0, b.0);
            assert_eq!(a.1, b.1);
        }
    }

    #[test]
    fn shape_mismatch_rejected() {
        let img = Array2::<f32>::zeros((8, 8));
        let lab = Array2::<u8>::zeros((8, 9));
        assert!(augment_pair(&img, &lab, &AugmentConfig::default(), &mut rng(0)).is_err());
    }
}
