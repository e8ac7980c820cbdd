//! Deterministic synthetic multiview phantom dataset.
//!
//! Each case gets two images: a three-vessel-trachea-type layout carrying
//! structures 6-10 and a four-chamber-type layout carrying structures 1-5 and
//! 10-14. Shapes are filled ellipses (chambers/vessels), thin rectangles
//! (septa/valve analogs) and small discs (trachea/spine analogs) at a fixed
//! relative layout per view. Structure sizes are deliberately imbalanced
//! (largest:smallest pixel count >= 20:1). The whole layout is rigidly
//! rotated/translated per case, intensities get multiplicative speckle, and
//! abnormal cases may omit one structure from both image and label map.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand::Rng;
use rand::SeedableRng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::{SampleMeta, View};
use crate::error::{Error, Result};
use crate::util::derive_seed;

/// Parameters of the phantom dataset generator.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhantomSpec {
    pub image_size: usize,
    pub n_cases: usize,
    /// Fraction of cases flagged abnormal.
    pub abnormal_fraction: f64,
    /// Chance an abnormal case omits one view-expected structure.
    pub drop_probability: f64,
    /// Multiplicative speckle strength.
    pub noise_level: f64,
    pub seed: u64,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        PhantomSpec {
            image_size: 128,
            n_cases: 48,
            abnormal_fraction: 0.25,
            drop_probability: 0.8,
            noise_level: 0.08,
            seed: 7,
        }
    }
}

impl PhantomSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_cases < 1 {
            return Err(Error::validation("n_cases must be >= 1"));
        }
        if self.image_size < 32 {
            return Err(Error::validation("image_size must be >= 32"));
        }
        if !(0.0..=1.0).contains(&self.abnormal_fraction) {
            return Err(Error::validation(format!(
                "abnormal_fraction must be in [0, 1], got {}",
                self.abnormal_fraction
            )));
        }
        if !(0.0..=1.0).contains(&self.drop_probability) {
            return Err(Error::validation(format!(
                "drop_probability must be in [0, 1], got {}",
                self.drop_probability
            )));
        }
        if self.noise_level < 0.0 || !self.noise_level.is_finite() {
            return Err(Error::validation("noise_level must be finite and >= 0"));
        }
        Ok(())
    }
}

/// Shape of a phantom structure, in unit-square coordinates.
#[derive(Debug, Clone, Copy)]
pub enum Shape {
    /// Semi-axes along the local row/col directions.
    Ellipse { ry: f64, rx: f64 },
    /// Half-extents along the local row/col directions.
    Rect { hy: f64, hx: f64 },
    Disc { r: f64 },
}

impl Shape {
    fn max_extent(&self) -> f64 {
        match *self {
            Shape::Ellipse { ry, rx } => ry.max(rx),
            Shape::Rect { hy, hx } => (hy * hy + hx * hx).sqrt(),
            Shape::Disc { r } => r,
        }
    }

    fn contains(&self, ly: f64, lx: f64) -> bool {
        match *self {
            Shape::Ellipse { ry, rx } => {
                let a = ly / ry;
                let b = lx / rx;
                a * a + b * b <= 1.0
            }
            Shape::Rect { hy, hx } => ly.abs() <= hy && lx.abs() <= hx,
            Shape::Disc { r } => ly * ly + lx * lx <= r * r,
        }
    }
}

/// One structure of the nominal per-view layout.
#[derive(Debug, Clone, Copy)]
pub struct Structure {
    pub label: u8,
    /// Center (row, col) in unit coordinates.
    pub center: (f64, f64),
    /// Orientation in degrees (rotation of the local frame).
    pub orient_deg: f64,
    pub shape: Shape,
    /// Base intensity before speckle.
    pub intensity: f32,
}

const BACKGROUND_INTENSITY: f32 = 0.12;
/// Per-case rigid transform bounds.
const CASE_ROTATION_DEG: f64 = 15.0;
const CASE_TRANSLATION: f64 = 0.04;

/// Nominal layout of a view, before the per-case rigid transform.
/// Structures are listed in label order; pairwise disjoint with the sizes
/// below.
pub fn nominal_layout(view: View) -> Vec<Structure> {
    match view {
        View::ThreeVesselTrachea => vec![
            Structure {
                label: 6,
                center: (0.42, 0.37),
                orient_deg: -35.0,
                shape: Shape::Ellipse { ry: 0.25, rx: 0.15 },
                intensity: 0.40,
            },
            Structure {
                label: 7,
                center: (0.48, 0.625),
                orient_deg: 0.0,
                shape: Shape::Disc { r: 0.085 },
                intensity: 0.50,
            },
            Structure {
                label: 8,
                center: (0.56, 0.78),
                orient_deg: 0.0,
                shape: Shape::Disc { r: 0.062 },
                intensity: 0.60,
            },
            Structure {
                label: 9,
                center: (0.66, 0.69),
                orient_deg: 0.0,
                shape: Shape::Disc { r: 0.0425 },
                intensity: 0.85,
            },
            Structure {
                label: 10,
                center: (0.80, 0.565),
                orient_deg: 0.0,
                shape: Shape::Disc { r: 0.055 },
                intensity: 0.95,
            },
        ],
        View::FourChamber => vec![
            Structure {
                label: 1,
                center: (0.36, 0.32),
                orient_deg: -15.0,
                shape: Shape::Ellipse { ry: 0.21, rx: 0.16 },
                intensity: 0.35,
            },
            Structure {
                label: 2,
                center: (0.34, 0.68),
                orient_deg: 12.0,
                shape: Shape::Ellipse { ry: 0.145, rx: 0.10 },
                intensity: 0.42,
            },
            Structure {
                label: 3,
                center: (0.78, 0.35),
                orient_deg: 0.0,
                shape: Shape::Ellipse { ry: 0.085, rx: 0.10 },
                intensity: 0.48,
            },
            Structure {
                label: 4,
                center: (0.77, 0.67),
                orient_deg: 0.0,
                shape: Shape::Ellipse { ry: 0.075, rx: 0.095 },
                intensity: 0.55,
            },
            Structure {
                label: 5,
                center: (0.635, 0.505),
                orient_deg: 0.0,
                shape: Shape::Disc { r: 0.052 },
                intensity: 0.62,
            },
            Structure {
                label: 10,
                center: (0.885, 0.44),
                orient_deg: 0.0,
                shape: Shape::Disc { r: 0.045 },
                intensity: 0.95,
            },
            Structure {
                label: 11,
                center: (0.33, 0.531),
                orient_deg: 0.0,
                shape: Shape::Rect { hy: 0.15, hx: 0.021 },
                intensity: 0.75,
            },
            Structure {
                label: 12,
                center: (0.80, 0.52),
                orient_deg: 0.0,
                shape: Shape::Rect { hy: 0.08, hx: 0.019 },
                intensity: 0.70,
            },
            Structure {
                label: 13,
                center: (0.625, 0.33),
                orient_deg: -8.0,
                shape: Shape::Rect { hy: 0.018, hx: 0.075 },
                intensity: 0.82,
            },
            Structure {
                label: 14,
                center: (0.60, 0.68),
                orient_deg: 8.0,
                shape: Shape::Rect { hy: 0.018, hx: 0.068 },
                intensity: 0.78,
            },
        ],
    }
}

/// Renders one view of one case: clean intensity image plus exact label map.
/// `drop_label` removes that structure from both, mimicking an anatomical
/// anomaly. Structures are drawn in label order and never overwrite an
/// earlier structure's pixels.
pub fn render_view(
    view: View,
    size: usize,
    rigid: (f64, f64, f64), // (rotation deg, translate rows, translate cols)
    drop_label: Option<u8>,
) -> (Array2<f32>, Array2<u8>) {
    let mut image = Array2::<f32>::from_elem((size, size), BACKGROUND_INTENSITY);
    let mut labels = Array2::<u8>::zeros((size, size));
    let (theta_deg, ty, tx) = rigid;
    let (sin_t, cos_t) = theta_deg.to_radians().sin_cos();

    for s in nominal_layout(view) {
        if Some(s.label) == drop_label {
            continue;
        }
        // rigid transform of the structure pose about the image center
        let (dy, dx) = (s.center.0 - 0.5, s.center.1 - 0.5);
        let cy = 0.5 + cos_t * dy - sin_t * dx + ty;
        let cx = 0.5 + sin_t * dy + cos_t * dx + tx;
        let orient = (s.orient_deg + theta_deg).to_radians();
        let (sin_o, cos_o) = orient.sin_cos();

        let ext = s.shape.max_extent();
        let y0 = (((cy - ext) * size as f64).floor().max(0.0)) as usize;
        let y1 = (((cy + ext) * size as f64).ceil().min(size as f64)) as usize;
        let x0 = (((cx - ext) * size as f64).floor().max(0.0)) as usize;
        let x1 = (((cx + ext) * size as f64).ceil().min(size as f64)) as usize;
        for y in y0..y1 {
            let py = (y as f64 + 0.5) / size as f64 - cy;
            for x in x0..x1 {
                let px = (x as f64 + 0.5) / size as f64 - cx;
                // into the structure's local frame
                let ly = cos_o * py + sin_o * px;
                let lx = -sin_o * py + cos_o * px;
                if s.shape.contains(ly, lx) && labels[[y, x]] == 0 {
                    labels[[y, x]] = s.label;
                    image[[y, x]] = s.intensity;
                }
            }
        }
    }
    (image, labels)
}

fn apply_speckle(image: &mut Array2<f32>, noise_level: f64, rng: &mut rand::rngs::StdRng) {
    if noise_level == 0.0 {
        return;
    }
    let normal = Normal::new(0.0f64, 1.0).expect("valid normal");
    for v in image.iter_mut() {
        let g = normal.sample(rng);
        *v = (*v as f64 * (1.0 + noise_level * g)).clamp(0.0, 1.0) as f32;
    }
}

fn save_image_png(path: &Path, image: &Array2<f32>) -> Result<()> {
    let (h, w) = image.dim();
    let buf = image::ImageBuffer::<image::Luma<u16>, Vec<u16>>::from_fn(
        w as u32,
        h as u32,
        |x, y| image::Luma([(image[[y as usize, x as usize]] * 65535.0).round() as u16]),
    );
    buf.save(path).map_err(|e| Error::Image { path: path.into(), source: e })
}

fn save_label_png(path: &Path, labels: &Array2<u8>) -> Result<()> {
    let (h, w) = labels.dim();
    let buf = image::ImageBuffer::<image::Luma<u8>, Vec<u8>>::from_fn(w as u32, h as u32, |x, y| {
        image::Luma([labels[[y as usize, x as usize]]])
    });
    buf.save(path).map_err(|e| Error::Image { path: path.into(), source: e })
}

/// Generates the phantom dataset under `out_dir` and returns the manifest
/// path. Output layout: `images/` and `labels/` PNG directories plus
/// `manifest.jsonl`. Fully deterministic for a given spec.
pub fn generate(spec: &PhantomSpec, out_dir: &Path) -> Result<PathBuf> {
    spec.validate()?;
    let images_dir = out_dir.join("images");
    let labels_dir = out_dir.join("labels");
    fs::create_dir_all(&images_dir).map_err(|e| Error::io(&images_dir, e))?;
    fs::create_dir_all(&labels_dir).map_err(|e| Error::io(&labels_dir, e))?;

    let n_abnormal = (spec.n_cases as f64 * spec.abnormal_fraction).round() as usize;
    let mut metas = Vec::with_capacity(spec.n_cases * 2);

    for case_idx in 0..spec.n_cases {
        let case_id = format!("case_{:04}", case_idx);
        let abnormal = case_idx < n_abnormal;
        let mut rng =
            rand::rngs::StdRng::seed_from_u64(derive_seed(spec.seed, &[0xCA5E, case_idx as u64]));

        let theta = rng.gen_range(-CASE_ROTATION_DEG..=CASE_ROTATION_DEG);
        let ty = rng.gen_range(-CASE_TRANSLATION..=CASE_TRANSLATION);
        let tx = rng.gen_range(-CASE_TRANSLATION..=CASE_TRANSLATION);
        let drop_label = if abnormal && rng.gen_bool(spec.drop_probability) {
            Some(rng.gen_range(1u8..=14))
        } else {
            None
        };

        for view in [View::ThreeVesselTrachea, View::FourChamber] {
            let (mut image, label_map) =
                render_view(view, spec.image_size, (theta, ty, tx), drop_label);
            apply_speckle(&mut image, spec.noise_level, &mut rng);

            let image_rel = PathBuf::from(format!("images/{}_{}.png", case_id, view));
            let label_rel = PathBuf::from(format!("labels/{}_{}.png", case_id, view));
            save_image_png(&out_dir.join(&image_rel), &image)?;
            save_label_png(&out_dir.join(&label_rel), &label_map)?;
            metas.push(SampleMeta {
                case_id: case_id.clone(),
                view,
                normality: if abnormal {
                    crate::dataset::Normality::Abnormal
                } else {
                    crate::dataset::Normality::Normal
                },
                image_path: image_rel,
                label_path: label_rel,
            });
        }
    }

    let manifest_path = out_dir.join("manifest.jsonl");
    let mut file = fs::File::create(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    for meta in &metas {
        let line = serde_json::to_string(meta)
            .map_err(|e| Error::validation(format!("manifest serialization: {}", e)))?;
        writeln!(file, "{}", line).map_err(|e| Error::io(&manifest_path, e))?;
    }
    Ok(manifest_path)
}
