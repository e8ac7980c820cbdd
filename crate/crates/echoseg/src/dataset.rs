//! Label taxonomy, sample representation, manifest ingestion, preprocessing
//! and patient-level stratified splitting.
//!
//! A dataset on disk is a JSON-lines manifest plus single-channel PNGs:
//! one record per sample with keys `case_id`, `view`, `normality`,
//! `image_path`, `label_path`. Image PNGs may be 8- or 16-bit grayscale;
//! label-map PNGs are 8-bit grayscale with pixel values `0..=14`.

use std::collections::BTreeSet;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util::{resize_bilinear, resize_nearest};

/// Number of foreground structures; background is label 0.
pub const NUM_FOREGROUND_LABELS: usize = 14;

/// Imaging plane a sample was acquired in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum View {
    #[serde(rename = "3VTV")]
    ThreeVesselTrachea,
    #[serde(rename = "4CHV")]
    FourChamber,
}

impl fmt::Display for View {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            View::ThreeVesselTrachea => write!(f, "3VTV"),
            View::FourChamber => write!(f, "4CHV"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Normality {
    Normal,
    Abnormal,
}

/// One foreground structure: its integer label, name and the view(s) it
/// appears in.
#[derive(Debug, Clone)]
pub struct LabelInfo {
    pub id: u8,
    pub name: &'static str,
    pub views: &'static [View],
}

const V3: &[View] = &[View::ThreeVesselTrachea];
const V4: &[View] = &[View::FourChamber];
const VBOTH: &[View] = &[View::ThreeVesselTrachea, View::FourChamber];

/// The fixed 14-structure taxonomy. Labels 1-5 and 11-14 belong to the
/// four-chamber view, 6-9 to the three-vessel trachea view, and 10 (spine)
/// to both. Background is 0 and belongs to no view.
#[derive(Debug, Clone)]
pub struct LabelTaxonomy {
    labels: Vec<LabelInfo>,
}

impl LabelTaxonomy {
    pub fn standard() -> Self {
        let labels = vec![
            LabelInfo { id: 1, name: "left ventricle", views: V4 },
            LabelInfo { id: 2, name: "right ventricle", views: V4 },
            LabelInfo { id: 3, name: "left atrium", views: V4 },
            LabelInfo { id: 4, name: "right atrium", views: V4 },
            LabelInfo { id: 5, name: "descending aorta", views: V4 },
            LabelInfo { id: 6, name: "pulmonary artery", views: V3 },
            LabelInfo { id: 7, name: "aorta", views: V3 },
            LabelInfo { id: 8, name: "superior vena cava", views: V3 },
            LabelInfo { id: 9, name: "trachea", views: V3 },
            LabelInfo { id: 10, name: "spine", views: VBOTH },
            LabelInfo { id: 11, name: "interventricular septum", views: V4 },
            LabelInfo { id: 12, name: "interatrial septum", views: V4 },
            LabelInfo { id: 13, name: "mitral valve", views: V4 },
            LabelInfo { id: 14, name: "tricuspid valve", views: V4 },
        ];
        LabelTaxonomy { labels }
    }

    pub fn labels(&self) -> &[LabelInfo] {
        &self.labels
    }

    pub fn label(&self, id: u8) -> Option<&LabelInfo> {
        self.labels.iter().find(|l| l.id == id)
    }

    pub fn name_of(&self, id: u8) -> &'static str {
        self.label(id).map(|l| l.name).unwrap_or("unknown")
    }

    /// Foreground label ids expected in the given view, ascending.
    pub fn labels_for_view(&self, view: View) -> Vec<u8> {
        self.labels
            .iter()
            .filter(|l| l.views.contains(&view))
            .map(|l| l.id)
            .collect()
    }

    /// True when `id` is a foreground label of `view`.
    pub fn label_in_view(&self, id: u8, view: View) -> bool {
        self.label(id).map(|l| l.views.contains(&view)).unwrap_or(false)
    }
}

/// Ground-truth presence per foreground label: `present[l-1]` is true iff
/// label `l` occupies at least one pixel. Presence is derived from the label
/// map, not from view membership; abnormal cases may lack a view-expected
/// structure.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PresenceVector(pub [bool; NUM_FOREGROUND_LABELS]);

impl PresenceVector {
    pub fn is_present(&self, label: u8) -> bool {
        label >= 1 && (label as usize) <= NUM_FOREGROUND_LABELS && self.0[label as usize - 1]
    }

    /// Ids of present labels, ascending.
    pub fn present_labels(&self) -> Vec<u8> {
        (1..=NUM_FOREGROUND_LABELS as u8).filter(|&l| self.0[l as usize - 1]).collect()
    }
}

/// Computes ground-truth label presence from a label map.
pub fn presence(label_map: &Array2<u8>) -> Result<PresenceVector> {
    let mut present = [false; NUM_FOREGROUND_LABELS];
    for &v in label_map.iter() {
        if v as usize > NUM_FOREGROUND_LABELS {
            return Err(Error::validation(format!(
                "label value {} out of range 0..={}",
                v, NUM_FOREGROUND_LABELS
            )));
        }
        if v > 0 {
            present[v as usize - 1] = true;
        }
    }
    Ok(PresenceVector(present))
}

/// One manifest record: everything needed to locate and classify a sample
/// without touching pixel data.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleMeta {
    pub case_id: String,
    pub view: View,
    pub normality: Normality,
    pub image_path: PathBuf,
    pub label_path: PathBuf,
}

/// A fully loaded and preprocessed sample.
#[derive(Debug, Clone)]
pub struct Sample {
    pub case_id: String,
    pub view: View,
    pub normality: Normality,
    /// Square grayscale image, intensities in [0, 1] right after loading.
    pub image: Array2<f32>,
    /// Square integer label map with values in 0..=14.
    pub label_map: Array2<u8>,
}

/// Reads a JSON-lines manifest and returns sample descriptors without
/// loading pixels. Relative image/label paths are resolved against the
/// manifest's directory. Rejects duplicate `(case_id, view)` pairs and
/// records whose files do not exist.
pub fn load_manifest(path: &Path) -> Result<Vec<SampleMeta>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let mut metas = Vec::new();
    let mut seen = BTreeSet::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut meta: SampleMeta = serde_json::from_str(&line).map_err(|e| {
            Error::validation(format!("manifest record {}: {}", idx, e))
        })?;
        if !seen.insert((meta.case_id.clone(), meta.view)) {
            return Err(Error::validation(format!(
                "manifest record {}: duplicate (case_id, view) = ({}, {})",
                idx, meta.case_id, meta.view
            )));
        }
        meta.image_path = resolve(base, &meta.image_path);
        meta.label_path = resolve(base, &meta.label_path);
        for p in [&meta.image_path, &meta.label_path] {
            if !p.exists() {
                return Err(Error::io(
                    p.clone(),
                    std::io::Error::new(
                        std::io::ErrorKind::NotFound,
                        format!("referenced by manifest record {}", idx),
                    ),
                ));
            }
        }
        metas.push(meta);
    }
    Ok(metas)
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Loads a grayscale PNG as intensities in [0, 1]. Accepts 8- and 16-bit
/// single-channel images.
pub fn load_image_png(path: &Path) -> Result<Array2<f32>> {
    let img = image::open(path).map_err(|e| Error::Image { path: path.into(), source: e })?;
    match img {
        image::DynamicImage::ImageLuma8(buf) => {
            let (w, h) = (buf.width() as usize, buf.height() as usize);
            Ok(Array2::from_shape_fn((h, w), |(y, x)| {
                buf.get_pixel(x as u32, y as u32).0[0] as f32 / 255.0
            }))
        }
        image::DynamicImage::ImageLuma16(buf) => {
            let (w, h) = (buf.width() as usize, buf.height() as usize);
            Ok(Array2::from_shape_fn((h, w), |(y, x)| {
                buf.get_pixel(x as u32, y as u32).0[0] as f32 / 65535.0
            }))
        }
        _ => Err(Error::validation(format!(
            "{}: expected single-channel grayscale PNG",
            path.display()
        ))),
    }
}

/// Loads an 8-bit grayscale PNG label map and checks the value range.
pub fn load_label_png(path: &Path) -> Result<Array2<u8>> {
    let img = image::open(path).map_err(|e| Error::Image { path: path.into(), source: e })?;
    let buf = match img {
        image::DynamicImage::ImageLuma8(buf) => buf,
        _ => {
            return Err(Error::validation(format!(
                "{}: label maps must be 8-bit single-channel PNG",
                path.display()
            )))
        }
    };
    let (w, h) = (buf.width() as usize, buf.height() as usize);
    let map = Array2::from_shape_fn((h, w), |(y, x)| buf.get_pixel(x as u32, y as u32).0[0]);
    if let Some(&bad) = map.iter().find(|&&v| v as usize > NUM_FOREGROUND_LABELS) {
        return Err(Error::validation(format!(
            "{}: label value {} out of range 0..={}",
            path.display(),
            bad,
            NUM_FOREGROUND_LABELS
        )));
    }
    Ok(map)
}

/// Zero-pads the shorter side to square (split evenly, extra pixel at the
/// far edge) and resizes to `target_size`. Images are resized bilinearly,
/// label maps with nearest-neighbor so integer label semantics survive.
/// Already-square inputs at the target size pass through unchanged.
pub fn preprocess(
    image: &Array2<f32>,
    label_map: &Array2<u8>,
    target_size: usize,
) -> Result<(Array2<f32>, Array2<u8>)> {
    let (h, w) = image.dim();
    if h == 0 || w == 0 {
        return Err(Error::validation("empty image"));
    }
    if label_map.dim() != (h, w) {
        return Err(Error::validation(format!(
            "image is {}x{} but label map is {}x{}",
            h,
            w,
            label_map.dim().0,
            label_map.dim().1
        )));
    }
    if target_size == 0 {
        return Err(Error::validation("target_size must be positive"));
    }
    let side = h.max(w);
    let (img_sq, lab_sq) = if h == w {
        (image.clone(), label_map.clone())
    } else {
        let top = (side - h) / 2;
        let left = (side - w) / 2;
        let mut img_sq = Array2::<f32>::zeros((side, side));
        let mut lab_sq = Array2::<u8>::zeros((side, side));
        img_sq.slice_mut(ndarray::s![top..top + h, left..left + w]).assign(image);
        lab_sq.slice_mut(ndarray::s![top..top + h, left..left + w]).assign(label_map);
        (img_sq, lab_sq)
    };
    Ok((
        resize_bilinear(&img_sq, target_size, target_size),
        resize_nearest(&lab_sq, target_size, target_size),
    ))
}

/// Loads one sample from disk, preprocesses to `target_size` and validates
/// that every foreground label in the map belongs to the sample's view.
pub fn load_sample(meta: &SampleMeta, target_size: usize) -> Result<Sample> {
    let image = load_image_png(&meta.image_path)?;
    let label_map = load_label_png(&meta.label_path)?;
    let (image, label_map) = preprocess(&image, &label_map, target_size)?;
    let taxonomy = LabelTaxonomy::standard();
    let pres = presence(&label_map)?;
    for l in pres.present_labels() {
        if !taxonomy.label_in_view(l, meta.view) {
            return Err(Error::validation(format!(
                "{} ({}): label {} ({}) does not belong to view {}",
                meta.case_id,
                meta.view,
                l,
                taxonomy.name_of(l),
                meta.view
            )));
        }
    }
    Ok(Sample {
        case_id: meta.case_id.clone(),
        view: meta.view,
        normality: meta.normality,
        image,
        label_map,
    })
}

/// Patient-level split: both views of a case always land in the same
/// portion.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: BTreeSet<String>,
    pub val: BTreeSet<String>,
    pub test: BTreeSet<String>,
}

impl DatasetSplit {
    pub fn portion_of(&self, case_id: &str) -> Option<&'static str> {
        if self.train.contains(case_id) {
            Some("train")
        } else if self.val.contains(case_id) {
            Some("val")
        } else if self.test.contains(case_id) {
            Some("test")
        } else {
            None
        }
    }
}

/// Splits cases into train/val/test portions, stratified by normality so the
/// normal:abnormal ratio is equal across portions within rounding.
/// Per-stratum portion counts use largest-remainder assignment, which keeps
/// the allocation deterministic and minimizes ratio drift. The shuffle is
/// seeded, so identical inputs and seed give identical splits.
pub fn split_patients(
    cases: &[(String, Normality)],
    ratios: (f64, f64, f64),
    seed: u64,
) -> Result<DatasetSplit> {
    let (r_train, r_val, r_test) = ratios;
    if r_train < 0.0 || r_val < 0.0 || r_test < 0.0 {
        return Err(Error::validation("split ratios must be non-negative"));
    }
    if (r_train + r_val + r_test - 1.0).abs() > 1e-9 {
        return Err(Error::validation(format!(
            "split ratios must sum to 1, got {}",
            r_train + r_val + r_test
        )));
    }
    if cases.len() < 3 {
        return Err(Error::validation(format!(
            "need at least 3 cases to form 3 portions, got {}",
            cases.len()
        )));
    }
    let mut unique = BTreeSet::new();
    for (id, _) in cases {
        if !unique.insert(id.clone()) {
            return Err(Error::validation(format!("duplicate case id {:?}", id)));
        }
    }

    let mut split = DatasetSplit {
        train: BTreeSet::new(),
        val: BTreeSet::new(),
        test: BTreeSet::new(),
    };
    let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
    for stratum in [Normality::Normal, Normality::Abnormal] {
        let mut ids: Vec<&String> =
            cases.iter().filter(|(_, n)| *n == stratum).map(|(id, _)| id).collect();
        if ids.is_empty() {
            continue;
        }
        ids.shuffle(&mut rng);
        let counts = largest_remainder(ids.len(), &[r_train, r_val, r_test]);
        let mut it = ids.into_iter();
        for (portion, &count) in
            [&mut split.train, &mut split.val, &mut split.test].into_iter().zip(&counts)
        {
            for _ in 0..count {
                portion.insert(it.next().expect("count total matches").clone());
            }
        }
    }
    Ok(split)
}

/// Apportions `n` items over portions proportional to `ratios`, assigning
/// leftover items to the largest fractional remainders (ties broken by
/// portion order).
fn largest_remainder(n: usize, ratios: &[f64]) -> Vec<usize> {
    let exact: Vec<f64> = ratios.iter().map(|r| r * n as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..ratios.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    for i in 0..(n - assigned) {
        counts[order[i % order.len()]] += 1;
    }
    counts
}
