//! Dataset ingestion: IDX parsing and writing, variance normalization,
//! class balancing and synthetic Gaussian data.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{BigEndian, ReadBytesExt, WriteBytesExt};
use ndarray::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{LpError, Result};
use crate::model::RepresentationSet;

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// A labeled image set: one column per image.
#[derive(Debug, Clone)]
pub struct LabeledDataset {
    /// Shape `(M_0, total)`.
    pub images: Array2<f64>,
    /// One label in `0..C-1` per column.
    pub labels: Vec<usize>,
}

impl LabeledDataset {
    pub fn new(images: Array2<f64>, labels: Vec<usize>) -> Result<Self> {
        if images.ncols() != labels.len() {
            return Err(LpError::Format(format!(
                "{} images but {} labels",
                images.ncols(),
                labels.len()
            )));
        }
        Ok(Self { images, labels })
    }

    pub fn num_classes(&self) -> usize {
        self.labels.iter().max().map_or(0, |&m| m + 1)
    }

    /// Label counts indexed by class.
    pub fn class_histogram(&self) -> Vec<usize> {
        let mut h = vec![0; self.num_classes()];
        for &l in &self.labels {
            h[l] += 1;
        }
        h
    }

    /// Equalizes every class to `per_class` samples, dropping extras
    /// deterministically by original index. Errors if a class is short.
    pub fn balance(&self, per_class: usize) -> Result<LabeledDataset> {
        let c = self.num_classes();
        if c == 0 {
            return Err(LpError::Format("dataset has no labels".into()));
        }
        let mut keep: Vec<Vec<usize>> = vec![Vec::new(); c];
        for (j, &l) in self.labels.iter().enumerate() {
            if keep[l].len() < per_class {
                keep[l].push(j);
            }
        }
        for (cls, v) in keep.iter().enumerate() {
            if v.len() < per_class {
                return Err(LpError::Format(format!(
                    "class {cls} has only {} samples, need {per_class}",
                    v.len()
                )));
            }
        }
        let order: Vec<usize> = keep.into_iter().flatten().collect();
        let images = self.images.select(Axis(1), &order);
        let labels = order.iter().map(|&j| self.labels[j]).collect();
        LabeledDataset::new(images, labels)
    }

    /// A balanced dataset (class-major column order) as a representation
    /// set with `K` samples per class.
    pub fn to_representation_set(&self) -> Result<RepresentationSet> {
        let c = self.num_classes();
        let h = self.class_histogram();
        let k = *h.first().ok_or_else(|| LpError::Format("empty dataset".into()))?;
        if h.iter().any(|&n| n != k) {
            return Err(LpError::Format(
                "dataset is not balanced; call balance() first".into(),
            ));
        }
        for (j, &l) in self.labels.iter().enumerate() {
            if l != j / k {
                return Err(LpError::Format(
                    "columns are not in class-major order".into(),
                ));
            }
        }
        RepresentationSet::new(self.images.clone(), c, k)
    }
}

fn read_magic(r: &mut impl Read, expected: u32, what: &str) -> Result<()> {
    let magic = r.read_u32::<BigEndian>()?;
    if magic != expected {
        return Err(LpError::Format(format!(
            "{what}: bad IDX magic 0x{magic:08x}, expected 0x{expected:08x}"
        )));
    }
    Ok(())
}

/// Parses a big-endian IDX image/label file pair.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<LabeledDataset> {
    let mut ir = BufReader::new(File::open(images_path)?);
    read_magic(&mut ir, IDX_IMAGES_MAGIC, "images")?;
    let n = ir.read_u32::<BigEndian>()? as usize;
    let rows = ir.read_u32::<BigEndian>()? as usize;
    let cols = ir.read_u32::<BigEndian>()? as usize;
    let m0 = rows * cols;
    let mut pixels = vec![0u8; n * m0];
    ir.read_exact(&mut pixels)?;

    let mut lr = BufReader::new(File::open(labels_path)?);
    read_magic(&mut lr, IDX_LABELS_MAGIC, "labels")?;
    let ln = lr.read_u32::<BigEndian>()? as usize;
    if ln != n {
        return Err(LpError::Format(format!(
            "image count {n} does not match label count {ln}"
        )));
    }
    let mut labels = vec![0u8; ln];
    lr.read_exact(&mut labels)?;

    // IDX stores images row-major per image; one image per column here.
    let mut images = Array2::zeros((m0, n));
    for j in 0..n {
        for i in 0..m0 {
            images[[i, j]] = pixels[j * m0 + i] as f64;
        }
    }
    LabeledDataset::new(images, labels.into_iter().map(|l| l as usize).collect())
}

/// Writes images (values clamped to `0..=255` bytes) in IDX format.
pub fn write_idx_images(path: &Path, images: ArrayView2<'_, f64>, rows: usize, cols: usize) -> Result<()> {
    if rows * cols != images.nrows() {
        return Err(LpError::Shape(format!(
            "{rows}x{cols} does not match {} pixels per image",
            images.nrows()
        )));
    }
    let mut w = BufWriter::new(File::create(path)?);
    w.write_u32::<BigEndian>(IDX_IMAGES_MAGIC)?;
    w.write_u32::<BigEndian>(images.ncols() as u32)?;
    w.write_u32::<BigEndian>(rows as u32)?;
    w.write_u32::<BigEndian>(cols as u32)?;
    for col in images.columns() {
        for &v in col {
            w.write_all(&[v.clamp(0.0, 255.0) as u8])?;
        }
    }
    Ok(())
}

/// Writes labels in IDX format.
pub fn write_idx_labels(path: &Path, labels: &[usize]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_u32::<BigEndian>(IDX_LABELS_MAGIC)?;
    w.write_u32::<BigEndian>(labels.len() as u32)?;
    for &l in labels {
        if l > 255 {
            return Err(LpError::Range(format!("label {l} exceeds one byte")));
        }
        w.write_all(&[l as u8])?;
    }
    Ok(())
}

/// Scales every column to unit sample variance. Constant columns are set
/// to zero; their count is reported on stderr.
pub fn normalize(mut dataset: LabeledDataset) -> LabeledDataset {
    let mut degenerate = 0usize;
    for mut col in dataset.images.columns_mut() {
        let n = col.len() as f64;
        if n < 2.0 {
            continue;
        }
        let mean = col.sum() / n;
        let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
        if var <= f64::EPSILON * f64::EPSILON {
            col.fill(0.0);
            degenerate += 1;
        } else {
            let s = var.sqrt();
            col.mapv_inplace(|v| v / s);
        }
    }
    if degenerate > 0 {
        eprintln!("warning: {degenerate} constant column(s) normalized to zero");
    }
    dataset
}

/// Class-clustered Gaussian data: per-class mean with entries
/// `N(0, separation^2)`, samples `mean + spread * N(0, 1)`.
pub fn synthetic_gaussians(
    dim: usize,
    num_classes: usize,
    samples_per_class: usize,
    separation: f64,
    spread: f64,
    seed: u64,
) -> Result<RepresentationSet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = StandardNormal;
    let mut data = Array2::zeros((dim, num_classes * samples_per_class));
    for c in 0..num_classes {
        let mean: Vec<f64> = (0..dim)
            .map(|_| separation * <StandardNormal as Distribution<f64>>::sample(&normal, &mut rng))
            .collect();
        for k in 0..samples_per_class {
            let j = c * samples_per_class + k;
            for i in 0..dim {
                data[[i, j]] =
                    mean[i] + spread * <StandardNormal as Distribution<f64>>::sample(&normal, &mut rng);
            }
        }
    }
    RepresentationSet::new(data, num_classes, samples_per_class)
}

/// Labels of a class-major representation set, `0..C-1`.
pub fn class_major_labels(set: &RepresentationSet) -> Vec<usize> {
    (0..set.num_columns()).map(|j| set.class_of(j) - 1).collect()
}
