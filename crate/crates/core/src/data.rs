//! Datasets: MNIST IDX files, manifest-listed frame images, class
//! rebalancing and input-synapse sparsity masks.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};

use crate::error::{Error, Result};
use crate::pnm::Image;
use crate::rng::StreamRng;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// Labeled grayscale images stored as 8-bit levels; intensity = level / 255.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Dataset {
    height: usize,
    width: usize,
    n_classes: usize,
    levels: Vec<u8>,
    labels: Vec<u8>,
}

impl Dataset {
    pub fn new(height: usize, width: usize, n_classes: usize, levels: Vec<u8>, labels: Vec<u8>) -> Result<Self> {
        let px = height * width;
        if levels.len() != px * labels.len() {
            return Err(Error::Shape(format!(
                "{} labels of {height}x{width} images need {} pixel bytes, got {}",
                labels.len(),
                px * labels.len(),
                levels.len()
            )));
        }
        if let Some((i, &l)) = labels.iter().enumerate().find(|(_, &l)| l as usize >= n_classes) {
            return Err(Error::Input(format!(
                "example {i} has label {l}, outside 0..{n_classes}"
            )));
        }
        Ok(Dataset {
            height,
            width,
            n_classes,
            levels,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn levels(&self, i: usize) -> &[u8] {
        let px = self.pixels();
        &self.levels[i * px..(i + 1) * px]
    }

    pub fn intensities(&self, i: usize) -> Vec<f64> {
        self.levels(i).iter().map(|&b| f64::from(b) / 255.0).collect()
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i] as usize
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.n_classes];
        for &l in &self.labels {
            c[l as usize] += 1;
        }
        c
    }

    /// New dataset made of the given examples, in order.
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        let px = self.pixels();
        let mut levels = Vec::with_capacity(indices.len() * px);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.len() {
                return Err(Error::Input(format!("index {i} out of range for {} examples", self.len())));
            }
            levels.extend_from_slice(self.levels(i));
            labels.push(self.labels[i]);
        }
        Dataset::new(self.height, self.width, self.n_classes, levels, labels)
    }

    /// Writes the dataset as an IDX image file and an IDX label file.
    pub fn write_idx(&self, images_path: &Path, labels_path: &Path) -> Result<()> {
        let mut img = Vec::with_capacity(16 + self.levels.len());
        img.extend(IDX_IMAGES_MAGIC.to_be_bytes());
        img.extend((self.len() as u32).to_be_bytes());
        img.extend((self.height as u32).to_be_bytes());
        img.extend((self.width as u32).to_be_bytes());
        img.extend_from_slice(&self.levels);
        fs::write(images_path, img).map_err(|e| Error::io(images_path, e))?;
        let mut lab = Vec::with_capacity(8 + self.len());
        lab.extend(IDX_LABELS_MAGIC.to_be_bytes());
        lab.extend((self.len() as u32).to_be_bytes());
        lab.extend_from_slice(&self.labels);
        fs::write(labels_path, lab).map_err(|e| Error::io(labels_path, e))
    }
}

fn be_u32(bytes: &[u8], offset: usize, path: &Path) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| {
            Error::Input(format!(
                "{}: truncated header, need 4 bytes at offset {offset}, file has {}",
                path.display(),
                bytes.len()
            ))
        })
}

fn expect_magic(bytes: &[u8], expected: u32, path: &Path) -> Result<()> {
    let got = be_u32(bytes, 0, path)?;
    if got != expected {
        return Err(Error::Input(format!(
            "{}: bad magic 0x{got:08x} at offset 0, expected 0x{expected:08x}",
            path.display()
        )));
    }
    Ok(())
}

/// Parses an IDX image file and label file (MNIST layout, big-endian headers).
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let img = fs::read(images_path).map_err(|e| Error::io(images_path, e))?;
    let lab = fs::read(labels_path).map_err(|e| Error::io(labels_path, e))?;
    parse_idx(&img, images_path, &lab, labels_path)
}

pub fn parse_idx(img: &[u8], images_path: &Path, lab: &[u8], labels_path: &Path) -> Result<Dataset> {
    expect_magic(img, IDX_IMAGES_MAGIC, images_path)?;
    let n = be_u32(img, 4, images_path)? as usize;
    let h = be_u32(img, 8, images_path)? as usize;
    let w = be_u32(img, 12, images_path)? as usize;
    let need = 16 + n * h * w;
    if img.len() < need {
        return Err(Error::Input(format!(
            "{}: truncated pixel data, expected {need} bytes, file ends at offset {}",
            images_path.display(),
            img.len()
        )));
    }
    expect_magic(lab, IDX_LABELS_MAGIC, labels_path)?;
    let m = be_u32(lab, 4, labels_path)? as usize;
    if m != n {
        return Err(Error::Input(format!(
            "{}: count {m} at offset 4 does not match {n} images in {}",
            labels_path.display(),
            images_path.display()
        )));
    }
    if lab.len() < 8 + n {
        return Err(Error::Input(format!(
            "{}: truncated labels, expected {} bytes, file ends at offset {}",
            labels_path.display(),
            8 + n,
            lab.len()
        )));
    }
    let labels = lab[8..8 + n].to_vec();
    if let Some((i, &l)) = labels.iter().enumerate().find(|(_, &l)| l > 9) {
        return Err(Error::Input(format!(
            "{}: label {l} at offset {} is not a digit",
            labels_path.display(),
            8 + i
        )));
    }
    Dataset::new(h, w, 10, img[16..need].to_vec(), labels)
}

/// Standard MNIST file names inside `dir` (train or t10k split).
pub fn mnist_paths(dir: &Path, train: bool) -> (PathBuf, PathBuf) {
    let prefix = if train { "train" } else { "t10k" };
    (
        dir.join(format!("{prefix}-images-idx3-ubyte")),
        dir.join(format!("{prefix}-labels-idx1-ubyte")),
    )
}

/// Loads frames listed in a CSV manifest with header `path,label`.
///
/// Relative paths resolve against the manifest's directory; the class count
/// is one more than the largest label.
pub fn load_frames(manifest_path: &Path) -> Result<Dataset> {
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let mut reader = csv::Reader::from_path(manifest_path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(manifest_path, io),
        other => Error::Input(format!("{}: {other:?}", manifest_path.display())),
    })?;
    let mut dims: Option<(usize, usize)> = None;
    let mut levels = Vec::new();
    let mut labels = Vec::new();
    for (row, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::Input(format!("{} row {}: {e}", manifest_path.display(), row + 1)))?;
        let (Some(p), Some(l)) = (rec.get(0), rec.get(1)) else {
            return Err(Error::Input(format!(
                "{} row {}: expected path,label",
                manifest_path.display(),
                row + 1
            )));
        };
        let label: u8 = l.trim().parse().map_err(|_| {
            Error::Input(format!("{} row {}: bad label '{l}'", manifest_path.display(), row + 1))
        })?;
        let path = base.join(p.trim());
        let img = Image::read(&path)?;
        if img.channels != 1 {
            return Err(Error::Input(format!("{}: frames must be grayscale", path.display())));
        }
        match dims {
            None => dims = Some((img.height, img.width)),
            Some((h, w)) if (h, w) != (img.height, img.width) => {
                return Err(Error::Input(format!(
                    "{} row {}: {} is {}x{}, expected {h}x{w}",
                    manifest_path.display(),
                    row + 1,
                    path.display(),
                    img.height,
                    img.width
                )))
            }
            Some(_) => {}
        }
        levels.extend_from_slice(&img.data);
        labels.push(label);
    }
    let Some((h, w)) = dims else {
        return Err(Error::Input(format!("{}: manifest lists no frames", manifest_path.display())));
    };
    let n_classes = *labels.iter().max().expect("non-empty") as usize + 1;
    Dataset::new(h, w, n_classes, levels, labels)
}

/// Draws `per_class` examples of every class and shuffles them with `seed`.
///
/// With `with_replacement = false` every class must hold at least `per_class` examples.
pub fn rebalance(dataset: &Dataset, per_class: usize, seed: u64, with_replacement: bool) -> Result<Dataset> {
    let mut by_class: HashMap<usize, Vec<usize>> = HashMap::new();
    for i in 0..dataset.len() {
        by_class.entry(dataset.label(i)).or_default().push(i);
    }
    let mut rng = StreamRng::seed_from_u64(seed);
    let mut picked = Vec::with_capacity(per_class * dataset.n_classes());
    for c in 0..dataset.n_classes() {
        let pool = by_class
            .get(&c)
            .ok_or_else(|| Error::Input(format!("class {c} has no examples to resample")))?;
        if with_replacement {
            picked.extend((0..per_class).map(|_| pool[rng.random_range(0..pool.len())]));
        } else {
            if pool.len() < per_class {
                return Err(Error::Input(format!(
                    "class {c} has {} examples, {per_class} requested without replacement",
                    pool.len()
                )));
            }
            let mut pool = pool.clone();
            pool.shuffle(&mut rng);
            picked.extend_from_slice(&pool[..per_class]);
        }
    }
    picked.shuffle(&mut rng);
    dataset.subset(&picked)
}

/// Fixed random removal of input synapses (`true` = synapse kept), row-major `n_input x n_neurons`.
#[derive(Clone, Debug, PartialEq)]
pub struct SparsityMask {
    pub keep_fraction: f64,
    pub seed: u64,
    pub n_input: usize,
    pub n_neurons: usize,
    pub mask: Vec<bool>,
}

impl SparsityMask {
    pub fn kept(&self) -> usize {
        self.mask.iter().filter(|&&k| k).count()
    }
}

pub fn make_sparsity_mask(n_input: usize, n_neurons: usize, sparsity: f64, seed: u64) -> Result<SparsityMask> {
    if !(0.0..=1.0).contains(&sparsity) {
        return Err(Error::Input(format!("sparsity must lie in [0, 1] (got {sparsity})")));
    }
    let keep = 1.0 - sparsity;
    let mut rng = StreamRng::seed_from_u64(seed);
    let mask = (0..n_input * n_neurons)
        .map(|_| rng.random::<f64>() < keep)
        .collect();
    Ok(SparsityMask {
        keep_fraction: keep,
        seed,
        n_input,
        n_neurons,
        mask,
    })
}
