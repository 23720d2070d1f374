//! Dataset ingestion, binary filtering, normalization and seeded splits.
//!
//! Every loader has a byte-level parser (`parse_*`) and a thin file wrapper
//! (`load_*`). The parsers never panic on malformed input.

use std::fs;
use std::io;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Row-major feature matrix with one label per row.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    name: String,
    dim: usize,
    features: Vec<f64>,
    labels: Vec<u8>,
}

impl Dataset {
    pub fn new(name: impl Into<String>, dim: usize, features: Vec<f64>, labels: Vec<u8>) -> Result<Self> {
        let name = name.into();
        if labels.is_empty() {
            return Err(Error::Validation(format!("dataset `{name}` has no samples")));
        }
        if dim == 0 {
            return Err(Error::Validation(format!("dataset `{name}` has zero features")));
        }
        let expected = labels.len().checked_mul(dim);
        if expected != Some(features.len()) {
            return Err(Error::Shape(format!(
                "dataset `{name}`: {} feature values for {} rows of width {dim}",
                features.len(),
                labels.len()
            )));
        }
        if let Some(bad) = features.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!(
                "dataset `{name}`: feature {} of row {} is not finite",
                bad % dim,
                bad / dim
            )));
        }
        Ok(Dataset {
            name,
            dim,
            features,
            labels,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn is_binary(&self) -> bool {
        self.labels.iter().all(|&y| y <= 1)
    }

    /// Number of samples per label value, indexed by label.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.labels.iter().copied().max().map_or(0, |m| m as usize + 1)];
        for &y in &self.labels {
            counts[y as usize] += 1;
        }
        counts
    }

    /// Rows `indices`, in that order.
    pub fn subset(&self, name: impl Into<String>, indices: &[usize]) -> Result<Dataset> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.len()) {
            return Err(Error::Index(format!("row {bad} out of range for {} rows", self.len())));
        }
        let mut features = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            features.extend_from_slice(self.row(i));
        }
        Dataset::new(
            name,
            self.dim,
            features,
            indices.iter().map(|&i| self.labels[i]).collect(),
        )
    }
}

fn truncated(source: &Path, what: &str, need: usize, have: usize) -> Error {
    Error::io(
        source,
        io::Error::new(
            io::ErrorKind::UnexpectedEof,
            format!("truncated {what}: need {need} bytes, have {have}"),
        ),
    )
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn be_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_be_bytes(bytes[at..at + 4].try_into().unwrap())
}

const IDX_IMAGES_MAGIC: u32 = 2051;
const IDX_LABELS_MAGIC: u32 = 2049;

/// Decoded IDX image file: `count` images of `rows × cols`, scaled to `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<f64>,
}

pub fn parse_idx_images(bytes: &[u8], source: &Path) -> Result<IdxImages> {
    if bytes.len() < 16 {
        return Err(truncated(source, "IDX image header", 16, bytes.len()));
    }
    let magic = be_u32(bytes, 0);
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::Format(format!(
            "{}: IDX image magic {magic}, expected {IDX_IMAGES_MAGIC}",
            source.display()
        )));
    }
    let (count, rows, cols) = (
        be_u32(bytes, 4) as usize,
        be_u32(bytes, 8) as usize,
        be_u32(bytes, 12) as usize,
    );
    let need = count
        .checked_mul(rows)
        .and_then(|v| v.checked_mul(cols))
        .and_then(|v| v.checked_add(16))
        .ok_or_else(|| Error::Format(format!("{}: IDX dimensions overflow", source.display())))?;
    if bytes.len() < need {
        return Err(truncated(source, "IDX image payload", need, bytes.len()));
    }
    if bytes.len() > need {
        return Err(Error::Format(format!(
            "{}: {} trailing bytes after IDX image payload",
            source.display(),
            bytes.len() - need
        )));
    }
    let pixels = bytes[16..].iter().map(|&b| f64::from(b) / 255.0).collect();
    Ok(IdxImages {
        count,
        rows,
        cols,
        pixels,
    })
}

pub fn parse_idx_labels(bytes: &[u8], source: &Path) -> Result<Vec<u8>> {
    if bytes.len() < 8 {
        return Err(truncated(source, "IDX label header", 8, bytes.len()));
    }
    let magic = be_u32(bytes, 0);
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::Format(format!(
            "{}: IDX label magic {magic}, expected {IDX_LABELS_MAGIC}",
            source.display()
        )));
    }
    let count = be_u32(bytes, 4) as usize;
    let need = count + 8;
    if bytes.len() < need {
        return Err(truncated(source, "IDX label payload", need, bytes.len()));
    }
    if bytes.len() > need {
        return Err(Error::Format(format!(
            "{}: {} trailing bytes after IDX labels",
            source.display(),
            bytes.len() - need
        )));
    }
    Ok(bytes[8..].to_vec())
}

/// Pairs an IDX image file with its label file. Labels stay as stored.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let images = parse_idx_images(&read_file(images_path)?, images_path)?;
    let labels = parse_idx_labels(&read_file(labels_path)?, labels_path)?;
    if labels.len() != images.count {
        return Err(Error::Shape(format!(
            "{} images but {} labels",
            images.count,
            labels.len()
        )));
    }
    let name = images_path
        .file_name()
        .map_or_else(|| "idx".into(), |s| s.to_string_lossy().into_owned());
    Dataset::new(name, images.rows * images.cols, images.pixels, labels)
}

pub const CIFAR_PIXELS: usize = 3072;
pub const CIFAR_RECORD: usize = CIFAR_PIXELS + 1;

/// Records of one label byte followed by 3072 channel-major pixel bytes.
pub fn parse_cifar_bin(bytes: &[u8], source: &Path) -> Result<(Vec<f64>, Vec<u8>)> {
    if bytes.is_empty() {
        return Err(Error::Format(format!("{}: empty CIFAR file", source.display())));
    }
    if !bytes.len().is_multiple_of(CIFAR_RECORD) {
        return Err(Error::Format(format!(
            "{}: size {} is not a multiple of the {CIFAR_RECORD}-byte record",
            source.display(),
            bytes.len()
        )));
    }
    let n = bytes.len() / CIFAR_RECORD;
    let mut features = Vec::with_capacity(n * CIFAR_PIXELS);
    let mut labels = Vec::with_capacity(n);
    for rec in bytes.chunks_exact(CIFAR_RECORD) {
        labels.push(rec[0]);
        features.extend(rec[1..].iter().map(|&b| f64::from(b) / 255.0));
    }
    Ok((features, labels))
}

/// Concatenates CIFAR binary batches in the order given.
pub fn load_cifar_bin<P: AsRef<Path>>(paths: &[P]) -> Result<Dataset> {
    if paths.is_empty() {
        return Err(Error::Config("no CIFAR batch files given".into()));
    }
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for p in paths {
        let p = p.as_ref();
        let (f, l) = parse_cifar_bin(&read_file(p)?, p)?;
        features.extend(f);
        labels.extend(l);
    }
    Dataset::new("cifar10", CIFAR_PIXELS, features, labels)
}

pub const WDBC_FEATURES: usize = 30;

/// WDBC rows `id,diagnosis,f1..f30`; diagnosis `M` → 1, `B` → 0. Blank lines are
/// skipped. Features are returned raw; see [`Standardizer`].
pub fn parse_wdbc_csv(text: &str) -> Result<(Vec<f64>, Vec<u8>)> {
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        if cols.len() != WDBC_FEATURES + 2 {
            return Err(Error::Format(format!(
                "line {lineno}: {} columns, expected {}",
                cols.len(),
                WDBC_FEATURES + 2
            )));
        }
        labels.push(match cols[1] {
            "M" => 1,
            "B" => 0,
            other => {
                return Err(Error::Format(format!(
                    "line {lineno}: diagnosis `{other}` is neither M nor B"
                )))
            }
        });
        for (j, c) in cols[2..].iter().enumerate() {
            let v: f64 = c
                .parse()
                .map_err(|_| Error::Format(format!("line {lineno}: feature {} `{c}` is not a number", j + 1)))?;
            if !v.is_finite() {
                return Err(Error::Format(format!("line {lineno}: feature {} is not finite", j + 1)));
            }
            features.push(v);
        }
    }
    if labels.is_empty() {
        return Err(Error::Format("WDBC file has no rows".into()));
    }
    Ok((features, labels))
}

pub fn load_wdbc_csv(path: &Path) -> Result<Dataset> {
    let bytes = read_file(path)?;
    let text = std::str::from_utf8(&bytes).map_err(|e| Error::Format(format!("{}: not UTF-8: {e}", path.display())))?;
    let (features, labels) = parse_wdbc_csv(text)?;
    Dataset::new("wdbc", WDBC_FEATURES, features, labels)
}

/// Magic of the embedded-feature container.
pub const FEATURES_MAGIC: &[u8; 8] = b"LQFEAT01";
const FEATURES_HEADER: usize = 8 + 8 + 8 + 1;

/// Embedded-feature container:
///
/// ```text
/// "LQFEAT01" | u64 N | u64 D | u8 has_labels | N·D f32 (LE, row-major) | N u8 labels
/// ```
pub fn parse_features(bytes: &[u8], source: &Path) -> Result<Dataset> {
    let fmt = |msg: String| Error::Format(format!("{}: {msg}", source.display()));
    if bytes.len() < FEATURES_HEADER {
        return Err(fmt(format!(
            "header needs {FEATURES_HEADER} bytes, file has {}",
            bytes.len()
        )));
    }
    if &bytes[..8] != FEATURES_MAGIC {
        return Err(fmt("bad feature-file magic".into()));
    }
    let n = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    let d = u64::from_le_bytes(bytes[16..24].try_into().unwrap());
    let has_labels = bytes[24];
    if n == 0 {
        return Err(fmt("header declares zero samples".into()));
    }
    if d == 0 {
        return Err(fmt("header declares zero features".into()));
    }
    match has_labels {
        1 => {}
        0 => return Err(fmt("labels are required".into())),
        other => return Err(fmt(format!("label-presence flag {other} is not 0 or 1"))),
    }
    let payload = n
        .checked_mul(d)
        .and_then(|v| v.checked_mul(4))
        .and_then(|v| v.checked_add(n))
        .and_then(|v| v.checked_add(FEATURES_HEADER as u64));
    if payload != Some(bytes.len() as u64) {
        return Err(fmt(format!(
            "header declares N={n}, D={d} but the file has {} bytes",
            bytes.len()
        )));
    }
    let (n, d) = (n as usize, d as usize);
    let feat_end = FEATURES_HEADER + n * d * 4;
    let features = bytes[FEATURES_HEADER..feat_end]
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap())))
        .collect();
    let labels = bytes[feat_end..].to_vec();
    let name = source
        .file_name()
        .map_or_else(|| "features".into(), |s| s.to_string_lossy().into_owned());
    Dataset::new(name, d, features, labels).map_err(|e| match e {
        Error::Validation(m) => Error::Format(m),
        other => other,
    })
}

pub fn load_features(path: &Path) -> Result<Dataset> {
    parse_features(&read_file(path)?, path)
}

/// Serializes a dataset into the embedded-feature container (features narrowed to f32).
pub fn encode_features(ds: &Dataset) -> Vec<u8> {
    let mut out = Vec::with_capacity(FEATURES_HEADER + ds.features.len() * 4 + ds.len());
    out.extend_from_slice(FEATURES_MAGIC);
    out.extend_from_slice(&(ds.len() as u64).to_le_bytes());
    out.extend_from_slice(&(ds.dim as u64).to_le_bytes());
    out.push(1);
    for &v in &ds.features {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out.extend_from_slice(&ds.labels);
    out
}

pub fn write_features(path: &Path, ds: &Dataset) -> Result<()> {
    fs::write(path, encode_features(ds)).map_err(|e| Error::io(path, e))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitSpec {
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    /// Original labels mapped to 0 and 1.
    pub class_pair: (u8, u8),
    pub seed: u64,
}

/// Names accepted by [`SplitSpec::preset`].
pub const PRESETS: [&str; 5] = ["mnist", "fmnist", "wdbc", "cifar", "cifar-feat"];

impl SplitSpec {
    pub fn preset(name: &str, seed: u64) -> Result<Self> {
        let (n_train, n_val, n_test) = match name {
            "mnist" => (150, 50, 2115),
            "fmnist" => (150, 50, 2000),
            "wdbc" => (405, 50, 114),
            "cifar" | "cifar-feat" => (200, 100, 2000),
            _ => {
                return Err(Error::Config(format!(
                    "unknown preset `{name}` (expected one of {})",
                    PRESETS.join(", ")
                )))
            }
        };
        Ok(SplitSpec {
            n_train,
            n_val,
            n_test,
            class_pair: (0, 1),
            seed,
        })
    }

    pub fn total(&self) -> usize {
        self.n_train + self.n_val + self.n_test
    }
}

/// Keeps the two classes of `spec.class_pair` (relabelled `a → 0`, `b → 1`),
/// shuffles with the split seed and cuts disjoint train/val/test sets.
pub fn filter_and_split(raw: &Dataset, spec: &SplitSpec) -> Result<(Dataset, Dataset, Dataset)> {
    let (a, b) = spec.class_pair;
    if a == b {
        return Err(Error::Config(format!("class pair ({a}, {b}) names one class twice")));
    }
    let mut keep: Vec<usize> = (0..raw.len())
        .filter(|&i| raw.labels[i] == a || raw.labels[i] == b)
        .collect();
    let n_a = keep.iter().filter(|&&i| raw.labels[i] == a).count();
    let n_b = keep.len() - n_a;
    if n_a == 0 || n_b == 0 {
        return Err(Error::Validation(format!(
            "class pair ({a}, {b}) needs both classes; found {n_a} and {n_b} samples"
        )));
    }
    if spec.total() > keep.len() {
        return Err(Error::Validation(format!(
            "split needs {} samples ({} + {} + {}), only {} available ({n_a} of class {a}, {n_b} of class {b})",
            spec.total(),
            spec.n_train,
            spec.n_val,
            spec.n_test,
            keep.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    keep.shuffle(&mut rng);

    let relabelled = |name: &str, idx: &[usize]| -> Result<Dataset> {
        let mut ds = raw.subset(format!("{}-{name}", raw.name), idx)?;
        for y in &mut ds.labels {
            *y = u8::from(*y == b);
        }
        Ok(ds)
    };
    let (tr, rest) = keep.split_at(spec.n_train);
    let (va, rest) = rest.split_at(spec.n_val);
    let te = &rest[..spec.n_test];
    Ok((
        relabelled("train", tr)?,
        relabelled("val", va)?,
        relabelled("test", te)?,
    ))
}

/// Per-column z-scoring with statistics fitted on one dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    /// Population statistics; constant columns get unit scale.
    pub fn fit(ds: &Dataset) -> Self {
        let n = ds.len() as f64;
        let mut mean = vec![0.0; ds.dim];
        for i in 0..ds.len() {
            for (m, v) in mean.iter_mut().zip(ds.row(i)) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; ds.dim];
        for i in 0..ds.len() {
            for ((s, v), m) in var.iter_mut().zip(ds.row(i)).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 0.0 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Standardizer { mean, std }
    }

    pub fn apply(&self, ds: &Dataset) -> Result<Dataset> {
        if ds.dim != self.mean.len() {
            return Err(Error::Shape(format!(
                "standardizer fitted on {} columns, dataset has {}",
                self.mean.len(),
                ds.dim
            )));
        }
        let mut out = ds.clone();
        for row in out.features.chunks_exact_mut(ds.dim) {
            for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
                *v = (*v - m) / s;
            }
        }
        Ok(out)
    }
}

/// Z-scores all three splits with the training split's statistics.
pub fn standardize_splits(train: &Dataset, val: &Dataset, test: &Dataset) -> Result<(Dataset, Dataset, Dataset)> {
    let s = Standardizer::fit(train);
    Ok((s.apply(train)?, s.apply(val)?, s.apply(test)?))
}
