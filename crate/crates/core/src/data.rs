//! Dataset ingestion, synthetic generation and stratified splitting.
//!
//! Every source is normalized to features in `[0, 1]` at load time. Class
//! indices are dense `0..C`; `C` defaults to `max label + 1`.

use crate::config::{format_f64, ConfigError, KeyValues};
use crate::rng::{Prng, Stream};
use std::fmt;
use std::path::Path;
use thiserror::Error;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: bad IDX magic {found:#010x}, expected {expected:#010x}")]
    BadMagic {
        path: String,
        expected: u32,
        found: u32,
    },
    #[error("{path}: truncated, expected {expected} bytes but found {found}")]
    Truncated {
        path: String,
        expected: usize,
        found: usize,
    },
    #[error("image file holds {images} items but label file holds {labels}")]
    CountMismatch { images: usize, labels: usize },
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("row {row}, column `{column}`: `{value}` is not a number")]
    NonNumeric {
        row: usize,
        column: String,
        value: String,
    },
    #[error("row {row}: label `{value}` is not a non-negative integer")]
    NonIntegerLabel { row: usize, value: String },
    #[error("row {row}: expected {expected} fields, found {found}")]
    Ragged {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("label {label} at sample {index} is outside 0..{classes}")]
    LabelOutOfRange {
        index: usize,
        label: u32,
        classes: usize,
    },
    #[error("invalid dataset: {0}")]
    Invalid(String),
    #[error("invalid split: {0}")]
    Split(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SplitTag {
    Train,
    Val,
    Test,
}

impl fmt::Display for SplitTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SplitTag::Train => "train",
            SplitTag::Val => "val",
            SplitTag::Test => "test",
        })
    }
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(mut hash: u64, bytes: &[u8]) -> u64 {
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(FNV_PRIME);
    }
    hash
}

/// FNV-1a over each sample's little-endian feature bytes followed by its label, in index order.
pub fn fingerprint(features: &[f64], dim: usize, labels: &[u32]) -> u64 {
    let mut hash = FNV_OFFSET;
    for (i, &label) in labels.iter().enumerate() {
        for v in &features[i * dim..(i + 1) * dim] {
            hash = fnv1a(hash, &v.to_le_bytes());
        }
        hash = fnv1a(hash, &label.to_le_bytes());
    }
    hash
}

/// Labelled feature matrix with split tags.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetBundle {
    /// Row-major `N × dim`.
    pub features: Vec<f64>,
    pub dim: usize,
    pub labels: Vec<u32>,
    /// Row-major `N × class_count`.
    pub one_hot: Vec<f64>,
    pub class_count: usize,
    pub split_tags: Vec<SplitTag>,
    pub fingerprint: u64,
}

impl DatasetBundle {
    /// Builds a bundle with every sample tagged `Train`.
    pub fn new(
        features: Vec<f64>,
        dim: usize,
        labels: Vec<u32>,
        class_count: usize,
    ) -> Result<Self, DataError> {
        if dim == 0 {
            return Err(DataError::Invalid("feature dimension is zero".into()));
        }
        if class_count == 0 {
            return Err(DataError::Invalid("class count is zero".into()));
        }
        if features.len() != labels.len() * dim {
            return Err(DataError::Invalid(format!(
                "{} feature values do not form {} rows of width {dim}",
                features.len(),
                labels.len()
            )));
        }
        if let Some(i) = features.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(DataError::Invalid(format!(
                "feature value {} at sample {} is outside [0, 1]",
                features[i],
                i / dim
            )));
        }
        if let Some((index, &label)) = labels
            .iter()
            .enumerate()
            .find(|(_, &l)| l as usize >= class_count)
        {
            return Err(DataError::LabelOutOfRange {
                index,
                label,
                classes: class_count,
            });
        }
        let mut one_hot = vec![0.0; labels.len() * class_count];
        for (i, &l) in labels.iter().enumerate() {
            one_hot[i * class_count + l as usize] = 1.0;
        }
        let fingerprint = fingerprint(&features, dim, &labels);
        Ok(Self {
            split_tags: vec![SplitTag::Train; labels.len()],
            features,
            dim,
            labels,
            one_hot,
            class_count,
            fingerprint,
        })
    }

    /// Infers `C = max label + 1`.
    pub fn with_inferred_classes(features: Vec<f64>, dim: usize, labels: Vec<u32>) -> Result<Self, DataError> {
        let classes = labels.iter().max().map_or(0, |&m| m as usize + 1);
        Self::new(features, dim, labels, classes)
    }

    /// Overrides the class count, keeping features and tags.
    pub fn with_class_count(self, class_count: usize) -> Result<Self, DataError> {
        let tags = self.split_tags;
        let mut out = Self::new(self.features, self.dim, self.labels, class_count)?;
        out.split_tags = tags;
        Ok(out)
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

    pub fn one_hot_row(&self, i: usize) -> &[f64] {
        &self.one_hot[i * self.class_count..(i + 1) * self.class_count]
    }

    pub fn indices_of(&self, tag: SplitTag) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.split_tags[i] == tag).collect()
    }

    /// New bundle of the given rows, in the given order, keeping their tags.
    pub fn subset(&self, indices: &[usize]) -> Result<Self, DataError> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.len()) {
            return Err(DataError::Invalid(format!(
                "index {bad} out of range for {} samples",
                self.len()
            )));
        }
        let mut features = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            features.extend_from_slice(self.row(i));
        }
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        let mut out = Self::new(features, self.dim, labels, self.class_count)?;
        out.split_tags = indices.iter().map(|&i| self.split_tags[i]).collect();
        Ok(out)
    }

    /// The rows carrying `tag`, in original order.
    pub fn part(&self, tag: SplitTag) -> Result<Self, DataError> {
        self.subset(&self.indices_of(tag))
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>, DataError> {
    std::fs::read(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn be_u32(bytes: &[u8], offset: usize, path: &Path) -> Result<u32, DataError> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes(b.try_into().unwrap()))
        .ok_or_else(|| DataError::Truncated {
            path: path.display().to_string(),
            expected: offset + 4,
            found: bytes.len(),
        })
}

fn check_magic(bytes: &[u8], expected: u32, path: &Path) -> Result<(), DataError> {
    let found = be_u32(bytes, 0, path)?;
    if found != expected {
        return Err(DataError::BadMagic {
            path: path.display().to_string(),
            expected,
            found,
        });
    }
    Ok(())
}

/// Loads an IDX image file (`n × rows × cols` unsigned bytes) and its label file.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<DatasetBundle, DataError> {
    let images = read_file(images_path)?;
    let labels = read_file(labels_path)?;
    check_magic(&images, IDX_IMAGES_MAGIC, images_path)?;
    check_magic(&labels, IDX_LABELS_MAGIC, labels_path)?;

    let n_images = be_u32(&images, 4, images_path)? as usize;
    let rows = be_u32(&images, 8, images_path)? as usize;
    let cols = be_u32(&images, 12, images_path)? as usize;
    let n_labels = be_u32(&labels, 4, labels_path)? as usize;
    if n_images != n_labels {
        return Err(DataError::CountMismatch {
            images: n_images,
            labels: n_labels,
        });
    }
    let dim = rows * cols;
    let image_end = 16 + n_images * dim;
    if images.len() < image_end {
        return Err(DataError::Truncated {
            path: images_path.display().to_string(),
            expected: image_end,
            found: images.len(),
        });
    }
    let label_end = 8 + n_labels;
    if labels.len() < label_end {
        return Err(DataError::Truncated {
            path: labels_path.display().to_string(),
            expected: label_end,
            found: labels.len(),
        });
    }
    let features = images[16..image_end]
        .iter()
        .map(|&p| p as f64 / 255.0)
        .collect();
    let labels = labels[8..label_end].iter().map(|&l| l as u32).collect();
    DatasetBundle::with_inferred_classes(features, dim, labels)
}

/// Loads a headed numeric CSV; `label_column` names the class column and the
/// remaining columns are min-max normalized independently.
pub fn load_csv(path: &Path, label_column: &str) -> Result<DatasetBundle, DataError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => DataError::Io {
                path: path.display().to_string(),
                source: std::io::Error::other(e.to_string()),
            },
            _ => DataError::Csv(e),
        })?;
    let headers: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let label_idx = headers
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| DataError::MissingColumn(label_column.to_string()))?;
    let dim = headers.len() - 1;
    if dim == 0 {
        return Err(DataError::Invalid("no feature columns".into()));
    }

    let mut raw = Vec::new();
    let mut labels = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record?;
        let row = r + 1;
        if record.len() != headers.len() {
            return Err(DataError::Ragged {
                row,
                expected: headers.len(),
                found: record.len(),
            });
        }
        for (c, cell) in record.iter().enumerate() {
            let cell = cell.trim();
            if c == label_idx {
                let label = cell
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.fract() == 0.0 && *v >= 0.0 && *v <= u32::MAX as f64)
                    .ok_or_else(|| DataError::NonIntegerLabel {
                        row,
                        value: cell.to_string(),
                    })?;
                labels.push(label as u32);
            } else {
                let v = cell
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| DataError::NonNumeric {
                        row,
                        column: headers[c].clone(),
                        value: cell.to_string(),
                    })?;
                raw.push(v);
            }
        }
    }

    let n = labels.len();
    for c in 0..dim {
        let (lo, hi) = (0..n)
            .map(|i| raw[i * dim + c])
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
        let range = hi - lo;
        for i in 0..n {
            let v = &mut raw[i * dim + c];
            *v = if range > 0.0 { ((*v - lo) / range).clamp(0.0, 1.0) } else { 0.0 };
        }
    }
    DatasetBundle::with_inferred_classes(raw, dim, labels)
}

/// Parameters of the synthetic Gaussian blob generator.
///
/// Classes 0 and 1 form the confusable pair: their noise std is
/// `within_std + overlap_boost`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlobSpec {
    pub class_count: usize,
    pub dim: usize,
    pub samples_per_class: usize,
    pub center_spread: f64,
    pub within_std: f64,
    pub overlap_boost: f64,
    pub seed: u64,
}

impl Default for BlobSpec {
    fn default() -> Self {
        Self {
            class_count: 3,
            dim: 32,
            samples_per_class: 1000,
            center_spread: 3.0,
            within_std: 1.0,
            overlap_boost: 0.0,
            seed: 0,
        }
    }
}

impl BlobSpec {
    pub fn validate(&self) -> Result<(), DataError> {
        let bad = |m: &str| Err(DataError::Invalid(format!("blob spec: {m}")));
        if self.class_count < 2 {
            return bad("class_count must be at least 2");
        }
        if self.dim == 0 || self.samples_per_class == 0 {
            return bad("dim and samples_per_class must be positive");
        }
        if !(self.center_spread > 0.0 && self.center_spread.is_finite()) {
            return bad("center_spread must be positive");
        }
        if !(self.within_std >= 0.0 && self.within_std.is_finite()) {
            return bad("within_std must be non-negative");
        }
        if !(self.overlap_boost >= 0.0 && self.overlap_boost.is_finite()) {
            return bad("overlap_boost must be non-negative");
        }
        Ok(())
    }

    pub fn to_kv(&self) -> String {
        format!(
            "class_count={}\ndim={}\nsamples_per_class={}\ncenter_spread={}\nwithin_std={}\noverlap_boost={}\nseed={}\n",
            self.class_count,
            self.dim,
            self.samples_per_class,
            format_f64(self.center_spread),
            format_f64(self.within_std),
            format_f64(self.overlap_boost),
            self.seed
        )
    }

    /// Missing keys fall back to [`BlobSpec::default`].
    pub fn from_kv(mut kv: KeyValues) -> Result<Self, DataError> {
        let d = Self::default();
        let spec = Self {
            class_count: kv.take("class_count")?.unwrap_or(d.class_count),
            dim: kv.take("dim")?.unwrap_or(d.dim),
            samples_per_class: kv.take("samples_per_class")?.unwrap_or(d.samples_per_class),
            center_spread: kv.take("center_spread")?.unwrap_or(d.center_spread),
            within_std: kv.take("within_std")?.unwrap_or(d.within_std),
            overlap_boost: kv.take("overlap_boost")?.unwrap_or(d.overlap_boost),
            seed: kv.take("seed")?.unwrap_or(d.seed),
        };
        kv.finish()?;
        spec.validate()?;
        Ok(spec)
    }
}

/// Class centers: `center_spread` times a Gram–Schmidt-orthonormalized set of
/// Gaussian directions. With more classes than dimensions the surplus
/// directions are only normalized.
fn blob_centers(spec: &BlobSpec, rng: &mut Prng) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(spec.class_count);
    for _ in 0..spec.class_count {
        let mut v: Vec<f64> = (0..spec.dim).map(|_| rng.normal()).collect();
        if basis.len() < spec.dim {
            for b in &basis {
                let dot: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= dot * y);
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
        v.iter_mut().for_each(|x| *x /= norm);
        basis.push(v);
    }
    basis
        .into_iter()
        .map(|v| v.into_iter().map(|x| x * spec.center_spread).collect())
        .collect()
}

/// Seeded Gaussian blobs, mapped into `[0, 1]^D` by one global affine map.
/// Samples are ordered class by class.
pub fn generate_blobs(spec: &BlobSpec) -> Result<DatasetBundle, DataError> {
    spec.validate()?;
    let mut rng = Prng::new(spec.seed, Stream::Blobs, 0);
    let centers = blob_centers(spec, &mut rng);
    let n = spec.class_count * spec.samples_per_class;
    let mut raw = Vec::with_capacity(n * spec.dim);
    let mut labels = Vec::with_capacity(n);
    for (c, center) in centers.iter().enumerate() {
        let std = if c < 2 {
            spec.within_std + spec.overlap_boost
        } else {
            spec.within_std
        };
        for _ in 0..spec.samples_per_class {
            raw.extend(center.iter().map(|&m| m + std * rng.normal()));
            labels.push(c as u32);
        }
    }
    let (lo, hi) = raw
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let range = hi - lo;
    for v in &mut raw {
        *v = if range > 0.0 { ((*v - lo) / range).clamp(0.0, 1.0) } else { 0.0 };
    }
    DatasetBundle::new(raw, spec.dim, labels, spec.class_count)
}

/// Stratified split. Per class, `round(train_frac · n)` samples go to train,
/// `round(val_frac · n)` (capped by what is left) to val, the rest to test.
pub fn split(
    bundle: &DatasetBundle,
    train_frac: f64,
    val_frac: f64,
    seed: u64,
) -> Result<DatasetBundle, DataError> {
    if !(train_frac > 0.0 && train_frac <= 1.0) {
        return Err(DataError::Split(format!("train fraction {train_frac} not in (0, 1]")));
    }
    if !(val_frac >= 0.0 && train_frac + val_frac <= 1.0 + 1e-12) {
        return Err(DataError::Split(format!(
            "val fraction {val_frac} must be non-negative with train + val <= 1"
        )));
    }
    let want_val = val_frac > 0.0;
    let want_test = train_frac + val_frac < 1.0 - 1e-12;
    let requested = 1 + want_val as usize + want_test as usize;

    let mut out = bundle.clone();
    for class in 0..bundle.class_count {
        let mut members: Vec<usize> = (0..bundle.len())
            .filter(|&i| bundle.labels[i] as usize == class)
            .collect();
        if members.is_empty() {
            continue;
        }
        let n = members.len();
        if n < requested {
            return Err(DataError::Split(format!(
                "class {class} has {n} samples, fewer than the {requested} splits requested"
            )));
        }
        Prng::new(seed, Stream::Split, class as u32).shuffle(&mut members);
        let mut n_train = ((train_frac * n as f64).round() as usize).clamp(1, n);
        let mut n_val = if want_val {
            ((val_frac * n as f64).round() as usize).min(n - n_train)
        } else {
            0
        };
        // Every requested split receives at least one sample of each class.
        if want_val && n_val == 0 {
            n_val = 1;
            n_train -= 1;
        }
        if want_test && n_train + n_val == n {
            if n_train > 1 {
                n_train -= 1;
            } else {
                n_val -= 1;
            }
        }
        for (rank, &i) in members.iter().enumerate() {
            out.split_tags[i] = if rank < n_train {
                SplitTag::Train
            } else if rank < n_train + n_val {
                SplitTag::Val
            } else {
                SplitTag::Test
            };
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn idx_images(n: u32, rows: u32, cols: u32, pixels: &[u8]) -> Vec<u8> {
        let mut b = IDX_IMAGES_MAGIC.to_be_bytes().to_vec();
        for v in [n, rows, cols] {
            b.extend(v.to_be_bytes());
        }
        b.extend(pixels);
        b
    }

    fn idx_labels(labels: &[u8]) -> Vec<u8> {
        let mut b = IDX_LABELS_MAGIC.to_be_bytes().to_vec();
        b.extend((labels.len() as u32).to_be_bytes());
        b.extend(labels);
        b
    }

    fn write(dir: &Path, name: &str, bytes: &[u8]) -> std::path::PathBuf {
        let p = dir.join(name);
        std::fs::File::create(&p).unwrap().write_all(bytes).unwrap();
        p
    }

    #[test]
    fn idx_two_image_fixture() {
        let dir = tempfile::tempdir().unwrap();
        let mut pixels = vec![0u8; 4];
        pixels.extend([255u8; 4]);
        let img = write(dir.path(), "img", &idx_images(2, 2, 2, &pixels));
        let lab = write(dir.path(), "lab", &idx_labels(&[0, 1]));
        let b = load_idx(&img, &lab).unwrap();
        assert_eq!((b.len(), b.dim, b.class_count), (2, 4, 2));
        assert_eq!(b.row(0), &[0.0; 4]);
        assert_eq!(b.row(1), &[1.0; 4]);
        assert_eq!(b.one_hot_row(1), &[0.0, 1.0]);
        // Reloading identical bytes gives the identical fingerprint.
        assert_eq!(load_idx(&img, &lab).unwrap().fingerprint, b.fingerprint);
    }

    #[test]
    fn idx_errors_are_distinct() {
        let dir = tempfile::tempdir().unwrap();
        let img3 = write(dir.path(), "img3", &idx_images(3, 1, 1, &[1, 2, 3]));
        let lab2 = write(dir.path(), "lab2", &idx_labels(&[0, 1]));
        assert!(matches!(
            load_idx(&img3, &lab2),
            Err(DataError::CountMismatch { images: 3, labels: 2 })
        ));

        let mut bad = idx_images(2, 1, 1, &[1, 2]);
        bad[3] = 0x02;
        let bad = write(dir.path(), "bad", &bad);
        assert!(matches!(load_idx(&bad, &lab2), Err(DataError::BadMagic { found: 0x0802, .. })));
        assert!(matches!(load_idx(&lab2, &lab2), Err(DataError::BadMagic { .. })));

        let short = write(dir.path(), "short", &idx_images(2, 2, 2, &[0; 5]));
        assert!(matches!(
            load_idx(&short, &lab2),
            Err(DataError::Truncated { expected: 24, found: 21, .. })
        ));
        let missing = dir.path().join("nope");
        assert!(matches!(load_idx(&missing, &lab2), Err(DataError::Io { .. })));
    }

    #[test]
    fn csv_normalization_and_classes() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "a.csv", b"x,label,k\n0,0,5\n10,1,5\n5,2,5\n");
        let b = load_csv(&p, "label").unwrap();
        assert_eq!(b.class_count, 3);
        assert_eq!(b.dim, 2);
        assert_eq!(b.features, vec![0.0, 0.0, 1.0, 0.0, 0.5, 0.0]);
        assert_eq!(b.labels, vec![0, 1, 2]);

        let p = write(dir.path(), "b.csv", b"f,y\n0,0\n10,1\n");
        assert_eq!(load_csv(&p, "y").unwrap().features, vec![0.0, 1.0]);
    }

    #[test]
    fn csv_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "a.csv", b"f,y\n1,0\n2,1\n3,0\n4,1\nabc,0\n");
        match load_csv(&p, "y") {
            Err(DataError::NonNumeric { row, column, value }) => {
                assert_eq!((row, column.as_str(), value.as_str()), (5, "f", "abc"));
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(load_csv(&p, "label"), Err(DataError::MissingColumn(c)) if c == "label"));
        let p = write(dir.path(), "b.csv", b"f,y\n1,0.5\n");
        assert!(matches!(load_csv(&p, "y"), Err(DataError::NonIntegerLabel { row: 1, .. })));
        let p = write(dir.path(), "c.csv", b"f,y\n1,-1\n");
        assert!(matches!(load_csv(&p, "y"), Err(DataError::NonIntegerLabel { .. })));
    }

    #[test]
    fn blobs_without_noise_sit_on_centers() {
        let spec = BlobSpec {
            class_count: 3,
            dim: 5,
            samples_per_class: 4,
            within_std: 0.0,
            overlap_boost: 0.0,
            seed: 3,
            ..BlobSpec::default()
        };
        let b = generate_blobs(&spec).unwrap();
        for c in 0..3 {
            let first = b.row(c * 4).to_vec();
            for i in 1..4 {
                assert_eq!(b.row(c * 4 + i), first.as_slice());
            }
        }
        assert_ne!(b.row(0), b.row(4));
    }

    #[test]
    fn blobs_are_deterministic_and_bounded() {
        let spec = BlobSpec {
            samples_per_class: 50,
            overlap_boost: 0.7,
            seed: 11,
            ..BlobSpec::default()
        };
        let a = generate_blobs(&spec).unwrap();
        assert_eq!(a, generate_blobs(&spec).unwrap());
        assert!(a.features.iter().all(|v| (0.0..=1.0).contains(v)));
        assert!(a.features.iter().any(|&v| v == 0.0) && a.features.iter().any(|&v| v == 1.0));
        let other = generate_blobs(&BlobSpec { seed: 12, ..spec.clone() }).unwrap();
        assert_ne!(a.fingerprint, other.fingerprint);
    }

    #[test]
    fn blob_spec_round_trip() {
        let spec = BlobSpec {
            center_spread: 2.25,
            within_std: 0.1,
            overlap_boost: 1.0 / 3.0,
            seed: 99,
            ..BlobSpec::default()
        };
        let back = BlobSpec::from_kv(KeyValues::parse(&spec.to_kv()).unwrap()).unwrap();
        assert_eq!(back, spec);
        assert!(BlobSpec::from_kv(KeyValues::parse("within_std=-1").unwrap()).is_err());
        assert!(BlobSpec::from_kv(KeyValues::parse("colour=red").unwrap()).is_err());
    }

    fn two_class(n_per: usize) -> DatasetBundle {
        let labels: Vec<u32> = (0..2 * n_per).map(|i| (i % 2) as u32).collect();
        let features = (0..2 * n_per).map(|i| i as f64 / (2 * n_per) as f64).collect();
        DatasetBundle::new(features, 1, labels, 2).unwrap()
    }

    #[test]
    fn split_stratifies() {
        let b = two_class(50);
        let s = split(&b, 0.8, 0.1, 1).unwrap();
        for class in 0..2u32 {
            let count = |tag| {
                (0..s.len())
                    .filter(|&i| s.labels[i] == class && s.split_tags[i] == tag)
                    .count()
            };
            assert_eq!(
                (count(SplitTag::Train), count(SplitTag::Val), count(SplitTag::Test)),
                (40, 5, 5)
            );
        }
        assert_eq!(s, split(&b, 0.8, 0.1, 1).unwrap());
        assert_ne!(s.split_tags, split(&b, 0.8, 0.1, 2).unwrap().split_tags);

        let all = split(&b, 1.0, 0.0, 1).unwrap();
        assert!(all.split_tags.iter().all(|&t| t == SplitTag::Train));
    }

    #[test]
    fn split_errors() {
        let b = two_class(50);
        assert!(matches!(split(&b, 0.0, 0.1, 1), Err(DataError::Split(_))));
        assert!(matches!(split(&b, 0.8, 0.3, 1), Err(DataError::Split(_))));
        let tiny = two_class(2);
        assert!(matches!(split(&tiny, 0.5, 0.25, 1), Err(DataError::Split(_))));
    }

    #[test]
    fn part_keeps_order_and_fingerprint_tracks_content() {
        let b = split(&two_class(10), 0.6, 0.2, 4).unwrap();
        let train = b.part(SplitTag::Train).unwrap();
        let idx = b.indices_of(SplitTag::Train);
        assert_eq!(train.len(), idx.len());
        for (k, &i) in idx.iter().enumerate() {
            assert_eq!(train.row(k), b.row(i));
        }
        assert_ne!(train.fingerprint, b.fingerprint);
        assert_eq!(train.fingerprint, b.part(SplitTag::Train).unwrap().fingerprint);
    }

    #[test]
    fn class_override() {
        let b = two_class(3).with_class_count(4).unwrap();
        assert_eq!(b.class_count, 4);
        assert_eq!(b.one_hot_row(0), &[1.0, 0.0, 0.0, 0.0]);
        assert!(two_class(3).with_class_count(1).is_err());
    }
}
