//! `--dataset` descriptors, loading and splitting.

use crate::error::HarnessError;
use ducs::config::KeyValues;
use ducs::data::{generate_blobs, load_csv, load_idx, split, BlobSpec, DatasetBundle, SplitTag};
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSource {
    Idx { images: PathBuf, labels: PathBuf },
    Csv { path: PathBuf, label_column: String },
    /// Generated blobs; `text` is the descriptor as given, kept for reports.
    Blobs { spec: BlobSpec, text: String },
}

impl FromStr for DatasetSource {
    type Err = HarnessError;

    /// `idx:IMAGES,LABELS`, `csv:PATH:LABELCOL` or `blobs:SPEC`, where SPEC is
    /// a key=value file, an inline `k=v,k=v` list, or empty for the defaults.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let usage = |m: &str| HarnessError::Usage(format!("--dataset `{s}`: {m}"));
        let (kind, rest) = s
            .split_once(':')
            .ok_or_else(|| usage("expected idx:IMAGES,LABELS | csv:PATH:LABELCOL | blobs:SPEC"))?;
        match kind {
            "idx" => {
                let (images, labels) = rest
                    .split_once(',')
                    .filter(|(a, b)| !a.is_empty() && !b.is_empty())
                    .ok_or_else(|| usage("idx needs IMAGES,LABELS"))?;
                Ok(DatasetSource::Idx {
                    images: images.into(),
                    labels: labels.into(),
                })
            }
            "csv" => {
                let (path, col) = rest
                    .rsplit_once(':')
                    .filter(|(a, b)| !a.is_empty() && !b.is_empty())
                    .ok_or_else(|| usage("csv needs PATH:LABELCOL"))?;
                Ok(DatasetSource::Csv {
                    path: path.into(),
                    label_column: col.into(),
                })
            }
            "blobs" => {
                let kv = if rest.is_empty() {
                    KeyValues::default()
                } else if rest.contains('=') {
                    KeyValues::parse_inline(rest)?
                } else {
                    KeyValues::read(rest.as_ref())?
                };
                let spec = BlobSpec::from_kv(kv).map_err(|e| usage(&e.to_string()))?;
                Ok(DatasetSource::Blobs {
                    spec,
                    text: s.to_string(),
                })
            }
            other => Err(usage(&format!("unknown dataset kind `{other}`"))),
        }
    }
}

impl fmt::Display for DatasetSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DatasetSource::Idx { images, labels } => {
                write!(f, "idx:{},{}", images.display(), labels.display())
            }
            DatasetSource::Csv { path, label_column } => {
                write!(f, "csv:{}:{label_column}", path.display())
            }
            DatasetSource::Blobs { text, .. } => f.write_str(text),
        }
    }
}

impl DatasetSource {
    pub fn load(&self) -> Result<DatasetBundle, HarnessError> {
        Ok(match self {
            DatasetSource::Idx { images, labels } => load_idx(images, labels)?,
            DatasetSource::Csv { path, label_column } => load_csv(path, label_column)?,
            DatasetSource::Blobs { spec, .. } => generate_blobs(spec)?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitPlan {
    pub train_frac: f64,
    pub val_frac: f64,
    pub seed: u64,
}

/// A loaded dataset cut into its three parts.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub source: DatasetSource,
    pub plan: SplitPlan,
    pub full: DatasetBundle,
    pub train: DatasetBundle,
    pub val: DatasetBundle,
    pub test: DatasetBundle,
}

impl Prepared {
    pub fn load(source: DatasetSource, plan: SplitPlan) -> Result<Self, HarnessError> {
        let full = split(&source.load()?, plan.train_frac, plan.val_frac, plan.seed)
            .map_err(|e| HarnessError::Usage(e.to_string()))?;
        let part = |tag| full.part(tag).map_err(HarnessError::from);
        Ok(Self {
            train: part(SplitTag::Train)?,
            val: part(SplitTag::Val)?,
            test: part(SplitTag::Test)?,
            full,
            source,
            plan,
        })
    }

    pub fn require_test(&self) -> Result<&DatasetBundle, HarnessError> {
        if self.test.is_empty() {
            return Err(HarnessError::Usage(
                "no test split: --train-frac + --val-frac must leave samples for testing".into(),
            ));
        }
        Ok(&self.test)
    }

    pub fn require_val(&self) -> Result<&DatasetBundle, HarnessError> {
        if self.val.is_empty() {
            return Err(HarnessError::Usage(
                "grid search evaluates on the validation split; set --val-frac > 0".into(),
            ));
        }
        Ok(&self.val)
    }

    /// Fails unless an artifact recorded for `fingerprint` belongs to this
    /// training split.
    pub fn check_fingerprint(&self, what: &str, fingerprint: u64, samples: usize) -> Result<(), HarnessError> {
        if fingerprint != self.train.fingerprint || samples != self.train.len() {
            return Err(HarnessError::Data(format!(
                "{what} was produced from a different dataset (fingerprint {fingerprint:#018x}, {samples} samples; \
                 this training split is {:#018x}, {} samples)",
                self.train.fingerprint,
                self.train.len()
            )));
        }
        Ok(())
    }
}
