use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{load_sequence, resample, DataError, LabelSpace, SensorSequence, SequenceSchema};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "val" | "validation" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split `{other}` (expected train, val or test)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecordingEntry {
    /// CSV path, relative to the manifest file.
    pub path: PathBuf,
    pub split: Split,
    #[serde(default)]
    pub subject: Option<String>,
    #[serde(default)]
    pub run: Option<String>,
    /// Overrides the dataset-wide rate for this file.
    #[serde(default)]
    pub sample_rate_hz: Option<f64>,
}

/// JSON description of a dataset: label names, rates and the recordings of
/// each split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub labels: Vec<String>,
    #[serde(default)]
    pub null_label: Option<String>,
    pub sample_rate_hz: f64,
    /// Downsampling target; recordings already at or below it are kept as is.
    #[serde(default)]
    pub target_rate_hz: Option<f64>,
    /// Channel columns to use, in order. Defaults to every non-label column.
    #[serde(default)]
    pub channels: Option<Vec<String>>,
    #[serde(default = "default_label_column")]
    pub label_column: String,
    pub recordings: Vec<RecordingEntry>,
    #[serde(skip)]
    pub(crate) base_dir: PathBuf,
}

fn default_label_column() -> String {
    "label".into()
}

impl DatasetManifest {
    pub fn load(path: &Path) -> Result<Self, DataError> {
        let text = std::fs::read_to_string(path).map_err(|source| DataError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut manifest: Self = serde_json::from_str(&text)
            .map_err(|e| DataError::Manifest(format!("{}: {e}", path.display())))?;
        manifest.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        manifest.label_space()?;
        Ok(manifest)
    }

    pub fn with_base_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.base_dir = dir.into();
        self
    }

    pub fn label_space(&self) -> Result<LabelSpace, DataError> {
        LabelSpace::new(self.labels.clone(), self.null_label.as_deref())
    }

    pub fn entries(&self, split: Split) -> impl Iterator<Item = &RecordingEntry> {
        self.recordings.iter().filter(move |r| r.split == split)
    }

    pub fn resolve(&self, entry: &RecordingEntry) -> PathBuf {
        if entry.path.is_absolute() {
            entry.path.clone()
        } else {
            self.base_dir.join(&entry.path)
        }
    }

    /// Checks that every referenced file exists.
    pub fn check_paths(&self) -> Result<(), DataError> {
        for entry in &self.recordings {
            let p = self.resolve(entry);
            if !p.is_file() {
                return Err(DataError::Manifest(format!("recording not found: {}", p.display())));
            }
        }
        Ok(())
    }

    /// Loads and (where the rates allow) downsamples every recording of a split.
    pub fn load_split(&self, split: Split) -> Result<Vec<SensorSequence>, DataError> {
        let labels = self.label_space()?;
        let mut out = Vec::new();
        for entry in self.entries(split) {
            let rate = entry.sample_rate_hz.unwrap_or(self.sample_rate_hz);
            let schema = SequenceSchema {
                channels: self.channels.clone(),
                label_column: self.label_column.clone(),
                sample_rate_hz: rate,
            };
            let mut seq = load_sequence(&self.resolve(entry), &schema, &labels)?;
            seq.subject = entry.subject.clone();
            seq.run = entry.run.clone();
            if let Some(target) = self.target_rate_hz {
                if target < rate {
                    seq = resample(&seq, target)?;
                }
            }
            out.push(seq);
        }
        if let Some(first) = out.first() {
            let d = first.channels();
            if let Some(bad) = out.iter().find(|s| s.channels() != d) {
                return Err(DataError::ChannelMismatch {
                    expected: d,
                    got: bad.channels(),
                });
            }
        }
        Ok(out)
    }
}
