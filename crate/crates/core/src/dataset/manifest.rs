use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::DatasetError;
use crate::codec::ClassAlphabet;
use crate::geometry::BoundingBox;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    DiffusionTrain,
    SegTrain,
    Test,
    #[default]
    Unassigned,
}

impl Split {
    pub const ORDERED: [Split; 3] = [Split::DiffusionTrain, Split::SegTrain, Split::Test];
}

/// One line of `manifest.jsonl`. Paths are relative to the manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub image: String,
    pub mask: String,
    pub boxes: Vec<BoundingBox>,
    #[serde(default)]
    pub split: Split,
}

/// Records plus the class alphabet. The alphabet lives next to the JSONL
/// file as `<stem>.classes.json`.
#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub root: PathBuf,
    pub alphabet: ClassAlphabet,
    pub records: Vec<ManifestRecord>,
}

pub fn classes_path_for(manifest_path: &Path) -> PathBuf {
    let stem = manifest_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "manifest".into());
    manifest_path.with_file_name(format!("{stem}.classes.json"))
}

impl Manifest {
    pub fn new(root: impl Into<PathBuf>, alphabet: ClassAlphabet) -> Self {
        Self {
            root: root.into(),
            alphabet,
            records: Vec::new(),
        }
    }

    pub fn load(path: &Path) -> Result<Self, DatasetError> {
        let classes_path = classes_path_for(path);
        let classes = fs::read_to_string(&classes_path).map_err(|e| DatasetError::io(&classes_path, e))?;
        let alphabet: ClassAlphabet = serde_json::from_str(&classes).map_err(|source| DatasetError::MalformedJson {
            path: classes_path.clone(),
            line: source.line(),
            source,
        })?;
        let text = fs::read_to_string(path).map_err(|e| DatasetError::io(path, e))?;
        let mut records = Vec::new();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let rec: ManifestRecord = serde_json::from_str(line).map_err(|source| DatasetError::MalformedJson {
                path: path.to_path_buf(),
                line: n + 1,
                source,
            })?;
            records.push(rec);
        }
        let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let m = Self { root, alphabet, records };
        m.check_box_classes()?;
        Ok(m)
    }

    /// Writes the JSONL file and its classes sidecar.
    pub fn save(&self, path: &Path) -> Result<(), DatasetError> {
        if let Some(dir) = path.parent() {
            if !dir.as_os_str().is_empty() {
                fs::create_dir_all(dir).map_err(|e| DatasetError::io(dir, e))?;
            }
        }
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("records serialize"));
            out.push('\n');
        }
        fs::write(path, out).map_err(|e| DatasetError::io(path, e))?;
        let classes_path = classes_path_for(path);
        let classes = serde_json::to_string_pretty(&self.alphabet).expect("alphabet serializes");
        fs::write(&classes_path, classes).map_err(|e| DatasetError::io(&classes_path, e))
    }

    pub fn check_box_classes(&self) -> Result<(), DatasetError> {
        for (record, r) in self.records.iter().enumerate() {
            for (index, b) in r.boxes.iter().enumerate() {
                if b.class_id < 2 || !self.alphabet.contains(b.class_id) {
                    return Err(DatasetError::BoxClass {
                        record,
                        index,
                        class_id: b.class_id,
                    });
                }
            }
        }
        Ok(())
    }

    pub fn resolve(&self, relative: &str) -> PathBuf {
        self.root.join(relative)
    }

    pub fn indices_in(&self, split: Split) -> Vec<usize> {
        self.records
            .iter()
            .enumerate()
            .filter(|(_, r)| r.split == split)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn count(&self, split: Split) -> usize {
        self.records.iter().filter(|r| r.split == split).count()
    }
}
