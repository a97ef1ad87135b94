use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Result, SessError};
use crate::metrics::BBox;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectAnnotation {
    pub class: usize,
    pub bbox: BBox,
}

/// One line of a JSON-lines dataset manifest.
///
/// Insertion/deletion runs need `class`; pointing runs need `objects`.
/// Relative image paths are resolved against the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub image: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class: Option<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub objects: Vec<ObjectAnnotation>,
    #[serde(default)]
    pub difficult: bool,
}

impl DatasetRecord {
    /// Distinct annotated classes, ascending.
    pub fn classes(&self) -> Vec<usize> {
        let mut c: Vec<usize> = self.objects.iter().map(|o| o.class).collect();
        c.sort_unstable();
        c.dedup();
        c
    }

    pub fn boxes_for(&self, class: usize) -> Vec<BBox> {
        self.objects
            .iter()
            .filter(|o| o.class == class)
            .map(|o| o.bbox)
            .collect()
    }
}

pub fn parse_dataset(text: &str, base_dir: &Path) -> Result<Vec<DatasetRecord>> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut rec: DatasetRecord = serde_json::from_str(line)
            .map_err(|e| SessError::invalid(format!("manifest line {}: {e}", lineno + 1)))?;
        if rec.image.is_relative() {
            rec.image = base_dir.join(&rec.image);
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Vec<DatasetRecord>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| SessError::io(path, e))?;
    parse_dataset(&text, path.parent().unwrap_or(Path::new(".")))
}
