use std::collections::HashMap;
use std::io::{BufRead, BufReader, Read};
use std::path::{Path, PathBuf};

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// One visual question to collect.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VqaTask {
    pub sample_id: String,
    pub question: String,
    /// Local path, `http(s)://` URL or `data:` URL.
    pub image_ref: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub green_score: Option<f64>,
}

#[derive(Debug, Error)]
pub enum TaskError {
    #[error("cannot read tasks: {0}")]
    Io(#[from] std::io::Error),
    #[error("task line {line}: {detail}")]
    Malformed { line: usize, detail: String },
    #[error("task line {line}: duplicate sample_id {id:?} (first at line {first})")]
    DuplicateId { line: usize, id: String, first: usize },
    #[error("task line {line}: green_score {value} outside [0, 1]")]
    GreenOutOfRange { line: usize, value: f64 },
}

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("cannot read image {path}: {source}")]
    Read { path: String, source: std::io::Error },
    #[error("image {0} is empty")]
    Empty(String),
}

impl VqaTask {
    /// The reference sent in the image attachment. Local files are inlined
    /// as base64 data URLs; remote and data URLs pass through unchanged.
    pub fn image_url(&self) -> Result<String, ImageError> {
        let r = self.image_ref.as_str();
        if r.starts_with("http://") || r.starts_with("https://") || r.starts_with("data:") {
            return Ok(r.to_owned());
        }
        let bytes = std::fs::read(r).map_err(|source| ImageError::Read {
            path: r.to_owned(),
            source,
        })?;
        if bytes.is_empty() {
            return Err(ImageError::Empty(r.to_owned()));
        }
        Ok(format!("data:{};base64,{}", mime_for(Path::new(r)), STANDARD.encode(bytes)))
    }
}

fn mime_for(path: &Path) -> &'static str {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase);
    match ext.as_deref() {
        Some("png") => "image/png",
        Some("jpg" | "jpeg") => "image/jpeg",
        Some("gif") => "image/gif",
        Some("webp") => "image/webp",
        Some("bmp") => "image/bmp",
        Some("tif" | "tiff") => "image/tiff",
        _ => "application/octet-stream",
    }
}

/// Reads a JSONL tasks file. Relative image paths are resolved against the
/// file's directory.
pub fn read_tasks_file(path: &Path) -> Result<Vec<VqaTask>, TaskError> {
    let file = std::fs::File::open(path)?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    read_tasks(file, &base)
}

pub fn read_tasks<R: Read>(reader: R, base_dir: &Path) -> Result<Vec<VqaTask>, TaskError> {
    let mut tasks = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    for (idx, line) in BufReader::new(reader).lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut task: VqaTask = serde_json::from_str(&line).map_err(|e| TaskError::Malformed {
            line: line_no,
            detail: e.to_string(),
        })?;
        if let Some(g) = task.green_score {
            if !(0.0..=1.0).contains(&g) {
                return Err(TaskError::GreenOutOfRange { line: line_no, value: g });
            }
        }
        if let Some(&first) = seen.get(&task.sample_id) {
            return Err(TaskError::DuplicateId {
                line: line_no,
                id: task.sample_id,
                first,
            });
        }
        seen.insert(task.sample_id.clone(), line_no);
        task.image_ref = resolve(&task.image_ref, base_dir);
        tasks.push(task);
    }
    Ok(tasks)
}

fn resolve(image_ref: &str, base_dir: &Path) -> String {
    let is_url = ["http://", "https://", "data:"].iter().any(|p| image_ref.starts_with(p));
    if is_url || Path::new(image_ref).is_absolute() {
        return image_ref.to_owned();
    }
    let joined: PathBuf = base_dir.join(image_ref);
    joined.to_string_lossy().into_owned()
}
