use boxforge_core::BoundingBox;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateRequest {
    pub height: usize,
    pub width: usize,
    /// Order matters: earlier boxes win conditioning ties.
    pub boxes: Vec<BoundingBox>,
    #[serde(default)]
    pub seed: u64,
    /// Defaults to the checkpoint's full chain length.
    #[serde(default)]
    pub steps: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobStatus {
    Queued,
    Running,
    Done,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationResult {
    /// Base64 RGB PNG.
    pub image: String,
    /// Base64 palette PNG; pixel value `k` is class `k + 1`.
    pub mask: String,
    /// Display colour per class id, background first.
    pub palette: Vec<[u8; 3]>,
    pub sae: Option<f64>,
    pub ebr: Option<f64>,
    pub steps: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationJob {
    pub id: String,
    pub request: GenerateRequest,
    pub status: JobStatus,
    pub result: Option<GenerationResult>,
    pub error: Option<String>,
    /// Unix milliseconds.
    pub created_ms: u64,
    pub started_ms: Option<u64>,
    pub finished_ms: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub fields: Vec<FieldError>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobCreated {
    pub job_id: String,
}
