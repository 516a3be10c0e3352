use std::collections::{HashMap, VecDeque};
use std::path::PathBuf;
use std::sync::mpsc::{sync_channel, Receiver, SyncSender, TrySendError};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::{SystemTime, UNIX_EPOCH};

use base64::engine::general_purpose::STANDARD;
use base64::Engine as _;
use boxforge_core::dataset::{encode_mask_png, encode_rgb_png, mask_palette};
use boxforge_core::metrics::{AlignmentReport, MatchMode};
use boxforge_core::seed::splitmix64;

use crate::api::{GenerateRequest, GenerationJob, GenerationResult, JobStatus};
use crate::engine::SampleEngine;

pub fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis() as u64)
}

/// In-memory job map with least-recently-used eviction of finished jobs.
/// Evicted jobs are written to the spill directory when one is configured.
pub struct JobStore {
    capacity: usize,
    jobs: HashMap<String, GenerationJob>,
    order: VecDeque<String>,
    spill: Option<PathBuf>,
}

impl JobStore {
    pub fn new(capacity: usize, spill: Option<PathBuf>) -> Self {
        Self {
            capacity: capacity.max(1),
            jobs: HashMap::new(),
            order: VecDeque::new(),
            spill,
        }
    }

    fn touch(&mut self, id: &str) {
        if let Some(pos) = self.order.iter().position(|x| x == id) {
            let v = self.order.remove(pos).expect("position is valid");
            self.order.push_back(v);
        }
    }

    pub fn insert(&mut self, job: GenerationJob) {
        self.order.push_back(job.id.clone());
        self.jobs.insert(job.id.clone(), job);
        while self.jobs.len() > self.capacity {
            let Some(pos) = self
                .order
                .iter()
                .position(|id| matches!(self.jobs[id].status, JobStatus::Done | JobStatus::Failed))
            else {
                break;
            };
            let id = self.order.remove(pos).expect("position is valid");
            let job = self.jobs.remove(&id).expect("ordered ids are stored");
            if let Some(dir) = &self.spill {
                let path = dir.join(format!("{id}.json"));
                if let Err(e) = std::fs::write(&path, serde_json::to_vec(&job).expect("job serializes")) {
                    log::warn!("could not spill job {id} to {}: {e}", path.display());
                }
            }
        }
    }

    pub fn get(&mut self, id: &str) -> Option<GenerationJob> {
        if let Some(job) = self.jobs.get(id).cloned() {
            self.touch(id);
            return Some(job);
        }
        let dir = self.spill.as_ref()?;
        // ids are generated hex strings; refuse anything that could be a path
        if !id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-') {
            return None;
        }
        let bytes = std::fs::read(dir.join(format!("{id}.json"))).ok()?;
        serde_json::from_slice(&bytes).ok()
    }

    pub fn remove(&mut self, id: &str) {
        self.jobs.remove(id);
        self.order.retain(|x| x != id);
    }

    pub fn len(&self) -> usize {
        self.jobs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.jobs.is_empty()
    }

    fn update(&mut self, id: &str, f: impl FnOnce(&mut GenerationJob)) {
        if let Some(job) = self.jobs.get_mut(id) {
            f(job);
        }
    }
}

/// Why a submission was refused.
#[derive(Debug, PartialEq, Eq)]
pub enum SubmitError {
    QueueFull,
    WorkerGone,
}

/// FIFO queue in front of one worker thread that owns sampling.
pub struct JobQueue {
    store: Arc<Mutex<JobStore>>,
    sender: SyncSender<String>,
    counter: Mutex<u64>,
    salt: u64,
    _worker: JoinHandle<()>,
}

fn run_job(engine: &dyn SampleEngine, req: &GenerateRequest) -> Result<GenerationResult, String> {
    let alphabet = engine.alphabet();
    let (image, mask) = engine.generate(req.height, req.width, &req.boxes, req.seed)?;
    if image.dim() != (req.height, req.width, 3) || mask.dim() != (req.height, req.width) {
        return Err(format!("engine returned {:?} / {:?} for a {}x{} request", image.dim(), mask.dim(), req.height, req.width));
    }
    let report = AlignmentReport::for_mask(mask.view(), &req.boxes, alphabet, MatchMode::SameClass);
    Ok(GenerationResult {
        image: STANDARD.encode(encode_rgb_png(image.view())),
        mask: STANDARD.encode(encode_mask_png(mask.view(), alphabet)),
        palette: mask_palette(alphabet.num_classes()),
        sae: report.sae_micro,
        ebr: report.ebr_average,
        steps: engine.num_steps(),
        seed: req.seed,
    })
}

fn worker_loop(engine: Arc<dyn SampleEngine>, store: Arc<Mutex<JobStore>>, rx: Receiver<String>) {
    let lock = || store.lock().unwrap_or_else(|p| p.into_inner());
    while let Ok(id) = rx.recv() {
        let mut req = None;
        lock().update(&id, |j| {
            j.status = JobStatus::Running;
            j.started_ms = Some(now_ms());
            req = Some(j.request.clone());
        });
        let Some(req) = req else { continue };
        let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| run_job(engine.as_ref(), &req)))
            .unwrap_or_else(|_| Err("sampling panicked".to_string()));
        lock().update(&id, |j| {
            j.finished_ms = Some(now_ms());
            match outcome {
                Ok(r) => {
                    j.status = JobStatus::Done;
                    j.result = Some(r);
                }
                Err(e) => {
                    log::warn!("job {id} failed: {e}");
                    j.status = JobStatus::Failed;
                    j.error = Some(e);
                }
            }
        });
    }
}

impl JobQueue {
    /// `depth` jobs may wait while one runs.
    pub fn start(engine: Arc<dyn SampleEngine>, depth: usize, capacity: usize, spill: Option<PathBuf>) -> Self {
        let store = Arc::new(Mutex::new(JobStore::new(capacity, spill)));
        let (sender, rx) = sync_channel(depth);
        let worker_store = store.clone();
        let worker = std::thread::Builder::new()
            .name("boxforge-sampler".into())
            .spawn(move || worker_loop(engine, worker_store, rx))
            .expect("spawn sampling worker");
        Self {
            store,
            sender,
            counter: Mutex::new(0),
            salt: splitmix64(now_ms()),
            _worker: worker,
        }
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, JobStore> {
        self.store.lock().unwrap_or_else(|p| p.into_inner())
    }

    pub fn submit(&self, request: GenerateRequest) -> Result<String, SubmitError> {
        let n = {
            let mut c = self.counter.lock().unwrap_or_else(|p| p.into_inner());
            *c += 1;
            *c
        };
        let id = format!("{:016x}", splitmix64(self.salt ^ n));
        self.lock().insert(GenerationJob {
            id: id.clone(),
            request,
            status: JobStatus::Queued,
            result: None,
            error: None,
            created_ms: now_ms(),
            started_ms: None,
            finished_ms: None,
        });
        match self.sender.try_send(id.clone()) {
            Ok(()) => Ok(id),
            Err(e) => {
                self.lock().remove(&id);
                Err(match e {
                    TrySendError::Full(_) => SubmitError::QueueFull,
                    TrySendError::Disconnected(_) => SubmitError::WorkerGone,
                })
            }
        }
    }

    pub fn get(&self, id: &str) -> Option<GenerationJob> {
        self.lock().get(id)
    }
}
