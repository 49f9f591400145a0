use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock, RwLock};

use serde::Serialize;
use volscan_core::features::ShellResult;
use volscan_core::intensity::{detect_cusp, Histogram, DEFAULT_BINS};
use volscan_core::volume::{DenseVolume, SparsePoints};
use volscan_core::wdbscan::io::ClusterSummary;
use volscan_core::wdbscan::{ClusterResult, ClusteringParams};

/// A loaded volume plus derived data cached per exact parameter value.
pub struct VolumeEntry {
    pub id: String,
    pub source: String,
    pub volume: DenseVolume,
    histograms: Mutex<HashMap<usize, Arc<Histogram>>>,
    auto_cusp: OnceLock<Option<f64>>,
    sparse: Mutex<HashMap<u64, Arc<SparsePoints>>>,
}

impl VolumeEntry {
    pub fn histogram(&self, bins: usize) -> volscan_core::Result<Arc<Histogram>> {
        if let Some(h) = self.histograms.lock().unwrap().get(&bins) {
            return Ok(h.clone());
        }
        let h = Arc::new(Histogram::from_volume(&self.volume, bins)?);
        Ok(self.histograms.lock().unwrap().entry(bins).or_insert(h).clone())
    }

    /// Cusp of the default-resolution histogram, used by `cutoff: "auto"`.
    pub fn auto_cusp(&self) -> Option<f64> {
        *self
            .auto_cusp
            .get_or_init(|| self.histogram(DEFAULT_BINS).ok().and_then(|h| detect_cusp(&h)))
    }

    pub fn sparse(&self, cutoff: f64) -> volscan_core::Result<Arc<SparsePoints>> {
        if let Some(p) = self.sparse.lock().unwrap().get(&cutoff.to_bits()) {
            return Ok(p.clone());
        }
        let p = Arc::new(self.volume.to_sparse(cutoff)?);
        Ok(self
            .sparse
            .lock()
            .unwrap()
            .entry(cutoff.to_bits())
            .or_insert(p)
            .clone())
    }
}

/// Requested cutoff: a number or the detected cusp.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(untagged)]
pub enum CutoffRequest {
    Value(f64),
    Auto(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum JobStatus {
    Pending,
    Running,
    Done,
    Failed,
}

/// Exact parameter tuple identifying a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RunKey {
    pub volume: usize,
    pub cutoff: u64,
    pub eps: u64,
    pub min_weight: u64,
    pub include_border: bool,
}

/// Immutable outcome of a finished clustering job.
pub struct Run {
    pub points: Arc<SparsePoints>,
    pub result: ClusterResult,
    pub summary: ClusterSummary,
    shells: Mutex<HashMap<(usize, usize), Arc<ShellResult>>>,
}

impl Run {
    pub fn new(points: Arc<SparsePoints>, result: ClusterResult, params: &ClusteringParams) -> Self {
        let summary = ClusterSummary::new(&result, &points, params);
        Self {
            points,
            result,
            summary,
            shells: Mutex::new(HashMap::new()),
        }
    }

    pub fn cached_shell(&self, cluster: usize, depth: usize) -> Option<Arc<ShellResult>> {
        self.shells.lock().unwrap().get(&(cluster, depth)).cloned()
    }

    pub fn store_shell(&self, s: ShellResult) -> Arc<ShellResult> {
        self.shells
            .lock()
            .unwrap()
            .entry((s.cluster_id, s.peel_depth))
            .or_insert_with(|| Arc::new(s))
            .clone()
    }
}

pub enum JobState {
    Pending,
    Running,
    Done { run: Arc<Run>, elapsed_ms: u64 },
    Failed { error: String },
}

pub struct Job {
    pub index: usize,
    pub volume: Arc<VolumeEntry>,
    pub cutoff_request: CutoffRequest,
    pub cutoff: f64,
    pub params: ClusteringParams,
    pub state: RwLock<JobState>,
}

impl Job {
    pub fn job_id(&self) -> String {
        format!("job-{}", self.index)
    }

    pub fn run_id(&self) -> String {
        format!("run-{}", self.index)
    }

    pub fn status(&self) -> JobStatus {
        match &*self.state.read().unwrap() {
            JobState::Pending => JobStatus::Pending,
            JobState::Running => JobStatus::Running,
            JobState::Done { .. } => JobStatus::Done,
            JobState::Failed { .. } => JobStatus::Failed,
        }
    }

    pub fn record(&self) -> JobRecord {
        let state = self.state.read().unwrap();
        let (status, error, elapsed_ms, n_clusters, n_points) = match &*state {
            JobState::Pending => (JobStatus::Pending, None, None, None, None),
            JobState::Running => (JobStatus::Running, None, None, None, None),
            JobState::Done { run, elapsed_ms } => (
                JobStatus::Done,
                None,
                Some(*elapsed_ms),
                Some(run.summary.n_clusters),
                Some(run.summary.n_points),
            ),
            JobState::Failed { error } => (JobStatus::Failed, Some(error.clone()), None, None, None),
        };
        JobRecord {
            job_id: self.job_id(),
            run_id: self.run_id(),
            volume_id: self.volume.id.clone(),
            status,
            error,
            cutoff_request: self.cutoff_request,
            cutoff: self.cutoff,
            params: self.params,
            elapsed_ms,
            n_clusters,
            n_points,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct JobRecord {
    pub job_id: String,
    pub run_id: String,
    pub volume_id: String,
    pub status: JobStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub cutoff_request: CutoffRequest,
    pub cutoff: f64,
    pub params: ClusteringParams,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub elapsed_ms: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_clusters: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_points: Option<usize>,
}

/// Shared service state. Locks guard only map lookups and inserts; all
/// compute runs outside them on immutable `Arc` data.
#[derive(Clone, Default)]
pub struct AppState {
    inner: Arc<Inner>,
}

#[derive(Default)]
struct Inner {
    volumes: RwLock<Vec<Arc<VolumeEntry>>>,
    jobs: RwLock<Vec<Arc<Job>>>,
    run_keys: Mutex<HashMap<RunKey, usize>>,
}

fn parse_id(s: &str, prefix: &str) -> Option<usize> {
    s.strip_prefix(prefix)?.parse().ok()
}

impl AppState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers an in-memory volume; `source` is reported back to clients.
    pub fn add_volume(&self, volume: DenseVolume, source: impl Into<String>) -> Arc<VolumeEntry> {
        let mut volumes = self.inner.volumes.write().unwrap();
        let entry = Arc::new(VolumeEntry {
            id: format!("vol-{}", volumes.len()),
            source: source.into(),
            volume,
            histograms: Mutex::new(HashMap::new()),
            auto_cusp: OnceLock::new(),
            sparse: Mutex::new(HashMap::new()),
        });
        volumes.push(entry.clone());
        entry
    }

    pub fn volume(&self, id: &str) -> Option<Arc<VolumeEntry>> {
        let i = parse_id(id, "vol-")?;
        self.inner.volumes.read().unwrap().get(i).cloned()
    }

    pub fn volumes(&self) -> Vec<Arc<VolumeEntry>> {
        self.inner.volumes.read().unwrap().clone()
    }

    pub fn job(&self, id: &str) -> Option<Arc<Job>> {
        let i = parse_id(id, "job-")?;
        self.inner.jobs.read().unwrap().get(i).cloned()
    }

    pub fn job_for_run(&self, run_id: &str) -> Option<Arc<Job>> {
        let i = parse_id(run_id, "run-")?;
        self.inner.jobs.read().unwrap().get(i).cloned()
    }

    pub fn jobs(&self) -> Vec<Arc<Job>> {
        self.inner.jobs.read().unwrap().clone()
    }

    /// Returns the job registered for `key`, or registers a new pending one.
    /// The flag is true when the job was newly created.
    pub fn job_for_key(
        &self,
        key: RunKey,
        make: impl FnOnce(usize) -> Job,
    ) -> (Arc<Job>, bool) {
        let mut keys = self.inner.run_keys.lock().unwrap();
        if let Some(&index) = keys.get(&key) {
            return (self.inner.jobs.read().unwrap()[index].clone(), false);
        }
        let mut jobs = self.inner.jobs.write().unwrap();
        let job = Arc::new(make(jobs.len()));
        keys.insert(key, job.index);
        jobs.push(job.clone());
        (job, true)
    }
}
