use std::collections::HashMap;
use std::str::FromStr;
use std::sync::{Arc, RwLock};
use std::time::Instant;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde_json::{json, Map, Value};
use volscan_core::export::{
    decimate, encode_point_cloud, isosurface, rasterize_cluster, DecimateMode, PointCloud,
    POINT_CLOUD_FORMAT_VERSION,
};
use volscan_core::features::{rank_clusters, shell_extract_with, RankKey, ShellResult};
use volscan_core::intensity::{detect_cusp, TransferFunction, DEFAULT_BINS};
use volscan_core::volume::{load_volume, SparsePoints};
use volscan_core::wdbscan::{ClusteringParams, DEFAULT_EPS};

use crate::error::{ApiError, ApiResult, FieldErrors};
use crate::state::{AppState, CutoffRequest, Job, JobState, Run, RunKey, VolumeEntry};
use crate::{FORMAT_HEADER, SCHEMA};

const DEFAULT_TARGET: usize = 50_000;

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/", get(info))
        .route("/volumes", post(add_volume).get(list_volumes))
        .route("/volumes/{id}", get(get_volume))
        .route("/volumes/{id}/histogram", get(histogram))
        .route("/volumes/{id}/cluster", post(start_cluster))
        .route("/jobs/{id}", get(get_job))
        .route("/runs", get(list_runs))
        .route("/runs/{rid}", get(get_run))
        .route("/runs/{rid}/clusters", get(ranked_clusters))
        .route("/runs/{rid}/clusters/{cid}/points", get(cluster_points))
        .route("/runs/{rid}/shell", post(shell))
        .route("/runs/{rid}/clusters/{cid}/shell/points", get(shell_points))
        .route("/runs/{rid}/clusters/{cid}/mesh", get(mesh))
        .with_state(state)
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(format!("worker failed: {e}")))?
}

fn json_object(body: &[u8]) -> ApiResult<Map<String, Value>> {
    match serde_json::from_slice::<Value>(body) {
        Ok(Value::Object(m)) => Ok(m),
        Ok(_) => Err(ApiError::field("body", "expected a JSON object")),
        Err(e) => Err(ApiError::field("body", format!("malformed JSON: {e}"))),
    }
}

fn number(obj: &Map<String, Value>, name: &str, default: Option<f64>, errs: &mut FieldErrors) -> f64 {
    match obj.get(name) {
        None | Some(Value::Null) => default.unwrap_or_else(|| {
            errs.add(name, "required");
            f64::NAN
        }),
        Some(v) => match v.as_f64() {
            Some(x) if x.is_finite() => x,
            _ => {
                errs.add(name, "must be a finite number");
                f64::NAN
            }
        },
    }
}

fn unsigned(obj: &Map<String, Value>, name: &str, errs: &mut FieldErrors) -> usize {
    match obj.get(name).and_then(Value::as_u64) {
        Some(x) => x as usize,
        None => {
            errs.add(name, "required non-negative integer");
            0
        }
    }
}

fn query<T: FromStr>(q: &HashMap<String, String>, name: &str, default: Option<T>, errs: &mut FieldErrors) -> Option<T> {
    match q.get(name) {
        None => {
            if default.is_none() {
                errs.add(name, "required");
            }
            default
        }
        Some(raw) => match raw.parse() {
            Ok(v) => Some(v),
            Err(_) => {
                errs.add(name, format!("cannot parse {raw:?}"));
                None
            }
        },
    }
}

fn volume(state: &AppState, id: &str) -> ApiResult<Arc<VolumeEntry>> {
    state
        .volume(id)
        .ok_or_else(|| ApiError::not_found(format!("unknown volume {id}")))
}

/// The finished run behind `rid`; pending runs conflict, failed ones report their error.
fn finished_run(state: &AppState, rid: &str) -> ApiResult<(Arc<Job>, Arc<Run>)> {
    let job = state
        .job_for_run(rid)
        .ok_or_else(|| ApiError::not_found(format!("unknown run {rid}")))?;
    let run = match &*job.state.read().unwrap() {
        JobState::Done { run, .. } => run.clone(),
        JobState::Pending | JobState::Running => {
            return Err(ApiError::conflict(format!("run {rid} has not finished")))
        }
        JobState::Failed { error } => return Err(ApiError::internal(format!("run {rid} failed: {error}"))),
    };
    Ok((job, run))
}

fn cluster_id(run: &Run, raw: &str) -> ApiResult<usize> {
    match raw.parse::<usize>() {
        Ok(c) if c < run.result.n_clusters => Ok(c),
        _ => Err(ApiError::not_found(format!("unknown cluster {raw}"))),
    }
}

fn binary(body: Vec<u8>, content_type: &'static str, extra: Vec<(&'static str, String)>) -> Response {
    let len = body.len();
    let mut resp = (StatusCode::OK, body).into_response();
    let h = resp.headers_mut();
    h.insert(header::CONTENT_TYPE, HeaderValue::from_static(content_type));
    h.insert(header::CONTENT_LENGTH, HeaderValue::from(len));
    h.insert(FORMAT_HEADER, HeaderValue::from(POINT_CLOUD_FORMAT_VERSION));
    for (name, value) in extra {
        if let Ok(v) = HeaderValue::from_str(&value) {
            h.insert(name, v);
        }
    }
    resp
}

struct Export {
    target: usize,
    mode: DecimateMode,
    seed: u64,
    transfer: Option<f64>,
}

fn export_params(q: &HashMap<String, String>, errs: &mut FieldErrors) -> Export {
    let target = query(q, "target", Some(DEFAULT_TARGET), errs).unwrap_or(1);
    if target == 0 {
        errs.add("target", "must be at least 1");
    }
    let mode = match q.get("mode").map(|m| m.parse::<DecimateMode>()) {
        None => DecimateMode::Stride,
        Some(Ok(m)) => m,
        Some(Err(e)) => {
            errs.add("mode", e.to_string());
            DecimateMode::Stride
        }
    };
    let seed = query(q, "seed", Some(0u64), errs).unwrap_or(0);
    let transfer = match q.get("alpha").map(String::as_str) {
        None | Some("cluster") => None,
        Some("transfer") => query::<f64>(q, "threshold", None, errs),
        Some(other) => {
            errs.add("alpha", format!("unknown alpha source {other:?} (cluster, transfer)"));
            None
        }
    };
    Export { target, mode, seed, transfer }
}

fn stream_points(points: &SparsePoints, job: &Job, e: &Export) -> ApiResult<Response> {
    let geometry = job.volume.volume.geometry();
    let kept = decimate(points, e.target, e.mode, e.seed);
    let cloud = match e.transfer {
        None => PointCloud::with_cluster_alpha(&kept, &geometry),
        Some(threshold) => {
            let tf = TransferFunction::new(job.cutoff.max(f64::MIN_POSITIVE), threshold)?;
            PointCloud::with_transfer(&kept, &geometry, &tf)
        }
    };
    let alpha = serde_json::to_string(&cloud.alpha_source).unwrap_or_default();
    Ok(binary(
        encode_point_cloud(&cloud),
        "application/octet-stream",
        vec![
            ("x-volscan-point-count", cloud.len().to_string()),
            ("x-volscan-source-count", points.len().to_string()),
            ("x-volscan-alpha", alpha),
        ],
    ))
}

async fn info() -> Json<Value> {
    Json(json!({
        "schema": SCHEMA,
        "service": "volscan",
        "version": env!("CARGO_PKG_VERSION"),
        "point_cloud_format": POINT_CLOUD_FORMAT_VERSION,
    }))
}

fn volume_json(v: &VolumeEntry) -> Value {
    json!({
        "schema": SCHEMA,
        "volume_id": v.id,
        "source": v.source,
        "dims": v.volume.dims(),
        "intensity_range": v.volume.value_range(),
        "geometry": v.volume.geometry(),
        "axis_labels": v.volume.axis_labels(),
    })
}

async fn add_volume(State(state): State<AppState>, body: Bytes) -> ApiResult<Json<Value>> {
    let obj = json_object(&body)?;
    let path = match obj.get("path").and_then(Value::as_str) {
        Some(p) if !p.is_empty() => p.to_string(),
        _ => return Err(ApiError::field("path", "required string")),
    };
    let entry = blocking(move || {
        let v = load_volume(&path)?;
        Ok(state.add_volume(v, path))
    })
    .await?;
    Ok(Json(volume_json(&entry)))
}

async fn list_volumes(State(state): State<AppState>) -> Json<Value> {
    let list: Vec<Value> = state.volumes().iter().map(|v| volume_json(v)).collect();
    Json(json!({ "schema": SCHEMA, "volumes": list }))
}

async fn get_volume(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let v = volume(&state, &id)?;
    Ok(Json(volume_json(&v)))
}

async fn histogram(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<HashMap<String, String>>,
) -> ApiResult<Json<Value>> {
    let v = volume(&state, &id)?;
    let mut errs = FieldErrors::default();
    let bins = query(&q, "bins", Some(DEFAULT_BINS), &mut errs).unwrap_or(DEFAULT_BINS);
    if bins < 2 {
        errs.add("bins", "need at least 2 bins");
    }
    errs.finish()?;
    let h = blocking(move || Ok(v.histogram(bins)?)).await?;
    let mut body = serde_json::to_value(&*h).map_err(|e| ApiError::internal(e.to_string()))?;
    body["schema"] = json!(SCHEMA);
    body["volume_id"] = json!(id);
    body["bins"] = json!(bins);
    body["cusp"] = json!(detect_cusp(&h));
    Ok(Json(body))
}

async fn start_cluster(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<Response> {
    let v = volume(&state, &id)?;
    let obj = json_object(&body)?;
    let mut errs = FieldErrors::default();
    let cutoff_request = match obj.get("cutoff") {
        Some(Value::String(s)) if s == "auto" => Some(CutoffRequest::Auto("auto")),
        Some(x) => match x.as_f64() {
            Some(c) if c.is_finite() => Some(CutoffRequest::Value(c)),
            _ => {
                errs.add("cutoff", "must be a finite number or \"auto\"");
                None
            }
        },
        None => {
            errs.add("cutoff", "required: a number or \"auto\"");
            None
        }
    };
    let eps = number(&obj, "eps", Some(DEFAULT_EPS), &mut errs);
    let min_weight = number(&obj, "min_weight", None, &mut errs);
    let include_border = match obj.get("include_border") {
        None => true,
        Some(Value::Bool(b)) => *b,
        Some(_) => {
            errs.add("include_border", "must be a boolean");
            true
        }
    };
    if eps.is_finite() && eps <= 0.0 {
        errs.add("eps", "must be positive");
    }
    if min_weight.is_finite() && min_weight <= 0.0 {
        errs.add("min_weight", "must be positive");
    }
    errs.finish()?;
    let cutoff_request = cutoff_request.expect("validated");
    let params = ClusteringParams {
        eps,
        min_weight,
        include_border,
    };
    params.validate()?;

    let cutoff = match cutoff_request {
        CutoffRequest::Value(c) => c,
        CutoffRequest::Auto(_) => {
            let v = v.clone();
            blocking(move || Ok(v.auto_cusp()))
                .await?
                .ok_or_else(|| ApiError::field("cutoff", "no cusp detected in the histogram; supply a numeric cutoff"))?
        }
    };
    let volume_index = id.trim_start_matches("vol-").parse().unwrap_or(usize::MAX);
    let key = RunKey {
        volume: volume_index,
        cutoff: cutoff.to_bits(),
        eps: eps.to_bits(),
        min_weight: min_weight.to_bits(),
        include_border,
    };
    let (job, created) = state.job_for_key(key, |index| Job {
        index,
        volume: v.clone(),
        cutoff_request,
        cutoff,
        params,
        state: RwLock::new(JobState::Pending),
    });
    if !created {
        let record = job.record();
        let status = match record.status {
            crate::JobStatus::Pending | crate::JobStatus::Running => StatusCode::CONFLICT,
            _ => StatusCode::OK,
        };
        let mut body = json!({
            "schema": SCHEMA,
            "job_id": record.job_id,
            "run_id": record.run_id,
            "status": record.status,
            "cached": true,
        });
        if status == StatusCode::CONFLICT {
            body["error"] = json!("a run with these parameters is already in progress");
            body["status_code"] = json!(409);
        }
        return Ok((status, Json(body)).into_response());
    }

    let worker = job.clone();
    tokio::task::spawn_blocking(move || run_job(&worker));
    let body = json!({
        "schema": SCHEMA,
        "job_id": job.job_id(),
        "run_id": job.run_id(),
        "status": job.status(),
        "cached": false,
    });
    Ok((StatusCode::ACCEPTED, Json(body)).into_response())
}

fn run_job(job: &Job) {
    *job.state.write().unwrap() = JobState::Running;
    let start = Instant::now();
    let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| {
        let points = job.volume.sparse(job.cutoff)?;
        let result = volscan_core::wdbscan::cluster(&points, &job.params);
        Ok::<_, volscan_core::Error>(Run::new(points, result, &job.params))
    }));
    let state = match outcome {
        Ok(Ok(run)) => JobState::Done {
            run: Arc::new(run),
            elapsed_ms: start.elapsed().as_millis() as u64,
        },
        Ok(Err(e)) => JobState::Failed { error: e.to_string() },
        Err(panic) => JobState::Failed {
            error: panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "compute panicked".into()),
        },
    };
    if let JobState::Failed { error } = &state {
        log::error!("{} failed: {error}", job.job_id());
    }
    *job.state.write().unwrap() = state;
}

async fn get_job(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let job = state
        .job(&id)
        .ok_or_else(|| ApiError::not_found(format!("unknown job {id}")))?;
    let mut body = serde_json::to_value(job.record()).map_err(|e| ApiError::internal(e.to_string()))?;
    body["schema"] = json!(SCHEMA);
    Ok(Json(body))
}

async fn list_runs(State(state): State<AppState>) -> Json<Value> {
    let runs: Vec<_> = state.jobs().iter().map(|j| j.record()).collect();
    Json(json!({ "schema": SCHEMA, "runs": runs }))
}

async fn get_run(State(state): State<AppState>, Path(rid): Path<String>) -> ApiResult<Json<Value>> {
    let (job, run) = finished_run(&state, &rid)?;
    Ok(Json(json!({
        "schema": SCHEMA,
        "run": job.record(),
        "summary": run.summary,
    })))
}

async fn ranked_clusters(
    State(state): State<AppState>,
    Path(rid): Path<String>,
    Query(q): Query<HashMap<String, String>>,
) -> ApiResult<Json<Value>> {
    let (_, run) = finished_run(&state, &rid)?;
    let key = match q.get("key").map(|k| k.parse::<RankKey>()) {
        None => RankKey::Size,
        Some(Ok(k)) => k,
        Some(Err(e)) => return Err(ApiError::from(e)),
    };
    let clusters = blocking(move || Ok(rank_clusters(&run.result, &run.points, key))).await?;
    Ok(Json(json!({
        "schema": SCHEMA,
        "run_id": rid,
        "key": key,
        "clusters": clusters,
    })))
}

async fn cluster_points(
    State(state): State<AppState>,
    Path((rid, cid)): Path<(String, String)>,
    Query(q): Query<HashMap<String, String>>,
) -> ApiResult<Response> {
    let (job, run) = finished_run(&state, &rid)?;
    let cid = cluster_id(&run, &cid)?;
    let mut errs = FieldErrors::default();
    let e = export_params(&q, &mut errs);
    errs.finish()?;
    blocking(move || {
        let members = run.points.subset(run.result.members(cid));
        stream_points(&members, &job, &e)
    })
    .await
}

fn shell_of(job: &Job, run: &Run, cid: usize, depth: usize) -> ApiResult<Arc<ShellResult>> {
    if let Some(s) = run.cached_shell(cid, depth) {
        return Ok(s);
    }
    let s = shell_extract_with(&run.points, &job.params, &run.result, cid, depth)?;
    Ok(run.store_shell(s))
}

async fn shell(State(state): State<AppState>, Path(rid): Path<String>, body: Bytes) -> ApiResult<Json<Value>> {
    let (job, run) = finished_run(&state, &rid)?;
    let obj = json_object(&body)?;
    let mut errs = FieldErrors::default();
    let cid = unsigned(&obj, "cluster_id", &mut errs);
    let depth = match obj.get("depth") {
        None => 1,
        Some(_) => unsigned(&obj, "depth", &mut errs),
    };
    if depth == 0 {
        errs.add("depth", "must be at least 1");
    }
    errs.finish()?;
    let cid = cluster_id(&run, &cid.to_string())?;
    let s = blocking(move || shell_of(&job, &run, cid, depth)).await?;
    let mut body = serde_json::to_value(s.stats()).map_err(|e| ApiError::internal(e.to_string()))?;
    body["schema"] = json!(SCHEMA);
    body["run_id"] = json!(rid);
    Ok(Json(body))
}

async fn shell_points(
    State(state): State<AppState>,
    Path((rid, cid)): Path<(String, String)>,
    Query(q): Query<HashMap<String, String>>,
) -> ApiResult<Response> {
    let (job, run) = finished_run(&state, &rid)?;
    let cid = cluster_id(&run, &cid)?;
    let mut errs = FieldErrors::default();
    let depth = query(&q, "depth", Some(1usize), &mut errs).unwrap_or(1);
    if depth == 0 {
        errs.add("depth", "must be at least 1");
    }
    let e = export_params(&q, &mut errs);
    errs.finish()?;
    blocking(move || {
        let s = shell_of(&job, &run, cid, depth)?;
        stream_points(&s.shell, &job, &e)
    })
    .await
}

async fn mesh(
    State(state): State<AppState>,
    Path((rid, cid)): Path<(String, String)>,
    Query(q): Query<HashMap<String, String>>,
) -> ApiResult<Response> {
    let (job, run) = finished_run(&state, &rid)?;
    let cid = cluster_id(&run, &cid)?;
    let mut errs = FieldErrors::default();
    let iso = query::<f64>(&q, "iso", None, &mut errs);
    if iso.is_some_and(|x| !x.is_finite()) {
        errs.add("iso", "must be finite");
    }
    errs.finish()?;
    let iso = iso.expect("validated");
    blocking(move || {
        let raster = rasterize_cluster(&run.points, &run.result, cid)?;
        let physical = job.volume.volume.geometry().compose(&raster.geometry());
        let raster = raster.with_geometry(physical)?;
        let m = isosurface(&raster, iso)?;
        Ok(binary(
            m.to_obj_bytes(),
            "model/obj",
            vec![
                ("x-volscan-vertex-count", m.vertices.len().to_string()),
                ("x-volscan-triangle-count", m.triangles.len().to_string()),
            ],
        ))
    })
    .await
}
