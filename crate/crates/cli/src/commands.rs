use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde_json::{json, Value};
use volscan_core::export::{
    decimate, encode_point_cloud, isosurface, rasterize_cluster, DecimateMode, PointCloud,
};
use volscan_core::features::{rank_clusters, select, shell_extract_with, RankKey};
use volscan_core::intensity::{detect_cusp, Histogram, TransferFunction};
use volscan_core::volume::synth::{synth_diffuse, synth_solid, DiffuseSpec, SolidShape, SolidSpec};
use volscan_core::volume::{
    load_volume, read_sparse_jsonl, save_volume, write_sparse_jsonl, DenseVolume, Geometry,
    SparsePoints, VVOL_MAGIC,
};
use volscan_core::wdbscan::io::{
    decode_flags, decode_labels, encode_flags, encode_labels, result_from_parts, ClusterSummary,
};
use volscan_core::wdbscan::{cluster, ClusterResult, ClusteringParams, PointFlag};

use crate::args::*;
use crate::output::{document, with_suffix, CliError, PipelineConfig, Provenance};

type CliResult<T> = Result<T, CliError>;

pub fn run(cmd: Command) -> CliResult<Value> {
    match cmd {
        Command::Synth(a) => synth(a),
        Command::Hist(a) => hist(a),
        Command::Filter(a) => filter(a),
        Command::Cluster(a) => cluster_cmd(a),
        Command::Rank(a) => rank(a),
        Command::Shell(a) => shell(a),
        Command::Export(a) => export(a),
        Command::Serve(a) => serve(a),
    }
}

enum Input {
    Volume(DenseVolume),
    Points(SparsePoints),
}

fn read_input(path: &Path) -> CliResult<Input> {
    let mut magic = [0u8; 4];
    let mut f = File::open(path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    let n = f.read(&mut magic)?;
    if n == 4 && &magic == VVOL_MAGIC {
        return Ok(Input::Volume(load_volume(path)?));
    }
    let f = File::open(path)?;
    Ok(Input::Points(read_sparse_jsonl(f, None)?))
}

fn read_points(path: &Path) -> CliResult<SparsePoints> {
    match read_input(path)? {
        Input::Points(p) => Ok(p),
        Input::Volume(_) => Err(CliError::usage(
            "input",
            "expected a JSON-lines point set; run `filter` on volumes first",
        )),
    }
}

fn cusp_or_abort(h: &Histogram) -> CliResult<f64> {
    detect_cusp(h).ok_or_else(|| {
        CliError::data("no cusp found in the intensity histogram; supply --cutoff <value>")
    })
}

/// Resolves `request` ("auto" or a number) against `values`' histogram.
fn resolve_cutoff(request: &str, histogram: impl FnOnce() -> CliResult<Histogram>) -> CliResult<f64> {
    if request == "auto" {
        return cusp_or_abort(&histogram()?);
    }
    match request.parse::<f64>() {
        Ok(c) if c.is_finite() => Ok(c),
        _ => Err(CliError::usage("cutoff", format!("expected a number or \"auto\", got {request:?}"))),
    }
}

struct Resolved {
    points: SparsePoints,
    cutoff_request: Option<String>,
    cutoff: Option<f64>,
}

fn points_from(input: Input, cutoff: Option<&str>, bins: usize) -> CliResult<Resolved> {
    match input {
        Input::Volume(v) => {
            let request = cutoff.unwrap_or("auto");
            let c = resolve_cutoff(request, || Ok(Histogram::from_volume(&v, bins)?))?;
            Ok(Resolved {
                points: v.to_sparse(c)?,
                cutoff_request: Some(request.into()),
                cutoff: Some(c),
            })
        }
        Input::Points(p) => match cutoff {
            None => Ok(Resolved {
                points: p,
                cutoff_request: None,
                cutoff: None,
            }),
            Some(request) => {
                let c = resolve_cutoff(request, || Ok(Histogram::from_sparse(&p, bins)?))?;
                let keep: Vec<bool> = p.intensities().iter().map(|&w| w > c).collect();
                Ok(Resolved {
                    points: p.filter_mask(&keep),
                    cutoff_request: Some(request.into()),
                    cutoff: Some(c),
                })
            }
        },
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> CliResult<()> {
    std::fs::write(path, bytes).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

fn write_jsonl(path: &Path, points: &SparsePoints) -> CliResult<()> {
    let f = File::create(path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    write_sparse_jsonl(points, f)?;
    Ok(())
}

fn path_string(p: &Path) -> String {
    p.display().to_string()
}

fn synth(a: SynthArgs) -> CliResult<Value> {
    let spec_json: Option<Value> = match &a.spec {
        Some(p) => Some(serde_json::from_reader(File::open(p)?)?),
        None => None,
    };
    let (volume, truth, spec_value) = match a.kind {
        SynthKind::Diffuse => {
            let mut spec: DiffuseSpec = match spec_json {
                Some(v) => serde_json::from_value(v)?,
                None => DiffuseSpec::default(),
            };
            if let Some(d) = a.dims {
                spec.dims = d;
            }
            if let Some(n) = a.n_bragg {
                spec.n_bragg = n;
            }
            if let Some(n) = a.n_diffuse {
                spec.n_diffuse = n;
            }
            if a.min_gap.is_some() {
                spec.min_gap = a.min_gap;
            }
            let (v, t) = synth_diffuse(&spec, a.seed)?;
            (v, t, serde_json::to_value(&spec)?)
        }
        SynthKind::Solid => {
            let mut spec: SolidSpec = match spec_json {
                Some(v) => serde_json::from_value(v)?,
                None => SolidSpec {
                    shape: match a.shape {
                        ShapeArg::Sphere => SolidShape::Sphere { radius: a.radius },
                        ShapeArg::Cuboid => SolidShape::Cuboid {
                            half_extents: [a.radius; 3],
                        },
                        ShapeArg::Turbine => SolidShape::Turbine,
                    },
                    dims: [64; 3],
                    fill: a.fill,
                    noise: a.noise,
                    filaments: a.filaments,
                },
            };
            if let Some(d) = a.dims {
                spec.dims = d;
            }
            let (v, t) = synth_solid(&spec, a.seed)?;
            (v, t, serde_json::to_value(&spec)?)
        }
    };
    save_volume(&volume, &a.out)?;
    if let Some(p) = &a.truth {
        write_file(p, &encode_labels(&truth.labels))?;
    }
    let prov = Provenance::new(
        "synth",
        PipelineConfig {
            seed: Some(a.seed),
            generator: Some(spec_value),
            ..Default::default()
        },
    );
    Ok(document(
        "synth",
        json!({
            "path": path_string(&a.out),
            "dims": volume.dims(),
            "n_features": truth.n_features,
            "signal_voxels": truth.signal_count(),
            "truth": a.truth.as_deref().map(path_string),
        }),
        &prov,
    ))
}

fn hist(a: HistArgs) -> CliResult<Value> {
    let h = match read_input(&a.input.input)? {
        Input::Volume(v) => Histogram::from_volume(&v, a.bins)?,
        Input::Points(p) => Histogram::from_sparse(&p, a.bins)?,
    };
    if let Some(out) = &a.out {
        write_file(out, serde_json::to_string_pretty(&h)?.as_bytes())?;
    }
    let mut result = serde_json::to_value(&h)?;
    result["bins"] = json!(a.bins);
    result["cusp"] = json!(detect_cusp(&h));
    let prov = Provenance::new(
        "hist",
        PipelineConfig {
            input: Some(path_string(&a.input.input)),
            bins: Some(a.bins),
            ..Default::default()
        },
    );
    Ok(document("hist", result, &prov))
}

fn filter(a: FilterArgs) -> CliResult<Value> {
    let r = points_from(read_input(&a.input.input)?, Some(&a.cutoff), a.bins)?;
    write_jsonl(&a.out, &r.points)?;
    let prov = Provenance::new(
        "filter",
        PipelineConfig {
            input: Some(path_string(&a.input.input)),
            cutoff_request: r.cutoff_request,
            cutoff: r.cutoff,
            bins: Some(a.bins),
            ..Default::default()
        },
    );
    Ok(document(
        "filter",
        json!({ "path": path_string(&a.out), "n_points": r.points.len() }),
        &prov,
    ))
}

fn cluster_cmd(a: ClusterArgs) -> CliResult<Value> {
    let r = points_from(read_input(&a.input.input)?, a.cutoff.as_deref(), a.bins)?;
    let params = ClusteringParams {
        include_border: !a.core_only,
        ..ClusteringParams::new(a.eps, a.min_weight)?
    };
    let result = cluster(&r.points, &params);
    let summary = ClusterSummary::new(&result, &r.points, &params);
    let prov = Provenance::new(
        "cluster",
        PipelineConfig {
            input: Some(path_string(&a.input.input)),
            cutoff_request: r.cutoff_request,
            cutoff: r.cutoff,
            bins: Some(a.bins),
            eps: Some(params.eps),
            min_weight: Some(params.min_weight),
            include_border: Some(params.include_border),
            run: a.out.as_deref().map(path_string),
            ..Default::default()
        },
    );
    let doc = document("cluster", serde_json::to_value(&summary)?, &prov);
    if let Some(out) = &a.out {
        write_file(&with_suffix(out, ".json"), serde_json::to_string_pretty(&doc)?.as_bytes())?;
        write_file(&with_suffix(out, ".labels"), &encode_labels(&result.labels))?;
        write_file(&with_suffix(out, ".flags"), &encode_flags(&result.flags))?;
    }
    Ok(doc)
}

struct StoredRun {
    params: ClusteringParams,
    result: ClusterResult,
}

fn load_run(prefix: &Path, points: &SparsePoints) -> CliResult<StoredRun> {
    let read = |suffix: &str| {
        let p = with_suffix(prefix, suffix);
        std::fs::read(&p).map_err(|e| CliError::data(format!("{}: {e}", p.display())))
    };
    let doc: Value = serde_json::from_slice(&read(".json")?)?;
    let params: ClusteringParams = serde_json::from_value(doc["result"]["params"].clone())
        .map_err(|e| CliError::data(format!("run record has no parameters: {e}")))?;
    let result = result_from_parts(decode_labels(&read(".labels")?)?, decode_flags(&read(".flags")?)?)?;
    if result.len() != points.len() {
        return Err(CliError::data(format!(
            "run has {} labels but the input has {} points",
            result.len(),
            points.len()
        )));
    }
    Ok(StoredRun { params, result })
}

fn rank(a: RankArgs) -> CliResult<Value> {
    let points = read_points(&a.run.input.input)?;
    let run = load_run(&a.run.run, &points)?;
    let key: RankKey = a.key.parse()?;
    let mut ranked = rank_clusters(&run.result, &points, key);
    if let Some(n) = a.top {
        ranked.truncate(n);
    }
    let prov = Provenance::new(
        "rank",
        PipelineConfig {
            input: Some(path_string(&a.run.input.input)),
            run: Some(path_string(&a.run.run)),
            eps: Some(run.params.eps),
            min_weight: Some(run.params.min_weight),
            ..Default::default()
        },
    );
    Ok(document("rank", json!({ "key": key, "clusters": ranked }), &prov))
}

fn shell(a: ShellArgs) -> CliResult<Value> {
    let points = read_points(&a.run.input.input)?;
    let run = load_run(&a.run.run, &points)?;
    let s = shell_extract_with(&points, &run.params, &run.result, a.cluster, a.depth)?;
    let mut result = serde_json::to_value(s.stats())?;
    if let Some(out) = &a.out {
        let shell_path = with_suffix(out, ".shell.jsonl");
        let interior_path = with_suffix(out, ".interior.jsonl");
        write_jsonl(&shell_path, &s.shell)?;
        write_jsonl(&interior_path, &s.interior)?;
        result["shell_path"] = json!(path_string(&shell_path));
        result["interior_path"] = json!(path_string(&interior_path));
    }
    let prov = Provenance::new(
        "shell",
        PipelineConfig {
            input: Some(path_string(&a.run.input.input)),
            run: Some(path_string(&a.run.run)),
            eps: Some(run.params.eps),
            min_weight: Some(run.params.min_weight),
            include_border: Some(run.params.include_border),
            cluster: Some(a.cluster),
            peel_depth: Some(a.depth),
            ..Default::default()
        },
    );
    Ok(document("shell", result, &prov))
}

fn export(a: ExportArgs) -> CliResult<Value> {
    let all = read_points(&a.input.input)?;
    let (points, result, cluster_id) = match (&a.run, a.cluster) {
        (Some(prefix), Some(c)) => {
            let run = load_run(prefix, &all)?;
            let chosen = select(&run.result, &all, &[c].into_iter().collect())?;
            (chosen, Some(run.result), c)
        }
        _ => (all.clone(), None, 0),
    };
    let geometry = match &a.volume {
        Some(p) => load_volume(p)?.geometry(),
        None => Geometry::default(),
    };
    let mode: DecimateMode = a.mode.parse()?;
    if a.target == 0 {
        return Err(CliError::usage("target", "must be at least 1"));
    }
    let mut out = json!({ "source_points": points.len() });

    if let Some(path) = &a.points {
        let kept = decimate(&points, a.target, mode, a.seed);
        let cloud = match a.alpha {
            AlphaArg::Cluster => PointCloud::with_cluster_alpha(&kept, &geometry),
            AlphaArg::Transfer => {
                let threshold = a
                    .tf_threshold
                    .ok_or_else(|| CliError::usage("tf-threshold", "required with --alpha transfer"))?;
                let cusp = match a.tf_cusp {
                    Some(c) => c,
                    None => cusp_or_abort(&Histogram::from_sparse(&all, 256)?)?,
                };
                PointCloud::with_transfer(&kept, &geometry, &TransferFunction::new(cusp, threshold)?)
            }
        };
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(&encode_point_cloud(&cloud))?;
        w.flush()?;
        out["points"] = json!({
            "path": path_string(path),
            "count": cloud.len(),
            "alpha": cloud.alpha_source,
        });
    }

    if let (Some(path), Some(iso)) = (&a.mesh, a.iso) {
        let whole;
        let (pts, r) = match &result {
            Some(r) => (&all, r),
            None => {
                let n = points.len();
                whole = result_from_parts(vec![0; n], vec![PointFlag::Core; n])?;
                (&points, &whole)
            }
        };
        if r.n_clusters == 0 {
            return Err(CliError::data("no points to mesh"));
        }
        let raster = rasterize_cluster(pts, r, cluster_id)?;
        let physical = geometry.compose(&raster.geometry());
        let mesh = isosurface(&raster.with_geometry(physical)?, iso)?;
        let mut w = BufWriter::new(File::create(path)?);
        mesh.write_obj(&mut w)?;
        w.flush()?;
        out["mesh"] = json!({
            "path": path_string(path),
            "vertices": mesh.vertices.len(),
            "triangles": mesh.triangles.len(),
            "area": mesh.area(),
            "watertight": mesh.is_watertight(),
        });
    }

    let prov = Provenance::new(
        "export",
        PipelineConfig {
            input: Some(path_string(&a.input.input)),
            run: a.run.as_deref().map(path_string),
            cluster: a.cluster,
            target: Some(a.target),
            mode: Some(a.mode.clone()),
            seed: Some(a.seed),
            iso: a.iso,
            ..Default::default()
        },
    );
    Ok(document("export", out, &prov))
}

fn serve(a: ServeArgs) -> CliResult<Value> {
    let state = volscan_service::AppState::new();
    for p in &a.volume {
        state.add_volume(load_volume(p)?, path_string(p));
    }
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::internal(e.to_string()))?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(&a.listen)
            .await
            .map_err(|e| CliError::usage("listen", format!("{}: {e}", a.listen)))?;
        let addr = listener.local_addr()?;
        println!(
            "{}",
            json!({ "schema": crate::output::SCHEMA, "command": "serve", "listening": format!("http://{addr}") })
        );
        volscan_service::serve(listener, state).await?;
        Ok(json!({ "schema": crate::output::SCHEMA, "command": "serve", "stopped": true }))
    })
}
