use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "volscan", version, about = "Sparse intensity-weighted clustering of 3D volumes")]
pub struct Cli {
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true, env = "VOLSCAN_THREADS")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic volume with ground truth.
    Synth(SynthArgs),
    /// Log-intensity histogram and detected cusp of a volume or point set.
    Hist(HistArgs),
    /// Threshold a volume into sparse points (JSON lines).
    Filter(FilterArgs),
    /// Intensity-weighted DBSCAN; writes <out>.json, <out>.labels, <out>.flags.
    Cluster(ClusterArgs),
    /// Rank the clusters of a stored run.
    Rank(RankArgs),
    /// Peel the outer shell of one cluster of a stored run.
    Shell(ShellArgs),
    /// Decimated point cloud or iso-surface mesh.
    Export(ExportArgs),
    /// Run the HTTP service.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SynthKind {
    Diffuse,
    Solid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ShapeArg {
    Sphere,
    Cuboid,
    Turbine,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, value_enum)]
    pub kind: SynthKind,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Full generator spec as JSON; flags below override its fields.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Grid size as X,Y,Z.
    #[arg(long, value_parser = parse_dims)]
    pub dims: Option<[usize; 3]>,
    #[arg(long)]
    pub n_bragg: Option<usize>,
    #[arg(long)]
    pub n_diffuse: Option<usize>,
    #[arg(long)]
    pub min_gap: Option<f64>,
    #[arg(long, value_enum, default_value = "sphere")]
    pub shape: ShapeArg,
    #[arg(long, default_value_t = 20.0)]
    pub radius: f64,
    #[arg(long, default_value_t = 1.0)]
    pub fill: f64,
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub filaments: usize,
    /// Write per-voxel ground-truth labels (i32 little-endian, -1 = background).
    #[arg(long)]
    pub truth: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InputArgs {
    /// VVOL volume or JSON-lines point set.
    #[arg(long)]
    pub input: PathBuf,
}

#[derive(Debug, Args)]
pub struct HistArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, default_value_t = 256)]
    pub bins: usize,
    /// Also write the histogram JSON here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FilterArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Number or "auto" for the detected cusp.
    #[arg(long, default_value = "auto")]
    pub cutoff: String,
    #[arg(long, default_value_t = 256)]
    pub bins: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ClusterArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Number or "auto"; points at or below it are dropped. Defaults to
    /// "auto" for volumes and to no extra filtering for point sets.
    #[arg(long)]
    pub cutoff: Option<String>,
    #[arg(long, default_value_t = 256)]
    pub bins: usize,
    #[arg(long, default_value_t = 1.7)]
    pub eps: f64,
    #[arg(long)]
    pub min_weight: f64,
    /// Drop border points instead of attaching them to a cluster.
    #[arg(long)]
    pub core_only: bool,
    /// Output prefix.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Point set the run was computed on.
    #[command(flatten)]
    pub input: InputArgs,
    /// Prefix given to `cluster --out`.
    #[arg(long)]
    pub run: PathBuf,
}

#[derive(Debug, Args)]
pub struct RankArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long, default_value = "size")]
    pub key: String,
    #[arg(long)]
    pub top: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ShellArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long)]
    pub cluster: usize,
    #[arg(long, default_value_t = 1)]
    pub depth: usize,
    /// Writes <out>.shell.jsonl and <out>.interior.jsonl.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AlphaArg {
    Cluster,
    Transfer,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Stored run; with --cluster exports that cluster only.
    #[arg(long, requires = "cluster")]
    pub run: Option<PathBuf>,
    #[arg(long, requires = "run")]
    pub cluster: Option<usize>,
    /// Volume whose geometry maps indices to physical coordinates.
    #[arg(long)]
    pub volume: Option<PathBuf>,
    /// Binary point-cloud output.
    #[arg(long, required_unless_present = "mesh")]
    pub points: Option<PathBuf>,
    #[arg(long, default_value_t = 50_000)]
    pub target: usize,
    #[arg(long, default_value = "stride")]
    pub mode: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "cluster")]
    pub alpha: AlphaArg,
    /// Transfer-function lower bound (defaults to the detected cusp).
    #[arg(long)]
    pub tf_cusp: Option<f64>,
    #[arg(long)]
    pub tf_threshold: Option<f64>,
    /// OBJ mesh output.
    #[arg(long, requires = "iso")]
    pub mesh: Option<PathBuf>,
    #[arg(long)]
    pub iso: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8737")]
    pub listen: String,
    /// Volumes to load at start-up.
    #[arg(long)]
    pub volume: Vec<PathBuf>,
}

fn parse_dims(s: &str) -> Result<[usize; 3], String> {
    let parts: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse::<usize>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<Result<_, _>>()?;
    parts
        .try_into()
        .map_err(|_| "expected three comma-separated sizes".to_string())
}
