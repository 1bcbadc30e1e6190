//! Command-line entry points. Exit codes: 0 ok, 1 domain error, 2 usage error.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use tractscope::atlas::Atlas;
use tractscope::cohort::{demographics, select_cohort, CohortSpec};
use tractscope::dataset::{self, records_from_matrices, run_cohort, Dataset, DatasetManifest};
use tractscope::io::metadata::load_metadata;
use tractscope::matrix::FeatureMatrix;
use tractscope::ml::pipeline::Progress;
use tractscope::ml::{PipelineConfig, RunOptions, TopM};
use tractscope::synth::{synth_dataset, Effect, SynthConfig};

#[derive(Debug)]
enum CliError {
    Usage(String),
    Domain(String),
}

impl CliError {
    fn domain(e: impl std::fmt::Display) -> Self {
        CliError::Domain(e.to_string())
    }
}

type Result<T> = std::result::Result<T, CliError>;

#[derive(Parser)]
#[command(name = "tractscope", version, about = "Cohort saliency analysis for DTI fiber-tract data")]
struct Cli {
    /// Worker threads; 1 runs everything serially. Defaults to all cores.
    #[arg(long, global = true, env = "TRACTSCOPE_JOBS")]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a dataset directory, optionally creating its manifest first.
    Ingest(IngestArgs),
    /// Compute per-region feature matrices from tracks and volumes.
    Extract(ExtractArgs),
    /// Select a (balanced) cohort and write its spec as JSON.
    Cohort(CohortArgs),
    /// Run the cross-validated saliency pipeline and write the report JSON.
    Run(RunArgs),
    /// Write feature matrices as CSV files.
    Export(ExportArgs),
    /// Generate a synthetic dataset with planted effects.
    Synth(SynthArgs),
    /// Start the HTTP service.
    Serve(ServeArgs),
}

#[derive(Args)]
struct IngestArgs {
    /// Dataset root directory.
    dataset: PathBuf,
    /// Metadata CSV to copy into a new dataset.
    #[arg(long, requires = "atlas")]
    metadata: Option<PathBuf>,
    /// Atlas JSON for a new dataset.
    #[arg(long, requires = "metadata")]
    atlas: Option<PathBuf>,
    /// Name recorded in a new manifest.
    #[arg(long, default_value = "dataset")]
    name: String,
}

#[derive(Args)]
struct ExtractArgs {
    dataset: PathBuf,
    /// Recompute even if matrices exist.
    #[arg(long)]
    force: bool,
}

#[derive(Args, Clone)]
struct CohortSelection {
    /// Cohort spec JSON; overrides the selection flags.
    #[arg(long)]
    cohort: Option<PathBuf>,
    #[arg(long, default_value_t = 0.0)]
    age_min: f64,
    #[arg(long, default_value_t = 200.0)]
    age_max: f64,
    /// Keep every subject instead of balancing age and sex cells.
    #[arg(long)]
    no_balance: bool,
    #[arg(long, default_value_t = 0)]
    cohort_seed: u64,
}

#[derive(Args)]
struct CohortArgs {
    dataset: PathBuf,
    #[command(flatten)]
    selection: CohortSelection,
    /// Output file; stdout when absent.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    /// Dataset root; optional with --from-csv.
    dataset: Option<PathBuf>,
    /// Read matrices from an exported CSV directory instead of the dataset.
    #[arg(long)]
    from_csv: Option<PathBuf>,
    #[command(flatten)]
    selection: CohortSelection,
    /// Pipeline config JSON; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Folds per repetition.
    #[arg(long)]
    k: Option<usize>,
    /// Repetitions.
    #[arg(long)]
    c: Option<usize>,
    /// Trees per forest.
    #[arg(long)]
    trees: Option<usize>,
    /// Features given to the SVM; default ceil(sqrt(n)).
    #[arg(long)]
    top_m: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Report file; stdout when absent.
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Suppress per-region progress on stderr.
    #[arg(long, short)]
    quiet: bool,
}

#[derive(Args)]
struct ExportArgs {
    dataset: PathBuf,
    /// Output directory.
    #[arg(long, short)]
    out: PathBuf,
    /// Restrict rows to a cohort spec.
    #[arg(long)]
    cohort: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    /// Output dataset directory.
    #[arg(long, short)]
    out: PathBuf,
    /// Full generator config as JSON; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Subjects in total, split evenly between groups.
    #[arg(long)]
    subjects: Option<usize>,
    #[arg(long)]
    regions: Option<usize>,
    #[arg(long)]
    features_per_region: Option<usize>,
    /// Comma-separated region labels carrying the effect.
    #[arg(long, value_delimiter = ',')]
    effect_regions: Option<Vec<u32>>,
    /// Comma-separated feature names carrying the effect.
    #[arg(long, value_delimiter = ',')]
    effect_features: Option<Vec<String>>,
    /// Disease-group shift in standard deviations.
    #[arg(long)]
    shift: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    followup_fraction: Option<f64>,
    #[arg(long)]
    block_correlation: Option<f64>,
    /// Also write label volume, tracks and measure volumes.
    #[arg(long)]
    geometry: bool,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, env = "TRACTSCOPE_PORT", default_value_t = 8080)]
    port: u16,
    #[arg(long, env = "TRACTSCOPE_HOST", default_value = "127.0.0.1")]
    host: std::net::IpAddr,
    /// Base directory for relative dataset paths.
    #[arg(long, env = "TRACTSCOPE_DATA_DIR", default_value = ".")]
    data_dir: PathBuf,
    /// Report cache directory.
    #[arg(long, env = "TRACTSCOPE_CACHE_DIR", default_value = ".tractscope-cache")]
    cache_dir: PathBuf,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = fs::read(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    serde_json::from_slice(&bytes).map_err(|e| CliError::Domain(format!("{}: {e}", path.display())))
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir).map_err(CliError::domain)?;
            }
            fs::write(p, format!("{text}\n")).map_err(|e| CliError::Domain(format!("{}: {e}", p.display())))
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            writeln!(stdout, "{text}").map_err(CliError::domain)
        }
    }
}

/// A missing dataset directory is a usage error; anything else is domain.
fn open_dataset(path: &Path) -> Result<Dataset> {
    if !path.is_dir() {
        return Err(CliError::Usage(format!("dataset directory not found: {}", path.display())));
    }
    Dataset::open(path).map_err(CliError::domain)
}

fn cohort_spec(sel: &CohortSelection, matrices: &[FeatureMatrix]) -> Result<CohortSpec> {
    if let Some(p) = &sel.cohort {
        let spec: CohortSpec = read_json(p)?;
        spec.validate().map_err(CliError::domain)?;
        return Ok(spec);
    }
    let records = records_from_matrices(matrices);
    select_cohort(&records, [sel.age_min, sel.age_max], !sel.no_balance, sel.cohort_seed).map_err(CliError::domain)
}

fn ingest(a: IngestArgs) -> Result<()> {
    if let (Some(meta), Some(atlas)) = (&a.metadata, &a.atlas) {
        let bytes = fs::read(meta).map_err(|e| CliError::Usage(format!("{}: {e}", meta.display())))?;
        let records = load_metadata(&bytes).map_err(CliError::domain)?;
        let atlas: Atlas = read_json(atlas)?;
        let manifest = DatasetManifest { name: a.name.clone(), atlas, features: Default::default() };
        Dataset::create(&a.dataset, manifest, records).map_err(CliError::domain)?;
    }
    let ds = open_dataset(&a.dataset)?;
    let mut subjects: Vec<&str> = ds.records.iter().map(|r| r.subject_id.as_str()).collect();
    subjects.sort_unstable();
    subjects.dedup();
    let with_tracks = ds.records.iter().filter(|r| ds.tracks_path(r).exists()).count();
    println!("dataset   {}", ds.manifest.name);
    println!("regions   {}", ds.manifest.atlas.regions().len());
    println!("subjects  {}", subjects.len());
    println!("scans     {} ({} with tracks)", ds.records.len(), with_tracks);
    println!("measures  {}", ds.manifest.features.measures.join(","));
    println!("matrices  {}", if ds.has_matrices() { "present" } else { "absent" });
    Ok(())
}

fn extract(a: ExtractArgs, parallel: bool) -> Result<()> {
    let ds = open_dataset(&a.dataset)?;
    if ds.has_matrices() && !a.force {
        eprintln!("matrices already present; use --force to recompute");
        return Ok(());
    }
    let matrices = ds.extract(parallel).map_err(CliError::domain)?;
    ds.write_matrices(&matrices).map_err(CliError::domain)?;
    eprintln!("wrote {} region matrices to {}", matrices.len(), ds.features_dir().display());
    Ok(())
}

fn cohort(a: CohortArgs) -> Result<()> {
    let ds = open_dataset(&a.dataset)?;
    let spec = if a.selection.cohort.is_some() {
        cohort_spec(&a.selection, &[])?
    } else {
        let s = &a.selection;
        select_cohort(&ds.records, [s.age_min, s.age_max], !s.no_balance, s.cohort_seed).map_err(CliError::domain)?
    };
    let demo = demographics(&spec);
    for g in &demo.groups {
        eprintln!("{:<8} {:>4} subjects ({} M, {} F)", g.group.code(), g.total, g.male, g.female);
    }
    emit(a.out.as_deref(), &serde_json::to_string_pretty(&spec).expect("spec serializes"))
}

fn pipeline_config(a: &RunArgs) -> Result<PipelineConfig> {
    let mut cfg: PipelineConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(k) = a.k {
        cfg.k = k;
    }
    if let Some(c) = a.c {
        cfg.c = c;
    }
    if let Some(t) = a.trees {
        cfg.n_trees = t;
    }
    if let Some(m) = a.top_m {
        cfg.top_m = TopM::Fixed(m);
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn run(a: RunArgs, parallel: bool) -> Result<()> {
    let matrices = match (&a.from_csv, &a.dataset) {
        (Some(dir), _) => {
            if !dir.is_dir() {
                return Err(CliError::Usage(format!("CSV directory not found: {}", dir.display())));
            }
            dataset::load_matrices(dir).map_err(CliError::domain)?
        }
        (None, Some(root)) => open_dataset(root)?.load_matrices().map_err(CliError::domain)?,
        (None, None) => return Err(CliError::Usage("give a dataset directory or --from-csv".into())),
    };
    let config = pipeline_config(&a)?;
    let spec = cohort_spec(&a.selection, &matrices)?;
    let quiet = a.quiet;
    let options = RunOptions {
        parallel,
        progress: (!quiet).then(|| {
            Arc::new(|p: Progress| eprintln!("region {}/{}", p.regions_done, p.regions_total)) as _
        }),
    };
    let report = run_cohort(&matrices, &spec, &config, &options).map_err(CliError::domain)?;
    if !quiet {
        for r in report.regions.iter().take(5) {
            eprintln!(
                "{:>4} {:<32} acc {:.3} +- {:.3}",
                r.region, r.region_name, r.performance.accuracy.mean, r.performance.accuracy.std
            );
        }
        for e in &report.errors {
            eprintln!("region {} failed: {}", e.region, e.message);
        }
    }
    emit(a.out.as_deref(), &report.to_json())
}

fn export(a: ExportArgs) -> Result<()> {
    let ds = open_dataset(&a.dataset)?;
    let mut matrices = ds.load_matrices().map_err(CliError::domain)?;
    if let Some(p) = &a.cohort {
        let spec: CohortSpec = read_json(p)?;
        matrices = matrices.iter().map(|m| dataset::restrict_to_cohort(m, &spec)).collect();
    }
    dataset::write_matrices(&a.out, &matrices).map_err(CliError::domain)?;
    eprintln!("wrote {} region CSVs to {}", matrices.len(), a.out.display());
    Ok(())
}

fn synth(a: SynthArgs) -> Result<()> {
    let mut cfg: SynthConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => SynthConfig::default(),
    };
    if let Some(n) = a.subjects {
        cfg.n_disease = n / 2;
        cfg.n_control = n - n / 2;
    }
    if let Some(r) = a.regions {
        cfg.n_regions = r;
    }
    if let Some(f) = a.features_per_region {
        cfg.features_per_region = f;
    }
    let effect = &mut cfg.effect;
    if let Some(r) = a.effect_regions {
        effect.regions = r;
    }
    if let Some(f) = a.effect_features {
        effect.features = f;
    }
    if let Some(s) = a.shift {
        *effect = Effect { shift_sd: s, ..effect.clone() };
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(f) = a.followup_fraction {
        cfg.followup_fraction = f;
    }
    if let Some(b) = a.block_correlation {
        cfg.block_correlation = b;
    }
    cfg.geometry |= a.geometry;
    let ds = synth_dataset(&a.out, &cfg).map_err(CliError::domain)?;
    eprintln!("wrote {} scans to {}", ds.records.len(), ds.root.display());
    Ok(())
}

fn serve(a: ServeArgs, parallel: bool) -> Result<()> {
    let config = tractscope::service::ServiceConfig { data_dir: a.data_dir, cache_dir: a.cache_dir, parallel };
    let addr = std::net::SocketAddr::new(a.host, a.port);
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build().map_err(CliError::domain)?;
    eprintln!("listening on http://{addr}/api/v1");
    rt.block_on(tractscope::service::serve(config, addr)).map_err(CliError::domain)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let parallel = cli.jobs != Some(1);
    if let Some(n) = cli.jobs.filter(|&n| n > 1) {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    let result = match cli.command {
        Command::Ingest(a) => ingest(a),
        Command::Extract(a) => extract(a, parallel),
        Command::Cohort(a) => cohort(a),
        Command::Run(a) => run(a, parallel),
        Command::Export(a) => export(a),
        Command::Synth(a) => synth(a),
        Command::Serve(a) => serve(a, parallel),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(CliError::Domain(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}
