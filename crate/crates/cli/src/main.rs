use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use lsm_core::ingest::{generate_synthetic_map, load_lexicon, read_map_archive, write_map_archive, SyntheticSpec};
use lsm_core::map::regrid;
use lsm_core::report::{
    emit_report, load_map_dir, load_prompt_templates, report_json, run_distinctness, run_queryability,
    run_resolution_sweep, EvalConfig, QueryMode, Report, ReportFormat,
};
use lsm_core::{Error, PostProcessParams};
use lsm_server::AppState;

#[derive(Parser)]
#[command(name = "lsmeval", version, about = "Queryability and distinctness evaluation for latent semantic maps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Score query masks against ground-truth semantics.
    Queryability(QueryArgs),
    /// Intra-map deviation ratios and cross-map Wasserstein distances.
    Distinctness(DistinctArgs),
    /// Footprint and queryability along a resolution ladder.
    Sweep(SweepArgs),
    /// Aggregate one archive to a coarser cell size.
    Regrid(RegridArgs),
    /// Write synthetic maps and their lexicon.
    Synth(SynthArgs),
    /// Serve the explorer HTTP API.
    Serve(ServeArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Vlmaps,
    Segmentation,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Args)]
struct Common {
    /// Directory of .lsm archives.
    #[arg(long)]
    maps: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Report path; a directory for CSV. Prints JSON to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct QueryOpts {
    #[arg(long)]
    lexicon: PathBuf,
    #[arg(long, value_enum, default_value_t = Mode::Vlmaps)]
    mode: Mode,
    #[arg(long, default_value_t = PostProcessParams::default().threshold)]
    threshold: f64,
    #[arg(long = "blur-sigma", default_value_t = PostProcessParams::default().blur_sigma)]
    blur_sigma: f64,
    #[arg(long, default_value_t = PostProcessParams::default().closing_iters)]
    closing: u32,
    #[arg(long, default_value_t = PostProcessParams::default().dilation_iters)]
    dilation: u32,
    /// Prompt templates, one per line with a {} slot.
    #[arg(long)]
    prompts: Option<PathBuf>,
    /// Negative lexicon keys compared against each query.
    #[arg(long, value_delimiter = ',', default_value = "other")]
    negatives: Vec<String>,
}

#[derive(Args)]
struct QueryArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    query: QueryOpts,
}

#[derive(Args)]
struct DistinctArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = 0.1)]
    subsample: f64,
    /// L2-normalize embeddings before sampling.
    #[arg(long)]
    normalize: bool,
    /// Also pair different labels of the same map as non-matching.
    #[arg(long = "same-map-negatives")]
    same_map_negatives: bool,
    #[arg(long = "min-samples", default_value_t = 20)]
    min_samples: usize,
    #[arg(long, default_value_t = 30)]
    bins: usize,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    query: QueryOpts,
    /// Cell sizes in metres, ascending; each a multiple of the native size.
    #[arg(long, value_delimiter = ',', default_value = "0.02,0.05,0.1,0.2")]
    resolutions: Vec<f32>,
}

#[derive(Args)]
struct RegridArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    res: f32,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    classes: usize,
    #[arg(long = "per-class")]
    per_class: usize,
    #[arg(long)]
    dim: usize,
    #[arg(long, default_value_t = 0.05)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of maps, seeded consecutively from --seed.
    #[arg(long, default_value_t = 1)]
    count: u64,
    #[arg(long = "cell-size", default_value_t = 0.02)]
    cell_size: f32,
    /// Seed of the class directions shared by every map.
    #[arg(long = "direction-seed", default_value_t = 0)]
    direction_seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long)]
    maps: PathBuf,
    #[arg(long)]
    lexicon: PathBuf,
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: std::net::IpAddr,
    #[arg(long = "encoder-url")]
    encoder_url: Option<String>,
    #[arg(long)]
    prompts: Option<PathBuf>,
}

/// Usage errors exit 1, data errors 2, numerical failures 3.
enum Failure {
    Data(String),
    Numerical(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_numerical() {
            Failure::Numerical(e.to_string())
        } else {
            Failure::Data(e.to_string())
        }
    }
}

fn base_config(common: &Common) -> EvalConfig {
    EvalConfig {
        map_paths: vec![common.maps.clone()],
        seed: common.seed,
        workers: common.workers,
        ..Default::default()
    }
}

fn apply_query_opts(config: &mut EvalConfig, q: &QueryOpts) -> Result<(), Failure> {
    config.lexicon_path = Some(q.lexicon.clone());
    config.mode = match q.mode {
        Mode::Vlmaps => QueryMode::VlmapsQuery,
        Mode::Segmentation => QueryMode::Segmentation,
    };
    config.params = PostProcessParams {
        closing_iters: q.closing,
        blur_sigma: q.blur_sigma,
        threshold: q.threshold,
        dilation_iters: q.dilation,
    };
    config.negatives = q.negatives.clone();
    if let Some(p) = &q.prompts {
        config.prompt_templates = load_prompt_templates(p)?;
    }
    Ok(())
}

fn write_report(report: &Report, common: &Common) -> Result<(), Failure> {
    let format = match common.format {
        Format::Json => ReportFormat::Json,
        Format::Csv => ReportFormat::Csv,
    };
    match &common.out {
        Some(path) => emit_report(report, format, path)?,
        None => match format {
            ReportFormat::Json => println!("{}", report_json(report)?),
            ReportFormat::Csv => return Err(Failure::Data("csv output needs --out <dir>".into())),
        },
    }
    Ok(())
}

fn maps_in(dir: &Path) -> Result<Vec<lsm_core::MapBundle>, Failure> {
    let maps = load_map_dir(dir)?;
    if maps.is_empty() {
        return Err(Failure::Data(format!("no .lsm archives in {}", dir.display())));
    }
    Ok(maps)
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Queryability(a) => {
            let mut config = base_config(&a.common);
            apply_query_opts(&mut config, &a.query)?;
            let lexicon = load_lexicon(&a.query.lexicon)?;
            let report = run_queryability(&maps_in(&a.common.maps)?, &lexicon, &config)?;
            write_report(&report, &a.common)
        }
        Command::Distinctness(a) => {
            let config = EvalConfig {
                subsample_ratio: a.subsample,
                normalize: a.normalize,
                same_map_negatives: a.same_map_negatives,
                min_samples: a.min_samples,
                histogram_bins: a.bins,
                ..base_config(&a.common)
            };
            let report = run_distinctness(&maps_in(&a.common.maps)?, &config)?;
            write_report(&report, &a.common)
        }
        Command::Sweep(a) => {
            let mut config = base_config(&a.common);
            apply_query_opts(&mut config, &a.query)?;
            config.resolutions = a.resolutions.clone();
            let lexicon = load_lexicon(&a.query.lexicon)?;
            let report = run_resolution_sweep(&maps_in(&a.common.maps)?, &lexicon, &config)?;
            write_report(&report, &a.common)
        }
        Command::Regrid(a) => {
            let map = read_map_archive(&a.input)?;
            let coarse = regrid(&map, a.res)?;
            let bytes = write_map_archive(&coarse, &a.out)?;
            eprintln!(
                "{}: {} -> {} voxels, {bytes} bytes",
                a.out.display(),
                map.voxel_count(),
                coarse.voxel_count()
            );
            Ok(())
        }
        Command::Synth(a) => {
            std::fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
            let mut lexicon = None;
            for seed in a.seed..a.seed + a.count.max(1) {
                let mut spec = SyntheticSpec::new(a.classes, a.per_class, a.dim, a.noise, seed);
                spec.cell_size = a.cell_size;
                spec.direction_seed = a.direction_seed;
                let (map, lex) = generate_synthetic_map(&spec)?;
                write_map_archive(&map, a.out.join(format!("{}.lsm", map.map_id)))?;
                lexicon.get_or_insert(lex);
            }
            if let Some(lex) = lexicon {
                lex.save(a.out.join("lexicon.json"))?;
            }
            Ok(())
        }
        Command::Serve(a) => {
            let lexicon = load_lexicon(&a.lexicon)?;
            let templates = match &a.prompts {
                Some(p) => load_prompt_templates(p)?,
                None => Vec::new(),
            };
            let state = AppState::load(&a.maps, lexicon)?
                .with_prompt_templates(templates)
                .with_encoder_url(a.encoder_url);
            for d in &state.diagnostics {
                eprintln!("warning: skipped {}: {}", d.file, d.error);
            }
            let addr = SocketAddr::new(a.host, a.port);
            eprintln!("serving {} maps on http://{addr}", state.maps.len());
            let runtime = tokio::runtime::Runtime::new().map_err(|e| Failure::Data(e.to_string()))?;
            runtime
                .block_on(lsm_server::serve(Arc::new(state), addr))
                .map_err(|e| Failure::Data(format!("server: {e}")))
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Data(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Numerical(m)) => {
            eprintln!("numerical error: {m}");
            ExitCode::from(3)
        }
    }
}
