use citycraft::generate::{EchoBackend, GeneratorBackend, ProceduralBackend, ProceduralParams};
use citycraft::layout::{ClassRatios, LandClass, NUM_CLASSES};
use citycraft::pipeline::metrics::{ace_over_runs, pixel_exact_targets};
use citycraft::pipeline::{
    write_atomic, ExpansionConfig, GeneratorKind, OsmConfig, Pipeline, PipelineConfig, PipelineError, PlannerKind,
    PLANS,
};
use citycraft::planner::{function_distribution, read_plans, PlanningState};
use citycraft::retrieval::{synthetic_catalog, RetrievalWeights, SynthSpec};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;
use std::io::BufReader;
use std::path::PathBuf;
use std::process::ExitCode;

/// Semantic city layouts to 3-D scene manifests.
#[derive(Parser)]
#[command(name = "citycraft", version)]
struct Cli {
    /// TOML pipeline config; flags given on the command line take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for stage files.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Run seed; required unless the config file sets one.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Rasterize an OSM XML file into the layout files.
    Ingest {
        #[arg(long)]
        osm: PathBuf,
        #[arg(long, default_value_t = 768)]
        size: usize,
        #[arg(long, default_value_t = 0.5)]
        meters_per_pixel: f64,
        /// Projection center; defaults to the mean node position.
        #[arg(long, requires = "center_lon", allow_negative_numbers = true)]
        center_lat: Option<f64>,
        #[arg(long, requires = "center_lat", allow_negative_numbers = true)]
        center_lon: Option<f64>,
    },
    /// Generate a single layout tile.
    Generate(GenFlags),
    /// Outpaint a layout larger than one tile.
    Expand {
        #[command(flatten)]
        gen: GenFlags,
        #[arg(long)]
        target_width: usize,
        #[arg(long)]
        target_height: usize,
        #[arg(long, default_value_t = 768)]
        tile_size: usize,
        #[arg(long, default_value_t = 128)]
        overlap: usize,
    },
    /// Split the layout into instances and write their dossiers.
    Analyze,
    /// Plan every building until the change ratio settles.
    Plan(PlanFlags),
    /// Pick catalog assets for every plan.
    Retrieve(RetrieveFlags),
    /// Fit the retrieved assets onto their instances.
    Place(RetrieveFlags),
    /// Assemble the scene manifest.
    Export {
        #[command(flatten)]
        retrieve: RetrieveFlags,
        #[command(flatten)]
        scatter: ScatterFlags,
    },
    /// Evaluation metrics.
    Metrics {
        #[command(subcommand)]
        metric: Metric,
    },
    /// Run every stage in order.
    RunAll {
        #[command(flatten)]
        gen: GenFlags,
        #[command(flatten)]
        plan: PlanFlags,
        #[command(flatten)]
        retrieve: RetrieveFlags,
        #[command(flatten)]
        scatter: ScatterFlags,
    },
    /// Write a seeded synthetic asset catalog.
    SynthCatalog {
        /// Directory for catalog.json and embeddings.bin.
        #[arg(long)]
        dir: PathBuf,
        #[arg(long, default_value_t = 200)]
        assets: usize,
        #[arg(long, default_value_t = 0)]
        catalog_seed: u64,
    },
    /// Print the effective config as TOML.
    ShowConfig,
}

#[derive(Subcommand)]
enum Metric {
    /// Average class error over generator runs with random ratio targets.
    Ace {
        #[arg(long, value_enum, default_value_t = MetricBackend::Echo)]
        backend: MetricBackend,
        #[arg(long, default_value_t = 20)]
        runs: usize,
        #[arg(long, default_value_t = 256)]
        width: usize,
        #[arg(long, default_value_t = 256)]
        height: usize,
    },
    /// Primary-function shares of the current plans.
    Distribution,
}

#[derive(Clone, Copy, ValueEnum)]
enum MetricBackend {
    Echo,
    Procedural,
}

#[derive(Clone, Copy, ValueEnum)]
enum GenBackend {
    Procedural,
    Remote,
    Echo,
}

#[derive(Clone, Copy, ValueEnum)]
enum PlanBackend {
    Rule,
    Llm,
    Replay,
}

#[derive(Args, Default)]
struct GenFlags {
    #[arg(long, value_enum)]
    backend: Option<GenBackend>,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    height: Option<usize>,
    #[arg(long)]
    meters_per_pixel: Option<f64>,
    /// Text condition, e.g. "a dense downtown".
    #[arg(long)]
    text: Option<String>,
    /// Seven comma-separated class ratios in palette order.
    #[arg(long)]
    ratios: Option<String>,
    /// Remote generator URL.
    #[arg(long)]
    endpoint: Option<String>,
}

#[derive(Args, Default)]
struct PlanFlags {
    #[arg(long, value_enum)]
    planner: Option<PlanBackend>,
    #[arg(long)]
    prompt: Option<String>,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    max_rounds: Option<u32>,
    #[arg(long)]
    llm_endpoint: Option<String>,
    #[arg(long)]
    llm_model: Option<String>,
    #[arg(long)]
    llm_timeout_ms: Option<u64>,
    /// Recorded replies for the replay planner.
    #[arg(long)]
    replay: Option<PathBuf>,
    /// Append LLM exchanges to this JSONL file.
    #[arg(long)]
    record: Option<PathBuf>,
}

#[derive(Args, Default)]
struct RetrieveFlags {
    #[arg(long)]
    catalog: Option<PathBuf>,
    /// Comma-separated modality weights, normalized to sum to 1.
    #[arg(long)]
    weights: Option<String>,
    #[arg(long)]
    k: Option<usize>,
}

#[derive(Args, Default)]
struct ScatterFlags {
    #[arg(long)]
    tree_density: Option<f64>,
    #[arg(long)]
    lamp_spacing_m: Option<f64>,
}

impl GenFlags {
    fn apply(&self, c: &mut PipelineConfig) -> Result<(), PipelineError> {
        let g = &mut c.generator;
        if let Some(b) = self.backend {
            g.backend = match b {
                GenBackend::Procedural => GeneratorKind::Procedural,
                GenBackend::Remote => GeneratorKind::Remote,
                GenBackend::Echo => GeneratorKind::Echo,
            };
        }
        set(&mut g.width, self.width);
        set(&mut g.height, self.height);
        set(&mut g.meters_per_pixel, self.meters_per_pixel);
        if let Some(t) = &self.text {
            g.text = Some(t.clone());
        }
        if let Some(r) = &self.ratios {
            g.ratios = Some(parse_ratios(r)?);
        }
        if let Some(e) = &self.endpoint {
            g.remote.endpoint = e.clone();
        }
        Ok(())
    }
}

impl PlanFlags {
    fn apply(&self, c: &mut PipelineConfig) {
        let p = &mut c.planner;
        if let Some(b) = self.planner {
            p.backend = match b {
                PlanBackend::Rule => PlannerKind::Rule,
                PlanBackend::Llm => PlannerKind::Llm,
                PlanBackend::Replay => PlannerKind::Replay,
            };
        }
        if let Some(v) = &self.prompt {
            p.prompt = v.clone();
        }
        set(&mut p.threshold, self.threshold);
        set(&mut p.max_rounds, self.max_rounds);
        if let Some(v) = &self.llm_endpoint {
            p.llm.endpoint = v.clone();
        }
        if let Some(v) = &self.llm_model {
            p.llm.model = v.clone();
        }
        set(&mut p.llm.timeout_ms, self.llm_timeout_ms);
        if let Some(v) = &self.replay {
            p.replay = Some(v.clone());
        }
        if let Some(v) = &self.record {
            p.llm.record = Some(v.clone());
        }
    }
}

impl RetrieveFlags {
    fn apply(&self, c: &mut PipelineConfig) -> Result<(), PipelineError> {
        if let Some(v) = &self.catalog {
            c.retrieval.catalog = v.clone();
        }
        if let Some(w) = &self.weights {
            let w = RetrievalWeights::parse(w)?;
            c.retrieval.weights = Some(w.as_slice().to_vec());
        }
        set(&mut c.retrieval.k, self.k);
        Ok(())
    }
}

impl ScatterFlags {
    fn apply(&self, c: &mut PipelineConfig) {
        set(&mut c.scatter.tree_density, self.tree_density);
        set(&mut c.scatter.lamp_spacing_m, self.lamp_spacing_m);
    }
}

fn set<T: Copy>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

fn parse_ratios(text: &str) -> Result<ClassRatios, PipelineError> {
    let v: Vec<f64> = text
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| PipelineError::Config(format!("ratios '{text}': {e}")))?;
    let arr: [f64; NUM_CLASSES] = v
        .try_into()
        .map_err(|v: Vec<f64>| PipelineError::Config(format!("ratios need {NUM_CLASSES} values, got {}", v.len())))?;
    ClassRatios::new(arr).map_err(|e| PipelineError::Config(e.to_string()))
}

fn base_config(cli: &Cli) -> Result<PipelineConfig, PipelineError> {
    let mut c = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::new(
            cli.seed
                .ok_or_else(|| PipelineError::Config("--seed is required without --config".into()))?,
            "out",
        ),
    };
    set(&mut c.seed, cli.seed);
    if let Some(o) = &cli.out {
        c.output_dir = o.clone();
    }
    Ok(c)
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    if let Command::SynthCatalog {
        dir,
        assets,
        catalog_seed,
    } = &cli.command
    {
        let catalog = synthetic_catalog(&SynthSpec::new(*assets, *catalog_seed));
        let path = catalog.save(dir)?;
        println!("wrote {} assets to {}", catalog.len(), path.display());
        return Ok(());
    }
    let mut config = base_config(&cli)?;
    match &cli.command {
        Command::Ingest {
            osm,
            size,
            meters_per_pixel,
            center_lat,
            center_lon,
        } => {
            config.osm = Some(OsmConfig {
                path: osm.clone(),
                size: *size,
                meters_per_pixel: *meters_per_pixel,
                center_lat: *center_lat,
                center_lon: *center_lon,
            });
            Pipeline::new(config)?.stage_ingest()?;
        }
        Command::Generate(g) => {
            g.apply(&mut config)?;
            Pipeline::new(config)?.stage_generate()?;
        }
        Command::Expand {
            gen,
            target_width,
            target_height,
            tile_size,
            overlap,
        } => {
            gen.apply(&mut config)?;
            config.expansion = Some(ExpansionConfig {
                target_width: *target_width,
                target_height: *target_height,
                tile_size: *tile_size,
                overlap: *overlap,
                blend_band: *overlap,
            });
            Pipeline::new(config)?.stage_expand()?;
        }
        Command::Analyze => {
            Pipeline::new(config)?.stage_analyze()?;
        }
        Command::Plan(p) => {
            p.apply(&mut config);
            Pipeline::new(config)?.stage_plan()?;
        }
        Command::Retrieve(r) => {
            r.apply(&mut config)?;
            Pipeline::new(config)?.stage_retrieve()?;
        }
        Command::Place(r) => {
            r.apply(&mut config)?;
            Pipeline::new(config)?.stage_place()?;
        }
        Command::Export { retrieve, scatter } => {
            retrieve.apply(&mut config)?;
            scatter.apply(&mut config);
            Pipeline::new(config)?.stage_export()?;
        }
        Command::Metrics { metric } => metrics(&config, metric)?,
        Command::RunAll {
            gen,
            plan,
            retrieve,
            scatter,
        } => {
            gen.apply(&mut config)?;
            plan.apply(&mut config);
            retrieve.apply(&mut config)?;
            scatter.apply(&mut config);
            let report = Pipeline::new(config)?.run_all()?;
            for w in report.all_warnings() {
                eprintln!("warning: {w}");
            }
        }
        Command::ShowConfig => print!("{}", config.to_toml()),
        Command::SynthCatalog { .. } => unreachable!("handled above"),
    }
    Ok(())
}

fn metrics(config: &PipelineConfig, metric: &Metric) -> Result<(), PipelineError> {
    let out = &config.output_dir;
    let doc = match metric {
        Metric::Ace {
            backend,
            runs,
            width,
            height,
        } => {
            let b: Box<dyn GeneratorBackend> = match backend {
                MetricBackend::Echo => Box::new(EchoBackend::new(config.generator.meters_per_pixel)),
                MetricBackend::Procedural => Box::new(ProceduralBackend::new(ProceduralParams {
                    meters_per_pixel: config.generator.meters_per_pixel,
                    ..config.generator.procedural.clone()
                })),
            };
            let targets = pixel_exact_targets(*runs, *width, *height, config.seed);
            let (ace, _) = ace_over_runs(b.as_ref(), &targets, *width, *height, config.seed, None)?;
            let per_class: serde_json::Map<String, serde_json::Value> = LandClass::ALL
                .iter()
                .map(|c| (c.name().to_string(), json!(ace[c.id() as usize])))
                .collect();
            let doc = json!({ "backend": b.id(), "runs": runs, "ace_percent": per_class });
            write_atomic(&out.join("metrics_ace.json"), format!("{doc:#}\n").as_bytes())?;
            doc
        }
        Metric::Distribution => {
            let path = out.join(PLANS);
            let f = std::fs::File::open(&path).map_err(|source| PipelineError::Io { path, source })?;
            let plans = read_plans(BufReader::new(f)).map_err(PipelineError::Input)?;
            let state = PlanningState {
                plans,
                ..Default::default()
            };
            let shares = function_distribution(&state)?;
            let doc = json!({ "function_shares": shares });
            write_atomic(&out.join("metrics_distribution.json"), format!("{doc:#}\n").as_bytes())?;
            doc
        }
    };
    println!("{doc:#}");
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error [{}]: {e}", e.family());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
