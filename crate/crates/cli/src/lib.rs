//! Command implementations behind the `annoloop` binary.

use std::collections::BTreeSet;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use rayon::prelude::*;
use thiserror::Error;

use annoloop::bridge::{BridgeLaunch, BridgeOptions, BridgeSession};
use annoloop::campaign::{run_campaign, run_per_class, CampaignConfig, CampaignError, CampaignRun, Regime};
use annoloop::dataset::{
    parse_class_descriptions, parse_coco, parse_flag_list, parse_image_sizes, parse_openimages,
    parse_voc_dir, read_canonical, synthetic, write_canonical, Dataset, IngestError, ObjectFlag,
};
use annoloop::dataset::synthetic::SyntheticDatasetConfig;
use annoloop::detector::{
    DetectorError, DetectorSession, NullDetector, PerfectDetector, SyntheticDetector,
    SyntheticDetectorConfig,
};
use annoloop::report::{
    summary, write_batches_csv, write_curves_csv, write_report_json, ComparisonCell,
    ComparisonTable,
};
use annoloop::scheduling::StrategyKind;

pub const DEFAULT_SPLIT: f64 = 0.06;

#[derive(Debug, Parser)]
#[command(name = "annoloop", version, about = "Simulate iterative bounding-box annotation campaigns")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Convert VOC, COCO or OpenImages annotations to the canonical format.
    Convert(ConvertArgs),
    /// Run one campaign and write report.json, batches.csv and curves.csv.
    Simulate(SimulateArgs),
    /// Run strategies x regimes over several seeds and tabulate reductions.
    Compare(CompareArgs),
    /// Write a seeded synthetic dataset in the canonical format.
    Generate(GenerateArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long = "num-images", default_value_t = 1000)]
    pub num_images: usize,
    /// Comma-separated class vocabulary.
    #[arg(long, value_delimiter = ',', default_values_t = ["car".to_string(), "dog".to_string(), "person".to_string()])]
    pub classes: Vec<String>,
    #[arg(long, default_value_t = 6)]
    pub max_objects: usize,
    /// Video-like sequences: objects persist and drift across frames.
    #[arg(long)]
    pub video: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InputFormat {
    Voc,
    Coco,
    Openimages,
}

#[derive(Debug, Args)]
pub struct ConvertArgs {
    #[arg(long, value_enum)]
    pub from: InputFormat,
    /// VOC annotation directory, COCO json file, or OpenImages box CSV.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// OpenImages `ImageID,Width,Height` CSV.
    #[arg(long)]
    pub meta: Option<PathBuf>,
    /// OpenImages class-description CSV mapping label ids to names.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Comma-separated flags whose boxes are removed, e.g. `occluded,truncated,group`.
    #[arg(long)]
    pub drop: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OrderArg {
    Shuffled,
    Sorted,
    Original,
}

impl From<OrderArg> for StrategyKind {
    fn from(o: OrderArg) -> Self {
        match o {
            OrderArg::Shuffled => StrategyKind::Shuffled,
            OrderArg::Sorted => StrategyKind::Sorted,
            OrderArg::Original => StrategyKind::Original,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RegimeArg {
    Iterative,
    Cumulative,
    TwoStage,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DetectorArg {
    Synthetic,
    Bridge,
    Perfect,
    Null,
}

#[derive(Debug, Clone, Args)]
pub struct CampaignArgs {
    /// Canonical dataset file.
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long, default_value_t = 50)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0.5)]
    pub iou: f64,
    #[arg(long, default_value_t = 0.5)]
    pub conf: f64,
    /// First-fold fraction for the two-stage regime.
    #[arg(long)]
    pub split: Option<f64>,
    /// Restrict the campaign to one class.
    #[arg(long = "class")]
    pub class: Option<String>,
    #[arg(long, value_enum, default_value_t = DetectorArg::Synthetic)]
    pub detector: DetectorArg,
    /// Adapter command line, or `tcp://host:port` for a listening adapter.
    #[arg(long)]
    pub cmd: Option<String>,
    /// Image directory handed to the adapter.
    #[arg(long)]
    pub images: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "annoloop-out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub campaign: CampaignArgs,
    #[arg(long, value_enum, default_value_t = OrderArg::Shuffled)]
    pub order: OrderArg,
    #[arg(long, value_enum, default_value_t = RegimeArg::Iterative)]
    pub regime: RegimeArg,
    /// One campaign per class, each with a fresh detector.
    #[arg(long)]
    pub per_class: bool,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub campaign: CampaignArgs,
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [OrderArg::Shuffled, OrderArg::Sorted, OrderArg::Original])]
    pub order: Vec<OrderArg>,
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [RegimeArg::Iterative])]
    pub regime: Vec<RegimeArg>,
    /// Runs per cell, with seeds `seed..seed+repeats`.
    #[arg(long, default_value_t = 1)]
    pub repeats: u64,
    /// Worker threads; 0 uses all cores.
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{summary}")]
    Parse {
        summary: String,
        diagnostics: Vec<String>,
    },
    #[error("detector failure: {0}")]
    Detector(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse { .. } => 2,
            CliError::Detector(_) => 3,
            CliError::Config(_) => 4,
            CliError::Io(_) => 1,
        }
    }

    pub fn diagnostics(&self) -> &[String] {
        match self {
            CliError::Parse { diagnostics, .. } => diagnostics,
            _ => &[],
        }
    }
}

impl From<CampaignError> for CliError {
    fn from(e: CampaignError) -> Self {
        match e {
            CampaignError::Detector(d) => CliError::Detector(d.to_string()),
            other => CliError::Config(other.to_string()),
        }
    }
}

impl From<DetectorError> for CliError {
    fn from(e: DetectorError) -> Self {
        CliError::Detector(e.to_string())
    }
}

fn ingest(source: &Path, e: IngestError) -> CliError {
    CliError::Parse {
        summary: format!("failed to read {}: {e}", source.display()),
        diagnostics: e.diagnostics(),
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path).map(BufReader::new).map_err(|e| CliError::Parse {
        summary: format!("cannot open {}: {e}", path.display()),
        diagnostics: Vec::new(),
    })
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(|e| io_err(path, e))
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Convert(a) => convert(&a).map(|s| print!("{s}")),
        Command::Simulate(a) => simulate(&a).map(|s| print!("{s}")),
        Command::Compare(a) => compare(&a).map(|t| print!("{}", t.to_text())),
        Command::Generate(a) => generate(&a).map(|s| print!("{s}")),
    }
}

pub fn generate(a: &GenerateArgs) -> Result<String, CliError> {
    if a.num_images == 0 || a.classes.is_empty() || a.classes.iter().any(String::is_empty) {
        return Err(CliError::Config("need at least one image and one non-empty class".into()));
    }
    let cfg = SyntheticDatasetConfig {
        num_images: a.num_images,
        classes: a.classes.clone(),
        max_objects: a.max_objects,
        video: a.video,
        seed: a.seed,
        ..SyntheticDatasetConfig::default()
    };
    let d = synthetic::generate(&cfg);
    let mut out = create(&a.out)?;
    write_canonical(&d, &mut out).map_err(|e| io_err(&a.out, e))?;
    Ok(format!("wrote {}: ", a.out.display()) + &counts_line(&d))
}

fn counts_line(d: &Dataset) -> String {
    format!(
        "{} images, {} objects, {} classes\n",
        d.images.len(),
        d.num_objects(),
        d.classes.len()
    )
}

/// Converts and writes the canonical file; returns the summary text.
pub fn convert(a: &ConvertArgs) -> Result<String, CliError> {
    let drop: BTreeSet<ObjectFlag> = match &a.drop {
        Some(s) => parse_flag_list(s).map_err(CliError::Config)?,
        None => BTreeSet::new(),
    };
    if a.from != InputFormat::Openimages && (a.meta.is_some() || a.labels.is_some()) {
        return Err(CliError::Config("--meta and --labels only apply to --from openimages".into()));
    }
    let dataset = match a.from {
        InputFormat::Voc => parse_voc_dir(&a.input).map_err(|e| ingest(&a.input, e))?,
        InputFormat::Coco => {
            let json = fs::read_to_string(&a.input).map_err(|e| ingest(&a.input, e.into()))?;
            parse_coco(&a.input.display().to_string(), &json).map_err(|e| ingest(&a.input, e))?
        }
        InputFormat::Openimages => {
            let meta_path = a
                .meta
                .as_ref()
                .ok_or_else(|| CliError::Config("--from openimages needs --meta <sizes.csv>".into()))?;
            let meta = parse_image_sizes(&meta_path.display().to_string(), open(meta_path)?)
                .map_err(|e| ingest(meta_path, e))?;
            let labels = match &a.labels {
                Some(p) => Some(
                    parse_class_descriptions(&p.display().to_string(), open(p)?)
                        .map_err(|e| ingest(p, e))?,
                ),
                None => None,
            };
            let import = parse_openimages(
                &a.input.display().to_string(),
                open(&a.input)?,
                &meta,
                labels.as_ref(),
            )
            .map_err(|e| ingest(&a.input, e))?;
            if !import.missing_dimensions.is_empty() {
                return Err(CliError::Parse {
                    summary: format!(
                        "{} image(s) in {} have no dimensions in {}",
                        import.missing_dimensions.len(),
                        a.input.display(),
                        meta_path.display()
                    ),
                    diagnostics: import
                        .missing_dimensions
                        .iter()
                        .map(|id| format!("{id}: missing width/height"))
                        .collect(),
                });
            }
            import.dataset
        }
    };
    let before = dataset.num_objects();
    let dataset = dataset.filter_objects(&drop);
    let mut out = create(&a.out)?;
    write_canonical(&dataset, &mut out).map_err(|e| io_err(&a.out, e))?;
    let mut s = format!("wrote {}: ", a.out.display()) + &counts_line(&dataset);
    if !drop.is_empty() {
        s += &format!("dropped {} flagged objects\n", before - dataset.num_objects());
    }
    Ok(s)
}

pub fn load_dataset(path: &Path) -> Result<Dataset, CliError> {
    read_canonical(open(path)?).map_err(|e| ingest(path, e))
}

fn regime(r: RegimeArg, split: Option<f64>) -> Result<Regime, CliError> {
    match (r, split) {
        (RegimeArg::TwoStage, s) => Ok(Regime::TwoStage {
            first_fold_fraction: s.unwrap_or(DEFAULT_SPLIT),
        }),
        (_, Some(_)) => Err(CliError::Config("--split only applies to --regime two-stage".into())),
        (RegimeArg::Iterative, None) => Ok(Regime::Iterative),
        (RegimeArg::Cumulative, None) => Ok(Regime::Cumulative),
    }
}

impl CampaignArgs {
    pub fn config(&self, order: OrderArg, regime_arg: RegimeArg, seed: u64) -> Result<CampaignConfig, CliError> {
        let cfg = CampaignConfig {
            batch_size: self.batch_size,
            ordering: StrategyKind::from(order).with_seed(seed),
            iou_threshold: self.iou,
            confidence_threshold: self.conf,
            regime: regime(regime_arg, self.split)?,
            class_scope: self.class.clone(),
            seed,
            ..CampaignConfig::default()
        };
        cfg.validate()?;
        if self.detector == DetectorArg::Bridge && self.cmd.is_none() {
            return Err(CliError::Config("--detector bridge needs --cmd".into()));
        }
        if self.detector != DetectorArg::Bridge && (self.cmd.is_some() || self.images.is_some()) {
            return Err(CliError::Config("--cmd and --images only apply to --detector bridge".into()));
        }
        Ok(cfg)
    }

    /// A fresh detector session for a campaign over `d`.
    pub fn detector(&self, d: &Dataset, seed: u64) -> Result<Box<dyn DetectorSession>, DetectorError> {
        Ok(match self.detector {
            DetectorArg::Synthetic => {
                let cfg = SyntheticDetectorConfig {
                    seed,
                    confidence_threshold: self.conf,
                    ..SyntheticDetectorConfig::default()
                };
                Box::new(SyntheticDetector::new(cfg, d.classes.clone()))
            }
            DetectorArg::Perfect => Box::new(PerfectDetector),
            DetectorArg::Null => Box::new(NullDetector),
            DetectorArg::Bridge => {
                let cmd = self.cmd.as_deref().unwrap_or_default();
                let launch = match cmd.strip_prefix("tcp://") {
                    Some(addr) => BridgeLaunch::Tcp(addr.to_string()),
                    None => BridgeLaunch::from_command_line(cmd, self.images.clone())?,
                };
                Box::new(BridgeSession::connect(&launch, BridgeOptions::new(d.classes.clone()))?)
            }
        })
    }
}

/// Writes `report.json`, `batches.csv` and `curves.csv` into `dir`.
pub fn write_run(dir: &Path, run: &CampaignRun) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let p = dir.join("report.json");
    write_report_json(&run.report, create(&p)?).map_err(|e| io_err(&p, e))?;
    let p = dir.join("batches.csv");
    write_batches_csv(&run.report, create(&p)?).map_err(|e| io_err(&p, e))?;
    let p = dir.join("curves.csv");
    write_curves_csv(&run.report, create(&p)?).map_err(|e| io_err(&p, e))?;
    Ok(())
}

fn path_component(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' })
        .collect()
}

/// Runs `simulate`, writes the report files and returns the summary text.
pub fn simulate(a: &SimulateArgs) -> Result<String, CliError> {
    let c = &a.campaign;
    let cfg = c.config(a.order, a.regime, c.seed)?;
    if a.per_class && c.class.is_some() {
        return Err(CliError::Config("--per-class and --class are mutually exclusive".into()));
    }
    let d = load_dataset(&c.dataset)?;
    if a.per_class {
        let factory = |scoped: &Dataset| c.detector(scoped, c.seed);
        let runs = run_per_class(&d, &d.classes, &cfg, &factory)?;
        let mut s = String::new();
        for (class, run) in &runs.reports {
            write_run(&c.out.join(path_component(class)), run)?;
            s += &format!("== {class}\n{}", summary(&run.report));
        }
        s += &match runs.average_reduction {
            Some(r) => format!("average per-class reduction: {r:.2}%\n"),
            None => "average per-class reduction: undefined\n".to_string(),
        };
        return Ok(s);
    }
    let mut det = c.detector(&d, c.seed)?;
    let run = run_campaign(&d, &cfg, det.as_mut())?;
    drop(det);
    info!(
        "campaign finished in {:.3}s (train {:.3}s, predict {:.3}s, score {:.3}s)",
        run.timings.total_secs, run.timings.train_secs, run.timings.predict_secs, run.timings.score_secs
    );
    write_run(&c.out, &run)?;
    Ok(summary(&run.report))
}

/// Runs every (order, regime, repeat) campaign, writes `comparison.csv`
/// and `comparison.txt`, and returns the table.
pub fn compare(a: &CompareArgs) -> Result<ComparisonTable, CliError> {
    let c = &a.campaign;
    if a.repeats == 0 {
        return Err(CliError::Config("--repeats must be at least 1".into()));
    }
    let mut cells = Vec::new();
    for &o in &a.order {
        for &r in &a.regime {
            c.config(o, r, c.seed)?;
            cells.push((o, r));
        }
    }
    let d = load_dataset(&c.dataset)?;
    let jobs: Vec<(usize, OrderArg, RegimeArg, u64)> = cells
        .iter()
        .enumerate()
        .flat_map(|(i, &(o, r))| (0..a.repeats).map(move |k| (i, o, r, c.seed.wrapping_add(k))))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(a.jobs)
        .build()
        .map_err(|e| CliError::Io(e.to_string()))?;
    let results: Vec<Result<CampaignRun, CliError>> = pool.install(|| {
        jobs.par_iter()
            .map(|&(_, o, r, seed)| {
                let cfg = c.config(o, r, seed)?;
                let mut det = c.detector(&d, seed)?;
                Ok(run_campaign(&d, &cfg, det.as_mut())?)
            })
            .collect()
    });
    let mut grouped: Vec<Vec<CampaignRun>> = vec![Vec::new(); cells.len()];
    for (job, res) in jobs.iter().zip(results) {
        grouped[job.0].push(res?);
    }
    let table = ComparisonTable::build(
        cells
            .iter()
            .zip(grouped)
            .map(|(_, runs)| ComparisonCell {
                strategy: runs[0].report.config.ordering.name().to_string(),
                regime: runs[0].report.config.regime.name(),
                runs,
            })
            .collect(),
    );
    fs::create_dir_all(&c.out).map_err(|e| io_err(&c.out, e))?;
    let p = c.out.join("comparison.csv");
    table.write_csv(create(&p)?).map_err(|e| io_err(&p, e))?;
    let p = c.out.join("comparison.txt");
    fs::write(&p, table.to_text()).map_err(|e| io_err(&p, e))?;
    Ok(table)
}
