//! `molehill` command-line tool.
//!
//! Every subcommand reads and writes plain files so steps can be chained by
//! hand or through `pipeline`. JSON output is pretty-printed with sorted
//! keys. Exit codes: 0 success, 1 usage error, 2 data error, 3 transport
//! error.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use molehill::chartgen::{self, Chart, ChartMetrics};
use molehill::dataset::{self, AnnotationDataset, LexiconMode};
use molehill::detect::{self, DetectionParams, LabelParams, LabeledRegion, SlopeLabel};
use molehill::io::{self as mio, LabeledSignal};
use molehill::llm::{self, FeatureContext, HttpTransport, LlmError, QueryConfig};
use molehill::render::{self, RenderSpec};
use molehill::semantics::{self, SemanticsReport};
use molehill::sigproc::Signal;
use molehill::synth::{self, SynthConfig};

#[derive(Parser, Debug)]
#[command(name = "molehill", version, about = "Quantified semantics of line-chart annotations")]
struct Cli {
    /// Print progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate random seven-segment stimulus charts.
    Generate(GenerateArgs),
    /// Shape-diversity metrics for a chart file.
    Metrics(MetricsArgs),
    /// Join charts, annotations and a lexicon into a dataset file.
    Ingest(IngestArgs),
    /// Per-word slope, co-occurrence, agreement, purity and clustering statistics.
    Analyze(AnalyzeArgs),
    /// Find annotated shapes in an unlabeled signal.
    Detect(DetectArgs),
    /// Label the linear pieces of a signal with adjective-verb pairs.
    Label(LabelArgs),
    /// Draw a signal with its regions and labels as SVG.
    Render(RenderArgs),
    /// Build language-model prompts for a detected region.
    Prompt(PromptArgs),
    /// Run generate, annotate, analyze, detect, label and render into one directory.
    Pipeline(PipelineArgs),
}

#[derive(Args, Debug)]
struct GenerateArgs {
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 16)]
    count: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct MetricsArgs {
    #[arg(long)]
    charts: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct IngestArgs {
    #[arg(long)]
    charts: PathBuf,
    #[arg(long)]
    annotations: PathBuf,
    #[arg(long)]
    lexicon: PathBuf,
    /// Reject words missing from the lexicon instead of tagging them "other".
    #[arg(long)]
    strict: bool,
    /// Dataset file; `.json` is written as JSON, anything else as bincode.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct AnalyzeArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the word dendrogram in Newick format.
    #[arg(long)]
    newick: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Copy)]
struct DetectionFlags {
    #[arg(long, default_value_t = 0.05)]
    max_mae: f64,
    #[arg(long, default_value_t = -1.5, allow_hyphen_values = true)]
    max_z: f64,
    #[arg(long, default_value_t = 1.0)]
    window_scale: f64,
    #[arg(long, default_value_t = 2)]
    merge_gap: usize,
}

impl DetectionFlags {
    fn params(&self) -> DetectionParams {
        DetectionParams {
            window_scale: self.window_scale,
            max_mae: self.max_mae,
            max_z: self.max_z,
            merge_gap: self.merge_gap,
        }
    }
}

#[derive(Args, Debug)]
struct DetectArgs {
    /// Two-column `x,y` CSV with a header row.
    #[arg(long)]
    signal: PathBuf,
    #[arg(long)]
    dataset: PathBuf,
    #[command(flatten)]
    flags: DetectionFlags,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Copy)]
struct LabelFlags {
    #[arg(long, default_value_t = 0.5)]
    slope_window: f64,
    /// RDP tolerance on the signal normalized to the unit square.
    #[arg(long, default_value_t = 0.02)]
    epsilon: f64,
    /// Multiplier from normalized rise-over-run to chart slope units.
    #[arg(long, default_value_t = detect::GENERATOR_ASPECT)]
    aspect: f64,
}

impl LabelFlags {
    fn params(&self) -> LabelParams {
        LabelParams { epsilon: self.epsilon, slope_window: self.slope_window, aspect: self.aspect }
    }
}

#[derive(Args, Debug)]
struct LabelArgs {
    #[arg(long)]
    signal: PathBuf,
    /// Output of `analyze`.
    #[arg(long)]
    stats: PathBuf,
    #[command(flatten)]
    flags: LabelFlags,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct RenderArgs {
    #[arg(long)]
    signal: PathBuf,
    #[arg(long)]
    regions: Option<PathBuf>,
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long, default_value_t = 800)]
    width: u32,
    #[arg(long, default_value_t = 400)]
    height: u32,
    #[arg(long, default_value_t = 40)]
    margin: u32,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum PromptKind {
    Feature,
    Resources,
}

#[derive(Args, Debug)]
struct PromptArgs {
    /// Output of `detect`; the signal's x column must hold ISO dates.
    #[arg(long)]
    region: PathBuf,
    /// Which region of the file to describe.
    #[arg(long, default_value_t = 0)]
    index: usize,
    #[arg(long)]
    symbol: String,
    #[arg(long, value_enum, default_value_t = PromptKind::Feature)]
    kind: PromptKind,
    /// Send the prompt to the endpoint named by MOLEHILL_LLM_URL.
    #[arg(long)]
    send: bool,
    #[arg(long, default_value_t = 60)]
    timeout_secs: u64,
    #[arg(long, default_value_t = 2)]
    retries: u32,
}

#[derive(Args, Debug)]
struct PipelineArgs {
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 24)]
    participants: usize,
    #[arg(long)]
    out_dir: PathBuf,
    #[command(flatten)]
    detection: DetectionFlags,
    #[command(flatten)]
    labeling: LabelFlags,
}

enum Failure {
    Usage(String),
    Data(anyhow::Error),
    Transport(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Data(e)
    }
}

type CmdResult = Result<(), Failure>;

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

struct Ctx {
    verbose: bool,
}

impl Ctx {
    fn note(&self, msg: impl AsRef<str>) {
        if self.verbose {
            eprintln!("{}", msg.as_ref());
        }
    }

    fn emit(&self, out: Option<&Path>, text: &str) -> anyhow::Result<()> {
        match out {
            Some(path) => {
                std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
                self.note(format!("wrote {}", path.display()));
            }
            None => print!("{text}"),
        }
        Ok(())
    }

    fn emit_json<T: Serialize>(&self, out: Option<&Path>, value: &T) -> anyhow::Result<()> {
        self.emit(out, &mio::to_sorted_json(value)?)
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn read_signal(path: &Path) -> anyhow::Result<LabeledSignal> {
    let file = std::fs::File::open(path).with_context(|| format!("reading {}", path.display()))?;
    mio::read_signal_csv(std::io::BufReader::new(file)).with_context(|| format!("parsing {}", path.display()))
}

fn generate(ctx: &Ctx, a: &GenerateArgs) -> CmdResult {
    if a.count == 0 {
        return Err(usage("--count must be at least 1"));
    }
    ctx.emit_json(a.out.as_deref(), &chartgen::generate_batch(a.seed, a.count))?;
    Ok(())
}

#[derive(Serialize)]
struct ChartMetricsRow {
    id: String,
    metrics: ChartMetrics,
}

#[derive(Serialize)]
struct MetricsReport {
    charts: Vec<ChartMetricsRow>,
    inflection_histogram: BTreeMap<usize, usize>,
}

fn metrics(ctx: &Ctx, a: &MetricsArgs) -> CmdResult {
    let charts: Vec<Chart> = read_json(&a.charts)?;
    let mut histogram = BTreeMap::new();
    let rows = charts
        .iter()
        .map(|c| {
            c.validate().with_context(|| format!("chart {}", c.id))?;
            let m = chartgen::chart_metrics(c);
            *histogram.entry(m.inflection_count).or_insert(0) += 1;
            Ok(ChartMetricsRow { id: c.id.clone(), metrics: m })
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    ctx.emit_json(a.out.as_deref(), &MetricsReport { charts: rows, inflection_histogram: histogram })?;
    Ok(())
}

fn ingest(ctx: &Ctx, a: &IngestArgs) -> CmdResult {
    let mode = if a.strict { LexiconMode::Strict } else { LexiconMode::Lenient };
    let ds = dataset::ingest(&a.charts, &a.annotations, &a.lexicon, mode).map_err(anyhow::Error::from)?;
    ds.save(&a.out).map_err(anyhow::Error::from)?;
    ctx.note(format!("{} records over {} charts -> {}", ds.records().len(), ds.charts().len(), a.out.display()));
    Ok(())
}

fn analyze(ctx: &Ctx, a: &AnalyzeArgs) -> CmdResult {
    let ds = AnnotationDataset::load(&a.dataset).map_err(anyhow::Error::from)?;
    let report = semantics::analyze(&ds).map_err(anyhow::Error::from)?;
    if let Some(path) = &a.newick {
        ctx.emit(Some(path), &format!("{}\n", report.dendrogram.to_newick()))?;
    }
    ctx.emit_json(a.out.as_deref(), &report)?;
    Ok(())
}

fn check_detection(flags: &DetectionFlags) -> CmdResult {
    if !(flags.window_scale.is_finite() && flags.window_scale > 0.0) {
        return Err(usage("--window-scale must be positive"));
    }
    if flags.max_mae.is_nan() || flags.max_mae < 0.0 {
        return Err(usage("--max-mae must be non-negative"));
    }
    if flags.max_z.is_nan() {
        return Err(usage("--max-z must be a number"));
    }
    Ok(())
}

fn check_labeling(flags: &LabelFlags) -> CmdResult {
    if !(flags.slope_window >= 0.0 && flags.epsilon >= 0.0) {
        return Err(usage("--slope-window and --epsilon must be non-negative"));
    }
    if !(flags.aspect.is_finite() && flags.aspect > 0.0) {
        return Err(usage("--aspect must be positive"));
    }
    Ok(())
}

fn run_detection(ds: &AnnotationDataset, signal: &Signal, flags: &DetectionFlags) -> anyhow::Result<Vec<LabeledRegion>> {
    let kernels = detect::build_kernels(ds)?;
    Ok(detect::find_shapes(signal, &kernels, &flags.params())?)
}

fn detect_cmd(ctx: &Ctx, a: &DetectArgs) -> CmdResult {
    check_detection(&a.flags)?;
    let signal = read_signal(&a.signal)?;
    let ds = AnnotationDataset::load(&a.dataset).map_err(anyhow::Error::from)?;
    let regions = run_detection(&ds, &signal.signal, &a.flags)?;
    ctx.note(format!("{} regions", regions.len()));
    ctx.emit_json(a.out.as_deref(), &regions)?;
    Ok(())
}

fn label_cmd(ctx: &Ctx, a: &LabelArgs) -> CmdResult {
    check_labeling(&a.flags)?;
    let signal = read_signal(&a.signal)?;
    let report: SemanticsReport = read_json(&a.stats)?;
    let labels =
        detect::label_slopes(&signal.signal, &report.pair_table, &a.flags.params()).map_err(anyhow::Error::from)?;
    ctx.emit_json(a.out.as_deref(), &labels)?;
    Ok(())
}

fn render_cmd(ctx: &Ctx, a: &RenderArgs) -> CmdResult {
    let spec = RenderSpec { width: a.width, height: a.height, margin: a.margin, ..Default::default() };
    if spec.width <= 2 * spec.margin || spec.height <= 2 * spec.margin {
        return Err(usage("--width and --height must exceed twice --margin"));
    }
    let signal = read_signal(&a.signal)?;
    let regions: Vec<LabeledRegion> = a.regions.as_deref().map(read_json).transpose()?.unwrap_or_default();
    let labels: Vec<SlopeLabel> = a.labels.as_deref().map(read_json).transpose()?.unwrap_or_default();
    let svg = render::render_svg(&signal.signal, &regions, &labels, &spec).map_err(anyhow::Error::from)?;
    ctx.emit(a.out.as_deref(), &svg)?;
    Ok(())
}

fn prompt_cmd(ctx: &Ctx, a: &PromptArgs) -> CmdResult {
    let transport = if a.send {
        Some(HttpTransport::from_env().map_err(|e| usage(e.to_string()))?)
    } else {
        None
    };
    let regions: Vec<LabeledRegion> = read_json(&a.region)?;
    let region = regions
        .get(a.index)
        .ok_or_else(|| anyhow!("region index {} out of range ({} regions)", a.index, regions.len()))?;
    let date = |x: f64| mio::date_from_days(x).ok_or_else(|| anyhow!("x value {x} is not a date"));
    let feature = FeatureContext {
        symbol: a.symbol.clone(),
        start_date: date(region.start_x)?,
        end_date: date(region.end_x)?,
        label: region.top_word().to_string(),
    };
    let prompt = match a.kind {
        PromptKind::Feature => llm::render_feature_prompt(&feature),
        PromptKind::Resources => llm::render_resources_prompt(&feature),
    }
    .map_err(anyhow::Error::from)?;
    let Some(transport) = transport else {
        println!("{prompt}");
        return Ok(());
    };
    let config = QueryConfig { timeout: std::time::Duration::from_secs(a.timeout_secs), retries: a.retries };
    ctx.note(format!("sending prompt to {}", transport.url));
    let reply = llm::query(&transport, &prompt, &config).map_err(|e| match e {
        LlmError::Transport(_) => Failure::Transport(e.into()),
        other => Failure::Data(other.into()),
    })?;
    match a.kind {
        PromptKind::Feature => println!("{reply}"),
        PromptKind::Resources => {
            let links = llm::parse_resources(&reply).map_err(anyhow::Error::from)?;
            ctx.emit_json(None, &links)?;
        }
    }
    Ok(())
}

/// A fresh chart outside the annotated batch, as an unlabeled signal.
fn demo_signal(seed: u64) -> Signal {
    let chart = chartgen::generate_chart(seed, "Demo");
    Signal::new(chart.xs(), chart.unscaled_ys()).expect("generator output is a valid signal")
}

fn pipeline(ctx: &Ctx, a: &PipelineArgs) -> CmdResult {
    check_detection(&a.detection)?;
    check_labeling(&a.labeling)?;
    if a.participants == 0 {
        return Err(usage("--participants must be at least 1"));
    }
    let dir = &a.out_dir;
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let data = synth::synthesize(&SynthConfig { seed: a.seed, charts: 16, participants: a.participants });
    data.write_dir(dir).with_context(|| format!("writing fixture files to {}", dir.display()))?;
    let ds = data.dataset().map_err(anyhow::Error::from)?;
    ds.save(&dir.join("dataset.json")).map_err(anyhow::Error::from)?;
    let report = semantics::analyze(&ds).map_err(anyhow::Error::from)?;
    ctx.emit_json(Some(&dir.join("stats.json")), &report)?;
    ctx.emit(Some(&dir.join("tree.nwk")), &format!("{}\n", report.dendrogram.to_newick()))?;

    let signal = demo_signal(a.seed.wrapping_mul(7919));
    ctx.emit(Some(&dir.join("signal.csv")), &mio::write_signal_csv(&signal))?;
    let regions = run_detection(&ds, &signal, &a.detection)?;
    ctx.emit_json(Some(&dir.join("regions.json")), &regions)?;
    let labels = if report.pair_table.is_empty() {
        Vec::new()
    } else {
        detect::label_slopes(&signal, &report.pair_table, &a.labeling.params()).map_err(anyhow::Error::from)?
    };
    ctx.emit_json(Some(&dir.join("labels.json")), &labels)?;
    let svg = render::render_svg(&signal, &regions, &labels, &RenderSpec::default()).map_err(anyhow::Error::from)?;
    ctx.emit(Some(&dir.join("chart.svg")), &svg)?;
    Ok(())
}

fn run(cli: Cli) -> CmdResult {
    let ctx = Ctx { verbose: cli.verbose };
    match &cli.command {
        Command::Generate(a) => generate(&ctx, a),
        Command::Metrics(a) => metrics(&ctx, a),
        Command::Ingest(a) => ingest(&ctx, a),
        Command::Analyze(a) => analyze(&ctx, a),
        Command::Detect(a) => detect_cmd(&ctx, a),
        Command::Label(a) => label_cmd(&ctx, a),
        Command::Render(a) => render_cmd(&ctx, a),
        Command::Prompt(a) => prompt_cmd(&ctx, a),
        Command::Pipeline(a) => pipeline(&ctx, a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Transport(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(3)
        }
    }
}
