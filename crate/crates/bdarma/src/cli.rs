//! Command-line front end.
//!
//! Every command resolves its configuration first (profile defaults, then
//! the `--config` file, then flags), validates it, and only then creates
//! its output location and writes a manifest. Validation failures exit
//! with 1 and leave nothing behind; runtime failures exit with 2.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use bdarma_core::forecast::{forecast_thetas, ForecastOptions};
use bdarma_core::ingest::{split, to_shares};
use bdarma_core::metrics::quantile;
use bdarma_core::model::{DesignDescriptor, FourierDesign, ModelShape};
use bdarma_core::posterior::Posterior;
use bdarma_core::prior::{PriorConfig, PriorFamily};
use bdarma_core::sampler::{sample, ProgressEvent, SamplerConfig};
use bdarma_core::simplex::Composition;
use bdarma_core::simulator::{builtin_dgp, simulate, DgpConfig};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::application::{run_application, ApplicationConfig, ApplicationReport, PanelSource};
use crate::error::{Error, Result};
use crate::io::{
    component_names, create_dir, read_draws, read_json, read_series, write_draws, write_json, write_series,
    write_table, write_text,
};
use crate::manifest::{merge, unwrap_config, RunManifest, MANIFEST_FILE};
use crate::panel::{read_long, read_wide, write_long, DatedPanel, ValidationReport};
use crate::report::{write_application_tables, write_study_tables};
use crate::study::{run_study, PriorChoice, Profile, Scenario, StudyConfig, StudyReport, TaskEvent};
use crate::svg;

#[derive(Debug, Parser)]
#[command(name = "bdarma", version, about = "Bayesian Dirichlet ARMA models for compositional time series")]
pub struct Cli {
    /// Worker threads (default: logical cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Suppress progress lines.
    #[arg(long, short, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a series from a built-in or configured process.
    Simulate(SimulateArgs),
    /// Fit a model to a composition CSV.
    Fit(FitArgs),
    /// Forecast from a fitted model's draws.
    Forecast(ForecastArgs),
    /// Validate a sector panel and turn it into shares.
    Ingest(IngestArgs),
    /// Run a simulation study or the sector application.
    Study(StudyArgs),
    /// Rebuild tables and charts from a saved report.
    Report(ReportArgs),
}

/// Seed taken from the flag or, failing that, `BDARMA_SEED`.
#[derive(Debug, Clone, Args)]
pub struct SeedArg {
    /// Master seed; overrides the config file.
    #[arg(long, env = "BDARMA_SEED")]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// JSON config, or a manifest of an earlier run.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Built-in process: main or supplementary.
    #[arg(long)]
    pub dgp: Option<String>,
    /// Series length.
    #[arg(long = "T")]
    pub len: Option<usize>,
    #[command(flatten)]
    pub seed: SeedArg,
    /// Output CSV; the manifest is written next to it.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DesignKind {
    /// Per-component intercept.
    Intercept,
    /// Intercept plus weekly and annual Fourier terms.
    Fourier,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Composition CSV.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long = "P")]
    pub p: Option<usize>,
    #[arg(long = "Q")]
    pub q: Option<usize>,
    /// informative, horseshoe, laplace, spike-slab or hierarchical.
    #[arg(long)]
    pub prior: Option<String>,
    /// Which default hyperparameters to use: sim-correct, sim-overfit,
    /// sim-underfit or application.
    #[arg(long)]
    pub prior_set: Option<String>,
    #[arg(long, value_enum)]
    pub design: Option<DesignKind>,
    #[arg(long, value_enum)]
    pub profile: Option<Profile>,
    #[arg(long)]
    pub chains: Option<usize>,
    #[arg(long)]
    pub warmup: Option<usize>,
    #[arg(long)]
    pub sampling: Option<usize>,
    #[command(flatten)]
    pub seed: SeedArg,
    #[arg(long, default_value = "bdarma-fit")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ForecastArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory of `bdarma fit`.
    #[arg(long)]
    pub fit: Option<PathBuf>,
    /// History to forecast from (default: the fitted data).
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub horizon: Option<usize>,
    /// Use every n-th draw.
    #[arg(long)]
    pub thin: Option<usize>,
    /// Propagate mean compositions instead of sampled ones.
    #[arg(long)]
    pub noise_free: bool,
    #[command(flatten)]
    pub seed: SeedArg,
    #[arg(long, default_value = "bdarma-forecast")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PanelFormat {
    /// `date,sector,value` rows.
    Long,
    /// `date,<sector...>` rows.
    Wide,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Panel CSV.
    #[arg(long, conflicts_with = "synthetic")]
    pub input: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "long")]
    pub format: PanelFormat,
    /// Use the bundled synthetic panel.
    #[arg(long)]
    pub synthetic: bool,
    /// Holdout length.
    #[arg(long)]
    pub test_len: Option<usize>,
    #[command(flatten)]
    pub seed: SeedArg,
    #[arg(long, default_value = "bdarma-ingest")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum StudyKind {
    Simulation,
    Application,
}

#[derive(Debug, Args)]
pub struct StudyArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub kind: Option<StudyKind>,
    #[arg(long, value_enum)]
    pub profile: Option<Profile>,
    /// Comma-separated prior families.
    #[arg(long, value_delimiter = ',')]
    pub priors: Option<Vec<String>>,
    /// Comma-separated scenarios (simulation only).
    #[arg(long, value_delimiter = ',')]
    pub scenarios: Option<Vec<String>>,
    /// Replicates (simulation only).
    #[arg(long)]
    pub replicates: Option<usize>,
    #[arg(long)]
    pub thin: Option<usize>,
    #[command(flatten)]
    pub seed: SeedArg,
    #[arg(long, default_value = "bdarma-study")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// `report.json` written by `bdarma study`.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

/// Configuration of `simulate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    /// A built-in name or a full process description.
    pub dgp: DgpChoice,
    #[serde(rename = "T")]
    pub len: Option<usize>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DgpChoice {
    Builtin(String),
    Custom(Box<DgpConfig>),
}

impl Default for SimulateConfig {
    fn default() -> Self {
        SimulateConfig {
            dgp: DgpChoice::Builtin("main".into()),
            len: None,
            seed: 0,
        }
    }
}

impl SimulateConfig {
    pub fn resolve(&self) -> Result<DgpConfig> {
        let mut dgp = match &self.dgp {
            DgpChoice::Builtin(name) => builtin_dgp(name)?,
            DgpChoice::Custom(d) => (**d).clone(),
        };
        if let Some(len) = self.len {
            dgp = dgp.with_len(len);
        }
        let dgp = dgp.with_seed(self.seed);
        dgp.validate()?;
        Ok(dgp)
    }
}

/// Configuration of `fit`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub data: PathBuf,
    #[serde(rename = "P")]
    pub p: usize,
    #[serde(rename = "Q")]
    pub q: usize,
    pub prior: PriorChoice,
    pub prior_set: String,
    /// Defaults to a per-component intercept.
    pub design: Option<DesignDescriptor>,
    pub sampler: SamplerConfig,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            data: PathBuf::new(),
            p: 1,
            q: 0,
            prior: PriorChoice::Family(PriorFamily::Informative),
            prior_set: "sim-correct".into(),
            design: None,
            sampler: Profile::Desk.sampler(),
            seed: 0,
        }
    }
}

/// What `fit` leaves for `forecast`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub shape: ModelShape,
    pub prior: PriorConfig,
    pub data: PathBuf,
    pub components: Vec<String>,
}

/// Configuration of `forecast`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForecastConfig {
    pub fit: PathBuf,
    pub data: Option<PathBuf>,
    pub horizon: usize,
    pub thin: usize,
    pub noise_free: bool,
    pub seed: u64,
}

impl Default for ForecastConfig {
    fn default() -> Self {
        ForecastConfig {
            fit: PathBuf::new(),
            data: None,
            horizon: 20,
            thin: 1,
            noise_free: false,
            seed: 0,
        }
    }
}

/// Configuration of `ingest`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestConfig {
    pub data: PanelSource,
    pub test_len: usize,
}

impl Default for IngestConfig {
    fn default() -> Self {
        IngestConfig {
            data: PanelSource::default(),
            test_len: 126,
        }
    }
}

/// Parses a name through its serde representation.
fn parse_named<T: DeserializeOwned>(kind: &str, name: &str) -> Result<T> {
    serde_json::from_value(Value::String(name.trim().to_ascii_lowercase()))
        .map_err(|_| Error::invalid(format!("unknown {kind} '{name}'")))
}

fn load_value(path: Option<&Path>, command: &str) -> Result<Value> {
    match path {
        None => Ok(Value::Object(Default::default())),
        Some(p) => unwrap_config(read_json::<Value>(p)?, command),
    }
}

/// Defaults overlaid with the file contents, as a typed config.
fn layered<T: Serialize + DeserializeOwned>(defaults: &T, file: Value, source: Option<&Path>) -> Result<T> {
    let mut base = serde_json::to_value(defaults).map_err(|e| Error::failed(e.to_string()))?;
    merge(&mut base, file);
    serde_json::from_value(base).map_err(|e| {
        let src = source.map(|p| p.display().to_string()).unwrap_or_else(|| "config".into());
        Error::invalid(format!("{src}: {e}"))
    })
}

fn take_key<T: DeserializeOwned>(value: &mut Value, key: &str) -> Result<Option<T>> {
    match value.as_object_mut().and_then(|m| m.remove(key)) {
        None => Ok(None),
        Some(v) => serde_json::from_value(v)
            .map(Some)
            .map_err(|e| Error::invalid(format!("config field '{key}': {e}"))),
    }
}

/// Output directory and the manifest inside it.
struct Run {
    dir: PathBuf,
    manifest_path: PathBuf,
    manifest: RunManifest,
}

impl Run {
    fn start(dir: &Path, manifest: RunManifest) -> Result<Self> {
        create_dir(dir)?;
        let manifest_path = dir.join(MANIFEST_FILE);
        manifest.write(&manifest_path)?;
        Ok(Run {
            dir: dir.to_path_buf(),
            manifest_path,
            manifest,
        })
    }

    fn finish(mut self, outcome: Result<Vec<PathBuf>>) -> Result<()> {
        match outcome {
            Ok(outputs) => self.manifest.finish(&self.manifest_path, Ok(outputs)),
            Err(e) => {
                let _ = self.manifest.finish(&self.manifest_path, Err(&e));
                Err(e)
            }
        }
    }
}

fn argv_strings(args: &[OsString]) -> Vec<String> {
    args.iter().map(|a| a.to_string_lossy().into_owned()).collect()
}

struct Context {
    argv: Vec<String>,
    quiet: bool,
}

impl Context {
    fn note(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("{}", msg.as_ref());
        }
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    let ctx = Context {
        argv: argv_strings(&args),
        quiet: cli.quiet,
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            eprintln!("error: --jobs must be at least 1");
            return 1;
        }
        pool = pool.num_threads(jobs);
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start worker pool: {e}");
            return 2;
        }
    };
    let result = pool.install(|| dispatch(&ctx, cli.command));
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(ctx: &Context, command: Command) -> Result<()> {
    match command {
        Command::Simulate(a) => cmd_simulate(ctx, a),
        Command::Fit(a) => cmd_fit(ctx, a),
        Command::Forecast(a) => cmd_forecast(ctx, a),
        Command::Ingest(a) => cmd_ingest(ctx, a),
        Command::Study(a) => cmd_study(ctx, a),
        Command::Report(a) => cmd_report(ctx, a),
    }
}

/// `<stem>.manifest.json` next to a file output.
fn sibling_manifest(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "run".into());
    out.with_file_name(format!("{stem}.manifest.json"))
}

fn cmd_simulate(ctx: &Context, a: SimulateArgs) -> Result<()> {
    let file = load_value(a.config.as_deref(), "simulate")?;
    let mut cfg: SimulateConfig = layered(&SimulateConfig::default(), file, a.config.as_deref())?;
    if let Some(d) = a.dgp {
        cfg.dgp = DgpChoice::Builtin(d);
    }
    if a.len.is_some() {
        cfg.len = a.len;
    }
    if let Some(s) = a.seed.seed {
        cfg.seed = s;
    }
    let dgp = cfg.resolve()?;

    if let Some(parent) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    let manifest_path = sibling_manifest(&a.out);
    let mut manifest = RunManifest::begin("simulate", &ctx.argv, &cfg, cfg.seed)?;
    manifest.write(&manifest_path)?;
    let outcome = (|| -> Result<Vec<PathBuf>> {
        let series = simulate(&dgp)?;
        let labels: Vec<String> = (0..series.len()).map(|t| t.to_string()).collect();
        write_series(&a.out, "t", &labels, &component_names(dgp.spec().j), &series)?;
        ctx.note(format!("wrote {} rows of {} components to {}", series.len(), dgp.spec().j, a.out.display()));
        Ok(vec![a.out.clone()])
    })();
    match outcome {
        Ok(o) => manifest.finish(&manifest_path, Ok(o)),
        Err(e) => {
            let _ = manifest.finish(&manifest_path, Err(&e));
            Err(e)
        }
    }
}

fn chain_progress(ctx: &Context) -> impl Fn(ProgressEvent) + Sync + '_ {
    move |ev: ProgressEvent| {
        ctx.note(format!(
            "chain {} iteration {}/{} ({})",
            ev.chain + 1,
            ev.iteration,
            ev.total,
            if ev.warmup { "warmup" } else { "sampling" }
        ))
    }
}

fn resolve_fit(a: &FitArgs) -> Result<FitConfig> {
    let mut file = load_value(a.config.as_deref(), "fit")?;
    let profile: Option<Profile> = take_key(&mut file, "profile")?;
    let profile = a.profile.or(profile).unwrap_or(Profile::Desk);
    let defaults = FitConfig {
        sampler: profile.sampler(),
        ..FitConfig::default()
    };
    let mut cfg: FitConfig = layered(&defaults, file, a.config.as_deref())?;
    if let Some(d) = &a.data {
        cfg.data = d.clone();
    }
    if let Some(p) = a.p {
        cfg.p = p;
    }
    if let Some(q) = a.q {
        cfg.q = q;
    }
    if let Some(name) = &a.prior {
        cfg.prior = PriorChoice::Family(PriorFamily::parse(name)?);
    }
    if let Some(set) = &a.prior_set {
        cfg.prior_set = set.clone();
    }
    if let Some(kind) = a.design {
        cfg.design = Some(match kind {
            // Dimension is filled in once the data are read.
            DesignKind::Intercept => DesignDescriptor::Intercept { k: 0 },
            DesignKind::Fourier => DesignDescriptor::Fourier(FourierDesign::trading_days(0)),
        });
        if kind == DesignKind::Fourier && a.prior_set.is_none() {
            cfg.prior_set = "application".into();
        }
    }
    if let Some(c) = a.chains {
        cfg.sampler.chains = c;
    }
    if let Some(w) = a.warmup {
        cfg.sampler.warmup = w;
    }
    if let Some(s) = a.sampling {
        cfg.sampler.sampling = s;
    }
    if let Some(s) = a.seed.seed {
        cfg.seed = s;
    }
    cfg.sampler.seed = cfg.seed;
    if cfg.data.as_os_str().is_empty() {
        return Err(Error::invalid("fit needs --data"));
    }
    cfg.sampler.validate()?;
    Ok(cfg)
}

/// Gives a design the ALR dimension of the data.
fn sized_design(design: Option<DesignDescriptor>, k: usize) -> DesignDescriptor {
    match design {
        None | Some(DesignDescriptor::Intercept { .. }) => DesignDescriptor::Intercept { k },
        Some(DesignDescriptor::Fourier(f)) => DesignDescriptor::Fourier(FourierDesign { k, ..f }),
        Some(other) => other,
    }
}

fn cmd_fit(ctx: &Context, a: FitArgs) -> Result<()> {
    let mut cfg = resolve_fit(&a)?;
    let series = read_series(&cfg.data)?;
    let j = series.components.len();
    let design = sized_design(cfg.design.take(), j - 1);
    cfg.design = Some(design.clone());
    let shape = ModelShape::new(cfg.p, cfg.q, j, design)?;
    let prior = cfg.prior.resolve(&cfg.prior_set)?;
    let posterior = Posterior::new(shape.spec, shape.design.clone(), &series.rows, &prior)?;

    let manifest = RunManifest::begin("fit", &ctx.argv, &cfg, cfg.seed)?.with_input(&cfg.data)?;
    let run = Run::start(&a.out, manifest)?;
    let dir = run.dir.clone();
    let outcome = (|| -> Result<Vec<PathBuf>> {
        ctx.note(format!(
            "fitting B-DARMA({},{}) with the {} prior: {} parameters, {} chains x ({} + {})",
            cfg.p,
            cfg.q,
            prior.family().label(),
            shape.spec.count_parameters(),
            cfg.sampler.chains,
            cfg.sampler.warmup,
            cfg.sampler.sampling
        ));
        let progress = chain_progress(ctx);
        let draws = sample(&posterior, &cfg.sampler, Some(&progress))?;
        let mut out = Vec::new();

        let path = dir.join("draws.csv");
        write_draws(&path, &draws)?;
        out.push(path);

        let rhat = draws.rhat.clone().unwrap_or_default();
        let rows: Vec<Vec<String>> = (0..draws.dim())
            .map(|i| {
                let col = draws.column(i);
                let mean = col.iter().sum::<f64>() / col.len() as f64;
                let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (col.len().max(2) - 1) as f64).sqrt();
                vec![
                    draws.names[i].clone(),
                    mean.to_string(),
                    sd.to_string(),
                    quantile(&col, 0.025).to_string(),
                    quantile(&col, 0.5).to_string(),
                    quantile(&col, 0.975).to_string(),
                    rhat.get(i).map(|r| r.to_string()).unwrap_or_default(),
                    draws.ess_bulk.get(i).map(|r| r.to_string()).unwrap_or_default(),
                    draws.ess_tail.get(i).map(|r| r.to_string()).unwrap_or_default(),
                ]
            })
            .collect();
        let path = dir.join("summary.csv");
        write_table(
            &path,
            &["parameter", "mean", "sd", "q2.5", "q50", "q97.5", "rhat", "ess_bulk", "ess_tail"],
            &rows,
        )?;
        out.push(path);

        let diagnostics = serde_json::json!({
            "chains": draws.chain_summaries,
            "total_divergences": draws.total_divergences(),
            "divergence_flagged": draws.divergence_flagged(),
            "max_rhat": draws.max_rhat(),
            "min_ess_bulk": draws.ess_bulk.iter().copied().fold(f64::INFINITY, f64::min),
            "min_ess_tail": draws.ess_tail.iter().copied().fold(f64::INFINITY, f64::min),
        });
        let path = dir.join("diagnostics.json");
        write_json(&path, &diagnostics)?;
        out.push(path);

        let model = FittedModel {
            shape: shape.clone(),
            prior: prior.clone(),
            data: cfg.data.clone(),
            components: series.components.clone(),
        };
        let path = dir.join("model.json");
        write_json(&path, &model)?;
        out.push(path);

        ctx.note(format!(
            "done: max R-hat {:.3}, {} divergences{}",
            draws.max_rhat(),
            draws.total_divergences(),
            if draws.divergence_flagged() { " (flagged)" } else { "" }
        ));
        Ok(out)
    })();
    run.finish(outcome)
}

fn cmd_forecast(ctx: &Context, a: ForecastArgs) -> Result<()> {
    let file = load_value(a.config.as_deref(), "forecast")?;
    let mut cfg: ForecastConfig = layered(&ForecastConfig::default(), file, a.config.as_deref())?;
    if let Some(f) = &a.fit {
        cfg.fit = f.clone();
    }
    if a.data.is_some() {
        cfg.data = a.data.clone();
    }
    if let Some(h) = a.horizon {
        cfg.horizon = h;
    }
    if let Some(t) = a.thin {
        cfg.thin = t;
    }
    if a.noise_free {
        cfg.noise_free = true;
    }
    if let Some(s) = a.seed.seed {
        cfg.seed = s;
    }
    if cfg.fit.as_os_str().is_empty() {
        return Err(Error::invalid("forecast needs --fit <directory of a fit run>"));
    }
    if cfg.horizon == 0 || cfg.thin == 0 {
        return Err(Error::invalid("horizon and thin must be at least 1"));
    }
    let model: FittedModel = read_json(&cfg.fit.join("model.json"))?;
    let draws_path = cfg.fit.join("draws.csv");
    let draws = read_draws(&draws_path)?;
    let names = model.shape.spec.parameter_names();
    if draws.names.len() < names.len() || draws.names[..names.len()] != names[..] {
        return Err(Error::invalid(format!(
            "{} does not hold draws of the model in model.json",
            draws_path.display()
        )));
    }
    let data_path = cfg.data.clone().unwrap_or_else(|| model.data.clone());
    cfg.data = Some(data_path.clone());
    let history = read_series(&data_path)?;
    if history.components.len() != model.shape.spec.j {
        return Err(Error::invalid(format!(
            "{} has {} components, the model has {}",
            data_path.display(),
            history.components.len(),
            model.shape.spec.j
        )));
    }

    let manifest = RunManifest::begin("forecast", &ctx.argv, &cfg, cfg.seed)?
        .with_input(&draws_path)?
        .with_input(&data_path)?;
    let run = Run::start(&a.out, manifest)?;
    let dir = run.dir.clone();
    let outcome = (|| -> Result<Vec<PathBuf>> {
        let opts = ForecastOptions {
            horizon: cfg.horizon,
            thin: cfg.thin,
            noise_free: cfg.noise_free,
            quantiles: true,
            seed: cfg.seed,
        };
        let fc = forecast_thetas(&model.shape.spec, &model.shape.design, &draws.rows, &history.rows, &opts)?;
        ctx.note(format!(
            "forecast {} steps from {} draws ({} skipped)",
            cfg.horizon, fc.used_draws, fc.skipped_draws
        ));
        let mut out = Vec::new();
        let steps: Vec<String> = (1..=cfg.horizon).map(|h| h.to_string()).collect();
        let point = fc.point_compositions()?;
        let path = dir.join("forecast.csv");
        write_series(&path, "step", &steps, &model.components, &point)?;
        out.push(path);

        let (q05, q50, q95) = match (&fc.q05, &fc.q50, &fc.q95) {
            (Some(a), Some(b), Some(c)) => (a, b, c),
            _ => return Err(Error::failed("forecast quantiles missing")),
        };
        let rows: Vec<Vec<String>> = (0..cfg.horizon)
            .flat_map(|h| {
                model.components.iter().enumerate().map(move |(c, name)| {
                    vec![
                        (h + 1).to_string(),
                        name.clone(),
                        q05[h][c].to_string(),
                        q50[h][c].to_string(),
                        q95[h][c].to_string(),
                    ]
                })
            })
            .collect();
        let path = dir.join("forecast_quantiles.csv");
        write_table(&path, &["step", "component", "q05", "q50", "q95"], &rows)?;
        out.push(path);

        let path = dir.join("forecast.svg");
        write_text(
            &path,
            &svg::forecast_panels("Forecast with 90% band", &model.components, &[], &fc.point, Some((q05, q95))),
        )?;
        out.push(path);
        Ok(out)
    })();
    run.finish(outcome)
}

fn load_panel(source: &PanelSource) -> Result<DatedPanel> {
    match source {
        PanelSource::Synthetic(s) => s.generate(),
        PanelSource::Long { path } => read_long(path),
        PanelSource::Wide { path } => read_wide(path),
    }
}

fn source_path(source: &PanelSource) -> Option<&Path> {
    match source {
        PanelSource::Synthetic(_) => None,
        PanelSource::Long { path } | PanelSource::Wide { path } => Some(path),
    }
}

fn cmd_ingest(ctx: &Context, a: IngestArgs) -> Result<()> {
    let file = load_value(a.config.as_deref(), "ingest")?;
    let mut cfg: IngestConfig = layered(&IngestConfig::default(), file, a.config.as_deref())?;
    if let Some(path) = &a.input {
        cfg.data = match a.format {
            PanelFormat::Long => PanelSource::Long { path: path.clone() },
            PanelFormat::Wide => PanelSource::Wide { path: path.clone() },
        };
    } else if a.synthetic && !matches!(cfg.data, PanelSource::Synthetic(_)) {
        cfg.data = PanelSource::default();
    }
    if let Some(t) = a.test_len {
        cfg.test_len = t;
    }
    if let (Some(s), PanelSource::Synthetic(panel)) = (a.seed.seed, &mut cfg.data) {
        panel.seed = s;
    }
    let seed = match &cfg.data {
        PanelSource::Synthetic(p) => p.seed,
        _ => 0,
    };
    let panel = load_panel(&cfg.data)?;

    let mut manifest = RunManifest::begin("ingest", &ctx.argv, &cfg, seed)?;
    if let Some(p) = source_path(&cfg.data) {
        manifest = manifest.with_input(p)?;
    }
    let run = Run::start(&a.out, manifest)?;
    let dir = run.dir.clone();
    let outcome = (|| -> Result<Vec<PathBuf>> {
        let mut out = Vec::new();
        let report = panel.validate();
        let path = dir.join("validation.json");
        write_json(&path, &report)?;
        out.push(path);
        if !report.is_valid() {
            return Err(invalid_panel(&report));
        }
        if matches!(cfg.data, PanelSource::Synthetic(_)) {
            let path = dir.join("panel.csv");
            write_long(&path, &panel)?;
            out.push(path);
        }
        let shares = to_shares(&panel.panel)?;
        let labels: Vec<String> = panel.dates.iter().map(|d| d.to_string()).collect();
        let path = dir.join("shares.csv");
        write_series(&path, "date", &labels, &panel.panel.sectors, &shares)?;
        out.push(path);
        let (train, test) = split(&shares, cfg.test_len)?;
        let (train_labels, test_labels) = labels.split_at(train.len());
        for (name, rows, l) in [("train.csv", &train, train_labels), ("test.csv", &test, test_labels)] {
            let path = dir.join(name);
            write_series(&path, "date", l, &panel.panel.sectors, rows)?;
            out.push(path);
        }
        ctx.note(format!(
            "{} days x {} sectors: {} training, {} holdout",
            shares.len(),
            panel.panel.sectors.len(),
            train.len(),
            test.len()
        ));
        Ok(out)
    })();
    run.finish(outcome)
}

fn invalid_panel(report: &ValidationReport) -> Error {
    let mut lines: Vec<String> = report.date_problems.iter().take(10).cloned().collect();
    lines.extend(
        report
            .cell_problems
            .iter()
            .take(10)
            .map(|c| format!("{} / {}: {}", c.row, c.sector, c.problem)),
    );
    Error::invalid(format!(
        "panel failed validation ({} date problems, {} cell problems):\n  {}",
        report.date_problems.len(),
        report.cell_problems.len(),
        lines.join("\n  ")
    ))
}

fn prior_choices(names: &[String]) -> Result<Vec<PriorChoice>> {
    names
        .iter()
        .filter(|n| !n.trim().is_empty())
        .map(|n| PriorFamily::parse(n.trim()).map(PriorChoice::Family).map_err(Into::into))
        .collect()
}

/// A study config resolved from profile, file and flags.
#[derive(Debug, Clone, PartialEq)]
pub enum ResolvedStudy {
    Simulation(StudyConfig),
    Application(ApplicationConfig),
}

impl ResolvedStudy {
    /// Config as written to the manifest; loads back through `--config`.
    pub fn to_value(&self) -> Result<Value> {
        let (kind, mut v) = match self {
            ResolvedStudy::Simulation(c) => ("simulation", serde_json::to_value(c)),
            ResolvedStudy::Application(c) => ("application", serde_json::to_value(c)),
        };
        let v2 = v.as_mut().map_err(|e| Error::failed(e.to_string()))?;
        if let Some(m) = v2.as_object_mut() {
            m.insert("kind".into(), Value::String(kind.into()));
        }
        v.map_err(|e| Error::failed(e.to_string()))
    }

    pub fn seed(&self) -> u64 {
        match self {
            ResolvedStudy::Simulation(c) => c.seed,
            ResolvedStudy::Application(c) => c.seed,
        }
    }
}

pub fn resolve_study(a: &StudyArgs) -> Result<ResolvedStudy> {
    let mut file = load_value(a.config.as_deref(), "study")?;
    let kind: Option<StudyKind> = take_key(&mut file, "kind")?;
    let profile: Option<Profile> = take_key(&mut file, "profile")?;
    let kind = a.kind.or(kind).unwrap_or(StudyKind::Simulation);
    let profile = a.profile.or(profile).unwrap_or(Profile::Desk);
    let priors = a.priors.as_deref().map(prior_choices).transpose()?;
    match kind {
        StudyKind::Simulation => {
            let mut cfg: StudyConfig = layered(&StudyConfig::profile(profile), file, a.config.as_deref())?;
            if let Some(p) = priors {
                cfg.priors = p;
            }
            if let Some(s) = &a.scenarios {
                cfg.scenarios = s
                    .iter()
                    .map(|n| parse_named::<Scenario>("scenario", n))
                    .collect::<Result<_>>()?;
            }
            if let Some(r) = a.replicates {
                cfg.replicates = r;
            }
            if let Some(t) = a.thin {
                cfg.forecast_thin = t;
            }
            if let Some(s) = a.seed.seed {
                cfg.seed = s;
            }
            cfg.validate()?;
            Ok(ResolvedStudy::Simulation(cfg))
        }
        StudyKind::Application => {
            if a.scenarios.is_some() || a.replicates.is_some() {
                return Err(Error::invalid("--scenarios and --replicates apply to simulation studies only"));
            }
            let mut cfg: ApplicationConfig =
                layered(&ApplicationConfig::profile(profile), file, a.config.as_deref())?;
            if let Some(p) = priors {
                cfg.priors = p;
            }
            if let Some(t) = a.thin {
                cfg.forecast_thin = t;
            }
            if let Some(s) = a.seed.seed {
                cfg.seed = s;
            }
            cfg.validate()?;
            Ok(ResolvedStudy::Application(cfg))
        }
    }
}

fn cmd_study(ctx: &Context, a: StudyArgs) -> Result<()> {
    let resolved = resolve_study(&a)?;
    // Application inputs are read and validated before anything is written.
    let shares = match &resolved {
        ResolvedStudy::Application(cfg) => {
            let panel = load_panel(&cfg.data)?;
            let report = panel.validate();
            if !report.is_valid() {
                return Err(invalid_panel(&report));
            }
            Some((to_shares(&panel.panel)?, panel.panel.sectors.clone()))
        }
        ResolvedStudy::Simulation(_) => None,
    };
    let mut manifest = RunManifest::begin("study", &ctx.argv, &resolved.to_value()?, resolved.seed())?;
    if let ResolvedStudy::Application(cfg) = &resolved {
        if let Some(p) = source_path(&cfg.data) {
            manifest = manifest.with_input(p)?;
        }
    }
    let run = Run::start(&a.out, manifest)?;
    let dir = run.dir.clone();
    let outcome = match resolved {
        ResolvedStudy::Simulation(cfg) => simulation_study(ctx, &cfg, &dir),
        ResolvedStudy::Application(cfg) => {
            let (shares, sectors) = shares.expect("shares loaded above");
            application_study(ctx, &cfg, &shares, &sectors, &dir)
        }
    };
    run.finish(outcome)
}

fn fit_rows(report: &StudyReport) -> Vec<Vec<String>> {
    report
        .fits
        .iter()
        .map(|f| {
            vec![
                f.replicate.to_string(),
                f.scenario.name().into(),
                f.prior.id().into(),
                f.rmse.to_string(),
                f.mae.to_string(),
                f.max_rhat.to_string(),
                f.divergences.to_string(),
                f.divergence_flagged.to_string(),
                f.skipped_forecast_draws.to_string(),
                f.data_hash.clone(),
            ]
        })
        .collect()
}

fn write_study_outputs(dir: &Path, report: &StudyReport) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    let path = dir.join("report.json");
    write_json(&path, report)?;
    out.push(path);
    let path = dir.join("fits.csv");
    write_table(
        &path,
        &[
            "replicate",
            "scenario",
            "prior",
            "rmse",
            "mae",
            "max_rhat",
            "divergences",
            "divergence_flagged",
            "skipped_forecast_draws",
            "data_hash",
        ],
        &fit_rows(report),
    )?;
    out.push(path);
    out.extend(write_study_tables(dir, report)?);
    Ok(out)
}

fn simulation_study(ctx: &Context, cfg: &StudyConfig, dir: &Path) -> Result<Vec<PathBuf>> {
    ctx.note(format!(
        "simulation study: {} replicates x {} scenarios x {} priors, {} chains x ({} + {})",
        cfg.replicates,
        cfg.scenarios.len(),
        cfg.priors.len(),
        cfg.sampler.chains,
        cfg.sampler.warmup,
        cfg.sampler.sampling
    ));
    let progress = |ev: TaskEvent<'_>| {
        let what = match ev.outcome {
            Ok(f) => format!("RMSE {:.4}, max R-hat {:.3}, {} divergences", f.rmse, f.max_rhat, f.divergences),
            Err(e) => format!("failed: {e}"),
        };
        ctx.note(format!(
            "[{}/{}] replicate {} {} {}: {what}",
            ev.done,
            ev.total,
            ev.replicate + 1,
            ev.scenario.name(),
            ev.prior.label()
        ));
    };
    match run_study(cfg, Some(&progress)) {
        Ok(report) => {
            let out = write_study_outputs(dir, &report)?;
            ctx.note(format!("wrote {} files to {}", out.len(), dir.display()));
            Ok(out)
        }
        Err((err, partial)) => {
            if let Some(report) = partial {
                write_study_outputs(dir, &report)?;
                write_json(&dir.join("failures.json"), &report.failures)?;
                ctx.note(format!("partial results and failures.json written to {}", dir.display()));
            }
            Err(err)
        }
    }
}

fn application_study(
    ctx: &Context,
    cfg: &ApplicationConfig,
    shares: &[Composition],
    sectors: &[String],
    dir: &Path,
) -> Result<Vec<PathBuf>> {
    ctx.note(format!(
        "application: {} days x {} sectors, B-DARMA({},{}), {} priors",
        shares.len(),
        sectors.len(),
        cfg.p,
        cfg.q,
        cfg.priors.len()
    ));
    let progress = |family: PriorFamily, msg: &str| ctx.note(format!("{}: {msg}", family.label()));
    let report = run_application(shares, sectors, cfg, Some(&progress))?;
    let mut out = Vec::new();
    let path = dir.join("report.json");
    write_json(&path, &report)?;
    out.push(path);
    out.extend(write_application_tables(dir, &report)?);
    if report.rows.is_empty() {
        return Err(Error::failed("every prior failed to fit"));
    }
    Ok(out)
}

/// A saved report of either kind.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum SavedReport {
    Simulation(Box<StudyReport>),
    Application(Box<ApplicationReport>),
}

fn cmd_report(ctx: &Context, a: ReportArgs) -> Result<()> {
    let saved: SavedReport = read_json(&a.input)?;
    let manifest = RunManifest::begin("report", &ctx.argv, &serde_json::json!({ "input": a.input }), 0)?
        .with_input(&a.input)?;
    let run = Run::start(&a.out, manifest)?;
    let dir = run.dir.clone();
    let outcome = match saved {
        SavedReport::Simulation(r) => write_study_tables(&dir, &r),
        SavedReport::Application(r) => write_application_tables(&dir, &r),
    };
    if let Ok(files) = &outcome {
        ctx.note(format!("wrote {} files to {}", files.len(), dir.display()));
    }
    run.finish(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn study_args(extra: &[&str]) -> StudyArgs {
        let mut argv = vec!["bdarma", "study"];
        argv.extend_from_slice(extra);
        match Cli::try_parse_from(argv).unwrap().command {
            Command::Study(a) => a,
            _ => unreachable!(),
        }
    }

    #[test]
    fn flags_override_file_override_profile() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.json");
        std::fs::write(&path, r#"{"profile": "paper", "replicates": 7, "seed": 5, "horizon": 20}"#).unwrap();
        let p = path.to_str().unwrap();
        let ResolvedStudy::Simulation(cfg) = resolve_study(&study_args(&["--config", p])).unwrap() else {
            panic!()
        };
        assert_eq!(cfg.replicates, 7);
        assert_eq!(cfg.seed, 5);
        assert_eq!(cfg.sampler.chains, 4);
        let ResolvedStudy::Simulation(cfg) =
            resolve_study(&study_args(&["--config", p, "--replicates", "2", "--seed", "9", "--profile", "desk"]))
                .unwrap()
        else {
            panic!()
        };
        assert_eq!((cfg.replicates, cfg.seed, cfg.sampler.chains), (2, 9, 2));
    }

    #[test]
    fn resolved_config_round_trips_through_a_file() {
        let dir = tempfile::tempdir().unwrap();
        let original = resolve_study(&study_args(&["--priors", "horseshoe,laplace", "--scenarios", "underfit"])).unwrap();
        let path = dir.path().join("again.json");
        std::fs::write(&path, original.to_value().unwrap().to_string()).unwrap();
        let again = resolve_study(&study_args(&["--config", path.to_str().unwrap(), "--profile", "paper"])).unwrap();
        assert_eq!(original, again);
    }

    #[test]
    fn unknown_config_fields_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.json");
        std::fs::write(&path, r#"{"replicatez": 3}"#).unwrap();
        let err = resolve_study(&study_args(&["--config", path.to_str().unwrap()])).unwrap_err();
        assert_eq!(err.exit_code(), 1);
    }

    #[test]
    fn sibling_manifest_name() {
        assert_eq!(sibling_manifest(Path::new("out/s.csv")), Path::new("out/s.manifest.json"));
    }
}
