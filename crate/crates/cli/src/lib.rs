//! Subcommands of the `navex` binary.
//!
//! Every command returns a [`CliError`] whose [`CliError::exit_code`] the
//! binary hands back to the shell:
//!
//! | code | meaning |
//! |---|---|
//! | 0 | success |
//! | 1 | internal or i/o failure |
//! | 2 | invalid input (bad flags, unreadable or malformed scenario) |
//! | 3 | no initial path from start to goal |
//! | 4 | the robot is stuck; a failure explanation was written |
//!
//! Output directories are staged next to their final location and renamed
//! into place only once complete, so a failed run leaves nothing behind.

use std::fmt::Write as _;
use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use navex_core::attribution::{
    attribute, explain_failure, rank_features, Attribution, AttributionConfig, AttributionError, FailureExplanation,
};
use navex_core::planning::{plan_initial, plan_local, LocalOutcome, LocalPlanResult, LocalPlannerConfig, PathPlan, PlanError};
use navex_core::text::{generate_all, generate_failure_text, is_null_effect, TextError, TextStyle};
use navex_core::variants::{build_battery, VariantError};
use navex_core::visual::{render_all, Style, VisualError};
use navex_core::world::{default_vector, load_scenario, Feature, Scenario, ScenarioFileError};
use navex_study::{load_batteries, Study, StudyConfig, StudyError};

pub const EXIT_INTERNAL: u8 = 1;
pub const EXIT_INVALID: u8 = 2;
pub const EXIT_NO_PATH: u8 = 3;
pub const EXIT_STUCK: u8 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("scenario {path}: {source}")]
    Scenario {
        path: String,
        #[source]
        source: ScenarioFileError,
    },
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error("the robot is stuck; failure explanation written to {}", .0.display())]
    Stuck(PathBuf),
    #[error(transparent)]
    Attribution(#[from] AttributionError),
    #[error(transparent)]
    Text(#[from] TextError),
    #[error(transparent)]
    Visual(#[from] VisualError),
    #[error(transparent)]
    Variant(#[from] VariantError),
    #[error(transparent)]
    Study(#[from] StudyError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Invalid(_) | CliError::Scenario { .. } => EXIT_INVALID,
            CliError::Plan(PlanError::NoPath { .. }) => EXIT_NO_PATH,
            CliError::Plan(PlanError::BlockedEndpoint { .. }) => EXIT_INVALID,
            CliError::Stuck(_) => EXIT_STUCK,
            CliError::Attribution(AttributionError::InvalidConfig(_) | AttributionError::DegenerateDesign { .. }) => {
                EXIT_INVALID
            }
            CliError::Text(TextError::NullEffect(_) | TextError::UnknownFeature(_))
            | CliError::Variant(VariantError::Text(TextError::NullEffect(_) | TextError::UnknownFeature(_))) => {
                EXIT_INVALID
            }
            _ => EXIT_INTERNAL,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "navex", version, about = "Explainable navigation: attribution maps, texts and study batteries")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Plan, attribute and write maps and texts for one scenario.
    Explain(ExplainArgs),
    /// Build stimulus batteries for the study.
    Battery(BatteryArgs),
    /// Serve the study over HTTP.
    Serve(ServeArgs),
    /// Print the study summary as a tab-separated table.
    Summarize(SummarizeArgs),
}

/// Planner and attribution knobs shared by `explain` and `battery`.
#[derive(Debug, Clone, Args)]
pub struct PipelineArgs {
    /// Seed for sampled attribution, recorded in every output.
    #[arg(long, env = "NAVEX_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Perturbed worlds to sample when exhaustive enumeration is too large.
    #[arg(long, env = "NAVEX_SAMPLES", default_value_t = 512)]
    pub samples: usize,
    /// Kernel width over the normalized toggle distance; `inf` is uniform.
    #[arg(long, env = "NAVEX_KERNEL_WIDTH", default_value_t = 0.75)]
    pub kernel_width: f64,
    #[arg(long, env = "NAVEX_RIDGE", default_value_t = 1e-3)]
    pub ridge: f64,
    /// Local planner look-ahead, meters.
    #[arg(long, env = "NAVEX_WINDOW", default_value_t = 3.0)]
    pub window: f64,
    /// Pixels per grid cell.
    #[arg(long, env = "NAVEX_SCALE", default_value_t = 4)]
    pub scale: usize,
}

impl Default for PipelineArgs {
    fn default() -> Self {
        Self { seed: 0, samples: 512, kernel_width: 0.75, ridge: 1e-3, window: 3.0, scale: 4 }
    }
}

impl PipelineArgs {
    fn validate(&self) -> Result<(), CliError> {
        if !(self.window > 0.0 && self.window.is_finite()) {
            return Err(CliError::Invalid(format!("--window must be positive, got {}", self.window)));
        }
        if self.scale == 0 {
            return Err(CliError::Invalid("--scale must be at least 1".into()));
        }
        self.attribution().validate().map_err(|e| CliError::Invalid(e.to_string()))
    }

    pub fn planner(&self) -> LocalPlannerConfig {
        LocalPlannerConfig { window: self.window, ..LocalPlannerConfig::default() }
    }

    pub fn attribution(&self) -> AttributionConfig {
        AttributionConfig {
            sample_count: self.samples,
            kernel_width: self.kernel_width,
            ridge_lambda: self.ridge,
            rng_seed: self.seed,
            ..AttributionConfig::default()
        }
    }

    fn header(&self) -> Vec<(&'static str, String)> {
        vec![
            ("seed", self.seed.to_string()),
            ("samples", self.samples.to_string()),
            ("kernel_width", self.kernel_width.to_string()),
            ("ridge", self.ridge.to_string()),
            ("window_m", self.window.to_string()),
            ("scale", self.scale.to_string()),
        ]
    }
}

#[derive(Debug, Clone, Args)]
pub struct ExplainArgs {
    #[arg(long, env = "NAVEX_SCENARIO")]
    pub scenario: PathBuf,
    /// Output directory; must not exist unless --force is given.
    #[arg(long, env = "NAVEX_OUT")]
    pub out: PathBuf,
    /// Map style, e.g. `redgreen-filled-solid`.
    #[arg(long, env = "NAVEX_STYLE", default_value_t = Style::CANONICAL)]
    pub style: Style,
    /// Largest toggle set tried when explaining a failure.
    #[arg(long, env = "NAVEX_MAX_REMEDY", default_value_t = 3)]
    pub max_remedy: usize,
    #[arg(long, env = "NAVEX_FORCE")]
    pub force: bool,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
}

#[derive(Debug, Clone, Args)]
pub struct BatteryArgs {
    /// One or more scenarios; batteries of all of them land in one directory.
    #[arg(long, env = "NAVEX_SCENARIO", required = true, value_delimiter = ',')]
    pub scenario: Vec<PathBuf>,
    #[arg(long, env = "NAVEX_OUT")]
    pub out: PathBuf,
    /// Features (`object:affordance`) to build; defaults to every feature
    /// with a notable effect.
    #[arg(long, env = "NAVEX_FEATURE", value_delimiter = ',')]
    pub feature: Vec<String>,
    #[arg(long, env = "NAVEX_FORCE")]
    pub force: bool,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
}

#[derive(Debug, Clone, Args)]
pub struct ServeArgs {
    #[arg(long, env = "NAVEX_LISTEN", default_value = "127.0.0.1:8080")]
    pub listen: SocketAddr,
    /// Directory of the response logs; created if missing.
    #[arg(long, env = "NAVEX_DATA_DIR")]
    pub data_dir: PathBuf,
    /// Directory written by `navex battery`.
    #[arg(long, env = "NAVEX_BATTERIES")]
    pub batteries: PathBuf,
    /// Counterbalancing offset.
    #[arg(long, env = "NAVEX_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Visual variants per trial.
    #[arg(long, env = "NAVEX_TRIAL_SIZE", default_value_t = 4)]
    pub trial_size: usize,
    /// Questionnaire file (`# navex questionnaire v1`, one item per line).
    #[arg(long, env = "NAVEX_QUESTIONNAIRE")]
    pub questionnaire: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SummarizeArgs {
    #[arg(long, env = "NAVEX_DATA_DIR")]
    pub data_dir: PathBuf,
    #[arg(long, env = "NAVEX_BATTERIES")]
    pub batteries: PathBuf,
}

/// A directory built under a temporary name and renamed into place.
struct Staging {
    temp: PathBuf,
    target: PathBuf,
    committed: bool,
}

impl Staging {
    fn new(target: &Path, force: bool) -> Result<Self, CliError> {
        if target.exists() && !force {
            return Err(CliError::Invalid(format!(
                "output directory {} already exists (use --force to replace it)",
                target.display()
            )));
        }
        let name = target
            .file_name()
            .ok_or_else(|| CliError::Invalid(format!("bad output directory {}", target.display())))?
            .to_string_lossy();
        let parent = target.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        fs::create_dir_all(parent)?;
        let temp = parent.join(format!(".{name}.partial-{}", std::process::id()));
        if temp.exists() {
            fs::remove_dir_all(&temp)?;
        }
        fs::create_dir(&temp)?;
        Ok(Self { temp, target: target.to_path_buf(), committed: false })
    }

    fn path(&self) -> &Path {
        &self.temp
    }

    fn commit(mut self) -> Result<PathBuf, CliError> {
        if self.target.exists() {
            fs::remove_dir_all(&self.target)?;
        }
        fs::rename(&self.temp, &self.target)?;
        self.committed = true;
        Ok(self.target.clone())
    }
}

impl Drop for Staging {
    fn drop(&mut self) {
        if !self.committed {
            let _ = fs::remove_dir_all(&self.temp);
        }
    }
}

fn load(path: &Path) -> Result<Scenario, CliError> {
    load_scenario(path).map_err(|source| CliError::Scenario { path: path.display().to_string(), source })
}

fn header(kind: &str, fields: &[(&str, String)]) -> String {
    let mut out = format!("# navex {kind} v1\n");
    for (key, value) in fields {
        let _ = writeln!(out, "{key} = {value}");
    }
    out
}

fn path_text(plan: &PathPlan, fields: &[(&str, String)]) -> String {
    let mut out = header("path", fields);
    let _ = writeln!(out, "cost_m = {}", plan.cost);
    let _ = writeln!(out, "cells = {}", plan.cells.len());
    out.push_str("# x\ty\n");
    for c in &plan.cells {
        let _ = writeln!(out, "{}\t{}", c.x, c.y);
    }
    out
}

fn local_fields(local: &LocalPlanResult) -> Vec<(&'static str, String)> {
    let outcome = match &local.outcome {
        LocalOutcome::Deviated { .. } => "deviated",
        LocalOutcome::OnPlan { .. } => "on-plan",
        LocalOutcome::Stuck => "stuck",
    };
    let mut fields = vec![("outcome", outcome.to_string()), ("robot_index", local.robot_index.to_string())];
    if let Some(i) = local.rejoin_index {
        fields.push(("rejoin_index", i.to_string()));
    }
    if let Some(d) = local.deviation() {
        fields.push(("deviation_m", d.to_string()));
    }
    fields
}

/// Outcome of a successful `explain` run.
#[derive(Debug, Clone, PartialEq)]
pub struct ExplainReport {
    pub out: PathBuf,
    pub maps: usize,
    pub texts: usize,
}

/// Runs the full pipeline for one scenario into `args.out`.
pub fn cmd_explain(args: &ExplainArgs) -> Result<ExplainReport, CliError> {
    args.pipeline.validate()?;
    if args.out.exists() && !args.force {
        return Err(CliError::Invalid(format!(
            "output directory {} already exists (use --force to replace it)",
            args.out.display()
        )));
    }
    let scenario = load(&args.scenario)?;
    let initial = plan_initial(&scenario)?;
    let planner = args.pipeline.planner();
    let local = plan_local(&scenario, &default_vector(&scenario), &initial, &planner)
        .map_err(|e| CliError::Attribution(e.into()))?;

    let mut base = vec![("scenario", scenario.name.clone())];
    base.extend(args.pipeline.header());

    let staging = Staging::new(&args.out, args.force)?;
    let dir = staging.path();
    let mut run = base.clone();
    run.insert(0, ("command", "explain".to_string()));
    run.insert(1, ("scenario_path", args.scenario.display().to_string()));
    run.push(("style", args.style.id()));
    run.push(("max_remedy", args.max_remedy.to_string()));
    fs::write(dir.join("run.txt"), header("run", &run))?;

    let mut initial_fields = base.clone();
    initial_fields.push(("kind", "initial".into()));
    fs::write(dir.join("initial_path.txt"), path_text(&initial, &initial_fields))?;
    let mut local_header = base.clone();
    local_header.push(("kind", "local".into()));
    local_header.extend(local_fields(&local));
    match local.path() {
        Some(path) => fs::write(dir.join("local_path.txt"), path_text(path, &local_header))?,
        None => fs::write(dir.join("local_path.txt"), header("path", &local_header))?,
    }

    if local.is_stuck() {
        let failure = match explain_failure(&scenario, &initial, &planner, args.max_remedy) {
            Ok(fe) => Some(fe),
            Err(AttributionError::NoRemedy { .. }) => None,
            Err(e) => return Err(e.into()),
        };
        let text = failure_text(&scenario, failure.as_ref(), &base, args.pipeline.window, args.max_remedy)?;
        fs::write(dir.join("failure.txt"), text)?;
        let out = staging.commit()?;
        return Err(CliError::Stuck(out.join("failure.txt")));
    }

    let attr = attribute(&scenario, &initial, &planner, &args.pipeline.attribution())?;
    fs::write(dir.join("attribution.txt"), attr.to_record(&base))?;

    let maps = render_all(&scenario, &attr, &initial, local.path(), args.style, args.pipeline.scale)?;
    for map in &maps {
        map.write(dir, &scenario.name, args.pipeline.seed)?;
    }
    let (texts, count) = texts_file(&scenario, &attr, &base)?;
    fs::write(dir.join("texts.txt"), texts)?;
    let out = staging.commit()?;
    Ok(ExplainReport { out, maps: maps.len(), texts: count })
}

/// Every text of every feature and style, in rank order. Features without a
/// notable effect get a comment line instead.
fn texts_file(scenario: &Scenario, attr: &Attribution, base: &[(&str, String)]) -> Result<(String, usize), CliError> {
    let mut out = header("texts", base);
    out.push_str("# rank\tfeature\tkind\tstyle\ttext\n");
    let mut count = 0;
    for (rank, (feature, weight)) in rank_features(attr).iter().enumerate() {
        if is_null_effect(attr, *weight) {
            let _ = writeln!(out, "# {feature}: no notable effect");
            continue;
        }
        for style in TextStyle::ALL {
            for t in generate_all(attr, feature, style, scenario)? {
                let _ = writeln!(out, "{}\t{feature}\t{}\t{style}\t{}", rank + 1, t.kind, t.text);
                count += 1;
            }
        }
    }
    Ok((out, count))
}

fn failure_text(
    scenario: &Scenario,
    failure: Option<&FailureExplanation>,
    base: &[(&str, String)],
    window: f64,
    max_remedy: usize,
) -> Result<String, CliError> {
    let mut out = header("failure", base);
    let Some(fe) = failure else {
        let _ = writeln!(out, "remedy = none within {max_remedy} toggles");
        return Ok(out);
    };
    let _ = writeln!(out, "cardinality = {}", fe.cardinality);
    for set in &fe.minimal_sets {
        let names: Vec<String> = set.iter().map(Feature::to_string).collect();
        let _ = writeln!(out, "set = {}", names.join(" "));
    }
    for style in TextStyle::ALL {
        let t = generate_failure_text(fe, scenario, style, window)?;
        let _ = writeln!(out, "text.{style} = {}", t.text);
    }
    Ok(out)
}

/// Builds one battery per selected feature of every scenario into a single
/// flat directory; returns the battery ids.
pub fn cmd_battery(args: &BatteryArgs) -> Result<Vec<String>, CliError> {
    args.pipeline.validate()?;
    if args.out.exists() && !args.force {
        return Err(CliError::Invalid(format!(
            "output directory {} already exists (use --force to replace it)",
            args.out.display()
        )));
    }
    let requested = args
        .feature
        .iter()
        .map(|s| s.parse::<Feature>().map_err(|e| CliError::Invalid(format!("--feature {s}: {e}"))))
        .collect::<Result<Vec<_>, _>>()?;
    let scenarios = args.scenario.iter().map(|p| load(p)).collect::<Result<Vec<_>, _>>()?;
    let planner = args.pipeline.planner();
    let mut sets = Vec::new();
    for scenario in &scenarios {
        let initial = plan_initial(scenario)?;
        let local = plan_local(scenario, &default_vector(scenario), &initial, &planner)
            .map_err(|e| CliError::Attribution(e.into()))?;
        if local.is_stuck() {
            return Err(CliError::Invalid(format!(
                "scenario {} is stuck by default; run `navex explain` for its failure explanation",
                scenario.name
            )));
        }
        let attr = attribute(scenario, &initial, &planner, &args.pipeline.attribution())?;
        let features: Vec<Feature> = if requested.is_empty() {
            rank_features(&attr).into_iter().filter(|(_, w)| !is_null_effect(&attr, *w)).map(|(f, _)| f).collect()
        } else {
            requested.iter().filter(|f| scenario.resolve(f).is_ok()).cloned().collect()
        };
        for feature in &features {
            sets.push(build_battery(scenario, &attr, feature, &initial, local.path(), args.pipeline.scale)?);
        }
    }
    if let Some(missing) =
        requested.iter().find(|f| !scenarios.iter().any(|s| s.resolve(f).is_ok()))
    {
        return Err(CliError::Invalid(format!("feature {missing} is in none of the scenarios")));
    }
    if sets.is_empty() {
        return Err(CliError::Invalid("no feature with a notable effect; nothing to build".into()));
    }

    let staging = Staging::new(&args.out, args.force)?;
    let mut run = vec![("command", "battery".to_string())];
    for p in &args.scenario {
        run.push(("scenario_path", p.display().to_string()));
    }
    run.extend(args.pipeline.header());
    fs::write(staging.path().join("run.txt"), header("run", &run))?;
    let mut ids = Vec::new();
    for set in &sets {
        set.write(staging.path(), args.pipeline.seed)?;
        ids.push(set.battery_id.clone());
    }
    staging.commit()?;
    Ok(ids)
}

fn open_study(data_dir: &Path, batteries: &Path, seed: u64, trial_size: usize) -> Result<Study, CliError> {
    if !batteries.is_dir() {
        return Err(CliError::Invalid(format!("battery directory {} does not exist", batteries.display())));
    }
    let batteries = load_batteries(batteries)?;
    let config = StudyConfig { seed, visual_per_trial: trial_size, ..StudyConfig::new(data_dir) };
    Ok(Study::open(config, batteries)?)
}

/// Serves the study until interrupted.
pub fn cmd_serve(args: &ServeArgs) -> Result<(), CliError> {
    if args.trial_size == 0 {
        return Err(CliError::Invalid("--trial-size must be at least 1".into()));
    }
    let mut study = open_study(&args.data_dir, &args.batteries, args.seed, args.trial_size)?;
    if let Some(path) = &args.questionnaire {
        let questionnaire = navex_study::Questionnaire::load(path)
            .map_err(|e| CliError::Invalid(format!("questionnaire {}: {e}", path.display())))?;
        study = Study::open(StudyConfig { questionnaire, ..study.config().clone() }, study.batteries().to_vec())?;
    }
    if study.batteries().is_empty() {
        eprintln!("navex: warning: no batteries in {}; sessions cannot be created", args.batteries.display());
    }
    eprintln!("navex: serving {} batteries on http://{}", study.batteries().len(), args.listen);
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(navex_study::http::serve(args.listen, Arc::new(study), Some(args.batteries.clone())))?;
    Ok(())
}

/// The summary table of the stored responses.
pub fn cmd_summarize(args: &SummarizeArgs) -> Result<String, CliError> {
    if !args.data_dir.is_dir() {
        return Err(CliError::Invalid(format!("data directory {} does not exist", args.data_dir.display())));
    }
    let study = open_study(&args.data_dir, &args.batteries, 0, 4)?;
    Ok(study.summarize().to_tsv())
}

#[cfg(test)]
mod tests {
    use super::*;
    use navex_core::world::Cell;

    #[test]
    fn exit_codes_are_distinct() {
        let codes = [
            CliError::Invalid("x".into()).exit_code(),
            CliError::Plan(PlanError::NoPath { from: Cell::new(0, 0), to: Cell::new(1, 1) }).exit_code(),
            CliError::Stuck(PathBuf::new()).exit_code(),
            CliError::Io(std::io::Error::other("x")).exit_code(),
        ];
        assert_eq!(codes, [EXIT_INVALID, EXIT_NO_PATH, EXIT_STUCK, EXIT_INTERNAL]);
    }

    #[test]
    fn staging_is_removed_unless_committed() {
        let dir = tempfile::tempdir().unwrap();
        let target = dir.path().join("out");
        let staging = Staging::new(&target, false).unwrap();
        fs::write(staging.path().join("a"), "1").unwrap();
        drop(staging);
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);

        let staging = Staging::new(&target, false).unwrap();
        fs::write(staging.path().join("a"), "1").unwrap();
        staging.commit().unwrap();
        assert_eq!(fs::read_to_string(target.join("a")).unwrap(), "1");
        assert!(matches!(Staging::new(&target, false), Err(CliError::Invalid(_))));
        let staging = Staging::new(&target, true).unwrap();
        staging.commit().unwrap();
        assert!(!target.join("a").exists());
    }

    #[test]
    fn flags_parse_with_env_names() {
        let cli = Cli::try_parse_from([
            "navex", "explain", "--scenario", "s.scn", "--out", "o", "--seed", "9", "--kernel-width", "inf",
            "--style", "grayscale-outline-hatched",
        ])
        .unwrap();
        let Command::Explain(args) = cli.command else { panic!() };
        assert_eq!(args.pipeline.seed, 9);
        assert!(args.pipeline.kernel_width.is_infinite());
        assert_eq!(args.style.id(), "grayscale-outline-hatched");
        assert!(Cli::try_parse_from(["navex", "explain", "--scenario", "s", "--out", "o", "--style", "x"]).is_err());
    }

    #[test]
    fn bad_knobs_are_invalid_input() {
        for p in [
            PipelineArgs { window: 0.0, ..Default::default() },
            PipelineArgs { scale: 0, ..Default::default() },
            PipelineArgs { ridge: -1.0, ..Default::default() },
            PipelineArgs { samples: 0, ..Default::default() },
            PipelineArgs { kernel_width: 0.0, ..Default::default() },
        ] {
            assert_eq!(p.validate().unwrap_err().exit_code(), EXIT_INVALID, "{p:?}");
        }
    }
}
