//! The `ctgraph` command line: run agents, print analytics, validate the
//! closed forms by simulation, emit curricula and dump image sets.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use ctgraph::agents::{NavigationOracle, OptimalOracle, QHyperParams, QLearner, RandomPolicy};
use ctgraph::analytics::{GraphAnalytics, ANALYTICS_CSV_HEADER};
use ctgraph::config::{load_config, preset, ConfigError, GraphSpec};
use ctgraph::dynamics::{run_episode, Env, EnvError, Policy, DEFAULT_STEP_CAP, TRANSCRIPT_HEADER};
use ctgraph::mc::{chi_square_lengths, mc_estimate, mc_length_histogram, McQuantity, KAPPA_MAX_END_STATES};
use ctgraph::observations::build_image_set;
use ctgraph::rewards::{make_curriculum, CurriculumMode};
use ctgraph::topology::{self, GraphShape};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

/// Chi-square p-values below this count as a failed check, the two-sided
/// tail mass beyond 4 sigma.
const CHI_SQUARE_ALPHA: f64 = 6.334e-5;

/// Largest graph whose kappa row `validate` will simulate.
const VALIDATE_KAPPA_MAX_ENDS: u64 = 4096;

#[derive(Debug, Parser)]
#[command(name = "ctgraph", version, about = "Configurable tree-graph benchmark")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
struct Source {
    /// JSON configuration file
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Built-in configuration name, e.g. CT-FO-B1
    #[arg(long, value_name = "NAME")]
    preset: Option<String>,
}

#[derive(Debug, Args)]
#[group(required = false, multiple = false)]
struct OptionalSource {
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    #[arg(long, value_name = "NAME")]
    preset: Option<String>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum AgentArg {
    Random,
    Navigation,
    Optimal,
    Qlearn,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Reward,
    Images,
    Depth,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Play episodes with an agent and write the transcript CSV.
    Run {
        #[command(flatten)]
        source: Source,
        #[arg(long, value_enum, default_value = "random")]
        agent: AgentArg,
        #[arg(long, default_value_t = 1)]
        episodes: u64,
        /// Transcript destination; `-` writes to stdout
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
        /// Learning-curve CSV (qlearn only)
        #[arg(long, value_name = "FILE")]
        curve: Option<PathBuf>,
        /// Overrides the configuration seed
        #[arg(long)]
        seed: Option<u64>,
        /// Stops an episode after this many steps
        #[arg(long, default_value_t = DEFAULT_STEP_CAP)]
        step_cap: u64,
    },
    /// Print the closed-form analytics block.
    Analyze {
        #[command(flatten)]
        source: OptionalSource,
        #[arg(long)]
        b: Option<u32>,
        #[arg(long)]
        d: Option<u32>,
        #[arg(long)]
        p: Option<f64>,
        /// Also write a header and one CSV row to FILE
        #[arg(long, value_name = "FILE")]
        csv: Option<PathBuf>,
    },
    /// Compare closed forms with Monte Carlo estimates.
    Validate {
        #[command(flatten)]
        source: Source,
        #[arg(long, default_value_t = 100_000)]
        episodes: u64,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Write a sequence of task configurations.
    Curriculum {
        #[command(flatten)]
        source: Source,
        #[arg(long, value_enum)]
        mode: ModeArg,
        #[arg(long)]
        tasks: usize,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        /// Depth mode: each deeper goal extends the previous one
        #[arg(long)]
        aligned_goals: bool,
    },
    /// Dump the canonical image set as PGM files plus a manifest.
    Images {
        #[command(flatten)]
        source: Source,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
}

#[derive(Debug)]
enum CliError {
    Config(String),
    Runtime(String),
    Validation(String),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Validation(_) => EXIT_VALIDATION,
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Runtime(m) | CliError::Validation(m) => m,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<EnvError> for CliError {
    fn from(e: EnvError) -> Self {
        match e {
            EnvError::Config(c) => CliError::Config(c.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |e| CliError::Runtime(format!("{}: {e}", path.display()))
}

fn load(config: &Option<PathBuf>, name: &Option<String>) -> Result<GraphSpec, CliError> {
    match (config, name) {
        (Some(path), _) => Ok(load_config(path)?),
        (None, Some(name)) => Ok(preset(name)?),
        (None, None) => Err(CliError::Config("either --config or --preset is required".into())),
    }
}

/// Parses `args` (program name first) and runs the command, writing normal
/// output to `out` and diagnostics to `err`. Returns the process exit code.
pub fn run_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() { err.write_all(text.as_bytes()) } else { out.write_all(text.as_bytes()) };
            return code;
        }
    };
    match dispatch(cli.command, out) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {}", e.message());
            e.code()
        }
    }
}

/// [`run_with`] on the process's stdout and stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let stdout = io::stdout();
    let stderr = io::stderr();
    run_with(args, &mut stdout.lock(), &mut stderr.lock())
}

fn dispatch(command: Command, out: &mut dyn Write) -> Result<(), CliError> {
    match command {
        Command::Run { source, agent, episodes, out: path, curve, seed, step_cap } => {
            let mut spec = load(&source.config, &source.preset)?;
            if let Some(seed) = seed {
                spec.seed = seed;
            }
            cmd_run(&spec, agent, episodes, &path, curve.as_deref(), step_cap, out)
        }
        Command::Analyze { source, b, d, p, csv } => {
            let base = match (&source.config, &source.preset) {
                (None, None) => None,
                _ => Some(load(&source.config, &source.preset)?.graph_shape),
            };
            let missing = |key: &str| CliError::Config(format!("--{key} is required without --config or --preset"));
            let b = b.or(base.as_ref().map(|s| s.b)).ok_or_else(|| missing("b"))?;
            let d = d.or(base.as_ref().map(|s| s.d)).ok_or_else(|| missing("d"))?;
            let p = p.or(base.as_ref().map(|s| s.p)).ok_or_else(|| missing("p"))?;
            let shape = GraphShape::new(b, d, p).map_err(|e| CliError::Config(format!("graph_shape: {e}")))?;
            cmd_analyze(&shape, csv.as_deref(), out)
        }
        Command::Validate { source, episodes, seed } => {
            let spec = load(&source.config, &source.preset)?;
            let seed = seed.unwrap_or(spec.seed);
            cmd_validate(&spec, episodes, seed, out)
        }
        Command::Curriculum { source, mode, tasks, out: dir, aligned_goals } => {
            let spec = load(&source.config, &source.preset)?;
            cmd_curriculum(&spec, mode, tasks, &dir, aligned_goals, out)
        }
        Command::Images { source, out: dir } => {
            let spec = load(&source.config, &source.preset)?;
            cmd_images(&spec, &dir, out)
        }
    }
}

fn open_out<'a>(path: &Path, stdout: &'a mut dyn Write) -> Result<Box<dyn Write + 'a>, CliError> {
    if path.as_os_str() == "-" {
        Ok(Box::new(stdout))
    } else {
        let file = fs::File::create(path).map_err(io_err(path))?;
        Ok(Box::new(io::BufWriter::new(file)))
    }
}

fn cmd_run(
    spec: &GraphSpec,
    agent: AgentArg,
    episodes: u64,
    path: &Path,
    curve: Option<&Path>,
    step_cap: u64,
    stdout: &mut dyn Write,
) -> Result<(), CliError> {
    if curve.is_some() && !matches!(agent, AgentArg::Qlearn) {
        return Err(CliError::Config("--curve only applies to --agent qlearn".into()));
    }
    let mut env = Env::new(spec)?;
    let b = env.shape().branching();
    let hyper = QHyperParams::default();
    let mut fixed: Option<Box<dyn Policy>> = match agent {
        AgentArg::Random => Some(Box::new(RandomPolicy::new(b, spec.seed, 0))),
        AgentArg::Navigation => Some(Box::new(NavigationOracle::new(b, spec.seed, 0))),
        AgentArg::Optimal => Some(Box::new(OptimalOracle::new(env.task().clone()))),
        AgentArg::Qlearn => None,
    };
    let mut learner = QLearner::new(env.action_count(), hyper, spec.seed);

    let (mut total, mut ends, mut goals, mut truncated) = (0.0, 0u64, 0u64, 0u64);
    let mut curve_rows = Vec::new();
    {
        let mut w = open_out(path, stdout)?;
        let write_err = |e: io::Error| CliError::Runtime(format!("{}: {e}", path.display()));
        writeln!(w, "{TRANSCRIPT_HEADER}").map_err(write_err)?;
        for episode in 0..episodes {
            let transcript = match fixed.as_mut() {
                Some(policy) => run_episode(&mut env, policy.as_mut(), step_cap)?,
                None => {
                    learner.epsilon = hyper.epsilon(episode as usize, episodes as usize);
                    run_episode(&mut env, &mut learner, step_cap)?
                }
            };
            transcript.write_csv_rows(&mut w).map_err(write_err)?;
            let ret = transcript.total_return();
            total += ret;
            truncated += u64::from(transcript.truncated);
            if transcript.final_state.kind() == topology::StateKind::End {
                ends += 1;
                if transcript.final_state.path() == env.task().goal.as_slice() {
                    goals += 1;
                }
            }
            if fixed.is_none() {
                curve_rows.push(format!("{episode},{ret},{}", learner.epsilon));
            }
        }
        w.flush().map_err(write_err)?;
    }
    if let Some(curve) = curve {
        let mut text = String::from("episode,return,epsilon\n");
        for row in &curve_rows {
            text.push_str(row);
            text.push('\n');
        }
        fs::write(curve, text).map_err(io_err(curve))?;
    }
    if path.as_os_str() != "-" {
        let n = episodes.max(1) as f64;
        writeln!(
            stdout,
            "episodes={episodes}\nmean_return={}\nend_rate={}\ngoal_rate={}\ntruncated={truncated}",
            total / n,
            ends as f64 / n,
            goals as f64 / n
        )
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    Ok(())
}

fn cmd_analyze(shape: &GraphShape, csv: Option<&Path>, out: &mut dyn Write) -> Result<(), CliError> {
    let a = GraphAnalytics::compute(shape).map_err(|e| CliError::Config(e.to_string()))?;
    out.write_all(a.to_key_value().as_bytes()).map_err(|e| CliError::Runtime(e.to_string()))?;
    if let Some(path) = csv {
        fs::write(path, format!("{ANALYTICS_CSV_HEADER}\n{}\n", a.to_csv_row())).map_err(io_err(path))?;
    }
    Ok(())
}

fn cmd_validate(spec: &GraphSpec, episodes: u64, seed: u64, out: &mut dyn Write) -> Result<(), CliError> {
    if episodes == 0 {
        return Err(CliError::Config("--episodes must be at least 1".into()));
    }
    let shape = spec.shape()?;
    let ends = topology::count_end_states(&shape).map_err(|e| CliError::Config(e.to_string()))?;
    let mut quantities = vec![McQuantity::RewardProbability, McQuantity::EndProbability, McQuantity::MeanLength];
    if ends <= VALIDATE_KAPPA_MAX_ENDS.min(KAPPA_MAX_END_STATES) {
        quantities.push(McQuantity::Kappa);
    }
    let mut lines = vec![format!("{:<10} {:>14} {:>14} {:>12} {:>8}", "quantity", "closed_form", "estimate", "std_error", "z")];
    let mut failures = Vec::new();
    for q in quantities {
        let n = if q == McQuantity::Kappa { episodes.min(10_000) } else { episodes };
        let est = mc_estimate(spec, q, n, seed)?;
        let want = q.closed_form(spec)?;
        let z = est.z_score(want);
        let mut line = format!("{:<10} {:>14.6e} {:>14.6e} {:>12.4e} {:>+8.2}", q.name(), want, est.estimate, est.std_error, z);
        if est.is_contaminated() {
            line.push_str(&format!("  ({} truncated)", est.truncated));
            failures.push(format!("{} has truncated episodes", q.name()));
        }
        if z.abs() > 4.0 {
            failures.push(format!("{} z={z:+.2}", q.name()));
        }
        lines.push(line);
    }
    let hist = mc_length_histogram(spec, episodes, seed)?;
    let chi = chi_square_lengths(&hist, shape.depth(), shape.wait_probability(), 5.0)
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    lines.push(format!("length_pmf chi2={:.3} dof={} p_value={:.4}", chi.statistic, chi.dof, chi.p_value));
    if chi.rejects_at(CHI_SQUARE_ALPHA) {
        failures.push(format!("length_pmf p_value={:.2e}", chi.p_value));
    }
    for line in lines {
        writeln!(out, "{line}").map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Validation(format!("validation failed: {}", failures.join("; "))))
    }
}

fn cmd_curriculum(
    spec: &GraphSpec,
    mode: ModeArg,
    k: usize,
    dir: &Path,
    aligned: bool,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let (mode, mode_name) = match mode {
        ModeArg::Reward => (CurriculumMode::Reward, "reward"),
        ModeArg::Images => (CurriculumMode::Images, "images"),
        ModeArg::Depth => (CurriculumMode::Depth, "depth"),
    };
    let tasks = make_curriculum(spec, mode, k, aligned).map_err(|e| CliError::Config(e.to_string()))?;
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut entries = Vec::new();
    for (i, t) in tasks.iter().enumerate() {
        let file = format!("task_{i:03}.json");
        let path = dir.join(&file);
        fs::write(&path, t.spec.to_json() + "\n").map_err(io_err(&path))?;
        entries.push(json!({
            "file": file,
            "goal": t.task.goal,
            "depth": t.spec.graph_shape.d,
            "image_seed": t.spec.image_set.seed,
        }));
        writeln!(out, "{}", path.display()).map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    let manifest = json!({ "mode": mode_name, "aligned_goals": aligned, "tasks": entries });
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).expect("json value serializes") + "\n";
    fs::write(&path, text).map_err(io_err(&path))?;
    Ok(())
}

fn cmd_images(spec: &GraphSpec, dir: &Path, out: &mut dyn Write) -> Result<(), CliError> {
    let set = build_image_set(spec.image_set.nr_images, spec.image_set.seed)
        .map_err(|e| CliError::Config(e.to_string()))?;
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut manifest = String::from("class_id,file,rotation,blueprint\n");
    for class in &set.classes {
        let file = format!("class_{:04}.pgm", class.class_id);
        let path = dir.join(&file);
        fs::write(&path, class.to_pgm()).map_err(io_err(&path))?;
        manifest.push_str(&format!(
            "{},{file},{},{}\n",
            class.class_id,
            class.base_rotation.degrees(),
            class.blueprint_digits()
        ));
    }
    let path = dir.join("manifest.csv");
    fs::write(&path, manifest).map_err(io_err(&path))?;
    writeln!(out, "wrote {} images to {}", set.len(), dir.display()).map_err(|e| CliError::Runtime(e.to_string()))?;
    Ok(())
}
