//! Command-line harness: training runs, evaluation, reports and the
//! regret check, all driven by a flat key-value config.

pub mod config;

use acllft_core::central::{DecideMode, DECISION_HEADER, decision_row};
use acllft_core::marl::{
    central_selection_entropy, eval_csv, evaluate, improvement, metrics_csv, random_baseline, run_episode, train,
    AgentMode, RolloutOptions, TrainerCheckpoint, TrainerConfig, EVAL_SEED_BASE,
};
use acllft_core::par::map_indices;
use acllft_core::spectral::{build_window_bank, decompose, HistoryWindow, WindowMode};
use acllft_core::theory::regret_experiment;
use clap::{Args, Parser, Subcommand};
use config::{ExperimentConfig, Method};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

pub const SEED_ENV: &str = "ACLLFT_SEED";
pub const EVAL_SUMMARY_HEADER: &str = "method,seed,episodes_done,mean_return,baseline_return,improvement,central_entropy";
pub const COMPARE_HEADER: &str = "method,seed,mean_return,std_return,evaluations";
pub const SPECTRAL_HEADER: &str = "mode,component,bins,energy";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Divergence(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) | Self::Validation(_) => 1,
            Self::Divergence(_) => 2,
        }
    }
}

impl From<acllft_core::Error> for CliError {
    fn from(e: acllft_core::Error) -> Self {
        match e {
            acllft_core::Error::Divergence(m) => Self::Divergence(m),
            other => Self::Validation(other.to_string()),
        }
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Validation(format!("{}: {e}", path.display()))
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    std::fs::write(path, contents).map_err(|e| io_err(path, e))
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| io_err(path, e))
}

#[derive(Parser, Debug)]
#[command(name = "acllft", version, about = "Adaptive context-length training and analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train every configured method on every seed.
    Train(Common),
    /// Re-evaluate trained checkpoints against the random baseline.
    Eval(Common),
    /// Decompose a synthetic signal through both window banks.
    SpectralDemo(Common),
    /// Fixed versus adaptive context length on the regime-switching process.
    TheoremCheck(Common),
    /// Mean and spread of late evaluation returns per method and seed.
    CompareFixed(Common),
    /// Step-by-step log of the context lengths chosen by a trained agent.
    CaseLog(Common),
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Key-value config file; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Single seed, overriding the config and the environment.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overwrite an existing run.
    #[arg(long)]
    force: bool,
}

/// Loads the config and applies overrides: `--seed` beats the environment
/// variable, which beats the config's `seeds`.
pub fn resolve_config(
    config: Option<&Path>,
    seed_flag: Option<u64>,
    env_seed: Option<&str>,
    out: Option<&Path>,
) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match config {
        Some(p) => ExperimentConfig::from_file(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = seed_flag {
        cfg.seeds = vec![s];
    } else if let Some(raw) = env_seed {
        let s = raw
            .trim()
            .parse()
            .map_err(|_| CliError::Validation(format!("{SEED_ENV}='{raw}' is not a non-negative integer")))?;
        cfg.seeds = vec![s];
    }
    if let Some(o) = out {
        cfg.out = o.to_path_buf();
    }
    Ok(cfg)
}

/// Parses `args` (including the program name) and runs the command. Messages
/// go to stderr; the return value is the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli, std::env::var(SEED_ENV).ok().as_deref()) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn execute(cli: Cli, env_seed: Option<&str>) -> Result<(), CliError> {
    let (common, cmd): (&Common, fn(&ExperimentConfig, bool) -> Result<(), CliError>) = match &cli.command {
        Command::Train(c) => (c, cmd_train),
        Command::Eval(c) => (c, cmd_eval),
        Command::SpectralDemo(c) => (c, cmd_spectral_demo),
        Command::TheoremCheck(c) => (c, cmd_theorem_check),
        Command::CompareFixed(c) => (c, cmd_compare_fixed),
        Command::CaseLog(c) => (c, cmd_case_log),
    };
    let cfg = resolve_config(common.config.as_deref(), common.seed, env_seed, common.out.as_deref())?;
    cmd(&cfg, common.force)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunEntry {
    pub method: String,
    pub seed: u64,
    pub dir: PathBuf,
    pub elapsed_secs: f64,
    pub diverged: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_hash: String,
    pub code_version: String,
    pub tag: String,
    pub seeds: Vec<u64>,
    pub runs: Vec<RunEntry>,
    pub started_unix: u64,
    pub elapsed_secs: f64,
}

pub const MANIFEST_FILE: &str = "manifest.json";

fn guard_manifest(dir: &Path, hash: &str, force: bool) -> Result<(), CliError> {
    let path = dir.join(MANIFEST_FILE);
    if force || !path.exists() {
        return Ok(());
    }
    let old: RunManifest =
        serde_json::from_str(&read(&path)?).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    if old.config_hash == hash {
        Err(CliError::Validation(format!(
            "{} already holds a run of this exact config; pass --force to overwrite",
            dir.display()
        )))
    } else {
        Err(CliError::Validation(format!(
            "{} holds a run of a different config; pass --force or choose another --out",
            dir.display()
        )))
    }
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

/// Trained networks plus the config they came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointFile {
    pub config_hash: String,
    pub method: String,
    pub seed: u64,
    pub trainer: TrainerCheckpoint,
}

pub fn run_dir(out: &Path, method: Method, seed: u64) -> PathBuf {
    out.join(method.dir_name()).join(format!("seed_{seed}"))
}

fn runs(cfg: &ExperimentConfig) -> Vec<(Method, u64)> {
    cfg.methods.iter().flat_map(|&m| cfg.seeds.iter().map(move |&s| (m, s))).collect()
}

fn greedy_options(t: &TrainerConfig) -> RolloutOptions {
    RolloutOptions {
        l_max: t.l_max(),
        context_mode: t.context_mode,
        local_history: t.local_history,
        central_mode: DecideMode::Greedy,
        agent_mode: AgentMode::Greedy,
    }
}

fn decision_log(cfg: &ExperimentConfig, t: &TrainerConfig, models: &acllft_core::marl::Models) -> Result<String, CliError> {
    let env = cfg.env_spec();
    let mut s = String::from(DECISION_HEADER);
    s.push('\n');
    for k in 0..cfg.case_episodes {
        let mut e = env.build()?;
        let traj = run_episode(e.as_mut(), models, &greedy_options(t), EVAL_SEED_BASE + k as u64)?;
        for (step, d) in traj.decisions.iter().enumerate() {
            s.push_str(&decision_row(k, step, d));
            s.push('\n');
        }
    }
    Ok(s)
}

fn cmd_train(cfg: &ExperimentConfig, force: bool) -> Result<(), CliError> {
    let hash = cfg.hash();
    guard_manifest(&cfg.out, &hash, force)?;
    let started = unix_now();
    let clock = Instant::now();
    let env = cfg.env_spec();
    let jobs = runs(cfg);
    let results = map_indices(cfg.trainer.exec, jobs.len(), |j| -> Result<RunEntry, CliError> {
        let (method, seed) = jobs[j];
        let t0 = Instant::now();
        let tcfg = cfg.trainer_for(method, seed);
        let out = train(&tcfg, &env)?;
        let dir = run_dir(&cfg.out, method, seed);
        write(&dir.join("metrics.csv"), metrics_csv(&out.metrics))?;
        write(&dir.join("eval.csv"), eval_csv(&out.evals))?;
        let ck = CheckpointFile { config_hash: hash.clone(), method: method.to_string(), seed, trainer: out.checkpoint };
        write(&dir.join("checkpoint.json"), serde_json::to_string_pretty(&ck).expect("checkpoint serializes"))?;
        write(&dir.join("decisions.csv"), decision_log(cfg, &tcfg, &out.models)?)?;
        if let Some(last) = out.evals.last() {
            eprintln!(
                "{method} seed {seed}: {} episodes, eval return {:.3} (baseline {:.3}, improvement {:+.1}%)",
                last.episode,
                last.mean_return,
                last.baseline_return,
                100.0 * last.improvement
            );
        }
        Ok(RunEntry { method: method.to_string(), seed, dir, elapsed_secs: t0.elapsed().as_secs_f64(), diverged: out.diverged })
    });
    let entries = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    let manifest = RunManifest {
        command: "train".into(),
        config_hash: hash,
        code_version: env!("CARGO_PKG_VERSION").into(),
        tag: cfg.tag.clone(),
        seeds: cfg.seeds.clone(),
        started_unix: started,
        elapsed_secs: clock.elapsed().as_secs_f64(),
        runs: entries,
    };
    write(&cfg.out.join(MANIFEST_FILE), serde_json::to_string_pretty(&manifest).expect("manifest serializes"))?;
    let diverged: Vec<String> = manifest
        .runs
        .iter()
        .filter_map(|r| r.diverged.as_ref().map(|m| format!("{} seed {}: {m}", r.method, r.seed)))
        .collect();
    if diverged.is_empty() {
        Ok(())
    } else {
        Err(CliError::Divergence(format!("last-good checkpoints saved; diverged runs: {}", diverged.join("; "))))
    }
}

fn load_checkpoint(cfg: &ExperimentConfig, method: Method, seed: u64) -> Result<CheckpointFile, CliError> {
    let path = run_dir(&cfg.out, method, seed).join("checkpoint.json");
    if !path.exists() {
        return Err(CliError::Validation(format!("missing checkpoint for {method} seed {seed}: {}", path.display())));
    }
    serde_json::from_str(&read(&path)?).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

fn cmd_eval(cfg: &ExperimentConfig, _force: bool) -> Result<(), CliError> {
    let env = cfg.env_spec();
    let mut s = format!("{EVAL_SUMMARY_HEADER}\n");
    for (method, seed) in runs(cfg) {
        let ck = load_checkpoint(cfg, method, seed)?;
        let tcfg = cfg.trainer_for(method, seed);
        let models = ck.trainer.restore(&tcfg, &env)?;
        let r = evaluate(&tcfg, &env, &models, DecideMode::Greedy, AgentMode::Greedy)?;
        let base = random_baseline(&tcfg, &env)?;
        let h = central_selection_entropy(&tcfg, &env, &models)?;
        s.push_str(&format!(
            "{method},{seed},{},{r},{base},{},{h}\n",
            ck.trainer.episodes_done,
            improvement(r, base)
        ));
    }
    write(&cfg.out.join("eval_summary.csv"), &s)?;
    print!("{s}");
    Ok(())
}

fn cmd_spectral_demo(cfg: &ExperimentConfig, _force: bool) -> Result<(), CliError> {
    let t = cfg.spectral_t;
    let seed = cfg.seeds[0];
    // three tones plus a slow drift, with a seed-dependent phase
    let phase = (seed % 1000) as f64 * 0.001 * std::f64::consts::TAU;
    let signal: Vec<f64> = (0..t)
        .map(|u| {
            let x = u as f64 / t as f64 * std::f64::consts::TAU;
            1.5 * (x + phase).sin() + 0.7 * (5.0 * x).cos() + 0.3 * ((t as f64 / 2.0 - 3.0) * x).sin() + 0.2 * u as f64 / t as f64
        })
        .collect();
    let history = HistoryWindow::new(signal.clone(), t, 1)?;
    let total: f64 = signal.iter().map(|v| v * v).sum();
    let mut s = format!("{SPECTRAL_HEADER}\n");
    for mode in [WindowMode::Literal, WindowMode::Exact] {
        let bank = build_window_bank(t, cfg.spectral_m, mode)?;
        let dec = decompose(&history, &bank)?;
        let energy = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>();
        let bins = |w: &[bool]| w.iter().filter(|&&b| b).count();
        s.push_str(&format!("{mode},lowpass,{},{}\n", bins(bank.lowpass()), energy(&dec.lowpass_component)));
        for (j, (w, c)) in bank.bands().iter().zip(&dec.band_components).enumerate() {
            s.push_str(&format!("{mode},band_{j},{},{}\n", bins(w), energy(c)));
        }
        s.push_str(&format!(
            "{mode},residual,{},{}\n",
            bank.residual_set().len(),
            dec.reconstruction_error_energy(&history)
        ));
    }
    s.push_str(&format!("signal,total,{t},{total}\n"));
    write(&cfg.out.join("spectral_demo.csv"), &s)?;
    print!("{s}");
    Ok(())
}

fn cmd_theorem_check(cfg: &ExperimentConfig, force: bool) -> Result<(), CliError> {
    let root = cfg.out.join("theorem");
    let hash = cfg.hash();
    guard_manifest(&root, &hash, force)?;
    let started = unix_now();
    let clock = Instant::now();
    let policy = cfg.theory_policy();
    let mut entries = Vec::new();
    for &seed in &cfg.seeds {
        let t0 = Instant::now();
        let report = regret_experiment(&acllft_core::theory::RegretConfig { seed, ..cfg.theory.clone() }, &policy)?;
        let dir = root.join(format!("seed_{seed}"));
        write(&dir.join("regret.csv"), report.csv())?;
        write(&dir.join("summary.json"), serde_json::to_string_pretty(&report.summary_json()).expect("summary serializes"))?;
        let best = report.best_fixed();
        eprintln!(
            "seed {seed}: adaptive {:.1}, best fixed {} {:.1}, ratio {:.3}",
            report.adaptive.total(),
            best.name,
            best.total(),
            report.adaptive.total() / best.total()
        );
        entries.push(RunEntry {
            method: report.adaptive.name.clone(),
            seed,
            dir,
            elapsed_secs: t0.elapsed().as_secs_f64(),
            diverged: None,
        });
    }
    let manifest = RunManifest {
        command: "theorem-check".into(),
        config_hash: hash,
        code_version: env!("CARGO_PKG_VERSION").into(),
        tag: cfg.tag.clone(),
        seeds: cfg.seeds.clone(),
        runs: entries,
        started_unix: started,
        elapsed_secs: clock.elapsed().as_secs_f64(),
    };
    write(&root.join(MANIFEST_FILE), serde_json::to_string_pretty(&manifest).expect("manifest serializes"))
}

/// Parses an eval CSV into `(episode, mean_return)` pairs.
fn parse_eval_csv(path: &Path) -> Result<Vec<(usize, f64)>, CliError> {
    let text = read(path)?;
    let mut lines = text.lines();
    if lines.next() != Some(acllft_core::marl::EVAL_HEADER) {
        return Err(CliError::Validation(format!("{}: unexpected header", path.display())));
    }
    lines
        .map(|l| {
            let mut f = l.split(',');
            let ep = f.next().and_then(|x| x.parse().ok());
            let r = f.next().and_then(|x| x.parse().ok());
            ep.zip(r).ok_or_else(|| CliError::Validation(format!("{}: malformed row '{l}'", path.display())))
        })
        .collect()
}

/// Mean and sample standard deviation of the evaluation returns taken in the
/// last `window` fraction of training.
pub fn late_window_stats(evals: &[(usize, f64)], window: f64) -> Result<(f64, f64, usize), CliError> {
    let last = evals.iter().map(|e| e.0).max().unwrap_or(0);
    let from = last as f64 * (1.0 - window);
    let xs: Vec<f64> = evals.iter().filter(|e| e.0 > 0 && e.0 as f64 >= from).map(|e| e.1).collect();
    if xs.is_empty() {
        return Err(CliError::Validation(format!("compare window {window} covers no training episodes")));
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let std = if xs.len() > 1 { (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() } else { 0.0 };
    Ok((mean, std, xs.len()))
}

fn cmd_compare_fixed(cfg: &ExperimentConfig, _force: bool) -> Result<(), CliError> {
    let mut s = format!("{COMPARE_HEADER}\n");
    for (method, seed) in runs(cfg) {
        load_checkpoint(cfg, method, seed)?;
        let evals = parse_eval_csv(&run_dir(&cfg.out, method, seed).join("eval.csv"))?;
        let (mean, std, n) = late_window_stats(&evals, cfg.compare_window)?;
        s.push_str(&format!("{method},{seed},{mean},{std},{n}\n"));
    }
    write(&cfg.out.join("compare_fixed.csv"), &s)?;
    print!("{s}");
    Ok(())
}

fn cmd_case_log(cfg: &ExperimentConfig, _force: bool) -> Result<(), CliError> {
    let env = cfg.env_spec();
    for (method, seed) in runs(cfg) {
        let ck = load_checkpoint(cfg, method, seed)?;
        let tcfg = cfg.trainer_for(method, seed);
        let models = ck.trainer.restore(&tcfg, &env)?;
        let log = decision_log(cfg, &tcfg, &models)?;
        write(&run_dir(&cfg.out, method, seed).join("case_log.csv"), &log)?;
        print!("{log}");
    }
    Ok(())
}
