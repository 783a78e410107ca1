//! `dploc`: simulate scenes, localize sources, and run batch evaluations.

mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dploc::cgmm::SteeringTable;
use dploc::pipeline::{
    evaluate, localize, write_eval_outputs, write_localize_outputs, MicPair, SummaryRow,
};
use dploc::scene::synth_scene;
use dploc::signal::load_wav_files;

use config::{Command, ConfigError, Input, KeyValues, RunConfig};

#[derive(Parser)]
#[command(
    name = "dploc",
    version,
    about = "Multi-source azimuth localization from two-channel audio"
)]
struct Cli {
    #[command(subcommand)]
    command: Sub,
    #[command(flatten)]
    common: Common,
}

#[derive(Subcommand)]
enum Sub {
    /// Render a synthetic scene to mixture.wav, truth.json and steering.csv.
    Simulate,
    /// Localize sources in WAV input or a simulated scene.
    Localize(LocalizeArgs),
    /// Run seeded simulated trials and aggregate MD/FA/MAE/outlier rates.
    Evaluate,
}

#[derive(Args)]
struct Common {
    /// Flat key = value config file; flags override it.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, value_name = "DIR")]
    out_dir: Option<PathBuf>,
    /// blind or semi-blind.
    #[arg(long, global = true)]
    mode: Option<String>,
    /// Source count (semi-blind detection and simulated scenes).
    #[arg(long, global = true, value_name = "I")]
    sources: Option<usize>,
    /// SNR in dB, or `inf`.
    #[arg(long, global = true, allow_hyphen_values = true)]
    snr_db: Option<String>,
    #[arg(long, global = true)]
    t60_s: Option<f64>,
    #[arg(long, global = true)]
    gamma: Option<f64>,
    /// Component variance of the mixture model.
    #[arg(long, global = true)]
    sigma2: Option<f64>,
    #[arg(long, global = true, value_name = "N")]
    trials: Option<usize>,
    /// Source azimuths for a simulated scene, e.g. `-40,40`.
    #[arg(long, global = true, allow_hyphen_values = true)]
    directions: Option<String>,
    #[arg(long, global = true)]
    duration_s: Option<f64>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    drr_db: Option<f64>,
    /// Any config key, e.g. `--set ctf.max_freq_hz=3000`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long, short, global = true)]
    verbose: bool,
}

#[derive(Args)]
struct LocalizeArgs {
    /// One multichannel WAV file or several mono files.
    #[arg(long, value_name = "FILE")]
    wav: Vec<PathBuf>,
    /// Steering table (CSV or JSON), one per microphone pair.
    #[arg(long, value_name = "FILE")]
    steering: Vec<PathBuf>,
    /// Channel pair `a-b` for each steering table (default `0-1`).
    #[arg(long, value_name = "A-B")]
    pair: Vec<String>,
    /// True azimuths for scoring file input.
    #[arg(long, allow_hyphen_values = true)]
    truth: Option<String>,
    /// Also write the selected DP-RTF observations.
    #[arg(long)]
    features: bool,
}

fn join_paths(p: &[PathBuf]) -> String {
    p.iter()
        .map(|p| p.display().to_string())
        .collect::<Vec<_>>()
        .join(",")
}

fn merged(cli: &Cli) -> Result<KeyValues, ConfigError> {
    let c = &cli.common;
    let mut kv = match &c.config {
        Some(path) => KeyValues::load(path)?,
        None => KeyValues::default(),
    };
    if let Some(v) = c.seed {
        kv.set("seed", v.to_string());
    }
    if let Some(v) = &c.out_dir {
        kv.set("out_dir", v.display().to_string());
    }
    if let Some(v) = &c.mode {
        kv.set("detection.mode", v.clone());
    }
    if let Some(v) = c.sources {
        kv.set("scene.sources", v.to_string());
        kv.set("detection.sources", v.to_string());
    }
    if let Some(v) = &c.snr_db {
        kv.set("scene.snr_db", v.clone());
    }
    if let Some(v) = c.t60_s {
        kv.set("scene.t60_s", v.to_string());
    }
    if let Some(v) = c.gamma {
        kv.set("solver.gamma", v.to_string());
    }
    if let Some(v) = c.sigma2 {
        kv.set("cgmm.variance", v.to_string());
    }
    if let Some(v) = c.trials {
        kv.set("trials", v.to_string());
    }
    if let Some(v) = &c.directions {
        kv.set("scene.directions", v.clone());
    }
    if let Some(v) = c.duration_s {
        kv.set("scene.duration_s", v.to_string());
    }
    if let Some(v) = c.drr_db {
        kv.set("scene.drr_db", v.to_string());
    }
    if let Sub::Localize(a) = &cli.command {
        if !a.wav.is_empty() {
            kv.set("input.wav", join_paths(&a.wav));
        }
        if !a.steering.is_empty() {
            kv.set("input.steering", join_paths(&a.steering));
        }
        if !a.pair.is_empty() {
            kv.set("input.pairs", a.pair.join(","));
        }
        if let Some(t) = &a.truth {
            kv.set("input.truth", t.clone());
        }
        if a.features {
            kv.set("dump_features", "true");
        }
    }
    for s in &c.set {
        let (k, v) = s
            .split_once('=')
            .ok_or_else(|| ConfigError::Usage(format!("--set expects KEY=VALUE, got {s:?}")))?;
        kv.set(k.trim(), v.trim());
    }
    Ok(kv)
}

fn run_simulate(cfg: &RunConfig, verbose: bool) -> dploc::Result<()> {
    let Input::Simulation { scene } = &cfg.input else {
        unreachable!("resolved for simulate")
    };
    let s = synth_scene(scene)?;
    s.export(&cfg.out_dir)?;
    if verbose {
        eprintln!(
            "wrote scene with sources at {:?} to {}",
            s.directions(),
            cfg.out_dir.display()
        );
    }
    Ok(())
}

fn run_localize(cfg: &RunConfig, verbose: bool) -> dploc::Result<()> {
    let (clip, pairs, truth) = match &cfg.input {
        Input::Files {
            wav,
            steering,
            pairs,
            truth,
        } => {
            let clip = load_wav_files::<f64, _>(wav)?;
            let mics = steering
                .iter()
                .zip(pairs)
                .enumerate()
                .map(|(i, (path, &(a, b)))| {
                    let table = SteeringTable::load(format!("pair{i}"), path)?;
                    MicPair::from_steering(a, b, &table)
                })
                .collect::<dploc::Result<Vec<_>>>()?;
            (clip, mics, truth.clone())
        }
        Input::Simulation { scene } => {
            let s = synth_scene(scene)?;
            let pair = MicPair::from_steering(0, 1, &s.steering)?;
            let truth = s.directions();
            (s.mixture, vec![pair], Some(truth))
        }
        Input::Batch { .. } => unreachable!("resolved for localize"),
    };
    let out = localize(&clip, &pairs, &cfg.pipeline, truth.as_deref())?;
    write_localize_outputs(&cfg.out_dir, &out, cfg, cfg.dump_features)?;
    if verbose {
        eprintln!(
            "{} observations, {} CCP / {} PDIPM iterations",
            out.observation_count(),
            out.report.ccp_iterations,
            out.report.pdipm_iterations
        );
    }
    let detected: Vec<String> = out
        .result
        .detected()
        .iter()
        .map(|d| d.to_string())
        .collect();
    println!("detected: [{}]", detected.join(", "));
    if let Some(score) = &out.result.score {
        let m = score.metrics;
        println!(
            "MD {:.1}%  FA {:.1}%  MAE {}",
            100.0 * m.md_rate,
            100.0 * m.fa_rate,
            m.mae_deg.map_or("-".into(), |v| format!("{v:.2} deg"))
        );
    }
    Ok(())
}

fn print_row(row: &SummaryRow) {
    println!(
        "{:<10} MD {:6.2}%  FA {:6.2}%  outliers {:6.2}%  MAE {}",
        row.mode.to_string(),
        100.0 * row.md_rate,
        100.0 * row.fa_rate,
        100.0 * row.outlier_rate,
        row.mae_deg.map_or("-".into(), |v| format!("{v:.2} deg"))
    );
}

fn run_evaluate(cfg: &RunConfig, verbose: bool) -> dploc::Result<()> {
    let Input::Batch { eval } = &cfg.input else {
        unreachable!("resolved for evaluate")
    };
    let start = std::time::Instant::now();
    let report = evaluate(eval, &cfg.pipeline)?;
    write_eval_outputs(&cfg.out_dir, &report, eval, cfg)?;
    if verbose {
        for t in &report.trials {
            eprintln!(
                "trial {:3} truth {:?} blind {:?} semi-blind {:?}{}",
                t.trial,
                t.truth_deg,
                t.blind.detected(),
                t.semi_blind.detected(),
                t.error
                    .as_ref()
                    .map_or(String::new(), |e| format!(" error: {e}"))
            );
        }
        eprintln!(
            "{} trials in {:.1} s",
            eval.trials,
            start.elapsed().as_secs_f64()
        );
    }
    print_row(&report.blind);
    print_row(&report.semi_blind);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let command = match cli.command {
        Sub::Simulate => Command::Simulate,
        Sub::Localize(_) => Command::Localize,
        Sub::Evaluate => Command::Evaluate,
    };
    let cfg = match merged(&cli).and_then(|kv| config::resolve(command, &kv)) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("dploc: {e}");
            return match e {
                ConfigError::Usage(_) => ExitCode::from(2),
                ConfigError::Invalid(_) => ExitCode::from(1),
            };
        }
    };
    let verbose = cli.common.verbose;
    let outcome = match command {
        Command::Simulate => run_simulate(&cfg, verbose),
        Command::Localize => run_localize(&cfg, verbose),
        Command::Evaluate => run_evaluate(&cfg, verbose),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("dploc: {e}");
            ExitCode::FAILURE
        }
    }
}
