//! Flat `key = value` configuration.
//!
//! Resolution order: built-in defaults, then the config file, then command
//! line flags. CTF dimensions follow `scene.t60_s` unless set explicitly.
//!
//! Keys:
//!
//! | key | meaning |
//! |---|---|
//! | `seed` | base seed (trial `i` uses `seed + i`) |
//! | `trials` | evaluate: number of trials |
//! | `out_dir` | output directory |
//! | `dump_features` | localize: also write `features.csv` |
//! | `input.wav` | localize: comma-separated WAV files (one multichannel or several mono) |
//! | `input.steering` | localize: comma-separated steering tables, one per pair |
//! | `input.pairs` | localize: pairs as `a-b`, comma-separated (default `0-1`) |
//! | `input.truth` | localize: optional true azimuths for scoring |
//! | `scene.directions` | source azimuths in degrees, comma-separated |
//! | `scene.sources` | source count when directions are drawn at random |
//! | `scene.snr_db` | SNR in dB, or `inf` for no noise |
//! | `scene.t60_s`, `scene.drr_db`, `scene.tail_onset_ms` | room |
//! | `scene.duration_s`, `scene.noise_direction_deg` | scene |
//! | `scene.spacing_m`, `scene.speed_of_sound` | array geometry |
//! | `stft.frame_len`, `stft.hop`, `stft.window` | STFT (`hann` or `rectangular`) |
//! | `ctf.ctf_len`, `ctf.psd_frames`, `ctf.system_rows`, `ctf.anchor_stride` | CTF regions |
//! | `ctf.consistency_threshold`, `ctf.high_power_ratio`, `ctf.noise_quantile` | feature selection |
//! | `ctf.subtraction_floor`, `ctf.admission_fraction`, `ctf.max_condition`, `ctf.max_freq_hz` | |
//! | `cgmm.variance` | component variance |
//! | `solver.gamma`, `solver.barrier_factor`, `solver.ccp_tol`, `solver.gap_tol`, `solver.feas_tol` | |
//! | `solver.backtrack`, `solver.sufficient_decrease`, `solver.max_pdipm_iter`, `solver.max_ccp_iter` | |
//! | `detection.mode` | `blind` or `semi-blind` |
//! | `detection.weight_threshold`, `detection.sources`, `detection.success_threshold_deg` | |

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use dploc::features::CtfConfig;
use dploc::pipeline::{EvalConfig, PipelineConfig, SAMPLE_RATE};
use dploc::scene::{default_grid, SceneSpec};
use dploc::signal::Window;
use serde::Serialize;

#[derive(Debug)]
pub enum ConfigError {
    /// Conflicting or missing inputs; reported as a usage error.
    Usage(String),
    Invalid(String),
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Usage(m) | Self::Invalid(m) => f.write_str(m),
        }
    }
}

type Result<T> = std::result::Result<T, ConfigError>;

/// Raw key-value pairs; later inserts win.
#[derive(Debug, Default, Clone)]
pub struct KeyValues(BTreeMap<String, String>);

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self> {
        let mut kv = Self::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(ConfigError::Invalid(format!(
                    "config line {}: expected key = value",
                    n + 1
                )));
            };
            kv.set(k.trim(), v.trim());
        }
        Ok(kv)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Invalid(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.0.insert(key.to_string(), value.into());
    }

    pub fn contains(&self, key: &str) -> bool {
        self.0.contains_key(key)
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.0
            .get(key)
            .map(|v| {
                v.parse()
                    .map_err(|_| ConfigError::Invalid(format!("{key}: cannot parse {v:?}")))
            })
            .transpose()
    }

    fn apply<T: FromStr>(&self, key: &str, slot: &mut T) -> Result<()> {
        if let Some(v) = self.get(key)? {
            *slot = v;
        }
        Ok(())
    }

    fn list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>> {
        self.0
            .get(key)
            .map(|v| {
                v.split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| {
                        s.parse()
                            .map_err(|_| ConfigError::Invalid(format!("{key}: cannot parse {s:?}")))
                    })
                    .collect()
            })
            .transpose()
    }

    fn check_known(&self) -> Result<()> {
        for k in self.0.keys() {
            if !KNOWN_KEYS.contains(&k.as_str()) {
                return Err(ConfigError::Invalid(format!("unknown config key {k:?}")));
            }
        }
        Ok(())
    }
}

const KNOWN_KEYS: &[&str] = &[
    "seed",
    "trials",
    "out_dir",
    "dump_features",
    "input.wav",
    "input.steering",
    "input.pairs",
    "input.truth",
    "scene.directions",
    "scene.sources",
    "scene.snr_db",
    "scene.t60_s",
    "scene.drr_db",
    "scene.tail_onset_ms",
    "scene.duration_s",
    "scene.noise_direction_deg",
    "scene.spacing_m",
    "scene.speed_of_sound",
    "stft.frame_len",
    "stft.hop",
    "stft.window",
    "ctf.ctf_len",
    "ctf.psd_frames",
    "ctf.system_rows",
    "ctf.anchor_stride",
    "ctf.consistency_threshold",
    "ctf.high_power_ratio",
    "ctf.noise_quantile",
    "ctf.subtraction_floor",
    "ctf.admission_fraction",
    "ctf.max_condition",
    "ctf.max_freq_hz",
    "cgmm.variance",
    "solver.gamma",
    "solver.barrier_factor",
    "solver.ccp_tol",
    "solver.gap_tol",
    "solver.feas_tol",
    "solver.backtrack",
    "solver.sufficient_decrease",
    "solver.max_pdipm_iter",
    "solver.max_ccp_iter",
    "detection.mode",
    "detection.weight_threshold",
    "detection.sources",
    "detection.success_threshold_deg",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Simulate,
    Localize,
    Evaluate,
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Input {
    Files {
        wav: Vec<PathBuf>,
        steering: Vec<PathBuf>,
        pairs: Vec<(usize, usize)>,
        truth: Option<Vec<f64>>,
    },
    Simulation {
        scene: SceneSpec,
    },
    Batch {
        eval: EvalConfig,
    },
}

/// Fully resolved run configuration; echoed into every `result.json`.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub command: Command,
    pub seed: u64,
    pub input: Input,
    pub pipeline: PipelineConfig,
    pub dump_features: bool,
    #[serde(skip)]
    pub out_dir: PathBuf,
}

fn parse_window(s: &str) -> Result<Window> {
    match s {
        "hann" => Ok(Window::Hann),
        "rectangular" | "rect" => Ok(Window::Rectangular),
        _ => Err(ConfigError::Invalid(format!(
            "stft.window: unknown window {s:?}"
        ))),
    }
}

fn parse_pair(s: &str) -> Result<(usize, usize)> {
    let bad = || ConfigError::Invalid(format!("input.pairs: expected a-b, got {s:?}"));
    let (a, b) = s.split_once('-').ok_or_else(bad)?;
    Ok((
        a.trim().parse().map_err(|_| bad())?,
        b.trim().parse().map_err(|_| bad())?,
    ))
}

fn scene_spec(kv: &KeyValues, seed: u64, t60_s: f64) -> Result<SceneSpec> {
    let directions = match kv.list::<f64>("scene.directions")? {
        Some(d) => d,
        None => {
            let count = kv.get("scene.sources")?.unwrap_or(2);
            let mut eval = EvalConfig {
                sources: count,
                seed,
                ..EvalConfig::default()
            };
            eval.grid = default_grid();
            eval.scene_spec(0)
                .map_err(|e| ConfigError::Invalid(e.to_string()))?
                .sources
                .iter()
                .map(|s| s.direction_deg)
                .collect()
        }
    };
    let mut spec = SceneSpec::new(&directions, seed);
    spec.room.t60_s = t60_s;
    apply_scene(kv, &mut spec)?;
    for s in &mut spec.sources {
        s.offset_s = spec.duration_s;
    }
    spec.validate()
        .map_err(|e| ConfigError::Invalid(e.to_string()))?;
    Ok(spec)
}

fn apply_scene(kv: &KeyValues, spec: &mut SceneSpec) -> Result<()> {
    spec.snr_db = snr(kv)?.unwrap_or(spec.snr_db);
    kv.apply("scene.drr_db", &mut spec.room.drr_db)?;
    kv.apply("scene.tail_onset_ms", &mut spec.room.tail_onset_ms)?;
    kv.apply("scene.duration_s", &mut spec.duration_s)?;
    kv.apply("scene.noise_direction_deg", &mut spec.noise_direction_deg)?;
    kv.apply("scene.spacing_m", &mut spec.room.geometry.spacing_m)?;
    kv.apply(
        "scene.speed_of_sound",
        &mut spec.room.geometry.speed_of_sound,
    )?;
    Ok(())
}

fn snr(kv: &KeyValues) -> Result<Option<Option<f64>>> {
    match kv.0.get("scene.snr_db").map(String::as_str) {
        None => Ok(None),
        Some("inf") | Some("none") => Ok(Some(None)),
        Some(_) => Ok(Some(kv.get("scene.snr_db")?)),
    }
}

fn pipeline(kv: &KeyValues, t60_s: f64) -> Result<PipelineConfig> {
    let mut p = PipelineConfig::for_t60(t60_s);
    kv.apply("stft.frame_len", &mut p.stft.frame_len)?;
    kv.apply("stft.hop", &mut p.stft.hop)?;
    if let Some(w) = kv.0.get("stft.window") {
        p.stft.window = parse_window(w)?;
    }
    let ctf_len = kv.get::<usize>("ctf.ctf_len")?;
    if kv.contains("stft.hop") || ctf_len.is_some() {
        // Re-derive Q and O from the actual hop, then honor explicit values.
        let base = CtfConfig::for_t60(t60_s, p.stft.hop as f64 / SAMPLE_RATE as f64);
        p.ctf.ctf_len = ctf_len.unwrap_or(base.ctf_len);
        p.ctf.system_rows = (3.5 * p.ctf.ctf_len as f64).ceil() as usize;
    }
    let c = &mut p.ctf;
    kv.apply("ctf.psd_frames", &mut c.psd_frames)?;
    kv.apply("ctf.system_rows", &mut c.system_rows)?;
    if let Some(s) = kv.get("ctf.anchor_stride")? {
        c.anchor_stride = Some(s);
    }
    kv.apply("ctf.consistency_threshold", &mut c.consistency_threshold)?;
    kv.apply("ctf.high_power_ratio", &mut c.high_power_ratio)?;
    kv.apply("ctf.noise_quantile", &mut c.noise_quantile)?;
    kv.apply("ctf.subtraction_floor", &mut c.subtraction_floor)?;
    kv.apply("ctf.admission_fraction", &mut c.admission_fraction)?;
    kv.apply("ctf.max_condition", &mut c.max_condition)?;
    kv.apply("ctf.max_freq_hz", &mut c.max_freq_hz)?;
    kv.apply("cgmm.variance", &mut p.cgmm.variance)?;
    let s = &mut p.solver;
    kv.apply("solver.gamma", &mut s.gamma)?;
    kv.apply("solver.barrier_factor", &mut s.barrier_factor)?;
    kv.apply("solver.ccp_tol", &mut s.ccp_tol)?;
    kv.apply("solver.gap_tol", &mut s.gap_tol)?;
    kv.apply("solver.feas_tol", &mut s.feas_tol)?;
    kv.apply("solver.backtrack", &mut s.backtrack)?;
    kv.apply("solver.sufficient_decrease", &mut s.sufficient_decrease)?;
    kv.apply("solver.max_pdipm_iter", &mut s.max_pdipm_iter)?;
    kv.apply("solver.max_ccp_iter", &mut s.max_ccp_iter)?;
    let d = &mut p.detection;
    if let Some(m) = kv.0.get("detection.mode") {
        d.mode = m
            .parse()
            .map_err(|e: dploc::Error| ConfigError::Invalid(e.to_string()))?;
    }
    kv.apply("detection.weight_threshold", &mut d.weight_threshold)?;
    kv.apply(
        "detection.success_threshold_deg",
        &mut d.success_threshold_deg,
    )?;
    p.validate()
        .map_err(|e| ConfigError::Invalid(e.to_string()))?;
    Ok(p)
}

/// Builds the run configuration for `command` from merged key-values.
pub fn resolve(command: Command, kv: &KeyValues) -> Result<RunConfig> {
    kv.check_known()?;
    let seed = kv.get("seed")?.unwrap_or(0);
    let t60_s = kv.get("scene.t60_s")?.unwrap_or(0.3);
    let mut pipeline = pipeline(kv, t60_s)?;
    let out_dir = kv
        .get::<PathBuf>("out_dir")?
        .unwrap_or_else(|| PathBuf::from("."));
    let dump_features = kv.get("dump_features")?.unwrap_or(false);
    let has_files = kv.contains("input.wav") || kv.contains("input.steering");
    let has_scene = kv.contains("scene.directions");
    let input = match command {
        Command::Localize if has_files && has_scene => {
            return Err(ConfigError::Usage(
                "give either input files (--wav/--steering) or a simulation spec (--directions), not both".into(),
            ))
        }
        Command::Localize if has_files => {
            let wav: Vec<PathBuf> = kv.list("input.wav")?.unwrap_or_default();
            let steering: Vec<PathBuf> = kv.list("input.steering")?.unwrap_or_default();
            if wav.is_empty() || steering.is_empty() {
                return Err(ConfigError::Usage("file input needs both --wav and --steering".into()));
            }
            let pairs = match kv.0.get("input.pairs") {
                Some(v) => v.split(',').map(|s| parse_pair(s.trim())).collect::<Result<Vec<_>>>()?,
                None => vec![(0, 1)],
            };
            if pairs.len() != steering.len() {
                return Err(ConfigError::Usage(format!(
                    "{} pairs but {} steering tables",
                    pairs.len(),
                    steering.len()
                )));
            }
            Input::Files {
                wav,
                steering,
                pairs,
                truth: kv.list("input.truth")?,
            }
        }
        Command::Localize if !has_scene => {
            return Err(ConfigError::Usage(
                "localize needs input files (--wav/--steering) or a simulation spec (--directions)".into(),
            ))
        }
        Command::Localize | Command::Simulate => {
            if has_files {
                return Err(ConfigError::Usage("simulate does not read input files".into()));
            }
            Input::Simulation {
                scene: scene_spec(kv, seed, t60_s)?,
            }
        }
        Command::Evaluate => {
            if has_files || has_scene {
                return Err(ConfigError::Usage(
                    "evaluate draws its own scenes; drop --wav/--steering/--directions".into(),
                ));
            }
            let mut eval = EvalConfig {
                seed,
                ..EvalConfig::default()
            };
            eval.room.t60_s = t60_s;
            kv.apply("trials", &mut eval.trials)?;
            kv.apply("scene.sources", &mut eval.sources)?;
            let mut spec = SceneSpec::new(&[], seed);
            spec.room = eval.room;
            apply_scene(kv, &mut spec)?;
            eval.snr_db = spec.snr_db;
            eval.room = spec.room;
            eval.duration_s = spec.duration_s;
            eval.noise_direction_deg = spec.noise_direction_deg;
            eval.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
            Input::Batch { eval }
        }
    };
    match &input {
        Input::Simulation { scene } => pipeline.detection.sources = scene.sources.len().max(1),
        Input::Batch { eval } => pipeline.detection.sources = eval.sources,
        Input::Files { .. } => {}
    }
    kv.apply("detection.sources", &mut pipeline.detection.sources)?;
    pipeline
        .validate()
        .map_err(|e| ConfigError::Invalid(e.to_string()))?;
    Ok(RunConfig {
        command,
        seed,
        input,
        pipeline,
        dump_features,
        out_dir,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kv(text: &str) -> KeyValues {
        KeyValues::parse(text).unwrap()
    }

    #[test]
    fn parses_comments_and_blank_lines() {
        let k = kv("# header\n\nsolver.gamma = 0.1  # inline\nseed=4\n");
        assert_eq!(k.get::<f64>("solver.gamma").unwrap(), Some(0.1));
        assert_eq!(k.get::<u64>("seed").unwrap(), Some(4));
        assert!(KeyValues::parse("novalue").is_err());
    }

    #[test]
    fn defaults_follow_t60() {
        let r = resolve(Command::Evaluate, &kv("scene.t60_s = 0.6")).unwrap();
        assert_eq!(r.pipeline.ctf.ctf_len, 12);
        assert_eq!(r.pipeline.ctf.system_rows, 42);
        let r = resolve(Command::Evaluate, &kv("")).unwrap();
        assert_eq!(r.pipeline.ctf.ctf_len, 6);
        assert_eq!(r.pipeline.solver.gamma, 0.2);
        assert_eq!(r.pipeline.detection.weight_threshold, 0.05);
    }

    #[test]
    fn later_values_win() {
        let mut k = kv("solver.gamma = 0.1");
        k.set("solver.gamma", "0.3");
        let r = resolve(Command::Evaluate, &k).unwrap();
        assert_eq!(r.pipeline.solver.gamma, 0.3);
    }

    #[test]
    fn input_exclusivity() {
        let both = kv("input.wav = a.wav\ninput.steering = s.csv\nscene.directions = 0");
        assert!(matches!(
            resolve(Command::Localize, &both),
            Err(ConfigError::Usage(_))
        ));
        assert!(matches!(
            resolve(Command::Localize, &kv("")),
            Err(ConfigError::Usage(_))
        ));
        assert!(matches!(
            resolve(Command::Localize, &kv("input.wav = a.wav")),
            Err(ConfigError::Usage(_))
        ));
        let files = resolve(
            Command::Localize,
            &kv("input.wav = a.wav\ninput.steering = s.csv"),
        )
        .unwrap();
        assert!(matches!(files.input, Input::Files { .. }));
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(matches!(
            resolve(Command::Evaluate, &kv("solver.gama = 1")),
            Err(ConfigError::Invalid(_))
        ));
        assert!(resolve(Command::Evaluate, &kv("solver.gamma = x")).is_err());
        assert!(resolve(Command::Evaluate, &kv("detection.mode = sideways")).is_err());
        assert!(resolve(Command::Simulate, &kv("scene.directions = 0, 5")).is_err());
    }

    #[test]
    fn infinite_snr() {
        let r = resolve(
            Command::Simulate,
            &kv("scene.directions = -40, 40\nscene.snr_db = inf"),
        )
        .unwrap();
        let Input::Simulation { scene } = r.input else {
            panic!()
        };
        assert_eq!(scene.snr_db, None);
        assert_eq!(r.pipeline.detection.sources, 2);
    }
}
