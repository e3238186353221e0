//! Flat `key = value` pipeline configuration.
//!
//! Values are resolved in three layers: built-in defaults, then a config
//! file, then command-line overrides. Every resolved key remembers which
//! layer supplied it so the provenance sidecars can echo the full set.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use hepacut_core::cnn::NetworkSpec;
use hepacut_core::diffusion::DiffusionParams;
use hepacut_core::energy::{EnergyParams, SignMode};
use hepacut_core::features::{Denominator, LbpParams};
use hepacut_core::pipeline::{PreprocessParams, Window};
use hepacut_core::Dims;

use crate::error::{CliError, CliResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Source {
    Default,
    File,
    Cli,
}

impl Source {
    pub fn as_str(self) -> &'static str {
        match self {
            Source::Default => "default",
            Source::File => "file",
            Source::Cli => "cli",
        }
    }
}

/// Which network definition to build.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NetworkKind {
    Tiny,
    Scaled,
    Full,
}

impl NetworkKind {
    pub fn spec(self) -> NetworkSpec {
        match self {
            NetworkKind::Tiny => NetworkSpec::tiny(),
            NetworkKind::Scaled => NetworkSpec::scaled(),
            NetworkKind::Full => NetworkSpec::table1(),
        }
    }
}

impl FromStr for NetworkKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "tiny" => Ok(NetworkKind::Tiny),
            "scaled" => Ok(NetworkKind::Scaled),
            "full" => Ok(NetworkKind::Full),
            _ => Err(format!("unknown network `{s}` (tiny, scaled, full)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WeightInit {
    He,
    Zeros,
}

impl FromStr for WeightInit {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "he" => Ok(WeightInit::He),
            "zeros" => Ok(WeightInit::Zeros),
            _ => Err(format!("unknown weight init `{s}` (he, zeros)")),
        }
    }
}

/// Where the likelihood map comes from.
#[derive(Clone, Debug, PartialEq)]
pub enum ProbabilitySource {
    File(PathBuf),
    Weights(PathBuf),
}

fn defaults() -> Vec<(&'static str, String)> {
    let e = EnergyParams::default();
    let d = DiffusionParams::default();
    let join = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
    vec![
        ("volume", String::new()),
        ("probability", String::new()),
        ("weights", String::new()),
        ("result", String::new()),
        ("truth", String::new()),
        ("phantom_spec", String::new()),
        ("out_dir", ".".into()),
        ("seed", "0".into()),
        ("network", "scaled".into()),
        ("weight_init", "he".into()),
        ("slices", "none".into()),
        ("resample", "none".into()),
        ("window", "on".into()),
        ("window_level", "40".into()),
        ("window_width", "400".into()),
        ("diffusion", "on".into()),
        ("diffusion_iterations", d.iterations.to_string()),
        ("diffusion_time_step", d.time_step.to_string()),
        ("diffusion_conductance", d.conductance.to_string()),
        ("lambda", e.lambda.to_string()),
        ("beta", e.beta.to_string()),
        ("gamma", "auto".into()),
        ("lbp_tau", e.lbp.tau.to_string()),
        ("lbp_p", e.lbp.p.to_string()),
        ("lbp_r", e.lbp.r.to_string()),
        ("appearance_window", join(&e.window)),
        ("likelihood_threshold", e.likelihood_threshold.to_string()),
        ("sign_mode", e.sign_mode.as_str().into()),
        ("histogram_bins", e.histogram_bins.to_string()),
        ("denominator", e.denominator.as_str().into()),
        ("export_fields", "off".into()),
    ]
}

/// All recognised keys.
pub fn keys() -> Vec<&'static str> {
    defaults().into_iter().map(|(k, _)| k).collect()
}

/// Raw key/value layers before typing.
#[derive(Clone, Debug)]
pub struct RawConfig {
    entries: BTreeMap<String, (String, Source)>,
}

impl Default for RawConfig {
    fn default() -> Self {
        RawConfig {
            entries: defaults()
                .into_iter()
                .map(|(k, v)| (k.to_string(), (v, Source::Default)))
                .collect(),
        }
    }
}

impl RawConfig {
    pub fn set(&mut self, key: &str, value: &str, source: Source) -> CliResult<()> {
        let key = key.trim();
        match self.entries.get_mut(key) {
            Some(slot) => {
                *slot = (value.trim().to_string(), source);
                Ok(())
            }
            None => Err(CliError::config(format!("unknown config key `{key}`"))),
        }
    }

    /// Apply a config file: one `key = value` per line, `#` starts a comment.
    pub fn apply_text(&mut self, text: &str, origin: &Path) -> CliResult<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                CliError::config(format!("{}:{}: expected `key = value`, got `{line}`", origin.display(), n + 1))
            })?;
            self.set(k, v, Source::File)
                .map_err(|e| e.context(format!("{}:{}", origin.display(), n + 1)))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> CliResult<()> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read config {}: {e}", path.display())))?;
        self.apply_text(&text, path)
    }

    pub fn get(&self, key: &str) -> &str {
        &self.entries[key].0
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &str, Source)> {
        self.entries.iter().map(|(k, (v, s))| (k.as_str(), v.as_str(), *s))
    }

    fn parse<T: FromStr>(&self, key: &str) -> CliResult<T>
    where
        T::Err: fmt::Display,
    {
        let v = self.get(key);
        v.parse()
            .map_err(|e| CliError::config(format!("{key}: cannot parse `{v}`: {e}")))
    }

    fn path(&self, key: &str) -> Option<PathBuf> {
        let v = self.get(key);
        (!v.is_empty()).then(|| PathBuf::from(v))
    }

    fn paths(&self, key: &str) -> Vec<PathBuf> {
        self.get(key)
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(PathBuf::from)
            .collect()
    }

    fn switch(&self, key: &str) -> CliResult<bool> {
        match self.get(key) {
            "on" | "true" | "yes" | "1" => Ok(true),
            "off" | "false" | "no" | "0" => Ok(false),
            v => Err(CliError::config(format!("{key}: expected on/off, got `{v}`"))),
        }
    }

    fn optional<T: FromStr>(&self, key: &str, none: &str) -> CliResult<Option<T>>
    where
        T::Err: fmt::Display,
    {
        if self.get(key) == none {
            Ok(None)
        } else {
            self.parse(key).map(Some)
        }
    }

    fn triple(&self, key: &str) -> CliResult<[usize; 3]> {
        let v = self.get(key);
        let parts: Vec<usize> = v
            .split(|c: char| c == ',' || c == 'x' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .map(str::parse)
            .collect::<Result<_, _>>()
            .map_err(|e| CliError::config(format!("{key}: cannot parse `{v}`: {e}")))?;
        parts
            .try_into()
            .map_err(|_| CliError::config(format!("{key}: expected three values, got `{v}`")))
    }
}

/// Typed pipeline configuration.
#[derive(Clone, Debug)]
pub struct PipelineConfig {
    pub volume: Option<PathBuf>,
    pub probability: Option<PathBuf>,
    pub weights: Option<PathBuf>,
    /// Masks to evaluate, paired in order with `truth`.
    pub result: Vec<PathBuf>,
    pub truth: Vec<PathBuf>,
    pub phantom_spec: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub network: NetworkKind,
    pub weight_init: WeightInit,
    /// Pad or crop the z extent to this many slices before resampling.
    pub slices: Option<usize>,
    pub preprocess: PreprocessParams,
    pub energy: EnergyParams,
    /// Also write the thresholding map and region score next to the mask.
    pub export_fields: bool,
    pub raw: RawConfig,
}

impl PipelineConfig {
    pub fn from_raw(raw: RawConfig) -> CliResult<Self> {
        let gamma = match raw.get("gamma") {
            "auto" => None,
            _ => Some(raw.parse("gamma")?),
        };
        let energy = EnergyParams {
            lambda: raw.parse("lambda")?,
            beta: raw.parse("beta")?,
            gamma,
            lbp: LbpParams {
                tau: raw.parse("lbp_tau")?,
                p: raw.parse("lbp_p")?,
                r: raw.parse("lbp_r")?,
            },
            window: raw.triple("appearance_window")?,
            likelihood_threshold: raw.parse("likelihood_threshold")?,
            sign_mode: SignMode::parse(raw.get("sign_mode"))?,
            histogram_bins: raw.parse("histogram_bins")?,
            denominator: Denominator::parse(raw.get("denominator"))?,
        };
        energy.validate()?;

        let window = raw.switch("window")?.then_some(()).map(|_| -> CliResult<Window> {
            Ok(Window {
                level: raw.parse("window_level")?,
                width: raw.parse("window_width")?,
            })
        });
        let diffusion = raw.switch("diffusion")?.then_some(()).map(|_| -> CliResult<DiffusionParams> {
            let d = DiffusionParams {
                iterations: raw.parse("diffusion_iterations")?,
                time_step: raw.parse("diffusion_time_step")?,
                conductance: raw.parse("diffusion_conductance")?,
            };
            d.validate()?;
            Ok(d)
        });
        let resample: Option<Dims> = match raw.get("resample") {
            "none" => None,
            _ => Some(raw.triple("resample")?),
        };
        if resample.is_some_and(|d| d.contains(&0)) {
            return Err(CliError::config("resample: dimensions must be positive"));
        }
        let preprocess = PreprocessParams {
            resample,
            window: window.transpose()?,
            diffusion: diffusion.transpose()?,
        };
        if let Some(w) = &preprocess.window {
            if w.width.is_nan() || w.width <= 0.0 {
                return Err(CliError::config(format!("window_width must be positive, got {}", w.width)));
            }
        }
        let slices = raw.optional("slices", "none")?;
        if slices == Some(0) {
            return Err(CliError::config("slices must be positive"));
        }

        let cfg = PipelineConfig {
            volume: raw.path("volume"),
            probability: raw.path("probability"),
            weights: raw.path("weights"),
            result: raw.paths("result"),
            truth: raw.paths("truth"),
            phantom_spec: raw.path("phantom_spec"),
            out_dir: PathBuf::from(raw.get("out_dir")),
            seed: raw.parse("seed")?,
            network: raw.parse("network")?,
            weight_init: raw.parse("weight_init")?,
            slices,
            preprocess,
            energy,
            export_fields: raw.switch("export_fields")?,
            raw,
        };
        if cfg.probability.is_some() && cfg.weights.is_some() {
            return Err(CliError::config(
                "configure either `probability` or `weights` as the likelihood source, not both",
            ));
        }
        Ok(cfg)
    }

    /// Defaults, then `file`, then `overrides` in order.
    pub fn resolve(file: Option<&Path>, overrides: &[(String, String)]) -> CliResult<Self> {
        let mut raw = RawConfig::default();
        if let Some(f) = file {
            raw.apply_file(f)?;
        }
        for (k, v) in overrides {
            raw.set(k, v, Source::Cli)?;
        }
        Self::from_raw(raw)
    }

    pub fn probability_source(&self) -> CliResult<ProbabilitySource> {
        match (&self.probability, &self.weights) {
            (Some(p), None) => Ok(ProbabilitySource::File(p.clone())),
            (None, Some(w)) => Ok(ProbabilitySource::Weights(w.clone())),
            (None, None) => Err(CliError::config("no likelihood source: set `probability` or `weights`")),
            (Some(_), Some(_)) => unreachable!("rejected in from_raw"),
        }
    }

    pub fn require_volume(&self) -> CliResult<&Path> {
        self.volume
            .as_deref()
            .ok_or_else(|| CliError::config("no input volume: set `volume`"))
    }
}

/// Split `key=value`.
pub fn parse_assignment(s: &str) -> Result<(String, String), String> {
    s.split_once('=')
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .ok_or_else(|| format!("expected KEY=VALUE, got `{s}`"))
}
