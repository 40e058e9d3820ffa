//! Run configuration: a sectioned TOML file, overridden by command-line flags.
//!
//! Every key has a default, so an empty file is a complete configuration.
//! Unknown keys are rejected.

use std::fs;
use std::path::{Path, PathBuf};

use difflink_core::comms::ChannelKind;
use difflink_core::diffusion::{DenoiserConfig, ScheduleParams, TrainConfig};
use difflink_core::pipelines::{BaselineConfig, DdpmTrainConfig, MiExperimentConfig, ReceiverExperimentConfig};
use serde::{Deserialize, Deserializer, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    TrainDdpm,
    TrainBaseline,
    BerSweep,
    MiSweep,
    Shape,
}

impl Experiment {
    pub fn command(self) -> &'static str {
        match self {
            Experiment::TrainDdpm => "train-ddpm",
            Experiment::TrainBaseline => "train-baseline",
            Experiment::BerSweep => "ber-sweep",
            Experiment::MiSweep => "mi-sweep",
            Experiment::Shape => "shape",
        }
    }

    /// Config section whose `snr_grid` the `--snr-grid` flag replaces.
    fn grid_section(self) -> Option<&'static str> {
        match self {
            Experiment::BerSweep => Some("ber"),
            Experiment::MiSweep => Some("mi"),
            Experiment::Shape => Some("shape"),
            _ => None,
        }
    }
}

/// Expands `start:step:stop` into an inclusive arithmetic progression.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>, String> {
    let parts: Vec<&str> = spec.split(':').collect();
    let [a, step, b] = parts.as_slice() else {
        return Err(format!("SNR grid {spec:?} is not of the form start:step:stop"));
    };
    let num = |s: &str| s.trim().parse::<f64>().map_err(|_| format!("{s:?} in SNR grid {spec:?} is not a number"));
    let (a, step, b) = (num(a)?, num(step)?, num(b)?);
    if !(step > 0.0 && step.is_finite() && a.is_finite() && b.is_finite()) || b < a {
        return Err(format!("SNR grid {spec:?} needs a positive step and start <= stop"));
    }
    let span = (b - a) / step;
    let n = span.round();
    if (span - n).abs() > 1e-9 * n.max(1.0) {
        return Err(format!("SNR grid {spec:?}: stop is not reached by whole steps"));
    }
    Ok((0..=n as usize)
        .map(|i| {
            let v = a + step * i as f64;
            (v * 1e9).round() / 1e9
        })
        .collect())
}

fn grid<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Grid {
        List(Vec<f64>),
        Range(String),
    }
    match Grid::deserialize(d)? {
        Grid::List(v) => Ok(v),
        Grid::Range(s) => parse_grid(&s).map_err(serde::de::Error::custom),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleSection {
    pub steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
}

impl Default for ScheduleSection {
    fn default() -> Self {
        let p = ScheduleParams::default();
        ScheduleSection {
            steps: p.steps,
            beta_start: p.beta_start,
            beta_end: p.beta_end,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DdpmSection {
    pub hidden_width: usize,
    pub hidden_layers: usize,
    pub embed_dim: usize,
    pub train_samples: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

impl Default for DdpmSection {
    fn default() -> Self {
        let d = DenoiserConfig::default();
        let t = TrainConfig::default();
        DdpmSection {
            hidden_width: d.hidden_width,
            hidden_layers: d.hidden_layers,
            embed_dim: d.embed_dim,
            train_samples: DdpmTrainConfig::default().train_samples,
            epochs: t.epochs,
            batch_size: t.batch_size,
            learning_rate: t.adam.learning_rate,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BaselineSection {
    pub snr_min_db: f64,
    pub snr_max_db: f64,
    pub kappa: f64,
    pub hidden_width: usize,
    pub hidden_layers: usize,
    pub epochs: usize,
    pub samples_per_epoch: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

impl Default for BaselineSection {
    fn default() -> Self {
        let b = BaselineConfig::default();
        BaselineSection {
            snr_min_db: b.snr_min_db,
            snr_max_db: b.snr_max_db,
            kappa: b.kappa,
            hidden_width: b.hidden_width,
            hidden_layers: b.hidden_layers,
            epochs: b.epochs,
            samples_per_epoch: b.samples_per_epoch,
            batch_size: b.batch_size,
            learning_rate: b.learning_rate,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BerSection {
    #[serde(deserialize_with = "grid")]
    pub snr_grid: Vec<f64>,
    pub kappa: f64,
    pub bits_per_cell: usize,
    pub sampling_runs: usize,
    pub channels: Vec<ChannelKind>,
}

impl Default for BerSection {
    fn default() -> Self {
        let r = ReceiverExperimentConfig::default();
        BerSection {
            snr_grid: r.snr_grid_db,
            kappa: r.kappa,
            bits_per_cell: r.bits_per_cell,
            sampling_runs: r.sampling_runs,
            channels: r.channels,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MiSection {
    #[serde(deserialize_with = "grid")]
    pub snr_grid: Vec<f64>,
    pub kappa: f64,
    pub symbols_per_cell: usize,
    pub shaping_samples: usize,
    pub channels: Vec<ChannelKind>,
}

impl Default for MiSection {
    fn default() -> Self {
        let m = MiExperimentConfig::default();
        MiSection {
            snr_grid: m.snr_grid_db,
            kappa: m.kappa,
            symbols_per_cell: m.symbols_per_cell,
            shaping_samples: m.shaping_samples,
            channels: m.channels,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ShapeSection {
    #[serde(deserialize_with = "grid")]
    pub snr_grid: Vec<f64>,
    pub samples: usize,
}

impl Default for ShapeSection {
    fn default() -> Self {
        ShapeSection {
            snr_grid: vec![-5.0, 20.0],
            samples: MiExperimentConfig::default().shaping_samples,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    /// QAM order shared by every experiment.
    pub order: usize,
    pub checkpoints: Vec<PathBuf>,
    pub plot: bool,
    pub schedule: ScheduleSection,
    pub ddpm: DdpmSection,
    pub baseline: BaselineSection,
    pub ber: BerSection,
    pub mi: MiSection,
    pub shape: ShapeSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            out_dir: PathBuf::from("out"),
            order: 16,
            checkpoints: Vec::new(),
            plot: false,
            schedule: ScheduleSection::default(),
            ddpm: DdpmSection::default(),
            baseline: BaselineSection::default(),
            ber: BerSection::default(),
            mi: MiSection::default(),
            shape: ShapeSection::default(),
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub checkpoints: Vec<PathBuf>,
    pub plot: bool,
    pub snr_grid: Option<String>,
    /// `section.key=value` pairs; values use TOML syntax, bare words are strings.
    pub set: Vec<String>,
}

fn toml_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn set_path(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<(), CliError> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().filter(|s| !s.is_empty()).ok_or_else(|| CliError::Config(format!("empty key in {key:?}")))?;
    let mut cur = table;
    for p in parts {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| CliError::Config(format!("{p:?} in {key:?} is not a section")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

impl RunConfig {
    /// Reads `path` (if any), applies `overrides` and checks the result.
    pub fn load(path: Option<&Path>, experiment: Experiment, overrides: &Overrides) -> Result<Self, CliError> {
        let text = match path {
            Some(p) => fs::read_to_string(p).map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?,
            None => String::new(),
        };
        Self::from_toml_str(&text, experiment, overrides)
    }

    pub fn from_toml_str(text: &str, experiment: Experiment, overrides: &Overrides) -> Result<Self, CliError> {
        let mut table: toml::Table = text.parse().map_err(|e| CliError::Config(format!("{e}")))?;
        for kv in &overrides.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("--set expects key=value, got {kv:?}")))?;
            set_path(&mut table, k.trim(), toml_value(v.trim()))?;
        }
        if let Some(seed) = overrides.seed {
            let seed = i64::try_from(seed).map_err(|_| CliError::Config(format!("seed {seed} exceeds the TOML integer range")))?;
            table.insert("seed".into(), toml::Value::Integer(seed));
        }
        if let Some(dir) = &overrides.out_dir {
            table.insert("out_dir".into(), toml::Value::String(dir.display().to_string()));
        }
        if overrides.plot {
            table.insert("plot".into(), toml::Value::Boolean(true));
        }
        if !overrides.checkpoints.is_empty() {
            let list = overrides
                .checkpoints
                .iter()
                .map(|p| toml::Value::String(p.display().to_string()))
                .collect();
            table.insert("checkpoints".into(), toml::Value::Array(list));
        }
        if let Some(spec) = &overrides.snr_grid {
            let section = experiment.grid_section().ok_or_else(|| {
                CliError::Config(format!("--snr-grid does not apply to {}", experiment.command()))
            })?;
            let values = parse_grid(spec).map_err(CliError::Config)?;
            set_path(
                &mut table,
                &format!("{section}.snr_grid"),
                toml::Value::Array(values.into_iter().map(toml::Value::Float).collect()),
            )?;
        }
        let cfg: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let wrap = |r: difflink_core::Result<()>| r.map_err(|e| CliError::Config(e.to_string()));
        wrap(difflink_core::comms::Constellation::qam(self.order).map(|_| ()))?;
        wrap(difflink_core::diffusion::VarianceSchedule::from_params(self.schedule_params()).map(|_| ()))?;
        wrap(self.receiver_config().validate())?;
        wrap(self.mi_config().validate())?;
        if self.shape.snr_grid.is_empty() || self.shape.samples == 0 {
            return Err(CliError::Config("shape needs a non-empty snr_grid and samples > 0".into()));
        }
        let b = &self.baseline;
        if !(b.snr_max_db > b.snr_min_db) {
            return Err(CliError::Config("baseline.snr_max_db must exceed baseline.snr_min_db".into()));
        }
        if self.ddpm.batch_size == 0 || self.baseline.batch_size == 0 {
            return Err(CliError::Config("batch_size must be positive".into()));
        }
        Ok(())
    }

    pub fn schedule_params(&self) -> ScheduleParams {
        ScheduleParams {
            steps: self.schedule.steps,
            beta_start: self.schedule.beta_start,
            beta_end: self.schedule.beta_end,
        }
    }

    pub fn ddpm_config(&self) -> DdpmTrainConfig {
        let d = &self.ddpm;
        DdpmTrainConfig {
            order: self.order,
            steps: self.schedule.steps,
            beta_start: self.schedule.beta_start,
            beta_end: self.schedule.beta_end,
            hidden_width: d.hidden_width,
            hidden_layers: d.hidden_layers,
            embed_dim: d.embed_dim,
            train_samples: d.train_samples,
            epochs: d.epochs,
            batch_size: d.batch_size,
            learning_rate: d.learning_rate,
        }
    }

    pub fn baseline_config(&self) -> BaselineConfig {
        let b = &self.baseline;
        BaselineConfig {
            order: self.order,
            snr_min_db: b.snr_min_db,
            snr_max_db: b.snr_max_db,
            kappa: b.kappa,
            hidden_width: b.hidden_width,
            hidden_layers: b.hidden_layers,
            epochs: b.epochs,
            samples_per_epoch: b.samples_per_epoch,
            batch_size: b.batch_size,
            learning_rate: b.learning_rate,
        }
    }

    pub fn receiver_config(&self) -> ReceiverExperimentConfig {
        ReceiverExperimentConfig {
            order: self.order,
            snr_grid_db: self.ber.snr_grid.clone(),
            kappa: self.ber.kappa,
            bits_per_cell: self.ber.bits_per_cell,
            sampling_runs: self.ber.sampling_runs,
            channels: self.ber.channels.clone(),
            seed: self.seed,
        }
    }

    pub fn mi_config(&self) -> MiExperimentConfig {
        MiExperimentConfig {
            order: self.order,
            snr_grid_db: self.mi.snr_grid.clone(),
            kappa: self.mi.kappa,
            symbols_per_cell: self.mi.symbols_per_cell,
            shaping_samples: self.mi.shaping_samples,
            channels: self.mi.channels.clone(),
            seed: self.seed,
        }
    }

    /// The resolved configuration as TOML, loadable with `--config`.
    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn load(text: &str) -> Result<RunConfig, CliError> {
        RunConfig::from_toml_str(text, Experiment::BerSweep, &Overrides::default())
    }

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(load("").unwrap(), RunConfig::default());
    }

    #[test]
    fn grid_expansion() {
        let g = parse_grid("-25:2.5:-5").unwrap();
        assert_eq!(g, vec![-25.0, -22.5, -20.0, -17.5, -15.0, -12.5, -10.0, -7.5, -5.0]);
        assert_eq!(parse_grid("0:0.1:0.3").unwrap(), vec![0.0, 0.1, 0.2, 0.3]);
        assert_eq!(parse_grid("3:1:3").unwrap(), vec![3.0]);
        for bad in ["1:2", "0:0:5", "5:1:0", "0:2:5", "a:1:2"] {
            assert!(parse_grid(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn unknown_keys_are_named() {
        let err = load("[ber]\nsnr_gird = [0.0]\n").unwrap_err().to_string();
        assert!(err.contains("snr_gird"), "{err}");
        let err = load("sede = 3\n").unwrap_err().to_string();
        assert!(err.contains("sede"), "{err}");
    }

    #[test]
    fn type_mismatch_names_the_expected_type() {
        let err = load("[ber]\nsampling_runs = \"ten\"\n").unwrap_err().to_string();
        assert!(err.contains("integer") || err.contains("usize"), "{err}");
    }

    #[test]
    fn flags_override_file() {
        let o = Overrides {
            seed: Some(42),
            snr_grid: Some("-10:5:0".into()),
            set: vec!["ber.sampling_runs=3".into(), "mi.channels=[\"hwi\"]".into()],
            checkpoints: vec!["a.ckpt".into()],
            ..Overrides::default()
        };
        let cfg = RunConfig::from_toml_str("seed = 7\n[ber]\nsampling_runs = 9\n", Experiment::BerSweep, &o).unwrap();
        assert_eq!(cfg.seed, 42);
        assert_eq!(cfg.ber.snr_grid, vec![-10.0, -5.0, 0.0]);
        assert_eq!(cfg.ber.sampling_runs, 3);
        assert_eq!(cfg.mi.channels, vec![ChannelKind::HardwareImpairedAwgn]);
        assert_eq!(cfg.checkpoints, vec![PathBuf::from("a.ckpt")]);
    }

    #[test]
    fn grid_strings_in_file() {
        let cfg = load("[mi]\nsnr_grid = \"-20:10:20\"\n").unwrap();
        assert_eq!(cfg.mi.snr_grid, vec![-20.0, -10.0, 0.0, 10.0, 20.0]);
    }

    #[test]
    fn echo_round_trips() {
        let o = Overrides {
            seed: Some(5),
            snr_grid: Some("-7.5:2.5:0".into()),
            ..Overrides::default()
        };
        let cfg = RunConfig::from_toml_str("", Experiment::BerSweep, &o).unwrap();
        let again = load(&cfg.to_toml()).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn invalid_values_are_config_errors() {
        assert!(matches!(load("order = 8\n"), Err(CliError::Config(_))));
        assert!(matches!(load("[ber]\nsnr_grid = []\n"), Err(CliError::Config(_))));
        assert!(matches!(load("[ber]\nsampling_runs = 0\n"), Err(CliError::Config(_))));
        assert!(matches!(
            RunConfig::from_toml_str("", Experiment::TrainDdpm, &Overrides { snr_grid: Some("0:1:2".into()), ..Overrides::default() }),
            Err(CliError::Config(_))
        ));
    }
}
