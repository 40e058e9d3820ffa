use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use difflink_core::pipelines::{
    run_mi_sweep, run_receiver_ber_sweep, shape_constellation, shaping_stream, train_ddpm_on_constellation,
    train_dnn_baseline, BaselineDnn, BerRow, ConstellationDdpm, MiRow, ShapedDistribution,
};

use crate::checkpoint::{default_file_name, Checkpoint, ModelKind};
use crate::config::{Experiment, Overrides, RunConfig};
use crate::plot::{LinePlot, Scale, Series};
use crate::results::{write_atomic, Cell, Column, ResultTable};
use crate::CliError;

#[derive(Debug, Parser)]
#[command(name = "difflink", version, about = "Diffusion-model receivers and constellation shaping for link-level simulation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub flags: Flags,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum Command {
    /// Train the diffusion model on clean constellation symbols.
    TrainDdpm,
    /// Train the DNN demapper used as the benchmark receiver.
    TrainBaseline,
    /// BER of the DDPM receiver and the DNN demapper over an SNR grid.
    BerSweep,
    /// Mutual information of DDPM-shaped against uniform transmission.
    MiSweep,
    /// Transmit distributions obtained by DDPM shaping.
    Shape,
}

impl Command {
    pub fn experiment(self) -> Experiment {
        match self {
            Command::TrainDdpm => Experiment::TrainDdpm,
            Command::TrainBaseline => Experiment::TrainBaseline,
            Command::BerSweep => Experiment::BerSweep,
            Command::MiSweep => Experiment::MiSweep,
            Command::Shape => Experiment::Shape,
        }
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct Flags {
    /// TOML run configuration; every key is optional.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Directory receiving every output file.
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    /// Model checkpoint; repeat for the diffusion model and the baseline.
    #[arg(long, global = true)]
    pub checkpoint: Vec<PathBuf>,
    /// Also render SVG plots of the result tables.
    #[arg(long, global = true)]
    pub plot: bool,
    /// SNR grid as start:step:stop in dB, e.g. --snr-grid=-25:2.5:-5.
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub snr_grid: Option<String>,
    /// Override a config key, e.g. --set ber.sampling_runs=4.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

impl Flags {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            out_dir: self.out_dir.clone(),
            checkpoints: self.checkpoint.clone(),
            plot: self.plot,
            snr_grid: self.snr_grid.clone(),
            set: self.set.clone(),
        }
    }
}

/// Runs one subcommand; returns the files it wrote.
pub fn run(command: Command, flags: &Flags) -> Result<Vec<PathBuf>, CliError> {
    let experiment = command.experiment();
    let cfg = RunConfig::load(flags.config.as_deref(), experiment, &flags.overrides())?;
    let out = cfg.out_dir.clone();
    let mut written = Vec::new();
    let echo = format!("# difflink {} resolved configuration\n{}", experiment.command(), cfg.to_toml());
    let echo_path = out.join("config.toml");
    write_atomic(&echo_path, echo.as_bytes())?;
    written.push(echo_path);
    log::info!("{}: writing to {}", experiment.command(), out.display());
    match command {
        Command::TrainDdpm => train_ddpm(&cfg, &mut written)?,
        Command::TrainBaseline => train_baseline(&cfg, &mut written)?,
        Command::BerSweep => ber_sweep(&cfg, &mut written)?,
        Command::MiSweep => mi_sweep(&cfg, &mut written)?,
        Command::Shape => shape(&cfg, &mut written)?,
    }
    Ok(written)
}

fn base_table(cfg: &RunConfig, columns: Vec<Column>, experiment: Experiment) -> ResultTable {
    let mut t = ResultTable::new(columns);
    t.meta("command", experiment.command());
    t.meta("seed", cfg.seed.to_string());
    t
}

fn finish(cfg: &RunConfig, mut t: ResultTable, name: &str, written: &mut Vec<PathBuf>) -> Result<(), CliError> {
    t.meta("config", cfg.to_toml());
    let path = cfg.out_dir.join(name);
    t.write(&path)?;
    written.push(path);
    Ok(())
}

fn loss_table(cfg: &RunConfig, experiment: Experiment, trace: &[f64]) -> ResultTable {
    let mut t = base_table(cfg, vec![Column::new("epoch", ""), Column::new("loss", "")], experiment);
    for (i, &l) in trace.iter().enumerate() {
        t.push(vec![Cell::Int(i as u64 + 1), Cell::Real(l)]);
    }
    t
}

fn save_checkpoint(cfg: &RunConfig, ckpt: &Checkpoint, written: &mut Vec<PathBuf>) -> Result<String, CliError> {
    let name = default_file_name(ckpt.kind(), ckpt.order());
    let path = cfg.out_dir.join(&name);
    ckpt.save(&path)?;
    written.push(path);
    Ok(name)
}

fn train_ddpm(cfg: &RunConfig, written: &mut Vec<PathBuf>) -> Result<(), CliError> {
    let (model, report) = train_ddpm_on_constellation(&cfg.ddpm_config(), cfg.seed)?;
    let ckpt = Checkpoint::Ddpm(model);
    let name = save_checkpoint(cfg, &ckpt, written)?;
    let mut t = loss_table(cfg, Experiment::TrainDdpm, &report.epoch_losses);
    t.meta("checkpoint", name);
    t.meta("model_checksum", ckpt.checksum());
    t.meta("initial_loss", format!("{:.16e}", report.initial_loss));
    t.meta("final_loss", format!("{:.16e}", report.final_loss));
    t.meta("steps", report.steps.to_string());
    log::info!(
        "trained diffusion model: loss {:.4} -> {:.4} in {} steps",
        report.initial_loss,
        report.final_loss,
        report.steps
    );
    finish(cfg, t, "train_ddpm.csv", written)
}

fn train_baseline(cfg: &RunConfig, written: &mut Vec<PathBuf>) -> Result<(), CliError> {
    let (dnn, trace) = train_dnn_baseline(&cfg.baseline_config(), cfg.seed)?;
    let ckpt = Checkpoint::Dnn(dnn);
    let name = save_checkpoint(cfg, &ckpt, written)?;
    let mut t = loss_table(cfg, Experiment::TrainBaseline, &trace);
    t.meta("checkpoint", name);
    t.meta("model_checksum", ckpt.checksum());
    finish(cfg, t, "train_baseline.csv", written)
}

fn find_checkpoint(cfg: &RunConfig, kind: ModelKind) -> Result<Checkpoint, CliError> {
    let mut found = Vec::new();
    for path in &cfg.checkpoints {
        let ckpt = Checkpoint::load(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        if ckpt.kind() == kind && ckpt.order() == cfg.order {
            found.push((path, ckpt));
        }
    }
    let label = match kind {
        ModelKind::Ddpm => "diffusion model",
        ModelKind::Dnn => "baseline",
    };
    match found.len() {
        0 => Err(CliError::Config(format!(
            "missing required field `checkpoints`: no {label} checkpoint for {}-QAM among {} given",
            cfg.order,
            cfg.checkpoints.len()
        ))),
        1 => {
            let (path, ckpt) = found.pop().unwrap();
            log::info!("{label}: {} (sha256 {})", path.display(), ckpt.checksum());
            Ok(ckpt)
        }
        _ => Err(CliError::Config(format!("more than one {label} checkpoint for {}-QAM", cfg.order))),
    }
}

fn ddpm_checkpoint(cfg: &RunConfig) -> Result<ConstellationDdpm, CliError> {
    match find_checkpoint(cfg, ModelKind::Ddpm)? {
        Checkpoint::Ddpm(m) => Ok(m),
        Checkpoint::Dnn(_) => unreachable!(),
    }
}

fn dnn_checkpoint(cfg: &RunConfig) -> Result<BaselineDnn, CliError> {
    match find_checkpoint(cfg, ModelKind::Dnn)? {
        Checkpoint::Dnn(m) => Ok(m),
        Checkpoint::Ddpm(_) => unreachable!(),
    }
}

fn group_series<R>(rows: &[R], label: impl Fn(&R) -> String, point: impl Fn(&R) -> (f64, f64)) -> Vec<Series> {
    let mut series: Vec<Series> = Vec::new();
    for r in rows {
        let l = label(r);
        match series.iter_mut().find(|s| s.label == l) {
            Some(s) => s.points.push(point(r)),
            None => series.push(Series {
                label: l,
                points: vec![point(r)],
            }),
        }
    }
    series
}

fn write_plot(cfg: &RunConfig, plot: LinePlot, name: &str, written: &mut Vec<PathBuf>) -> Result<(), CliError> {
    let path = cfg.out_dir.join(name);
    plot.write(&path)?;
    written.push(path);
    Ok(())
}

pub fn ber_columns() -> Vec<Column> {
    vec![
        Column::new("snr_db", "dB"),
        Column::new("channel", ""),
        Column::new("receiver", ""),
        Column::new("ber", ""),
        Column::new("n_bits", "bits"),
        Column::new("n_errors", "bits"),
        Column::new("seed", ""),
        Column::new("model_checksum", ""),
    ]
}

fn ber_sweep(cfg: &RunConfig, written: &mut Vec<PathBuf>) -> Result<(), CliError> {
    let ddpm = ddpm_checkpoint(cfg)?;
    let dnn = dnn_checkpoint(cfg)?;
    let rows = run_receiver_ber_sweep(&ddpm, &dnn, &cfg.receiver_config())?;
    let mut t = base_table(cfg, ber_columns(), Experiment::BerSweep);
    t.meta("ddpm_checksum", ddpm.checksum());
    t.meta("dnn_checksum", dnn.checksum());
    for r in &rows {
        t.push(vec![
            Cell::Real(r.snr_db),
            Cell::Text(r.channel.name().into()),
            Cell::Text(r.receiver.name().into()),
            Cell::Real(r.ber),
            Cell::Int(r.n_bits),
            Cell::Int(r.n_errors),
            Cell::Int(r.seed),
            Cell::Text(r.model_checksum.clone()),
        ]);
    }
    finish(cfg, t, "ber.csv", written)?;
    if cfg.plot {
        let plot = LinePlot {
            title: format!("BER, {}-QAM", cfg.order),
            x_label: "SNR (dB)".into(),
            y_label: "BER".into(),
            y_scale: Scale::Log,
            series: group_series(
                &rows,
                |r: &BerRow| format!("{} / {}", r.receiver.name(), r.channel),
                |r| (r.snr_db, r.ber),
            ),
        };
        write_plot(cfg, plot, "ber.svg", written)?;
    }
    Ok(())
}

fn shaping_table(cfg: &RunConfig, experiment: Experiment, shaped: &[ShapedDistribution]) -> ResultTable {
    let c = difflink_core::comms::Constellation::qam(cfg.order).expect("order validated");
    let mut t = base_table(
        cfg,
        vec![
            Column::new("snr_db", "dB"),
            Column::new("symbol", ""),
            Column::new("in_phase", ""),
            Column::new("quadrature", ""),
            Column::new("prob", ""),
        ],
        experiment,
    );
    for d in shaped {
        for (k, &p) in d.probs.iter().enumerate() {
            let pt = c.point(k);
            t.push(vec![
                Cell::Real(d.snr_db),
                Cell::Int(k as u64),
                Cell::Real(pt[0]),
                Cell::Real(pt[1]),
                Cell::Real(p),
            ]);
        }
    }
    let entropies: Vec<String> = shaped
        .iter()
        .map(|d| format!("{}:{:.6}", d.snr_db, d.entropy_bits()))
        .collect();
    t.meta("entropy_bits", entropies.join(" "));
    t
}

fn mi_sweep(cfg: &RunConfig, written: &mut Vec<PathBuf>) -> Result<(), CliError> {
    let ddpm = ddpm_checkpoint(cfg)?;
    let dnn = dnn_checkpoint(cfg)?;
    let sweep = run_mi_sweep(&ddpm, &dnn, &cfg.mi_config())?;
    let mut t = base_table(
        cfg,
        vec![
            Column::new("snr_db", "dB"),
            Column::new("channel", ""),
            Column::new("arm", ""),
            Column::new("mi_bits", "bits"),
            Column::new("source_entropy_bits", "bits"),
            Column::new("n_symbols", "symbols"),
            Column::new("seed", ""),
            Column::new("model_checksum", ""),
        ],
        Experiment::MiSweep,
    );
    t.meta("ddpm_checksum", ddpm.checksum());
    t.meta("dnn_checksum", dnn.checksum());
    for r in &sweep.rows {
        t.push(vec![
            Cell::Real(r.snr_db),
            Cell::Text(r.channel.name().into()),
            Cell::Text(r.arm.name().into()),
            Cell::Real(r.mi_bits),
            Cell::Real(r.source_entropy_bits),
            Cell::Int(r.n_symbols),
            Cell::Int(r.seed),
            Cell::Text(r.model_checksum.clone()),
        ]);
    }
    finish(cfg, t, "mi.csv", written)?;
    let mut s = shaping_table(cfg, Experiment::MiSweep, &sweep.shaped);
    s.meta("ddpm_checksum", ddpm.checksum());
    finish(cfg, s, "mi_shaping.csv", written)?;
    if cfg.plot {
        let plot = LinePlot {
            title: format!("Mutual information, {}-QAM", cfg.order),
            x_label: "SNR (dB)".into(),
            y_label: "MI (bits)".into(),
            y_scale: Scale::Linear,
            series: group_series(
                &sweep.rows,
                |r: &MiRow| format!("{} / {}", r.arm.name(), r.channel),
                |r| (r.snr_db, r.mi_bits),
            ),
        };
        write_plot(cfg, plot, "mi.svg", written)?;
    }
    Ok(())
}

fn shape(cfg: &RunConfig, written: &mut Vec<PathBuf>) -> Result<(), CliError> {
    let ddpm = ddpm_checkpoint(cfg)?;
    let shaped = cfg
        .shape
        .snr_grid
        .iter()
        .map(|&snr| shape_constellation(&ddpm, cfg.order, snr, cfg.shape.samples, &mut shaping_stream(cfg.seed, snr)))
        .collect::<Result<Vec<_>, _>>()?;
    let mut t = shaping_table(cfg, Experiment::Shape, &shaped);
    t.meta("ddpm_checksum", ddpm.checksum());
    finish(cfg, t, "shape.csv", written)
}
