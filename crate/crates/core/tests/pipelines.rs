use std::sync::OnceLock;

use difflink_core::comms::{nearest_index, ChannelKind, ChannelModel, Constellation};
use difflink_core::pipelines::{
    accuracy, run_mi_sweep, run_receiver_ber_sweep, shape_constellation, train_ddpm_on_constellation,
    train_dnn_baseline, BaselineConfig, BaselineDnn, ConstellationDdpm, DdpmTrainConfig, MiArm, MiExperimentConfig,
    ReceiverExperimentConfig, ReceiverKind,
};
use difflink_core::rng::seeded;
use difflink_core::Error;
use rand::Rng;

fn small_ddpm_config(order: usize) -> DdpmTrainConfig {
    DdpmTrainConfig {
        order,
        hidden_width: 64,
        embed_dim: 64,
        train_samples: 8192,
        epochs: 40,
        batch_size: 128,
        ..DdpmTrainConfig::default()
    }
}

fn small_baseline_config(order: usize) -> BaselineConfig {
    BaselineConfig {
        order,
        hidden_width: 32,
        epochs: 4,
        samples_per_epoch: 20_000,
        ..BaselineConfig::default()
    }
}

fn qpsk_models() -> &'static (ConstellationDdpm, BaselineDnn) {
    static MODELS: OnceLock<(ConstellationDdpm, BaselineDnn)> = OnceLock::new();
    MODELS.get_or_init(|| {
        let (ddpm, _) = train_ddpm_on_constellation(&small_ddpm_config(4), 3).unwrap();
        let (dnn, _) = train_dnn_baseline(&small_baseline_config(4), 3).unwrap();
        (ddpm, dnn)
    })
}

fn tiny_ddpm_config() -> DdpmTrainConfig {
    DdpmTrainConfig {
        order: 4,
        hidden_width: 8,
        hidden_layers: 2,
        embed_dim: 8,
        train_samples: 512,
        epochs: 2,
        ..DdpmTrainConfig::default()
    }
}

#[test]
fn ddpm_training_is_reproducible() {
    let (a, ra) = train_ddpm_on_constellation(&tiny_ddpm_config(), 11).unwrap();
    let (b, rb) = train_ddpm_on_constellation(&tiny_ddpm_config(), 11).unwrap();
    let (c, _) = train_ddpm_on_constellation(&tiny_ddpm_config(), 12).unwrap();
    assert_eq!(ra, rb);
    assert_eq!(a.checksum(), b.checksum());
    assert_ne!(a.checksum(), c.checksum());
}

#[test]
fn trained_model_covers_the_constellation() {
    let (ddpm, _) = qpsk_models();
    let c = ddpm.constellation();
    let samples = ddpm.model.sample(4000, &mut seeded(1)).unwrap();
    let mut hits = [0usize; 4];
    let mut near = 0;
    for r in samples.rows() {
        let k = nearest_index(&c, [r[0], r[1]]);
        let p = c.point(k);
        if ((r[0] - p[0]).powi(2) + (r[1] - p[1]).powi(2)).sqrt() < 0.2 {
            near += 1;
        }
        hits[k] += 1;
    }
    assert!(near as f64 / 4000.0 >= 0.9, "coverage {near}/4000");
    assert!(hits.iter().all(|&h| h > 800), "mode counts {hits:?}");
}

#[test]
fn denoising_contracts_toward_the_constellation() {
    let (ddpm, _) = qpsk_models();
    let c = ddpm.constellation();
    let mut rng = seeded(2);
    let tx: Vec<[f64; 2]> = (0..5000).map(|_| c.point(rng.random_range(0..4))).collect();
    let ch = ChannelModel::new(ChannelKind::Awgn, 0.0, 0.0);
    let rx = ch.corrupt(&tx, &mut rng);
    let y = ndarray::Array2::from_shape_fn((rx.len(), 2), |(i, j)| rx[i][j]);
    let out = ddpm.model.denoise_observation(y.view(), 0.0, &mut rng).unwrap();
    let dist = |p: [f64; 2]| {
        let q = c.point(nearest_index(&c, p));
        ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt()
    };
    let closer = out
        .rows()
        .into_iter()
        .zip(&rx)
        .filter(|(o, r)| dist([o[0], o[1]]) < dist(**r))
        .count();
    assert!(closer as f64 / 5000.0 >= 0.95, "{closer} of 5000 moved closer");
}

#[test]
fn baseline_learns_noiseless_symbols() {
    let (_, dnn) = qpsk_models();
    let c = Constellation::qam(4).unwrap();
    let tx: Vec<usize> = (0..400).map(|i| i % 4).collect();
    let rx: Vec<[f64; 2]> = tx.iter().map(|&k| c.point(k)).collect();
    let decided = dnn.classify(&rx, 30.0).unwrap();
    assert!(accuracy(&tx, &decided).unwrap() > 0.99);
}

#[test]
fn ber_sweep_structure_and_provenance() {
    let (ddpm, dnn) = qpsk_models();
    let cfg = ReceiverExperimentConfig {
        order: 4,
        snr_grid_db: vec![-5.0, 0.0, 30.0],
        bits_per_cell: 4000,
        sampling_runs: 2,
        seed: 9,
        ..ReceiverExperimentConfig::default()
    };
    let rows = run_receiver_ber_sweep(ddpm, dnn, &cfg).unwrap();
    assert_eq!(rows.len(), 3 * 2 * 3);
    for r in &rows {
        assert_eq!(r.n_bits, 4000);
        assert_eq!(r.seed, 9);
        assert!((0.0..=1.0).contains(&r.ber));
        let expected = match r.receiver {
            ReceiverKind::Ddpm => ddpm.checksum(),
            ReceiverKind::Dnn => dnn.checksum(),
        };
        assert_eq!(r.model_checksum, expected);
        if r.snr_db == 30.0 {
            assert!(r.ber < 1e-3, "{r:?}");
        }
    }
    let again = run_receiver_ber_sweep(ddpm, dnn, &cfg).unwrap();
    assert_eq!(rows, again);
}

#[test]
fn mismatched_models_are_rejected() {
    let (ddpm, dnn) = qpsk_models();
    let cfg = ReceiverExperimentConfig {
        order: 16,
        ..ReceiverExperimentConfig::default()
    };
    assert!(matches!(run_receiver_ber_sweep(ddpm, dnn, &cfg), Err(Error::State(_))));
    let mi = MiExperimentConfig {
        order: 16,
        ..MiExperimentConfig::default()
    };
    assert!(matches!(run_mi_sweep(ddpm, dnn, &mi), Err(Error::State(_))));
    assert!(matches!(
        shape_constellation(ddpm, 16, 0.0, 100, &mut seeded(0)),
        Err(Error::State(_))
    ));
}

#[test]
fn shaping_outputs_are_distributions() {
    let (ddpm, _) = qpsk_models();
    assert!(matches!(
        shape_constellation(ddpm, 4, 0.0, 0, &mut seeded(0)),
        Err(Error::Domain(_))
    ));
    for snr in [-10.0, 0.0, 10.0] {
        let d = shape_constellation(ddpm, 4, snr, 2000, &mut seeded(1)).unwrap();
        assert_eq!(d.probs.len(), 4);
        assert!((d.probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(d.probs.iter().all(|&p| p >= 0.0));
    }
    let n = 4000;
    let d = shape_constellation(ddpm, 4, 60.0, n, &mut seeded(2)).unwrap();
    let tol = 3.0 * (0.25 * 0.75 / n as f64).sqrt();
    assert!(d.probs.iter().all(|p| (p - 0.25).abs() < tol), "{:?}", d.probs);
}

#[test]
fn mi_sweep_accounting() {
    let (ddpm, dnn) = qpsk_models();
    let cfg = MiExperimentConfig {
        order: 4,
        snr_grid_db: vec![-10.0, 10.0, 30.0],
        symbols_per_cell: 3000,
        shaping_samples: 400,
        seed: 4,
        ..MiExperimentConfig::default()
    };
    let sweep = run_mi_sweep(ddpm, dnn, &cfg).unwrap();
    assert_eq!(sweep.rows.len(), 3 * 2 * 2);
    assert_eq!(sweep.shaped.len(), 3);
    for r in &sweep.rows {
        assert_eq!(r.n_symbols, 3000);
        assert!(r.mi_bits >= 0.0 && r.mi_bits <= 2.0 + 1e-9);
        if r.arm == MiArm::DdpmShaped {
            assert_eq!(r.model_checksum, ddpm.checksum());
        }
    }
    let at30: Vec<f64> = sweep.rows.iter().filter(|r| r.snr_db == 30.0).map(|r| r.mi_bits).collect();
    assert!(at30.iter().all(|&mi| mi > 1.9), "{at30:?}");
    assert_eq!(sweep, run_mi_sweep(ddpm, dnn, &cfg).unwrap());
}
