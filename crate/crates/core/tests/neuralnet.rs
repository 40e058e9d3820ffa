use difflink_core::nn::{HiddenActivation, Mlp, MlpConfig, OutputActivation, TimeEmbedding};
use ndarray::{Array1, Array2, ArrayView2};
use proptest::prelude::*;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn config(dims: &[usize], embed_dim: usize) -> MlpConfig {
    MlpConfig {
        layer_dims: dims.to_vec(),
        hidden_activation: HiddenActivation::Softplus,
        output_activation: OutputActivation::Linear,
        embed_dim,
    }
}

fn random_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-1.0..1.0))
}

/// Straight-line re-implementation of the forward pass with explicit loops.
fn oracle_forward(net: &Mlp, x: &Array2<f64>, e: Option<&Array2<f64>>) -> Array2<f64> {
    let softplus = |v: f64| (1.0 + v.exp()).ln();
    let n_layers = net.weights().len();
    let mut a = x.clone();
    for l in 0..n_layers {
        let w = &net.weights()[l];
        let b = &net.biases()[l];
        let mut z = Array2::<f64>::zeros((a.nrows(), w.nrows()));
        for s in 0..a.nrows() {
            for o in 0..w.nrows() {
                let mut acc = b[o];
                for i in 0..w.ncols() {
                    acc += w[[o, i]] * a[[s, i]];
                }
                if let (Some(c), Some(e)) = (net.conditioning().get(l), e) {
                    for k in 0..c.ncols() {
                        acc += c[[o, k]] * e[[s, k]];
                    }
                }
                z[[s, o]] = if l + 1 < n_layers { softplus(acc) } else { acc };
            }
        }
        a = z;
    }
    a
}

fn scalar_loss(net: &Mlp, x: ArrayView2<f64>, e: ArrayView2<f64>, seed: &Array2<f64>) -> f64 {
    let out = net.predict(x, Some(e)).unwrap();
    (&out * seed).sum()
}

/// Max over all parameters and inputs of |bp - fd| / max(|bp|, |fd|, 1e-5),
/// with central differences of step 1e-5.
fn max_fd_relative_error(net: &Mlp, x: &Array2<f64>, e: &Array2<f64>, seed: &Array2<f64>) -> f64 {
    let h = 1e-5;
    let cache = net.forward(x.view(), Some(e.view())).unwrap();
    let back = net.backward(&cache, seed.view()).unwrap();
    let analytic = back.grads.slices().concat();
    let params = net.flat_params();
    let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(1e-5);

    let mut worst: f64 = 0.0;
    for i in 0..params.len() {
        let mut plus = params.clone();
        plus[i] += h;
        let mut minus = params.clone();
        minus[i] -= h;
        let lp = scalar_loss(&Mlp::from_flat_params(net.config().clone(), &plus).unwrap(), x.view(), e.view(), seed);
        let lm = scalar_loss(&Mlp::from_flat_params(net.config().clone(), &minus).unwrap(), x.view(), e.view(), seed);
        worst = worst.max(rel(analytic[i], (lp - lm) / (2.0 * h)));
    }
    for idx in 0..x.len() {
        let (r, c) = (idx / x.ncols(), idx % x.ncols());
        let mut xp = x.clone();
        xp[[r, c]] += h;
        let mut xm = x.clone();
        xm[[r, c]] -= h;
        let fd = (scalar_loss(net, xp.view(), e.view(), seed) - scalar_loss(net, xm.view(), e.view(), seed)) / (2.0 * h);
        worst = worst.max(rel(back.input_grad[[r, c]], fd));
    }
    worst
}

#[test]
fn forward_matches_loop_oracle_on_full_sized_net() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let net = Mlp::init(config(&[2, 128, 128, 128, 2], 128), 42).unwrap();
    let x = random_matrix(5, 2, &mut rng);
    let e = random_matrix(5, 128, &mut rng);
    let fast = net.predict(x.view(), Some(e.view())).unwrap();
    let slow = oracle_forward(&net, &x, Some(&e));
    for (a, b) in fast.iter().zip(slow.iter()) {
        assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0), "{a} vs {b}");
    }

    let plain = Mlp::init(config(&[2, 128, 128, 128, 2], 0), 43).unwrap();
    let fast = plain.predict(x.view(), None).unwrap();
    let slow = oracle_forward(&plain, &x, None);
    for (a, b) in fast.iter().zip(slow.iter()) {
        assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
    }
}

#[test]
fn backprop_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let net = Mlp::init(config(&[2, 8, 8, 2], 6), 7).unwrap();
    let x = random_matrix(4, 2, &mut rng);
    let e = random_matrix(4, 6, &mut rng);
    let seed = random_matrix(4, 2, &mut rng);
    let worst = max_fd_relative_error(&net, &x, &e, &seed);
    assert!(worst < 1e-4, "worst relative error {worst}");
}

#[test]
fn softmax_backprop_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut cfg = config(&[3, 8, 8, 4], 0);
    cfg.output_activation = OutputActivation::Softmax;
    let net = Mlp::init(cfg, 8).unwrap();
    let x = random_matrix(3, 3, &mut rng);
    let seed = random_matrix(3, 4, &mut rng);
    let cache = net.forward(x.view(), None).unwrap();
    let analytic = net.backward(&cache, seed.view()).unwrap().grads.slices().concat();
    let params = net.flat_params();
    let loss = |p: &[f64]| {
        let n = Mlp::from_flat_params(net.config().clone(), p).unwrap();
        (&n.predict(x.view(), None).unwrap() * &seed).sum()
    };
    for i in 0..params.len() {
        let mut plus = params.clone();
        plus[i] += 1e-5;
        let mut minus = params.clone();
        minus[i] -= 1e-5;
        let fd = (loss(&plus) - loss(&minus)) / 2e-5;
        let rel = (analytic[i] - fd).abs() / analytic[i].abs().max(fd.abs()).max(1e-5);
        assert!(rel < 1e-4, "param {i}: {} vs {fd}", analytic[i]);
    }
}

#[test]
fn init_is_deterministic_with_zero_biases() {
    let a = Mlp::init(config(&[2, 128, 128, 2], 16), 99).unwrap();
    let b = Mlp::init(config(&[2, 128, 128, 2], 16), 99).unwrap();
    let c = Mlp::init(config(&[2, 128, 128, 2], 16), 100).unwrap();
    assert_eq!(
        a.flat_params().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
        b.flat_params().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
    );
    assert_ne!(a.flat_params(), c.flat_params());
    assert!(a.biases().iter().all(|b| b.iter().all(|&v| v == 0.0)));
}

#[test]
fn init_std_follows_fan_in() {
    let net = Mlp::init(config(&[2, 128, 128, 2], 0), 5).unwrap();
    let w = &net.weights()[1];
    assert_eq!(w.dim(), (128, 128));
    let n = w.len() as f64;
    let mean = w.sum() / n;
    let std = (w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    let target = (2.0f64 / 128.0).sqrt();
    assert!((std - target).abs() < 0.2 * target, "std {std}, target {target}");
}

#[test]
fn forward_is_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let net = Mlp::init(config(&[2, 32, 32, 2], 8), 1).unwrap();
    let x = random_matrix(16, 2, &mut rng);
    let e = random_matrix(16, 8, &mut rng);
    let a = net.predict(x.view(), Some(e.view())).unwrap();
    let b = net.predict(x.view(), Some(e.view())).unwrap();
    assert_eq!(a, b);
}

#[test]
fn linear_output_layer_is_affine() {
    // the final layer in isolation: f(h) = W h + b, so f(u + v) - f(0) = (f(u) - f(0)) + (f(v) - f(0))
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut last = Mlp::init(config(&[16, 3], 0), 2).unwrap();
    last.param_slices_mut()[1].copy_from_slice(&[0.3, -0.7, 1.1]);
    let u = random_matrix(1, 16, &mut rng);
    let v = random_matrix(1, 16, &mut rng);
    let f = |h: &Array2<f64>| last.predict(h.view(), None).unwrap();
    let zero = Array2::zeros((1, 16));
    let lhs = f(&(&u + &v)) - f(&zero);
    let rhs = (f(&u) - f(&zero)) + (f(&v) - f(&zero));
    for (a, b) in lhs.iter().zip(rhs.iter()) {
        assert!((a - b).abs() < 1e-12);
    }
    let scaled = f(&(&u * 2.5)) - f(&zero);
    let expect = (f(&u) - f(&zero)) * 2.5;
    for (a, b) in scaled.iter().zip(expect.iter()) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn zeroed_projections_make_output_independent_of_time() {
    let mut net = Mlp::init(config(&[2, 32, 32, 2], 16), 6).unwrap();
    for c in net.conditioning_mut() {
        c.fill(0.0);
    }
    let emb = TimeEmbedding::new(16, 100).unwrap();
    let x = ndarray::array![[0.4, -1.2], [2.0, 0.1]];
    let e1 = Array1::from(emb.embed(3).unwrap()).insert_axis(ndarray::Axis(0));
    let e2 = Array1::from(emb.embed(97).unwrap()).insert_axis(ndarray::Axis(0));
    assert_eq!(
        net.predict(x.view(), Some(e1.view())).unwrap(),
        net.predict(x.view(), Some(e2.view())).unwrap()
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn backprop_matches_finite_differences_for_random_nets(
        hidden in 1usize..7,
        depth in 1usize..3,
        embed_half in 0usize..3,
        seed in 0u64..1000,
    ) {
        let mut dims = vec![2];
        dims.extend(std::iter::repeat_n(hidden, depth));
        dims.push(2);
        let embed_dim = 2 * embed_half;
        let net = Mlp::init(config(&dims, embed_dim), seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 1);
        let x = random_matrix(3, 2, &mut rng);
        let grad_seed = random_matrix(3, 2, &mut rng);
        if embed_dim == 0 {
            let cache = net.forward(x.view(), None).unwrap();
            let analytic = net.backward(&cache, grad_seed.view()).unwrap().grads.slices().concat();
            let params = net.flat_params();
            for i in 0..params.len() {
                let mut p = params.clone();
                p[i] += 1e-5;
                let lp = (&Mlp::from_flat_params(net.config().clone(), &p).unwrap().predict(x.view(), None).unwrap() * &grad_seed).sum();
                p[i] -= 2e-5;
                let lm = (&Mlp::from_flat_params(net.config().clone(), &p).unwrap().predict(x.view(), None).unwrap() * &grad_seed).sum();
                let fd = (lp - lm) / 2e-5;
                let rel = (analytic[i] - fd).abs() / analytic[i].abs().max(fd.abs()).max(1e-5);
                prop_assert!(rel < 1e-4);
            }
        } else {
            let e = random_matrix(3, embed_dim, &mut rng);
            prop_assert!(max_fd_relative_error(&net, &x, &e, &grad_seed) < 1e-4);
        }
    }
}
