use gimrl::neuralnet::{he_std, Checkpoint, HiddenBlock, Mode, RAdam, LEAKY_SLOPE};
use gimrl::{NetworkSpec, QNetwork, Task};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn random_batch(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.sample::<f64, _>(StandardNormal))
}

fn perturbed_loss(net: &QNetwork, tensor: usize, idx: usize, h: f64, x: &Array2<f64>, t: &[f64], a: &[usize]) -> f64 {
    let mut n = net.clone();
    n.parameters_mut()[tensor][idx] += h;
    n.loss_and_gradients(x, t, a).unwrap().0
}

fn gradient_check(spec: &NetworkSpec, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = QNetwork::initialize(spec, &mut rng).unwrap();
    // move batch-norm parameters off their identity values
    for p in net.parameters_mut() {
        for v in p.iter_mut() {
            *v += 0.1 * rng.sample::<f64, _>(StandardNormal);
        }
    }
    let rows = 6;
    let x = random_batch(rows, spec.input_dim, &mut rng);
    let t: Vec<f64> = (0..rows).map(|_| rng.random_range(-2.0..2.0)).collect();
    let a: Vec<usize> = (0..rows).map(|_| rng.random_range(0..spec.output_dim)).collect();
    let (_, grads) = net.loss_and_gradients(&x, &t, &a).unwrap();
    let shapes: Vec<usize> = net.parameters().iter().map(|p| p.len()).collect();
    assert_eq!(grads.iter().map(Vec::len).collect::<Vec<_>>(), shapes);

    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for (ti, g) in grads.iter().enumerate() {
        for (i, &analytic) in g.iter().enumerate() {
            let numeric = (perturbed_loss(&net, ti, i, h, &x, &t, &a) - perturbed_loss(&net, ti, i, -h, &x, &t, &a)) / (2.0 * h);
            // biases ahead of batch norm have zero gradient; the floor keeps
            // finite-difference roundoff on those from dominating
            let rel = (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-5);
            worst = worst.max(rel);
        }
    }
    assert!(worst < 1e-4, "worst relative error {worst}");
}

#[test]
fn gradients_match_finite_differences() {
    gradient_check(&NetworkSpec::for_task(Task::Hui, 5, &[7, 6]), 1);
    gradient_check(&NetworkSpec::for_task(Task::Ar, 3, &[5]), 2);
    let mut plain = NetworkSpec::for_task(Task::Fi, 4, &[5, 5]);
    plain.hidden[1].batchnorm = false;
    gradient_check(&plain, 3);
}

#[test]
fn masked_loss_touches_only_chosen_outputs() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let spec = NetworkSpec::for_task(Task::Fi, 4, &[8]);
    let mut net = QNetwork::initialize(&spec, &mut rng).unwrap();
    let x = random_batch(4, 4, &mut rng);
    let (_, grads) = net.loss_and_gradients(&x, &[1.0, 2.0, 3.0, 4.0], &[1, 1, 3, 3]).unwrap();
    let out_bias = grads.last().unwrap();
    assert_eq!(out_bias[0], 0.0);
    assert_eq!(out_bias[2], 0.0);
    assert_eq!(out_bias[4], 0.0);
    assert_ne!(out_bias[1], 0.0);
    assert_ne!(out_bias[3], 0.0);
}

fn radam_run(curvature: &[f64], start: &[f64], steps: usize) -> Vec<f64> {
    let f = |x: &[f64]| x.iter().zip(curvature).map(|(v, a)| a * v * v).sum::<f64>();
    let mut x = start.to_vec();
    let mut opt = RAdam::new(1e-3);
    let mut history = vec![f(&x)];
    for _ in 0..steps {
        let g: Vec<f64> = x.iter().zip(curvature).map(|(v, a)| 2.0 * a * v).collect();
        opt.update(vec![&mut x[..]], &[g]);
        history.push(f(&x));
    }
    history
}

#[test]
fn radam_minimises_a_quadratic() {
    for (curvature, start) in [(&[1.0][..], &[1.0][..]), (&[1.0, 10.0, 0.1], &[1.0, -1.0, 0.5])] {
        let history = radam_run(curvature, start, 5000);
        assert!(*history.last().unwrap() < 1e-6, "final {}", history.last().unwrap());
    }
}

#[test]
fn radam_early_steps_are_monotone() {
    let opt = RAdam::new(1e-3);
    let warmup = (1..).find(|&t| opt.rho(t) > 5.0).unwrap() as usize;
    let history = radam_run(&[1.0], &[1.0], warmup + 50);
    assert!(history.windows(2).all(|w| w[1] < w[0]));
}

#[test]
fn he_variance_within_ten_percent() {
    let want = he_std(512, LEAKY_SLOPE).powi(2);
    for seed in 0..5 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spec = NetworkSpec {
            input_dim: 512,
            hidden: vec![HiddenBlock::new(512)],
            input_batchnorm: false,
            output_dim: 3,
        };
        let net = QNetwork::initialize(&spec, &mut rng).unwrap();
        let w = &net.blocks[0].linear.weight;
        let mean = w.mean().unwrap();
        let var = w.mapv(|v| (v - mean).powi(2)).mean().unwrap();
        assert!((var / want - 1.0).abs() < 0.1, "seed {seed}: {var} vs {want}");
        assert!(net.blocks[0].linear.bias.iter().all(|&b| b == 0.0));
    }
}

#[test]
fn batchnorm_eval_converges_to_train_output() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let spec = NetworkSpec::for_task(Task::Ar, 3, &[16, 16]);
    let mut net = QNetwork::initialize(&spec, &mut rng).unwrap();
    let x = random_batch(512, spec.input_dim, &mut rng) * 3.0 + 1.0;
    let mut train = Array2::zeros((0, 0));
    for _ in 0..200 {
        train = net.forward(&x, Mode::Train).unwrap();
    }
    let eval = net.forward(&x, Mode::Eval).unwrap();
    let scale = train.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let diff = (&train - &eval).iter().fold(0.0f64, |m, v| m.max(v.abs()));
    assert!(diff / scale < 1e-2, "{diff} / {scale}");
}

/// Forward pass written out with loops.
fn reference_predict(net: &QNetwork, x: &[f64]) -> Vec<f64> {
    fn bn(z: &mut [f64], b: &gimrl::neuralnet::BatchNorm) {
        for (j, v) in z.iter_mut().enumerate() {
            *v = (*v - b.running_mean[j]) / (b.running_var[j] + b.eps).sqrt() * b.gamma[j] + b.beta[j];
        }
    }
    fn affine(l: &gimrl::neuralnet::Linear, x: &[f64]) -> Vec<f64> {
        (0..l.weight.nrows())
            .map(|o| l.bias[o] + (0..x.len()).map(|i| l.weight[[o, i]] * x[i]).sum::<f64>())
            .collect()
    }
    let mut h = x.to_vec();
    if let Some(b) = &net.input_bn {
        bn(&mut h, b);
    }
    for block in &net.blocks {
        let mut z = affine(&block.linear, &h);
        if let Some(b) = &block.bn {
            bn(&mut z, b);
        }
        h = z.into_iter().map(|v| if v > 0.0 { v } else { block.slope * v }).collect();
    }
    affine(&net.output, &h)
}

#[test]
fn predict_matches_reference_loops() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let spec = NetworkSpec::for_task(Task::Ar, 4, &[9, 7]);
    let mut net = QNetwork::initialize(&spec, &mut rng).unwrap();
    for _ in 0..3 {
        let x = random_batch(8, spec.input_dim, &mut rng);
        net.forward(&x, Mode::Train).unwrap();
    }
    for _ in 0..10 {
        let x: Vec<f64> = (0..spec.input_dim).map(|_| rng.random_range(0.0..1.0)).collect();
        let got = net.predict_one(&x).unwrap();
        let want = reference_predict(&net, &x);
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() <= 1e-12 * w.abs().max(1.0));
        }
    }
}

#[test]
fn training_rejects_single_row_batches() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let spec = NetworkSpec::for_task(Task::Fi, 3, &[4]);
    let mut net = QNetwork::initialize(&spec, &mut rng).unwrap();
    assert!(net.forward(&random_batch(1, 3, &mut rng), Mode::Train).is_err());
    assert!(net.predict(&random_batch(1, 4, &mut rng)).is_err());
}

#[test]
fn copy_into_is_a_deep_copy() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let spec = NetworkSpec::for_task(Task::Hui, 4, &[6]);
    let online = QNetwork::initialize(&spec, &mut rng).unwrap();
    let mut target = QNetwork::initialize(&spec, &mut rng).unwrap();
    online.copy_into(&mut target).unwrap();
    assert_eq!(online, target);

    let mut trained = online.clone();
    let mut opt = RAdam::default();
    let x = random_batch(4, 4, &mut rng);
    trained.backward_and_step(&mut opt, &x, &[1.0; 4], &[0, 1, 2, 3]).unwrap();
    assert_ne!(trained, target);
    assert_eq!(online, target);

    let other = QNetwork::initialize(&NetworkSpec::for_task(Task::Hui, 5, &[6]), &mut rng).unwrap();
    assert!(other.copy_into(&mut target).is_err());
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let spec = NetworkSpec::for_task(Task::Ar, 3, &[5, 4]);
    let mut net = QNetwork::initialize(&spec, &mut rng).unwrap();
    let mut opt = RAdam::new(1e-2);
    for _ in 0..7 {
        let x = random_batch(5, 6, &mut rng);
        net.backward_and_step(&mut opt, &x, &[0.5; 5], &[0, 1, 2, 3, 0]).unwrap();
    }
    let ck = Checkpoint::new(net.clone(), Some(opt.clone()));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ck.json");
    ck.save(&path).unwrap();
    let back = Checkpoint::load(&path).unwrap();
    assert_eq!(back, ck);
    let x = random_batch(3, 6, &mut rng);
    assert_eq!(back.network.predict(&x).unwrap(), net.predict(&x).unwrap());

    let bumped = ck.to_json().unwrap().replacen("\"version\":1", "\"version\":2", 1);
    assert!(Checkpoint::from_json(&bumped).is_err());
}
