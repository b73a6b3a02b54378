//! Finite-difference checks of every layer's backward pass.

#![allow(clippy::needless_range_loop)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wavescope::nn::{Conv1d, Conv2d, Dense, Layer, Sequential, Tensor};

const H: f64 = 1e-5;
const TOL: f64 = 1e-4;
const SEEDS: u64 = 24;

fn random_tensor(rng: &mut impl Rng, shape: Vec<usize>) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

/// Loss `sum(r * layer(x))` for a fixed random projection `r`.
fn projected(layer: &Layer, x: &Tensor, r: &[f64]) -> f64 {
    let y = layer.forward(x).unwrap();
    y.data().iter().zip(r).map(|(a, b)| a * b).sum()
}

fn rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff: f64 = analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).powi(2))
        .sum::<f64>()
        .sqrt();
    let scale = analytic
        .iter()
        .map(|a| a * a)
        .sum::<f64>()
        .sqrt()
        .max(numeric.iter().map(|n| n * n).sum::<f64>().sqrt())
        .max(1e-12);
    diff / scale
}

fn check_layer(layer: Layer, x: Tensor, rng: &mut impl Rng) {
    let out_shape = layer.output_shape(x.shape()).unwrap();
    let r = random_tensor(rng, out_shape);
    let grads = layer.backward(&x, &r, true).unwrap();

    let gx = grads.input.expect("input gradient requested");
    let mut numeric = vec![0.0; x.len()];
    for i in 0..x.len() {
        let mut plus = x.clone();
        plus.data_mut()[i] += H;
        let mut minus = x.clone();
        minus.data_mut()[i] -= H;
        numeric[i] =
            (projected(&layer, &plus, r.data()) - projected(&layer, &minus, r.data())) / (2.0 * H);
    }
    let e = rel_err(gx.data(), &numeric);
    assert!(e <= TOL, "{} input gradient rel err {e}", layer.name());

    for (p, analytic) in grads.params.iter().enumerate() {
        let mut numeric = vec![0.0; analytic.len()];
        for i in 0..analytic.len() {
            let mut plus = layer.clone();
            plus.params_mut()[p][i] += H;
            let mut minus = layer.clone();
            minus.params_mut()[p][i] -= H;
            numeric[i] =
                (projected(&plus, &x, r.data()) - projected(&minus, &x, r.data())) / (2.0 * H);
        }
        let e = rel_err(analytic, &numeric);
        assert!(e <= TOL, "{} param {p} gradient rel err {e}", layer.name());
    }
}

/// Input whose values are at least `gap` apart from each other and from
/// zero, so that ReLU and max-pool are differentiable within `H`.
fn separated_input(rng: &mut impl Rng, shape: Vec<usize>, gap: f64) -> Tensor {
    let n: usize = shape.iter().product();
    let mut values: Vec<f64> = (0..n)
        .map(|i| {
            let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            sign * (gap * (i + 1) as f64 + rng.random_range(0.0..gap * 0.5))
        })
        .collect();
    for i in (1..n).rev() {
        values.swap(i, rng.random_range(0..=i));
    }
    Tensor::new(shape, values).unwrap()
}

#[test]
fn conv1d_gradients() {
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let stride = 1 + (seed as usize % 3);
        let conv = Conv1d::init(&mut rng, 2, 3, 5, stride).unwrap();
        let x = random_tensor(&mut rng, vec![2, 23]);
        check_layer(Layer::Conv1d(conv), x, &mut rng);
    }
}

#[test]
fn conv2d_gradients() {
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let padding = seed as usize % 2;
        let conv = Conv2d::init(&mut rng, 2, 3, 3, padding).unwrap();
        let x = random_tensor(&mut rng, vec![2, 6, 7]);
        check_layer(Layer::Conv2d(conv), x, &mut rng);
    }
}

#[test]
fn dense_gradients() {
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(200 + seed);
        let dense = Dense::init(&mut rng, 12, 5).unwrap();
        let x = random_tensor(&mut rng, vec![12]);
        check_layer(Layer::Dense(dense), x, &mut rng);
    }
}

#[test]
fn relu_gradients() {
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(300 + seed);
        let x = separated_input(&mut rng, vec![3, 10], 1e-3);
        check_layer(Layer::Relu, x, &mut rng);
    }
}

#[test]
fn maxpool1d_gradients() {
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(400 + seed);
        let x = separated_input(&mut rng, vec![2, 17], 1e-3);
        check_layer(Layer::MaxPool1d { size: 4 }, x, &mut rng);
    }
}

#[test]
fn maxpool2d_gradients() {
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(500 + seed);
        let x = separated_input(&mut rng, vec![2, 6, 5], 1e-3);
        check_layer(Layer::MaxPool2d { size: 2 }, x, &mut rng);
    }
}

#[test]
fn flatten_gradients() {
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(600 + seed);
        let x = random_tensor(&mut rng, vec![2, 3, 4]);
        check_layer(Layer::Flatten, x, &mut rng);
    }
}

#[test]
fn whole_network_cross_entropy_gradients() {
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(700 + seed);
        let net = Sequential::new(
            vec![1, 40],
            vec![
                Layer::Conv1d(Conv1d::init(&mut rng, 1, 3, 6, 2).unwrap()),
                Layer::Relu,
                Layer::MaxPool1d { size: 2 },
                Layer::Flatten,
                Layer::Dense(Dense::init(&mut rng, 3 * 9, 4).unwrap()),
            ],
        )
        .unwrap();
        let x = random_tensor(&mut rng, vec![1, 40]);
        let label = rng.random_range(0..4);
        let (_, grads) = net.loss_and_grads(&x, label).unwrap();
        let loss = |n: &Sequential| {
            wavescope::nn::softmax_xent(n.forward(&x).unwrap().data(), label)
                .unwrap()
                .0
        };
        for (p, analytic) in grads.iter().enumerate() {
            let mut numeric = vec![0.0; analytic.len()];
            for i in 0..analytic.len() {
                let mut plus = net.clone();
                plus.params_mut()[p][i] += H;
                let mut minus = net.clone();
                minus.params_mut()[p][i] -= H;
                numeric[i] = (loss(&plus) - loss(&minus)) / (2.0 * H);
            }
            let e = rel_err(analytic, &numeric);
            assert!(e <= TOL, "seed {seed} param {p} rel err {e}");
        }
    }
}
