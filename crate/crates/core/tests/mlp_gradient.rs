use permdiag::learners::{initial_params, MlpObjective};
use permdiag::rng::SeededStream;
use proptest::prelude::*;

const H: usize = 4;
const P: usize = 2;

fn fixture() -> (Vec<f64>, Vec<f64>) {
    let x = vec![-1.2, 0.3, -0.4, 1.1, 0.0, -0.7, 0.8, 0.2, 1.5, -1.3];
    let y = vec![0.5, -0.2, 1.3, 0.1, -0.9];
    (x, y)
}

/// Largest relative error between backprop and central differences.
fn max_relative_error(obj: &MlpObjective, params: &[f64]) -> f64 {
    let mut grad = vec![0.0; params.len()];
    obj.loss_and_grad(params, &mut grad);
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for k in 0..params.len() {
        let mut plus = params.to_vec();
        let mut minus = params.to_vec();
        plus[k] += h;
        minus[k] -= h;
        let fd = (obj.loss(&plus) - obj.loss(&minus)) / (2.0 * h);
        let err = (fd - grad[k]).abs() / fd.abs().max(grad[k].abs()).max(1e-8);
        worst = worst.max(err);
    }
    worst
}

#[test]
fn backprop_matches_finite_differences() {
    let (x, y) = fixture();
    for (seed, l2) in [(1, 0.0), (2, 0.0), (3, 1e-3)] {
        let obj = MlpObjective {
            hidden: H,
            p: P,
            x: &x,
            y: &y,
            l2,
        };
        let mut params = initial_params(H, P, 4.0, SeededStream::from_seed(seed));
        // make the output layer non-zero so every weight has a gradient
        let n = params.len();
        for (k, w) in params[n - H - 1..].iter_mut().enumerate() {
            *w = 0.3 * (k as f64) - 0.4;
        }
        let err = max_relative_error(&obj, &params);
        assert!(err < 1e-5, "seed {seed}: {err}");
    }
}

#[test]
fn loss_and_grad_agrees_with_loss() {
    let (x, y) = fixture();
    let obj = MlpObjective {
        hidden: H,
        p: P,
        x: &x,
        y: &y,
        l2: 0.01,
    };
    let params = initial_params(H, P, 1.0, SeededStream::from_seed(9));
    let mut g = vec![0.0; obj.n_params()];
    let (a, b) = (obj.loss(&params), obj.loss_and_grad(&params, &mut g));
    assert!((a - b).abs() <= 1e-14 * a);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]
    #[test]
    fn gradient_at_random_weights(params in proptest::collection::vec(-2.0f64..2.0, H * P + 2 * H + 1)) {
        let (x, y) = fixture();
        let obj = MlpObjective { hidden: H, p: P, x: &x, y: &y, l2: 0.0 };
        let mut grad = vec![0.0; params.len()];
        obj.loss_and_grad(&params, &mut grad);
        let h = 1e-6;
        for k in 0..params.len() {
            let mut plus = params.clone();
            let mut minus = params.clone();
            plus[k] += h;
            minus[k] -= h;
            let fd = (obj.loss(&plus) - obj.loss(&minus)) / (2.0 * h);
            // absolute floor for weights whose gradient nearly vanishes
            prop_assert!((fd - grad[k]).abs() <= 1e-5 * fd.abs().max(grad[k].abs()).max(1e-3));
        }
    }
}
