//! Single-hidden-layer perceptron with logistic hidden units and a linear
//! output, trained full-batch.
//!
//! Inputs are standardised and the response is centred and scaled before
//! training. The optimiser is Adam with a monotone acceptance rule: a step
//! that raises the training loss is rejected and the step size halved, so
//! the loss over accepted iterates never increases.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{check_width, Predictor};
use crate::dataset::{Dataset, Features};
use crate::error::{Error, Result};
use crate::rng::SeededStream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlpConfig {
    pub hidden: usize,
    pub max_iter: usize,
    pub l2_decay: f64,
    pub seed: u64,
    /// Hidden-layer weights start uniform in `[-0.5, 0.5] * init_scale`.
    pub init_scale: f64,
    pub learning_rate: f64,
    /// Stop once the gradient norm falls below this.
    pub grad_tol: f64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self {
            hidden: 20,
            max_iter: 1500,
            l2_decay: 0.0,
            seed: 0,
            init_scale: 1.0,
            learning_rate: 0.02,
            grad_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub iterations: usize,
    pub accepted: usize,
    pub final_loss: f64,
    pub grad_norm: f64,
    /// False when `max_iter` ran out before the gradient tolerance was met.
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub hidden: usize,
    pub n_inputs: usize,
    /// Row-major `hidden x n_inputs`.
    pub w_in: Vec<f64>,
    pub b_in: Vec<f64>,
    pub w_out: Vec<f64>,
    pub b_out: f64,
    pub x_mean: Vec<f64>,
    pub x_scale: Vec<f64>,
    pub y_mean: f64,
    pub y_scale: f64,
    pub config: MlpConfig,
    pub report: TrainReport,
}

fn logistic(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Training objective in standardised space over a flat parameter vector
/// laid out as `[w_in (hidden*p), b_in (hidden), w_out (hidden), b_out]`.
///
/// `loss = mean((net(x) - y)^2) + l2 * |params|^2`.
pub struct MlpObjective<'a> {
    pub hidden: usize,
    pub p: usize,
    /// Row-major `n x p` standardised inputs.
    pub x: &'a [f64],
    pub y: &'a [f64],
    pub l2: f64,
}

impl MlpObjective<'_> {
    pub fn n_params(&self) -> usize {
        self.hidden * self.p + 2 * self.hidden + 1
    }

    pub fn loss(&self, params: &[f64]) -> f64 {
        let (h, p) = (self.hidden, self.p);
        let (w_in, rest) = params.split_at(h * p);
        let (b_in, rest) = rest.split_at(h);
        let (w_out, b_out) = rest.split_at(h);
        let n = self.y.len();
        let mut sse = 0.0;
        for (xi, &yi) in self.x.chunks_exact(p).zip(self.y) {
            let mut out = b_out[0];
            for k in 0..h {
                let z = b_in[k] + dot(&w_in[k * p..(k + 1) * p], xi);
                out += w_out[k] * logistic(z);
            }
            sse += (out - yi) * (out - yi);
        }
        sse / n as f64 + self.l2 * params.iter().map(|v| v * v).sum::<f64>()
    }

    /// Loss and its gradient by backpropagation.
    pub fn loss_and_grad(&self, params: &[f64], grad: &mut [f64]) -> f64 {
        let (h, p) = (self.hidden, self.p);
        let (w_in, rest) = params.split_at(h * p);
        let (b_in, rest) = rest.split_at(h);
        let (w_out, b_out) = rest.split_at(h);
        grad.iter_mut().for_each(|g| *g = 0.0);
        let (g_win, g_rest) = grad.split_at_mut(h * p);
        let (g_bin, g_rest) = g_rest.split_at_mut(h);
        let (g_wout, g_bout) = g_rest.split_at_mut(h);
        let n = self.y.len();
        let inv_n = 1.0 / n as f64;
        let mut act = vec![0.0; h];
        let mut sse = 0.0;
        for (xi, &yi) in self.x.chunks_exact(p).zip(self.y) {
            let mut out = b_out[0];
            for k in 0..h {
                let a = logistic(b_in[k] + dot(&w_in[k * p..(k + 1) * p], xi));
                act[k] = a;
                out += w_out[k] * a;
            }
            let r = out - yi;
            sse += r * r;
            let d_out = 2.0 * r * inv_n;
            g_bout[0] += d_out;
            for k in 0..h {
                let a = act[k];
                g_wout[k] += d_out * a;
                let d_hidden = d_out * w_out[k] * a * (1.0 - a);
                g_bin[k] += d_hidden;
                for (g, &x) in g_win[k * p..(k + 1) * p].iter_mut().zip(xi) {
                    *g += d_hidden * x;
                }
            }
        }
        let mut loss = sse * inv_n;
        if self.l2 > 0.0 {
            for (g, &w) in grad.iter_mut().zip(params) {
                *g += 2.0 * self.l2 * w;
                loss += self.l2 * w * w;
            }
        }
        loss
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Initial parameters: hidden layer uniform in `[-0.5, 0.5] * scale`,
/// output layer zero.
pub fn initial_params(hidden: usize, p: usize, scale: f64, stream: SeededStream) -> Vec<f64> {
    let mut rng = stream.rng();
    let mut params = vec![0.0; hidden * p + 2 * hidden + 1];
    for w in params[..hidden * p + hidden].iter_mut() {
        *w = (rng.random::<f64>() - 0.5) * scale;
    }
    params
}

pub fn fit_mlp(d: &Dataset, cfg: &MlpConfig) -> Result<MlpModel> {
    if cfg.hidden == 0 {
        return Err(Error::InvalidParameter("hidden layer must be non-empty".into()));
    }
    if !(cfg.l2_decay >= 0.0) || !(cfg.learning_rate > 0.0) || !cfg.init_scale.is_finite() {
        return Err(Error::InvalidParameter("mlp configuration".into()));
    }
    let (n, p) = (d.n_rows(), d.n_features());
    let x = d.features();
    let mut x_mean = Vec::with_capacity(p);
    let mut x_scale = Vec::with_capacity(p);
    for c in x.columns() {
        let m = c.iter().sum::<f64>() / n as f64;
        let v = c.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n as f64;
        x_mean.push(m);
        x_scale.push(if v > 0.0 { v.sqrt() } else { 1.0 });
    }
    let y_mean = d.response().iter().sum::<f64>() / n as f64;
    let y_var = d.response().iter().map(|v| (v - y_mean).powi(2)).sum::<f64>() / n as f64;
    let y_scale = if y_var > 0.0 { y_var.sqrt() } else { 1.0 };

    let mut xs = Vec::with_capacity(n * p);
    for i in 0..n {
        for j in 0..p {
            xs.push((x.get(i, j) - x_mean[j]) / x_scale[j]);
        }
    }
    let ys: Vec<f64> = d.response().iter().map(|v| (v - y_mean) / y_scale).collect();
    let obj = MlpObjective {
        hidden: cfg.hidden,
        p,
        x: &xs,
        y: &ys,
        l2: cfg.l2_decay,
    };

    let mut params = initial_params(cfg.hidden, p, cfg.init_scale, SeededStream::from_seed(cfg.seed));
    let (params, report) = train(&obj, &mut params, cfg);
    if !report.converged && cfg.max_iter > 0 {
        log::debug!(
            "mlp stopped at max_iter = {} with gradient norm {:.3e}",
            cfg.max_iter,
            report.grad_norm
        );
    }
    let h = cfg.hidden;
    Ok(MlpModel {
        hidden: h,
        n_inputs: p,
        w_in: params[..h * p].to_vec(),
        b_in: params[h * p..h * p + h].to_vec(),
        w_out: params[h * p + h..h * p + 2 * h].to_vec(),
        b_out: params[h * p + 2 * h],
        x_mean,
        x_scale,
        y_mean,
        y_scale,
        config: cfg.clone(),
        report,
    })
}

fn train(obj: &MlpObjective<'_>, params: &mut Vec<f64>, cfg: &MlpConfig) -> (Vec<f64>, TrainReport) {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;
    let np = obj.n_params();
    let mut grad = vec![0.0; np];
    let mut loss = obj.loss_and_grad(params, &mut grad);
    let mut m = vec![0.0; np];
    let mut v = vec![0.0; np];
    let mut cand = vec![0.0; np];
    let mut cand_grad = vec![0.0; np];
    let mut lr = cfg.learning_rate;
    let mut t = 0i32;
    let mut accepted = 0;
    let mut iterations = 0;
    let mut converged = norm(&grad) < cfg.grad_tol;
    while iterations < cfg.max_iter && !converged {
        iterations += 1;
        let step = t + 1;
        let c1 = 1.0 - BETA1.powi(step);
        let c2 = 1.0 - BETA2.powi(step);
        for k in 0..np {
            let mk = BETA1 * m[k] + (1.0 - BETA1) * grad[k];
            let vk = BETA2 * v[k] + (1.0 - BETA2) * grad[k] * grad[k];
            cand[k] = params[k] - lr * (mk / c1) / ((vk / c2).sqrt() + EPS);
        }
        let cand_loss = obj.loss_and_grad(&cand, &mut cand_grad);
        if cand_loss.is_finite() && cand_loss <= loss {
            for k in 0..np {
                m[k] = BETA1 * m[k] + (1.0 - BETA1) * grad[k];
                v[k] = BETA2 * v[k] + (1.0 - BETA2) * grad[k] * grad[k];
            }
            t = step;
            std::mem::swap(params, &mut cand);
            std::mem::swap(&mut grad, &mut cand_grad);
            loss = cand_loss;
            accepted += 1;
            lr = (lr * 1.05).min(cfg.learning_rate);
            converged = norm(&grad) < cfg.grad_tol;
        } else {
            // The moment estimates may no longer point downhill; restart them
            // so the next trial is a sign-of-gradient step.
            m.iter_mut().for_each(|x| *x = 0.0);
            v.iter_mut().for_each(|x| *x = 0.0);
            t = 0;
            lr *= 0.5;
            if lr < 1e-12 {
                break;
            }
        }
    }
    let report = TrainReport {
        iterations,
        accepted,
        final_loss: loss,
        grad_norm: norm(&grad),
        converged,
    };
    (params.clone(), report)
}

impl MlpModel {
    fn predict_standardized(&self, xs: &[f64]) -> f64 {
        let p = self.n_inputs;
        let mut out = self.b_out;
        for k in 0..self.hidden {
            let z = self.b_in[k] + dot(&self.w_in[k * p..(k + 1) * p], xs);
            out += self.w_out[k] * logistic(z);
        }
        out
    }
}

impl Predictor for MlpModel {
    fn n_features(&self) -> usize {
        self.n_inputs
    }

    fn predict(&self, x: &Features) -> Result<Vec<f64>> {
        check_width(self.n_inputs, x)?;
        let p = self.n_inputs;
        let mut buf = vec![0.0; p];
        Ok((0..x.n_rows())
            .map(|i| {
                for j in 0..p {
                    buf[j] = (x.get(i, j) - self.x_mean[j]) / self.x_scale[j];
                }
                self.y_mean + self.y_scale * self.predict_standardized(&buf)
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::default_names;

    fn line_data(n: usize, seed: u64) -> Dataset {
        let mut rng = SeededStream::from_seed(seed).rng();
        let x: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        Dataset::new(Features::from_columns(vec![x.clone()]).unwrap(), x, default_names(1)).unwrap()
    }

    #[test]
    fn learns_a_line() {
        let d = line_data(500, 1);
        let m = fit_mlp(&d, &MlpConfig::default()).unwrap();
        let pred = m.predict(d.features()).unwrap();
        let rmse = (crate::dataset::sse(d.response(), &pred) / 500.0).sqrt();
        assert!(rmse < 0.05, "rmse {rmse}");
    }

    #[test]
    fn zero_iterations_predicts_mean() {
        let mut rng = SeededStream::from_seed(2).rng();
        let x: Vec<f64> = (0..50).map(|_| rng.random::<f64>()).collect();
        let y: Vec<f64> = x.iter().map(|v| 3.0 * v + 1.0).collect();
        let ybar = y.iter().sum::<f64>() / 50.0;
        let d = Dataset::new(Features::from_columns(vec![x]).unwrap(), y, default_names(1)).unwrap();
        let cfg = MlpConfig {
            max_iter: 0,
            ..Default::default()
        };
        let m = fit_mlp(&d, &cfg).unwrap();
        for v in m.predict(d.features()).unwrap() {
            assert!((v - ybar).abs() < 1e-12);
        }
        assert!(!m.report.converged);
    }

    #[test]
    fn zero_weight_network_outputs_bias() {
        let d = line_data(10, 3);
        let mut m = fit_mlp(&d, &MlpConfig { max_iter: 5, ..Default::default() }).unwrap();
        m.w_in.iter_mut().for_each(|w| *w = 0.0);
        m.w_out.iter_mut().for_each(|w| *w = 0.0);
        m.b_out = 0.7;
        assert!((m.predict_standardized(&[0.3]) - 0.7).abs() < 1e-15);
    }

    #[test]
    fn training_reports_and_is_reproducible() {
        let d = line_data(100, 4);
        let cfg = MlpConfig {
            max_iter: 200,
            seed: 9,
            ..Default::default()
        };
        let a = fit_mlp(&d, &cfg).unwrap();
        let b = fit_mlp(&d, &cfg).unwrap();
        assert_eq!(a, b);
        assert!(a.report.iterations <= 200);
        assert!(a.report.grad_norm.is_finite());
        assert!(a.w_in.iter().chain(&a.w_out).all(|w| w.is_finite()));
    }

    #[test]
    fn accepted_losses_never_increase() {
        let d = line_data(80, 5);
        let mut losses = Vec::new();
        for iters in [0, 1, 5, 20, 60, 150] {
            let cfg = MlpConfig {
                max_iter: iters,
                seed: 1,
                ..Default::default()
            };
            losses.push(fit_mlp(&d, &cfg).unwrap().report.final_loss);
        }
        for w in losses.windows(2) {
            assert!(w[1] <= w[0], "{losses:?}");
        }
    }
}
