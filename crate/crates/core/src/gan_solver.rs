//! Adversarial recovery of HB coefficients `c` and the angle PMF `p`.
//!
//! The generator is the projection model itself: a line is `H_theta c` plus
//! noise with `theta ~ p`. A spectrally normalized four-layer critic scores
//! lines; `p = softmax(p_logits)` receives gradients through Gumbel-Softmax
//! weights over the angle grid. All gradients are hand-written reverse mode.
//!
//! One training iteration is one critic update; the generator is updated
//! after iteration `t` whenever `(t + 1) % n_disc == 0`.

use std::f64::consts::PI;
use std::path::Path;
use std::sync::Arc;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::basis::{BasisSpec, HbCoefficients, RenderOperator};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::io::{put_f64, put_f64s, put_u32, read_file, write_atomic, Reader};
use crate::metrics::{align_o2, cc, d_tv, psnr};
use crate::projection::{AnglePmf, ProjectionDataset, Projector};

const LOG_FLOOR: f64 = 1e-12;

fn normalize(v: &mut Array1<f64>) -> f64 {
    let n = v.dot(v).sqrt();
    if n > 0.0 {
        *v /= n;
    }
    n
}

/// One fully connected layer with spectral-normalization state.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// raw weight, `out x in`
    pub w: Array2<f64>,
    pub b: Array1<f64>,
    /// persistent left singular vector estimate
    pub u: Array1<f64>,
    v: Array1<f64>,
    sigma: f64,
}

impl Layer {
    fn new(w: Array2<f64>, rng: &mut impl Rng) -> Self {
        let (out, inp) = w.dim();
        let mut u = Array1::from_shape_fn(out, |_| StandardNormal.sample(rng));
        normalize(&mut u);
        Self {
            w,
            b: Array1::zeros(out),
            u,
            v: Array1::zeros(inp),
            sigma: 1.0,
        }
    }

    /// Power iterations on `W`, updating `u`, `v` and `sigma = u^T W v`.
    fn power_iterate(&mut self, iters: usize) {
        for _ in 0..iters {
            let mut v = self.w.t().dot(&self.u);
            normalize(&mut v);
            let mut u = self.w.dot(&v);
            normalize(&mut u);
            self.v = v;
            self.u = u;
        }
        let s = self.u.dot(&self.w.dot(&self.v));
        // an all-zero weight has no direction to normalize
        self.sigma = if s > 0.0 { s } else { 1.0 };
    }

    /// Iterate until `sigma` changes by less than `tol` (relative).
    fn power_converge(&mut self, min_iters: usize, tol: f64, max_iters: usize) {
        self.power_iterate(min_iters.max(1));
        let mut done = min_iters.max(1);
        while done < max_iters {
            let prev = self.sigma;
            self.power_iterate(1);
            done += 1;
            if (self.sigma - prev).abs() <= tol * prev {
                break;
            }
        }
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Weight actually applied: `W / sigma`.
    pub fn effective(&self) -> Array2<f64> {
        &self.w / self.sigma
    }

    /// Map a gradient wrt the effective weight to the raw weight, holding
    /// `u` and `v` fixed: `(G - <G, W_eff> u v^T) / sigma`.
    fn raw_gradient(&self, g_eff: &Array2<f64>) -> Array2<f64> {
        let w_eff = self.effective();
        let inner = (g_eff * &w_eff).sum();
        let uv = self
            .u
            .view()
            .insert_axis(Axis(1))
            .dot(&self.v.view().insert_axis(Axis(0)));
        (g_eff - &(uv * inner)) / self.sigma
    }
}

/// `m -> l -> l/2 -> l/4 -> 1` ReLU critic.
#[derive(Debug, Clone, PartialEq)]
pub struct Critic {
    pub layers: Vec<Layer>,
}

/// Gradients wrt raw weights and biases.
#[derive(Debug, Clone)]
pub struct CriticGrad {
    pub w: Vec<Array2<f64>>,
    pub b: Vec<Array1<f64>>,
}

#[cfg(test)]
impl CriticGrad {
    fn zeros_like(c: &Critic) -> Self {
        Self {
            w: c.layers.iter().map(|l| Array2::zeros(l.w.dim())).collect(),
            b: c.layers.iter().map(|l| Array1::zeros(l.b.len())).collect(),
        }
    }

    fn add_scaled(&mut self, other: &CriticGrad, s: f64) {
        for (a, b) in self.w.iter_mut().zip(&other.w) {
            a.scaled_add(s, b);
        }
        for (a, b) in self.b.iter_mut().zip(&other.b) {
            a.scaled_add(s, b);
        }
    }
}

struct Forward {
    /// layer inputs (post-activation), `acts[0]` is the batch itself
    acts: Vec<Array2<f64>>,
    /// pre-activations of every layer
    pre: Vec<Array2<f64>>,
    weights: Vec<Array2<f64>>,
}

impl Critic {
    pub fn new(m: usize, ell: usize, init_std: f64, rng: &mut impl Rng) -> Result<Self> {
        if ell < 4 || m == 0 {
            return Err(Error::Config(format!("critic width {ell} must be at least 4")));
        }
        let sizes = [m, ell, ell / 2, ell / 4, 1];
        let normal = Normal::new(0.0, init_std).map_err(|e| Error::Config(e.to_string()))?;
        let layers = sizes
            .windows(2)
            .map(|w| {
                let mat = Array2::from_shape_fn((w[1], w[0]), |_| normal.sample(rng));
                Layer::new(mat, rng)
            })
            .collect();
        Ok(Self { layers })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].w.ncols()
    }

    pub fn spectral_normalize(&mut self, power_iters: usize) {
        for l in &mut self.layers {
            l.power_iterate(power_iters.max(1));
        }
    }

    /// At least `min_iters` power iterations per layer, continuing until
    /// each estimate is stable to 1e-12.
    pub fn spectral_normalize_converged(&mut self, min_iters: usize) {
        for l in &mut self.layers {
            l.power_converge(min_iters, 1e-12, 100_000);
        }
    }

    fn forward(&self, x: ArrayView2<f64>) -> (Array1<f64>, Forward) {
        let weights: Vec<Array2<f64>> = self.layers.iter().map(Layer::effective).collect();
        let mut acts = vec![x.to_owned()];
        let mut pre = Vec::with_capacity(4);
        for (i, (l, w)) in self.layers.iter().zip(&weights).enumerate() {
            let z = acts[i].dot(&w.t()) + &l.b;
            if i + 1 < self.layers.len() {
                acts.push(z.mapv(|v| v.max(0.0)));
            }
            pre.push(z);
        }
        let scores = pre[3].column(0).to_owned();
        (scores, Forward { acts, pre, weights })
    }

    /// Scores of a batch of lines (rows).
    pub fn scores(&self, x: ArrayView2<f64>) -> Array1<f64> {
        self.forward(x).0
    }

    pub fn score(&self, line: &[f64]) -> f64 {
        let x = ArrayView2::from_shape((1, line.len()), line).expect("shape");
        self.scores(x)[0]
    }

    /// Backprop `sum_n g_n D(x_n)`: gradients wrt effective weights, biases
    /// and the inputs.
    fn backward(&self, f: &Forward, g: ArrayView1<f64>) -> (Vec<Array2<f64>>, Vec<Array1<f64>>, Array2<f64>) {
        let mut delta = g.to_owned().insert_axis(Axis(1));
        let mut gw = vec![Array2::zeros((0, 0)); 4];
        let mut gb = vec![Array1::zeros(0); 4];
        for i in (0..4).rev() {
            gw[i] = delta.t().dot(&f.acts[i]);
            gb[i] = delta.sum_axis(Axis(0));
            let mut back = delta.dot(&f.weights[i]);
            if i > 0 {
                back.zip_mut_with(&f.pre[i - 1], |d, &z| {
                    if z <= 0.0 {
                        *d = 0.0
                    }
                });
            }
            delta = back;
        }
        (gw, gb, delta)
    }

    fn to_raw(&self, gw: Vec<Array2<f64>>, gb: Vec<Array1<f64>>) -> CriticGrad {
        CriticGrad {
            w: self.layers.iter().zip(&gw).map(|(l, g)| l.raw_gradient(g)).collect(),
            b: gb,
        }
    }

    /// Gradient of `sum_n g_n D(x_n)` wrt the inputs.
    pub fn input_gradient(&self, x: ArrayView2<f64>, g: ArrayView1<f64>) -> (Array1<f64>, Array2<f64>) {
        let (scores, f) = self.forward(x);
        let (_, _, dx) = self.backward(&f, g);
        (scores, dx)
    }

    /// Critic objective to *minimize*,
    /// `-(sum D(real) - sum D(syn)) + lambda sum (||grad_x D(x_int)|| - 1)^2`,
    /// and its gradient wrt the raw parameters (spectral-normalization
    /// vectors held fixed).
    pub fn loss_and_grad(
        &self,
        real: ArrayView2<f64>,
        syn: ArrayView2<f64>,
        interp: Option<(ArrayView2<f64>, f64)>,
    ) -> (f64, CriticGrad) {
        let (sr, fr) = self.forward(real);
        let (ss, fs) = self.forward(syn);
        let loss = -(sr.sum() - ss.sum());
        let (mut gw, mut gb, _) = self.backward(&fr, Array1::from_elem(sr.len(), -1.0).view());
        let (gw2, gb2, _) = self.backward(&fs, Array1::from_elem(ss.len(), 1.0).view());
        for (a, b) in gw.iter_mut().zip(&gw2) {
            *a += b;
        }
        for (a, b) in gb.iter_mut().zip(&gb2) {
            *a += b;
        }
        let mut total = loss;
        if let Some((x, lambda)) = interp {
            if lambda > 0.0 {
                let (pen, pw) = self.penalty_grad(x);
                total += lambda * pen;
                for (a, b) in gw.iter_mut().zip(&pw) {
                    a.scaled_add(lambda, b);
                }
            }
        }
        (total, self.to_raw(gw, gb))
    }

    /// `sum_n (||grad_x D(x_n)|| - 1)^2` and its gradient wrt the effective
    /// weights. ReLU masks are piecewise constant, so biases get no gradient.
    fn penalty_grad(&self, x: ArrayView2<f64>) -> (f64, Vec<Array2<f64>>) {
        let (_, f) = self.forward(x);
        let w = &f.weights;
        let mut pen = 0.0;
        let mut grads: Vec<Array2<f64>> = w.iter().map(|m| Array2::zeros(m.dim())).collect();
        for n in 0..x.nrows() {
            let mask = |i: usize| f.pre[i].row(n).mapv(|z| if z > 0.0 { 1.0 } else { 0.0 });
            let (m1, m2, m3) = (mask(0), mask(1), mask(2));
            // backward vectors
            let v3 = &w[3].row(0) * &m3;
            let v2 = &w[2].t().dot(&v3) * &m2;
            let v1 = &w[1].t().dot(&v2) * &m1;
            let g = w[0].t().dot(&v1);
            let norm = g.dot(&g).sqrt();
            pen += (norm - 1.0).powi(2);
            if norm == 0.0 {
                continue;
            }
            let gamma = &g * (2.0 * (norm - 1.0) / norm);
            // forward vectors
            let u1 = &w[0].dot(&gamma) * &m1;
            let u2 = &w[1].dot(&u1) * &m2;
            let u3 = &w[2].dot(&u2) * &m3;
            let outer = |a: &Array1<f64>, b: &Array1<f64>| {
                a.view().insert_axis(Axis(1)).dot(&b.view().insert_axis(Axis(0)))
            };
            grads[0] += &outer(&v1, &gamma);
            grads[1] += &outer(&v2, &u1);
            grads[2] += &outer(&v3, &u2);
            grads[3] += &u3.view().insert_axis(Axis(0));
        }
        (pen, grads)
    }

    fn apply_step(&mut self, g: &CriticGrad, lr: f64, clip: f64) {
        for (l, (gw, gb)) in self.layers.iter_mut().zip(g.w.iter().zip(&g.b)) {
            l.w.zip_mut_with(gw, |w, &d| *w -= lr * d.clamp(-clip, clip));
            l.b.zip_mut_with(gb, |b, &d| *b -= lr * d.clamp(-clip, clip));
        }
    }
}

/// `Gumbel(0, 1)` draws, `rows x n`.
pub fn draw_gumbel(rows: usize, n: usize, rng: &mut impl Rng) -> Array2<f64> {
    Array2::from_shape_fn((rows, n), |_| {
        let u: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
        -(-u.ln()).ln()
    })
}

/// Row-wise `softmax((g + log max(p, 1e-12)) / tau)`.
pub fn gumbel_softmax(g: ArrayView2<f64>, p: &[f64], tau: f64) -> Array2<f64> {
    let log_p: Vec<f64> = p.iter().map(|v| v.max(LOG_FLOOR).ln()).collect();
    let mut r = g.to_owned();
    for mut row in r.rows_mut() {
        for (v, lp) in row.iter_mut().zip(&log_p) {
            *v = (*v + lp) / tau;
        }
        let mx = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - mx).exp());
        let s = row.sum();
        row /= s;
    }
    r
}

/// Gumbel-Softmax weights `r[b][i]` for `rows` fresh draws.
pub fn gumbel_weights(p: &AnglePmf, rows: usize, tau: f64, rng: &mut impl Rng) -> Array2<f64> {
    let g = draw_gumbel(rows, p.len(), rng);
    gumbel_softmax(g.view(), p.probs(), tau)
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let mx = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|v| (v - mx).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

/// Anisotropic TV with forward differences and its subgradient.
pub fn image_tv(img: &Image) -> (f64, Image) {
    let m = img.size();
    let mut g = Image::zeros(m);
    let mut tv = 0.0;
    let sgn = |d: f64| if d > 0.0 { 1.0 } else if d < 0.0 { -1.0 } else { 0.0 };
    for iy in 0..m {
        for ix in 0..m {
            let v = img.get(iy, ix);
            if ix + 1 < m {
                let d = img.get(iy, ix + 1) - v;
                tv += d.abs();
                let s = sgn(d);
                g.set(iy, ix + 1, g.get(iy, ix + 1) + s);
                g.set(iy, ix, g.get(iy, ix) - s);
            }
            if iy + 1 < m {
                let d = img.get(iy + 1, ix) - v;
                tv += d.abs();
                let s = sgn(d);
                g.set(iy + 1, ix, g.get(iy + 1, ix) + s);
                g.set(iy, ix, g.get(iy, ix) - s);
            }
        }
    }
    (tv, g)
}

/// Circular TV of a PMF and its subgradient.
pub fn pmf_tv(p: &[f64]) -> (f64, Vec<f64>) {
    let n = p.len();
    let mut g = vec![0.0; n];
    let mut tv = 0.0;
    for i in 0..n {
        let j = (i + 1) % n;
        let d = p[j] - p[i];
        tv += d.abs();
        let s = if d > 0.0 { 1.0 } else if d < 0.0 { -1.0 } else { 0.0 };
        g[j] += s;
        g[i] -= s;
    }
    (tv, g)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CInit {
    /// i.i.d. `N(0, 4e-4)`
    Gaussian,
    /// `c_{0,1} = 0.01`, all others zero
    Spike,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr_phi: f64,
    pub lr_c: f64,
    /// step on the softmax logits of `p`, not on `p` itself
    pub lr_p: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub gamma3: f64,
    pub gamma4: f64,
    pub tau: f64,
    pub n_disc: usize,
    /// critic updates per generator update after `n_disc_switch`
    pub n_disc_late: usize,
    /// iteration at which `n_disc_late` takes over (`None`: half of `iters`)
    pub n_disc_switch: Option<usize>,
    pub batch: usize,
    pub clip_phi: f64,
    pub clip_c: f64,
    pub p_grad_norm: f64,
    pub n_theta: usize,
    pub iters: usize,
    pub seed: u64,
    pub lambda_gp: f64,
    pub ell: usize,
    pub critic_init_std: f64,
    pub c_init: CInit,
    pub c_init_std: f64,
    /// multiply learning rates by `lr_decay` every `decay_every` iterations
    /// (`None`: a quarter of `iters`)
    pub decay_every: Option<usize>,
    pub lr_decay: f64,
    pub sn_power_iters: usize,
    pub sn_init_iters: usize,
    /// keep `p` uniform (ablation)
    pub freeze_p: bool,
    pub eval_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr_phi: 0.008,
            lr_c: 0.008,
            lr_p: 0.05,
            gamma1: 1e-5,
            gamma2: 5e-5,
            gamma3: 0.01,
            gamma4: 0.04,
            tau: 0.5,
            n_disc: 4,
            n_disc_late: 2,
            n_disc_switch: None,
            batch: 200,
            clip_phi: 1.0,
            clip_c: 10.0,
            p_grad_norm: 0.1,
            n_theta: 240,
            iters: 40_000,
            seed: 0,
            lambda_gp: 0.0,
            ell: 512,
            critic_init_std: 0.05,
            c_init: CInit::Gaussian,
            c_init_std: 0.02,
            decay_every: None,
            lr_decay: 0.5,
            sn_power_iters: 1,
            sn_init_iters: 20,
            freeze_p: false,
            eval_every: 1000,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("lr_phi", self.lr_phi),
            ("lr_c", self.lr_c),
            ("lr_p", self.lr_p),
            ("tau", self.tau),
            ("clip_phi", self.clip_phi),
            ("clip_c", self.clip_c),
            ("p_grad_norm", self.p_grad_norm),
            ("lr_decay", self.lr_decay),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.n_disc == 0 || self.n_disc_late == 0 {
            return Err(Error::Config("n_disc must be at least 1".into()));
        }
        if self.batch == 0 || self.n_theta == 0 {
            return Err(Error::Config("batch and n_theta must be positive".into()));
        }
        for (name, v) in [("gamma1", self.gamma1), ("gamma2", self.gamma2), ("gamma3", self.gamma3), ("gamma4", self.gamma4), ("lambda_gp", self.lambda_gp)] {
            if !(v >= 0.0) {
                return Err(Error::Config(format!("{name} must be nonnegative, got {v}")));
            }
        }
        Ok(())
    }

    fn decay_period(&self) -> usize {
        self.decay_every.unwrap_or(self.iters.div_ceil(4)).max(1)
    }

    /// Learning-rate multiplier at iteration `t`.
    pub fn lr_scale(&self, t: usize) -> f64 {
        self.lr_decay.powi((t / self.decay_period()) as i32)
    }

    pub fn n_disc_at(&self, t: usize) -> usize {
        if t >= self.n_disc_switch.unwrap_or(self.iters / 2) {
            self.n_disc_late
        } else {
            self.n_disc
        }
    }
}

/// Everything the generator loss needs besides `c` and `p_logits`.
pub struct GeneratorInputs<'a> {
    pub projector: &'a Projector,
    pub thetas: &'a [f64],
    pub critic: &'a Critic,
    /// `n_theta x m` Hartley noise added to the templates
    pub noise_bank: ArrayView2<'a, f64>,
    /// `B x n_theta` Gumbel draws
    pub gumbel: ArrayView2<'a, f64>,
    pub tau: f64,
    pub gammas: [f64; 4],
    pub render: Option<&'a RenderOperator>,
}

#[derive(Debug, Clone)]
pub struct GeneratorEval {
    pub loss: f64,
    /// adversarial part only
    pub loss_g: f64,
    pub grad_c: Vec<f64>,
    pub grad_logits: Vec<f64>,
}

/// Regularized generator loss with shared noisy templates,
/// `-sum_b sum_i r_ib D(H_i c + e_i) + g1 TV(I(c)) + g2 |c|^2 + g3 TV(p) + g4 |p|^2`,
/// and its gradients wrt `c` and `p_logits`.
pub fn generator_loss(c: &[f64], logits: &[f64], inp: &GeneratorInputs) -> GeneratorEval {
    let n_theta = inp.thetas.len();
    let m = inp.projector.m();
    let p = softmax(logits);
    let r = gumbel_softmax(inp.gumbel, &p, inp.tau);
    let templates = inp.projector.templates(c, inp.thetas);
    let x = ArrayView2::from_shape((n_theta, m), &templates).expect("shape").to_owned() + inp.noise_bank;
    // dL/ds_i = -sum_b r_ib
    let weight = r.sum_axis(Axis(0));
    let (scores, dx) = inp.critic.input_gradient(x.view(), weight.mapv(|v| -v).view());
    let mut loss_g = 0.0;
    for row in r.rows() {
        let mut acc = 0.0;
        for (ri, si) in row.iter().zip(scores.iter()) {
            acc += ri * si;
        }
        loss_g -= acc;
    }
    let dx = dx.as_standard_layout().to_owned();
    let mut grad_c = inp.projector.templates_adjoint(dx.as_slice().expect("contiguous"), inp.thetas);

    // pathwise gradient through the Gumbel-Softmax: dL/dz_i with z = log p
    let mut dz = vec![0.0; n_theta];
    for row in r.rows() {
        let mean: f64 = row.iter().zip(scores.iter()).map(|(a, b)| a * b).sum();
        for i in 0..n_theta {
            dz[i] += -row[i] * (scores[i] - mean) / inp.tau;
        }
    }
    let mut dp: Vec<f64> = dz
        .iter()
        .zip(&p)
        .map(|(d, &pi)| if pi > LOG_FLOOR { d / pi } else { 0.0 })
        .collect();

    let [g1, g2, g3, g4] = inp.gammas;
    let mut loss = loss_g;
    if g1 > 0.0 {
        if let Some(op) = inp.render {
            let (tv, sub) = image_tv(&op.apply(c));
            loss += g1 * tv;
            for (g, a) in grad_c.iter_mut().zip(op.adjoint(&sub)) {
                *g += g1 * a;
            }
        }
    }
    if g2 > 0.0 {
        loss += g2 * c.iter().map(|v| v * v).sum::<f64>();
        for (g, v) in grad_c.iter_mut().zip(c) {
            *g += 2.0 * g2 * v;
        }
    }
    if g3 > 0.0 {
        let (tv, sub) = pmf_tv(&p);
        loss += g3 * tv;
        for (d, s) in dp.iter_mut().zip(sub) {
            *d += g3 * s;
        }
    }
    if g4 > 0.0 {
        loss += g4 * p.iter().map(|v| v * v).sum::<f64>();
        for (d, v) in dp.iter_mut().zip(&p) {
            *d += 2.0 * g4 * v;
        }
    }
    // through p = softmax(logits)
    let mean: f64 = dp.iter().zip(&p).map(|(d, p)| d * p).sum();
    let grad_logits = dp.iter().zip(&p).map(|(d, pi)| pi * (d - mean)).collect();
    GeneratorEval {
        loss,
        loss_g,
        grad_c,
        grad_logits,
    }
}

/// Adversarial loss with one noisy template set per batch row,
/// `-sum_b sum_i r_ib D(H_i c + e_b)`. Equal to the shared-template loss
/// when there is no noise.
pub fn generator_loss_per_row(c: &[f64], logits: &[f64], inp: &GeneratorInputs, row_noise: ArrayView2<f64>) -> f64 {
    let n_theta = inp.thetas.len();
    let m = inp.projector.m();
    let p = softmax(logits);
    let r = gumbel_softmax(inp.gumbel, &p, inp.tau);
    let templates = inp.projector.templates(c, inp.thetas);
    let t = ArrayView2::from_shape((n_theta, m), &templates).expect("shape");
    let mut loss = 0.0;
    for (b, row) in r.rows().into_iter().enumerate() {
        let x = &t + &row_noise.row(b);
        let scores = inp.critic.scores(x.view());
        let mut acc = 0.0;
        for (ri, si) in row.iter().zip(scores.iter()) {
            acc += ri * si;
        }
        loss -= acc;
    }
    loss
}

#[derive(Debug, Clone, PartialEq)]
pub struct HistoryRow {
    pub iteration: usize,
    pub critic_loss: f64,
    pub gen_loss: f64,
    pub psnr: Option<f64>,
    pub cc: Option<f64>,
    pub d_tv: Option<f64>,
}

pub fn history_csv(rows: &[HistoryRow]) -> String {
    let opt = |v: Option<f64>| v.map(|x| format!("{x:.9e}")).unwrap_or_default();
    let mut s = String::from("iteration,critic_loss,gen_loss,psnr,cc,d_tv\n");
    for r in rows {
        s.push_str(&format!(
            "{},{:.9e},{:.9e},{},{},{}\n",
            r.iteration,
            r.critic_loss,
            r.gen_loss,
            opt(r.psnr),
            opt(r.cc),
            opt(r.d_tv)
        ));
    }
    s
}

/// Ground truth for convergence monitoring.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub image: Image,
    /// PMF on the training angle grid
    pub pmf: AnglePmf,
}

/// Mutable training state.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub c: Vec<f64>,
    pub p_logits: Vec<f64>,
    pub critic: Critic,
    pub iteration: usize,
    pub rng: ChaCha8Rng,
}

impl TrainState {
    pub fn init(spec: &BasisSpec, config: &TrainConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let c = match config.c_init {
            CInit::Gaussian => {
                let normal = Normal::new(0.0, config.c_init_std).map_err(|e| Error::Config(e.to_string()))?;
                (0..spec.len()).map(|_| normal.sample(&mut rng)).collect()
            }
            CInit::Spike => {
                let mut c = vec![0.0; spec.len()];
                if let Some(i) = spec.index_of(0, 1) {
                    c[i] = 0.01;
                }
                c
            }
        };
        let mut critic = Critic::new(spec.m(), config.ell, config.critic_init_std, &mut rng)?;
        critic.spectral_normalize_converged(config.sn_init_iters);
        Ok(Self {
            c,
            p_logits: vec![0.0; config.n_theta],
            critic,
            iteration: 0,
            rng,
        })
    }

    pub fn pmf(&self) -> AnglePmf {
        AnglePmf::from_weights(&softmax(&self.p_logits), 2.0 * PI).expect("softmax is a PMF")
    }

    pub fn coefficients(&self, spec: Arc<BasisSpec>) -> HbCoefficients {
        HbCoefficients::new(spec, self.c.clone()).expect("finite coefficients")
    }
}

const CKPT_MAGIC: &[u8; 4] = b"UVTC";
const CKPT_VERSION: u32 = 1;

impl TrainState {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        buf.extend_from_slice(CKPT_MAGIC);
        put_u32(&mut buf, CKPT_VERSION);
        put_u32(&mut buf, self.iteration as u32);
        put_u32(&mut buf, self.c.len() as u32);
        put_f64s(&mut buf, &self.c);
        put_u32(&mut buf, self.p_logits.len() as u32);
        put_f64s(&mut buf, &self.p_logits);
        put_u32(&mut buf, self.critic.layers.len() as u32);
        for l in &self.critic.layers {
            let (o, i) = l.w.dim();
            put_u32(&mut buf, o as u32);
            put_u32(&mut buf, i as u32);
            put_f64s(&mut buf, l.w.as_standard_layout().as_slice().expect("contiguous"));
            put_f64s(&mut buf, l.b.as_slice().expect("contiguous"));
            put_f64s(&mut buf, l.u.as_slice().expect("contiguous"));
            put_f64s(&mut buf, l.v.as_slice().expect("contiguous"));
            put_f64(&mut buf, l.sigma);
        }
        buf.extend_from_slice(&self.rng.get_seed());
        put_u32(&mut buf, (self.rng.get_stream() & 0xffff_ffff) as u32);
        put_u32(&mut buf, (self.rng.get_stream() >> 32) as u32);
        let pos = self.rng.get_word_pos();
        for k in 0..4 {
            put_u32(&mut buf, ((pos >> (32 * k)) & 0xffff_ffff) as u32);
        }
        buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        r.magic(CKPT_MAGIC)?;
        r.version(CKPT_VERSION)?;
        let iteration = r.u32()? as usize;
        let n = r.u32()? as usize;
        let c = r.f64s(n)?;
        let n = r.u32()? as usize;
        let p_logits = r.f64s(n)?;
        let n_layers = r.u32()? as usize;
        if n_layers != 4 {
            return Err(Error::Format(format!("checkpoint has {n_layers} critic layers")));
        }
        let mut layers = Vec::with_capacity(4);
        for _ in 0..n_layers {
            let o = r.u32()? as usize;
            let i = r.u32()? as usize;
            let w = Array2::from_shape_vec((o, i), r.f64s(o * i)?).map_err(|e| Error::Format(e.to_string()))?;
            let b = Array1::from(r.f64s(o)?);
            let u = Array1::from(r.f64s(o)?);
            let v = Array1::from(r.f64s(i)?);
            let sigma = r.f64()?;
            layers.push(Layer { w, b, u, v, sigma });
        }
        let mut seed = [0u8; 32];
        for chunk in seed.chunks_mut(4) {
            chunk.copy_from_slice(&r.u32()?.to_le_bytes());
        }
        let stream = r.u32()? as u64 | (r.u32()? as u64) << 32;
        let mut pos: u128 = 0;
        for k in 0..4 {
            pos |= (r.u32()? as u128) << (32 * k);
        }
        if r.remaining() != 0 {
            return Err(Error::Format("trailing bytes in checkpoint".into()));
        }
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(stream);
        rng.set_word_pos(pos);
        Ok(Self {
            c,
            p_logits,
            critic: Critic { layers },
            iteration,
            rng,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&read_file(path)?)
    }
}

/// Training driver holding the dataset-dependent precomputation.
pub struct Trainer<'a> {
    spec: Arc<BasisSpec>,
    projector: Projector,
    render: Option<RenderOperator>,
    eval_render: Option<RenderOperator>,
    dataset: &'a ProjectionDataset,
    config: TrainConfig,
    thetas: Vec<f64>,
    truth: Option<GroundTruth>,
    /// templates of the current `c`, `n_theta x m`
    templates: Option<Array2<f64>>,
}

impl<'a> Trainer<'a> {
    pub fn new(spec: Arc<BasisSpec>, dataset: &'a ProjectionDataset, config: TrainConfig, truth: Option<GroundTruth>) -> Result<Self> {
        config.validate()?;
        if spec.m() != dataset.m {
            return Err(Error::InvalidArgument(format!(
                "basis grid m = {} but dataset m = {}",
                spec.m(),
                dataset.m
            )));
        }
        if config.batch > dataset.len() {
            return Err(Error::Config(format!(
                "batch {} exceeds dataset size {}",
                config.batch,
                dataset.len()
            )));
        }
        if let Some(t) = &truth {
            if t.pmf.len() != config.n_theta {
                return Err(Error::InvalidPmf("ground-truth PMF must use the training grid".into()));
            }
        }
        let render = (config.gamma1 > 0.0).then(|| RenderOperator::new(&spec, spec.m()));
        let eval_render = truth.as_ref().map(|_| RenderOperator::new(&spec, spec.m()));
        let thetas = (0..config.n_theta).map(|j| 2.0 * PI * j as f64 / config.n_theta as f64).collect();
        Ok(Self {
            projector: Projector::new(spec.clone()),
            spec,
            render,
            eval_render,
            dataset,
            config,
            thetas,
            truth,
            templates: None,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    fn current_templates(&mut self, c: &[f64]) -> &Array2<f64> {
        if self.templates.is_none() {
            let t = self.projector.templates(c, &self.thetas);
            self.templates = Some(Array2::from_shape_vec((self.thetas.len(), self.spec.m()), t).expect("shape"));
        }
        self.templates.as_ref().expect("just filled")
    }

    fn noise(&self, rows: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
        let sigma = self.dataset.sigma;
        let m = self.spec.m();
        if sigma == 0.0 {
            return Array2::zeros((rows, m));
        }
        Array2::from_shape_fn((rows, m), |_| {
            let z: f64 = StandardNormal.sample(rng);
            sigma * z
        })
    }

    /// One critic update; returns the critic objective before the step.
    pub fn critic_step(&mut self, state: &mut TrainState) -> f64 {
        let b = self.config.batch;
        let m = self.spec.m();
        let lr = self.config.lr_phi * self.config.lr_scale(state.iteration);
        let idx = sample_indices(&mut state.rng, self.dataset.len(), b);
        let mut real = Array2::zeros((b, m));
        for (row, i) in real.rows_mut().into_iter().zip(idx.iter()) {
            row.into_slice().expect("contiguous").copy_from_slice(self.dataset.line(i));
        }
        let pmf = state.pmf();
        let bins: Vec<usize> = (0..b).map(|_| pmf.sample_index(&mut state.rng)).collect();
        let noise = self.noise(b, &mut state.rng);
        let t = self.current_templates(&state.c).clone();
        let mut syn = noise;
        for (mut row, &j) in syn.rows_mut().into_iter().zip(&bins) {
            row += &t.row(j);
        }
        let interp = if self.config.lambda_gp > 0.0 {
            let alpha: Vec<f64> = (0..b).map(|_| state.rng.gen::<f64>()).collect();
            let mut x = syn.clone();
            for (i, mut row) in x.rows_mut().into_iter().enumerate() {
                row *= 1.0 - alpha[i];
                row.scaled_add(alpha[i], &real.row(i));
            }
            Some(x)
        } else {
            None
        };
        state.critic.spectral_normalize(self.config.sn_power_iters);
        let (loss, grad) = state.critic.loss_and_grad(
            real.view(),
            syn.view(),
            interp.as_ref().map(|x| (x.view(), self.config.lambda_gp)),
        );
        state.critic.apply_step(&grad, lr, self.config.clip_phi);
        loss
    }

    /// One generator update; returns the regularized loss before the step.
    pub fn generator_step(&mut self, state: &mut TrainState) -> f64 {
        let cfg = self.config.clone();
        let scale = cfg.lr_scale(state.iteration);
        let noise = self.noise(cfg.n_theta, &mut state.rng);
        let gumbel = draw_gumbel(cfg.batch, cfg.n_theta, &mut state.rng);
        state.critic.spectral_normalize(cfg.sn_power_iters);
        let eval = {
            let inp = GeneratorInputs {
                projector: &self.projector,
                thetas: &self.thetas,
                critic: &state.critic,
                noise_bank: noise.view(),
                gumbel: gumbel.view(),
                tau: cfg.tau,
                gammas: [cfg.gamma1, cfg.gamma2, cfg.gamma3, cfg.gamma4],
                render: self.render.as_ref(),
            };
            generator_loss(&state.c, &state.p_logits, &inp)
        };
        apply_generator_step(state, &eval, &cfg, scale);
        self.templates = None;
        eval.loss
    }

    /// Metrics of the current state against the ground truth, if any.
    pub fn evaluate(&self, state: &TrainState) -> Option<(f64, f64, f64)> {
        let truth = self.truth.as_ref()?;
        let op = self.eval_render.as_ref()?;
        let rec = op.apply(&state.c);
        let pmf = state.pmf();
        let al = align_o2(&rec, &truth.image, Some(&pmf), self.config.n_theta).ok()?;
        let aligned_pmf = al.aligned_pmf?;
        Some((
            psnr(&al.aligned_image, &truth.image).ok()?,
            cc(&al.aligned_image, &truth.image).unwrap_or(0.0),
            d_tv(aligned_pmf.probs(), truth.pmf.probs()).ok()?,
        ))
    }

    /// Run until `state.iteration == config.iters`, recording history every
    /// `eval_every` iterations and at the end. `on_eval` sees every row.
    pub fn train(&mut self, state: &mut TrainState, on_eval: impl FnMut(&TrainState, &HistoryRow)) -> Vec<HistoryRow> {
        let end = self.config.iters;
        self.train_to(state, end, on_eval)
    }

    /// As [`Trainer::train`] but stop at iteration `until` (capped at `iters`).
    pub fn train_to(&mut self, state: &mut TrainState, until: usize, mut on_eval: impl FnMut(&TrainState, &HistoryRow)) -> Vec<HistoryRow> {
        let mut history = Vec::new();
        let mut last_gen = f64::NAN;
        let every = self.config.eval_every.max(1);
        let until = until.min(self.config.iters);
        while state.iteration < until {
            let t = state.iteration;
            let critic_loss = self.critic_step(state);
            if (t + 1) % self.config.n_disc_at(t) == 0 {
                last_gen = self.generator_step(state);
            }
            state.iteration += 1;
            if state.iteration % every == 0 || state.iteration == until {
                let metrics = self.evaluate(state);
                let row = HistoryRow {
                    iteration: state.iteration,
                    critic_loss,
                    gen_loss: last_gen,
                    psnr: metrics.map(|m| m.0),
                    cc: metrics.map(|m| m.1),
                    d_tv: metrics.map(|m| m.2),
                };
                on_eval(state, &row);
                history.push(row);
            }
        }
        history
    }
}

/// Clip `grad_c`, rescale `grad_logits` to norm `p_grad_norm`, take SGD
/// steps. `p` is left alone when `freeze_p` is set.
pub fn apply_generator_step(state: &mut TrainState, eval: &GeneratorEval, cfg: &TrainConfig, lr_scale: f64) {
    let lr_c = cfg.lr_c * lr_scale;
    for (c, g) in state.c.iter_mut().zip(&eval.grad_c) {
        *c -= lr_c * g.clamp(-cfg.clip_c, cfg.clip_c);
    }
    if cfg.freeze_p {
        return;
    }
    let g = rescale_p_gradient(&eval.grad_logits, cfg.p_grad_norm);
    let lr_p = cfg.lr_p * lr_scale;
    for (l, d) in state.p_logits.iter_mut().zip(g) {
        *l -= lr_p * d;
    }
}

/// Rescale to exact norm `target` (zero stays zero).
pub fn rescale_p_gradient(g: &[f64], target: f64) -> Vec<f64> {
    let n = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    if n == 0.0 {
        return g.to_vec();
    }
    g.iter().map(|v| v * target / n).collect()
}

/// Seeded generator shared by helpers that need a throwaway RNG.
pub fn rng_from(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::projection::{synthesize_dataset, SynthOptions};
    use nalgebra::DMatrix;

    fn small_critic(m: usize, ell: usize, seed: u64) -> Critic {
        let mut rng = rng_from(seed);
        let mut c = Critic::new(m, ell, 0.3, &mut rng).unwrap();
        for l in &mut c.layers {
            l.b.mapv_inplace(|_| rng.gen_range(-0.2..0.2));
        }
        c.spectral_normalize_converged(30);
        c
    }

    fn random_batch(rows: usize, m: usize, seed: u64) -> Array2<f64> {
        let mut rng = rng_from(seed);
        Array2::from_shape_fn((rows, m), |_| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn zero_critic_scores_zero() {
        let mut c = small_critic(8, 16, 1);
        for l in &mut c.layers {
            l.w.fill(0.0);
            l.b.fill(0.0);
        }
        c.spectral_normalize(1);
        assert_eq!(c.score(&[1.0; 8]), 0.0);
    }

    #[test]
    fn scaling_a_weight_leaves_normalized_scores_unchanged() {
        let mut c = small_critic(8, 16, 2);
        let x = random_batch(5, 8, 3);
        let mut c2 = c.clone();
        c2.layers[3].w *= 2.0;
        c.spectral_normalize(1);
        c2.spectral_normalize(1);
        let (a, b) = (c.scores(x.view()), c2.scores(x.view()));
        for (u, v) in a.iter().zip(b.iter()) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn power_iteration_finds_known_singular_values() {
        let mut rng = rng_from(4);
        let mut l = Layer::new(Array2::from_diag(&Array1::from(vec![3.0, 1.0])), &mut rng);
        l.power_iterate(10);
        assert!((l.sigma() - 3.0).abs() < 1e-6);
        let mut l = Layer::new(Array2::from_diag(&Array1::from(vec![1.0, 0.5, 0.2])), &mut rng);
        l.power_iterate(30);
        assert!((l.sigma() - 1.0).abs() < 1e-6);
    }

    fn top_singular(w: &Array2<f64>) -> f64 {
        let (r, c) = w.dim();
        let m = DMatrix::from_fn(r, c, |i, j| w[[i, j]]);
        m.singular_values().iter().cloned().fold(0.0, f64::max)
    }

    #[test]
    fn power_iteration_matches_svd() {
        let mut rng = rng_from(5);
        let w = Array2::from_shape_fn((64, 64), |_| rng.gen_range(-1.0..1.0));
        let mut l = Layer::new(w.clone(), &mut rng);
        l.power_converge(20, 1e-12, 100_000);
        let s = top_singular(&w);
        assert!((l.sigma() - s).abs() / s < 1e-3);
        let c = small_critic(32, 64, 6);
        for l in &c.layers {
            let s = top_singular(&l.effective());
            assert!((s - 1.0).abs() < 1e-3, "{s}");
        }
    }

    #[test]
    fn critic_is_one_lipschitz() {
        let c = small_critic(16, 32, 7);
        let mut rng = rng_from(8);
        for _ in 0..1000 {
            let a: Vec<f64> = (0..16).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let b: Vec<f64> = (0..16).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let dist = a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
            assert!((c.score(&a) - c.score(&b)).abs() <= 1.05 * dist);
        }
    }

    #[test]
    fn identical_batches_give_zero_gradient() {
        let c = small_critic(8, 16, 9);
        let x = random_batch(6, 8, 10);
        let (loss, g) = c.loss_and_grad(x.view(), x.view(), None);
        assert_eq!(loss, 0.0);
        for w in &g.w {
            assert!(w.iter().all(|v| v.abs() < 1e-14));
        }
    }

    /// Critic objective as a function of a raw-parameter perturbation, with
    /// the power-iteration vectors held fixed.
    fn perturbed_loss(c: &Critic, dir: &CriticGrad, eps: f64, real: &Array2<f64>, syn: &Array2<f64>, interp: Option<(&Array2<f64>, f64)>) -> f64 {
        let mut c2 = c.clone();
        for (l, (dw, db)) in c2.layers.iter_mut().zip(dir.w.iter().zip(&dir.b)) {
            l.w.scaled_add(eps, dw);
            l.b.scaled_add(eps, db);
            l.sigma = l.u.dot(&l.w.dot(&l.v));
        }
        c2.loss_and_grad(real.view(), syn.view(), interp.map(|(x, l)| (x.view(), l))).0
    }

    fn check_critic_fd(lambda: f64) {
        let c = small_critic(8, 16, 11);
        let real = random_batch(5, 8, 12);
        let syn = random_batch(5, 8, 13);
        let int = random_batch(5, 8, 14);
        let interp = (lambda > 0.0).then_some((&int, lambda));
        let (_, g) = c.loss_and_grad(real.view(), syn.view(), interp.map(|(x, l)| (x.view(), l)));
        let mut rng = rng_from(15);
        let mut dir = CriticGrad::zeros_like(&c);
        let rand_dir = CriticGrad {
            w: dir.w.iter().map(|w| w.mapv(|_| rng.gen_range(-1.0..1.0))).collect(),
            b: dir.b.iter().map(|b| b.mapv(|_| rng.gen_range(-1.0..1.0))).collect(),
        };
        dir.add_scaled(&rand_dir, 1.0);
        let analytic: f64 = g.w.iter().zip(&dir.w).map(|(a, b)| (a * b).sum()).sum::<f64>()
            + g.b.iter().zip(&dir.b).map(|(a, b)| (a * b).sum()).sum::<f64>();
        let h = 1e-6;
        let fd = (perturbed_loss(&c, &dir, h, &real, &syn, interp) - perturbed_loss(&c, &dir, -h, &real, &syn, interp)) / (2.0 * h);
        assert!((fd - analytic).abs() <= 1e-4 * analytic.abs().max(1e-8), "fd {fd} analytic {analytic}");
    }

    #[test]
    fn critic_gradient_matches_finite_differences() {
        check_critic_fd(0.0);
    }

    #[test]
    fn gradient_penalty_gradient_matches_finite_differences() {
        check_critic_fd(10.0);
    }

    #[test]
    fn gumbel_rows_are_normalized_and_sharpen() {
        let p = AnglePmf::from_weights(&[1.0, 2.0, 3.0, 4.0], 2.0 * PI).unwrap();
        let mut rng = rng_from(16);
        let r = gumbel_weights(&p, 1000, 0.5, &mut rng);
        for row in r.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-12);
        }
        let sharp = |p: &AnglePmf, rng: &mut ChaCha8Rng| {
            let r = gumbel_weights(p, 20_000, 0.01, rng);
            r.rows().into_iter().filter(|row| row.fold(0.0f64, |a, &b| a.max(b)) > 0.99).count() as f64 / 20_000.0
        };
        let peaked = AnglePmf::from_weights(&[0.97, 0.01, 0.01, 0.01], 2.0 * PI).unwrap();
        assert!(sharp(&peaked, &mut rng) >= 0.99);
        // for a flat PMF the top-two gap is Exp(1), and the row is sharp iff
        // the gap exceeds about tau ln 99
        let flat = sharp(&AnglePmf::uniform(240), &mut rng);
        let expected = (-0.01 * 99f64.ln()).exp();
        assert!((flat - expected).abs() < 0.005, "{flat} vs {expected}");
    }

    #[test]
    fn gumbel_argmax_is_categorical() {
        let w: Vec<f64> = (0..12).map(|i| 1.0 + (i as f64 * 0.7).sin().abs()).collect();
        let p = AnglePmf::from_weights(&w, 2.0 * PI).unwrap();
        let mut rng = rng_from(17);
        let r = gumbel_weights(&p, 100_000, 0.5, &mut rng);
        let mut hist = vec![0.0; 12];
        for row in r.rows() {
            let arg = (0..12).fold(0, |b, i| if row[i] > row[b] { i } else { b });
            hist[arg] += 1e-5;
        }
        assert!(d_tv(&hist, p.probs()).unwrap() < 0.02);
    }

    struct Fixture {
        spec: Arc<BasisSpec>,
        projector: Projector,
        thetas: Vec<f64>,
        critic: Critic,
        noise: Array2<f64>,
        gumbel: Array2<f64>,
        render: RenderOperator,
        c: Vec<f64>,
        logits: Vec<f64>,
    }

    fn fixture(sigma: f64) -> Fixture {
        let spec = Arc::new(BasisSpec::new(0.35, 14.0, 32).unwrap());
        let n_theta = 24;
        let mut rng = rng_from(18);
        let thetas: Vec<f64> = (0..n_theta).map(|j| 2.0 * PI * j as f64 / n_theta as f64).collect();
        let mut critic = Critic::new(32, 64, 0.05, &mut rng).unwrap();
        for l in &mut critic.layers {
            l.b.mapv_inplace(|_| rng.gen_range(-0.1..0.1));
        }
        critic.spectral_normalize(20);
        let noise = Array2::from_shape_fn((n_theta, 32), |_| sigma * rng.gen_range(-1.0..1.0));
        let gumbel = draw_gumbel(7, n_theta, &mut rng);
        let c: Vec<f64> = (0..spec.len()).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let logits: Vec<f64> = (0..n_theta).map(|_| rng.gen_range(-1.0..1.0)).collect();
        Fixture {
            projector: Projector::new(spec.clone()),
            render: RenderOperator::new(&spec, 32),
            spec,
            thetas,
            critic,
            noise,
            gumbel,
            c,
            logits,
        }
    }

    fn inputs<'a>(f: &'a Fixture, gammas: [f64; 4]) -> GeneratorInputs<'a> {
        GeneratorInputs {
            projector: &f.projector,
            thetas: &f.thetas,
            critic: &f.critic,
            noise_bank: f.noise.view(),
            gumbel: f.gumbel.view(),
            tau: 0.5,
            gammas,
            render: Some(&f.render),
        }
    }

    #[test]
    fn generator_gradients_match_finite_differences() {
        let f = fixture(0.3);
        let inp = inputs(&f, [1e-3, 1e-2, 0.01, 0.04]);
        let eval = generator_loss(&f.c, &f.logits, &inp);
        let h = 1e-6;
        let mut rng = rng_from(19);
        for _ in 0..10 {
            let i = rng.gen_range(0..f.c.len());
            let (mut cp, mut cm) = (f.c.clone(), f.c.clone());
            cp[i] += h;
            cm[i] -= h;
            let fd = (generator_loss(&cp, &f.logits, &inp).loss - generator_loss(&cm, &f.logits, &inp).loss) / (2.0 * h);
            let g = eval.grad_c[i];
            assert!((fd - g).abs() <= 1e-4 * g.abs().max(1e-6), "c[{i}]: fd {fd} vs {g}");
        }
        for _ in 0..10 {
            let i = rng.gen_range(0..f.logits.len());
            let (mut lp, mut lm) = (f.logits.clone(), f.logits.clone());
            lp[i] += h;
            lm[i] -= h;
            let fd = (generator_loss(&f.c, &lp, &inp).loss - generator_loss(&f.c, &lm, &inp).loss) / (2.0 * h);
            let g = eval.grad_logits[i];
            assert!((fd - g).abs() <= 1e-4 * g.abs().max(1e-6), "logit[{i}]: fd {fd} vs {g}");
        }
    }

    #[test]
    fn pmf_gradient_flows_without_regularization() {
        let f = fixture(0.3);
        let eval = generator_loss(&f.c, &f.logits, &inputs(&f, [0.0; 4]));
        assert!(eval.grad_logits.iter().map(|v| v * v).sum::<f64>() > 0.0);
    }

    #[test]
    fn constant_critic_gives_constant_loss() {
        let mut f = fixture(0.3);
        for l in &mut f.critic.layers {
            l.w.fill(0.0);
        }
        f.critic.layers[3].b.fill(2.5);
        f.critic.spectral_normalize(1);
        let eval = generator_loss(&f.c, &f.logits, &inputs(&f, [0.0; 4]));
        assert!((eval.loss + 7.0 * 2.5).abs() < 1e-12);
        assert!(eval.grad_c.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn logit_shift_invariance() {
        let f = fixture(0.3);
        let inp = inputs(&f, [1e-3, 1e-2, 0.01, 0.04]);
        let a = generator_loss(&f.c, &f.logits, &inp);
        let shifted: Vec<f64> = f.logits.iter().map(|v| v + 3.7).collect();
        let b = generator_loss(&f.c, &shifted, &inp);
        assert!((a.loss - b.loss).abs() < 1e-12);
        for (x, y) in a.grad_logits.iter().zip(&b.grad_logits).chain(a.grad_c.iter().zip(&b.grad_c)) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn shared_and_per_row_losses_agree_without_noise() {
        let f = fixture(0.0);
        let inp = inputs(&f, [0.0; 4]);
        let shared = generator_loss(&f.c, &f.logits, &inp).loss_g;
        let per_row = generator_loss_per_row(&f.c, &f.logits, &inp, Array2::zeros((7, 32)).view());
        assert_eq!(shared.to_bits(), per_row.to_bits());
    }

    #[test]
    fn generator_step_contracts() {
        let f = fixture(0.3);
        let cfg = TrainConfig { n_theta: 24, ell: 64, ..Default::default() };
        let mut state = TrainState::init(&f.spec, &cfg).unwrap();
        let before = state.clone();
        let zero = GeneratorEval { loss: 0.0, loss_g: 0.0, grad_c: vec![0.0; f.c.len()], grad_logits: vec![0.0; 24] };
        apply_generator_step(&mut state, &zero, &cfg, 1.0);
        assert_eq!(state.c, before.c);
        assert_eq!(state.p_logits, before.p_logits);
        let g = rescale_p_gradient(&[3.0, -4.0, 12.0], 0.1);
        let n = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((n - 0.1).abs() < 1e-12);
        assert_eq!(cfg.clip_c, 10.0);
        assert_eq!(cfg.clip_phi, 1.0);
    }

    #[test]
    fn tv_subgradients() {
        let (tv, g) = pmf_tv(&[0.1, 0.4, 0.5]);
        assert!((tv - 0.8).abs() < 1e-15);
        assert_eq!(g, vec![-2.0, 0.0, 2.0]);
        let img = Image::from_vec(2, vec![0.0, 1.0, 3.0, 3.0]).unwrap();
        let (tv, _) = image_tv(&img);
        assert!((tv - 6.0).abs() < 1e-15);
    }

    fn tiny_setup() -> (Arc<BasisSpec>, ProjectionDataset, TrainConfig) {
        let spec = Arc::new(BasisSpec::new(0.35, 10.0, 24).unwrap());
        let c = HbCoefficients::new(spec.clone(), (0..spec.len()).map(|i| (i as f64 * 0.3).cos()).collect()).unwrap();
        let d = synthesize_dataset(&c, &AnglePmf::uniform(16), &SynthOptions { lines: 40, snr: Some(5.0), seed: 2, flip: true }).unwrap();
        let cfg = TrainConfig { n_theta: 16, ell: 16, batch: 8, iters: 20, eval_every: 5, gamma1: 1e-4, seed: 3, ..Default::default() };
        (spec, d, cfg)
    }

    fn tiny_run(until: usize) -> (Vec<HistoryRow>, TrainState) {
        let (spec, d, cfg) = tiny_setup();
        let mut state = TrainState::init(&spec, &cfg).unwrap();
        let mut trainer = Trainer::new(spec, &d, cfg, None).unwrap();
        let h = trainer.train_to(&mut state, until, |_, _| {});
        (h, state)
    }

    #[test]
    fn training_is_deterministic_and_keeps_pmf_valid() {
        let (h1, s1) = tiny_run(20);
        let (h2, s2) = tiny_run(20);
        assert_eq!(history_csv(&h1), history_csv(&h2));
        assert_eq!(s1.c, s2.c);
        let p = s1.pmf();
        assert!((p.probs().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn checkpoint_resume_is_exact() {
        let (_, s_full) = tiny_run(20);
        let (_, s_half) = tiny_run(10);
        let restored = TrainState::from_bytes(&s_half.to_bytes()).unwrap();
        assert_eq!(restored.c, s_half.c);
        assert_eq!(restored.critic, s_half.critic);
        let (spec, d, cfg) = tiny_setup();
        let mut state = restored;
        let mut trainer = Trainer::new(spec, &d, cfg, None).unwrap();
        trainer.train(&mut state, |_, _| {});
        assert_eq!(state.c, s_full.c);
        assert_eq!(state.p_logits, s_full.p_logits);
    }

    #[test]
    fn schedule_defaults() {
        let cfg = TrainConfig { iters: 100, ..Default::default() };
        assert_eq!(cfg.lr_scale(24), 1.0);
        assert_eq!(cfg.lr_scale(25), 0.5);
        assert_eq!(cfg.lr_scale(99), 0.125);
        assert_eq!(cfg.n_disc_at(49), 4);
        assert_eq!(cfg.n_disc_at(50), 2);
        assert!(TrainConfig { tau: 0.0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { n_disc: 0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn wrong_magic_is_rejected() {
        let (_, s) = tiny_run(5);
        let mut bytes = s.to_bytes();
        bytes[0] = b'Z';
        assert!(TrainState::from_bytes(&bytes).is_err());
        let mut bytes = s.to_bytes();
        bytes[4] = 2;
        assert!(matches!(TrainState::from_bytes(&bytes), Err(Error::Version { .. })));
    }
}
