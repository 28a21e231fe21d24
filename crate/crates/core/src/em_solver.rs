//! Maximum marginalized likelihood by expectation-maximization over a
//! discrete angle grid, in the complex Fourier-Bessel (FB) basis.
//!
//! With `F = E - i O` the Fourier transform of a real image whose Hartley
//! transform has even/odd parts `E`/`O`, the FB coefficients of an HB
//! expansion are `a_k = w_k ((1 - i) c_k + (1 + i) c_{-k}) / 2` with `w_k = 1`
//! for even `k` and `-i` for odd `k`. Real images satisfy
//! `a_{-k} = (-1)^k conj(a_k)`.
//!
//! Angle bin `j` of an `n_theta` grid sits at `2 pi j / n_theta`.

use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rayon::prelude::*;

use crate::basis::{bin_frequency, fit_image, BasisSpec, HbCoefficients, RadialTable, RenderOperator};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::linalg::{pcg_solve_from, CMatrix, C64};
use crate::projection::{hartley_to_fourier, stream_rng, AnglePmf, ProjectionDataset, Projector};

fn fb_weight(k: i64) -> C64 {
    if k % 2 == 0 {
        C64::new(1.0, 0.0)
    } else {
        C64::new(0.0, -1.0)
    }
}

/// Complex FB coefficients in the canonical omega order of a [`BasisSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct FbCoefficients {
    spec: Arc<BasisSpec>,
    values: Vec<C64>,
}

impl FbCoefficients {
    pub fn new(spec: Arc<BasisSpec>, values: Vec<C64>) -> Result<Self> {
        if values.len() != spec.len() {
            return Err(Error::InvalidArgument(format!(
                "expected {} FB coefficients, got {}",
                spec.len(),
                values.len()
            )));
        }
        Ok(Self { spec, values })
    }

    pub fn from_hb(c: &HbCoefficients) -> Self {
        let spec = c.spec().clone();
        let v = c.values();
        let half_minus = C64::new(0.5, -0.5);
        let half_plus = C64::new(0.5, 0.5);
        let values = spec
            .omega()
            .iter()
            .enumerate()
            .map(|(idx, &(k, q))| {
                let mirror = spec.index_of(-k, q).expect("omega is symmetric in k");
                fb_weight(k) * (half_minus * v[idx] + half_plus * v[mirror])
            })
            .collect();
        Self { spec, values }
    }

    /// Real HB coefficients, read from the `k >= 0` half only.
    pub fn to_hb(&self) -> HbCoefficients {
        let spec = &self.spec;
        let mut c = vec![0.0; spec.len()];
        for (idx, &(k, q)) in spec.omega().iter().enumerate() {
            if k < 0 {
                continue;
            }
            if k == 0 {
                c[idx] = self.values[idx].re;
                continue;
            }
            let u = self.values[idx] / fb_weight(k);
            let mirror = spec.index_of(-k, q).expect("omega is symmetric in k");
            c[idx] = u.re - u.im;
            c[mirror] = u.re + u.im;
        }
        HbCoefficients::new(spec.clone(), c).expect("finite coefficients")
    }

    /// Project onto the conjugate-symmetric subspace of real images.
    pub fn enforce_symmetry(&mut self) {
        let spec = self.spec.clone();
        for (idx, &(k, q)) in spec.omega().iter().enumerate() {
            if k < 0 {
                continue;
            }
            if k == 0 {
                self.values[idx] = C64::new(self.values[idx].re, 0.0);
                continue;
            }
            let mirror = spec.index_of(-k, q).expect("omega is symmetric in k");
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            let avg = (self.values[idx] + self.values[mirror].conj() * sign) * 0.5;
            self.values[idx] = avg;
            self.values[mirror] = avg.conj() * sign;
        }
    }

    /// Largest `|a_{-k} - (-1)^k conj(a_k)|`.
    pub fn symmetry_defect(&self) -> f64 {
        let spec = &self.spec;
        spec.omega()
            .iter()
            .enumerate()
            .map(|(idx, &(k, q))| {
                let mirror = spec.index_of(-k, q).expect("omega is symmetric in k");
                let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                (self.values[mirror] - self.values[idx].conj() * sign).norm()
            })
            .fold(0.0, f64::max)
    }

    pub fn spec(&self) -> &Arc<BasisSpec> {
        &self.spec
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    /// Fourier-domain line `(H_theta a)_j = m^{-1/2} sum a_{k,q} J^{k,q}(|xi_j|) e^{i k theta_j}`
    /// with `theta_j = theta + pi` on negative frequencies.
    pub fn project(&self, radial: &RadialTable, theta: f64) -> Vec<C64> {
        let m = self.spec.m();
        let scale = 1.0 / (m as f64).sqrt();
        let mut out = vec![C64::new(0.0, 0.0); m];
        for (idx, &(k, _)) in self.spec.omega().iter().enumerate() {
            let a = self.values[idx];
            if a == C64::new(0.0, 0.0) {
                continue;
            }
            let phase = C64::from_polar(1.0, k as f64 * theta);
            let rad = radial.row(idx);
            for (j, o) in out.iter_mut().enumerate() {
                if rad[j] == 0.0 {
                    continue;
                }
                let neg = bin_frequency(j, m) < 0.0 && k % 2 != 0;
                let v = a * phase * rad[j] * scale;
                *o += if neg { -v } else { v };
            }
        }
        out
    }
}

/// `G[(k,q),(k',q')] = m^{-1} sum_j sgn(xi_j)^{k+k'} J^{k,q}(|xi_j|) J^{k',q'}(|xi_j|)`.
#[derive(Debug, Clone)]
pub struct GramCache {
    n: usize,
    values: Vec<f64>,
}

impl GramCache {
    pub fn build(spec: &BasisSpec) -> Self {
        let m = spec.m();
        let n = spec.len();
        let radial = spec.radial_table();
        let mut rows = Array2::<f64>::zeros((n, m));
        let mut signed = Array2::<f64>::zeros((n, m));
        for idx in 0..n {
            let r = radial.row(idx);
            for j in 0..m {
                rows[[idx, j]] = r[j];
                signed[[idx, j]] = if bin_frequency(j, m) < 0.0 { -r[j] } else { r[j] };
            }
        }
        let even = rows.dot(&rows.t());
        let odd = rows.dot(&signed.t());
        let omega = spec.omega();
        let mut values = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let g = if (omega[i].0 + omega[j].0) % 2 == 0 { even[[i, j]] } else { odd[[i, j]] };
                values[i * n + j] = g / m as f64;
            }
        }
        Self { n, values }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn max_asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.n {
            for j in i..self.n {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst
    }
}

/// Posterior angle probabilities, row-major `[line][bin]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Responsibilities {
    pub n_lines: usize,
    pub n_theta: usize,
    pub values: Vec<f64>,
}

impl Responsibilities {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_theta..(i + 1) * self.n_theta]
    }
}

/// Dataset-dependent state shared across EM iterations.
#[derive(Debug, Clone)]
pub struct EmProblem {
    spec: Arc<BasisSpec>,
    projector: Projector,
    radial: RadialTable,
    gram: GramCache,
    n_theta: usize,
    thetas: Vec<f64>,
    /// Hartley lines `[line][bin]`
    lines: Array2<f64>,
    line_norms: Vec<f64>,
    fourier_re: Array2<f64>,
    fourier_im: Array2<f64>,
    noise_sigma: f64,
    rms: f64,
}

impl EmProblem {
    pub fn new(dataset: &ProjectionDataset, spec: Arc<BasisSpec>, n_theta: usize) -> Result<Self> {
        if spec.m() != dataset.m {
            return Err(Error::InvalidArgument(format!(
                "basis grid m = {} but dataset m = {}",
                spec.m(),
                dataset.m
            )));
        }
        if n_theta == 0 || dataset.is_empty() {
            return Err(Error::InvalidArgument("empty angle grid or dataset".into()));
        }
        let m = dataset.m;
        let l = dataset.len();
        let lines = Array2::from_shape_vec((l, m), dataset.lines.clone()).expect("shape");
        let line_norms = lines.rows().into_iter().map(|r| r.dot(&r)).collect();
        let mut fourier_re = Array2::zeros((l, m));
        let mut fourier_im = Array2::zeros((l, m));
        for i in 0..l {
            for (j, z) in hartley_to_fourier(dataset.line(i)).into_iter().enumerate() {
                fourier_re[[i, j]] = z.re;
                fourier_im[[i, j]] = z.im;
            }
        }
        let rms = (dataset.lines.iter().map(|v| v * v).sum::<f64>() / dataset.lines.len() as f64).sqrt();
        Ok(Self {
            projector: Projector::new(spec.clone()),
            radial: spec.radial_table(),
            gram: GramCache::build(&spec),
            spec,
            n_theta,
            thetas: (0..n_theta).map(|j| 2.0 * PI * j as f64 / n_theta as f64).collect(),
            lines,
            line_norms,
            fourier_re,
            fourier_im,
            noise_sigma: dataset.sigma,
            rms,
        })
    }

    pub fn spec(&self) -> &Arc<BasisSpec> {
        &self.spec
    }

    pub fn n_theta(&self) -> usize {
        self.n_theta
    }

    pub fn n_lines(&self) -> usize {
        self.lines.nrows()
    }

    pub fn gram(&self) -> &GramCache {
        &self.gram
    }

    pub fn radial(&self) -> &RadialTable {
        &self.radial
    }

    /// Root-mean-square Hartley sample of the data.
    pub fn data_rms(&self) -> f64 {
        self.rms
    }

    /// `||y_i - H_j c||^2`, row-major `[line][bin]`.
    pub fn residuals(&self, a: &FbCoefficients) -> Vec<f64> {
        let c = a.to_hb();
        let m = self.spec.m();
        let t = self.projector.templates(c.values(), &self.thetas);
        let t = ArrayView2::from_shape((self.n_theta, m), &t).expect("shape");
        let t_norms: Vec<f64> = t.rows().into_iter().map(|r| r.dot(&r)).collect();
        let cross = self.lines.dot(&t.t());
        let mut out = Vec::with_capacity(self.n_lines() * self.n_theta);
        for (i, row) in cross.rows().into_iter().enumerate() {
            for (j, x) in row.iter().enumerate() {
                out.push((self.line_norms[i] - 2.0 * x + t_norms[j]).max(0.0));
            }
        }
        out
    }

    /// Responsibilities and the log marginal likelihood at `(a, p, sigma)`.
    pub fn e_step(&self, a: &FbCoefficients, p: &AnglePmf, sigma: f64) -> Result<(Responsibilities, f64)> {
        self.check_pmf(p)?;
        if !(sigma > 0.0) {
            return Err(Error::InvalidArgument(format!("sigma must be positive, got {sigma}")));
        }
        let res = self.residuals(a);
        Ok(posterior(&res, p.probs(), sigma))
    }

    pub fn log_marginal_likelihood(&self, a: &FbCoefficients, p: &AnglePmf, sigma: f64) -> Result<f64> {
        self.e_step(a, p, sigma).map(|(_, ll)| ll)
    }

    /// Hard assignment to the closest template, ties to the smallest bin.
    pub fn template_match(&self, a: &FbCoefficients) -> Vec<usize> {
        self.residuals(a)
            .chunks_exact(self.n_theta)
            .map(|row| {
                let mut best = 0;
                for (j, &v) in row.iter().enumerate() {
                    if v < row[best] {
                        best = j;
                    }
                }
                best
            })
            .collect()
    }

    fn check_pmf(&self, p: &AnglePmf) -> Result<()> {
        if p.len() != self.n_theta {
            return Err(Error::InvalidPmf(format!(
                "PMF has {} bins, EM grid has {}",
                p.len(),
                self.n_theta
            )));
        }
        Ok(())
    }

    /// M-step normal equations `A a = b` with
    /// `A = sum_j p_j H_j^H H_j = p_hat(k - k') G` and
    /// `b = L^{-1} sum_j H_j^H sum_i r_ij F_i`.
    pub fn build_system(&self, r: &Responsibilities, p: &AnglePmf) -> Result<(CMatrix, Vec<C64>)> {
        self.check_pmf(p)?;
        if r.n_theta != self.n_theta || r.n_lines != self.n_lines() {
            return Err(Error::InvalidArgument("responsibility shape does not match problem".into()));
        }
        let spec = &self.spec;
        let n = spec.len();
        let k_max = spec.k_max() as i64;
        let nt = self.n_theta;
        let omega = spec.omega();

        let p_hat: Vec<C64> = (-2 * k_max..=2 * k_max)
            .map(|d| {
                p.probs()
                    .iter()
                    .enumerate()
                    .map(|(j, &pj)| C64::from_polar(pj, -2.0 * PI * (d * j as i64) as f64 / nt as f64))
                    .sum()
            })
            .collect();
        let a = CMatrix::from_fn(n, |i, j| {
            let d = omega[i].0 - omega[j].0;
            p_hat[(d + 2 * k_max) as usize] * self.gram.get(i, j)
        });

        // W_j = sum_i r_ij F_i
        let rm = ArrayView2::from_shape((r.n_lines, nt), &r.values).expect("shape");
        let w_re = rm.t().dot(&self.fourier_re);
        let w_im = rm.t().dot(&self.fourier_im);
        let m = spec.m();
        let scale = 1.0 / ((m as f64).sqrt() * r.n_lines as f64);
        let mut b = vec![C64::new(0.0, 0.0); n];
        for k in -k_max..=k_max {
            let range = spec.k_range(k);
            if range.is_empty() {
                continue;
            }
            // V_k = sum_j e^{-i k theta_j} W_j
            let mut v = vec![C64::new(0.0, 0.0); m];
            for j in 0..nt {
                let ph = C64::from_polar(1.0, -(k as f64) * self.thetas[j]);
                for beta in 0..m {
                    v[beta] += ph * C64::new(w_re[[j, beta]], w_im[[j, beta]]);
                }
            }
            for idx in range {
                let rad = self.radial.row(idx);
                let mut acc = C64::new(0.0, 0.0);
                for beta in 0..m {
                    if rad[beta] == 0.0 {
                        continue;
                    }
                    let sgn = if bin_frequency(beta, m) < 0.0 && k % 2 != 0 { -1.0 } else { 1.0 };
                    acc += v[beta] * (sgn * rad[beta]);
                }
                b[idx] = acc * scale;
            }
        }
        Ok((a, b))
    }
}

/// Row-wise log-sum-exp posterior from squared residuals.
fn posterior(res: &[f64], p: &[f64], sigma: f64) -> (Responsibilities, f64) {
    let nt = p.len();
    let n_lines = res.len() / nt;
    let log_p: Vec<f64> = p.iter().map(|&v| if v > 0.0 { v.ln() } else { f64::NEG_INFINITY }).collect();
    let inv = 1.0 / (2.0 * sigma * sigma);
    let mut values = vec![0.0; res.len()];
    let lse: Vec<f64> = values
        .par_chunks_mut(nt)
        .zip(res.par_chunks(nt))
        .map(|(out, row)| {
            for j in 0..nt {
                out[j] = log_p[j] - row[j] * inv;
            }
            let mx = out.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut s = 0.0;
            for v in out.iter_mut() {
                *v = (*v - mx).exp();
                s += *v;
            }
            for v in out.iter_mut() {
                *v /= s;
            }
            mx + s.ln()
        })
        .collect();
    (
        Responsibilities {
            n_lines,
            n_theta: nt,
            values,
        },
        lse.iter().sum(),
    )
}

/// `p_j = L^{-1} sum_i r_ij`.
pub fn m_step_pmf(r: &Responsibilities) -> AnglePmf {
    let mut p = vec![0.0; r.n_theta];
    for row in r.values.chunks_exact(r.n_theta) {
        for (pj, v) in p.iter_mut().zip(row) {
            *pj += v;
        }
    }
    AnglePmf::from_weights(&p, 2.0 * PI).expect("responsibility rows are normalized")
}

/// Circular Gaussian smoothing of a PMF with standard deviation `width`
/// bins; `width = 0` returns it unchanged.
pub fn smooth_pmf(p: &AnglePmf, width: f64) -> AnglePmf {
    if width <= 0.0 {
        return p.clone();
    }
    let n = p.len();
    let half = ((4.0 * width).ceil() as usize).min(n / 2);
    let kernel: Vec<f64> = (0..=half).map(|d| (-0.5 * (d as f64 / width).powi(2)).exp()).collect();
    let probs = p.probs();
    let out: Vec<f64> = (0..n)
        .map(|i| {
            let mut acc = kernel[0] * probs[i];
            for (d, &w) in kernel.iter().enumerate().skip(1) {
                acc += w * (probs[(i + d) % n] + probs[(i + n - d % n) % n]);
            }
            acc
        })
        .collect();
    AnglePmf::with_span(
        {
            let s: f64 = out.iter().sum();
            out.iter().map(|v| v / s).collect()
        },
        p.span(),
    )
    .expect("smoothing preserves a PMF")
}

/// Initial-guess families.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitScheme {
    /// a few random Gaussian blobs inside the ball
    Blobs,
    /// i.i.d. uniform pixels inside the ball
    UniformMask,
}

/// Random initial image of the given family, fitted onto the basis.
pub fn random_init(spec: &Arc<BasisSpec>, op: &RenderOperator, scheme: InitScheme, rng: &mut impl Rng) -> HbCoefficients {
    let m = spec.m();
    let radius = m as f64 / 2.0;
    let img = match scheme {
        InitScheme::Blobs => {
            let blobs: Vec<(f64, f64, f64, f64)> = (0..rng.gen_range(3..=8))
                .map(|_| {
                    let rho = rng.gen_range(0.0..0.6) * radius;
                    let ang = rng.gen_range(0.0..2.0 * PI);
                    let w = rng.gen_range(0.05..0.2) * radius;
                    (rho * ang.cos(), rho * ang.sin(), w, rng.gen_range(0.2..1.0))
                })
                .collect();
            Image::from_fn(m, |x, y| {
                blobs
                    .iter()
                    .map(|&(x0, y0, w, v)| v * (-((x - x0).powi(2) + (y - y0).powi(2)) / (2.0 * w * w)).exp())
                    .sum()
            })
        }
        InitScheme::UniformMask => {
            let mut img = Image::from_fn(m, |_, _| rng.gen::<f64>());
            img.mask_ball();
            img
        }
    };
    let b = op.adjoint(&img);
    let x = crate::linalg::cg_real(|v| op.adjoint(&op.apply(v)), &b, 1e-8, 200);
    HbCoefficients::new(spec.clone(), x).expect("finite fit")
}

/// Options for [`em_run`].
#[derive(Debug, Clone)]
pub struct EmOptions {
    pub iters: usize,
    /// multiplier on the dataset noise level
    pub sigma_inflation: f64,
    /// explicit noise level, overriding the dataset's
    pub sigma: Option<f64>,
    /// lower bound on sigma as a fraction of the data RMS (clean data)
    pub sigma_floor: f64,
    /// optional schedule `sigma_t = max(sigma, start * rms * decay^t)`
    pub anneal: Option<(f64, f64)>,
    /// keep `p` at its initial value for this many iterations
    pub p_warmup: usize,
    /// Gaussian smoothing (bins) applied to each updated `p`; 0 disables
    pub p_smoothing: f64,
    pub pcg_tol: f64,
    pub pcg_max_iter: usize,
}

impl Default for EmOptions {
    fn default() -> Self {
        Self {
            iters: 50,
            sigma_inflation: 1.0,
            sigma: None,
            sigma_floor: 0.02,
            anneal: None,
            p_warmup: 0,
            p_smoothing: 0.0,
            pcg_tol: 1e-10,
            pcg_max_iter: 1000,
        }
    }
}

impl EmOptions {
    pub fn sigma_at(&self, problem: &EmProblem, t: usize) -> f64 {
        let base = self
            .sigma
            .unwrap_or(problem.noise_sigma * self.sigma_inflation)
            .max(self.sigma_floor * problem.rms);
        match self.anneal {
            Some((start, decay)) => base.max(start * problem.rms * decay.powi(t as i32)),
            None => base,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmIteration {
    pub iter: usize,
    pub sigma: f64,
    /// log marginal likelihood of the iterate entering this step
    pub log_likelihood: f64,
    pub pcg_iterations: usize,
    pub pcg_residual: f64,
    pub pcg_converged: bool,
    pub pcg_breakdown: bool,
}

#[derive(Debug, Clone)]
pub struct EmResult {
    pub a: FbCoefficients,
    pub p: AnglePmf,
    pub trace: Vec<EmIteration>,
    /// log likelihood of the returned iterate at the final sigma
    pub final_log_likelihood: f64,
}

impl EmResult {
    pub fn coefficients(&self) -> HbCoefficients {
        self.a.to_hb()
    }

    pub fn history_csv(&self) -> String {
        let mut s = String::from("iter,sigma,log_likelihood,pcg_iterations,pcg_residual,pcg_converged\n");
        for t in &self.trace {
            s.push_str(&format!(
                "{},{:.9e},{:.12e},{},{:.3e},{}\n",
                t.iter, t.sigma, t.log_likelihood, t.pcg_iterations, t.pcg_residual, t.pcg_converged
            ));
        }
        s
    }
}

/// Alternate E- and M-steps from `(init, p0)`.
pub fn em_run(problem: &EmProblem, init: &FbCoefficients, p0: &AnglePmf, opts: &EmOptions) -> Result<EmResult> {
    problem.check_pmf(p0)?;
    let mut a = init.clone();
    a.enforce_symmetry();
    let mut p = p0.clone();
    let mut trace = Vec::with_capacity(opts.iters);
    for t in 0..opts.iters {
        let sigma = opts.sigma_at(problem, t);
        let (r, ll) = problem.e_step(&a, &p, sigma)?;
        // the system needs the responsibility weights even while the prior is held
        let p_new = m_step_pmf(&r);
        let (mat, b) = problem.build_system(&r, &p_new)?;
        if t >= opts.p_warmup {
            p = smooth_pmf(&p_new, opts.p_smoothing);
        }
        let out = pcg_solve_from(&mat, &b, Some(a.values()), opts.pcg_tol, opts.pcg_max_iter);
        a = FbCoefficients::new(a.spec().clone(), out.x)?;
        a.enforce_symmetry();
        trace.push(EmIteration {
            iter: t,
            sigma,
            log_likelihood: ll,
            pcg_iterations: out.iterations,
            pcg_residual: out.relative_residual,
            pcg_converged: out.converged,
            pcg_breakdown: out.breakdown,
        });
    }
    let sigma = opts.sigma_at(problem, opts.iters);
    let final_log_likelihood = problem.log_marginal_likelihood(&a, &p, sigma)?;
    Ok(EmResult {
        a,
        p,
        trace,
        final_log_likelihood,
    })
}

/// Run `n_inits` random restarts (uniform initial PMF) and keep the one
/// with the highest final log likelihood. Restart `i` draws from RNG
/// stream `i` of `seed`.
pub fn em_best_of(
    problem: &EmProblem,
    scheme: InitScheme,
    n_inits: usize,
    seed: u64,
    opts: &EmOptions,
) -> Result<(EmResult, Vec<f64>)> {
    if n_inits == 0 {
        return Err(Error::InvalidArgument("need at least one initialization".into()));
    }
    let spec = problem.spec().clone();
    let op = RenderOperator::new(&spec, spec.m());
    let p0 = AnglePmf::uniform(problem.n_theta());
    let mut best: Option<EmResult> = None;
    let mut scores = Vec::with_capacity(n_inits);
    for i in 0..n_inits {
        let mut rng = stream_rng(seed, i as u64);
        let c0 = random_init(&spec, &op, scheme, &mut rng);
        let res = em_run(problem, &FbCoefficients::from_hb(&c0), &p0, opts)?;
        scores.push(res.final_log_likelihood);
        if best.as_ref().map_or(true, |b| res.final_log_likelihood > b.final_log_likelihood) {
            best = Some(res);
        }
    }
    Ok((best.expect("at least one run"), scores))
}

/// FB coefficients of a pixel image by least squares.
pub fn fb_from_image(spec: Arc<BasisSpec>, image: &Image) -> FbCoefficients {
    FbCoefficients::from_hb(&fit_image(spec, image, 300))
}
