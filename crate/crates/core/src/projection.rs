//! Forward model: Hartley transforms of 1D lines, central-slice projection of
//! HB coefficients, pixel-domain Radon transform, noise calibration and
//! synthetic dataset generation.
//!
//! Hartley-domain lines use the natural DFT bin order: bin `j` holds signed
//! frequency [`bin_frequency`]`(j, m)`. Spatial lines hold line integrals at
//! offsets `t_n = n - m/2` pixels.

use std::f64::consts::PI;
use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::basis::{bin_frequency, cas, BasisSpec, HbCoefficients, RadialTable};
use crate::error::{Error, Result};
use crate::image::{center, Image};
use crate::io::{put_f64, put_f64s, put_u32, read_file, write_atomic, Reader};

/// Unitary discrete Hartley transform, `Re F(x) - Im F(x)` with a `1/sqrt(m)`
/// scaled DFT. Self-inverse.
pub fn hartley_1d(x: &[f64]) -> Vec<f64> {
    let m = x.len();
    if m == 0 {
        return Vec::new();
    }
    let fft = FftPlanner::<f64>::new().plan_fft_forward(m);
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft.process(&mut buf);
    let scale = 1.0 / (m as f64).sqrt();
    buf.iter().map(|z| (z.re - z.im) * scale).collect()
}

/// Unitary DFT of a real line (bin order as in [`hartley_1d`]).
pub fn fourier_1d(x: &[f64]) -> Vec<Complex64> {
    let m = x.len();
    let fft = FftPlanner::<f64>::new().plan_fft_forward(m);
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft.process(&mut buf);
    let scale = 1.0 / (m as f64).sqrt();
    buf.iter_mut().for_each(|z| *z *= scale);
    buf
}

/// Hartley spectrum of a real signal converted to its Fourier spectrum.
pub fn hartley_to_fourier(h: &[f64]) -> Vec<Complex64> {
    let m = h.len();
    (0..m)
        .map(|j| {
            let a = h[j];
            let b = h[(m - j) % m];
            Complex64::new(0.5 * (a + b), 0.5 * (b - a))
        })
        .collect()
}

/// Move sample `t = 0` (index `m/2`) to index 0.
pub fn ifftshift(x: &[f64]) -> Vec<f64> {
    let m = x.len();
    let c = center(m);
    (0..m).map(|i| x[(i + c) % m]).collect()
}

/// Inverse of [`ifftshift`].
pub fn fftshift(x: &[f64]) -> Vec<f64> {
    let m = x.len();
    let c = center(m);
    (0..m).map(|i| x[(i + m - c) % m]).collect()
}

/// Hartley transform of a spatial line referenced to its center sample.
pub fn spatial_to_hartley(line: &[f64]) -> Vec<f64> {
    hartley_1d(&ifftshift(line))
}

/// Inverse of [`spatial_to_hartley`].
pub fn hartley_to_spatial(h: &[f64]) -> Vec<f64> {
    fftshift(&hartley_1d(h))
}

/// Hartley-domain image of reversing a line about `t = 0`: `y[j] -> y[-j]`.
pub fn hartley_flip(h: &[f64]) -> Vec<f64> {
    let m = h.len();
    (0..m).map(|j| h[(m - j) % m]).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LineDomain {
    Spatial,
    Hartley,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionLine {
    pub samples: Vec<f64>,
    pub domain: LineDomain,
}

/// Probability mass over `n` equal angle bins covering `[0, span)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AnglePmf {
    probs: Vec<f64>,
    span: f64,
}

impl AnglePmf {
    /// PMF on `[0, 2 pi)`.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        Self::with_span(probs, 2.0 * PI)
    }

    pub fn with_span(probs: Vec<f64>, span: f64) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidPmf("empty".into()));
        }
        if probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::InvalidPmf("negative or non-finite entry".into()));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidPmf(format!("sums to {total}")));
        }
        Ok(Self { probs, span })
    }

    /// Normalize nonnegative weights.
    pub fn from_weights(weights: &[f64], span: f64) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::InvalidPmf("weights sum to zero".into()));
        }
        Self::with_span(weights.iter().map(|w| w / total).collect(), span)
    }

    pub fn uniform(n: usize) -> Self {
        Self {
            probs: vec![1.0 / n as f64; n],
            span: 2.0 * PI,
        }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn span(&self) -> f64 {
        self.span
    }

    pub fn bin_center(&self, i: usize) -> f64 {
        self.span * i as f64 / self.probs.len() as f64
    }

    /// Inverse-CDF draw of a bin index.
    pub fn sample_index(&self, rng: &mut impl Rng) -> usize {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for (i, p) in self.probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return i;
            }
        }
        self.probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
    }

    /// Mass of a `[0, pi)` PMF with flip augmentation, redistributed onto
    /// `n` bins over `[0, 2 pi)` (linear split for off-grid centers).
    pub fn to_full_circle(&self, n: usize) -> AnglePmf {
        let mut out = vec![0.0; n];
        let mut deposit = |theta: f64, w: f64| {
            let pos = theta.rem_euclid(2.0 * PI) / (2.0 * PI) * n as f64;
            let lo = pos.floor();
            let frac = pos - lo;
            let lo = lo as usize % n;
            out[lo] += w * (1.0 - frac);
            out[(lo + 1) % n] += w * frac;
        };
        let flipped = (self.span - PI).abs() < 1e-12;
        for (i, &p) in self.probs.iter().enumerate() {
            let theta = self.bin_center(i);
            if flipped {
                deposit(theta, 0.5 * p);
                deposit(theta + PI, 0.5 * p);
            } else {
                deposit(theta, p);
            }
        }
        AnglePmf {
            probs: out,
            span: 2.0 * PI,
        }
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut s = String::from("bin,theta,prob\n");
        for (i, p) in self.probs.iter().enumerate() {
            s.push_str(&format!("{i},{:.17e},{:.17e}\n", self.bin_center(i), p));
        }
        write_atomic(path, s.as_bytes())
    }

    /// Read a PMF CSV: either `bin,theta,prob` rows or one probability per
    /// line. Span defaults to `2 pi`.
    pub fn read_csv(path: &Path, span: f64) -> Result<Self> {
        let rows = crate::io::read_csv_rows(path)?;
        let weights: Vec<f64> = rows
            .iter()
            .map(|r| *r.last().expect("non-empty row"))
            .collect();
        Self::from_weights(&weights, span)
    }
}

/// Precomputed HB projection operator on a `m`-bin Hartley grid.
///
/// `project(c, theta)[j] = m^{-1/2} sum_{k,q} c_{k,q} J^{k,q}(|xi_j|) cas(k theta_j)`
/// with `theta_j = theta` for `xi_j >= 0` and `theta + pi` otherwise. The
/// `m^{-1/2}` factor matches the unitary DHT of unit-spaced line samples.
#[derive(Debug, Clone)]
pub struct Projector {
    spec: Arc<BasisSpec>,
    radial: RadialTable,
    m: usize,
    /// bins with a nonzero radial value
    active: Vec<usize>,
    negative: Vec<bool>,
    scale: f64,
}

impl Projector {
    pub fn new(spec: Arc<BasisSpec>) -> Self {
        let m = spec.m();
        let radial = spec.radial_table();
        let active: Vec<usize> = (0..m)
            .filter(|&j| bin_frequency(j, m).abs() <= spec.s())
            .collect();
        let negative = (0..m).map(|j| bin_frequency(j, m) < 0.0).collect();
        Self {
            spec,
            radial,
            m,
            active,
            negative,
            scale: 1.0 / (m as f64).sqrt(),
        }
    }

    pub fn spec(&self) -> &Arc<BasisSpec> {
        &self.spec
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn active_bins(&self) -> &[usize] {
        &self.active
    }

    /// Per-k radial profiles `f_k(xi_j) = m^{-1/2} sum_q c_{k,q} J^{k,q}(|xi_j|)`
    /// laid out `[k + k_max][bin]`.
    pub fn radial_profiles(&self, c: &[f64]) -> Vec<f64> {
        let k_max = self.spec.k_max() as i64;
        let m = self.m;
        let mut f = vec![0.0; (2 * k_max as usize + 1) * m];
        for k in -k_max..=k_max {
            let row = &mut f[(k + k_max) as usize * m..(k + k_max + 1) as usize * m];
            for idx in self.spec.k_range(k) {
                let ck = c[idx] * self.scale;
                if ck == 0.0 {
                    continue;
                }
                let rad = self.radial.row(idx);
                for &j in &self.active {
                    row[j] += ck * rad[j];
                }
            }
        }
        f
    }

    /// Hartley-domain line of `c` at angle `theta`, from precomputed profiles.
    pub fn project_profiles(&self, profiles: &[f64], theta: f64, out: &mut [f64]) {
        let k_max = self.spec.k_max() as i64;
        let m = self.m;
        out.iter_mut().for_each(|v| *v = 0.0);
        for k in -k_max..=k_max {
            let row = &profiles[(k + k_max) as usize * m..(k + k_max + 1) as usize * m];
            let w_pos = cas(k as f64 * theta);
            let w_neg = if k % 2 == 0 { w_pos } else { -w_pos };
            for &j in &self.active {
                out[j] += row[j] * if self.negative[j] { w_neg } else { w_pos };
            }
        }
    }

    pub fn project(&self, c: &HbCoefficients, theta: f64) -> ProjectionLine {
        let profiles = self.radial_profiles(c.values());
        let mut out = vec![0.0; self.m];
        self.project_profiles(&profiles, theta, &mut out);
        ProjectionLine {
            samples: out,
            domain: LineDomain::Hartley,
        }
    }

    /// Lines for every angle in `thetas`, row-major `[angle][bin]`.
    pub fn templates(&self, c: &[f64], thetas: &[f64]) -> Vec<f64> {
        let profiles = self.radial_profiles(c);
        let m = self.m;
        let mut out = vec![0.0; thetas.len() * m];
        out.par_chunks_mut(m)
            .zip(thetas.par_iter())
            .for_each(|(row, &th)| self.project_profiles(&profiles, th, row));
        out
    }

    /// `trace(sum_i H_{theta_i}^T H_{theta_i})`.
    pub fn normal_trace(&self, thetas: &[f64]) -> f64 {
        let k_max = self.spec.k_max() as i64;
        let mut total = 0.0;
        for k in -k_max..=k_max {
            let ang: f64 = thetas.iter().map(|&th| cas(k as f64 * th).powi(2)).sum();
            for idx in self.spec.k_range(k) {
                let rad = self.radial.row(idx);
                let sq: f64 = self.active.iter().map(|&j| rad[j] * rad[j]).sum();
                total += ang * sq * self.scale * self.scale;
            }
        }
        total
    }

    /// Adjoint of [`Projector::templates`]: `sum_i H_{theta_i}^T g_i`.
    pub fn templates_adjoint(&self, grads: &[f64], thetas: &[f64]) -> Vec<f64> {
        let k_max = self.spec.k_max() as i64;
        let m = self.m;
        let nk = 2 * k_max as usize + 1;
        // accumulate per-k profile gradients
        let mut gf = vec![0.0; nk * m];
        for (g, &th) in grads.chunks_exact(m).zip(thetas) {
            for k in -k_max..=k_max {
                let w_pos = cas(k as f64 * th);
                let w_neg = if k % 2 == 0 { w_pos } else { -w_pos };
                let row = &mut gf[(k + k_max) as usize * m..(k + k_max + 1) as usize * m];
                for &j in &self.active {
                    row[j] += g[j] * if self.negative[j] { w_neg } else { w_pos };
                }
            }
        }
        let mut out = vec![0.0; self.spec.len()];
        for k in -k_max..=k_max {
            let row = &gf[(k + k_max) as usize * m..(k + k_max + 1) as usize * m];
            for idx in self.spec.k_range(k) {
                let rad = self.radial.row(idx);
                let mut acc = 0.0;
                for &j in &self.active {
                    acc += row[j] * rad[j];
                }
                out[idx] = acc * self.scale;
            }
        }
        out
    }
}

/// Convenience wrapper around [`Projector::project`].
pub fn project_hb(c: &HbCoefficients, theta: f64) -> ProjectionLine {
    Projector::new(c.spec().clone()).project(c, theta)
}

/// Parallel-beam line integrals of a pixel image at `m` offsets
/// `t_n = n - m/2`, integrating along the beam with unit steps and bilinear
/// interpolation. Beam normal makes angle `theta` with the x axis.
pub fn radon_pixel(image: &Image, theta: f64, m: usize) -> ProjectionLine {
    let (s, c) = theta.sin_cos();
    let ct = center(m) as f64;
    let reach = (image.size() as f64 / 2.0 * std::f64::consts::SQRT_2).ceil() as i64 + 1;
    let samples = (0..m)
        .map(|n| {
            let t = n as f64 - ct;
            let mut acc = 0.0;
            for step in -reach..=reach {
                let y = step as f64;
                acc += image.sample(t * c - y * s, t * s + y * c);
            }
            acc
        })
        .collect();
    ProjectionLine {
        samples,
        domain: LineDomain::Spatial,
    }
}

/// Line integrals of the band-limited (Whittaker-Shannon) interpolant of a
/// pixel image, computed on the Fourier slice: bin `j` of the line's Hartley
/// transform is `m^{-1/2} sum_p I(p) cas(2 pi xi_j <p, (cos theta, sin theta)>)`.
/// Exact for images sampled above the Nyquist rate, where bilinear
/// interpolation attenuates high frequencies on off-axis angles.
pub fn radon_bandlimited(image: &Image, theta: f64, m: usize) -> ProjectionLine {
    let (s, c) = theta.sin_cos();
    let size = image.size();
    let ci = center(size) as f64;
    let pts: Vec<(f64, f64)> = image
        .data()
        .iter()
        .enumerate()
        .filter(|(_, v)| **v != 0.0)
        .map(|(i, v)| {
            let (iy, ix) = (i / size, i % size);
            (*v, (ix as f64 - ci) * c + (iy as f64 - ci) * s)
        })
        .collect();
    let scale = 1.0 / (m as f64).sqrt();
    let h: Vec<f64> = (0..m)
        .into_par_iter()
        .map(|j| {
            let w = 2.0 * PI * bin_frequency(j, m);
            pts.iter().map(|(v, t)| v * cas(w * t)).sum::<f64>() * scale
        })
        .collect();
    ProjectionLine {
        samples: hartley_to_spatial(&h),
        domain: LineDomain::Spatial,
    }
}

/// Random HB coefficients `U(-1, 1) exp(-taper (R_{k,q} / 2 pi s R)^2)`.
/// Large roots belong to functions concentrated near the rim of the support
/// disk, so the taper keeps the rendered image inside the ball.
pub fn random_tapered_coefficients(spec: &Arc<BasisSpec>, taper: f64, rng: &mut impl Rng) -> HbCoefficients {
    let bound = 2.0 * PI * spec.s() * spec.radius();
    let values = (0..spec.len())
        .map(|i| rng.gen_range(-1.0..1.0) * (-taper * (spec.root_at(i) / bound).powi(2)).exp())
        .collect();
    HbCoefficients::new(spec.clone(), values).expect("finite coefficients")
}

/// Noise level giving `Var(clean) / sigma^2 = target_snr`, pooling every
/// sample of every clean line.
pub fn calibrate_sigma(clean_lines: &[Vec<f64>], target_snr: f64) -> Result<f64> {
    if !(target_snr > 0.0) {
        return Err(Error::InvalidArgument(format!("SNR must be positive, got {target_snr}")));
    }
    let n: usize = clean_lines.iter().map(Vec::len).sum();
    if n == 0 {
        return Err(Error::InvalidArgument("no clean samples".into()));
    }
    let mean = clean_lines.iter().flatten().sum::<f64>() / n as f64;
    let var = clean_lines
        .iter()
        .flatten()
        .map(|v| (v - mean).powi(2))
        .sum::<f64>()
        / n as f64;
    if var == 0.0 {
        return Err(Error::InvalidArgument("clean data has zero variance".into()));
    }
    if target_snr.is_infinite() {
        return Ok(0.0);
    }
    Ok((var / target_snr).sqrt())
}

/// RNG stream for an independent unit of work, stable across thread counts.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

const DATASET_MAGIC: &[u8; 4] = b"UVTD";
const DATASET_VERSION: u32 = 1;
const FLAG_FLIPPED: u32 = 1;
const FLAG_ANGLES: u32 = 2;

/// Hartley-domain projection lines with their noise level.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionDataset {
    pub m: usize,
    /// row-major `[line][bin]`
    pub lines: Vec<f64>,
    pub sigma: f64,
    pub n_theta_fine: usize,
    /// hidden ground-truth angles (radians), evaluation only
    pub true_angles: Option<Vec<f64>>,
    pub flip_augmented: bool,
}

impl ProjectionDataset {
    pub fn len(&self) -> usize {
        self.lines.len() / self.m
    }

    pub fn is_empty(&self) -> bool {
        self.lines.is_empty()
    }

    pub fn line(&self, i: usize) -> &[f64] {
        &self.lines[i * self.m..(i + 1) * self.m]
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(32 + 8 * self.lines.len());
        buf.extend_from_slice(DATASET_MAGIC);
        put_u32(&mut buf, DATASET_VERSION);
        put_u32(&mut buf, self.m as u32);
        put_u32(&mut buf, self.len() as u32);
        put_f64(&mut buf, self.sigma);
        let mut flags = 0;
        if self.flip_augmented {
            flags |= FLAG_FLIPPED;
        }
        if self.true_angles.is_some() {
            flags |= FLAG_ANGLES;
        }
        put_u32(&mut buf, flags);
        put_u32(&mut buf, self.n_theta_fine as u32);
        put_f64s(&mut buf, &self.lines);
        if let Some(a) = &self.true_angles {
            put_f64s(&mut buf, a);
        }
        buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        r.magic(DATASET_MAGIC)?;
        r.version(DATASET_VERSION)?;
        let m = r.u32()? as usize;
        let l = r.u32()? as usize;
        let sigma = r.f64()?;
        let flags = r.u32()?;
        let n_theta_fine = r.u32()? as usize;
        let lines = r.f64s(m * l)?;
        let true_angles = if flags & FLAG_ANGLES != 0 {
            Some(r.f64s(l)?)
        } else {
            None
        };
        if r.remaining() != 0 {
            return Err(Error::Format("trailing bytes in dataset".into()));
        }
        Ok(Self {
            m,
            lines,
            sigma,
            n_theta_fine,
            true_angles,
            flip_augmented: flags & FLAG_FLIPPED != 0,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&read_file(path)?)
    }

    /// CSV of one line: `bin,frequency,hartley,spatial`.
    pub fn line_csv(&self, i: usize) -> String {
        let h = self.line(i);
        let sp = hartley_to_spatial(h);
        let mut s = String::from("bin,frequency,hartley,spatial\n");
        for j in 0..self.m {
            s.push_str(&format!(
                "{j},{:.6},{:.17e},{:.17e}\n",
                bin_frequency(j, self.m),
                h[j],
                sp[j]
            ));
        }
        s
    }
}

/// Options for [`synthesize_dataset`].
#[derive(Debug, Clone)]
pub struct SynthOptions {
    /// number of draws before flip augmentation
    pub lines: usize,
    /// `None` or infinite means clean
    pub snr: Option<f64>,
    pub seed: u64,
    /// append the `theta + pi` companion of each draw
    pub flip: bool,
}

/// Draw angles from `pmf`, emit clean Hartley lines, optionally append the
/// flipped companions, then add white Gaussian noise calibrated to `snr` on
/// the un-augmented clean spatial lines.
pub fn synthesize_dataset(
    c: &HbCoefficients,
    pmf: &AnglePmf,
    opts: &SynthOptions,
) -> Result<ProjectionDataset> {
    if opts.lines == 0 {
        return Err(Error::InvalidArgument("need at least one line".into()));
    }
    let projector = Projector::new(c.spec().clone());
    let m = projector.m();
    let mut angle_rng = stream_rng(opts.seed, 0);
    let mut angles: Vec<f64> = (0..opts.lines)
        .map(|_| pmf.bin_center(pmf.sample_index(&mut angle_rng)))
        .collect();
    let mut lines = projector.templates(c.values(), &angles);

    let sigma = match opts.snr {
        Some(snr) if snr.is_finite() => {
            let spatial: Vec<Vec<f64>> = lines.chunks_exact(m).map(hartley_to_spatial).collect();
            calibrate_sigma(&spatial, snr)?
        }
        _ => 0.0,
    };

    if opts.flip {
        let flipped: Vec<f64> = lines.chunks_exact(m).flat_map(hartley_flip).collect();
        // interleave so that line 2i+1 is the companion of line 2i
        let mut inter = Vec::with_capacity(2 * lines.len());
        for (a, b) in lines.chunks_exact(m).zip(flipped.chunks_exact(m)) {
            inter.extend_from_slice(a);
            inter.extend_from_slice(b);
        }
        lines = inter;
        angles = angles.iter().flat_map(|&t| [t, (t + PI) % (2.0 * PI)]).collect();
    }

    if sigma > 0.0 {
        lines
            .par_chunks_mut(m)
            .enumerate()
            .for_each(|(i, row)| {
                let mut rng = stream_rng(opts.seed, 1 + i as u64);
                for v in row {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    *v += sigma * z;
                }
            });
    }

    Ok(ProjectionDataset {
        m,
        lines,
        sigma,
        n_theta_fine: pmf.len(),
        true_angles: Some(angles),
        flip_augmented: opts.flip,
    })
}
