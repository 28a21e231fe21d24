//! Truncated Hartley-Bessel (HB) basis.
//!
//! The Hartley transform of the image is expanded on
//! `u^{k,q}(xi, theta) = J^{k,q}(xi) cas(k theta)` with radial functions
//! `J^{k,q}(xi) = N_{k,q} J_|k|(R_{|k|,q} xi / s)` on the disk `xi <= s`.
//! Frequencies are in cycles per pixel and spatial radii in pixels.
//! The index set keeps `(k, q)` with `R_{|k|,q} <= 2 pi s R`.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::bessel::{bessel_j_all, bessel_jp, bessel_roots_below, BesselRootTable};
use crate::error::{Error, Result};
use crate::image::{center, Image};

/// `cas(x) = cos(x) + sin(x)`.
#[inline]
pub fn cas(x: f64) -> f64 {
    let (s, c) = x.sin_cos();
    c + s
}

/// Signed frequency (cycles/pixel) of discrete Hartley/Fourier bin `j` of an
/// `m`-point transform.
#[inline]
pub fn bin_frequency(j: usize, m: usize) -> f64 {
    if 2 * j < m {
        j as f64 / m as f64
    } else {
        (j as f64 - m as f64) / m as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BasisSpec {
    s: f64,
    radius: f64,
    m: usize,
    k_max: usize,
    /// `p_k` for `k = 0..=k_max`
    p_k: Vec<usize>,
    /// canonical ordering: k ascending from -k_max, then q ascending
    omega: Vec<(i64, usize)>,
    roots: Vec<f64>,
    norms: Vec<f64>,
    /// first omega index for each k, indexed by `k + k_max`
    offsets: Vec<usize>,
}

fn validate(s: f64, radius: f64, m: usize) -> Result<()> {
    if !(s > 0.0 && s <= 0.5) {
        return Err(Error::Config(format!("bandlimit s = {s} outside (0, 0.5]")));
    }
    if !(radius > 0.0 && radius <= m as f64 / 2.0) {
        return Err(Error::Config(format!(
            "radius R = {radius} outside (0, m/2 = {}]",
            m as f64 / 2.0
        )));
    }
    Ok(())
}

impl BasisSpec {
    /// Build the truncated index set for bandlimit `s`, concentration radius
    /// `radius` (pixels) and grid size `m`.
    pub fn new(s: f64, radius: f64, m: usize) -> Result<Self> {
        validate(s, radius, m)?;
        let bound = 2.0 * PI * s * radius;
        let mut per_k: Vec<Vec<f64>> = Vec::new();
        for k in 0.. {
            let roots = bessel_roots_below(k, bound);
            if roots.is_empty() {
                break;
            }
            per_k.push(roots);
        }
        Self::from_roots(s, radius, m, per_k)
    }

    /// Same as [`BasisSpec::new`] but reading roots from a precomputed table.
    pub fn from_table(s: f64, radius: f64, m: usize, table: &BesselRootTable) -> Result<Self> {
        validate(s, radius, m)?;
        let bound = 2.0 * PI * s * radius;
        let mut per_k = Vec::new();
        for k in 0..=table.k_max() {
            let roots: Vec<f64> = (1..=table.q_max())
                .map(|q| table.root(k, q))
                .take_while(|&r| r <= bound)
                .collect();
            if roots.is_empty() {
                break;
            }
            if roots.len() == table.q_max() {
                return Err(Error::Config(format!(
                    "root table too small for bound {bound:.3} at k = {k}"
                )));
            }
            per_k.push(roots);
        }
        if per_k.len() == table.k_max() + 1 && table.root(table.k_max(), 1) <= bound {
            return Err(Error::Config(format!(
                "root table stops at k = {} below bound {bound:.3}",
                table.k_max()
            )));
        }
        Self::from_roots(s, radius, m, per_k)
    }

    /// Table dimensions sufficient for `from_table` at these parameters.
    pub fn table_extent(s: f64, radius: f64) -> (usize, usize) {
        let bound = 2.0 * PI * s * radius;
        (bound.ceil() as usize + 1, (bound / PI).ceil() as usize + 2)
    }

    fn from_roots(s: f64, radius: f64, m: usize, per_k: Vec<Vec<f64>>) -> Result<Self> {
        if per_k.is_empty() {
            return Err(Error::Config(format!(
                "empty basis: 2*pi*s*R = {:.4} is below the first root of J_0",
                2.0 * PI * s * radius
            )));
        }
        let k_max = per_k.len() - 1;
        let p_k: Vec<usize> = per_k.iter().map(Vec::len).collect();
        let mut omega = Vec::new();
        let mut roots = Vec::new();
        let mut norms = Vec::new();
        let mut offsets = Vec::new();
        for k in -(k_max as i64)..=(k_max as i64) {
            offsets.push(omega.len());
            let ak = k.unsigned_abs() as usize;
            for (qi, &r) in per_k[ak].iter().enumerate() {
                let jk1 = bessel_j_all(ak + 1, r)[ak + 1].abs();
                omega.push((k, qi + 1));
                roots.push(r);
                norms.push(1.0 / (s * PI.sqrt() * jk1));
            }
        }
        Ok(Self {
            s,
            radius,
            m,
            k_max,
            p_k,
            omega,
            roots,
            norms,
            offsets,
        })
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn k_max(&self) -> usize {
        self.k_max
    }

    /// Number of radial indices kept for angular frequency `|k|`.
    pub fn p_k(&self, k: i64) -> usize {
        self.p_k
            .get(k.unsigned_abs() as usize)
            .copied()
            .unwrap_or(0)
    }

    pub fn len(&self) -> usize {
        self.omega.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omega.is_empty()
    }

    pub fn omega(&self) -> &[(i64, usize)] {
        &self.omega
    }

    pub fn root_at(&self, idx: usize) -> f64 {
        self.roots[idx]
    }

    pub fn norm_at(&self, idx: usize) -> f64 {
        self.norms[idx]
    }

    /// Position of `(k, q)` in the canonical ordering.
    pub fn index_of(&self, k: i64, q: usize) -> Option<usize> {
        if q == 0 || k.unsigned_abs() as usize > self.k_max || q > self.p_k(k) {
            return None;
        }
        Some(self.offsets[(k + self.k_max as i64) as usize] + q - 1)
    }

    /// Range of omega indices with angular frequency `k`.
    pub fn k_range(&self, k: i64) -> std::ops::Range<usize> {
        match self.index_of(k, 1) {
            Some(start) => start..start + self.p_k(k),
            None => 0..0,
        }
    }

    /// `J^{k,q}(xi)` for the omega entry `idx`, `xi >= 0`.
    pub fn eval_radial_at(&self, idx: usize, xi: f64) -> f64 {
        let xi = xi.abs();
        if xi > self.s {
            return 0.0;
        }
        let k = self.omega[idx].0.unsigned_abs() as usize;
        self.norms[idx] * bessel_j_all(k, self.roots[idx] * xi / self.s)[k]
    }

    /// `J^{k,q}(xi)`; `None` if `(k, q)` is not in omega.
    pub fn eval_radial(&self, k: i64, q: usize, xi: f64) -> Option<f64> {
        self.index_of(k, q).map(|i| self.eval_radial_at(i, xi))
    }

    /// Radial functions sampled on the `m`-bin signed Hartley grid, laid out
    /// as `[omega index][bin]`.
    pub fn radial_table(&self) -> RadialTable {
        RadialTable::new(self)
    }
}

/// Precomputed `J^{k,q}(|xi_j|)` on the discrete frequency grid of a spec.
#[derive(Debug, Clone)]
pub struct RadialTable {
    m: usize,
    values: Vec<f64>,
}

impl RadialTable {
    fn new(spec: &BasisSpec) -> Self {
        let m = spec.m;
        let mut values = vec![0.0; spec.len() * m];
        for idx in 0..spec.len() {
            for j in 0..m {
                values[idx * m + j] = spec.eval_radial_at(idx, bin_frequency(j, m));
            }
        }
        Self { m, values }
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn row(&self, idx: usize) -> &[f64] {
        &self.values[idx * self.m..(idx + 1) * self.m]
    }
}

/// HB expansion coefficients in the canonical omega ordering.
#[derive(Debug, Clone, PartialEq)]
pub struct HbCoefficients {
    spec: Arc<BasisSpec>,
    values: Vec<f64>,
}

impl HbCoefficients {
    pub fn new(spec: Arc<BasisSpec>, values: Vec<f64>) -> Result<Self> {
        if values.len() != spec.len() {
            return Err(Error::InvalidArgument(format!(
                "{} coefficients for a basis of size {}",
                values.len(),
                spec.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite coefficient".into()));
        }
        Ok(Self { spec, values })
    }

    pub fn zeros(spec: Arc<BasisSpec>) -> Self {
        let n = spec.len();
        Self {
            spec,
            values: vec![0.0; n],
        }
    }

    pub fn spec(&self) -> &Arc<BasisSpec> {
        &self.spec
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, k: i64, q: usize) -> Option<f64> {
        self.spec.index_of(k, q).map(|i| self.values[i])
    }
}

/// Sign `(-1)^{floor(|k|/2)}` picked up by the angular integral of the
/// inverse 2D Hartley transform of `cas(k theta)`.
#[inline]
fn angular_sign(k: i64) -> f64 {
    if (k.unsigned_abs() / 2) % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// `J_k(beta) / (beta^2 - R^2)` with the removable singularity at `beta = R`
/// resolved by expanding around the root.
#[inline]
fn bessel_over_gap(k: usize, jk_beta: f64, beta: f64, root: f64) -> f64 {
    let gap = beta * beta - root * root;
    if gap.abs() < 1e-8 {
        let d = beta - root;
        let jp = bessel_jp(k, root);
        // J_k(R + d) ~ J'(R) d (1 - d / 2R) since J''(R) = -J'(R)/R at a root
        jp * (1.0 - d / (2.0 * root)) / (2.0 * root + d)
    } else {
        jk_beta / gap
    }
}

/// Values of every spatial basis function `H(u^{k,q})` at one point
/// (`r` in pixels, angle `phi`), written into `out` in omega order.
pub fn spatial_basis_at(spec: &BasisSpec, r: f64, phi: f64, out: &mut [f64]) {
    let s = spec.s;
    let beta = 2.0 * PI * s * r;
    let jk = bessel_j_all(spec.k_max, beta);
    let pref = 2.0 * PI.sqrt() * s;
    for (idx, &(k, q)) in spec.omega.iter().enumerate() {
        let ak = k.unsigned_abs() as usize;
        let root = spec.roots[idx];
        let sign_q = if q % 2 == 0 { 1.0 } else { -1.0 };
        let radial = pref * sign_q * angular_sign(k) * root * bessel_over_gap(ak, jk[ak], beta, root);
        out[idx] = radial * cas(k as f64 * phi);
    }
}

fn pixel_polar(m: usize, iy: usize, ix: usize) -> (f64, f64, bool) {
    let c = center(m) as f64;
    let (x, y) = (ix as f64 - c, iy as f64 - c);
    let r = (x * x + y * y).sqrt();
    (r, y.atan2(x), r <= m as f64 / 2.0)
}

/// Render HB coefficients on an `m x m` grid; pixels outside the unit ball
/// are zero.
pub fn render_spatial(c: &HbCoefficients, m: usize) -> Image {
    let spec = c.spec();
    let mut img = Image::zeros(m);
    let mut buf = vec![0.0; spec.len()];
    for iy in 0..m {
        for ix in 0..m {
            let (r, phi, inside) = pixel_polar(m, iy, ix);
            if !inside {
                continue;
            }
            spatial_basis_at(spec, r, phi, &mut buf);
            let v: f64 = buf.iter().zip(c.values()).map(|(b, c)| b * c).sum();
            img.set(iy, ix, v);
        }
    }
    img
}

/// Dense spatial synthesis matrix (pixels inside the ball x omega), for
/// repeated renders and their adjoints.
#[derive(Debug, Clone)]
pub struct RenderOperator {
    m: usize,
    n: usize,
    pixels: Vec<usize>,
    rows: Vec<f64>,
}

impl RenderOperator {
    pub fn new(spec: &BasisSpec, m: usize) -> Self {
        let n = spec.len();
        let mut pixels = Vec::new();
        let mut rows = Vec::new();
        let mut buf = vec![0.0; n];
        for iy in 0..m {
            for ix in 0..m {
                let (r, phi, inside) = pixel_polar(m, iy, ix);
                if !inside {
                    continue;
                }
                spatial_basis_at(spec, r, phi, &mut buf);
                pixels.push(iy * m + ix);
                rows.extend_from_slice(&buf);
            }
        }
        Self { m, n, pixels, rows }
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn apply(&self, c: &[f64]) -> Image {
        let mut img = Image::zeros(self.m);
        let data = img.data_mut();
        for (p, row) in self.pixels.iter().zip(self.rows.chunks_exact(self.n)) {
            data[*p] = row.iter().zip(c).map(|(a, b)| a * b).sum();
        }
        img
    }

    /// Adjoint: coefficient-space gradient of `<img, render(c)>`.
    pub fn adjoint(&self, img: &Image) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        let data = img.data();
        for (p, row) in self.pixels.iter().zip(self.rows.chunks_exact(self.n)) {
            let w = data[*p];
            if w != 0.0 {
                for (o, a) in out.iter_mut().zip(row) {
                    *o += w * a;
                }
            }
        }
        out
    }
}

/// Least-squares HB coefficients of a pixel image (conjugate gradient on the
/// normal equations of the spatial synthesis operator).
pub fn fit_image(spec: Arc<BasisSpec>, image: &Image, iters: usize) -> HbCoefficients {
    let op = RenderOperator::new(&spec, image.size());
    let b = op.adjoint(image);
    let apply_normal = |x: &[f64]| op.adjoint(&op.apply(x));
    let x = crate::linalg::cg_real(apply_normal, &b, 1e-10, iters);
    HbCoefficients::new(spec, x).expect("finite fit")
}
