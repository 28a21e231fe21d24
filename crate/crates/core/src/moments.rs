//! Helgason-Ludwig consistency: geometric image moments against moments of
//! the projections, plus the identifiability determinant and the
//! unidentifiable angle set.
//!
//! Coordinates are the unit-ball frame: pixel `(ix, iy)` sits at
//! `((ix - m/2) / (m/2), (iy - m/2) / (m/2))` and spatial line sample `n` at
//! offset `t_n = (n - m/2) / (m/2)`.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::image::{center, Image};

/// Geometric moments `v_{i,k} = int x^i y^k f` for `i + k <= d_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentSet {
    pub d_max: usize,
    values: BTreeMap<(usize, usize), f64>,
}

impl MomentSet {
    pub fn from_values(d_max: usize, values: impl IntoIterator<Item = ((usize, usize), f64)>) -> Self {
        Self {
            d_max,
            values: values.into_iter().collect(),
        }
    }

    /// `v_{i,k}`, zero when absent.
    pub fn get(&self, i: usize, k: usize) -> f64 {
        self.values.get(&(i, k)).copied().unwrap_or(0.0)
    }

    pub fn mass(&self) -> f64 {
        self.get(0, 0)
    }
}

fn unit_coords(m: usize) -> (Vec<f64>, f64) {
    let h = m as f64 / 2.0;
    let c = center(m) as f64;
    ((0..m).map(|i| (i as f64 - c) / h).collect(), 1.0 / h)
}

/// Midpoint-rule moments on the pixel lattice mapped to the unit ball.
pub fn geometric_moments(image: &Image, d_max: usize) -> MomentSet {
    let m = image.size();
    let (coords, step) = unit_coords(m);
    let area = step * step;
    let mut values = BTreeMap::new();
    for d in 0..=d_max {
        for i in 0..=d {
            let k = d - i;
            let mut acc = 0.0;
            for (iy, &y) in coords.iter().enumerate() {
                let yk = y.powi(k as i32);
                for (ix, &x) in coords.iter().enumerate() {
                    acc += x.powi(i as i32) * yk * image.get(iy, ix);
                }
            }
            values.insert((i, k), acc * area);
        }
    }
    MomentSet { d_max, values }
}

/// `mu_d = sum_n t_n^d line_n dt` for a spatial line whose samples are
/// line integrals in unit-ball length units.
pub fn projection_moment(line: &[f64], d: usize) -> f64 {
    let (t, dt) = unit_coords(line.len());
    t.iter().zip(line).map(|(t, v)| t.powi(d as i32) * v).sum::<f64>() * dt
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// `Q_d(theta) = sum_r C(d, r) v_{r, d-r} cos^r sin^(d-r)`.
pub fn hl_polynomial(v: &MomentSet, d: usize, theta: f64) -> f64 {
    let (s, c) = theta.sin_cos();
    (0..=d)
        .map(|r| binomial(d, r) * v.get(r, d - r) * c.powi(r as i32) * s.powi((d - r) as i32))
        .sum()
}

/// Pixel-driven projection: each pixel's mass is split linearly between the
/// two offset samples around `x cos theta + y sin theta`. Values are line
/// integrals in unit-ball length units, so zeroth and first moments are
/// preserved exactly.
pub fn project_pixels(image: &Image, theta: f64) -> Vec<f64> {
    let m = image.size();
    let (coords, step) = unit_coords(m);
    let (s, c) = theta.sin_cos();
    let ct = center(m) as f64;
    let mut out = vec![0.0; m];
    for (iy, &y) in coords.iter().enumerate() {
        for (ix, &x) in coords.iter().enumerate() {
            let v = image.get(iy, ix);
            if v == 0.0 {
                continue;
            }
            let pos = (x * c + y * s) / step + ct;
            let lo = pos.floor();
            let frac = pos - lo;
            let lo = lo as i64;
            // mass per unit offset: pixel area / dt
            let w = v * step;
            for (idx, wt) in [(lo, 1.0 - frac), (lo + 1, frac)] {
                if (0..m as i64).contains(&idx) {
                    out[idx as usize] += w * wt;
                }
            }
        }
    }
    out
}

/// Per-degree outcome of [`hl_check`].
#[derive(Debug, Clone, PartialEq)]
pub struct HlDegree {
    pub d: usize,
    /// `max_theta |Q_d(theta) - mu_d(theta)|`
    pub max_abs: f64,
    /// `max_abs / int |x|^d |f|` (zero for a zero image)
    pub max_rel: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HlReport {
    pub degrees: Vec<HlDegree>,
    pub tol: f64,
}

impl HlReport {
    pub fn pass(&self) -> bool {
        self.degrees.iter().all(|d| d.pass)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("d,max_deviation,tolerance,pass\n");
        for d in &self.degrees {
            s.push_str(&format!("{},{:.9e},{:.3e},{}\n", d.d, d.max_rel, self.tol, d.pass));
        }
        s
    }
}

fn radial_scale(image: &Image, d: usize) -> f64 {
    let m = image.size();
    let (coords, step) = unit_coords(m);
    let mut acc = 0.0;
    for (iy, &y) in coords.iter().enumerate() {
        for (ix, &x) in coords.iter().enumerate() {
            acc += (x * x + y * y).sqrt().powi(d as i32) * image.get(iy, ix).abs();
        }
    }
    acc * step * step
}

/// Compare `Q_d` with `mu_d` for every `d <= d_max` over the given spatial
/// lines and their angles. Deviations are relative to `int |x|^d |f|`,
/// which bounds both sides.
pub fn hl_check(image: &Image, lines: &[Vec<f64>], angles: &[f64], d_max: usize, tol: f64) -> Result<HlReport> {
    if lines.len() != angles.len() {
        return Err(Error::InvalidArgument(format!(
            "{} lines but {} angles",
            lines.len(),
            angles.len()
        )));
    }
    let v = geometric_moments(image, d_max);
    let degrees = (0..=d_max)
        .map(|d| {
            let max_abs = lines
                .iter()
                .zip(angles)
                .map(|(l, &th)| (hl_polynomial(&v, d, th) - projection_moment(l, d)).abs())
                .fold(0.0, f64::max);
            let scale = radial_scale(image, d);
            let max_rel = if scale > 0.0 { max_abs / scale } else { max_abs };
            HlDegree {
                d,
                max_abs,
                max_rel,
                pass: max_rel <= tol,
            }
        })
        .collect();
    Ok(HlReport { degrees, tol })
}

/// Determinant of `[[v10^2, v20, 1], [2 v10 v01, v11, 0], [v01^2, v02, 1]]`.
pub fn identifiability_det(v: &MomentSet) -> f64 {
    let (v10, v01) = (v.get(1, 0), v.get(0, 1));
    let (v20, v11, v02) = (v.get(2, 0), v.get(1, 1), v.get(0, 2));
    let a = [[v10 * v10, v20, 1.0], [2.0 * v10 * v01, v11, 0.0], [v01 * v01, v02, 1.0]];
    a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
        + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
}

/// The two angles `arg(+-sqrt(-conj(c1) / c1))` with `c1 = (v10 - i v01) / 2`,
/// in `[0, 2 pi)` and sorted.
pub fn uas(v: &MomentSet) -> Result<[f64; 2]> {
    let c1 = Complex64::new(v.get(1, 0), -v.get(0, 1)) * 0.5;
    if c1.norm() == 0.0 {
        return Err(Error::InvalidArgument("first moments vanish; the angle set is undefined".into()));
    }
    let root = (-c1.conj() / c1).sqrt();
    let mut out = [root.arg().rem_euclid(2.0 * PI), (-root).arg().rem_euclid(2.0 * PI)];
    out.sort_by(f64::total_cmp);
    Ok(out)
}

/// Indices of lines with `mu_1 > 0`, skipping `|mu_1| < 1e-6 * mass`; of each
/// `{theta, theta + pi}` pair at most one survives.
pub fn pi_distinct_subset(lines: &[Vec<f64>]) -> Vec<usize> {
    lines
        .iter()
        .enumerate()
        .filter(|(_, l)| {
            let mass = projection_moment(l, 0).abs();
            let mu1 = projection_moment(l, 1);
            mu1.abs() >= 1e-6 * mass && mu1 > 0.0
        })
        .map(|(i, _)| i)
        .collect()
}
