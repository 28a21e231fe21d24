//! Bessel functions of the first kind, integer order, and their positive roots.
//!
//! Values come from Miller's backward recurrence normalized with
//! `J_0 + 2 Σ J_2k = 1`, which gives absolute accuracy near machine epsilon
//! for every order at once. Roots are located by scanning for sign changes
//! above `x = k` and refined by bisection followed by Newton polishing.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

const RESCALE_ABOVE: f64 = 1e250;
const RESCALE_BY: f64 = 1e-250;

fn miller_start(n_max: usize, x: f64) -> usize {
    let top = (n_max as f64).max(x);
    let start = top + 20.0 + (40.0 * top).sqrt();
    let start = start.ceil() as usize;
    start + (start & 1)
}

/// `J_0(x) .. J_{n_max}(x)` for `x >= 0`.
pub fn bessel_j_all(n_max: usize, x: f64) -> Vec<f64> {
    let mut out = vec![0.0; n_max + 1];
    if x == 0.0 {
        out[0] = 1.0;
        return out;
    }
    if x < 1e-30 {
        // leading term of the ascending series; higher orders underflow anyway
        let mut term = 1.0;
        for (k, v) in out.iter_mut().enumerate() {
            if k > 0 {
                term *= 0.5 * x / k as f64;
            }
            *v = term;
        }
        return out;
    }

    let start = miller_start(n_max, x);
    let two_over_x = 2.0 / x;
    let mut j_next = 0.0;
    let mut j_cur = 1e-280_f64;
    let mut norm = 0.0;
    // j_cur holds the unnormalized value of order `n`
    for n in (0..=start).rev() {
        if n <= n_max {
            out[n] = j_cur;
        }
        if n % 2 == 0 {
            norm += if n == 0 { j_cur } else { 2.0 * j_cur };
        }
        if n == 0 {
            break;
        }
        let j_prev = (n as f64) * two_over_x * j_cur - j_next;
        j_next = j_cur;
        j_cur = j_prev;
        if j_cur.abs() > RESCALE_ABOVE {
            j_cur *= RESCALE_BY;
            j_next *= RESCALE_BY;
            norm *= RESCALE_BY;
            for v in out.iter_mut().skip(n) {
                *v *= RESCALE_BY;
            }
        }
    }
    for v in &mut out {
        *v /= norm;
    }
    out
}

/// `J_k(x)` for integer `k >= 0` and `x >= 0`.
pub fn bessel_j(k: usize, x: f64) -> f64 {
    bessel_j_all(k, x)[k]
}

/// `J_k(x)` for any integer order, via `J_{-k} = (-1)^k J_k`.
pub fn bessel_j_signed(k: i64, x: f64) -> f64 {
    let v = bessel_j(k.unsigned_abs() as usize, x);
    if k < 0 && k % 2 != 0 {
        -v
    } else {
        v
    }
}

/// Derivative `J_k'(x)`.
pub fn bessel_jp(k: usize, x: f64) -> f64 {
    let all = bessel_j_all(k + 1, x);
    if k == 0 {
        -all[1]
    } else {
        0.5 * (all[k - 1] - all[k + 1])
    }
}

fn refine_root(k: usize, mut lo: f64, mut hi: f64) -> f64 {
    let mut f_lo = bessel_j(k, lo);
    while hi - lo > 1e-14 * hi.max(1.0) {
        let mid = 0.5 * (lo + hi);
        let f_mid = bessel_j(k, mid);
        if f_mid == 0.0 {
            return mid;
        }
        if (f_mid > 0.0) == (f_lo > 0.0) {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    let mut x = 0.5 * (lo + hi);
    for _ in 0..3 {
        let d = bessel_jp(k, x);
        if d == 0.0 {
            break;
        }
        let step = bessel_j(k, x) / d;
        if !step.is_finite() || step.abs() > 1e-8 {
            break;
        }
        x -= step;
    }
    x
}

const SCAN_STEP: f64 = 0.5;

/// First `q_max` positive roots of `J_k`, ascending.
pub fn bessel_roots(k: usize, q_max: usize) -> Result<Vec<f64>> {
    if q_max == 0 {
        return Err(Error::InvalidArgument("q_max must be >= 1".into()));
    }
    let mut roots = Vec::with_capacity(q_max);
    // every positive root of J_k exceeds k
    let mut lo = (k as f64).max(SCAN_STEP);
    let mut f_lo = bessel_j(k, lo);
    // generous cap: roots are spaced by about pi
    let limit = k as f64 + 10.0 + 4.0 * (q_max as f64 + 2.0) * std::f64::consts::PI;
    while roots.len() < q_max {
        let hi = lo + SCAN_STEP;
        if hi > limit {
            return Err(Error::RootBracket {
                k,
                q: roots.len() + 1,
            });
        }
        let f_hi = bessel_j(k, hi);
        if f_hi == 0.0 {
            roots.push(hi);
            lo = hi + 1e-9;
            f_lo = bessel_j(k, lo);
            continue;
        }
        if (f_lo > 0.0) != (f_hi > 0.0) {
            roots.push(refine_root(k, lo, hi));
        }
        lo = hi;
        f_lo = f_hi;
    }
    Ok(roots)
}

/// All positive roots of `J_k` that are `<= bound`.
pub fn bessel_roots_below(k: usize, bound: f64) -> Vec<f64> {
    let mut roots = Vec::new();
    let mut lo = (k as f64).max(SCAN_STEP);
    if lo >= bound {
        return roots;
    }
    let mut f_lo = bessel_j(k, lo);
    while lo < bound {
        let hi = (lo + SCAN_STEP).min(bound);
        let f_hi = bessel_j(k, hi);
        if f_hi == 0.0 {
            roots.push(hi);
        } else if (f_lo > 0.0) != (f_hi > 0.0) && f_lo != 0.0 {
            roots.push(refine_root(k, lo, hi));
        }
        lo = hi;
        f_lo = f_hi;
        if hi >= bound {
            break;
        }
    }
    roots
}

const TABLE_MAGIC: &[u8; 4] = b"UVTB";
const TABLE_VERSION: u32 = 1;

/// Rectangular table of Bessel roots `R_{k,q}` for `k in 0..=k_max`,
/// `q in 1..=q_max`, with the bandlimit-free part of the normalization,
/// `(sqrt(pi) |J_{k+1}(R_{k,q})|)^{-1}`. Divide by `s` for `N_{k,q}`.
#[derive(Debug, Clone, PartialEq)]
pub struct BesselRootTable {
    k_max: usize,
    q_max: usize,
    roots: Vec<f64>,
    norms: Vec<f64>,
}

impl BesselRootTable {
    pub fn build(k_max: usize, q_max: usize) -> Result<Self> {
        let mut roots = Vec::with_capacity((k_max + 1) * q_max);
        let mut norms = Vec::with_capacity((k_max + 1) * q_max);
        for k in 0..=k_max {
            for r in bessel_roots(k, q_max)? {
                let jk1 = bessel_j(k + 1, r).abs();
                roots.push(r);
                norms.push(1.0 / (std::f64::consts::PI.sqrt() * jk1));
            }
        }
        Ok(Self {
            k_max,
            q_max,
            roots,
            norms,
        })
    }

    pub fn k_max(&self) -> usize {
        self.k_max
    }

    pub fn q_max(&self) -> usize {
        self.q_max
    }

    /// `R_{k,q}` with 1-based `q`.
    pub fn root(&self, k: usize, q: usize) -> f64 {
        self.roots[k * self.q_max + q - 1]
    }

    /// `(sqrt(pi) |J_{k+1}(R_{k,q})|)^{-1}`.
    pub fn unit_norm(&self, k: usize, q: usize) -> f64 {
        self.norms[k * self.q_max + q - 1]
    }

    pub fn covers(&self, k_max: usize, q_max: usize) -> bool {
        self.k_max >= k_max && self.q_max >= q_max
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        w.write_all(TABLE_MAGIC)?;
        w.write_all(&TABLE_VERSION.to_le_bytes())?;
        w.write_all(&(self.k_max as u32).to_le_bytes())?;
        w.write_all(&(self.q_max as u32).to_le_bytes())?;
        for v in self.roots.iter().chain(&self.norms) {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let mut header = [0u8; 16];
        r.read_exact(&mut header)?;
        if &header[0..4] != TABLE_MAGIC {
            return Err(Error::Format("not a Bessel root table".into()));
        }
        let word = |i: usize| u32::from_le_bytes(header[i..i + 4].try_into().unwrap());
        let version = word(4);
        if version != TABLE_VERSION {
            return Err(Error::Version {
                found: version,
                expected: TABLE_VERSION,
            });
        }
        let k_max = word(8) as usize;
        let q_max = word(12) as usize;
        let n = (k_max + 1) * q_max;
        let mut buf = vec![0u8; 16 * n];
        r.read_exact(&mut buf)?;
        let vals: Vec<f64> = buf
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let (roots, norms) = vals.split_at(n);
        Ok(Self {
            k_max,
            q_max,
            roots: roots.to_vec(),
            norms: norms.to_vec(),
        })
    }

    /// Load a cached table if it covers the request, otherwise build and
    /// rewrite the cache.
    pub fn load_or_build(path: &Path, k_max: usize, q_max: usize) -> Result<Self> {
        if let Ok(bytes) = fs::read(path) {
            if let Ok(table) = Self::read_from(bytes.as_slice()) {
                if table.covers(k_max, q_max) {
                    return Ok(table);
                }
            }
        }
        let table = Self::build(k_max, q_max)?;
        let mut bytes = Vec::new();
        table.write_to(&mut bytes)?;
        crate::io::write_atomic(path, &bytes)?;
        Ok(table)
    }
}
