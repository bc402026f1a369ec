//! Riesz potential `P(x) = 𝒜(2−σ) ∫ Γ(y) |x−y|^{−n+2−σ} dy` and the ring
//! lower bound at the minimum point.

use std::io::Write;

use rustfft::num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::GridFunction;
use crate::kernel::{face_integral, fast_size, FftN, IndexBox};
use crate::operators::{check_sigma, support_of};
use crate::special::{cal_a, c0};

/// `∫ |y|^{−n+α}` over the unit cell centred at the origin, exact up to
/// Gauss–Legendre error on the smooth face integrand.
pub fn singular_cell_weight(n: usize, alpha: f64) -> f64 {
    let p = (-(n as f64) + alpha) / 2.0;
    let faces = face_integral(n, 40, |s| s[..n].iter().map(|v| v * v).sum::<f64>().powf(p));
    0.5f64.powf(alpha) * faces / alpha
}

/// Unit-lattice weight: midpoint rule off the origin, exact cell integral at
/// it. Multiply by `h^{2−σ}`.
fn unit_weight(j: &[i64], n: usize, alpha: f64, center: f64) -> f64 {
    let r2: i64 = j[..n].iter().map(|k| k * k).sum();
    if r2 == 0 {
        center
    } else {
        (r2 as f64).powf((-(n as f64) + alpha) / 2.0)
    }
}

fn check_gamma(gamma: &GridFunction) -> Result<()> {
    if gamma.exterior().far_value() != 0.0 {
        return Err(Error::InvalidArgument("the potential needs a compactly supported function".into()));
    }
    Ok(())
}

/// `P(x)` at a lattice point by direct summation.
pub fn riesz(gamma: &GridFunction, sigma: f64, x: &[f64]) -> Result<f64> {
    check_sigma(sigma)?;
    check_gamma(gamma)?;
    let d = gamma.domain();
    let n = d.n();
    let idx = d
        .lattice_index(x)
        .ok_or_else(|| Error::InvalidArgument(format!("point {x:?} is not on the lattice")))?;
    let alpha = 2.0 - sigma;
    let center = singular_cell_weight(n, alpha);
    let sup = support_of(gamma);
    let mut acc = 0.0;
    for (s, &v) in sup.vals.iter().enumerate() {
        if v == 0.0 {
            continue;
        }
        let p = sup.bx.index(s);
        let mut j = [0i64; 3];
        for a in 0..n {
            j[a] = p[a] - idx[a];
        }
        acc += v * unit_weight(&j, n, alpha, center);
    }
    Ok(cal_a(alpha, n)? * d.h().powf(alpha) * acc)
}

/// `P` at the given domain flat indices, by FFT convolution.
pub fn riesz_field(gamma: &GridFunction, sigma: f64, points: &[usize]) -> Result<Vec<f64>> {
    check_sigma(sigma)?;
    check_gamma(gamma)?;
    let d = gamma.domain();
    let n = d.n();
    let sup = support_of(gamma);
    if points.is_empty() || sup.bx.is_empty() {
        return Ok(vec![0.0; points.len()]);
    }
    let mut lo = [i64::MAX; 3];
    let mut hi = [i64::MIN; 3];
    for &p in points {
        let idx = d.index_of(p);
        for a in 0..n {
            lo[a] = lo[a].min(idx[a]);
            hi[a] = hi[a].max(idx[a]);
        }
    }
    let eval = IndexBox::new(n, lo, hi);
    let w = eval.reach(&sup.bx) as i64;
    let alpha = 2.0 - sigma;
    let center = singular_cell_weight(n, alpha);
    // source at offset 0, kernel at j + w, eval read at (e − src.lo) + w
    let mut dims = [1usize; 3];
    for a in 0..n {
        let p_min = eval.lo[a] - sup.bx.lo[a] + w;
        let p_max = eval.hi(a) - sup.bx.lo[a] + w;
        let reach = 2 * w + sup.bx.dims[a] as i64 - 1;
        dims[a] = fast_size((p_max + 1).max(reach - p_min + 1) as usize);
    }
    let fft = FftN::new(&dims[..n]);
    let total: usize = dims[..n].iter().product();
    let flat = |pos: &[i64]| pos[..n].iter().zip(&dims).fold(0usize, |acc, (&p, &dd)| acc * dd + p as usize);
    let mut src = vec![Complex::new(0.0, 0.0); total];
    for (s, &v) in sup.vals.iter().enumerate() {
        let idx = sup.bx.index(s);
        let mut pos = [0i64; 3];
        for a in 0..n {
            pos[a] = idx[a] - sup.bx.lo[a];
        }
        src[flat(&pos)] = Complex::new(v, 0.0);
    }
    let mut ker = vec![Complex::new(0.0, 0.0); total];
    let side = 2 * w + 1;
    for kf in 0..side.pow(n as u32) {
        let mut j = [0i64; 3];
        let mut pos = [0i64; 3];
        let mut f = kf;
        for a in (0..n).rev() {
            pos[a] = f % side;
            j[a] = pos[a] - w;
            f /= side;
        }
        ker[flat(&pos)] = Complex::new(unit_weight(&j, n, alpha, center), 0.0);
    }
    let mut scratch = Vec::new();
    fft.run(&mut src, false, &mut scratch);
    fft.run(&mut ker, false, &mut scratch);
    for (s, k) in src.iter_mut().zip(&ker) {
        *s *= k;
    }
    fft.run(&mut src, true, &mut scratch);
    let scale = cal_a(alpha, n)? * d.h().powf(alpha) / total as f64;
    Ok(points
        .iter()
        .map(|&p| {
            let idx = d.index_of(p);
            let mut pos = [0i64; 3];
            for a in 0..n {
                pos[a] = idx[a] - sup.bx.lo[a] + w;
            }
            src[flat(&pos)].re * scale
        })
        .collect())
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Ring {
    pub l: usize,
    pub r_l: f64,
    /// `|A_l|` by lattice counting.
    pub measure: f64,
    /// `r_l^n / 4`.
    pub threshold: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RingDecomposition {
    pub x0: Vec<f64>,
    pub r0: f64,
    pub rings: Vec<Ring>,
}

/// Rings `Q_{r_l}(x₀) ∖ Q_{r_{l+1}}(x₀)`, `r_l = 4^{−l/n} r₀`, down to the
/// last ring containing lattice points, with `|{Γ ≤ Γ(x₀)/2} ∩ ring|`.
pub fn ring_decomposition(gamma: &GridFunction, x0: &[f64], r0: f64) -> Result<RingDecomposition> {
    let d = gamma.domain();
    let n = d.n();
    let h = d.h();
    if !(r0 > 0.0) {
        return Err(Error::InvalidArgument("r0 must be positive".into()));
    }
    let idx0 = d
        .lattice_index(x0)
        .ok_or_else(|| Error::InvalidArgument(format!("point {x0:?} is not on the lattice")))?;
    let level = gamma.at_index(&idx0[..n]) / 2.0;
    let ratio = 4f64.powf(-1.0 / n as f64);
    // stop before the first ring that holds no lattice shell
    let mut radii = vec![r0];
    loop {
        let r = *radii.last().unwrap();
        let next = r * ratio;
        let k = (next / (2.0 * h)).ceil().max(1.0);
        if k * h >= r / 2.0 {
            break;
        }
        radii.push(next);
    }
    if radii.len() < 2 {
        return Err(Error::InvalidArgument(format!("r0 = {r0} too small for h = {h}")));
    }
    let reach = (r0 / (2.0 * h)).ceil() as i64;
    let side = 2 * reach + 1;
    let mut counts = vec![0usize; radii.len() - 1];
    for k in 0..side.pow(n as u32) {
        let mut off = [0i64; 3];
        let mut f = k;
        for a in 0..n {
            off[a] = f % side - reach;
            f /= side;
        }
        let dist = off[..n].iter().map(|v| v.abs()).max().unwrap() as f64 * h;
        let mut q = [0i64; 3];
        for a in 0..n {
            q[a] = idx0[a] + off[a];
        }
        if gamma.at_index(&q[..n]) > level {
            continue;
        }
        // open cubes: inside Q_r iff |y − x₀|∞ < r/2
        for l in 0..counts.len() {
            if dist < radii[l] / 2.0 && dist >= radii[l + 1] / 2.0 {
                counts[l] += 1;
            }
        }
    }
    let cell = d.cell_volume();
    let rings = counts
        .iter()
        .enumerate()
        .map(|(l, &c)| {
            let r = radii[l];
            let threshold = r.powi(n as i32) / 4.0;
            let measure = c as f64 * cell;
            Ring { l, r_l: r, measure, threshold, pass: measure >= threshold }
        })
        .collect();
    Ok(RingDecomposition { x0: x0[..n].to_vec(), r0, rings })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RingReport {
    pub decomposition: RingDecomposition,
    pub gamma_x0: f64,
    /// `−P(x₀)` by direct summation.
    pub direct: f64,
    /// `Σ_l |A_l| r_l^{−n+2−σ} (√n/2)^{−n+2−σ} (−Γ(x₀)/2) 𝒜(2−σ)`.
    pub chain: f64,
    /// `c₀ (−Γ(x₀)) r₀^{2−σ}`.
    pub c0_bound: f64,
    pub hypothesis: bool,
    pub chain_holds: bool,
    pub bound_holds: bool,
}

pub fn verify_ring_bound(gamma: &GridFunction, rings: RingDecomposition, sigma: f64) -> Result<RingReport> {
    check_sigma(sigma)?;
    let d = gamma.domain();
    let n = d.n();
    let nf = n as f64;
    let idx0 = d
        .lattice_index(&rings.x0)
        .ok_or_else(|| Error::InvalidArgument("ring center is not on the lattice".into()))?;
    let g0 = gamma.at_index(&idx0[..n]);
    if !(g0 < 0.0) {
        return Err(Error::NotNegativeAtCenter(g0));
    }
    let alpha = 2.0 - sigma;
    let a = cal_a(alpha, n)?;
    let direct = -riesz(gamma, sigma, &rings.x0)?;
    let geo = (nf.sqrt() / 2.0).powf(-nf + alpha);
    let chain = rings.rings.iter().map(|r| r.measure * r.r_l.powf(-nf + alpha)).sum::<f64>() * geo * (-g0 / 2.0) * a;
    let c0_bound = c0(n).value * (-g0) * rings.r0.powf(alpha);
    let hypothesis = rings.rings.iter().all(|r| r.pass);
    Ok(RingReport {
        gamma_x0: g0,
        direct,
        chain,
        c0_bound,
        hypothesis,
        chain_holds: direct >= chain,
        bound_holds: direct >= c0_bound,
        decomposition: rings,
    })
}

/// Ring CSV: `l,r_l,measure,threshold,pass`.
pub fn write_ring_csv<W: Write>(rings: &RingDecomposition, mut w: W) -> Result<()> {
    writeln!(w, "l,r_l,measure,threshold,pass")?;
    for r in &rings.rings {
        writeln!(w, "{},{:e},{:e},{:e},{}", r.l, r.r_l, r.measure, r.threshold, r.pass)?;
    }
    Ok(())
}

/// `Σ_{l≥0} 4^{−(2−σ)l/n}` summed term by term until the terms stop
/// changing the total.
pub fn geometric_partial_sum(sigma: f64, n: usize) -> f64 {
    let q = 4f64.powf(-(2.0 - sigma) / n as f64);
    let mut sum = 0.0;
    let mut term = 1.0;
    loop {
        let next = sum + term;
        if next == sum {
            return sum;
        }
        sum = next;
        term *= q;
    }
}
