//! Lattice weights for the matrix-valued kernel `y yᵀ / |y|^{n+σ+2}` and an
//! FFT convolution engine that applies them to whole grids.
//!
//! The moment matrix at a lattice point `x` is
//! `H(x) = Σ_{j≠0} W(j) δ(u, x, h j) + tail`, with `W(j)` positive
//! semidefinite. A far cell carries the mass of `|y|^{-n-σ}` over the cell,
//! aligned with the lattice direction `j`. The near cube `|j|∞ ≤ k` is
//! replaced by a nearest-neighbour stencil whose weights make the whole sum
//! reproduce the exact fourth moments, so quadratics are integrated exactly.
//! Everything outside the window `|j|∞ ≤ L` is integrated analytically
//! against the far value of the exterior model.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(order: usize) -> (Vec<f64>, Vec<f64>) {
    if order == 1 {
        return (vec![0.0], vec![2.0]);
    }
    let mut x = vec![0.0; order];
    let mut w = vec![0.0; order];
    let m = order.div_ceil(2);
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (order as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=order {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = order as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[order - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[order - 1 - i] = w[i];
    }
    (x, w)
}

/// Upper-triangle component order used for symmetric matrices.
pub fn component_pairs(n: usize) -> &'static [(usize, usize)] {
    match n {
        2 => &[(0, 0), (1, 1), (0, 1)],
        _ => &[(0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2)],
    }
}

/// Quadrature settings for the moment assembly.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct QuadConfig {
    /// Near-field half width in lattice cells; the near cube is `|j|∞ ≤ k`.
    pub near_cells: usize,
    /// Gauss nodes per face dimension for the analytic near and tail moments.
    pub angular_resolution: usize,
    pub tail: TailMode,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum TailMode {
    /// Beyond the window the exterior far value is integrated in closed form.
    Analytic,
    /// Truncate at the window.
    Drop,
}

impl Default for QuadConfig {
    fn default() -> Self {
        QuadConfig { near_cells: 4, angular_resolution: 40, tail: TailMode::Analytic }
    }
}

impl QuadConfig {
    pub fn validate(&self) -> Result<()> {
        if self.near_cells == 0 || self.angular_resolution < 4 {
            return Err(Error::InvalidArgument("quadrature config out of range".into()));
        }
        Ok(())
    }
}

/// Integral over the boundary faces of `[-1,1]^n` of `g(s) (s·ν) dS`.
pub(crate) fn face_integral(n: usize, nodes: usize, g: impl Fn(&[f64; 3]) -> f64) -> f64 {
    let (x, w) = gauss_legendre(nodes);
    let mut acc = 0.0;
    for axis in 0..n {
        for sign in [-1.0, 1.0] {
            let others: Vec<usize> = (0..n).filter(|&a| a != axis).collect();
            let mut s = [0.0; 3];
            s[axis] = sign;
            if n == 2 {
                for (xi, wi) in x.iter().zip(&w) {
                    s[others[0]] = *xi;
                    acc += wi * g(&s);
                }
            } else {
                for (xi, wi) in x.iter().zip(&w) {
                    for (xj, wj) in x.iter().zip(&w) {
                        s[others[0]] = *xi;
                        s[others[1]] = *xj;
                        acc += wi * wj * g(&s);
                    }
                }
            }
        }
    }
    acc
}

/// Weights on the unit lattice (`h = 1`); scale by `h^{-σ}` for mesh `h`.
#[derive(Debug)]
pub struct UnitKernel {
    pub n: usize,
    pub sigma: f64,
    pub near: usize,
    /// Window half width of the stored octant.
    pub window: usize,
    /// Components per octant cell `j ∈ [0, L]^n`, row-major.
    comps: Vec<Vec<f64>>,
    /// `∫_{[-1,1]^{n-1}} (1+|t|²)^{-(n+σ)/2} dt`.
    tail_face: f64,
    /// Fourth moments of the near cube: `α = ∫ y₁⁴ K`, `β = ∫ y₁² y₂² K`.
    pub alpha: f64,
    pub beta: f64,
    /// Near moments after absorbing the far-field defect.
    pub stencil_alpha: f64,
    pub stencil_beta: f64,
}

fn defect_reach(n: usize) -> usize {
    if n == 2 {
        160
    } else {
        48
    }
}

fn octant_multiplicity(n: usize, j: &[usize; 3]) -> f64 {
    j[..n].iter().map(|&k| if k == 0 { 1.0 } else { 2.0 }).product()
}

fn for_each_octant(n: usize, reach: usize, mut f: impl FnMut(&[usize; 3])) {
    let side = reach + 1;
    for flat in 0..side.pow(n as u32) {
        let mut j = [0usize; 3];
        let mut r = flat;
        for a in (0..n).rev() {
            j[a] = r % side;
            r /= side;
        }
        f(&j);
    }
}

/// `∫ |y|^{-n-σ}` over the unit cell centred at `j`, Gauss-Legendre with
/// order decreasing in the distance.
fn cell_mass(n: usize, sigma: f64, j: &[usize; 3]) -> f64 {
    thread_local! {
        static RULES: Vec<(Vec<f64>, Vec<f64>)> =
            [1, 2, 3, 6].iter().map(|&o| gauss_legendre(o)).collect();
    }
    let m = *j[..n].iter().max().unwrap();
    let pick = match m {
        _ if m <= 8 => 3,
        _ if m <= 32 => 2,
        _ if m <= 128 => 1,
        _ => 0,
    };
    let p = -(n as f64 + sigma) / 2.0;
    RULES.with(|rules| {
        let (x, w) = &rules[pick];
        let o = x.len();
        let mut acc = 0.0;
        for qi in 0..o.pow(n as u32) {
            let mut r = qi;
            let mut wt = 1.0;
            let mut r2 = 0.0;
            for a in 0..n {
                let k = r % o;
                r /= o;
                let t = j[a] as f64 + 0.5 * x[k];
                r2 += t * t;
                wt *= 0.5 * w[k];
            }
            acc += wt * r2.powf(p);
        }
        acc
    })
}

impl UnitKernel {
    fn build(n: usize, sigma: f64, near: usize, nodes: usize, window: usize) -> Self {
        let q = -(n as f64 + sigma + 2.0) / 2.0;
        let kern = |t: &[f64; 3], a: usize, b: usize| {
            let r2: f64 = t[..n].iter().map(|v| v * v).sum();
            t[a] * t[b] * r2.powf(q)
        };
        // near fourth moments on the cube of half width c = k + 1/2, via
        // ∫_C g = (n + deg)^{-1} ∫_{∂C} g (s·ν) dS for homogeneous g
        let c = near as f64 + 0.5;
        let deg_sum = 2.0 - sigma;
        let scale = c.powf(2.0 - sigma);
        let alpha = face_integral(n, nodes, |s| kern(s, 0, 0) * s[0] * s[0]) / deg_sum * scale;
        let beta = face_integral(n, nodes, |s| kern(s, 0, 0) * s[1] * s[1]) / deg_sum * scale;
        let tail_face = {
            let (x, w) = gauss_legendre(nodes);
            let p = -(n as f64 + sigma) / 2.0;
            if n == 2 {
                x.iter().zip(&w).map(|(t, wt)| wt * (1.0 + t * t).powf(p)).sum()
            } else {
                let mut acc = 0.0;
                for (a, wa) in x.iter().zip(&w) {
                    for (b, wb) in x.iter().zip(&w) {
                        acc += wa * wb * (1.0 + a * a + b * b).powf(p);
                    }
                }
                acc
            }
        };

        // Far cells get rank-one weights m_j ĵ ĵᵀ with m_j the cell mass of
        // |y|^{-n-σ}. Their fourth-moment defect against the exact integral is
        // fully symmetric, so the near stencil can absorb it.
        let reach = defect_reach(n).max(near + 1);
        let (mut d1111, mut d1122) = (0.0, 0.0);
        for_each_octant(n, reach, |j| {
            let m = *j[..n].iter().max().unwrap();
            if m <= near {
                return;
            }
            let r2 = j[..n].iter().map(|&k| (k * k) as f64).sum::<f64>();
            let w = cell_mass(n, sigma, j) / r2 * octant_multiplicity(n, j);
            let (y0, y1) = (j[0] as f64, j[1] as f64);
            d1111 += w * y0.powi(4);
            d1122 += w * y0 * y0 * y1 * y1;
        });
        let grow = |cube: f64| cube / scale * ((reach as f64 + 0.5).powf(2.0 - sigma) - scale);
        let stencil_alpha = alpha + grow(alpha) - d1111;
        let stencil_beta = beta + grow(beta) - d1122;

        let pairs = component_pairs(n);
        let side = window + 1;
        let len = side.pow(n as u32);
        let mut comps = vec![vec![0.0; len]; pairs.len()];
        let stencil_diag = stencil_alpha - (n as f64 - 1.0) * stencil_beta;
        for flat in 0..len {
            let mut j = [0usize; 3];
            let mut f = flat;
            for a in (0..n).rev() {
                j[a] = f % side;
                f /= side;
            }
            let m = *j[..n].iter().max().unwrap();
            if m == 0 {
                continue;
            }
            if m <= near {
                let nz: Vec<usize> = (0..n).filter(|&a| j[a] != 0).collect();
                if m == 1 && nz.len() == 1 {
                    let a = nz[0];
                    let ci = pairs.iter().position(|&p| p == (a, a)).unwrap();
                    comps[ci][flat] = stencil_diag / 2.0;
                } else if m == 1 && nz.len() == 2 {
                    // W(e_a + e_b) = (β/4)(e_a + e_b)(e_a + e_b)ᵀ
                    for (ci, &(a, b)) in pairs.iter().enumerate() {
                        let va = if nz.contains(&a) { 1.0 } else { 0.0 };
                        let vb = if nz.contains(&b) { 1.0 } else { 0.0 };
                        comps[ci][flat] = stencil_beta / 4.0 * va * vb;
                    }
                }
                continue;
            }
            let r2 = j[..n].iter().map(|&k| (k * k) as f64).sum::<f64>();
            let w = cell_mass(n, sigma, &j) / r2;
            for (ci, &(a, b)) in pairs.iter().enumerate() {
                comps[ci][flat] = w * (j[a] * j[b]) as f64;
            }
        }
        UnitKernel { n, sigma, near, window, comps, tail_face, alpha, beta, stencil_alpha, stencil_beta }
    }

    fn octant_flat(&self, j: &[usize]) -> usize {
        let side = self.window + 1;
        j[..self.n].iter().fold(0, |acc, &k| acc * side + k)
    }

    /// Weight component `ci` at signed offset `j` (requires `|j|∞ ≤ window`).
    pub fn weight(&self, j: &[i64], ci: usize) -> f64 {
        let mut a = [0usize; 3];
        for d in 0..self.n {
            a[d] = j[d].unsigned_abs() as usize;
        }
        let v = self.comps[ci][self.octant_flat(&a)];
        let (p, q) = component_pairs(self.n)[ci];
        if p != q && (j[p] < 0) != (j[q] < 0) {
            -v
        } else {
            v
        }
    }

    /// Diagonal entry of the analytic moment beyond `|y|∞ > window + 1/2`.
    pub fn tail_diag(&self, window: usize) -> f64 {
        let c = window as f64 + 0.5;
        2.0 / self.sigma * c.powf(-self.sigma) * self.tail_face
    }

    /// Diagonal entry of `Σ_{0<|j|∞≤window} W(j)`; the off-diagonal sum vanishes.
    pub fn window_sum(&self, window: usize) -> f64 {
        let side = self.window + 1;
        let len = side.pow(self.n as u32);
        let mut acc = 0.0;
        for flat in 0..len {
            let mut f = flat;
            let mut mult = 1.0;
            let mut m = 0;
            for _ in 0..self.n {
                let k = f % side;
                f /= side;
                m = m.max(k);
                if k != 0 {
                    mult *= 2.0;
                }
            }
            if m <= window {
                acc += mult * self.comps[0][flat];
            }
        }
        acc
    }
}

type KernelKey = (usize, u64, usize, usize);

fn kernel_cache() -> &'static Mutex<HashMap<KernelKey, Arc<UnitKernel>>> {
    static CACHE: OnceLock<Mutex<HashMap<KernelKey, Arc<UnitKernel>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Shared unit kernel with window at least `window`.
pub fn unit_kernel(n: usize, sigma: f64, quad: &QuadConfig, window: usize) -> Arc<UnitKernel> {
    let key = (n, sigma.to_bits(), quad.near_cells, quad.angular_resolution);
    let mut cache = kernel_cache().lock().expect("kernel cache poisoned");
    if let Some(k) = cache.get(&key) {
        if k.window >= window {
            return Arc::clone(k);
        }
    }
    let window = window.max(quad.near_cells + 1);
    let k = Arc::new(UnitKernel::build(n, sigma, quad.near_cells, quad.angular_resolution, window));
    cache.insert(key, Arc::clone(&k));
    k
}

/// Axis-aligned box of signed lattice indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IndexBox {
    pub n: usize,
    pub lo: [i64; 3],
    pub dims: [usize; 3],
}

impl IndexBox {
    pub fn new(n: usize, lo: [i64; 3], hi: [i64; 3]) -> Self {
        let mut dims = [1usize; 3];
        for a in 0..n {
            dims[a] = (hi[a] - lo[a] + 1).max(0) as usize;
        }
        IndexBox { n, lo, dims }
    }

    /// Smallest box containing the signed indices `|k|∞ ≤ r`.
    pub fn centered(n: usize, r: i64) -> Self {
        IndexBox::new(n, [-r; 3], [r; 3])
    }

    pub fn len(&self) -> usize {
        self.dims[..self.n].iter().product()
    }
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, mut flat: usize) -> [i64; 3] {
        let mut idx = [0i64; 3];
        for a in (0..self.n).rev() {
            idx[a] = self.lo[a] + (flat % self.dims[a]) as i64;
            flat /= self.dims[a];
        }
        idx
    }

    pub fn flat(&self, idx: &[i64]) -> Option<usize> {
        let mut f = 0usize;
        for a in 0..self.n {
            let k = idx[a] - self.lo[a];
            if k < 0 || k >= self.dims[a] as i64 {
                return None;
            }
            f = f * self.dims[a] + k as usize;
        }
        Some(f)
    }

    pub fn hi(&self, a: usize) -> i64 {
        self.lo[a] + self.dims[a] as i64 - 1
    }

    /// Largest `|x - p|∞` over `x` in `self`, `p` in `other`.
    pub fn reach(&self, other: &IndexBox) -> usize {
        (0..self.n)
            .map(|a| (self.hi(a) - other.lo[a]).max(other.hi(a) - self.lo[a]).max(0) as usize)
            .max()
            .unwrap_or(0)
    }
}

pub(crate) fn fast_size(min: usize) -> usize {
    let mut s = min.max(1);
    loop {
        let mut r = s;
        for p in [2, 3, 5] {
            while r % p == 0 {
                r /= p;
            }
        }
        if r == 1 {
            return s;
        }
        s += 1;
    }
}

/// n-dimensional in-place FFT over a row-major buffer.
pub(crate) struct FftN {
    dims: Vec<usize>,
    fwd: Vec<Arc<dyn Fft<f64>>>,
    inv: Vec<Arc<dyn Fft<f64>>>,
}

impl FftN {
    pub(crate) fn new(dims: &[usize]) -> Self {
        let mut planner = FftPlanner::new();
        FftN {
            dims: dims.to_vec(),
            fwd: dims.iter().map(|&d| planner.plan_fft_forward(d)).collect(),
            inv: dims.iter().map(|&d| planner.plan_fft_inverse(d)).collect(),
        }
    }

    pub(crate) fn run(&self, buf: &mut [Complex<f64>], inverse: bool, scratch: &mut Vec<Complex<f64>>) {
        let plans = if inverse { &self.inv } else { &self.fwd };
        let nd = self.dims.len();
        for axis in (0..nd).rev() {
            let d = self.dims[axis];
            let inner: usize = self.dims[axis + 1..].iter().product();
            if inner == 1 {
                plans[axis].process(buf);
                continue;
            }
            let outer: usize = self.dims[..axis].iter().product();
            scratch.resize(buf.len(), Complex::new(0.0, 0.0));
            // gather lines along `axis` into contiguous rows
            for o in 0..outer {
                let base = o * d * inner;
                for i in 0..inner {
                    let row = (o * inner + i) * d;
                    for k in 0..d {
                        scratch[row + k] = buf[base + k * inner + i];
                    }
                }
            }
            plans[axis].process(scratch);
            for o in 0..outer {
                let base = o * d * inner;
                for i in 0..inner {
                    let row = (o * inner + i) * d;
                    for k in 0..d {
                        buf[base + k * inner + i] = scratch[row + k];
                    }
                }
            }
        }
    }
}

/// Precomputed spectra that map values on a source box to moment matrices on
/// an evaluation box.
pub struct MomentConv {
    pub n: usize,
    pub src: IndexBox,
    pub eval: IndexBox,
    pub window: usize,
    /// `h^{-σ}` times the diagonal of `Σ_{j≠0} W(j)` plus the analytic tail.
    pub s_all: f64,
    /// `h^{-σ}` times the diagonal tail moment.
    pub tail: f64,
    fft_dims: [usize; 3],
    fft: FftN,
    uk: Arc<UnitKernel>,
    scale: f64,
    /// Packed kernel spectra: component `2p` in the real part, `2p+1` in the
    /// imaginary part.
    spectra: Vec<Vec<Complex<f64>>>,
    /// Eval point flat index into the FFT buffer (offset by the window).
    eval_to_buf: Vec<usize>,
    /// Eval point flat index into the source box, if inside.
    eval_to_src: Vec<Option<usize>>,
}

impl MomentConv {
    pub fn new(n: usize, sigma: f64, h: f64, quad: &QuadConfig, src: IndexBox, eval: IndexBox) -> Self {
        let window = eval.reach(&src).max(1);
        let uk = unit_kernel(n, sigma, quad, window);
        let scale = h.powf(-sigma);
        let tail = match quad.tail {
            TailMode::Analytic => uk.tail_diag(window),
            TailMode::Drop => 0.0,
        };
        let s_all = (uk.window_sum(window) + tail) * scale;
        let mut fft_dims = [1usize; 3];
        for a in 0..n {
            // positions of eval points in the buffer, and the largest index a
            // kernel/source product can reach; no wrap may land on an eval
            let p_min = eval.lo[a] - src.lo[a] + window as i64;
            let p_max = eval.hi(a) - src.lo[a] + window as i64;
            let reach = 2 * window as i64 + src.dims[a] as i64 - 1;
            fft_dims[a] = fast_size((p_max + 1).max(reach - p_min + 1) as usize);
        }
        let fft = FftN::new(&fft_dims[..n]);
        let total: usize = fft_dims[..n].iter().product();
        let buf_flat = |pos: &[usize]| pos[..n].iter().zip(&fft_dims).fold(0, |acc, (&p, &d)| acc * d + p);

        let pairs = component_pairs(n);
        let kside = 2 * window + 1;
        let klen = kside.pow(n as u32);
        let mut scratch = Vec::new();
        let mut spectra = Vec::new();
        for p in (0..pairs.len()).step_by(2) {
            let mut buf = vec![Complex::new(0.0, 0.0); total];
            for kf in 0..klen {
                let mut pos = [0usize; 3];
                let mut j = [0i64; 3];
                let mut f = kf;
                for a in (0..n).rev() {
                    pos[a] = f % kside;
                    j[a] = pos[a] as i64 - window as i64;
                    f /= kside;
                }
                let re = uk.weight(&j, p) * scale;
                let im = if p + 1 < pairs.len() { uk.weight(&j, p + 1) * scale } else { 0.0 };
                buf[buf_flat(&pos)] = Complex::new(re, im);
            }
            fft.run(&mut buf, false, &mut scratch);
            spectra.push(buf);
        }

        let mut eval_to_buf = Vec::with_capacity(eval.len());
        let mut eval_to_src = Vec::with_capacity(eval.len());
        for e in 0..eval.len() {
            let idx = eval.index(e);
            let mut pos = [0usize; 3];
            for a in 0..n {
                pos[a] = (idx[a] - src.lo[a] + window as i64) as usize;
            }
            eval_to_buf.push(buf_flat(&pos));
            eval_to_src.push(src.flat(&idx));
        }
        MomentConv { n, src, eval, window, s_all, tail, fft_dims, fft, uk, scale, spectra, eval_to_buf, eval_to_src }
    }

    fn forward(&self, v: &[f64], scratch: &mut Vec<Complex<f64>>) -> Vec<Complex<f64>> {
        let n = self.n;
        let total: usize = self.fft_dims[..n].iter().product();
        let mut buf = vec![Complex::new(0.0, 0.0); total];
        for (s, &val) in v.iter().enumerate() {
            if val == 0.0 {
                continue;
            }
            let idx = self.src.index(s);
            let pos = (0..n).fold(0, |acc, a| acc * self.fft_dims[a] + (idx[a] - self.src.lo[a]) as usize);
            buf[pos] = Complex::new(val, 0.0);
        }
        self.fft.run(&mut buf, false, scratch);
        buf
    }

    /// Real symbol of `v ↦ Tr(A H_v)` for a constant `A` (components in
    /// `component_pairs` order) on the periodic FFT box.
    pub fn symbol(&self, a: &[f64]) -> Vec<f64> {
        let n = self.n;
        let pairs = component_pairs(n);
        let total: usize = self.fft_dims[..n].iter().product();
        let mut buf = vec![Complex::new(0.0, 0.0); total];
        let w = self.window as i64;
        let side = 2 * self.window + 1;
        let mut tr = 0.0;
        for (ci, &(p, q)) in pairs.iter().enumerate() {
            if p == q {
                tr += a[ci];
            }
        }
        for kf in 0..side.pow(n as u32) {
            let mut j = [0i64; 3];
            let mut f = kf;
            let mut pos = 0usize;
            for a in (0..n).rev() {
                j[a] = (f % side) as i64 - w;
                f /= side;
            }
            for a in 0..n {
                let d = self.fft_dims[a] as i64;
                pos = pos * self.fft_dims[a] + j[a].rem_euclid(d) as usize;
            }
            if j[..n].iter().all(|&k| k == 0) {
                continue;
            }
            let mut val = 0.0;
            for (ci, &(p, q)) in pairs.iter().enumerate() {
                let m = if p == q { 1.0 } else { 2.0 };
                val += m * a[ci] * self.uk.weight(&j, ci);
            }
            buf[pos] += Complex::new(2.0 * val * self.scale, 0.0);
        }
        let mut scratch = Vec::new();
        self.fft.run(&mut buf, false, &mut scratch);
        buf.iter().map(|c| c.re - 2.0 * self.s_all * tr).collect()
    }

    /// Solves the periodic constant-coefficient system with the given symbol
    /// for a right-hand side on the source box; returns source box values.
    pub fn apply_inverse_symbol(&self, symbol: &[f64], v: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut scratch = Vec::new();
        let mut buf = self.forward(v, &mut scratch);
        for (b, s) in buf.iter_mut().zip(symbol) {
            *b /= *s;
        }
        self.fft.run(&mut buf, true, &mut scratch);
        let total = buf.len() as f64;
        (0..self.src.len())
            .map(|s| {
                let idx = self.src.index(s);
                let pos = (0..n).fold(0, |acc, a| acc * self.fft_dims[a] + (idx[a] - self.src.lo[a]) as usize);
                buf[pos].re / total
            })
            .collect()
    }

    /// Moment matrices at every eval point for source values `v` (the
    /// function minus its far value). Components follow `component_pairs`.
    pub fn moments(&self, v: &[f64]) -> Vec<Vec<f64>> {
        assert_eq!(v.len(), self.src.len());
        let mut scratch = Vec::new();
        let vhat = self.forward(v, &mut scratch);
        let total = vhat.len() as f64;
        let ncomp = component_pairs(self.n).len();
        let mut out = vec![vec![0.0; self.eval.len()]; ncomp];
        for (p, spec) in self.spectra.iter().enumerate() {
            let mut buf: Vec<Complex<f64>> = vhat.iter().zip(spec).map(|(a, b)| a * b).collect();
            self.fft.run(&mut buf, true, &mut scratch);
            for (e, &bi) in self.eval_to_buf.iter().enumerate() {
                let c = buf[bi] / total;
                out[2 * p][e] = 2.0 * c.re;
                if 2 * p + 1 < ncomp {
                    out[2 * p + 1][e] = 2.0 * c.im;
                }
            }
        }
        for (e, src) in self.eval_to_src.iter().enumerate() {
            if let Some(s) = src {
                let ve = v[*s];
                for a in 0..self.n {
                    out[a][e] -= 2.0 * ve * self.s_all;
                }
            }
        }
        out
    }
}
