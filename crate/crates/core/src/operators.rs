//! Extremal fractional Pucci operators, the fractional Hessian and its first
//! eigenvalue, all read off the kernel moment matrix `H(x)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Exterior, GridFunction};
use crate::kernel::{component_pairs, unit_kernel, IndexBox, MomentConv, QuadConfig, TailMode};
use crate::special::cal_a;

/// Symmetric matrix of size `n ≤ 3`, stored densely.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SymMat {
    pub n: usize,
    pub m: [[f64; 3]; 3],
}

/// Ascending eigenvalues with unit eigenvectors (`vectors[k]` belongs to
/// `values[k]`).
#[derive(Debug, Clone, Copy)]
pub struct Eigen {
    pub values: [f64; 3],
    pub vectors: [[f64; 3]; 3],
}

impl SymMat {
    pub fn zeros(n: usize) -> Self {
        SymMat { n, m: [[0.0; 3]; 3] }
    }

    pub fn identity(n: usize) -> Self {
        let mut s = SymMat::zeros(n);
        for a in 0..n {
            s.m[a][a] = 1.0;
        }
        s
    }

    /// From components in `component_pairs` order.
    pub fn from_comps(n: usize, c: &[f64]) -> Self {
        let mut s = SymMat::zeros(n);
        for (ci, &(a, b)) in component_pairs(n).iter().enumerate() {
            s.m[a][b] = c[ci];
            s.m[b][a] = c[ci];
        }
        s
    }

    pub fn scaled(mut self, k: f64) -> Self {
        for row in self.m.iter_mut() {
            for v in row.iter_mut() {
                *v *= k;
            }
        }
        self
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|a| self.m[a][a]).sum()
    }

    /// `Tr(self · other)`.
    pub fn dot(&self, other: &SymMat) -> f64 {
        let mut acc = 0.0;
        for a in 0..self.n {
            for b in 0..self.n {
                acc += self.m[a][b] * other.m[a][b];
            }
        }
        acc
    }

    pub fn quad(&self, t: &[f64]) -> f64 {
        let mut acc = 0.0;
        for a in 0..self.n {
            for b in 0..self.n {
                acc += t[a] * self.m[a][b] * t[b];
            }
        }
        acc
    }

    pub fn max_abs(&self) -> f64 {
        self.m.iter().flatten().fold(0.0f64, |a, v| a.max(v.abs()))
    }

    /// Rank-one sum `Σ c_k v_k v_kᵀ`.
    pub fn from_spectrum(n: usize, coeffs: &[f64], vectors: &[[f64; 3]]) -> Self {
        let mut s = SymMat::zeros(n);
        for (c, v) in coeffs.iter().zip(vectors).take(n) {
            for a in 0..n {
                for b in 0..n {
                    s.m[a][b] += c * v[a] * v[b];
                }
            }
        }
        s
    }

    pub fn eigen(&self) -> Eigen {
        if self.n == 2 {
            eigen2(self)
        } else {
            eigen3(self)
        }
    }
}

fn eigen2(s: &SymMat) -> Eigen {
    let (a, b, d) = (s.m[0][0], s.m[0][1], s.m[1][1]);
    let mean = 0.5 * (a + d);
    let r = (0.5 * (a - d)).hypot(b);
    let theta = 0.5 * b.atan2(0.5 * (a - d));
    let theta = if r == 0.0 { 0.0 } else { theta };
    let (sn, cs) = theta.sin_cos();
    Eigen {
        values: [mean - r, mean + r, 0.0],
        vectors: [[-sn, cs, 0.0], [cs, sn, 0.0], [0.0, 0.0, 1.0]],
    }
}

/// Cyclic Jacobi rotations; converges to full precision in a few sweeps.
fn eigen3(s: &SymMat) -> Eigen {
    let mut a = s.m;
    let mut v = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    for _ in 0..64 {
        let off = a[0][1].abs() + a[0][2].abs() + a[1][2].abs();
        if off == 0.0 {
            break;
        }
        for (p, q) in [(0, 1), (0, 2), (1, 2)] {
            if a[p][q] == 0.0 {
                continue;
            }
            let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
            let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
            let t = if theta == 0.0 { 1.0 } else { t };
            let c = 1.0 / (t * t + 1.0).sqrt();
            let sn = t * c;
            for k in 0..3 {
                let akp = a[k][p];
                let akq = a[k][q];
                a[k][p] = c * akp - sn * akq;
                a[k][q] = sn * akp + c * akq;
            }
            for k in 0..3 {
                let apk = a[p][k];
                let aqk = a[q][k];
                a[p][k] = c * apk - sn * aqk;
                a[q][k] = sn * apk + c * aqk;
            }
            for row in v.iter_mut() {
                let vp = row[p];
                let vq = row[q];
                row[p] = c * vp - sn * vq;
                row[q] = sn * vp + c * vq;
            }
        }
        let scale = a[0][0].abs() + a[1][1].abs() + a[2][2].abs();
        let off = a[0][1].abs() + a[0][2].abs() + a[1][2].abs();
        if off <= 1e-18 * scale {
            break;
        }
    }
    let mut order = [0usize, 1, 2];
    order.sort_by(|&i, &j| a[i][i].total_cmp(&a[j][j]));
    let mut out = Eigen { values: [0.0; 3], vectors: [[0.0; 3]; 3] };
    for (k, &i) in order.iter().enumerate() {
        out.values[k] = a[i][i];
        out.vectors[k] = [v[0][i], v[1][i], v[2][i]];
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Min,
    Max,
}

/// Ellipticity class `{λ ≤ Tr A, 0 ≤ A ≤ Λ Id}` and the order `σ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PucciEllipticity {
    pub n: usize,
    pub lambda: f64,
    pub big_lambda: f64,
    pub sigma: f64,
}

impl PucciEllipticity {
    pub fn new(n: usize, lambda: f64, big_lambda: f64, sigma: f64) -> Result<Self> {
        let e = PucciEllipticity { n, lambda, big_lambda, sigma };
        e.validate()?;
        Ok(e)
    }

    pub fn validate(&self) -> Result<()> {
        check_sigma(self.sigma)?;
        self.check_class()
    }

    fn check_class(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.big_lambda > 0.0) {
            return Err(Error::InvalidArgument("ellipticity constants must be positive".into()));
        }
        let bound = self.n as f64 * self.big_lambda;
        if self.lambda > bound {
            return Err(Error::InfeasibleEllipticity { lambda: self.lambda, bound });
        }
        Ok(())
    }

    pub fn with_sigma(mut self, sigma: f64) -> Self {
        self.sigma = sigma;
        self
    }
}

pub fn check_sigma(sigma: f64) -> Result<()> {
    if sigma > 1.0 && sigma < 2.0 {
        Ok(())
    } else {
        Err(Error::SigmaDomain(sigma))
    }
}

/// Optimal diagonal coefficients `a_k` for eigenvalues sorted ascending.
pub fn pucci_coefficients(eigs: &[f64], lambda: f64, big_lambda: f64, mode: Mode) -> [f64; 3] {
    let n = eigs.len();
    let mut a = [0.0; 3];
    let mut mass = 0.0;
    match mode {
        Mode::Min => {
            for k in 0..n {
                if eigs[k] < 0.0 {
                    a[k] = big_lambda;
                    mass += big_lambda;
                }
            }
            for k in 0..n {
                if eigs[k] >= 0.0 && mass < lambda {
                    a[k] = big_lambda.min(lambda - mass);
                    mass += a[k];
                }
            }
        }
        Mode::Max => {
            for k in 0..n {
                if eigs[k] > 0.0 {
                    a[k] = big_lambda;
                    mass += big_lambda;
                }
            }
            for k in (0..n).rev() {
                if eigs[k] <= 0.0 && mass < lambda {
                    a[k] = big_lambda.min(lambda - mass);
                    mass += a[k];
                }
            }
        }
    }
    a
}

/// `min` or `max` of `Σ a_k h_k` over `0 ≤ a_k ≤ Λ`, `Σ a_k ≥ λ`.
pub fn pucci_extremal_eigs(h_eigs: &[f64], ell: &PucciEllipticity, mode: Mode) -> Result<f64> {
    ell.check_class()?;
    let mut e = h_eigs.to_vec();
    e.sort_by(f64::total_cmp);
    let a = pucci_coefficients(&e, ell.lambda, ell.big_lambda, mode);
    Ok(e.iter().zip(&a).map(|(h, a)| h * a).sum())
}

/// Extremal value `Tr(A* H)` and the optimal matrix `A*` for a moment matrix.
pub fn pucci_policy(hm: &SymMat, lambda: f64, big_lambda: f64, mode: Mode) -> (f64, SymMat) {
    let eig = hm.eigen();
    let n = hm.n;
    let a = pucci_coefficients(&eig.values[..n], lambda, big_lambda, mode);
    let value = (0..n).map(|k| a[k] * eig.values[k]).sum();
    (value, SymMat::from_spectrum(n, &a[..n], &eig.vectors))
}

/// `((n+σ-2)(n+σ)/2) 𝒜(2-σ, n)`, the factor turning `H` into `D^σ`.
pub fn hessian_factor(n: usize, sigma: f64) -> Result<f64> {
    check_sigma(sigma)?;
    let nf = n as f64;
    Ok((nf + sigma - 2.0) * (nf + sigma) / 2.0 * cal_a(2.0 - sigma, n)?)
}

/// Moment matrix at a lattice point with diagnostics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KernelMoment {
    pub h: SymMat,
    pub x: Vec<f64>,
    pub near_field_radius: f64,
    /// Size of the analytically integrated contribution beyond the window.
    pub tail_estimate: f64,
    /// Local second differences at `h` and `2h` disagree: the point is not
    /// classical and the value is meaningful only against touching tests.
    pub nonclassical: bool,
}

/// Values of `u − far` over the bounding box of its support, including any
/// nontrivial part of a tabulated exterior.
pub struct Support {
    pub bx: IndexBox,
    pub vals: Vec<f64>,
    pub far: f64,
}

pub fn support_of(u: &GridFunction) -> Support {
    let d = u.domain();
    let n = d.n();
    let far = u.exterior().far_value();
    let mut lo = [i64::MAX; 3];
    let mut hi = [i64::MIN; 3];
    for (i, &v) in u.values().iter().enumerate() {
        if v != far {
            let idx = d.index_of(i);
            for a in 0..n {
                lo[a] = lo[a].min(idx[a]);
                hi[a] = hi[a].max(idx[a]);
            }
        }
    }
    if let Exterior::Table { .. } = u.exterior() {
        let r = (u.exterior().settled_radius() / d.h()).ceil() as i64;
        if r > d.cells() as i64 {
            for a in 0..n {
                lo[a] = lo[a].min(-r);
                hi[a] = hi[a].max(r);
            }
        }
    }
    if lo[0] > hi[0] {
        return Support { bx: IndexBox::new(n, [0; 3], [-1; 3]), vals: Vec::new(), far };
    }
    let bx = IndexBox::new(n, lo, hi);
    let vals = (0..bx.len()).map(|s| u.at_index(&bx.index(s)[..n]) - far).collect();
    Support { bx, vals, far }
}

fn on_lattice(u: &GridFunction, x: &[f64]) -> Result<[i64; 3]> {
    let d = u.domain();
    if x.len() != d.n() {
        return Err(Error::InvalidArgument(format!("point has {} coordinates", x.len())));
    }
    let idx = d
        .lattice_index(x)
        .ok_or_else(|| Error::InvalidArgument(format!("point {x:?} is not on the lattice")))?;
    if !d.contains_index(&idx[..d.n()]) {
        return Err(Error::InvalidArgument(format!("point {x:?} outside the box")));
    }
    Ok(idx)
}

/// `δ(u, x, y) = u(x+y) + u(x−y) − 2u(x)`, interpolating off-lattice values.
pub fn second_difference(u: &GridFunction, x: &[f64], y: &[f64]) -> f64 {
    let n = u.domain().n();
    let mut p = [0.0; 3];
    let mut m = [0.0; 3];
    for a in 0..n {
        p[a] = x[a] + y[a];
        m[a] = x[a] - y[a];
    }
    u.sample(&p[..n]) + u.sample(&m[..n]) - 2.0 * u.sample(x)
}

fn nonclassical_at(u: &GridFunction, idx: &[i64]) -> bool {
    let n = u.domain().n();
    let h = u.domain().h();
    let c = u.at_index(idx);
    let scale = u.sup_norm().max(u.exterior().far_value().abs()).max(1e-300);
    for a in 0..n {
        let mut d = [0.0; 2];
        for (s, step) in [1i64, 2].iter().enumerate() {
            let mut p = [0i64; 3];
            let mut q = [0i64; 3];
            p[..n].copy_from_slice(&idx[..n]);
            q[..n].copy_from_slice(&idx[..n]);
            p[a] += step;
            q[a] -= step;
            d[s] = (u.at_index(&p[..n]) + u.at_index(&q[..n]) - 2.0 * c) / ((step * step) as f64 * h * h);
        }
        let gap = (d[0] - d[1]).abs();
        if gap > 0.5 * (d[0].abs() + d[1].abs()) && gap > 1e-6 * scale / (h * h) {
            return true;
        }
    }
    false
}

/// `H(x) = ∫ δ(u,x,y) y yᵀ |y|^{-n-σ-2} dy` at a lattice point.
pub fn kernel_moment(u: &GridFunction, x: &[f64], sigma: f64, quad: &QuadConfig) -> Result<KernelMoment> {
    check_sigma(sigma)?;
    quad.validate()?;
    let idx = on_lattice(u, x)?;
    let n = u.domain().n();
    let h = u.domain().h();
    let sup = support_of(u);
    let pt = IndexBox::new(n, idx, idx);
    let window = pt.reach(&sup.bx).max(1);
    let uk = unit_kernel(n, sigma, quad, window);
    let scale = h.powf(-sigma);
    let pairs = component_pairs(n);
    let mut comps = vec![0.0; pairs.len()];
    for (s, &v) in sup.vals.iter().enumerate() {
        if v == 0.0 {
            continue;
        }
        let p = sup.bx.index(s);
        let mut j = [0i64; 3];
        for a in 0..n {
            j[a] = p[a] - idx[a];
        }
        if j[..n].iter().all(|&k| k == 0) {
            continue;
        }
        for (ci, c) in comps.iter_mut().enumerate() {
            *c += 2.0 * v * uk.weight(&j, ci);
        }
    }
    let tail = match quad.tail {
        TailMode::Analytic => uk.tail_diag(window),
        TailMode::Drop => 0.0,
    };
    let s_all = uk.window_sum(window) + tail;
    let vx = u.at_index(&idx[..n]) - sup.far;
    for c in comps.iter_mut() {
        *c *= scale;
    }
    for c in comps.iter_mut().take(n) {
        *c -= 2.0 * vx * s_all * scale;
    }
    Ok(KernelMoment {
        h: SymMat::from_comps(n, &comps),
        x: x.to_vec(),
        near_field_radius: quad.near_cells as f64 * h,
        tail_estimate: 2.0 * vx.abs() * tail * scale * (n as f64).sqrt(),
        nonclassical: nonclassical_at(u, &idx[..n]),
    })
}

/// `𝓜⁻u(x)` or `𝓜⁺u(x)`.
pub fn m_extremal(u: &GridFunction, x: &[f64], ell: &PucciEllipticity, mode: Mode, quad: &QuadConfig) -> Result<f64> {
    ell.validate()?;
    let km = kernel_moment(u, x, ell.sigma, quad)?;
    let (v, _) = pucci_policy(&km.h, ell.lambda, ell.big_lambda, mode);
    Ok((2.0 - ell.sigma) * v)
}

/// `D^σ v(x)`.
pub fn fractional_hessian(v: &GridFunction, x: &[f64], sigma: f64, quad: &QuadConfig) -> Result<SymMat> {
    let k = hessian_factor(v.domain().n(), sigma)?;
    Ok(kernel_moment(v, x, sigma, quad)?.h.scaled(k))
}

/// `E_σ v(x)`, the least eigenvalue of `D^σ v(x)`.
pub fn first_eigenvalue(v: &GridFunction, x: &[f64], sigma: f64, quad: &QuadConfig) -> Result<f64> {
    Ok(fractional_hessian(v, x, sigma, quad)?.eigen().values[0])
}

/// Operator value at `x` on the spliced function equal to `phi` on
/// `B_radius(x)` and to `u` elsewhere.
pub fn evaluate_with_test(
    u: &GridFunction,
    phi: impl Fn(&[f64]) -> f64,
    x: &[f64],
    radius: f64,
    ell: &PucciEllipticity,
    mode: Mode,
    quad: &QuadConfig,
) -> Result<f64> {
    let d = u.domain();
    let n = d.n();
    let mut spliced = u.clone();
    for (i, v) in spliced.values_mut().iter_mut().enumerate() {
        let p = d.point_of(i);
        let r2: f64 = (0..n).map(|a| (p[a] - x[a]).powi(2)).sum();
        if r2 < radius * radius {
            *v = phi(&p[..n]);
        }
    }
    m_extremal(&spliced, x, ell, mode, quad)
}

/// Moment matrices at the given lattice points, by FFT convolution.
pub fn moment_field(u: &GridFunction, points: &[usize], sigma: f64, quad: &QuadConfig) -> Result<Vec<SymMat>> {
    check_sigma(sigma)?;
    quad.validate()?;
    let d = u.domain();
    let n = d.n();
    if points.is_empty() {
        return Ok(Vec::new());
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
    let sup = support_of(u);
    if sup.bx.is_empty() {
        return Ok(vec![SymMat::zeros(n); points.len()]);
    }
    let conv = MomentConv::new(n, sigma, d.h(), quad, sup.bx, eval);
    let comps = conv.moments(&sup.vals);
    let ncomp = comps.len();
    Ok(points
        .iter()
        .map(|&p| {
            let idx = d.index_of(p);
            let e = eval.flat(&idx[..n]).expect("point inside eval box");
            let c: Vec<f64> = (0..ncomp).map(|k| comps[k][e]).collect();
            SymMat::from_comps(n, &c)
        })
        .collect())
}

/// `𝓜∓u` at the given lattice points.
pub fn m_extremal_field(
    u: &GridFunction,
    points: &[usize],
    ell: &PucciEllipticity,
    mode: Mode,
    quad: &QuadConfig,
) -> Result<Vec<f64>> {
    ell.validate()?;
    let k = 2.0 - ell.sigma;
    Ok(moment_field(u, points, ell.sigma, quad)?
        .iter()
        .map(|hm| k * pucci_policy(hm, ell.lambda, ell.big_lambda, mode).0)
        .collect())
}

/// `E_σ v` at the given lattice points.
pub fn first_eigenvalue_field(v: &GridFunction, points: &[usize], sigma: f64, quad: &QuadConfig) -> Result<Vec<f64>> {
    let k = hessian_factor(v.domain().n(), sigma)?;
    Ok(moment_field(v, points, sigma, quad)?.iter().map(|hm| k * hm.eigen().values[0]).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Domain;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn ell(lambda: f64, big: f64) -> PucciEllipticity {
        PucciEllipticity::new(2, lambda, big, 1.5).unwrap()
    }

    #[test]
    fn pucci_examples() {
        let e = ell(1.0, 1.0);
        assert_eq!(pucci_extremal_eigs(&[0.0, 0.0], &e, Mode::Min).unwrap(), 0.0);
        assert_eq!(pucci_extremal_eigs(&[-1.0, 2.0], &e, Mode::Min).unwrap(), -1.0);
        assert_eq!(pucci_extremal_eigs(&[-1.0, 2.0], &e, Mode::Max).unwrap(), 2.0);
        assert_eq!(pucci_extremal_eigs(&[1.0, 2.0], &e, Mode::Min).unwrap(), 1.0);
        let bad = PucciEllipticity { n: 2, lambda: 3.0, big_lambda: 1.0, sigma: 1.5 };
        assert!(matches!(
            pucci_extremal_eigs(&[0.0, 1.0], &bad, Mode::Min),
            Err(Error::InfeasibleEllipticity { .. })
        ));
        assert!(PucciEllipticity::new(2, 1.0, 1.0, 2.0).is_err());
    }

    #[test]
    fn eigen_decompositions_reconstruct() {
        let mats = [
            SymMat { n: 2, m: [[2.0, 0.5, 0.0], [0.5, -1.0, 0.0], [0.0; 3]] },
            SymMat { n: 2, m: [[3.0, 0.0, 0.0], [0.0, 3.0, 0.0], [0.0; 3]] },
            SymMat { n: 3, m: [[2.0, 0.5, -0.3], [0.5, -1.0, 0.7], [-0.3, 0.7, 0.2]] },
            SymMat { n: 3, m: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]] },
            SymMat { n: 3, m: [[1.0, 1.0, 0.0], [1.0, 1.0, 0.0], [0.0, 0.0, 5.0]] },
        ];
        for s in mats {
            let e = s.eigen();
            let back = SymMat::from_spectrum(s.n, &e.values[..s.n], &e.vectors);
            for a in 0..s.n {
                for b in 0..s.n {
                    assert!((back.m[a][b] - s.m[a][b]).abs() < 1e-13);
                }
            }
            for k in 1..s.n {
                assert!(e.values[k - 1] <= e.values[k]);
            }
        }
    }

    #[test]
    fn constant_function_has_zero_moment() {
        let d = Domain::with_default_extent(2, 0.25).unwrap();
        let u = GridFunction::from_fn(&d, 3.0, |_| 3.0);
        let km = kernel_moment(&u, &[0.5, -0.25], 1.5, &QuadConfig::default()).unwrap();
        assert_eq!(km.h.max_abs(), 0.0);
        let e = ell(1.5, 1.0);
        assert_eq!(m_extremal(&u, &[0.0, 0.0], &e, Mode::Min, &QuadConfig::default()).unwrap(), 0.0);
    }

    #[test]
    fn second_difference_examples() {
        let d = Domain::with_default_extent(2, 0.1).unwrap();
        let q = GridFunction::from_fn(&d, 0.0, |p| p[0] * p[0] + p[1] * p[1]);
        assert_relative_eq!(second_difference(&q, &[0.0, 0.0], &[0.3, 0.4]), 0.5, max_relative = 1e-12);
        let cube = GridFunction::from_fn(&d, 0.0, |p| p[0].powi(3));
        assert_relative_eq!(second_difference(&cube, &[0.5, 0.0], &[0.1, 0.0]), 0.03, max_relative = 1e-9);
    }

    #[test]
    fn radial_function_gives_scalar_moment() {
        let d = Domain::with_default_extent(2, 0.125).unwrap();
        let u = GridFunction::from_fn(&d, 0.0, |p| (-(p[0] * p[0] + p[1] * p[1])).exp());
        let km = kernel_moment(&u, &[0.0, 0.0], 1.5, &QuadConfig::default()).unwrap();
        assert!(km.h.m[0][1].abs() < 1e-12 * km.h.max_abs());
        assert_relative_eq!(km.h.m[0][0], km.h.m[1][1], max_relative = 1e-12);
    }

    #[test]
    fn field_matches_pointwise() {
        let d = Domain::with_default_extent(2, 0.25).unwrap();
        let u = GridFunction::from_fn(&d, 0.0, |p| {
            let r2 = p[0] * p[0] + 2.0 * p[1] * p[1];
            if r2 < 4.0 { (4.0 - r2) * (p[0] + 0.3) } else { 0.0 }
        });
        let quad = QuadConfig::default();
        let pts: Vec<usize> = (0..d.len()).step_by(97).collect();
        let field = moment_field(&u, &pts, 1.7, &quad).unwrap();
        for (k, &p) in pts.iter().enumerate() {
            let x = d.point_of(p);
            let km = kernel_moment(&u, &x[..2], 1.7, &quad).unwrap();
            let scale = km.h.max_abs().max(1.0);
            for a in 0..2 {
                for b in 0..2 {
                    assert!((km.h.m[a][b] - field[k].m[a][b]).abs() < 1e-9 * scale);
                }
            }
        }
    }

    #[test]
    fn negative_bump_has_positive_first_eigenvalue() {
        let d = Domain::with_default_extent(2, 1.0 / 16.0).unwrap();
        let bump = |p: &[f64]| {
            let r2 = p[0] * p[0] + p[1] * p[1];
            if r2 < 1.0 { -(1.0 - 1.0 / (1.0 - r2)).exp() } else { 0.0 }
        };
        let v = GridFunction::from_fn(&d, 0.0, bump);
        assert!(first_eigenvalue(&v, &[0.0, 0.0], 1.5, &QuadConfig::default()).unwrap() > 0.0);
        let zero = GridFunction::zeros(&d);
        assert_eq!(first_eigenvalue(&zero, &[0.0, 0.0], 1.5, &QuadConfig::default()).unwrap(), 0.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn pucci_matches_grid_lp(h1 in -5.0f64..5.0, h2 in -5.0f64..5.0, lam in 0.1f64..2.0, big in 1.0f64..2.0) {
            let e = PucciEllipticity { n: 2, lambda: lam, big_lambda: big, sigma: 1.5 };
            let g = 200;
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for i in 0..=g {
                for j in 0..=g {
                    let a1 = big * i as f64 / g as f64;
                    let a2 = big * j as f64 / g as f64;
                    if a1 + a2 >= lam {
                        let v = a1 * h1 + a2 * h2;
                        lo = lo.min(v);
                        hi = hi.max(v);
                    }
                }
            }
            let tol = 2.0 * big * h1.abs().max(h2.abs()) / g as f64 + 1e-12;
            let min = pucci_extremal_eigs(&[h1, h2], &e, Mode::Min).unwrap();
            let max = pucci_extremal_eigs(&[h1, h2], &e, Mode::Max).unwrap();
            prop_assert!(min <= lo + 1e-12 && lo - min <= tol);
            prop_assert!(max >= hi - 1e-12 && max - hi <= tol);
        }

        #[test]
        fn eigen_min_is_sphere_min(a in -3.0f64..3.0, b in -3.0f64..3.0, c in -3.0f64..3.0) {
            let s = SymMat { n: 2, m: [[a, b, 0.0], [b, c, 0.0], [0.0; 3]] };
            let e = s.eigen().values[0];
            let sampled = (0..3600)
                .map(|k| {
                    let t = k as f64 * std::f64::consts::TAU / 3600.0;
                    s.quad(&[t.cos(), t.sin()])
                })
                .fold(f64::INFINITY, f64::min);
            prop_assert!(e <= sampled + 1e-12);
            prop_assert!(sampled - e <= 1e-5 * (1.0 + s.max_abs()));
        }
    }
}
