//! Linear operators `x ↦ Tr(A(x) H_v(x))` for a frozen coefficient field,
//! used as the Newton step of policy iteration.

use crate::grid::Domain;
use crate::kernel::{component_pairs, IndexBox, MomentConv, QuadConfig};
use crate::operators::SymMat;

/// Lattice points of an open ball and their enclosing index box.
pub struct BallLattice {
    pub bx: IndexBox,
    /// Box flat index of each point of the ball.
    pub points: Vec<usize>,
    /// Domain flat index of each point of the ball.
    pub domain_points: Vec<usize>,
}

impl BallLattice {
    pub fn new(domain: &Domain, radius: f64) -> Self {
        let n = domain.n();
        let h = domain.h();
        let r = ((radius / h).ceil() as i64).min(domain.cells() as i64);
        let bx = IndexBox::centered(n, r);
        let mut points = Vec::new();
        let mut domain_points = Vec::new();
        for b in 0..bx.len() {
            let idx = bx.index(b);
            let r2: f64 = idx[..n].iter().map(|&k| (k as f64 * h).powi(2)).sum();
            if r2 < radius * radius {
                points.push(b);
                domain_points.push(domain.flat_of(&idx[..n]).expect("ball inside the box"));
            }
        }
        BallLattice { bx, points, domain_points }
    }
}

pub struct PolicyOperator {
    pub conv: MomentConv,
    pub n: usize,
}

impl PolicyOperator {
    pub fn new(domain: &Domain, sigma: f64, quad: &QuadConfig, bx: IndexBox) -> Self {
        PolicyOperator { conv: MomentConv::new(domain.n(), sigma, domain.h(), quad, bx, bx), n: domain.n() }
    }

    /// Moment matrices on every box point for box values `v`.
    pub fn moments(&self, v: &[f64]) -> Vec<SymMat> {
        let comps = self.conv.moments(v);
        let nc = comps.len();
        (0..v.len())
            .map(|b| {
                let c: Vec<f64> = (0..nc).map(|k| comps[k][b]).collect();
                SymMat::from_comps(self.n, &c)
            })
            .collect()
    }

    /// `Tr(A_k H_v(x_k))` at the listed box points.
    pub fn contract(&self, v: &[f64], rows: &[usize], coef: &[SymMat]) -> Vec<f64> {
        let comps = self.conv.moments(v);
        let pairs = component_pairs(self.n);
        rows.iter()
            .zip(coef)
            .map(|(&b, a)| {
                pairs
                    .iter()
                    .enumerate()
                    .map(|(ci, &(p, q))| {
                        let w = if p == q { 1.0 } else { 2.0 };
                        w * a.m[p][q] * comps[ci][b]
                    })
                    .sum()
            })
            .collect()
    }

    /// Coefficient of `v(x)` in `Tr(A H_v(x))`.
    pub fn diagonal(&self, a: &SymMat) -> f64 {
        -2.0 * self.conv.s_all * a.trace()
    }

    /// Inverse of the periodic operator with the mean coefficient of `coef`,
    /// restricted to `rows`.
    pub fn mean_preconditioner(&self, rows: &[usize], coef: &[SymMat]) -> impl Fn(&[f64]) -> Vec<f64> + '_ {
        let pairs = component_pairs(self.n);
        let mut mean = vec![0.0; pairs.len()];
        for a in coef {
            for (ci, &(p, q)) in pairs.iter().enumerate() {
                mean[ci] += a.m[p][q];
            }
        }
        let k = coef.len().max(1) as f64;
        mean.iter_mut().for_each(|v| *v /= k);
        let symbol = self.conv.symbol(&mean);
        let rows = rows.to_vec();
        move |r: &[f64]| {
            let mut v = vec![0.0; self.conv.src.len()];
            for (&b, &x) in rows.iter().zip(r) {
                v[b] = x;
            }
            let z = self.conv.apply_inverse_symbol(&symbol, &v);
            rows.iter().map(|&b| z[b]).collect()
        }
    }

    /// Applies the operator to unknowns living on `rows` (zero elsewhere).
    pub fn apply_on(&self, x: &[f64], rows: &[usize], coef: &[SymMat]) -> Vec<f64> {
        let mut v = vec![0.0; self.conv.src.len()];
        for (&b, &xv) in rows.iter().zip(x) {
            v[b] = xv;
        }
        self.contract(&v, rows, coef)
    }
}
