//! The fractional convex envelope: the largest `Γ` with `E_σΓ ≥ 0` in `B₃`,
//! `Γ ≤ −u⁻`, `Γ = 0` outside `B₃`, from `min{E_σΓ, −u⁻ − Γ} = 0`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Domain, Exterior, GridFunction, Region};
use crate::kernel::QuadConfig;
use crate::operators::{check_sigma, first_eigenvalue_field, hessian_factor, SymMat};
use crate::policy::{BallLattice, PolicyOperator};
use crate::supersolution::{linear_solve, Krylov};

pub const ENVELOPE_RADIUS: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnvelopeMethod {
    /// Policy iteration over the obstacle/operator branch and the eigen
    /// direction; each step solves a linear system on the operator branch.
    Policy,
    /// Projected Jacobi relaxation `Γ ← min(−u⁻, Γ + ω E_σΓ / d)`.
    Relaxation,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvelopeConfig {
    pub method: EnvelopeMethod,
    pub krylov: Krylov,
    /// Absolute tolerance; `None` means `1e-8 ‖u⁻‖∞`.
    pub tol: Option<f64>,
    /// `None` means 100 policy steps or `1e5` relaxation sweeps.
    pub max_iter: Option<usize>,
    pub relax: f64,
    pub linear_max_iter: usize,
    /// Start policy iteration from the envelope on the `2h` lattice,
    /// recursively down to `h = 1/8`.
    pub nested: bool,
    pub quad: QuadConfig,
}

impl Default for EnvelopeConfig {
    fn default() -> Self {
        EnvelopeConfig {
            method: EnvelopeMethod::Policy,
            krylov: Krylov::Gmres,
            tol: None,
            max_iter: None,
            relax: 1.0,
            linear_max_iter: 4000,
            nested: true,
            quad: QuadConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnvelopeResult {
    pub gamma: GridFunction,
    /// Lattice points of `B₃` with `−u⁻ − Γ ≤ 10 tol`.
    pub contact: Vec<bool>,
    /// `E_σΓ` on the lattice points of `B₃`, 0 elsewhere.
    pub residual_esigma: GridFunction,
    /// `−u⁻ − Γ` on the lattice points of `B₃`, 0 elsewhere.
    pub residual_obstacle: GridFunction,
    pub iterations: usize,
    pub converged: bool,
    pub tol: f64,
}

impl EnvelopeResult {
    pub fn contact_region(&self) -> Region {
        Region::Mask(self.contact.clone())
    }
}

/// Scalar certificate of an envelope.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EnvelopeSummary {
    /// `max |min{E_σΓ, −u⁻ − Γ}|` over `B₃`.
    pub max_complementarity: f64,
    pub mean_complementarity: f64,
    /// `max (Γ + u⁻)⁺`.
    pub max_obstacle_violation: f64,
    pub contact_measure: f64,
    pub inf_gamma: f64,
    pub converged: bool,
}

fn obstacle(u: &GridFunction, p: usize) -> f64 {
    u.values()[p].min(0.0)
}

pub fn compute_envelope(u: &GridFunction, sigma: f64, cfg: &EnvelopeConfig) -> Result<EnvelopeResult> {
    check_sigma(sigma)?;
    cfg.quad.validate()?;
    if u.values().iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("u must be bounded".into()));
    }
    let d = u.domain().clone();
    let lat = BallLattice::new(&d, ENVELOPE_RADIUS);
    let psi: Vec<f64> = lat.domain_points.iter().map(|&p| obstacle(u, p)).collect();
    let neg_inf = psi.iter().fold(0.0f64, |m, v| m.max(-v));
    let tol = cfg.tol.unwrap_or(1e-8 * neg_inf);
    let tol = if tol > 0.0 { tol } else { 1e-14 };
    let kappa = hessian_factor(d.n(), sigma)?;
    let op = PolicyOperator::new(&d, sigma, &cfg.quad, lat.bx);

    let mut g = psi.clone();
    if cfg.method == EnvelopeMethod::Policy && cfg.nested && neg_inf > 0.0 {
        if let Some(coarse) = coarse_start(u, sigma, cfg)? {
            for (k, &p) in lat.domain_points.iter().enumerate() {
                let x = d.point_of(p);
                g[k] = psi[k].min(coarse.sample(&x[..d.n()]));
            }
        }
    }
    let (iterations, converged) = if neg_inf == 0.0 {
        (0, true)
    } else {
        match cfg.method {
            EnvelopeMethod::Policy => policy(&op, &lat, &psi, &mut g, kappa, tol, cfg)?,
            EnvelopeMethod::Relaxation => relaxation(&op, &lat, &psi, &mut g, kappa, tol, cfg),
        }
    };

    let mut gv = vec![0.0; d.len()];
    for (k, &p) in lat.domain_points.iter().enumerate() {
        gv[p] = g[k];
    }
    let gamma = GridFunction::new(d.clone(), gv, Exterior::Constant(0.0))?;
    let e = first_eigenvalue_field(&gamma, &lat.domain_points, sigma, &cfg.quad)?;
    let mut ev = vec![0.0; d.len()];
    let mut ov = vec![0.0; d.len()];
    let mut contact = vec![false; d.len()];
    let mut worst = 0.0f64;
    for (k, &p) in lat.domain_points.iter().enumerate() {
        ev[p] = e[k];
        ov[p] = psi[k] - g[k];
        contact[p] = ov[p] <= 10.0 * tol;
        worst = worst.max(ev[p].min(ov[p]).abs());
    }
    Ok(EnvelopeResult {
        gamma,
        contact,
        residual_esigma: GridFunction::new(d.clone(), ev, Exterior::Constant(0.0))?,
        residual_obstacle: GridFunction::new(d, ov, Exterior::Constant(0.0))?,
        iterations,
        converged: converged && worst < tol,
        tol,
    })
}

/// Envelope of `u` restricted to the `2h` lattice, if that lattice is not
/// coarser than `1/8`.
fn coarse_start(u: &GridFunction, sigma: f64, cfg: &EnvelopeConfig) -> Result<Option<GridFunction>> {
    let d = u.domain();
    let n = d.n();
    let hc = 2.0 * d.h();
    if hc > 0.125 + 1e-12 || d.cells() % 2 != 0 {
        return Ok(None);
    }
    let dc = Domain::new(n, hc, d.half_extent())?;
    let vals = (0..dc.len())
        .map(|i| {
            let idx = dc.index_of(i);
            let mut q = [0i64; 3];
            for a in 0..n {
                q[a] = 2 * idx[a];
            }
            u.at_index(&q[..n])
        })
        .collect();
    let uc = GridFunction::new(dc, vals, u.exterior().clone())?;
    let ccfg = EnvelopeConfig { tol: cfg.tol.map(|t| 10.0 * t), ..cfg.clone() };
    Ok(Some(compute_envelope(&uc, sigma, &ccfg)?.gamma))
}

/// Least eigenvalues (scaled by `κ`) and eigen directions at every point.
fn eigen_policy(op: &PolicyOperator, lat: &BallLattice, g: &[f64], kappa: f64) -> Vec<(f64, [f64; 3])> {
    let mut v = vec![0.0; op.conv.src.len()];
    for (&b, &x) in lat.points.iter().zip(g) {
        v[b] = x;
    }
    let m = op.moments(&v);
    lat.points
        .iter()
        .map(|&b| {
            let eig = m[b].eigen();
            (kappa * eig.values[0], eig.vectors[0])
        })
        .collect()
}

fn policy(
    op: &PolicyOperator,
    lat: &BallLattice,
    psi: &[f64],
    g: &mut [f64],
    kappa: f64,
    tol: f64,
    cfg: &EnvelopeConfig,
) -> Result<(usize, bool)> {
    let n = op.n;
    let max_iter = cfg.max_iter.unwrap_or(100);
    let mut prev_free: Option<Vec<usize>> = None;
    for it in 0..=max_iter {
        let pol = eigen_policy(op, lat, g, kappa);
        let mut worst = 0.0f64;
        let mut free = Vec::new();
        let mut coef = Vec::new();
        for (k, &(e, t)) in pol.iter().enumerate() {
            let o = psi[k] - g[k];
            worst = worst.max(e.min(o).abs());
            if e < o {
                free.push(k);
                let mut a = SymMat::zeros(n);
                for p in 0..n {
                    for q in 0..n {
                        a.m[p][q] = kappa * t[p] * t[q];
                    }
                }
                coef.push(a);
            }
        }
        if worst < tol {
            return Ok((it, true));
        }
        if it == max_iter {
            break;
        }
        let stalled = prev_free.as_ref() == Some(&free);
        // obstacle rows are fixed at ψ; operator rows solve against them
        let mut fixed = vec![0.0; op.conv.src.len()];
        let mut is_free = vec![false; g.len()];
        for &k in &free {
            is_free[k] = true;
        }
        for (k, &b) in lat.points.iter().enumerate() {
            if !is_free[k] {
                g[k] = psi[k];
                fixed[b] = psi[k];
            }
        }
        let rows: Vec<usize> = free.iter().map(|&k| lat.points[k]).collect();
        let known = op.contract(&fixed, &rows, &coef);
        let rhs: Vec<f64> = known.iter().map(|v| -v).collect();
        let mut x: Vec<f64> = free.iter().map(|&k| g[k]).collect();
        let lin_tol = if stalled { 0.01 * tol } else { 0.1 * tol };
        linear_solve(op, &rows, &coef, &rhs, &mut x, lin_tol, cfg.krylov, cfg.linear_max_iter);
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::SchemeDiverged { norm: f64::INFINITY, bound: tol });
        }
        for (&k, &xv) in free.iter().zip(&x) {
            g[k] = xv;
        }
        prev_free = Some(free);
    }
    Ok((max_iter, false))
}

fn relaxation(
    op: &PolicyOperator,
    lat: &BallLattice,
    psi: &[f64],
    g: &mut [f64],
    kappa: f64,
    tol: f64,
    cfg: &EnvelopeConfig,
) -> (usize, bool) {
    let max_iter = cfg.max_iter.unwrap_or(100_000);
    let diag = 2.0 * kappa * op.conv.s_all;
    let omega = cfg.relax.clamp(0.0, 1.0);
    for it in 0..max_iter {
        let pol = eigen_policy(op, lat, g, kappa);
        let mut worst = 0.0f64;
        for (k, &(e, _)) in pol.iter().enumerate() {
            worst = worst.max(e.min(psi[k] - g[k]).abs());
        }
        if worst < tol {
            return (it, true);
        }
        for (k, &(e, _)) in pol.iter().enumerate() {
            g[k] = psi[k].min(g[k] + omega * e / diag);
        }
    }
    (max_iter, false)
}

pub fn envelope_residuals(res: &EnvelopeResult, u: &GridFunction) -> EnvelopeSummary {
    let d = res.gamma.domain();
    let n = d.n();
    let ball = Region::ball(ENVELOPE_RADIUS);
    let mut max_c = 0.0f64;
    let mut sum_c = 0.0;
    let mut count = 0usize;
    let mut viol = 0.0f64;
    for i in 0..d.len() {
        if !ball.contains(&d.point_of(i)[..n]) {
            continue;
        }
        let c = res.residual_esigma.values()[i].min(res.residual_obstacle.values()[i]).abs();
        max_c = max_c.max(c);
        sum_c += c;
        count += 1;
        viol = viol.max(res.gamma.values()[i] - obstacle(u, i));
    }
    let inf_gamma = res.gamma.values().iter().fold(0.0f64, |m, &v| m.min(v));
    EnvelopeSummary {
        max_complementarity: max_c,
        mean_complementarity: if count > 0 { sum_c / count as f64 } else { 0.0 },
        max_obstacle_violation: viol.max(0.0),
        contact_measure: res.contact.iter().filter(|&&c| c).count() as f64 * d.cell_volume(),
        inf_gamma,
        converged: res.converged,
    }
}
