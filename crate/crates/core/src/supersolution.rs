//! Residual-certified discrete supersolutions of `𝓜⁻u ≤ f` in `B₁` with
//! `u ≥ 0` outside, the normalization used in the measure estimates, and the
//! radii that control it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Domain, Exterior, GridFunction, Region};
use crate::kernel::QuadConfig;
use crate::linsolve::{bicgstab, gmres, SolveStats};
use crate::operators::{m_extremal_field, pucci_policy, Mode, PucciEllipticity, SymMat};
use crate::policy::{BallLattice, PolicyOperator};
use crate::special::ConstantLedger;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DirichletMethod {
    /// Policy iteration; every step is one linear solve.
    Policy,
    /// Explicit monotone pseudo-time stepping.
    PseudoTime,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Krylov {
    Gmres,
    Bicgstab,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct DirichletConfig {
    pub method: DirichletMethod,
    pub krylov: Krylov,
    /// Fraction of the stable explicit step (pseudo-time only).
    pub cfl: f64,
    /// Residual tolerance relative to `max(1, ‖f‖∞)`.
    pub tol: f64,
    /// Outer iterations: policy updates or time steps.
    pub max_iter: usize,
    pub linear_max_iter: usize,
    /// Radius of the ball where the equation is imposed.
    pub radius: f64,
    pub quad: QuadConfig,
}

impl Default for DirichletConfig {
    fn default() -> Self {
        DirichletConfig {
            method: DirichletMethod::Policy,
            krylov: Krylov::Gmres,
            cfl: 0.9,
            tol: 1e-8,
            max_iter: 60,
            linear_max_iter: 4000,
            radius: 1.0,
            quad: QuadConfig::default(),
        }
    }
}

/// A grid supersolution with its certificate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Supersolution {
    pub u: GridFunction,
    pub f: GridFunction,
    pub ell: PucciEllipticity,
    /// `(𝓜⁻u − f)⁺` on the lattice points of the ball, 0 elsewhere.
    pub residual: GridFunction,
    pub exterior_ok: bool,
    pub radius: f64,
    pub iterations: usize,
    /// Total Krylov iterations over all policy steps.
    pub linear_iterations: usize,
}

impl Supersolution {
    pub fn max_residual(&self) -> f64 {
        self.residual.sup_norm()
    }

    pub fn certified(&self, tol: f64) -> bool {
        self.exterior_ok && self.max_residual() <= tol
    }
}

/// Recomputes `(𝓜⁻u − f)⁺` on the ball and checks `u ≥ 0` outside it.
pub fn certify(
    u: GridFunction,
    f: GridFunction,
    ell: &PucciEllipticity,
    radius: f64,
    iterations: usize,
    quad: &QuadConfig,
) -> Result<Supersolution> {
    let d = u.domain().clone();
    let lat = BallLattice::new(&d, radius);
    let m = m_extremal_field(&u, &lat.domain_points, ell, Mode::Min, quad)?;
    let mut res = vec![0.0; d.len()];
    for (k, &p) in lat.domain_points.iter().enumerate() {
        res[p] = (m[k] - f.values()[p]).max(0.0);
    }
    let ball = Region::ball(radius);
    let n = d.n();
    let exterior_ok = u.exterior().far_value() >= 0.0
        && u.values().iter().enumerate().all(|(i, &v)| v >= 0.0 || ball.contains(&d.point_of(i)[..n]));
    Ok(Supersolution {
        residual: GridFunction::new(d, res, Exterior::Constant(0.0))?,
        u,
        f,
        ell: *ell,
        exterior_ok,
        radius,
        iterations,
        linear_iterations: 0,
    })
}

/// Solves `𝓜⁻u = f` in `B_radius` with `u = 0` outside.
pub fn solve_dirichlet(f: &GridFunction, ell: &PucciEllipticity, cfg: &DirichletConfig) -> Result<Supersolution> {
    ell.validate()?;
    cfg.quad.validate()?;
    if !(cfg.tol > 0.0) || !(cfg.radius > 0.0) {
        return Err(Error::InvalidArgument("tol and radius must be positive".into()));
    }
    let d = f.domain().clone();
    let lat = BallLattice::new(&d, cfg.radius);
    let rhs: Vec<f64> = lat.domain_points.iter().map(|&p| f.values()[p]).collect();
    if rhs.iter().any(|&v| v < 0.0 || !v.is_finite()) {
        return Err(Error::InvalidArgument("forcing must be finite and nonnegative on the ball".into()));
    }
    let f_inf = rhs.iter().fold(0.0f64, |m, v| m.max(*v));
    let tol = cfg.tol * f_inf.max(1.0);
    let op = PolicyOperator::new(&d, ell.sigma, &cfg.quad, lat.bx);
    let (x, iterations, linear) = if f_inf == 0.0 {
        (vec![0.0; rhs.len()], 0, 0)
    } else {
        match cfg.method {
            DirichletMethod::Policy => policy_solve(&op, &lat, &rhs, ell, cfg, tol)?,
            DirichletMethod::PseudoTime => pseudo_time(&op, &lat, &rhs, ell, cfg, tol, f_inf)?,
        }
    };
    let mut vals = vec![0.0; d.len()];
    for (k, &p) in lat.domain_points.iter().enumerate() {
        vals[p] = x[k];
    }
    let u = GridFunction::new(d, vals, Exterior::Constant(0.0))?;
    let mut s = certify(u, f.clone(), ell, cfg.radius, iterations, &cfg.quad)?;
    s.linear_iterations = linear;
    Ok(s)
}

fn embed(op: &PolicyOperator, lat: &BallLattice, x: &[f64]) -> Vec<f64> {
    let mut v = vec![0.0; op.conv.src.len()];
    for (&b, &xv) in lat.points.iter().zip(x) {
        v[b] = xv;
    }
    v
}

/// Pucci values and optimal matrices at the ball points.
fn policy_at(op: &PolicyOperator, lat: &BallLattice, x: &[f64], ell: &PucciEllipticity) -> (Vec<f64>, Vec<SymMat>) {
    let m = op.moments(&embed(op, lat, x));
    let k = 2.0 - ell.sigma;
    lat.points
        .iter()
        .map(|&b| {
            let (v, a) = pucci_policy(&m[b], ell.lambda, ell.big_lambda, Mode::Min);
            (k * v, a.scaled(k))
        })
        .unzip()
}

pub(crate) fn linear_solve(
    op: &PolicyOperator,
    rows: &[usize],
    coef: &[SymMat],
    b: &[f64],
    x: &mut [f64],
    tol: f64,
    krylov: Krylov,
    max_iter: usize,
) -> SolveStats {
    let pre = op.mean_preconditioner(rows, coef);
    let mut apply = |v: &[f64]| op.apply_on(v, rows, coef);
    match krylov {
        Krylov::Gmres => gmres(&mut apply, &pre, b, x, tol, 60, max_iter),
        Krylov::Bicgstab => bicgstab(&mut apply, &pre, b, x, tol, max_iter),
    }
}

fn policy_solve(
    op: &PolicyOperator,
    lat: &BallLattice,
    rhs: &[f64],
    ell: &PucciEllipticity,
    cfg: &DirichletConfig,
    tol: f64,
) -> Result<(Vec<f64>, usize, usize)> {
    let mut x = vec![0.0; rhs.len()];
    let mut it = 0;
    let mut linear = 0;
    loop {
        let (vals, coef) = policy_at(op, lat, &x, ell);
        let res = vals.iter().zip(rhs).fold(0.0f64, |m, (v, f)| m.max((v - f).abs()));
        if res < tol || it >= cfg.max_iter {
            return Ok((x, it, linear));
        }
        let st = linear_solve(op, &lat.points, &coef, rhs, &mut x, 0.1 * tol, cfg.krylov, cfg.linear_max_iter);
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::SchemeDiverged { norm: f64::INFINITY, bound: st.residual });
        }
        linear += st.iterations;
        it += 1;
    }
}

fn pseudo_time(
    op: &PolicyOperator,
    lat: &BallLattice,
    rhs: &[f64],
    ell: &PucciEllipticity,
    cfg: &DirichletConfig,
    tol: f64,
    f_inf: f64,
) -> Result<(Vec<f64>, usize, usize)> {
    let n = ell.n as f64;
    let tau = cfg.cfl / (2.0 * (2.0 - ell.sigma) * op.conv.s_all * n * ell.big_lambda);
    let bound = 1e3 * f_inf.max(1.0);
    let mut x = vec![0.0; rhs.len()];
    for it in 0..cfg.max_iter {
        let (vals, _) = policy_at(op, lat, &x, ell);
        let mut res = 0.0f64;
        for k in 0..x.len() {
            let r = vals[k] - rhs[k];
            res = res.max(r.abs());
            x[k] += tau * r;
        }
        if res < tol {
            return Ok((x, it, 0));
        }
        let norm = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if !(norm <= bound) {
            return Err(Error::SchemeDiverged { norm, bound });
        }
    }
    Ok((x, cfg.max_iter, 0))
}

/// Profiles of the analytic catalog; `f` is set to `(𝓜⁻u)⁺` on the ball so
/// the residual vanishes by construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CatalogProfile {
    /// `−(1 − |x|²)₊`
    Paraboloid,
    /// `−(1 − |x|²)₊²`
    QuarticCap,
    /// `−((0.6² − |x − 0.3e₁|²)₊ / 0.36)²`
    OffCenterCap,
}

impl CatalogProfile {
    pub const ALL: [CatalogProfile; 3] =
        [CatalogProfile::Paraboloid, CatalogProfile::QuarticCap, CatalogProfile::OffCenterCap];

    pub fn name(&self) -> &'static str {
        match self {
            CatalogProfile::Paraboloid => "paraboloid",
            CatalogProfile::QuarticCap => "quartic-cap",
            CatalogProfile::OffCenterCap => "off-center-cap",
        }
    }

    pub fn eval(&self, p: &[f64]) -> f64 {
        let r2: f64 = p.iter().map(|v| v * v).sum();
        match self {
            CatalogProfile::Paraboloid => -(1.0 - r2).max(0.0),
            CatalogProfile::QuarticCap => -(1.0 - r2).max(0.0).powi(2),
            CatalogProfile::OffCenterCap => {
                let s2: f64 = r2 - 0.6 * p[0] + 0.09;
                -((0.36 - s2).max(0.0) / 0.36).powi(2)
            }
        }
    }
}

pub fn catalog(profile: CatalogProfile, domain: &Domain, ell: &PucciEllipticity, quad: &QuadConfig) -> Result<Supersolution> {
    let n = domain.n();
    let u = GridFunction::from_fn(domain, 0.0, |p| profile.eval(&p[..n]));
    let lat = BallLattice::new(domain, 1.0);
    let m = m_extremal_field(&u, &lat.domain_points, ell, Mode::Min, quad)?;
    let mut fv = vec![0.0; domain.len()];
    for (k, &p) in lat.domain_points.iter().enumerate() {
        fv[p] = m[k].max(0.0);
    }
    let f = GridFunction::new(domain.clone(), fv, Exterior::Constant(0.0))?;
    certify(u, f, ell, 1.0, 0, quad)
}

/// `ĝ = f⁺` on lattice points within `margin` of `{u ≤ 0} ∩ B₁`, 0 elsewhere.
pub fn ghat(u: &GridFunction, f: &GridFunction, margin: f64) -> Result<GridFunction> {
    let d = u.domain();
    let n = d.n();
    let h = d.h();
    let base: Vec<bool> = (0..d.len())
        .map(|i| {
            let p = d.point_of(i);
            p[..n].iter().map(|v| v * v).sum::<f64>() < 1.0 && u.values()[i] <= 0.0
        })
        .collect();
    let reach = (margin / h).floor() as i64;
    let mut mask = base.clone();
    if reach > 0 {
        let mut offsets = Vec::new();
        let side = 2 * reach + 1;
        for k in 0..side.pow(n as u32) {
            let mut o = [0i64; 3];
            let mut r = k;
            for a in 0..n {
                o[a] = r % side - reach;
                r /= side;
            }
            let d2: i64 = o[..n].iter().map(|v| v * v).sum();
            if d2 > 0 && (d2 as f64) * h * h <= margin * margin {
                offsets.push(o);
            }
        }
        for i in (0..d.len()).filter(|&i| base[i]) {
            let idx = d.index_of(i);
            for o in &offsets {
                let mut q = [0i64; 3];
                for a in 0..n {
                    q[a] = idx[a] + o[a];
                }
                if let Some(j) = d.flat_of(&q[..n]) {
                    mask[j] = true;
                }
            }
        }
    }
    let vals = f.values().iter().zip(&mask).map(|(&v, &m)| if m { v.max(0.0) } else { 0.0 }).collect();
    GridFunction::new(d.clone(), vals, Exterior::Constant(0.0))
}

/// Output of `normalize`: `u_r`, `h_r` on the rescaled lattice and `ln N₀`.
#[derive(Debug, Clone)]
pub struct Normalized {
    pub u_r: GridFunction,
    pub h_r: GridFunction,
    pub ln_n0: f64,
    /// `ln L_{i−1}` and `ln M₃` used to build `N₀`.
    pub ln_l: f64,
    pub ln_m3: f64,
}

fn ln_add(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// `u_r(x) = (u(x₀+rx) − u(x₀))/N₀`, `h_r(x) = r^σ ĝ(x₀+rx)/N₀` with
/// `N₀ = r^σ‖ĝ‖∞/L_{i−1} + r^{σ−1}‖ĝ‖_n/M₃`. `x0` must be a lattice point.
pub fn normalize(
    u: &GridFunction,
    g: &GridFunction,
    x0: &[f64],
    r: f64,
    ledger: &ConstantLedger,
    i: u32,
    sigma: f64,
) -> Result<Normalized> {
    if !(r > 0.0 && r < 1.0) {
        return Err(Error::InvalidArgument(format!("r = {r} outside (0, 1)")));
    }
    if i == 0 {
        return Err(Error::InvalidArgument("index i must be at least 1".into()));
    }
    let d = u.domain();
    let n = d.n();
    let idx0 = d
        .lattice_index(x0)
        .filter(|k| d.contains_index(&k[..n]))
        .ok_or_else(|| Error::InvalidArgument(format!("x0 = {x0:?} is not a lattice point")))?;
    let g_inf = g.sup_norm();
    let g_n = g.ln_norm(&Region::All);
    if g_inf == 0.0 {
        return Err(Error::ZeroForcing);
    }
    let (_, ln_l) = ledger.schedule(i - 1, sigma)?;
    let ln_m3 = ledger.m3.ln;
    let ln_n0 = ln_add(sigma * r.ln() - ln_l + g_inf.ln(), (sigma - 1.0) * r.ln() - ln_m3 + g_n.ln());
    let inv = (-ln_n0).exp();

    let shift = idx0[..n].iter().map(|k| k.unsigned_abs()).max().unwrap_or(0) as usize;
    let cells = d.cells() - shift;
    let hr = d.h() / r;
    let dr = Domain::new(n, hr, cells as f64 * hr)?;
    let u0 = u.at_index(&idx0[..n]);
    let scale_h = (sigma * r.ln() - ln_n0).exp();
    let mut uv = vec![0.0; dr.len()];
    let mut hv = vec![0.0; dr.len()];
    for k in 0..dr.len() {
        let idx = dr.index_of(k);
        let mut q = [0i64; 3];
        for a in 0..n {
            q[a] = idx0[a] + idx[a];
        }
        uv[k] = (u.at_index(&q[..n]) - u0) * inv;
        hv[k] = g.at_index(&q[..n]) * scale_h;
    }
    let far = (u.exterior().far_value() - u0) * inv;
    Ok(Normalized {
        u_r: GridFunction::new(dr.clone(), uv, Exterior::Constant(far))?,
        h_r: GridFunction::new(dr, hv, Exterior::Constant(0.0))?,
        ln_n0,
        ln_l,
        ln_m3,
    })
}

/// Which radius attains `r₀`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RadiusBranch {
    S1,
    S2,
    One,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Radii {
    pub ln_s1: f64,
    pub ln_s2: f64,
    pub r0: f64,
    pub branch: RadiusBranch,
}

impl Radii {
    pub fn s1(&self) -> f64 {
        self.ln_s1.exp()
    }
    pub fn s2(&self) -> f64 {
        self.ln_s2.exp()
    }
}

/// `ln(M₁^{k₀})`, infinite when it exceeds f64.
pub fn ln_m1_pow_k0(ledger: &ConstantLedger) -> f64 {
    ledger.k0.ln.exp() * ledger.m1.ln
}

/// Radii `s₁ = (−u(x₀)M₃/(4M₁^{k₀}‖ĝ‖_n))^{1/(σ−1)}`,
/// `s₂ = (−u(x₀)L_{i−1}/(4M₁^{k₀}‖ĝ‖∞))^{1/σ}` and `r₀ = min{s₁, s₂, 1}`.
pub fn radii(u_at_x0: f64, g_n: f64, g_inf: f64, ledger: &ConstantLedger, i: u32, sigma: f64) -> Result<Radii> {
    if i == 0 {
        return Err(Error::InvalidArgument("index i must be at least 1".into()));
    }
    let (_, ln_l) = ledger.schedule(i - 1, sigma)?;
    radii_ln(u_at_x0, g_n, g_inf, ln_m1_pow_k0(ledger), ledger.m3.ln, ln_l, sigma)
}

/// `radii` with explicit logs of `M₁^{k₀}`, `M₃` and `L_{i−1}`.
pub fn radii_ln(u_at_x0: f64, g_n: f64, g_inf: f64, ln_mk: f64, ln_m3: f64, ln_l: f64, sigma: f64) -> Result<Radii> {
    if !(u_at_x0 < 0.0) {
        return Err(Error::InvalidArgument(format!("u(x0) = {u_at_x0} must be negative")));
    }
    if !(g_n > 0.0 && g_inf > 0.0) {
        return Err(Error::InvalidArgument("norms of the forcing must be positive".into()));
    }
    let base = (-u_at_x0).ln() - 4f64.ln() - ln_mk;
    let ln_s1 = (base + ln_m3 - g_n.ln()) / (sigma - 1.0);
    let ln_s2 = (base + ln_l - g_inf.ln()) / sigma;
    let (r0, branch) = if ln_s1 <= ln_s2 && ln_s1 < 0.0 {
        (ln_s1.exp(), RadiusBranch::S1)
    } else if ln_s2 < 0.0 {
        (ln_s2.exp(), RadiusBranch::S2)
    } else {
        (1.0, RadiusBranch::One)
    };
    Ok(Radii { ln_s1, ln_s2, r0, branch })
}

/// `ln(M₁^{k₀} N₀)` at radius `r`, to compare with `ln(−u(x₀)/2)`.
pub fn ln_pivot(r: f64, g_n: f64, g_inf: f64, ln_mk: f64, ln_m3: f64, ln_l: f64, sigma: f64) -> f64 {
    ln_mk + ln_add(sigma * r.ln() - ln_l + g_inf.ln(), (sigma - 1.0) * r.ln() - ln_m3 + g_n.ln())
}
