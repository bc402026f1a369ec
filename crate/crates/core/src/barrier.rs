//! Barrier `η`: supported in `B_{2√n}`, `η ≤ −2` on `Q₃`, bounded by `M₁`,
//! with `𝓜⁺η ≤ M₂ ξ` for some `0 ≤ ξ ≤ 1` supported in `B_{1/4}`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Domain, GridFunction, Region};
use crate::kernel::QuadConfig;
use crate::operators::{m_extremal_field, Mode, PucciEllipticity};

pub const DEFAULT_SIGMA_GRID: [f64; 6] = [1.05, 1.25, 1.5, 1.75, 1.9, 1.99];
pub const MAX_SCALE: f64 = 1e6;

/// Radial profile `η(x) = −c₂ g(|x|)` where
/// `g = a − b r²` on `[0, ρ_in]`, `g = r^{−p} − k` on `[ρ_in, r₁]`,
/// `g = q (R − r)²` on `[r₁, R]` and `g = 0` beyond `R = 2√n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BarrierProfile {
    pub n: usize,
    pub p: f64,
    pub rho_in: f64,
    pub r1: f64,
    pub outer: f64,
    pub a: f64,
    pub b: f64,
    pub k: f64,
    pub q: f64,
    pub c2: f64,
}

impl BarrierProfile {
    /// `smoothing` is the core radius `ρ_in`.
    pub fn new(n: usize, p: f64, smoothing: f64) -> Result<Self> {
        if !(p > 0.0) {
            return Err(Error::InvalidArgument(format!("exponent p = {p} must be positive")));
        }
        let nf = n as f64;
        let outer = 2.0 * nf.sqrt();
        let corner = 1.5 * nf.sqrt();
        if !(smoothing > 0.0 && smoothing < corner) {
            return Err(Error::InvalidArgument(format!("core radius {smoothing} outside (0, {corner})")));
        }
        let rho = smoothing;
        let b = p * rho.powf(-p - 2.0) / 2.0;
        // outer quadratic joined with matching value and slope halfway
        // between the corner of Q₃ and the support radius
        let w = (outer - corner) / 2.0;
        let r1 = outer - w;
        let slope = p * r1.powf(-p - 1.0);
        let q = slope / (2.0 * w);
        let k = r1.powf(-p) - q * w * w;
        let a = rho.powf(-p) - k + b * rho * rho;
        let mut prof = BarrierProfile { n, p, rho_in: rho, r1, outer, a, b, k, q, c2: 1.0 };
        prof.c2 = 2.0 / prof.g(corner);
        Ok(prof)
    }

    pub fn g(&self, r: f64) -> f64 {
        if r <= self.rho_in {
            self.a - self.b * r * r
        } else if r <= self.r1 {
            r.powf(-self.p) - self.k
        } else if r < self.outer {
            self.q * (self.outer - r).powi(2)
        } else {
            0.0
        }
    }

    pub fn eta(&self, x: &[f64]) -> f64 {
        let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        -self.c2 * self.g(r)
    }

    /// `‖η‖∞ = c₂ a`.
    pub fn sup(&self) -> f64 {
        self.c2 * self.a
    }
}

/// Samples the profile on the lattice, failing when the calibration needs
/// `‖η‖∞ > 10⁶`.
pub fn build_eta(domain: &Domain, p: f64, smoothing: f64) -> Result<(BarrierProfile, GridFunction)> {
    let prof = BarrierProfile::new(domain.n(), p, smoothing)?;
    if !(prof.sup() <= MAX_SCALE) {
        return Err(Error::BarrierScaleFail(prof.sup()));
    }
    let n = domain.n();
    Ok((prof, GridFunction::from_fn(domain, 0.0, |x| prof.eta(&x[..n]))))
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Violation {
    pub x: [f64; 3],
    pub sigma: f64,
    pub value: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BarrierCertificate {
    pub profile: Option<BarrierProfile>,
    pub h: f64,
    pub m1: f64,
    pub ln_m1: f64,
    pub m2: f64,
    pub ln_m2: f64,
    /// Max of `(𝓜⁺η)⁺` over `B_{1/4}` at each grid value.
    pub m2_per_sigma: Vec<f64>,
    pub sigma_grid: Vec<f64>,
    pub tol: f64,
    pub violations: Vec<Violation>,
    pub support_ok: bool,
    pub q3_ok: bool,
    /// Why the certificate is invalid, empty when valid.
    pub reasons: Vec<String>,
}

impl BarrierCertificate {
    pub fn valid(&self) -> bool {
        self.reasons.is_empty()
    }
}

/// At most this many violations are stored; the count is in `reasons`.
const MAX_LISTED: usize = 200;

pub fn certify_barrier(
    eta: &GridFunction,
    profile: Option<BarrierProfile>,
    lambda: f64,
    big_lambda: f64,
    sigma_grid: &[f64],
    tol: f64,
    quad: &QuadConfig,
) -> Result<BarrierCertificate> {
    let d = eta.domain();
    let n = d.n();
    let nf = n as f64;
    let support = 2.0 * nf.sqrt();
    let support_ok = eta.exterior().far_value() == 0.0
        && (0..d.len()).all(|i| {
            let p = d.point_of(i);
            let r2: f64 = p[..n].iter().map(|v| v * v).sum();
            r2 < support * support || eta.values()[i] == 0.0
        });
    let q3 = Region::cube(3.0);
    let q3_ok = (0..d.len()).filter(|&i| q3.contains(&d.point_of(i)[..n])).all(|i| eta.values()[i] <= -2.0);
    let m1 = eta.sup_norm();
    let points = d.select(&Region::ball(support + 1.0));
    let mut violations = Vec::new();
    let mut count = 0usize;
    let mut m2_per_sigma = Vec::new();
    for &sigma in sigma_grid {
        let ell = PucciEllipticity::new(n, lambda, big_lambda, sigma)?;
        let vals = m_extremal_field(eta, &points, &ell, Mode::Max, quad)?;
        let mut m2s = 0.0f64;
        for (k, &p) in points.iter().enumerate() {
            let x = d.point_of(p);
            let r2: f64 = x[..n].iter().map(|v| v * v).sum();
            if r2 < 1.0 / 16.0 {
                m2s = m2s.max(vals[k]);
            } else if vals[k] > tol {
                count += 1;
                if violations.len() < MAX_LISTED {
                    violations.push(Violation { x, sigma, value: vals[k] });
                }
            }
        }
        m2_per_sigma.push(m2s);
    }
    let m2 = m2_per_sigma.iter().fold(0.0f64, |m, v| m.max(*v));
    let mut reasons = Vec::new();
    if !support_ok {
        reasons.push(format!("nonzero outside B_(2 sqrt n) = B_{support:.4}"));
    }
    if !q3_ok {
        reasons.push("eta > -2 somewhere on Q_3".into());
    }
    if count > 0 {
        reasons.push(format!("{count} points outside B_(1/4) with M+ eta > {tol:e}"));
    }
    Ok(BarrierCertificate {
        profile,
        h: d.h(),
        m1,
        ln_m1: m1.ln(),
        m2,
        ln_m2: m2.ln(),
        m2_per_sigma,
        sigma_grid: sigma_grid.to_vec(),
        tol,
        violations,
        support_ok,
        q3_ok,
        reasons,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScanAttempt {
    pub p: f64,
    pub outcome: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BarrierScan {
    pub attempts: Vec<ScanAttempt>,
    pub certificate: Option<BarrierCertificate>,
}

/// Tries `p = 2, …, 12` and keeps the first certified barrier. The
/// violation tolerance is `tol_rel · ‖η‖∞`.
pub fn scan_barrier(
    domain: &Domain,
    lambda: f64,
    big_lambda: f64,
    smoothing: f64,
    sigma_grid: &[f64],
    tol_rel: f64,
    quad: &QuadConfig,
) -> Result<BarrierScan> {
    let mut attempts = Vec::new();
    for p in 2..=12 {
        let p = p as f64;
        match build_eta(domain, p, smoothing) {
            Err(Error::BarrierScaleFail(s)) => {
                attempts.push(ScanAttempt { p, outcome: format!("scale: sup norm {s:e} > {MAX_SCALE:e}") });
            }
            Err(e) => return Err(e),
            Ok((prof, eta)) => {
                let cert = certify_barrier(&eta, Some(prof), lambda, big_lambda, sigma_grid, tol_rel * prof.sup(), quad)?;
                if cert.valid() {
                    attempts.push(ScanAttempt { p, outcome: "certified".into() });
                    return Ok(BarrierScan { attempts, certificate: Some(cert) });
                }
                attempts.push(ScanAttempt { p, outcome: cert.reasons.join("; ") });
            }
        }
    }
    Ok(BarrierScan { attempts, certificate: None })
}
