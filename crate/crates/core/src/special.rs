//! Scalar constants: the Euler gamma function, the Riesz normalizer, the
//! ring constant `c0(n)`, the smallness parameter `eps0` and the iteration
//! schedules built on top of them.
//!
//! Several of these quantities are astronomically large or small for
//! realistic barrier constants, so everything past `gamma` and `cal_a` is
//! carried as a natural logarithm.

use serde::{Deserialize, Serialize};
use std::f64::consts::{LN_2, PI};

use crate::error::{Error, Result};

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

fn lanczos_sum(z: f64) -> f64 {
    // z is the shifted argument x - 1
    let mut acc = LANCZOS[0];
    for (k, c) in LANCZOS.iter().enumerate().skip(1) {
        acc += c / (z + k as f64);
    }
    acc
}

/// Euler gamma function for positive arguments.
pub fn gamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::GammaDomain(x));
    }
    Ok(gamma_unchecked(x))
}

fn gamma_unchecked(x: f64) -> f64 {
    if x < 0.5 {
        // reflection keeps the Lanczos sum in its accurate range
        return PI / ((PI * x).sin() * gamma_unchecked(1.0 - x));
    }
    if x > 171.0 {
        return f64::INFINITY;
    }
    let z = x - 1.0;
    let t = z + LANCZOS_G + 0.5;
    (2.0 * PI).sqrt() * t.powf(z + 0.5) * (-t).exp() * lanczos_sum(z)
}

/// Natural log of the gamma function for positive arguments.
pub fn ln_gamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::GammaDomain(x));
    }
    if x < 0.5 {
        return Ok(PI.ln() - (PI * x).sin().ln() - ln_gamma(1.0 - x)?);
    }
    let z = x - 1.0;
    let t = z + LANCZOS_G + 0.5;
    Ok(0.5 * (2.0 * PI).ln() + (z + 0.5) * t.ln() - t + lanczos_sum(z).ln())
}

/// Surface measure of the unit sphere in dimension `n`.
pub fn sphere_area(n: usize) -> f64 {
    let half = n as f64 / 2.0;
    2.0 * PI.powf(half) / gamma_unchecked(half)
}

fn check_alpha(alpha: f64, n: usize) -> Result<()> {
    let upper = 2.0_f64.min(n as f64);
    if n < 2 || !(alpha > 0.0 && alpha < upper) {
        return Err(Error::AlphaDomain { alpha, n, upper });
    }
    Ok(())
}

/// Riesz normalizer `pi^(alpha - n/2) Gamma((n - alpha)/2) / Gamma(alpha/2)`.
pub fn cal_a(alpha: f64, n: usize) -> Result<f64> {
    check_alpha(alpha, n)?;
    Ok(cal_a_over_alpha(alpha, n)? * alpha)
}

/// `cal_a(alpha) / alpha`, evaluated without cancellation as `alpha -> 0`
/// through `alpha Gamma(alpha/2) = 2 Gamma(alpha/2 + 1)`.
pub fn cal_a_over_alpha(alpha: f64, n: usize) -> Result<f64> {
    check_alpha(alpha, n)?;
    let nf = n as f64;
    Ok(PI.powf(alpha - nf / 2.0) * gamma_unchecked((nf - alpha) / 2.0)
        / (2.0 * gamma_unchecked(alpha / 2.0 + 1.0)))
}

/// Limit of `cal_a(alpha)/alpha` as `alpha -> 0`: `pi^(-n/2) Gamma(n/2) / 2`.
pub fn cal_a_over_alpha_limit(n: usize) -> f64 {
    let nf = n as f64;
    PI.powf(-nf / 2.0) * gamma_unchecked(nf / 2.0) / 2.0
}

/// The function whose infimum over `sigma in (0, 2)` defines `c0(n)`:
/// `(sqrt(n)/2)^(-n+2-sigma) cal_a(2-sigma) / (8 (1 - 4^(-(2-sigma)/n)))`.
///
/// At `sigma = 2` the removable singularity is replaced by its limit.
pub fn ring_factor(sigma: f64, n: usize) -> f64 {
    let nf = n as f64;
    let eps = 2.0 - sigma;
    let geo = (nf.sqrt() / 2.0).powf(-nf + eps);
    // (1 - 4^{-eps/n}) / eps, stable for small eps
    let x = eps * 2.0 * LN_2 / nf;
    let denom_over_eps = if x.abs() < 1e-300 {
        2.0 * LN_2 / nf
    } else {
        -(-x).exp_m1() / eps
    };
    let a_over_eps = if eps <= 0.0 {
        cal_a_over_alpha_limit(n)
    } else {
        cal_a_over_alpha(eps, n).unwrap_or(f64::INFINITY)
    };
    geo * a_over_eps / (8.0 * denom_over_eps)
}

/// Certified lower bound for `ring_factor` over `sigma in (0, 2)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct C0Certificate {
    pub n: usize,
    pub value: f64,
    pub grid_min: f64,
    pub argmin_sigma: f64,
    pub lipschitz_margin: f64,
    pub grid_step: f64,
    pub endpoint_limit: f64,
}

/// Largest certified lower bound of `ring_factor(., n)` on `(0, 2)`.
///
/// The grid includes the `sigma -> 2` endpoint through its limit. The margin
/// is the largest local slope near the minimum times one grid step.
pub fn c0(n: usize) -> C0Certificate {
    let step: f64 = 5e-5;
    let count = (2.0 / step).round() as usize;
    let values: Vec<(f64, f64)> = (1..=count)
        .map(|k| {
            let s = k as f64 * step;
            (s, ring_factor(s, n))
        })
        .collect();
    let &(argmin_sigma, grid_min) = values
        .iter()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("non-empty grid");
    // slopes over the intervals whose values are within a factor two of the min
    let mut slope: f64 = 0.0;
    for w in values.windows(2) {
        if w[0].1 <= 2.0 * grid_min || w[1].1 <= 2.0 * grid_min {
            slope = slope.max(((w[1].1 - w[0].1) / step).abs());
        }
    }
    let margin = slope * step;
    C0Certificate {
        n,
        value: grid_min - margin,
        grid_min,
        argmin_sigma,
        lipschitz_margin: margin,
        grid_step: step,
        endpoint_limit: ring_factor(2.0, n),
    }
}

/// Inputs to the `eps0` feasibility problem.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Eps0Inputs {
    /// Constant of the L-infinity weighted ABP estimate.
    pub gs_c0: f64,
    /// Ring constant `c0(n)`.
    pub c0: f64,
    /// Riesz-potential ABP constant.
    pub cbar: f64,
    pub m1: f64,
    pub m2: f64,
    pub n: usize,
}

impl Eps0Inputs {
    pub fn ln_mu(&self) -> f64 {
        ln_mu(self.m2, self.n)
    }

    fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("C0", self.gs_c0),
            ("c0", self.c0),
            ("Cbar", self.cbar),
            ("M1", self.m1),
            ("M2", self.m2),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
            }
        }
        if self.n < 2 {
            return Err(Error::InvalidArgument("n must be at least 2".into()));
        }
        Ok(())
    }
}

/// `ln mu` with `mu = (64 M2 sqrt(n))^(-n)`.
pub fn ln_mu(m2: f64, n: usize) -> f64 {
    -(n as f64) * (64.0_f64.ln() + m2.ln() + 0.5 * (n as f64).ln())
}

/// `ln M3` with `M3 = eps0^(1/n) / (64 sqrt(n))`.
pub fn ln_m3(ln_eps0: f64, n: usize) -> f64 {
    let nf = n as f64;
    ln_eps0 / nf - (64.0_f64.ln() + 0.5 * nf.ln())
}

/// Names of the four displayed smallness conditions.
pub const CONDITION_NAMES: [&str; 4] = ["e1", "e3", "e4", "e5"];

/// Log-space margins `ln(lhs) - ln(rhs)` of the four conditions at
/// `eps0 = exp(ln_eps)` and order `sigma`; a condition holds iff its margin
/// is `<= 0`.
pub fn condition_margins(inp: &Eps0Inputs, ln_eps: f64, sigma: f64) -> [f64; 4] {
    let nf = inp.n as f64;
    let eps = ln_eps.exp();
    let ln_k = (inp.cbar / inp.c0).ln();
    let ln_m1 = inp.m1.ln();
    let ln_m2 = inp.m2.ln();
    let inv_mu_ln2 = (-inp.ln_mu()).exp() * LN_2;
    // 0 * inf never arises: inv_mu_ln2 is finite for any finite positive M2 up to ~1e150
    let m1_term = |base: f64| if ln_m1 == 0.0 { 0.0 } else { (base + inv_mu_ln2) * ln_m1 };

    let e1 = inp.gs_c0.ln() + 0.5 * (2.0 - sigma) * ln_m2 + sigma / (2.0 * nf) * ln_eps;
    let e3 = eps * ((256.0 * nf.sqrt()).ln() - ln_eps / nf)
        + (sigma - 1.0) * ln_k
        + m1_term(1.0)
        + ln_eps / nf;
    let e4 = ln_k + ln_eps / nf;
    let e5 = eps * LN_2 + 0.5 * sigma * ln_k + m1_term(0.5) + sigma / (2.0 * nf) * ln_eps + LN_2;
    [e1, e3, e4, e5]
}

/// The certification grid over the closed order interval `[1, 2]`:
/// `per_unit` points per unit interval plus both endpoints.
pub fn certification_grid(per_unit: usize) -> Vec<f64> {
    (0..=per_unit).map(|k| 1.0 + k as f64 / per_unit as f64).collect()
}

fn worst_margin(inp: &Eps0Inputs, ln_eps: f64, grid: &[f64]) -> ([f64; 4], [f64; 4]) {
    let mut worst = [f64::NEG_INFINITY; 4];
    let mut at = [f64::NAN; 4];
    for &s in grid {
        let m = condition_margins(inp, ln_eps, s);
        for c in 0..4 {
            if m[c] > worst[c] {
                worst[c] = m[c];
                at[c] = s;
            }
        }
    }
    (worst, at)
}

/// Per-condition outcome at the solved `eps0`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConditionReport {
    pub name: String,
    /// Largest log margin over the order grid on `[1, 2]`.
    pub worst_margin: f64,
    pub worst_sigma: f64,
    /// Largest log margin restricted to `[2 - eps0, 2]`.
    pub worst_margin_near_two: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Eps0Solution {
    pub ln_eps0: f64,
    /// `exp(ln_eps0)`, zero when it underflows.
    pub eps0: f64,
    /// Set when `eps0` is below `1e-300` and only the log is meaningful.
    pub subnormal: bool,
    pub cap: f64,
    pub at_cap: bool,
    /// Condition with the largest margin just above the solution.
    pub binding: Option<String>,
    pub conditions: Vec<ConditionReport>,
    /// Smallest log step above `ln_eps0` that was checked for maximality.
    pub maximality_step: f64,
    pub maximality_violated: bool,
}

/// Largest `eps0 <= cap` satisfying all four conditions for every order on
/// the certification grid (2048 points per unit interval, closed interval).
pub fn solve_eps0(inp: &Eps0Inputs, cap: f64) -> Result<Eps0Solution> {
    solve_eps0_on(inp, cap, &certification_grid(2048))
}

pub fn solve_eps0_on(inp: &Eps0Inputs, cap: f64, grid: &[f64]) -> Result<Eps0Solution> {
    inp.validate()?;
    if !(cap > 0.0 && cap < 1.0) {
        return Err(Error::InvalidArgument(format!("cap must lie in (0,1), got {cap}")));
    }
    let feasible = |t: f64| worst_margin(inp, t, grid).0.iter().all(|&m| m <= 0.0);
    let ln_cap = cap.ln();
    let (ln_eps0, hi) = if feasible(ln_cap) {
        (ln_cap, None)
    } else {
        // walk down geometrically in log space until feasible
        let mut d = 1.0_f64;
        let mut hi = ln_cap;
        let lo = loop {
            let t = ln_cap - d;
            if !t.is_finite() || d > 1e300 {
                return Err(Error::InvalidArgument(
                    "no feasible eps0 representable in log space".into(),
                ));
            }
            if feasible(t) {
                break t;
            }
            hi = t;
            d *= 2.0;
        };
        let mut lo = lo;
        loop {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if feasible(mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        (lo, Some(hi))
    };

    let step = match hi {
        Some(h) => (1.05_f64.ln()).max(h - ln_eps0),
        None => 1.05_f64.ln(),
    };
    let at_cap = hi.is_none();
    let up = (ln_eps0 + step).min(ln_cap);
    let (up_worst, _) = worst_margin(inp, up, grid);
    let maximality_violated = up_worst.iter().any(|&m| m > 0.0);
    let binding = if at_cap {
        None
    } else {
        let (i, _) = up_worst
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .expect("four conditions");
        Some(CONDITION_NAMES[i].to_string())
    };

    let (worst, at) = worst_margin(inp, ln_eps0, grid);
    let eps0 = ln_eps0.exp();
    let near: Vec<f64> = grid.iter().copied().filter(|&s| s >= 2.0 - eps0).collect();
    let (near_worst, _) = if near.is_empty() {
        worst_margin(inp, ln_eps0, &[2.0])
    } else {
        worst_margin(inp, ln_eps0, &near)
    };
    let conditions = (0..4)
        .map(|c| ConditionReport {
            name: CONDITION_NAMES[c].to_string(),
            worst_margin: worst[c],
            worst_sigma: at[c],
            worst_margin_near_two: near_worst[c],
            holds: worst[c] <= 0.0,
        })
        .collect();
    Ok(Eps0Solution {
        ln_eps0,
        eps0,
        subnormal: ln_eps0 < (1e-300_f64).ln(),
        cap,
        at_cap,
        binding,
        conditions,
        maximality_step: step,
        maximality_violated,
    })
}

/// Smallest `k` with `(1 - mu_eps)^k <= 1/2`.
pub fn k0_of(mu_eps: f64) -> Result<u64> {
    if !(mu_eps > 0.0 && mu_eps < 1.0) {
        return Err(Error::InvalidArgument(format!("mu*eps0 must lie in (0,1), got {mu_eps}")));
    }
    let rate = -(-mu_eps).ln_1p();
    let mut k = (LN_2 / rate).ceil().max(1.0) as u64;
    // settle rounding at the boundary by direct evaluation of (1-x)^k
    let pow = |k: u64| (k as f64) * (-mu_eps).ln_1p();
    while k > 1 && pow(k - 1) <= -LN_2 {
        k -= 1;
    }
    while pow(k) > -LN_2 {
        k += 1;
    }
    Ok(k)
}

/// `ln k0` for `mu*eps0 = exp(ln_mu_eps)`, valid when `k0` is too large to
/// represent; uses `-ln(1-x) = x` to relative accuracy `x/2`.
pub fn ln_k0(ln_mu_eps: f64) -> f64 {
    let x = ln_mu_eps.exp();
    if x > 1e-8 {
        if let Ok(k) = k0_of(x) {
            return (k as f64).ln();
        }
    }
    LN_2.ln() - ln_mu_eps
}

/// `(C_i, ln L_i)` with `C_i = 2^-i C0` and
/// `L_i = (C_i eps0^(sigma/2n))^(-2/(2-sigma))`.
pub fn schedule(i: u32, sigma: f64, ln_eps0: f64, gs_c0: f64, n: usize) -> Result<(f64, f64)> {
    if !(sigma > 1.0 && sigma < 2.0) {
        return Err(Error::SigmaDomain(sigma));
    }
    if !(ln_eps0 < 0.0) {
        return Err(Error::InvalidArgument("eps0 must lie in (0,1)".into()));
    }
    let ln_ci = gs_c0.ln() - i as f64 * LN_2;
    let ci = ln_ci.exp();
    let ln_li = -2.0 / (2.0 - sigma) * (ln_ci + sigma / (2.0 * n as f64) * ln_eps0);
    Ok((ci, ln_li))
}

/// Where a ledger value comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    ClosedForm,
    Certified,
    Empirical,
    Assumed,
}

/// A positive constant stored as its natural log, with the linear value
/// when it is representable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Constant {
    pub value: Option<f64>,
    pub ln: f64,
    pub provenance: Provenance,
}

impl Constant {
    pub fn from_ln(ln: f64, provenance: Provenance) -> Self {
        let v = ln.exp();
        let value = (v.is_finite() && v > 0.0).then_some(v);
        Constant { value, ln, provenance }
    }

    pub fn from_value(v: f64, provenance: Provenance) -> Self {
        Constant { value: Some(v), ln: v.ln(), provenance }
    }

    /// Linear value, saturating to 0 or infinity.
    pub fn linear(&self) -> f64 {
        self.value.unwrap_or_else(|| self.ln.exp())
    }
}

/// User-facing inputs of the ledger; `None` means the default assumption.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct LedgerInputs {
    pub n: usize,
    pub lambda: f64,
    pub big_lambda: f64,
    pub gs_c0: Option<f64>,
    pub cbar: Option<f64>,
    pub r: Option<f64>,
    pub m1: Option<f64>,
    pub m2: Option<f64>,
    pub eps_cap: f64,
}

impl Default for LedgerInputs {
    fn default() -> Self {
        LedgerInputs {
            n: 2,
            lambda: 1.5,
            big_lambda: 1.0,
            gs_c0: None,
            cbar: None,
            r: None,
            m1: None,
            m2: None,
            eps_cap: 0.5,
        }
    }
}

/// Default for the constants whose magnitude is only asserted to exist.
pub const ASSUMED_DEFAULT: f64 = 10.0;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConstantLedger {
    pub n: usize,
    pub lambda: f64,
    pub big_lambda: f64,
    pub gs_c0: Constant,
    pub cbar: Constant,
    pub r: Constant,
    pub m1: Constant,
    pub m2: Constant,
    pub c0: Constant,
    pub mu: Constant,
    pub eps0: Constant,
    pub m3: Constant,
    pub mu_eps0: Constant,
    pub k0: Constant,
    /// `eps0^(-1/n)`.
    pub c_hat: Constant,
    pub c0_certificate: C0Certificate,
    pub eps0_solution: Eps0Solution,
    pub ci_rule: String,
    pub li_rule: String,
}

fn assumed_or(v: Option<f64>, prov: Provenance) -> Constant {
    match v {
        Some(v) => Constant::from_value(v, prov),
        None => Constant::from_value(ASSUMED_DEFAULT, Provenance::Assumed),
    }
}

impl ConstantLedger {
    /// Builds the ledger. `m_prov` is the provenance of supplied `M1`, `M2`
    /// (certified when they come from a barrier certificate).
    pub fn build(inp: &LedgerInputs, m_prov: Provenance) -> Result<Self> {
        if inp.n < 2 {
            return Err(Error::InvalidArgument("n must be at least 2".into()));
        }
        if !(inp.lambda > 0.0) || inp.lambda > inp.n as f64 * inp.big_lambda {
            return Err(Error::InfeasibleEllipticity {
                lambda: inp.lambda,
                bound: inp.n as f64 * inp.big_lambda,
            });
        }
        let gs_c0 = assumed_or(inp.gs_c0, Provenance::Empirical);
        let cbar = assumed_or(inp.cbar, Provenance::Empirical);
        let r = assumed_or(inp.r, Provenance::Empirical);
        let m1 = assumed_or(inp.m1, m_prov);
        let m2 = assumed_or(inp.m2, m_prov);
        let cert = c0(inp.n);
        let c0v = Constant::from_value(cert.value, Provenance::Certified);
        let e_in = Eps0Inputs {
            gs_c0: gs_c0.linear(),
            c0: cert.value,
            cbar: cbar.linear(),
            m1: m1.linear(),
            m2: m2.linear(),
            n: inp.n,
        };
        let sol = solve_eps0(&e_in, inp.eps_cap)?;
        let nf = inp.n as f64;
        let ln_mu = e_in.ln_mu();
        let ln_mu_eps = ln_mu + sol.ln_eps0;
        Ok(ConstantLedger {
            n: inp.n,
            lambda: inp.lambda,
            big_lambda: inp.big_lambda,
            gs_c0,
            cbar,
            r,
            m1,
            m2,
            c0: c0v,
            mu: Constant::from_ln(ln_mu, Provenance::ClosedForm),
            eps0: Constant::from_ln(sol.ln_eps0, Provenance::Certified),
            m3: Constant::from_ln(ln_m3(sol.ln_eps0, inp.n), Provenance::ClosedForm),
            mu_eps0: Constant::from_ln(ln_mu_eps, Provenance::ClosedForm),
            k0: Constant::from_ln(ln_k0(ln_mu_eps), Provenance::ClosedForm),
            c_hat: Constant::from_ln(-sol.ln_eps0 / nf, Provenance::ClosedForm),
            c0_certificate: cert,
            eps0_solution: sol,
            ci_rule: "C_i = 2^-i * C0".into(),
            li_rule: "L_i = (C_i * eps0^(sigma/(2n)))^(-2/(2-sigma))".into(),
        })
    }

    /// `(C_i, ln L_i)` at order `sigma`.
    pub fn schedule(&self, i: u32, sigma: f64) -> Result<(f64, f64)> {
        schedule(i, sigma, self.eps0.ln, self.gs_c0.linear(), self.n)
    }

    /// Log of the geometric decay rate bound `(1 - mu eps0)^k`.
    pub fn ln_decay_bound(&self, k: u32) -> f64 {
        let x = self.mu_eps0.ln.exp();
        if x > 0.0 {
            k as f64 * (-x).ln_1p()
        } else {
            // below f64 resolution: -k*x rounds to -0
            -(k as f64) * x
        }
    }
}
