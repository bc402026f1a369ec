//! End-to-end ABP experiments: per-instance records, σ sweeps, measure decay
//! profiles and the empirical potential constant.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::battery::{default_battery, forcing_grid, Forcing, Instance};
use crate::envelope::{compute_envelope, envelope_residuals, EnvelopeConfig, EnvelopeResult, EnvelopeSummary};
use crate::error::{Error, Result};
use crate::grid::{Domain, GridFunction, Region};
use crate::operators::PucciEllipticity;
use crate::riesz::{ring_decomposition, riesz_field, verify_ring_bound, RingReport};
use crate::special::{ConstantLedger, LedgerInputs, Provenance};
use crate::supersolution::{catalog, certify, ghat, normalize, solve_dirichlet, DirichletConfig, Supersolution};

pub const CSV_HEADER: &str = "instance,sigma,h,inf_u,ln_sub,ln_contact,linf,gs_bound,main_bound,ratio,p_inf,flags";

/// Radii `R` of the balls on which `inf P` is recorded.
pub const POTENTIAL_RADII: [f64; 4] = [1.0, 2.0, 3.0, 4.0];

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecayRow {
    pub k: u32,
    pub measure: f64,
    pub ln_bound: f64,
    pub ok: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecayHypotheses {
    pub nonnegative: bool,
    pub inf_q3_le_one: bool,
    pub h_inf_ok: bool,
    pub h_n_ok: bool,
}

impl DecayHypotheses {
    pub fn all(&self) -> bool {
        self.nonnegative && self.inf_q3_le_one && self.h_inf_ok && self.h_n_ok
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecayProfile {
    pub hypotheses: DecayHypotheses,
    pub ln_m1: f64,
    pub rows: Vec<DecayRow>,
    pub flags: Vec<String>,
}

impl DecayProfile {
    pub fn holds(&self) -> bool {
        self.rows.iter().all(|r| r.ok)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub instance: String,
    pub sigma: f64,
    pub h: f64,
    pub minus_inf_u: f64,
    /// `‖f⁺‖_{Lⁿ({u≤0}∩B₁)}`
    pub ln_sub: f64,
    /// `‖f⁺‖_{Lⁿ({u=Γ}∩B₁)}`, NaN without an envelope.
    pub ln_contact: f64,
    pub linf: f64,
    /// `‖f⁺‖_{Lⁿ(B₁)}`
    pub ln_ball: f64,
    /// `‖f⁺‖∞^{(2−σ)/2}`
    pub linf_factor: f64,
    /// `‖f⁺‖∞^{(2−σ)/2} ‖f⁺‖_{Lⁿ(B₁)}^{σ/2}`; multiply by `C₀`.
    pub gs_factor: f64,
    pub gs_bound: f64,
    pub main_bound: f64,
    pub ln_main_bound: f64,
    pub ratio: f64,
    /// `inf_{B₁} P`
    pub p_inf: f64,
    /// `inf_{B_R} P` for `R` in `POTENTIAL_RADII`.
    pub p_inf_by_radius: Vec<f64>,
    pub envelope: Option<EnvelopeSummary>,
    pub ring: Option<RingReport>,
    pub decay: Option<DecayProfile>,
    pub flags: Vec<String>,
}

impl ExperimentRecord {
    fn failed(instance: &str, sigma: f64, h: f64, msg: &str) -> Self {
        ExperimentRecord {
            instance: instance.into(),
            sigma,
            h,
            minus_inf_u: f64::NAN,
            ln_sub: f64::NAN,
            ln_contact: f64::NAN,
            linf: f64::NAN,
            ln_ball: f64::NAN,
            linf_factor: f64::NAN,
            gs_factor: f64::NAN,
            gs_bound: f64::NAN,
            main_bound: f64::NAN,
            ln_main_bound: f64::NAN,
            ratio: f64::NAN,
            p_inf: f64::NAN,
            p_inf_by_radius: vec![f64::NAN; POTENTIAL_RADII.len()],
            envelope: None,
            ring: None,
            decay: None,
            flags: vec![format!("error: {}", msg.replace([',', '\n', ';'], " "))],
        }
    }

    pub fn has_flag(&self, flag: &str) -> bool {
        self.flags.iter().any(|f| f == flag)
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            self.instance,
            self.sigma,
            self.h,
            -self.minus_inf_u,
            self.ln_sub,
            self.ln_contact,
            self.linf,
            self.gs_bound,
            self.main_bound,
            self.ratio,
            self.p_inf,
            self.flags.join(";")
        )
    }
}

/// Quantities of the comparison on `B_ρ`, rescaled to `B₁`:
/// `ũ(x) = u(ρx) − m`, `f̃(x) = ρ^σ f(ρx)`.
fn fill_norms(
    rec: &mut ExperimentRecord,
    u: &GridFunction,
    f: &GridFunction,
    rho: f64,
    shift: f64,
    ledger: &ConstantLedger,
) -> Result<()> {
    let sigma = rec.sigma;
    let ball = Region::ball(rho);
    let fp = f.map(|v| v.max(0.0));
    let inf_u = u.region_inf(&ball)? - shift;
    let sub = u.mask_where(|v| v - shift <= 0.0).and(ball.clone());
    let scale_n = rho.powf(sigma - 1.0);
    rec.minus_inf_u = -inf_u;
    rec.ln_sub = scale_n * fp.ln_norm(&sub);
    rec.linf = rho.powf(sigma) * fp.linf_norm(&ball);
    rec.ln_ball = scale_n * fp.ln_norm(&ball);
    rec.linf_factor = rec.linf.powf((2.0 - sigma) / 2.0);
    rec.gs_factor = rec.linf_factor * rec.ln_ball.powf(sigma / 2.0);
    rec.gs_bound = ledger.gs_c0.linear() * rec.gs_factor;
    rec.ln_main_bound = ledger.c_hat.ln + rec.ln_sub.ln();
    rec.main_bound = ledger.c_hat.linear() * rec.ln_sub;
    if rec.ln_sub > 0.0 {
        rec.ratio = rec.minus_inf_u / rec.ln_sub;
    } else {
        rec.ratio = 0.0;
        if rec.minus_inf_u > 0.0 {
            rec.flags.push("comparison-violation".into());
        }
    }
    Ok(())
}

/// Record of a supersolution on its own ball, with the envelope quantities
/// when `env` is given.
pub fn abp_ratio(
    instance: &str,
    s: &Supersolution,
    env: Option<&EnvelopeResult>,
    ledger: &ConstantLedger,
) -> Result<ExperimentRecord> {
    let d = s.u.domain();
    let mut rec = ExperimentRecord::failed(instance, s.ell.sigma, d.h(), "");
    rec.flags.clear();
    fill_norms(&mut rec, &s.u, &s.f, s.radius, 0.0, ledger)?;
    if let Some(env) = env {
        let sum = envelope_residuals(env, &s.u);
        let fp = s.f.map(|v| v.max(0.0));
        let contact = env.contact_region().and(s.u.mask_where(|v| v <= 0.0)).and(Region::ball(s.radius));
        rec.ln_contact = s.radius.powf(rec.sigma - 1.0) * fp.ln_norm(&contact);
        if rec.ln_contact > rec.ln_sub {
            rec.flags.push("contact-exceeds-sublevel".into());
        }
        if !env.converged {
            rec.flags.push("envelope-unconverged".into());
        }
        if rec.minus_inf_u > 0.0 && (sum.inf_gamma + rec.minus_inf_u).abs() > 10.0 * env.tol {
            rec.flags.push("inf-mismatch".into());
        }
        let n = d.n();
        let outer = Region::ball(POTENTIAL_RADII[POTENTIAL_RADII.len() - 1]);
        let points = d.select(&outer);
        let p = riesz_field(&env.gamma, rec.sigma, &points)?;
        rec.p_inf_by_radius = POTENTIAL_RADII
            .iter()
            .map(|&r| {
                points
                    .iter()
                    .zip(&p)
                    .filter(|(&i, _)| Region::ball(r).contains(&d.point_of(i)[..n]))
                    .fold(0.0f64, |m, (_, &v)| m.min(v))
            })
            .collect();
        rec.p_inf = rec.p_inf_by_radius[0];
        rec.envelope = Some(sum);
    } else {
        rec.flags.push("no-envelope".into());
    }
    Ok(rec)
}

/// Record for the reduction to `B_{1−η}`: `u(ρ·) − m` with
/// `m = min(0, inf_{|y|≥ρ} u)`, `ρ = 1 − η`.
pub fn abp_ratio_reduced(instance: &str, s: &Supersolution, eta: f64, ledger: &ConstantLedger) -> Result<ExperimentRecord> {
    if !(eta > 0.0 && eta < 1.0) {
        return Err(Error::InvalidArgument(format!("eta = {eta} outside (0, 1)")));
    }
    let rho = s.radius * (1.0 - eta);
    let d = s.u.domain();
    let outside = Region::ball(rho).not();
    let shift = s.u.region_inf(&outside).unwrap_or(0.0).min(0.0).min(s.u.exterior().far_value());
    let mut rec = ExperimentRecord::failed(instance, s.ell.sigma, d.h(), "");
    rec.flags.clear();
    fill_norms(&mut rec, &s.u, &s.f, rho, shift, ledger)?;
    rec.flags.push("reduced".into());
    rec.flags.push("no-envelope".into());
    Ok(rec)
}

/// `|{v > M₁^k} ∩ Q₁|` against `(1 − με₀)^k`, compared in log space, for
/// `k = 0, 1, …` until the level exceeds `sup v`.
pub fn decay_profile(v: &GridFunction, h: &GridFunction, ledger: &ConstantLedger, ln_l: f64, ln_m3: f64) -> DecayProfile {
    let q1 = Region::cube(1.0);
    let q3 = Region::cube(3.0);
    let min_v = v.values().iter().fold(v.exterior().far_value(), |m, &x| m.min(x));
    let inf_q3 = v.region_inf(&q3).unwrap_or(f64::INFINITY);
    let h_inf = h.sup_norm();
    let h_n = h.ln_norm(&Region::All);
    let slack = 1e-12;
    let hypotheses = DecayHypotheses {
        nonnegative: min_v >= 0.0,
        inf_q3_le_one: inf_q3 <= 1.0,
        h_inf_ok: h_inf == 0.0 || h_inf.ln() <= ln_l + slack,
        h_n_ok: h_n == 0.0 || h_n.ln() <= ln_m3 + slack,
    };
    let ln_m1 = ledger.m1.ln;
    let sup_q1 = v.linf_norm(&q1);
    let k_max = if sup_q1 > 1.0 { (sup_q1.ln() / ln_m1).floor().max(0.0) as u32 + 1 } else { 1 };
    let mut rows = Vec::new();
    for k in 0..=k_max {
        let level = (k as f64 * ln_m1).exp();
        let measure = v.superlevel_measure(level, &q1);
        let ln_bound = ledger.ln_decay_bound(k);
        let ok = measure == 0.0 || measure.ln() <= ln_bound;
        rows.push(DecayRow { k, measure, ln_bound, ok });
    }
    let mut flags = Vec::new();
    if !hypotheses.all() {
        flags.push("hypotheses-not-met".into());
    }
    DecayProfile { hypotheses, ln_m1, rows, flags }
}

/// Normalizes `s` about its minimum at radius `r` and profiles the decay.
pub fn decay_of(s: &Supersolution, r: f64, ledger: &ConstantLedger) -> Result<DecayProfile> {
    let d = s.u.domain();
    let n = d.n();
    let (i0, _) = s.u.region_argmin(&Region::All)?;
    let x0 = d.point_of(i0);
    let g = ghat(&s.u, &s.f, d.h())?;
    let nz = normalize(&s.u, &g, &x0[..n], r, ledger, 1, s.ell.sigma)?;
    Ok(decay_profile(&nz.u_r, &nz.h_r, ledger, nz.ln_l, nz.ln_m3))
}

/// Per radius `R`, `max (−inf_{B_R} P)/‖f‖_{Lⁿ(contact)}` over the records.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Pre1Row {
    pub radius: f64,
    pub c_bar: f64,
    pub argmax: Option<String>,
    pub flagged: Vec<String>,
}

pub fn pre1_empirical(records: &[ExperimentRecord]) -> Result<Vec<Pre1Row>> {
    if records.is_empty() {
        return Err(Error::InvalidArgument("empty battery".into()));
    }
    Ok(POTENTIAL_RADII
        .iter()
        .enumerate()
        .map(|(j, &radius)| {
            let mut row = Pre1Row { radius, c_bar: 0.0, argmax: None, flagged: Vec::new() };
            for rec in records {
                let p = rec.p_inf_by_radius.get(j).copied().unwrap_or(f64::NAN);
                if !p.is_finite() || !rec.ln_contact.is_finite() {
                    continue;
                }
                let num = (-p).max(0.0);
                if rec.ln_contact == 0.0 {
                    if num > 0.0 {
                        row.flagged.push(format!("{}@{}", rec.instance, rec.sigma));
                    }
                    continue;
                }
                let q = num / rec.ln_contact;
                if q > row.c_bar {
                    row.c_bar = q;
                    row.argmax = Some(format!("{}@{}", rec.instance, rec.sigma));
                }
            }
            row
        })
        .collect())
}

/// `max (−inf u)/(‖f⁺‖∞^{(2−σ)/2} ‖f⁺‖_n^{σ/2})`, the smallest `C₀` making
/// every record satisfy the bound.
pub fn fit_gs_c0(records: &[ExperimentRecord]) -> f64 {
    records
        .iter()
        .filter(|r| r.gs_factor > 0.0 && r.minus_inf_u.is_finite())
        .fold(0.0f64, |m, r| m.max(r.minus_inf_u / r.gs_factor))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct Remark1Config {
    pub enabled: bool,
    pub etas: Vec<f64>,
}

impl Default for Remark1Config {
    fn default() -> Self {
        Remark1Config { enabled: false, etas: vec![0.1, 0.05, 0.01] }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    pub ledger: LedgerInputs,
    /// `σ = 2 − ε`.
    pub eps: Vec<f64>,
    pub resolutions: Vec<f64>,
    pub half_extent: f64,
    pub battery: Vec<Instance>,
    /// Envelopes are computed only when `h ≥ envelope_min_h`.
    pub envelope_min_h: f64,
    /// `r₀` of the ring report.
    pub ring_r0: f64,
    /// Normalization radius of the decay profile.
    pub decay_r: f64,
    /// Residual tolerance of the certificate, relative to `max(1, ‖f‖∞)`.
    pub certify_tol: f64,
    pub remark1: Remark1Config,
    pub dirichlet: DirichletConfig,
    pub envelope: EnvelopeConfig,
    pub cache_dir: Option<PathBuf>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            ledger: LedgerInputs::default(),
            eps: vec![0.1, 0.05, 0.01],
            resolutions: vec![1.0 / 32.0, 1.0 / 64.0],
            half_extent: 8.0,
            battery: default_battery(),
            envelope_min_h: 1.0 / 32.0,
            ring_r0: 0.5,
            decay_r: 0.5,
            certify_tol: 1e-6,
            remark1: Remark1Config::default(),
            dirichlet: DirichletConfig::default(),
            envelope: EnvelopeConfig::default(),
            cache_dir: None,
        }
    }
}

fn cache_key(f: &GridFunction, sigma: f64, cfg: &SweepConfig) -> Result<String> {
    let mut hs = Sha256::new();
    for v in f.values() {
        hs.update(v.to_le_bytes());
    }
    hs.update(serde_json::to_vec(&(sigma, f.domain(), &cfg.ledger.lambda, &cfg.ledger.big_lambda, &cfg.dirichlet))?);
    Ok(hs.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

fn solve_cached(f: &GridFunction, ell: &PucciEllipticity, cfg: &SweepConfig) -> Result<Supersolution> {
    let Some(dir) = &cfg.cache_dir else {
        return solve_dirichlet(f, ell, &cfg.dirichlet);
    };
    let path = dir.join(format!("{}.bin", cache_key(f, ell.sigma, cfg)?));
    if let Ok(file) = std::fs::File::open(&path) {
        let u = GridFunction::read_binary(file)?;
        return certify(u, f.clone(), ell, cfg.dirichlet.radius, 0, &cfg.dirichlet.quad);
    }
    let s = solve_dirichlet(f, ell, &cfg.dirichlet)?;
    std::fs::create_dir_all(dir)?;
    s.u.write_binary(std::io::BufWriter::new(std::fs::File::create(&path)?))?;
    Ok(s)
}

/// The supersolution of one battery instance.
pub fn solve_instance(inst: &Instance, domain: &Domain, ell: &PucciEllipticity, cfg: &SweepConfig) -> Result<Supersolution> {
    match &inst.forcing {
        Forcing::Catalog { profile } => catalog(*profile, domain, ell, &cfg.dirichlet.quad),
        f => solve_cached(&forcing_grid(f, domain)?, ell, cfg),
    }
}

fn run_one(
    inst: &Instance,
    domain: &Domain,
    ell: &PucciEllipticity,
    ledger: &ConstantLedger,
    cfg: &SweepConfig,
) -> Result<Vec<ExperimentRecord>> {
    let s = solve_instance(inst, domain, ell, cfg)?;
    let h = domain.h();
    let env = if h >= cfg.envelope_min_h && s.u.values().iter().any(|&v| v < 0.0) {
        Some(compute_envelope(&s.u, ell.sigma, &cfg.envelope)?)
    } else {
        None
    };
    let mut rec = abp_ratio(&inst.id, &s, env.as_ref(), ledger)?;
    if env.is_none() && s.u.values().iter().all(|&v| v >= 0.0) {
        // Γ ≡ 0 when u ≥ 0
        rec.ln_contact = 0.0;
        rec.p_inf = 0.0;
        rec.p_inf_by_radius = vec![0.0; POTENTIAL_RADII.len()];
        rec.flags.retain(|f| f != "no-envelope");
    }
    let tol = cfg.certify_tol * rec.linf.max(1.0);
    if !s.certified(tol) {
        rec.flags.push("uncertified".into());
    }
    if let Some(env) = &env {
        let n = domain.n();
        let (i0, g0) = env.gamma.region_argmin(&Region::ball(1.0))?;
        if g0 < 0.0 {
            let x0 = domain.point_of(i0);
            let rings = ring_decomposition(&env.gamma, &x0[..n], cfg.ring_r0)?;
            rec.ring = Some(verify_ring_bound(&env.gamma, rings, ell.sigma)?);
        }
    }
    if rec.minus_inf_u > 0.0 && rec.linf > 0.0 {
        let prof = decay_of(&s, cfg.decay_r, ledger)?;
        rec.flags.extend(prof.flags.iter().cloned());
        rec.decay = Some(prof);
    }
    let mut out = vec![rec];
    if cfg.remark1.enabled && matches!(inst.forcing, Forcing::BoundaryBlowup { .. }) {
        for &eta in &cfg.remark1.etas {
            out.push(abp_ratio_reduced(&format!("{}@eta={eta}", inst.id), &s, eta, ledger)?);
        }
    }
    Ok(out)
}

pub fn build_ledger(inputs: &LedgerInputs) -> Result<ConstantLedger> {
    let prov = if inputs.m1.is_some() && inputs.m2.is_some() { Provenance::Certified } else { Provenance::Assumed };
    ConstantLedger::build(inputs, prov)
}

/// Records in the order resolution, instance, σ. Instance failures become
/// rows flagged `error: …`.
pub fn sweep_sigma(cfg: &SweepConfig) -> Result<Vec<ExperimentRecord>> {
    let ledger = build_ledger(&cfg.ledger)?;
    let n = cfg.ledger.n;
    let mut out = Vec::new();
    for &h in &cfg.resolutions {
        let domain = Domain::new(n, h, cfg.half_extent)?;
        for inst in &cfg.battery {
            for &eps in &cfg.eps {
                let sigma = 2.0 - eps;
                let res = PucciEllipticity::new(n, cfg.ledger.lambda, cfg.ledger.big_lambda, sigma)
                    .and_then(|ell| run_one(inst, &domain, &ell, &ledger, cfg));
                match res {
                    Ok(recs) => out.extend(recs),
                    Err(e) => out.push(ExperimentRecord::failed(&inst.id, sigma, h, &e.to_string())),
                }
            }
        }
    }
    Ok(out)
}

pub fn write_csv<W: Write>(records: &[ExperimentRecord], mut w: W) -> Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for r in records {
        writeln!(w, "{}", r.csv_row())?;
    }
    Ok(())
}

pub fn csv_string(records: &[ExperimentRecord]) -> String {
    let mut buf = Vec::new();
    write_csv(records, &mut buf).expect("writing to a vector");
    String::from_utf8(buf).expect("ascii output")
}

const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#7f7f7f"];

struct Plot {
    w: f64,
    h: f64,
    margin: f64,
    x: (f64, f64),
    y: (f64, f64),
    body: String,
}

impl Plot {
    fn new(x: (f64, f64), y: (f64, f64)) -> Self {
        let pad = |(a, b): (f64, f64)| if b > a { (a, b) } else { (a - 0.5, a + 0.5) };
        Plot { w: 640.0, h: 420.0, margin: 60.0, x: pad(x), y: pad(y), body: String::new() }
    }

    fn px(&self, x: f64, y: f64) -> (f64, f64) {
        let sx = self.margin + (x - self.x.0) / (self.x.1 - self.x.0) * (self.w - 2.0 * self.margin);
        let sy = self.h - self.margin - (y - self.y.0) / (self.y.1 - self.y.0) * (self.h - 2.0 * self.margin);
        (sx, sy)
    }

    fn line(&mut self, pts: &[(f64, f64)], color: &str, dashed: bool, label: &str, slot: usize) {
        let path: Vec<String> = pts
            .iter()
            .map(|&(x, y)| {
                let (a, b) = self.px(x, y);
                format!("{a:.2},{b:.2}")
            })
            .collect();
        let dash = if dashed { " stroke-dasharray=\"6 4\"" } else { "" };
        self.body += &format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"{dash} points=\"{}\"/>\n",
            path.join(" ")
        );
        for &(x, y) in pts {
            let (a, b) = self.px(x, y);
            self.body += &format!("<circle cx=\"{a:.2}\" cy=\"{b:.2}\" r=\"2.5\" fill=\"{color}\"/>\n");
        }
        let ly = self.margin + 14.0 * slot as f64;
        self.body += &format!(
            "<text x=\"{:.1}\" y=\"{ly:.1}\" font-size=\"11\" fill=\"{color}\">{}</text>\n",
            self.w - self.margin + 4.0,
            label
        );
    }

    fn finish(self, title: &str, xlabel: &str, ylabel: &str) -> String {
        let (x0, y0) = self.px(self.x.0, self.y.0);
        let (x1, y1) = self.px(self.x.1, self.y.1);
        let mut s = format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" font-family=\"sans-serif\">\n",
            self.w + 140.0,
            self.h
        );
        s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
        s += &format!("<rect x=\"{x0:.1}\" y=\"{y1:.1}\" width=\"{:.1}\" height=\"{:.1}\" fill=\"none\" stroke=\"black\"/>\n", x1 - x0, y0 - y1);
        s += &format!("<text x=\"{:.1}\" y=\"24\" font-size=\"14\" text-anchor=\"middle\">{title}</text>\n", self.w / 2.0);
        s += &format!("<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"12\" text-anchor=\"middle\">{xlabel}</text>\n", self.w / 2.0, self.h - 16.0);
        s += &format!(
            "<text x=\"16\" y=\"{:.1}\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 16 {:.1})\">{ylabel}</text>\n",
            self.h / 2.0,
            self.h / 2.0
        );
        for (v, (a, b)) in [(self.x.0, (x0, y0 + 16.0)), (self.x.1, (x1, y0 + 16.0))] {
            s += &format!("<text x=\"{a:.1}\" y=\"{b:.1}\" font-size=\"10\" text-anchor=\"middle\">{v:.4}</text>\n");
        }
        for (v, b) in [(self.y.0, y0), (self.y.1, y1)] {
            s += &format!("<text x=\"{:.1}\" y=\"{b:.1}\" font-size=\"10\" text-anchor=\"end\">{v:.4}</text>\n", x0 - 4.0);
        }
        s += &self.body;
        s += "</svg>\n";
        s
    }
}

fn extent(vals: impl Iterator<Item = f64>) -> (f64, f64) {
    vals.filter(|v| v.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)))
}

/// Ratio against σ, one polyline per (instance, h).
pub fn ratio_svg(records: &[ExperimentRecord]) -> String {
    let mut series: Vec<(String, Vec<(f64, f64)>)> = Vec::new();
    for r in records.iter().filter(|r| r.ratio.is_finite()) {
        let key = format!("{} h={}", r.instance, r.h);
        match series.iter_mut().find(|(k, _)| *k == key) {
            Some((_, pts)) => pts.push((r.sigma, r.ratio)),
            None => series.push((key, vec![(r.sigma, r.ratio)])),
        }
    }
    let xs = extent(series.iter().flat_map(|(_, p)| p.iter().map(|q| q.0)));
    let ys = extent(series.iter().flat_map(|(_, p)| p.iter().map(|q| q.1)));
    let mut plot = Plot::new(xs, (0.0f64.min(ys.0), ys.1));
    for (i, (key, mut pts)) in series.into_iter().enumerate() {
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let dashed = i >= PALETTE.len();
        plot.line(&pts, PALETTE[i % PALETTE.len()], dashed, &key, i);
    }
    plot.finish("ABP ratio", "sigma", "(-inf u) / ||f+||_n")
}

/// `log₁₀` of the measured superlevel measure (solid) and of the bound
/// (dashed) against `k`. Empty measures are drawn at the lower edge.
pub fn decay_svg(profiles: &[(String, DecayProfile)]) -> String {
    let floor = -6.0;
    let lg = |m: f64| if m > 0.0 { m.log10().max(floor) } else { floor };
    let xs = extent(profiles.iter().flat_map(|(_, p)| p.rows.iter().map(|r| r.k as f64)));
    let mut plot = Plot::new(xs, (floor, 0.0));
    for (i, (name, p)) in profiles.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let meas: Vec<(f64, f64)> = p.rows.iter().map(|r| (r.k as f64, lg(r.measure))).collect();
        let bound: Vec<(f64, f64)> = p.rows.iter().map(|r| (r.k as f64, (r.ln_bound / std::f64::consts::LN_10).max(floor))).collect();
        plot.line(&meas, color, false, name, 2 * i);
        plot.line(&bound, color, true, &format!("{name} bound"), 2 * i + 1);
    }
    plot.finish("Superlevel decay", "k", "log10 |{v > M1^k} in Q1|")
}

/// Writes `sweep.csv`, `records.json`, `ratio.svg` and `decay.svg`.
pub fn write_sweep_outputs(records: &[ExperimentRecord], dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_csv(records, std::io::BufWriter::new(std::fs::File::create(dir.join("sweep.csv"))?))?;
    serde_json::to_writer_pretty(std::fs::File::create(dir.join("records.json"))?, records)?;
    std::fs::write(dir.join("ratio.svg"), ratio_svg(records))?;
    let profiles: Vec<(String, DecayProfile)> = records
        .iter()
        .filter_map(|r| r.decay.clone().map(|p| (format!("{} s={} h={}", r.instance, r.sigma, r.h), p)))
        .collect();
    std::fs::write(dir.join("decay.svg"), decay_svg(&profiles))?;
    Ok(())
}
