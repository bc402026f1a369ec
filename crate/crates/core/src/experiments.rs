//! Configuration file and the randomized experiment batteries behind the
//! command-line tools.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::barrier::DEFAULT_SIGMA_GRID;
use crate::battery::{random_well, Forcing, Instance};
use crate::dyadic::{cz_verify, minimal_cover, CellSet, CzReport, DyadicCube};
use crate::envelope::{compute_envelope, EnvelopeConfig};
use crate::error::Result;
use crate::grid::{Domain, Region};
use crate::harness::SweepConfig;
use crate::riesz::{ring_decomposition, verify_ring_bound, RingReport};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct BarrierConfig {
    pub h: f64,
    pub half_extent: f64,
    /// Core radius of the profile.
    pub smoothing: f64,
    pub sigma_grid: Vec<f64>,
    /// Violation tolerance relative to `‖η‖∞`.
    pub tol_rel: f64,
}

impl Default for BarrierConfig {
    fn default() -> Self {
        BarrierConfig {
            h: 1.0 / 32.0,
            half_extent: 8.0,
            smoothing: 0.125,
            sigma_grid: DEFAULT_SIGMA_GRID.to_vec(),
            tol_rel: 1e-9,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RieszConfig {
    pub trials: usize,
    pub h: f64,
    pub half_extent: f64,
    pub sigmas: Vec<f64>,
    pub max_bumps: usize,
    pub r0_range: (f64, f64),
    pub seed: u64,
    pub envelope: EnvelopeConfig,
}

impl Default for RieszConfig {
    fn default() -> Self {
        RieszConfig {
            trials: 50,
            h: 1.0 / 16.0,
            half_extent: 8.0,
            sigmas: vec![1.5, 1.75, 1.9, 1.95],
            max_bumps: 4,
            r0_range: (0.25, 1.0),
            seed: 7,
            envelope: EnvelopeConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct CzConfig {
    pub trials: usize,
    pub n: usize,
    /// Cell resolution of the random sets.
    pub gen: u32,
    pub max_gen: u32,
    pub seed: u64,
}

impl Default for CzConfig {
    fn default() -> Self {
        CzConfig { trials: 10_000, n: 2, gen: 6, max_gen: 6, seed: 11 }
    }
}

/// Everything the command-line tools read from `--config`.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct Config {
    pub sweep: SweepConfig,
    pub barrier: BarrierConfig,
    pub riesz: RieszConfig,
    pub czd: CzConfig,
    /// Instance of `solve`, `envelope` and `decay`; the first battery
    /// entry when absent.
    pub instance: Option<Instance>,
}

impl Config {
    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_reader(std::io::BufReader::new(std::fs::File::open(path)?))?)
    }

    pub fn instance(&self) -> Instance {
        self.instance
            .clone()
            .or_else(|| self.sweep.battery.first().cloned())
            .unwrap_or_else(|| Instance::new("const", Forcing::Constant { value: 1.0 }))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RingTrial {
    pub trial: usize,
    pub sigma: f64,
    pub bumps: usize,
    pub envelope_converged: bool,
    pub report: RingReport,
}

impl RingTrial {
    /// `direct − chain`
    pub fn discrepancy(&self) -> f64 {
        self.report.direct - self.report.chain
    }
}

/// Envelopes of random wells `u = −Σ bumps` and their ring reports at the
/// minimum of `Γ` in `B₁`.
pub fn riesz_chain_trials(cfg: &RieszConfig, n: usize) -> Result<Vec<RingTrial>> {
    let domain = Domain::new(n, cfg.h, cfg.half_extent)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut out = Vec::with_capacity(cfg.trials);
    for trial in 0..cfg.trials {
        let bumps = rng.random_range(1..=cfg.max_bumps.max(1));
        let seed: u64 = rng.random();
        let sigma = cfg.sigmas[trial % cfg.sigmas.len()];
        let r0 = rng.random_range(cfg.r0_range.0..=cfg.r0_range.1);
        let u = random_well(&domain, bumps, seed);
        let env = compute_envelope(&u, sigma, &cfg.envelope)?;
        let (i0, _) = env.gamma.region_argmin(&Region::ball(1.0))?;
        let x0 = domain.point_of(i0);
        let rings = ring_decomposition(&env.gamma, &x0[..n], r0)?;
        let report = verify_ring_bound(&env.gamma, rings, sigma)?;
        out.push(RingTrial { trial, sigma, bumps, envelope_converged: env.converged, report });
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CzSummary {
    pub trials: usize,
    /// Trials where both hypotheses held.
    pub admissible: usize,
    pub violations: Vec<CzReport>,
}

/// Random sets `A` with `|A| ≤ δ` built from dyadic cubes, and `B` the
/// minimal cover of `A` plus random extra cubes.
pub fn random_cz_instance(rng: &mut ChaCha8Rng, cfg: &CzConfig) -> Result<(CellSet, CellSet, f64)> {
    let n = cfg.n;
    let delta = rng.random_range(0.02..0.98);
    let mut a = CellSet::empty(n, cfg.gen);
    let pieces = rng.random_range(1..=24);
    for _ in 0..pieces {
        let g = rng.random_range(1..=cfg.gen);
        let side = 1u32 << g;
        let idx: Vec<u32> = (0..n).map(|_| rng.random_range(0..side)).collect();
        let q = DyadicCube::new(n, g, &idx)?;
        let mut trial = a.clone();
        trial.insert_cube(&q);
        if trial.measure() <= delta {
            a = trial;
        }
    }
    let mut b = minimal_cover(&a, delta, cfg.max_gen)?;
    for _ in 0..rng.random_range(0..4) {
        let g = rng.random_range(1..=cfg.gen);
        let side = 1u32 << g;
        let idx: Vec<u32> = (0..n).map(|_| rng.random_range(0..side)).collect();
        b.insert_cube(&DyadicCube::new(n, g, &idx)?);
    }
    Ok((a, b, delta))
}

pub fn cz_trials(cfg: &CzConfig) -> Result<CzSummary> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut admissible = 0;
    let mut violations = Vec::new();
    for _ in 0..cfg.trials {
        let (a, b, delta) = random_cz_instance(&mut rng, cfg)?;
        let rep = cz_verify(&a, &b, delta, cfg.max_gen)?;
        if rep.hypothesis_a && rep.hypothesis_b {
            admissible += 1;
        }
        if !rep.consistent() {
            violations.push(rep);
        }
    }
    Ok(CzSummary { trials: cfg.trials, admissible, violations })
}
