//! Forcing terms of the test battery.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Domain, GridFunction};
use crate::supersolution::CatalogProfile;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Forcing {
    Constant { value: f64 },
    /// `amplitude · exp(−|x|²/width²)`
    Gaussian { amplitude: f64, width: f64 },
    /// `amplitude · (1 − |x−c|²/radius²)₊`
    Bump { center: Vec<f64>, radius: f64, amplitude: f64 },
    /// One lattice point at the origin raised to `height` on a constant
    /// background chosen so the `Lⁿ(B₁)` norm equals `ln_norm`.
    Spike { height: f64, ln_norm: f64 },
    /// `high` and `low` on alternating cubes of side `1/cells`.
    Checkerboard { cells: usize, low: f64, high: f64 },
    /// `(1 − |x|)^{−power}`, unbounded near the boundary.
    BoundaryBlowup { power: f64 },
    /// Sum of `count` random bumps.
    RandomBumps { count: usize, seed: u64 },
    /// Known supersolution; the forcing is derived from it.
    Catalog { profile: CatalogProfile },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub id: String,
    pub forcing: Forcing,
}

impl Instance {
    pub fn new(id: &str, forcing: Forcing) -> Self {
        Instance { id: id.into(), forcing }
    }
}

pub const SPIKE_HEIGHTS: [f64; 4] = [1.0, 10.0, 100.0, 1000.0];

/// Smallest round norm that fits a height-1000 single-cell spike at
/// `h = 1/32`, where that cell alone carries `Lⁿ` norm 31.25.
pub const SPIKE_LN_NORM: f64 = 32.0;

/// Default battery: constant, Gaussian, off-center bump, four spikes and a
/// checkerboard.
pub fn default_battery() -> Vec<Instance> {
    let mut b = vec![
        Instance::new("const", Forcing::Constant { value: 1.0 }),
        Instance::new("gaussian", Forcing::Gaussian { amplitude: 1.0, width: 0.4 }),
        Instance::new("bump", Forcing::Bump { center: vec![0.4, 0.2], radius: 0.4, amplitude: 2.0 }),
    ];
    b.extend(spike_family(&SPIKE_HEIGHTS, SPIKE_LN_NORM));
    b.push(Instance::new("checker", Forcing::Checkerboard { cells: 4, low: 0.0, high: 1.0 }));
    b
}

pub fn spike_family(heights: &[f64], ln_norm: f64) -> Vec<Instance> {
    heights
        .iter()
        .map(|&height| Instance::new(&format!("spike-{height}"), Forcing::Spike { height, ln_norm }))
        .collect()
}

fn unit_ball_measure(domain: &Domain) -> f64 {
    let n = domain.n();
    (0..domain.len())
        .filter(|&i| domain.point_of(i)[..n].iter().map(|v| v * v).sum::<f64>() < 1.0)
        .count() as f64
        * domain.cell_volume()
}

/// Samples the forcing on the lattice points of `B₁`; zero elsewhere.
pub fn forcing_grid(f: &Forcing, domain: &Domain) -> Result<GridFunction> {
    let n = domain.n();
    let h = domain.h();
    let inside = |p: &[f64]| p.iter().map(|v| v * v).sum::<f64>() < 1.0;
    let g = match f {
        Forcing::Constant { value } => {
            let v = *value;
            GridFunction::from_fn(domain, 0.0, |p| if inside(&p[..n]) { v } else { 0.0 })
        }
        Forcing::Gaussian { amplitude, width } => GridFunction::from_fn(domain, 0.0, |p| {
            let r2: f64 = p[..n].iter().map(|v| v * v).sum();
            if r2 < 1.0 {
                amplitude * (-r2 / (width * width)).exp()
            } else {
                0.0
            }
        }),
        Forcing::Bump { center, radius, amplitude } => {
            if center.len() < n {
                return Err(Error::InvalidArgument("bump center has too few coordinates".into()));
            }
            GridFunction::from_fn(domain, 0.0, |p| {
                if !inside(&p[..n]) {
                    return 0.0;
                }
                let d2: f64 = (0..n).map(|a| (p[a] - center[a]).powi(2)).sum();
                amplitude * (1.0 - d2 / (radius * radius)).max(0.0)
            })
        }
        Forcing::Spike { height, ln_norm } => {
            let nf = n as f64;
            let spike = height.powf(nf) * domain.cell_volume();
            let rest = ln_norm.powf(nf) - spike;
            if !(rest >= 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "a spike of height {height} alone exceeds the Ln norm {ln_norm} at h = {h}"
                )));
            }
            let m = unit_ball_measure(domain) - domain.cell_volume();
            let b = (rest / m).powf(1.0 / nf);
            let origin = domain.flat_of(&[0, 0, 0]).expect("origin is a lattice point");
            let mut g = GridFunction::from_fn(domain, 0.0, |p| if inside(&p[..n]) { b } else { 0.0 });
            g.values_mut()[origin] = *height;
            g
        }
        Forcing::Checkerboard { cells, low, high } => {
            let c = *cells as f64;
            GridFunction::from_fn(domain, 0.0, |p| {
                if !inside(&p[..n]) {
                    return 0.0;
                }
                let parity: i64 = p[..n].iter().map(|v| (v * c).floor() as i64).sum();
                if parity.rem_euclid(2) == 0 {
                    *high
                } else {
                    *low
                }
            })
        }
        Forcing::BoundaryBlowup { power } => GridFunction::from_fn(domain, 0.0, |p| {
            let r = p[..n].iter().map(|v| v * v).sum::<f64>().sqrt();
            if r < 1.0 {
                (1.0 - r).powf(-power)
            } else {
                0.0
            }
        }),
        Forcing::RandomBumps { count, seed } => {
            let bumps = random_bumps(n, *count, *seed, 0.7);
            GridFunction::from_fn(domain, 0.0, |p| {
                if !inside(&p[..n]) {
                    return 0.0;
                }
                bumps.iter().map(|b| b.eval(&p[..n])).sum()
            })
        }
        Forcing::Catalog { .. } => {
            return Err(Error::InvalidArgument("catalog forcing is derived from its profile".into()));
        }
    };
    Ok(g)
}

/// `amplitude (1 − |x−c|²/ρ²)₊²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bump {
    pub center: [f64; 3],
    pub radius: f64,
    pub amplitude: f64,
}

impl Bump {
    pub fn eval(&self, x: &[f64]) -> f64 {
        let d2: f64 = x.iter().zip(&self.center).map(|(a, b)| (a - b).powi(2)).sum();
        self.amplitude * (1.0 - d2 / (self.radius * self.radius)).max(0.0).powi(2)
    }
}

/// Bumps with centers and radii such that every support stays inside
/// `B_reach`.
pub fn random_bumps(n: usize, count: usize, seed: u64, reach: f64) -> Vec<Bump> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let radius = rng.random_range(0.15..0.45);
            let dist = rng.random_range(0.0..=(reach - radius).max(0.0));
            let mut dir = [0.0; 3];
            let mut norm = 0.0;
            while norm < 1e-6 {
                for d in dir.iter_mut().take(n) {
                    *d = rng.random_range(-1.0..1.0);
                }
                norm = dir[..n].iter().map(|v| v * v).sum::<f64>().sqrt();
            }
            let mut center = [0.0; 3];
            for a in 0..n {
                center[a] = dir[a] / norm * dist;
            }
            Bump { center, radius, amplitude: rng.random_range(0.2..1.0) }
        })
        .collect()
}

/// `u = −Σ bumps`, negative inside `B₁` and zero outside.
pub fn random_well(domain: &Domain, count: usize, seed: u64) -> GridFunction {
    let n = domain.n();
    let bumps = random_bumps(n, count, seed, 0.9);
    GridFunction::from_fn(domain, 0.0, |p| -bumps.iter().map(|b| b.eval(&p[..n])).sum::<f64>())
}

/// Lattice measure of `B₁` minus the exact value `|B₁|`.
pub fn unit_ball_defect(domain: &Domain) -> f64 {
    let exact = match domain.n() {
        2 => PI,
        _ => 4.0 * PI / 3.0,
    };
    unit_ball_measure(domain) - exact
}
