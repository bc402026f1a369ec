//! Dyadic cubes of `Q₁`, the Calderón–Zygmund stopping-time decomposition
//! and an exhaustive checker for the covering lemma on cell sets.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A subset of `Q₁` made of generation-`gen` cells, stored as a bitmap with
/// the first axis most significant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellSet {
    pub n: usize,
    pub gen: u32,
    pub bits: Vec<bool>,
}

impl CellSet {
    pub fn empty(n: usize, gen: u32) -> Self {
        CellSet { n, gen, bits: vec![false; 1usize << (n as u32 * gen)] }
    }

    pub fn full(n: usize, gen: u32) -> Self {
        CellSet { n, gen, bits: vec![true; 1usize << (n as u32 * gen)] }
    }

    /// Cells whose centre (in `Q₁ = (−1/2, 1/2)^n`) satisfies `pred`.
    pub fn from_fn(n: usize, gen: u32, pred: impl Fn(&[f64]) -> bool) -> Self {
        let mut s = CellSet::empty(n, gen);
        let side = 1usize << gen;
        let w = 1.0 / side as f64;
        for (f, b) in s.bits.iter_mut().enumerate() {
            let idx = unflatten(f, n, side);
            let c: Vec<f64> = (0..n).map(|a| -0.5 + (idx[a] as f64 + 0.5) * w).collect();
            *b = pred(&c);
        }
        s
    }

    pub fn side(&self) -> usize {
        1usize << self.gen
    }

    pub fn cell_measure(&self) -> f64 {
        (0.5f64).powi((self.n as u32 * self.gen) as i32)
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn measure(&self) -> f64 {
        self.count() as f64 * self.cell_measure()
    }

    pub fn contains_cell(&self, idx: &[u32]) -> bool {
        self.bits[flatten(idx, self.n, self.side())]
    }

    pub fn insert_cube(&mut self, q: &DyadicCube) {
        for f in q.cells(self.gen) {
            self.bits[f] = true;
        }
    }

    pub fn is_subset(&self, other: &CellSet) -> bool {
        self.bits.iter().zip(&other.bits).all(|(&a, &b)| !a || b)
    }

    fn check_compatible(&self, other: &CellSet) -> Result<()> {
        if self.n != other.n || self.gen != other.gen {
            return Err(Error::InvalidArgument("cell sets of different resolution".into()));
        }
        Ok(())
    }
}

fn flatten(idx: &[u32], n: usize, side: usize) -> usize {
    idx[..n].iter().fold(0, |acc, &k| acc * side + k as usize)
}

fn unflatten(mut f: usize, n: usize, side: usize) -> [u32; 3] {
    let mut idx = [0u32; 3];
    for a in (0..n).rev() {
        idx[a] = (f % side) as u32;
        f /= side;
    }
    idx
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DyadicCube {
    pub n: usize,
    pub generation: u32,
    pub index: [u32; 3],
}

impl DyadicCube {
    pub fn unit(n: usize) -> Self {
        DyadicCube { n, generation: 0, index: [0; 3] }
    }

    pub fn new(n: usize, generation: u32, index: &[u32]) -> Result<Self> {
        let side = 1u64 << generation;
        if index.len() < n || index[..n].iter().any(|&k| k as u64 >= side) {
            return Err(Error::InvalidArgument(format!("index {index:?} outside generation {generation}")));
        }
        let mut idx = [0u32; 3];
        idx[..n].copy_from_slice(&index[..n]);
        Ok(DyadicCube { n, generation, index: idx })
    }

    pub fn side(&self) -> f64 {
        0.5f64.powi(self.generation as i32)
    }

    pub fn measure(&self) -> f64 {
        self.side().powi(self.n as i32)
    }

    pub fn predecessor(&self) -> Option<DyadicCube> {
        if self.generation == 0 {
            return None;
        }
        let mut index = [0u32; 3];
        for a in 0..self.n {
            index[a] = self.index[a] / 2;
        }
        Some(DyadicCube { n: self.n, generation: self.generation - 1, index })
    }

    pub fn children(&self) -> Vec<DyadicCube> {
        (0..1u32 << self.n)
            .map(|c| {
                let mut index = [0u32; 3];
                for a in 0..self.n {
                    index[a] = 2 * self.index[a] + ((c >> (self.n - 1 - a)) & 1);
                }
                DyadicCube { n: self.n, generation: self.generation + 1, index }
            })
            .collect()
    }

    /// Flat indices of the generation-`gen` cells inside the cube.
    pub fn cells(&self, gen: u32) -> Vec<usize> {
        assert!(gen >= self.generation);
        let k = gen - self.generation;
        let sub = 1usize << k;
        let side = 1usize << gen;
        (0..sub.pow(self.n as u32))
            .map(|f| {
                let off = unflatten(f, self.n, sub);
                let mut idx = [0u32; 3];
                for a in 0..self.n {
                    idx[a] = (self.index[a] << k) + off[a];
                }
                flatten(&idx, self.n, side)
            })
            .collect()
    }

    /// Lower corner in `Q₁` coordinates.
    pub fn corner(&self) -> Vec<f64> {
        (0..self.n).map(|a| -0.5 + self.index[a] as f64 * self.side()).collect()
    }
}

/// Cell counts of a set on every generation `0..=gen`.
struct Pyramid {
    n: usize,
    counts: Vec<Vec<u32>>,
}

impl Pyramid {
    fn new(set: &CellSet) -> Self {
        let n = set.n;
        let mut counts = vec![Vec::new(); set.gen as usize + 1];
        counts[set.gen as usize] = set.bits.iter().map(|&b| b as u32).collect();
        for g in (0..set.gen as usize).rev() {
            let side = 1usize << g;
            let fine_side = 2 * side;
            let mut c = vec![0u32; side.pow(n as u32)];
            for (f, &v) in counts[g + 1].iter().enumerate() {
                if v == 0 {
                    continue;
                }
                let idx = unflatten(f, n, fine_side);
                let mut p = [0u32; 3];
                for a in 0..n {
                    p[a] = idx[a] / 2;
                }
                c[flatten(&p, n, side)] += v;
            }
            counts[g] = c;
        }
        Pyramid { n, counts }
    }

    fn count(&self, q: &DyadicCube) -> u32 {
        self.counts[q.generation as usize][flatten(&q.index, self.n, 1 << q.generation)]
    }

    /// Density `|A ∩ Q| / |Q|`.
    fn density(&self, q: &DyadicCube, finest: u32) -> f64 {
        let cells = 1u64 << (self.n as u32 * (finest - q.generation));
        self.count(q) as f64 / cells as f64
    }
}

fn check_delta(delta: f64) -> Result<()> {
    if delta > 0.0 && delta < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("delta = {delta} outside (0, 1)")))
    }
}

/// Maximal dyadic cubes `Q` of generation `≤ max_gen` with
/// `|A ∩ Q| > δ|Q|`; all their ancestors have density `≤ δ`.
pub fn dyadic_decompose(a: &CellSet, delta: f64, max_gen: u32) -> Result<Vec<DyadicCube>> {
    check_delta(delta)?;
    if max_gen > a.gen {
        return Err(Error::InvalidArgument(format!("max_gen {max_gen} finer than the set resolution {}", a.gen)));
    }
    let measure = a.measure();
    if measure > delta {
        return Err(Error::DensityHypothesisFail { measure, delta });
    }
    let pyr = Pyramid::new(a);
    let mut out = Vec::new();
    let mut stack = vec![DyadicCube::unit(a.n)];
    while let Some(q) = stack.pop() {
        if q.generation >= max_gen {
            continue;
        }
        for c in q.children() {
            if pyr.count(&c) == 0 {
                continue;
            }
            if pyr.density(&c, a.gen) > delta {
                out.push(c);
            } else {
                stack.push(c);
            }
        }
    }
    out.sort_by_key(|q| (q.generation, q.index));
    Ok(out)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CzReport {
    pub measure_a: f64,
    pub measure_b: f64,
    pub delta: f64,
    pub hypothesis_a: bool,
    pub hypothesis_b: bool,
    /// `|A| ≤ δ|B|`, evaluated regardless of the hypotheses.
    pub conclusion: bool,
    /// A dense cube whose predecessor is not inside `B`, or the unit cube
    /// when (a) fails.
    pub witness: Option<DyadicCube>,
}

impl CzReport {
    /// True unless both hypotheses hold and the conclusion fails.
    pub fn consistent(&self) -> bool {
        !(self.hypothesis_a && self.hypothesis_b) || self.conclusion
    }
}

pub fn cz_verify(a: &CellSet, b: &CellSet, delta: f64, max_gen: u32) -> Result<CzReport> {
    check_delta(delta)?;
    a.check_compatible(b)?;
    if max_gen > a.gen {
        return Err(Error::InvalidArgument(format!("max_gen {max_gen} finer than the set resolution {}", a.gen)));
    }
    if !a.is_subset(b) {
        return Err(Error::NotNested);
    }
    let measure_a = a.measure();
    let measure_b = b.measure();
    let hypothesis_a = measure_a <= delta;
    let pa = Pyramid::new(a);
    let pb = Pyramid::new(b);
    let mut witness = (!hypothesis_a).then(|| DyadicCube::unit(a.n));
    let mut hypothesis_b = true;
    'scan: for g in 1..=max_gen {
        let side = 1usize << g;
        for f in 0..side.pow(a.n as u32) {
            let idx = unflatten(f, a.n, side);
            let q = DyadicCube { n: a.n, generation: g, index: idx };
            if pa.density(&q, a.gen) > delta {
                let p = q.predecessor().expect("generation at least one");
                let inside = pb.count(&p) as u64 == 1u64 << (a.n as u32 * (a.gen - p.generation));
                if !inside {
                    hypothesis_b = false;
                    if witness.is_none() {
                        witness = Some(q);
                    }
                    break 'scan;
                }
            }
        }
    }
    Ok(CzReport {
        measure_a,
        measure_b,
        delta,
        hypothesis_a,
        hypothesis_b,
        conclusion: measure_a <= delta * measure_b,
        witness,
    })
}

/// Smallest `B ⊇ A` satisfying hypothesis (b): `A` together with the
/// predecessors of all dense cubes up to `max_gen`.
pub fn minimal_cover(a: &CellSet, delta: f64, max_gen: u32) -> Result<CellSet> {
    check_delta(delta)?;
    let pa = Pyramid::new(a);
    let mut b = a.clone();
    for g in 1..=max_gen.min(a.gen) {
        let side = 1usize << g;
        for f in 0..side.pow(a.n as u32) {
            let q = DyadicCube { n: a.n, generation: g, index: unflatten(f, a.n, side) };
            if pa.density(&q, a.gen) > delta {
                b.insert_cube(&q.predecessor().expect("generation at least one"));
            }
        }
    }
    Ok(b)
}
