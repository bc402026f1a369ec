//! Uniform cube lattices `h Z^n ∩ [-E, E]^n` with a far-field value model.

use std::io::{BufRead, Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Geometry of the computational box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    n: usize,
    h: f64,
    half_extent: f64,
    /// `E / h`; lattice indices run over `-cells..=cells` on each axis.
    cells: usize,
}

impl Domain {
    pub fn new(n: usize, h: f64, half_extent: f64) -> Result<Self> {
        if !(2..=3).contains(&n) {
            return Err(Error::InvalidDomain(format!("dimension {n} not in 2..=3")));
        }
        if !(h > 0.0) || !h.is_finite() {
            return Err(Error::InvalidDomain(format!("mesh width {h} must be positive")));
        }
        let ratio = half_extent / h;
        let cells = ratio.round();
        if (ratio - cells).abs() > 1e-9 * ratio.max(1.0) || cells < 1.0 {
            return Err(Error::InvalidDomain(format!(
                "half extent {half_extent} is not an integer multiple of h = {h}"
            )));
        }
        let min_extent = 3.0 + 2.0 * (n as f64).sqrt();
        if half_extent < min_extent {
            return Err(Error::InvalidDomain(format!(
                "half extent {half_extent} below 3 + 2 sqrt(n) = {min_extent:.4}"
            )));
        }
        Ok(Domain { n, h, half_extent, cells: cells as usize })
    }

    /// Default box `[-8, 8]^n`.
    pub fn with_default_extent(n: usize, h: f64) -> Result<Self> {
        Domain::new(n, h, 8.0)
    }

    pub fn n(&self) -> usize {
        self.n
    }
    pub fn h(&self) -> f64 {
        self.h
    }
    pub fn half_extent(&self) -> f64 {
        self.half_extent
    }
    pub fn cells(&self) -> usize {
        self.cells
    }
    /// Points per axis.
    pub fn side(&self) -> usize {
        2 * self.cells + 1
    }
    pub fn len(&self) -> usize {
        self.side().pow(self.n as u32)
    }
    pub fn is_empty(&self) -> bool {
        false
    }
    /// Volume of one lattice cell.
    pub fn cell_volume(&self) -> f64 {
        self.h.powi(self.n as i32)
    }

    /// Signed lattice index (`-cells..=cells` per axis) of flat index `i`.
    pub fn index_of(&self, mut flat: usize) -> [i64; 3] {
        let s = self.side();
        let mut idx = [0i64; 3];
        for a in (0..self.n).rev() {
            idx[a] = (flat % s) as i64 - self.cells as i64;
            flat /= s;
        }
        idx
    }

    pub fn flat_of(&self, idx: &[i64]) -> Option<usize> {
        let s = self.side() as i64;
        let c = self.cells as i64;
        let mut flat = 0i64;
        for &k in idx.iter().take(self.n) {
            if k < -c || k > c {
                return None;
            }
            flat = flat * s + (k + c);
        }
        Some(flat as usize)
    }

    pub fn point_of(&self, flat: usize) -> [f64; 3] {
        let idx = self.index_of(flat);
        let mut p = [0.0; 3];
        for a in 0..self.n {
            p[a] = idx[a] as f64 * self.h;
        }
        p
    }

    /// Lattice index nearest to `p`, or `None` when `p` is not on the lattice.
    pub fn lattice_index(&self, p: &[f64]) -> Option<[i64; 3]> {
        let mut idx = [0i64; 3];
        for a in 0..self.n {
            let r = p[a] / self.h;
            let k = r.round();
            if (r - k).abs() > 1e-9 {
                return None;
            }
            idx[a] = k as i64;
        }
        Some(idx)
    }

    pub fn contains_index(&self, idx: &[i64]) -> bool {
        let c = self.cells as i64;
        idx.iter().take(self.n).all(|&k| (-c..=c).contains(&k))
    }

    /// Flat indices of the lattice points selected by `region`.
    pub fn select(&self, region: &Region) -> Vec<usize> {
        (0..self.len()).filter(|&i| region.contains(&self.point_of(i)[..self.n])).collect()
    }
}

/// Value model for points outside the computational box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Exterior {
    Constant(f64),
    /// Radial profile: piecewise linear in `|x|` through `(radii, values)`,
    /// held constant at both ends.
    Table { radii: Vec<f64>, values: Vec<f64> },
}

impl Default for Exterior {
    fn default() -> Self {
        Exterior::Constant(0.0)
    }
}

impl Exterior {
    pub fn value_at(&self, p: &[f64]) -> f64 {
        match self {
            Exterior::Constant(c) => *c,
            Exterior::Table { radii, values } => {
                let r = p.iter().map(|x| x * x).sum::<f64>().sqrt();
                if r <= radii[0] {
                    return values[0];
                }
                for k in 1..radii.len() {
                    if r <= radii[k] {
                        let t = (r - radii[k - 1]) / (radii[k] - radii[k - 1]);
                        return values[k - 1] + t * (values[k] - values[k - 1]);
                    }
                }
                *values.last().expect("non-empty table")
            }
        }
    }

    /// Value taken beyond every finite radius.
    pub fn far_value(&self) -> f64 {
        match self {
            Exterior::Constant(c) => *c,
            Exterior::Table { values, .. } => *values.last().expect("non-empty table"),
        }
    }

    /// Radius beyond which the model equals `far_value`.
    pub fn settled_radius(&self) -> f64 {
        match self {
            Exterior::Constant(_) => 0.0,
            Exterior::Table { radii, .. } => *radii.last().expect("non-empty table"),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            Exterior::Constant(c) if c.is_finite() => Ok(()),
            Exterior::Constant(c) => Err(Error::InvalidArgument(format!("exterior value {c}"))),
            Exterior::Table { radii, values } => {
                if radii.is_empty() || radii.len() != values.len() {
                    return Err(Error::InvalidArgument("exterior table shape".into()));
                }
                if radii.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(Error::InvalidArgument("exterior radii must increase".into()));
                }
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidArgument("exterior values must be finite".into()));
                }
                Ok(())
            }
        }
    }

    fn encode(&self) -> String {
        match self {
            Exterior::Constant(c) => format!("const:{c}"),
            Exterior::Table { radii, values } => {
                let body: Vec<String> =
                    radii.iter().zip(values).map(|(r, v)| format!("{r}:{v}")).collect();
                format!("table:{}", body.join(";"))
            }
        }
    }

    fn decode(s: &str) -> Result<Self> {
        let bad = || Error::Format(format!("bad exterior spec {s:?}"));
        if let Some(v) = s.strip_prefix("const:") {
            return Ok(Exterior::Constant(v.parse().map_err(|_| bad())?));
        }
        if let Some(body) = s.strip_prefix("table:") {
            let mut radii = Vec::new();
            let mut values = Vec::new();
            for pair in body.split(';') {
                let (r, v) = pair.split_once(':').ok_or_else(bad)?;
                radii.push(r.parse().map_err(|_| bad())?);
                values.push(v.parse().map_err(|_| bad())?);
            }
            let e = Exterior::Table { radii, values };
            e.validate()?;
            return Ok(e);
        }
        Err(bad())
    }
}

/// Lattice point selector. Balls and cubes are open, as in `B_r` and `Q_r`
/// (`Q_r` has side length `r`).
#[derive(Debug, Clone, PartialEq)]
pub enum Region {
    All,
    Ball { center: [f64; 3], radius: f64 },
    Cube { center: [f64; 3], side: f64 },
    /// Membership by flat index, aligned with a specific domain.
    Mask(Vec<bool>),
    And(Box<Region>, Box<Region>),
    Not(Box<Region>),
}

impl Region {
    pub fn ball(radius: f64) -> Self {
        Region::Ball { center: [0.0; 3], radius }
    }
    pub fn ball_at(center: &[f64], radius: f64) -> Self {
        let mut c = [0.0; 3];
        c[..center.len()].copy_from_slice(center);
        Region::Ball { center: c, radius }
    }
    pub fn cube(side: f64) -> Self {
        Region::Cube { center: [0.0; 3], side }
    }
    pub fn cube_at(center: &[f64], side: f64) -> Self {
        let mut c = [0.0; 3];
        c[..center.len()].copy_from_slice(center);
        Region::Cube { center: c, side }
    }
    pub fn and(self, other: Region) -> Self {
        Region::And(Box::new(self), Box::new(other))
    }
    pub fn not(self) -> Self {
        Region::Not(Box::new(self))
    }

    /// Membership for geometric variants; masks need `contains_at`.
    pub fn contains(&self, p: &[f64]) -> bool {
        match self {
            Region::All => true,
            Region::Ball { center, radius } => {
                let d2: f64 = p.iter().zip(center).map(|(x, c)| (x - c) * (x - c)).sum();
                d2 < radius * radius
            }
            Region::Cube { center, side } => {
                p.iter().zip(center).all(|(x, c)| (x - c).abs() < side / 2.0)
            }
            Region::Mask(_) => panic!("mask regions need a flat index"),
            Region::And(a, b) => a.contains(p) && b.contains(p),
            Region::Not(a) => !a.contains(p),
        }
    }

    pub fn contains_at(&self, p: &[f64], flat: usize) -> bool {
        match self {
            Region::Mask(m) => m[flat],
            Region::And(a, b) => a.contains_at(p, flat) && b.contains_at(p, flat),
            Region::Not(a) => !a.contains_at(p, flat),
            other => other.contains(p),
        }
    }
}

/// Real function sampled on a domain, with its exterior model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridFunction {
    domain: Domain,
    values: Vec<f64>,
    exterior: Exterior,
}

impl GridFunction {
    pub fn new(domain: Domain, values: Vec<f64>, exterior: Exterior) -> Result<Self> {
        if values.len() != domain.len() {
            return Err(Error::InvalidArgument(format!(
                "expected {} values, got {}",
                domain.len(),
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("non-finite grid value {v}")));
        }
        exterior.validate()?;
        Ok(GridFunction { domain, values, exterior })
    }

    pub fn zeros(domain: &Domain) -> Self {
        GridFunction {
            domain: domain.clone(),
            values: vec![0.0; domain.len()],
            exterior: Exterior::Constant(0.0),
        }
    }

    /// Samples `f` at every lattice point; the exterior is the constant `exterior`.
    pub fn from_fn(domain: &Domain, exterior: f64, f: impl Fn(&[f64]) -> f64) -> Self {
        let n = domain.n();
        let values = (0..domain.len()).map(|i| f(&domain.point_of(i)[..n])).collect();
        GridFunction { domain: domain.clone(), values, exterior: Exterior::Constant(exterior) }
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }
    pub fn exterior(&self) -> &Exterior {
        &self.exterior
    }
    pub fn with_exterior(mut self, exterior: Exterior) -> Result<Self> {
        exterior.validate()?;
        self.exterior = exterior;
        Ok(self)
    }

    /// Value at a signed lattice index; exterior model outside the box.
    pub fn at_index(&self, idx: &[i64]) -> f64 {
        match self.domain.flat_of(idx) {
            Some(f) => self.values[f],
            None => {
                let mut p = [0.0; 3];
                for a in 0..self.domain.n() {
                    p[a] = idx[a] as f64 * self.domain.h();
                }
                self.exterior.value_at(&p[..self.domain.n()])
            }
        }
    }

    /// Multilinear interpolation at an arbitrary point; points whose
    /// surrounding cell leaves the box use the exterior model.
    pub fn sample(&self, p: &[f64]) -> f64 {
        let n = self.domain.n();
        let h = self.domain.h();
        let e = self.domain.half_extent();
        if p.iter().take(n).any(|x| x.abs() > e) {
            return self.exterior.value_at(&p[..n]);
        }
        let mut base = [0i64; 3];
        let mut frac = [0.0; 3];
        for a in 0..n {
            let r = p[a] / h;
            let f = r.floor();
            base[a] = f as i64;
            frac[a] = r - f;
            if frac[a] < 1e-12 {
                frac[a] = 0.0;
            }
        }
        let mut acc = 0.0;
        for corner in 0..(1usize << n) {
            let mut w = 1.0;
            let mut idx = [0i64; 3];
            for a in 0..n {
                let bit = (corner >> a) & 1;
                idx[a] = base[a] + bit as i64;
                w *= if bit == 1 { frac[a] } else { 1.0 - frac[a] };
            }
            if w != 0.0 {
                acc += w * self.at_index(&idx[..n]);
            }
        }
        acc
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        GridFunction {
            domain: self.domain.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
            exterior: match &self.exterior {
                Exterior::Constant(c) => Exterior::Constant(f(*c)),
                Exterior::Table { radii, values } => Exterior::Table {
                    radii: radii.clone(),
                    values: values.iter().map(|&v| f(v)).collect(),
                },
            },
        }
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    fn selected<'a>(&'a self, region: &'a Region) -> impl Iterator<Item = (usize, f64)> + 'a {
        let n = self.domain.n();
        self.values.iter().enumerate().filter_map(move |(i, &v)| {
            region.contains_at(&self.domain.point_of(i)[..n], i).then_some((i, v))
        })
    }

    /// Discrete `L^n` norm over the region (exponent equal to the dimension).
    pub fn ln_norm(&self, region: &Region) -> f64 {
        let n = self.domain.n() as i32;
        let s: f64 = self.selected(region).map(|(_, v)| v.abs().powi(n)).sum();
        (s * self.domain.cell_volume()).powf(1.0 / n as f64)
    }

    /// Discrete `L^p` norm, any `p >= 1`.
    pub fn lp_norm(&self, region: &Region, p: f64) -> f64 {
        let s: f64 = self.selected(region).map(|(_, v)| v.abs().powf(p)).sum();
        (s * self.domain.cell_volume()).powf(1.0 / p)
    }

    /// Max of `|f|` over the region, 0 when empty.
    pub fn linf_norm(&self, region: &Region) -> f64 {
        self.selected(region).fold(0.0f64, |m, (_, v)| m.max(v.abs()))
    }

    pub fn region_inf(&self, region: &Region) -> Result<f64> {
        self.region_argmin(region).map(|(_, v)| v)
    }

    /// Flat index and value of the minimum over the region (first on ties).
    pub fn region_argmin(&self, region: &Region) -> Result<(usize, f64)> {
        self.selected(region)
            .fold(None, |best: Option<(usize, f64)>, (i, v)| match best {
                Some((_, b)) if b <= v => best,
                _ => Some((i, v)),
            })
            .ok_or(Error::EmptyRegion)
    }

    /// `h^n #{x in region : f(x) > threshold}`.
    pub fn superlevel_measure(&self, threshold: f64, region: &Region) -> f64 {
        self.selected(region).filter(|(_, v)| *v > threshold).count() as f64
            * self.domain.cell_volume()
    }

    /// `h^n #{x in region : f(x) <= threshold}`.
    pub fn sublevel_measure(&self, threshold: f64, region: &Region) -> f64 {
        self.selected(region).filter(|(_, v)| *v <= threshold).count() as f64
            * self.domain.cell_volume()
    }

    /// Mask of lattice points where `pred(value)` holds.
    pub fn mask_where(&self, pred: impl Fn(f64) -> bool) -> Region {
        Region::Mask(self.values.iter().map(|&v| pred(v)).collect())
    }

    fn header(&self) -> String {
        format!(
            "{},{},{},{}",
            self.domain.n(),
            self.domain.h(),
            self.domain.half_extent(),
            self.exterior.encode()
        )
    }

    fn parse_header(line: &str) -> Result<(Domain, Exterior)> {
        let mut parts = line.trim_end().splitn(4, ',');
        let mut next = |what: &str| {
            parts.next().ok_or_else(|| Error::Format(format!("header missing {what}")))
        };
        let n: usize = next("n")?.parse().map_err(|_| Error::Format("bad n".into()))?;
        let h: f64 = next("h")?.parse().map_err(|_| Error::Format("bad h".into()))?;
        let e: f64 = next("E")?.parse().map_err(|_| Error::Format("bad E".into()))?;
        let ext = Exterior::decode(next("exterior")?)?;
        Ok((Domain::new(n, h, e)?, ext))
    }

    /// CSV layout: header `n,h,E,exterior`, then one line per row of the
    /// last axis in row-major order.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{}", self.header())?;
        let side = self.domain.side();
        for row in self.values.chunks(side) {
            let line: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
            writeln!(w, "{}", line.join(","))?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines.next().ok_or_else(|| Error::Format("empty input".into()))??;
        let (domain, exterior) = Self::parse_header(&header)?;
        let mut values = Vec::with_capacity(domain.len());
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            for tok in line.split(',') {
                values.push(
                    tok.trim().parse::<f64>().map_err(|_| Error::Format(format!("bad value {tok}")))?,
                );
            }
        }
        GridFunction::new(domain, values, exterior)
    }

    /// Binary layout: the CSV header line (newline terminated) followed by
    /// little-endian `f64` values in row-major order.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{}", self.header())?;
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(r: R) -> Result<Self> {
        let mut r = std::io::BufReader::new(r);
        let mut header = String::new();
        r.read_line(&mut header)?;
        let (domain, exterior) = Self::parse_header(&header)?;
        let mut values = Vec::with_capacity(domain.len());
        let mut buf = [0u8; 8];
        for _ in 0..domain.len() {
            r.read_exact(&mut buf)?;
            values.push(f64::from_le_bytes(buf));
        }
        GridFunction::new(domain, values, exterior)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn dom(h: f64) -> Domain {
        Domain::with_default_extent(2, h).unwrap()
    }

    #[test]
    fn domain_validation() {
        assert!(Domain::new(1, 0.5, 8.0).is_err());
        assert!(Domain::new(2, 0.3, 8.0).is_err());
        assert!(Domain::new(2, 0.5, 5.0).is_err());
        assert!(Domain::new(2, -0.5, 8.0).is_err());
        let d = Domain::new(3, 0.5, 7.0).unwrap();
        assert_eq!(d.side(), 29);
    }

    #[test]
    fn index_roundtrip() {
        let d = dom(0.5);
        for i in [0, 17, 500, d.len() - 1] {
            let idx = d.index_of(i);
            assert_eq!(d.flat_of(&idx[..2]), Some(i));
        }
        assert_eq!(d.flat_of(&[17, 0]), None);
    }

    #[test]
    fn ln_norm_unit_cube() {
        let d = dom(1.0 / 32.0);
        let f = GridFunction::from_fn(&d, 0.0, |_| 1.0);
        let v = f.ln_norm(&Region::cube(1.0));
        // 31 x 31 interior lattice points of the open cube
        assert!((v - 1.0).abs() < 2.0 / 32.0, "{v}");
        let z = GridFunction::zeros(&d);
        assert_eq!(z.ln_norm(&Region::cube(1.0)), 0.0);
        assert_eq!(f.ln_norm(&Region::ball(1e-3).and(Region::ball(1e-3).not())), 0.0);
    }

    #[test]
    fn ln_norm_single_spike() {
        let h = 1.0 / 16.0;
        let d = dom(h);
        let big = 250.0;
        let f = GridFunction::from_fn(&d, 0.0, |p| if p[0] == 0.0 && p[1] == 0.0 { big } else { 0.0 });
        assert_relative_eq!(f.ln_norm(&Region::All), big * h, max_relative = 1e-14);
    }

    #[test]
    fn region_inf_examples() {
        let d = dom(0.5);
        let f = GridFunction::from_fn(&d, 0.0, |p| p[0] * p[0] + p[1] * p[1]);
        assert_eq!(f.region_inf(&Region::ball(1.0)).unwrap(), 0.0);
        let g = GridFunction::from_fn(&d, 0.0, |_| -3.0);
        assert_eq!(g.region_inf(&Region::cube(1.0)).unwrap(), -3.0);
        // open ball: (-1, 0) is excluded, the nearest lattice value is -0.5
        let lin = GridFunction::from_fn(&d, 0.0, |p| p[0]);
        assert_eq!(lin.region_inf(&Region::ball(1.0)).unwrap(), -0.5);
        let empty = Region::ball(0.1).and(Region::ball(0.1).not());
        assert!(matches!(lin.region_inf(&empty), Err(Error::EmptyRegion)));
    }

    #[test]
    fn level_measures() {
        let d = dom(1.0 / 32.0);
        let q1 = Region::cube(1.0);
        let z = GridFunction::zeros(&d);
        assert_eq!(z.superlevel_measure(0.3, &q1), 0.0);
        let five = GridFunction::from_fn(&d, 0.0, |_| 5.0);
        assert!((five.superlevel_measure(1.0, &q1) - 1.0).abs() < 0.07);
        let sup = GridFunction::from_fn(&d, 0.0, |p| p[0].abs().max(p[1].abs()));
        let m = sup.superlevel_measure(0.25, &q1);
        assert_eq!(m, 672.0 / 1024.0);
    }

    #[test]
    fn sample_interpolates_and_uses_exterior() {
        let d = dom(0.5);
        let f = GridFunction::from_fn(&d, 7.0, |p| 2.0 * p[0] - p[1]);
        assert_relative_eq!(f.sample(&[0.3, 0.1]), 0.5, epsilon = 1e-12);
        assert_eq!(f.sample(&[9.0, 0.0]), 7.0);
        assert_eq!(f.at_index(&[100, 0]), 7.0);
    }

    #[test]
    fn table_exterior() {
        let e = Exterior::Table { radii: vec![8.0, 10.0], values: vec![1.0, 0.0] };
        assert_eq!(e.value_at(&[9.0, 0.0]), 0.5);
        assert_eq!(e.value_at(&[20.0, 0.0]), 0.0);
        assert_eq!(e.far_value(), 0.0);
        assert_eq!(Exterior::decode(&e.encode()).unwrap(), e);
    }

    #[test]
    fn csv_and_binary_roundtrip_bit_exact() {
        let d = dom(0.5);
        let f = GridFunction::from_fn(&d, 0.1, |p| (p[0] * 1.7).sin() / 3.0 + p[1] * 1e-17)
            .with_exterior(Exterior::Table { radii: vec![8.0, 9.5], values: vec![0.1, -1.0 / 3.0] })
            .unwrap();
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        let g = GridFunction::read_csv(&buf[..]).unwrap();
        assert_eq!(f, g);
        let mut bin = Vec::new();
        f.write_binary(&mut bin).unwrap();
        let g = GridFunction::read_binary(&bin[..]).unwrap();
        assert!(f.values().iter().zip(g.values()).all(|(a, b)| a.to_bits() == b.to_bits()));
        assert_eq!(f.exterior(), g.exterior());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn level_measures_partition(t in -2.0f64..2.0, a in 0.1f64..3.0) {
            let d = dom(0.25);
            let f = GridFunction::from_fn(&d, 0.0, |p| a * (p[0] * 0.7).sin() + p[1] * 0.3);
            let r = Region::ball(2.0);
            let total = d.select(&r).len() as f64 * d.cell_volume();
            prop_assert_eq!(f.superlevel_measure(t, &r) + f.sublevel_measure(t, &r), total);
        }

        #[test]
        fn ln_norm_homogeneous_and_monotone(c in -5.0f64..5.0, a in 0.0f64..1.0) {
            let d = dom(0.25);
            let f = GridFunction::from_fn(&d, 0.0, |p| (p[0] - p[1]).cos());
            let r = Region::cube(3.0);
            let scaled = f.map(|v| c * v);
            prop_assert!((scaled.ln_norm(&r) - c.abs() * f.ln_norm(&r)).abs() < 1e-10);
            let smaller = f.map(|v| a * v);
            prop_assert!(smaller.ln_norm(&r) <= f.ln_norm(&r) + 1e-12);
        }

        #[test]
        fn region_inf_shift(c in -10.0f64..10.0) {
            let d = dom(0.25);
            let f = GridFunction::from_fn(&d, 0.0, |p| p[0] * p[1] - p[0]);
            let r = Region::ball(1.5);
            let shifted = f.map(|v| v + c);
            let lhs = shifted.region_inf(&r).unwrap();
            let rhs = f.region_inf(&r).unwrap() + c;
            prop_assert!((lhs - rhs).abs() < 1e-12);
        }
    }
}
