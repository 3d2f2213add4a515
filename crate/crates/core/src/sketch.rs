//! Classical Count-Min Sketch with byte-exact memory accounting.

use std::f64::consts::E;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::hash::HashFamily;

pub const DEFAULT_COUNTER_BYTES: usize = 4;

/// `ceil` that forgives floating-point noise around exact integers, so that
/// e.g. `e / (e / 100)` yields 100 rather than 101.
pub(crate) fn ceil_tolerant(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() <= 1e-9 * x.abs().max(1.0) {
        r
    } else {
        x.ceil()
    }
}

/// Parameters of a single Count-Min Sketch: `(epsilon, delta)` and the
/// table shape they imply.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CmsParams {
    pub epsilon: f64,
    pub delta: f64,
    pub width: usize,
    pub depth: usize,
    pub counter_bytes: usize,
}

impl CmsParams {
    /// Width `ceil(e / epsilon)`, depth `ceil(ln(1 / delta))`.
    pub fn derive(epsilon: f64, delta: f64, counter_bytes: usize) -> Result<Self> {
        if !(epsilon > 0.0) || !epsilon.is_finite() {
            return Err(Error::invalid(
                "epsilon",
                format!("{epsilon} must be positive"),
            ));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::invalid(
                "delta",
                format!("{delta} must lie in (0, 1); delta >= 1 yields a table of depth 0"),
            ));
        }
        check_counter_bytes(counter_bytes)?;
        let width = ceil_tolerant(E / epsilon);
        let depth = ceil_tolerant((1.0 / delta).ln());
        if width > usize::MAX as f64 / 2.0 {
            return Err(Error::invalid(
                "epsilon",
                format!("{epsilon} gives an unrepresentable width"),
            ));
        }
        Ok(CmsParams {
            epsilon,
            delta,
            width: width as usize,
            depth: (depth as usize).max(1),
            counter_bytes,
        })
    }

    /// Parameters of a table with a fixed shape; `(epsilon, delta)` are the
    /// tightest values that shape guarantees.
    pub fn from_dims(width: usize, depth: usize, counter_bytes: usize) -> Result<Self> {
        if width == 0 {
            return Err(Error::invalid("width", "must be at least 1"));
        }
        if depth == 0 {
            return Err(Error::invalid("depth", "must be at least 1"));
        }
        check_counter_bytes(counter_bytes)?;
        Ok(CmsParams {
            epsilon: E / width as f64,
            delta: (-(depth as f64)).exp(),
            width,
            depth,
            counter_bytes,
        })
    }

    pub fn memory_bytes(&self) -> usize {
        self.width * self.depth * self.counter_bytes
    }

    /// Largest value a counter can hold before saturating.
    pub fn counter_max(&self) -> u64 {
        counter_max(self.counter_bytes)
    }
}

pub(crate) fn check_counter_bytes(counter_bytes: usize) -> Result<()> {
    if !(1..=8).contains(&counter_bytes) {
        return Err(Error::invalid(
            "counter_bytes",
            format!("{counter_bytes} must be between 1 and 8"),
        ));
    }
    Ok(())
}

pub(crate) fn counter_max(counter_bytes: usize) -> u64 {
    if counter_bytes >= 8 {
        u64::MAX
    } else {
        (1u64 << (8 * counter_bytes)) - 1
    }
}

/// A `depth x width` counter array with one hash function per row.
#[derive(Debug, Clone, PartialEq)]
pub struct SketchTable {
    params: CmsParams,
    hashes: HashFamily,
    counters: Vec<u64>,
    total_count: u64,
}

impl SketchTable {
    /// Allocates a zeroed table whose hash family is drawn from `seed`.
    pub fn new(params: CmsParams, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let hashes = HashFamily::random(&mut rng, params.depth);
        Self::with_hashes(params, hashes)
    }

    pub fn with_hashes(params: CmsParams, hashes: HashFamily) -> Self {
        assert_eq!(hashes.rows.len(), params.depth, "one hash per row");
        SketchTable {
            counters: vec![0; params.width * params.depth],
            params,
            hashes,
            total_count: 0,
        }
    }

    pub(crate) fn from_parts(
        params: CmsParams,
        hashes: HashFamily,
        counters: Vec<u64>,
        total_count: u64,
    ) -> Result<Self> {
        if hashes.rows.len() != params.depth || counters.len() != params.width * params.depth {
            return Err(Error::Format("sketch table shape mismatch".into()));
        }
        Ok(SketchTable {
            params,
            hashes,
            counters,
            total_count,
        })
    }

    pub fn params(&self) -> &CmsParams {
        &self.params
    }

    pub fn hashes(&self) -> &HashFamily {
        &self.hashes
    }

    pub fn width(&self) -> usize {
        self.params.width
    }

    pub fn depth(&self) -> usize {
        self.params.depth
    }

    pub fn total_count(&self) -> u64 {
        self.total_count
    }

    pub fn memory_bytes(&self) -> usize {
        self.params.memory_bytes()
    }

    /// Row-major counters, `depth * width` long.
    pub fn counters(&self) -> &[u64] {
        &self.counters
    }

    pub fn row(&self, r: usize) -> &[u64] {
        let w = self.params.width;
        &self.counters[r * w..(r + 1) * w]
    }

    pub fn update(&mut self, key: &[u8], count: u64) {
        let fp = self.hashes.fingerprint(key);
        let width = self.params.width;
        let cap = self.params.counter_max();
        for (r, h) in self.hashes.rows.iter().enumerate() {
            let cell = &mut self.counters[r * width + h.bucket(fp, width)];
            *cell = cell.saturating_add(count).min(cap);
        }
        self.total_count = self.total_count.saturating_add(count);
    }

    pub fn estimate(&self, key: &[u8]) -> u64 {
        let fp = self.hashes.fingerprint(key);
        let width = self.params.width;
        self.hashes
            .rows
            .iter()
            .enumerate()
            .map(|(r, h)| self.counters[r * width + h.bucket(fp, width)])
            .min()
            .unwrap_or(0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    #[test]
    fn derive_dims_exact_formula() {
        let p = CmsParams::derive(E / 100.0, (-5.0f64).exp(), 4).unwrap();
        assert_eq!((p.width, p.depth), (100, 5));
        assert_eq!(p.memory_bytes(), 2000);
    }

    #[test]
    fn derive_dims_ceilings() {
        let p = CmsParams::derive(0.01, 0.5, 4).unwrap();
        assert_eq!((p.width, p.depth), (272, 1));
    }

    #[test]
    fn derive_dims_rejects_degenerate() {
        assert!(CmsParams::derive(0.01, 1.0, 4).is_err());
        assert!(CmsParams::derive(0.0, 0.5, 4).is_err());
        assert!(CmsParams::derive(-1.0, 0.5, 4).is_err());
        assert!(CmsParams::derive(0.01, 0.0, 4).is_err());
        assert!(CmsParams::derive(0.01, 0.5, 0).is_err());
        assert!(CmsParams::derive(0.01, 0.5, 9).is_err());
    }

    #[test]
    fn fresh_table_estimates_zero() {
        let t = SketchTable::new(CmsParams::derive(0.01, 0.01, 4).unwrap(), 1);
        assert_eq!(t.estimate(b"anything"), 0);
        assert_eq!(t.total_count(), 0);
    }

    #[test]
    fn single_insert_no_collision() {
        let mut t = SketchTable::new(CmsParams::derive(0.01, 0.01, 4).unwrap(), 1);
        t.update(b"a", 3);
        assert_eq!(t.estimate(b"a"), 3);
    }

    #[test]
    fn width_one_collides_everything() {
        let mut t = SketchTable::new(CmsParams::from_dims(1, 3, 4).unwrap(), 9);
        t.update(b"a", 1);
        t.update(b"b", 1);
        assert_eq!(t.estimate(b"a"), 2);
        assert_eq!(t.estimate(b"never"), 2);
    }

    #[test]
    fn counters_saturate_instead_of_wrapping() {
        let mut t = SketchTable::new(CmsParams::from_dims(4, 2, 1).unwrap(), 3);
        t.update(b"x", 200);
        t.update(b"x", 200);
        assert_eq!(t.estimate(b"x"), 255);
    }

    #[test]
    fn rows_conserve_mass_and_estimates_dominate() {
        let mut t = SketchTable::new(CmsParams::from_dims(37, 4, 4).unwrap(), 5);
        let mut truth: HashMap<String, u64> = HashMap::new();
        for i in 0..2_000u64 {
            let key = format!("k{}", (i * i) % 211);
            t.update(key.as_bytes(), 1 + i % 3);
            *truth.entry(key).or_default() += 1 + i % 3;
        }
        for r in 0..t.depth() {
            assert_eq!(t.row(r).iter().sum::<u64>(), t.total_count());
        }
        for (k, &f) in &truth {
            assert!(t.estimate(k.as_bytes()) >= f);
        }
    }

    #[test]
    fn same_seed_same_counters() {
        let p = CmsParams::from_dims(50, 3, 4).unwrap();
        let mut a = SketchTable::new(p, 42);
        let mut b = SketchTable::new(p, 42);
        for i in 0..500 {
            let k = format!("{}", i % 77);
            a.update(k.as_bytes(), 1);
            b.update(k.as_bytes(), 1);
        }
        assert_eq!(a, b);
    }
}
