//! Versioned flat binary encoding of a built [`OptLcms`].
//!
//! All integers are little-endian and fixed width; floats are IEEE-754
//! binary64 bit patterns. Layout, in order:
//!
//! ```text
//! header   magic "OLCM" | version u16 | reserved u16
//! plan     epsilon f64 | total_mass u64 | budget_bytes f64 | counter_bytes u32
//!          | ub_bytes u32 | ub_keys u64 | ub_mass u64 | ub_query_mass f64
//!          | kl f64 | search_objective f64
//!          | has_diagnostics u8 [lambda f64 | log_term f64 | iterations u32
//!                                | active_len u32 | active u32 * active_len]
//!          | group_count u32
//!          | group_count * (lower f64 | upper f64 | data_mass u64 | query_mass f64
//!                           | epsilon f64 | delta f64 | width u64 | depth u32)
//! tables   group_count * (total_count u64 | hash_base u64 | depth * (a u64 | b u64)
//!                         | width * depth counters, counter_bytes each)
//! bucket   total u64 | entries u64 | entries * (key_len u32 | key | count u64)
//! oracle   entries u64 | entries * (key_len u32 | key | score f64)
//! trailer  inserted_total u64
//! ```
//!
//! Group `g`'s threshold is its `upper` field; the last group's upper edge is
//! the unique-bucket boundary. With zero groups every key is counted
//! exactly.

use std::collections::HashMap;
use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::exact::UniqueBucket;
use crate::hash::{HashFamily, RowHash};
use crate::optimizer::{GroupPlan, PartitionPlan, SolverDiagnostics};
use crate::score::FrequencyRankScorer;
use crate::sketch::{check_counter_bytes, CmsParams, SketchTable};
use crate::structure::OptLcms;

pub const MAGIC: [u8; 4] = *b"OLCM";
pub const VERSION: u16 = 1;

impl AsRef<FrequencyRankScorer> for FrequencyRankScorer {
    fn as_ref(&self) -> &FrequencyRankScorer {
        self
    }
}

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }
    fn u16(&mut self, v: u16) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.u64(v.to_bits());
    }
    fn bytes(&mut self, key: &[u8]) {
        self.u32(u32::try_from(key.len()).expect("key longer than 4 GiB"));
        self.buf.extend_from_slice(key);
    }
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() < n {
            return Err(Error::Format(format!(
                "truncated: wanted {n} bytes, {} left",
                self.buf.len()
            )));
        }
        let (head, rest) = self.buf.split_at(n);
        self.buf = rest;
        Ok(head)
    }
    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().unwrap())
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.array::<1>()?[0])
    }
    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.array()?))
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array()?))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array()?))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_bits(self.u64()?))
    }
    fn len(&mut self, what: &str) -> Result<usize> {
        let n = self.u64()?;
        // every entry needs at least one byte, so a count beyond the
        // remaining input is corrupt
        if n > self.buf.len() as u64 {
            return Err(Error::Format(format!("{what} count {n} exceeds input")));
        }
        Ok(n as usize)
    }
    fn bytes(&mut self) -> Result<&'a [u8]> {
        let n = self.u32()? as usize;
        self.take(n)
    }
}

pub fn encode<O: AsRef<FrequencyRankScorer>>(s: &OptLcms<O>) -> Vec<u8> {
    let mut w = Writer { buf: Vec::new() };
    w.buf.extend_from_slice(&MAGIC);
    w.u16(VERSION);
    w.u16(0);

    let plan = s.plan();
    w.f64(plan.epsilon);
    w.u64(plan.total_mass);
    w.f64(plan.budget_bytes);
    w.u32(plan.counter_bytes as u32);
    w.u32(plan.ub_bytes as u32);
    w.u64(plan.ub_keys);
    w.u64(plan.ub_mass);
    w.f64(plan.ub_query_mass);
    w.f64(plan.kl);
    w.f64(plan.search_objective);
    match &plan.diagnostics {
        Some(d) => {
            w.u8(1);
            w.f64(d.lambda);
            w.f64(d.log_term);
            w.u32(d.iterations as u32);
            w.u32(d.active_set.len() as u32);
            for &g in &d.active_set {
                w.u32(g as u32);
            }
        }
        None => w.u8(0),
    }
    w.u32(plan.groups.len() as u32);
    for g in &plan.groups {
        w.f64(g.lower);
        w.f64(g.upper);
        w.u64(g.data_mass);
        w.f64(g.query_mass);
        w.f64(g.epsilon);
        w.f64(g.delta);
        w.u64(g.width as u64);
        w.u32(g.depth as u32);
    }

    let cb = plan.counter_bytes;
    for t in s.tables() {
        w.u64(t.total_count());
        w.u64(t.hashes().base);
        for h in &t.hashes().rows {
            w.u64(h.a);
            w.u64(h.b);
        }
        for &c in t.counters() {
            w.buf.extend_from_slice(&c.to_le_bytes()[..cb]);
        }
    }

    let ub = s.unique_bucket();
    w.u64(ub.total());
    let mut entries: Vec<(&[u8], u64)> = ub.iter().collect();
    entries.sort_unstable();
    w.u64(entries.len() as u64);
    for (k, c) in entries {
        w.bytes(k);
        w.u64(c);
    }

    let mut scores: Vec<(&[u8], f64)> = s.oracle().as_ref().iter().collect();
    scores.sort_unstable_by(|a, b| a.0.cmp(b.0));
    w.u64(scores.len() as u64);
    for (k, score) in scores {
        w.bytes(k);
        w.f64(score);
    }

    w.u64(s.total());
    w.buf
}

pub fn decode(bytes: &[u8]) -> Result<OptLcms<FrequencyRankScorer>> {
    let mut r = Reader { buf: bytes };
    if r.take(4)? != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let version = r.u16()?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let _reserved = r.u16()?;

    let epsilon = r.f64()?;
    let total_mass = r.u64()?;
    let budget_bytes = r.f64()?;
    let counter_bytes = r.u32()? as usize;
    check_counter_bytes(counter_bytes).map_err(|e| Error::Format(e.to_string()))?;
    let ub_bytes = r.u32()? as usize;
    let ub_keys = r.u64()?;
    let ub_mass = r.u64()?;
    let ub_query_mass = r.f64()?;
    let kl = r.f64()?;
    let search_objective = r.f64()?;
    let diagnostics = match r.u8()? {
        0 => None,
        1 => {
            let lambda = r.f64()?;
            let log_term = r.f64()?;
            let iterations = r.u32()? as usize;
            let n = r.u32()? as usize;
            let active_set = (0..n)
                .map(|_| Ok(r.u32()? as usize))
                .collect::<Result<Vec<_>>>()?;
            Some(SolverDiagnostics {
                lambda,
                active_set,
                log_term,
                iterations,
            })
        }
        other => return Err(Error::Format(format!("bad diagnostics flag {other}"))),
    };
    let group_count = r.u32()? as usize;
    let mut groups = Vec::with_capacity(group_count.min(1 << 16));
    for _ in 0..group_count {
        groups.push(GroupPlan {
            lower: r.f64()?,
            upper: r.f64()?,
            data_mass: r.u64()?,
            query_mass: r.f64()?,
            epsilon: r.f64()?,
            delta: r.f64()?,
            width: r.u64()? as usize,
            depth: r.u32()? as usize,
        });
    }
    let thresholds = if groups.is_empty() {
        vec![f64::NEG_INFINITY]
    } else {
        groups.iter().map(|g| g.upper).collect()
    };
    let plan = PartitionPlan {
        thresholds,
        groups,
        epsilon,
        total_mass,
        budget_bytes,
        counter_bytes,
        ub_bytes,
        ub_keys,
        ub_mass,
        ub_query_mass,
        kl,
        search_objective,
        diagnostics,
    };

    let mut tables = Vec::with_capacity(group_count);
    for g in &plan.groups {
        let params = CmsParams::from_dims(g.width, g.depth, counter_bytes)
            .map_err(|e| Error::Format(e.to_string()))?;
        let total = r.u64()?;
        let base = r.u64()?;
        let rows = (0..g.depth)
            .map(|_| {
                Ok(RowHash {
                    a: r.u64()?,
                    b: r.u64()?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let cells = g
            .width
            .checked_mul(g.depth)
            .filter(|&n| n.saturating_mul(counter_bytes) <= r.buf.len())
            .ok_or_else(|| Error::Format("counter array exceeds input".into()))?;
        let raw = r.take(cells * counter_bytes)?;
        let counters = raw
            .chunks_exact(counter_bytes)
            .map(|chunk| {
                let mut b = [0u8; 8];
                b[..counter_bytes].copy_from_slice(chunk);
                u64::from_le_bytes(b)
            })
            .collect();
        tables.push(SketchTable::from_parts(
            params,
            HashFamily { base, rows },
            counters,
            total,
        )?);
    }

    let mut ub = UniqueBucket::new(ub_bytes);
    let ub_total = r.u64()?;
    let entries = r.len("bucket entry")?;
    for _ in 0..entries {
        let k = r.bytes()?;
        let c = r.u64()?;
        ub.insert(k, c);
    }
    if ub.total() != ub_total {
        return Err(Error::Format(format!(
            "bucket total {} != recorded {ub_total}",
            ub.total()
        )));
    }

    let n = r.len("oracle entry")?;
    let mut scores = HashMap::with_capacity(n);
    for _ in 0..n {
        let k = r.bytes()?;
        scores.insert(Box::from(k), r.f64()?);
    }
    let inserted = r.u64()?;
    if !r.buf.is_empty() {
        return Err(Error::Format(format!("{} trailing bytes", r.buf.len())));
    }
    Ok(OptLcms::from_parts(
        FrequencyRankScorer::from_scores(scores),
        plan,
        tables,
        ub,
        inserted,
    ))
}

pub fn write_to<O: AsRef<FrequencyRankScorer>, W: Write>(
    s: &OptLcms<O>,
    mut out: W,
) -> std::io::Result<()> {
    out.write_all(&encode(s))
}

pub fn read_from<R: Read>(mut input: R) -> std::io::Result<Result<OptLcms<FrequencyRankScorer>>> {
    let mut buf = Vec::new();
    input.read_to_end(&mut buf)?;
    Ok(decode(&buf))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stream::Stream;
    use crate::structure::{BuildConfig, FrequencyEstimator};

    fn built() -> (Stream, OptLcms<FrequencyRankScorer>) {
        let mut s = Stream::new();
        for i in 1..=300u64 {
            s.push_n(format!("w{i}").as_bytes(), 3_000 / i);
        }
        let oracle = FrequencyRankScorer::train(s.prefix(s.len() / 4)).unwrap();
        let config = BuildConfig {
            counter_bytes: 3,
            ..BuildConfig::default()
        };
        let built = OptLcms::build(oracle, &s, 3_000, &config).unwrap();
        (s, built)
    }

    #[test]
    fn header_is_magic_then_version() {
        let (_, s) = built();
        let bytes = encode(&s);
        assert_eq!(&bytes[..4], b"OLCM");
        assert_eq!(u16::from_le_bytes([bytes[4], bytes[5]]), VERSION);
    }

    #[test]
    fn decoded_structure_answers_identically() {
        let (stream, s) = built();
        let back = decode(&encode(&s)).unwrap();
        assert_eq!(back.plan(), s.plan());
        assert_eq!(back.tables(), s.tables());
        assert_eq!(back.memory_bytes(), s.memory_bytes());
        for k in stream.iter().take(2_000) {
            assert_eq!(back.estimate(k), s.estimate(k));
        }
        assert_eq!(back.estimate(b"unseen"), s.estimate(b"unseen"));
        assert_eq!(encode(&back), encode(&s));
    }

    #[test]
    fn rejects_corruption() {
        let (_, s) = built();
        let bytes = encode(&s);
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode(&bad).is_err());
        let mut bad = bytes.clone();
        bad[4] = 99;
        assert!(decode(&bad).is_err());
        assert!(decode(&bytes[..bytes.len() - 1]).is_err());
        let mut long = bytes.clone();
        long.push(0);
        assert!(decode(&long).is_err());
    }
}
