//! Synthetic Zipf streams and plain-text stream files.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use optlcms::Stream;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Zipf};

use crate::error::{BenchError, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Source {
    Synthetic,
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct StreamSpec {
    pub source: Source,
    pub zipf_exponent: f64,
    pub support_size: u64,
    pub stream_length: u64,
    pub seed: u64,
}

impl Default for StreamSpec {
    fn default() -> Self {
        StreamSpec {
            source: Source::Synthetic,
            zipf_exponent: 1.0,
            support_size: 100_000,
            stream_length: 1_000_000,
            seed: 0,
        }
    }
}

impl StreamSpec {
    pub fn with_seed(&self, seed: u64) -> Self {
        StreamSpec {
            seed,
            ..self.clone()
        }
    }

    /// Generates or reads the stream this spec describes.
    pub fn load(&self) -> Result<Stream> {
        match &self.source {
            Source::Synthetic => gen_zipf(self),
            Source::File(path) => read_stream(path),
        }
    }
}

/// `N` draws from Zipf(support, exponent); each token is its rank in
/// decimal, rank 1 being the most frequent.
pub fn gen_zipf(spec: &StreamSpec) -> Result<Stream> {
    if !(spec.zipf_exponent > 0.0) {
        return Err(BenchError::Usage(format!(
            "zipf exponent {} must be positive",
            spec.zipf_exponent
        )));
    }
    if spec.support_size == 0 {
        return Err(BenchError::Usage("support size must be positive".into()));
    }
    let zipf = Zipf::new(spec.support_size as f64, spec.zipf_exponent)
        .map_err(|e| BenchError::Usage(format!("zipf parameters: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut stream = Stream::new();
    let mut label = String::with_capacity(20);
    for _ in 0..spec.stream_length {
        let rank = zipf.sample(&mut rng) as u64;
        stream.push(format_rank(&mut label, rank));
    }
    Ok(stream)
}

fn format_rank(buf: &mut String, rank: u64) -> &[u8] {
    use std::fmt::Write as _;
    buf.clear();
    let _ = write!(buf, "{rank}");
    buf.as_bytes()
}

/// Probability of each rank under Zipf(support, exponent).
pub fn zipf_pmf(support: u64, exponent: f64) -> Vec<f64> {
    let weights: Vec<f64> = (1..=support).map(|k| (k as f64).powf(-exponent)).collect();
    let norm: f64 = weights.iter().sum();
    weights.into_iter().map(|w| w / norm).collect()
}

/// One token per line.
pub fn write_stream<W: Write>(stream: &Stream, out: W) -> std::io::Result<()> {
    let mut out = BufWriter::new(out);
    for token in stream.iter() {
        out.write_all(token)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn write_stream_file(stream: &Stream, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| BenchError::io(path, e))?;
    write_stream(stream, file).map_err(|e| BenchError::io(path, e))
}

/// Reads UTF-8 text with one token per line, or `token<TAB>count` lines,
/// which expand to `count` consecutive occurrences. Blank lines are skipped.
pub fn parse_stream<R: BufRead>(input: R) -> Result<Stream> {
    let mut stream = Stream::new();
    for (n, line) in input.lines().enumerate() {
        let line = line.map_err(|e| BenchError::Io {
            path: "<input>".into(),
            source: e,
        })?;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        if line.is_empty() {
            continue;
        }
        match line.split_once('\t') {
            Some((token, count)) => {
                let count: u64 = count.trim().parse().map_err(|_| {
                    BenchError::Parse(format!("line {}: bad count {count:?}", n + 1))
                })?;
                stream.push_n(token.as_bytes(), count);
            }
            None => stream.push(line.as_bytes()),
        }
    }
    Ok(stream)
}

pub fn read_stream(path: &Path) -> Result<Stream> {
    let file = File::open(path).map_err(|e| BenchError::io(path, e))?;
    parse_stream(BufReader::new(file)).map_err(|e| match e {
        BenchError::Io { source, .. } => BenchError::io(path, source),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harmonic_normalisation() {
        let p = zipf_pmf(3, 1.0);
        for (got, want) in p.iter().zip([6.0 / 11.0, 3.0 / 11.0, 2.0 / 11.0]) {
            assert!((got - want).abs() < 1e-15);
        }
    }

    #[test]
    fn same_seed_same_stream() {
        let spec = StreamSpec {
            support_size: 50,
            stream_length: 2_000,
            seed: 9,
            ..StreamSpec::default()
        };
        let mut a = Vec::new();
        let mut b = Vec::new();
        write_stream(&gen_zipf(&spec).unwrap(), &mut a).unwrap();
        write_stream(&gen_zipf(&spec).unwrap(), &mut b).unwrap();
        assert_eq!(a, b);
        let mut c = Vec::new();
        write_stream(&gen_zipf(&spec.with_seed(10)).unwrap(), &mut c).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn tokens_are_ranks_within_support() {
        let spec = StreamSpec {
            support_size: 7,
            stream_length: 500,
            ..StreamSpec::default()
        };
        let s = gen_zipf(&spec).unwrap();
        for t in s.iter() {
            let r: u64 = std::str::from_utf8(t).unwrap().parse().unwrap();
            assert!((1..=7).contains(&r));
        }
    }

    #[test]
    fn rejects_non_positive_exponent() {
        let spec = StreamSpec {
            zipf_exponent: 0.0,
            ..StreamSpec::default()
        };
        assert!(gen_zipf(&spec).is_err());
    }

    #[test]
    fn parses_both_line_forms() {
        let s = parse_stream("a\nb\n\na\nc\t3\r\n".as_bytes()).unwrap();
        assert_eq!(s.len(), 6);
        let counts: std::collections::HashMap<_, _> = s.unique_counts().into_iter().collect();
        assert_eq!(counts[&b"a"[..]], 2);
        assert_eq!(counts[&b"c"[..]], 3);
        assert!(parse_stream("x\tmany\n".as_bytes()).is_err());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.txt");
        let s = Stream::from_tokens(["x", "y", "x"]);
        write_stream_file(&s, &path).unwrap();
        let back = read_stream(&path).unwrap();
        assert_eq!(
            back.iter().collect::<Vec<_>>(),
            s.iter().collect::<Vec<_>>()
        );
        assert!(matches!(
            read_stream(&dir.path().join("missing")),
            Err(BenchError::Io { .. })
        ));
    }
}
