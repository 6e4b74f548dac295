//! Binary trace files.
//!
//! Little-endian layout:
//!
//! ```text
//! magic       8 bytes   "DUCSTRC1" (minimal) or "DUCSTRC2" (extended)
//! N, C, T     3 × u32
//! seed        u64
//! fingerprint u64
//! confidence  N × T f32, row-major by sample
//! correctness ceil(N·T / 8) bytes, bit (i·T + t) at byte >> 3, LSB first
//! -- DUCSTRC2 only --
//! margins     N × T f32
//! final probs N × C f32
//! labels      N × u32
//! crc32       u32 over every preceding byte
//! ```

use super::{ExtendedChannels, TrainingTrace};
use std::path::Path;
use thiserror::Error;

pub const MAGIC_V1: &[u8; 8] = b"DUCSTRC1";
pub const MAGIC_V2: &[u8; 8] = b"DUCSTRC2";
const MAGIC_STEM: &[u8; 7] = b"DUCSTRC";
const HEADER_LEN: usize = 8 + 12 + 16;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("not a trace file (magic {found:?})")]
    BadMagic { found: Vec<u8> },
    #[error("unsupported trace version `{found}`")]
    Version { found: char },
    #[error("trace truncated: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("trace has {extra} unexpected trailing bytes")]
    TrailingBytes { extra: usize },
    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    Checksum { stored: u32, computed: u32 },
    #[error("invalid trace: {0}")]
    Invalid(String),
}

fn payload_len(n: usize, c: usize, t: usize, extended: bool) -> usize {
    let cells = n * t;
    let mut len = HEADER_LEN + cells * 4 + cells.div_ceil(8);
    if extended {
        len += cells * 4 + n * c * 4 + n * 4;
    }
    len
}

pub fn encode(trace: &TrainingTrace) -> Result<Vec<u8>, TraceError> {
    trace.validate().map_err(TraceError::Invalid)?;
    let (n, c, t) = (trace.sample_count, trace.class_count, trace.epoch_count);
    for (what, v) in [("N", n), ("C", c), ("T", t)] {
        if v > u32::MAX as usize {
            return Err(TraceError::Invalid(format!("{what}={v} exceeds u32")));
        }
    }
    let ext = trace.extended.as_ref();
    let mut out = Vec::with_capacity(payload_len(n, c, t, ext.is_some()) + 4);
    out.extend_from_slice(if ext.is_some() { MAGIC_V2 } else { MAGIC_V1 });
    for v in [n, c, t] {
        out.extend((v as u32).to_le_bytes());
    }
    out.extend(trace.seed.to_le_bytes());
    out.extend(trace.dataset_fingerprint.to_le_bytes());
    for &s in &trace.confidence {
        out.extend((s as f32).to_le_bytes());
    }
    let mut packed = vec![0u8; trace.correctness.len().div_ceil(8)];
    for (k, &d) in trace.correctness.iter().enumerate() {
        if d {
            packed[k >> 3] |= 1 << (k & 7);
        }
    }
    out.extend(packed);
    if let Some(ext) = ext {
        for &m in ext.margins.iter().chain(&ext.final_probs) {
            out.extend((m as f32).to_le_bytes());
        }
        for &l in &ext.labels {
            out.extend(l.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend(crc.to_le_bytes());
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take(&mut self, n: usize) -> &[u8] {
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        s
    }
    fn u32(&mut self) -> u32 {
        u32::from_le_bytes(self.take(4).try_into().unwrap())
    }
    fn u64(&mut self) -> u64 {
        u64::from_le_bytes(self.take(8).try_into().unwrap())
    }
    fn f32s(&mut self, count: usize) -> Vec<f64> {
        self.take(count * 4)
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
            .collect()
    }
}

pub fn decode(bytes: &[u8]) -> Result<TrainingTrace, TraceError> {
    if bytes.len() < 8 || !bytes.starts_with(MAGIC_STEM) {
        return Err(TraceError::BadMagic {
            found: bytes[..bytes.len().min(8)].to_vec(),
        });
    }
    let extended = match bytes[7] {
        b'1' => false,
        b'2' => true,
        other => return Err(TraceError::Version { found: other as char }),
    };
    if bytes.len() < HEADER_LEN {
        return Err(TraceError::Truncated {
            expected: HEADER_LEN,
            found: bytes.len(),
        });
    }
    let mut cur = Cursor { bytes, pos: 8 };
    let n = cur.u32() as usize;
    let c = cur.u32() as usize;
    let t = cur.u32() as usize;
    let seed = cur.u64();
    let dataset_fingerprint = cur.u64();

    let body = payload_len(n, c, t, extended);
    let expected = body + 4;
    if bytes.len() < expected {
        return Err(TraceError::Truncated {
            expected,
            found: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(TraceError::TrailingBytes {
            extra: bytes.len() - expected,
        });
    }
    let stored = u32::from_le_bytes(bytes[body..].try_into().unwrap());
    let computed = crc32fast::hash(&bytes[..body]);
    if stored != computed {
        return Err(TraceError::Checksum { stored, computed });
    }

    let cells = n * t;
    let confidence = cur.f32s(cells);
    let packed = cur.take(cells.div_ceil(8));
    let correctness = (0..cells).map(|k| packed[k >> 3] >> (k & 7) & 1 == 1).collect();
    let extended = extended.then(|| ExtendedChannels {
        margins: cur.f32s(cells),
        final_probs: cur.f32s(n * c),
        labels: (0..n).map(|_| cur.u32()).collect(),
    });
    let trace = TrainingTrace {
        sample_count: n,
        class_count: c,
        epoch_count: t,
        confidence,
        correctness,
        dataset_fingerprint,
        seed,
        extended,
    };
    trace.validate().map_err(TraceError::Invalid)?;
    Ok(trace)
}

pub fn write_trace(trace: &TrainingTrace, path: &Path) -> Result<(), TraceError> {
    let bytes = encode(trace)?;
    std::fs::write(path, bytes).map_err(|source| TraceError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn read_trace(path: &Path) -> Result<TrainingTrace, TraceError> {
    let bytes = std::fs::read(path).map_err(|source| TraceError::Io {
        path: path.display().to_string(),
        source,
    })?;
    decode(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{Prng, Stream};
    use proptest::prelude::*;

    pub(crate) fn random_trace(n: usize, c: usize, t: usize, extended: bool, seed: u64) -> TrainingTrace {
        let mut rng = Prng::new(seed, Stream::RandomScores, 1234);
        let floor = (c as f64).sqrt();
        let cells = n * t;
        TrainingTrace {
            sample_count: n,
            class_count: c,
            epoch_count: t,
            confidence: (0..cells).map(|_| (floor + rng.uniform(0.0, 50.0)) as f32 as f64).collect(),
            correctness: (0..cells).map(|_| rng.next_u64() & 1 == 1).collect(),
            dataset_fingerprint: rng.next_u64(),
            seed,
            extended: extended.then(|| ExtendedChannels {
                margins: (0..cells).map(|_| rng.uniform(-1.0, 1.0) as f32 as f64).collect(),
                final_probs: (0..n * c).map(|_| rng.next_f64() as f32 as f64).collect(),
                labels: (0..n).map(|_| rng.below(c as u64) as u32).collect(),
            }),
        }
    }

    #[test]
    fn layout_is_bit_exact() {
        let tr = TrainingTrace {
            sample_count: 1,
            class_count: 2,
            epoch_count: 3,
            confidence: vec![2.0, 1.5, 4.0],
            correctness: vec![true, false, true],
            dataset_fingerprint: 0x0102_0304_0506_0708,
            seed: 9,
            extended: None,
        };
        let b = encode(&tr).unwrap();
        assert_eq!(&b[..8], b"DUCSTRC1");
        assert_eq!(&b[8..20], &[1, 0, 0, 0, 2, 0, 0, 0, 3, 0, 0, 0]);
        assert_eq!(&b[20..28], &9u64.to_le_bytes());
        assert_eq!(&b[28..36], &[8, 7, 6, 5, 4, 3, 2, 1]);
        assert_eq!(&b[36..40], &2.0f32.to_le_bytes());
        assert_eq!(&b[44..48], &4.0f32.to_le_bytes());
        assert_eq!(b[48], 0b101);
        assert_eq!(b.len(), 49 + 4);
        assert_eq!(&b[49..], &crc32fast::hash(&b[..49]).to_le_bytes());
    }

    #[test]
    fn round_trip_both_versions() {
        for extended in [false, true] {
            let tr = random_trace(37, 4, 11, extended, 5);
            let dir = tempfile::tempdir().unwrap();
            let p = dir.path().join("t.bin");
            write_trace(&tr, &p).unwrap();
            assert_eq!(read_trace(&p).unwrap(), tr);
        }
    }

    #[test]
    fn corruption_is_reported_distinctly() {
        let tr = random_trace(10, 3, 7, false, 1);
        let good = encode(&tr).unwrap();

        let mut bad = good.clone();
        bad[0] = b'X';
        assert!(matches!(decode(&bad), Err(TraceError::BadMagic { .. })));

        let mut bad = good.clone();
        bad[7] = b'9';
        assert!(matches!(decode(&bad), Err(TraceError::Version { found: '9' })));

        let cut = &good[..good.len() - 10];
        match decode(cut) {
            Err(TraceError::Truncated { expected, found }) => {
                assert_eq!((expected, found), (good.len(), good.len() - 10));
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(decode(&good[..20]), Err(TraceError::Truncated { expected: 36, found: 20 })));

        let mut bad = good.clone();
        bad[40] ^= 0x10;
        assert!(matches!(decode(&bad), Err(TraceError::Checksum { .. })));

        let mut long = good.clone();
        long.push(0);
        assert!(matches!(decode(&long), Err(TraceError::TrailingBytes { extra: 1 })));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn round_trip_identity(
            n in 1usize..2000,
            c in 2usize..12,
            t in 1usize..200,
            extended in proptest::bool::ANY,
            seed in 0u64..1000,
        ) {
            let tr = random_trace(n, c, t, extended, seed);
            prop_assert_eq!(decode(&encode(&tr).unwrap()).unwrap(), tr);
        }
    }
}
