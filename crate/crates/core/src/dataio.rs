//! Radar echo ingestion: the RDS v1 container, fixed-length segmentation,
//! target-cell oversampling, and the pretrain/train/val/test split.
//!
//! RDS v1 layout (little-endian):
//!
//! ```text
//! "RDS1" | u32 version = 1 | u32 cell_count
//! per cell: u32 cell_id | u8 cell_kind (0 clutter, 1 primary, 2 secondary)
//!           | f64 prf_hz | u64 sample_count | sample_count × (f32 I, f32 Q)
//! ```

use std::io::Write;
use std::path::Path;

use num_complex::Complex32;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

const MAGIC: &[u8; 4] = b"RDS1";
const VERSION: u32 = 1;
const CELL_HEADER_LEN: usize = 4 + 1 + 8 + 8;

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("malformed header at byte {offset}: {reason}")]
    MalformedHeader { offset: usize, reason: String },
    #[error("truncated payload at byte {offset}: need {needed} bytes, {available} available")]
    TruncatedPayload {
        offset: usize,
        needed: usize,
        available: usize,
    },
    #[error("unknown RDS version {version} at byte {offset}")]
    UnknownVersion { offset: usize, version: u32 },
    #[error("series of {len} samples is shorter than segment length {seg_len}")]
    SeriesTooShort { len: usize, seg_len: usize },
    #[error("even stride 1 yields only {max_count} segments, fewer than {target_count}")]
    Unreachable { max_count: usize, target_count: usize },
    #[error("validation quota needs {needed} clutter segments, only {available} available")]
    InsufficientClutter { needed: usize, available: usize },
    #[error("invalid segmentation config: {0}")]
    InvalidConfig(String),
    #[error("split document: {0}")]
    SplitFormat(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellKind {
    PureClutter,
    PrimaryTarget,
    SecondaryTarget,
}

impl CellKind {
    fn code(self) -> u8 {
        match self {
            CellKind::PureClutter => 0,
            CellKind::PrimaryTarget => 1,
            CellKind::SecondaryTarget => 2,
        }
    }

    fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(CellKind::PureClutter),
            1 => Some(CellKind::PrimaryTarget),
            2 => Some(CellKind::SecondaryTarget),
            _ => None,
        }
    }
}

/// Binary class of a segment. The class id used by the losses and the
/// classifier is 0 for clutter and 1 for target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Clutter,
    Target,
}

impl Label {
    pub fn class_id(self) -> usize {
        match self {
            Label::Clutter => 0,
            Label::Target => 1,
        }
    }

    pub fn from_class_id(id: usize) -> Option<Self> {
        match id {
            0 => Some(Label::Clutter),
            1 => Some(Label::Target),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Clutter => "clutter",
            Label::Target => "target",
        }
    }
}

/// Slow-time echo record of one range cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSeries {
    pub samples: Vec<Complex32>,
    pub prf_hz: f64,
    pub cell_id: u32,
    pub cell_kind: CellKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EchoSegment {
    pub samples: Vec<Complex32>,
    pub label: Label,
    pub source_cell: u32,
    pub start_index: usize,
}

impl EchoSegment {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SegmentationConfig {
    pub seg_len: usize,
    pub stride_clutter: usize,
    pub stride_target: usize,
}

impl Default for SegmentationConfig {
    fn default() -> Self {
        Self {
            seg_len: 512,
            stride_clutter: 512,
            stride_target: 512,
        }
    }
}

impl SegmentationConfig {
    pub fn validate(&self) -> Result<(), DataError> {
        if self.seg_len < 8 {
            return Err(DataError::InvalidConfig(format!(
                "seg_len {} < 8",
                self.seg_len
            )));
        }
        for (name, s) in [("stride_clutter", self.stride_clutter), ("stride_target", self.stride_target)] {
            if s == 0 || s > self.seg_len {
                return Err(DataError::InvalidConfig(format!(
                    "{name} {s} outside [1, {}]",
                    self.seg_len
                )));
            }
        }
        Ok(())
    }
}

/// Disjoint index sets over a segment list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    #[serde(with = "crate::seeding::toml_u64")]
    pub seed: u64,
    pub pretrain_ids: Vec<usize>,
    pub train_ids: Vec<usize>,
    pub val_ids: Vec<usize>,
    pub test_ids: Vec<usize>,
}

impl SplitSpec {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("split spec serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self, DataError> {
        toml::from_str(text).map_err(|e| DataError::SplitFormat(e.to_string()))
    }
}

pub fn write_rds(path: impl AsRef<Path>, cells: &[ComplexSeries]) -> Result<(), DataError> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    f.write_all(&encode_rds(cells))?;
    f.flush()?;
    Ok(())
}

pub fn encode_rds(cells: &[ComplexSeries]) -> Vec<u8> {
    let payload: usize = cells
        .iter()
        .map(|c| CELL_HEADER_LEN + 8 * c.samples.len())
        .sum();
    let mut out = Vec::with_capacity(12 + payload);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(cells.len() as u32).to_le_bytes());
    for c in cells {
        out.extend_from_slice(&c.cell_id.to_le_bytes());
        out.push(c.cell_kind.code());
        out.extend_from_slice(&c.prf_hz.to_le_bytes());
        out.extend_from_slice(&(c.samples.len() as u64).to_le_bytes());
        for s in &c.samples {
            out.extend_from_slice(&s.re.to_le_bytes());
            out.extend_from_slice(&s.im.to_le_bytes());
        }
    }
    out
}

pub fn read_rds(path: impl AsRef<Path>) -> Result<Vec<ComplexSeries>, DataError> {
    decode_rds(&std::fs::read(path)?)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], DataError> {
        let available = self.buf.len() - self.pos;
        if available < n {
            return Err(DataError::TruncatedPayload {
                offset: self.pos,
                needed: n,
                available,
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, DataError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, DataError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, DataError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode_rds(bytes: &[u8]) -> Result<Vec<ComplexSeries>, DataError> {
    let mut r = Reader { buf: bytes, pos: 0 };
    let magic = r.take(4).map_err(|_| DataError::MalformedHeader {
        offset: 0,
        reason: format!("file of {} bytes has no magic", bytes.len()),
    })?;
    if magic != MAGIC {
        return Err(DataError::MalformedHeader {
            offset: 0,
            reason: format!("bad magic {magic:?}"),
        });
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(DataError::UnknownVersion { offset: 4, version });
    }
    let count = r.u32()? as usize;
    let mut cells = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let cell_id = r.u32()?;
        let kind_at = r.pos;
        let code = r.take(1)?[0];
        let cell_kind = CellKind::from_code(code).ok_or_else(|| DataError::MalformedHeader {
            offset: kind_at,
            reason: format!("unknown cell kind {code}"),
        })?;
        let prf_at = r.pos;
        let prf_hz = r.f64()?;
        if !(prf_hz > 0.0 && prf_hz.is_finite()) {
            return Err(DataError::MalformedHeader {
                offset: prf_at,
                reason: format!("prf_hz {prf_hz} not positive"),
            });
        }
        let n_at = r.pos;
        let n = r.u64()?;
        let needed = n.checked_mul(8).filter(|&b| b <= usize::MAX as u64).ok_or_else(|| {
            DataError::MalformedHeader {
                offset: n_at,
                reason: format!("sample count {n} overflows"),
            }
        })? as usize;
        let raw = r.take(needed)?;
        let samples = raw
            .chunks_exact(8)
            .map(|c| {
                Complex32::new(
                    f32::from_le_bytes(c[..4].try_into().unwrap()),
                    f32::from_le_bytes(c[4..].try_into().unwrap()),
                )
            })
            .collect();
        cells.push(ComplexSeries {
            samples,
            prf_hz,
            cell_id,
            cell_kind,
        });
    }
    if r.pos != bytes.len() {
        return Err(DataError::MalformedHeader {
            offset: r.pos,
            reason: format!("{} trailing bytes after last cell", bytes.len() - r.pos),
        });
    }
    Ok(cells)
}

fn segment_count(len: usize, seg_len: usize, stride: usize) -> usize {
    if len < seg_len {
        0
    } else {
        (len - seg_len) / stride + 1
    }
}

/// Cuts a series into `seg_len` windows starting at 0, stride, 2·stride, ….
/// Secondary-target cells belong to neither class and yield nothing.
pub fn segment(series: &ComplexSeries, cfg: &SegmentationConfig) -> Result<Vec<EchoSegment>, DataError> {
    cfg.validate()?;
    let (label, stride) = match series.cell_kind {
        CellKind::SecondaryTarget => return Ok(Vec::new()),
        CellKind::PrimaryTarget => (Label::Target, cfg.stride_target),
        CellKind::PureClutter => (Label::Clutter, cfg.stride_clutter),
    };
    let len = series.samples.len();
    if len < cfg.seg_len {
        return Err(DataError::SeriesTooShort {
            len,
            seg_len: cfg.seg_len,
        });
    }
    Ok((0..segment_count(len, cfg.seg_len, stride))
        .map(|i| {
            let start = i * stride;
            EchoSegment {
                samples: series.samples[start..start + cfg.seg_len].to_vec(),
                label,
                source_cell: series.cell_id,
                start_index: start,
            }
        })
        .collect())
}

/// Largest stride in `[1, seg_len]` whose window count reaches `target_count`.
pub fn plan_oversampling(n_samples_available: usize, seg_len: usize, target_count: usize) -> Result<usize, DataError> {
    if seg_len == 0 || n_samples_available < seg_len {
        return Err(DataError::SeriesTooShort {
            len: n_samples_available,
            seg_len,
        });
    }
    let max_count = segment_count(n_samples_available, seg_len, 1);
    if target_count == 0 {
        return Err(DataError::InvalidConfig("target_count must be ≥ 1".into()));
    }
    if max_count < target_count {
        return Err(DataError::Unreachable {
            max_count,
            target_count,
        });
    }
    if target_count == 1 {
        return Ok(seg_len);
    }
    // count(s) ≥ target  ⇔  (L − N) / s ≥ target − 1  ⇔  s ≤ (L − N) / (target − 1)
    let span = n_samples_available - seg_len;
    Ok((span / (target_count - 1)).clamp(1, seg_len))
}

/// Splits segment indices 80 : 20 into pretraining and the remainder; the
/// remainder goes 2 : 2 : 1 to train, val and test. Validation holds clutter
/// only, so val is filled from clutter first and the other remainder
/// segments fill train and test at 2 : 1.
pub fn make_splits(segments: &[EchoSegment], seed: u64) -> Result<SplitSpec, DataError> {
    let n = segments.len();
    let n_pretrain = (n as f64 * 0.8).round() as usize;
    let remainder = n - n_pretrain;
    let n_val = (remainder as f64 * 0.4).round() as usize;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut clutter: Vec<usize> = (0..n)
        .filter(|&i| segments[i].label == Label::Clutter)
        .collect();
    let has_target = clutter.len() < n;
    if clutter.is_empty() || clutter.len() < n_val {
        return Err(DataError::InsufficientClutter {
            needed: n_val.max(1),
            available: clutter.len(),
        });
    }
    if !has_target {
        return Err(DataError::InvalidConfig("no target segments to split".into()));
    }
    clutter.shuffle(&mut rng);
    let mut val_ids: Vec<usize> = clutter[..n_val].to_vec();
    val_ids.sort_unstable();

    let mut in_val = vec![false; n];
    for &i in &val_ids {
        in_val[i] = true;
    }
    let mut rest: Vec<usize> = (0..n).filter(|&i| !in_val[i]).collect();
    rest.shuffle(&mut rng);
    let (pretrain, tail) = rest.split_at(n_pretrain);
    let n_train = (tail.len() as f64 * 2.0 / 3.0).round() as usize;
    let (train, test) = tail.split_at(n_train);

    let sorted = |s: &[usize]| {
        let mut v = s.to_vec();
        v.sort_unstable();
        v
    };
    Ok(SplitSpec {
        seed,
        pretrain_ids: sorted(pretrain),
        train_ids: sorted(train),
        val_ids,
        test_ids: sorted(test),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(len: usize, kind: CellKind) -> ComplexSeries {
        ComplexSeries {
            samples: (0..len).map(|k| Complex32::new(k as f32, -(k as f32))).collect(),
            prf_hz: 1000.0,
            cell_id: 3,
            cell_kind: kind,
        }
    }

    fn cfg(stride: usize) -> SegmentationConfig {
        SegmentationConfig {
            seg_len: 512,
            stride_clutter: stride,
            stride_target: stride,
        }
    }

    #[test]
    fn rds_round_trip_four_samples() {
        let cell = ComplexSeries {
            samples: vec![
                Complex32::new(1.0, 0.0),
                Complex32::new(0.0, 1.0),
                Complex32::new(-1.0, 0.0),
                Complex32::new(0.0, -1.0),
            ],
            prf_hz: 1000.0,
            cell_id: 7,
            cell_kind: CellKind::PrimaryTarget,
        };
        let back = decode_rds(&encode_rds(std::slice::from_ref(&cell))).unwrap();
        assert_eq!(back, vec![cell]);
    }

    #[test]
    fn rds_fourteen_cells() {
        let cells: Vec<_> = (0..14)
            .map(|i| ComplexSeries {
                cell_id: i,
                ..series(16, CellKind::PureClutter)
            })
            .collect();
        assert_eq!(decode_rds(&encode_rds(&cells)).unwrap().len(), 14);
    }

    #[test]
    fn rds_zero_cells() {
        assert!(decode_rds(&encode_rds(&[])).unwrap().is_empty());
    }

    #[test]
    fn rds_errors_name_offsets() {
        let good = encode_rds(&[series(4, CellKind::PureClutter)]);
        let mut bad_magic = good.clone();
        bad_magic[0] = b'X';
        assert!(matches!(
            decode_rds(&bad_magic),
            Err(DataError::MalformedHeader { offset: 0, .. })
        ));
        let mut bad_version = good.clone();
        bad_version[4] = 2;
        assert!(matches!(
            decode_rds(&bad_version),
            Err(DataError::UnknownVersion { offset: 4, version: 2 })
        ));
        let truncated = &good[..good.len() - 3];
        match decode_rds(truncated) {
            Err(DataError::TruncatedPayload { offset, needed, .. }) => {
                assert_eq!(offset, 12 + CELL_HEADER_LEN);
                assert_eq!(needed, 32);
            }
            other => panic!("{other:?}"),
        }
        let mut bad_kind = good.clone();
        bad_kind[16] = 9;
        assert!(matches!(
            decode_rds(&bad_kind),
            Err(DataError::MalformedHeader { offset: 16, .. })
        ));
        let mut trailing = good;
        trailing.push(0);
        assert!(decode_rds(&trailing).is_err());
    }

    #[test]
    fn segment_tiles_without_overlap() {
        let segs = segment(&series(1024, CellKind::PureClutter), &cfg(512)).unwrap();
        let starts: Vec<_> = segs.iter().map(|s| s.start_index).collect();
        assert_eq!(starts, vec![0, 512]);
        assert!(segs.iter().all(|s| s.len() == 512 && s.label == Label::Clutter));
    }

    #[test]
    fn segment_with_overlap() {
        let segs = segment(&series(1024, CellKind::PrimaryTarget), &cfg(256)).unwrap();
        let starts: Vec<_> = segs.iter().map(|s| s.start_index).collect();
        assert_eq!(starts, vec![0, 256, 512]);
        assert!(segs.iter().all(|s| s.label == Label::Target));
        assert_eq!(segs[1].samples[0], Complex32::new(256.0, -256.0));
    }

    #[test]
    fn segment_rejects_short_series() {
        assert!(matches!(
            segment(&series(100, CellKind::PureClutter), &cfg(512)),
            Err(DataError::SeriesTooShort { len: 100, seg_len: 512 })
        ));
    }

    #[test]
    fn secondary_cells_yield_nothing() {
        assert!(segment(&series(2048, CellKind::SecondaryTarget), &cfg(512))
            .unwrap()
            .is_empty());
    }

    /// Brute force over all strides, largest first.
    fn oversampling_oracle(len: usize, seg_len: usize, target: usize) -> Option<usize> {
        (1..=seg_len)
            .rev()
            .find(|&s| (len - seg_len) / s + 1 >= target)
    }

    #[test]
    fn oversampling_examples() {
        assert_eq!(plan_oversampling(131072, 512, 256).unwrap(), 512);
        assert_eq!(oversampling_oracle(131072, 512, 256), Some(512));
        let s = plan_oversampling(131072, 512, 2000).unwrap();
        assert_eq!(s, 65);
        assert_eq!(oversampling_oracle(131072, 512, 2000), Some(65));
        assert_eq!(segment_count(131072, 512, 65), 2009);
        assert!(matches!(
            plan_oversampling(600, 512, 200),
            Err(DataError::Unreachable { max_count: 89, target_count: 200 })
        ));
    }

    #[test]
    fn oversampling_matches_brute_force() {
        for len in [512usize, 513, 700, 1500, 4096, 9999] {
            for target in [1usize, 2, 3, 7, 50, 200, 1000] {
                let got = plan_oversampling(len, 512, target).ok();
                assert_eq!(got, oversampling_oracle(len, 512, target), "len {len} target {target}");
                if let Some(s) = got {
                    let c = segment_count(len, 512, s);
                    assert!(c >= target);
                    if s < 512 {
                        assert!(c < 2 * target);
                    }
                }
            }
        }
    }

    fn labeled(n_clutter: usize, n_target: usize) -> Vec<EchoSegment> {
        (0..n_clutter + n_target)
            .map(|i| EchoSegment {
                samples: vec![Complex32::new(i as f32, 0.0); 8],
                label: if i < n_clutter { Label::Clutter } else { Label::Target },
                source_cell: 0,
                start_index: i,
            })
            .collect()
    }

    #[test]
    fn split_sizes_and_disjointness() {
        let segs = labeled(50, 50);
        for seed in 0..20 {
            let s = make_splits(&segs, seed).unwrap();
            assert_eq!(s.pretrain_ids.len(), 80);
            assert_eq!(s.train_ids.len(), 8);
            assert_eq!(s.val_ids.len(), 8);
            assert_eq!(s.test_ids.len(), 4);
            assert!(s.val_ids.iter().all(|&i| segs[i].label == Label::Clutter));
            let mut all: Vec<usize> = [&s.pretrain_ids, &s.train_ids, &s.val_ids, &s.test_ids]
                .into_iter()
                .flatten()
                .copied()
                .collect();
            all.sort_unstable();
            assert_eq!(all, (0..100).collect::<Vec<_>>());
        }
    }

    #[test]
    fn split_is_deterministic() {
        let segs = labeled(50, 50);
        assert_eq!(make_splits(&segs, 9).unwrap(), make_splits(&segs, 9).unwrap());
        assert_ne!(make_splits(&segs, 9).unwrap(), make_splits(&segs, 10).unwrap());
    }

    #[test]
    fn split_needs_clutter() {
        assert!(matches!(
            make_splits(&labeled(0, 40), 1),
            Err(DataError::InsufficientClutter { .. })
        ));
    }

    #[test]
    fn split_toml_round_trip() {
        let s = make_splits(&labeled(30, 20), 4).unwrap();
        assert_eq!(SplitSpec::from_toml(&s.to_toml()).unwrap(), s);
    }
}
