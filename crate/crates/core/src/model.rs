//! Desk-scale residual 1-D conv encoder, two-layer projection head,
//! shallow/deep alignment embeddings and the fine-tuning classifier.
//!
//! Matrices are stored input-major (`in × out`) and applied to row vectors,
//! so the projection head evaluates `z = ReLU(x·W1 + b1)·W2 + b2` row by row.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::tensor::{Tape, Tensor, TensorError, Var};

/// Width of the shallow feature vector.
pub const SHALLOW_DIM: usize = 6;

const CKPT_MAGIC: &[u8; 4] = b"MDFG";
const CKPT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("embedding row {row} has norm {norm:e} (< 1e-12)")]
    ZeroVectorEmbedding { row: usize, norm: f64 },
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("checkpoint at byte {offset}: {reason}")]
    Checkpoint { offset: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncoderConfig {
    /// Residual block count.
    pub blocks: usize,
    pub channels: usize,
    pub kernel: usize,
    /// Encoder output width.
    pub repr_dim: usize,
    /// Stride of the single-channel stem convolution.
    pub stem_stride: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            blocks: 4,
            channels: 32,
            kernel: 7,
            repr_dim: 256,
            stem_stride: 8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub seg_len: usize,
    pub encoder: EncoderConfig,
    /// Projection output width `p`.
    pub proj_dim: usize,
    /// Alignment space width `m`.
    pub embed_dim: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            seg_len: 512,
            encoder: EncoderConfig::default(),
            proj_dim: 128,
            embed_dim: 64,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let e = &self.encoder;
        let fields = [
            ("seg_len", self.seg_len),
            ("blocks", e.blocks),
            ("channels", e.channels),
            ("kernel", e.kernel),
            ("repr_dim", e.repr_dim),
            ("stem_stride", e.stem_stride),
            ("proj_dim", self.proj_dim),
            ("embed_dim", self.embed_dim),
        ];
        if let Some((name, _)) = fields.iter().find(|(_, v)| *v == 0) {
            return Err(ModelError::InvalidConfig(format!("{name} must be ≥ 1")));
        }
        if e.kernel % 2 == 0 {
            return Err(ModelError::InvalidConfig(format!("kernel {} must be odd", e.kernel)));
        }
        Ok(())
    }

    pub fn head_hidden(&self) -> usize {
        self.encoder.repr_dim
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamGroup {
    Encoder,
    Head,
    Align,
    Classifier,
}

impl ParamGroup {
    pub const ALL: [ParamGroup; 4] = [
        ParamGroup::Encoder,
        ParamGroup::Head,
        ParamGroup::Align,
        ParamGroup::Classifier,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ParamGroup::Encoder => "encoder",
            ParamGroup::Head => "head",
            ParamGroup::Align => "align",
            ParamGroup::Classifier => "classifier",
        }
    }

    fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|g| g.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub group: ParamGroup,
    pub value: Tensor,
}

impl Param {
    /// Biases are exempt from weight decay.
    pub fn is_bias(&self) -> bool {
        self.value.rank() == 1
    }
}

/// Positions of each parameter within [`ModelParams::params`].
#[derive(Debug, Clone)]
struct Layout {
    stem: (usize, usize),
    blocks: Vec<[usize; 4]>,
    downs: Vec<(usize, usize)>,
    fc: (usize, usize),
    head: [usize; 4],
    w_d: usize,
    w_s: usize,
    cls: (usize, usize),
}

/// Parameter specs in canonical order: (name, group, shape, fan_in).
fn param_specs(cfg: &ModelConfig) -> Vec<(String, ParamGroup, Vec<usize>, usize)> {
    use ParamGroup::*;
    let e = &cfg.encoder;
    let (c, k) = (e.channels, e.kernel);
    let mut v = vec![
        ("encoder.stem.w".to_string(), Encoder, vec![c, 1, k], k),
        ("encoder.stem.b".to_string(), Encoder, vec![c], k),
    ];
    for i in 0..e.blocks {
        if i > 0 {
            v.push((format!("encoder.down{i}.w"), Encoder, vec![c, c, 3], c * 3));
            v.push((format!("encoder.down{i}.b"), Encoder, vec![c], c * 3));
        }
        for j in 1..=2 {
            v.push((format!("encoder.block{i}.conv{j}.w"), Encoder, vec![c, c, k], c * k));
            v.push((format!("encoder.block{i}.conv{j}.b"), Encoder, vec![c], c * k));
        }
    }
    let (r, h, p, m) = (e.repr_dim, cfg.head_hidden(), cfg.proj_dim, cfg.embed_dim);
    v.extend([
        ("encoder.fc.w".to_string(), Encoder, vec![c, r], c),
        ("encoder.fc.b".to_string(), Encoder, vec![r], c),
        ("head.w1".to_string(), Head, vec![r, h], r),
        ("head.b1".to_string(), Head, vec![h], r),
        ("head.w2".to_string(), Head, vec![h, p], h),
        ("head.b2".to_string(), Head, vec![p], h),
        ("align.w_d".to_string(), Align, vec![p, m], p),
        ("align.w_s".to_string(), Align, vec![SHALLOW_DIM, m], SHALLOW_DIM),
        ("classifier.w".to_string(), Classifier, vec![p, 2], p),
        ("classifier.b".to_string(), Classifier, vec![2], p),
    ]);
    v
}

impl Layout {
    fn new(cfg: &ModelConfig) -> Self {
        let specs = param_specs(cfg);
        let idx = |name: &str| specs.iter().position(|s| s.0 == name).expect("known param");
        let blocks = (0..cfg.encoder.blocks)
            .map(|i| {
                [
                    idx(&format!("encoder.block{i}.conv1.w")),
                    idx(&format!("encoder.block{i}.conv1.b")),
                    idx(&format!("encoder.block{i}.conv2.w")),
                    idx(&format!("encoder.block{i}.conv2.b")),
                ]
            })
            .collect();
        let downs = (1..cfg.encoder.blocks)
            .map(|i| (idx(&format!("encoder.down{i}.w")), idx(&format!("encoder.down{i}.b"))))
            .collect();
        Self {
            stem: (idx("encoder.stem.w"), idx("encoder.stem.b")),
            blocks,
            downs,
            fc: (idx("encoder.fc.w"), idx("encoder.fc.b")),
            head: [idx("head.w1"), idx("head.b1"), idx("head.w2"), idx("head.b2")],
            w_d: idx("align.w_d"),
            w_s: idx("align.w_s"),
            cls: (idx("classifier.w"), idx("classifier.b")),
        }
    }
}

/// All learnable state plus per-group freeze flags.
#[derive(Clone, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub params: Vec<Param>,
    pub frozen: BTreeMap<ParamGroup, bool>,
}

impl fmt::Debug for ModelParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ModelParams")
            .field("config", &self.config)
            .field("params", &self.params.len())
            .field("frozen", &self.frozen)
            .finish()
    }
}

impl ModelParams {
    /// Weights ~ U(−k, k) with k = 1/√fan_in, biases zero.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = param_specs(&config)
            .into_iter()
            .map(|(name, group, shape, fan_in)| {
                let n: usize = shape.iter().product();
                let data = if shape.len() == 1 {
                    vec![0.0; n]
                } else {
                    let k = 1.0 / (fan_in as f64).sqrt();
                    (0..n).map(|_| rng.gen_range(-k..k)).collect()
                };
                Param {
                    name,
                    group,
                    value: Tensor::new(&shape, data).expect("spec shape"),
                }
            })
            .collect();
        Ok(Self {
            config,
            params,
            frozen: ParamGroup::ALL.into_iter().map(|g| (g, false)).collect(),
        })
    }

    pub fn is_frozen(&self, g: ParamGroup) -> bool {
        self.frozen.get(&g).copied().unwrap_or(false)
    }

    pub fn set_frozen(&mut self, g: ParamGroup, frozen: bool) {
        self.frozen.insert(g, frozen);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.params.iter().find(|p| p.name == name).map(|p| &p.value)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.params.iter_mut().find(|p| p.name == name).map(|p| &mut p.value)
    }

    /// Parameter names in the order [`ModelParams::bind`] places them.
    pub fn names(&self) -> Vec<&str> {
        self.params.iter().map(|p| p.name.as_str()).collect()
    }

    pub fn group_values(&self, g: ParamGroup) -> Vec<&Tensor> {
        self.params.iter().filter(|p| p.group == g).map(|p| &p.value).collect()
    }

    pub fn num_parameters(&self) -> usize {
        self.params.iter().map(|p| p.value.numel()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.params.iter().all(|p| p.value.all_finite())
    }

    /// Puts every parameter on `tape`; groups that are frozen, or rejected by
    /// `trainable`, become constants.
    pub fn bind<'t>(&self, tape: &'t Tape, trainable: impl Fn(ParamGroup) -> bool) -> BoundModel<'t> {
        let vars = self
            .params
            .iter()
            .map(|p| tape.var(p.value.clone(), !self.is_frozen(p.group) && trainable(p.group)))
            .collect();
        BoundModel {
            config: self.config,
            layout: Layout::new(&self.config),
            vars,
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ModelError> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ModelError> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    /// `"MDFG" | u32 version | u32 len, config TOML | u32 count,
    /// (u32 len, name, u32 rank, rank × u64 dims, f64 data)… |
    /// u32 count, (u32 len, group, u8 frozen)…`, little-endian.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        let put_str = |out: &mut Vec<u8>, s: &str| {
            out.extend_from_slice(&(s.len() as u32).to_le_bytes());
            out.extend_from_slice(s.as_bytes());
        };
        out.extend_from_slice(CKPT_MAGIC);
        out.extend_from_slice(&CKPT_VERSION.to_le_bytes());
        put_str(&mut out, &toml::to_string(&self.config).expect("config serializes"));
        out.extend_from_slice(&(self.params.len() as u32).to_le_bytes());
        for p in &self.params {
            put_str(&mut out, &p.name);
            out.extend_from_slice(&(p.value.rank() as u32).to_le_bytes());
            for &d in p.value.shape() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for v in p.value.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out.extend_from_slice(&(self.frozen.len() as u32).to_le_bytes());
        for (g, f) in &self.frozen {
            put_str(&mut out, g.name());
            out.push(u8::from(*f));
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ModelError> {
        let mut r = CkptReader { buf: bytes, pos: 0 };
        if r.take(4)? != CKPT_MAGIC {
            return Err(r.err(0, "bad magic"));
        }
        let version = r.u32()?;
        if version != CKPT_VERSION {
            return Err(r.err(4, &format!("unknown version {version}")));
        }
        let cfg_at = r.pos;
        let cfg_text = r.string()?;
        let config: ModelConfig =
            toml::from_str(&cfg_text).map_err(|e| r.err(cfg_at, &format!("config: {e}")))?;
        config.validate()?;
        let specs = param_specs(&config);
        let count_at = r.pos;
        let count = r.u32()? as usize;
        if count != specs.len() {
            return Err(r.err(count_at, &format!("{count} blocks, config implies {}", specs.len())));
        }
        let mut params = Vec::with_capacity(count);
        for (name, group, shape, _) in specs {
            let at = r.pos;
            let got = r.string()?;
            if got != name {
                return Err(r.err(at, &format!("expected block {name}, found {got}")));
            }
            let rank = r.u32()? as usize;
            let mut dims = Vec::with_capacity(rank);
            for _ in 0..rank {
                dims.push(r.u64()? as usize);
            }
            if dims != shape {
                return Err(r.err(at, &format!("{name}: shape {dims:?}, expected {shape:?}")));
            }
            let n: usize = dims.iter().product();
            let raw = r.take(n * 8)?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            params.push(Param {
                name,
                group,
                value: Tensor::new(&dims, data)?,
            });
        }
        let nf = r.u32()? as usize;
        let mut frozen = BTreeMap::new();
        for _ in 0..nf {
            let at = r.pos;
            let g = r.string()?;
            let g = ParamGroup::from_name(&g).ok_or_else(|| r.err(at, &format!("unknown group {g}")))?;
            frozen.insert(g, r.take(1)?[0] != 0);
        }
        if r.pos != bytes.len() {
            return Err(r.err(r.pos, "trailing bytes"));
        }
        Ok(Self {
            config,
            params,
            frozen,
        })
    }
}

struct CkptReader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> CkptReader<'a> {
    fn err(&self, offset: usize, reason: &str) -> ModelError {
        ModelError::Checkpoint {
            offset,
            reason: reason.to_string(),
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], ModelError> {
        if self.buf.len() - self.pos < n {
            return Err(self.err(self.pos, &format!("truncated, need {n} bytes")));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, ModelError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, ModelError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String, ModelError> {
        let at = self.pos;
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| self.err(at, "invalid utf-8"))
    }
}

/// Model parameters placed on a tape.
pub struct BoundModel<'t> {
    config: ModelConfig,
    layout: Layout,
    vars: Vec<Var<'t>>,
}

impl<'t> BoundModel<'t> {
    pub fn vars(&self) -> &[Var<'t>] {
        &self.vars
    }

    fn v(&self, i: usize) -> Var<'t> {
        self.vars[i]
    }

    /// `(B, N)` magnitudes → `(B, repr_dim)` representations.
    pub fn encode(&self, x: Var<'t>) -> Result<Var<'t>, TensorError> {
        let shape = x.shape();
        if shape.len() != 2 || shape[1] != self.config.seg_len {
            return Err(TensorError::ShapeMismatch {
                op: "encode",
                left: shape,
                right: vec![0, self.config.seg_len],
            });
        }
        let e = &self.config.encoder;
        let pad = e.kernel / 2;
        let (sw, sb) = self.layout.stem;
        let mut h = x
            .reshape(&[shape[0], 1, shape[1]])?
            .conv1d(self.v(sw), Some(self.v(sb)), e.stem_stride, pad)?
            .relu();
        for (i, blk) in self.layout.blocks.iter().enumerate() {
            if i > 0 {
                let (dw, db) = self.layout.downs[i - 1];
                h = h.conv1d(self.v(dw), Some(self.v(db)), 2, 1)?.relu();
            }
            let r = h
                .conv1d(self.v(blk[0]), Some(self.v(blk[1])), 1, pad)?
                .relu()
                .conv1d(self.v(blk[2]), Some(self.v(blk[3])), 1, pad)?;
            h = r.add(h)?.relu();
        }
        let (fw, fb) = self.layout.fc;
        h.mean_axis(2)?.matmul(self.v(fw))?.add_bias(self.v(fb))
    }

    /// Projection head: `ReLU(x·W1 + b1)·W2 + b2`.
    pub fn project(&self, x: Var<'t>) -> Result<Var<'t>, TensorError> {
        let [w1, b1, w2, b2] = self.layout.head;
        x.matmul(self.v(w1))?
            .add_bias(self.v(b1))?
            .relu()
            .matmul(self.v(w2))?
            .add_bias(self.v(b2))
    }

    /// Unit rows of `z·W_d`.
    pub fn deep_embed(&self, z: Var<'t>) -> Result<Var<'t>, TensorError> {
        z.matmul(self.v(self.layout.w_d))?.l2_normalize(1)
    }

    /// Unit rows of `f_s·W_s`.
    pub fn shallow_embed(&self, fs: Var<'t>) -> Result<Var<'t>, TensorError> {
        fs.matmul(self.v(self.layout.w_s))?.l2_normalize(1)
    }

    pub fn classify(&self, z: Var<'t>) -> Result<Var<'t>, TensorError> {
        let (w, b) = self.layout.cls;
        z.matmul(self.v(w))?.add_bias(self.v(b))
    }
}

fn forward(
    params: &ModelParams,
    input: &Tensor,
    f: impl for<'t> Fn(&BoundModel<'t>, Var<'t>) -> Result<Var<'t>, TensorError>,
) -> Result<Tensor, ModelError> {
    let tape = Tape::new();
    let bound = params.bind(&tape, |_| false);
    let out = f(&bound, tape.constant(input.clone()))?;
    Ok((*out.value()).clone())
}

fn check_rows_nonzero(t: &Tensor) -> Result<(), ModelError> {
    for r in 0..t.rows() {
        let norm = t.row(r).iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm < 1e-12 {
            return Err(ModelError::ZeroVectorEmbedding { row: r, norm });
        }
    }
    Ok(())
}

pub fn encode(batch: &Tensor, params: &ModelParams) -> Result<Tensor, ModelError> {
    forward(params, batch, |m, x| m.encode(x))
}

pub fn project(x: &Tensor, params: &ModelParams) -> Result<Tensor, ModelError> {
    forward(params, x, |m, x| m.project(x))
}

pub fn deep_embed(z: &Tensor, params: &ModelParams) -> Result<Tensor, ModelError> {
    let raw = forward(params, z, |m, z| z.matmul(m.v(m.layout.w_d)))?;
    check_rows_nonzero(&raw)?;
    forward(params, z, |m, z| m.deep_embed(z))
}

pub fn shallow_embed(fs: &Tensor, params: &ModelParams) -> Result<Tensor, ModelError> {
    let raw = forward(params, fs, |m, f| f.matmul(m.v(m.layout.w_s)))?;
    check_rows_nonzero(&raw)?;
    forward(params, fs, |m, f| m.shallow_embed(f))
}

pub fn classify(z: &Tensor, params: &ModelParams) -> Result<Tensor, ModelError> {
    forward(params, z, |m, z| m.classify(z))
}

/// Row-wise softmax of a logits matrix.
pub fn softmax_rows(logits: &Tensor) -> Tensor {
    let c = logits.cols();
    let mut out = Vec::with_capacity(logits.numel());
    for r in 0..logits.rows() {
        let row = logits.row(r);
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = row.iter().map(|v| (v - m).exp()).collect();
        let s: f64 = e.iter().sum();
        out.extend(e.iter().map(|v| v / s));
    }
    Tensor::new(&[logits.rows(), c], out).expect("softmax shape")
}
