//! Fusion attention: multi-head cross-attention with queries from motion
//! features and keys/values from RGB features, followed by head concatenation
//! and a one-hidden-layer GELU MLP.
//!
//! ```text
//! X̂m = tokenize(Xm), X̂f = tokenize(Xf)
//! head_n = softmax((X̂m Q_n)(X̂f K_n)ᵀ / √d) · (X̂f V_n)
//! Xa = reshape(MLP([head_1 | … | head_N]))
//! ```
//!
//! [`fa_gradient`] is the hand-written reverse pass of `sum(upstream ⊙ Xa)`.

use std::io::{Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::{gelu, gelu_derivative, matmul, row_softmax, Tensor2, Tensor3};

pub const DEFAULT_HEADS: usize = 16;
pub const DEFAULT_HIDDEN: usize = 512;
pub const PARAMS_VERSION: u8 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FaConfig {
    pub channels: usize,
    pub heads: usize,
    pub hidden: usize,
}

impl FaConfig {
    pub fn new(channels: usize) -> Self {
        Self {
            channels,
            heads: DEFAULT_HEADS,
            hidden: DEFAULT_HIDDEN,
        }
    }

    pub fn with_heads(mut self, heads: usize) -> Self {
        self.heads = heads;
        self
    }

    pub fn with_hidden(mut self, hidden: usize) -> Self {
        self.hidden = hidden;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels == 0 || self.heads == 0 || self.hidden == 0 {
            return Err(Error::InvalidArgument(format!("zero-sized attention config {self:?}")));
        }
        if !self.channels.is_multiple_of(self.heads) {
            return Err(Error::InvalidArgument(format!(
                "{} channels are not divisible by {} heads",
                self.channels, self.heads
            )));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.channels / self.heads
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FaParams {
    pub heads: usize,
    pub channels: usize,
    pub head_dim: usize,
    pub hidden: usize,
    /// Per-head `C×d` projections.
    pub query: Vec<Tensor2>,
    pub key: Vec<Tensor2>,
    pub value: Vec<Tensor2>,
    /// `C×hidden`
    pub w1: Tensor2,
    pub b1: Vec<f64>,
    /// `hidden×C`
    pub w2: Tensor2,
    pub b2: Vec<f64>,
}

impl FaParams {
    /// Seeded Glorot-uniform weights, zero biases.
    pub fn init(config: FaConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (c, d, n) = (config.channels, config.head_dim(), config.heads);
        let mut proj = || (0..n).map(|_| Tensor2::xavier(c, d, &mut rng)).collect::<Vec<_>>();
        let query = proj();
        let key = proj();
        let value = proj();
        let w1 = Tensor2::xavier(c, config.hidden, &mut rng);
        let w2 = Tensor2::xavier(config.hidden, c, &mut rng);
        Ok(Self {
            heads: n,
            channels: c,
            head_dim: d,
            hidden: config.hidden,
            query,
            key,
            value,
            w1,
            b1: vec![0.0; config.hidden],
            w2,
            b2: vec![0.0; c],
        })
    }

    pub fn zeros(config: FaConfig) -> Result<Self> {
        config.validate()?;
        let (c, d, n) = (config.channels, config.head_dim(), config.heads);
        let proj = || vec![Tensor2::zeros(c, d); n];
        Ok(Self {
            heads: n,
            channels: c,
            head_dim: d,
            hidden: config.hidden,
            query: proj(),
            key: proj(),
            value: proj(),
            w1: Tensor2::zeros(c, config.hidden),
            b1: vec![0.0; config.hidden],
            w2: Tensor2::zeros(config.hidden, c),
            b2: vec![0.0; c],
        })
    }

    pub fn config(&self) -> FaConfig {
        FaConfig {
            channels: self.channels,
            heads: self.heads,
            hidden: self.hidden,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.config().validate()?;
        if self.head_dim != self.channels / self.heads {
            return Err(Error::Shape(format!(
                "head_dim {} != channels {} / heads {}",
                self.head_dim, self.channels, self.heads
            )));
        }
        let (c, d, h) = (self.channels, self.head_dim, self.hidden);
        let projections_ok = [&self.query, &self.key, &self.value]
            .iter()
            .all(|p| p.len() == self.heads && p.iter().all(|m| m.shape() == (c, d)));
        if !projections_ok
            || self.w1.shape() != (c, h)
            || self.w2.shape() != (h, c)
            || self.b1.len() != h
            || self.b2.len() != c
        {
            return Err(Error::Shape("attention parameter shapes are inconsistent".into()));
        }
        if !self.flatten().iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite attention parameter".into()));
        }
        Ok(())
    }

    /// Parameter count in [`FaParams::flatten`] order.
    pub fn len(&self) -> usize {
        let (c, d, n, h) = (self.channels, self.head_dim, self.heads, self.hidden);
        3 * n * c * d + c * h + h + h * c + c
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All parameters: Q_0..Q_N, K_0..K_N, V_0..V_N, W1, b1, W2, b2, each
    /// row-major.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        for group in [&self.query, &self.key, &self.value] {
            for m in group {
                out.extend_from_slice(m.data());
            }
        }
        out.extend_from_slice(self.w1.data());
        out.extend_from_slice(&self.b1);
        out.extend_from_slice(self.w2.data());
        out.extend_from_slice(&self.b2);
        out
    }

    /// Inverse of [`FaParams::flatten`] for the same configuration.
    pub fn unflatten(config: FaConfig, values: &[f64]) -> Result<Self> {
        let mut p = Self::zeros(config)?;
        if values.len() != p.len() {
            return Err(Error::Shape(format!(
                "expected {} parameters, got {}",
                p.len(),
                values.len()
            )));
        }
        let mut rest = values;
        let mut take = |dst: &mut [f64]| {
            let (head, tail) = rest.split_at(dst.len());
            dst.copy_from_slice(head);
            rest = tail;
        };
        for group in [&mut p.query, &mut p.key, &mut p.value] {
            for m in group.iter_mut() {
                take(m.data_mut());
            }
        }
        take(p.w1.data_mut());
        take(&mut p.b1);
        take(p.w2.data_mut());
        take(&mut p.b2);
        Ok(p)
    }

    /// Binary record: version byte, then `heads, channels, head_dim, hidden`
    /// as `u32` LE, then the [`FaParams::flatten`] values as `f64` LE.
    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        let mut buf = Vec::with_capacity(17 + 8 * self.len());
        buf.push(PARAMS_VERSION);
        for dim in [self.heads, self.channels, self.head_dim, self.hidden] {
            let dim = u32::try_from(dim).map_err(|_| Error::BadParams(format!("dimension {dim} exceeds u32")))?;
            buf.extend_from_slice(&dim.to_le_bytes());
        }
        for v in self.flatten() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        out.write_all(&buf)?;
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("in-memory write");
        buf
    }

    pub fn read_from<R: Read>(mut input: R) -> Result<Self> {
        let mut bytes = Vec::new();
        input.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let Some((&version, rest)) = bytes.split_first() else {
            return Err(Error::BadParams("empty record".into()));
        };
        if version != PARAMS_VERSION {
            return Err(Error::BadParams(format!("unsupported version {version}")));
        }
        if rest.len() < 16 {
            return Err(Error::BadParams("truncated header".into()));
        }
        let dim = |i: usize| u32::from_le_bytes(rest[4 * i..4 * i + 4].try_into().unwrap()) as usize;
        let (heads, channels, head_dim, hidden) = (dim(0), dim(1), dim(2), dim(3));
        let config = FaConfig {
            channels,
            heads,
            hidden,
        };
        config.validate().map_err(|e| Error::BadParams(e.to_string()))?;
        if head_dim != config.head_dim() {
            return Err(Error::BadParams(format!(
                "head_dim {head_dim} inconsistent with {channels} channels / {heads} heads"
            )));
        }
        let payload = &rest[16..];
        if payload.len() % 8 != 0 {
            return Err(Error::BadParams(format!(
                "payload of {} bytes is not f64-aligned",
                payload.len()
            )));
        }
        let values: Vec<f64> = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let params = Self::unflatten(config, &values).map_err(|e| Error::BadParams(e.to_string()))?;
        params.validate()?;
        Ok(params)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FaOutput {
    pub fused: Tensor3,
    pub per_head: Vec<Tensor2>,
}

/// Gradients of `sum(upstream ⊙ fa_forward(xf, xm, p).fused)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FaGradients {
    pub xf: Tensor3,
    pub xm: Tensor3,
    pub params: FaParams,
}

/// `(h·w) × c` token matrix; row `i·w + j` holds the channels at `(i, j)`.
pub fn tokenize(x: &Tensor3) -> Tensor2 {
    let (h, w, c) = x.shape();
    Tensor2::from_vec(h * w, c, x.data().to_vec()).expect("same element count")
}

pub fn untokenize(tokens: &Tensor2, h: usize, w: usize) -> Result<Tensor3> {
    if tokens.rows() != h * w {
        return Err(Error::Shape(format!(
            "{} tokens cannot fill a {h}x{w} grid",
            tokens.rows()
        )));
    }
    Tensor3::from_vec(h, w, tokens.cols(), tokens.data().to_vec())
}

/// Softmax attention weights `softmax((q·Qn)(k·Kn)ᵀ/√d)`.
pub fn attention_weights(qtok: &Tensor2, ktok: &Tensor2, qn: &Tensor2, kn: &Tensor2) -> Result<Tensor2> {
    if qn.shape() != kn.shape() {
        return Err(Error::Shape(format!(
            "query projection {:?} vs key projection {:?}",
            qn.shape(),
            kn.shape()
        )));
    }
    let q = matmul(qtok, qn)?;
    let k = matmul(ktok, kn)?;
    let scale = 1.0 / (qn.cols() as f64).sqrt();
    Ok(row_softmax(&matmul(&q, &k.transpose())?.scale(scale)))
}

pub fn attention_head(
    qtok: &Tensor2,
    ktok: &Tensor2,
    vtok: &Tensor2,
    qn: &Tensor2,
    kn: &Tensor2,
    vn: &Tensor2,
) -> Result<Tensor2> {
    if qtok.rows() != ktok.rows() || ktok.rows() != vtok.rows() {
        return Err(Error::Shape(format!(
            "token counts differ: {} / {} / {}",
            qtok.rows(),
            ktok.rows(),
            vtok.rows()
        )));
    }
    if vn.shape() != qn.shape() {
        return Err(Error::Shape(format!(
            "value projection {:?} vs query projection {:?}",
            vn.shape(),
            qn.shape()
        )));
    }
    let weights = attention_weights(qtok, ktok, qn, kn)?;
    matmul(&weights, &matmul(vtok, vn)?)
}

fn check_inputs(xf: &Tensor3, xm: &Tensor3, p: &FaParams) -> Result<()> {
    p.validate()?;
    if xf.shape() != xm.shape() {
        return Err(Error::Shape(format!(
            "RGB features {:?} vs motion features {:?}",
            xf.shape(),
            xm.shape()
        )));
    }
    if xf.channels() != p.channels {
        return Err(Error::Shape(format!(
            "features have {} channels, parameters expect {}",
            xf.channels(),
            p.channels
        )));
    }
    Ok(())
}

/// Intermediate values kept for the reverse pass.
struct ForwardTrace {
    qtok: Tensor2,
    ftok: Tensor2,
    q: Vec<Tensor2>,
    k: Vec<Tensor2>,
    v: Vec<Tensor2>,
    weights: Vec<Tensor2>,
    heads: Vec<Tensor2>,
    concat: Tensor2,
    pre_act: Tensor2,
    act: Tensor2,
    out: Tensor2,
}

fn forward_trace(xf: &Tensor3, xm: &Tensor3, p: &FaParams) -> Result<ForwardTrace> {
    check_inputs(xf, xm, p)?;
    let qtok = tokenize(xm);
    let ftok = tokenize(xf);
    let d = p.head_dim;
    let scale = 1.0 / (d as f64).sqrt();
    let mut concat = Tensor2::zeros(qtok.rows(), p.channels);
    let (mut qs, mut ks, mut vs, mut weights, mut heads) = (vec![], vec![], vec![], vec![], vec![]);
    for n in 0..p.heads {
        let q = matmul(&qtok, &p.query[n])?;
        let k = matmul(&ftok, &p.key[n])?;
        let v = matmul(&ftok, &p.value[n])?;
        let w = row_softmax(&matmul(&q, &k.transpose())?.scale(scale));
        let head = matmul(&w, &v)?;
        concat.set_columns(n * d, &head);
        qs.push(q);
        ks.push(k);
        vs.push(v);
        weights.push(w);
        heads.push(head);
    }
    let pre_act = matmul(&concat, &p.w1)?.add_row(&p.b1)?;
    let act = pre_act.map(gelu);
    let out = matmul(&act, &p.w2)?.add_row(&p.b2)?;
    Ok(ForwardTrace {
        qtok,
        ftok,
        q: qs,
        k: ks,
        v: vs,
        weights,
        heads,
        concat,
        pre_act,
        act,
        out,
    })
}

pub fn fa_forward(xf: &Tensor3, xm: &Tensor3, p: &FaParams) -> Result<FaOutput> {
    let trace = forward_trace(xf, xm, p)?;
    Ok(FaOutput {
        fused: untokenize(&trace.out, xf.height(), xf.width())?,
        per_head: trace.heads,
    })
}

/// Per-head attention weight matrices for the given inputs.
pub fn fa_attention_weights(xf: &Tensor3, xm: &Tensor3, p: &FaParams) -> Result<Vec<Tensor2>> {
    Ok(forward_trace(xf, xm, p)?.weights)
}

pub fn fa_gradient(xf: &Tensor3, xm: &Tensor3, p: &FaParams, upstream: &Tensor3) -> Result<FaGradients> {
    if upstream.shape() != xf.shape() {
        return Err(Error::Shape(format!(
            "upstream {:?} vs output {:?}",
            upstream.shape(),
            xf.shape()
        )));
    }
    let t = forward_trace(xf, xm, p)?;
    let g_out = tokenize(upstream);
    debug_assert_eq!(g_out.shape(), t.out.shape());
    let mut grads = FaParams::zeros(p.config())?;

    // MLP
    grads.w2 = matmul(&t.act.transpose(), &g_out)?;
    grads.b2 = g_out.column_sums();
    let g_act = matmul(&g_out, &p.w2.transpose())?;
    let g_pre = g_act.hadamard(&t.pre_act.map(gelu_derivative))?;
    grads.w1 = matmul(&t.concat.transpose(), &g_pre)?;
    grads.b1 = g_pre.column_sums();
    let g_concat = matmul(&g_pre, &p.w1.transpose())?;

    // Heads
    let d = p.head_dim;
    let scale = 1.0 / (d as f64).sqrt();
    let mut g_qtok = Tensor2::zeros(t.qtok.rows(), t.qtok.cols());
    let mut g_ftok = Tensor2::zeros(t.ftok.rows(), t.ftok.cols());
    for n in 0..p.heads {
        let g_head = g_concat.columns(n * d, d);
        let w = &t.weights[n];
        let g_w = matmul(&g_head, &t.v[n].transpose())?;
        let g_v = matmul(&w.transpose(), &g_head)?;
        let g_logits = softmax_backward(w, &g_w).scale(scale);
        let g_q = matmul(&g_logits, &t.k[n])?;
        let g_k = matmul(&g_logits.transpose(), &t.q[n])?;

        grads.query[n] = matmul(&t.qtok.transpose(), &g_q)?;
        grads.key[n] = matmul(&t.ftok.transpose(), &g_k)?;
        grads.value[n] = matmul(&t.ftok.transpose(), &g_v)?;
        g_qtok = g_qtok.add(&matmul(&g_q, &p.query[n].transpose())?)?;
        g_ftok = g_ftok.add(&matmul(&g_k, &p.key[n].transpose())?)?;
        g_ftok = g_ftok.add(&matmul(&g_v, &p.value[n].transpose())?)?;
    }
    Ok(FaGradients {
        xf: untokenize(&g_ftok, xf.height(), xf.width())?,
        xm: untokenize(&g_qtok, xm.height(), xm.width())?,
        params: grads,
    })
}

/// Row-wise softmax Jacobian-vector product: `P ⊙ (G − rowsum(G ⊙ P))`.
fn softmax_backward(p: &Tensor2, g: &Tensor2) -> Tensor2 {
    let mut out = Tensor2::zeros(p.rows(), p.cols());
    for i in 0..p.rows() {
        let dot: f64 = p.row(i).iter().zip(g.row(i)).map(|(a, b)| a * b).sum();
        for (o, (pv, gv)) in out.row_mut(i).iter_mut().zip(p.row(i).iter().zip(g.row(i))) {
            *o = pv * (gv - dot);
        }
    }
    out
}
