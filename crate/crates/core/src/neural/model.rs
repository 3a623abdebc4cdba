use std::collections::HashSet;

use rand::Rng;

use super::tensor::{axpy, dot, sigmoid};
use super::{EncoderKind, ModelDims, NeuralError, Tensor};
use crate::corpus::{is_stopword, Question, QuestionPair, Vocabulary, PAD, UNK};

pub const WEIGHT_INIT: f64 = 0.05;
pub const EMBEDDING_INIT: f64 = 0.25;
pub const PROB_CLAMP: f64 = 1e-12;

/// Word vectors (`|V| × d_w`) and the two overlap vectors (`2 × d_o`).
/// The PAD row is zero and receives no gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    pub words: Tensor,
    pub overlap: Tensor,
}

impl EmbeddingTable {
    pub fn random<R: Rng>(vocab_size: usize, dims: &ModelDims, rng: &mut R) -> Self {
        let mut words = Tensor::uniform(&[vocab_size, dims.word_dim], EMBEDDING_INIT, rng);
        words.row_mut(PAD).fill(0.0);
        Self {
            words,
            overlap: Tensor::uniform(&[2, dims.overlap_dim], EMBEDDING_INIT, rng),
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.words.shape()[0]
    }

    pub fn width(&self) -> usize {
        self.words.shape()[1] + self.overlap.shape()[1]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CnnEncoder {
    /// `filters × (window · width)`
    pub filters: Tensor,
    pub bias: Tensor,
    pub window: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmDirection {
    /// Gate rows ordered input, forget, output, candidate: `4H × width`.
    pub w: Tensor,
    /// `4H × H`
    pub u: Tensor,
    pub b: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmEncoder {
    pub forward: LstmDirection,
    pub backward: LstmDirection,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Encoder {
    Cnn(CnnEncoder),
    Lstm(LstmEncoder),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    /// `hidden × 2·encoder_dim`
    pub w1: Tensor,
    pub b1: Tensor,
    /// `1 × hidden`
    pub w2: Tensor,
    pub b2: Tensor,
}

/// Two independent sentence encoders over a shared embedding table, joined
/// by a one-hidden-layer MLP with a sigmoid output.
#[derive(Debug, Clone, PartialEq)]
pub struct PairClassifier {
    pub kind: EncoderKind,
    pub dims: ModelDims,
    pub embeddings: EmbeddingTable,
    pub enc1: Encoder,
    pub enc2: Encoder,
    pub mlp: Mlp,
}

impl CnnEncoder {
    fn random<R: Rng>(dims: &ModelDims, rng: &mut R) -> Self {
        Self {
            filters: Tensor::uniform(&[dims.filters, dims.window * dims.width()], WEIGHT_INIT, rng),
            bias: Tensor::zeros(&[dims.filters]),
            window: dims.window,
        }
    }
}

impl LstmDirection {
    fn random<R: Rng>(dims: &ModelDims, rng: &mut R) -> Self {
        let h = dims.lstm_hidden;
        let mut b = Tensor::zeros(&[4 * h]);
        b.data_mut()[h..2 * h].fill(1.0);
        Self {
            w: Tensor::uniform(&[4 * h, dims.width()], WEIGHT_INIT, rng),
            u: Tensor::uniform(&[4 * h, h], WEIGHT_INIT, rng),
            b,
        }
    }

    fn hidden(&self) -> usize {
        self.u.shape()[1]
    }
}

impl Encoder {
    fn random<R: Rng>(kind: EncoderKind, dims: &ModelDims, rng: &mut R) -> Self {
        match kind {
            EncoderKind::Cnn => Encoder::Cnn(CnnEncoder::random(dims, rng)),
            EncoderKind::Lstm => Encoder::Lstm(LstmEncoder {
                forward: LstmDirection::random(dims, rng),
                backward: LstmDirection::random(dims, rng),
            }),
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            Encoder::Cnn(c) => c.filters.shape()[0],
            Encoder::Lstm(l) => 2 * l.forward.hidden(),
        }
    }

    fn tensors(&self) -> Vec<&Tensor> {
        match self {
            Encoder::Cnn(c) => vec![&c.filters, &c.bias],
            Encoder::Lstm(l) => vec![
                &l.forward.w,
                &l.forward.u,
                &l.forward.b,
                &l.backward.w,
                &l.backward.u,
                &l.backward.b,
            ],
        }
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        match self {
            Encoder::Cnn(c) => vec![&mut c.filters, &mut c.bias],
            Encoder::Lstm(l) => vec![
                &mut l.forward.w,
                &mut l.forward.u,
                &mut l.forward.b,
                &mut l.backward.w,
                &mut l.backward.u,
                &mut l.backward.b,
            ],
        }
    }

    fn names(&self) -> &'static [&'static str] {
        match self {
            Encoder::Cnn(_) => &["filters", "filter_bias"],
            Encoder::Lstm(_) => &["fwd_w", "fwd_u", "fwd_b", "bwd_w", "bwd_u", "bwd_b"],
        }
    }
}

impl PairClassifier {
    /// Fresh parameters: weights uniform in ±0.05, biases zero except the
    /// LSTM forget gate (1.0), embeddings uniform in ±0.25 with a zero PAD row.
    pub fn new<R: Rng>(kind: EncoderKind, dims: ModelDims, vocab_size: usize, rng: &mut R) -> Self {
        let embeddings = EmbeddingTable::random(vocab_size, &dims, rng);
        Self::with_embeddings(kind, dims, embeddings, rng)
    }

    pub fn with_embeddings<R: Rng>(
        kind: EncoderKind,
        dims: ModelDims,
        embeddings: EmbeddingTable,
        rng: &mut R,
    ) -> Self {
        let enc1 = Encoder::random(kind, &dims, rng);
        let enc2 = Encoder::random(kind, &dims, rng);
        let e = dims.encoder_dim(kind);
        let mlp = Mlp {
            w1: Tensor::uniform(&[dims.mlp_hidden, 2 * e], WEIGHT_INIT, rng),
            b1: Tensor::zeros(&[dims.mlp_hidden]),
            w2: Tensor::uniform(&[1, dims.mlp_hidden], WEIGHT_INIT, rng),
            b2: Tensor::zeros(&[1]),
        };
        Self {
            kind,
            dims,
            embeddings,
            enc1,
            enc2,
            mlp,
        }
    }

    /// Same shapes, every value zero.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for t in z.tensors_mut() {
            t.fill(0.0);
        }
        z
    }

    /// All parameter tensors in checkpoint order.
    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut v = vec![&self.embeddings.words, &self.embeddings.overlap];
        v.extend(self.enc1.tensors());
        v.extend(self.enc2.tensors());
        v.extend([&self.mlp.w1, &self.mlp.b1, &self.mlp.w2, &self.mlp.b2]);
        v
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut v = vec![&mut self.embeddings.words, &mut self.embeddings.overlap];
        v.extend(self.enc1.tensors_mut());
        v.extend(self.enc2.tensors_mut());
        v.extend([&mut self.mlp.w1, &mut self.mlp.b1, &mut self.mlp.w2, &mut self.mlp.b2]);
        v
    }

    pub fn tensor_names(&self) -> Vec<String> {
        let mut v = vec!["word_embeddings".to_owned(), "overlap_embeddings".to_owned()];
        v.extend(self.enc1.names().iter().map(|n| format!("enc1.{n}")));
        v.extend(self.enc2.names().iter().map(|n| format!("enc2.{n}")));
        v.extend(["mlp.w1", "mlp.b1", "mlp.w2", "mlp.b2"].map(String::from));
        v
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn add_scaled(&mut self, other: &PairClassifier, s: f64) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            axpy(a.data_mut(), s, b.data());
        }
    }

    pub fn probability(&self, ex: &PairExample) -> Result<f64, NeuralError> {
        Ok(self.forward(ex)?.p)
    }
}

/// Token indices and overlap bits of one question, truncated to `max_len`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedQuestion {
    pub tokens: Vec<usize>,
    pub overlap: Vec<u8>,
}

impl EncodedQuestion {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairExample {
    pub a: EncodedQuestion,
    pub b: EncodedQuestion,
    pub label: Option<bool>,
}

/// `b_i = 1` iff token `i` is not a stopword and occurs in `other`.
pub fn overlap_bits(tokens: &[String], other: &[String]) -> Vec<u8> {
    let other: HashSet<&str> = other.iter().map(String::as_str).collect();
    tokens
        .iter()
        .map(|t| u8::from(!is_stopword(t) && other.contains(t.as_str())))
        .collect()
}

/// Index/overlap encoding of `q_self` against `q_other`. An empty question
/// becomes a single UNK position so encoders always see a token.
pub fn encode_question(
    q_self: &Question,
    q_other: &Question,
    vocab: &Vocabulary,
    max_len: usize,
) -> EncodedQuestion {
    let n = q_self.tokens.len().min(max_len);
    if n == 0 {
        return EncodedQuestion {
            tokens: vec![UNK],
            overlap: vec![0],
        };
    }
    let toks = &q_self.tokens[..n];
    EncodedQuestion {
        tokens: toks.iter().map(|t| vocab.index(t)).collect(),
        overlap: overlap_bits(toks, &q_other.tokens),
    }
}

pub fn encode_pair(p: &QuestionPair, vocab: &Vocabulary, max_len: usize) -> PairExample {
    PairExample {
        a: encode_question(&p.q1, &p.q2, vocab, max_len),
        b: encode_question(&p.q2, &p.q1, vocab, max_len),
        label: p.label,
    }
}

/// Sentence matrix `max_len × (d_w + d_o)`: row `i` is the word vector of
/// token `i` followed by its overlap vector; rows past the question are PAD
/// (all zero). Out-of-vocabulary tokens use the UNK row.
pub fn embed_sequence(
    q_self: &Question,
    q_other: &Question,
    table: &EmbeddingTable,
    vocab: &Vocabulary,
    max_len: usize,
) -> Tensor {
    let width = table.width();
    let mut s = Tensor::zeros(&[max_len, width]);
    let n = q_self.tokens.len().min(max_len);
    let toks = &q_self.tokens[..n];
    let bits = overlap_bits(toks, &q_other.tokens);
    for (i, (t, b)) in toks.iter().zip(bits).enumerate() {
        let dw = table.words.shape()[1];
        let row = s.row_mut(i);
        row[..dw].copy_from_slice(table.words.row(vocab.index(t)));
        row[dw..].copy_from_slice(table.overlap.row(b as usize));
    }
    s
}

fn sentence_matrix(q: &EncodedQuestion, table: &EmbeddingTable) -> Vec<f64> {
    let dw = table.words.shape()[1];
    let width = table.width();
    let mut x = vec![0.0; q.len() * width];
    for (i, (&t, &b)) in q.tokens.iter().zip(&q.overlap).enumerate() {
        x[i * width..i * width + dw].copy_from_slice(table.words.row(t));
        x[i * width + dw..(i + 1) * width].copy_from_slice(table.overlap.row(b as usize));
    }
    x
}

// ---------------------------------------------------------------- CNN

struct CnnCache {
    xpad: Vec<f64>,
    len: usize,
    argmax: Vec<usize>,
    zmax: Vec<f64>,
}

fn cnn_forward(x: &[f64], len: usize, p: &CnnEncoder) -> (Vec<f64>, CnnCache) {
    let f = p.filters.shape()[0];
    let d = p.filters.shape()[1] / p.window;
    let left = (p.window - 1) / 2;
    let mut xpad = vec![0.0; (len + p.window - 1) * d];
    xpad[left * d..(left + len) * d].copy_from_slice(&x[..len * d]);
    let span = p.window * d;
    let mut out = vec![0.0; f];
    let mut argmax = vec![0; f];
    let mut zmax = vec![0.0; f];
    for k in 0..f {
        let w = p.filters.row(k);
        let b = p.bias.data()[k];
        let mut best = f64::NEG_INFINITY;
        let mut arg = 0;
        for t in 0..len {
            let z = b + dot(w, &xpad[t * d..t * d + span]);
            if z > best {
                best = z;
                arg = t;
            }
        }
        argmax[k] = arg;
        zmax[k] = best;
        out[k] = best.max(0.0);
    }
    (
        out,
        CnnCache {
            xpad,
            len,
            argmax,
            zmax,
        },
    )
}

/// Accumulates parameter gradients into `g` and returns `∂L/∂x` (`len × d`).
fn cnn_backward(dout: &[f64], cache: &CnnCache, p: &CnnEncoder, g: &mut CnnEncoder) -> Vec<f64> {
    let d = p.filters.shape()[1] / p.window;
    let left = (p.window - 1) / 2;
    let span = p.window * d;
    let mut dxpad = vec![0.0; cache.xpad.len()];
    for (k, &gk) in dout.iter().enumerate() {
        if cache.zmax[k] <= 0.0 || gk == 0.0 {
            continue;
        }
        let t = cache.argmax[k];
        axpy(g.filters.row_mut(k), gk, &cache.xpad[t * d..t * d + span]);
        g.bias.data_mut()[k] += gk;
        axpy(&mut dxpad[t * d..t * d + span], gk, p.filters.row(k));
    }
    dxpad[left * d..(left + cache.len) * d].to_vec()
}

/// Same-length convolution (zero padding, stride 1), ReLU, then a max over
/// the first `len` positions of `s`. Rows from `len` on are ignored.
pub fn conv_maxpool_encode(s: &Tensor, len: usize, p: &CnnEncoder) -> Result<Tensor, NeuralError> {
    check_input(s, len, p.filters.shape()[1] / p.window)?;
    let (out, _) = cnn_forward(s.data(), len, p);
    Tensor::from_vec(&[out.len()], out)
}

fn check_input(s: &Tensor, len: usize, width: usize) -> Result<(), NeuralError> {
    if len == 0 {
        return Err(NeuralError::EmptySequence);
    }
    if s.shape().len() != 2 || s.shape()[1] != width || s.shape()[0] < len {
        return Err(NeuralError::Shape(format!(
            "expected at least {len} rows of width {width}, got {:?}",
            s.shape()
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------- LSTM

struct LstmStep {
    t: usize,
    /// Activated gates i, f, o, g.
    gates: Vec<f64>,
    tanh_c: Vec<f64>,
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
}

fn lstm_run(x: &[f64], len: usize, d: usize, p: &LstmDirection, reverse: bool) -> (Vec<f64>, Vec<LstmStep>) {
    let h = p.hidden();
    let mut hs = vec![0.0; h];
    let mut cs = vec![0.0; h];
    let mut steps = Vec::with_capacity(len);
    for s in 0..len {
        let t = if reverse { len - 1 - s } else { s };
        let xt = &x[t * d..(t + 1) * d];
        let mut gates = vec![0.0; 4 * h];
        for (r, a) in gates.iter_mut().enumerate() {
            let pre = p.b.data()[r] + dot(p.w.row(r), xt) + dot(p.u.row(r), &hs);
            *a = if r < 3 * h { sigmoid(pre) } else { pre.tanh() };
        }
        let mut c = vec![0.0; h];
        let mut tanh_c = vec![0.0; h];
        let mut h_new = vec![0.0; h];
        for k in 0..h {
            c[k] = gates[h + k] * cs[k] + gates[k] * gates[3 * h + k];
            tanh_c[k] = c[k].tanh();
            h_new[k] = gates[2 * h + k] * tanh_c[k];
        }
        steps.push(LstmStep {
            t,
            gates,
            tanh_c,
            h_prev: std::mem::replace(&mut hs, h_new),
            c_prev: std::mem::replace(&mut cs, c),
        });
    }
    (hs, steps)
}

fn lstm_backprop(
    dh_last: &[f64],
    steps: &[LstmStep],
    x: &[f64],
    d: usize,
    p: &LstmDirection,
    g: &mut LstmDirection,
    dx: &mut [f64],
) {
    let h = p.hidden();
    let mut dh = dh_last.to_vec();
    let mut dc = vec![0.0; h];
    let mut da = vec![0.0; 4 * h];
    for st in steps.iter().rev() {
        let gt = &st.gates;
        for k in 0..h {
            let (i, f, o, gg) = (gt[k], gt[h + k], gt[2 * h + k], gt[3 * h + k]);
            let d_o = dh[k] * st.tanh_c[k];
            dc[k] += dh[k] * o * (1.0 - st.tanh_c[k] * st.tanh_c[k]);
            let di = dc[k] * gg;
            let dg = dc[k] * i;
            let df = dc[k] * st.c_prev[k];
            da[k] = di * i * (1.0 - i);
            da[h + k] = df * f * (1.0 - f);
            da[2 * h + k] = d_o * o * (1.0 - o);
            da[3 * h + k] = dg * (1.0 - gg * gg);
            dc[k] *= f;
        }
        let xt = &x[st.t * d..(st.t + 1) * d];
        let dxt = &mut dx[st.t * d..(st.t + 1) * d];
        let mut dh_prev = vec![0.0; h];
        for (r, &a) in da.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            axpy(g.w.row_mut(r), a, xt);
            axpy(g.u.row_mut(r), a, &st.h_prev);
            g.b.data_mut()[r] += a;
            axpy(dxt, a, p.w.row(r));
            axpy(&mut dh_prev, a, p.u.row(r));
        }
        dh = dh_prev;
    }
}

struct LstmCache {
    fwd: Vec<LstmStep>,
    bwd: Vec<LstmStep>,
}

fn lstm_forward(x: &[f64], len: usize, p: &LstmEncoder) -> (Vec<f64>, LstmCache) {
    let d = p.forward.w.shape()[1];
    let (hf, fwd) = lstm_run(x, len, d, &p.forward, false);
    let (hb, bwd) = lstm_run(x, len, d, &p.backward, true);
    let mut out = hf;
    out.extend(hb);
    (out, LstmCache { fwd, bwd })
}

fn lstm_backward(dout: &[f64], x: &[f64], len: usize, cache: &LstmCache, p: &LstmEncoder, g: &mut LstmEncoder) -> Vec<f64> {
    let d = p.forward.w.shape()[1];
    let h = p.forward.hidden();
    let mut dx = vec![0.0; len * d];
    lstm_backprop(&dout[..h], &cache.fwd, x, d, &p.forward, &mut g.forward, &mut dx);
    lstm_backprop(&dout[h..], &cache.bwd, x, d, &p.backward, &mut g.backward, &mut dx);
    dx
}

/// Left-to-right and right-to-left LSTMs over the first `len` rows of `s`;
/// returns `[h_fwd_last ; h_bwd_last]`.
pub fn bilstm_encode(s: &Tensor, len: usize, p: &LstmEncoder) -> Result<Tensor, NeuralError> {
    check_input(s, len, p.forward.w.shape()[1])?;
    let (out, _) = lstm_forward(s.data(), len, p);
    Tensor::from_vec(&[out.len()], out)
}

// ---------------------------------------------------------------- pair

enum EncCache {
    Cnn(CnnCache),
    Lstm(LstmCache),
}

fn encode(x: &[f64], len: usize, enc: &Encoder) -> (Vec<f64>, EncCache) {
    match enc {
        Encoder::Cnn(c) => {
            let (o, k) = cnn_forward(x, len, c);
            (o, EncCache::Cnn(k))
        }
        Encoder::Lstm(l) => {
            let (o, k) = lstm_forward(x, len, l);
            (o, EncCache::Lstm(k))
        }
    }
}

fn encode_backward(dout: &[f64], x: &[f64], len: usize, cache: &EncCache, enc: &Encoder, g: &mut Encoder) -> Vec<f64> {
    match (cache, enc, g) {
        (EncCache::Cnn(k), Encoder::Cnn(p), Encoder::Cnn(gp)) => cnn_backward(dout, k, p, gp),
        (EncCache::Lstm(k), Encoder::Lstm(p), Encoder::Lstm(gp)) => lstm_backward(dout, x, len, k, p, gp),
        _ => unreachable!("gradient bundle mirrors parameters"),
    }
}

pub(crate) struct ForwardCache {
    x1: Vec<f64>,
    x2: Vec<f64>,
    c1: EncCache,
    c2: EncCache,
    joint: Vec<f64>,
    z1: Vec<f64>,
    hidden: Vec<f64>,
    pub(crate) p: f64,
}

impl ForwardCache {
    /// Which piecewise-linear branch every ReLU and max-pool took; equal
    /// signatures mean the two forward passes lie on the same smooth piece.
    pub(crate) fn branch_signature(&self) -> Vec<usize> {
        let mut sig: Vec<usize> = self.z1.iter().map(|&z| usize::from(z > 0.0)).collect();
        for c in [&self.c1, &self.c2] {
            if let EncCache::Cnn(k) = c {
                sig.extend(k.argmax.iter().copied());
                sig.extend(k.zmax.iter().map(|&z| usize::from(z > 0.0)));
            }
        }
        sig
    }
}

impl PairClassifier {
    /// Branch signatures of every example (see [`ForwardCache`]).
    pub(crate) fn branch_signatures(&self, batch: &[PairExample]) -> Result<Vec<Vec<usize>>, NeuralError> {
        batch.iter().map(|e| Ok(self.forward(e)?.branch_signature())).collect()
    }

    pub(crate) fn forward(&self, ex: &PairExample) -> Result<ForwardCache, NeuralError> {
        if ex.a.is_empty() || ex.b.is_empty() {
            return Err(NeuralError::EmptySequence);
        }
        let v = self.embeddings.vocab_size();
        if let Some(&bad) = ex.a.tokens.iter().chain(&ex.b.tokens).find(|&&t| t >= v) {
            return Err(NeuralError::Shape(format!("token index {bad} outside vocabulary of {v}")));
        }
        let x1 = sentence_matrix(&ex.a, &self.embeddings);
        let x2 = sentence_matrix(&ex.b, &self.embeddings);
        let (e1, c1) = encode(&x1, ex.a.len(), &self.enc1);
        let (e2, c2) = encode(&x2, ex.b.len(), &self.enc2);
        let mut joint = e1;
        joint.extend(e2);
        let m = &self.mlp;
        let z1: Vec<f64> = (0..m.w1.shape()[0])
            .map(|r| m.b1.data()[r] + dot(m.w1.row(r), &joint))
            .collect();
        let hidden: Vec<f64> = z1.iter().map(|z| z.max(0.0)).collect();
        let z2 = m.b2.data()[0] + dot(m.w2.row(0), &hidden);
        Ok(ForwardCache {
            x1,
            x2,
            c1,
            c2,
            joint,
            z1,
            hidden,
            p: sigmoid(z2),
        })
    }

    /// Adds `scale · ∂L/∂θ` for `L = bce(p, y)` into `grads`.
    pub(crate) fn backward(&self, ex: &PairExample, cache: &ForwardCache, y: f64, scale: f64, grads: &mut PairClassifier) {
        let dz2 = scale * bce_grad(cache.p, y);
        if dz2 == 0.0 {
            return;
        }
        let m = &self.mlp;
        let gm = &mut grads.mlp;
        gm.b2.data_mut()[0] += dz2;
        axpy(gm.w2.row_mut(0), dz2, &cache.hidden);
        let mut djoint = vec![0.0; cache.joint.len()];
        for (r, &z) in cache.z1.iter().enumerate() {
            if z <= 0.0 {
                continue;
            }
            let dz = dz2 * m.w2.data()[r];
            gm.b1.data_mut()[r] += dz;
            axpy(gm.w1.row_mut(r), dz, &cache.joint);
            axpy(&mut djoint, dz, m.w1.row(r));
        }
        let e = self.enc1.output_dim();
        let dx1 = encode_backward(&djoint[..e], &cache.x1, ex.a.len(), &cache.c1, &self.enc1, &mut grads.enc1);
        let dx2 = encode_backward(&djoint[e..], &cache.x2, ex.b.len(), &cache.c2, &self.enc2, &mut grads.enc2);
        let dw = self.embeddings.words.shape()[1];
        let width = self.embeddings.width();
        for (q, dx) in [(&ex.a, dx1), (&ex.b, dx2)] {
            for (i, (&t, &b)) in q.tokens.iter().zip(&q.overlap).enumerate() {
                let row = &dx[i * width..(i + 1) * width];
                if t != PAD {
                    axpy(grads.embeddings.words.row_mut(t), 1.0, &row[..dw]);
                }
                axpy(grads.embeddings.overlap.row_mut(b as usize), 1.0, &row[dw..]);
            }
        }
    }

    /// Mean BCE and its gradient over a batch of labeled examples.
    pub fn loss_and_gradient(&self, batch: &[PairExample]) -> Result<(f64, PairClassifier), NeuralError> {
        let mut grads = self.zeros_like();
        let mut loss = 0.0;
        let scale = 1.0 / batch.len().max(1) as f64;
        for ex in batch {
            let y = label_value(ex)?;
            let cache = self.forward(ex)?;
            loss += bce_loss(cache.p, y);
            self.backward(ex, &cache, y, scale, &mut grads);
        }
        grads.embeddings.words.row_mut(PAD).fill(0.0);
        Ok((loss * scale, grads))
    }

    /// Mean BCE over a batch.
    pub fn loss(&self, batch: &[PairExample]) -> Result<f64, NeuralError> {
        let mut loss = 0.0;
        for ex in batch {
            loss += bce_loss(self.forward(ex)?.p, label_value(ex)?);
        }
        Ok(loss / batch.len().max(1) as f64)
    }
}

pub(crate) fn label_value(ex: &PairExample) -> Result<f64, NeuralError> {
    match ex.label {
        Some(true) => Ok(1.0),
        Some(false) => Ok(0.0),
        None => Err(NeuralError::Unlabeled),
    }
}

/// `−(y ln p + (1−y) ln(1−p))` with `p` clamped to `[1e-12, 1 − 1e-12]`.
pub fn bce_loss(p: f64, y: f64) -> f64 {
    let p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
    -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
}

pub fn mean_bce(ps: &[f64], ys: &[f64]) -> f64 {
    if ps.is_empty() {
        return 0.0;
    }
    ps.iter().zip(ys).map(|(&p, &y)| bce_loss(p, y)).sum::<f64>() / ps.len() as f64
}

/// `∂ bce / ∂ logit`: `p − y`, or 0 where the clamp is active.
fn bce_grad(p: f64, y: f64) -> f64 {
    if !(PROB_CLAMP..=1.0 - PROB_CLAMP).contains(&p) {
        0.0
    } else {
        p - y
    }
}

/// Probability that `p` is a positive pair.
pub fn forward_pair(p: &QuestionPair, model: &PairClassifier, vocab: &Vocabulary) -> Result<f64, NeuralError> {
    model.probability(&encode_pair(p, vocab, model.dims.max_len))
}
