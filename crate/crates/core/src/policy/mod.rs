//! Recurrent actor-critic over padded entity slates.
//!
//! Every entity (component, crew, global) becomes one feature row; a shared
//! two-layer encoder embeds rows, a presence-weighted mean pools them into
//! a context vector, and a gated recurrent cell carries episode memory.
//! Per-crew logits score crew-query x target-embedding pairs plus hold and
//! return biases; a scalar value head reads the memory. The whole forward
//! pass runs on the reverse-mode tape so training and inference share one
//! implementation.

pub mod checkpoint;

use rand::Rng;
use rand_chacha::ChaCha20Rng;

use crate::env::{CrewAction, DispatchState, JointAction};
use crate::error::{Error, Result};
use crate::feeder::mask::FeasibilityMask;
use crate::nn::{Tape, Tensor, MASKED_LOGIT};
use crate::rng::{stream, substream};

/// Fixed slate geometry and network width.
#[derive(Debug, Clone, PartialEq)]
pub struct SlateConfig {
    pub max_components: usize,
    pub max_crews: usize,
    pub hidden: usize,
    pub embed: usize,
    pub enc_hidden: usize,
    /// On slate overflow keep the top-K components by marginal value
    /// instead of erroring.
    pub keep_top: bool,
}

impl SlateConfig {
    pub fn new(max_components: usize, max_crews: usize) -> Self {
        SlateConfig {
            max_components,
            max_crews,
            hidden: 128,
            embed: 32,
            enc_hidden: 48,
            keep_top: true,
        }
    }

    /// Feature width: 3 type-tag dims + 7 payload dims + per-crew travel
    /// (components) / crew one-hot (crews).
    pub fn feat_width(&self) -> usize {
        10 + self.max_crews
    }

    pub fn n_rows(&self) -> usize {
        self.max_components + self.max_crews + 1
    }

    /// Actions per crew: component slots plus hold and return.
    pub fn n_actions(&self) -> usize {
        self.max_components + 2
    }
}

/// Recurrent memory, one per episode; starts at zero.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryState {
    pub h: Vec<f64>,
}

impl MemoryState {
    pub fn zeros(hidden: usize) -> Self {
        MemoryState {
            h: vec![0.0; hidden],
        }
    }
}

/// Feature tensor plus the slot bookkeeping needed to act on it.
#[derive(Debug, Clone)]
pub struct EncodedState {
    pub rows: Tensor,
    /// Pooling weights (1 for real rows, 0 for padding), normalized.
    pub pool: Vec<f64>,
    /// Slot -> index into `state.components`.
    pub slots: Vec<usize>,
    /// Slot -> feeder branch index (parallel to `slots`).
    pub slot_branches: Vec<usize>,
    /// Crew roster ids covered by the crew rows, in order.
    pub crews: Vec<usize>,
}

const TRAVEL_SCALE_H: f64 = 4.0;
const TRAVEL_CLAMP: f64 = 3.0;
const REPAIR_SCALE_H: f64 = 12.0;
const COORD_SCALE_KM: f64 = 25.0;

/// Lays the dispatch state out on the fixed slate. Components are kept in
/// ascending branch order; on overflow the top-K by marginal value are
/// kept when configured, otherwise this errors.
pub fn encode_state(state: &DispatchState, slate: &SlateConfig) -> Result<EncodedState> {
    if state.crews.len() > slate.max_crews {
        return Err(Error::Contract(format!(
            "{} crews exceed the slate's {}",
            state.crews.len(),
            slate.max_crews
        )));
    }
    let mut slots: Vec<usize> = (0..state.components.len()).collect();
    if slots.len() > slate.max_components {
        if !slate.keep_top {
            return Err(Error::Contract(format!(
                "slate overflow: {} components exceed {}",
                slots.len(),
                slate.max_components
            )));
        }
        slots.sort_by(|a, b| {
            state.components[*b]
                .value_kw_per_h
                .total_cmp(&state.components[*a].value_kw_per_h)
                .then(a.cmp(b))
        });
        slots.truncate(slate.max_components);
        slots.sort_unstable();
    }

    let f = slate.feat_width();
    let mut rows = Tensor::zeros(slate.n_rows(), f);
    let mut pool = vec![0.0; slate.n_rows()];

    for (slot, &ci) in slots.iter().enumerate() {
        let comp = &state.components[ci];
        let r = slot;
        pool[r] = 1.0;
        rows.set(r, 0, 1.0); // type: component
        rows.set(r, 3, 1.0); // present
        rows.set(r, 4, (comp.repair_h / REPAIR_SCALE_H).min(TRAVEL_CLAMP));
        let min_travel = comp.travel_h.iter().fold(f64::INFINITY, |a, b| a.min(*b));
        rows.set(r, 5, norm_travel(min_travel));
        rows.set(r, 6, comp.value_kw_per_h / state.total_load_kw.max(1.0));
        rows.set(r, 7, comp.restores_critical as u8 as f64);
        rows.set(r, 8, comp.claimed_by.is_some() as u8 as f64);
        rows.set(r, 9, 0.0);
        for (k, t) in comp.travel_h.iter().enumerate() {
            rows.set(r, 10 + k, norm_travel(*t));
        }
    }

    let crew_base = slate.max_components;
    for (k, crew) in state.crews.iter().enumerate() {
        let r = crew_base + k;
        pool[r] = 1.0;
        rows.set(r, 1, 1.0); // type: crew
        rows.set(r, 3, 1.0);
        rows.set(r, 4, crew.available as u8 as f64);
        rows.set(r, 5, crew.on_duty as u8 as f64);
        rows.set(r, 6, crew.x_km / COORD_SCALE_KM);
        rows.set(r, 7, crew.y_km / COORD_SCALE_KM);
        rows.set(r, 8, crew.remaining_shift_h / REPAIR_SCALE_H);
        rows.set(r, 9, crew.speed_kmh / 60.0);
        rows.set(r, 10 + k, 1.0); // identity one-hot
    }

    let g = slate.n_rows() - 1;
    pool[g] = 1.0;
    rows.set(g, 2, 1.0); // type: global
    rows.set(g, 3, 1.0);
    let tod = state.time_of_day_h / 24.0 * std::f64::consts::TAU;
    rows.set(g, 4, tod.sin());
    rows.set(g, 5, tod.cos());
    rows.set(g, 6, state.total_unserved_kw / state.total_load_kw.max(1.0));
    rows.set(g, 7, state.critical_unserved_kw / state.total_load_kw.max(1.0));
    rows.set(g, 8, state.clock_h / state.horizon_h.max(1e-9));
    rows.set(g, 9, state.rho_now);

    let total: f64 = pool.iter().sum();
    for w in pool.iter_mut() {
        *w /= total;
    }
    let slot_branches = slots.iter().map(|&ci| state.components[ci].branch).collect();
    Ok(EncodedState {
        rows,
        pool,
        slots,
        slot_branches,
        crews: state.crews.iter().map(|c| c.crew).collect(),
    })
}

fn norm_travel(t: f64) -> f64 {
    if t.is_finite() {
        (t / TRAVEL_SCALE_H).min(TRAVEL_CLAMP)
    } else {
        TRAVEL_CLAMP
    }
}

/// Actor and critic weights as named tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    pub slate: SlateConfig,
    pub enc_w1: Tensor,
    pub enc_b1: Tensor,
    pub enc_w2: Tensor,
    pub enc_b2: Tensor,
    pub gru_wr: Tensor,
    pub gru_ur: Tensor,
    pub gru_br: Tensor,
    pub gru_wz: Tensor,
    pub gru_uz: Tensor,
    pub gru_bz: Tensor,
    pub gru_wn: Tensor,
    pub gru_un: Tensor,
    pub gru_bn: Tensor,
    pub head_wt: Tensor,
    pub head_bt: Tensor,
    pub head_wq: Tensor,
    pub head_bq: Tensor,
    pub hold_w: Tensor,
    pub hold_b: Tensor,
    pub ret_w: Tensor,
    pub ret_b: Tensor,
    pub val_w: Tensor,
    pub val_b: Tensor,
}

macro_rules! for_each_tensor {
    ($self:ident, $f:expr) => {{
        let mut f = $f;
        f("enc.w1", &$self.enc_w1);
        f("enc.b1", &$self.enc_b1);
        f("enc.w2", &$self.enc_w2);
        f("enc.b2", &$self.enc_b2);
        f("gru.wr", &$self.gru_wr);
        f("gru.ur", &$self.gru_ur);
        f("gru.br", &$self.gru_br);
        f("gru.wz", &$self.gru_wz);
        f("gru.uz", &$self.gru_uz);
        f("gru.bz", &$self.gru_bz);
        f("gru.wn", &$self.gru_wn);
        f("gru.un", &$self.gru_un);
        f("gru.bn", &$self.gru_bn);
        f("head.wt", &$self.head_wt);
        f("head.bt", &$self.head_bt);
        f("head.wq", &$self.head_wq);
        f("head.bq", &$self.head_bq);
        f("hold.w", &$self.hold_w);
        f("hold.b", &$self.hold_b);
        f("ret.w", &$self.ret_w);
        f("ret.b", &$self.ret_b);
        f("val.w", &$self.val_w);
        f("val.b", &$self.val_b);
    }};
}

impl PolicyParams {
    /// Orthogonal-style seeded initialization; value head and action
    /// biases start near zero.
    pub fn init(slate: SlateConfig, seed: u64) -> Self {
        let mut rng = substream(seed, stream::POLICY_INIT);
        let f = slate.feat_width();
        let (h1, e, h) = (slate.enc_hidden, slate.embed, slate.hidden);
        let d = e; // score projection width
        PolicyParams {
            slate,
            enc_w1: orthogonal(f, h1, 1.0, &mut rng),
            enc_b1: Tensor::zeros(1, h1),
            enc_w2: orthogonal(h1, e, 1.0, &mut rng),
            enc_b2: Tensor::zeros(1, e),
            gru_wr: orthogonal(e, h, 1.0, &mut rng),
            gru_ur: orthogonal(h, h, 1.0, &mut rng),
            gru_br: Tensor::zeros(1, h),
            gru_wz: orthogonal(e, h, 1.0, &mut rng),
            gru_uz: orthogonal(h, h, 1.0, &mut rng),
            gru_bz: Tensor::zeros(1, h),
            gru_wn: orthogonal(e, h, 1.0, &mut rng),
            gru_un: orthogonal(h, h, 1.0, &mut rng),
            gru_bn: Tensor::zeros(1, h),
            head_wt: orthogonal(e, d, 1.0, &mut rng),
            head_bt: Tensor::zeros(1, d),
            head_wq: orthogonal(e + h, d, 1.0, &mut rng),
            head_bq: Tensor::zeros(1, d),
            hold_w: orthogonal(e + h, 1, 0.01, &mut rng),
            hold_b: Tensor::zeros(1, 1),
            ret_w: orthogonal(e + h, 1, 0.01, &mut rng),
            ret_b: Tensor::zeros(1, 1),
            val_w: orthogonal(h, 1, 0.01, &mut rng),
            val_b: Tensor::zeros(1, 1),
        }
    }

    pub fn zeros(slate: SlateConfig) -> Self {
        let f = slate.feat_width();
        let (h1, e, h) = (slate.enc_hidden, slate.embed, slate.hidden);
        let d = e;
        PolicyParams {
            enc_w1: Tensor::zeros(f, h1),
            enc_b1: Tensor::zeros(1, h1),
            enc_w2: Tensor::zeros(h1, e),
            enc_b2: Tensor::zeros(1, e),
            gru_wr: Tensor::zeros(e, h),
            gru_ur: Tensor::zeros(h, h),
            gru_br: Tensor::zeros(1, h),
            gru_wz: Tensor::zeros(e, h),
            gru_uz: Tensor::zeros(h, h),
            gru_bz: Tensor::zeros(1, h),
            gru_wn: Tensor::zeros(e, h),
            gru_un: Tensor::zeros(h, h),
            gru_bn: Tensor::zeros(1, h),
            head_wt: Tensor::zeros(e, d),
            head_bt: Tensor::zeros(1, d),
            head_wq: Tensor::zeros(e + h, d),
            head_bq: Tensor::zeros(1, d),
            hold_w: Tensor::zeros(e + h, 1),
            hold_b: Tensor::zeros(1, 1),
            ret_w: Tensor::zeros(e + h, 1),
            ret_b: Tensor::zeros(1, 1),
            val_w: Tensor::zeros(h, 1),
            val_b: Tensor::zeros(1, 1),
            slate,
        }
    }

    pub fn tensor_names() -> &'static [&'static str] {
        &[
            "enc.w1", "enc.b1", "enc.w2", "enc.b2", "gru.wr", "gru.ur", "gru.br", "gru.wz",
            "gru.uz", "gru.bz", "gru.wn", "gru.un", "gru.bn", "head.wt", "head.bt", "head.wq",
            "head.bq", "hold.w", "hold.b", "ret.w", "ret.b", "val.w", "val.b",
        ]
    }

    pub fn tensors(&self) -> Vec<(&'static str, &Tensor)> {
        let mut out = Vec::with_capacity(23);
        for_each_tensor!(self, |name, t| out.push((name, t)));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(&'static str, &mut Tensor)> {
        vec![
            ("enc.w1", &mut self.enc_w1),
            ("enc.b1", &mut self.enc_b1),
            ("enc.w2", &mut self.enc_w2),
            ("enc.b2", &mut self.enc_b2),
            ("gru.wr", &mut self.gru_wr),
            ("gru.ur", &mut self.gru_ur),
            ("gru.br", &mut self.gru_br),
            ("gru.wz", &mut self.gru_wz),
            ("gru.uz", &mut self.gru_uz),
            ("gru.bz", &mut self.gru_bz),
            ("gru.wn", &mut self.gru_wn),
            ("gru.un", &mut self.gru_un),
            ("gru.bn", &mut self.gru_bn),
            ("head.wt", &mut self.head_wt),
            ("head.bt", &mut self.head_bt),
            ("head.wq", &mut self.head_wq),
            ("head.bq", &mut self.head_bq),
            ("hold.w", &mut self.hold_w),
            ("hold.b", &mut self.hold_b),
            ("ret.w", &mut self.ret_w),
            ("ret.b", &mut self.ret_b),
            ("val.w", &mut self.val_w),
            ("val.b", &mut self.val_b),
        ]
    }

    pub fn n_weights(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|(_, t)| t.data.iter().all(|v| v.is_finite()))
    }
}

/// Seeded Gaussian matrix with modified Gram-Schmidt orthonormalization of
/// the smaller dimension, scaled by `gain`.
fn orthogonal(rows: usize, cols: usize, gain: f64, rng: &mut ChaCha20Rng) -> Tensor {
    use rand_distr::StandardNormal;
    let mut m: Vec<Vec<f64>> = (0..rows.max(cols))
        .map(|_| (0..rows.min(cols)).map(|_| rng.sample(StandardNormal)).collect())
        .collect();
    // Orthonormalize the short-dimension vectors.
    for i in 0..m.len() {
        for j in 0..i {
            let dot: f64 = m[i].iter().zip(&m[j]).map(|(a, b)| a * b).sum();
            let nj: f64 = m[j].iter().map(|v| v * v).sum();
            if nj > 0.0 {
                let c = dot / nj;
                let mj = m[j].clone();
                for (v, w) in m[i].iter_mut().zip(mj) {
                    *v -= c * w;
                }
            }
        }
    }
    for v in m.iter_mut() {
        let n: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-12 {
            for x in v.iter_mut() {
                *x = *x / n * gain;
            }
        }
    }
    let mut t = Tensor::zeros(rows, cols);
    for r in 0..rows {
        for c in 0..cols {
            t.set(r, c, if rows >= cols { m[r][c] } else { m[c][r] });
        }
    }
    t
}

/// Tape handles for one forward pass; reused across an episode unroll.
pub struct TapeParams {
    pub ids: Vec<crate::nn::NodeId>,
}

impl TapeParams {
    pub fn insert(tape: &mut Tape, params: &PolicyParams) -> Self {
        let mut ids = Vec::with_capacity(23);
        for (_, t) in params.tensors() {
            ids.push(tape.leaf(t.clone()));
        }
        TapeParams { ids }
    }

    fn g(&self, i: usize) -> crate::nn::NodeId {
        self.ids[i]
    }
}

/// Node ids of one step's outputs.
pub struct ForwardNodes {
    /// Raw (pre-mask) logits per crew row, each (1, n_actions).
    pub crew_logits: Vec<crate::nn::NodeId>,
    pub value: crate::nn::NodeId,
    pub memory: crate::nn::NodeId,
}

// Tensor indices inside TapeParams (order of tensor_names).
const ENC_W1: usize = 0;
const ENC_B1: usize = 1;
const ENC_W2: usize = 2;
const ENC_B2: usize = 3;
const GRU_WR: usize = 4;
const GRU_UR: usize = 5;
const GRU_BR: usize = 6;
const GRU_WZ: usize = 7;
const GRU_UZ: usize = 8;
const GRU_BZ: usize = 9;
const GRU_WN: usize = 10;
const GRU_UN: usize = 11;
const GRU_BN: usize = 12;
const HEAD_WT: usize = 13;
const HEAD_BT: usize = 14;
const HEAD_WQ: usize = 15;
const HEAD_BQ: usize = 16;
const HOLD_W: usize = 17;
const HOLD_B: usize = 18;
const RET_W: usize = 19;
const RET_B: usize = 20;
const VAL_W: usize = 21;
const VAL_B: usize = 22;

/// One recurrent step on the tape: embeds the slate, updates memory, and
/// produces per-crew logits and the value.
pub fn forward_on_tape(
    tape: &mut Tape,
    p: &TapeParams,
    slate: &SlateConfig,
    encoded: &EncodedState,
    memory: crate::nn::NodeId,
) -> ForwardNodes {
    let rows = tape.leaf(encoded.rows.clone());
    let a1 = tape.matmul(rows, p.g(ENC_W1));
    let a1 = tape.add_row_broadcast(a1, p.g(ENC_B1));
    let a1 = tape.tanh(a1);
    let emb = tape.matmul(a1, p.g(ENC_W2));
    let emb = tape.add_row_broadcast(emb, p.g(ENC_B2));
    let emb = tape.tanh(emb);

    let ctx = tape.weighted_mean_rows(emb, encoded.pool.clone());

    // Gated recurrent cell.
    let xr = tape.matmul(ctx, p.g(GRU_WR));
    let hr = tape.matmul(memory, p.g(GRU_UR));
    let r = tape.add(xr, hr);
    let r = tape.add_row_broadcast(r, p.g(GRU_BR));
    let r = tape.sigmoid(r);
    let xz = tape.matmul(ctx, p.g(GRU_WZ));
    let hz = tape.matmul(memory, p.g(GRU_UZ));
    let z = tape.add(xz, hz);
    let z = tape.add_row_broadcast(z, p.g(GRU_BZ));
    let z = tape.sigmoid(z);
    let xn = tape.matmul(ctx, p.g(GRU_WN));
    let rh = tape.mul(r, memory);
    let hn = tape.matmul(rh, p.g(GRU_UN));
    let n = tape.add(xn, hn);
    let n = tape.add_row_broadcast(n, p.g(GRU_BN));
    let n = tape.tanh(n);
    let one_minus_z = tape.scale(z, -1.0);
    let one_minus_z = tape.add_const(one_minus_z, 1.0);
    let keep = tape.mul(one_minus_z, memory);
    let update = tape.mul(z, n);
    let h_next = tape.add(keep, update);

    // Target projections over the component slots.
    let t_proj = tape.matmul(emb, p.g(HEAD_WT));
    let t_proj = tape.add_row_broadcast(t_proj, p.g(HEAD_BT));

    let scale = 1.0 / (slate.embed as f64).sqrt();
    let mut crew_logits = Vec::with_capacity(encoded.crews.len());
    for k in 0..encoded.crews.len() {
        let crew_row = tape.row(emb, slate.max_components + k);
        let eh = tape.concat_cols(&[crew_row, h_next]);
        let q = tape.matmul(eh, p.g(HEAD_WQ));
        let q = tape.add_row_broadcast(q, p.g(HEAD_BQ));
        // (1, D) x (K_c, D)^T -> (1, K_c) over the component slots only.
        let t_comp = tape.rows_slice(t_proj, 0, slate.max_components);
        let scores = tape.matmul_t(q, t_comp);
        let scores = tape.scale(scores, scale);
        let hold = tape.matmul(eh, p.g(HOLD_W));
        let hold = tape.add(hold, p.g(HOLD_B));
        let ret = tape.matmul(eh, p.g(RET_W));
        let ret = tape.add(ret, p.g(RET_B));
        let logits = tape.concat_cols(&[scores, hold, ret]);
        crew_logits.push(logits);
    }

    let v = tape.matmul(h_next, p.g(VAL_W));
    let value = tape.add(v, p.g(VAL_B));

    ForwardNodes {
        crew_logits,
        value,
        memory: h_next,
    }
}

/// Plain forward pass: per-crew raw logits, value estimate, next memory.
pub fn forward(
    params: &PolicyParams,
    encoded: &EncodedState,
    memory: &MemoryState,
) -> Result<(Vec<Vec<f64>>, f64, MemoryState)> {
    if memory.h.len() != params.slate.hidden {
        return Err(Error::Contract(format!(
            "memory width {} != hidden {}",
            memory.h.len(),
            params.slate.hidden
        )));
    }
    if encoded.rows.rows != params.slate.n_rows()
        || encoded.rows.cols != params.slate.feat_width()
    {
        return Err(Error::Contract("encoded state shape mismatch".into()));
    }
    let mut tape = Tape::new();
    let p = TapeParams::insert(&mut tape, params);
    let mem = tape.leaf(Tensor::from_vec(1, memory.h.len(), memory.h.clone()));
    let out = forward_on_tape(&mut tape, &p, &params.slate, encoded, mem);
    let logits = out
        .crew_logits
        .iter()
        .map(|id| tape.value(*id).data.clone())
        .collect();
    let value = tape.value(out.value).item();
    let next = MemoryState {
        h: tape.value(out.memory).data.clone(),
    };
    Ok((logits, value, next))
}

/// Blocked entries get the most-negative finite sentinel; feasible entries
/// pass through unchanged.
pub fn apply_mask(logits: &[f64], allow: &[bool]) -> Result<Vec<f64>> {
    if logits.len() != allow.len() {
        return Err(Error::Contract(format!(
            "mask width {} != logits {}",
            allow.len(),
            logits.len()
        )));
    }
    if !allow.iter().any(|a| *a) {
        return Err(Error::Contract("all entries masked for a crew".into()));
    }
    Ok(logits
        .iter()
        .zip(allow)
        .map(|(l, a)| if *a { *l } else { MASKED_LOGIT })
        .collect())
}

fn log_softmax_masked(logits: &[f64], allow: &[bool]) -> Vec<f64> {
    let mut mx = f64::NEG_INFINITY;
    for (l, a) in logits.iter().zip(allow) {
        if *a && *l > mx {
            mx = *l;
        }
    }
    let mut lse = 0.0;
    for (l, a) in logits.iter().zip(allow) {
        if *a {
            lse += (l - mx).exp();
        }
    }
    let lse = mx + lse.ln();
    logits
        .iter()
        .zip(allow)
        .map(|(l, a)| if *a { l - lse } else { MASKED_LOGIT })
        .collect()
}

/// Selection mode at decision time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SelectMode {
    Sample,
    Greedy,
    Temperature(f64),
}

/// Per-crew categorical distributions after masking, with the bookkeeping
/// PPO needs to recompute ratios exactly.
#[derive(Debug, Clone)]
pub struct ActionDistribution {
    /// Crew roster ids in selection order.
    pub crews: Vec<usize>,
    /// Masked logits per crew (sentinel on blocked entries).
    pub masked_logits: Vec<Vec<f64>>,
    /// Normalized probabilities per crew.
    pub probs: Vec<Vec<f64>>,
    /// Effective masks (including sequential claim exclusions).
    pub masks: Vec<Vec<bool>>,
    /// Chosen action index per crew.
    pub chosen: Vec<usize>,
    /// Sum of per-crew log-probs of the chosen entries.
    pub joint_log_prob: f64,
    /// Sum of per-crew entropies.
    pub entropy: f64,
}

/// Samples/argmaxes a joint action crew by crew (ascending roster order).
/// Once a crew picks a component slot, later crews see it masked, which
/// enforces one-crew-per-component at selection time; the effective masks
/// are returned for exact recomputation.
pub fn select_action(
    raw_logits: &[Vec<f64>],
    mask: &FeasibilityMask,
    encoded: &EncodedState,
    slate: &SlateConfig,
    mode: SelectMode,
    rng: &mut ChaCha20Rng,
) -> Result<(JointAction, ActionDistribution)> {
    if let SelectMode::Temperature(t) = mode {
        if t <= 0.0 {
            return Err(Error::ParamDomain(format!(
                "temperature must be > 0, got {t}"
            )));
        }
    }
    let n_actions = slate.n_actions();
    let hold = slate.max_components;
    let ret = slate.max_components + 1;
    let mut dist = ActionDistribution {
        crews: Vec::new(),
        masked_logits: Vec::new(),
        probs: Vec::new(),
        masks: Vec::new(),
        chosen: Vec::new(),
        joint_log_prob: 0.0,
        entropy: 0.0,
    };
    let mut entries = Vec::new();
    let mut claimed: Vec<usize> = Vec::new();
    for (k, crew_id) in encoded.crews.iter().enumerate() {
        let row = &mask.rows[*crew_id];
        if !row.available {
            continue;
        }
        // Slate-level mask: translate component-list entries to slots and
        // exclude slots claimed earlier in this joint action.
        let mut allow = vec![false; n_actions];
        for (slot, &ci) in encoded.slots.iter().enumerate() {
            allow[slot] = row.allow[ci] && !claimed.contains(&slot);
        }
        allow[hold] = true;
        allow[ret] = row.allow[mask.return_index()];
        let logits = &raw_logits[k];
        let scaled: Vec<f64> = match mode {
            SelectMode::Temperature(t) => logits.iter().map(|l| l / t).collect(),
            _ => logits.clone(),
        };
        let masked = apply_mask(&scaled, &allow)?;
        let logp = log_softmax_masked(&masked, &allow);
        let probs: Vec<f64> = logp
            .iter()
            .zip(&allow)
            .map(|(lp, a)| if *a { lp.exp() } else { 0.0 })
            .collect();
        let choice = match mode {
            SelectMode::Greedy => {
                let mut best = hold;
                let mut best_p = f64::NEG_INFINITY;
                for (i, (p, a)) in probs.iter().zip(&allow).enumerate() {
                    if *a && *p > best_p {
                        best = i;
                        best_p = *p;
                    }
                }
                best
            }
            _ => {
                let u: f64 = rng.gen();
                let mut acc = 0.0;
                let mut pick = hold;
                for (i, (p, a)) in probs.iter().zip(&allow).enumerate() {
                    if *a {
                        acc += p;
                        if u < acc {
                            pick = i;
                            break;
                        }
                    }
                }
                if u >= acc {
                    // numeric tail: last feasible entry
                    pick = (0..n_actions).rev().find(|i| allow[*i]).unwrap();
                }
                pick
            }
        };
        let action = if choice == hold {
            CrewAction::Hold
        } else if choice == ret {
            CrewAction::Return
        } else {
            claimed.push(choice);
            CrewAction::Assign(encoded_branch(encoded, choice))
        };
        entries.push((*crew_id, action));
        dist.joint_log_prob += logp[choice];
        dist.entropy += -probs
            .iter()
            .zip(&logp)
            .zip(&allow)
            .map(|((p, lp), a)| if *a && *p > 0.0 { p * lp } else { 0.0 })
            .sum::<f64>();
        dist.crews.push(*crew_id);
        dist.masked_logits.push(masked);
        dist.probs.push(probs);
        dist.masks.push(allow);
        dist.chosen.push(choice);
    }
    Ok((JointAction { entries }, dist))
}

fn encoded_branch(encoded: &EncodedState, slot: usize) -> usize {
    encoded.slot_branches[slot]
}
