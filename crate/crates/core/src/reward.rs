//! Bradley-Terry reward learning.
//!
//! A small tanh MLP maps `(normalized features ‖ one-hot action)` to a scalar
//! reward. The probability that `seg1` is preferred is the logistic of the
//! difference of summed rewards; training minimizes the soft-label
//! cross-entropy with momentum SGD.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::envs::EnvSpec;
use crate::model::{ActionRec, PreferenceQuery, ReplayBuffer, Segment, State};

pub const HIDDEN: [usize; 2] = [64, 64];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RewardError {
    #[error("no labeled preferences to train on")]
    NoLabeledData,
    #[error("empty batch")]
    EmptyBatch,
    #[error("query {0} has no label")]
    Unlabeled(u64),
    #[error("ensemble must have at least one member")]
    EmptyEnsemble,
    #[error("invalid checkpoint: {0}")]
    Checkpoint(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub momentum: f64,
    pub batch: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            lr: 1e-3,
            momentum: 0.9,
            batch: 32,
        }
    }
}

/// Feed-forward reward approximator with flat parameter storage.
#[derive(Clone, Debug, PartialEq)]
pub struct RewardNet {
    sizes: Vec<usize>,
    feature_scale: Vec<f64>,
    action_count: usize,
    params: Vec<f64>,
}

/// Per-step forward activations kept for backprop.
struct Trace {
    acts: Vec<Vec<f64>>,
}

fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

impl RewardNet {
    /// Standard architecture for an environment: `[input, 64, 64, 1]`.
    pub fn for_env<R: Rng + ?Sized>(env: &EnvSpec, rng: &mut R) -> Self {
        Self::with_hidden(env.feature_scale.clone(), env.action_count, &HIDDEN, rng)
    }

    /// Uniform(±1/√fan_in) weights, zero biases, zero output layer.
    pub fn with_hidden<R: Rng + ?Sized>(
        feature_scale: Vec<f64>,
        action_count: usize,
        hidden: &[usize],
        rng: &mut R,
    ) -> Self {
        let mut sizes = vec![feature_scale.len() + action_count];
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        let mut params = Vec::new();
        let layers = sizes.len() - 1;
        for l in 0..layers {
            let (fan_in, fan_out) = (sizes[l], sizes[l + 1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            for _ in 0..fan_in * fan_out {
                params.push(if l + 1 == layers {
                    0.0
                } else {
                    rng.gen_range(-bound..=bound)
                });
            }
            params.extend(std::iter::repeat(0.0).take(fan_out));
        }
        Self {
            sizes,
            feature_scale,
            action_count,
            params,
        }
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    /// Offsets of each layer's weight block and bias block.
    fn offsets(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.sizes.len() - 1);
        let mut at = 0;
        for l in 0..self.sizes.len() - 1 {
            let w = at;
            let b = w + self.sizes[l] * self.sizes[l + 1];
            at = b + self.sizes[l + 1];
            out.push((w, b));
        }
        out
    }

    pub fn encode(&self, state: &State, action: ActionRec) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.input_dim());
        x.extend(
            state
                .features
                .iter()
                .zip(&self.feature_scale)
                .map(|(f, s)| if *s != 0.0 { f / s } else { *f }),
        );
        x.extend((0..self.action_count).map(|a| if a == action.action_id { 1.0 } else { 0.0 }));
        x
    }

    fn forward_trace(&self, x: &[f64]) -> (f64, Trace) {
        let offs = self.offsets();
        let layers = offs.len();
        let mut acts = Vec::with_capacity(layers + 1);
        acts.push(x.to_vec());
        for (l, &(w, b)) in offs.iter().enumerate() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let input = &acts[l];
            let mut out = Vec::with_capacity(n_out);
            for o in 0..n_out {
                let row = &self.params[w + o * n_in..w + (o + 1) * n_in];
                let mut z = self.params[b + o];
                for (wi, xi) in row.iter().zip(input) {
                    z += wi * xi;
                }
                out.push(if l + 1 < layers { z.tanh() } else { z });
            }
            acts.push(out);
        }
        let y = acts[layers][0];
        (y, Trace { acts })
    }

    pub fn forward(&self, x: &[f64]) -> f64 {
        self.forward_trace(x).0
    }

    pub fn reward(&self, state: &State, action: ActionRec) -> f64 {
        self.forward(&self.encode(state, action))
    }

    /// Adds `scale · ∂output/∂params` to `grad`.
    fn backward(&self, trace: &Trace, scale: f64, grad: &mut [f64]) {
        let offs = self.offsets();
        let layers = offs.len();
        let mut delta = vec![scale];
        for l in (0..layers).rev() {
            let (w, b) = offs[l];
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let input = &trace.acts[l];
            for o in 0..n_out {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                grad[b + o] += d;
                let g = &mut grad[w + o * n_in..w + (o + 1) * n_in];
                for (gi, xi) in g.iter_mut().zip(input) {
                    *gi += d * xi;
                }
            }
            if l == 0 {
                break;
            }
            let mut prev = vec![0.0; n_in];
            for o in 0..n_out {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                let row = &self.params[w + o * n_in..w + (o + 1) * n_in];
                for (p, wi) in prev.iter_mut().zip(row) {
                    *p += d * wi;
                }
            }
            for (p, h) in prev.iter_mut().zip(input) {
                *p *= 1.0 - h * h;
            }
            delta = prev;
        }
    }

    pub fn segment_return(&self, seg: &Segment) -> f64 {
        seg.steps.iter().map(|(s, a)| self.reward(s, *a)).sum()
    }
}

/// `P[seg1 ≻ seg0]` under the Bradley-Terry model.
pub fn predict_preference(net: &RewardNet, seg0: &Segment, seg1: &Segment) -> f64 {
    logistic(net.segment_return(seg1) - net.segment_return(seg0))
}

/// Cross-entropy of one soft label given the return gap `z = R¹ − R⁰`.
fn pair_loss(z: f64, label: f64) -> f64 {
    // −[Λ log σ(z) + (1 − Λ) log σ(−z)]
    label * softplus(-z) + (1.0 - label) * softplus(z)
}

/// Mean Bradley-Terry loss over labeled queries.
pub fn bt_loss(net: &RewardNet, batch: &[PreferenceQuery]) -> Result<f64, RewardError> {
    if batch.is_empty() {
        return Err(RewardError::EmptyBatch);
    }
    let mut total = 0.0;
    for q in batch {
        let label = q.label.ok_or(RewardError::Unlabeled(q.query_id))?.value();
        let z = net.segment_return(&q.seg1) - net.segment_return(&q.seg0);
        total += pair_loss(z, label);
    }
    Ok(total / batch.len() as f64)
}

/// Labeled pairs over a table of distinct encoded inputs. Identical
/// `(state, action)` rows are stored once, so each distinct row costs one
/// forward and one backward pass per minibatch however often it occurs.
struct Dataset {
    inputs: Vec<Vec<f64>>,
    pairs: Vec<IndexedPair>,
}

struct IndexedPair {
    seg0: Vec<usize>,
    seg1: Vec<usize>,
    label: f64,
}

impl Dataset {
    fn build(net: &RewardNet, batch: &[PreferenceQuery]) -> Result<Self, RewardError> {
        let mut inputs = Vec::new();
        let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
        let mut intern = |x: Vec<f64>| {
            let key: Vec<u64> = x.iter().map(|v| v.to_bits()).collect();
            *index.entry(key).or_insert_with(|| {
                inputs.push(x);
                inputs.len() - 1
            })
        };
        let mut pairs = Vec::with_capacity(batch.len());
        for q in batch {
            let label = q.label.ok_or(RewardError::Unlabeled(q.query_id))?.value();
            let seg0 = q.seg0.steps.iter().map(|(s, a)| intern(net.encode(s, *a))).collect();
            let seg1 = q.seg1.steps.iter().map(|(s, a)| intern(net.encode(s, *a))).collect();
            pairs.push(IndexedPair { seg0, seg1, label });
        }
        Ok(Self { inputs, pairs })
    }

    /// Mean loss over all pairs.
    fn loss(&self, net: &RewardNet) -> f64 {
        let out: Vec<f64> = self.inputs.iter().map(|x| net.forward(x)).collect();
        let total: f64 = self
            .pairs
            .iter()
            .map(|p| pair_loss(gap(p, &out), p.label))
            .sum();
        total / self.pairs.len() as f64
    }

    /// Mean loss over `batch` (pair indices) and its gradient.
    fn loss_and_grad(&self, net: &RewardNet, batch: &[usize], grad: &mut [f64]) -> f64 {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut used: Vec<usize> = batch
            .iter()
            .flat_map(|&i| self.pairs[i].seg0.iter().chain(&self.pairs[i].seg1).copied())
            .collect();
        used.sort_unstable();
        used.dedup();
        let mut out = vec![0.0; self.inputs.len()];
        let mut traces: Vec<Option<Trace>> = (0..self.inputs.len()).map(|_| None).collect();
        for &u in &used {
            let (y, tr) = net.forward_trace(&self.inputs[u]);
            out[u] = y;
            traces[u] = Some(tr);
        }
        // ∂loss/∂output for each distinct input.
        let mut coef = vec![0.0; self.inputs.len()];
        let inv = 1.0 / batch.len() as f64;
        let mut loss = 0.0;
        for &i in batch {
            let p = &self.pairs[i];
            let z = gap(p, &out);
            loss += pair_loss(z, p.label) * inv;
            let dz = (logistic(z) - p.label) * inv;
            for &u in &p.seg1 {
                coef[u] += dz;
            }
            for &u in &p.seg0 {
                coef[u] -= dz;
            }
        }
        for &u in &used {
            if coef[u] != 0.0 {
                if let Some(tr) = &traces[u] {
                    net.backward(tr, coef[u], grad);
                }
            }
        }
        loss
    }
}

fn gap(p: &IndexedPair, out: &[f64]) -> f64 {
    p.seg1.iter().map(|&u| out[u]).sum::<f64>() - p.seg0.iter().map(|&u| out[u]).sum::<f64>()
}

/// Gradient of [`bt_loss`] with respect to the flat parameter vector.
pub fn bt_loss_grad(net: &RewardNet, batch: &[PreferenceQuery]) -> Result<(f64, Vec<f64>), RewardError> {
    if batch.is_empty() {
        return Err(RewardError::EmptyBatch);
    }
    let ds = Dataset::build(net, batch)?;
    let all: Vec<usize> = (0..ds.pairs.len()).collect();
    let mut grad = vec![0.0; net.params.len()];
    let loss = ds.loss_and_grad(net, &all, &mut grad);
    Ok((loss, grad))
}

/// Loss before and after training one member.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MemberReport {
    pub initial_loss: f64,
    pub final_loss: f64,
}

/// Trains one network in place. Keeps the initial parameters if training
/// ends with a higher full-set loss than it started with.
pub fn train_member(
    net: &mut RewardNet,
    batch: &[PreferenceQuery],
    cfg: &TrainConfig,
    seed: u64,
) -> Result<MemberReport, RewardError> {
    if batch.is_empty() {
        return Err(RewardError::NoLabeledData);
    }
    let ds = Dataset::build(net, batch)?;
    let initial_loss = ds.loss(net);
    let start = net.params.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..ds.pairs.len()).collect();
    let mut velocity = vec![0.0; net.params.len()];
    let mut grad = vec![0.0; net.params.len()];
    let bs = cfg.batch.max(1);
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(bs) {
            ds.loss_and_grad(net, chunk, &mut grad);
            for ((p, v), g) in net.params.iter_mut().zip(velocity.iter_mut()).zip(&grad) {
                *v = cfg.momentum * *v - cfg.lr * g;
                *p += *v;
            }
        }
    }
    let mut final_loss = ds.loss(net);
    if !(final_loss <= initial_loss) {
        net.params = start;
        final_loss = initial_loss;
    }
    Ok(MemberReport {
        initial_loss,
        final_loss,
    })
}

/// `E` independently initialized reward networks.
#[derive(Clone, Debug, PartialEq)]
pub struct RewardEnsemble {
    pub members: Vec<RewardNet>,
    pub train_steps: u64,
}

impl RewardEnsemble {
    pub fn new<R: Rng + ?Sized>(env: &EnvSpec, size: usize, rng: &mut R) -> Result<Self, RewardError> {
        if size == 0 {
            return Err(RewardError::EmptyEnsemble);
        }
        Ok(Self {
            members: (0..size).map(|_| RewardNet::for_env(env, rng)).collect(),
            train_steps: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Mean member output.
    pub fn learned_reward(&self, state: &State, action: ActionRec) -> f64 {
        let x = self.members[0].encode(state, action);
        self.members.iter().map(|m| m.forward(&x)).sum::<f64>() / self.members.len() as f64
    }

    /// Per-member `P[seg1 ≻ seg0]`.
    pub fn member_predictions(&self, seg0: &Segment, seg1: &Segment) -> Vec<f64> {
        self.members.iter().map(|m| predict_preference(m, seg0, seg1)).collect()
    }

    pub fn to_checkpoint(&self) -> EnsembleCheckpoint {
        EnsembleCheckpoint {
            train_steps: self.train_steps,
            members: self.members.iter().map(NetCheckpoint::from_net).collect(),
        }
    }

    pub fn from_checkpoint(ck: &EnsembleCheckpoint) -> Result<Self, RewardError> {
        if ck.members.is_empty() {
            return Err(RewardError::EmptyEnsemble);
        }
        Ok(Self {
            train_steps: ck.train_steps,
            members: ck.members.iter().map(NetCheckpoint::to_net).collect::<Result<_, _>>()?,
        })
    }
}

/// Trains every member independently on the labeled queries of `buffer`.
/// Members run on separate threads; each draws its shuffle seed from `rng`
/// up front, so results do not depend on scheduling.
pub fn train_ensemble<R: Rng + ?Sized>(
    ensemble: &RewardEnsemble,
    buffer: &ReplayBuffer,
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<(RewardEnsemble, Vec<MemberReport>), RewardError> {
    let labeled: Vec<PreferenceQuery> = buffer.labeled().cloned().collect();
    train_ensemble_on(ensemble, &labeled, cfg, rng)
}

pub fn train_ensemble_on<R: Rng + ?Sized>(
    ensemble: &RewardEnsemble,
    labeled: &[PreferenceQuery],
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<(RewardEnsemble, Vec<MemberReport>), RewardError> {
    if labeled.is_empty() {
        return Err(RewardError::NoLabeledData);
    }
    let seeds: Vec<u64> = ensemble.members.iter().map(|_| rng.gen()).collect();
    let mut members = ensemble.members.clone();
    let reports = std::thread::scope(|scope| {
        let handles: Vec<_> = members
            .iter_mut()
            .zip(seeds)
            .map(|(net, seed)| scope.spawn(move || train_member(net, labeled, cfg, seed)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("reward member training panicked"))
            .collect::<Result<Vec<_>, _>>()
    })?;
    Ok((
        RewardEnsemble {
            members,
            train_steps: ensemble.train_steps + 1,
        },
        reports,
    ))
}

fn population_std(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n).sqrt()
}

/// Indices of the `k` candidates with the largest ensemble disagreement.
///
/// With a single member there is no disagreement signal and the choice is
/// uniform via `rng`.
pub fn disagreement_select<R: Rng + ?Sized>(
    ensemble: &RewardEnsemble,
    candidates: &[(Segment, Segment)],
    k: usize,
    rng: &mut R,
) -> Vec<usize> {
    let k = k.min(candidates.len());
    if k == 0 {
        return Vec::new();
    }
    if ensemble.len() < 2 {
        let mut idx: Vec<usize> = (0..candidates.len()).collect();
        idx.shuffle(rng);
        idx.truncate(k);
        return idx;
    }
    let spread: Vec<f64> = candidates
        .iter()
        .map(|(a, b)| population_std(&ensemble.member_predictions(a, b)))
        .collect();
    rank_by_spread(&spread, k)
}

/// Stable descending ranking; earlier candidates win ties.
pub fn rank_by_spread(spread: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..spread.len()).collect();
    idx.sort_by(|&a, &b| spread[b].total_cmp(&spread[a]));
    idx.truncate(k);
    idx
}

/// JSON checkpoint of one network: layer shapes plus row-major weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetCheckpoint {
    pub feature_scale: Vec<f64>,
    pub action_count: usize,
    pub layers: Vec<LayerCheckpoint>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerCheckpoint {
    pub rows: usize,
    pub cols: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleCheckpoint {
    pub train_steps: u64,
    pub members: Vec<NetCheckpoint>,
}

impl NetCheckpoint {
    fn from_net(net: &RewardNet) -> Self {
        let layers = net
            .offsets()
            .iter()
            .enumerate()
            .map(|(l, &(w, b))| {
                let (cols, rows) = (net.sizes[l], net.sizes[l + 1]);
                LayerCheckpoint {
                    rows,
                    cols,
                    weights: net.params[w..w + rows * cols].to_vec(),
                    bias: net.params[b..b + rows].to_vec(),
                }
            })
            .collect();
        Self {
            feature_scale: net.feature_scale.clone(),
            action_count: net.action_count,
            layers,
        }
    }

    fn to_net(&self) -> Result<RewardNet, RewardError> {
        let bad = |m: &str| RewardError::Checkpoint(m.to_string());
        let first = self.layers.first().ok_or_else(|| bad("no layers"))?;
        if first.cols != self.feature_scale.len() + self.action_count {
            return Err(bad("input width does not match features + actions"));
        }
        let mut sizes = vec![first.cols];
        let mut params = Vec::new();
        for layer in &self.layers {
            if layer.cols != *sizes.last().unwrap_or(&0)
                || layer.weights.len() != layer.rows * layer.cols
                || layer.bias.len() != layer.rows
            {
                return Err(bad("inconsistent layer shapes"));
            }
            sizes.push(layer.rows);
            params.extend_from_slice(&layer.weights);
            params.extend_from_slice(&layer.bias);
        }
        if sizes.last() != Some(&1) {
            return Err(bad("output layer must have one unit"));
        }
        Ok(RewardNet {
            sizes,
            feature_scale: self.feature_scale.clone(),
            action_count: self.action_count,
            params,
        })
    }
}
