//! Federated round loop: local training on each subgraph, clamped/noised
//! uploads, and personalized server aggregation driven by global-node
//! similarity.

mod history;

pub use history::{History, RoundRecord, SummaryReport};

use ndarray::{Array2, Array3};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aggregation::{
    aggregate_global_nodes, aggregate_params, personalized_weights, similarity_matrix,
};
use crate::error::{Error, Result};
use crate::global_nodes::{init_global_nodes, GlobalNodes};
use crate::graph::{Graph, Split, SubgraphSpec};
use crate::model::{
    adam_step, forward, init_params, loss_and_grad, AdamHyper, AdamState, Batch, ModelConfig,
    ModelParams,
};
use crate::preprocess::{
    laplacian_pe, ppr_matrix, sample_local_context, PPRMatrix, PprMethod, SamplingStrategy,
};
use crate::privacy::{ldp_apply, privacy_budget, LDPConfig, LdpTarget};
use crate::seed;

const SHUFFLE_STREAM: u64 = 0x81;
const BATCH_STREAM: u64 = 0x82;
const DROPOUT_STREAM: u64 = 0x83;
const EVAL_STREAM: u64 = 0x90;
const UPLOAD_STREAM: u64 = 0xA0;

/// How the server mixes client models between rounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregationMode {
    /// Similarity-weighted per-client mixtures.
    Personalized,
    /// Plain mean of all client models (global nodes still aligned).
    Uniform,
    /// No mixing; every client keeps its own model.
    LocalOnly,
}

/// How neighbor contexts are drawn around each center.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingKind {
    Ppr,
    UniformNeighbor,
    AttributeSimilarity,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub rounds: usize,
    pub local_epochs: usize,
    pub batch_size: usize,
    /// PPR restart probability.
    pub nu: f64,
    pub ppr_method: PprMethod,
    pub ppr_tol: f64,
    /// Similarity temperature for the mixing softmax.
    pub tau: f64,
    /// Momentum of the online global-node update.
    pub gamma: f64,
    /// Train/val/test fractions per client.
    pub split: (f64, f64, f64),
    pub mode: AggregationMode,
    pub sampling: SamplingKind,
    pub model: ModelConfig,
    pub adam: AdamHyper,
    pub ldp: LDPConfig,
    pub seed: u64,
}

impl Default for RunConfig {
    /// Training defaults; `model.feature_dim` and `model.num_classes` are
    /// dataset-bound and must be filled in before use.
    fn default() -> Self {
        RunConfig {
            rounds: 100,
            local_epochs: 1,
            batch_size: 64,
            nu: 0.15,
            ppr_method: PprMethod::Exact,
            ppr_tol: 1e-6,
            tau: 5.0,
            gamma: 0.9,
            split: (0.2, 0.4, 0.4),
            mode: AggregationMode::Personalized,
            sampling: SamplingKind::Ppr,
            model: ModelConfig {
                layers: 2,
                heads: 4,
                d: 128,
                feature_dim: 0,
                pe_dim: 8,
                n_s: 16,
                n_g: 10,
                num_classes: 0,
                dropout: 0.0,
            },
            adam: AdamHyper::default(),
            ldp: LDPConfig::default(),
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rounds == 0 {
            return Err(Error::invalid("rounds", "must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size", "must be positive"));
        }
        if !self.tau.is_finite() {
            return Err(Error::invalid("tau", "must be finite"));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::invalid("gamma", "must lie in [0, 1]"));
        }
        if !(self.nu > 0.0 && self.nu <= 1.0) {
            return Err(Error::invalid("nu", "must lie in (0, 1]"));
        }
        if !(self.ppr_tol > 0.0) {
            return Err(Error::invalid("ppr_tol", "must be positive"));
        }
        self.model.validate()?;
        self.ldp.validate()?;
        Ok(())
    }

    /// Reported per-upload budget; `None` when uploads are unprotected.
    pub fn epsilon(&self) -> Option<f64> {
        if self.ldp.targets == LdpTarget::Off || self.ldp.lambda == 0.0 {
            return None;
        }
        privacy_budget(self.ldp.delta, self.ldp.lambda).ok()
    }
}

/// Everything one client owns: its subgraph view, preprocessing products,
/// model, optimizer state, and global nodes. Optimizer moments and cluster
/// counts survive across rounds; only θ and μ are overwritten by broadcasts.
pub struct ClientState {
    pub client_id: usize,
    labels: Vec<usize>,
    features: Array2<f64>,
    /// features ∥ positional encoding, one row per local node.
    tokens_base: Array2<f64>,
    ppr: PPRMatrix,
    split: Split,
    pub params: ModelParams,
    adam: AdamState,
    pub globals: GlobalNodes,
    num_train: usize,
}

impl ClientState {
    pub fn split(&self) -> &Split {
        &self.split
    }

    pub fn num_train(&self) -> usize {
        self.num_train
    }
}

/// One client→server upload.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundMessage {
    pub client: usize,
    /// θ_i − θ̂_i, flattened.
    pub delta: Vec<f64>,
    /// Global nodes after this round's updates (possibly clamped/noised).
    pub mu: Array2<f64>,
    pub num_train: usize,
    pub train_loss: f64,
}

impl RoundMessage {
    pub fn new(
        model: &ModelConfig,
        client: usize,
        delta: Vec<f64>,
        mu: Array2<f64>,
        num_train: usize,
        train_loss: f64,
    ) -> Result<RoundMessage> {
        if delta.len() != model.param_count() {
            return Err(Error::DimensionMismatch(format!(
                "delta has {} entries, model has {}",
                delta.len(),
                model.param_count()
            )));
        }
        if mu.dim() != (model.n_g, model.d) {
            return Err(Error::DimensionMismatch(format!(
                "uploaded globals are {:?}, expected {:?}",
                mu.dim(),
                (model.n_g, model.d)
            )));
        }
        Ok(RoundMessage {
            client,
            delta,
            mu,
            num_train,
            train_loss,
        })
    }

    /// Little-endian wire encoding; exact down to float bit patterns.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend((self.client as u64).to_le_bytes());
        out.extend((self.num_train as u64).to_le_bytes());
        out.extend(self.train_loss.to_le_bytes());
        out.extend((self.delta.len() as u64).to_le_bytes());
        for &x in &self.delta {
            out.extend(x.to_le_bytes());
        }
        out.extend((self.mu.nrows() as u64).to_le_bytes());
        out.extend((self.mu.ncols() as u64).to_le_bytes());
        for &x in self.mu.iter() {
            out.extend(x.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(model: &ModelConfig, bytes: &[u8]) -> Result<RoundMessage> {
        let mut pos = 0usize;
        let mut take_u64 = |bytes: &[u8]| -> Result<u64> {
            let end = pos + 8;
            let chunk = bytes
                .get(pos..end)
                .ok_or_else(|| Error::invalid("bytes", "truncated message"))?;
            pos = end;
            Ok(u64::from_le_bytes(chunk.try_into().unwrap()))
        };
        let client = take_u64(bytes)? as usize;
        let num_train = take_u64(bytes)? as usize;
        let train_loss = f64::from_bits(take_u64(bytes)?);
        let delta_len = take_u64(bytes)? as usize;
        let mut delta = Vec::with_capacity(delta_len);
        for _ in 0..delta_len {
            delta.push(f64::from_bits(take_u64(bytes)?));
        }
        let rows = take_u64(bytes)? as usize;
        let cols = take_u64(bytes)? as usize;
        let mut flat = Vec::with_capacity(rows * cols);
        for _ in 0..rows * cols {
            flat.push(f64::from_bits(take_u64(bytes)?));
        }
        if pos != bytes.len() {
            return Err(Error::invalid("bytes", "trailing bytes after message"));
        }
        let mu = Array2::from_shape_vec((rows, cols), flat)
            .map_err(|e| Error::DimensionMismatch(e.to_string()))?;
        RoundMessage::new(model, client, delta, mu, num_train, train_loss)
    }
}

fn build_batch(
    state: &ClientState,
    cfg: &RunConfig,
    centers: &[usize],
    with_labels: bool,
    sample_seed: u64,
) -> Result<Batch> {
    let m = &cfg.model;
    let b = centers.len();
    let mut tokens = Array3::zeros((b, 1 + m.n_s, m.in_dim()));
    let mut mask = Array2::from_elem((b, m.token_count()), false);
    let mut labels = Vec::with_capacity(b);
    for (bi, &c) in centers.iter().enumerate() {
        let strategy = match cfg.sampling {
            SamplingKind::Ppr => SamplingStrategy::Ppr,
            SamplingKind::UniformNeighbor => SamplingStrategy::UniformNeighbor,
            SamplingKind::AttributeSimilarity => {
                SamplingStrategy::AttributeSimilarity(&state.features)
            }
        };
        let ctx = sample_local_context(c, &state.ppr, m.n_s, strategy, sample_seed)?;
        tokens
            .slice_mut(ndarray::s![bi, 0, ..])
            .assign(&state.tokens_base.row(c));
        mask[(bi, 0)] = true;
        for (k, &s) in ctx.samples().iter().enumerate() {
            tokens
                .slice_mut(ndarray::s![bi, 1 + k, ..])
                .assign(&state.tokens_base.row(s));
            mask[(bi, 1 + k)] = true;
        }
        for t in 1 + m.n_s..m.token_count() {
            mask[(bi, t)] = true;
        }
        labels.push(with_labels.then(|| state.labels[c]).or(None));
    }
    Batch::new(m, tokens, mask, labels)
}

pub(crate) fn count_correct(logits: &Array2<f64>, labels: &[usize]) -> usize {
    logits
        .rows()
        .into_iter()
        .zip(labels.iter())
        .filter(|(row, &y)| {
            let mut best = 0usize;
            for (k, &x) in row.iter().enumerate() {
                if x > row[best] {
                    best = k;
                }
            }
            best == y
        })
        .count()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitPart {
    Val,
    Test,
}

/// Accuracy over one split, with contexts drawn from a per-client seed that
/// never changes across rounds, so evaluation is repeatable.
pub fn evaluate(state: &ClientState, cfg: &RunConfig, part: SplitPart) -> Result<f64> {
    let nodes = match part {
        SplitPart::Val => state.split.val(),
        SplitPart::Test => state.split.test(),
    };
    if nodes.is_empty() {
        return Err(Error::invalid("split", "empty evaluation split"));
    }
    let eval_seed = seed::derive(cfg.seed, &[EVAL_STREAM, state.client_id as u64]);
    let mut correct = 0usize;
    for chunk in nodes.chunks(cfg.batch_size) {
        let batch = build_batch(state, cfg, chunk, false, eval_seed)?;
        let (logits, _) = forward(&state.params, &cfg.model, &batch, state.globals.mu(), None)?;
        let labels: Vec<usize> = chunk.iter().map(|&c| state.labels[c]).collect();
        correct += count_correct(&logits, &labels);
    }
    Ok(correct as f64 / nodes.len() as f64)
}

/// One round of local work: adopt the broadcast, train E epochs with a
/// clustering update after every optimizer step, then upload the delta and
/// global nodes through the privacy mechanism.
pub fn run_client(
    state: &mut ClientState,
    cfg: &RunConfig,
    theta_hat: &ModelParams,
    mu_hat: &Array2<f64>,
    round: usize,
) -> Result<RoundMessage> {
    state.params = theta_hat.clone();
    state.globals.set_mu(mu_hat.clone())?;
    let theta_hat_flat = theta_hat.flatten();
    let cid = state.client_id as u64;
    let r = round as u64;

    let mut ce_sum = 0.0f64;
    let mut labeled = 0usize;
    for epoch in 0..cfg.local_epochs {
        let e = epoch as u64;
        let mut order: Vec<usize> = state.split.train().to_vec();
        let mut rng = seed::rng(seed::derive(cfg.seed, &[SHUFFLE_STREAM, cid, r, e]));
        order.shuffle(&mut rng);
        for (bi, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let tags = [cid, r, e, bi as u64];
            let sample_seed = seed::derive(cfg.seed, &[BATCH_STREAM, tags[0], tags[1], tags[2], tags[3]]);
            let dropout_seed =
                seed::derive(cfg.seed, &[DROPOUT_STREAM, tags[0], tags[1], tags[2], tags[3]]);
            let batch = build_batch(state, cfg, chunk, true, sample_seed)?;
            let (loss, grads, centers) = loss_and_grad(
                &state.params,
                &cfg.model,
                &batch,
                state.globals.mu(),
                Some(dropout_seed),
            )?;
            state.params = adam_step(&mut state.adam, &state.params, &grads, &cfg.model, &cfg.adam)?;
            state.globals.online_update(&centers)?;
            ce_sum += loss * chunk.len() as f64;
            labeled += chunk.len();
        }
    }

    let theta_flat = state.params.flatten();
    let delta_raw: Vec<f64> = theta_flat
        .iter()
        .zip(theta_hat_flat.iter())
        .map(|(t, h)| t - h)
        .collect();

    let (delta_up, mu_up) = match cfg.ldp.targets {
        LdpTarget::Off => (delta_raw.clone(), state.globals.mu().clone()),
        LdpTarget::GlobalNodesOnly => {
            let mu_seed = seed::derive(cfg.seed, &[UPLOAD_STREAM, cid, r, 1]);
            let noised = ldp_apply(state.globals.mu().as_slice().unwrap(), &cfg.ldp, mu_seed)?;
            let mu = Array2::from_shape_vec(state.globals.mu().dim(), noised)
                .map_err(|e| Error::DimensionMismatch(e.to_string()))?;
            (delta_raw.clone(), mu)
        }
        LdpTarget::GlobalNodesAndUpdates => {
            let d_seed = seed::derive(cfg.seed, &[UPLOAD_STREAM, cid, r, 0]);
            let mu_seed = seed::derive(cfg.seed, &[UPLOAD_STREAM, cid, r, 1]);
            let delta = ldp_apply(&delta_raw, &cfg.ldp, d_seed)?;
            let noised = ldp_apply(state.globals.mu().as_slice().unwrap(), &cfg.ldp, mu_seed)?;
            let mu = Array2::from_shape_vec(state.globals.mu().dim(), noised)
                .map_err(|e| Error::DimensionMismatch(e.to_string()))?;
            (delta, mu)
        }
    };

    // Adopt θ̂ + Δθ with the same arithmetic the server uses, so server-side
    // bookkeeping reproduces this model bitwise when uploads are unprotected.
    let adopted: Vec<f64> = theta_hat_flat
        .iter()
        .zip(delta_raw.iter())
        .map(|(h, d)| h + d)
        .collect();
    state.params = ModelParams::unflatten(&cfg.model, &adopted)?;

    let train_loss = if labeled > 0 {
        ce_sum / labeled as f64
    } else {
        0.0
    };
    RoundMessage::new(
        &cfg.model,
        state.client_id,
        delta_up,
        mu_up,
        state.num_train,
        train_loss,
    )
}

/// Server plus all client states, driven round by round.
pub struct Federation {
    pub cfg: RunConfig,
    pub(crate) clients: Vec<ClientState>,
    /// Server's copy of each client's full model, flattened.
    pub(crate) models: Vec<Vec<f64>>,
    pub(crate) last_mu: Vec<Array2<f64>>,
    pub(crate) last_broadcast: Vec<(ModelParams, Array2<f64>)>,
    init_model: ModelParams,
    init_mu: Array2<f64>,
    rounds_done: usize,
    pub history: History,
    /// (round, S) for every round that computed pairwise similarity.
    pub similarities: Vec<(usize, Array2<f64>)>,
    /// (round, α) for every round past the first.
    pub alphas: Vec<(usize, Array2<f64>)>,
}

impl Federation {
    pub fn new(parent: &Graph, subgraphs: &[SubgraphSpec], cfg: &RunConfig) -> Result<Federation> {
        cfg.validate()?;
        if subgraphs.is_empty() {
            return Err(Error::invalid("subgraphs", "need at least one client"));
        }
        if cfg.model.feature_dim != parent.feature_dim() {
            return Err(Error::DimensionMismatch(format!(
                "model expects {} features, dataset has {}",
                cfg.model.feature_dim,
                parent.feature_dim()
            )));
        }
        if cfg.model.num_classes != parent.num_classes() {
            return Err(Error::DimensionMismatch(format!(
                "model expects {} classes, dataset has {}",
                cfg.model.num_classes,
                parent.num_classes()
            )));
        }
        let init_model = init_params(&cfg.model, cfg.seed)?;
        let shared_globals =
            init_global_nodes(cfg.model.n_g, cfg.model.d, cfg.gamma, cfg.seed)?;
        let init_mu = shared_globals.mu().clone();

        let mut clients = Vec::with_capacity(subgraphs.len());
        for (i, s) in subgraphs.iter().enumerate() {
            if s.client_id() != i {
                return Err(Error::invalid(
                    "subgraphs",
                    format!("client {i} carries id {}", s.client_id()),
                ));
            }
            let ppr = ppr_matrix(s, cfg.nu, cfg.ppr_method, cfg.ppr_tol)?;
            let pe = laplacian_pe(s, cfg.model.pe_dim)?;
            let split = crate::graph::split_nodes(s, cfg.split, cfg.seed)?;
            if split.train().is_empty() {
                return Err(Error::EmptyClient { client: i });
            }
            let features = s.feature_matrix(parent);
            let labels = s.label_vec(parent);
            let mut tokens_base = Array2::zeros((s.n_nodes(), cfg.model.in_dim()));
            tokens_base
                .slice_mut(ndarray::s![.., 0..cfg.model.feature_dim])
                .assign(&features);
            tokens_base
                .slice_mut(ndarray::s![.., cfg.model.feature_dim..])
                .assign(pe.matrix());
            let num_train = split.train().len();
            clients.push(ClientState {
                client_id: i,
                labels,
                features,
                tokens_base,
                ppr,
                split,
                params: init_model.clone(),
                adam: AdamState::new(&cfg.model),
                globals: shared_globals.clone(),
                num_train,
            });
        }
        let m = clients.len();
        Ok(Federation {
            cfg: cfg.clone(),
            clients,
            models: vec![init_model.flatten(); m],
            last_mu: vec![init_mu.clone(); m],
            last_broadcast: Vec::new(),
            init_model,
            init_mu,
            rounds_done: 0,
            history: History::default(),
            similarities: Vec::new(),
            alphas: Vec::new(),
        })
    }

    pub fn num_clients(&self) -> usize {
        self.clients.len()
    }

    pub fn client(&self, i: usize) -> &ClientState {
        &self.clients[i]
    }

    pub fn rounds_done(&self) -> usize {
        self.rounds_done
    }

    fn broadcasts_for(&mut self, round: usize) -> Result<Vec<(ModelParams, Array2<f64>)>> {
        let m = self.clients.len();
        if round == 1 {
            return Ok(vec![(self.init_model.clone(), self.init_mu.clone()); m]);
        }
        match self.cfg.mode {
            AggregationMode::LocalOnly => {
                let mut out = Vec::with_capacity(m);
                for j in 0..m {
                    let params = ModelParams::unflatten(&self.cfg.model, &self.models[j])?;
                    out.push((params, self.last_mu[j].clone()));
                }
                self.alphas.push((round, Array2::eye(m)));
                Ok(out)
            }
            AggregationMode::Personalized | AggregationMode::Uniform => {
                let sim = similarity_matrix(&self.last_mu)?;
                let mut alpha = Array2::zeros((m, m));
                let mut out = Vec::with_capacity(m);
                for i in 0..m {
                    let row = match self.cfg.mode {
                        AggregationMode::Uniform => {
                            ndarray::Array1::from_elem(m, 1.0 / m as f64)
                        }
                        _ => personalized_weights(sim.matrix().row(i), self.cfg.tau)?,
                    };
                    let theta = aggregate_params(&self.models, row.as_slice().unwrap())?;
                    let aligned: Vec<Vec<usize>> =
                        (0..m).map(|j| sim.alignment(i, j).to_vec()).collect();
                    let mu = aggregate_global_nodes(
                        &self.last_mu,
                        &aligned,
                        row.as_slice().unwrap(),
                    )?;
                    out.push((ModelParams::unflatten(&self.cfg.model, &theta)?, mu));
                    alpha.row_mut(i).assign(&row);
                }
                self.similarities.push((round, sim.matrix().clone()));
                self.alphas.push((round, alpha));
                Ok(out)
            }
        }
    }

    /// Runs one synchronous round: broadcast, parallel local training,
    /// bookkeeping, and per-client evaluation.
    pub fn run_round(&mut self) -> Result<()> {
        let round = self.rounds_done + 1;
        let broadcasts = self.broadcasts_for(round)?;
        let cfg = &self.cfg;
        let results: Result<Vec<(RoundMessage, f64, f64)>> = self
            .clients
            .par_iter_mut()
            .zip(broadcasts.par_iter())
            .map(|(state, (theta_hat, mu_hat))| {
                // Measure the model each client actually receives, before any
                // local refinement touches it.
                state.params = theta_hat.clone();
                state.globals.set_mu(mu_hat.clone())?;
                let val = evaluate(state, cfg, SplitPart::Val)?;
                let test = evaluate(state, cfg, SplitPart::Test)?;
                let msg = run_client(state, cfg, theta_hat, mu_hat, round)?;
                Ok((msg, val, test))
            })
            .collect();
        let results = results?;
        if results.len() != self.clients.len() {
            return Err(Error::MissingClientMessage {
                round,
                client: results.len(),
            });
        }
        for (j, (msg, val, test)) in results.into_iter().enumerate() {
            if msg.client != j {
                return Err(Error::MissingClientMessage { round, client: j });
            }
            let mut theta = broadcasts[j].0.flatten();
            for (t, d) in theta.iter_mut().zip(msg.delta.iter()) {
                *t += d;
            }
            self.models[j] = theta;
            self.last_mu[j] = msg.mu;
            self.history.push(RoundRecord {
                round,
                client: j,
                train_loss: msg.train_loss,
                val_acc: val,
                test_acc: test,
            });
        }
        self.last_broadcast = broadcasts;
        self.rounds_done = round;
        Ok(())
    }
}

/// Full run: R rounds over the given client subgraphs.
pub fn train(parent: &Graph, subgraphs: &[SubgraphSpec], cfg: &RunConfig) -> Result<Federation> {
    let mut fed = Federation::new(parent, subgraphs, cfg)?;
    for _ in 0..cfg.rounds {
        fed.run_round()?;
    }
    Ok(fed)
}
