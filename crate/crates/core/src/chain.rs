//! Exact Markov-chain analysis of the forgetting variant.
//!
//! With iid observations and stateless models the period state
//! `Q_n = (block_n, ω_cn, ω_an)` is a Markov chain: the end-of-period
//! decision is a deterministic function of `Q_n`, the next block is a fresh
//! iid draw and the next alternate depends only on the decided current model.
//! So
//!
//! ```text
//! p(s → t) = P(block_t) · μ(ω_a(t) | d(s)) · 1[ω_c(t) = d(s)]
//! ```
//!
//! and the transition operator never has to be stored densely.

use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model_space::{Family, ModelId, ModelSpace};
use crate::search::SearchDistribution;
use crate::srf::{srf_decide, trial_likelihood, QOccupancy, QStateCodec};

pub const DEFAULT_STATE_CEILING: usize = 1_000_000;
pub const STATIONARY_TOLERANCE: f64 = 1e-12;
pub const MAX_POWER_ITERATIONS: usize = 1_000_000;
const ROW_SUM_TOLERANCE: f64 = 1e-12;

/// Edge list used for reachability. Nodes `0..dim` are chain states; any
/// further nodes are auxiliary, and a single chain transition spans
/// `step_len` edges.
#[derive(Debug, Clone)]
pub struct Connectivity {
    pub nodes: usize,
    pub edges: Vec<(usize, usize)>,
    pub step_len: usize,
}

pub trait TransitionOperator {
    fn dim(&self) -> usize;

    fn entry(&self, from: usize, to: usize) -> f64;

    /// `out = x · P`.
    fn left_mul(&self, x: &[f64], out: &mut [f64]);

    /// `out = P · y`.
    fn right_mul(&self, y: &[f64], out: &mut [f64]);

    fn connectivity(&self) -> Connectivity;

    fn row_sums(&self) -> Vec<f64> {
        let ones = vec![1.0; self.dim()];
        let mut out = vec![0.0; self.dim()];
        self.right_mul(&ones, &mut out);
        out
    }
}

/// Row-stochastic matrix stored densely, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseStochasticMatrix {
    n: usize,
    data: Vec<f64>,
}

impl DenseStochasticMatrix {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::Length { expected: n, got: row.len() });
            }
            if row.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
                return Err(Error::InstanceMismatch(format!("row {i} has a negative or non-finite entry")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(Error::InstanceMismatch(format!("row {i} sums to {sum}")));
            }
            data.extend_from_slice(row);
        }
        Ok(DenseStochasticMatrix { n, data })
    }
}

impl TransitionOperator for DenseStochasticMatrix {
    fn dim(&self) -> usize {
        self.n
    }

    fn entry(&self, from: usize, to: usize) -> f64 {
        self.data[from * self.n + to]
    }

    fn left_mul(&self, x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            for (o, p) in out.iter_mut().zip(&self.data[i * self.n..(i + 1) * self.n]) {
                *o += xi * p;
            }
        }
    }

    fn right_mul(&self, y: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.data[i * self.n..(i + 1) * self.n].iter().zip(y).map(|(p, v)| p * v).sum();
        }
    }

    fn connectivity(&self) -> Connectivity {
        let mut edges = Vec::new();
        for i in 0..self.n {
            for j in 0..self.n {
                if self.entry(i, j) > 0.0 {
                    edges.push((i, j));
                }
            }
        }
        Connectivity { nodes: self.n, edges, step_len: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Irreducibility {
    pub irreducible: bool,
    /// Strongly connected components that contain chain states.
    pub components: Vec<Vec<usize>>,
    /// Period of the component holding state 0.
    pub period: usize,
}

pub fn analyze_connectivity<M: TransitionOperator + ?Sized>(op: &M) -> Irreducibility {
    let conn = op.connectivity();
    let dim = op.dim();
    let mut graph = DiGraph::<(), ()>::with_capacity(conn.nodes, conn.edges.len());
    for _ in 0..conn.nodes {
        graph.add_node(());
    }
    graph.extend_with_edges(conn.edges.iter().map(|&(u, v)| (u as u32, v as u32)));
    let mut components: Vec<Vec<usize>> = tarjan_scc(&graph)
        .into_iter()
        .map(|c| {
            let mut states: Vec<usize> = c.into_iter().map(|n| n.index()).filter(|&n| n < dim).collect();
            states.sort_unstable();
            states
        })
        .filter(|c| !c.is_empty())
        .collect();
    components.sort();
    let irreducible = components.len() == 1 && components[0].len() == dim;
    let period = period_from(&conn, dim);
    Irreducibility { irreducible, components, period }
}

fn gcd(mut a: usize, mut b: usize) -> usize {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

fn period_from(conn: &Connectivity, dim: usize) -> usize {
    if dim == 0 {
        return 1;
    }
    let mut adj = vec![Vec::new(); conn.nodes];
    for &(u, v) in &conn.edges {
        adj[u].push(v);
    }
    let mut level = vec![usize::MAX; conn.nodes];
    level[0] = 0;
    let mut queue = std::collections::VecDeque::from([0usize]);
    while let Some(u) = queue.pop_front() {
        for &v in &adj[u] {
            if level[v] == usize::MAX {
                level[v] = level[u] + 1;
                queue.push_back(v);
            }
        }
    }
    let mut g = 0usize;
    for &(u, v) in &conn.edges {
        if level[u] != usize::MAX && level[v] != usize::MAX {
            g = gcd(g, (level[u] + 1).abs_diff(level[v]));
        }
    }
    (g / conn.step_len).max(1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stationary {
    pub pi: Vec<f64>,
    pub iterations: usize,
    /// `‖π·P − π‖₁` at exit.
    pub residual: f64,
    pub period: usize,
}

/// Power iteration from the uniform vector. Periodic chains iterate the
/// averaged operator `(I + P) / 2`, which has the same fixed points.
pub fn stationary_distribution<M: TransitionOperator + ?Sized>(op: &M) -> Result<Stationary> {
    let info = analyze_connectivity(op);
    if !info.irreducible {
        let sizes: Vec<String> = info.components.iter().take(8).map(|c| format!("{:?}", &c[..c.len().min(6)])).collect();
        return Err(Error::Reducible {
            components: info.components.len(),
            detail: format!("components (first states): {}", sizes.join(", ")),
        });
    }
    let n = op.dim();
    let lazy = info.period > 1;
    let mut pi = vec![1.0 / n as f64; n];
    let mut next = vec![0.0; n];
    for iteration in 1..=MAX_POWER_ITERATIONS {
        op.left_mul(&pi, &mut next);
        let residual: f64 = next.iter().zip(&pi).map(|(a, b)| (a - b).abs()).sum();
        if residual < STATIONARY_TOLERANCE {
            let z: f64 = next.iter().sum();
            next.iter_mut().for_each(|v| *v /= z);
            return Ok(Stationary { pi: next, iterations: iteration, residual, period: info.period });
        }
        if lazy {
            for (nv, &p) in next.iter_mut().zip(&pi) {
                *nv = 0.5 * (*nv + p);
            }
        }
        let z: f64 = next.iter().sum();
        for (p, &v) in pi.iter_mut().zip(&next) {
            *p = v / z;
        }
        if iteration == MAX_POWER_ITERATIONS {
            return Err(Error::NotConverged { iterations: iteration, residual });
        }
    }
    unreachable!()
}

/// `|Σ_{s∈C,t∈D} x_s p_st − Σ_{s∈C,t∈D} x_t p_ts|` for the cut given by `in_c`.
pub fn balance_residual_for<M: TransitionOperator + ?Sized>(op: &M, x: &[f64], in_c: &[bool]) -> Result<f64> {
    let n = op.dim();
    if x.len() != n || in_c.len() != n {
        return Err(Error::Length { expected: n, got: x.len().min(in_c.len()) });
    }
    if in_c.iter().all(|&c| c) || in_c.iter().all(|&c| !c) {
        return Err(Error::Partition("one side of the cut is empty".into()));
    }
    let ind_c: Vec<f64> = in_c.iter().map(|&c| c as u8 as f64).collect();
    let ind_d: Vec<f64> = in_c.iter().map(|&c| (!c) as u8 as f64).collect();
    let mut to_d = vec![0.0; n];
    let mut to_c = vec![0.0; n];
    op.right_mul(&ind_d, &mut to_d);
    op.right_mul(&ind_c, &mut to_c);
    let c_to_d: f64 = (0..n).filter(|&s| in_c[s]).map(|s| x[s] * to_d[s]).sum();
    let d_to_c: f64 = (0..n).filter(|&s| !in_c[s]).map(|s| x[s] * to_c[s]).sum();
    Ok((c_to_d - d_to_c).abs())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QState {
    pub block: u64,
    pub current: ModelId,
    pub alternate: ModelId,
}

/// A forgetting-variant instance small enough to enumerate.
#[derive(Debug, Clone)]
pub struct ChainInstance {
    space: ModelSpace,
    symbol_probs: Vec<f64>,
    k: usize,
    search: SearchDistribution,
    state_ceiling: usize,
}

impl ChainInstance {
    /// `symbol_probs[i]` is the iid probability of the observation whose
    /// schema code is `i`.
    pub fn new(space: ModelSpace, symbol_probs: Vec<f64>, k: usize, search: SearchDistribution) -> Result<Self> {
        Self::with_ceiling(space, symbol_probs, k, search, DEFAULT_STATE_CEILING)
    }

    pub fn with_ceiling(
        space: ModelSpace,
        symbol_probs: Vec<f64>,
        k: usize,
        search: SearchDistribution,
        state_ceiling: usize,
    ) -> Result<Self> {
        if let Some(m) = space.models().iter().find(|m| !m.is_stateless()) {
            return Err(Error::InstanceMismatch(format!(
                "model `{}` carries statistics; exact chains need stateless models",
                m.name
            )));
        }
        let symbols = space.schema().symbol_count();
        if symbol_probs.len() as u64 != symbols {
            return Err(Error::Length { expected: symbols as usize, got: symbol_probs.len() });
        }
        if symbol_probs.iter().any(|&p| !(p >= 0.0)) {
            return Err(Error::Generator("negative symbol probability".into()));
        }
        let total: f64 = symbol_probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Generator(format!("symbol probabilities sum to {total}")));
        }
        if k == 0 {
            return Err(Error::Schedule("k must be at least 1".into()));
        }
        search.validate()?;
        let inst = ChainInstance { space, symbol_probs, k, search, state_ceiling };
        let count = inst.codec().state_count_u128();
        if count > state_ceiling as u128 {
            return Err(Error::StateCeiling { count, ceiling: state_ceiling });
        }
        Ok(inst)
    }

    /// Same instance with a different trial length.
    pub fn with_k(&self, k: usize) -> Result<Self> {
        Self::with_ceiling(self.space.clone(), self.symbol_probs.clone(), k, self.search, self.state_ceiling)
    }

    pub fn codec(&self) -> QStateCodec {
        QStateCodec::new(self.space.schema().symbol_count(), self.k, self.space.len())
    }

    pub fn space(&self) -> &ModelSpace {
        &self.space
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn search(&self) -> SearchDistribution {
        self.search
    }

    pub fn symbol_probs(&self) -> &[f64] {
        &self.symbol_probs
    }

    /// Expected one-step log score of each model under the generator.
    pub fn expected_log_scores(&self) -> Vec<f64> {
        let schema = self.space.schema();
        let p1: f64 = self
            .symbol_probs
            .iter()
            .enumerate()
            .filter(|(code, _)| schema.decode(*code as u64).x)
            .map(|(_, p)| p)
            .sum();
        self.space
            .models()
            .iter()
            .map(|m| match m.family {
                Family::FixedBernoulli { theta } => p1 * theta.ln() + (1.0 - p1) * (1.0 - theta).ln(),
                Family::Cpt { .. } => unreachable!("rejected at construction"),
            })
            .collect()
    }

    /// Models attaining the maximal expected log score (ties within 1e-12).
    pub fn best_models(&self) -> Vec<ModelId> {
        let scores = self.expected_log_scores();
        let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (0..scores.len()).filter(|&i| scores[i] >= max - 1e-12).map(ModelId).collect()
    }
}

pub fn enumerate_states(inst: &ChainInstance) -> Result<Vec<QState>> {
    let codec = inst.codec();
    let count = codec.state_count_u128();
    if count > inst.state_ceiling as u128 {
        return Err(Error::StateCeiling { count, ceiling: inst.state_ceiling });
    }
    Ok((0..codec.state_count())
        .map(|i| {
            let (block, current, alternate) = codec.decode(i);
            QState { block, current, alternate }
        })
        .collect())
}

/// Structured transition operator of the period-state chain.
#[derive(Debug, Clone)]
pub struct SrfTransition {
    codec: QStateCodec,
    block_probs: Vec<f64>,
    /// Decided current model per state.
    decision: Vec<u32>,
    /// `search[c][a]` = probability of proposing `a` when `c` is current.
    search: Vec<Vec<f64>>,
}

impl SrfTransition {
    pub fn codec(&self) -> QStateCodec {
        self.codec
    }

    pub fn decision(&self, state: usize) -> ModelId {
        ModelId(self.decision[state] as usize)
    }

    pub fn block_probs(&self) -> &[f64] {
        &self.block_probs
    }

    fn parts(&self, state: usize) -> (usize, usize, usize) {
        let (block, c, a) = self.codec.decode(state as u64);
        (block as usize, c.0, a.0)
    }
}

pub fn transition_matrix(inst: &ChainInstance) -> Result<SrfTransition> {
    let states = enumerate_states(inst)?;
    let codec = inst.codec();
    let space = &inst.space;
    let schema = space.schema();
    let n_blocks = codec.block_count() as usize;

    let mut block_probs = Vec::with_capacity(n_blocks);
    let mut block_ll = vec![vec![0.0; n_blocks]; space.len()];
    for block in 0..n_blocks {
        let symbols = codec.block_symbols(block as u64);
        block_probs.push(symbols.iter().map(|&s| inst.symbol_probs[s as usize]).product());
        let data: Vec<_> = symbols.iter().map(|&s| schema.decode(s)).collect();
        for id in space.ids() {
            block_ll[id.0][block] = trial_likelihood(space, id, &data);
        }
    }
    let decision = states
        .iter()
        .map(|q| {
            let b = q.block as usize;
            srf_decide(space, q.current, block_ll[q.current.0][b], q.alternate, block_ll[q.alternate.0][b]).0 as u32
        })
        .collect();
    let search = space.ids().map(|c| inst.search.probabilities(space, c)).collect();
    Ok(SrfTransition { codec, block_probs, decision, search })
}

impl TransitionOperator for SrfTransition {
    fn dim(&self) -> usize {
        self.decision.len()
    }

    fn entry(&self, from: usize, to: usize) -> f64 {
        let d = self.decision[from] as usize;
        let (block, c, a) = self.parts(to);
        if c == d {
            self.block_probs[block] * self.search[d][a]
        } else {
            0.0
        }
    }

    fn left_mul(&self, x: &[f64], out: &mut [f64]) {
        let m = self.codec.n_models;
        let mut mass = vec![0.0; m];
        for (s, &xs) in x.iter().enumerate() {
            mass[self.decision[s] as usize] += xs;
        }
        for (t, o) in out.iter_mut().enumerate() {
            let (block, c, a) = self.parts(t);
            *o = self.block_probs[block] * self.search[c][a] * mass[c];
        }
    }

    fn right_mul(&self, y: &[f64], out: &mut [f64]) {
        let m = self.codec.n_models;
        let mut gather = vec![0.0; m];
        for (t, &yt) in y.iter().enumerate() {
            let (block, c, a) = self.parts(t);
            gather[c] += self.block_probs[block] * self.search[c][a] * yt;
        }
        for (s, o) in out.iter_mut().enumerate() {
            *o = gather[self.decision[s] as usize];
        }
    }

    fn connectivity(&self) -> Connectivity {
        // one hub per model: s -> hub[d(s)] -> every enterable state with that current
        let dim = self.dim();
        let m = self.codec.n_models;
        let mut edges = Vec::with_capacity(2 * dim);
        for s in 0..dim {
            edges.push((s, dim + self.decision[s] as usize));
        }
        for t in 0..dim {
            let (block, c, a) = self.parts(t);
            if self.block_probs[block] * self.search[c][a] > 0.0 {
                edges.push((dim + c, t));
            }
        }
        Connectivity { nodes: dim + m, edges, step_len: 2 }
    }
}

#[derive(Debug, Clone)]
pub struct ChainModel {
    pub transition: SrfTransition,
    pub stationary: Stationary,
    pub irreducible: bool,
    /// Models whose current-model states form `C`.
    pub best_models: Vec<ModelId>,
    pub in_c: Vec<bool>,
}

impl ChainModel {
    pub fn build(inst: &ChainInstance) -> Result<Self> {
        let transition = transition_matrix(inst)?;
        let stationary = stationary_distribution(&transition)?;
        let best_models = inst.best_models();
        let codec = transition.codec();
        let in_c = (0..transition.dim() as u64).map(|i| best_models.contains(&codec.decode(i).1)).collect();
        Ok(ChainModel { transition, stationary, irreducible: true, best_models, in_c })
    }

    pub fn codec(&self) -> QStateCodec {
        self.transition.codec()
    }

    pub fn pi(&self) -> &[f64] {
        &self.stationary.pi
    }

    pub fn pi_c(&self) -> f64 {
        self.pi().iter().zip(&self.in_c).filter(|(_, &c)| c).map(|(p, _)| p).sum()
    }

    pub fn pi_d(&self) -> f64 {
        self.pi().iter().zip(&self.in_c).filter(|(_, &c)| !c).map(|(p, _)| p).sum()
    }

    /// Stationary mass per `(ω_c, ω_a)` pair.
    pub fn pi_by_pair(&self) -> Vec<(ModelId, ModelId, f64)> {
        let m = self.codec().n_models;
        let mut mass = vec![0.0; m * m];
        for (i, &p) in self.pi().iter().enumerate() {
            let (_, c, a) = self.codec().decode(i as u64);
            mass[c.0 * m + a.0] += p;
        }
        (0..m * m).map(|j| (ModelId(j / m), ModelId(j % m), mass[j])).collect()
    }
}

pub fn balance_residual(chain: &ChainModel) -> Result<f64> {
    balance_residual_for(&chain.transition, chain.pi(), &chain.in_c)
}

/// Total-variation distance between empirical state frequencies and `π`.
pub fn occupancy_compare(chain: &ChainModel, occupancy: &QOccupancy) -> Result<f64> {
    if occupancy.codec != chain.codec() {
        return Err(Error::InstanceMismatch(format!(
            "occupancy recorded for {:?}, chain built for {:?}",
            occupancy.codec,
            chain.codec()
        )));
    }
    if occupancy.periods == 0 {
        return Err(Error::InstanceMismatch("occupancy holds no periods".into()));
    }
    let total = occupancy.periods as f64;
    let mut tv = 0.0;
    for (i, &p) in chain.pi().iter().enumerate() {
        let f = occupancy.counts.get(&(i as u64)).copied().unwrap_or(0) as f64 / total;
        tv += (f - p).abs();
    }
    if occupancy.counts.keys().any(|&i| i as usize >= chain.pi().len()) {
        return Err(Error::InstanceMismatch("occupancy references states outside the chain".into()));
    }
    Ok(0.5 * tv)
}

/// Samples the chain directly for `periods` steps starting from `start`.
pub fn simulate_chain<R: Rng + ?Sized>(chain: &ChainModel, start: usize, periods: u64, rng: &mut R) -> QOccupancy {
    let tr = &chain.transition;
    let codec = tr.codec();
    let blocks = WeightedIndex::new(&tr.block_probs).expect("block probabilities are valid");
    let proposals: Vec<_> = tr.search.iter().map(|row| WeightedIndex::new(row).expect("search row is valid")).collect();
    let mut occ = QOccupancy::new(codec);
    let mut state = start;
    for _ in 0..periods {
        occ.record(state as u64);
        let d = tr.decision[state] as usize;
        let block = blocks.sample(rng) as u64;
        let a = proposals[d].sample(rng);
        state = codec.encode(block, ModelId(d), ModelId(a)) as usize;
    }
    occ
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KSweepRow {
    pub k: usize,
    pub pi_c: f64,
    pub state_count: u64,
}

pub fn sweep_k(template: &ChainInstance, ks: &[usize]) -> Result<Vec<KSweepRow>> {
    ks.iter()
        .map(|&k| {
            let inst = template.with_k(k)?;
            let chain = ChainModel::build(&inst)?;
            Ok(KSweepRow { k, pi_c: chain.pi_c(), state_count: chain.codec().state_count() })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairMass {
    pub current: String,
    pub alternate: String,
    pub pi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainSummary {
    pub k: usize,
    pub state_count: u64,
    pub irreducible: bool,
    pub period: usize,
    pub iterations: usize,
    pub stationary_residual: f64,
    pub best_models: Vec<String>,
    pub pi_c: f64,
    pub pi_d: f64,
    /// Absent when every state is in `C`.
    pub balance_residual: Option<f64>,
    pub pi_by_pair: Vec<PairMass>,
}

impl ChainSummary {
    pub fn new(inst: &ChainInstance, chain: &ChainModel) -> Self {
        let space = inst.space();
        let name = |id: ModelId| space.spec(id).name.clone();
        ChainSummary {
            k: inst.k(),
            state_count: chain.codec().state_count(),
            irreducible: chain.irreducible,
            period: chain.stationary.period,
            iterations: chain.stationary.iterations,
            stationary_residual: chain.stationary.residual,
            best_models: chain.best_models.iter().map(|&id| name(id)).collect(),
            pi_c: chain.pi_c(),
            pi_d: chain.pi_d(),
            balance_residual: balance_residual(chain).ok(),
            pi_by_pair: chain
                .pi_by_pair()
                .into_iter()
                .map(|(c, a, pi)| PairMass { current: name(c), alternate: name(a), pi })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainReport {
    pub version: u32,
    pub chains: Vec<ChainSummary>,
    pub k_sweep: Vec<KSweepRow>,
}
