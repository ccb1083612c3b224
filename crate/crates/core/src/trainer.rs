//! Per-node training: candidate ranking, the lambda-swept subset fit and the
//! greedy merge of subset solutions.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;
use std::time::Duration;

use rayon::prelude::*;

use crate::derive_seed;
use crate::error::{Error, Result};
use crate::graph::{DatasetSplit, NodeId, Sign, SignedGraph};
use crate::opinion::{predict_sign, Influence, NodePredictor, PeerFinder, PeerPolicy, PeerSet};
use crate::qubo::{build_for_entries, solve_exact, solve_tabu, TabuParams, VarLabel, MAX_EXACT_VARS};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SolverChoice {
    Exact,
    /// Tabu search; `None` fields fall back to the per-size defaults of
    /// [`TabuParams::for_size`].
    Tabu {
        iterations: Option<usize>,
        time_limit: Option<Duration>,
    },
}

impl fmt::Display for SolverChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SolverChoice::Exact => f.write_str("exact"),
            SolverChoice::Tabu { .. } => f.write_str("tabu"),
        }
    }
}

impl FromStr for SolverChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(SolverChoice::Exact),
            "tabu" => Ok(SolverChoice::Tabu { iterations: None, time_limit: None }),
            other => Err(Error::Config(format!("unknown solver `{other}`"))),
        }
    }
}

/// How the mean-opinion scale `N` of a subproblem is chosen.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum NormRule {
    /// `N` = number of candidate entries in the subproblem.
    SubsetSize,
    Fixed(f64),
}

impl NormRule {
    fn value(self, subset: usize) -> f64 {
        match self {
            NormRule::SubsetSize => subset as f64,
            NormRule::Fixed(v) => v,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub policy: PeerPolicy,
    /// Candidate entries per subproblem.
    pub d: usize,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub lambda_step: f64,
    pub solver: SolverChoice,
    pub norm: NormRule,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            policy: PeerPolicy::default(),
            d: 10,
            lambda_min: 0.1,
            lambda_max: 0.35,
            lambda_step: 0.05,
            solver: SolverChoice::Exact,
            norm: NormRule::SubsetSize,
            seed: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.d == 0 {
            problems.push("d must be at least 1".to_owned());
        }
        if self.solver == SolverChoice::Exact && self.d > MAX_EXACT_VARS {
            problems.push(format!(
                "d = {} exceeds the exact solver limit of {MAX_EXACT_VARS}; use solver=tabu",
                self.d
            ));
        }
        if !(self.lambda_min >= 0.0) {
            problems.push("lambda-min must be non-negative".to_owned());
        }
        if !(self.lambda_min <= self.lambda_max) {
            problems.push("lambda-min must not exceed lambda-max".to_owned());
        }
        if !(self.lambda_step > 0.0) {
            problems.push("lambda-step must be positive".to_owned());
        }
        if let NormRule::Fixed(v) = self.norm {
            if !(v > 0.0) {
                problems.push("fixed normaliser must be positive".to_owned());
            }
        }
        if let SolverChoice::Tabu { iterations: Some(0), .. } = self.solver {
            problems.push("tabu-iters must be at least 1".to_owned());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }

    /// `lambda_min, lambda_min + step, ...` up to `lambda_max` inclusive.
    pub fn lambda_grid(&self) -> Vec<f64> {
        let steps = ((self.lambda_max - self.lambda_min) / self.lambda_step + 1e-9).floor() as usize;
        (0..=steps)
            .map(|k| self.lambda_min + k as f64 * self.lambda_step)
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CandidateEntry {
    pub peer: NodeId,
    pub influence: Influence,
    /// Training pairs this peer alone gets wrong with this influence.
    pub error: usize,
}

impl CandidateEntry {
    fn label(&self) -> VarLabel {
        VarLabel { peer: self.peer, influence: self.influence }
    }
}

/// Candidate entries sorted by individual error, then peer id, then `+`
/// before `-`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CandidateRanking {
    pub entries: Vec<CandidateEntry>,
}

/// Individual prediction errors of every peer under each influence.
///
/// A training target the peer has no link to counts as an error for both
/// influences. Simple-adjacent yields only `+` entries.
pub fn individual_errors(
    g: &SignedGraph,
    x: NodeId,
    training: &[(NodeId, Sign)],
    peers: &PeerSet,
    with_influence: bool,
) -> CandidateRanking {
    // agreements[v] = (#targets where s'(v,u) == s, #targets where s'(v,u) == -s)
    let mut agreements: HashMap<NodeId, (usize, usize)> = HashMap::new();
    for &(u, s) in training {
        for &(v, sv) in g.in_edges(u) {
            if v == x || !peers.contains(v) {
                continue;
            }
            let slot = agreements.entry(v).or_default();
            if sv == s {
                slot.0 += 1;
            } else {
                slot.1 += 1;
            }
        }
    }
    let total = training.len();
    let mut entries = Vec::new();
    for v in peers.to_vec() {
        if v == x {
            continue;
        }
        let (agree, disagree) = agreements.get(&v).copied().unwrap_or((0, 0));
        entries.push(CandidateEntry { peer: v, influence: Sign::Positive, error: total - agree });
        if with_influence {
            entries.push(CandidateEntry { peer: v, influence: Sign::Negative, error: total - disagree });
        }
    }
    entries.sort_by_key(|e| (e.error, e.peer, e.influence != Sign::Positive));
    CandidateRanking { entries }
}

/// Number of pairs whose sign the predictor gets wrong (no gate).
pub fn error_count(g: &SignedGraph, predictor: &NodePredictor, pairs: &[(NodeId, Sign)]) -> usize {
    pairs
        .iter()
        .filter(|&&(y, s)| predict_sign(g, predictor, y) != s)
        .count()
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitResult {
    pub trusted: Vec<(NodeId, Influence)>,
    pub validation_error: usize,
    pub lambda: f64,
    /// Selection fell back to the training pairs because the validation set
    /// was empty.
    pub selected_on_training: bool,
}

/// Fits one slice of ranked candidates: solves the subproblem for every
/// lambda on the grid and keeps the trusted set with the lowest selection
/// error (ties go to the smaller lambda).
pub fn fit_subset(
    g: &SignedGraph,
    x: NodeId,
    slice: &[CandidateEntry],
    training: &[(NodeId, Sign)],
    validation: &[(NodeId, Sign)],
    config: &TrainConfig,
    seed: u64,
) -> Result<FitResult> {
    let labels: Vec<VarLabel> = slice.iter().map(CandidateEntry::label).collect();
    let norm = config.norm.value(labels.len());
    let selected_on_training = validation.is_empty();
    let selection = if selected_on_training { training } else { validation };

    let mut best: Option<FitResult> = None;
    for (k, lambda) in config.lambda_grid().into_iter().enumerate() {
        let q = build_for_entries(g, &labels, training, lambda, norm)?;
        let a = match &config.solver {
            SolverChoice::Exact => solve_exact(&q)?,
            SolverChoice::Tabu { iterations, time_limit } => {
                let mut params = TabuParams::for_size(q.len(), derive_seed(seed, k as u64));
                if let Some(it) = iterations {
                    params.max_iterations = *it;
                }
                if let Some(t) = time_limit {
                    params.time_limit = *t;
                }
                solve_tabu(&q, &params)
            }
        };
        let chosen = labels
            .iter()
            .zip(&a.bits)
            .filter(|(_, &b)| b)
            .map(|(l, _)| (l.peer, l.influence));
        let z = NodePredictor::new(x, chosen);
        let err = error_count(g, &z, selection);
        if best.as_ref().is_none_or(|b| err < b.validation_error) {
            best = Some(FitResult {
                trusted: z.trusted().to_vec(),
                validation_error: err,
                lambda,
                selected_on_training,
            });
        }
    }
    best.ok_or_else(|| Error::Config("empty lambda grid".into()))
}

/// Per-node training record, one row of the training log.
#[derive(Clone, Debug, PartialEq)]
pub struct NodeLog {
    pub node: NodeId,
    pub candidates: usize,
    pub slices_fitted: usize,
    pub slices_accepted: usize,
    pub final_size: usize,
    pub lambdas: Vec<f64>,
    pub validation_error: usize,
    pub empty_training: bool,
    pub selected_on_training: bool,
}

impl NodeLog {
    pub const TSV_HEADER: &'static str =
        "node\tcandidates\tslices_fitted\tslices_accepted\tfinal_size\tlambdas\tvalidation_error\tflags";

    pub fn to_tsv_row(&self) -> String {
        let lambdas = if self.lambdas.is_empty() {
            "-".to_owned()
        } else {
            self.lambdas
                .iter()
                .map(|l| format!("{l:.2}"))
                .collect::<Vec<_>>()
                .join(",")
        };
        let mut flags = Vec::new();
        if self.empty_training {
            flags.push("empty_training");
        }
        if self.selected_on_training {
            flags.push("selected_on_training");
        }
        let flags = if flags.is_empty() { "-".to_owned() } else { flags.join(",") };
        format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            self.node,
            self.candidates,
            self.slices_fitted,
            self.slices_accepted,
            self.final_size,
            lambdas,
            self.validation_error,
            flags
        )
    }
}

/// Trains the predictor of one source node.
///
/// Candidates are consumed front to back in slices of `d`. Each slice's fit
/// is merged into the accumulated set only if the merged set strictly lowers
/// the validation error; the first slice that does not ends training.
pub fn train_node(
    g: &SignedGraph,
    x: NodeId,
    training: &[(NodeId, Sign)],
    validation: &[(NodeId, Sign)],
    peers: &PeerSet,
    config: &TrainConfig,
) -> Result<(NodePredictor, NodeLog)> {
    let mut log = NodeLog {
        node: x,
        candidates: 0,
        slices_fitted: 0,
        slices_accepted: 0,
        final_size: 0,
        lambdas: Vec::new(),
        validation_error: 0,
        empty_training: training.is_empty(),
        selected_on_training: validation.is_empty() && !training.is_empty(),
    };
    let mut acc = NodePredictor::empty(x);
    if training.is_empty() {
        log.validation_error = error_count(g, &acc, validation);
        return Ok((acc, log));
    }
    let selection = if validation.is_empty() { training } else { validation };
    let ranking = individual_errors(g, x, training, peers, config.policy.variant.has_influence());
    log.candidates = ranking.entries.len();

    let node_seed = derive_seed(config.seed, u64::from(x.0));
    let mut acc_err = error_count(g, &acc, selection);
    for (i, slice) in ranking.entries.chunks(config.d.max(1)).enumerate() {
        let fit = fit_subset(g, x, slice, training, validation, config, derive_seed(node_seed, i as u64))?;
        log.slices_fitted += 1;
        log.lambdas.push(fit.lambda);
        let merged = acc.merged(&fit.trusted);
        let err = error_count(g, &merged, selection);
        if err < acc_err {
            acc = merged;
            acc_err = err;
            log.slices_accepted += 1;
        } else {
            break;
        }
    }
    log.final_size = acc.len();
    log.validation_error = acc_err;
    Ok((acc, log))
}

/// Learned predictors keyed by source node; sources without a predictor
/// behave as the empty predictor.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PredictorSet {
    by_source: BTreeMap<NodeId, NodePredictor>,
}

impl PredictorSet {
    pub fn insert(&mut self, p: NodePredictor) {
        self.by_source.insert(p.source(), p);
    }

    pub fn get(&self, x: NodeId) -> Option<&NodePredictor> {
        self.by_source.get(&x)
    }

    pub fn contains(&self, x: NodeId) -> bool {
        self.by_source.contains_key(&x)
    }

    pub fn len(&self) -> usize {
        self.by_source.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_source.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &NodePredictor> {
        self.by_source.values()
    }

    pub fn to_vec(&self) -> Vec<NodePredictor> {
        self.by_source.values().cloned().collect()
    }
}

impl FromIterator<NodePredictor> for PredictorSet {
    fn from_iter<I: IntoIterator<Item = NodePredictor>>(iter: I) -> Self {
        let mut s = PredictorSet::default();
        for p in iter {
            s.insert(p);
        }
        s
    }
}

pub type PairsBySource = BTreeMap<NodeId, Vec<(NodeId, Sign)>>;

pub fn group_by_source(edges: &[crate::graph::SignedEdge]) -> PairsBySource {
    let mut out: PairsBySource = BTreeMap::new();
    for e in edges {
        out.entry(e.src).or_default().push((e.dst, e.sign));
    }
    out
}

pub struct TrainOutput {
    pub predictors: PredictorSet,
    pub logs: Vec<NodeLog>,
}

/// Trains every source node of the training split, skipping nodes for which
/// `skip` returns true. Runs on the current rayon pool; output is ordered by
/// node id and independent of scheduling.
pub fn train_all_filtered(
    g: &SignedGraph,
    split: &DatasetSplit,
    config: &TrainConfig,
    skip: impl Fn(NodeId) -> bool + Sync,
) -> Result<TrainOutput> {
    config.validate()?;
    let training = group_by_source(&split.train);
    let validation = group_by_source(&split.validation);
    let sources: Vec<NodeId> = training.keys().copied().filter(|&x| !skip(x)).collect();
    let n = g.node_count();
    let empty: Vec<(NodeId, Sign)> = Vec::new();
    let results: Vec<Result<(NodePredictor, NodeLog)>> = sources
        .par_iter()
        .map_init(
            || PeerFinder::new(n),
            |finder, &x| {
                let peers = finder.peers(g, x, &config.policy);
                let td = &training[&x];
                let vd = validation.get(&x).unwrap_or(&empty);
                train_node(g, x, td, vd, &peers, config)
            },
        )
        .collect();
    let mut predictors = PredictorSet::default();
    let mut logs = Vec::with_capacity(results.len());
    for r in results {
        let (p, log) = r?;
        predictors.insert(p);
        logs.push(log);
    }
    Ok(TrainOutput { predictors, logs })
}

pub fn train_all(g: &SignedGraph, split: &DatasetSplit, config: &TrainConfig) -> Result<TrainOutput> {
    train_all_filtered(g, split, config, |_| false)
}

/// Runs `f` on a dedicated pool of `workers` threads, or on the global pool
/// when `workers` is `None`.
pub fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        None => Ok(f()),
        Some(w) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(w.max(1))
                .build()
                .map_err(|e| Error::Internal(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}
