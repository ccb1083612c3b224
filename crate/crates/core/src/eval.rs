//! Evaluation regimes, threshold-edge counts and the planted-model generator.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::{balance_by_sampling, split_edges, NodeId, Sign, SignedEdge, SignedGraph};
use crate::opinion::{predict_sign, predict_with_peers, NodePredictor, PeerFinder, PeerPolicy};
use crate::trainer::{train_all, PredictorSet, TrainConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Regime {
    /// Accuracy over all gated test edges.
    Raw,
    /// Mean of the negative-edge error and the error on an equal-size
    /// sample of positive edges.
    AveragedResults,
    /// Positives subsampled to match negatives before splitting and training.
    BalancedDataset,
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Regime::Raw => "raw",
            Regime::AveragedResults => "averaged",
            Regime::BalancedDataset => "balanced",
        })
    }
}

impl FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "raw" => Ok(Regime::Raw),
            "averaged" => Ok(Regime::AveragedResults),
            "balanced" => Ok(Regime::BalancedDataset),
            other => Err(Error::Config(format!("unknown regime `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvaluationReport {
    pub regime: Regime,
    /// Test edges that passed the gate and were scored.
    pub tested: usize,
    pub correct: usize,
    pub accuracy: f64,
    /// Share of negative tested edges predicted positive.
    pub false_positive_rate: f64,
    /// Share of positive tested edges predicted negative.
    pub false_negative_rate: f64,
    pub abstained: usize,
    pub positives_tested: usize,
    pub negatives_tested: usize,
}

impl EvaluationReport {
    pub const TSV_HEADER: &'static str = "regime\ttested\tcorrect\taccuracy\tfpr\tfnr\tabstained";

    pub fn to_tsv_row(&self) -> String {
        format!(
            "{}\t{}\t{}\t{:.6}\t{:.6}\t{:.6}\t{}",
            self.regime,
            self.tested,
            self.correct,
            self.accuracy,
            self.false_positive_rate,
            self.false_negative_rate,
            self.abstained
        )
    }

    pub fn summary(&self) -> String {
        format!(
            "regime:          {}\n\
             tested edges:    {} ({} positive, {} negative)\n\
             abstained:       {}\n\
             accuracy:        {:.2}%\n\
             false negatives: {:.2}% of positives\n\
             false positives: {:.2}% of negatives\n",
            self.regime,
            self.tested,
            self.positives_tested,
            self.negatives_tested,
            self.abstained,
            100.0 * self.accuracy,
            100.0 * self.false_negative_rate,
            100.0 * self.false_positive_rate,
        )
    }
}

/// One scored test edge.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Outcome {
    truth: Sign,
    predicted: Option<Sign>,
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// Gated predictions for every test edge, in input order.
fn outcomes(
    g: &SignedGraph,
    predictors: &PredictorSet,
    test: &[SignedEdge],
    policy: &PeerPolicy,
) -> Vec<Outcome> {
    let mut by_source: BTreeMap<NodeId, Vec<usize>> = BTreeMap::new();
    for (i, e) in test.iter().enumerate() {
        by_source.entry(e.src).or_default().push(i);
    }
    let groups: Vec<(NodeId, Vec<usize>)> = by_source.into_iter().collect();
    let n = g.node_count();
    let scored: Vec<Vec<(usize, Outcome)>> = groups
        .par_iter()
        .map_init(
            || PeerFinder::new(n),
            |finder, (x, idxs)| {
                let peers = finder.peers(g, *x, policy);
                let empty = NodePredictor::empty(*x);
                let predictor = predictors.get(*x).unwrap_or(&empty);
                idxs.iter()
                    .map(|&i| {
                        let e = test[i];
                        let p = predict_with_peers(g, predictor, &peers, e.dst, policy.q);
                        (i, Outcome { truth: e.sign, predicted: p.value })
                    })
                    .collect()
            },
        )
        .collect();
    let mut out = vec![Outcome { truth: Sign::Positive, predicted: None }; test.len()];
    for (i, o) in scored.into_iter().flatten() {
        out[i] = o;
    }
    out
}

fn tally(regime: Regime, scored: &[Outcome], abstained: usize) -> EvaluationReport {
    let (mut pos, mut neg, mut fp, mut fneg) = (0, 0, 0, 0);
    for o in scored {
        let Some(p) = o.predicted else { continue };
        match o.truth {
            Sign::Positive => {
                pos += 1;
                if p == Sign::Negative {
                    fneg += 1;
                }
            }
            Sign::Negative => {
                neg += 1;
                if p == Sign::Positive {
                    fp += 1;
                }
            }
        }
    }
    let tested = pos + neg;
    let correct = tested - fp - fneg;
    EvaluationReport {
        regime,
        tested,
        correct,
        accuracy: ratio(correct, tested),
        false_positive_rate: ratio(fp, neg),
        false_negative_rate: ratio(fneg, pos),
        abstained,
        positives_tested: pos,
        negatives_tested: neg,
    }
}

/// Accuracy over the test edges that pass the `q` gate; gated-out edges are
/// counted as abstentions and excluded from the rates.
pub fn evaluate(
    g: &SignedGraph,
    predictors: &PredictorSet,
    test: &[SignedEdge],
    policy: &PeerPolicy,
) -> EvaluationReport {
    let scored = outcomes(g, predictors, test, policy);
    let abstained = scored.iter().filter(|o| o.predicted.is_none()).count();
    tally(Regime::Raw, &scored, abstained)
}

/// Error on all gated negatives averaged with the error on an equally sized
/// sample (without replacement) of gated positives.
pub fn evaluate_averaged(
    g: &SignedGraph,
    predictors: &PredictorSet,
    test: &[SignedEdge],
    policy: &PeerPolicy,
    seed: u64,
) -> Result<EvaluationReport> {
    let scored = outcomes(g, predictors, test, policy);
    let abstained = scored.iter().filter(|o| o.predicted.is_none()).count();
    let (positives, negatives): (Vec<Outcome>, Vec<Outcome>) = scored
        .into_iter()
        .filter(|o| o.predicted.is_some())
        .partition(|o| o.truth == Sign::Positive);
    if negatives.is_empty() {
        return Err(Error::Data("no gated negative test edges to average over".into()));
    }
    if positives.len() < negatives.len() {
        return Err(Error::Data(format!(
            "only {} gated positive test edges for {} negatives",
            positives.len(),
            negatives.len()
        )));
    }
    let k = negatives.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sample: Vec<Outcome> = index::sample(&mut rng, positives.len(), k)
        .into_iter()
        .map(|i| positives[i])
        .collect();
    sample.extend(negatives);
    let mut report = tally(Regime::AveragedResults, &sample, abstained);
    report.accuracy = 1.0 - (report.false_positive_rate + report.false_negative_rate) / 2.0;
    Ok(report)
}

/// Balances the full edge list, then splits, trains and evaluates on the
/// balanced graph under `config.policy`.
pub fn evaluate_balanced(
    g: &SignedGraph,
    config: &TrainConfig,
    test_fraction: f64,
    seed: u64,
) -> Result<EvaluationReport> {
    let balanced = balance_by_sampling(g.edges(), seed)?;
    let bg = g.with_edges(balanced)?;
    let split = split_edges(bg.edges(), test_fraction, seed)?;
    let trained = train_all(&bg, &split, config)?;
    let mut report = evaluate(&bg, &trained.predictors, &split.test, &config.policy);
    report.regime = Regime::BalancedDataset;
    Ok(report)
}

/// Number of edges `x -> y` whose target is adjacent to at least `q` peers
/// of `x`.
pub fn count_threshold_edges(g: &SignedGraph, policy: &PeerPolicy) -> usize {
    let n = g.node_count();
    (0..n as u32)
        .into_par_iter()
        .map_init(
            || PeerFinder::new(n),
            |finder, x| {
                let x = NodeId(x);
                let out = g.out_edges(x);
                if out.is_empty() {
                    return 0;
                }
                if policy.q == 0 {
                    return out.len();
                }
                let peers = finder.peers(g, x, policy);
                out.iter()
                    .filter(|&&(y, _)| peers.adjacent_count(g, y) >= policy.q)
                    .count()
            },
        )
        .sum()
}

/// Parameters of the planted-model generator.
///
/// Nodes `0..base_nodes` are unmodelled: their out-links go to random
/// targets with random signs. Every later node `x` picks `peers_per_node`
/// hidden peers among the base nodes, each with a random influence, and
/// links to `targets_per_node` nodes that at least one hidden peer links to.
/// The sign of `x -> y` is the hidden predictor's sign, flipped with
/// probability `noise`. Base links are fixed before any modelled node is
/// generated, so the model stays self-consistent.
///
/// Recovery needs the hidden peers to cover most targets; the default
/// `base_out_degree` of `nodes - 1` (larger values are clamped to it) makes
/// every hidden peer adjacent to every target. Base nodes outside a node's
/// hidden set act as distractors: a slice of `d` ranked candidates holds the
/// hidden peers plus the best chance-correlated distractors, and the squared
/// loss rewards adding them. With `base_nodes == peers_per_node` (the
/// default) there are none, and recovery reaches about 99% at noise 0 with
/// `d = 10`. Ten base nodes drop it to about 85%.
#[derive(Clone, Debug, PartialEq)]
pub struct PlantedParams {
    pub nodes: usize,
    pub base_nodes: usize,
    pub peers_per_node: usize,
    pub base_out_degree: usize,
    pub targets_per_node: usize,
    pub base_positive_rate: f64,
    pub positive_influence_rate: f64,
    pub noise: f64,
}

impl Default for PlantedParams {
    fn default() -> Self {
        PlantedParams {
            nodes: 200,
            base_nodes: 5,
            peers_per_node: 5,
            base_out_degree: 199,
            targets_per_node: 150,
            base_positive_rate: 0.5,
            positive_influence_rate: 0.6,
            noise: 0.0,
        }
    }
}

impl PlantedParams {
    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("planted model: {m}")));
        if self.base_nodes == 0 || self.base_nodes >= self.nodes {
            return bad("need 0 < base_nodes < nodes");
        }
        if self.peers_per_node == 0 || self.peers_per_node > self.base_nodes {
            return bad("peers_per_node must lie in 1..=base_nodes");
        }
        if self.base_out_degree == 0 || self.targets_per_node == 0 {
            return bad("zero link density");
        }
        for (name, v) in [
            ("noise", self.noise),
            ("base_positive_rate", self.base_positive_rate),
            ("positive_influence_rate", self.positive_influence_rate),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(&format!("{name} must lie in [0, 1]"));
            }
        }
        Ok(())
    }
}

/// Hidden predictors behind a generated graph.
#[derive(Clone, Debug, PartialEq)]
pub struct PlantedModel {
    pub params: PlantedParams,
    hidden: Vec<Option<NodePredictor>>,
    /// Edges whose emitted sign was flipped by noise.
    pub flipped: Vec<(NodeId, NodeId)>,
}

impl PlantedModel {
    pub fn is_planted(&self, x: NodeId) -> bool {
        self.hidden[x.index()].is_some()
    }

    pub fn hidden(&self, x: NodeId) -> Option<&NodePredictor> {
        self.hidden[x.index()].as_ref()
    }

    pub fn predictors(&self) -> PredictorSet {
        self.hidden.iter().flatten().cloned().collect()
    }

    /// Sign the hidden predictor of `x` assigns to `y` on graph `g`.
    pub fn model_sign(&self, g: &SignedGraph, x: NodeId, y: NodeId) -> Option<Sign> {
        self.hidden(x).map(|p| predict_sign(g, p, y))
    }
}

pub fn generate_planted(params: &PlantedParams, seed: u64) -> Result<(SignedGraph, PlantedModel)> {
    params.validate()?;
    let n = params.nodes;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out: Vec<Vec<(NodeId, Sign)>> = vec![Vec::new(); n];
    let mut hidden: Vec<Option<NodePredictor>> = vec![None; n];
    let mut flipped = Vec::new();

    for b in 0..params.base_nodes {
        let others: Vec<usize> = (0..n).filter(|&v| v != b).collect();
        for &y in others.choose_multiple(&mut rng, params.base_out_degree.min(n - 1)) {
            let sign = if rng.gen_bool(params.base_positive_rate) {
                Sign::Positive
            } else {
                Sign::Negative
            };
            out[b].push((NodeId(y as u32), sign));
        }
        out[b].sort_unstable();
    }

    let sign_of = |out: &[Vec<(NodeId, Sign)>], z: NodeId, y: NodeId| -> i64 {
        let list = &out[z.index()];
        list.binary_search_by_key(&y, |&(v, _)| v)
            .map_or(0, |i| i64::from(list[i].1.value()))
    };

    for x in params.base_nodes..n {
        let xid = NodeId(x as u32);
        let peers: Vec<(NodeId, Sign)> = index::sample(&mut rng, params.base_nodes, params.peers_per_node)
            .into_iter()
            .map(|z| {
                let r = if rng.gen_bool(params.positive_influence_rate) {
                    Sign::Positive
                } else {
                    Sign::Negative
                };
                (NodeId(z as u32), r)
            })
            .collect();
        let mut covered: Vec<NodeId> = peers
            .iter()
            .flat_map(|&(z, _)| out[z.index()].iter().map(|&(y, _)| y))
            .filter(|&y| y != xid)
            .collect();
        covered.sort_unstable();
        covered.dedup();
        let k = params.targets_per_node.min(covered.len());
        let mut targets: Vec<NodeId> = covered.choose_multiple(&mut rng, k).copied().collect();
        targets.sort_unstable();
        let mut links = Vec::with_capacity(k);
        for y in targets {
            let f: i64 = peers
                .iter()
                .map(|&(z, r)| i64::from(r.value()) * sign_of(&out, z, y))
                .sum();
            let mut sign = Sign::of_score(f);
            if params.noise > 0.0 && rng.gen_bool(params.noise) {
                sign = sign.flip();
                flipped.push((xid, y));
            }
            links.push((y, sign));
        }
        out[x] = links;
        hidden[x] = Some(NodePredictor::new(xid, peers));
    }

    let edges = out.iter().enumerate().flat_map(|(s, list)| {
        list.iter()
            .map(move |&(d, sign)| SignedEdge { src: NodeId(s as u32), dst: d, sign })
    });
    let g = SignedGraph::from_edges(n, edges)?;
    Ok((
        g,
        PlantedModel {
            params: params.clone(),
            hidden,
            flipped,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::opinion::OpinionVariant;
    use proptest::prelude::*;

    const OPEN: PeerPolicy = PeerPolicy { variant: OpinionVariant::StandardAdjacent, p: 0, q: 0 };

    fn edges(triples: &[(u32, u32, i32)]) -> Vec<SignedEdge> {
        SignedGraph::from_triples(8, triples).unwrap().edges().to_vec()
    }

    #[test]
    fn perfect_toy_case() {
        // source 0 trusts 1; 1 agrees with every test link of 0
        let triples = [(1, 2, 1), (1, 3, -1), (0, 2, 1), (0, 3, -1), (0, 1, 1)];
        let g = SignedGraph::from_triples(4, &triples).unwrap();
        let preds: PredictorSet = [NodePredictor::new(NodeId(0), [(NodeId(1), Sign::Positive)])]
            .into_iter()
            .collect();
        let test = &g.edges()[2..4];
        let r = evaluate(&g, &preds, test, &OPEN);
        assert_eq!((r.tested, r.correct, r.abstained), (2, 2, 0));
        assert_eq!(r.accuracy, 1.0);
        assert_eq!(r.false_positive_rate, 0.0);
        assert_eq!(r.false_negative_rate, 0.0);
    }

    #[test]
    fn empty_predictor_on_positive_edges() {
        let triples = [(0, 1, 1), (0, 2, 1), (3, 1, -1)];
        let g = SignedGraph::from_triples(4, &triples).unwrap();
        let r = evaluate(&g, &PredictorSet::default(), &g.edges()[..2], &OPEN);
        assert_eq!(r.accuracy, 1.0);
    }

    #[test]
    fn gate_counts_abstentions() {
        let g = SignedGraph::from_triples(4, &[(0, 1, 1), (0, 2, -1)]).unwrap();
        let policy = PeerPolicy { q: 1, ..OPEN };
        let r = evaluate(&g, &PredictorSet::default(), g.edges(), &policy);
        assert_eq!((r.tested, r.abstained), (0, 2));
        assert_eq!(r.accuracy, 0.0);
    }

    #[test]
    fn averaged_anchors() {
        let mut triples = Vec::new();
        for y in 1..6 {
            triples.push((0, y, 1));
        }
        triples.push((0, 6, -1));
        triples.push((0, 7, -1));
        let g = SignedGraph::from_triples(8, &triples).unwrap();
        let always_plus = PredictorSet::default();
        for seed in 0..5 {
            let r = evaluate_averaged(&g, &always_plus, g.edges(), &OPEN, seed).unwrap();
            assert_eq!(r.accuracy, 0.5);
            assert_eq!(r.tested, 4);
        }
        let only_pos = edges(&[(0, 1, 1), (0, 2, 1)]);
        assert!(evaluate_averaged(&g, &always_plus, &only_pos, &OPEN, 0).is_err());
    }

    #[test]
    fn threshold_count_edges() {
        let g = SignedGraph::from_triples(2, &[(0, 1, 1)]).unwrap();
        assert_eq!(count_threshold_edges(&g, &PeerPolicy { q: 0, ..OPEN }), 1);
        assert_eq!(count_threshold_edges(&g, &PeerPolicy { q: 1, ..OPEN }), 0);
        let pq = PeerPolicy { variant: OpinionVariant::StandardPq, p: 1, q: 1 };
        assert_eq!(count_threshold_edges(&g, &pq), 0);
    }

    #[test]
    fn planted_self_consistent_without_noise() {
        let (g, model) = generate_planted(&PlantedParams::default(), 3).unwrap();
        assert!(model.flipped.is_empty());
        let mut checked = 0;
        for e in g.edges() {
            if let Some(s) = model.model_sign(&g, e.src, e.dst) {
                assert_eq!(s, e.sign);
                checked += 1;
            }
        }
        assert!(checked > 5000);
    }

    #[test]
    fn planted_noise_half_is_a_coin() {
        let params = PlantedParams { noise: 0.5, ..PlantedParams::default() };
        let (g, model) = generate_planted(&params, 4).unwrap();
        let (mut agree, mut total) = (0, 0);
        for e in g.edges() {
            if let Some(s) = model.model_sign(&g, e.src, e.dst) {
                total += 1;
                agree += usize::from(s == e.sign);
            }
        }
        let rate = agree as f64 / total as f64;
        assert!((rate - 0.5).abs() <= 0.03, "agreement {rate}");
    }

    #[test]
    fn planted_rejects_zero_density() {
        let params = PlantedParams { base_out_degree: 0, ..PlantedParams::default() };
        assert!(generate_planted(&params, 0).is_err());
    }

    fn arb_graph() -> impl Strategy<Value = SignedGraph> {
        prop::collection::vec((0u32..15, 0u32..15, any::<bool>()), 1..80).prop_map(|raw| {
            let t: Vec<_> = raw.iter().map(|&(s, d, p)| (s, d, if p { 1 } else { -1 })).collect();
            SignedGraph::from_triples(15, &t).unwrap()
        })
    }

    proptest! {
        #[test]
        fn threshold_count_monotone(g in arb_graph(), p in 0usize..4, q in 0usize..5) {
            let at = |p, q| count_threshold_edges(&g, &PeerPolicy { variant: OpinionVariant::StandardPq, p, q });
            prop_assert!(at(p + 1, q) <= at(p, q));
            prop_assert!(at(p, q + 1) <= at(p, q));
            prop_assert_eq!(at(p, 0), g.edge_count());
        }

        #[test]
        fn report_identities_and_order_invariance(g in arb_graph(), picks in prop::collection::vec((0u32..15, 0u32..15, any::<bool>()), 0..20), seed in any::<u64>()) {
            let preds: PredictorSet = (0..15u32)
                .map(|x| NodePredictor::new(NodeId(x), picks.iter().filter(|p| p.0 == x).map(|&(_, z, s)| (NodeId(z), if s { Sign::Positive } else { Sign::Negative }))))
                .collect();
            let policy = PeerPolicy { variant: OpinionVariant::StandardAdjacent, p: 0, q: 1 };
            let r = evaluate(&g, &preds, g.edges(), &policy);
            prop_assert_eq!(r.tested + r.abstained, g.edge_count());
            prop_assert!((r.accuracy * r.tested as f64 - r.correct as f64).abs() < 1e-9);
            let recombined = r.positives_tested as f64 * (1.0 - r.false_negative_rate)
                + r.negatives_tested as f64 * (1.0 - r.false_positive_rate);
            prop_assert!((recombined - r.correct as f64).abs() < 1e-9);
            let mut shuffled = g.edges().to_vec();
            shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(evaluate(&g, &preds, &shuffled, &policy), r);
        }
    }
}
