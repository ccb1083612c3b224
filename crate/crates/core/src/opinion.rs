//! Peer opinions: the extended sign, peer sets, the score `F_x(y)` and the
//! gated prediction `S(x, y)`.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::graph::{NodeId, Sign, SignedGraph};

/// Influence of a trusted peer on the source node.
pub type Influence = Sign;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum OpinionVariant {
    /// Peers are neighbours of the source; opinion is the peer's own link sign.
    SimpleAdjacent,
    /// Peers are neighbours of the source; opinion is link sign times influence.
    StandardAdjacent,
    /// Peers are nodes with at least `p` common neighbours with the source.
    StandardPq,
}

impl OpinionVariant {
    /// Whether peers carry a learned influence (both polarities are candidates).
    pub fn has_influence(self) -> bool {
        !matches!(self, OpinionVariant::SimpleAdjacent)
    }

    pub fn uses_adjacent_peers(self) -> bool {
        !matches!(self, OpinionVariant::StandardPq)
    }
}

impl fmt::Display for OpinionVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OpinionVariant::SimpleAdjacent => "simple-adjacent",
            OpinionVariant::StandardAdjacent => "standard-adjacent",
            OpinionVariant::StandardPq => "standard-pq",
        })
    }
}

impl FromStr for OpinionVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "simple-adjacent" => Ok(OpinionVariant::SimpleAdjacent),
            "standard-adjacent" => Ok(OpinionVariant::StandardAdjacent),
            "standard-pq" => Ok(OpinionVariant::StandardPq),
            other => Err(Error::Config(format!("unknown opinion variant `{other}`"))),
        }
    }
}

/// Peer eligibility (`p`) and prediction gate (`q`) under a variant.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PeerPolicy {
    pub variant: OpinionVariant,
    /// Minimum common neighbours with the source for a node to be a peer
    /// (Standard-pq only).
    pub p: usize,
    /// Minimum number of the source's peers adjacent to the target before a
    /// prediction is attempted.
    pub q: usize,
}

impl Default for PeerPolicy {
    fn default() -> Self {
        PeerPolicy {
            variant: OpinionVariant::StandardPq,
            p: 15,
            q: 20,
        }
    }
}

/// Learned predictor for one source node.
///
/// `trusted` is sorted by peer id, holds each peer at most once and never
/// the source itself. A peer with influence `+` corresponds to `w+ = 1`,
/// influence `-` to `w- = 1`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NodePredictor {
    source: NodeId,
    trusted: Vec<(NodeId, Influence)>,
}

impl NodePredictor {
    pub fn empty(source: NodeId) -> Self {
        NodePredictor {
            source,
            trusted: Vec::new(),
        }
    }

    /// Canonicalises `entries`: duplicates collapse, a peer listed with both
    /// influences is removed (its two opinions cancel), and the source is
    /// dropped.
    pub fn new(source: NodeId, entries: impl IntoIterator<Item = (NodeId, Influence)>) -> Self {
        let mut all: Vec<(NodeId, Influence)> =
            entries.into_iter().filter(|&(z, _)| z != source).collect();
        all.sort_unstable();
        all.dedup();
        let mut trusted = Vec::with_capacity(all.len());
        let mut i = 0;
        while i < all.len() {
            if i + 1 < all.len() && all[i + 1].0 == all[i].0 {
                i += 2;
            } else {
                trusted.push(all[i]);
                i += 1;
            }
        }
        NodePredictor { source, trusted }
    }

    pub fn source(&self) -> NodeId {
        self.source
    }

    pub fn trusted(&self) -> &[(NodeId, Influence)] {
        &self.trusted
    }

    pub fn len(&self) -> usize {
        self.trusted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trusted.is_empty()
    }

    /// Merge with another set of entries, re-canonicalising.
    pub fn merged(&self, extra: &[(NodeId, Influence)]) -> NodePredictor {
        NodePredictor::new(
            self.source,
            self.trusted.iter().chain(extra.iter()).copied(),
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Prediction {
    /// `None` when the q-gate rejected the target.
    pub value: Option<Sign>,
    pub gate_peers: usize,
}

impl Prediction {
    pub fn is_abstain(&self) -> bool {
        self.value.is_none()
    }
}

/// `s'(z, y)`: the sign of `z -> y` as `+1`/`-1`, or `0` when absent.
#[inline]
pub fn extended_sign(g: &SignedGraph, z: NodeId, y: NodeId) -> i32 {
    g.sign_of(z, y).map_or(0, Sign::value)
}

/// The peers of a source node, either an explicit sorted list or every node
/// but the source (Standard-pq with `p = 0`).
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PeerSet {
    AllExcept { source: NodeId, n: usize },
    Listed(Vec<NodeId>),
}

impl PeerSet {
    pub fn contains(&self, z: NodeId) -> bool {
        match self {
            PeerSet::AllExcept { source, n } => z != *source && z.index() < *n,
            PeerSet::Listed(v) => v.binary_search(&z).is_ok(),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            PeerSet::AllExcept { n, .. } => n.saturating_sub(1),
            PeerSet::Listed(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_vec(&self) -> Vec<NodeId> {
        match self {
            PeerSet::AllExcept { source, n } => (0..*n as u32)
                .map(NodeId)
                .filter(|z| z != source)
                .collect(),
            PeerSet::Listed(v) => v.clone(),
        }
    }

    /// Number of peers adjacent (undirected) to `y`.
    pub fn adjacent_count(&self, g: &SignedGraph, y: NodeId) -> usize {
        let ny = g.neighbours(y);
        match self {
            PeerSet::AllExcept { source, .. } => {
                ny.len() - usize::from(ny.binary_search(source).is_ok())
            }
            PeerSet::Listed(v) => {
                let (small, large) = if v.len() <= ny.len() { (&v[..], ny) } else { (ny, &v[..]) };
                small
                    .iter()
                    .filter(|z| large.binary_search(z).is_ok())
                    .count()
            }
        }
    }
}

/// Reusable scratch space for peer-set computation; one per worker thread.
pub struct PeerFinder {
    counts: Vec<u32>,
    touched: Vec<NodeId>,
}

impl PeerFinder {
    pub fn new(n: usize) -> Self {
        PeerFinder {
            counts: vec![0; n],
            touched: Vec::new(),
        }
    }

    pub fn peers(&mut self, g: &SignedGraph, x: NodeId, policy: &PeerPolicy) -> PeerSet {
        if policy.variant.uses_adjacent_peers() {
            return PeerSet::Listed(g.neighbours(x).to_vec());
        }
        if policy.p == 0 {
            return PeerSet::AllExcept {
                source: x,
                n: g.node_count(),
            };
        }
        if self.counts.len() < g.node_count() {
            self.counts.resize(g.node_count(), 0);
        }
        // two-hop walk: counts[z] = |N(x) ∩ N(z)|
        for &w in g.neighbours(x) {
            for &z in g.neighbours(w) {
                if z == x {
                    continue;
                }
                if self.counts[z.index()] == 0 {
                    self.touched.push(z);
                }
                self.counts[z.index()] += 1;
            }
        }
        let p = policy.p as u32;
        let mut out: Vec<NodeId> = Vec::new();
        for z in self.touched.drain(..) {
            if self.counts[z.index()] >= p {
                out.push(z);
            }
            self.counts[z.index()] = 0;
        }
        out.sort_unstable();
        PeerSet::Listed(out)
    }
}

/// Sorted peer list of `x` under `policy`.
pub fn peers_of(g: &SignedGraph, x: NodeId, policy: &PeerPolicy) -> Vec<NodeId> {
    PeerFinder::new(g.node_count()).peers(g, x, policy).to_vec()
}

/// `F_x(y)`: sum over trusted peers of influence times `s'(z, y)`. Simple
/// predictors carry influence `+` on every peer, which gives the plain sum.
pub fn score(g: &SignedGraph, predictor: &NodePredictor, y: NodeId) -> i64 {
    predictor
        .trusted()
        .iter()
        .map(|&(z, r)| i64::from(r.value() * extended_sign(g, z, y)))
        .sum()
}

/// Ungated sign prediction (ties predict `+`).
pub fn predict_sign(g: &SignedGraph, predictor: &NodePredictor, y: NodeId) -> Sign {
    Sign::of_score(score(g, predictor, y))
}

/// Gated prediction with a precomputed peer set of the predictor's source.
pub fn predict_with_peers(
    g: &SignedGraph,
    predictor: &NodePredictor,
    peers: &PeerSet,
    y: NodeId,
    q: usize,
) -> Prediction {
    let gate_peers = peers.adjacent_count(g, y);
    let value = (gate_peers >= q).then(|| predict_sign(g, predictor, y));
    Prediction { value, gate_peers }
}

pub fn predict(
    g: &SignedGraph,
    predictor: &NodePredictor,
    y: NodeId,
    policy: &PeerPolicy,
) -> Prediction {
    let peers = PeerFinder::new(g.node_count()).peers(g, predictor.source(), policy);
    predict_with_peers(g, predictor, &peers, y, policy.q)
}

/// Metadata line of a predictor file: ordered `key=value` pairs.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PredictorHeader {
    pub entries: Vec<(String, String)>,
}

impl PredictorHeader {
    pub const MAGIC: &'static str = "# peersign predictors v1";

    pub fn set(&mut self, key: &str, value: impl ToString) {
        let value = value.to_string();
        match self.entries.iter_mut().find(|(k, _)| k == key) {
            Some(slot) => slot.1 = value,
            None => self.entries.push((key.to_owned(), value)),
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }
}

/// Writes one line per predictor, `<src> <k> <peer:infl> ...`, sorted by
/// source id, with `infl` one of `+` or `-`.
pub fn write_predictors<W: Write>(
    mut out: W,
    header: &PredictorHeader,
    predictors: &[NodePredictor],
) -> Result<()> {
    write!(out, "{}", PredictorHeader::MAGIC)?;
    for (k, v) in &header.entries {
        write!(out, "\t{k}={v}")?;
    }
    writeln!(out)?;
    let mut sorted: Vec<&NodePredictor> = predictors.iter().collect();
    sorted.sort_by_key(|p| p.source());
    for p in sorted {
        write!(out, "{} {}", p.source(), p.len())?;
        for &(z, r) in p.trusted() {
            let c = if r == Sign::Positive { '+' } else { '-' };
            write!(out, " {z}:{c}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

pub fn read_predictors<R: BufRead>(reader: R) -> Result<(PredictorHeader, Vec<NodePredictor>)> {
    let mut header = PredictorHeader::default();
    let mut predictors = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if lineno == 0 {
            let rest = line.strip_prefix(PredictorHeader::MAGIC).ok_or_else(|| {
                Error::parse(1, "missing predictor file header")
            })?;
            for kv in rest.split('\t').filter(|s| !s.is_empty()) {
                let (k, v) = kv
                    .split_once('=')
                    .ok_or_else(|| Error::parse(1, format!("bad header field `{kv}`")))?;
                header.set(k, v);
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let bad = |msg: &str| Error::parse(lineno + 1, msg.to_owned());
        let mut tokens = line.split_whitespace();
        let src: u32 = tokens
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| bad("bad source id"))?;
        let k: usize = tokens
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| bad("bad peer count"))?;
        let mut entries = Vec::with_capacity(k);
        for tok in tokens {
            let (z, c) = tok.split_once(':').ok_or_else(|| bad("bad peer entry"))?;
            let z: u32 = z.parse().map_err(|_| bad("bad peer id"))?;
            let r = match c {
                "+" => Sign::Positive,
                "-" => Sign::Negative,
                _ => return Err(bad("influence must be + or -")),
            };
            entries.push((NodeId(z), r));
        }
        if entries.len() != k {
            return Err(bad("peer count does not match entries"));
        }
        let p = NodePredictor::new(NodeId(src), entries);
        if p.len() != k {
            return Err(bad("predictor entries are not canonical"));
        }
        predictors.push(p);
    }
    if header.entries.is_empty() && predictors.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok((header, predictors))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const P: Sign = Sign::Positive;
    const N: Sign = Sign::Negative;

    #[test]
    fn extended_sign_is_directional() {
        let g = SignedGraph::from_triples(3, &[(0, 1, -1)]).unwrap();
        assert_eq!(extended_sign(&g, NodeId(0), NodeId(1)), -1);
        assert_eq!(extended_sign(&g, NodeId(1), NodeId(0)), 0);
        assert_eq!(extended_sign(&g, NodeId(0), NodeId(2)), 0);
    }

    #[test]
    fn peers_of_isolated_and_triangle() {
        let g = SignedGraph::from_triples(4, &[(0, 1, 1), (1, 2, 1), (2, 0, -1)]).unwrap();
        for variant in [
            OpinionVariant::SimpleAdjacent,
            OpinionVariant::StandardAdjacent,
            OpinionVariant::StandardPq,
        ] {
            let policy = PeerPolicy { variant, p: 1, q: 0 };
            assert!(peers_of(&g, NodeId(3), &policy).is_empty());
        }
        let pq = PeerPolicy { variant: OpinionVariant::StandardPq, p: 1, q: 0 };
        assert_eq!(peers_of(&g, NodeId(0), &pq), vec![NodeId(1), NodeId(2)]);
        let all = PeerPolicy { p: 0, ..pq };
        assert_eq!(
            peers_of(&g, NodeId(0), &all),
            vec![NodeId(1), NodeId(2), NodeId(3)]
        );
    }

    #[test]
    fn score_examples() {
        let g = SignedGraph::from_triples(4, &[(1, 3, -1), (2, 3, 1)]).unwrap();
        let x = NodeId(0);
        assert_eq!(score(&g, &NodePredictor::empty(x), NodeId(3)), 0);
        assert_eq!(score(&g, &NodePredictor::new(x, [(NodeId(1), P)]), NodeId(3)), -1);
        let both_neg = NodePredictor::new(x, [(NodeId(1), N), (NodeId(2), N)]);
        assert_eq!(score(&g, &both_neg, NodeId(3)), 0);
    }

    #[test]
    fn gate_and_tie() {
        let g = SignedGraph::from_triples(5, &[(0, 1, 1), (0, 2, 1), (1, 4, 1), (2, 4, -1), (3, 4, 1)])
            .unwrap();
        let x = NodeId(0);
        let policy = PeerPolicy { variant: OpinionVariant::StandardAdjacent, p: 0, q: 0 };
        let pred = predict(&g, &NodePredictor::empty(x), NodeId(4), &policy);
        assert_eq!(pred.value, Some(P));
        // peers of 0 are {1, 2}; both touch 4
        assert_eq!(pred.gate_peers, 2);
        let gated = PeerPolicy { q: 5, ..policy };
        assert!(predict(&g, &NodePredictor::empty(x), NodeId(4), &gated).is_abstain());
    }

    #[test]
    fn canonicalisation_removes_conflicts() {
        let p = NodePredictor::new(
            NodeId(0),
            [(NodeId(2), P), (NodeId(2), N), (NodeId(1), N), (NodeId(1), N), (NodeId(0), P)],
        );
        assert_eq!(p.trusted(), &[(NodeId(1), N)]);
    }

    #[test]
    fn predictor_file_round_trip_and_errors() {
        let preds = vec![
            NodePredictor::new(NodeId(3), [(NodeId(1), P), (NodeId(7), N)]),
            NodePredictor::empty(NodeId(0)),
        ];
        let mut header = PredictorHeader::default();
        header.set("graph", "abcd");
        header.set("variant", OpinionVariant::StandardPq);
        let mut buf = Vec::new();
        write_predictors(&mut buf, &header, &preds).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.contains("\n0 0\n3 2 1:+ 7:-\n"));
        let (h, back) = read_predictors(buf.as_slice()).unwrap();
        assert_eq!(h, header);
        assert_eq!(back.len(), 2);
        assert_eq!(back[1], preds[0]);
        assert!(read_predictors("# peersign predictors v1\n1 2 3:+\n".as_bytes()).is_err());
        assert!(read_predictors("1 0\n".as_bytes()).is_err());
    }

    fn arb_graph() -> impl Strategy<Value = SignedGraph> {
        prop::collection::vec((0u32..12, 0u32..12, any::<bool>()), 0..60).prop_map(|raw| {
            let t: Vec<_> = raw.iter().map(|&(s, d, p)| (s, d, if p { 1 } else { -1 })).collect();
            SignedGraph::from_triples(12, &t).unwrap()
        })
    }

    proptest! {
        #[test]
        fn score_is_additive_and_negates(g in arb_graph(), picks in prop::collection::vec((1u32..12, any::<bool>()), 0..10), y in 0u32..12) {
            let entries: Vec<_> = picks.iter().map(|&(z, s)| (NodeId(z), if s { P } else { N })).collect();
            let full = NodePredictor::new(NodeId(0), entries.clone());
            let (a, b) = full.trusted().split_at(full.len() / 2);
            let pa = NodePredictor::new(NodeId(0), a.to_vec());
            let pb = NodePredictor::new(NodeId(0), b.to_vec());
            let y = NodeId(y);
            prop_assert_eq!(score(&g, &full, y), score(&g, &pa, y) + score(&g, &pb, y));
            let flipped = NodePredictor::new(NodeId(0), full.trusted().iter().map(|&(z, r)| (z, r.flip())));
            prop_assert_eq!(score(&g, &flipped, y), -score(&g, &full, y));
            let policy = PeerPolicy { variant: OpinionVariant::StandardPq, p: 1, q: 0 };
            prop_assert!(!predict(&g, &full, y, &policy).is_abstain());
        }

        #[test]
        fn pq_eligibility_is_symmetric(g in arb_graph(), p in 0usize..4, a in 0u32..12, b in 0u32..12) {
            prop_assume!(a != b);
            let policy = PeerPolicy { variant: OpinionVariant::StandardPq, p, q: 0 };
            let ab = peers_of(&g, NodeId(a), &policy).contains(&NodeId(b));
            let ba = peers_of(&g, NodeId(b), &policy).contains(&NodeId(a));
            prop_assert_eq!(ab, ba);
            let cn = crate::graph::common_neighbours(&g, NodeId(a), NodeId(b));
            prop_assert_eq!(ab, cn >= p);
        }

        #[test]
        fn extended_sign_matches_edge_set(g in arb_graph(), z in 0u32..12, y in 0u32..12) {
            let e = g.edges().iter().find(|e| e.src == NodeId(z) && e.dst == NodeId(y));
            prop_assert_eq!(extended_sign(&g, NodeId(z), NodeId(y)), e.map_or(0, |e| e.sign.value()));
        }
    }
}
