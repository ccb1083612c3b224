//! Signed graph snapshots: loading, adjacency queries, splits and balancing.

use std::collections::HashMap;
use std::fmt;
use std::io::{BufRead, Write};

use log::warn;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Dense node index, contiguous in `0..n` after loading.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub u32);

impl NodeId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Sign {
    Negative,
    Positive,
}

impl Sign {
    #[inline]
    pub fn value(self) -> i32 {
        match self {
            Sign::Positive => 1,
            Sign::Negative => -1,
        }
    }

    /// Sign of an integer score, with zero mapped to positive.
    #[inline]
    pub fn of_score(score: i64) -> Sign {
        if score >= 0 {
            Sign::Positive
        } else {
            Sign::Negative
        }
    }

    pub fn flip(self) -> Sign {
        match self {
            Sign::Positive => Sign::Negative,
            Sign::Negative => Sign::Positive,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SignedEdge {
    pub src: NodeId,
    pub dst: NodeId,
    pub sign: Sign,
}

impl SignedEdge {
    pub fn new(src: u32, dst: u32, sign: Sign) -> Self {
        SignedEdge {
            src: NodeId(src),
            dst: NodeId(dst),
            sign,
        }
    }
}

/// A labelled (src, dst, sign) triple used in splits; same shape as a stored edge.
pub type EdgeRecord = SignedEdge;

/// Immutable signed directed graph with out, in and undirected adjacency.
///
/// Out and in lists are sorted by neighbour id so sign lookups are a binary
/// search. The undirected list of `x` is the sorted, deduplicated union of
/// its in and out neighbours.
#[derive(Clone, Debug)]
pub struct SignedGraph {
    raw_ids: Vec<String>,
    edges: Vec<SignedEdge>,
    out_adj: Vec<Vec<(NodeId, Sign)>>,
    in_adj: Vec<Vec<(NodeId, Sign)>>,
    undirected: Vec<Vec<NodeId>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GraphStats {
    pub nodes: usize,
    pub edges: usize,
    pub positive: usize,
    pub negative: usize,
}

impl GraphStats {
    pub const TSV_HEADER: &'static str = "nodes\tedges\tpositive_pct\tnegative_pct";

    pub fn positive_pct(&self) -> f64 {
        pct(self.positive, self.edges)
    }

    pub fn negative_pct(&self) -> f64 {
        pct(self.negative, self.edges)
    }

    pub fn to_tsv_row(&self) -> String {
        format!(
            "{}\t{}\t{:.1}\t{:.1}",
            self.nodes,
            self.edges,
            self.positive_pct(),
            self.negative_pct()
        )
    }
}

fn pct(part: usize, whole: usize) -> f64 {
    if whole == 0 {
        0.0
    } else {
        100.0 * part as f64 / whole as f64
    }
}

impl SignedGraph {
    /// Builds a graph over `n` nodes. Self-loops are dropped with a warning
    /// and repeated `(src, dst)` pairs keep the last sign while holding the
    /// position of their first occurrence.
    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = SignedEdge>) -> Result<Self> {
        let raw_ids = (0..n).map(|i| i.to_string()).collect();
        Self::with_raw_ids(raw_ids, edges)
    }

    pub fn with_raw_ids(
        raw_ids: Vec<String>,
        edges: impl IntoIterator<Item = SignedEdge>,
    ) -> Result<Self> {
        let n = raw_ids.len();
        if n > u32::MAX as usize {
            return Err(Error::Data(format!("{n} nodes exceed the u32 id space")));
        }
        let mut slot: HashMap<(NodeId, NodeId), usize> = HashMap::new();
        let mut stored: Vec<SignedEdge> = Vec::new();
        let mut self_loops = 0usize;
        for e in edges {
            if e.src.index() >= n || e.dst.index() >= n {
                return Err(Error::Data(format!(
                    "edge {} -> {} has an endpoint outside 0..{n}",
                    e.src, e.dst
                )));
            }
            if e.src == e.dst {
                self_loops += 1;
                continue;
            }
            match slot.get(&(e.src, e.dst)) {
                Some(&i) => stored[i].sign = e.sign,
                None => {
                    slot.insert((e.src, e.dst), stored.len());
                    stored.push(e);
                }
            }
        }
        if self_loops > 0 {
            warn!("dropped {self_loops} self-loop(s)");
        }

        let mut out_adj = vec![Vec::new(); n];
        let mut in_adj = vec![Vec::new(); n];
        let mut undirected = vec![Vec::new(); n];
        for e in &stored {
            out_adj[e.src.index()].push((e.dst, e.sign));
            in_adj[e.dst.index()].push((e.src, e.sign));
            undirected[e.src.index()].push(e.dst);
            undirected[e.dst.index()].push(e.src);
        }
        for list in out_adj.iter_mut().chain(in_adj.iter_mut()) {
            list.sort_unstable_by_key(|&(v, _)| v);
        }
        for list in &mut undirected {
            list.sort_unstable();
            list.dedup();
        }
        Ok(SignedGraph {
            raw_ids,
            edges: stored,
            out_adj,
            in_adj,
            undirected,
        })
    }

    /// Convenience constructor from `(src, dst, sign)` integer triples.
    pub fn from_triples(n: usize, triples: &[(u32, u32, i32)]) -> Result<Self> {
        let edges = triples
            .iter()
            .map(|&(s, d, v)| {
                let sign = match v {
                    1 => Sign::Positive,
                    -1 => Sign::Negative,
                    other => return Err(Error::Data(format!("sign {other} is not +1 or -1"))),
                };
                Ok(SignedEdge::new(s, d, sign))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_edges(n, edges)
    }

    /// Same node set and id mapping, different edges.
    pub fn with_edges(&self, edges: impl IntoIterator<Item = SignedEdge>) -> Result<Self> {
        Self::with_raw_ids(self.raw_ids.clone(), edges)
    }

    #[inline]
    pub fn node_count(&self) -> usize {
        self.raw_ids.len()
    }

    #[inline]
    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[SignedEdge] {
        &self.edges
    }

    pub fn raw_id(&self, v: NodeId) -> &str {
        &self.raw_ids[v.index()]
    }

    pub fn raw_ids(&self) -> &[String] {
        &self.raw_ids
    }

    pub fn out_edges(&self, v: NodeId) -> &[(NodeId, Sign)] {
        &self.out_adj[v.index()]
    }

    pub fn in_edges(&self, v: NodeId) -> &[(NodeId, Sign)] {
        &self.in_adj[v.index()]
    }

    /// Sorted undirected neighbours of `v`.
    pub fn neighbours(&self, v: NodeId) -> &[NodeId] {
        &self.undirected[v.index()]
    }

    pub fn degree(&self, v: NodeId) -> usize {
        self.undirected[v.index()].len()
    }

    pub fn is_adjacent(&self, u: NodeId, v: NodeId) -> bool {
        self.undirected[u.index()].binary_search(&v).is_ok()
    }

    /// Sign of the directed edge `src -> dst`, if present.
    pub fn sign_of(&self, src: NodeId, dst: NodeId) -> Option<Sign> {
        let list = &self.out_adj[src.index()];
        list.binary_search_by_key(&dst, |&(v, _)| v)
            .ok()
            .map(|i| list[i].1)
    }

    pub fn stats(&self) -> GraphStats {
        let positive = self
            .edges
            .iter()
            .filter(|e| e.sign == Sign::Positive)
            .count();
        GraphStats {
            nodes: self.node_count(),
            edges: self.edge_count(),
            positive,
            negative: self.edge_count() - positive,
        }
    }

    /// Short hex digest of the raw-id mapping; predictor files embed it.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for id in &self.raw_ids {
            h.update(id.as_bytes());
            h.update(b"\n");
        }
        h.finalize()[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Tokens accepted in the sign column of an edge list.
#[derive(Clone, Debug)]
pub struct EdgeListFormat {
    pub positive: Vec<String>,
    pub negative: Vec<String>,
    pub comment_prefix: char,
}

impl Default for EdgeListFormat {
    fn default() -> Self {
        EdgeListFormat {
            positive: vec!["1".into(), "+1".into()],
            negative: vec!["-1".into()],
            comment_prefix: '#',
        }
    }
}

#[derive(Default)]
struct IdInterner {
    index: HashMap<String, u32>,
    raw: Vec<String>,
}

impl IdInterner {
    fn intern(&mut self, token: &str) -> NodeId {
        if let Some(&i) = self.index.get(token) {
            return NodeId(i);
        }
        let i = self.raw.len() as u32;
        self.index.insert(token.to_owned(), i);
        self.raw.push(token.to_owned());
        NodeId(i)
    }
}

/// Reads `<src> <dst> <sign>` lines (whitespace or tab separated). Raw ids
/// are remapped to dense ids in order of first appearance.
pub fn load_edge_list<R: BufRead>(reader: R, format: &EdgeListFormat) -> Result<SignedGraph> {
    let mut ids = IdInterner::default();
    let mut edges = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with(format.comment_prefix) {
            continue;
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.len() != 3 {
            return Err(Error::parse(
                lineno + 1,
                format!("expected `<src> <dst> <sign>`, got {} field(s)", tokens.len()),
            ));
        }
        let sign = if format.positive.iter().any(|t| t == tokens[2]) {
            Sign::Positive
        } else if format.negative.iter().any(|t| t == tokens[2]) {
            Sign::Negative
        } else {
            return Err(Error::parse(
                lineno + 1,
                format!("unrecognised sign token `{}`", tokens[2]),
            ));
        };
        if tokens[0] == tokens[1] {
            warn!("line {}: dropping self-loop on {}", lineno + 1, tokens[0]);
            continue;
        }
        let src = ids.intern(tokens[0]);
        let dst = ids.intern(tokens[1]);
        edges.push(SignedEdge { src, dst, sign });
    }
    if edges.is_empty() {
        return Err(Error::EmptyInput);
    }
    SignedGraph::with_raw_ids(ids.raw, edges)
}

/// Reads the Wikipedia adminship election dump (`E`/`T`/`U`/`N`/`V` records).
/// Each `V <vote> <voter> ...` line under a `U <candidate> ...` line becomes a
/// voter -> candidate edge; neutral (0) votes carry no sign and are skipped.
pub fn load_wiki_elections<R: BufRead>(reader: R) -> Result<SignedGraph> {
    let mut ids = IdInterner::default();
    let mut edges = Vec::new();
    let mut candidate: Option<String> = None;
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let tokens: Vec<&str> = line.split_whitespace().collect();
        match tokens.first().copied() {
            None => {}
            Some(t) if t.starts_with('#') => {}
            Some("E") => candidate = None,
            Some("U") => {
                let id = tokens
                    .get(1)
                    .ok_or_else(|| Error::parse(lineno + 1, "U record without a user id"))?;
                candidate = Some((*id).to_owned());
            }
            Some("V") => {
                if tokens.len() < 3 {
                    return Err(Error::parse(lineno + 1, "V record needs a vote and a voter"));
                }
                let cand = candidate
                    .as_deref()
                    .ok_or_else(|| Error::parse(lineno + 1, "V record before any U record"))?;
                let sign = match tokens[1] {
                    "1" => Sign::Positive,
                    "-1" => Sign::Negative,
                    "0" => continue,
                    other => {
                        return Err(Error::parse(
                            lineno + 1,
                            format!("unrecognised vote `{other}`"),
                        ))
                    }
                };
                if tokens[2] == cand {
                    continue;
                }
                let src = ids.intern(tokens[2]);
                let dst = ids.intern(cand);
                edges.push(SignedEdge { src, dst, sign });
            }
            Some(_) => {}
        }
    }
    if edges.is_empty() {
        return Err(Error::EmptyInput);
    }
    SignedGraph::with_raw_ids(ids.raw, edges)
}

/// Default rating at or below which a rating becomes a negative link.
pub const DEFAULT_NEGATIVE_THRESHOLD: u8 = 3;

/// Converts `<user> <item> <rating> <timestamp>` lines into a bipartite
/// signed graph with user -> item edges.
///
/// Users take dense ids `0..u` and items `u..u+i`, each block in order of
/// first appearance. Raw ids are prefixed `u:` and `i:` so the two id spaces
/// stay disjoint when written back out as an edge list.
pub fn load_ratings<R: BufRead>(reader: R, negative_threshold: u8) -> Result<SignedGraph> {
    let mut users = IdInterner::default();
    let mut items = IdInterner::default();
    let mut rows: Vec<(NodeId, NodeId, Sign)> = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.len() < 3 {
            return Err(Error::parse(
                lineno + 1,
                "expected `<user> <item> <rating> [timestamp]`",
            ));
        }
        let rating: u8 = tokens[2]
            .parse()
            .map_err(|_| Error::parse(lineno + 1, format!("bad rating `{}`", tokens[2])))?;
        if !(1..=5).contains(&rating) {
            return Err(Error::parse(
                lineno + 1,
                format!("rating {rating} outside 1..5"),
            ));
        }
        let sign = if rating <= negative_threshold {
            Sign::Negative
        } else {
            Sign::Positive
        };
        let u = users.intern(&format!("u:{}", tokens[0]));
        let i = items.intern(&format!("i:{}", tokens[1]));
        rows.push((u, i, sign));
    }
    if rows.is_empty() {
        return Err(Error::EmptyInput);
    }
    let offset = users.raw.len() as u32;
    let mut raw = users.raw;
    raw.extend(items.raw);
    let edges = rows.into_iter().map(|(u, i, sign)| {
        let dst = NodeId(offset + i.0);
        SignedEdge { src: u, dst, sign }
    });
    let g = SignedGraph::with_raw_ids(raw, edges)?;
    if g
        .edges()
        .iter()
        .any(|e| e.src.0 >= offset || e.dst.0 < offset)
    {
        return Err(Error::Internal("user and item id ranges overlap".into()));
    }
    Ok(g)
}

/// Writes the graph as a tab-separated edge list in raw ids; the output
/// loads back with [`load_edge_list`] and the default format.
pub fn write_edge_list<W: Write>(g: &SignedGraph, mut out: W) -> Result<()> {
    writeln!(
        out,
        "# peersign edge list v1\tnodes={}\tedges={}",
        g.node_count(),
        g.edge_count()
    )?;
    for e in g.edges() {
        writeln!(
            out,
            "{}\t{}\t{}",
            g.raw_id(e.src),
            g.raw_id(e.dst),
            e.sign.value()
        )?;
    }
    Ok(())
}

/// Number of shared undirected neighbours of `u` and `v`, not counting
/// `u` or `v` themselves.
pub fn common_neighbours(g: &SignedGraph, u: NodeId, v: NodeId) -> usize {
    let (a, b) = (g.neighbours(u), g.neighbours(v));
    let (mut i, mut j, mut count) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                if a[i] != u && a[i] != v {
                    count += 1;
                }
                i += 1;
                j += 1;
            }
        }
    }
    count
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatasetSplit {
    pub train: Vec<EdgeRecord>,
    pub validation: Vec<EdgeRecord>,
    pub test: Vec<EdgeRecord>,
    pub seed: u64,
}

pub const DEFAULT_TEST_FRACTION: f64 = 0.1;

/// Holds out `floor(test_fraction * |E|)` random edges for testing and
/// splits the rest in half (train gets the extra edge when odd).
pub fn split_dataset(g: &SignedGraph, test_fraction: f64, seed: u64) -> Result<DatasetSplit> {
    split_edges(g.edges(), test_fraction, seed)
}

pub fn split_edges(edges: &[SignedEdge], test_fraction: f64, seed: u64) -> Result<DatasetSplit> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::Config(format!(
            "test fraction {test_fraction} must lie strictly between 0 and 1"
        )));
    }
    let mut shuffled = edges.to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    shuffled.shuffle(&mut rng);
    let n_test = (test_fraction * shuffled.len() as f64).floor() as usize;
    let rest = shuffled.split_off(n_test);
    let n_train = rest.len() - rest.len() / 2;
    let (train, validation) = rest.split_at(n_train);
    Ok(DatasetSplit {
        train: train.to_vec(),
        validation: validation.to_vec(),
        test: shuffled,
        seed,
    })
}

/// Keeps every negative edge and an equal-size uniform sample of positives,
/// returned in a seed-determined shuffled order.
pub fn balance_by_sampling(edges: &[SignedEdge], seed: u64) -> Result<Vec<SignedEdge>> {
    let (mut positives, negatives): (Vec<SignedEdge>, Vec<SignedEdge>) =
        edges.iter().partition(|e| e.sign == Sign::Positive);
    if positives.len() < negatives.len() {
        return Err(Error::Data(format!(
            "cannot balance: {} positive edges but {} negative",
            positives.len(),
            negatives.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (sample, _) = positives.partial_shuffle(&mut rng, negatives.len());
    let mut out: Vec<SignedEdge> = sample.to_vec();
    out.extend(negatives);
    out.shuffle(&mut rng);
    Ok(out)
}
