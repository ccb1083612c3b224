//! Per-node QUBO subproblems and the two solvers.
//!
//! For a source `x`, candidate entries `(v, σ)` and training pairs
//! `(y, s)`, the subproblem minimises
//!
//! ```text
//! sum over (y, s) of ((1/N) * sum over set (v, σ) of σ·s'(v, y) - s)^2  +  λ·(set bits)
//! ```
//!
//! Expanding the square with `b² = b` gives
//!
//! * `constant   = |TD|`
//! * `linear     = C_vv / N² - 2σ L_v / N + λ`
//! * `pair (i,j) = 2 σ_i σ_j C_{v_i v_j} / N²`
//!
//! with `C_vu = Σ s'(v,y) s'(u,y)` and `L_v = Σ s'(v,y) s`.

use std::io::{BufRead, Write};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::{NodeId, Sign, SignedGraph};
use crate::opinion::{extended_sign, Influence, OpinionVariant};

/// Largest variable count [`solve_exact`] will enumerate.
pub const MAX_EXACT_VARS: usize = 24;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VarLabel {
    pub peer: NodeId,
    pub influence: Influence,
}

/// Binary quadratic objective `constant + Σ linear_i b_i + Σ_{i<j} q_ij b_i b_j`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuboInstance {
    linear: Vec<f64>,
    // packed strict upper triangle, row-major
    upper: Vec<f64>,
    constant: f64,
    labels: Option<Vec<VarLabel>>,
}

#[inline]
fn packed_index(m: usize, i: usize, j: usize) -> usize {
    debug_assert!(i < j && j < m);
    i * (2 * m - i - 1) / 2 + (j - i - 1)
}

impl QuboInstance {
    /// Instance with the given linear terms and no pairwise terms.
    pub fn new(constant: f64, linear: Vec<f64>) -> Self {
        let m = linear.len();
        QuboInstance {
            linear,
            upper: vec![0.0; m * m.saturating_sub(1) / 2],
            constant,
            labels: None,
        }
    }

    pub fn with_labels(mut self, labels: Vec<VarLabel>) -> Result<Self> {
        if labels.len() != self.len() {
            return Err(Error::LengthMismatch {
                expected: self.len(),
                got: labels.len(),
            });
        }
        self.labels = Some(labels);
        Ok(self)
    }

    /// Sets the coefficient of the unordered pair `{i, j}`.
    pub fn set_pair(&mut self, i: usize, j: usize, value: f64) {
        assert!(i != j, "pair coefficient needs two distinct variables");
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        let m = self.len();
        self.upper[packed_index(m, a, b)] = value;
    }

    pub fn pair(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return 0.0;
        }
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        self.upper[packed_index(self.len(), a, b)]
    }

    pub fn len(&self) -> usize {
        self.linear.len()
    }

    pub fn is_empty(&self) -> bool {
        self.linear.is_empty()
    }

    pub fn linear(&self) -> &[f64] {
        &self.linear
    }

    pub fn constant(&self) -> f64 {
        self.constant
    }

    pub fn labels(&self) -> Option<&[VarLabel]> {
        self.labels.as_deref()
    }

    /// Sum of absolute coefficients; sets the scale of comparison tolerances.
    fn magnitude(&self) -> f64 {
        1.0 + self.constant.abs()
            + self.linear.iter().map(|v| v.abs()).sum::<f64>()
            + self.upper.iter().map(|v| v.abs()).sum::<f64>()
    }

    fn dense_pairs(&self) -> Vec<f64> {
        let m = self.len();
        let mut q = vec![0.0; m * m];
        for i in 0..m {
            for j in i + 1..m {
                let v = self.upper[packed_index(m, i, j)];
                q[i * m + j] = v;
                q[j * m + i] = v;
            }
        }
        q
    }

    /// Writes `m constant`, then `i linear_i`, then `i j q_ij` for nonzero pairs.
    pub fn write_dump<W: Write>(&self, mut out: W) -> Result<()> {
        let m = self.len();
        writeln!(out, "{} {}", m, self.constant)?;
        for (i, v) in self.linear.iter().enumerate() {
            writeln!(out, "{i} {v}")?;
        }
        for i in 0..m {
            for j in i + 1..m {
                let v = self.upper[packed_index(m, i, j)];
                if v != 0.0 {
                    writeln!(out, "{i} {j} {v}")?;
                }
            }
        }
        Ok(())
    }

    pub fn read_dump<R: BufRead>(reader: R) -> Result<Self> {
        let mut lines = reader.lines().enumerate();
        let (_, head) = lines.next().ok_or(Error::EmptyInput)?;
        let head = head?;
        let mut it = head.split_whitespace();
        let parse_err = |line: usize| Error::parse(line, "malformed qubo dump line");
        let m: usize = it.next().and_then(|t| t.parse().ok()).ok_or_else(|| parse_err(1))?;
        let constant: f64 = it.next().and_then(|t| t.parse().ok()).ok_or_else(|| parse_err(1))?;
        let mut q = QuboInstance::new(constant, vec![0.0; m]);
        for (idx, line) in lines {
            let line = line?;
            let t: Vec<&str> = line.split_whitespace().collect();
            match t.len() {
                0 => {}
                2 => {
                    let i: usize = t[0].parse().map_err(|_| parse_err(idx + 1))?;
                    let v: f64 = t[1].parse().map_err(|_| parse_err(idx + 1))?;
                    *q.linear.get_mut(i).ok_or_else(|| parse_err(idx + 1))? = v;
                }
                3 => {
                    let i: usize = t[0].parse().map_err(|_| parse_err(idx + 1))?;
                    let j: usize = t[1].parse().map_err(|_| parse_err(idx + 1))?;
                    let v: f64 = t[2].parse().map_err(|_| parse_err(idx + 1))?;
                    if i == j || i >= m || j >= m {
                        return Err(parse_err(idx + 1));
                    }
                    q.set_pair(i, j, v);
                }
                _ => return Err(parse_err(idx + 1)),
            }
        }
        Ok(q)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Assignment {
    pub bits: Vec<bool>,
    pub objective: f64,
}

impl Assignment {
    pub fn set_count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }
}

pub fn evaluate_objective(q: &QuboInstance, bits: &[bool]) -> Result<f64> {
    let m = q.len();
    if bits.len() != m {
        return Err(Error::LengthMismatch {
            expected: m,
            got: bits.len(),
        });
    }
    let mut total = q.constant;
    for i in 0..m {
        if !bits[i] {
            continue;
        }
        total += q.linear[i];
        for j in i + 1..m {
            if bits[j] {
                total += q.upper[packed_index(m, i, j)];
            }
        }
    }
    Ok(total)
}

/// Clears every `(v, +)`/`(v, -)` pair that is set together. The two
/// opinions cancel, so only the L0 penalty remains and clearing never
/// increases the objective for `λ ≥ 0`.
pub fn canonicalize(q: &QuboInstance, a: &mut Assignment) {
    let Some(labels) = q.labels() else { return };
    let m = q.len();
    let mut changed = false;
    for i in 0..m {
        if !a.bits[i] {
            continue;
        }
        for j in i + 1..m {
            if a.bits[j]
                && labels[j].peer == labels[i].peer
                && labels[j].influence != labels[i].influence
            {
                a.bits[i] = false;
                a.bits[j] = false;
                changed = true;
                break;
            }
        }
    }
    if changed {
        a.objective = evaluate_objective(q, &a.bits).expect("length checked by construction");
    }
}

/// Builds the restricted subproblem over explicit `(peer, influence)` entries.
///
/// `training` holds the source's training pairs `(target, sign)`; `norm` is
/// the scale `N` of the mean opinion.
pub fn build_for_entries(
    g: &SignedGraph,
    entries: &[VarLabel],
    training: &[(NodeId, Sign)],
    lambda: f64,
    norm: f64,
) -> Result<QuboInstance> {
    if entries.is_empty() {
        return Err(Error::Build("no candidate variables".into()));
    }
    if training.is_empty() {
        return Err(Error::Build("no training pairs".into()));
    }
    if !(lambda >= 0.0) {
        return Err(Error::Build(format!("lambda {lambda} must be non-negative")));
    }
    if !(norm > 0.0) {
        return Err(Error::Build(format!("normaliser {norm} must be positive")));
    }
    let m = entries.len();
    let t = training.len();
    // s'(v, y_k) per entry; exact small integers
    let columns: Vec<Vec<i32>> = entries
        .iter()
        .map(|e| training.iter().map(|&(y, _)| extended_sign(g, e.peer, y)).collect())
        .collect();
    let targets: Vec<i32> = training.iter().map(|&(_, s)| s.value()).collect();
    let dot = |a: &[i32], b: &[i32]| -> i64 {
        a.iter().zip(b).map(|(&x, &y)| i64::from(x * y)).sum()
    };

    let n2 = norm * norm;
    let mut q = QuboInstance::new(t as f64, vec![0.0; m]);
    for i in 0..m {
        let sigma = f64::from(entries[i].influence.value());
        let c_ii = dot(&columns[i], &columns[i]) as f64;
        let l_i = dot(&columns[i], &targets) as f64;
        q.linear[i] = c_ii / n2 - 2.0 * sigma * l_i / norm + lambda;
        for j in i + 1..m {
            let tau = f64::from(entries[j].influence.value());
            let c_ij = dot(&columns[i], &columns[j]) as f64;
            q.upper[packed_index(m, i, j)] = 2.0 * sigma * tau * c_ij / n2;
        }
    }
    q.with_labels(entries.to_vec())
}

/// Builds the subproblem for a peer list: two variables `(v,+)`, `(v,-)` per
/// peer for the standard variants, one `(v,+)` for Simple-adjacent.
pub fn build_subproblem(
    g: &SignedGraph,
    x: NodeId,
    peers: &[NodeId],
    training: &[(NodeId, Sign)],
    lambda: f64,
    norm: f64,
    variant: OpinionVariant,
) -> Result<QuboInstance> {
    if peers.contains(&x) {
        return Err(Error::Build(format!("source {x} listed as its own peer")));
    }
    let mut entries = Vec::with_capacity(peers.len() * 2);
    for &peer in peers {
        entries.push(VarLabel { peer, influence: Sign::Positive });
        if variant.has_influence() {
            entries.push(VarLabel { peer, influence: Sign::Negative });
        }
    }
    build_for_entries(g, &entries, training, lambda, norm)
}

/// Orders co-optimal masks: fewer set bits first, then lexicographically
/// with variable 0 most significant.
#[inline]
fn tie_key(mask: u32, m: usize) -> (u32, u32) {
    let lex = if m == 0 { 0 } else { mask.reverse_bits() >> (32 - m) };
    (mask.count_ones(), lex)
}

/// Exhaustive minimisation by Gray-code enumeration.
///
/// Among assignments whose objectives agree to within a relative 1e-9,
/// returns the one with fewest set bits, then the lexicographically smallest
/// bit string.
pub fn solve_exact(q: &QuboInstance) -> Result<Assignment> {
    let m = q.len();
    if m > MAX_EXACT_VARS {
        return Err(Error::TooLarge { m, max: MAX_EXACT_VARS });
    }
    let pairs = q.dense_pairs();
    let tol = 1e-9 * q.magnitude();
    let mut field = q.linear.clone();
    let mut mask: u32 = 0;
    let mut cur = q.constant;
    let mut best = (cur, mask);

    let resync = |mask: u32, field: &mut [f64]| -> f64 {
        let mut total = q.constant;
        for i in 0..m {
            field[i] = q.linear[i];
            for j in 0..m {
                if mask >> j & 1 == 1 {
                    field[i] += pairs[i * m + j];
                }
            }
            if mask >> i & 1 == 1 {
                total += q.linear[i];
                for j in i + 1..m {
                    if mask >> j & 1 == 1 {
                        total += pairs[i * m + j];
                    }
                }
            }
        }
        total
    };

    let total: u64 = 1 << m;
    for step in 1..total {
        let k = step.trailing_zeros() as usize;
        let on = mask >> k & 1 == 0;
        mask ^= 1 << k;
        let row = &pairs[k * m..(k + 1) * m];
        if on {
            cur += field[k];
            for (f, &p) in field.iter_mut().zip(row) {
                *f += p;
            }
        } else {
            cur -= field[k];
            for (f, &p) in field.iter_mut().zip(row) {
                *f -= p;
            }
        }
        if step % 4096 == 0 {
            cur = resync(mask, &mut field);
        }
        if cur < best.0 - tol
            || (cur <= best.0 + tol && tie_key(mask, m) < tie_key(best.1, m))
        {
            best = (cur, mask);
        }
    }

    let bits: Vec<bool> = (0..m).map(|i| best.1 >> i & 1 == 1).collect();
    let objective = evaluate_objective(q, &bits)?;
    let mut a = Assignment { bits, objective };
    canonicalize(q, &mut a);
    Ok(a)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TabuParams {
    pub max_iterations: usize,
    pub tenure: usize,
    pub time_limit: Duration,
    pub seed: u64,
}

impl TabuParams {
    /// Defaults for an `m`-variable instance: tenure `max(7, m/4)`,
    /// `200·m` iterations and a one second budget.
    pub fn for_size(m: usize, seed: u64) -> Self {
        TabuParams {
            max_iterations: (200 * m).max(1),
            tenure: 7.max(m / 4),
            time_limit: Duration::from_secs(1),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::Config("tabu max_iterations must be at least 1".into()));
        }
        if self.tenure == 0 {
            return Err(Error::Config("tabu tenure must be at least 1".into()));
        }
        Ok(())
    }
}

/// Single-flip tabu search with best-so-far aspiration, started from the
/// all-zero assignment. The tenure is capped at `m / 2`; a variable flipped
/// at move `t` stays tabu through move `t + tenure`. After `20·m` moves
/// without a new incumbent the search restarts from a random assignment.
///
/// Runs at least `max_iterations` moves and keeps going while the last move
/// improved the incumbent, so the returned assignment is single-flip locally
/// optimal unless the time limit cut the search short. Equal-gain moves and
/// restarts draw from `seed`.
pub fn solve_tabu(q: &QuboInstance, params: &TabuParams) -> Assignment {
    let m = q.len();
    if m == 0 {
        return Assignment { bits: Vec::new(), objective: q.constant };
    }
    let pairs = q.dense_pairs();
    let eps = 1e-12 * q.magnitude();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let started = Instant::now();

    let mut bits = vec![false; m];
    let mut field = q.linear.clone();
    let mut cur = q.constant;
    let mut best = cur;
    let mut best_bits = bits.clone();
    let mut tabu_until = vec![0usize; m];
    // a tenure of m or more leaves nothing admissible on small instances
    let tenure = params.tenure.clamp(1, (m / 2).max(1));

    let stall_limit = 20 * m;
    let mut since_best = 0usize;
    let mut iter = 0usize;
    let mut improved_last = false;
    loop {
        if iter >= params.max_iterations.max(1) && !improved_last {
            break;
        }
        if iter.is_multiple_of(64) && started.elapsed() >= params.time_limit {
            break;
        }
        iter += 1;

        let mut chosen: Option<usize> = None;
        let mut chosen_delta = f64::INFINITY;
        let mut ties = 0u32;
        for i in 0..m {
            let delta = if bits[i] { -field[i] } else { field[i] };
            let admissible = tabu_until[i] < iter || cur + delta < best - eps;
            if !admissible {
                continue;
            }
            if delta < chosen_delta - eps {
                chosen = Some(i);
                chosen_delta = delta;
                ties = 1;
            } else if delta <= chosen_delta + eps {
                ties += 1;
                if rng.gen_range(0..ties) == 0 {
                    chosen = Some(i);
                }
            }
        }
        // everything tabu: take the least-bad move
        let k = chosen.unwrap_or_else(|| {
            (0..m)
                .min_by(|&a, &b| {
                    let da = if bits[a] { -field[a] } else { field[a] };
                    let db = if bits[b] { -field[b] } else { field[b] };
                    da.total_cmp(&db)
                })
                .expect("m > 0")
        });

        let on = !bits[k];
        bits[k] = on;
        let row = &pairs[k * m..(k + 1) * m];
        if on {
            cur += field[k];
            for (f, &p) in field.iter_mut().zip(row) {
                *f += p;
            }
        } else {
            cur -= field[k];
            for (f, &p) in field.iter_mut().zip(row) {
                *f -= p;
            }
        }
        tabu_until[k] = iter + tenure;

        if iter.is_multiple_of(1024) {
            cur = evaluate_objective(q, &bits).expect("length fixed");
        }
        improved_last = cur < best - eps;
        if improved_last {
            best = cur;
            best_bits.clone_from(&bits);
            since_best = 0;
        } else {
            since_best += 1;
        }

        if since_best >= stall_limit {
            for b in bits.iter_mut() {
                *b = rng.gen_bool(0.5);
            }
            for (i, f) in field.iter_mut().enumerate() {
                let row = &pairs[i * m..(i + 1) * m];
                *f = q.linear[i] + row.iter().zip(&bits).filter(|(_, &b)| b).map(|(&p, _)| p).sum::<f64>();
            }
            cur = evaluate_objective(q, &bits).expect("length fixed");
            tabu_until.fill(0);
            since_best = 0;
            if cur < best - eps {
                best = cur;
                best_bits.clone_from(&bits);
            }
        }
    }

    let objective = evaluate_objective(q, &best_bits).expect("length fixed");
    let mut a = Assignment { bits: best_bits, objective };
    canonicalize(q, &mut a);
    a
}
