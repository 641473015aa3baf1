//! Weighted undirected graphs: instance I/O, random families, cut evaluation
//! and contraction-based variable fixing.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::SymMatrix;
use crate::rng::StreamRng;

/// Weights whose magnitude falls below this after contraction are treated as
/// cancelled (non-integral graphs only; integral graphs cancel exactly).
pub const CANCEL_EPS: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invalid fixing: {0}")]
    InvalidFixing(String),
    #[error("invalid generator parameters: {0}")]
    InvalidParams(String),
    #[error("invalid edge ({i}, {j}): {msg}")]
    InvalidEdge { i: usize, j: usize, msg: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub w: f64,
}

/// Undirected weighted graph on vertices `0..n`.
///
/// Edges are stored with `i < j`, sorted lexicographically, at most one per
/// pair and never with a zero weight.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedGraph {
    n: usize,
    edges: Vec<Edge>,
    integral: bool,
}

impl WeightedGraph {
    /// Builds a graph from edges given in any orientation and order.
    ///
    /// Zero weights are dropped; duplicates, self-loops, out-of-range indices
    /// and non-finite weights are rejected.
    pub fn from_edges(
        n: usize,
        edges: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Result<Self, GraphError> {
        let mut out = Vec::new();
        for (a, b, w) in edges {
            let (i, j) = (a.min(b), a.max(b));
            let bad = |msg: &str| GraphError::InvalidEdge {
                i: a,
                j: b,
                msg: msg.into(),
            };
            if i == j {
                return Err(bad("self-loop"));
            }
            if j >= n {
                return Err(bad("vertex index out of range"));
            }
            if !w.is_finite() {
                return Err(bad("non-finite weight"));
            }
            out.push(Edge { i, j, w });
        }
        out.sort_by_key(|x| (x.i, x.j));
        if let Some(d) = out
            .windows(2)
            .find(|p| (p[0].i, p[0].j) == (p[1].i, p[1].j))
        {
            return Err(GraphError::InvalidEdge {
                i: d[0].i,
                j: d[0].j,
                msg: "duplicate edge".into(),
            });
        }
        out.retain(|e| e.w != 0.0);
        let integral = out.iter().all(|e| e.w.fract() == 0.0);
        Ok(Self {
            n,
            edges: out,
            integral,
        })
    }

    /// Builds a graph from a dense row-major weight matrix (upper triangle read).
    pub fn from_dense(n: usize, w: &[f64], integral_hint: bool) -> Self {
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                let v = w[i * n + j];
                let keep = if integral_hint {
                    v != 0.0
                } else {
                    v.abs() >= CANCEL_EPS
                };
                if keep {
                    edges.push(Edge { i, j, w: v });
                }
            }
        }
        let integral = edges.iter().all(|e| e.w.fract() == 0.0);
        Self { n, edges, integral }
    }

    pub fn empty(n: usize) -> Self {
        Self {
            n,
            edges: Vec::new(),
            integral: true,
        }
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Every weight is an exact integer, so every cut value is an integer.
    pub fn weights_integral(&self) -> bool {
        self.integral
    }

    pub fn max_abs_weight(&self) -> f64 {
        self.edges.iter().map(|e| e.w.abs()).fold(0.0, f64::max)
    }

    /// Dense row-major `n x n` weight matrix with a zero diagonal.
    pub fn dense_weights(&self) -> Vec<f64> {
        let n = self.n;
        let mut w = vec![0.0; n * n];
        for e in &self.edges {
            w[e.i * n + e.j] = e.w;
            w[e.j * n + e.i] = e.w;
        }
        w
    }

    /// Cut weight: sum of `w_ij` over edges whose endpoints differ.
    pub fn cut_value(&self, x: &Assignment) -> f64 {
        assert_eq!(
            x.len(),
            self.n,
            "assignment length does not match vertex count"
        );
        self.edges
            .iter()
            .filter(|e| x.get(e.i) != x.get(e.j))
            .map(|e| e.w)
            .sum()
    }

    /// Graph Laplacian `D - W`.
    pub fn laplacian(&self) -> SymMatrix<f64> {
        let mut l = SymMatrix::zeros(self.n);
        for e in &self.edges {
            l.set(e.i, e.j, -e.w);
            l.set(e.i, e.i, l.get(e.i, e.i) + e.w);
            l.set(e.j, e.j, l.get(e.j, e.j) + e.w);
        }
        l
    }

    /// Merges `remove` into `keep` under `x_remove = sign * x_keep`.
    ///
    /// Returns the graph on `n - 1` vertices (indices above `remove` shift
    /// down) and the constant cut contribution of the fixing.
    pub fn contract(&self, step: FixingStep) -> Result<(WeightedGraph, f64), GraphError> {
        let n = self.n;
        let FixingStep { keep, remove, sign } = step;
        if keep >= n || remove >= n || keep == remove {
            return Err(GraphError::InvalidFixing(format!(
                "keep={keep}, remove={remove} on a graph with {n} vertices"
            )));
        }
        if sign != 1 && sign != -1 {
            return Err(GraphError::InvalidFixing(format!(
                "sign must be +1 or -1, got {sign}"
            )));
        }
        let s = f64::from(sign);
        let w = self.dense_weights();
        let row_sum: f64 = (0..n).map(|k| w[remove * n + k]).sum();
        let offset = 0.5 * (1.0 - s) * row_sum;

        let m = n - 1;
        let old = |k: usize| if k >= remove { k + 1 } else { k };
        let mut nw = vec![0.0; m * m];
        for a in 0..m {
            for b in a + 1..m {
                let (oa, ob) = (old(a), old(b));
                let mut v = w[oa * n + ob];
                if oa == keep {
                    v += s * w[remove * n + ob];
                } else if ob == keep {
                    v += s * w[remove * n + oa];
                }
                nw[a * m + b] = v;
                nw[b * m + a] = v;
            }
        }
        Ok((WeightedGraph::from_dense(m, &nw, self.integral), offset))
    }

    /// Serializes in the plain instance format (`n m` then `i j w`, 1-based).
    pub fn to_instance_string(&self) -> String {
        let mut s = String::new();
        writeln!(s, "{} {}", self.n, self.edges.len()).unwrap();
        for e in &self.edges {
            if self.integral && e.w.abs() < 9.0e15 {
                writeln!(s, "{} {} {}", e.i + 1, e.j + 1, e.w as i64).unwrap();
            } else {
                writeln!(s, "{} {} {}", e.i + 1, e.j + 1, e.w).unwrap();
            }
        }
        s
    }
}

/// A `+-1` vector.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Assignment(Vec<i8>);

impl Assignment {
    pub fn new(x: Vec<i8>) -> Self {
        assert!(
            x.iter().all(|&v| v == 1 || v == -1),
            "assignment entries must be +-1"
        );
        Self(x)
    }

    pub fn all_plus(n: usize) -> Self {
        Self(vec![1; n])
    }

    /// Bit `k` of `mask` set means vertex `k` is on the `-1` side.
    pub fn from_mask(n: usize, mask: u64) -> Self {
        Self(
            (0..n)
                .map(|k| if mask >> k & 1 == 1 { -1 } else { 1 })
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    #[inline]
    pub fn get(&self, i: usize) -> i8 {
        self.0[i]
    }

    pub fn flip(&mut self, i: usize) {
        self.0[i] = -self.0[i];
    }

    pub fn negated(&self) -> Self {
        Self(self.0.iter().map(|v| -v).collect())
    }

    pub fn as_slice(&self) -> &[i8] {
        &self.0
    }

    /// Inserts `value` at `index`, shifting later entries up.
    pub fn insert(&mut self, index: usize, value: i8) {
        assert!(value == 1 || value == -1);
        self.0.insert(index, value);
    }
}

/// One branching decision `x_remove = sign * x_keep`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FixingStep {
    pub keep: usize,
    pub remove: usize,
    pub sign: i8,
}

impl FixingStep {
    pub fn new(keep: usize, remove: usize, sign: i8) -> Self {
        Self { keep, remove, sign }
    }
}

/// Lifts an assignment of a contracted graph back through `fixings`
/// (applied in order to produce it) to the original vertex set.
pub fn expand_assignment(sub: &Assignment, fixings: &[FixingStep]) -> Assignment {
    let mut x = sub.clone();
    for f in fixings.iter().rev() {
        // `keep` is indexed in the pre-contraction graph; shift back if needed.
        let keep_now = if f.keep > f.remove {
            f.keep - 1
        } else {
            f.keep
        };
        let v = f.sign * x.get(keep_now);
        x.insert(f.remove, v);
    }
    x
}

/// Exhaustive maximum cut, fixing vertex 0 to `+1`. Intended for small `n`.
pub fn brute_force_max_cut(g: &WeightedGraph) -> (f64, Assignment) {
    let n = g.n();
    assert!(n <= 30, "brute force is limited to 30 vertices");
    if n == 0 {
        return (0.0, Assignment::all_plus(0));
    }
    let w = g.dense_weights();
    let mut best = f64::NEG_INFINITY;
    let mut best_mask = 0u64;
    // Gray-code walk over vertices 1..n keeps each step O(n).
    let mut side = vec![1.0f64; n];
    let mut value = 0.0;
    let total = 1u64 << (n - 1);
    for step in 0..total {
        if step > 0 {
            let bit = step.trailing_zeros() as usize + 1;
            let mut gain = 0.0;
            for u in 0..n {
                if u != bit {
                    gain += w[bit * n + u] * side[bit] * side[u];
                }
            }
            value += gain;
            side[bit] = -side[bit];
        }
        if value > best {
            best = value;
            best_mask = side
                .iter()
                .enumerate()
                .filter(|(_, &s)| s < 0.0)
                .fold(0u64, |m, (k, _)| m | 1 << k);
        }
    }
    let x = Assignment::from_mask(n, best_mask);
    (g.cut_value(&x), x)
}

/// Parses the plain instance format.
///
/// Blank lines and lines starting with `#` are ignored. The first remaining
/// line is `n m`, followed by exactly `m` lines `i j w` with 1-based indices.
pub fn parse_instance(text: &str) -> Result<WeightedGraph, GraphError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(k, l)| (k + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

    let (hline, header) = lines.next().ok_or(GraphError::Parse {
        line: 0,
        msg: "empty instance".into(),
    })?;
    let perr = |line: usize, msg: String| GraphError::Parse { line, msg };
    let mut it = header.split_whitespace();
    let n: usize = parse_field(it.next(), hline, "vertex count")?;
    let m: usize = parse_field(it.next(), hline, "edge count")?;
    if it.next().is_some() {
        return Err(perr(hline, "header must be `n m`".into()));
    }

    let mut seen = std::collections::HashSet::new();
    let mut edges = Vec::with_capacity(m);
    let mut count = 0;
    for (line, l) in lines {
        count += 1;
        if count > m {
            return Err(perr(line, format!("more than {m} edge lines")));
        }
        let mut it = l.split_whitespace();
        let i: usize = parse_field(it.next(), line, "first endpoint")?;
        let j: usize = parse_field(it.next(), line, "second endpoint")?;
        let w: f64 = parse_field(it.next(), line, "weight")?;
        if it.next().is_some() {
            return Err(perr(line, "trailing tokens".into()));
        }
        if !w.is_finite() {
            return Err(perr(line, "non-finite weight".into()));
        }
        for v in [i, j] {
            if v < 1 || v > n {
                return Err(perr(line, format!("vertex {v} out of range [1, {n}]")));
            }
        }
        if i == j {
            return Err(perr(line, format!("self-loop on vertex {i}")));
        }
        let key = (i.min(j), i.max(j));
        if !seen.insert(key) {
            return Err(perr(line, format!("duplicate edge {} {}", key.0, key.1)));
        }
        edges.push((i - 1, j - 1, w));
    }
    if count < m {
        return Err(perr(0, format!("expected {m} edge lines, found {count}")));
    }
    WeightedGraph::from_edges(n, edges).map_err(|e| perr(0, e.to_string()))
}

fn parse_field<T: FromStr>(tok: Option<&str>, line: usize, what: &str) -> Result<T, GraphError> {
    let tok = tok.ok_or_else(|| GraphError::Parse {
        line,
        msg: format!("missing {what}"),
    })?;
    tok.parse().map_err(|_| GraphError::Parse {
        line,
        msg: format!("malformed {what} `{tok}`"),
    })
}

/// Random instance families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WeightFamily {
    /// Unit weights.
    G05,
    /// Weights uniform on `{-1, +1}`.
    Pm1s,
    /// Integer weights uniform on `[lo, hi] \ {0}`.
    Uniform { lo: i64, hi: i64 },
}

impl WeightFamily {
    /// Edge probability conventionally paired with the family.
    pub fn default_density(&self) -> f64 {
        match self {
            WeightFamily::G05 => 0.5,
            WeightFamily::Pm1s => 0.1,
            WeightFamily::Uniform { .. } => 0.5,
        }
    }
}

impl fmt::Display for WeightFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WeightFamily::G05 => write!(f, "g05"),
            WeightFamily::Pm1s => write!(f, "pm1s"),
            WeightFamily::Uniform { lo, hi } => write!(f, "w{lo}_{hi}"),
        }
    }
}

impl FromStr for WeightFamily {
    type Err = GraphError;

    /// Accepts `g05`, `pm1s` and `w<lo>_<hi>` (e.g. `w-10_10`).
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "g05" => Ok(Self::G05),
            "pm1s" => Ok(Self::Pm1s),
            _ => {
                let bad = || GraphError::InvalidParams(format!("unknown weight family `{s}`"));
                let rest = s.strip_prefix('w').ok_or_else(bad)?;
                let (lo, hi) = rest.split_once('_').ok_or_else(bad)?;
                let lo: i64 = lo.parse().map_err(|_| bad())?;
                let hi: i64 = hi.parse().map_err(|_| bad())?;
                if lo > hi || (lo == 0 && hi == 0) {
                    return Err(GraphError::InvalidParams(format!(
                        "empty weight range in `{s}`"
                    )));
                }
                Ok(Self::Uniform { lo, hi })
            }
        }
    }
}

/// Erdős–Rényi graph: each pair `i < j`, visited in lexicographic order, is
/// kept when `bernoulli(p)` succeeds and then draws its weight.
pub fn generate_er(
    n: usize,
    p: f64,
    family: WeightFamily,
    seed: u64,
) -> Result<WeightedGraph, GraphError> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(GraphError::InvalidParams(format!(
            "edge probability {p} not in (0, 1]"
        )));
    }
    if n < 2 {
        return Err(GraphError::InvalidParams(format!(
            "need at least 2 vertices, got {n}"
        )));
    }
    let mut rng = StreamRng::new(seed);
    let nonzero: Vec<i64> = match family {
        WeightFamily::Uniform { lo, hi } => (lo..=hi).filter(|&v| v != 0).collect(),
        _ => Vec::new(),
    };
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if !rng.bernoulli(p) {
                continue;
            }
            let w = match family {
                WeightFamily::G05 => 1.0,
                WeightFamily::Pm1s => rng.sign(),
                WeightFamily::Uniform { .. } => {
                    nonzero[rng.below(nonzero.len() as u64) as usize] as f64
                }
            };
            edges.push((i, j, w));
        }
    }
    WeightedGraph::from_edges(n, edges)
}

/// Random branching trajectories.
///
/// Each trajectory repeatedly contracts a uniformly chosen vertex (never the
/// reference vertex 0) into vertex 0 with a uniformly chosen sign, recording
/// every intermediate graph down to `min_free` vertices. One stream drives all
/// trajectories: per step `remove = 1 + below(n - 1)`, then `sign()`.
pub fn random_trajectory_subgraphs(
    g: &WeightedGraph,
    min_free: usize,
    trajectories: usize,
    seed: u64,
) -> Result<Vec<WeightedGraph>, GraphError> {
    if min_free < 2 || g.n() <= min_free {
        return Err(GraphError::InvalidParams(format!(
            "need min_free >= 2 and n > min_free (n = {}, min_free = {min_free})",
            g.n()
        )));
    }
    let mut rng = StreamRng::new(seed);
    let mut out = Vec::with_capacity(trajectories * (g.n() - min_free));
    for _ in 0..trajectories {
        let mut cur = g.clone();
        while cur.n() > min_free {
            let remove = 1 + rng.below(cur.n() as u64 - 1) as usize;
            let sign = if rng.sign() > 0.0 { 1 } else { -1 };
            let (next, _) = cur.contract(FixingStep::new(0, remove, sign))?;
            out.push(next.clone());
            cur = next;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn triangle() -> WeightedGraph {
        parse_instance("3 3\n1 2 1\n1 3 1\n2 3 1").unwrap()
    }

    #[test]
    fn parse_examples() {
        let g = triangle();
        assert_eq!(g.n(), 3);
        assert_eq!(g.edge_count(), 3);
        assert!(g.weights_integral());

        let g = parse_instance("2 1\n1 2 5").unwrap();
        assert_eq!(g.edges(), &[Edge { i: 0, j: 1, w: 5.0 }]);

        let err = parse_instance("2 2\n1 2 1\n2 1 1").unwrap_err();
        assert_eq!(
            err,
            GraphError::Parse {
                line: 3,
                msg: "duplicate edge 1 2".into()
            }
        );
    }

    #[test]
    fn parse_comments_zero_weights_and_errors() {
        let g = parse_instance("# comment\n3 2\n\n1 2 0\n# mid\n2 3 1.5\n").unwrap();
        assert_eq!(g.edge_count(), 1);
        assert!(!g.weights_integral());

        assert!(matches!(
            parse_instance("3 1\n1 4 1"),
            Err(GraphError::Parse { line: 2, .. })
        ));
        assert!(matches!(
            parse_instance("3 1\n1 x 1"),
            Err(GraphError::Parse { line: 2, .. })
        ));
        assert!(matches!(
            parse_instance("3 2\n1 2 1"),
            Err(GraphError::Parse { .. })
        ));
        assert!(matches!(
            parse_instance("3 1\n2 2 1"),
            Err(GraphError::Parse { line: 2, .. })
        ));
        assert!(matches!(
            parse_instance(""),
            Err(GraphError::Parse { line: 0, .. })
        ));
    }

    #[test]
    fn instance_text_round_trips() {
        let g = generate_er(12, 0.4, WeightFamily::Uniform { lo: -5, hi: 5 }, 3).unwrap();
        assert_eq!(parse_instance(&g.to_instance_string()).unwrap(), g);
        let h = WeightedGraph::from_edges(3, [(0, 1, 0.25), (1, 2, -1.0 / 3.0)]).unwrap();
        assert_eq!(parse_instance(&h.to_instance_string()).unwrap(), h);
    }

    #[test]
    fn cut_value_examples() {
        let g = triangle();
        assert_eq!(g.cut_value(&Assignment::new(vec![1, 1, -1])), 2.0);
        assert_eq!(g.cut_value(&Assignment::all_plus(3)), 0.0);
        let k2 = WeightedGraph::from_edges(2, [(0, 1, 5.0)]).unwrap();
        assert_eq!(k2.cut_value(&Assignment::new(vec![1, -1])), 5.0);
    }

    #[test]
    fn laplacian_examples() {
        let k2 = WeightedGraph::from_edges(2, [(0, 1, 1.0)]).unwrap();
        assert_eq!(k2.laplacian().as_slice(), &[1.0, -1.0, -1.0, 1.0]);
        let l = triangle().laplacian();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(l.get(i, j), if i == j { 2.0 } else { -1.0 });
            }
        }
        assert_eq!(WeightedGraph::empty(3).laplacian(), SymMatrix::zeros(3));
    }

    #[test]
    fn contraction_examples() {
        let g = triangle();
        let (h, off) = g.contract(FixingStep::new(0, 1, -1)).unwrap();
        assert_eq!(h.n(), 2);
        assert_eq!(h.edge_count(), 0);
        assert_eq!(off, 2.0);
        assert_eq!(brute_force_max_cut(&h).0 + off, 2.0);

        let (h, off) = g.contract(FixingStep::new(0, 1, 1)).unwrap();
        assert_eq!(h.edges(), &[Edge { i: 0, j: 1, w: 2.0 }]);
        assert_eq!(off, 0.0);

        assert!(g.contract(FixingStep::new(1, 1, 1)).is_err());
        assert!(g.contract(FixingStep::new(0, 3, 1)).is_err());
        assert!(g.contract(FixingStep::new(0, 1, 0)).is_err());
    }

    #[test]
    fn positive_sign_never_has_offset() {
        for seed in 0..20 {
            let g = generate_er(8, 0.6, WeightFamily::Uniform { lo: -5, hi: 5 }, seed).unwrap();
            let (_, off) = g
                .contract(FixingStep::new(0, 1 + (seed as usize % 7), 1))
                .unwrap();
            assert_eq!(off, 0.0);
        }
    }

    #[test]
    fn expand_assignment_reverses_contraction() {
        let g = generate_er(6, 0.8, WeightFamily::Uniform { lo: -3, hi: 3 }, 5).unwrap();
        let steps = [
            FixingStep::new(0, 3, -1),
            FixingStep::new(0, 1, 1),
            FixingStep::new(0, 2, -1),
        ];
        let mut cur = g.clone();
        let mut offset = 0.0;
        for s in steps {
            let (h, o) = cur.contract(s).unwrap();
            cur = h;
            offset += o;
        }
        let sub = Assignment::new(vec![1, -1, 1]);
        let full = expand_assignment(&sub, &steps);
        assert_eq!(full.len(), 6);
        assert_eq!(g.cut_value(&full), cur.cut_value(&sub) + offset);
    }

    #[test]
    fn generator_examples() {
        let g = generate_er(2, 1.0, WeightFamily::G05, 99).unwrap();
        assert_eq!(g.edges(), &[Edge { i: 0, j: 1, w: 1.0 }]);
        assert_eq!(
            generate_er(50, 0.5, WeightFamily::G05, 7).unwrap(),
            generate_er(50, 0.5, WeightFamily::G05, 7).unwrap()
        );
        let g = generate_er(40, 0.5, WeightFamily::Pm1s, 1).unwrap();
        assert!(g.edges().iter().all(|e| e.w == 1.0 || e.w == -1.0));
        assert!(g.edges().iter().any(|e| e.w == -1.0));

        // Binomial(4950, 0.1): mean 495, sd ~21.
        let g = generate_er(100, 0.1, WeightFamily::Uniform { lo: -10, hi: 10 }, 4).unwrap();
        assert!((g.edge_count() as f64 - 495.0).abs() < 5.0 * 21.1);
        assert!(g
            .edges()
            .iter()
            .all(|e| e.w != 0.0 && e.w.abs() <= 10.0 && e.w.fract() == 0.0));

        assert!(generate_er(5, 0.0, WeightFamily::G05, 0).is_err());
        assert!(generate_er(5, 1.5, WeightFamily::G05, 0).is_err());
    }

    #[test]
    fn family_names_parse() {
        assert_eq!("g05".parse::<WeightFamily>().unwrap(), WeightFamily::G05);
        assert_eq!(
            "w-10_10".parse::<WeightFamily>().unwrap(),
            WeightFamily::Uniform { lo: -10, hi: 10 }
        );
        assert_eq!(WeightFamily::Uniform { lo: 0, hi: 10 }.to_string(), "w0_10");
        assert!("x".parse::<WeightFamily>().is_err());
        assert!("w5_1".parse::<WeightFamily>().is_err());
    }

    #[test]
    fn trajectory_counts() {
        let g = generate_er(4, 1.0, WeightFamily::G05, 0).unwrap();
        let subs = random_trajectory_subgraphs(&g, 3, 1, 0).unwrap();
        assert_eq!(subs.len(), 1);
        assert_eq!(subs[0].n(), 3);

        let g = generate_er(100, 0.5, WeightFamily::G05, 1).unwrap();
        let subs = random_trajectory_subgraphs(&g, 3, 20, 2).unwrap();
        assert_eq!(subs.len(), 20 * 97);
        assert_eq!(subs[0].n(), 99);
        assert_eq!(subs[96].n(), 3);
        assert_eq!(subs, random_trajectory_subgraphs(&g, 3, 20, 2).unwrap());
        assert!(random_trajectory_subgraphs(&g, 1, 1, 0).is_err());
    }

    #[test]
    fn brute_force_matches_naive_enumeration() {
        for seed in 0..10 {
            let g = generate_er(9, 0.5, WeightFamily::Uniform { lo: -5, hi: 5 }, seed).unwrap();
            let naive = (0..1u64 << 9)
                .map(|m| g.cut_value(&Assignment::from_mask(9, m)))
                .fold(f64::NEG_INFINITY, f64::max);
            let (best, x) = brute_force_max_cut(&g);
            assert_eq!(best, naive);
            assert_eq!(g.cut_value(&x), best);
            assert_eq!(x.get(0), 1);
        }
    }
}
