//! Goemans–Williamson hyperplane rounding and 1-flip local search.

use crate::graph::{Assignment, WeightedGraph};
use crate::linalg::{sym_eigen, LinalgError, SymMatrix};
use crate::rng::StreamRng;

/// Unit-row factor matrix `V` with `X ~ V V^T`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Factors {
    rows: usize,
    dim: usize,
    data: Vec<f64>,
}

impl Factors {
    pub fn new(rows: usize, dim: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * dim, "factor data has wrong length");
        assert!(dim >= 1 || rows == 0);
        Self { rows, dim, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// `o_i . o_j`.
    pub fn correlation(&self, i: usize, j: usize) -> f64 {
        self.row(i)
            .iter()
            .zip(self.row(j))
            .map(|(a, b)| a * b)
            .sum()
    }

    pub fn gram(&self) -> SymMatrix<f64> {
        SymMatrix::from_upper(self.rows, |i, j| self.correlation(i, j))
    }

    /// Rescales every row to unit length; zero rows become `e_1`.
    pub fn normalize_rows(&mut self) {
        for i in 0..self.rows {
            let row = &mut self.data[i * self.dim..(i + 1) * self.dim];
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm < 1e-12 {
                row.iter_mut().for_each(|v| *v = 0.0);
                row[0] = 1.0;
            } else {
                row.iter_mut().for_each(|v| *v /= norm);
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundingConfig {
    /// Hyperplanes per interior node.
    pub samples: usize,
    /// Hyperplanes at the root.
    pub root_samples: usize,
    pub rng_seed: u64,
    pub local_search: bool,
}

impl Default for RoundingConfig {
    fn default() -> Self {
        Self {
            samples: 20,
            root_samples: 100,
            rng_seed: 0,
            local_search: true,
        }
    }
}

/// `V = eigvecs * diag(sqrt(max(lambda, 0)))` with unit rows.
pub fn factor_from_sdp(x: &SymMatrix<f64>) -> Result<Factors, LinalgError> {
    let n = x.n();
    let eig = sym_eigen(x)?;
    let mut data = vec![0.0; n * n];
    for k in 0..n {
        let s = eig.values[k].max(0.0).sqrt();
        if s == 0.0 {
            continue;
        }
        for i in 0..n {
            data[i * n + k] = eig.component(i, k) * s;
        }
    }
    let mut f = Factors::new(n, n.max(1), if n == 0 { vec![] } else { data });
    f.normalize_rows();
    Ok(f)
}

/// Best of `samples` random-hyperplane cuts (each optionally improved by local
/// search). Vertex `i` goes to `+1` iff `v_i . r >= 0`; ties in value keep
/// the earliest sample.
pub fn gw_round(
    factors: &Factors,
    g: &WeightedGraph,
    samples: usize,
    seed: u64,
    local_search: bool,
) -> Assignment {
    assert_eq!(
        factors.rows(),
        g.n(),
        "factor rows do not match vertex count"
    );
    assert!(samples >= 1);
    let mut rng = StreamRng::new(seed);
    let dim = factors.dim();
    let mut r = vec![0.0; dim];
    let mut best: Option<(f64, Assignment)> = None;
    for _ in 0..samples {
        r.iter_mut().for_each(|v| *v = rng.gaussian());
        let signs = (0..g.n())
            .map(|i| {
                let p: f64 = factors.row(i).iter().zip(&r).map(|(a, b)| a * b).sum();
                if p >= 0.0 {
                    1
                } else {
                    -1
                }
            })
            .collect();
        let mut x = Assignment::new(signs);
        if local_search {
            x = local_search_1flip(g, &x);
        }
        let v = g.cut_value(&x);
        if best.as_ref().is_none_or(|(b, _)| v > *b) {
            best = Some((v, x));
        }
    }
    best.expect("at least one sample").1
}

/// Greedy 1-flip ascent: flips the vertex with the largest positive gain
/// (lowest index on ties) until no flip improves the cut.
pub fn local_search_1flip(g: &WeightedGraph, x: &Assignment) -> Assignment {
    let n = g.n();
    let w = g.dense_weights();
    let mut x = x.clone();
    let tol = 1e-12 * (1.0 + g.max_abs_weight());
    // gain_v = sum_u w_vu x_v x_u: same-side edges become cut, cut edges uncut.
    let mut gain: Vec<f64> = (0..n)
        .map(|v| {
            (0..n)
                .map(|u| w[v * n + u] * f64::from(x.get(v)) * f64::from(x.get(u)))
                .sum()
        })
        .collect();
    loop {
        let mut pick = None;
        let mut best = tol;
        for (v, &gv) in gain.iter().enumerate() {
            if gv > best {
                best = gv;
                pick = Some(v);
            }
        }
        let Some(v) = pick else { break };
        x.flip(v);
        let xv = f64::from(x.get(v));
        gain[v] = -gain[v];
        for u in 0..n {
            if u != v && w[v * n + u] != 0.0 {
                // edge (u, v) flipped its cut state
                gain[u] += 2.0 * w[v * n + u] * xv * f64::from(x.get(u));
            }
        }
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{generate_er, WeightFamily};

    fn tri() -> WeightedGraph {
        WeightedGraph::from_edges(3, [(0, 1, 1.0), (0, 2, 1.0), (1, 2, 1.0)]).unwrap()
    }

    #[test]
    fn antipodal_factors_always_split() {
        let g = WeightedGraph::from_edges(2, [(0, 1, 3.0)]).unwrap();
        let f = Factors::new(2, 2, vec![1.0, 0.0, -1.0, 0.0]);
        for seed in 0..10 {
            let x = gw_round(&f, &g, 1, seed, false);
            assert_eq!(g.cut_value(&x), 3.0);
        }
    }

    #[test]
    fn identical_factors_need_local_search() {
        let g = tri();
        let f = Factors::new(3, 2, vec![0.6, 0.8, 0.6, 0.8, 0.6, 0.8]);
        assert_eq!(g.cut_value(&gw_round(&f, &g, 16, 1, false)), 0.0);
        assert_eq!(g.cut_value(&gw_round(&f, &g, 16, 1, true)), 2.0);
    }

    #[test]
    fn triangle_optimal_factors_find_the_max_cut() {
        let g = tri();
        let a = std::f64::consts::TAU / 3.0;
        let f = Factors::new(
            3,
            2,
            vec![1.0, 0.0, a.cos(), a.sin(), (2.0 * a).cos(), (2.0 * a).sin()],
        );
        // Every hyperplane separates exactly one vertex from the other two.
        for seed in 0..5 {
            assert_eq!(g.cut_value(&gw_round(&f, &g, 64, seed, false)), 2.0);
        }
    }

    #[test]
    fn local_search_examples() {
        let g = WeightedGraph::from_edges(2, [(0, 1, 4.0)]).unwrap();
        let x = local_search_1flip(&g, &Assignment::new(vec![1, 1]));
        assert_eq!(x, Assignment::new(vec![-1, 1]));

        let x = local_search_1flip(&tri(), &Assignment::all_plus(3));
        assert_eq!(x, Assignment::new(vec![-1, 1, 1]));

        let opt = Assignment::new(vec![1, -1, -1]);
        assert_eq!(local_search_1flip(&tri(), &opt), opt);
    }

    #[test]
    fn local_search_never_decreases() {
        for seed in 0..30 {
            let g = generate_er(12, 0.5, WeightFamily::Uniform { lo: -5, hi: 5 }, seed).unwrap();
            let mut rng = StreamRng::new(seed);
            let x = Assignment::new(
                (0..12)
                    .map(|_| if rng.below(2) == 0 { 1 } else { -1 })
                    .collect(),
            );
            let y = local_search_1flip(&g, &x);
            assert!(g.cut_value(&y) >= g.cut_value(&x));
            // 1-flip optimal afterwards
            for v in 0..12 {
                let mut z = y.clone();
                z.flip(v);
                assert!(g.cut_value(&z) <= g.cut_value(&y));
            }
        }
    }

    #[test]
    fn factorization_examples() {
        let f = factor_from_sdp(&SymMatrix::identity(3)).unwrap();
        assert!((f.gram().frobenius_norm() - 3f64.sqrt()).abs() < 1e-12);
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((f.correlation(i, j) - want).abs() < 1e-12);
            }
        }

        let x = SymMatrix::from_upper(2, |i, j| if i == j { 1.0 } else { -1.0 });
        let f = factor_from_sdp(&x).unwrap();
        assert!((f.correlation(0, 1) + 1.0).abs() < 1e-9);

        let x = SymMatrix::from_upper(3, |i, j| if i == j { 1.0 } else { -0.5 });
        let f = factor_from_sdp(&x).unwrap();
        for (i, j) in [(0, 1), (0, 2), (1, 2)] {
            assert!((f.correlation(i, j) + 0.5).abs() < 1e-9);
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let g = generate_er(15, 0.5, WeightFamily::G05, 2).unwrap();
        let mut rng = StreamRng::new(0);
        let mut f = Factors::new(15, 4, (0..60).map(|_| rng.gaussian()).collect());
        f.normalize_rows();
        assert_eq!(gw_round(&f, &g, 10, 7, true), gw_round(&f, &g, 10, 7, true));
    }
}
