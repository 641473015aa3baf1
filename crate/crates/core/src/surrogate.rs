//! MC-MPNN and δ-MC-MPNN forward passes with certified dual read-out.
//!
//! Features live on the `n x n` grid of vertex pairs. Every MLP has one hidden
//! ReLU layer; its first affine map is linear in the input, so message sums
//! are accumulated in hidden space and the output layer is applied once per
//! cell.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::WeightedGraph;
use crate::linalg::SymMatrix;
use crate::rng::StreamRng;
use crate::rounding::Factors;
use crate::scalar::Real;
use crate::sdp::{dual_radial_project, CertifiedBound, SdpError};

pub const MAGIC: &[u8; 8] = b"MCSDPW01";
pub const NORM_EPS: f64 = 1e-5;
pub const DEFAULT_MAX_N: usize = 512;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("bad checksum: container is truncated or corrupted")]
    Checksum,
    #[error("bad magic: not a weight container")]
    Magic,
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("unknown variant `{0}`")]
    UnknownVariant(String),
    #[error("unknown norm `{0}`")]
    UnknownNorm(String),
    #[error("missing tensor `{0}`")]
    MissingTensor(String),
    #[error("unexpected tensor `{0}`")]
    UnexpectedTensor(String),
    #[error("shape mismatch for `{name}`: expected {expected:?}, got {got:?}")]
    Shape {
        name: String,
        expected: Vec<usize>,
        got: Vec<usize>,
    },
    #[error("tensor `{0}` lies outside the payload")]
    OutOfBounds(String),
    #[error("tensor `{0}` holds non-finite values")]
    NonFinite(String),
    #[error("graph with {n} vertices exceeds model capacity {max}")]
    Capacity { n: usize, max: usize },
    #[error(transparent)]
    Sdp(#[from] SdpError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Dense,
    Delta,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormKind {
    Layer,
    Graph,
    Spatial,
    None,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Dense => "dense",
            Variant::Delta => "delta",
        })
    }
}

impl FromStr for Variant {
    type Err = ModelError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "dense" => Ok(Variant::Dense),
            "delta" => Ok(Variant::Delta),
            _ => Err(ModelError::UnknownVariant(s.to_string())),
        }
    }
}

impl fmt::Display for NormKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NormKind::Layer => "layer",
            NormKind::Graph => "graph",
            NormKind::Spatial => "spatial",
            NormKind::None => "none",
        })
    }
}

impl FromStr for NormKind {
    type Err = ModelError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "layer" => Ok(NormKind::Layer),
            "graph" => Ok(NormKind::Graph),
            "spatial" => Ok(NormKind::Spatial),
            "none" => Ok(NormKind::None),
            _ => Err(ModelError::UnknownNorm(s.to_string())),
        }
    }
}

/// Architecture hyper-parameters recorded in the container manifest.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelSpec {
    pub variant: Variant,
    pub layers: usize,
    pub hidden: usize,
    pub rank: usize,
    pub norm: NormKind,
}

/// `W2 relu(W1 x + b1) + b2`, weights row-major `[out, in]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<T> {
    pub input: usize,
    pub width: usize,
    pub output: usize,
    pub w1: Vec<T>,
    pub b1: Vec<T>,
    pub w2: Vec<T>,
    pub b2: Vec<T>,
}

impl<T: Real> Mlp<T> {
    fn random(input: usize, width: usize, output: usize, rng: &mut StreamRng) -> Self {
        let s1 = (2.0 / input as f64).sqrt();
        let s2 = (1.0 / width as f64).sqrt();
        let mut draw = |len: usize, s: f64| {
            (0..len)
                .map(|_| T::of(rng.gaussian() * s))
                .collect::<Vec<T>>()
        };
        let w1 = draw(width * input, s1);
        let b1 = draw(width, 0.1);
        let w2 = draw(output * width, s2);
        let b2 = draw(output, 0.1);
        Self {
            input,
            width,
            output,
            w1,
            b1,
            w2,
            b2,
        }
    }

    /// `W1 x` without bias.
    fn pre(&self, x: &[T], out: &mut [T]) {
        for (k, o) in out.iter_mut().enumerate() {
            let row = &self.w1[k * self.input..(k + 1) * self.input];
            *o = row.iter().zip(x).map(|(&a, &b)| a * b).sum();
        }
    }

    /// `W2 acc + count * b2` for an accumulated sum of `count` hidden activations.
    fn post(&self, acc: &[T], count: T, out: &mut [T]) {
        for (k, o) in out.iter_mut().enumerate() {
            let row = &self.w2[k * self.width..(k + 1) * self.width];
            *o = row.iter().zip(acc).map(|(&a, &b)| a * b).sum::<T>() + count * self.b2[k];
        }
    }

    pub fn forward(&self, x: &[T], out: &mut [T]) {
        let mut hid = vec![T::zero(); self.width];
        self.pre(x, &mut hid);
        for (h, &b) in hid.iter_mut().zip(&self.b1) {
            *h = (*h + b).max(T::zero());
        }
        self.post(&hid, T::one(), out);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormParams<T> {
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
    /// Mean-scaling, graph norm only.
    pub alpha: Vec<T>,
}

impl<T: Real> NormParams<T> {
    pub fn identity(d: usize) -> Self {
        Self {
            gamma: vec![T::one(); d],
            beta: vec![T::zero(); d],
            alpha: vec![T::one(); d],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams<T> {
    /// Dense variant only.
    pub map: Option<Mlp<T>>,
    pub msg: Mlp<T>,
    pub upd: Mlp<T>,
    pub norm: Option<NormParams<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateModel<T> {
    spec: ModelSpec,
    init: Mlp<T>,
    layers: Vec<LayerParams<T>>,
    primal: Mlp<T>,
    dual: Mlp<T>,
    max_n: usize,
}

/// Zero-padded `batch x n_max x n_max x d` features with a vertex mask.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTensor<T> {
    pub batch: usize,
    pub n_max: usize,
    pub d: usize,
    pub h: Vec<T>,
    pub mask: Vec<bool>,
}

impl<T: Real> FeatureTensor<T> {
    pub fn zeros(batch: usize, n_max: usize, d: usize) -> Self {
        Self {
            batch,
            n_max,
            d,
            h: vec![T::zero(); batch * n_max * n_max * d],
            mask: vec![false; batch * n_max],
        }
    }

    pub fn cell(&self, b: usize, i: usize, j: usize) -> &[T] {
        let start = ((b * self.n_max + i) * self.n_max + j) * self.d;
        &self.h[start..start + self.d]
    }

    pub fn cell_mut(&mut self, b: usize, i: usize, j: usize) -> &mut [T] {
        let start = ((b * self.n_max + i) * self.n_max + j) * self.d;
        &mut self.h[start..start + self.d]
    }

    pub fn valid(&self, b: usize, i: usize) -> bool {
        self.mask[b * self.n_max + i]
    }

    fn graph_len(&self) -> usize {
        self.n_max * self.n_max * self.d
    }
}

/// Raw network output for one graph, truncated to its valid vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateOutput<T> {
    pub y_hat: Vec<T>,
    /// `n x rank`, unit rows.
    pub factors: Vec<T>,
    pub rank: usize,
}

/// Certified bound for one graph plus the primal factors for rounding.
#[derive(Debug, Clone)]
pub struct Prediction {
    pub bound: CertifiedBound<f64>,
    pub factors: Factors,
    /// `max(1, max |w|)`, the divisor applied to the network input.
    pub input_scale: f64,
}

/// Network input: `W / max(1, max |w|)` and the divisor used.
pub fn normalized_input(g: &WeightedGraph) -> (SymMatrix<f64>, f64) {
    let s = g.max_abs_weight().max(1.0);
    let w = g.dense_weights();
    let n = g.n();
    (SymMatrix::from_upper(n, |i, j| w[i * n + j] / s), s)
}

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3)
    })
}

impl<T: Real> SurrogateModel<T> {
    /// Gaussian-initialized model with MLP hidden width `width`; norm
    /// parameters start at the identity.
    pub fn random(spec: ModelSpec, width: usize, seed: u64) -> Self {
        assert!(spec.layers >= 1 && spec.hidden >= 1 && spec.rank >= 1 && width >= 1);
        let d = spec.hidden;
        let mut rng = StreamRng::new(seed);
        let init = Mlp::random(2, width, d, &mut rng);
        let layers = (0..spec.layers)
            .map(|_| {
                let (map, msg_in) = match spec.variant {
                    Variant::Dense => (Some(Mlp::random(d, width, d, &mut rng)), d),
                    Variant::Delta => (None, d + 1),
                };
                let msg = Mlp::random(msg_in, width, d, &mut rng);
                let upd = Mlp::random(2 * d, width, d, &mut rng);
                let norm = (spec.norm != NormKind::None).then(|| NormParams::identity(d));
                LayerParams {
                    map,
                    msg,
                    upd,
                    norm,
                }
            })
            .collect();
        let primal = Mlp::random(d, width, spec.rank, &mut rng);
        let dual = Mlp::random(d, width, 1, &mut rng);
        Self {
            spec,
            init,
            layers,
            primal,
            dual,
            max_n: DEFAULT_MAX_N,
        }
    }

    pub fn spec(&self) -> ModelSpec {
        self.spec
    }

    pub fn layer(&self, t: usize) -> &LayerParams<T> {
        &self.layers[t]
    }

    pub fn layer_mut(&mut self, t: usize) -> &mut LayerParams<T> {
        &mut self.layers[t]
    }

    pub fn max_n(&self) -> usize {
        self.max_n
    }

    pub fn with_max_n(mut self, max_n: usize) -> Self {
        self.max_n = max_n;
        self
    }

    /// Pads `cs` to a common size and applies INIT to `(C_ij, [i = j])`.
    pub fn init_features(&self, cs: &[SymMatrix<T>]) -> FeatureTensor<T> {
        let n_max = cs.iter().map(|c| c.n()).max().unwrap_or(0);
        let d = self.spec.hidden;
        let mut ft = FeatureTensor::zeros(cs.len(), n_max, d);
        for (b, c) in cs.iter().enumerate() {
            for i in 0..c.n() {
                ft.mask[b * n_max + i] = true;
            }
            for i in 0..c.n() {
                for j in 0..c.n() {
                    let x = [c.get(i, j), if i == j { T::one() } else { T::zero() }];
                    self.init.forward(&x, ft.cell_mut(b, i, j));
                }
            }
        }
        ft
    }

    /// `h_ij <- UPD(h_ij, sum_u MSG(MAP(h_uj) + MAP(h_iu)))` over valid `u`.
    pub fn dense_layer(&self, t: usize, ft: &mut FeatureTensor<T>) {
        let lp = &self.layers[t];
        let map = lp.map.as_ref().expect("dense layer without MAP");
        let (n_max, d, w) = (ft.n_max, ft.d, lp.msg.width);
        let len = ft.graph_len();
        let mask = &ft.mask;
        ft.h.par_chunks_mut(len.max(1))
            .enumerate()
            .for_each(|(b, hg)| {
                let m = &mask[b * n_max..(b + 1) * n_max];
                let valid: Vec<usize> = (0..n_max).filter(|&i| m[i]).collect();
                // q = W1_msg MAP(h) per valid cell
                let mut q = vec![T::zero(); n_max * n_max * w];
                q.par_chunks_mut(n_max * w)
                    .enumerate()
                    .for_each(|(i, qrow)| {
                        if !m[i] {
                            return;
                        }
                        let mut p = vec![T::zero(); d];
                        for &j in &valid {
                            let c = (i * n_max + j) * d;
                            map.forward(&hg[c..c + d], &mut p);
                            lp.msg.pre(&p, &mut qrow[j * w..(j + 1) * w]);
                        }
                    });
                let count = T::of(valid.len() as f64);
                let mut out = vec![T::zero(); len];
                out.par_chunks_mut(n_max * d)
                    .enumerate()
                    .for_each(|(i, orow)| {
                        if !m[i] {
                            return;
                        }
                        let mut acc = vec![T::zero(); w];
                        let mut msg = vec![T::zero(); d];
                        let mut cat = vec![T::zero(); 2 * d];
                        for &j in &valid {
                            acc.iter_mut().for_each(|a| *a = T::zero());
                            for &u in &valid {
                                let qiu = &q[(i * n_max + u) * w..(i * n_max + u + 1) * w];
                                let quj = &q[(u * n_max + j) * w..(u * n_max + j + 1) * w];
                                for k in 0..w {
                                    acc[k] += (qiu[k] + quj[k] + lp.msg.b1[k]).max(T::zero());
                                }
                            }
                            lp.msg.post(&acc, count, &mut msg);
                            let c = (i * n_max + j) * d;
                            cat[..d].copy_from_slice(&hg[c..c + d]);
                            cat[d..].copy_from_slice(&msg);
                            lp.upd.forward(&cat, &mut orow[j * d..(j + 1) * d]);
                        }
                    });
                symmetrize_into(hg, &out, m, n_max, d);
            });
    }

    /// `h_ij <- UPD(h_ij, sum_{C_iu != 0} MSG(h_uj, C_iu) + sum_{C_uj != 0} MSG(h_iu, C_uj))`.
    ///
    /// `cs[b]` is the input matrix of graph `b`; entries at masked vertices are ignored.
    pub fn delta_layer(&self, t: usize, ft: &mut FeatureTensor<T>, cs: &[SymMatrix<T>]) {
        assert_eq!(cs.len(), ft.batch, "one input matrix per graph");
        let lp = &self.layers[t];
        let (n_max, d, w) = (ft.n_max, ft.d, lp.msg.width);
        let len = ft.graph_len();
        let mask = &ft.mask;
        // Column `d` of W1 multiplies the coefficient.
        let wc: Vec<T> = (0..w).map(|k| lp.msg.w1[k * (d + 1) + d]).collect();
        let w1h: Vec<T> = (0..w)
            .flat_map(|k| lp.msg.w1[k * (d + 1)..k * (d + 1) + d].to_vec())
            .collect();
        ft.h.par_chunks_mut(len.max(1))
            .enumerate()
            .for_each(|(b, hg)| {
                let m = &mask[b * n_max..(b + 1) * n_max];
                let c = &cs[b];
                let valid: Vec<usize> = (0..n_max).filter(|&i| m[i]).collect();
                let nbrs: Vec<Vec<(usize, T)>> = (0..n_max)
                    .map(|i| {
                        if !m[i] || i >= c.n() {
                            return Vec::new();
                        }
                        valid
                            .iter()
                            .filter(|&&u| u < c.n() && c.get(i, u) != T::zero())
                            .map(|&u| (u, c.get(i, u)))
                            .collect()
                    })
                    .collect();
                // q = W1_h h per valid cell
                let mut q = vec![T::zero(); n_max * n_max * w];
                q.par_chunks_mut(n_max * w)
                    .enumerate()
                    .for_each(|(i, qrow)| {
                        if !m[i] {
                            return;
                        }
                        for &j in &valid {
                            let cell = &hg[(i * n_max + j) * d..(i * n_max + j + 1) * d];
                            for k in 0..w {
                                qrow[j * w + k] = w1h[k * d..(k + 1) * d]
                                    .iter()
                                    .zip(cell)
                                    .map(|(&a, &x)| a * x)
                                    .sum();
                            }
                        }
                    });
                let mut out = vec![T::zero(); len];
                out.par_chunks_mut(n_max * d)
                    .enumerate()
                    .for_each(|(i, orow)| {
                        if !m[i] {
                            return;
                        }
                        let mut acc = vec![T::zero(); w];
                        let mut msg = vec![T::zero(); d];
                        let mut cat = vec![T::zero(); 2 * d];
                        for &j in &valid {
                            acc.iter_mut().for_each(|a| *a = T::zero());
                            for &(u, cv) in &nbrs[i] {
                                let quj = &q[(u * n_max + j) * w..(u * n_max + j + 1) * w];
                                for k in 0..w {
                                    acc[k] += (quj[k] + wc[k] * cv + lp.msg.b1[k]).max(T::zero());
                                }
                            }
                            for &(u, cv) in &nbrs[j] {
                                let qiu = &q[(i * n_max + u) * w..(i * n_max + u + 1) * w];
                                for k in 0..w {
                                    acc[k] += (qiu[k] + wc[k] * cv + lp.msg.b1[k]).max(T::zero());
                                }
                            }
                            let count = T::of((nbrs[i].len() + nbrs[j].len()) as f64);
                            lp.msg.post(&acc, count, &mut msg);
                            let cell = (i * n_max + j) * d;
                            cat[..d].copy_from_slice(&hg[cell..cell + d]);
                            cat[d..].copy_from_slice(&msg);
                            lp.upd.forward(&cat, &mut orow[j * d..(j + 1) * d]);
                        }
                    });
                symmetrize_into(hg, &out, m, n_max, d);
            });
    }

    /// Node features `h_i = mean_j h_ij`, then the primal (unit rows) and dual heads.
    pub fn readout(&self, ft: &FeatureTensor<T>) -> Vec<SurrogateOutput<T>> {
        let (n_max, d, r) = (ft.n_max, ft.d, self.spec.rank);
        (0..ft.batch)
            .into_par_iter()
            .map(|b| {
                let valid: Vec<usize> = (0..n_max).filter(|&i| ft.valid(b, i)).collect();
                let inv = T::one() / T::of(valid.len().max(1) as f64);
                let mut y_hat = Vec::with_capacity(valid.len());
                let mut factors = Vec::with_capacity(valid.len() * r);
                let mut node = vec![T::zero(); d];
                let mut o = vec![T::zero(); r];
                let mut y = [T::zero()];
                for &i in &valid {
                    node.iter_mut().for_each(|v| *v = T::zero());
                    for &j in &valid {
                        for (v, &x) in node.iter_mut().zip(ft.cell(b, i, j)) {
                            *v += x;
                        }
                    }
                    node.iter_mut().for_each(|v| *v *= inv);
                    self.dual.forward(&node, &mut y);
                    self.primal.forward(&node, &mut o);
                    unit_or_e1(&mut o);
                    y_hat.push(y[0]);
                    factors.extend_from_slice(&o);
                }
                SurrogateOutput {
                    y_hat,
                    factors,
                    rank: r,
                }
            })
            .collect()
    }

    /// Full forward pass on the given input matrices.
    pub fn forward(&self, cs: &[SymMatrix<T>]) -> Vec<SurrogateOutput<T>> {
        let mut ft = self.init_features(cs);
        for t in 0..self.spec.layers {
            match self.spec.variant {
                Variant::Dense => self.dense_layer(t, &mut ft),
                Variant::Delta => self.delta_layer(t, &mut ft, cs),
            }
            if let Some(np) = &self.layers[t].norm {
                apply_norm(&mut ft, self.spec.norm, np);
            }
        }
        self.readout(&ft)
    }

    /// Certified bounds for a batch of graphs. The network sees the
    /// normalized adjacency; its dual output is rescaled and radially
    /// projected against each true Laplacian, so every bound is valid
    /// whatever the weights.
    pub fn predict(&self, graphs: &[WeightedGraph]) -> Result<Vec<Prediction>, ModelError> {
        if let Some(g) = graphs.iter().find(|g| g.n() > self.max_n) {
            return Err(ModelError::Capacity {
                n: g.n(),
                max: self.max_n,
            });
        }
        let inputs: Vec<(SymMatrix<f64>, f64)> = graphs.iter().map(normalized_input).collect();
        let cs: Vec<SymMatrix<T>> = inputs.iter().map(|(c, _)| c.cast()).collect();
        let outs = self.forward(&cs);
        graphs
            .par_iter()
            .zip(outs.into_par_iter())
            .zip(inputs.par_iter())
            .map(|((g, out), &(_, s))| {
                let n = g.n();
                // A diverged network still yields a valid bound: the
                // projection accepts any finite estimate.
                let y: Vec<f64> = out
                    .y_hat
                    .iter()
                    .map(|v| {
                        let v = v.to_f64_lossy() * s;
                        if v.is_finite() {
                            v
                        } else {
                            0.0
                        }
                    })
                    .collect();
                let bound = dual_radial_project(&y, &g.laplacian())?;
                let r = out.rank;
                let mut f =
                    Factors::new(n, r, out.factors.iter().map(|v| v.to_f64_lossy()).collect());
                f.normalize_rows();
                Ok(Prediction {
                    bound,
                    factors: f,
                    input_scale: s,
                })
            })
            .collect()
    }

    /// Tensors in canonical container order.
    pub fn named_tensors(&self) -> Vec<(String, Vec<usize>, &[T])> {
        let mut out = Vec::new();
        fn push_mlp<'a, T>(
            out: &mut Vec<(String, Vec<usize>, &'a [T])>,
            prefix: &str,
            m: &'a Mlp<T>,
        ) {
            out.push((format!("{prefix}.w1"), vec![m.width, m.input], &m.w1));
            out.push((format!("{prefix}.b1"), vec![m.width], &m.b1));
            out.push((format!("{prefix}.w2"), vec![m.output, m.width], &m.w2));
            out.push((format!("{prefix}.b2"), vec![m.output], &m.b2));
        }
        push_mlp(&mut out, "init", &self.init);
        for (t, lp) in self.layers.iter().enumerate() {
            if let Some(map) = &lp.map {
                push_mlp(&mut out, &format!("layers.{t}.map"), map);
            }
            push_mlp(&mut out, &format!("layers.{t}.msg"), &lp.msg);
            push_mlp(&mut out, &format!("layers.{t}.upd"), &lp.upd);
            if let Some(np) = &lp.norm {
                let d = self.spec.hidden;
                out.push((format!("layers.{t}.norm.gamma"), vec![d], &np.gamma));
                out.push((format!("layers.{t}.norm.beta"), vec![d], &np.beta));
                if self.spec.norm == NormKind::Graph {
                    out.push((format!("layers.{t}.norm.alpha"), vec![d], &np.alpha));
                }
            }
        }
        push_mlp(&mut out, "primal", &self.primal);
        push_mlp(&mut out, "dual", &self.dual);
        out
    }

    /// Serializes to the weight container format.
    pub fn to_bytes(&self) -> Vec<u8> {
        let tensors = self.named_tensors();
        let mut offset = 0usize;
        let mut entries = Vec::with_capacity(tensors.len());
        for (name, shape, data) in &tensors {
            entries.push(TensorEntry {
                name: name.clone(),
                shape: shape.clone(),
                offset,
            });
            offset += data.len() * 4;
        }
        let manifest = Manifest {
            variant: self.spec.variant.to_string(),
            layers: self.spec.layers,
            hidden: self.spec.hidden,
            rank: self.spec.rank,
            norm: self.spec.norm.to_string(),
            tensors: entries,
        };
        let json = serde_json::to_vec(&manifest).expect("manifest serializes");
        let mut bytes = Vec::with_capacity(8 + 4 + json.len() + offset + 8);
        bytes.extend_from_slice(MAGIC);
        bytes.extend_from_slice(&(json.len() as u32).to_le_bytes());
        bytes.extend_from_slice(&json);
        for (_, _, data) in &tensors {
            for v in data.iter() {
                bytes.extend_from_slice(&(v.to_f64_lossy() as f32).to_le_bytes());
            }
        }
        let sum = fnv1a64(&bytes);
        bytes.extend_from_slice(&sum.to_le_bytes());
        bytes
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<(), ModelError> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self, ModelError> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    /// Parses and validates a weight container.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ModelError> {
        if bytes.len() < MAGIC.len() + 4 + 8 {
            return Err(ModelError::Checksum);
        }
        let (body, tail) = bytes.split_at(bytes.len() - 8);
        let stored = u64::from_le_bytes(tail.try_into().expect("8 bytes"));
        if fnv1a64(body) != stored {
            return Err(ModelError::Checksum);
        }
        if &body[..8] != MAGIC {
            return Err(ModelError::Magic);
        }
        let mlen = u32::from_le_bytes(body[8..12].try_into().expect("4 bytes")) as usize;
        let json = body
            .get(12..12 + mlen)
            .ok_or_else(|| ModelError::Manifest("length exceeds container".into()))?;
        let payload = &body[12 + mlen..];
        let manifest: Manifest =
            serde_json::from_slice(json).map_err(|e| ModelError::Manifest(e.to_string()))?;
        let spec = ModelSpec {
            variant: manifest.variant.parse()?,
            layers: manifest.layers,
            hidden: manifest.hidden,
            rank: manifest.rank,
            norm: manifest.norm.parse()?,
        };
        if spec.layers == 0 || spec.hidden == 0 || spec.rank == 0 {
            return Err(ModelError::Manifest(
                "layers, hidden and rank must be positive".into(),
            ));
        }

        let mut store: BTreeMap<String, (Vec<usize>, Vec<T>)> = BTreeMap::new();
        for e in manifest.tensors {
            let count: usize = e.shape.iter().product();
            let end = e
                .offset
                .checked_add(count * 4)
                .ok_or_else(|| ModelError::OutOfBounds(e.name.clone()))?;
            let raw = payload
                .get(e.offset..end)
                .ok_or_else(|| ModelError::OutOfBounds(e.name.clone()))?;
            let data: Vec<T> = raw
                .chunks_exact(4)
                .map(|c| {
                    T::of(f64::from(f32::from_le_bytes(
                        c.try_into().expect("4 bytes"),
                    )))
                })
                .collect();
            if data.iter().any(|v| !v.is_finite()) {
                return Err(ModelError::NonFinite(e.name));
            }
            store.insert(e.name, (e.shape, data));
        }

        let d = spec.hidden;
        let mut st = TensorStore { map: store };
        let init = st.mlp("init", 2, d)?;
        let mut layers = Vec::with_capacity(spec.layers);
        for t in 0..spec.layers {
            let map = match spec.variant {
                Variant::Dense => Some(st.mlp(&format!("layers.{t}.map"), d, d)?),
                Variant::Delta => None,
            };
            let msg_in = if map.is_some() { d } else { d + 1 };
            let msg = st.mlp(&format!("layers.{t}.msg"), msg_in, d)?;
            let upd = st.mlp(&format!("layers.{t}.upd"), 2 * d, d)?;
            let norm = if spec.norm == NormKind::None {
                None
            } else {
                let gamma = st.take(&format!("layers.{t}.norm.gamma"), vec![d])?;
                let beta = st.take(&format!("layers.{t}.norm.beta"), vec![d])?;
                let alpha = if spec.norm == NormKind::Graph {
                    st.take(&format!("layers.{t}.norm.alpha"), vec![d])?
                } else {
                    vec![T::one(); d]
                };
                Some(NormParams { gamma, beta, alpha })
            };
            layers.push(LayerParams {
                map,
                msg,
                upd,
                norm,
            });
        }
        let primal = st.mlp("primal", d, spec.rank)?;
        let dual = st.mlp("dual", d, 1)?;
        if let Some(extra) = st.map.into_keys().next() {
            return Err(ModelError::UnexpectedTensor(extra));
        }
        Ok(Self {
            spec,
            init,
            layers,
            primal,
            dual,
            max_n: DEFAULT_MAX_N,
        })
    }
}

struct TensorStore<T> {
    map: BTreeMap<String, (Vec<usize>, Vec<T>)>,
}

impl<T: Real> TensorStore<T> {
    fn take(&mut self, name: &str, shape: Vec<usize>) -> Result<Vec<T>, ModelError> {
        let (got, data) = self
            .map
            .remove(name)
            .ok_or_else(|| ModelError::MissingTensor(name.to_string()))?;
        if got != shape {
            return Err(ModelError::Shape {
                name: name.to_string(),
                expected: shape,
                got,
            });
        }
        Ok(data)
    }

    /// The hidden width is read off `w1`; every other shape is implied.
    fn mlp(&mut self, prefix: &str, input: usize, output: usize) -> Result<Mlp<T>, ModelError> {
        let w1_name = format!("{prefix}.w1");
        let width = match self.map.get(&w1_name) {
            Some((shape, _)) if shape.len() == 2 && shape[0] > 0 => shape[0],
            Some((shape, _)) => {
                return Err(ModelError::Shape {
                    name: w1_name,
                    expected: vec![0, input],
                    got: shape.clone(),
                });
            }
            None => return Err(ModelError::MissingTensor(w1_name)),
        };
        Ok(Mlp {
            input,
            width,
            output,
            w1: self.take(&w1_name, vec![width, input])?,
            b1: self.take(&format!("{prefix}.b1"), vec![width])?,
            w2: self.take(&format!("{prefix}.w2"), vec![output, width])?,
            b2: self.take(&format!("{prefix}.b2"), vec![output])?,
        })
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    variant: String,
    layers: usize,
    hidden: usize,
    rank: usize,
    norm: String,
    tensors: Vec<TensorEntry>,
}

fn unit_or_e1<T: Real>(o: &mut [T]) {
    let norm = o.iter().map(|&v| v * v).sum::<T>().sqrt();
    if norm.is_finite() && norm >= T::of(1e-12) {
        o.iter_mut().for_each(|v| *v /= norm);
    } else {
        o.iter_mut().for_each(|v| *v = T::zero());
        o[0] = T::one();
    }
}

/// `dst_ij = (src_ij + src_ji) / 2` on valid cells, zero elsewhere.
fn symmetrize_into<T: Real>(dst: &mut [T], src: &[T], m: &[bool], n_max: usize, d: usize) {
    let half = T::of(0.5);
    for i in 0..n_max {
        for j in 0..n_max {
            let a = (i * n_max + j) * d;
            if m[i] && m[j] {
                let b = (j * n_max + i) * d;
                for f in 0..d {
                    dst[a + f] = (src[a + f] + src[b + f]) * half;
                }
            } else {
                dst[a..a + d].iter_mut().for_each(|v| *v = T::zero());
            }
        }
    }
}

/// Normalizes features in place; padded cells are zero afterwards.
///
/// Layer and graph statistics use valid cells only. Spatial statistics run
/// over the whole `n_max x n_max` grid of each graph, padding included.
pub fn apply_norm<T: Real>(ft: &mut FeatureTensor<T>, kind: NormKind, p: &NormParams<T>) {
    let (n_max, d) = (ft.n_max, ft.d);
    let eps = T::of(NORM_EPS);
    let len = ft.graph_len();
    let mask = &ft.mask;
    ft.h.par_chunks_mut(len.max(1))
        .enumerate()
        .for_each(|(b, hg)| {
            let m = &mask[b * n_max..(b + 1) * n_max];
            let is_valid = |c: usize| m[c / n_max] && m[c % n_max];
            match kind {
                NormKind::None => {}
                NormKind::Layer => {
                    let inv_d = T::one() / T::of(d as f64);
                    for (c, cell) in hg.chunks_exact_mut(d).enumerate() {
                        if !is_valid(c) {
                            continue;
                        }
                        let mu = cell.iter().copied().sum::<T>() * inv_d;
                        let var = cell.iter().map(|&v| (v - mu) * (v - mu)).sum::<T>() * inv_d;
                        let s = (var + eps).sqrt();
                        for (f, v) in cell.iter_mut().enumerate() {
                            *v = p.gamma[f] * (*v - mu) / s + p.beta[f];
                        }
                    }
                }
                NormKind::Graph | NormKind::Spatial => {
                    let cells: Vec<usize> = (0..n_max * n_max)
                        .filter(|&c| kind == NormKind::Spatial || is_valid(c))
                        .collect();
                    if cells.is_empty() {
                        return;
                    }
                    let inv = T::one() / T::of(cells.len() as f64);
                    for f in 0..d {
                        let mu = cells.iter().map(|&c| hg[c * d + f]).sum::<T>() * inv;
                        let var = cells
                            .iter()
                            .map(|&c| (hg[c * d + f] - mu) * (hg[c * d + f] - mu))
                            .sum::<T>()
                            * inv;
                        let s = (var + eps).sqrt();
                        let centre = if kind == NormKind::Graph {
                            p.alpha[f] * mu
                        } else {
                            mu
                        };
                        for &c in &cells {
                            let v = &mut hg[c * d + f];
                            *v = p.gamma[f] * (*v - centre) / s + p.beta[f];
                        }
                    }
                }
            }
            for (c, cell) in hg.chunks_exact_mut(d).enumerate() {
                if !is_valid(c) {
                    cell.iter_mut().for_each(|v| *v = T::zero());
                }
            }
        });
}
