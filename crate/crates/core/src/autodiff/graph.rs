//! Define-by-run reverse-mode autodiff over dense 2-D `f64` tensors.
//!
//! A [`Graph`] owns every node created during one forward pass; a [`Tensor`]
//! is a cheap handle into that graph. The operation set is exactly what the
//! frame encoder, the causal TCN, and the losses need: causal dilated
//! convolution, per-timestep affine maps, relu, residual adds, row softmax,
//! weighted negative log-likelihood, concat/slice along time, and a constant
//! right-matmul for the step→phase transform.
//!
//! Graphs are rebuilt per forward pass and are single-threaded; gradients
//! accumulate into each node until the graph is dropped or zeroed.

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array2};
use thiserror::Error;

/// Dense row-major 2-D tensor storage. Rows are timesteps for sequence data.
pub type Matrix = Array2<f64>;

#[derive(Debug, Error)]
pub enum AutodiffError {
    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },
    #[error("target label {label} out of range for {classes} classes (row {row})")]
    LabelOutOfRange {
        label: usize,
        classes: usize,
        row: usize,
    },
    #[error("backward requires a 1x1 scalar loss, got {rows}x{cols}")]
    NotScalar { rows: usize, cols: usize },
    #[error("non-finite values produced by {op}")]
    NonFinite { op: &'static str },
    #[error("{0}")]
    Contract(String),
}

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Tensor {
    pub(crate) id: usize,
}

/// Recorded operation. Input handles always precede the output node, so a
/// single reverse sweep over the node list visits every dependency after its
/// consumers.
#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Relu {
        x: usize,
    },
    Add {
        a: usize,
        b: usize,
    },
    /// out[t] = x[t] · Wᵀ + b
    PointwiseLinear {
        x: usize,
        w: usize,
        b: usize,
    },
    /// Causal dilated conv; kernel stored as [Cout × (K·Cin)] with tap `k`
    /// in columns k·Cin..(k+1)·Cin and tap K−1 reading the current frame.
    ConvCausal {
        x: usize,
        w: usize,
        b: usize,
        ksize: usize,
        dilation: usize,
    },
    SoftmaxRows {
        x: usize,
    },
    /// out = x · M for a constant matrix M (no gradient into M).
    MatmulConst {
        x: usize,
        m: Matrix,
    },
    ConcatRows {
        a: usize,
        b: usize,
    },
    SliceRows {
        x: usize,
        start: usize,
    },
    Sum {
        x: usize,
    },
    /// Scalar mean over rows of −w[y_t]·ln(max(p[t, y_t], eps)).
    WeightedNllRows {
        probs: usize,
        targets: Vec<usize>,
        weights: Vec<f64>,
        eps: f64,
    },
}

struct Node {
    values: Matrix,
    grad: Matrix,
    requires_grad: bool,
    op: Op,
}

/// Reverse-mode computation graph (Wengert list).
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

fn all_finite(m: &Matrix) -> bool {
    m.iter().all(|v| v.is_finite())
}

impl Graph {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    fn push(&mut self, values: Matrix, requires_grad: bool, op: Op) -> Tensor {
        let grad = Matrix::zeros(values.raw_dim());
        self.nodes.push(Node {
            values,
            grad,
            requires_grad,
            op,
        });
        Tensor {
            id: self.nodes.len() - 1,
        }
    }

    fn requires(&self, t: Tensor) -> bool {
        self.nodes[t.id].requires_grad
    }

    pub fn values(&self, t: Tensor) -> &Matrix {
        &self.nodes[t.id].values
    }

    pub fn grad(&self, t: Tensor) -> &Matrix {
        &self.nodes[t.id].grad
    }

    pub fn shape(&self, t: Tensor) -> (usize, usize) {
        let d = self.nodes[t.id].values.dim();
        (d.0, d.1)
    }

    /// Value of a 1x1 tensor.
    pub fn scalar(&self, t: Tensor) -> f64 {
        self.nodes[t.id].values[[0, 0]]
    }

    pub fn zero_grads(&mut self) {
        for n in &mut self.nodes {
            n.grad.fill(0.0);
        }
    }

    /// Insert an input node. Rejects non-finite values.
    pub fn leaf(&mut self, values: Matrix, requires_grad: bool) -> Result<Tensor, AutodiffError> {
        if !all_finite(&values) {
            return Err(AutodiffError::NonFinite { op: "leaf" });
        }
        Ok(self.push(values, requires_grad, Op::Leaf))
    }

    /// Insert a non-trainable input node.
    pub fn constant(&mut self, values: Matrix) -> Result<Tensor, AutodiffError> {
        self.leaf(values, false)
    }

    pub fn relu(&mut self, x: Tensor) -> Tensor {
        let out = self.nodes[x.id].values.mapv(|v| v.max(0.0));
        let rg = self.requires(x);
        self.push(out, rg, Op::Relu { x: x.id })
    }

    /// Elementwise sum of two same-shape tensors.
    pub fn residual_add(&mut self, a: Tensor, b: Tensor) -> Result<Tensor, AutodiffError> {
        let (ar, ac) = self.shape(a);
        let (br, bc) = self.shape(b);
        if (ar, ac) != (br, bc) {
            return Err(AutodiffError::ShapeMismatch {
                op: "residual_add",
                detail: format!("{ar}x{ac} vs {br}x{bc}"),
            });
        }
        let out = &self.nodes[a.id].values + &self.nodes[b.id].values;
        if !all_finite(&out) {
            return Err(AutodiffError::NonFinite { op: "residual_add" });
        }
        let rg = self.requires(a) || self.requires(b);
        Ok(self.push(out, rg, Op::Add { a: a.id, b: b.id }))
    }

    /// Per-timestep affine map: out[t] = W·x[t] + b, with W as [Cout×Cin]
    /// and b as [1×Cout].
    pub fn pointwise_linear(
        &mut self,
        x: Tensor,
        w: Tensor,
        b: Tensor,
    ) -> Result<Tensor, AutodiffError> {
        let (_, cin) = self.shape(x);
        let (cout, wcin) = self.shape(w);
        let (brows, bcols) = self.shape(b);
        if wcin != cin || brows != 1 || bcols != cout {
            return Err(AutodiffError::ShapeMismatch {
                op: "pointwise_linear",
                detail: format!("input Cin={cin}, W {cout}x{wcin}, b {brows}x{bcols}"),
            });
        }
        let mut out = self.nodes[x.id].values.dot(&self.nodes[w.id].values.t());
        out += &self.nodes[b.id].values;
        if !all_finite(&out) {
            return Err(AutodiffError::NonFinite {
                op: "pointwise_linear",
            });
        }
        let rg = self.requires(x) || self.requires(w) || self.requires(b);
        Ok(self.push(
            out,
            rg,
            Op::PointwiseLinear {
                x: x.id,
                w: w.id,
                b: b.id,
            },
        ))
    }

    /// Causal dilated 1-D convolution over rows (time):
    ///
    /// out[t] = b + Σ_{k=0..K−1} W_k · x[t − (K−1−k)·dilation]
    ///
    /// with out-of-range frames treated as zero (left zero-padding only; no
    /// future frame is ever read). `kernel` holds the K taps side by side as
    /// a [Cout × K·Cin] matrix; tap K−1 reads the current frame.
    pub fn conv1d_causal(
        &mut self,
        x: Tensor,
        kernel: Tensor,
        bias: Tensor,
        ksize: usize,
        dilation: usize,
    ) -> Result<Tensor, AutodiffError> {
        let (t_len, cin) = self.shape(x);
        let (cout, kcols) = self.shape(kernel);
        let (brows, bcols) = self.shape(bias);
        if ksize < 1 || dilation < 1 {
            return Err(AutodiffError::Contract(format!(
                "conv1d_causal requires K >= 1 and dilation >= 1, got K={ksize}, d={dilation}"
            )));
        }
        if t_len < 1 {
            return Err(AutodiffError::Contract(
                "conv1d_causal requires at least one frame".into(),
            ));
        }
        if kcols != ksize * cin || brows != 1 || bcols != cout {
            return Err(AutodiffError::ShapeMismatch {
                op: "conv1d_causal",
                detail: format!(
                    "input Cin={cin}, kernel {cout}x{kcols} (need {cout}x{}), b {brows}x{bcols}",
                    ksize * cin
                ),
            });
        }
        let xv = &self.nodes[x.id].values;
        let wv = &self.nodes[kernel.id].values;
        let mut out = Matrix::zeros((t_len, cout));
        for k in 0..ksize {
            let offset = (ksize - 1 - k) * dilation;
            if offset >= t_len {
                continue;
            }
            let tap = wv.slice(s![.., k * cin..(k + 1) * cin]);
            general_mat_mul(
                1.0,
                &xv.slice(s![..t_len - offset, ..]),
                &tap.t(),
                1.0,
                &mut out.slice_mut(s![offset.., ..]),
            );
        }
        out += &self.nodes[bias.id].values;
        if !all_finite(&out) {
            return Err(AutodiffError::NonFinite { op: "conv1d_causal" });
        }
        let rg = self.requires(x) || self.requires(kernel) || self.requires(bias);
        Ok(self.push(
            out,
            rg,
            Op::ConvCausal {
                x: x.id,
                w: kernel.id,
                b: bias.id,
                ksize,
                dilation,
            },
        ))
    }

    /// Row-wise softmax with max-subtraction.
    pub fn softmax_rows(&mut self, x: Tensor) -> Tensor {
        let xv = &self.nodes[x.id].values;
        let mut out = xv.clone();
        for mut row in out.rows_mut() {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            row.mapv_inplace(|v| (v - max).exp());
            let sum: f64 = row.sum();
            row.mapv_inplace(|v| v / sum);
        }
        let rg = self.requires(x);
        self.push(out, rg, Op::SoftmaxRows { x: x.id })
    }

    /// Mean over rows of −weights[y_t]·ln(max(probs[t, y_t], eps)).
    pub fn weighted_nll_rows(
        &mut self,
        probs: Tensor,
        targets: &[usize],
        weights: &[f64],
        eps: f64,
    ) -> Result<Tensor, AutodiffError> {
        let (t_len, classes) = self.shape(probs);
        if targets.len() != t_len {
            return Err(AutodiffError::ShapeMismatch {
                op: "weighted_nll_rows",
                detail: format!("{} targets for {t_len} rows", targets.len()),
            });
        }
        if weights.len() != classes {
            return Err(AutodiffError::ShapeMismatch {
                op: "weighted_nll_rows",
                detail: format!("{} weights for {classes} classes", weights.len()),
            });
        }
        if eps <= 0.0 {
            return Err(AutodiffError::Contract(format!(
                "weighted_nll_rows requires eps > 0, got {eps}"
            )));
        }
        for (row, &y) in targets.iter().enumerate() {
            if y >= classes {
                return Err(AutodiffError::LabelOutOfRange {
                    label: y,
                    classes,
                    row,
                });
            }
        }
        let pv = &self.nodes[probs.id].values;
        let mut total = 0.0;
        for (t, &y) in targets.iter().enumerate() {
            total -= weights[y] * pv[[t, y]].max(eps).ln();
        }
        let loss = total / t_len as f64;
        if !loss.is_finite() {
            return Err(AutodiffError::NonFinite {
                op: "weighted_nll_rows",
            });
        }
        let out = Matrix::from_elem((1, 1), loss);
        let rg = self.requires(probs);
        Ok(self.push(
            out,
            rg,
            Op::WeightedNllRows {
                probs: probs.id,
                targets: targets.to_vec(),
                weights: weights.to_vec(),
                eps,
            },
        ))
    }

    /// out = x · M for a constant M; gradients flow into x only.
    pub fn matmul_const(&mut self, x: Tensor, m: &Matrix) -> Result<Tensor, AutodiffError> {
        let (_, cols) = self.shape(x);
        if m.nrows() != cols {
            return Err(AutodiffError::ShapeMismatch {
                op: "matmul_const",
                detail: format!("input cols {cols} vs matrix rows {}", m.nrows()),
            });
        }
        let out = self.nodes[x.id].values.dot(m);
        if !all_finite(&out) {
            return Err(AutodiffError::NonFinite { op: "matmul_const" });
        }
        let rg = self.requires(x);
        Ok(self.push(out, rg, Op::MatmulConst { x: x.id, m: m.clone() }))
    }

    /// Stack `a` over `b` along the row (time) axis.
    pub fn concat_rows(&mut self, a: Tensor, b: Tensor) -> Result<Tensor, AutodiffError> {
        let (ar, ac) = self.shape(a);
        let (br, bc) = self.shape(b);
        if ac != bc {
            return Err(AutodiffError::ShapeMismatch {
                op: "concat_rows",
                detail: format!("{ar}x{ac} vs {br}x{bc}"),
            });
        }
        let mut out = Matrix::zeros((ar + br, ac));
        out.slice_mut(s![..ar, ..]).assign(&self.nodes[a.id].values);
        out.slice_mut(s![ar.., ..]).assign(&self.nodes[b.id].values);
        let rg = self.requires(a) || self.requires(b);
        Ok(self.push(out, rg, Op::ConcatRows { a: a.id, b: b.id }))
    }

    /// Rows `start..` of x.
    pub fn slice_rows(&mut self, x: Tensor, start: usize) -> Result<Tensor, AutodiffError> {
        let (rows, _) = self.shape(x);
        if start >= rows {
            return Err(AutodiffError::ShapeMismatch {
                op: "slice_rows",
                detail: format!("start {start} past {rows} rows"),
            });
        }
        let out = self.nodes[x.id].values.slice(s![start.., ..]).to_owned();
        let rg = self.requires(x);
        Ok(self.push(out, rg, Op::SliceRows { x: x.id, start }))
    }

    /// Sum of all entries, as a 1x1 tensor.
    pub fn sum(&mut self, x: Tensor) -> Tensor {
        let out = Matrix::from_elem((1, 1), self.nodes[x.id].values.sum());
        let rg = self.requires(x);
        self.push(out, rg, Op::Sum { x: x.id })
    }

    /// Reverse sweep from a scalar loss. Gradients of every `requires_grad`
    /// node accumulate into its grad plane; calling backward twice without
    /// zeroing doubles them exactly.
    pub fn backward(&mut self, loss: Tensor) -> Result<(), AutodiffError> {
        let (rows, cols) = self.shape(loss);
        if (rows, cols) != (1, 1) {
            return Err(AutodiffError::NotScalar { rows, cols });
        }
        let mut adjoint: Vec<Option<Matrix>> = (0..self.nodes.len()).map(|_| None).collect();
        if self.nodes[loss.id].requires_grad {
            adjoint[loss.id] = Some(Matrix::ones((1, 1)));
        }
        for id in (0..=loss.id).rev() {
            let Some(g) = adjoint[id].take() else {
                continue;
            };
            if !all_finite(&g) {
                return Err(AutodiffError::NonFinite { op: "backward" });
            }
            let contributions = self.local_grads(id, &g);
            for (input, contrib) in contributions {
                match &mut adjoint[input] {
                    Some(acc) => *acc += &contrib,
                    slot => *slot = Some(contrib),
                }
            }
            self.nodes[id].grad += &g;
        }
        Ok(())
    }

    /// Vector-Jacobian products of node `id` w.r.t. each grad-requiring input.
    fn local_grads(&self, id: usize, g: &Matrix) -> Vec<(usize, Matrix)> {
        let mut out: Vec<(usize, Matrix)> = Vec::new();
        let want = |nid: usize| self.nodes[nid].requires_grad;
        match &self.nodes[id].op {
            Op::Leaf => {}
            Op::Relu { x } => {
                if want(*x) {
                    let mask = self.nodes[*x].values.mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
                    out.push((*x, g * &mask));
                }
            }
            Op::Add { a, b } => {
                if want(*a) {
                    out.push((*a, g.clone()));
                }
                if want(*b) {
                    out.push((*b, g.clone()));
                }
            }
            Op::PointwiseLinear { x, w, b } => {
                if want(*x) {
                    out.push((*x, g.dot(&self.nodes[*w].values)));
                }
                if want(*w) {
                    out.push((*w, g.t().dot(&self.nodes[*x].values)));
                }
                if want(*b) {
                    let col_sums = g.sum_axis(ndarray::Axis(0)).insert_axis(ndarray::Axis(0));
                    out.push((*b, col_sums));
                }
            }
            Op::ConvCausal {
                x,
                w,
                b,
                ksize,
                dilation,
            } => {
                let xv = &self.nodes[*x].values;
                let wv = &self.nodes[*w].values;
                let (t_len, cin) = xv.dim();
                let (cout, _) = wv.dim();
                if want(*x) {
                    let mut dx = Matrix::zeros((t_len, cin));
                    for k in 0..*ksize {
                        let offset = (ksize - 1 - k) * dilation;
                        if offset >= t_len {
                            continue;
                        }
                        let tap = wv.slice(s![.., k * cin..(k + 1) * cin]);
                        general_mat_mul(
                            1.0,
                            &g.slice(s![offset.., ..]),
                            &tap,
                            1.0,
                            &mut dx.slice_mut(s![..t_len - offset, ..]),
                        );
                    }
                    out.push((*x, dx));
                }
                if want(*w) {
                    let mut dw = Matrix::zeros((cout, ksize * cin));
                    for k in 0..*ksize {
                        let offset = (ksize - 1 - k) * dilation;
                        if offset >= t_len {
                            continue;
                        }
                        general_mat_mul(
                            1.0,
                            &g.slice(s![offset.., ..]).t(),
                            &xv.slice(s![..t_len - offset, ..]),
                            1.0,
                            &mut dw.slice_mut(s![.., k * cin..(k + 1) * cin]),
                        );
                    }
                    out.push((*w, dw));
                }
                if want(*b) {
                    let col_sums = g.sum_axis(ndarray::Axis(0)).insert_axis(ndarray::Axis(0));
                    out.push((*b, col_sums));
                }
            }
            Op::SoftmaxRows { x } => {
                if want(*x) {
                    let y = &self.nodes[id].values;
                    let mut dx = g * y;
                    for (mut drow, yrow) in dx.rows_mut().into_iter().zip(y.rows()) {
                        let dot: f64 = drow.sum();
                        drow.scaled_add(-dot, &yrow);
                    }
                    out.push((*x, dx));
                }
            }
            Op::MatmulConst { x, m } => {
                if want(*x) {
                    out.push((*x, g.dot(&m.t())));
                }
            }
            Op::ConcatRows { a, b } => {
                let ar = self.nodes[*a].values.nrows();
                if want(*a) {
                    out.push((*a, g.slice(s![..ar, ..]).to_owned()));
                }
                if want(*b) {
                    out.push((*b, g.slice(s![ar.., ..]).to_owned()));
                }
            }
            Op::SliceRows { x, start } => {
                if want(*x) {
                    let (rows, cols) = self.nodes[*x].values.dim();
                    let mut dx = Matrix::zeros((rows, cols));
                    dx.slice_mut(s![*start.., ..]).assign(g);
                    out.push((*x, dx));
                }
            }
            Op::Sum { x } => {
                if want(*x) {
                    let dims = self.nodes[*x].values.raw_dim();
                    out.push((*x, Matrix::from_elem(dims, g[[0, 0]])));
                }
            }
            Op::WeightedNllRows {
                probs,
                targets,
                weights,
                eps,
            } => {
                if want(*probs) {
                    let pv = &self.nodes[*probs].values;
                    let t_len = targets.len() as f64;
                    let mut dp = Matrix::zeros(pv.raw_dim());
                    let upstream = g[[0, 0]];
                    for (t, &y) in targets.iter().enumerate() {
                        let p = pv[[t, y]];
                        if p > *eps {
                            dp[[t, y]] = -upstream * weights[y] / (t_len * p);
                        }
                    }
                    out.push((*probs, dp));
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr2;

    fn approx_eq(a: &Matrix, b: &Matrix, tol: f64) -> bool {
        a.dim() == b.dim() && a.iter().zip(b.iter()).all(|(x, y)| (x - y).abs() <= tol)
    }

    /// Brute-force loop oracle for the causal convolution, zero-padding on
    /// the left. Independent of the graph implementation.
    fn conv_loop_oracle(
        x: &Matrix,
        kernel: &Matrix,
        bias: &Matrix,
        ksize: usize,
        dilation: usize,
    ) -> Matrix {
        let (t_len, cin) = x.dim();
        let cout = kernel.nrows();
        let mut out = Matrix::zeros((t_len, cout));
        for t in 0..t_len {
            for co in 0..cout {
                let mut acc = bias[[0, co]];
                for k in 0..ksize {
                    let offset = (ksize - 1 - k) * dilation;
                    if t < offset {
                        continue;
                    }
                    for ci in 0..cin {
                        acc += kernel[[co, k * cin + ci]] * x[[t - offset, ci]];
                    }
                }
                out[[t, co]] = acc;
            }
        }
        out
    }

    fn rand_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
        // Small deterministic LCG; keeps the oracle tests dependency-free.
        let mut state = seed.wrapping_mul(2862933555777941757).wrapping_add(3037000493);
        Matrix::from_shape_fn((rows, cols), |_| {
            state = state
                .wrapping_mul(2862933555777941757)
                .wrapping_add(3037000493);
            (state >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
        })
    }

    #[test]
    fn conv_impulse_places_taps_causally() {
        let mut g = Graph::new();
        let mut xv = Matrix::zeros((12, 1));
        xv[[5, 0]] = 1.0;
        let x = g.leaf(xv, false).unwrap();
        let (a, b, c) = (0.7, -1.3, 2.1);
        let kernel = g.leaf(arr2(&[[a, b, c]]), false).unwrap();
        let bias = g.leaf(Matrix::zeros((1, 1)), false).unwrap();
        let y = g.conv1d_causal(x, kernel, bias, 3, 2).unwrap();
        let yv = g.values(y);
        for t in 0..12 {
            let expect = match t {
                5 => c,
                7 => b,
                9 => a,
                _ => 0.0,
            };
            assert_eq!(yv[[t, 0]], expect, "frame {t}");
        }
    }

    #[test]
    fn conv_zero_input_yields_bias() {
        let mut g = Graph::new();
        let x = g.leaf(Matrix::zeros((6, 3)), false).unwrap();
        let kernel = g.leaf(rand_matrix(2, 9, 7), false).unwrap();
        let bias = g.leaf(arr2(&[[0.5, -0.25]]), false).unwrap();
        let y = g.conv1d_causal(x, kernel, bias, 3, 1).unwrap();
        for t in 0..6 {
            assert_eq!(g.values(y)[[t, 0]], 0.5);
            assert_eq!(g.values(y)[[t, 1]], -0.25);
        }
    }

    #[test]
    fn conv_matches_loop_oracle() {
        let xv = rand_matrix(8, 2, 11);
        let wv = rand_matrix(3, 6, 13);
        let bv = rand_matrix(1, 3, 17);
        let expected = conv_loop_oracle(&xv, &wv, &bv, 3, 1);

        let mut g = Graph::new();
        let x = g.leaf(xv, false).unwrap();
        let w = g.leaf(wv, false).unwrap();
        let b = g.leaf(bv, false).unwrap();
        let y = g.conv1d_causal(x, w, b, 3, 1).unwrap();
        assert!(approx_eq(g.values(y), &expected, 1e-12));
    }

    #[test]
    fn conv_dilated_matches_loop_oracle() {
        let xv = rand_matrix(20, 3, 23);
        let wv = rand_matrix(4, 9, 29);
        let bv = rand_matrix(1, 4, 31);
        let expected = conv_loop_oracle(&xv, &wv, &bv, 3, 4);

        let mut g = Graph::new();
        let x = g.leaf(xv, false).unwrap();
        let w = g.leaf(wv, false).unwrap();
        let b = g.leaf(bv, false).unwrap();
        let y = g.conv1d_causal(x, w, b, 3, 4).unwrap();
        assert!(approx_eq(g.values(y), &expected, 1e-12));
    }

    #[test]
    fn conv_rejects_channel_mismatch() {
        let mut g = Graph::new();
        let x = g.leaf(Matrix::zeros((4, 3)), false).unwrap();
        let w = g.leaf(Matrix::zeros((2, 8)), false).unwrap(); // needs 2x9
        let b = g.leaf(Matrix::zeros((1, 2)), false).unwrap();
        let err = g.conv1d_causal(x, w, b, 3, 1).unwrap_err();
        assert!(matches!(err, AutodiffError::ShapeMismatch { .. }));
    }

    #[test]
    fn pointwise_identity_passes_through() {
        let mut g = Graph::new();
        let xv = rand_matrix(5, 3, 37);
        let x = g.leaf(xv.clone(), false).unwrap();
        let w = g.leaf(Matrix::eye(3), false).unwrap();
        let b = g.leaf(Matrix::zeros((1, 3)), false).unwrap();
        let y = g.pointwise_linear(x, w, b).unwrap();
        assert!(approx_eq(g.values(y), &xv, 0.0));
    }

    #[test]
    fn pointwise_hand_example() {
        let mut g = Graph::new();
        let x = g.leaf(arr2(&[[1.0, 2.0]]), false).unwrap();
        let w = g.leaf(arr2(&[[1.0, 1.0], [0.0, 1.0]]), false).unwrap();
        let b = g.leaf(Matrix::zeros((1, 2)), false).unwrap();
        let y = g.pointwise_linear(x, w, b).unwrap();
        assert_eq!(g.values(y), &arr2(&[[3.0, 2.0]]));
    }

    #[test]
    fn pointwise_matches_matmul_oracle() {
        let xv = rand_matrix(5, 3, 41);
        let wv = rand_matrix(4, 3, 43);
        let bv = rand_matrix(1, 4, 47);
        let mut expected = xv.dot(&wv.t());
        expected += &bv;

        let mut g = Graph::new();
        let x = g.leaf(xv, false).unwrap();
        let w = g.leaf(wv, false).unwrap();
        let b = g.leaf(bv, false).unwrap();
        let y = g.pointwise_linear(x, w, b).unwrap();
        assert!(approx_eq(g.values(y), &expected, 1e-12));
    }

    #[test]
    fn relu_clamps_and_masks_gradient() {
        let mut g = Graph::new();
        let x = g.leaf(arr2(&[[-1.0, 0.0, 2.0]]), true).unwrap();
        let y = g.relu(x);
        assert_eq!(g.values(y), &arr2(&[[0.0, 0.0, 2.0]]));
        let loss = g.sum(y);
        g.backward(loss).unwrap();
        assert_eq!(g.grad(x), &arr2(&[[0.0, 0.0, 1.0]]));
    }

    #[test]
    fn relu_all_negative_blocks_gradient() {
        let mut g = Graph::new();
        let x = g.leaf(arr2(&[[-3.0, -0.5], [-1.0, -2.0]]), true).unwrap();
        let y = g.relu(x);
        assert_eq!(g.values(y).sum(), 0.0);
        let loss = g.sum(y);
        g.backward(loss).unwrap();
        assert_eq!(g.grad(x).sum(), 0.0);
    }

    #[test]
    fn residual_add_identities() {
        let av = rand_matrix(4, 4, 53);
        let mut g = Graph::new();
        let a = g.leaf(av.clone(), false).unwrap();
        let zero = g.leaf(Matrix::zeros((4, 4)), false).unwrap();
        let neg = g.leaf(-&av, false).unwrap();
        let a_plus_zero = g.residual_add(a, zero).unwrap();
        assert!(approx_eq(g.values(a_plus_zero), &av, 0.0));
        let cancel = g.residual_add(a, neg).unwrap();
        assert_eq!(g.values(cancel).sum(), 0.0);
    }

    #[test]
    fn residual_add_fans_gradient_to_both_inputs() {
        let mut g = Graph::new();
        let a = g.leaf(rand_matrix(3, 2, 59), true).unwrap();
        let b = g.leaf(rand_matrix(3, 2, 61), true).unwrap();
        let y = g.residual_add(a, b).unwrap();
        let loss = g.sum(y);
        g.backward(loss).unwrap();
        assert_eq!(g.grad(a), &Matrix::ones((3, 2)));
        assert_eq!(g.grad(b), &Matrix::ones((3, 2)));
    }

    #[test]
    fn softmax_uniform_and_extreme_rows() {
        let mut g = Graph::new();
        let x = g
            .leaf(arr2(&[[3.0, 3.0, 3.0, 3.0], [1000.0, 0.0, 0.0, 0.0]]), false)
            .unwrap();
        let y = g.softmax_rows(x);
        let yv = g.values(y);
        for c in 0..4 {
            assert!((yv[[0, c]] - 0.25).abs() < 1e-12);
        }
        assert!((yv[[1, 0]] - 1.0).abs() < 1e-12);
        assert!(yv[[1, 1]].abs() < 1e-12);
        assert!(all_finite(yv));
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut g = Graph::new();
        let x = g.leaf(rand_matrix(6, 5, 67), false).unwrap();
        let y = g.softmax_rows(x);
        for row in g.values(y).rows() {
            assert!((row.sum() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn nll_one_hot_probs_give_zero_loss() {
        let mut g = Graph::new();
        let mut pv = Matrix::zeros((3, 4));
        let targets = [1usize, 3, 0];
        for (t, &y) in targets.iter().enumerate() {
            pv[[t, y]] = 1.0;
        }
        let p = g.leaf(pv, false).unwrap();
        let loss = g
            .weighted_nll_rows(p, &targets, &[2.0, 0.5, 1.0, 3.0], 1e-7)
            .unwrap();
        assert_eq!(g.scalar(loss), 0.0);
    }

    #[test]
    fn nll_hand_value() {
        let mut g = Graph::new();
        let p = g.leaf(arr2(&[[0.5, 0.5]]), false).unwrap();
        let loss = g.weighted_nll_rows(p, &[0], &[2.0, 1.0], 1e-7).unwrap();
        assert!((g.scalar(loss) - 2.0 * 2.0_f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn nll_matches_scalar_loop_oracle() {
        let t_len = 7;
        let classes = 5;
        let raw = rand_matrix(t_len, classes, 71).mapv(|v| v.abs() + 0.01);
        let mut probs = raw.clone();
        for mut row in probs.rows_mut() {
            let s = row.sum();
            row.mapv_inplace(|v| v / s);
        }
        let targets: Vec<usize> = (0..t_len).map(|t| (t * 3) % classes).collect();
        let weights = [0.5, 2.0, 1.0, 0.25, 3.0];
        let eps = 1e-7;

        let mut expected = 0.0;
        for (t, &y) in targets.iter().enumerate() {
            expected += -weights[y] * probs[[t, y]].max(eps).ln();
        }
        expected /= t_len as f64;

        let mut g = Graph::new();
        let p = g.leaf(probs, false).unwrap();
        let loss = g.weighted_nll_rows(p, &targets, &weights, eps).unwrap();
        assert!((g.scalar(loss) - expected).abs() < 1e-12);
    }

    #[test]
    fn nll_rejects_out_of_range_target() {
        let mut g = Graph::new();
        let p = g.leaf(arr2(&[[0.5, 0.5]]), false).unwrap();
        let err = g.weighted_nll_rows(p, &[2], &[1.0, 1.0], 1e-7).unwrap_err();
        assert!(matches!(err, AutodiffError::LabelOutOfRange { .. }));
    }

    #[test]
    fn backward_sum_gives_ones() {
        let mut g = Graph::new();
        let a = g.leaf(rand_matrix(3, 4, 73), true).unwrap();
        let loss = g.sum(a);
        g.backward(loss).unwrap();
        assert_eq!(g.grad(a), &Matrix::ones((3, 4)));
    }

    #[test]
    fn backward_requires_scalar() {
        let mut g = Graph::new();
        let a = g.leaf(rand_matrix(2, 2, 79), true).unwrap();
        let err = g.backward(a).unwrap_err();
        assert!(matches!(err, AutodiffError::NotScalar { .. }));
    }

    #[test]
    fn backward_twice_doubles_gradients() {
        let mut g = Graph::new();
        let a = g.leaf(rand_matrix(4, 3, 83), true).unwrap();
        let r = g.relu(a);
        let loss = g.sum(r);
        g.backward(loss).unwrap();
        let once = g.grad(a).clone();
        g.backward(loss).unwrap();
        let twice = g.grad(a).clone();
        assert_eq!(&once * 2.0, twice);
    }

    #[test]
    fn concat_and_slice_round_trip_gradients() {
        let mut g = Graph::new();
        let a = g.leaf(rand_matrix(3, 2, 89), true).unwrap();
        let b = g.leaf(rand_matrix(2, 2, 97), true).unwrap();
        let cat = g.concat_rows(a, b).unwrap();
        assert_eq!(g.shape(cat), (5, 2));
        let tail = g.slice_rows(cat, 3).unwrap();
        let loss = g.sum(tail);
        g.backward(loss).unwrap();
        assert_eq!(g.grad(a).sum(), 0.0);
        assert_eq!(g.grad(b), &Matrix::ones((2, 2)));
    }

    #[test]
    fn matmul_const_forward_and_gradient() {
        let m = arr2(&[[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]]);
        let mut g = Graph::new();
        let x = g.leaf(arr2(&[[0.2, 0.3, 0.5]]), true).unwrap();
        let y = g.matmul_const(x, &m).unwrap();
        assert!(approx_eq(g.values(y), &arr2(&[[0.5, 0.5]]), 1e-15));
        let loss = g.sum(y);
        g.backward(loss).unwrap();
        assert_eq!(g.grad(x), &Matrix::ones((1, 3)));
    }

    #[test]
    fn leaf_rejects_non_finite() {
        let mut g = Graph::new();
        let err = g.leaf(arr2(&[[f64::NAN]]), false).unwrap_err();
        assert!(matches!(err, AutodiffError::NonFinite { .. }));
    }
}
