//! Reverse-mode automatic differentiation over dense 2-D f64 arrays.
//!
//! A [`Graph`] is a tape: every operation appends a node holding its value
//! and enough context to push gradients back to its parents. Values use f64
//! so analytic gradients can be validated against central finite differences
//! at 1e-5 perturbations without drowning in rounding noise. Scalars are 1x1
//! arrays; row vectors are 1xN.

use ndarray::{concatenate, s, Array2, Axis};

/// Handle to one node on the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(NodeId, NodeId),
    Add(NodeId, NodeId),
    /// Adds a 1xM row to every row of an NxM matrix.
    AddRow(NodeId, NodeId),
    Mul(NodeId, NodeId),
    /// Multiplies every element by a 1x1 scalar node.
    MulScalar(NodeId, NodeId),
    Affine {
        x: NodeId,
        scale: f64,
    },
    Tanh(NodeId),
    Sigmoid(NodeId),
    Relu(NodeId),
    SoftmaxRows(NodeId),
    AddConst(NodeId),
    MulConst {
        x: NodeId,
        mask: Array2<f64>,
    },
    LayerNorm {
        x: NodeId,
        gain: NodeId,
        bias: NodeId,
        normalized: Array2<f64>,
        inv_std: Vec<f64>,
    },
    ConcatCols(NodeId, NodeId),
    ConcatRows(NodeId, NodeId),
    SliceCols {
        x: NodeId,
        start: usize,
    },
    SliceRows {
        x: NodeId,
        start: usize,
    },
    Transpose(NodeId),
    GatherRows {
        table: NodeId,
        ids: Vec<usize>,
    },
    /// Scatter-adds the columns of a 1xM row into a wider 1xW row.
    ScatterAddCols {
        x: NodeId,
        ids: Vec<usize>,
    },
    PadCols(NodeId),
    PickCol {
        x: NodeId,
        col: usize,
    },
    LogClamped {
        x: NodeId,
        floor: f64,
    },
    SumAll(NodeId),
}

#[derive(Debug)]
struct Node {
    value: Array2<f64>,
    op: Op,
    requires_grad: bool,
}

/// Gradients of one scalar output with respect to every tape node that
/// needed them.
pub struct Gradients {
    grads: Vec<Option<Array2<f64>>>,
}

impl Gradients {
    pub fn get(&self, id: NodeId) -> Option<&Array2<f64>> {
        self.grads.get(id.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, id: NodeId) -> Option<Array2<f64>> {
        self.grads.get_mut(id.0).and_then(Option::take)
    }
}

fn sigmoid_scalar(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

fn softmax_rows_value(x: &Array2<f64>) -> Array2<f64> {
    let mut out = x.clone();
    for mut row in out.outer_iter_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    out
}

/// The autodiff tape. Node values are computed eagerly at construction;
/// [`Graph::backward`] replays the tape in reverse.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    fn push(&mut self, value: Array2<f64>, op: Op, requires_grad: bool) -> NodeId {
        // Debug-only: release builds let non-finite values flow so the
        // training loop can report divergence instead of aborting.
        debug_assert!(
            value.iter().all(|v| v.is_finite()),
            "non-finite value out of {op:?}"
        );
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn rg(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    pub fn value(&self, id: NodeId) -> &Array2<f64> {
        &self.nodes[id.0].value
    }

    /// Value of a 1x1 node.
    pub fn scalar(&self, id: NodeId) -> f64 {
        let v = self.value(id);
        assert_eq!(v.dim(), (1, 1), "scalar() on a {:?} node", v.dim());
        v[(0, 0)]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Tape input. Gradients flow into it iff `requires_grad`.
    pub fn leaf(&mut self, value: Array2<f64>, requires_grad: bool) -> NodeId {
        self.push(value, Op::Leaf, requires_grad)
    }

    /// Tape input that never receives gradients.
    pub fn constant(&mut self, value: Array2<f64>) -> NodeId {
        self.leaf(value, false)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (va, vb) = (self.value(a), self.value(b));
        assert_eq!(
            va.ncols(),
            vb.nrows(),
            "matmul {:?} x {:?}",
            va.dim(),
            vb.dim()
        );
        let value = va.dot(vb);
        self.push(value, Op::MatMul(a, b), self.rg(a) || self.rg(b))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (va, vb) = (self.value(a), self.value(b));
        assert_eq!(va.dim(), vb.dim(), "add shape mismatch");
        let value = va + vb;
        self.push(value, Op::Add(a, b), self.rg(a) || self.rg(b))
    }

    /// `a + row`, broadcasting the 1xM `row` over every row of `a`.
    pub fn add_row(&mut self, a: NodeId, row: NodeId) -> NodeId {
        let (va, vr) = (self.value(a), self.value(row));
        assert_eq!(vr.nrows(), 1, "add_row rhs must be 1xM");
        assert_eq!(va.ncols(), vr.ncols(), "add_row width mismatch");
        let value = va + &vr.broadcast(va.dim()).expect("broadcastable");
        self.push(value, Op::AddRow(a, row), self.rg(a) || self.rg(row))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (va, vb) = (self.value(a), self.value(b));
        assert_eq!(va.dim(), vb.dim(), "mul shape mismatch");
        let value = va * vb;
        self.push(value, Op::Mul(a, b), self.rg(a) || self.rg(b))
    }

    /// `a * s` where `s` is a 1x1 node.
    pub fn mul_scalar(&mut self, a: NodeId, s: NodeId) -> NodeId {
        assert_eq!(self.value(s).dim(), (1, 1), "mul_scalar rhs must be 1x1");
        let sv = self.value(s)[(0, 0)];
        let value = self.value(a) * sv;
        self.push(value, Op::MulScalar(a, s), self.rg(a) || self.rg(s))
    }

    /// `x * scale + shift` with compile-time constants.
    pub fn affine(&mut self, x: NodeId, scale: f64, shift: f64) -> NodeId {
        let value = self.value(x).mapv(|v| v * scale + shift);
        self.push(value, Op::Affine { x, scale }, self.rg(x))
    }

    pub fn tanh(&mut self, x: NodeId) -> NodeId {
        let value = self.value(x).mapv(f64::tanh);
        self.push(value, Op::Tanh(x), self.rg(x))
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        let value = self.value(x).mapv(sigmoid_scalar);
        self.push(value, Op::Sigmoid(x), self.rg(x))
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let value = self.value(x).mapv(|v| v.max(0.0));
        self.push(value, Op::Relu(x), self.rg(x))
    }

    /// Row-wise softmax. Entries pushed to -1e30 by masking underflow to
    /// exactly zero probability.
    pub fn softmax_rows(&mut self, x: NodeId) -> NodeId {
        let value = softmax_rows_value(self.value(x));
        self.push(value, Op::SoftmaxRows(x), self.rg(x))
    }

    /// `x + c` for a constant matrix (used for additive masks).
    pub fn add_const(&mut self, x: NodeId, c: &Array2<f64>) -> NodeId {
        assert_eq!(self.value(x).dim(), c.dim(), "add_const shape mismatch");
        let value = self.value(x) + c;
        self.push(value, Op::AddConst(x), self.rg(x))
    }

    /// `x * c` elementwise for a constant matrix (used for dropout masks).
    pub fn mul_const(&mut self, x: NodeId, c: Array2<f64>) -> NodeId {
        assert_eq!(self.value(x).dim(), c.dim(), "mul_const shape mismatch");
        let value = self.value(x) * &c;
        self.push(value, Op::MulConst { x, mask: c }, self.rg(x))
    }

    /// Per-row layer normalization followed by the learned affine
    /// `gain * x_hat + bias` (gain/bias are 1xD).
    pub fn layer_norm(&mut self, x: NodeId, gain: NodeId, bias: NodeId, eps: f64) -> NodeId {
        let vx = self.value(x);
        let (n, d) = vx.dim();
        assert_eq!(self.value(gain).dim(), (1, d), "layer_norm gain shape");
        assert_eq!(self.value(bias).dim(), (1, d), "layer_norm bias shape");
        let mut normalized = Array2::zeros((n, d));
        let mut inv_std = Vec::with_capacity(n);
        for i in 0..n {
            let row = vx.row(i);
            let mean = row.mean().expect("non-empty row");
            let var = row.mapv(|v| (v - mean) * (v - mean)).mean().expect("non-empty row");
            let is = 1.0 / (var + eps).sqrt();
            inv_std.push(is);
            normalized
                .row_mut(i)
                .assign(&row.mapv(|v| (v - mean) * is));
        }
        let (vg, vb) = (self.value(gain), self.value(bias));
        let value =
            Array2::from_shape_fn((n, d), |(i, j)| normalized[(i, j)] * vg[(0, j)] + vb[(0, j)]);
        let requires = self.rg(x) || self.rg(gain) || self.rg(bias);
        self.push(
            value,
            Op::LayerNorm {
                x,
                gain,
                bias,
                normalized,
                inv_std,
            },
            requires,
        )
    }

    pub fn concat_cols(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (va, vb) = (self.value(a), self.value(b));
        assert_eq!(va.nrows(), vb.nrows(), "concat_cols row mismatch");
        let value = concatenate(Axis(1), &[va.view(), vb.view()]).expect("same rows");
        self.push(value, Op::ConcatCols(a, b), self.rg(a) || self.rg(b))
    }

    pub fn concat_rows(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (va, vb) = (self.value(a), self.value(b));
        assert_eq!(va.ncols(), vb.ncols(), "concat_rows col mismatch");
        let value = concatenate(Axis(0), &[va.view(), vb.view()]).expect("same cols");
        self.push(value, Op::ConcatRows(a, b), self.rg(a) || self.rg(b))
    }

    pub fn slice_cols(&mut self, x: NodeId, start: usize, end: usize) -> NodeId {
        let vx = self.value(x);
        assert!(start < end && end <= vx.ncols(), "slice_cols {start}..{end}");
        let value = vx.slice(s![.., start..end]).to_owned();
        self.push(value, Op::SliceCols { x, start }, self.rg(x))
    }

    pub fn slice_rows(&mut self, x: NodeId, start: usize, end: usize) -> NodeId {
        let vx = self.value(x);
        assert!(start < end && end <= vx.nrows(), "slice_rows {start}..{end}");
        let value = vx.slice(s![start..end, ..]).to_owned();
        self.push(value, Op::SliceRows { x, start }, self.rg(x))
    }

    pub fn transpose(&mut self, x: NodeId) -> NodeId {
        let value = self.value(x).t().to_owned();
        self.push(value, Op::Transpose(x), self.rg(x))
    }

    /// Embedding lookup: row `k` of the result is row `ids[k]` of `table`.
    pub fn gather_rows(&mut self, table: NodeId, ids: &[usize]) -> NodeId {
        let vt = self.value(table);
        assert!(!ids.is_empty(), "gather_rows of nothing");
        assert!(
            ids.iter().all(|&i| i < vt.nrows()),
            "gather_rows id out of range"
        );
        let value = Array2::from_shape_fn((ids.len(), vt.ncols()), |(k, j)| vt[(ids[k], j)]);
        self.push(
            value,
            Op::GatherRows {
                table,
                ids: ids.to_vec(),
            },
            self.rg(table),
        )
    }

    /// Builds a 1xW row where column `ids[i]` accumulates `x[0, i]`.
    pub fn scatter_add_cols(&mut self, x: NodeId, ids: &[usize], width: usize) -> NodeId {
        let vx = self.value(x);
        assert_eq!(vx.nrows(), 1, "scatter_add_cols input must be 1xM");
        assert_eq!(vx.ncols(), ids.len(), "one target per column");
        assert!(ids.iter().all(|&i| i < width), "scatter id out of range");
        let mut value = Array2::zeros((1, width));
        for (i, &id) in ids.iter().enumerate() {
            value[(0, id)] += vx[(0, i)];
        }
        self.push(
            value,
            Op::ScatterAddCols {
                x,
                ids: ids.to_vec(),
            },
            self.rg(x),
        )
    }

    /// Zero-pads columns on the right up to `width`.
    pub fn pad_cols(&mut self, x: NodeId, width: usize) -> NodeId {
        let vx = self.value(x);
        assert!(width >= vx.ncols(), "pad_cols narrower than input");
        let mut value = Array2::zeros((vx.nrows(), width));
        value.slice_mut(s![.., ..vx.ncols()]).assign(vx);
        self.push(value, Op::PadCols(x), self.rg(x))
    }

    /// Extracts one column of a 1xM row as a 1x1 scalar.
    pub fn pick_col(&mut self, x: NodeId, col: usize) -> NodeId {
        let vx = self.value(x);
        assert_eq!(vx.nrows(), 1, "pick_col input must be 1xM");
        assert!(col < vx.ncols(), "pick_col out of range");
        let value = Array2::from_elem((1, 1), vx[(0, col)]);
        self.push(value, Op::PickCol { x, col }, self.rg(x))
    }

    /// `ln(max(x, floor))` elementwise; the clamped region has zero gradient.
    pub fn log_clamped(&mut self, x: NodeId, floor: f64) -> NodeId {
        assert!(floor > 0.0, "log floor must be positive");
        let value = self.value(x).mapv(|v| v.max(floor).ln());
        self.push(value, Op::LogClamped { x, floor }, self.rg(x))
    }

    /// Sum of all elements as a 1x1 scalar.
    pub fn sum_all(&mut self, x: NodeId) -> NodeId {
        let value = Array2::from_elem((1, 1), self.value(x).sum());
        self.push(value, Op::SumAll(x), self.rg(x))
    }

    /// Accumulates d`loss`/d`node` for every node with `requires_grad`.
    /// `loss` must be 1x1.
    pub fn backward(&self, loss: NodeId) -> Gradients {
        assert_eq!(self.value(loss).dim(), (1, 1), "loss must be scalar");
        let mut grads: Vec<Option<Array2<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Array2::ones((1, 1)));
        for idx in (0..=loss.0).rev() {
            let Some(dy) = grads[idx].clone() else {
                continue;
            };
            let nodes = &self.nodes;
            let acc = |grads: &mut Vec<Option<Array2<f64>>>, id: NodeId, delta: Array2<f64>| {
                if !nodes[id.0].requires_grad {
                    return;
                }
                match &mut grads[id.0] {
                    Some(g) => *g += &delta,
                    slot => *slot = Some(delta),
                }
            };
            match &self.nodes[idx].op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let (va, vb) = (&nodes[a.0].value, &nodes[b.0].value);
                    acc(&mut grads, *a, dy.dot(&vb.t()));
                    acc(&mut grads, *b, va.t().dot(&dy));
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *a, dy.clone());
                    acc(&mut grads, *b, dy);
                }
                Op::AddRow(a, row) => {
                    let row_grad = dy.sum_axis(Axis(0)).insert_axis(Axis(0));
                    acc(&mut grads, *a, dy);
                    acc(&mut grads, *row, row_grad);
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (&nodes[a.0].value, &nodes[b.0].value);
                    acc(&mut grads, *a, &dy * vb);
                    acc(&mut grads, *b, &dy * va);
                }
                Op::MulScalar(a, s) => {
                    let sv = nodes[s.0].value[(0, 0)];
                    let va = &nodes[a.0].value;
                    acc(&mut grads, *a, &dy * sv);
                    acc(&mut grads, *s, Array2::from_elem((1, 1), (&dy * va).sum()));
                }
                Op::Affine { x, scale } => acc(&mut grads, *x, &dy * *scale),
                Op::Tanh(x) => {
                    let y = &self.nodes[idx].value;
                    acc(&mut grads, *x, &dy * &y.mapv(|v| 1.0 - v * v));
                }
                Op::Sigmoid(x) => {
                    let y = &self.nodes[idx].value;
                    acc(&mut grads, *x, &dy * &y.mapv(|v| v * (1.0 - v)));
                }
                Op::Relu(x) => {
                    let vx = &nodes[x.0].value;
                    let dx = Array2::from_shape_fn(dy.dim(), |ij| {
                        if vx[ij] > 0.0 {
                            dy[ij]
                        } else {
                            0.0
                        }
                    });
                    acc(&mut grads, *x, dx);
                }
                Op::SoftmaxRows(x) => {
                    let y = &self.nodes[idx].value;
                    let mut dx = Array2::zeros(dy.dim());
                    for i in 0..y.nrows() {
                        let dot: f64 = y.row(i).iter().zip(dy.row(i)).map(|(a, b)| a * b).sum();
                        for j in 0..y.ncols() {
                            dx[(i, j)] = y[(i, j)] * (dy[(i, j)] - dot);
                        }
                    }
                    acc(&mut grads, *x, dx);
                }
                Op::AddConst(x) => acc(&mut grads, *x, dy),
                Op::MulConst { x, mask } => acc(&mut grads, *x, &dy * mask),
                Op::LayerNorm {
                    x,
                    gain,
                    bias,
                    normalized,
                    inv_std,
                } => {
                    let vg = &nodes[gain.0].value;
                    let d = normalized.ncols() as f64;
                    acc(
                        &mut grads,
                        *bias,
                        dy.sum_axis(Axis(0)).insert_axis(Axis(0)),
                    );
                    acc(
                        &mut grads,
                        *gain,
                        (&dy * normalized).sum_axis(Axis(0)).insert_axis(Axis(0)),
                    );
                    let mut dx = Array2::zeros(dy.dim());
                    for i in 0..dy.nrows() {
                        let mut m1 = 0.0;
                        let mut m2 = 0.0;
                        for j in 0..dy.ncols() {
                            let dn = dy[(i, j)] * vg[(0, j)];
                            m1 += dn;
                            m2 += dn * normalized[(i, j)];
                        }
                        m1 /= d;
                        m2 /= d;
                        for j in 0..dy.ncols() {
                            let dn = dy[(i, j)] * vg[(0, j)];
                            dx[(i, j)] = inv_std[i] * (dn - m1 - normalized[(i, j)] * m2);
                        }
                    }
                    acc(&mut grads, *x, dx);
                }
                Op::ConcatCols(a, b) => {
                    let ma = nodes[a.0].value.ncols();
                    acc(&mut grads, *a, dy.slice(s![.., ..ma]).to_owned());
                    acc(&mut grads, *b, dy.slice(s![.., ma..]).to_owned());
                }
                Op::ConcatRows(a, b) => {
                    let na = nodes[a.0].value.nrows();
                    acc(&mut grads, *a, dy.slice(s![..na, ..]).to_owned());
                    acc(&mut grads, *b, dy.slice(s![na.., ..]).to_owned());
                }
                Op::SliceCols { x, start } => {
                    let mut dx = Array2::zeros(nodes[x.0].value.dim());
                    dx.slice_mut(s![.., *start..*start + dy.ncols()])
                        .assign(&dy);
                    acc(&mut grads, *x, dx);
                }
                Op::SliceRows { x, start } => {
                    let mut dx = Array2::zeros(nodes[x.0].value.dim());
                    dx.slice_mut(s![*start..*start + dy.nrows(), ..])
                        .assign(&dy);
                    acc(&mut grads, *x, dx);
                }
                Op::Transpose(x) => acc(&mut grads, *x, dy.t().to_owned()),
                Op::GatherRows { table, ids } => {
                    let mut dt = Array2::zeros(nodes[table.0].value.dim());
                    for (k, &id) in ids.iter().enumerate() {
                        let mut row = dt.row_mut(id);
                        row += &dy.row(k);
                    }
                    acc(&mut grads, *table, dt);
                }
                Op::ScatterAddCols { x, ids } => {
                    let dx =
                        Array2::from_shape_fn((1, ids.len()), |(_, i)| dy[(0, ids[i])]);
                    acc(&mut grads, *x, dx);
                }
                Op::PadCols(x) => {
                    let m = nodes[x.0].value.ncols();
                    acc(&mut grads, *x, dy.slice(s![.., ..m]).to_owned());
                }
                Op::PickCol { x, col } => {
                    let mut dx = Array2::zeros(nodes[x.0].value.dim());
                    dx[(0, *col)] = dy[(0, 0)];
                    acc(&mut grads, *x, dx);
                }
                Op::LogClamped { x, floor } => {
                    let vx = &nodes[x.0].value;
                    let dx = Array2::from_shape_fn(dy.dim(), |ij| {
                        if vx[ij] >= *floor {
                            dy[ij] / vx[ij]
                        } else {
                            0.0
                        }
                    });
                    acc(&mut grads, *x, dx);
                }
                Op::SumAll(x) => {
                    let dx = Array2::from_elem(nodes[x.0].value.dim(), dy[(0, 0)]);
                    acc(&mut grads, *x, dx);
                }
            }
        }
        Gradients { grads }
    }
}

/// Central finite differences of `f` with respect to every element of every
/// input, at perturbation `eps`.
pub fn central_difference<F>(f: F, inputs: &[Array2<f64>], eps: f64) -> Vec<Array2<f64>>
where
    F: Fn(&[Array2<f64>]) -> f64,
{
    let mut grads = Vec::with_capacity(inputs.len());
    for k in 0..inputs.len() {
        let mut grad = Array2::zeros(inputs[k].dim());
        for i in 0..inputs[k].nrows() {
            for j in 0..inputs[k].ncols() {
                let mut plus = inputs.to_vec();
                plus[k][(i, j)] += eps;
                let mut minus = inputs.to_vec();
                minus[k][(i, j)] -= eps;
                grad[(i, j)] = (f(&plus) - f(&minus)) / (2.0 * eps);
            }
        }
        grads.push(grad);
    }
    grads
}

/// Largest elementwise relative error between two same-shaped arrays, with
/// the denominator floored to keep near-zero entries from dividing by zero.
pub fn max_relative_error(a: &Array2<f64>, b: &Array2<f64>, denom_floor: f64) -> f64 {
    assert_eq!(a.dim(), b.dim(), "shape mismatch");
    let mut worst = 0.0f64;
    for (x, y) in a.iter().zip(b.iter()) {
        let denom = x.abs().max(y.abs()).max(denom_floor);
        worst = worst.max((x - y).abs() / denom);
    }
    worst
}
