//! Reverse-mode automatic differentiation over dense `f64` matrices.
//!
//! Operations are recorded eagerly onto a Wengert tape: pushing an op
//! validates shapes, computes the value immediately, and returns a
//! [`NodeId`]. A backward sweep from a scalar seed then fills adjoints in
//! reverse topological order (which is simply reverse push order).
//!
//! The primitive set is fixed to what feed-forward Gaussian/Bernoulli
//! networks and importance-weighted bounds need; there are no
//! higher-rank tensors.

use ndarray::{Array2, Axis};

use crate::{Error, Result};

pub type NodeId = usize;

#[derive(Debug, Clone)]
enum Op {
    /// Input value; parameter leaves are tracked separately by the tape.
    Leaf,
    MatMul(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Div(NodeId, NodeId),
    Neg(NodeId),
    Square(NodeId),
    Exp(NodeId),
    Ln(NodeId),
    Tanh(NodeId),
    Sigmoid(NodeId),
    Softplus(NodeId),
    Scale(NodeId, f64),
    AddScalar(NodeId),
    /// Clamp into [lo, hi]; gradient passes only through unclamped entries.
    Clamp(NodeId, f64, f64),
    /// (n x m) + (1 x m), the row vector broadcast over rows.
    BroadcastAddRow(NodeId, NodeId),
    /// Stack `t` copies of the input vertically.
    TileRows(NodeId, usize),
    /// (b*n x 1) -> (n x b): block c of n rows becomes column c.
    StackBlocksAsCols(NodeId, usize),
    /// Zero out rows where keep is false; forward overwrites (so non-finite
    /// inputs in dropped rows cannot leak through as NaN).
    MaskRows(NodeId, Vec<bool>),
    RowSum(NodeId),
    SumAll(NodeId),
    LogSumExpRow(NodeId),
    SelectCols(NodeId, Vec<usize>),
    ConcatCols(NodeId, NodeId),
}

/// Wengert tape holding ops and eagerly computed values.
pub struct Tape {
    ops: Vec<Op>,
    vals: Vec<Array2<f64>>,
    params: Vec<NodeId>,
}

impl Tape {
    pub fn new() -> Self {
        Tape { ops: Vec::new(), vals: Vec::new(), params: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Array2<f64> {
        &self.vals[id]
    }

    /// Scalar value of a 1x1 node.
    pub fn scalar(&self, id: NodeId) -> f64 {
        self.vals[id][(0, 0)]
    }

    pub fn constant(&mut self, v: Array2<f64>) -> NodeId {
        self.push_value(Op::Leaf, v)
    }

    /// Leaf whose gradient is reported by [`Tape::backward`], in
    /// registration order.
    pub fn param(&mut self, v: Array2<f64>) -> NodeId {
        let id = self.push_value(Op::Leaf, v);
        self.params.push(id);
        id
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    fn push_value(&mut self, op: Op, v: Array2<f64>) -> NodeId {
        self.ops.push(op);
        self.vals.push(v);
        self.ops.len() - 1
    }

    fn shape(&self, id: NodeId) -> (usize, usize) {
        self.vals[id].dim()
    }

    fn err(&self, msg: String) -> Error {
        Error::Tape { node: self.ops.len(), msg }
    }

    fn same_shape(&self, a: NodeId, b: NodeId, what: &str) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(self.err(format!(
                "{what}: shape {:?} vs {:?}",
                self.shape(a),
                self.shape(b)
            )));
        }
        Ok(())
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ar, ac) = self.shape(a);
        let (br, bc) = self.shape(b);
        if ac != br {
            return Err(self.err(format!("matmul: {ar}x{ac} . {br}x{bc}")));
        }
        let v = self.vals[a].dot(&self.vals[b]);
        Ok(self.push_value(Op::MatMul(a, b), v))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape(a, b, "add")?;
        let v = &self.vals[a] + &self.vals[b];
        Ok(self.push_value(Op::Add(a, b), v))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape(a, b, "sub")?;
        let v = &self.vals[a] - &self.vals[b];
        Ok(self.push_value(Op::Sub(a, b), v))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape(a, b, "mul")?;
        let v = &self.vals[a] * &self.vals[b];
        Ok(self.push_value(Op::Mul(a, b), v))
    }

    pub fn div(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape(a, b, "div")?;
        let v = &self.vals[a] / &self.vals[b];
        Ok(self.push_value(Op::Div(a, b), v))
    }

    pub fn neg(&mut self, a: NodeId) -> NodeId {
        let v = self.vals[a].mapv(|x| -x);
        self.push_value(Op::Neg(a), v)
    }

    pub fn square(&mut self, a: NodeId) -> NodeId {
        let v = self.vals[a].mapv(|x| x * x);
        self.push_value(Op::Square(a), v)
    }

    pub fn exp(&mut self, a: NodeId) -> NodeId {
        let v = self.vals[a].mapv(f64::exp);
        self.push_value(Op::Exp(a), v)
    }

    pub fn ln(&mut self, a: NodeId) -> NodeId {
        let v = self.vals[a].mapv(f64::ln);
        self.push_value(Op::Ln(a), v)
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let v = self.vals[a].mapv(f64::tanh);
        self.push_value(Op::Tanh(a), v)
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let v = self.vals[a].mapv(crate::math::sigmoid);
        self.push_value(Op::Sigmoid(a), v)
    }

    pub fn softplus(&mut self, a: NodeId) -> NodeId {
        let v = self.vals[a].mapv(crate::math::softplus);
        self.push_value(Op::Softplus(a), v)
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        let v = self.vals[a].mapv(|x| c * x);
        self.push_value(Op::Scale(a, c), v)
    }

    pub fn add_scalar(&mut self, a: NodeId, c: f64) -> NodeId {
        let v = self.vals[a].mapv(|x| x + c);
        self.push_value(Op::AddScalar(a), v)
    }

    pub fn clamp(&mut self, a: NodeId, lo: f64, hi: f64) -> NodeId {
        let v = self.vals[a].mapv(|x| x.clamp(lo, hi));
        self.push_value(Op::Clamp(a, lo, hi), v)
    }

    /// (n x m) + (1 x m) with the row vector broadcast down the rows.
    pub fn broadcast_add_row(&mut self, a: NodeId, row: NodeId) -> Result<NodeId> {
        let (_, ac) = self.shape(a);
        let (rr, rc) = self.shape(row);
        if rr != 1 || rc != ac {
            return Err(self.err(format!(
                "broadcast_add_row: {:?} + {rr}x{rc}",
                self.shape(a)
            )));
        }
        let v = &self.vals[a] + &self.vals[row].row(0);
        Ok(self.push_value(Op::BroadcastAddRow(a, row), v))
    }

    pub fn tile_rows(&mut self, a: NodeId, t: usize) -> Result<NodeId> {
        if t == 0 {
            return Err(self.err("tile_rows: zero tiles".into()));
        }
        let (n, m) = self.shape(a);
        let mut v = Array2::zeros((n * t, m));
        for i in 0..t {
            v.slice_mut(ndarray::s![i * n..(i + 1) * n, ..])
                .assign(&self.vals[a]);
        }
        Ok(self.push_value(Op::TileRows(a, t), v))
    }

    /// (b*n x 1) -> (n x b); block c (rows c*n..(c+1)*n) becomes column c.
    pub fn stack_blocks_as_cols(&mut self, a: NodeId, blocks: usize) -> Result<NodeId> {
        let (rows, cols) = self.shape(a);
        if cols != 1 || blocks == 0 || rows % blocks != 0 {
            return Err(self.err(format!(
                "stack_blocks_as_cols: shape {rows}x{cols}, blocks {blocks}"
            )));
        }
        let n = rows / blocks;
        let mut v = Array2::zeros((n, blocks));
        for c in 0..blocks {
            for i in 0..n {
                v[(i, c)] = self.vals[a][(c * n + i, 0)];
            }
        }
        Ok(self.push_value(Op::StackBlocksAsCols(a, blocks), v))
    }

    /// Zeroes dropped rows outright (forward and backward), so non-finite
    /// values in dropped rows never propagate.
    pub fn mask_rows(&mut self, a: NodeId, keep: Vec<bool>) -> Result<NodeId> {
        let (n, _) = self.shape(a);
        if keep.len() != n {
            return Err(self.err(format!("mask_rows: {} flags for {n} rows", keep.len())));
        }
        let mut v = self.vals[a].clone();
        for (i, &k) in keep.iter().enumerate() {
            if !k {
                v.row_mut(i).fill(0.0);
            }
        }
        Ok(self.push_value(Op::MaskRows(a, keep), v))
    }

    pub fn row_sum(&mut self, a: NodeId) -> NodeId {
        let v = self.vals[a]
            .sum_axis(Axis(1))
            .into_shape_with_order((self.shape(a).0, 1))
            .expect("row_sum reshape");
        self.push_value(Op::RowSum(a), v)
    }

    pub fn sum_all(&mut self, a: NodeId) -> NodeId {
        let s = self.vals[a].sum();
        self.push_value(Op::SumAll(a), ndarray::arr2(&[[s]]))
    }

    /// Row-wise stable log-sum-exp: (n x m) -> (n x 1).
    pub fn logsumexp_row(&mut self, a: NodeId) -> Result<NodeId> {
        let (n, m) = self.shape(a);
        if m == 0 {
            return Err(self.err("logsumexp_row: zero columns".into()));
        }
        let mut v = Array2::zeros((n, 1));
        for i in 0..n {
            let row = self.vals[a].row(i);
            let hi = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            v[(i, 0)] = if hi == f64::NEG_INFINITY {
                f64::NEG_INFINITY
            } else {
                hi + row.iter().map(|&x| (x - hi).exp()).sum::<f64>().ln()
            };
        }
        Ok(self.push_value(Op::LogSumExpRow(a), v))
    }

    pub fn select_cols(&mut self, a: NodeId, idx: Vec<usize>) -> Result<NodeId> {
        let (n, m) = self.shape(a);
        if let Some(&bad) = idx.iter().find(|&&j| j >= m) {
            return Err(self.err(format!("select_cols: index {bad} out of {m}")));
        }
        let mut v = Array2::zeros((n, idx.len()));
        for (c, &j) in idx.iter().enumerate() {
            v.column_mut(c).assign(&self.vals[a].column(j));
        }
        Ok(self.push_value(Op::SelectCols(a, idx), v))
    }

    pub fn concat_cols(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (an, am) = self.shape(a);
        let (bn, bm) = self.shape(b);
        if an != bn {
            return Err(self.err(format!("concat_cols: {an} vs {bn} rows")));
        }
        let mut v = Array2::zeros((an, am + bm));
        v.slice_mut(ndarray::s![.., ..am]).assign(&self.vals[a]);
        v.slice_mut(ndarray::s![.., am..]).assign(&self.vals[b]);
        Ok(self.push_value(Op::ConcatCols(a, b), v))
    }

    /// Backward pass from a scalar seed. Returns the gradient of every
    /// `param` leaf, in registration order; parameters unreachable from
    /// the seed get zero gradients.
    pub fn backward(&self, seed: NodeId) -> Result<Vec<Array2<f64>>> {
        let (r, c) = self.shape(seed);
        if (r, c) != (1, 1) {
            return Err(Error::NonScalarSeed { node: seed, rows: r, cols: c });
        }
        let mut adj: Vec<Option<Array2<f64>>> = vec![None; self.ops.len()];
        adj[seed] = Some(ndarray::arr2(&[[1.0]]));

        for id in (0..=seed).rev() {
            let g = match adj[id].take() {
                Some(g) => g,
                None => continue,
            };
            match &self.ops[id] {
                Op::Leaf => {
                    adj[id] = Some(g);
                    continue;
                }
                Op::MatMul(a, b) => {
                    let da = g.dot(&self.vals[*b].t());
                    let db = self.vals[*a].t().dot(&g);
                    accumulate(&mut adj[*a], da);
                    accumulate(&mut adj[*b], db);
                }
                Op::Add(a, b) => {
                    accumulate(&mut adj[*a], g.clone());
                    accumulate(&mut adj[*b], g);
                }
                Op::Sub(a, b) => {
                    accumulate(&mut adj[*a], g.clone());
                    accumulate(&mut adj[*b], g.mapv(|x| -x));
                }
                Op::Mul(a, b) => {
                    accumulate(&mut adj[*a], &g * &self.vals[*b]);
                    accumulate(&mut adj[*b], &g * &self.vals[*a]);
                }
                Op::Div(a, b) => {
                    accumulate(&mut adj[*a], &g / &self.vals[*b]);
                    let db = &g * &(-&self.vals[*a] / (&self.vals[*b] * &self.vals[*b]));
                    accumulate(&mut adj[*b], db);
                }
                Op::Neg(a) => accumulate(&mut adj[*a], g.mapv(|x| -x)),
                Op::Square(a) => {
                    accumulate(&mut adj[*a], &g * &self.vals[*a].mapv(|x| 2.0 * x))
                }
                Op::Exp(a) => accumulate(&mut adj[*a], &g * &self.vals[id]),
                Op::Ln(a) => accumulate(&mut adj[*a], &g / &self.vals[*a]),
                Op::Tanh(a) => {
                    let da = &g * &self.vals[id].mapv(|y| 1.0 - y * y);
                    accumulate(&mut adj[*a], da);
                }
                Op::Sigmoid(a) => {
                    let da = &g * &self.vals[id].mapv(|y| y * (1.0 - y));
                    accumulate(&mut adj[*a], da);
                }
                Op::Softplus(a) => {
                    let da = &g * &self.vals[*a].mapv(crate::math::sigmoid);
                    accumulate(&mut adj[*a], da);
                }
                Op::Scale(a, cst) => accumulate(&mut adj[*a], g.mapv(|x| cst * x)),
                Op::AddScalar(a) => accumulate(&mut adj[*a], g),
                Op::Clamp(a, lo, hi) => {
                    let mut da = g;
                    ndarray::Zip::from(&mut da)
                        .and(&self.vals[*a])
                        .for_each(|d, &x| {
                            if x <= *lo || x >= *hi {
                                *d = 0.0;
                            }
                        });
                    accumulate(&mut adj[*a], da);
                }
                Op::BroadcastAddRow(a, row) => {
                    let col_sums = g
                        .sum_axis(Axis(0))
                        .into_shape_with_order((1, g.dim().1))
                        .expect("row adjoint reshape");
                    accumulate(&mut adj[*a], g);
                    accumulate(&mut adj[*row], col_sums);
                }
                Op::TileRows(a, t) => {
                    let (n, m) = self.shape(*a);
                    let mut da = Array2::zeros((n, m));
                    for i in 0..*t {
                        da += &g.slice(ndarray::s![i * n..(i + 1) * n, ..]);
                    }
                    accumulate(&mut adj[*a], da);
                }
                Op::StackBlocksAsCols(a, blocks) => {
                    let n = g.dim().0;
                    let mut da = Array2::zeros((n * blocks, 1));
                    for c in 0..*blocks {
                        for i in 0..n {
                            da[(c * n + i, 0)] = g[(i, c)];
                        }
                    }
                    accumulate(&mut adj[*a], da);
                }
                Op::MaskRows(a, keep) => {
                    let mut da = g;
                    for (i, &k) in keep.iter().enumerate() {
                        if !k {
                            da.row_mut(i).fill(0.0);
                        }
                    }
                    accumulate(&mut adj[*a], da);
                }
                Op::RowSum(a) => {
                    let (n, m) = self.shape(*a);
                    let mut da = Array2::zeros((n, m));
                    for i in 0..n {
                        da.row_mut(i).fill(g[(i, 0)]);
                    }
                    accumulate(&mut adj[*a], da);
                }
                Op::SumAll(a) => {
                    let (n, m) = self.shape(*a);
                    accumulate(&mut adj[*a], Array2::from_elem((n, m), g[(0, 0)]));
                }
                Op::LogSumExpRow(a) => {
                    // d/da_ij = g_i * softmax_j(a_i)
                    let (n, m) = self.shape(*a);
                    let mut da = Array2::zeros((n, m));
                    for i in 0..n {
                        let out = self.vals[id][(i, 0)];
                        for j in 0..m {
                            let x = self.vals[*a][(i, j)];
                            let w = if x == f64::NEG_INFINITY {
                                0.0
                            } else {
                                (x - out).exp()
                            };
                            da[(i, j)] = g[(i, 0)] * w;
                        }
                    }
                    accumulate(&mut adj[*a], da);
                }
                Op::SelectCols(a, idx) => {
                    let (n, m) = self.shape(*a);
                    let mut da = Array2::zeros((n, m));
                    for (c, &j) in idx.iter().enumerate() {
                        let mut col = da.column_mut(j);
                        col += &g.column(c);
                    }
                    accumulate(&mut adj[*a], da);
                }
                Op::ConcatCols(a, b) => {
                    let (_, am) = self.shape(*a);
                    accumulate(&mut adj[*a], g.slice(ndarray::s![.., ..am]).to_owned());
                    accumulate(&mut adj[*b], g.slice(ndarray::s![.., am..]).to_owned());
                }
            }
        }

        Ok(self
            .params
            .iter()
            .map(|&p| {
                adj[p]
                    .clone()
                    .unwrap_or_else(|| Array2::zeros(self.shape(p)))
            })
            .collect())
    }
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

fn accumulate(slot: &mut Option<Array2<f64>>, g: Array2<f64>) {
    match slot {
        Some(acc) => *acc += &g,
        None => *slot = Some(g),
    }
}
