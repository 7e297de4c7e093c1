//! Tape-based reverse-mode differentiation over dense `f64` matrices.
//!
//! Every operation appends a node holding its forward value. [`Graph::backward`]
//! walks the tape in reverse and accumulates gradients into the
//! [`ParamStore`] tensors that were read through [`Graph::param`].

use ndarray::{s, Axis, Zip};

use super::params::{Matrix, ParamId, ParamStore};
use crate::error::{Error, Result};

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Constant,
    Param(ParamId),
    MatMul(Var, Var),
    AddRow(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Affine(Var, f64),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Elu(Var),
    Abs(Var),
    MinZero(Var),
    ConcatCols(Vec<Var>),
    SliceCols(Var, usize),
    ConcatRows(Vec<Var>),
    Reshape(Var),
    GatherCols(Var, Vec<usize>),
    SumCols(Var),
    RowVecMat(Var, Var, usize),
    GroupMean {
        x: Var,
        groups: Vec<Option<usize>>,
        counts: Vec<usize>,
    },
    GroupMax {
        x: Var,
        argmax: Vec<usize>,
    },
    GatherRows(Var, Vec<usize>),
    MaskedMse {
        pred: Var,
        target: Matrix,
        mask: Vec<f64>,
        denom: f64,
    },
}

#[derive(Debug)]
struct Node {
    value: Matrix,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    backward_done: bool,
}

fn shape_err(what: &str, a: (usize, usize), b: (usize, usize)) -> Error {
    Error::Shape(format!("{what}: {a:?} vs {b:?}"))
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Matrix, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.dim()
    }

    /// Value of a `(1, 1)` node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[[0, 0]]
    }

    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Constant)
    }

    pub fn row(&mut self, values: &[f64]) -> Var {
        let m = Matrix::from_shape_vec((1, values.len()), values.to_vec())
            .expect("row vector shape");
        self.constant(m)
    }

    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        self.push(store.value(id).clone(), Op::Param(id))
    }

    /// Copy of `v` that blocks gradient flow.
    pub fn detach(&mut self, v: Var) -> Var {
        let value = self.value(v).clone();
        self.constant(value)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.1 != sb.0 {
            return Err(shape_err("matmul", sa, sb));
        }
        let value = self.value(a).dot(self.value(b));
        Ok(self.push(value, Op::MatMul(a, b)))
    }

    /// `a + b` with the single-row `b` broadcast over the rows of `a`.
    pub fn add_row(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sb.0 != 1 || sa.1 != sb.1 {
            return Err(shape_err("add_row", sa, sb));
        }
        let value = self.value(a) + self.value(b);
        Ok(self.push(value, Op::AddRow(a, b)))
    }

    fn same_shape(&self, what: &str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(shape_err(what, sa, sb));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let value = self.value(a) + self.value(b);
        Ok(self.push(value, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let value = self.value(a) - self.value(b);
        Ok(self.push(value, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let value = self.value(a) * self.value(b);
        Ok(self.push(value, Op::Mul(a, b)))
    }

    /// `scale * a + shift`, elementwise.
    pub fn affine(&mut self, a: Var, scale: f64, shift: f64) -> Var {
        let value = self.value(a).mapv(|x| scale * x + shift);
        self.push(value, Op::Affine(a, scale))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(sigmoid);
        self.push(value, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(f64::tanh);
        self.push(value, Op::Tanh(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(|x| x.max(0.0));
        self.push(value, Op::Relu(a))
    }

    pub fn elu(&mut self, a: Var) -> Var {
        let value = self
            .value(a)
            .mapv(|x| if x > 0.0 { x } else { x.exp_m1() });
        self.push(value, Op::Elu(a))
    }

    pub fn abs(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(f64::abs);
        self.push(value, Op::Abs(a))
    }

    /// `min(a, 0)`, elementwise.
    pub fn min_zero(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(|x| x.min(0.0));
        self.push(value, Op::MinZero(a))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts.first().ok_or(Error::Empty("concat_cols"))?;
        let rows = self.shape(first).0;
        for &p in parts {
            if self.shape(p).0 != rows {
                return Err(shape_err("concat_cols", self.shape(first), self.shape(p)));
            }
        }
        let views: Vec<_> = parts.iter().map(|&p| self.value(p).view()).collect();
        let value = ndarray::concatenate(Axis(1), &views)
            .map_err(|e| Error::Shape(e.to_string()))?;
        Ok(self.push(value, Op::ConcatCols(parts.to_vec())))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let sa = self.shape(a);
        if start > end || end > sa.1 {
            return Err(Error::Shape(format!(
                "slice_cols {start}..{end} of {sa:?}"
            )));
        }
        let value = self.value(a).slice(s![.., start..end]).to_owned();
        Ok(self.push(value, Op::SliceCols(a, start)))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts.first().ok_or(Error::Empty("concat_rows"))?;
        let cols = self.shape(first).1;
        for &p in parts {
            if self.shape(p).1 != cols {
                return Err(shape_err("concat_rows", self.shape(first), self.shape(p)));
            }
        }
        let views: Vec<_> = parts.iter().map(|&p| self.value(p).view()).collect();
        let value = ndarray::concatenate(Axis(0), &views)
            .map_err(|e| Error::Shape(e.to_string()))?;
        Ok(self.push(value, Op::ConcatRows(parts.to_vec())))
    }

    /// Row-major reinterpretation of the same elements.
    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Result<Var> {
        let sa = self.shape(a);
        if sa.0 * sa.1 != rows * cols {
            return Err(shape_err("reshape", sa, (rows, cols)));
        }
        let flat: Vec<f64> = self.value(a).iter().copied().collect();
        let value = Matrix::from_shape_vec((rows, cols), flat).expect("reshape size");
        Ok(self.push(value, Op::Reshape(a)))
    }

    /// Picks column `idx[r]` of each row `r`, giving an `(rows, 1)` column.
    pub fn gather_cols(&mut self, a: Var, idx: &[usize]) -> Result<Var> {
        let sa = self.shape(a);
        if idx.len() != sa.0 || idx.iter().any(|&i| i >= sa.1) {
            return Err(Error::Shape(format!(
                "gather_cols: {} indices for {sa:?}",
                idx.len()
            )));
        }
        let src = self.value(a);
        let value = Matrix::from_shape_fn((sa.0, 1), |(r, _)| src[[r, idx[r]]]);
        Ok(self.push(value, Op::GatherCols(a, idx.to_vec())))
    }

    pub fn sum_cols(&mut self, a: Var) -> Var {
        let value = self.value(a).sum_axis(Axis(1)).insert_axis(Axis(1));
        self.push(value, Op::SumCols(a))
    }

    /// Per-row vector-matrix product: row `r` of `q` (length `n`) times the
    /// `n x k` matrix stored row-major in row `r` of `w`.
    pub fn row_vec_mat(&mut self, q: Var, w: Var, k: usize) -> Result<Var> {
        let (sq, sw) = (self.shape(q), self.shape(w));
        if sq.0 != sw.0 || sq.1 * k != sw.1 {
            return Err(shape_err("row_vec_mat", sq, sw));
        }
        let (qv, wv) = (self.value(q), self.value(w));
        let mut value = Matrix::zeros((sq.0, k));
        for r in 0..sq.0 {
            for n in 0..sq.1 {
                let qn = qv[[r, n]];
                for j in 0..k {
                    value[[r, j]] += qn * wv[[r, n * k + j]];
                }
            }
        }
        Ok(self.push(value, Op::RowVecMat(q, w, k)))
    }

    /// Column-wise mean over the rows assigned to each group. Rows with a
    /// `None` group are ignored. Every group must own at least one row.
    pub fn group_mean(&mut self, x: Var, groups: &[Option<usize>], n_groups: usize) -> Result<Var> {
        let counts = self.group_counts(x, groups, n_groups)?;
        let xv = self.value(x);
        let cols = xv.ncols();
        let mut value = Matrix::zeros((n_groups, cols));
        for (r, g) in groups.iter().enumerate() {
            if let Some(g) = *g {
                let mut dst = value.row_mut(g);
                dst += &xv.row(r);
            }
        }
        for (g, &c) in counts.iter().enumerate() {
            value.row_mut(g).mapv_inplace(|v| v / c as f64);
        }
        Ok(self.push(
            value,
            Op::GroupMean {
                x,
                groups: groups.to_vec(),
                counts,
            },
        ))
    }

    /// Column-wise max over the rows assigned to each group. The gradient
    /// flows to the first maximizing row only.
    pub fn group_max(&mut self, x: Var, groups: &[Option<usize>], n_groups: usize) -> Result<Var> {
        self.group_counts(x, groups, n_groups)?;
        let xv = self.value(x);
        let cols = xv.ncols();
        let mut value = Matrix::from_elem((n_groups, cols), f64::NEG_INFINITY);
        let mut argmax = vec![usize::MAX; n_groups * cols];
        for (r, g) in groups.iter().enumerate() {
            if let Some(g) = *g {
                for c in 0..cols {
                    if xv[[r, c]] > value[[g, c]] || argmax[g * cols + c] == usize::MAX {
                        value[[g, c]] = xv[[r, c]];
                        argmax[g * cols + c] = r;
                    }
                }
            }
        }
        Ok(self.push(value, Op::GroupMax { x, argmax }))
    }

    fn group_counts(&self, x: Var, groups: &[Option<usize>], n_groups: usize) -> Result<Vec<usize>> {
        let sx = self.shape(x);
        if groups.len() != sx.0 {
            return Err(Error::Shape(format!(
                "{} group labels for {sx:?}",
                groups.len()
            )));
        }
        let mut counts = vec![0usize; n_groups];
        for g in groups.iter().flatten() {
            if *g >= n_groups {
                return Err(Error::Shape(format!("group {g} >= {n_groups}")));
            }
            counts[*g] += 1;
        }
        if counts.iter().any(|&c| c == 0) {
            return Err(Error::Empty("group with no valid rows"));
        }
        Ok(counts)
    }

    /// Row `i` of the output is row `idx[i]` of `x`.
    pub fn gather_rows(&mut self, x: Var, idx: &[usize]) -> Result<Var> {
        let sx = self.shape(x);
        if idx.iter().any(|&i| i >= sx.0) {
            return Err(Error::Shape(format!("gather_rows index out of {sx:?}")));
        }
        let xv = self.value(x);
        let value = xv.select(Axis(0), idx);
        Ok(self.push(value, Op::GatherRows(x, idx.to_vec())))
    }

    /// Mean squared error over the rows whose mask is non-zero.
    pub fn masked_mse(&mut self, pred: Var, target: Matrix, mask: &[f64]) -> Result<Var> {
        let sp = self.shape(pred);
        if sp != target.dim() || mask.len() != sp.0 {
            return Err(shape_err("masked_mse", sp, target.dim()));
        }
        if sp.0 == 0 || sp.1 == 0 {
            return Err(Error::Empty("masked_mse"));
        }
        let denom = mask.iter().sum::<f64>() * sp.1 as f64;
        if denom <= 0.0 {
            return Err(Error::Empty("masked_mse: every row is masked"));
        }
        let pv = self.value(pred);
        let mut total = 0.0;
        for r in 0..sp.0 {
            if mask[r] != 0.0 {
                for c in 0..sp.1 {
                    let d = pv[[r, c]] - target[[r, c]];
                    total += mask[r] * d * d;
                }
            }
        }
        let value = Matrix::from_elem((1, 1), total / denom);
        Ok(self.push(
            value,
            Op::MaskedMse {
                pred,
                target,
                mask: mask.to_vec(),
                denom,
            },
        ))
    }

    pub fn mse(&mut self, pred: Var, target: Matrix) -> Result<Var> {
        let rows = self.shape(pred).0;
        self.masked_mse(pred, target, &vec![1.0; rows])
    }

    /// Accumulates `d loss / d param` into `store` for every parameter read
    /// by this graph. `loss` must be a `(1, 1)` node.
    pub fn backward(&mut self, loss: Var, store: &mut ParamStore) -> Result<()> {
        if self.backward_done {
            return Err(Error::BackwardTwice);
        }
        if self.shape(loss) != (1, 1) {
            return Err(shape_err("backward needs a scalar loss", self.shape(loss), (1, 1)));
        }
        self.backward_done = true;
        let mut grads: Vec<Option<Matrix>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(Matrix::ones((1, 1)));

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Constant => {}
                Op::Param(id) => {
                    let t = store.get_mut(*id);
                    if t.requires_grad {
                        t.grad += &g;
                    }
                }
                Op::MatMul(a, b) => {
                    let ga = g.dot(&self.value(*b).t());
                    let gb = self.value(*a).t().dot(&g);
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::AddRow(a, b) => {
                    let gb = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    accumulate(&mut grads, *b, gb);
                    accumulate(&mut grads, *a, g);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *b, g.clone());
                    accumulate(&mut grads, *a, g);
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads, *b, -&g);
                    accumulate(&mut grads, *a, g);
                }
                Op::Mul(a, b) => {
                    let ga = &g * self.value(*b);
                    let gb = &g * self.value(*a);
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::Affine(a, scale) => {
                    let scale = *scale;
                    accumulate(&mut grads, *a, g.mapv(|v| v * scale));
                }
                Op::Sigmoid(a) => {
                    let mut ga = g;
                    Zip::from(&mut ga)
                        .and(&node.value)
                        .for_each(|g, &y| *g *= y * (1.0 - y));
                    accumulate(&mut grads, *a, ga);
                }
                Op::Tanh(a) => {
                    let mut ga = g;
                    Zip::from(&mut ga)
                        .and(&node.value)
                        .for_each(|g, &y| *g *= 1.0 - y * y);
                    accumulate(&mut grads, *a, ga);
                }
                Op::Relu(a) => {
                    let mut ga = g;
                    Zip::from(&mut ga).and(self.value(*a)).for_each(|g, &x| {
                        if x <= 0.0 {
                            *g = 0.0
                        }
                    });
                    accumulate(&mut grads, *a, ga);
                }
                Op::Elu(a) => {
                    let mut ga = g;
                    Zip::from(&mut ga)
                        .and(self.value(*a))
                        .and(&node.value)
                        .for_each(|g, &x, &y| {
                            if x <= 0.0 {
                                *g *= y + 1.0
                            }
                        });
                    accumulate(&mut grads, *a, ga);
                }
                Op::Abs(a) => {
                    let mut ga = g;
                    Zip::from(&mut ga).and(self.value(*a)).for_each(|g, &x| {
                        *g *= if x > 0.0 {
                            1.0
                        } else if x < 0.0 {
                            -1.0
                        } else {
                            0.0
                        }
                    });
                    accumulate(&mut grads, *a, ga);
                }
                Op::MinZero(a) => {
                    let mut ga = g;
                    Zip::from(&mut ga).and(self.value(*a)).for_each(|g, &x| {
                        if x >= 0.0 {
                            *g = 0.0
                        }
                    });
                    accumulate(&mut grads, *a, ga);
                }
                Op::ConcatCols(parts) => {
                    let mut start = 0;
                    for &p in parts {
                        let w = self.shape(p).1;
                        let gp = g.slice(s![.., start..start + w]).to_owned();
                        accumulate(&mut grads, p, gp);
                        start += w;
                    }
                }
                Op::SliceCols(a, start) => {
                    let mut ga = Matrix::zeros(self.shape(*a));
                    let w = g.ncols();
                    ga.slice_mut(s![.., *start..*start + w]).assign(&g);
                    accumulate(&mut grads, *a, ga);
                }
                Op::ConcatRows(parts) => {
                    let mut start = 0;
                    for &p in parts {
                        let h = self.shape(p).0;
                        let gp = g.slice(s![start..start + h, ..]).to_owned();
                        accumulate(&mut grads, p, gp);
                        start += h;
                    }
                }
                Op::Reshape(a) => {
                    let flat: Vec<f64> = g.iter().copied().collect();
                    let ga = Matrix::from_shape_vec(self.shape(*a), flat).expect("reshape size");
                    accumulate(&mut grads, *a, ga);
                }
                Op::GatherCols(a, idx) => {
                    let mut ga = Matrix::zeros(self.shape(*a));
                    for (r, &c) in idx.iter().enumerate() {
                        ga[[r, c]] = g[[r, 0]];
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::SumCols(a) => {
                    let sa = self.shape(*a);
                    let ga = Matrix::from_shape_fn(sa, |(r, _)| g[[r, 0]]);
                    accumulate(&mut grads, *a, ga);
                }
                Op::RowVecMat(q, w, k) => {
                    let k = *k;
                    let (qv, wv) = (self.value(*q), self.value(*w));
                    let mut gq = Matrix::zeros(qv.dim());
                    let mut gw = Matrix::zeros(wv.dim());
                    for r in 0..qv.nrows() {
                        for n in 0..qv.ncols() {
                            let mut acc = 0.0;
                            for j in 0..k {
                                acc += g[[r, j]] * wv[[r, n * k + j]];
                                gw[[r, n * k + j]] = g[[r, j]] * qv[[r, n]];
                            }
                            gq[[r, n]] = acc;
                        }
                    }
                    accumulate(&mut grads, *q, gq);
                    accumulate(&mut grads, *w, gw);
                }
                Op::GroupMean { x, groups, counts } => {
                    let mut gx = Matrix::zeros(self.shape(*x));
                    for (r, grp) in groups.iter().enumerate() {
                        if let Some(grp) = *grp {
                            let c = counts[grp] as f64;
                            let mut dst = gx.row_mut(r);
                            dst.assign(&g.row(grp));
                            dst.mapv_inplace(|v| v / c);
                        }
                    }
                    accumulate(&mut grads, *x, gx);
                }
                Op::GroupMax { x, argmax } => {
                    let mut gx = Matrix::zeros(self.shape(*x));
                    let cols = g.ncols();
                    for grp in 0..g.nrows() {
                        for c in 0..cols {
                            gx[[argmax[grp * cols + c], c]] += g[[grp, c]];
                        }
                    }
                    accumulate(&mut grads, *x, gx);
                }
                Op::GatherRows(x, idx) => {
                    let mut gx = Matrix::zeros(self.shape(*x));
                    for (i, &r) in idx.iter().enumerate() {
                        let mut dst = gx.row_mut(r);
                        dst += &g.row(i);
                    }
                    accumulate(&mut grads, *x, gx);
                }
                Op::MaskedMse {
                    pred,
                    target,
                    mask,
                    denom,
                } => {
                    let scale = 2.0 * g[[0, 0]] / denom;
                    let pv = self.value(*pred);
                    let mut gp = Matrix::zeros(pv.dim());
                    for r in 0..pv.nrows() {
                        if mask[r] != 0.0 {
                            for c in 0..pv.ncols() {
                                gp[[r, c]] = scale * mask[r] * (pv[[r, c]] - target[[r, c]]);
                            }
                        }
                    }
                    accumulate(&mut grads, *pred, gp);
                }
            }
        }
        Ok(())
    }
}

fn accumulate(grads: &mut [Option<Matrix>], v: Var, g: Matrix) {
    match &mut grads[v.0] {
        Some(existing) => *existing += &g,
        slot @ None => *slot = Some(g),
    }
}
