//! Minimal reverse-mode automatic differentiation on a tape.
//!
//! Values are dense f64 matrices (column vectors are `n x 1`). Every
//! operation records its inputs on a [`Tape`]; [`Tape::backward`] walks the
//! tape in reverse and accumulates exact gradients of a scalar output with
//! respect to every node. The op set is exactly what the encoder and the
//! fuzzy logic operators need; subgradient conventions are fixed: min/max
//! route to the attaining argument (ties to the first input), and clamp ops
//! pass zero gradient in the clamped region.

use std::fmt;

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Tensor {
        assert_eq!(rows * cols, data.len(), "shape does not match data length");
        Tensor { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Tensor {
        Tensor::new(rows, cols, vec![0.0; rows * cols])
    }

    pub fn scalar(value: f64) -> Tensor {
        Tensor::new(1, 1, vec![value])
    }

    pub fn col(values: &[f64]) -> Tensor {
        Tensor::new(values.len(), 1, values.to_vec())
    }

    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn item(&self) -> f64 {
        assert_eq!(self.data.len(), 1, "item() on a non-scalar tensor");
        self.data[0]
    }

    fn same_shape(&self, other: &Tensor) -> bool {
        self.rows == other.rows && self.cols == other.cols
    }
}

impl fmt::Display for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tensor({}x{})", self.rows, self.cols)
    }
}

/// Handle to a tape node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(pub usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Min(Var, Var),
    Max(Var, Var),
    Scale(Var, f64),
    AddConst(Var),
    MinConst(Var, f64),
    Relu(Var),
    MatMul(Var, Var),
    Dot(Var, Var),
    Sigmoid(Var),
    Gelu(Var),
    Sqrt(Var),
    Softmax(Var),
    LogSoftmax(Var),
    SumAll(Var),
    MeanAll(Var),
    RowAsCol(Var, usize),
    ConcatRows(Vec<Var>),
    ConcatCols(Vec<Var>),
    BroadcastAdd(Var, Var),
    BroadcastSub(Var, Var),
    BroadcastDiv(Var, Var),
}

struct Node {
    op: Op,
    value: Tensor,
}

/// Gradients of one backward pass, aligned with tape nodes.
pub struct Grads {
    grads: Vec<Option<Tensor>>,
}

impl Grads {
    pub fn get(&self, var: Var) -> Option<&Tensor> {
        self.grads[var.0].as_ref()
    }
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Tape {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    fn push(&mut self, op: Op, value: Tensor) -> Var {
        self.nodes.push(Node { op, value });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(Op::Leaf, value)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(Op::Leaf, value)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        assert!(ta.same_shape(tb), "add shape mismatch {ta} vs {tb}");
        let data = ta.data.iter().zip(&tb.data).map(|(x, y)| x + y).collect();
        let t = Tensor::new(ta.rows, ta.cols, data);
        self.push(Op::Add(a, b), t)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        assert!(ta.same_shape(tb), "sub shape mismatch {ta} vs {tb}");
        let data = ta.data.iter().zip(&tb.data).map(|(x, y)| x - y).collect();
        let t = Tensor::new(ta.rows, ta.cols, data);
        self.push(Op::Sub(a, b), t)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        assert!(ta.same_shape(tb), "mul shape mismatch {ta} vs {tb}");
        let data = ta.data.iter().zip(&tb.data).map(|(x, y)| x * y).collect();
        let t = Tensor::new(ta.rows, ta.cols, data);
        self.push(Op::Mul(a, b), t)
    }

    /// Elementwise min; gradient routes to the attaining argument, ties to
    /// the first input.
    pub fn min(&mut self, a: Var, b: Var) -> Var {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        assert!(ta.same_shape(tb), "min shape mismatch");
        let data = ta.data.iter().zip(&tb.data).map(|(x, y)| x.min(*y)).collect();
        let t = Tensor::new(ta.rows, ta.cols, data);
        self.push(Op::Min(a, b), t)
    }

    pub fn max(&mut self, a: Var, b: Var) -> Var {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        assert!(ta.same_shape(tb), "max shape mismatch");
        let data = ta.data.iter().zip(&tb.data).map(|(x, y)| x.max(*y)).collect();
        let t = Tensor::new(ta.rows, ta.cols, data);
        self.push(Op::Max(a, b), t)
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let ta = &self.nodes[a.0].value;
        let t = Tensor::new(ta.rows, ta.cols, ta.data.iter().map(|x| x * k).collect());
        self.push(Op::Scale(a, k), t)
    }

    pub fn add_const(&mut self, a: Var, k: f64) -> Var {
        let ta = &self.nodes[a.0].value;
        let t = Tensor::new(ta.rows, ta.cols, ta.data.iter().map(|x| x + k).collect());
        self.push(Op::AddConst(a), t)
    }

    /// `1 - x`, the fuzzy negation.
    pub fn one_minus(&mut self, a: Var) -> Var {
        let neg = self.scale(a, -1.0);
        self.add_const(neg, 1.0)
    }

    /// Elementwise `min(x, k)`; zero gradient where clamped (x >= k).
    pub fn min_const(&mut self, a: Var, k: f64) -> Var {
        let ta = &self.nodes[a.0].value;
        let t = Tensor::new(ta.rows, ta.cols, ta.data.iter().map(|x| x.min(k)).collect());
        self.push(Op::MinConst(a, k), t)
    }

    /// `max(x, 0)`; zero gradient where clamped (x <= 0).
    pub fn relu(&mut self, a: Var) -> Var {
        let ta = &self.nodes[a.0].value;
        let t = Tensor::new(ta.rows, ta.cols, ta.data.iter().map(|x| x.max(0.0)).collect());
        self.push(Op::Relu(a), t)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        assert_eq!(ta.cols, tb.rows, "matmul inner dimension mismatch");
        let (m, k, n) = (ta.rows, ta.cols, tb.cols);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for p in 0..k {
                let aip = ta.data[i * k + p];
                if aip == 0.0 {
                    continue;
                }
                let brow = &tb.data[p * n..(p + 1) * n];
                let orow = &mut out[i * n..(i + 1) * n];
                for j in 0..n {
                    orow[j] += aip * brow[j];
                }
            }
        }
        self.push(Op::MatMul(a, b), Tensor::new(m, n, out))
    }

    /// Dot product of two column vectors.
    pub fn dot(&mut self, a: Var, b: Var) -> Var {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        assert!(
            ta.cols == 1 && tb.cols == 1 && ta.rows == tb.rows,
            "dot expects equal-length column vectors"
        );
        let v = ta.data.iter().zip(&tb.data).map(|(x, y)| x * y).sum();
        self.push(Op::Dot(a, b), Tensor::scalar(v))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let ta = &self.nodes[a.0].value;
        let data = ta.data.iter().map(|x| 1.0 / (1.0 + (-x).exp())).collect();
        let t = Tensor::new(ta.rows, ta.cols, data);
        self.push(Op::Sigmoid(a), t)
    }

    /// GELU, tanh approximation.
    pub fn gelu(&mut self, a: Var) -> Var {
        let ta = &self.nodes[a.0].value;
        let data = ta.data.iter().map(|&x| gelu_fwd(x)).collect();
        let t = Tensor::new(ta.rows, ta.cols, data);
        self.push(Op::Gelu(a), t)
    }

    pub fn sqrt(&mut self, a: Var) -> Var {
        let ta = &self.nodes[a.0].value;
        let data = ta.data.iter().map(|x| x.sqrt()).collect();
        let t = Tensor::new(ta.rows, ta.cols, data);
        self.push(Op::Sqrt(a), t)
    }

    /// Numerically stable softmax over a column vector.
    pub fn softmax(&mut self, a: Var) -> Var {
        let ta = &self.nodes[a.0].value;
        assert_eq!(ta.cols, 1, "softmax expects a column vector");
        let max = ta.data.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = ta.data.iter().map(|x| (x - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        let t = Tensor::new(ta.rows, 1, exps.into_iter().map(|e| e / sum).collect());
        self.push(Op::Softmax(a), t)
    }

    /// Numerically stable log-softmax over a column vector.
    pub fn log_softmax(&mut self, a: Var) -> Var {
        let ta = &self.nodes[a.0].value;
        assert_eq!(ta.cols, 1, "log_softmax expects a column vector");
        let max = ta.data.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let log_sum: f64 = ta
            .data
            .iter()
            .map(|x| (x - max).exp())
            .sum::<f64>()
            .ln();
        let data = ta.data.iter().map(|x| x - max - log_sum).collect();
        let t = Tensor::new(ta.rows, 1, data);
        self.push(Op::LogSoftmax(a), t)
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let v = self.nodes[a.0].value.data.iter().sum();
        self.push(Op::SumAll(a), Tensor::scalar(v))
    }

    pub fn mean_all(&mut self, a: Var) -> Var {
        let ta = &self.nodes[a.0].value;
        let v = ta.data.iter().sum::<f64>() / ta.data.len() as f64;
        self.push(Op::MeanAll(a), Tensor::scalar(v))
    }

    /// Row `i` of a matrix as a column vector (embedding lookup).
    pub fn row_as_col(&mut self, a: Var, row: usize) -> Var {
        let ta = &self.nodes[a.0].value;
        assert!(row < ta.rows, "row {row} out of range");
        let data = ta.data[row * ta.cols..(row + 1) * ta.cols].to_vec();
        let t = Tensor::new(ta.cols, 1, data);
        self.push(Op::RowAsCol(a, row), t)
    }

    /// Stack tensors with equal column counts vertically.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        let cols = self.nodes[parts[0].0].value.cols;
        let mut data = Vec::new();
        let mut rows = 0;
        for p in parts {
            let t = &self.nodes[p.0].value;
            assert_eq!(t.cols, cols, "concat_rows column mismatch");
            rows += t.rows;
            data.extend_from_slice(&t.data);
        }
        self.push(Op::ConcatRows(parts.to_vec()), Tensor::new(rows, cols, data))
    }

    /// Stack tensors with equal row counts horizontally.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        let rows = self.nodes[parts[0].0].value.rows;
        let total_cols: usize = parts
            .iter()
            .map(|p| {
                let t = &self.nodes[p.0].value;
                assert_eq!(t.rows, rows, "concat_cols row mismatch");
                t.cols
            })
            .sum();
        let mut data = vec![0.0; rows * total_cols];
        let mut offset = 0;
        for p in parts {
            let t = &self.nodes[p.0].value;
            for r in 0..rows {
                data[r * total_cols + offset..r * total_cols + offset + t.cols]
                    .copy_from_slice(&t.data[r * t.cols..(r + 1) * t.cols]);
            }
            offset += t.cols;
        }
        self.push(
            Op::ConcatCols(parts.to_vec()),
            Tensor::new(rows, total_cols, data),
        )
    }

    /// Add a 1x1 scalar node to every element.
    pub fn broadcast_add(&mut self, a: Var, s: Var) -> Var {
        let k = self.nodes[s.0].value.item();
        let ta = &self.nodes[a.0].value;
        let t = Tensor::new(ta.rows, ta.cols, ta.data.iter().map(|x| x + k).collect());
        self.push(Op::BroadcastAdd(a, s), t)
    }

    pub fn broadcast_sub(&mut self, a: Var, s: Var) -> Var {
        let k = self.nodes[s.0].value.item();
        let ta = &self.nodes[a.0].value;
        let t = Tensor::new(ta.rows, ta.cols, ta.data.iter().map(|x| x - k).collect());
        self.push(Op::BroadcastSub(a, s), t)
    }

    pub fn broadcast_div(&mut self, a: Var, s: Var) -> Var {
        let k = self.nodes[s.0].value.item();
        let ta = &self.nodes[a.0].value;
        let t = Tensor::new(ta.rows, ta.cols, ta.data.iter().map(|x| x / k).collect());
        self.push(Op::BroadcastDiv(a, s), t)
    }

    /// Reverse pass from a scalar output.
    pub fn backward(&self, output: Var) -> Grads {
        let out_val = &self.nodes[output.0].value;
        assert_eq!(out_val.data.len(), 1, "backward expects a scalar output");
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[output.0] = Some(Tensor::scalar(1.0));

        for id in (0..=output.0).rev() {
            let Some(g) = grads[id].take() else {
                continue;
            };
            self.propagate(id, &g, &mut grads);
            grads[id] = Some(g);
        }
        Grads { grads }
    }

    fn propagate(&self, id: usize, g: &Tensor, grads: &mut Vec<Option<Tensor>>) {
        let acc = |grads: &mut Vec<Option<Tensor>>, var: Var, delta: Tensor| {
            match &mut grads[var.0] {
                Some(t) => {
                    debug_assert!(t.same_shape(&delta));
                    for (x, d) in t.data.iter_mut().zip(delta.data) {
                        *x += d;
                    }
                }
                slot @ None => *slot = Some(delta),
            }
        };
        let val = |v: Var| &self.nodes[v.0].value;

        match &self.nodes[id].op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                acc(grads, *a, g.clone());
                acc(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                acc(grads, *a, g.clone());
                let neg = Tensor::new(g.rows, g.cols, g.data.iter().map(|x| -x).collect());
                acc(grads, *b, neg);
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (val(*a), val(*b));
                let da = Tensor::new(
                    g.rows,
                    g.cols,
                    g.data.iter().zip(&tb.data).map(|(x, y)| x * y).collect(),
                );
                let db = Tensor::new(
                    g.rows,
                    g.cols,
                    g.data.iter().zip(&ta.data).map(|(x, y)| x * y).collect(),
                );
                acc(grads, *a, da);
                acc(grads, *b, db);
            }
            Op::Min(a, b) | Op::Max(a, b) => {
                let is_min = matches!(self.nodes[id].op, Op::Min(..));
                let (ta, tb) = (val(*a), val(*b));
                let mut da = vec![0.0; g.data.len()];
                let mut db = vec![0.0; g.data.len()];
                for i in 0..g.data.len() {
                    let a_wins = if is_min {
                        ta.data[i] <= tb.data[i]
                    } else {
                        ta.data[i] >= tb.data[i]
                    };
                    if a_wins {
                        da[i] = g.data[i];
                    } else {
                        db[i] = g.data[i];
                    }
                }
                acc(grads, *a, Tensor::new(g.rows, g.cols, da));
                acc(grads, *b, Tensor::new(g.rows, g.cols, db));
            }
            Op::Scale(a, k) => {
                let da = Tensor::new(g.rows, g.cols, g.data.iter().map(|x| x * k).collect());
                acc(grads, *a, da);
            }
            Op::AddConst(a) => acc(grads, *a, g.clone()),
            Op::MinConst(a, k) => {
                let ta = val(*a);
                let da = Tensor::new(
                    g.rows,
                    g.cols,
                    g.data
                        .iter()
                        .zip(&ta.data)
                        .map(|(gx, x)| if *x < *k { *gx } else { 0.0 })
                        .collect(),
                );
                acc(grads, *a, da);
            }
            Op::Relu(a) => {
                let ta = val(*a);
                let da = Tensor::new(
                    g.rows,
                    g.cols,
                    g.data
                        .iter()
                        .zip(&ta.data)
                        .map(|(gx, x)| if *x > 0.0 { *gx } else { 0.0 })
                        .collect(),
                );
                acc(grads, *a, da);
            }
            Op::MatMul(a, b) => {
                let (ta, tb) = (val(*a), val(*b));
                let (m, k, n) = (ta.rows, ta.cols, tb.cols);
                // dA = G B^T
                let mut da = vec![0.0; m * k];
                for i in 0..m {
                    for j in 0..n {
                        let gij = g.data[i * n + j];
                        if gij == 0.0 {
                            continue;
                        }
                        for p in 0..k {
                            da[i * k + p] += gij * tb.data[p * n + j];
                        }
                    }
                }
                // dB = A^T G
                let mut db = vec![0.0; k * n];
                for p in 0..k {
                    for i in 0..m {
                        let aip = ta.data[i * k + p];
                        if aip == 0.0 {
                            continue;
                        }
                        for j in 0..n {
                            db[p * n + j] += aip * g.data[i * n + j];
                        }
                    }
                }
                acc(grads, *a, Tensor::new(m, k, da));
                acc(grads, *b, Tensor::new(k, n, db));
            }
            Op::Dot(a, b) => {
                let (ta, tb) = (val(*a), val(*b));
                let s = g.item();
                let da = Tensor::new(ta.rows, 1, tb.data.iter().map(|y| s * y).collect());
                let db = Tensor::new(tb.rows, 1, ta.data.iter().map(|x| s * x).collect());
                acc(grads, *a, da);
                acc(grads, *b, db);
            }
            Op::Sigmoid(a) => {
                let out = &self.nodes[id].value;
                let da = Tensor::new(
                    g.rows,
                    g.cols,
                    g.data
                        .iter()
                        .zip(&out.data)
                        .map(|(gx, s)| gx * s * (1.0 - s))
                        .collect(),
                );
                acc(grads, *a, da);
            }
            Op::Gelu(a) => {
                let ta = val(*a);
                let da = Tensor::new(
                    g.rows,
                    g.cols,
                    g.data
                        .iter()
                        .zip(&ta.data)
                        .map(|(gx, x)| gx * gelu_grad(*x))
                        .collect(),
                );
                acc(grads, *a, da);
            }
            Op::Sqrt(a) => {
                let out = &self.nodes[id].value;
                let da = Tensor::new(
                    g.rows,
                    g.cols,
                    g.data
                        .iter()
                        .zip(&out.data)
                        .map(|(gx, s)| gx * 0.5 / s)
                        .collect(),
                );
                acc(grads, *a, da);
            }
            Op::Softmax(a) => {
                let s = &self.nodes[id].value;
                let gs: f64 = g.data.iter().zip(&s.data).map(|(x, y)| x * y).sum();
                let da = Tensor::new(
                    s.rows,
                    1,
                    s.data
                        .iter()
                        .zip(&g.data)
                        .map(|(si, gi)| si * (gi - gs))
                        .collect(),
                );
                acc(grads, *a, da);
            }
            Op::LogSoftmax(a) => {
                let out = &self.nodes[id].value;
                let gsum: f64 = g.data.iter().sum();
                let da = Tensor::new(
                    out.rows,
                    1,
                    out.data
                        .iter()
                        .zip(&g.data)
                        .map(|(li, gi)| gi - li.exp() * gsum)
                        .collect(),
                );
                acc(grads, *a, da);
            }
            Op::SumAll(a) => {
                let ta = val(*a);
                let s = g.item();
                acc(grads, *a, Tensor::new(ta.rows, ta.cols, vec![s; ta.data.len()]));
            }
            Op::MeanAll(a) => {
                let ta = val(*a);
                let s = g.item() / ta.data.len() as f64;
                acc(grads, *a, Tensor::new(ta.rows, ta.cols, vec![s; ta.data.len()]));
            }
            Op::RowAsCol(a, row) => {
                let ta = val(*a);
                let mut da = Tensor::zeros(ta.rows, ta.cols);
                for c in 0..ta.cols {
                    da.data[row * ta.cols + c] = g.data[c];
                }
                acc(grads, *a, da);
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for p in parts {
                    let t = val(*p);
                    let slice = g.data[offset * g.cols..(offset + t.rows) * g.cols].to_vec();
                    acc(grads, *p, Tensor::new(t.rows, t.cols, slice));
                    offset += t.rows;
                }
            }
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for p in parts {
                    let t = val(*p);
                    let mut dp = Tensor::zeros(t.rows, t.cols);
                    for r in 0..t.rows {
                        dp.data[r * t.cols..(r + 1) * t.cols].copy_from_slice(
                            &g.data[r * g.cols + offset..r * g.cols + offset + t.cols],
                        );
                    }
                    acc(grads, *p, dp);
                    offset += t.cols;
                }
            }
            Op::BroadcastAdd(a, s) => {
                acc(grads, *a, g.clone());
                acc(grads, *s, Tensor::scalar(g.data.iter().sum()));
            }
            Op::BroadcastSub(a, s) => {
                acc(grads, *a, g.clone());
                acc(grads, *s, Tensor::scalar(-g.data.iter().sum::<f64>()));
            }
            Op::BroadcastDiv(a, s) => {
                let k = val(*s).item();
                let ta = val(*a);
                let da = Tensor::new(g.rows, g.cols, g.data.iter().map(|x| x / k).collect());
                let ds: f64 = g
                    .data
                    .iter()
                    .zip(&ta.data)
                    .map(|(gx, x)| -gx * x / (k * k))
                    .sum();
                acc(grads, *a, da);
                acc(grads, *s, Tensor::scalar(ds));
            }
        }
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044715;

fn gelu_fwd(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let u = GELU_C * (x + GELU_A * x * x * x);
    let t = u.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

/// Layer normalization with learnable gain/bias, composed from primitives.
pub fn layer_norm(tape: &mut Tape, x: Var, gain: Var, bias: Var, eps: f64) -> Var {
    let mean = tape.mean_all(x);
    let centered = tape.broadcast_sub(x, mean);
    let sq = tape.mul(centered, centered);
    let var = tape.mean_all(sq);
    let var_eps = tape.add_const(var, eps);
    let std = tape.sqrt(var_eps);
    let normed = tape.broadcast_div(centered, std);
    let scaled = tape.mul(normed, gain);
    tape.add(scaled, bias)
}
