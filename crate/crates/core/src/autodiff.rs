//! Define-by-run reverse-mode differentiation.
//!
//! A [`Tape`] records every primitive applied to [`Var`] handles in creation
//! order, so node ids form a topological order of the computation DAG.
//! [`Tape::backward`] walks the nodes once in reverse, accumulating gradients
//! additively across fan-out.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::projections::{self, ProjectionKind, SimplexPoint};
use crate::tensor::{self, DenseArray};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

/// Primitive operations with their parents and any constants the backward
/// rule needs beyond the node values.
#[derive(Debug, Clone, PartialEq)]
pub enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    /// Matrix plus a column vector broadcast over columns.
    AddColumn(Var, Var),
    Transpose(Var),
    Tanh(Var),
    Sigmoid(Var),
    Exp(Var),
    Log(Var),
    Relu(Var),
    Softplus(Var),
    Abs(Var),
    Sum(Var),
    /// Contiguous range of a vector.
    Slice(Var, usize, usize),
    /// Column of a matrix, as a vector.
    Column(Var, usize),
    /// Vectors joined end to end.
    Concat(Vec<Var>),
    /// Vectors laid side by side as matrix columns.
    StackColumns(Vec<Var>),
    L2Norm(Var),
    /// Simplex projection of a vector, or of each column of a matrix.
    Project(Var, ProjectionKind),
    /// Per-column standardisation to zero mean and unit variance.
    LayerNorm(Var, f64),
    /// Jensen-Shannon divergence to a fixed distribution.
    Jsd(Var, Vec<f64>),
}

impl Op {
    pub fn parents(&self) -> Vec<Var> {
        use Op::*;
        match self {
            Leaf => Vec::new(),
            MatMul(a, b) | Add(a, b) | Sub(a, b) | Mul(a, b) | AddColumn(a, b) => vec![*a, *b],
            Scale(a, _) | Transpose(a) | Tanh(a) | Sigmoid(a) | Exp(a) | Log(a) | Relu(a)
            | Softplus(a) | Abs(a) | Sum(a) | Slice(a, ..) | Column(a, _) | L2Norm(a)
            | Project(a, _) | LayerNorm(a, _) | Jsd(a, _) => vec![*a],
            Concat(vs) | StackColumns(vs) => vs.clone(),
        }
    }

    pub fn name(&self) -> &'static str {
        use Op::*;
        match self {
            Leaf => "leaf",
            MatMul(..) => "matmul",
            Add(..) => "add",
            Sub(..) => "sub",
            Mul(..) => "mul",
            Scale(..) => "scale",
            AddColumn(..) => "add_column",
            Transpose(..) => "transpose",
            Tanh(..) => "tanh",
            Sigmoid(..) => "sigmoid",
            Exp(..) => "exp",
            Log(..) => "log",
            Relu(..) => "relu",
            Softplus(..) => "softplus",
            Abs(..) => "abs",
            Sum(..) => "sum",
            Slice(..) => "slice",
            Column(..) => "column",
            Concat(..) => "concat",
            StackColumns(..) => "stack_columns",
            L2Norm(..) => "l2norm",
            Project(..) => "projection",
            LayerNorm(..) => "layer_norm",
            Jsd(..) => "jsd",
        }
    }
}

#[derive(Debug, Clone)]
pub struct TapeNode {
    pub op: Op,
    pub value: DenseArray,
}

#[derive(Debug, Clone, Default)]
pub struct Tape {
    nodes: Vec<TapeNode>,
}

/// Result of a backward pass: one gradient per node reached from the root.
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<DenseArray>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// Gradient of the root w.r.t. `var`; zeros if `var` is not upstream of it.
    pub fn wrt(&self, var: Var) -> DenseArray {
        match self.grads.get(var.0).and_then(Option::as_ref) {
            Some(g) => g.clone(),
            None => DenseArray::zeros(&self.shapes[var.0]),
        }
    }

    pub fn get(&self, var: Var) -> Option<&DenseArray> {
        self.grads.get(var.0).and_then(Option::as_ref)
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + libm::log1p(libm::exp(-x))
    } else {
        libm::log1p(libm::exp(x))
    }
}

fn mismatch(op: &'static str, a: &DenseArray, b: &DenseArray) -> Error {
    Error::ShapeMismatch { op, detail: format!("{:?} vs {:?}", a.shape(), b.shape()) }
}

/// Jensen-Shannon divergence (natural log) with `0 ln 0 = 0`.
pub fn jsd_value(p: &[f64], q: &[f64]) -> f64 {
    let mut total = 0.0;
    for (&pi, &qi) in p.iter().zip(q) {
        let m = 0.5 * (pi + qi);
        if pi > 0.0 {
            total += 0.5 * pi * libm::log(pi / m);
        }
        if qi > 0.0 {
            total += 0.5 * qi * libm::log(qi / m);
        }
    }
    total.max(0.0)
}

fn project_columns(x: &DenseArray, kind: &ProjectionKind) -> Result<DenseArray> {
    if x.is_vector() {
        return Ok(DenseArray::vector(kind.project(x.data())?.into_values()));
    }
    let (r, c) = (x.rows(), x.cols());
    let mut out = DenseArray::zeros(x.shape());
    for j in 0..c {
        let p = kind.project(&x.column(j))?;
        for (i, v) in p.values().iter().enumerate() {
            out.data_mut()[i * c + j] = *v;
        }
        debug_assert_eq!(p.len(), r);
    }
    Ok(out)
}

fn layer_norm(x: &DenseArray, eps: f64) -> DenseArray {
    let (r, c) = (x.rows(), x.cols());
    let mut out = DenseArray::zeros(x.shape());
    for j in 0..c {
        let col = x.column(j);
        let mean = col.iter().sum::<f64>() / r as f64;
        let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / r as f64;
        let inv = 1.0 / libm::sqrt(var + eps);
        for i in 0..r {
            out.data_mut()[i * c + j] = (col[i] - mean) * inv;
        }
    }
    out
}

/// Evaluates a primitive on explicit input values without recording it.
pub fn forward_primitive(op: &Op, inputs: &[&DenseArray]) -> Result<DenseArray> {
    use Op::*;
    let arity = op.parents().len();
    if inputs.len() != arity {
        return Err(Error::ShapeMismatch {
            op: op.name(),
            detail: format!("expected {arity} inputs, got {}", inputs.len()),
        });
    }
    let out = match op {
        Leaf => return Err(Error::Config("leaf has no forward rule".into())),
        MatMul(..) => tensor::matmul(inputs[0], inputs[1])?,
        Add(..) | Sub(..) | Mul(..) => {
            let (a, b) = (inputs[0], inputs[1]);
            if a.shape() != b.shape() {
                return Err(mismatch(op.name(), a, b));
            }
            match op {
                Add(..) => a.zip_map(b, |x, y| x + y),
                Sub(..) => a.zip_map(b, |x, y| x - y),
                _ => a.zip_map(b, |x, y| x * y),
            }
        }
        Scale(_, c) => inputs[0].map(|x| x * c),
        AddColumn(..) => {
            let (m, v) = (inputs[0], inputs[1]);
            if !m.is_matrix() || !v.is_vector() || v.len() != m.rows() {
                return Err(mismatch("add_column", m, v));
            }
            let c = m.cols();
            let mut out = m.clone();
            for (idx, val) in out.data_mut().iter_mut().enumerate() {
                *val += v.data()[idx / c];
            }
            out
        }
        Transpose(_) => {
            if !inputs[0].is_matrix() {
                return Err(Error::ShapeMismatch { op: "transpose", detail: "needs a matrix".into() });
            }
            inputs[0].transpose()
        }
        Tanh(_) => inputs[0].map(libm::tanh),
        Sigmoid(_) => inputs[0].map(sigmoid),
        Exp(_) => inputs[0].map(libm::exp),
        Log(_) => inputs[0].map(libm::log),
        Relu(_) => inputs[0].map(|x| x.max(0.0)),
        Softplus(_) => inputs[0].map(softplus),
        Abs(_) => inputs[0].map(f64::abs),
        Sum(_) => DenseArray::scalar(inputs[0].sum()),
        Slice(_, start, end) => {
            let x = inputs[0];
            if !x.is_vector() || start >= end || *end > x.len() {
                return Err(Error::ShapeMismatch {
                    op: "slice",
                    detail: format!("{start}..{end} of {:?}", x.shape()),
                });
            }
            DenseArray::vector(x.data()[*start..*end].to_vec())
        }
        Column(_, j) => {
            let x = inputs[0];
            if !x.is_matrix() || *j >= x.cols() {
                return Err(Error::ShapeMismatch {
                    op: "column",
                    detail: format!("column {j} of {:?}", x.shape()),
                });
            }
            DenseArray::vector(x.column(*j))
        }
        Concat(_) => {
            if inputs.iter().any(|x| !x.is_vector()) {
                return Err(Error::ShapeMismatch { op: "concat", detail: "needs vectors".into() });
            }
            DenseArray::vector(inputs.iter().flat_map(|x| x.data().iter().copied()).collect())
        }
        StackColumns(_) => {
            let cols: Vec<&[f64]> = inputs.iter().map(|x| x.data()).collect();
            if inputs.iter().any(|x| !x.is_vector()) {
                return Err(Error::ShapeMismatch { op: "stack_columns", detail: "needs vectors".into() });
            }
            DenseArray::from_columns(&cols)?
        }
        L2Norm(_) => DenseArray::scalar(inputs[0].norm()),
        Project(_, kind) => {
            if !(inputs[0].is_vector() || inputs[0].is_matrix()) {
                return Err(Error::ShapeMismatch { op: "projection", detail: "needs vector or matrix".into() });
            }
            project_columns(inputs[0], kind)?
        }
        LayerNorm(_, eps) => layer_norm(inputs[0], *eps),
        Jsd(_, q) => {
            let p = inputs[0];
            if !p.is_vector() || p.len() != q.len() {
                return Err(Error::ShapeMismatch {
                    op: "jsd",
                    detail: format!("{:?} vs {}", p.shape(), q.len()),
                });
            }
            DenseArray::scalar(jsd_value(p.data(), q))
        }
    };
    if !out.is_finite() {
        return Err(Error::NonFinite { op: op.name() });
    }
    Ok(out)
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[TapeNode] {
        &self.nodes
    }

    pub fn value(&self, var: Var) -> &DenseArray {
        &self.nodes[var.0].value
    }

    pub fn leaf(&mut self, value: DenseArray) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite { op: "leaf" });
        }
        self.nodes.push(TapeNode { op: Op::Leaf, value });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Records `op` applied to already-recorded parents.
    pub fn apply(&mut self, op: Op) -> Result<Var> {
        let parents = op.parents();
        if let Some(bad) = parents.iter().find(|p| p.0 >= self.nodes.len()) {
            return Err(Error::BadNode(bad.0));
        }
        let inputs: Vec<&DenseArray> = parents.iter().map(|p| &self.nodes[p.0].value).collect();
        let value = forward_primitive(&op, &inputs)?;
        self.nodes.push(TapeNode { op, value });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(Op::MatMul(a, b))
    }
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(Op::Add(a, b))
    }
    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(Op::Sub(a, b))
    }
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(Op::Mul(a, b))
    }
    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        self.apply(Op::Scale(a, c))
    }
    pub fn add_column(&mut self, m: Var, v: Var) -> Result<Var> {
        self.apply(Op::AddColumn(m, v))
    }
    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        self.apply(Op::Transpose(a))
    }
    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.apply(Op::Tanh(a))
    }
    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.apply(Op::Sigmoid(a))
    }
    pub fn exp(&mut self, a: Var) -> Result<Var> {
        self.apply(Op::Exp(a))
    }
    pub fn log(&mut self, a: Var) -> Result<Var> {
        self.apply(Op::Log(a))
    }
    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.apply(Op::Relu(a))
    }
    pub fn softplus(&mut self, a: Var) -> Result<Var> {
        self.apply(Op::Softplus(a))
    }
    pub fn abs(&mut self, a: Var) -> Result<Var> {
        self.apply(Op::Abs(a))
    }
    pub fn sum(&mut self, a: Var) -> Result<Var> {
        self.apply(Op::Sum(a))
    }
    pub fn slice(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        self.apply(Op::Slice(a, start, end))
    }
    pub fn column(&mut self, a: Var, j: usize) -> Result<Var> {
        self.apply(Op::Column(a, j))
    }
    pub fn concat(&mut self, parts: Vec<Var>) -> Result<Var> {
        self.apply(Op::Concat(parts))
    }
    pub fn stack_columns(&mut self, cols: Vec<Var>) -> Result<Var> {
        self.apply(Op::StackColumns(cols))
    }
    pub fn l2norm(&mut self, a: Var) -> Result<Var> {
        self.apply(Op::L2Norm(a))
    }
    pub fn layer_norm(&mut self, a: Var) -> Result<Var> {
        self.apply(Op::LayerNorm(a, 1e-5))
    }
    pub fn jsd(&mut self, p: Var, target: Vec<f64>) -> Result<Var> {
        self.apply(Op::Jsd(p, target))
    }

    /// Projects a score vector (or each matrix column) onto the simplex.
    /// A `tanh` score transform is recorded as its own node.
    pub fn project(&mut self, a: Var, kind: ProjectionKind) -> Result<Var> {
        kind.validate()?;
        match kind {
            ProjectionKind::Sparsegen { lambda, transform: projections::ScoreTransform::Tanh } => {
                let t = self.tanh(a)?;
                let inner = ProjectionKind::Sparsegen {
                    lambda,
                    transform: projections::ScoreTransform::Identity,
                };
                self.apply(Op::Project(t, inner))
            }
            _ => self.apply(Op::Project(a, kind)),
        }
    }

    /// Inner product of two equal-shape nodes.
    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var> {
        let m = self.mul(a, b)?;
        self.sum(m)
    }

    /// Gradients of the scalar `root` w.r.t. every node up to it.
    pub fn backward(&self, root: Var) -> Result<Gradients> {
        if root.0 >= self.nodes.len() {
            return Err(Error::BadNode(root.0));
        }
        let root_value = &self.nodes[root.0].value;
        if root_value.len() != 1 {
            return Err(Error::NotScalar { shape: root_value.shape().to_vec() });
        }
        let mut grads: Vec<Option<DenseArray>> = vec![None; root.0 + 1];
        grads[root.0] = Some(DenseArray::filled(root_value.shape(), 1.0));
        for id in (0..=root.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            self.backprop_node(id, &g, &mut grads)?;
            grads[id] = Some(g);
        }
        let shapes = self.nodes.iter().map(|n| n.value.shape().to_vec()).collect();
        Ok(Gradients { grads, shapes })
    }

    fn backprop_node(&self, id: usize, g: &DenseArray, grads: &mut [Option<DenseArray>]) -> Result<()> {
        use Op::*;
        let node = &self.nodes[id];
        let y = &node.value;
        let val = |v: &Var| &self.nodes[v.0].value;
        let push = |grads: &mut [Option<DenseArray>], v: Var, contrib: DenseArray| {
            if v.0 >= id {
                return Err(Error::BadNode(v.0));
            }
            match &mut grads[v.0] {
                Some(acc) => acc.add_assign(&contrib),
                slot @ None => *slot = Some(contrib),
            }
            Ok(())
        };
        match &node.op {
            Leaf => {}
            MatMul(a, b) => {
                let (av, bv) = (val(a), val(b));
                let gb = tensor::matmul_tn(av, g)?.reshaped(bv.shape())?;
                // acc += g b^T, accumulated in place
                let (k, c) = (bv.rows(), bv.cols());
                let acc = accumulator(grads, *a, id, av)?.data_mut();
                for (i, grow) in g.data().chunks_exact(c).enumerate() {
                    let dst = &mut acc[i * k..(i + 1) * k];
                    for (p, brow) in bv.data().chunks_exact(c).enumerate() {
                        dst[p] += grow.iter().zip(brow).map(|(x, y)| x * y).sum::<f64>();
                    }
                }
                push(grads, *b, gb)?;
            }
            Add(a, b) => {
                push(grads, *a, g.clone())?;
                push(grads, *b, g.clone())?;
            }
            Sub(a, b) => {
                push(grads, *a, g.clone())?;
                push(grads, *b, g.map(|x| -x))?;
            }
            Mul(a, b) => {
                let ga = g.zip_map(val(b), |x, y| x * y);
                let gb = g.zip_map(val(a), |x, y| x * y);
                push(grads, *a, ga)?;
                push(grads, *b, gb)?;
            }
            Scale(a, c) => push(grads, *a, g.map(|x| x * c))?,
            AddColumn(m, v) => {
                let c = g.cols();
                let sums = (0..g.rows()).map(|i| g.data()[i * c..(i + 1) * c].iter().sum()).collect();
                push(grads, *m, g.clone())?;
                push(grads, *v, DenseArray::vector(sums))?;
            }
            Transpose(a) => push(grads, *a, g.transpose())?,
            Tanh(a) => push(grads, *a, g.zip_map(y, |gi, yi| gi * (1.0 - yi * yi)))?,
            Sigmoid(a) => push(grads, *a, g.zip_map(y, |gi, yi| gi * yi * (1.0 - yi)))?,
            Exp(a) => push(grads, *a, g.zip_map(y, |gi, yi| gi * yi))?,
            Log(a) => push(grads, *a, g.zip_map(val(a), |gi, xi| gi / xi))?,
            Relu(a) => push(grads, *a, g.zip_map(val(a), |gi, xi| if xi > 0.0 { gi } else { 0.0 }))?,
            Softplus(a) => push(grads, *a, g.zip_map(val(a), |gi, xi| gi * sigmoid(xi)))?,
            Abs(a) => push(grads, *a, g.zip_map(val(a), |gi, xi| gi * signum(xi)))?,
            Sum(a) => push(grads, *a, DenseArray::filled(val(a).shape(), g.item()))?,
            // scatter in place rather than materialising a mostly-zero contribution
            Slice(a, start, _) => {
                let acc = accumulator(grads, *a, id, val(a))?;
                for (d, &gi) in acc.data_mut()[*start..].iter_mut().zip(g.data()) {
                    *d += gi;
                }
            }
            Column(a, j) => {
                let acc = accumulator(grads, *a, id, val(a))?;
                let cols = acc.cols();
                for (i, &gi) in g.data().iter().enumerate() {
                    acc.data_mut()[i * cols + *j] += gi;
                }
            }
            Concat(parts) => {
                let mut offset = 0;
                for p in parts {
                    let len = val(p).len();
                    push(grads, *p, DenseArray::vector(g.data()[offset..offset + len].to_vec()))?;
                    offset += len;
                }
            }
            StackColumns(cols) => {
                for (j, c) in cols.iter().enumerate() {
                    push(grads, *c, DenseArray::vector(g.column(j)))?;
                }
            }
            L2Norm(a) => {
                let x = val(a);
                let norm = y.item();
                let scale = if norm > 0.0 { g.item() / norm } else { 0.0 };
                push(grads, *a, x.map(|xi| xi * scale))?;
            }
            Project(a, kind) => {
                let out = if y.is_vector() {
                    let p = SimplexPoint::from_raw(y.data().to_vec());
                    DenseArray::vector(projections::projection_vjp(kind, &p, g.data())?)
                } else {
                    let c = y.cols();
                    let mut out = DenseArray::zeros_like(y);
                    for j in 0..c {
                        let p = SimplexPoint::from_raw(y.column(j));
                        let col = projections::projection_vjp(kind, &p, &g.column(j))?;
                        for (i, v) in col.into_iter().enumerate() {
                            out.set(i, j, v);
                        }
                    }
                    out
                };
                push(grads, *a, out)?;
            }
            LayerNorm(a, eps) => {
                let x = val(a);
                let (r, c) = (x.rows(), x.cols());
                let mut out = DenseArray::zeros_like(x);
                for j in 0..c {
                    let col = x.column(j);
                    let mean = col.iter().sum::<f64>() / r as f64;
                    let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / r as f64;
                    let inv = 1.0 / libm::sqrt(var + eps);
                    let gc = g.column(j);
                    let yc = y.column(j);
                    let g_mean = gc.iter().sum::<f64>() / r as f64;
                    let gy_mean = gc.iter().zip(&yc).map(|(a, b)| a * b).sum::<f64>() / r as f64;
                    for i in 0..r {
                        out.set(i, j, inv * (gc[i] - g_mean - yc[i] * gy_mean));
                    }
                }
                push(grads, *a, out)?;
            }
            Jsd(a, q) => {
                let p = val(a);
                let gi = g.item();
                let out = p
                    .data()
                    .iter()
                    .zip(q)
                    .map(|(&pi, &qi)| if pi > 0.0 { gi * 0.5 * libm::log(2.0 * pi / (pi + qi)) } else { 0.0 })
                    .collect();
                push(grads, *a, DenseArray::vector(out))?;
            }
        }
        Ok(())
    }
}

fn signum(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Outcome of comparing tape gradients with central differences.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    /// `max_i |analytic_i - numeric_i| / (|analytic_i| + 1e-12)`.
    pub max_rel_error: f64,
    pub max_abs_error: f64,
}

/// Checks the gradient of the scalar built by `f` from a leaf holding `at`.
pub fn grad_check<F>(f: F, at: &DenseArray, h: f64) -> Result<GradCheck>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    let eval = |x: &DenseArray| -> Result<f64> {
        let mut tape = Tape::new();
        let leaf = tape.leaf(x.clone())?;
        let out = f(&mut tape, leaf)?;
        let v = tape.value(out).item();
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFinite { op: "grad_check" })
        }
    };
    let mut tape = Tape::new();
    let leaf = tape.leaf(at.clone())?;
    let out = f(&mut tape, leaf)?;
    let analytic = tape.backward(out)?.wrt(leaf);
    let mut report = GradCheck { max_rel_error: 0.0, max_abs_error: 0.0 };
    let mut probe = at.clone();
    for i in 0..at.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + h;
        let plus = eval(&probe)?;
        probe.data_mut()[i] = orig - h;
        let minus = eval(&probe)?;
        probe.data_mut()[i] = orig;
        let numeric = (plus - minus) / (2.0 * h);
        let a = analytic.data()[i];
        let abs = (a - numeric).abs();
        report.max_abs_error = report.max_abs_error.max(abs);
        report.max_rel_error = report.max_rel_error.max(abs / (a.abs() + 1e-12));
    }
    Ok(report)
}

fn accumulator<'g>(grads: &'g mut [Option<DenseArray>], v: Var, id: usize, like: &DenseArray) -> Result<&'g mut DenseArray> {
    if v.0 >= id {
        return Err(Error::BadNode(v.0));
    }
    Ok(grads[v.0].get_or_insert_with(|| DenseArray::zeros_like(like)))
}
