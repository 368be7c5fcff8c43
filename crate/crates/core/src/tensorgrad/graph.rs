use alloc::vec;
use alloc::vec::Vec;

use super::linalg::{self, gemm, matmul_t, solve_lower, solve_lower_transpose};
use super::Mat;
use crate::error::{contract, Error, Result};

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    /// Reduce over rows, producing a `1 x cols` row vector.
    Rows,
    /// Reduce over columns, producing a `rows x 1` column vector.
    Cols,
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Offset(Var),
    MatMul { a: Var, b: Var, ta: bool, tb: bool },
    Transpose(Var),
    Cholesky(Var),
    SolveTri { l: Var, b: Var, transpose: bool },
    Exp(Var),
    Log(Var),
    Sqrt(Var),
    Square(Var),
    Sum(Var),
    SumAxis(Var, Axis),
    SumSquares(Var, Axis),
    Broadcast(Var),
    Diag(Var),
    Tril(Var),
    ClampMin(Var, f64),
    Rbf { a: Var, b: Var, log_amp: Var },
    SelectCols(Var, Vec<usize>),
    SelectRows(Var, Vec<usize>),
    HStack(Vec<Var>),
}

#[derive(Clone, Debug)]
struct Node {
    op: Op,
    value: Mat,
    requires_grad: bool,
}

/// Define-by-run computation graph over dense matrices.
///
/// Values are computed eagerly as nodes are added, so every op returns the
/// shape error immediately. Nodes created by [`Graph::param`] are
/// differentiable; [`Graph::constant`] nodes are not tracked.
#[derive(Clone, Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    jitter: Vec<(Var, f64)>,
}

fn shape_err(op: &'static str, a: &Mat, b: &Mat) -> Error {
    Error::Shape {
        op,
        left: a.shape(),
        right: b.shape(),
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

    fn push(&mut self, op: Op, value: Mat, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            op,
            value,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Differentiable leaf.
    pub fn param(&mut self, value: Mat) -> Var {
        self.push(Op::Leaf, value, true)
    }

    /// Non-differentiable leaf (data, noise draws, masks).
    pub fn constant(&mut self, value: Mat) -> Var {
        self.push(Op::Leaf, value, false)
    }

    pub fn scalar(&mut self, value: f64) -> Var {
        self.constant(Mat::scalar(value))
    }

    #[inline]
    pub fn value(&self, v: Var) -> &Mat {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    /// Value of the node, cloned out of the graph.
    pub fn evaluate(&self, root: Var) -> Mat {
        self.nodes[root.0].value.clone()
    }

    /// Jitter that the Cholesky node `v` needed, if `v` is one.
    pub fn jitter_used(&self, v: Var) -> Option<f64> {
        self.jitter.iter().find(|(n, _)| *n == v).map(|(_, j)| *j)
    }

    fn elementwise(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(shape_err(name, va, vb));
        }
        let value = va.zip_map(vb, f);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(op, value, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let value = self.value(a).map(|x| c * x);
        let rg = self.rg(a);
        self.push(Op::Scale(a, c), value, rg)
    }

    pub fn offset(&mut self, a: Var, c: f64) -> Var {
        let value = self.value(a).map(|x| x + c);
        let rg = self.rg(a);
        self.push(Op::Offset(a), value, rg)
    }

    /// `op(a) · op(b)` with optional transposes.
    pub fn matmul_t(&mut self, a: Var, ta: bool, b: Var, tb: bool) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        let k1 = if ta { va.rows() } else { va.cols() };
        let k2 = if tb { vb.cols() } else { vb.rows() };
        if k1 != k2 {
            return Err(shape_err("matmul", va, vb));
        }
        let value = matmul_t(va, ta, vb, tb);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Op::MatMul { a, b, ta, tb }, value, rg))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_t(a, false, b, false)
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let value = self.value(a).transpose();
        let rg = self.rg(a);
        self.push(Op::Transpose(a), value, rg)
    }

    /// Lower Cholesky factor via [`linalg::safe_cholesky`]. Any jitter that was
    /// needed is treated as a constant shift and recorded on the graph.
    pub fn cholesky(&mut self, a: Var) -> Result<Var> {
        let factor = linalg::safe_cholesky(self.value(a))?;
        let rg = self.rg(a);
        let v = self.push(Op::Cholesky(a), factor.lower, rg);
        if factor.jitter_used > 0.0 {
            self.jitter.push((v, factor.jitter_used));
        }
        Ok(v)
    }

    /// Solves `L X = B` (or `Lᵀ X = B` when `transpose`) for lower-triangular `L`.
    pub fn solve_tri(&mut self, l: Var, b: Var, transpose: bool) -> Result<Var> {
        let (vl, vb) = (self.value(l), self.value(b));
        if vl.rows() != vl.cols() || vl.rows() != vb.rows() {
            return Err(shape_err("solve_tri", vl, vb));
        }
        let value = if transpose {
            solve_lower_transpose(vl, vb)
        } else {
            solve_lower(vl, vb)
        };
        let rg = self.rg(l) || self.rg(b);
        Ok(self.push(Op::SolveTri { l, b, transpose }, value, rg))
    }

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let value = self.value(a).map(f);
        let rg = self.rg(a);
        self.push(op, value, rg)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, libm::exp, Op::Exp(a))
    }

    pub fn log(&mut self, a: Var) -> Var {
        self.unary(a, libm::log, Op::Log(a))
    }

    pub fn sqrt(&mut self, a: Var) -> Var {
        self.unary(a, libm::sqrt, Op::Sqrt(a))
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.unary(a, |x| x * x, Op::Square(a))
    }

    pub fn clamp_min(&mut self, a: Var, floor: f64) -> Var {
        self.unary(
            a,
            |x| if x > floor { x } else { floor },
            Op::ClampMin(a, floor),
        )
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let value = Mat::scalar(self.value(a).sum());
        let rg = self.rg(a);
        self.push(Op::Sum(a), value, rg)
    }

    pub fn sum_axis(&mut self, a: Var, axis: Axis) -> Var {
        let value = reduce(self.value(a), axis, |x| x);
        let rg = self.rg(a);
        self.push(Op::SumAxis(a, axis), value, rg)
    }

    /// Sum of squares along an axis (fused `sum_axis(square(a))`).
    pub fn sum_squares(&mut self, a: Var, axis: Axis) -> Var {
        let value = reduce(self.value(a), axis, |x| x * x);
        let rg = self.rg(a);
        self.push(Op::SumSquares(a, axis), value, rg)
    }

    /// Broadcasts a `1x1`, `1xc` or `rx1` node to `rows x cols`.
    pub fn broadcast(&mut self, a: Var, rows: usize, cols: usize) -> Result<Var> {
        let va = self.value(a);
        let ok = match va.shape() {
            (1, 1) => true,
            (1, c) => c == cols,
            (r, 1) => r == rows,
            (r, c) => r == rows && c == cols,
        };
        if !ok {
            return Err(Error::Shape {
                op: "broadcast",
                left: va.shape(),
                right: (rows, cols),
            });
        }
        let (r, c) = va.shape();
        let value = Mat::from_fn(rows, cols, |i, j| {
            va[(if r == 1 { 0 } else { i }, if c == 1 { 0 } else { j })]
        });
        let rg = self.rg(a);
        Ok(self.push(Op::Broadcast(a), value, rg))
    }

    /// Diagonal of a square matrix as a column vector.
    pub fn diag(&mut self, a: Var) -> Result<Var> {
        let va = self.value(a);
        if va.rows() != va.cols() {
            return Err(Error::Shape {
                op: "diag",
                left: va.shape(),
                right: (va.cols(), va.rows()),
            });
        }
        let value = Mat::column(va.diagonal());
        let rg = self.rg(a);
        Ok(self.push(Op::Diag(a), value, rg))
    }

    /// Lower triangle (diagonal included), upper entries zeroed.
    pub fn tril(&mut self, a: Var) -> Var {
        let va = self.value(a);
        let value = Mat::from_fn(
            va.rows(),
            va.cols(),
            |i, j| if j <= i { va[(i, j)] } else { 0.0 },
        );
        let rg = self.rg(a);
        self.push(Op::Tril(a), value, rg)
    }

    /// `exp(log_amp) · exp(-½‖aᵢ − bⱼ‖²)` for pre-scaled inputs.
    pub fn rbf(&mut self, a: Var, b: Var, log_amp: Var) -> Result<Var> {
        let (va, vb, vs) = (self.value(a), self.value(b), self.value(log_amp));
        if va.cols() != vb.cols() {
            return Err(shape_err("rbf", va, vb));
        }
        if vs.shape() != (1, 1) {
            return Err(shape_err("rbf amplitude", vs, &Mat::scalar(0.0)));
        }
        let amp = libm::exp(vs.to_scalar());
        let value = if a == b || va.rows() * vb.rows() <= 4096 {
            Mat::from_fn(va.rows(), vb.rows(), |i, j| {
                let d2: f64 = va
                    .row(i)
                    .iter()
                    .zip(vb.row(j))
                    .map(|(x, y)| (x - y) * (x - y))
                    .sum();
                amp * libm::exp(-0.5 * d2)
            })
        } else {
            // ‖a‖² + ‖b‖² − 2abᵀ through one gemm
            let mut cross = matmul_t(va, false, vb, true);
            let na: Vec<f64> = (0..va.rows())
                .map(|i| va.row(i).iter().map(|x| x * x).sum())
                .collect();
            let nb: Vec<f64> = (0..vb.rows())
                .map(|j| vb.row(j).iter().map(|x| x * x).sum())
                .collect();
            for (i, &ni) in na.iter().enumerate() {
                for (c, &nj) in cross.row_mut(i).iter_mut().zip(&nb) {
                    let d2 = (ni + nj - 2.0 * *c).max(0.0);
                    *c = amp * libm::exp(-0.5 * d2);
                }
            }
            cross
        };
        let rg = self.rg(a) || self.rg(b) || self.rg(log_amp);
        Ok(self.push(Op::Rbf { a, b, log_amp }, value, rg))
    }

    pub fn select_cols(&mut self, a: Var, idx: &[usize]) -> Result<Var> {
        let va = self.value(a);
        if let Some(&bad) = idx.iter().find(|&&j| j >= va.cols()) {
            return Err(Error::Shape {
                op: "select_cols",
                left: va.shape(),
                right: (va.rows(), bad + 1),
            });
        }
        let value = va.select_cols(idx);
        let rg = self.rg(a);
        Ok(self.push(Op::SelectCols(a, idx.to_vec()), value, rg))
    }

    /// Gathers rows; indices may repeat.
    pub fn select_rows(&mut self, a: Var, idx: &[usize]) -> Result<Var> {
        let va = self.value(a);
        if let Some(&bad) = idx.iter().find(|&&i| i >= va.rows()) {
            return Err(Error::Shape {
                op: "select_rows",
                left: va.shape(),
                right: (bad + 1, va.cols()),
            });
        }
        let value = va.select_rows(idx);
        let rg = self.rg(a);
        Ok(self.push(Op::SelectRows(a, idx.to_vec()), value, rg))
    }

    /// Horizontal concatenation.
    pub fn hstack(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = parts.first().map_or(0, |&p| self.value(p).rows());
        for &p in parts {
            if self.value(p).rows() != rows {
                return Err(shape_err("hstack", self.value(parts[0]), self.value(p)));
            }
        }
        let cols: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut value = Mat::zeros(rows, cols);
        for i in 0..rows {
            let mut off = 0;
            let dst = value.row_mut(i);
            for &p in parts {
                let src = self.nodes[p.0].value.row(i);
                dst[off..off + src.len()].copy_from_slice(src);
                off += src.len();
            }
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(Op::HStack(parts.to_vec()), value, rg))
    }

    /// Reverse pass from a scalar root. Returns one gradient slot per node.
    pub fn backward(&self, root: Var) -> Result<Gradients> {
        if self.value(root).shape() != (1, 1) {
            return Err(contract("backward root must be a 1x1 scalar"));
        }
        let mut grads: Vec<Option<Mat>> = vec![None; self.nodes.len()];
        grads[root.0] = Some(Mat::scalar(1.0));
        for idx in (0..=root.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if node.requires_grad {
                self.propagate(node, &g, &mut grads);
            }
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    /// `∂root/∂leaf` for each leaf, zeros for leaves the root does not reach.
    pub fn gradient(&self, root: Var, leaves: &[Var]) -> Result<Vec<Mat>> {
        let grads = self.backward(root)?;
        Ok(leaves
            .iter()
            .map(|&v| {
                grads.get(v).cloned().unwrap_or_else(|| {
                    let (r, c) = self.shape(v);
                    Mat::zeros(r, c)
                })
            })
            .collect())
    }

    fn propagate(&self, node: &Node, g: &Mat, grads: &mut [Option<Mat>]) {
        let out = &node.value;
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                self.acc(grads, *a, || g.clone());
                self.acc(grads, *b, || g.clone());
            }
            Op::Sub(a, b) => {
                self.acc(grads, *a, || g.clone());
                self.acc(grads, *b, || g.map(|x| -x));
            }
            Op::Mul(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                self.acc(grads, *a, || g.zip_map(vb, |x, y| x * y));
                self.acc(grads, *b, || g.zip_map(va, |x, y| x * y));
            }
            Op::Scale(a, c) => self.acc(grads, *a, || g.map(|x| c * x)),
            Op::Offset(a) => self.acc(grads, *a, || g.clone()),
            Op::MatMul { a, b, ta, tb } => {
                let (va, vb) = (self.value(*a), self.value(*b));
                // C = op(A) op(B)
                self.acc(grads, *a, || {
                    if *ta {
                        matmul_t(vb, *tb, g, true)
                    } else {
                        matmul_t(g, false, vb, !*tb)
                    }
                });
                self.acc(grads, *b, || {
                    if *tb {
                        matmul_t(g, true, va, *ta)
                    } else {
                        matmul_t(va, !*ta, g, false)
                    }
                });
            }
            Op::Transpose(a) => self.acc(grads, *a, || g.transpose()),
            Op::Cholesky(a) => self.acc(grads, *a, || cholesky_backward(out, g)),
            Op::SolveTri { l, b, transpose } => {
                let vl = self.value(*l);
                // B̄ = L⁻ᵀ Ḡ (or L⁻¹ Ḡ when transposed)
                let gb = if *transpose {
                    solve_lower(vl, g)
                } else {
                    solve_lower_transpose(vl, g)
                };
                if self.rg(*l) {
                    let mut gl = if *transpose {
                        matmul_t(out, false, &gb, true)
                    } else {
                        matmul_t(&gb, false, out, true)
                    };
                    let n = gl.rows();
                    for i in 0..n {
                        for j in 0..n {
                            gl[(i, j)] = if j <= i { -gl[(i, j)] } else { 0.0 };
                        }
                    }
                    add_into(grads, *l, gl);
                }
                if self.rg(*b) {
                    add_into(grads, *b, gb);
                }
            }
            Op::Exp(a) => self.acc(grads, *a, || g.zip_map(out, |x, y| x * y)),
            Op::Log(a) => {
                let va = self.value(*a);
                self.acc(grads, *a, || g.zip_map(va, |x, y| x / y))
            }
            Op::Sqrt(a) => self.acc(grads, *a, || g.zip_map(out, |x, y| x / (2.0 * y))),
            Op::Square(a) => {
                let va = self.value(*a);
                self.acc(grads, *a, || g.zip_map(va, |x, y| 2.0 * x * y))
            }
            Op::ClampMin(a, floor) => {
                let va = self.value(*a);
                self.acc(grads, *a, || {
                    g.zip_map(va, |x, y| if y > *floor { x } else { 0.0 })
                })
            }
            Op::Sum(a) => {
                let (r, c) = self.shape(*a);
                let s = g.to_scalar();
                self.acc(grads, *a, || Mat::filled(r, c, s))
            }
            Op::SumAxis(a, axis) => {
                let (r, c) = self.shape(*a);
                self.acc(grads, *a, || expand(g, *axis, r, c))
            }
            Op::SumSquares(a, axis) => {
                let va = self.value(*a);
                self.acc(grads, *a, || {
                    let mut e = expand(g, *axis, va.rows(), va.cols());
                    for (x, y) in e.as_mut_slice().iter_mut().zip(va.as_slice()) {
                        *x *= 2.0 * y;
                    }
                    e
                })
            }
            Op::Broadcast(a) => {
                let (r, c) = self.shape(*a);
                self.acc(grads, *a, || match (r, c) {
                    (1, 1) => Mat::scalar(g.sum()),
                    (1, _) if g.rows() != 1 => reduce(g, Axis::Rows, |x| x),
                    (_, 1) if g.cols() != 1 => reduce(g, Axis::Cols, |x| x),
                    _ => g.clone(),
                })
            }
            Op::Diag(a) => {
                let n = self.shape(*a).0;
                self.acc(grads, *a, || {
                    Mat::from_fn(n, n, |i, j| if i == j { g[(i, 0)] } else { 0.0 })
                })
            }
            Op::Tril(a) => self.acc(grads, *a, || {
                Mat::from_fn(
                    g.rows(),
                    g.cols(),
                    |i, j| if j <= i { g[(i, j)] } else { 0.0 },
                )
            }),
            Op::Rbf { a, b, log_amp } => {
                // Gk = Ḡ ⊙ K; ∂/∂ log_amp = ΣGk; distance part carries −½ Gk.
                let gk = g.zip_map(out, |x, y| x * y);
                if self.rg(*log_amp) {
                    add_into(grads, *log_amp, Mat::scalar(gk.sum()));
                }
                let (va, vb) = (self.value(*a), self.value(*b));
                if self.rg(*a) {
                    // Ā = −(diag(rowsum Gk) A − Gk B)
                    let mut ga = matmul_t(&gk, false, vb, false);
                    for i in 0..va.rows() {
                        let s: f64 = gk.row(i).iter().sum();
                        for (x, y) in ga.row_mut(i).iter_mut().zip(va.row(i)) {
                            *x -= s * y;
                        }
                    }
                    add_into(grads, *a, ga);
                }
                if self.rg(*b) {
                    let mut gb = matmul_t(&gk, true, va, false);
                    let colsum = reduce(&gk, Axis::Rows, |x| x);
                    for j in 0..vb.rows() {
                        let s = colsum[(0, j)];
                        for (x, y) in gb.row_mut(j).iter_mut().zip(vb.row(j)) {
                            *x -= s * y;
                        }
                    }
                    add_into(grads, *b, gb);
                }
            }
            Op::SelectCols(a, idx) => {
                let (r, c) = self.shape(*a);
                self.acc(grads, *a, || {
                    let mut m = Mat::zeros(r, c);
                    for i in 0..r {
                        for (k, &j) in idx.iter().enumerate() {
                            m[(i, j)] += g[(i, k)];
                        }
                    }
                    m
                })
            }
            Op::SelectRows(a, idx) => {
                let (r, c) = self.shape(*a);
                self.acc(grads, *a, || {
                    let mut m = Mat::zeros(r, c);
                    for (k, &i) in idx.iter().enumerate() {
                        for (x, y) in m.row_mut(i).iter_mut().zip(g.row(k)) {
                            *x += y;
                        }
                    }
                    m
                })
            }
            Op::HStack(parts) => {
                let mut off = 0;
                for &p in parts {
                    let (r, c) = self.shape(p);
                    if self.rg(p) {
                        let part = Mat::from_fn(r, c, |i, j| g[(i, off + j)]);
                        add_into(grads, p, part);
                    }
                    off += c;
                }
            }
        }
    }

    fn acc(&self, grads: &mut [Option<Mat>], v: Var, f: impl FnOnce() -> Mat) {
        if self.rg(v) {
            add_into(grads, v, f());
        }
    }
}

fn add_into(grads: &mut [Option<Mat>], v: Var, g: Mat) {
    match &mut grads[v.0] {
        Some(existing) => existing.axpy(1.0, &g),
        slot @ None => *slot = Some(g),
    }
}

fn reduce(a: &Mat, axis: Axis, f: impl Fn(f64) -> f64) -> Mat {
    match axis {
        Axis::Rows => {
            let mut out = Mat::zeros(1, a.cols());
            for i in 0..a.rows() {
                for (o, x) in out.as_mut_slice().iter_mut().zip(a.row(i)) {
                    *o += f(*x);
                }
            }
            out
        }
        Axis::Cols => Mat::from_fn(a.rows(), 1, |i, _| a.row(i).iter().map(|&x| f(x)).sum()),
    }
}

fn expand(g: &Mat, axis: Axis, rows: usize, cols: usize) -> Mat {
    match axis {
        Axis::Rows => Mat::from_fn(rows, cols, |_, j| g[(0, j)]),
        Axis::Cols => Mat::from_fn(rows, cols, |i, _| g[(i, 0)]),
    }
}

/// Reverse-mode rule for `L = chol(A)`:
/// `Ā = ½ (S + Sᵀ)` with `S = L⁻ᵀ Φ(Lᵀ L̄) L⁻¹`, `Φ` = lower triangle with halved diagonal.
fn cholesky_backward(l: &Mat, gl: &Mat) -> Mat {
    let n = l.rows();
    let mut gl_low = gl.clone();
    for i in 0..n {
        for j in i + 1..n {
            gl_low[(i, j)] = 0.0;
        }
    }
    let mut phi = Mat::zeros(n, n);
    gemm(1.0, l, true, &gl_low, false, 0.0, &mut phi);
    for i in 0..n {
        for j in i + 1..n {
            phi[(i, j)] = 0.0;
        }
        phi[(i, i)] *= 0.5;
    }
    // S = L⁻ᵀ Φ L⁻¹ = L⁻ᵀ (L⁻ᵀ Φᵀ)ᵀ
    let t = solve_lower_transpose(l, &phi.transpose());
    let s = solve_lower_transpose(l, &t.transpose());
    Mat::from_fn(n, n, |i, j| 0.5 * (s[(i, j)] + s[(j, i)]))
}

/// Result of [`Graph::backward`].
#[derive(Clone, Debug)]
pub struct Gradients {
    grads: Vec<Option<Mat>>,
}

impl Gradients {
    /// Gradient for `v`, or `None` when `v` is constant or unreachable from the root.
    pub fn get(&self, v: Var) -> Option<&Mat> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }
}
