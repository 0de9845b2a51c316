use std::collections::HashMap;

use super::{matmul_raw, transpose_raw, Result, Scalar, Tensor, TensorError};

/// Handle to a node recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

/// The primitive operations a tape can record.
///
/// `Add`, `Sub` and `Mul` are element-wise; the second operand may also be a
/// single row `[1, n]` that is broadcast over every row of an `[m, n]` first
/// operand. `Sum` and `Mean` reduce to a one-element tensor.
#[derive(Debug, Clone, PartialEq)]
pub enum OpKind {
    Add,
    Sub,
    Mul,
    MatMul,
    Transpose,
    Exp,
    Log,
    Sigmoid,
    Log1p,
    LogSoftmaxRows,
    GatherRows(Vec<usize>),
    Sum,
    Mean,
    Scale(f64),
}

impl OpKind {
    pub fn name(&self) -> &'static str {
        match self {
            OpKind::Add => "add",
            OpKind::Sub => "sub",
            OpKind::Mul => "mul",
            OpKind::MatMul => "matmul",
            OpKind::Transpose => "transpose",
            OpKind::Exp => "exp",
            OpKind::Log => "log",
            OpKind::Sigmoid => "sigmoid",
            OpKind::Log1p => "log1p",
            OpKind::LogSoftmaxRows => "log_softmax_rows",
            OpKind::GatherRows(_) => "gather_rows",
            OpKind::Sum => "sum",
            OpKind::Mean => "mean",
            OpKind::Scale(_) => "scale",
        }
    }

    fn arity(&self) -> usize {
        match self {
            OpKind::Add | OpKind::Sub | OpKind::Mul | OpKind::MatMul => 2,
            _ => 1,
        }
    }
}

struct Node<T> {
    value: Tensor<T>,
    op: Option<OpKind>,
    inputs: Vec<Var>,
    requires_grad: bool,
}

/// Gradients of a scalar loss with respect to the tape's trainable leaves.
#[derive(Debug, Clone)]
pub struct GradMap<T> {
    grads: HashMap<Var, Tensor<T>>,
}

impl<T: Scalar> GradMap<T> {
    pub fn get(&self, var: Var) -> Option<&Tensor<T>> {
        self.grads.get(&var)
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    pub fn into_inner(self) -> HashMap<Var, Tensor<T>> {
        self.grads
    }
}

/// Records one forward computation. `backward` consumes it.
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
    consumed: bool,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            consumed: false,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, node: Node<T>) -> Var {
        self.nodes.push(node);
        Var(self.nodes.len() - 1)
    }

    fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Result<Var> {
        if self.consumed {
            return Err(TensorError::TapeConsumed);
        }
        if !value.is_finite() {
            return Err(TensorError::NonFinite { op: "leaf" });
        }
        Ok(self.push(Node {
            value,
            op: None,
            inputs: Vec::new(),
            requires_grad,
        }))
    }

    /// A trainable leaf; `backward` reports its gradient.
    pub fn param(&mut self, value: Tensor<T>) -> Result<Var> {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Tensor<T>) -> Result<Var> {
        self.leaf(value, false)
    }

    pub fn value(&self, var: Var) -> &Tensor<T> {
        &self.nodes[var.0].value
    }

    pub fn requires_grad(&self, var: Var) -> bool {
        self.nodes[var.0].requires_grad
    }

    fn check_var(&self, var: Var) -> Result<()> {
        if var.0 < self.nodes.len() {
            Ok(())
        } else {
            Err(TensorError::UnknownVar(var.0))
        }
    }

    /// Records `op` applied to `inputs` and returns the output node.
    pub fn apply(&mut self, op: OpKind, inputs: &[Var]) -> Result<Var> {
        if self.consumed {
            return Err(TensorError::TapeConsumed);
        }
        if inputs.len() != op.arity() {
            return Err(TensorError::Arity {
                op: op.name(),
                expected: op.arity(),
                got: inputs.len(),
            });
        }
        for &v in inputs {
            self.check_var(v)?;
        }
        let value = {
            let vals: Vec<&Tensor<T>> = inputs.iter().map(|v| &self.nodes[v.0].value).collect();
            forward(&op, &vals)?
        };
        if !value.is_finite() {
            return Err(TensorError::NonFinite { op: op.name() });
        }
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        Ok(self.push(Node {
            value,
            op: Some(op),
            inputs: inputs.to_vec(),
            requires_grad,
        }))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(OpKind::Add, &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(OpKind::Sub, &[a, b])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(OpKind::Mul, &[a, b])
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(OpKind::MatMul, &[a, b])
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        self.apply(OpKind::Transpose, &[a])
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        self.apply(OpKind::Exp, &[a])
    }

    pub fn log(&mut self, a: Var) -> Result<Var> {
        self.apply(OpKind::Log, &[a])
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.apply(OpKind::Sigmoid, &[a])
    }

    pub fn log1p(&mut self, a: Var) -> Result<Var> {
        self.apply(OpKind::Log1p, &[a])
    }

    pub fn log_softmax_rows(&mut self, a: Var) -> Result<Var> {
        self.apply(OpKind::LogSoftmaxRows, &[a])
    }

    pub fn gather_rows(&mut self, table: Var, indices: Vec<usize>) -> Result<Var> {
        self.apply(OpKind::GatherRows(indices), &[table])
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        self.apply(OpKind::Sum, &[a])
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        self.apply(OpKind::Mean, &[a])
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Result<Var> {
        self.apply(OpKind::Scale(factor), &[a])
    }

    /// `log(1 + exp(x))`, evaluated as `x + log1p(exp(-x))` when every entry
    /// is non-negative so large inputs do not overflow.
    pub fn softplus(&mut self, x: Var) -> Result<Var> {
        let data = self.value(x).data();
        if data.iter().all(|&v| v >= T::zero()) {
            let neg = self.scale(x, -1.0)?;
            let e = self.exp(neg)?;
            let l = self.log1p(e)?;
            self.add(x, l)
        } else {
            let e = self.exp(x)?;
            self.log1p(e)
        }
    }

    /// Reverse pass from a scalar `loss`. Consumes the tape.
    pub fn backward(&mut self, loss: Var) -> Result<GradMap<T>> {
        if self.consumed {
            return Err(TensorError::TapeConsumed);
        }
        self.check_var(loss)?;
        let loss_value = &self.nodes[loss.0].value;
        if !loss_value.is_scalar() {
            return Err(TensorError::NonScalarLoss(loss_value.shape().to_vec()));
        }
        self.consumed = true;

        let mut grads: Vec<Option<Tensor<T>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::filled(loss_value.shape().to_vec(), T::one()));
        let mut out = HashMap::new();

        for id in (0..=loss.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &self.nodes[id];
            if !node.requires_grad {
                continue;
            }
            let Some(op) = &node.op else {
                out.insert(Var(id), g);
                continue;
            };
            let inputs: Vec<&Tensor<T>> = node.inputs.iter().map(|v| &self.nodes[v.0].value).collect();
            let needs: Vec<bool> = node.inputs.iter().map(|v| self.nodes[v.0].requires_grad).collect();
            let input_grads = backward_op(op, &inputs, &node.value, &g, &needs);
            for (input, ig) in node.inputs.iter().zip(input_grads) {
                let Some(ig) = ig else { continue };
                match &mut grads[input.0] {
                    Some(acc) => {
                        for (a, b) in acc.data_mut().iter_mut().zip(ig.data()) {
                            *a = *a + *b;
                        }
                    }
                    slot @ None => *slot = Some(ig),
                }
            }
        }
        Ok(GradMap { grads: out })
    }
}

enum Broadcast {
    Same,
    Row,
}

fn broadcast_kind<T: Scalar>(op: &OpKind, a: &Tensor<T>, b: &Tensor<T>) -> Result<Broadcast> {
    if a.shape() == b.shape() {
        return Ok(Broadcast::Same);
    }
    let (_, n) = a.dims2();
    let b_is_row = b.len() == n && b.dims2() == (1, n) && a.shape().len() == 2;
    if b_is_row {
        Ok(Broadcast::Row)
    } else {
        Err(TensorError::ShapeMismatch {
            op: op.name(),
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        })
    }
}

fn zip_with<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>, kind: Broadcast, f: impl Fn(T, T) -> T) -> Tensor<T> {
    let data = match kind {
        Broadcast::Same => a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect(),
        Broadcast::Row => {
            let n = b.len();
            a.data()
                .iter()
                .enumerate()
                .map(|(i, &x)| f(x, b.data()[i % n]))
                .collect()
        }
    };
    Tensor {
        shape: a.shape().to_vec(),
        data,
    }
}

fn forward<T: Scalar>(op: &OpKind, inputs: &[&Tensor<T>]) -> Result<Tensor<T>> {
    let a = inputs[0];
    let out = match op {
        OpKind::Add => zip_with(a, inputs[1], broadcast_kind(op, a, inputs[1])?, |x, y| x + y),
        OpKind::Sub => zip_with(a, inputs[1], broadcast_kind(op, a, inputs[1])?, |x, y| x - y),
        OpKind::Mul => zip_with(a, inputs[1], broadcast_kind(op, a, inputs[1])?, |x, y| x * y),
        OpKind::MatMul => {
            let b = inputs[1];
            if a.shape().len() != 2 || b.shape().len() != 2 || a.shape()[1] != b.shape()[0] {
                return Err(TensorError::ShapeMismatch {
                    op: op.name(),
                    lhs: a.shape().to_vec(),
                    rhs: b.shape().to_vec(),
                });
            }
            let (m, k) = a.dims2();
            let n = b.shape()[1];
            Tensor {
                shape: vec![m, n],
                data: matmul_raw(a.data(), b.data(), m, k, n),
            }
        }
        OpKind::Transpose => {
            let (r, c) = a.dims2();
            Tensor {
                shape: vec![c, r],
                data: transpose_raw(a.data(), r, c),
            }
        }
        OpKind::Exp => a.map(|x| x.exp()),
        OpKind::Log => {
            if let Some(&bad) = a.data().iter().find(|&&x| x <= T::zero()) {
                return Err(TensorError::Domain {
                    op: "log",
                    value: bad.to_f64c(),
                });
            }
            a.map(|x| x.ln())
        }
        OpKind::Sigmoid => a.map(sigmoid),
        OpKind::Log1p => {
            if let Some(&bad) = a.data().iter().find(|&&x| x <= -T::one()) {
                return Err(TensorError::Domain {
                    op: "log1p",
                    value: bad.to_f64c(),
                });
            }
            a.map(|x| x.ln_1p())
        }
        OpKind::LogSoftmaxRows => {
            let (r, c) = a.dims2();
            let mut data = Vec::with_capacity(r * c);
            for row in a.data().chunks(c) {
                let max = row.iter().copied().fold(T::neg_infinity(), T::max);
                let sum = row.iter().fold(T::zero(), |s, &x| s + (x - max).exp());
                let lse = max + sum.ln();
                data.extend(row.iter().map(|&x| x - lse));
            }
            Tensor {
                shape: a.shape().to_vec(),
                data,
            }
        }
        OpKind::GatherRows(indices) => {
            let (rows, cols) = a.dims2();
            if indices.is_empty() {
                return Err(TensorError::InvalidShape {
                    shape: vec![0, cols],
                    len: 0,
                });
            }
            let mut data = Vec::with_capacity(indices.len() * cols);
            for &idx in indices {
                if idx >= rows {
                    return Err(TensorError::IndexOutOfRange { index: idx, rows });
                }
                data.extend_from_slice(&a.data()[idx * cols..(idx + 1) * cols]);
            }
            Tensor {
                shape: vec![indices.len(), cols],
                data,
            }
        }
        OpKind::Sum => Tensor::scalar(a.data().iter().fold(T::zero(), |s, &x| s + x)),
        OpKind::Mean => {
            let s = a.data().iter().fold(T::zero(), |s, &x| s + x);
            Tensor::scalar(s / T::from_usize(a.len()).unwrap())
        }
        OpKind::Scale(c) => {
            let c = T::from_f64c(*c);
            a.map(|x| x * c)
        }
    };
    Ok(out)
}

pub(crate) fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// Sums an `[m, n]` gradient down to the `[1, n]` row it was broadcast from.
fn reduce_rows<T: Scalar>(g: &Tensor<T>, like: &Tensor<T>) -> Tensor<T> {
    if g.shape() == like.shape() {
        return g.clone();
    }
    let n = like.len();
    let mut data = vec![T::zero(); n];
    for (i, &v) in g.data().iter().enumerate() {
        data[i % n] = data[i % n] + v;
    }
    Tensor {
        shape: like.shape().to_vec(),
        data,
    }
}

fn backward_op<T: Scalar>(
    op: &OpKind,
    inputs: &[&Tensor<T>],
    out: &Tensor<T>,
    g: &Tensor<T>,
    needs: &[bool],
) -> Vec<Option<Tensor<T>>> {
    let a = inputs[0];
    let elementwise = |f: &dyn Fn(T, T, T) -> T| -> Tensor<T> {
        // f(input, output, upstream)
        Tensor {
            shape: a.shape().to_vec(),
            data: a
                .data()
                .iter()
                .zip(out.data())
                .zip(g.data())
                .map(|((&x, &y), &gy)| f(x, y, gy))
                .collect(),
        }
    };
    match op {
        OpKind::Add => vec![needs[0].then(|| g.clone()), needs[1].then(|| reduce_rows(g, inputs[1]))],
        OpKind::Sub => vec![
            needs[0].then(|| g.clone()),
            needs[1].then(|| reduce_rows(&g.map(|x| -x), inputs[1])),
        ],
        OpKind::Mul => {
            let b = inputs[1];
            let row = b.shape() != a.shape();
            let n = b.len();
            let ga = needs[0].then(|| Tensor {
                shape: a.shape().to_vec(),
                data: g
                    .data()
                    .iter()
                    .enumerate()
                    .map(|(i, &gv)| gv * b.data()[if row { i % n } else { i }])
                    .collect(),
            });
            let gb = needs[1].then(|| {
                let full = Tensor {
                    shape: a.shape().to_vec(),
                    data: g.data().iter().zip(a.data()).map(|(&gv, &av)| gv * av).collect(),
                };
                reduce_rows(&full, b)
            });
            vec![ga, gb]
        }
        OpKind::MatMul => {
            let b = inputs[1];
            let (m, k) = a.dims2();
            let n = b.shape()[1];
            let ga = needs[0].then(|| {
                let bt = transpose_raw(b.data(), k, n);
                Tensor {
                    shape: vec![m, k],
                    data: matmul_raw(g.data(), &bt, m, n, k),
                }
            });
            let gb = needs[1].then(|| {
                let at = transpose_raw(a.data(), m, k);
                Tensor {
                    shape: vec![k, n],
                    data: matmul_raw(&at, g.data(), k, m, n),
                }
            });
            vec![ga, gb]
        }
        OpKind::Transpose => {
            let (r, c) = a.dims2();
            vec![Some(Tensor {
                shape: a.shape().to_vec(),
                data: transpose_raw(g.data(), c, r),
            })]
        }
        OpKind::Exp => vec![Some(elementwise(&|_, y, gy| gy * y))],
        OpKind::Log => vec![Some(elementwise(&|x, _, gy| gy / x))],
        OpKind::Sigmoid => vec![Some(elementwise(&|_, y, gy| gy * y * (T::one() - y)))],
        OpKind::Log1p => vec![Some(elementwise(&|x, _, gy| gy / (T::one() + x)))],
        OpKind::LogSoftmaxRows => {
            let (_, c) = a.dims2();
            let mut data = Vec::with_capacity(a.len());
            for (orow, grow) in out.data().chunks(c).zip(g.data().chunks(c)) {
                let gsum = grow.iter().fold(T::zero(), |s, &x| s + x);
                data.extend(orow.iter().zip(grow).map(|(&y, &gy)| gy - y.exp() * gsum));
            }
            vec![Some(Tensor {
                shape: a.shape().to_vec(),
                data,
            })]
        }
        OpKind::GatherRows(indices) => {
            let (_, cols) = a.dims2();
            let mut data = vec![T::zero(); a.len()];
            for (r, &idx) in indices.iter().enumerate() {
                let dst = &mut data[idx * cols..(idx + 1) * cols];
                for (d, &s) in dst.iter_mut().zip(&g.data()[r * cols..(r + 1) * cols]) {
                    *d = *d + s;
                }
            }
            vec![Some(Tensor {
                shape: a.shape().to_vec(),
                data,
            })]
        }
        OpKind::Sum => vec![Some(Tensor::filled(a.shape().to_vec(), g.item()))],
        OpKind::Mean => {
            let v = g.item() / T::from_usize(a.len()).unwrap();
            vec![Some(Tensor::filled(a.shape().to_vec(), v))]
        }
        OpKind::Scale(c) => {
            let c = T::from_f64c(*c);
            vec![Some(g.map(|x| x * c))]
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor<f64> {
        Tensor::from_f64(shape.to_vec(), data).unwrap()
    }

    #[test]
    fn uniform_log_softmax() {
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(t(&[1, 4], &[0.0; 4])).unwrap();
        let y = tape.log_softmax_rows(x).unwrap();
        for &v in tape.value(y).data() {
            assert!((v - 0.25f64.ln()).abs() < 1e-15);
        }
    }

    #[test]
    fn matmul_of_ones() {
        let mut tape = Tape::<f64>::new();
        let a = tape.constant(Tensor::ones(vec![2, 3])).unwrap();
        let b = tape.constant(Tensor::ones(vec![3, 2])).unwrap();
        let c = tape.matmul(a, b).unwrap();
        assert_eq!(tape.value(c).shape(), &[2, 2]);
        assert_eq!(tape.value(c).data(), &[3.0; 4]);
    }

    #[test]
    fn sum_gradient_is_ones() {
        let mut tape = Tape::<f64>::new();
        let x = tape.param(t(&[2, 3], &[1.0, -2.0, 3.0, 0.5, 0.0, 9.0])).unwrap();
        let s = tape.sum(x).unwrap();
        let g = tape.backward(s).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[1.0; 6]);
    }

    #[test]
    fn mean_of_squares_gradient() {
        let mut tape = Tape::<f64>::new();
        let x = tape.param(t(&[3], &[1.0, 2.0, 3.0])).unwrap();
        let sq = tape.mul(x, x).unwrap();
        let m = tape.mean(sq).unwrap();
        let g = tape.backward(m).unwrap();
        let got = g.get(x).unwrap().data();
        for (a, b) in got.iter().zip([2.0 / 3.0, 4.0 / 3.0, 2.0]) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn errors_are_typed() {
        let mut tape = Tape::<f64>::new();
        let a = tape.constant(Tensor::ones(vec![2, 3])).unwrap();
        let b = tape.constant(Tensor::ones(vec![2, 3])).unwrap();
        assert!(matches!(tape.matmul(a, b), Err(TensorError::ShapeMismatch { .. })));
        let z = tape.constant(Tensor::zeros(vec![2])).unwrap();
        assert!(matches!(tape.log(z), Err(TensorError::Domain { .. })));
        assert!(matches!(
            tape.gather_rows(a, vec![0, 2]),
            Err(TensorError::IndexOutOfRange { index: 2, rows: 2 })
        ));
        let big = tape.constant(Tensor::filled(vec![1], 1e6)).unwrap();
        assert!(matches!(tape.exp(big), Err(TensorError::NonFinite { op: "exp" })));
        assert!(matches!(tape.backward(a), Err(TensorError::NonScalarLoss(_))));
    }

    #[test]
    fn tape_is_single_use() {
        let mut tape = Tape::<f64>::new();
        let x = tape.param(Tensor::ones(vec![2])).unwrap();
        let s = tape.sum(x).unwrap();
        tape.backward(s).unwrap();
        assert_eq!(tape.backward(s).unwrap_err(), TensorError::TapeConsumed);
        assert_eq!(tape.sum(x).unwrap_err(), TensorError::TapeConsumed);
    }

    #[test]
    fn row_broadcast_add_reduces_gradient() {
        let mut tape = Tape::<f64>::new();
        let x = tape.param(Tensor::ones(vec![3, 2])).unwrap();
        let b = tape.param(t(&[1, 2], &[0.5, -1.0])).unwrap();
        let y = tape.add(x, b).unwrap();
        assert_eq!(tape.value(y).data(), &[1.5, 0.0, 1.5, 0.0, 1.5, 0.0]);
        let s = tape.sum(y).unwrap();
        let g = tape.backward(s).unwrap();
        assert_eq!(g.get(b).unwrap().data(), &[3.0, 3.0]);
    }

    #[test]
    fn constants_get_no_gradient() {
        let mut tape = Tape::<f64>::new();
        let x = tape.param(Tensor::ones(vec![2])).unwrap();
        let c = tape.constant(Tensor::ones(vec![2])).unwrap();
        let y = tape.mul(x, c).unwrap();
        let s = tape.sum(y).unwrap();
        let g = tape.backward(s).unwrap();
        assert!(g.get(c).is_none());
        assert_eq!(g.len(), 1);
    }

    #[test]
    fn softplus_is_stable_for_large_inputs() {
        let mut tape = Tape::<f64>::new();
        let x = tape.param(Tensor::scalar(800.0)).unwrap();
        let y = tape.softplus(x).unwrap();
        assert!((tape.value(y).item() - 800.0).abs() < 1e-12);
        let g = tape.backward(y).unwrap();
        assert!((g.get(x).unwrap().item() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sigmoid_symmetry() {
        for z in [-30.0, -2.5, -1e-3, 0.0, 0.7, 4.0, 25.0] {
            assert!((sigmoid(z) + sigmoid(-z) - 1.0f64).abs() < 1e-12);
        }
    }
}
