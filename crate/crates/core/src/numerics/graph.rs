//! Reverse-mode automatic differentiation over [`Tensor`] values.
//!
//! A [`Graph`] is an append-only record of operations. Every backward rule is
//! itself expressed with graph operations, so the gradients returned by
//! [`Graph::grad_graph`] are ordinary [`Var`]s that can be differentiated
//! again. Gradient penalties on discriminator input-gradients rely on this.
//!
//! ```
//! use dlvsim::numerics::{Graph, Tensor};
//!
//! let g = Graph::new();
//! let x = g.leaf(Tensor::vector(vec![1.0, 2.0, 3.0]));
//! let y = x.mul(x).unwrap().sum();
//! let dx = g.grad(y, &[x]).unwrap();
//! assert_eq!(dx[0].data(), &[2.0, 4.0, 6.0]);
//! ```

use std::cell::RefCell;

use super::{NumericsError, Tensor};

/// Negative-side slope of [`Var::leaky_relu`].
pub const LEAKY_SLOPE: f64 = 0.2;

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    Transpose(usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Neg(usize),
    Scale(usize, f64),
    AddScalar(usize),
    Exp(usize),
    Log(usize),
    Tanh(usize),
    Sigmoid(usize),
    Softplus(usize),
    LeakyRelu(usize),
    Powf(usize, f64),
    SumAll(usize),
    SumAxis(usize),
    Broadcast(usize),
    SumTo(usize),
    Reshape(usize),
    Slice { x: usize, axis: usize, start: usize },
    Pad { x: usize, axis: usize, start: usize },
    Concat { parts: Vec<usize>, axis: usize },
}

impl Op {
    fn parents(&self) -> Vec<usize> {
        use Op::*;
        match self {
            Leaf => vec![],
            MatMul(a, b) | Add(a, b) | Sub(a, b) | Mul(a, b) => vec![*a, *b],
            Transpose(a) | Neg(a) | Scale(a, _) | AddScalar(a) | Exp(a) | Log(a) | Tanh(a) | Sigmoid(a)
            | Softplus(a) | LeakyRelu(a) | Powf(a, _) | SumAll(a) | SumAxis(a) | Broadcast(a) | SumTo(a)
            | Reshape(a) => vec![*a],
            Slice { x, .. } | Pad { x, .. } => vec![*x],
            Concat { parts, .. } => parts.clone(),
        }
    }
}

struct Node {
    value: Tensor,
    op: Op,
}

/// Operation record. Not `Sync`; one graph per thread.
#[derive(Default)]
pub struct Graph {
    nodes: RefCell<Vec<Node>>,
}

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy)]
pub struct Var<'g> {
    graph: &'g Graph,
    id: usize,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Var").field("id", &self.id).field("shape", &self.shape()).finish()
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Records an input. Leaves are differentiable when passed as `wrt`.
    pub fn leaf(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Leaf)
    }

    /// Same as [`Graph::leaf`]; reads better for values never differentiated.
    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Leaf)
    }

    fn push(&self, value: Tensor, op: Op) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { value, op });
        Var { graph: self, id: nodes.len() - 1 }
    }

    fn unary(&self, x: usize, op: Op, f: impl FnOnce(&Tensor) -> Result<Tensor, NumericsError>) -> Result<Var<'_>, NumericsError> {
        let v = {
            let nodes = self.nodes.borrow();
            f(&nodes[x].value)?
        };
        Ok(self.push(v, op))
    }

    fn binary(
        &self,
        a: usize,
        b: usize,
        op: Op,
        f: impl FnOnce(&Tensor, &Tensor) -> Result<Tensor, NumericsError>,
    ) -> Result<Var<'_>, NumericsError> {
        let v = {
            let nodes = self.nodes.borrow();
            f(&nodes[a].value, &nodes[b].value)?
        };
        Ok(self.push(v, op))
    }

    fn shape_of(&self, id: usize) -> Vec<usize> {
        self.nodes.borrow()[id].value.shape().to_vec()
    }

    /// Gradient values of scalar `output` with respect to each of `wrt`.
    pub fn grad(&self, output: Var<'_>, wrt: &[Var<'_>]) -> Result<Vec<Tensor>, NumericsError> {
        Ok(self.grad_graph(output, wrt)?.into_iter().map(|v| v.value()).collect())
    }

    /// Gradients of scalar `output` as recorded nodes, so they can be used in
    /// further differentiable computations. Inputs not reached from `output`
    /// receive zeros.
    pub fn grad_graph<'g>(&'g self, output: Var<'g>, wrt: &[Var<'g>]) -> Result<Vec<Var<'g>>, NumericsError> {
        let out = output.id;
        let out_shape = self.shape_of(out);
        if out_shape.iter().product::<usize>() != 1 {
            return Err(NumericsError::NonScalarOutput(out_shape));
        }
        let mut needs = vec![false; out + 1];
        for w in wrt {
            if w.id <= out {
                needs[w.id] = true;
            }
        }
        {
            let nodes = self.nodes.borrow();
            for i in 0..=out {
                if !needs[i] && nodes[i].op.parents().iter().any(|&p| needs[p]) {
                    needs[i] = true;
                }
            }
        }
        let mut grads: Vec<Option<Var<'g>>> = vec![None; out + 1];
        if needs[out] {
            grads[out] = Some(self.constant(Tensor::ones(&out_shape)));
        }
        for i in (0..=out).rev() {
            if !needs[i] {
                continue;
            }
            let Some(g) = grads[i] else { continue };
            let op = self.nodes.borrow()[i].op.clone();
            let parents = op.parents();
            if parents.is_empty() {
                continue;
            }
            let mask: Vec<bool> = parents.iter().map(|&p| needs[p]).collect();
            let contribs = self.backward(i, &op, g, &mask)?;
            for (p, c) in parents.into_iter().zip(contribs) {
                if let Some(c) = c {
                    grads[p] = Some(match grads[p] {
                        Some(acc) => acc.add(c)?,
                        None => c,
                    });
                }
            }
        }
        wrt.iter()
            .map(|w| match grads.get(w.id).copied().flatten() {
                Some(g) => Ok(g),
                None => Ok(self.constant(Tensor::zeros(&self.shape_of(w.id)))),
            })
            .collect()
    }

    /// Input-gradient contributions of node `id` given its output-gradient.
    fn backward<'g>(&'g self, id: usize, op: &Op, g: Var<'g>, mask: &[bool]) -> Result<Vec<Option<Var<'g>>>, NumericsError> {
        let var = |i: usize| Var { graph: self, id: i };
        let y = var(id);
        let want = |k: usize| mask[k];
        Ok(match *op {
            Op::Leaf => vec![],
            Op::MatMul(a, b) => {
                let ga = if want(0) { Some(g.matmul(var(b).t()?)?) } else { None };
                let gb = if want(1) { Some(var(a).t()?.matmul(g)?) } else { None };
                vec![ga, gb]
            }
            Op::Transpose(_) => vec![Some(g.t()?)],
            Op::Add(_, _) => vec![Some(g), Some(g)],
            Op::Sub(_, _) => vec![Some(g), if want(1) { Some(g.neg()) } else { None }],
            Op::Mul(a, b) => {
                let ga = if want(0) { Some(g.mul(var(b))?) } else { None };
                let gb = if want(1) { Some(g.mul(var(a))?) } else { None };
                vec![ga, gb]
            }
            Op::Neg(_) => vec![Some(g.neg())],
            Op::Scale(_, c) => vec![Some(g.scale(c))],
            Op::AddScalar(_) => vec![Some(g)],
            Op::Exp(_) => vec![Some(g.mul(y)?)],
            Op::Log(x) => vec![Some(g.mul(var(x).powf(-1.0))?)],
            Op::Tanh(_) => vec![Some(g.mul(y.mul(y)?.neg().add_scalar(1.0))?)],
            Op::Sigmoid(_) => vec![Some(g.mul(y.sub(y.mul(y)?)?)?)],
            Op::Softplus(x) => vec![Some(g.mul(var(x).sigmoid())?)],
            Op::LeakyRelu(x) => {
                let slope = var(x).value().map(|v| if v > 0.0 { 1.0 } else { LEAKY_SLOPE });
                vec![Some(g.mul(self.constant(slope))?)]
            }
            Op::Powf(x, p) => {
                let d = if p == 1.0 { self.constant(Tensor::ones(&var(x).shape())) } else { var(x).powf(p - 1.0).scale(p) };
                vec![Some(g.mul(d)?)]
            }
            Op::SumAll(x) | Op::SumAxis(x) => vec![Some(g.broadcast(&self.shape_of(x))?)],
            Op::Broadcast(x) => vec![Some(g.sum_to(&self.shape_of(x))?)],
            Op::SumTo(x) => vec![Some(g.broadcast(&self.shape_of(x))?)],
            Op::Reshape(x) => vec![Some(g.reshape(&self.shape_of(x))?)],
            Op::Slice { x, axis, start } => {
                let total = self.shape_of(x)[axis];
                vec![Some(g.pad(axis, start, total)?)]
            }
            Op::Pad { x, axis, start } => {
                let width = self.shape_of(x)[axis];
                vec![Some(g.slice(axis, start, start + width)?)]
            }
            Op::Concat { ref parts, axis } => {
                let mut offset = 0;
                let mut out = Vec::with_capacity(parts.len());
                for (k, &p) in parts.iter().enumerate() {
                    let w = self.shape_of(p)[axis];
                    out.push(if want(k) { Some(g.slice(axis, offset, offset + w)?) } else { None });
                    offset += w;
                }
                out
            }
        })
    }
}

impl<'g> Var<'g> {
    pub fn graph(&self) -> &'g Graph {
        self.graph
    }

    /// Copy of the node's value.
    pub fn value(&self) -> Tensor {
        self.graph.nodes.borrow()[self.id].value.clone()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.graph.shape_of(self.id)
    }

    /// Scalar value; errors if the node is not single-element.
    pub fn item(&self) -> Result<f64, NumericsError> {
        self.graph.nodes.borrow()[self.id].value.item()
    }

    /// A new leaf carrying this value, cut from the history.
    pub fn detach(&self) -> Var<'g> {
        self.graph.leaf(self.value())
    }

    fn same_graph(&self, other: &Var<'g>) {
        debug_assert!(std::ptr::eq(self.graph, other.graph), "operands from different graphs");
    }

    /// Inserts an explicit broadcast node when needed so elementwise nodes
    /// always see equal shapes.
    fn align(self, other: Var<'g>, op: &'static str) -> Result<(Var<'g>, Var<'g>), NumericsError> {
        self.same_graph(&other);
        let (sa, sb) = (self.shape(), other.shape());
        if sa == sb {
            return Ok((self, other));
        }
        let shape = Tensor::broadcast_shape(&sa, &sb).ok_or(NumericsError::ShapeMismatch { op, lhs: sa.clone(), rhs: sb.clone() })?;
        let a = if sa == shape { self } else { self.broadcast(&shape)? };
        let b = if sb == shape { other } else { other.broadcast(&shape)? };
        Ok((a, b))
    }

    pub fn matmul(self, rhs: Var<'g>) -> Result<Var<'g>, NumericsError> {
        self.same_graph(&rhs);
        self.graph.binary(self.id, rhs.id, Op::MatMul(self.id, rhs.id), |a, b| a.matmul(b))
    }

    pub fn t(self) -> Result<Var<'g>, NumericsError> {
        self.graph.unary(self.id, Op::Transpose(self.id), |a| a.transpose())
    }

    pub fn add(self, rhs: Var<'g>) -> Result<Var<'g>, NumericsError> {
        let (a, b) = self.align(rhs, "add")?;
        a.graph.binary(a.id, b.id, Op::Add(a.id, b.id), |x, y| x.add(y))
    }

    pub fn sub(self, rhs: Var<'g>) -> Result<Var<'g>, NumericsError> {
        let (a, b) = self.align(rhs, "sub")?;
        a.graph.binary(a.id, b.id, Op::Sub(a.id, b.id), |x, y| x.sub(y))
    }

    pub fn mul(self, rhs: Var<'g>) -> Result<Var<'g>, NumericsError> {
        let (a, b) = self.align(rhs, "mul")?;
        a.graph.binary(a.id, b.id, Op::Mul(a.id, b.id), |x, y| x.mul(y))
    }

    pub fn neg(self) -> Var<'g> {
        self.map_op(Op::Neg(self.id), |v| -v)
    }

    pub fn scale(self, c: f64) -> Var<'g> {
        self.map_op(Op::Scale(self.id, c), |v| v * c)
    }

    pub fn add_scalar(self, c: f64) -> Var<'g> {
        self.map_op(Op::AddScalar(self.id), |v| v + c)
    }

    fn map_op(self, op: Op, f: impl Fn(f64) -> f64) -> Var<'g> {
        self.graph.unary(self.id, op, |a| Ok(a.map(f))).expect("elementwise map is infallible")
    }

    pub fn exp(self) -> Var<'g> {
        self.map_op(Op::Exp(self.id), f64::exp)
    }

    pub fn log(self) -> Var<'g> {
        self.map_op(Op::Log(self.id), f64::ln)
    }

    pub fn tanh(self) -> Var<'g> {
        self.map_op(Op::Tanh(self.id), f64::tanh)
    }

    pub fn sigmoid(self) -> Var<'g> {
        self.map_op(Op::Sigmoid(self.id), sigmoid)
    }

    pub fn softplus(self) -> Var<'g> {
        self.map_op(Op::Softplus(self.id), softplus)
    }

    pub fn leaky_relu(self) -> Var<'g> {
        self.map_op(Op::LeakyRelu(self.id), leaky_relu)
    }

    pub fn powf(self, p: f64) -> Var<'g> {
        self.map_op(Op::Powf(self.id, p), move |v| v.powf(p))
    }

    pub fn sqrt(self) -> Var<'g> {
        self.powf(0.5)
    }

    /// Sum of all elements as a rank-0 scalar.
    pub fn sum(self) -> Var<'g> {
        self.graph.unary(self.id, Op::SumAll(self.id), |a| Ok(Tensor::scalar(a.sum()))).expect("sum is infallible")
    }

    pub fn mean(self) -> Var<'g> {
        let n = self.graph.nodes.borrow()[self.id].value.numel() as f64;
        self.sum().scale(1.0 / n)
    }

    /// Sum along `axis`, which is kept with size 1.
    pub fn sum_axis(self, axis: usize) -> Result<Var<'g>, NumericsError> {
        self.graph.unary(self.id, Op::SumAxis(self.id), |a| a.sum_axis(axis))
    }

    pub fn broadcast(self, shape: &[usize]) -> Result<Var<'g>, NumericsError> {
        self.graph.unary(self.id, Op::Broadcast(self.id), |a| a.broadcast_to(shape))
    }

    pub fn sum_to(self, shape: &[usize]) -> Result<Var<'g>, NumericsError> {
        self.graph.unary(self.id, Op::SumTo(self.id), |a| a.sum_to(shape))
    }

    pub fn reshape(self, shape: &[usize]) -> Result<Var<'g>, NumericsError> {
        self.graph.unary(self.id, Op::Reshape(self.id), |a| a.reshape(shape))
    }

    pub fn slice(self, axis: usize, start: usize, end: usize) -> Result<Var<'g>, NumericsError> {
        self.graph.unary(self.id, Op::Slice { x: self.id, axis, start }, |a| a.slice(axis, start, end))
    }

    pub fn pad(self, axis: usize, start: usize, total: usize) -> Result<Var<'g>, NumericsError> {
        self.graph.unary(self.id, Op::Pad { x: self.id, axis, start }, |a| a.pad(axis, start, total))
    }

    /// Euclidean norm of all elements.
    pub fn norm2(self) -> Result<Var<'g>, NumericsError> {
        Ok(self.mul(self)?.sum().sqrt())
    }

    /// Per-row Euclidean norms of a matrix, `[rows, 1]`. `eps` is added
    /// under the root so the derivative exists at zero.
    pub fn row_norms(self, eps: f64) -> Result<Var<'g>, NumericsError> {
        Ok(self.mul(self)?.sum_axis(1)?.add_scalar(eps).sqrt())
    }
}

/// Concatenates along `axis`.
pub fn concat<'g>(parts: &[Var<'g>], axis: usize) -> Result<Var<'g>, NumericsError> {
    let first = parts.first().ok_or(NumericsError::Invalid { op: "concat", msg: "no operands".into() })?;
    let graph = first.graph;
    let ids: Vec<usize> = parts.iter().map(|p| p.id).collect();
    let v = {
        let nodes = graph.nodes.borrow();
        let refs: Vec<&Tensor> = ids.iter().map(|&i| &nodes[i].value).collect();
        Tensor::concat(&refs, axis)?
    };
    Ok(graph.push(v, Op::Concat { parts: ids, axis }))
}

pub fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^v)` without overflow.
pub fn softplus(v: f64) -> f64 {
    v.max(0.0) + (-v.abs()).exp().ln_1p()
}

pub fn leaky_relu(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        LEAKY_SLOPE * v
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_of_squares_gradient() {
        let g = Graph::new();
        let x = g.leaf(Tensor::vector(vec![1.0, 2.0, 3.0]));
        let y = x.mul(x).unwrap().sum();
        let dx = g.grad(y, &[x]).unwrap();
        assert_eq!(dx[0].data(), &[2.0, 4.0, 6.0]);
    }

    #[test]
    fn log_exp_roundtrip() {
        let g = Graph::new();
        let x = g.leaf(Tensor::vector(vec![0.5, -1.2]));
        let y = x.exp().log();
        for (a, b) in y.value().data().iter().zip([0.5, -1.2]) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn norm2_pythagorean() {
        let g = Graph::new();
        let x = g.leaf(Tensor::vector(vec![3.0, 4.0]));
        assert_eq!(x.norm2().unwrap().item().unwrap(), 5.0);
    }

    #[test]
    fn non_scalar_output_is_rejected() {
        let g = Graph::new();
        let x = g.leaf(Tensor::vector(vec![1.0, 2.0]));
        let y = x.exp();
        assert!(matches!(g.grad(y, &[x]), Err(NumericsError::NonScalarOutput(_))));
    }

    #[test]
    fn unreached_input_gets_zero_gradient() {
        let g = Graph::new();
        let x = g.leaf(Tensor::vector(vec![1.0, 2.0]));
        let unused = g.leaf(Tensor::zeros(&[2, 2]));
        let y = x.sum();
        let grads = g.grad(y, &[x, unused]).unwrap();
        assert_eq!(grads[1], Tensor::zeros(&[2, 2]));
    }

    #[test]
    fn double_backprop_cubic() {
        // f = sum(x^3); |grad f|^2 = 9 x^4; its derivative is 36 x^3.
        let g = Graph::new();
        let x = g.leaf(Tensor::vector(vec![1.0]));
        let f = x.powf(3.0).sum();
        let df = g.grad_graph(f, &[x]).unwrap()[0];
        let pen = df.mul(df).unwrap().sum();
        let d2 = g.grad(pen, &[x]).unwrap();
        assert!((d2[0].data()[0] - 36.0).abs() < 1e-12);
    }

    #[test]
    fn broadcast_bias_gradient_sums_rows() {
        let g = Graph::new();
        let x = g.constant(Tensor::ones(&[4, 2]));
        let b = g.leaf(Tensor::vector(vec![0.0, 0.0]));
        let y = x.add(b).unwrap().sum();
        let db = g.grad(y, &[b]).unwrap();
        assert_eq!(db[0].data(), &[4.0, 4.0]);
    }

    #[test]
    fn softplus_is_stable() {
        assert!((softplus(1000.0) - 1000.0).abs() < 1e-12);
        assert!(softplus(-1000.0) >= 0.0 && softplus(-1000.0) < 1e-300);
        assert!((softplus(0.0) - std::f64::consts::LN_2).abs() < 1e-15);
    }
}
