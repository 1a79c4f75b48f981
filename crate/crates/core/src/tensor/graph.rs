use std::collections::HashMap;
use std::rc::Rc;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::sparse::{EdgePattern, SparseMatrix};
use super::{artanh, Result, Tensor, TensorError, ARTANH_CLAMP};

pub type NodeId = usize;

/// Operation kinds. Inputs are node ids that precede the consumer in the
/// node list, so the list order is already a topological order.
#[derive(Debug, Clone)]
pub enum Op {
    Input {
        name: String,
        trainable: bool,
    },
    Constant(Tensor),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Div(NodeId, NodeId),
    MatMul(NodeId, NodeId),
    SpMM {
        matrix: Rc<SparseMatrix>,
        x: NodeId,
    },
    SpMMDynamic {
        pattern: Rc<EdgePattern>,
        values: NodeId,
        x: NodeId,
    },
    GatherRows {
        table: NodeId,
        indices: Rc<Vec<usize>>,
    },
    ConcatCols(NodeId, NodeId),
    Reshape(NodeId),
    Tanh(NodeId),
    Artanh(NodeId),
    Relu(NodeId),
    LeakyRelu {
        x: NodeId,
        slope: f64,
    },
    Sigmoid(NodeId),
    Log(NodeId),
    Exp(NodeId),
    RowNormL2(NodeId),
    RowNormL1(NodeId),
    RowSum(NodeId),
    RowMaxDetached(NodeId),
    Softmax(NodeId),
    SegmentSoftmax {
        scores: NodeId,
        segments: Rc<Vec<usize>>,
    },
    Sum(NodeId),
    Mean(NodeId),
    Scale {
        x: NodeId,
        factor: NodeId,
    },
    ScaleConst {
        x: NodeId,
        k: f64,
    },
    AddConst {
        x: NodeId,
        k: f64,
    },
    Dropout {
        x: NodeId,
        keep: f64,
    },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Input { .. } => "input",
            Op::Constant(_) => "constant",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Div(..) => "div",
            Op::MatMul(..) => "matmul",
            Op::SpMM { .. } => "spmm",
            Op::SpMMDynamic { .. } => "spmm_dynamic",
            Op::GatherRows { .. } => "gather_rows",
            Op::ConcatCols(..) => "concat_cols",
            Op::Reshape(_) => "reshape",
            Op::Tanh(_) => "tanh",
            Op::Artanh(_) => "artanh",
            Op::Relu(_) => "relu",
            Op::LeakyRelu { .. } => "leaky_relu",
            Op::Sigmoid(_) => "sigmoid",
            Op::Log(_) => "log",
            Op::Exp(_) => "exp",
            Op::RowNormL2(_) => "row_norm_l2",
            Op::RowNormL1(_) => "row_norm_l1",
            Op::RowSum(_) => "row_sum",
            Op::RowMaxDetached(_) => "row_max",
            Op::Softmax(_) => "softmax",
            Op::SegmentSoftmax { .. } => "segment_softmax",
            Op::Sum(_) => "sum",
            Op::Mean(_) => "mean",
            Op::Scale { .. } => "scale",
            Op::ScaleConst { .. } => "scale_const",
            Op::AddConst { .. } => "add_const",
            Op::Dropout { .. } => "dropout",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalMode {
    /// Dropout active, masks drawn from the given seed.
    Train {
        seed: u64,
    },
    Eval,
}

#[derive(Debug, Default)]
pub struct Graph {
    ops: Vec<Op>,
    shapes: Vec<Vec<usize>>,
    outputs: Vec<(String, NodeId)>,
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn shape(&self, id: NodeId) -> &[usize] {
        &self.shapes[id]
    }

    pub fn op(&self, id: NodeId) -> &Op {
        &self.ops[id]
    }

    pub fn mark_output(&mut self, name: &str, id: NodeId) {
        self.outputs.push((name.to_string(), id));
    }

    pub fn outputs(&self) -> &[(String, NodeId)] {
        &self.outputs
    }

    /// Names of all trainable inputs, in declaration order.
    pub fn trainable_inputs(&self) -> Vec<String> {
        self.ops
            .iter()
            .filter_map(|op| match op {
                Op::Input {
                    name,
                    trainable: true,
                } => Some(name.clone()),
                _ => None,
            })
            .collect()
    }

    fn push(&mut self, op: Op, shape: Vec<usize>) -> NodeId {
        self.ops.push(op);
        self.shapes.push(shape);
        self.ops.len() - 1
    }

    fn mismatch(&self, op: &'static str, details: String) -> TensorError {
        TensorError::ShapeMismatch {
            node: self.ops.len(),
            op,
            details,
        }
    }

    fn rc(&self, id: NodeId) -> (usize, usize) {
        let s = &self.shapes[id];
        if s.len() == 2 {
            (s[0], s[1])
        } else {
            (1, s[0])
        }
    }

    pub fn input(&mut self, name: &str, shape: Vec<usize>, trainable: bool) -> NodeId {
        self.push(
            Op::Input {
                name: name.to_string(),
                trainable,
            },
            shape,
        )
    }

    pub fn constant(&mut self, t: Tensor) -> NodeId {
        let shape = t.shape().to_vec();
        self.push(Op::Constant(t), shape)
    }

    fn addsub_shape(&self, op: &'static str, a: NodeId, b: NodeId) -> Result<Vec<usize>> {
        let (sa, sb) = (&self.shapes[a], &self.shapes[b]);
        if sa == sb || sb == &[1] {
            return Ok(sa.clone());
        }
        // bias broadcast: [n,m] + [m]
        if sa.len() == 2 && sb.len() == 1 && sa[1] == sb[0] {
            return Ok(sa.clone());
        }
        // column broadcast: [n,m] + [n,1]
        if sa.len() == 2 && sb.len() == 2 && sa[0] == sb[0] && sb[1] == 1 {
            return Ok(sa.clone());
        }
        Err(self.mismatch(op, format!("{sa:?} vs {sb:?}")))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let s = self.addsub_shape("add", a, b)?;
        Ok(self.push(Op::Add(a, b), s))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let s = self.addsub_shape("sub", a, b)?;
        Ok(self.push(Op::Sub(a, b), s))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        if self.shapes[a] != self.shapes[b] {
            return Err(self.mismatch(
                "mul",
                format!("{:?} vs {:?}", self.shapes[a], self.shapes[b]),
            ));
        }
        let s = self.shapes[a].clone();
        Ok(self.push(Op::Mul(a, b), s))
    }

    /// Elementwise division; denominator may be same-shape, a per-row
    /// column [n,1], or a scalar [1].
    pub fn div(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (sa, sb) = (&self.shapes[a], &self.shapes[b]);
        let ok = sa == sb
            || sb == &[1]
            || (sa.len() == 2 && sb.len() == 2 && sb[0] == sa[0] && sb[1] == 1);
        if !ok {
            return Err(self.mismatch("div", format!("{sa:?} vs {sb:?}")));
        }
        let s = sa.clone();
        Ok(self.push(Op::Div(a, b), s))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ra, ca) = self.rc(a);
        let (rb, cb) = self.rc(b);
        if ca != rb || self.shapes[b].len() != 2 {
            return Err(self.mismatch(
                "matmul",
                format!("{:?} x {:?}", self.shapes[a], self.shapes[b]),
            ));
        }
        let shape = if self.shapes[a].len() == 2 {
            vec![ra, cb]
        } else {
            vec![cb]
        };
        Ok(self.push(Op::MatMul(a, b), shape))
    }

    pub fn spmm(&mut self, matrix: Rc<SparseMatrix>, x: NodeId) -> Result<NodeId> {
        let (rx, cx) = self.rc(x);
        if rx != matrix.n_cols {
            return Err(self.mismatch(
                "spmm",
                format!("matrix cols {} vs x rows {rx}", matrix.n_cols),
            ));
        }
        let shape = vec![matrix.n_rows, cx];
        Ok(self.push(Op::SpMM { matrix, x }, shape))
    }

    pub fn spmm_dynamic(
        &mut self,
        pattern: Rc<EdgePattern>,
        values: NodeId,
        x: NodeId,
    ) -> Result<NodeId> {
        let (rx, cx) = self.rc(x);
        if rx != pattern.n_cols || self.shapes[values] != [pattern.edges.len()] {
            return Err(self.mismatch(
                "spmm_dynamic",
                format!(
                    "pattern {}x{} ({} edges), values {:?}, x {:?}",
                    pattern.n_rows,
                    pattern.n_cols,
                    pattern.edges.len(),
                    self.shapes[values],
                    self.shapes[x]
                ),
            ));
        }
        let shape = vec![pattern.n_rows, cx];
        Ok(self.push(Op::SpMMDynamic { pattern, values, x }, shape))
    }

    pub fn gather_rows(&mut self, table: NodeId, indices: Rc<Vec<usize>>) -> Result<NodeId> {
        let (rt, ct) = self.rc(table);
        if self.shapes[table].len() != 2 {
            return Err(self.mismatch("gather_rows", "table must be rank 2".into()));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= rt) {
            return Err(self.mismatch("gather_rows", format!("index {bad} >= {rt} rows")));
        }
        let shape = vec![indices.len(), ct];
        Ok(self.push(Op::GatherRows { table, indices }, shape))
    }

    pub fn concat_cols(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ra, ca) = self.rc(a);
        let (rb, cb) = self.rc(b);
        if ra != rb || self.shapes[a].len() != self.shapes[b].len() {
            return Err(self.mismatch(
                "concat_cols",
                format!("{:?} vs {:?}", self.shapes[a], self.shapes[b]),
            ));
        }
        let shape = if self.shapes[a].len() == 2 {
            vec![ra, ca + cb]
        } else {
            vec![ca + cb]
        };
        Ok(self.push(Op::ConcatCols(a, b), shape))
    }

    fn unary(&mut self, op: Op, x: NodeId) -> NodeId {
        let s = self.shapes[x].clone();
        self.push(op, s)
    }

    /// Reinterpret x with a new shape of equal element count.
    pub fn reshape(&mut self, x: NodeId, shape: Vec<usize>) -> Result<NodeId> {
        let n: usize = self.shapes[x].iter().product();
        let m: usize = shape.iter().product();
        if n != m || shape.is_empty() || shape.len() > 2 {
            return Err(self.mismatch("reshape", format!("{:?} -> {shape:?}", self.shapes[x])));
        }
        Ok(self.push(Op::Reshape(x), shape))
    }

    pub fn tanh(&mut self, x: NodeId) -> NodeId {
        self.unary(Op::Tanh(x), x)
    }

    pub fn artanh(&mut self, x: NodeId) -> NodeId {
        self.unary(Op::Artanh(x), x)
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        self.unary(Op::Relu(x), x)
    }

    pub fn leaky_relu(&mut self, x: NodeId, slope: f64) -> NodeId {
        self.unary(Op::LeakyRelu { x, slope }, x)
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        self.unary(Op::Sigmoid(x), x)
    }

    pub fn log(&mut self, x: NodeId) -> NodeId {
        self.unary(Op::Log(x), x)
    }

    pub fn exp(&mut self, x: NodeId) -> NodeId {
        self.unary(Op::Exp(x), x)
    }

    pub fn neg(&mut self, x: NodeId) -> NodeId {
        self.scale_const(x, -1.0)
    }

    fn rowred_shape(&self, x: NodeId) -> Vec<usize> {
        if self.shapes[x].len() == 2 {
            vec![self.shapes[x][0], 1]
        } else {
            vec![1]
        }
    }

    /// Per-row Euclidean norm, keepdim: [n,m] -> [n,1], [m] -> [1].
    pub fn row_norm_l2(&mut self, x: NodeId) -> NodeId {
        let s = self.rowred_shape(x);
        self.push(Op::RowNormL2(x), s)
    }

    pub fn row_norm_l1(&mut self, x: NodeId) -> NodeId {
        let s = self.rowred_shape(x);
        self.push(Op::RowNormL1(x), s)
    }

    pub fn row_sum(&mut self, x: NodeId) -> NodeId {
        let s = self.rowred_shape(x);
        self.push(Op::RowSum(x), s)
    }

    /// Per-row max with no gradient; used for softmax/log-sum-exp shifts
    /// where the shift cancels analytically.
    pub fn row_max_detached(&mut self, x: NodeId) -> NodeId {
        let s = self.rowred_shape(x);
        self.push(Op::RowMaxDetached(x), s)
    }

    pub fn softmax(&mut self, x: NodeId) -> NodeId {
        self.unary(Op::Softmax(x), x)
    }

    /// Softmax within contiguous segments of a rank-1 score vector.
    /// `segments[i]` is the group id of element i; ids must be sorted.
    pub fn segment_softmax(&mut self, scores: NodeId, segments: Rc<Vec<usize>>) -> Result<NodeId> {
        if self.shapes[scores] != [segments.len()] {
            return Err(self.mismatch(
                "segment_softmax",
                format!(
                    "{:?} vs {} segment ids",
                    self.shapes[scores],
                    segments.len()
                ),
            ));
        }
        if segments.windows(2).any(|w| w[1] < w[0]) {
            return Err(self.mismatch("segment_softmax", "segment ids not sorted".into()));
        }
        let s = self.shapes[scores].clone();
        Ok(self.push(Op::SegmentSoftmax { scores, segments }, s))
    }

    pub fn sum(&mut self, x: NodeId) -> NodeId {
        self.push(Op::Sum(x), vec![1])
    }

    pub fn mean(&mut self, x: NodeId) -> NodeId {
        self.push(Op::Mean(x), vec![1])
    }

    /// Broadcast-scale: multiply x by a per-row column [n,1] or scalar [1].
    pub fn scale(&mut self, x: NodeId, factor: NodeId) -> Result<NodeId> {
        let sf = &self.shapes[factor];
        let ok = sf == &[1]
            || (self.shapes[x].len() == 2
                && sf.len() == 2
                && sf[0] == self.shapes[x][0]
                && sf[1] == 1);
        if !ok {
            return Err(self.mismatch("scale", format!("x {:?}, factor {:?}", self.shapes[x], sf)));
        }
        let s = self.shapes[x].clone();
        Ok(self.push(Op::Scale { x, factor }, s))
    }

    pub fn scale_const(&mut self, x: NodeId, k: f64) -> NodeId {
        self.unary(Op::ScaleConst { x, k }, x)
    }

    pub fn add_const(&mut self, x: NodeId, k: f64) -> NodeId {
        self.unary(Op::AddConst { x, k }, x)
    }

    pub fn dropout(&mut self, x: NodeId, keep: f64) -> Result<NodeId> {
        if !(keep > 0.0 && keep <= 1.0) {
            return Err(self.mismatch("dropout", format!("keep probability {keep}")));
        }
        Ok(self.unary(Op::Dropout { x, keep }, x))
    }

    /// Evaluate every node against the given input bindings.
    pub fn forward(
        &self,
        bindings: &HashMap<String, Tensor>,
        mode: EvalMode,
    ) -> Result<Evaluation> {
        let mut values: Vec<Tensor> = Vec::with_capacity(self.ops.len());
        let mut masks: HashMap<NodeId, Vec<f64>> = HashMap::new();
        for (id, op) in self.ops.iter().enumerate() {
            let out = self.eval_node(id, op, &values, mode, &mut masks, bindings)?;
            if !out.all_finite() {
                return Err(TensorError::NonFinite {
                    node: id,
                    op: op.name(),
                });
            }
            values.push(out);
        }
        Ok(Evaluation {
            values,
            masks,
            mode,
        })
    }

    fn eval_node(
        &self,
        id: NodeId,
        op: &Op,
        v: &[Tensor],
        mode: EvalMode,
        masks: &mut HashMap<NodeId, Vec<f64>>,
        bindings: &HashMap<String, Tensor>,
    ) -> Result<Tensor> {
        let out = match op {
            Op::Input { name, .. } => {
                let t = bindings
                    .get(name)
                    .ok_or_else(|| TensorError::UnboundInput(name.clone()))?;
                if t.shape() != self.shapes[id].as_slice() {
                    return Err(TensorError::BadBinding {
                        name: name.clone(),
                        got: t.shape().to_vec(),
                        want: self.shapes[id].clone(),
                    });
                }
                t.clone()
            }
            Op::Constant(t) => t.clone(),
            Op::Add(a, b) => bcast_zip(&v[*a], &v[*b], |x, y| x + y),
            Op::Sub(a, b) => bcast_zip(&v[*a], &v[*b], |x, y| x - y),
            Op::Mul(a, b) => {
                let mut t = v[*a].clone();
                for (x, y) in t.data_mut().iter_mut().zip(v[*b].data()) {
                    *x *= y;
                }
                t
            }
            Op::Div(a, b) => div_bcast(&v[*a], &v[*b]),
            Op::MatMul(a, b) => dense_matmul(&v[*a], &v[*b]),
            Op::SpMM { matrix, x } => matrix.matmul(&v[*x]),
            Op::SpMMDynamic { pattern, values, x } => {
                let vals = &v[*values];
                let xs = &v[*x];
                let d = xs.cols();
                let mut out = vec![0.0; pattern.n_rows * d];
                for (e, &(r, c)) in pattern.edges.iter().enumerate() {
                    let w = vals.data()[e];
                    let src = xs.row(c);
                    let dst = &mut out[r * d..(r + 1) * d];
                    for k in 0..d {
                        dst[k] += w * src[k];
                    }
                }
                Tensor::new(vec![pattern.n_rows, d], out).unwrap()
            }
            Op::GatherRows { table, indices } => {
                let t = &v[*table];
                let d = t.cols();
                let mut out = Vec::with_capacity(indices.len() * d);
                for &i in indices.iter() {
                    out.extend_from_slice(t.row(i));
                }
                Tensor::new(vec![indices.len(), d], out).unwrap()
            }
            Op::ConcatCols(a, b) => {
                let (ta, tb) = (&v[*a], &v[*b]);
                let n = ta.rows();
                let mut out = Vec::with_capacity(ta.len() + tb.len());
                for i in 0..n {
                    out.extend_from_slice(ta.row(i));
                    out.extend_from_slice(tb.row(i));
                }
                Tensor::new(self.shapes[id].clone(), out).unwrap()
            }
            Op::Reshape(x) => Tensor::new(self.shapes[id].clone(), v[*x].data().to_vec()).unwrap(),
            Op::Tanh(x) => map(&v[*x], f64::tanh),
            Op::Artanh(x) => map(&v[*x], artanh),
            Op::Relu(x) => map(&v[*x], |a| a.max(0.0)),
            Op::LeakyRelu { x, slope } => {
                let s = *slope;
                map(&v[*x], move |a| if a > 0.0 { a } else { s * a })
            }
            Op::Sigmoid(x) => map(&v[*x], |a| 1.0 / (1.0 + (-a).exp())),
            Op::Log(x) => map(&v[*x], f64::ln),
            Op::Exp(x) => map(&v[*x], f64::exp),
            Op::RowNormL2(x) => row_reduce(&v[*x], |r| r.iter().map(|a| a * a).sum::<f64>().sqrt()),
            Op::RowNormL1(x) => row_reduce(&v[*x], |r| r.iter().map(|a| a.abs()).sum()),
            Op::RowSum(x) => row_reduce(&v[*x], |r| r.iter().sum()),
            Op::RowMaxDetached(x) => row_reduce(&v[*x], |r| {
                r.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            }),
            Op::Softmax(x) => {
                let t = &v[*x];
                let mut out = t.clone();
                let c = t.cols();
                for i in 0..t.rows() {
                    softmax_in_place(&mut out.data_mut()[i * c..(i + 1) * c]);
                }
                out
            }
            Op::SegmentSoftmax { scores, segments } => {
                let mut out = v[*scores].clone();
                let data = out.data_mut();
                let mut start = 0;
                while start < segments.len() {
                    let mut end = start + 1;
                    while end < segments.len() && segments[end] == segments[start] {
                        end += 1;
                    }
                    softmax_in_place(&mut data[start..end]);
                    start = end;
                }
                out
            }
            Op::Sum(x) => Tensor::scalar(v[*x].data().iter().sum()),
            Op::Mean(x) => Tensor::scalar(v[*x].data().iter().sum::<f64>() / v[*x].len() as f64),
            Op::Scale { x, factor } => {
                let (t, f) = (&v[*x], &v[*factor]);
                let mut out = t.clone();
                let c = t.cols();
                for i in 0..t.rows() {
                    let fi = if f.is_scalar() {
                        f.data()[0]
                    } else {
                        f.data()[i]
                    };
                    for val in &mut out.data_mut()[i * c..(i + 1) * c] {
                        *val *= fi;
                    }
                }
                out
            }
            Op::ScaleConst { x, k } => {
                let k = *k;
                map(&v[*x], move |a| a * k)
            }
            Op::AddConst { x, k } => {
                let k = *k;
                map(&v[*x], move |a| a + k)
            }
            Op::Dropout { x, keep } => {
                let t = &v[*x];
                match mode {
                    EvalMode::Eval => t.clone(),
                    EvalMode::Train { seed } => {
                        let mut rng = ChaCha8Rng::seed_from_u64(
                            seed ^ (id as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15),
                        );
                        let mask: Vec<f64> = (0..t.len())
                            .map(|_| if rng.gen::<f64>() < *keep { 1.0 } else { 0.0 })
                            .collect();
                        let mut out = t.clone();
                        for (o, m) in out.data_mut().iter_mut().zip(&mask) {
                            *o *= m / keep;
                        }
                        masks.insert(id, mask);
                        out
                    }
                }
            }
        };
        Ok(out)
    }

    /// Reverse pass from a scalar seed node. Gradients accumulate by
    /// addition across fan-out and are reported per input name.
    pub fn backward(&self, eval: &Evaluation, seed: NodeId) -> Result<Gradients> {
        if eval.values.len() != self.ops.len() {
            return Err(TensorError::Invalid(
                "evaluation does not match this graph".into(),
            ));
        }
        if !eval.values[seed].is_scalar() {
            return Err(TensorError::NonScalarSeed(
                eval.values[seed].shape().to_vec(),
            ));
        }
        let mut adj: Vec<Option<Tensor>> = vec![None; self.ops.len()];
        adj[seed] = Some(Tensor::scalar(1.0));
        for id in (0..self.ops.len()).rev() {
            let g = match adj[id].take() {
                Some(g) => g,
                None => continue,
            };
            self.backprop_node(id, &g, eval, &mut adj);
            adj[id] = Some(g);
        }
        let mut by_input = HashMap::new();
        for (id, op) in self.ops.iter().enumerate() {
            if let Op::Input { name, .. } = op {
                let g = adj[id]
                    .clone()
                    .unwrap_or_else(|| Tensor::zeros(self.shapes[id].clone()));
                by_input.insert(name.clone(), g);
            }
        }
        Ok(Gradients {
            by_input,
            by_node: adj,
        })
    }

    fn backprop_node(&self, id: NodeId, g: &Tensor, eval: &Evaluation, adj: &mut [Option<Tensor>]) {
        let v = &eval.values;
        match &self.ops[id] {
            Op::Input { .. } | Op::Constant(_) | Op::RowMaxDetached(_) => {}
            Op::Add(a, b) => {
                accumulate(adj, *a, &self.shapes[*a], g.clone());
                accumulate(adj, *b, &self.shapes[*b], reduce_to(g, &self.shapes[*b]));
            }
            Op::Sub(a, b) => {
                accumulate(adj, *a, &self.shapes[*a], g.clone());
                let mut gb = reduce_to(g, &self.shapes[*b]);
                for x in gb.data_mut() {
                    *x = -*x;
                }
                accumulate(adj, *b, &self.shapes[*b], gb);
            }
            Op::Mul(a, b) => {
                let mut ga = g.clone();
                for (x, y) in ga.data_mut().iter_mut().zip(v[*b].data()) {
                    *x *= y;
                }
                accumulate(adj, *a, &self.shapes[*a], ga);
                let mut gb = g.clone();
                for (x, y) in gb.data_mut().iter_mut().zip(v[*a].data()) {
                    *x *= y;
                }
                accumulate(adj, *b, &self.shapes[*b], gb);
            }
            Op::Div(a, b) => {
                let ga = div_bcast(g, &v[*b]);
                accumulate(adj, *a, &self.shapes[*a], ga);
                // d/db (a/b) = -a/b²
                let mut tmp = div_bcast(&v[*a], &v[*b]);
                let tmp2 = div_bcast(&tmp, &v[*b]);
                tmp = tmp2;
                for (x, y) in tmp.data_mut().iter_mut().zip(g.data()) {
                    *x *= -y;
                }
                accumulate(adj, *b, &self.shapes[*b], reduce_to(&tmp, &self.shapes[*b]));
            }
            Op::MatMul(a, b) => {
                let ga = matmul_nt(g, &v[*b], self.rc(*a));
                accumulate(adj, *a, &self.shapes[*a], ga);
                let gb = matmul_tn(&v[*a], g, self.rc(*b));
                accumulate(adj, *b, &self.shapes[*b], gb);
            }
            Op::SpMM { matrix, x } => {
                let gx = matrix.matmul_transpose(g);
                let gx = reshape_like(gx, &self.shapes[*x]);
                accumulate(adj, *x, &self.shapes[*x], gx);
            }
            Op::SpMMDynamic { pattern, values, x } => {
                let xs = &v[*x];
                let vals = &v[*values];
                let d = xs.cols();
                let mut gvals = vec![0.0; pattern.edges.len()];
                let mut gx = vec![0.0; xs.len()];
                for (e, &(r, c)) in pattern.edges.iter().enumerate() {
                    let grow = g.row(r);
                    let xrow = xs.row(c);
                    let mut dot = 0.0;
                    for k in 0..d {
                        dot += grow[k] * xrow[k];
                        gx[c * d + k] += vals.data()[e] * grow[k];
                    }
                    gvals[e] = dot;
                }
                accumulate(adj, *values, &self.shapes[*values], Tensor::vector(gvals));
                accumulate(
                    adj,
                    *x,
                    &self.shapes[*x],
                    Tensor::new(self.shapes[*x].clone(), gx).unwrap(),
                );
            }
            Op::GatherRows { table, indices } => {
                let d = g.cols();
                let mut gt = Tensor::zeros(self.shapes[*table].clone());
                for (i, &idx) in indices.iter().enumerate() {
                    let src = g.row(i);
                    let dst = &mut gt.data_mut()[idx * d..(idx + 1) * d];
                    for k in 0..d {
                        dst[k] += src[k];
                    }
                }
                accumulate(adj, *table, &self.shapes[*table], gt);
            }
            Op::ConcatCols(a, b) => {
                let (ra, ca) = self.rc(*a);
                let (_, cb) = self.rc(*b);
                let mut ga = Tensor::zeros(self.shapes[*a].clone());
                let mut gb = Tensor::zeros(self.shapes[*b].clone());
                for i in 0..ra {
                    let grow = g.row(i);
                    ga.data_mut()[i * ca..(i + 1) * ca].copy_from_slice(&grow[..ca]);
                    gb.data_mut()[i * cb..(i + 1) * cb].copy_from_slice(&grow[ca..ca + cb]);
                }
                accumulate(adj, *a, &self.shapes[*a], ga);
                accumulate(adj, *b, &self.shapes[*b], gb);
            }
            Op::Reshape(x) => {
                let gx = Tensor::new(self.shapes[*x].clone(), g.data().to_vec()).unwrap();
                accumulate(adj, *x, &self.shapes[*x], gx);
            }
            Op::Tanh(x) => {
                let y = &v[id];
                let gx = zip3(g, y, |gi, yi| gi * (1.0 - yi * yi));
                accumulate(adj, *x, &self.shapes[*x], gx);
            }
            Op::Artanh(x) => {
                let gx = zip3(g, &v[*x], |gi, xi| {
                    let xc = xi.clamp(-ARTANH_CLAMP, ARTANH_CLAMP);
                    gi / (1.0 - xc * xc)
                });
                accumulate(adj, *x, &self.shapes[*x], gx);
            }
            Op::Relu(x) => {
                let gx = zip3(g, &v[*x], |gi, xi| if xi > 0.0 { gi } else { 0.0 });
                accumulate(adj, *x, &self.shapes[*x], gx);
            }
            Op::LeakyRelu { x, slope } => {
                let s = *slope;
                let gx = zip3(g, &v[*x], move |gi, xi| if xi > 0.0 { gi } else { s * gi });
                accumulate(adj, *x, &self.shapes[*x], gx);
            }
            Op::Sigmoid(x) => {
                let gx = zip3(g, &v[id], |gi, yi| gi * yi * (1.0 - yi));
                accumulate(adj, *x, &self.shapes[*x], gx);
            }
            Op::Log(x) => {
                let gx = zip3(g, &v[*x], |gi, xi| gi / xi);
                accumulate(adj, *x, &self.shapes[*x], gx);
            }
            Op::Exp(x) => {
                let gx = zip3(g, &v[id], |gi, yi| gi * yi);
                accumulate(adj, *x, &self.shapes[*x], gx);
            }
            Op::RowNormL2(x) => {
                // d‖r‖/dr = r/‖r‖, subgradient 0 at r = 0
                let xs = &v[*x];
                let norms = &v[id];
                let mut gx = Tensor::zeros(self.shapes[*x].clone());
                let c = xs.cols();
                for i in 0..xs.rows() {
                    let n = norms.data()[i];
                    if n > 0.0 {
                        let gi = g.data()[i];
                        let row = xs.row(i);
                        let dst = &mut gx.data_mut()[i * c..(i + 1) * c];
                        for k in 0..c {
                            dst[k] = gi * row[k] / n;
                        }
                    }
                }
                accumulate(adj, *x, &self.shapes[*x], gx);
            }
            Op::RowNormL1(x) => {
                let xs = &v[*x];
                let mut gx = Tensor::zeros(self.shapes[*x].clone());
                let c = xs.cols();
                for i in 0..xs.rows() {
                    let gi = g.data()[i];
                    let row = xs.row(i);
                    let dst = &mut gx.data_mut()[i * c..(i + 1) * c];
                    for k in 0..c {
                        dst[k] = gi * sign0(row[k]);
                    }
                }
                accumulate(adj, *x, &self.shapes[*x], gx);
            }
            Op::RowSum(x) => {
                let mut gx = Tensor::zeros(self.shapes[*x].clone());
                let c = gx.cols();
                for i in 0..gx.rows() {
                    let gi = g.data()[i];
                    for val in &mut gx.data_mut()[i * c..(i + 1) * c] {
                        *val = gi;
                    }
                }
                accumulate(adj, *x, &self.shapes[*x], gx);
            }
            Op::Softmax(x) => {
                let y = &v[id];
                let mut gx = Tensor::zeros(self.shapes[*x].clone());
                let c = y.cols();
                for i in 0..y.rows() {
                    softmax_backward(
                        &g.data()[i * c..(i + 1) * c],
                        y.row(i),
                        &mut gx.data_mut()[i * c..(i + 1) * c],
                    );
                }
                accumulate(adj, *x, &self.shapes[*x], gx);
            }
            Op::SegmentSoftmax { scores, segments } => {
                let y = &v[id];
                let mut gx = Tensor::zeros(self.shapes[*scores].clone());
                let mut start = 0;
                while start < segments.len() {
                    let mut end = start + 1;
                    while end < segments.len() && segments[end] == segments[start] {
                        end += 1;
                    }
                    softmax_backward(
                        &g.data()[start..end],
                        &y.data()[start..end],
                        &mut gx.data_mut()[start..end],
                    );
                    start = end;
                }
                accumulate(adj, *scores, &self.shapes[*scores], gx);
            }
            Op::Sum(x) => {
                let gi = g.data()[0];
                let mut gx = Tensor::zeros(self.shapes[*x].clone());
                gx.data_mut().fill(gi);
                accumulate(adj, *x, &self.shapes[*x], gx);
            }
            Op::Mean(x) => {
                let n: usize = self.shapes[*x].iter().product();
                let gi = g.data()[0] / n as f64;
                let mut gx = Tensor::zeros(self.shapes[*x].clone());
                gx.data_mut().fill(gi);
                accumulate(adj, *x, &self.shapes[*x], gx);
            }
            Op::Scale { x, factor } => {
                let xs = &v[*x];
                let f = &v[*factor];
                let c = xs.cols();
                let mut gx = Tensor::zeros(self.shapes[*x].clone());
                let mut gf = Tensor::zeros(self.shapes[*factor].clone());
                for i in 0..xs.rows() {
                    let fi = if f.is_scalar() {
                        f.data()[0]
                    } else {
                        f.data()[i]
                    };
                    let grow = &g.data()[i * c..(i + 1) * c];
                    let xrow = xs.row(i);
                    let dst = &mut gx.data_mut()[i * c..(i + 1) * c];
                    let mut dot = 0.0;
                    for k in 0..c {
                        dst[k] = grow[k] * fi;
                        dot += grow[k] * xrow[k];
                    }
                    if f.is_scalar() {
                        gf.data_mut()[0] += dot;
                    } else {
                        gf.data_mut()[i] += dot;
                    }
                }
                accumulate(adj, *x, &self.shapes[*x], gx);
                accumulate(adj, *factor, &self.shapes[*factor], gf);
            }
            Op::ScaleConst { x, k } => {
                let k = *k;
                let gx = map(g, move |a| a * k);
                accumulate(adj, *x, &self.shapes[*x], gx);
            }
            Op::AddConst { x, .. } => {
                accumulate(adj, *x, &self.shapes[*x], g.clone());
            }
            Op::Dropout { x, keep } => {
                let gx = match eval.masks.get(&id) {
                    Some(mask) => {
                        let mut gx = g.clone();
                        for (gi, m) in gx.data_mut().iter_mut().zip(mask) {
                            *gi *= m / keep;
                        }
                        gx
                    }
                    None => g.clone(),
                };
                accumulate(adj, *x, &self.shapes[*x], gx);
            }
        }
    }
}

/// Result of a forward pass: one tensor per node.
#[derive(Debug)]
pub struct Evaluation {
    values: Vec<Tensor>,
    masks: HashMap<NodeId, Vec<f64>>,
    pub mode: EvalMode,
}

impl Evaluation {
    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.values[id]
    }

    pub fn output<'a>(&'a self, graph: &Graph, name: &str) -> Option<&'a Tensor> {
        graph
            .outputs()
            .iter()
            .find(|(n, _)| n == name)
            .map(|&(_, id)| &self.values[id])
    }
}

#[derive(Debug)]
pub struct Gradients {
    by_input: HashMap<String, Tensor>,
    by_node: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn input(&self, name: &str) -> Option<&Tensor> {
        self.by_input.get(name)
    }

    pub fn node(&self, id: NodeId) -> Option<&Tensor> {
        self.by_node[id].as_ref()
    }

    pub fn inputs(&self) -> &HashMap<String, Tensor> {
        &self.by_input
    }
}

fn accumulate(adj: &mut [Option<Tensor>], id: NodeId, shape: &[usize], g: Tensor) {
    debug_assert_eq!(g.shape(), shape);
    match &mut adj[id] {
        Some(existing) => {
            for (x, y) in existing.data_mut().iter_mut().zip(g.data()) {
                *x += y;
            }
        }
        None => adj[id] = Some(g),
    }
}

fn map<F: Fn(f64) -> f64>(t: &Tensor, f: F) -> Tensor {
    let mut out = t.clone();
    for v in out.data_mut() {
        *v = f(*v);
    }
    out
}

fn zip3<F: Fn(f64, f64) -> f64>(a: &Tensor, b: &Tensor, f: F) -> Tensor {
    let mut out = a.clone();
    for (x, y) in out.data_mut().iter_mut().zip(b.data()) {
        *x = f(*x, *y);
    }
    out
}

fn row_reduce<F: Fn(&[f64]) -> f64>(t: &Tensor, f: F) -> Tensor {
    let out: Vec<f64> = (0..t.rows()).map(|i| f(t.row(i))).collect();
    if t.shape().len() == 2 {
        Tensor::new(vec![t.rows(), 1], out).unwrap()
    } else {
        Tensor::vector(out)
    }
}

fn sign0(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

fn softmax_backward(g: &[f64], y: &[f64], out: &mut [f64]) {
    let dot: f64 = g.iter().zip(y).map(|(gi, yi)| gi * yi).sum();
    for k in 0..y.len() {
        out[k] = y[k] * (g[k] - dot);
    }
}

/// a op b where b may be [1] scalar or a bias row [m] under a [n,m].
fn bcast_zip<F: Fn(f64, f64) -> f64>(a: &Tensor, b: &Tensor, f: F) -> Tensor {
    let mut out = a.clone();
    if a.shape() == b.shape() {
        for (x, y) in out.data_mut().iter_mut().zip(b.data()) {
            *x = f(*x, *y);
        }
    } else if b.is_scalar() {
        let y = b.data()[0];
        for x in out.data_mut() {
            *x = f(*x, y);
        }
    } else if b.shape().len() == 2 && b.cols() == 1 {
        // column broadcast
        let m = a.cols();
        for (i, x) in out.data_mut().iter_mut().enumerate() {
            *x = f(*x, b.data()[i / m]);
        }
    } else {
        // bias row
        let m = b.len();
        for (i, x) in out.data_mut().iter_mut().enumerate() {
            *x = f(*x, b.data()[i % m]);
        }
    }
    out
}

/// a / b where b may be same-shape, [n,1], or [1].
fn div_bcast(a: &Tensor, b: &Tensor) -> Tensor {
    let mut out = a.clone();
    if a.shape() == b.shape() {
        for (x, y) in out.data_mut().iter_mut().zip(b.data()) {
            *x /= y;
        }
    } else if b.is_scalar() {
        let y = b.data()[0];
        for x in out.data_mut() {
            *x /= y;
        }
    } else {
        let c = a.cols();
        for i in 0..a.rows() {
            let y = b.data()[i];
            for x in &mut out.data_mut()[i * c..(i + 1) * c] {
                *x /= y;
            }
        }
    }
    out
}

/// Sum g down to the given shape (inverse of the Add/Sub broadcasts).
fn reduce_to(g: &Tensor, shape: &[usize]) -> Tensor {
    if g.shape() == shape {
        return g.clone();
    }
    if shape == [1] {
        return Tensor::scalar(g.data().iter().sum());
    }
    if shape.len() == 1 {
        // bias row [m] under [n,m]
        let m = shape[0];
        let mut out = vec![0.0; m];
        for (i, v) in g.data().iter().enumerate() {
            out[i % m] += v;
        }
        return Tensor::vector(out);
    }
    // [n,1] under [n,m]
    let out: Vec<f64> = (0..g.rows()).map(|i| g.row(i).iter().sum()).collect();
    Tensor::new(shape.to_vec(), out).unwrap()
}

fn reshape_like(t: Tensor, shape: &[usize]) -> Tensor {
    if t.shape() == shape {
        t
    } else {
        Tensor::new(shape.to_vec(), t.data().to_vec()).unwrap()
    }
}

fn dense_matmul(a: &Tensor, b: &Tensor) -> Tensor {
    let (ra, ca) = if a.shape().len() == 2 {
        (a.shape()[0], a.shape()[1])
    } else {
        (1, a.shape()[0])
    };
    let cb = b.shape()[1];
    let mut out = vec![0.0; ra * cb];
    for i in 0..ra {
        for k in 0..ca {
            let aik = a.data()[i * ca + k];
            if aik == 0.0 {
                continue;
            }
            let brow = &b.data()[k * cb..(k + 1) * cb];
            let orow = &mut out[i * cb..(i + 1) * cb];
            for j in 0..cb {
                orow[j] += aik * brow[j];
            }
        }
    }
    if a.shape().len() == 2 {
        Tensor::new(vec![ra, cb], out).unwrap()
    } else {
        Tensor::vector(out)
    }
}

/// g · Bᵀ shaped like A (which may be rank 1).
fn matmul_nt(g: &Tensor, b: &Tensor, (ra, ca): (usize, usize)) -> Tensor {
    let cb = b.shape()[1];
    let mut out = vec![0.0; ra * ca];
    for i in 0..ra {
        let grow = &g.data()[i * cb..(i + 1) * cb];
        for k in 0..ca {
            let brow = &b.data()[k * cb..(k + 1) * cb];
            let mut dot = 0.0;
            for j in 0..cb {
                dot += grow[j] * brow[j];
            }
            out[i * ca + k] = dot;
        }
    }
    if ra == 1 && g.shape().len() == 1 {
        Tensor::vector(out)
    } else {
        Tensor::new(vec![ra, ca], out).unwrap()
    }
}

/// Aᵀ · g shaped like B.
fn matmul_tn(a: &Tensor, g: &Tensor, (rb, cb): (usize, usize)) -> Tensor {
    let ca = rb; // inner dim
    let ra = a.len() / ca;
    let mut out = vec![0.0; rb * cb];
    for i in 0..ra {
        let arow = &a.data()[i * ca..(i + 1) * ca];
        let grow = &g.data()[i * cb..(i + 1) * cb];
        for k in 0..ca {
            let aik = arow[k];
            if aik == 0.0 {
                continue;
            }
            let orow = &mut out[k * cb..(k + 1) * cb];
            for j in 0..cb {
                orow[j] += aik * grow[j];
            }
        }
    }
    Tensor::new(vec![rb, cb], out).unwrap()
}
