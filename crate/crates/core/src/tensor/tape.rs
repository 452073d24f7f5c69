//! Reverse-mode gradient tape.
//!
//! A [`Tape`] owns every intermediate tensor of one forward computation as an
//! arena; [`Var`] is an index into it. Operations append nodes in topological
//! order, so [`Tape::backward`] is a single reverse sweep that accumulates
//! gradient contributions (a tensor used k times receives the sum of k
//! contributions). A tape is confined to one thread; cross-sample parallelism
//! uses one tape per sample.

use super::{
    broadcast_shape, broadcast_src_index, strides, Result, Scalar, Tensor, TensorError,
};

/// Handle to a tensor recorded on a tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

type BackFn<S> = Box<dyn Fn(&Tensor<S>, &mut dyn FnMut(usize, Tensor<S>))>;

struct Node<S> {
    value: Tensor<S>,
    needs_grad: bool,
    back: Option<BackFn<S>>,
}

/// Gradients produced by [`Tape::backward`], keyed by [`Var`].
pub struct Gradients<S> {
    grads: Vec<Option<Tensor<S>>>,
}

impl<S: Scalar> Gradients<S> {
    pub fn get(&self, v: Var) -> Option<&Tensor<S>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor<S>> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}

/// Arena of one forward computation's tensors and backward closures.
pub struct Tape<S: Scalar> {
    nodes: Vec<Node<S>>,
}

impl<S: Scalar> Default for Tape<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> Tape<S> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    /// Number of recorded nodes.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records a constant input; no gradient flows into it.
    pub fn constant(&mut self, value: Tensor<S>) -> Var {
        self.push(value, false, None)
    }

    /// Records a differentiable leaf (a parameter).
    pub fn param(&mut self, value: Tensor<S>) -> Var {
        self.push(value, true, None)
    }

    pub fn value(&self, v: Var) -> &Tensor<S> {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor<S>, needs_grad: bool, back: Option<BackFn<S>>) -> Var {
        self.nodes.push(Node {
            value,
            needs_grad,
            back,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].needs_grad)
    }

    fn record(
        &mut self,
        value: Tensor<S>,
        inputs: &[Var],
        back: impl Fn(&Tensor<S>, &mut dyn FnMut(usize, Tensor<S>)) + 'static,
    ) -> Var {
        let needs = self.needs(inputs);
        let back: Option<BackFn<S>> = if needs { Some(Box::new(back)) } else { None };
        self.push(value, needs, back)
    }

    // ---- elementwise binary ----

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.broadcast_binary(a, b, BinOp::Add)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.broadcast_binary(a, b, BinOp::Sub)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.broadcast_binary(a, b, BinOp::Mul)
    }

    fn broadcast_binary(&mut self, a: Var, b: Var, op: BinOp) -> Result<Var> {
        let (ta, tb) = (self.value(a).clone(), self.value(b).clone());
        let out_shape = broadcast_shape(ta.shape(), tb.shape())?;
        let os = strides(&out_shape);
        let (sa, sb) = (strides(ta.shape()), strides(tb.shape()));
        let n: usize = out_shape.iter().product();
        let mut data = Vec::with_capacity(n);
        for i in 0..n {
            let ia = broadcast_src_index(i, &out_shape, &os, ta.shape(), &sa);
            let ib = broadcast_src_index(i, &out_shape, &os, tb.shape(), &sb);
            let (x, y) = (ta.data()[ia], tb.data()[ib]);
            data.push(match op {
                BinOp::Add => x + y,
                BinOp::Sub => x - y,
                BinOp::Mul => x * y,
            });
        }
        let value = Tensor::new(out_shape.clone(), data)?;
        let (shape_a, shape_b) = (ta.shape().to_vec(), tb.shape().to_vec());
        Ok(self.record(value, &[a, b], move |g, sink| {
            let reduce = |grad_elem: &dyn Fn(usize, usize, usize) -> S, shape: &[usize]| {
                let ss = strides(shape);
                let mut acc = Tensor::<S>::zeros(shape);
                for i in 0..g.len() {
                    let ia = broadcast_src_index(i, &out_shape, &os, &shape_a, &sa);
                    let ib = broadcast_src_index(i, &out_shape, &os, &shape_b, &sb);
                    let dst = broadcast_src_index(i, &out_shape, &os, shape, &ss);
                    acc.data_mut()[dst] = acc.data_mut()[dst] + grad_elem(i, ia, ib);
                }
                acc
            };
            match op {
                BinOp::Add => {
                    sink(a.0, reduce(&|i, _, _| g.data()[i], &shape_a));
                    sink(b.0, reduce(&|i, _, _| g.data()[i], &shape_b));
                }
                BinOp::Sub => {
                    sink(a.0, reduce(&|i, _, _| g.data()[i], &shape_a));
                    sink(b.0, reduce(&|i, _, _| -g.data()[i], &shape_b));
                }
                BinOp::Mul => {
                    sink(a.0, reduce(&|i, _, ib| g.data()[i] * tb.data()[ib], &shape_a));
                    sink(b.0, reduce(&|i, ia, _| g.data()[i] * ta.data()[ia], &shape_b));
                }
            }
        }))
    }

    // ---- matmul ----

    /// `[m,k] x [k,n] -> [m,n]`; backward `dA = dC·Bᵀ`, `dB = Aᵀ·dC`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a).clone(), self.value(b).clone());
        if ta.rank() != 2 || tb.rank() != 2 {
            return Err(TensorError::ShapeMismatch(format!(
                "matmul expects rank-2 operands, got {:?} and {:?}",
                ta.shape(),
                tb.shape()
            )));
        }
        let (m, k) = (ta.shape()[0], ta.shape()[1]);
        let (k2, n) = (tb.shape()[0], tb.shape()[1]);
        if k != k2 {
            return Err(TensorError::ShapeMismatch(format!(
                "matmul inner dimensions disagree: {:?} x {:?}",
                ta.shape(),
                tb.shape()
            )));
        }
        let value = matmul_raw(&ta, &tb);
        Ok(self.record(value, &[a, b], move |g, sink| {
            // dA[i,l] = sum_j g[i,j] * B[l,j]
            let mut da = Tensor::<S>::zeros(&[m, k]);
            for i in 0..m {
                for l in 0..k {
                    let mut acc = S::zero();
                    for j in 0..n {
                        acc = acc + g.data()[i * n + j] * tb.data()[l * n + j];
                    }
                    da.data_mut()[i * k + l] = acc;
                }
            }
            // dB[l,j] = sum_i A[i,l] * g[i,j]
            let mut db = Tensor::<S>::zeros(&[k, n]);
            for l in 0..k {
                for j in 0..n {
                    let mut acc = S::zero();
                    for i in 0..m {
                        acc = acc + ta.data()[i * k + l] * g.data()[i * n + j];
                    }
                    db.data_mut()[l * n + j] = acc;
                }
            }
            sink(a.0, da);
            sink(b.0, db);
        }))
    }

    // ---- shape ops ----

    pub fn reshape(&mut self, v: Var, new_shape: &[usize]) -> Result<Var> {
        let t = self.value(v).clone();
        let n: usize = new_shape.iter().product();
        if n != t.len() || new_shape.contains(&0) {
            return Err(TensorError::ShapeMismatch(format!(
                "cannot reshape {:?} into {new_shape:?}",
                t.shape()
            )));
        }
        let old_shape = t.shape().to_vec();
        let value = Tensor::new(new_shape.to_vec(), t.into_data())?;
        Ok(self.record(value, &[v], move |g, sink| {
            let back = Tensor::new(old_shape.clone(), g.data().to_vec()).unwrap();
            sink(v.0, back);
        }))
    }

    /// Concatenates along `axis`; all other dimensions must agree.
    pub fn concat(&mut self, vars: &[Var], axis: usize) -> Result<Var> {
        if vars.is_empty() {
            return Err(TensorError::EmptyInput("concat of zero tensors".into()));
        }
        let first = self.value(vars[0]).shape().to_vec();
        if axis >= first.len() {
            return Err(TensorError::InvalidAxis {
                axis,
                rank: first.len(),
            });
        }
        let mut axis_total = 0usize;
        let mut axis_sizes = Vec::with_capacity(vars.len());
        for &v in vars {
            let s = self.value(v).shape();
            if s.len() != first.len()
                || s.iter()
                    .enumerate()
                    .any(|(d, &x)| d != axis && x != first[d])
            {
                return Err(TensorError::ShapeMismatch(format!(
                    "concat shapes {:?} vs {:?} differ off axis {axis}",
                    first, s
                )));
            }
            axis_sizes.push(s[axis]);
            axis_total += s[axis];
        }
        let mut out_shape = first.clone();
        out_shape[axis] = axis_total;
        let outer: usize = first[..axis].iter().product();
        let inner: usize = first[axis + 1..].iter().product();
        let mut data = vec![S::zero(); out_shape.iter().product()];
        let mut offset = 0usize;
        for (vi, &v) in vars.iter().enumerate() {
            let t = self.value(v);
            let block = axis_sizes[vi] * inner;
            for o in 0..outer {
                let dst = o * axis_total * inner + offset * inner;
                let src = o * block;
                data[dst..dst + block].copy_from_slice(&t.data()[src..src + block]);
            }
            offset += axis_sizes[vi];
        }
        let value = Tensor::new(out_shape, data)?;
        let inputs = vars.to_vec();
        Ok(self.record(value, vars, move |g, sink| {
            let mut offset = 0usize;
            for (vi, &v) in inputs.iter().enumerate() {
                let block = axis_sizes[vi] * inner;
                let mut part = vec![S::zero(); outer * block];
                for o in 0..outer {
                    let src = o * axis_total * inner + offset * inner;
                    part[o * block..(o + 1) * block]
                        .copy_from_slice(&g.data()[src..src + block]);
                }
                let mut shape = first.clone();
                shape[axis] = axis_sizes[vi];
                sink(v.0, Tensor::new(shape, part).unwrap());
                offset += axis_sizes[vi];
            }
        }))
    }

    /// Stacks rank-1 vectors of equal width into a `[n, d]` matrix.
    pub fn stack_rows(&mut self, vars: &[Var]) -> Result<Var> {
        if vars.is_empty() {
            return Err(TensorError::EmptyInput("stack_rows of zero vectors".into()));
        }
        let d = self.value(vars[0]).len();
        let mut data = Vec::with_capacity(vars.len() * d);
        for &v in vars {
            let t = self.value(v);
            if t.rank() != 1 || t.len() != d {
                return Err(TensorError::ShapeMismatch(format!(
                    "stack_rows expects rank-1 vectors of width {d}, got {:?}",
                    t.shape()
                )));
            }
            data.extend_from_slice(t.data());
        }
        let value = Tensor::new(vec![vars.len(), d], data)?;
        let inputs = vars.to_vec();
        Ok(self.record(value, vars, move |g, sink| {
            for (i, &v) in inputs.iter().enumerate() {
                sink(v.0, Tensor::from_vec(g.row(i).to_vec()));
            }
        }))
    }

    // ---- activations ----

    /// `max(x, slope*x)`; gradient is 1 for x >= 0, `slope` otherwise.
    pub fn leaky_relu(&mut self, v: Var, slope: f64) -> Var {
        let s = S::from_f64(slope);
        let t = self.value(v).clone();
        let value = t.map(|x| if x >= S::zero() { x } else { x * s });
        self.record(value, &[v], move |g, sink| {
            let mut out = g.clone();
            for (gv, &x) in out.data_mut().iter_mut().zip(t.data()) {
                if x < S::zero() {
                    *gv = *gv * s;
                }
            }
            sink(v.0, out);
        })
    }

    /// ELU with alpha = 1.
    pub fn elu(&mut self, v: Var) -> Var {
        let t = self.value(v).clone();
        let value = t.map(|x| if x >= S::zero() { x } else { x.exp() - S::one() });
        self.record(value, &[v], move |g, sink| {
            let mut out = g.clone();
            for (gv, &x) in out.data_mut().iter_mut().zip(t.data()) {
                if x < S::zero() {
                    *gv = *gv * x.exp();
                }
            }
            sink(v.0, out);
        })
    }

    /// Elementwise maximum of two same-shape tensors. Gradient routes to the
    /// larger input (ties go to the first).
    pub fn maximum(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a).clone(), self.value(b).clone());
        if ta.shape() != tb.shape() {
            return Err(TensorError::ShapeMismatch(format!(
                "maximum expects equal shapes, got {:?} and {:?}",
                ta.shape(),
                tb.shape()
            )));
        }
        let data: Vec<S> = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(&x, &y)| if x >= y { x } else { y })
            .collect();
        let value = Tensor::new(ta.shape().to_vec(), data)?;
        Ok(self.record(value, &[a, b], move |g, sink| {
            let mut ga = Tensor::<S>::zeros(ta.shape());
            let mut gb = Tensor::<S>::zeros(tb.shape());
            for i in 0..g.len() {
                if ta.data()[i] >= tb.data()[i] {
                    ga.data_mut()[i] = g.data()[i];
                } else {
                    gb.data_mut()[i] = g.data()[i];
                }
            }
            sink(a.0, ga);
            sink(b.0, gb);
        }))
    }

    /// Multiplies every element by a constant.
    pub fn scale(&mut self, v: Var, c: S) -> Var {
        let value = self.value(v).map(|x| x * c);
        self.record(value, &[v], move |g, sink| {
            sink(v.0, g.map(|x| x * c));
        })
    }

    // ---- reductions ----

    /// Sum of all elements, as a scalar.
    pub fn sum_all(&mut self, v: Var) -> Var {
        let t = self.value(v);
        let mut acc = S::zero();
        for &x in t.data() {
            acc = acc + x;
        }
        let shape = t.shape().to_vec();
        self.record(Tensor::scalar(acc), &[v], move |g, sink| {
            let gv = g.data()[0];
            let n: usize = shape.iter().product();
            sink(v.0, Tensor::new(shape.clone(), vec![gv; n]).unwrap());
        })
    }

    /// Sums out one axis. A rank-1 input reduces to a scalar.
    pub fn sum_axis(&mut self, v: Var, axis: usize) -> Result<Var> {
        let t = self.value(v).clone();
        if axis >= t.rank() {
            return Err(TensorError::InvalidAxis {
                axis,
                rank: t.rank(),
            });
        }
        let in_shape = t.shape().to_vec();
        let mut out_shape: Vec<usize> = in_shape
            .iter()
            .enumerate()
            .filter(|(d, _)| *d != axis)
            .map(|(_, &x)| x)
            .collect();
        if out_shape.is_empty() {
            out_shape.push(1);
        }
        let outer: usize = in_shape[..axis].iter().product();
        let mid = in_shape[axis];
        let inner: usize = in_shape[axis + 1..].iter().product();
        let mut data = vec![S::zero(); outer * inner];
        for o in 0..outer {
            for m in 0..mid {
                for i in 0..inner {
                    data[o * inner + i] = data[o * inner + i] + t.data()[(o * mid + m) * inner + i];
                }
            }
        }
        let value = Tensor::new(out_shape, data)?;
        Ok(self.record(value, &[v], move |g, sink| {
            let mut back = Tensor::<S>::zeros(&in_shape);
            for o in 0..outer {
                for m in 0..mid {
                    for i in 0..inner {
                        back.data_mut()[(o * mid + m) * inner + i] = g.data()[o * inner + i];
                    }
                }
            }
            sink(v.0, back);
        }))
    }

    /// Mean over one axis.
    pub fn mean_axis(&mut self, v: Var, axis: usize) -> Result<Var> {
        let n = *self
            .value(v)
            .shape()
            .get(axis)
            .ok_or(TensorError::InvalidAxis {
                axis,
                rank: self.value(v).rank(),
            })?;
        let s = self.sum_axis(v, axis)?;
        Ok(self.scale(s, S::one() / S::from_f64(n as f64)))
    }

    // ---- gather / segment ops ----

    /// Gathers rows of a `[V, d]` tensor; backward scatter-adds into the table.
    pub fn embedding_lookup(&mut self, table: Var, indices: &[usize]) -> Result<Var> {
        let t = self.value(table).clone();
        if t.rank() != 2 {
            return Err(TensorError::ShapeMismatch(format!(
                "embedding_lookup expects a rank-2 table, got {:?}",
                t.shape()
            )));
        }
        let (v, d) = (t.shape()[0], t.shape()[1]);
        if let Some(&bad) = indices.iter().find(|&&i| i >= v) {
            return Err(TensorError::IndexOutOfRange { index: bad, size: v });
        }
        if indices.is_empty() {
            return Err(TensorError::EmptyInput("embedding_lookup with no indices".into()));
        }
        let mut data = Vec::with_capacity(indices.len() * d);
        for &i in indices {
            data.extend_from_slice(t.row(i));
        }
        let value = Tensor::new(vec![indices.len(), d], data)?;
        let idx = indices.to_vec();
        let table_shape = t.shape().to_vec();
        Ok(self.record(value, &[table], move |g, sink| {
            let mut back = Tensor::<S>::zeros(&table_shape);
            for (r, &i) in idx.iter().enumerate() {
                for c in 0..d {
                    back.data_mut()[i * d + c] = back.data_mut()[i * d + c] + g.data()[r * d + c];
                }
            }
            sink(table.0, back);
        }))
    }

    /// Single row of a rank-2 tensor, as a rank-1 vector.
    pub fn row_vec(&mut self, v: Var, i: usize) -> Result<Var> {
        let d = self.value(v).shape()[1];
        let picked = self.embedding_lookup(v, &[i])?;
        self.reshape(picked, &[d])
    }

    /// Per-segment sum of rows: `out[s] = Σ_{e: segment_of[e]=s} values[e]`.
    /// Segments with no members stay zero.
    pub fn segment_sum(
        &mut self,
        values: Var,
        segment_of: &[usize],
        n_segments: usize,
    ) -> Result<Var> {
        let t = self.value(values).clone();
        if t.rank() != 2 || t.shape()[0] != segment_of.len() {
            return Err(TensorError::ShapeMismatch(format!(
                "segment_sum: values {:?} vs {} segment ids",
                t.shape(),
                segment_of.len()
            )));
        }
        if let Some(&bad) = segment_of.iter().find(|&&s| s >= n_segments) {
            return Err(TensorError::IndexOutOfRange {
                index: bad,
                size: n_segments,
            });
        }
        let d = t.shape()[1];
        let mut data = vec![S::zero(); n_segments * d];
        for (e, &s) in segment_of.iter().enumerate() {
            for c in 0..d {
                data[s * d + c] = data[s * d + c] + t.data()[e * d + c];
            }
        }
        let value = Tensor::new(vec![n_segments, d], data)?;
        let seg = segment_of.to_vec();
        let e_count = segment_of.len();
        Ok(self.record(value, &[values], move |g, sink| {
            let mut back = Tensor::<S>::zeros(&[e_count, d]);
            for (e, &s) in seg.iter().enumerate() {
                for c in 0..d {
                    back.data_mut()[e * d + c] = g.data()[s * d + c];
                }
            }
            sink(values.0, back);
        }))
    }

    /// Softmax of a rank-1 score vector within each segment, with
    /// max-subtraction for stability. Outputs per segment sum to 1.
    pub fn segment_softmax(&mut self, scores: Var, segment_of: &[usize]) -> Result<Var> {
        let t = self.value(scores).clone();
        if t.rank() != 1 || t.len() != segment_of.len() {
            return Err(TensorError::ShapeMismatch(format!(
                "segment_softmax: scores {:?} vs {} segment ids",
                t.shape(),
                segment_of.len()
            )));
        }
        if t.is_empty() || segment_of.is_empty() {
            return Err(TensorError::EmptyInput("segment_softmax over no scores".into()));
        }
        let n_segments = segment_of.iter().max().unwrap() + 1;
        let neg_inf = S::neg_infinity();
        let mut seg_max = vec![neg_inf; n_segments];
        for (e, &s) in segment_of.iter().enumerate() {
            if t.data()[e] > seg_max[s] {
                seg_max[s] = t.data()[e];
            }
        }
        let mut exps: Vec<S> = Vec::with_capacity(t.len());
        for (e, &s) in segment_of.iter().enumerate() {
            exps.push((t.data()[e] - seg_max[s]).exp());
        }
        let mut seg_sum = vec![S::zero(); n_segments];
        for (e, &s) in segment_of.iter().enumerate() {
            seg_sum[s] = seg_sum[s] + exps[e];
        }
        let data: Vec<S> = segment_of
            .iter()
            .enumerate()
            .map(|(e, &s)| exps[e] / seg_sum[s])
            .collect();
        let alpha = Tensor::from_vec(data);
        let out = alpha.clone();
        let seg = segment_of.to_vec();
        Ok(self.record(out, &[scores], move |g, sink| {
            // ds_e = a_e * (g_e - Σ_{e' in seg} a_e' g_e')
            let mut seg_dot = vec![S::zero(); n_segments];
            for (e, &s) in seg.iter().enumerate() {
                seg_dot[s] = seg_dot[s] + alpha.data()[e] * g.data()[e];
            }
            let data: Vec<S> = seg
                .iter()
                .enumerate()
                .map(|(e, &s)| alpha.data()[e] * (g.data()[e] - seg_dot[s]))
                .collect();
            sink(scores.0, Tensor::from_vec(data));
        }))
    }

    /// Scales row e of `values` by `scales[e]`.
    pub fn scale_rows(&mut self, values: Var, scales: Var) -> Result<Var> {
        let tv = self.value(values).clone();
        let ts = self.value(scales).clone();
        if tv.rank() != 2 || ts.rank() != 1 || tv.shape()[0] != ts.len() {
            return Err(TensorError::ShapeMismatch(format!(
                "scale_rows: values {:?} vs scales {:?}",
                tv.shape(),
                ts.shape()
            )));
        }
        let (n, d) = (tv.shape()[0], tv.shape()[1]);
        let mut data = Vec::with_capacity(n * d);
        for e in 0..n {
            for c in 0..d {
                data.push(tv.data()[e * d + c] * ts.data()[e]);
            }
        }
        let value = Tensor::new(vec![n, d], data)?;
        Ok(self.record(value, &[values, scales], move |g, sink| {
            let mut gv = Tensor::<S>::zeros(&[n, d]);
            let mut gs = Tensor::<S>::zeros(&[n]);
            for e in 0..n {
                let mut dot = S::zero();
                for c in 0..d {
                    gv.data_mut()[e * d + c] = g.data()[e * d + c] * ts.data()[e];
                    dot = dot + g.data()[e * d + c] * tv.data()[e * d + c];
                }
                gs.data_mut()[e] = dot;
            }
            sink(values.0, gv);
            sink(scales.0, gs);
        }))
    }

    // ---- loss ----

    /// Mean of `-log softmax(logits)[target]` over the batch, computed with
    /// log-sum-exp max subtraction. Backward is `(softmax - onehot) / B`.
    pub fn softmax_cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let t = self.value(logits).clone();
        if t.rank() != 2 || t.shape()[0] != targets.len() {
            return Err(TensorError::ShapeMismatch(format!(
                "cross entropy: logits {:?} vs {} targets",
                t.shape(),
                targets.len()
            )));
        }
        let (b, k) = (t.shape()[0], t.shape()[1]);
        if b == 0 {
            return Err(TensorError::EmptyInput("cross entropy over empty batch".into()));
        }
        if let Some(&bad) = targets.iter().find(|&&c| c >= k) {
            return Err(TensorError::IndexOutOfRange { index: bad, size: k });
        }
        let mut total = S::zero();
        let mut probs = vec![S::zero(); b * k];
        for i in 0..b {
            let row = t.row(i);
            let mut m = row[0];
            for &x in row {
                if x > m {
                    m = x;
                }
            }
            let mut sum = S::zero();
            for (j, &x) in row.iter().enumerate() {
                let e = (x - m).exp();
                probs[i * k + j] = e;
                sum = sum + e;
            }
            for j in 0..k {
                probs[i * k + j] = probs[i * k + j] / sum;
            }
            let lse = m + sum.ln();
            total = total + (lse - row[targets[i]]);
        }
        let bn = S::from_f64(b as f64);
        let loss = Tensor::scalar(total / bn);
        let targets = targets.to_vec();
        Ok(self.record(loss, &[logits], move |g, sink| {
            let gv = g.data()[0];
            let mut back = Tensor::<S>::zeros(&[b, k]);
            for i in 0..b {
                for j in 0..k {
                    let onehot = if j == targets[i] { S::one() } else { S::zero() };
                    back.data_mut()[i * k + j] = gv * (probs[i * k + j] - onehot) / bn;
                }
            }
            sink(logits.0, back);
        }))
    }

    // ---- backward ----

    /// Reverse sweep from a scalar loss. Returns gradients for every node
    /// that requires grad (leaves included).
    pub fn backward(&self, loss: Var) -> Result<Gradients<S>> {
        let lt = self.value(loss);
        if !lt.is_scalar() {
            return Err(TensorError::NotScalar(lt.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor<S>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::scalar(S::one()));
        for i in (0..=loss.0).rev() {
            if grads[i].is_none() || !self.nodes[i].needs_grad {
                continue;
            }
            if let Some(back) = &self.nodes[i].back {
                let g = grads[i].clone().unwrap();
                let mut sink = |j: usize, contrib: Tensor<S>| {
                    debug_assert!(j < i, "tape must be topologically ordered");
                    if !self.nodes[j].needs_grad {
                        return;
                    }
                    match &mut grads[j] {
                        Some(acc) => {
                            for (a, b) in acc.data_mut().iter_mut().zip(contrib.data()) {
                                *a = *a + *b;
                            }
                        }
                        slot => *slot = Some(contrib),
                    }
                };
                back(&g, &mut sink);
            }
        }
        Ok(Gradients { grads })
    }
}

#[derive(Clone, Copy)]
enum BinOp {
    Add,
    Sub,
    Mul,
}

fn matmul_raw<S: Scalar>(a: &Tensor<S>, b: &Tensor<S>) -> Tensor<S> {
    let (m, k) = (a.shape()[0], a.shape()[1]);
    let n = b.shape()[1];
    let mut data = vec![S::zero(); m * n];
    for i in 0..m {
        for l in 0..k {
            let av = a.data()[i * k + l];
            for j in 0..n {
                data[i * n + j] = data[i * n + j] + av * b.data()[l * n + j];
            }
        }
    }
    Tensor::new(vec![m, n], data).unwrap()
}
