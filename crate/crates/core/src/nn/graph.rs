//! Tape-based reverse-mode differentiation over dense `f64` matrices.
//!
//! A [`Graph`] records every operation as a node holding its forward value.
//! [`Graph::backward`] walks the tape in reverse and accumulates gradients.

use ndarray::{s, Array2, ArrayView2, Axis};

use super::params::{ParamId, ParamStore};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    Scale(Var, f64),
    Exp(Var),
    Gelu(Var),
    LayerNorm { x: Var, inv_std: Vec<f64> },
    Attention(Box<AttentionTape>),
    ConcatRows(Vec<Var>),
    ConcatCols(Vec<Var>),
    SliceRows(Var, usize),
    SliceCols(Var, usize),
    SelectRows(Var, Vec<usize>),
    Reshape(Var),
    Sum(Var),
    RowJacobian { x: Var, jacobians: Vec<Array2<f64>> },
}

#[derive(Debug)]
struct AttentionTape {
    q: Var,
    k: Var,
    v: Var,
    heads: usize,
    q_group: usize,
    k_group: usize,
    scale: f64,
    /// Softmax weights per `(group, head)`, group-major.
    probs: Vec<Array2<f64>>,
}

#[derive(Debug)]
struct Node {
    value: Array2<f64>,
    op: Op,
    /// Whether any gradient-tracked leaf feeds this node.
    tracked: bool,
}

impl Op {
    fn inputs(&self) -> Vec<Var> {
        match self {
            Op::Leaf => Vec::new(),
            Op::MatMul(a, b)
            | Op::Add(a, b)
            | Op::Sub(a, b)
            | Op::Mul(a, b)
            | Op::AddRow(a, b)
            | Op::MulRow(a, b) => {
                vec![*a, *b]
            }
            Op::Scale(a, _)
            | Op::Exp(a)
            | Op::Gelu(a)
            | Op::SliceRows(a, _)
            | Op::SliceCols(a, _)
            | Op::SelectRows(a, _)
            | Op::Reshape(a)
            | Op::Sum(a) => vec![*a],
            Op::LayerNorm { x, .. } | Op::RowJacobian { x, .. } => vec![*x],
            Op::Attention(t) => vec![t.q, t.k, t.v],
            Op::ConcatRows(parts) | Op::ConcatCols(parts) => parts.clone(),
        }
    }
}

pub struct Graph<'p> {
    params: &'p ParamStore,
    bound: Vec<Option<Var>>,
    nodes: Vec<Node>,
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_K: f64 = 0.044_715;
const LN_EPS: f64 = 1e-5;

impl<'p> Graph<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Self {
            params,
            bound: vec![None; params.len()],
            nodes: Vec::new(),
        }
    }

    pub fn params(&self) -> &'p ParamStore {
        self.params
    }

    fn push(&mut self, value: Array2<f64>, op: Op) -> Var {
        let tracked = op.inputs().iter().any(|v| self.nodes[v.0].tracked);
        self.nodes.push(Node { value, op, tracked });
        Var(self.nodes.len() - 1)
    }

    fn leaf(&mut self, value: Array2<f64>, tracked: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            tracked,
        });
        Var(self.nodes.len() - 1)
    }

    fn tracked(&self, v: Var) -> bool {
        self.nodes[v.0].tracked
    }

    pub fn value(&self, v: Var) -> &Array2<f64> {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[[0, 0]]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Constant input; no gradient flows into it.
    pub fn constant(&mut self, value: Array2<f64>) -> Var {
        self.leaf(value, false)
    }

    /// Input whose gradient is reported by [`Gradients::wrt`].
    pub fn input(&mut self, value: Array2<f64>) -> Var {
        self.leaf(value, true)
    }

    /// Binds a parameter as a leaf, once per graph.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.bound[id.index()] {
            return v;
        }
        let v = self.leaf(self.params.value(id).clone(), true);
        self.bound[id.index()] = Some(v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).dot(self.value(b));
        self.push(value, Op::MatMul(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a) + self.value(b);
        self.push(value, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a) - self.value(b);
        self.push(value, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a) * self.value(b);
        self.push(value, Op::Mul(a, b))
    }

    /// `a + row` with `row` (1 × n) broadcast over the rows of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let value = self.value(a) + self.value(row);
        self.push(value, Op::AddRow(a, row))
    }

    pub fn mul_row(&mut self, a: Var, row: Var) -> Var {
        let value = self.value(a) * self.value(row);
        self.push(value, Op::MulRow(a, row))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let value = self.value(a) * c;
        self.push(value, Op::Scale(a, c))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(f64::exp);
        self.push(value, Op::Exp(a))
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.mul(a, a)
    }

    /// GELU, tanh approximation.
    pub fn gelu(&mut self, a: Var) -> Var {
        let value = self
            .value(a)
            .mapv(|x| 0.5 * x * (1.0 + (GELU_C * (x + GELU_K * x * x * x)).tanh()));
        self.push(value, Op::Gelu(a))
    }

    /// Row-wise standardization (zero mean, unit variance), no affine part.
    pub fn layer_norm(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let n = x.ncols() as f64;
        let mut out = x.clone();
        let mut inv_std = Vec::with_capacity(x.nrows());
        for mut row in out.rows_mut() {
            let mean = row.sum() / n;
            row.mapv_inplace(|v| v - mean);
            let var = row.iter().map(|v| v * v).sum::<f64>() / n;
            let is = 1.0 / (var + LN_EPS).sqrt();
            row.mapv_inplace(|v| v * is);
            inv_std.push(is);
        }
        self.push(out, Op::LayerNorm { x: a, inv_std })
    }

    /// Grouped multi-head scaled dot-product attention.
    ///
    /// Rows of `q` are split into consecutive groups of `q_group` rows and rows of
    /// `k`/`v` into groups of `k_group`; group `i` of the queries attends only to
    /// group `i` of the keys.
    pub fn attention(
        &mut self,
        q: Var,
        k: Var,
        v: Var,
        heads: usize,
        q_group: usize,
        k_group: usize,
    ) -> Var {
        let (qv, kv, vv) = (self.value(q), self.value(k), self.value(v));
        let d = qv.ncols();
        assert_eq!(d % heads, 0, "model dim must divide by head count");
        assert_eq!(qv.nrows() % q_group, 0);
        let groups = qv.nrows() / q_group;
        assert_eq!(
            kv.nrows(),
            groups * k_group,
            "query/key group counts differ"
        );
        let dh = d / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut out = Array2::zeros((qv.nrows(), d));
        let mut probs = Vec::with_capacity(groups * heads);
        for gi in 0..groups {
            let (q0, k0) = (gi * q_group, gi * k_group);
            for h in 0..heads {
                let cols = h * dh..(h + 1) * dh;
                let qs = qv.slice(s![q0..q0 + q_group, cols.clone()]);
                let ks = kv.slice(s![k0..k0 + k_group, cols.clone()]);
                let vs = vv.slice(s![k0..k0 + k_group, cols.clone()]);
                let mut a = qs.dot(&ks.t()) * scale;
                softmax_rows(&mut a);
                out.slice_mut(s![q0..q0 + q_group, cols])
                    .assign(&a.dot(&vs));
                probs.push(a);
            }
        }
        let tape = AttentionTape {
            q,
            k,
            v,
            heads,
            q_group,
            k_group,
            scale,
            probs,
        };
        self.push(out, Op::Attention(Box::new(tape)))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let views: Vec<ArrayView2<f64>> = parts.iter().map(|p| self.value(*p).view()).collect();
        let value = ndarray::concatenate(Axis(0), &views).expect("column counts must agree");
        self.push(value, Op::ConcatRows(parts.to_vec()))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let views: Vec<ArrayView2<f64>> = parts.iter().map(|p| self.value(*p).view()).collect();
        let value = ndarray::concatenate(Axis(1), &views).expect("row counts must agree");
        self.push(value, Op::ConcatCols(parts.to_vec()))
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Var {
        let value = self.value(a).slice(s![start..start + len, ..]).to_owned();
        self.push(value, Op::SliceRows(a, start))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let value = self.value(a).slice(s![.., start..start + len]).to_owned();
        self.push(value, Op::SliceCols(a, start))
    }

    /// Gathers rows by index (indices may repeat).
    pub fn select_rows(&mut self, a: Var, idx: &[usize]) -> Var {
        let value = self.value(a).select(Axis(0), idx);
        self.push(value, Op::SelectRows(a, idx.to_vec()))
    }

    /// Row-major reshape (element order is preserved).
    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Var {
        let src = self.value(a);
        let data: Vec<f64> = src.iter().copied().collect();
        let value = Array2::from_shape_vec((rows, cols), data).expect("reshape must preserve size");
        self.push(value, Op::Reshape(a))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let value = Array2::from_elem((1, 1), self.value(a).sum());
        self.push(value, Op::Sum(a))
    }

    /// Applies a row-wise map whose values and per-row Jacobians were computed
    /// outside the graph: row `r` of the output is `values[r]` and its
    /// derivative with respect to row `r` of `x` is `jacobians[r]`
    /// (`out_cols × in_cols`).
    pub fn row_map(&mut self, x: Var, values: Array2<f64>, jacobians: Vec<Array2<f64>>) -> Var {
        assert_eq!(values.nrows(), self.value(x).nrows());
        assert_eq!(jacobians.len(), values.nrows());
        self.push(values, Op::RowJacobian { x, jacobians })
    }

    /// Reverse pass from a scalar (1 × 1) output.
    pub fn backward(&self, output: Var) -> Gradients {
        assert_eq!(
            self.value(output).dim(),
            (1, 1),
            "backward needs a scalar output"
        );
        let mut grads: Vec<Option<Array2<f64>>> = vec![None; self.nodes.len()];
        if self.tracked(output) {
            grads[output.0] = Some(Array2::ones((1, 1)));
        }
        for i in (0..=output.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        Gradients {
            grads,
            bound: self.bound.clone(),
        }
    }

    fn propagate(&self, i: usize, g: &Array2<f64>, grads: &mut [Option<Array2<f64>>]) {
        let node = &self.nodes[i];
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if self.tracked(*a) {
                    accumulate(grads, *a, g.dot(&self.value(*b).t()));
                }
                if self.tracked(*b) {
                    accumulate(grads, *b, self.value(*a).t().dot(g));
                }
            }
            Op::Add(a, b) => {
                accumulate(grads, *a, g.clone());
                accumulate(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                accumulate(grads, *a, g.clone());
                accumulate(grads, *b, -g);
            }
            Op::Mul(a, b) => {
                if self.tracked(*a) {
                    accumulate(grads, *a, g * self.value(*b));
                }
                if self.tracked(*b) {
                    accumulate(grads, *b, g * self.value(*a));
                }
            }
            Op::AddRow(a, r) => {
                accumulate(grads, *a, g.clone());
                accumulate(grads, *r, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
            }
            Op::MulRow(a, r) => {
                accumulate(grads, *a, g * self.value(*r));
                let gr = (g * self.value(*a)).sum_axis(Axis(0)).insert_axis(Axis(0));
                accumulate(grads, *r, gr);
            }
            Op::Scale(a, c) => accumulate(grads, *a, g * *c),
            Op::Exp(a) => accumulate(grads, *a, g * &node.value),
            Op::Gelu(a) => {
                let mut ga = self.value(*a).mapv(|x| {
                    let u = GELU_C * (x + GELU_K * x * x * x);
                    let t = u.tanh();
                    0.5 * (1.0 + t)
                        + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_K * x * x)
                });
                ga *= g;
                accumulate(grads, *a, ga);
            }
            Op::LayerNorm { x, inv_std } => {
                let y = &node.value;
                let n = y.ncols() as f64;
                let mut gx = Array2::zeros(y.dim());
                for r in 0..y.nrows() {
                    let gr = g.row(r);
                    let yr = y.row(r);
                    let mean_g = gr.sum() / n;
                    let mean_gy = gr.dot(&yr) / n;
                    let is = inv_std[r];
                    for c in 0..y.ncols() {
                        gx[[r, c]] = is * (gr[c] - mean_g - yr[c] * mean_gy);
                    }
                }
                accumulate(grads, *x, gx);
            }
            Op::Attention(t) => self.attention_backward(t, g, grads),
            Op::ConcatRows(parts) => {
                let mut start = 0;
                for p in parts {
                    let n = self.value(*p).nrows();
                    accumulate(grads, *p, g.slice(s![start..start + n, ..]).to_owned());
                    start += n;
                }
            }
            Op::ConcatCols(parts) => {
                let mut start = 0;
                for p in parts {
                    let n = self.value(*p).ncols();
                    accumulate(grads, *p, g.slice(s![.., start..start + n]).to_owned());
                    start += n;
                }
            }
            Op::SliceRows(a, start) => {
                let mut ga = Array2::zeros(self.value(*a).dim());
                ga.slice_mut(s![*start..*start + g.nrows(), ..]).assign(g);
                accumulate(grads, *a, ga);
            }
            Op::SliceCols(a, start) => {
                let mut ga = Array2::zeros(self.value(*a).dim());
                ga.slice_mut(s![.., *start..*start + g.ncols()]).assign(g);
                accumulate(grads, *a, ga);
            }
            Op::SelectRows(a, idx) => {
                let mut ga = Array2::zeros(self.value(*a).dim());
                for (r, src) in idx.iter().enumerate() {
                    let mut row = ga.row_mut(*src);
                    row += &g.row(r);
                }
                accumulate(grads, *a, ga);
            }
            Op::Reshape(a) => {
                let dim = self.value(*a).dim();
                let data: Vec<f64> = g.iter().copied().collect();
                accumulate(
                    grads,
                    *a,
                    Array2::from_shape_vec(dim, data).expect("same size"),
                );
            }
            Op::Sum(a) => {
                let c = g[[0, 0]];
                accumulate(grads, *a, Array2::from_elem(self.value(*a).dim(), c));
            }
            Op::RowJacobian { x, jacobians } => {
                let mut gx = Array2::zeros(self.value(*x).dim());
                for (r, jac) in jacobians.iter().enumerate() {
                    gx.row_mut(r).assign(&g.row(r).dot(jac));
                }
                accumulate(grads, *x, gx);
            }
        }
    }

    fn attention_backward(
        &self,
        t: &AttentionTape,
        g: &Array2<f64>,
        grads: &mut [Option<Array2<f64>>],
    ) {
        let (qv, kv, vv) = (self.value(t.q), self.value(t.k), self.value(t.v));
        let d = qv.ncols();
        let dh = d / t.heads;
        let groups = qv.nrows() / t.q_group;
        let mut gq = Array2::zeros(qv.dim());
        let mut gk = Array2::zeros(kv.dim());
        let mut gv = Array2::zeros(vv.dim());
        for gi in 0..groups {
            let (q0, k0) = (gi * t.q_group, gi * t.k_group);
            let qr = q0..q0 + t.q_group;
            let kr = k0..k0 + t.k_group;
            for h in 0..t.heads {
                let cols = h * dh..(h + 1) * dh;
                let a = &t.probs[gi * t.heads + h];
                let go = g.slice(s![qr.clone(), cols.clone()]);
                let vs = vv.slice(s![kr.clone(), cols.clone()]);
                let qs = qv.slice(s![qr.clone(), cols.clone()]);
                let ks = kv.slice(s![kr.clone(), cols.clone()]);
                let mut gvs = gv.slice_mut(s![kr.clone(), cols.clone()]);
                gvs += &a.t().dot(&go);
                let ga = go.dot(&vs.t());
                let mut gs = ga.clone();
                for (mut row, (arow, garow)) in gs
                    .rows_mut()
                    .into_iter()
                    .zip(a.rows().into_iter().zip(ga.rows()))
                {
                    let dot = arow.dot(&garow);
                    for (c, v) in row.iter_mut().enumerate() {
                        *v = arow[c] * (garow[c] - dot);
                    }
                }
                gs *= t.scale;
                let mut gqs = gq.slice_mut(s![qr.clone(), cols.clone()]);
                gqs += &gs.dot(&ks);
                let mut gks = gk.slice_mut(s![kr.clone(), cols]);
                gks += &gs.t().dot(&qs);
            }
        }
        accumulate(grads, t.q, gq);
        accumulate(grads, t.k, gk);
        accumulate(grads, t.v, gv);
    }
}

fn softmax_rows(a: &mut Array2<f64>) {
    for mut row in a.rows_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
}

fn accumulate(grads: &mut [Option<Array2<f64>>], v: Var, g: Array2<f64>) {
    match &mut grads[v.0] {
        Some(acc) => *acc += &g,
        slot @ None => *slot = Some(g),
    }
}

/// Result of a reverse pass.
pub struct Gradients {
    grads: Vec<Option<Array2<f64>>>,
    bound: Vec<Option<Var>>,
}

impl Gradients {
    pub fn wrt(&self, v: Var) -> Option<&Array2<f64>> {
        self.grads[v.0].as_ref()
    }

    pub fn param(&self, id: ParamId) -> Option<&Array2<f64>> {
        self.bound[id.index()].and_then(|v| self.wrt(v))
    }

    /// Dense per-parameter gradients (zeros for parameters not on the path).
    pub fn into_param_grads(self, store: &ParamStore) -> Vec<Array2<f64>> {
        store
            .ids()
            .map(|id| {
                self.param(id)
                    .cloned()
                    .unwrap_or_else(|| Array2::zeros(store.value(id).dim()))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Array2<f64> {
        Array2::from_shape_fn((r, c), |_| rng.random_range(-1.0..1.0))
    }

    /// Checks d(loss)/d(input) against central differences for a graph builder.
    fn check(inputs: Vec<Array2<f64>>, build: impl Fn(&mut Graph, &[Var]) -> Var) {
        let store = ParamStore::default();
        let eval = |vals: &[Array2<f64>]| {
            let mut g = Graph::new(&store);
            let vars: Vec<Var> = vals.iter().map(|v| g.constant(v.clone())).collect();
            let out = build(&mut g, &vars);
            g.scalar(out)
        };
        let mut g = Graph::new(&store);
        let vars: Vec<Var> = inputs.iter().map(|v| g.input(v.clone())).collect();
        let out = build(&mut g, &vars);
        let grads = g.backward(out);
        let h = 1e-6;
        for (i, x) in inputs.iter().enumerate() {
            let an = grads
                .wrt(vars[i])
                .cloned()
                .unwrap_or_else(|| Array2::zeros(x.dim()));
            for idx in 0..x.len() {
                let (r, c) = (idx / x.ncols(), idx % x.ncols());
                let mut p = inputs.clone();
                p[i][[r, c]] += h;
                let fp = eval(&p);
                p[i][[r, c]] -= 2.0 * h;
                let fm = eval(&p);
                let fd = (fp - fm) / (2.0 * h);
                let a = an[[r, c]];
                assert!(
                    (fd - a).abs() <= 1e-5 * (1.0 + fd.abs()),
                    "input {i} at ({r},{c}): fd {fd} analytic {a}"
                );
            }
        }
    }

    #[test]
    fn elementwise_and_broadcast_ops() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random(&mut rng, 3, 4);
        let b = random(&mut rng, 3, 4);
        let r = random(&mut rng, 1, 4);
        check(vec![a, b, r], |g, v| {
            let m = g.mul(v[0], v[1]);
            let s = g.sub(m, v[0]);
            let e = g.exp(s);
            let ar = g.add_row(e, v[2]);
            let mr = g.mul_row(ar, v[2]);
            let ge = g.gelu(mr);
            let sc = g.scale(ge, 0.7);
            let sq = g.square(sc);
            g.sum(sq)
        });
    }

    #[test]
    fn matmul_layer_norm_and_reshaping() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = random(&mut rng, 4, 3);
        let b = random(&mut rng, 3, 5);
        let w = random(&mut rng, 5, 5);
        check(vec![a, b, w], |g, v| {
            let m = g.matmul(v[0], v[1]);
            let ln = g.layer_norm(m);
            let top = g.slice_rows(ln, 1, 2);
            let left = g.slice_cols(ln, 0, 2);
            let sel = g.select_rows(ln, &[3, 0, 0]);
            let sel = g.reshape(sel, 5, 3);
            let sel = g.reshape(sel, 3, 5);
            let rows = g.concat_rows(&[top, sel]);
            let lw = g.slice_rows(v[2], 0, 4);
            let lw = g.slice_cols(lw, 0, 2);
            let cols = g.concat_cols(&[left, lw]);
            let p = g.matmul(rows, v[2]);
            let s1 = g.square(p);
            let s1 = g.sum(s1);
            let c2 = g.square(cols);
            let s2 = g.sum(c2);
            g.add(s1, s2)
        });
    }

    #[test]
    fn grouped_attention_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let q = random(&mut rng, 6, 4);
        let k = random(&mut rng, 4, 4);
        let v = random(&mut rng, 4, 4);
        let w = random(&mut rng, 6, 4);
        check(vec![q, k, v, w], |g, x| {
            let o = g.attention(x[0], x[1], x[2], 2, 3, 2);
            let m = g.mul(o, x[3]);
            g.sum(m)
        });
    }

    #[test]
    fn attention_over_single_key_returns_value() {
        let store = ParamStore::default();
        let mut g = Graph::new(&store);
        let q = g.constant(array![[1.0, 2.0], [3.0, -1.0]]);
        let k = g.constant(array![[0.5, 0.5]]);
        let v = g.constant(array![[7.0, -2.0]]);
        let o = g.attention(q, k, v, 1, 2, 1);
        assert_eq!(g.value(o), &array![[7.0, -2.0], [7.0, -2.0]]);
    }

    #[test]
    fn row_map_uses_supplied_jacobians() {
        let store = ParamStore::default();
        let mut g = Graph::new(&store);
        let x = g.input(array![[1.0, 2.0]]);
        // f(x) = (x0 * x1, x0 + x1)
        let y = g.row_map(x, array![[2.0, 3.0]], vec![array![[2.0, 1.0], [1.0, 1.0]]]);
        let s = g.sum(y);
        let gr = g.backward(s);
        assert_eq!(gr.wrt(x).unwrap(), &array![[3.0, 2.0]]);
    }
}
