//! A small tape-based reverse-mode differentiation engine over dense row-major tensors.
//!
//! Operations are recorded in call order, so the tape is topologically sorted by
//! construction. `backward` walks it in reverse, accumulating into per-value gradient
//! slots in a fixed order, which makes gradients bitwise reproducible.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<S> {
    shape: Vec<usize>,
    data: Vec<S>,
}

impl<S: Scalar> Tensor<S> {
    pub fn new(shape: Vec<usize>, data: Vec<S>) -> Result<Self> {
        if shape.contains(&0) {
            return Err(Error::dim(format!("shape {shape:?} has a zero dimension")));
        }
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::dim(format!(
                "shape {shape:?} needs {expected} values, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self {
            shape,
            data: vec![S::zero(); n],
        }
    }

    pub fn scalar(v: S) -> Self {
        Self {
            shape: vec![1],
            data: vec![v],
        }
    }

    /// Builds a 2-D tensor from equally long rows.
    pub fn from_rows(rows: &[Vec<S>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::dim("ragged rows"));
        }
        Self::new(vec![rows.len(), cols], rows.concat())
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [S] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<S> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    /// Rows and columns of a 2-D tensor.
    pub fn dims2(&self) -> Result<(usize, usize)> {
        match self.shape.as_slice() {
            &[r, c] => Ok((r, c)),
            s => Err(Error::dim(format!("expected a matrix, got shape {s:?}"))),
        }
    }

    pub fn at2(&self, row: usize, col: usize) -> S {
        self.data[row * self.shape[1] + col]
    }

    pub fn row(&self, row: usize) -> &[S] {
        let cols = self.shape[1];
        &self.data[row * cols..(row + 1) * cols]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn add_assign(&mut self, other: &Tensor<S>) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn add_scaled(&mut self, other: &Tensor<S>, scale: S) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += scale * b;
        }
    }

    pub fn scale(&mut self, scale: S) {
        for a in &mut self.data {
            *a *= scale;
        }
    }

    pub fn sum_squares(&self) -> S {
        self.data.iter().map(|&v| v * v).sum()
    }
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op<S> {
    Leaf,
    Affine {
        x: Var,
        w: Var,
        b: Var,
    },
    Relu(Var),
    Add(Var, Var),
    Scale(Var, S),
    SumAll(Var),
    CrossEntropy {
        logits: Var,
        labels: Vec<usize>,
        probs: Vec<S>,
    },
}

#[derive(Debug)]
pub struct Tape<S> {
    values: Vec<Tensor<S>>,
    ops: Vec<Op<S>>,
}

impl<S: Scalar> Default for Tape<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> Tape<S> {
    pub fn new() -> Self {
        Self {
            values: Vec::new(),
            ops: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn push(&mut self, value: Tensor<S>, op: Op<S>) -> Var {
        self.values.push(value);
        self.ops.push(op);
        Var(self.values.len() - 1)
    }

    /// Records an input or parameter. Every leaf receives a gradient slot.
    pub fn leaf(&mut self, value: Tensor<S>) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &Tensor<S> {
        &self.values[v.0]
    }

    /// `x[B×I] · w[I×O] + b[O]`, bias broadcast over rows.
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (batch, fan_in) = self.value(x).dims2()?;
        let (w_in, fan_out) = self.value(w).dims2()?;
        if w_in != fan_in {
            return Err(Error::dim(format!(
                "affine: input width {fan_in} does not match weight rows {w_in}"
            )));
        }
        if self.value(b).shape() != [fan_out] {
            return Err(Error::dim(format!(
                "affine: bias shape {:?} does not match output width {fan_out}",
                self.value(b).shape()
            )));
        }
        let (xv, wv, bv) = (self.value(x), self.value(w), self.value(b));
        let mut out = Vec::with_capacity(batch * fan_out);
        for r in 0..batch {
            out.extend_from_slice(bv.data());
            let row = &mut out[r * fan_out..];
            for (i, &xi) in xv.row(r).iter().enumerate() {
                if xi == S::zero() {
                    continue;
                }
                for (o, &wio) in wv.row(i).iter().enumerate() {
                    row[o] += xi * wio;
                }
            }
        }
        let value = Tensor::new(vec![batch, fan_out], out)?;
        Ok(self.push(value, Op::Affine { x, w, b }))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let src = self.value(x);
        let data = src.data().iter().map(|&v| v.max(S::zero())).collect();
        let value = Tensor {
            shape: src.shape().to_vec(),
            data,
        };
        self.push(value, Op::Relu(x))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(Error::dim(format!(
                "add: shapes {:?} and {:?} differ",
                av.shape(),
                bv.shape()
            )));
        }
        let mut value = av.clone();
        value.add_assign(bv);
        Ok(self.push(value, Op::Add(a, b)))
    }

    pub fn scale(&mut self, x: Var, c: S) -> Var {
        let mut value = self.value(x).clone();
        value.scale(c);
        self.push(value, Op::Scale(x, c))
    }

    pub fn sum_all(&mut self, x: Var) -> Var {
        let total = self.value(x).data().iter().copied().sum();
        self.push(Tensor::scalar(total), Op::SumAll(x))
    }

    /// Mean over the batch of `-log softmax(logits)[label]`, stabilized by subtracting the row max.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let (batch, classes) = self.value(logits).dims2()?;
        if labels.len() != batch {
            return Err(Error::input(format!(
                "{} labels for a batch of {batch}",
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::input(format!(
                "label {bad} out of range for {classes} classes"
            )));
        }
        let lv = self.value(logits);
        let mut probs = Vec::with_capacity(batch * classes);
        let mut total = S::zero();
        for (r, &label) in labels.iter().enumerate() {
            let row = lv.row(r);
            let max = row.iter().copied().fold(S::neg_infinity(), S::max);
            // The max term contributes exactly 1; the rest goes through ln_1p.
            let mut rest = S::zero();
            let mut seen_max = false;
            for &v in row {
                if v == max && !seen_max {
                    seen_max = true;
                } else {
                    rest += (v - max).exp();
                }
            }
            let denom = S::one() + rest;
            let log_denom = rest.ln_1p();
            for &v in row {
                probs.push((v - max).exp() / denom);
            }
            total += log_denom - (row[label] - max);
        }
        let loss = total / S::of(batch as f64);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::CrossEntropy {
                logits,
                labels: labels.to_vec(),
                probs,
            },
        ))
    }

    /// Propagates `d loss / d value` for every recorded value and clears the tape.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients<S>> {
        if loss.0 >= self.values.len() {
            return Err(Error::Usage("loss handle is not on this tape".into()));
        }
        if !self.values[loss.0].is_scalar() {
            return Err(Error::Usage(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.values[loss.0].shape()
            )));
        }
        let mut grads: Vec<Option<Tensor<S>>> = vec![None; self.values.len()];
        grads[loss.0] = Some(Tensor {
            shape: self.values[loss.0].shape().to_vec(),
            data: vec![S::one()],
        });

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            match &self.ops[idx] {
                Op::Leaf => grads[idx] = Some(g),
                Op::Affine { x, w, b } => {
                    let (xv, wv) = (&self.values[x.0], &self.values[w.0]);
                    let (batch, fan_in) = (xv.shape()[0], xv.shape()[1]);
                    let fan_out = wv.shape()[1];
                    let mut dx = vec![S::zero(); batch * fan_in];
                    let mut dw = vec![S::zero(); fan_in * fan_out];
                    let mut db = vec![S::zero(); fan_out];
                    for r in 0..batch {
                        let grow = &g.data[r * fan_out..(r + 1) * fan_out];
                        for (o, &go) in grow.iter().enumerate() {
                            db[o] += go;
                        }
                        let xrow = xv.row(r);
                        for i in 0..fan_in {
                            let wrow = wv.row(i);
                            let mut acc = S::zero();
                            for o in 0..fan_out {
                                acc += grow[o] * wrow[o];
                            }
                            dx[r * fan_in + i] = acc;
                            let xi = xrow[i];
                            if xi != S::zero() {
                                let dwrow = &mut dw[i * fan_out..(i + 1) * fan_out];
                                for o in 0..fan_out {
                                    dwrow[o] += xi * grow[o];
                                }
                            }
                        }
                    }
                    accumulate(&mut grads, *x, vec![batch, fan_in], dx);
                    accumulate(&mut grads, *w, vec![fan_in, fan_out], dw);
                    accumulate(&mut grads, *b, vec![fan_out], db);
                }
                Op::Relu(x) => {
                    let xv = &self.values[x.0];
                    let dx = xv
                        .data()
                        .iter()
                        .zip(&g.data)
                        .map(|(&v, &gv)| if v > S::zero() { gv } else { S::zero() })
                        .collect();
                    accumulate(&mut grads, *x, xv.shape().to_vec(), dx);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, g.shape.clone(), g.data.clone());
                    accumulate(&mut grads, *b, g.shape.clone(), g.data);
                }
                Op::Scale(x, c) => {
                    let dx = g.data.iter().map(|&v| v * *c).collect();
                    accumulate(&mut grads, *x, g.shape, dx);
                }
                Op::SumAll(x) => {
                    let xv = &self.values[x.0];
                    accumulate(
                        &mut grads,
                        *x,
                        xv.shape().to_vec(),
                        vec![g.data[0]; xv.len()],
                    );
                }
                Op::CrossEntropy {
                    logits,
                    labels,
                    probs,
                } => {
                    let shape = self.values[logits.0].shape().to_vec();
                    let classes = shape[1];
                    let scale = g.data[0] / S::of(labels.len() as f64);
                    let mut dl = probs.clone();
                    for (r, &label) in labels.iter().enumerate() {
                        dl[r * classes + label] -= S::one();
                    }
                    for v in &mut dl {
                        *v *= scale;
                    }
                    accumulate(&mut grads, *logits, shape, dl);
                }
            }
        }

        self.values.clear();
        self.ops.clear();
        Ok(Gradients { slots: grads })
    }
}

fn accumulate<S: Scalar>(grads: &mut [Option<Tensor<S>>], v: Var, shape: Vec<usize>, data: Vec<S>) {
    match &mut grads[v.0] {
        Some(existing) => {
            for (a, b) in existing.data.iter_mut().zip(data) {
                *a += b;
            }
        }
        slot @ None => *slot = Some(Tensor { shape, data }),
    }
}

/// Gradients produced by [`Tape::backward`], indexed by the leaf handles recorded before it.
#[derive(Debug)]
pub struct Gradients<S> {
    slots: Vec<Option<Tensor<S>>>,
}

impl<S: Scalar> Gradients<S> {
    /// Gradient for a leaf; `None` when the loss does not depend on it.
    pub fn get(&self, v: Var) -> Option<&Tensor<S>> {
        self.slots.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor<S>> {
        self.slots.get_mut(v.0).and_then(Option::take)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn t(shape: Vec<usize>, data: Vec<f64>) -> Tensor<f64> {
        Tensor::new(shape, data).unwrap()
    }

    #[test]
    fn affine_examples() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(vec![1, 2], vec![1.0, 2.0]));
        let w = tape.leaf(t(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]));
        let b = tape.leaf(t(vec![2], vec![0.0, 0.0]));
        let y = tape.affine(x, w, b).unwrap();
        assert_eq!(tape.value(y).data(), &[1.0, 2.0]);

        let x = tape.leaf(t(vec![1, 2], vec![1.0, 1.0]));
        let w = tape.leaf(t(vec![2, 2], vec![2.0, 3.0, 4.0, 5.0]));
        let b = tape.leaf(t(vec![2], vec![1.0, 1.0]));
        let y = tape.affine(x, w, b).unwrap();
        assert_eq!(tape.value(y).data(), &[7.0, 9.0]);

        let x = tape.leaf(t(vec![1, 2], vec![0.0, 0.0]));
        let w = tape.leaf(t(vec![2, 2], vec![-3.0, 8.0, 0.5, 2.0]));
        let b = tape.leaf(t(vec![2], vec![5.0, 5.0]));
        let y = tape.affine(x, w, b).unwrap();
        assert_eq!(tape.value(y).data(), &[5.0, 5.0]);
    }

    #[test]
    fn affine_rejects_mismatched_shapes() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::zeros(vec![1, 3]));
        let w = tape.leaf(Tensor::zeros(vec![2, 2]));
        let b = tape.leaf(Tensor::zeros(vec![2]));
        assert!(matches!(tape.affine(x, w, b), Err(Error::Dimension(_))));
        let w = tape.leaf(Tensor::zeros(vec![3, 2]));
        let b = tape.leaf(Tensor::zeros(vec![3]));
        assert!(matches!(tape.affine(x, w, b), Err(Error::Dimension(_))));
    }

    #[test]
    fn tensor_rejects_bad_shape() {
        assert!(Tensor::<f64>::new(vec![2, 2], vec![1.0; 3]).is_err());
        assert!(Tensor::<f64>::new(vec![0], vec![]).is_err());
    }

    #[test]
    fn relu_forward_and_dead_gradient() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(vec![3], vec![-1.0, 0.0, 2.0]));
        let y = tape.relu(x);
        assert_eq!(tape.value(y).data(), &[0.0, 0.0, 2.0]);
        let s = tape.sum_all(y);
        let g = tape.backward(s).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[0.0, 0.0, 1.0]);

        let mut tape = Tape::new();
        let w = tape.leaf(Tensor::scalar(-2.0));
        let y = tape.relu(w);
        let g = tape.backward(y).unwrap();
        assert_eq!(g.get(w).unwrap().data(), &[0.0]);
    }

    #[test]
    fn cross_entropy_examples() {
        let ce = |logits: Vec<f64>, label| {
            let mut tape = Tape::new();
            let l = tape.leaf(t(vec![1, 2], logits));
            let loss = tape.softmax_cross_entropy(l, &[label]).unwrap();
            tape.value(loss).data()[0]
        };
        assert!((ce(vec![0.0, 0.0], 0) - 2f64.ln()).abs() < 1e-15);
        // ln(1 + e^-20)
        let expected = (-20f64).exp().ln_1p();
        assert!((ce(vec![10.0, -10.0], 0) - expected).abs() < 1e-18);
        assert!((expected - 2.06e-9).abs() < 1e-11);
        assert!((ce(vec![10.0, -10.0], 1) - 20.0).abs() < 1e-8);
    }

    #[test]
    fn cross_entropy_rejects_bad_labels() {
        let mut tape = Tape::<f64>::new();
        let l = tape.leaf(Tensor::zeros(vec![1, 2]));
        assert!(matches!(
            tape.softmax_cross_entropy(l, &[2]),
            Err(Error::Input(_))
        ));
        assert!(tape.softmax_cross_entropy(l, &[0, 1]).is_err());
    }

    #[test]
    fn backward_linear_scalar() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(vec![1, 1], vec![3.0]));
        let w = tape.leaf(t(vec![1, 1], vec![0.7]));
        let b = tape.leaf(t(vec![1], vec![0.0]));
        let y = tape.affine(x, w, b).unwrap();
        let g = tape.backward(y).unwrap();
        assert_eq!(g.get(w).unwrap().data(), &[3.0]);
        assert!(tape.is_empty());
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::zeros(vec![2]));
        assert!(matches!(tape.backward(x), Err(Error::Usage(_))));
    }

    fn random_tensor(rng: &mut ChaCha8Rng, shape: Vec<usize>) -> Tensor<f64> {
        let n = shape.iter().product();
        t(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
    }

    /// Two-layer net with a residual sum, scored by cross-entropy.
    fn net_loss(
        params: &[Tensor<f64>],
        x: &Tensor<f64>,
        labels: &[usize],
    ) -> (f64, Vec<Tensor<f64>>) {
        let mut tape = Tape::new();
        let xv = tape.leaf(x.clone());
        let vars: Vec<Var> = params.iter().map(|p| tape.leaf(p.clone())).collect();
        let h = tape.affine(xv, vars[0], vars[1]).unwrap();
        let h = tape.relu(h);
        let h2 = tape.affine(h, vars[2], vars[3]).unwrap();
        let h2 = tape.relu(h2);
        let s = tape.add(h, h2).unwrap();
        let logits = tape.affine(s, vars[4], vars[5]).unwrap();
        let loss = tape.softmax_cross_entropy(logits, labels).unwrap();
        let value = tape.value(loss).data()[0];
        let mut grads = tape.backward(loss).unwrap();
        let gs = vars.iter().map(|&v| grads.take(v).unwrap()).collect();
        (value, gs)
    }

    #[test]
    fn gradients_match_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..5 {
            let (batch, din, hid, classes) = (4, 3, 5, 3);
            let params = vec![
                random_tensor(&mut rng, vec![din, hid]),
                random_tensor(&mut rng, vec![hid]),
                random_tensor(&mut rng, vec![hid, hid]),
                random_tensor(&mut rng, vec![hid]),
                random_tensor(&mut rng, vec![hid, classes]),
                random_tensor(&mut rng, vec![classes]),
            ];
            let x = random_tensor(&mut rng, vec![batch, din]);
            let labels: Vec<usize> = (0..batch).map(|_| rng.random_range(0..classes)).collect();
            let (_, grads) = net_loss(&params, &x, &labels);
            let h = 1e-4;
            for (pi, p) in params.iter().enumerate() {
                for k in 0..p.len() {
                    let mut plus = params.clone();
                    plus[pi].data_mut()[k] += h;
                    let mut minus = params.clone();
                    minus[pi].data_mut()[k] -= h;
                    let fd = (net_loss(&plus, &x, &labels).0 - net_loss(&minus, &x, &labels).0)
                        / (2.0 * h);
                    let an = grads[pi].data()[k];
                    if an.abs() > 1e-8 {
                        let rel = (an - fd).abs() / fd.abs().max(1e-8);
                        assert!(rel < 1e-5, "param {pi}[{k}]: analytic {an} vs fd {fd}");
                    }
                }
            }
        }
    }

    #[test]
    fn repeated_backward_is_bitwise_identical() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let params: Vec<_> = [
            vec![3, 4],
            vec![4],
            vec![4, 4],
            vec![4],
            vec![4, 2],
            vec![2],
        ]
        .into_iter()
        .map(|s| random_tensor(&mut rng, s))
        .collect();
        let x = random_tensor(&mut rng, vec![6, 3]);
        let labels = [0, 1, 1, 0, 1, 0];
        let a = net_loss(&params, &x, &labels);
        let b = net_loss(&params, &x, &labels);
        assert_eq!(a.0.to_bits(), b.0.to_bits());
        assert_eq!(a.1, b.1);
    }

    #[test]
    fn gradient_of_sum_is_sum_of_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let w0 = random_tensor(&mut rng, vec![3, 3]);
            let b0 = random_tensor(&mut rng, vec![3]);
            let x = random_tensor(&mut rng, vec![2, 3]);
            let run = |which: u8| {
                let mut tape = Tape::new();
                let xv = tape.leaf(x.clone());
                let w = tape.leaf(w0.clone());
                let b = tape.leaf(b0.clone());
                let a = tape.affine(xv, w, b).unwrap();
                let a = tape.relu(a);
                let la = tape.sum_all(a);
                let c = tape.affine(xv, w, b).unwrap();
                let lc = tape.softmax_cross_entropy(c, &[0, 2]).unwrap();
                let lc = tape.scale(lc, 0.5);
                let loss = match which {
                    0 => la,
                    1 => lc,
                    _ => tape.add(la, lc).unwrap(),
                };
                tape.backward(loss).unwrap().take(w).unwrap()
            };
            let (ga, gc, gs) = (run(0), run(1), run(2));
            for k in 0..gs.len() {
                let sum = ga.data()[k] + gc.data()[k];
                assert!((gs.data()[k] - sum).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn f32_tape_runs() {
        let mut tape = Tape::<f32>::new();
        let l = tape.leaf(Tensor::new(vec![1, 2], vec![0.0f32, 0.0]).unwrap());
        let loss = tape.softmax_cross_entropy(l, &[1]).unwrap();
        assert!((tape.value(loss).data()[0] - std::f32::consts::LN_2).abs() < 1e-6);
    }
}
