//! Tape-based reverse-mode differentiation over frame sequences.
//!
//! Every value on the tape is a `frames × channels` matrix ([`SeqTensor`]).
//! Parameters use the same container: a pointwise weight is `Cout × Cin`, a
//! dilated kernel is `Cout × (Cin·r)` with tap `j` of input channel `ci` stored
//! in column `ci·r + j`, and biases are `1 × Cout` rows. Scalars (losses) are
//! `1 × 1`.
//!
//! ```
//! use tempseg_core::matrix::Matrix;
//! use tempseg_core::seqgrad::Tape;
//!
//! let mut tape = Tape::new();
//! let x = tape.param(Matrix::column(&[3.0]));
//! let zero = tape.constant(Matrix::column(&[0.0]));
//! let loss = tape.mse(x, zero).unwrap();
//! tape.backward(loss).unwrap();
//! assert_eq!(tape.grad(x).unwrap().as_slice(), &[6.0]);
//! ```

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, Result};
use crate::matrix::Matrix;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

/// A recorded sequence value with its (optional) accumulated gradient.
#[derive(Debug, Clone)]
pub struct SeqTensor {
    pub data: Matrix,
    pub requires_grad: bool,
    pub grad: Option<Matrix>,
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Conv1d { input: NodeId, weight: NodeId, bias: NodeId, dilation: usize, taps: usize },
    Pointwise { input: NodeId, weight: NodeId, bias: NodeId },
    Relu(NodeId),
    Concat(NodeId, NodeId),
    Add(NodeId, NodeId),
    Scale(NodeId, f64),
    Mask(NodeId, Matrix),
    Mse(NodeId, NodeId),
}

#[derive(Debug, Clone)]
struct Node {
    tensor: SeqTensor,
    op: Op,
}

/// Records operations in execution order; inputs always precede their users.
#[derive(Debug, Clone, Default)]
pub struct Tape {
    nodes: Vec<Node>,
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

    fn push(&mut self, data: Matrix, requires_grad: bool, op: Op) -> NodeId {
        self.nodes.push(Node { tensor: SeqTensor { data, requires_grad, grad: None }, op });
        NodeId(self.nodes.len() - 1)
    }

    fn needs(&self, ids: &[NodeId]) -> bool {
        ids.iter().any(|id| self.nodes[id.0].tensor.requires_grad)
    }

    /// Records a trainable leaf.
    pub fn param(&mut self, value: Matrix) -> NodeId {
        self.push(value, true, Op::Leaf)
    }

    /// Records a leaf that never receives gradients.
    pub fn constant(&mut self, value: Matrix) -> NodeId {
        self.push(value, false, Op::Leaf)
    }

    pub fn value(&self, id: NodeId) -> &Matrix {
        &self.nodes[id.0].tensor.data
    }

    pub fn tensor(&self, id: NodeId) -> &SeqTensor {
        &self.nodes[id.0].tensor
    }

    /// Value of a `1 × 1` node.
    pub fn scalar(&self, id: NodeId) -> f64 {
        self.nodes[id.0].tensor.data.as_slice()[0]
    }

    /// Accumulated gradient of a trainable leaf (after [`Tape::backward`]).
    pub fn grad(&self, id: NodeId) -> Option<&Matrix> {
        self.nodes[id.0].tensor.grad.as_ref()
    }

    pub fn zero_grad(&mut self) {
        for node in &mut self.nodes {
            node.tensor.grad = None;
        }
    }

    /// Dilated temporal convolution with zero "same" padding.
    ///
    /// `out[t, co] = bias[co] + Σ_ci Σ_j w[co, ci, j] · in[t + (j - (r-1)/2)·dilation, ci]`.
    pub fn conv1d_dilated(
        &mut self,
        input: NodeId,
        weight: NodeId,
        bias: NodeId,
        dilation: usize,
    ) -> Result<NodeId> {
        let x = self.value(input);
        let w = self.value(weight);
        let b = self.value(bias);
        let (frames, cin) = x.shape();
        let cout = w.rows();
        if dilation == 0 {
            return Err(invalid!("dilation must be positive"));
        }
        if cin == 0 || w.cols() % cin != 0 {
            return Err(invalid!(
                "kernel has {} columns, not a multiple of {cin} input channels",
                w.cols()
            ));
        }
        let taps = w.cols() / cin;
        if taps % 2 == 0 {
            return Err(invalid!("kernel size {taps} must be odd"));
        }
        if b.shape() != (1, cout) {
            return Err(invalid!("bias shape {:?} does not match {cout} output channels", b.shape()));
        }
        let half = (taps - 1) / 2;
        // Tap-major copy of the kernel so the inner loop runs over contiguous input channels.
        let mut wt = vec![0.0; taps * cout * cin];
        for co in 0..cout {
            for ci in 0..cin {
                for j in 0..taps {
                    wt[(j * cout + co) * cin + ci] = w[(co, ci * taps + j)];
                }
            }
        }
        let mut out = Matrix::zeros(frames, cout);
        for t in 0..frames {
            let orow = out.row_mut(t);
            orow.copy_from_slice(b.row(0));
            for j in 0..taps {
                let Some(src) = shifted(t, j, half, dilation, frames) else { continue };
                let xrow = x.row(src);
                for (co, o) in orow.iter_mut().enumerate() {
                    let wrow = &wt[(j * cout + co) * cin..(j * cout + co + 1) * cin];
                    *o += dot(wrow, xrow);
                }
            }
        }
        let rg = self.needs(&[input, weight, bias]);
        Ok(self.push(out, rg, Op::Conv1d { input, weight, bias, dilation, taps }))
    }

    /// Per-frame affine map (`1×1` convolution / fully connected layer).
    pub fn pointwise_conv(&mut self, input: NodeId, weight: NodeId, bias: NodeId) -> Result<NodeId> {
        let x = self.value(input);
        let w = self.value(weight);
        let b = self.value(bias);
        let (frames, cin) = x.shape();
        let cout = w.rows();
        if w.cols() != cin {
            return Err(invalid!("weight expects {} input channels, got {cin}", w.cols()));
        }
        if b.shape() != (1, cout) {
            return Err(invalid!("bias shape {:?} does not match {cout} output channels", b.shape()));
        }
        let mut out = Matrix::zeros(frames, cout);
        for t in 0..frames {
            let xrow = x.row(t);
            let orow = out.row_mut(t);
            for (co, o) in orow.iter_mut().enumerate() {
                *o = b[(0, co)] + dot(w.row(co), xrow);
            }
        }
        let rg = self.needs(&[input, weight, bias]);
        Ok(self.push(out, rg, Op::Pointwise { input, weight, bias }))
    }

    pub fn relu(&mut self, input: NodeId) -> NodeId {
        let mut out = self.value(input).clone();
        for v in out.as_mut_slice() {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        let rg = self.needs(&[input]);
        self.push(out, rg, Op::Relu(input))
    }

    /// Channel-wise concatenation, columns of `a` first.
    pub fn concat_channels(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.rows() != vb.rows() {
            return Err(invalid!("cannot concatenate {} and {} frames", va.rows(), vb.rows()));
        }
        let (frames, ca, cb) = (va.rows(), va.cols(), vb.cols());
        let mut out = Matrix::zeros(frames, ca + cb);
        for t in 0..frames {
            let row = out.row_mut(t);
            row[..ca].copy_from_slice(va.row(t));
            row[ca..].copy_from_slice(vb.row(t));
        }
        let rg = self.needs(&[a, b]);
        Ok(self.push(out, rg, Op::Concat(a, b)))
    }

    /// Elementwise sum of two equally shaped values.
    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(invalid!("cannot add shapes {:?} and {:?}", va.shape(), vb.shape()));
        }
        let mut out = va.clone();
        for (o, v) in out.as_mut_slice().iter_mut().zip(vb.as_slice()) {
            *o += v;
        }
        let rg = self.needs(&[a, b]);
        Ok(self.push(out, rg, Op::Add(a, b)))
    }

    pub fn scale(&mut self, input: NodeId, factor: f64) -> NodeId {
        let mut out = self.value(input).clone();
        out.as_mut_slice().iter_mut().for_each(|v| *v *= factor);
        let rg = self.needs(&[input]);
        self.push(out, rg, Op::Scale(input, factor))
    }

    /// Multiplies by a fixed mask of the same shape (used for dropout).
    pub fn mask(&mut self, input: NodeId, mask: Matrix) -> Result<NodeId> {
        let x = self.value(input);
        if x.shape() != mask.shape() {
            return Err(invalid!("mask shape {:?} does not match {:?}", mask.shape(), x.shape()));
        }
        let mut out = x.clone();
        for (o, m) in out.as_mut_slice().iter_mut().zip(mask.as_slice()) {
            *o *= m;
        }
        let rg = self.needs(&[input]);
        Ok(self.push(out, rg, Op::Mask(input, mask)))
    }

    /// Sum of squared differences as a `1 × 1` node.
    pub fn mse(&mut self, pred: NodeId, target: NodeId) -> Result<NodeId> {
        let (p, q) = (self.value(pred), self.value(target));
        if p.shape() != q.shape() {
            return Err(invalid!("mse shapes differ: {:?} vs {:?}", p.shape(), q.shape()));
        }
        let sum = p.as_slice().iter().zip(q.as_slice()).map(|(a, b)| (a - b) * (a - b)).sum();
        let rg = self.needs(&[pred, target]);
        Ok(self.push(Matrix::filled(1, 1, sum), rg, Op::Mse(pred, target)))
    }

    /// Propagates d(loss)/d(node) back to every trainable leaf, adding into
    /// previously accumulated gradients. Unreached trainable leaves receive zeros.
    pub fn backward(&mut self, loss: NodeId) -> Result<()> {
        if self.value(loss).shape() != (1, 1) {
            return Err(invalid!("loss must be scalar, got shape {:?}", self.value(loss).shape()));
        }
        let mut adj: Vec<Option<Matrix>> = vec![None; loss.0 + 1];
        adj[loss.0] = Some(Matrix::filled(1, 1, 1.0));

        for idx in (0..=loss.0).rev() {
            if !self.nodes[idx].tensor.requires_grad {
                continue;
            }
            let Some(g) = adj[idx].take() else { continue };
            match &self.nodes[idx].op {
                Op::Leaf => {
                    adj[idx] = Some(g);
                }
                Op::Relu(input) => {
                    let x = self.value(*input);
                    let mut gi = g;
                    for (gv, xv) in gi.as_mut_slice().iter_mut().zip(x.as_slice()) {
                        if *xv <= 0.0 {
                            *gv = 0.0;
                        }
                    }
                    self.accumulate(&mut adj, *input, gi);
                }
                Op::Add(a, b) => {
                    let (a, b) = (*a, *b);
                    self.accumulate(&mut adj, a, g.clone());
                    self.accumulate(&mut adj, b, g);
                }
                Op::Scale(input, factor) => {
                    let (input, factor) = (*input, *factor);
                    let mut gi = g;
                    gi.as_mut_slice().iter_mut().for_each(|v| *v *= factor);
                    self.accumulate(&mut adj, input, gi);
                }
                Op::Mask(input, mask) => {
                    let mut gi = g;
                    for (gv, m) in gi.as_mut_slice().iter_mut().zip(mask.as_slice()) {
                        *gv *= m;
                    }
                    let input = *input;
                    self.accumulate(&mut adj, input, gi);
                }
                Op::Concat(a, b) => {
                    let (a, b) = (*a, *b);
                    let ca = self.value(a).cols();
                    let cb = self.value(b).cols();
                    let frames = g.rows();
                    let mut ga = Matrix::zeros(frames, ca);
                    let mut gb = Matrix::zeros(frames, cb);
                    for t in 0..frames {
                        ga.row_mut(t).copy_from_slice(&g.row(t)[..ca]);
                        gb.row_mut(t).copy_from_slice(&g.row(t)[ca..]);
                    }
                    self.accumulate(&mut adj, a, ga);
                    self.accumulate(&mut adj, b, gb);
                }
                Op::Mse(pred, target) => {
                    let (pred, target) = (*pred, *target);
                    let seed = g.as_slice()[0];
                    let p = self.value(pred);
                    let q = self.value(target);
                    let mut gp = p.clone();
                    for (o, t) in gp.as_mut_slice().iter_mut().zip(q.as_slice()) {
                        *o = 2.0 * (*o - t) * seed;
                    }
                    let mut gt = gp.clone();
                    gt.as_mut_slice().iter_mut().for_each(|v| *v = -*v);
                    self.accumulate(&mut adj, pred, gp);
                    self.accumulate(&mut adj, target, gt);
                }
                Op::Pointwise { input, weight, bias } => {
                    let (input, weight, bias) = (*input, *weight, *bias);
                    let x = self.value(input);
                    let w = self.value(weight);
                    let (frames, cin) = x.shape();
                    let cout = w.rows();
                    let mut gx = Matrix::zeros(frames, cin);
                    let mut gw = Matrix::zeros(cout, cin);
                    let mut gb = Matrix::zeros(1, cout);
                    for t in 0..frames {
                        let grow = g.row(t);
                        let xrow = x.row(t);
                        for (co, &gv) in grow.iter().enumerate() {
                            if gv == 0.0 {
                                continue;
                            }
                            gb[(0, co)] += gv;
                            axpy(gv, xrow, gw.row_mut(co));
                            axpy(gv, w.row(co), gx.row_mut(t));
                        }
                    }
                    self.accumulate(&mut adj, input, gx);
                    self.accumulate(&mut adj, weight, gw);
                    self.accumulate(&mut adj, bias, gb);
                }
                Op::Conv1d { input, weight, bias, dilation, taps } => {
                    let (input, weight, bias, dilation, taps) =
                        (*input, *weight, *bias, *dilation, *taps);
                    let x = self.value(input);
                    let w = self.value(weight);
                    let (frames, cin) = x.shape();
                    let cout = w.rows();
                    let half = (taps - 1) / 2;
                    // Tap-major layouts: gwt[j][co][ci] and wt[j][co][ci].
                    let mut wt = vec![0.0; taps * cout * cin];
                    for co in 0..cout {
                        for ci in 0..cin {
                            for j in 0..taps {
                                wt[(j * cout + co) * cin + ci] = w[(co, ci * taps + j)];
                            }
                        }
                    }
                    let mut gwt = vec![0.0; taps * cout * cin];
                    let mut gx = Matrix::zeros(frames, cin);
                    let mut gb = Matrix::zeros(1, cout);
                    for t in 0..frames {
                        let grow = g.row(t);
                        for (co, &gv) in grow.iter().enumerate() {
                            gb[(0, co)] += gv;
                        }
                        for j in 0..taps {
                            let Some(src) = shifted(t, j, half, dilation, frames) else { continue };
                            let xrow = x.row(src);
                            for (co, &gv) in grow.iter().enumerate() {
                                if gv == 0.0 {
                                    continue;
                                }
                                let base = (j * cout + co) * cin;
                                axpy(gv, xrow, &mut gwt[base..base + cin]);
                                axpy(gv, &wt[base..base + cin], gx.row_mut(src));
                            }
                        }
                    }
                    let mut gw = Matrix::zeros(cout, cin * taps);
                    for co in 0..cout {
                        for ci in 0..cin {
                            for j in 0..taps {
                                gw[(co, ci * taps + j)] = gwt[(j * cout + co) * cin + ci];
                            }
                        }
                    }
                    self.accumulate(&mut adj, input, gx);
                    self.accumulate(&mut adj, weight, gw);
                    self.accumulate(&mut adj, bias, gb);
                }
            }
        }

        for (idx, node) in self.nodes.iter_mut().enumerate() {
            if !node.tensor.requires_grad || !matches!(node.op, Op::Leaf) {
                continue;
            }
            let (rows, cols) = node.tensor.data.shape();
            let contribution = adj.get_mut(idx).and_then(Option::take);
            let acc = node.tensor.grad.get_or_insert_with(|| Matrix::zeros(rows, cols));
            if let Some(c) = contribution {
                for (a, v) in acc.as_mut_slice().iter_mut().zip(c.as_slice()) {
                    *a += v;
                }
            }
        }
        Ok(())
    }

    fn accumulate(&self, adj: &mut [Option<Matrix>], id: NodeId, g: Matrix) {
        if !self.nodes[id.0].tensor.requires_grad {
            return;
        }
        match &mut adj[id.0] {
            Some(acc) => {
                for (a, v) in acc.as_mut_slice().iter_mut().zip(g.as_slice()) {
                    *a += v;
                }
            }
            slot @ None => *slot = Some(g),
        }
    }
}

/// Source frame for output frame `t` and kernel tap `j`, or `None` in the padding.
#[inline]
fn shifted(t: usize, j: usize, half: usize, dilation: usize, frames: usize) -> Option<usize> {
    let pos = t as isize + (j as isize - half as isize) * dilation as isize;
    (pos >= 0 && (pos as usize) < frames).then_some(pos as usize)
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yv, xv) in y.iter_mut().zip(x) {
        *yv += alpha * xv;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
        let data = (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect();
        Matrix::from_vec(rows, cols, data).unwrap()
    }

    /// Central differences of `f` with respect to every entry of every leaf
    /// in `leaves`, compared to the tape gradient. Returns the worst relative error.
    fn gradient_error<F>(leaves: Vec<Matrix>, f: F) -> f64
    where
        F: Fn(&mut Tape, &[NodeId]) -> NodeId,
    {
        let eval = |values: &[Matrix]| {
            let mut tape = Tape::new();
            let ids: Vec<_> = values.iter().map(|v| tape.param(v.clone())).collect();
            let loss = f(&mut tape, &ids);
            tape.scalar(loss)
        };
        let mut tape = Tape::new();
        let ids: Vec<_> = leaves.iter().map(|v| tape.param(v.clone())).collect();
        let loss = f(&mut tape, &ids);
        tape.backward(loss).unwrap();

        let eps = 1e-5;
        let mut worst: f64 = 0.0;
        for (li, leaf) in leaves.iter().enumerate() {
            let analytic = tape.grad(ids[li]).unwrap().clone();
            for k in 0..leaf.as_slice().len() {
                let mut plus = leaves.clone();
                plus[li].as_mut_slice()[k] += eps;
                let mut minus = leaves.clone();
                minus[li].as_mut_slice()[k] -= eps;
                let numeric = (eval(&plus) - eval(&minus)) / (2.0 * eps);
                let a = analytic.as_slice()[k];
                let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1.0);
                worst = worst.max(err);
            }
        }
        worst
    }

    #[test]
    fn identity_kernel_is_identity() {
        let mut tape = Tape::new();
        let x = tape.constant(Matrix::column(&[1.0, 2.0, 3.0, 4.0]));
        let w = tape.constant(Matrix::from_rows(&[[0.0, 1.0, 0.0]]).unwrap());
        let b = tape.constant(Matrix::zeros(1, 1));
        for dilation in 1..4 {
            let y = tape.conv1d_dilated(x, w, b, dilation).unwrap();
            assert_eq!(tape.value(y).as_slice(), &[1.0, 2.0, 3.0, 4.0]);
        }
    }

    #[test]
    fn left_tap_shifts_with_zero_padding() {
        let mut tape = Tape::new();
        let x = tape.constant(Matrix::column(&[1.0, 2.0, 3.0, 4.0]));
        let w = tape.constant(Matrix::from_rows(&[[1.0, 0.0, 0.0]]).unwrap());
        let b = tape.constant(Matrix::zeros(1, 1));
        let y = tape.conv1d_dilated(x, w, b, 2).unwrap();
        assert_eq!(tape.value(y).as_slice(), &[0.0, 0.0, 1.0, 2.0]);
    }

    #[test]
    fn conv_rejects_channel_mismatch() {
        let mut tape = Tape::new();
        let x = tape.constant(Matrix::zeros(4, 2));
        let w = tape.constant(Matrix::zeros(1, 3));
        let b = tape.constant(Matrix::zeros(1, 1));
        assert!(matches!(
            tape.conv1d_dilated(x, w, b, 1),
            Err(crate::Error::InvalidArgument(_))
        ));
        let w_even = tape.constant(Matrix::zeros(1, 4));
        assert!(tape.conv1d_dilated(x, w_even, b, 1).is_err());
    }

    #[test]
    fn conv_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for dilation in [1, 2, 4] {
            let leaves = vec![random(&mut rng, 9, 3), random(&mut rng, 2, 9), random(&mut rng, 1, 2)];
            let target = random(&mut rng, 9, 2);
            let err = gradient_error(leaves, |tape, ids| {
                let y = tape.conv1d_dilated(ids[0], ids[1], ids[2], dilation).unwrap();
                let t = tape.constant(target.clone());
                tape.mse(y, t).unwrap()
            });
            assert!(err < 1e-4, "dilation {dilation}: {err}");
        }
    }

    #[test]
    fn pointwise_identity_and_arithmetic() {
        let mut tape = Tape::new();
        let x = tape.constant(Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap());
        let eye = tape.constant(Matrix::identity(2));
        let zero = tape.constant(Matrix::zeros(1, 2));
        let y = tape.pointwise_conv(x, eye, zero).unwrap();
        assert_eq!(tape.value(y), tape.value(x));

        let x = tape.constant(Matrix::from_rows(&[[1.0, 2.0]]).unwrap());
        let w = tape.constant(Matrix::from_rows(&[[1.0, 1.0]]).unwrap());
        let b = tape.constant(Matrix::filled(1, 1, 3.0));
        let y = tape.pointwise_conv(x, w, b).unwrap();
        assert_eq!(tape.value(y).as_slice(), &[6.0]);

        let bad = tape.constant(Matrix::zeros(1, 3));
        assert!(tape.pointwise_conv(x, bad, b).is_err());
    }

    #[test]
    fn pointwise_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let leaves = vec![random(&mut rng, 5, 4), random(&mut rng, 3, 4), random(&mut rng, 1, 3)];
        let target = random(&mut rng, 5, 3);
        let err = gradient_error(leaves, |tape, ids| {
            let y = tape.pointwise_conv(ids[0], ids[1], ids[2]).unwrap();
            let t = tape.constant(target.clone());
            tape.mse(y, t).unwrap()
        });
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn relu_forward_and_gradient() {
        let mut tape = Tape::new();
        let x = tape.param(Matrix::column(&[-1.0, 0.0, 2.0]));
        let y = tape.relu(x);
        assert_eq!(tape.value(y).as_slice(), &[0.0, 0.0, 2.0]);

        let neg = tape.param(Matrix::column(&[-1.0, -0.5, -3.0]));
        let y = tape.relu(neg);
        assert!(tape.value(y).as_slice().iter().all(|v| *v == 0.0));
        let zero = tape.constant(Matrix::column(&[1.0, 1.0, 1.0]));
        let loss = tape.mse(y, zero).unwrap();
        tape.backward(loss).unwrap();
        assert!(tape.grad(neg).unwrap().as_slice().iter().all(|v| *v == 0.0));

        // Entries bounded away from the kink.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut m = random(&mut rng, 6, 3);
        m.as_mut_slice().iter_mut().for_each(|v| *v += v.signum() * 0.1);
        let target = random(&mut rng, 6, 3);
        let err = gradient_error(vec![m], |tape, ids| {
            let y = tape.relu(ids[0]);
            let t = tape.constant(target.clone());
            tape.mse(y, t).unwrap()
        });
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn concat_orders_columns_and_splits_gradient() {
        let mut tape = Tape::new();
        let a = tape.constant(Matrix::column(&[1.0, 2.0]));
        let b = tape.constant(Matrix::column(&[3.0, 4.0]));
        let c = tape.concat_channels(a, b).unwrap();
        assert_eq!(tape.value(c).as_slice(), &[1.0, 3.0, 2.0, 4.0]);

        let empty = tape.constant(Matrix::zeros(2, 0));
        let c = tape.concat_channels(a, empty).unwrap();
        assert_eq!(tape.value(c), tape.value(a));

        let short = tape.constant(Matrix::column(&[1.0]));
        assert!(tape.concat_channels(a, short).is_err());

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let leaves = vec![random(&mut rng, 4, 2), random(&mut rng, 4, 3)];
        let target = random(&mut rng, 4, 5);
        let err = gradient_error(leaves, |tape, ids| {
            let y = tape.concat_channels(ids[0], ids[1]).unwrap();
            let t = tape.constant(target.clone());
            tape.mse(y, t).unwrap()
        });
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn mse_values_and_errors() {
        let mut tape = Tape::new();
        let p = tape.constant(Matrix::column(&[1.0, 2.0]));
        let q = tape.constant(Matrix::column(&[0.0, 0.0]));
        let l = tape.mse(p, p).unwrap();
        assert_eq!(tape.scalar(l), 0.0);
        let l = tape.mse(p, q).unwrap();
        assert_eq!(tape.scalar(l), 5.0);
        let r = tape.constant(Matrix::column(&[0.0]));
        assert!(tape.mse(p, r).is_err());

        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let leaves = vec![random(&mut rng, 3, 2), random(&mut rng, 3, 2)];
        let err = gradient_error(leaves, |tape, ids| tape.mse(ids[0], ids[1]).unwrap());
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn backward_basics() {
        let mut tape = Tape::new();
        let x = tape.param(Matrix::column(&[3.0]));
        let unused = tape.param(Matrix::column(&[1.0, 2.0]));
        let zero = tape.constant(Matrix::column(&[0.0]));
        let loss = tape.mse(x, zero).unwrap();
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(x).unwrap().as_slice(), &[6.0]);
        assert_eq!(tape.grad(unused).unwrap().as_slice(), &[0.0, 0.0]);

        // A second call accumulates.
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(x).unwrap().as_slice(), &[12.0]);
        tape.zero_grad();
        assert!(tape.grad(x).is_none());

        let vec_node = tape.param(Matrix::column(&[1.0, 2.0]));
        assert!(tape.backward(vec_node).is_err());
    }

    #[test]
    fn composite_graph_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let leaves = vec![
            random(&mut rng, 8, 2),
            random(&mut rng, 3, 6),
            random(&mut rng, 1, 3),
            random(&mut rng, 1, 3),
        ];
        let target = random(&mut rng, 8, 1);
        let err = gradient_error(leaves, |tape, ids| {
            let h = tape.conv1d_dilated(ids[0], ids[1], ids[2], 2).unwrap();
            let h = tape.relu(h);
            let h2 = tape.scale(h, 0.5);
            let h = tape.add(h, h2).unwrap();
            let b = tape.constant(Matrix::zeros(1, 1));
            let y = tape.pointwise_conv(h, ids[3], b).unwrap();
            let t = tape.constant(target.clone());
            tape.mse(y, t).unwrap()
        });
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn forward_is_reproducible() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random(&mut rng, 12, 3);
        let w = random(&mut rng, 4, 9);
        let b = random(&mut rng, 1, 4);
        let run = || {
            let mut tape = Tape::new();
            let (xi, wi, bi) = (tape.constant(x.clone()), tape.constant(w.clone()), tape.constant(b.clone()));
            let y = tape.conv1d_dilated(xi, wi, bi, 3).unwrap();
            tape.value(y).clone()
        };
        assert_eq!(run().as_slice(), run().as_slice());
    }
}
