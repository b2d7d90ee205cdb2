//! Reverse-mode differentiation over a recorded operation graph.
//!
//! [`Tape`] records every primitive as it executes the forward pass; each
//! record carries a closure implementing the exact adjoint. [`Tape::backward`]
//! walks the records in reverse, accumulating gradients per node. The op set
//! is exactly what the forecasting network needs: matmul, causal dilated
//! convolution, layer/rms normalization, silu/softplus/exp elementwise maps,
//! column slicing and concatenation, the state-space scan, and a masked MSE
//! head. Every adjoint is checked against central finite differences in the
//! tests below.

use crate::real::Real;
use crate::ssm;
use ndarray::{s, Array1, Array2, Array3, ArrayD, Axis, Ix1, Ix2, IxDyn};

/// Handle to a node on the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(pub(crate) usize);

type BackFn<F> = Box<dyn Fn(&[ArrayD<F>], &ArrayD<F>, &mut GradStore<F>) + Send>;

struct OpRecord<F: Real> {
    out: usize,
    back: BackFn<F>,
}

/// Gradient slots per node, filled lazily during the backward sweep.
pub struct GradStore<F: Real> {
    slots: Vec<Option<ArrayD<F>>>,
}

impl<F: Real> GradStore<F> {
    fn new(n: usize) -> Self {
        GradStore {
            slots: (0..n).map(|_| None).collect(),
        }
    }

    fn add(&mut self, id: usize, contribution: ArrayD<F>) {
        match &mut self.slots[id] {
            Some(g) => *g += &contribution,
            slot @ None => *slot = Some(contribution),
        }
    }

    /// Accumulate into a column range of a 2-d slot without materializing a
    /// full-width temporary.
    fn add_cols(&mut self, id: usize, full: (usize, usize), lo: usize, g: &ndarray::ArrayView2<'_, F>) {
        let slot = self.slots[id]
            .get_or_insert_with(|| ArrayD::zeros(IxDyn(&[full.0, full.1])));
        let mut view = slot
            .view_mut()
            .into_dimensionality::<Ix2>()
            .expect("2-d slot");
        let mut region = view.slice_mut(s![.., lo..lo + g.ncols()]);
        region += g;
    }

    /// Gradient of the loss w.r.t. the given node; zero-shaped `None` means
    /// the node does not influence the loss.
    pub fn get(&self, v: Var) -> Option<&ArrayD<F>> {
        self.slots[v.0].as_ref()
    }

    pub fn take(&mut self, v: Var) -> Option<ArrayD<F>> {
        self.slots[v.0].take()
    }
}

/// The recorded graph: values plus adjoint closures.
pub struct Tape<F: Real> {
    values: Vec<ArrayD<F>>,
    ops: Vec<OpRecord<F>>,
}

impl<F: Real> Default for Tape<F> {
    fn default() -> Self {
        Self::new()
    }
}

impl<F: Real> Tape<F> {
    pub fn new() -> Self {
        Tape {
            values: Vec::with_capacity(128),
            ops: Vec::with_capacity(128),
        }
    }

    fn push(&mut self, v: ArrayD<F>) -> usize {
        // Hand-sliced adjoints assume row-major values; some ndarray ops
        // (notably K=1 matmuls) return other layouts.
        let v = if v.is_standard_layout() {
            v
        } else {
            v.as_standard_layout().into_owned()
        };
        self.values.push(v);
        self.values.len() - 1
    }

    /// A leaf node (constant input or parameter; gradients accumulate for
    /// both, callers decide which slots they read).
    pub fn leaf(&mut self, v: ArrayD<F>) -> Var {
        Var(self.push(v))
    }

    pub fn leaf2(&mut self, v: Array2<F>) -> Var {
        self.leaf(v.into_dyn())
    }

    pub fn leaf1(&mut self, v: Array1<F>) -> Var {
        self.leaf(v.into_dyn())
    }

    pub fn value(&self, v: Var) -> &ArrayD<F> {
        &self.values[v.0]
    }

    pub fn value2(&self, v: Var) -> ndarray::ArrayView2<'_, F> {
        self.values[v.0]
            .view()
            .into_dimensionality::<Ix2>()
            .expect("2-d node")
    }

    pub fn scalar(&self, v: Var) -> F {
        *self.values[v.0].first().expect("scalar node")
    }

    /// Reverse sweep from `loss` (a scalar node). Returns the gradient
    /// store; query it with the `Var` handles of leaves.
    pub fn backward(&self, loss: Var) -> GradStore<F> {
        let mut grads = GradStore::new(self.values.len());
        let seed = ArrayD::from_elem(self.values[loss.0].raw_dim(), F::one());
        grads.slots[loss.0] = Some(seed);
        for op in self.ops.iter().rev() {
            if let Some(gout) = grads.slots[op.out].take() {
                let gout = if gout.is_standard_layout() {
                    gout
                } else {
                    gout.as_standard_layout().into_owned()
                };
                (op.back)(&self.values, &gout, &mut grads);
            }
        }
        grads
    }

    // ---- primitive ops -------------------------------------------------

    /// `(M, K) @ (K, N)`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let out = self.value2(a).dot(&self.value2(b)).into_dyn();
        let out_id = self.push(out);
        let (ai, bi) = (a.0, b.0);
        self.ops.push(OpRecord {
            out: out_id,
            back: Box::new(move |values, gout, grads| {
                let g = gout.view().into_dimensionality::<Ix2>().unwrap();
                let av = values[ai].view().into_dimensionality::<Ix2>().unwrap();
                let bv = values[bi].view().into_dimensionality::<Ix2>().unwrap();
                grads.add(ai, g.dot(&bv.t()).into_dyn());
                grads.add(bi, av.t().dot(&g).into_dyn());
            }),
        });
        Var(out_id)
    }

    /// Elementwise sum of two same-shape nodes.
    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let out = &self.values[a.0] + &self.values[b.0];
        let out_id = self.push(out);
        let (ai, bi) = (a.0, b.0);
        self.ops.push(OpRecord {
            out: out_id,
            back: Box::new(move |_, gout, grads| {
                grads.add(ai, gout.clone());
                grads.add(bi, gout.clone());
            }),
        });
        Var(out_id)
    }

    /// `(T, C) + (C)` broadcast over rows.
    pub fn add_bias(&mut self, a: Var, bias: Var) -> Var {
        let av = self.value2(a);
        let bv = self.values[bias.0]
            .view()
            .into_dimensionality::<Ix1>()
            .expect("bias is 1-d");
        let out = (&av + &bv).into_dyn();
        let out_id = self.push(out);
        let (ai, bi) = (a.0, bias.0);
        self.ops.push(OpRecord {
            out: out_id,
            back: Box::new(move |_, gout, grads| {
                let g = gout.view().into_dimensionality::<Ix2>().unwrap();
                grads.add(bi, g.sum_axis(Axis(0)).into_dyn());
                grads.add(ai, gout.clone());
            }),
        });
        Var(out_id)
    }

    /// Elementwise product of two same-shape nodes.
    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let out = &self.values[a.0] * &self.values[b.0];
        let out_id = self.push(out);
        let (ai, bi) = (a.0, b.0);
        self.ops.push(OpRecord {
            out: out_id,
            back: Box::new(move |values, gout, grads| {
                grads.add(ai, gout * &values[bi]);
                grads.add(bi, gout * &values[ai]);
            }),
        });
        Var(out_id)
    }

    /// `(T, C) * (C)` broadcast over rows.
    pub fn scale_cols(&mut self, a: Var, w: Var) -> Var {
        let av = self.value2(a);
        let wv = self.values[w.0]
            .view()
            .into_dimensionality::<Ix1>()
            .expect("scale is 1-d");
        let out = (&av * &wv).into_dyn();
        let out_id = self.push(out);
        let (ai, wi) = (a.0, w.0);
        self.ops.push(OpRecord {
            out: out_id,
            back: Box::new(move |values, gout, grads| {
                let g = gout.view().into_dimensionality::<Ix2>().unwrap();
                let av = values[ai].view().into_dimensionality::<Ix2>().unwrap();
                let wv = values[wi].view().into_dimensionality::<Ix1>().unwrap();
                grads.add(ai, (&g * &wv).into_dyn());
                grads.add(wi, (&g * &av).sum_axis(Axis(0)).into_dyn());
            }),
        });
        Var(out_id)
    }

    /// Multiply a node by a fixed scalar.
    pub fn scale(&mut self, a: Var, s: F) -> Var {
        let out = self.values[a.0].mapv(|v| v * s);
        let out_id = self.push(out);
        let ai = a.0;
        self.ops.push(OpRecord {
            out: out_id,
            back: Box::new(move |_, gout, grads| {
                grads.add(ai, gout.mapv(|v| v * s));
            }),
        });
        Var(out_id)
    }

    pub fn neg(&mut self, a: Var) -> Var {
        let out = self.values[a.0].mapv(|v| -v);
        let out_id = self.push(out);
        let ai = a.0;
        self.ops.push(OpRecord {
            out: out_id,
            back: Box::new(move |_, gout, grads| {
                grads.add(ai, gout.mapv(|v| -v));
            }),
        });
        Var(out_id)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let out = self.values[a.0].mapv(|v| v.exp());
        let out_id = self.push(out);
        let ai = a.0;
        self.ops.push(OpRecord {
            out: out_id,
            // d exp = exp, read back from the output node.
            back: Box::new(move |values, gout, grads| {
                grads.add(ai, gout * &values[out_id]);
            }),
        });
        Var(out_id)
    }

    pub fn silu(&mut self, a: Var) -> Var {
        let out = self.values[a.0].mapv(|v| v * sigmoid(v));
        let out_id = self.push(out);
        let ai = a.0;
        self.ops.push(OpRecord {
            out: out_id,
            back: Box::new(move |values, gout, grads| {
                let d = values[ai].mapv(|v| {
                    let s = sigmoid(v);
                    s * (F::one() + v * (F::one() - s))
                });
                grads.add(ai, gout * &d);
            }),
        });
        Var(out_id)
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        let out = self.values[a.0].mapv(softplus_stable);
        let out_id = self.push(out);
        let ai = a.0;
        self.ops.push(OpRecord {
            out: out_id,
            back: Box::new(move |values, gout, grads| {
                let d = values[ai].mapv(sigmoid);
                grads.add(ai, gout * &d);
            }),
        });
        Var(out_id)
    }

    /// Columns `lo..hi` of a `(T, C)` node, materialized.
    pub fn slice_cols(&mut self, a: Var, lo: usize, hi: usize) -> Var {
        let out = self.value2(a).slice(s![.., lo..hi]).to_owned().into_dyn();
        let out_id = self.push(out);
        let ai = a.0;
        self.ops.push(OpRecord {
            out: out_id,
            back: Box::new(move |values, gout, grads| {
                let g = gout.view().into_dimensionality::<Ix2>().unwrap();
                let full = values[ai].shape();
                grads.add_cols(ai, (full[0], full[1]), lo, &g);
            }),
        });
        Var(out_id)
    }

    /// Concatenate `(T, C_i)` nodes along the column axis.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|p| self.value2(*p)).collect();
        let out = ndarray::concatenate(Axis(1), &views)
            .expect("same row count")
            .into_dyn();
        let out_id = self.push(out);
        let ids: Vec<usize> = parts.iter().map(|p| p.0).collect();
        self.ops.push(OpRecord {
            out: out_id,
            back: Box::new(move |values, gout, grads| {
                let g = gout.view().into_dimensionality::<Ix2>().unwrap();
                let mut lo = 0;
                for &id in &ids {
                    let w = values[id].shape()[1];
                    grads.add(id, g.slice(s![.., lo..lo + w]).to_owned().into_dyn());
                    lo += w;
                }
            }),
        });
        Var(out_id)
    }

    /// Rows `indices` of a `(T, C)` node.
    pub fn gather_rows(&mut self, a: Var, indices: &[usize]) -> Var {
        let av = self.value2(a);
        let mut out = Array2::<F>::zeros((indices.len(), av.ncols()));
        for (row, &idx) in indices.iter().enumerate() {
            out.row_mut(row).assign(&av.row(idx));
        }
        let out_id = self.push(out.into_dyn());
        let ai = a.0;
        let idx: Vec<usize> = indices.to_vec();
        self.ops.push(OpRecord {
            out: out_id,
            back: Box::new(move |values, gout, grads| {
                let g = gout.view().into_dimensionality::<Ix2>().unwrap();
                let full = values[ai].shape();
                let mut dx = Array2::<F>::zeros((full[0], full[1]));
                for (row, &i) in idx.iter().enumerate() {
                    let mut target = dx.row_mut(i);
                    target += &g.row(row);
                }
                grads.add(ai, dx.into_dyn());
            }),
        });
        Var(out_id)
    }

    /// Mean squared error of a `(M, 1)` prediction column against a constant
    /// target vector; output is a scalar node.
    pub fn mse_against(&mut self, pred: Var, target: &Array1<F>) -> Var {
        let p = self.value2(pred);
        assert_eq!(p.ncols(), 1, "prediction must be a column");
        assert_eq!(p.nrows(), target.len(), "target length mismatch");
        let m = F::of(target.len() as f64);
        let mut acc = F::zero();
        for (i, t) in target.iter().enumerate() {
            let d = p[[i, 0]] - *t;
            acc = acc + d * d;
        }
        let out = ArrayD::from_elem(IxDyn(&[]), acc / m);
        let out_id = self.push(out);
        let pi = pred.0;
        let tgt = target.clone();
        self.ops.push(OpRecord {
            out: out_id,
            back: Box::new(move |values, gout, grads| {
                let gs = *gout.first().unwrap();
                let p = values[pi].view().into_dimensionality::<Ix2>().unwrap();
                let m = F::of(tgt.len() as f64);
                let two = F::of(2.0);
                let mut dp = Array2::<F>::zeros((tgt.len(), 1));
                for (i, t) in tgt.iter().enumerate() {
                    dp[[i, 0]] = gs * two * (p[[i, 0]] - *t) / m;
                }
                grads.add(pi, dp.into_dyn());
            }),
        });
        Var(out_id)
    }

    /// Layer normalization over the last axis of a `(T, C)` node with
    /// learnable gain and bias.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Var {
        let xv = self.value2(x);
        let gv = self.values[gamma.0]
            .view()
            .into_dimensionality::<Ix1>()
            .unwrap();
        let bv = self.values[beta.0]
            .view()
            .into_dimensionality::<Ix1>()
            .unwrap();
        let (t, c) = xv.dim();
        let cn = F::of(c as f64);
        let epsf = F::of(eps);
        let gvs = gv.as_slice().expect("contiguous");
        let bvs = bv.as_slice().expect("contiguous");
        let mut out = Array2::<F>::zeros((t, c));
        let mut xhat = Array2::<F>::zeros((t, c));
        let mut inv_std = Array1::<F>::zeros(t);
        {
            let outs = out.as_slice_mut().expect("contiguous");
            let xhats = xhat.as_slice_mut().expect("contiguous");
            for i in 0..t {
                let row = xv.row(i);
                let row = row.as_slice().expect("contiguous");
                let mut mean = F::zero();
                for v in row {
                    mean = mean + *v;
                }
                mean = mean / cn;
                let mut var = F::zero();
                for v in row {
                    let d = *v - mean;
                    var = var + d * d;
                }
                var = var / cn;
                let istd = F::one() / (var + epsf).sqrt();
                inv_std[i] = istd;
                let orow = &mut outs[i * c..(i + 1) * c];
                let hrow = &mut xhats[i * c..(i + 1) * c];
                for j in 0..c {
                    let h = (row[j] - mean) * istd;
                    hrow[j] = h;
                    orow[j] = h * gvs[j] + bvs[j];
                }
            }
        }
        let out_id = self.push(out.into_dyn());
        let (xi, gi, bi) = (x.0, gamma.0, beta.0);
        self.ops.push(OpRecord {
            out: out_id,
            back: Box::new(move |values, gout, grads| {
                let g = gout.view().into_dimensionality::<Ix2>().unwrap();
                let gv = values[gi].view().into_dimensionality::<Ix1>().unwrap();
                let gvs = gv.as_slice().expect("contiguous");
                let (t, c) = g.dim();
                let cn = F::of(c as f64);
                let mut dx = Array2::<F>::zeros((t, c));
                let mut dgamma = vec![F::zero(); c];
                let mut dbeta = vec![F::zero(); c];
                let xhats = xhat.as_slice().expect("contiguous");
                let dxs = dx.as_slice_mut().expect("contiguous");
                for i in 0..t {
                    let grow = g.row(i);
                    let grow = grow.as_slice().expect("contiguous");
                    let hrow = &xhats[i * c..(i + 1) * c];
                    let istd = inv_std[i];
                    let mut mean_dxhat = F::zero();
                    let mut mean_dxhat_h = F::zero();
                    for j in 0..c {
                        let dh = grow[j] * gvs[j];
                        mean_dxhat = mean_dxhat + dh;
                        mean_dxhat_h = mean_dxhat_h + dh * hrow[j];
                        dgamma[j] = dgamma[j] + grow[j] * hrow[j];
                        dbeta[j] = dbeta[j] + grow[j];
                    }
                    mean_dxhat = mean_dxhat / cn;
                    mean_dxhat_h = mean_dxhat_h / cn;
                    let dxrow = &mut dxs[i * c..(i + 1) * c];
                    for j in 0..c {
                        let dh = grow[j] * gvs[j];
                        dxrow[j] = (dh - mean_dxhat - hrow[j] * mean_dxhat_h) * istd;
                    }
                }
                grads.add(xi, dx.into_dyn());
                grads.add(gi, Array1::from_vec(dgamma).into_dyn());
                grads.add(bi, Array1::from_vec(dbeta).into_dyn());
            }),
        });
        Var(out_id)
    }

    /// RMS normalization over each of `n_groups` equal column groups of a
    /// `(T, C)` node, with a learnable per-column gain.
    pub fn rms_norm_grouped(&mut self, x: Var, gamma: Var, n_groups: usize, eps: f64) -> Var {
        let xv = self.value2(x);
        let gv = self.values[gamma.0]
            .view()
            .into_dimensionality::<Ix1>()
            .unwrap();
        let (t, c) = xv.dim();
        assert_eq!(c % n_groups, 0, "groups must tile the columns");
        let gsize = c / n_groups;
        let gn = F::of(gsize as f64);
        let epsf = F::of(eps);
        let gvs = gv.as_slice().expect("contiguous");
        let mut out = Array2::<F>::zeros((t, c));
        let mut inv_rms = Array2::<F>::zeros((t, n_groups));
        {
            let outs = out.as_slice_mut().expect("contiguous");
            for i in 0..t {
                let xrow = xv.row(i);
                let xrow = xrow.as_slice().expect("contiguous");
                let orow = &mut outs[i * c..(i + 1) * c];
                for grp in 0..n_groups {
                    let lo = grp * gsize;
                    let xg = &xrow[lo..lo + gsize];
                    let mut ms = F::zero();
                    for v in xg {
                        ms = ms + *v * *v;
                    }
                    ms = ms / gn;
                    let ir = F::one() / (ms + epsf).sqrt();
                    inv_rms[[i, grp]] = ir;
                    for j in 0..gsize {
                        orow[lo + j] = xg[j] * ir * gvs[lo + j];
                    }
                }
            }
        }
        let out_id = self.push(out.into_dyn());
        let (xi, gi) = (x.0, gamma.0);
        self.ops.push(OpRecord {
            out: out_id,
            back: Box::new(move |values, gout, grads| {
                let g = gout.view().into_dimensionality::<Ix2>().unwrap();
                let xv = values[xi].view().into_dimensionality::<Ix2>().unwrap();
                let gv = values[gi].view().into_dimensionality::<Ix1>().unwrap();
                let gvs = gv.as_slice().expect("contiguous");
                let (t, c) = g.dim();
                let gsize = c / n_groups;
                let gn = F::of(gsize as f64);
                let mut dx = Array2::<F>::zeros((t, c));
                let mut dgamma = vec![F::zero(); c];
                let dxs = dx.as_slice_mut().expect("contiguous");
                for i in 0..t {
                    let grow = g.row(i);
                    let grow = grow.as_slice().expect("contiguous");
                    let xrow = xv.row(i);
                    let xrow = xrow.as_slice().expect("contiguous");
                    let dxrow = &mut dxs[i * c..(i + 1) * c];
                    for grp in 0..n_groups {
                        let lo = grp * gsize;
                        let ir = inv_rms[[i, grp]];
                        let mut dot = F::zero();
                        for j in lo..lo + gsize {
                            let dh = grow[j] * gvs[j];
                            dot = dot + dh * xrow[j];
                            dgamma[j] = dgamma[j] + grow[j] * xrow[j] * ir;
                        }
                        let ir3 = ir * ir * ir;
                        for j in lo..lo + gsize {
                            let dh = grow[j] * gvs[j];
                            dxrow[j] = dh * ir - xrow[j] * dot * ir3 / gn;
                        }
                    }
                }
                grads.add(xi, dx.into_dyn());
                grads.add(gi, Array1::from_vec(dgamma).into_dyn());
            }),
        });
        Var(out_id)
    }

    /// Causal dilated 1-d convolution over a `(T, C_in)` node.
    ///
    /// `w` has shape `(C_in * K, C_out)` with row index `c * K + k`; tap
    /// `k = K-1` reads the current timestep, lower taps reach `dilation`
    /// steps further back each, with zero padding before the sequence.
    pub fn causal_conv(&mut self, x: Var, w: Var, bias: Var, kernel: usize, dilation: usize) -> Var {
        let xv = self.value2(x);
        let wv = self.value2(w);
        let (t, c_in) = xv.dim();
        assert_eq!(wv.nrows(), c_in * kernel, "weight rows = C_in * K");
        let col = im2col(&xv, kernel, dilation);
        let out = col.dot(&wv);
        let bv = self.values[bias.0]
            .view()
            .into_dimensionality::<Ix1>()
            .unwrap();
        let out = (&out + &bv).into_dyn();
        let out_id = self.push(out);
        let (xi, wi, bi) = (x.0, w.0, bias.0);
        self.ops.push(OpRecord {
            out: out_id,
            back: Box::new(move |values, gout, grads| {
                let g = gout.view().into_dimensionality::<Ix2>().unwrap();
                let xv = values[xi].view().into_dimensionality::<Ix2>().unwrap();
                let wv = values[wi].view().into_dimensionality::<Ix2>().unwrap();
                let col = im2col(&xv, kernel, dilation);
                grads.add(bi, g.sum_axis(Axis(0)).into_dyn());
                grads.add(wi, col.t().dot(&g).into_dyn());
                // Scatter d(col) back onto the input timeline.
                let dcol = g.dot(&wv.t()); // (T, C_in * K)
                let dcols = dcol.as_slice().expect("contiguous");
                let width = c_in * kernel;
                let mut dx = Array2::<F>::zeros((t, c_in));
                let dxs = dx.as_slice_mut().expect("contiguous");
                for ti in 0..t {
                    let drow = &dcols[ti * width..(ti + 1) * width];
                    for k in 0..kernel {
                        let offset = (kernel - 1 - k) * dilation;
                        if ti >= offset {
                            let target = &mut dxs[(ti - offset) * c_in..(ti - offset + 1) * c_in];
                            for c in 0..c_in {
                                target[c] = target[c] + drow[c * kernel + k];
                            }
                        }
                    }
                }
                grads.add(xi, dx.into_dyn());
            }),
        });
        Var(out_id)
    }

    /// Per-feature affine expansion: each column `j` of a `(T, J)` node maps
    /// to `width` output columns `f[t,j] * w[j,k] + b[j*width + k]`.
    pub fn feature_expand(&mut self, f: Var, w: Var, bias: Var) -> Var {
        let fv = self.value2(f);
        let wv = self.value2(w);
        let bv = self.values[bias.0]
            .view()
            .into_dimensionality::<Ix1>()
            .unwrap();
        let (t, j) = fv.dim();
        let width = wv.ncols();
        assert_eq!(wv.nrows(), j, "one weight row per feature");
        assert_eq!(bv.len(), j * width, "bias covers all outputs");
        let mut out = Array2::<F>::zeros((t, j * width));
        for ti in 0..t {
            for ji in 0..j {
                let x = fv[[ti, ji]];
                for k in 0..width {
                    out[[ti, ji * width + k]] = x * wv[[ji, k]] + bv[ji * width + k];
                }
            }
        }
        let out_id = self.push(out.into_dyn());
        let (fi, wi, bi) = (f.0, w.0, bias.0);
        self.ops.push(OpRecord {
            out: out_id,
            back: Box::new(move |values, gout, grads| {
                let g = gout.view().into_dimensionality::<Ix2>().unwrap();
                let fv = values[fi].view().into_dimensionality::<Ix2>().unwrap();
                let wv = values[wi].view().into_dimensionality::<Ix2>().unwrap();
                let (t, j) = fv.dim();
                let width = wv.ncols();
                let mut dw = Array2::<F>::zeros((j, width));
                let mut df = Array2::<F>::zeros((t, j));
                for ti in 0..t {
                    for ji in 0..j {
                        let x = fv[[ti, ji]];
                        let mut acc = F::zero();
                        for k in 0..width {
                            let go = g[[ti, ji * width + k]];
                            dw[[ji, k]] += x * go;
                            acc = acc + wv[[ji, k]] * go;
                        }
                        df[[ti, ji]] = acc;
                    }
                }
                grads.add(bi, g.sum_axis(Axis(0)).into_dyn());
                grads.add(wi, dw.into_dyn());
                grads.add(fi, df.into_dyn());
            }),
        });
        Var(out_id)
    }

    /// State-space scan over a `(T, d_inner)` node with per-head decay
    /// `(T, H)` and projections `(T, H*N)`. `chunk` selects the chunked
    /// forward path; the adjoint runs the reversed-time recurrence.
    pub fn ssd_scan(&mut self, x: Var, a: Var, b: Var, c: Var, heads: usize, chunk: usize) -> Var {
        let xv = self.value2(x);
        let av = self.value2(a);
        let bv = self.value2(b);
        let cv = self.value2(c);
        let (t, d_inner) = xv.dim();
        assert_eq!(d_inner % heads, 0);
        let head_dim = d_inner / heads;
        let n_state = bv.ncols() / heads;
        assert_eq!(bv.ncols(), heads * n_state);
        assert_eq!(cv.ncols(), heads * n_state);
        assert_eq!(av.dim(), (t, heads));

        let x3 = to3(&xv.to_owned(), heads, head_dim);
        let a2 = av.to_owned();
        let b3 = to3(&bv.to_owned(), heads, n_state);
        let c3 = to3(&cv.to_owned(), heads, n_state);
        let y3 = ssm::ssd_forward_chunked(&a2, &x3, &b3, &c3, chunk);
        let out = flatten3(&y3);
        let out_id = self.push(out.into_dyn());
        let (xi, ai, bi, ci) = (x.0, a.0, b.0, c.0);
        self.ops.push(OpRecord {
            out: out_id,
            back: Box::new(move |values, gout, grads| {
                let g = gout.view().into_dimensionality::<Ix2>().unwrap();
                let xv = values[xi].view().into_dimensionality::<Ix2>().unwrap();
                let av = values[ai].view().into_dimensionality::<Ix2>().unwrap();
                let bv = values[bi].view().into_dimensionality::<Ix2>().unwrap();
                let cv = values[ci].view().into_dimensionality::<Ix2>().unwrap();
                let x3 = to3(&xv.to_owned(), heads, head_dim);
                let a2 = av.to_owned();
                let b3 = to3(&bv.to_owned(), heads, n_state);
                let c3 = to3(&cv.to_owned(), heads, n_state);
                let dy3 = to3(&g.to_owned(), heads, head_dim);
                let (da, dx, db, dc) = ssm::ssd_backward(&a2, &x3, &b3, &c3, &dy3);
                grads.add(xi, flatten3(&dx).into_dyn());
                grads.add(ai, da.into_dyn());
                grads.add(bi, flatten3(&db).into_dyn());
                grads.add(ci, flatten3(&dc).into_dyn());
            }),
        });
        Var(out_id)
    }
}

fn sigmoid<F: Real>(v: F) -> F {
    let one = F::one();
    if v >= F::zero() {
        one / (one + (-v).exp())
    } else {
        let e = v.exp();
        e / (one + e)
    }
}

fn softplus_stable<F: Real>(v: F) -> F {
    // max(x, 0) + ln(1 + exp(-|x|))
    let z = if v > F::zero() { v } else { F::zero() };
    z + (-(v.abs())).exp().ln_1p()
}

/// `(T, H*D)` viewed as `(T, H, D)`. Normalizes layout first; the copy is
/// skipped when the input is already row-major.
fn to3<F: Real>(x: &Array2<F>, heads: usize, width: usize) -> Array3<F> {
    let t = x.nrows();
    x.as_standard_layout()
        .into_owned()
        .into_shape_with_order((t, heads, width))
        .expect("contiguous reshape")
}

fn flatten3<F: Real>(x: &Array3<F>) -> Array2<F> {
    let (t, h, w) = x.dim();
    x.as_standard_layout()
        .into_owned()
        .into_shape_with_order((t, h * w))
        .expect("contiguous reshape")
}

/// Causal dilated im2col: `col[t, c*K + k] = x[t - (K-1-k)*dilation, c]`,
/// zero where the index precedes the sequence.
fn im2col<F: Real>(x: &ndarray::ArrayView2<'_, F>, kernel: usize, dilation: usize) -> Array2<F> {
    let (t, c_in) = x.dim();
    let width = c_in * kernel;
    let mut col = Array2::<F>::zeros((t, width));
    let cols = col.as_slice_mut().expect("contiguous");
    for ti in 0..t {
        let crow = &mut cols[ti * width..(ti + 1) * width];
        for k in 0..kernel {
            let offset = (kernel - 1 - k) * dilation;
            if ti >= offset {
                let src = x.row(ti - offset);
                let src = src.as_slice().expect("contiguous");
                for c in 0..c_in {
                    crow[c * kernel + k] = src[c];
                }
            }
        }
    }
    col
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{ArrayD, IxDyn};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> ArrayD<f64> {
        ArrayD::from_shape_fn(IxDyn(shape), |_| rng.gen_range(-1.0..1.0))
    }

    /// Central-difference check of every coordinate of every input.
    fn fd_check<B>(inputs: &[ArrayD<f64>], build: B, tol: f64)
    where
        B: Fn(&mut Tape<f64>, &[Var]) -> Var,
    {
        let run = |arrays: &[ArrayD<f64>]| -> f64 {
            let mut tape = Tape::new();
            let vars: Vec<Var> = arrays.iter().map(|a| tape.leaf(a.clone())).collect();
            let loss = build(&mut tape, &vars);
            tape.scalar(loss)
        };

        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|a| tape.leaf(a.clone())).collect();
        let loss = build(&mut tape, &vars);
        let grads = tape.backward(loss);

        let h = 1e-6;
        for (i, base) in inputs.iter().enumerate() {
            let g = grads.get(vars[i]);
            for (coord, _) in base.indexed_iter() {
                let mut plus = inputs.to_vec();
                plus[i][&coord] += h;
                let mut minus = inputs.to_vec();
                minus[i][&coord] -= h;
                let fd = (run(&plus) - run(&minus)) / (2.0 * h);
                let analytic = g.map(|g| g[&coord]).unwrap_or(0.0);
                let denom = analytic.abs().max(fd.abs()).max(1e-4);
                assert!(
                    (analytic - fd).abs() / denom < tol,
                    "input {i} coord {coord:?}: analytic={analytic} fd={fd}"
                );
            }
        }
    }

    fn sum_all(tape: &mut Tape<f64>, v: Var) -> Var {
        // Reduce to a scalar through ops already under test elsewhere:
        // column of ones via matmul, then mse against zero halves... keep it
        // direct instead: multiply by fixed weights and mse against zeros.
        let cols = tape.value(v).shape()[1];
        let rows = tape.value(v).shape()[0];
        let w = Array2::from_shape_fn((cols, 1), |(i, _)| 0.3 + 0.1 * i as f64);
        let wv = tape.leaf2(w);
        let col = tape.matmul(v, wv);
        let target = Array1::from_elem(rows, 0.25);
        tape.mse_against(col, &target)
    }

    #[test]
    fn matmul_add_bias_grads() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let inputs = vec![
            random(&mut rng, &[4, 3]),
            random(&mut rng, &[3, 5]),
            random(&mut rng, &[5]),
        ];
        fd_check(
            &inputs,
            |tape, v| {
                let mm = tape.matmul(v[0], v[1]);
                let out = tape.add_bias(mm, v[2]);
                sum_all(tape, out)
            },
            1e-6,
        );
    }

    #[test]
    fn elementwise_grads() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let inputs = vec![random(&mut rng, &[3, 4]), random(&mut rng, &[3, 4])];
        fd_check(
            &inputs,
            |tape, v| {
                let s = tape.silu(v[0]);
                let sp = tape.softplus(v[1]);
                let prod = tape.mul(s, sp);
                let n = tape.neg(prod);
                let e = tape.exp(n);
                let a = tape.add(e, v[0]);
                sum_all(tape, a)
            },
            1e-5,
        );
    }

    #[test]
    fn scale_and_slice_concat_grads() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let inputs = vec![random(&mut rng, &[4, 6]), random(&mut rng, &[3])];
        fd_check(
            &inputs,
            |tape, v| {
                let left = tape.slice_cols(v[0], 0, 3);
                let right = tape.slice_cols(v[0], 3, 6);
                let scaled = tape.scale_cols(left, v[1]);
                let cat = tape.concat_cols(&[scaled, right]);
                sum_all(tape, cat)
            },
            1e-6,
        );
    }

    #[test]
    fn gather_rows_grads() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let inputs = vec![random(&mut rng, &[6, 3])];
        fd_check(
            &inputs,
            |tape, v| {
                let picked = tape.gather_rows(v[0], &[1, 4, 4, 5]);
                sum_all(tape, picked)
            },
            1e-6,
        );
    }

    #[test]
    fn layer_norm_grads() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let inputs = vec![
            random(&mut rng, &[4, 6]),
            random(&mut rng, &[6]),
            random(&mut rng, &[6]),
        ];
        fd_check(
            &inputs,
            |tape, v| {
                let ln = tape.layer_norm(v[0], v[1], v[2], 1e-5);
                sum_all(tape, ln)
            },
            1e-5,
        );
    }

    #[test]
    fn rms_norm_grouped_grads() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let inputs = vec![random(&mut rng, &[3, 8]), random(&mut rng, &[8])];
        fd_check(
            &inputs,
            |tape, v| {
                let n = tape.rms_norm_grouped(v[0], v[1], 2, 1e-5);
                sum_all(tape, n)
            },
            1e-5,
        );
    }

    #[test]
    fn causal_conv_grads() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let inputs = vec![
            random(&mut rng, &[10, 3]),
            random(&mut rng, &[3 * 5, 2]),
            random(&mut rng, &[2]),
        ];
        fd_check(
            &inputs,
            |tape, v| {
                let c = tape.causal_conv(v[0], v[1], v[2], 5, 2);
                sum_all(tape, c)
            },
            1e-5,
        );
    }

    #[test]
    fn conv_is_causal_and_padded() {
        // Constant weights picking only tap k=K-1 reproduce the input.
        let mut tape = Tape::<f64>::new();
        let x = Array2::from_shape_fn((6, 1), |(i, _)| i as f64 + 1.0);
        let xv = tape.leaf2(x);
        let mut w = Array2::<f64>::zeros((3, 1));
        w[[2, 0]] = 1.0; // current timestep tap
        let wv = tape.leaf2(w);
        let b = tape.leaf1(Array1::zeros(1));
        let out = tape.causal_conv(xv, wv, b, 3, 4);
        let o = tape.value2(out);
        for i in 0..6 {
            assert_eq!(o[[i, 0]], i as f64 + 1.0);
        }
        // Lowest tap reaches back (K-1)*dilation steps; before that, zeros.
        let mut tape = Tape::<f64>::new();
        let x = Array2::from_shape_fn((6, 1), |(i, _)| i as f64 + 1.0);
        let xv = tape.leaf2(x);
        let mut w = Array2::<f64>::zeros((3, 1));
        w[[0, 0]] = 1.0; // oldest tap: offset (3-1)*2 = 4
        let wv = tape.leaf2(w);
        let b = tape.leaf1(Array1::zeros(1));
        let out = tape.causal_conv(xv, wv, b, 3, 2);
        let o = tape.value2(out);
        assert_eq!(o[[3, 0]], 0.0);
        assert_eq!(o[[4, 0]], 1.0);
        assert_eq!(o[[5, 0]], 2.0);
    }

    #[test]
    fn ssd_scan_grads() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let t = 8;
        let heads = 2;
        let head_dim = 3;
        let n_state = 2;
        let x = random(&mut rng, &[t, heads * head_dim]);
        let a = ArrayD::from_shape_fn(IxDyn(&[t, heads]), |_| rng.gen_range(0.05..0.95));
        let b = random(&mut rng, &[t, heads * n_state]);
        let c = random(&mut rng, &[t, heads * n_state]);
        fd_check(
            &[x, a, b, c],
            |tape, v| {
                let y = tape.ssd_scan(v[0], v[1], v[2], v[3], 2, 4);
                sum_all(tape, y)
            },
            1e-5,
        );
    }

    #[test]
    fn feature_expand_grads() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let inputs = vec![
            random(&mut rng, &[5, 3]),
            random(&mut rng, &[3, 4]),
            random(&mut rng, &[12]),
        ];
        fd_check(
            &inputs,
            |tape, v| {
                let f = tape.feature_expand(v[0], v[1], v[2]);
                sum_all(tape, f)
            },
            1e-6,
        );
    }

    #[test]
    fn mse_known_value() {
        let mut tape = Tape::<f64>::new();
        let pred = tape.leaf2(Array2::from_shape_vec((2, 1), vec![1.0, 2.0]).unwrap());
        let loss = tape.mse_against(pred, &Array1::from(vec![1.5, 2.0]));
        assert!((tape.scalar(loss) - 0.125).abs() < 1e-15);
        let grads = tape.backward(loss);
        let g = grads.get(pred).unwrap();
        assert!((g[[0, 0]] - (-0.5)).abs() < 1e-15);
        assert!((g[[1, 0]] - 0.0).abs() < 1e-15);
    }

    #[test]
    fn unused_leaf_has_no_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let mut tape = Tape::<f64>::new();
        let used = tape.leaf(random(&mut rng, &[3, 2]));
        let unused = tape.leaf(random(&mut rng, &[3, 2]));
        let loss = sum_all(&mut tape, used);
        let grads = tape.backward(loss);
        assert!(grads.get(used).is_some());
        assert!(grads.get(unused).is_none());
    }

    #[test]
    fn diamond_graph_accumulates() {
        // x feeds two branches that rejoin; gradient must be the sum.
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf2(Array2::from_elem((2, 2), 0.7));
        let a = tape.silu(x);
        let b = tape.exp(x);
        let joined = tape.add(a, b);
        let loss = sum_all(&mut tape, joined);
        let grads = tape.backward(loss);
        assert!(grads.get(x).is_some());
        // Cross-check against finite differences on one coordinate.
        let run = |v: f64| -> f64 {
            let mut tape = Tape::<f64>::new();
            let mut arr = Array2::from_elem((2, 2), 0.7);
            arr[[0, 1]] = v;
            let x = tape.leaf2(arr);
            let a = tape.silu(x);
            let b = tape.exp(x);
            let joined = tape.add(a, b);
            let loss = sum_all(&mut tape, joined);
            tape.scalar(loss)
        };
        let h = 1e-6;
        let fd = (run(0.7 + h) - run(0.7 - h)) / (2.0 * h);
        let analytic = grads.get(x).unwrap()[[0, 1]];
        assert!((analytic - fd).abs() < 1e-8);
    }
}
