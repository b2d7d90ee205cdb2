//! Selective state-space scan with a scalar-identity transition.
//!
//! The recurrence per head is
//!
//! ```text
//!   h_t = a_t * h_{t-1} + x_t (x) B_t        h: P x N, a_t scalar in (0,1]
//!   y_t = h_t . C_t
//! ```
//!
//! Two evaluation paths are provided and must agree: a step-by-step
//! recurrence ([`ssd_forward_recurrent`]) and a chunked form
//! ([`ssd_forward_chunked`]) that expresses each chunk as a masked
//! quadratic form plus a decayed carry state, with decay products
//! accumulated in log-space. [`ssd_backward`] is the exact adjoint of the
//! scan, derived from the recurrence run in reversed time.
//!
//! Array layout: `a (T, H)`, `x (T, H, P)`, `b/c (T, H, N)`, `y (T, H, P)`.

use crate::error::{Error, Result};
use crate::real::Real;
use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array2, Array3, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

/// Head geometry of the state-space layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SsdDims {
    /// Embedding width of the surrounding block.
    pub d_model: usize,
    /// Block expansion factor E; the scan runs at width `expand * d_model`.
    pub expand: usize,
    /// State width N per head.
    pub n_state: usize,
    /// Number of heads.
    pub n_heads: usize,
}

impl SsdDims {
    pub fn d_inner(&self) -> usize {
        self.expand * self.d_model
    }

    pub fn head_dim(&self) -> usize {
        self.d_inner() / self.n_heads
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_state == 0 || self.n_heads == 0 || self.expand == 0 || self.d_model == 0 {
            return Err(Error::config("ssd dims must be positive"));
        }
        if self.d_inner() % self.n_heads != 0 {
            return Err(Error::config(format!(
                "expand*d_model = {} not divisible by n_heads = {}",
                self.d_inner(),
                self.n_heads
            )));
        }
        Ok(())
    }
}

/// Running hidden state, `(H, P, N)`, zero at sequence start.
pub fn zero_state<F: Real>(heads: usize, head_dim: usize, n_state: usize) -> Array3<F> {
    Array3::zeros((heads, head_dim, n_state))
}

/// One step of the recurrence. Mutates `state` in place and returns `y_t`
/// with shape `(H, P)`.
pub fn ssd_step<F: Real>(
    state: &mut Array3<F>,
    a_t: ArrayView1<F>,
    x_t: ArrayView2<F>,
    b_t: ArrayView2<F>,
    c_t: ArrayView2<F>,
) -> Array2<F> {
    let (heads, head_dim, n_state) = state.dim();
    assert_eq!(a_t.len(), heads, "decay length mismatch");
    assert_eq!(x_t.dim(), (heads, head_dim), "input shape mismatch");
    assert_eq!(b_t.dim(), (heads, n_state), "B shape mismatch");
    assert_eq!(c_t.dim(), (heads, n_state), "C shape mismatch");

    let mut y = Array2::zeros((heads, head_dim));
    for h in 0..heads {
        let a = a_t[h];
        let bh = b_t.row(h);
        let bh = bh.as_slice().expect("contiguous row");
        let ch = c_t.row(h);
        let ch = ch.as_slice().expect("contiguous row");
        for p in 0..head_dim {
            let xv = x_t[[h, p]];
            let mut acc = F::zero();
            let srow = state.slice_mut(s![h, p, ..]);
            let srow = srow.into_slice().expect("contiguous state row");
            for n in 0..n_state {
                let v = a * srow[n] + xv * bh[n];
                srow[n] = v;
                acc = acc + v * ch[n];
            }
            y[[h, p]] = acc;
        }
    }
    y
}

/// Fold [`ssd_step`] over the whole sequence from a zero state.
pub fn ssd_forward_recurrent<F: Real>(
    a: &Array2<F>,
    x: &Array3<F>,
    b: &Array3<F>,
    c: &Array3<F>,
) -> Array3<F> {
    let (tlen, heads, head_dim) = x.dim();
    let n_state = b.dim().2;
    let mut state = zero_state::<F>(heads, head_dim, n_state);
    let mut y = Array3::zeros((tlen, heads, head_dim));
    for t in 0..tlen {
        let y_t = ssd_step(
            &mut state,
            a.row(t),
            x.index_axis(Axis(0), t),
            b.index_axis(Axis(0), t),
            c.index_axis(Axis(0), t),
        );
        y.index_axis_mut(Axis(0), t).assign(&y_t);
    }
    y
}

/// Chunked evaluation: within each chunk of `chunk` steps the output is a
/// masked quadratic form `(C B^T ∘ L) X`; the carry state is decayed into
/// subsequent chunks. Equals the recurrent path up to dtype rounding.
pub fn ssd_forward_chunked<F: Real>(
    a: &Array2<F>,
    x: &Array3<F>,
    b: &Array3<F>,
    c: &Array3<F>,
    chunk: usize,
) -> Array3<F> {
    assert!(chunk >= 1, "chunk size must be >= 1");
    let (tlen, heads, head_dim) = x.dim();
    let n_state = b.dim().2;
    let mut y = Array3::zeros((tlen, heads, head_dim));

    let mut av = vec![0.0f64; chunk];
    let mut beta = vec![0.0f64; chunk];
    let mut gamma = vec![0.0f64; chunk];
    let mut gram: Array2<F> = Array2::zeros((chunk.min(tlen), chunk.min(tlen)));
    let mut yq: Array2<F> = Array2::zeros((chunk.min(tlen), head_dim));
    let mut state_out: Array2<F> = Array2::zeros((chunk.min(tlen), head_dim));
    let mut xg: Array2<F> = Array2::zeros((chunk.min(tlen), head_dim));

    for h in 0..heads {
        // Owned per-head views keep the chunk matmuls contiguous.
        let xh = x.index_axis(Axis(1), h).to_owned(); // (T, P)
        let bh = b.index_axis(Axis(1), h).to_owned(); // (T, N)
        let ch = c.index_axis(Axis(1), h).to_owned(); // (T, N)
        let mut carry: Array2<F> = Array2::zeros((head_dim, n_state));

        let mut start = 0;
        while start < tlen {
            let end = (start + chunk).min(tlen);
            let q = end - start;

            // Decay bookkeeping as f64 running products: beta[i] is
            // a_s..a_{s+i} (decay applied to the carry state at row i),
            // gamma[j] the suffix product decaying input j into the
            // chunk-final state. f64 products underflow to an exact zero
            // contribution only past 1e-308.
            let mut running = 1.0f64;
            for i in 0..q {
                av[i] = a[[start + i, h]].as_f64();
                running *= av[i];
                beta[i] = running;
            }
            gamma[q - 1] = 1.0;
            for j in (0..q - 1).rev() {
                gamma[j] = gamma[j + 1] * av[j + 1];
            }

            let xq = xh.slice(s![start..end, ..]); // (q, P)
            let bq = bh.slice(s![start..end, ..]); // (q, N)
            let cq = ch.slice(s![start..end, ..]); // (q, N)

            // Intra-chunk: (C B^T ∘ L) X with the decay mask
            // L[i][j] = a_{j+1} .. a_i for j <= i, built row-wise by
            // running products from the diagonal.
            let mut gram_v = gram.slice_mut(s![..q, ..q]);
            general_mat_mul(F::one(), &cq, &bq.t(), F::zero(), &mut gram_v);
            for i in 0..q {
                let mut l = 1.0f64;
                for j in (0..i).rev() {
                    l *= av[j + 1];
                    gram_v[[i, j]] = gram_v[[i, j]] * F::of(l);
                }
                for jj in i + 1..q {
                    gram_v[[i, jj]] = F::zero();
                }
            }
            let mut yq_v = yq.slice_mut(s![..q, ..]);
            general_mat_mul(F::one(), &gram_v.view(), &xq, F::zero(), &mut yq_v);

            // Carry-state contribution: row i gets beta[i] * (C_i . carry).
            let mut state_v = state_out.slice_mut(s![..q, ..]);
            general_mat_mul(F::one(), &cq, &carry.t(), F::zero(), &mut state_v);
            for i in 0..q {
                let w = F::of(beta[i]);
                let mut row = yq_v.row_mut(i);
                row.scaled_add(w, &state_v.row(i));
            }

            // Next carry: carry <- beta_last * carry + (gamma ∘ X)^T B.
            let mut xg_v = xg.slice_mut(s![..q, ..]);
            xg_v.assign(&xq);
            for j in 0..q {
                let w = F::of(gamma[j]);
                xg_v.row_mut(j).mapv_inplace(|v| v * w);
            }
            general_mat_mul(F::one(), &xg_v.t(), &bq, F::of(beta[q - 1]), &mut carry.view_mut());

            y.slice_mut(s![start..end, h, ..]).assign(&yq_v);
            start = end;
        }
    }
    y
}

/// Gradients of the scan outputs w.r.t. all four inputs, given upstream
/// `dy`. Runs the adjoint recurrence in reversed time:
///
/// ```text
///   g_t = dy_t (x) C_t + a_{t+1} g_{t+1}
///   dx_t = g_t B_t,  dB_t = g_t^T x_t,  dC_t = h_t^T dy_t,
///   da_t = <g_t, h_{t-1}>
/// ```
pub fn ssd_backward<F: Real>(
    a: &Array2<F>,
    x: &Array3<F>,
    b: &Array3<F>,
    c: &Array3<F>,
    dy: &Array3<F>,
) -> (Array2<F>, Array3<F>, Array3<F>, Array3<F>) {
    let (tlen, heads, head_dim) = x.dim();
    let n_state = b.dim().2;
    let mut da = Array2::zeros((tlen, heads));
    let mut dx = Array3::zeros((tlen, heads, head_dim));
    let mut db = Array3::zeros((tlen, heads, n_state));
    let mut dc = Array3::zeros((tlen, heads, n_state));

    for h in 0..heads {
        // Contiguous per-head copies keep the inner loops on raw slices.
        let xh = x.index_axis(Axis(1), h).to_owned(); // (T, P)
        let bh = b.index_axis(Axis(1), h).to_owned(); // (T, N)
        let ch = c.index_axis(Axis(1), h).to_owned(); // (T, N)
        let dyh = dy.index_axis(Axis(1), h).to_owned(); // (T, P)
        let xs = xh.as_slice().expect("contiguous");
        let bs = bh.as_slice().expect("contiguous");
        let cs = ch.as_slice().expect("contiguous");
        let dys = dyh.as_slice().expect("contiguous");

        // Recompute the hidden states; hs[t*PN..] holds h_{t-1} flattened.
        let pn = head_dim * n_state;
        let mut hs = vec![F::zero(); (tlen + 1) * pn];
        for t in 0..tlen {
            let av = a[[t, h]];
            let (prev_block, rest) = hs[t * pn..].split_at_mut(pn);
            let cur = &mut rest[..pn];
            let brow = &bs[t * n_state..(t + 1) * n_state];
            for p in 0..head_dim {
                let xv = xs[t * head_dim + p];
                let prev = &prev_block[p * n_state..(p + 1) * n_state];
                let out = &mut cur[p * n_state..(p + 1) * n_state];
                for n in 0..n_state {
                    out[n] = av * prev[n] + xv * brow[n];
                }
            }
        }

        let mut g = vec![F::zero(); pn];
        for t in (0..tlen).rev() {
            if t + 1 < tlen {
                let anext = a[[t + 1, h]];
                for v in g.iter_mut() {
                    *v = *v * anext;
                }
            }
            let brow = &bs[t * n_state..(t + 1) * n_state];
            let crow = &cs[t * n_state..(t + 1) * n_state];
            let dyrow = &dys[t * head_dim..(t + 1) * head_dim];
            let hprev = &hs[t * pn..(t + 1) * pn];
            let hcur = &hs[(t + 1) * pn..(t + 2) * pn];

            let mut da_acc = F::zero();
            for p in 0..head_dim {
                let dv = dyrow[p];
                let grow = &mut g[p * n_state..(p + 1) * n_state];
                let hrow = &hprev[p * n_state..(p + 1) * n_state];
                let mut dx_acc = F::zero();
                for n in 0..n_state {
                    let gv = grow[n] + dv * crow[n];
                    grow[n] = gv;
                    da_acc = da_acc + gv * hrow[n];
                    dx_acc = dx_acc + gv * brow[n];
                }
                dx[[t, h, p]] = dx_acc;
            }
            da[[t, h]] = da_acc;

            for n in 0..n_state {
                let mut accb = F::zero();
                let mut accc = F::zero();
                for p in 0..head_dim {
                    accb = accb + g[p * n_state + n] * xs[t * head_dim + p];
                    accc = accc + hcur[p * n_state + n] * dyrow[p];
                }
                db[[t, h, n]] = accb;
                dc[[t, h, n]] = accc;
            }
        }
    }
    (da, dx, db, dc)
}
