//! Parameterized layers composing the denoiser. Each layer owns its
//! parameters, produces an explicit activation cache on the forward pass,
//! and accumulates gradients into a same-shaped layer instance on the
//! backward pass (so one struct type serves as parameters, gradients, and
//! optimizer moments).

use ndarray::{Array1, Array2, Array4};
use rand::Rng;

use crate::nn::ops;
use crate::scalar::Scalar;

/// Read-only parameter walk: (name, shape, data).
pub type Visitor<'a, 'b, F> = &'a mut dyn FnMut(&str, &[usize], &[F]);
/// Mutable parameter walk: (name, data). Shapes are fixed by construction.
pub type VisitorMut<'a, 'b, F> = &'a mut dyn FnMut(&str, &mut [F]);

fn add_into<F: Scalar, D: ndarray::Dimension>(
    acc: &mut ndarray::Array<F, D>,
    delta: &ndarray::Array<F, D>,
) {
    acc.zip_mut_with(delta, |a, &d| *a += d);
}

/// 2D convolution layer; kernel size, stride and padding are fixed at
/// construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv<F> {
    pub w: Array4<F>,
    pub b: Array1<F>,
    pub stride: usize,
    pub pad: usize,
}

impl<F: Scalar> Conv<F> {
    /// Fan-in scaled uniform init: weights U(±1/√(cin·k²)), zero bias.
    pub fn init<R: Rng + ?Sized>(
        cout: usize,
        cin: usize,
        k: usize,
        stride: usize,
        pad: usize,
        rng: &mut R,
    ) -> Self {
        let bound = 1.0 / ((cin * k * k) as f64).sqrt();
        let w = Array4::from_shape_fn((cout, cin, k, k), |_| F::uniform_sym(rng, bound));
        Self { w, b: Array1::zeros(cout), stride, pad }
    }

    /// All-zero weights and bias: used for the residual/output projections
    /// so a fresh network predicts exactly zero.
    pub fn zeros(cout: usize, cin: usize, k: usize, stride: usize, pad: usize) -> Self {
        Self { w: Array4::zeros((cout, cin, k, k)), b: Array1::zeros(cout), stride, pad }
    }

    pub fn forward(&self, x: &Array4<F>) -> Array4<F> {
        ops::conv2d(x, &self.w, &self.b, self.stride, self.pad)
    }

    pub fn backward(&self, x: &Array4<F>, dy: &Array4<F>, g: &mut Self) -> Array4<F> {
        let (dx, dw, db) = ops::conv2d_backward(x, &self.w, dy, self.stride, self.pad);
        add_into(&mut g.w, &dw);
        add_into(&mut g.b, &db);
        dx
    }

    pub fn visit(&self, name: &str, f: Visitor<F>) {
        f(&format!("{name}.w"), self.w.shape(), self.w.as_slice().unwrap());
        f(&format!("{name}.b"), self.b.shape(), self.b.as_slice().unwrap());
    }

    pub fn visit_mut(&mut self, name: &str, f: VisitorMut<F>) {
        f(&format!("{name}.w"), self.w.as_slice_mut().unwrap());
        f(&format!("{name}.b"), self.b.as_slice_mut().unwrap());
    }
}

/// Dense layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear<F> {
    pub w: Array2<F>,
    pub b: Array1<F>,
}

impl<F: Scalar> Linear<F> {
    pub fn init<R: Rng + ?Sized>(out: usize, input: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (input as f64).sqrt();
        let w = Array2::from_shape_fn((out, input), |_| F::uniform_sym(rng, bound));
        Self { w, b: Array1::zeros(out) }
    }

    pub fn forward(&self, x: &Array2<F>) -> Array2<F> {
        ops::linear(x, &self.w, &self.b)
    }

    pub fn backward(&self, x: &Array2<F>, dy: &Array2<F>, g: &mut Self) -> Array2<F> {
        let (dx, dw, db) = ops::linear_backward(x, &self.w, dy);
        add_into(&mut g.w, &dw);
        add_into(&mut g.b, &db);
        dx
    }

    pub fn visit(&self, name: &str, f: Visitor<F>) {
        f(&format!("{name}.w"), self.w.shape(), self.w.as_slice().unwrap());
        f(&format!("{name}.b"), self.b.shape(), self.b.as_slice().unwrap());
    }

    pub fn visit_mut(&mut self, name: &str, f: VisitorMut<F>) {
        f(&format!("{name}.w"), self.w.as_slice_mut().unwrap());
        f(&format!("{name}.b"), self.b.as_slice_mut().unwrap());
    }
}

/// Group normalization with learned per-channel scale and shift.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupNorm<F> {
    pub gamma: Array1<F>,
    pub beta: Array1<F>,
    pub groups: usize,
    pub eps: f64,
}

/// Largest group count ≤ 8 that divides the channel width while keeping at
/// least two channels per group. Single-channel groups would normalize away
/// any per-channel constant shift — exactly the form of the time and
/// slice-embedding injections — silencing them entirely.
pub fn groups_for(channels: usize) -> usize {
    (1..=8.min(channels / 2)).rev().find(|g| channels % g == 0).unwrap_or(1)
}

impl<F: Scalar> GroupNorm<F> {
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: Array1::from_elem(channels, F::one()),
            beta: Array1::zeros(channels),
            groups: groups_for(channels),
            eps: 1e-5,
        }
    }

    pub fn forward(&self, x: &Array4<F>) -> (Array4<F>, ops::GnCache<F>) {
        ops::group_norm(x, &self.gamma, &self.beta, self.groups, self.eps)
    }

    pub fn backward(&self, dy: &Array4<F>, cache: &ops::GnCache<F>, g: &mut Self) -> Array4<F> {
        let (dx, dgamma, dbeta) = ops::group_norm_backward(dy, &self.gamma, cache, self.groups);
        add_into(&mut g.gamma, &dgamma);
        add_into(&mut g.beta, &dbeta);
        dx
    }

    pub fn visit(&self, name: &str, f: Visitor<F>) {
        f(&format!("{name}.gamma"), self.gamma.shape(), self.gamma.as_slice().unwrap());
        f(&format!("{name}.beta"), self.beta.shape(), self.beta.as_slice().unwrap());
    }

    pub fn visit_mut(&mut self, name: &str, f: VisitorMut<F>) {
        f(&format!("{name}.gamma"), self.gamma.as_slice_mut().unwrap());
        f(&format!("{name}.beta"), self.beta.as_slice_mut().unwrap());
    }
}

/// Norm → SiLU → conv → +time → norm → SiLU → conv, with a residual
/// shortcut (1×1 projection when the width changes).
#[derive(Debug, Clone, PartialEq)]
pub struct ResBlock<F> {
    pub gn1: GroupNorm<F>,
    pub conv1: Conv<F>,
    pub tproj: Linear<F>,
    pub gn2: GroupNorm<F>,
    pub conv2: Conv<F>,
    pub shortcut: Option<Conv<F>>,
}

pub struct ResCache<F> {
    x: Array4<F>,
    gn1c: ops::GnCache<F>,
    gn1_out: Array4<F>,
    c1_in: Array4<F>,
    gn2c: ops::GnCache<F>,
    gn2_out: Array4<F>,
    c2_in: Array4<F>,
}

impl<F: Scalar> ResBlock<F> {
    pub fn init<R: Rng + ?Sized>(
        cin: usize,
        cout: usize,
        time_dim: usize,
        rng: &mut R,
    ) -> Self {
        Self {
            gn1: GroupNorm::new(cin),
            conv1: Conv::init(cout, cin, 3, 1, 1, rng),
            tproj: Linear::init(cout, time_dim, rng),
            gn2: GroupNorm::new(cout),
            conv2: Conv::init(cout, cout, 3, 1, 1, rng),
            shortcut: (cin != cout).then(|| Conv::init(cout, cin, 1, 1, 0, rng)),
        }
    }

    /// `temb` is the shared (1, time_dim) activation of the time MLP.
    pub fn forward(&self, x: &Array4<F>, temb: &Array2<F>) -> (Array4<F>, ResCache<F>) {
        let (gn1_out, gn1c) = self.gn1.forward(x);
        let c1_in = ops::silu(&gn1_out);
        let mut h = self.conv1.forward(&c1_in);
        let tp = self.tproj.forward(temb); // (1, cout)
        let (k, c, hh, ww) = h.dim();
        {
            let hs = h.as_slice_mut().expect("owned is contiguous");
            crate::exec::for_each_chunk_mut(hs, hh * ww, |plane, row| {
                let tv = tp[[0, plane % c]];
                for v in row.iter_mut() {
                    *v += tv;
                }
            });
        }
        let _ = k;
        let (gn2_out, gn2c) = self.gn2.forward(&h);
        let c2_in = ops::silu(&gn2_out);
        let mut y = self.conv2.forward(&c2_in);
        match &self.shortcut {
            Some(sc) => add_into(&mut y, &sc.forward(x)),
            None => add_into(&mut y, x),
        }
        (y, ResCache { x: x.clone(), gn1c, gn1_out, c1_in, gn2c, gn2_out, c2_in })
    }

    pub fn backward(
        &self,
        cache: &ResCache<F>,
        temb: &Array2<F>,
        dy: &Array4<F>,
        g: &mut Self,
        d_temb: &mut Array2<F>,
    ) -> Array4<F> {
        let dc2_in = self.conv2.backward(&cache.c2_in, dy, &mut g.conv2);
        let d_gn2out = ops::silu_backward(&cache.gn2_out, &dc2_in);
        let dh = self.gn2.backward(&d_gn2out, &cache.gn2c, &mut g.gn2);

        // The time projection was broadcast over space: its gradient is the
        // per-channel sum.
        let (_, c, hh, ww) = dh.dim();
        let mut d_tp = Array2::<F>::zeros((1, c));
        for (plane, row) in dh.as_slice().unwrap().chunks(hh * ww).enumerate() {
            let mut acc = F::zero();
            for v in row {
                acc += *v;
            }
            d_tp[[0, plane % c]] += acc;
        }
        let d_temb_part = self.tproj.backward(temb, &d_tp, &mut g.tproj);
        add_into(d_temb, &d_temb_part);

        let dc1_in = self.conv1.backward(&cache.c1_in, &dh, &mut g.conv1);
        let d_gn1out = ops::silu_backward(&cache.gn1_out, &dc1_in);
        let mut dx = self.gn1.backward(&d_gn1out, &cache.gn1c, &mut g.gn1);

        match (&self.shortcut, &mut g.shortcut) {
            (Some(sc), Some(gsc)) => {
                let ds = sc.backward(&cache.x, dy, gsc);
                add_into(&mut dx, &ds);
            }
            (None, None) => add_into(&mut dx, dy),
            _ => unreachable!("gradient store mirrors parameter topology"),
        }
        dx
    }

    pub fn visit(&self, name: &str, f: Visitor<F>) {
        self.gn1.visit(&format!("{name}.gn1"), f);
        self.conv1.visit(&format!("{name}.conv1"), f);
        self.tproj.visit(&format!("{name}.tproj"), f);
        self.gn2.visit(&format!("{name}.gn2"), f);
        self.conv2.visit(&format!("{name}.conv2"), f);
        if let Some(sc) = &self.shortcut {
            sc.visit(&format!("{name}.shortcut"), f);
        }
    }

    pub fn visit_mut(&mut self, name: &str, f: VisitorMut<F>) {
        self.gn1.visit_mut(&format!("{name}.gn1"), f);
        self.conv1.visit_mut(&format!("{name}.conv1"), f);
        self.tproj.visit_mut(&format!("{name}.tproj"), f);
        self.gn2.visit_mut(&format!("{name}.gn2"), f);
        self.conv2.visit_mut(&format!("{name}.conv2"), f);
        if let Some(sc) = &mut self.shortcut {
            sc.visit_mut(&format!("{name}.shortcut"), f);
        }
    }
}

/// Cross-slice multi-head self-attention with a residual connection: slice
/// embeddings are injected, features normalized, and the K slices attend to
/// each other independently at every spatial position.
#[derive(Debug, Clone, PartialEq)]
pub struct AttnBlock<F> {
    pub se_proj: Linear<F>,
    pub gn: GroupNorm<F>,
    pub q: Conv<F>,
    pub k: Conv<F>,
    pub v: Conv<F>,
    pub proj: Conv<F>,
    pub heads: usize,
}

pub struct AttnCache<F> {
    hn: Array4<F>,
    gnc: ops::GnCache<F>,
    q: Array4<F>,
    k: Array4<F>,
    v: Array4<F>,
    a: Array4<F>,
    o: Array4<F>,
}

impl<F: Scalar> AttnBlock<F> {
    pub fn init<R: Rng + ?Sized>(
        channels: usize,
        slice_dim: usize,
        heads: usize,
        rng: &mut R,
    ) -> Self {
        Self {
            se_proj: Linear::init(channels, slice_dim, rng),
            gn: GroupNorm::new(channels),
            q: Conv::init(channels, channels, 1, 1, 0, rng),
            k: Conv::init(channels, channels, 1, 1, 0, rng),
            v: Conv::init(channels, channels, 1, 1, 0, rng),
            // Zero-init output projection: attention starts as identity.
            proj: Conv::zeros(channels, channels, 1, 1, 0),
            heads,
        }
    }

    /// `se` holds one slice-embedding row per bundle slot, shape (K, slice_dim).
    pub fn forward(&self, x: &Array4<F>, se: &Array2<F>) -> (Array4<F>, AttnCache<F>) {
        let inj = self.se_proj.forward(se); // (K, C)
        let mut h0 = x.clone();
        let (_, c, hh, ww) = h0.dim();
        {
            let hs = h0.as_slice_mut().expect("owned is contiguous");
            crate::exec::for_each_chunk_mut(hs, hh * ww, |plane, row| {
                let add = inj[[plane / c, plane % c]];
                for v in row.iter_mut() {
                    *v += add;
                }
            });
        }
        let (hn, gnc) = self.gn.forward(&h0);
        let q = self.q.forward(&hn);
        let k = self.k.forward(&hn);
        let v = self.v.forward(&hn);
        let (o, a) = ops::slice_attention(&q, &k, &v, self.heads);
        let p = self.proj.forward(&o);
        let mut y = x.clone();
        add_into(&mut y, &p);
        (y, AttnCache { hn, gnc, q, k, v, a, o })
    }

    pub fn backward(
        &self,
        cache: &AttnCache<F>,
        se: &Array2<F>,
        dy: &Array4<F>,
        g: &mut Self,
        d_se: &mut Array2<F>,
    ) -> Array4<F> {
        let do_ = self.proj.backward(&cache.o, dy, &mut g.proj);
        let (dq, dk, dv) =
            ops::slice_attention_backward(&cache.q, &cache.k, &cache.v, &cache.a, &do_, self.heads);
        let mut dhn = self.q.backward(&cache.hn, &dq, &mut g.q);
        add_into(&mut dhn, &self.k.backward(&cache.hn, &dk, &mut g.k));
        add_into(&mut dhn, &self.v.backward(&cache.hn, &dv, &mut g.v));
        let dh0 = self.gn.backward(&dhn, &cache.gnc, &mut g.gn);

        // The injection was broadcast over space; reduce it back per (k, c).
        let (kn, c, hh, ww) = dh0.dim();
        let mut d_inj = Array2::<F>::zeros((kn, c));
        for (plane, row) in dh0.as_slice().unwrap().chunks(hh * ww).enumerate() {
            let mut acc = F::zero();
            for v in row {
                acc += *v;
            }
            d_inj[[plane / c, plane % c]] += acc;
        }
        let d_se_part = self.se_proj.backward(se, &d_inj, &mut g.se_proj);
        add_into(d_se, &d_se_part);

        let mut dx = dh0;
        add_into(&mut dx, dy);
        dx
    }

    pub fn visit(&self, name: &str, f: Visitor<F>) {
        self.se_proj.visit(&format!("{name}.se"), f);
        self.gn.visit(&format!("{name}.gn"), f);
        self.q.visit(&format!("{name}.q"), f);
        self.k.visit(&format!("{name}.k"), f);
        self.v.visit(&format!("{name}.v"), f);
        self.proj.visit(&format!("{name}.proj"), f);
    }

    pub fn visit_mut(&mut self, name: &str, f: VisitorMut<F>) {
        self.se_proj.visit_mut(&format!("{name}.se"), f);
        self.gn.visit_mut(&format!("{name}.gn"), f);
        self.q.visit_mut(&format!("{name}.q"), f);
        self.k.visit_mut(&format!("{name}.k"), f);
        self.v.visit_mut(&format!("{name}.v"), f);
        self.proj.visit_mut(&format!("{name}.proj"), f);
    }
}
