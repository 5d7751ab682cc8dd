//! Feed-forward networks over a flat parameter vector.
//!
//! Every layer is a strided 1-D convolution in channels-last layout; a dense
//! layer is the one-position case (`in_len = kernel = stride = 1`).

use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layer {
    pub name: String,
    pub in_len: usize,
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub stride: usize,
    pub relu: bool,
    pub w_off: usize,
    pub b_off: usize,
}

impl Layer {
    pub fn positions(&self) -> usize {
        (self.in_len - self.kernel) / self.stride + 1
    }

    pub fn window_len(&self) -> usize {
        self.kernel * self.in_ch
    }

    pub fn in_size(&self) -> usize {
        self.in_len * self.in_ch
    }

    pub fn out_size(&self) -> usize {
        self.positions() * self.out_ch
    }

    pub fn n_weights(&self) -> usize {
        self.out_ch * self.window_len()
    }

    fn window<'a>(&self, input: &'a [f64], p: usize) -> &'a [f64] {
        let start = p * self.stride * self.in_ch;
        &input[start..start + self.window_len()]
    }

    fn weights<'a>(&self, params: &'a [f64], o: usize) -> &'a [f64] {
        let wl = self.window_len();
        &params[self.w_off + o * wl..self.w_off + (o + 1) * wl]
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayoutEntry {
    pub name: String,
    pub offset: usize,
    pub len: usize,
    pub shape: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Output {
    /// One logit, binary cross-entropy.
    Logit,
    /// Reconstruction of the text input, mean squared error.
    Reconstruction,
}

/// Two optional input branches feeding a shared head. A branch with no
/// layers passes its raw input through.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Net {
    pub meta_width: usize,
    pub text_width: usize,
    pub uses_meta: bool,
    pub uses_text: bool,
    pub meta: Vec<Layer>,
    pub text: Vec<Layer>,
    pub head: Vec<Layer>,
    pub output: Output,
    pub n_params: usize,
}

#[derive(Clone, Debug, Default)]
pub struct Act {
    pub pre: Vec<f64>,
    pub post: Vec<f64>,
}

#[derive(Clone, Debug, Default)]
pub struct Trace {
    pub meta: Vec<Act>,
    pub text: Vec<Act>,
    pub head_in: Vec<f64>,
    pub head: Vec<Act>,
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

fn relu(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        0.0
    }
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Binary cross-entropy computed from the logit.
pub(crate) fn bce_from_logit(z: f64, y: f64) -> f64 {
    z.max(0.0) - z * y + (-z.abs()).exp().ln_1p()
}

fn layer_forward(l: &Layer, params: &[f64], input: &[f64]) -> Act {
    debug_assert_eq!(input.len(), l.in_size(), "{}", l.name);
    let (np, oc) = (l.positions(), l.out_ch);
    let mut pre = vec![0.0; np * oc];
    let bias = &params[l.b_off..l.b_off + oc];
    for p in 0..np {
        let win = l.window(input, p);
        let out = &mut pre[p * oc..(p + 1) * oc];
        if win.iter().all(|v| *v == 0.0) {
            out.copy_from_slice(bias);
        } else {
            for o in 0..oc {
                out[o] = bias[o] + dot(l.weights(params, o), win);
            }
        }
    }
    let post = if l.relu { pre.iter().map(|v| relu(*v)).collect() } else { pre.clone() };
    Act { pre, post }
}

/// Accumulates parameter gradients and, when asked, the input gradient.
fn layer_backward(
    l: &Layer,
    params: &[f64],
    input: &[f64],
    act: &Act,
    d_post: &[f64],
    grad: &mut [f64],
    mut d_in: Option<&mut [f64]>,
) {
    let (np, oc, wl) = (l.positions(), l.out_ch, l.window_len());
    for p in 0..np {
        let start = p * l.stride * l.in_ch;
        let win = &input[start..start + wl];
        let zero_window = win.iter().all(|v| *v == 0.0);
        for o in 0..oc {
            let k = p * oc + o;
            let g = if l.relu && act.pre[k] <= 0.0 { 0.0 } else { d_post[k] };
            if g == 0.0 {
                continue;
            }
            grad[l.b_off + o] += g;
            if !zero_window {
                let gw = &mut grad[l.w_off + o * wl..l.w_off + (o + 1) * wl];
                axpy(g, win, gw);
            }
            if let Some(d) = d_in.as_deref_mut() {
                axpy(g, l.weights(params, o), &mut d[start..start + wl]);
            }
        }
    }
}

fn chain_forward(layers: &[Layer], params: &[f64], input: &[f64]) -> Vec<Act> {
    let mut acts: Vec<Act> = Vec::with_capacity(layers.len());
    for (k, l) in layers.iter().enumerate() {
        let a = {
            let inp = if k == 0 { input } else { &acts[k - 1].post };
            layer_forward(l, params, inp)
        };
        acts.push(a);
    }
    acts
}

fn chain_output<'a>(acts: &'a [Act], input: &'a [f64]) -> &'a [f64] {
    acts.last().map_or(input, |a| &a.post)
}

fn chain_backward(
    layers: &[Layer],
    params: &[f64],
    input: &[f64],
    acts: &[Act],
    mut d_post: Vec<f64>,
    grad: &mut [f64],
    need_input_grad: bool,
) -> Option<Vec<f64>> {
    for k in (0..layers.len()).rev() {
        let inp = if k == 0 { input } else { &acts[k - 1].post };
        let want = k > 0 || need_input_grad;
        let mut d_in = if want { vec![0.0; layers[k].in_size()] } else { Vec::new() };
        layer_backward(
            &layers[k],
            params,
            inp,
            &acts[k],
            &d_post,
            grad,
            if want { Some(&mut d_in) } else { None },
        );
        d_post = d_in;
    }
    need_input_grad.then_some(d_post)
}

/// Propagates an exact activation difference through a layer whose
/// parameters are unchanged. Returns `None` when a rectifier changes state.
fn layer_delta(l: &Layer, params: &[f64], act: &Act, d_in: &[f64]) -> Option<Vec<f64>> {
    let (np, oc, wl) = (l.positions(), l.out_ch, l.window_len());
    let mut d_pre = vec![0.0; np * oc];
    let mut nz = Vec::new();
    for p in 0..np {
        let dw = l.window(d_in, p);
        nz.clear();
        nz.extend((0..wl).filter(|&t| dw[t] != 0.0));
        if nz.is_empty() {
            continue;
        }
        for o in 0..oc {
            let w = l.weights(params, o);
            d_pre[p * oc + o] = if nz.len() * 8 < wl {
                nz.iter().map(|&t| w[t] * dw[t]).sum()
            } else {
                dot(w, dw)
            };
        }
    }
    rectify_delta(l, act, d_pre)
}

fn rectify_delta(l: &Layer, act: &Act, mut d_pre: Vec<f64>) -> Option<Vec<f64>> {
    if l.relu {
        for (d, &z) in d_pre.iter_mut().zip(&act.pre) {
            if *d == 0.0 {
                continue;
            }
            let (before, after) = (z > 0.0, z + *d > 0.0);
            if before != after || z == 0.0 {
                return None;
            }
            if !before {
                *d = 0.0;
            }
        }
    }
    Some(d_pre)
}

/// Which chain a parameter lives in and the layer index inside it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Chain {
    Meta,
    Text,
    Head,
}

impl Net {
    pub fn layers(&self) -> impl Iterator<Item = &Layer> {
        self.meta.iter().chain(&self.text).chain(&self.head)
    }

    pub fn layout(&self) -> Vec<LayoutEntry> {
        let mut out = Vec::new();
        for l in self.layers() {
            out.push(LayoutEntry {
                name: format!("{}.weight", l.name),
                offset: l.w_off,
                len: l.n_weights(),
                shape: vec![l.out_ch, l.kernel, l.in_ch],
            });
            out.push(LayoutEntry {
                name: format!("{}.bias", l.name),
                offset: l.b_off,
                len: l.out_ch,
                shape: vec![l.out_ch],
            });
        }
        out
    }

    pub fn is_weight(&self, q: usize) -> bool {
        self.layers().any(|l| q >= l.w_off && q < l.w_off + l.n_weights())
    }

    pub fn output_width(&self) -> usize {
        self.head.last().map_or(0, Layer::out_size)
    }

    pub fn forward(&self, params: &[f64], meta: &[f64], text: &[f64]) -> Trace {
        let meta_acts = if self.uses_meta { chain_forward(&self.meta, params, meta) } else { Vec::new() };
        let text_acts = if self.uses_text { chain_forward(&self.text, params, text) } else { Vec::new() };
        let mut head_in = Vec::new();
        if self.uses_meta {
            head_in.extend_from_slice(chain_output(&meta_acts, meta));
        }
        if self.uses_text {
            head_in.extend_from_slice(chain_output(&text_acts, text));
        }
        let head = chain_forward(&self.head, params, &head_in);
        Trace {
            meta: meta_acts,
            text: text_acts,
            head_in,
            head,
        }
    }

    pub fn output<'a>(&self, t: &'a Trace) -> &'a [f64] {
        chain_output(&t.head, &t.head_in)
    }

    /// Output of the text branch, the code layer for an autoencoder.
    pub fn text_code<'a>(&self, t: &'a Trace, text: &'a [f64]) -> &'a [f64] {
        chain_output(&t.text, text)
    }

    fn meta_out_width(&self) -> usize {
        if !self.uses_meta {
            0
        } else {
            self.meta.last().map_or(self.meta_width, Layer::out_size)
        }
    }

    /// Unregularized loss of one row.
    pub fn row_loss(&self, out: &[f64], label: f64, text: &[f64]) -> f64 {
        match self.output {
            Output::Logit => bce_from_logit(out[0], label),
            Output::Reconstruction => {
                out.iter().zip(text).map(|(o, x)| (o - x) * (o - x)).sum::<f64>() / out.len() as f64
            }
        }
    }

    fn d_output(&self, out: &[f64], label: f64, text: &[f64], scale: f64) -> Vec<f64> {
        match self.output {
            Output::Logit => vec![(sigmoid(out[0]) - label) * scale],
            Output::Reconstruction => {
                let c = 2.0 * scale / out.len() as f64;
                out.iter().zip(text).map(|(o, x)| c * (o - x)).collect()
            }
        }
    }

    /// Adds `scale * d(row loss)/d(params)` into `grad`; returns the row loss.
    pub fn accumulate_row(
        &self,
        params: &[f64],
        meta: &[f64],
        text: &[f64],
        label: f64,
        scale: f64,
        grad: &mut [f64],
    ) -> f64 {
        let t = self.forward(params, meta, text);
        let out = self.output(&t);
        let loss = self.row_loss(out, label, text);
        let d_out = self.d_output(out, label, text, scale);
        let branch_layers = (self.uses_meta && !self.meta.is_empty()) || (self.uses_text && !self.text.is_empty());
        let d_head_in = chain_backward(&self.head, params, &t.head_in, &t.head, d_out, grad, branch_layers);
        if let Some(d) = d_head_in {
            let split = self.meta_out_width();
            if self.uses_meta && !self.meta.is_empty() {
                chain_backward(&self.meta, params, meta, &t.meta, d[..split].to_vec(), grad, false);
            }
            if self.uses_text && !self.text.is_empty() {
                chain_backward(&self.text, params, text, &t.text, d[split..].to_vec(), grad, false);
            }
        }
        loss
    }

    /// `0.5 * l2 * sum(w^2)` over weights only.
    pub fn l2_term(&self, params: &[f64], l2: f64) -> f64 {
        if l2 == 0.0 {
            return 0.0;
        }
        let s: f64 = self
            .layers()
            .map(|l| params[l.w_off..l.w_off + l.n_weights()].iter().map(|w| w * w).sum::<f64>())
            .sum();
        0.5 * l2 * s
    }

    pub fn add_l2_grad(&self, params: &[f64], l2: f64, grad: &mut [f64]) {
        if l2 == 0.0 {
            return;
        }
        for l in self.layers() {
            let r = l.w_off..l.w_off + l.n_weights();
            axpy(l2, &params[r.clone()], &mut grad[r]);
        }
    }

    fn locate(&self, q: usize) -> (Chain, usize) {
        for (chain, layers) in [(Chain::Meta, &self.meta), (Chain::Text, &self.text), (Chain::Head, &self.head)] {
            for (k, l) in layers.iter().enumerate() {
                if (q >= l.w_off && q < l.w_off + l.n_weights()) || (q >= l.b_off && q < l.b_off + l.out_ch) {
                    return (chain, k);
                }
            }
        }
        panic!("parameter {q} outside the layout");
    }

    /// Exact change of one row's loss when parameter `q` moves by `h`,
    /// computed by propagating the activation difference forward from the
    /// perturbed layer. `None` if any rectifier changes state.
    pub fn row_loss_delta(
        &self,
        params: &[f64],
        trace: &Trace,
        meta: &[f64],
        text: &[f64],
        label: f64,
        q: usize,
        h: f64,
    ) -> Option<f64> {
        let (chain, k) = self.locate(q);
        let (layers, acts, input): (&[Layer], &[Act], &[f64]) = match chain {
            Chain::Meta => (&self.meta, &trace.meta, meta),
            Chain::Text => (&self.text, &trace.text, text),
            Chain::Head => (&self.head, &trace.head, &trace.head_in),
        };
        let l = &layers[k];
        let inp = if k == 0 { input } else { &acts[k - 1].post };
        let (np, oc, wl) = (l.positions(), l.out_ch, l.window_len());
        let mut d_pre = vec![0.0; np * oc];
        if q >= l.b_off && q < l.b_off + oc {
            let o = q - l.b_off;
            for p in 0..np {
                d_pre[p * oc + o] = h;
            }
        } else {
            let r = q - l.w_off;
            let (o, t) = (r / wl, r % wl);
            for p in 0..np {
                d_pre[p * oc + o] = h * l.window(inp, p)[t];
            }
        }
        let mut d = rectify_delta(l, &acts[k], d_pre)?;
        for j in k + 1..layers.len() {
            d = layer_delta(&layers[j], params, &acts[j], &d)?;
        }
        if chain != Chain::Head {
            let mut d_head_in = vec![0.0; trace.head_in.len()];
            let off = if chain == Chain::Meta { 0 } else { self.meta_out_width() };
            d_head_in[off..off + d.len()].copy_from_slice(&d);
            d = d_head_in;
            for j in 0..self.head.len() {
                d = layer_delta(&self.head[j], params, &trace.head[j], &d)?;
            }
        }
        let out = self.output(trace);
        Some(match self.output {
            Output::Logit => {
                let (z, dz) = (out[0], d[0]);
                (sigmoid(z) * dz.exp_m1()).ln_1p() - label * dz
            }
            Output::Reconstruction => {
                let mut s = 0.0;
                for (j, &dz) in d.iter().enumerate() {
                    if dz != 0.0 {
                        s += dz * (2.0 * (out[j] - text[j]) + dz);
                    }
                }
                s / out.len() as f64
            }
        })
    }
}

/// Assigns parameter offsets in chain order.
pub struct NetBuilder {
    next: usize,
}

impl NetBuilder {
    pub fn new() -> Self {
        NetBuilder { next: 0 }
    }

    pub fn conv(&mut self, name: &str, in_len: usize, in_ch: usize, out_ch: usize, kernel: usize, stride: usize, relu: bool) -> Layer {
        let w_off = self.next;
        let n_w = out_ch * kernel * in_ch;
        let b_off = w_off + n_w;
        self.next = b_off + out_ch;
        Layer {
            name: name.to_owned(),
            in_len,
            in_ch,
            out_ch,
            kernel,
            stride,
            relu,
            w_off,
            b_off,
        }
    }

    pub fn dense(&mut self, name: &str, ins: usize, outs: usize, relu: bool) -> Layer {
        self.conv(name, 1, ins, outs, 1, 1, relu)
    }

    pub fn total(&self) -> usize {
        self.next
    }
}

impl Default for NetBuilder {
    fn default() -> Self {
        Self::new()
    }
}
