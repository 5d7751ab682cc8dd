//! Trainable models: logistic regression, metadata MLP, 1-D CNN over
//! embedding flats, hybrid fusion, autoencoder, and boosted stumps.

mod adaboost;
mod io;
pub mod net;

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

pub use adaboost::{adaboost_fit, Stump, StumpEnsemble};
pub use io::{read_model, write_model, write_training_log, MODEL_MAGIC, MODEL_VERSION};
pub use net::{LayoutEntry, Net, Output};

use crate::embed::{FlatMatrix, FLAT_DIM};
use crate::error::{Error, Result};
use crate::eval::metrics::auroc;
use crate::matrix::Matrix;
use crate::par;
use net::{sigmoid, Layer, NetBuilder};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Logistic,
    Mlp,
    Cnn1d,
    Hybrid,
    Adaboost,
    Autoencoder,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CnnShape {
    pub input_len: usize,
    pub first_kernel: usize,
    pub first_stride: usize,
    /// Output channels per convolution, first layer first.
    pub channels: Vec<usize>,
    pub kernel: usize,
    pub stride: usize,
    /// Fully connected widths after the convolutions.
    pub fc: Vec<usize>,
}

impl Default for CnnShape {
    fn default() -> Self {
        CnnShape {
            input_len: FLAT_DIM,
            first_kernel: 768,
            first_stride: 768,
            channels: vec![32, 64, 128],
            kernel: 3,
            stride: 2,
            fc: vec![256, 64],
        }
    }
}

pub const BOTTLENECK: usize = 50;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AutoencoderShape {
    pub input_len: usize,
    pub hidden: Vec<usize>,
    pub bottleneck: usize,
}

impl Default for AutoencoderShape {
    fn default() -> Self {
        AutoencoderShape {
            input_len: FLAT_DIM,
            hidden: vec![256],
            bottleneck: BOTTLENECK,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Optimizer {
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub l2_penalty: f64,
    /// Early-stopping patience on validation AUROC, in epochs.
    pub patience: usize,
}

impl Default for Optimizer {
    fn default() -> Self {
        Optimizer {
            learning_rate: 0.01,
            momentum: 0.9,
            batch_size: 64,
            epochs: 30,
            l2_penalty: 1e-4,
            patience: 5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelSpec {
    pub kind: ModelKind,
    /// Width of the tabular feature input.
    pub meta_width: usize,
    pub mlp_hidden: Vec<usize>,
    pub cnn: CnnShape,
    pub fusion_hidden: Vec<usize>,
    pub autoencoder: AutoencoderShape,
    pub optimizer: Optimizer,
    pub adaboost_rounds: usize,
    pub seed: u64,
}

impl Default for ModelSpec {
    fn default() -> Self {
        ModelSpec {
            kind: ModelKind::Logistic,
            meta_width: 1,
            mlp_hidden: vec![256, 128, 64, 32, 16],
            cnn: CnnShape::default(),
            fusion_hidden: vec![64],
            autoencoder: AutoencoderShape::default(),
            optimizer: Optimizer::default(),
            adaboost_rounds: 200,
            seed: 0,
        }
    }
}

impl ModelSpec {
    pub fn new(kind: ModelKind, meta_width: usize) -> Self {
        ModelSpec {
            kind,
            meta_width,
            ..ModelSpec::default()
        }
    }

    pub fn uses_meta(&self) -> bool {
        matches!(self.kind, ModelKind::Logistic | ModelKind::Mlp | ModelKind::Hybrid | ModelKind::Adaboost)
    }

    pub fn uses_text(&self) -> bool {
        matches!(self.kind, ModelKind::Cnn1d | ModelKind::Hybrid | ModelKind::Autoencoder)
    }

    pub fn text_width(&self) -> usize {
        match self.kind {
            ModelKind::Autoencoder => self.autoencoder.input_len,
            _ => self.cnn.input_len,
        }
    }

    /// Returns a copy with dotted-path keys (`optimizer.learning_rate`)
    /// replaced by the given values.
    pub fn with_overrides(&self, overrides: &BTreeMap<String, serde_json::Value>) -> Result<ModelSpec> {
        let mut v = serde_json::to_value(self).expect("spec serializes");
        for (key, value) in overrides {
            let mut slot = &mut v;
            for part in key.split('.') {
                slot = slot
                    .get_mut(part)
                    .ok_or_else(|| Error::Config(format!("unknown model setting `{key}`")))?;
            }
            *slot = value.clone();
        }
        serde_json::from_value(v).map_err(|e| Error::Config(format!("model settings: {e}")))
    }
}

/// Cartesian product of a named grid, in key order then value order.
pub fn grid_points(grid: &BTreeMap<String, Vec<serde_json::Value>>) -> Vec<BTreeMap<String, serde_json::Value>> {
    let mut points = vec![BTreeMap::new()];
    for (key, values) in grid {
        let mut next = Vec::with_capacity(points.len() * values.len());
        for p in &points {
            for v in values {
                let mut q = p.clone();
                q.insert(key.clone(), v.clone());
                next.push(q);
            }
        }
        points = next;
    }
    points
}

fn dense_chain(b: &mut NetBuilder, prefix: &str, input: usize, widths: &[usize], relu_last: bool) -> (Vec<Layer>, usize) {
    let mut layers = Vec::new();
    let mut w = input;
    for (i, &o) in widths.iter().enumerate() {
        let relu = relu_last || i + 1 < widths.len();
        layers.push(b.dense(&format!("{prefix}{i}"), w, o, relu));
        w = o;
    }
    (layers, w)
}

fn cnn_chain(b: &mut NetBuilder, s: &CnnShape) -> Result<(Vec<Layer>, usize)> {
    let mut layers = Vec::new();
    if s.channels.is_empty() {
        return Err(Error::Config("cnn needs at least one convolution".into()));
    }
    let (mut len, mut ch) = (s.input_len, 1);
    for (i, &oc) in s.channels.iter().enumerate() {
        let (k, st) = if i == 0 { (s.first_kernel, s.first_stride) } else { (s.kernel, s.stride) };
        if k == 0 || st == 0 || len < k {
            return Err(Error::Config(format!(
                "convolution {i}: kernel {k} stride {st} does not fit length {len}"
            )));
        }
        let l = b.conv(&format!("conv{i}"), len, ch, oc, k, st, true);
        len = l.positions();
        ch = oc;
        layers.push(l);
    }
    let (fc, w) = dense_chain(b, "text_fc", len * ch, &s.fc, true);
    layers.extend(fc);
    Ok((layers, w))
}

pub fn build_net(spec: &ModelSpec) -> Result<Net> {
    let mut b = NetBuilder::new();
    let (meta, text, head);
    let mut output = Output::Logit;
    let needs_meta = matches!(spec.kind, ModelKind::Logistic | ModelKind::Mlp | ModelKind::Hybrid);
    if needs_meta && spec.meta_width == 0 {
        return Err(Error::Config(format!("{:?} needs a non-empty feature input", spec.kind)));
    }
    match spec.kind {
        ModelKind::Logistic => {
            meta = Vec::new();
            text = Vec::new();
            head = dense_chain(&mut b, "out", spec.meta_width, &[1], false).0;
        }
        ModelKind::Mlp => {
            meta = Vec::new();
            text = Vec::new();
            let mut widths = spec.mlp_hidden.clone();
            widths.push(1);
            head = dense_chain(&mut b, "mlp", spec.meta_width, &widths, false).0;
        }
        ModelKind::Cnn1d => {
            meta = Vec::new();
            let (t, w) = cnn_chain(&mut b, &spec.cnn)?;
            text = t;
            head = dense_chain(&mut b, "out", w, &[1], false).0;
        }
        ModelKind::Hybrid => {
            let (m, mw) = dense_chain(&mut b, "meta_fc", spec.meta_width, &spec.mlp_hidden, true);
            meta = m;
            let (t, tw) = cnn_chain(&mut b, &spec.cnn)?;
            text = t;
            let mut widths = spec.fusion_hidden.clone();
            widths.push(1);
            head = dense_chain(&mut b, "fusion", mw + tw, &widths, false).0;
        }
        ModelKind::Autoencoder => {
            let a = &spec.autoencoder;
            if a.bottleneck != BOTTLENECK {
                return Err(Error::Config(format!("autoencoder bottleneck must be {BOTTLENECK}, got {}", a.bottleneck)));
            }
            meta = Vec::new();
            let mut enc = a.hidden.clone();
            enc.push(a.bottleneck);
            text = dense_chain(&mut b, "enc", a.input_len, &enc, false).0;
            let mut dec: Vec<usize> = a.hidden.iter().rev().copied().collect();
            dec.push(a.input_len);
            head = dense_chain(&mut b, "dec", a.bottleneck, &dec, false).0;
            output = Output::Reconstruction;
        }
        ModelKind::Adaboost => {
            return Err(Error::Config("boosted stumps are not a network".into()));
        }
    }
    Ok(Net {
        meta_width: spec.meta_width,
        text_width: spec.text_width(),
        uses_meta: needs_meta,
        uses_text: spec.uses_text(),
        meta,
        text,
        head,
        output,
        n_params: b.total(),
    })
}

/// He-normal weights for rectified layers, unit-fan-in scaling otherwise,
/// zero biases. A reconstruction layer starts near zero so the untrained
/// error sits at the zero-prediction baseline.
pub fn init_params(net: &Net, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = vec![0.0; net.n_params];
    let last = net.head.last().map(|l| l.w_off);
    for l in net.layers() {
        let fan_in = l.window_len() as f64;
        let mut sd = if l.relu { (2.0 / fan_in).sqrt() } else { (1.0 / fan_in).sqrt() };
        if net.output == Output::Reconstruction && Some(l.w_off) == last {
            sd *= 0.1;
        }
        let dist = Normal::new(0.0, sd).expect("finite sd");
        for w in &mut params[l.w_off..l.w_off + l.n_weights()] {
            *w = dist.sample(&mut rng);
        }
    }
    params
}

/// Borrowed row-major f32 rows of a fixed width.
#[derive(Clone, Copy, Debug)]
pub struct TextView<'a> {
    pub data: &'a [f32],
    pub width: usize,
}

impl<'a> TextView<'a> {
    pub fn new(data: &'a [f32], width: usize) -> Self {
        TextView { data, width }
    }

    pub fn rows(&self) -> usize {
        if self.width == 0 {
            0
        } else {
            self.data.len() / self.width
        }
    }

    pub fn row(&self, i: usize) -> &'a [f32] {
        &self.data[i * self.width..(i + 1) * self.width]
    }
}

impl<'a> From<&'a FlatMatrix> for TextView<'a> {
    fn from(m: &'a FlatMatrix) -> Self {
        TextView::new(&m.data, FLAT_DIM)
    }
}

/// Model inputs: standardized features and/or embedding flats, row-aligned.
#[derive(Clone, Copy, Debug, Default)]
pub struct Inputs<'a> {
    pub meta: Option<&'a Matrix>,
    pub text: Option<TextView<'a>>,
}

impl<'a> Inputs<'a> {
    pub fn meta(m: &'a Matrix) -> Self {
        Inputs { meta: Some(m), text: None }
    }

    pub fn text(t: impl Into<TextView<'a>>) -> Self {
        Inputs {
            meta: None,
            text: Some(t.into()),
        }
    }

    pub fn both(m: &'a Matrix, t: impl Into<TextView<'a>>) -> Self {
        Inputs {
            meta: Some(m),
            text: Some(t.into()),
        }
    }

    pub fn rows(&self) -> Result<usize> {
        match (self.meta, self.text) {
            (Some(m), Some(t)) if m.rows() != t.rows() => Err(Error::invalid(format!(
                "{} feature rows but {} embedding rows",
                m.rows(),
                t.rows()
            ))),
            (Some(m), _) => Ok(m.rows()),
            (None, Some(t)) => Ok(t.rows()),
            (None, None) => Ok(0),
        }
    }

    fn meta_row(&self, i: usize) -> &[f64] {
        self.meta.map_or(&[], |m| m.row(i))
    }

    fn text_row(&self, i: usize) -> Vec<f64> {
        self.text.map_or_else(Vec::new, |t| t.row(i).iter().map(|v| *v as f64).collect())
    }

    fn check(&self, net: &Net) -> Result<usize> {
        let n = self.rows()?;
        if net.uses_meta {
            match self.meta {
                Some(m) if m.cols() == net.meta_width => {}
                Some(m) => {
                    return Err(Error::invalid(format!(
                        "model expects {} feature columns, got {}",
                        net.meta_width,
                        m.cols()
                    )))
                }
                None if n == 0 => {}
                None => return Err(Error::invalid("model needs a feature matrix")),
            }
        }
        if net.uses_text {
            match self.text {
                Some(t) if t.width == net.text_width => {}
                Some(t) => {
                    return Err(Error::invalid(format!(
                        "model expects {}-wide embeddings, got {}",
                        net.text_width, t.width
                    )))
                }
                None if n == 0 => {}
                None => return Err(Error::invalid("model needs embedding flats")),
            }
        }
        Ok(n)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss: f64,
    pub validation_auroc: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub spec: ModelSpec,
    pub layout: Vec<LayoutEntry>,
    #[serde(skip)]
    pub params: Vec<f64>,
    pub training_log: Vec<EpochLog>,
    pub ensemble: Option<StumpEnsemble>,
    pub seed: u64,
}

impl TrainedModel {
    pub fn layout_total(&self) -> usize {
        self.layout.iter().map(|e| e.len).sum()
    }

    pub fn net(&self) -> Result<Net> {
        build_net(&self.spec)
    }

    /// Untrained model holding the seeded initialization.
    pub fn initial(spec: &ModelSpec) -> Result<Self> {
        let net = build_net(spec)?;
        Ok(TrainedModel {
            spec: spec.clone(),
            layout: net.layout(),
            params: init_params(&net, spec.seed),
            training_log: Vec::new(),
            ensemble: None,
            seed: spec.seed,
        })
    }
}

/// Rows per gradient chunk are fixed by batch size, not thread count, so
/// results do not depend on the pool size.
fn chunk_count(net: &Net, batch: usize) -> usize {
    if net.n_params > 1_000_000 {
        1
    } else {
        batch.clamp(1, 4)
    }
}

/// Mean loss (with the L2 term) and its gradient over `rows`.
fn batch_gradient(net: &Net, params: &[f64], inputs: &Inputs, labels: &[f64], rows: &[usize], l2: f64, grad: &mut [f64]) -> f64 {
    let n = rows.len();
    let scale = 1.0 / n as f64;
    let per = n.div_ceil(chunk_count(net, n));
    let chunks: Vec<&[usize]> = rows.chunks(per).collect();
    grad.iter_mut().for_each(|g| *g = 0.0);
    let mut loss = 0.0;
    if chunks.len() == 1 {
        for &i in rows {
            let y = labels.get(i).copied().unwrap_or(0.0);
            loss += net.accumulate_row(params, inputs.meta_row(i), &inputs.text_row(i), y, scale, grad);
        }
    } else {
        let parts = par::map(&chunks, |c| {
            let mut g = vec![0.0; net.n_params];
            let mut l = 0.0;
            for &i in *c {
                let y = labels.get(i).copied().unwrap_or(0.0);
                l += net.accumulate_row(params, inputs.meta_row(i), &inputs.text_row(i), y, scale, &mut g);
            }
            (g, l)
        });
        for (g, l) in parts {
            for (a, b) in grad.iter_mut().zip(&g) {
                *a += b;
            }
            loss += l;
        }
    }
    net.add_l2_grad(params, l2, grad);
    loss / n as f64 + net.l2_term(params, l2)
}

fn forward_outputs(net: &Net, params: &[f64], inputs: &Inputs, n: usize) -> Vec<Vec<f64>> {
    let idx: Vec<usize> = (0..n).collect();
    par::map(&idx, |&i| {
        let text = inputs.text_row(i);
        let t = net.forward(params, inputs.meta_row(i), &text);
        net.output(&t).to_vec()
    })
}

struct Validation<'a> {
    inputs: Inputs<'a>,
    labels: &'a [bool],
}

fn fit_net(
    net: &Net,
    mut params: Vec<f64>,
    inputs: &Inputs,
    labels: &[f64],
    opt: &Optimizer,
    seed: u64,
    val: Option<Validation>,
) -> Result<(Vec<f64>, Vec<EpochLog>)> {
    let n = inputs.check(net)?;
    if n == 0 && opt.epochs > 0 {
        return Err(Error::invalid("no training rows"));
    }
    if opt.batch_size == 0 {
        return Err(Error::Config("batch size must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut velocity = vec![0.0; net.n_params];
    let mut grad = vec![0.0; net.n_params];
    let mut order: Vec<usize> = (0..n).collect();
    let mut log = Vec::with_capacity(opt.epochs);
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut stale = 0;
    for epoch in 0..opt.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for (b, batch) in order.chunks(opt.batch_size).enumerate() {
            let loss = batch_gradient(net, &params, inputs, labels, batch, opt.l2_penalty, &mut grad);
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFiniteLoss { epoch, batch: b });
            }
            for ((p, v), g) in params.iter_mut().zip(velocity.iter_mut()).zip(&grad) {
                *v = opt.momentum * *v - opt.learning_rate * g;
                *p += *v;
            }
            total += loss * batch.len() as f64;
        }
        let mut entry = EpochLog {
            epoch,
            loss: total / n as f64,
            validation_auroc: None,
        };
        if let Some(v) = &val {
            let m = v.inputs.check(net)?;
            let scores: Vec<f64> = forward_outputs(net, &params, &v.inputs, m).iter().map(|o| sigmoid(o[0])).collect();
            let a = auroc(&scores, v.labels)?;
            entry.validation_auroc = Some(a);
            if best.as_ref().is_none_or(|(b, _)| a > *b) {
                best = Some((a, params.clone()));
                stale = 0;
            } else {
                stale += 1;
            }
        }
        log.push(entry);
        if val.is_some() && stale >= opt.patience {
            break;
        }
    }
    if let Some((_, p)) = best {
        params = p;
    }
    Ok((params, log))
}

fn label_values(labels: &[bool]) -> Vec<f64> {
    labels.iter().map(|&l| if l { 1.0 } else { 0.0 }).collect()
}

/// Trains a classifier. With a validation set, training stops once
/// validation AUROC has not improved for `patience` epochs and the best
/// parameters are kept.
pub fn train(
    spec: &ModelSpec,
    inputs: &Inputs,
    labels: &[bool],
    validation: Option<(&Inputs, &[bool])>,
) -> Result<TrainedModel> {
    let n = inputs.rows()?;
    if labels.len() != n {
        return Err(Error::invalid(format!("{} labels for {} rows", labels.len(), n)));
    }
    match spec.kind {
        ModelKind::Autoencoder => return Err(Error::Config("use autoencoder_fit for autoencoders".into())),
        ModelKind::Adaboost => {
            let m = inputs.meta.ok_or_else(|| Error::invalid("boosted stumps need a feature matrix"))?;
            if m.cols() != spec.meta_width {
                return Err(Error::invalid(format!(
                    "model expects {} feature columns, got {}",
                    spec.meta_width,
                    m.cols()
                )));
            }
            let ens = adaboost_fit(m, labels, spec.adaboost_rounds)?;
            return Ok(TrainedModel {
                spec: spec.clone(),
                layout: Vec::new(),
                params: Vec::new(),
                training_log: Vec::new(),
                ensemble: Some(ens),
                seed: spec.seed,
            });
        }
        _ => {}
    }
    let mut model = TrainedModel::initial(spec)?;
    let net = build_net(spec)?;
    let val = validation.map(|(inputs, labels)| Validation { inputs: *inputs, labels });
    let (params, log) = fit_net(&net, model.params, inputs, &label_values(labels), &spec.optimizer, spec.seed, val)?;
    model.params = params;
    model.training_log = log;
    Ok(model)
}

/// Scores in (0, 1). Each row is scored independently.
pub fn predict(model: &TrainedModel, inputs: &Inputs) -> Result<Vec<f64>> {
    if let Some(ens) = &model.ensemble {
        let m = match inputs.meta {
            Some(m) => m,
            None if inputs.rows()? == 0 => return Ok(Vec::new()),
            None => return Err(Error::invalid("boosted stumps need a feature matrix")),
        };
        if m.cols() != model.spec.meta_width {
            return Err(Error::invalid(format!(
                "model expects {} feature columns, got {}",
                model.spec.meta_width,
                m.cols()
            )));
        }
        return Ok((0..m.rows()).map(|r| ens.score(m.row(r))).collect());
    }
    let net = model.net()?;
    if net.output != Output::Logit {
        return Err(Error::invalid("an autoencoder does not score rows; use encode"));
    }
    let n = inputs.check(&net)?;
    Ok(forward_outputs(&net, &model.params, inputs, n).iter().map(|o| sigmoid(o[0])).collect())
}

/// Bottleneck codes of an autoencoder, one row per input row.
pub fn encode(model: &TrainedModel, text: TextView) -> Result<Matrix> {
    let net = model.net()?;
    if net.output != Output::Reconstruction {
        return Err(Error::invalid("only autoencoders produce codes"));
    }
    let inputs = Inputs::text(text);
    let n = inputs.check(&net)?;
    let idx: Vec<usize> = (0..n).collect();
    let codes = par::map(&idx, |&i| {
        let x = inputs.text_row(i);
        let t = net.forward(&model.params, &[], &x);
        net.text_code(&t, &x).to_vec()
    });
    let width = model.spec.autoencoder.bottleneck;
    Ok(Matrix::new(n, width, codes.concat()))
}

/// Mean squared reconstruction error over the given rows.
pub fn reconstruction_mse(model: &TrainedModel, text: TextView) -> Result<f64> {
    let net = model.net()?;
    let inputs = Inputs::text(text);
    let n = inputs.check(&net)?;
    if n == 0 {
        return Ok(0.0);
    }
    let outs = forward_outputs(&net, &model.params, &inputs, n);
    let total: f64 = outs
        .iter()
        .enumerate()
        .map(|(i, o)| net.row_loss(o, 0.0, &inputs.text_row(i)))
        .sum();
    Ok(total / n as f64)
}

#[derive(Clone, Debug)]
pub struct AutoencoderFit {
    pub model: TrainedModel,
    pub codes: Matrix,
    pub heldout_rows: Vec<usize>,
    pub heldout_mse: f64,
    /// Mean squared value of the held-out rows, the error of predicting zeros.
    pub zero_baseline_mse: f64,
    /// Error of predicting the training-row mean.
    pub mean_baseline_mse: f64,
}

/// Trains on 90% of rows, reports error on the held-out 10%, and emits codes
/// for every row.
pub fn autoencoder_fit(text: TextView, spec: &ModelSpec) -> Result<AutoencoderFit> {
    if spec.kind != ModelKind::Autoencoder {
        return Err(Error::Config("autoencoder_fit needs an autoencoder spec".into()));
    }
    let n = text.rows();
    if n < 2 {
        return Err(Error::invalid("autoencoder needs at least 2 rows"));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));
    let n_held = ((n as f64 * 0.1).round() as usize).clamp(1, n - 1);
    let mut held: Vec<usize> = idx[..n_held].to_vec();
    let mut train_rows: Vec<usize> = idx[n_held..].to_vec();
    held.sort_unstable();
    train_rows.sort_unstable();

    let w = text.width;
    let gather = |rows: &[usize]| -> Vec<f32> { rows.iter().flat_map(|&r| text.row(r).iter().copied()).collect() };
    let train_data = gather(&train_rows);
    let held_data = gather(&held);
    let train_view = TextView::new(&train_data, w);
    let held_view = TextView::new(&held_data, w);

    let mut model = TrainedModel::initial(spec)?;
    let net = build_net(spec)?;
    let (params, log) = fit_net(&net, model.params, &Inputs::text(train_view), &[], &spec.optimizer, spec.seed, None)?;
    model.params = params;
    model.training_log = log;

    let heldout_mse = reconstruction_mse(&model, held_view)?;
    let zero_baseline_mse = held_data.iter().map(|v| (*v as f64).powi(2)).sum::<f64>() / held_data.len() as f64;
    let mut mean = vec![0.0; w];
    for r in 0..train_view.rows() {
        for (m, v) in mean.iter_mut().zip(train_view.row(r)) {
            *m += *v as f64 / train_view.rows() as f64;
        }
    }
    let mean_baseline_mse = (0..held_view.rows())
        .flat_map(|r| held_view.row(r).iter().zip(&mean).map(|(v, m)| (*v as f64 - m).powi(2)))
        .sum::<f64>()
        / held_data.len() as f64;
    let codes = encode(&model, text)?;
    Ok(AutoencoderFit {
        model,
        codes,
        heldout_rows: held,
        heldout_mse,
        zero_baseline_mse,
        mean_baseline_mse,
    })
}

#[derive(Clone, Debug)]
pub struct GradCheckConfig {
    pub h: f64,
    /// Fraction of weights sampled; every bias is always checked.
    pub weight_fraction: f64,
    pub max_weights: usize,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            h: 1e-4,
            weight_fraction: 0.01,
            max_weights: 2000,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    pub worst_param: Option<usize>,
    pub checked: usize,
    /// Parameters whose perturbation moved a rectifier across its kink.
    pub skipped_kinks: usize,
}

/// Mean batch loss gradient with the L2 term.
pub fn analytic_gradient(net: &Net, params: &[f64], inputs: &Inputs, labels: &[bool], l2: f64) -> Result<Vec<f64>> {
    let n = inputs.check(net)?;
    let rows: Vec<usize> = (0..n).collect();
    let mut grad = vec![0.0; net.n_params];
    batch_gradient(net, params, inputs, &label_values(labels), &rows, l2, &mut grad);
    Ok(grad)
}

/// Compares `analytic` against central differences of the batch loss on all
/// biases plus a random sample of weights.
pub fn check_gradient(
    net: &Net,
    params: &[f64],
    inputs: &Inputs,
    labels: &[bool],
    l2: f64,
    analytic: &[f64],
    cfg: &GradCheckConfig,
) -> Result<GradCheck> {
    let n = inputs.check(net)?;
    if n == 0 || n > 8 {
        return Err(Error::invalid(format!("gradient check takes 1 to 8 rows, got {n}")));
    }
    let ys = label_values(labels);
    let metas: Vec<&[f64]> = (0..n).map(|i| inputs.meta_row(i)).collect();
    let texts: Vec<Vec<f64>> = (0..n).map(|i| inputs.text_row(i)).collect();
    let traces: Vec<_> = (0..n).map(|i| net.forward(params, metas[i], &texts[i])).collect();

    let mut candidates: Vec<usize> = Vec::new();
    let mut weights: Vec<usize> = Vec::new();
    for l in net.layers() {
        candidates.extend(l.b_off..l.b_off + l.out_ch);
        weights.extend(l.w_off..l.w_off + l.n_weights());
    }
    let want = ((weights.len() as f64 * cfg.weight_fraction).ceil() as usize)
        .max(20)
        .min(cfg.max_weights)
        .min(weights.len());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    for k in rand::seq::index::sample(&mut rng, weights.len(), want) {
        candidates.push(weights[k]);
    }
    candidates.sort_unstable();

    let h = cfg.h;
    let results = par::map(&candidates, |&q| {
        let mut diff = 0.0;
        for i in 0..n {
            let y = ys.get(i).copied().unwrap_or(0.0);
            let up = net.row_loss_delta(params, &traces[i], metas[i], &texts[i], y, q, h)?;
            let down = net.row_loss_delta(params, &traces[i], metas[i], &texts[i], y, q, -h)?;
            diff += up - down;
        }
        let mut numeric = diff / n as f64 / (2.0 * h);
        if l2 != 0.0 && net.is_weight(q) {
            // 0.5*l2*((w+h)^2 - (w-h)^2) / 2h
            numeric += l2 * params[q];
        }
        Some(numeric)
    });
    let mut report = GradCheck {
        max_rel_error: 0.0,
        worst_param: None,
        checked: 0,
        skipped_kinks: 0,
    };
    for (&q, r) in candidates.iter().zip(results) {
        let Some(num) = r else {
            report.skipped_kinks += 1;
            continue;
        };
        let a = analytic[q];
        let err = (a - num).abs() / (a.abs() + num.abs()).max(1e-8);
        report.checked += 1;
        if report.worst_param.is_none() || err > report.max_rel_error {
            report.max_rel_error = err;
            report.worst_param = Some(q);
        }
    }
    Ok(report)
}

/// Gradient check of `spec` at its seeded initialization with biases
/// jittered, so that no rectifier sits exactly at its kink.
pub fn gradient_check(spec: &ModelSpec, inputs: &Inputs, labels: &[bool], cfg: &GradCheckConfig) -> Result<GradCheck> {
    let net = build_net(spec)?;
    let mut params = init_params(&net, spec.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x5bd1_e995);
    let jitter = Normal::new(0.0, 0.1).expect("finite sd");
    for l in net.layers() {
        for b in &mut params[l.b_off..l.b_off + l.out_ch] {
            *b = jitter.sample(&mut rng);
        }
    }
    let l2 = spec.optimizer.l2_penalty;
    let analytic = analytic_gradient(&net, &params, inputs, labels, l2)?;
    check_gradient(&net, &params, inputs, labels, l2, &analytic, cfg)
}
