//! Method 2: a permutation-invariant set network over GMM posterior
//! features.
//!
//! Every other box in the scene becomes one item
//! `(area_ratio, own_r, p(c_1 | ·), …, p(c_n | ·))`. Items pass through a
//! dense + tanh encoder chosen by the other box's group, the encodings are
//! averaged, and a dense softmax layer scores the target group's classes.
//! Context groups never seen in training go through a shared fallback
//! encoder fitted on all items pooled.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::catalog::{extract_candidate_features, Catalog, ClassId, GroupId, Scene};
use crate::error::{Error, Result};
use crate::gbdt::softmax;
use crate::gmm::{class_posteriors, GmmFeatureBank};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetFeatureItem {
    pub other_group: GroupId,
    /// `area(other) / area(candidate)`
    pub area_ratio: f64,
    pub own_r: f64,
    /// Posterior over the candidate group's classes given this context box.
    pub posteriors: Vec<f64>,
}

impl SetFeatureItem {
    fn input(&self) -> Vec<f64> {
        [self.area_ratio, self.own_r].into_iter().chain(self.posteriors.iter().copied()).collect()
    }
}

/// One item per other box in the scene, in scene order.
pub fn assemble_set_features(scene: &Scene, candidate_index: usize, bank: &GmmFeatureBank) -> Result<Vec<SetFeatureItem>> {
    let f = extract_candidate_features(scene, candidate_index)?;
    let g = &scene.boxes[candidate_index].group_id;
    f.context
        .into_iter()
        .map(|c| {
            let posteriors = class_posteriors(bank, g, &c.group_id, [f.r, c.area_ratio])?;
            Ok(SetFeatureItem { other_group: c.group_id, area_ratio: c.area_ratio, own_r: f.r, posteriors })
        })
        .collect()
}

/// Affine map stored row-major: `w[o * n_in + i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DenseRepr", into = "DenseRepr")]
pub struct Dense {
    n_in: usize,
    n_out: usize,
    w: Vec<f64>,
    b: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct DenseRepr {
    weights: Vec<Vec<f64>>,
    bias: Vec<f64>,
}

impl TryFrom<DenseRepr> for Dense {
    type Error = Error;

    fn try_from(r: DenseRepr) -> Result<Self> {
        let n_out = r.weights.len();
        let n_in = r.weights.first().map_or(0, Vec::len);
        if n_out == 0 || n_in == 0 || r.bias.len() != n_out || r.weights.iter().any(|row| row.len() != n_in) {
            return Err(Error::Data("dense layer has inconsistent shape".into()));
        }
        let w: Vec<f64> = r.weights.into_iter().flatten().collect();
        if w.iter().chain(&r.bias).any(|v| !v.is_finite()) {
            return Err(Error::Data("dense layer has non-finite weights".into()));
        }
        Ok(Dense { n_in, n_out, w, b: r.bias })
    }
}

impl From<Dense> for DenseRepr {
    fn from(d: Dense) -> Self {
        DenseRepr { weights: d.w.chunks(d.n_in).map(<[f64]>::to_vec).collect(), bias: d.b }
    }
}

impl Dense {
    pub fn zeros(n_in: usize, n_out: usize) -> Self {
        Self { n_in, n_out, w: vec![0.0; n_in * n_out], b: vec![0.0; n_out] }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn glorot(n_in: usize, n_out: usize, rng: &mut ChaCha8Rng) -> Self {
        let a = Self::glorot_bound(n_in, n_out);
        let w = (0..n_in * n_out).map(|_| rng.random_range(-a..=a)).collect();
        Self { n_in, n_out, w, b: vec![0.0; n_out] }
    }

    pub fn glorot_bound(n_in: usize, n_out: usize) -> f64 {
        (6.0 / (n_in + n_out) as f64).sqrt()
    }

    pub fn n_in(&self) -> usize {
        self.n_in
    }

    pub fn n_out(&self) -> usize {
        self.n_out
    }

    pub fn weights(&self) -> &[f64] {
        &self.w
    }

    pub fn bias(&self) -> &[f64] {
        &self.b
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.w
    }

    pub fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.b
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n_out)
            .map(|o| {
                let row = &self.w[o * self.n_in..(o + 1) * self.n_in];
                self.b[o] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
            })
            .collect()
    }

    fn zeros_like(&self) -> Self {
        Self::zeros(self.n_in, self.n_out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetNetModel {
    pub target_group: GroupId,
    pub class_order: Vec<ClassId>,
    pub hidden: usize,
    pub encoders: BTreeMap<GroupId, Dense>,
    pub fallback: Dense,
    pub output: Dense,
}

/// Which encoders items are routed through.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Route {
    /// Per-group encoder when present, fallback otherwise.
    PerGroup,
    /// Every item through the fallback encoder.
    Fallback,
}

impl SetNetModel {
    pub fn n_classes(&self) -> usize {
        self.class_order.len()
    }

    pub fn input_dim(&self) -> usize {
        2 + self.n_classes()
    }

    fn encoder(&self, g: &GroupId, route: Route) -> &Dense {
        match route {
            Route::PerGroup => self.encoders.get(g).unwrap_or(&self.fallback),
            Route::Fallback => &self.fallback,
        }
    }

    /// Every layer in a fixed order: encoders by key, fallback, output.
    pub fn layers(&self) -> Vec<&Dense> {
        self.encoders.values().chain([&self.fallback, &self.output]).collect()
    }

    pub fn layers_mut(&mut self) -> Vec<&mut Dense> {
        self.encoders.values_mut().chain([&mut self.fallback, &mut self.output]).collect()
    }

    fn zeros_like(&self) -> Self {
        Self {
            target_group: self.target_group.clone(),
            class_order: self.class_order.clone(),
            hidden: self.hidden,
            encoders: self.encoders.iter().map(|(k, d)| (k.clone(), d.zeros_like())).collect(),
            fallback: self.fallback.zeros_like(),
            output: self.output.zeros_like(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.input_dim();
        for e in self.encoders.values().chain([&self.fallback]) {
            if e.n_in != d || e.n_out != self.hidden {
                return Err(Error::Data("encoder shape does not match the model".into()));
            }
        }
        if self.output.n_in != self.hidden || self.output.n_out != self.n_classes() {
            return Err(Error::Data("output layer shape does not match the model".into()));
        }
        Ok(())
    }

    fn check_items(&self, items: &[SetFeatureItem]) -> Result<()> {
        match items.iter().find(|it| it.posteriors.len() != self.n_classes()) {
            Some(it) => Err(Error::LengthMismatch { expected: self.n_classes(), got: it.posteriors.len() }),
            None => Ok(()),
        }
    }
}

pub fn init_setnet(catalog: &Catalog, target_group: &GroupId, hidden: usize, seed: u64) -> Result<SetNetModel> {
    let group = catalog.require_group(target_group)?;
    if hidden < 1 {
        return Err(Error::Config("hidden size must be >= 1".into()));
    }
    let n_classes = group.n_variants();
    let d = 2 + n_classes;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let encoders = catalog.group_ids().into_iter().map(|g| (g, Dense::glorot(d, hidden, &mut rng))).collect();
    let fallback = Dense::glorot(d, hidden, &mut rng);
    let output = Dense::glorot(hidden, n_classes, &mut rng);
    Ok(SetNetModel {
        target_group: target_group.clone(),
        class_order: group.class_ids(),
        hidden,
        encoders,
        fallback,
        output,
    })
}

fn item_cmp(a: &SetFeatureItem, b: &SetFeatureItem) -> std::cmp::Ordering {
    a.other_group
        .cmp(&b.other_group)
        .then(a.area_ratio.total_cmp(&b.area_ratio))
        .then(a.own_r.total_cmp(&b.own_r))
        .then_with(|| {
            a.posteriors.iter().zip(&b.posteriors).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal)
        })
}

struct Activations {
    hidden: Vec<Vec<f64>>,
    pooled: Vec<f64>,
    probs: Vec<f64>,
}

fn forward_acts(model: &SetNetModel, items: &[SetFeatureItem], route: Route) -> Activations {
    let hidden: Vec<Vec<f64>> = items
        .iter()
        .map(|it| {
            let mut h = model.encoder(&it.other_group, route).apply(&it.input());
            h.iter_mut().for_each(|v| *v = v.tanh());
            h
        })
        .collect();
    // Summing in a canonical order keeps pooling exactly order-independent.
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.sort_by(|&a, &b| item_cmp(&items[a], &items[b]));
    let mut pooled = vec![0.0; model.hidden];
    if !hidden.is_empty() {
        for h in order.iter().map(|&i| &hidden[i]) {
            for (p, v) in pooled.iter_mut().zip(h) {
                *p += v;
            }
        }
        let n = hidden.len() as f64;
        pooled.iter_mut().for_each(|p| *p /= n);
    }
    let probs = softmax(&model.output.apply(&pooled));
    Activations { hidden, pooled, probs }
}

/// Class probabilities in `model.class_order`. An empty item list pools to
/// the zero vector.
pub fn forward(model: &SetNetModel, items: &[SetFeatureItem]) -> Result<Vec<f64>> {
    model.check_items(items)?;
    Ok(forward_acts(model, items, Route::PerGroup).probs)
}

pub fn forward_routed(model: &SetNetModel, items: &[SetFeatureItem], route: Route) -> Result<Vec<f64>> {
    model.check_items(items)?;
    Ok(forward_acts(model, items, route).probs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSet {
    pub items: Vec<SetFeatureItem>,
    /// Index into the model's `class_order`.
    pub label: usize,
}

/// Cross-entropy of one example; adds `weight * dL/dθ` into `grads`.
/// With `freeze_output` the output layer gradient is not accumulated.
fn backprop(
    model: &SetNetModel,
    ex: &LabeledSet,
    route: Route,
    weight: f64,
    grads: &mut SetNetModel,
    freeze_output: bool,
) -> f64 {
    let acts = forward_acts(model, &ex.items, route);
    let loss = -acts.probs[ex.label].max(f64::MIN_POSITIVE).ln();
    let k = model.n_classes();
    let h = model.hidden;
    let dz: Vec<f64> = (0..k).map(|c| weight * (acts.probs[c] - f64::from(u8::from(c == ex.label)))).collect();
    if !freeze_output {
        for c in 0..k {
            grads.output.b[c] += dz[c];
            for j in 0..h {
                grads.output.w[c * h + j] += dz[c] * acts.pooled[j];
            }
        }
    }
    if ex.items.is_empty() {
        return loss;
    }
    let n = ex.items.len() as f64;
    let dpooled: Vec<f64> = (0..h).map(|j| (0..k).map(|c| model.output.w[c * h + j] * dz[c]).sum::<f64>() / n).collect();
    for (it, hid) in ex.items.iter().zip(&acts.hidden) {
        let input = it.input();
        let enc = match route {
            Route::PerGroup if model.encoders.contains_key(&it.other_group) => {
                grads.encoders.get_mut(&it.other_group).expect("same shape")
            }
            _ => &mut grads.fallback,
        };
        let d_in = enc.n_in;
        for j in 0..h {
            let da = dpooled[j] * (1.0 - hid[j] * hid[j]);
            if da == 0.0 {
                continue;
            }
            enc.b[j] += da;
            for (w, x) in enc.w[j * d_in..(j + 1) * d_in].iter_mut().zip(&input) {
                *w += da * x;
            }
        }
    }
    loss
}

/// Mean cross-entropy plus `l2 / 2 * Σ w²` over weight matrices, and its
/// gradient with respect to every parameter.
pub fn loss_and_grad(model: &SetNetModel, batch: &[LabeledSet], l2: f64, route: Route) -> (f64, SetNetModel) {
    batch_loss_and_grad(model, batch.iter(), l2, route)
}

fn batch_loss_and_grad<'a>(
    model: &SetNetModel,
    batch: impl ExactSizeIterator<Item = &'a LabeledSet>,
    l2: f64,
    route: Route,
) -> (f64, SetNetModel) {
    let mut grads = model.zeros_like();
    let w = 1.0 / batch.len().max(1) as f64;
    let mut loss = 0.0;
    for ex in batch {
        loss += w * backprop(model, ex, route, w, &mut grads, route == Route::Fallback);
    }
    if l2 > 0.0 {
        for (layer, g) in model.layers().into_iter().zip(grads.layers_mut()) {
            for (wv, gv) in layer.w.iter().zip(g.w.iter_mut()) {
                loss += 0.5 * l2 * wv * wv;
                *gv += l2 * wv;
            }
        }
    }
    (loss, grads)
}

/// The training objective without gradients.
pub fn objective(model: &SetNetModel, data: &[LabeledSet], l2: f64, route: Route) -> f64 {
    let ce: f64 = data
        .iter()
        .map(|ex| -forward_acts(model, &ex.items, route).probs[ex.label].max(f64::MIN_POSITIVE).ln())
        .sum::<f64>()
        / data.len().max(1) as f64;
    let penalty: f64 = model.layers().iter().flat_map(|l| &l.w).map(|w| 0.5 * l2 * w * w).sum();
    ce + penalty
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SetNetParams {
    pub hidden: usize,
    pub epochs: usize,
    pub lr: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub l2: f64,
}

impl Default for SetNetParams {
    fn default() -> Self {
        Self { hidden: 32, epochs: 300, lr: 0.01, momentum: 0.9, batch_size: 32, seed: 0, l2: 1e-4 }
    }
}

impl SetNetParams {
    pub fn validate(&self) -> Result<()> {
        if self.hidden < 1 || self.batch_size < 1 {
            return Err(Error::Config("setnet hidden and batch_size must be >= 1".into()));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) || !(0.0..1.0).contains(&self.momentum) || !(self.l2 >= 0.0) {
            return Err(Error::Config("setnet needs lr >= 0, momentum in [0, 1), l2 >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SetNetHistory {
    /// Full-data objective after each epoch of the main phase.
    pub loss: Vec<f64>,
    /// Same for the fallback-encoder phase.
    pub fallback_loss: Vec<f64>,
}

/// Training data flattened for the inner loop: item inputs row-major, the
/// layer each item routes to, and per-example item ranges.
struct Packed {
    d: usize,
    x: Vec<f64>,
    layer: Vec<usize>,
    start: Vec<usize>,
    label: Vec<usize>,
}

impl Packed {
    fn new(model: &SetNetModel, data: &[LabeledSet], route: Route) -> Self {
        let fallback = model.encoders.len();
        let index: BTreeMap<&GroupId, usize> = model.encoders.keys().enumerate().map(|(i, k)| (k, i)).collect();
        let mut pk = Packed { d: model.input_dim(), x: Vec::new(), layer: Vec::new(), start: Vec::new(), label: Vec::new() };
        for ex in data {
            pk.start.push(pk.layer.len());
            for it in &ex.items {
                pk.layer.push(match route {
                    Route::PerGroup => index.get(&it.other_group).copied().unwrap_or(fallback),
                    Route::Fallback => fallback,
                });
                pk.x.extend(it.input());
            }
            pk.label.push(ex.label);
        }
        pk.start.push(pk.layer.len());
        pk
    }

    fn len(&self) -> usize {
        self.label.len()
    }
}

#[derive(Default)]
struct Scratch {
    h: Vec<f64>,
    pooled: Vec<f64>,
    p: Vec<f64>,
    dpooled: Vec<f64>,
}

/// Same computation as `backprop` on packed data; `layers` ends with the
/// fallback and output layers.
fn packed_step(
    layers: &[Dense],
    pk: &Packed,
    i: usize,
    weight: f64,
    grads: &mut [Dense],
    freeze_output: bool,
    s: &mut Scratch,
) -> f64 {
    let out = layers.last().expect("output layer");
    let (hd, k, d) = (out.n_in, out.n_out, pk.d);
    let items = pk.start[i]..pk.start[i + 1];
    let n = items.len();
    s.h.clear();
    s.h.resize(n * hd, 0.0);
    s.pooled.clear();
    s.pooled.resize(hd, 0.0);
    for (t, item) in items.clone().enumerate() {
        let enc = &layers[pk.layer[item]];
        let x = &pk.x[item * d..(item + 1) * d];
        for j in 0..hd {
            let row = &enc.w[j * d..(j + 1) * d];
            let v = (enc.b[j] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()).tanh();
            s.h[t * hd + j] = v;
            s.pooled[j] += v;
        }
    }
    if n > 0 {
        s.pooled.iter_mut().for_each(|p| *p /= n as f64);
    }
    s.p.clear();
    s.p.extend((0..k).map(|c| out.b[c] + out.w[c * hd..(c + 1) * hd].iter().zip(&s.pooled).map(|(w, v)| w * v).sum::<f64>()));
    let m = s.p.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    s.p.iter_mut().for_each(|z| *z = (*z - m).exp());
    let total: f64 = s.p.iter().sum();
    s.p.iter_mut().for_each(|z| *z /= total);
    let label = pk.label[i];
    let loss = -s.p[label].max(f64::MIN_POSITIVE).ln();

    // s.p becomes dL/dz scaled by the example weight.
    s.p[label] -= 1.0;
    s.p.iter_mut().for_each(|v| *v *= weight);
    if !freeze_output {
        let g = grads.last_mut().expect("output layer");
        for c in 0..k {
            g.b[c] += s.p[c];
            for (gw, v) in g.w[c * hd..(c + 1) * hd].iter_mut().zip(&s.pooled) {
                *gw += s.p[c] * v;
            }
        }
    }
    if n == 0 {
        return loss;
    }
    s.dpooled.clear();
    s.dpooled.extend((0..hd).map(|j| (0..k).map(|c| out.w[c * hd + j] * s.p[c]).sum::<f64>() / n as f64));
    for (t, item) in items.enumerate() {
        let g = &mut grads[pk.layer[item]];
        let x = &pk.x[item * d..(item + 1) * d];
        for j in 0..hd {
            let h = s.h[t * hd + j];
            let da = s.dpooled[j] * (1.0 - h * h);
            g.b[j] += da;
            for (gw, v) in g.w[j * d..(j + 1) * d].iter_mut().zip(x) {
                *gw += da * v;
            }
        }
    }
    loss
}

/// Runs `params.epochs` epochs over `layers` (encoders, fallback, output).
/// The main phase updates everything but the fallback; the fallback phase
/// updates only the fallback. Returns the mean mini-batch objective of each
/// epoch, measured before each update.
fn sgd_epochs(layers: &mut [Dense], pk: &Packed, params: &SetNetParams, route: Route, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let fallback = layers.len() - 2;
    let trainable = |li: usize| (li == fallback) == (route == Route::Fallback);
    let mut grads: Vec<Dense> = layers.iter().map(Dense::zeros_like).collect();
    let mut velocity = grads.clone();
    let mut scratch = Scratch::default();
    let mut order: Vec<usize> = (0..pk.len()).collect();
    let mut history = Vec::with_capacity(params.epochs);
    for _ in 0..params.epochs {
        order.shuffle(rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(params.batch_size.max(1)) {
            grads.iter_mut().for_each(|g| {
                g.w.fill(0.0);
                g.b.fill(0.0);
            });
            let w = 1.0 / chunk.len() as f64;
            let mut loss = 0.0;
            for &i in chunk {
                loss += w * packed_step(layers, pk, i, w, &mut grads, route == Route::Fallback, &mut scratch);
            }
            for (layer, g) in layers.iter().zip(grads.iter_mut()) {
                for (wv, gv) in layer.w.iter().zip(g.w.iter_mut()) {
                    loss += 0.5 * params.l2 * wv * wv;
                    *gv += params.l2 * wv;
                }
            }
            epoch_loss += loss * chunk.len() as f64;
            for (li, ((layer, vel), g)) in layers.iter_mut().zip(velocity.iter_mut()).zip(&grads).enumerate() {
                if !trainable(li) {
                    continue;
                }
                for ((p, v), gv) in layer.w.iter_mut().zip(vel.w.iter_mut()).zip(&g.w) {
                    *v = params.momentum * *v - params.lr * gv;
                    *p += *v;
                }
                for ((p, v), gv) in layer.b.iter_mut().zip(vel.b.iter_mut()).zip(&g.b) {
                    *v = params.momentum * *v - params.lr * gv;
                    *p += *v;
                }
            }
        }
        history.push(epoch_loss / pk.len() as f64);
    }
    history
}

fn take_layers(model: &mut SetNetModel) -> Vec<Dense> {
    let mut layers: Vec<Dense> = std::mem::take(&mut model.encoders).into_values().collect();
    layers.push(model.fallback.clone());
    layers.push(model.output.clone());
    layers
}

fn put_layers(model: &mut SetNetModel, keys: Vec<GroupId>, mut layers: Vec<Dense>) {
    model.output = layers.pop().expect("output layer");
    model.fallback = layers.pop().expect("fallback layer");
    model.encoders = keys.into_iter().zip(layers).collect();
}

/// Mini-batch SGD with momentum on mean cross-entropy plus L2.
///
/// The per-group encoders and output layer are trained first. Encoders for
/// context groups that never appear in `data` are then dropped, and the
/// fallback encoder is trained with all items routed through it while the
/// output layer stays fixed.
pub fn train_setnet(
    mut model: SetNetModel,
    data: &[LabeledSet],
    params: &SetNetParams,
) -> Result<(SetNetModel, SetNetHistory)> {
    if data.is_empty() {
        return Err(Error::Empty("setnet training data"));
    }
    model.validate()?;
    params.validate()?;
    for ex in data {
        if ex.label >= model.n_classes() {
            return Err(Error::Data(format!("label {} out of range for {} classes", ex.label, model.n_classes())));
        }
        model.check_items(&ex.items)?;
    }
    let seen: BTreeSet<&GroupId> = data.iter().flat_map(|ex| ex.items.iter().map(|it| &it.other_group)).collect();
    model.encoders.retain(|g, _| seen.contains(g));

    let main = Packed::new(&model, data, Route::PerGroup);
    let fb = Packed::new(&model, data, Route::Fallback);
    let keys: Vec<GroupId> = model.encoders.keys().cloned().collect();
    let mut layers = take_layers(&mut model);
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let loss = sgd_epochs(&mut layers, &main, params, Route::PerGroup, &mut rng);
    let fallback_loss =
        if seen.is_empty() { Vec::new() } else { sgd_epochs(&mut layers, &fb, params, Route::Fallback, &mut rng) };
    put_layers(&mut model, keys, layers);
    if model.layers().iter().any(|l| l.w.iter().chain(&l.b).any(|v| !v.is_finite())) {
        return Err(Error::Data("training diverged to non-finite weights".into()));
    }
    Ok((model, SetNetHistory { loss, fallback_loss }))
}

/// Largest relative error `|g_a - g_n| / max(1e-12, |g_a| + |g_n|)` between
/// backpropagated and central finite-difference gradients of one example's
/// cross-entropy, over every weight and bias.
pub fn grad_check(model: &SetNetModel, example: &LabeledSet, epsilon: f64) -> f64 {
    let batch = std::slice::from_ref(example);
    let (_, analytic) = loss_and_grad(model, batch, 0.0, Route::PerGroup);
    let mut probe = model.clone();
    let mut worst: f64 = 0.0;
    let n_layers = probe.layers().len();
    for li in 0..n_layers {
        let (n_w, n_b) = {
            let l = probe.layers()[li];
            (l.w.len(), l.b.len())
        };
        for (is_bias, n) in [(false, n_w), (true, n_b)] {
            for i in 0..n {
                let mut eval = |delta: f64| {
                    let mut layers = probe.layers_mut();
                    let slot = if is_bias { &mut layers[li].b[i] } else { &mut layers[li].w[i] };
                    let orig = *slot;
                    *slot = orig + delta;
                    let l = loss_and_grad(&probe, batch, 0.0, Route::PerGroup).0;
                    let mut layers = probe.layers_mut();
                    let slot = if is_bias { &mut layers[li].b[i] } else { &mut layers[li].w[i] };
                    *slot = orig;
                    l
                };
                let numeric = (eval(epsilon) - eval(-epsilon)) / (2.0 * epsilon);
                let a = {
                    let l = analytic.layers()[li];
                    if is_bias { l.b[i] } else { l.w[i] }
                };
                let rel = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-12);
                worst = worst.max(rel);
            }
        }
    }
    worst
}
