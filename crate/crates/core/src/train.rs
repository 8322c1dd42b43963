//! Adam optimization and the training loops: alternating CycleGAN updates,
//! classifier training, and the pre-train + fine-tune schedule.
//!
//! Per CycleGAN step: D_R and D_T update on the least-squares discriminator
//! loss with generated samples treated as constants, then G and F update
//! jointly on both adversarial terms plus the weighted cycle loss in a single
//! backward pass. No image-history buffer is kept.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{DomainPair, LabeledSet};
use crate::error::{Error, Result};
use crate::ganloss::{cycle_loss, lsgan_d_loss, lsgan_g_loss, BatchScores, CycleBatch, LossWeights};
use crate::nets::{CycleGanModel, Mode, Network};
use crate::rng::stage_rng;
use crate::tensor::{Gradients, Tape, Tensor, Value};

/// Per-parameter Adam state with bias-corrected moments.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub lr: f64,
}

impl AdamState {
    pub fn new(len: usize, lr: f64) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
            beta1: 0.5,
            beta2: 0.999,
            eps: 1e-8,
            lr,
        }
    }
}

/// One bias-corrected Adam update; `t` increments by exactly 1.
pub fn adam_step(param: &mut Value, grad: &Value, state: &mut AdamState, name: &str) -> Result<()> {
    adam_step_slice(param, grad.data(), state, name)
}

fn adam_step_slice(
    param: &mut Value,
    grad: &[f64],
    state: &mut AdamState,
    name: &str,
) -> Result<()> {
    if param.numel() != grad.len() || param.numel() != state.m.len() {
        return Err(Error::dimension(format!(
            "adam_step: parameter {name} has {} elements, gradient {}, state {}",
            param.numel(),
            grad.len(),
            state.m.len()
        )));
    }
    if !grad.iter().all(|v| v.is_finite()) {
        return Err(Error::Training {
            step: state.t + 1,
            detail: format!("non-finite gradient for parameter {name}"),
        });
    }
    state.t += 1;
    let bc1 = 1.0 - state.beta1.powi(state.t as i32);
    let bc2 = 1.0 - state.beta2.powi(state.t as i32);
    for ((p, g), (m, v)) in param
        .data_mut()
        .iter_mut()
        .zip(grad)
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        *m = state.beta1 * *m + (1.0 - state.beta1) * g;
        *v = state.beta2 * *v + (1.0 - state.beta2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *p -= state.lr * m_hat / (v_hat.sqrt() + state.eps);
    }
    Ok(())
}

/// Adam over every parameter tensor of one network.
#[derive(Debug, Clone)]
pub struct Adam {
    states: Vec<AdamState>,
}

impl Adam {
    pub fn for_network(net: &Network, lr: f64) -> Self {
        Self {
            states: net
                .params()
                .iter()
                .map(|p| AdamState::new(p.value.numel(), lr))
                .collect(),
        }
    }

    /// Apply the gradients accumulated on `leaves` to the network parameters.
    pub fn step(&mut self, net: &mut Network, grads: &Gradients, leaves: &[Tensor]) -> Result<()> {
        for ((param, leaf), state) in net
            .params_mut()
            .iter_mut()
            .zip(leaves)
            .zip(self.states.iter_mut())
        {
            match grads.get_reached(leaf) {
                Some(g) => adam_step_slice(&mut param.value, g, state, &param.name)?,
                None => {
                    let zeros = vec![0.0; param.value.numel()];
                    adam_step_slice(&mut param.value, &zeros, state, &param.name)?;
                }
            }
        }
        Ok(())
    }
}

/// Step counts, batch size, learning rates and seed for a training run.
/// Defaults are the reference values: batch 32, 20k steps, classifier lr
/// 1e-3, CycleGAN lrs 2e-4 (generators) and 1e-4 (discriminators), λ = 10.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub lr_g: f64,
    pub lr_d: f64,
    pub lr_classifier: f64,
    pub lambda_cyc: f64,
    pub seed: u64,
    pub log_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 20_000,
            batch_size: 32,
            lr_g: 2e-4,
            lr_d: 1e-4,
            lr_classifier: 1e-3,
            lambda_cyc: 10.0,
            seed: 0,
            log_every: 100,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be >= 1"));
        }
        if self.log_every == 0 {
            return Err(Error::config("log_every must be >= 1"));
        }
        for (name, v) in [
            ("lr_g", self.lr_g),
            ("lr_d", self.lr_d),
            ("lr_classifier", self.lr_classifier),
            ("lambda_cyc", self.lambda_cyc),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::config(format!("{name} must be finite and >= 0")));
            }
        }
        Ok(())
    }
}

/// Logged loss values at selected steps. All recorded values are finite;
/// training aborts on NaN before anything is logged.
#[derive(Debug, Clone)]
pub struct LossCurve {
    pub columns: Vec<String>,
    pub steps: Vec<u64>,
    pub rows: Vec<Vec<f64>>,
}

impl LossCurve {
    pub fn new(columns: &[&str]) -> Self {
        Self {
            columns: columns.iter().map(|s| s.to_string()).collect(),
            steps: Vec::new(),
            rows: Vec::new(),
        }
    }

    fn push(&mut self, step: u64, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        debug_assert!(row.iter().all(|v| v.is_finite()));
        self.steps.push(step);
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let idx = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[idx]).collect())
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// CSV export, header `step,<columns>`.
    pub fn to_csv(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        use std::io::Write;
        let path = path.as_ref();
        let file =
            std::fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let mut w = std::io::BufWriter::new(file);
        let mut out = || -> std::io::Result<()> {
            writeln!(w, "step,{}", self.columns.join(","))?;
            for (step, row) in self.steps.iter().zip(&self.rows) {
                write!(w, "{step}")?;
                for v in row {
                    write!(w, ",{v}")?;
                }
                writeln!(w)?;
            }
            w.flush()
        };
        out().map_err(|e| Error::io(path.display().to_string(), e))
    }
}

fn should_log(step: usize, total: usize, every: usize) -> bool {
    step == 1 || step == total || step.is_multiple_of(every)
}

fn sample_rows<R: rand::Rng>(rng: &mut R, pool: &Value, batch: usize) -> Value {
    let n = pool.shape()[0];
    let d: usize = pool.shape()[1..].iter().product();
    let mut data = Vec::with_capacity(batch * d);
    for _ in 0..batch {
        let i = rng.random_range(0..n);
        data.extend_from_slice(&pool.data()[i * d..(i + 1) * d]);
    }
    Value::new(vec![batch, d], data).expect("batch rows")
}

/// Reshape flat rows (n, d) to the network's batched input shape.
fn rows_to_input(tape: &Tape, rows: &Value, input_shape: &[usize]) -> Result<Tensor> {
    let n = rows.shape()[0];
    let d: usize = rows.shape()[1..].iter().product();
    let per_sample: usize = input_shape.iter().product();
    if d != per_sample {
        return Err(Error::dimension(format!(
            "rows of {d} values cannot feed input shape {input_shape:?}"
        )));
    }
    let mut shape = vec![n];
    shape.extend_from_slice(input_shape);
    tape.constant(rows.clone()).reshape(&shape)
}

struct StepLosses {
    d_r: f64,
    d_t: f64,
    g_adv: f64,
    f_adv: f64,
    cyc: f64,
}

struct CycleGanOptimizers {
    g: Adam,
    f: Adam,
    d_r: Adam,
    d_t: Adam,
}

/// One alternating step on a single tape. G and F run forward once; their
/// outputs are detached into constants for the discriminator updates, so no
/// gradient from the D losses can reach generator parameters. The generator
/// objective is then scored against the freshly updated discriminators.
fn cyclegan_step(
    model: &mut CycleGanModel,
    opt: &mut CycleGanOptimizers,
    r_rows: &Value,
    t_rows: &Value,
    weights: &LossWeights,
) -> Result<StepLosses> {
    let tape = Tape::new();
    let gen_shape = model.g.spec().input_shape.clone();
    let disc_shape = model.d_r.spec().input_shape.clone();

    let r_in = rows_to_input(&tape, r_rows, &gen_shape)?;
    let t_in = rows_to_input(&tape, t_rows, &gen_shape)?;
    let g_leaves = model.g.make_leaves(&tape, true);
    let f_leaves = model.f.make_leaves(&tape, true);

    let fake_t = model.g.forward_with(&tape, &r_in, Mode::Train, &g_leaves)?;
    let rec_r = model.f.forward_with(&tape, &fake_t, Mode::Train, &f_leaves)?;
    let fake_r = model.f.forward_with(&tape, &t_in, Mode::Train, &f_leaves)?;
    let rec_t = model.g.forward_with(&tape, &fake_r, Mode::Train, &g_leaves)?;

    let (d_r, d_t) = d_updates(
        model,
        opt,
        &tape,
        r_rows,
        t_rows,
        &fake_r.detach(),
        &fake_t.detach(),
    )?;

    // adversarial scores against the updated, frozen discriminators
    let reshape_for_d = |x: &Tensor| -> Result<Tensor> {
        let mut shape = vec![x.shape()[0]];
        shape.extend_from_slice(&disc_shape);
        x.reshape(&shape)
    };
    let d_t_leaves = model.d_t.make_leaves(&tape, false);
    let d_r_leaves = model.d_r.make_leaves(&tape, false);
    let fake_t_scores = {
        let x = reshape_for_d(&fake_t)?;
        model.d_t.forward_with(&tape, &x, Mode::Train, &d_t_leaves)?
    };
    let fake_r_scores = {
        let x = reshape_for_d(&fake_r)?;
        model.d_r.forward_with(&tape, &x, Mode::Train, &d_r_leaves)?
    };

    let g_adv = lsgan_g_loss(&fake_t_scores);
    let f_adv = lsgan_g_loss(&fake_r_scores);
    let cyc = cycle_loss(&CycleBatch {
        originals_r: r_in.clone(),
        reconstructed_r: rec_r,
        originals_t: t_in.clone(),
        reconstructed_t: rec_t,
    })?;
    let gen_loss = g_adv
        .add(&f_adv)?
        .add(&cyc.mul_scalar(weights.lambda_cyc))?;
    let grads = gen_loss.backward()?;
    opt.g.step(&mut model.g, &grads, &g_leaves)?;
    opt.f.step(&mut model.f, &grads, &f_leaves)?;

    Ok(StepLosses {
        d_r,
        d_t,
        g_adv: g_adv.item()?,
        f_adv: f_adv.item()?,
        cyc: cyc.item()?,
    })
}

/// Update D_R then D_T on real batches against constant generated samples.
fn d_updates(
    model: &mut CycleGanModel,
    opt: &mut CycleGanOptimizers,
    tape: &Tape,
    r_rows: &Value,
    t_rows: &Value,
    fake_r_const: &Tensor,
    fake_t_const: &Tensor,
) -> Result<(f64, f64)> {
    let disc_shape = model.d_r.spec().input_shape.clone();
    let reshape_for_d = |x: &Tensor| -> Result<Tensor> {
        let mut shape = vec![x.shape()[0]];
        shape.extend_from_slice(&disc_shape);
        x.reshape(&shape)
    };

    let r_real_in = rows_to_input(tape, r_rows, &disc_shape)?;
    let (real_r_scores, d_r_leaves) = model.d_r.forward(tape, &r_real_in, Mode::Train, true)?;
    let fake_r_scores = {
        let x = reshape_for_d(fake_r_const)?;
        model.d_r.forward_with(tape, &x, Mode::Train, &d_r_leaves)?
    };
    let loss_d_r = lsgan_d_loss(&BatchScores {
        real_scores: real_r_scores,
        fake_scores: fake_r_scores,
    })?;
    let grads = loss_d_r.backward()?;
    opt.d_r.step(&mut model.d_r, &grads, &d_r_leaves)?;

    let t_real_in = rows_to_input(tape, t_rows, &disc_shape)?;
    let (real_t_scores, d_t_leaves) = model.d_t.forward(tape, &t_real_in, Mode::Train, true)?;
    let fake_t_scores = {
        let x = reshape_for_d(fake_t_const)?;
        model.d_t.forward_with(tape, &x, Mode::Train, &d_t_leaves)?
    };
    let loss_d_t = lsgan_d_loss(&BatchScores {
        real_scores: real_t_scores,
        fake_scores: fake_t_scores,
    })?;
    let grads = loss_d_t.backward()?;
    opt.d_t.step(&mut model.d_t, &grads, &d_t_leaves)?;

    Ok((loss_d_r.item()?, loss_d_t.item()?))
}

/// Alternating CycleGAN optimization over unpaired domains.
///
/// Per step: sample one minibatch from each domain, update D_R and D_T, then
/// update G and F jointly. Losses are logged at step 1, every `log_every`
/// steps and at the final step. Deterministic per `(seed, config, data)`.
pub fn train_cyclegan(
    model: &mut CycleGanModel,
    domains: &DomainPair,
    config: &TrainConfig,
) -> Result<LossCurve> {
    config.validate()?;
    let mut rng = stage_rng(config.seed, "cyclegan");
    let weights = LossWeights {
        lambda_cyc: config.lambda_cyc,
    };
    let mut opt = CycleGanOptimizers {
        g: Adam::for_network(&model.g, config.lr_g),
        f: Adam::for_network(&model.f, config.lr_g),
        d_r: Adam::for_network(&model.d_r, config.lr_d),
        d_t: Adam::for_network(&model.d_t, config.lr_d),
    };
    let mut curve = LossCurve::new(&["d_r", "d_t", "g_adv", "f_adv", "cyc", "total"]);

    for step in 1..=config.steps {
        let r_rows = sample_rows(&mut rng, &domains.reference, config.batch_size);
        let t_rows = sample_rows(&mut rng, &domains.target, config.batch_size);

        let losses = cyclegan_step(model, &mut opt, &r_rows, &t_rows, &weights)?;
        let vals = [losses.d_r, losses.d_t, losses.g_adv, losses.f_adv, losses.cyc];
        if vals.iter().any(|v| v.is_nan()) {
            let last = curve
                .rows
                .last()
                .map(|r| format!("last finite losses {r:?}"))
                .unwrap_or_else(|| "no finite losses logged".to_string());
            return Err(Error::Training {
                step: step as u64,
                detail: format!(
                    "NaN loss (d_r={} d_t={} g_adv={} f_adv={} cyc={}); {last}",
                    losses.d_r, losses.d_t, losses.g_adv, losses.f_adv, losses.cyc
                ),
            });
        }
        if should_log(step, config.steps, config.log_every) {
            // total is the combined objective: L_R + L_T + λ·L_cyc
            let total = losses.d_r + losses.d_t + config.lambda_cyc * losses.cyc;
            curve.push(
                step as u64,
                vec![losses.d_r, losses.d_t, losses.g_adv, losses.f_adv, losses.cyc, total],
            );
        }
    }
    Ok(curve)
}

/// Translate `count` reference rows through G (evaluation mode) and attach
/// the target-class label. With `allow_reuse`, rows wrap around when `count`
/// exceeds the pool.
pub fn generate_augmented(
    model: &mut CycleGanModel,
    reference: &Value,
    count: usize,
    label: usize,
    num_classes: usize,
    allow_reuse: bool,
) -> Result<LabeledSet> {
    let n = reference.shape()[0];
    let d: usize = reference.shape()[1..].iter().product();
    if label >= num_classes {
        return Err(Error::data(format!(
            "target label {label} out of range 0..{num_classes}"
        )));
    }
    if count == 0 {
        return Ok(LabeledSet::empty(d, num_classes));
    }
    if count > n && !allow_reuse {
        return Err(Error::parameter(format!(
            "requested {count} samples from a pool of {n} without reuse"
        )));
    }
    let gen_shape = model.g.spec().input_shape.clone();
    let mut features = Vec::with_capacity(count * d);
    let chunk = 64usize;
    let mut produced = 0usize;
    while produced < count {
        let take = chunk.min(count - produced);
        let mut rows = Vec::with_capacity(take * d);
        for j in 0..take {
            let i = (produced + j) % n;
            rows.extend_from_slice(&reference.data()[i * d..(i + 1) * d]);
        }
        let rows = Value::new(vec![take, d], rows)?;
        let tape = Tape::new();
        let input = rows_to_input(&tape, &rows, &gen_shape)?;
        let (out, _) = model.g.forward(&tape, &input, Mode::Eval, false)?;
        features.extend_from_slice(out.data());
        produced += take;
    }
    LabeledSet::new(features, d, vec![label; count], num_classes)
}

/// Softmax cross-entropy training with Adam and seed-deterministic shuffled
/// minibatches.
pub fn train_classifier(
    net: &mut Network,
    data: &LabeledSet,
    config: &TrainConfig,
) -> Result<LossCurve> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::data("cannot train a classifier on an empty set"));
    }
    let classes = net.spec().output_shape[0];
    if let Some(bad) = data.labels().iter().find(|&&l| l >= classes) {
        return Err(Error::data(format!(
            "label {bad} out of range for a {classes}-way classifier"
        )));
    }
    let input_shape = net.spec().input_shape.clone();
    let mut rng = stage_rng(config.seed, "classifier");
    let mut opt = Adam::for_network(net, config.lr_classifier);
    let mut curve = LossCurve::new(&["loss"]);

    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut cursor = data.len(); // force shuffle on first use
    for step in 1..=config.steps {
        let mut batch_idx = Vec::with_capacity(config.batch_size);
        for _ in 0..config.batch_size {
            if cursor >= order.len() {
                for i in 0..order.len().saturating_sub(1) {
                    let j = rng.random_range(i..order.len());
                    order.swap(i, j);
                }
                cursor = 0;
            }
            batch_idx.push(order[cursor]);
            cursor += 1;
        }
        let batch = data.select(&batch_idx);
        let rows = batch.to_matrix()?;
        let tape = Tape::new();
        let input = rows_to_input(&tape, &rows, &input_shape)?;
        let (logits, leaves) = net.forward(&tape, &input, Mode::Train, true)?;
        let loss = logits.softmax_cross_entropy(batch.labels())?;
        let loss_val = loss.item()?;
        if loss_val.is_nan() {
            return Err(Error::Training {
                step: step as u64,
                detail: "NaN classifier loss".to_string(),
            });
        }
        let grads = loss.backward()?;
        opt.step(net, &grads, &leaves)?;
        if should_log(step, config.steps, config.log_every) {
            curve.push(step as u64, vec![loss_val]);
        }
    }
    Ok(curve)
}

/// Argmax class predictions in evaluation mode, chunked over the set.
pub fn predict_classes(net: &mut Network, data: &LabeledSet) -> Result<Vec<usize>> {
    let input_shape = net.spec().input_shape.clone();
    let classes = net.spec().output_shape[0];
    let mut out = Vec::with_capacity(data.len());
    let chunk = 128usize;
    let mut done = 0usize;
    while done < data.len() {
        let take = chunk.min(data.len() - done);
        let idx: Vec<usize> = (done..done + take).collect();
        let rows = data.select(&idx).to_matrix()?;
        let tape = Tape::new();
        let input = rows_to_input(&tape, &rows, &input_shape)?;
        let (logits, _) = net.forward(&tape, &input, Mode::Eval, false)?;
        for row in logits.data().chunks_exact(classes) {
            let mut best = 0usize;
            for (j, v) in row.iter().enumerate() {
                if *v > row[best] {
                    best = j;
                }
            }
            out.push(best);
        }
        done += take;
    }
    Ok(out)
}

/// Stage lengths for the pre-train + fine-tune schedule; both default to 10k
/// steps.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PretrainSchedule {
    pub pretrain_steps: usize,
    pub finetune_steps: usize,
}

impl Default for PretrainSchedule {
    fn default() -> Self {
        Self {
            pretrain_steps: 10_000,
            finetune_steps: 10_000,
        }
    }
}

/// Train on generated data first, then continue from those parameters on the
/// original data. Stage 1 with zero steps degenerates to plain training.
pub fn pretrain_finetune(
    net: &mut Network,
    generated: &LabeledSet,
    original: &LabeledSet,
    config: &TrainConfig,
    schedule: PretrainSchedule,
) -> Result<(LossCurve, LossCurve)> {
    if generated.dim() != original.dim() || generated.num_classes() != original.num_classes() {
        return Err(Error::data(format!(
            "stage shapes differ: generated dim {} / {} classes vs original dim {} / {} classes",
            generated.dim(),
            generated.num_classes(),
            original.dim(),
            original.num_classes()
        )));
    }
    let pre_curve = if schedule.pretrain_steps > 0 {
        let cfg = TrainConfig {
            steps: schedule.pretrain_steps,
            seed: crate::rng::stage_seed(config.seed, "pretrain"),
            ..config.clone()
        };
        train_classifier(net, generated, &cfg)?
    } else {
        LossCurve::new(&["loss"])
    };
    let fine_cfg = TrainConfig {
        steps: schedule.finetune_steps,
        seed: crate::rng::stage_seed(config.seed, "finetune"),
        ..config.clone()
    };
    let fine_curve = train_classifier(net, original, &fine_cfg)?;
    Ok((pre_curve, fine_curve))
}

/// Mean discriminator score gap E[D_T(t)] − E[D_T(G(r))] over the full
/// domain pools, evaluation mode.
pub fn score_gap(model: &mut CycleGanModel, domains: &DomainPair) -> Result<f64> {
    let gen_shape = model.g.spec().input_shape.clone();
    let disc_shape = model.d_r.spec().input_shape.clone();
    let tape = Tape::new();
    let t_in = rows_to_input(&tape, &domains.target, &disc_shape)?;
    let (real_scores, _) = model.d_t.forward(&tape, &t_in, Mode::Eval, false)?;
    let r_in = rows_to_input(&tape, &domains.reference, &gen_shape)?;
    let (fake, _) = model.g.forward(&tape, &r_in, Mode::Eval, false)?;
    let mut shape = vec![fake.shape()[0]];
    shape.extend_from_slice(&disc_shape);
    let fake_in = fake.reshape(&shape)?;
    let (fake_scores, _) = model.d_t.forward(&tape, &fake_in, Mode::Eval, false)?;
    let mean = |t: &Tensor| t.data().iter().sum::<f64>() / t.numel() as f64;
    Ok(mean(&real_scores) - mean(&fake_scores))
}
