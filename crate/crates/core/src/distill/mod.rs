//! Embedding-space distillation: a student (identity or small MLP) followed
//! by a batch-normalized projection head is trained so that its output
//! matches teacher embeddings under the log-sum loss.

mod early_stop;
mod head;
mod loss;
mod optim;
mod schedule;
mod student;

pub use early_stop::{EarlyStop, StopSignal, ViolationCount};
pub use head::{DistillHead, HeadCache, HeadGrads, Mode};
pub use loss::{logsum_loss, logsum_loss_grad, logsum_loss_with_grad};
pub use optim::{adamw_step, AdamHyper, AdamState, ParamGroup};
pub use schedule::cosine_schedule;
pub use student::{gelu, gelu_grad, Dense, StudentArch, StudentCache, StudentGrads, StudentModel};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::embedstore::{align_pairs, AlignedPairs, EmbeddingSet};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

/// Number of passes over the pair set used when `total_steps` is unset.
pub const DEFAULT_EPOCHS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DistillConfig {
    pub alpha: f64,
    pub eps_loss: f64,
    pub batch_size: usize,
    pub lr_start: f64,
    pub lr_end: f64,
    pub wd_start: f64,
    pub wd_end: f64,
    /// Schedule length; `None` means [`DEFAULT_EPOCHS`] passes over the pairs.
    pub total_steps: Option<usize>,
    pub beta1: f64,
    pub beta2: f64,
    pub eps_adam: f64,
    pub window: usize,
    pub max_violations: usize,
    pub violation_count: ViolationCount,
    pub bn_momentum: f64,
    pub bn_eps: f64,
    pub seed: u64,
    pub student_arch: StudentArch,
}

impl Default for DistillConfig {
    fn default() -> Self {
        Self {
            alpha: 4.0,
            eps_loss: 1e-12,
            batch_size: 32,
            lr_start: 1e-4,
            lr_end: 1e-6,
            wd_start: 0.05,
            wd_end: 0.5,
            total_steps: None,
            beta1: 0.9,
            beta2: 0.999,
            eps_adam: 1e-8,
            window: 100,
            max_violations: 10,
            violation_count: ViolationCount::Cumulative,
            bn_momentum: 0.1,
            bn_eps: 1e-5,
            seed: 0,
            student_arch: StudentArch::Identity,
        }
    }
}

impl DistillConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Invalid(m.into()));
        if !(self.alpha > 0.0) {
            return bad("alpha must be > 0");
        }
        if !(self.eps_loss > 0.0) {
            return bad("eps_loss must be > 0");
        }
        if !(0.0 < self.lr_end && self.lr_end <= self.lr_start) {
            return bad("learning rates must satisfy 0 < lr_end <= lr_start");
        }
        if !(0.0 <= self.wd_start && self.wd_start <= self.wd_end) {
            return bad("weight decay must satisfy 0 <= wd_start <= wd_end");
        }
        if self.window < 1 {
            return bad("window must be >= 1");
        }
        if self.batch_size < 2 {
            return bad("batch_size must be >= 2");
        }
        if self.total_steps == Some(0) {
            return bad("total_steps must be >= 1");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("Adam betas must lie in [0, 1)");
        }
        if !(self.eps_adam > 0.0 && self.bn_eps >= 0.0) {
            return bad("eps_adam must be > 0 and bn_eps >= 0");
        }
        if !(0.0..=1.0).contains(&self.bn_momentum) {
            return bad("bn_momentum must lie in [0, 1]");
        }
        if let StudentArch::Mlp { hidden } = &self.student_arch {
            if hidden.contains(&0) {
                return bad("MLP hidden widths must be >= 1");
            }
        }
        Ok(())
    }

    fn adam(&self) -> AdamHyper {
        AdamHyper {
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps_adam,
        }
    }
}

/// Trainable parameters of the whole chain, student then head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistillModel<T> {
    pub student: StudentModel<T>,
    pub head: DistillHead<T>,
}

impl<T: Scalar> DistillModel<T> {
    pub fn init(arch: &StudentArch, d_in: usize, d_t: usize, rng: &mut ChaCha8Rng) -> Self {
        let head = DistillHead::init(d_in, d_t, rng);
        let student = StudentModel::init(arch, d_in, rng);
        Self { student, head }
    }

    /// Inference: student forward, then the head with running statistics.
    pub fn project(&self, x: &Matrix<T>) -> Result<Matrix<T>> {
        let (f, _) = self.student.forward(x)?;
        let mut head = self.head.clone();
        Ok(head.forward(&f, Mode::Eval)?.0)
    }

    /// Train-mode loss on one batch, with gradients for every parameter.
    ///
    /// Running statistics of the head are updated as a side effect.
    pub fn loss_and_grads(
        &mut self,
        x: &Matrix<T>,
        target: &Matrix<T>,
        alpha: T,
        eps_loss: T,
    ) -> Result<(T, ModelGrads<T>)> {
        let (f, scache) = self.student.forward(x)?;
        let (out, hcache) = self.head.forward(&f, Mode::Train)?;
        let residual = out.sub(target)?;
        let (loss, d_out) = logsum_loss_with_grad(&residual, alpha, eps_loss)?;
        let head = self.head.backward(&hcache, &d_out)?;
        let student = self.student.backward(&scache, &head.input)?;
        Ok((loss, ModelGrads { student, head }))
    }

    fn param_groups<'a>(&'a mut self, g: &'a ModelGrads<T>) -> Vec<ParamGroup<'a, T>> {
        let mut groups = vec![
            ParamGroup {
                values: self.head.projection.as_mut_slice(),
                grads: g.head.projection.as_slice(),
                decay: true,
            },
            ParamGroup {
                values: &mut self.head.bn_gamma,
                grads: &g.head.gamma,
                decay: true,
            },
            ParamGroup {
                values: &mut self.head.bn_beta,
                grads: &g.head.beta,
                decay: true,
            },
        ];
        if let StudentModel::Mlp { layers } = &mut self.student {
            for (l, (dw, db)) in layers.iter_mut().zip(&g.student.layers) {
                groups.push(ParamGroup {
                    values: l.weight.as_mut_slice(),
                    grads: dw.as_slice(),
                    decay: true,
                });
                groups.push(ParamGroup {
                    values: &mut l.bias,
                    grads: db,
                    decay: false,
                });
            }
        }
        groups
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelGrads<T> {
    pub student: StudentGrads<T>,
    pub head: HeadGrads<T>,
}

/// Mutable training state carried across steps.
#[derive(Debug, Clone)]
pub struct TrainState<T> {
    pub step: usize,
    pub adam: AdamState<T>,
    pub early_stop: EarlyStop,
    pub rng: ChaCha8Rng,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub step: usize,
    pub loss: f64,
    pub lr: f64,
    pub wd: f64,
    pub violations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    EarlyStop,
    TotalSteps,
}

#[derive(Debug, Clone)]
pub struct DistillOutcome<T> {
    pub model: DistillModel<T>,
    pub trace: Vec<TraceRecord>,
    pub steps_run: usize,
    pub total_steps: usize,
    pub stop_reason: StopReason,
}

/// Aligns `student` and `teacher` by sample id and trains on the matched rows.
pub fn distill_fit<T: Scalar>(
    student: &EmbeddingSet,
    teacher: &EmbeddingSet,
    config: &DistillConfig,
) -> Result<(DistillOutcome<T>, AlignedPairs)> {
    let pairs = align_pairs(student, teacher)?;
    let zs = student.rows_matrix(&pairs.student_rows());
    let zt = teacher.rows_matrix(&pairs.teacher_rows());
    Ok((distill_fit_matrices(&zs, &zt, config)?, pairs))
}

/// Steps in one pass: full batches plus a final short batch of at least 2 rows.
pub fn batches_per_epoch(n: usize, batch_size: usize) -> usize {
    n / batch_size + usize::from(n % batch_size >= 2)
}

/// Training loop on row-aligned student and teacher matrices.
///
/// Each step draws the next mini-batch of a seeded per-epoch shuffle, runs
/// the forward and backward passes, feeds the loss to the early-stop rule
/// and, unless that rule fires, applies one AdamW update with the scheduled
/// learning rate and weight decay.
pub fn distill_fit_matrices<T: Scalar>(
    zs: &Matrix<T>,
    zt: &Matrix<T>,
    config: &DistillConfig,
) -> Result<DistillOutcome<T>> {
    config.validate()?;
    if zs.rows() != zt.rows() {
        return Err(Error::Shape(format!(
            "{} student rows vs {} teacher rows",
            zs.rows(),
            zt.rows()
        )));
    }
    let n = zs.rows();
    if n < 2 {
        return Err(Error::Invalid(format!(
            "distillation needs at least 2 aligned pairs, got {n}"
        )));
    }
    zs.ensure_finite()?;
    zt.ensure_finite()?;
    let total_steps = config
        .total_steps
        .unwrap_or(DEFAULT_EPOCHS * batches_per_epoch(n, config.batch_size));

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = DistillModel::<T>::init(&config.student_arch, zs.cols(), zt.cols(), &mut rng);
    model.head.bn_momentum = T::of(config.bn_momentum);
    model.head.bn_eps = T::of(config.bn_eps);
    let mut state = TrainState {
        step: 0,
        adam: AdamState::default(),
        early_stop: EarlyStop::new(config.window, config.max_violations, config.violation_count),
        rng,
    };
    let alpha = T::of(config.alpha);
    let eps_loss = T::of(config.eps_loss);
    let hyper = config.adam();

    let mut trace = Vec::new();
    let mut order: Vec<usize> = (0..n).collect();
    let mut stop_reason = StopReason::TotalSteps;
    'epochs: while state.step < total_steps {
        order.shuffle(&mut state.rng);
        for batch in order.chunks(config.batch_size) {
            if batch.len() < 2 {
                continue;
            }
            if state.step >= total_steps {
                break 'epochs;
            }
            let t = state.step;
            state.step += 1;
            let lr = cosine_schedule(t, total_steps, config.lr_start, config.lr_end);
            let wd = cosine_schedule(t, total_steps, config.wd_start, config.wd_end);

            let xb = zs.select_rows(batch);
            let tb = zt.select_rows(batch);
            let (loss, grads) = model.loss_and_grads(&xb, &tb, alpha, eps_loss)?;
            let loss = loss.to_f64_lossy();
            let signal = state.early_stop.update(loss)?;
            trace.push(TraceRecord {
                step: t,
                loss,
                lr,
                wd,
                violations: state.early_stop.violations(),
            });
            if signal == StopSignal::Stop {
                stop_reason = StopReason::EarlyStop;
                break 'epochs;
            }
            let mut groups = model.param_groups(&grads);
            adamw_step(&mut groups, &mut state.adam, &hyper, T::of(lr), T::of(wd)).map_err(
                |e| match e {
                    Error::Numerical(m) => Error::Numerical(format!("training step {}: {m}", state.step)),
                    e => e,
                },
            )?;
        }
    }
    Ok(DistillOutcome {
        model,
        steps_run: state.step,
        total_steps,
        stop_reason,
        trace,
    })
}
