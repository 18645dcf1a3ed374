//! Full-batch gradient descent on the mean half-squared error
//! `L = (1/n) sum_i (f(x_i) - y_i)^2 / 2`, with small-variance Gaussian
//! initialization and a stop-at-tolerance rule. No momentum, schedules or
//! minibatching: the recovery experiments depend on plain GD dynamics.

use crate::error::{invalid, Result};
use crate::eval::{forward, grad_param_into};
use crate::model::{ModelSpec, ParamVectorT};
use crate::rank::DatasetT;
use crate::rng::Rng;
use crate::scalar::Scalar;

/// Loss above which a run is declared divergent.
pub const DIVERGENCE_LOSS: f64 = 1e12;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfigT<S> {
    /// Standard deviation of the Gaussian initialization.
    pub init_std: S,
    pub lr: S,
    /// Stop once the training loss falls below this.
    pub train_tol: S,
    pub max_steps: usize,
    pub seed: u64,
}

impl<S: Scalar> TrainConfigT<S> {
    pub fn validate(&self) -> Result<()> {
        if !(self.init_std >= S::zero()) {
            return Err(invalid("init_std must be >= 0"));
        }
        if !(self.lr > S::zero()) {
            return Err(invalid("lr must be > 0"));
        }
        if !(self.train_tol > S::zero()) {
            return Err(invalid("train_tol must be > 0"));
        }
        if self.max_steps == 0 {
            return Err(invalid("max_steps must be >= 1"));
        }
        Ok(())
    }
}

impl<S: Scalar> Default for TrainConfigT<S> {
    /// The matrix-completion recipe: sigma^2 = 1e-8, lr = 0.05, stop at
    /// loss < 1e-9.
    fn default() -> Self {
        TrainConfigT {
            init_std: S::of(1e-4),
            lr: S::of(0.05),
            train_tol: S::of(1e-9),
            max_steps: 10_000_000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainResultT<S> {
    pub theta_final: ParamVectorT<S>,
    /// Gradient updates applied.
    pub steps_used: usize,
    pub final_train_loss: S,
    /// True exactly when `final_train_loss < train_tol`.
    pub converged: bool,
    /// Loss exceeded `DIVERGENCE_LOSS` or went non-finite.
    pub diverged: bool,
    /// Loss at every `history_stride`-th step, ending with the final loss.
    pub loss_history: Vec<S>,
    pub history_stride: usize,
}

/// I.i.d. `N(0, init_std^2)` parameters; deterministic in the seed.
pub fn init_params<S: Scalar>(spec: &ModelSpec, init_std: S, seed: u64) -> ParamVectorT<S> {
    let mut rng = Rng::new(seed);
    ParamVectorT::from_raw(
        (0..spec.param_count())
            .map(|_| init_std * S::of(rng.standard_normal()))
            .collect(),
    )
}

/// Mean half-squared error over the dataset.
pub fn training_loss<S: Scalar>(
    spec: &ModelSpec,
    theta: &ParamVectorT<S>,
    data: &DatasetT<S>,
) -> Result<S> {
    let mut acc = S::zero();
    for (x, &y) in data.inputs().iter().zip(data.labels()) {
        let r = forward(spec, theta, x)? - y;
        acc += r * r;
    }
    Ok(acc / (S::of(2.0) * S::of(data.len() as f64)))
}

/// Plain mean squared error; the test metric.
pub fn test_error<S: Scalar>(
    spec: &ModelSpec,
    theta: &ParamVectorT<S>,
    test_data: &DatasetT<S>,
) -> Result<S> {
    let mut acc = S::zero();
    for (x, &y) in test_data.inputs().iter().zip(test_data.labels()) {
        let r = forward(spec, theta, x)? - y;
        acc += r * r;
    }
    Ok(acc / S::of(test_data.len() as f64))
}

/// Iterate `theta <- theta - lr * grad L(theta)` until the loss drops below
/// `train_tol`, diverges, or `max_steps` updates have been applied.
pub fn train<S: Scalar>(
    spec: &ModelSpec,
    theta0: &ParamVectorT<S>,
    data: &DatasetT<S>,
    cfg: &TrainConfigT<S>,
) -> Result<TrainResultT<S>> {
    cfg.validate()?;
    if theta0.len() != spec.param_count() {
        return Err(invalid("train: parameter length mismatch"));
    }
    let n = data.len();
    let inv_n = S::one() / S::of(n as f64);
    let stride = (cfg.max_steps / 10_000).max(1);
    let divergence = S::of(DIVERGENCE_LOSS);

    let mut theta = theta0.clone();
    let mut grad = vec![S::zero(); theta.len()];
    let mut point_grad = vec![S::zero(); theta.len()];
    let mut history = Vec::new();
    let mut diverged = false;
    let mut steps_used = 0;
    let mut loss;

    loop {
        // loss and full-batch gradient at the current point
        grad.fill(S::zero());
        let mut acc = S::zero();
        for (x, &y) in data.inputs().iter().zip(data.labels()) {
            let r = forward(spec, &theta, x)? - y;
            acc += r * r;
            grad_param_into(spec, &theta, x, &mut point_grad)?;
            let w = r * inv_n;
            for (gi, pi) in grad.iter_mut().zip(&point_grad) {
                *gi += w * *pi;
            }
        }
        loss = acc * inv_n / S::of(2.0);

        if steps_used % stride == 0 {
            history.push(loss);
        }
        if !loss.is_finite() || loss > divergence {
            diverged = true;
            break;
        }
        if loss < cfg.train_tol || steps_used == cfg.max_steps {
            break;
        }
        for (t, g) in theta.as_mut_slice().iter_mut().zip(&grad) {
            *t -= cfg.lr * *g;
        }
        steps_used += 1;
    }

    if history.last() != Some(&loss) {
        history.push(loss);
    }
    let converged = loss.is_finite() && loss < cfg.train_tol;
    Ok(TrainResultT {
        theta_final: theta,
        steps_used,
        final_train_loss: loss,
        converged,
        diverged,
        loss_history: history,
        history_stride: stride,
    })
}
