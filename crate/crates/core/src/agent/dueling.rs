use rand::Rng;

use super::AgentError;
use crate::neural::{DenseNet, NeuralError};
use crate::Scalar;

/// `Q_a = V + A_a − mean(A)` from a raw head laid out as `[V, A_1, …, A_n]`.
pub fn dueling_q<S: Scalar>(raw: &[S]) -> Vec<S> {
    let (v, a) = (raw[0], &raw[1..]);
    let mean = a.iter().copied().sum::<S>() / S::of(a.len() as f64);
    a.iter().map(|&x| v + x - mean).collect()
}

/// Gradient with respect to the raw head given the gradient with respect to Q.
pub fn dueling_backward<S: Scalar>(q_grad: &[S]) -> Vec<S> {
    let total = q_grad.iter().copied().sum::<S>();
    let mean = total / S::of(q_grad.len() as f64);
    std::iter::once(total).chain(q_grad.iter().map(|&g| g - mean)).collect()
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax<S: Scalar>(values: &[S]) -> Option<usize> {
    let mut best: Option<(usize, S)> = None;
    for (i, &v) in values.iter().enumerate() {
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((i, v));
        }
    }
    best.map(|(i, _)| i)
}

/// ε-greedy choice: uniform with probability `epsilon`, greedy otherwise.
pub fn select_action<S: Scalar, R: Rng + ?Sized>(q: &[S], epsilon: f64, rng: &mut R) -> Result<usize, AgentError> {
    if q.is_empty() {
        return Err(AgentError::EmptyActionSet);
    }
    if epsilon > 0.0 && rng.random::<f64>() < epsilon {
        return Ok(rng.random_range(0..q.len()));
    }
    Ok(argmax(q).expect("non-empty"))
}

/// Online network plus its soft-updated target copy.
#[derive(Clone, Debug, PartialEq)]
pub struct DuelingQNet<S: Scalar> {
    pub online: DenseNet<S>,
    pub target: DenseNet<S>,
}

impl<S: Scalar> DuelingQNet<S> {
    pub fn new<R: Rng + ?Sized>(
        input: usize,
        hidden: &[usize],
        actions: usize,
        dropout: f64,
        rng: &mut R,
    ) -> Result<Self, NeuralError> {
        let dims: Vec<usize> = std::iter::once(input).chain(hidden.iter().copied()).chain([actions + 1]).collect();
        let online = DenseNet::new(&dims, dropout, rng)?;
        Ok(DuelingQNet { target: online.clone(), online })
    }

    pub fn action_count(&self) -> usize {
        self.online.output_dim() - 1
    }

    /// Online Q-values with dropout disabled.
    pub fn q_values(&self, state: &[S]) -> Result<Vec<S>, NeuralError> {
        Ok(dueling_q(&self.online.predict(state)?))
    }

    pub fn target_q_values(&self, state: &[S]) -> Result<Vec<S>, NeuralError> {
        Ok(dueling_q(&self.target.predict(state)?))
    }

    pub fn soft_update_target(&mut self, tau: S) -> Result<(), NeuralError> {
        self.target.soft_update_from(&self.online, tau)
    }
}
