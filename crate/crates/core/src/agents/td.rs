use super::{check_transition, guard, Agent, Algorithm, Result, TraceState};
use crate::envs::Transition;
use crate::linalg;

/// Linear TD(λ): `w ← w + α δ e`.
#[derive(Debug, Clone)]
pub struct Td {
    w: Vec<f64>,
    trace: TraceState,
    alpha: f64,
    steps: usize,
}

impl Td {
    pub fn new(d: usize, alpha: f64, lambda: f64) -> Self {
        Self {
            w: vec![0.0; d],
            trace: TraceState::new(d, lambda),
            alpha,
            steps: 0,
        }
    }

    pub fn trace(&self) -> &[f64] {
        &self.trace.trace
    }
}

/// `R + γ' wᵀx' − wᵀx`.
pub(crate) fn td_error(w: &[f64], tr: &Transition) -> f64 {
    let next = if tr.gamma_next == 0.0 {
        0.0
    } else {
        tr.gamma_next * tr.x_next.dot(w)
    };
    tr.reward + next - tr.x.dot(w)
}

impl Agent for Td {
    fn algorithm(&self) -> Algorithm {
        Algorithm::Td
    }

    fn dim(&self) -> usize {
        self.w.len()
    }

    fn observe(&mut self, tr: &Transition) -> Result<()> {
        check_transition(self.w.len(), tr)?;
        let delta = td_error(&self.w, tr);
        self.trace.update(tr);
        linalg::axpy(self.alpha * delta, &self.trace.trace, &mut self.w);
        self.steps += 1;
        guard(&self.w, self.steps)
    }

    fn weights(&self) -> Result<Vec<f64>> {
        Ok(self.w.clone())
    }
}
