use super::td::td_error;
use super::{check_transition, guard, Agent, Algorithm, Result, TraceState, SVD_DROP_TOL};
use crate::envs::Transition;
use crate::linalg::{self, TruncatedSvd};

/// ATD with a rank-`k` incremental SVD of `Σ e dᵀ` as preconditioner:
/// `w ← w + V Σ† Uᵀ (δe) + η δ e`.
#[derive(Debug, Clone)]
pub struct AtdSvd {
    svd: TruncatedSvd,
    w: Vec<f64>,
    trace: TraceState,
    eta: f64,
    steps: usize,
}

impl AtdSvd {
    pub fn new(d: usize, eta: f64, lambda: f64, k: usize) -> Self {
        Self {
            svd: TruncatedSvd::empty(d, d, k),
            w: vec![0.0; d],
            trace: TraceState::new(d, lambda),
            eta,
            steps: 0,
        }
    }

    pub fn svd(&self) -> &TruncatedSvd {
        &self.svd
    }
}

impl Agent for AtdSvd {
    fn algorithm(&self) -> Algorithm {
        Algorithm::AtdSvd
    }

    fn dim(&self) -> usize {
        self.w.len()
    }

    fn observe(&mut self, tr: &Transition) -> Result<()> {
        check_transition(self.dim(), tr)?;
        let delta = td_error(&self.w, tr);
        self.trace.update(tr);
        let e = &self.trace.trace;
        if self.svd.max_rank > 0 {
            let d = tr.x.sub_scaled(tr.gamma_next, &tr.x_next).to_dense();
            self.svd = linalg::rank1_svd_update(&self.svd, e, &d, SVD_DROP_TOL)?;
            if delta != 0.0 && self.svd.rank() > 0 {
                let rhs: Vec<f64> = e.iter().map(|v| delta * v).collect();
                let step = self.svd.pinv_apply(&rhs, SVD_DROP_TOL)?;
                linalg::axpy(1.0, &step, &mut self.w);
            }
        }
        linalg::axpy(self.eta * delta, &self.trace.trace, &mut self.w);
        self.steps += 1;
        guard(&self.w, self.steps)
    }

    fn weights(&self) -> Result<Vec<f64>> {
        Ok(self.w.clone())
    }
}
