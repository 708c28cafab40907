use super::td::td_error;
use super::{check_transition, guard, Agent, Algorithm, Result, TraceState, DEGENERATE_TOL};
use crate::envs::Transition;
use crate::linalg::{self, DenseMatrix, LinalgError};
use crate::sketch::SketchMatrix;

/// Left-sketched system `Ã = S A`, `b̃ = S b` together with
/// `M = (ρI + ÃÃᵀ)⁻¹`, `ρ = 1/ξ`, all maintained in `O(dk)` per sample.
///
/// `Ã` is stored transposed (`d × k`) so that sparse difference vectors
/// touch only `nnz(d)` rows.
#[derive(Debug, Clone)]
pub struct SketchedSystem {
    sketch: SketchMatrix,
    at: DenseMatrix,
    btil: Vec<f64>,
    gram_inv: DenseMatrix,
    ridge: f64,
    trace: TraceState,
    rebuilds: usize,
}

impl SketchedSystem {
    pub fn new(sketch: SketchMatrix, xi: f64, lambda: f64) -> Self {
        let (k, d) = (sketch.k(), sketch.d());
        Self {
            sketch,
            at: DenseMatrix::zeros(d, k),
            btil: vec![0.0; k],
            gram_inv: DenseMatrix::scaled_identity(k, xi),
            ridge: 1.0 / xi,
            trace: TraceState::new(k, lambda),
            rebuilds: 0,
        }
    }

    pub fn k(&self) -> usize {
        self.sketch.k()
    }

    pub fn d(&self) -> usize {
        self.sketch.d()
    }

    pub fn sketch(&self) -> &SketchMatrix {
        &self.sketch
    }

    /// `Ã` as a `k × d` matrix (copy).
    pub fn atil(&self) -> DenseMatrix {
        self.at.transpose()
    }

    pub fn btil(&self) -> &[f64] {
        &self.btil
    }

    pub fn gram_inv(&self) -> &DenseMatrix {
        &self.gram_inv
    }

    pub fn ridge(&self) -> f64 {
        self.ridge
    }

    /// Sketched trace `ẽ = S e`.
    pub fn e_tilde(&self) -> &[f64] {
        &self.trace.trace
    }

    pub fn rebuilds(&self) -> usize {
        self.rebuilds
    }

    /// Folds one transition into `Ã`, `b̃` and the Gram inverse.
    pub fn observe(&mut self, tr: &Transition) -> Result<()> {
        let sx = self.sketch.apply(&tr.x)?;
        self.trace.update_with(tr, &sx);
        let e = &self.trace.trace;
        let diff = tr.x.sub_scaled(tr.gamma_next, &tr.x_next);
        let k = self.k();

        // h = Ã d, before Ã changes.
        let mut h = vec![0.0; k];
        let mut d_norm2 = 0.0;
        diff.for_each_nonzero(|j, dj| {
            linalg::axpy(dj, self.at.row(j), &mut h);
            d_norm2 += dj * dj;
        });
        diff.for_each_nonzero(|j, dj| linalg::axpy(dj, e, self.at.row_mut(j)));
        linalg::axpy(tr.reward, e, &mut self.btil);

        // ÃÃᵀ gains ẽhᵀ + hẽᵀ + ‖d‖²ẽẽᵀ; the PSD term goes first.
        let mut next = self.gram_inv.clone();
        let scaled_e: Vec<f64> = e.iter().map(|v| d_norm2 * v).collect();
        let updated = linalg::sherman_morrison_in_place(&mut next, &scaled_e, e, DEGENERATE_TOL)
            .and_then(|_| linalg::sherman_morrison_in_place(&mut next, e, &h, DEGENERATE_TOL))
            .and_then(|_| linalg::sherman_morrison_in_place(&mut next, &h, e, DEGENERATE_TOL));
        match updated {
            Ok(()) => {
                next.symmetrize();
                self.gram_inv = next;
            }
            Err(LinalgError::DegenerateUpdate { denominator }) => {
                log::debug!(
                    "gram inverse rebuilt after degenerate update (denominator {denominator:e})"
                );
                self.rebuild()?;
            }
            Err(e) => return Err(e.into()),
        }
        Ok(())
    }

    /// `ρI + ÃÃᵀ`, formed directly in `O(dk²)`.
    pub fn gram(&self) -> DenseMatrix {
        let k = self.k();
        let mut g = DenseMatrix::scaled_identity(k, self.ridge);
        for j in 0..self.d() {
            let row = self.at.row(j);
            if row.iter().any(|v| *v != 0.0) {
                g.add_outer(1.0, row, row);
            }
        }
        g
    }

    /// Replaces the maintained inverse by a direct inversion.
    pub fn rebuild(&mut self) -> Result<()> {
        let mut inv = linalg::invert(&self.gram())?;
        inv.symmetrize();
        self.gram_inv = inv;
        self.rebuilds += 1;
        Ok(())
    }

    /// `Ãᵀ M v` for a `k`-vector `v`.
    pub fn precondition(&self, v: &[f64]) -> Vec<f64> {
        let y = self.gram_inv.matvec(v).expect("k-vector");
        self.at.matvec(&y).expect("k-vector")
    }

    /// Minimum-norm (ridge `ρ`) solution `Ãᵀ M b̃`.
    pub fn min_norm_weights(&self) -> Vec<f64> {
        self.precondition(&self.btil)
    }
}

/// LSTD with left-sketched constraints: `w = Ãᵀ(ÃÃᵀ + ρI)⁻¹ b̃`.
#[derive(Debug, Clone)]
pub struct LstdL {
    sys: SketchedSystem,
}

impl LstdL {
    pub fn new(sketch: SketchMatrix, xi: f64, lambda: f64) -> Self {
        Self {
            sys: SketchedSystem::new(sketch, xi, lambda),
        }
    }

    pub fn system(&self) -> &SketchedSystem {
        &self.sys
    }
}

impl Agent for LstdL {
    fn algorithm(&self) -> Algorithm {
        Algorithm::LstdL
    }

    fn dim(&self) -> usize {
        self.sys.d()
    }

    fn observe(&mut self, tr: &Transition) -> Result<()> {
        check_transition(self.dim(), tr)?;
        self.sys.observe(tr)
    }

    fn weights(&self) -> Result<Vec<f64>> {
        Ok(self.sys.min_norm_weights())
    }

    fn numerical_events(&self) -> usize {
        self.sys.rebuilds
    }
}

/// ATD with the left-sketched preconditioner:
/// `w ← w + Ãᵀ M S(δe) + η δ e`.
#[derive(Debug, Clone)]
pub struct AtdL {
    sys: SketchedSystem,
    w: Vec<f64>,
    trace: TraceState,
    eta: f64,
    precondition: bool,
    steps: usize,
}

impl AtdL {
    pub fn new(sketch: SketchMatrix, eta: f64, xi: f64, lambda: f64, precondition: bool) -> Self {
        let d = sketch.d();
        Self {
            sys: SketchedSystem::new(sketch, xi, lambda),
            w: vec![0.0; d],
            trace: TraceState::new(d, lambda),
            eta,
            precondition,
            steps: 0,
        }
    }

    pub fn system(&self) -> &SketchedSystem {
        &self.sys
    }
}

impl Agent for AtdL {
    fn algorithm(&self) -> Algorithm {
        Algorithm::AtdL
    }

    fn dim(&self) -> usize {
        self.w.len()
    }

    fn observe(&mut self, tr: &Transition) -> Result<()> {
        check_transition(self.dim(), tr)?;
        let delta = td_error(&self.w, tr);
        self.trace.update(tr);
        if self.precondition {
            self.sys.observe(tr)?;
            let rhs: Vec<f64> = self.sys.e_tilde().iter().map(|v| delta * v).collect();
            let step = self.sys.precondition(&rhs);
            linalg::axpy(1.0, &step, &mut self.w);
        }
        linalg::axpy(self.eta * delta, &self.trace.trace, &mut self.w);
        self.steps += 1;
        guard(&self.w, self.steps)
    }

    fn weights(&self) -> Result<Vec<f64>> {
        Ok(self.w.clone())
    }

    fn numerical_events(&self) -> usize {
        self.sys.rebuilds
    }
}
