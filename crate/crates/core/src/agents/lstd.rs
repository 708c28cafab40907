use super::{check_dim, check_transition, Agent, Algorithm, Result, TraceState, DEGENERATE_TOL};
use crate::envs::Transition;
use crate::features::FeatureVector;
use crate::linalg::{self, DenseMatrix, LinalgError};
use crate::sketch::SketchMatrix;

/// Running inverse of `ξ⁻¹I + Σ u vᵀ` and the reward vector `Σ R u`.
#[derive(Debug, Clone)]
struct InverseSystem {
    inv: DenseMatrix,
    b: Vec<f64>,
    skipped: usize,
}

impl InverseSystem {
    fn new(n: usize, xi: f64) -> Self {
        Self {
            inv: DenseMatrix::scaled_identity(n, xi),
            b: vec![0.0; n],
            skipped: 0,
        }
    }

    /// A degenerate update drops the whole sample: rebuilding would need the
    /// un-inverted system, which is never stored.
    fn add(&mut self, u: &[f64], v: &[f64], reward: f64) -> Result<()> {
        match linalg::sherman_morrison_in_place(&mut self.inv, u, v, DEGENERATE_TOL) {
            Ok(()) => {
                linalg::axpy(reward, u, &mut self.b);
                Ok(())
            }
            Err(LinalgError::DegenerateUpdate { denominator }) => {
                self.skipped += 1;
                log::debug!("skipped degenerate rank-one update (denominator {denominator:e})");
                Ok(())
            }
            Err(e) => Err(e.into()),
        }
    }

    fn solve(&self) -> Vec<f64> {
        self.inv.matvec(&self.b).expect("square system")
    }
}

/// LSTD(λ) with a Sherman-Morrison maintained `d × d` inverse.
#[derive(Debug, Clone)]
pub struct Lstd {
    sys: InverseSystem,
    trace: TraceState,
}

impl Lstd {
    pub fn new(d: usize, xi: f64, lambda: f64) -> Self {
        Self {
            sys: InverseSystem::new(d, xi),
            trace: TraceState::new(d, lambda),
        }
    }

    pub fn inverse(&self) -> &DenseMatrix {
        &self.sys.inv
    }

    pub fn b(&self) -> &[f64] {
        &self.sys.b
    }
}

impl Agent for Lstd {
    fn algorithm(&self) -> Algorithm {
        Algorithm::Lstd
    }

    fn dim(&self) -> usize {
        self.sys.b.len()
    }

    fn observe(&mut self, tr: &Transition) -> Result<()> {
        check_transition(self.dim(), tr)?;
        self.trace.update(tr);
        let d = tr.x.sub_scaled(tr.gamma_next, &tr.x_next).to_dense();
        self.sys.add(&self.trace.trace, &d, tr.reward)
    }

    fn weights(&self) -> Result<Vec<f64>> {
        Ok(self.sys.solve())
    }

    fn numerical_events(&self) -> usize {
        self.sys.skipped
    }
}

/// LSTD on sketched features `Sx`: solves `(S A Sᵀ) w̃ = S b` in `k`
/// dimensions and predicts `w̃ᵀ S x`.
#[derive(Debug, Clone)]
pub struct LstdP {
    sketch: SketchMatrix,
    sys: InverseSystem,
    trace: TraceState,
}

impl LstdP {
    pub fn new(sketch: SketchMatrix, xi: f64, lambda: f64) -> Self {
        let k = sketch.k();
        Self {
            sketch,
            sys: InverseSystem::new(k, xi),
            trace: TraceState::new(k, lambda),
        }
    }

    pub fn sketch(&self) -> &SketchMatrix {
        &self.sketch
    }
}

impl Agent for LstdP {
    fn algorithm(&self) -> Algorithm {
        Algorithm::LstdP
    }

    fn dim(&self) -> usize {
        self.sketch.d()
    }

    fn observe(&mut self, tr: &Transition) -> Result<()> {
        check_transition(self.dim(), tr)?;
        let sx = self.sketch.apply(&tr.x)?;
        self.trace.update_with(tr, &sx);
        let mut v = sx;
        if tr.gamma_next != 0.0 {
            let sxn = self.sketch.apply(&tr.x_next)?;
            linalg::axpy(-tr.gamma_next, &sxn, &mut v);
        }
        self.sys.add(&self.trace.trace, &v, tr.reward)
    }

    fn weights(&self) -> Result<Vec<f64>> {
        Ok(self.sys.solve())
    }

    fn prediction_features(&self, x: &FeatureVector) -> Result<FeatureVector> {
        check_dim(self.dim(), x)?;
        Ok(FeatureVector::Dense(self.sketch.apply(x)?))
    }

    fn numerical_events(&self) -> usize {
        self.sys.skipped
    }
}
