//! Common interface of the inexact proximity operators used by the solvers.

use crate::error::Result;
use crate::image::Image;

/// Per-outer-iteration tolerance schedule of an inner prox solver.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum TolSchedule {
    #[default]
    Fixed,
    /// `tol / k^2` at outer iteration `k`, which keeps the inexactness
    /// errors summable.
    InverseSquare,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProxConfig {
    pub tol: f64,
    pub max_iters: usize,
    pub schedule: TolSchedule,
}

impl Default for ProxConfig {
    fn default() -> Self {
        Self {
            tol: 1e-5,
            max_iters: 50,
            schedule: TolSchedule::Fixed,
        }
    }
}

impl ProxConfig {
    pub fn new(tol: f64, max_iters: usize) -> Self {
        Self {
            tol,
            max_iters,
            schedule: TolSchedule::Fixed,
        }
    }

    /// Tolerance in force at outer iteration `outer` (1-based).
    pub fn tol_at(&self, outer: usize) -> f64 {
        match self.schedule {
            TolSchedule::Fixed => self.tol,
            TolSchedule::InverseSquare => {
                let k = outer.max(1) as f64;
                self.tol / (k * k)
            }
        }
    }

    /// Copy with the tolerance for outer iteration `outer` baked in.
    pub fn at_outer(&self, outer: usize) -> ProxConfig {
        ProxConfig {
            tol: self.tol_at(outer),
            schedule: TolSchedule::Fixed,
            ..*self
        }
    }
}

#[derive(Clone, Debug)]
pub struct ProxOutcome {
    pub image: Image,
    /// Terminal fixed-point residual of the inner iteration.
    pub residual: f64,
    pub iterations: usize,
}

/// A convex regularizer `J` with an iterative proximity operator.
///
/// Implementations may keep inner state (dual or auxiliary variables)
/// between calls and warm-start from it; [`Regularizer::reset`] clears it.
pub trait Regularizer {
    fn value(&self, img: &Image) -> f64;

    /// Approximates `argmin_f 0.5 ||f - g||^2 + weight * J(f)`.
    fn prox(&mut self, g: &Image, weight: f64, cfg: &ProxConfig) -> Result<ProxOutcome>;

    fn reset(&mut self);

    fn name(&self) -> &'static str;
}

/// `0.5 ||f - g||^2 + weight * J(f)`.
pub fn prox_objective<R: Regularizer + ?Sized>(reg: &R, f: &Image, g: &Image, weight: f64) -> f64 {
    let d = f.sub(g).norm_l2();
    0.5 * d * d + weight * reg.value(f)
}
