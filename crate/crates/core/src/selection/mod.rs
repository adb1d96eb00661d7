//! Two-stage ℓ1 selection: the first-stage LASSO screen over the intermediary
//! phenotypes and the randomized second-stage LASSO on the screened columns.

mod first_stage;
mod lasso;
mod randomized;

pub use first_stage::{
    augment_selection, compute_penalty_weights, default_epsilon, default_first_stage_lambdas,
    noise_scaled_lambda,
    outcome_noise_estimate, run_first_stage, FirstStageResult,
};
pub use lasso::{soft_threshold, solve_lasso, LassoSolution, MAX_SWEEPS, SWEEP_TOLERANCE};
pub use randomized::{solve_randomized_lasso, verify_kkt, RandomizationSpec, SelectionRecord};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::all_finite;

/// Outcome `y`, explanatory matrix `g` and optional intermediary matrix `i`,
/// all sharing the same `n` rows.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub y: DVector<f64>,
    pub g: DMatrix<f64>,
    pub i: Option<DMatrix<f64>>,
    pub g_labels: Vec<String>,
    pub i_labels: Vec<String>,
}

impl Dataset {
    pub fn new(
        y: DVector<f64>,
        g: DMatrix<f64>,
        i: Option<DMatrix<f64>>,
        g_labels: Vec<String>,
        i_labels: Vec<String>,
    ) -> Result<Self> {
        let n = y.len();
        if n < 2 {
            return Err(Error::invalid("a dataset needs at least two rows"));
        }
        if g.nrows() != n {
            return Err(Error::dim("rows of G", n, g.nrows()));
        }
        if g_labels.len() != g.ncols() {
            return Err(Error::dim("labels of G", g.ncols(), g_labels.len()));
        }
        if let Some(im) = &i {
            if im.nrows() != n {
                return Err(Error::dim("rows of I", n, im.nrows()));
            }
            if i_labels.len() != im.ncols() {
                return Err(Error::dim("labels of I", im.ncols(), i_labels.len()));
            }
            if !all_finite(im) {
                return Err(Error::invalid("I contains non-finite entries"));
            }
        }
        if !y.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("Y contains non-finite entries"));
        }
        if !all_finite(&g) {
            return Err(Error::invalid("G contains non-finite entries"));
        }
        Ok(Dataset {
            y,
            g,
            i,
            g_labels,
            i_labels,
        })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.g.ncols()
    }
}
