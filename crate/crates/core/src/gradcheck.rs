//! Central-difference validation of the analytic derivative paths.

use serde::Serialize;

use crate::model::{Model, Result};
use crate::tensor::unit;

/// Step used for central differences.
pub const FD_STEP: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckStatus {
    Passed,
    Failed,
    /// A ReLU pre-activation lies within one finite-difference step of its kink.
    Excluded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct KinkSite {
    pub layer: usize,
    pub unit: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct FiniteDiffReport {
    /// Largest `|J_jvp − J_fd|` relative to the largest finite-difference entry.
    pub jvp_rel_error: f64,
    pub vjp_rel_error: f64,
    pub tol: f64,
    pub status: CheckStatus,
    pub kinks: Vec<KinkSite>,
}

impl FiniteDiffReport {
    pub fn max_rel_error(&self) -> f64 {
        self.jvp_rel_error.max(self.vjp_rel_error)
    }

    pub fn passed(&self) -> bool {
        self.status == CheckStatus::Passed
    }
}

/// Compares the JVP columns and VJP rows of `J_f(x)` with central differences.
///
/// Points where a ReLU input is within reach of its kink along any probe
/// direction are reported as [`CheckStatus::Excluded`] together with the
/// offending units.
pub fn finite_diff_check(model: &Model, x: &[f64], tol: f64) -> Result<FiniteDiffReport> {
    let lin = model.linearize(x)?;
    let (m, k) = (model.input_dim(), model.output_dim());
    let h = FD_STEP;

    let mut kinks = Vec::new();
    for j in 0..m {
        let tangents = lin.jvp_trace(&unit(m, j))?;
        for (layer, z) in lin.relu_inputs() {
            for (u, (&zi, &ti)) in z.iter().zip(&tangents[layer]).enumerate() {
                let site = KinkSite { layer, unit: u };
                if (zi == 0.0 || zi.abs() <= 2.0 * h * ti.abs()) && !kinks.contains(&site) {
                    kinks.push(site);
                }
            }
        }
    }

    let mut fd_cols = Vec::with_capacity(m);
    let mut xp = x.to_vec();
    for j in 0..m {
        xp[j] = x[j] + h;
        let fp = model.forward(&xp)?;
        xp[j] = x[j] - h;
        let fm = model.forward(&xp)?;
        xp[j] = x[j];
        fd_cols.push(
            fp.iter()
                .zip(&fm)
                .map(|(a, b)| (a - b) / (2.0 * h))
                .collect::<Vec<_>>(),
        );
    }
    let scale = fd_cols
        .iter()
        .flatten()
        .fold(0.0f64, |acc, v| acc.max(v.abs()))
        .max(f64::MIN_POSITIVE);

    let mut jvp_err = 0.0f64;
    for (j, col) in fd_cols.iter().enumerate() {
        let analytic = lin.jvp(&unit(m, j))?;
        for (a, b) in analytic.iter().zip(col) {
            jvp_err = jvp_err.max((a - b).abs());
        }
    }
    let mut vjp_err = 0.0f64;
    for r in 0..k {
        let row = lin.vjp(&unit(k, r))?;
        for (a, col) in row.iter().zip(&fd_cols) {
            vjp_err = vjp_err.max((a - col[r]).abs());
        }
    }

    let jvp_rel_error = jvp_err / scale;
    let vjp_rel_error = vjp_err / scale;
    let status = if !kinks.is_empty() {
        CheckStatus::Excluded
    } else if jvp_rel_error <= tol && vjp_rel_error <= tol {
        CheckStatus::Passed
    } else {
        CheckStatus::Failed
    };
    Ok(FiniteDiffReport {
        jvp_rel_error,
        vjp_rel_error,
        tol,
        status,
        kinks,
    })
}
