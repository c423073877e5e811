//! Finite-dimensional measured system: observable, pre/post-selected states,
//! weak values and weak moments.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::{Error, Result, C64};

/// Default lower bound on `|<psi_f|psi_i>|`.
pub const DEFAULT_OVERLAP_FLOOR: f64 = 1e-10;

/// Largest norm deviation that is silently renormalized away.
pub const RENORMALIZE_SLACK: f64 = 1e-6;

const HERMITIAN_REL_TOL: f64 = 1e-12;

/// Observable plus pre- and post-selected states on a `d`-dimensional space.
///
/// Construction validates the observable and normalizes both states, so a
/// `SystemSpec` value always satisfies the Hermiticity, unit-norm and
/// overlap-floor invariants.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemSpec {
    observable: DMatrix<C64>,
    pre_state: DVector<C64>,
    post_state: DVector<C64>,
    overlap_floor: f64,
}

/// Result of [`validate_system`]. Norms are the raw input norms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SystemDiagnostics {
    pub hermiticity_residual: f64,
    pub pre_norm: f64,
    pub post_norm: f64,
    /// `|<psi_f|psi_i>|` after normalization.
    pub overlap: f64,
    /// `|<psi_f|psi_i>|^2`, the post-selection probability as `gamma -> 0`.
    pub overlap_sq: f64,
}

/// Checks the system invariants and reports the measured magnitudes.
pub fn validate_system(
    observable: &DMatrix<C64>,
    pre_state: &DVector<C64>,
    post_state: &DVector<C64>,
    overlap_floor: f64,
) -> Result<SystemDiagnostics> {
    let d = observable.nrows();
    if d == 0 {
        return Err(Error::DimensionMismatch { what: "observable", got: 0, expected: 1 });
    }
    if observable.ncols() != d {
        return Err(Error::DimensionMismatch {
            what: "observable columns",
            got: observable.ncols(),
            expected: d,
        });
    }
    for (what, v) in [("pre_state", pre_state), ("post_state", post_state)] {
        if v.len() != d {
            return Err(Error::DimensionMismatch { what, got: v.len(), expected: d });
        }
    }

    let hermiticity_residual = hermiticity_residual(observable);
    let scale = observable.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let limit = HERMITIAN_REL_TOL * scale;
    if !(hermiticity_residual <= limit) {
        return Err(Error::NonHermitian { residual: hermiticity_residual, limit });
    }

    let pre_norm = pre_state.norm();
    let post_norm = post_state.norm();
    check_norm("pre", pre_norm)?;
    check_norm("post", post_norm)?;

    let overlap = post_state.dotc(pre_state).norm() / (pre_norm * post_norm);
    if !(overlap > overlap_floor) {
        return Err(Error::VanishingOverlap { overlap, floor: overlap_floor });
    }
    Ok(SystemDiagnostics {
        hermiticity_residual,
        pre_norm,
        post_norm,
        overlap,
        overlap_sq: overlap * overlap,
    })
}

fn check_norm(which: &'static str, norm: f64) -> Result<()> {
    if norm.is_finite() && (norm - 1.0).abs() <= RENORMALIZE_SLACK + 1e-12 {
        Ok(())
    } else {
        Err(Error::NonNormalized { which, norm })
    }
}

fn hermiticity_residual(a: &DMatrix<C64>) -> f64 {
    let d = a.nrows();
    let mut worst = 0.0_f64;
    for i in 0..d {
        for j in 0..d {
            worst = worst.max((a[(i, j)] - a[(j, i)].conj()).norm());
        }
    }
    worst
}

impl SystemSpec {
    pub fn new(
        observable: DMatrix<C64>,
        pre_state: DVector<C64>,
        post_state: DVector<C64>,
    ) -> Result<Self> {
        Self::with_overlap_floor(observable, pre_state, post_state, DEFAULT_OVERLAP_FLOOR)
    }

    pub fn with_overlap_floor(
        observable: DMatrix<C64>,
        pre_state: DVector<C64>,
        post_state: DVector<C64>,
        overlap_floor: f64,
    ) -> Result<Self> {
        if !(overlap_floor >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "overlap floor must be non-negative, got {overlap_floor}"
            )));
        }
        let diag = validate_system(&observable, &pre_state, &post_state, overlap_floor)?;
        let pre_state = pre_state.unscale(diag.pre_norm);
        let post_state = post_state.unscale(diag.post_norm);
        Ok(Self { observable, pre_state, post_state, overlap_floor })
    }

    pub fn dim(&self) -> usize {
        self.observable.nrows()
    }

    pub fn observable(&self) -> &DMatrix<C64> {
        &self.observable
    }

    pub fn pre_state(&self) -> &DVector<C64> {
        &self.pre_state
    }

    pub fn post_state(&self) -> &DVector<C64> {
        &self.post_state
    }

    pub fn overlap_floor(&self) -> f64 {
        self.overlap_floor
    }

    /// `<psi_f|psi_i>`.
    pub fn overlap(&self) -> C64 {
        self.post_state.dotc(&self.pre_state)
    }

    pub fn diagnostics(&self) -> SystemDiagnostics {
        validate_system(&self.observable, &self.pre_state, &self.post_state, self.overlap_floor)
            .expect("SystemSpec invariants hold after construction")
    }

    /// The weak value `A_w = <psi_f|A|psi_i> / <psi_f|psi_i>`.
    pub fn weak_value(&self) -> Result<C64> {
        weak_moment(self, 1)
    }
}

/// `(A^m)_w = <psi_f|A^m|psi_i> / <psi_f|psi_i>`, by repeated matrix-vector
/// products.
pub fn weak_moment(sys: &SystemSpec, order: u32) -> Result<C64> {
    if order == 0 {
        return Err(Error::InvalidOrder);
    }
    let overlap = sys.overlap();
    if !(overlap.norm() > sys.overlap_floor) {
        return Err(Error::VanishingOverlap { overlap: overlap.norm(), floor: sys.overlap_floor });
    }
    let mut v = sys.pre_state.clone();
    for _ in 0..order {
        v = &sys.observable * v;
    }
    Ok(sys.post_state.dotc(&v) / overlap)
}

/// Eigen-decomposition of the observable, eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub eigenvalues: DVector<f64>,
    /// Columns are the eigenvectors `|a_j>`.
    pub eigenvectors: DMatrix<C64>,
}

impl Spectrum {
    pub fn of(observable: &DMatrix<C64>) -> Self {
        let eig = observable.clone().symmetric_eigen();
        let d = eig.eigenvalues.len();
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
        let eigenvalues = DVector::from_iterator(d, order.iter().map(|&i| eig.eigenvalues[i]));
        let eigenvectors = DMatrix::from_fn(d, d, |r, c| eig.eigenvectors[(r, order[c])]);
        Self { eigenvalues, eigenvectors }
    }

    /// `c_j = <a_j|psi>`.
    pub fn coefficients(&self, state: &DVector<C64>) -> DVector<C64> {
        self.eigenvectors.ad_mul(state)
    }

    /// Per-eigenvalue post-selection weights `c'_j^* c_j`.
    pub fn pps_weights(&self, sys: &SystemSpec) -> DVector<C64> {
        let c = self.coefficients(&sys.pre_state);
        let c_post = self.coefficients(&sys.post_state);
        c_post.zip_map(&c, |cp, ci| cp.conj() * ci)
    }

    pub fn reconstruct(&self) -> DMatrix<C64> {
        let diag = DMatrix::from_diagonal(&self.eigenvalues.map(|a| C64::new(a, 0.0)));
        &self.eigenvectors * diag * self.eigenvectors.adjoint()
    }

    /// `max_j a_j - min_j a_j`.
    pub fn spread(&self) -> f64 {
        let n = self.eigenvalues.len();
        self.eigenvalues[n - 1] - self.eigenvalues[0]
    }

    pub fn max_abs(&self) -> f64 {
        self.eigenvalues.iter().fold(0.0, |m, a| m.max(a.abs()))
    }
}

pub fn sigma_x() -> DMatrix<C64> {
    DMatrix::from_row_slice(2, 2, &[C64::new(0.0, 0.0), C64::new(1.0, 0.0), C64::new(1.0, 0.0), C64::new(0.0, 0.0)])
}

pub fn sigma_y() -> DMatrix<C64> {
    DMatrix::from_row_slice(2, 2, &[C64::new(0.0, 0.0), C64::new(0.0, -1.0), C64::new(0.0, 1.0), C64::new(0.0, 0.0)])
}

pub fn sigma_z() -> DMatrix<C64> {
    DMatrix::from_row_slice(2, 2, &[C64::new(1.0, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::new(-1.0, 0.0)])
}

/// Builds a state vector from `[re, im]` amplitudes.
pub fn ket(amps: &[(f64, f64)]) -> DVector<C64> {
    DVector::from_iterator(amps.len(), amps.iter().map(|&(re, im)| C64::new(re, im)))
}
