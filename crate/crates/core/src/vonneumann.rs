//! Exact measurement engine: impulsive `gamma A p` coupling, post-selection,
//! the strong-measurement mixture, and split-step pointer evolution.
//!
//! Every translation `S(gamma a_j) = exp(-i gamma a_j p / hbar)` is applied as
//! a phase in the momentum representation, so the only approximation is the
//! periodic grid itself.

use serde::{Deserialize, Serialize};

use crate::hilbert::{Spectrum, SystemSpec};
use crate::pointer::{GridSpec, PointerState};
use crate::{spectral, Error, Result, C64};

/// Post-selection probabilities at or below this are treated as annihilation.
pub const MIN_POSTSELECT_PROB: f64 = 1e-20;

/// Pointer state conditioned on a successful post-selection.
#[derive(Debug, Clone)]
pub struct PostSelectedPointer {
    /// Normalized `|Psi> / ||Psi||`.
    pub state: PointerState,
    /// `||Psi||^2` of the unnormalized conditioned pointer.
    pub postselect_prob: f64,
    pub gamma: f64,
}

fn check_translation(spectrum: &Spectrum, grid: &GridSpec, gamma: f64) -> Result<()> {
    let shift = gamma.abs() * spectrum.max_abs();
    let limit = grid.extent / 8.0;
    if !(shift <= limit) {
        return Err(Error::TranslationOverflow { shift, limit });
    }
    Ok(())
}

/// `Psi(q) = sum_j c'_j^* c_j phi(q - gamma a_j)`, normalized.
pub fn measure(sys: &SystemSpec, pointer: &PointerState, gamma: f64) -> Result<PostSelectedPointer> {
    let spectrum = Spectrum::of(sys.observable());
    let grid = *pointer.grid();
    check_translation(&spectrum, &grid, gamma)?;

    let weights = spectrum.pps_weights(sys);
    let hbar = grid.hbar;
    let eigenvalues = &spectrum.eigenvalues;
    let psi = spectral::apply_diagonal(pointer.samples(), &grid.momenta(), |p| {
        weights
            .iter()
            .zip(eigenvalues.iter())
            .map(|(w, a)| w * C64::from_polar(1.0, -gamma * a * p / hbar))
            .sum()
    });

    let postselect_prob = psi.iter().map(|z| z.norm_sqr()).sum::<f64>() * grid.dq();
    if !(postselect_prob > MIN_POSTSELECT_PROB) {
        return Err(Error::VanishingOverlap {
            overlap: postselect_prob.sqrt(),
            floor: MIN_POSTSELECT_PROB.sqrt(),
        });
    }
    let state = PointerState::normalized(grid, psi)?;
    Ok(PostSelectedPointer { state, postselect_prob, gamma })
}

/// Pointer density after a strong measurement without post-selection:
/// `sum_n |c_n|^2 |phi(q - gamma a_n)|^2`.
pub fn strong_distribution(sys: &SystemSpec, pointer: &PointerState, gamma: f64) -> Result<Vec<f64>> {
    let spectrum = Spectrum::of(sys.observable());
    check_translation(&spectrum, pointer.grid(), gamma)?;
    let c = spectrum.coefficients(sys.pre_state());
    let mut density = vec![0.0; pointer.samples().len()];
    for (cn, &a) in c.iter().zip(spectrum.eigenvalues.iter()) {
        let prob = cn.norm_sqr();
        if prob == 0.0 {
            continue;
        }
        for (d, z) in density.iter_mut().zip(pointer.translated_samples(gamma * a)) {
            *d += prob * z.norm_sqr();
        }
    }
    Ok(density)
}

/// Pointer potential `V(q)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Potential {
    Free,
    /// `k q^2 / 2`
    Harmonic { k: f64 },
    /// `g q^4`
    Quartic { g: f64 },
    Sampled { values: Vec<f64> },
}

impl Potential {
    pub fn sample(&self, grid: &GridSpec) -> Result<Vec<f64>> {
        let q = grid.positions();
        Ok(match self {
            Potential::Free => vec![0.0; q.len()],
            Potential::Harmonic { k } => q.iter().map(|x| 0.5 * k * x * x).collect(),
            Potential::Quartic { g } => q.iter().map(|x| g * x.powi(4)).collect(),
            Potential::Sampled { values } => {
                if values.len() != q.len() {
                    return Err(Error::DimensionMismatch {
                        what: "sampled potential",
                        got: values.len(),
                        expected: q.len(),
                    });
                }
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidArgument("potential must be finite".into()));
                }
                values.clone()
            }
        })
    }
}

/// Strang split-step propagation under `p^2/2m + V(q)`: half kick, drift in
/// momentum space, half kick. A negative `dt` propagates backwards.
///
/// The result is not renormalized; the split steps are unitary.
pub fn evolve(pointer: &PointerState, potential: &[f64], mass: f64, dt: f64, steps: usize) -> Result<PointerState> {
    let grid = *pointer.grid();
    if potential.len() != grid.n_points {
        return Err(Error::DimensionMismatch {
            what: "potential",
            got: potential.len(),
            expected: grid.n_points,
        });
    }
    if !(mass > 0.0 && mass.is_finite()) {
        return Err(Error::InvalidArgument(format!("mass must be positive, got {mass}")));
    }
    if !(dt.is_finite() && dt != 0.0) {
        return Err(Error::InvalidArgument(format!("time step must be finite and nonzero, got {dt}")));
    }
    let hbar = grid.hbar;
    let half_kick: Vec<C64> = potential.iter().map(|v| C64::from_polar(1.0, -0.5 * v * dt / hbar)).collect();
    let drift: Vec<C64> = grid
        .momenta()
        .iter()
        .map(|p| C64::from_polar(1.0, -p * p * dt / (2.0 * mass * hbar)))
        .collect();

    let mut psi = pointer.samples().to_vec();
    for _ in 0..steps {
        psi.iter_mut().zip(&half_kick).for_each(|(z, k)| *z *= k);
        spectral::forward(&mut psi);
        psi.iter_mut().zip(&drift).for_each(|(z, d)| *z *= d);
        spectral::inverse(&mut psi);
        psi.iter_mut().zip(&half_kick).for_each(|(z, k)| *z *= k);
    }
    Ok(PointerState::from_raw(grid, psi))
}
