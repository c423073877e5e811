//! First-order (in `gamma / hbar`) predictions for the post-selected pointer:
//! means and variances of polynomial pointer observables, the `F` and `G`
//! functionals, the variance control windows, measurement sensitivities and
//! the weak-regime diagnostic.
//!
//! Generic observables go through direct operator application with
//! momentum-space inner products. The position and momentum specializations
//! are assembled from [`MomentBundle`] and [`RateBundle`] instead, so the two
//! routes can be checked against each other.

use serde::Serialize;

use crate::hilbert::{Spectrum, SystemSpec};
use crate::pointer::{initial_rates, stats, Canonical, MomentBundle, PointerState, RateBundle};
use crate::{spectral, Error, Result, C64};

/// Polynomial in `q` alone or in `p` alone: `sum_k c_k x^k`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObservablePoly {
    pub basis: Canonical,
    pub coefficients: Vec<f64>,
}

impl ObservablePoly {
    pub fn new(basis: Canonical, coefficients: Vec<f64>) -> Result<Self> {
        if coefficients.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidArgument("observable coefficients must be finite".into()));
        }
        if coefficients.iter().all(|&c| c == 0.0) {
            return Err(Error::InvalidArgument("observable needs at least one nonzero coefficient".into()));
        }
        Ok(Self { basis, coefficients })
    }

    /// `x^n` in the given basis.
    pub fn power(basis: Canonical, n: usize) -> Self {
        let mut coefficients = vec![0.0; n + 1];
        coefficients[n] = 1.0;
        Self { basis, coefficients }
    }

    pub fn q() -> Self {
        Self::power(Canonical::Q, 1)
    }

    pub fn p() -> Self {
        Self::power(Canonical::P, 1)
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.coefficients.iter().rev().fold(0.0, |acc, c| acc * x + c)
    }

    /// `M^2` as a polynomial.
    pub fn squared(&self) -> Self {
        let n = self.coefficients.len();
        let mut out = vec![0.0; 2 * n - 1];
        for (i, a) in self.coefficients.iter().enumerate() {
            for (j, b) in self.coefficients.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Self { basis: self.basis, coefficients: out }
    }

    /// `M phi` in position representation.
    pub fn apply(&self, state: &PointerState) -> Vec<C64> {
        self.apply_to(state, state.samples())
    }

    fn apply_to(&self, state: &PointerState, samples: &[C64]) -> Vec<C64> {
        let grid = state.grid();
        match self.basis {
            Canonical::Q => samples.iter().zip(grid.positions()).map(|(z, q)| z * self.eval(q)).collect(),
            Canonical::P => spectral::apply_diagonal(samples, &grid.momenta(), |p| C64::new(self.eval(p), 0.0)),
        }
    }

    /// Human-readable form such as `q^2 + 0.5 q`.
    pub fn label(&self) -> String {
        let x = match self.basis {
            Canonical::Q => "q",
            Canonical::P => "p",
        };
        let mut terms = Vec::new();
        for (k, &c) in self.coefficients.iter().enumerate().rev() {
            if c == 0.0 {
                continue;
            }
            let mono = match k {
                0 => String::new(),
                1 => x.to_string(),
                _ => format!("{x}^{k}"),
            };
            terms.push(match (c == 1.0 && k > 0, mono.is_empty()) {
                (true, _) => mono,
                (false, true) => format!("{c}"),
                (false, false) => format!("{c} {mono}"),
            });
        }
        terms.join(" + ")
    }
}

fn inner(a: &[C64], b: &[C64], dq: f64) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum::<C64>() * dq
}

/// `<u|p|v>` evaluated in the momentum representation.
fn momentum_matrix_element(state: &PointerState, u: &[C64], v: &[C64]) -> C64 {
    let grid = state.grid();
    let (mut uu, mut vv) = (u.to_vec(), v.to_vec());
    spectral::forward(&mut uu);
    spectral::forward(&mut vv);
    let n = grid.n_points as f64;
    uu.iter()
        .zip(&vv)
        .zip(grid.momenta())
        .map(|((a, b), p)| a.conj() * b * p)
        .sum::<C64>()
        * (grid.dq() / n)
}

/// Static expectations the first-order expansion needs for one observable.
#[derive(Debug, Clone, Copy)]
struct OperatorExpectations {
    mean: f64,
    variance: f64,
    mean_p: f64,
    /// `<M p>` (so `<{M,p}> = 2 Re`, `<[M,p]> = 2i Im`)
    m_p: C64,
    /// `<M^2 p>`
    m2_p: C64,
}

impl OperatorExpectations {
    fn of(m: &ObservablePoly, state: &PointerState) -> Self {
        let phi = state.samples();
        let m_phi = m.apply(state);
        let m2_phi = m.apply_to(state, &m_phi);
        let (mean, variance) = expectation(m, state);
        Self {
            mean,
            variance,
            mean_p: momentum_matrix_element(state, phi, phi).re,
            m_p: momentum_matrix_element(state, &m_phi, phi),
            m2_p: momentum_matrix_element(state, &m2_phi, phi),
        }
    }

    fn anticom(z: C64) -> f64 {
        2.0 * z.re
    }

    fn commutator(z: C64) -> C64 {
        C64::new(0.0, 2.0 * z.im)
    }
}

/// `(<M>, var M)` in `state`, by direct operator application.
pub fn expectation(m: &ObservablePoly, state: &PointerState) -> (f64, f64) {
    let dq = state.grid().dq();
    let m_phi = m.apply(state);
    let mean = inner(state.samples(), &m_phi, dq).re;
    let raw2 = inner(&m_phi, &m_phi, dq).re;
    (mean, raw2 - mean * mean)
}

/// `<{M, p}>` through momentum-space inner products.
pub fn anticommutator_with_momentum(m: &ObservablePoly, state: &PointerState) -> f64 {
    let m_phi = m.apply(state);
    OperatorExpectations::anticom(momentum_matrix_element(state, &m_phi, state.samples()))
}

/// The `F` and `G` functionals of an observable in the initial pointer state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Functionals {
    /// `<[M^2,p]> - 2 <M> <[M,p]>` (purely imaginary in exact arithmetic).
    pub f: C64,
    /// `<{M^2,p}> - 2 <M> <{M,p}> - 2 <p> (var M - <M>^2)`.
    pub g: f64,
}

pub fn functionals(m: &ObservablePoly, pointer: &PointerState) -> Functionals {
    let e = OperatorExpectations::of(m, pointer);
    functionals_from(&e)
}

fn functionals_from(e: &OperatorExpectations) -> Functionals {
    use OperatorExpectations as E;
    let f = E::commutator(e.m2_p) - 2.0 * e.mean * E::commutator(e.m_p);
    let g = E::anticom(e.m2_p) - 2.0 * e.mean * E::anticom(e.m_p) - 2.0 * e.mean_p * (e.variance - e.mean * e.mean);
    Functionals { f, g }
}

/// Variance control assessment for `q` or `p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ControlAssessment {
    pub which: Canonical,
    /// `Im A_w dq_3/dt` or `Im A_w p_3`.
    pub term: f64,
    pub lower_bound: f64,
    pub satisfied: bool,
    pub window: ControlWindow,
}

/// Where the control term sits relative to `lower_bound < term <= 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlWindow {
    Inside,
    /// Numerically zero: satisfied, variance unchanged at first order.
    Boundary,
    Above,
    Below,
}

impl ControlWindow {
    pub fn as_str(self) -> &'static str {
        match self {
            ControlWindow::Inside => "inside",
            ControlWindow::Boundary => "boundary",
            ControlWindow::Above => "above",
            ControlWindow::Below => "below",
        }
    }
}

/// A squared sensitivity that may be undefined.
///
/// Undefined entries still carry the value of the closed-form expression
/// whenever it is finite, so sweeps can show it next to the reason.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Sensitivity {
    Defined {
        value: f64,
        /// Negative squared sensitivities mean the control term has left the
        /// first-order regime.
        negative: bool,
    },
    Undefined {
        reason: &'static str,
        formula_value: Option<f64>,
    },
}

impl Sensitivity {
    fn defined(value: f64) -> Self {
        Sensitivity::Defined { value, negative: value < 0.0 }
    }

    fn undefined(reason: &'static str, formula_value: Option<f64>) -> Self {
        Sensitivity::Undefined { reason, formula_value }
    }

    pub fn value(&self) -> Option<f64> {
        match *self {
            Sensitivity::Defined { value, .. } => Some(value),
            Sensitivity::Undefined { .. } => None,
        }
    }

    /// The closed-form expression, defined or not.
    pub fn formula_value(&self) -> Option<f64> {
        match *self {
            Sensitivity::Defined { value, .. } => Some(value),
            Sensitivity::Undefined { formula_value, .. } => formula_value,
        }
    }

    pub fn reason(&self) -> Option<&'static str> {
        match *self {
            Sensitivity::Defined { .. } => None,
            Sensitivity::Undefined { reason, .. } => Some(reason),
        }
    }
}

pub const REASON_IMAGINARY_WEAK_VALUE: &str = "A_w is purely imaginary";
pub const REASON_REAL_WEAK_VALUE: &str = "A_w is real valued";
pub const REASON_STATIC_VARIANCE: &str =
    "d(var q)/dt = 0: the mean position does not depend on Im A_w";
pub const REASON_ZERO_MOMENTUM_VARIANCE: &str = "var p = 0";

/// Squared sensitivities for estimating `Re A_w` and `Im A_w` from the
/// pointer means.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SensitivityBundle {
    /// From the mean position, for `Re A_w`.
    pub dq2_re: Sensitivity,
    /// From the mean position, for `Im A_w`.
    pub dq2_im: Sensitivity,
    /// From the mean momentum, for `Im A_w`.
    pub dp2_im: Sensitivity,
}

/// First-order prediction for one generic observable.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObservablePrediction {
    pub observable: String,
    pub initial_mean: f64,
    pub initial_variance: f64,
    pub mean: f64,
    pub variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PredictionBundle {
    pub weak_value: C64,
    pub mean_q: f64,
    pub mean_p: f64,
    pub variance_q: f64,
    pub variance_p: f64,
    pub generic: Vec<ObservablePrediction>,
    pub control_q: ControlAssessment,
    pub control_p: ControlAssessment,
    /// Set when any predicted variance is not positive.
    pub truncation_warning: bool,
}

/// Everything the first-order formulas need about one measurement setting.
#[derive(Debug, Clone)]
pub struct FirstOrder<'a> {
    pointer: &'a PointerState,
    weak_value: C64,
    eigen_spread: f64,
    gamma: f64,
    mass: f64,
    q: MomentBundle,
    p: MomentBundle,
    rates: RateBundle,
}

impl<'a> FirstOrder<'a> {
    pub fn new(sys: &SystemSpec, pointer: &'a PointerState, gamma: f64, mass: f64) -> Result<Self> {
        let weak_value = sys.weak_value()?;
        let spread = Spectrum::of(sys.observable()).spread();
        Self::from_weak_value(weak_value, spread, pointer, gamma, mass)
    }

    /// Builds the predictor from a known weak value and eigenvalue spread.
    pub fn from_weak_value(
        weak_value: C64,
        eigen_spread: f64,
        pointer: &'a PointerState,
        gamma: f64,
        mass: f64,
    ) -> Result<Self> {
        if !gamma.is_finite() {
            return Err(Error::InvalidArgument(format!("gamma must be finite, got {gamma}")));
        }
        let rates = initial_rates(pointer, mass)?;
        Ok(Self {
            pointer,
            weak_value,
            eigen_spread,
            gamma,
            mass,
            q: stats(pointer, Canonical::Q),
            p: stats(pointer, Canonical::P),
            rates,
        })
    }

    pub fn weak_value(&self) -> C64 {
        self.weak_value
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn rates(&self) -> &RateBundle {
        &self.rates
    }

    pub fn initial(&self, which: Canonical) -> &MomentBundle {
        match which {
            Canonical::Q => &self.q,
            Canonical::P => &self.p,
        }
    }

    fn coupling(&self) -> f64 {
        self.gamma / self.pointer.hbar()
    }

    /// Generic first-order mean of `M`.
    pub fn mean(&self, m: &ObservablePoly) -> f64 {
        let e = OperatorExpectations::of(m, self.pointer);
        self.mean_from(&e)
    }

    fn mean_from(&self, e: &OperatorExpectations) -> f64 {
        let k = self.coupling();
        let aw = self.weak_value;
        let comm = OperatorExpectations::commutator(e.m_p);
        let anti = OperatorExpectations::anticom(e.m_p);
        (C64::new(e.mean, 0.0) - C64::i() * k * aw.re * comm).re + k * aw.im * (anti - 2.0 * e.mean * e.mean_p)
    }

    /// Generic first-order variance of `M`.
    pub fn variance(&self, m: &ObservablePoly) -> f64 {
        let e = OperatorExpectations::of(m, self.pointer);
        self.variance_from(&e)
    }

    fn variance_from(&self, e: &OperatorExpectations) -> f64 {
        let k = self.coupling();
        let aw = self.weak_value;
        let fg = functionals_from(e);
        (C64::new(e.variance, 0.0) - C64::i() * k * aw.re * fg.f).re + k * aw.im * fg.g
    }

    /// Mean position through the Ehrenfest rate of the position variance.
    pub fn mean_q(&self) -> f64 {
        let aw = self.weak_value;
        self.q.mean + self.gamma * aw.re + self.coupling() * aw.im * self.mass * self.rates.var_rate_q
    }

    pub fn mean_p(&self) -> f64 {
        self.p.mean + 2.0 * self.coupling() * self.weak_value.im * self.p.variance
    }

    /// `var q + (2 gamma m / 3 hbar) Im A_w dq_3/dt`.
    pub fn variance_q(&self) -> f64 {
        self.q.variance + 2.0 * self.mass / 3.0 * self.coupling() * self.control_term(Canonical::Q)
    }

    /// `var p + (2 gamma / hbar) Im A_w p_3`.
    pub fn variance_p(&self) -> f64 {
        self.p.variance + 2.0 * self.coupling() * self.control_term(Canonical::P)
    }

    fn control_term(&self, which: Canonical) -> f64 {
        match which {
            Canonical::Q => self.weak_value.im * self.rates.skew_rate_q,
            Canonical::P => self.weak_value.im * self.p.central3,
        }
    }

    fn control_lower_bound(&self, which: Canonical) -> f64 {
        let hbar = self.pointer.hbar();
        match which {
            Canonical::Q => -(3.0 * hbar / (2.0 * self.gamma * self.mass)) * self.q.variance,
            Canonical::P => -(hbar / (2.0 * self.gamma)) * self.p.variance,
        }
    }

    fn require_positive_gamma(&self) -> Result<()> {
        if self.gamma > 0.0 {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("gamma must be positive, got {}", self.gamma)))
        }
    }

    pub fn control(&self, which: Canonical) -> Result<ControlAssessment> {
        self.require_positive_gamma()?;
        let term = self.control_term(which);
        let lower_bound = self.control_lower_bound(which);
        let window = if term.abs() <= ZERO_TERM_REL * lower_bound.abs() {
            ControlWindow::Boundary
        } else if term > 0.0 {
            ControlWindow::Above
        } else if term > lower_bound {
            ControlWindow::Inside
        } else {
            ControlWindow::Below
        };
        let satisfied = matches!(window, ControlWindow::Inside | ControlWindow::Boundary);
        Ok(ControlAssessment { which, term, lower_bound, satisfied, window })
    }

    /// Control-term value `lower_bound + epsilon`.
    pub fn optimal_control_target(&self, which: Canonical, epsilon: f64) -> Result<f64> {
        if !(epsilon > 0.0) {
            return Err(Error::NonPositiveEpsilon(epsilon));
        }
        self.require_positive_gamma()?;
        Ok(self.control_lower_bound(which) + epsilon)
    }

    pub fn sensitivities(&self) -> Result<SensitivityBundle> {
        self.require_positive_gamma()?;
        let hbar = self.pointer.hbar();
        let (g, m) = (self.gamma, self.mass);
        let aw = self.weak_value;
        let re_zero = aw.re.abs() <= ZERO_WEAK_VALUE_REL * aw.norm();
        let im_zero = aw.im.abs() <= ZERO_WEAK_VALUE_REL * aw.norm();
        let var_q = self.q.variance;
        let var_p = self.p.variance;
        let rate = self.rates.var_rate_q;
        let rate_zero = rate.abs() <= ZERO_RATE_REL * (var_q * var_p).sqrt() / m;
        let control_q = self.control_term(Canonical::Q);

        let dq2_re_value = var_q / (g * g) + 2.0 * m / (3.0 * g * hbar) * control_q;
        let dq2_re = if re_zero {
            Sensitivity::undefined(REASON_IMAGINARY_WEAK_VALUE, Some(dq2_re_value))
        } else {
            Sensitivity::defined(dq2_re_value)
        };

        let r = hbar / (g * m);
        let dq2_im_value = (!rate_zero).then(|| r * r * var_q / (rate * rate) + 2.0 / 3.0 * r * control_q / (rate * rate));
        let dq2_im = match dq2_im_value {
            _ if im_zero => Sensitivity::undefined(REASON_REAL_WEAK_VALUE, dq2_im_value),
            None => Sensitivity::undefined(REASON_STATIC_VARIANCE, None),
            Some(v) => Sensitivity::defined(v),
        };

        let r = hbar / (2.0 * g);
        let dp2_im_value = (var_p > 0.0).then(|| r * r / var_p + r * self.control_term(Canonical::P) / (var_p * var_p));
        let dp2_im = match dp2_im_value {
            _ if im_zero => Sensitivity::undefined(REASON_REAL_WEAK_VALUE, dp2_im_value),
            None => Sensitivity::undefined(REASON_ZERO_MOMENTUM_VARIANCE, None),
            Some(v) => Sensitivity::defined(v),
        };
        Ok(SensitivityBundle { dq2_re, dq2_im, dp2_im })
    }

    /// `gamma (max a - min a) / std q`; small values mean a weak measurement.
    pub fn weakness(&self) -> f64 {
        if self.eigen_spread == 0.0 {
            return 0.0;
        }
        self.gamma.abs() * self.eigen_spread / self.q.variance.sqrt()
    }

    pub fn bundle(&self, observables: &[ObservablePoly]) -> Result<PredictionBundle> {
        let generic: Vec<ObservablePrediction> = observables
            .iter()
            .map(|m| {
                let e = OperatorExpectations::of(m, self.pointer);
                ObservablePrediction {
                    observable: m.label(),
                    initial_mean: e.mean,
                    initial_variance: e.variance,
                    mean: self.mean_from(&e),
                    variance: self.variance_from(&e),
                }
            })
            .collect();
        let (variance_q, variance_p) = (self.variance_q(), self.variance_p());
        let truncation_warning =
            variance_q <= 0.0 || variance_p <= 0.0 || generic.iter().any(|g| g.variance <= 0.0);
        Ok(PredictionBundle {
            weak_value: self.weak_value,
            mean_q: self.mean_q(),
            mean_p: self.mean_p(),
            variance_q,
            variance_p,
            generic,
            control_q: self.control(Canonical::Q)?,
            control_p: self.control(Canonical::P)?,
            truncation_warning,
        })
    }
}

/// A control term this small relative to its bound counts as zero.
const ZERO_TERM_REL: f64 = 1e-12;
const ZERO_WEAK_VALUE_REL: f64 = 1e-12;
/// Relative to the natural rate scale `std q * std p / m`.
const ZERO_RATE_REL: f64 = 1e-10;

pub fn predict_mean(m: &ObservablePoly, sys: &SystemSpec, pointer: &PointerState, gamma: f64, mass: f64) -> Result<f64> {
    Ok(FirstOrder::new(sys, pointer, gamma, mass)?.mean(m))
}

pub fn predict_variance(m: &ObservablePoly, sys: &SystemSpec, pointer: &PointerState, gamma: f64, mass: f64) -> Result<f64> {
    Ok(FirstOrder::new(sys, pointer, gamma, mass)?.variance(m))
}

pub fn control_assessment(
    which: Canonical,
    sys: &SystemSpec,
    pointer: &PointerState,
    gamma: f64,
    mass: f64,
) -> Result<ControlAssessment> {
    FirstOrder::new(sys, pointer, gamma, mass)?.control(which)
}

pub fn sensitivities(sys: &SystemSpec, pointer: &PointerState, gamma: f64, mass: f64) -> Result<SensitivityBundle> {
    FirstOrder::new(sys, pointer, gamma, mass)?.sensitivities()
}

pub fn optimal_control_target(
    which: Canonical,
    epsilon: f64,
    gamma: f64,
    mass: f64,
    pointer: &PointerState,
) -> Result<f64> {
    // the target does not depend on the weak value
    FirstOrder::from_weak_value(C64::new(0.0, 0.0), 0.0, pointer, gamma, mass)?.optimal_control_target(which, epsilon)
}

pub fn weakness_diagnostic(sys: &SystemSpec, pointer: &PointerState, gamma: f64) -> f64 {
    let spread = Spectrum::of(sys.observable()).spread();
    if spread == 0.0 {
        return 0.0;
    }
    gamma.abs() * spread / stats(pointer, Canonical::Q).variance.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{ket, sigma_z};
    use crate::pointer::{build_pointer, GridSpec, StateFamily};
    use nalgebra::DMatrix;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_1_SQRT_2 as R;

    fn pointer(family: StateFamily) -> PointerState {
        build_pointer(&family, GridSpec::default()).unwrap()
    }

    fn chirped() -> PointerState {
        pointer(StateFamily::Chirped { sigma: 1.0, c: 0.25 })
    }

    fn cubic(b: f64) -> PointerState {
        pointer(StateFamily::Cubic { sigma: 1.0, b })
    }

    fn skewed() -> PointerState {
        pointer(StateFamily::MomentumSkewed { s: 1.0, lambda: 0.5 })
    }

    fn gaussian() -> PointerState {
        pointer(StateFamily::Gaussian { sigma: 1.0, q0: 0.0, p0: 0.0 })
    }

    /// `A_w = i`
    fn sys_plus_i() -> SystemSpec {
        SystemSpec::new(sigma_z(), ket(&[(R, 0.0), (R, 0.0)]), ket(&[(R, 0.0), (0.0, R)])).unwrap()
    }

    /// `A_w = -i`
    fn sys_minus_i() -> SystemSpec {
        SystemSpec::new(sigma_z(), ket(&[(R, 0.0), (R, 0.0)]), ket(&[(R, 0.0), (0.0, -R)])).unwrap()
    }

    /// `A_w = 1`
    fn sys_real() -> SystemSpec {
        let zero = ket(&[(1.0, 0.0), (0.0, 0.0)]);
        SystemSpec::new(sigma_z(), zero.clone(), zero).unwrap()
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn poly_algebra() {
        let m = ObservablePoly::new(Canonical::Q, vec![1.0, 2.0]).unwrap();
        assert_eq!(m.squared().coefficients, vec![1.0, 4.0, 4.0]);
        assert_eq!(m.eval(3.0), 7.0);
        assert_eq!(m.label(), "2 q + 1");
        assert_eq!(ObservablePoly::power(Canonical::P, 2).label(), "p^2");
        assert!(ObservablePoly::new(Canonical::Q, vec![0.0, 0.0]).is_err());
    }

    #[test]
    fn scenario_a_means() {
        let phi = chirped();
        let fo = FirstOrder::new(&sys_plus_i(), &phi, 0.1, 1.0).unwrap();
        assert!(close(fo.mean(&ObservablePoly::q()), 0.1, 1e-12));
        assert!(close(fo.mean(&ObservablePoly::p()), 0.1, 1e-12));
        assert!(close(fo.mean_q(), 0.1, 1e-12));
        assert!(close(fo.mean_p(), 0.1, 1e-12));
    }

    #[test]
    fn real_weak_value_shifts_by_gamma() {
        let phi = gaussian();
        let m = predict_mean(&ObservablePoly::q(), &sys_real(), &phi, 0.1, 1.0).unwrap();
        assert!(close(m, 0.1, 1e-12));
    }

    #[test]
    fn scenario_b_second_moment_and_variance() {
        let phi = cubic(0.05);
        let sys = sys_minus_i();
        // <q^2> - (0.1)(<{q^2,p}> - 2 <q^2><p>) = 1 - 0.1 (0.9 - 0.3)
        let q2 = predict_mean(&ObservablePoly::power(Canonical::Q, 2), &sys, &phi, 0.1, 1.0).unwrap();
        assert!(close(q2, 0.94, 1e-10), "{q2}");
        let v = predict_variance(&ObservablePoly::q(), &sys, &phi, 0.1, 1.0).unwrap();
        assert!(close(v, 1.0 + 0.2 / 3.0 * -0.9, 1e-10), "{v}");
        assert!(close(v, 0.94, 1e-10));
    }

    #[test]
    fn scenario_c_momentum_variance() {
        let phi = skewed();
        let v = predict_variance(&ObservablePoly::p(), &sys_minus_i(), &phi, 0.1, 1.0).unwrap();
        assert!(close(v, 0.76 - 0.2 * 0.064, 1e-10), "{v}");
    }

    #[test]
    fn static_skew_keeps_variance() {
        let phi = gaussian();
        for sys in [sys_plus_i(), sys_minus_i(), sys_real()] {
            let v = predict_variance(&ObservablePoly::q(), &sys, &phi, 0.1, 1.0).unwrap();
            assert!(close(v, 1.0, 1e-12));
        }
    }

    #[test]
    fn functionals_on_canonical_states() {
        let f = functionals(&ObservablePoly::q(), &gaussian());
        assert!(f.f.norm() <= 1e-10);

        let fp = functionals(&ObservablePoly::p(), &skewed());
        assert!(close(fp.g, 0.128, 1e-10), "{}", fp.g);
        assert!(close(fp.g, 2.0 * stats(&skewed(), Canonical::P).central3, 1e-10));

        let phi = cubic(0.05);
        let fq = functionals(&ObservablePoly::q(), &phi);
        let rates = initial_rates(&phi, 1.0).unwrap();
        assert!(close(fq.g, 0.6, 1e-10), "{}", fq.g);
        assert!(close(fq.g, 2.0 / 3.0 * rates.skew_rate_q, 1e-10));
    }

    #[test]
    fn control_examples() {
        let phi = cubic(0.05);
        let c = control_assessment(Canonical::Q, &sys_minus_i(), &phi, 0.1, 1.0).unwrap();
        assert!(close(c.term, -0.9, 1e-10) && close(c.lower_bound, -15.0, 1e-10));
        assert!(c.satisfied);
        assert_eq!(c.window, ControlWindow::Inside);

        let c = control_assessment(Canonical::P, &sys_minus_i(), &skewed(), 0.1, 1.0).unwrap();
        assert!(close(c.term, -0.064, 1e-10) && close(c.lower_bound, -3.8, 1e-10));
        assert!(c.satisfied);

        let phi = gaussian();
        let fo = FirstOrder::new(&sys_minus_i(), &phi, 0.1, 1.0).unwrap();
        let c = fo.control(Canonical::Q).unwrap();
        assert_eq!(c.window, ControlWindow::Boundary);
        assert!(c.satisfied);
        assert!(close(fo.variance_q(), 1.0, 1e-12));

        // sign of the control term follows the cubic coefficient
        let c = control_assessment(Canonical::Q, &sys_minus_i(), &cubic(-0.05), 0.1, 1.0).unwrap();
        assert_eq!(c.window, ControlWindow::Above);
        assert!(!c.satisfied);
    }

    #[test]
    fn control_below_window_flags_truncation() {
        // large coupling drives the predicted variance negative
        let phi = cubic(0.05);
        let fo = FirstOrder::new(&sys_minus_i(), &phi, 2.0, 1.0).unwrap();
        let c = fo.control(Canonical::Q).unwrap();
        assert!(close(c.lower_bound, -0.75, 1e-12));
        assert_eq!(c.window, ControlWindow::Below);
        let b = fo.bundle(&[]).unwrap();
        assert!(b.variance_q < 0.0 && b.truncation_warning);
    }

    #[test]
    fn control_needs_positive_gamma() {
        assert!(control_assessment(Canonical::Q, &sys_minus_i(), &gaussian(), 0.0, 1.0).is_err());
    }

    #[test]
    fn sensitivity_examples() {
        let phi = cubic(0.05);
        let sys_b_like = SystemSpec::new(
            sigma_z(),
            ket(&[(R, 0.0), (R, 0.0)]),
            // complex A_w with a nonzero real part
            ket(&[(0.8, 0.0), (0.0, -0.6)]),
        )
        .unwrap();
        let fo = FirstOrder::new(&sys_b_like, &phi, 0.1, 1.0).unwrap();
        let s = fo.sensitivities().unwrap();
        let expect = fo.variance_q() / 0.01;
        assert!(close(s.dq2_re.value().unwrap(), expect, 1e-12 * expect));

        // S-B itself: A_w = -i, so dq2_re is undefined; the expression is 100 - 6
        let fo = FirstOrder::new(&sys_minus_i(), &phi, 0.1, 1.0).unwrap();
        let s = fo.sensitivities().unwrap();
        assert_eq!(s.dq2_re.reason(), Some(REASON_IMAGINARY_WEAK_VALUE));
        let v = s.dq2_re.formula_value().unwrap();
        assert!(close(v, 94.0, 1e-9), "{v}");
        assert!((v - fo.variance_q() / 0.01).abs() <= 1e-12 * v);

        let phi = chirped();
        let s = sensitivities(&sys_plus_i(), &phi, 0.1, 1.0).unwrap();
        assert!(close(s.dq2_im.value().unwrap(), 100.0, 1e-8));

        let s = sensitivities(&sys_minus_i(), &skewed(), 0.1, 1.0).unwrap();
        let expect = 25.0 / 0.76 - 5.0 * 0.064 / (0.76 * 0.76);
        assert!(close(s.dp2_im.value().unwrap(), expect, 1e-9));
        assert!(close(expect, 32.341, 1e-3));

        let s = sensitivities(&sys_real(), &chirped(), 0.1, 1.0).unwrap();
        assert_eq!(s.dq2_im.reason(), Some(REASON_REAL_WEAK_VALUE));
        assert_eq!(s.dp2_im.reason(), Some(REASON_REAL_WEAK_VALUE));
        assert!(s.dq2_re.value().is_some());

        let s = sensitivities(&sys_plus_i(), &gaussian(), 0.1, 1.0).unwrap();
        assert_eq!(s.dq2_im, Sensitivity::Undefined { reason: REASON_STATIC_VARIANCE, formula_value: None });
    }

    #[test]
    fn optimal_targets() {
        let t = optimal_control_target(Canonical::Q, 0.1, 0.1, 1.0, &gaussian()).unwrap();
        assert!(close(t, -14.9, 1e-10));
        let t = optimal_control_target(Canonical::P, 0.1, 0.1, 1.0, &skewed()).unwrap();
        assert!(close(t, -3.7, 1e-10));
        assert_eq!(
            optimal_control_target(Canonical::Q, 0.0, 0.1, 1.0, &gaussian()),
            Err(Error::NonPositiveEpsilon(0.0))
        );
    }

    #[test]
    fn weakness_examples() {
        let phi = gaussian();
        assert!(close(weakness_diagnostic(&sys_minus_i(), &phi, 0.1), 0.2, 1e-12));
        assert!(close(weakness_diagnostic(&sys_minus_i(), &phi, 10.0), 20.0, 1e-10));
        let d1 = SystemSpec::new(DMatrix::from_element(1, 1, C64::new(3.0, 0.0)), ket(&[(1.0, 0.0)]), ket(&[(1.0, 0.0)])).unwrap();
        assert_eq!(weakness_diagnostic(&d1, &phi, 0.1), 0.0);
        let fo = FirstOrder::new(&sys_minus_i(), &phi, 0.1, 1.0).unwrap();
        assert!(close(fo.weakness(), 0.2, 1e-12));
    }

    fn smooth_state() -> impl Strategy<Value = PointerState> {
        (0.6..1.4f64, -1.0..1.0f64, -0.3..0.3f64, -0.04..0.04f64, -1.0..1.0f64, -0.5..0.5f64).prop_map(
            |(sigma, q0, c, b, p0, skew)| {
                let g = GridSpec::default();
                let samples = g
                    .positions()
                    .into_iter()
                    .map(|q| {
                        let x = q - q0;
                        let amp = (-(x * x) / (4.0 * sigma * sigma)).exp() * (1.0 + skew * x * (-x * x / 8.0).exp());
                        C64::from_polar(amp, p0 * q + c * q * q + b * q * q * q)
                    })
                    .collect();
                PointerState::normalized(g, samples).unwrap()
            },
        )
    }

    fn weak_value_strategy() -> impl Strategy<Value = C64> {
        (-2.0..2.0f64, -2.0..2.0f64).prop_map(|(re, im)| C64::new(re, im))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn f_vanishes_for_canonical_variables(phi in smooth_state()) {
            let hbar = phi.hbar();
            for (m, which) in [(ObservablePoly::q(), Canonical::Q), (ObservablePoly::p(), Canonical::P)] {
                let s = stats(&phi, which);
                let scale = hbar * (s.variance.sqrt() + s.mean.abs());
                prop_assert!(functionals(&m, &phi).f.norm() <= 1e-10 * scale);
            }
        }

        #[test]
        fn specializations_agree(phi in smooth_state(), aw in weak_value_strategy(), gamma in 0.01..0.3f64, mass in 0.5..2.0f64) {
            let fo = FirstOrder::from_weak_value(aw, 2.0, &phi, gamma, mass).unwrap();
            prop_assert!((fo.mean(&ObservablePoly::q()) - fo.mean_q()).abs() <= 1e-12 * fo.mean_q().abs().max(1.0));
            prop_assert!((fo.mean(&ObservablePoly::p()) - fo.mean_p()).abs() <= 1e-12 * fo.mean_p().abs().max(1.0));
            prop_assert!((fo.variance(&ObservablePoly::q()) - fo.variance_q()).abs() <= 1e-12);
            prop_assert!((fo.variance(&ObservablePoly::p()) - fo.variance_p()).abs() <= 1e-12);
        }

        #[test]
        fn control_soundness(phi in smooth_state(), aw in weak_value_strategy(), gamma in 0.01..0.5f64) {
            let fo = FirstOrder::from_weak_value(aw, 2.0, &phi, gamma, 1.0).unwrap();
            if fo.control(Canonical::Q).unwrap().satisfied {
                let v = fo.variance_q();
                prop_assert!(v > 0.0 && v <= fo.initial(Canonical::Q).variance * (1.0 + 1e-12));
            }
            if fo.control(Canonical::P).unwrap().satisfied {
                let v = fo.variance_p();
                prop_assert!(v > 0.0 && v <= fo.initial(Canonical::P).variance * (1.0 + 1e-12));
            }
        }

        #[test]
        fn sensitivity_identity(phi in smooth_state(), aw in weak_value_strategy(), gamma in 0.01..0.5f64) {
            prop_assume!(aw.re.abs() > 1e-3);
            let fo = FirstOrder::from_weak_value(aw, 2.0, &phi, gamma, 1.0).unwrap();
            let s = fo.sensitivities().unwrap();
            let v = fo.variance_q();
            prop_assert!((s.dq2_re.value().unwrap() * gamma * gamma - v).abs() <= 1e-12 * v.abs().max(1.0));
        }
    }
}
