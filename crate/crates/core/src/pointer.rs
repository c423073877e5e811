//! Grid-represented pointer wavefunctions, their position and momentum
//! moments, and the Ehrenfest rates of the initial state.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::{spectral, Error, Result, C64};

/// Uniform periodic position grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridSpec {
    pub n_points: usize,
    pub center: f64,
    pub extent: f64,
    pub hbar: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { n_points: 4096, center: 0.0, extent: 40.0, hbar: 1.0 }
    }
}

impl GridSpec {
    pub fn new(n_points: usize, extent: f64) -> Self {
        Self { n_points, extent, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_points < 64 || !self.n_points.is_power_of_two() {
            return Err(Error::InvalidGrid(format!(
                "n_points must be a power of two >= 64, got {}",
                self.n_points
            )));
        }
        if !(self.extent > 0.0 && self.extent.is_finite()) {
            return Err(Error::InvalidGrid(format!("extent must be positive, got {}", self.extent)));
        }
        if !self.center.is_finite() {
            return Err(Error::InvalidGrid(format!("center must be finite, got {}", self.center)));
        }
        if !(self.hbar > 0.0 && self.hbar.is_finite()) {
            return Err(Error::InvalidGrid(format!("hbar must be positive, got {}", self.hbar)));
        }
        Ok(())
    }

    pub fn dq(&self) -> f64 {
        self.extent / self.n_points as f64
    }

    pub fn dp(&self) -> f64 {
        self.hbar * 2.0 * PI / self.extent
    }

    pub fn q_start(&self) -> f64 {
        self.center - 0.5 * self.extent
    }

    pub fn q(&self, k: usize) -> f64 {
        self.q_start() + k as f64 * self.dq()
    }

    pub fn positions(&self) -> Vec<f64> {
        (0..self.n_points).map(|k| self.q(k)).collect()
    }

    /// Momenta in FFT order.
    pub fn momenta(&self) -> Vec<f64> {
        let dp = self.dp();
        (0..self.n_points)
            .map(|k| spectral::wave_index(k, self.n_points) as f64 * dp)
            .collect()
    }
}

/// Parametric pointer families.
#[derive(Debug, Clone, PartialEq)]
pub enum StateFamily {
    /// `exp(-(q-q0)^2 / 4 sigma^2 + i p0 q / hbar)`.
    Gaussian { sigma: f64, q0: f64, p0: f64 },
    /// Gaussian with quadratic phase `exp(i c q^2)`.
    Chirped { sigma: f64, c: f64 },
    /// Gaussian with cubic phase `exp(i b q^3)`.
    Cubic { sigma: f64, b: f64 },
    /// Momentum profile `(1 + lambda p) exp(-p^2 / 4 s^2)`.
    MomentumSkewed { s: f64, lambda: f64 },
    /// Position samples on the grid, already (nearly) normalized.
    Tabulated { samples: Vec<C64> },
}

/// Normalized pointer wavefunction on a [`GridSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct PointerState {
    grid: GridSpec,
    samples: Vec<C64>,
}

/// Amplitude at either grid end relative to the peak must stay below this.
pub const BOUNDARY_DECAY: f64 = 1e-10;

const NORM_SLACK: f64 = 1e-6;

pub fn build_pointer(family: &StateFamily, grid: GridSpec) -> Result<PointerState> {
    grid.validate()?;
    let positive = |name: &str, v: f64| {
        if v > 0.0 && v.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")))
        }
    };
    let hbar = grid.hbar;
    let envelope = |q: f64, sigma: f64| (-(q * q) / (4.0 * sigma * sigma)).exp();
    let samples = match *family {
        StateFamily::Gaussian { sigma, q0, p0 } => {
            positive("sigma", sigma)?;
            grid.positions()
                .into_iter()
                .map(|q| C64::from_polar(envelope(q - q0, sigma), p0 * q / hbar))
                .collect()
        }
        StateFamily::Chirped { sigma, c } => {
            positive("sigma", sigma)?;
            grid.positions().into_iter().map(|q| C64::from_polar(envelope(q, sigma), c * q * q)).collect()
        }
        StateFamily::Cubic { sigma, b } => {
            positive("sigma", sigma)?;
            grid.positions().into_iter().map(|q| C64::from_polar(envelope(q, sigma), b * q * q * q)).collect()
        }
        StateFamily::MomentumSkewed { s, lambda } => {
            positive("s", s)?;
            let amps: Vec<C64> = grid
                .momenta()
                .into_iter()
                .map(|p| C64::new((1.0 + lambda * p) * envelope(p, s), 0.0))
                .collect();
            from_momentum(&grid, amps)
        }
        StateFamily::Tabulated { ref samples } => {
            return PointerState::from_samples(grid, samples.clone());
        }
    };
    PointerState::normalized(grid, samples)
}

/// Position samples from momentum amplitudes given in FFT order.
fn from_momentum(grid: &GridSpec, mut amps: Vec<C64>) -> Vec<C64> {
    let q0 = grid.q_start();
    for (z, p) in amps.iter_mut().zip(grid.momenta()) {
        *z *= C64::from_polar(1.0, p * q0 / grid.hbar);
    }
    spectral::inverse(&mut amps);
    // overall scale is fixed later by normalization
    amps
}

impl PointerState {
    /// Accepts samples whose norm is within `1e-6` of one and renormalizes.
    pub fn from_samples(grid: GridSpec, samples: Vec<C64>) -> Result<Self> {
        grid.validate()?;
        if samples.len() != grid.n_points {
            return Err(Error::DimensionMismatch {
                what: "pointer samples",
                got: samples.len(),
                expected: grid.n_points,
            });
        }
        let norm = norm_sq(&samples, grid.dq()).sqrt();
        if !(norm.is_finite() && (norm - 1.0).abs() <= NORM_SLACK + 1e-12) {
            return Err(Error::NonNormalized { which: "pointer", norm });
        }
        Self::normalized(grid, samples)
    }

    /// Normalizes arbitrary nonzero samples and checks boundary decay.
    pub(crate) fn normalized(grid: GridSpec, mut samples: Vec<C64>) -> Result<Self> {
        let norm = norm_sq(&samples, grid.dq()).sqrt();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::NonNormalized { which: "pointer", norm });
        }
        for z in samples.iter_mut() {
            *z /= norm;
        }
        let state = Self { grid, samples };
        let ratio = state.boundary_ratio();
        if !(ratio <= BOUNDARY_DECAY) {
            return Err(Error::BoundaryLeak { ratio });
        }
        Ok(state)
    }

    /// Wraps samples as-is; callers guarantee normalization.
    pub(crate) fn from_raw(grid: GridSpec, samples: Vec<C64>) -> Self {
        Self { grid, samples }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn samples(&self) -> &[C64] {
        &self.samples
    }

    pub fn hbar(&self) -> f64 {
        self.grid.hbar
    }

    /// `sum |phi(q_k)|^2 dq`.
    pub fn norm_sq(&self) -> f64 {
        norm_sq(&self.samples, self.grid.dq())
    }

    /// Momentum amplitudes `phi~(p_k)` in FFT order, continuum normalized so
    /// that `sum |phi~|^2 dp` equals the position-space norm.
    pub fn momentum_amplitudes(&self) -> Vec<C64> {
        let g = &self.grid;
        let mut buf = self.samples.clone();
        spectral::forward(&mut buf);
        let scale = g.dq() / (2.0 * PI * g.hbar).sqrt();
        let q0 = g.q_start();
        for (z, p) in buf.iter_mut().zip(g.momenta()) {
            *z *= C64::from_polar(scale, -p * q0 / g.hbar);
        }
        buf
    }

    /// Largest edge amplitude relative to the peak amplitude.
    pub fn boundary_ratio(&self) -> f64 {
        let peak = self.samples.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let edge = self.samples[0].norm().max(self.samples[self.samples.len() - 1].norm());
        edge / peak
    }

    /// `p phi` evaluated spectrally, in position representation.
    pub fn apply_momentum(&self) -> Vec<C64> {
        spectral::apply_diagonal(&self.samples, &self.grid.momenta(), |p| C64::new(p, 0.0))
    }

    /// `exp(-i shift p / hbar) phi`, i.e. `phi(q - shift)`.
    pub fn translated_samples(&self, shift: f64) -> Vec<C64> {
        let hbar = self.grid.hbar;
        spectral::apply_diagonal(&self.samples, &self.grid.momenta(), |p| C64::from_polar(1.0, -shift * p / hbar))
    }
}

fn norm_sq(samples: &[C64], dq: f64) -> f64 {
    samples.iter().map(|z| z.norm_sqr()).sum::<f64>() * dq
}

/// Which canonical pointer variable a moment refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Canonical {
    Q,
    P,
}

/// Moments of `q` or `p` in a pointer state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MomentBundle {
    pub observable: Canonical,
    pub mean: f64,
    pub raw2: f64,
    pub raw3: f64,
    pub variance: f64,
    /// Third central moment (`q_3` or `p_3`).
    pub central3: f64,
}

/// Position moments by real-space quadrature, momentum moments by
/// quadrature over `|phi~(p)|^2`.
pub fn stats(state: &PointerState, which: Canonical) -> MomentBundle {
    match which {
        Canonical::Q => {
            let w: Vec<f64> = state.samples.iter().map(|z| z.norm_sqr()).collect();
            moments(Canonical::Q, &w, &state.grid.positions())
        }
        Canonical::P => {
            let w: Vec<f64> = state.momentum_amplitudes().iter().map(|z| z.norm_sqr()).collect();
            moments(Canonical::P, &w, &state.grid.momenta())
        }
    }
}

/// Moments of a discrete density (weights need not be normalized).
pub(crate) fn moments(observable: Canonical, weights: &[f64], values: &[f64]) -> MomentBundle {
    let total: f64 = weights.iter().sum();
    let mean = weights.iter().zip(values).map(|(w, x)| w * x).sum::<f64>() / total;
    let (mut raw2, mut raw3, mut variance, mut central3) = (0.0, 0.0, 0.0, 0.0);
    for (w, &x) in weights.iter().zip(values) {
        let d = x - mean;
        raw2 += w * x * x;
        raw3 += w * x * x * x;
        variance += w * d * d;
        central3 += w * d * d * d;
    }
    MomentBundle {
        observable,
        mean,
        raw2: raw2 / total,
        raw3: raw3 / total,
        variance: variance / total,
        central3: central3 / total,
    }
}

/// Pre-interaction rates of the position moments for `H = p^2/2m + V(q)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateBundle {
    pub mass: f64,
    pub mean_q: f64,
    pub mean_p: f64,
    pub raw2_q: f64,
    /// `<{q, p}>`
    pub anticom_qp: f64,
    /// `<{q^2, p}>`
    pub anticom_q2p: f64,
    /// `d(var q)/dt`
    pub var_rate_q: f64,
    /// `d q_3 / dt`
    pub skew_rate_q: f64,
}

impl RateBundle {
    /// Assembles the rates from the static expectations. `V` drops out
    /// because it commutes with every power of `q`.
    pub fn assemble(mass: f64, mean_q: f64, mean_p: f64, raw2_q: f64, anticom_qp: f64, anticom_q2p: f64) -> Self {
        let var_rate_q = (anticom_qp - 2.0 * mean_q * mean_p) / mass;
        let skew_rate_q = 1.5 / mass * anticom_q2p
            - 3.0 / mass * (mean_p * raw2_q + mean_q * anticom_qp)
            + 6.0 / mass * mean_q * mean_q * mean_p;
        Self { mass, mean_q, mean_p, raw2_q, anticom_qp, anticom_q2p, var_rate_q, skew_rate_q }
    }
}

pub fn initial_rates(state: &PointerState, mass: f64) -> Result<RateBundle> {
    if !(mass > 0.0 && mass.is_finite()) {
        return Err(Error::InvalidArgument(format!("mass must be positive, got {mass}")));
    }
    let dq = state.grid.dq();
    let p_phi = state.apply_momentum();
    let (mut qp, mut q2p) = (C64::new(0.0, 0.0), C64::new(0.0, 0.0));
    for ((z, pz), q) in state.samples.iter().zip(&p_phi).zip(state.grid.positions()) {
        let c = z.conj() * pz;
        qp += c * q;
        q2p += c * (q * q);
    }
    let sq = stats(state, Canonical::Q);
    let sp = stats(state, Canonical::P);
    Ok(RateBundle::assemble(mass, sq.mean, sp.mean, sq.raw2, 2.0 * qp.re * dq, 2.0 * q2p.re * dq))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid() -> GridSpec {
        GridSpec::default()
    }

    fn gaussian(sigma: f64) -> PointerState {
        build_pointer(&StateFamily::Gaussian { sigma, q0: 0.0, p0: 0.0 }, grid()).unwrap()
    }

    /// Composite Simpson rule on [-a, a] with `n` (even) intervals.
    fn simpson(f: impl Fn(f64) -> f64, a: f64, n: usize) -> f64 {
        let h = 2.0 * a / n as f64;
        let mut s = f(-a) + f(a);
        for i in 1..n {
            let x = -a + i as f64 * h;
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(x);
        }
        s * h / 3.0
    }

    /// For `phi = A(q) exp(i S(q))` with real `A`, `<{f(q), p}> = 2 hbar
    /// int f |A|^2 S' dq`. Independent of any FFT.
    fn phase_anticommutator(sigma: f64, f: impl Fn(f64) -> f64, ds: impl Fn(f64) -> f64) -> f64 {
        let dens = |q: f64| (-(q * q) / (2.0 * sigma * sigma)).exp();
        let norm = simpson(dens, 20.0, 20_000);
        2.0 * simpson(|q| f(q) * dens(q) * ds(q), 20.0, 20_000) / norm
    }

    #[test]
    fn grid_validation() {
        assert!(GridSpec::new(100, 40.0).validate().is_err());
        assert!(GridSpec::new(32, 40.0).validate().is_err());
        assert!(GridSpec::new(64, 0.0).validate().is_err());
        assert!(GridSpec::new(64, 40.0).validate().is_ok());
    }

    #[test]
    fn gaussian_moments() {
        let s = gaussian(1.0);
        assert!((s.norm_sq() - 1.0).abs() < 1e-14);
        let q = stats(&s, Canonical::Q);
        assert!((q.variance - 1.0).abs() < 1e-12);
        assert!(q.central3.abs() < 1e-12);
        let p = stats(&s, Canonical::P);
        assert!((p.variance - 0.25).abs() < 1e-12);
        assert!(p.central3.abs() < 1e-12);
    }

    #[test]
    fn chirp_leaves_position_density_alone() {
        let s = build_pointer(&StateFamily::Chirped { sigma: 1.0, c: 0.25 }, grid()).unwrap();
        let q = stats(&s, Canonical::Q);
        let p = stats(&s, Canonical::P);
        assert!((q.variance - 1.0).abs() < 1e-12);
        assert!(p.mean.abs() < 1e-12);
        // hbar^2/4 sigma^2 + 4 hbar^2 c^2 sigma^2
        assert!((p.variance - 0.5).abs() < 1e-12);
    }

    #[test]
    fn momentum_skewed_matches_gaussian_integrals() {
        let (s, lam) = (1.0_f64, 0.5_f64);
        let n = 1.0 + lam * lam * s * s;
        let m1 = 2.0 * lam * s * s / n;
        let m2 = (s * s + 3.0 * lam * lam * s.powi(4)) / n;
        let m3 = 6.0 * lam * s.powi(4) / n;
        let var = m2 - m1 * m1;
        let c3 = m3 - 3.0 * m1 * m2 + 2.0 * m1.powi(3);
        assert!((m1 - 0.8).abs() < 1e-15 && (var - 0.76).abs() < 1e-15 && (c3 - 0.064).abs() < 1e-15);

        let state = build_pointer(&StateFamily::MomentumSkewed { s, lambda: lam }, grid()).unwrap();
        let p = stats(&state, Canonical::P);
        assert!((p.mean - m1).abs() < 1e-12, "{}", p.mean);
        assert!((p.variance - var).abs() < 1e-12, "{}", p.variance);
        assert!((p.central3 - c3).abs() < 1e-12, "{}", p.central3);
    }

    #[test]
    fn cubic_phase_mean_momentum() {
        let b = 0.05;
        let s = build_pointer(&StateFamily::Cubic { sigma: 1.0, b }, grid()).unwrap();
        let oracle = phase_anticommutator(1.0, |_| 0.5, |q| 3.0 * b * q * q);
        assert!((oracle - 0.15).abs() < 1e-10);
        assert!((stats(&s, Canonical::P).mean - oracle).abs() < 1e-10);
    }

    #[test]
    fn tabulated_near_normalized_is_accepted() {
        let base = gaussian(1.0);
        let scaled: Vec<C64> = base.samples().iter().map(|z| z * 0.999999).collect();
        let s = build_pointer(&StateFamily::Tabulated { samples: scaled }, grid()).unwrap();
        assert!((s.norm_sq() - 1.0).abs() < 1e-14);

        let bad: Vec<C64> = base.samples().iter().map(|z| z * 0.9).collect();
        assert!(matches!(
            build_pointer(&StateFamily::Tabulated { samples: bad }, grid()),
            Err(Error::NonNormalized { .. })
        ));
    }

    #[test]
    fn wide_state_leaks() {
        let err = build_pointer(&StateFamily::Gaussian { sigma: 5.0, q0: 0.0, p0: 0.0 }, grid()).unwrap_err();
        assert!(matches!(err, Error::BoundaryLeak { .. }));
    }

    #[test]
    fn real_gaussian_has_no_rates() {
        let r = initial_rates(&gaussian(1.0), 1.0).unwrap();
        assert!(r.var_rate_q.abs() < 1e-12);
        assert!(r.skew_rate_q.abs() < 1e-12);
    }

    #[test]
    fn chirped_rates_match_phase_quadrature() {
        let c = 0.25;
        let qp = phase_anticommutator(1.0, |q| q, |q| 2.0 * c * q);
        assert!((qp - 4.0 * c).abs() < 1e-10);
        let s = build_pointer(&StateFamily::Chirped { sigma: 1.0, c }, grid()).unwrap();
        let r = initial_rates(&s, 1.0).unwrap();
        assert!((r.anticom_qp - qp).abs() < 1e-10);
        assert!((r.var_rate_q - 1.0).abs() < 1e-10);
        assert!(r.skew_rate_q.abs() < 1e-10);
    }

    #[test]
    fn cubic_rates_match_phase_quadrature() {
        let b = 0.05;
        let q2p = phase_anticommutator(1.0, |q| q * q, |q| 3.0 * b * q * q);
        let mean_p = phase_anticommutator(1.0, |_| 0.5, |q| 3.0 * b * q * q);
        assert!((q2p - 18.0 * b).abs() < 1e-10);
        // <q> = 0 and <q^2> = 1 for the unit Gaussian envelope
        let skew = 1.5 * q2p - 3.0 * mean_p * 1.0;
        assert!((skew - 0.9).abs() < 1e-10);

        let s = build_pointer(&StateFamily::Cubic { sigma: 1.0, b }, grid()).unwrap();
        let r = initial_rates(&s, 1.0).unwrap();
        assert!((r.anticom_q2p - q2p).abs() < 1e-10);
        assert!(r.var_rate_q.abs() < 1e-10);
        assert!((r.skew_rate_q - skew).abs() < 1e-10);
        // mass scales rates as 1/m
        let r2 = initial_rates(&s, 2.0).unwrap();
        assert!((r2.skew_rate_q - skew / 2.0).abs() < 1e-10);
    }

    #[test]
    fn non_positive_mass_rejected() {
        assert!(initial_rates(&gaussian(1.0), 0.0).is_err());
    }

    fn family_strategy() -> impl Strategy<Value = StateFamily> {
        prop_oneof![
            (0.5..1.5f64, -2.0..2.0f64, -2.0..2.0f64).prop_map(|(sigma, q0, p0)| StateFamily::Gaussian { sigma, q0, p0 }),
            (0.5..1.5f64, -0.5..0.5f64).prop_map(|(sigma, c)| StateFamily::Chirped { sigma, c }),
            (0.5..1.5f64, -0.08..0.08f64).prop_map(|(sigma, b)| StateFamily::Cubic { sigma, b }),
            (0.5..2.0f64, -1.0..1.0f64).prop_map(|(s, lambda)| StateFamily::MomentumSkewed { s, lambda }),
        ]
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn parseval(family in family_strategy()) {
            let s = build_pointer(&family, grid()).unwrap();
            let pn: f64 = s.momentum_amplitudes().iter().map(|z| z.norm_sqr()).sum::<f64>() * s.grid().dp();
            prop_assert!((pn - s.norm_sq()).abs() <= 1e-12);
        }

        #[test]
        fn moment_bundle_invariants(family in family_strategy()) {
            let s = build_pointer(&family, grid()).unwrap();
            for which in [Canonical::Q, Canonical::P] {
                let m = stats(&s, which);
                prop_assert!(m.variance >= 0.0);
                prop_assert!((m.variance - (m.raw2 - m.mean * m.mean)).abs() <= 1e-12 * m.raw2.max(1.0));
                let assembled = m.raw3 - 3.0 * m.mean * m.raw2 + 2.0 * m.mean.powi(3);
                let scale = m.raw3.abs().max(m.mean.abs() * m.raw2).max(m.variance.powf(1.5));
                prop_assert!((m.central3 - assembled).abs() <= 1e-10 * scale);
            }
        }

        #[test]
        fn stats_ignore_global_phase(family in family_strategy(), theta in 0.0..6.3f64) {
            let s = build_pointer(&family, grid()).unwrap();
            let rot: Vec<C64> = s.samples().iter().map(|z| z * C64::from_polar(1.0, theta)).collect();
            let r = PointerState::from_samples(grid(), rot).unwrap();
            for which in [Canonical::Q, Canonical::P] {
                let (a, b) = (stats(&s, which), stats(&r, which));
                for (x, y) in [(a.mean, b.mean), (a.variance, b.variance), (a.central3, b.central3), (a.raw2, b.raw2), (a.raw3, b.raw3)] {
                    prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
                }
            }
        }

        #[test]
        fn one_step_translation_covariance(family in family_strategy()) {
            let s = build_pointer(&family, grid()).unwrap();
            let mut shifted = s.samples().to_vec();
            shifted.rotate_right(1);
            let t = PointerState::from_samples(grid(), shifted).unwrap();
            let (a, b) = (stats(&s, Canonical::Q), stats(&t, Canonical::Q));
            prop_assert!((b.mean - a.mean - grid().dq()).abs() <= 1e-10);
            prop_assert!((b.variance - a.variance).abs() <= 1e-10);
            prop_assert!((b.central3 - a.central3).abs() <= 1e-10);
        }

        #[test]
        fn real_states_have_vanishing_currents(
            sigma in 0.5..1.5f64, q0 in -2.0..2.0f64, theta in 0.0..6.3f64
        ) {
            let g = grid();
            let samples: Vec<C64> = g.positions().into_iter()
                .map(|q| C64::from_polar((-(q - q0).powi(2) / (4.0 * sigma * sigma)).exp() * (1.0 + 0.3 * (q - q0)), theta))
                .collect();
            let s = PointerState::normalized(g, samples).unwrap();
            let r = initial_rates(&s, 1.0).unwrap();
            prop_assert!((r.anticom_qp - 2.0 * r.mean_q * r.mean_p).abs() <= 1e-10);
            prop_assert!(r.skew_rate_q.abs() <= 1e-10);
        }

        #[test]
        fn rate_bundle_invariants(family in family_strategy(), mass in 0.5..3.0f64) {
            let s = build_pointer(&family, grid()).unwrap();
            let r = initial_rates(&s, mass).unwrap();
            prop_assert!(rel(r.var_rate_q, (r.anticom_qp - 2.0 * r.mean_q * r.mean_p) / mass) <= 1e-12
                || r.var_rate_q.abs() < 1e-14);
        }
    }
}
