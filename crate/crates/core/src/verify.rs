//! Checks of the first-order predictions against the exact engine, of the
//! algebraic identities behind the compact variance forms, and of the
//! Ehrenfest rates against finite differences of evolved states.

use serde::Serialize;

use crate::hilbert::SystemSpec;
use crate::perturb::{anticommutator_with_momentum, expectation, functionals, FirstOrder, ObservablePoly};
use crate::pointer::{initial_rates, stats, Canonical, PointerState, RateBundle};
use crate::vonneumann::{evolve, measure, Potential};
use crate::{Error, Result};

/// Residuals at or below this multiple of the quantity's scale are noise.
pub const RESIDUAL_NOISE_FLOOR: f64 = 1e-11;

/// Default relative tolerance of the identity suite on a fine grid.
pub const IDENTITY_TOL: f64 = 1e-9;

/// Acceptable ratio of finite-difference mismatches under step halving.
pub const RICHARDSON_WINDOW: (f64, f64) = (3.2, 4.8);

/// A measured system, an initial pointer and its mass.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub label: String,
    pub system: SystemSpec,
    pub pointer: PointerState,
    pub mass: f64,
}

/// Post-measurement statistic compared between oracle and prediction.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    MeanQ,
    MeanP,
    VarQ,
    VarP,
    MeanPoly(ObservablePoly),
}

impl Quantity {
    pub fn name(&self) -> String {
        match self {
            Quantity::MeanQ => "mean_q".into(),
            Quantity::MeanP => "mean_p".into(),
            Quantity::VarQ => "var_q".into(),
            Quantity::VarP => "var_p".into(),
            Quantity::MeanPoly(m) => format!("mean[{}]", m.label()),
        }
    }

    fn exact(&self, state: &PointerState) -> f64 {
        match self {
            Quantity::MeanQ => stats(state, Canonical::Q).mean,
            Quantity::MeanP => stats(state, Canonical::P).mean,
            Quantity::VarQ => stats(state, Canonical::Q).variance,
            Quantity::VarP => stats(state, Canonical::P).variance,
            Quantity::MeanPoly(m) => expectation(m, state).0,
        }
    }

    fn predicted(&self, fo: &FirstOrder<'_>) -> f64 {
        match self {
            Quantity::MeanQ => fo.mean_q(),
            Quantity::MeanP => fo.mean_p(),
            Quantity::VarQ => fo.variance_q(),
            Quantity::VarP => fo.variance_p(),
            Quantity::MeanPoly(m) => fo.mean(m),
        }
    }

    /// Natural magnitude of the quantity in the initial pointer.
    fn initial_scale(&self, pointer: &PointerState) -> f64 {
        match self {
            Quantity::MeanQ => stats(pointer, Canonical::Q).variance.sqrt(),
            Quantity::MeanP => stats(pointer, Canonical::P).variance.sqrt(),
            Quantity::VarQ => stats(pointer, Canonical::Q).variance,
            Quantity::VarP => stats(pointer, Canonical::P).variance,
            Quantity::MeanPoly(m) => {
                let (mean, var) = expectation(m, pointer);
                mean.abs().max(var.sqrt())
            }
        }
    }
}

/// Log-log least-squares fit of residual against coupling.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrderFit {
    pub quantity: String,
    /// Descending.
    pub gammas: Vec<f64>,
    pub exact: Vec<f64>,
    pub predicted: Vec<f64>,
    pub residuals: Vec<f64>,
    /// Slope of `ln residual` against `ln gamma`; absent when degenerate.
    pub fitted_order: Option<f64>,
    /// All residuals sit at the noise floor: the prediction is exact.
    pub degenerate: bool,
}

pub fn convergence_order(scenario: &Scenario, quantity: &Quantity, gammas: &[f64]) -> Result<OrderFit> {
    if gammas.len() < 3 {
        return Err(Error::InvalidArgument(format!("need at least 3 couplings, got {}", gammas.len())));
    }
    if gammas.iter().any(|g| !(*g > 0.0 && g.is_finite())) {
        return Err(Error::InvalidArgument("couplings must be positive and finite".into()));
    }
    let mut gammas = gammas.to_vec();
    gammas.sort_by(|a, b| b.total_cmp(a));

    let mut exact = Vec::with_capacity(gammas.len());
    let mut predicted = Vec::with_capacity(gammas.len());
    for &g in &gammas {
        let out = measure(&scenario.system, &scenario.pointer, g)?;
        exact.push(quantity.exact(&out.state));
        let fo = FirstOrder::new(&scenario.system, &scenario.pointer, g, scenario.mass)?;
        predicted.push(quantity.predicted(&fo));
    }
    let residuals: Vec<f64> = exact.iter().zip(&predicted).map(|(e, p)| (e - p).abs()).collect();

    let scale = exact
        .iter()
        .chain(&predicted)
        .fold(quantity.initial_scale(&scenario.pointer), |m, v| m.max(v.abs()));
    let worst = residuals.iter().fold(0.0, |m: f64, r| m.max(*r));
    let degenerate = worst <= RESIDUAL_NOISE_FLOOR * scale;
    let fitted_order = if degenerate || residuals.iter().any(|&r| r <= 0.0) {
        None
    } else {
        let xs: Vec<f64> = gammas.iter().map(|g| g.ln()).collect();
        let ys: Vec<f64> = residuals.iter().map(|r| r.ln()).collect();
        Some(least_squares_slope(&xs, &ys))
    };
    Ok(OrderFit { quantity: quantity.name(), gammas, exact, predicted, residuals, fitted_order, degenerate })
}

fn least_squares_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// One identity evaluated by two routes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentityItem {
    pub name: &'static str,
    pub route_a: f64,
    pub route_b: f64,
    /// `|a - b|` over the item's scale.
    pub residual: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentityReport {
    pub items: Vec<IdentityItem>,
    /// Edge amplitude of the state in either representation, relative to
    /// its peak. Small on well-resolved grids.
    pub grid_error_estimate: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// Tolerance multiplier applied to the grid error estimate.
const GRID_ERROR_FACTOR: f64 = 1e3;

pub fn identity_suite(pointer: &PointerState, mass: f64) -> Result<IdentityReport> {
    let hbar = pointer.hbar();
    let sq = stats(pointer, Canonical::Q);
    let sp = stats(pointer, Canonical::P);
    let rates = initial_rates(pointer, mass)?;
    let (q, p) = (ObservablePoly::q(), ObservablePoly::p());
    let (fq, fp) = (functionals(&q, pointer), functionals(&p, pointer));
    let (std_q, std_p) = (sq.variance.sqrt(), sp.variance.sqrt());

    let grid_error_estimate = grid_error_estimate(pointer);
    let tolerance = IDENTITY_TOL.max(GRID_ERROR_FACTOR * grid_error_estimate);

    let mut items = Vec::new();
    let mut push = |name, a: f64, b: f64, scale: f64| {
        let residual = (a - b).abs() / a.abs().max(b.abs()).max(scale);
        items.push(IdentityItem { name, route_a: a, route_b: b, residual, passed: residual <= tolerance });
    };
    push("F(q) = 0", fq.f.norm(), 0.0, hbar * (std_q + sq.mean.abs()));
    push("F(p) = 0", fp.f.norm(), 0.0, hbar * (std_p + sp.mean.abs()));
    push("G(q) = (2m/3) dq3/dt", fq.g, 2.0 * mass / 3.0 * rates.skew_rate_q, sq.variance * std_p);
    push("G(p) = 2 p3", fp.g, 2.0 * sp.central3, sp.variance * std_p);
    push(
        "<{q,p}>: position vs momentum route",
        rates.anticom_qp,
        anticommutator_with_momentum(&q, pointer),
        std_q * std_p,
    );
    push(
        "<{q^2,p}>: position vs momentum route",
        rates.anticom_q2p,
        anticommutator_with_momentum(&ObservablePoly::power(Canonical::Q, 2), pointer),
        sq.raw2 * std_p,
    );
    let reassembled = RateBundle::assemble(mass, sq.mean, sp.mean, sq.raw2, rates.anticom_qp, rates.anticom_q2p);
    push(
        "d var_q/dt = (<{q,p}> - 2<q><p>)/m",
        rates.var_rate_q,
        reassembled.var_rate_q,
        std_q * std_p / mass,
    );
    push(
        "d q3/dt by chain rule",
        rates.skew_rate_q,
        reassembled.skew_rate_q,
        sq.variance * std_p / mass,
    );

    let passed = items.iter().all(|i| i.passed);
    Ok(IdentityReport { items, grid_error_estimate, tolerance, passed })
}

fn grid_error_estimate(pointer: &PointerState) -> f64 {
    let edge_ratio = |amps: &[f64], edges: &[usize]| {
        let peak = amps.iter().fold(0.0, |m: f64, a| m.max(*a));
        edges.iter().map(|&k| amps[k]).fold(0.0, f64::max) / peak
    };
    let n = pointer.samples().len();
    let q_amps: Vec<f64> = pointer.samples().iter().map(|z| z.norm()).collect();
    let p_amps: Vec<f64> = pointer.momentum_amplitudes().iter().map(|z| z.norm()).collect();
    // FFT order: the Nyquist pair sits at n/2 - 1 and n/2
    edge_ratio(&q_amps, &[0, n - 1]).max(edge_ratio(&p_amps, &[n / 2 - 1, n / 2]))
}

/// Analytic rate against central differences at two step sizes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateItem {
    pub name: &'static str,
    pub analytic: f64,
    pub fd: f64,
    pub fd_half: f64,
    pub mismatch: f64,
    pub mismatch_half: f64,
    /// `mismatch / mismatch_half`; absent when the mismatch is at the
    /// round-off floor (the finite difference is exact).
    pub richardson: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateSuiteReport {
    pub potential: Potential,
    pub dt: f64,
    pub items: Vec<RateItem>,
}

impl RateSuiteReport {
    pub fn item(&self, name: &str) -> Option<&RateItem> {
        self.items.iter().find(|i| i.name == name)
    }

    /// Every mismatch within `tol` and every defined Richardson ratio in
    /// [`RICHARDSON_WINDOW`].
    pub fn passes(&self, tol: f64) -> bool {
        self.items.iter().all(|i| {
            i.mismatch <= tol
                && i.richardson.is_none_or(|r| (RICHARDSON_WINDOW.0..=RICHARDSON_WINDOW.1).contains(&r))
        })
    }
}

pub const RATE_VAR_Q: &str = "d var_q/dt";
pub const RATE_Q3: &str = "d q3/dt";
pub const RATE_Q2: &str = "d<q^2>/dt";

/// Mismatches below this multiple of the rate scale are round-off.
const FD_NOISE_FLOOR: f64 = 1e-9;

pub fn rate_suite(pointer: &PointerState, potential: &Potential, mass: f64, dt: f64) -> Result<RateSuiteReport> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
    }
    let rates = initial_rates(pointer, mass)?;
    let v = potential.sample(pointer.grid())?;

    // (var q, q3, <q^2>) after one step of +h and -h
    let central_difference = |h: f64| -> Result<[f64; 3]> {
        let fwd = stats(&evolve(pointer, &v, mass, h, 1)?, Canonical::Q);
        let bwd = stats(&evolve(pointer, &v, mass, -h, 1)?, Canonical::Q);
        Ok([
            (fwd.variance - bwd.variance) / (2.0 * h),
            (fwd.central3 - bwd.central3) / (2.0 * h),
            (fwd.raw2 - bwd.raw2) / (2.0 * h),
        ])
    };
    let full = central_difference(dt)?;
    let half = central_difference(0.5 * dt)?;

    let sq = stats(pointer, Canonical::Q);
    let sp = stats(pointer, Canonical::P);
    let rate_scale = sq.variance.sqrt() * sp.variance.sqrt() / mass;
    let analytic = [rates.var_rate_q, rates.skew_rate_q, rates.anticom_qp / mass];
    let scales = [rate_scale, rate_scale * sq.variance, rate_scale.max(rates.anticom_qp.abs() / mass)];
    let names = [RATE_VAR_Q, RATE_Q3, RATE_Q2];

    let items = (0..3)
        .map(|k| {
            let mismatch = (full[k] - analytic[k]).abs();
            let mismatch_half = (half[k] - analytic[k]).abs();
            let floor = FD_NOISE_FLOOR * scales[k].max(analytic[k].abs());
            RateItem {
                name: names[k],
                analytic: analytic[k],
                fd: full[k],
                fd_half: half[k],
                mismatch,
                mismatch_half,
                richardson: (mismatch > floor && mismatch_half > 0.0).then(|| mismatch / mismatch_half),
            }
        })
        .collect();
    Ok(RateSuiteReport { potential: potential.clone(), dt, items })
}
