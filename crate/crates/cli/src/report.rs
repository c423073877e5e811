//! Report assembly for every subcommand.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use weakvar::hilbert::{weak_moment, Spectrum, SystemDiagnostics};
use weakvar::perturb::{expectation, ControlAssessment, FirstOrder, SensitivityBundle};
use weakvar::pointer::{stats, Canonical, MomentBundle, RateBundle};
use weakvar::verify::{convergence_order, identity_suite, rate_suite, IdentityReport, OrderFit, Quantity, RateSuiteReport, Scenario};
use weakvar::vonneumann::measure;

use crate::config::{Loaded, RawScenario};
use crate::error::{CliError, CliResult};

/// Differences at or below this multiple of the quantity's scale are
/// flagged as exact agreement.
pub const DEGENERATE_REL: f64 = 1e-11;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub quantity: String,
    pub initial: f64,
    pub exact: f64,
    pub predicted: f64,
    pub abs_diff: f64,
    pub degenerate: bool,
}

impl Comparison {
    fn new(quantity: impl Into<String>, initial: f64, exact: f64, predicted: f64, scale: f64) -> Self {
        let abs_diff = (exact - predicted).abs();
        let scale = scale.max(exact.abs()).max(predicted.abs());
        Self { quantity: quantity.into(), initial, exact, predicted, abs_diff, degenerate: abs_diff <= DEGENERATE_REL * scale }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeasurementReport {
    pub scenario: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub generated_at_unix: Option<u64>,
    pub gamma: f64,
    pub mass: f64,
    pub hbar: f64,
    pub weak_value: Complex64,
    pub postselect_prob: f64,
    pub comparisons: Vec<Comparison>,
    pub control_q: ControlAssessment,
    pub control_p: ControlAssessment,
    pub optimal_target_q: f64,
    pub optimal_target_p: f64,
    pub sensitivities: SensitivityBundle,
    pub weakness: f64,
    pub truncation_warning: bool,
}

fn core(key: &str) -> impl Fn(weakvar::Error) -> CliError + '_ {
    move |e| CliError::from_core(key, e)
}

fn first_order(s: &Loaded) -> CliResult<FirstOrder<'_>> {
    FirstOrder::new(&s.system, &s.pointer, s.gamma(), s.mass()).map_err(core("constants"))
}

fn canonical_comparisons(initial: [&MomentBundle; 2], exact: [&MomentBundle; 2], fo: &FirstOrder<'_>) -> Vec<Comparison> {
    let [q0, p0] = initial;
    let [q1, p1] = exact;
    let (sq, sp) = (q0.variance.sqrt(), p0.variance.sqrt());
    vec![
        Comparison::new("mean_q", q0.mean, q1.mean, fo.mean_q(), sq),
        Comparison::new("mean_p", p0.mean, p1.mean, fo.mean_p(), sp),
        Comparison::new("var_q", q0.variance, q1.variance, fo.variance_q(), q0.variance),
        Comparison::new("var_p", p0.variance, p1.variance, fo.variance_p(), p0.variance),
    ]
}

pub fn simulate(s: &Loaded, timestamp: Option<u64>) -> CliResult<MeasurementReport> {
    let fo = first_order(s)?;
    let bundle = fo.bundle(&s.observables).map_err(core("constants.gamma"))?;
    let out = measure(&s.system, &s.pointer, s.gamma()).map_err(core("constants.gamma"))?;
    let initial = [fo.initial(Canonical::Q), fo.initial(Canonical::P)];
    let (eq, ep) = (stats(&out.state, Canonical::Q), stats(&out.state, Canonical::P));
    let mut comparisons = canonical_comparisons(initial, [&eq, &ep], &fo);
    for (m, pred) in s.observables.iter().zip(&bundle.generic) {
        let (mean, var) = expectation(m, &out.state);
        let scale = pred.initial_mean.abs().max(pred.initial_variance.sqrt());
        comparisons.push(Comparison::new(format!("mean[{}]", pred.observable), pred.initial_mean, mean, pred.mean, scale));
        comparisons.push(Comparison::new(
            format!("var[{}]", pred.observable),
            pred.initial_variance,
            var,
            pred.variance,
            pred.initial_variance,
        ));
    }
    let eps = s.config.run.epsilon;
    Ok(MeasurementReport {
        scenario: s.label.clone(),
        generated_at_unix: timestamp,
        gamma: s.gamma(),
        mass: s.mass(),
        hbar: s.pointer.hbar(),
        weak_value: fo.weak_value(),
        postselect_prob: out.postselect_prob,
        comparisons,
        control_q: bundle.control_q,
        control_p: bundle.control_p,
        optimal_target_q: fo.optimal_control_target(Canonical::Q, eps).map_err(core("run.epsilon"))?,
        optimal_target_p: fo.optimal_control_target(Canonical::P, eps).map_err(core("run.epsilon"))?,
        sensitivities: fo.sensitivities().map_err(core("constants.gamma"))?,
        weakness: fo.weakness(),
        truncation_warning: bundle.truncation_warning,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PredictionReport {
    pub scenario: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub generated_at_unix: Option<u64>,
    pub gamma: f64,
    pub initial_q: MomentBundle,
    pub initial_p: MomentBundle,
    pub rates: RateBundle,
    pub prediction: weakvar::perturb::PredictionBundle,
    pub optimal_target_q: f64,
    pub optimal_target_p: f64,
    pub sensitivities: SensitivityBundle,
    pub weakness: f64,
}

pub fn predict(s: &Loaded, timestamp: Option<u64>) -> CliResult<PredictionReport> {
    let fo = first_order(s)?;
    let eps = s.config.run.epsilon;
    Ok(PredictionReport {
        scenario: s.label.clone(),
        generated_at_unix: timestamp,
        gamma: s.gamma(),
        initial_q: *fo.initial(Canonical::Q),
        initial_p: *fo.initial(Canonical::P),
        rates: *fo.rates(),
        prediction: fo.bundle(&s.observables).map_err(core("constants.gamma"))?,
        optimal_target_q: fo.optimal_control_target(Canonical::Q, eps).map_err(core("run.epsilon"))?,
        optimal_target_p: fo.optimal_control_target(Canonical::P, eps).map_err(core("run.epsilon"))?,
        sensitivities: fo.sensitivities().map_err(core("constants.gamma"))?,
        weakness: fo.weakness(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeakValueReport {
    pub scenario: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub generated_at_unix: Option<u64>,
    pub weak_value: Complex64,
    /// `(A^n)_w` for `n = 1, 2, ...`
    pub weak_moments: Vec<Complex64>,
    pub eigenvalues: Vec<f64>,
    pub diagnostics: SystemDiagnostics,
}

pub fn weak_value(s: &Loaded, orders: u32, timestamp: Option<u64>) -> CliResult<WeakValueReport> {
    let weak_moments = (1..=orders)
        .map(|n| weak_moment(&s.system, n).map_err(core("system")))
        .collect::<CliResult<Vec<_>>>()?;
    Ok(WeakValueReport {
        scenario: s.label.clone(),
        generated_at_unix: timestamp,
        weak_value: s.system.weak_value().map_err(core("system"))?,
        weak_moments,
        eigenvalues: Spectrum::of(s.system.observable()).eigenvalues.iter().copied().collect(),
        diagnostics: s.system.diagnostics(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub scenario: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub generated_at_unix: Option<u64>,
    pub identities: IdentityReport,
    pub rates: RateSuiteReport,
    /// Empty when fewer than three couplings are configured.
    pub orders: Vec<OrderFit>,
}

pub fn verify(s: &Loaded, timestamp: Option<u64>) -> CliResult<VerifyReport> {
    let mass = s.mass();
    let identities = identity_suite(&s.pointer, mass).map_err(core("pointer"))?;
    let rates = rate_suite(&s.pointer, &s.config.run.potential, mass, s.config.run.dt).map_err(core("run"))?;
    let gammas = &s.config.run.gammas;
    let orders = if gammas.len() >= 3 {
        let scenario = Scenario { label: s.label.clone(), system: s.system.clone(), pointer: s.pointer.clone(), mass };
        let mut quantities = vec![Quantity::MeanQ, Quantity::MeanP, Quantity::VarQ, Quantity::VarP];
        quantities.extend(s.observables.iter().cloned().map(Quantity::MeanPoly));
        quantities
            .par_iter()
            .map(|q| convergence_order(&scenario, q, gammas).map_err(core("run.gammas")))
            .collect::<CliResult<Vec<_>>>()?
    } else {
        Vec::new()
    };
    Ok(VerifyReport { scenario: s.label.clone(), generated_at_unix: timestamp, identities, rates, orders })
}

/// One sweep point. Failed points keep their coordinates and the message.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub index: usize,
    pub parameter: String,
    pub value: f64,
    pub outcome: Result<SweepPoint, RowError>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RowError {
    pub message: String,
    pub exit_code: i32,
}

impl From<CliError> for RowError {
    fn from(e: CliError) -> Self {
        Self { exit_code: e.exit_code(), message: e.to_string() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub gamma: f64,
    pub postselect_prob: f64,
    pub weak_value: Complex64,
    pub comparisons: Vec<Comparison>,
    pub control_q: ControlAssessment,
    pub control_p: ControlAssessment,
    pub sensitivities: SensitivityBundle,
    pub weakness: f64,
}

/// Parameter and values of the sweep: the configured `[run.sweep]`, or
/// else the coupling list.
pub fn sweep_axis(raw: &RawScenario) -> CliResult<(String, Vec<f64>)> {
    let config = raw.config()?;
    let (parameter, values) = match config.run.sweep {
        Some(sw) => (sw.parameter, sw.values),
        None => ("constants.gamma".to_owned(), config.run.gammas),
    };
    if values.is_empty() {
        let key = if parameter == "constants.gamma" { "run.gammas".to_owned() } else { "run.sweep.values".to_owned() };
        return Err(CliError::config(key, "sweep needs at least one point"));
    }
    Ok((parameter, values))
}

fn sweep_point(raw: &RawScenario, parameter: &str, value: f64) -> CliResult<SweepPoint> {
    let mut raw = raw.clone();
    raw.set(parameter, value)?;
    let s = raw.load()?;
    let fo = first_order(&s)?;
    let out = measure(&s.system, &s.pointer, s.gamma()).map_err(core("constants.gamma"))?;
    let initial = [fo.initial(Canonical::Q), fo.initial(Canonical::P)];
    let (eq, ep) = (stats(&out.state, Canonical::Q), stats(&out.state, Canonical::P));
    Ok(SweepPoint {
        gamma: s.gamma(),
        postselect_prob: out.postselect_prob,
        weak_value: fo.weak_value(),
        comparisons: canonical_comparisons(initial, [&eq, &ep], &fo),
        control_q: fo.control(Canonical::Q).map_err(core("constants.gamma"))?,
        control_p: fo.control(Canonical::P).map_err(core("constants.gamma"))?,
        sensitivities: fo.sensitivities().map_err(core("constants.gamma"))?,
        weakness: fo.weakness(),
    })
}

/// Evaluates every point on the current rayon pool; rows come back in
/// input order.
pub fn sweep(raw: &RawScenario) -> CliResult<Vec<SweepRow>> {
    let (parameter, values) = sweep_axis(raw)?;
    // surface config errors that no point could recover from
    raw.load()?;
    Ok(values
        .par_iter()
        .enumerate()
        .map(|(index, &value)| SweepRow {
            index,
            parameter: parameter.clone(),
            value,
            outcome: sweep_point(raw, &parameter, value).map_err(RowError::from),
        })
        .collect())
}

pub const SWEEP_COLUMNS: [&str; 35] = [
    "index",
    "parameter",
    "value",
    "status",
    "gamma",
    "postselect_prob",
    "weak_value_re",
    "weak_value_im",
    "exact_mean_q",
    "pred_mean_q",
    "residual_mean_q",
    "exact_mean_p",
    "pred_mean_p",
    "residual_mean_p",
    "exact_var_q",
    "pred_var_q",
    "residual_var_q",
    "exact_var_p",
    "pred_var_p",
    "residual_var_p",
    "control_q_term",
    "control_q_bound",
    "control_q_satisfied",
    "control_q_window",
    "control_p_term",
    "control_p_bound",
    "control_p_satisfied",
    "control_p_window",
    "dq2_re",
    "dq2_im",
    "dp2_im",
    "weakness",
    "initial_var_q",
    "initial_var_p",
    "error",
];

pub fn float(x: f64) -> String {
    format!("{x:.16e}")
}

fn sensitivity_cell(s: &weakvar::perturb::Sensitivity) -> String {
    s.value().map(float).unwrap_or_else(|| "undefined".into())
}

impl SweepRow {
    pub fn cells(&self) -> Vec<String> {
        let mut cells = vec![self.index.to_string(), self.parameter.clone(), float(self.value)];
        match &self.outcome {
            Ok(p) => {
                cells.push("ok".into());
                cells.extend([p.gamma, p.postselect_prob, p.weak_value.re, p.weak_value.im].map(float));
                for c in &p.comparisons {
                    cells.extend([c.exact, c.predicted, c.abs_diff].map(float));
                }
                for c in [&p.control_q, &p.control_p] {
                    cells.extend([float(c.term), float(c.lower_bound), c.satisfied.to_string(), c.window.as_str().into()]);
                }
                let s = &p.sensitivities;
                cells.extend([&s.dq2_re, &s.dq2_im, &s.dp2_im].map(sensitivity_cell));
                cells.push(float(p.weakness));
                cells.push(float(p.comparisons[2].initial));
                cells.push(float(p.comparisons[3].initial));
                cells.push(String::new());
            }
            Err(e) => {
                cells.push("error".into());
                cells.resize(SWEEP_COLUMNS.len() - 1, String::new());
                cells.push(e.message.clone());
            }
        }
        debug_assert_eq!(cells.len(), SWEEP_COLUMNS.len());
        cells
    }
}

pub fn sweep_csv(rows: &[SweepRow], timestamp: Option<u64>) -> String {
    let mut out = Vec::new();
    if let Some(t) = timestamp {
        out.extend_from_slice(format!("# generated_at_unix={t}\n").as_bytes());
    }
    {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(&mut out);
        w.write_record(SWEEP_COLUMNS).expect("writing to memory");
        for row in rows {
            w.write_record(row.cells()).expect("writing to memory");
        }
        w.flush().expect("writing to memory");
    }
    String::from_utf8(out).expect("csv output is utf-8")
}

/// Flattens any report into `key,value` rows with dotted keys.
pub fn flat_csv<T: Serialize>(report: &T) -> String {
    let value = serde_json::to_value(report).expect("reports serialize to JSON");
    let mut rows = Vec::new();
    flatten("", &value, &mut rows);
    let mut out = Vec::new();
    {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(&mut out);
        w.write_record(["key", "value"]).expect("writing to memory");
        for (k, v) in rows {
            w.write_record([k, v]).expect("writing to memory");
        }
        w.flush().expect("writing to memory");
    }
    String::from_utf8(out).expect("csv output is utf-8")
}

fn flatten(prefix: &str, v: &serde_json::Value, rows: &mut Vec<(String, String)>) {
    use serde_json::Value;
    let join = |k: &str| if prefix.is_empty() { k.to_owned() } else { format!("{prefix}.{k}") };
    match v {
        Value::Object(map) => map.iter().for_each(|(k, v)| flatten(&join(k), v, rows)),
        Value::Array(items) => items.iter().enumerate().for_each(|(i, v)| flatten(&join(&i.to_string()), v, rows)),
        Value::Number(n) if n.is_f64() => rows.push((prefix.to_owned(), float(n.as_f64().unwrap_or(f64::NAN)))),
        Value::Number(n) => rows.push((prefix.to_owned(), n.to_string())),
        Value::String(s) => rows.push((prefix.to_owned(), s.clone())),
        Value::Bool(b) => rows.push((prefix.to_owned(), b.to_string())),
        Value::Null => rows.push((prefix.to_owned(), "null".into())),
    }
}

pub fn structured<T: Serialize>(report: &T) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("reports serialize to JSON");
    s.push('\n');
    s
}
