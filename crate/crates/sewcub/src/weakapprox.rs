//! Composition of one-step cubature operators over partitions: exact
//! full-tree evaluation, Monte-Carlo branch sampling, closed-form references
//! for the linear problem registry, empirical weak-order estimation, and the
//! generator finite-difference check.

use crate::cubature::{CubatureError, CubatureMeasure, MeasureFamily};
use crate::flow::{one_step_operator, FlowError, TestFunction, VectorFieldSet};
use crate::flow::flow_along_path;
use crate::gaussmart::QuadraticVariation;
use crate::numerics::{counter_uniform, least_squares_slope, zeta, CompensatedSum};
use rayon::prelude::*;
use serde::Serialize;
use std::io::Write;
use thiserror::Error;

pub const DEFAULT_BRANCH_BUDGET: f64 = 1e7;

#[derive(Debug, Error)]
pub enum WeakApproxError {
    #[error("partition times must be strictly increasing with at least one step")]
    InvalidPartition,
    #[error("full tree would expand {branches:e} branches, over the budget {budget:e}; use Monte-Carlo branch sampling (mc mode) instead")]
    BudgetExceeded { branches: f64, budget: f64 },
    #[error("no closed-form reference for this problem: needs the linear field preset and f ∈ {{identity, square}}")]
    ReferenceUnavailable,
    #[error("levels must be a strictly increasing, non-empty list of step counts")]
    InvalidLevels,
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Cubature(#[from] CubatureError),
}

/// Ordered times `s = t₀ < t₁ < … < t_k = t`.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition(Vec<f64>);

impl Partition {
    pub fn new(times: Vec<f64>) -> Result<Self, WeakApproxError> {
        if times.len() < 2 || times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(WeakApproxError::InvalidPartition);
        }
        Ok(Partition(times))
    }

    pub fn uniform(s: f64, t: f64, k: usize) -> Self {
        let times = (0..=k)
            .map(|i| s + (t - s) * i as f64 / k as f64)
            .collect();
        Partition::new(times).expect("uniform partition is valid")
    }

    /// Equal `⟨M⟩`-mass per step; minimizes the per-step derived control for
    /// inhomogeneous drivers.
    pub fn chi_equidistributed(qv: &QuadraticVariation, s: f64, t: f64, k: usize) -> Self {
        let (lo, hi) = (qv.eval(s), qv.eval(t));
        let mut times: Vec<f64> = (0..=k)
            .map(|i| qv.inverse(lo + (hi - lo) * i as f64 / k as f64))
            .collect();
        times[0] = s;
        times[k] = t;
        Partition::new(times).expect("chi partition is valid")
    }

    pub fn times(&self) -> &[f64] {
        &self.0
    }

    /// Number of steps `k`.
    pub fn steps(&self) -> usize {
        self.0.len() - 1
    }

    pub fn step(&self, i: usize) -> (f64, f64) {
        (self.0[i], self.0[i + 1])
    }

    /// Mesh `|π| = max step length`.
    pub fn mesh(&self) -> f64 {
        self.0.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
    }

    /// Union of the two partitions' time sets (they must chain: `self` ends
    /// where `other` starts).
    pub fn chain(&self, other: &Partition) -> Result<Partition, WeakApproxError> {
        if (self.0[self.0.len() - 1] - other.0[0]).abs() > 1e-12 {
            return Err(WeakApproxError::InvalidPartition);
        }
        let mut times = self.0.clone();
        times.extend_from_slice(&other.0[1..]);
        Partition::new(times)
    }
}

fn step_measures(
    family: &MeasureFamily,
    partition: &Partition,
) -> Result<Vec<CubatureMeasure>, WeakApproxError> {
    (0..partition.steps())
        .map(|i| {
            let (s, t) = partition.step(i);
            family.measure(s, t).map_err(WeakApproxError::from)
        })
        .collect()
}

fn subtree_value(
    measures: &[CubatureMeasure],
    vf: &VectorFieldSet,
    g: &(dyn Fn(&[f64]) -> f64 + Sync),
    x: &[f64],
    tol: f64,
) -> Result<f64, WeakApproxError> {
    match measures.split_first() {
        None => Ok(g(x)),
        Some((measure, rest)) => {
            let mut acc = CompensatedSum::new();
            for (w, path) in measure.atoms() {
                let y = flow_along_path(vf, x, path, tol)?;
                acc.add(w * subtree_value(rest, vf, g, &y, tol)?);
            }
            Ok(acc.value())
        }
    }
}

/// Exact evaluation of the composed operator applied to a terminal
/// functional: depth-first product over all branch sequences, fixed-order
/// compensated accumulation, first-level branches in parallel.
pub fn full_tree_expectation_over(
    measures: &[CubatureMeasure],
    vf: &VectorFieldSet,
    g: &(dyn Fn(&[f64]) -> f64 + Sync),
    x: &[f64],
    tol: f64,
    budget: f64,
) -> Result<f64, WeakApproxError> {
    let branches = measures
        .iter()
        .map(|m| m.atoms().len() as f64)
        .product::<f64>();
    if branches > budget {
        return Err(WeakApproxError::BudgetExceeded { branches, budget });
    }
    match measures.split_first() {
        None => Ok(g(x)),
        Some((first, rest)) => {
            let partials: Vec<Result<f64, WeakApproxError>> = first
                .atoms()
                .par_iter()
                .map(|(w, path)| {
                    let y = flow_along_path(vf, x, path, tol)?;
                    Ok(w * subtree_value(rest, vf, g, &y, tol)?)
                })
                .collect();
            let mut acc = CompensatedSum::new();
            for p in partials {
                acc.add(p?);
            }
            Ok(acc.value())
        }
    }
}

/// `Q^π f(x)` for a family's per-step measures.
pub fn full_tree_expectation(
    family: &MeasureFamily,
    vf: &VectorFieldSet,
    partition: &Partition,
    f: &TestFunction,
    x: &[f64],
    tol: f64,
    budget: f64,
) -> Result<f64, WeakApproxError> {
    let measures = step_measures(family, partition)?;
    let f = *f;
    full_tree_expectation_over(&measures, vf, &move |y: &[f64]| f.eval(y), x, tol, budget)
}

/// Unbiased branch sampling of the same tree: one atom per step drawn from
/// the atom weights through the counter stream keyed by
/// `(seed, sample, step)`. Returns `(estimate, standard error)`.
#[allow(clippy::too_many_arguments)]
pub fn mc_expectation_over(
    measures: &[CubatureMeasure],
    vf: &VectorFieldSet,
    g: &(dyn Fn(&[f64]) -> f64 + Sync),
    x: &[f64],
    n_samples: usize,
    seed: u64,
    tol: f64,
) -> Result<(f64, f64), WeakApproxError> {
    assert!(n_samples >= 1);
    let cumulative: Vec<Vec<f64>> = measures
        .iter()
        .map(|m| {
            let mut acc = 0.0;
            m.atoms()
                .iter()
                .map(|(w, _)| {
                    acc += w;
                    acc
                })
                .collect()
        })
        .collect();

    const CHUNK: usize = 1024;
    let n_chunks = n_samples.div_ceil(CHUNK);
    let partials: Vec<Result<(f64, f64), WeakApproxError>> = (0..n_chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut sum = CompensatedSum::new();
            let mut sq_sum = CompensatedSum::new();
            let lo = chunk * CHUNK;
            let hi = ((chunk + 1) * CHUNK).min(n_samples);
            for sample in lo..hi {
                let mut state = x.to_vec();
                for (step, measure) in measures.iter().enumerate() {
                    let u = counter_uniform(seed, sample as u64, step as u64);
                    let weights = &cumulative[step];
                    let mut idx = weights.partition_point(|&c| c <= u);
                    if idx >= measure.atoms().len() {
                        idx = measure.atoms().len() - 1;
                    }
                    state = flow_along_path(vf, &state, &measure.atoms()[idx].1, tol)?;
                }
                let v = g(&state);
                sum.add(v);
                sq_sum.add(v * v);
            }
            Ok((sum.value(), sq_sum.value()))
        })
        .collect();

    let mut total = CompensatedSum::new();
    let mut total_sq = CompensatedSum::new();
    for p in partials {
        let (s, ss) = p?;
        total.add(s);
        total_sq.add(ss);
    }
    let n = n_samples as f64;
    let mean = total.value() / n;
    let var = if n_samples > 1 {
        ((total_sq.value() - n * mean * mean) / (n - 1.0)).max(0.0)
    } else {
        0.0
    };
    Ok((mean, (var / n).sqrt()))
}

/// Monte-Carlo estimate of `Q^π f(x)` for a family.
#[allow(clippy::too_many_arguments)]
pub fn mc_expectation(
    family: &MeasureFamily,
    vf: &VectorFieldSet,
    partition: &Partition,
    f: &TestFunction,
    x: &[f64],
    n_samples: usize,
    seed: u64,
    tol: f64,
) -> Result<(f64, f64), WeakApproxError> {
    let measures = step_measures(family, partition)?;
    let f = *f;
    mc_expectation_over(
        &measures,
        vf,
        &move |y: &[f64]| f.eval(y),
        x,
        n_samples,
        seed,
        tol,
    )
}

/// A problem with a closed-form weak reference: the linear field preset
/// driven by a registry martingale, `X_T = x·exp(θT + σM_T)`.
#[derive(Debug, Clone)]
pub struct ReferenceProblem {
    pub vf: VectorFieldSet,
    pub qv: QuadraticVariation,
    pub horizon: f64,
    pub x0: f64,
}

/// Exact `𝔼[f(X_T)]` for the reference registry: `identity` gives the
/// lognormal mean `x·exp(θT + σ²⟨M⟩_T/2)`, `square` gives
/// `x²·exp(2θT + 2σ²⟨M⟩_T)`.
pub fn reference_value(problem: &ReferenceProblem, f: &TestFunction) -> Result<f64, WeakApproxError> {
    let (theta, sigma) = match problem.vf {
        VectorFieldSet::Linear { theta, sigma } => (theta, sigma),
        _ => return Err(WeakApproxError::ReferenceUnavailable),
    };
    let qv_t = problem.qv.eval(problem.horizon);
    let t = problem.horizon;
    match f {
        TestFunction::Identity => Ok(problem.x0 * (theta * t + sigma * sigma * qv_t / 2.0).exp()),
        TestFunction::Square => {
            Ok(problem.x0 * problem.x0 * (2.0 * theta * t + 2.0 * sigma * sigma * qv_t).exp())
        }
        _ => Err(WeakApproxError::ReferenceUnavailable),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PartitionScheme {
    Uniform,
    ChiEquidistributed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    FullTree,
    MonteCarlo { n_samples: usize, seed: u64 },
}

#[derive(Debug, Clone, Serialize)]
pub struct LevelRow {
    pub level: usize,
    pub mesh: f64,
    pub estimate: f64,
    pub std_error: Option<f64>,
    pub reference: f64,
    pub abs_error: f64,
    /// Theorem bound with `χ(s,t)` in the interval slot (main-text variant).
    pub bound_rhs: f64,
    /// Theorem bound with `χ̃(s,t)` in the interval slot (proof variant).
    pub bound_rhs_tilde: f64,
}

#[derive(Debug, Serialize)]
pub struct ConvergenceRecord {
    pub family: String,
    pub scheme: PartitionScheme,
    pub rows: Vec<LevelRow>,
    /// Least-squares slope of log error against log mesh over levels ≥ 2;
    /// `None` when the fit is degenerate (errors at roundoff).
    pub fitted_order: Option<f64>,
    pub z: f64,
    pub zeta_z: f64,
    pub c_tilde: f64,
}

impl ConvergenceRecord {
    pub fn fitted_order_label(&self) -> String {
        match self.fitted_order {
            Some(p) => format!("{p}"),
            None => "exact".to_string(),
        }
    }

    /// CSV columns: level,mesh,estimate,reference,abs_error,fitted_order,bound_rhs
    pub fn write_csv<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        out.write_all(b"level,mesh,estimate,reference,abs_error,fitted_order,bound_rhs\n")?;
        let order = self.fitted_order_label();
        for row in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                row.level, row.mesh, row.estimate, row.reference, row.abs_error, order, row.bound_rhs
            )?;
        }
        Ok(())
    }
}

/// Run the weak-order study: estimates per level against the closed-form
/// reference, a least-squares order fit (levels ≥ 2 only; level 1 is
/// preasymptotic), and the theorem bound tabulated per level with the
/// smallest exponential constant that envelopes the measured errors.
#[allow(clippy::too_many_arguments)]
pub fn convergence_study(
    family: &MeasureFamily,
    vf: &VectorFieldSet,
    f: &TestFunction,
    x0: f64,
    horizon: f64,
    levels: &[usize],
    scheme: PartitionScheme,
    mode: Mode,
    tol: f64,
    budget: f64,
) -> Result<ConvergenceRecord, WeakApproxError> {
    if levels.is_empty() || levels.windows(2).any(|w| w[1] <= w[0]) || levels[0] == 0 {
        return Err(WeakApproxError::InvalidLevels);
    }
    let problem = ReferenceProblem {
        vf: vf.clone(),
        qv: family.quadratic_variation(),
        horizon,
        x0,
    };
    let reference = reference_value(&problem, f)?;

    let m = family.order() as f64;
    let z = (m + 1.0) / 2.0;
    let zeta_z = zeta(z);
    let chi_total = family.control(0.0, horizon);
    let chi_tilde_total = family.control_tilde(0.0, horizon);

    struct RawRow {
        level: usize,
        mesh: f64,
        estimate: f64,
        std_error: Option<f64>,
        abs_error: f64,
        max_tilde_term: f64,
    }

    let mut raw = Vec::new();
    for &k in levels {
        let partition = match scheme {
            PartitionScheme::Uniform => Partition::uniform(0.0, horizon, k),
            PartitionScheme::ChiEquidistributed => {
                Partition::chi_equidistributed(&family.quadratic_variation(), 0.0, horizon, k)
            }
        };
        let (estimate, std_error) = match mode {
            Mode::FullTree => (
                full_tree_expectation(family, vf, &partition, f, &[x0], tol, budget)?,
                None,
            ),
            Mode::MonteCarlo { n_samples, seed } => {
                let (e, se) = mc_expectation(family, vf, &partition, f, &[x0], n_samples, seed, tol)?;
                (e, Some(se))
            }
        };
        let max_tilde_term = (0..partition.steps())
            .map(|i| {
                let (a, b) = partition.step(i);
                family.control_tilde(a, b).powf((m - 1.0) / 2.0)
            })
            .fold(0.0, f64::max);
        raw.push(RawRow {
            level: k,
            mesh: partition.mesh(),
            estimate,
            std_error,
            abs_error: (estimate - reference).abs(),
            max_tilde_term,
        });
    }

    // order fit over levels >= 2 with errors above roundoff
    let fit_points: Vec<(f64, f64)> = raw
        .iter()
        .filter(|r| r.level >= 2 && r.abs_error > 1e-15)
        .map(|r| (r.mesh.ln(), r.abs_error.ln()))
        .collect();
    let fitted_order = if fit_points.len() >= 2 {
        let xs: Vec<f64> = fit_points.iter().map(|p| p.0).collect();
        let ys: Vec<f64> = fit_points.iter().map(|p| p.1).collect();
        Some(least_squares_slope(&xs, &ys))
    } else {
        None
    };

    // smallest C̃ ≥ 0 with error ≤ 2^z e^{C̃χ̃(0,T)} ζ(z) χ(0,T) max χ̃^{(m−1)/2}
    let mut c_tilde = 0.0f64;
    for r in &raw {
        let core = 2f64.powf(z) * zeta_z * chi_total * r.max_tilde_term;
        if r.abs_error > core && core > 0.0 {
            c_tilde = c_tilde.max((r.abs_error / core).ln() / chi_tilde_total);
        }
    }

    let rows = raw
        .into_iter()
        .map(|r| {
            let envelope = 2f64.powf(z) * (c_tilde * chi_tilde_total).exp() * zeta_z * r.max_tilde_term;
            LevelRow {
                level: r.level,
                mesh: r.mesh,
                estimate: r.estimate,
                std_error: r.std_error,
                reference,
                abs_error: r.abs_error,
                bound_rhs: envelope * chi_total,
                bound_rhs_tilde: envelope * chi_tilde_total,
            }
        })
        .collect();

    Ok(ConvergenceRecord {
        family: family.name().to_string(),
        scheme,
        rows,
        fitted_order,
        z,
        zeta_z,
        c_tilde,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct GeneratorRow {
    pub h: f64,
    pub finite_difference: f64,
    pub error: f64,
}

#[derive(Debug, Serialize)]
pub struct GeneratorReport {
    pub t: f64,
    pub x: f64,
    /// `V₀f(x) + ½·a₁₁(t)·V₁V₁f(x)` with `a₁₁(t) = ⟨M⟩′(t)`.
    pub generator_value: f64,
    pub rows: Vec<GeneratorRow>,
    /// Slope of log error against log h, when measurable.
    pub convergence_order: Option<f64>,
}

/// Compare `(Q_{t,t+h}f(x) − f(x))/h` against the generator
/// `V₀f + ½·a₁₁(t)·V₁V₁f`, with the field derivatives taken by central
/// finite differences along field directions.
pub fn generator_check(
    family: &MeasureFamily,
    vf: &VectorFieldSet,
    f: &TestFunction,
    t: f64,
    x: f64,
    h_list: &[f64],
    tol: f64,
) -> Result<GeneratorReport, WeakApproxError> {
    let f_eval = {
        let f = *f;
        move |y: &[f64]| f.eval(y)
    };
    let eps = 1e-4;
    let v0f = vf.directional_derivative(0, &f_eval, &[x], eps);
    let v1f = |y: &[f64]| vf.directional_derivative(1, &f_eval, y, eps);
    let v1v1f = vf.directional_derivative(1, &v1f, &[x], eps);
    let a11 = family.quadratic_variation().diffusion_limit(t);
    let generator_value = v0f + 0.5 * a11 * v1v1f;

    let fx = f.eval(&[x]);
    let mut rows = Vec::new();
    for &h in h_list {
        let measure = family.measure(t, t + h)?;
        let q = one_step_operator(vf, &measure, f, &[x], tol)?;
        let fd = (q - fx) / h;
        rows.push(GeneratorRow {
            h,
            finite_difference: fd,
            error: (fd - generator_value).abs(),
        });
    }
    let points: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.error > 1e-13)
        .map(|r| (r.h.ln(), r.error.ln()))
        .collect();
    let convergence_order = if points.len() >= 2 {
        let xs: Vec<f64> = points.iter().map(|p| p.0).collect();
        let ys: Vec<f64> = points.iter().map(|p| p.1).collect();
        Some(least_squares_slope(&xs, &ys))
    } else {
        None
    };
    Ok(GeneratorReport {
        t,
        x,
        generator_value,
        rows,
        convergence_order,
    })
}
