//! Multiplicative sewing engine on finite-dimensional operator families:
//! composition over partitions, dyadic refinement to the limit evolution
//! system, defect measurement, and numerical verification of the sewing
//! bounds with measured growth constants.
//!
//! The Banach pair of the abstract statement collapses to one
//! finite-dimensional space with the spectral norm; the growth functions
//! ε₁, ε₂ are measured as suprema of composed operator norms over sampled
//! partitions rather than assumed.

use crate::numerics::{counter_uniform, zeta};
use crate::weakapprox::{Partition, WeakApproxError};
use nalgebra::DMatrix;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SewingError {
    #[error("matrix must be square and non-empty")]
    BadMatrix,
    #[error("sew needs max_level >= 6, got {0}")]
    LevelTooShallow(usize),
    #[error(transparent)]
    Partition(#[from] WeakApproxError),
}

/// Largest singular value.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    m.clone()
        .singular_values()
        .iter()
        .copied()
        .fold(0.0, f64::max)
}

/// Matrix exponential by scaling and squaring with a Taylor kernel; accurate
/// to machine precision for the moderate norms used here.
pub fn matrix_exp(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    assert_eq!(n, a.ncols());
    let norm = a.iter().map(|v| v.abs()).fold(0.0, f64::max) * n as f64;
    let squarings = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as u32
    } else {
        0
    };
    let scaled = a / 2f64.powi(squarings as i32);
    let mut term = DMatrix::identity(n, n);
    let mut sum = DMatrix::identity(n, n);
    for k in 1..=24 {
        term = (&term * &scaled) / k as f64;
        sum += &term;
    }
    let mut result = sum;
    for _ in 0..squarings {
        result = &result * &result;
    }
    result
}

/// Registry of two-parameter matrix families `μ_{s,t}`.
#[derive(Debug, Clone)]
pub enum FamilyKind {
    /// Exactly multiplicative: `μ_{s,t} = exp((t−s)A)`.
    Exponential { a: DMatrix<f64> },
    /// Euler: `μ_{s,t} = I + (t−s)A`; defect `(u−s)(t−u)·A²`, so `z = 2`.
    Euler { a: DMatrix<f64> },
    /// `μ_{s,t} = exp((t−s)A)(I + (t−s)²B)`; almost multiplicative with `z = 2`.
    Perturbed { a: DMatrix<f64>, b: DMatrix<f64> },
}

/// A matrix-valued almost-multiplicative family with declared exponent `z`
/// and the control `χ(s,t) = D^{1/z}(t−s)`, where the defect constant `D` is
/// fitted on dyadic triples of the calibration interval so that
/// `‖μ_{s,t} − μ_{s,u}μ_{u,t}‖ ≤ χ(s,t)^z` holds there.
#[derive(Debug, Clone)]
pub struct OperatorFamily {
    kind: FamilyKind,
    n: usize,
    z: f64,
    defect_constant: f64,
    name: &'static str,
}

impl OperatorFamily {
    pub fn new(kind: FamilyKind, calibration: (f64, f64)) -> Result<Self, SewingError> {
        let (n, name) = match &kind {
            FamilyKind::Exponential { a } => (a.nrows(), "exp"),
            FamilyKind::Euler { a } => (a.nrows(), "euler"),
            FamilyKind::Perturbed { a, .. } => (a.nrows(), "perturbed"),
        };
        if n == 0 {
            return Err(SewingError::BadMatrix);
        }
        let mut family = OperatorFamily {
            kind,
            n,
            z: 2.0,
            defect_constant: 0.0,
            name,
        };
        // fit D = sup defect/(t−s)^z over dyadic triples of the calibration
        // interval; midpoints maximize the euler defect
        let (s, t) = calibration;
        let mut d_fit = 0.0f64;
        for level in 0..=6u32 {
            let k = 1usize << level;
            for i in 0..k {
                let a = s + (t - s) * i as f64 / k as f64;
                let b = s + (t - s) * (i + 1) as f64 / k as f64;
                let u = 0.5 * (a + b);
                let defect = family.defect(a, u, b);
                let tau = b - a;
                if tau > 0.0 {
                    d_fit = d_fit.max(defect / tau.powf(family.z));
                }
            }
        }
        family.defect_constant = d_fit * (1.0 + 1e-9);
        Ok(family)
    }

    pub fn exponential(a: DMatrix<f64>, calibration: (f64, f64)) -> Result<Self, SewingError> {
        Self::new(FamilyKind::Exponential { a }, calibration)
    }

    pub fn euler(a: DMatrix<f64>, calibration: (f64, f64)) -> Result<Self, SewingError> {
        Self::new(FamilyKind::Euler { a }, calibration)
    }

    pub fn perturbed(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        calibration: (f64, f64),
    ) -> Result<Self, SewingError> {
        Self::new(FamilyKind::Perturbed { a, b }, calibration)
    }

    pub fn name(&self) -> &'static str {
        self.name
    }

    pub fn state_dim(&self) -> usize {
        self.n
    }

    pub fn exponent(&self) -> f64 {
        self.z
    }

    pub fn defect_constant(&self) -> f64 {
        self.defect_constant
    }

    /// `μ_{s,t}`.
    pub fn generator(&self, s: f64, t: f64) -> DMatrix<f64> {
        let tau = t - s;
        match &self.kind {
            FamilyKind::Exponential { a } => matrix_exp(&(a * tau)),
            FamilyKind::Euler { a } => DMatrix::identity(self.n, self.n) + a * tau,
            FamilyKind::Perturbed { a, b } => {
                let base = matrix_exp(&(a * tau));
                base * (DMatrix::identity(self.n, self.n) + b * (tau * tau))
            }
        }
    }

    /// Control with the fitted defect constant absorbed:
    /// `χ(s,t) = D^{1/z}·(t−s)`, so the almost-multiplicativity bound reads
    /// `defect ≤ χ(s,t)^z`.
    pub fn control(&self, s: f64, t: f64) -> f64 {
        self.defect_constant.powf(1.0 / self.z) * (t - s)
    }

    /// Ordered matrix product `μ_{t₀,t₁}·μ_{t₁,t₂}⋯μ_{t_{k−1},t_k}`.
    pub fn compose_along(&self, partition: &Partition) -> DMatrix<f64> {
        let mut product = DMatrix::identity(self.n, self.n);
        for i in 0..partition.steps() {
            let (a, b) = partition.step(i);
            product *= self.generator(a, b);
        }
        product
    }

    /// Spectral norm of `μ_{s,t} − μ_{s,u}·μ_{u,t}`.
    pub fn defect(&self, s: f64, u: f64, t: f64) -> f64 {
        let whole = self.generator(s, t);
        let split = self.generator(s, u) * self.generator(u, t);
        spectral_norm(&(whole - split))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LevelDistance {
    pub level: usize,
    pub steps: usize,
    pub distance_to_limit: f64,
    /// `log₂(d_ℓ / d_{ℓ+1})`; the sewing rate exponent `z − 1` for clean
    /// families.
    pub rate_to_next: Option<f64>,
    pub bound_rhs: f64,
    pub within_bound: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct DefectSample {
    pub triple: (f64, f64, f64),
    pub defect: f64,
    pub control_power: f64,
}

#[derive(Debug, Serialize)]
pub struct SewingReport {
    pub family: String,
    pub interval: (f64, f64),
    pub z: f64,
    pub zeta_z: f64,
    pub defect_constant: f64,
    /// Measured `sup_π ‖μ^π‖` over the sampled partitions (used for both ε₁
    /// and ε₂: one space, one norm).
    pub epsilon: f64,
    /// ψ estimated as the deepest dyadic composition.
    pub psi: Vec<Vec<f64>>,
    pub levels: Vec<LevelDistance>,
    pub defects: Vec<DefectSample>,
    /// `‖ψ − μ_{s,t}‖` against `2^z ζ(z) ε₁ε₂ χ^z` (the paper prints an
    /// ambiguous `ε²` here; the ε₁ε₂ form from the proof is checked).
    pub psi_minus_mu: f64,
    pub psi_minus_mu_bound: f64,
    pub psi_minus_mu_within: bool,
    /// Max over sampled triples of `‖ψ_{s,t} − ψ_{s,u}ψ_{u,t}‖` with the
    /// sub-estimates taken as partial products of the shared deepest grid.
    pub evolution_residual: f64,
    /// Distance between a uniform 1000-step composition and ψ
    /// (partition-independence of the limit).
    pub uniform_vs_dyadic: f64,
    pub converged: bool,
    pub notes: Vec<String>,
}

/// Dyadic sewing: compose at levels `0..=max_level`, take the deepest level
/// as the limit estimate ψ, measure growth constants and defects, and check
/// the two sewing bounds with the measured quantities.
pub fn sew(
    family: &OperatorFamily,
    s: f64,
    t: f64,
    max_level: usize,
) -> Result<SewingReport, SewingError> {
    if max_level < 6 {
        return Err(SewingError::LevelTooShallow(max_level));
    }
    let z = family.exponent();
    let zeta_z = zeta(z);

    // deepest-level factors are kept for the evolution-property check
    let deepest = Partition::uniform(s, t, 1 << max_level);
    let factors: Vec<DMatrix<f64>> = (0..deepest.steps())
        .map(|i| {
            let (a, b) = deepest.step(i);
            family.generator(a, b)
        })
        .collect();
    let mut psi = DMatrix::identity(family.n, family.n);
    for f in &factors {
        psi *= f;
    }

    let mut compositions = Vec::new();
    for level in 0..max_level {
        let partition = Partition::uniform(s, t, 1 << level);
        compositions.push(family.compose_along(&partition));
    }

    // measured growth: sup over sampled partitions (dyadic, uniform, random)
    let mut epsilon = spectral_norm(&psi);
    for c in &compositions {
        epsilon = epsilon.max(spectral_norm(c));
    }
    for k in [3usize, 5, 7, 10, 33, 100] {
        epsilon = epsilon.max(spectral_norm(
            &family.compose_along(&Partition::uniform(s, t, k)),
        ));
    }
    for case in 0..8u64 {
        let mut times = vec![s, t];
        for j in 0..6 {
            times.push(s + (t - s) * counter_uniform(40, case, j));
        }
        times.sort_by(|a, b| a.partial_cmp(b).unwrap());
        times.dedup_by(|a, b| (*a - *b).abs() < 1e-9 * (t - s));
        if let Ok(p) = Partition::new(times) {
            epsilon = epsilon.max(spectral_norm(&family.compose_along(&p)));
        }
    }

    let distances: Vec<f64> = compositions
        .iter()
        .map(|c| spectral_norm(&(c - &psi)))
        .collect();

    let mut levels = Vec::new();
    for (level, &distance) in distances.iter().enumerate() {
        let k = 1 << level;
        let partition = Partition::uniform(s, t, k);
        let max_step_chi = (0..partition.steps())
            .map(|i| {
                let (a, b) = partition.step(i);
                family.control(a, b).powf(z - 1.0)
            })
            .fold(0.0, f64::max);
        let bound_rhs =
            2f64.powf(z) * epsilon.powi(4) * zeta_z * family.control(s, t) * max_step_chi;
        let rate_to_next = if level + 1 < distances.len()
            && distance > 1e-14
            && distances[level + 1] > 1e-14
        {
            Some((distance / distances[level + 1]).log2())
        } else {
            None
        };
        levels.push(LevelDistance {
            level,
            steps: k,
            distance_to_limit: distance,
            rate_to_next,
            bound_rhs,
            within_bound: distance <= bound_rhs,
        });
    }

    // convergence: distances eventually decreasing (reported, not raised)
    let converged = distances
        .windows(2)
        .skip(2)
        .all(|w| w[1] <= w[0] * (1.0 + 1e-9) || w[1] < 1e-12);

    // defect samples on sampled triples
    let mut defects = Vec::new();
    for case in 0..20u64 {
        let a = s + (t - s) * counter_uniform(41, case, 0);
        let b = a + (t - a) * counter_uniform(41, case, 1);
        let u = a + (b - a) * counter_uniform(41, case, 2);
        if b > a && u > a && b > u {
            defects.push(DefectSample {
                triple: (a, u, b),
                defect: family.defect(a, u, b),
                control_power: family.control(a, b).powf(z),
            });
        }
    }

    let psi_minus_mu = spectral_norm(&(&psi - family.generator(s, t)));
    let psi_minus_mu_bound =
        2f64.powf(z) * zeta_z * epsilon * epsilon * family.control(s, t).powf(z);

    // evolution property via partial products of the shared deepest grid
    let mut evolution_residual = 0.0f64;
    let k_deep = factors.len();
    for case in 0..20u64 {
        let j = 1 + ((counter_uniform(42, case, 0) * (k_deep - 1) as f64) as usize).min(k_deep - 2);
        let mut left = DMatrix::identity(family.n, family.n);
        for f in &factors[..j] {
            left *= f;
        }
        let mut right = DMatrix::identity(family.n, family.n);
        for f in &factors[j..] {
            right *= f;
        }
        evolution_residual = evolution_residual.max(spectral_norm(&(&psi - left * right)));
    }

    let uniform_vs_dyadic = spectral_norm(
        &(family.compose_along(&Partition::uniform(s, t, 1000)) - &psi),
    );

    let mut notes = vec![
        "first distance bound uses the ε₁ε₂ form from the proof; the theorem statement prints ε² with no subscript".to_string(),
        "evolution residual uses partial products of the shared deepest dyadic grid; estimates on private grids differ by O(2^{-max_level})".to_string(),
    ];
    if !converged {
        notes.push("per-level distances are not eventually decreasing: no convergence".to_string());
    }

    Ok(SewingReport {
        family: family.name().to_string(),
        interval: (s, t),
        z,
        zeta_z,
        defect_constant: family.defect_constant(),
        epsilon,
        psi: (0..family.n)
            .map(|i| (0..family.n).map(|j| psi[(i, j)]).collect())
            .collect(),
        levels,
        defects,
        psi_minus_mu,
        psi_minus_mu_bound,
        psi_minus_mu_within: psi_minus_mu <= psi_minus_mu_bound,
        evolution_residual,
        uniform_vs_dyadic,
        converged,
        notes,
    })
}

/// The rotation generator used by the demo and the bound checks.
pub fn rotation_matrix() -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rotation_family_euler() -> OperatorFamily {
        OperatorFamily::euler(rotation_matrix(), (0.0, 1.0)).unwrap()
    }

    #[test]
    fn matrix_exp_of_rotation_is_rotation() {
        for theta in [0.1, 0.5, 1.0, 3.0] {
            let e = matrix_exp(&(rotation_matrix() * theta));
            let expect = DMatrix::from_row_slice(
                2,
                2,
                &[theta.cos(), theta.sin(), -theta.sin(), theta.cos()],
            );
            assert!(spectral_norm(&(e - expect)) <= 1e-14, "theta {theta}");
        }
    }

    #[test]
    fn compose_trivial_partition() {
        let fam = rotation_family_euler();
        let p = Partition::new(vec![0.2, 0.9]).unwrap();
        let direct = fam.generator(0.2, 0.9);
        assert!(spectral_norm(&(fam.compose_along(&p) - direct)) <= 1e-15);
    }

    #[test]
    fn exponential_family_is_exactly_multiplicative() {
        let fam = OperatorFamily::exponential(rotation_matrix(), (0.0, 1.0)).unwrap();
        let target = fam.generator(0.0, 1.0);
        for k in [2usize, 7, 16, 100] {
            let p = Partition::uniform(0.0, 1.0, k);
            assert!(
                spectral_norm(&(fam.compose_along(&p) - &target)) <= 1e-12,
                "k = {k}"
            );
        }
        for case in 0..50u64 {
            let u = counter_uniform(1, case, 0).clamp(1e-3, 1.0 - 1e-3);
            assert!(fam.defect(0.0, u, 1.0) <= 1e-13);
        }
    }

    #[test]
    fn euler_family_uniform_composition_is_power() {
        let fam = rotation_family_euler();
        let k = 8;
        let p = Partition::uniform(0.0, 1.0, k);
        let single = DMatrix::identity(2, 2) + rotation_matrix() / k as f64;
        let mut power = DMatrix::identity(2, 2);
        for _ in 0..k {
            power = power * &single;
        }
        assert!(spectral_norm(&(fam.compose_along(&p) - power)) <= 1e-14);
    }

    #[test]
    fn euler_defect_closed_form_and_control() {
        let fam = rotation_family_euler();
        // (I+(t−s)A) − (I+(u−s)A)(I+(t−u)A) = −(u−s)(t−u)A², and ‖A²‖ = 1
        let d = fam.defect(0.0, 0.5, 1.0);
        assert!((d - 0.25).abs() <= 1e-13, "defect {d}");
        assert!(fam.defect(0.0, 0.0, 1.0) <= 1e-15);
        assert!(fam.defect(0.0, 1.0, 1.0) <= 1e-15);
        // fitted defect constant makes χ(s,t) = ½(t−s) for the rotation
        assert!((fam.control(0.0, 1.0) - 0.5).abs() <= 1e-6);
        for case in 0..50u64 {
            let u = counter_uniform(2, case, 0).clamp(1e-3, 1.0 - 1e-3);
            let defect = fam.defect(0.0, u, 1.0);
            assert!(defect <= fam.control(0.0, 1.0).powf(2.0) * (1.0 + 1e-9));
        }
    }

    #[test]
    fn sew_euler_converges_to_matrix_exponential() {
        let fam = rotation_family_euler();
        let report = sew(&fam, 0.0, 1.0, 12).unwrap();
        assert!(report.converged);
        let exp_a = matrix_exp(&rotation_matrix());
        let psi = DMatrix::from_fn(2, 2, |i, j| report.psi[i][j]);
        let dist = spectral_norm(&(psi - exp_a));
        // ‖(I + A/2^L)^{2^L} − e^A‖ ≈ 2^{−L}/2 for the rotation: ~1.2e−4 at L = 12
        assert!(dist <= 2e-4, "distance to exp(A): {dist}");
        assert!(dist >= 1e-5, "decay should match the oracle rate: {dist}");
        // per-level distance halves per level: rate exponent ≈ z − 1 = 1.
        // Distances are measured against ψ_est = μ^{2^12}, which biases the
        // rates near the deepest level, so only levels well below it count.
        for level in &report.levels[2..10] {
            if let Some(rate) = level.rate_to_next {
                assert!((rate - 1.0).abs() <= 0.3, "level {}: rate {rate}", level.level);
            }
        }
        for level in &report.levels[2..] {
            assert!(level.within_bound, "level {} outside bound", level.level);
        }
        assert!(report.evolution_residual <= 1e-8);
        assert!(report.psi_minus_mu_within);
    }

    #[test]
    fn sew_exponential_family_is_flat() {
        let fam = OperatorFamily::exponential(rotation_matrix(), (0.0, 1.0)).unwrap();
        let report = sew(&fam, 0.0, 1.0, 8).unwrap();
        for level in &report.levels {
            assert!(level.distance_to_limit <= 1e-12);
        }
        assert!(report.psi_minus_mu <= 1e-12);
        assert!(report.evolution_residual <= 1e-12);
    }

    #[test]
    fn sew_perturbed_family_rate() {
        let b = DMatrix::from_row_slice(2, 2, &[0.0, 0.3, 0.2, 0.0]);
        let fam = OperatorFamily::perturbed(rotation_matrix(), b, (0.0, 1.0)).unwrap();
        let report = sew(&fam, 0.0, 1.0, 14).unwrap();
        assert!(report.converged);
        let rates: Vec<f64> = report.levels[3..12]
            .iter()
            .filter_map(|l| l.rate_to_next)
            .collect();
        let mean_rate = rates.iter().sum::<f64>() / rates.len() as f64;
        assert!(
            (0.8..=1.2).contains(&mean_rate),
            "measured rate exponent {mean_rate}"
        );
    }

    #[test]
    fn refinement_deletion_bound() {
        let fam = rotation_family_euler();
        let report = sew(&fam, 0.0, 1.0, 8).unwrap();
        let eps = report.epsilon;
        for case in 0..20u64 {
            let k = 8usize;
            let p = Partition::uniform(0.0, 1.0, k);
            let l = 1 + (counter_uniform(3, case, 0) * (k - 1) as f64) as usize;
            let mut times = p.times().to_vec();
            let (before, after) = (times[l - 1], times[l + 1]);
            times.remove(l);
            let deleted = Partition::new(times).unwrap();
            let diff = spectral_norm(&(fam.compose_along(&p) - fam.compose_along(&deleted)));
            let bound = eps * eps * fam.control(before, after).powf(2.0) * (1.0 + 1e-6);
            assert!(diff <= bound, "case {case}: {diff} vs {bound}");
        }
    }

    #[test]
    fn uniform_refinement_agrees_with_dyadic_limit() {
        let fam = rotation_family_euler();
        let report = sew(&fam, 0.0, 1.0, 12).unwrap();
        // both approximate the same limit; distances are O(mesh)
        assert!(report.uniform_vs_dyadic <= 1e-3);
        let report_deep = sew(&fam, 0.0, 1.0, 14).unwrap();
        assert!(report_deep.uniform_vs_dyadic < report.uniform_vs_dyadic * 1.5);
    }

    #[test]
    fn sew_rejects_shallow_levels() {
        let fam = rotation_family_euler();
        assert!(matches!(
            sew(&fam, 0.0, 1.0, 3),
            Err(SewingError::LevelTooShallow(3))
        ));
    }
}
