//! Quadratic-variation models for scalar continuous Gaussian martingales and
//! their expected Stratonovich signatures up to level 5.
//!
//! The closed forms need exact antiderivatives, so quadratic variations come
//! from a small registry: `⟨M⟩_t = t` (Brownian), `⟨M⟩_t = t³/3` (the
//! martingale `∫ s dB_s`), and general monomials `c·t^γ`. An independent
//! Monte-Carlo oracle simulates the martingale as a time-changed Brownian
//! motion and averages piecewise-linear signatures; it is the check that was
//! used to pin the closed-form case assignment before freezing it.

use crate::algebra::{MultiIndex, TruncatedTensor};
use crate::numerics::{counter_rng, CompensatedSum};
use crate::paths::PiecewiseLinearPath;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GaussMartError {
    #[error("interval must satisfy 0 <= s <= t, got ({s}, {t})")]
    InvalidInterval { s: f64, t: f64 },
    #[error("expected signature closed forms are tabulated to level 5, requested m = {m}")]
    OrderTooHigh { m: usize },
    #[error("monomial quadratic variation needs gamma >= 1 and scale > 0, got gamma = {gamma}, scale = {scale}")]
    InvalidMonomial { gamma: f64, scale: f64 },
}

/// Deterministic quadratic variation `⟨M⟩` of a scalar Gaussian martingale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum QuadraticVariation {
    /// `⟨M⟩_t = t` (standard Brownian motion).
    Brownian,
    /// `⟨M⟩_t = t³/3` (the martingale `M_t = ∫₀ᵗ s dB_s`).
    Cubic,
    /// `⟨M⟩_t = scale · t^gamma`.
    Monomial { gamma: f64, scale: f64 },
}

impl QuadraticVariation {
    pub fn monomial(gamma: f64, scale: f64) -> Result<Self, GaussMartError> {
        if gamma < 1.0 || scale <= 0.0 || !gamma.is_finite() || !scale.is_finite() {
            return Err(GaussMartError::InvalidMonomial { gamma, scale });
        }
        Ok(QuadraticVariation::Monomial { gamma, scale })
    }

    /// `⟨M⟩(t)`.
    pub fn eval(&self, t: f64) -> f64 {
        match *self {
            QuadraticVariation::Brownian => t,
            QuadraticVariation::Cubic => t * t * t / 3.0,
            QuadraticVariation::Monomial { gamma, scale } => scale * t.powf(gamma),
        }
    }

    /// `⟨M⟩′(t)`.
    pub fn derivative(&self, t: f64) -> f64 {
        match *self {
            QuadraticVariation::Brownian => 1.0,
            QuadraticVariation::Cubic => t * t,
            QuadraticVariation::Monomial { gamma, scale } => scale * gamma * t.powf(gamma - 1.0),
        }
    }

    /// `⟨M⟩_t − ⟨M⟩_s`.
    pub fn increment(&self, s: f64, t: f64) -> f64 {
        self.eval(t) - self.eval(s)
    }

    /// The time at which `⟨M⟩` reaches `v ≥ 0` (the registry models are
    /// strictly increasing).
    pub fn inverse(&self, v: f64) -> f64 {
        match *self {
            QuadraticVariation::Brownian => v,
            QuadraticVariation::Cubic => (3.0 * v).cbrt(),
            QuadraticVariation::Monomial { gamma, scale } => (v / scale).powf(1.0 / gamma),
        }
    }

    fn check_interval(s: f64, t: f64) -> Result<(), GaussMartError> {
        if !(0.0 <= s && s <= t) {
            return Err(GaussMartError::InvalidInterval { s, t });
        }
        Ok(())
    }

    /// `I^{(1,0)}_{s,t}[⟨M⟩] = ∫ₛᵗ (⟨M⟩_u − ⟨M⟩_s) du`, in closed form.
    pub fn integral_10(&self, s: f64, t: f64) -> Result<f64, GaussMartError> {
        Self::check_interval(s, t)?;
        let primitive = |u: f64| -> f64 {
            // antiderivative of <M>(u)
            match *self {
                QuadraticVariation::Brownian => u * u / 2.0,
                QuadraticVariation::Cubic => u.powi(4) / 12.0,
                QuadraticVariation::Monomial { gamma, scale } => {
                    scale * u.powf(gamma + 1.0) / (gamma + 1.0)
                }
            }
        };
        Ok(primitive(t) - primitive(s) - self.eval(s) * (t - s))
    }

    /// `I^{(0,1)}_{s,t}[⟨M⟩] = ∫ₛᵗ (u − s) d⟨M⟩_u`, via the product rule.
    pub fn integral_01(&self, s: f64, t: f64) -> Result<f64, GaussMartError> {
        Ok((t - s) * self.increment(s, t) - self.integral_10(s, t)?)
    }

    /// `[⟨M⟩, h]_{s,t} = I^{(1,0)} − I^{(0,1)} = 2 I^{(1,0)} − (t−s)Δ⟨M⟩`.
    pub fn commutator_bracket(&self, s: f64, t: f64) -> Result<f64, GaussMartError> {
        Ok(2.0 * self.integral_10(s, t)? - (t - s) * self.increment(s, t))
    }

    /// Diffusion coefficient `a₁₁(t) = ⟨M⟩′(t)`, the limit of
    /// `(1/h)·𝔼[(W_{t+h} − W_t)²]` for signature-matched families.
    pub fn diffusion_limit(&self, t: f64) -> f64 {
        self.derivative(t)
    }

    /// The expected Stratonovich signature `𝔼[S^m_{s,t}[∘M]]` for `m ≤ 5`,
    /// with time adjoined as letter 0 (driver dimension 1).
    ///
    /// Nonzero coefficients: the empty word (1); all-zero words of length k
    /// ((t−s)^k/k!); all-one words of even length k ∈ {2,4}
    /// ((Δ⟨M⟩)^{k/2} / (k·(k/2)!)); (0,1,1) (½·I^{(0,1)}); (1,1,0)
    /// (½·I^{(1,0)}). Everything of odd degree vanishes, as does (1,0,1).
    pub fn expected_signature(
        &self,
        s: f64,
        t: f64,
        m: usize,
    ) -> Result<TruncatedTensor, GaussMartError> {
        Self::check_interval(s, t)?;
        if m > 5 {
            return Err(GaussMartError::OrderTooHigh { m });
        }
        let tau = t - s;
        let delta = self.increment(s, t);
        let mut sig = TruncatedTensor::zeros(1, m);
        let words: Vec<MultiIndex> = sig.basis().words().to_vec();
        for word in &words {
            let k = word.len();
            let value = if word.is_empty() {
                1.0
            } else if word.degree() % 2 == 1 {
                0.0
            } else if word.letters().iter().all(|&l| l == 0) {
                let mut fact = 1.0;
                for j in 2..=k {
                    fact *= j as f64;
                }
                tau.powi(k as i32) / fact
            } else if word.letters().iter().all(|&l| l == 1) {
                // even k in {2, 4}
                match k {
                    2 => delta / 2.0,
                    4 => delta * delta / 8.0,
                    _ => unreachable!("even all-one words at level <= 5 have length 2 or 4"),
                }
            } else if word.letters() == [0, 1, 1] {
                0.5 * self.integral_01(s, t)?
            } else if word.letters() == [1, 1, 0] {
                0.5 * self.integral_10(s, t)?
            } else {
                // the remaining even-degree mixed word at level <= 5 is (1,0,1)
                debug_assert_eq!(word.letters(), [1, 0, 1]);
                0.0
            };
            sig.set(word, value);
        }
        Ok(sig)
    }
}

/// Expected Stratonovich signature of Brownian motion at any order, as the
/// tensor exponential `exp((t−s)·(e₀ + ½·e₁⊗e₁))`. Second route to the
/// level-5 closed form, and the moment-matching target beyond level 5.
pub fn brownian_expected_signature_exp(s: f64, t: f64, m: usize) -> TruncatedTensor {
    let tau = t - s;
    let mut generator = TruncatedTensor::zeros(1, m);
    if let Some(i) = generator.basis().index_of(&MultiIndex(vec![0])) {
        generator.coeffs_mut()[i] = tau;
    }
    if let Some(i) = generator.basis().index_of(&MultiIndex(vec![1, 1])) {
        generator.coeffs_mut()[i] = tau / 2.0;
    }
    tensor_exp(&generator)
}

/// `exp(x)` in the truncated algebra for `x` with vanishing empty-word
/// coefficient; the series terminates by nilpotency.
pub fn tensor_exp(x: &TruncatedTensor) -> TruncatedTensor {
    assert_eq!(x.coeffs()[0], 0.0, "tensor_exp needs a vanishing constant term");
    let mut result = TruncatedTensor::unit(x.dimension(), x.order());
    let mut power = TruncatedTensor::unit(x.dimension(), x.order());
    for j in 1..=x.order().max(1) {
        power = power.concat_product(x).expect("matching shapes");
        if power.max_abs() == 0.0 {
            break;
        }
        result.axpy(1.0 / factorial(j), &power);
    }
    result
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|j| j as f64).product()
}

/// Monte-Carlo estimate of the expected signature together with per-word
/// standard errors.
#[derive(Debug, Clone)]
pub struct McExpectedSignature {
    pub mean: TruncatedTensor,
    pub std_error: TruncatedTensor,
    pub n_samples: usize,
}

/// Simulates `n_samples` discretized martingale paths with independent
/// Gaussian increments of variance `⟨M⟩(r_{j+1}) − ⟨M⟩(r_j)`, lifts each to a
/// piecewise-linear path and averages truncated signatures.
///
/// Samples are keyed by `(seed, sample index)` through counter-derived
/// streams and reduced in fixed chunk order, so the result is bit-identical
/// for a given `(seed, n_samples)` regardless of worker count.
pub fn mc_expected_signature_oracle(
    qv: &QuadraticVariation,
    s: f64,
    t: f64,
    m: usize,
    n_samples: usize,
    n_steps: usize,
    seed: u64,
) -> McExpectedSignature {
    assert!(n_steps >= 256, "oracle needs n_steps >= 256");
    assert!(n_samples >= 2);
    let breakpoints: Vec<f64> = (0..=n_steps)
        .map(|j| s + (t - s) * j as f64 / n_steps as f64)
        .collect();
    let increments_sd: Vec<f64> = (0..n_steps)
        .map(|j| qv.increment(breakpoints[j], breakpoints[j + 1]).max(0.0).sqrt())
        .collect();

    let n_words = TruncatedTensor::zeros(1, m).coeffs().len();
    const CHUNK: usize = 512;
    let n_chunks = n_samples.div_ceil(CHUNK);

    // per-chunk compensated (sum, sum of squares) per word, samples in index order
    type ChunkSums = (Vec<CompensatedSum>, Vec<CompensatedSum>);
    let partials: Vec<ChunkSums> = (0..n_chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut sums = vec![CompensatedSum::new(); n_words];
            let mut sq_sums = vec![CompensatedSum::new(); n_words];
            let lo = chunk * CHUNK;
            let hi = ((chunk + 1) * CHUNK).min(n_samples);
            let mut values = vec![0.0f64; n_steps + 1];
            for sample in lo..hi {
                let mut rng = counter_rng(seed, sample as u64);
                values[0] = 0.0;
                for j in 0..n_steps {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    values[j + 1] = values[j] + increments_sd[j] * z;
                }
                let path = PiecewiseLinearPath::scalar(breakpoints.clone(), values.clone())
                    .expect("valid grid");
                let sig = path.signature(m);
                for (w, &c) in sig.coeffs().iter().enumerate() {
                    sums[w].add(c);
                    sq_sums[w].add(c * c);
                }
            }
            (sums, sq_sums)
        })
        .collect();

    let mut mean = TruncatedTensor::zeros(1, m);
    let mut std_error = TruncatedTensor::zeros(1, m);
    let n = n_samples as f64;
    for w in 0..n_words {
        let mut total = CompensatedSum::new();
        let mut total_sq = CompensatedSum::new();
        for (sums, sq_sums) in &partials {
            total.add(sums[w].value());
            total_sq.add(sq_sums[w].value());
        }
        let mu = total.value() / n;
        let var = ((total_sq.value() - n * mu * mu) / (n - 1.0)).max(0.0);
        mean.coeffs_mut()[w] = mu;
        std_error.coeffs_mut()[w] = (var / n).sqrt();
    }
    McExpectedSignature {
        mean,
        std_error,
        n_samples,
    }
}
