//! Concentrability coefficients: how much mass propagated state
//! distributions can put on a state relative to a reference measure `ν`.
//!
//! Infinite coefficients are represented by `f64::INFINITY` and propagate
//! through all arithmetic, with the convention `0 · ∞ = 0`.

use rayon::prelude::*;

use crate::error::{check_dim, Error, Result};
use crate::kappa::xi;
use crate::linalg::{self, Matrix, Vector};
use crate::mdp::{Mdp, Policy, StateDistribution};

/// Default number of terms kept in the coefficient series.
pub const DEFAULT_I_MAX: usize = 400;

/// Computed ratios below one by at most this much are rounding noise.
const FLOOR_TOL: f64 = 1e-12;

/// `a · b` with `0 · ∞ = 0`.
pub fn mul_inf(a: f64, b: f64) -> f64 {
    if a == 0.0 || b == 0.0 {
        0.0
    } else {
        a * b
    }
}

/// A sequence of sup-ratios, floored at one.
#[derive(Debug, Clone, PartialEq)]
pub struct RatioSequence {
    /// Values after flooring.
    pub values: Vec<f64>,
    /// Values as computed.
    pub raw: Vec<f64>,
}

impl RatioSequence {
    fn from_raw(raw: Vec<f64>) -> Self {
        let values = raw.iter().map(|&x| floor_at_one(x)).collect();
        Self { values, raw }
    }

    /// Whether any entry was lifted to one.
    pub fn floored(&self) -> bool {
        self.values.iter().zip(&self.raw).any(|(v, r)| v != r)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

fn floor_at_one(x: f64) -> f64 {
    if (1.0 - FLOOR_TOL..1.0).contains(&x) {
        1.0
    } else {
        x
    }
}

/// `max_s num(s)/ν(s)`, infinite when `ν(s) = 0 < num(s)`.
pub fn max_ratio(num: &[f64], nu: &[f64]) -> f64 {
    num.iter()
        .zip(nu)
        .map(|(&n, &d)| {
            if d > 0.0 {
                n / d
            } else if n > 0.0 {
                f64::INFINITY
            } else {
                0.0
            }
        })
        .fold(0.0, f64::max)
}

fn check_measures(mdp: &Mdp, mu: &StateDistribution, nu: &StateDistribution) -> Result<()> {
    mdp.check_distribution(mu)?;
    mdp.check_distribution(nu)
}

/// `c(0..=i_max)`: the largest mass any length-`i` sequence of
/// deterministic policies delivers from `μ` to a single state, relative to
/// `ν`. Computed per target state by a backward program that picks the
/// best action in every state at every step.
pub fn c_seq(mdp: &Mdp, mu: &StateDistribution, nu: &StateDistribution, i_max: usize) -> Result<RatioSequence> {
    check_measures(mdp, mu, nu)?;
    let n = mdp.n_states();
    // masses[t][i] = max over sequences of (μ P_1 … P_i)(t)
    let masses: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|t| {
            let mut w = vec![0.0; n];
            w[t] = 1.0;
            let mut out = Vec::with_capacity(i_max + 1);
            out.push(mu.dot(&w));
            for _ in 0..i_max {
                w = (0..n)
                    .map(|s| {
                        (0..mdp.n_actions())
                            .map(|a| mdp.expected_next(s, a, &w))
                            .fold(f64::NEG_INFINITY, f64::max)
                    })
                    .collect();
                out.push(mu.dot(&w));
            }
            out
        })
        .collect();
    let raw = (0..=i_max)
        .map(|i| {
            let num: Vec<f64> = masses.iter().map(|m| m[i]).collect();
            max_ratio(&num, nu.as_slice())
        })
        .collect();
    Ok(RatioSequence::from_raw(raw))
}

/// `c^{π*}(i) = max_s (μ (P^{π*})^i)(s)/ν(s)` for `i = 0..=i_max`.
pub fn c_pi_star_seq(
    mdp: &Mdp,
    pi_star: &Policy,
    mu: &StateDistribution,
    nu: &StateDistribution,
    i_max: usize,
) -> Result<RatioSequence> {
    check_measures(mdp, mu, nu)?;
    mdp.check_policy(pi_star)?;
    let kt = mdp.policy_kernel(pi_star).transpose();
    let mut row = Vector::from_column_slice(mu.as_slice());
    let mut raw = Vec::with_capacity(i_max + 1);
    raw.push(max_ratio(row.as_slice(), nu.as_slice()));
    for _ in 0..i_max {
        row = &kt * row;
        raw.push(max_ratio(row.as_slice(), nu.as_slice()));
    }
    Ok(RatioSequence::from_raw(raw))
}

/// A truncated series together with a bound on the omitted tail.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesValue {
    pub value: f64,
    pub tail: f64,
    /// Last index included in the sum.
    pub truncation_index: usize,
}

impl SeriesValue {
    /// `value + tail`, an upper bound on the full series when the tail
    /// bound is rigorous.
    pub fn upper(&self) -> f64 {
        self.value + self.tail
    }

    pub fn is_finite(&self) -> bool {
        self.upper().is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TailKind {
    /// Bounded with a known majorant of every `c(i)`.
    Rigorous,
    /// Bounded by the largest observed value on a sequence observed to be
    /// non-increasing.
    Extrapolated,
    /// Bounded by the largest observed value with no monotonicity evidence.
    Heuristic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeriesCoefficients {
    pub c1: SeriesValue,
    pub c2: SeriesValue,
    /// `(k, C^{(2,k)})`.
    pub c2k: Vec<(usize, SeriesValue)>,
    pub c_pi_star_1: SeriesValue,
    pub tail_kind: TailKind,
}

impl SeriesCoefficients {
    pub fn c2k(&self, k: usize) -> Option<SeriesValue> {
        self.c2k.iter().find(|(kk, _)| *kk == k).map(|(_, v)| *v)
    }
}

fn non_increasing(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[1] <= w[0])
}

/// `(1-γ)Σ γ^i c(i)`.
fn geometric_series(c: &[f64], gamma: f64, majorant: f64) -> SeriesValue {
    let last = c.len() - 1;
    let mut acc = 0.0;
    let mut g = 1.0;
    for &ci in c {
        acc += g * ci;
        g *= gamma;
    }
    let value = (1.0 - gamma) * acc;
    SeriesValue {
        value,
        tail: mul_inf(majorant, gamma.powi((last + 1) as i32)),
        truncation_index: last,
    }
}

/// `(1-γ)² Σ_{i,j} γ^{i+j} c(i+j+k) = (1-γ)² Σ_m (m+1) γ^m c(m+k)`.
fn double_series(c: &[f64], gamma: f64, k: usize, majorant: f64) -> Result<SeriesValue> {
    if k >= c.len() {
        return Err(Error::invalid(format!("sequence of length {} too short for k={k}", c.len())));
    }
    let last = c.len() - 1 - k;
    let mut acc = 0.0;
    let mut g = 1.0;
    for m in 0..=last {
        acc += (m + 1) as f64 * g * c[m + k];
        g *= gamma;
    }
    let n = (last + 1) as f64;
    let tail_factor = gamma.powi((last + 1) as i32) * (n * (1.0 - gamma) + 1.0);
    Ok(SeriesValue {
        value: (1.0 - gamma).powi(2) * acc,
        tail: mul_inf(majorant, tail_factor),
        truncation_index: last,
    })
}

/// `C^{(1)}`, `C^{(2)}`, `C^{(2,k)}` for every `k` in `k_list`, and
/// `C^{π*(1)}`, from finite prefixes of `c` and `c^{π*}`.
///
/// `majorant` is an upper bound on every `c(i)` and `c^{π*}(i)`, such as
/// `1/min ν`; without one the tail is bounded by the largest observed value
/// and flagged accordingly.
pub fn series_coefficients(
    c: &[f64],
    c_pi_star: &[f64],
    gamma: f64,
    k_list: &[usize],
    majorant: Option<f64>,
) -> Result<SeriesCoefficients> {
    if c.is_empty() || c_pi_star.is_empty() {
        return Err(Error::invalid("coefficient sequences must be non-empty"));
    }
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::invalid(format!("gamma must lie in (0,1), got {gamma}")));
    }
    let observed = c.iter().chain(c_pi_star).copied().fold(0.0, f64::max);
    let (m, tail_kind) = match majorant {
        Some(m) => {
            // Pushed-forward masses can exceed their exact bound by rounding.
            if !(m >= observed * (1.0 - 1e-12)) {
                return Err(Error::invalid(format!("majorant {m} is below an observed value {observed}")));
            }
            (m.max(observed), TailKind::Rigorous)
        }
        None if non_increasing(c) && non_increasing(c_pi_star) => (observed, TailKind::Extrapolated),
        None => (observed, TailKind::Heuristic),
    };
    let c2k = k_list
        .iter()
        .map(|&k| double_series(c, gamma, k, m).map(|v| (k, v)))
        .collect::<Result<Vec<_>>>()?;
    Ok(SeriesCoefficients {
        c1: geometric_series(c, gamma, m),
        c2: double_series(c, gamma, 0, m)?,
        c2k,
        c_pi_star_1: geometric_series(c_pi_star, gamma, m),
        tail_kind,
    })
}

/// `D_κ^π = (1-κγ)(I - κγP^π)^{-1}`.
pub fn d_kappa_matrix(mdp: &Mdp, pi: &Policy, kappa: f64) -> Result<Matrix> {
    if !(0.0..=1.0).contains(&kappa) {
        return Err(Error::invalid(format!("kappa must lie in [0,1], got {kappa}")));
    }
    mdp.check_policy(pi)?;
    let beta = kappa * mdp.gamma();
    let inv = linalg::inverse_discounted(&mdp.policy_kernel(pi), beta)?;
    Ok(inv * (1.0 - beta))
}

/// `d^{π*}_{κ,μ} = (1-ξ) μ (I - ξ D_κ^{π*} P^{π*})^{-1}`.
pub fn d_pi_star_kappa(mdp: &Mdp, pi_star: &Policy, kappa: f64, mu: &StateDistribution) -> Result<Vec<f64>> {
    mdp.check_distribution(mu)?;
    let x = xi(mdp.gamma(), kappa)?;
    let dp = d_kappa_matrix(mdp, pi_star, kappa)? * mdp.policy_kernel(pi_star);
    let d = linalg::solve_discounted_left(&dp, x, &Vector::from_column_slice(mu.as_slice()))? * (1.0 - x);
    let sum: f64 = d.iter().sum();
    if (sum - 1.0).abs() > 1e-10 {
        return Err(Error::InvalidMeasure(format!("discounted occupancy sums to {sum}")));
    }
    Ok(d.iter().copied().collect())
}

/// `C^{π*}_κ(μ,ν) = max_s d^{π*}_{κ,μ}(s)/ν(s)`.
pub fn c_pi_star_kappa(
    mdp: &Mdp,
    pi_star: &Policy,
    kappa: f64,
    mu: &StateDistribution,
    nu: &StateDistribution,
) -> Result<f64> {
    mdp.check_distribution(nu)?;
    let d = d_pi_star_kappa(mdp, pi_star, kappa, mu)?;
    Ok(floor_at_one(max_ratio(&d, nu.as_slice())))
}

/// `C^{π*(1)}_κ = (ξ/γ) C^{π*(1)} + (1-ξ) κ c(0)`.
pub fn c_pi_star_1_kappa(c_pi_star_1: f64, c0: f64, kappa: f64, gamma: f64) -> Result<f64> {
    let x = xi(gamma, kappa)?;
    Ok(mul_inf(x / gamma, c_pi_star_1) + mul_inf((1.0 - x) * kappa, c0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Lemma3Report {
    pub kappa: f64,
    pub kappa_prime: f64,
    /// `C^{π*}_κ(μ,ν)`.
    pub c_kappa: f64,
    pub alpha_star: f64,
    /// `C^{π*}_{κ'}(μ, ν(α*))`.
    pub c_kappa_prime_mixed: f64,
    /// `C^{π*}_{κ'}(μ,ν) ≤ C^{π*}_κ(μ,ν)` when `μ = ν`, else `None`.
    pub monotone_same_measure: Option<bool>,
    pub holds: bool,
}

/// Checks that moving from κ to κ' > κ and mixing `μ` into the sampling
/// measure by `α*` does not increase the coefficient.
pub fn verify_lemma3(
    mdp: &Mdp,
    pi_star: &Policy,
    mu: &StateDistribution,
    nu: &StateDistribution,
    kappa: f64,
    kappa_prime: f64,
) -> Result<Lemma3Report> {
    if !(kappa_prime > kappa) {
        return Err(Error::invalid(format!("need kappa' > kappa, got {kappa_prime} <= {kappa}")));
    }
    let c_kappa = c_pi_star_kappa(mdp, pi_star, kappa, mu, nu)?;
    let x = xi(mdp.gamma(), kappa)?;
    let weight = (1.0 - kappa_prime) / ((1.0 - x) * (kappa_prime - kappa));
    let alpha_star = 1.0 / (1.0 + mul_inf(weight, c_kappa));
    let nu_mixed = nu.mix(mu, alpha_star)?;
    let c_kappa_prime_mixed = c_pi_star_kappa(mdp, pi_star, kappa_prime, mu, &nu_mixed)?;
    let monotone_same_measure = if mu == nu {
        Some(c_pi_star_kappa(mdp, pi_star, kappa_prime, mu, nu)? <= c_kappa + 1e-9)
    } else {
        None
    };
    Ok(Lemma3Report {
        kappa,
        kappa_prime,
        c_kappa,
        alpha_star,
        c_kappa_prime_mixed,
        holds: c_kappa_prime_mixed <= c_kappa + 1e-9 && monotone_same_measure.unwrap_or(true),
        monotone_same_measure,
    })
}

/// `‖(I - ξ_{κ'}D_{κ'}P)^{-1} - [((κ'-κ)/(1-κ)) I + ((1-κ')/(1-κ))(I - ξ_κ D_κ P)^{-1}]‖∞`.
pub fn help1_residual(mdp: &Mdp, pi: &Policy, kappa: f64, kappa_prime: f64) -> Result<f64> {
    if !(kappa < kappa_prime && kappa_prime <= 1.0 && kappa >= 0.0) {
        return Err(Error::invalid(format!("need 0 <= kappa < kappa' <= 1, got {kappa}, {kappa_prime}")));
    }
    let p = mdp.policy_kernel(pi);
    let n = mdp.n_states();
    let resolvent = |k: f64| -> Result<Matrix> {
        let x = xi(mdp.gamma(), k)?;
        let dp = d_kappa_matrix(mdp, pi, k)? * &p;
        linalg::inverse_discounted(&dp, x)
    };
    let lhs = resolvent(kappa_prime)?;
    let rhs = Matrix::identity(n, n) * ((kappa_prime - kappa) / (1.0 - kappa))
        + resolvent(kappa)? * ((1.0 - kappa_prime) / (1.0 - kappa));
    Ok(linalg::max_row_sum_norm(&(lhs - rhs)))
}

/// `binom(n, k)` as a float.
fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, j| acc * (n - j) as f64 / (j + 1) as f64)
}

/// Compares `(ξ D_κ^π P^π)^i` with the series
/// `Σ_{t=i-1}^{T} binom(t,i-1) γ^{t+1} (1-κ)^i κ^{t-i+1} (P^π)^{t+1}`.
/// Returns the max-norm residual and a bound on the omitted terms
/// `t > T`, namely `(1-κ)γ^{T+2}/(1-γ)`.
pub fn lemma5_residual(mdp: &Mdp, pi: &Policy, kappa: f64, i: usize, t_max: usize) -> Result<(f64, f64)> {
    if i < 1 {
        return Err(Error::invalid("power i must be at least 1"));
    }
    if t_max + 1 < i {
        return Err(Error::invalid(format!("truncation {t_max} below i-1 = {}", i - 1)));
    }
    let gamma = mdp.gamma();
    let x = xi(gamma, kappa)?;
    let p = mdp.policy_kernel(pi);
    let n = mdp.n_states();
    let base = d_kappa_matrix(mdp, pi, kappa)? * &p * x;
    let mut lhs = Matrix::identity(n, n);
    for _ in 0..i {
        lhs = &lhs * &base;
    }
    let mut rhs = Matrix::zeros(n, n);
    let mut p_pow = Matrix::identity(n, n);
    for _ in 0..i - 1 {
        p_pow = &p_pow * &p;
    }
    for t in (i - 1)..=t_max {
        p_pow = &p_pow * &p;
        let w = binomial(t, i - 1)
            * gamma.powi((t + 1) as i32)
            * (1.0 - kappa).powi(i as i32)
            * kappa.powi((t + 1 - i) as i32);
        rhs += &p_pow * w;
    }
    let tail = (1.0 - kappa) * gamma.powi((t_max + 2) as i32) / (1.0 - gamma);
    Ok((linalg::max_row_sum_norm(&(lhs - rhs)), tail))
}

#[derive(Debug, Clone, PartialEq)]
pub struct KappaCoefficients {
    pub kappa: f64,
    pub c_pi_star_kappa: f64,
    /// Evaluated with the upper value of `C^{π*(1)}`.
    pub c_pi_star_1_kappa: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientReport {
    pub c_seq: RatioSequence,
    pub c_pi_star_seq: RatioSequence,
    pub series: SeriesCoefficients,
    pub per_kappa: Vec<KappaCoefficients>,
    /// `C^{π*}(μ,ν)`, the κ = 0 value of `C^{π*}_κ`.
    pub c_pi_star: f64,
}

impl CoefficientReport {
    pub fn c0(&self) -> f64 {
        self.c_seq.values[0]
    }

    pub fn kappa(&self, kappa: f64) -> Option<&KappaCoefficients> {
        self.per_kappa.iter().find(|k| k.kappa == kappa)
    }

    /// Whether any coefficient was lifted to one.
    pub fn floored(&self) -> bool {
        self.c_seq.floored() || self.c_pi_star_seq.floored()
    }
}

/// All coefficients for `(μ, ν)` with sequences up to `i_max` and the
/// rigorous tail majorant `1/min ν` (infinite when `ν` has a zero).
pub fn coefficient_report(
    mdp: &Mdp,
    pi_star: &Policy,
    mu: &StateDistribution,
    nu: &StateDistribution,
    kappas: &[f64],
    k_list: &[usize],
    i_max: usize,
) -> Result<CoefficientReport> {
    let max_k = k_list.iter().copied().max().unwrap_or(0);
    let c = c_seq(mdp, mu, nu, i_max + max_k)?;
    let cps = c_pi_star_seq(mdp, pi_star, mu, nu, i_max)?;
    let min_nu = nu.as_slice().iter().copied().fold(f64::INFINITY, f64::min);
    let majorant = if min_nu > 0.0 { 1.0 / min_nu } else { f64::INFINITY };
    // C1 and C2 use the same prefix length as the k-shifted sums.
    let mut series = series_coefficients(&c.values, &cps.values, mdp.gamma(), k_list, Some(majorant))?;
    let c_prefix = &c.values[..=i_max];
    let base = series_coefficients(c_prefix, &cps.values, mdp.gamma(), &[], Some(majorant))?;
    series.c1 = base.c1;
    series.c2 = base.c2;
    let per_kappa = kappas
        .iter()
        .map(|&kappa| {
            Ok(KappaCoefficients {
                kappa,
                c_pi_star_kappa: c_pi_star_kappa(mdp, pi_star, kappa, mu, nu)?,
                c_pi_star_1_kappa: c_pi_star_1_kappa(series.c_pi_star_1.upper(), c.values[0], kappa, mdp.gamma())?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    check_dim("c sequence length", i_max + max_k + 1, c.len())?;
    Ok(CoefficientReport {
        c_pi_star: c_pi_star_kappa(mdp, pi_star, 0.0, mu, nu)?,
        c_seq: c,
        c_pi_star_seq: cps,
        series,
        per_kappa,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_sequence_sums_to_one() {
        let c = vec![1.0; 2000];
        let s = series_coefficients(&c, &c, 0.9, &[0, 3, 10], Some(1.0)).unwrap();
        assert!((s.c1.value - 1.0).abs() < 1e-12);
        assert!((s.c2.value - 1.0).abs() < 1e-12);
        for (_, v) in &s.c2k {
            assert!((v.value - 1.0).abs() < 1e-12);
        }
        assert!((s.c1.upper() - 1.0).abs() < 1e-12);
        assert_eq!(s.tail_kind, TailKind::Rigorous);
    }

    #[test]
    fn infinite_entries_propagate() {
        let mut c = vec![1.0; 50];
        c[3] = f64::INFINITY;
        let s = series_coefficients(&c, &[1.0; 50], 0.9, &[5], None).unwrap();
        assert!(s.c1.value.is_infinite() && s.c2.value.is_infinite());
        assert!(s.c2k(5).unwrap().value.is_finite());
        assert_eq!(s.tail_kind, TailKind::Heuristic);
        assert!(s.c2k(5).unwrap().upper().is_infinite());
    }

    #[test]
    fn series_rejects_bad_input() {
        assert!(series_coefficients(&[], &[1.0], 0.9, &[], None).is_err());
        assert!(series_coefficients(&[1.0], &[1.0], 0.9, &[3], None).is_err());
        assert!(series_coefficients(&[2.0], &[1.0], 0.9, &[], Some(1.5)).is_err());
    }

    #[test]
    fn majorant_one_ulp_low_is_accepted() {
        let observed = 23.7924652366087;
        let m = 23.79246523660869;
        let s = series_coefficients(&[observed], &[1.0], 0.9, &[], Some(m)).unwrap();
        assert_eq!(s.tail_kind, TailKind::Rigorous);
        assert!(s.c1.tail >= observed * 0.9);
    }

    #[test]
    fn mul_inf_convention() {
        assert_eq!(mul_inf(0.0, f64::INFINITY), 0.0);
        assert_eq!(mul_inf(f64::INFINITY, 0.0), 0.0);
        assert!(mul_inf(2.0, f64::INFINITY).is_infinite());
    }

    #[test]
    fn max_ratio_infinity_handling() {
        assert!(max_ratio(&[0.5, 0.5], &[1.0, 0.0]).is_infinite());
        assert_eq!(max_ratio(&[1.0, 0.0], &[1.0, 0.0]), 1.0);
    }

    #[test]
    fn c_pi_star_1_kappa_endpoints() {
        assert!((c_pi_star_1_kappa(3.0, 2.0, 0.0, 0.9).unwrap() - 3.0).abs() < 1e-15);
        assert!((c_pi_star_1_kappa(3.0, 2.0, 1.0, 0.9).unwrap() - 2.0).abs() < 1e-15);
        assert!((c_pi_star_1_kappa(1.0, 1.0, 0.4, 0.9).unwrap() - 1.0).abs() < 1e-15);
        assert!(c_pi_star_1_kappa(f64::INFINITY, 1.0, 1.0, 0.9).unwrap().is_finite());
    }

    #[test]
    fn binomials() {
        assert_eq!(binomial(5, 0), 1.0);
        assert_eq!(binomial(5, 2), 10.0);
        assert_eq!(binomial(4, 4), 1.0);
    }

    #[test]
    fn lemma3_requires_ordered_kappas() {
        let mdp = Mdp::new(0.9, vec![vec![1.0]], vec![vec![vec![1.0]]]).unwrap();
        let pi = Policy::uniform(1, 1);
        let d = StateDistribution::uniform(1);
        assert!(verify_lemma3(&mdp, &pi, &d, &d, 0.5, 0.5).is_err());
        let rep = verify_lemma3(&mdp, &pi, &d, &d, 0.2, 0.8).unwrap();
        assert!(rep.holds);
        assert_eq!(rep.c_kappa, 1.0);
        assert_eq!(rep.c_kappa_prime_mixed, 1.0);
    }
}
