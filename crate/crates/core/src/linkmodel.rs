//! Per-link loss and delay models.
//!
//! Losses are memoryless Bernoulli erasures. Delays are positive integers
//! drawn from a pmf obtained by integrating a continuous density over
//! unit intervals; the built-in density is log-normal, and an arbitrary
//! pmf can be supplied as a table. On top of the base pmf this module
//! provides the two window distributions the metric engine consumes: the
//! age-conditioned pmf of a packet known to still be outstanding, and the
//! unconditioned pmf of a hypothetical packet transmitted now.

use crate::error::{Error, Result};
use crate::rng::{bernoulli, uniform_f64};
use rand_core::RngCore;
use serde::{Deserialize, Serialize};

/// Default truncation horizon for discretized delay pmfs. Residual tail
/// mass is folded into the last bin so the pmf stays a distribution.
pub const DEFAULT_Z_CAP: u32 = 64;

/// Mass tolerance for pmf validation.
const MASS_EPS: f64 = 1e-9;

/// Bernoulli erasure probability of a link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossModel {
    pub pe: f64,
}

impl LossModel {
    pub fn new(pe: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&pe) {
            return Err(Error::InvalidParameter(format!(
                "loss.pe must lie in [0,1], got {pe}"
            )));
        }
        Ok(LossModel { pe })
    }

    pub fn lossless() -> Self {
        LossModel { pe: 0.0 }
    }
}

/// The continuous-or-degenerate law behind a delay pmf.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DelayKind {
    /// Every packet takes exactly one slot.
    Unit,
    /// ln Z ~ Normal(mu, sigma), integrated over unit intervals.
    Lognormal { mu: f64, sigma: f64 },
    /// Explicit pmf for z = 1..=len.
    Table { pmf: Vec<f64> },
}

/// A discretized delay distribution: P[z] for z = 1..=z_cap.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayModel {
    kind: DelayKind,
    pmf: Vec<f64>,
    cdf: Vec<f64>,
}

impl DelayModel {
    pub fn new(kind: DelayKind, z_cap: u32) -> Result<Self> {
        let pmf = discretize(&kind, z_cap)?;
        let mut cdf = Vec::with_capacity(pmf.len());
        let mut acc = 0.0;
        for &p in &pmf {
            acc += p;
            cdf.push(acc);
        }
        Ok(DelayModel { kind, pmf, cdf })
    }

    pub fn unit() -> Self {
        DelayModel::new(DelayKind::Unit, 1).unwrap()
    }

    pub fn lognormal(mu: f64, sigma: f64) -> Result<Self> {
        DelayModel::new(DelayKind::Lognormal { mu, sigma }, DEFAULT_Z_CAP)
    }

    pub fn table(pmf: Vec<f64>) -> Result<Self> {
        let cap = pmf.len() as u32;
        DelayModel::new(DelayKind::Table { pmf }, cap)
    }

    pub fn kind(&self) -> &DelayKind {
        &self.kind
    }

    pub fn z_cap(&self) -> u32 {
        self.pmf.len() as u32
    }

    /// P[Z = z]; zero outside 1..=z_cap.
    pub fn mass(&self, z: u32) -> f64 {
        if z == 0 || z as usize > self.pmf.len() {
            0.0
        } else {
            self.pmf[z as usize - 1]
        }
    }

    /// P[Z <= z].
    pub fn cdf(&self, z: u32) -> f64 {
        if z == 0 {
            0.0
        } else {
            let i = (z as usize).min(self.cdf.len());
            self.cdf[i - 1]
        }
    }

    pub fn pmf(&self) -> &[f64] {
        &self.pmf
    }

    /// Mean of the discretized distribution.
    pub fn discrete_mean(&self) -> f64 {
        self.pmf
            .iter()
            .enumerate()
            .map(|(i, &p)| (i + 1) as f64 * p)
            .sum()
    }

    pub fn sample<R: RngCore>(&self, rng: &mut R) -> u32 {
        let u = uniform_f64(rng);
        // Inverse-CDF walk; the last bin absorbs rounding.
        for (i, &c) in self.cdf.iter().enumerate() {
            if u < c {
                return i as u32 + 1;
            }
        }
        self.pmf.len() as u32
    }
}

/// Closed-form mean and variance of a log-normal with location `mu` and
/// scale `sigma`.
pub fn lognormal_moments(mu: f64, sigma: f64) -> (f64, f64) {
    let s2 = sigma * sigma;
    let mean = (mu + s2 / 2.0).exp();
    let var = (s2.exp() - 1.0) * (2.0 * mu + s2).exp();
    (mean, var)
}

/// Standard normal CDF via erf; libm's erf is accurate to ~1 ulp, well
/// inside the 1e-10 stability budget the pmf products need.
fn normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

fn lognormal_cdf(r: f64, mu: f64, sigma: f64) -> f64 {
    if r <= 0.0 {
        0.0
    } else {
        normal_cdf((r.ln() - mu) / sigma)
    }
}

/// P[z] = F(z) - F(z-1) for z < z_cap, with the residual tail folded into
/// the last bin.
pub fn discretize(kind: &DelayKind, z_cap: u32) -> Result<Vec<f64>> {
    if z_cap < 1 {
        return Err(Error::InvalidParameter("z_cap must be >= 1".into()));
    }
    match kind {
        DelayKind::Unit => {
            let mut pmf = vec![0.0; z_cap as usize];
            pmf[0] = 1.0;
            Ok(pmf)
        }
        DelayKind::Lognormal { mu, sigma } => {
            if *sigma <= 0.0 || !sigma.is_finite() || !mu.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "lognormal requires finite mu and sigma > 0, got mu={mu}, sigma={sigma}"
                )));
            }
            let mut pmf = Vec::with_capacity(z_cap as usize);
            for z in 1..z_cap {
                pmf.push(
                    lognormal_cdf(z as f64, *mu, *sigma)
                        - lognormal_cdf(z as f64 - 1.0, *mu, *sigma),
                );
            }
            pmf.push(1.0 - lognormal_cdf(z_cap as f64 - 1.0, *mu, *sigma));
            Ok(pmf)
        }
        DelayKind::Table { pmf } => {
            if pmf.is_empty() {
                return Err(Error::InvalidParameter("table pmf must be non-empty".into()));
            }
            if pmf.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
                return Err(Error::InvalidParameter(
                    "table pmf entries must lie in [0,1]".into(),
                ));
            }
            let total: f64 = pmf.iter().sum();
            if !(1.0 - MASS_EPS..=1.0 + MASS_EPS).contains(&total) {
                return Err(Error::InvalidParameter(format!(
                    "table pmf must sum to 1 within {MASS_EPS}, got {total}"
                )));
            }
            Ok(pmf.clone())
        }
    }
}

/// Loss plus delay: the full model of one link.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkSpec {
    pub loss: LossModel,
    pub delay: DelayModel,
}

impl LinkSpec {
    pub fn new(loss: LossModel, delay: DelayModel) -> Self {
        LinkSpec { loss, delay }
    }

    pub fn lossless_unit() -> Self {
        LinkSpec::new(LossModel::lossless(), DelayModel::unit())
    }
}

/// Result of putting one packet on the wire.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinkOutcome {
    Erased,
    Delayed(u32),
}

/// Erase with probability pe, otherwise draw a delay. The delay draw is
/// consumed only on success so erased packets cost one uniform.
pub fn sample_outcome<R: RngCore>(spec: &LinkSpec, rng: &mut R) -> LinkOutcome {
    if bernoulli(rng, spec.loss.pe) {
        LinkOutcome::Erased
    } else {
        LinkOutcome::Delayed(spec.delay.sample(rng))
    }
}

/// One entry of a window distribution: delay value and its probability.
pub type WindowEntry = (u32, f64);

/// Conditional window of a packet transmitted `age` slots ago and not yet
/// received: for each z in (age, age + delta], the probability that it
/// arrives with that delay, conditioned on not having arrived and scaled
/// by the success probability.
pub fn conditional_pmf(spec: &LinkSpec, age: u64, delta: u32) -> Result<Vec<WindowEntry>> {
    if age < 1 {
        return Err(Error::InvalidParameter(format!(
            "outstanding age must be >= 1, got {age}"
        )));
    }
    if delta < 1 {
        return Err(Error::InvalidParameter("delta must be >= 1".into()));
    }
    let already = if age >= spec.delay.z_cap() as u64 {
        1.0
    } else {
        spec.delay.cdf(age as u32)
    };
    let residual = 1.0 - already;
    if residual <= MASS_EPS {
        return Err(Error::DegenerateDelayState { age });
    }
    let succ = 1.0 - spec.loss.pe;
    Ok((1..=delta)
        .map(|d| {
            let z = age as u32 + d;
            (z, spec.delay.mass(z) / residual * succ)
        })
        .collect())
}

/// Window of a hypothetical packet transmitted at the current slot: for
/// each z in [1, delta], the unconditioned pmf scaled by the success
/// probability.
pub fn fresh_pmf(spec: &LinkSpec, delta: u32) -> Result<Vec<WindowEntry>> {
    if delta < 1 {
        return Err(Error::InvalidParameter("delta must be >= 1".into()));
    }
    let succ = 1.0 - spec.loss.pe;
    Ok((1..=delta).map(|z| (z, spec.delay.mass(z) * succ)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedTree;

    /// Independent normal CDF by Simpson integration of the density.
    fn phi_oracle(x: f64) -> f64 {
        if x < -12.0 {
            return 0.0;
        }
        let lo = -12.0f64;
        let n = 20_000;
        let h = (x - lo) / n as f64;
        let pdf = |t: f64| (-t * t / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let mut acc = pdf(lo) + pdf(x);
        for i in 1..n {
            let t = lo + i as f64 * h;
            acc += pdf(t) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        acc * h / 3.0
    }

    #[test]
    fn normal_cdf_matches_quadrature_oracle() {
        for &x in &[-3.0, -1.0, -0.5, 0.0, 0.386294, 1.0, 2.5] {
            assert!(
                (normal_cdf(x) - phi_oracle(x)).abs() < 1e-9,
                "x={x}: {} vs {}",
                normal_cdf(x),
                phi_oracle(x)
            );
        }
    }

    #[test]
    fn unit_pmf_is_a_point_mass() {
        let m = DelayModel::unit();
        assert_eq!(m.mass(1), 1.0);
        assert_eq!(m.mass(2), 0.0);
        assert_eq!(m.discrete_mean(), 1.0);
    }

    #[test]
    fn lognormal_first_bins_match_cdf_oracle() {
        // P[1] = Phi((ln 1 - 0.5)/0.5) = Phi(-1); P[2] = Phi((ln 2 - 0.5)/0.5) - Phi(-1).
        let m = DelayModel::lognormal(0.5, 0.5).unwrap();
        let p1 = phi_oracle(-1.0);
        let p2 = phi_oracle((2f64.ln() - 0.5) / 0.5) - p1;
        assert!((m.mass(1) - p1).abs() < 1e-9);
        assert!((m.mass(2) - p2).abs() < 1e-9);
        assert!((m.mass(1) - 0.15866).abs() < 1e-4);
        assert!((m.mass(2) - 0.4917).abs() < 1e-4);
    }

    #[test]
    fn pmf_mass_sums_to_one_after_folding() {
        for (mu, sigma) in [(0.5, 0.5), (1.0, 0.5), (1.0, 1.0)] {
            let m = DelayModel::lognormal(mu, sigma).unwrap();
            let total: f64 = m.pmf().iter().sum();
            assert!((total - 1.0).abs() < 1e-9, "({mu},{sigma}): {total}");
        }
    }

    #[test]
    fn moments_match_table_values() {
        let cases = [
            (0.5, 0.5, 1.86, 0.99),
            (1.0, 1.0, 4.48, 34.51),
            (1.0, 0.5, 3.08, 2.69),
        ];
        for (mu, sigma, mean, var) in cases {
            let (m, v) = lognormal_moments(mu, sigma);
            assert!((m - mean).abs() < 0.01, "mean({mu},{sigma}) = {m}");
            assert!((v - var).abs() < 0.01, "var({mu},{sigma}) = {v}");
        }
    }

    #[test]
    fn discrete_mean_brackets_continuous_mean() {
        for (mu, sigma) in [(0.5, 0.5), (1.0, 0.5), (1.0, 1.0)] {
            let m = DelayModel::lognormal(mu, sigma).unwrap();
            let (cont, _) = lognormal_moments(mu, sigma);
            let disc = m.discrete_mean();
            assert!(
                disc >= cont && disc <= cont + 1.0,
                "({mu},{sigma}): discrete {disc} vs continuous {cont}"
            );
        }
    }

    #[test]
    fn sigma_must_be_positive() {
        assert!(DelayModel::lognormal(0.5, 0.0).is_err());
        assert!(DelayModel::lognormal(0.5, -1.0).is_err());
    }

    #[test]
    fn sampling_respects_erasure_extremes() {
        let mut rng = SeedTree::from_master(3).rng();
        let always = LinkSpec::new(LossModel::new(1.0).unwrap(), DelayModel::unit());
        let never = LinkSpec::lossless_unit();
        for _ in 0..100 {
            assert_eq!(sample_outcome(&always, &mut rng), LinkOutcome::Erased);
            assert_eq!(sample_outcome(&never, &mut rng), LinkOutcome::Delayed(1));
        }
    }

    #[test]
    fn erased_fraction_near_one_third() {
        let spec = LinkSpec::new(
            LossModel::new(1.0 / 3.0).unwrap(),
            DelayModel::lognormal(0.5, 0.5).unwrap(),
        );
        let mut rng = SeedTree::from_master(17).rng();
        let n = 100_000;
        let erased = (0..n)
            .filter(|_| sample_outcome(&spec, &mut rng) == LinkOutcome::Erased)
            .count();
        // 3 sigma of a Bernoulli(1/3) count.
        let sigma = (n as f64 * (1.0 / 3.0) * (2.0 / 3.0)).sqrt();
        assert!((erased as f64 - n as f64 / 3.0).abs() < 3.0 * sigma);
    }

    #[test]
    fn empirical_delay_mean_matches_pmf_mean() {
        let m = DelayModel::lognormal(1.0, 1.0).unwrap();
        let mut rng = SeedTree::from_master(23).rng();
        let n = 100_000u32;
        let sum: u64 = (0..n).map(|_| m.sample(&mut rng) as u64).sum();
        let empirical = sum as f64 / n as f64;
        let expected = m.discrete_mean();
        let var: f64 = m
            .pmf()
            .iter()
            .enumerate()
            .map(|(i, &p)| ((i + 1) as f64 - expected).powi(2) * p)
            .sum();
        let se = (var / n as f64).sqrt();
        assert!(
            (empirical - expected).abs() < 3.0 * se,
            "{empirical} vs {expected} (se {se})"
        );
    }

    #[test]
    fn conditional_pmf_on_unit_delay_is_degenerate() {
        let spec = LinkSpec::lossless_unit();
        assert_eq!(
            conditional_pmf(&spec, 1, 1),
            Err(Error::DegenerateDelayState { age: 1 })
        );
    }

    #[test]
    fn conditional_pmf_matches_hand_values() {
        let spec = LinkSpec::new(
            LossModel::lossless(),
            DelayModel::lognormal(0.5, 0.5).unwrap(),
        );
        let w = conditional_pmf(&spec, 1, 1).unwrap();
        assert_eq!(w.len(), 1);
        assert_eq!(w[0].0, 2);
        assert!((w[0].1 - 0.5844).abs() < 1e-4, "{}", w[0].1);

        let lossy = LinkSpec::new(LossModel::new(0.5).unwrap(), spec.delay.clone());
        let w2 = conditional_pmf(&lossy, 1, 1).unwrap();
        assert!((w2[0].1 - 0.2922).abs() < 1e-4, "{}", w2[0].1);
    }

    #[test]
    fn conditional_entries_bounded_by_success_probability() {
        let spec = LinkSpec::new(
            LossModel::new(0.25).unwrap(),
            DelayModel::lognormal(1.0, 1.0).unwrap(),
        );
        for age in 1..30 {
            let w = conditional_pmf(&spec, age, 6).unwrap();
            let total: f64 = w.iter().map(|&(_, p)| p).sum();
            assert!(total <= 0.75 + 1e-12, "age {age}: {total}");
            assert!(w.iter().all(|&(_, p)| (0.0..=1.0).contains(&p)));
        }
    }

    #[test]
    fn fresh_pmf_examples() {
        let unit = LinkSpec::lossless_unit();
        assert_eq!(fresh_pmf(&unit, 1).unwrap(), vec![(1, 1.0)]);

        let spec = LinkSpec::new(
            LossModel::lossless(),
            DelayModel::lognormal(0.5, 0.5).unwrap(),
        );
        let w = fresh_pmf(&spec, 2).unwrap();
        assert!((w[0].1 - 0.15866).abs() < 1e-4);
        assert!((w[1].1 - 0.4917).abs() < 1e-4);

        let dead = LinkSpec::new(LossModel::new(1.0).unwrap(), DelayModel::unit());
        assert!(fresh_pmf(&dead, 3).unwrap().iter().all(|&(_, p)| p == 0.0));
    }

    #[test]
    fn table_pmf_validation() {
        assert!(DelayModel::table(vec![0.5, 0.5]).is_ok());
        assert!(DelayModel::table(vec![0.5, 0.4]).is_err());
        assert!(DelayModel::table(vec![]).is_err());
        assert!(DelayModel::table(vec![1.5, -0.5]).is_err());
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn discretized_mass_is_a_distribution(
                mu in -1.0f64..2.0,
                sigma in 0.1f64..2.0,
                z_cap in 2u32..128,
            ) {
                let pmf = discretize(&DelayKind::Lognormal { mu, sigma }, z_cap).unwrap();
                prop_assert_eq!(pmf.len(), z_cap as usize);
                prop_assert!(pmf.iter().all(|&p| (0.0..=1.0).contains(&p)));
                let total: f64 = pmf.iter().sum();
                prop_assert!((total - 1.0).abs() < 1e-9);
            }

            #[test]
            fn conditional_window_mass_bounded_by_success(
                mu in -0.5f64..1.5,
                sigma in 0.2f64..1.5,
                pe in 0.0f64..0.9,
                age in 1u64..40,
                delta in 1u32..8,
            ) {
                let spec = LinkSpec::new(
                    LossModel::new(pe).unwrap(),
                    DelayModel::lognormal(mu, sigma).unwrap(),
                );
                match conditional_pmf(&spec, age, delta) {
                    Ok(window) => {
                        let total: f64 = window.iter().map(|&(_, p)| p).sum();
                        prop_assert!(total <= 1.0 - pe + 1e-9);
                        prop_assert!(window.iter().all(|&(_, p)| p >= 0.0));
                    }
                    Err(Error::DegenerateDelayState { .. }) => {}
                    Err(e) => prop_assert!(false, "unexpected error {e}"),
                }
            }
        }
    }
}
