//! Statistical validators: sampling experiments that reproduce the success
//! probabilities the recovery pipeline rides on, compared against exact
//! enumeration oracles, closed forms, or the stated asymptotic constants.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use thiserror::Error;

use crate::bbgroup::{
    bray_centralizer_sample, random_in_centralizer, BraySample, CentralQuotient, ExactEquality,
    FactoredExponent, GroupError, QuotientContext,
};
use crate::blackbox::{BbRing, BlackboxError, OracleError, RingOracle};
use crate::blackbox::reference::ReferenceOracle;
use crate::field::{commutator_square_distribution, invertibility_rate_closed_form, FieldParams};
use crate::fieldmatch::{explicit_field_match, MatchError, MATCH_MAX_ORDER};
use crate::recovery::{
    build_black_box_field, build_four_group, classify_normalizer_sample,
    find_noncentral_involution, scalar_random, NormalizerSide, RecoveryConfig, RecoveryError,
    SylowData,
};

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("unknown claim '{0}'")]
    UnknownClaim(String),
    #[error("claim '{claim}' supports q <= {bound}, got {q}")]
    OrderTooLargeForClaim {
        claim: &'static str,
        q: u64,
        bound: u64,
    },
    #[error(transparent)]
    Recovery(#[from] RecoveryError),
    #[error(transparent)]
    Match(#[from] MatchError),
    #[error(transparent)]
    Field(#[from] crate::field::FieldError),
}

impl From<OracleError> for StatsError {
    fn from(e: OracleError) -> Self {
        StatsError::Recovery(e.into())
    }
}

impl From<BlackboxError> for StatsError {
    fn from(e: BlackboxError) -> Self {
        StatsError::Recovery(e.into())
    }
}

impl From<GroupError> for StatsError {
    fn from(e: GroupError) -> Self {
        StatsError::Recovery(e.into())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StatClaim {
    /// Random ring elements are invertible with rate (1 - 1/q)(1 - 1/q^2).
    Invertibility,
    /// Commutator squares hit each scalar with rate about 1/q.
    ScalarDistribution,
    /// Centralizer samples in the projective quotient fall outside the
    /// torus half the time.
    CosetHalf,
    /// A pair of torus draws powers to Sylow generators 3/8 of the time.
    SylowRate,
}

impl StatClaim {
    pub fn name(&self) -> &'static str {
        match self {
            StatClaim::Invertibility => "invertibility",
            StatClaim::ScalarDistribution => "scalar_distribution",
            StatClaim::CosetHalf => "coset_half",
            StatClaim::SylowRate => "sylow_rate",
        }
    }

    pub const ALL: [StatClaim; 4] = [
        StatClaim::Invertibility,
        StatClaim::ScalarDistribution,
        StatClaim::CosetHalf,
        StatClaim::SylowRate,
    ];

    /// Default sample size at which the pass tolerances below are calibrated.
    pub fn default_samples(&self) -> u64 {
        match self {
            StatClaim::Invertibility | StatClaim::ScalarDistribution => 100_000,
            StatClaim::CosetHalf => 2_000,
            StatClaim::SylowRate => 10_000,
        }
    }
}

impl FromStr for StatClaim {
    type Err = StatsError;

    fn from_str(s: &str) -> Result<Self, StatsError> {
        match s {
            "invertibility" => Ok(StatClaim::Invertibility),
            "scalar_distribution" => Ok(StatClaim::ScalarDistribution),
            "coset_half" => Ok(StatClaim::CosetHalf),
            "sylow_rate" => Ok(StatClaim::SylowRate),
            other => Err(StatsError::UnknownClaim(other.to_string())),
        }
    }
}

impl fmt::Display for StatClaim {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Where the reference value comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    ExhaustiveOracle,
    ClosedForm,
    PaperAsymptotic,
}

impl Provenance {
    pub fn name(&self) -> &'static str {
        match self {
            Provenance::ExhaustiveOracle => "exhaustive_oracle",
            Provenance::ClosedForm => "closed_form",
            Provenance::PaperAsymptotic => "paper_asymptotic",
        }
    }
}

/// Outcome of one sampling experiment. For multi-class claims the reported
/// empirical/reference pair belongs to the worst class.
#[derive(Debug, Clone)]
pub struct StatReport {
    pub claim: StatClaim,
    pub q: u64,
    pub n: u64,
    pub empirical: f64,
    pub reference: f64,
    pub provenance: Provenance,
    /// Deviation of the worst class in binomial standard errors.
    pub sigma: f64,
    pub pass: bool,
}

fn binomial_se(p: f64, n: u64) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}

/// Run one claim experiment over a fresh reference-oracle session derived
/// from (params, seed).
pub fn run_stat(
    params: &FieldParams,
    seed: u64,
    claim: StatClaim,
    samples: u64,
) -> Result<StatReport, StatsError> {
    Ok(run_stat_with_counters(params, seed, claim, samples)?.0)
}

/// Like [`run_stat`] but also returns the session's exact query totals.
pub fn run_stat_with_counters(
    params: &FieldParams,
    seed: u64,
    claim: StatClaim,
    samples: u64,
) -> Result<(StatReport, crate::blackbox::QueryCounters), StatsError> {
    let ring = BbRing::new(ReferenceOracle::new(params.clone(), seed));
    let q = params.q();
    let fe = FactoredExponent::for_gl2(q);
    ring.build_identity(fe.value(), 3, 64)?;
    let report = match claim {
        StatClaim::Invertibility => invertibility_stat(&ring, &fe, q, samples),
        StatClaim::ScalarDistribution => scalar_distribution_stat(&ring, params, seed, samples),
        StatClaim::CosetHalf => coset_half_stat(&ring, &fe, q, samples),
        StatClaim::SylowRate => sylow_rate_stat(&ring, &fe, q, seed, samples),
    }?;
    Ok((report, ring.counters()))
}

fn invertibility_stat<O: RingOracle>(
    ring: &BbRing<O>,
    fe: &FactoredExponent,
    q: u64,
    samples: u64,
) -> Result<StatReport, StatsError> {
    let mut hits = 0u64;
    for _ in 0..samples {
        let x = ring.random();
        if ring.is_invertible(&x, fe.value())? {
            hits += 1;
        }
    }
    let empirical = hits as f64 / samples as f64;
    let reference = invertibility_rate_closed_form(q).as_f64();
    let sigma = (empirical - reference).abs() / binomial_se(reference, samples);
    Ok(StatReport {
        claim: StatClaim::Invertibility,
        q,
        n: samples,
        empirical,
        reference,
        provenance: Provenance::ClosedForm,
        sigma,
        pass: sigma <= 5.0,
    })
}

fn scalar_distribution_stat<O: RingOracle>(
    ring: &BbRing<O>,
    params: &FieldParams,
    seed: u64,
    samples: u64,
) -> Result<StatReport, StatsError> {
    let q = params.q();
    if q > MATCH_MAX_ORDER {
        return Err(StatsError::OrderTooLargeForClaim {
            claim: "scalar_distribution",
            q,
            bound: MATCH_MAX_ORDER,
        });
    }
    let view = build_black_box_field(ring, q)?;
    let matched = explicit_field_match(ring, &view, params, seed)?;

    let mut counts = vec![0u64; q as usize];
    for _ in 0..samples {
        let z = scalar_random(ring)?;
        let class = (0..q)
            .find(|&idx| {
                ring.eq(&z, matched.image_by_index(idx))
                    .expect("classification compares session-local handles")
            })
            .expect("commutator squares are scalar");
        counts[class as usize] += 1;
    }

    if q <= crate::field::SCALAR_CENSUS_MAX_Q {
        // Per-class comparison against the exhaustive census table.
        let census = commutator_square_distribution(params)?;
        let mut worst = StatReport {
            claim: StatClaim::ScalarDistribution,
            q,
            n: samples,
            empirical: 0.0,
            reference: 0.0,
            provenance: Provenance::ExhaustiveOracle,
            sigma: 0.0,
            pass: true,
        };
        for idx in 0..q {
            let reference = census.probability(idx).as_f64();
            let empirical = counts[idx as usize] as f64 / samples as f64;
            let sigma = (empirical - reference).abs() / binomial_se(reference, samples);
            if sigma >= worst.sigma {
                worst.sigma = sigma;
                worst.empirical = empirical;
                worst.reference = reference;
            }
        }
        worst.pass = worst.sigma <= 5.0;
        Ok(worst)
    } else {
        // No exhaustive reference; every nonzero class must sit inside the
        // band 1/q +- 3/q^2.
        let reference = 1.0 / q as f64;
        let band = 3.0 / (q as f64 * q as f64);
        let mut worst_dev = 0.0f64;
        let mut worst_emp = reference;
        for idx in 1..q {
            let empirical = counts[idx as usize] as f64 / samples as f64;
            let dev = (empirical - reference).abs();
            if dev >= worst_dev {
                worst_dev = dev;
                worst_emp = empirical;
            }
        }
        Ok(StatReport {
            claim: StatClaim::ScalarDistribution,
            q,
            n: samples,
            empirical: worst_emp,
            reference,
            provenance: Provenance::PaperAsymptotic,
            sigma: worst_dev / binomial_se(reference, samples),
            pass: worst_dev <= band,
        })
    }
}

fn coset_half_stat<O: RingOracle>(
    ring: &BbRing<O>,
    fe: &FactoredExponent,
    q: u64,
    samples: u64,
) -> Result<StatReport, StatsError> {
    let cfg = RecoveryConfig::default();
    let (e1, _) = find_noncentral_involution(ring, fe, &cfg)?;
    let (four, _) = build_four_group(ring, &e1, fe, &cfg)?;
    let ctx = QuotientContext::new(cfg.centrality_trials);
    let quotient = CentralQuotient::new(&ctx, fe);

    let mut outside = 0u64;
    let mut drawn = 0u64;
    while drawn < samples {
        // Only the odd-order branch is uniform over the quotient
        // centralizer; even-branch draws are discarded.
        let sample = match bray_centralizer_sample(ring, &four.e1, fe, &quotient)? {
            BraySample::Centralizing(g) => g,
            BraySample::Involution(_) => continue,
        };
        match classify_normalizer_sample(ring, &four, fe, sample.handle())? {
            NormalizerSide::Swapping => {
                outside += 1;
                drawn += 1;
            }
            NormalizerSide::Torus => drawn += 1,
            NormalizerSide::Neither => {
                return Err(StatsError::Recovery(RecoveryError::RelationFailure(
                    "quotient centralizer sample conjugates e1 outside {e1, e2}",
                )))
            }
        }
    }
    let empirical = outside as f64 / samples as f64;
    let reference = 0.5;
    Ok(StatReport {
        claim: StatClaim::CosetHalf,
        q,
        n: samples,
        empirical,
        reference,
        provenance: Provenance::PaperAsymptotic,
        sigma: (empirical - reference).abs() / binomial_se(reference, samples),
        pass: (empirical - reference).abs() <= 0.05,
    })
}

/// One Sylow-generator trial: two torus draws t1, t2; success iff
/// s_i = t_i^l power down to distinct non-identity involutions.
pub fn sylow_trial_outcomes<O: RingOracle>(
    ring: &BbRing<O>,
    fe: &FactoredExponent,
    q: u64,
    seed: u64,
    trials: u64,
) -> Result<Vec<bool>, StatsError> {
    let cfg = RecoveryConfig::default();
    let sylow = SylowData::from_order(q)?;
    let (e1, _) = find_noncentral_involution(ring, fe, &cfg)?;
    let identity = ring.identity()?.clone();
    let half_exp = 1u128 << (sylow.k - 1);
    let mut rng = ChaCha12Rng::seed_from_u64(seed ^ 0x53594c4f57);
    let mut outcomes = Vec::with_capacity(trials as usize);
    for _ in 0..trials {
        let torus = random_in_centralizer(ring, &e1, fe, &ExactEquality, 2, &mut rng)?;
        let s1 = ring.pow(torus[0].handle(), sylow.l as u128)?;
        let s2 = ring.pow(torus[1].handle(), sylow.l as u128)?;
        let u = ring.pow(&s1, half_exp)?;
        let v = ring.pow(&s2, half_exp)?;
        let success =
            !ring.eq(&u, &identity)? && !ring.eq(&v, &identity)? && !ring.eq(&u, &v)?;
        outcomes.push(success);
    }
    Ok(outcomes)
}

fn sylow_rate_stat<O: RingOracle>(
    ring: &BbRing<O>,
    fe: &FactoredExponent,
    q: u64,
    seed: u64,
    samples: u64,
) -> Result<StatReport, StatsError> {
    let outcomes = sylow_trial_outcomes(ring, fe, q, seed, samples)?;
    let hits = outcomes.iter().filter(|&&b| b).count() as u64;
    let empirical = hits as f64 / samples as f64;
    let reference = 0.375;
    Ok(StatReport {
        claim: StatClaim::SylowRate,
        q,
        n: samples,
        empirical,
        reference,
        provenance: Provenance::PaperAsymptotic,
        sigma: (empirical - reference).abs() / binomial_se(reference, samples),
        pass: (empirical - reference).abs() <= 0.02,
    })
}
