//! Intercept-resend adversary model and the statistical eavesdropper test.
//!
//! An intercept-resend (IR) eavesdropper measures every transit pulse in a
//! random BB84 basis and retransmits her outcome. Post-selected on matched
//! preparations, half of the retransmitted pulses land in the wrong basis,
//! which lifts the zero-delay coincidence floor from the honest
//! post-selected minimum to a mixture the legitimate parties can resolve
//! with a one-sided binomial threshold.

use std::f64::consts::FRAC_1_SQRT_2;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::model::{self, BB84State};
use crate::stats;
use crate::Error;

/// Which adversary, if any, sits on the quantum channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttackKind {
    #[default]
    None,
    InterceptResend,
}

/// How Eve chooses her measurement basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EveBasisStrategy {
    /// Rectilinear or diagonal with probability 1/2 each, per pulse.
    #[default]
    UniformRandom,
}

/// Adversary configuration for a simulated channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AttackConfig {
    pub kind: AttackKind,
    pub eve_basis_strategy: EveBasisStrategy,
}

/// Outcome of the eavesdropper detection test.
#[derive(Debug, Clone, Serialize)]
pub struct DetectionVerdict {
    /// Post-selected coincidence rate actually observed.
    pub observed_rate: f64,
    pub n_trials: usize,
    /// Honest floor: the post-selected minimum for this intensity.
    pub honest_floor: f64,
    /// Floor the IR attack would produce.
    pub attacked_floor: f64,
    /// Abort threshold the observed rate is compared against.
    pub threshold: f64,
    /// Standardized excess of the observation over the honest floor.
    pub z_score: f64,
    pub flagged: bool,
}

/// Eve's measure-and-resend map on a single pulse.
///
/// With probability 1/2 her basis matches the preparation and the pulse
/// passes unchanged; otherwise she resends one of the two states of the
/// other basis uniformly. Re-measured in the original basis, the resent
/// stream carries a 25% error rate.
pub fn ir_transform<R: Rng + ?Sized>(state: BB84State, rng: &mut R) -> BB84State {
    let eve_measures_rectilinear = rng.random::<bool>();
    let same_basis = matches!(
        (state.basis(), eve_measures_rectilinear),
        (model::Basis::Rectilinear, true) | (model::Basis::Diagonal, false)
    );
    if same_basis {
        state
    } else {
        let base = if eve_measures_rectilinear {
            BB84State::H
        } else {
            BB84State::D
        };
        if rng.random::<bool>() {
            base
        } else {
            base.conjugate()
        }
    }
}

/// Post-selected zero-delay floor under an intercept-resend attack:
/// an equal mixture of perfect overlap and cross-basis overlap,
/// `1 + e^(-2mu) - e^(-mu) [I0(mu) + I0(mu/sqrt(2))]`.
pub fn ir_postselected_floor(mu: f64) -> Result<f64, Error> {
    if !(mu >= 0.0) || !mu.is_finite() {
        return Err(Error::Domain(format!(
            "mean photon number must be >= 0 and finite, got {mu}"
        )));
    }
    let pair = model::SourcePair::symmetric(mu)?;
    let matched = model::coincidence_probability(&pair, 1.0)?;
    let crossed = model::coincidence_probability(&pair, FRAC_1_SQRT_2)?;
    Ok(0.5 * (matched + crossed))
}

/// One-sided binomial test of an observed post-selected rate against the
/// honest floor.
///
/// The threshold sits `z(significance)` binomial standard errors above the
/// honest floor, capped at the midpoint between the honest and attacked
/// floors so large samples cannot push it past the separation band.
pub fn detect_eavesdropper(
    observed_rate: f64,
    n_trials: usize,
    mu: f64,
    significance: f64,
) -> Result<DetectionVerdict, Error> {
    if n_trials == 0 {
        return Err(Error::InsufficientData(
            "no post-selected trials to test".into(),
        ));
    }
    if !(significance > 0.0 && significance < 0.5) {
        return Err(Error::Domain(format!(
            "significance must be in (0, 0.5), got {significance}"
        )));
    }
    let honest = model::postselected_min(mu)?;
    let attacked = ir_postselected_floor(mu)?;
    let sigma = (honest * (1.0 - honest) / n_trials as f64).sqrt();
    let z = stats::normal_quantile(1.0 - significance)?;
    let midpoint = 0.5 * (honest + attacked);
    let threshold = (honest + z * sigma).min(midpoint);
    let z_score = if sigma > 0.0 {
        (observed_rate - honest) / sigma
    } else {
        0.0
    };
    Ok(DetectionVerdict {
        observed_rate,
        n_trials,
        honest_floor: honest,
        attacked_floor: attacked,
        threshold,
        z_score,
        flagged: observed_rate > threshold,
    })
}

/// One row of the intensity sweep: analytic floors plus Monte Carlo rates
/// with binomial error bars.
#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub mu: f64,
    pub honest_analytic: f64,
    pub honest_mc: f64,
    pub honest_err: f64,
    pub ir_analytic: f64,
    pub ir_mc: f64,
    pub ir_err: f64,
    /// Free-running (unpost-selected) floor for reference.
    pub floor_eq10: f64,
}

/// Zero-delay post-selected floors across an intensity grid, honest and
/// attacked, each Monte Carlo point sampled with `trials_per_point`
/// post-selected trials.
pub fn attack_sweep(
    mu_values: &[f64],
    trials_per_point: usize,
    master_seed: u64,
) -> Result<Vec<SweepRow>, Error> {
    mu_values
        .iter()
        .enumerate()
        .map(|(i, &mu)| {
            let honest_analytic = model::postselected_min(mu)?;
            let ir_analytic = ir_postselected_floor(mu)?;
            let floor_eq10 = model::expected_floor(mu)?;

            let mut rng = sweep_rng(master_seed, i as u64);
            let honest_mc = sample_postselected_rate(mu, AttackKind::None, trials_per_point, &mut rng);
            let ir_mc =
                sample_postselected_rate(mu, AttackKind::InterceptResend, trials_per_point, &mut rng);

            Ok(SweepRow {
                mu,
                honest_analytic,
                honest_mc,
                honest_err: stats::binomial_stderr(honest_mc, trials_per_point),
                ir_analytic,
                ir_mc,
                ir_err: stats::binomial_stderr(ir_mc, trials_per_point),
                floor_eq10,
            })
        })
        .collect()
}

/// Monte Carlo estimate of the post-selected zero-delay coincidence rate.
///
/// Each trial draws a preparation shared by both parties (the post-selected
/// ensemble), routes the transit pulse through the configured channel, and
/// samples a coincidence from the resulting overlap. Also usable at a fixed
/// nonzero temporal overlap for dip cross-sections.
pub fn sample_postselected_rate<R: Rng + ?Sized>(
    mu: f64,
    attack: AttackKind,
    trials: usize,
    rng: &mut R,
) -> f64 {
    sample_postselected_rate_at(mu, attack, 1.0, trials, rng)
}

/// As [`sample_postselected_rate`] but with an explicit spectro-temporal
/// overlap factor in `[0, 1]` multiplying the polarization overlap.
pub fn sample_postselected_rate_at<R: Rng + ?Sized>(
    mu: f64,
    attack: AttackKind,
    temporal: f64,
    trials: usize,
    rng: &mut R,
) -> f64 {
    if trials == 0 {
        return 0.0;
    }
    let mut hits = 0usize;
    for _ in 0..trials {
        let prepared = BB84State::sample(rng);
        let arriving = match attack {
            AttackKind::None => prepared,
            AttackKind::InterceptResend => ir_transform(prepared, rng),
        };
        let s = model::polarization_overlap(arriving, prepared) * temporal;
        let p = crate::model::coincidence_symmetric(mu, s);
        if rng.random::<f64>() < p {
            hits += 1;
        }
    }
    hits as f64 / trials as f64
}

fn sweep_rng(master_seed: u64, point: u64) -> ChaCha8Rng {
    use rand::SeedableRng;
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(crate::sim::streams::sweep(point));
    rng
}
