//! Closed-form interference statistics for phase-randomized weak coherent
//! pulses meeting at a beamsplitter.
//!
//! Everything here is a pure function of its arguments. The central quantity
//! is the coincidence probability for two phase-randomized coherent inputs
//! with mode overlap `s`:
//!
//! ```text
//! P = 1 + e^(-mu_a - mu_b)
//!       - [e^(mu_a R + mu_b T) + e^(mu_a T + mu_b R)] e^(-mu_a - mu_b)
//!         * I0(2 sqrt(mu_a mu_b R T) s)
//! ```
//!
//! which for a balanced splitter and equal intensities reduces to
//! `1 + e^(-2mu) - 2 e^(-mu) I0(mu s)`. The overlap factors as
//! `s = cos(Phi) * exp(-sigma^2 tau^2 / 2)` for a polarization mismatch
//! `Phi`, relative arrival delay `tau` and spectral width `sigma` of
//! matched transform-limited Gaussian envelopes.

mod bessel;

use std::f64::consts::FRAC_1_SQRT_2;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::Error;

pub(crate) use bessel::i0;

/// One of the four BB84 polarization preparations.
///
/// `H`/`V` span the rectilinear basis, `D` (+45°) / `A` (-45°) the diagonal
/// one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BB84State {
    H,
    V,
    D,
    A,
}

/// A BB84 measurement/preparation basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Basis {
    Rectilinear,
    Diagonal,
}

impl BB84State {
    pub const ALL: [BB84State; 4] = [BB84State::H, BB84State::V, BB84State::D, BB84State::A];

    pub fn basis(self) -> Basis {
        match self {
            BB84State::H | BB84State::V => Basis::Rectilinear,
            BB84State::D | BB84State::A => Basis::Diagonal,
        }
    }

    /// The other state of the same basis.
    pub fn conjugate(self) -> BB84State {
        match self {
            BB84State::H => BB84State::V,
            BB84State::V => BB84State::H,
            BB84State::D => BB84State::A,
            BB84State::A => BB84State::D,
        }
    }

    /// Draws a state uniformly at random.
    pub fn sample<R: Rng + ?Sized>(rng: &mut R) -> BB84State {
        Self::ALL[rng.random_range(0..4)]
    }
}

impl fmt::Display for BB84State {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = match self {
            BB84State::H => 'H',
            BB84State::V => 'V',
            BB84State::D => 'D',
            BB84State::A => 'A',
        };
        write!(f, "{c}")
    }
}

/// Polarization overlap `cos(Phi) = |<a|b>|` between two BB84 states.
///
/// Identical states overlap fully, orthogonal same-basis states not at all,
/// and any cross-basis pair overlaps by `1/sqrt(2)`.
pub fn polarization_overlap(a: BB84State, b: BB84State) -> f64 {
    if a == b {
        1.0
    } else if a.basis() == b.basis() {
        0.0
    } else {
        FRAC_1_SQRT_2
    }
}

/// Inputs to the spectro-temporal/polarization mode overlap.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OverlapParams {
    /// Polarization overlap `cos(Phi)`, in `[0, 1]`.
    pub cos_phi: f64,
    /// Relative arrival delay at the beamsplitter (time unit of choice).
    pub tau: f64,
    /// Spectral envelope standard deviation (angular frequency, reciprocal
    /// of the same time unit).
    pub sigma_spec: f64,
}

impl OverlapParams {
    pub fn new(cos_phi: f64, tau: f64, sigma_spec: f64) -> Result<Self, Error> {
        if !(0.0..=1.0).contains(&cos_phi) {
            return Err(Error::Domain(format!(
                "cos_phi must be in [0, 1], got {cos_phi}"
            )));
        }
        if !tau.is_finite() {
            return Err(Error::Domain(format!("tau must be finite, got {tau}")));
        }
        if !(sigma_spec > 0.0) || !sigma_spec.is_finite() {
            return Err(Error::Domain(format!(
                "sigma_spec must be positive and finite, got {sigma_spec}"
            )));
        }
        Ok(Self {
            cos_phi,
            tau,
            sigma_spec,
        })
    }
}

/// Total mode overlap `s = cos(Phi) * exp(-sigma^2 tau^2 / 2)`, in `[0, 1]`.
///
/// Even in `tau` and non-increasing in `|tau|`.
pub fn mode_overlap(params: &OverlapParams) -> f64 {
    params.cos_phi * temporal_overlap(params.sigma_spec, params.tau)
}

/// The spectro-temporal factor `exp(-sigma^2 tau^2 / 2)` alone.
#[inline]
pub(crate) fn temporal_overlap(sigma_spec: f64, tau: f64) -> f64 {
    let x = sigma_spec * tau;
    (-0.5 * x * x).exp()
}

/// Two phase-randomized coherent inputs and the beamsplitter they meet at.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SourcePair {
    /// Mean photon number of the input on the transmitting side.
    pub mu_a: f64,
    /// Mean photon number of the other input.
    pub mu_b: f64,
    /// Beamsplitter transmittance `T`.
    pub transmittance: f64,
    /// Beamsplitter reflectance `R = 1 - T`.
    pub reflectance: f64,
}

impl SourcePair {
    pub fn new(mu_a: f64, mu_b: f64, transmittance: f64, reflectance: f64) -> Result<Self, Error> {
        for (name, v) in [("mu_a", mu_a), ("mu_b", mu_b)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::Domain(format!("{name} must be >= 0, got {v}")));
            }
        }
        for (name, v) in [
            ("transmittance", transmittance),
            ("reflectance", reflectance),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Domain(format!("{name} must be in [0, 1], got {v}")));
            }
        }
        if (transmittance + reflectance - 1.0).abs() > 1e-12 {
            return Err(Error::Domain(format!(
                "lossless beamsplitter requires T + R = 1, got {}",
                transmittance + reflectance
            )));
        }
        Ok(Self {
            mu_a,
            mu_b,
            transmittance,
            reflectance,
        })
    }

    /// Equal intensities on a balanced (50/50) splitter.
    pub fn symmetric(mu: f64) -> Result<Self, Error> {
        Self::new(mu, mu, 0.5, 0.5)
    }
}

/// I<sub>0</sub>(x), the modified Bessel function of the first kind of order
/// zero, to better than 1e-12 relative error.
pub fn bessel_i0(x: f64) -> Result<f64, Error> {
    if !x.is_finite() {
        return Err(Error::Domain(format!("argument must be finite, got {x}")));
    }
    Ok(i0(x))
}

/// Coincidence probability for the pair at mode overlap `s` in `[0, 1]`.
pub fn coincidence_probability(pair: &SourcePair, s: f64) -> Result<f64, Error> {
    if !(0.0..=1.0).contains(&s) {
        return Err(Error::Domain(format!("overlap s must be in [0, 1], got {s}")));
    }
    let (t, r) = (pair.transmittance, pair.reflectance);
    let (ma, mb) = (pair.mu_a, pair.mu_b);
    let damp = (-ma - mb).exp();
    let cross = i0(2.0 * (ma * mb * r * t).sqrt() * s);
    let p = 1.0 + damp - ((ma * r + mb * t).exp() + (ma * t + mb * r).exp()) * damp * cross;
    Ok(p.clamp(0.0, 1.0))
}

/// Balanced-splitter, equal-intensity coincidence probability
/// `1 + e^(-2mu) - 2 e^(-mu) I0(mu s)`. Hot path for the Monte Carlo loops;
/// arguments are assumed already validated.
#[inline]
pub(crate) fn coincidence_symmetric(mu: f64, s: f64) -> f64 {
    let p = 1.0 + (-2.0 * mu).exp() - 2.0 * (-mu).exp() * i0(mu * s);
    p.clamp(0.0, 1.0)
}

/// Zero-delay coincidence floor when both parties send uniformly random
/// BB84 states: `1 + e^(-2mu) - (e^(-mu)/2) [1 + I0(mu) + 2 I0(mu/sqrt(2))]`.
pub fn expected_floor(mu: f64) -> Result<f64, Error> {
    check_mu(mu)?;
    let p = 1.0 + (-2.0 * mu).exp()
        - 0.5 * (-mu).exp() * (1.0 + i0(mu) + 2.0 * i0(mu * FRAC_1_SQRT_2));
    Ok(p.clamp(0.0, 1.0))
}

/// Zero-delay coincidence floor after post-selecting matched preparations:
/// `1 + e^(-2mu) - 2 e^(-mu) I0(mu)`, the minimum reachable with weak
/// coherent pulses.
pub fn postselected_min(mu: f64) -> Result<f64, Error> {
    check_mu(mu)?;
    Ok(coincidence_symmetric(mu, 1.0))
}

/// Upper bound on the HOM visibility for weak coherent pulses,
/// `V = (I0(mu) - 1) / (2 sinh^2(mu/2))`, continued to `V = 1/2` at `mu = 0`.
///
/// Equals `(P_max - P_min) / P_max` with `P_max` the large-delay plateau and
/// `P_min` the post-selected minimum.
pub fn visibility(mu: f64) -> Result<f64, Error> {
    check_mu(mu)?;
    if mu == 0.0 {
        return Ok(0.5);
    }
    let sh = (0.5 * mu).sinh();
    // Series form of I0(mu) - 1 keeps the small-mu numerator exact.
    let numerator = if mu <= 8.0 {
        bessel::i0m1(mu)
    } else {
        i0(mu) - 1.0
    };
    Ok(numerator / (2.0 * sh * sh))
}

fn check_mu(mu: f64) -> Result<(), Error> {
    if !(mu >= 0.0) || !mu.is_finite() {
        return Err(Error::Domain(format!(
            "mean photon number must be >= 0 and finite, got {mu}"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    // Frozen oracle values (power-series / phase-average oracles, see the
    // acceptance suite for the oracles themselves).
    const P_MIN_MU1: f64 = 0.203_816_068_049_331_8;
    const P_MAX_MU1: f64 = 0.399_576_400_893_728_05;
    const FLOOR_MU1: f64 = 0.303_194_243_022_094_7;
    const VIS_MU1: f64 = 0.489_919_655_931_985_2;

    #[test]
    fn bessel_i0_rejects_non_finite() {
        assert!(bessel_i0(f64::NAN).is_err());
        assert!(bessel_i0(f64::INFINITY).is_err());
        assert_eq!(bessel_i0(0.0).unwrap(), 1.0);
    }

    #[test]
    fn mode_overlap_limits() {
        let full = OverlapParams::new(1.0, 0.0, 0.05).unwrap();
        assert_eq!(mode_overlap(&full), 1.0);
        let orthogonal = OverlapParams::new(0.0, 0.0, 0.05).unwrap();
        assert_eq!(mode_overlap(&orthogonal), 0.0);
        // tau = 1/sigma gives exactly exp(-1/2).
        let one_sigma = OverlapParams::new(1.0, 20.0, 0.05).unwrap();
        assert!((mode_overlap(&one_sigma) - 0.606_530_659_712_633_4).abs() < 1e-15);
    }

    #[test]
    fn overlap_params_validation() {
        assert!(OverlapParams::new(1.2, 0.0, 1.0).is_err());
        assert!(OverlapParams::new(-0.1, 0.0, 1.0).is_err());
        assert!(OverlapParams::new(0.5, 0.0, 0.0).is_err());
        assert!(OverlapParams::new(0.5, f64::NAN, 1.0).is_err());
    }

    #[test]
    fn coincidence_probability_symmetric_values() {
        let pair = SourcePair::symmetric(1.0).unwrap();
        assert!((coincidence_probability(&pair, 1.0).unwrap() - P_MIN_MU1).abs() < 1e-12);
        assert!((coincidence_probability(&pair, 0.0).unwrap() - P_MAX_MU1).abs() < 1e-12);
        // Vacuum inputs never click.
        let vacuum = SourcePair::symmetric(0.0).unwrap();
        assert_eq!(coincidence_probability(&vacuum, 0.7).unwrap(), 0.0);
    }

    #[test]
    fn coincidence_probability_rejects_bad_overlap() {
        let pair = SourcePair::symmetric(1.0).unwrap();
        assert!(coincidence_probability(&pair, -0.1).is_err());
        assert!(coincidence_probability(&pair, 1.1).is_err());
    }

    #[test]
    fn general_formula_reduces_to_symmetric_case() {
        for &mu in &[0.05, 0.3, 1.0, 2.5] {
            for &s in &[0.0, 0.25, FRAC_1_SQRT_2, 1.0] {
                let pair = SourcePair::symmetric(mu).unwrap();
                let general = coincidence_probability(&pair, s).unwrap();
                let reduced = coincidence_symmetric(mu, s);
                assert!(
                    (general - reduced).abs() < 1e-14,
                    "mu={mu} s={s}: {general} vs {reduced}"
                );
            }
        }
    }

    #[test]
    fn source_pair_requires_lossless_splitter() {
        assert!(SourcePair::new(1.0, 1.0, 0.6, 0.5).is_err());
        assert!(SourcePair::new(-0.1, 1.0, 0.5, 0.5).is_err());
        assert!(SourcePair::new(1.0, 1.0, 0.3, 0.7).is_ok());
    }

    #[test]
    fn polarization_overlap_table() {
        use BB84State::*;
        assert_eq!(polarization_overlap(H, H), 1.0);
        assert_eq!(polarization_overlap(H, V), 0.0);
        assert_eq!(polarization_overlap(D, A), 0.0);
        assert_eq!(polarization_overlap(H, D), FRAC_1_SQRT_2);
        assert_eq!(polarization_overlap(V, A), FRAC_1_SQRT_2);
        for a in BB84State::ALL {
            for b in BB84State::ALL {
                assert_eq!(polarization_overlap(a, b), polarization_overlap(b, a));
            }
        }
    }

    #[test]
    fn bb84_ensemble_mean_square_overlap_is_half() {
        // Exact: 4 identical pairs, 4 orthogonal, 8 cross-basis out of 16.
        let sum: f64 = BB84State::ALL
            .iter()
            .flat_map(|&a| BB84State::ALL.iter().map(move |&b| polarization_overlap(a, b)))
            .map(|c| c * c)
            .sum();
        assert_eq!(sum / 16.0, 0.5);
    }

    #[test]
    fn expected_floor_values() {
        assert_eq!(expected_floor(0.0).unwrap(), 0.0);
        assert!((expected_floor(1.0).unwrap() - FLOOR_MU1).abs() < 1e-12);
        assert!(expected_floor(-0.2).is_err());
    }

    #[test]
    fn expected_floor_is_bb84_weighted_average() {
        for &mu in &[0.1, 0.5, 1.0, 2.0, 4.0] {
            let pair = SourcePair::symmetric(mu).unwrap();
            let avg = 0.25 * coincidence_probability(&pair, 1.0).unwrap()
                + 0.25 * coincidence_probability(&pair, 0.0).unwrap()
                + 0.5 * coincidence_probability(&pair, FRAC_1_SQRT_2).unwrap();
            assert!(
                (expected_floor(mu).unwrap() - avg).abs() < 1e-14,
                "mu={mu}"
            );
        }
    }

    #[test]
    fn postselected_min_values() {
        assert_eq!(postselected_min(0.0).unwrap(), 0.0);
        assert!((postselected_min(1.0).unwrap() - P_MIN_MU1).abs() < 1e-12);
        assert!(postselected_min(-1.0).is_err());
    }

    #[test]
    fn postselected_min_below_expected_floor() {
        let mut mu = 0.05;
        while mu <= 5.0 {
            assert!(
                postselected_min(mu).unwrap() < expected_floor(mu).unwrap(),
                "mu={mu}"
            );
            mu += 0.05;
        }
    }

    #[test]
    fn visibility_values_and_limit() {
        assert_eq!(visibility(0.0).unwrap(), 0.5);
        assert!((visibility(1e-8).unwrap() - 0.5).abs() < 1e-10);
        assert!((visibility(1.0).unwrap() - VIS_MU1).abs() < 1e-12);
        assert!(visibility(-0.5).is_err());
    }

    #[test]
    fn visibility_matches_probability_routes() {
        // Closed form against (P_max - P_min)/P_max computed from the
        // probability operations.
        let mut mu = 0.1;
        while mu <= 12.0 {
            let p_max = coincidence_symmetric(mu, 0.0);
            let p_min = postselected_min(mu).unwrap();
            let ratio = (p_max - p_min) / p_max;
            assert!(
                (visibility(mu).unwrap() - ratio).abs() < 1e-12,
                "mu={mu}: {} vs {ratio}",
                visibility(mu).unwrap()
            );
            mu += 0.1;
        }
    }

    #[test]
    fn visibility_bounded_and_decreasing() {
        let mut prev = visibility(0.001).unwrap();
        assert!(prev <= 0.5 && prev > 0.0);
        let mut mu = 0.05;
        while mu <= 10.0 {
            let v = visibility(mu).unwrap();
            assert!(v > 0.0 && v <= 0.5, "mu={mu}: v={v}");
            assert!(v < prev, "mu={mu}: {v} !< {prev}");
            prev = v;
            mu += 0.05;
        }
    }

    #[test]
    fn zero_delay_ordering_in_polarization_mismatch() {
        // P(Phi=0) <= P(Phi=pi/4) <= P(Phi=pi/2) at tau = 0.
        for &mu in &[0.1, 0.7, 1.0, 3.0] {
            let pair = SourcePair::symmetric(mu).unwrap();
            let p0 = coincidence_probability(&pair, 1.0).unwrap();
            let p45 = coincidence_probability(&pair, FRAC_1_SQRT_2).unwrap();
            let p90 = coincidence_probability(&pair, 0.0).unwrap();
            assert!(p0 <= p45 && p45 <= p90, "mu={mu}: {p0} {p45} {p90}");
        }
    }

    proptest! {
        #[test]
        fn coincidence_probability_is_a_probability(
            mu_a in 0.0..4.0f64,
            mu_b in 0.0..4.0f64,
            t in 0.0..=1.0f64,
            s in 0.0..=1.0f64,
        ) {
            let pair = SourcePair::new(mu_a, mu_b, t, 1.0 - t).unwrap();
            let p = coincidence_probability(&pair, s).unwrap();
            prop_assert!((0.0..=1.0).contains(&p));
        }

        #[test]
        fn coincidence_strictly_decreases_with_overlap(
            mu in 0.01..4.0f64,
            s1 in 0.0..1.0f64,
            ds in 0.001..0.5f64,
        ) {
            let s2 = (s1 + ds).min(1.0);
            prop_assume!(s2 > s1);
            let pair = SourcePair::symmetric(mu).unwrap();
            let p1 = coincidence_probability(&pair, s1).unwrap();
            let p2 = coincidence_probability(&pair, s2).unwrap();
            prop_assert!(p2 < p1, "mu={mu} s1={s1} s2={s2}: {p2} !< {p1}");
        }

        #[test]
        fn mode_overlap_even_and_decaying(
            tau in 0.0..100.0f64,
            dtau in 0.0..50.0f64,
            sigma in 0.001..0.5f64,
        ) {
            let at = |t: f64| mode_overlap(&OverlapParams::new(1.0, t, sigma).unwrap());
            prop_assert_eq!(at(tau), at(-tau));
            prop_assert!(at(tau + dtau) <= at(tau));
            prop_assert!((0.0..=1.0).contains(&at(tau)));
        }

        #[test]
        fn coincidence_even_in_tau(
            mu in 0.01..3.0f64,
            tau in -80.0..80.0f64,
            sigma in 0.01..0.2f64,
        ) {
            let s = mode_overlap(&OverlapParams::new(1.0, tau, sigma).unwrap());
            let s_neg = mode_overlap(&OverlapParams::new(1.0, -tau, sigma).unwrap());
            let pair = SourcePair::symmetric(mu).unwrap();
            prop_assert_eq!(
                coincidence_probability(&pair, s).unwrap(),
                coincidence_probability(&pair, s_neg).unwrap()
            );
        }
    }
}
