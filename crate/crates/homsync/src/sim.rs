//! Seeded Monte Carlo simulation of the bidirectional pulse exchange.
//!
//! Each party emits a train of `N` BB84-polarized pulses on a fixed period;
//! the transit train crosses the fiber, the local train crosses a variable
//! delay line, and the two interfere at the receiver's beamsplitter. For a
//! given delay-line setting a *frame* pairs every transit pulse with its
//! nearest local pulse and draws one coincidence outcome per pair from the
//! weak-coherent-pulse coincidence probability at the pair's effective
//! arrival-time difference and polarization overlap.
//!
//! All randomness flows through counter-derived ChaCha streams keyed on
//! (direction, delay index, frame index), so frames are bit-reproducible
//! and safe to simulate concurrently.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::model::{self, BB84State};
use crate::security::{ir_transform, AttackConfig, AttackKind};
use crate::Error;

/// FWHM of a Gaussian in units of its standard deviation, `2 sqrt(2 ln 2)`.
pub const FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949;

/// The two clock holders.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Party {
    Alice,
    Bob,
}

/// Transmission direction of the transit pulse train.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Direction {
    /// Alice transmits, Bob receives and scans his delay line.
    AtoB,
    /// Bob transmits, Alice receives.
    BtoA,
}

impl Direction {
    pub fn label(self) -> &'static str {
        match self {
            Direction::AtoB => "ab",
            Direction::BtoA => "ba",
        }
    }
}

/// Relation between the two local clocks: Bob's reads `delta_true` ns ahead
/// of Alice's. Rates are assumed matched over a synchronization frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClockPair {
    /// Bob's offset relative to Alice, ns.
    pub delta_true: f64,
}

/// Whether a configured temporal width is a standard deviation or a FWHM.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WidthConvention {
    #[default]
    Stddev,
    Fwhm,
}

/// Pulse-train source parameters, shared by both parties.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SourceConfig {
    /// Pulses per synchronization frame.
    pub n_pulses: u64,
    /// Repetition period, ns.
    pub rep_period: f64,
    /// Mean photon number at the transmitter.
    pub mu_source: f64,
    /// Temporal width of the Gaussian pulse envelope, ns.
    pub temporal_width: f64,
    pub width_convention: WidthConvention,
    /// Carrier wavelength, metadata only: matched spectra cancel the
    /// center frequency out of every formula here.
    pub wavelength_nm: f64,
}

impl SourceConfig {
    /// Temporal width as a standard deviation, ns.
    pub fn sigma_t(&self) -> f64 {
        match self.width_convention {
            WidthConvention::Stddev => self.temporal_width,
            WidthConvention::Fwhm => self.temporal_width / FWHM_PER_SIGMA,
        }
    }

    /// Spectral envelope standard deviation, rad/ns, for a
    /// transform-limited Gaussian: `sigma = 1 / (2 sigma_t)`.
    pub fn sigma_spec(&self) -> f64 {
        1.0 / (2.0 * self.sigma_t())
    }
}

/// Fiber channel between the parties.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChannelConfig {
    /// Propagation delay Alice -> Bob, ns.
    pub prop_delay_ab: f64,
    /// Propagation delay Bob -> Alice, ns.
    pub prop_delay_ba: f64,
    /// Total attenuation, dB.
    pub loss_db: f64,
    /// Convenience flag: both delays are meant to be equal.
    pub reciprocal: bool,
}

/// How many detector jitter contributions enter each pair's arrival-time
/// difference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum JitterMode {
    /// One independent Gaussian per interfering pulse (two draws).
    #[default]
    BothDetectors,
    /// A single draw, attributing all jitter to the receiver.
    ReceiverOnly,
}

/// Single-photon detector parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DetectorConfig {
    /// Detection efficiency, in (0, 1].
    pub efficiency: f64,
    /// Timing jitter FWHM, ps.
    pub jitter_fwhm_ps: f64,
    pub jitter_mode: JitterMode,
    /// Probability that a dark count fakes a coincidence within one pairing
    /// window. Off (zero) by default.
    pub dark_count_prob: f64,
}

/// One scheduled emission, timed in Alice's frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PulseRecord {
    pub party: Party,
    pub index: u64,
    /// Emission time in Alice's frame, ns.
    pub emit_time: f64,
    pub state: BB84State,
}

/// Emission schedule for one party: Alice fires at `{0, T, 2T, ...}`, Bob at
/// `{-delta, T - delta, ...}` in Alice's frame, each pulse carrying an
/// independently uniform BB84 preparation.
pub fn emission_schedule<R: Rng + ?Sized>(
    party: Party,
    src: &SourceConfig,
    clocks: &ClockPair,
    rng: &mut R,
) -> Vec<PulseRecord> {
    let start = match party {
        Party::Alice => 0.0,
        Party::Bob => -clocks.delta_true,
    };
    (0..src.n_pulses)
        .map(|index| PulseRecord {
            party,
            index,
            emit_time: start + index as f64 * src.rep_period,
            state: BB84State::sample(rng),
        })
        .collect()
}

/// Mean photon number surviving to the beamsplitter:
/// `mu_source * 10^(-loss_db/10) * efficiency`.
pub fn effective_mu(mu_source: f64, loss_db: f64, efficiency: f64) -> Result<f64, Error> {
    for (name, v) in [
        ("mu_source", mu_source),
        ("loss_db", loss_db),
        ("efficiency", efficiency),
    ] {
        if !(v >= 0.0) || !v.is_finite() {
            return Err(Error::Domain(format!("{name} must be >= 0, got {v}")));
        }
    }
    if efficiency > 1.0 {
        return Err(Error::Domain(format!(
            "efficiency must be <= 1, got {efficiency}"
        )));
    }
    Ok(mu_source * 10f64.powf(-loss_db / 10.0) * efficiency)
}

/// One Gaussian detector-jitter sample, ps. Zero FWHM returns exactly zero.
pub fn sample_jitter<R: Rng + ?Sized>(fwhm_ps: f64, rng: &mut R) -> f64 {
    if fwhm_ps == 0.0 {
        return 0.0;
    }
    let sigma = fwhm_ps / FWHM_PER_SIGMA;
    let z: f64 = rng.sample(rand_distr::StandardNormal);
    z * sigma
}

/// Constant offsets added to each stream's emission times to obtain arrival
/// times at the receiving beamsplitter.
#[derive(Debug, Clone, Copy)]
pub struct ArrivalOffsets {
    /// Added to transit (remote) pulses: the channel propagation delay.
    pub remote: f64,
    /// Added to local pulses: the variable delay line setting.
    pub local: f64,
}

/// Pairs each remote arrival with the local arrival nearest in time, keeping
/// only pairs closer than `window`. Ties break toward the earlier local
/// index. Returns positions into the two slices.
pub fn pair_pulses(
    remote: &[PulseRecord],
    local: &[PulseRecord],
    offsets: ArrivalOffsets,
    window: f64,
) -> Vec<(usize, usize)> {
    if remote.is_empty() || local.is_empty() {
        return Vec::new();
    }
    let mut out = Vec::with_capacity(remote.len());
    let mut j = 0usize;
    for (i, r) in remote.iter().enumerate() {
        let t = r.emit_time + offsets.remote;
        // Arrival lists are sorted, so the nearest local index is
        // non-decreasing in the remote arrival time.
        while j + 1 < local.len() {
            let d_curr = (local[j].emit_time + offsets.local - t).abs();
            let d_next = (local[j + 1].emit_time + offsets.local - t).abs();
            if d_next < d_curr {
                j += 1;
            } else {
                break;
            }
        }
        if (local[j].emit_time + offsets.local - t).abs() <= window {
            out.push((i, j));
        }
    }
    out
}

/// Deterministic RNG handle for one frame: a master seed plus a derived
/// stream counter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct FrameSeed {
    pub master: u64,
    pub stream: u64,
}

impl FrameSeed {
    pub fn new(master: u64, stream: u64) -> Self {
        Self { master, stream }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master);
        rng.set_stream(self.stream);
        rng
    }
}

/// Stream-counter derivation for the splittable per-task RNGs.
pub mod streams {
    fn splitmix64(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Folds the parts into one well-mixed stream counter.
    pub fn mix(parts: &[u64]) -> u64 {
        let mut h = 0x853C_49E6_748F_EA9B_u64;
        for &p in parts {
            h = splitmix64(h ^ p);
        }
        h
    }

    /// Stream for the frame at one (direction, delay index, frame index).
    pub fn frame(direction: super::Direction, vdl_index: u32, frame_index: u32) -> u64 {
        mix(&[1, direction as u64, vdl_index as u64, frame_index as u64])
    }

    /// Stream for re-pairing a frame's events at integer offset `k`.
    pub fn correlation(frame_stream: u64, k: i64) -> u64 {
        mix(&[2, frame_stream, k as u64])
    }

    /// Stream for one point of the intensity sweep.
    pub fn sweep(point: u64) -> u64 {
        mix(&[3, point])
    }

    /// Stream for one point of a dip cross-section table.
    pub fn dip_table(channel: u64, point: u64) -> u64 {
        mix(&[4, channel, point])
    }

    /// Stream for the balanced-delay frame behind a detection verdict.
    pub fn verdict(direction: super::Direction) -> u64 {
        mix(&[5, direction as u64])
    }
}

/// One paired event inside a frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairEvent {
    pub remote_index: u64,
    pub local_index: u64,
    /// Effective arrival-time difference including jitter, ns.
    pub tau_eff: f64,
    /// Remote party's announced preparation (what post-selection sees).
    pub remote_state: BB84State,
    pub local_state: BB84State,
    pub coincided: bool,
}

/// Everything the simulation needs to run one frame.
#[derive(Debug, Clone, Copy)]
pub struct FrameParams<'a> {
    pub source: &'a SourceConfig,
    pub channel: &'a ChannelConfig,
    pub detector: &'a DetectorConfig,
    pub clocks: &'a ClockPair,
    pub attack: AttackConfig,
    /// Mean photon number at each beamsplitter input.
    pub mu_eff: f64,
}

/// Event record of one frame at one delay-line setting.
///
/// Beyond the paired events it keeps the per-index state sequences and the
/// affine arrival-time model, which is what stage-two correlation analysis
/// needs to re-pair the record at other integer offsets.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrameRecord {
    pub direction: Direction,
    /// Delay-line setting this frame was taken at, ns.
    pub vdl_setting: f64,
    pub pairs: Vec<PairEvent>,
    /// Number of paired pulses.
    pub n_trials: usize,
    pub t_rep: f64,
    pub mu_eff: f64,
    /// Spectral width entering the temporal overlap, rad/ns.
    pub sigma_spec: f64,
    /// Arrival time of remote index 0 at the beamsplitter, ns.
    pub remote_arrival0: f64,
    /// Arrival time of local index 0, ns.
    pub local_arrival0: f64,
    /// Announced preparations of the transmitting party.
    pub remote_prepared: Vec<BB84State>,
    /// States actually arriving after any channel adversary.
    pub remote_arriving: Vec<BB84State>,
    pub local_prepared: Vec<BB84State>,
    /// Per-draw jitter standard deviation, ns.
    pub jitter_sigma_ns: f64,
    /// Jitter draws per pair (2 for both detectors, 1 for receiver-only).
    pub jitter_draws: u8,
    pub seed: FrameSeed,
}

impl FrameRecord {
    /// Coincidence rate and trial count over all paired events.
    pub fn raw_rate(&self) -> (f64, usize) {
        Self::rate_of(self.pairs.iter())
    }

    /// Coincidence rate and trial count over the post-selected subset
    /// (identical announced preparations).
    pub fn postselected_rate(&self) -> (f64, usize) {
        Self::rate_of(self.pairs.iter().filter(|p| p.remote_state == p.local_state))
    }

    fn rate_of<'a>(pairs: impl Iterator<Item = &'a PairEvent>) -> (f64, usize) {
        let (mut hits, mut n) = (0usize, 0usize);
        for p in pairs {
            n += 1;
            hits += p.coincided as usize;
        }
        if n == 0 {
            (0.0, 0)
        } else {
            (hits as f64 / n as f64, n)
        }
    }

    /// Most frequent `local_index - remote_index` among the paired events,
    /// i.e. the integer offset the physical pairing settled on.
    pub fn modal_offset(&self) -> Option<i64> {
        let mut counts: Vec<(i64, usize)> = Vec::new();
        for p in &self.pairs {
            let k = p.local_index as i64 - p.remote_index as i64;
            match counts.iter_mut().find(|(kk, _)| *kk == k) {
                Some((_, c)) => *c += 1,
                None => counts.push((k, 1)),
            }
        }
        counts
            .into_iter()
            .max_by_key(|&(k, c)| (c, std::cmp::Reverse(k)))
            .map(|(k, _)| k)
    }

    /// Arrival time of remote pulse `r`, ns.
    pub fn remote_arrival(&self, r: u64) -> f64 {
        self.remote_arrival0 + r as f64 * self.t_rep
    }

    /// Arrival time of local pulse `l`, ns.
    pub fn local_arrival(&self, l: u64) -> f64 {
        self.local_arrival0 + l as f64 * self.t_rep
    }

    /// Writes the frame as a line-oriented event log, one pair per line.
    pub fn write_event_log<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "remote_index,local_index,tau_eff_ns,remote_state,local_state,coincided")?;
        for p in &self.pairs {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                p.remote_index,
                p.local_index,
                crate::report::fmt_sig(p.tau_eff),
                p.remote_state,
                p.local_state,
                p.coincided as u8
            )?;
        }
        Ok(())
    }
}

/// Simulates one frame: schedules both trains, applies the channel
/// adversary, pairs arrivals at the receiver and draws one coincidence per
/// pair. Bit-identical output for identical (params, direction, setting,
/// seed).
pub fn simulate_frame(
    params: &FrameParams,
    direction: Direction,
    vdl_setting: f64,
    seed: FrameSeed,
) -> Result<FrameRecord, Error> {
    if !(params.mu_eff > 0.0) || !params.mu_eff.is_finite() {
        return Err(Error::Config(format!(
            "effective mean photon number must be positive, got {}",
            params.mu_eff
        )));
    }

    let mut rng = seed.rng();
    let alice = emission_schedule(Party::Alice, params.source, params.clocks, &mut rng);
    let bob = emission_schedule(Party::Bob, params.source, params.clocks, &mut rng);
    let (remote, local, channel_delay) = match direction {
        Direction::AtoB => (alice, bob, params.channel.prop_delay_ab),
        Direction::BtoA => (bob, alice, params.channel.prop_delay_ba),
    };

    let remote_prepared: Vec<BB84State> = remote.iter().map(|p| p.state).collect();
    let remote_arriving: Vec<BB84State> = match params.attack.kind {
        AttackKind::None => remote_prepared.clone(),
        AttackKind::InterceptResend => remote_prepared
            .iter()
            .map(|&s| ir_transform(s, &mut rng))
            .collect(),
    };
    let local_prepared: Vec<BB84State> = local.iter().map(|p| p.state).collect();

    let offsets = ArrivalOffsets {
        remote: channel_delay,
        local: vdl_setting,
    };
    let window = 0.5 * params.source.rep_period;
    let paired = pair_pulses(&remote, &local, offsets, window);

    let sigma_spec = params.source.sigma_spec();
    let jitter_fwhm = params.detector.jitter_fwhm_ps;
    let jitter_draws: u8 = match params.detector.jitter_mode {
        JitterMode::BothDetectors => 2,
        JitterMode::ReceiverOnly => 1,
    };
    let dark = params.detector.dark_count_prob;

    let mut pairs = Vec::with_capacity(paired.len());
    for (ri, li) in paired {
        let base_tau = (remote[ri].emit_time + offsets.remote)
            - (local[li].emit_time + offsets.local);
        let mut jitter_ps = 0.0;
        for _ in 0..jitter_draws {
            jitter_ps += sample_jitter(jitter_fwhm, &mut rng);
        }
        let tau_eff = base_tau + jitter_ps * 1e-3;
        let s = model::polarization_overlap(remote_arriving[ri], local_prepared[li])
            * model::temporal_overlap(sigma_spec, tau_eff);
        let p = model::coincidence_symmetric(params.mu_eff, s);
        let mut coincided = rng.random::<f64>() < p;
        if dark > 0.0 {
            coincided |= rng.random::<f64>() < dark;
        }
        pairs.push(PairEvent {
            remote_index: remote[ri].index,
            local_index: local[li].index,
            tau_eff,
            remote_state: remote_prepared[ri],
            local_state: local_prepared[li],
            coincided,
        });
    }

    let remote_arrival0 = remote.first().map_or(0.0, |p| p.emit_time + offsets.remote);
    let local_arrival0 = local.first().map_or(0.0, |p| p.emit_time + offsets.local);
    let n_trials = pairs.len();

    Ok(FrameRecord {
        direction,
        vdl_setting,
        pairs,
        n_trials,
        t_rep: params.source.rep_period,
        mu_eff: params.mu_eff,
        sigma_spec,
        remote_arrival0,
        local_arrival0,
        remote_prepared,
        remote_arriving,
        local_prepared,
        jitter_sigma_ns: jitter_fwhm / FWHM_PER_SIGMA * 1e-3,
        jitter_draws,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn source(n: u64) -> SourceConfig {
        SourceConfig {
            n_pulses: n,
            rep_period: 100.0,
            mu_source: 1.0,
            temporal_width: 10.0,
            width_convention: WidthConvention::Stddev,
            wavelength_nm: 1550.0,
        }
    }

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn schedule_times_follow_the_emission_rule() {
        let clocks = ClockPair {
            delta_true: 230.456,
        };
        let alice = emission_schedule(Party::Alice, &source(3), &clocks, &mut rng(0));
        let times: Vec<f64> = alice.iter().map(|p| p.emit_time).collect();
        assert_eq!(times, vec![0.0, 100.0, 200.0]);

        let bob = emission_schedule(Party::Bob, &source(3), &clocks, &mut rng(0));
        let times: Vec<f64> = bob.iter().map(|p| p.emit_time).collect();
        assert_eq!(times, vec![-230.456, -130.456, -30.456]);

        let single = emission_schedule(Party::Bob, &source(1), &clocks, &mut rng(0));
        assert_eq!(single.len(), 1);
        assert_eq!(single[0].emit_time, -230.456);
    }

    #[test]
    fn schedule_states_are_roughly_uniform() {
        let clocks = ClockPair { delta_true: 0.0 };
        let pulses = emission_schedule(Party::Alice, &source(40_000), &clocks, &mut rng(3));
        let mut counts = [0usize; 4];
        for p in &pulses {
            counts[BB84State::ALL.iter().position(|&s| s == p.state).unwrap()] += 1;
        }
        for &c in &counts {
            assert!((c as f64 - 10_000.0).abs() < 5.0 * (40_000.0f64 * 0.25 * 0.75).sqrt());
        }
    }

    #[test]
    fn effective_mu_examples() {
        assert!((effective_mu(1.86, 2.0, 0.85).unwrap() - 0.997_543_561_623_185_5).abs() < 1e-12);
        assert_eq!(effective_mu(0.7, 0.0, 1.0).unwrap(), 0.7);
        assert_eq!(effective_mu(0.0, 3.0, 0.5).unwrap(), 0.0);
        assert!(effective_mu(-1.0, 0.0, 1.0).is_err());
        assert!(effective_mu(1.0, 0.0, 1.2).is_err());
    }

    #[test]
    fn jitter_zero_fwhm_is_exactly_zero() {
        let mut r = rng(1);
        for _ in 0..100 {
            assert_eq!(sample_jitter(0.0, &mut r), 0.0);
        }
    }

    #[test]
    fn jitter_statistics_match_fwhm() {
        let mut r = rng(7);
        let n = 1_000_000usize;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for _ in 0..n {
            let x = sample_jitter(150.0, &mut r);
            sum += x;
            sum_sq += x * x;
        }
        let mean = sum / n as f64;
        let std = (sum_sq / n as f64 - mean * mean).sqrt();
        let expect = 150.0 / FWHM_PER_SIGMA; // 63.699 ps
        assert!((std - expect).abs() / expect < 0.01, "std={std}");
        assert!(mean.abs() < 4.0 * expect / (n as f64).sqrt(), "mean={mean}");
    }

    #[test]
    fn pairing_aligned_streams_pairs_equal_indices() {
        let clocks = ClockPair { delta_true: 0.0 };
        let alice = emission_schedule(Party::Alice, &source(10), &clocks, &mut rng(0));
        let bob = emission_schedule(Party::Bob, &source(10), &clocks, &mut rng(1));
        let offsets = ArrivalOffsets {
            remote: 50_000.0,
            local: 50_000.0,
        };
        let pairs = pair_pulses(&alice, &bob, offsets, 50.0);
        assert_eq!(pairs.len(), 10);
        for (i, (r, l)) in pairs.iter().enumerate() {
            assert_eq!((*r, *l), (i, i));
        }
    }

    #[test]
    fn pairing_recovers_stable_integer_offset_for_reference_geometry() {
        // delta = 230.456 ns, balanced delay line: the pairing settles on
        // local = remote + 2 across the whole frame.
        let clocks = ClockPair {
            delta_true: 230.456,
        };
        let src = source(1000);
        let alice = emission_schedule(Party::Alice, &src, &clocks, &mut rng(0));
        let bob = emission_schedule(Party::Bob, &src, &clocks, &mut rng(1));
        let offsets = ArrivalOffsets {
            remote: 50_000.0,
            local: 50_030.456,
        };
        let pairs = pair_pulses(&alice, &bob, offsets, 50.0);
        assert_eq!(pairs.len(), 998);
        assert!(pairs.iter().all(|&(r, l)| l == r + 2));
    }

    #[test]
    fn pairing_breaks_half_period_ties_toward_earlier_index() {
        let clocks = ClockPair { delta_true: 0.0 };
        let alice = emission_schedule(Party::Alice, &source(3), &clocks, &mut rng(0));
        let bob = emission_schedule(Party::Bob, &source(3), &clocks, &mut rng(1));
        // Local stream shifted by exactly T/2: every remote pulse sits
        // midway between two local pulses.
        let offsets = ArrivalOffsets {
            remote: 0.0,
            local: 50.0,
        };
        let pairs = pair_pulses(&alice, &bob, offsets, 50.0);
        // Remote 1 ties between locals 0 and 1 and must take 0; remote 2
        // ties between 1 and 2 and must take 1.
        assert_eq!(pairs, vec![(0, 0), (1, 0), (2, 1)]);
    }

    #[test]
    fn pairing_empty_inputs() {
        let offsets = ArrivalOffsets {
            remote: 0.0,
            local: 0.0,
        };
        assert!(pair_pulses(&[], &[], offsets, 50.0).is_empty());
    }

    fn reference_params() -> (SourceConfig, ChannelConfig, DetectorConfig, ClockPair) {
        (
            source(2000),
            ChannelConfig {
                prop_delay_ab: 50_000.0,
                prop_delay_ba: 50_000.0,
                loss_db: 2.0,
                reciprocal: true,
            },
            DetectorConfig {
                efficiency: 0.85,
                jitter_fwhm_ps: 150.0,
                jitter_mode: JitterMode::BothDetectors,
                dark_count_prob: 0.0,
            },
            ClockPair {
                delta_true: 230.456,
            },
        )
    }

    #[test]
    fn frames_are_bit_reproducible() {
        let (src, ch, det, clocks) = reference_params();
        let params = FrameParams {
            source: &src,
            channel: &ch,
            detector: &det,
            clocks: &clocks,
            attack: AttackConfig::default(),
            mu_eff: 1.0,
        };
        let seed = FrameSeed::new(42, streams::frame(Direction::AtoB, 17, 0));
        let a = simulate_frame(&params, Direction::AtoB, 50_030.456, seed).unwrap();
        let b = simulate_frame(&params, Direction::AtoB, 50_030.456, seed).unwrap();
        assert_eq!(a, b);
        // A different stream gives different events.
        let other = FrameSeed::new(42, streams::frame(Direction::AtoB, 18, 0));
        let c = simulate_frame(&params, Direction::AtoB, 50_030.456, other).unwrap();
        assert_ne!(a.pairs, c.pairs);
    }

    #[test]
    fn empty_frame_for_zero_pulses() {
        let (mut src, ch, det, clocks) = reference_params();
        src.n_pulses = 0;
        let params = FrameParams {
            source: &src,
            channel: &ch,
            detector: &det,
            clocks: &clocks,
            attack: AttackConfig::default(),
            mu_eff: 1.0,
        };
        let frame =
            simulate_frame(&params, Direction::AtoB, 50_000.0, FrameSeed::new(1, 2)).unwrap();
        assert_eq!(frame.n_trials, 0);
        assert!(frame.pairs.is_empty());
        assert_eq!(frame.postselected_rate(), (0.0, 0));
    }

    #[test]
    fn non_positive_mu_is_a_config_error() {
        let (src, ch, det, clocks) = reference_params();
        let params = FrameParams {
            source: &src,
            channel: &ch,
            detector: &det,
            clocks: &clocks,
            attack: AttackConfig::default(),
            mu_eff: 0.0,
        };
        assert!(matches!(
            simulate_frame(&params, Direction::AtoB, 0.0, FrameSeed::new(0, 0)),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn modal_offset_matches_geometry() {
        let (src, ch, det, clocks) = reference_params();
        let params = FrameParams {
            source: &src,
            channel: &ch,
            detector: &det,
            clocks: &clocks,
            attack: AttackConfig::default(),
            mu_eff: 1.0,
        };
        let frame = simulate_frame(
            &params,
            Direction::AtoB,
            50_030.456,
            FrameSeed::new(9, 1),
        )
        .unwrap();
        assert_eq!(frame.modal_offset(), Some(2));
        let frame = simulate_frame(
            &params,
            Direction::BtoA,
            49_969.544,
            FrameSeed::new(9, 2),
        )
        .unwrap();
        assert_eq!(frame.modal_offset(), Some(-2));
    }

    #[test]
    fn stream_counters_do_not_collide_cheaply() {
        let mut seen = std::collections::HashSet::new();
        for vdl in 0..600u32 {
            for frame in 0..3u32 {
                assert!(seen.insert(streams::frame(Direction::AtoB, vdl, frame)));
                assert!(seen.insert(streams::frame(Direction::BtoA, vdl, frame)));
            }
        }
        for k in -15i64..=15 {
            assert!(seen.insert(streams::correlation(123, k)));
        }
    }
}
