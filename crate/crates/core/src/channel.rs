//! Sensor to ECN link under quasi-static Rayleigh fading.
//!
//! The SNR in a slot is exponential with mean `p * g / (B * N0)`. An update
//! fails when that SNR is below the threshold needed to push `F` bits through
//! `B` Hz within the update phase. The simulator samples the resulting
//! Bernoulli outcome directly; [`sample_snr`] exists so the two routes can be
//! compared.

use rand::Rng;

use crate::error::{Error, Result};

/// Physical parameters of the update link, all in linear SI units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkParams {
    pub packet_size_bits: f64,
    pub update_phase_s: f64,
    pub bandwidth_hz: f64,
    pub transmit_power_w: f64,
    /// Mean channel power gain (linear).
    pub mean_channel_gain: f64,
    /// Noise power spectral density in W/Hz; noise power is `bandwidth * density`.
    pub noise_density_w_per_hz: f64,
}

/// Quantities derived once from [`LinkParams`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkDerived {
    pub required_rate_bps: f64,
    pub snr_threshold: f64,
    pub mean_snr: f64,
    pub failure_prob: f64,
}

fn positive(name: &'static str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::param(
            name,
            format!("must be finite and > 0, got {v}"),
        ))
    }
}

impl LinkParams {
    pub fn validate(&self) -> Result<()> {
        positive("packet_size_bits", self.packet_size_bits)?;
        positive("update_phase_s", self.update_phase_s)?;
        positive("bandwidth_hz", self.bandwidth_hz)?;
        positive("transmit_power_w", self.transmit_power_w)?;
        positive("mean_channel_gain", self.mean_channel_gain)?;
        positive("noise_density_w_per_hz", self.noise_density_w_per_hz)?;
        positive("required_rate", self.required_rate())
    }

    pub fn required_rate(&self) -> f64 {
        self.packet_size_bits / self.update_phase_s
    }

    pub fn mean_snr(&self) -> f64 {
        self.transmit_power_w * self.mean_channel_gain
            / (self.bandwidth_hz * self.noise_density_w_per_hz)
    }

    pub fn derive(&self) -> Result<LinkDerived> {
        let snr_threshold = snr_threshold(self)?;
        let mean_snr = self.mean_snr();
        Ok(LinkDerived {
            required_rate_bps: self.required_rate(),
            snr_threshold,
            mean_snr,
            failure_prob: outage_probability(snr_threshold, mean_snr),
        })
    }
}

/// Shannon threshold `2^(R/B) - 1` for the rate `R = F / D_u`.
pub fn snr_threshold(link: &LinkParams) -> Result<f64> {
    link.validate()?;
    // exp2 is exact at integer exponents: F/(D_u B) = 2 gives exactly 3
    Ok((link.required_rate() / link.bandwidth_hz).exp2() - 1.0)
}

/// Probability that an exponential SNR with the given mean falls below the
/// threshold.
pub fn outage_probability(snr_threshold: f64, mean_snr: f64) -> f64 {
    -(-snr_threshold / mean_snr).exp_m1()
}

pub fn failure_probability(link: &LinkParams) -> Result<f64> {
    Ok(outage_probability(snr_threshold(link)?, link.mean_snr()))
}

/// One Bernoulli draw per slot: `true` (delivered) with probability `1 - p_f`.
///
/// Consumes exactly one `f64` from the stream.
#[inline]
pub fn sample_update_success<R: Rng + ?Sized>(p_f: f64, rng: &mut R) -> bool {
    debug_assert!((0.0..=1.0).contains(&p_f));
    rng.gen::<f64>() >= p_f
}

/// Draws a per-slot SNR from the Rayleigh (exponential power) distribution.
pub fn sample_snr<R: Rng + ?Sized>(mean_snr: f64, rng: &mut R) -> f64 {
    let u: f64 = rng.gen();
    -mean_snr * (-u).ln_1p()
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn paper_link() -> LinkParams {
        LinkParams {
            packet_size_bits: 200e3,
            update_phase_s: 1.0,
            bandwidth_hz: 100e3,
            transmit_power_w: 10e-3,
            mean_channel_gain: 1e-12,
            noise_density_w_per_hz: 10f64.powf(-20.4),
        }
    }

    #[test]
    fn threshold_hand_values() {
        let link = paper_link();
        assert_eq!(snr_threshold(&link).unwrap(), 3.0);
        let half = LinkParams {
            packet_size_bits: 100e3,
            ..link
        };
        assert!((snr_threshold(&half).unwrap() - 1.0).abs() < 1e-12);
        let wide = LinkParams {
            bandwidth_hz: 1e9 * link.required_rate(),
            ..link
        };
        assert!(snr_threshold(&wide).unwrap() < 1e-6);
    }

    #[test]
    fn rejects_non_positive_inputs() {
        let bad = LinkParams {
            bandwidth_hz: 0.0,
            ..paper_link()
        };
        assert!(snr_threshold(&bad).is_err());
        let bad = LinkParams {
            transmit_power_w: -1.0,
            ..paper_link()
        };
        assert!(bad.derive().is_err());
        let bad = LinkParams {
            noise_density_w_per_hz: f64::NAN,
            ..paper_link()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn failure_probability_matches_monte_carlo() {
        let link = paper_link();
        let d = link.derive().unwrap();
        assert!((d.mean_snr - 25.118_864_315_095_8).abs() < 1e-9);
        assert!((d.failure_prob - 0.1125).abs() < 5e-4);

        let n = 10_000_000u64;
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let below = (0..n)
            .filter(|_| sample_snr(d.mean_snr, &mut rng) < d.snr_threshold)
            .count() as f64;
        let p_hat = below / n as f64;
        let sigma = (d.failure_prob * (1.0 - d.failure_prob) / n as f64).sqrt();
        assert!(
            (p_hat - d.failure_prob).abs() < 3.0 * sigma,
            "{p_hat} vs {}",
            d.failure_prob
        );
    }

    #[test]
    fn outage_limits() {
        assert_eq!(outage_probability(0.0, 25.0), 0.0);
        let huge_gain = LinkParams {
            mean_channel_gain: 1e3,
            ..paper_link()
        };
        assert!(failure_probability(&huge_gain).unwrap() < 1e-12);
    }

    #[test]
    fn bernoulli_edges_and_rate() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!((0..10_000).all(|_| sample_update_success(0.0, &mut rng)));
        assert!((0..10_000).all(|_| !sample_update_success(1.0, &mut rng)));
        let n = 1_000_000;
        let fails = (0..n)
            .filter(|_| !sample_update_success(0.1125, &mut rng))
            .count();
        assert!((fails as f64 / n as f64 - 0.1125).abs() < 1e-3);
    }

    #[test]
    fn direct_and_gain_routes_agree() {
        let link = paper_link();
        let d = link.derive().unwrap();
        let n = 1_000_000;
        let mut a = ChaCha8Rng::seed_from_u64(10);
        let mut b = ChaCha8Rng::seed_from_u64(11);
        let direct = (0..n)
            .filter(|_| !sample_update_success(d.failure_prob, &mut a))
            .count();
        let via_gain = (0..n)
            .filter(|_| sample_snr(d.mean_snr, &mut b) < d.snr_threshold)
            .count();
        let sigma = (2.0 * d.failure_prob * (1.0 - d.failure_prob) / n as f64).sqrt();
        let diff = (direct as f64 - via_gain as f64).abs() / n as f64;
        assert!(diff < 4.0 * sigma, "diff {diff}");
    }

    proptest::proptest! {
        #[test]
        fn failure_monotone(bits in 1e3f64..1e6, bw in 1e4f64..1e6, gain_db in -140f64..-100.0, k in 1.01f64..4.0) {
            let base = LinkParams {
                packet_size_bits: bits,
                bandwidth_hz: bw,
                mean_channel_gain: 10f64.powf(gain_db / 10.0),
                ..paper_link()
            };
            let more_bits = LinkParams { packet_size_bits: bits * k, ..base };
            let more_bw = LinkParams { bandwidth_hz: bw * k, ..base };
            let more_gain = LinkParams { mean_channel_gain: base.mean_channel_gain * k, ..base };
            let t0 = snr_threshold(&base).unwrap();
            proptest::prop_assert!(snr_threshold(&more_bits).unwrap() > t0);
            proptest::prop_assert!(snr_threshold(&more_bw).unwrap() < t0);
            let p0 = failure_probability(&base).unwrap();
            // larger threshold at fixed mean SNR
            proptest::prop_assert!(failure_probability(&more_bits).unwrap() >= p0);
            proptest::prop_assert!(failure_probability(&more_gain).unwrap() <= p0);
            proptest::prop_assert!(outage_probability(t0 * k, base.mean_snr()) >= p0);
        }
    }
}
