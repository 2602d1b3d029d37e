//! Synthetic XRF instrument: linear-ramp bremsstrahlung background plus
//! Gaussian emission lines, realized with Poisson counting noise.

use std::collections::BTreeMap;

use nalgebra::Vector2;
use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const CHANNELS: usize = 1024;
pub const EV_PER_CHANNEL: f64 = 20.0;
pub const PEAK_SIGMA_EV: f64 = 80.0;
/// Tube voltage at which the background scale is normalized (kV).
const REFERENCE_KV: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct XrfSourceParams {
    pub tube_voltage_kv: f64,
    pub tube_current_ua: f64,
    pub integration_s: f64,
}

#[derive(Debug, Clone, PartialEq, Error, Serialize, Deserialize)]
pub enum XrfError {
    #[error("tube voltage {0} kV outside [5, 50]")]
    Voltage(f64),
    #[error("tube current {0} uA outside [5, 200]")]
    Current(f64),
    #[error("integration time must be positive, got {0} s")]
    Integration(f64),
    #[error("sensor is not in contact with the seafloor")]
    NotInContact,
    #[error("contact lost after {live_time:.2} s of integration")]
    ContactLost { live_time: f64 },
    #[error("invalid composition: {0}")]
    Composition(String),
}

impl Default for XrfSourceParams {
    fn default() -> Self {
        Self { tube_voltage_kv: 40.0, tube_current_ua: 100.0, integration_s: 60.0 }
    }
}

impl XrfSourceParams {
    pub fn validate(&self) -> Result<(), XrfError> {
        if !(5.0..=50.0).contains(&self.tube_voltage_kv) {
            return Err(XrfError::Voltage(self.tube_voltage_kv));
        }
        if !(5.0..=200.0).contains(&self.tube_current_ua) {
            return Err(XrfError::Current(self.tube_current_ua));
        }
        if !(self.integration_s > 0.0 && self.integration_s.is_finite()) {
            return Err(XrfError::Integration(self.integration_s));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmissionLine {
    pub element: String,
    pub energy_kev: f64,
    /// Peak counts per (uA * s * mass fraction) at full excitation.
    pub sensitivity: f64,
}

/// Instrument response: line table plus background scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct XrfInstrument {
    pub lines: Vec<EmissionLine>,
    /// Background counts per channel per (uA * s) at the reference voltage and zero energy.
    pub background_scale: f64,
}

/// Fraction of a line excited at `voltage_kv`; zero below the line energy.
pub fn excitation_factor(voltage_kv: f64, line_kev: f64) -> f64 {
    if voltage_kv <= line_kev {
        0.0
    } else {
        1.0 - line_kev / voltage_kv
    }
}

/// Energy at the center of a channel (keV).
pub fn channel_kev(channel: usize) -> f64 {
    (channel as f64 + 0.5) * EV_PER_CHANNEL / 1000.0
}

/// Channel holding energy `kev`.
pub fn channel_of(kev: f64) -> usize {
    ((kev * 1000.0 / EV_PER_CHANNEL).floor().max(0.0) as usize).min(CHANNELS - 1)
}

impl XrfInstrument {
    pub fn line(&self, element: &str) -> Option<&EmissionLine> {
        self.lines.iter().find(|l| l.element == element)
    }

    /// Expected background counts in one channel.
    pub fn background(&self, channel: usize, params: &XrfSourceParams, live_time: f64) -> f64 {
        let v = params.tube_voltage_kv;
        let ramp = (1.0 - channel_kev(channel) / v).max(0.0);
        self.background_scale * params.tube_current_ua * live_time * (v / REFERENCE_KV) * ramp
    }

    /// Expected total peak area of one line.
    pub fn peak_area(&self, line: &EmissionLine, concentration: f64, params: &XrfSourceParams, live_time: f64) -> f64 {
        line.sensitivity * concentration * params.tube_current_ua * live_time * excitation_factor(params.tube_voltage_kv, line.energy_kev)
    }

    /// Closed-form expected counts per channel.
    pub fn expected_spectrum(&self, composition: &BTreeMap<String, f64>, params: &XrfSourceParams, live_time: f64) -> Vec<f64> {
        let mut out: Vec<f64> = (0..CHANNELS).map(|c| self.background(c, params, live_time)).collect();
        let sigma = PEAK_SIGMA_EV / 1000.0;
        let width = EV_PER_CHANNEL / 1000.0;
        for line in &self.lines {
            let conc = composition.get(&line.element).copied().unwrap_or(0.0);
            let area = self.peak_area(line, conc, params, live_time);
            if area <= 0.0 {
                continue;
            }
            let lo = channel_of(line.energy_kev - 8.0 * sigma);
            let hi = channel_of(line.energy_kev + 8.0 * sigma);
            let cdf = |e: f64| 0.5 * (1.0 + libm::erf((e - line.energy_kev) / (sigma * std::f64::consts::SQRT_2)));
            for (c, slot) in out.iter_mut().enumerate().take(hi + 1).skip(lo) {
                let e0 = c as f64 * width;
                *slot += area * (cdf(e0 + width) - cdf(e0));
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct XrfSpectrum {
    pub counts: Vec<u64>,
    pub ev_per_channel: f64,
    pub live_time: f64,
    pub params: XrfSourceParams,
}

impl XrfSpectrum {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Counts in `[lo_kev, hi_kev)` by channel center.
    pub fn window(&self, lo_kev: f64, hi_kev: f64) -> u64 {
        self.counts.iter().enumerate().filter(|(c, _)| (lo_kev..hi_kev).contains(&channel_kev(*c))).map(|(_, n)| n).sum()
    }

    /// Two-column text: channel energy (keV) and counts.
    pub fn to_columns(&self) -> String {
        let mut out = String::from("channel_kev\tcounts\n");
        for (c, n) in self.counts.iter().enumerate() {
            out.push_str(&format!("{:.3}\t{}\n", channel_kev(c), n));
        }
        out
    }
}

/// Draws a spectrum with Poisson noise around the closed-form expectation.
pub fn realize_spectrum<R: Rng>(expected: &[f64], params: XrfSourceParams, live_time: f64, rng: &mut R) -> XrfSpectrum {
    let counts = expected
        .iter()
        .map(|&lambda| match Poisson::new(lambda) {
            Ok(p) if lambda > 0.0 => p.sample(rng) as u64,
            _ => 0,
        })
        .collect();
    XrfSpectrum { counts, ev_per_channel: EV_PER_CHANNEL, live_time, params }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompositionRegion {
    pub name: String,
    /// Vertices in the terrain plane (x, y), either winding.
    pub polygon: Vec<[f64; 2]>,
    pub concentrations: BTreeMap<String, f64>,
}

/// Ground-truth elemental mass fractions over the worksite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteComposition {
    pub regions: Vec<CompositionRegion>,
    pub default: BTreeMap<String, f64>,
}

pub const AMBIENT_REGION: &str = "ambient";

fn contains(polygon: &[[f64; 2]], p: Vector2<f64>) -> bool {
    let mut inside = false;
    let n = polygon.len();
    for i in 0..n {
        let [xi, yi] = polygon[i];
        let [xj, yj] = polygon[(i + n - 1) % n];
        if (yi > p.y) != (yj > p.y) && p.x < (xj - xi) * (p.y - yi) / (yj - yi) + xi {
            inside = !inside;
        }
    }
    inside
}

impl SiteComposition {
    pub fn validate(&self) -> Result<(), XrfError> {
        let check = |name: &str, c: &BTreeMap<String, f64>| {
            if c.values().any(|v| !(*v >= 0.0)) || c.values().sum::<f64>() > 1.0 {
                Err(XrfError::Composition(format!("{name}: fractions must be non-negative and sum to at most 1")))
            } else {
                Ok(())
            }
        };
        check(AMBIENT_REGION, &self.default)?;
        for r in &self.regions {
            if r.polygon.len() < 3 {
                return Err(XrfError::Composition(format!("{}: polygon needs at least 3 vertices", r.name)));
            }
            check(&r.name, &r.concentrations)?;
        }
        Ok(())
    }

    /// First region containing `(x, y)`, or the ambient default.
    pub fn at(&self, x: f64, y: f64) -> (&str, &BTreeMap<String, f64>) {
        self.regions
            .iter()
            .find(|r| contains(&r.polygon, Vector2::new(x, y)))
            .map_or((AMBIENT_REGION, &self.default), |r| (r.name.as_str(), &r.concentrations))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn instrument() -> XrfInstrument {
        XrfInstrument { lines: vec![EmissionLine { element: "Fe".into(), energy_kev: 6.40, sensitivity: 100.0 }], background_scale: 0.0125 }
    }

    fn fe(c: f64) -> BTreeMap<String, f64> {
        [("Fe".to_string(), c)].into()
    }

    #[test]
    fn zero_live_time_is_empty() {
        let e = instrument().expected_spectrum(&fe(0.05), &XrfSourceParams::default(), 0.0);
        assert!(e.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn expectation_is_linear_in_time_and_current() {
        let inst = instrument();
        let p = XrfSourceParams::default();
        let total = |p: &XrfSourceParams, t: f64| inst.expected_spectrum(&fe(0.05), p, t).iter().sum::<f64>();
        let base = total(&p, 30.0);
        assert!((total(&p, 60.0) / base - 2.0).abs() < 1e-12);
        let doubled = XrfSourceParams { tube_current_ua: 200.0, ..p };
        assert!((total(&doubled, 30.0) / base - 2.0).abs() < 1e-12);
    }

    #[test]
    fn peak_area_is_conserved_across_channels() {
        let inst = instrument();
        let p = XrfSourceParams::default();
        let with = inst.expected_spectrum(&fe(0.05), &p, 60.0);
        let without = inst.expected_spectrum(&fe(0.0), &p, 60.0);
        let net: f64 = with.iter().zip(&without).map(|(a, b)| a - b).sum();
        let area = 100.0 * 0.05 * 100.0 * 60.0 * (1.0 - 6.4 / 40.0);
        assert!((net - area).abs() / area < 1e-9);
    }

    #[test]
    fn five_kilovolts_does_not_excite_iron() {
        assert_eq!(excitation_factor(5.0, 6.4), 0.0);
        let inst = instrument();
        let p = XrfSourceParams { tube_voltage_kv: 5.0, ..Default::default() };
        assert_eq!(inst.expected_spectrum(&fe(0.05), &p, 60.0), inst.expected_spectrum(&fe(0.0), &p, 60.0));
    }

    #[test]
    fn polygon_lookup() {
        let site = SiteComposition {
            regions: vec![CompositionRegion { name: "mat".into(), polygon: vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]], concentrations: fe(0.05) }],
            default: fe(0.005),
        };
        assert_eq!(site.at(0.5, 0.5).0, "mat");
        assert_eq!(site.at(1.5, 0.5).0, AMBIENT_REGION);
        site.validate().unwrap();
    }
}
