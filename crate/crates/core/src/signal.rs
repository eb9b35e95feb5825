//! Signal conditioning: common-mode compensation, band-pass ringing
//! detection and the contact make/break state machine.

use std::f64::consts::PI;

use nalgebra::Complex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

type C64 = Complex<f64>;

pub const NOMINAL_RATE_HZ: f64 = 250.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SignalError {
    #[error("invalid filter design: {0}")]
    Design(String),
    #[error("filter designed for {filter} Hz applied to a {stream} Hz stream")]
    SampleRateMismatch { filter: f64, stream: f64 },
    #[error("timestamps must be strictly increasing (sample {index})")]
    NonIncreasingTime { index: usize },
    #[error("channel count changed at sample {index}")]
    ChannelCount { index: usize },
}

/// Second-order section in transposed direct form II.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    /// `a[0]` is 1.
    pub a: [f64; 3],
    s1: f64,
    s2: f64,
}

impl Biquad {
    fn new(b: [f64; 3], a: [f64; 3]) -> Self {
        Self { b, a, s1: 0.0, s2: 0.0 }
    }

    fn process(&mut self, x: f64) -> f64 {
        let y = self.b[0] * x + self.s1;
        self.s1 = self.b[1] * x - self.a[1] * y + self.s2;
        self.s2 = self.b[2] * x - self.a[2] * y;
        y
    }

    fn response(&self, z_inv: C64) -> C64 {
        let z2 = z_inv * z_inv;
        (C64::from(self.b[0]) + z_inv * self.b[1] + z2 * self.b[2])
            / (C64::from(1.0) + z_inv * self.a[1] + z2 * self.a[2])
    }

    /// Pole radii of the section.
    fn pole_radius(&self) -> f64 {
        // z² + a1 z + a2 = 0
        let disc = C64::from(self.a[1] * self.a[1] - 4.0 * self.a[2]).sqrt();
        let r1 = ((-self.a[1] + disc) * 0.5).norm();
        let r2 = ((-self.a[1] - disc) * 0.5).norm();
        r1.max(r2)
    }
}

/// Butterworth band-pass IIR filter as cascaded biquads.
#[derive(Debug, Clone, PartialEq)]
pub struct BandPassFilter {
    sections: Vec<Biquad>,
    order: usize,
    low_hz: f64,
    high_hz: f64,
    sample_rate: f64,
}

impl BandPassFilter {
    /// `order` is the band-pass order (twice the low-pass prototype order).
    pub fn butterworth(order: usize, low_hz: f64, high_hz: f64, sample_rate: f64) -> Result<Self, SignalError> {
        if order == 0 || order % 2 != 0 {
            return Err(SignalError::Design(format!("order must be even and positive, got {order}")));
        }
        if !(sample_rate > 0.0 && low_hz > 0.0 && low_hz < high_hz && high_hz < 0.5 * sample_rate) {
            return Err(SignalError::Design(format!(
                "need 0 < {low_hz} < {high_hz} < {} Hz",
                0.5 * sample_rate
            )));
        }
        let n = order / 2;
        let fs2 = 2.0 * sample_rate;
        let w1 = fs2 * (PI * low_hz / sample_rate).tan();
        let w2 = fs2 * (PI * high_hz / sample_rate).tan();
        let w0sq = w1 * w2;
        let bw = w2 - w1;
        let center = 2.0 * (w0sq.sqrt() / fs2).atan();

        let mut sections = Vec::with_capacity(n);
        for k in 0..n {
            // low-pass prototype pole
            let theta = PI * (2 * k + n + 1) as f64 / (2 * n) as f64;
            let p = C64::from_polar(1.0, theta);
            let pb = p * bw;
            let root = (pb * pb - C64::from(4.0 * w0sq)).sqrt();
            for s in [(pb + root) * 0.5, (pb - root) * 0.5] {
                if s.im < 0.0 {
                    continue;
                }
                let z = (C64::from(1.0) + s / fs2) / (C64::from(1.0) - s / fs2);
                let a = [1.0, -2.0 * z.re, z.norm_sqr()];
                let mut bq = Biquad::new([1.0, 0.0, -1.0], a);
                let g = bq.response(C64::from_polar(1.0, -center)).norm();
                bq.b = [1.0 / g, 0.0, -1.0 / g];
                sections.push(bq);
            }
        }
        if sections.len() != n {
            return Err(SignalError::Design("pole pairing failed".into()));
        }
        for (k, s) in sections.iter().enumerate() {
            let r = s.pole_radius();
            if !(r < 1.0) {
                return Err(SignalError::Design(format!("section {k} unstable (pole radius {r})")));
            }
        }
        Ok(Self {
            sections,
            order,
            low_hz,
            high_hz,
            sample_rate,
        })
    }

    /// Order-6, 20–32 Hz band-pass at 250 Hz for the whisker ringing band.
    pub fn ringing_detector() -> Self {
        Self::butterworth(6, 20.0, 32.0, NOMINAL_RATE_HZ).expect("static design is valid")
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn passband(&self) -> (f64, f64) {
        (self.low_hz, self.high_hz)
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn sections(&self) -> &[Biquad] {
        &self.sections
    }

    /// Largest pole radius across sections.
    pub fn max_pole_radius(&self) -> f64 {
        self.sections.iter().map(Biquad::pole_radius).fold(0.0, f64::max)
    }

    pub fn reset(&mut self) {
        for s in &mut self.sections {
            s.s1 = 0.0;
            s.s2 = 0.0;
        }
    }

    pub fn process(&mut self, x: f64) -> f64 {
        self.sections.iter_mut().fold(x, |acc, s| s.process(acc))
    }

    pub fn filter(&mut self, xs: &[f64]) -> Vec<f64> {
        xs.iter().map(|&x| self.process(x)).collect()
    }

    /// Magnitude of the cascade transfer function at `freq_hz`.
    pub fn frequency_response(&self, freq_hz: f64) -> f64 {
        let z_inv = C64::from_polar(1.0, -2.0 * PI * freq_hz / self.sample_rate);
        self.sections
            .iter()
            .fold(C64::from(1.0), |acc, s| acc * s.response(z_inv))
            .norm()
    }
}

/// Magnitude of the analog Butterworth band-pass prototype mapped through
/// the pre-warped bilinear transform.
pub fn analytic_butterworth_bandpass(order: usize, low_hz: f64, high_hz: f64, sample_rate: f64, freq_hz: f64) -> f64 {
    let warp = |f: f64| 2.0 * sample_rate * (PI * f / sample_rate).tan();
    let (w1, w2, w) = (warp(low_hz), warp(high_hz), warp(freq_hz));
    let x = (w * w - w1 * w2) / ((w2 - w1) * w);
    1.0 / (1.0 + x.powi(order as i32)).sqrt()
}

/// One multi-channel sample: 3-axis readings per whisker plus an optional
/// common-mode reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleFrame {
    pub timestamp: f64,
    pub channels: Vec<[f64; 3]>,
    pub reference: Option<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Compensated {
    pub channels: Vec<Vec<[f64; 3]>>,
    /// Some frames had no reference; those passed through uncompensated.
    pub reference_missing: bool,
    /// Indices of samples preceded by a gap over three nominal periods.
    pub gaps: Vec<usize>,
}

/// Indices `i` where `t[i] - t[i-1]` exceeds three nominal periods.
pub fn timestamp_gaps(timestamps: &[f64], nominal_period: f64) -> Result<Vec<usize>, SignalError> {
    let mut gaps = Vec::new();
    for (i, w) in timestamps.windows(2).enumerate() {
        let d = w[1] - w[0];
        if !(d > 0.0) {
            return Err(SignalError::NonIncreasingTime { index: i + 1 });
        }
        if d > 3.0 * nominal_period {
            gaps.push(i + 1);
        }
    }
    Ok(gaps)
}

/// Static offsets measured at rest, subtracted before the common-mode
/// difference.
#[derive(Debug, Clone, PartialEq)]
pub struct Compensator {
    channel_offsets: Vec<[f64; 3]>,
    reference_offset: Option<[f64; 3]>,
}

fn mean3(rows: impl Iterator<Item = [f64; 3]>) -> Option<[f64; 3]> {
    let mut acc = [0.0; 3];
    let mut n = 0usize;
    for r in rows {
        for k in 0..3 {
            acc[k] += r[k];
        }
        n += 1;
    }
    (n > 0).then(|| acc.map(|a| a / n as f64))
}

impl Compensator {
    /// Offsets from the frames within `rest_seconds` of the first one.
    pub fn calibrate(frames: &[SampleFrame], rest_seconds: f64) -> Result<Self, SignalError> {
        let Some(first) = frames.first() else {
            return Ok(Self {
                channel_offsets: Vec::new(),
                reference_offset: None,
            });
        };
        let nc = first.channels.len();
        let t0 = first.timestamp;
        let rest: Vec<&SampleFrame> = frames
            .iter()
            .take_while(|f| f.timestamp - t0 < rest_seconds)
            .collect();
        for (index, f) in rest.iter().enumerate() {
            if f.channels.len() != nc {
                return Err(SignalError::ChannelCount { index });
            }
        }
        let channel_offsets = (0..nc)
            .map(|c| mean3(rest.iter().map(|f| f.channels[c])).unwrap_or([0.0; 3]))
            .collect();
        let reference_offset = if rest.iter().all(|f| f.reference.is_some()) {
            mean3(rest.iter().filter_map(|f| f.reference))
        } else {
            None
        };
        Ok(Self {
            channel_offsets,
            reference_offset,
        })
    }

    /// Compensated channels and whether the reference was unavailable.
    pub fn apply(&self, frame: &SampleFrame) -> (Vec<[f64; 3]>, bool) {
        let reference = match (frame.reference, self.reference_offset) {
            (Some(r), Some(o)) => Some([r[0] - o[0], r[1] - o[1], r[2] - o[2]]),
            _ => None,
        };
        let out = frame
            .channels
            .iter()
            .enumerate()
            .map(|(c, ch)| match reference {
                Some(r) => {
                    let o = self.channel_offsets.get(c).copied().unwrap_or([0.0; 3]);
                    [ch[0] - o[0] - r[0], ch[1] - o[1] - r[1], ch[2] - o[2] - r[2]]
                }
                None => *ch,
            })
            .collect();
        (out, reference.is_none())
    }
}

/// Batch compensation with offsets from the first 0.5 s.
pub fn compensate(frames: &[SampleFrame]) -> Result<Compensated, SignalError> {
    let ts: Vec<f64> = frames.iter().map(|f| f.timestamp).collect();
    let gaps = timestamp_gaps(&ts, 1.0 / NOMINAL_RATE_HZ)?;
    let comp = Compensator::calibrate(frames, 0.5)?;
    let nc = frames.first().map_or(0, |f| f.channels.len());
    let mut channels = vec![Vec::with_capacity(frames.len()); nc];
    let mut missing = false;
    for (index, f) in frames.iter().enumerate() {
        if f.channels.len() != nc {
            return Err(SignalError::ChannelCount { index });
        }
        let (out, m) = comp.apply(f);
        missing |= m;
        for (c, v) in out.into_iter().enumerate() {
            channels[c].push(v);
        }
    }
    Ok(Compensated {
        channels,
        reference_missing: missing,
        gaps,
    })
}

/// Detector thresholds, in signal units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Thresholds {
    /// Enter contact above this magnitude.
    pub hi: f64,
    /// Candidate exit when the signal, taken with its polarity at contact
    /// make, drops below this.
    pub lo: f64,
    /// Band-passed magnitude that confirms a ringing release.
    pub ring: f64,
    /// Consecutive samples above `hi` needed to make contact.
    pub debounce: usize,
    /// Samples below `lo` after which contact is dropped without ringing.
    pub exit_hold: usize,
    /// Quiet samples needed to re-arm after a break.
    pub release_hold: usize,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self::from_max_signal(1.0)
    }
}

impl Thresholds {
    /// 6 % / 3 % of the calibrated maximum, ringing threshold at `hi`.
    pub fn from_max_signal(max_signal: f64) -> Self {
        let m = max_signal.abs();
        Self {
            hi: 0.06 * m,
            lo: 0.03 * m,
            ring: 0.06 * m,
            debounce: 3,
            exit_hold: 25,
            release_hold: 10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Idle,
    Debounce(usize),
    Contact,
    CandidateExit(usize),
    Inhibit(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BreakKind {
    /// Ringing seen in the band-pass output.
    Ringing,
    /// Signal stayed below the exit threshold.
    Quiet,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MonitorOutput {
    pub in_contact: bool,
    /// Contact was made at this sample.
    pub made: bool,
    pub broke: Option<BreakKind>,
}

/// Causal contact make/break state machine over one signal stream.
#[derive(Debug, Clone)]
pub struct ContactMonitor {
    thresholds: Thresholds,
    filter: Option<BandPassFilter>,
    phase: Phase,
    /// Sign of the signal when contact was made.
    polarity: f64,
}

impl ContactMonitor {
    pub fn new(thresholds: Thresholds, filter: Option<BandPassFilter>) -> Self {
        Self {
            thresholds,
            filter,
            phase: Phase::Idle,
            polarity: 1.0,
        }
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn step(&mut self, x: f64) -> MonitorOutput {
        let th = &self.thresholds;
        let bp = match &mut self.filter {
            Some(f) => f.process(if x.is_finite() { x } else { 0.0 }).abs(),
            None => 0.0,
        };
        let x = if x.is_finite() { x } else { 0.0 };
        let mag = x.abs();
        // a reversal of sign counts as dropping below the exit threshold
        let along = x * self.polarity;
        let mut made = false;
        let mut broke = None;
        self.phase = match self.phase {
            Phase::Idle | Phase::Debounce(_) => {
                let count = match self.phase {
                    Phase::Debounce(c) => c,
                    _ => 0,
                };
                if mag > th.hi {
                    if count + 1 >= th.debounce {
                        made = true;
                        self.polarity = x.signum();
                        Phase::Contact
                    } else {
                        Phase::Debounce(count + 1)
                    }
                } else {
                    Phase::Idle
                }
            }
            Phase::Contact => {
                if along < th.lo {
                    Phase::CandidateExit(1)
                } else {
                    Phase::Contact
                }
            }
            Phase::CandidateExit(n) => {
                if self.filter.is_some() && bp > th.ring {
                    broke = Some(BreakKind::Ringing);
                    Phase::Inhibit(0)
                } else if along >= th.lo {
                    Phase::Contact
                } else if n + 1 >= th.exit_hold {
                    broke = Some(BreakKind::Quiet);
                    Phase::Idle
                } else {
                    Phase::CandidateExit(n + 1)
                }
            }
            Phase::Inhibit(q) => {
                let quiet = mag < th.hi && bp < th.ring;
                if !quiet {
                    Phase::Inhibit(0)
                } else if q + 1 >= th.release_hold {
                    Phase::Idle
                } else {
                    Phase::Inhibit(q + 1)
                }
            }
        };
        MonitorOutput {
            in_contact: matches!(self.phase, Phase::Contact | Phase::CandidateExit(_)),
            made,
            broke,
        }
    }
}

/// Per-sample contact state from the hysteresis detector alone.
pub fn detect_contact(signal: &[f64], thresholds: &Thresholds) -> Vec<bool> {
    let mut m = ContactMonitor::new(*thresholds, None);
    signal.iter().map(|&x| m.step(x).in_contact).collect()
}

/// Sample indices of ringing break events.
pub fn detect_break(
    signal: &[f64],
    sample_rate: f64,
    filter: &BandPassFilter,
    thresholds: &Thresholds,
) -> Result<Vec<usize>, SignalError> {
    if (filter.sample_rate() - sample_rate).abs() > 1e-9 * sample_rate {
        return Err(SignalError::SampleRateMismatch {
            filter: filter.sample_rate(),
            stream: sample_rate,
        });
    }
    let mut f = filter.clone();
    f.reset();
    let mut m = ContactMonitor::new(*thresholds, Some(f));
    Ok(signal
        .iter()
        .enumerate()
        .filter_map(|(k, &x)| (m.step(x).broke == Some(BreakKind::Ringing)).then_some(k))
        .collect())
}
