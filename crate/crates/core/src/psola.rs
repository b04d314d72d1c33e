//! WAV I/O, pitch marks and TD-PSOLA resynthesis onto a target f0 contour.

use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::pitch::{affine_protect, extract_f0, track_stats, F0Targets, F0Track, PitchConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    /// Samples in [-1, 1].
    pub samples: Vec<f64>,
    pub rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, rate: u32) -> Result<Self> {
        if rate == 0 {
            return Err(Error::Audio("sample rate must be > 0".into()));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::Audio("non-finite sample".into()));
        }
        Ok(Waveform { samples, rate })
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.rate as f64
    }

    pub fn rms(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        (self.samples.iter().map(|s| s * s).sum::<f64>() / self.samples.len() as f64).sqrt()
    }
}

pub fn read_wav(path: impl AsRef<Path>) -> Result<Waveform> {
    let path = path.as_ref();
    let fail = |msg: String| Error::Audio(format!("{}: {msg}", path.display()));
    let mut reader = hound::WavReader::open(path).map_err(|e| fail(e.to_string()))?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(fail(format!("expected mono, found {} channels", spec.channels)));
    }
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(fail(format!(
            "expected 16-bit PCM, found {}-bit {:?}",
            spec.bits_per_sample, spec.sample_format
        )));
    }
    let samples = reader
        .samples::<i16>()
        .map(|s| s.map(|v| v as f64 / 32768.0))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| fail(e.to_string()))?;
    if samples.is_empty() {
        return Err(fail("no samples".into()));
    }
    Waveform::new(samples, spec.sample_rate)
}

pub fn write_wav(wf: &Waveform, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let fail = |e: hound::Error| Error::Audio(format!("{}: {e}", path.display()));
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: wf.rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut w = hound::WavWriter::create(path, spec).map_err(fail)?;
    for &s in &wf.samples {
        let q = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        w.write_sample(q).map_err(fail)?;
    }
    w.finalize().map_err(fail)
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PitchMarks {
    pub positions: Vec<usize>,
    pub voiced: Vec<bool>,
}

impl PitchMarks {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

/// Spacing of marks and identity grains in unvoiced stretches, seconds.
pub const UNVOICED_STEP: f64 = 0.010;

fn argmax(x: &[f64], lo: usize, hi: usize) -> usize {
    let mut best = lo;
    for i in lo..=hi {
        if x[i] > x[best] {
            best = i;
        }
    }
    best
}

/// Analysis epochs: in voiced stretches each mark is the waveform maximum
/// within ±20% of one local period after the previous mark; unvoiced
/// stretches get a mark every 10 ms.
pub fn place_marks(wf: &Waveform, track: &F0Track) -> PitchMarks {
    let x = &wf.samples;
    let n = x.len();
    let rate = wf.rate as f64;
    let step = (UNVOICED_STEP * rate).round().max(1.0);
    let mut marks = PitchMarks::default();
    let mut next = 0.0f64;
    while (next as usize) < n {
        let frame = track.frame_at(next / rate);
        let last = marks.positions.last().copied();
        let last_voiced = marks.voiced.last().copied().unwrap_or(false);
        let m = if frame.voiced {
            let p = rate / frame.f0;
            let (lo, hi) = match last {
                Some(l) if last_voiced => (l as f64 + 0.8 * p, l as f64 + 1.2 * p),
                _ => (next, next + p),
            };
            let lo = lo.round() as usize;
            if lo >= n {
                break;
            }
            let hi = (hi.round() as usize).min(n - 1).max(lo);
            argmax(x, lo, hi)
        } else {
            next.round() as usize
        };
        let m = match last {
            Some(l) if m <= l => l + 1,
            _ => m,
        };
        if m >= n {
            break;
        }
        marks.positions.push(m);
        marks.voiced.push(frame.voiced);
        next = if frame.voiced {
            m as f64 + rate / frame.f0
        } else {
            m as f64 + step
        };
    }
    marks
}

fn hann(k: f64, half: f64) -> f64 {
    // raised cosine on [-half, half]
    if k.abs() >= half {
        0.0
    } else {
        0.5 * (1.0 + (std::f64::consts::PI * k / half).cos())
    }
}

/// TD-PSOLA with the time axis preserved.
///
/// Synthesis marks advance by the target period in voiced stretches. Each
/// copies the Hann grain of two source periods around the nearest voiced
/// analysis mark. Unvoiced stretches are rebuilt from 20 ms identity grains
/// every 10 ms, whose windows sum to one. Voiced grains are not normalised
/// by their overlap; grains spaced wider than their source period get a
/// gain of `sqrt(P_target / P_source)` so the energy per second holds on
/// downward shifts.
pub fn psola_resynth(wf: &Waveform, marks: &PitchMarks, source: &F0Track, target: &F0Track) -> Result<Waveform> {
    if marks.is_empty() {
        return Err(Error::Audio("no pitch marks".into()));
    }
    let x = &wf.samples;
    let n = x.len();
    let rate = wf.rate as f64;
    let voiced_marks: Vec<usize> = marks
        .positions
        .iter()
        .zip(&marks.voiced)
        .filter(|(_, &v)| v)
        .map(|(&p, _)| p)
        .collect();
    let mut out = vec![0.0; n];
    let step = UNVOICED_STEP * rate;

    let mut add_grain = |centre_out: f64, centre_in: f64, half: f64, gain: f64| {
        let lo = (centre_out - half).ceil().max(0.0) as usize;
        let hi = ((centre_out + half).floor() as usize).min(n.saturating_sub(1));
        for (i, o) in out.iter_mut().enumerate().take(hi + 1).skip(lo) {
            let k = i as f64 - centre_out;
            let w = hann(k, half);
            if w == 0.0 {
                continue;
            }
            let src = centre_in + k;
            if src < 0.0 || src > (n - 1) as f64 {
                continue;
            }
            let j = src.round() as usize;
            *o += gain * w * x[j];
        }
    };

    let mut t = 0.0f64;
    while t < n as f64 {
        let tf = target.frame_at(t / rate);
        let nearest = if tf.voiced {
            let idx = voiced_marks.partition_point(|&p| (p as f64) < t);
            [idx.checked_sub(1), Some(idx)]
                .into_iter()
                .flatten()
                .filter(|&i| i < voiced_marks.len())
                .min_by(|&a, &b| {
                    (voiced_marks[a] as f64 - t)
                        .abs()
                        .total_cmp(&(voiced_marks[b] as f64 - t).abs())
                })
        } else {
            None
        };
        let grain = nearest.and_then(|i| {
            let a = voiced_marks[i];
            let sf = source.frame_at(a as f64 / rate);
            let pa = if sf.voiced { rate / sf.f0 } else { rate / tf.f0 };
            ((a as f64 - t).abs() <= 1.5 * pa).then_some((a, pa))
        });
        match grain {
            Some((a, pa)) => {
                let pt = rate / tf.f0;
                add_grain(t, a as f64, pa, (pt / pa).max(1.0).sqrt());
                t += pt;
            }
            None => {
                add_grain(t, t, step, 1.0);
                t += step;
            }
        }
    }
    Waveform::new(out, wf.rate)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AudioReport {
    pub source_mu: Option<f64>,
    pub source_sigma: Option<f64>,
    pub out_mu: Option<f64>,
    pub out_sigma: Option<f64>,
    #[serde(rename = "mu_T")]
    pub mu_t: f64,
    #[serde(rename = "sigma_T")]
    pub sigma_t: f64,
    pub clamped_frames: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

impl AudioReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// extract_f0 → affine_protect → place_marks → psola_resynth, with the
/// output contour measured again for the report. Audio with no voiced
/// frames is returned unchanged.
pub fn protect_audio(wf: &Waveform, targets: &F0Targets, cfg: &PitchConfig) -> Result<(Waveform, AudioReport)> {
    let source = extract_f0(wf, cfg)?;
    let moved = affine_protect(&source, targets);
    let mut report = AudioReport {
        source_mu: moved.source.map(|m| m.mu),
        source_sigma: moved.source.map(|m| m.sigma),
        out_mu: None,
        out_sigma: None,
        mu_t: targets.mu_t,
        sigma_t: targets.sigma_t,
        clamped_frames: moved.clamped_frames,
        warning: moved.warning.clone(),
    };
    if moved.source.is_none() {
        report.out_mu = report.source_mu;
        report.out_sigma = report.source_sigma;
        return Ok((wf.clone(), report));
    }
    let marks = place_marks(wf, &source);
    let out = psola_resynth(wf, &marks, &source, &moved.track)?;
    let measured = track_stats(&extract_f0(&out, cfg)?).moments;
    report.out_mu = measured.map(|m| m.mu);
    report.out_sigma = measured.map(|m| m.sigma);
    Ok((out, report))
}
