//! f0 extraction (YIN), balanced target moments and the per-utterance affine
//! f0 transform.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::embeddings::Sex;
use crate::error::{Error, Result};
use crate::psola::{read_wav, Waveform};

#[derive(Debug, Clone, PartialEq)]
pub struct PitchConfig {
    pub f0_min: f64,
    pub f0_max: f64,
    /// Analysis window, seconds.
    pub window: f64,
    /// Frame hop, seconds.
    pub hop: f64,
    pub yin_threshold: f64,
}

impl Default for PitchConfig {
    fn default() -> Self {
        PitchConfig {
            f0_min: 60.0,
            f0_max: 400.0,
            window: 0.040,
            hop: 0.010,
            yin_threshold: 0.15,
        }
    }
}

impl PitchConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.f0_min > 0.0 && self.f0_min < self.f0_max && self.f0_max.is_finite()) {
            return Err(Error::Config(format!(
                "need 0 < f0_min < f0_max, got {} and {}",
                self.f0_min, self.f0_max
            )));
        }
        if !(self.window >= 2.0 / self.f0_min - 1e-12) {
            return Err(Error::Config(format!(
                "window {} s is shorter than two periods of f0_min ({} s)",
                self.window,
                2.0 / self.f0_min
            )));
        }
        if !(self.hop > 0.0 && self.hop.is_finite()) {
            return Err(Error::Config("hop must be > 0".into()));
        }
        if !(self.yin_threshold > 0.0 && self.yin_threshold < 1.0) {
            return Err(Error::Config("yin_threshold must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct F0Frame {
    /// Hz; 0 when unvoiced.
    pub f0: f64,
    pub voiced: bool,
}

impl F0Frame {
    pub const UNVOICED: F0Frame = F0Frame { f0: 0.0, voiced: false };

    pub fn voiced(f0: f64) -> Self {
        F0Frame { f0, voiced: true }
    }
}

/// Frame `i` is centred at `i * hop` seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct F0Track {
    pub hop: f64,
    pub frames: Vec<F0Frame>,
}

impl F0Track {
    pub fn new(hop: f64, frames: Vec<F0Frame>) -> Result<Self> {
        if !(hop > 0.0 && hop.is_finite()) {
            return Err(Error::Pitch(format!("hop must be > 0, got {hop}")));
        }
        if let Some(i) = frames.iter().position(|f| f.voiced && !(f.f0 > 0.0 && f.f0.is_finite())) {
            return Err(Error::Pitch(format!("frame {i} is voiced with f0 {}", frames[i].f0)));
        }
        Ok(F0Track { hop, frames })
    }

    pub fn voiced_f0(&self) -> impl Iterator<Item = f64> + '_ {
        self.frames.iter().filter(|f| f.voiced).map(|f| f.f0)
    }

    /// Frame nearest to time `t` seconds.
    pub fn frame_at(&self, t: f64) -> F0Frame {
        if self.frames.is_empty() {
            return F0Frame::UNVOICED;
        }
        let i = (t / self.hop).round().max(0.0) as usize;
        self.frames[i.min(self.frames.len() - 1)]
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("time_s,f0_hz,voiced\n");
        for (i, f) in self.frames.iter().enumerate() {
            let _ = writeln!(s, "{:.6},{:.6},{}", i as f64 * self.hop, f.f0, u8::from(f.voiced));
        }
        s
    }
}

pub fn parse_track_csv(text: &str, origin: &str) -> Result<F0Track> {
    let err = |row: usize, msg: String| Error::Parse {
        path: origin.to_string(),
        row,
        msg,
    };
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, h)) if h.trim() == "time_s,f0_hz,voiced" => {}
        Some((n, h)) => return Err(err(n + 1, format!("expected header time_s,f0_hz,voiced, got {h:?}"))),
        None => return Err(err(1, "empty F0 track".into())),
    }
    let mut times = Vec::new();
    let mut frames = Vec::new();
    for (n, line) in lines {
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        if cols.len() != 3 {
            return Err(err(n + 1, format!("expected 3 columns, got {}", cols.len())));
        }
        let t: f64 = cols[0].parse().map_err(|_| err(n + 1, format!("bad time {:?}", cols[0])))?;
        let f0: f64 = cols[1].parse().map_err(|_| err(n + 1, format!("bad f0 {:?}", cols[1])))?;
        let voiced = match cols[2] {
            "1" | "true" => true,
            "0" | "false" => false,
            v => return Err(err(n + 1, format!("bad voicing flag {v:?}"))),
        };
        if voiced && !(f0 > 0.0 && f0.is_finite()) {
            return Err(err(n + 1, format!("voiced frame with f0 {f0}")));
        }
        times.push((n + 1, t));
        frames.push(F0Frame {
            f0: if voiced { f0 } else { 0.0 },
            voiced,
        });
    }
    let hop = match times.as_slice() {
        [] => return Err(err(2, "no frames".into())),
        [_] => PitchConfig::default().hop,
        [(_, a), (_, b), ..] => b - a,
    };
    if !(hop > 0.0) {
        return Err(err(times[1].0, "frame times must increase".into()));
    }
    for (i, &(row, t)) in times.iter().enumerate() {
        if (t - i as f64 * hop).abs() > 1e-4 {
            return Err(err(row, format!("time {t} breaks the uniform hop of {hop} s")));
        }
    }
    F0Track::new(hop, frames)
}

pub fn read_track_csv(path: impl AsRef<Path>) -> Result<F0Track> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_track_csv(&text, &path.display().to_string())
}

pub fn write_track_csv(track: &F0Track, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, track.to_csv()).map_err(|e| Error::io(path, e))
}

/// YIN pitch estimate per frame.
///
/// Each frame runs the difference function over `window - 1/f0_min`
/// samples, normalises it by its cumulative mean, takes the first dip below
/// the threshold, walks to that dip's minimum and refines the lag with a
/// parabola.
pub fn extract_f0(wf: &Waveform, cfg: &PitchConfig) -> Result<F0Track> {
    cfg.validate()?;
    if wf.rate < 8000 {
        return Err(Error::Pitch(format!("sample rate {} Hz is below 8 kHz", wf.rate)));
    }
    let rate = wf.rate as f64;
    let win = (cfg.window * rate).round() as usize;
    let x = &wf.samples;
    if x.len() < win {
        return Err(Error::Pitch(format!(
            "waveform has {} samples, shorter than one {win}-sample window",
            x.len()
        )));
    }
    let tau_max = ((rate / cfg.f0_min).ceil() as usize).min(win / 2);
    let tau_min = ((rate / cfg.f0_max).floor() as usize).max(2);
    let span = win - tau_max;
    let hop = cfg.hop * rate;
    let n_frames = ((x.len() - 1) as f64 / hop).floor() as usize + 1;

    let mut d = vec![0.0; tau_max + 2];
    let mut frames = Vec::with_capacity(n_frames);
    for i in 0..n_frames {
        let centre = (i as f64 * hop).round() as usize;
        let start = centre.saturating_sub(win / 2).min(x.len() - win);
        let seg = &x[start..start + win];
        let energy: f64 = seg[..span].iter().map(|v| v * v).sum();
        if energy <= 1e-10 * span as f64 {
            frames.push(F0Frame::UNVOICED);
            continue;
        }
        for (tau, dt) in d.iter_mut().enumerate().take(tau_max + 1).skip(1) {
            *dt = (0..span).map(|j| (seg[j] - seg[j + tau]).powi(2)).sum();
        }
        // cumulative mean normalised difference, in place
        let mut running = 0.0;
        d[0] = 1.0;
        for (tau, dt) in d.iter_mut().enumerate().take(tau_max + 1).skip(1) {
            running += *dt;
            *dt = if running > 0.0 { *dt * tau as f64 / running } else { 1.0 };
        }
        let mut found = None;
        let mut tau = tau_min;
        while tau <= tau_max {
            if d[tau] < cfg.yin_threshold {
                while tau < tau_max && d[tau + 1] < d[tau] {
                    tau += 1;
                }
                found = Some(tau);
                break;
            }
            tau += 1;
        }
        let frame = match found {
            None => F0Frame::UNVOICED,
            Some(t) => {
                let refined = if t > 1 && t < tau_max {
                    let (a, b, c) = (d[t - 1], d[t], d[t + 1]);
                    let denom = a - 2.0 * b + c;
                    if denom > 0.0 {
                        t as f64 + 0.5 * (a - c) / denom
                    } else {
                        t as f64
                    }
                } else {
                    t as f64
                };
                let f0 = rate / refined;
                if f0 >= cfg.f0_min && f0 <= cfg.f0_max {
                    F0Frame::voiced(f0)
                } else {
                    F0Frame::UNVOICED
                }
            }
        };
        frames.push(frame);
    }
    F0Track::new(cfg.hop, frames)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mu: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackStats {
    pub n_voiced: usize,
    /// `None` when no frame is voiced.
    pub moments: Option<Moments>,
}

/// Population mean and standard deviation over voiced frames.
pub fn track_stats(track: &F0Track) -> TrackStats {
    let v: Vec<f64> = track.voiced_f0().collect();
    if v.is_empty() {
        return TrackStats {
            n_voiced: 0,
            moments: None,
        };
    }
    let n = v.len() as f64;
    let mu = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|f| (f - mu).powi(2)).sum::<f64>() / n;
    TrackStats {
        n_voiced: v.len(),
        moments: Some(Moments { mu, sigma: var.sqrt() }),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct F0Targets {
    #[serde(rename = "mu_T")]
    pub mu_t: f64,
    #[serde(rename = "sigma_T")]
    pub sigma_t: f64,
    pub male: Moments,
    pub female: Moments,
    pub male_speakers: usize,
    pub female_speakers: usize,
}

impl F0Targets {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("targets serialize")
    }

    pub fn from_json(text: &str, origin: &str) -> Result<Self> {
        let t: F0Targets =
            serde_json::from_str(text).map_err(|e| Error::Pitch(format!("{origin}: bad targets JSON: {e}")))?;
        if !(t.mu_t.is_finite() && t.mu_t > 0.0 && t.sigma_t.is_finite() && t.sigma_t >= 0.0) {
            return Err(Error::Pitch(format!("{origin}: targets must have mu_T > 0 and sigma_T >= 0")));
        }
        Ok(t)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        F0Targets::from_json(&text, &path.display().to_string())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabelledTrack {
    pub spk_id: String,
    pub sex: Sex,
    pub track: F0Track,
}

/// Utterance moments are averaged per speaker, speakers per sex, and the
/// targets are the midpoints of the two sex-level values. Utterances with
/// no voiced frames are skipped.
pub fn compute_targets(tracks: &[LabelledTrack]) -> Result<F0Targets> {
    let mut per_speaker: BTreeMap<&str, (Sex, Vec<Moments>)> = BTreeMap::new();
    for t in tracks {
        let entry = per_speaker.entry(&t.spk_id).or_insert((t.sex, Vec::new()));
        if entry.0 != t.sex {
            return Err(Error::Pitch(format!("speaker {} labelled with both sexes", t.spk_id)));
        }
        if let Some(m) = track_stats(&t.track).moments {
            entry.1.push(m);
        }
    }
    let mut sums = [(0.0, 0.0, 0usize); 2];
    for (sex, utts) in per_speaker.values() {
        if utts.is_empty() {
            continue;
        }
        let n = utts.len() as f64;
        let s = &mut sums[sex.class()];
        s.0 += utts.iter().map(|m| m.mu).sum::<f64>() / n;
        s.1 += utts.iter().map(|m| m.sigma).sum::<f64>() / n;
        s.2 += 1;
    }
    let level = |sex: Sex| -> Result<Moments> {
        let (mu, sigma, n) = sums[sex.class()];
        if n == 0 {
            return Err(Error::Pitch(format!("no voiced data for sex {}", sex.label())));
        }
        Ok(Moments {
            mu: mu / n as f64,
            sigma: sigma / n as f64,
        })
    };
    let male = level(Sex::M)?;
    let female = level(Sex::F)?;
    Ok(F0Targets {
        mu_t: 0.5 * (male.mu + female.mu),
        sigma_t: 0.5 * (male.sigma + female.sigma),
        male,
        female,
        male_speakers: sums[Sex::M.class()].2,
        female_speakers: sums[Sex::F.class()].2,
    })
}

/// Below this source spread (Hz) the scale factor is treated as undefined
/// and only the mean is moved.
pub const DEGENERATE_SIGMA_HZ: f64 = 0.5;

pub const F0_FLOOR_HZ: f64 = 40.0;

#[derive(Debug, Clone, PartialEq)]
pub struct AffineResult {
    pub track: F0Track,
    pub source: Option<Moments>,
    pub clamped_frames: usize,
    /// Set when the track was returned unchanged.
    pub warning: Option<String>,
}

/// Moves voiced frames to the target mean and spread using the track's own
/// voiced moments.
pub fn affine_protect(track: &F0Track, targets: &F0Targets) -> AffineResult {
    match track_stats(track).moments {
        Some(m) => affine_protect_with(track, targets, m),
        None => AffineResult {
            track: track.clone(),
            source: None,
            clamped_frames: 0,
            warning: Some("no voiced frames; track left unchanged".into()),
        },
    }
}

/// As [`affine_protect`], with source moments supplied by the caller
/// (for example per-speaker statistics).
pub fn affine_protect_with(track: &F0Track, targets: &F0Targets, source: Moments) -> AffineResult {
    let scale = if source.sigma < DEGENERATE_SIGMA_HZ {
        1.0
    } else {
        targets.sigma_t / source.sigma
    };
    let mut clamped = 0;
    let frames = track
        .frames
        .iter()
        .map(|f| {
            if !f.voiced {
                return *f;
            }
            let mut v = targets.mu_t + (f.f0 - source.mu) * scale;
            if v < F0_FLOOR_HZ {
                v = F0_FLOOR_HZ;
                clamped += 1;
            }
            F0Frame::voiced(v)
        })
        .collect();
    AffineResult {
        track: F0Track {
            hop: track.hop,
            frames,
        },
        source: Some(source),
        clamped_frames: clamped,
        warning: None,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub spk_id: String,
    pub sex: Sex,
}

/// `path,spk_id,sex` rows; relative paths resolve against `base`.
pub fn parse_manifest(text: &str, origin: &str, base: &Path) -> Result<Vec<ManifestEntry>> {
    let err = |row: usize, msg: String| Error::Parse {
        path: origin.to_string(),
        row,
        msg,
    };
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, h)) if h.trim() == "path,spk_id,sex" => {}
        Some((n, h)) => return Err(err(n + 1, format!("expected header path,spk_id,sex, got {h:?}"))),
        None => return Err(err(1, "empty manifest".into())),
    }
    let mut out = Vec::new();
    for (n, line) in lines {
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        if cols.len() != 3 {
            return Err(err(n + 1, format!("expected 3 columns, got {}", cols.len())));
        }
        let sex = Sex::parse(cols[2]).ok_or_else(|| err(n + 1, format!("unknown sex label {:?}", cols[2])))?;
        let p = PathBuf::from(cols[0]);
        out.push(ManifestEntry {
            path: if p.is_absolute() { p } else { base.join(p) },
            spk_id: cols[1].to_string(),
            sex,
        });
    }
    if out.is_empty() {
        return Err(err(2, "manifest lists no files".into()));
    }
    Ok(out)
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestEntry>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_manifest(&text, &path.display().to_string(), base)
}

/// F0 track for a manifest entry: `.csv` files are read as tracks, anything
/// else as WAV audio run through [`extract_f0`].
pub fn load_track(path: &Path, cfg: &PitchConfig) -> Result<F0Track> {
    let is_csv = path
        .extension()
        .map(|e| e.eq_ignore_ascii_case("csv"))
        .unwrap_or(false);
    if is_csv {
        read_track_csv(path)
    } else {
        extract_f0(&read_wav(path)?, cfg)
    }
}
