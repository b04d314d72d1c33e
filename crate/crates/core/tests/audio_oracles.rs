mod common;

use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use zevox::embeddings::Sex;
use zevox::pitch::{
    affine_protect, compute_targets, extract_f0, track_stats, F0Frame, F0Targets, F0Track, LabelledTrack, Moments,
    PitchConfig,
};
use zevox::psola::{place_marks, protect_audio, psola_resynth, Waveform};

fn cfg() -> PitchConfig {
    PitchConfig::default()
}

fn constant_track(f0s: &[f64]) -> F0Track {
    F0Track::new(0.01, f0s.iter().map(|&f| F0Frame::voiced(f)).collect()).unwrap()
}

fn utt(spk: &str, sex: Sex, f0s: &[f64]) -> LabelledTrack {
    LabelledTrack {
        spk_id: spk.into(),
        sex,
        track: constant_track(f0s),
    }
}

fn toy_manifest() -> Vec<LabelledTrack> {
    vec![
        utt("M1", Sex::M, &[100.0]),
        utt("M1", Sex::M, &[120.0]),
        utt("M2", Sex::M, &[130.0]),
        utt("F1", Sex::F, &[200.0]),
        utt("F2", Sex::F, &[220.0]),
        utt("F2", Sex::F, &[240.0]),
    ]
}

#[test]
fn yin_tracks_a_200_hz_sine() {
    let t = extract_f0(&sine(200.0, 1.0), &cfg()).unwrap();
    let v: Vec<f64> = t.voiced_f0().collect();
    assert!(v.len() as f64 >= 0.9 * t.frames.len() as f64);
    assert!((median(v) - 200.0).abs() / 200.0 < 0.02);
}

#[test]
fn yin_rejects_noise_and_silence() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let noise = Waveform::new((0..16000).map(|_| rng.gen_range(-0.5..0.5)).collect(), RATE).unwrap();
    let t = extract_f0(&noise, &cfg()).unwrap();
    let unvoiced = t.frames.iter().filter(|f| !f.voiced).count();
    assert!(unvoiced as f64 >= 0.8 * t.frames.len() as f64);
    let silent = extract_f0(&Waveform::new(vec![0.0; 8000], RATE).unwrap(), &cfg()).unwrap();
    assert!(silent.frames.iter().all(|f| !f.voiced));
}

#[test]
fn yin_rejects_short_or_low_rate_audio() {
    assert!(extract_f0(&sine(200.0, 0.02), &cfg()).is_err());
    let low = Waveform::new(vec![0.1; 4000], 4000).unwrap();
    assert!(extract_f0(&low, &cfg()).is_err());
}

#[test]
fn voiced_frames_stay_in_range() {
    let c = cfg();
    for wf in [sine(90.0, 0.5), sawtooth(330.0, 0.5)] {
        let t = extract_f0(&wf, &c).unwrap();
        assert!(t.voiced_f0().all(|f| f >= c.f0_min && f <= c.f0_max));
    }
}

#[test]
fn targets_follow_the_speaker_then_sex_recipe() {
    let t = compute_targets(&toy_manifest()).unwrap();
    assert_eq!(t.male.mu, 120.0);
    assert_eq!(t.female.mu, 215.0);
    assert_eq!(t.mu_t, 167.5);
    assert!(t.mu_t > t.male.mu && t.mu_t < t.female.mu);
}

#[test]
fn duplicated_utterances_do_not_move_targets() {
    let mut tracks = toy_manifest();
    let base = compute_targets(&tracks).unwrap();
    tracks.push(utt("M2", Sex::M, &[130.0]));
    tracks.push(utt("M2", Sex::M, &[130.0]));
    assert_eq!(compute_targets(&tracks).unwrap(), base);
}

#[test]
fn adding_a_male_leaves_female_level_alone() {
    let mut tracks = toy_manifest();
    let before = compute_targets(&tracks).unwrap();
    tracks.push(utt("M3", Sex::M, &[90.0, 95.0]));
    let after = compute_targets(&tracks).unwrap();
    assert_eq!(after.female, before.female);
    assert_ne!(after.male, before.male);
}

#[test]
fn identical_sexes_give_their_common_mean() {
    let t = compute_targets(&[utt("a", Sex::M, &[150.0, 160.0]), utt("b", Sex::F, &[150.0, 160.0])]).unwrap();
    assert_eq!(t.mu_t, 155.0);
}

#[test]
fn missing_sex_is_an_error() {
    let only_m = vec![utt("M1", Sex::M, &[100.0])];
    assert!(compute_targets(&only_m).is_err());
    let unvoiced_f = vec![
        utt("M1", Sex::M, &[100.0]),
        LabelledTrack {
            spk_id: "F1".into(),
            sex: Sex::F,
            track: F0Track::new(0.01, vec![F0Frame::UNVOICED; 3]).unwrap(),
        },
    ];
    assert!(compute_targets(&unvoiced_f).is_err());
}

fn targets(mu: f64, sigma: f64) -> F0Targets {
    let m = Moments { mu, sigma };
    F0Targets {
        mu_t: mu,
        sigma_t: sigma,
        male: m,
        female: m,
        male_speakers: 1,
        female_speakers: 1,
    }
}

#[test]
fn affine_output_has_target_moments() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..50 {
        let frames: Vec<F0Frame> = (0..200)
            .map(|_| {
                if rng.gen_bool(0.3) {
                    F0Frame::UNVOICED
                } else {
                    F0Frame::voiced(rng.gen_range(80.0..300.0))
                }
            })
            .collect();
        let track = F0Track::new(0.01, frames).unwrap();
        let tg = targets(rng.gen_range(120.0..200.0), rng.gen_range(5.0..30.0));
        let out = affine_protect(&track, &tg);
        assert_eq!(out.clamped_frames, 0);
        let m = track_stats(&out.track).moments.unwrap();
        assert!((m.mu - tg.mu_t).abs() <= 1e-9 * tg.mu_t);
        assert!((m.sigma - tg.sigma_t).abs() <= 1e-9 * tg.sigma_t);
        for (a, b) in track.frames.iter().zip(&out.track.frames) {
            assert_eq!(a.voiced, b.voiced);
            if !a.voiced {
                assert_eq!(a, b);
            }
        }
        // order preserving
        let src: Vec<f64> = track.voiced_f0().collect();
        let dst: Vec<f64> = out.track.voiced_f0().collect();
        for i in 1..src.len() {
            assert_eq!(src[i] > src[i - 1], dst[i] > dst[i - 1]);
        }
    }
}

#[test]
fn track_already_at_target_is_unchanged() {
    let t = constant_track(&[140.0, 150.0, 160.0, 150.0]);
    let m = track_stats(&t).moments.unwrap();
    let out = affine_protect(&t, &targets(m.mu, m.sigma));
    for (a, b) in t.frames.iter().zip(&out.track.frames) {
        assert!((a.f0 - b.f0).abs() <= 1e-9 * a.f0);
    }
}

#[test]
fn marks_follow_a_100_hz_sawtooth() {
    let wf = sawtooth(100.0, 0.5);
    let track = extract_f0(&wf, &cfg()).unwrap();
    let marks = place_marks(&wf, &track);
    let pos = &marks.positions;
    assert!(pos.windows(2).all(|w| w[0] < w[1]));
    let gaps: Vec<f64> = pos.windows(2).map(|w| (w[1] - w[0]) as f64).collect();
    let mean = gaps.iter().sum::<f64>() / gaps.len() as f64;
    assert!((mean - 160.0).abs() <= 8.0, "mean spacing {mean}");
    assert!(gaps.iter().all(|g| (g - 160.0).abs() <= 0.25 * 160.0));
}

fn shifted(wf: &Waveform, ratio: f64) -> (Waveform, F0Track) {
    let src = extract_f0(wf, &cfg()).unwrap();
    let tgt = F0Track::new(
        src.hop,
        src.frames
            .iter()
            .map(|f| if f.voiced { F0Frame::voiced(f.f0 * ratio) } else { *f })
            .collect(),
    )
    .unwrap();
    let marks = place_marks(wf, &src);
    (psola_resynth(wf, &marks, &src, &tgt).unwrap(), src)
}

#[test]
fn psola_hits_commanded_contours() {
    type Case = (fn(f64, f64) -> Waveform, f64, f64);
    let cases: [Case; 4] =
        [(sawtooth, 150.0, 1.5), (sine, 200.0, 0.5), (sine, 120.0, 1.25), (sawtooth, 240.0, 0.75)];
    for (make, f, k) in cases {
        let wf = make(f, 1.0);
        let (out, _) = shifted(&wf, k);
        assert_eq!(out.samples.len(), wf.samples.len());
        let got = median(extract_f0(&out, &cfg()).unwrap().voiced_f0().collect());
        assert!((got - f * k).abs() / (f * k) < 0.03, "{f} x {k}: measured {got}");
        let db = 20.0 * (out.rms() / wf.rms()).log10();
        assert!(db.abs() <= 3.0, "{f} x {k}: level change {db} dB");
    }
}

#[test]
fn identity_contour_preserves_the_signal() {
    for wf in [sine(150.0, 0.5), sawtooth(110.0, 0.5)] {
        let (out, src) = shifted(&wf, 1.0);
        let a = median(src.voiced_f0().collect());
        let b = median(extract_f0(&out, &cfg()).unwrap().voiced_f0().collect());
        assert!((a - b).abs() / a < 0.02);
        let period = (RATE as f64 / a).ceil() as usize;
        let n = wf.samples.len() - period;
        let best = (0..=period)
            .map(|lag| pearson(&wf.samples[..n], &out.samples[lag..lag + n]))
            .chain((0..=period).map(|lag| pearson(&wf.samples[lag..lag + n], &out.samples[..n])))
            .fold(f64::MIN, f64::max);
        assert!(best >= 0.9, "correlation {best}");
    }
}

#[test]
fn steady_tone_is_moved_to_the_target_mean() {
    let targets = compute_targets(&toy_manifest()).unwrap();
    let (out, report) = protect_audio(&sine(120.0, 1.0), &targets, &cfg()).unwrap();
    assert_eq!(out.samples.len(), 16000);
    let got = median(extract_f0(&out, &cfg()).unwrap().voiced_f0().collect());
    assert!((got - 167.5).abs() / 167.5 < 0.03, "measured {got}");
    assert!((report.out_mu.unwrap() - 167.5).abs() / 167.5 < 0.03);
    assert_eq!(report.mu_t, targets.mu_t);
    assert_eq!(report.sigma_t, targets.sigma_t);
    assert!((report.source_mu.unwrap() - 120.0).abs() < 1.0);
}
