//! WAV I/O, synthetic speech-like signals, noise, SNR-controlled mixing and a
//! toy reverberator.

use std::f64::consts::PI;
use std::path::Path;
use std::str::FromStr;

use num_complex::Complex64;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::metrics;
use crate::rng::{self, Rng};
use crate::spectral::{Waveform, SAMPLE_RATE};

const FS: f64 = SAMPLE_RATE as f64;
/// Peak level of generated clean signals.
const CLEAN_PEAK: f64 = 0.5;
/// Mixtures louder than this are scaled down together with their parts.
pub const MIX_PEAK: f64 = 0.99;
const TAIL_STD: f64 = 0.1;
const FFT_CONV_MIN_TAPS: usize = 512;

fn samples_for(duration_s: f64) -> usize {
    (duration_s * FS).round() as usize
}

// ---------------------------------------------------------------- WAV

/// Reads 16-bit PCM mono 16 kHz audio as samples in [-1, 1).
pub fn read_wav(path: &Path) -> Result<Waveform> {
    let wav_err = |source| Error::Wav {
        path: path.to_path_buf(),
        source,
    };
    let reader = hound::WavReader::open(path).map_err(wav_err)?;
    let spec = reader.spec();
    let fail = |reason: String| Error::WavFormat {
        path: path.to_path_buf(),
        reason,
    };
    if spec.channels != 1 {
        return Err(fail(format!("expected mono, found {} channels", spec.channels)));
    }
    if spec.sample_rate != SAMPLE_RATE {
        return Err(fail(format!("expected {SAMPLE_RATE} Hz, found {} Hz", spec.sample_rate)));
    }
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(fail(format!(
            "expected 16-bit integer PCM, found {}-bit {:?}",
            spec.bits_per_sample, spec.sample_format
        )));
    }
    let samples = reader
        .into_samples::<i16>()
        .map(|s| s.map(|v| f64::from(v) / 32768.0))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(wav_err)?;
    Waveform::new(samples)
}

/// Writes 16-bit PCM mono 16 kHz audio. Returns how many samples were
/// clipped to the representable range.
pub fn write_wav(path: &Path, w: &Waveform) -> Result<usize> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: SAMPLE_RATE,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let wav_err = |source| Error::Wav {
        path: path.to_path_buf(),
        source,
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(wav_err)?;
    let mut clipped = 0;
    for &x in w.samples() {
        let q = (x * 32768.0).round();
        let c = q.clamp(-32768.0, 32767.0);
        if c != q {
            clipped += 1;
        }
        writer.write_sample(c as i16).map_err(wav_err)?;
    }
    writer.finalize().map_err(wav_err)?;
    Ok(clipped)
}

// ---------------------------------------------------------------- clean signals

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CleanKind {
    Harmonic,
    Chirp,
    SpeechSurrogate,
}

impl FromStr for CleanKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "harmonic" => Ok(Self::Harmonic),
            "chirp" => Ok(Self::Chirp),
            "speech" | "speech-surrogate" => Ok(Self::SpeechSurrogate),
            other => Err(Error::InvalidParam(format!("unknown clean kind '{other}'"))),
        }
    }
}

impl CleanKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Harmonic => "harmonic",
            Self::Chirp => "chirp",
            Self::SpeechSurrogate => "speech-surrogate",
        }
    }
}

fn normalize_peak(mut v: Vec<f64>, peak: f64) -> Vec<f64> {
    let m = v.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    if m > 0.0 {
        let k = peak / m;
        v.iter_mut().for_each(|x| *x *= k);
    }
    v
}

/// Slow amplitude modulation in [0.4, 1].
fn am_envelope(n: usize, rng: &mut Rng) -> Vec<f64> {
    let rate = rng.random_range(1.5..4.0);
    let phase = rng.random_range(0.0..2.0 * PI);
    (0..n)
        .map(|i| 0.7 + 0.3 * (2.0 * PI * rate * i as f64 / FS + phase).sin())
        .collect()
}

/// Fixed-pitch harmonic tone; returns the samples and the fundamental.
fn harmonic(n: usize, rng: &mut Rng) -> (Vec<f64>, f64) {
    let f0 = rng.random_range(120.0..300.0);
    let count = rng.random_range(3..=8);
    let parts: Vec<(f64, f64)> = (1..=count)
        .map(|k| (rng.random_range(0.4..1.0) / k as f64, rng.random_range(0.0..2.0 * PI)))
        .collect();
    let env = am_envelope(n, rng);
    let v = (0..n)
        .map(|i| {
            let t = i as f64 / FS;
            let s: f64 = parts
                .iter()
                .enumerate()
                .map(|(k, (a, ph))| a * (2.0 * PI * f0 * (k + 1) as f64 * t + ph).sin())
                .sum();
            s * env[i]
        })
        .collect();
    (v, f0)
}

fn chirp(n: usize, rng: &mut Rng) -> Vec<f64> {
    let f_start = rng.random_range(150.0..400.0);
    let f_end = rng.random_range(1500.0..3000.0);
    let dur = n as f64 / FS;
    let env = am_envelope(n, rng);
    (0..n)
        .map(|i| {
            let t = i as f64 / FS;
            let phase = 2.0 * PI * (f_start * t + 0.5 * (f_end - f_start) / dur * t * t);
            (phase.sin() + 0.3 * (2.0 * phase).sin()) * env[i]
        })
        .collect()
}

const VOWELS: [[f64; 3]; 5] = [
    [730.0, 1090.0, 2440.0],
    [270.0, 2290.0, 3010.0],
    [300.0, 870.0, 2240.0],
    [530.0, 1840.0, 2480.0],
    [660.0, 1720.0, 2410.0],
];
const FORMANT_BW: [f64; 3] = [80.0, 100.0, 120.0];
const FORMANT_GAIN: [f64; 3] = [1.0, 0.5, 0.25];

/// Gliding-pitch glottal-like source through three moving resonators, gated
/// into syllables.
fn speech_surrogate(n: usize, rng: &mut Rng) -> Vec<f64> {
    let f0 = rng.random_range(90.0..220.0);
    let glide_rate = rng.random_range(0.3..0.8);
    let glide_phase = rng.random_range(0.0..2.0 * PI);

    // syllable plan: (end sample, voiced, vowel)
    let mut plan = Vec::new();
    let mut pos = 0;
    while pos < n {
        let len = samples_for(rng.random_range(0.15..0.35));
        pos = (pos + len).min(n);
        plan.push((pos, rng.random_bool(0.8), rng.random_range(0..VOWELS.len())));
    }

    let mut out = Vec::with_capacity(n);
    let mut phase = 0.0f64;
    let mut formants = VOWELS[plan[0].2];
    let mut state = [[0.0f64; 2]; 3];
    let mut seg = 0;
    let mut seg_start = 0;
    for i in 0..n {
        while i >= plan[seg].0 {
            seg_start = plan[seg].0;
            seg += 1;
        }
        let (seg_end, voiced, vowel) = plan[seg];
        let f0_now = f0 * (1.0 + 0.08 * (2.0 * PI * glide_rate * i as f64 / FS + glide_phase).sin());
        phase = (phase + 2.0 * PI * f0_now / FS) % (2.0 * PI);
        let harmonics = (4000.0 / f0_now) as usize;
        let src: f64 = (1..=harmonics).map(|k| (k as f64 * phase).sin() / k as f64).sum();
        for (f, target) in formants.iter_mut().zip(VOWELS[vowel]) {
            *f += 0.002 * (target - *f);
        }
        let mut y = 0.0;
        for j in 0..3 {
            let r = (-PI * FORMANT_BW[j] / FS).exp();
            let theta = 2.0 * PI * formants[j] / FS;
            let v = (1.0 - r) * src + 2.0 * r * theta.cos() * state[j][0] - r * r * state[j][1];
            state[j] = [v, state[j][0]];
            y += FORMANT_GAIN[j] * v;
        }
        let frac = (i - seg_start) as f64 / (seg_end - seg_start).max(1) as f64;
        let gate = if voiced { (PI * frac).sin().powi(2) } else { 0.02 };
        out.push(y * gate);
    }
    out
}

/// Deterministic clean test signal, peak-normalised to 0.5.
pub fn synth_clean(kind: CleanKind, duration_s: f64, seed: u64) -> Result<Waveform> {
    if !(duration_s >= 0.5) {
        return Err(Error::InvalidParam(format!("clean signals need at least 0.5 s, got {duration_s}")));
    }
    let n = samples_for(duration_s);
    let mut rng = rng::substream(seed, "clean");
    let v = match kind {
        CleanKind::Harmonic => harmonic(n, &mut rng).0,
        CleanKind::Chirp => chirp(n, &mut rng),
        CleanKind::SpeechSurrogate => speech_surrogate(n, &mut rng),
    };
    Waveform::new(normalize_peak(v, CLEAN_PEAK))
}

// ---------------------------------------------------------------- noise

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseKind {
    White,
    Pink,
    Babble,
}

impl FromStr for NoiseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "white" => Ok(Self::White),
            "pink" => Ok(Self::Pink),
            "babble" | "babble-surrogate" => Ok(Self::Babble),
            other => Err(Error::InvalidParam(format!("unknown noise kind '{other}'"))),
        }
    }
}

impl NoiseKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::White => "white",
            Self::Pink => "pink",
            Self::Babble => "babble",
        }
    }
}

fn unit_rms(mut v: Vec<f64>) -> Vec<f64> {
    let rms = (v.iter().map(|x| x * x).sum::<f64>() / v.len().max(1) as f64).sqrt();
    if rms > 0.0 {
        v.iter_mut().for_each(|x| *x /= rms);
    }
    v
}

fn white(n: usize, rng: &mut Rng) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

/// Paul Kellet's refined pink filter applied to white noise.
fn pink(n: usize, rng: &mut Rng) -> Vec<f64> {
    let mut b = [0.0f64; 7];
    (0..n)
        .map(|_| {
            let w: f64 = StandardNormal.sample(rng);
            b[0] = 0.99886 * b[0] + w * 0.0555179;
            b[1] = 0.99332 * b[1] + w * 0.0750759;
            b[2] = 0.96900 * b[2] + w * 0.1538520;
            b[3] = 0.86650 * b[3] + w * 0.3104856;
            b[4] = 0.55000 * b[4] + w * 0.5329522;
            b[5] = -0.7616 * b[5] - w * 0.0168980;
            let out = b.iter().sum::<f64>() + w * 0.5362;
            b[6] = w * 0.115926;
            out
        })
        .collect()
}

/// Unit-RMS noise of the given kind.
pub fn synth_noise(kind: NoiseKind, n: usize, seed: u64) -> Result<Waveform> {
    let mut rng = rng::substream(seed, "noise");
    let v = match kind {
        NoiseKind::White => white(n, &mut rng),
        NoiseKind::Pink => pink(n, &mut rng),
        NoiseKind::Babble => {
            let mut acc = vec![0.0; n];
            for _ in 0..6 {
                let talker = unit_rms(speech_surrogate(n, &mut rng));
                acc.iter_mut().zip(talker).for_each(|(a, t)| *a += t);
            }
            acc
        }
    };
    Waveform::new(unit_rms(v))
}

// ---------------------------------------------------------------- mixing

#[derive(Debug, Clone, PartialEq)]
pub struct Mixture {
    pub clean: Waveform,
    pub noise: Waveform,
    pub mixture: Waveform,
    /// Common gain applied to all three to keep the mixture peak at or below
    /// [`MIX_PEAK`]; 1 when no normalisation was needed.
    pub gain: f64,
}

/// Scales `noise` so that `snr_db(clean, noise)` equals `snr_db`, then adds.
pub fn mix_at_snr(clean: &Waveform, noise: &Waveform, snr_db: f64) -> Result<Mixture> {
    if clean.len() != noise.len() {
        return Err(Error::LengthMismatch {
            left: clean.len(),
            right: noise.len(),
        });
    }
    if !snr_db.is_finite() {
        return Err(Error::InvalidParam(format!("target SNR must be finite, got {snr_db}")));
    }
    let (pc, pn) = (clean.energy(), noise.energy());
    if pc == 0.0 {
        return Err(Error::ZeroSignal("clean"));
    }
    if pn == 0.0 {
        return Err(Error::ZeroSignal("noise"));
    }
    let k = (pc / (pn * 10f64.powf(snr_db / 10.0))).sqrt();
    let scaled = noise.scale(k);
    let mix: Vec<f64> = clean.samples().iter().zip(scaled.samples()).map(|(c, n)| c + n).collect();
    let mixture = Waveform::new(mix)?;
    let peak = mixture.peak();
    let gain = if peak > MIX_PEAK { MIX_PEAK / peak } else { 1.0 };
    Ok(Mixture {
        clean: clean.scale(gain),
        noise: scaled.scale(gain),
        mixture: mixture.scale(gain),
        gain,
    })
}

// ---------------------------------------------------------------- reverb

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReverbSpec {
    pub t60_s: f64,
    pub seed: u64,
}

impl ReverbSpec {
    pub fn new(t60_s: f64, seed: u64) -> Result<Self> {
        if !(0.1..=2.0).contains(&t60_s) {
            return Err(Error::InvalidParam(format!("T60 must lie in [0.1, 2] s, got {t60_s}")));
        }
        Ok(Self { t60_s, seed })
    }
}

/// Unit direct path followed by exponentially decaying Gaussian noise that
/// falls by 60 dB at `t60_s`. Length is `ceil(1.5 t60 fs)` taps.
pub fn synth_rir(t60_s: f64, rng: &mut Rng) -> Result<Vec<f64>> {
    if !(t60_s > 0.0 && t60_s.is_finite()) {
        return Err(Error::InvalidParam(format!("T60 must be positive, got {t60_s}")));
    }
    let len = ((1.5 * t60_s * FS).ceil() as usize).max(1);
    let rate = 6.91 / (t60_s * FS);
    let mut h = Vec::with_capacity(len);
    h.push(1.0);
    for i in 1..len {
        let z: f64 = StandardNormal.sample(rng);
        h.push(TAIL_STD * z * (-rate * i as f64).exp());
    }
    Ok(h)
}

/// Causal convolution truncated to the length of `x`.
pub fn convolve(x: &[f64], h: &[f64]) -> Vec<f64> {
    if h.len() >= FFT_CONV_MIN_TAPS {
        overlap_save(x, h)
    } else {
        convolve_direct(x, h)
    }
}

pub fn convolve_direct(x: &[f64], h: &[f64]) -> Vec<f64> {
    (0..x.len())
        .map(|n| {
            let taps = h.len().min(n + 1);
            (0..taps).map(|k| h[k] * x[n - k]).sum()
        })
        .collect()
}

fn overlap_save(x: &[f64], h: &[f64]) -> Vec<f64> {
    let m = h.len();
    let size = (2 * m).next_power_of_two();
    let block = size - m + 1;
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(size);
    let inv = planner.plan_fft_inverse(size);
    let mut hf: Vec<Complex64> = h.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    hf.resize(size, Complex64::new(0.0, 0.0));
    fwd.process(&mut hf);
    let norm = 1.0 / size as f64;
    let mut out = Vec::with_capacity(x.len());
    let mut buf = vec![Complex64::new(0.0, 0.0); size];
    let mut start = 0;
    while start < x.len() {
        for (j, b) in buf.iter_mut().enumerate() {
            let idx = start as isize - (m as isize - 1) + j as isize;
            let v = if idx >= 0 && (idx as usize) < x.len() { x[idx as usize] } else { 0.0 };
            *b = Complex64::new(v, 0.0);
        }
        fwd.process(&mut buf);
        buf.iter_mut().zip(&hf).for_each(|(b, hv)| *b *= hv);
        inv.process(&mut buf);
        let take = block.min(x.len() - start);
        out.extend(buf[m - 1..m - 1 + take].iter().map(|c| c.re * norm));
        start += take;
    }
    out
}

pub fn synth_reverb(clean: &Waveform, spec: &ReverbSpec) -> Result<Waveform> {
    let spec = ReverbSpec::new(spec.t60_s, spec.seed)?;
    let mut rng = rng::substream(spec.seed, "reverb");
    let h = synth_rir(spec.t60_s, &mut rng)?;
    Waveform::new(convolve(clean.samples(), &h))
}

/// Schroeder backward-integrated energy decay of `h` in dB, relative to the
/// total energy.
pub fn energy_decay_db(h: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    let mut edc: Vec<f64> = h
        .iter()
        .rev()
        .map(|v| {
            acc += v * v;
            acc
        })
        .collect();
    edc.reverse();
    let total = edc.first().copied().unwrap_or(0.0);
    edc.iter().map(|e| 10.0 * (e / total).log10()).collect()
}

// ---------------------------------------------------------------- datasets

/// One line of a dataset manifest: `seed,clean/noise,snr_db,duration_s,t60_s`.
///
/// `snr_db = inf` leaves the pair noise-free; `t60_s = 0` disables reverb.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ManifestEntry {
    pub seed: u64,
    pub clean: CleanKind,
    pub noise: NoiseKind,
    pub snr_db: f64,
    pub duration_s: f64,
    pub t60_s: f64,
}

impl ManifestEntry {
    pub fn validate(&self) -> Result<()> {
        if !(self.duration_s >= 0.5 && self.duration_s.is_finite()) {
            return Err(Error::InvalidParam(format!("duration {} s below 0.5 s", self.duration_s)));
        }
        if self.snr_db.is_nan() || self.snr_db == f64::NEG_INFINITY {
            return Err(Error::InvalidParam(format!("invalid SNR {}", self.snr_db)));
        }
        if self.t60_s != 0.0 {
            ReverbSpec::new(self.t60_s, self.seed)?;
        }
        Ok(())
    }

    pub fn render(&self) -> String {
        format!(
            "{},{}/{},{},{},{}",
            self.seed,
            self.clean.as_str(),
            self.noise.as_str(),
            self.snr_db,
            self.duration_s,
            self.t60_s
        )
    }
}

impl FromStr for ManifestEntry {
    type Err = Error;

    fn from_str(line: &str) -> Result<Self> {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let [seed, kind, snr, dur, t60] = fields[..] else {
            return Err(Error::InvalidParam(format!("expected 5 comma-separated fields, found {}", fields.len())));
        };
        let num = |name: &str, v: &str| {
            v.parse::<f64>()
                .map_err(|_| Error::InvalidParam(format!("{name} '{v}' is not a number")))
        };
        let (clean, noise) = kind
            .split_once('/')
            .ok_or_else(|| Error::InvalidParam(format!("kind '{kind}' must look like clean/noise")))?;
        let entry = Self {
            seed: seed
                .parse()
                .map_err(|_| Error::InvalidParam(format!("seed '{seed}' is not an unsigned integer")))?,
            clean: clean.parse()?,
            noise: noise.parse()?,
            snr_db: num("snr_db", snr)?,
            duration_s: num("duration_s", dur)?,
            t60_s: num("t60_s", t60)?,
        };
        entry.validate()?;
        Ok(entry)
    }
}

/// Parses manifest text; blank lines and `#` comments are skipped.
pub fn parse_manifest(text: &str) -> Result<Vec<ManifestEntry>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| {
            let l = l.trim();
            !l.is_empty() && !l.starts_with('#')
        })
        .map(|(i, l)| {
            l.parse().map_err(|e: Error| Error::Manifest {
                line: i + 1,
                reason: match e {
                    Error::InvalidParam(m) => m,
                    other => other.to_string(),
                },
            })
        })
        .collect()
}

/// `count` entries with per-item seeds drawn from `seed` and SNRs uniform on
/// `snr_range`.
pub fn random_manifest(
    count: usize,
    seed: u64,
    clean: CleanKind,
    noise: &[NoiseKind],
    snr_range: (f64, f64),
    duration_s: f64,
) -> Vec<ManifestEntry> {
    let mut rng = rng::substream(seed, "manifest");
    (0..count)
        .map(|i| ManifestEntry {
            seed: rng.random(),
            clean,
            noise: noise[i % noise.len()],
            snr_db: if snr_range.0 == snr_range.1 {
                snr_range.0
            } else {
                rng.random_range(snr_range.0..snr_range.1)
            },
            duration_s,
            t60_s: 0.0,
        })
        .collect()
}

/// A reproducible (clean, corrupted) pair plus the additive corruption.
#[derive(Debug, Clone, PartialEq)]
pub struct Pair {
    pub clean: Waveform,
    pub noisy: Waveform,
    /// `noisy - clean`
    pub noise: Waveform,
}

pub fn generate_pair(entry: &ManifestEntry) -> Result<Pair> {
    entry.validate()?;
    let dry = synth_clean(entry.clean, entry.duration_s, entry.seed)?;
    let wet = if entry.t60_s > 0.0 {
        synth_reverb(&dry, &ReverbSpec::new(entry.t60_s, entry.seed)?)?
    } else {
        dry.clone()
    };
    let (clean, noisy) = if entry.snr_db.is_finite() {
        let noise = synth_noise(entry.noise, dry.len(), entry.seed)?;
        let mix = mix_at_snr(&wet, &noise, entry.snr_db)?;
        (dry.scale(mix.gain), mix.mixture)
    } else {
        (dry, wet)
    };
    let residual: Vec<f64> = noisy.samples().iter().zip(clean.samples()).map(|(a, b)| a - b).collect();
    Ok(Pair {
        noise: Waveform::new(residual)?,
        clean,
        noisy,
    })
}

/// Input SNR of a pair, `None` when the corruption is zero.
pub fn pair_snr(pair: &Pair) -> Option<f64> {
    metrics::snr_db(&pair.clean, &pair.noise).ok()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generators_are_deterministic_and_bounded() {
        for kind in [CleanKind::Harmonic, CleanKind::Chirp, CleanKind::SpeechSurrogate] {
            let a = synth_clean(kind, 0.75, 3).unwrap();
            let b = synth_clean(kind, 0.75, 3).unwrap();
            assert_eq!(a, b);
            assert_eq!(a.len(), 12_000);
            assert!(a.peak() <= 0.99);
            assert_ne!(a, synth_clean(kind, 0.75, 4).unwrap());
        }
        assert!(synth_clean(CleanKind::Chirp, 0.2, 1).is_err());
    }

    #[test]
    fn harmonic_peaks_sit_on_multiples_of_f0() {
        let n = 16_000;
        let (v, f0) = harmonic(n, &mut rng::substream(9, "clean"));
        let mut buf: Vec<Complex64> = v.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        FftPlanner::new().plan_fft_forward(n).process(&mut buf);
        // 1 Hz bins; look for the local maximum within +-20 Hz of each harmonic
        for k in 1..=3 {
            let target = (k as f64 * f0).round() as usize;
            let best = (target - 20..=target + 20).max_by(|&a, &b| buf[a].norm().total_cmp(&buf[b].norm())).unwrap();
            assert!((best as f64 - k as f64 * f0).abs() <= 1.0, "harmonic {k}: {best} vs {}", k as f64 * f0);
        }
    }

    #[test]
    fn noise_is_unit_rms_and_seeded() {
        for kind in [NoiseKind::White, NoiseKind::Pink, NoiseKind::Babble] {
            let a = synth_noise(kind, 8000, 5).unwrap();
            assert!((a.energy() / 8000.0 - 1.0).abs() < 1e-12);
            assert_eq!(a, synth_noise(kind, 8000, 5).unwrap());
        }
    }

    #[test]
    fn mixing_hits_the_target_snr() {
        let clean = synth_clean(CleanKind::Harmonic, 1.0, 1).unwrap();
        let noise = synth_noise(NoiseKind::Pink, clean.len(), 2).unwrap();
        for snr in [-5.0, 0.0, 5.0, 20.0] {
            let m = mix_at_snr(&clean, &noise, snr).unwrap();
            let got = metrics::snr_db(&m.clean, &m.noise).unwrap();
            assert!((got - snr).abs() < 1e-9, "{got} vs {snr}");
            assert!(m.mixture.peak() <= MIX_PEAK + 1e-12);
        }
        let m = mix_at_snr(&clean, &noise, -5.0).unwrap();
        assert!(m.gain < 1.0);
        assert!(mix_at_snr(&clean, &Waveform::silence(clean.len()), 0.0).is_err());
        assert!(mix_at_snr(&Waveform::silence(clean.len()), &noise, 0.0).is_err());
    }

    #[test]
    fn fft_convolution_matches_direct() {
        let mut rng = rng::from_seed(3);
        let x: Vec<f64> = (0..3000).map(|_| rng.random_range(-1.0..1.0)).collect();
        let h = synth_rir(0.1, &mut rng).unwrap();
        assert!(h.len() >= FFT_CONV_MIN_TAPS);
        let fast = overlap_save(&x, &h);
        let slow = convolve_direct(&x, &h);
        assert_eq!(fast.len(), x.len());
        let err = fast.iter().zip(&slow).fold(0.0f64, |a, (f, s)| a.max((f - s).abs()));
        assert!(err < 1e-12, "{err}");
    }

    #[test]
    fn vanishing_t60_is_nearly_identity() {
        let x = synth_clean(CleanKind::Chirp, 0.5, 1).unwrap();
        let h = synth_rir(5e-5, &mut rng::from_seed(1)).unwrap();
        let y = convolve(x.samples(), &h);
        let err: f64 = y.iter().zip(x.samples()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        assert!(err <= 1e-3 * x.energy().sqrt());
    }

    #[test]
    fn decay_crosses_minus_sixty_near_t60() {
        for t60 in [0.3, 0.6, 1.2] {
            let h = synth_rir(t60, &mut rng::from_seed(17)).unwrap();
            let edc = energy_decay_db(&h[1..]);
            let cross = edc.iter().position(|&d| d <= -60.0).unwrap() as f64 / FS;
            assert!((cross - t60).abs() <= 0.05 * t60, "t60 {t60}: crossed at {cross}");
        }
    }

    #[test]
    fn reverb_is_seeded_and_length_preserving() {
        let x = synth_clean(CleanKind::Harmonic, 0.5, 2).unwrap();
        let spec = ReverbSpec::new(0.4, 8).unwrap();
        let a = synth_reverb(&x, &spec).unwrap();
        assert_eq!(a, synth_reverb(&x, &spec).unwrap());
        assert_eq!(a.len(), x.len());
        assert!(ReverbSpec::new(3.0, 0).is_err());
    }

    #[test]
    fn manifest_round_trip_and_errors() {
        let text = "# demo\n7,harmonic/white,5,1,0\n\n8,speech-surrogate/babble,inf,0.5,0.4\n";
        let entries = parse_manifest(text).unwrap();
        assert_eq!(entries.len(), 2);
        assert_eq!(entries[1].snr_db, f64::INFINITY);
        let again = parse_manifest(&entries.iter().map(|e| e.render()).collect::<Vec<_>>().join("\n")).unwrap();
        assert_eq!(again, entries);
        for (bad, line) in [("1,harmonic/white,5,1", 1), ("x\n1,harmonic,5,1,0", 1), ("1,harmonic/white,5,1,0\n1,harmonic/red,5,1,0", 2)] {
            match parse_manifest(bad) {
                Err(Error::Manifest { line: l, .. }) => assert_eq!(l, line, "{bad}"),
                other => panic!("{bad}: {other:?}"),
            }
        }
    }

    #[test]
    fn pairs_regenerate_bit_exactly() {
        let e: ManifestEntry = "11,harmonic/pink,5,0.5,0".parse().unwrap();
        let a = generate_pair(&e).unwrap();
        assert_eq!(a, generate_pair(&e).unwrap());
        assert!((pair_snr(&a).unwrap() - 5.0).abs() < 1e-9);
        let clean_only: ManifestEntry = "11,harmonic/pink,inf,0.5,0".parse().unwrap();
        let b = generate_pair(&clean_only).unwrap();
        assert_eq!(b.clean, b.noisy);
        assert!(pair_snr(&b).is_none());
    }

    #[test]
    fn wav_round_trip_and_format_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.wav");
        let x = synth_clean(CleanKind::SpeechSurrogate, 0.5, 4).unwrap();
        assert_eq!(write_wav(&path, &x).unwrap(), 0);
        let back = read_wav(&path).unwrap();
        let err = back.samples().iter().zip(x.samples()).fold(0.0f64, |a, (u, v)| a.max((u - v).abs()));
        assert!(err <= 1.0 / 32768.0);

        let loud = Waveform::new(vec![1.5, -2.0, 0.1]).unwrap();
        assert_eq!(write_wav(&path, &loud).unwrap(), 2);

        for (channels, rate, needle) in [(2u16, 16_000u32, "2 channels"), (1, 44_100, "44100 Hz")] {
            let spec = hound::WavSpec {
                channels,
                sample_rate: rate,
                bits_per_sample: 16,
                sample_format: hound::SampleFormat::Int,
            };
            let p = dir.path().join("bad.wav");
            let mut w = hound::WavWriter::create(&p, spec).unwrap();
            for _ in 0..channels * 10 {
                w.write_sample(0i16).unwrap();
            }
            w.finalize().unwrap();
            let msg = read_wav(&p).unwrap_err().to_string();
            assert!(msg.contains(needle), "{msg}");
        }
    }
}
