//! Constant-Q magnitude transform.
//!
//! Each bin is a Hann-windowed complex projection of the signal onto the
//! bin's center frequency, evaluated directly in the time domain. Window
//! lengths shrink with frequency so every bin has the same quality factor.

use std::f64::consts::PI;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::AudioBuffer;

const CACHE_MAGIC: &[u8; 4] = b"CQTF";
const CACHE_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CqtError {
    #[error("highest bin edge {top_hz:.1} Hz is not below Nyquist {nyquist_hz:.1} Hz")]
    Nyquist { top_hz: f64, nyquist_hz: f64 },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad cqt cache file: {0}")]
    Cache(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CqtConfig {
    pub hop: usize,
    pub f_min: f64,
    pub n_bins: usize,
    pub bins_per_octave: usize,
}

impl Default for CqtConfig {
    fn default() -> Self {
        CqtConfig {
            hop: 4096,
            f_min: 32.7032,
            n_bins: 192,
            bins_per_octave: 24,
        }
    }
}

impl CqtConfig {
    pub fn center_frequency(&self, bin: usize) -> f64 {
        self.f_min * 2f64.powf(bin as f64 / self.bins_per_octave as f64)
    }

    pub fn quality_factor(&self) -> f64 {
        1.0 / (2f64.powf(1.0 / self.bins_per_octave as f64) - 1.0)
    }

    pub fn window_length(&self, bin: usize, sample_rate: u32) -> usize {
        (self.quality_factor() * sample_rate as f64 / self.center_frequency(bin)).round() as usize
    }

    pub fn validate(&self, sample_rate: u32) -> Result<(), CqtError> {
        if self.hop == 0 || self.n_bins == 0 || self.bins_per_octave == 0 {
            return Err(CqtError::Config("hop and bin counts must be positive".into()));
        }
        if !(self.f_min.is_finite() && self.f_min > 0.0) {
            return Err(CqtError::Config(format!("f_min = {}", self.f_min)));
        }
        let top_hz = self.f_min * 2f64.powf(self.n_bins as f64 / self.bins_per_octave as f64);
        let nyquist_hz = sample_rate as f64 / 2.0;
        if top_hz >= nyquist_hz {
            return Err(CqtError::Nyquist { top_hz, nyquist_hz });
        }
        Ok(())
    }
}

/// Frames × bins magnitudes, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CqtMatrix {
    data: Vec<f64>,
    n_bins: usize,
    hop: usize,
    sample_rate: u32,
}

impl CqtMatrix {
    pub fn from_rows(data: Vec<f64>, n_bins: usize, hop: usize, sample_rate: u32) -> Self {
        assert!(n_bins > 0 && data.len().is_multiple_of(n_bins), "ragged cqt matrix");
        CqtMatrix { data, n_bins, hop, sample_rate }
    }

    pub fn n_frames(&self) -> usize {
        self.data.len() / self.n_bins
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn hop(&self) -> usize {
        self.hop
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn frame(&self, n: usize) -> &[f64] {
        &self.data[n * self.n_bins..(n + 1) * self.n_bins]
    }

    pub fn frames(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.n_bins)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn frame_time(&self, n: usize) -> f64 {
        (n * self.hop) as f64 / self.sample_rate as f64
    }

    pub fn frame_times(&self) -> Vec<f64> {
        (0..self.n_frames()).map(|n| self.frame_time(n)).collect()
    }
}

/// Precomputed complex kernel of one bin, normalized by the window sum.
struct BinKernel {
    re: Vec<f64>,
    im: Vec<f64>,
    half: usize,
}

impl BinKernel {
    fn new(freq: f64, len: usize, sample_rate: u32) -> Self {
        let window = hann(len);
        let gain: f64 = window.iter().sum();
        let omega = 2.0 * PI * freq / sample_rate as f64;
        let (re, im) = window
            .iter()
            .enumerate()
            .map(|(j, w)| {
                let phase = omega * j as f64;
                (w * phase.cos() / gain, -w * phase.sin() / gain)
            })
            .unzip();
        BinKernel { re, im, half: len / 2 }
    }
}

/// Symmetric Hann window; a single-sample window is `[1]`.
pub fn hann(len: usize) -> Vec<f64> {
    if len <= 1 {
        return vec![1.0; len];
    }
    let denom = (len - 1) as f64;
    (0..len)
        .map(|j| 0.5 - 0.5 * (2.0 * PI * j as f64 / denom).cos())
        .collect()
}

pub fn compute_cqt(audio: &AudioBuffer, config: &CqtConfig) -> Result<CqtMatrix, CqtError> {
    let sr = audio.sample_rate();
    config.validate(sr)?;
    let kernels: Vec<BinKernel> = (0..config.n_bins)
        .map(|k| {
            let len = config.window_length(k, sr).max(1);
            BinKernel::new(config.center_frequency(k), len, sr)
        })
        .collect();

    let samples = audio.samples();
    let n_frames = samples.len() / config.hop + 1;
    let pad = kernels.iter().map(|k| k.re.len()).max().unwrap_or(0);
    let mut padded = vec![0.0; pad + samples.len() + pad];
    padded[pad..pad + samples.len()].copy_from_slice(samples);

    let mut data = Vec::with_capacity(n_frames * config.n_bins);
    for n in 0..n_frames {
        let center = pad + n * config.hop;
        for kernel in &kernels {
            let start = center - kernel.half;
            let segment = &padded[start..start + kernel.re.len()];
            let (mut re, mut im) = (0.0, 0.0);
            for ((x, kr), ki) in segment.iter().zip(&kernel.re).zip(&kernel.im) {
                re += x * kr;
                im += x * ki;
            }
            data.push(re.hypot(im));
        }
    }
    Ok(CqtMatrix::from_rows(data, config.n_bins, config.hop, sr))
}

/// Writes the matrix in the `CQTF` cache layout.
pub fn write_cache<W: Write>(mut out: W, matrix: &CqtMatrix, config: &CqtConfig) -> Result<(), CqtError> {
    out.write_all(CACHE_MAGIC)?;
    out.write_all(&CACHE_VERSION.to_le_bytes())?;
    out.write_all(&matrix.sample_rate.to_le_bytes())?;
    out.write_all(&(config.hop as u32).to_le_bytes())?;
    out.write_all(&config.f_min.to_le_bytes())?;
    out.write_all(&(config.n_bins as u32).to_le_bytes())?;
    out.write_all(&(config.bins_per_octave as u32).to_le_bytes())?;
    out.write_all(&(matrix.n_frames() as u64).to_le_bytes())?;
    for v in &matrix.data {
        out.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

/// Reads a cache file, returning the matrix and the config it was built with.
pub fn read_cache<R: Read>(mut input: R) -> Result<(CqtMatrix, CqtConfig), CqtError> {
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if &magic != CACHE_MAGIC {
        return Err(CqtError::Cache("bad magic".into()));
    }
    let mut u32_buf = [0u8; 4];
    let mut read_u32 = |r: &mut R| -> std::io::Result<u32> {
        r.read_exact(&mut u32_buf)?;
        Ok(u32::from_le_bytes(u32_buf))
    };
    let version = read_u32(&mut input)?;
    if version != CACHE_VERSION {
        return Err(CqtError::Cache(format!("unsupported version {version}")));
    }
    let sample_rate = read_u32(&mut input)?;
    let hop = read_u32(&mut input)? as usize;
    let mut f64_buf = [0u8; 8];
    input.read_exact(&mut f64_buf)?;
    let f_min = f64::from_le_bytes(f64_buf);
    let n_bins = read_u32(&mut input)? as usize;
    let bins_per_octave = read_u32(&mut input)? as usize;
    input.read_exact(&mut f64_buf)?;
    let n_frames = u64::from_le_bytes(f64_buf) as usize;
    if n_bins == 0 || hop == 0 {
        return Err(CqtError::Cache("zero-sized header field".into()));
    }
    let mut bytes = vec![0u8; n_frames * n_bins * 8];
    input.read_exact(&mut bytes)?;
    let data = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let config = CqtConfig { hop, f_min, n_bins, bins_per_octave };
    Ok((CqtMatrix::from_rows(data, n_bins, hop, sample_rate), config))
}

pub fn save_cache(path: impl AsRef<Path>, matrix: &CqtMatrix, config: &CqtConfig) -> Result<(), CqtError> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_cache(&mut out, matrix, config)?;
    out.flush()?;
    Ok(())
}

pub fn load_cache(path: impl AsRef<Path>) -> Result<(CqtMatrix, CqtConfig), CqtError> {
    read_cache(std::io::BufReader::new(std::fs::File::open(path)?))
}
