//! Mono PCM audio buffers and WAV I/O.

use std::io::{Read, Seek};
use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("unsupported or malformed wav: {0}")]
    Format(String),
    #[error("sample rate must be positive")]
    ZeroSampleRate,
    #[error("non-finite sample at index {0}")]
    NonFinite(usize),
}

impl From<hound::Error> for AudioError {
    fn from(err: hound::Error) -> Self {
        match err {
            hound::Error::IoError(e) => AudioError::Io(e),
            other => AudioError::Format(other.to_string()),
        }
    }
}

/// Mono samples at a fixed sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl AudioBuffer {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self, AudioError> {
        if sample_rate == 0 {
            return Err(AudioError::ZeroSampleRate);
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(AudioError::NonFinite(i));
        }
        Ok(AudioBuffer { samples, sample_rate })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Multiplies every sample by `gain`.
    pub fn scaled(&self, gain: f64) -> Self {
        AudioBuffer {
            samples: self.samples.iter().map(|s| s * gain).collect(),
            sample_rate: self.sample_rate,
        }
    }
}

/// Reads a 16-bit PCM or 32-bit float WAV file, averaging channels to mono.
pub fn load_wav(path: impl AsRef<Path>) -> Result<AudioBuffer, AudioError> {
    let reader = WavReader::open(path)?;
    read_wav(reader)
}

pub fn read_wav<R: Read>(reader: WavReader<R>) -> Result<AudioBuffer, AudioError> {
    let spec = reader.spec();
    let channels = spec.channels as usize;
    if channels == 0 || channels > 2 {
        return Err(AudioError::Format(format!("{channels} channels")));
    }
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<Result<_, _>>()?,
        (SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(|v| v as f64))
            .collect::<Result<_, _>>()?,
        (format, bits) => {
            return Err(AudioError::Format(format!("{bits}-bit {format:?} samples")));
        }
    };
    if !interleaved.len().is_multiple_of(channels) {
        return Err(AudioError::Io(std::io::Error::new(
            std::io::ErrorKind::UnexpectedEof,
            "partial sample frame",
        )));
    }
    let mono = interleaved
        .chunks_exact(channels)
        .map(|frame| frame.iter().sum::<f64>() / channels as f64)
        .collect();
    AudioBuffer::new(mono, spec.sample_rate)
}

/// Writes a mono 32-bit float WAV file.
pub fn save_wav(path: impl AsRef<Path>, audio: &AudioBuffer) -> Result<(), AudioError> {
    let file = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_wav(file, audio)
}

pub fn write_wav<W: std::io::Write + Seek>(out: W, audio: &AudioBuffer) -> Result<(), AudioError> {
    let spec = WavSpec {
        channels: 1,
        sample_rate: audio.sample_rate,
        bits_per_sample: 32,
        sample_format: SampleFormat::Float,
    };
    let mut writer = WavWriter::new(out, spec)?;
    for &s in &audio.samples {
        writer.write_sample(s as f32)?;
    }
    writer.finalize()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn encode<S: hound::Sample + Copy>(spec: WavSpec, samples: &[S]) -> Vec<u8> {
        let mut buf = Cursor::new(Vec::new());
        let mut w = WavWriter::new(&mut buf, spec).unwrap();
        for &s in samples {
            w.write_sample(s).unwrap();
        }
        w.finalize().unwrap();
        buf.into_inner()
    }

    fn spec(channels: u16, bits: u16, format: SampleFormat) -> WavSpec {
        WavSpec {
            channels,
            sample_rate: 44100,
            bits_per_sample: bits,
            sample_format: format,
        }
    }

    fn decode(bytes: Vec<u8>) -> Result<AudioBuffer, AudioError> {
        read_wav(WavReader::new(Cursor::new(bytes))?)
    }

    #[test]
    fn one_second_pcm16_mono() {
        let samples: Vec<i16> = (0..44100).map(|i| (i % 100) as i16 * 300).collect();
        let audio = decode(encode(spec(1, 16, SampleFormat::Int), &samples)).unwrap();
        assert_eq!(audio.samples().len(), 44100);
        assert_eq!(audio.sample_rate(), 44100);
        assert_eq!(audio.samples()[1], 300.0 / 32768.0);
    }

    #[test]
    fn stereo_downmix_cancels() {
        let samples: Vec<f32> = (0..2000).map(|i| if i % 2 == 0 { 0.5 } else { -0.5 }).collect();
        let audio = decode(encode(spec(2, 32, SampleFormat::Float), &samples)).unwrap();
        assert_eq!(audio.samples().len(), 1000);
        assert!(audio.samples().iter().all(|&s| s == 0.0));
    }

    #[test]
    fn eight_bit_is_rejected() {
        let bytes = encode(spec(1, 8, SampleFormat::Int), &[0i8; 64]);
        assert!(matches!(decode(bytes), Err(AudioError::Format(_))));
    }

    #[test]
    fn truncated_data_is_an_io_error() {
        let mut bytes = encode(spec(1, 16, SampleFormat::Int), &[1i16; 1000]);
        bytes.truncate(bytes.len() - 501);
        assert!(matches!(decode(bytes), Err(AudioError::Io(_))));
    }

    #[test]
    fn float_round_trip() {
        let audio = AudioBuffer::new(vec![0.25, -0.5, 0.125], 22050).unwrap();
        let mut buf = Cursor::new(Vec::new());
        write_wav(&mut buf, &audio).unwrap();
        assert_eq!(decode(buf.into_inner()).unwrap(), audio);
    }

    #[test]
    fn rejects_invalid_buffers() {
        assert!(matches!(AudioBuffer::new(vec![0.0], 0), Err(AudioError::ZeroSampleRate)));
        assert!(matches!(
            AudioBuffer::new(vec![0.0, f64::NAN], 8000),
            Err(AudioError::NonFinite(1))
        ));
    }
}
