//! Mono waveforms and PCM16 WAV I/O.

use std::io::{Read, Seek, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// PCM16 full-scale divisor: sample `i` maps to `i / 32768`.
const PCM16_SCALE: f64 = 32768.0;

/// Time-domain mono audio.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::invalid("sample_rate", "must be positive"));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn silence(len: usize, sample_rate: u32) -> Result<Self> {
        Self::new(vec![0.0; len], sample_rate)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn nyquist(&self) -> f64 {
        self.sample_rate as f64 / 2.0
    }

    /// Mean squared amplitude.
    pub fn power(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.iter().map(|s| s * s).sum::<f64>() / self.samples.len() as f64
    }

    pub fn rms(&self) -> f64 {
        self.power().sqrt()
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, s| m.max(s.abs()))
    }

    pub(crate) fn with_samples(&self, samples: Vec<f64>) -> Self {
        Self {
            samples,
            sample_rate: self.sample_rate,
        }
    }

    pub(crate) fn require_non_empty(&self) -> Result<()> {
        if self.samples.is_empty() {
            Err(Error::Empty("waveform"))
        } else {
            Ok(())
        }
    }

    pub(crate) fn require_same_rate(&self, other: &Waveform) -> Result<()> {
        if self.sample_rate != other.sample_rate {
            Err(Error::SampleRateMismatch {
                expected: self.sample_rate,
                found: other.sample_rate,
            })
        } else {
            Ok(())
        }
    }
}

fn map_hound(err: hound::Error) -> Error {
    match err {
        hound::Error::IoError(e) => Error::Io(e),
        hound::Error::FormatError(msg) => Error::Format {
            field: "header",
            reason: msg.to_string(),
        },
        hound::Error::Unsupported => Error::Format {
            field: "audio_format",
            reason: "unsupported codec (expected PCM)".into(),
        },
        hound::Error::TooWide => Error::Format {
            field: "bits_per_sample",
            reason: "sample wider than 32 bits".into(),
        },
        hound::Error::UnfinishedSample => Error::Format {
            field: "data",
            reason: "data chunk ends inside a sample".into(),
        },
        hound::Error::InvalidSampleFormat => Error::Format {
            field: "audio_format",
            reason: "sample format does not match header".into(),
        },
    }
}

/// Decode a PCM16 WAV stream; multichannel input is averaged to mono.
pub fn read_wav_from<R: Read>(reader: R) -> Result<Waveform> {
    let mut reader = hound::WavReader::new(reader).map_err(map_hound)?;
    let spec = reader.spec();
    if spec.sample_format != hound::SampleFormat::Int {
        return Err(Error::Format {
            field: "audio_format",
            reason: "IEEE float data; only PCM16 is supported".into(),
        });
    }
    if spec.bits_per_sample != 16 {
        return Err(Error::Format {
            field: "bits_per_sample",
            reason: format!("{} bits; only 16 is supported", spec.bits_per_sample),
        });
    }
    if spec.channels == 0 {
        return Err(Error::Format {
            field: "channels",
            reason: "zero channels".into(),
        });
    }
    if spec.sample_rate == 0 {
        return Err(Error::Format {
            field: "sample_rate",
            reason: "zero sample rate".into(),
        });
    }
    if reader.len() == 0 {
        return Err(Error::Format {
            field: "data",
            reason: "zero-length data chunk".into(),
        });
    }

    let channels = spec.channels as usize;
    let raw = reader
        .samples::<i16>()
        .collect::<std::result::Result<Vec<i16>, _>>()
        .map_err(map_hound)?;
    let samples = if channels == 1 {
        raw.iter().map(|&s| s as f64 / PCM16_SCALE).collect()
    } else {
        raw.chunks_exact(channels)
            .map(|frame| {
                frame.iter().map(|&s| s as f64).sum::<f64>() / (channels as f64 * PCM16_SCALE)
            })
            .collect()
    };
    Waveform::new(samples, spec.sample_rate)
}

pub fn read_wav(path: impl AsRef<Path>) -> Result<Waveform> {
    let file = std::fs::File::open(path.as_ref())?;
    read_wav_from(std::io::BufReader::new(file))
}

/// Quantise one sample to PCM16 (round to nearest, clamp).
pub fn quantize_pcm16(sample: f64) -> i16 {
    (sample * PCM16_SCALE)
        .round()
        .clamp(i16::MIN as f64, i16::MAX as f64) as i16
}

pub fn write_wav_to<W: Write + Seek>(writer: W, wav: &Waveform) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: wav.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut out = hound::WavWriter::new(writer, spec).map_err(map_hound)?;
    {
        let mut samples = out.get_i16_writer(wav.samples.len() as u32);
        for &s in &wav.samples {
            samples.write_sample(quantize_pcm16(s));
        }
        samples.flush().map_err(map_hound)?;
    }
    out.finalize().map_err(map_hound)
}

pub fn write_wav(path: impl AsRef<Path>, wav: &Waveform) -> Result<()> {
    let file = std::fs::File::create(path.as_ref())?;
    write_wav_to(std::io::BufWriter::new(file), wav)
}

/// Read just the header and return the duration in seconds.
pub fn wav_duration_s(path: impl AsRef<Path>) -> Result<f64> {
    let reader = hound::WavReader::open(path.as_ref()).map_err(map_hound)?;
    let spec = reader.spec();
    if spec.sample_rate == 0 {
        return Err(Error::Format {
            field: "sample_rate",
            reason: "zero sample rate".into(),
        });
    }
    Ok(reader.duration() as f64 / spec.sample_rate as f64)
}
