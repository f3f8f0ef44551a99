//! RIFF/WAVE reading and writing (PCM16 and IEEE float32).
//!
//! The parser is deliberately strict: declared chunk sizes must be backed by
//! actual bytes, and unsupported encodings are reported with the byte offset
//! of the offending field.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::signal::MultichannelSignal;

/// Sample encodings supported for writing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WavEncoding {
    Pcm16,
    Float32,
}

pub fn read_wav(path: impl AsRef<Path>) -> Result<MultichannelSignal> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_wav(&bytes).map_err(|(offset, reason)| Error::Format {
        path: path.to_path_buf(),
        offset,
        reason,
    })
}

pub fn write_wav(
    signal: &MultichannelSignal,
    path: impl AsRef<Path>,
    encoding: WavEncoding,
) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_wav(signal, encoding)?;
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))?;
    Ok(())
}

const FMT_PCM: u16 = 1;
const FMT_IEEE_FLOAT: u16 = 3;

type ParseError = (u64, String);

fn parse_wav(bytes: &[u8]) -> std::result::Result<MultichannelSignal, ParseError> {
    let take = |off: usize, n: usize| -> std::result::Result<&[u8], ParseError> {
        bytes
            .get(off..off + n)
            .ok_or_else(|| (off as u64, format!("file truncated: need {n} bytes")))
    };
    let u16_at = |off: usize| -> std::result::Result<u16, ParseError> {
        Ok(u16::from_le_bytes(take(off, 2)?.try_into().unwrap()))
    };
    let u32_at = |off: usize| -> std::result::Result<u32, ParseError> {
        Ok(u32::from_le_bytes(take(off, 4)?.try_into().unwrap()))
    };

    if take(0, 4)? != b"RIFF" {
        return Err((0, "missing RIFF magic".into()));
    }
    if take(8, 4)? != b"WAVE" {
        return Err((8, "missing WAVE form type".into()));
    }

    let mut fmt: Option<(u16, u16, u32, u16)> = None; // format, channels, rate, bits
    let mut data: Option<(usize, usize)> = None; // offset, len
    let mut off = 12usize;
    while off + 8 <= bytes.len() {
        let id: [u8; 4] = take(off, 4)?.try_into().unwrap();
        let size = u32_at(off + 4)? as usize;
        let body = off + 8;
        if body + size > bytes.len() {
            return Err((
                (off + 4) as u64,
                format!(
                    "chunk '{}' declares {size} bytes but only {} remain",
                    String::from_utf8_lossy(&id),
                    bytes.len() - body
                ),
            ));
        }
        match &id {
            b"fmt " => {
                if size < 16 {
                    return Err(((off + 4) as u64, "fmt chunk shorter than 16 bytes".into()));
                }
                let audio_format = u16_at(body)?;
                let channels = u16_at(body + 2)?;
                let sample_rate = u32_at(body + 4)?;
                let bits = u16_at(body + 14)?;
                fmt = Some((audio_format, channels, sample_rate, bits));
            }
            b"data" => {
                data = Some((body, size));
            }
            _ => {} // skip unknown chunks (fact, LIST, ...)
        }
        off = body + size + (size & 1); // chunks are word-aligned
    }

    let (audio_format, channels, sample_rate, bits) =
        fmt.ok_or((12u64, "no fmt chunk found".to_string()))?;
    let (data_off, data_len) = data.ok_or((12u64, "no data chunk found".to_string()))?;
    if channels == 0 {
        return Err((data_off as u64, "zero channels".into()));
    }
    if sample_rate == 0 {
        return Err((data_off as u64, "zero sample rate".into()));
    }

    let bytes_per_sample = match (audio_format, bits) {
        (FMT_PCM, 16) => 2,
        (FMT_IEEE_FLOAT, 32) => 4,
        _ => {
            return Err((
                data_off as u64,
                format!("unsupported encoding: format {audio_format}, {bits} bits"),
            ))
        }
    };
    let frame_bytes = bytes_per_sample * channels as usize;
    if data_len % frame_bytes != 0 {
        return Err((
            data_off as u64,
            format!("data length {data_len} is not a multiple of the {frame_bytes}-byte frame"),
        ));
    }
    let num_frames = data_len / frame_bytes;
    let mut samples = vec![Vec::with_capacity(num_frames); channels as usize];
    let body = &bytes[data_off..data_off + data_len];
    match bytes_per_sample {
        2 => {
            for (i, ch) in body.chunks_exact(2).enumerate() {
                let v = i16::from_le_bytes(ch.try_into().unwrap());
                samples[i % channels as usize].push(v as f64 / 32767.0);
            }
        }
        4 => {
            for (i, ch) in body.chunks_exact(4).enumerate() {
                let v = f32::from_le_bytes(ch.try_into().unwrap());
                samples[i % channels as usize].push(v as f64);
            }
        }
        _ => unreachable!(),
    }
    MultichannelSignal::new(samples, sample_rate)
        .map_err(|e| (data_off as u64, format!("invalid signal: {e}")))
}

fn encode_wav(signal: &MultichannelSignal, encoding: WavEncoding) -> Result<Vec<u8>> {
    let channels = signal.channels();
    if channels > u16::MAX as usize {
        return Err(Error::arg("too many channels for WAV"));
    }
    let (format, bits): (u16, u16) = match encoding {
        WavEncoding::Pcm16 => (FMT_PCM, 16),
        WavEncoding::Float32 => (FMT_IEEE_FLOAT, 32),
    };
    let bytes_per_sample = bits as usize / 8;
    let block_align = bytes_per_sample * channels;
    let data_len = signal.len() * block_align;
    let fact = matches!(encoding, WavEncoding::Float32);
    let riff_len = 4 + (8 + 16) + if fact { 8 + 4 } else { 0 } + 8 + data_len;

    let mut out = Vec::with_capacity(riff_len + 8);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(riff_len as u32).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&format.to_le_bytes());
    out.extend_from_slice(&(channels as u16).to_le_bytes());
    out.extend_from_slice(&signal.sample_rate().to_le_bytes());
    let byte_rate = signal.sample_rate() as usize * block_align;
    out.extend_from_slice(&(byte_rate as u32).to_le_bytes());
    out.extend_from_slice(&(block_align as u16).to_le_bytes());
    out.extend_from_slice(&bits.to_le_bytes());
    if fact {
        out.extend_from_slice(b"fact");
        out.extend_from_slice(&4u32.to_le_bytes());
        out.extend_from_slice(&(signal.len() as u32).to_le_bytes());
    }
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    for k in 0..signal.len() {
        for ch in 0..channels {
            let x = signal.channel(ch)[k];
            match encoding {
                WavEncoding::Pcm16 => {
                    let v = (x.clamp(-1.0, 1.0) * 32767.0).round() as i16;
                    out.extend_from_slice(&v.to_le_bytes());
                }
                WavEncoding::Float32 => {
                    out.extend_from_slice(&(x as f32).to_le_bytes());
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn tmpdir() -> tempfile::TempDir {
        tempfile::tempdir().unwrap()
    }

    #[test]
    fn float32_round_trip_bit_identical() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        // Quantize to f32 up front so one round trip must be lossless.
        let samples: Vec<Vec<f64>> = (0..8)
            .map(|_| {
                (0..480)
                    .map(|_| rng.gen_range(-1.0f64..1.0) as f32 as f64)
                    .collect()
            })
            .collect();
        let sig = MultichannelSignal::new(samples, 48_000).unwrap();
        let dir = tmpdir();
        let path = dir.path().join("rt.wav");
        write_wav(&sig, &path, WavEncoding::Float32).unwrap();
        let back = read_wav(&path).unwrap();
        assert_eq!(back.sample_rate(), 48_000);
        assert_eq!(back.channels(), 8);
        for ch in 0..8 {
            assert_eq!(back.channel(ch), sig.channel(ch), "channel {ch}");
        }
    }

    #[test]
    fn pcm16_round_trip_within_quantization() {
        let samples: Vec<f64> = (0..960)
            .map(|k| (2.0 * std::f64::consts::PI * 440.0 * k as f64 / 48_000.0).sin() * 0.9)
            .collect();
        let sig = MultichannelSignal::mono(samples.clone(), 48_000).unwrap();
        let dir = tmpdir();
        let path = dir.path().join("pcm.wav");
        write_wav(&sig, &path, WavEncoding::Pcm16).unwrap();
        let back = read_wav(&path).unwrap();
        for (a, b) in samples.iter().zip(back.channel(0)) {
            assert!((a - b).abs() <= 0.5 / 32767.0 + 1e-12);
        }
    }

    #[test]
    fn zero_pcm_reads_zero() {
        let sig = MultichannelSignal::mono(vec![0.0; 100], 8000).unwrap();
        let dir = tmpdir();
        let path = dir.path().join("z.wav");
        write_wav(&sig, &path, WavEncoding::Pcm16).unwrap();
        let back = read_wav(&path).unwrap();
        assert!(back.channel(0).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn truncated_data_chunk_is_format_error() {
        let sig = MultichannelSignal::mono(vec![0.25; 100], 48_000).unwrap();
        let bytes = encode_wav(&sig, WavEncoding::Float32).unwrap();
        let dir = tmpdir();
        let path = dir.path().join("trunc.wav");
        fs::write(&path, &bytes[..bytes.len() - 10]).unwrap();
        match read_wav(&path) {
            Err(Error::Format { offset, reason, .. }) => {
                assert!(offset > 0);
                assert!(reason.contains("declares"), "reason: {reason}");
            }
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn unsupported_encoding_is_format_error() {
        let sig = MultichannelSignal::mono(vec![0.25; 10], 48_000).unwrap();
        let mut bytes = encode_wav(&sig, WavEncoding::Pcm16).unwrap();
        // Corrupt bits-per-sample to 24.
        let bits_off = 12 + 8 + 14;
        bytes[bits_off] = 24;
        let dir = tmpdir();
        let path = dir.path().join("bad.wav");
        fs::write(&path, &bytes).unwrap();
        match read_wav(&path) {
            Err(Error::Format { reason, .. }) => {
                assert!(reason.contains("unsupported encoding"), "{reason}")
            }
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn garbage_is_rejected() {
        let dir = tmpdir();
        let path = dir.path().join("g.wav");
        fs::write(&path, b"not a wav at all").unwrap();
        assert!(matches!(read_wav(&path), Err(Error::Format { .. })));
    }
}
