//! Image files and the flat binary container for measurements and
//! checkpoints.
//!
//! Image formats:
//! - `raw_f64`: little-endian `f64`, row-major, with a JSON sidecar
//!   (`<path>.json`) holding the shape and normalization range.
//! - `pgm`: binary P5 with 16-bit big-endian samples. A `# nerp-scale lo hi`
//!   comment records the intensity range mapped onto `0..=65535`.
//! - `png`: 16-bit grayscale, scale recorded in a `nerp-scale` text chunk.
//!
//! Container layout: the 8-byte magic `NERPBIN1`, a little-endian `u64`
//! header length, a JSON header, then `payload_len` little-endian `f64`s.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::forward::{KSpaceData, Measurements, SinogramData};
use crate::image::ImageGrid;
use crate::mlp::{Activation, FourierEncoding, Layer, MlpParams, Real};
use crate::pipeline::Representation;

const MAGIC: &[u8; 8] = b"NERPBIN1";
const QUANT_MAX: f64 = 65535.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImageFormat {
    RawF64,
    Pgm,
    Png,
}

impl ImageFormat {
    /// Guesses the format from a file extension (`raw`, `pgm`, `png`).
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "raw" | "f64" | "bin" => Some(ImageFormat::RawF64),
            "pgm" => Some(ImageFormat::Pgm),
            "png" => Some(ImageFormat::Png),
            _ => None,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSidecar {
    shape: Vec<usize>,
    #[serde(default)]
    source_range: Option<(f64, f64)>,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn save_image(img: &ImageGrid, path: &Path, format: ImageFormat) -> Result<()> {
    match format {
        ImageFormat::RawF64 => save_raw(img, path),
        ImageFormat::Pgm => save_pgm(img, path),
        ImageFormat::Png => save_png(img, path),
    }
}

pub fn load_image(path: &Path, format: ImageFormat) -> Result<ImageGrid> {
    match format {
        ImageFormat::RawF64 => load_raw(path),
        ImageFormat::Pgm => load_pgm(path),
        ImageFormat::Png => load_png(path),
    }
}

fn save_raw(img: &ImageGrid, path: &Path) -> Result<()> {
    let mut bytes = Vec::with_capacity(img.len() * 8);
    for v in img.values() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, bytes)?;
    let sidecar = RawSidecar {
        shape: img.shape().to_vec(),
        source_range: img.source_range(),
    };
    fs::write(sidecar_path(path), serde_json::to_vec_pretty(&sidecar).expect("plain struct"))?;
    Ok(())
}

fn load_raw(path: &Path) -> Result<ImageGrid> {
    let side_bytes = fs::read(sidecar_path(path))?;
    let sidecar: RawSidecar = serde_json::from_slice(&side_bytes)
        .map_err(|e| Error::parse(json_offset(&side_bytes, &e), format!("raw sidecar: {e}")))?;
    let bytes = fs::read(path)?;
    let count: usize = sidecar.shape.iter().product();
    let values = decode_f64s(&bytes, 0, count)?;
    if bytes.len() != count * 8 {
        return Err(Error::parse(
            (count * 8) as u64,
            format!("{} trailing bytes after {count} samples", bytes.len() - count * 8),
        ));
    }
    let mut img = ImageGrid::new(sidecar.shape, values)?;
    img.set_source_range(sidecar.source_range);
    Ok(img)
}

fn json_offset(bytes: &[u8], err: &serde_json::Error) -> u64 {
    // serde_json reports line/column; convert to a byte offset
    let mut line = 1;
    let mut offset = 0;
    for (i, &b) in bytes.iter().enumerate() {
        if line == err.line() {
            offset = i + err.column().saturating_sub(1);
            break;
        }
        if b == b'\n' {
            line += 1;
        }
    }
    offset.min(bytes.len()) as u64
}

fn decode_f64s(bytes: &[u8], start: usize, count: usize) -> Result<Vec<f64>> {
    let need = start + count * 8;
    if bytes.len() < need {
        let complete = (bytes.len().saturating_sub(start)) / 8;
        return Err(Error::parse(
            (start + complete * 8) as u64,
            format!("truncated data: expected {count} f64 samples, found {complete}"),
        ));
    }
    Ok(bytes[start..need]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect())
}

fn quant_range(img: &ImageGrid) -> (f64, f64) {
    let (lo, hi) = img.min_max();
    if lo >= 0.0 && hi <= 1.0 {
        (0.0, 1.0)
    } else if hi > lo {
        (lo, hi)
    } else {
        (lo, lo + 1.0)
    }
}

fn quantize(v: f64, lo: f64, hi: f64) -> u16 {
    (((v - lo) / (hi - lo)).clamp(0.0, 1.0) * QUANT_MAX).round() as u16
}

fn dims_2d(img: &ImageGrid) -> Result<(usize, usize)> {
    match img.shape() {
        [r, c] => Ok((*r, *c)),
        other => Err(Error::UnsupportedGeometry(format!(
            "8/16-bit image formats store 2D images, got shape {other:?}"
        ))),
    }
}

fn save_pgm(img: &ImageGrid, path: &Path) -> Result<()> {
    let (rows, cols) = dims_2d(img)?;
    let (lo, hi) = quant_range(img);
    let mut out = BufWriter::new(fs::File::create(path)?);
    write!(out, "P5\n# nerp-scale {lo:e} {hi:e}\n{cols} {rows}\n65535\n")?;
    for &v in img.values() {
        out.write_all(&quantize(v, lo, hi).to_be_bytes())?;
    }
    out.flush()?;
    Ok(())
}

struct PgmCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    scale: Option<(f64, f64)>,
}

impl PgmCursor<'_> {
    fn skip_space_and_comments(&mut self) -> Result<()> {
        while self.pos < self.bytes.len() {
            let b = self.bytes[self.pos];
            if b.is_ascii_whitespace() {
                self.pos += 1;
            } else if b == b'#' {
                let start = self.pos;
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
                let line = String::from_utf8_lossy(&self.bytes[start..self.pos]);
                if let Some(rest) = line.strip_prefix("# nerp-scale") {
                    let nums: Vec<f64> = rest.split_whitespace().filter_map(|t| t.parse().ok()).collect();
                    match nums.as_slice() {
                        [lo, hi] if hi > lo => self.scale = Some((*lo, *hi)),
                        _ => return Err(Error::parse(start as u64, "malformed nerp-scale comment")),
                    }
                }
            } else {
                break;
            }
        }
        Ok(())
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        self.skip_space_and_comments()?;
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::parse(start as u64, format!("expected PGM {what}")))
    }
}

fn load_pgm(path: &Path) -> Result<ImageGrid> {
    let bytes = fs::read(path)?;
    if !bytes.starts_with(b"P5") {
        return Err(Error::parse(0, "missing P5 magic"));
    }
    let mut cur = PgmCursor {
        bytes: &bytes,
        pos: 2,
        scale: None,
    };
    let cols = cur.number("width")?;
    let rows = cur.number("height")?;
    let maxval = cur.number("maxval")?;
    if maxval == 0 || maxval > 65535 {
        return Err(Error::parse(cur.pos as u64, format!("maxval {maxval} outside 1..=65535")));
    }
    if cur.pos >= bytes.len() || !bytes[cur.pos].is_ascii_whitespace() {
        return Err(Error::parse(cur.pos as u64, "expected whitespace before pixel data"));
    }
    let data_start = cur.pos + 1;
    let wide = maxval > 255;
    let sample = if wide { 2 } else { 1 };
    let count = rows * cols;
    let available = bytes.len() - data_start;
    if available < count * sample {
        return Err(Error::parse(
            (data_start + available / sample * sample) as u64,
            format!("truncated PGM: {count} samples expected, {} present", available / sample),
        ));
    }
    let (lo, hi) = cur.scale.unwrap_or((0.0, 1.0));
    let data = &bytes[data_start..data_start + count * sample];
    let values = (0..count)
        .map(|k| {
            let q = if wide {
                u16::from_be_bytes([data[2 * k], data[2 * k + 1]]) as f64
            } else {
                data[k] as f64
            };
            lo + q / maxval as f64 * (hi - lo)
        })
        .collect();
    ImageGrid::new(vec![rows, cols], values)
}

fn save_png(img: &ImageGrid, path: &Path) -> Result<()> {
    let (rows, cols) = dims_2d(img)?;
    let (lo, hi) = quant_range(img);
    let file = BufWriter::new(fs::File::create(path)?);
    let mut encoder = png::Encoder::new(file, cols as u32, rows as u32);
    encoder.set_color(png::ColorType::Grayscale);
    encoder.set_depth(png::BitDepth::Sixteen);
    encoder
        .add_text_chunk("nerp-scale".into(), format!("{lo:e} {hi:e}"))
        .map_err(|e| Error::Io(std::io::Error::other(e)))?;
    let mut writer = encoder.write_header().map_err(|e| Error::Io(std::io::Error::other(e)))?;
    let data: Vec<u8> = img.values().iter().flat_map(|&v| quantize(v, lo, hi).to_be_bytes()).collect();
    writer.write_image_data(&data).map_err(|e| Error::Io(std::io::Error::other(e)))?;
    writer.finish().map_err(|e| Error::Io(std::io::Error::other(e)))?;
    Ok(())
}

fn load_png(path: &Path) -> Result<ImageGrid> {
    let bytes = fs::read(path)?;
    if !bytes.starts_with(&[0x89, b'P', b'N', b'G', b'\r', b'\n', 0x1a, b'\n']) {
        return Err(Error::parse(0, "missing PNG signature"));
    }
    // the decoder does not expose positions; failures past the signature
    // are reported at the end of the bytes it could consume
    let fail = |e: png::DecodingError| Error::parse(8, format!("PNG decode: {e}"));
    let mut decoder = png::Decoder::new(std::io::Cursor::new(&bytes));
    decoder.set_transformations(png::Transformations::IDENTITY);
    let mut reader = decoder.read_info().map_err(fail)?;
    let mut buf = vec![0; reader.output_buffer_size().unwrap_or(0)];
    let frame = reader.next_frame(&mut buf).map_err(|e| Error::parse(bytes.len() as u64, format!("PNG decode: {e}")))?;
    if frame.color_type != png::ColorType::Grayscale {
        return Err(Error::parse(8, format!("expected grayscale PNG, got {:?}", frame.color_type)));
    }
    let scale = reader
        .info()
        .uncompressed_latin1_text
        .iter()
        .find(|t| t.keyword == "nerp-scale")
        .and_then(|t| {
            let nums: Vec<f64> = t.text.split_whitespace().filter_map(|s| s.parse().ok()).collect();
            match nums.as_slice() {
                [lo, hi] if hi > lo => Some((*lo, *hi)),
                _ => None,
            }
        });
    let (lo, hi) = scale.unwrap_or((0.0, 1.0));
    let (rows, cols) = (frame.height as usize, frame.width as usize);
    let data = &buf[..frame.buffer_size()];
    let values: Vec<f64> = match frame.bit_depth {
        png::BitDepth::Sixteen => data
            .chunks_exact(2)
            .map(|c| lo + u16::from_be_bytes([c[0], c[1]]) as f64 / QUANT_MAX * (hi - lo))
            .collect(),
        png::BitDepth::Eight => data.iter().map(|&b| lo + b as f64 / 255.0 * (hi - lo)).collect(),
        other => return Err(Error::parse(8, format!("unsupported PNG bit depth {other:?}"))),
    };
    ImageGrid::new(vec![rows, cols], values)
}

/// Writes a container file.
pub fn write_container(path: &Path, header: &Value, payload: &[f64]) -> Result<()> {
    let mut header = header.clone();
    header["payload_len"] = json!(payload.len());
    let header_bytes = serde_json::to_vec(&header).expect("JSON value");
    let mut out = BufWriter::new(fs::File::create(path)?);
    out.write_all(MAGIC)?;
    out.write_all(&(header_bytes.len() as u64).to_le_bytes())?;
    out.write_all(&header_bytes)?;
    for v in payload {
        out.write_all(&v.to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a container file, validating its length.
pub fn read_container(path: &Path) -> Result<(Value, Vec<f64>)> {
    let bytes = fs::read(path)?;
    if bytes.len() < 16 {
        return Err(Error::parse(bytes.len().min(8) as u64, "file too short for container preamble"));
    }
    if &bytes[..8] != MAGIC {
        return Err(Error::parse(0, "bad container magic"));
    }
    let header_len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let header_end = 16usize
        .checked_add(header_len)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| Error::parse(bytes.len() as u64, "truncated container header"))?;
    let header_bytes = &bytes[16..header_end];
    let header: Value = serde_json::from_slice(header_bytes)
        .map_err(|e| Error::parse(16 + json_offset(header_bytes, &e), format!("container header: {e}")))?;
    let count = header["payload_len"]
        .as_u64()
        .ok_or_else(|| Error::parse(16, "container header lacks payload_len"))? as usize;
    let payload = decode_f64s(&bytes, header_end, count)?;
    if bytes.len() != header_end + count * 8 {
        return Err(Error::parse((header_end + count * 8) as u64, "trailing bytes after payload"));
    }
    Ok((header, payload))
}

fn header_field<T: for<'de> Deserialize<'de>>(header: &Value, key: &str) -> Result<T> {
    serde_json::from_value(header[key].clone())
        .map_err(|e| Error::parse(16, format!("container header field `{key}`: {e}")))
}

pub fn save_measurements(m: &Measurements, path: &Path) -> Result<()> {
    match m {
        Measurements::Sinogram(s) => {
            let header = json!({
                "kind": "sinogram",
                "image_size": s.image_size,
                "shape": [s.angles.len(), s.num_bins()],
                "angles": s.angles,
                "detector_offsets": s.detector_offsets,
            });
            write_container(path, &header, s.values.as_slice().expect("standard layout"))
        }
        Measurements::KSpace(k) => {
            let header = json!({
                "kind": "kspace",
                "image_size": k.image_size,
                "num_spokes": k.num_spokes,
                "num_samples": k.sample_coords.len(),
                "layout": "coords[kx,ky]*n, values[re,im]*n, weights*n",
            });
            let mut payload = Vec::with_capacity(5 * k.sample_coords.len());
            payload.extend(k.sample_coords.iter().flatten());
            payload.extend(k.values.iter().flat_map(|v| [v.re, v.im]));
            payload.extend(&k.density_weights);
            write_container(path, &header, &payload)
        }
    }
}

pub fn load_measurements(path: &Path) -> Result<Measurements> {
    let (header, payload) = read_container(path)?;
    let kind: String = header_field(&header, "kind")?;
    let image_size: usize = header_field(&header, "image_size")?;
    match kind.as_str() {
        "sinogram" => {
            let [views, bins]: [usize; 2] = header_field(&header, "shape")?;
            let values = Array2::from_shape_vec((views, bins), payload)
                .map_err(|e| Error::parse(16, format!("sinogram payload: {e}")))?;
            let sino = SinogramData {
                image_size,
                angles: header_field(&header, "angles")?,
                detector_offsets: header_field(&header, "detector_offsets")?,
                values,
            };
            sino.validate()?;
            Ok(Measurements::Sinogram(sino))
        }
        "kspace" => {
            let n: usize = header_field(&header, "num_samples")?;
            if payload.len() != 5 * n {
                return Err(Error::parse(16, format!("k-space payload holds {} values, expected {}", payload.len(), 5 * n)));
            }
            let data = KSpaceData {
                image_size,
                num_spokes: header_field(&header, "num_spokes")?,
                sample_coords: payload[..2 * n].chunks_exact(2).map(|c| [c[0], c[1]]).collect(),
                values: payload[2 * n..4 * n].chunks_exact(2).map(|c| Complex64::new(c[0], c[1])).collect(),
                density_weights: payload[4 * n..].to_vec(),
            };
            data.validate()?;
            Ok(Measurements::KSpace(data))
        }
        other => Err(Error::parse(16, format!("container holds `{other}`, not measurements"))),
    }
}

/// Provenance stored alongside checkpointed weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointInfo {
    pub seed: u64,
    pub config_hash: String,
}

/// Saves a representation's weights and encoding in `f64`.
pub fn save_checkpoint<T: Real>(rep: &Representation<T>, info: &CheckpointInfo, path: &Path) -> Result<()> {
    let mlp = &rep.mlp;
    let shapes: Vec<[usize; 2]> = mlp.layers().iter().map(|l| [l.out_dim(), l.in_dim()]).collect();
    let header = json!({
        "kind": "checkpoint",
        "arch": {
            "depth": mlp.depth(),
            "width": mlp.width(),
            "input_dim": mlp.input_dim(),
            "activation": mlp.activation(),
            "omega0": mlp.omega0(),
            "layer_shapes": shapes,
        },
        "encoding": {
            "features": rep.encoding.features(),
            "input_dim": rep.encoding.input_dim(),
            "sigma": if rep.encoding.sigma().is_finite() { json!(rep.encoding.sigma()) } else { Value::Null },
            "seed": rep.encoding.seed(),
        },
        "seed": info.seed,
        "config_hash": info.config_hash,
    });
    let mut payload: Vec<f64> = mlp.flatten().into_iter().map(Real::to_f64).collect();
    payload.extend(rep.encoding.matrix().iter());
    write_container(path, &header, &payload)
}

pub fn load_checkpoint<T: Real>(path: &Path) -> Result<(Representation<T>, CheckpointInfo)> {
    let (header, payload) = read_container(path)?;
    let kind: String = header_field(&header, "kind")?;
    if kind != "checkpoint" {
        return Err(Error::parse(16, format!("container holds `{kind}`, not a checkpoint")));
    }
    let arch = &header["arch"];
    let shapes: Vec<[usize; 2]> = header_field(arch, "layer_shapes")?;
    let activation: Activation = header_field(arch, "activation")?;
    let omega0: f64 = header_field(arch, "omega0")?;
    let enc = &header["encoding"];
    let features: usize = header_field(enc, "features")?;
    let enc_dim: usize = header_field(enc, "input_dim")?;

    let mut layers = Vec::with_capacity(shapes.len());
    let mut cursor = 0;
    let mut take = |n: usize| -> Result<&[f64]> {
        let slice = payload
            .get(cursor..cursor + n)
            .ok_or_else(|| Error::parse(16, "checkpoint payload shorter than its architecture"))?;
        cursor += n;
        Ok(slice)
    };
    for [out_dim, in_dim] in shapes {
        let w = take(out_dim * in_dim)?;
        let weight = Array2::from_shape_vec((out_dim, in_dim), w.iter().map(|&v| T::from_f64(v)).collect())
            .expect("sized slice");
        let bias = take(out_dim)?.iter().map(|&v| T::from_f64(v)).collect();
        layers.push(Layer { weight, bias });
    }
    let matrix = Array2::from_shape_vec((features, enc_dim), take(features * enc_dim)?.to_vec()).expect("sized slice");
    if cursor != payload.len() {
        return Err(Error::parse(16, "checkpoint payload longer than its architecture"));
    }
    let seed: u64 = header_field(enc, "seed")?;
    let encoding = match header["encoding"]["sigma"].as_f64() {
        Some(sigma) => {
            let regenerated = FourierEncoding::new(features, enc_dim, sigma, seed)?;
            if regenerated.matrix() == matrix {
                regenerated
            } else {
                FourierEncoding::from_matrix(matrix)?
            }
        }
        None => FourierEncoding::from_matrix(matrix)?,
    };
    let mlp = MlpParams::from_layers(layers, activation, omega0)?;
    let info = CheckpointInfo {
        seed: header_field(&header, "seed")?,
        config_hash: header_field(&header, "config_hash")?,
    };
    Ok((Representation { encoding, mlp }, info))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::{simulate, SamplingSpec};
    use crate::phantom::shepp_logan;

    #[test]
    fn raw_round_trip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.raw");
        let mut img = ImageGrid::from_fn_2d(5, 7, |i, j| (i as f64).sin() * 1e-3 + j as f64 / 7.0).unwrap();
        img.set_source_range(Some((-3.0, 12.5)));
        save_image(&img, &path, ImageFormat::RawF64).unwrap();
        let back = load_image(&path, ImageFormat::RawF64).unwrap();
        assert_eq!(back, img);
        assert!(back.values().iter().zip(img.values()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn quantized_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let img = shepp_logan(32).unwrap();
        let ramp = ImageGrid::from_fn_2d(9, 13, |i, j| (i * 13 + j) as f64 / 117.0).unwrap();
        for fmt in [ImageFormat::Pgm, ImageFormat::Png] {
            for (k, src) in [&img, &ramp].into_iter().enumerate() {
                let path = dir.path().join(format!("img{k}.{fmt:?}"));
                save_image(src, &path, fmt).unwrap();
                let back = load_image(&path, fmt).unwrap();
                assert_eq!(back.shape(), src.shape());
                let err = back.values().iter().zip(src.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                assert!(err <= 1.0 / (2.0 * 65535.0) + 1e-15, "{fmt:?}: {err}");
            }
        }
    }

    #[test]
    fn quantized_formats_record_scale_outside_unit_range() {
        let dir = tempfile::tempdir().unwrap();
        let img = ImageGrid::from_fn_2d(4, 4, |i, j| i as f64 * 10.0 - j as f64).unwrap();
        for fmt in [ImageFormat::Pgm, ImageFormat::Png] {
            let path = dir.path().join(format!("wide.{fmt:?}"));
            save_image(&img, &path, fmt).unwrap();
            let back = load_image(&path, fmt).unwrap();
            let (lo, hi) = img.min_max();
            let tol = (hi - lo) / (2.0 * 65535.0) + 1e-12;
            for (a, b) in back.values().iter().zip(img.values()) {
                assert!((a - b).abs() <= tol);
            }
        }
    }

    #[test]
    fn truncated_files_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let img = shepp_logan(16).unwrap();
        for fmt in [ImageFormat::RawF64, ImageFormat::Pgm, ImageFormat::Png] {
            let path = dir.path().join(format!("t.{fmt:?}"));
            save_image(&img, &path, fmt).unwrap();
            let bytes = fs::read(&path).unwrap();
            fs::write(&path, &bytes[..bytes.len() - 11]).unwrap();
            let err = load_image(&path, fmt).unwrap_err();
            assert!(matches!(err, Error::Parse { .. }), "{fmt:?}: {err}");
        }
        let path = dir.path().join("t.Pgm");
        fs::write(&path, b"P5\n4 x\n65535\n").unwrap();
        assert!(matches!(load_image(&path, ImageFormat::Pgm), Err(Error::Parse { offset: 5, .. })));
    }

    #[test]
    fn raw_truncation_reports_offset() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.raw");
        save_image(&ImageGrid::zeros(vec![4, 4]).unwrap(), &path, ImageFormat::RawF64).unwrap();
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..100]).unwrap();
        match load_image(&path, ImageFormat::RawF64) {
            Err(Error::Parse { offset, .. }) => assert_eq!(offset, 96),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn measurement_containers_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let img = shepp_logan(16).unwrap();
        let mut noisy = SamplingSpec::mri(5);
        noisy.noise_sigma = 0.01;
        for spec in [SamplingSpec::ct(6), noisy] {
            let m = simulate(&img, &spec).unwrap();
            let path = dir.path().join("m.bin");
            save_measurements(&m, &path).unwrap();
            assert_eq!(load_measurements(&path).unwrap(), m);

            let bytes = fs::read(&path).unwrap();
            fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
            assert!(matches!(load_measurements(&path), Err(Error::Parse { .. })));
        }
    }

    #[test]
    fn bad_magic() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.bin");
        fs::write(&path, b"NOTNERP!\0\0\0\0\0\0\0\0").unwrap();
        assert!(matches!(read_container(&path), Err(Error::Parse { offset: 0, .. })));
    }
}
