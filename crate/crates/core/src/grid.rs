//! Descriptor grids: the `h x w x d` activation tensor of one image at one
//! scale, its on-disk "DGRD" format and the pre-encoding normalizations.
//!
//! The on-disk layout is, all little-endian:
//!
//! ```text
//! "DGRD" | u32 version (=1) | u32 h | u32 w | u32 d | f32 scale_tag | h*w*d f32 values
//! ```
//!
//! Values are row-major with the channel index varying fastest. Grids are
//! stored in single precision and widened to `f64` on load.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::linalg;

pub const GRID_MAGIC: &[u8; 4] = b"DGRD";
pub const GRID_VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 * 4 + 4;

/// An `h x w` grid of `d`-dimensional descriptors.
#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorGrid {
    h: usize,
    w: usize,
    d: usize,
    values: Vec<f64>,
    scale_tag: f64,
}

impl DescriptorGrid {
    pub fn new(h: usize, w: usize, d: usize, values: Vec<f64>) -> Result<Self> {
        Self::with_scale(h, w, d, values, 1.0)
    }

    pub fn with_scale(h: usize, w: usize, d: usize, values: Vec<f64>, scale_tag: f64) -> Result<Self> {
        ensure!(
            h >= 1 && w >= 1 && d >= 1,
            Validation,
            "grid dimensions must be positive, got {h}x{w}x{d}"
        );
        ensure!(
            values.len() == h * w * d,
            Validation,
            "grid {h}x{w}x{d} needs {} values, got {}",
            h * w * d,
            values.len()
        );
        ensure!(
            values.iter().all(|v| v.is_finite()),
            Validation,
            "grid contains non-finite values"
        );
        ensure!(
            scale_tag.is_finite() && scale_tag > 0.0,
            Validation,
            "scale tag must be a positive finite number, got {scale_tag}"
        );
        Ok(Self {
            h,
            w,
            d,
            values,
            scale_tag,
        })
    }

    pub fn h(&self) -> usize {
        self.h
    }

    pub fn w(&self) -> usize {
        self.w
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// Number of cells, `h * w`.
    pub fn len(&self) -> usize {
        self.h * self.w
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn scale_tag(&self) -> f64 {
        self.scale_tag
    }

    /// Row-major values, channel fastest.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Descriptor of the cell at (`row`, `col`).
    pub fn cell(&self, row: usize, col: usize) -> &[f64] {
        let start = (row * self.w + col) * self.d;
        &self.values[start..start + self.d]
    }

    /// Descriptors in row-major cell order.
    pub fn descriptors(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.values.chunks_exact(self.d)
    }

    /// Same shape and tag, new values.
    fn with_values(&self, values: Vec<f64>) -> Self {
        Self {
            h: self.h,
            w: self.w,
            d: self.d,
            values,
            scale_tag: self.scale_tag,
        }
    }

    /// Multiplies every value by `c`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        let out = self.with_values(self.values.iter().map(|v| v * c).collect());
        ensure!(
            out.values.iter().all(|v| v.is_finite()),
            Validation,
            "scaling by {c} overflowed"
        );
        Ok(out)
    }

    /// Largest singular value of the `T x d` descriptor matrix.
    pub fn spectral_norm(&self) -> Result<f64> {
        linalg::spectral_norm(&self.values, self.len(), self.d)
    }

    pub fn normalize(&self, mode: NormalizationMode) -> Result<Self> {
        match mode {
            NormalizationMode::None => Ok(self.clone()),
            NormalizationMode::L2Vector => {
                let mut values = self.values.clone();
                for x in values.chunks_exact_mut(self.d) {
                    let norm = linalg::l2_norm(x);
                    if norm > 0.0 {
                        x.iter_mut().for_each(|v| *v /= norm);
                    }
                }
                Ok(self.with_values(values))
            }
            NormalizationMode::L2Matrix => {
                let norm = self.spectral_norm()?;
                Ok(self.with_values(self.values.iter().map(|v| v / norm).collect()))
            }
        }
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        out.write_all(GRID_MAGIC)?;
        out.write_u32::<LittleEndian>(GRID_VERSION)?;
        for dim in [self.h, self.w, self.d] {
            out.write_u32::<LittleEndian>(dim as u32)?;
        }
        out.write_f32::<LittleEndian>(self.scale_tag as f32)?;
        for &v in &self.values {
            out.write_f32::<LittleEndian>(v as f32)?;
        }
        out.flush()
    }

    /// Parses a complete DGRD byte stream.
    pub fn read_from<R: Read>(mut input: R) -> Result<Self> {
        let mut bytes = Vec::new();
        input
            .read_to_end(&mut bytes)
            .map_err(|e| Error::Format(format!("cannot read grid: {e}")))?;
        Self::from_bytes(&bytes)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        ensure!(
            bytes.len() >= HEADER_LEN,
            Format,
            "grid file is {} bytes, shorter than the {HEADER_LEN}-byte header",
            bytes.len()
        );
        ensure!(&bytes[..4] == GRID_MAGIC, Format, "bad magic {:?}", &bytes[..4]);
        let mut header = &bytes[4..HEADER_LEN];
        let version = header.read_u32::<LittleEndian>().unwrap();
        ensure!(version == GRID_VERSION, Format, "unsupported grid version {version}");
        let h = header.read_u32::<LittleEndian>().unwrap() as usize;
        let w = header.read_u32::<LittleEndian>().unwrap() as usize;
        let d = header.read_u32::<LittleEndian>().unwrap() as usize;
        let scale_tag = header.read_f32::<LittleEndian>().unwrap() as f64;

        let declared = (h as u128) * (w as u128) * (d as u128) * 4;
        let payload = &bytes[HEADER_LEN..];
        ensure!(
            declared == payload.len() as u128,
            Corruption,
            "header declares {h}x{w}x{d} values ({declared} bytes) but payload holds {} bytes",
            payload.len()
        );
        let values: Vec<f64> = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        // Absent tags are written as zero by some producers.
        let scale_tag = if scale_tag == 0.0 { 1.0 } else { scale_tag };
        Self::with_scale(h, w, d, values, scale_tag)
    }
}

pub fn load_grid(path: impl AsRef<Path>) -> Result<DescriptorGrid> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    DescriptorGrid::read_from(BufReader::new(file)).map_err(|e| match e {
        Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
        Error::Corruption(msg) => Error::Corruption(format!("{}: {msg}", path.display())),
        Error::Validation(msg) => Error::Validation(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn save_grid(grid: &DescriptorGrid, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    grid.write_to(BufWriter::new(file))
        .map_err(|e| Error::io(path, e))
}

/// How descriptors are rescaled before encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalizationMode {
    /// Leave activations untouched.
    None,
    /// Divide each descriptor by its own l2 norm (zero descriptors stay zero).
    L2Vector,
    /// Divide every descriptor by the spectral norm of the whole grid.
    #[default]
    L2Matrix,
}

impl FromStr for NormalizationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "none" | "null" => Ok(Self::None),
            "l2_vector" | "vector" => Ok(Self::L2Vector),
            "l2_matrix" | "matrix" => Ok(Self::L2Matrix),
            other => Err(Error::Validation(format!("unknown normalization mode '{other}'"))),
        }
    }
}

impl std::fmt::Display for NormalizationMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::None => "none",
            Self::L2Vector => "l2_vector",
            Self::L2Matrix => "l2_matrix",
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(h: usize, w: usize, d: usize, values: &[f64]) -> DescriptorGrid {
        DescriptorGrid::new(h, w, d, values.to_vec()).unwrap()
    }

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn rejects_bad_shapes_and_values() {
        assert!(DescriptorGrid::new(0, 1, 1, vec![]).is_err());
        assert!(DescriptorGrid::new(1, 1, 2, vec![1.0]).is_err());
        assert!(DescriptorGrid::new(1, 1, 1, vec![f64::NAN]).is_err());
        assert!(DescriptorGrid::new(1, 1, 1, vec![f64::INFINITY]).is_err());
    }

    #[test]
    fn smallest_grid_round_trips_through_bytes() {
        let g = grid(1, 1, 3, &[1.0, 2.0, 3.0]);
        let mut bytes = Vec::new();
        g.write_to(&mut bytes).unwrap();
        assert_eq!(bytes.len(), HEADER_LEN + 12);
        let back = DescriptorGrid::from_bytes(&bytes).unwrap();
        assert_eq!(back.len(), 1);
        assert_eq!(back.cell(0, 0), &[1.0, 2.0, 3.0]);
        assert_eq!(back.scale_tag(), 1.0);
    }

    #[test]
    fn header_payload_mismatch_is_corruption() {
        let g = grid(1, 1, 3, &[1.0, 2.0, 3.0]);
        let mut bytes = Vec::new();
        g.write_to(&mut bytes).unwrap();
        bytes.truncate(bytes.len() - 4);
        assert!(matches!(DescriptorGrid::from_bytes(&bytes), Err(Error::Corruption(_))));
        bytes.extend_from_slice(&[0; 8]);
        assert!(matches!(DescriptorGrid::from_bytes(&bytes), Err(Error::Corruption(_))));
    }

    #[test]
    fn bad_magic_and_version_are_format_errors() {
        let g = grid(1, 1, 1, &[1.0]);
        let mut bytes = Vec::new();
        g.write_to(&mut bytes).unwrap();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(DescriptorGrid::from_bytes(&bad), Err(Error::Format(_))));
        let mut bad = bytes.clone();
        bad[4] = 2;
        assert!(matches!(DescriptorGrid::from_bytes(&bad), Err(Error::Format(_))));
        assert!(matches!(DescriptorGrid::from_bytes(&bytes[..10]), Err(Error::Format(_))));
    }

    #[test]
    fn non_finite_payload_is_validation_error() {
        let g = grid(1, 1, 2, &[1.0, 2.0]);
        let mut bytes = Vec::new();
        g.write_to(&mut bytes).unwrap();
        let n = bytes.len();
        bytes[n - 4..].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(matches!(DescriptorGrid::from_bytes(&bytes), Err(Error::Validation(_))));
    }

    #[test]
    fn l2_vector_normalizes_each_descriptor() {
        let g = grid(1, 2, 2, &[3.0, 4.0, 0.0, 0.0]);
        let n = g.normalize(NormalizationMode::L2Vector).unwrap();
        assert!(close(n.values(), &[0.6, 0.8, 0.0, 0.0], 1e-15));
    }

    #[test]
    fn l2_matrix_divides_by_spectral_norm() {
        let g = grid(1, 2, 2, &[3.0, 0.0, 0.0, 4.0]);
        assert!((g.spectral_norm().unwrap() - 4.0).abs() < 1e-12);
        let n = g.normalize(NormalizationMode::L2Matrix).unwrap();
        assert!(close(n.values(), &[0.75, 0.0, 0.0, 1.0], 1e-12));
    }

    #[test]
    fn l2_matrix_ignores_global_scale() {
        let g = grid(2, 2, 3, &[1.0, 2.0, 0.5, 0.0, 3.0, 1.0, 2.0, 2.0, 1.0, 0.1, 0.0, 4.0]);
        let a = g.normalize(NormalizationMode::L2Matrix).unwrap();
        let b = g.scaled(10.0).unwrap().normalize(NormalizationMode::L2Matrix).unwrap();
        assert!(close(a.values(), b.values(), 1e-12));
    }

    #[test]
    fn l2_matrix_on_zero_grid_is_degenerate() {
        let g = grid(1, 2, 2, &[0.0; 4]);
        assert!(matches!(
            g.normalize(NormalizationMode::L2Matrix),
            Err(Error::DegenerateInput(_))
        ));
        // The other modes are total.
        assert_eq!(g.normalize(NormalizationMode::None).unwrap(), g);
        assert_eq!(g.normalize(NormalizationMode::L2Vector).unwrap(), g);
    }

    #[test]
    fn parses_mode_names() {
        assert_eq!("l2-matrix".parse::<NormalizationMode>().unwrap(), NormalizationMode::L2Matrix);
        assert_eq!("L2_VECTOR".parse::<NormalizationMode>().unwrap(), NormalizationMode::L2Vector);
        assert_eq!("none".parse::<NormalizationMode>().unwrap(), NormalizationMode::None);
        assert!("pca".parse::<NormalizationMode>().is_err());
    }

    #[test]
    fn save_overwrites_and_reports_unwritable_paths() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.dgrd");
        save_grid(&grid(1, 1, 1, &[1.0]), &path).unwrap();
        save_grid(&grid(1, 1, 2, &[5.0, 6.0]), &path).unwrap();
        assert_eq!(load_grid(&path).unwrap().values(), &[5.0, 6.0]);

        let bad = dir.path().join("missing").join("g.dgrd");
        let err = save_grid(&grid(1, 1, 1, &[1.0]), &bad).unwrap_err();
        match err {
            Error::Io { path, .. } => assert_eq!(path, bad),
            other => panic!("expected I/O error, got {other:?}"),
        }
    }
}
