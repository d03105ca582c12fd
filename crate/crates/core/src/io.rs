//! Binary grid files and PGM import/export.
//!
//! Real grids: magic `GRDIMG01`, height and width as little-endian `u64`,
//! then `f64` pixels row-major. Complex grids use magic `GRDCPX01` with
//! interleaved real and imaginary parts.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Result, UqError};
use crate::image::{ComplexGrid, Image};

const MAGIC_REAL: &[u8; 8] = b"GRDIMG01";
const MAGIC_COMPLEX: &[u8; 8] = b"GRDCPX01";

fn format_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(UqError::Format(msg.into()))
}

fn write_header<W: Write>(out: &mut W, magic: &[u8; 8], h: usize, w: usize) -> Result<()> {
    out.write_all(magic)?;
    out.write_all(&(h as u64).to_le_bytes())?;
    out.write_all(&(w as u64).to_le_bytes())?;
    Ok(())
}

fn read_header<'a>(bytes: &'a [u8], magic: &[u8; 8], per_pixel: usize) -> Result<(usize, usize, &'a [u8])> {
    if bytes.len() < 24 {
        return format_err("grid file shorter than its header");
    }
    if &bytes[..8] != magic {
        return format_err(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&bytes[..8]),
            String::from_utf8_lossy(magic)
        ));
    }
    let h = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let w = u64::from_le_bytes(bytes[16..24].try_into().expect("8 bytes")) as usize;
    let expect = h
        .checked_mul(w)
        .and_then(|n| n.checked_mul(8 * per_pixel))
        .ok_or_else(|| UqError::Format("grid dimensions overflow".into()))?;
    let body = &bytes[24..];
    if h == 0 || w == 0 || body.len() != expect {
        return format_err(format!("{h}x{w} grid needs {expect} payload bytes, found {}", body.len()));
    }
    Ok((h, w, body))
}

fn f64s(body: &[u8]) -> Vec<f64> {
    body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect()
}

pub fn write_grd_to<W: Write>(img: &Image<f64>, mut out: W) -> Result<()> {
    write_header(&mut out, MAGIC_REAL, img.height(), img.width())?;
    let mut buf = Vec::with_capacity(img.len() * 8);
    for v in img.data() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    out.write_all(&buf)?;
    Ok(())
}

pub fn read_grd_from<R: Read>(mut input: R) -> Result<Image<f64>> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    let (h, w, body) = read_header(&bytes, MAGIC_REAL, 1)?;
    Image::new(h, w, f64s(body)).map_err(|e| UqError::Format(e.to_string()))
}

pub fn write_grd(img: &Image<f64>, path: impl AsRef<Path>) -> Result<()> {
    let mut buf = Vec::new();
    write_grd_to(img, &mut buf)?;
    fs::write(path, buf)?;
    Ok(())
}

pub fn read_grd(path: impl AsRef<Path>) -> Result<Image<f64>> {
    read_grd_from(fs::File::open(path)?)
}

pub fn write_complex_grd(grid: &ComplexGrid<f64>, path: impl AsRef<Path>) -> Result<()> {
    let mut buf = Vec::with_capacity(24 + grid.len() * 16);
    write_header(&mut buf, MAGIC_COMPLEX, grid.height(), grid.width())?;
    for z in grid.data() {
        buf.extend_from_slice(&z.re.to_le_bytes());
        buf.extend_from_slice(&z.im.to_le_bytes());
    }
    fs::write(path, buf)?;
    Ok(())
}

pub fn read_complex_grd(path: impl AsRef<Path>) -> Result<ComplexGrid<f64>> {
    let bytes = fs::read(path)?;
    let (h, w, body) = read_header(&bytes, MAGIC_COMPLEX, 2)?;
    let vals = f64s(body);
    let data = vals.chunks_exact(2).map(|p| Complex::new(p[0], p[1])).collect();
    ComplexGrid::new(h, w, data).map_err(|e| UqError::Format(e.to_string()))
}

/// Which grid flavour a file holds, judged by its magic.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridKind {
    Real,
    Complex,
}

pub fn sniff_grid(path: impl AsRef<Path>) -> Result<GridKind> {
    let mut head = [0u8; 8];
    fs::File::open(path)?.read_exact(&mut head)?;
    match &head {
        m if m == MAGIC_REAL => Ok(GridKind::Real),
        m if m == MAGIC_COMPLEX => Ok(GridKind::Complex),
        _ => format_err("unrecognized grid file"),
    }
}

/// Linear intensity mapping stored next to a PGM file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PgmScale {
    pub min: f64,
    pub max: f64,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Writes a binary PGM with `bits` ∈ {8, 16}, mapping `[min, max]` of the
/// image to the full grey range, plus a `<file>.json` sidecar.
pub fn write_pgm(img: &Image<f64>, path: impl AsRef<Path>, bits: u8) -> Result<PgmScale> {
    let maxval: u32 = match bits {
        8 => 255,
        16 => 65535,
        _ => return Err(UqError::InvalidInput(format!("PGM depth must be 8 or 16 bits, got {bits}"))),
    };
    let path = path.as_ref();
    let scale = PgmScale { min: img.min(), max: img.max() };
    let span = scale.max - scale.min;
    let mut buf = format!("P5\n{} {}\n{}\n", img.width(), img.height(), maxval).into_bytes();
    for &v in img.data() {
        let t = if span > 0.0 { (v - scale.min) / span } else { 0.0 };
        let q = (t * maxval as f64).round().clamp(0.0, maxval as f64) as u32;
        if bits == 8 {
            buf.push(q as u8);
        } else {
            buf.extend_from_slice(&(q as u16).to_be_bytes());
        }
    }
    fs::write(path, buf)?;
    let side = serde_json::to_string(&scale).map_err(|e| UqError::Format(e.to_string()))?;
    fs::write(sidecar_path(path), side)?;
    Ok(scale)
}

fn next_token(bytes: &[u8], pos: &mut usize) -> Result<String> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if start == *pos {
        return format_err("truncated PGM header");
    }
    Ok(String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
}

fn parse_num(tok: &str) -> Result<usize> {
    tok.parse().map_err(|_| UqError::Format(format!("bad PGM header field {tok:?}")))
}

/// Reads a binary PGM. Grey levels are mapped back through the sidecar when
/// present, else onto `[0, 1]`.
pub fn read_pgm(path: impl AsRef<Path>) -> Result<Image<f64>> {
    let path = path.as_ref();
    let bytes = fs::read(path)?;
    let mut pos = 0;
    if next_token(&bytes, &mut pos)? != "P5" {
        return format_err("only binary PGM (P5) is supported");
    }
    let w = parse_num(&next_token(&bytes, &mut pos)?)?;
    let h = parse_num(&next_token(&bytes, &mut pos)?)?;
    let maxval = parse_num(&next_token(&bytes, &mut pos)?)?;
    if w == 0 || h == 0 || maxval == 0 || maxval > 65535 {
        return format_err(format!("unsupported PGM geometry {w}x{h}, maxval {maxval}"));
    }
    pos += 1; // single whitespace after maxval
    let wide = maxval > 255;
    let need = w * h * if wide { 2 } else { 1 };
    if bytes.len() < pos + need {
        return format_err("PGM payload is truncated");
    }
    let body = &bytes[pos..pos + need];
    let levels: Vec<f64> = if wide {
        body.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]]) as f64).collect()
    } else {
        body.iter().map(|&b| b as f64).collect()
    };
    let scale = match fs::read_to_string(sidecar_path(path)) {
        Ok(text) => serde_json::from_str(&text).map_err(|e| UqError::Format(format!("bad PGM sidecar: {e}")))?,
        Err(_) => PgmScale { min: 0.0, max: 1.0 },
    };
    let span = scale.max - scale.min;
    let data = levels.into_iter().map(|q| scale.min + span * q / maxval as f64).collect();
    Image::new(h, w, data).map_err(|e| UqError::Format(e.to_string()))
}

/// Loads a real image from `.pgm` or GRD by extension.
pub fn read_image(path: impl AsRef<Path>) -> Result<Image<f64>> {
    let path = path.as_ref();
    match path.extension().and_then(|e| e.to_str()) {
        Some(ext) if ext.eq_ignore_ascii_case("pgm") => read_pgm(path),
        _ => read_grd(path),
    }
}
