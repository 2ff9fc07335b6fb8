//! JSON container for mode-field grids with base64-packed little-endian arrays.

use std::io::{Read, Write};

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::grid::ModeFieldGrid;
use crate::error::{Error, Result};

pub const FORMAT_NAME: &str = "ringlock-mode-field";
pub const FORMAT_VERSION: u32 = 1;

/// Storage precision of the complex field arrays.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ComplexDtype {
    Complex64,
    Complex128,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModeFieldFile {
    format: String,
    version: u32,
    units: String,
    nr: usize,
    nz: usize,
    dtype: ComplexDtype,
    r_axis: String,
    z_axis: String,
    e_r: String,
    e_phi: String,
    e_z: String,
    core_mask: String,
    permittivity: String,
}

fn pack_f64(v: &[f64]) -> String {
    let bytes: Vec<u8> = v.iter().flat_map(|x| x.to_le_bytes()).collect();
    B64.encode(bytes)
}

fn pack_complex(v: &[Complex64], dtype: ComplexDtype) -> String {
    let bytes: Vec<u8> = match dtype {
        ComplexDtype::Complex128 => v
            .iter()
            .flat_map(|c| c.re.to_le_bytes().into_iter().chain(c.im.to_le_bytes()))
            .collect(),
        ComplexDtype::Complex64 => v
            .iter()
            .flat_map(|c| {
                (c.re as f32)
                    .to_le_bytes()
                    .into_iter()
                    .chain((c.im as f32).to_le_bytes())
            })
            .collect(),
    };
    B64.encode(bytes)
}

fn decode(field: &str, s: &str, expected_bytes: usize) -> Result<Vec<u8>> {
    let bytes = B64
        .decode(s)
        .map_err(|e| Error::Io(format!("{field}: bad base64: {e}")))?;
    if bytes.len() != expected_bytes {
        return Err(Error::Io(format!(
            "{field}: expected {expected_bytes} bytes, got {}",
            bytes.len()
        )));
    }
    Ok(bytes)
}

fn unpack_f64(field: &str, s: &str, n: usize) -> Result<Vec<f64>> {
    let bytes = decode(field, s, n * 8)?;
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

fn unpack_complex(field: &str, s: &str, n: usize, dtype: ComplexDtype) -> Result<Vec<Complex64>> {
    Ok(match dtype {
        ComplexDtype::Complex128 => decode(field, s, n * 16)?
            .chunks_exact(16)
            .map(|c| {
                Complex64::new(
                    f64::from_le_bytes(c[..8].try_into().unwrap()),
                    f64::from_le_bytes(c[8..].try_into().unwrap()),
                )
            })
            .collect(),
        ComplexDtype::Complex64 => decode(field, s, n * 8)?
            .chunks_exact(8)
            .map(|c| {
                Complex64::new(
                    f32::from_le_bytes(c[..4].try_into().unwrap()) as f64,
                    f32::from_le_bytes(c[4..].try_into().unwrap()) as f64,
                )
            })
            .collect(),
    })
}

pub fn write_mode_field<W: Write>(g: &ModeFieldGrid, dtype: ComplexDtype, out: W) -> Result<()> {
    let (nr, nz) = g.shape();
    let file = ModeFieldFile {
        format: FORMAT_NAME.into(),
        version: FORMAT_VERSION,
        units: "m".into(),
        nr,
        nz,
        dtype,
        r_axis: pack_f64(g.r_axis()),
        z_axis: pack_f64(g.z_axis()),
        e_r: pack_complex(&g.e_r, dtype),
        e_phi: pack_complex(&g.e_phi, dtype),
        e_z: pack_complex(&g.e_z, dtype),
        core_mask: B64.encode(g.core_mask.iter().map(|&m| m as u8).collect::<Vec<_>>()),
        permittivity: pack_f64(&g.permittivity),
    };
    serde_json::to_writer_pretty(out, &file)?;
    Ok(())
}

pub fn read_mode_field<R: Read>(input: R) -> Result<ModeFieldGrid> {
    let f: ModeFieldFile = serde_json::from_reader(input)?;
    if f.format != FORMAT_NAME {
        return Err(Error::Io(format!("not a mode-field file: format {:?}", f.format)));
    }
    if f.version != FORMAT_VERSION {
        return Err(Error::Io(format!("unsupported mode-field version {}", f.version)));
    }
    if f.units != "m" {
        return Err(Error::Io(format!("unsupported length unit {:?}", f.units)));
    }
    let n =
        f.nr.checked_mul(f.nz)
            .ok_or_else(|| Error::Io("grid too large".into()))?;
    let mask = decode("core_mask", &f.core_mask, n)?;
    if mask.iter().any(|&b| b > 1) {
        return Err(Error::Io("core_mask bytes must be 0 or 1".into()));
    }
    ModeFieldGrid::new(
        unpack_f64("r_axis", &f.r_axis, f.nr)?,
        unpack_f64("z_axis", &f.z_axis, f.nz)?,
        unpack_complex("e_r", &f.e_r, n, f.dtype)?,
        unpack_complex("e_phi", &f.e_phi, n, f.dtype)?,
        unpack_complex("e_z", &f.e_z, n, f.dtype)?,
        mask.into_iter().map(|b| b == 1).collect(),
        unpack_f64("permittivity", &f.permittivity, n)?,
    )
}
