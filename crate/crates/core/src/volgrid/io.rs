//! Raw + sidecar volume files and series manifests.
//!
//! A volume `<name>` is stored as `<name>.volhdr` (TOML key/value header) and
//! `<name>.volraw` (payload). Volume payloads are little-endian IEEE-754
//! binary32, masks are one byte per voxel; both x-fastest, then y, then z.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{DynamicSeries, Grid, LabelMask, VolumeGrid};
use crate::error::{Error, Result};

const VOLUME_FORMAT: &str = "pcatdyn-volume";
const SERIES_FORMAT: &str = "pcatdyn-series";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Kind {
    Volume,
    Mask,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format: String,
    kind: Kind,
    dims: [usize; 3],
    spacing: [f64; 3],
    origin: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    time_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    value_units: Option<String>,
    dtype: String,
    byte_order: String,
    layout: String,
    payload: String,
}

/// `(header, payload)` paths for a volume base name; a trailing `.volhdr` or
/// `.volraw` on `path` is ignored.
pub fn volume_paths(path: &Path) -> (PathBuf, PathBuf) {
    let base = match path.extension().and_then(|e| e.to_str()) {
        Some("volhdr") | Some("volraw") => path.with_extension(""),
        _ => path.to_path_buf(),
    };
    let with = |ext: &str| {
        let mut s: OsString = base.clone().into_os_string();
        s.push(ext);
        PathBuf::from(s)
    };
    (with(".volhdr"), with(".volraw"))
}

fn write_pair(path: &Path, header: Header, payload: &[u8]) -> Result<()> {
    let (hdr_path, raw_path) = volume_paths(path);
    let text = toml::to_string(&header).map_err(|e| Error::format(&hdr_path, e.to_string()))?;
    fs::write(&raw_path, payload).map_err(|e| Error::io(&raw_path, e))?;
    fs::write(&hdr_path, text).map_err(|e| Error::io(&hdr_path, e))?;
    Ok(())
}

fn read_pair(path: &Path, kind: Kind) -> Result<(Header, Vec<u8>)> {
    let (hdr_path, raw_path) = volume_paths(path);
    let text = fs::read_to_string(&hdr_path).map_err(|e| Error::io(&hdr_path, e))?;
    let header: Header = toml::from_str(&text).map_err(|e| Error::format(&hdr_path, e.to_string()))?;
    if header.format != VOLUME_FORMAT {
        return Err(Error::format(&hdr_path, format!("unexpected format tag {:?}", header.format)));
    }
    if header.kind != kind {
        return Err(Error::format(&hdr_path, format!("expected {kind:?} header, found {:?}", header.kind)));
    }
    if header.byte_order != "little" || header.layout != "x-fastest" {
        return Err(Error::format(&hdr_path, "only little-endian x-fastest payloads are supported"));
    }
    let raw_path = if header.payload.is_empty() {
        raw_path
    } else {
        hdr_path.parent().unwrap_or(Path::new(".")).join(&header.payload)
    };
    let bytes = fs::read(&raw_path).map_err(|e| Error::io(&raw_path, e))?;
    Ok((header, bytes))
}

fn payload_name(path: &Path) -> String {
    let (_, raw) = volume_paths(path);
    raw.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}

fn header_for(grid: &Grid, kind: Kind, path: &Path) -> Header {
    let dtype = match kind {
        Kind::Volume => "f32",
        Kind::Mask => "u8",
    };
    Header {
        format: VOLUME_FORMAT.to_string(),
        kind,
        dims: grid.dims,
        spacing: grid.spacing,
        origin: grid.origin,
        time_s: None,
        value_units: None,
        dtype: dtype.to_string(),
        byte_order: "little".to_string(),
        layout: "x-fastest".to_string(),
        payload: payload_name(path),
    }
}

/// Little-endian binary32 payload, x-fastest.
pub fn encode_f32_le(values: &[f32]) -> Vec<u8> {
    let mut out = Vec::with_capacity(values.len() * 4);
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn write_volume(v: &VolumeGrid, path: &Path) -> Result<()> {
    let mut header = header_for(v.grid(), Kind::Volume, path);
    header.time_s = v.time_s();
    header.value_units = Some("HU".to_string());
    write_pair(path, header, &encode_f32_le(v.values()))
}

pub fn read_volume(path: &Path) -> Result<VolumeGrid> {
    let (header, bytes) = read_pair(path, Kind::Volume)?;
    let (hdr_path, _) = volume_paths(path);
    if header.dtype != "f32" {
        return Err(Error::format(&hdr_path, format!("unsupported volume dtype {:?}", header.dtype)));
    }
    let grid = Grid::new(header.dims, header.spacing, header.origin)?;
    if bytes.len() != grid.len() * 4 {
        return Err(Error::format(
            &hdr_path,
            format!("payload is {} bytes, expected {}", bytes.len(), grid.len() * 4),
        ));
    }
    let values = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    VolumeGrid::new(grid, values, header.time_s)
}

pub fn write_mask(m: &LabelMask, path: &Path) -> Result<()> {
    write_pair(path, header_for(m.grid(), Kind::Mask, path), m.labels())
}

pub fn read_mask(path: &Path) -> Result<LabelMask> {
    let (header, bytes) = read_pair(path, Kind::Mask)?;
    let (hdr_path, _) = volume_paths(path);
    if header.dtype != "u8" {
        return Err(Error::format(&hdr_path, format!("unsupported mask dtype {:?}", header.dtype)));
    }
    let grid = Grid::new(header.dims, header.spacing, header.origin)?;
    if bytes.len() != grid.len() {
        return Err(Error::format(
            &hdr_path,
            format!("payload is {} bytes, expected {}", bytes.len(), grid.len()),
        ));
    }
    LabelMask::new(grid, bytes)
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    format: String,
    scan: Vec<ManifestEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestEntry {
    path: String,
    time_s: f64,
}

/// Read a series manifest. Scan paths are relative to the manifest's directory.
pub fn read_series(manifest: &Path) -> Result<DynamicSeries> {
    let text = fs::read_to_string(manifest).map_err(|e| Error::io(manifest, e))?;
    let m: Manifest = toml::from_str(&text).map_err(|e| Error::format(manifest, e.to_string()))?;
    if m.format != SERIES_FORMAT {
        return Err(Error::format(manifest, format!("unexpected format tag {:?}", m.format)));
    }
    if m.scan.is_empty() {
        return Err(Error::format(manifest, "manifest lists no scans"));
    }
    let dir = manifest.parent().unwrap_or(Path::new("."));
    let mut volumes = Vec::with_capacity(m.scan.len());
    let mut times = Vec::with_capacity(m.scan.len());
    for entry in &m.scan {
        volumes.push(read_volume(&dir.join(&entry.path))?);
        times.push(entry.time_s);
    }
    DynamicSeries::new(volumes, times)
}

/// Write every scan as `<stem>_<kk>` next to `manifest` and the manifest itself.
/// Returns all written paths (headers, payloads, manifest).
pub fn write_series(s: &DynamicSeries, manifest: &Path, stem: &str) -> Result<Vec<PathBuf>> {
    let dir = manifest.parent().unwrap_or(Path::new("."));
    let mut written = Vec::new();
    let mut entries = Vec::with_capacity(s.len());
    for (k, v) in s.volumes().iter().enumerate() {
        let name = format!("{stem}_{k:02}");
        let path = dir.join(&name);
        write_volume(v, &path)?;
        let (h, r) = volume_paths(&path);
        written.push(h);
        written.push(r);
        entries.push(ManifestEntry { path: name, time_s: s.times()[k] });
    }
    let m = Manifest { format: SERIES_FORMAT.to_string(), scan: entries };
    let text = toml::to_string(&m).map_err(|e| Error::format(manifest, e.to_string()))?;
    fs::write(manifest, text).map_err(|e| Error::io(manifest, e))?;
    written.push(manifest.to_path_buf());
    Ok(written)
}
