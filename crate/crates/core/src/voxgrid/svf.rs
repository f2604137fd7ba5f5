//! SVF volume files: a JSON header next to a little-endian raw payload.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::orientation::Orientation;
use super::volume::{Geometry, Volume, Voxel, VoxelVolume};
use crate::error::{Error, Result};

pub const SVF_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SvfHeader {
    svf_version: u32,
    shape: [usize; 3],
    spacing: [f64; 3],
    origin: [f64; 3],
    orientation: String,
    dtype: String,
    data: String,
}

fn header_error(path: &Path, reason: impl Into<String>) -> Error {
    Error::Header {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

/// Raw payload path written next to `header`.
pub fn raw_path_for(header: &Path) -> PathBuf {
    let raw = header.with_extension("raw");
    if raw == header {
        let mut s = header.as_os_str().to_owned();
        s.push(".raw");
        PathBuf::from(s)
    } else {
        raw
    }
}

pub fn read_volume(path: impl AsRef<Path>) -> Result<VoxelVolume> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let header: SvfHeader =
        serde_json::from_str(&text).map_err(|e| header_error(path, e.to_string()))?;
    if header.svf_version != SVF_VERSION {
        return Err(header_error(
            path,
            format!("unsupported svf_version {}", header.svf_version),
        ));
    }
    let orientation: Orientation = header
        .orientation
        .parse()
        .map_err(|e: Error| header_error(path, e.to_string()))?;
    let geometry = Geometry {
        shape: header.shape,
        spacing: header.spacing,
        origin: header.origin,
        orientation,
    };
    geometry
        .validate()
        .map_err(|e| header_error(path, e.to_string()))?;
    let elem_size = match header.dtype.as_str() {
        "f32" => 4,
        "i16" => 2,
        "u8" => 1,
        other => return Err(header_error(path, format!("unknown dtype {other:?}"))),
    };

    let raw_path = path
        .parent()
        .unwrap_or_else(|| Path::new(""))
        .join(&header.data);
    let bytes = fs::read(&raw_path).map_err(|e| Error::io(&raw_path, e))?;
    let expected = geometry
        .voxel_count()
        .checked_mul(elem_size)
        .ok_or_else(|| header_error(path, "shape overflows"))?;
    if bytes.len() != expected {
        return Err(Error::SizeMismatch(format!(
            "{} holds {} bytes, header shape {:?} x {} needs {}",
            raw_path.display(),
            bytes.len(),
            geometry.shape,
            header.dtype,
            expected
        )));
    }
    Ok(match elem_size {
        4 => VoxelVolume::F32(decode(geometry, &bytes)?),
        2 => VoxelVolume::I16(decode(geometry, &bytes)?),
        _ => VoxelVolume::U8(decode(geometry, &bytes)?),
    })
}

fn decode<T: Voxel>(geometry: Geometry, bytes: &[u8]) -> Result<Volume<T>> {
    let data = bytes.chunks_exact(T::SIZE).map(T::read_le).collect();
    Volume::new(geometry, data)
}

/// Write `path` (JSON header) and its raw payload (see [`raw_path_for`]).
pub fn write_volume<T: Voxel>(volume: &Volume<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let raw_path = raw_path_for(path);
    let raw_name = raw_path
        .file_name()
        .ok_or_else(|| Error::InvalidArgument(format!("bad output path {}", path.display())))?
        .to_string_lossy()
        .into_owned();
    let g = volume.geometry();
    let header = SvfHeader {
        svf_version: SVF_VERSION,
        shape: g.shape,
        spacing: g.spacing,
        origin: g.origin,
        orientation: g.orientation.to_string(),
        dtype: T::DTYPE.to_string(),
        data: raw_name,
    };

    let mut bytes = Vec::with_capacity(volume.data().len() * T::SIZE);
    for &v in volume.data() {
        v.write_le(&mut bytes);
    }
    fs::write(&raw_path, &bytes).map_err(|e| Error::io(&raw_path, e))?;
    let text = serde_json::to_string_pretty(&header).expect("header serializes");
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn write_any(volume: &VoxelVolume, path: impl AsRef<Path>) -> Result<()> {
    match volume {
        VoxelVolume::F32(v) => write_volume(v, path),
        VoxelVolume::I16(v) => write_volume(v, path),
        VoxelVolume::U8(v) => write_volume(v, path),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_raw(dir: &Path, header: &str, raw: &[u8]) -> PathBuf {
        let p = dir.join("v.json");
        fs::write(&p, header).unwrap();
        fs::write(dir.join("v.raw"), raw).unwrap();
        p
    }

    const HEADER_222: &str = r#"{"svf_version":1,"shape":[2,2,2],"spacing":[1,1,1],
        "origin":[0,0,0],"orientation":"LPI","dtype":"f32","data":"v.raw"}"#;

    #[test]
    fn reads_eight_f32_voxels() {
        let dir = tempfile::tempdir().unwrap();
        let raw: Vec<u8> = (0..8u32).flat_map(|i| (i as f32).to_le_bytes()).collect();
        let p = write_raw(dir.path(), HEADER_222, &raw);
        match read_volume(&p).unwrap() {
            VoxelVolume::F32(v) => {
                assert_eq!(v.data().len(), 8);
                assert_eq!(v.get(1, 0, 1), 5.0);
            }
            other => panic!("wrong dtype {}", other.dtype()),
        }
    }

    #[test]
    fn short_raw_is_size_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_raw(dir.path(), HEADER_222, &[0u8; 31]);
        let err = read_volume(&p).unwrap_err();
        assert!(matches!(err, Error::SizeMismatch(_)));
        assert!(err.to_string().contains("size mismatch"));
    }

    #[test]
    fn header_errors() {
        let dir = tempfile::tempdir().unwrap();
        let cases = [
            HEADER_222.replace("f32", "f64"),
            HEADER_222.replace("\"spacing\":[1,1,1]", "\"spacing\":[1,0,1]"),
            HEADER_222.replace("LPI", "LPL"),
            HEADER_222.replace("\"svf_version\":1", "\"svf_version\":2"),
            "{not json".to_string(),
        ];
        for h in cases {
            let p = write_raw(dir.path(), &h, &[0u8; 32]);
            assert!(
                matches!(read_volume(&p), Err(Error::Header { .. })),
                "accepted {h}"
            );
        }
        assert!(matches!(
            read_volume(dir.path().join("missing.json")),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn f32_special_values_survive_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let vals = [-0.0f32, f32::NAN, f32::from_bits(0x7fc0_1234), f32::INFINITY];
        let v = Volume::new(Geometry::new([1, 2, 2], [0.5; 3]), vals.to_vec()).unwrap();
        let p = dir.path().join("special.json");
        write_volume(&v, &p).unwrap();
        let VoxelVolume::F32(back) = read_volume(&p).unwrap() else {
            panic!("dtype changed")
        };
        let bits = |s: &[f32]| s.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(back.data()), bits(&vals));
    }

    #[test]
    fn raw_size_for_160_cube() {
        let dir = tempfile::tempdir().unwrap();
        let v = Volume::<f32>::filled(Geometry::new([160; 3], [1.0; 3]), 1.0).unwrap();
        let p = dir.path().join("big.json");
        write_volume(&v, &p).unwrap();
        assert_eq!(fs::metadata(raw_path_for(&p)).unwrap().len(), 16_384_000);
    }

    #[test]
    fn label_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let g = Geometry::new([2, 3, 2], [1.0, 1.5, 2.0]).with_orientation("RAS".parse().unwrap());
        let v = Volume::new(g, vec![0u8, 1, 2, 3, 4, 0, 1, 1, 2, 2, 3, 4]).unwrap();
        let p = dir.path().join("mask.json");
        write_volume(&v, &p).unwrap();
        let back = read_volume(&p).unwrap().into_labels().unwrap();
        assert_eq!(back, v);
    }
}
