//! Minimal NIfTI-1 file I/O.
//!
//! Supported surface: single-file uncompressed `.nii`, 348-byte header,
//! magic `n+1\0`, datatypes uint8 (2), int16 (4) and float32 (16),
//! `dim[0]` of 3 or 4. Input endianness is detected via the `dim[0]`
//! in-[1,7] sanity rule; `scl_slope`/`scl_inter` are honored on read when
//! the slope is nonzero. Output is always little-endian with
//! `vox_offset = 352` (348-byte header plus a 4-byte zero extension flag).
//! No NIfTI-2, no compressed streams, no orientation handling beyond
//! per-axis spacing.

use std::io;
use std::path::Path;

use crate::error::{Error, Result};
use crate::fsutil::write_atomic;

use super::{LabelVolume, Volume};

const HEADER_LEN: usize = 348;
const MIN_VOX_OFFSET: f64 = 352.0;
const MAGIC: &[u8; 4] = b"n+1\0";

const DT_UINT8: i16 = 2;
const DT_INT16: i16 = 4;
const DT_FLOAT32: i16 = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Endian {
    Little,
    Big,
}

fn get_i16(b: &[u8], off: usize, e: Endian) -> i16 {
    let raw = [b[off], b[off + 1]];
    match e {
        Endian::Little => i16::from_le_bytes(raw),
        Endian::Big => i16::from_be_bytes(raw),
    }
}

fn get_i32(b: &[u8], off: usize, e: Endian) -> i32 {
    let raw = [b[off], b[off + 1], b[off + 2], b[off + 3]];
    match e {
        Endian::Little => i32::from_le_bytes(raw),
        Endian::Big => i32::from_be_bytes(raw),
    }
}

fn get_f32(b: &[u8], off: usize, e: Endian) -> f32 {
    let raw = [b[off], b[off + 1], b[off + 2], b[off + 3]];
    match e {
        Endian::Little => f32::from_le_bytes(raw),
        Endian::Big => f32::from_be_bytes(raw),
    }
}

struct Header {
    endian: Endian,
    /// Spatial dims from dim[1..=3].
    dims: [usize; 3],
    /// Extent of the 4th dimension (1 when dim[0] == 3).
    dim4: usize,
    datatype: i16,
    spacing: [f32; 3],
    vox_offset: usize,
    scl_slope: f32,
    scl_inter: f32,
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::format(format!(
            "file too short for a NIfTI-1 header: {} bytes",
            bytes.len()
        )));
    }

    // dim[0] must land in [1,7] in exactly the byte order the file uses.
    let endian = if (1..=7).contains(&get_i16(bytes, 40, Endian::Little)) {
        Endian::Little
    } else if (1..=7).contains(&get_i16(bytes, 40, Endian::Big)) {
        Endian::Big
    } else {
        return Err(Error::format(
            "cannot determine endianness: dim[0] outside [1,7] in both byte orders",
        ));
    };

    if &bytes[344..348] != MAGIC {
        return Err(Error::format(format!(
            "bad magic {:?}, expected \"n+1\\0\" (detached or non-NIfTI-1 files are unsupported)",
            &bytes[344..348]
        )));
    }
    let sizeof_hdr = get_i32(bytes, 0, endian);
    if sizeof_hdr != HEADER_LEN as i32 {
        return Err(Error::format(format!(
            "sizeof_hdr is {sizeof_hdr}, expected 348"
        )));
    }

    let datatype = get_i16(bytes, 70, endian);
    if ![DT_UINT8, DT_INT16, DT_FLOAT32].contains(&datatype) {
        return Err(Error::format(format!("unsupported datatype {datatype}")));
    }

    let ndim = get_i16(bytes, 40, endian);
    if ndim != 3 && ndim != 4 {
        return Err(Error::format(format!("dim[0] is {ndim}, expected 3 or 4")));
    }
    let mut dims = [0usize; 3];
    for (i, d) in dims.iter_mut().enumerate() {
        let v = get_i16(bytes, 40 + 2 * (i + 1), endian);
        if v <= 0 {
            return Err(Error::format(format!("dim[{}] is {v}, must be > 0", i + 1)));
        }
        *d = v as usize;
    }
    let dim4 = if ndim == 4 {
        let v = get_i16(bytes, 48, endian);
        if v <= 0 {
            return Err(Error::format(format!("dim[4] is {v}, must be > 0")));
        }
        v as usize
    } else {
        1
    };

    let mut spacing = [1.0f32; 3];
    for (i, s) in spacing.iter_mut().enumerate() {
        let v = get_f32(bytes, 76 + 4 * (i + 1), endian);
        if !v.is_finite() || v < 0.0 {
            return Err(Error::format(format!("pixdim[{}] is {v}", i + 1)));
        }
        // 0 means "unset" in the wild; fall back to 1 mm.
        *s = if v == 0.0 { 1.0 } else { v };
    }

    let vox_offset = get_f32(bytes, 108, endian) as f64;
    if !vox_offset.is_finite() || vox_offset < MIN_VOX_OFFSET || vox_offset.fract() != 0.0 {
        return Err(Error::format(format!(
            "vox_offset {vox_offset} invalid, expected an integer >= 352"
        )));
    }

    Ok(Header {
        endian,
        dims,
        dim4,
        datatype,
        spacing,
        vox_offset: vox_offset as usize,
        scl_slope: get_f32(bytes, 112, endian),
        scl_inter: get_f32(bytes, 116, endian),
    })
}

fn elem_size(datatype: i16) -> usize {
    match datatype {
        DT_UINT8 => 1,
        DT_INT16 => 2,
        DT_FLOAT32 => 4,
        _ => unreachable!("datatype validated in parse_header"),
    }
}

fn load(path: &Path) -> Result<(Header, Vec<u8>)> {
    let bytes = std::fs::read(path)?;
    let header = parse_header(&bytes)?;
    let nvals = header.dims[0]
        .checked_mul(header.dims[1])
        .and_then(|v| v.checked_mul(header.dims[2]))
        .and_then(|v| v.checked_mul(header.dim4))
        .ok_or_else(|| Error::format("volume dimensions overflow"))?;
    let need = header.vox_offset + nvals * elem_size(header.datatype);
    if bytes.len() < need {
        return Err(Error::Io(io::Error::new(
            io::ErrorKind::UnexpectedEof,
            format!(
                "truncated payload: need {need} bytes, file has {}",
                bytes.len()
            ),
        )));
    }
    let payload = bytes[header.vox_offset..need].to_vec();
    Ok((header, payload))
}

/// Decode the payload to f64 with scl scaling applied when slope != 0.
fn decode_scaled(header: &Header, payload: &[u8]) -> Vec<f64> {
    let raw: Vec<f64> = match header.datatype {
        DT_UINT8 => payload.iter().map(|&v| v as f64).collect(),
        DT_INT16 => payload
            .chunks_exact(2)
            .map(|c| get_i16(c, 0, header.endian) as f64)
            .collect(),
        DT_FLOAT32 => payload
            .chunks_exact(4)
            .map(|c| get_f32(c, 0, header.endian) as f64)
            .collect(),
        _ => unreachable!(),
    };
    let slope = header.scl_slope;
    if slope != 0.0 && slope.is_finite() {
        let inter = header.scl_inter as f64;
        let slope = slope as f64;
        raw.iter().map(|&v| v * slope + inter).collect()
    } else {
        raw
    }
}

fn require_3d(header: &Header) -> Result<()> {
    if header.dim4 != 1 {
        return Err(Error::format(format!(
            "4th dimension has extent {}, expected 1",
            header.dim4
        )));
    }
    Ok(())
}

/// Read a scalar volume; uint8/int16 payloads are promoted to f32.
pub fn read_volume(path: impl AsRef<Path>) -> Result<Volume> {
    let (header, payload) = load(path.as_ref())?;
    require_3d(&header)?;
    let data: Vec<f32> = decode_scaled(&header, &payload)
        .into_iter()
        .map(|v| v as f32)
        .collect();
    Volume::new(header.dims, header.spacing, data)
}

/// Read a label volume, validating the {0, 1, 2, 4} alphabet.
pub fn read_labels(path: impl AsRef<Path>) -> Result<LabelVolume> {
    let (header, payload) = load(path.as_ref())?;
    require_3d(&header)?;
    let mut data = Vec::with_capacity(payload.len() / elem_size(header.datatype));
    for v in decode_scaled(&header, &payload) {
        let ok = v == 0.0 || v == 1.0 || v == 2.0 || v == 4.0;
        if !ok {
            return Err(Error::format(format!(
                "label value {v} outside alphabet {{0, 1, 2, 4}}"
            )));
        }
        data.push(v as u8);
    }
    LabelVolume::new(header.dims, header.spacing, data)
}

/// (dims, spacing, channels, channel-fastest data) of a 4D uint8 stack.
pub type RawStack = ([usize; 3], [f32; 3], usize, Vec<u8>);

/// Read a 4D uint8 stack; returns the payload transposed to the
/// in-memory channel-fastest layout.
pub fn read_stack_raw(path: impl AsRef<Path>) -> Result<RawStack> {
    let (header, payload) = load(path.as_ref())?;
    if header.dim4 < 2 {
        return Err(Error::format(format!(
            "expected a 4D stack, got dim[4] = {}",
            header.dim4
        )));
    }
    if header.datatype != DT_UINT8 {
        return Err(Error::format(format!(
            "stack datatype {} is not uint8",
            header.datatype
        )));
    }
    let n = header.dims[0] * header.dims[1] * header.dims[2];
    let channels = header.dim4;
    let mut data = vec![0u8; n * channels];
    for c in 0..channels {
        for voxel in 0..n {
            data[voxel * channels + c] = payload[c * n + voxel];
        }
    }
    Ok((header.dims, header.spacing, channels, data))
}

fn put_i16(buf: &mut [u8], off: usize, v: i16) {
    buf[off..off + 2].copy_from_slice(&v.to_le_bytes());
}

fn put_i32(buf: &mut [u8], off: usize, v: i32) {
    buf[off..off + 4].copy_from_slice(&v.to_le_bytes());
}

fn put_f32(buf: &mut [u8], off: usize, v: f32) {
    buf[off..off + 4].copy_from_slice(&v.to_le_bytes());
}

fn build_header(
    dims: [usize; 3],
    spacing: [f32; 3],
    dim4: Option<usize>,
    datatype: i16,
) -> [u8; HEADER_LEN] {
    let mut h = [0u8; HEADER_LEN];
    put_i32(&mut h, 0, HEADER_LEN as i32);
    h[38] = b'r'; // "regular" flag, conventional
    put_i16(&mut h, 40, if dim4.is_some() { 4 } else { 3 });
    for (i, &d) in dims.iter().enumerate() {
        put_i16(&mut h, 40 + 2 * (i + 1), d as i16);
    }
    put_i16(&mut h, 48, dim4.unwrap_or(1) as i16);
    for off in [50, 52, 54] {
        put_i16(&mut h, off, 1);
    }
    put_i16(&mut h, 70, datatype);
    put_i16(&mut h, 72, 8 * elem_size(datatype) as i16);
    put_f32(&mut h, 76, 1.0); // qfac
    for (i, &s) in spacing.iter().enumerate() {
        put_f32(&mut h, 76 + 4 * (i + 1), s);
    }
    if dim4.is_some() {
        put_f32(&mut h, 92, 1.0); // pixdim[4]
    }
    put_f32(&mut h, 108, MIN_VOX_OFFSET as f32);
    // scl_slope 0 = no scaling on re-read.
    h[123] = 2; // xyzt_units: NIFTI_UNITS_MM
    h[344..348].copy_from_slice(MAGIC);
    h
}

fn write_file(
    path: &Path,
    dims: [usize; 3],
    spacing: [f32; 3],
    dim4: Option<usize>,
    datatype: i16,
    payload: &[u8],
) -> Result<()> {
    if dims.iter().any(|&d| d > i16::MAX as usize) || dim4.is_some_and(|c| c > i16::MAX as usize) {
        return Err(Error::usage(format!(
            "dims {dims:?} x {dim4:?} exceed the NIfTI-1 i16 dim fields"
        )));
    }
    let header = build_header(dims, spacing, dim4, datatype);
    let mut bytes = Vec::with_capacity(HEADER_LEN + 4 + payload.len());
    bytes.extend_from_slice(&header);
    bytes.extend_from_slice(&[0u8; 4]); // extension flag: none
    bytes.extend_from_slice(payload);
    write_atomic(path, &bytes)?;
    Ok(())
}

/// Write a scalar volume as float32.
pub fn write_volume(vol: &Volume, path: impl AsRef<Path>) -> Result<()> {
    let mut payload = Vec::with_capacity(vol.len() * 4);
    for v in vol.data() {
        payload.extend_from_slice(&v.to_le_bytes());
    }
    write_file(
        path.as_ref(),
        vol.dims(),
        vol.spacing(),
        None,
        DT_FLOAT32,
        &payload,
    )
}

/// Write a label volume as uint8.
pub fn write_labels(labels: &LabelVolume, path: impl AsRef<Path>) -> Result<()> {
    write_file(
        path.as_ref(),
        labels.dims(),
        labels.spacing(),
        None,
        DT_UINT8,
        labels.data(),
    )
}

/// Write an arbitrary uint8 grid (e.g. an edge volume) as a 3D uint8 file.
pub fn write_u8_grid(
    dims: [usize; 3],
    spacing: [f32; 3],
    data: &[u8],
    path: impl AsRef<Path>,
) -> Result<()> {
    if data.len() != dims[0] * dims[1] * dims[2] {
        return Err(Error::usage(format!(
            "data length {} does not match dims {dims:?}",
            data.len()
        )));
    }
    write_file(path.as_ref(), dims, spacing, None, DT_UINT8, data)
}

/// Write a channel-fastest uint8 stack as a 4D uint8 file with
/// dim[0] = 4, dim[4] = channels (file payload is channel-slowest).
pub fn write_stack_raw(
    dims: [usize; 3],
    spacing: [f32; 3],
    channels: usize,
    data: &[u8],
    path: impl AsRef<Path>,
) -> Result<()> {
    let n = dims[0] * dims[1] * dims[2];
    if channels == 0 || data.len() != n * channels {
        return Err(Error::usage(format!(
            "stack data length {} does not match dims {dims:?} x {channels} channels",
            data.len()
        )));
    }
    let mut payload = vec![0u8; data.len()];
    for voxel in 0..n {
        for c in 0..channels {
            payload[c * n + voxel] = data[voxel * channels + c];
        }
    }
    write_file(
        path.as_ref(),
        dims,
        spacing,
        Some(channels),
        DT_UINT8,
        &payload,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw_header(dim: [i16; 8], datatype: i16, magic: &[u8; 4]) -> Vec<u8> {
        let mut h = vec![0u8; HEADER_LEN];
        put_i32(&mut h, 0, 348);
        for (i, &d) in dim.iter().enumerate() {
            put_i16(&mut h, 40 + 2 * i, d);
        }
        put_i16(&mut h, 70, datatype);
        for i in 1..=3 {
            put_f32(&mut h, 76 + 4 * i, 1.0);
        }
        put_f32(&mut h, 108, 352.0);
        h[344..348].copy_from_slice(magic);
        h
    }

    fn with_payload(mut header: Vec<u8>, payload: &[u8]) -> Vec<u8> {
        header.extend_from_slice(&[0u8; 4]);
        header.extend_from_slice(payload);
        header
    }

    fn write_tmp(bytes: &[u8]) -> (tempfile::TempDir, std::path::PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.nii");
        std::fs::write(&path, bytes).unwrap();
        (dir, path)
    }

    #[test]
    fn float32_4x4x4_reads() {
        let header = raw_header([3, 4, 4, 4, 1, 1, 1, 1], DT_FLOAT32, MAGIC);
        let payload = vec![0u8; 256];
        let (_d, path) = write_tmp(&with_payload(header, &payload));
        let vol = read_volume(&path).unwrap();
        assert_eq!(vol.dims(), [4, 4, 4]);
    }

    #[test]
    fn detached_magic_rejected() {
        let header = raw_header([3, 2, 2, 2, 1, 1, 1, 1], DT_FLOAT32, b"ni1\0");
        let (_d, path) = write_tmp(&with_payload(header, &[0u8; 32]));
        let err = read_volume(&path).unwrap_err();
        assert!(matches!(err, Error::Format(_)), "{err}");
    }

    #[test]
    fn float64_datatype_rejected() {
        let header = raw_header([3, 2, 2, 2, 1, 1, 1, 1], 64, MAGIC);
        let (_d, path) = write_tmp(&with_payload(header, &[0u8; 64]));
        let err = read_volume(&path).unwrap_err();
        assert!(err.to_string().contains("unsupported datatype 64"), "{err}");
    }

    #[test]
    fn truncated_payload_is_io_error() {
        let header = raw_header([3, 4, 4, 4, 1, 1, 1, 1], DT_FLOAT32, MAGIC);
        let (_d, path) = write_tmp(&with_payload(header, &[0u8; 100]));
        let err = read_volume(&path).unwrap_err();
        assert!(matches!(err, Error::Io(_)), "{err}");
    }

    #[test]
    fn label_file_size_is_348_plus_4_plus_payload() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("seg.nii");
        let labels = LabelVolume::new([2, 2, 2], [1.0; 3], vec![0; 8]).unwrap();
        write_labels(&labels, &path).unwrap();
        assert_eq!(std::fs::metadata(&path).unwrap().len(), 348 + 4 + 8);
    }

    #[test]
    fn volume_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.nii");
        let data: Vec<f32> = (0..24).map(|i| (i as f32) * 0.37 - 2.0).collect();
        let vol = Volume::new([2, 3, 4], [1.0, 2.0, 0.5], data).unwrap();
        write_volume(&vol, &path).unwrap();
        let back = read_volume(&path).unwrap();
        assert_eq!(back, vol);
    }

    #[test]
    fn squeezes_singleton_fourth_dim() {
        let header = raw_header([4, 2, 2, 2, 1, 1, 1, 1], DT_UINT8, MAGIC);
        let (_d, path) = write_tmp(&with_payload(header, &[1u8; 8]));
        let vol = read_labels(&path).unwrap();
        assert_eq!(vol.dims(), [2, 2, 2]);
    }

    #[test]
    fn rejects_4d_with_wide_fourth_dim_as_volume() {
        let header = raw_header([4, 2, 2, 2, 3, 1, 1, 1], DT_UINT8, MAGIC);
        let (_d, path) = write_tmp(&with_payload(header, &[0u8; 24]));
        assert!(matches!(read_volume(&path), Err(Error::Format(_))));
    }

    #[test]
    fn big_endian_int16_with_scaling() {
        let mut h = vec![0u8; HEADER_LEN];
        h[0..4].copy_from_slice(&348i32.to_be_bytes());
        let dim: [i16; 8] = [3, 2, 1, 1, 1, 1, 1, 1];
        for (i, &d) in dim.iter().enumerate() {
            h[40 + 2 * i..42 + 2 * i].copy_from_slice(&d.to_be_bytes());
        }
        h[70..72].copy_from_slice(&DT_INT16.to_be_bytes());
        for i in 1..=3 {
            h[76 + 4 * i..80 + 4 * i].copy_from_slice(&1.0f32.to_be_bytes());
        }
        h[108..112].copy_from_slice(&352.0f32.to_be_bytes());
        h[112..116].copy_from_slice(&0.5f32.to_be_bytes()); // scl_slope
        h[116..120].copy_from_slice(&10.0f32.to_be_bytes()); // scl_inter
        h[344..348].copy_from_slice(MAGIC);
        let mut bytes = with_payload(h, &[]);
        bytes.extend_from_slice(&100i16.to_be_bytes());
        bytes.extend_from_slice(&(-4i16).to_be_bytes());
        let (_d, path) = write_tmp(&bytes);
        let vol = read_volume(&path).unwrap();
        assert_eq!(vol.data(), &[60.0, 8.0]);
    }

    #[test]
    fn int16_sourced_volume_round_trips_exactly() {
        // int16 values are exactly representable in f32, so a volume read
        // from an int16 file survives the float32 write path bit-for-bit.
        let header = raw_header([3, 3, 1, 1, 1, 1, 1, 1], DT_INT16, MAGIC);
        let mut bytes = with_payload(header, &[]);
        for v in [-32768i16, -1, 0, 1, 32767, 12345, -12345, 7, -7] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        let (_d, path) = write_tmp(&bytes);
        let vol = read_volume(&path).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let rewritten = dir.path().join("again.nii");
        write_volume(&vol, &rewritten).unwrap();
        let back = read_volume(&rewritten).unwrap();
        assert_eq!(back, vol);
        assert_eq!(back.data()[0], -32768.0);
    }

    #[test]
    fn stack_round_trip_and_header_dims() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.nii");
        let dims = [2, 2, 1];
        let channels = 7;
        let data: Vec<u8> = (0..28).map(|i| (i % 2) as u8).collect();
        write_stack_raw(dims, [1.0; 3], channels, &data, &path).unwrap();

        let bytes = std::fs::read(&path).unwrap();
        let dim: Vec<i16> = (0..8)
            .map(|i| i16::from_le_bytes([bytes[40 + 2 * i], bytes[41 + 2 * i]]))
            .collect();
        assert_eq!(&dim[..5], &[4, 2, 2, 1, 7]);

        let (rdims, _sp, c, rdata) = read_stack_raw(&path).unwrap();
        assert_eq!(rdims, dims);
        assert_eq!(c, channels);
        assert_eq!(rdata, data);
    }

    #[test]
    fn label_alphabet_violation_fails_hard() {
        let header = raw_header([3, 2, 1, 1, 1, 1, 1, 1], DT_UINT8, MAGIC);
        let (_d, path) = write_tmp(&with_payload(header, &[1u8, 3u8]));
        let err = read_labels(&path).unwrap_err();
        assert!(err.to_string().contains("outside alphabet"), "{err}");
    }
}
