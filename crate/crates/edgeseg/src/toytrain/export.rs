//! Slice exports: activation maps as binary PGM, edge overlays as binary
//! PPM. Row order is y ascending, column order x ascending.

use std::path::Path;

use crate::edgex::EdgeVolume;
use crate::error::{Error, Result};
use crate::fsutil::write_atomic;
use crate::targets::ProbStack;
use crate::volgrid::{flat_index, LabelVolume};

/// Grayscale rendering of region interiors in overlays, matching the
/// usual ground-truth display convention.
fn label_gray(label: u8) -> u8 {
    match label {
        1 => 85,  // NCR/NET: dark gray
        2 => 170, // ED: light gray
        4 => 255, // ET: white
        _ => 0,   // background: black
    }
}

/// Write one channel of one axial slice as 8-bit PGM (P5);
/// pixel = round(255 * p).
pub fn export_activation_slice(
    probs: &ProbStack,
    channel: usize,
    z: usize,
    path: impl AsRef<Path>,
) -> Result<()> {
    let dims = probs.dims();
    if channel >= probs.channels() {
        return Err(Error::usage(format!(
            "channel {channel} out of range for {} channels",
            probs.channels()
        )));
    }
    if z >= dims[2] {
        return Err(Error::usage(format!(
            "slice {z} out of range for nz {}",
            dims[2]
        )));
    }
    let (nx, ny) = (dims[0], dims[1]);
    let mut bytes = format!("P5\n{nx} {ny}\n255\n").into_bytes();
    for y in 0..ny {
        for x in 0..nx {
            let voxel = flat_index(dims, x, y, z);
            let p = probs.row(voxel)[channel].clamp(0.0, 1.0);
            bytes.push((255.0 * p).round() as u8);
        }
    }
    write_atomic(path.as_ref(), &bytes)?;
    Ok(())
}

/// Write one axial slice as 8-bit PPM (P6): region interiors in grayscale,
/// edge voxels pure red (255, 0, 0).
pub fn export_edge_overlay(
    labels: &LabelVolume,
    edges: &EdgeVolume,
    z: usize,
    path: impl AsRef<Path>,
) -> Result<()> {
    let dims = labels.dims();
    if edges.dims() != dims {
        return Err(Error::usage(format!(
            "label dims {:?} do not match edge dims {:?}",
            dims,
            edges.dims()
        )));
    }
    if z >= dims[2] {
        return Err(Error::usage(format!(
            "slice {z} out of range for nz {}",
            dims[2]
        )));
    }
    let (nx, ny) = (dims[0], dims[1]);
    let mut bytes = format!("P6\n{nx} {ny}\n255\n").into_bytes();
    for y in 0..ny {
        for x in 0..nx {
            let voxel = flat_index(dims, x, y, z);
            if edges.data()[voxel] != 0 {
                bytes.extend_from_slice(&[255, 0, 0]);
            } else {
                let g = label_gray(labels.data()[voxel]);
                bytes.extend_from_slice(&[g, g, g]);
            }
        }
    }
    write_atomic(path.as_ref(), &bytes)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::edgex::extract_edges;

    fn pgm_pixels(bytes: &[u8]) -> &[u8] {
        // Header is "P5\n{w} {h}\n255\n": pixels start after the third newline.
        let mut newlines = 0;
        for (i, &b) in bytes.iter().enumerate() {
            if b == b'\n' {
                newlines += 1;
                if newlines == 3 {
                    return &bytes[i + 1..];
                }
            }
        }
        panic!("malformed PGM header");
    }

    #[test]
    fn activation_endpoints_map_to_0_and_255() {
        let probs = ProbStack::new(
            [2, 1, 1],
            [1.0; 3],
            4,
            vec![
                0.0, 1.0, 0.0, 0.0, //
                1.0, 0.0, 0.0, 0.0,
            ],
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p0 = dir.path().join("c0.pgm");
        export_activation_slice(&probs, 0, 0, &p0).unwrap();
        let bytes = std::fs::read(&p0).unwrap();
        assert!(bytes.starts_with(b"P5\n2 1\n255\n"));
        assert_eq!(pgm_pixels(&bytes), &[0, 255]);
    }

    #[test]
    fn uniform_quarter_rounds_to_64() {
        let probs = ProbStack::new([3, 2, 1], [1.0; 3], 4, vec![0.25; 24]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("u.pgm");
        export_activation_slice(&probs, 2, 0, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert!(pgm_pixels(&bytes).iter().all(|&p| p == 64));
    }

    #[test]
    fn activation_bytes_are_deterministic() {
        let probs = ProbStack::new([4, 4, 2], [1.0; 3], 4, vec![0.125; 128]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.pgm");
        let b = dir.path().join("b.pgm");
        export_activation_slice(&probs, 1, 1, &a).unwrap();
        export_activation_slice(&probs, 1, 1, &b).unwrap();
        assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
    }

    #[test]
    fn out_of_range_arguments_rejected() {
        let probs = ProbStack::new([2, 2, 2], [1.0; 3], 4, vec![0.25; 32]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.pgm");
        assert!(export_activation_slice(&probs, 4, 0, &path).is_err());
        assert!(export_activation_slice(&probs, 0, 2, &path).is_err());
        assert!(!path.exists());
    }

    #[test]
    fn overlay_marks_edges_red_and_interiors_gray() {
        // 3x3x1 slab of label 2 with a label-4 corner; everything here is
        // an edge except nothing (small region), so hand-build the edge
        // volume to carve out an interior pixel.
        let dims = [3, 3, 1];
        let labels = LabelVolume::new(dims, [1.0; 3], vec![2, 2, 2, 2, 2, 2, 2, 2, 4]).unwrap();
        let mut edge_data = vec![2u8, 2, 2, 2, 0, 2, 2, 2, 4];
        edge_data[4] = 0; // pretend the center is interior
        let edges = EdgeVolume::new(dims, [1.0; 3], edge_data).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("o.ppm");
        export_edge_overlay(&labels, &edges, 0, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert!(bytes.starts_with(b"P6\n3 3\n255\n"));
        let pixels = &bytes[b"P6\n3 3\n255\n".len()..];
        assert_eq!(&pixels[0..3], &[255, 0, 0]);
        assert_eq!(&pixels[4 * 3..4 * 3 + 3], &[170, 170, 170]); // ED gray
        assert_eq!(&pixels[8 * 3..8 * 3 + 3], &[255, 0, 0]);
    }

    #[test]
    fn overlay_without_edges_is_grayscale_only() {
        let dims = [2, 2, 1];
        let labels = LabelVolume::new(dims, [1.0; 3], vec![0, 1, 2, 4]).unwrap();
        let edges = EdgeVolume::new(dims, [1.0; 3], vec![0; 4]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.ppm");
        export_edge_overlay(&labels, &edges, 0, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        let pixels = &bytes[b"P6\n2 2\n255\n".len()..];
        assert_eq!(pixels, &[0, 0, 0, 85, 85, 85, 170, 170, 170, 255, 255, 255]);
    }

    #[test]
    fn all_zero_slice_is_black() {
        let dims = [2, 2, 2];
        let labels = LabelVolume::new(dims, [1.0; 3], vec![0; 8]).unwrap();
        let edges = extract_edges(&labels);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("b.ppm");
        export_edge_overlay(&labels, &edges, 1, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        let pixels = &bytes[b"P6\n2 2\n255\n".len()..];
        assert!(pixels.iter().all(|&p| p == 0));
    }
}
