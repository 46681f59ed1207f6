//! IDX container format used by the MNIST family.
//!
//! Layout (all integers big-endian): two zero bytes, a type byte
//! (`0x08` u8, `0x09` i8, `0x0B` i16, `0x0C` i32, `0x0D` f32, `0x0E` f64), a
//! rank byte, `rank` u32 dimensions, then the row-major payload.

use std::path::Path;

use super::{Dataset, Labels};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct IdxArray {
    pub type_code: u8,
    pub dims: Vec<usize>,
    pub data: Vec<f64>,
}

fn elem_size(code: u8) -> Option<usize> {
    match code {
        0x08 | 0x09 => Some(1),
        0x0B => Some(2),
        0x0C | 0x0D => Some(4),
        0x0E => Some(8),
        _ => None,
    }
}

pub fn read_idx(bytes: &[u8]) -> Result<IdxArray> {
    if bytes.len() < 4 {
        return Err(Error::format(
            bytes.len() as u64,
            "file shorter than the 4-byte magic",
        ));
    }
    if bytes[0] != 0 || bytes[1] != 0 {
        return Err(Error::format(0, "magic must start with two zero bytes"));
    }
    let type_code = bytes[2];
    let size = elem_size(type_code)
        .ok_or_else(|| Error::format(2, format!("unknown element type 0x{type_code:02x}")))?;
    let rank = bytes[3] as usize;
    let header = 4 + 4 * rank;
    if bytes.len() < header {
        return Err(Error::format(
            bytes.len() as u64,
            "truncated dimension list",
        ));
    }
    let dims: Vec<usize> = (0..rank)
        .map(|i| {
            let o = 4 + 4 * i;
            u32::from_be_bytes(bytes[o..o + 4].try_into().unwrap()) as usize
        })
        .collect();
    let count: usize = dims.iter().product();
    let expected = header + count * size;
    if bytes.len() < expected {
        return Err(Error::format(
            bytes.len() as u64,
            format!("truncated payload: expected {expected} bytes"),
        ));
    }
    if bytes.len() > expected {
        return Err(Error::format(
            expected as u64,
            "trailing bytes after payload",
        ));
    }
    let payload = &bytes[header..];
    let data = payload
        .chunks_exact(size)
        .map(|c| match type_code {
            0x08 => c[0] as f64,
            0x09 => c[0] as i8 as f64,
            0x0B => i16::from_be_bytes([c[0], c[1]]) as f64,
            0x0C => i32::from_be_bytes(c.try_into().unwrap()) as f64,
            0x0D => f32::from_be_bytes(c.try_into().unwrap()) as f64,
            _ => f64::from_be_bytes(c.try_into().unwrap()),
        })
        .collect();
    Ok(IdxArray {
        type_code,
        dims,
        data,
    })
}

pub fn write_idx(array: &IdxArray) -> Result<Vec<u8>> {
    let size = elem_size(array.type_code).ok_or_else(|| {
        Error::contract(format!("unknown element type 0x{:02x}", array.type_code))
    })?;
    if array.dims.len() > 255 || array.dims.iter().product::<usize>() != array.data.len() {
        return Err(Error::contract("dims do not match data length"));
    }
    let mut out = Vec::with_capacity(4 + 4 * array.dims.len() + size * array.data.len());
    out.extend_from_slice(&[0, 0, array.type_code, array.dims.len() as u8]);
    for &d in &array.dims {
        out.extend_from_slice(&(d as u32).to_be_bytes());
    }
    for &v in &array.data {
        match array.type_code {
            0x08 => out.push(v as u8),
            0x09 => out.push(v as i8 as u8),
            0x0B => out.extend_from_slice(&(v as i16).to_be_bytes()),
            0x0C => out.extend_from_slice(&(v as i32).to_be_bytes()),
            0x0D => out.extend_from_slice(&(v as f32).to_be_bytes()),
            _ => out.extend_from_slice(&v.to_be_bytes()),
        }
    }
    Ok(out)
}

pub fn load_idx(path: impl AsRef<Path>) -> Result<IdxArray> {
    read_idx(&std::fs::read(path)?)
}

/// Images (`n × H × W` or `n × C × H × W`) and labels (`n`) as a
/// classification dataset; u8 pixels are scaled to `[0, 1]`.
pub fn load_idx_pair(images: impl AsRef<Path>, labels: impl AsRef<Path>) -> Result<Dataset> {
    let img = load_idx(images.as_ref())?;
    let lab = load_idx(labels.as_ref())?;
    idx_dataset(img, lab, images.as_ref().display().to_string())
}

pub(crate) fn idx_dataset(img: IdxArray, lab: IdxArray, provenance: String) -> Result<Dataset> {
    if lab.dims.len() != 1 {
        return Err(Error::format(3, "label file must have rank 1"));
    }
    let n = lab.dims[0];
    if img.dims.first() != Some(&n) {
        return Err(Error::contract("image and label counts differ"));
    }
    let shape = match img.dims.len() {
        3 => vec![1, img.dims[1], img.dims[2]],
        4 => img.dims[1..].to_vec(),
        2 => img.dims[1..].to_vec(),
        _ => return Err(Error::format(3, "image file must have rank 2, 3 or 4")),
    };
    let scale = if img.type_code == 0x08 {
        1.0 / 255.0
    } else {
        1.0
    };
    let inputs = img.data.iter().map(|v| v * scale).collect();
    let y: Vec<usize> = lab.data.iter().map(|&v| v as usize).collect();
    let classes = y.iter().copied().max().map_or(0, |m| m + 1);
    Dataset::new(
        inputs,
        shape,
        Labels::Class(y),
        classes,
        format!("idx:{provenance}"),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent reader: parse the header by hand with explicit offsets.
    fn reference_parse(bytes: &[u8]) -> (Vec<usize>, Vec<u8>) {
        let rank = bytes[3] as usize;
        let mut dims = Vec::new();
        for i in 0..rank {
            let b = &bytes[4 + 4 * i..8 + 4 * i];
            dims.push(
                ((b[0] as usize) << 24)
                    | ((b[1] as usize) << 16)
                    | ((b[2] as usize) << 8)
                    | b[3] as usize,
            );
        }
        (dims, bytes[4 + 4 * rank..].to_vec())
    }

    #[test]
    fn image_file_header() {
        let mut bytes = vec![0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 28, 0, 0, 0, 28];
        bytes.extend((0..2 * 28 * 28).map(|i| (i % 256) as u8));
        let arr = read_idx(&bytes).unwrap();
        let (dims, payload) = reference_parse(&bytes);
        assert_eq!(arr.dims, vec![2, 28, 28]);
        assert_eq!(arr.dims, dims);
        assert!(arr.data.iter().zip(&payload).all(|(a, b)| *a == *b as f64));
    }

    #[test]
    fn label_file() {
        let bytes = [0, 0, 8, 1, 0, 0, 0, 2, 7, 1];
        let arr = read_idx(&bytes).unwrap();
        assert_eq!(arr.data, vec![7.0, 1.0]);
        assert_eq!(reference_parse(&bytes).1, vec![7, 1]);
    }

    #[test]
    fn truncated_and_bad_magic() {
        let bytes = [0, 0, 8, 1, 0, 0, 0, 3, 7, 1];
        match read_idx(&bytes) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, 10),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            read_idx(&[1, 0, 8, 1]),
            Err(Error::Format { offset: 0, .. })
        ));
        assert!(matches!(
            read_idx(&[0, 0, 0x42, 1]),
            Err(Error::Format { offset: 2, .. })
        ));
    }

    #[test]
    fn pair_scales_pixels() {
        let img = IdxArray {
            type_code: 8,
            dims: vec![2, 2, 2],
            data: vec![0., 255., 51., 0., 1., 2., 3., 4.],
        };
        let lab = IdxArray {
            type_code: 8,
            dims: vec![2],
            data: vec![1., 0.],
        };
        let ds = idx_dataset(img, lab, "t".into()).unwrap();
        assert_eq!(ds.input_shape, vec![1, 2, 2]);
        assert_eq!(ds.inputs[1], 1.0);
        assert_eq!(ds.num_classes, 2);
    }
}
