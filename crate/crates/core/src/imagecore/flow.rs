use std::fs;
use std::path::Path;

use thiserror::Error;

/// File magic of the binary flow exchange format.
pub const UAFL_MAGIC: &[u8; 4] = b"UAFL";
pub const UAFL_VERSION: u32 = 1;
const HEADER_LEN: usize = 16;

#[derive(Debug, Error)]
pub enum FlowFileError {
    #[error("bad magic {0:?}, expected \"UAFL\"")]
    BadMagic([u8; 4]),
    #[error("unsupported flow file version {0}")]
    Version(u32),
    #[error("truncated flow file: expected {expected} bytes, found {actual}")]
    Truncated { expected: usize, actual: usize },
    #[error("flow planes disagree with the declared dimensions")]
    DimensionMismatch,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Per-pixel unit vectors (dy, dx) and a foreground probability plane.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    pub width: usize,
    pub height: usize,
    pub dy: Vec<f32>,
    pub dx: Vec<f32>,
    pub fg: Vec<f32>,
}

impl FlowField {
    pub fn zeros(width: usize, height: usize) -> Self {
        let n = width * height;
        Self { width, height, dy: vec![0.0; n], dx: vec![0.0; n], fg: vec![0.0; n] }
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Checks that all three planes match `width × height`.
    pub fn validate(&self) -> Result<(), FlowFileError> {
        let n = self.len();
        if self.dy.len() != n || self.dx.len() != n || self.fg.len() != n {
            return Err(FlowFileError::DimensionMismatch);
        }
        Ok(())
    }

    /// Size of the encoded file in bytes.
    pub fn encoded_len(&self) -> usize {
        HEADER_LEN + 3 * 4 * self.len()
    }
}

pub fn encode_flow(f: &FlowField) -> Result<Vec<u8>, FlowFileError> {
    f.validate()?;
    let mut out = Vec::with_capacity(f.encoded_len());
    out.extend_from_slice(UAFL_MAGIC);
    out.extend_from_slice(&UAFL_VERSION.to_le_bytes());
    out.extend_from_slice(&(f.height as u32).to_le_bytes());
    out.extend_from_slice(&(f.width as u32).to_le_bytes());
    for plane in [&f.dy, &f.dx, &f.fg] {
        for v in plane.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_flow(bytes: &[u8]) -> Result<FlowField, FlowFileError> {
    if bytes.len() < 4 {
        return Err(FlowFileError::Truncated { expected: HEADER_LEN, actual: bytes.len() });
    }
    let magic: [u8; 4] = bytes[0..4].try_into().unwrap();
    if &magic != UAFL_MAGIC {
        return Err(FlowFileError::BadMagic(magic));
    }
    if bytes.len() < HEADER_LEN {
        return Err(FlowFileError::Truncated { expected: HEADER_LEN, actual: bytes.len() });
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
    let version = word(4);
    if version != UAFL_VERSION {
        return Err(FlowFileError::Version(version));
    }
    let height = word(8) as usize;
    let width = word(12) as usize;
    let n = width * height;
    let expected = HEADER_LEN + 12 * n;
    if bytes.len() < expected {
        return Err(FlowFileError::Truncated { expected, actual: bytes.len() });
    }
    let plane = |k: usize| -> Vec<f32> {
        let start = HEADER_LEN + k * 4 * n;
        bytes[start..start + 4 * n]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect()
    };
    Ok(FlowField { width, height, dy: plane(0), dx: plane(1), fg: plane(2) })
}

pub fn read_flow_file(path: impl AsRef<Path>) -> Result<FlowField, FlowFileError> {
    decode_flow(&fs::read(path)?)
}

pub fn write_flow_file(f: &FlowField, path: impl AsRef<Path>) -> Result<(), FlowFileError> {
    fs::write(path, encode_flow(f)?)?;
    Ok(())
}
