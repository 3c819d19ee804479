//! `SFMC` feature cache.
//!
//! A 16-byte header (magic `SFMC`, `u16` version, `u32` frame count, `u16` k,
//! four reserved zero bytes) followed, for every frame, by a 42x42x3 `f32`
//! array in row-major order with the channel index fastest (`u`, `v`, strain).
//! All integers and floats are little-endian. Entry `i` is the pair starting at
//! frame `i`.

use std::path::Path;

use crate::error::{Error, Result};
use crate::preprocess::MotionInput;

pub const CACHE_MAGIC: &[u8; 4] = b"SFMC";
pub const CACHE_VERSION: u16 = 1;
pub const CACHE_HEADER_LEN: usize = 16;
const FRAME_BYTES: usize = MotionInput::PLANE_LEN * 3 * 4;

/// Cached features of one video with the pair distance they were built for.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureCache {
    pub k: usize,
    pub features: Vec<MotionInput>,
}

pub fn cache_to_bytes(k: usize, features: &[MotionInput]) -> Result<Vec<u8>> {
    let k16 =
        u16::try_from(k).map_err(|_| Error::InvalidParameter(format!("k = {k} does not fit the cache header")))?;
    let n = u32::try_from(features.len())
        .map_err(|_| Error::InvalidParameter(format!("{} frames do not fit the cache header", features.len())))?;
    let mut out = Vec::with_capacity(CACHE_HEADER_LEN + features.len() * FRAME_BYTES);
    out.extend_from_slice(CACHE_MAGIC);
    out.extend_from_slice(&CACHE_VERSION.to_le_bytes());
    out.extend_from_slice(&n.to_le_bytes());
    out.extend_from_slice(&k16.to_le_bytes());
    out.extend_from_slice(&[0; 4]);
    for (i, f) in features.iter().enumerate() {
        if f.source_frame_index != i {
            return Err(Error::InvalidParameter(format!(
                "feature {i} belongs to frame {}, caches hold consecutive frames from 0",
                f.source_frame_index
            )));
        }
        for p in 0..MotionInput::PLANE_LEN {
            for c in [&f.u, &f.v, &f.strain] {
                out.extend_from_slice(&c[p].to_le_bytes());
            }
        }
    }
    Ok(out)
}

pub fn cache_from_bytes(data: &[u8]) -> Result<FeatureCache> {
    if data.len() < CACHE_HEADER_LEN {
        return Err(Error::Format(format!("feature cache truncated: {} header bytes", data.len())));
    }
    if &data[0..4] != CACHE_MAGIC {
        return Err(Error::Format("not a feature cache (bad magic)".into()));
    }
    let version = u16::from_le_bytes([data[4], data[5]]);
    if version != CACHE_VERSION {
        return Err(Error::Format(format!("unsupported feature cache version {version}")));
    }
    let count = u32::from_le_bytes(data[6..10].try_into().expect("4 bytes")) as usize;
    let k = u16::from_le_bytes([data[10], data[11]]) as usize;
    let expected = CACHE_HEADER_LEN + count * FRAME_BYTES;
    if data.len() != expected {
        return Err(Error::Format(format!("feature cache holds {} bytes, header implies {expected}", data.len())));
    }
    let features = data[CACHE_HEADER_LEN..]
        .chunks_exact(FRAME_BYTES)
        .enumerate()
        .map(|(i, frame)| {
            let mut planes = [Vec::new(), Vec::new(), Vec::new()];
            for p in &mut planes {
                p.reserve_exact(MotionInput::PLANE_LEN);
            }
            for (j, bytes) in frame.chunks_exact(4).enumerate() {
                planes[j % 3].push(f32::from_le_bytes(bytes.try_into().expect("4 bytes")));
            }
            let [u, v, s] = planes;
            MotionInput::new(u, v, s, i).map_err(|e| Error::Format(format!("frame {i}: {e}")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FeatureCache { k, features })
}

pub fn write_feature_cache(path: &Path, k: usize, features: &[MotionInput]) -> Result<()> {
    std::fs::write(path, cache_to_bytes(k, features)?)?;
    Ok(())
}

pub fn read_feature_cache(path: &Path) -> Result<FeatureCache> {
    let data = std::fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
        _ => Error::Io(e),
    })?;
    cache_from_bytes(&data)
}
