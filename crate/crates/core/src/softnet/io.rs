//! `SFTN` model files: magic, version, class, then for each tensor its rank,
//! dimensions and little-endian `f32` values. Kernels are stored as
//! `[5, 5, 1, filters]` and dense weights as `[inputs, outputs]`.

use std::path::Path;

use crate::error::{Error, Result};
use crate::pseudolabel::ExpressionClass;

use super::model::{layers, SoftNetModel, FILTERS, FLAT_LEN, HIDDEN, KERNEL, PARAMETER_COUNT};

pub const MODEL_MAGIC: &[u8; 4] = b"SFTN";
pub const MODEL_VERSION: u16 = 1;

/// File dimensions of each tensor, in storage order.
fn file_dims() -> Vec<Vec<u32>> {
    let mut dims = Vec::new();
    for &f in &FILTERS {
        dims.push(vec![KERNEL as u32, KERNEL as u32, 1, f as u32]);
        dims.push(vec![f as u32]);
    }
    dims.push(vec![FLAT_LEN as u32, HIDDEN as u32]);
    dims.push(vec![HIDDEN as u32]);
    dims.push(vec![HIDDEN as u32, 1]);
    dims.push(vec![1]);
    dims
}

/// Maps file element order to internal order for tensor `t`.
fn internal_index(t: usize, file_i: usize) -> usize {
    match t {
        0 | 2 | 4 => {
            let f = FILTERS[t / 2];
            let (tap, filter) = (file_i / f, file_i % f);
            filter * KERNEL * KERNEL + tap
        }
        6 => {
            let (input, output) = (file_i / HIDDEN, file_i % HIDDEN);
            output * FLAT_LEN + input
        }
        _ => file_i,
    }
}

fn class_code(c: ExpressionClass) -> u8 {
    match c {
        ExpressionClass::Macro => 0,
        ExpressionClass::Micro => 1,
    }
}

pub fn model_to_bytes(model: &SoftNetModel) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + 4 * PARAMETER_COUNT + 64);
    out.extend_from_slice(MODEL_MAGIC);
    out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
    out.push(class_code(model.class));
    let specs = layers();
    out.push(specs.len() as u8);
    for (t, (spec, dims)) in specs.iter().zip(file_dims()).enumerate() {
        out.push(dims.len() as u8);
        for d in &dims {
            out.extend_from_slice(&d.to_le_bytes());
        }
        let values = &model.params()[spec.range.clone()];
        for file_i in 0..values.len() {
            out.extend_from_slice(&(values[internal_index(t, file_i)] as f32).to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    data: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.data.len() - self.at < n {
            return Err(Error::Format(format!("model file truncated at byte {}", self.at)));
        }
        let s = &self.data[self.at..self.at + n];
        self.at += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

pub fn model_from_bytes(data: &[u8]) -> Result<SoftNetModel> {
    let mut r = Reader { data, at: 0 };
    if r.take(4)? != MODEL_MAGIC {
        return Err(Error::Format("not a model file (bad magic)".into()));
    }
    let version = r.u16()?;
    if version != MODEL_VERSION {
        return Err(Error::Format(format!("unsupported model version {version}")));
    }
    let class = match r.u8()? {
        0 => ExpressionClass::Macro,
        1 => ExpressionClass::Micro,
        other => return Err(Error::Format(format!("unknown class code {other}"))),
    };
    let specs = layers();
    let count = r.u8()? as usize;
    if count != specs.len() {
        return Err(Error::Format(format!("{count} tensors, expected {}", specs.len())));
    }
    let mut params = vec![0.0; PARAMETER_COUNT];
    for (t, (spec, dims)) in specs.iter().zip(file_dims()).enumerate() {
        let rank = r.u8()? as usize;
        let found: Vec<u32> = (0..rank).map(|_| r.u32()).collect::<Result<_>>()?;
        if found != dims {
            return Err(Error::Format(format!("{} has dimensions {found:?}, expected {dims:?}", spec.name)));
        }
        let block = r.take(4 * spec.range.len())?;
        let dst = &mut params[spec.range.clone()];
        for (file_i, bytes) in block.chunks_exact(4).enumerate() {
            dst[internal_index(t, file_i)] = f32::from_le_bytes(bytes.try_into().expect("4 bytes")) as f64;
        }
    }
    if r.at != data.len() {
        return Err(Error::Format(format!("{} trailing bytes after model", data.len() - r.at)));
    }
    SoftNetModel::from_params(class, params)
}

pub fn write_model(path: &Path, model: &SoftNetModel) -> Result<()> {
    std::fs::write(path, model_to_bytes(model))?;
    Ok(())
}

pub fn read_model(path: &Path) -> Result<SoftNetModel> {
    let data = std::fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
        _ => Error::Io(e),
    })?;
    model_from_bytes(&data)
}
