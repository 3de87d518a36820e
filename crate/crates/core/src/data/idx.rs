//! IDX (MNIST-style) files: big-endian u32 magic and dimensions, then raw
//! unsigned bytes.

use std::fs;
use std::path::Path;

use super::LabeledDataset;
use crate::{Error, Result};

const IMAGE_MAGIC: u32 = 0x0000_0803;
const LABEL_MAGIC: u32 = 0x0000_0801;

struct Cursor<'a> {
    path: &'a Path,
    bytes: &'a [u8],
    at: usize,
}

impl Cursor<'_> {
    fn fail(&self, reason: impl Into<String>) -> Error {
        Error::Idx {
            path: self.path.to_path_buf(),
            reason: reason.into(),
        }
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let end = self.at + 4;
        let word = self
            .bytes
            .get(self.at..end)
            .ok_or_else(|| self.fail(format!("truncated before {what}")))?;
        self.at = end;
        Ok(u32::from_be_bytes(word.try_into().expect("4 bytes")))
    }

    fn payload(&mut self, n: usize) -> Result<&[u8]> {
        let rest = &self.bytes[self.at..];
        if rest.len() < n {
            return Err(self.fail(format!(
                "truncated payload: expected {n} bytes, found {}",
                rest.len()
            )));
        }
        if rest.len() > n {
            return Err(self.fail(format!("{} trailing bytes after payload", rest.len() - n)));
        }
        Ok(rest)
    }
}

/// Reads an image/label file pair. Pixels are scaled by 1/255; the class
/// count is one more than the largest label.
pub fn load_idx(
    images_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
) -> Result<LabeledDataset> {
    let (ip, lp) = (images_path.as_ref(), labels_path.as_ref());
    let image_bytes = fs::read(ip)?;
    let label_bytes = fs::read(lp)?;

    let mut img = Cursor {
        path: ip,
        bytes: &image_bytes,
        at: 0,
    };
    let magic = img.u32("magic")?;
    if magic != IMAGE_MAGIC {
        return Err(img.fail(format!(
            "bad magic {magic:#010x}, expected {IMAGE_MAGIC:#010x}"
        )));
    }
    let n = img.u32("item count")? as usize;
    let rows = img.u32("row count")? as usize;
    let cols = img.u32("column count")? as usize;
    let pixels = img.payload(n * rows * cols)?;

    let mut lab = Cursor {
        path: lp,
        bytes: &label_bytes,
        at: 0,
    };
    let magic = lab.u32("magic")?;
    if magic != LABEL_MAGIC {
        return Err(lab.fail(format!(
            "bad magic {magic:#010x}, expected {LABEL_MAGIC:#010x}"
        )));
    }
    let n_labels = lab.u32("item count")? as usize;
    if n_labels != n {
        return Err(lab.fail(format!("{n_labels} labels for {n} images")));
    }
    let labels: Vec<usize> = lab.payload(n)?.iter().map(|&b| usize::from(b)).collect();

    let inputs = pixels.iter().map(|&p| f64::from(p) / 255.0).collect();
    let classes = labels.iter().max().map_or(1, |m| m + 1);
    LabeledDataset::new(rows * cols, inputs, labels, classes)
}

/// Writes a dataset back out as an IDX pair, rounding inputs to bytes.
pub fn write_idx(
    ds: &LabeledDataset,
    rows: usize,
    cols: usize,
    images_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
) -> Result<()> {
    if rows * cols != ds.features() {
        return Err(Error::DimensionMismatch {
            what: "image rows x cols",
            expected: ds.features(),
            actual: rows * cols,
        });
    }
    let n = ds.len() as u32;
    let mut img = Vec::with_capacity(16 + ds.inputs().len());
    for word in [IMAGE_MAGIC, n, rows as u32, cols as u32] {
        img.extend_from_slice(&word.to_be_bytes());
    }
    img.extend(
        ds.inputs()
            .iter()
            .map(|&x| (x * 255.0).round().clamp(0.0, 255.0) as u8),
    );
    let mut lab = Vec::with_capacity(8 + ds.len());
    for word in [LABEL_MAGIC, n] {
        lab.extend_from_slice(&word.to_be_bytes());
    }
    lab.extend(ds.labels().iter().map(|&y| y as u8));
    crate::output::write_atomic(images_path, &img)?;
    crate::output::write_atomic(labels_path, &lab)?;
    Ok(())
}
