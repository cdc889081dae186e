//! IDX file loading (the MNIST container format): big-endian magic + dims,
//! then raw u8 payload.

use std::fs::File;
use std::io::{BufReader, Read};
use std::path::Path;

use byteorder::{BigEndian, ReadBytesExt};

use crate::data::{DataMeta, Dataset, SampleShape};
use crate::error::{Error, Result};
use crate::nn::tensor::Tensor;

const IMAGE_MAGIC: u32 = 0x0000_0803;
const LABEL_MAGIC: u32 = 0x0000_0801;

struct Tracked<R> {
    inner: R,
    offset: u64,
}

impl<R: Read> Tracked<R> {
    fn new(inner: R) -> Self {
        Tracked { inner, offset: 0 }
    }

    fn read_u32(&mut self, what: &str) -> Result<u32> {
        let at = self.offset;
        let v = self
            .inner
            .read_u32::<BigEndian>()
            .map_err(|_| truncated(at, what))?;
        self.offset += 4;
        Ok(v)
    }

    fn read_exact(&mut self, buf: &mut [u8], what: &str) -> Result<()> {
        let at = self.offset;
        self.inner
            .read_exact(buf)
            .map_err(|_| truncated(at, what))?;
        self.offset += buf.len() as u64;
        Ok(())
    }

    fn expect_eof(&mut self, path: &Path) -> Result<()> {
        let mut probe = [0u8; 1];
        if self.inner.read(&mut probe).unwrap_or(0) != 0 {
            return Err(Error::Format {
                offset: self.offset,
                message: format!("trailing bytes in {}", path.display()),
            });
        }
        Ok(())
    }
}

fn truncated(offset: u64, what: &str) -> Error {
    Error::Format {
        offset,
        message: format!("file truncated while reading {what}"),
    }
}

/// Loads an image/label IDX pair. Pixel bytes are scaled to `[0, 1]`
/// by dividing by 255.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let mut images = Tracked::new(BufReader::new(File::open(images_path)?));
    let magic = images.read_u32("image magic")?;
    if magic != IMAGE_MAGIC {
        return Err(Error::Format {
            offset: 0,
            message: format!("bad image magic {magic:#010x}, expected {IMAGE_MAGIC:#010x}"),
        });
    }
    let count = images.read_u32("image count")? as usize;
    let height = images.read_u32("image height")? as usize;
    let width = images.read_u32("image width")? as usize;
    let mut pixels = vec![0u8; count * height * width];
    images.read_exact(&mut pixels, "pixel payload")?;
    images.expect_eof(images_path)?;

    let mut labels_file = Tracked::new(BufReader::new(File::open(labels_path)?));
    let magic = labels_file.read_u32("label magic")?;
    if magic != LABEL_MAGIC {
        return Err(Error::Format {
            offset: 0,
            message: format!("bad label magic {magic:#010x}, expected {LABEL_MAGIC:#010x}"),
        });
    }
    let label_count = labels_file.read_u32("label count")? as usize;
    if label_count != count {
        return Err(Error::Format {
            offset: 4,
            message: format!("{count} images but {label_count} labels"),
        });
    }
    let mut raw_labels = vec![0u8; label_count];
    labels_file.read_exact(&mut raw_labels, "label payload")?;
    labels_file.expect_eof(labels_path)?;

    let data: Vec<f64> = pixels.iter().map(|&p| f64::from(p) / 255.0).collect();
    let labels: Vec<usize> = raw_labels.iter().map(|&l| l as usize).collect();
    let num_classes = labels.iter().copied().max().map_or(1, |m| m + 1);
    Dataset::new(
        Tensor::new(vec![count, height * width], data)?,
        labels,
        DataMeta {
            source: images_path.display().to_string(),
            shape: SampleShape::Raster { height, width },
            num_classes,
        },
    )
}


#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_two_pixels_scale_to_unit_range() {
        let dir = tempfile::tempdir().unwrap();
        let img = dir.path().join("img.idx");
        let lab = dir.path().join("lab.idx");
        fixture::write_images(&img, 1, 2, 2, &[0, 255, 128, 64]);
        fixture::write_labels(&lab, &[3]);
        let d = load_idx(&img, &lab).unwrap();
        assert_eq!(d.samples.row(0), &[0.0, 1.0, 128.0 / 255.0, 64.0 / 255.0]);
        assert_eq!(d.labels, vec![3]);
        assert_eq!(
            d.meta.shape,
            SampleShape::Raster {
                height: 2,
                width: 2
            }
        );
    }

    #[test]
    fn mismatched_counts_are_format_errors() {
        let dir = tempfile::tempdir().unwrap();
        let img = dir.path().join("img.idx");
        let lab = dir.path().join("lab.idx");
        fixture::write_images(&img, 2, 1, 1, &[10, 20]);
        fixture::write_labels(&lab, &[0, 1, 0]);
        let err = load_idx(&img, &lab).unwrap_err();
        assert!(matches!(err, Error::Format { .. }), "got {err:?}");
    }

    #[test]
    fn bad_magic_is_reported_at_offset_zero() {
        let dir = tempfile::tempdir().unwrap();
        let img = dir.path().join("img.idx");
        let lab = dir.path().join("lab.idx");
        fixture::write_labels(&img, &[1]); // label magic where image magic belongs
        fixture::write_labels(&lab, &[1]);
        match load_idx(&img, &lab) {
            Err(Error::Format { offset, message }) => {
                assert_eq!(offset, 0);
                assert!(message.contains("magic"));
            }
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn truncation_reports_byte_offset() {
        let dir = tempfile::tempdir().unwrap();
        let img = dir.path().join("img.idx");
        let lab = dir.path().join("lab.idx");
        fixture::write_images(&img, 2, 2, 2, &[0; 8]);
        // Chop the last three payload bytes off.
        let bytes = std::fs::read(&img).unwrap();
        std::fs::write(&img, &bytes[..bytes.len() - 3]).unwrap();
        fixture::write_labels(&lab, &[0, 1]);
        match load_idx(&img, &lab) {
            Err(Error::Format { offset, message }) => {
                assert_eq!(offset, 16);
                assert!(message.contains("pixel payload"));
            }
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn round_trip_preserves_content() {
        let dir = tempfile::tempdir().unwrap();
        let img = dir.path().join("img.idx");
        let lab = dir.path().join("lab.idx");
        let pixels: Vec<u8> = (0..3 * 4 * 4).map(|i| (i * 7 % 256) as u8).collect();
        fixture::write_images(&img, 3, 4, 4, &pixels);
        fixture::write_labels(&lab, &[2, 0, 1]);
        let d = load_idx(&img, &lab).unwrap();
        assert_eq!(d.len(), 3);
        for (i, &p) in pixels.iter().enumerate() {
            let v = d.samples.data()[i];
            assert!((v - f64::from(p) / 255.0).abs() < 1e-15);
        }
        assert_eq!(d.labels, vec![2, 0, 1]);
    }
}
