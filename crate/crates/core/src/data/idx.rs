//! IDX containers (big-endian headers, `u8` payload). Paths ending in `.gz`
//! are read and written through gzip.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;

use super::LabeledDataset;
use crate::error::{Error, Result};
use crate::kernels::Points;

pub const IMAGES_MAGIC: u32 = 2051;
pub const LABELS_MAGIC: u32 = 2049;

/// Raw image payload as stored on disk.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IdxImages {
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
}

impl IdxImages {
    pub fn len(&self) -> usize {
        self.pixels
            .len()
            .checked_div(self.rows * self.cols)
            .unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn image(&self, i: usize) -> &[u8] {
        let size = self.rows * self.cols;
        &self.pixels[i * size..(i + 1) * size]
    }
}

fn is_gz(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "gz")
}

fn open(path: &Path) -> Result<Box<dyn Read>> {
    let f = BufReader::new(File::open(path)?);
    Ok(if is_gz(path) {
        Box::new(GzDecoder::new(f))
    } else {
        Box::new(f)
    })
}

/// Writes `bytes` to `path`, gzipped when the path ends in `.gz`.
fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    if is_gz(path) {
        // Fixed level and an empty gzip header keep the output reproducible.
        let mut enc = GzEncoder::new(f, Compression::new(9));
        enc.write_all(bytes)?;
        enc.finish()?.flush()?;
    } else {
        f.write_all(bytes)?;
        f.flush()?;
    }
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf).map_err(truncated)?;
    Ok(u32::from_be_bytes(buf))
}

fn truncated(e: std::io::Error) -> Error {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        Error::Format("truncated IDX file".into())
    } else {
        Error::Io(e)
    }
}

fn read_payload<R: Read>(r: &mut R, len: usize) -> Result<Vec<u8>> {
    let mut data = Vec::new();
    r.take(len as u64).read_to_end(&mut data)?;
    if data.len() != len {
        return Err(Error::Format(format!(
            "truncated IDX file: expected {len} payload bytes, got {}",
            data.len()
        )));
    }
    let mut extra = [0u8; 1];
    if r.read(&mut extra)? != 0 {
        return Err(Error::Format("trailing bytes after IDX payload".into()));
    }
    Ok(data)
}

fn check_magic(found: u32, expected: u32) -> Result<()> {
    if found == expected {
        Ok(())
    } else {
        Err(Error::Format(format!(
            "bad IDX magic {found}, expected {expected}"
        )))
    }
}

pub fn read_idx_images<R: Read>(mut r: R) -> Result<IdxImages> {
    check_magic(read_u32(&mut r)?, IMAGES_MAGIC)?;
    let n = read_u32(&mut r)? as usize;
    let rows = read_u32(&mut r)? as usize;
    let cols = read_u32(&mut r)? as usize;
    let len = n
        .checked_mul(rows)
        .and_then(|v| v.checked_mul(cols))
        .ok_or_else(|| Error::Format("IDX header sizes overflow".into()))?;
    let pixels = read_payload(&mut r, len)?;
    Ok(IdxImages { rows, cols, pixels })
}

pub fn read_idx_labels<R: Read>(mut r: R) -> Result<Vec<u8>> {
    check_magic(read_u32(&mut r)?, LABELS_MAGIC)?;
    let n = read_u32(&mut r)? as usize;
    read_payload(&mut r, n)
}

pub fn write_idx_images<W: Write>(images: &IdxImages, mut w: W) -> Result<()> {
    let n = images.len();
    if n * images.rows * images.cols != images.pixels.len() {
        return Err(Error::DimensionMismatch {
            expected: n * images.rows * images.cols,
            got: images.pixels.len(),
        });
    }
    for v in [
        IMAGES_MAGIC,
        n as u32,
        images.rows as u32,
        images.cols as u32,
    ] {
        w.write_all(&v.to_be_bytes())?;
    }
    w.write_all(&images.pixels)?;
    w.flush()?;
    Ok(())
}

pub fn write_idx_labels<W: Write>(labels: &[u8], mut w: W) -> Result<()> {
    w.write_all(&LABELS_MAGIC.to_be_bytes())?;
    w.write_all(&(labels.len() as u32).to_be_bytes())?;
    w.write_all(labels)?;
    w.flush()?;
    Ok(())
}

/// An image/label file pair kept as raw bytes, so subsets can be taken
/// without converting the whole file.
#[derive(Clone, Debug, PartialEq)]
pub struct IdxSet {
    pub images: IdxImages,
    pub labels: Vec<u8>,
    pub source: String,
}

impl IdxSet {
    pub fn open(images_path: &Path, labels_path: &Path) -> Result<Self> {
        let images = read_idx_images(open(images_path)?)?;
        let labels = read_idx_labels(open(labels_path)?)?;
        if images.len() != labels.len() {
            return Err(Error::Format(format!(
                "{} images but {} labels",
                images.len(),
                labels.len()
            )));
        }
        let source = images_path
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        Ok(IdxSet {
            images,
            labels,
            source,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Converts the chosen items, scaling pixels to `[0, 1]`.
    pub fn select(&self, indices: &[usize]) -> Result<LabeledDataset> {
        if let Some(&i) = indices.iter().find(|&&i| i >= self.len()) {
            return Err(Error::IndexOutOfRange {
                index: i,
                size: self.len(),
            });
        }
        let dim = self.images.rows * self.images.cols;
        if dim == 0 && !indices.is_empty() {
            return Err(Error::Format("IDX images have zero pixels".into()));
        }
        let data = indices
            .iter()
            .flat_map(|&i| self.images.image(i).iter().map(|&p| p as f64 / 255.0))
            .collect();
        let labels = indices
            .iter()
            .map(|&i| usize::from(self.labels[i]))
            .collect();
        let points = if indices.is_empty() {
            Points::empty(dim)
        } else {
            Points::new(data, dim)?
        };
        LabeledDataset::new(points, labels, self.source.clone())
    }

    pub fn to_dataset(&self) -> Result<LabeledDataset> {
        self.select(&(0..self.len()).collect::<Vec<_>>())
    }

    /// `n` distinct items drawn uniformly; the same draw as
    /// [`LabeledDataset::sample`] on the converted set.
    pub fn sample(&self, n: usize, seed: u64) -> Result<LabeledDataset> {
        self.select(&super::sample_indices(self.len(), n, seed)?)
    }
}

/// Reads an image/label pair, scaling pixels to `[0, 1]`.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<LabeledDataset> {
    IdxSet::open(images_path, labels_path)?.to_dataset()
}

/// Writes a dataset back to IDX, rounding pixels to `u8` after scaling by 255.
pub fn save_idx(
    ds: &LabeledDataset,
    side: usize,
    images_path: &Path,
    labels_path: &Path,
) -> Result<()> {
    crate::error::ensure_dim(side * side, ds.points.dim())?;
    let pixels = ds
        .points
        .as_slice()
        .iter()
        .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    let labels = ds
        .labels
        .iter()
        .map(|&l| {
            u8::try_from(l)
                .map_err(|_| Error::InvalidParameter(format!("label {l} does not fit in a byte")))
        })
        .collect::<Result<Vec<_>>>()?;
    let images = IdxImages {
        rows: side,
        cols: side,
        pixels,
    };
    write_idx_files(&images, &labels, images_path, labels_path)
}

pub fn write_idx_files(
    images: &IdxImages,
    labels: &[u8],
    images_path: &Path,
    labels_path: &Path,
) -> Result<()> {
    let mut buf = Vec::with_capacity(16 + images.pixels.len());
    write_idx_images(images, &mut buf)?;
    write_file(images_path, &buf)?;
    buf.clear();
    write_idx_labels(labels, &mut buf)?;
    write_file(labels_path, &buf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn header(magic: u32, dims: &[u32]) -> Vec<u8> {
        let mut v = magic.to_be_bytes().to_vec();
        for d in dims {
            v.extend_from_slice(&d.to_be_bytes());
        }
        v
    }

    #[test]
    fn empty_file_gives_empty_dataset() {
        let images = read_idx_images(&header(IMAGES_MAGIC, &[0, 28, 28])[..]).unwrap();
        assert!(images.is_empty());
        assert_eq!(
            read_idx_labels(&header(LABELS_MAGIC, &[0])[..]).unwrap(),
            Vec::<u8>::new()
        );

        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = (dir.path().join("i"), dir.path().join("l"));
        write_idx_files(&images, &[], &ip, &lp).unwrap();
        let ds = load_idx(&ip, &lp).unwrap();
        assert!(ds.is_empty());
        assert_eq!(ds.points.dim(), 784);
    }

    #[test]
    fn subset_matches_full_conversion() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = (dir.path().join("i.gz"), dir.path().join("l.gz"));
        let images = IdxImages {
            rows: 2,
            cols: 3,
            pixels: (0..30).map(|v| (v * 8) as u8).collect(),
        };
        write_idx_files(&images, &[3, 1, 4, 1, 5], &ip, &lp).unwrap();
        let set = IdxSet::open(&ip, &lp).unwrap();
        let full = set.to_dataset().unwrap();
        assert_eq!(full.source, "i.gz");
        assert_eq!(set.select(&[4, 0]).unwrap(), full.select(&[4, 0]).unwrap());
        assert_eq!(set.sample(3, 11).unwrap(), full.sample(3, 11).unwrap());
        assert!(set.select(&[5]).is_err());
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(
            read_idx_images(&header(LABELS_MAGIC, &[0, 28, 28])[..]),
            Err(Error::Format(_))
        ));
        assert!(matches!(
            read_idx_labels(&header(IMAGES_MAGIC, &[0])[..]),
            Err(Error::Format(_))
        ));
        let mut short = header(LABELS_MAGIC, &[3]);
        short.extend_from_slice(&[1, 2]);
        assert!(matches!(read_idx_labels(&short[..]), Err(Error::Format(_))));
        let mut long = header(LABELS_MAGIC, &[1]);
        long.extend_from_slice(&[1, 2]);
        assert!(matches!(read_idx_labels(&long[..]), Err(Error::Format(_))));
        assert!(matches!(
            read_idx_images(&[0u8, 0, 8][..]),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn count_mismatch_between_files() {
        let dir = tempfile::tempdir().unwrap();
        let ip = dir.path().join("img");
        let lp = dir.path().join("lab");
        let images = IdxImages {
            rows: 2,
            cols: 2,
            pixels: vec![0, 255, 128, 1],
        };
        write_idx_images(&images, File::create(&ip).unwrap()).unwrap();
        write_idx_labels(&[1, 2], File::create(&lp).unwrap()).unwrap();
        assert!(matches!(load_idx(&ip, &lp), Err(Error::Format(_))));
        write_idx_labels(&[7], File::create(&lp).unwrap()).unwrap();
        let ds = load_idx(&ip, &lp).unwrap();
        assert_eq!(ds.points.row(0), &[0.0, 1.0, 128.0 / 255.0, 1.0 / 255.0]);
        assert_eq!(ds.labels, vec![7]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn round_trip_is_bit_exact(
            n in 0usize..6,
            side in 1usize..5,
            seed in any::<u64>(),
            gz in any::<bool>(),
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let images = IdxImages {
                rows: side,
                cols: side,
                pixels: (0..n * side * side).map(|_| rng.random()).collect(),
            };
            let labels: Vec<u8> = (0..n).map(|_| rng.random_range(0..10)).collect();
            let dir = tempfile::tempdir().unwrap();
            let ext = if gz { ".gz" } else { "" };
            let ip = dir.path().join(format!("images{ext}"));
            let lp = dir.path().join(format!("labels{ext}"));
            write_idx_files(&images, &labels, &ip, &lp).unwrap();
            prop_assert_eq!(read_idx_images(open(&ip).unwrap()).unwrap(), images.clone());
            prop_assert_eq!(read_idx_labels(open(&lp).unwrap()).unwrap(), labels.clone());

            // Through the dataset layer and back.
            if n > 0 {
                let ds = load_idx(&ip, &lp).unwrap();
                let ip2 = dir.path().join(format!("again{ext}"));
                let lp2 = dir.path().join(format!("again-labels{ext}"));
                save_idx(&ds, side, &ip2, &lp2).unwrap();
                prop_assert_eq!(read_idx_images(open(&ip2).unwrap()).unwrap(), images);
                prop_assert_eq!(read_idx_labels(open(&lp2).unwrap()).unwrap(), labels);
            }
        }
    }
}
