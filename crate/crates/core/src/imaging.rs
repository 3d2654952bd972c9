//! Raster types shared by the pipeline, plus image and mask file I/O.

use std::path::Path;

use image::{DynamicImage, GrayImage, ImageError, ImageFormat, ImageReader};

use crate::colorspace::ChannelId;
use crate::error::{Error, Result};

/// Luminance at or above this value marks a cloud pixel in a mask file.
pub const MASK_THRESHOLD: u8 = 128;
/// Fraction of mid-gray pixels above which a mask file is rejected.
pub const AMBIGUOUS_FRACTION: f64 = 0.01;

fn check_dims(width: usize, height: usize, len: usize, what: &str) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidRaster(format!(
            "{what} must be at least 1x1, got {width}x{height}"
        )));
    }
    if width.checked_mul(height) != Some(len) {
        return Err(Error::InvalidRaster(format!(
            "{what} has {len} elements, expected {width}x{height}"
        )));
    }
    Ok(())
}

/// 8-bit RGB raster, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    pixels: Vec<[u8; 3]>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, pixels: Vec<[u8; 3]>) -> Result<Self> {
        check_dims(width, height, pixels.len(), "image")?;
        Ok(Self { width, height, pixels })
    }

    /// Builds an image by evaluating `f(x, y)` for every pixel.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [u8; 3]) -> Result<Self> {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Self::new(width, height, pixels)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn pixels(&self) -> &[[u8; 3]] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        self.pixels[y * self.width + x]
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        let raw: Vec<u8> = self.pixels.iter().flatten().copied().collect();
        let buf = image::RgbImage::from_raw(self.width as u32, self.height as u32, raw)
            .expect("pixel buffer matches dimensions");
        save_with_format(&DynamicImage::ImageRgb8(buf), path)
    }
}

/// Single-channel real-valued raster produced by a color transform.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMap {
    width: usize,
    height: usize,
    values: Vec<f64>,
    channel: Option<ChannelId>,
}

impl ChannelMap {
    /// `channel` is `None` for maps that did not come from a color transform
    /// (synthetic inputs, quantized maps).
    pub fn new(width: usize, height: usize, values: Vec<f64>, channel: Option<ChannelId>) -> Result<Self> {
        check_dims(width, height, values.len(), "channel map")?;
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidRaster(format!("non-finite value at index {i}")));
        }
        Ok(Self {
            width,
            height,
            values,
            channel,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut values = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                values.push(f(x, y));
            }
        }
        Self::new(width, height, values, None)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn channel(&self) -> Option<ChannelId> {
        self.channel
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    /// Returns `(min, max)` over all values.
    pub fn range(&self) -> (f64, f64) {
        self.values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    /// Applies `f` to every value; fails if the result is not finite.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(
            self.width,
            self.height,
            self.values.iter().map(|&v| f(v)).collect(),
            self.channel,
        )
    }
}

/// Binary per-pixel raster: 0 = sky, 1 = cloud.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CloudMask {
    width: usize,
    height: usize,
    labels: Vec<u8>,
}

impl CloudMask {
    pub const SKY: u8 = 0;
    pub const CLOUD: u8 = 1;

    pub fn new(width: usize, height: usize, labels: Vec<u8>) -> Result<Self> {
        check_dims(width, height, labels.len(), "mask")?;
        if let Some(i) = labels.iter().position(|&l| l > 1) {
            return Err(Error::InvalidRaster(format!(
                "mask label {} at index {i} is not 0 or 1",
                labels[i]
            )));
        }
        Ok(Self { width, height, labels })
    }

    pub fn filled(width: usize, height: usize, label: u8) -> Result<Self> {
        Self::new(width, height, vec![label; width * height])
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Result<Self> {
        let mut labels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                labels.push(u8::from(f(x, y)));
            }
        }
        Self::new(width, height, labels)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn is_cloud(&self, x: usize, y: usize) -> bool {
        self.labels[y * self.width + x] == Self::CLOUD
    }

    pub fn cloud_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l == Self::CLOUD).count()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn complement(&self) -> Self {
        Self {
            width: self.width,
            height: self.height,
            labels: self.labels.iter().map(|&l| 1 - l).collect(),
        }
    }
}

fn open_checked(path: &Path) -> Result<DynamicImage> {
    if !path.exists() {
        return Err(Error::FileNotFound(path.to_path_buf()));
    }
    let reader = ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?;
    match reader.format() {
        Some(ImageFormat::Png | ImageFormat::Jpeg) => {}
        _ => return Err(Error::UnsupportedFormat(path.to_path_buf())),
    }
    reader.decode().map_err(|e| match e {
        ImageError::Unsupported(_) => Error::UnsupportedFormat(path.to_path_buf()),
        ImageError::IoError(io) if io.kind() != std::io::ErrorKind::UnexpectedEof => Error::io(path, io),
        other => Error::CorruptImage {
            path: path.to_path_buf(),
            reason: other.to_string(),
        },
    })
}

/// Decodes a PNG or JPEG file. 16-bit sources are scaled down to 8 bits.
pub fn load_image(path: impl AsRef<Path>) -> Result<RgbImage> {
    let path = path.as_ref();
    let rgb = open_checked(path)?.to_rgb8();
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    let pixels = rgb.pixels().map(|p| p.0).collect();
    RgbImage::new(w, h, pixels)
}

/// Integer Rec.601 luma, exact for gray pixels.
fn luma601(p: [u8; 3]) -> u8 {
    let [r, g, b] = p.map(u32::from);
    ((299 * r + 587 * g + 114 * b + 500) / 1000) as u8
}

/// Reads a ground-truth or predicted mask file.
///
/// Pixels with luminance >= 128 are cloud. Files where more than 1% of the
/// pixels fall strictly inside (64, 192) are rejected as non-binary.
pub fn load_mask(path: impl AsRef<Path>) -> Result<CloudMask> {
    let path = path.as_ref();
    let img = open_checked(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let luma: Vec<u8> = match img {
        DynamicImage::ImageLuma8(_)
        | DynamicImage::ImageLumaA8(_)
        | DynamicImage::ImageLuma16(_)
        | DynamicImage::ImageLumaA16(_) => img.to_luma8().into_raw(),
        other => other.to_rgb8().pixels().map(|p| luma601(p.0)).collect(),
    };
    let ambiguous = luma.iter().filter(|&&l| l > 64 && l < 192).count();
    if ambiguous as f64 > AMBIGUOUS_FRACTION * luma.len() as f64 {
        return Err(Error::AmbiguousMask {
            path: path.to_path_buf(),
            ambiguous,
            total: luma.len(),
        });
    }
    let labels = luma.into_iter().map(|l| u8::from(l >= MASK_THRESHOLD)).collect();
    CloudMask::new(w, h, labels)
}

fn save_with_format(img: &DynamicImage, path: &Path) -> Result<()> {
    img.save_with_format(path, ImageFormat::Png).map_err(|e| match e {
        ImageError::IoError(io) => Error::io(path, io),
        other => Error::io(path, std::io::Error::other(other.to_string())),
    })
}

/// Writes the mask as an 8-bit grayscale PNG with cloud = 255 and sky = 0.
pub fn save_mask(mask: &CloudMask, path: impl AsRef<Path>) -> Result<()> {
    let raw = mask.labels.iter().map(|&l| l * 255).collect();
    let buf = GrayImage::from_raw(mask.width as u32, mask.height as u32, raw).expect("mask buffer matches dimensions");
    save_with_format(&DynamicImage::ImageLuma8(buf), path.as_ref())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn write_gray(path: &Path, w: u32, h: u32, data: Vec<u8>) {
        GrayImage::from_raw(w, h, data).unwrap().save(path).unwrap();
    }

    #[test]
    fn raster_invariants_are_enforced() {
        assert!(RgbImage::new(0, 1, vec![]).is_err());
        assert!(RgbImage::new(2, 2, vec![[0; 3]; 3]).is_err());
        assert!(ChannelMap::new(1, 1, vec![f64::NAN], None).is_err());
        assert!(ChannelMap::new(1, 1, vec![f64::INFINITY], None).is_err());
        assert!(CloudMask::new(1, 1, vec![2]).is_err());
        assert!(CloudMask::new(1, 2, vec![0, 1]).is_ok());
    }

    #[test]
    fn white_png_decodes_to_white_pixels() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("white.png");
        image::RgbImage::from_pixel(2, 2, image::Rgb([255, 255, 255]))
            .save(&p)
            .unwrap();
        let img = load_image(&p).unwrap();
        assert_eq!(img, RgbImage::new(2, 2, vec![[255, 255, 255]; 4]).unwrap());
    }

    #[test]
    fn sixteen_bit_png_is_scaled() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("deep.png");
        let buf: image::ImageBuffer<image::Rgb<u16>, Vec<u16>> =
            image::ImageBuffer::from_raw(1, 2, vec![65535, 0, 32896, 0, 257, 65535]).unwrap();
        DynamicImage::ImageRgb16(buf).save(&p).unwrap();
        let img = load_image(&p).unwrap();
        assert_eq!(img.pixels(), &[[255, 0, 128], [0, 1, 255]]);
    }

    #[test]
    fn missing_and_corrupt_files() {
        let dir = tempfile::tempdir().unwrap();
        let missing = dir.path().join("nope.png");
        assert!(matches!(load_image(&missing), Err(Error::FileNotFound(_))));
        assert!(matches!(load_mask(&missing), Err(Error::FileNotFound(_))));

        let fake = dir.path().join("fake.png");
        std::fs::write(&fake, "this is not an image\n").unwrap();
        assert!(matches!(load_image(&fake), Err(Error::CorruptImage { .. })));
        assert!(matches!(load_mask(&fake), Err(Error::CorruptImage { .. })));

        let unknown = dir.path().join("notes.txt");
        std::fs::write(&unknown, "plain text").unwrap();
        assert!(matches!(load_image(&unknown), Err(Error::UnsupportedFormat(_))));
    }

    #[test]
    fn binary_mask_file_maps_to_labels() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.png");
        write_gray(&p, 2, 2, vec![0, 255, 255, 0]);
        assert_eq!(load_mask(&p).unwrap().labels(), &[0, 1, 1, 0]);

        write_gray(&p, 3, 1, vec![255; 3]);
        assert_eq!(load_mask(&p).unwrap().labels(), &[1, 1, 1]);
    }

    #[test]
    fn rgb_mask_uses_luminance() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("rgb.png");
        image::RgbImage::from_raw(2, 1, vec![250, 250, 250, 10, 0, 5])
            .unwrap()
            .save(&p)
            .unwrap();
        assert_eq!(load_mask(&p).unwrap().labels(), &[1, 0]);
    }

    #[test]
    fn mid_gray_mask_is_ambiguous() {
        // Half the pixels spread over 68..=188, all strictly inside (64, 192).
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("gray.png");
        let data: Vec<u8> = (0..100u32)
            .map(|i| if i % 2 == 0 { 0 } else { (68 + (i * 7) % 121) as u8 })
            .collect();
        let ambiguous = data.iter().filter(|&&v| v > 64 && v < 192).count();
        assert_eq!(ambiguous, 50);
        write_gray(&p, 10, 10, data);
        match load_mask(&p) {
            Err(Error::AmbiguousMask { ambiguous, total, .. }) => {
                assert_eq!((ambiguous, total), (50, 100));
            }
            other => panic!("expected AmbiguousMask, got {other:?}"),
        }
    }

    #[test]
    fn guard_band_tolerates_a_few_gray_pixels() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("aa.png");
        let mut data = vec![0u8; 200];
        data[..100].fill(255);
        data[7] = 130;
        data[150] = 100;
        write_gray(&p, 20, 10, data);
        let m = load_mask(&p).unwrap();
        assert_eq!(m.cloud_count(), 100);
    }

    #[test]
    fn single_cloud_pixel_saves_as_255() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("one.png");
        save_mask(&CloudMask::new(1, 1, vec![1]).unwrap(), &p).unwrap();
        let back = image::open(&p).unwrap();
        assert!(matches!(back, DynamicImage::ImageLuma8(_)));
        assert_eq!(back.to_luma8().into_raw(), vec![255]);
    }

    #[test]
    fn save_into_missing_directory_fails() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("no/such/dir/m.png");
        let m = CloudMask::filled(2, 2, 0).unwrap();
        assert!(matches!(save_mask(&m, &p), Err(Error::Io { .. })));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn mask_round_trip(w in 1usize..24, h in 1usize..24, seed in any::<u64>()) {
            let labels: Vec<u8> = (0..w * h)
                .map(|i| ((seed.rotate_left(i as u32 % 64) ^ i as u64) & 1) as u8)
                .collect();
            let m = CloudMask::new(w, h, labels).unwrap();
            let dir = tempfile::tempdir().unwrap();
            let p = dir.path().join("rt.png");
            save_mask(&m, &p).unwrap();
            prop_assert_eq!(load_mask(&p).unwrap(), m);
        }
    }
}
