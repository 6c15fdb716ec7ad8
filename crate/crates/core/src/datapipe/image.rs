use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use image::codecs::pnm::{PnmDecoder, PnmEncoder, PnmSubtype, SampleEncoding};
use image::{ExtendedColorType, ImageDecoder};

use crate::error::{invalid, CdlError, Result};

/// Row-major grayscale image with intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    samples: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, samples: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return invalid("image dimensions must be positive");
        }
        if samples.len() != width * height {
            return Err(CdlError::ShapeMismatch(format!(
                "{}x{} image needs {} samples, got {}",
                width,
                height,
                width * height,
                samples.len()
            )));
        }
        if let Some(v) = samples.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return invalid(format!("sample {v} outside [0, 1]"));
        }
        Ok(Self {
            width,
            height,
            samples,
        })
    }

    pub fn constant(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    /// Converts 8-bit samples by dividing by 255.
    pub fn from_u8(width: usize, height: usize, pixels: &[u8]) -> Result<Self> {
        Self::new(
            width,
            height,
            pixels.iter().map(|&p| f64::from(p) / 255.0).collect(),
        )
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.samples[y * self.width + x]
    }

    /// Quantizes to 8 bits with rounding.
    pub fn to_u8(&self) -> Vec<u8> {
        self.samples
            .iter()
            .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect()
    }
}

/// Reads a binary PGM (`P5`) with maxval 255.
pub fn read_pgm(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let file = File::open(path)?;
    let decoder = PnmDecoder::new(BufReader::new(file))
        .map_err(|e| CdlError::Image(format!("{}: {e}", path.display())))?;
    if decoder.subtype() != PnmSubtype::Graymap(SampleEncoding::Binary) {
        return Err(CdlError::Image(format!(
            "{}: expected binary graymap (P5)",
            path.display()
        )));
    }
    let maxval = decoder.header().maximal_sample();
    if maxval != 255 {
        return Err(CdlError::Image(format!(
            "{}: expected maxval 255, found {maxval}",
            path.display()
        )));
    }
    let (w, h) = decoder.dimensions();
    let mut pixels = vec![0u8; decoder.total_bytes() as usize];
    decoder
        .read_image(&mut pixels)
        .map_err(|e| CdlError::Image(format!("{}: {e}", path.display())))?;
    Image::from_u8(w as usize, h as usize, &pixels)
}

/// Writes a binary PGM (`P5`, maxval 255).
pub fn write_pgm(path: impl AsRef<Path>, image: &Image) -> Result<()> {
    let mut out = BufWriter::new(File::create(path.as_ref())?);
    PnmEncoder::new(&mut out)
        .with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary))
        .encode(
            image.to_u8().as_slice(),
            image.width() as u32,
            image.height() as u32,
            ExtendedColorType::L8,
        )
        .map_err(|e| CdlError::Image(e.to_string()))?;
    out.flush()?;
    Ok(())
}

/// Normalized 1-D Gaussian taps with radius `ceil(3 sigma)`.
pub fn gaussian_kernel(sigma: f64) -> Result<Vec<f64>> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return invalid(format!("blur sigma must be positive, got {sigma}"));
    }
    let radius = (3.0 * sigma).ceil() as isize;
    let mut taps: Vec<f64> = (-radius..=radius)
        .map(|k| (-((k * k) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|w| *w /= total);
    Ok(taps)
}

/// Separable Gaussian blur with edge replication at the borders.
pub fn gaussian_blur(image: &Image, sigma: f64) -> Result<Image> {
    let taps = gaussian_kernel(sigma)?;
    let radius = (taps.len() / 2) as isize;
    let (w, h) = (image.width as isize, image.height as isize);
    let clamp = |v: isize, hi: isize| v.clamp(0, hi - 1) as usize;

    let mut horiz = vec![0.0; image.samples.len()];
    for y in 0..h {
        let row = &image.samples[(y * w) as usize..((y + 1) * w) as usize];
        for x in 0..w {
            let mut acc = 0.0;
            for (k, wk) in taps.iter().enumerate() {
                acc += wk * row[clamp(x + k as isize - radius, w)];
            }
            horiz[(y * w + x) as usize] = acc;
        }
    }

    let mut out = vec![0.0; image.samples.len()];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (k, wk) in taps.iter().enumerate() {
                let yy = clamp(y + k as isize - radius, h);
                acc += wk * horiz[yy * w as usize + x as usize];
            }
            out[(y * w + x) as usize] = acc.clamp(0.0, 1.0);
        }
    }
    Image::new(image.width, image.height, out)
}
