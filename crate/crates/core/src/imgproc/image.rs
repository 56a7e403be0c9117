use std::fs;
use std::io::Write;
use std::path::Path;

use super::ImgError;

/// Default number of gray levels (8-bit).
pub const DEFAULT_LEVELS: u32 = 256;

/// Row-major grayscale image with `levels` gray levels (pixel values in `0..levels`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    levels: u32,
    pixels: Vec<u16>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, levels: u32, pixels: Vec<u16>) -> Result<Self, ImgError> {
        if width == 0 || height == 0 {
            return Err(ImgError::EmptyImage);
        }
        if !(2..=65536).contains(&levels) {
            return Err(ImgError::InvalidLevels(levels));
        }
        if pixels.len() != width * height {
            return Err(ImgError::PixelCount { expected: width * height, actual: pixels.len() });
        }
        if let Some(&v) = pixels.iter().find(|&&v| u32::from(v) >= levels) {
            return Err(ImgError::LevelOutOfRange { value: u32::from(v), levels });
        }
        Ok(Self { width, height, levels, pixels })
    }

    /// 8-bit image from raw bytes.
    pub fn from_u8(width: usize, height: usize, bytes: &[u8]) -> Result<Self, ImgError> {
        Self::new(width, height, DEFAULT_LEVELS, bytes.iter().map(|&b| u16::from(b)).collect())
    }

    pub fn filled(width: usize, height: usize, levels: u32, value: u16) -> Result<Self, ImgError> {
        Self::new(width, height, levels, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn levels(&self) -> u32 {
        self.levels
    }

    pub fn pixels(&self) -> &[u16] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u16 {
        self.pixels[y * self.width + x]
    }

    /// Builds an image of the same geometry and level count; caller guarantees validity.
    pub(crate) fn with_pixels(&self, pixels: Vec<u16>) -> Self {
        debug_assert_eq!(pixels.len(), self.pixels.len());
        debug_assert!(pixels.iter().all(|&v| u32::from(v) < self.levels));
        Self { width: self.width, height: self.height, levels: self.levels, pixels }
    }

    /// Pixels as bytes; only valid for 8-bit images.
    pub fn to_u8(&self) -> Result<Vec<u8>, ImgError> {
        if self.levels != DEFAULT_LEVELS {
            return Err(ImgError::NotEightBit(self.levels));
        }
        Ok(self.pixels.iter().map(|&v| v as u8).collect())
    }

    /// Nearest-neighbour resize. Used to fit arbitrary inputs to a model's input size.
    pub fn resize_nearest(&self, width: usize, height: usize) -> Result<Self, ImgError> {
        if width == 0 || height == 0 {
            return Err(ImgError::EmptyImage);
        }
        if width == self.width && height == self.height {
            return Ok(self.clone());
        }
        let mut out = Vec::with_capacity(width * height);
        for y in 0..height {
            let sy = (y * self.height) / height;
            for x in 0..width {
                let sx = (x * self.width) / width;
                out.push(self.get(sx, sy));
            }
        }
        Ok(self.with_pixels_resized(width, height, out))
    }

    fn with_pixels_resized(&self, width: usize, height: usize, pixels: Vec<u16>) -> Self {
        Self { width, height, levels: self.levels, pixels }
    }

    /// Encodes as binary PGM (P5, maxval 255).
    pub fn encode_pgm(&self) -> Result<Vec<u8>, ImgError> {
        let bytes = self.to_u8()?;
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&bytes);
        Ok(out)
    }

    pub fn decode_pgm(data: &[u8]) -> Result<Self, ImgError> {
        let mut pos = 0usize;
        let mut fields = Vec::with_capacity(4);
        while fields.len() < 4 {
            // skip whitespace and comments
            while pos < data.len() {
                if data[pos].is_ascii_whitespace() {
                    pos += 1;
                } else if data[pos] == b'#' {
                    while pos < data.len() && data[pos] != b'\n' {
                        pos += 1;
                    }
                } else {
                    break;
                }
            }
            let start = pos;
            while pos < data.len() && !data[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(ImgError::Decode("truncated PGM header".into()));
            }
            fields.push(String::from_utf8_lossy(&data[start..pos]).into_owned());
        }
        if fields[0] != "P5" {
            return Err(ImgError::Decode(format!("unsupported PGM magic {:?}", fields[0])));
        }
        let parse = |s: &str| -> Result<usize, ImgError> {
            s.parse().map_err(|_| ImgError::Decode(format!("bad PGM header field {s:?}")))
        };
        let (width, height, maxval) = (parse(&fields[1])?, parse(&fields[2])?, parse(&fields[3])?);
        if maxval == 0 || maxval > 255 {
            return Err(ImgError::Decode(format!("unsupported PGM maxval {maxval}")));
        }
        // exactly one whitespace byte separates the header from the raster
        pos += 1;
        let n = width * height;
        if data.len() < pos + n {
            return Err(ImgError::Decode("truncated PGM raster".into()));
        }
        let raster = &data[pos..pos + n];
        if maxval == 255 {
            Self::from_u8(width, height, raster)
        } else {
            let scaled: Vec<u8> = raster
                .iter()
                .map(|&v| ((u32::from(v.min(maxval as u8)) * 255 + maxval as u32 / 2) / maxval as u32) as u8)
                .collect();
            Self::from_u8(width, height, &scaled)
        }
    }

    /// Reads an 8-bit grayscale image. PGM is decoded directly; other formats go through `image`.
    pub fn read(path: &Path) -> Result<Self, ImgError> {
        let data = fs::read(path).map_err(|e| ImgError::Io(format!("{}: {e}", path.display())))?;
        if data.starts_with(b"P5") {
            return Self::decode_pgm(&data);
        }
        let decoded = image::load_from_memory(&data)
            .map_err(|e| ImgError::Decode(format!("{}: {e}", path.display())))?
            .to_luma8();
        let (w, h) = decoded.dimensions();
        Self::from_u8(w as usize, h as usize, decoded.as_raw())
    }

    /// Writes PGM for `.pgm` paths and PNG (8-bit gray) for `.png`.
    pub fn write(&self, path: &Path) -> Result<(), ImgError> {
        let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        match ext.as_deref() {
            Some("png") => {
                let buf = image::GrayImage::from_raw(self.width as u32, self.height as u32, self.to_u8()?)
                    .ok_or_else(|| ImgError::Decode("raster size mismatch".into()))?;
                buf.save_with_format(path, image::ImageFormat::Png)
                    .map_err(|e| ImgError::Io(format!("{}: {e}", path.display())))
            }
            _ => {
                let bytes = self.encode_pgm()?;
                let mut f = fs::File::create(path).map_err(|e| ImgError::Io(format!("{}: {e}", path.display())))?;
                f.write_all(&bytes).map_err(|e| ImgError::Io(format!("{}: {e}", path.display())))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_invalid_geometry_and_levels() {
        assert!(matches!(GrayImage::new(0, 3, 256, vec![]), Err(ImgError::EmptyImage)));
        assert!(matches!(GrayImage::new(2, 2, 256, vec![0; 3]), Err(ImgError::PixelCount { .. })));
        assert!(matches!(GrayImage::new(1, 1, 16, vec![16]), Err(ImgError::LevelOutOfRange { .. })));
        assert!(matches!(GrayImage::new(1, 1, 1, vec![0]), Err(ImgError::InvalidLevels(1))));
    }

    #[test]
    fn pgm_roundtrip_with_comment() {
        let img = GrayImage::from_u8(3, 2, &[0, 1, 2, 253, 254, 255]).unwrap();
        let bytes = img.encode_pgm().unwrap();
        assert_eq!(&bytes[..11], b"P5\n3 2\n255\n");
        assert_eq!(GrayImage::decode_pgm(&bytes).unwrap(), img);

        let mut commented = b"P5\n# made by hand\n3 2\n255\n".to_vec();
        commented.extend_from_slice(&[0, 1, 2, 253, 254, 255]);
        assert_eq!(GrayImage::decode_pgm(&commented).unwrap(), img);
    }

    #[test]
    fn truncated_pgm_is_rejected() {
        let img = GrayImage::from_u8(2, 2, &[1, 2, 3, 4]).unwrap();
        let bytes = img.encode_pgm().unwrap();
        assert!(GrayImage::decode_pgm(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn png_roundtrip_on_disk() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.png");
        let img = GrayImage::from_u8(4, 1, &[9, 80, 160, 255]).unwrap();
        img.write(&path).unwrap();
        assert_eq!(GrayImage::read(&path).unwrap(), img);
    }
}
