use crate::error::{Error, Result};
use std::path::Path;

/// 8-bit RGB image, row-major, 3 bytes per pixel.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RasterImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl RasterImage {
    pub fn new(width: usize, height: usize) -> Self {
        RasterImage {
            width,
            height,
            data: vec![0; width * height * 3],
        }
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Self {
        let mut img = Self::new(width, height);
        for px in img.data.chunks_exact_mut(3) {
            px.copy_from_slice(&rgb);
        }
        img
    }

    pub fn from_raw(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != width * height * 3 {
            return Err(Error::shape(
                "raster",
                format!("{} bytes for {width}x{height} RGB", data.len()),
            ));
        }
        Ok(RasterImage {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn as_raw(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn put(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn contains(&self, x: i64, y: i64) -> bool {
        x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height
    }

    /// Copies the `w x h` region at `(x0, y0)`; the region must lie inside.
    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Result<RasterImage> {
        if x0 + w > self.width || y0 + h > self.height {
            return Err(Error::invalid(
                "crop",
                format!(
                    "{w}x{h} at ({x0},{y0}) exceeds {}x{}",
                    self.width, self.height
                ),
            ));
        }
        let mut out = RasterImage::new(w, h);
        for y in 0..h {
            let src = ((y0 + y) * self.width + x0) * 3;
            out.data[y * w * 3..(y + 1) * w * 3].copy_from_slice(&self.data[src..src + w * 3]);
        }
        Ok(out)
    }

    /// Writes `tile` with its top-left corner at `(x0, y0)`.
    pub fn paste(&mut self, tile: &RasterImage, x0: usize, y0: usize) -> Result<()> {
        if x0 + tile.width > self.width || y0 + tile.height > self.height {
            return Err(Error::invalid("paste", "tile exceeds destination"));
        }
        for y in 0..tile.height {
            let dst = ((y0 + y) * self.width + x0) * 3;
            self.data[dst..dst + tile.width * 3]
                .copy_from_slice(&tile.data[y * tile.width * 3..(y + 1) * tile.width * 3]);
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<RasterImage> {
        let img = image::open(path)?.to_rgb8();
        let (w, h) = img.dimensions();
        RasterImage::from_raw(w as usize, h as usize, img.into_raw())
    }

    /// Saves as PNG or TIFF depending on the extension.
    pub fn save(&self, path: &Path) -> Result<()> {
        let buf = image::RgbImage::from_raw(self.width as u32, self.height as u32, self.data.clone())
            .expect("buffer sized by construction");
        buf.save(path)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn crop_and_paste_roundtrip() {
        let mut img = RasterImage::new(5, 4);
        for y in 0..4 {
            for x in 0..5 {
                img.put(x, y, [x as u8, y as u8, (x * y) as u8]);
            }
        }
        let c = img.crop(1, 1, 3, 2).unwrap();
        assert_eq!(c.get(0, 0), [1, 1, 1]);
        let mut blank = RasterImage::new(5, 4);
        blank.paste(&c, 1, 1).unwrap();
        assert_eq!(blank.get(3, 2), img.get(3, 2));
        assert!(img.crop(3, 0, 3, 1).is_err());
    }

    #[test]
    fn png_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.png");
        let mut img = RasterImage::filled(7, 3, [10, 200, 30]);
        img.put(6, 2, [255, 0, 1]);
        img.save(&p).unwrap();
        assert_eq!(RasterImage::load(&p).unwrap(), img);
    }
}
