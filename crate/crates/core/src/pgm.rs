//! Binary PGM (P5) images: codec-free, byte-exact image output for golden
//! tests, dataset dumps, and traversal grids.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// Grayscale image buffer with values in [0, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct GrayImage {
    pub height: usize,
    pub width: usize,
    pub pixels: Vec<f64>,
}

impl GrayImage {
    pub fn new(height: usize, width: usize) -> Self {
        GrayImage { height, width, pixels: vec![0.0; height * width] }
    }

    pub fn from_pixels(height: usize, width: usize, pixels: Vec<f64>) -> Self {
        assert_eq!(pixels.len(), height * width);
        GrayImage { height, width, pixels }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        self.pixels
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect()
    }

    pub fn write_pgm(&self, path: &Path) -> Result<()> {
        let mut out = Vec::with_capacity(self.pixels.len() + 32);
        write!(out, "P5\n{} {}\n255\n", self.width, self.height)?;
        out.extend_from_slice(&self.to_bytes());
        std::fs::write(path, out)?;
        Ok(())
    }

    pub fn read_pgm(path: &Path) -> Result<Self> {
        let raw = std::fs::read(path)?;
        parse_pgm(&raw).map_err(|m| Error::Config(format!("{}: {m}", path.display())))
    }
}

fn parse_pgm(raw: &[u8]) -> std::result::Result<GrayImage, String> {
    let mut pos = 0usize;
    let mut token = |raw: &[u8]| -> std::result::Result<String, String> {
        while pos < raw.len() && raw[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < raw.len() && !raw[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err("truncated header".into());
        }
        Ok(String::from_utf8_lossy(&raw[start..pos]).into_owned())
    };
    if token(raw)? != "P5" {
        return Err("not a P5 pgm".into());
    }
    let width: usize = token(raw)?.parse().map_err(|_| "bad width")?;
    let height: usize = token(raw)?.parse().map_err(|_| "bad height")?;
    let maxval: usize = token(raw)?.parse().map_err(|_| "bad maxval")?;
    if maxval != 255 {
        return Err(format!("unsupported maxval {maxval}"));
    }
    pos += 1; // single whitespace after maxval
    let need = width * height;
    if raw.len() < pos + need {
        return Err("truncated pixel data".into());
    }
    let pixels = raw[pos..pos + need].iter().map(|&b| b as f64 / 255.0).collect();
    Ok(GrayImage { height, width, pixels })
}

/// Tile a rows x cols grid of equally-sized images into one image.
pub fn tile_grid(tiles: &[GrayImage], rows: usize, cols: usize) -> GrayImage {
    assert_eq!(tiles.len(), rows * cols, "tile count does not match grid");
    let (th, tw) = (tiles[0].height, tiles[0].width);
    let mut grid = GrayImage::new(rows * th, cols * tw);
    for (idx, tile) in tiles.iter().enumerate() {
        assert_eq!((tile.height, tile.width), (th, tw), "tile sizes differ");
        let (r, c) = (idx / cols, idx % cols);
        for y in 0..th {
            let dst = (r * th + y) * grid.width + c * tw;
            grid.pixels[dst..dst + tw].copy_from_slice(&tile.pixels[y * tw..(y + 1) * tw]);
        }
    }
    grid
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_roundtrip_is_byte_exact() {
        let img = GrayImage::from_pixels(2, 3, vec![0.0, 0.5, 1.0, 0.25, 0.75, 0.1]);
        let dir = std::env::temp_dir().join("disent_pgm_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("roundtrip.pgm");
        img.write_pgm(&path).unwrap();
        let back = GrayImage::read_pgm(&path).unwrap();
        assert_eq!(back.to_bytes(), img.to_bytes());
        assert_eq!((back.height, back.width), (2, 3));
    }

    #[test]
    fn grid_dimensions_multiply() {
        let tiles: Vec<GrayImage> = (0..6).map(|i| {
            GrayImage::from_pixels(4, 4, vec![i as f64 / 6.0; 16])
        }).collect();
        let grid = tile_grid(&tiles, 2, 3);
        assert_eq!((grid.height, grid.width), (8, 12));
        // top-left tile occupies rows 0..4, cols 0..4
        assert_eq!(grid.pixels[0], 0.0);
        assert_eq!(grid.pixels[4], 1.0 / 6.0);
    }
}
