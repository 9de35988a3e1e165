//! Deterministic synthetic ground-truth-factors dataset.
//!
//! The default "shapes5" profile renders one bright shape per image on a
//! 1x32x32 canvas from five discrete factors: shape {square, disc, diamond},
//! scale (half-width in pixels), 8x8 grid position, and intensity level.
//! Rasterization is integer arithmetic only, so images are bit-stable across
//! platforms, and positions keep a margin of the maximal half-width so no
//! shape ever clips the border.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::pgm::GrayImage;
use crate::rng::DetRng;
use crate::scalar::{c, Scalar};
use crate::tensor::Tensor;

/// Factor names and cardinalities of a ground-truth factor space.
#[derive(Clone, Debug, PartialEq)]
pub struct FactorSpace {
    pub names: Vec<&'static str>,
    pub cardinalities: Vec<usize>,
}

impl FactorSpace {
    pub fn num_factors(&self) -> usize {
        self.cardinalities.len()
    }

    pub fn size(&self) -> usize {
        self.cardinalities.iter().product()
    }

    pub fn index_to_factors(&self, mut idx: usize) -> Vec<usize> {
        let mut out = vec![0; self.num_factors()];
        for k in (0..self.num_factors()).rev() {
            out[k] = idx % self.cardinalities[k];
            idx /= self.cardinalities[k];
        }
        out
    }

    pub fn factors_to_index(&self, factors: &[usize]) -> usize {
        let mut idx = 0;
        for (k, &f) in factors.iter().enumerate() {
            idx = idx * self.cardinalities[k] + f;
        }
        idx
    }
}

/// A batch of factor tuples with their rendered images.
pub struct FactorBatch<S: Scalar = f64> {
    /// Row-major B x K factor indices.
    pub factors: Vec<usize>,
    pub batch: usize,
    pub images: Tensor<S>,
}

impl<S: Scalar> FactorBatch<S> {
    pub fn factor_row(&self, i: usize) -> &[usize] {
        let k = self.factors.len() / self.batch;
        &self.factors[i * k..(i + 1) * k]
    }
}

const SHAPE_KINDS: usize = 3;
const HALF_WIDTHS: [usize; 3] = [3, 5, 7];
const GRID: usize = 8;
const INTENSITIES: [f64; 4] = [0.4, 0.6, 0.8, 1.0];
const IMG: usize = 32;
// 8 centers spaced 2px, margin 7 (the max half-width) from the low border.
const POSITIONS: [usize; GRID] = [7, 9, 11, 13, 15, 17, 19, 21];

/// The deterministic shapes5 dataset.
pub struct FactorDataset {
    space: FactorSpace,
}

impl Default for FactorDataset {
    fn default() -> Self {
        Self::shapes5()
    }
}

impl FactorDataset {
    pub fn shapes5() -> Self {
        FactorDataset {
            space: FactorSpace {
                names: vec!["shape", "scale", "pos_x", "pos_y", "intensity"],
                cardinalities: vec![SHAPE_KINDS, HALF_WIDTHS.len(), GRID, GRID, INTENSITIES.len()],
            },
        }
    }

    pub fn space(&self) -> &FactorSpace {
        &self.space
    }

    /// Total number of distinct factor tuples (and images).
    pub fn len(&self) -> usize {
        self.space.size()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn num_factors(&self) -> usize {
        self.space.num_factors()
    }

    /// (channels, height, width)
    pub fn image_shape(&self) -> (usize, usize, usize) {
        (1, IMG, IMG)
    }

    /// Rasterize one factor tuple. Integer tests only; pure and
    /// platform-independent.
    pub fn render(&self, factors: &[usize]) -> Result<Vec<f64>> {
        assert_eq!(factors.len(), self.num_factors());
        for (k, (&f, &card)) in factors.iter().zip(&self.space.cardinalities).enumerate() {
            if f >= card {
                return Err(Error::config(format!(
                    "factor {} index {f} out of range (cardinality {card})",
                    self.space.names[k]
                )));
            }
        }
        let (shape, scale, px, py, inten) =
            (factors[0], factors[1], factors[2], factors[3], factors[4]);
        let h = HALF_WIDTHS[scale] as i64;
        let (cx, cy) = (POSITIONS[px] as i64, POSITIONS[py] as i64);
        let value = INTENSITIES[inten];

        let mut img = vec![0.0f64; IMG * IMG];
        for y in 0..IMG as i64 {
            let dy = y - cy;
            for x in 0..IMG as i64 {
                let dx = x - cx;
                let inside = match shape {
                    0 => dx.abs() <= h && dy.abs() <= h,
                    1 => dx * dx + dy * dy <= h * h,
                    2 => dx.abs() + dy.abs() <= h,
                    _ => unreachable!(),
                };
                if inside {
                    img[(y * IMG as i64 + x) as usize] = value;
                }
            }
        }
        Ok(img)
    }

    /// Render a list of factor rows into a batch tensor.
    pub fn batch<S: Scalar>(&self, rows: &[Vec<usize>]) -> Result<FactorBatch<S>> {
        let b = rows.len();
        let mut images = Vec::with_capacity(b * IMG * IMG);
        let mut factors = Vec::with_capacity(b * self.num_factors());
        for row in rows {
            let img = self.render(row)?;
            images.extend(img.iter().map(|&v| c::<S>(v)));
            factors.extend_from_slice(row);
        }
        Ok(FactorBatch {
            factors,
            batch: b,
            images: Tensor::from_vec(images, &[b, 1, IMG, IMG]),
        })
    }

    /// n uniform i.i.d. factor tuples.
    pub fn sample_factors(&self, n: usize, rng: &mut DetRng) -> Vec<Vec<usize>> {
        (0..n)
            .map(|_| {
                self.space
                    .cardinalities
                    .iter()
                    .map(|&card| rng.below(card))
                    .collect()
            })
            .collect()
    }

    /// n uniform tuples with factor `k` pinned to `value`.
    pub fn sample_with_fixed_factor<S: Scalar>(
        &self,
        n: usize,
        k: usize,
        value: usize,
        rng: &mut DetRng,
    ) -> Result<FactorBatch<S>> {
        assert!(k < self.num_factors(), "factor index {k} out of range");
        assert!(value < self.space.cardinalities[k], "factor value out of range");
        let mut rows = self.sample_factors(n, rng);
        for row in &mut rows {
            row[k] = value;
        }
        self.batch(&rows)
    }

    /// One-hot encoding of factor `k` for each row of a batch.
    pub fn one_hot_factor<S: Scalar>(&self, batch: &FactorBatch<S>, k: usize) -> Tensor<S> {
        let card = self.space.cardinalities[k];
        let mut data = vec![S::zero(); batch.batch * card];
        for i in 0..batch.batch {
            data[i * card + batch.factor_row(i)[k]] = S::one();
        }
        Tensor::from_vec(data, &[batch.batch, card])
    }

    /// Shuffled single pass over the whole factor space.
    pub fn epoch_batches(&self, batch_size: usize, seed: u64) -> EpochIter<'_> {
        assert!(batch_size >= 1 && batch_size <= self.len(), "batch_size out of range");
        let mut order: Vec<usize> = (0..self.len()).collect();
        DetRng::seed_from(seed).shuffle(&mut order);
        EpochIter { dataset: self, order, cursor: 0, batch_size }
    }

    /// Number of batches per epoch (final short batch included).
    pub fn batches_per_epoch(&self, batch_size: usize) -> u64 {
        self.len().div_ceil(batch_size) as u64
    }

    /// Write every image as a PGM file plus a CSV factor index.
    pub fn dump(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut csv = Vec::new();
        writeln!(csv, "index,{},file", self.space.names.join(","))?;
        for idx in 0..self.len() {
            let factors = self.space.index_to_factors(idx);
            let img = self.render(&factors)?;
            let file = format!("img_{idx:06}.pgm");
            GrayImage::from_pixels(IMG, IMG, img).write_pgm(&dir.join(&file))?;
            let cols: Vec<String> = factors.iter().map(|f| f.to_string()).collect();
            writeln!(csv, "{idx},{},{file}", cols.join(","))?;
        }
        std::fs::write(dir.join("index.csv"), csv)?;
        Ok(())
    }
}

pub struct EpochIter<'a> {
    dataset: &'a FactorDataset,
    order: Vec<usize>,
    cursor: usize,
    batch_size: usize,
}

impl<'a> EpochIter<'a> {
    /// Skip ahead by whole batches (mid-epoch checkpoint resume).
    pub fn skip_batches(&mut self, n: usize) {
        self.cursor = (n * self.batch_size).min(self.order.len());
    }
}

impl<'a> Iterator for EpochIter<'a> {
    type Item = FactorBatch<f64>;

    fn next(&mut self) -> Option<FactorBatch<f64>> {
        if self.cursor >= self.order.len() {
            return None;
        }
        let end = (self.cursor + self.batch_size).min(self.order.len());
        let rows: Vec<Vec<usize>> = self.order[self.cursor..end]
            .iter()
            .map(|&idx| self.dataset.space.index_to_factors(idx))
            .collect();
        self.cursor = end;
        Some(self.dataset.batch(&rows).expect("indices in range"))
    }
}
