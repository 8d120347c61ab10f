//! Reproducible Brownian increments.
//!
//! Increments are generated by a counter-based scheme: the ChaCha8 key is
//! derived from the seed, the stream id is the path index and the block
//! position is derived from the step index, so the increment of path `i` at
//! step `k` is a pure function of `(seed, i, k)`. Standard normals come in
//! Box-Muller pairs, one pair per two consecutive fine steps.
//!
//! An ensemble can be coarsened: each coarse increment is the sum of
//! `aggregate` consecutive fine increments, which couples simulations on
//! different grids through common noise.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::TimeGrid;

/// ChaCha word position advanced per Box-Muller pair (two `u64` draws).
const WORDS_PER_PAIR: u128 = 4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseEnsemble {
    /// Grid the increments live on (coarse grid when `aggregate > 1`).
    grid: TimeGrid,
    seed: u64,
    n_paths: usize,
    /// Fine increments summed into one increment on `grid`.
    aggregate: usize,
}

/// Draws the noise ensemble on `[0, horizon]`. No noise exists outside it.
pub fn sample_noise(grid: TimeGrid, seed: u64, n_paths: usize) -> Result<NoiseEnsemble> {
    if n_paths == 0 {
        return Err(Error::config("paths", "n_paths must be at least 1"));
    }
    Ok(NoiseEnsemble {
        grid,
        seed,
        n_paths,
        aggregate: 1,
    })
}

#[inline]
fn unit_open(bits: u64) -> f64 {
    // (0, 1]: safe for ln
    ((bits >> 11) as f64 + 1.0) * (1.0 / (1u64 << 53) as f64)
}

#[inline]
fn unit(bits: u64) -> f64 {
    (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

#[inline]
fn box_muller(a: u64, b: u64) -> (f64, f64) {
    let r = (-2.0 * unit_open(a).ln()).sqrt();
    let (s, c) = (std::f64::consts::TAU * unit(b)).sin_cos();
    (r * c, r * s)
}

fn stream(seed: u64, path: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path as u64);
    rng
}

impl NoiseEnsemble {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn aggregate(&self) -> usize {
        self.aggregate
    }

    /// Number of increments per path (one per step on `[0, horizon]`).
    pub fn steps(&self) -> usize {
        self.grid.steps()
    }

    fn fine_scale(&self) -> f64 {
        (self.grid.dt() / self.aggregate as f64).sqrt()
    }

    /// Standard normal of fine step `fine_step` on `path`, by random access.
    pub fn standard_normal(&self, path: usize, fine_step: usize) -> f64 {
        let mut rng = stream(self.seed, path);
        rng.set_word_pos((fine_step / 2) as u128 * WORDS_PER_PAIR);
        let (z0, z1) = box_muller(rng.next_u64(), rng.next_u64());
        if fine_step.is_multiple_of(2) {
            z0
        } else {
            z1
        }
    }

    /// Increment `dB_k` of `path` on this ensemble's grid, by random access.
    pub fn increment(&self, path: usize, step: usize) -> f64 {
        let start = step * self.aggregate;
        let sum: f64 = (start..start + self.aggregate)
            .map(|f| self.standard_normal(path, f))
            .sum();
        sum * self.fine_scale()
    }

    /// Writes the increments of `path` into `out` (length `steps()`).
    pub fn fill_path(&self, path: usize, out: &mut [f64]) {
        assert_eq!(out.len(), self.steps(), "increment buffer has wrong length");
        let mut rng = stream(self.seed, path);
        let scale = self.fine_scale();
        let mut pending: Option<f64> = None;
        let mut next_normal = || match pending.take() {
            Some(z) => z,
            None => {
                let (z0, z1) = box_muller(rng.next_u64(), rng.next_u64());
                pending = Some(z1);
                z0
            }
        };
        for slot in out.iter_mut() {
            let mut sum = 0.0;
            for _ in 0..self.aggregate {
                sum += next_normal();
            }
            *slot = sum * scale;
        }
    }

    pub fn path(&self, path: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.steps()];
        self.fill_path(path, &mut out);
        out
    }

    /// The same Brownian paths seen on a grid `factor` times coarser.
    pub fn coarsen(&self, factor: usize) -> Result<NoiseEnsemble> {
        let grid = self.grid.coarsen(factor)?;
        Ok(NoiseEnsemble {
            grid,
            seed: self.seed,
            n_paths: self.n_paths,
            aggregate: self.aggregate * factor,
        })
    }

    /// Restricts the ensemble to its first `n_paths` paths.
    pub fn truncate(&self, n_paths: usize) -> NoiseEnsemble {
        NoiseEnsemble {
            n_paths: n_paths.min(self.n_paths).max(1),
            ..*self
        }
    }

    /// Generates every increment into memory, path-major.
    pub fn materialize(&self) -> Increments {
        let steps = self.steps();
        let mut data = vec![0.0; self.n_paths * steps.max(1)];
        if steps > 0 {
            data.par_chunks_mut(steps)
                .enumerate()
                .for_each(|(i, row)| self.fill_path(i, row));
        }
        Increments {
            n_paths: self.n_paths,
            steps,
            data,
        }
    }
}

/// Materialized increments, one row of `steps` values per path.
#[derive(Debug, Clone, PartialEq)]
pub struct Increments {
    n_paths: usize,
    steps: usize,
    data: Vec<f64>,
}

impl Increments {
    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn path(&self, i: usize) -> &[f64] {
        &self.data[i * self.steps..(i + 1) * self.steps]
    }

    pub fn get(&self, i: usize, k: usize) -> f64 {
        self.data[i * self.steps + k]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}
