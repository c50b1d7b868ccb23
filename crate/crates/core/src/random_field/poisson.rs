use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use parking_lot::RwLock;
use rand::Rng;
use rand_distr::{Distribution, Poisson};

use super::spectrum::{ShapeFunction, MAX_DIM};
use crate::error::Result;
use crate::rng;

type CellKey = [i64; MAX_DIM];

/// Shot-noise realization `V(x) = Σ_p φ(x − y_p) − c_φ` over a unit-intensity
/// Poisson cloud, generated lazily cell by cell.
pub struct PoissonField {
    shape: ShapeFunction,
    seed: u64,
    cell: f64,
    cache: RwLock<HashMap<CellKey, Arc<[f64]>>>,
}

impl fmt::Debug for PoissonField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PoissonField")
            .field("shape", &self.shape)
            .field("seed", &self.seed)
            .field("cell", &self.cell)
            .field("cached_cells", &self.cache.read().len())
            .finish()
    }
}

impl Clone for PoissonField {
    // Cells are a pure function of (seed, index), so a fresh cache is equivalent.
    fn clone(&self) -> Self {
        Self {
            shape: self.shape.clone(),
            seed: self.seed,
            cell: self.cell,
            cache: RwLock::default(),
        }
    }
}

pub fn make_poisson_field(shape: &ShapeFunction, seed: u64) -> Result<PoissonField> {
    // ShapeFunction construction already guarantees c_φ ≠ 0.
    Ok(PoissonField {
        shape: shape.clone(),
        seed,
        cell: (2.0 * shape.radius()).max(1.0),
        cache: RwLock::default(),
    })
}

impl PoissonField {
    pub fn dim(&self) -> usize {
        self.shape.dim()
    }

    pub fn shape(&self) -> &ShapeFunction {
        &self.shape
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn cell_size(&self) -> f64 {
        self.cell
    }

    fn generate(&self, key: &CellKey) -> Arc<[f64]> {
        let d = self.dim();
        let mut words = Vec::with_capacity(d + 2);
        words.push(self.seed);
        words.push(rng::tag::CELL);
        words.extend(key[..d].iter().map(|&k| k as u64));
        let mut g = rng::stream(&words);
        let volume = self.cell.powi(d as i32);
        let count = Poisson::new(volume).expect("positive cell volume").sample(&mut g) as usize;
        let mut pts = Vec::with_capacity(count * d);
        for _ in 0..count {
            for &k in &key[..d] {
                pts.push((k as f64 + g.gen::<f64>()) * self.cell);
            }
        }
        pts.into()
    }

    /// Points of one cell, flattened `d` coordinates per point.
    pub fn cell_points(&self, index: &[i64]) -> Arc<[f64]> {
        let mut key = [0i64; MAX_DIM];
        key[..index.len()].copy_from_slice(index);
        if let Some(p) = self.cache.read().get(&key) {
            return Arc::clone(p);
        }
        let pts = self.generate(&key);
        // Concurrent fills produce identical contents; keep whichever landed first.
        Arc::clone(self.cache.write().entry(key).or_insert(pts))
    }

    /// Visit every point `y` with `|x − y| < radius`, passing `x − y` and `|x − y|²`.
    pub fn for_each_within(&self, x: &[f64], radius: f64, mut visit: impl FnMut(&[f64], f64)) {
        let d = self.dim();
        let lo: Vec<i64> = x.iter().map(|&v| ((v - radius) / self.cell).floor() as i64).collect();
        let hi: Vec<i64> = x.iter().map(|&v| ((v + radius) / self.cell).floor() as i64).collect();
        let mut idx = lo.clone();
        let r2max = radius * radius;
        let mut diff = vec![0.0; d];
        loop {
            let pts = self.cell_points(&idx);
            for p in pts.chunks_exact(d) {
                let mut r2 = 0.0;
                for k in 0..d {
                    diff[k] = x[k] - p[k];
                    r2 += diff[k] * diff[k];
                }
                if r2 < r2max {
                    visit(&diff, r2);
                }
            }
            // odometer increment over the cell box
            let mut k = 0;
            loop {
                if k == d {
                    return;
                }
                if idx[k] < hi[k] {
                    idx[k] += 1;
                    break;
                }
                idx[k] = lo[k];
                k += 1;
            }
        }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        let mut s = 0.0;
        let r0 = self.shape.radius();
        self.for_each_within(x, r0, |_, r2| s += self.shape.radial(r2.sqrt()));
        s - self.shape.integral()
    }
}
