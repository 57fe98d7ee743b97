use rand::Rng;

use crate::error::{Error, Result};

pub type HostId = usize;

/// Populations at or below this size get a precomputed distance matrix.
pub const DEFAULT_DISTANCE_CAP: usize = 2_000;

/// Fixed host locations in a square region `[0, side]^2`.
///
/// Host ids are the dense indices `0..n`. The population is immutable once
/// built and is shared between threads behind an `Arc`.
#[derive(Debug, Clone)]
pub struct HostPopulation {
    coords: Vec<[f64; 2]>,
    region_side: f64,
    distances: Option<Vec<f64>>,
}

impl HostPopulation {
    pub fn new(coords: Vec<[f64; 2]>, region_side: f64) -> Result<Self> {
        Self::with_distance_cap(coords, region_side, DEFAULT_DISTANCE_CAP)
    }

    pub fn with_distance_cap(coords: Vec<[f64; 2]>, region_side: f64, cap: usize) -> Result<Self> {
        if !(region_side.is_finite() && region_side > 0.0) {
            return Err(Error::domain(format!("region side must be > 0, got {region_side}")));
        }
        for (i, c) in coords.iter().enumerate() {
            if !c.iter().all(|v| v.is_finite() && *v >= 0.0 && *v <= region_side) {
                return Err(Error::domain(format!(
                    "host {i} at ({}, {}) lies outside [0, {region_side}]^2",
                    c[0], c[1]
                )));
            }
        }
        let n = coords.len();
        let distances = (n <= cap).then(|| {
            let mut m = vec![0.0; n * n];
            for i in 0..n {
                for j in (i + 1)..n {
                    let d = euclid(coords[i], coords[j]);
                    m[i * n + j] = d;
                    m[j * n + i] = d;
                }
            }
            m
        });
        Ok(Self {
            coords,
            region_side,
            distances,
        })
    }

    /// Hosts placed uniformly at random on the square.
    pub fn uniform<R: Rng + ?Sized>(n: usize, region_side: f64, rng: &mut R) -> Result<Self> {
        let coords = (0..n)
            .map(|_| {
                [
                    rng.random::<f64>() * region_side,
                    rng.random::<f64>() * region_side,
                ]
            })
            .collect();
        Self::new(coords, region_side)
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn region_side(&self) -> f64 {
        self.region_side
    }

    pub fn coords(&self) -> &[[f64; 2]] {
        &self.coords
    }

    pub fn position(&self, h: HostId) -> [f64; 2] {
        self.coords[h]
    }

    #[inline]
    pub fn distance(&self, a: HostId, b: HostId) -> f64 {
        match &self.distances {
            Some(m) => m[a * self.coords.len() + b],
            None => euclid(self.coords[a], self.coords[b]),
        }
    }

    pub fn has_distance_cache(&self) -> bool {
        self.distances.is_some()
    }

    /// Mean nearest-neighbour distance; used to pick family-appropriate kappa starting values.
    pub fn mean_nearest_neighbour(&self) -> f64 {
        let n = self.len();
        if n < 2 {
            return self.region_side;
        }
        let total: f64 = (0..n)
            .map(|i| {
                (0..n)
                    .filter(|&j| j != i)
                    .map(|j| self.distance(i, j))
                    .fold(f64::INFINITY, f64::min)
            })
            .sum();
        total / n as f64
    }

    /// Population with host labels permuted: new host `k` is old host `perm[k]`.
    pub fn permuted(&self, perm: &[HostId]) -> Result<Self> {
        let coords = perm.iter().map(|&h| self.coords[h]).collect();
        Self::new(coords, self.region_side)
    }
}

#[inline]
fn euclid(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}
