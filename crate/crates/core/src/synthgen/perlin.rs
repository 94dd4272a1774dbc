//! Classic 2D gradient noise.
//!
//! Lattice gradients are drawn from eight unit directions through a
//! seed-shuffled 256-entry permutation table; corner contributions are blended
//! with the quintic fade `6t^5 - 15t^4 + 10t^3`.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::rng::RngStream;

const FRAC_1_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;

const GRADIENTS: [(f64, f64); 8] = [
    (1.0, 0.0),
    (-1.0, 0.0),
    (0.0, 1.0),
    (0.0, -1.0),
    (FRAC_1_SQRT_2, FRAC_1_SQRT_2),
    (-FRAC_1_SQRT_2, FRAC_1_SQRT_2),
    (FRAC_1_SQRT_2, -FRAC_1_SQRT_2),
    (-FRAC_1_SQRT_2, -FRAC_1_SQRT_2),
];

/// Parameters of one noise field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerlinField {
    pub seed: u64,
    /// Lattice cells per input unit.
    pub frequency: f64,
    pub octaves: u32,
    /// Rescale single-octave output from `[-sqrt(2)/2, sqrt(2)/2]` to `[-1, 1]`.
    pub normalize: bool,
}

impl PerlinField {
    pub fn new(seed: u64, frequency: f64) -> Self {
        Self {
            seed,
            frequency,
            octaves: 1,
            normalize: true,
        }
    }

    pub fn with_octaves(mut self, octaves: u32) -> Self {
        self.octaves = octaves.max(1);
        self
    }

    /// Builds the sampler. Evaluating many points should go through this
    /// rather than [`perlin`], which rebuilds the permutation table.
    pub fn sampler(&self) -> PerlinSampler {
        PerlinSampler::new(*self)
    }
}

/// A field with its permutation table materialised.
#[derive(Debug, Clone)]
pub struct PerlinSampler {
    field: PerlinField,
    perm: [u8; 512],
}

fn fade(t: f64) -> f64 {
    t * t * t * (t * (t * 6.0 - 15.0) + 10.0)
}

fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + t * (b - a)
}

impl PerlinSampler {
    fn new(field: PerlinField) -> Self {
        let mut table: Vec<u8> = (0..=255u8).collect();
        table.shuffle(&mut RngStream::new(field.seed));
        let mut perm = [0u8; 512];
        for (i, p) in perm.iter_mut().enumerate() {
            *p = table[i & 255];
        }
        Self { field, perm }
    }

    fn gradient(&self, xi: i64, yi: i64) -> (f64, f64) {
        let x = xi.rem_euclid(256) as usize;
        let y = yi.rem_euclid(256) as usize;
        let h = self.perm[self.perm[x] as usize + y];
        GRADIENTS[(h & 7) as usize]
    }

    /// Single-octave noise at lattice coordinates, in `[-sqrt(2)/2, sqrt(2)/2]`.
    pub fn raw(&self, x: f64, y: f64) -> f64 {
        let (x0, y0) = (x.floor(), y.floor());
        let (xf, yf) = (x - x0, y - y0);
        let (xi, yi) = (x0 as i64, y0 as i64);
        let dot = |gx: i64, gy: i64, dx: f64, dy: f64| {
            let (a, b) = self.gradient(gx, gy);
            a * dx + b * dy
        };
        let n00 = dot(xi, yi, xf, yf);
        let n10 = dot(xi + 1, yi, xf - 1.0, yf);
        let n01 = dot(xi, yi + 1, xf, yf - 1.0);
        let n11 = dot(xi + 1, yi + 1, xf - 1.0, yf - 1.0);
        let (u, v) = (fade(xf), fade(yf));
        lerp(lerp(n00, n10, u), lerp(n01, n11, u), v)
    }

    /// Field value at input coordinates `(x, y)`.
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        let f = self.field;
        let mut total = 0.0;
        let mut norm = 0.0;
        let mut amp = 1.0;
        let mut freq = f.frequency;
        for _ in 0..f.octaves.max(1) {
            total += amp * self.raw(x * freq, y * freq);
            norm += amp;
            amp *= 0.5;
            freq *= 2.0;
        }
        let v = total / norm;
        if f.normalize {
            (v / FRAC_1_SQRT_2).clamp(-1.0, 1.0)
        } else {
            v
        }
    }
}

/// Evaluates `field` at `(x, y)`.
pub fn perlin(field: &PerlinField, x: f64, y: f64) -> f64 {
    field.sampler().eval(x, y)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_at_lattice_points() {
        let s = PerlinField::new(7, 1.0).sampler();
        for x in -5..5 {
            for y in -5..5 {
                assert_eq!(s.eval(x as f64, y as f64), 0.0);
            }
        }
    }

    #[test]
    fn deterministic() {
        let f = PerlinField::new(99, 0.37);
        assert_eq!(perlin(&f, 1.3, 2.7).to_bits(), perlin(&f, 1.3, 2.7).to_bits());
        let g = PerlinField::new(100, 0.37);
        let differs = (0..50).any(|i| {
            let x = i as f64 * 0.31 + 0.1;
            perlin(&f, x, 0.5) != perlin(&g, x, 0.5)
        });
        assert!(differs);
    }

    #[test]
    fn sampled_range() {
        let mut rng = RngStream::new(1);
        let s = PerlinField::new(3, 1.0).sampler();
        let mut max: f64 = 0.0;
        for _ in 0..100_000 {
            let (x, y) = (rng.uniform() * 200.0 - 100.0, rng.uniform() * 200.0 - 100.0);
            let v = s.eval(x, y);
            assert!((-1.0..=1.0).contains(&v));
            max = max.max(v.abs());
        }
        // The field actually uses its range.
        assert!(max > 0.5, "max |value| = {max}");
    }

    #[test]
    fn raw_bounded_by_half_sqrt_two() {
        let mut rng = RngStream::new(2);
        let s = PerlinField::new(11, 1.0).sampler();
        for _ in 0..100_000 {
            let (x, y) = (rng.uniform() * 64.0, rng.uniform() * 64.0);
            assert!(s.raw(x, y).abs() <= FRAC_1_SQRT_2 + 1e-12);
        }
    }

    #[test]
    fn octaves_stay_in_range() {
        let s = PerlinField::new(5, 0.2).with_octaves(4).sampler();
        let mut rng = RngStream::new(8);
        for _ in 0..10_000 {
            let v = s.eval(rng.uniform() * 50.0, rng.uniform() * 50.0);
            assert!((-1.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn continuous() {
        let s = PerlinField::new(4, 1.0).sampler();
        for i in 0..1000 {
            let x = i as f64 * 0.0137;
            assert!((s.eval(x, 0.3) - s.eval(x + 1e-6, 0.3)).abs() < 1e-4);
        }
    }
}
