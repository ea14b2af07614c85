//! Sobol low-discrepancy sequence (Joe–Kuo direction numbers, up to 32
//! dimensions). The all-zero first point is skipped.

use crate::error::{Error, Result};

pub const MAX_DIM: usize = 32;
const BITS: usize = 32;

// (primitive polynomial incl. leading and constant bit, initial m values)
const DIRECTIONS: [(u32, &[u32]); MAX_DIM - 1] = [
    (3, &[1]),
    (7, &[1, 3]),
    (11, &[1, 3, 1]),
    (13, &[1, 1, 1]),
    (19, &[1, 1, 3, 3]),
    (25, &[1, 3, 5, 13]),
    (37, &[1, 1, 5, 5, 17]),
    (41, &[1, 1, 5, 5, 5]),
    (47, &[1, 1, 7, 11, 19]),
    (55, &[1, 1, 5, 1, 1]),
    (59, &[1, 1, 1, 3, 11]),
    (61, &[1, 3, 5, 5, 31]),
    (67, &[1, 3, 3, 9, 7, 49]),
    (91, &[1, 1, 1, 15, 21, 21]),
    (97, &[1, 3, 1, 13, 27, 49]),
    (103, &[1, 1, 1, 15, 7, 5]),
    (109, &[1, 3, 1, 15, 13, 25]),
    (115, &[1, 1, 5, 5, 19, 61]),
    (131, &[1, 3, 7, 11, 23, 15, 103]),
    (137, &[1, 3, 7, 13, 13, 15, 69]),
    (143, &[1, 1, 3, 13, 7, 35, 63]),
    (145, &[1, 3, 5, 9, 1, 25, 53]),
    (157, &[1, 3, 1, 13, 9, 35, 107]),
    (167, &[1, 3, 1, 5, 27, 61, 31]),
    (171, &[1, 1, 5, 11, 19, 41, 61]),
    (185, &[1, 3, 5, 3, 3, 13, 69]),
    (191, &[1, 1, 7, 13, 1, 19, 1]),
    (193, &[1, 3, 7, 5, 13, 19, 59]),
    (203, &[1, 1, 3, 9, 25, 29, 41]),
    (211, &[1, 3, 5, 13, 23, 1, 55]),
    (213, &[1, 3, 7, 3, 13, 59, 17]),
];

fn direction_vector(dim: usize) -> [u32; BITS] {
    let mut v = [0u32; BITS];
    if dim == 0 {
        for (k, vk) in v.iter_mut().enumerate() {
            *vk = 1 << (BITS - 1 - k);
        }
        return v;
    }
    let (poly, m) = DIRECTIONS[dim - 1];
    let s = (32 - poly.leading_zeros() - 1) as usize;
    let a = (poly >> 1) & ((1 << (s - 1)) - 1);
    for k in 0..s {
        v[k] = m[k] << (BITS - 1 - k);
    }
    for k in s..BITS {
        let mut x = v[k - s] ^ (v[k - s] >> s);
        for l in 1..s {
            if (a >> (s - 1 - l)) & 1 == 1 {
                x ^= v[k - l];
            }
        }
        v[k] = x;
    }
    v
}

/// Gray-code Sobol generator.
#[derive(Clone, Debug)]
pub struct Sobol {
    directions: Vec<[u32; BITS]>,
    state: Vec<u32>,
    index: u64,
}

impl Sobol {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 || dim > MAX_DIM {
            return Err(Error::DimensionOutOfRange { dim, max: MAX_DIM });
        }
        Ok(Self {
            directions: (0..dim).map(direction_vector).collect(),
            state: vec![0; dim],
            index: 0,
        })
    }

    pub fn dim(&self) -> usize {
        self.state.len()
    }

    /// Next point in [0, 1)^dim.
    pub fn next_point(&mut self) -> Vec<f64> {
        let c = self.index.trailing_ones() as usize;
        assert!(c < BITS, "Sobol sequence exhausted");
        self.index += 1;
        for (x, v) in self.state.iter_mut().zip(&self.directions) {
            *x ^= v[c];
        }
        self.state.iter().map(|&x| x as f64 / (1u64 << BITS) as f64).collect()
    }

    pub fn take_points(&mut self, n: usize) -> Vec<Vec<f64>> {
        (0..n).map(|_| self.next_point()).collect()
    }
}

/// First `n` points after the origin.
pub fn points(dim: usize, n: usize) -> Result<Vec<Vec<f64>>> {
    Ok(Sobol::new(dim)?.take_points(n))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_dimension_is_van_der_corput() {
        let p: Vec<f64> = points(1, 4).unwrap().into_iter().map(|x| x[0]).collect();
        assert_eq!(p, vec![0.5, 0.75, 0.25, 0.375]);
    }

    #[test]
    fn matches_reference_points_in_three_dimensions() {
        let expected = [
            [0.5, 0.5, 0.5],
            [0.75, 0.25, 0.25],
            [0.25, 0.75, 0.75],
            [0.375, 0.375, 0.625],
            [0.875, 0.875, 0.125],
            [0.625, 0.125, 0.875],
            [0.125, 0.625, 0.375],
            [0.1875, 0.3125, 0.9375],
        ];
        let got = points(3, 8).unwrap();
        for (g, e) in got.iter().zip(&expected) {
            assert_eq!(g.as_slice(), e.as_slice());
        }
    }

    #[test]
    fn rejects_unsupported_dimensions() {
        assert!(matches!(Sobol::new(0), Err(Error::DimensionOutOfRange { .. })));
        assert!(matches!(Sobol::new(33), Err(Error::DimensionOutOfRange { dim: 33, max: 32 })));
        assert!(Sobol::new(32).is_ok());
    }

    #[test]
    fn every_dimension_is_balanced_over_a_power_of_two() {
        // the first 2^k points (with the origin) hit each dyadic interval once
        let mut pts = points(MAX_DIM, 63).unwrap();
        pts.push(vec![0.0; MAX_DIM]);
        for d in 0..MAX_DIM {
            let mut bins = [0usize; 64];
            for p in &pts {
                bins[(p[d] * 64.0) as usize] += 1;
            }
            assert!(bins.iter().all(|&b| b == 1), "dimension {d}");
        }
    }
}
