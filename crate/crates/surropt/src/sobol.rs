//! Sobol low-discrepancy sequence over the unit hypercube.
//!
//! Direction numbers follow the Joe-Kuo tables (primitive polynomial degree,
//! coefficient and initial `m` values per dimension), expanded to 32 bits.
//! Points are produced in Gray-code order, so the stream is identical to the
//! reference sequence published with those tables: index 0 is the origin and
//! index 1 is the box centre in every dimension.

use crate::design_space::DesignSpaceError;

const BITS: usize = 32;

/// Largest supported dimension of the generator.
pub const MAX_DIMENSION: usize = 16;

/// Joe-Kuo rows for dimensions 2..=16: (polynomial degree s, coefficient a,
/// initial direction values m_1..m_s). Dimension 1 is the van der Corput
/// sequence in base 2 and needs no table row.
const JOE_KUO: [(u32, u32, &[u32]); 15] = [
    (1, 0, &[1]),
    (2, 1, &[1, 3]),
    (3, 1, &[1, 3, 1]),
    (3, 2, &[1, 1, 1]),
    (4, 1, &[1, 1, 3, 3]),
    (4, 4, &[1, 3, 5, 13]),
    (5, 2, &[1, 1, 5, 5, 17]),
    (5, 4, &[1, 1, 5, 5, 5]),
    (5, 7, &[1, 1, 7, 11, 19]),
    (5, 11, &[1, 1, 5, 1, 1]),
    (5, 13, &[1, 1, 1, 3, 11]),
    (5, 14, &[1, 3, 5, 5, 31]),
    (6, 1, &[1, 3, 3, 9, 7, 49]),
    (6, 13, &[1, 1, 1, 15, 21, 21]),
    (6, 16, &[1, 3, 1, 13, 27, 49]),
];

/// Stateful generator yielding successive Sobol points.
#[derive(Debug, Clone)]
pub struct SobolSequence {
    dimension: usize,
    index: u64,
    state: Vec<u32>,
    directions: Vec<[u32; BITS]>,
}

impl SobolSequence {
    /// Creates a generator positioned at index 0 (the all-zeros point).
    pub fn new(dimension: usize) -> Result<Self, DesignSpaceError> {
        if dimension == 0 || dimension > MAX_DIMENSION {
            return Err(DesignSpaceError::UnsupportedDimension {
                dimension,
                max: MAX_DIMENSION,
            });
        }
        let mut directions = Vec::with_capacity(dimension);
        let mut first = [0u32; BITS];
        for (k, v) in first.iter_mut().enumerate() {
            *v = 1 << (BITS - 1 - k);
        }
        directions.push(first);
        for &(s, a, m) in JOE_KUO.iter().take(dimension - 1) {
            directions.push(expand_directions(s, a, m));
        }
        Ok(Self {
            dimension,
            index: 0,
            state: vec![0; dimension],
            directions,
        })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    /// Index of the point the next call to `next_point` will return.
    pub fn index(&self) -> u64 {
        self.index
    }

    /// Jumps directly to an arbitrary index. The state at index `i` is the
    /// XOR of the direction vectors selected by the bits of gray(i).
    pub fn seek(&mut self, index: u64) {
        let gray = index ^ (index >> 1);
        for (j, s) in self.state.iter_mut().enumerate() {
            let mut acc = 0u32;
            for b in 0..BITS.min(64) {
                if gray >> b & 1 == 1 {
                    acc ^= self.directions[j][b];
                }
            }
            *s = acc;
        }
        self.index = index;
    }

    /// Returns the point at the current index and advances by one.
    pub fn next_point(&mut self) -> Vec<f64> {
        let point = self
            .state
            .iter()
            .map(|&s| s as f64 / (1u64 << BITS) as f64)
            .collect();
        let flip = (self.index + 1).trailing_zeros() as usize;
        for (j, s) in self.state.iter_mut().enumerate() {
            *s ^= self.directions[j][flip];
        }
        self.index += 1;
        point
    }
}

/// Expands a Joe-Kuo table row into 32 direction integers via the standard
/// recurrence v_k = a_1 v_{k-1} ^ ... ^ a_{s-1} v_{k-s+1} ^ v_{k-s} ^ (v_{k-s} >> s).
fn expand_directions(s: u32, a: u32, m: &[u32]) -> [u32; BITS] {
    let s = s as usize;
    let mut v = [0u32; BITS];
    for k in 0..BITS {
        if k < s {
            v[k] = m[k] << (BITS - 1 - k);
        } else {
            let mut next = v[k - s] ^ (v[k - s] >> s);
            for i in 1..s {
                if a >> (s - 1 - i) & 1 == 1 {
                    next ^= v[k - i];
                }
            }
            v[k] = next;
        }
    }
    v
}
