//! Exact Euclidean distance transform with nearest-feature indices.
//!
//! Two separable passes: per column, the nearest edge row; per row, the lower
//! envelope of the parabolas `(x - c)^2 + g_c^2` over columns `c`. All
//! comparisons are done on integer squared distances so the result is exact,
//! and ties resolve to the edge pixel with the smallest row-major index.

use super::{EdgeError, EdgeMap};

#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMap {
    width: usize,
    height: usize,
    distance_sq: Vec<u64>,
    nearest: Vec<usize>,
}

impl DistanceMap {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn distance(&self, x: usize, y: usize) -> f64 {
        (self.distance_sq[y * self.width + x] as f64).sqrt()
    }

    pub fn distance_sq(&self, x: usize, y: usize) -> u64 {
        self.distance_sq[y * self.width + x]
    }

    /// Row-major index of the nearest edge pixel.
    pub fn nearest(&self, x: usize, y: usize) -> usize {
        self.nearest[y * self.width + x]
    }

    pub fn nearest_indices(&self) -> &[usize] {
        &self.nearest
    }

    pub fn distances_sq(&self) -> &[u64] {
        &self.distance_sq
    }
}

fn floor_div(a: i64, b: i64) -> i64 {
    let q = a / b;
    if (a % b != 0) && ((a < 0) != (b < 0)) {
        q - 1
    } else {
        q
    }
}

fn ceil_div(a: i64, b: i64) -> i64 {
    -floor_div(-a, b)
}

/// Per-column candidate for one row: squared vertical offset and the
/// row-major index of that edge pixel.
#[derive(Clone, Copy)]
struct Candidate {
    col: i64,
    g_sq: i64,
    index: i64,
}

/// First integer `x` at which `q` beats `p` (requires `p.col < q.col`),
/// ordering by `(distance², index)`.
fn takeover(p: Candidate, q: Candidate) -> i64 {
    let num = q.col * q.col - p.col * p.col + q.g_sq - p.g_sq;
    let den = 2 * (q.col - p.col);
    if q.index < p.index {
        ceil_div(num, den)
    } else {
        floor_div(num, den) + 1
    }
}

pub fn distance_transform(edges: &EdgeMap) -> Result<DistanceMap, EdgeError> {
    let (w, h) = (edges.width(), edges.height());
    if edges.count() == 0 {
        return Err(EdgeError::NoEdges);
    }

    // pass 1: nearest edge row within each column, ties to the upper one
    let mut col_row: Vec<Option<usize>> = vec![None; w * h];
    for x in 0..w {
        let mut above: Option<usize> = None;
        for y in 0..h {
            if edges.is_edge(x, y) {
                above = Some(y);
            }
            col_row[y * w + x] = above;
        }
        let mut below: Option<usize> = None;
        for y in (0..h).rev() {
            if edges.is_edge(x, y) {
                below = Some(y);
            }
            let best = match (col_row[y * w + x], below) {
                (Some(a), Some(b)) => Some(if y - a <= b - y { a } else { b }),
                (a, b) => a.or(b),
            };
            col_row[y * w + x] = best;
        }
    }

    // pass 2: lower envelope per row
    let mut distance_sq = vec![0u64; w * h];
    let mut nearest = vec![0usize; w * h];
    let mut hull: Vec<Candidate> = Vec::with_capacity(w);
    let mut starts: Vec<i64> = Vec::with_capacity(w);
    for y in 0..h {
        hull.clear();
        starts.clear();
        for x in 0..w {
            let Some(r) = col_row[y * w + x] else {
                continue;
            };
            let dy = r as i64 - y as i64;
            let q = Candidate {
                col: x as i64,
                g_sq: dy * dy,
                index: (r * w + x) as i64,
            };
            loop {
                match hull.last() {
                    None => {
                        hull.push(q);
                        starts.push(i64::MIN);
                        break;
                    }
                    Some(&p) => {
                        let s = takeover(p, q);
                        if s <= *starts.last().unwrap() {
                            hull.pop();
                            starts.pop();
                        } else {
                            hull.push(q);
                            starts.push(s);
                            break;
                        }
                    }
                }
            }
        }
        let mut k = 0;
        for x in 0..w {
            while k + 1 < hull.len() && starts[k + 1] <= x as i64 {
                k += 1;
            }
            let c = hull[k];
            let dx = x as i64 - c.col;
            distance_sq[y * w + x] = (dx * dx + c.g_sq) as u64;
            nearest[y * w + x] = c.index as usize;
        }
    }

    Ok(DistanceMap {
        width: w,
        height: h,
        distance_sq,
        nearest,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::Grid;

    fn map_from(w: usize, h: usize, on: &[(usize, usize)]) -> EdgeMap {
        let mut flags = Grid::filled(w, h, false);
        for &(x, y) in on {
            *flags.get_mut(x, y) = true;
        }
        EdgeMap::new(flags, Grid::filled(w, h, 0.0), 1.0)
    }

    #[test]
    fn integer_division_rounding() {
        assert_eq!(floor_div(-3, 2), -2);
        assert_eq!(floor_div(3, 2), 1);
        assert_eq!(ceil_div(-3, 2), -1);
        assert_eq!(ceil_div(3, 2), 2);
        assert_eq!(ceil_div(4, 2), 2);
    }

    #[test]
    fn single_corner_edge() {
        let dt = distance_transform(&map_from(3, 3, &[(0, 0)])).unwrap();
        assert!((dt.distance(2, 2) - 2.0 * 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(dt.nearest(2, 2), 0);
    }

    #[test]
    fn all_edges_is_zero_everywhere() {
        let all: Vec<_> = (0..4).flat_map(|y| (0..5).map(move |x| (x, y))).collect();
        let dt = distance_transform(&map_from(5, 4, &all)).unwrap();
        assert!(dt.distances_sq().iter().all(|&d| d == 0));
        for (i, &n) in dt.nearest_indices().iter().enumerate() {
            assert_eq!(n, i);
        }
    }

    #[test]
    fn no_edges_is_an_error() {
        assert!(matches!(
            distance_transform(&map_from(4, 4, &[])),
            Err(EdgeError::NoEdges)
        ));
    }

    #[test]
    fn equidistant_ties_pick_smallest_index() {
        // (2,2) is distance 2 from (0,2), (2,0), (4,2) and (2,4); (2,0) has index 2
        let dt = distance_transform(&map_from(5, 5, &[(4, 2), (2, 4), (0, 2), (2, 0)])).unwrap();
        assert_eq!(dt.distance_sq(2, 2), 4);
        assert_eq!(dt.nearest(2, 2), 2);
        // (1,1): candidates (2,0) and (0,2) at distance² 2; (2,0) has index 2 < 10
        assert_eq!(dt.nearest(1, 1), 2);
    }
}
