//! Canny edge detection with an undirected tangent per edge pixel.

use std::f64::consts::FRAC_PI_2;

use crate::geometry::wrap_pi;
use crate::raster::{GrayImage, Grid};

use super::{EdgeError, EdgeMap};

pub const MIN_SIGMA: f64 = 0.5;

/// Hysteresis threshold policy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CannyConfig {
    /// Quantile of the nonzero gradient magnitudes used as the high threshold.
    pub high_percentile: f64,
    /// Low threshold as a fraction of the high one.
    pub low_ratio: f64,
    /// The high threshold is raised to at least this multiple of the median
    /// gradient magnitude over the whole image. Zero disables the floor.
    pub noise_floor: f64,
}

impl Default for CannyConfig {
    fn default() -> Self {
        Self {
            high_percentile: 0.9,
            low_ratio: 0.4,
            noise_floor: 6.0,
        }
    }
}

/// Normalized 1D Gaussian taps with radius `ceil(3σ)`.
fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let taps: Vec<f64> = (-radius..=radius)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / sum).collect()
}

/// Separable Gaussian blur with clamp-to-edge borders.
pub fn gaussian_blur(img: &Grid<f64>, sigma: f64) -> Grid<f64> {
    let taps = gaussian_kernel(sigma);
    let r = (taps.len() / 2) as isize;
    let (w, h) = (img.width() as isize, img.height() as isize);
    let horizontal: Grid<f64> = Grid::from_fn(img.width(), img.height(), |x, y| {
        taps.iter()
            .enumerate()
            .map(|(k, t)| {
                let sx = (x as isize + k as isize - r).clamp(0, w - 1) as usize;
                t * img.at(sx, y)
            })
            .sum()
    });
    Grid::from_fn(img.width(), img.height(), |x, y| {
        taps.iter()
            .enumerate()
            .map(|(k, t)| {
                let sy = (y as isize + k as isize - r).clamp(0, h - 1) as usize;
                t * horizontal.at(x, sy)
            })
            .sum()
    })
}

/// Central-difference gradients `(dI/dx, dI/dy)`; borders use the clamped neighbour.
pub fn gradients(img: &Grid<f64>) -> (Grid<f64>, Grid<f64>) {
    let (w, h) = (img.width(), img.height());
    let gx = Grid::from_fn(w, h, |x, y| {
        let l = img.at(x.saturating_sub(1), y);
        let r = img.at((x + 1).min(w - 1), y);
        (r - l) / 2.0
    });
    let gy = Grid::from_fn(w, h, |x, y| {
        let u = img.at(x, y.saturating_sub(1));
        let d = img.at(x, (y + 1).min(h - 1));
        (d - u) / 2.0
    });
    (gx, gy)
}

/// Quantile by nearest rank on a sorted copy; `q` in `[0, 1]`.
fn quantile(values: &mut [f64], q: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_by(f64::total_cmp);
    let rank = ((q * values.len() as f64).ceil() as usize).clamp(1, values.len());
    values[rank - 1]
}

/// Neighbour offset along the quantized gradient direction.
fn quantized_direction(gx: f64, gy: f64) -> (isize, isize) {
    let deg = wrap_pi(gy.atan2(gx)).to_degrees();
    if !(22.5..157.5).contains(&deg) {
        (1, 0)
    } else if deg < 67.5 {
        (1, 1)
    } else if deg < 112.5 {
        (0, 1)
    } else {
        (-1, 1)
    }
}

pub fn detect_edges(img: &GrayImage, sigma: f64) -> Result<EdgeMap, EdgeError> {
    detect_edges_with(img, sigma, &CannyConfig::default())
}

pub fn detect_edges_with(
    img: &GrayImage,
    sigma: f64,
    cfg: &CannyConfig,
) -> Result<EdgeMap, EdgeError> {
    if !(sigma >= MIN_SIGMA) {
        return Err(EdgeError::SigmaTooSmall(sigma));
    }
    let (w, h) = (img.width(), img.height());
    let smoothed = gaussian_blur(img.as_grid(), sigma);
    let (gx, gy) = gradients(&smoothed);
    let mag = Grid::from_fn(w, h, |x, y| gx.at(x, y).hypot(gy.at(x, y)));

    // non-maximum suppression; the strict/non-strict pair keeps exactly one
    // pixel of a two-pixel plateau straddling a step
    let mut thin = Grid::filled(w, h, 0.0);
    if w >= 3 && h >= 3 {
        for y in 1..h - 1 {
            for x in 1..w - 1 {
                let m = mag.at(x, y);
                if m <= 0.0 {
                    continue;
                }
                let (dx, dy) = quantized_direction(gx.at(x, y), gy.at(x, y));
                let back = mag.at((x as isize - dx) as usize, (y as isize - dy) as usize);
                let fwd = mag.at((x as isize + dx) as usize, (y as isize + dy) as usize);
                if m > back && m >= fwd {
                    *thin.get_mut(x, y) = m;
                }
            }
        }
    }

    let mut nonzero: Vec<f64> = mag.data().iter().copied().filter(|&m| m > 0.0).collect();
    let mut high = quantile(&mut nonzero, cfg.high_percentile);
    if cfg.noise_floor > 0.0 {
        let mut all = mag.data().to_vec();
        high = high.max(cfg.noise_floor * quantile(&mut all, 0.5));
    }
    let low = cfg.low_ratio * high;

    let mut is_edge = vec![false; w * h];
    let mut stack = Vec::new();
    if high > 0.0 {
        for start in 0..w * h {
            if is_edge[start] || thin.data()[start] < high {
                continue;
            }
            is_edge[start] = true;
            stack.push(start);
            while let Some(i) = stack.pop() {
                let (x, y) = ((i % w) as isize, (i / w) as isize);
                for ny in y - 1..=y + 1 {
                    for nx in x - 1..=x + 1 {
                        if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                            continue;
                        }
                        let j = ny as usize * w + nx as usize;
                        if !is_edge[j] && thin.data()[j] >= low && thin.data()[j] > 0.0 {
                            is_edge[j] = true;
                            stack.push(j);
                        }
                    }
                }
            }
        }
    }

    let tangent = (0..w * h)
        .map(|i| {
            if is_edge[i] {
                let (x, y) = (i % w, i / w);
                wrap_pi(gy.at(x, y).atan2(gx.at(x, y)) + FRAC_PI_2)
            } else {
                0.0
            }
        })
        .collect();

    Ok(EdgeMap::new(
        Grid::from_vec(w, h, is_edge),
        Grid::from_vec(w, h, tangent),
        sigma,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::undirected_diff;
    use std::f64::consts::PI;

    fn step(w: usize, h: usize) -> GrayImage {
        GrayImage::from_fn(w, h, |x, _| if x < w / 2 { 0.2 } else { 0.8 }).unwrap()
    }

    #[test]
    fn constant_image_has_no_edges() {
        let img = GrayImage::constant(32, 32, 0.5).unwrap();
        assert_eq!(detect_edges(&img, 1.0).unwrap().count(), 0);
    }

    #[test]
    fn sigma_below_minimum_is_rejected() {
        let img = step(16, 16);
        assert!(matches!(
            detect_edges(&img, 0.4),
            Err(EdgeError::SigmaTooSmall(_))
        ));
    }

    #[test]
    fn vertical_step_gives_vertical_line_with_vertical_tangent() {
        let img = step(64, 48);
        let edges = detect_edges(&img, 1.0).unwrap();
        let pixels: Vec<(usize, usize)> = edges.edge_pixels().collect();
        assert!(!pixels.is_empty());
        let col = pixels[0].0;
        assert!(col == 31 || col == 32);
        for &(x, y) in &pixels {
            assert_eq!(x, col);
            assert!(undirected_diff(edges.tangent_at(x, y), PI / 2.0) < 1e-9);
        }
        // one pixel per interior row
        assert_eq!(pixels.len(), 48 - 2);
    }

    #[test]
    fn diagonal_boundary_tangent() {
        // intensity increases along (1, 1): boundary runs along (1, -1)
        let img = GrayImage::from_fn(64, 64, |x, y| if x + y < 64 { 0.2 } else { 0.8 }).unwrap();
        let edges = detect_edges(&img, 1.5).unwrap();
        let interior: Vec<_> = edges
            .edge_pixels()
            .filter(|&(x, y)| x > 8 && x < 56 && y > 8 && y < 56)
            .collect();
        assert!(interior.len() > 20);
        for (x, y) in interior {
            assert!(undirected_diff(edges.tangent_at(x, y), 3.0 * PI / 4.0) < 1e-6);
        }
    }

    #[test]
    fn quadrant_choice_is_immaterial_for_tangent() {
        // flipping the gradient sign must not change the undirected tangent
        let a = step(40, 20);
        let b = GrayImage::from_fn(40, 20, |x, y| 1.0 - a.get(x, y)).unwrap();
        let ea = detect_edges(&a, 1.0).unwrap();
        let eb = detect_edges(&b, 1.0).unwrap();
        for (x, y) in ea.edge_pixels() {
            if eb.is_edge(x, y) {
                assert!(undirected_diff(ea.tangent_at(x, y), eb.tangent_at(x, y)) < 1e-12);
            }
        }
    }

    #[test]
    fn gaussian_taps_are_normalized() {
        for s in [0.5, 1.0, 2.3, 4.0] {
            let k = gaussian_kernel(s);
            assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert_eq!(k.len() % 2, 1);
        }
    }
}
