//! Stage 1: regions of interest from template/edge-map convolution.
//!
//! For each orientation the template contour is rasterized into a binary
//! kernel and convolved with the binary edge image. The per-pixel maximum
//! over orientations is an intensity map that peaks where the template
//! outline lines up with image edges; template-sized windows around its
//! strongest local maxima bound the Stage 2 search.

use rayon::prelude::*;
use thiserror::Error;

use crate::edge::EdgeMap;
use crate::geometry::Point;
use crate::raster::{Grid, Template};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RoiError {
    #[error("convolution input is empty")]
    EmptyInput,
    #[error("edge map contains no edge pixels")]
    NoEdges,
    #[error("no orientations given")]
    NoOrientations,
    #[error("kernel scales must be finite and positive")]
    InvalidScales,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoiConfig {
    /// Response quantile a local maximum must reach.
    pub percentile: f64,
    /// Fraction of the global maximum a local maximum must also reach.
    pub relative_floor: f64,
    pub max_windows: usize,
}

impl Default for RoiConfig {
    fn default() -> Self {
        Self {
            percentile: 0.9,
            relative_floor: 0.5,
            max_windows: 8,
        }
    }
}

/// Axis-aligned window in base-frame pixels, already clipped to the image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Window {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
    /// Pixel of the response maximum the window was centered on.
    pub center: (usize, usize),
    pub orientation: f64,
    pub scale: f64,
    /// Fraction of the kernel outline on edge pixels.
    pub response: f64,
}

impl Window {
    pub fn contains(&self, px: f64, py: f64) -> bool {
        px >= self.x as f64
            && py >= self.y as f64
            && px <= (self.x + self.w) as f64 - 1.0
            && py <= (self.y + self.h) as f64 - 1.0
    }

    /// Whether the closed box `[x0, x1] x [y0, y1]` overlaps this window.
    pub fn intersects(&self, x0: f64, y0: f64, x1: f64, y1: f64) -> bool {
        let (wx0, wy0) = (self.x as f64, self.y as f64);
        let (wx1, wy1) = (wx0 + self.w as f64 - 1.0, wy0 + self.h as f64 - 1.0);
        x0 <= wx1 && x1 >= wx0 && y0 <= wy1 && y1 >= wy0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoiSet {
    pub windows: Vec<Window>,
    /// Union area of the windows over the image area.
    pub coverage_fraction: f64,
}

impl RoiSet {
    /// A single window spanning the whole image.
    pub fn whole_image(width: usize, height: usize) -> Self {
        Self {
            windows: vec![Window {
                x: 0,
                y: 0,
                w: width,
                h: height,
                center: (width / 2, height / 2),
                orientation: 0.0,
                scale: 1.0,
                response: 0.0,
            }],
            coverage_fraction: 1.0,
        }
    }
}

/// Full 2D convolution `C(X, Y) = Σ k(x, y) b(X - x, Y - y)` with zero
/// padding; the output is `(Wk + Wb - 1) x (Hk + Hb - 1)`.
pub fn conv2_full(kernel: &Grid<f64>, base: &Grid<f64>) -> Result<Grid<f64>, RoiError> {
    if kernel.is_empty() || base.is_empty() {
        return Err(RoiError::EmptyInput);
    }
    let (kw, kh) = (kernel.width(), kernel.height());
    let (bw, bh) = (base.width(), base.height());
    let ow = kw + bw - 1;
    let mut out = Grid::filled(ow, kh + bh - 1, 0.0);
    let taps: Vec<(usize, usize, f64)> = (0..kh)
        .flat_map(|y| (0..kw).map(move |x| (x, y)))
        .map(|(x, y)| (x, y, kernel.at(x, y)))
        .filter(|&(_, _, v)| v != 0.0)
        .collect();
    // scatter form: sparse edge images touch few output rows per input pixel
    let data = out.data_mut();
    for by in 0..bh {
        for bx in 0..bw {
            let b = base.at(bx, by);
            if b == 0.0 {
                continue;
            }
            for &(kx, ky, k) in &taps {
                data[(by + ky) * ow + bx + kx] += k * b;
            }
        }
    }
    Ok(out)
}

/// Binary kernel of the template contour rotated by `angle` about its bbox
/// center, with the pixel holding that center.
pub fn rasterize_contour(template: &Template, angle: f64) -> (Grid<f64>, (usize, usize)) {
    rasterize_contour_scaled(template, angle, 1.0)
}

/// [`rasterize_contour`] with the contour also scaled about its center.
pub fn rasterize_contour_scaled(template: &Template, angle: f64, scale: f64) -> (Grid<f64>, (usize, usize)) {
    let pivot = template.center();
    let pts: Vec<Point> = template
        .contour()
        .iter()
        .map(|c| ((c.point() - pivot) * scale).rotated(angle))
        .collect();
    let min_x = pts.iter().map(|p| p.x).fold(f64::INFINITY, f64::min).floor();
    let min_y = pts.iter().map(|p| p.y).fold(f64::INFINITY, f64::min).floor();
    let max_x = pts.iter().map(|p| p.x).fold(f64::NEG_INFINITY, f64::max).ceil();
    let max_y = pts.iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max).ceil();
    let (kw, kh) = ((max_x - min_x) as usize + 1, (max_y - min_y) as usize + 1);
    let mut kernel = Grid::filled(kw, kh, 0.0);
    let n = pts.len();
    for i in 0..n {
        let (a, b) = (pts[i], pts[(i + 1) % n]);
        let steps = ((b - a).norm() * 2.0).ceil().max(1.0) as usize;
        for s in 0..=steps {
            let p = a + (b - a) * (s as f64 / steps as f64);
            let u = (p.x - min_x).round() as usize;
            let v = (p.y - min_y).round() as usize;
            *kernel.get_mut(u.min(kw - 1), v.min(kh - 1)) = 1.0;
        }
    }
    let center = ((-min_x).round() as usize, (-min_y).round() as usize);
    (kernel, center)
}

/// Accumulated Stage 1 response indexed by the base pixel under the
/// template center, plus the winning kernel per pixel as an index into
/// `orientations x scales` (orientation major).
///
/// Each kernel's response is divided by its pixel count, so the map holds
/// the fraction of the drawn outline that lands on edges and kernels of
/// different sizes compete fairly.
pub fn response_map(
    template: &Template,
    edges: &EdgeMap,
    orientations: &[f64],
    scales: &[f64],
) -> Result<(Grid<f64>, Grid<usize>), RoiError> {
    if orientations.is_empty() {
        return Err(RoiError::NoOrientations);
    }
    if scales.is_empty() || scales.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
        return Err(RoiError::InvalidScales);
    }
    let (w, h) = (edges.width(), edges.height());
    let binary = Grid::from_fn(w, h, |x, y| if edges.is_edge(x, y) { 1.0 } else { 0.0 });
    let kernels: Vec<(f64, f64)> = orientations
        .iter()
        .flat_map(|&a| scales.iter().map(move |&s| (a, s)))
        .collect();
    let per_kernel: Vec<Grid<f64>> = kernels
        .par_iter()
        .map(|&(angle, scale)| {
            let (kernel, (cu, cv)) = rasterize_contour_scaled(template, angle, scale);
            let (kw, kh) = (kernel.width(), kernel.height());
            let mass: f64 = kernel.data().iter().sum();
            // flipping the kernel turns the convolution into a correlation
            // with the template as drawn
            let flipped = Grid::from_fn(kw, kh, |x, y| kernel.at(kw - 1 - x, kh - 1 - y));
            let full = conv2_full(&flipped, &binary)?;
            Ok(Grid::from_fn(w, h, |x, y| {
                full.at(x + kw - 1 - cu, y + kh - 1 - cv) / mass
            }))
        })
        .collect::<Result<_, RoiError>>()?;

    let mut best = Grid::filled(w, h, f64::NEG_INFINITY);
    let mut which = Grid::filled(w, h, 0usize);
    for (k, resp) in per_kernel.iter().enumerate() {
        for (i, &v) in resp.data().iter().enumerate() {
            if v > best.data()[i] {
                best.data_mut()[i] = v;
                which.data_mut()[i] = k;
            }
        }
    }
    Ok((best, which))
}

fn quantile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = ((q * v.len() as f64).ceil() as usize).clamp(1, v.len());
    v[rank - 1]
}

/// 3x3 local maximum; plateaus resolve to their first pixel in raster order.
fn is_local_max(map: &Grid<f64>, x: usize, y: usize) -> bool {
    let v = map.at(x, y);
    let (w, h) = (map.width() as isize, map.height() as isize);
    for dy in -1isize..=1 {
        for dx in -1isize..=1 {
            if dx == 0 && dy == 0 {
                continue;
            }
            let (nx, ny) = (x as isize + dx, y as isize + dy);
            if nx < 0 || ny < 0 || nx >= w || ny >= h {
                continue;
            }
            let n = map.at(nx as usize, ny as usize);
            let earlier = dy < 0 || (dy == 0 && dx < 0);
            if (earlier && n >= v) || (!earlier && n > v) {
                return false;
            }
        }
    }
    true
}

/// Windows from unit-scale kernels.
pub fn find_rois(
    template: &Template,
    edges: &EdgeMap,
    orientations: &[f64],
    cfg: &RoiConfig,
) -> Result<RoiSet, RoiError> {
    find_rois_with_response(template, edges, orientations, &[1.0], cfg).map(|(set, _)| set)
}

/// Windows from kernels at every orientation and scale, each sized to the
/// kernel that won its maximum. Also returns the accumulated response map.
pub fn find_rois_with_response(
    template: &Template,
    edges: &EdgeMap,
    orientations: &[f64],
    scales: &[f64],
    cfg: &RoiConfig,
) -> Result<(RoiSet, Grid<f64>), RoiError> {
    if edges.count() == 0 {
        return Err(RoiError::NoEdges);
    }
    let (response, which) = response_map(template, edges, orientations, scales)?;
    let (w, h) = (response.width(), response.height());
    let peak = response.data().iter().copied().fold(0.0, f64::max);
    let threshold = quantile(response.data(), cfg.percentile).max(cfg.relative_floor * peak);

    let mut maxima: Vec<(f64, usize)> = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let v = response.at(x, y);
            if v > 0.0 && v >= threshold && is_local_max(&response, x, y) {
                maxima.push((v, y * w + x));
            }
        }
    }
    maxima.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));

    let cap = cfg.max_windows.max(1);
    let mut covered = vec![false; w * h];
    let mut windows: Vec<Window> = Vec::with_capacity(cap);
    for &(v, i) in &maxima {
        if windows.len() == cap {
            break;
        }
        let (cx, cy) = (i % w, i / w);
        let k = which.data()[i];
        let (orientation, scale) = (orientations[k / scales.len()], scales[k % scales.len()]);
        let (ew, eh) = template.posed_extent(scale, orientation);
        let (ew, eh) = (ew.ceil() as i64 + 1, eh.ceil() as i64 + 1);
        let x0 = (cx as i64 - ew / 2).clamp(0, w as i64);
        let y0 = (cy as i64 - eh / 2).clamp(0, h as i64);
        let x1 = (cx as i64 - ew / 2 + ew).clamp(0, w as i64);
        let y1 = (cy as i64 - eh / 2 + eh).clamp(0, h as i64);
        for yy in y0..y1 {
            for xx in x0..x1 {
                covered[yy as usize * w + xx as usize] = true;
            }
        }
        windows.push(Window {
            x: x0 as usize,
            y: y0 as usize,
            w: (x1 - x0) as usize,
            h: (y1 - y0) as usize,
            center: (cx, cy),
            orientation,
            scale,
            response: v,
        });
    }
    let coverage_fraction = covered.iter().filter(|&&c| c).count() as f64 / (w * h) as f64;
    Ok((
        RoiSet {
            windows,
            coverage_fraction,
        },
        response,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(rows: &[&[f64]]) -> Grid<f64> {
        Grid::from_vec(rows[0].len(), rows.len(), rows.concat())
    }

    #[test]
    fn delta_kernel_is_identity() {
        let b = grid(&[&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]]);
        assert_eq!(conv2_full(&grid(&[&[1.0]]), &b).unwrap(), b);
    }

    #[test]
    fn box_kernel_on_identity() {
        let k = grid(&[&[1.0, 1.0], &[1.0, 1.0]]);
        let b = grid(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let c = conv2_full(&k, &b).unwrap();
        assert_eq!(
            c,
            grid(&[&[1.0, 1.0, 0.0], &[1.0, 2.0, 1.0], &[0.0, 1.0, 1.0]])
        );
    }

    #[test]
    fn zero_base_gives_zero_output() {
        let k = grid(&[&[0.3, -2.0, 7.0]]);
        let c = conv2_full(&k, &Grid::filled(4, 3, 0.0)).unwrap();
        assert_eq!((c.width(), c.height()), (6, 3));
        assert!(c.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn empty_input_is_rejected() {
        let empty: Grid<f64> = Grid::from_vec(0, 0, vec![]);
        assert_eq!(conv2_full(&empty, &grid(&[&[1.0]])), Err(RoiError::EmptyInput));
        assert_eq!(conv2_full(&grid(&[&[1.0]]), &empty), Err(RoiError::EmptyInput));
    }

    #[test]
    fn convolution_flips_the_kernel() {
        // an asymmetric kernel against a delta shows the flip explicitly
        let k = grid(&[&[1.0, 2.0]]);
        let b = grid(&[&[0.0, 1.0, 0.0]]);
        assert_eq!(conv2_full(&k, &b).unwrap(), grid(&[&[0.0, 1.0, 2.0, 0.0]]));
    }

    #[test]
    fn local_max_plateau_has_single_winner() {
        let m = grid(&[&[0.0, 5.0, 5.0, 0.0]]);
        assert!(is_local_max(&m, 1, 0));
        assert!(!is_local_max(&m, 2, 0));
    }

    #[test]
    fn scaled_kernel_grows_with_scale() {
        let contour: Vec<crate::raster::ContourPoint> = (0..40)
            .map(|i| {
                let t = i as f64 / 40.0 * std::f64::consts::TAU;
                crate::raster::ContourPoint {
                    x: 10.0 + 10.0 * t.cos(),
                    y: 10.0 + 10.0 * t.sin(),
                    tangent: 0.0,
                }
            })
            .collect();
        let cps = (0..3)
            .map(|k| crate::raster::ControlPoint {
                x: contour[k * 10].x,
                y: contour[k * 10].y,
                label: format!("c{k}"),
            })
            .collect();
        let t = Template::new(contour, cps).unwrap();
        let (k1, c1) = rasterize_contour(&t, 0.0);
        let (k2, c2) = rasterize_contour_scaled(&t, 0.0, 2.0);
        assert_eq!((k1.width(), k1.height()), (21, 21));
        assert_eq!((k2.width(), k2.height()), (41, 41));
        assert_eq!((c1, c2), ((10, 10), (20, 20)));
    }

    #[test]
    fn relative_floor_drops_weak_maxima() {
        // two isolated edge pixels give equal peaks; with the floor at the
        // global maximum only those survive
        let mut flags = Grid::filled(40, 40, false);
        *flags.get_mut(10, 10) = true;
        *flags.get_mut(30, 30) = true;
        let edges = EdgeMap::new(flags, Grid::filled(40, 40, 0.0), 1.0);
        let contour: Vec<crate::raster::ContourPoint> = [(0.0, 0.0), (1.0, 0.0), (2.0, 0.0), (2.0, 1.0), (2.0, 2.0), (1.0, 2.0), (0.0, 2.0), (0.0, 1.0)]
            .iter()
            .map(|&(x, y)| crate::raster::ContourPoint { x, y, tangent: 0.0 })
            .collect();
        let cps = (0..3)
            .map(|k| crate::raster::ControlPoint {
                x: contour[2 * k].x,
                y: contour[2 * k].y,
                label: format!("c{k}"),
            })
            .collect();
        let t = Template::new(contour, cps).unwrap();
        let cfg = RoiConfig {
            percentile: 0.0,
            relative_floor: 1.0,
            max_windows: 10,
        };
        let set = find_rois(&t, &edges, &[0.0], &cfg).unwrap();
        let peak = set.windows[0].response;
        assert!(set.windows.iter().all(|w| w.response == peak));
        assert!(matches!(
            find_rois_with_response(&t, &edges, &[0.0], &[], &cfg),
            Err(RoiError::InvalidScales)
        ));
    }
}
