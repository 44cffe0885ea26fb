//! Per-rotation errors placed on the unit sphere, Mollweide projection and
//! nearest-seed rasterization for figure export.

use std::f64::consts::{FRAC_PI_2, PI, SQRT_2};
use std::fmt::Write as _;
use std::io::{self, Write};
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor::Rotation3;

#[derive(Debug, Error)]
pub enum SphereError {
    #[error("cannot take the direction of a zero vector")]
    ZeroVector,
    #[error("rasterization needs at least one seed")]
    NoSeeds,
    #[error("grid dimensions must be at least 1x1, got {0}x{1}")]
    EmptyGrid(usize, usize),
    #[error("radius must be positive and finite, got {0}")]
    InvalidRadius(f64),
    #[error("unknown colormap `{0}` (expected viridis or grayscale)")]
    UnknownColormap(String),
    #[error("bad grid spec `{0}` (expected WxH)")]
    BadGridSpec(String),
    #[error("{0} rotations but {1} values")]
    CountMismatch(usize, usize),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub const DEFAULT_RADIUS: f64 = 2.0;
pub const DEFAULT_GRID: (usize, usize) = (720, 360);
pub const NEWTON_TOL: f64 = 1e-12;
pub const NEWTON_MAX_ITER: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpherePoint {
    pub xyz: [f64; 3],
    pub value: f64,
}

/// Image of the north pole under `r`, carrying `value`.
pub fn rotation_to_sphere(r: &Rotation3, value: f64) -> SpherePoint {
    let v = r.apply([0.0, 0.0, 1.0]);
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    SpherePoint { xyz: [v[0] / n, v[1] / n, v[2] / n], value }
}

pub fn sphere_points(rotations: &[Rotation3], values: &[f64]) -> Result<Vec<SpherePoint>, SphereError> {
    if rotations.len() != values.len() {
        return Err(SphereError::CountMismatch(rotations.len(), values.len()));
    }
    Ok(rotations.iter().zip(values).map(|(r, &v)| rotation_to_sphere(r, v)).collect())
}

/// Latitude and longitude of a direction. Longitude is 0 on the polar axis.
pub fn cart_to_latlon(xyz: [f64; 3]) -> Result<(f64, f64), SphereError> {
    let [x, y, z] = xyz;
    let n = (x * x + y * y + z * z).sqrt();
    if n == 0.0 {
        return Err(SphereError::ZeroVector);
    }
    let phi = (z / n).clamp(-1.0, 1.0).asin();
    let lambda = if x == 0.0 && y == 0.0 { 0.0 } else { y.atan2(x) };
    Ok((phi, lambda))
}

fn theta_residual(theta: f64, phi: f64) -> f64 {
    2.0 * theta + (2.0 * theta).sin() - PI * phi.sin()
}

/// Auxiliary angle solving `2θ + sin 2θ = π sin φ` by Newton iteration.
pub fn solve_theta(phi: f64) -> f64 {
    if phi >= FRAC_PI_2 {
        return FRAC_PI_2;
    }
    if phi <= -FRAC_PI_2 {
        return -FRAC_PI_2;
    }
    let mut theta = phi;
    for _ in 0..NEWTON_MAX_ITER {
        let f = theta_residual(theta, phi);
        if f.abs() <= NEWTON_TOL {
            return theta;
        }
        let df = 2.0 + 2.0 * (2.0 * theta).cos();
        if df == 0.0 {
            break;
        }
        theta = (theta - f / df).clamp(-FRAC_PI_2, FRAC_PI_2);
    }
    let f = theta_residual(theta, phi);
    assert!(f.abs() <= NEWTON_TOL, "Mollweide Newton iteration did not converge for phi = {phi} (residual {f:e})");
    theta
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjectedPoint {
    pub x: f64,
    pub y: f64,
    pub value: f64,
}

pub fn mollweide_project(phi: f64, lambda: f64, radius: f64) -> (f64, f64) {
    let theta = solve_theta(phi);
    let x = radius * (2.0 * SQRT_2 / PI) * lambda * theta.cos();
    let y = radius * SQRT_2 * theta.sin();
    (x, y)
}

pub fn project_points(points: &[SpherePoint], radius: f64) -> Result<Vec<ProjectedPoint>, SphereError> {
    points
        .iter()
        .map(|p| {
            let (phi, lambda) = cart_to_latlon(p.xyz)?;
            let (x, y) = mollweide_project(phi, lambda, radius);
            Ok(ProjectedPoint { x, y, value: p.value })
        })
        .collect()
}

/// Semi-axes of the bounding ellipse.
pub fn ellipse_axes(radius: f64) -> (f64, f64) {
    (2.0 * SQRT_2 * radius, SQRT_2 * radius)
}

pub fn inside_ellipse(x: f64, y: f64, radius: f64) -> bool {
    let (a, b) = ellipse_axes(radius);
    (x / a).powi(2) + (y / b).powi(2) <= 1.0
}

/// Raster over the bounding box of the ellipse. Row 0 is the top.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueGrid {
    pub width: usize,
    pub height: usize,
    pub radius: f64,
    /// Nearest seed per cell, `None` outside the ellipse.
    pub seed: Vec<Option<usize>>,
    pub values: Vec<Option<f64>>,
}

impl ValueGrid {
    /// Plane coordinates of the centre of cell (`col`, `row`).
    pub fn cell_center(width: usize, height: usize, radius: f64, col: usize, row: usize) -> (f64, f64) {
        let (a, b) = ellipse_axes(radius);
        let x = -a + (col as f64 + 0.5) * (2.0 * a / width as f64);
        let y = b - (row as f64 + 0.5) * (2.0 * b / height as f64);
        (x, y)
    }

    pub fn get(&self, col: usize, row: usize) -> Option<f64> {
        self.values[row * self.width + col]
    }
}

fn dist2(p: &ProjectedPoint, x: f64, y: f64) -> f64 {
    let dx = p.x - x;
    let dy = p.y - y;
    dx * dx + dy * dy
}

/// Uniform bucket grid covering the seeds and the ellipse.
struct Buckets {
    x0: f64,
    y0: f64,
    size: f64,
    nx: usize,
    ny: usize,
    cells: Vec<Vec<usize>>,
}

impl Buckets {
    fn new(points: &[ProjectedPoint], radius: f64) -> Self {
        let (a, b) = ellipse_axes(radius);
        let (mut x0, mut x1, mut y0, mut y1) = (-a, a, -b, b);
        for p in points {
            x0 = x0.min(p.x);
            x1 = x1.max(p.x);
            y0 = y0.min(p.y);
            y1 = y1.max(p.y);
        }
        let extent = (x1 - x0).max(y1 - y0);
        let per_side = (points.len() as f64).sqrt().ceil().max(1.0);
        let size = extent / per_side;
        let nx = (((x1 - x0) / size).floor() as usize + 1).max(1);
        let ny = (((y1 - y0) / size).floor() as usize + 1).max(1);
        let mut cells = vec![Vec::new(); nx * ny];
        for (i, p) in points.iter().enumerate() {
            let (bx, by) = Self::locate(x0, y0, size, nx, ny, p.x, p.y);
            cells[by * nx + bx].push(i);
        }
        Buckets { x0, y0, size, nx, ny, cells }
    }

    fn locate(x0: f64, y0: f64, size: f64, nx: usize, ny: usize, x: f64, y: f64) -> (usize, usize) {
        let bx = ((x - x0) / size).floor().clamp(0.0, (nx - 1) as f64) as usize;
        let by = ((y - y0) / size).floor().clamp(0.0, (ny - 1) as f64) as usize;
        (bx, by)
    }

    /// Lowest `(d², index)` over all seeds.
    fn nearest(&self, points: &[ProjectedPoint], x: f64, y: f64) -> usize {
        let qx = ((x - self.x0) / self.size).floor();
        let qy = ((y - self.y0) / self.size).floor();
        // bucket indices may lie outside the seed box; work in signed space
        let (cx, cy) = (qx as i64, qy as i64);
        let mut best: Option<(f64, usize)> = None;
        let (nx, ny) = (self.nx as i64, self.ny as i64);
        let max_ring = cx.abs().max((cx - nx + 1).abs()).max(cy.abs()).max((cy - ny + 1).abs());
        for ring in 0..=max_ring {
            for by in (cy - ring)..=(cy + ring) {
                if by < 0 || by >= ny {
                    continue;
                }
                let on_edge_row = by == cy - ring || by == cy + ring;
                let step = if on_edge_row || ring == 0 { 1 } else { 2 * ring };
                let mut bx = cx - ring;
                while bx <= cx + ring {
                    if bx >= 0 && bx < nx {
                        for &i in &self.cells[by as usize * self.nx + bx as usize] {
                            let cand = (dist2(&points[i], x, y), i);
                            if best.is_none_or(|b| cand < b) {
                                best = Some(cand);
                            }
                        }
                    }
                    bx += step;
                }
            }
            if let Some((d, _)) = best {
                // any seed in a farther ring is at least `ring * size` away
                let reach = ring as f64 * self.size;
                if ring > 0 && d < reach * reach {
                    break;
                }
            }
        }
        best.expect("at least one seed").1
    }
}

/// Nearest-seed raster. Distances are planar, ties go to the lowest index.
pub fn voronoi_rasterize(
    points: &[ProjectedPoint],
    width: usize,
    height: usize,
    radius: f64,
) -> Result<ValueGrid, SphereError> {
    if points.is_empty() {
        return Err(SphereError::NoSeeds);
    }
    if width == 0 || height == 0 {
        return Err(SphereError::EmptyGrid(width, height));
    }
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(SphereError::InvalidRadius(radius));
    }
    let buckets = Buckets::new(points, radius);
    let rows: Vec<Vec<Option<usize>>> = (0..height)
        .into_par_iter()
        .map(|row| {
            (0..width)
                .map(|col| {
                    let (x, y) = ValueGrid::cell_center(width, height, radius, col, row);
                    inside_ellipse(x, y, radius).then(|| buckets.nearest(points, x, y))
                })
                .collect()
        })
        .collect();
    let seed: Vec<Option<usize>> = rows.into_iter().flatten().collect();
    let values = seed.iter().map(|s| s.map(|i| points[i].value)).collect();
    Ok(ValueGrid { width, height, radius, seed, values })
}

pub fn parse_grid(spec: &str) -> Result<(usize, usize), SphereError> {
    let bad = || SphereError::BadGridSpec(spec.to_owned());
    let (w, h) = spec.split_once(['x', 'X']).ok_or_else(bad)?;
    let w: usize = w.trim().parse().map_err(|_| bad())?;
    let h: usize = h.trim().parse().map_err(|_| bad())?;
    if w == 0 || h == 0 {
        return Err(SphereError::EmptyGrid(w, h));
    }
    Ok((w, h))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Colormap {
    #[default]
    Viridis,
    Grayscale,
}

const VIRIDIS: [[u8; 3]; 9] = [
    [68, 1, 84],
    [71, 44, 122],
    [59, 82, 139],
    [44, 113, 142],
    [33, 145, 140],
    [39, 173, 129],
    [92, 200, 99],
    [170, 220, 50],
    [253, 231, 37],
];

impl Colormap {
    /// Colour at `t` in `[0, 1]`.
    pub fn rgb(self, t: f64) -> [u8; 3] {
        let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 0.5 };
        match self {
            Colormap::Grayscale => {
                let g = (t * 255.0).round() as u8;
                [g, g, g]
            }
            Colormap::Viridis => {
                let s = t * (VIRIDIS.len() - 1) as f64;
                let k = (s.floor() as usize).min(VIRIDIS.len() - 2);
                let f = s - k as f64;
                let mut out = [0u8; 3];
                for c in 0..3 {
                    let a = VIRIDIS[k][c] as f64;
                    let b = VIRIDIS[k + 1][c] as f64;
                    out[c] = (a + (b - a) * f).round() as u8;
                }
                out
            }
        }
    }
}

impl FromStr for Colormap {
    type Err = SphereError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "viridis" => Ok(Colormap::Viridis),
            "grayscale" | "greyscale" | "gray" | "grey" => Ok(Colormap::Grayscale),
            _ => Err(SphereError::UnknownColormap(s.to_owned())),
        }
    }
}

fn hex(c: [u8; 3]) -> String {
    format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2])
}

const COLORBAR_GAP: usize = 12;
const COLORBAR_WIDTH: usize = 16;
const COLORBAR_STEPS: usize = 64;
const LABEL_SPACE: usize = 90;

/// SVG of the raster: merged runs of equal colour per row, the ellipse
/// outline and a vertical colorbar. Cells outside the ellipse stay empty.
pub fn render_svg(grid: &ValueGrid, colormap: Colormap) -> String {
    let present = || grid.values.iter().flatten().copied();
    let lo = present().fold(f64::INFINITY, f64::min);
    let hi = present().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    let norm = |v: f64| if span > 0.0 { (v - lo) / span } else { 0.5 };

    let (w, h) = (grid.width, grid.height);
    let total_w = w + COLORBAR_GAP + COLORBAR_WIDTH + LABEL_SPACE;
    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{total_w}" height="{h}" viewBox="0 0 {total_w} {h}" shape-rendering="crispEdges">"#
    );
    let _ = writeln!(s, r#"<g id="cells">"#);
    for row in 0..h {
        let mut col = 0;
        while col < w {
            let Some(v) = grid.get(col, row) else {
                col += 1;
                continue;
            };
            let color = colormap.rgb(norm(v));
            let start = col;
            col += 1;
            while col < w && grid.get(col, row).map(|u| colormap.rgb(norm(u))) == Some(color) {
                col += 1;
            }
            let _ = writeln!(
                s,
                r#"<rect x="{start}" y="{row}" width="{}" height="1" fill="{}"/>"#,
                col - start,
                hex(color)
            );
        }
    }
    let _ = writeln!(s, "</g>");
    let _ = writeln!(
        s,
        r#"<ellipse id="outline" cx="{}" cy="{}" rx="{}" ry="{}" fill="none" stroke="black" stroke-width="1"/>"#,
        w as f64 / 2.0,
        h as f64 / 2.0,
        w as f64 / 2.0,
        h as f64 / 2.0
    );
    let bar_x = w + COLORBAR_GAP;
    let _ = writeln!(s, r#"<g id="colorbar">"#);
    for k in 0..COLORBAR_STEPS {
        let y0 = h * k / COLORBAR_STEPS;
        let y1 = h * (k + 1) / COLORBAR_STEPS;
        if y1 == y0 {
            continue;
        }
        let t = 1.0 - (k as f64 + 0.5) / COLORBAR_STEPS as f64;
        let _ = writeln!(
            s,
            r#"<rect x="{bar_x}" y="{y0}" width="{COLORBAR_WIDTH}" height="{}" fill="{}"/>"#,
            y1 - y0,
            hex(colormap.rgb(t))
        );
    }
    let label_x = bar_x + COLORBAR_WIDTH + 4;
    let _ = writeln!(s, r#"<text x="{label_x}" y="10" font-size="10" font-family="sans-serif">{hi:.6e}</text>"#);
    let _ = writeln!(s, r#"<text x="{label_x}" y="{h}" font-size="10" font-family="sans-serif">{lo:.6e}</text>"#);
    let _ = writeln!(s, "</g>");
    let _ = writeln!(s, "</svg>");
    s
}

pub fn write_seeds_csv<W: Write>(mut out: W, points: &[ProjectedPoint]) -> io::Result<()> {
    writeln!(out, "x,y,mere")?;
    for p in points {
        writeln!(out, "{},{},{}", p.x, p.y, p.value)?;
    }
    Ok(())
}

/// Writes `<stem>.svg` and `<stem>_seeds.csv` under `dir`.
pub fn export_map(
    grid: &ValueGrid,
    points: &[ProjectedPoint],
    colormap: Colormap,
    dir: &Path,
    stem: &str,
) -> Result<(), SphereError> {
    std::fs::write(dir.join(format!("{stem}.svg")), render_svg(grid, colormap))?;
    let f = std::fs::File::create(dir.join(format!("{stem}_seeds.csv")))?;
    let mut w = io::BufWriter::new(f);
    write_seeds_csv(&mut w, points)?;
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SphereOptions {
    pub width: usize,
    pub height: usize,
    pub radius: f64,
    pub colormap: Colormap,
}

impl Default for SphereOptions {
    fn default() -> Self {
        SphereOptions { width: DEFAULT_GRID.0, height: DEFAULT_GRID.1, radius: DEFAULT_RADIUS, colormap: Colormap::Viridis }
    }
}

/// Rotations and their errors to projected seeds and raster in one step.
pub fn build_map(
    rotations: &[Rotation3],
    values: &[f64],
    opts: &SphereOptions,
) -> Result<(Vec<ProjectedPoint>, ValueGrid), SphereError> {
    let points = project_points(&sphere_points(rotations, values)?, opts.radius)?;
    let grid = voronoi_rasterize(&points, opts.width, opts.height, opts.radius)?;
    Ok((points, grid))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn pole_image_of_rotations() {
        let p = rotation_to_sphere(&Rotation3::identity(), 0.3);
        assert_eq!(p.xyz, [0.0, 0.0, 1.0]);
        assert_eq!(p.value, 0.3);
        let rx = Rotation3::from_matrix([[1.0, 0.0, 0.0], [0.0, 0.0, -1.0], [0.0, 1.0, 0.0]]).unwrap();
        assert_eq!(rotation_to_sphere(&rx, 0.0).xyz, [0.0, -1.0, 0.0]);
        let r = Rotation3::about_axis([1.0, 2.0, 3.0], 0.7);
        let q = rotation_to_sphere(&r, 0.0).xyz;
        assert!(((q[0] * q[0] + q[1] * q[1] + q[2] * q[2]).sqrt() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn latlon_examples() {
        assert_eq!(cart_to_latlon([0.0, 0.0, 1.0]).unwrap(), (FRAC_PI_2, 0.0));
        assert_eq!(cart_to_latlon([1.0, 0.0, 0.0]).unwrap(), (0.0, 0.0));
        assert_eq!(cart_to_latlon([-1.0, 0.0, 0.0]).unwrap(), (0.0, PI));
        assert!(matches!(cart_to_latlon([0.0; 3]), Err(SphereError::ZeroVector)));
    }

    #[test]
    fn theta_examples() {
        assert_eq!(solve_theta(0.0), 0.0);
        assert_eq!(solve_theta(FRAC_PI_2), FRAC_PI_2);
        assert_eq!(solve_theta(-FRAC_PI_2), -FRAC_PI_2);
        let phi = PI / 6.0;
        let th = solve_theta(phi);
        assert!((2.0 * th + (2.0 * th).sin() - PI / 2.0).abs() <= 1e-12);
    }

    #[test]
    fn newton_residual_many_latitudes() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        for _ in 0..10_000 {
            let phi = rng.random_range(-FRAC_PI_2..=FRAC_PI_2);
            let th = solve_theta(phi);
            assert!(theta_residual(th, phi).abs() <= 1e-12, "phi = {phi}");
        }
        // near-pole latitudes where the derivative vanishes
        for k in 1..200 {
            let phi = FRAC_PI_2 - 10f64.powf(-(k as f64) / 20.0);
            assert!(theta_residual(solve_theta(phi), phi).abs() <= 1e-12, "phi = {phi}");
        }
    }

    #[test]
    fn projection_examples() {
        assert_eq!(mollweide_project(0.0, 0.0, 2.0), (0.0, 0.0));
        let (x, y) = mollweide_project(FRAC_PI_2, 1.3, 2.0);
        assert!(x.abs() <= 1e-12);
        assert!((y - 2.0 * SQRT_2).abs() <= 1e-12);
        let (x, y) = mollweide_project(0.0, PI, 2.0);
        assert!((x - 4.0 * SQRT_2).abs() <= 1e-12);
        assert_eq!(y, 0.0);
    }

    fn brute_force(points: &[ProjectedPoint], x: f64, y: f64) -> usize {
        let mut best = 0;
        for i in 1..points.len() {
            let di = (points[i].x - x).powi(2) + (points[i].y - y).powi(2);
            let db = (points[best].x - x).powi(2) + (points[best].y - y).powi(2);
            if di < db {
                best = i;
            }
        }
        best
    }

    fn random_seeds(seed: u64, n: usize) -> Vec<ProjectedPoint> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let v = [rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5];
                let (phi, lam) = cart_to_latlon(v).unwrap();
                let (x, y) = mollweide_project(phi, lam, 2.0);
                ProjectedPoint { x, y, value: i as f64 }
            })
            .collect()
    }

    #[test]
    fn raster_matches_brute_force() {
        let seeds = random_seeds(11, 50);
        let grid = voronoi_rasterize(&seeds, 64, 32, 2.0).unwrap();
        let mut inside = 0;
        for row in 0..32 {
            for col in 0..64 {
                let (x, y) = ValueGrid::cell_center(64, 32, 2.0, col, row);
                let got = grid.seed[row * 64 + col];
                if inside_ellipse(x, y, 2.0) {
                    inside += 1;
                    assert_eq!(got, Some(brute_force(&seeds, x, y)), "cell ({col}, {row})");
                } else {
                    assert_eq!(got, None);
                    assert_eq!(grid.get(col, row), None);
                }
            }
        }
        assert!(inside > 64 * 32 / 2);
    }

    #[test]
    fn single_seed_fills_ellipse() {
        let p = [ProjectedPoint { x: 0.3, y: -0.2, value: 7.0 }];
        let grid = voronoi_rasterize(&p, 40, 20, 2.0).unwrap();
        for row in 0..20 {
            for col in 0..40 {
                let (x, y) = ValueGrid::cell_center(40, 20, 2.0, col, row);
                assert_eq!(grid.get(col, row), inside_ellipse(x, y, 2.0).then_some(7.0));
            }
        }
    }

    #[test]
    fn two_seeds_split_vertically() {
        let p = [ProjectedPoint { x: -1.0, y: 0.0, value: 1.0 }, ProjectedPoint { x: 1.0, y: 0.0, value: 2.0 }];
        let grid = voronoi_rasterize(&p, 40, 20, 2.0).unwrap();
        for row in 0..20 {
            for col in 0..40 {
                if let Some(v) = grid.get(col, row) {
                    assert_eq!(v, if col < 20 { 1.0 } else { 2.0 });
                }
            }
        }
    }

    #[test]
    fn ties_go_to_lowest_index() {
        let p = [
            ProjectedPoint { x: 0.5, y: 0.0, value: 1.0 },
            ProjectedPoint { x: 0.5, y: 0.0, value: 2.0 },
        ];
        let grid = voronoi_rasterize(&p, 16, 8, 2.0).unwrap();
        assert!(grid.seed.iter().flatten().all(|&i| i == 0));
    }

    #[test]
    fn raster_errors() {
        assert!(matches!(voronoi_rasterize(&[], 4, 4, 2.0), Err(SphereError::NoSeeds)));
        let p = [ProjectedPoint { x: 0.0, y: 0.0, value: 0.0 }];
        assert!(matches!(voronoi_rasterize(&p, 0, 4, 2.0), Err(SphereError::EmptyGrid(0, 4))));
        assert_eq!(parse_grid("720x360").unwrap(), (720, 360));
        assert!(parse_grid("720").is_err());
        assert!(parse_grid("0x3").is_err());
    }

    #[test]
    fn export_is_deterministic() {
        let seeds = random_seeds(3, 30);
        let grid = voronoi_rasterize(&seeds, 48, 24, 2.0).unwrap();
        let a = render_svg(&grid, Colormap::Viridis);
        assert_eq!(a, render_svg(&grid, Colormap::Viridis));
        assert!(a.contains("<ellipse id=\"outline\""));
        assert!(a.contains("<g id=\"colorbar\">"));
        // corners are outside the ellipse and get no rectangle
        assert!(!a.contains(r#"<rect x="0" y="0" "#));
        let dir = tempfile::tempdir().unwrap();
        export_map(&grid, &seeds, Colormap::Grayscale, dir.path(), "map").unwrap();
        let csv = std::fs::read_to_string(dir.path().join("map_seeds.csv")).unwrap();
        assert_eq!(csv.lines().next(), Some("x,y,mere"));
        assert_eq!(csv.lines().count(), seeds.len() + 1);
        assert!(dir.path().join("map.svg").exists());
    }

    #[test]
    fn colormap_names() {
        assert_eq!("viridis".parse::<Colormap>().unwrap(), Colormap::Viridis);
        assert_eq!("Grayscale".parse::<Colormap>().unwrap(), Colormap::Grayscale);
        assert!("jet".parse::<Colormap>().is_err());
        assert_eq!(Colormap::Viridis.rgb(0.0), VIRIDIS[0]);
        assert_eq!(Colormap::Viridis.rgb(1.0), VIRIDIS[8]);
    }

    proptest! {
        #[test]
        fn prop_projection_bounds(phi in -FRAC_PI_2..=FRAC_PI_2, lam in -PI..=PI, r in 0.1..10.0f64) {
            let (x, y) = mollweide_project(phi, lam, r);
            prop_assert!(y.abs() <= r * SQRT_2 + 1e-9);
            prop_assert!(x.abs() <= 2.0 * SQRT_2 * r + 1e-9);
            prop_assert!((x / (2.0 * SQRT_2 * r)).powi(2) + (y / (SQRT_2 * r)).powi(2) <= 1.0 + 1e-9);
            let (xm, ym) = mollweide_project(phi, -lam, r);
            prop_assert!((xm + x).abs() <= 1e-12 * r);
            prop_assert!((ym - y).abs() <= 1e-12 * r);
        }

        #[test]
        fn prop_equator_is_straight(lam in -PI..=PI) {
            prop_assert_eq!(mollweide_project(0.0, lam, 2.0).1, 0.0);
        }

        #[test]
        fn prop_raster_matches_brute_force(seed in any::<u64>(), n in 1usize..40, w in 4usize..40, h in 2usize..20) {
            let seeds = random_seeds(seed, n);
            let grid = voronoi_rasterize(&seeds, w, h, 2.0).unwrap();
            for row in 0..h {
                for col in 0..w {
                    let (x, y) = ValueGrid::cell_center(w, h, 2.0, col, row);
                    if inside_ellipse(x, y, 2.0) {
                        prop_assert_eq!(grid.seed[row * w + col], Some(brute_force(&seeds, x, y)));
                    }
                }
            }
        }
    }
}
