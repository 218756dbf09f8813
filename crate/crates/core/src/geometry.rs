//! Source, sink and slope-bound regions and their rasterization onto the grid.

use crate::error::{Error, Result};
use crate::grid::{CellField, Grid};
use crate::par::{self, Execution};

/// Default per-axis subsampling used to estimate cell coverage.
pub const DEFAULT_SUBSAMPLE: usize = 8;

/// Slope bound used for regions closed to transport.
pub const OBSTACLE_K: f64 = 1e6;

#[derive(Debug, Clone, PartialEq)]
pub enum Shape {
    Rectangle {
        center: (f64, f64),
        half_width: f64,
        half_height: f64,
        angle: f64,
    },
    Ellipse {
        center: (f64, f64),
        semi_a: f64,
        semi_b: f64,
        angle: f64,
    },
    Polygon {
        vertices: Vec<(f64, f64)>,
    },
    /// Point mass, spread over the single cell containing it.
    Point {
        at: (f64, f64),
    },
}

/// A shape carrying a value: a signed density for sources (total mass for
/// [`Shape::Point`]) or a slope bound for k-regions.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeSpec {
    shape: Shape,
    value: f64,
}

fn check_value(value: f64) -> Result<()> {
    if !value.is_finite() {
        return Err(Error::InvalidShape(format!(
            "value must be finite, got {value}"
        )));
    }
    Ok(())
}

fn check_finite(xs: &[f64]) -> Result<()> {
    if xs.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidShape("non-finite shape parameter".into()))
    }
}

impl ShapeSpec {
    pub fn rectangle(
        center: (f64, f64),
        half_width: f64,
        half_height: f64,
        angle: f64,
        value: f64,
    ) -> Result<Self> {
        check_finite(&[center.0, center.1, half_width, half_height, angle])?;
        check_value(value)?;
        if !(half_width > 0.0 && half_height > 0.0) {
            return Err(Error::InvalidShape(format!(
                "rectangle half-extents must be positive, got ({half_width}, {half_height})"
            )));
        }
        Ok(ShapeSpec {
            shape: Shape::Rectangle {
                center,
                half_width,
                half_height,
                angle,
            },
            value,
        })
    }

    /// Axis-aligned rectangle `[x0, x1] x [y0, y1]`.
    pub fn rect_between(x0: f64, y0: f64, x1: f64, y1: f64, value: f64) -> Result<Self> {
        Self::rectangle(
            (0.5 * (x0 + x1), 0.5 * (y0 + y1)),
            0.5 * (x1 - x0),
            0.5 * (y1 - y0),
            0.0,
            value,
        )
    }

    pub fn ellipse(
        center: (f64, f64),
        semi_a: f64,
        semi_b: f64,
        angle: f64,
        value: f64,
    ) -> Result<Self> {
        check_finite(&[center.0, center.1, semi_a, semi_b, angle])?;
        check_value(value)?;
        if !(semi_a > 0.0 && semi_b > 0.0) {
            return Err(Error::InvalidShape(format!(
                "ellipse semi-axes must be positive, got ({semi_a}, {semi_b})"
            )));
        }
        Ok(ShapeSpec {
            shape: Shape::Ellipse {
                center,
                semi_a,
                semi_b,
                angle,
            },
            value,
        })
    }

    pub fn disk(center: (f64, f64), radius: f64, value: f64) -> Result<Self> {
        Self::ellipse(center, radius, radius, 0.0, value)
    }

    pub fn polygon(vertices: Vec<(f64, f64)>, value: f64) -> Result<Self> {
        check_value(value)?;
        if vertices.len() < 3 {
            return Err(Error::InvalidShape(format!(
                "polygon needs at least 3 vertices, got {}",
                vertices.len()
            )));
        }
        check_finite(
            &vertices
                .iter()
                .flat_map(|&(x, y)| [x, y])
                .collect::<Vec<_>>(),
        )?;
        if polygon_area(&vertices).abs() == 0.0 {
            return Err(Error::InvalidShape("polygon has zero area".into()));
        }
        if !polygon_is_simple(&vertices) {
            return Err(Error::InvalidShape("polygon is self-intersecting".into()));
        }
        Ok(ShapeSpec {
            shape: Shape::Polygon { vertices },
            value,
        })
    }

    pub fn point(at: (f64, f64), mass: f64) -> Result<Self> {
        check_finite(&[at.0, at.1])?;
        check_value(mass)?;
        Ok(ShapeSpec {
            shape: Shape::Point { at },
            value: mass,
        })
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn with_value(&self, value: f64) -> Self {
        ShapeSpec {
            shape: self.shape.clone(),
            value,
        }
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        match &self.shape {
            Shape::Rectangle {
                center,
                half_width,
                half_height,
                angle,
            } => {
                let (u, v) = to_local(*center, *angle, x, y);
                u.abs() <= *half_width && v.abs() <= *half_height
            }
            Shape::Ellipse {
                center,
                semi_a,
                semi_b,
                angle,
            } => {
                let (u, v) = to_local(*center, *angle, x, y);
                (u / semi_a).powi(2) + (v / semi_b).powi(2) <= 1.0
            }
            Shape::Polygon { vertices } => polygon_contains(vertices, x, y),
            Shape::Point { .. } => false,
        }
    }

    /// `[x0, y0, x1, y1]`.
    pub fn bbox(&self) -> [f64; 4] {
        match &self.shape {
            Shape::Rectangle {
                center,
                half_width,
                half_height,
                angle,
            } => {
                let (c, s) = (angle.cos().abs(), angle.sin().abs());
                let ex = half_width * c + half_height * s;
                let ey = half_width * s + half_height * c;
                [center.0 - ex, center.1 - ey, center.0 + ex, center.1 + ey]
            }
            Shape::Ellipse {
                center,
                semi_a,
                semi_b,
                angle,
            } => {
                let (c, s) = (angle.cos(), angle.sin());
                let ex = ((semi_a * c).powi(2) + (semi_b * s).powi(2)).sqrt();
                let ey = ((semi_a * s).powi(2) + (semi_b * c).powi(2)).sqrt();
                [center.0 - ex, center.1 - ey, center.0 + ex, center.1 + ey]
            }
            Shape::Polygon { vertices } => vertices.iter().fold(
                [
                    f64::INFINITY,
                    f64::INFINITY,
                    f64::NEG_INFINITY,
                    f64::NEG_INFINITY,
                ],
                |[a, b, c, d], &(x, y)| [a.min(x), b.min(y), c.max(x), d.max(y)],
            ),
            Shape::Point { at } => [at.0, at.1, at.0, at.1],
        }
    }

    /// Exact area of the shape (zero for a point).
    pub fn area(&self) -> f64 {
        match &self.shape {
            Shape::Rectangle {
                half_width,
                half_height,
                ..
            } => 4.0 * half_width * half_height,
            Shape::Ellipse { semi_a, semi_b, .. } => std::f64::consts::PI * semi_a * semi_b,
            Shape::Polygon { vertices } => polygon_area(vertices).abs(),
            Shape::Point { .. } => 0.0,
        }
    }

    /// Fraction of cell `(i, j)` covered by the shape, from `s x s` samples.
    pub fn coverage(&self, grid: &Grid, i: usize, j: usize, subsample: usize) -> f64 {
        let (x0, y0) = grid.origin();
        let h = grid.h();
        let bb = self.bbox();
        let (cx0, cy0) = (x0 + i as f64 * h, y0 + j as f64 * h);
        if cx0 > bb[2] || cx0 + h < bb[0] || cy0 > bb[3] || cy0 + h < bb[1] {
            return 0.0;
        }
        let step = h / subsample as f64;
        let mut hits = 0usize;
        for b in 0..subsample {
            let y = cy0 + (b as f64 + 0.5) * step;
            for a in 0..subsample {
                let x = cx0 + (a as f64 + 0.5) * step;
                if self.contains(x, y) {
                    hits += 1;
                }
            }
        }
        hits as f64 / (subsample * subsample) as f64
    }
}

fn to_local(center: (f64, f64), angle: f64, x: f64, y: f64) -> (f64, f64) {
    let (dx, dy) = (x - center.0, y - center.1);
    let (c, s) = (angle.cos(), angle.sin());
    (c * dx + s * dy, -s * dx + c * dy)
}

fn polygon_area(v: &[(f64, f64)]) -> f64 {
    let n = v.len();
    0.5 * (0..n)
        .map(|a| {
            let (p, q) = (v[a], v[(a + 1) % n]);
            p.0 * q.1 - q.0 * p.1
        })
        .sum::<f64>()
}

fn polygon_contains(v: &[(f64, f64)], x: f64, y: f64) -> bool {
    let n = v.len();
    let mut inside = false;
    let mut b = n - 1;
    for a in 0..n {
        let (xa, ya) = v[a];
        let (xb, yb) = v[b];
        if (ya > y) != (yb > y) && x < (xb - xa) * (y - ya) / (yb - ya) + xa {
            inside = !inside;
        }
        b = a;
    }
    inside
}

fn orient(p: (f64, f64), q: (f64, f64), r: (f64, f64)) -> f64 {
    (q.0 - p.0) * (r.1 - p.1) - (q.1 - p.1) * (r.0 - p.0)
}

fn on_segment(p: (f64, f64), q: (f64, f64), r: (f64, f64)) -> bool {
    r.0 >= p.0.min(q.0) && r.0 <= p.0.max(q.0) && r.1 >= p.1.min(q.1) && r.1 <= p.1.max(q.1)
}

fn segments_intersect(p1: (f64, f64), p2: (f64, f64), p3: (f64, f64), p4: (f64, f64)) -> bool {
    let d1 = orient(p3, p4, p1);
    let d2 = orient(p3, p4, p2);
    let d3 = orient(p1, p2, p3);
    let d4 = orient(p1, p2, p4);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    (d1 == 0.0 && on_segment(p3, p4, p1))
        || (d2 == 0.0 && on_segment(p3, p4, p2))
        || (d3 == 0.0 && on_segment(p1, p2, p3))
        || (d4 == 0.0 && on_segment(p1, p2, p4))
}

fn polygon_is_simple(v: &[(f64, f64)]) -> bool {
    let n = v.len();
    for a in 0..n {
        for b in a + 1..n {
            // skip edges sharing a vertex
            if b == a + 1 || (a == 0 && b == n - 1) {
                continue;
            }
            if segments_intersect(v[a], v[(a + 1) % n], v[b], v[(b + 1) % n]) {
                return false;
            }
        }
    }
    true
}

#[derive(Debug, Clone, PartialEq, Default)]
pub enum InitialSurface {
    #[default]
    Zero,
    Field(CellField),
}

/// Transport problem: source/sink shapes, the slope bound and the initial
/// surface.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    /// `[x0, y0, x1, y1]`.
    pub domain: [f64; 4],
    /// Signed densities: positive entries feed `f+`, negative ones `f-`.
    pub sources: Vec<ShapeSpec>,
    pub k_base: f64,
    /// Slope-bound overrides; later entries win.
    pub k_regions: Vec<ShapeSpec>,
    pub u0: InitialSurface,
}

impl ProblemSpec {
    pub fn new(domain: [f64; 4]) -> Self {
        ProblemSpec {
            domain,
            sources: Vec::new(),
            k_base: 1.0,
            k_regions: Vec::new(),
            u0: InitialSurface::Zero,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let [x0, y0, x1, y1] = self.domain;
        if !(self.domain.iter().all(|v| v.is_finite()) && x1 > x0 && y1 > y0) {
            return Err(Error::InvalidProblem(format!(
                "domain box must have positive area, got {:?}",
                self.domain
            )));
        }
        if !(self.k_base > 0.0 && self.k_base.is_finite()) {
            return Err(Error::InvalidProblem(format!(
                "k_base must be positive, got {}",
                self.k_base
            )));
        }
        for (n, r) in self.k_regions.iter().enumerate() {
            if !(r.value() > 0.0) {
                return Err(Error::InvalidProblem(format!(
                    "k region #{n} must have a positive value, got {}",
                    r.value()
                )));
            }
            if matches!(r.shape(), Shape::Point { .. }) {
                return Err(Error::InvalidProblem(format!(
                    "k region #{n} cannot be a point"
                )));
            }
        }
        Ok(())
    }

    fn check_grid(&self, grid: &Grid) -> Result<()> {
        self.validate()?;
        let [gx0, gy0, gx1, gy1] = grid.bbox();
        let [x0, y0, x1, y1] = self.domain;
        let tol = 1e-9 * grid.diagonal();
        if gx0 > x0 + tol || gy0 > y0 + tol || gx1 < x1 - tol || gy1 < y1 - tol {
            return Err(Error::InvalidProblem(format!(
                "grid {:?} does not cover domain {:?}",
                grid.bbox(),
                self.domain
            )));
        }
        Ok(())
    }

    fn shape_fits(&self, s: &ShapeSpec) -> bool {
        let [x0, y0, x1, y1] = self.domain;
        let tol = 1e-9 * (x1 - x0).hypot(y1 - y0);
        let [a, b, c, d] = s.bbox();
        a >= x0 - tol && b >= y0 - tol && c <= x1 + tol && d <= y1 + tol
    }
}

/// Signed source density per cell: `Σ value × coverage`, overlapping shapes
/// add. Point masses put their whole mass into the containing cell.
pub fn rasterize_sources(spec: &ProblemSpec, grid: &Grid, subsample: usize) -> Result<CellField> {
    spec.check_grid(grid)?;
    if subsample == 0 {
        return Err(Error::InvalidProblem("subsample must be at least 1".into()));
    }
    for (index, s) in spec.sources.iter().enumerate() {
        if !spec.shape_fits(s) {
            return Err(Error::ShapeEscapesDomain { index });
        }
    }
    let mut f = CellField::zeros(grid);
    let areal: Vec<&ShapeSpec> = spec
        .sources
        .iter()
        .filter(|s| !matches!(s.shape(), Shape::Point { .. }))
        .collect();
    par::for_each_line(Execution::default(), f.values_mut(), grid.nx(), |j, row| {
        for (i, v) in row.iter_mut().enumerate() {
            *v = areal
                .iter()
                .map(|s| s.value() * s.coverage(grid, i, j, subsample))
                .sum();
        }
    });
    for (index, s) in spec.sources.iter().enumerate() {
        if let Shape::Point { at } = s.shape() {
            let (i, j) = grid
                .locate(at.0, at.1)
                .ok_or(Error::ShapeEscapesDomain { index })?;
            let v = f.get(i, j) + s.value() / grid.cell_area();
            f.set(i, j, v);
        }
    }
    Ok(f)
}

/// Positive and negative mass `(M+, M-)`, both as nonnegative numbers.
pub fn masses(f: &CellField, grid: &Grid) -> (f64, f64) {
    let (p, n) = f.values().iter().fold(
        (0.0, 0.0),
        |(p, n), &v| {
            if v > 0.0 {
                (p + v, n)
            } else {
                (p, n - v)
            }
        },
    );
    (p * grid.cell_area(), n * grid.cell_area())
}

/// Rescales the negative part of `f` by `M+/M-` so that the total mass
/// vanishes; the positive part is left untouched.
pub fn balance_mass(f: &CellField, grid: &Grid) -> Result<CellField> {
    f.check_dims(grid)?;
    let (pos, neg) = masses(f, grid);
    if !(pos > 0.0 && neg > 0.0) {
        return Err(Error::OneSidedSource {
            positive: pos,
            negative: neg,
        });
    }
    if f.values().iter().sum::<f64>() == 0.0 {
        return Ok(f.clone());
    }
    let scale = pos / neg;
    let mut out = f.map(|v| if v < 0.0 { v * scale } else { v });
    // Push the rounding residue of the rescale into the deepest sink cell so
    // the discrete total is zero to machine precision.
    let deepest = out
        .values()
        .iter()
        .enumerate()
        .fold(
            (0, 0.0),
            |(bi, bv), (n, &v)| if v < bv { (n, v) } else { (bi, bv) },
        )
        .0;
    for _ in 0..4 {
        let total: f64 = out.values().iter().sum();
        if total == 0.0 {
            break;
        }
        out.values_mut()[deepest] -= total;
    }
    Ok(out)
}

/// Slope bound per cell: `k_base`, then each region overrides the cells whose
/// centers it contains, in order.
pub fn rasterize_k(spec: &ProblemSpec, grid: &Grid) -> Result<CellField> {
    spec.check_grid(grid)?;
    let mut k = CellField::constant(grid, spec.k_base);
    par::for_each_line(Execution::default(), k.values_mut(), grid.nx(), |j, row| {
        for (i, v) in row.iter_mut().enumerate() {
            let (x, y) = grid.cell_center(i, j);
            for r in &spec.k_regions {
                if r.contains(x, y) {
                    *v = r.value();
                }
            }
        }
    });
    for j in 0..grid.ny() {
        for i in 0..grid.nx() {
            let value = k.get(i, j);
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::NonPositiveK { i, j, value });
            }
        }
    }
    Ok(k)
}

/// Checks that `f` vanishes on the outer `margin` rings of cells, so that the
/// domain contains the support of `f` with room to spare.
pub fn check_source_margin(f: &CellField, grid: &Grid, margin: usize) -> Result<()> {
    let (nx, ny) = (grid.nx(), grid.ny());
    for j in 0..ny {
        for i in 0..nx {
            let near = i < margin || j < margin || i + margin >= nx || j + margin >= ny;
            if near && f.get(i, j) != 0.0 {
                return Err(Error::InvalidProblem(format!(
                    "source support reaches cell ({i}, {j}) within {margin} cells of the domain boundary"
                )));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn unit_grid(n: usize) -> Grid {
        Grid::new(n, n, 1.0 / n as f64, (0.0, 0.0)).unwrap()
    }

    #[test]
    fn shape_validation() {
        assert!(ShapeSpec::rectangle((0.0, 0.0), 0.0, 1.0, 0.0, 1.0).is_err());
        assert!(ShapeSpec::ellipse((0.0, 0.0), 1.0, -1.0, 0.0, 1.0).is_err());
        assert!(ShapeSpec::ellipse((0.0, 0.0), 1.0, 1.0, 0.0, f64::NAN).is_err());
        assert!(ShapeSpec::polygon(vec![(0.0, 0.0), (1.0, 0.0)], 1.0).is_err());
        // bow tie
        let bow = vec![(0.0, 0.0), (1.0, 1.0), (1.0, 0.0), (0.0, 1.0)];
        assert!(ShapeSpec::polygon(bow, 1.0).is_err());
        let tri = vec![(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)];
        assert_relative_eq!(ShapeSpec::polygon(tri, 1.0).unwrap().area(), 0.5);
    }

    #[test]
    fn containment() {
        let r = ShapeSpec::rectangle((0.0, 0.0), 2.0, 0.5, PI / 2.0, 1.0).unwrap();
        assert!(r.contains(0.0, 1.9));
        assert!(!r.contains(1.9, 0.0));
        let e = ShapeSpec::ellipse((1.0, 1.0), 0.5, 0.25, 0.0, 1.0).unwrap();
        assert!(e.contains(1.45, 1.0));
        assert!(!e.contains(1.0, 1.3));
        let p = ShapeSpec::polygon(
            vec![(0.0, 0.0), (2.0, 0.0), (2.0, 2.0), (1.0, 0.5), (0.0, 2.0)],
            1.0,
        )
        .unwrap();
        assert!(p.contains(0.2, 1.0));
        assert!(!p.contains(1.0, 1.5));
    }

    #[test]
    fn rectangle_on_cell_boundaries() {
        let g = Grid::new(8, 8, 0.5, (0.0, 0.0)).unwrap();
        let mut spec = ProblemSpec::new([0.0, 0.0, 4.0, 4.0]);
        // cells i in [2,5], j in [3,4]
        spec.sources
            .push(ShapeSpec::rect_between(1.0, 1.5, 3.0, 2.5, 1.0).unwrap());
        let f = rasterize_sources(&spec, &g, DEFAULT_SUBSAMPLE).unwrap();
        for j in 0..8 {
            for i in 0..8 {
                let inside = (2..=5).contains(&i) && (3..=4).contains(&j);
                assert_eq!(
                    f.get(i, j),
                    if inside { 1.0 } else { 0.0 },
                    "cell ({i},{j})"
                );
            }
        }
    }

    #[test]
    fn ellipse_mass_matches_area() {
        let g = Grid::new(128, 128, 1.0 / 64.0, (-1.0, -1.0)).unwrap();
        let mut spec = ProblemSpec::new([-1.0, -1.0, 1.0, 1.0]);
        spec.sources
            .push(ShapeSpec::ellipse((0.03, -0.02), 0.5, 0.25, 0.3, 1.0).unwrap());
        let f = rasterize_sources(&spec, &g, DEFAULT_SUBSAMPLE).unwrap();
        let exact = PI * 0.5 * 0.25;
        assert_relative_eq!(f.integral(&g), exact, max_relative = 0.01);
        assert!(f.values().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn empty_sources_give_zero() {
        let g = unit_grid(8);
        let f = rasterize_sources(&ProblemSpec::new([0.0, 0.0, 1.0, 1.0]), &g, 8).unwrap();
        assert!(f.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn escaping_shape_is_rejected() {
        let g = unit_grid(8);
        let mut spec = ProblemSpec::new([0.0, 0.0, 1.0, 1.0]);
        spec.sources
            .push(ShapeSpec::disk((0.9, 0.5), 0.2, 1.0).unwrap());
        let err = rasterize_sources(&spec, &g, 8).unwrap_err();
        assert!(matches!(err, Error::ShapeEscapesDomain { index: 0 }));
        assert_eq!(err.to_string(), "shape escapes domain (shape #0)");
    }

    #[test]
    fn overlapping_sources_add() {
        let g = unit_grid(8);
        let mut spec = ProblemSpec::new([0.0, 0.0, 1.0, 1.0]);
        spec.sources
            .push(ShapeSpec::rect_between(0.0, 0.0, 0.5, 0.5, 1.0).unwrap());
        spec.sources
            .push(ShapeSpec::rect_between(0.25, 0.25, 0.75, 0.75, 2.0).unwrap());
        let f = rasterize_sources(&spec, &g, 8).unwrap();
        assert_eq!(f.get(0, 0), 1.0);
        assert_eq!(f.get(2, 2), 3.0);
        assert_eq!(f.get(5, 5), 2.0);
    }

    #[test]
    fn point_mass_fills_one_cell() {
        let g = unit_grid(8);
        let mut spec = ProblemSpec::new([0.0, 0.0, 1.0, 1.0]);
        spec.sources
            .push(ShapeSpec::point((0.3, 0.6), 2.0).unwrap());
        let f = rasterize_sources(&spec, &g, 8).unwrap();
        assert_relative_eq!(f.get(2, 4), 2.0 * 64.0);
        assert_relative_eq!(f.integral(&g), 2.0);
    }

    #[test]
    fn balance_scales_negative_part() {
        let g = unit_grid(10);
        let f = CellField::from_fn(&g, |i, _| match i {
            0 => 1.0,
            9 => -0.9,
            _ => 0.0,
        });
        let (p, n) = masses(&f, &g);
        assert_relative_eq!(p, 0.1, max_relative = 1e-14);
        assert_relative_eq!(n, 0.09, max_relative = 1e-14);
        let b = balance_mass(&f, &g).unwrap();
        assert!(b.integral(&g).abs() <= 1e-14 * p);
        for j in 0..10 {
            assert_eq!(b.get(0, j), 1.0);
            assert_relative_eq!(b.get(9, j), -1.0, max_relative = 1e-14);
        }
    }

    #[test]
    fn balanced_field_is_unchanged() {
        let g = unit_grid(8);
        let f = CellField::from_fn(&g, |i, j| match (i, j) {
            (1, 1) => 0.5,
            (6, 6) => -0.5,
            _ => 0.0,
        });
        assert_eq!(balance_mass(&f, &g).unwrap(), f);
    }

    #[test]
    fn one_sided_source_is_rejected() {
        let g = unit_grid(8);
        let err = balance_mass(&CellField::zeros(&g), &g).unwrap_err();
        assert!(matches!(err, Error::OneSidedSource { .. }));
        assert!(err.to_string().starts_with("one-sided source"));
        let pos = CellField::constant(&g, 1.0);
        assert!(balance_mass(&pos, &g).is_err());
    }

    #[test]
    fn k_defaults_and_overrides() {
        let g = unit_grid(16);
        let mut spec = ProblemSpec::new([0.0, 0.0, 1.0, 1.0]);
        spec.k_base = 2.0;
        assert!(rasterize_k(&spec, &g)
            .unwrap()
            .values()
            .iter()
            .all(|&v| v == 2.0));

        spec.k_regions
            .push(ShapeSpec::ellipse((0.5, 0.5), 0.3, 0.2, 0.0, OBSTACLE_K).unwrap());
        let k = rasterize_k(&spec, &g).unwrap();
        for j in 0..16 {
            for i in 0..16 {
                let (x, y) = g.cell_center(i, j);
                let inside = spec.k_regions[0].contains(x, y);
                assert_eq!(k.get(i, j), if inside { OBSTACLE_K } else { 2.0 });
            }
        }
    }

    #[test]
    fn later_k_region_wins() {
        let g = unit_grid(16);
        let mut spec = ProblemSpec::new([0.0, 0.0, 1.0, 1.0]);
        spec.k_regions
            .push(ShapeSpec::rect_between(0.0, 0.0, 0.6, 0.6, 0.01).unwrap());
        spec.k_regions
            .push(ShapeSpec::rect_between(0.4, 0.4, 1.0, 1.0, OBSTACLE_K).unwrap());
        let k = rasterize_k(&spec, &g).unwrap();
        assert_eq!(k.get(1, 1), 0.01);
        assert_eq!(k.get(8, 8), OBSTACLE_K);
        assert_eq!(k.get(14, 14), OBSTACLE_K);
        assert_eq!(k.get(14, 1), 1.0);
    }

    #[test]
    fn non_positive_k_is_rejected() {
        let g = unit_grid(8);
        let mut spec = ProblemSpec::new([0.0, 0.0, 1.0, 1.0]);
        spec.k_regions
            .push(ShapeSpec::rect_between(0.0, 0.0, 0.5, 0.5, 0.0).unwrap());
        assert!(rasterize_k(&spec, &g).is_err());
        spec.k_regions.clear();
        spec.k_base = -1.0;
        assert!(rasterize_k(&spec, &g).is_err());
    }

    #[test]
    fn margin_check() {
        let g = unit_grid(16);
        let mut f = CellField::zeros(&g);
        f.set(5, 5, 1.0);
        assert!(check_source_margin(&f, &g, 2).is_ok());
        f.set(1, 7, -1.0);
        assert!(check_source_margin(&f, &g, 2).is_err());
    }
}
