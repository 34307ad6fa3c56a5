//! Staggered Cartesian grid: scalars at cell centers, normal fluxes at faces.
//!
//! The discrete gradient (cells to faces) and divergence (faces to cells)
//! are negative adjoints of each other in the volume-weighted inner
//! products once boundary terms vanish. Boundary faces carry the Dirichlet
//! trace through the ghost value `2 g - u_adjacent`.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::provider::{Point, Provider};

/// Uniform grid on `[0, Lx]` (1D) or `[0, Lx] x [0, Ly]` (2D).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StaggeredGrid {
    dim: usize,
    extents: [f64; 2],
    cells: [usize; 2],
    spacing: [f64; 2],
}

/// Side of the bounding box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Left,
    Right,
    Bottom,
    Top,
}

impl Side {
    pub const ALL: [Side; 4] = [Side::Left, Side::Right, Side::Bottom, Side::Top];

    fn index(self) -> usize {
        self as usize
    }

    /// Outward normal sign along the face axis.
    pub fn normal_sign(self) -> f64 {
        match self {
            Side::Left | Side::Bottom => -1.0,
            Side::Right | Side::Top => 1.0,
        }
    }
}

/// Geometry and connectivity of one face.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Face {
    pub axis: usize,
    /// Index within the per-axis face array.
    pub index: usize,
    /// Cell on the low side of the face.
    pub minus: Option<usize>,
    /// Cell on the high side of the face.
    pub plus: Option<usize>,
    pub boundary: Option<Side>,
    pub midpoint: Point,
    /// Dual-cell volume used by the face inner product.
    pub weight: f64,
    /// Face measure (length in 2D, 1 in 1D).
    pub area: f64,
}

impl StaggeredGrid {
    pub fn new_1d(length: f64, cells: usize) -> Result<Self> {
        Self::build(1, [length, 1.0], [cells, 1])
    }

    pub fn new_2d(extents: [f64; 2], cells: [usize; 2]) -> Result<Self> {
        Self::build(2, extents, cells)
    }

    fn build(dim: usize, extents: [f64; 2], cells: [usize; 2]) -> Result<Self> {
        let mut problems = Vec::new();
        for axis in 0..dim {
            if cells[axis] < 2 {
                problems.push(format!(
                    "axis {axis}: need at least 2 cells, got {}",
                    cells[axis]
                ));
            }
            if !(extents[axis] > 0.0 && extents[axis].is_finite()) {
                problems.push(format!(
                    "axis {axis}: extent {} must be positive",
                    extents[axis]
                ));
            }
        }
        if !problems.is_empty() {
            return Err(Error::Config(problems));
        }
        let spacing = [extents[0] / cells[0] as f64, extents[1] / cells[1] as f64];
        Ok(StaggeredGrid {
            dim,
            extents,
            cells,
            spacing,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn extents(&self) -> [f64; 2] {
        self.extents
    }

    pub fn cells(&self) -> [usize; 2] {
        self.cells
    }

    pub fn spacing(&self) -> [f64; 2] {
        self.spacing
    }

    pub fn num_cells(&self) -> usize {
        self.cells[0] * self.cells[1]
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing[0] * self.spacing[1]
    }

    /// Total volume of the domain.
    pub fn volume(&self) -> f64 {
        self.cell_volume() * self.num_cells() as f64
    }

    /// Number of faces normal to `axis`.
    pub fn num_faces(&self, axis: usize) -> usize {
        match axis {
            0 => (self.cells[0] + 1) * self.cells[1],
            1 => self.cells[0] * (self.cells[1] + 1),
            _ => 0,
        }
    }

    pub fn cell_index(&self, i: usize, j: usize) -> usize {
        j * self.cells[0] + i
    }

    pub fn cell_ij(&self, c: usize) -> (usize, usize) {
        (c % self.cells[0], c / self.cells[0])
    }

    pub fn cell_center(&self, c: usize) -> Point {
        let (i, j) = self.cell_ij(c);
        let x = (i as f64 + 0.5) * self.spacing[0];
        let y = if self.dim == 1 {
            0.0
        } else {
            (j as f64 + 0.5) * self.spacing[1]
        };
        [x, y]
    }

    pub fn cell_centers(&self) -> impl Iterator<Item = Point> + '_ {
        (0..self.num_cells()).map(|c| self.cell_center(c))
    }

    /// All faces, axis 0 first, in per-axis storage order.
    pub fn faces(&self) -> Vec<Face> {
        let [nx, ny] = self.cells;
        let [hx, hy] = self.spacing;
        let mut out = Vec::with_capacity(self.num_faces(0) + self.num_faces(1));
        for j in 0..ny {
            for i in 0..=nx {
                let boundary = if i == 0 {
                    Some(Side::Left)
                } else if i == nx {
                    Some(Side::Right)
                } else {
                    None
                };
                let y = if self.dim == 1 {
                    0.0
                } else {
                    (j as f64 + 0.5) * hy
                };
                out.push(Face {
                    axis: 0,
                    index: j * (nx + 1) + i,
                    minus: (i > 0).then(|| self.cell_index(i - 1, j)),
                    plus: (i < nx).then(|| self.cell_index(i, j)),
                    boundary,
                    midpoint: [i as f64 * hx, y],
                    weight: hx * hy * if boundary.is_some() { 0.5 } else { 1.0 },
                    area: hy,
                });
            }
        }
        if self.dim == 2 {
            for j in 0..=ny {
                for i in 0..nx {
                    let boundary = if j == 0 {
                        Some(Side::Bottom)
                    } else if j == ny {
                        Some(Side::Top)
                    } else {
                        None
                    };
                    out.push(Face {
                        axis: 1,
                        index: j * nx + i,
                        minus: (j > 0).then(|| self.cell_index(i, j - 1)),
                        plus: (j < ny).then(|| self.cell_index(i, j)),
                        boundary,
                        midpoint: [(i as f64 + 0.5) * hx, j as f64 * hy],
                        weight: hx * hy * if boundary.is_some() { 0.5 } else { 1.0 },
                        area: hx,
                    });
                }
            }
        }
        out
    }

    pub fn cell_field(&self, values: Vec<f64>) -> Result<CellField> {
        CellField::new(*self, values)
    }

    pub fn zero_cells(&self) -> CellField {
        CellField {
            grid: *self,
            values: vec![0.0; self.num_cells()],
        }
    }

    pub fn zero_faces(&self) -> FaceField {
        FaceField {
            grid: *self,
            axes: (0..self.dim)
                .map(|a| vec![0.0; self.num_faces(a)])
                .collect(),
        }
    }

    /// Samples `p` at cell centers at time `t`.
    pub fn sample_cells(&self, p: &Provider, t: f64) -> CellField {
        CellField {
            grid: *self,
            values: self.cell_centers().map(|x| p.eval(x, t)).collect(),
        }
    }

    /// Samples `p` at face midpoints at time `t`.
    pub fn sample_faces(&self, p: &Provider, t: f64) -> FaceField {
        let mut m = self.zero_faces();
        for f in self.faces() {
            m.axes[f.axis][f.index] = p.eval(f.midpoint, t);
        }
        m
    }

    fn check_same(&self, other: &StaggeredGrid) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::Shape(format!(
                "grid {self:?} does not match {other:?}"
            )))
        }
    }
}

/// One value per cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellField {
    grid: StaggeredGrid,
    pub values: Vec<f64>,
}

impl CellField {
    pub fn new(grid: StaggeredGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.num_cells() {
            return Err(Error::Shape(format!(
                "{} values for {} cells",
                values.len(),
                grid.num_cells()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("non-finite cell value {v}")));
        }
        Ok(CellField { grid, values })
    }

    pub fn grid(&self) -> &StaggeredGrid {
        &self.grid
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> CellField {
        CellField {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &CellField, f: impl Fn(f64, f64) -> f64) -> Result<CellField> {
        self.grid.check_same(&other.grid)?;
        Ok(CellField {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Volume integral.
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_volume()
    }
}

/// One normal-flux value per face, stored per axis.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceField {
    grid: StaggeredGrid,
    pub axes: Vec<Vec<f64>>,
}

impl FaceField {
    pub fn new(grid: StaggeredGrid, axes: Vec<Vec<f64>>) -> Result<Self> {
        if axes.len() != grid.dim()
            || axes
                .iter()
                .enumerate()
                .any(|(a, v)| v.len() != grid.num_faces(a))
        {
            return Err(Error::Shape(
                "face array sizes do not match the grid".into(),
            ));
        }
        if axes.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite face value".into()));
        }
        Ok(FaceField { grid, axes })
    }

    pub fn grid(&self) -> &StaggeredGrid {
        &self.grid
    }

    #[inline]
    pub fn get(&self, face: &Face) -> f64 {
        self.axes[face.axis][face.index]
    }

    #[inline]
    pub fn set(&mut self, face: &Face, v: f64) {
        self.axes[face.axis][face.index] = v;
    }

    pub fn max_abs(&self) -> f64 {
        self.axes.iter().flatten().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// A flux/scalar pair on one grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldState {
    pub u: CellField,
    pub m: FaceField,
}

impl FieldState {
    pub fn zero(grid: &StaggeredGrid) -> Self {
        FieldState {
            u: grid.zero_cells(),
            m: grid.zero_faces(),
        }
    }
}

/// Dirichlet trace `g(x, t)` of the scalar unknown, one provider per side.
#[derive(Debug, Clone)]
pub struct BoundaryData {
    sides: [Provider; 4],
}

impl BoundaryData {
    pub fn zero() -> Self {
        Self::uniform(Provider::constant(0.0))
    }

    pub fn uniform(p: Provider) -> Self {
        BoundaryData {
            sides: [p.clone(), p.clone(), p.clone(), p],
        }
    }

    pub fn per_side(left: Provider, right: Provider, bottom: Provider, top: Provider) -> Self {
        BoundaryData {
            sides: [left, right, bottom, top],
        }
    }

    /// Trace `g = -u_b` for boundary data given with the stationary sign
    /// convention `u = -u_b`.
    pub fn from_negated(u_b: Provider) -> Self {
        Self::uniform(Provider::new(move |x, t| -u_b.eval(x, t)))
    }

    #[inline]
    pub fn eval(&self, side: Side, x: Point, t: f64) -> f64 {
        self.sides[side.index()].eval(x, t)
    }

    /// True when every side is the constant zero.
    pub fn is_homogeneous(&self) -> bool {
        self.sides.iter().all(|p| p.as_constant() == Some(0.0))
    }
}

/// Face-normal difference quotients of `u`, with boundary faces using the
/// ghost value `2 g - u_adjacent`.
pub fn gradient(u: &CellField, bdata: &BoundaryData, t: f64) -> FaceField {
    let grid = *u.grid();
    let mut out = grid.zero_faces();
    for f in grid.faces() {
        out.set(&f, face_gradient(&grid, &f, &u.values, bdata, t));
    }
    out
}

#[inline]
pub(crate) fn face_gradient(
    grid: &StaggeredGrid,
    f: &Face,
    u: &[f64],
    bdata: &BoundaryData,
    t: f64,
) -> f64 {
    let h = grid.spacing[f.axis];
    match (f.minus, f.plus) {
        (Some(l), Some(r)) => (u[r] - u[l]) / h,
        (None, Some(r)) => {
            let g = bdata.eval(f.boundary.expect("boundary face"), f.midpoint, t);
            2.0 * (u[r] - g) / h
        }
        (Some(l), None) => {
            let g = bdata.eval(f.boundary.expect("boundary face"), f.midpoint, t);
            2.0 * (g - u[l]) / h
        }
        (None, None) => unreachable!("face without cells"),
    }
}

/// `sum_axes (m_high - m_low) / h` per cell.
pub fn divergence(m: &FaceField) -> CellField {
    let grid = *m.grid();
    let mut out = grid.zero_cells();
    for f in grid.faces() {
        let v = m.get(&f) / grid.spacing[f.axis];
        if let Some(l) = f.minus {
            out.values[l] += v;
        }
        if let Some(r) = f.plus {
            out.values[r] -= v;
        }
    }
    out
}

/// Net outward flux through the boundary, `sum_boundary m . nu |face|`.
pub fn boundary_outflux(m: &FaceField) -> f64 {
    m.grid()
        .faces()
        .iter()
        .filter_map(|f| {
            f.boundary
                .map(|side| side.normal_sign() * m.get(f) * f.area)
        })
        .sum()
}

pub fn cell_dot(a: &CellField, b: &CellField) -> Result<f64> {
    a.grid.check_same(&b.grid)?;
    Ok(a.values
        .iter()
        .zip(&b.values)
        .map(|(x, y)| x * y)
        .sum::<f64>()
        * a.grid.cell_volume())
}

pub fn face_dot(a: &FaceField, b: &FaceField) -> Result<f64> {
    a.grid.check_same(&b.grid)?;
    Ok(a.grid
        .faces()
        .iter()
        .map(|f| a.get(f) * b.get(f) * f.weight)
        .sum())
}

/// `(sum |u_i|^p vol)^(1/p)`.
pub fn cell_norm_p(u: &CellField, p: f64) -> Result<f64> {
    if !(p >= 1.0) {
        return Err(Error::Domain {
            what: "norm exponent p must be >= 1",
            value: p,
        });
    }
    let sum: f64 = u.values.iter().map(|v| v.abs().powf(p)).sum();
    Ok((sum * u.grid.cell_volume()).powf(1.0 / p))
}

/// Dual-volume weighted `L^p` norm summed over face axes.
pub fn face_norm_p(m: &FaceField, p: f64) -> Result<f64> {
    if !(p >= 1.0) {
        return Err(Error::Domain {
            what: "norm exponent p must be >= 1",
            value: p,
        });
    }
    let sum: f64 = m
        .grid
        .faces()
        .iter()
        .map(|f| m.get(f).abs().powf(p) * f.weight)
        .sum();
    Ok(sum.powf(1.0 / p))
}

/// Outcome of the summation-by-parts check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdjointnessCheck {
    /// `|<m, grad u> + <div m, u>|`
    pub defect: f64,
    /// `|<m, grad u>| + |<div m, u>|`, for relative comparisons.
    pub scale: f64,
}

impl AdjointnessCheck {
    pub fn relative(&self) -> f64 {
        if self.scale == 0.0 {
            self.defect
        } else {
            self.defect / self.scale
        }
    }
}

/// Random `u` (zero trace) and random `m` (zero on boundary faces); returns
/// the defect of the discrete Green identity.
pub fn check_adjointness(grid: &StaggeredGrid, seed: u64) -> AdjointnessCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u = CellField {
        grid: *grid,
        values: (0..grid.num_cells())
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect(),
    };
    let mut m = grid.zero_faces();
    for f in grid.faces() {
        if f.boundary.is_none() {
            m.set(&f, rng.gen_range(-1.0..1.0));
        }
    }
    adjointness_defect(&u, &m)
}

pub fn adjointness_defect(u: &CellField, m: &FaceField) -> AdjointnessCheck {
    let g = gradient(u, &BoundaryData::zero(), 0.0);
    let d = divergence(m);
    let a = face_dot(m, &g).expect("same grid");
    let b = cell_dot(&d, u).expect("same grid");
    AdjointnessCheck {
        defect: (a + b).abs(),
        scale: a.abs() + b.abs(),
    }
}

/// CSV with columns `i,j,x,y,value`, one row per cell.
pub fn write_cells_csv<W: Write>(u: &CellField, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["i", "j", "x", "y", "value"])?;
    for (c, v) in u.values.iter().enumerate() {
        let (i, j) = u.grid.cell_ij(c);
        let [x, y] = u.grid.cell_center(c);
        w.write_record([i.to_string(), j.to_string(), fmt_f(x), fmt_f(y), fmt_f(*v)])?;
    }
    w.flush()?;
    Ok(())
}

/// CSV with columns `axis,i,j,x,y,value`, one row per face.
pub fn write_faces_csv<W: Write>(m: &FaceField, out: W) -> Result<()> {
    let grid = m.grid;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["axis", "i", "j", "x", "y", "value"])?;
    for f in grid.faces() {
        let row_len = if f.axis == 0 {
            grid.cells[0] + 1
        } else {
            grid.cells[0]
        };
        let (i, j) = (f.index % row_len, f.index / row_len);
        w.write_record([
            f.axis.to_string(),
            i.to_string(),
            j.to_string(),
            fmt_f(f.midpoint[0]),
            fmt_f(f.midpoint[1]),
            fmt_f(m.get(&f)),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Round-trip exact float formatting.
pub(crate) fn fmt_f(v: f64) -> String {
    format!("{v:e}")
}


#[cfg(test)]
mod proptests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn green_identity_holds(seed in any::<u64>(), n in 2usize..20, two_d in any::<bool>()) {
            let grid = if two_d {
                StaggeredGrid::new_2d([1.3, 0.7], [n, n + 1]).unwrap()
            } else {
                StaggeredGrid::new_1d(2.0, n).unwrap()
            };
            let a = check_adjointness(&grid, seed);
            prop_assert!(a.defect <= 1e-12 * a.scale.max(1.0));
        }

        #[test]
        fn linear_fields_have_exact_gradients(a in -5.0f64..5.0, b in -5.0f64..5.0, c in -5.0f64..5.0) {
            let g = StaggeredGrid::new_2d([1.0, 1.0], [6, 7]).unwrap();
            let lin = Provider::new(move |x, _| a * x[0] + b * x[1] + c);
            let grad = gradient(&g.sample_cells(&lin, 0.0), &BoundaryData::uniform(lin), 0.0);
            for v in &grad.axes[0] { prop_assert!((v - a).abs() < 1e-12); }
            for v in &grad.axes[1] { prop_assert!((v - b).abs() < 1e-12); }
        }
    }
}
