//! Cartesian grids over the unit disk, scalar/complex/tensor fields on them,
//! the angular mode decomposition of a symmetric 2-tensor, and smooth
//! compactly supported phantoms with analytic derivatives.

use crate::{Error, Result};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Node classification on the square grid covering `[-1, 1]^2`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NodeClass {
    /// Strictly inside the disk with all four axis neighbors inside.
    Interior,
    /// Strictly inside the disk with at least one axis neighbor on or
    /// outside the circle.
    BoundaryBand,
    /// On or outside the unit circle; field values there are zero.
    Outside,
}

/// Uniform `n x n` grid on `[-1, 1]^2` with a node mask for the unit disk.
///
/// `n` is odd so the origin is a node; spacing is `h = 2 / (n - 1)`.  Cloning
/// is cheap: the mask is shared.
#[derive(Clone, Debug)]
pub struct GridSpec {
    n: usize,
    h: f64,
    class: Arc<[NodeClass]>,
}

impl PartialEq for GridSpec {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n
    }
}

impl GridSpec {
    /// Build the grid; `n` must be odd and at least 33.
    pub fn new(n: usize) -> Result<Self> {
        if n < 33 || n % 2 == 0 {
            return Err(Error::Config(format!(
                "grid size must be odd and >= 33, got {n}"
            )));
        }
        let h = 2.0 / (n - 1) as f64;
        let coord = |i: usize| i as f64 * h - 1.0;
        let inside = |i: usize, j: usize| {
            let (x, y) = (coord(i), coord(j));
            x * x + y * y < 1.0
        };
        let mut class = vec![NodeClass::Outside; n * n];
        for j in 0..n {
            for i in 0..n {
                if !inside(i, j) {
                    continue;
                }
                // A node strictly inside the disk always has array neighbors:
                // the outermost rows and columns lie at |x| or |y| = 1.
                let band = !inside(i + 1, j)
                    || !inside(i - 1, j)
                    || !inside(i, j + 1)
                    || !inside(i, j - 1);
                class[j * n + i] = if band {
                    NodeClass::BoundaryBand
                } else {
                    NodeClass::Interior
                };
            }
        }
        Ok(Self {
            n,
            h,
            class: class.into(),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Grid spacing `2 / (n - 1)`.
    pub fn spacing(&self) -> f64 {
        self.h
    }

    /// Coordinate of index `i` along either axis.
    pub fn coord(&self, i: usize) -> f64 {
        i as f64 * self.h - 1.0
    }

    /// Node position `(x, y)` for indices `(i, j)`.
    pub fn xy(&self, i: usize, j: usize) -> (f64, f64) {
        (self.coord(i), self.coord(j))
    }

    /// Flat index, row-major with `i` (the x index) fastest.
    pub fn idx(&self, i: usize, j: usize) -> usize {
        j * self.n + i
    }

    pub fn class(&self, i: usize, j: usize) -> NodeClass {
        self.class[j * self.n + i]
    }

    /// True for nodes strictly inside the disk.
    pub fn is_inside(&self, i: usize, j: usize) -> bool {
        self.class(i, j) != NodeClass::Outside
    }

    /// Distance `1 - |x|` from the node to the circle (negative outside).
    pub fn dist_to_boundary(&self, i: usize, j: usize) -> f64 {
        let (x, y) = self.xy(i, j);
        1.0 - x.hypot(y)
    }

    /// All `(i, j)` index pairs.
    pub fn nodes(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let n = self.n;
        (0..n * n).map(move |k| (k % n, k / n))
    }

    /// Index pairs of nodes strictly inside the disk.
    pub fn inside_nodes(&self) -> Vec<(usize, usize)> {
        self.nodes().filter(|&(i, j)| self.is_inside(i, j)).collect()
    }
}

macro_rules! scalar_field {
    ($name:ident, $t:ty, $zero:expr) => {
        /// Grid function with one value per node; zero on and outside the
        /// unit circle.
        #[derive(Clone, Debug)]
        pub struct $name {
            grid: GridSpec,
            values: Vec<$t>,
        }

        impl $name {
            pub fn zeros(grid: &GridSpec) -> Self {
                Self {
                    grid: grid.clone(),
                    values: vec![$zero; grid.n() * grid.n()],
                }
            }

            /// Evaluate `f` at nodes strictly inside the disk; outside nodes
            /// stay zero.
            pub fn from_fn(grid: &GridSpec, f: impl Fn(f64, f64) -> $t) -> Self {
                let mut out = Self::zeros(grid);
                for (i, j) in grid.inside_nodes() {
                    let (x, y) = grid.xy(i, j);
                    out.values[grid.idx(i, j)] = f(x, y);
                }
                out
            }

            pub fn grid(&self) -> &GridSpec {
                &self.grid
            }

            pub fn at(&self, i: usize, j: usize) -> $t {
                self.values[self.grid.idx(i, j)]
            }

            pub fn set(&mut self, i: usize, j: usize, v: $t) {
                let k = self.grid.idx(i, j);
                self.values[k] = v;
            }

            pub fn values(&self) -> &[$t] {
                &self.values
            }

            pub fn values_mut(&mut self) -> &mut [$t] {
                &mut self.values
            }
        }
    };
}

scalar_field!(RealField, f64, 0.0f64);
scalar_field!(ComplexField, Complex64, Complex64::ZERO);

impl RealField {
    /// Largest absolute node value.
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Bilinear interpolation; zero outside the grid's disk support.
    pub fn sample_bilinear(&self, x: f64, y: f64) -> f64 {
        let n = self.grid.n();
        let h = self.grid.spacing();
        if x * x + y * y >= (1.0 + h) * (1.0 + h) {
            return 0.0;
        }
        let fx = ((x + 1.0) / h).clamp(0.0, (n - 1) as f64);
        let fy = ((y + 1.0) / h).clamp(0.0, (n - 1) as f64);
        let i0 = (fx as usize).min(n - 2);
        let j0 = (fy as usize).min(n - 2);
        let tx = fx - i0 as f64;
        let ty = fy - j0 as f64;
        let v = |i, j| self.values[self.grid.idx(i, j)];
        (1.0 - tx) * (1.0 - ty) * v(i0, j0)
            + tx * (1.0 - ty) * v(i0 + 1, j0)
            + (1.0 - tx) * ty * v(i0, j0 + 1)
            + tx * ty * v(i0 + 1, j0 + 1)
    }
}

impl ComplexField {
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.norm()))
    }

    pub fn re(&self) -> RealField {
        let mut out = RealField::zeros(&self.grid);
        for (a, b) in out.values_mut().iter_mut().zip(&self.values) {
            *a = b.re;
        }
        out
    }

    pub fn im(&self) -> RealField {
        let mut out = RealField::zeros(&self.grid);
        for (a, b) in out.values_mut().iter_mut().zip(&self.values) {
            *a = b.im;
        }
        out
    }

    pub fn conj(&self) -> ComplexField {
        let mut out = self.clone();
        for v in out.values_mut() {
            *v = v.conj();
        }
        out
    }
}

/// Symmetric 2-tensor field on a grid: components `f11`, `f12 = f21`, `f22`.
#[derive(Clone, Debug)]
pub struct TensorField {
    pub f11: RealField,
    pub f12: RealField,
    pub f22: RealField,
}

impl TensorField {
    pub fn zeros(grid: &GridSpec) -> Self {
        Self {
            f11: RealField::zeros(grid),
            f12: RealField::zeros(grid),
            f22: RealField::zeros(grid),
        }
    }

    pub fn new(f11: RealField, f12: RealField, f22: RealField) -> Result<Self> {
        if f11.grid() != f12.grid() || f11.grid() != f22.grid() {
            return Err(Error::Mismatch(
                "tensor components live on different grids".into(),
            ));
        }
        Ok(Self { f11, f12, f22 })
    }

    pub fn grid(&self) -> &GridSpec {
        self.f11.grid()
    }

    /// Pointwise trace `f11 + f22`.
    pub fn trace(&self, i: usize, j: usize) -> f64 {
        self.f11.at(i, j) + self.f22.at(i, j)
    }

    /// `<F(x) theta, theta>` at an arbitrary point by bilinear interpolation
    /// of each component.
    pub fn project_direction(&self, x: f64, y: f64, d: &crate::geometry::Direction) -> f64 {
        let (c, s) = d.theta();
        let f11 = self.f11.sample_bilinear(x, y);
        let f12 = self.f12.sample_bilinear(x, y);
        let f22 = self.f22.sample_bilinear(x, y);
        c * c * f11 + 2.0 * c * s * f12 + s * s * f22
    }

    /// Largest absolute value over all components.
    pub fn max_abs(&self) -> f64 {
        self.f11
            .max_abs()
            .max(self.f12.max_abs())
            .max(self.f22.max_abs())
    }
}

/// Angular modes of a symmetric 2-tensor: the isotropic part `f0` and the
/// order-2 part `f2`, with `<F theta, theta> = f0 + 2 Re(f2 e^{-2 i phi})`.
#[derive(Clone, Debug)]
pub struct ModePair {
    pub f0: RealField,
    pub f2: ComplexField,
}

/// Pointwise mode decomposition:
/// `f0 = (f11 + f22) / 2`, `f2 = (f11 - f22) / 4 + i f12 / 2`.
pub fn modes_from_tensor(f: &TensorField) -> ModePair {
    let grid = f.grid().clone();
    let mut f0 = RealField::zeros(&grid);
    let mut f2 = ComplexField::zeros(&grid);
    for k in 0..grid.n() * grid.n() {
        let (a, b, c) = (f.f11.values()[k], f.f12.values()[k], f.f22.values()[k]);
        f0.values_mut()[k] = 0.5 * (a + c);
        f2.values_mut()[k] = Complex64::new(0.25 * (a - c), 0.5 * b);
    }
    ModePair { f0, f2 }
}

/// Inverse of [`modes_from_tensor`]:
/// `f11 = f0 + 2 Re f2`, `f12 = 2 Im f2`, `f22 = f0 - 2 Re f2`.
pub fn tensor_from_modes(m: &ModePair) -> TensorField {
    let grid = m.f0.grid().clone();
    let mut out = TensorField::zeros(&grid);
    for k in 0..grid.n() * grid.n() {
        let f0 = m.f0.values()[k];
        let f2 = m.f2.values()[k];
        out.f11.values_mut()[k] = f0 + 2.0 * f2.re;
        out.f12.values_mut()[k] = 2.0 * f2.im;
        out.f22.values_mut()[k] = f0 - 2.0 * f2.re;
    }
    out
}

/// Discrete divergence `(d1 f11 + d2 f12, d1 f12 + d2 f22)` by centered
/// differences; zero on the outermost rows and columns.
pub fn divergence(f: &TensorField) -> (RealField, RealField) {
    let grid = f.grid().clone();
    let n = grid.n();
    let inv2h = 1.0 / (2.0 * grid.spacing());
    let mut d1 = RealField::zeros(&grid);
    let mut d2 = RealField::zeros(&grid);
    for j in 1..n - 1 {
        for i in 1..n - 1 {
            let dx = |g: &RealField| (g.at(i + 1, j) - g.at(i - 1, j)) * inv2h;
            let dy = |g: &RealField| (g.at(i, j + 1) - g.at(i, j - 1)) * inv2h;
            d1.set(i, j, dx(&f.f11) + dy(&f.f12));
            d2.set(i, j, dx(&f.f12) + dy(&f.f22));
        }
    }
    (d1, d2)
}

/// Which closed range of the forward operator a tensor belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TensorClass {
    /// Divergence-free fields.
    Incompressible,
    /// Fields with pointwise zero trace.
    Tracefree,
}

/// One radial bump `amp * (1 - |x - c|^2 / r^2)^6` supported in the disk of
/// radius `r` about `(cx, cy)`.  The sixth power gives five continuous
/// derivatives, enough for second-order finite differences of the Hessian.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct Bump {
    pub cx: f64,
    pub cy: f64,
    pub r: f64,
    pub amp: f64,
}

impl Bump {
    fn s(&self, x: f64, y: f64) -> f64 {
        let dx = x - self.cx;
        let dy = y - self.cy;
        1.0 - (dx * dx + dy * dy) / (self.r * self.r)
    }

    pub fn value(&self, x: f64, y: f64) -> f64 {
        let s = self.s(x, y);
        if s <= 0.0 {
            0.0
        } else {
            self.amp * s.powi(6)
        }
    }

    /// Analytic gradient `(d1, d2)`.
    pub fn grad(&self, x: f64, y: f64) -> (f64, f64) {
        let s = self.s(x, y);
        if s <= 0.0 {
            return (0.0, 0.0);
        }
        let r2 = self.r * self.r;
        let c = -12.0 * self.amp * s.powi(5) / r2;
        (c * (x - self.cx), c * (y - self.cy))
    }

    /// Analytic Hessian `(d11, d12, d22)`.
    pub fn hess(&self, x: f64, y: f64) -> (f64, f64, f64) {
        let s = self.s(x, y);
        if s <= 0.0 {
            return (0.0, 0.0, 0.0);
        }
        let r2 = self.r * self.r;
        let dx = x - self.cx;
        let dy = y - self.cy;
        let a = self.amp;
        let d11 = -12.0 * a / r2 * (s.powi(5) - 10.0 * dx * dx * s.powi(4) / r2);
        let d22 = -12.0 * a / r2 * (s.powi(5) - 10.0 * dy * dy * s.powi(4) / r2);
        let d12 = 120.0 * a * dx * dy * s.powi(4) / (r2 * r2);
        (d11, d12, d22)
    }
}

/// JSON-serializable phantom description: a sum of radial bumps inside the
/// support radius `r_max < 1`.
///
/// For [`TensorClass::Incompressible`] the bumps form a stream potential
/// `psi` and `F = (psi_22, -psi_12; -psi_12, psi_11)`.  For
/// [`TensorClass::Tracefree`], bumps alternate between the diagonal part
/// (`f11 = -f22`, even indices) and the shear part (`f12`, odd indices).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub kind: TensorClass,
    pub bumps: Vec<Bump>,
    pub r_max: f64,
}

impl PhantomSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.r_max > 0.0 && self.r_max < 1.0) {
            return Err(Error::Config(format!(
                "phantom support radius must satisfy 0 < r_max < 1, got {}",
                self.r_max
            )));
        }
        for (k, b) in self.bumps.iter().enumerate() {
            if !(b.r > 0.0) {
                return Err(Error::Config(format!("bump {k} has nonpositive radius")));
            }
            if b.cx.hypot(b.cy) + b.r > self.r_max + 1e-12 {
                return Err(Error::Config(format!(
                    "bump {k} leaks outside the support radius {}",
                    self.r_max
                )));
            }
        }
        Ok(())
    }

    /// Stream potential `psi` (sum of all bumps).
    pub fn potential(&self, x: f64, y: f64) -> f64 {
        self.bumps.iter().map(|b| b.value(x, y)).sum()
    }

    /// Analytic Hessian of the potential.
    pub fn potential_hess(&self, x: f64, y: f64) -> (f64, f64, f64) {
        let mut h = (0.0, 0.0, 0.0);
        for b in &self.bumps {
            let (a, c, d) = b.hess(x, y);
            h.0 += a;
            h.1 += c;
            h.2 += d;
        }
        h
    }

    /// Tensor components `(f11, f12, f22)` at a point, from the analytic
    /// bump derivatives.  Matches the nodal values of the phantom builders
    /// exactly; callers validate the description beforehand.
    pub fn tensor_at(&self, x: f64, y: f64) -> (f64, f64, f64) {
        match self.kind {
            TensorClass::Incompressible => {
                let (h11, h12, h22) = self.potential_hess(x, y);
                (h22, -h12, h11)
            }
            TensorClass::Tracefree => {
                let mut p = 0.0;
                let mut q = 0.0;
                for (k, b) in self.bumps.iter().enumerate() {
                    if k % 2 == 0 {
                        p += b.value(x, y);
                    } else {
                        q += b.value(x, y);
                    }
                }
                (p, q, -p)
            }
        }
    }

    /// Built-in two-bump phantom of the given class.
    pub fn example(kind: TensorClass) -> Self {
        let bumps = match kind {
            TensorClass::Incompressible => vec![
                Bump {
                    cx: -0.25,
                    cy: 0.1,
                    r: 0.45,
                    amp: 1.0,
                },
                Bump {
                    cx: 0.3,
                    cy: -0.2,
                    r: 0.35,
                    amp: -0.7,
                },
            ],
            TensorClass::Tracefree => vec![
                Bump {
                    cx: -0.2,
                    cy: 0.15,
                    r: 0.4,
                    amp: 1.0,
                },
                Bump {
                    cx: 0.25,
                    cy: -0.1,
                    r: 0.45,
                    amp: 0.8,
                },
            ],
        };
        Self {
            kind,
            bumps,
            r_max: 0.8,
        }
    }
}

/// Divergence-free phantom from the description's stream potential, with
/// components taken from analytic second derivatives.
pub fn phantom_incompressible(spec: &PhantomSpec, grid: &GridSpec) -> Result<TensorField> {
    spec.validate()?;
    if spec.kind != TensorClass::Incompressible {
        return Err(Error::Config(
            "phantom_incompressible needs an incompressible spec".into(),
        ));
    }
    Ok(sample_phantom(spec, grid))
}

/// Trace-free phantom: even-indexed bumps build the diagonal part `p`
/// (`f11 = p`, `f22 = -p`), odd-indexed bumps the shear part `f12`.
pub fn phantom_tracefree(spec: &PhantomSpec, grid: &GridSpec) -> Result<TensorField> {
    spec.validate()?;
    if spec.kind != TensorClass::Tracefree {
        return Err(Error::Config(
            "phantom_tracefree needs a trace-free spec".into(),
        ));
    }
    Ok(sample_phantom(spec, grid))
}

/// Nodal sampling of the analytic phantom tensor.  The trace-free class
/// stays exactly trace-free because `tensor_at` negates `f11` bitwise.
fn sample_phantom(spec: &PhantomSpec, grid: &GridSpec) -> TensorField {
    let mut out = TensorField::zeros(grid);
    for (i, j) in grid.inside_nodes() {
        let (x, y) = grid.xy(i, j);
        let (f11, f12, f22) = spec.tensor_at(x, y);
        out.f11.set(i, j, f11);
        out.f12.set(i, j, f12);
        out.f22.set(i, j, f22);
    }
    out
}
