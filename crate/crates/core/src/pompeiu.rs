//! Boundary-plus-area integral solvers for the first-order problems
//! `dbar u = psi` and `d u = psi` on the unit disk with prescribed boundary
//! values: a trapezoid contour integral of the boundary data plus a masked
//! midpoint rule over circle-clipped grid cells.  The kernel singularity is
//! removed by subtracting the value of `psi` at the host node and adding the
//! analytic integral of the kernel over the whole disk in closed form.

use crate::fields::{ComplexField, GridSpec};
use crate::transform::BoundaryData;
use crate::{Error, Result};
use num_complex::Complex64;
use rayon::prelude::*;
use std::f64::consts::{PI, TAU};

/// Contour sample count for the boundary term; smooth data integrates
/// spectrally at this resolution away from the boundary.
pub const CONTOUR_SAMPLES: usize = 512;

/// Antiderivative of `sqrt(1 - x^2)`, clamped outside `[-1, 1]`.
fn circle_antiderivative(x: f64) -> f64 {
    let x = x.clamp(-1.0, 1.0);
    0.5 * (x * (1.0 - x * x).max(0.0).sqrt() + x.asin())
}

/// Exact area of the intersection of the rectangle `[a, b] x [c, d]` with
/// the unit disk, by piecewise closed-form integration of the chord length
/// between the breakpoints where the circle crosses the rectangle edges.
pub fn cell_disk_area(a: f64, b: f64, c: f64, d: f64) -> f64 {
    let lo = a.max(-1.0);
    let hi = b.min(1.0);
    if hi <= lo {
        return 0.0;
    }
    let mut cuts = vec![lo, hi];
    for v in [c, d] {
        if v.abs() < 1.0 {
            let xv = (1.0 - v * v).sqrt();
            for t in [-xv, xv] {
                if t > lo && t < hi {
                    cuts.push(t);
                }
            }
        }
    }
    cuts.sort_by(f64::total_cmp);
    let mut total = 0.0;
    for pair in cuts.windows(2) {
        let (x1, x2) = (pair[0], pair[1]);
        if x2 - x1 < 1e-15 {
            continue;
        }
        let xm = 0.5 * (x1 + x2);
        let sm = (1.0 - xm * xm).max(0.0).sqrt();
        let upper_flat = d <= sm;
        let lower_flat = c >= -sm;
        let upper = if upper_flat { d } else { sm };
        let lower = if lower_flat { c } else { -sm };
        if upper <= lower {
            continue;
        }
        let anti = circle_antiderivative(x2) - circle_antiderivative(x1);
        let iu = if upper_flat { d * (x2 - x1) } else { anti };
        let il = if lower_flat { c * (x2 - x1) } else { -anti };
        total += iu - il;
    }
    total
}

/// One quadrature cell: grid node, cell center, and the exact area of the
/// cell clipped to the disk.
pub struct AreaCell {
    pub i: usize,
    pub j: usize,
    pub center: Complex64,
    pub weight: f64,
}

/// Cells with positive disk overlap; their weights tile the disk exactly,
/// so the weight total equals pi to rounding.
pub struct DiskQuadrature {
    cells: Vec<AreaCell>,
}

impl DiskQuadrature {
    pub fn new(grid: &GridSpec) -> Self {
        let h = grid.spacing();
        let mut cells = Vec::new();
        for j in 0..grid.n() {
            for i in 0..grid.n() {
                let (x, y) = grid.xy(i, j);
                let w = cell_disk_area(x - h / 2.0, x + h / 2.0, y - h / 2.0, y + h / 2.0);
                if w > 0.0 {
                    cells.push(AreaCell {
                        i,
                        j,
                        center: Complex64::new(x, y),
                        weight: w,
                    });
                }
            }
        }
        Self { cells }
    }

    pub fn cells(&self) -> &[AreaCell] {
        &self.cells
    }

    pub fn total_area(&self) -> f64 {
        self.cells.iter().map(|c| c.weight).sum()
    }
}

/// Which first-order operator the data comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PompeiuKind {
    Dbar,
    D,
}

/// Interior source, boundary trace, and operator choice for one solve.
pub struct PompeiuProblem {
    pub psi: ComplexField,
    pub g: BoundaryData,
    pub kind: PompeiuKind,
}

/// Prepared evaluator: cached cell weights and contour samples.
pub struct PompeiuSolver<'a> {
    psi: &'a ComplexField,
    kind: PompeiuKind,
    quad: DiskQuadrature,
    contour: Vec<(Complex64, Complex64)>,
}

impl<'a> PompeiuSolver<'a> {
    pub fn new(psi: &'a ComplexField, g: &BoundaryData, kind: PompeiuKind) -> Self {
        let quad = DiskQuadrature::new(psi.grid());
        let contour = (0..CONTOUR_SAMPLES)
            .map(|j| {
                let beta = TAU * j as f64 / CONTOUR_SAMPLES as f64;
                (Complex64::from_polar(1.0, beta), g.eval(beta))
            })
            .collect();
        Self {
            psi,
            kind,
            quad,
            contour,
        }
    }

    /// Evaluate the solution at `z`; certified only at distance `guard` or
    /// more from the boundary.
    pub fn eval(&self, z: Complex64, guard: f64) -> Result<Complex64> {
        if 1.0 - z.norm() < guard {
            return Err(Error::Contract(format!(
                "evaluation point {z} is inside the guard band (guard {guard})"
            )));
        }
        Ok(self.eval_unchecked(z))
    }

    fn eval_unchecked(&self, z: Complex64) -> Complex64 {
        let grid = self.psi.grid();
        let h = grid.spacing();
        let clamp = |t: f64| (((t + 1.0) / h).round().max(0.0) as usize).min(grid.n() - 1);
        let (i0, j0) = (clamp(z.re), clamp(z.im));
        let psi0 = self.psi.at(i0, j0);

        let mut area = Complex64::ZERO;
        for cell in &self.quad.cells {
            if cell.i == i0 && cell.j == j0 {
                continue;
            }
            let dv = self.psi.at(cell.i, cell.j) - psi0;
            let den = match self.kind {
                PompeiuKind::Dbar => cell.center - z,
                PompeiuKind::D => (cell.center - z).conj(),
            };
            area += cell.weight * dv / den;
        }
        // Closed-form whole-disk kernel integral: the `1/(zeta - z)` kernel
        // integrates to `-pi conj(z)` over the disk (conjugated for `d`).
        let analytic = match self.kind {
            PompeiuKind::Dbar => psi0 * z.conj(),
            PompeiuKind::D => psi0 * z,
        };

        let mut contour = Complex64::ZERO;
        for &(zeta, gv) in &self.contour {
            let term = match self.kind {
                PompeiuKind::Dbar => gv * zeta / (zeta - z),
                PompeiuKind::D => gv * zeta.conj() / (zeta - z).conj(),
            };
            contour += term;
        }
        contour /= CONTOUR_SAMPLES as f64;

        contour - area / PI + analytic
    }

    /// Evaluate at every inside node with `1 - |z| >= guard`, in parallel;
    /// other nodes stay zero.
    pub fn eval_grid(&self, guard: f64) -> ComplexField {
        let grid = self.psi.grid().clone();
        let n = grid.n();
        let mut out = ComplexField::zeros(&grid);
        let vals: Vec<Complex64> = (0..n * n)
            .into_par_iter()
            .map(|node| {
                let (i, j) = (node % n, node / n);
                if !grid.is_inside(i, j) || grid.dist_to_boundary(i, j) < guard {
                    return Complex64::ZERO;
                }
                let (x, y) = grid.xy(i, j);
                self.eval_unchecked(Complex64::new(x, y))
            })
            .collect();
        out.values_mut().copy_from_slice(&vals);
        out
    }
}

/// Solve `dbar u = psi`, `u = g` on the circle, at the point `z`.
pub fn solve_dbar_pompeiu(
    psi: &ComplexField,
    g: &BoundaryData,
    z: Complex64,
    guard: f64,
) -> Result<Complex64> {
    PompeiuSolver::new(psi, g, PompeiuKind::Dbar).eval(z, guard)
}

/// Solve `d u = psi`, `u = g` on the circle, at the point `z`.
pub fn solve_d_pompeiu(
    psi: &ComplexField,
    g: &BoundaryData,
    z: Complex64,
    guard: f64,
) -> Result<Complex64> {
    PompeiuSolver::new(psi, g, PompeiuKind::D).eval(z, guard)
}

/// Grid version of [`solve_dbar_pompeiu`].
pub fn solve_dbar_grid(psi: &ComplexField, g: &BoundaryData, guard: f64) -> ComplexField {
    PompeiuSolver::new(psi, g, PompeiuKind::Dbar).eval_grid(guard)
}

/// Grid version of [`solve_d_pompeiu`].
pub fn solve_d_grid(psi: &ComplexField, g: &BoundaryData, guard: f64) -> ComplexField {
    PompeiuSolver::new(psi, g, PompeiuKind::D).eval_grid(guard)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::elliptic;

    /// Fill every node of the grid, including the rim outside the circle,
    /// so cells with positive overlap all carry data.
    fn fill_all(grid: &GridSpec, f: impl Fn(f64, f64) -> Complex64) -> ComplexField {
        let mut out = ComplexField::zeros(grid);
        for j in 0..grid.n() {
            for i in 0..grid.n() {
                let (x, y) = grid.xy(i, j);
                out.set(i, j, f(x, y));
            }
        }
        out
    }

    /// Midpoint-rule oracle for rectangle-disk overlap on a fine subgrid.
    fn area_oracle(a: f64, b: f64, c: f64, d: f64) -> f64 {
        let steps = 4000;
        let (dx, dy) = ((b - a) / steps as f64, (d - c) / steps as f64);
        let mut acc = 0.0;
        for p in 0..steps {
            let x = a + (p as f64 + 0.5) * dx;
            for q in 0..steps {
                let y = c + (q as f64 + 0.5) * dy;
                if x * x + y * y <= 1.0 {
                    acc += dx * dy;
                }
            }
        }
        acc
    }

    #[test]
    fn cell_areas_match_closed_forms_and_oracle() {
        assert!((cell_disk_area(-2.0, 2.0, -2.0, 2.0) - PI).abs() < 1e-12);
        assert!((cell_disk_area(0.0, 2.0, -2.0, 2.0) - PI / 2.0).abs() < 1e-12);
        assert!((cell_disk_area(0.5, 0.6, 0.1, 0.2) - 0.01).abs() < 1e-15);
        assert_eq!(cell_disk_area(1.1, 1.5, -0.2, 0.2), 0.0);
        for (a, b, c, d) in [
            (0.9, 1.1, -0.05, 0.05),
            (-1.05, -0.95, -0.6, -0.4),
            (0.6, 0.8, 0.55, 0.85),
            (-0.1, 0.1, 0.93, 1.07),
        ] {
            let exact = cell_disk_area(a, b, c, d);
            let approx = area_oracle(a, b, c, d);
            assert!(
                (exact - approx).abs() < 2e-4,
                "cell ({a},{b})x({c},{d}): {exact} vs {approx}"
            );
        }
    }

    #[test]
    fn quadrature_weights_tile_the_disk() {
        for n in [33usize, 65] {
            let grid = GridSpec::new(n).unwrap();
            let quad = DiskQuadrature::new(&grid);
            assert!(
                (quad.total_area() - PI).abs() < 1e-10,
                "n = {n}: {}",
                quad.total_area()
            );
        }
    }

    #[test]
    fn raw_kernel_quadrature_error_shrinks_with_the_grid() {
        // Midpoint sum of 1/(zeta - z) against the closed form -pi conj(z).
        let z = Complex64::new(0.31, -0.22);
        let mut errs = Vec::new();
        for n in [33usize, 65] {
            let grid = GridSpec::new(n).unwrap();
            let quad = DiskQuadrature::new(&grid);
            let h = grid.spacing();
            let mut acc = Complex64::ZERO;
            for cell in quad.cells() {
                if (cell.center - z).norm() < 0.5 * h {
                    continue;
                }
                acc += cell.weight / (cell.center - z);
            }
            errs.push((acc + PI * z.conj()).norm());
        }
        assert!(errs[0] < 2.0 * (2.0 / 32.0), "coarse error {}", errs[0]);
        assert!(errs[1] < 0.7 * errs[0], "errors {errs:?}");
    }

    #[test]
    fn holomorphic_data_is_reproduced() {
        let grid = GridSpec::new(65).unwrap();
        let psi = ComplexField::zeros(&grid);
        let g = BoundaryData::from_fn(256, |b| {
            let zeta = Complex64::from_polar(1.0, b);
            zeta * zeta + Complex64::new(0.4, -1.1)
        })
        .unwrap();
        let solver = PompeiuSolver::new(&psi, &g, PompeiuKind::Dbar);
        for (x, y) in [(0.0, 0.0), (0.5, 0.3), (-0.7, 0.2)] {
            let z = Complex64::new(x, y);
            let want = z * z + Complex64::new(0.4, -1.1);
            let got = solver.eval(z, 0.05).unwrap();
            assert!((got - want).norm() < 1e-9, "{got} vs {want}");
        }
    }

    #[test]
    fn constant_source_reproduces_conjugate_coordinate() {
        // dbar conj(z) = 1: psi = 1 with g the trace of conj(z).
        let grid = GridSpec::new(65).unwrap();
        let psi = fill_all(&grid, |_, _| Complex64::ONE);
        let g = BoundaryData::from_fn(256, |b| Complex64::from_polar(1.0, -b)).unwrap();
        let solver = PompeiuSolver::new(&psi, &g, PompeiuKind::Dbar);
        for (x, y) in [(0.0, 0.0), (0.4, -0.5), (-0.8, 0.1), (0.2, 0.9)] {
            let z = Complex64::new(x, y);
            let got = solver.eval(z, 0.05).unwrap();
            assert!((got - z.conj()).norm() < 1e-9, "at {z}: {got}");
        }
    }

    #[test]
    fn constant_source_reproduces_coordinate_for_the_conjugated_operator() {
        // d z = 1: psi = 1 with g the trace of z.
        let grid = GridSpec::new(65).unwrap();
        let psi = fill_all(&grid, |_, _| Complex64::ONE);
        let g = BoundaryData::from_fn(256, |b| Complex64::from_polar(1.0, b)).unwrap();
        let solver = PompeiuSolver::new(&psi, &g, PompeiuKind::D);
        for (x, y) in [(0.0, 0.0), (0.4, -0.5), (-0.6, -0.6)] {
            let z = Complex64::new(x, y);
            let got = solver.eval(z, 0.05).unwrap();
            assert!((got - z).norm() < 1e-9, "at {z}: {got}");
        }
    }

    #[test]
    fn conjugation_identity_links_the_two_kernels() {
        let grid = GridSpec::new(33).unwrap();
        let psi = fill_all(&grid, |x, y| Complex64::new(x * y, x - 0.3 * y * y));
        let g = BoundaryData::from_fn(64, |b| {
            Complex64::new(b.cos() + 0.2 * (2.0 * b).sin(), -b.sin())
        })
        .unwrap();
        let psi_conj = psi.conj();
        let g_conj = BoundaryData::from_fn(64, |b| g.eval(b).conj()).unwrap();
        let z = Complex64::new(0.25, -0.4);
        let direct = solve_d_pompeiu(&psi, &g, z, 0.05).unwrap();
        let via_conj = solve_dbar_pompeiu(&psi_conj, &g_conj, z, 0.05)
            .unwrap()
            .conj();
        assert!((direct - via_conj).norm() < 1e-13, "{direct} vs {via_conj}");
    }

    #[test]
    fn guard_band_is_enforced() {
        let grid = GridSpec::new(33).unwrap();
        let psi = ComplexField::zeros(&grid);
        let g = BoundaryData::from_fn(16, |_| Complex64::ZERO).unwrap();
        assert!(solve_dbar_pompeiu(&psi, &g, Complex64::new(0.98, 0.0), 0.05).is_err());
    }

    #[test]
    fn solver_is_linear_in_source_and_boundary_data() {
        let grid = GridSpec::new(33).unwrap();
        let psi1 = fill_all(&grid, |x, y| Complex64::new(x, y * y));
        let psi2 = fill_all(&grid, |x, y| Complex64::new(y, -x));
        let g1 = BoundaryData::from_fn(64, |b| Complex64::from_polar(1.0, b)).unwrap();
        let g2 = BoundaryData::from_fn(64, |b| Complex64::new(b.sin(), 0.0)).unwrap();
        let a = Complex64::new(1.7, 0.0);
        let combo_psi = fill_all(&grid, |x, y| {
            Complex64::new(x, y * y) * a + Complex64::new(y, -x)
        });
        let combo_g = BoundaryData::from_fn(64, |b| a * g1.eval(b) + g2.eval(b)).unwrap();
        let z = Complex64::new(-0.3, 0.55);
        let u1 = solve_dbar_pompeiu(&psi1, &g1, z, 0.05).unwrap();
        let u2 = solve_dbar_pompeiu(&psi2, &g2, z, 0.05).unwrap();
        let uc = solve_dbar_pompeiu(&combo_psi, &combo_g, z, 0.05).unwrap();
        assert!((uc - (a * u1 + u2)).norm() < 1e-12);
    }

    #[test]
    fn residual_against_the_source_shrinks_with_the_grid() {
        // Compatible pair u = conj(z)^2 z, psi = dbar u = 2 conj(z) z, and
        // g the trace of u, which on the circle is conj(zeta).
        let g = BoundaryData::from_fn(256, |b| Complex64::from_polar(1.0, -b)).unwrap();
        let mut residuals = Vec::new();
        for n in [33usize, 65] {
            let grid = GridSpec::new(n).unwrap();
            let h = grid.spacing();
            let psi = fill_all(&grid, |x, y| {
                let z = Complex64::new(x, y);
                2.0 * z.conj() * z
            });
            let u = solve_dbar_grid(&psi, &g, 0.1);
            let du = elliptic::dbar(&u);
            let mut worst = 0.0f64;
            for (i, j) in grid.inside_nodes() {
                if grid.dist_to_boundary(i, j) < 0.1 + 2.0 * h {
                    continue;
                }
                worst = worst.max((du.at(i, j) - psi.at(i, j)).norm());
            }
            residuals.push(worst);
        }
        assert!(residuals[0] < 0.5, "coarse residual {}", residuals[0]);
        assert!(
            residuals[1] < 0.6 * residuals[0],
            "residuals {residuals:?}"
        );
    }

    #[test]
    fn grid_and_point_evaluations_agree() {
        let grid = GridSpec::new(33).unwrap();
        let psi = fill_all(&grid, |x, y| Complex64::new(x + y, x * y));
        let g = BoundaryData::from_fn(64, |b| Complex64::new(b.cos(), b.sin())).unwrap();
        let solver = PompeiuSolver::new(&psi, &g, PompeiuKind::Dbar);
        let field = solver.eval_grid(0.1);
        let (i, j) = (16 + 3, 16 - 5);
        let (x, y) = grid.xy(i, j);
        assert_eq!(field.at(i, j), solver.eval(Complex64::new(x, y), 0.1).unwrap());
    }
}
