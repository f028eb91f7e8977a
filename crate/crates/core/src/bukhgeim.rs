//! Cauchy integral for sequence-valued analytic maps on the disk: extends a
//! truncated sequence of angular modes from boundary samples to interior
//! points so that the two-step chain `dbar v[n] + d v[n+2] = 0` holds, plus
//! residual and weighted-norm diagnostics for such sequences.

use crate::attenuation::{alpha_closed, beta_closed, GSign, ModeSequence};
use crate::fields::GridSpec;
use crate::{Error, Result};
use num_complex::Complex64;
use rayon::prelude::*;
use std::f64::consts::TAU;

/// Mode samples on the unit circle: entry `(n, m)` holds the value of the
/// order `-n` mode at the boundary angle `beta_m = 2 pi m / M`.
#[derive(Clone, Debug)]
pub struct BoundarySequence {
    pub n_beta: usize,
    pub n_max: usize,
    /// Mode-major layout: `values[n * n_beta + m]`.
    values: Vec<Complex64>,
}

impl BoundarySequence {
    pub fn from_fn(n_beta: usize, n_max: usize, f: impl Fn(usize, f64) -> Complex64) -> Self {
        let mut values = Vec::with_capacity((n_max + 1) * n_beta);
        for n in 0..=n_max {
            for m in 0..n_beta {
                values.push(f(n, TAU * m as f64 / n_beta as f64));
            }
        }
        Self {
            n_beta,
            n_max,
            values,
        }
    }

    pub fn get(&self, n: usize, m: usize) -> Complex64 {
        self.values[n * self.n_beta + m]
    }

    pub fn set(&mut self, n: usize, m: usize, v: Complex64) {
        self.values[n * self.n_beta + m] = v;
    }

    pub fn row(&self, n: usize) -> &[Complex64] {
        &self.values[n * self.n_beta..(n + 1) * self.n_beta]
    }

    pub fn beta(&self, m: usize) -> f64 {
        TAU * m as f64 / self.n_beta as f64
    }
}

/// Evaluate the Cauchy extension of `bv` at the interior point `z`:
/// for each order `n`,
/// `(1/2 pi i) ( closed-contour v_n(zeta)/(zeta-z) d zeta
///   + closed-contour {d zeta/(zeta-z) - d conj(zeta)/(conj zeta - conj z)}
///       sum_{j>=1} v_{n+2j}(zeta) ((conj zeta - conj z)/(zeta - z))^j )`,
/// with the series truncated at `n + 2j <= n_max` and both contours by the
/// trapezoid rule over the boundary samples.
///
/// The kernel ratio has modulus one on the circle, so accuracy is certified
/// only at distance `guard` or more from the boundary; closer points error.
pub fn bukhgeim_cauchy(bv: &BoundarySequence, z: Complex64, guard: f64) -> Result<Vec<Complex64>> {
    if 1.0 - z.norm() < guard {
        return Err(Error::Contract(format!(
            "evaluation point {z} is inside the guard band (guard {guard})"
        )));
    }
    Ok(bukhgeim_cauchy_unchecked(bv, z))
}

fn bukhgeim_cauchy_unchecked(bv: &BoundarySequence, z: Complex64) -> Vec<Complex64> {
    let m_count = bv.n_beta;
    let n_max = bv.n_max;
    let mut acc = vec![Complex64::ZERO; n_max + 1];
    for m in 0..m_count {
        let zeta = Complex64::from_polar(1.0, bv.beta(m));
        let den = zeta - z;
        let w = zeta / den;
        let two_re_w = 2.0 * w.re;
        let r = den.conj() / den;
        // Downward recurrence per parity: s holds the truncated series
        // S_n = r (v[n+2] + S_{n+2}).
        let mut s_parity = [Complex64::ZERO, Complex64::ZERO];
        for n in (0..=n_max).rev() {
            let s = if n + 2 <= n_max {
                r * (bv.get(n + 2, m) + s_parity[n % 2])
            } else {
                Complex64::ZERO
            };
            s_parity[n % 2] = s;
            acc[n] += bv.get(n, m) * w + two_re_w * s;
        }
    }
    let scale = 1.0 / m_count as f64;
    for a in &mut acc {
        *a *= scale;
    }
    acc
}

/// Evaluate the Cauchy extension at every inside grid node with
/// `1 - |z| >= guard`; other nodes stay zero.  Nodes run in parallel.
pub fn bukhgeim_cauchy_grid(bv: &BoundarySequence, grid: &GridSpec, guard: f64) -> ModeSequence {
    let n = grid.n();
    let n_max = bv.n_max;
    let k1 = n_max + 1;
    let mut flat = vec![Complex64::ZERO; n * n * k1];
    flat.par_chunks_mut(k1).enumerate().for_each(|(node, out)| {
        let (i, j) = (node % n, node / n);
        if !grid.is_inside(i, j) || grid.dist_to_boundary(i, j) < guard {
            return;
        }
        let (x, y) = grid.xy(i, j);
        let vals = bukhgeim_cauchy_unchecked(bv, Complex64::new(x, y));
        out.copy_from_slice(&vals);
    });
    let mut out = ModeSequence::zeros(grid, n_max);
    for nn in 0..=n_max {
        let vals = out.at_mut(nn).values_mut();
        for node in 0..n * n {
            vals[node] = flat[node * k1 + nn];
        }
    }
    out
}

/// Largest centered-difference residual of the chain
/// `dbar v[n] + d v[n+2]` over orders `n <= n_max - 2`, measured at nodes
/// whose whole stencil lies at distance `data_min_dist` or more from the
/// boundary (the evaluation node itself needs `data_min_dist + h`).
pub fn aanalytic_residual(v: &ModeSequence, data_min_dist: f64) -> f64 {
    let grid = v.grid();
    let h = grid.spacing();
    let n_max = v.n_max();
    if n_max < 2 {
        return 0.0;
    }
    let mut worst = 0.0f64;
    for (i, j) in grid.inside_nodes() {
        if grid.dist_to_boundary(i, j) < data_min_dist + h {
            continue;
        }
        let stencil_inside = grid.is_inside(i + 1, j)
            && grid.is_inside(i - 1, j)
            && grid.is_inside(i, j + 1)
            && grid.is_inside(i, j - 1);
        if !stencil_inside {
            continue;
        }
        for n in 0..=n_max - 2 {
            let f = v.at(n);
            let g = v.at(n + 2);
            let fx = (f.at(i + 1, j) - f.at(i - 1, j)) / (2.0 * h);
            let fy = (f.at(i, j + 1) - f.at(i, j - 1)) / (2.0 * h);
            let gx = (g.at(i + 1, j) - g.at(i - 1, j)) / (2.0 * h);
            let gy = (g.at(i, j + 1) - g.at(i, j - 1)) / (2.0 * h);
            let dbar_f = 0.5 * Complex64::new(fx.re - fy.im, fx.im + fy.re);
            let d_g = 0.5 * Complex64::new(gx.re + gy.im, gx.im - gy.re);
            worst = worst.max((dbar_f + d_g).norm());
        }
    }
    worst
}

/// Weighted-norm diagnostics of a boundary sequence with weight
/// `<n> = sqrt(1 + n^2)`:
/// `w1 = max_m sum_n <n>^2 |v[n][m]|` and
/// `w2 = max over pairs with |m1 - m2| <= M/8 of
///       sum_n <n> |v[n][m1] - v[n][m2]| / |zeta_1 - zeta_2|^alpha`.
pub fn y_alpha_diagnostic(bv: &BoundarySequence, alpha: f64) -> (f64, f64) {
    assert!(
        (0.5..1.0).contains(&alpha),
        "holder exponent must lie in (1/2, 1)"
    );
    let m_count = bv.n_beta;
    let weights: Vec<f64> = (0..=bv.n_max)
        .map(|n| 1.0 + (n * n) as f64)
        .collect();
    let mut w1 = 0.0f64;
    for m in 0..m_count {
        let s: f64 = (0..=bv.n_max)
            .map(|n| weights[n] * bv.get(n, m).norm())
            .sum();
        w1 = w1.max(s);
    }
    let mut w2 = 0.0f64;
    let reach = (m_count / 8).max(1);
    for m1 in 0..m_count {
        let z1 = Complex64::from_polar(1.0, bv.beta(m1));
        for dm in 1..=reach {
            let m2 = m1 + dm;
            if m2 >= m_count {
                break;
            }
            let z2 = Complex64::from_polar(1.0, bv.beta(m2));
            let dist = (z1 - z2).norm().powf(alpha);
            let s: f64 = (0..=bv.n_max)
                .map(|n| weights[n].sqrt() * (bv.get(n, m1) - bv.get(n, m2)).norm())
                .sum();
            w2 = w2.max(s / dist);
        }
    }
    (w1, w2)
}

/// Componentwise attenuation convolution on boundary samples, with the
/// closed-form coefficients evaluated at the boundary points.
pub fn conv_eg_boundary(
    bv: &BoundarySequence,
    mu: f64,
    k_max: usize,
    sign: GSign,
) -> BoundarySequence {
    let mut out = BoundarySequence::from_fn(bv.n_beta, bv.n_max, |_, _| Complex64::ZERO);
    for m in 0..bv.n_beta {
        let zeta = Complex64::from_polar(1.0, bv.beta(m));
        let coeffs: Vec<Complex64> = (0..=k_max)
            .map(|k| match sign {
                GSign::Minus => alpha_closed(zeta, mu, k),
                GSign::Plus => beta_closed(zeta, mu, k),
            })
            .collect();
        for n in 0..=bv.n_max {
            let top = k_max.min(bv.n_max - n);
            let mut acc = Complex64::ZERO;
            for (k, c) in coeffs.iter().take(top + 1).enumerate() {
                acc += c * bv.get(n + k, m);
            }
            out.set(n, m, acc);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::ComplexField;

    /// Boundary trace of the exact chain sequence
    /// `(conj z, 0, -z, 0, c, 0, ...)`.
    fn linear_chain_trace(n_beta: usize, n_max: usize, c: Complex64) -> BoundarySequence {
        BoundarySequence::from_fn(n_beta, n_max, |n, beta| {
            let zeta = Complex64::from_polar(1.0, beta);
            match n {
                0 => zeta.conj(),
                2 => -zeta,
                4 => c,
                _ => Complex64::ZERO,
            }
        })
    }

    fn chain_values(z: Complex64, n_max: usize, c: Complex64) -> Vec<Complex64> {
        let mut v = vec![Complex64::ZERO; n_max + 1];
        v[0] = z.conj();
        v[2] = -z;
        v[4] = c;
        v
    }

    #[test]
    fn constant_sequence_is_reproduced() {
        let c = Complex64::new(1.3, -0.4);
        let bv = BoundarySequence::from_fn(256, 6, |n, _| {
            if n == 0 {
                c
            } else {
                Complex64::ZERO
            }
        });
        for z in [
            Complex64::new(0.0, 0.0),
            Complex64::new(0.5, 0.3),
            Complex64::new(-0.8, 0.1),
        ] {
            let got = bukhgeim_cauchy(&bv, z, 0.05).unwrap();
            assert!((got[0] - c).norm() < 1e-10, "component 0 at {z}");
            for n in 1..=6 {
                assert!(got[n].norm() < 1e-10, "component {n} at {z}");
            }
        }
    }

    #[test]
    fn linear_chain_is_reproduced_on_certified_region() {
        let c = Complex64::new(0.3, 0.9);
        let bv = linear_chain_trace(512, 8, c);
        for (x, y) in [
            (0.0, 0.0),
            (0.62, -0.41),
            (-0.3, 0.85),
            (0.94, 0.0),
            (-0.66, -0.66),
        ] {
            let z = Complex64::new(x, y);
            let got = bukhgeim_cauchy(&bv, z, 0.04).unwrap();
            let want = chain_values(z, 8, c);
            for n in 0..=8 {
                assert!(
                    (got[n] - want[n]).norm() < 1e-6,
                    "component {n} at {z}: {} vs {}",
                    got[n],
                    want[n]
                );
            }
        }
    }

    #[test]
    fn holomorphic_head_with_constant_tail() {
        let bv = BoundarySequence::from_fn(512, 6, |n, beta| {
            let zeta = Complex64::from_polar(1.0, beta);
            match n {
                0 => zeta,
                2 => Complex64::new(0.7, 0.1),
                4 => Complex64::new(-0.2, 0.5),
                _ => Complex64::ZERO,
            }
        });
        for (x, y) in [(0.3, 0.4), (-0.5, 0.2), (0.0, -0.9)] {
            let z = Complex64::new(x, y);
            let got = bukhgeim_cauchy(&bv, z, 0.04).unwrap();
            assert!((got[0] - z).norm() < 1e-8, "component 0 at {z}: {}", got[0]);
        }
    }

    #[test]
    fn guard_band_is_enforced() {
        let bv = linear_chain_trace(64, 4, Complex64::ZERO);
        assert!(bukhgeim_cauchy(&bv, Complex64::new(0.97, 0.0), 0.05).is_err());
        assert!(bukhgeim_cauchy(&bv, Complex64::new(0.9, 0.0), 0.05).is_ok());
    }

    #[test]
    fn operator_is_linear_in_the_boundary_data() {
        let a = Complex64::new(0.8, -0.3);
        let u = BoundarySequence::from_fn(128, 5, |n, beta| {
            Complex64::from_polar(1.0 / (1 + n) as f64, beta.sin() + n as f64)
        });
        let v = linear_chain_trace(128, 5, Complex64::new(0.2, 0.2));
        let combo = BoundarySequence::from_fn(128, 5, |n, beta| {
            let m = (beta / (TAU / 128.0)).round() as usize % 128;
            a * u.get(n, m) + v.get(n, m)
        });
        let z = Complex64::new(0.35, -0.52);
        let bu = bukhgeim_cauchy(&u, z, 0.05).unwrap();
        let bv = bukhgeim_cauchy(&v, z, 0.05).unwrap();
        let bc = bukhgeim_cauchy(&combo, z, 0.05).unwrap();
        for n in 0..=5 {
            assert!((bc[n] - (a * bu[n] + bv[n])).norm() < 1e-12);
        }
    }

    #[test]
    fn residual_of_linear_chain_is_tiny() {
        let grid = GridSpec::new(33).unwrap();
        let c = Complex64::new(0.5, -0.1);
        let mut v = ModeSequence::zeros(&grid, 6);
        *v.at_mut(0) = ComplexField::from_fn(&grid, |x, y| Complex64::new(x, -y));
        *v.at_mut(2) = ComplexField::from_fn(&grid, |x, y| -Complex64::new(x, y));
        *v.at_mut(4) = ComplexField::from_fn(&grid, |_, _| c);
        let res = aanalytic_residual(&v, 0.0);
        assert!(res < 1e-10, "residual {res}");
    }

    #[test]
    fn residual_of_cauchy_output_decreases_under_refinement() {
        // Smooth boundary data that is not an exact chain; the interior
        // extension must still be chain-analytic up to discretization.
        let data = |n: usize, beta: f64| {
            let zeta = Complex64::from_polar(1.0, beta);
            zeta.conj().powu(n as u32 % 3) * (0.5f64.powi(n as i32)) + zeta * 0.1
        };
        let mut residuals = Vec::new();
        for (n_grid, m) in [(33usize, 256usize), (65, 512)] {
            let grid = GridSpec::new(n_grid).unwrap();
            let bv = BoundarySequence::from_fn(m, 8, data);
            let v = bukhgeim_cauchy_grid(&bv, &grid, 0.1);
            residuals.push(aanalytic_residual(&v, 0.1));
        }
        assert!(
            residuals[1] < 0.5 * residuals[0],
            "residuals did not decrease: {residuals:?}"
        );
    }

    #[test]
    fn grid_and_point_evaluations_agree() {
        let grid = GridSpec::new(33).unwrap();
        let bv = linear_chain_trace(128, 6, Complex64::new(0.1, 0.8));
        let seq = bukhgeim_cauchy_grid(&bv, &grid, 0.1);
        let (i, j) = (16 + 4, 16 - 3);
        let (x, y) = grid.xy(i, j);
        let pt = bukhgeim_cauchy(&bv, Complex64::new(x, y), 0.1).unwrap();
        for n in 0..=6 {
            assert_eq!(seq.at(n).at(i, j), pt[n]);
        }
        // Guard-band nodes stay zero.
        let mut band_checked = false;
        for (bi, bj) in grid.inside_nodes() {
            if grid.dist_to_boundary(bi, bj) < 0.1 {
                assert_eq!(seq.at(0).at(bi, bj), Complex64::ZERO);
                band_checked = true;
            }
        }
        assert!(band_checked);
    }

    #[test]
    fn diagnostic_norms_match_hand_computations() {
        let zero = BoundarySequence::from_fn(64, 4, |_, _| Complex64::ZERO);
        assert_eq!(y_alpha_diagnostic(&zero, 0.75), (0.0, 0.0));

        let c = Complex64::new(-1.2, 0.5);
        let single = BoundarySequence::from_fn(64, 4, |n, _| {
            if n == 0 {
                c
            } else {
                Complex64::ZERO
            }
        });
        let (w1, w2) = y_alpha_diagnostic(&single, 0.75);
        assert!((w1 - c.norm()).abs() < 1e-12);
        assert_eq!(w2, 0.0);

        let geometric = BoundarySequence::from_fn(64, 10, |n, _| {
            Complex64::new(0.5f64.powi(n as i32), 0.0)
        });
        let want: f64 = (0..=10)
            .map(|n| (1.0 + (n * n) as f64) * 0.5f64.powi(n as i32))
            .sum();
        let (w1, w2) = y_alpha_diagnostic(&geometric, 0.6);
        assert!((w1 - want).abs() < 1e-12);
        assert_eq!(w2, 0.0);
    }

    #[test]
    fn attenuation_convolution_preserves_diagnostic_norms() {
        // Smooth decaying boundary sequence; e^{+-G} must not inflate the
        // weighted norms by more than a fixed factor.
        let g = BoundarySequence::from_fn(256, 12, |n, beta| {
            Complex64::from_polar(0.6f64.powi(n as i32), -(n as f64) * beta)
                * (1.0 + 0.3 * beta.cos())
        });
        let (g1, g2) = y_alpha_diagnostic(&g, 0.75);
        for sign in [GSign::Minus, GSign::Plus] {
            let eg = conv_eg_boundary(&g, 1.0, 12, sign);
            let (e1, e2) = y_alpha_diagnostic(&eg, 0.75);
            assert!(e1 <= 10.0 * g1, "w1 inflated: {e1} vs {g1}");
            assert!(e2 <= 10.0 * g2, "w2 inflated: {e2} vs {g2}");
        }
    }
}
