//! Attenuation machinery for constant absorption on the disk: the boundary
//! phase function `h`, its nonnegative angular Fourier coefficients, and the
//! sequence-space convolution operators built from them.  A finite Hilbert
//! transform utility supports the quadrature cross-check of `h`.

use crate::fields::{ComplexField, GridSpec};
use crate::geometry::{travel_times, Direction};
use crate::{Error, Result};
use num_complex::Complex64;
use rayon::prelude::*;
use std::f64::consts::TAU;

/// Guard half-width around the endpoints of `[-1, 1]` inside which the
/// finite Hilbert transform refuses to evaluate.
pub const HILBERT_GUARD: f64 = 1e-3;

/// Default node count for [`hilbert_finite`].
pub const HILBERT_NODES: usize = 4096;

/// Closed form of the attenuation phase: `h(z, phi) = -mu conj(z) e^{i phi}`.
pub fn h_closed_form(z: Complex64, phi: f64, mu: f64) -> Complex64 {
    -mu * z.conj() * Complex64::from_polar(1.0, phi)
}

/// Line Radon transform of the constant `mu` on the unit disk: chord length
/// times `mu`, i.e. `2 mu sqrt(1 - s^2)` for `|s| <= 1`, else zero.
pub fn radon_constant(s: f64, mu: f64) -> f64 {
    if s.abs() <= 1.0 {
        2.0 * mu * (1.0 - s * s).sqrt()
    } else {
        0.0
    }
}

/// Principal-value finite Hilbert transform `(1/pi) PV int f(s)/(t-s) ds`
/// over `[-1, 1]` by an evenly spaced grid centered at `t` with the singular
/// node excluded; node pairs symmetric about `t` cancel the singularity.
/// The excluded central gap carries the principal value `-h f'(t)`, restored
/// here from the two samples adjacent to the gap.
///
/// Accurate to about 1e-5 at 4096 nodes for integrands vanishing like a
/// square root at the endpoints.
pub fn hilbert_finite(f: impl Fn(f64) -> f64, t: f64, n_nodes: usize) -> Result<f64> {
    if t.abs() >= 1.0 - HILBERT_GUARD {
        return Err(Error::Contract(format!(
            "finite Hilbert transform evaluated inside the endpoint guard: t = {t}"
        )));
    }
    let h = 2.0 / n_nodes as f64;
    let clamped = |s: f64| if (-1.0..=1.0).contains(&s) { f(s) } else { 0.0 };
    let mut acc = 0.0;
    for dir in [1.0f64, -1.0] {
        let mut j = 1usize;
        loop {
            let s = t + dir * j as f64 * h;
            if !(-1.0..=1.0).contains(&s) {
                break;
            }
            acc += f(s) / (t - s);
            j += 1;
        }
    }
    let gap = -(clamped(t + h) - clamped(t - h)) / 2.0;
    Ok((acc * h + gap) / std::f64::consts::PI)
}

/// The attenuation phase assembled from its three analytic pieces:
/// `mu tau_plus(z, theta) - (Ra - i H Ra)(z . theta_perp) / 2` with
/// `Ra(s) = 2 mu sqrt(1 - s^2)` and `H Ra(s) = 2 mu s`.  Agrees with
/// [`h_closed_form`] to rounding.
pub fn h_function(z: Complex64, phi: f64, mu: f64) -> Result<Complex64> {
    let d = Direction::new(phi);
    let (_, tau_plus) = travel_times((z.re, z.im), &d)?;
    let (px, py) = d.perp();
    let s = z.re * px + z.im * py;
    if s.abs() > 1.0 {
        return Err(Error::OutsideDisk(z.re, z.im));
    }
    let ra = radon_constant(s, mu);
    let hra = 2.0 * mu * s;
    Ok(Complex64::new(mu * tau_plus - 0.5 * ra, 0.5 * hra))
}

/// As [`h_function`] but with the Hilbert transform evaluated by
/// [`hilbert_finite`] instead of its closed form; the slow cross-check path.
pub fn h_quadrature(z: Complex64, phi: f64, mu: f64, n_nodes: usize) -> Result<Complex64> {
    let d = Direction::new(phi);
    let (_, tau_plus) = travel_times((z.re, z.im), &d)?;
    let (px, py) = d.perp();
    let s = z.re * px + z.im * py;
    let ra = radon_constant(s, mu);
    let hra = hilbert_finite(|x| radon_constant(x, mu), s, n_nodes)?;
    Ok(Complex64::new(mu * tau_plus - 0.5 * ra, 0.5 * hra))
}

/// Closed-form angular coefficient of `e^{-h}`: `(mu conj z)^k / k!`.
pub fn alpha_closed(z: Complex64, mu: f64, k: usize) -> Complex64 {
    let w = mu * z.conj();
    let mut acc = Complex64::ONE;
    for j in 1..=k {
        acc *= w / j as f64;
    }
    acc
}

/// Closed-form angular coefficient of `e^{+h}`: `(-mu conj z)^k / k!`.
pub fn beta_closed(z: Complex64, mu: f64, k: usize) -> Complex64 {
    alpha_closed(z, -mu, k)
}

/// Nonnegative-order angular Fourier coefficients of `e^{-h(z, .)}` (alpha)
/// and `e^{+h(z, .)}` (beta_c) at every grid node, for orders `0..=k_max`.
#[derive(Clone, Debug)]
pub struct AttenuationCoeffs {
    grid: GridSpec,
    pub mu: f64,
    pub k_max: usize,
    /// Node-major layout: `alpha[node * (k_max + 1) + k]`.
    alpha: Vec<Complex64>,
    beta_c: Vec<Complex64>,
    /// Largest modulus seen among negative-order coefficients; both
    /// exponentials must be one-sided in the angular variable.
    neg_residual: f64,
}

impl AttenuationCoeffs {
    /// Discrete Fourier analysis of `e^{-h}` and `e^{+h}` in the direction
    /// angle, with `M >= 4 (k_max + 1)` samples (power of two).
    pub fn compute(grid: &GridSpec, mu: f64, k_max: usize) -> Result<Self> {
        if k_max < 1 {
            return Err(Error::Config(format!(
                "coefficient truncation must be >= 1, got {k_max}"
            )));
        }
        if !(mu >= 0.0 && mu.is_finite()) {
            return Err(Error::Config(format!("attenuation must be >= 0, got {mu}")));
        }
        let m = (4 * (k_max + 1)).next_power_of_two().max(64);
        let rot: Vec<Complex64> = (0..m)
            .map(|p| Complex64::from_polar(1.0, TAU * p as f64 / m as f64))
            .collect();
        let n = grid.n();
        let k1 = k_max + 1;
        let mut alpha = vec![Complex64::ZERO; n * n * k1];
        let mut beta_c = vec![Complex64::ZERO; n * n * k1];
        // Outside nodes keep the identity coefficients.
        for node in 0..n * n {
            alpha[node * k1] = Complex64::ONE;
            beta_c[node * k1] = Complex64::ONE;
        }
        let neg: Vec<f64> = alpha
            .par_chunks_mut(k1)
            .zip(beta_c.par_chunks_mut(k1))
            .enumerate()
            .map(|(node, (a_row, b_row))| {
                let (i, j) = (node % n, node / n);
                if !grid.is_inside(i, j) {
                    return 0.0;
                }
                let (x, y) = grid.xy(i, j);
                let z = Complex64::new(x, y);
                let scale = 1.0 / m as f64;
                let mut neg_max = 0.0f64;
                for (row, sign) in [(&mut *a_row, -1.0), (&mut *b_row, 1.0)] {
                    row.fill(Complex64::ZERO);
                    let mut neg_acc = vec![Complex64::ZERO; k_max];
                    for p in 0..m {
                        let e = (sign * h_closed_form(z, TAU * p as f64 / m as f64, mu)).exp();
                        // Nonnegative orders: multiply by e^{-i k phi_p}.
                        let step = rot[p].conj();
                        let mut w = Complex64::ONE;
                        for slot in row.iter_mut() {
                            *slot += e * w;
                            w *= step;
                        }
                        // Negative orders 1..=k_max with e^{+i k phi_p}.
                        let mut w = rot[p];
                        for slot in neg_acc.iter_mut() {
                            *slot += e * w;
                            w *= rot[p];
                        }
                    }
                    for slot in row.iter_mut() {
                        *slot *= scale;
                    }
                    for c in &neg_acc {
                        neg_max = neg_max.max(c.norm() * scale);
                    }
                }
                neg_max
            })
            .collect();
        let neg_residual = neg.into_iter().fold(0.0f64, f64::max);
        Ok(Self {
            grid: grid.clone(),
            mu,
            k_max,
            alpha,
            beta_c,
            neg_residual,
        })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn alpha(&self, i: usize, j: usize, k: usize) -> Complex64 {
        self.alpha[self.grid.idx(i, j) * (self.k_max + 1) + k]
    }

    pub fn beta(&self, i: usize, j: usize, k: usize) -> Complex64 {
        self.beta_c[self.grid.idx(i, j) * (self.k_max + 1) + k]
    }

    /// Largest negative-order coefficient modulus observed during analysis.
    pub fn negative_residual(&self) -> f64 {
        self.neg_residual
    }

    fn row(&self, sign: GSign, node: usize) -> &[Complex64] {
        let k1 = self.k_max + 1;
        match sign {
            GSign::Minus => &self.alpha[node * k1..(node + 1) * k1],
            GSign::Plus => &self.beta_c[node * k1..(node + 1) * k1],
        }
    }

    /// Test hook: scale one coefficient order so convolution identities must
    /// fail; used by the self-test's negative control.
    pub fn corrupt_for_test(&mut self, k: usize, factor: f64) {
        let k1 = self.k_max + 1;
        for node in 0..self.grid.n() * self.grid.n() {
            self.alpha[node * k1 + k] *= factor;
        }
    }
}

/// Truncated sequence of angular modes: entry `n` holds the field for the
/// mode of order `-n`, `n = 0..=n_max`.
#[derive(Clone, Debug)]
pub struct ModeSequence {
    grid: GridSpec,
    modes: Vec<ComplexField>,
}

impl ModeSequence {
    pub fn zeros(grid: &GridSpec, n_max: usize) -> Self {
        Self {
            grid: grid.clone(),
            modes: (0..=n_max).map(|_| ComplexField::zeros(grid)).collect(),
        }
    }

    pub fn from_fields(modes: Vec<ComplexField>) -> Result<Self> {
        let grid = modes
            .first()
            .ok_or_else(|| Error::Contract("mode sequence needs at least one mode".into()))?
            .grid()
            .clone();
        if modes.iter().any(|f| f.grid() != &grid) {
            return Err(Error::Mismatch("mode fields live on different grids".into()));
        }
        Ok(Self { grid, modes })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn n_max(&self) -> usize {
        self.modes.len() - 1
    }

    pub fn at(&self, n: usize) -> &ComplexField {
        &self.modes[n]
    }

    pub fn at_mut(&mut self, n: usize) -> &mut ComplexField {
        &mut self.modes[n]
    }

    /// Drop mode 0, shifting every entry down by one order.
    pub fn shifted_down(&self) -> Result<ModeSequence> {
        if self.modes.len() < 2 {
            return Err(Error::Contract("cannot shift a single-mode sequence".into()));
        }
        ModeSequence::from_fields(self.modes[1..].to_vec())
    }

    /// Largest modulus per mode order, a decay diagnostic.
    pub fn decay_profile(&self) -> Vec<f64> {
        self.modes.iter().map(|f| f.max_abs()).collect()
    }
}

/// Which exponential acts in [`conv_eg`]: `Plus` applies `e^{+G}` (beta
/// coefficients), `Minus` applies `e^{-G}` (alpha coefficients).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GSign {
    Plus,
    Minus,
}

/// Componentwise convolution with the attenuation coefficients:
/// output mode `n` is `sum_k c_k(z) u_{n+k}(z)` over `k <= min(K, n_max - n)`;
/// terms beyond the truncated sequence are dropped.
pub fn conv_eg(u: &ModeSequence, c: &AttenuationCoeffs, sign: GSign) -> Result<ModeSequence> {
    if u.grid() != c.grid() {
        return Err(Error::Mismatch(
            "mode sequence and coefficients live on different grids".into(),
        ));
    }
    let n_max = u.n_max();
    let grid = u.grid().clone();
    let n = grid.n();
    let mut out = ModeSequence::zeros(&grid, n_max);
    let inputs: Vec<&[Complex64]> = (0..=n_max).map(|m| u.at(m).values()).collect();
    let outs: Vec<&mut ComplexField> = out.modes.iter_mut().collect();
    outs.into_par_iter().enumerate().for_each(|(m, field)| {
        let k_top = c.k_max.min(n_max - m);
        let vals = field.values_mut();
        for node in 0..n * n {
            let coeffs = c.row(sign, node);
            let mut acc = Complex64::ZERO;
            for (k, coef) in coeffs.iter().take(k_top + 1).enumerate() {
                acc += coef * inputs[m + k][node];
            }
            vals[node] = acc;
        }
    });
    Ok(out)
}
