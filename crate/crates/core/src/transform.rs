//! Forward exponential X-ray transform on the unit disk: chord quadrature,
//! sinogram sampling and file round trip, angular Fourier analysis of the
//! boundary data, and a trigonometric interpolant for periodic samples.

use crate::fields::{PhantomSpec, TensorField};
use crate::geometry::{boundary_point, classify, travel_times, Direction, RayClass};
use crate::{Error, Result};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

/// Anything that can be sampled as `<F(x) theta, theta>` along rays.
///
/// Grid-backed tensors interpolate bilinearly; analytic test fields implement
/// this directly to keep quadrature studies free of interpolation error.
pub trait RaySource: Sync {
    fn eval(&self, x: f64, y: f64, d: &Direction) -> f64;
}

impl RaySource for TensorField {
    fn eval(&self, x: f64, y: f64, d: &Direction) -> f64 {
        self.project_direction(x, y, d)
    }
}

impl RaySource for PhantomSpec {
    fn eval(&self, x: f64, y: f64, d: &Direction) -> f64 {
        let (f11, f12, f22) = self.tensor_at(x, y);
        let (c, s) = d.theta();
        c * c * f11 + 2.0 * c * s * f12 + s * s * f22
    }
}

/// Spatially constant symmetric tensor restricted to the disk, evaluated
/// without interpolation.
#[derive(Clone, Copy, Debug)]
pub struct UniformTensor {
    pub f11: f64,
    pub f12: f64,
    pub f22: f64,
}

impl UniformTensor {
    pub fn identity() -> Self {
        Self {
            f11: 1.0,
            f12: 0.0,
            f22: 1.0,
        }
    }
}

impl RaySource for UniformTensor {
    fn eval(&self, _x: f64, _y: f64, d: &Direction) -> f64 {
        let (c, s) = d.theta();
        c * c * self.f11 + 2.0 * c * s * self.f12 + s * s * self.f22
    }
}

// 16-point Gauss-Legendre rule on [-1, 1] (positive half; mirrored in use).
const GL16_X: [f64; 8] = [
    0.0950125098376374401853193,
    0.2816035507792589132304605,
    0.4580167776572273863424194,
    0.6178762444026437484466718,
    0.7554044083550030338951012,
    0.8656312023878317438804679,
    0.9445750230732325760779884,
    0.9894009349916499325961542,
];
const GL16_W: [f64; 8] = [
    0.1894506104550684962853967,
    0.1826034150449235888667637,
    0.1691565193950025381893121,
    0.1495959888165767320815017,
    0.1246289712555338720524763,
    0.0951585116824927848099251,
    0.0622535239386478928628438,
    0.0271524594117540948517806,
];

/// Composite Gauss-Legendre panel layout along a chord.
#[derive(Clone, Copy, Debug)]
pub struct QuadratureSpec {
    /// Minimum quadrature nodes per unit chord length.
    pub nodes_per_unit: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            nodes_per_unit: 512,
        }
    }
}

/// Integrate `src(x + t theta) e^{mu t}` for `t` in `[-tau, 0]`.
fn integrate_back(
    src: &(impl RaySource + ?Sized),
    mu: f64,
    x: (f64, f64),
    d: &Direction,
    tau: f64,
    quad: &QuadratureSpec,
) -> f64 {
    if tau <= 0.0 {
        return 0.0;
    }
    let panels = ((tau * quad.nodes_per_unit as f64 / 16.0).ceil() as usize).max(1);
    let (tx, ty) = d.theta();
    let pw = tau / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let a = -tau + p as f64 * pw;
        let mid = a + 0.5 * pw;
        let half = 0.5 * pw;
        let mut acc = 0.0;
        for k in 0..8 {
            for sgn in [-1.0, 1.0] {
                let t = mid + sgn * half * GL16_X[k];
                let v = src.eval(x.0 + t * tx, x.1 + t * ty, d) * (mu * t).exp();
                acc += GL16_W[k] * v;
            }
        }
        total += acc * half;
    }
    total
}

/// Forward transform at one outgoing boundary-direction pair:
/// the integral of `<F theta, theta> e^{mu t}` over the chord ending at
/// `zeta(beta)`, with `t = 0` at the exit point.
///
/// Errors when the pair is incoming or tangent.
pub fn xray_exponential(
    src: &(impl RaySource + ?Sized),
    mu: f64,
    beta: f64,
    phi: f64,
) -> Result<f64> {
    xray_exponential_with(src, mu, beta, phi, &QuadratureSpec::default())
}

pub fn xray_exponential_with(
    src: &(impl RaySource + ?Sized),
    mu: f64,
    beta: f64,
    phi: f64,
    quad: &QuadratureSpec,
) -> Result<f64> {
    let zeta = boundary_point(beta);
    let d = Direction::new(phi);
    match classify(&zeta, &d) {
        RayClass::Outgoing => {}
        other => {
            return Err(Error::Contract(format!(
                "xray_exponential needs an outgoing pair, got {other:?} at beta={beta}, phi={phi}"
            )))
        }
    }
    let (tau_minus, _) = travel_times(zeta.pos, &d)?;
    Ok(integrate_back(src, mu, zeta.pos, &d, tau_minus, quad))
}

/// Value at `x` of the transport solution with zero incoming trace:
/// the same chord integral truncated at the interior point `x`.
pub fn transport_characteristics(
    src: &(impl RaySource + ?Sized),
    mu: f64,
    x: (f64, f64),
    phi: f64,
) -> Result<f64> {
    let d = Direction::new(phi);
    let (tau_minus, _) = travel_times(x, &d)?;
    Ok(integrate_back(
        src,
        mu,
        x,
        &d,
        tau_minus,
        &QuadratureSpec::default(),
    ))
}

/// Sidecar metadata stored next to the sinogram CSV.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct SinogramMeta {
    pub mu: f64,
    pub n_beta: usize,
    pub n_phi: usize,
}

/// Forward data on the full angular product grid
/// `beta_b = 2 pi b / n_beta`, `phi_p = 2 pi p / n_phi`; incoming and
/// tangent pairs hold zero.
#[derive(Clone, Debug)]
pub struct Sinogram {
    pub mu: f64,
    pub n_beta: usize,
    pub n_phi: usize,
    values: Vec<f64>,
}

impl Sinogram {
    pub fn beta(&self, b: usize) -> f64 {
        TAU * b as f64 / self.n_beta as f64
    }

    pub fn phi(&self, p: usize) -> f64 {
        TAU * p as f64 / self.n_phi as f64
    }

    pub fn at(&self, b: usize, p: usize) -> f64 {
        self.values[b * self.n_phi + p]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn meta(&self) -> SinogramMeta {
        SinogramMeta {
            mu: self.mu,
            n_beta: self.n_beta,
            n_phi: self.n_phi,
        }
    }

    pub(crate) fn validate_shape(mu: f64, n_beta: usize, n_phi: usize) -> Result<()> {
        if !(mu >= 0.0 && mu.is_finite()) {
            return Err(Error::Config(format!(
                "attenuation must be finite and >= 0, got {mu}"
            )));
        }
        if n_beta < 8 {
            return Err(Error::Config(format!("n_beta must be >= 8, got {n_beta}")));
        }
        if n_phi < 8 || !n_phi.is_power_of_two() {
            return Err(Error::Config(format!(
                "n_phi must be a power of two >= 8, got {n_phi}"
            )));
        }
        Ok(())
    }

    /// Path of the JSON sidecar for a given CSV path.
    pub fn sidecar_path(path: &Path) -> PathBuf {
        PathBuf::from(format!("{}.json", path.display()))
    }

    /// Write the CSV (`beta,phi,value`, beta outer) and the JSON sidecar.
    /// Values use shortest round-trip decimal formatting.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        writeln!(w, "beta,phi,value")?;
        for b in 0..self.n_beta {
            for p in 0..self.n_phi {
                writeln!(w, "{},{},{}", self.beta(b), self.phi(p), self.at(b, p))?;
            }
        }
        w.flush()?;
        let meta = serde_json::to_string_pretty(&self.meta())?;
        std::fs::write(Self::sidecar_path(path), meta)?;
        Ok(())
    }

    /// Read a sinogram written by [`Sinogram::save`].
    pub fn load(path: &Path) -> Result<Self> {
        let meta: SinogramMeta =
            serde_json::from_str(&std::fs::read_to_string(Self::sidecar_path(path))?)?;
        Self::validate_shape(meta.mu, meta.n_beta, meta.n_phi)?;
        let mut r = BufReader::new(std::fs::File::open(path)?);
        let mut line = String::new();
        r.read_line(&mut line)?;
        if line.trim_end() != "beta,phi,value" {
            return Err(Error::Format(format!(
                "bad sinogram header: {:?}",
                line.trim_end()
            )));
        }
        let mut out = Sinogram {
            mu: meta.mu,
            n_beta: meta.n_beta,
            n_phi: meta.n_phi,
            values: Vec::with_capacity(meta.n_beta * meta.n_phi),
        };
        for (k, line) in r.lines().enumerate() {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split(',');
            let err = || Error::Format(format!("bad sinogram row {}", k + 2));
            let beta: f64 = parts.next().ok_or_else(err)?.parse().map_err(|_| err())?;
            let phi: f64 = parts.next().ok_or_else(err)?.parse().map_err(|_| err())?;
            let value: f64 = parts.next().ok_or_else(err)?.parse().map_err(|_| err())?;
            if parts.next().is_some() {
                return Err(err());
            }
            let (b, p) = (k / meta.n_phi, k % meta.n_phi);
            if b >= meta.n_beta {
                return Err(Error::Format("sinogram has more rows than sidecar".into()));
            }
            if (beta - out.beta(b)).abs() > 1e-12 || (phi - out.phi(p)).abs() > 1e-12 {
                return Err(Error::Format(format!(
                    "angles in row {} disagree with the sidecar layout",
                    k + 2
                )));
            }
            out.values.push(value);
        }
        if out.values.len() != meta.n_beta * meta.n_phi {
            return Err(Error::Format(format!(
                "sinogram has {} rows, sidecar promises {}",
                out.values.len(),
                meta.n_beta * meta.n_phi
            )));
        }
        Ok(out)
    }
}

/// Sample the forward transform on the full angular grid; rows over `beta`
/// run in parallel.
pub fn sample_sinogram(
    src: &(impl RaySource + Sync + ?Sized),
    mu: f64,
    n_beta: usize,
    n_phi: usize,
) -> Result<Sinogram> {
    Sinogram::validate_shape(mu, n_beta, n_phi)?;
    let quad = QuadratureSpec::default();
    let mut values = vec![0.0f64; n_beta * n_phi];
    values
        .par_chunks_mut(n_phi)
        .enumerate()
        .for_each(|(b, row)| {
            let beta = TAU * b as f64 / n_beta as f64;
            let zeta = boundary_point(beta);
            for (p, slot) in row.iter_mut().enumerate() {
                let phi = TAU * p as f64 / n_phi as f64;
                let d = Direction::new(phi);
                if classify(&zeta, &d) == RayClass::Outgoing {
                    let (tau_minus, _) = travel_times(zeta.pos, &d)
                        .expect("boundary points lie in the closed disk");
                    *slot = integrate_back(src, mu, zeta.pos, &d, tau_minus, &quad);
                }
            }
        });
    Ok(Sinogram {
        mu,
        n_beta,
        n_phi,
        values,
    })
}

/// Nonpositive-order Fourier coefficients of the boundary data in the
/// direction variable: row `n` holds
/// `g_{-n}(beta_b) = (1/n_phi) sum_p g(beta_b, phi_p) e^{+i n phi_p}`.
#[derive(Clone, Debug)]
pub struct BoundaryModes {
    pub n_beta: usize,
    pub n_max: usize,
    coeffs: Vec<Complex64>,
}

impl BoundaryModes {
    pub fn get(&self, n: usize, b: usize) -> Complex64 {
        self.coeffs[n * self.n_beta + b]
    }

    /// All samples of `g_{-n}` over `beta`.
    pub fn row(&self, n: usize) -> &[Complex64] {
        &self.coeffs[n * self.n_beta..(n + 1) * self.n_beta]
    }
}

/// Angular Fourier analysis of a sinogram up to order `-n_max`.
/// Requires `n_max < n_phi / 2` so every retained order is below Nyquist.
pub fn boundary_modes(s: &Sinogram, n_max: usize) -> Result<BoundaryModes> {
    if 2 * n_max >= s.n_phi {
        return Err(Error::Contract(format!(
            "mode order {n_max} needs more than {} direction samples",
            s.n_phi
        )));
    }
    let n_beta = s.n_beta;
    let rot: Vec<Complex64> = (0..s.n_phi)
        .map(|p| Complex64::from_polar(1.0, TAU * p as f64 / s.n_phi as f64))
        .collect();
    let mut coeffs = vec![Complex64::ZERO; (n_max + 1) * n_beta];
    for b in 0..n_beta {
        for p in 0..s.n_phi {
            let v = s.at(b, p);
            if v == 0.0 {
                continue;
            }
            let mut w = Complex64::ONE;
            for n in 0..=n_max {
                coeffs[n * n_beta + b] += v * w;
                w *= rot[p];
            }
        }
    }
    let scale = 1.0 / s.n_phi as f64;
    for c in &mut coeffs {
        *c *= scale;
    }
    Ok(BoundaryModes {
        n_beta,
        n_max,
        coeffs,
    })
}

/// Trigonometric interpolant of equispaced periodic complex samples on
/// `[0, 2 pi)`; evaluation is spectrally accurate for smooth data.
#[derive(Clone, Debug)]
pub struct BoundaryData {
    m: usize,
    /// Fourier coefficients for orders `0..=m/2` then `-(m/2-1)..=-1`;
    /// the Nyquist order `m/2` is split evenly between `+m/2` and `-m/2`.
    pos: Vec<Complex64>,
    neg: Vec<Complex64>,
}

impl BoundaryData {
    pub fn from_samples(samples: &[Complex64]) -> Result<Self> {
        let m = samples.len();
        if m < 4 || m % 2 != 0 {
            return Err(Error::Contract(format!(
                "periodic interpolation needs an even sample count >= 4, got {m}"
            )));
        }
        let half = m / 2;
        let mut pos = vec![Complex64::ZERO; half + 1];
        let mut neg = vec![Complex64::ZERO; half];
        let scale = 1.0 / m as f64;
        for k in 0..=half {
            let mut acc = Complex64::ZERO;
            for (j, v) in samples.iter().enumerate() {
                let ang = -TAU * (k * j % m) as f64 / m as f64;
                acc += v * Complex64::from_polar(1.0, ang);
            }
            pos[k] = acc * scale;
        }
        for k in 1..half {
            let mut acc = Complex64::ZERO;
            for (j, v) in samples.iter().enumerate() {
                let ang = TAU * (k * j % m) as f64 / m as f64;
                acc += v * Complex64::from_polar(1.0, ang);
            }
            neg[k] = acc * scale;
        }
        // Nyquist split: half the weight on each signed order keeps the
        // interpolant real for real data.
        pos[half] *= 0.5;
        neg[0] = pos[half];
        Ok(Self { m, pos, neg })
    }

    /// Interpolant through `m` equispaced samples of `f`.
    pub fn from_fn(m: usize, f: impl Fn(f64) -> Complex64) -> Result<Self> {
        let samples: Vec<Complex64> = (0..m).map(|j| f(TAU * j as f64 / m as f64)).collect();
        Self::from_samples(&samples)
    }

    pub fn len(&self) -> usize {
        self.m
    }

    pub fn is_empty(&self) -> bool {
        self.m == 0
    }

    /// Evaluate the interpolant at angle `beta`.
    pub fn eval(&self, beta: f64) -> Complex64 {
        let w = Complex64::from_polar(1.0, beta);
        let half = self.m / 2;
        // Horner in w for nonnegative orders.
        let mut acc_p = self.pos[half];
        for k in (0..half).rev() {
            acc_p = acc_p * w + self.pos[k];
        }
        // Horner in conj(w) for negative orders, starting at -half.
        let wc = w.conj();
        let mut acc_n = self.neg[0];
        for k in 1..half {
            acc_n = acc_n * wc + self.neg[half - k];
        }
        acc_n *= wc;
        acc_p + acc_n
    }
}
