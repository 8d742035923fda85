//! Bessel functions of the first kind with real order `nu >= 0`, their
//! positive zeros, and Gauss-Legendre quadrature.
//!
//! `J_nu` is evaluated by the power series for small arguments and by
//! Hankel's large-argument expansion beyond `12 (1 + nu/4)`. On the band in
//! between, where the alternating series would lose too many digits to
//! cancellation (this only happens for larger orders), a backward-recurrence
//! scheme normalized by `sum_k c_k J_{nu+2k}(x) = (x/2)^nu / Gamma(nu+1)`
//! is used instead.

use crate::{Error, Result};
use std::f64::consts::PI;

/// Validated non-negative real Bessel order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BesselOrder(f64);

impl BesselOrder {
    pub fn new(nu: f64) -> Result<Self> {
        if !nu.is_finite() || nu < 0.0 {
            return Err(Error::domain(format!(
                "Bessel order must be finite and non-negative, got {nu}"
            )));
        }
        Ok(Self(nu))
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

/// Bessel function of the first kind `J_nu(x)` for `nu >= 0`, `x >= 0`.
pub fn bessel_j(nu: BesselOrder, x: f64) -> Result<f64> {
    if !x.is_finite() || x < 0.0 {
        return Err(Error::domain(format!(
            "bessel_j requires finite x >= 0, got {x}"
        )));
    }
    Ok(bessel_jv(nu.get(), x))
}

/// Unchecked `J_nu(x)` for internal hot paths. Caller guarantees
/// `nu >= 0` and `x >= 0`.
pub(crate) fn bessel_jv(nu: f64, x: f64) -> f64 {
    debug_assert!(nu >= 0.0 && x >= 0.0);
    if x == 0.0 {
        return if nu == 0.0 { 1.0 } else { 0.0 };
    }
    let split = 12.0 * (1.0 + 0.25 * nu);
    if x >= split {
        bessel_j_asymptotic(nu, x)
    } else if series_cancellation_acceptable(nu, x) {
        bessel_j_series(nu, x)
    } else {
        bessel_j_miller(nu, x)
    }
}

/// Power series around zero; accurate while the largest term stays small
/// enough that alternating cancellation does not eat the target digits.
fn bessel_j_series(nu: f64, x: f64) -> f64 {
    let q = 0.25 * x * x;
    let mut term = 1.0_f64;
    let mut sum = 1.0_f64;
    for m in 1..400 {
        let mf = m as f64;
        term *= -q / (mf * (nu + mf));
        sum += term;
        if term.abs() < 1e-17 * sum.abs().max(1e-290) {
            break;
        }
    }
    (nu * (0.5 * x).ln() - ln_gamma(nu + 1.0)).exp() * sum
}

/// Estimate whether the power series keeps absolute accuracy near 1e-13:
/// the largest term magnitude must stay below ~1e3.
fn series_cancellation_acceptable(nu: f64, x: f64) -> bool {
    // index of the largest term solves m (m + nu) = (x/2)^2
    let m = 0.5 * ((nu * nu + x * x).sqrt() - nu);
    if m < 4.0 {
        return true;
    }
    let ln_max = (2.0 * m + nu) * (0.5 * x).ln() - ln_gamma(m + 1.0) - ln_gamma(m + nu + 1.0);
    ln_max < 7.0
}

/// Hankel's expansion `J_nu ~ sqrt(2/(pi x)) (cos(w) P - sin(w) Q)` with
/// optimal truncation (stop at the smallest term).
fn bessel_j_asymptotic(nu: f64, x: f64) -> f64 {
    let mu = 4.0 * nu * nu;
    let mut p = 1.0_f64;
    let mut q = 0.0_f64;
    let mut c = 1.0_f64;
    let mut prev = f64::MAX;
    for j in 1..=40u32 {
        let d = 2.0 * j as f64 - 1.0;
        c *= (mu - d * d) / (j as f64 * 8.0 * x);
        let a = c.abs();
        if a > prev {
            break;
        }
        prev = a;
        match j % 4 {
            1 => q += c,
            2 => p -= c,
            3 => q -= c,
            _ => p += c,
        }
        if a < 1e-19 {
            break;
        }
    }
    let omega = x - (0.5 * nu + 0.25) * PI;
    (2.0 / (PI * x)).sqrt() * (omega.cos() * p - omega.sin() * q)
}

/// Backward recurrence in the order (Miller's scheme) with the
/// normalization `sum_k c_k J_{nu+2k}(x) = (x/2)^nu / Gamma(nu+1)`,
/// `c_0 = 1`, `c_1 = nu + 2`.
fn bessel_j_miller(nu: f64, x: f64) -> f64 {
    let mut k_max = (1.3 * x + 34.0) as usize;
    if k_max % 2 == 1 {
        k_max += 1;
    }
    let mut f = vec![0.0_f64; k_max + 2];
    f[k_max + 1] = 0.0;
    f[k_max] = 1e-30;
    let mut k = k_max;
    while k > 0 {
        f[k - 1] = 2.0 * (nu + k as f64) / x * f[k] - f[k + 1];
        if f[k - 1].abs() > 1e200 {
            // only the entries already computed carry meaning
            for v in f[k - 1..].iter_mut() {
                *v *= 1e-200;
            }
        }
        k -= 1;
    }
    let mut s = f[0];
    let mut c = nu + 2.0;
    let mut i = 1usize;
    while 2 * i <= k_max {
        s += c * f[2 * i];
        let kf = i as f64;
        c *= (nu + 2.0 * kf + 2.0) * (nu + kf) / ((nu + 2.0 * kf) * (kf + 1.0));
        i += 1;
    }
    let scale = (nu * (0.5 * x).ln() - ln_gamma(nu + 1.0)).exp();
    f[0] * scale / s
}

/// Natural log of the Gamma function for `x > 0` (Lanczos, g = 7).
pub(crate) fn ln_gamma(x: f64) -> f64 {
    const COEFFS: [f64; 8] = [
        676.5203681218851,
        -1259.1392167224028,
        771.323_428_777_653_1,
        -176.61502916214059,
        12.507343278686905,
        -0.13857109526572012,
        9.984_369_578_019_572e-6,
        1.5056327351493116e-7,
    ];
    if x < 0.5 {
        // reflection
        return (PI / (PI * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let z = x - 1.0;
    let mut a = 0.999_999_999_999_809_93_f64;
    for (i, &c) in COEFFS.iter().enumerate() {
        a += c / (z + i as f64 + 1.0);
    }
    let t = z + 7.5;
    0.5 * (2.0 * PI).ln() + (z + 0.5) * t.ln() - t + a.ln()
}

/// First `n` positive zeros of `J_nu`, each located to 1e-12 absolute.
///
/// Consecutive positive zeros of `J_nu` are separated by more than 3.11
/// for every `nu >= 0`, so a bracket scan with step 1.5 starting at
/// `previous zero + 3.0` encloses exactly one zero; each bracket is then
/// refined by bisection.
pub fn bessel_zeros(nu: BesselOrder, n: usize) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::domain("bessel_zeros requires n >= 1"));
    }
    let nu = nu.get();
    let mut zeros = Vec::with_capacity(n);
    // J_nu > 0 on (0, j_{nu,1}) and all zeros exceed nu
    let mut lo = nu.max(0.05);
    for _ in 0..n {
        let z = next_zero(nu, lo)?;
        zeros.push(z);
        lo = z + 3.0;
    }
    Ok(zeros)
}

fn next_zero(nu: f64, start: f64) -> Result<f64> {
    let mut a = start;
    let mut fa = bessel_jv(nu, a);
    if fa == 0.0 {
        return Ok(a);
    }
    for _ in 0..100_000 {
        let b = a + 1.5;
        let fb = bessel_jv(nu, b);
        if fb == 0.0 {
            return Ok(b);
        }
        if fa.signum() != fb.signum() {
            return Ok(bisect_zero(nu, a, fa, b));
        }
        a = b;
        fa = fb;
    }
    Err(Error::numerical(format!(
        "failed to bracket a zero of J_{nu} starting at {start}"
    )))
}

fn bisect_zero(nu: f64, mut a: f64, fa: f64, mut b: f64) -> f64 {
    let mut sa = fa.signum();
    for _ in 0..80 {
        let m = 0.5 * (a + b);
        let fm = bessel_jv(nu, m);
        if fm == 0.0 {
            return m;
        }
        if fm.signum() == sa {
            a = m;
            sa = fm.signum();
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

/// A quadrature rule on a finite interval.
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub interval: (f64, f64),
}

impl QuadratureRule {
    pub fn integrate(&self, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

/// Gauss-Legendre rule with `n` nodes on `[a, b]`, exact for polynomials
/// of degree `2n - 1`. Nodes by Newton iteration on the Legendre
/// recurrence.
pub fn gauss_legendre(n: usize, a: f64, b: f64) -> Result<QuadratureRule> {
    if n == 0 {
        return Err(Error::domain("gauss_legendre requires n >= 1"));
    }
    if !a.is_finite() || !b.is_finite() || a >= b {
        return Err(Error::InvalidInterval { a, b });
    }
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    let xm = 0.5 * (b + a);
    let xl = 0.5 * (b - a);
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p0 = 1.0_f64;
            let mut p1 = 0.0_f64;
            for j in 0..n {
                let jf = j as f64;
                let p2 = p1;
                p1 = p0;
                p0 = ((2.0 * jf + 1.0) * z * p1 - jf * p2) / (jf + 1.0);
            }
            pp = nf * (z * p0 - p1) / (z * z - 1.0);
            let dz = p0 / pp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = xm - xl * z;
        nodes[n - 1 - i] = xm + xl * z;
        let w = 2.0 * xl / ((1.0 - z * z) * pp * pp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    Ok(QuadratureRule {
        nodes,
        weights,
        interval: (a, b),
    })
}

/// Composite Gauss-Legendre rule: panels of width at most `max_width`,
/// `order` nodes per panel. Used for oscillatory Bessel integrands where
/// the panel width is tied to the oscillation period.
pub fn composite_gauss(a: f64, b: f64, max_width: f64, order: usize) -> Result<QuadratureRule> {
    if !(max_width > 0.0) {
        return Err(Error::domain("composite_gauss requires max_width > 0"));
    }
    if a >= b {
        return Err(Error::InvalidInterval { a, b });
    }
    let panels = ((b - a) / max_width).ceil() as usize;
    let reference = gauss_legendre(order, 0.0, 1.0)?;
    let h = (b - a) / panels as f64;
    let mut nodes = Vec::with_capacity(panels * order);
    let mut weights = Vec::with_capacity(panels * order);
    for p in 0..panels {
        let pa = a + p as f64 * h;
        for (&x, &w) in reference.nodes.iter().zip(&reference.weights) {
            nodes.push(pa + h * x);
            weights.push(h * w);
        }
    }
    Ok(QuadratureRule {
        nodes,
        weights,
        interval: (a, b),
    })
}
