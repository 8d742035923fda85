//! Model-edge descriptors: fiber spectra, admissibility checks, indicial
//! roots and the asymptotic index set.
//!
//! Only exact product models `R^b x C(F)` are representable, with `F` a
//! rescaled circle (`f = 1`) or round sphere (`f >= 2`). The general
//! fibration enters the analysis only through the fiber spectrum, which
//! feasibility forces to be constant along the edge, so nothing is lost at
//! desk scale by restricting to products.

use crate::specfun::gauss_legendre;
use crate::{Error, Result};
use std::f64::consts::PI;
use std::sync::Arc;

/// Eigenfunction evaluator on the fiber; the slice holds the `f` fiber
/// coordinates (angle for the circle, colatitude/longitude for `S^2`).
pub type FiberFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Quadrature on the fiber, weights summing to `vol(F)`.
#[derive(Clone)]
pub struct FiberQuadrature {
    pub nodes: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

/// One eigenvalue of the fiber Laplacian with its eigenspace.
#[derive(Clone)]
pub struct FiberEntry {
    /// Eigenvalue of `Delta_F` (written `sigma^2` in the mode labels).
    pub sigma_sq: f64,
    pub multiplicity: usize,
    /// One evaluator per eigenspace dimension; empty when the fiber is
    /// carried in spectrum-only mode.
    pub eigenfunctions: Vec<FiberFn>,
    /// Label of the underlying harmonic degree (`k` for the circle, `l`
    /// for the sphere).
    pub degree: usize,
}

/// Spectrum of the fiber Laplacian, sorted by eigenvalue, zero mode first.
#[derive(Clone)]
pub struct FiberSpectrum {
    pub entries: Vec<FiberEntry>,
    pub fiber_dim: usize,
    pub cone_scale: f64,
    pub description: String,
    pub volume: f64,
    /// Present when eigenfunction evaluators are available.
    pub quadrature: Option<FiberQuadrature>,
}

impl FiberSpectrum {
    /// Smallest nonzero eigenvalue, if any nonzero entry is listed.
    pub fn lambda0(&self) -> Option<f64> {
        self.entries.iter().map(|e| e.sigma_sq).find(|&s| s > 0.0)
    }

    pub fn has_eigenfunctions(&self) -> bool {
        self.entries.iter().all(|e| !e.eigenfunctions.is_empty()) && self.quadrature.is_some()
    }

    /// Max absolute deviation of `<phi_i, phi_j>` from the identity under
    /// the fiber quadrature. `None` in spectrum-only mode.
    pub fn orthonormality_residual(&self) -> Option<f64> {
        let quad = self.quadrature.as_ref()?;
        let mut fns = Vec::new();
        for e in &self.entries {
            if e.eigenfunctions.len() != e.multiplicity {
                return None;
            }
            fns.extend(e.eigenfunctions.iter().cloned());
        }
        let vals: Vec<Vec<f64>> = fns
            .iter()
            .map(|f| quad.nodes.iter().map(|z| f(z)).collect())
            .collect();
        let mut worst = 0.0_f64;
        for i in 0..fns.len() {
            for j in i..fns.len() {
                let dot: f64 = quad
                    .weights
                    .iter()
                    .zip(vals[i].iter().zip(&vals[j]))
                    .map(|(&w, (&a, &b))| w * a * b)
                    .sum();
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((dot - target).abs());
            }
        }
        Some(worst)
    }
}

/// Rescaled circle fiber: eigenvalues `(k / cone_scale)^2` for
/// `k = 0..=max_mode`, multiplicity 2 for `k >= 1`, trigonometric
/// eigenfunctions orthonormal for the measure `cone_scale * d theta`.
pub fn circle_fiber(max_mode: usize, cone_scale: f64) -> Result<FiberSpectrum> {
    if !(cone_scale > 0.0) || !cone_scale.is_finite() {
        return Err(Error::domain(format!(
            "cone_scale must be > 0, got {cone_scale}"
        )));
    }
    let c = cone_scale;
    let volume = 2.0 * PI * c;
    let mut entries = Vec::new();
    for k in 0..=max_mode {
        let sigma_sq = (k as f64 / c).powi(2);
        if k == 0 {
            let amp = 1.0 / volume.sqrt();
            let f: FiberFn = Arc::new(move |_: &[f64]| amp);
            entries.push(FiberEntry {
                sigma_sq,
                multiplicity: 1,
                eigenfunctions: vec![f],
                degree: 0,
            });
        } else {
            let amp = 1.0 / (PI * c).sqrt();
            let kk = k as f64;
            let fc: FiberFn = Arc::new(move |z: &[f64]| amp * (kk * z[0]).cos());
            let fs: FiberFn = Arc::new(move |z: &[f64]| amp * (kk * z[0]).sin());
            entries.push(FiberEntry {
                sigma_sq,
                multiplicity: 2,
                eigenfunctions: vec![fc, fs],
                degree: k,
            });
        }
    }
    // uniform grid integrates trig polynomials up to degree n_z - 1 exactly;
    // 4x the retained band leaves the cubic nonlinearity alias-free
    let n_z = (4 * (max_mode + 1)).max(8);
    let w = volume / n_z as f64;
    let quadrature = FiberQuadrature {
        nodes: (0..n_z)
            .map(|q| vec![2.0 * PI * q as f64 / n_z as f64])
            .collect(),
        weights: vec![w; n_z],
    };
    Ok(FiberSpectrum {
        entries,
        fiber_dim: 1,
        cone_scale,
        description: format!("circle(max_mode={max_mode}, c={cone_scale})"),
        volume,
        quadrature: Some(quadrature),
    })
}

/// Round sphere fiber `S^f` rescaled by `cone_scale`: eigenvalues
/// `l (l + f - 1) / cone_scale^2` with spherical-harmonic multiplicities.
/// Eigenfunction evaluators are provided for `f = 2` only; other `f`
/// return the spectrum without evaluators.
pub fn sphere_fiber(f: usize, max_degree: usize, cone_scale: f64) -> Result<FiberSpectrum> {
    if f < 2 {
        return Err(Error::domain("sphere_fiber requires f >= 2"));
    }
    if !(cone_scale > 0.0) || !cone_scale.is_finite() {
        return Err(Error::domain(format!(
            "cone_scale must be > 0, got {cone_scale}"
        )));
    }
    let c = cone_scale;
    let volume = c.powi(f as i32) * sphere_area(f);
    let mut entries = Vec::new();
    for l in 0..=max_degree {
        let sigma_sq = (l * (l + f - 1)) as f64 / (c * c);
        let multiplicity = harmonic_dim(l, f);
        let eigenfunctions = if f == 2 {
            real_spherical_harmonics(l, c)
        } else {
            Vec::new()
        };
        entries.push(FiberEntry {
            sigma_sq,
            multiplicity,
            eigenfunctions,
            degree: l,
        });
    }
    let quadrature = if f == 2 {
        Some(sphere_quadrature(max_degree, c)?)
    } else {
        None
    };
    Ok(FiberSpectrum {
        entries,
        fiber_dim: f,
        cone_scale,
        description: format!("sphere(f={f}, max_degree={max_degree}, c={cone_scale})"),
        volume,
        quadrature,
    })
}

fn sphere_area(f: usize) -> f64 {
    // vol(S^f) = 2 pi^{(f+1)/2} / Gamma((f+1)/2)
    let half = 0.5 * (f as f64 + 1.0);
    2.0 * PI.powf(half) / crate::specfun::ln_gamma(half).exp()
}

fn harmonic_dim(l: usize, f: usize) -> usize {
    if l == 0 {
        return 1;
    }
    binomial(l + f, f) - binomial(l + f - 2, f)
}

fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc = 1usize;
    for i in 0..k {
        acc = acc * (n - i) / (i + 1);
    }
    acc
}

/// Real orthonormal spherical harmonics of degree `l` on the rescaled
/// 2-sphere (radius `c`), coordinates `(theta, phi)`.
fn real_spherical_harmonics(l: usize, c: f64) -> Vec<FiberFn> {
    let mut out: Vec<FiberFn> = Vec::with_capacity(2 * l + 1);
    // measure is c^2 sin(theta) dtheta dphi; rescale the unit-sphere
    // normalization accordingly
    let scale = 1.0 / c;
    let norm0 = ((2 * l + 1) as f64 / (4.0 * PI)).sqrt() * scale;
    out.push(Arc::new(move |z: &[f64]| {
        norm0 * legendre_assoc(l, 0, z[0].cos())
    }));
    for m in 1..=l {
        let ln_ratio = crate::specfun::ln_gamma((l - m + 1) as f64)
            - crate::specfun::ln_gamma((l + m + 1) as f64);
        let norm = (2.0 * (2 * l + 1) as f64 / (4.0 * PI) * ln_ratio.exp()).sqrt() * scale;
        let mm = m as f64;
        out.push(Arc::new(move |z: &[f64]| {
            norm * legendre_assoc(l, m, z[0].cos()) * (mm * z[1]).cos()
        }));
        out.push(Arc::new(move |z: &[f64]| {
            norm * legendre_assoc(l, m, z[0].cos()) * (mm * z[1]).sin()
        }));
    }
    out
}

/// Associated Legendre `P_l^m(x)` by the standard upward recurrence.
fn legendre_assoc(l: usize, m: usize, x: f64) -> f64 {
    let mut pmm = 1.0_f64;
    if m > 0 {
        let somx2 = ((1.0 - x) * (1.0 + x)).max(0.0).sqrt();
        let mut fact = 1.0;
        for _ in 0..m {
            pmm *= -fact * somx2;
            fact += 2.0;
        }
    }
    if l == m {
        return pmm;
    }
    let mut pmmp1 = x * (2.0 * m as f64 + 1.0) * pmm;
    if l == m + 1 {
        return pmmp1;
    }
    let mut pll = 0.0;
    for ll in (m + 2)..=l {
        let llf = ll as f64;
        let mf = m as f64;
        pll = (x * (2.0 * llf - 1.0) * pmmp1 - (llf + mf - 1.0) * pmm) / (llf - mf);
        pmm = pmmp1;
        pmmp1 = pll;
    }
    pll
}

fn sphere_quadrature(max_degree: usize, c: f64) -> Result<FiberQuadrature> {
    // Gauss-Legendre in cos(theta) x uniform phi is exact on products of
    // harmonics up to degree max_degree
    let n_theta = 2 * (max_degree + 2);
    let n_phi = (4 * max_degree + 4).max(8);
    let rule = gauss_legendre(n_theta, -1.0, 1.0)?;
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    for (&x, &w) in rule.nodes.iter().zip(&rule.weights) {
        let theta = x.acos();
        for q in 0..n_phi {
            let phi = 2.0 * PI * q as f64 / n_phi as f64;
            nodes.push(vec![theta, phi]);
            weights.push(c * c * w * 2.0 * PI / n_phi as f64);
        }
    }
    Ok(FiberQuadrature { nodes, weights })
}

/// A product model edge: `b`-dimensional edge, cone over the given fiber,
/// radial truncation at `s_max` for grids.
#[derive(Clone)]
pub struct EdgeGeometry {
    pub b: usize,
    pub fiber: FiberSpectrum,
    pub s_max: f64,
}

impl EdgeGeometry {
    pub fn new(b: usize, fiber: FiberSpectrum, s_max: f64) -> Result<Self> {
        if !(s_max > 0.0) || !s_max.is_finite() {
            return Err(Error::domain(format!("s_max must be > 0, got {s_max}")));
        }
        if fiber.entries.is_empty() || fiber.entries[0].sigma_sq != 0.0 {
            return Err(Error::domain(
                "fiber spectrum must start with the zero eigenvalue",
            ));
        }
        for pair in fiber.entries.windows(2) {
            if pair[0].sigma_sq >= pair[1].sigma_sq {
                return Err(Error::domain("fiber spectrum must be strictly increasing"));
            }
        }
        Ok(Self { b, fiber, s_max })
    }

    /// Total dimension `m = 1 + b + f`.
    pub fn total_dim(&self) -> usize {
        1 + self.b + self.fiber.fiber_dim
    }

    pub fn fiber_dim(&self) -> usize {
        self.fiber.fiber_dim
    }

    pub fn cone_scale(&self) -> f64 {
        self.fiber.cone_scale
    }

    /// Order `nu(sigma)` for each spectrum entry, ascending.
    pub fn orders(&self) -> Vec<f64> {
        self.fiber
            .entries
            .iter()
            .map(|e| nu_of_sigma(e.sigma_sq, self.fiber.fiber_dim))
            .collect()
    }

    /// Homogeneity order `-(1 + b + f)` of the geometric heat kernel under
    /// the parabolic scaling.
    pub fn homogeneity_order(&self) -> f64 {
        -(1.0 + self.b as f64 + self.fiber.fiber_dim as f64)
    }
}

/// `nu(sigma) = sqrt(sigma_sq + (f-1)^2/4)` where `sigma_sq` is a fiber
/// Laplacian eigenvalue.
pub fn nu_of_sigma(sigma_sq: f64, f: usize) -> f64 {
    let shift = 0.5 * (f as f64 - 1.0);
    (sigma_sq + shift * shift).sqrt()
}

/// The two indicial roots `gamma_pm = +-nu + 1/2` of `l_nu` at the tip,
/// with the logarithmic degeneracy flagged at `nu = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IndicialRoots {
    pub gamma_plus: f64,
    pub gamma_minus: f64,
    pub log_case: bool,
}

pub fn indicial_roots(nu: f64) -> IndicialRoots {
    IndicialRoots {
        gamma_plus: nu + 0.5,
        gamma_minus: -nu + 0.5,
        log_case: nu.abs() < 1e-12,
    }
}

/// One admissible exponent `gamma + 2j` with the modes it came from.
#[derive(Debug, Clone)]
pub struct IndexExponent {
    pub gamma: f64,
    /// Contributing `(sigma_sq, j)` pairs; several modes may share one
    /// exponent.
    pub sources: Vec<(f64, usize)>,
}

/// Truncated asymptotic index set `E + 2 N_0`,
/// `E = { -(f-1)/2 + nu(sigma) }`.
#[derive(Debug, Clone)]
pub struct IndexSet {
    pub exponents: Vec<IndexExponent>,
    pub cutoff: f64,
}

impl IndexSet {
    pub fn values(&self) -> Vec<f64> {
        self.exponents.iter().map(|e| e.gamma).collect()
    }
}

/// All exponents `-(f-1)/2 + nu(sigma) + 2j` below `cutoff`, sorted and
/// deduplicated to 1e-9 with provenance retained.
pub fn index_set(geom: &EdgeGeometry, cutoff: f64) -> Result<IndexSet> {
    if !(cutoff > 0.0) {
        return Err(Error::domain("index_set cutoff must be > 0"));
    }
    let f = geom.fiber.fiber_dim;
    let shift = 0.5 * (f as f64 - 1.0);
    let mut raw: Vec<(f64, f64, usize)> = Vec::new();
    for entry in &geom.fiber.entries {
        let base = -shift + nu_of_sigma(entry.sigma_sq, f);
        let mut j = 0usize;
        loop {
            let gamma = base + 2.0 * j as f64;
            if gamma > cutoff {
                break;
            }
            raw.push((gamma, entry.sigma_sq, j));
            j += 1;
        }
    }
    raw.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut exponents: Vec<IndexExponent> = Vec::new();
    for (gamma, sigma_sq, j) in raw {
        match exponents.last_mut() {
            Some(last) if (gamma - last.gamma).abs() <= 1e-9 => {
                last.sources.push((sigma_sq, j));
            }
            _ => exponents.push(IndexExponent {
                gamma,
                sources: vec![(sigma_sq, j)],
            }),
        }
    }
    Ok(IndexSet { exponents, cutoff })
}

/// Result of the admissibility check for a product model.
#[derive(Debug, Clone)]
pub struct AdmissibilityReport {
    /// Product metrics are feasible by construction.
    pub feasible: bool,
    /// `lambda0 > f`; `None` when the listed spectrum has no nonzero
    /// entry to decide with.
    pub admissible_i: Option<bool>,
    /// The metric perturbation vanishes identically for exact products.
    pub admissible_ii: bool,
    pub lambda0: Option<f64>,
    pub fiber_dim: usize,
}

/// Check the admissibility conditions. Condition (i) compares the lowest
/// nonzero fiber eigenvalue with `dim F`; condition (ii) holds trivially
/// since the model metric carries no perturbation.
pub fn check_admissible(geom: &EdgeGeometry) -> AdmissibilityReport {
    let lambda0 = geom.fiber.lambda0();
    AdmissibilityReport {
        feasible: true,
        admissible_i: lambda0.map(|l| l > geom.fiber.fiber_dim as f64),
        admissible_ii: true,
        lambda0,
        fiber_dim: geom.fiber.fiber_dim,
    }
}
