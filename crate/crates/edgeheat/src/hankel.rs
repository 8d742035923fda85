//! Discrete Hankel transform of order `nu` on a Bessel-zero radial grid.
//!
//! The continuum transform uses the symmetrized kernel
//! `(H_nu u)(rho) = int_0^inf sqrt(s rho) J_nu(s rho) u(s) ds`, which is
//! self-inverse and an isometry of `L^2((0,inf), ds)`. Truncating to
//! `[0, s_max]` and sampling at the scaled zeros `s_k = j_k s_max / J`
//! (with `J = j_{n+1}`) turns the basis `sqrt(s) J_nu(j_k s / s_max)` into
//! an almost orthogonal sampling matrix
//!
//! ```text
//! T_mk = (2 / J) J_nu(j_m j_k / J) / (|J_{nu+1}(j_m)| |J_{nu+1}(j_k)|),
//! ```
//!
//! the quasi-discrete Hankel transform. A few Newton-Schulz sweeps polish
//! `T` to a symmetric involution at working precision, so forward and
//! inverse coincide and the discrete norm is preserved exactly; accuracy
//! against the continuum transform is checked separately against
//! quadrature.

use crate::specfun::{bessel_jv, bessel_zeros, BesselOrder};
use crate::{Error, Result};
use nalgebra::DMatrix;

/// Plan for the discrete order-`nu` Hankel transform on `n` radial nodes
/// with physical truncation `s_max`.
#[derive(Debug, Clone)]
pub struct HankelPlan {
    nu: f64,
    n: usize,
    s_max: f64,
    /// Spectral truncation `j_{nu,n+1} / s_max`.
    rho_max: f64,
    /// `j_{nu,1..n}`.
    zeros: Vec<f64>,
    /// `j_{nu,n+1}`.
    big_zero: f64,
    s_nodes: Vec<f64>,
    rho_nodes: Vec<f64>,
    /// Symmetric involution in norm-weighted coordinates.
    transform: DMatrix<f64>,
    /// Physical-side quadrature weights for the `L^2(ds)` pairing.
    norm_weights: Vec<f64>,
    /// Spectral-side weights for the `L^2(d rho)` pairing.
    spectral_weights: Vec<f64>,
    /// `sqrt(2) / (s_max |J_{nu+1}(j_m)|)`, scale of the orthonormal basis
    /// element `e_m(s) = scale_m sqrt(s) J_nu(j_m s / s_max)`.
    basis_scale: Vec<f64>,
}

impl HankelPlan {
    /// Build the plan. Requires `n >= 8` so the quasi-orthogonality has
    /// room to hold.
    pub fn build(nu: f64, n: usize, s_max: f64) -> Result<Self> {
        let order = BesselOrder::new(nu)?;
        if n < 8 {
            return Err(Error::domain(format!("HankelPlan requires n >= 8, got {n}")));
        }
        if !(s_max > 0.0) || !s_max.is_finite() {
            return Err(Error::domain(format!("s_max must be > 0, got {s_max}")));
        }
        let mut zeros = bessel_zeros(order, n + 1)?;
        let big_zero = zeros.pop().expect("n + 1 zeros requested");
        let s_nodes: Vec<f64> = zeros.iter().map(|&j| j * s_max / big_zero).collect();
        let rho_nodes: Vec<f64> = zeros.iter().map(|&j| j / s_max).collect();
        let rho_max = big_zero / s_max;

        let jnext: Vec<f64> = zeros.iter().map(|&j| bessel_jv(nu + 1.0, j).abs()).collect();
        for (k, &v) in jnext.iter().enumerate() {
            if v < 1e-8 {
                return Err(Error::numerical(format!(
                    "degenerate weight at zero #{k} of J_{nu}"
                )));
            }
        }
        let mut transform = DMatrix::zeros(n, n);
        for m in 0..n {
            for k in m..n {
                let v = 2.0 / big_zero * bessel_jv(nu, zeros[m] * zeros[k] / big_zero)
                    / (jnext[m] * jnext[k]);
                transform[(m, k)] = v;
                transform[(k, m)] = v;
            }
        }
        orthogonality_polish(&mut transform)?;

        let norm_weights: Vec<f64> = (0..n)
            .map(|k| 2.0 * s_max / (big_zero * zeros[k] * jnext[k] * jnext[k]))
            .collect();
        let spectral_weights: Vec<f64> = norm_weights
            .iter()
            .map(|&w| w * big_zero / (s_max * s_max))
            .collect();
        let basis_scale: Vec<f64> = jnext
            .iter()
            .map(|&a| std::f64::consts::SQRT_2 / (s_max * a))
            .collect();

        Ok(Self {
            nu,
            n,
            s_max,
            rho_max,
            zeros,
            big_zero,
            s_nodes,
            rho_nodes,
            transform,
            norm_weights,
            spectral_weights,
            basis_scale,
        })
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }
    pub fn len(&self) -> usize {
        self.n
    }
    pub fn is_empty(&self) -> bool {
        self.n == 0
    }
    pub fn s_max(&self) -> f64 {
        self.s_max
    }
    pub fn rho_max(&self) -> f64 {
        self.rho_max
    }
    pub fn s_nodes(&self) -> &[f64] {
        &self.s_nodes
    }
    pub fn rho_nodes(&self) -> &[f64] {
        &self.rho_nodes
    }
    pub fn norm_weights(&self) -> &[f64] {
        &self.norm_weights
    }
    pub fn spectral_weights(&self) -> &[f64] {
        &self.spectral_weights
    }
    pub fn transform_matrix(&self) -> &DMatrix<f64> {
        &self.transform
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.n {
            return Err(Error::LengthMismatch {
                expected: self.n,
                got: len,
            });
        }
        Ok(())
    }

    /// Samples on `s_nodes` -> transform samples on `rho_nodes`.
    pub fn forward(&self, physical: &[f64]) -> Result<Vec<f64>> {
        self.check_len(physical.len())?;
        let coeff = self.coefficients(physical)?;
        Ok((0..self.n)
            .map(|m| coeff[m] / self.spectral_weights[m].sqrt())
            .collect())
    }

    /// Transform samples on `rho_nodes` -> samples on `s_nodes`. The
    /// transform is self-inverse; only the node weighting differs.
    pub fn inverse(&self, spectral: &[f64]) -> Result<Vec<f64>> {
        self.check_len(spectral.len())?;
        let weighted: Vec<f64> = (0..self.n)
            .map(|m| spectral[m] * self.spectral_weights[m].sqrt())
            .collect();
        let back = &self.transform * DMatrix::from_column_slice(self.n, 1, &weighted);
        Ok((0..self.n)
            .map(|k| back[(k, 0)] / self.norm_weights[k].sqrt())
            .collect())
    }

    /// Orthonormal-basis coefficients of physical samples: `c = T w` with
    /// `w_k = sqrt(omega_k) u(s_k)`. These coincide with the transform
    /// values up to the spectral node weighting.
    pub fn coefficients(&self, physical: &[f64]) -> Result<Vec<f64>> {
        self.check_len(physical.len())?;
        let weighted: Vec<f64> = (0..self.n)
            .map(|k| physical[k] * self.norm_weights[k].sqrt())
            .collect();
        let c = &self.transform * DMatrix::from_column_slice(self.n, 1, &weighted);
        Ok(c.column(0).iter().copied().collect())
    }

    /// Physical samples from orthonormal-basis coefficients.
    pub fn synthesize(&self, coeff: &[f64]) -> Result<Vec<f64>> {
        self.check_len(coeff.len())?;
        let c = &self.transform * DMatrix::from_column_slice(self.n, 1, coeff);
        Ok((0..self.n)
            .map(|k| c[(k, 0)] / self.norm_weights[k].sqrt())
            .collect())
    }

    /// Evaluate the basis expansion `sum_m c_m e_m(s)` anywhere on
    /// `(0, s_max)`. Every `e_m` vanishes like `s^{nu + 1/2}` at the tip,
    /// so synthesized fields carry the upper indicial behavior by
    /// construction.
    pub fn eval_physical(&self, coeff: &[f64], s: f64) -> Result<f64> {
        self.check_len(coeff.len())?;
        if !(0.0..=self.s_max).contains(&s) {
            return Err(Error::domain(format!(
                "evaluation point {s} outside [0, {}]",
                self.s_max
            )));
        }
        if s == 0.0 {
            return Ok(0.0);
        }
        let sq = s.sqrt();
        let mut acc = 0.0;
        for m in 0..self.n {
            if coeff[m] != 0.0 {
                acc += coeff[m] * self.basis_scale[m] * sq * bessel_jv(self.nu, self.rho_nodes[m] * s);
            }
        }
        Ok(acc)
    }

    /// Discrete `L^2(ds)` norm of physical samples.
    pub fn norm_physical(&self, physical: &[f64]) -> Result<f64> {
        self.check_len(physical.len())?;
        Ok(physical
            .iter()
            .zip(&self.norm_weights)
            .map(|(&u, &w)| w * u * u)
            .sum::<f64>()
            .sqrt())
    }

    /// Discrete `L^2(d rho)` norm of spectral samples.
    pub fn norm_spectral(&self, spectral: &[f64]) -> Result<f64> {
        self.check_len(spectral.len())?;
        Ok(spectral
            .iter()
            .zip(&self.spectral_weights)
            .map(|(&u, &w)| w * u * u)
            .sum::<f64>()
            .sqrt())
    }

    /// Residual `max |T T - I|`.
    pub fn self_inverse_residual(&self) -> f64 {
        let t2 = &self.transform * &self.transform;
        let mut worst = 0.0_f64;
        for m in 0..self.n {
            for k in 0..self.n {
                let target = if m == k { 1.0 } else { 0.0 };
                worst = worst.max((t2[(m, k)] - target).abs());
            }
        }
        worst
    }

    /// Max off-symmetry of the transform matrix.
    pub fn symmetry_residual(&self) -> f64 {
        let mut worst = 0.0_f64;
        for m in 0..self.n {
            for k in (m + 1)..self.n {
                worst = worst.max((self.transform[(m, k)] - self.transform[(k, m)]).abs());
            }
        }
        worst
    }
}

/// Newton-Schulz iteration for the matrix sign function: maps the nearly
/// orthogonal symmetric sampling matrix onto the nearest symmetric
/// involution, removing the small quasi-orthogonality defect.
fn orthogonality_polish(t: &mut DMatrix<f64>) -> Result<()> {
    let n = t.nrows();
    let residual = |m: &DMatrix<f64>| -> f64 {
        let sq = m * m;
        let mut worst = 0.0_f64;
        for i in 0..n {
            for j in 0..n {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((sq[(i, j)] - target).abs());
            }
        }
        worst
    };
    let initial = residual(t);
    if !initial.is_finite() || initial >= 0.9 {
        return Err(Error::numerical(format!(
            "sampling matrix too far from orthogonal (residual {initial}); increase n"
        )));
    }
    for _ in 0..8 {
        if residual(t) <= 1e-12 {
            return Ok(());
        }
        let t2 = &*t * &*t;
        let mut next = DMatrix::zeros(n, n);
        // X <- (3X - X^3) / 2
        let x3 = &*t * &t2;
        for i in 0..n {
            for j in 0..n {
                next[(i, j)] = 1.5 * t[(i, j)] - 0.5 * x3[(i, j)];
            }
        }
        // keep exact symmetry against roundoff drift
        for i in 0..n {
            for j in (i + 1)..n {
                let v = 0.5 * (next[(i, j)] + next[(j, i)]);
                next[(i, j)] = v;
                next[(j, i)] = v;
            }
        }
        *t = next;
    }
    let final_residual = residual(t);
    if final_residual > 1e-9 {
        return Err(Error::numerical(format!(
            "orthogonality polish stalled at residual {final_residual}"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::specfun::composite_gauss;
    use approx::assert_abs_diff_eq;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};
    use std::f64::consts::PI;

    #[test]
    fn matrix_is_symmetric_and_self_inverse() {
        let plan = HankelPlan::build(0.0, 64, 10.0).unwrap();
        assert!(plan.symmetry_residual() < 1e-12);
        assert!(plan.self_inverse_residual() < 1e-11);
    }

    #[test]
    fn self_inverse_on_random_vectors() {
        let mut rng = StdRng::seed_from_u64(7);
        let plan = HankelPlan::build(0.0, 64, 10.0).unwrap();
        let u: Vec<f64> = (0..64).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let v = plan.forward(&u).unwrap();
        let w = plan.inverse(&v).unwrap();
        let num: f64 = u.iter().zip(&w).map(|(a, b)| (a - b) * (a - b)).sum();
        let den: f64 = u.iter().map(|a| a * a).sum();
        assert!((num / den).sqrt() < 1e-8);
    }

    #[test]
    fn half_order_plan_is_a_sine_transform() {
        // J_{1/2} zeros are k pi, and the sampling matrix reduces to DST-I
        let n = 32;
        let plan = HankelPlan::build(0.5, n, 10.0).unwrap();
        let nf = (n + 1) as f64;
        for m in 0..n {
            for k in 0..n {
                let dst = (2.0 / nf).sqrt() * ((m + 1) as f64 * (k + 1) as f64 * PI / nf).sin();
                assert_abs_diff_eq!(plan.transform_matrix()[(m, k)], dst, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn forward_of_zero_is_zero() {
        let plan = HankelPlan::build(1.0, 32, 5.0).unwrap();
        let v = plan.forward(&vec![0.0; 32]).unwrap();
        assert!(v.iter().all(|&x| x == 0.0));
    }

    /// Independent oracle for the order-0 pair
    /// `sqrt(s) e^{-s^2}  ->  sqrt(rho) e^{-rho^2/4} / 2`:
    /// direct panel quadrature of the defining integral.
    fn oracle_transform_order0(rho: f64) -> f64 {
        let width = 0.5 * PI / rho.max(1.0);
        composite_gauss(0.0, 14.0, width, 16)
            .unwrap()
            .integrate(|s| (s * rho).sqrt() * bessel_jv(0.0, s * rho) * s.sqrt() * (-s * s).exp())
    }

    #[test]
    fn gaussian_pair_matches_quadrature_oracle() {
        let plan = HankelPlan::build(0.0, 128, 10.0).unwrap();
        let samples: Vec<f64> = plan
            .s_nodes()
            .iter()
            .map(|&s| s.sqrt() * (-s * s).exp())
            .collect();
        let spectral = plan.forward(&samples).unwrap();
        let floor = 1e-9; // below this the f64 quadrature noise dominates
        let mut checked = 0;
        for (m, &rho) in plan.rho_nodes().iter().enumerate() {
            if rho >= 0.5 * plan.rho_max() {
                break;
            }
            let closed = 0.5 * rho.sqrt() * (-rho * rho / 4.0).exp();
            if closed.abs() < floor {
                continue;
            }
            let oracle = oracle_transform_order0(rho);
            assert_abs_diff_eq!(oracle, closed, epsilon = 1e-10 * closed.abs().max(1.0));
            let rel = (spectral[m] - oracle).abs() / oracle.abs();
            assert!(rel < 1e-6, "rho = {rho}: rel error {rel}");
            checked += 1;
        }
        assert!(checked > 10);
    }

    #[test]
    fn refining_the_grid_shrinks_the_gaussian_pair_error() {
        let mut errors = Vec::new();
        for n in [12, 24, 48] {
            let plan = HankelPlan::build(0.0, n, 10.0).unwrap();
            let samples: Vec<f64> = plan
                .s_nodes()
                .iter()
                .map(|&s| s.sqrt() * (-s * s).exp())
                .collect();
            let spectral = plan.forward(&samples).unwrap();
            // common comparison window inside the coarsest spectral grid
            let mut worst = 0.0_f64;
            for (m, &rho) in plan.rho_nodes().iter().enumerate() {
                if rho >= 2.0 {
                    break;
                }
                let closed = 0.5 * rho.sqrt() * (-rho * rho / 4.0).exp();
                worst = worst.max((spectral[m] - closed).abs() / closed.abs());
            }
            errors.push(worst);
        }
        // halving until the f64 floor takes over
        for w in errors.windows(2) {
            if w[0] > 1e-12 {
                assert!(w[1] <= 0.5 * w[0], "errors {errors:?}");
            }
        }
        assert!(errors[0] > 1e-12, "first grid already at floor: {errors:?}");
    }

    #[test]
    fn isometry_across_orders_and_sizes() {
        let mut rng = StdRng::seed_from_u64(20240517);
        for &nu in &[0.0, 0.5, 1.0, 2.5] {
            for &n in &[64usize, 128] {
                let plan = HankelPlan::build(nu, n, 10.0).unwrap();
                for _ in 0..20 {
                    let u: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
                    let v = plan.forward(&u).unwrap();
                    let nu_m = plan.norm_physical(&u).unwrap();
                    let nv = plan.norm_spectral(&v).unwrap();
                    assert!(
                        (nu_m - nv).abs() / nu_m <= 1e-8,
                        "norm deviation {} at nu={nu}, n={n}",
                        (nu_m - nv).abs() / nu_m
                    );
                    let w = plan.inverse(&v).unwrap();
                    let diff: f64 = u.iter().zip(&w).map(|(a, b)| (a - b) * (a - b)).sum();
                    let den: f64 = u.iter().map(|a| a * a).sum();
                    assert!((diff / den).sqrt() <= 1e-8);
                }
            }
        }
    }

    #[test]
    fn one_hot_spectral_vector_synthesizes_a_bessel_profile() {
        let n = 64;
        let plan = HankelPlan::build(1.0, n, 10.0).unwrap();
        let k = 12;
        let mut spectral = vec![0.0; n];
        spectral[k] = 1.0;
        let physical = plan.inverse(&spectral).unwrap();
        let rho_k = plan.rho_nodes()[k];
        let shape: Vec<f64> = plan
            .s_nodes()
            .iter()
            .map(|&s| (s * rho_k).sqrt() * bessel_jv(1.0, s * rho_k))
            .collect();
        let dot: f64 = physical.iter().zip(&shape).map(|(a, b)| a * b).sum();
        let na: f64 = physical.iter().map(|a| a * a).sum::<f64>().sqrt();
        let nb: f64 = shape.iter().map(|a| a * a).sum::<f64>().sqrt();
        assert!(dot / (na * nb) > 0.999);
    }

    #[test]
    fn transforms_are_linear() {
        let mut rng = StdRng::seed_from_u64(99);
        let n = 32;
        let plan = HankelPlan::build(2.5, n, 8.0).unwrap();
        let u: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (a, b) = (1.7, -0.4);
        let mix: Vec<f64> = u.iter().zip(&v).map(|(x, y)| a * x + b * y).collect();
        let lhs = plan.inverse(&mix).unwrap();
        let iu = plan.inverse(&u).unwrap();
        let iv = plan.inverse(&v).unwrap();
        for k in 0..n {
            assert_abs_diff_eq!(lhs[k], a * iu[k] + b * iv[k], epsilon = 1e-12);
        }
    }

    #[test]
    fn length_mismatch_is_rejected() {
        let plan = HankelPlan::build(0.0, 16, 5.0).unwrap();
        assert!(plan.forward(&vec![0.0; 15]).is_err());
        assert!(plan.inverse(&vec![0.0; 17]).is_err());
    }

    /// Discrete shadow of the diagonalization: the transform carries a
    /// second-difference approximation of `l_nu` into multiplication by
    /// `rho^2`, up to the stencil symbol error `(rho h)^2 / 12` on the
    /// occupied modes.
    #[test]
    fn multiplier_consistency() {
        let n = 256;
        for &nu in &[0.0, 1.0] {
            let plan = HankelPlan::build(nu, n, 10.0).unwrap();
            let s = plan.s_nodes();
            // supported well away from both the tip and the outer truncation
            let u: Vec<f64> = s.iter().map(|&x| (-((x - 5.0) / 1.2).powi(2)).exp()).collect();
            // nonuniform centered second difference of -u'' + (nu^2 - 1/4) u / s^2
            let mut lu = vec![0.0; n];
            for k in 1..n - 1 {
                let hm = s[k] - s[k - 1];
                let hp = s[k + 1] - s[k];
                let upp = 2.0 * (u[k - 1] / (hm * (hm + hp)) - u[k] / (hm * hp)
                    + u[k + 1] / (hp * (hm + hp)));
                lu[k] = -upp + (nu * nu - 0.25) * u[k] / (s[k] * s[k]);
            }
            let fu = plan.forward(&u).unwrap();
            let flu = plan.forward(&lu).unwrap();
            // deviation relative to the peak of the target over the window;
            // pointwise ratios are meaningless where the target vanishes
            let mut dev = 0.0_f64;
            let mut peak = 0.0_f64;
            for m in 0..n / 2 {
                let rho = plan.rho_nodes()[m];
                let target = rho * rho * fu[m];
                dev = dev.max((flu[m] - target).abs());
                peak = peak.max(target.abs());
            }
            let rel = dev / peak;
            assert!(rel <= 1e-3, "nu = {nu}: multiplier residual {rel}");
        }
    }
}
