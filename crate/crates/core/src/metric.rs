//! Bergman metric: complex Hessian of `log K` on the diagonal.

use crate::certificates::{j_upper_bound, DomainTag};
use crate::error::{LabError, Result};
use crate::kernel::SlicingKernel;
use num_complex::Complex64;
use serde::Serialize;

/// Relative finite-difference step.
pub const FD_STEP: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricForm {
    pub g11: f64,
    pub g22: f64,
    pub g12: Complex64,
    pub z_abs: f64,
    pub v: f64,
}

impl MetricForm {
    pub fn is_positive_definite(&self) -> bool {
        self.g11 > 0.0 && self.g22 > 0.0 && self.g11 * self.g22 - self.g12.norm_sqr() > 0.0
    }
}

/// `g11 |xi1|^2 + 2 Re(g12 xi1 conj(xi2)) + g22 |xi2|^2`.
pub fn metric_eval(form: &MetricForm, xi: (Complex64, Complex64)) -> f64 {
    form.g11 * xi.0.norm_sqr() + 2.0 * (form.g12 * xi.0 * xi.1.conj()).re + form.g22 * xi.1.norm_sqr()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum MetricMethod {
    /// Slice derivatives; only at `z = 0`.
    Analytic,
    FiniteDifference,
}

/// At `z = 0` the metric comes from slice derivatives; elsewhere from
/// Richardson-refined central differences of `log K` in the four real
/// coordinates.
pub fn metric_reference(kernel: &SlicingKernel, z_abs: f64, v: f64) -> Result<MetricForm> {
    if z_abs == 0.0 {
        metric_with(kernel, z_abs, v, MetricMethod::Analytic)
    } else {
        metric_with(kernel, z_abs, v, MetricMethod::FiniteDifference)
    }
}

pub fn metric_with(kernel: &SlicingKernel, z_abs: f64, v: f64, method: MetricMethod) -> Result<MetricForm> {
    let form = match method {
        MetricMethod::Analytic => {
            if z_abs != 0.0 {
                return Err(LabError::Precondition("analytic metric path needs z = 0".into()));
            }
            let s = kernel.derivative_slices(0.0, v)?;
            let i0 = s.i0.value;
            MetricForm {
                g11: s.i1.value / i0,
                g22: 0.25 * (s.d2i0_dv2.value * i0 - s.di0_dv.value.powi(2)) / (i0 * i0),
                g12: Complex64::new(0.0, 0.0),
                z_abs,
                v,
            }
        }
        MetricMethod::FiniteDifference => finite_difference(kernel, z_abs, v)?,
    };
    if !form.is_positive_definite() {
        return Err(LabError::Numerical(format!(
            "metric at |z| = {z_abs}, v = {v} is not positive definite: {form:?}"
        )));
    }
    Ok(form)
}

fn finite_difference(kernel: &SlicingKernel, z_abs: f64, v: f64) -> Result<MetricForm> {
    let profile = kernel.profile();
    let hv = FD_STEP * v;
    let hz = FD_STEP * z_abs.max(profile.f_inverse(v)?);
    // log K as a function of (x, y, u, v) with z = x + iy, w = u + iv
    let log_k = |p: [f64; 4]| -> Result<f64> { Ok(kernel.kernel_diag(p[0].hypot(p[1]), p[3])?.value.ln()) };
    let base = [z_abs, 0.0, 0.0, v];
    let steps = [hz, hz, hv, hv];

    let second = |a: usize, b: usize, scale: f64| -> Result<f64> {
        let at = |da: f64, db: f64| {
            let mut p = base;
            p[a] += da * steps[a] * scale;
            p[b] += db * steps[b] * scale;
            log_k(p)
        };
        if a == b {
            let h = steps[a] * scale;
            Ok((at(1.0, 0.0)? - 2.0 * log_k(base)? + at(-1.0, 0.0)?) / (h * h))
        } else {
            let (ha, hb) = (steps[a] * scale, steps[b] * scale);
            Ok((at(1.0, 1.0)? - at(1.0, -1.0)? - at(-1.0, 1.0)? + at(-1.0, -1.0)?) / (4.0 * ha * hb))
        }
    };
    let richardson = |a: usize, b: usize| -> Result<f64> {
        let coarse = second(a, b, 1.0)?;
        let fine = second(a, b, 0.5)?;
        Ok((4.0 * fine - coarse) / 3.0)
    };
    let (lxx, lyy, luu, lvv) = (
        richardson(0, 0)?,
        richardson(1, 1)?,
        richardson(2, 2)?,
        richardson(3, 3)?,
    );
    let (lxu, lyv, lxv, lyu) = (
        richardson(0, 2)?,
        richardson(1, 3)?,
        richardson(0, 3)?,
        richardson(1, 2)?,
    );
    Ok(MetricForm {
        g11: 0.25 * (lxx + lyy),
        g22: 0.25 * (luu + lvv),
        g12: Complex64::new(0.25 * (lxu + lyv), 0.25 * (lxv - lyu)),
        z_abs,
        v,
    })
}

/// Bergman metric of `D(0, rho1) x D(0, rho2)` at its center.
pub fn bidisc_metric_center(rho1: f64, rho2: f64, xi: (Complex64, Complex64)) -> Result<f64> {
    if !(rho1 > 0.0) || !(rho2 > 0.0) {
        return Err(LabError::domain("bidisc radii must be positive", rho1.min(rho2), 0.0));
    }
    Ok(2.0 / (rho1 * rho1) * xi.0.norm_sqr() + 2.0 / (rho2 * rho2) * xi.1.norm_sqr())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricLowerCertificate {
    pub lower_bound: f64,
    pub j_case: u8,
}

/// `1 / (k_upper * J_upper)`, a lower bound for the squared metric length of
/// `xi` at `(z, it)` given an upper bound `k_upper` for the kernel there.
pub fn metric_lower_certificate(
    profile: &crate::profile::RadialProfile,
    z: Complex64,
    t: f64,
    xi: (Complex64, Complex64),
    k_upper: f64,
    tag: DomainTag,
) -> Result<MetricLowerCertificate> {
    if !(k_upper > 0.0) {
        return Err(LabError::domain("kernel upper bound must be positive", k_upper, 0.0));
    }
    let j = j_upper_bound(profile, z, t, xi, tag)?;
    Ok(MetricLowerCertificate {
        lower_bound: 1.0 / (k_upper * j.j_ub),
        j_case: j.case,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::SlicingConfig;
    use crate::profile::RadialProfile;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn siegel_metric_at_origin() {
        let k = SlicingKernel::new(RadialProfile::quadratic_pure(), SlicingConfig::default());
        for &v in &[0.05, 0.3, 1.0] {
            let m = metric_reference(&k, 0.0, v).unwrap();
            assert!(rel(m.g11, 3.0 / v) < 1e-8);
            assert!(rel(m.g22, 0.75 / (v * v)) < 1e-8);
            let fd = metric_with(&k, 0.0, v, MetricMethod::FiniteDifference).unwrap();
            assert!(rel(fd.g11, m.g11) < 1e-4, "{fd:?}");
            assert!(rel(fd.g22, m.g22) < 1e-4, "{fd:?}");
        }
    }

    #[test]
    fn siegel_metric_off_origin() {
        // Hessian of -3 log(v - |z|^2): g11 = 3v/h^2, g22 = 3/(4h^2), |g12| = 3|z|/(2h^2)
        let k = SlicingKernel::new(RadialProfile::quadratic_pure(), SlicingConfig::with_k_max(400));
        let (r, v) = (0.2, 0.5);
        let h: f64 = v - r * r;
        let m = metric_reference(&k, r, v).unwrap();
        assert!(rel(m.g11, 3.0 * v / (h * h)) < 1e-4, "{m:?}");
        assert!(rel(m.g22, 0.75 / (h * h)) < 1e-4, "{m:?}");
        assert!(rel(m.g12.norm(), 1.5 * r / (h * h)) < 1e-4, "{m:?}");
    }

    #[test]
    fn metric_eval_basics() {
        let m = MetricForm {
            g11: 2.0,
            g22: 5.0,
            g12: c(0.0, 0.0),
            z_abs: 0.0,
            v: 1.0,
        };
        assert_eq!(metric_eval(&m, (c(1.0, 0.0), c(0.0, 0.0))), 2.0);
        assert_eq!(metric_eval(&m, (c(0.0, 0.0), c(1.0, 0.0))), 5.0);
        assert_eq!(metric_eval(&m, (c(1.0, 0.0), c(1.0, 0.0))), 7.0);
    }

    #[test]
    fn bidisc_metric() {
        assert_eq!(bidisc_metric_center(1.0, 1.0, (c(1.0, 0.0), c(0.0, 0.0))).unwrap(), 2.0);
        let a = bidisc_metric_center(0.1, 0.3, (c(1.0, 0.0), c(0.0, 0.0))).unwrap();
        let b = bidisc_metric_center(0.2, 0.3, (c(1.0, 0.0), c(0.0, 0.0))).unwrap();
        assert!(rel(a, 4.0 * b) < 1e-14);
    }
}
