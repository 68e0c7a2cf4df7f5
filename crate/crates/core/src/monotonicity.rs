//! The monotone density `Θ_f(x, r)` and the monotone difference `W_{s,t}`
//! computed by two independent routes.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::SphereField;
use crate::grid::GridDomain;
use crate::jet::{gradient_centered, hessian_centered};
use crate::quadrature::RadialWeights;

/// Default tolerance on negative profile increments, as a fraction of `Λ`.
pub const DEFAULT_VIOLATION_FRACTION: f64 = 0.01;

/// Centered first and second derivatives at one node.
struct LocalDerivs {
    m: usize,
    comps: usize,
    grad: Vec<f64>,
    hess: Vec<f64>,
}

impl LocalDerivs {
    fn at(field: &SphereField, lin: usize, strides: &[usize], h: f64) -> Self {
        let m = strides.len();
        let comps = field.comps();
        let mut grad = vec![0.0; m * comps];
        let mut hess = vec![0.0; m * (m + 1) / 2 * comps];
        gradient_centered(field, lin, strides, 0.5 / h, &mut grad);
        hessian_centered(field, lin, strides, h, &mut hess);
        Self { m, comps, grad, hess }
    }

    fn d1(&self, j: usize) -> &[f64] {
        &self.grad[j * self.comps..(j + 1) * self.comps]
    }

    fn d2(&self, i: usize, j: usize) -> &[f64] {
        let (a, b) = if i <= j { (i, j) } else { (j, i) };
        // tuples (a, b), a ≤ b, in lexicographic order
        let t = a * self.m - a * a.saturating_sub(1) / 2 + (b - a);
        &self.hess[t * self.comps..(t + 1) * self.comps]
    }

    fn laplacian_sq(&self) -> f64 {
        (0..self.comps).map(|c| (0..self.m).map(|a| self.d2(a, a)[c]).sum::<f64>().powi(2)).sum()
    }

    /// `∂_X f` with `X = y − x`.
    fn dx(&self, rel: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.comps];
        for (i, &xi) in rel.iter().enumerate() {
            for (o, d) in out.iter_mut().zip(self.d1(i)) {
                *o += xi * d;
            }
        }
        out
    }

    /// `∂_X|∇f|² + 4|∇f|² − 4|∂_X f|²/|X|²`.
    fn boundary(&self, rel: &[f64]) -> f64 {
        let r2: f64 = rel.iter().map(|v| v * v).sum();
        let mut grad_sq = 0.0;
        let mut dx_grad_sq = 0.0;
        for j in 0..self.m {
            let dj = self.d1(j);
            grad_sq += dj.iter().map(|v| v * v).sum::<f64>();
            for (i, &xi) in rel.iter().enumerate() {
                dx_grad_sq += 2.0 * xi * dj.iter().zip(self.d2(i, j)).map(|(a, b)| a * b).sum::<f64>();
            }
        }
        let dxf: f64 = self.dx(rel).iter().map(|v| v * v).sum();
        dx_grad_sq + 4.0 * grad_sq - 4.0 * dxf / r2
    }

    /// `|∇∂_X f|²/ρ^{m−2} + (m−2)|∂_X f|²/ρ^m`.
    fn annulus(&self, rel: &[f64]) -> f64 {
        let rho = rel.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut grad_dx = 0.0;
        for j in 0..self.m {
            for c in 0..self.comps {
                let mut g = self.d1(j)[c];
                for (i, &xi) in rel.iter().enumerate() {
                    g += xi * self.d2(i, j)[c];
                }
                grad_dx += g * g;
            }
        }
        let dxf: f64 = self.dx(rel).iter().map(|v| v * v).sum();
        let m = self.m as i32;
        grad_dx / rho.powi(m - 2) + (m - 2) as f64 * dxf / rho.powi(m)
    }
}

fn rel(domain: &GridDomain, lin: usize, x: &[f64]) -> Vec<f64> {
    domain.position(lin).iter().zip(x).map(|(y, c)| y - c).collect()
}

fn check_theta(domain: &GridDomain, x: &[f64], r: f64) -> Result<()> {
    let h = domain.spacing();
    if x.len() != domain.dim() {
        return Err(Error::Geometry(format!("center has {} coordinates, expected {}", x.len(), domain.dim())));
    }
    if r < 4.0 * h * (1.0 - 1e-12) {
        return Err(Error::Geometry(format!("radius {r} below 4h = {}", 4.0 * h)));
    }
    if !domain.contains_ball(x, r + h, 0.0) {
        return Err(Error::Geometry(format!("ball B_{}({x:?}) not contained in the domain", r + h)));
    }
    Ok(())
}

/// `Θ_f(x, r) = r^{4−m}∫_{B_r}|Δf|² + r^{3−m}∫_{∂B_r}(∂_X|∇f|² + 4|∇f|² − 4|∂_X f|²/|X|²)`.
pub fn theta(field: &SphereField, x: &[f64], r: f64) -> Result<f64> {
    let d = field.domain();
    check_theta(d, x, r)?;
    let strides = d.strides();
    let h = d.spacing();
    let m = d.dim() as f64;
    let ball = RadialWeights::ball(d, x, r).integrate(d, |lin| LocalDerivs::at(field, lin, &strides, h).laplacian_sq());
    let shell = RadialWeights::shell(d, x, r)
        .integrate(d, |lin| LocalDerivs::at(field, lin, &strides, h).boundary(&rel(d, lin, x)));
    Ok(r.powf(4.0 - m) * ball + r.powf(3.0 - m) * shell)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonotoneDiff {
    pub center: Vec<f64>,
    pub inner: f64,
    pub outer: f64,
    /// `Θ(t) − Θ(s)`.
    pub w_theta: f64,
    /// Annulus integral; its inner radius is `max(s, 2h)`.
    pub w_annulus: f64,
    pub inner_cutoff: f64,
}

/// `W_{s,t}(x, f)` as a difference of densities and as an annulus integral.
pub fn monotone_diff(field: &SphereField, x: &[f64], s: f64, t: f64) -> Result<MonotoneDiff> {
    let d = field.domain();
    let w_annulus = w_annulus(field, x, s, t)?;
    let w_theta = theta(field, x, t)? - theta(field, x, s)?;
    let cutoff = s.max(2.0 * d.spacing());
    Ok(MonotoneDiff { center: x.to_vec(), inner: s, outer: t, w_theta, w_annulus, inner_cutoff: cutoff })
}

/// Annulus route of `W_{s,t}` alone, `4∫_{B_t∖B_s}(|∇∂_X f|²/ρ^{m−2} + (m−2)|∂_X f|²/ρ^m)`.
pub fn w_annulus(field: &SphereField, x: &[f64], s: f64, t: f64) -> Result<f64> {
    let d = field.domain();
    if !(s < t) {
        return Err(Error::Geometry(format!("inner radius {s} must be below outer radius {t}")));
    }
    check_theta(d, x, s)?;
    check_theta(d, x, t)?;
    let strides = d.strides();
    let h = d.spacing();
    let cutoff = s.max(2.0 * h);
    Ok(4.0
        * RadialWeights::annulus(d, x, cutoff, t)
            .integrate(d, |lin| LocalDerivs::at(field, lin, &strides, h).annulus(&rel(d, lin, x))))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityProfile {
    pub center: Vec<f64>,
    pub scales: Vec<f64>,
    pub theta: Vec<f64>,
    pub lambda_bound: f64,
    /// Allowed size of negative increments.
    pub tolerance: f64,
}

impl DensityProfile {
    /// Size of the most negative increment `θ[i+1] − θ[i]` (0 if non-decreasing).
    pub fn max_violation(&self) -> f64 {
        self.theta.windows(2).map(|w| w[0] - w[1]).fold(0.0, f64::max)
    }

    pub fn is_monotone(&self) -> bool {
        self.max_violation() <= self.tolerance
    }

    pub fn within_bound(&self) -> bool {
        self.theta.iter().all(|t| *t <= self.lambda_bound + self.tolerance)
    }
}

/// `Θ` over an ascending ladder of radii. Without an explicit `lambda`, the
/// bound is the profile's own maximum.
pub fn density_profile(field: &SphereField, x: &[f64], scales: &[f64], lambda: Option<f64>) -> Result<DensityProfile> {
    if scales.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Geometry("scale ladder must be strictly ascending".into()));
    }
    let theta = scales.par_iter().map(|&r| theta(field, x, r)).collect::<Result<Vec<_>>>()?;
    let lambda_bound = lambda.unwrap_or_else(|| theta.iter().copied().fold(0.0, f64::max));
    Ok(DensityProfile {
        center: x.to_vec(),
        scales: scales.to_vec(),
        theta,
        lambda_bound,
        tolerance: DEFAULT_VIOLATION_FRACTION * lambda_bound,
    })
}

/// `Λ = max Θ(x, r)` over the given centers and radii.
pub fn lambda_bound(field: &SphereField, centers: &[Vec<f64>], scales: &[f64]) -> Result<f64> {
    let pairs: Vec<(&Vec<f64>, f64)> = centers.iter().flat_map(|c| scales.iter().map(move |&r| (c, r))).collect();
    let vals = pairs.par_iter().map(|(c, r)| theta(field, c, *r)).collect::<Result<Vec<_>>>()?;
    Ok(vals.into_iter().fold(0.0, f64::max))
}
