//! Closed-form test maps with exact jets and exact monotone densities.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::SphereField;
use crate::grid::{unit_sphere_area, GridDomain, MAX_DIM, MIN_DIM};
use crate::jet::{Jet, MAX_ORDER};
use crate::taylor::{jet_from_taylor, Taylor, TaylorSpace};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OracleKind {
    /// `x ↦ (x - c)/|x - c|` into `S^{m-1}`.
    RadialProjection {
        center: Vec<f64>,
    },
    /// Radial projection of the first `m - j` coordinates; the last `j` axes are suppressed.
    CylindricalProjection {
        suppressed: usize,
    },
    Constant {
        value: Vec<f64>,
    },
    /// `x ↦ (cos a x_1, sin a x_1, 0, …)`.
    GeodesicWrap {
        frequency: f64,
    },
    /// Point singularities `(x - c_i)/|x - c_i|` embedded in the equator of
    /// `S^m`, blended into the pole `e_{m+1}` by C⁴ bumps of the given radius.
    PlantedMulti {
        centers: Vec<Vec<f64>>,
        blend_radius: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleMap {
    pub kind: OracleKind,
    pub dim: usize,
    pub target_dim: usize,
}

impl OracleMap {
    pub fn new(kind: OracleKind, dim: usize, target_dim: usize) -> Result<Self> {
        if !(MIN_DIM..=MAX_DIM).contains(&dim) {
            return Err(Error::UnsupportedDimension(dim));
        }
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        match &kind {
            OracleKind::RadialProjection { center } => {
                if target_dim + 1 != dim {
                    return bad(format!("radial_projection requires n = m - 1, got m = {dim}, n = {target_dim}"));
                }
                if center.len() != dim {
                    return bad("radial_projection center has the wrong dimension".into());
                }
            }
            OracleKind::CylindricalProjection { suppressed } => {
                if *suppressed == 0 || suppressed + 2 > dim {
                    return bad(format!("cylindrical_projection needs 1 ≤ j ≤ m - 2, got j = {suppressed}"));
                }
                if target_dim + suppressed + 1 != dim {
                    return bad(format!("cylindrical_projection with j = {suppressed} requires n = m - j - 1"));
                }
            }
            OracleKind::Constant { value } => {
                if value.len() != target_dim + 1 || value.iter().all(|v| *v == 0.0) {
                    return bad("constant value must be a nonzero vector in ℝ^{n+1}".into());
                }
            }
            OracleKind::GeodesicWrap { frequency } => {
                if target_dim < 1 || !frequency.is_finite() {
                    return bad("geodesic_wrap needs n ≥ 1 and a finite frequency".into());
                }
            }
            OracleKind::PlantedMulti { centers, blend_radius } => {
                if target_dim != dim {
                    return bad(format!("planted_multi requires n = m, got m = {dim}, n = {target_dim}"));
                }
                if centers.is_empty() || centers.iter().any(|c| c.len() != dim) {
                    return bad("planted_multi needs at least one center of dimension m".into());
                }
                if !(*blend_radius > 0.0) {
                    return bad("planted_multi blend radius must be positive".into());
                }
                for (i, a) in centers.iter().enumerate() {
                    for b in &centers[i + 1..] {
                        if dist(a, b) <= 4.0 * blend_radius {
                            return bad("planted_multi centers must be more than 4 blend radii apart".into());
                        }
                    }
                }
            }
        }
        Ok(Self { kind, dim, target_dim })
    }

    pub fn radial(dim: usize) -> Result<Self> {
        Self::new(OracleKind::RadialProjection { center: vec![0.0; dim] }, dim, dim.saturating_sub(1))
    }

    pub fn cylindrical(dim: usize, suppressed: usize) -> Result<Self> {
        Self::new(OracleKind::CylindricalProjection { suppressed }, dim, dim.saturating_sub(suppressed + 1))
    }

    pub fn constant(dim: usize, value: Vec<f64>) -> Result<Self> {
        let n = value.len().saturating_sub(1);
        Self::new(OracleKind::Constant { value }, dim, n)
    }

    pub fn geodesic_wrap(dim: usize, target_dim: usize, frequency: f64) -> Result<Self> {
        Self::new(OracleKind::GeodesicWrap { frequency }, dim, target_dim)
    }

    pub fn planted(dim: usize, centers: Vec<Vec<f64>>, blend_radius: f64) -> Result<Self> {
        Self::new(OracleKind::PlantedMulti { centers, blend_radius }, dim, dim)
    }

    pub fn comps(&self) -> usize {
        self.target_dim + 1
    }

    /// Exact value at `x`.
    pub fn evaluate(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_point(x)?;
        Ok(self.formula(x, x))
    }

    /// Exact derivatives up to `order` at `x`.
    pub fn exact_jet(&self, x: &[f64], order: usize) -> Result<Jet> {
        if !(1..=MAX_ORDER).contains(&order) {
            return Err(Error::InvalidOrder(order));
        }
        self.check_point(x)?;
        let space = TaylorSpace::new(self.dim);
        let vars = Taylor::variables(&space, x);
        let comps = self.formula(x, &vars);
        Ok(jet_from_taylor(&comps, order))
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::Geometry(format!("point has {} coordinates, expected {}", x.len(), self.dim)));
        }
        let singular = match &self.kind {
            OracleKind::RadialProjection { center } => dist(x, center) == 0.0,
            OracleKind::CylindricalProjection { suppressed } => x[..self.dim - suppressed].iter().all(|v| *v == 0.0),
            OracleKind::PlantedMulti { centers, .. } => centers.iter().any(|c| dist(x, c) == 0.0),
            _ => false,
        };
        if singular {
            Err(Error::SingularLocus(x.to_vec()))
        } else {
            Ok(())
        }
    }

    /// The map in terms of generic arithmetic; `at` gives the evaluation point
    /// for branch decisions (bump supports).
    fn formula<T: Num>(&self, at: &[f64], x: &[T]) -> Vec<T> {
        let zero = x[0].cst(0.0);
        match &self.kind {
            OracleKind::RadialProjection { center } => {
                let y: Vec<T> = x.iter().zip(center).map(|(v, c)| v.add_c(-c)).collect();
                let inv = sum_sq(&y).sqrt().recip();
                y.iter().map(|v| v.mul(&inv)).collect()
            }
            OracleKind::CylindricalProjection { suppressed } => {
                let y = &x[..self.dim - suppressed];
                let inv = sum_sq(y).sqrt().recip();
                y.iter().map(|v| v.mul(&inv)).collect()
            }
            OracleKind::Constant { value } => {
                let n = value.iter().map(|v| v * v).sum::<f64>().sqrt();
                value.iter().map(|v| x[0].cst(v / n)).collect()
            }
            OracleKind::GeodesicWrap { frequency } => {
                let t = x[0].scale(*frequency);
                let mut out = vec![t.cos(), t.sin()];
                out.resize(self.comps(), zero);
                out
            }
            OracleKind::PlantedMulti { centers, blend_radius } => {
                let b = *blend_radius;
                let mut v = vec![zero.clone(); self.comps()];
                let mut weight_sum = zero.clone();
                for c in centers {
                    let rho_val = dist(at, c);
                    if rho_val >= 2.0 * b {
                        continue;
                    }
                    let y: Vec<T> = x.iter().zip(c).map(|(xi, ci)| xi.add_c(-ci)).collect();
                    let rho = sum_sq(&y).sqrt();
                    let phi = if rho_val <= b {
                        rho.cst(1.0)
                    } else {
                        let t = rho.add_c(-b).scale(1.0 / b);
                        smoothstep4(&t).scale(-1.0).add_c(1.0)
                    };
                    let inv = rho.recip();
                    for (vi, yi) in v.iter_mut().zip(&y) {
                        *vi = vi.add(&yi.mul(&inv).mul(&phi));
                    }
                    weight_sum = weight_sum.add(&phi);
                }
                let last = self.dim;
                v[last] = weight_sum.scale(-1.0).add_c(1.0);
                let inv = sum_sq(&v).sqrt().recip();
                v.iter().map(|vi| vi.mul(&inv)).collect()
            }
        }
    }

    /// Samples the map at every node.
    pub fn rasterize(&self, domain: &GridDomain) -> Result<SphereField> {
        if domain.dim() != self.dim {
            return Err(Error::InvalidParameter(format!(
                "domain dimension {} does not match map dimension {}",
                domain.dim(),
                self.dim
            )));
        }
        SphereField::from_fn(domain.clone(), self.target_dim, |x, out| {
            self.check_point(x)?;
            out.copy_from_slice(&self.formula(x, x));
            Ok(())
        })
    }

    /// Monotone density `Θ(center, r)` by exact radial quadrature.
    pub fn exact_theta(&self, center: &[f64], r: f64) -> Result<f64> {
        if !(r > 0.0) {
            return Err(Error::InvalidParameter("radius must be positive".into()));
        }
        let m = self.dim;
        let omega = unit_sphere_area(m);
        let mf = m as f64;
        match &self.kind {
            OracleKind::Constant { .. } => Ok(0.0),
            OracleKind::RadialProjection { center: c } => {
                if dist(center, c) > 1e-12 {
                    return Err(Error::Unsupported(
                        "radial_projection has closed-form radial structure only about its center".into(),
                    ));
                }
                if m < 5 {
                    return Err(Error::Unsupported(format!("Θ of x/|x| diverges for m = {m} < 5")));
                }
                // isotropic: angular means equal point values on the e_1 ray
                let ray = |rho: f64| {
                    let mut p = c.clone();
                    p[0] += rho;
                    p
                };
                let (nodes, weights) = gauss_legendre(32);
                let mut ball = 0.0;
                for (t, w) in nodes.iter().zip(&weights) {
                    let rho = 0.5 * r * (t + 1.0);
                    let lap = self.exact_jet(&ray(rho), 2)?.laplacian();
                    let a: f64 = lap.iter().map(|v| v * v).sum();
                    ball += 0.5 * r * w * a * omega * rho.powi(m as i32 - 1);
                }
                let y = ray(r);
                let jet = self.exact_jet(&y, 2)?;
                let rel: Vec<f64> = y.iter().zip(c).map(|(a, b)| a - b).collect();
                let boundary = boundary_integrand(&jet, &rel);
                Ok(r.powf(4.0 - mf) * ball + r.powf(3.0 - mf) * omega * r.powi(m as i32 - 1) * boundary)
            }
            OracleKind::GeodesicWrap { frequency } => {
                // |Δf|² = a⁴, |∇f|² = a², ∂_X|∇f|² = 0, angular mean of |∂_X f|²/r² = a²/m
                let a2 = frequency * frequency;
                let (nodes, weights) = gauss_legendre(32);
                let ball: f64 = nodes
                    .iter()
                    .zip(&weights)
                    .map(|(t, w)| {
                        let rho = 0.5 * r * (t + 1.0);
                        0.5 * r * w * a2 * a2 * omega * rho.powi(m as i32 - 1)
                    })
                    .sum();
                let boundary = 4.0 * a2 * (1.0 - 1.0 / mf);
                Ok(r.powf(4.0 - mf) * ball + r.powf(3.0 - mf) * omega * r.powi(m as i32 - 1) * boundary)
            }
            _ => Err(Error::Unsupported(format!("no closed-form Θ for {:?}", self.kind))),
        }
    }
}

/// `∂_X|∇f|² + 4|∇f|² − 4|∂_X f|²/|X|²` at a point with displacement `X` from the center.
pub fn boundary_integrand(jet: &Jet, rel: &[f64]) -> f64 {
    let m = jet.dim();
    let comps = jet.comps();
    let r2: f64 = rel.iter().map(|v| v * v).sum();
    let mut grad_sq = 0.0;
    let mut dx_grad_sq = 0.0;
    let mut dxf = vec![0.0; comps];
    for j in 0..m {
        let dj = jet.component(&[j]);
        grad_sq += dj.iter().map(|v| v * v).sum::<f64>();
        for c in 0..comps {
            dxf[c] += rel[j] * dj[c];
        }
        for i in 0..m {
            let dij = jet.component(&[i, j]);
            dx_grad_sq += 2.0 * rel[i] * dj.iter().zip(dij).map(|(a, b)| a * b).sum::<f64>();
        }
    }
    let dxf_sq: f64 = dxf.iter().map(|v| v * v).sum();
    dx_grad_sq + 4.0 * grad_sq - 4.0 * dxf_sq / r2
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = x;
        weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// C⁴ smoothstep `t⁵(126 − 420t + 540t² − 315t³ + 70t⁴)` on `[0, 1]`.
fn smoothstep4<T: Num>(t: &T) -> T {
    let poly = t.scale(70.0).add_c(-315.0).mul(t).add_c(540.0).mul(t).add_c(-420.0).mul(t).add_c(126.0);
    let t2 = t.mul(t);
    let t5 = t2.mul(&t2).mul(t);
    t5.mul(&poly)
}

fn sum_sq<T: Num>(xs: &[T]) -> T {
    let mut acc = xs[0].mul(&xs[0]);
    for x in &xs[1..] {
        acc = acc.add(&x.mul(x));
    }
    acc
}

/// Arithmetic shared by plain evaluation and Taylor-expanded evaluation.
trait Num: Clone {
    fn cst(&self, c: f64) -> Self;
    fn add(&self, o: &Self) -> Self;
    fn add_c(&self, c: f64) -> Self;
    fn mul(&self, o: &Self) -> Self;
    fn scale(&self, s: f64) -> Self;
    fn recip(&self) -> Self;
    fn sqrt(&self) -> Self;
    fn sin(&self) -> Self;
    fn cos(&self) -> Self;
}

impl Num for f64 {
    fn cst(&self, c: f64) -> Self {
        c
    }
    fn add(&self, o: &Self) -> Self {
        self + o
    }
    fn add_c(&self, c: f64) -> Self {
        self + c
    }
    fn mul(&self, o: &Self) -> Self {
        self * o
    }
    fn scale(&self, s: f64) -> Self {
        self * s
    }
    fn recip(&self) -> Self {
        1.0 / self
    }
    fn sqrt(&self) -> Self {
        f64::sqrt(*self)
    }
    fn sin(&self) -> Self {
        f64::sin(*self)
    }
    fn cos(&self) -> Self {
        f64::cos(*self)
    }
}

impl Num for Taylor {
    fn cst(&self, c: f64) -> Self {
        self.scale(0.0).add_c(c)
    }
    fn add(&self, o: &Self) -> Self {
        Taylor::add(self, o)
    }
    fn add_c(&self, c: f64) -> Self {
        Taylor::add_const(self, c)
    }
    fn mul(&self, o: &Self) -> Self {
        Taylor::mul(self, o)
    }
    fn scale(&self, s: f64) -> Self {
        Taylor::scale(self, s)
    }
    fn recip(&self) -> Self {
        Taylor::recip(self)
    }
    fn sqrt(&self) -> Self {
        Taylor::sqrt(self)
    }
    fn sin(&self) -> Self {
        Taylor::sin(self)
    }
    fn cos(&self) -> Self {
        Taylor::cos(self)
    }
}
