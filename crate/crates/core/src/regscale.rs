//! Regularity scale `r_f`, its pointwise certificate and the L^p functionals
//! of `r_f^{-1}` and of the derivatives it controls.
//!
//! With `ι(y) = max_ℓ |∇^ℓ f(y)|^{1/ℓ}` the condition
//! `max_ℓ ρ^ℓ |∇^ℓ f(y)| ≤ 1` for all nodes `y` in the open ball `B_ρ(x)` reads
//! `ρ · max_{B_ρ(x)} ι ≤ 1`. The left side is non-decreasing in `ρ`, so the
//! largest admissible `ρ` is found exactly by walking nodes in order of
//! distance from `x`.

use std::sync::atomic::{AtomicU64, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::SphereField;
use crate::grid::GridDomain;
use crate::jet::{jet_at, JetStencils, MAX_ORDER};
use crate::sum::pairwise_sum;

/// Relative slack of the pointwise certificate (stencil error allowance).
pub const CERTIFICATE_TOL: f64 = 0.05;
/// Caps stay this many layers inside the box, so every jet uses free nodes only.
pub const CAP_MARGIN_LAYERS: f64 = 4.0;

const UNSET: u64 = u64::MAX;
const SEARCH_GROWTH: f64 = 1.25;

/// Regularity-scale evaluator with a lazily filled per-node cache of `ι`.
pub struct RegScale<'a> {
    field: &'a SphereField,
    stencils: JetStencils,
    iota: Vec<AtomicU64>,
}

impl<'a> RegScale<'a> {
    pub fn new(field: &'a SphereField) -> Self {
        let n = field.domain().node_count();
        Self {
            field,
            stencils: JetStencils::new(field.domain()),
            iota: (0..n).map(|_| AtomicU64::new(UNSET)).collect(),
        }
    }

    pub fn domain(&self) -> &GridDomain {
        self.field.domain()
    }

    /// `[|∇f|, |∇²f|, |∇³f|, |∇⁴f|]` at a node at least two layers inside.
    pub fn norms(&self, lin: usize) -> [f64; MAX_ORDER] {
        self.stencils.norms_at(self.field, lin)
    }

    /// `max_ℓ |∇^ℓ f|^{1/ℓ}` at a node.
    pub fn iota(&self, lin: usize) -> f64 {
        let bits = self.iota[lin].load(Ordering::Relaxed);
        if bits != UNSET {
            return f64::from_bits(bits);
        }
        let v = iota_of(&self.norms(lin));
        self.iota[lin].store(v.to_bits(), Ordering::Relaxed);
        v
    }

    /// Distance from `x` to the boundary of the box shrunk by four layers (≥ 0).
    pub fn cap(&self, x: &[f64]) -> f64 {
        let d = self.domain();
        d.distance_to_boundary(x, CAP_MARGIN_LAYERS * d.spacing()).max(0.0)
    }

    /// Largest admissible `ρ ≤ cap(x)` (half-open ball), or 0 if `ρ = h` already fails.
    pub fn reg_scale(&self, x: &[f64]) -> f64 {
        self.reg_scale_upto(x, f64::INFINITY).unwrap_or(f64::INFINITY)
    }

    /// `r_f(x)` if it is at most `ceiling`, `None` otherwise. The search never
    /// looks further than `ceiling`, so this is cheap in smooth regions.
    pub fn reg_scale_upto(&self, x: &[f64], ceiling: f64) -> Option<f64> {
        let h = self.domain().spacing();
        let cap = self.cap(x);
        if cap <= 0.0 {
            return Some(0.0);
        }
        let stop = cap.min(ceiling.max(h) * (1.0 + 1e-9));
        let mut radius = (2.0 * h).min(stop);
        let sup = loop {
            if let Some(s) = self.sup_within(x, radius) {
                break s;
            }
            if radius >= stop {
                if stop < cap {
                    return None;
                }
                break cap;
            }
            // the last search ball dominates the cost, so grow slowly
            radius = (SEARCH_GROWTH * radius).min(stop);
        };
        // sup often equals a node distance of exactly h, up to rounding
        let r = if sup < h * (1.0 - 1e-9) { 0.0 } else { sup };
        (r <= ceiling).then_some(r)
    }

    /// First failure radius among nodes closer than `radius`, if any.
    fn sup_within(&self, x: &[f64], radius: f64) -> Option<f64> {
        let d = self.domain();
        let mut near: Vec<(f64, usize)> = Vec::new();
        if let Some(bb) = d.bounding_box(x, radius) {
            bb.for_each(d, |idx, lin| {
                let dist = idx.iter().enumerate().map(|(a, &i)| (d.coord(a, i) - x[a]).powi(2)).sum::<f64>().sqrt();
                if dist < radius {
                    near.push((dist, lin));
                }
            });
        }
        near.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut running = 0.0f64;
        for (i, &(di, lin)) in near.iter().enumerate() {
            running = running.max(self.iota(lin));
            let next = near.get(i + 1).map_or(radius, |n| n.0);
            // for ρ ∈ (d_i, d_{i+1}] the open ball holds nodes 0..=i
            if running * next > 1.0 {
                let limit = 1.0 / running;
                return Some(if limit > di { limit } else { di });
            }
        }
        None
    }

    /// Re-checks `ρ^ℓ |∇^ℓ f(y)| ≤ 1 + tol` for all nodes of `B_ρ(x)` with
    /// independently assembled finite-difference jets.
    pub fn certificate_holds(&self, x: &[f64], rho: f64, tol: f64) -> Result<bool> {
        if rho <= 0.0 {
            return Ok(true);
        }
        let d = self.domain();
        let Some(bb) = d.bounding_box(x, rho) else { return Ok(true) };
        let mut nodes = Vec::new();
        bb.for_each(d, |idx, lin| {
            let dist2: f64 = idx.iter().enumerate().map(|(a, &i)| (d.coord(a, i) - x[a]).powi(2)).sum();
            // ρ is often exactly a node distance; that node is outside the open ball
            if dist2 < rho * rho * (1.0 - 1e-12) {
                nodes.push(lin);
            }
        });
        for lin in nodes {
            let jet = jet_at(self.field, lin, MAX_ORDER)?;
            for l in 1..=MAX_ORDER {
                if rho.powi(l as i32) * jet.norm(l) > 1.0 + tol {
                    return Ok(false);
                }
            }
        }
        Ok(true)
    }

    pub fn field_at(&self, points: &[Vec<f64>]) -> RegScaleField {
        let r_f = points.par_iter().map(|x| self.reg_scale(x)).collect();
        let cap = points.iter().map(|x| self.cap(x)).collect();
        RegScaleField { points: points.to_vec(), r_f, cap, tol: CERTIFICATE_TOL }
    }

    /// `r_f` at region nodes, in region order.
    pub fn at_nodes(&self, nodes: &[usize]) -> Vec<f64> {
        let d = self.domain();
        nodes.par_iter().map(|&lin| self.reg_scale(&d.position(lin))).collect()
    }

    /// `h^m Σ_x max(r_f(x), h/4)^{−p}` over region nodes.
    pub fn lp_reciprocal(&self, p: f64, region: &[usize]) -> Result<LpReport> {
        check_p(p)?;
        Ok(lp_reciprocal_of(&self.at_nodes(region), p, self.domain()))
    }

    /// `h^m Σ_x Σ_ℓ |∇^ℓ f(x)|^{p/ℓ}` over region nodes.
    pub fn lp_derivative_sum(&self, p: f64, region: &[usize]) -> Result<f64> {
        check_p(p)?;
        let terms: Vec<f64> = region.par_iter().map(|&lin| derivative_sum(&self.norms(lin), p)).collect();
        Ok(pairwise_sum(&terms) * self.domain().cell_volume())
    }
}

fn check_p(p: f64) -> Result<()> {
    if !(p >= 1.0) {
        return Err(Error::InvalidParameter(format!("p = {p} must be at least 1")));
    }
    Ok(())
}

pub fn iota_of(norms: &[f64; MAX_ORDER]) -> f64 {
    norms.iter().enumerate().map(|(l, n)| n.powf(1.0 / (l + 1) as f64)).fold(0.0, f64::max)
}

/// `Σ_ℓ |∇^ℓ f|^{p/ℓ}`.
pub fn derivative_sum(norms: &[f64; MAX_ORDER], p: f64) -> f64 {
    norms.iter().enumerate().map(|(l, n)| n.powf(p / (l + 1) as f64)).sum()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegScaleField {
    pub points: Vec<Vec<f64>>,
    pub r_f: Vec<f64>,
    pub cap: Vec<f64>,
    pub tol: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LpReport {
    pub p: f64,
    pub value: f64,
    /// `h/4`.
    pub floor: f64,
    pub floored_nodes: usize,
    /// Part of `value` contributed by floored nodes.
    pub floor_contribution: f64,
}

pub fn lp_reciprocal_of(r_f: &[f64], p: f64, domain: &GridDomain) -> LpReport {
    let floor = 0.25 * domain.spacing();
    let terms: Vec<f64> = r_f.iter().map(|&r| r.max(floor).powf(-p)).collect();
    let floored: Vec<f64> = r_f.iter().filter(|&&r| r < floor).map(|_| floor.powf(-p)).collect();
    let hm = domain.cell_volume();
    LpReport {
        p,
        value: pairwise_sum(&terms) * hm,
        floor,
        floored_nodes: floored.len(),
        floor_contribution: pairwise_sum(&floored) * hm,
    }
}

/// Single-point convenience wrapper.
pub fn reg_scale(field: &SphereField, x: &[f64]) -> f64 {
    RegScale::new(field).reg_scale(x)
}

/// Nodes of the open ball `B_radius(center)`; the ball must keep four layers from the faces.
pub fn ball_region(domain: &GridDomain, center: &[f64], radius: f64) -> Result<Vec<usize>> {
    if !domain.contains_ball(center, radius, CAP_MARGIN_LAYERS * domain.spacing()) {
        return Err(Error::Geometry(format!("region B_{radius}({center:?}) leaves the interior collar")));
    }
    let mut out = Vec::new();
    if let Some(bb) = domain.bounding_box(center, radius) {
        bb.for_each(domain, |idx, lin| {
            let d2: f64 = idx.iter().enumerate().map(|(a, &i)| (domain.coord(a, i) - center[a]).powi(2)).sum();
            if d2 < radius * radius {
                out.push(lin);
            }
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::OracleMap;

    #[test]
    fn constant_field_reaches_cap() {
        let d = GridDomain::centered(3, 20, 1.0).unwrap();
        let f = SphereField::constant(d, &[0.0, 0.0, 1.0]).unwrap();
        let rs = RegScale::new(&f);
        for x in [[0.0, 0.0, 0.0], [0.3, -0.1, 0.2]] {
            assert_eq!(rs.reg_scale(&x), rs.cap(&x));
        }
        assert_eq!(rs.reg_scale(&[0.95, 0.0, 0.0]), 0.0);
    }

    #[test]
    fn wrap_scale_is_inverse_frequency() {
        let a = 4.0;
        let d = GridDomain::centered(3, 48, 1.0).unwrap();
        let f = OracleMap::geodesic_wrap(3, 1, a).unwrap().rasterize(&d).unwrap();
        let rs = RegScale::new(&f);
        for x in [[0.0, 0.0, 0.0], [0.1, 0.2, -0.15], [-0.3, 0.05, 0.0]] {
            let r = rs.reg_scale(&x);
            assert!((r * a - 1.0).abs() < 0.1, "{r}");
            assert!(rs.certificate_holds(&x, r, CERTIFICATE_TOL).unwrap());
        }
    }

    #[test]
    fn walk_matches_brute_force_scan() {
        let d = GridDomain::centered(3, 24, 1.0).unwrap();
        let f = OracleMap::radial(3).unwrap().rasterize(&d).unwrap();
        let rs = RegScale::new(&f);
        let x = [0.31, -0.12, 0.07];
        let r = rs.reg_scale(&x);
        // scan ρ on a fine grid: admissible iff ρ·max ι over the open ball ≤ 1
        let admissible = |rho: f64| {
            let mut worst = 0.0f64;
            for lin in 0..d.node_count() {
                let y = d.position(lin);
                let dist = y.iter().zip(&x).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                if dist < rho {
                    worst = worst.max(rs.iota(lin));
                }
            }
            rho * worst <= 1.0
        };
        assert!(admissible(r * (1.0 - 1e-9)));
        assert!(!admissible(r * 1.01) || r == rs.cap(&x));
    }

    #[test]
    fn lp_reciprocal_of_constant_uses_caps() {
        let d = GridDomain::centered(2, 32, 1.0).unwrap();
        let f = SphereField::constant(d.clone(), &[1.0, 0.0]).unwrap();
        let rs = RegScale::new(&f);
        let region = ball_region(&d, &[0.0, 0.0], 0.4).unwrap();
        let rep = rs.lp_reciprocal(3.0, &region).unwrap();
        let direct: Vec<f64> = region.iter().map(|&l| rs.cap(&d.position(l)).powf(-3.0)).collect();
        assert_eq!(rep.value, pairwise_sum(&direct) * d.cell_volume());
        assert_eq!(rep.floored_nodes, 0);
        assert_eq!(rs.lp_derivative_sum(3.0, &region).unwrap(), 0.0);
        assert!(rs.lp_reciprocal(0.5, &region).is_err());
    }
}
