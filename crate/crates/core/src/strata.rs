//! Quantitative singular strata, bad-scale sequences, tubular volumes, the
//! bad set `B_r(f)` and singular-point counting.
//!
//! Sample sets are grid nodes inside a ball (the unit ball of the analysis),
//! optionally thinned by a stride. A member set stands for the union of its
//! sampling cells. Tubular volumes `Vol(T_ρ(A) ∩ B)` come from an exact
//! distance transform of that union with a linear partial-volume ramp across
//! each cell, which keeps them monotone in `ρ` and in `A`.

use std::collections::{BTreeSet, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::SphereField;
use crate::grid::{GridDomain, IndexBox};
use crate::homogeneity::{fit_homogeneous_until, FitOptions};
use crate::monotonicity::w_annulus;
use crate::regscale::RegScale;
use crate::sum::pairwise_sum;

pub const DEFAULT_GAMMA: f64 = 0.45;
pub const DEFAULT_Q: usize = 2;
/// Default bad-scale threshold as a fraction of `Λ`.
pub const DEFAULT_DELTA_FRACTION: f64 = 0.05;
/// Largest fraction of sample nodes allowed below the count threshold.
pub const SATURATION_FRACTION: f64 = 0.2;

/// Scales `unit·γ^j` with `A_j = [γ^{j+q+½}, γ^{j+q}] × [γ^j, γ^{j−½}]` (times `unit`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaleLadder {
    pub gamma: f64,
    pub q: usize,
    pub beta_max: usize,
    /// Radius playing the role of 1.
    pub unit: f64,
}

impl ScaleLadder {
    pub fn new(gamma: f64, q: usize, beta_max: usize, unit: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma < 0.5) {
            return Err(Error::InvalidParameter(format!("gamma = {gamma} must lie in (0, 1/2)")));
        }
        if q < 1 {
            return Err(Error::InvalidParameter("q must be at least 1".into()));
        }
        if !(unit > 0.0 && unit.is_finite()) {
            return Err(Error::InvalidParameter(format!("unit radius {unit} must be positive")));
        }
        Ok(Self { gamma, q, beta_max, unit })
    }

    /// Deepest ladder whose smallest inner radius stays at or above `4h`.
    pub fn resolved(gamma: f64, q: usize, unit: f64, h: f64) -> Result<Self> {
        let mut l = Self::new(gamma, q, 0, unit)?;
        while l.inner_floor(l.beta_max + 1) >= 4.0 * h * (1.0 - 1e-12) {
            l.beta_max += 1;
        }
        Ok(l)
    }

    pub fn radius(&self, j: usize) -> f64 {
        self.unit * self.gamma.powi(j as i32)
    }

    pub fn half_radius(&self, j: usize) -> f64 {
        self.unit * self.gamma.powf(j as f64 - 0.5)
    }

    /// Smallest inner radius used at level `j`.
    pub fn inner_floor(&self, j: usize) -> f64 {
        self.unit * self.gamma.powf((j + self.q) as f64 + 0.5)
    }

    /// The four corners of `A_j` and its (geometric) midpoint.
    pub fn pairs(&self, j: usize) -> [(f64, f64); 5] {
        let g = |e: f64| self.unit * self.gamma.powf(e);
        let (j, q) = (j as f64, self.q as f64);
        let (s_lo, s_hi) = (g(j + q + 0.5), g(j + q));
        let (t_lo, t_hi) = (g(j), g(j - 0.5));
        [(s_lo, t_lo), (s_lo, t_hi), (s_hi, t_lo), (s_hi, t_hi), (g(j + q + 0.25), g(j - 0.25))]
    }
}

/// `(q+3)Λ/δ + 1`; unbounded when `δ = 0`.
pub fn nbound(q: usize, lambda: f64, delta: f64) -> f64 {
    if delta > 0.0 {
        (q as f64 + 3.0) * lambda / delta + 1.0
    } else {
        f64::INFINITY
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaleSequence {
    pub point: Vec<f64>,
    /// `bits[j-1] = T_j(x)`.
    pub bits: Vec<u8>,
    pub delta: f64,
}

impl ScaleSequence {
    pub fn ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b == 1).count()
    }
}

/// `T_j(x) = 1` iff `W_{s,t}(x) > δ` for every sampled pair of `A_j`, `j = 1..=β_max`.
pub fn scale_sequence(field: &SphereField, x: &[f64], ladder: &ScaleLadder, delta: f64) -> Result<ScaleSequence> {
    let h = field.domain().spacing();
    if ladder.beta_max > 0 && ladder.inner_floor(ladder.beta_max) < 4.0 * h * (1.0 - 1e-12) {
        return Err(Error::Geometry(format!(
            "ladder level {} uses radius {} below 4h = {}",
            ladder.beta_max,
            ladder.inner_floor(ladder.beta_max),
            4.0 * h
        )));
    }
    let pairs: Vec<(usize, f64, f64)> =
        (1..=ladder.beta_max).flat_map(|j| ladder.pairs(j).into_iter().map(move |(s, t)| (j, s, t))).collect();
    let w = pairs.par_iter().map(|&(_, s, t)| w_annulus(field, x, s, t)).collect::<Result<Vec<_>>>()?;
    let bits = (0..ladder.beta_max).map(|i| u8::from(w[5 * i..5 * i + 5].iter().all(|&v| v > delta))).collect();
    Ok(ScaleSequence { point: x.to_vec(), bits, delta })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Census {
    pub ladder: ScaleLadder,
    pub delta: f64,
    pub lambda: f64,
    pub samples: usize,
    /// `classes[β-1]`: number of distinct prefixes of length β.
    pub classes: Vec<usize>,
    /// Largest 1-bit count over all samples.
    pub max_ones: usize,
    pub nbound: f64,
}

impl Census {
    pub fn nbound_holds(&self) -> bool {
        self.max_ones as f64 <= self.nbound
    }

    /// `β^Q` with `Q` the observed maximum.
    pub fn power_bound(&self, beta: usize) -> f64 {
        (beta as f64).powi(self.max_ones as i32)
    }

    /// Number of 0/1 words of length β with at most `Q` ones.
    pub fn word_bound(&self, beta: usize) -> f64 {
        let mut c = 1.0;
        let mut total = 1.0;
        for i in 1..=self.max_ones.min(beta) {
            c = c * (beta + 1 - i) as f64 / i as f64;
            total += c;
        }
        total
    }
}

/// Distinct `T^β` prefixes among `points` for each `β ≤ β_max`.
pub fn decomposition_census(
    field: &SphereField,
    ladder: &ScaleLadder,
    delta: f64,
    lambda: f64,
    points: &[Vec<f64>],
) -> Result<(Census, Vec<ScaleSequence>)> {
    let seqs = points.par_iter().map(|x| scale_sequence(field, x, ladder, delta)).collect::<Result<Vec<_>>>()?;
    let classes =
        (1..=ladder.beta_max).map(|b| seqs.iter().map(|s| &s.bits[..b]).collect::<BTreeSet<_>>().len()).collect();
    let max_ones = seqs.iter().map(ScaleSequence::ones).max().unwrap_or(0);
    let census = Census {
        ladder: ladder.clone(),
        delta,
        lambda,
        samples: points.len(),
        classes,
        max_ones,
        nbound: nbound(ladder.q, lambda, delta),
    };
    Ok((census, seqs))
}

/// Grid nodes in the open ball `B_radius(center)` whose offset from the node
/// nearest the center is a multiple of `stride` on every axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleRegion {
    pub center: Vec<f64>,
    pub radius: f64,
    pub stride: usize,
}

impl SampleRegion {
    pub fn new(center: Vec<f64>, radius: f64, stride: usize) -> Result<Self> {
        if !(radius > 0.0) || stride == 0 {
            return Err(Error::InvalidParameter("sample region needs a positive radius and stride".into()));
        }
        Ok(Self { center, radius, stride })
    }

    pub fn nodes(&self, domain: &GridDomain) -> Vec<usize> {
        let base = domain.nearest_node(&self.center);
        let mut out = Vec::new();
        if let Some(bb) = domain.bounding_box(&self.center, self.radius) {
            bb.for_each(domain, |idx, lin| {
                let aligned = idx
                    .iter()
                    .zip(&base)
                    .all(|(&i, &b)| (i as isize - b as isize).rem_euclid(self.stride as isize) == 0);
                if aligned && dist2(domain, idx, &self.center) < self.radius * self.radius {
                    out.push(lin);
                }
            });
        }
        out
    }

    pub fn points(&self, domain: &GridDomain) -> Vec<Vec<f64>> {
        self.nodes(domain).into_iter().map(|l| domain.position(l)).collect()
    }
}

fn dist2(domain: &GridDomain, idx: &[usize], x: &[f64]) -> f64 {
    idx.iter().enumerate().map(|(a, &i)| (domain.coord(a, i) - x[a]).powi(2)).sum()
}

/// Squared distance (in index units) to the nearest seed, on a row-major
/// box of the given shape. Exact, separable lower-envelope transform.
pub fn distance_transform(shape: &[usize], seeds: &[bool]) -> Vec<f64> {
    let total: usize = shape.iter().product();
    assert_eq!(seeds.len(), total);
    let mut data: Vec<f64> = seeds.iter().map(|&s| if s { 0.0 } else { f64::INFINITY }).collect();
    let mut stride = total;
    for &n in shape {
        stride /= n;
        let block = n * stride;
        data.par_chunks_mut(block).for_each(|chunk| {
            let mut line = vec![0.0; n];
            let mut out = vec![0.0; n];
            let mut v = Vec::with_capacity(n);
            let mut z = Vec::with_capacity(n);
            for inner in 0..stride {
                for (i, l) in line.iter_mut().enumerate() {
                    *l = chunk[inner + i * stride];
                }
                envelope_1d(&line, &mut out, &mut v, &mut z);
                for (i, o) in out.iter().enumerate() {
                    chunk[inner + i * stride] = *o;
                }
            }
        });
    }
    data
}

/// Squared distance (index units) to the union of the axis-aligned cubes of
/// half-width `half` centred on the seeds; separable min-convolution.
pub fn cell_distance_transform(shape: &[usize], seeds: &[bool], half: f64) -> Vec<f64> {
    let total: usize = shape.iter().product();
    assert_eq!(seeds.len(), total);
    let gap = |u: usize| (u as f64 - half).max(0.0).powi(2);
    let mut data: Vec<f64> = seeds.iter().map(|&s| if s { 0.0 } else { f64::INFINITY }).collect();
    let mut stride = total;
    for &n in shape {
        stride /= n;
        let block = n * stride;
        let cost: Vec<f64> = (0..n).map(gap).collect();
        data.par_chunks_mut(block).for_each(|chunk| {
            let mut line = vec![0.0; n];
            for inner in 0..stride {
                for (i, l) in line.iter_mut().enumerate() {
                    *l = chunk[inner + i * stride];
                }
                for x in 0..n {
                    let mut best = f64::INFINITY;
                    for (q, &fq) in line.iter().enumerate() {
                        if fq.is_finite() {
                            best = best.min(fq + cost[x.abs_diff(q)]);
                        }
                    }
                    chunk[inner + x * stride] = best;
                }
            }
        });
    }
    data
}

fn envelope_1d(f: &[f64], out: &mut [f64], v: &mut Vec<usize>, z: &mut Vec<f64>) {
    v.clear();
    z.clear();
    for q in 0..f.len() {
        if !f[q].is_finite() {
            continue;
        }
        let fq = f[q] + (q * q) as f64;
        while let Some(&p) = v.last() {
            let s = (fq - f[p] - (p * p) as f64) / (2.0 * (q - p) as f64);
            if s <= *z.last().unwrap() {
                v.pop();
                z.pop();
            } else {
                v.push(q);
                z.push(s);
                break;
            }
        }
        if v.is_empty() {
            v.push(q);
            z.push(f64::NEG_INFINITY);
        }
    }
    if v.is_empty() {
        out.fill(f64::INFINITY);
        return;
    }
    let mut j = 0;
    for (x, o) in out.iter_mut().enumerate() {
        while j + 1 < v.len() && z[j + 1] < x as f64 {
            j += 1;
        }
        let d = x as f64 - v[j] as f64;
        *o = d * d + f[v[j]];
    }
}

/// Grid machinery for `Vol(T_ρ(A) ∩ B)` with `B` the region ball.
pub struct TubeGrid<'a> {
    domain: &'a GridDomain,
    bbox: IndexBox,
    shape: Vec<usize>,
    /// Partial-volume weight of each box node in `B`.
    ball_weight: Vec<f64>,
    local: HashMap<usize, usize>,
    stride: usize,
}

impl<'a> TubeGrid<'a> {
    pub fn new(domain: &'a GridDomain, region: &SampleRegion) -> Result<Self> {
        let h = domain.spacing();
        let bbox = domain
            .bounding_box(&region.center, region.radius + h)
            .ok_or_else(|| Error::Geometry("sample region misses the grid".into()))?;
        let shape: Vec<usize> = bbox.ranges.iter().map(|(l, u)| u - l + 1).collect();
        let mut ball_weight = Vec::with_capacity(bbox.len());
        let mut local = HashMap::new();
        let mut k = 0;
        bbox.for_each(domain, |idx, lin| {
            let d = dist2(domain, idx, &region.center).sqrt();
            ball_weight.push(ramp(region.radius - d, h));
            local.insert(lin, k);
            k += 1;
        });
        Ok(Self { domain, bbox, shape, ball_weight, local, stride: region.stride })
    }

    /// Volumes for each `ρ`. Each member stands for its sampling cell (a cube
    /// of side `stride·h`); members outside the box are ignored.
    pub fn volumes(&self, members: &[usize], rhos: &[f64]) -> Vec<f64> {
        let mut seeds = vec![false; self.bbox.len()];
        let mut any = false;
        for lin in members {
            if let Some(&k) = self.local.get(lin) {
                seeds[k] = true;
                any = true;
            }
        }
        if !any {
            return vec![0.0; rhos.len()];
        }
        let h = self.domain.spacing();
        let dist: Vec<f64> = cell_distance_transform(&self.shape, &seeds, 0.5 * self.stride as f64)
            .into_iter()
            .map(|d2| d2.sqrt() * h)
            .collect();
        let hm = self.domain.cell_volume();
        rhos.iter()
            .map(|&rho| {
                let terms: Vec<f64> = dist
                    .par_iter()
                    .zip(&self.ball_weight)
                    .map(|(&d, &w)| if w > 0.0 { w * ramp(rho - d, h) } else { 0.0 })
                    .collect();
                pairwise_sum(&terms) * hm
            })
            .collect()
    }
}

/// Fraction of a cell of width `h` on the inside of an interface at signed distance `s`.
fn ramp(s: f64, h: f64) -> f64 {
    (0.5 + s / h).clamp(0.0, 1.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    /// RMS residual of the log-log fit.
    pub residual: f64,
    pub points: usize,
}

/// Least squares of `log y` against `log x` over the entries with `y > 0`.
pub fn fit_slope(xs: &[f64], ys: &[f64]) -> Option<SlopeFit> {
    let pts: Vec<(f64, f64)> =
        xs.iter().zip(ys).filter(|(x, y)| **x > 0.0 && **y > 0.0).map(|(x, y)| (x.ln(), y.ln())).collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual = (pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum::<f64>() / n).sqrt();
    Some(SlopeFit { slope, intercept, residual, points: pts.len() })
}

/// Dyadic radii `8h·2^i` up to a quarter of the half width.
pub fn dyadic_rhos(domain: &GridDomain) -> Vec<f64> {
    let top = 0.25 * domain.half_width();
    std::iter::successors(Some(8.0 * domain.spacing()), |r| Some(2.0 * r))
        .take_while(|&r| r <= top * (1.0 + 1e-12))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrataAtlas {
    pub k: usize,
    pub eta: f64,
    pub r: f64,
    pub region: SampleRegion,
    /// Member node indices, ascending.
    pub members: Vec<usize>,
    pub sampled: usize,
    pub rhos: Vec<f64>,
    /// `Vol(T_ρ(members) ∩ B)` for each `ρ`.
    pub volumes: Vec<f64>,
    pub fit: Option<SlopeFit>,
    /// `Vol(T_r(members) ∩ B)`.
    pub tube_at_r: f64,
}

/// Lighter lattices for scans over many points.
pub fn scan_fit_options() -> FitOptions {
    FitOptions { directions: 128, radii: 8, adapted_samples: 1024, budget: 4, seed: 0 }
}

/// Per-point deficit scans over a fixed scale set and sample region.
pub struct StrataScan<'a> {
    field: &'a SphereField,
    /// Descending.
    scales: Vec<f64>,
    region: SampleRegion,
    nodes: Vec<usize>,
    fit: FitOptions,
}

impl<'a> StrataScan<'a> {
    pub fn new(field: &'a SphereField, scales: &[f64], region: SampleRegion, fit: FitOptions) -> Result<Self> {
        if scales.is_empty() {
            return Err(Error::Geometry("empty scale ladder".into()));
        }
        if scales.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::InvalidParameter("scales must be positive".into()));
        }
        fit.validate()?;
        let d = field.domain();
        if region.center.len() != d.dim() {
            return Err(Error::Geometry("region center has the wrong dimension".into()));
        }
        let mut scales = scales.to_vec();
        scales.sort_by(|a, b| b.total_cmp(a));
        scales.dedup();
        let top = scales[0];
        if !d.contains_ball(&region.center, region.radius + top, 0.0) {
            return Err(Error::Geometry(format!(
                "balls of radius {top} around the sample region B_{}({:?}) leave the domain",
                region.radius, region.center
            )));
        }
        let nodes = region.nodes(d);
        Ok(Self { field, scales, region, nodes, fit })
    }

    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }

    pub fn scales(&self) -> &[f64] {
        &self.scales
    }

    /// For each sample node, the largest scale at which some `k' > k` has
    /// deficit `≤ η` (`None` if there is none). The node lies in `S^k_{η,r}`
    /// iff that scale is below `r`.
    pub fn failure_scales(&self, k: usize, eta: f64) -> Result<Vec<Option<f64>>> {
        let m = self.field.domain().dim();
        if k >= m {
            return Err(Error::InvalidParameter(format!("stratum index k = {k} must be below m = {m}")));
        }
        let d = self.field.domain();
        self.nodes
            .par_iter()
            .map(|&lin| {
                let x = d.position(lin);
                for &s in &self.scales {
                    for kk in k + 1..=m {
                        if self.deficit_at_most(&x, s, kk, eta)? {
                            return Ok(Some(s));
                        }
                    }
                }
                Ok(None)
            })
            .collect()
    }

    /// Whether the searched deficit is `≤ η`; the search is monotone, so it may stop at `η`.
    fn deficit_at_most(&self, x: &[f64], s: f64, k: usize, eta: f64) -> Result<bool> {
        Ok(fit_homogeneous_until(self.field, x, s, k, &self.fit, eta)?.deficit <= eta)
    }

    fn check_r(&self, r: f64) -> Result<()> {
        let (lo, hi) = (*self.scales.last().unwrap(), self.scales[0]);
        if !(r >= lo * (1.0 - 1e-12) && r <= hi * (1.0 + 1e-12)) {
            return Err(Error::Geometry(format!("r = {r} outside the ladder range [{lo}, {hi}]")));
        }
        Ok(())
    }

    /// Atlases for several `r` sharing one scan.
    pub fn strata(&self, k: usize, eta: f64, rs: &[f64], rhos: &[f64]) -> Result<Vec<StrataAtlas>> {
        for &r in rs {
            self.check_r(r)?;
        }
        let fails = self.failure_scales(k, eta)?;
        let tubes = TubeGrid::new(self.field.domain(), &self.region)?;
        Ok(rs
            .iter()
            .map(|&r| {
                let members: Vec<usize> =
                    self.nodes.iter().zip(&fails).filter(|(_, f)| f.is_none_or(|s| s < r)).map(|(l, _)| *l).collect();
                let volumes = tubes.volumes(&members, rhos);
                let tube_at_r = tubes.volumes(&members, &[r])[0];
                StrataAtlas {
                    k,
                    eta,
                    r,
                    region: self.region.clone(),
                    fit: fit_slope(rhos, &volumes),
                    members,
                    sampled: self.nodes.len(),
                    rhos: rhos.to_vec(),
                    volumes,
                    tube_at_r,
                }
            })
            .collect())
    }

    pub fn stratum(&self, k: usize, eta: f64, r: f64, rhos: &[f64]) -> Result<StrataAtlas> {
        Ok(self.strata(k, eta, &[r], rhos)?.remove(0))
    }
}

/// `S^k_{η,r}` on a sample region with tube volumes over the dyadic ρ ladder.
pub fn stratum(
    field: &SphereField,
    k: usize,
    eta: f64,
    r: f64,
    scales: &[f64],
    region: &SampleRegion,
    fit: &FitOptions,
) -> Result<StrataAtlas> {
    let scan = StrataScan::new(field, scales, region.clone(), fit.clone())?;
    scan.stratum(k, eta, r, &dyadic_rhos(field.domain()))
}

/// Slope of `log Vol(T_r(A_r) ∩ B)` against `log r` over a family of atlases.
pub fn scaling_slope(atlases: &[StrataAtlas]) -> Option<SlopeFit> {
    let rs: Vec<f64> = atlases.iter().map(|a| a.r).collect();
    let v: Vec<f64> = atlases.iter().map(|a| a.tube_at_r).collect();
    fit_slope(&rs, &v)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BadSet {
    pub r: f64,
    pub members: Vec<usize>,
    pub sampled: usize,
    /// `Vol(T_r(B_r) ∩ B)`.
    pub tube_volume: f64,
}

/// `B_r(f) = {r_f ≤ r}` on the sample region, for several `r`.
pub fn bad_sets(field: &SphereField, rs: &[f64], region: &SampleRegion) -> Result<Vec<BadSet>> {
    let d = field.domain();
    let rsc = RegScale::new(field);
    let nodes = region.nodes(d);
    let top = rs.iter().copied().fold(0.0, f64::max);
    let r_f: Vec<Option<f64>> = nodes.par_iter().map(|&lin| rsc.reg_scale_upto(&d.position(lin), top)).collect();
    let tubes = TubeGrid::new(d, region)?;
    Ok(rs
        .iter()
        .map(|&r| {
            let members: Vec<usize> =
                nodes.iter().zip(&r_f).filter(|(_, f)| f.is_some_and(|v| v <= r)).map(|(l, _)| *l).collect();
            let tube_volume = tubes.volumes(&members, &[r])[0];
            BadSet { r, members, sampled: nodes.len(), tube_volume }
        })
        .collect())
}

pub fn bad_set(field: &SphereField, r: f64, region: &SampleRegion) -> Result<BadSet> {
    Ok(bad_sets(field, &[r], region)?.remove(0))
}

/// Slope of `log Vol(T_r(B_r) ∩ B)` against `log r`.
pub fn bad_set_slope(sets: &[BadSet]) -> Option<SlopeFit> {
    let rs: Vec<f64> = sets.iter().map(|b| b.r).collect();
    let v: Vec<f64> = sets.iter().map(|b| b.tube_volume).collect();
    fit_slope(&rs, &v)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SingularCount {
    pub count: usize,
    pub representatives: Vec<Vec<f64>>,
    /// Nodes with `r_f < r*`.
    pub candidates: usize,
    /// Local maxima of `1/r_f` among the candidates.
    pub maxima: usize,
    pub schedule: Vec<f64>,
    /// Packing count at each schedule radius tried.
    pub counts: Vec<usize>,
    /// Radius at which the count stabilized.
    pub radius: f64,
}

/// Default packing schedule `r*·2^i` up to the half width.
pub fn default_schedule(domain: &GridDomain, r_star: f64) -> Vec<f64> {
    std::iter::successors(Some(r_star), |r| Some(2.0 * r)).take_while(|&r| r <= domain.half_width()).collect()
}

/// Counts isolated singular points: local maxima of `1/r_f` above `1/r*`,
/// merged by greedy packing (kept centers at least the schedule radius
/// apart) until two consecutive radii agree.
pub fn count_singular(field: &SphereField, r_star: f64, schedule: &[f64]) -> Result<SingularCount> {
    if !(r_star > 0.0) {
        return Err(Error::InvalidParameter(format!("threshold r* = {r_star} must be positive")));
    }
    if schedule.is_empty() || schedule.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParameter("packing schedule must be non-empty and ascending".into()));
    }
    let d = field.domain();
    let m = d.dim();
    let rsc = RegScale::new(field);
    let all: Vec<usize> = (0..d.node_count()).collect();
    // samples keep r_f clear of the cap; ι is needed out to r* around them
    let samples: Vec<usize> = all.par_iter().copied().filter(|&l| rsc.cap(&d.position(l)) > r_star).collect();
    let hot: Vec<bool> = all.par_iter().map(|&l| rsc.cap(&d.position(l)) > 0.0 && rsc.iota(l) > 1.0 / r_star).collect();
    let shape = vec![d.nodes_per_axis(); m];
    let near_hot = distance_transform(&shape, &hot);
    let reach = (r_star / d.spacing()).powi(2);
    let cands: Vec<(usize, f64)> = samples
        .par_iter()
        .filter(|&&l| near_hot[l] < reach)
        .filter_map(|&l| rsc.reg_scale_upto(&d.position(l), r_star).filter(|&v| v < r_star).map(|v| (l, v)))
        .collect();
    if cands.len() as f64 > SATURATION_FRACTION * samples.len() as f64 {
        return Err(Error::Saturated { candidates: cands.len(), samples: samples.len() });
    }
    let rf: HashMap<usize, f64> = cands.iter().copied().collect();
    let mut maxima: Vec<(usize, f64)> = cands
        .iter()
        .copied()
        .filter(|&(l, v)| {
            let idx = d.multi_index(l);
            let lo: Vec<(usize, usize)> =
                idx.iter().map(|&i| (i.saturating_sub(1), (i + 1).min(d.nodes_per_axis() - 1))).collect();
            let mut ok = true;
            IndexBox { ranges: lo }.for_each(d, |_, n| {
                if let Some(&w) = rf.get(&n) {
                    ok &= v <= w;
                }
            });
            ok
        })
        .collect();
    maxima.sort_by(|a, b| a.1.total_cmp(&b.1).then(rsc.iota(b.0).total_cmp(&rsc.iota(a.0))).then(a.0.cmp(&b.0)));
    let pos: Vec<Vec<f64>> = maxima.iter().map(|(l, _)| d.position(*l)).collect();
    let pack = |radius: f64| -> Vec<usize> {
        let mut kept: Vec<usize> = Vec::new();
        for (i, p) in pos.iter().enumerate() {
            let far = kept
                .iter()
                .all(|&j| p.iter().zip(&pos[j]).map(|(a, b)| (a - b).powi(2)).sum::<f64>() >= radius * radius);
            if far {
                kept.push(i);
            }
        }
        kept
    };
    let mut counts = Vec::new();
    let mut chosen = pack(schedule[0]);
    let mut radius = schedule[0];
    counts.push(chosen.len());
    for w in schedule.windows(2) {
        let next = pack(w[1]);
        counts.push(next.len());
        if next.len() == chosen.len() {
            break;
        }
        chosen = next;
        radius = w[1];
    }
    Ok(SingularCount {
        count: chosen.len(),
        representatives: chosen.iter().map(|&i| pos[i].clone()).collect(),
        candidates: cands.len(),
        maxima: maxima.len(),
        schedule: schedule.to_vec(),
        counts,
        radius,
    })
}
