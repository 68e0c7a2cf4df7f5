//! Blow-up rescaling, best k-homogeneous approximants and the L² homogeneity deficit.
//!
//! A map on `B₁` is k-homogeneous with respect to a k-plane `V` if it is
//! radially constant and invariant along `V`, i.e. it depends only on the
//! direction of the `V^⊥` component. Deficits are evaluated on lattices
//! adapted to `V`: directions `ω ∈ S(V^⊥)`, radii `ρ` and slab offsets
//! `v ∈ V` with `ρ² + |v|² < 1` and weight `ρ^{m−k−1}`. On each fiber
//! `{ρω + v}` the best sphere-valued constant is the normalized weighted mean.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{normalize, SphereField};
use crate::jet::gradient_centered;
use crate::sum::pairwise_sum;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitOptions {
    /// Directions of the polar lattice (k = 0 and k = m).
    pub directions: usize,
    /// Radii of the polar lattice.
    pub radii: usize,
    /// Approximate sample count of adapted lattices (0 < k < m).
    pub adapted_samples: usize,
    /// Deficit evaluations allowed in the rotation search.
    pub budget: usize,
    pub seed: u64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { directions: 512, radii: 32, adapted_samples: 8192, budget: 24, seed: 0 }
    }
}

impl FitOptions {
    pub fn validate(&self) -> Result<()> {
        if self.directions < 2 || self.radii < 1 || self.adapted_samples < 16 {
            return Err(Error::InvalidParameter("lattice sizes too small".into()));
        }
        Ok(())
    }
}

/// `count` antipodally symmetric, low-discrepancy unit vectors in ℝ^dim.
pub fn sphere_points(dim: usize, count: usize) -> Vec<Vec<f64>> {
    match dim {
        0 => vec![],
        1 => vec![vec![1.0], vec![-1.0]],
        2 => (0..count)
            .map(|i| {
                let t = 2.0 * std::f64::consts::PI * (i as f64 + 0.5) / count as f64;
                vec![t.cos(), t.sin()]
            })
            .collect(),
        _ => {
            // R-sequence in [0,1)^{2⌈d/2⌉}, Box–Muller to Gaussians, normalized
            let d2 = dim.div_ceil(2) * 2;
            let mut phi = 2.0f64;
            for _ in 0..64 {
                phi = (1.0 + phi).powf(1.0 / (d2 as f64 + 1.0));
            }
            let alpha: Vec<f64> = (1..=d2).map(|i| phi.powi(-(i as i32))).collect();
            let half = count.div_ceil(2);
            let mut out = Vec::with_capacity(2 * half);
            for n in 1..=half {
                let u: Vec<f64> = alpha.iter().map(|a| (0.5 + n as f64 * a).fract()).collect();
                let mut p = Vec::with_capacity(d2);
                for pair in u.chunks(2) {
                    let rad = (-2.0 * pair[0].max(1e-300).ln()).sqrt();
                    let th = 2.0 * std::f64::consts::PI * pair[1];
                    p.push(rad * th.cos());
                    p.push(rad * th.sin());
                }
                p.truncate(dim);
                normalize(&mut p);
                let q: Vec<f64> = p.iter().map(|v| -v).collect();
                out.push(p);
                out.push(q);
            }
            out
        }
    }
}

/// Sample points of `B₁` grouped into fibers of a k-plane.
#[derive(Clone, Debug)]
pub struct Lattice {
    /// Row-major `m`-vectors in `B₁`.
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
    /// Fiber direction `ω` (ambient unit vector in `V^⊥`) for each group.
    pub directions: Vec<Vec<f64>>,
    /// `points` index range of each fiber.
    pub groups: Vec<std::ops::Range<usize>>,
}

impl Lattice {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn point(&self, i: usize, m: usize) -> &[f64] {
        &self.points[i * m..(i + 1) * m]
    }

    /// Directions × midpoint radii, weight `ρ^{m−1}`.
    pub fn polar(m: usize, directions: usize, radii: usize) -> Self {
        let basis: Vec<Vec<f64>> = (0..m).map(|a| unit(m, a)).collect();
        Self::adapted(&[], &basis, directions, radii, 0)
    }

    /// Lattice for the plane spanned by `v_basis` with complement `perp_basis`.
    fn adapted(v_basis: &[Vec<f64>], perp_basis: &[Vec<f64>], directions: usize, radii: usize, slab: usize) -> Self {
        let m = v_basis.len() + perp_basis.len();
        let k = v_basis.len();
        let perp_dirs = sphere_points(perp_basis.len(), directions);
        // (ρ, v) pairs with ρ² + |v|² < 1
        let mut pairs: Vec<(f64, Vec<f64>)> = Vec::new();
        let mut v = vec![0.0; k];
        let slab_n = if k == 0 { 1 } else { slab };
        let total = slab_n.pow(k as u32);
        for i in 0..radii {
            let rho = (i as f64 + 0.5) / radii as f64;
            for code in 0..total {
                let mut c = code;
                for vj in v.iter_mut() {
                    *vj = -1.0 + 2.0 * ((c % slab_n) as f64 + 0.5) / slab_n as f64;
                    c /= slab_n;
                }
                if rho * rho + v.iter().map(|x| x * x).sum::<f64>() < 1.0 {
                    pairs.push((rho, v.clone()));
                }
            }
        }
        let mut points = Vec::new();
        let mut weights = Vec::new();
        let mut directions = Vec::new();
        let mut groups = Vec::new();
        let w_exp = (m - k - 1) as i32;
        for d in &perp_dirs {
            let omega: Vec<f64> = (0..m).map(|a| perp_basis.iter().zip(d).map(|(b, t)| b[a] * t).sum()).collect();
            let start = weights.len();
            for (rho, v) in &pairs {
                for a in 0..m {
                    let mut z = rho * omega[a];
                    for (b, vj) in v_basis.iter().zip(v) {
                        z += b[a] * vj;
                    }
                    points.push(z);
                }
                weights.push(rho.powi(w_exp));
            }
            groups.push(start..weights.len());
            directions.push(omega);
        }
        Self { points, weights, directions, groups }
    }

    /// Adapted lattice with about `target` points.
    pub fn for_plane(v_basis: &[Vec<f64>], perp_basis: &[Vec<f64>], opts: &FitOptions) -> Self {
        let k = v_basis.len();
        let c = perp_basis.len();
        if k == 0 {
            return Self::adapted(v_basis, perp_basis, opts.directions, opts.radii, 0);
        }
        let dirs = match c {
            1 => 2,
            2 => 64,
            _ => (opts.directions >> k).max(64),
        };
        let per_fiber = (opts.adapted_samples / dirs).max(8);
        // grow the (ρ, v) grid until it holds `per_fiber` pairs
        let mut n = 2;
        loop {
            let l = Self::adapted(v_basis, perp_basis, 1.min(dirs), n, n);
            if l.len() >= per_fiber || n > 64 {
                break;
            }
            n += 1;
        }
        Self::adapted(v_basis, perp_basis, dirs, n, n)
    }
}

fn unit(m: usize, a: usize) -> Vec<f64> {
    let mut e = vec![0.0; m];
    e[a] = 1.0;
    e
}

/// Values of `T_{x,r}f(z) = f(x + r z)` on lattice points, renormalized.
#[derive(Clone, Debug)]
pub struct Rescaled {
    pub lattice: Lattice,
    /// Row-major values in `S^n`.
    pub values: Vec<f64>,
    pub comps: usize,
}

fn check_ball(field: &SphereField, x: &[f64], r: f64) -> Result<()> {
    let d = field.domain();
    if x.len() != d.dim() {
        return Err(Error::Geometry(format!("center has {} coordinates, expected {}", x.len(), d.dim())));
    }
    if !(r > 0.0) || !d.contains_ball(x, r, 0.0) {
        return Err(Error::Geometry(format!("ball B_{r}({x:?}) not contained in the domain")));
    }
    Ok(())
}

fn sample_lattice(field: &SphereField, x: &[f64], r: f64, lattice: &Lattice) -> Vec<f64> {
    let m = x.len();
    let comps = field.comps();
    let mut values = vec![0.0; lattice.len() * comps];
    let mut y = vec![0.0; m];
    for (i, out) in values.chunks_exact_mut(comps).enumerate() {
        let z = lattice.point(i, m);
        for a in 0..m {
            y[a] = x[a] + r * z[a];
        }
        field.sample_into(&y, out);
        if normalize(out) == 0.0 {
            out.fill(0.0);
            out[0] = 1.0;
        }
    }
    values
}

/// Blow-up `f(x + r·)` on the default polar lattice of `B₁`.
pub fn rescale(field: &SphereField, x: &[f64], r: f64) -> Result<Rescaled> {
    rescale_on(field, x, r, Lattice::polar(x.len(), 512, 32))
}

pub fn rescale_on(field: &SphereField, x: &[f64], r: f64, lattice: Lattice) -> Result<Rescaled> {
    check_ball(field, x, r)?;
    let values = sample_lattice(field, x, r, &lattice);
    Ok(Rescaled { lattice, values, comps: field.comps() })
}

/// Normalized weighted mean; a zero mean resolves to the first basis vector.
fn sphere_mean(values: &[f64], weights: &[f64], comps: usize) -> Vec<f64> {
    let mut mean = vec![0.0; comps];
    for (c, mc) in mean.iter_mut().enumerate() {
        let terms: Vec<f64> = weights.iter().enumerate().map(|(i, w)| w * values[i * comps + c]).collect();
        *mc = pairwise_sum(&terms);
    }
    if normalize(&mut mean) <= 1e-14 {
        mean.fill(0.0);
        mean[0] = 1.0;
    }
    mean
}

/// Fiberwise best approximant and weighted mean-squared distance.
fn fiber_fit(r: &Rescaled, constant: bool) -> (Vec<Vec<f64>>, f64) {
    let comps = r.comps;
    let l = &r.lattice;
    let groups: Vec<std::ops::Range<usize>> = if constant { vec![0..l.len()] } else { l.groups.clone() };
    let mut approx = Vec::with_capacity(groups.len());
    let mut err = Vec::with_capacity(l.len());
    for g in &groups {
        let h = sphere_mean(&r.values[g.start * comps..g.end * comps], &l.weights[g.clone()], comps);
        for i in g.clone() {
            let v = &r.values[i * comps..(i + 1) * comps];
            let d2: f64 = v.iter().zip(&h).map(|(a, b)| (a - b) * (a - b)).sum();
            err.push(l.weights[i] * d2);
        }
        approx.push(h);
    }
    let deficit = pairwise_sum(&err) / pairwise_sum(&l.weights);
    (approx, deficit.max(0.0))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HomogeneousFit {
    pub k: usize,
    /// Orthonormal basis of `V` (k vectors).
    pub plane: Vec<Vec<f64>>,
    /// Fiber directions in `S(V^⊥)`; empty for `k = m`.
    pub directions: Vec<Vec<f64>>,
    /// Approximant value for each direction (one value for `k = m`).
    pub values: Vec<Vec<f64>>,
    pub deficit: f64,
    pub evaluations: usize,
}

impl HomogeneousFit {
    /// Approximant at `z` (nearest tabulated direction of its `V^⊥` component).
    pub fn approximant(&self, z: &[f64]) -> Vec<f64> {
        if self.directions.is_empty() {
            return self.values[0].clone();
        }
        let mut w = z.to_vec();
        for b in &self.plane {
            let t: f64 = b.iter().zip(z).map(|(p, q)| p * q).sum();
            w.iter_mut().zip(b).for_each(|(wi, bi)| *wi -= t * bi);
        }
        let best = self
            .directions
            .iter()
            .enumerate()
            .map(|(i, d)| (i, d.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>()))
            .fold((0, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc });
        self.values[best.0].clone()
    }
}

/// `M = ⨍_{B_r(x)} ∇fᵀ∇f` from centered gradients at the nodes of the open ball.
pub fn gradient_moment(field: &SphereField, x: &[f64], r: f64) -> DMatrix<f64> {
    let d = field.domain();
    let m = d.dim();
    let comps = field.comps();
    let strides = d.strides();
    let mut nodes = Vec::new();
    if let Some(bb) = d.bounding_box(x, r) {
        bb.for_each(d, |idx, lin| {
            let d2: f64 = idx.iter().enumerate().map(|(a, &i)| (d.coord(a, i) - x[a]).powi(2)).sum();
            if d2 < r * r && d.layer(idx) >= 1 {
                nodes.push(lin);
            }
        });
    }
    let mut acc = DMatrix::zeros(m, m);
    let mut total = 0.0;
    let mut g = vec![0.0; m * comps];
    for &lin in &nodes {
        let wt = 1.0;
        gradient_centered(field, lin, &strides, 0.5 / d.spacing(), &mut g);
        for a in 0..m {
            for b in a..m {
                let s: f64 = (0..comps).map(|c| g[a * comps + c] * g[b * comps + c]).sum();
                acc[(a, b)] += wt * s;
            }
        }
        total += wt;
    }
    for a in 0..m {
        for b in 0..a {
            acc[(a, b)] = acc[(b, a)];
        }
    }
    if total > 0.0 {
        acc /= total;
    }
    acc
}

/// Columns of an orthonormal frame, eigenvectors of `M` by ascending eigenvalue.
fn eigen_frame(mtx: DMatrix<f64>) -> Vec<Vec<f64>> {
    let m = mtx.nrows();
    let eig = SymmetricEigen::new(mtx);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]).then(a.cmp(&b)));
    let mut frame: Vec<Vec<f64>> =
        order.iter().map(|&i| eig.eigenvectors.column(i).iter().copied().collect()).collect();
    // deterministic sign: largest-magnitude entry positive
    for v in frame.iter_mut() {
        let big = v.iter().copied().fold(0.0f64, |a, b| if b.abs() > a.abs() { b } else { a });
        if big < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
    frame
}

fn rotate(frame: &mut [Vec<f64>], i: usize, j: usize, angle: f64) {
    let (c, s) = (angle.cos(), angle.sin());
    let (a, b) = (frame[i].clone(), frame[j].clone());
    for t in 0..a.len() {
        frame[i][t] = c * a[t] + s * b[t];
        frame[j][t] = -s * a[t] + c * b[t];
    }
}

fn deficit_for_frame(
    field: &SphereField,
    x: &[f64],
    r: f64,
    k: usize,
    frame: &[Vec<f64>],
    opts: &FitOptions,
) -> (Lattice, Vec<Vec<f64>>, f64) {
    let m = x.len();
    let lattice = if k == m {
        Lattice::polar(m, opts.directions, opts.radii)
    } else {
        Lattice::for_plane(&frame[..k], &frame[k..], opts)
    };
    let values = sample_lattice(field, x, r, &lattice);
    let resc = Rescaled { lattice, values, comps: field.comps() };
    let (approx, deficit) = fiber_fit(&resc, k == m);
    (resc.lattice, approx, deficit)
}

/// Best k-homogeneous approximant of `T_{x,r}f` found by the eigen-initialized
/// rotation search; the deficit upper-bounds the true infimum.
pub fn fit_homogeneous(field: &SphereField, x: &[f64], r: f64, k: usize, opts: &FitOptions) -> Result<HomogeneousFit> {
    fit_homogeneous_until(field, x, r, k, opts, f64::NEG_INFINITY)
}

/// As [`fit_homogeneous`], but the search stops as soon as the deficit is at most `target`.
pub fn fit_homogeneous_until(
    field: &SphereField,
    x: &[f64],
    r: f64,
    k: usize,
    opts: &FitOptions,
    target: f64,
) -> Result<HomogeneousFit> {
    check_ball(field, x, r)?;
    opts.validate()?;
    let m = x.len();
    if k > m {
        return Err(Error::InvalidParameter(format!("k = {k} exceeds m = {m}")));
    }
    let mut frame =
        if k == 0 || k == m { (0..m).map(|a| unit(m, a)).collect() } else { eigen_frame(gradient_moment(field, x, r)) };
    let (mut lattice, mut approx, mut best) = deficit_for_frame(field, x, r, k, &frame, opts);
    let mut evaluations = 1;
    if k > 0 && k < m && best > 0.0 && best > target {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let mut pairs: Vec<(usize, usize)> = (0..k).flat_map(|i| (k..m).map(move |j| (i, j))).collect();
        let mut angle = 0.2;
        'search: while evaluations < opts.budget {
            pairs.shuffle(&mut rng);
            let mut improved = false;
            for &(i, j) in &pairs {
                for sign in [1.0, -1.0] {
                    if evaluations >= opts.budget {
                        break 'search;
                    }
                    let mut trial = frame.clone();
                    rotate(&mut trial, i, j, sign * angle);
                    let (l, a, d) = deficit_for_frame(field, x, r, k, &trial, opts);
                    evaluations += 1;
                    if d < best {
                        frame = trial;
                        lattice = l;
                        approx = a;
                        best = d;
                        improved = true;
                        if best <= target {
                            break 'search;
                        }
                        break;
                    }
                }
            }
            if !improved {
                angle *= 0.5;
                if angle < 1e-3 {
                    break;
                }
            }
        }
    }
    Ok(HomogeneousFit {
        k,
        plane: frame[..k].to_vec(),
        directions: if k == m { vec![] } else { lattice.directions },
        values: approx,
        deficit: best,
        evaluations,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeficitTable {
    pub center: Vec<f64>,
    pub scales: Vec<f64>,
    /// `raw[i][k]`: deficit of the fitted k-homogeneous approximant at `scales[i]`.
    pub raw: Vec<Vec<f64>>,
    /// `deficits[i][k] = min(raw[i][k], deficits[i][k+1])`, non-decreasing in k.
    pub deficits: Vec<Vec<f64>>,
}

/// Enforces `d̂_k ≤ d̂_{k+1}`: a (k+1)-homogeneous map is also k-homogeneous.
pub fn min_chain(raw: &[f64]) -> Vec<f64> {
    let mut out = raw.to_vec();
    for k in (0..out.len().saturating_sub(1)).rev() {
        out[k] = out[k].min(out[k + 1]);
    }
    out
}

pub fn deficit_table(field: &SphereField, x: &[f64], scales: &[f64], opts: &FitOptions) -> Result<DeficitTable> {
    let m = x.len();
    let raw = scales
        .par_iter()
        .map(|&s| (0..=m).map(|k| fit_homogeneous(field, x, s, k, opts).map(|f| f.deficit)).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    let deficits = raw.iter().map(|r| min_chain(r)).collect();
    Ok(DeficitTable { center: x.to_vec(), scales: scales.to_vec(), raw, deficits })
}
