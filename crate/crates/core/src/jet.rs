//! Finite-difference jets `∇f, ∇²f, ∇³f, ∇⁴f` of a sphere field.
//!
//! A mixed partial `∂^α` is the tensor product of one-dimensional stencils of
//! order `α_a` along each axis, so every component is computed once per
//! multi-index and mixed partials are symmetric by construction. Centered
//! stencils are second-order accurate; within two layers of a face the
//! window shifts to a one-sided stencil of the same order and the jet is
//! flagged.

use crate::error::{Error, Result};
use crate::field::SphereField;
use crate::grid::GridDomain;

pub const MAX_ORDER: usize = 4;

/// Fornberg weights: `w[k][j]` is the weight of `xs[j]` in the `k`-th derivative at `x0`.
pub fn fornberg_weights(x0: f64, xs: &[f64], max_order: usize) -> Vec<Vec<f64>> {
    let n = xs.len();
    let mut c = vec![vec![0.0; n]; max_order + 1];
    let mut c1 = 1.0;
    let mut c4 = xs[0] - x0;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(max_order);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = xs[i] - x0;
        for j in 0..i {
            let c3 = xs[i] - xs[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[k][i] = c1 * (k as f64 * c[k - 1][i - 1] - c5 * c[k][i - 1]) / c2;
                }
                c[0][i] = -c1 * c5 * c[0][i - 1] / c2;
            }
            for k in (1..=mn).rev() {
                c[k][j] = (c4 * c[k][j] - k as f64 * c[k - 1][j]) / c3;
            }
            c[0][j] = c4 * c[0][j] / c3;
        }
        c1 = c2;
    }
    c
}

/// One-dimensional stencil in node offsets, weights scaled by `h^{-order}`.
#[derive(Clone, Debug, PartialEq)]
pub struct Stencil1d {
    pub offsets: Vec<isize>,
    pub weights: Vec<f64>,
    pub centered: bool,
}

/// Second-order stencil for the `order`-th derivative at node `i` of `n`.
pub fn stencil_1d(order: usize, i: usize, n: usize, h: f64) -> Stencil1d {
    if order == 0 {
        return Stencil1d { offsets: vec![0], weights: vec![1.0], centered: true };
    }
    let half = if order <= 2 { 1 } else { 2 };
    let (lo, hi, centered) = if i >= half && i + half < n {
        (-(half as isize), half as isize, true)
    } else {
        let width = (order + 2) as isize;
        let lo = (-(i as isize)).max(-(width - 1)).min(0);
        let lo = if i as isize + lo + width > n as isize { n as isize - width - i as isize } else { lo };
        (lo, lo + width - 1, false)
    };
    let offsets: Vec<isize> = (lo..=hi).collect();
    let xs: Vec<f64> = offsets.iter().map(|&o| o as f64).collect();
    let w = fornberg_weights(0.0, &xs, order);
    let scale = h.powi(-(order as i32));
    let weights = w[order].iter().map(|v| v * scale).collect();
    Stencil1d { offsets, weights, centered }
}

/// Nondecreasing axis tuples of length `order` in `dim` axes, in lexicographic order.
pub fn multi_indices(dim: usize, order: usize) -> Vec<Vec<usize>> {
    fn rec(dim: usize, order: usize, start: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == order {
            out.push(cur.clone());
            return;
        }
        for a in start..dim {
            cur.push(a);
            rec(dim, order, a, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(dim, order, 0, &mut Vec::new(), &mut out);
    out
}

/// Number of ordered index tuples collapsing onto a sorted tuple.
pub fn multiplicity(tuple: &[usize]) -> f64 {
    let mut f = factorial(tuple.len());
    let mut run = 1;
    for w in tuple.windows(2) {
        if w[0] == w[1] {
            run += 1;
        } else {
            f /= factorial(run);
            run = 1;
        }
    }
    if !tuple.is_empty() {
        f /= factorial(run);
    }
    f
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

/// Derivative tensors at one point, stored once per sorted index tuple.
#[derive(Clone, Debug, PartialEq)]
pub struct Jet {
    dim: usize,
    comps: usize,
    order: usize,
    /// `tensors[l - 1][t * comps + c]` for the `t`-th tuple of [`multi_indices`]`(dim, l)`.
    tensors: Vec<Vec<f64>>,
    /// One-sided stencils were used for some derivative.
    pub one_sided: bool,
}

impl Jet {
    pub fn zeros(dim: usize, comps: usize, order: usize) -> Self {
        let tensors = (1..=order).map(|l| vec![0.0; multi_indices(dim, l).len() * comps]).collect();
        Self { dim, comps, order, tensors, one_sided: false }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn comps(&self) -> usize {
        self.comps
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn tensor(&self, l: usize) -> &[f64] {
        &self.tensors[l - 1]
    }

    pub(crate) fn tensor_mut(&mut self, l: usize) -> &mut [f64] {
        &mut self.tensors[l - 1]
    }

    /// `∂_{i_1} ⋯ ∂_{i_l} f` for any ordering of the indices.
    pub fn component(&self, indices: &[usize]) -> &[f64] {
        let mut sorted = indices.to_vec();
        sorted.sort_unstable();
        let t = tuple_position(self.dim, &sorted);
        &self.tensors[indices.len() - 1][t * self.comps..(t + 1) * self.comps]
    }

    /// Frobenius norm of `∇^l f` over all ordered index tuples and components.
    pub fn norm(&self, l: usize) -> f64 {
        let tuples = multi_indices(self.dim, l);
        tuples
            .iter()
            .enumerate()
            .map(|(t, tuple)| {
                let s: f64 = self.tensors[l - 1][t * self.comps..(t + 1) * self.comps].iter().map(|v| v * v).sum();
                multiplicity(tuple) * s
            })
            .sum::<f64>()
            .sqrt()
    }

    /// `Δf` from the second-order tensor.
    pub fn laplacian(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.comps];
        for a in 0..self.dim {
            for (o, v) in out.iter_mut().zip(self.component(&[a, a])) {
                *o += v;
            }
        }
        out
    }
}

/// Position of a sorted tuple in [`multi_indices`] order.
fn tuple_position(dim: usize, sorted: &[usize]) -> usize {
    // count tuples lexicographically before `sorted`
    let l = sorted.len();
    let mut pos = 0;
    let mut start = 0;
    for (k, &a) in sorted.iter().enumerate() {
        let rest = l - k - 1;
        for b in start..a {
            pos += count_tuples(dim - b, rest);
        }
        start = a;
    }
    pos
}

/// Number of nondecreasing tuples of length `len` over `axes` values.
fn count_tuples(axes: usize, len: usize) -> usize {
    if len == 0 {
        return 1;
    }
    // C(axes + len - 1, len)
    let mut c = 1usize;
    for i in 0..len {
        c = c * (axes + i) / (i + 1);
    }
    c
}

/// Flattened tensor-product stencil for one multi-index at an interior node.
#[derive(Clone, Debug)]
struct FlatStencil {
    offsets: Vec<isize>,
    weights: Vec<f64>,
}

/// Precomputed centered stencils for a domain, used for fast jet evaluation
/// at nodes at least two layers from every face.
#[derive(Clone, Debug)]
pub struct JetStencils {
    domain: GridDomain,
    /// `per_order[l - 1][t]`
    per_order: Vec<Vec<FlatStencil>>,
    multiplicities: Vec<Vec<f64>>,
}

impl JetStencils {
    pub fn new(domain: &GridDomain) -> Self {
        let m = domain.dim();
        let n = domain.nodes_per_axis();
        let h = domain.spacing();
        let strides = domain.strides();
        let mid = n / 2;
        let mut per_order = Vec::new();
        let mut multiplicities = Vec::new();
        for l in 1..=MAX_ORDER {
            let tuples = multi_indices(m, l);
            let mut stencils = Vec::with_capacity(tuples.len());
            for tuple in &tuples {
                let counts = axis_counts(m, tuple);
                let parts: Vec<(usize, Stencil1d)> = counts
                    .iter()
                    .enumerate()
                    .filter(|(_, &c)| c > 0)
                    .map(|(a, &c)| (a, stencil_1d(c, mid, n, h)))
                    .collect();
                let (offsets, weights) = tensor_product(&parts, &strides);
                stencils.push(FlatStencil { offsets, weights });
            }
            multiplicities.push(tuples.iter().map(|t| multiplicity(t)).collect());
            per_order.push(stencils);
        }
        Self { domain: domain.clone(), per_order, multiplicities }
    }

    pub fn domain(&self) -> &GridDomain {
        &self.domain
    }

    /// `[|∇f|, |∇²f|, |∇³f|, |∇⁴f|]` at an interior node (layer ≥ 2).
    pub fn norms_at(&self, field: &SphereField, lin: usize) -> [f64; MAX_ORDER] {
        let comps = field.comps();
        let vals = field.values();
        let mut out = [0.0; MAX_ORDER];
        let mut acc = vec![0.0f64; comps];
        for (l, stencils) in self.per_order.iter().enumerate() {
            let mut total = 0.0;
            for (s, mult) in stencils.iter().zip(&self.multiplicities[l]) {
                acc.iter_mut().for_each(|a| *a = 0.0);
                for (&off, &w) in s.offsets.iter().zip(&s.weights) {
                    let base = (lin as isize + off) as usize * comps;
                    for c in 0..comps {
                        acc[c] += w * (vals[base + c] - vals[lin * comps + c]);
                    }
                }
                total += mult * acc.iter().map(|v| v * v).sum::<f64>();
            }
            out[l] = total.sqrt();
        }
        out
    }
}

fn axis_counts(m: usize, tuple: &[usize]) -> Vec<usize> {
    let mut counts = vec![0; m];
    for &a in tuple {
        counts[a] += 1;
    }
    counts
}

fn tensor_product(parts: &[(usize, Stencil1d)], strides: &[usize]) -> (Vec<isize>, Vec<f64>) {
    let mut offsets = vec![0isize];
    let mut weights = vec![1.0];
    for (axis, st) in parts {
        let mut no = Vec::new();
        let mut nw = Vec::new();
        for (o, w) in offsets.iter().zip(&weights) {
            for (so, sw) in st.offsets.iter().zip(&st.weights) {
                if *sw == 0.0 {
                    continue;
                }
                no.push(o + so * strides[*axis] as isize);
                nw.push(w * sw);
            }
        }
        offsets = no;
        weights = nw;
    }
    (offsets, weights)
}

/// Finite-difference jet of the ambient values at a node, up to `order`.
pub fn jet_at(field: &SphereField, node: usize, order: usize) -> Result<Jet> {
    if !(1..=MAX_ORDER).contains(&order) {
        return Err(Error::InvalidOrder(order));
    }
    let d = field.domain();
    if node >= d.node_count() {
        return Err(Error::Geometry(format!("node {node} out of range")));
    }
    let m = d.dim();
    let n = d.nodes_per_axis();
    let h = d.spacing();
    let comps = field.comps();
    let idx = d.multi_index(node);
    let strides = d.strides();
    let mut jet = Jet::zeros(m, comps, order);
    for l in 1..=order {
        let tuples = multi_indices(m, l);
        for (t, tuple) in tuples.iter().enumerate() {
            let counts = axis_counts(m, tuple);
            let parts: Vec<(usize, Stencil1d)> = counts
                .iter()
                .enumerate()
                .filter(|(_, &c)| c > 0)
                .map(|(a, &c)| (a, stencil_1d(c, idx[a], n, h)))
                .collect();
            if parts.iter().any(|(_, s)| !s.centered) {
                jet.one_sided = true;
            }
            let (offsets, weights) = tensor_product(&parts, &strides);
            let out = &mut jet.tensor_mut(l)[t * comps..(t + 1) * comps];
            // weights sum to zero; differencing against the node keeps constants exact
            let v0 = field.value(node);
            for (off, w) in offsets.iter().zip(&weights) {
                let v = field.value((node as isize + off) as usize);
                for c in 0..comps {
                    out[c] += w * (v[c] - v0[c]);
                }
            }
        }
    }
    Ok(jet)
}

/// Centered first derivatives `∂_a f` (`dim × comps`, row per axis) at a node with layer ≥ 1.
pub(crate) fn gradient_centered(field: &SphereField, lin: usize, strides: &[usize], inv2h: f64, out: &mut [f64]) {
    let comps = field.comps();
    let v = field.values();
    for (a, &s) in strides.iter().enumerate() {
        let p = (lin + s) * comps;
        let q = (lin - s) * comps;
        for c in 0..comps {
            out[a * comps + c] = (v[p + c] - v[q + c]) * inv2h;
        }
    }
}

/// Centered second derivatives `∂_a ∂_b f` for `a ≤ b`, packed in
/// [`multi_indices`]`(dim, 2)` order, at a node with layer ≥ 1.
pub(crate) fn hessian_centered(field: &SphereField, lin: usize, strides: &[usize], h: f64, out: &mut [f64]) {
    let comps = field.comps();
    let v = field.values();
    let m = strides.len();
    let ih2 = 1.0 / (h * h);
    let i4h2 = 0.25 * ih2;
    let mut t = 0;
    for a in 0..m {
        for b in a..m {
            let o = &mut out[t * comps..(t + 1) * comps];
            if a == b {
                let s = strides[a];
                for c in 0..comps {
                    o[c] = (v[(lin + s) * comps + c] - 2.0 * v[lin * comps + c] + v[(lin - s) * comps + c]) * ih2;
                }
            } else {
                let (sa, sb) = (strides[a], strides[b]);
                let pp = (lin + sa + sb) * comps;
                let pm = (lin + sa - sb) * comps;
                let mp = (lin - sa + sb) * comps;
                let mm = (lin - sa - sb) * comps;
                for c in 0..comps {
                    o[c] = (v[pp + c] - v[pm + c] - v[mp + c] + v[mm + c]) * i4h2;
                }
            }
            t += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fornberg_centered_second_derivative() {
        let w = fornberg_weights(0.0, &[-1.0, 0.0, 1.0], 2);
        assert_eq!(w[2], vec![1.0, -2.0, 1.0]);
        assert_eq!(w[1], vec![-0.5, 0.0, 0.5]);
    }

    #[test]
    fn one_sided_stencils_are_exact_on_quadratics_and_cubics() {
        // a second-order stencil of order k differentiates polynomials of degree k+1 exactly
        let n = 12;
        let h = 0.1;
        for order in 1..=4 {
            for i in [0, 1, n - 2, n - 1, n / 2] {
                let s = stencil_1d(order, i, n, h);
                for (&o, _) in s.offsets.iter().zip(&s.weights) {
                    assert!(i as isize + o >= 0 && ((i as isize + o) as usize) < n);
                }
                let x0 = i as f64 * h;
                let p = |x: f64| (x - 0.3).powi(order as i32 + 1);
                let got: f64 = s.offsets.iter().zip(&s.weights).map(|(&o, w)| w * p(x0 + o as f64 * h)).sum();
                let fact: f64 = (1..=order + 1).map(|k| k as f64).product();
                let exact = fact * (x0 - 0.3);
                assert!((got - exact).abs() < 1e-6 * (1.0 + exact.abs()), "order {order} i {i}: {got} vs {exact}");
            }
        }
    }

    #[test]
    fn tuple_positions_match_enumeration() {
        for m in 2..=6 {
            for l in 1..=4 {
                for (t, tuple) in multi_indices(m, l).iter().enumerate() {
                    assert_eq!(tuple_position(m, tuple), t);
                }
                assert_eq!(multi_indices(m, l).len(), count_tuples(m, l));
            }
        }
    }

    #[test]
    fn multiplicities_sum_to_full_tensor() {
        for m in 2..=5 {
            for l in 1..=4 {
                let total: f64 = multi_indices(m, l).iter().map(|t| multiplicity(t)).sum();
                assert_eq!(total, (m as f64).powi(l as i32));
            }
        }
    }

    #[test]
    fn invalid_order() {
        let d = GridDomain::centered(2, 8, 1.0).unwrap();
        let f = SphereField::constant(d, &[1.0, 0.0]).unwrap();
        assert!(matches!(jet_at(&f, 10, 0), Err(Error::InvalidOrder(0))));
        assert!(matches!(jet_at(&f, 10, 5), Err(Error::InvalidOrder(5))));
    }

    #[test]
    fn constant_field_has_zero_jet() {
        let d = GridDomain::centered(3, 8, 1.0).unwrap();
        let f = SphereField::constant(d, &[0.0, 0.6, 0.8]).unwrap();
        for node in [0, 100, 255, 511] {
            let j = jet_at(&f, node, 4).unwrap();
            for l in 1..=4 {
                assert!(j.norm(l) < 1e-9, "order {l} norm {}", j.norm(l));
            }
        }
    }

    #[test]
    fn fast_norms_match_generic_jet() {
        let d = GridDomain::centered(3, 10, 1.0).unwrap();
        let f = SphereField::from_fn(d.clone(), 2, |x, o| {
            o[0] = (x[0] + 0.2 * x[1]).cos();
            o[1] = (x[0] + 0.2 * x[1]).sin() * x[2].cos();
            o[2] = x[2].sin();
            Ok(())
        })
        .unwrap();
        let st = JetStencils::new(&d);
        let lin = d.linear(&[4, 5, 3]);
        let j = jet_at(&f, lin, 4).unwrap();
        assert!(!j.one_sided);
        let fast = st.norms_at(&f, lin);
        for l in 1..=4 {
            assert!((fast[l - 1] - j.norm(l)).abs() < 1e-10 * (1.0 + j.norm(l)));
        }
        let edge = jet_at(&f, d.linear(&[0, 5, 3]), 2).unwrap();
        assert!(edge.one_sided);
    }
}
