//! Axis-aligned uniform grids in ℝ^m.
//!
//! Nodes are stored row-major: the last axis varies fastest. Node `i` on an
//! axis sits at `origin - half_width + i * h`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MIN_DIM: usize = 2;
pub const MAX_DIM: usize = 6;
pub const MIN_NODES: usize = 8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridDomain {
    dim: usize,
    nodes_per_axis: usize,
    origin: Vec<f64>,
    half_width: f64,
    spacing: f64,
}

impl GridDomain {
    pub fn new(dim: usize, nodes_per_axis: usize, origin: Vec<f64>, half_width: f64) -> Result<Self> {
        if !(MIN_DIM..=MAX_DIM).contains(&dim) {
            return Err(Error::UnsupportedDimension(dim));
        }
        if nodes_per_axis < MIN_NODES {
            return Err(Error::InvalidParameter(format!(
                "nodes_per_axis must be at least {MIN_NODES}, got {nodes_per_axis}"
            )));
        }
        if origin.len() != dim {
            return Err(Error::InvalidParameter(format!("origin has {} coordinates, expected {dim}", origin.len())));
        }
        if !(half_width > 0.0 && half_width.is_finite()) || origin.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidParameter("half_width must be positive and finite".into()));
        }
        let spacing = 2.0 * half_width / (nodes_per_axis - 1) as f64;
        Ok(Self { dim, nodes_per_axis, origin, half_width, spacing })
    }

    /// Centered box `[-half_width, half_width]^m`.
    pub fn centered(dim: usize, nodes_per_axis: usize, half_width: f64) -> Result<Self> {
        Self::new(dim, nodes_per_axis, vec![0.0; dim], half_width)
    }

    /// Centered box with prescribed spacing; `half_width = h (n - 1) / 2`.
    pub fn with_spacing(dim: usize, nodes_per_axis: usize, spacing: f64) -> Result<Self> {
        Self::centered(dim, nodes_per_axis, spacing * (nodes_per_axis - 1) as f64 / 2.0)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nodes_per_axis(&self) -> usize {
        self.nodes_per_axis
    }

    pub fn origin(&self) -> &[f64] {
        &self.origin
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn node_count(&self) -> usize {
        self.nodes_per_axis.pow(self.dim as u32)
    }

    /// Cell volume `h^m`.
    pub fn cell_volume(&self) -> f64 {
        self.spacing.powi(self.dim as i32)
    }

    /// Linear stride of each axis.
    pub fn strides(&self) -> Vec<usize> {
        let n = self.nodes_per_axis;
        (0..self.dim).map(|a| n.pow((self.dim - 1 - a) as u32)).collect()
    }

    pub fn lower(&self, axis: usize) -> f64 {
        self.origin[axis] - self.half_width
    }

    pub fn coord(&self, axis: usize, i: usize) -> f64 {
        self.lower(axis) + i as f64 * self.spacing
    }

    pub fn linear(&self, idx: &[usize]) -> usize {
        idx.iter().fold(0, |acc, &i| acc * self.nodes_per_axis + i)
    }

    pub fn multi_index(&self, mut lin: usize) -> Vec<usize> {
        let n = self.nodes_per_axis;
        let mut idx = vec![0; self.dim];
        for a in (0..self.dim).rev() {
            idx[a] = lin % n;
            lin /= n;
        }
        idx
    }

    pub fn position(&self, lin: usize) -> Vec<f64> {
        self.multi_index(lin).iter().enumerate().map(|(a, &i)| self.coord(a, i)).collect()
    }

    pub fn position_of(&self, idx: &[usize]) -> Vec<f64> {
        idx.iter().enumerate().map(|(a, &i)| self.coord(a, i)).collect()
    }

    /// Number of node layers between the node and the nearest face.
    pub fn layer(&self, idx: &[usize]) -> usize {
        let n = self.nodes_per_axis;
        idx.iter().map(|&i| i.min(n - 1 - i)).min().unwrap_or(0)
    }

    /// [`layer`](Self::layer) of every node, in linear order (saturating at 255).
    pub fn layers(&self) -> Vec<u8> {
        let mut out = vec![0u8; self.node_count()];
        if let Some(b) = self.interior_box(0) {
            b.for_each(self, |idx, lin| out[lin] = self.layer(idx).min(255) as u8);
        }
        out
    }

    pub fn contains_point(&self, x: &[f64]) -> bool {
        x.len() == self.dim
            && x.iter().zip(&self.origin).all(|(xi, oi)| (xi - oi).abs() <= self.half_width * (1.0 + 1e-14))
    }

    /// Whether the closed ball `B_r(x)` lies in the box shrunk by `margin`.
    pub fn contains_ball(&self, x: &[f64], r: f64, margin: f64) -> bool {
        x.len() == self.dim
            && x.iter()
                .zip(&self.origin)
                .all(|(xi, oi)| (xi - oi).abs() + r <= self.half_width - margin + 1e-12 * self.half_width)
    }

    /// Distance from `x` to the boundary of the box shrunk by `margin`
    /// (negative outside).
    pub fn distance_to_boundary(&self, x: &[f64], margin: f64) -> f64 {
        x.iter()
            .zip(&self.origin)
            .map(|(xi, oi)| self.half_width - margin - (xi - oi).abs())
            .fold(f64::INFINITY, f64::min)
    }

    /// Inclusive node-index range on `axis` covering `[lo, hi]`, clipped to the grid.
    pub fn index_range(&self, axis: usize, lo: f64, hi: f64) -> Option<(usize, usize)> {
        let l = ((lo - self.lower(axis)) / self.spacing).ceil().max(0.0);
        let u = ((hi - self.lower(axis)) / self.spacing).floor().min((self.nodes_per_axis - 1) as f64);
        if l > u {
            None
        } else {
            Some((l as usize, u as usize))
        }
    }

    /// Node box `[x - r, x + r]^m` clipped to the grid, as per-axis inclusive ranges.
    pub fn bounding_box(&self, x: &[f64], r: f64) -> Option<IndexBox> {
        let mut ranges = Vec::with_capacity(self.dim);
        for a in 0..self.dim {
            ranges.push(self.index_range(a, x[a] - r, x[a] + r)?);
        }
        Some(IndexBox { ranges })
    }

    /// Box of all nodes at least `layer` layers from the boundary.
    pub fn interior_box(&self, layer: usize) -> Option<IndexBox> {
        let n = self.nodes_per_axis;
        if 2 * layer >= n {
            return None;
        }
        Some(IndexBox { ranges: vec![(layer, n - 1 - layer); self.dim] })
    }

    /// Nearest node to `x` (clamped to the grid).
    pub fn nearest_node(&self, x: &[f64]) -> Vec<usize> {
        (0..self.dim)
            .map(|a| {
                let t = ((x[a] - self.lower(a)) / self.spacing).round();
                t.clamp(0.0, (self.nodes_per_axis - 1) as f64) as usize
            })
            .collect()
    }

    /// Same box with spacing halved (`2n - 1` nodes).
    pub fn refined(&self) -> Result<Self> {
        Self::new(self.dim, 2 * self.nodes_per_axis - 1, self.origin.clone(), self.half_width)
    }
}

/// Inclusive per-axis node-index ranges.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IndexBox {
    pub ranges: Vec<(usize, usize)>,
}

impl IndexBox {
    pub fn len(&self) -> usize {
        self.ranges.iter().map(|(l, u)| u - l + 1).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Calls `f(multi_index, linear_index)` for every node, in row-major order.
    pub fn for_each(&self, domain: &GridDomain, mut f: impl FnMut(&[usize], usize)) {
        let m = self.ranges.len();
        let mut idx: Vec<usize> = self.ranges.iter().map(|r| r.0).collect();
        loop {
            let lin = domain.linear(&idx);
            f(&idx, lin);
            let mut a = m;
            loop {
                if a == 0 {
                    return;
                }
                a -= 1;
                if idx[a] < self.ranges[a].1 {
                    idx[a] += 1;
                    break;
                }
                idx[a] = self.ranges[a].0;
            }
        }
    }

    /// All node linear indices, row-major.
    pub fn linear_indices(&self, domain: &GridDomain) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.len());
        self.for_each(domain, |_, lin| out.push(lin));
        out
    }
}

/// Surface area of the unit sphere `S^{m-1}` in ℝ^m.
pub fn unit_sphere_area(m: usize) -> f64 {
    // ω_{m-1} = 2 π^{m/2} / Γ(m/2), via the recursion ω_{m+1} = 2π ω_{m-1} / m
    match m {
        0 => 0.0,
        1 => 2.0,
        2 => 2.0 * std::f64::consts::PI,
        _ => 2.0 * std::f64::consts::PI * unit_sphere_area(m - 2) / (m - 2) as f64,
    }
}

/// Volume of the unit ball in ℝ^m.
pub fn unit_ball_volume(m: usize) -> f64 {
    unit_sphere_area(m) / m as f64
}
