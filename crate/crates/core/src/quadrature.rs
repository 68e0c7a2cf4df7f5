//! Ball, shell and annulus quadrature on a grid with partial-volume weights.
//!
//! Each node owns the cube of side `h` centered on it. Its weight in `B_r(x)`
//! is 1 or 0 when the cube is certainly inside or outside, otherwise the
//! fraction of the 3^m subcell centers that fall in the ball.

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::grid::GridDomain;
use crate::sum::pairwise_sum;

/// Fraction of the node cell centered at `y` inside `B_r(x)`.
pub fn partial_weight(h: f64, y: &[f64], x: &[f64], r: f64) -> f64 {
    if r <= 0.0 {
        return 0.0;
    }
    let m = y.len();
    let d2: f64 = y.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
    let half_diag = 0.5 * h * (m as f64).sqrt();
    if d2 <= (r - half_diag).max(0.0).powi(2) && r >= half_diag {
        return 1.0;
    }
    if d2 >= (r + half_diag).powi(2) {
        return 0.0;
    }
    let third = h / 3.0;
    let mut sq = [[0.0f64; 3]; 6];
    for a in 0..m {
        for (k, s) in [-third, 0.0, third].iter().enumerate() {
            let t = y[a] + s - x[a];
            sq[a][k] = t * t;
        }
    }
    let r2 = r * r;
    let inside = count_inside(&sq[..m], 0.0, r2);
    inside as f64 / 3f64.powi(m as i32)
}

fn count_inside(sq: &[[f64; 3]], acc: f64, r2: f64) -> usize {
    if acc > r2 {
        return 0;
    }
    match sq.split_first() {
        None => 1,
        Some((first, rest)) => first.iter().map(|v| count_inside(rest, acc + v, r2)).sum(),
    }
}

/// Nodes with nonzero weight difference `w(r_out) - w(r_in)` around `x`.
#[derive(Clone, Debug)]
pub struct RadialWeights {
    pub nodes: Vec<usize>,
    pub weights: Vec<f64>,
}

impl RadialWeights {
    /// Weights of the region `B_{r_out}(x) \ B_{r_in}(x)` (`r_in = 0` for a full ball).
    pub fn annulus(domain: &GridDomain, x: &[f64], r_in: f64, r_out: f64) -> Self {
        let h = domain.spacing();
        let reach = r_out + 0.5 * h * (domain.dim() as f64).sqrt();
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        if let Some(bb) = domain.bounding_box(x, reach) {
            let mut pos = vec![0.0; domain.dim()];
            bb.for_each(domain, |idx, lin| {
                for (a, &i) in idx.iter().enumerate() {
                    pos[a] = domain.coord(a, i);
                }
                let w = partial_weight(h, &pos, x, r_out) - partial_weight(h, &pos, x, r_in);
                if w != 0.0 {
                    nodes.push(lin);
                    weights.push(w);
                }
            });
        }
        Self { nodes, weights }
    }

    pub fn ball(domain: &GridDomain, x: &[f64], r: f64) -> Self {
        Self::annulus(domain, x, 0.0, r)
    }

    /// Shell-differencing weights `(w(r + h/2) - w(r - h/2)) / h`.
    pub fn shell(domain: &GridDomain, x: &[f64], r: f64) -> Self {
        let h = domain.spacing();
        let mut s = Self::annulus(domain, x, r - 0.5 * h, r + 0.5 * h);
        s.weights.iter_mut().for_each(|w| *w /= h);
        s
    }

    /// `h^m Σ w(node) g(node)` with fixed-order pairwise summation.
    pub fn integrate(&self, domain: &GridDomain, g: impl Fn(usize) -> f64) -> f64 {
        let terms: Vec<f64> = self.nodes.iter().zip(&self.weights).map(|(&n, &w)| w * g(n)).collect();
        pairwise_sum(&terms) * domain.cell_volume()
    }
}

fn check_ball(domain: &GridDomain, x: &[f64], r: f64) -> Result<()> {
    if x.len() != domain.dim() {
        return Err(Error::Geometry(format!("center has {} coordinates, expected {}", x.len(), domain.dim())));
    }
    if r < 2.0 * domain.spacing() * (1.0 - 1e-12) {
        return Err(Error::Geometry(format!("radius {r} below 2h = {}", 2.0 * domain.spacing())));
    }
    if !domain.contains_ball(x, r, 0.0) {
        return Err(Error::Geometry(format!("ball B_{r}({x:?}) not contained in the domain")));
    }
    Ok(())
}

/// `∫_{B_r(x)} g` by partial-volume node quadrature.
pub fn ball_integral(g: &ScalarField, x: &[f64], r: f64) -> Result<f64> {
    check_ball(&g.domain, x, r)?;
    Ok(RadialWeights::ball(&g.domain, x, r).integrate(&g.domain, |n| g.values[n]))
}

/// `∫_{∂B_r(x)} g dH^{m-1}` by differencing balls at `r ± h/2`.
pub fn shell_integral(g: &ScalarField, x: &[f64], r: f64) -> Result<f64> {
    check_ball(&g.domain, x, r + 0.5 * g.domain.spacing())?;
    Ok(RadialWeights::shell(&g.domain, x, r).integrate(&g.domain, |n| g.values[n]))
}

/// Ball integral of a lazily evaluated integrand.
pub fn ball_integral_with(domain: &GridDomain, x: &[f64], r: f64, g: impl Fn(usize) -> f64) -> Result<f64> {
    check_ball(domain, x, r)?;
    Ok(RadialWeights::ball(domain, x, r).integrate(domain, g))
}

/// Shell integral of a lazily evaluated integrand.
pub fn shell_integral_with(domain: &GridDomain, x: &[f64], r: f64, g: impl Fn(usize) -> f64) -> Result<f64> {
    check_ball(domain, x, r + 0.5 * domain.spacing())?;
    Ok(RadialWeights::shell(domain, x, r).integrate(domain, g))
}
