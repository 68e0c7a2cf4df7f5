//! Truncated multivariate Taylor polynomials (degree ≤ 4).
//!
//! Evaluating a closed-form map on [`Taylor`] inputs yields every partial
//! derivative up to fourth order exactly (to rounding), which is how the
//! analytic oracle produces its jets.

use std::sync::Arc;

use crate::jet::{multi_indices, Jet, MAX_ORDER};

/// Monomial bookkeeping for `dim` variables up to total degree 4.
#[derive(Debug)]
pub struct TaylorSpace {
    dim: usize,
    /// Exponent vectors, grouped by degree, lexicographic within a degree.
    exponents: Vec<Vec<u8>>,
    degree: Vec<usize>,
    /// Sparse product table: `(i, j, k)` with `e_i + e_j = e_k`.
    products: Vec<(u16, u16, u16)>,
    /// Monomial index for each sorted derivative tuple, per order.
    tuple_monomial: Vec<Vec<usize>>,
    /// `α!` for each monomial.
    factorials: Vec<f64>,
}

impl TaylorSpace {
    pub fn new(dim: usize) -> Arc<Self> {
        let mut exponents = vec![vec![0u8; dim]];
        let mut degree = vec![0];
        let mut tuple_monomial = Vec::new();
        for l in 1..=MAX_ORDER {
            let mut per = Vec::new();
            for tuple in multi_indices(dim, l) {
                let mut e = vec![0u8; dim];
                for a in tuple {
                    e[a] += 1;
                }
                per.push(exponents.len());
                exponents.push(e);
                degree.push(l);
            }
            tuple_monomial.push(per);
        }
        let lookup = |e: &[u8]| exponents.iter().position(|x| x.as_slice() == e);
        let mut products = Vec::new();
        for i in 0..exponents.len() {
            for j in 0..exponents.len() {
                if degree[i] + degree[j] > MAX_ORDER {
                    continue;
                }
                let sum: Vec<u8> = exponents[i].iter().zip(&exponents[j]).map(|(a, b)| a + b).collect();
                let k = lookup(&sum).expect("monomial present");
                products.push((i as u16, j as u16, k as u16));
            }
        }
        let factorials = exponents
            .iter()
            .map(|e| e.iter().map(|&k| (1..=k as usize).map(|i| i as f64).product::<f64>()).product())
            .collect();
        Arc::new(Self { dim, exponents, degree, products, tuple_monomial, factorials })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.exponents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exponents.is_empty()
    }
}

/// Truncated Taylor expansion `Σ_α c_α (x - x0)^α`.
#[derive(Clone, Debug)]
pub struct Taylor {
    space: Arc<TaylorSpace>,
    coef: Vec<f64>,
}

impl Taylor {
    pub fn constant(space: &Arc<TaylorSpace>, c: f64) -> Self {
        let mut coef = vec![0.0; space.len()];
        coef[0] = c;
        Self { space: space.clone(), coef }
    }

    /// The coordinate function `x_axis` expanded at `value`.
    pub fn variable(space: &Arc<TaylorSpace>, axis: usize, value: f64) -> Self {
        let mut t = Self::constant(space, value);
        t.coef[1 + axis] = 1.0;
        t
    }

    /// Coordinates `x_0, …, x_{m-1}` expanded at `x`.
    pub fn variables(space: &Arc<TaylorSpace>, x: &[f64]) -> Vec<Self> {
        x.iter().enumerate().map(|(a, &v)| Self::variable(space, a, v)).collect()
    }

    pub fn value(&self) -> f64 {
        self.coef[0]
    }

    pub fn add(&self, o: &Self) -> Self {
        let coef = self.coef.iter().zip(&o.coef).map(|(a, b)| a + b).collect();
        Self { space: self.space.clone(), coef }
    }

    pub fn sub(&self, o: &Self) -> Self {
        let coef = self.coef.iter().zip(&o.coef).map(|(a, b)| a - b).collect();
        Self { space: self.space.clone(), coef }
    }

    pub fn scale(&self, s: f64) -> Self {
        Self { space: self.space.clone(), coef: self.coef.iter().map(|a| a * s).collect() }
    }

    pub fn add_const(&self, c: f64) -> Self {
        let mut t = self.clone();
        t.coef[0] += c;
        t
    }

    pub fn mul(&self, o: &Self) -> Self {
        let mut coef = vec![0.0; self.coef.len()];
        for &(i, j, k) in &self.space.products {
            coef[k as usize] += self.coef[i as usize] * o.coef[j as usize];
        }
        Self { space: self.space.clone(), coef }
    }

    /// `g(self)` given `g^{(k)}(self.value())` for `k = 0..=4`.
    pub fn compose(&self, derivs: [f64; MAX_ORDER + 1]) -> Self {
        // g(a + t) = Σ g^{(k)}(a) t^k / k!, t nilpotent of degree 5
        let mut t = self.clone();
        t.coef[0] = 0.0;
        let mut out = Self::constant(&self.space, derivs[0]);
        let mut power = t.clone();
        let mut fact = 1.0;
        for (k, d) in derivs.iter().enumerate().skip(1) {
            fact *= k as f64;
            out = out.add(&power.scale(d / fact));
            if k < MAX_ORDER {
                power = power.mul(&t);
            }
        }
        out
    }

    pub fn recip(&self) -> Self {
        let a = self.value();
        let r = 1.0 / a;
        self.compose([r, -r * r, 2.0 * r.powi(3), -6.0 * r.powi(4), 24.0 * r.powi(5)])
    }

    pub fn div(&self, o: &Self) -> Self {
        self.mul(&o.recip())
    }

    pub fn sqrt(&self) -> Self {
        self.powf(0.5)
    }

    /// `self^p` for real `p` (value must be positive).
    pub fn powf(&self, p: f64) -> Self {
        let a = self.value();
        let mut d = [0.0; MAX_ORDER + 1];
        let mut c = 1.0;
        for (k, dk) in d.iter_mut().enumerate() {
            *dk = c * a.powf(p - k as f64);
            c *= p - k as f64;
        }
        self.compose(d)
    }

    pub fn sin(&self) -> Self {
        let (s, c) = self.value().sin_cos();
        self.compose([s, c, -s, -c, s])
    }

    pub fn cos(&self) -> Self {
        let (s, c) = self.value().sin_cos();
        self.compose([c, -s, -c, s, c])
    }

    /// `∂^α` of the expansion for a sorted derivative tuple of length `l`.
    pub fn derivative(&self, l: usize, t: usize) -> f64 {
        let k = self.space.tuple_monomial[l - 1][t];
        debug_assert_eq!(self.space.degree[k], l);
        self.coef[k] * self.space.factorials[k]
    }
}

/// Jet of a vector-valued map from its Taylor expansions (one per component).
pub fn jet_from_taylor(components: &[Taylor], order: usize) -> Jet {
    let space = &components[0].space;
    let comps = components.len();
    let mut jet = Jet::zeros(space.dim(), comps, order);
    for l in 1..=order {
        let count = space.tuple_monomial[l - 1].len();
        let tensor = jet.tensor_mut(l);
        for t in 0..count {
            for (c, comp) in components.iter().enumerate() {
                tensor[t * comps + c] = comp.derivative(l, t);
            }
        }
    }
    jet
}

/// Sum of squares `Σ x_i^2`.
pub fn norm_sq(xs: &[Taylor]) -> Taylor {
    let mut acc = xs[0].mul(&xs[0]);
    for x in &xs[1..] {
        acc = acc.add(&x.mul(x));
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_of_variables() {
        let sp = TaylorSpace::new(2);
        let v = Taylor::variables(&sp, &[2.0, 3.0]);
        let p = v[0].mul(&v[0]).mul(&v[1]); // x^2 y
        assert_eq!(p.value(), 12.0);
        let j = jet_from_taylor(&[p], 3);
        assert_eq!(j.component(&[0]), &[12.0]); // 2xy
        assert_eq!(j.component(&[1]), &[4.0]); // x^2
        assert_eq!(j.component(&[0, 0]), &[6.0]); // 2y
        assert_eq!(j.component(&[1, 0]), &[4.0]); // 2x
        assert_eq!(j.component(&[0, 0, 1]), &[2.0]);
        assert_eq!(j.component(&[1, 1, 1]), &[0.0]);
    }

    #[test]
    fn univariate_functions_match_closed_forms() {
        let sp = TaylorSpace::new(1);
        let x = Taylor::variable(&sp, 0, 0.7);
        let s = x.sin();
        let j = jet_from_taylor(&[s], 4);
        assert!((j.component(&[0, 0, 0, 0])[0] - 0.7f64.sin()).abs() < 1e-14);
        let r = x.recip();
        let j = jet_from_taylor(&[r], 4);
        assert!((j.component(&[0, 0, 0, 0])[0] - 24.0 / 0.7f64.powi(5)).abs() < 1e-9);
        let q = x.sqrt();
        let j = jet_from_taylor(&[q], 2);
        assert!((j.component(&[0, 0])[0] + 0.25 * 0.7f64.powf(-1.5)).abs() < 1e-12);
    }
}
