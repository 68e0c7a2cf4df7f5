//! Discrete extrinsic bienergy, its constrained Euler–Lagrange residual and
//! a projected descent minimizer with a frozen boundary collar.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{ScalarField, SphereField};
use crate::grid::GridDomain;
use crate::sum::par_sum;

/// Centered 5-point-per-axis Laplacian on a fixed grid.
#[derive(Clone, Debug)]
pub struct Laplacian {
    domain: GridDomain,
    strides: Vec<usize>,
    layers: Vec<u8>,
    inv_h2: f64,
}

impl Laplacian {
    pub fn new(domain: &GridDomain) -> Self {
        let h = domain.spacing();
        Self { domain: domain.clone(), strides: domain.strides(), layers: domain.layers(), inv_h2: 1.0 / (h * h) }
    }

    pub fn layers(&self) -> &[u8] {
        &self.layers
    }

    /// `Δ values` at nodes with layer ≥ `min_layer` (at least 1); zero elsewhere.
    pub fn apply(&self, values: &[f64], comps: usize, min_layer: u8, out: &mut [f64]) {
        out.par_chunks_mut(comps).enumerate().for_each(|(lin, o)| {
            if self.layers[lin] < min_layer.max(1) {
                o.fill(0.0);
                return;
            }
            // differences against the center keep constants exactly in the kernel
            let base = lin * comps;
            o.fill(0.0);
            for &s in &self.strides {
                let p = (lin + s) * comps;
                let q = (lin - s) * comps;
                for c in 0..comps {
                    let v = values[base + c];
                    o[c] += (values[p + c] - v) + (values[q + c] - v);
                }
            }
            o.iter_mut().for_each(|x| *x *= self.inv_h2);
        });
    }

    /// `h^m Σ |Δf|²` over nodes with layer ≥ 1, from a precomputed Laplacian.
    pub fn energy_of(&self, lap: &[f64], comps: usize) -> f64 {
        par_sum(self.layers.len(), |lin| {
            if self.layers[lin] < 1 {
                return 0.0;
            }
            lap[lin * comps..(lin + 1) * comps].iter().map(|v| v * v).sum()
        }) * self.domain.cell_volume()
    }
}

impl Laplacian {
    /// `E(f + δ) − E(f) = h^m Σ Δδ·(2Δf + Δδ)` from `Δf` and `Δδ`.
    pub fn energy_change(&self, lap: &[f64], lap_delta: &[f64], comps: usize) -> f64 {
        par_sum(self.layers.len(), |lin| {
            if self.layers[lin] < 1 {
                return 0.0;
            }
            let r = lin * comps..(lin + 1) * comps;
            lap[r.clone()].iter().zip(&lap_delta[r]).map(|(l, d)| d * (2.0 * l + d)).sum()
        }) * self.domain.cell_volume()
    }
}

/// Discrete bienergy `h^m Σ |Δf|²` over all nodes where the centered Laplacian is defined.
pub fn energy(field: &SphereField) -> f64 {
    let op = Laplacian::new(field.domain());
    let mut lap = vec![0.0; field.values().len()];
    op.apply(field.values(), field.comps(), 1, &mut lap);
    op.energy_of(&lap, field.comps())
}

/// `P_f(Δ²f)` at nodes with layer ≥ `min_layer` (at least 2), zero elsewhere.
fn tangent_bilaplacian(op: &Laplacian, values: &[f64], lap: &[f64], comps: usize, min_layer: u8, out: &mut [f64]) {
    op.apply(lap, comps, min_layer.max(2), out);
    out.par_chunks_mut(comps).enumerate().for_each(|(lin, g)| {
        let f = &values[lin * comps..(lin + 1) * comps];
        let dot: f64 = g.iter().zip(f).map(|(a, b)| a * b).sum();
        g.iter_mut().zip(f).for_each(|(gi, fi)| *gi -= dot * fi);
    });
}

/// `|P_f(Δ²f)|` per node; zero on the two outer layers where `Δ²` is undefined.
pub fn el_residual(field: &SphereField) -> ScalarField {
    let op = Laplacian::new(field.domain());
    let comps = field.comps();
    let mut lap = vec![0.0; field.values().len()];
    op.apply(field.values(), comps, 1, &mut lap);
    let mut g = vec![0.0; lap.len()];
    tangent_bilaplacian(&op, field.values(), &lap, comps, 2, &mut g);
    let values = g.chunks_exact(comps).map(|v| v.iter().map(|x| x * x).sum::<f64>().sqrt()).collect();
    ScalarField { domain: field.domain().clone(), values }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepPolicy {
    /// Every line search starts from `step0`.
    Fixed,
    /// Starts from twice the last accepted step.
    Warm,
    /// Starts from the Barzilai–Borwein step `⟨s,s⟩/⟨s,y⟩`.
    Bb,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MinimizeConfig {
    pub max_iters: usize,
    /// Initial trial step; `None` means `h⁴`.
    pub step0: Option<f64>,
    pub armijo_c: f64,
    pub armijo_shrink: f64,
    pub el_tolerance: f64,
    pub collar_width: usize,
    pub seed: u64,
    /// Name of a registered [`DescentStrategy`].
    pub strategy: String,
    pub step_policy: StepPolicy,
}

impl Default for MinimizeConfig {
    fn default() -> Self {
        Self {
            max_iters: 5000,
            step0: None,
            armijo_c: 1e-4,
            armijo_shrink: 0.5,
            el_tolerance: 1e-6,
            collar_width: 2,
            seed: 0,
            strategy: "cg".into(),
            step_policy: StepPolicy::Bb,
        }
    }
}

impl MinimizeConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.into()));
        if self.collar_width < 2 {
            return bad("collar_width must be at least 2");
        }
        if !(self.armijo_c > 0.0 && self.armijo_c < 1.0) {
            return bad("armijo_c must lie in (0, 1)");
        }
        if !(self.armijo_shrink > 0.0 && self.armijo_shrink < 1.0) {
            return bad("armijo_shrink must lie in (0, 1)");
        }
        if !(self.el_tolerance > 0.0) {
            return bad("el_tolerance must be positive");
        }
        if let Some(s) = self.step0 {
            if !(s > 0.0 && s.is_finite()) {
                return bad("step0 must be positive");
            }
        }
        strategy(&self.strategy).map(|_| ())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iteration: usize,
    pub energy: f64,
    /// Step accepted on the way into this iterate (0 for the initial field).
    pub step: f64,
    pub residual: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Converged,
    MaxIters,
    /// No steepest-descent step satisfied the Armijo condition.
    Stalled,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTrace {
    pub records: Vec<TraceRecord>,
    pub stop: StopReason,
}

impl ConvergenceTrace {
    pub fn last(&self) -> &TraceRecord {
        self.records.last().expect("trace has the initial record")
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("iteration,energy,step,residual\n");
        for r in &self.records {
            s.push_str(&format!("{},{:e},{:e},{:e}\n", r.iteration, r.energy, r.step, r.residual));
        }
        s
    }
}

/// Produces descent directions from the tangent gradient at free nodes.
pub trait DescentStrategy: Send {
    fn name(&self) -> &'static str;
    /// Writes a direction into `dir`; `grad` and `dir` vanish on frozen nodes.
    fn direction(&mut self, grad: &[f64], values: &[f64], comps: usize, dir: &mut [f64]);
    /// Forgets accumulated history (next direction is steepest descent).
    fn reset(&mut self);
}

pub const STRATEGY_NAMES: &[&str] = &["steepest", "cg"];

pub fn strategy(name: &str) -> Result<Box<dyn DescentStrategy>> {
    match name {
        "steepest" => Ok(Box::new(Steepest)),
        "cg" => Ok(Box::new(ProjectedCg::default())),
        _ => Err(Error::InvalidParameter(format!(
            "unknown descent strategy {name:?} (known: {})",
            STRATEGY_NAMES.join(", ")
        ))),
    }
}

struct Steepest;

impl DescentStrategy for Steepest {
    fn name(&self) -> &'static str {
        "steepest"
    }

    fn direction(&mut self, grad: &[f64], _values: &[f64], _comps: usize, dir: &mut [f64]) {
        dir.par_iter_mut().zip(grad).for_each(|(d, g)| *d = -g);
    }

    fn reset(&mut self) {}
}

/// Polak–Ribière+ conjugate gradients; the previous direction is carried to
/// the current tangent spaces by projection.
#[derive(Default)]
struct ProjectedCg {
    prev_grad: Vec<f64>,
    prev_dir: Vec<f64>,
}

impl DescentStrategy for ProjectedCg {
    fn name(&self) -> &'static str {
        "cg"
    }

    fn direction(&mut self, grad: &[f64], values: &[f64], comps: usize, dir: &mut [f64]) {
        let beta = if self.prev_grad.len() == grad.len() {
            let n = grad.len() / comps;
            let num = par_sum(n, |i| {
                let r = i * comps..(i + 1) * comps;
                grad[r.clone()].iter().zip(&self.prev_grad[r]).map(|(g, p)| g * (g - p)).sum()
            });
            let den = par_sum(n, |i| self.prev_grad[i * comps..(i + 1) * comps].iter().map(|p| p * p).sum());
            if den > 0.0 {
                (num / den).max(0.0)
            } else {
                0.0
            }
        } else {
            0.0
        };
        if beta > 0.0 {
            let prev = &self.prev_dir;
            dir.par_chunks_mut(comps).enumerate().for_each(|(lin, d)| {
                let r = lin * comps..(lin + 1) * comps;
                let (f, p, g) = (&values[r.clone()], &prev[r.clone()], &grad[r]);
                let dot: f64 = p.iter().zip(f).map(|(a, b)| a * b).sum();
                for c in 0..comps {
                    d[c] = -g[c] + beta * (p[c] - dot * f[c]);
                }
            });
        } else {
            dir.par_iter_mut().zip(grad).for_each(|(d, g)| *d = -g);
        }
        self.prev_grad.clear();
        self.prev_grad.extend_from_slice(grad);
        self.prev_dir.clear();
        self.prev_dir.extend_from_slice(dir);
    }

    fn reset(&mut self) {
        self.prev_grad.clear();
        self.prev_dir.clear();
    }
}

/// Replaces every node with layer ≥ `collar` by an independent uniformly
/// random unit vector.
pub fn random_interior(boundary: &SphereField, collar: usize, seed: u64) -> SphereField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let comps = boundary.comps();
    let layers = boundary.domain().layers();
    let mut values = boundary.values().to_vec();
    for (lin, v) in values.chunks_exact_mut(comps).enumerate() {
        if (layers[lin] as usize) < collar {
            continue;
        }
        loop {
            v.iter_mut().for_each(|x| *x = rng.gen_range(-1.0..1.0));
            let n2: f64 = v.iter().map(|x| x * x).sum();
            if n2 > 1e-4 && n2 <= 1.0 {
                let n = n2.sqrt();
                v.iter_mut().for_each(|x| *x /= n);
                break;
            }
        }
    }
    SphereField::from_raw(boundary.domain().clone(), boundary.target_dim(), values)
}

/// `trial = |v|·(v + τd)/|v + τd|` at free nodes, together with the exact
/// increment `delta = trial − v` computed without cancellation.
fn retract(
    values: &[f64],
    dir: &[f64],
    tau: f64,
    comps: usize,
    layers: &[u8],
    collar: u8,
    trial: &mut [f64],
    delta: &mut [f64],
) {
    trial.par_chunks_mut(comps).zip(delta.par_chunks_mut(comps)).enumerate().for_each(|(lin, (t, dl))| {
        let r = lin * comps..(lin + 1) * comps;
        let (v, d) = (&values[r.clone()], &dir[r]);
        if layers[lin] < collar {
            t.copy_from_slice(v);
            dl.fill(0.0);
            return;
        }
        let (mut vv, mut vd, mut dd) = (0.0, 0.0, 0.0);
        for c in 0..comps {
            vv += v[c] * v[c];
            vd += v[c] * d[c];
            dd += d[c] * d[c];
        }
        // the norm is kept rather than snapped to 1, so a vanishing step is an exact no-op
        let q = (2.0 * tau * vd + tau * tau * dd) / vv;
        let s = (1.0 + q).sqrt();
        let k = -q / (s * (1.0 + s));
        for c in 0..comps {
            dl[c] = k * v[c] + tau * d[c] / s;
            t[c] = v[c] + dl[c];
        }
    });
}

fn max_norm(v: &[f64], comps: usize) -> f64 {
    v.par_chunks(comps).map(|g| g.iter().map(|x| x * x).sum::<f64>().sqrt()).reduce(|| 0.0, f64::max)
}

fn dot(a: &[f64], b: &[f64], comps: usize) -> f64 {
    par_sum(a.len() / comps, |i| {
        let r = i * comps..(i + 1) * comps;
        a[r.clone()].iter().zip(&b[r]).map(|(x, y)| x * y).sum()
    })
}

const RELAP_EVERY: usize = 64;

/// Projected descent on the bienergy with the collar (`layer < collar_width`)
/// frozen to `boundary`'s values.
pub fn minimize(
    initial: &SphereField,
    boundary: &SphereField,
    cfg: &MinimizeConfig,
) -> Result<(SphereField, ConvergenceTrace)> {
    cfg.validate()?;
    let domain = initial.domain();
    if domain != boundary.domain() || initial.target_dim() != boundary.target_dim() {
        return Err(Error::InvalidParameter("initial and boundary fields must share domain and target".into()));
    }
    let comps = initial.comps();
    let op = Laplacian::new(domain);
    let collar = cfg.collar_width.min(255) as u8;
    if domain.nodes_per_axis() <= 2 * cfg.collar_width {
        return Err(Error::InvalidParameter("collar leaves no free nodes".into()));
    }
    for (lin, (a, b)) in initial.values().chunks_exact(comps).zip(boundary.values().chunks_exact(comps)).enumerate() {
        if op.layers()[lin] < collar && a.iter().zip(b).any(|(x, y)| (x - y).abs() > 1e-12) {
            return Err(Error::InvalidParameter(format!(
                "initial field differs from boundary data on collar node {lin}"
            )));
        }
    }
    let h = domain.spacing();
    let step0 = cfg.step0.unwrap_or(h.powi(4));
    let two_hm = 2.0 * domain.cell_volume();
    let mut strat = strategy(&cfg.strategy)?;

    let mut values = initial.values().to_vec();
    let mut lap = vec![0.0; values.len()];
    op.apply(&values, comps, 1, &mut lap);
    let mut e = op.energy_of(&lap, comps);
    if !e.is_finite() {
        return Err(Error::NonFinite { iteration: 0, detail: format!("initial energy {e}") });
    }
    let mut grad = vec![0.0; values.len()];
    let mut dir = vec![0.0; values.len()];
    let mut trial = values.clone();
    let mut trial_lap = vec![0.0; values.len()];
    let mut delta = vec![0.0; values.len()];
    let mut prev_values: Vec<f64> = Vec::new();
    let mut prev_grad: Vec<f64> = Vec::new();
    let mut last_step = step0;
    let mut records = Vec::new();
    let mut stop = StopReason::MaxIters;

    for iter in 0..=cfg.max_iters {
        tangent_bilaplacian(&op, &values, &lap, comps, collar, &mut grad);
        let res = max_norm(&grad, comps);
        if !res.is_finite() {
            return Err(Error::NonFinite { iteration: iter, detail: format!("residual {res}") });
        }
        records.push(TraceRecord {
            iteration: iter,
            energy: e,
            step: if iter == 0 { 0.0 } else { last_step },
            residual: res,
        });
        if res <= cfg.el_tolerance {
            stop = StopReason::Converged;
            break;
        }
        if iter == cfg.max_iters {
            break;
        }

        let mut tau0 = match cfg.step_policy {
            StepPolicy::Fixed => step0,
            StepPolicy::Warm => 2.0 * last_step,
            StepPolicy::Bb => 2.0 * last_step,
        };
        if cfg.step_policy == StepPolicy::Bb && !prev_values.is_empty() {
            // s = f_k − f_{k−1}, y = g_k − g_{k−1}
            let n = values.len() / comps;
            let (ss, sy) = (
                par_sum(n, |i| (i * comps..(i + 1) * comps).map(|j| (values[j] - prev_values[j]).powi(2)).sum()),
                par_sum(n, |i| {
                    (i * comps..(i + 1) * comps).map(|j| (values[j] - prev_values[j]) * (grad[j] - prev_grad[j])).sum()
                }),
            );
            let bb = ss / sy;
            if sy > 0.0 && bb.is_finite() {
                tau0 = bb;
            }
        }

        strat.direction(&grad, &values, comps, &mut dir);
        let mut slope = dot(&grad, &dir, comps);
        if !(slope < 0.0) {
            strat.reset();
            strat.direction(&grad, &values, comps, &mut dir);
            slope = dot(&grad, &dir, comps);
        }

        let mut accepted = None;
        let mut restarted = false;
        let mut tau = tau0;
        for _ in 0..200 {
            retract(&values, &dir, tau, comps, op.layers(), collar, &mut trial, &mut delta);
            op.apply(&delta, comps, 1, &mut trial_lap);
            let de = op.energy_change(&lap, &trial_lap, comps);
            if de.is_finite() && de <= cfg.armijo_c * tau * two_hm * slope {
                accepted = Some(e + de);
                break;
            }
            tau *= cfg.armijo_shrink;
            if tau < 1e-12 * step0 {
                if restarted || strat.name() == "steepest" {
                    break;
                }
                // a conjugate direction that admits no step: fall back to steepest descent
                restarted = true;
                strat.reset();
                strat.direction(&grad, &values, comps, &mut dir);
                slope = dot(&grad, &dir, comps);
                tau = tau0;
            }
        }
        let Some(et) = accepted else {
            stop = StopReason::Stalled;
            break;
        };
        if cfg.step_policy == StepPolicy::Bb {
            // grad is rewritten in full at the top of the loop and trial by the next retraction
            std::mem::swap(&mut prev_values, &mut values);
            std::mem::swap(&mut prev_grad, &mut grad);
            grad.resize(prev_grad.len(), 0.0);
            std::mem::swap(&mut values, &mut trial);
            trial.resize(values.len(), 0.0);
        } else {
            std::mem::swap(&mut values, &mut trial);
        }
        if (iter + 1) % RELAP_EVERY == 0 {
            op.apply(&values, comps, 1, &mut lap);
        } else {
            // Δ is linear, so Δ(f + δ) = Δf + Δδ; refreshed periodically against drift
            lap.par_iter_mut().zip(&trial_lap).for_each(|(l, d)| *l += d);
        }
        e = et;
        last_step = tau;
    }
    let out = SphereField::from_raw(domain.clone(), initial.target_dim(), values);
    Ok((out, ConvergenceTrace { records, stop }))
}
