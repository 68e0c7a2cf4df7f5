//! Analyses a config can request, looked up by name.

use bihmap::monotonicity::{density_profile, lambda_bound, monotone_diff};
use bihmap::regscale::{derivative_sum, lp_reciprocal_of, RegScale, CERTIFICATE_TOL};
use bihmap::strata::{
    count_singular, decomposition_census, default_schedule, dyadic_rhos, scaling_slope, scan_fit_options, SampleRegion,
    ScaleLadder, StrataScan,
};
use bihmap::{GridDomain, SphereField};
use serde_json::json;

use crate::config::{
    CensusParams, CountParams, ExperimentConfig, RegScaleParams, RegionSpec, StrataParams, ThetaParams,
};
use crate::output::{coord_cells, coord_header, Cell, Check, CliError, CliResult, Csv, OutDir};

pub const ANALYSIS_NAMES: &[&str] = &["theta", "strata", "regscale", "count", "census"];

pub trait Analysis: Send + Sync {
    fn name(&self) -> &'static str;
    /// Checks every precondition that can be checked without the field values.
    fn validate(&self, domain: &GridDomain) -> CliResult<()>;
    /// Writes this analysis' CSV/JSON outputs and returns its invariant checks.
    fn run(&self, field: &SphereField, out: &mut OutDir) -> CliResult<Vec<Check>>;
}

/// Builds the analysis `name` from its config section.
pub fn build(name: &str, cfg: &ExperimentConfig) -> CliResult<Box<dyn Analysis>> {
    fn section<T: Clone>(name: &str, s: &Option<T>) -> CliResult<T> {
        s.clone().ok_or_else(|| CliError::Validation(format!("analysis `{name}` needs a [{name}] section")))
    }
    Ok(match name {
        "theta" => Box::new(Theta(section(name, &cfg.theta)?)),
        "strata" => Box::new(Strata(section(name, &cfg.strata)?)),
        "regscale" => Box::new(RegScaleAnalysis(section(name, &cfg.regscale)?)),
        "count" => Box::new(Count(section(name, &cfg.count)?)),
        "census" => Box::new(CensusAnalysis(section(name, &cfg.census)?)),
        other => {
            return Err(CliError::Validation(format!("unknown analysis `{other}`; expected one of {ANALYSIS_NAMES:?}")))
        }
    })
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

fn check_point(domain: &GridDomain, x: &[f64], what: &str) -> CliResult<()> {
    if x.len() != domain.dim() || x.iter().any(|v| !v.is_finite()) {
        return Err(invalid(format!("{what} {x:?} must have {} finite coordinates", domain.dim())));
    }
    Ok(())
}

fn ascending(xs: &[f64], what: &str) -> CliResult<()> {
    if xs.is_empty() || xs.iter().any(|v| !(*v > 0.0 && v.is_finite())) || xs.windows(2).any(|w| w[0] >= w[1]) {
        return Err(invalid(format!("{what} must be a non-empty, strictly ascending list of positive numbers")));
    }
    Ok(())
}

impl RegionSpec {
    fn center_in(&self, domain: &GridDomain) -> Vec<f64> {
        self.center.clone().unwrap_or_else(|| domain.origin().to_vec())
    }

    fn sample(&self, domain: &GridDomain) -> CliResult<SampleRegion> {
        let c = self.center_in(domain);
        check_point(domain, &c, "region center")?;
        SampleRegion::new(c, self.radius, self.stride).map_err(CliError::invalid)
    }

    /// The region grown by `reach` must fit inside the box shrunk by `margin`.
    fn fits(&self, domain: &GridDomain, reach: f64, margin: f64) -> CliResult<SampleRegion> {
        let s = self.sample(domain)?;
        if !domain.contains_ball(&s.center, s.radius + reach, margin) {
            return Err(invalid(format!(
                "region B_{}({:?}) grown by {reach} leaves the usable part of the domain",
                s.radius, s.center
            )));
        }
        if s.nodes(domain).is_empty() {
            return Err(invalid("region contains no grid nodes"));
        }
        Ok(s)
    }
}

struct Theta(ThetaParams);

impl Theta {
    fn centers(&self, d: &GridDomain) -> Vec<Vec<f64>> {
        self.0.centers.clone().unwrap_or_else(|| vec![d.origin().to_vec()])
    }
}

impl Analysis for Theta {
    fn name(&self) -> &'static str {
        "theta"
    }

    fn validate(&self, d: &GridDomain) -> CliResult<()> {
        let p = &self.0;
        ascending(&p.radii, "theta radii")?;
        let h = d.spacing();
        if p.radii[0] < 4.0 * h * (1.0 - 1e-12) {
            return Err(invalid(format!("theta radii must be at least 4h = {}", 4.0 * h)));
        }
        if let Some(l) = p.lambda {
            if !(l > 0.0 && l.is_finite()) {
                return Err(invalid("lambda must be positive"));
            }
        }
        let top = *p.radii.last().unwrap();
        for c in self.centers(d) {
            check_point(d, &c, "theta center")?;
            if !d.contains_ball(&c, top + h, 0.0) {
                return Err(invalid(format!("ball of radius {} around {c:?} leaves the domain", top + h)));
            }
        }
        Ok(())
    }

    fn run(&self, field: &SphereField, out: &mut OutDir) -> CliResult<Vec<Check>> {
        let d = field.domain();
        let centers = self.centers(d);
        let radii = &self.0.radii;
        let lambda = match self.0.lambda {
            Some(l) => l,
            None => lambda_bound(field, &centers, radii).map_err(CliError::compute)?,
        };
        let mut header = vec!["center".to_string()];
        header.extend(coord_header(d.dim()));
        header.extend(["r", "theta", "w_theta", "w_annulus"].map(String::from));
        let mut csv = Csv::new(&header);
        let mut profiles = Vec::new();
        let (mut bounded, mut monotone, mut nonneg) = (true, true, true);
        let mut worst_gap = 0.0f64;
        for (i, x) in centers.iter().enumerate() {
            let prof = density_profile(field, x, radii, Some(lambda)).map_err(CliError::compute)?;
            let diffs = radii
                .windows(2)
                .map(|w| monotone_diff(field, x, w[0], w[1]))
                .collect::<bihmap::Result<Vec<_>>>()
                .map_err(CliError::compute)?;
            for (j, r) in radii.iter().enumerate() {
                let mut row = vec![Cell::Int(i)];
                row.extend(coord_cells(x));
                row.push(Cell::Real(*r));
                row.push(Cell::Real(prof.theta[j]));
                if j == 0 {
                    row.extend([Cell::Empty, Cell::Empty]);
                } else {
                    row.extend([Cell::Real(diffs[j - 1].w_theta), Cell::Real(diffs[j - 1].w_annulus)]);
                }
                csv.row(&row);
            }
            bounded &= prof.within_bound();
            monotone &= prof.is_monotone();
            nonneg &= diffs.iter().all(|m| m.w_annulus >= 0.0);
            for m in &diffs {
                worst_gap = worst_gap.max((m.w_theta - m.w_annulus).abs());
            }
            profiles.push(json!({ "center": x, "theta": prof.theta, "max_violation": prof.max_violation(), "monotone": prof.is_monotone() }));
        }
        out.write_csv("theta.csv", &csv)?;
        let max_violation = profiles.iter().map(|p| p["max_violation"].as_f64().unwrap_or(0.0)).fold(0.0, f64::max);
        out.write_json(
            "theta.json",
            &json!({
                "radii": radii,
                "lambda": lambda,
                "tolerance": bihmap::monotonicity::DEFAULT_VIOLATION_FRACTION * lambda,
                "max_violation": max_violation,
                "max_w_route_gap": worst_gap,
                "profiles": profiles,
            }),
        )?;
        Ok(vec![
            Check::new("monotonicity", "theta within lambda", bounded, format!("lambda = {lambda}")),
            Check::new(
                "monotonicity",
                "theta non-decreasing",
                monotone,
                format!("largest negative increment {max_violation}"),
            ),
            Check::new("monotonicity", "annulus route non-negative", nonneg, String::new()),
        ])
    }
}

struct Strata(StrataParams);

impl Strata {
    fn rhos(&self, d: &GridDomain) -> Vec<f64> {
        self.0.rhos.clone().unwrap_or_else(|| dyadic_rhos(d))
    }
}

impl Analysis for Strata {
    fn name(&self) -> &'static str {
        "strata"
    }

    fn validate(&self, d: &GridDomain) -> CliResult<()> {
        let p = &self.0;
        ascending(&p.scales, "strata scales")?;
        ascending(&p.r, "strata r")?;
        let (lo, hi) = (p.scales[0], *p.scales.last().unwrap());
        if p.r.iter().any(|r| *r < lo || *r > hi) {
            return Err(invalid(format!("strata r must lie within the scale range [{lo}, {hi}]")));
        }
        if p.k.is_empty() || p.k.iter().any(|k| *k >= d.dim()) {
            return Err(invalid(format!("strata k must be a non-empty list of integers below m = {}", d.dim())));
        }
        if p.eta.is_empty() || p.eta.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
            return Err(invalid("strata eta must be a non-empty list of positive numbers"));
        }
        let rhos = self.rhos(d);
        if !rhos.is_empty() {
            ascending(&rhos, "strata rhos")?;
        }
        p.fit.clone().unwrap_or_else(scan_fit_options).validate().map_err(CliError::invalid)?;
        p.region.fits(d, hi, 0.0)?;
        Ok(())
    }

    fn run(&self, field: &SphereField, out: &mut OutDir) -> CliResult<Vec<Check>> {
        let d = field.domain();
        let p = &self.0;
        let region = p.region.sample(d)?;
        let fit = p.fit.clone().unwrap_or_else(scan_fit_options);
        let scan = StrataScan::new(field, &p.scales, region, fit).map_err(CliError::compute)?;
        let rhos = self.rhos(d);
        let mut header: Vec<String> = ["k", "eta", "r", "node"].map(String::from).to_vec();
        header.extend(coord_header(d.dim()));
        let mut csv = Csv::new(&header);
        let mut atlases = Vec::new();
        let mut families = Vec::new();
        let mut sets = Vec::new();
        for &k in &p.k {
            for &eta in &p.eta {
                let fam = scan.strata(k, eta, &p.r, &rhos).map_err(CliError::compute)?;
                for a in &fam {
                    for &lin in &a.members {
                        let mut row = vec![Cell::Int(k), Cell::Real(eta), Cell::Real(a.r), Cell::Int(lin)];
                        row.extend(coord_cells(&d.position(lin)));
                        csv.row(&row);
                    }
                    atlases.push(json!({
                        "k": k, "eta": eta, "r": a.r, "members": a.members.len(), "sampled": a.sampled,
                        "rhos": a.rhos, "volumes": a.volumes, "fit": a.fit, "tube_at_r": a.tube_at_r,
                    }));
                }
                families.push(json!({ "k": k, "eta": eta, "scaling_slope": scaling_slope(&fam) }));
                sets.extend(fam.into_iter().map(|a| (k, eta, a.r, a.members)));
            }
        }
        out.write_csv("strata_members.csv", &csv)?;
        out.write_json(
            "strata.json",
            &json!({ "scales": scan.scales(), "region": p.region, "sampled": scan.nodes().len(), "atlases": atlases, "families": families }),
        )?;
        Ok(vec![Check::new(
            "strata",
            "strata nesting",
            nested(&sets),
            "k ≤ k', η' ≤ η, r ≤ r' implies S^k_{η,r} ⊆ S^k'_{η',r'}",
        )])
    }
}

/// Member lists are sorted, so inclusion is a merge walk.
fn nested(sets: &[(usize, f64, f64, Vec<usize>)]) -> bool {
    sets.iter().all(|(k, eta, r, a)| {
        sets.iter()
            .filter(|(k2, eta2, r2, _)| k <= k2 && eta2 <= eta && r <= r2)
            .all(|(_, _, _, b)| a.iter().all(|x| b.binary_search(x).is_ok()))
    })
}

struct RegScaleAnalysis(RegScaleParams);

impl Analysis for RegScaleAnalysis {
    fn name(&self) -> &'static str {
        "regscale"
    }

    fn validate(&self, d: &GridDomain) -> CliResult<()> {
        ascending(&self.0.p, "regscale p")?;
        if self.0.p[0] < 1.0 {
            return Err(invalid("regscale p must be at least 1"));
        }
        self.0.region.fits(d, 0.0, bihmap::regscale::CAP_MARGIN_LAYERS * d.spacing())?;
        Ok(())
    }

    fn run(&self, field: &SphereField, out: &mut OutDir) -> CliResult<Vec<Check>> {
        let d = field.domain();
        let nodes = self.0.region.sample(d)?.nodes(d);
        let rs = RegScale::new(field);
        let r_f = rs.at_nodes(&nodes);
        let floor = 0.25 * d.spacing();
        let mut header = vec!["node".to_string()];
        header.extend(coord_header(d.dim()));
        header.extend(["r_f", "cap", "floored"].map(String::from));
        let mut csv = Csv::new(&header);
        for (&lin, &r) in nodes.iter().zip(&r_f) {
            let x = d.position(lin);
            let mut row = vec![Cell::Int(lin)];
            row.extend(coord_cells(&x));
            row.extend([Cell::Real(r), Cell::Real(rs.cap(&x)), Cell::Int(usize::from(r < floor))]);
            csv.row(&row);
        }
        let mut table = Vec::new();
        let mut dominated = true;
        for &p in &self.0.p {
            let rep = lp_reciprocal_of(&r_f, p, d);
            let deriv = rs.lp_derivative_sum(p, &nodes).map_err(CliError::compute)?;
            for (&lin, &r) in nodes.iter().zip(&r_f) {
                if r > 0.0 {
                    dominated &=
                        derivative_sum(&rs.norms(lin), p) <= 4.0 * (1.0 + CERTIFICATE_TOL).powf(p) * r.powf(-p);
                }
            }
            table.push(json!({
                "p": p, "lp_reciprocal": rep.value, "floor": rep.floor, "floored_nodes": rep.floored_nodes,
                "floor_contribution": rep.floor_contribution, "lp_derivative_sum": deriv,
            }));
        }
        out.write_csv("regscale.csv", &csv)?;
        out.write_json(
            "regscale.json",
            &json!({ "region": self.0.region, "nodes": nodes.len(), "tolerance": CERTIFICATE_TOL, "lp": table }),
        )?;
        Ok(vec![Check::new(
            "regscale",
            "pointwise domination",
            dominated,
            "Σ_ℓ |∇^ℓ f|^{p/ℓ} ≤ 4(1+tol)^p r_f^{-p} at every node with r_f > 0",
        )])
    }
}

struct Count(CountParams);

impl Count {
    fn schedule(&self, d: &GridDomain) -> Vec<f64> {
        self.0.schedule.clone().unwrap_or_else(|| default_schedule(d, self.0.r_star))
    }
}

impl Analysis for Count {
    fn name(&self) -> &'static str {
        "count"
    }

    fn validate(&self, d: &GridDomain) -> CliResult<()> {
        let r = self.0.r_star;
        if !(r > 0.0 && r < d.half_width()) {
            return Err(invalid(format!("r_star must lie in (0, {})", d.half_width())));
        }
        let s = self.schedule(d);
        if s.len() < 2 {
            return Err(invalid("packing schedule needs at least two radii"));
        }
        ascending(&s, "count schedule")
    }

    fn run(&self, field: &SphereField, out: &mut OutDir) -> CliResult<Vec<Check>> {
        let d = field.domain();
        let c = count_singular(field, self.0.r_star, &self.schedule(d)).map_err(CliError::compute)?;
        let mut header = vec!["point".to_string()];
        header.extend(coord_header(d.dim()));
        let mut csv = Csv::new(&header);
        for (i, x) in c.representatives.iter().enumerate() {
            let mut row = vec![Cell::Int(i)];
            row.extend(coord_cells(x));
            csv.row(&row);
        }
        out.write_csv("singular_points.csv", &csv)?;
        out.write_json("count.json", &json!({ "r_star": self.0.r_star, "result": c }))?;
        let stable = c.counts.windows(2).any(|w| w[0] == w[1]);
        Ok(vec![Check::new("strata", "packing count stabilized", stable, format!("counts {:?}", c.counts))])
    }
}

struct CensusAnalysis(CensusParams);

impl CensusAnalysis {
    fn ladder(&self, d: &GridDomain) -> CliResult<ScaleLadder> {
        let p = &self.0;
        if !(p.gamma > 0.0 && p.gamma < 0.5) {
            return Err(invalid(format!("gamma must lie in (0, 1/2), got {}", p.gamma)));
        }
        let h = d.spacing();
        let ladder = match p.beta_max {
            Some(b) => ScaleLadder::new(p.gamma, p.q, b, p.unit),
            None => ScaleLadder::resolved(p.gamma, p.q, p.unit, h),
        }
        .map_err(CliError::invalid)?;
        if ladder.beta_max == 0 {
            return Err(invalid(format!("no ladder level has its inner radii at or above 4h = {}", 4.0 * h)));
        }
        if ladder.inner_floor(ladder.beta_max) < 4.0 * h * (1.0 - 1e-12) {
            return Err(invalid(format!("beta_max = {} needs radii below 4h = {}", ladder.beta_max, 4.0 * h)));
        }
        Ok(ladder)
    }

    fn radii(ladder: &ScaleLadder) -> Vec<f64> {
        let mut r: Vec<f64> = (1..=ladder.beta_max).flat_map(|j| ladder.pairs(j)).flat_map(|(s, t)| [s, t]).collect();
        r.sort_by(f64::total_cmp);
        r.dedup();
        r
    }
}

impl Analysis for CensusAnalysis {
    fn name(&self) -> &'static str {
        "census"
    }

    fn validate(&self, d: &GridDomain) -> CliResult<()> {
        let p = &self.0;
        let ladder = self.ladder(d)?;
        if !(p.delta_fraction > 0.0 && p.delta_fraction <= 1.0) {
            return Err(invalid("delta_fraction must lie in (0, 1]"));
        }
        if let Some(l) = p.lambda {
            if !(l > 0.0 && l.is_finite()) {
                return Err(invalid("lambda must be positive"));
            }
        }
        let reach = Self::radii(&ladder).last().copied().unwrap_or(0.0) + d.spacing();
        p.region.fits(d, reach, 0.0)?;
        Ok(())
    }

    fn run(&self, field: &SphereField, out: &mut OutDir) -> CliResult<Vec<Check>> {
        let d = field.domain();
        let ladder = self.ladder(d)?;
        let points = self.0.region.sample(d)?.points(d);
        let lambda = match self.0.lambda {
            Some(l) => l,
            None => lambda_bound(field, &points, &Self::radii(&ladder)).map_err(CliError::compute)?,
        };
        let delta = self.0.delta_fraction * lambda;
        let (census, seqs) = decomposition_census(field, &ladder, delta, lambda, &points).map_err(CliError::compute)?;
        let mut header = vec!["point".to_string()];
        header.extend(coord_header(d.dim()));
        header.extend(["bits", "ones"].map(String::from));
        let mut csv = Csv::new(&header);
        for (i, s) in seqs.iter().enumerate() {
            let mut row = vec![Cell::Int(i)];
            row.extend(coord_cells(&s.point));
            let bits: String = s.bits.iter().map(|b| if *b != 0 { '1' } else { '0' }).collect();
            row.extend([Cell::Text(bits), Cell::Int(s.ones())]);
            csv.row(&row);
        }
        let bounds: Vec<_> = (1..=ladder.beta_max)
            .map(|b| json!({ "beta": b, "classes": census.classes[b - 1], "power_bound": census.power_bound(b), "word_bound": census.word_bound(b) }))
            .collect();
        out.write_csv("census.csv", &csv)?;
        out.write_json("census.json", &json!({ "census": census, "bounds": bounds }))?;
        let words = (1..=ladder.beta_max).all(|b| census.classes[b - 1] as f64 <= census.word_bound(b));
        Ok(vec![
            Check::new(
                "strata",
                "ones within (q+3)Λ/δ + 1",
                census.nbound_holds(),
                format!("{} ≤ {}", census.max_ones, census.nbound),
            ),
            Check::new("strata", "classes within word bound", words, String::new()),
        ])
    }
}
