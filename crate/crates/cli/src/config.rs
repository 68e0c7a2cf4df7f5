//! TOML experiment configuration.
//!
//! ```toml
//! seed = 7
//! threads = 1
//! analyses = ["theta"]
//!
//! [grid]
//! dim = 5
//! nodes = 16
//! half_width = 1.0
//!
//! [source]
//! type = "oracle"
//! kind = "radial_projection"
//!
//! [theta]
//! radii = [0.6, 0.7, 0.8]
//! ```

use std::path::{Path, PathBuf};

use bihmap::bienergy::MinimizeConfig;
use bihmap::homogeneity::FitOptions;
use bihmap::oracle::{OracleKind, OracleMap};
use bihmap::GridDomain;
use serde::{Deserialize, Serialize};

use crate::output::{CliError, CliResult};

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    pub threads: Option<usize>,
    pub out: Option<PathBuf>,
    pub grid: Option<GridSpec>,
    pub source: SourceSpec,
    #[serde(default)]
    pub analyses: Vec<String>,
    pub theta: Option<ThetaParams>,
    pub strata: Option<StrataParams>,
    pub regscale: Option<RegScaleParams>,
    pub count: Option<CountParams>,
    pub census: Option<CensusParams>,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub dim: usize,
    pub nodes: usize,
    pub half_width: f64,
    pub origin: Option<Vec<f64>>,
}

impl GridSpec {
    pub fn domain(&self) -> CliResult<GridDomain> {
        let origin = self.origin.clone().unwrap_or_else(|| vec![0.0; self.dim]);
        GridDomain::new(self.dim, self.nodes, origin, self.half_width).map_err(CliError::invalid)
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum SourceSpec {
    Oracle(OracleSpec),
    File {
        path: PathBuf,
    },
    /// Minimizes with the oracle as Dirichlet data on the collar.
    Solve {
        boundary: OracleSpec,
        #[serde(default)]
        init: InitSpec,
        #[serde(default)]
        minimize: MinimizeConfig,
    },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum InitSpec {
    /// Start from the boundary oracle itself.
    #[default]
    Boundary,
    /// Random unit vectors inside the collar, seeded by the top-level seed.
    Random,
}

pub const ORACLE_KINDS: &[&str] =
    &["radial_projection", "cylindrical_projection", "constant", "geodesic_wrap", "planted_multi"];

/// Oracle by kind name; unused parameters are rejected.
#[derive(Clone, Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSpec {
    pub kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub center: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub suppressed: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub value: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target_dim: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub frequency: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub centers: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub blend_radius: Option<f64>,
}

impl OracleSpec {
    pub fn build(&self, dim: usize) -> CliResult<OracleMap> {
        let need = |name: &str| CliError::Validation(format!("oracle {} needs `{name}`", self.kind));
        let allowed: &[&str] = match self.kind.as_str() {
            "radial_projection" => &["center"],
            "cylindrical_projection" => &["suppressed"],
            "constant" => &["value"],
            "geodesic_wrap" => &["target_dim", "frequency"],
            "planted_multi" => &["centers", "blend_radius"],
            other => {
                return Err(CliError::Validation(format!(
                    "unknown oracle kind `{other}`; expected one of {ORACLE_KINDS:?}"
                )))
            }
        };
        let given = [
            ("center", self.center.is_some()),
            ("suppressed", self.suppressed.is_some()),
            ("value", self.value.is_some()),
            ("target_dim", self.target_dim.is_some()),
            ("frequency", self.frequency.is_some()),
            ("centers", self.centers.is_some()),
            ("blend_radius", self.blend_radius.is_some()),
        ];
        if let Some((name, _)) = given.iter().find(|(n, g)| *g && !allowed.contains(n)) {
            return Err(CliError::Validation(format!("oracle {} does not take `{name}`", self.kind)));
        }
        let built = match self.kind.as_str() {
            "radial_projection" => {
                let center = self.center.clone().unwrap_or_else(|| vec![0.0; dim]);
                OracleMap::new(OracleKind::RadialProjection { center }, dim, dim.saturating_sub(1))
            }
            "cylindrical_projection" => OracleMap::cylindrical(dim, self.suppressed.ok_or_else(|| need("suppressed"))?),
            "constant" => OracleMap::constant(dim, self.value.clone().ok_or_else(|| need("value"))?),
            "geodesic_wrap" => OracleMap::geodesic_wrap(
                dim,
                self.target_dim.ok_or_else(|| need("target_dim"))?,
                self.frequency.ok_or_else(|| need("frequency"))?,
            ),
            _ => OracleMap::planted(
                dim,
                self.centers.clone().ok_or_else(|| need("centers"))?,
                self.blend_radius.ok_or_else(|| need("blend_radius"))?,
            ),
        };
        built.map_err(CliError::invalid)
    }
}

/// Open ball of grid nodes, thinned by `stride` on every axis.
#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RegionSpec {
    pub center: Option<Vec<f64>>,
    pub radius: f64,
    #[serde(default = "one")]
    pub stride: usize,
}

fn one() -> usize {
    1
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ThetaParams {
    /// Defaults to the grid center.
    pub centers: Option<Vec<Vec<f64>>>,
    /// Strictly ascending.
    pub radii: Vec<f64>,
    /// Defaults to the largest Θ over all centers and radii.
    pub lambda: Option<f64>,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct StrataParams {
    pub scales: Vec<f64>,
    pub region: RegionSpec,
    pub k: Vec<usize>,
    pub eta: Vec<f64>,
    pub r: Vec<f64>,
    /// Tube radii of the per-atlas volume fit; defaults to the dyadic ladder.
    pub rhos: Option<Vec<f64>>,
    pub fit: Option<FitOptions>,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RegScaleParams {
    pub region: RegionSpec,
    #[serde(default = "default_ps")]
    pub p: Vec<f64>,
}

fn default_ps() -> Vec<f64> {
    vec![4.0, 4.5, 5.0, 6.0]
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct CountParams {
    pub r_star: f64,
    /// Packing radii; defaults to `r*·2^i` up to the half width.
    pub schedule: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct CensusParams {
    pub gamma: f64,
    #[serde(default = "default_q")]
    pub q: usize,
    pub unit: f64,
    /// Defaults to the deepest ladder whose radii stay at or above 4h.
    pub beta_max: Option<usize>,
    #[serde(default = "default_delta_fraction")]
    pub delta_fraction: f64,
    pub lambda: Option<f64>,
    pub region: RegionSpec,
}

fn default_q() -> usize {
    bihmap::strata::DEFAULT_Q
}

fn default_delta_fraction() -> f64 {
    bihmap::strata::DEFAULT_DELTA_FRACTION
}

pub fn parse(text: &str) -> CliResult<ExperimentConfig> {
    toml::from_str(text).map_err(|e| CliError::Validation(format!("config: {}", e.message())))
}

pub fn read(path: &Path) -> CliResult<(ExperimentConfig, Vec<u8>)> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let text = String::from_utf8(bytes.clone()).map_err(|_| CliError::Validation("config is not UTF-8".into()))?;
    Ok((parse(&text)?, bytes))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_oracle_source() {
        let c = parse(
            r#"
            seed = 3
            analyses = ["theta"]
            [grid]
            dim = 5
            nodes = 16
            half_width = 1.0
            [source]
            type = "oracle"
            kind = "radial_projection"
            [theta]
            radii = [0.6, 0.7]
            "#,
        )
        .unwrap();
        assert_eq!(c.seed, 3);
        let SourceSpec::Oracle(o) = &c.source else { panic!() };
        assert_eq!(o.build(5).unwrap().target_dim, 4);
    }

    #[test]
    fn parses_solve_source() {
        let c = parse(
            r#"
            [grid]
            dim = 2
            nodes = 12
            half_width = 1.0
            [source]
            type = "solve"
            init = "random"
            [source.boundary]
            kind = "geodesic_wrap"
            target_dim = 2
            frequency = 1.5
            [source.minimize]
            max_iters = 10
            "#,
        )
        .unwrap();
        let SourceSpec::Solve { init, minimize, .. } = &c.source else { panic!() };
        assert_eq!(*init, InitSpec::Random);
        assert_eq!(minimize.max_iters, 10);
        assert_eq!(minimize.armijo_c, MinimizeConfig::default().armijo_c);
    }

    #[test]
    fn rejects_unknown_keys() {
        let e = parse("[source]\ntype = \"oracle\"\nkind = \"constant\"\nvalue = [0.0, 1.0]\ncolor = 1\n").unwrap_err();
        assert_eq!(e.exit_code(), 2);
        let e = parse("bogus = 1\n[source]\ntype = \"file\"\npath = \"f.bhf\"\n").unwrap_err();
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn oracle_parameters_are_checked() {
        let spec = OracleSpec { kind: "cylindrical_projection".into(), frequency: Some(1.0), ..Default::default() };
        assert!(spec.build(5).is_err());
        let spec = OracleSpec { kind: "cylindrical_projection".into(), ..Default::default() };
        assert!(spec.build(5).is_err());
        let spec = OracleSpec { kind: "cylindrical_projection".into(), suppressed: Some(1), ..Default::default() };
        assert_eq!(spec.build(5).unwrap().target_dim, 3);
        let spec = OracleSpec { kind: "nope".into(), ..Default::default() };
        assert!(spec.build(5).is_err());
    }
}
