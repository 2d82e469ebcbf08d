//! Sectioned TOML run configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};
use twoscale::geometry::{epsilon_to_m, CellGeometry};
use twoscale::micro::BetaBackend;
use twoscale::Tolerances;

use crate::error::{CliError, CliResult, InModule};

/// Output directory override; the only setting read from the environment.
pub const OUT_ENV: &str = "TWOSCALE_OUT";

/// ε = 1/m, written as "1/m" and read from "1/m" or a decimal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Epsilon {
    pub m: usize,
}

impl Epsilon {
    pub fn value(self) -> f64 {
        1.0 / self.m as f64
    }

    pub fn parse(s: &str) -> CliResult<Self> {
        let s = s.trim();
        let value = match s.split_once('/') {
            Some((num, den)) => {
                let num: f64 = num.trim().parse().map_err(|_| CliError::Usage(format!("bad epsilon '{s}'")))?;
                let den: f64 = den.trim().parse().map_err(|_| CliError::Usage(format!("bad epsilon '{s}'")))?;
                num / den
            }
            None => s.parse().map_err(|_| CliError::Usage(format!("bad epsilon '{s}'")))?,
        };
        Self::from_value(value)
    }

    pub fn from_value(value: f64) -> CliResult<Self> {
        Ok(Epsilon { m: epsilon_to_m(value).module("geometry")? })
    }
}

impl Serialize for Epsilon {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format!("1/{}", self.m))
    }
}

impl<'de> Deserialize<'de> for Epsilon {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        let parsed = match Raw::deserialize(d)? {
            Raw::Num(x) => Epsilon::from_value(x),
            Raw::Text(s) => Epsilon::parse(&s),
        };
        parsed.map_err(serde::de::Error::custom)
    }
}

/// Comma-separated list such as "1/2,1/4,0.125".
pub fn parse_eps_list(s: &str) -> CliResult<Vec<Epsilon>> {
    s.split(',').filter(|p| !p.trim().is_empty()).map(Epsilon::parse).collect()
}

/// "a:b" or "a:b:n".
pub fn parse_range(s: &str, with_count: bool) -> CliResult<(f64, f64, Option<usize>)> {
    let parts: Vec<&str> = s.split(':').collect();
    let bad = || CliError::Usage(format!("bad range '{s}' (expected {})", if with_count { "a:b:n" } else { "a:b" }));
    if parts.len() != if with_count { 3 } else { 2 } {
        return Err(bad());
    }
    let a: f64 = parts[0].trim().parse().map_err(|_| bad())?;
    let b: f64 = parts[1].trim().parse().map_err(|_| bad())?;
    let n = if with_count { Some(parts[2].trim().parse().map_err(|_| bad())?) } else { None };
    if !(a.is_finite() && b.is_finite() && a < b) {
        return Err(CliError::Usage(format!("range '{s}' must satisfy a < b")));
    }
    if n == Some(0) {
        return Err(CliError::Usage(format!("range '{s}' needs at least one point")));
    }
    Ok((a, b, n))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    Disk,
    Ellipse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometrySection {
    pub inclusion: Shape,
    /// Disk radius.
    pub radius: f64,
    /// Ellipse semi-axes along y₁ and y₂.
    pub semi_axes: [f64; 2],
}

impl Default for GeometrySection {
    fn default() -> Self {
        GeometrySection { inclusion: Shape::Ellipse, radius: 0.25, semi_axes: [0.3, 0.2] }
    }
}

impl GeometrySection {
    pub fn cell(&self) -> CellGeometry {
        match self.inclusion {
            Shape::Disk => CellGeometry::disk(self.radius),
            Shape::Ellipse => CellGeometry::ellipse(self.semi_axes[0], self.semi_axes[1]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeshSection {
    /// Cell meshes at h = 1/(2q) for the two Richardson levels; Γ has 8q segments.
    pub cell_q: [usize; 2],
    /// Homogenized-problem square meshes n × n at two levels.
    pub macro_n: [usize; 2],
}

impl Default for MeshSection {
    fn default() -> Self {
        MeshSection { cell_q: [16, 32], macro_n: [32, 64] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendName {
    Direct,
    Series,
    Analytic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MicroSection {
    /// Dirichlet modes computed per cell level.
    pub modes: usize,
    pub lambda_max: f64,
    pub backend: BackendName,
    pub series_modes: usize,
}

impl Default for MicroSection {
    fn default() -> Self {
        MicroSection { modes: 30, lambda_max: 400.0, backend: BackendName::Direct, series_modes: 30 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MacroSection {
    /// Homogenized eigenpairs computed.
    pub count: usize,
    /// Homogenized levels ν combined with each case (a) λ₀ in predictions.
    pub levels: usize,
}

impl Default for MacroSection {
    fn default() -> Self {
        MacroSection { count: 6, levels: 3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FineSection {
    pub eps: Vec<Epsilon>,
    pub window: [f64; 2],
    /// Cell refinement of the tiled mesh: h = ε/(2q).
    pub q: usize,
    pub dof_cap: usize,
    /// Largest number of eigenvalues accepted in a window.
    pub max_count: usize,
    /// Eigenvalues computed around each prediction.
    pub nearest: usize,
}

impl Default for FineSection {
    fn default() -> Self {
        FineSection {
            eps: [2, 3, 4, 6, 8].map(|m| Epsilon { m }).to_vec(),
            window: [0.0, 40.0],
            q: 8,
            dof_cap: 300_000,
            max_count: 400,
            nearest: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CaseBSection {
    /// Ordinal of the zero-mean Dirichlet cluster, from 1.
    pub mode_index: usize,
    /// ε values at which the residual of the ansatz is evaluated.
    pub residual_eps: Vec<Epsilon>,
}

impl Default for CaseBSection {
    fn default() -> Self {
        CaseBSection { mode_index: 3, residual_eps: [4, 8, 16].map(|m| Epsilon { m }).to_vec() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValidateSection {
    /// Disk used for the analytic oracle, the limit-spectrum equivalence and
    /// the isotropy checks.
    pub oracle_radius: f64,
    /// Small disk whose homogenized matrix is close to the identity.
    pub small_radius: f64,
    /// β comparison grid "lo, hi, n".
    pub beta_grid: (f64, f64, usize),
    pub pole_distance: f64,
    /// Limit-spectrum entries compared with the constrained eigenproblem.
    pub zeta_entries: usize,
    /// Index of the second λ₀ of the rate check among the roots (μ₁ = 0).
    pub rate_root: usize,
    pub gap_eps: Epsilon,
    pub gap_margin: f64,
    pub trend_eps: Vec<Epsilon>,
}

impl Default for ValidateSection {
    fn default() -> Self {
        ValidateSection {
            oracle_radius: 0.25,
            small_radius: 0.05,
            beta_grid: (1.0, 400.0, 50),
            pole_distance: 0.05,
            zeta_entries: 8,
            rate_root: 2,
            gap_eps: Epsilon { m: 8 },
            gap_margin: 0.15,
            trend_eps: [4, 6, 8].map(|m| Epsilon { m }).to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { dir: PathBuf::from("out") }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub geometry: GeometrySection,
    pub mesh: MeshSection,
    pub micro: MicroSection,
    #[serde(rename = "macro")]
    pub macro_: MacroSection,
    pub fine: FineSection,
    pub caseb: CaseBSection,
    pub validate: ValidateSection,
    pub tolerances: Tolerances,
    pub output: OutputSection,
}

fn decreasing(name: &str, eps: &[Epsilon]) -> CliResult<()> {
    if eps.is_empty() {
        return Err(CliError::Config(format!("{name}: list is empty")));
    }
    if eps.windows(2).any(|w| w[1].m <= w[0].m) {
        return Err(CliError::Config(format!("{name}: epsilon values must be strictly decreasing")));
    }
    Ok(())
}

impl RunConfig {
    pub fn from_toml(text: &str) -> CliResult<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io { path: path.into(), source })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    /// Field-level checks beyond what parsing enforces.
    pub fn validate(&self) -> CliResult<()> {
        let field = |name: &str, msg: String| Err(CliError::Config(format!("{name}: {msg}")));
        self.geometry.cell().validate().map_err(|e| CliError::Config(format!("geometry: {e}")))?;
        self.tolerances.validate().map_err(|e| CliError::Config(format!("tolerances: {e}")))?;
        let [q0, q1] = self.mesh.cell_q;
        if q0 < 2 || q1 != 2 * q0 {
            return field("mesh.cell_q", format!("expected [q, 2q] with q >= 2, got [{q0}, {q1}]"));
        }
        let [n0, n1] = self.mesh.macro_n;
        if n0 < 2 || n1 != 2 * n0 {
            return field("mesh.macro_n", format!("expected [n, 2n] with n >= 2, got [{n0}, {n1}]"));
        }
        if self.micro.modes == 0 {
            return field("micro.modes", "must be positive".into());
        }
        if !(self.micro.lambda_max > 0.0) {
            return field("micro.lambda_max", "must be positive".into());
        }
        if self.micro.backend == BackendName::Analytic && self.geometry.inclusion != Shape::Disk {
            return field("micro.backend", "the analytic backend needs a disk inclusion".into());
        }
        if self.macro_.count == 0 || self.macro_.levels == 0 || self.macro_.levels > self.macro_.count {
            return field("macro", "need 0 < levels <= count".into());
        }
        decreasing("fine.eps", &self.fine.eps)?;
        let [lo, hi] = self.fine.window;
        if !(lo < hi) {
            return field("fine.window", format!("empty window [{lo}, {hi}]"));
        }
        if self.fine.q < 2 || self.fine.dof_cap == 0 || self.fine.nearest < 2 {
            return field("fine", "need q >= 2, dof_cap > 0 and nearest >= 2".into());
        }
        if self.caseb.mode_index == 0 {
            return field("caseb.mode_index", "ordinals start at 1".into());
        }
        decreasing("caseb.residual_eps", &self.caseb.residual_eps)?;
        if self.caseb.residual_eps.len() < 2 {
            return field("caseb.residual_eps", "need at least two values".into());
        }
        let v = &self.validate;
        for (name, r) in [("validate.oracle_radius", v.oracle_radius), ("validate.small_radius", v.small_radius)] {
            CellGeometry::disk(r).validate().map_err(|e| CliError::Config(format!("{name}: {e}")))?;
        }
        let (glo, ghi, gn) = v.beta_grid;
        if !(glo < ghi) || gn == 0 {
            return field("validate.beta_grid", "need lo < hi and n > 0".into());
        }
        if !(v.pole_distance > 0.0) || !(v.gap_margin >= 0.0 && v.gap_margin < 0.5) {
            return field("validate", "pole_distance must be positive and gap_margin in [0, 0.5)".into());
        }
        if v.rate_root < 2 {
            return field("validate.rate_root", "must be at least 2 (μ₁ = 0 is always checked)".into());
        }
        decreasing("validate.trend_eps", &v.trend_eps)?;
        Ok(())
    }

    /// The validation sweep reuses the fine solves of `fine.eps`.
    pub fn validate_sweep(&self) -> CliResult<()> {
        let v = &self.validate;
        for e in v.trend_eps.iter().chain(std::iter::once(&v.gap_eps)) {
            if !self.fine.eps.contains(e) {
                return Err(CliError::Config(format!("validate: epsilon 1/{} must also appear in fine.eps", e.m)));
            }
        }
        Ok(())
    }

    pub fn backend(&self) -> BetaBackend {
        match self.micro.backend {
            BackendName::Direct => BetaBackend::Direct,
            BackendName::Series => BetaBackend::Series { modes: self.micro.series_modes },
            BackendName::Analytic => BetaBackend::AnalyticBall { radius: self.geometry.radius, dimension: 2 },
        }
    }

    /// SHA-256 of the canonical TOML form, without the output directory.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output.dir = PathBuf::new();
        hex(&Sha256::digest(c.to_toml().as_bytes()))
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn epsilon_forms() {
        assert_eq!(Epsilon::parse("1/4").unwrap().m, 4);
        assert_eq!(Epsilon::parse(" 0.125 ").unwrap().m, 8);
        let err = Epsilon::parse("0.3").unwrap_err();
        assert!(err.to_string().contains("epsilon must be 1/m"), "{err}");
        assert_eq!(err.exit_code(), 2);
        assert!(Epsilon::parse("x").is_err());
        assert_eq!(parse_eps_list("1/2, 0.25,1/8").unwrap().iter().map(|e| e.m).collect::<Vec<_>>(), [2, 4, 8]);
    }

    #[test]
    fn default_round_trips_through_toml() {
        let cfg = RunConfig::default();
        cfg.validate().unwrap();
        cfg.validate_sweep().unwrap();
        let text = cfg.to_toml();
        assert!(text.contains("\"1/8\""));
        assert_eq!(RunConfig::from_toml(&text).unwrap(), cfg);
    }

    #[test]
    fn hash_ignores_only_the_output_dir() {
        let a = RunConfig::default();
        let mut b = a.clone();
        b.output.dir = "elsewhere".into();
        assert_eq!(a.hash(), b.hash());
        b.fine.q = 9;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn field_errors_name_the_field() {
        for (text, field) in [
            ("[mesh]\ncell_q = [16, 20]", "mesh.cell_q"),
            ("[fine]\neps = [\"1/4\", \"1/2\"]", "fine.eps"),
            ("[tolerances]\nlinear = -1.0", "tolerances"),
            ("[geometry]\ninclusion = \"disk\"\nradius = 0.6", "geometry"),
        ] {
            let err = RunConfig::from_toml(text).unwrap_err().to_string();
            assert!(err.contains(field), "{text}: {err}");
        }
        let err = RunConfig::from_toml("[fine]\neps = [\"1/2\", 0.3]").unwrap_err().to_string();
        assert!(err.contains("epsilon must be 1/m"), "{err}");
        let mut cfg = RunConfig::default();
        cfg.validate.gap_eps = Epsilon { m: 16 };
        assert!(cfg.validate_sweep().is_err());
    }

    #[test]
    fn ranges() {
        assert_eq!(parse_range("0:400:2000", true).unwrap(), (0.0, 400.0, Some(2000)));
        assert_eq!(parse_range("1.5:2", false).unwrap(), (1.5, 2.0, None));
        for bad in ["4:1:3", "0:1", "0:1:0", "a:b:c"] {
            assert!(parse_range(bad, true).is_err(), "{bad}");
        }
    }
}
