//! Run configuration: a sectioned TOML document with environment overrides.
//!
//! ```toml
//! mode = "solve"          # solve | study | verify
//! levels = 3              # refinement levels of a study
//!
//! [geometry]
//! L = 1.0
//! n1 = 4                  # or `n` for all three directions
//! n2 = 4
//! n3 = 4
//! grading = "aligned"     # aligned | uniform
//! wall_fraction = 0.25
//! D = 0.2
//! d = 0.01
//!
//! [physics]
//! nu = 0.1
//! force = "manufactured"  # or [fx, fy, fz]
//! angle = 0.0
//!
//! [model]
//! Cs = 0.1
//! Cw = 0.1
//! c_variant = "full"      # full | normal-only
//! kappa = 0.41
//! z0_plus = 20.0
//! zmax_plus = 100.0
//! inversion_tol = 1e-12
//!
//! [solver]
//! picard_tol = 1e-9
//! residual_tol = 1e-10
//! max_picard = 50
//! damping = 1.0
//! linear_solver = "auto"  # auto | sparse-lu | two-grid
//!
//! [output]
//! directory = "out"
//! formats = ["vtk", "csv", "json"]
//! ```
//!
//! Any key can be overridden by an environment variable
//! `CHANLES__<section>__<key>` (or `CHANLES__<key>` for top-level keys). The
//! value is read as a TOML literal and falls back to a plain string.

use std::path::PathBuf;

use toml::{Table, Value};

use crate::error::{Error, Result};
use crate::mesh::{ChannelGeometry, Grading};
use crate::params::{BodyForce, CVariant, ModelParams};
use crate::solver::{LinearSolver, SolverConfig};
use crate::wall_law::WallLaw;

/// Prefix of configuration environment variables.
pub const ENV_PREFIX: &str = "CHANLES__";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Solve,
    Study,
    Verify,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Solve => "solve",
            Mode::Study => "study",
            Mode::Verify => "verify",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradingKind {
    Uniform,
    Aligned,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeometryConfig {
    pub box_length: f64,
    pub n1: usize,
    pub n2: usize,
    pub n3: usize,
    pub grading: GradingKind,
    pub wall_fraction: f64,
    pub layer_thickness: f64,
    pub sublayer: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ForceSpec {
    /// Forcing of the manufactured solution for the configured `nu` and `d`.
    Manufactured,
    Constant([f64; 3]),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhysicsConfig {
    pub nu: f64,
    pub force: ForceSpec,
    /// Flow direction of the manufactured solution in the `(x1, x2)` plane.
    pub angle: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub cs: f64,
    pub cw: f64,
    pub variant: CVariant,
    pub kappa: f64,
    pub z0_plus: f64,
    pub zmax_plus: f64,
    pub inversion_tol: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Vtk,
    Csv,
    Json,
}

impl Format {
    fn as_str(self) -> &'static str {
        match self {
            Format::Vtk => "vtk",
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputConfig {
    pub directory: PathBuf,
    pub formats: Vec<Format>,
}

impl OutputConfig {
    pub fn wants(&self, f: Format) -> bool {
        self.formats.contains(&f)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub mode: Mode,
    pub levels: usize,
    pub geometry: GeometryConfig,
    pub physics: PhysicsConfig,
    pub model: ModelConfig,
    pub solver: SolverConfig,
    pub output: OutputConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Solve,
            levels: 3,
            geometry: GeometryConfig {
                box_length: 1.0,
                n1: 4,
                n2: 4,
                n3: 4,
                grading: GradingKind::Aligned,
                wall_fraction: 0.25,
                layer_thickness: 0.2,
                sublayer: 0.01,
            },
            physics: PhysicsConfig {
                nu: 0.1,
                force: ForceSpec::Manufactured,
                angle: 0.0,
            },
            model: ModelConfig {
                cs: 0.1,
                cw: 0.1,
                variant: CVariant::Full,
                kappa: 0.41,
                z0_plus: 20.0,
                zmax_plus: 100.0,
                inversion_tol: 1e-12,
            },
            solver: SolverConfig::default(),
            output: OutputConfig {
                directory: PathBuf::from("out"),
                formats: vec![Format::Vtk, Format::Csv, Format::Json],
            },
        }
    }
}

impl RunConfig {
    pub fn channel_geometry(&self) -> ChannelGeometry {
        let g = &self.geometry;
        ChannelGeometry {
            box_length: g.box_length,
            n1: g.n1,
            n2: g.n2,
            n3: g.n3,
            grading: match g.grading {
                GradingKind::Uniform => Grading::Uniform,
                GradingKind::Aligned => Grading::LayerAligned {
                    wall_fraction: g.wall_fraction,
                },
            },
            layer_thickness: g.layer_thickness,
            sublayer: g.sublayer,
        }
    }

    pub fn body_force(&self) -> BodyForce {
        match self.physics.force {
            ForceSpec::Manufactured => BodyForce::manufactured(self.physics.nu, self.physics.angle),
            ForceSpec::Constant(f) => BodyForce::Constant(f),
        }
    }

    pub fn model_params(&self) -> ModelParams {
        let m = &self.model;
        ModelParams {
            nu: self.physics.nu,
            d: self.geometry.sublayer,
            layer_thickness: self.geometry.layer_thickness,
            cs: m.cs,
            cw: m.cw,
            variant: m.variant,
            force: self.body_force(),
            wall_law: WallLaw::new(m.kappa, m.z0_plus, m.zmax_plus).expect("validated"),
            inversion_tol: m.inversion_tol,
        }
    }

    /// Normalized TOML document listing every key explicitly.
    pub fn to_toml(&self) -> String {
        let mut root = Table::new();
        root.insert("mode".into(), self.mode.as_str().into());
        root.insert("levels".into(), (self.levels as i64).into());

        let g = &self.geometry;
        let mut geometry = Table::new();
        geometry.insert("L".into(), g.box_length.into());
        geometry.insert("n1".into(), (g.n1 as i64).into());
        geometry.insert("n2".into(), (g.n2 as i64).into());
        geometry.insert("n3".into(), (g.n3 as i64).into());
        let grading = match g.grading {
            GradingKind::Uniform => "uniform",
            GradingKind::Aligned => "aligned",
        };
        geometry.insert("grading".into(), grading.into());
        geometry.insert("wall_fraction".into(), g.wall_fraction.into());
        geometry.insert("D".into(), g.layer_thickness.into());
        geometry.insert("d".into(), g.sublayer.into());
        root.insert("geometry".into(), geometry.into());

        let p = &self.physics;
        let mut physics = Table::new();
        physics.insert("nu".into(), p.nu.into());
        let force: Value = match p.force {
            ForceSpec::Manufactured => "manufactured".into(),
            ForceSpec::Constant(f) => Value::Array(f.iter().map(|&v| v.into()).collect()),
        };
        physics.insert("force".into(), force);
        physics.insert("angle".into(), p.angle.into());
        root.insert("physics".into(), physics.into());

        let m = &self.model;
        let mut model = Table::new();
        model.insert("Cs".into(), m.cs.into());
        model.insert("Cw".into(), m.cw.into());
        let variant = match m.variant {
            CVariant::Full => "full",
            CVariant::NormalOnly => "normal-only",
        };
        model.insert("c_variant".into(), variant.into());
        model.insert("kappa".into(), m.kappa.into());
        model.insert("z0_plus".into(), m.z0_plus.into());
        model.insert("zmax_plus".into(), m.zmax_plus.into());
        model.insert("inversion_tol".into(), m.inversion_tol.into());
        root.insert("model".into(), model.into());

        let s = &self.solver;
        let mut solver = Table::new();
        solver.insert("picard_tol".into(), s.picard_tol.into());
        solver.insert("residual_tol".into(), s.residual_tol.into());
        solver.insert("max_picard".into(), (s.max_picard as i64).into());
        solver.insert("damping".into(), s.damping.into());
        let linear = match s.linear_solver {
            LinearSolver::Auto => "auto",
            LinearSolver::SparseLu => "sparse-lu",
            LinearSolver::TwoGrid => "two-grid",
        };
        solver.insert("linear_solver".into(), linear.into());
        root.insert("solver".into(), solver.into());

        let o = &self.output;
        let mut output = Table::new();
        output.insert("directory".into(), o.directory.to_string_lossy().into_owned().into());
        output.insert(
            "formats".into(),
            Value::Array(o.formats.iter().map(|f| f.as_str().into()).collect()),
        );
        root.insert("output".into(), output.into());

        toml::to_string(&root).expect("table serializes")
    }
}

fn cfg_err(path: impl Into<String>, reason: impl Into<String>) -> Error {
    Error::Config {
        path: path.into(),
        reason: reason.into(),
    }
}

/// Parses and validates a configuration document. Environment overrides are not applied.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let table: Table = text.parse().map_err(|e: toml::de::Error| cfg_err("<document>", e.message()))?;
    from_table(table)
}

/// Parses a document and then applies `CHANLES__*` overrides from the process environment.
pub fn parse_config_with_env(text: &str) -> Result<RunConfig> {
    parse_config_with_overrides(text, std::env::vars())
}

/// Parses a document and applies overrides given as `(variable, value)` pairs;
/// variables without the [`ENV_PREFIX`] are ignored.
pub fn parse_config_with_overrides(
    text: &str,
    vars: impl IntoIterator<Item = (String, String)>,
) -> Result<RunConfig> {
    let mut table: Table = text.parse().map_err(|e: toml::de::Error| cfg_err("<document>", e.message()))?;
    let mut overrides: Vec<(String, String)> = vars
        .into_iter()
        .filter(|(k, _)| k.starts_with(ENV_PREFIX))
        .collect();
    overrides.sort();
    for (var, raw) in overrides {
        let path: Vec<&str> = var[ENV_PREFIX.len()..].split("__").collect();
        let value = literal(&raw);
        match path.as_slice() {
            [key] if !key.is_empty() => {
                table.insert((*key).to_string(), value);
            }
            [section, key] if !section.is_empty() && !key.is_empty() => {
                let entry = table
                    .entry((*section).to_string())
                    .or_insert_with(|| Value::Table(Table::new()));
                match entry {
                    Value::Table(t) => {
                        t.insert((*key).to_string(), value);
                    }
                    _ => return Err(cfg_err(*section, "expected a table")),
                }
            }
            _ => return Err(cfg_err(var.clone(), "malformed override variable")),
        }
    }
    from_table(table)
}

fn literal(raw: &str) -> Value {
    format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

struct Section<'a> {
    name: &'a str,
    table: Table,
}

impl<'a> Section<'a> {
    fn path(&self, key: &str) -> String {
        if self.name.is_empty() {
            key.to_string()
        } else {
            format!("{}.{key}", self.name)
        }
    }

    fn float(&mut self, key: &str, default: f64) -> Result<f64> {
        match self.table.remove(key) {
            None => Ok(default),
            Some(Value::Float(v)) => Ok(v),
            Some(Value::Integer(v)) => Ok(v as f64),
            Some(other) => Err(cfg_err(self.path(key), format!("expected a number, got {}", other.type_str()))),
        }
    }

    fn count(&mut self, key: &str, default: usize) -> Result<usize> {
        match self.table.remove(key) {
            None => Ok(default),
            Some(Value::Integer(v)) if v >= 0 => Ok(v as usize),
            Some(Value::Integer(v)) => Err(cfg_err(self.path(key), format!("must be ≥ 0, got {v}"))),
            Some(other) => Err(cfg_err(self.path(key), format!("expected an integer, got {}", other.type_str()))),
        }
    }

    fn string(&mut self, key: &str) -> Result<Option<String>> {
        match self.table.remove(key) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s)),
            Some(other) => Err(cfg_err(self.path(key), format!("expected a string, got {}", other.type_str()))),
        }
    }

    fn choice<T: Copy>(&mut self, key: &str, default: T, options: &[(&str, T)]) -> Result<T> {
        match self.string(key)? {
            None => Ok(default),
            Some(s) => options.iter().find(|(name, _)| *name == s).map(|(_, v)| *v).ok_or_else(|| {
                let names: Vec<&str> = options.iter().map(|(n, _)| *n).collect();
                cfg_err(self.path(key), format!("expected one of {}, got \"{s}\"", names.join(", ")))
            }),
        }
    }

    fn finish(self) -> Result<()> {
        match self.table.keys().next() {
            Some(k) => Err(cfg_err(self.path(k), "unknown key")),
            None => Ok(()),
        }
    }
}

fn section<'a>(root: &mut Table, name: &'a str) -> Result<Section<'a>> {
    match root.remove(name) {
        None => Ok(Section {
            name,
            table: Table::new(),
        }),
        Some(Value::Table(table)) => Ok(Section { name, table }),
        Some(other) => Err(cfg_err(name, format!("expected a table, got {}", other.type_str()))),
    }
}

fn require(ok: bool, path: &str, reason: impl Into<String>) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(cfg_err(path, reason))
    }
}

fn from_table(mut root: Table) -> Result<RunConfig> {
    let defaults = RunConfig::default();
    let mut geometry = section(&mut root, "geometry")?;
    let mut physics = section(&mut root, "physics")?;
    let mut model = section(&mut root, "model")?;
    let mut solver = section(&mut root, "solver")?;
    let mut output = section(&mut root, "output")?;
    let mut top = Section { name: "", table: root };

    let mode = top.choice(
        "mode",
        defaults.mode,
        &[("solve", Mode::Solve), ("study", Mode::Study), ("verify", Mode::Verify)],
    )?;
    let levels = top.count("levels", defaults.levels)?;
    require(levels >= 1, "levels", "must be ≥ 1")?;
    top.finish()?;

    let dg = &defaults.geometry;
    let n = geometry.count("n", dg.n1)?;
    let g = GeometryConfig {
        box_length: geometry.float("L", dg.box_length)?,
        n1: geometry.count("n1", n)?,
        n2: geometry.count("n2", n)?,
        n3: geometry.count("n3", n)?,
        grading: geometry.choice(
            "grading",
            dg.grading,
            &[("uniform", GradingKind::Uniform), ("aligned", GradingKind::Aligned)],
        )?,
        wall_fraction: geometry.float("wall_fraction", dg.wall_fraction)?,
        layer_thickness: geometry.float("D", dg.layer_thickness)?,
        sublayer: geometry.float("d", dg.sublayer)?,
    };
    geometry.finish()?;
    require(g.box_length > 0.0 && g.box_length.is_finite(), "geometry.L", "must be > 0")?;
    for (key, v) in [("geometry.n1", g.n1), ("geometry.n2", g.n2), ("geometry.n3", g.n3)] {
        require(v >= 2, key, format!("must be ≥ 2, got {v}"))?;
    }
    require(g.sublayer > 0.0, "geometry.d", "must be > 0")?;
    require(
        g.layer_thickness > 2.0 * g.sublayer,
        "geometry.D",
        format!("must be > 2d = {}", 2.0 * g.sublayer),
    )?;
    require(
        g.layer_thickness < 1.0 + 2.0 * g.sublayer,
        "geometry.D",
        "wall layers must not fill the channel (D/2 - d < 1/2)",
    )?;

    let dp = &defaults.physics;
    let nu = physics.float("nu", dp.nu)?;
    require(nu > 0.0 && nu.is_finite(), "physics.nu", "must be > 0")?;
    let force = match physics.table.remove("force") {
        None => dp.force,
        Some(Value::String(s)) if s == "manufactured" => ForceSpec::Manufactured,
        Some(Value::Array(a)) if a.len() == 3 => {
            let mut f = [0.0; 3];
            for (fi, v) in f.iter_mut().zip(&a) {
                *fi = match v {
                    Value::Float(x) => *x,
                    Value::Integer(x) => *x as f64,
                    _ => return Err(cfg_err("physics.force", "components must be numbers")),
                };
            }
            ForceSpec::Constant(f)
        }
        Some(_) => {
            return Err(cfg_err(
                "physics.force",
                "expected \"manufactured\" or an array of three numbers",
            ))
        }
    };
    let angle = physics.float("angle", dp.angle)?;
    physics.finish()?;

    let dm = &defaults.model;
    let m = ModelConfig {
        cs: model.float("Cs", dm.cs)?,
        cw: model.float("Cw", dm.cw)?,
        variant: model.choice(
            "c_variant",
            dm.variant,
            &[("full", CVariant::Full), ("normal-only", CVariant::NormalOnly)],
        )?,
        kappa: model.float("kappa", dm.kappa)?,
        z0_plus: model.float("z0_plus", dm.z0_plus)?,
        zmax_plus: model.float("zmax_plus", dm.zmax_plus)?,
        inversion_tol: model.float("inversion_tol", dm.inversion_tol)?,
    };
    model.finish()?;
    require(m.cs >= 0.0, "model.Cs", "must be ≥ 0")?;
    require(m.cw >= 0.0, "model.Cw", "must be ≥ 0")?;
    require(m.kappa > 0.0, "model.kappa", "must be > 0")?;
    require(m.z0_plus > 0.0, "model.z0_plus", "must be > 0")?;
    require(m.zmax_plus > m.z0_plus, "model.zmax_plus", "must be > z0_plus")?;
    require(m.inversion_tol > 0.0, "model.inversion_tol", "must be > 0")?;

    let ds = &defaults.solver;
    let s = SolverConfig {
        picard_tol: solver.float("picard_tol", ds.picard_tol)?,
        residual_tol: solver.float("residual_tol", ds.residual_tol)?,
        max_picard: solver.count("max_picard", ds.max_picard)?,
        damping: solver.float("damping", ds.damping)?,
        linear_solver: solver.choice(
            "linear_solver",
            ds.linear_solver,
            &[
                ("auto", LinearSolver::Auto),
                ("sparse-lu", LinearSolver::SparseLu),
                ("two-grid", LinearSolver::TwoGrid),
            ],
        )?,
        convection: ds.convection,
    };
    solver.finish()?;
    require(s.picard_tol > 0.0, "solver.picard_tol", "must be > 0")?;
    require(s.residual_tol > 0.0, "solver.residual_tol", "must be > 0")?;
    require(s.max_picard >= 1, "solver.max_picard", "must be ≥ 1")?;
    require(s.damping > 0.0 && s.damping <= 1.0, "solver.damping", "must lie in (0, 1]")?;

    let directory = output
        .string("directory")?
        .map(PathBuf::from)
        .unwrap_or_else(|| defaults.output.directory.clone());
    let formats = match output.table.remove("formats") {
        None => defaults.output.formats.clone(),
        Some(Value::Array(a)) => {
            let mut out = Vec::new();
            for v in a {
                let f = match v.as_str() {
                    Some("vtk") => Format::Vtk,
                    Some("csv") => Format::Csv,
                    Some("json") => Format::Json,
                    _ => return Err(cfg_err("output.formats", format!("unknown format {v}"))),
                };
                if !out.contains(&f) {
                    out.push(f);
                }
            }
            out
        }
        Some(_) => return Err(cfg_err("output.formats", "expected an array of strings")),
    };
    output.finish()?;

    let config = RunConfig {
        mode,
        levels,
        geometry: g,
        physics: PhysicsConfig { nu, force, angle },
        model: m,
        solver: s,
        output: OutputConfig { directory, formats },
    };
    config
        .channel_geometry()
        .z_planes()
        .map_err(|e| cfg_err("geometry.wall_fraction", e.to_string()))?;
    Ok(config)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        let c = parse_config("").unwrap();
        assert_eq!(c, RunConfig::default());
        assert_eq!(c.mode, Mode::Solve);
        assert_eq!((c.model.kappa, c.model.z0_plus, c.model.zmax_plus), (0.41, 20.0, 100.0));
        assert_eq!((c.geometry.sublayer, c.geometry.layer_thickness), (0.01, 0.2));
        assert_eq!((c.model.cs, c.model.cw, c.solver.damping), (0.1, 0.1, 1.0));
    }

    #[test]
    fn negative_smagorinsky_constant_is_rejected() {
        let e = parse_config("[model]\nCs = -1\n").unwrap_err();
        assert_eq!(e.to_string(), "model.Cs: must be ≥ 0");
    }

    #[test]
    fn unknown_keys_and_type_errors_name_the_key() {
        assert_eq!(parse_config("[geometry]\nfoo = 1\n").unwrap_err().to_string(), "geometry.foo: unknown key");
        assert_eq!(parse_config("bogus = 1\n").unwrap_err().to_string(), "bogus: unknown key");
        assert!(parse_config("[physics]\nnu = \"x\"\n")
            .unwrap_err()
            .to_string()
            .starts_with("physics.nu: expected a number"));
        assert!(parse_config("[geometry]\nn = 5\n")
            .unwrap_err()
            .to_string()
            .starts_with("geometry.wall_fraction"));
        assert!(parse_config("[geometry]\nD = 0.01\n").unwrap_err().to_string().starts_with("geometry.D"));
    }

    #[test]
    fn round_trip() {
        let text = "[geometry]\nn = 4\n[model]\nCs = 0.1\nCw = 0\n";
        let parsed = parse_config(text).unwrap();
        let normalized = parsed.to_toml();
        let again = parse_config(&normalized).unwrap();
        assert_eq!(parsed, again);
        assert_eq!(normalized, again.to_toml());
        assert_eq!(again.model.cw, 0.0);
    }

    #[test]
    fn constant_force_and_overrides() {
        let vars = vec![
            ("CHANLES__geometry__n3".to_string(), "8".to_string()),
            ("CHANLES__model__c_variant".to_string(), "normal-only".to_string()),
            ("CHANLES__mode".to_string(), "study".to_string()),
            ("CHANLES__physics__force".to_string(), "[1, 0, 0]".to_string()),
            ("UNRELATED".to_string(), "1".to_string()),
        ];
        let c = parse_config_with_overrides("[geometry]\nn3 = 4\n", vars).unwrap();
        assert_eq!(c.geometry.n3, 8);
        assert_eq!(c.model.variant, CVariant::NormalOnly);
        assert_eq!(c.mode, Mode::Study);
        assert_eq!(c.physics.force, ForceSpec::Constant([1.0, 0.0, 0.0]));
        let bad = parse_config_with_overrides("", vec![("CHANLES__model__Cw".to_string(), "-2".to_string())]);
        assert_eq!(bad.unwrap_err().to_string(), "model.Cw: must be ≥ 0");
    }
}
