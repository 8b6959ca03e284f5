use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{invalid, Result};
use crate::wall_law::{FrictionVelocityEvaluator, WallLaw};

/// Which turbulent diffusion form to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CVariant {
    /// `(nu_t(v) Dv, Dw)` over the whole domain.
    Full,
    /// Smagorinsky term on the core, `(nu_t,w d3 v, d3 w)` on the wall layer.
    NormalOnly,
}

/// Body force per unit mass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BodyForce {
    Constant([f64; 3]),
    /// `amplitude * sin(pi x3) * (cos(angle), sin(angle), 0)`.
    ShearSine { amplitude: f64, angle: f64 },
}

impl BodyForce {
    pub fn zero() -> Self {
        BodyForce::Constant([0.0; 3])
    }

    /// Forcing of the manufactured solution `(sin(pi x3) + pi d) e` for viscosity `nu`.
    pub fn manufactured(nu: f64, angle: f64) -> Self {
        BodyForce::ShearSine {
            amplitude: nu * PI * PI,
            angle,
        }
    }

    pub fn eval(&self, x: [f64; 3]) -> [f64; 3] {
        match *self {
            BodyForce::Constant(f) => f,
            BodyForce::ShearSine { amplitude, angle } => {
                let s = amplitude * (PI * x[2]).sin();
                [s * angle.cos(), s * angle.sin(), 0.0]
            }
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        match *self {
            BodyForce::Constant(f) => BodyForce::Constant(f.map(|c| c * s)),
            BodyForce::ShearSine { amplitude, angle } => BodyForce::ShearSine {
                amplitude: amplitude * s,
                angle,
            },
        }
    }

    pub fn is_zero(&self) -> bool {
        match *self {
            BodyForce::Constant(f) => f == [0.0; 3],
            BodyForce::ShearSine { amplitude, .. } => amplitude == 0.0,
        }
    }
}

/// Physical and model constants of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub nu: f64,
    /// Sub-layer thickness `d`.
    pub d: f64,
    /// Boundary-layer thickness `D`.
    pub layer_thickness: f64,
    pub cs: f64,
    pub cw: f64,
    pub variant: CVariant,
    pub force: BodyForce,
    pub wall_law: WallLaw,
    /// Relative tolerance of the friction-velocity inversion.
    pub inversion_tol: f64,
}

impl ModelParams {
    pub fn new(nu: f64, d: f64, layer_thickness: f64) -> Self {
        Self {
            nu,
            d,
            layer_thickness,
            cs: 0.1,
            cw: 0.1,
            variant: CVariant::Full,
            force: BodyForce::manufactured(nu, 0.0),
            wall_law: WallLaw::default(),
            inversion_tol: 1e-12,
        }
    }

    pub fn with_constants(mut self, cs: f64, cw: f64) -> Self {
        self.cs = cs;
        self.cw = cw;
        self
    }

    pub fn with_force(mut self, force: BodyForce) -> Self {
        self.force = force;
        self
    }

    pub fn with_variant(mut self, variant: CVariant) -> Self {
        self.variant = variant;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.nu > 0.0 && self.nu.is_finite()) {
            return Err(invalid("nu", format!("must be > 0, got {}", self.nu)));
        }
        if !(self.d > 0.0) {
            return Err(invalid("d", format!("must be > 0, got {}", self.d)));
        }
        if !(self.layer_thickness > 2.0 * self.d) {
            return Err(invalid("D", format!("must exceed 2d = {}, got {}", 2.0 * self.d, self.layer_thickness)));
        }
        if !(self.cs >= 0.0) {
            return Err(invalid("Cs", format!("must be >= 0, got {}", self.cs)));
        }
        if !(self.cw >= 0.0) {
            return Err(invalid("Cw", format!("must be >= 0, got {}", self.cw)));
        }
        self.friction()?;
        Ok(())
    }

    pub fn friction(&self) -> Result<FrictionVelocityEvaluator> {
        FrictionVelocityEvaluator::new(self.wall_law, self.nu)?.with_tolerance(self.inversion_tol)
    }

    /// Coercivity constant `kappa = min(nu, nu / d)` of the a-priori estimate.
    pub fn coercivity(&self) -> f64 {
        self.nu.min(self.nu / self.d)
    }
}
