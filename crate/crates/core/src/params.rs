//! Model parameters shared by every module.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Background geometry. The wave speed is `c e^{-Ht}` on the expanding
/// background and `c e^{Ht}` on the contracting one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Spacetime {
    #[serde(alias = "ds", alias = "desitter")]
    DeSitter,
    #[serde(alias = "ads", alias = "antidesitter")]
    AntiDeSitter,
}

impl Spacetime {
    pub fn name(self) -> &'static str {
        match self {
            Spacetime::DeSitter => "de_sitter",
            Spacetime::AntiDeSitter => "anti_de_sitter",
        }
    }
}

impl std::str::FromStr for Spacetime {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "de_sitter" | "desitter" | "ds" => Ok(Spacetime::DeSitter),
            "anti_de_sitter" | "antidesitter" | "ads" => Ok(Spacetime::AntiDeSitter),
            other => Err(Error::param(
                "spacetime",
                format!("unknown background `{other}`"),
            )),
        }
    }
}

/// Parameters of the damped Klein-Gordon equation with nonlocal source
/// `Γ(t) (∫|u|^p)^β |u|^p`, where `Γ(t) = μ e^{rate t} (1+t)^{poly}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelParams {
    pub spacetime: Spacetime,
    /// Space dimension.
    #[serde(alias = "n")]
    pub dim: u32,
    /// Light speed at `t = 0`.
    #[serde(alias = "c")]
    pub speed: f64,
    /// Expansion rate of the background.
    #[serde(alias = "H")]
    pub hubble: f64,
    #[serde(alias = "b")]
    pub damping: f64,
    #[serde(alias = "m2")]
    pub mass_sq: f64,
    /// Exponent on the nonlocal factor `(∫|u|^p)`.
    #[serde(alias = "beta")]
    pub nonlocal_power: f64,
    #[serde(alias = "p")]
    pub power: f64,
    /// Amplitude `μ` of the source coefficient.
    #[serde(alias = "mu")]
    pub amplitude: f64,
    /// Exponential rate of the source coefficient.
    #[serde(alias = "r", alias = "rho")]
    pub growth_rate: f64,
    /// Polynomial exponent of the source coefficient.
    #[serde(alias = "kappa")]
    pub poly_exponent: f64,
    /// Support radius of the initial data.
    #[serde(alias = "R")]
    pub radius: f64,
    /// Size of the initial data.
    #[serde(alias = "eps")]
    pub epsilon: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        ModelParams {
            spacetime: Spacetime::DeSitter,
            dim: 1,
            speed: 1.0,
            hubble: 1.0,
            damping: 1.0,
            mass_sq: 0.0,
            nonlocal_power: 0.0,
            power: 2.0,
            amplitude: 1.0,
            growth_rate: 0.0,
            poly_exponent: 0.0,
            radius: 1.0,
            epsilon: 0.1,
        }
    }
}

impl ModelParams {
    /// Effective power `q = (β+1)p` of the averaged source.
    pub fn effective_power(&self) -> f64 {
        (self.nonlocal_power + 1.0) * self.power
    }

    pub fn discriminant(&self) -> f64 {
        self.damping * self.damping - 4.0 * self.mass_sq
    }

    /// `(∫|u|^p)^β |u|^p` has exponent `p` in `u` pointwise and `q` on averages.
    pub fn validate(&self) -> Result<()> {
        let finite = [
            ("speed", self.speed),
            ("hubble", self.hubble),
            ("damping", self.damping),
            ("mass_sq", self.mass_sq),
            ("nonlocal_power", self.nonlocal_power),
            ("power", self.power),
            ("amplitude", self.amplitude),
            ("growth_rate", self.growth_rate),
            ("poly_exponent", self.poly_exponent),
            ("radius", self.radius),
            ("epsilon", self.epsilon),
        ];
        for (field, v) in finite {
            if !v.is_finite() {
                return Err(Error::param(field, "must be finite"));
            }
        }
        if self.dim == 0 {
            return Err(Error::param("dim", "must be a positive integer"));
        }
        let positive = [
            ("speed", self.speed),
            ("hubble", self.hubble),
            ("amplitude", self.amplitude),
            ("radius", self.radius),
            ("epsilon", self.epsilon),
        ];
        for (field, v) in positive {
            if v <= 0.0 {
                return Err(Error::param(field, format!("must be > 0, got {v}")));
            }
        }
        if self.damping < 0.0 {
            return Err(Error::param("damping", "must be >= 0"));
        }
        if self.mass_sq < 0.0 {
            return Err(Error::param("mass_sq", "must be >= 0"));
        }
        if self.nonlocal_power < 0.0 {
            return Err(Error::param("nonlocal_power", "must be >= 0"));
        }
        if self.power <= 1.0 {
            return Err(Error::param(
                "power",
                format!("must be > 1, got {}", self.power),
            ));
        }
        Ok(())
    }

    /// Log of the source coefficient `Γ(t)`.
    pub fn log_source_coefficient(&self, t: f64) -> f64 {
        self.amplitude.ln() + self.growth_rate * t + self.poly_exponent * (1.0 + t).ln()
    }

    /// Wave speed `a(t)`.
    pub fn wave_speed(&self, t: f64) -> f64 {
        match self.spacetime {
            Spacetime::DeSitter => self.speed * (-self.hubble * t).exp(),
            Spacetime::AntiDeSitter => self.speed * (self.hubble * t).exp(),
        }
    }

    /// Distance travelled by a signal up to time `t`.
    pub fn light_cone_radius(&self, t: f64) -> f64 {
        let ratio = self.speed / self.hubble;
        match self.spacetime {
            Spacetime::DeSitter => -ratio * (-self.hubble * t).exp_m1(),
            Spacetime::AntiDeSitter => ratio * (self.hubble * t).exp_m1(),
        }
    }
}

/// Surface area of the unit sphere in `R^n` (2 for `n = 1`).
pub fn sphere_area(n: u32) -> f64 {
    let half = n as f64 / 2.0;
    2.0 * std::f64::consts::PI.powf(half) / statrs::function::gamma::gamma(half)
}

/// Volume of the unit ball in `R^n`.
pub fn ball_volume(n: u32) -> f64 {
    sphere_area(n) / n as f64
}

/// Frame constant for the averaged inequality `∫|u|^p ≥ C_frame^{1/(β+1)} |∫u|^p`,
/// obtained from Hölder on the ball reached by the data, `B_{R + c/H}`.
/// Returned with the `(β+1)` power already applied, so the comparison
/// source reads `C Γ(t) |U|^q`.
pub fn holder_frame_constant(params: &ModelParams) -> f64 {
    let reach = params.radius + params.speed / params.hubble;
    let measure = ball_volume(params.dim) * reach.powi(params.dim as i32);
    measure.powf(-(params.power - 1.0) * (params.nonlocal_power + 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sphere_areas() {
        use std::f64::consts::PI;
        assert!((sphere_area(1) - 2.0).abs() < 1e-14);
        assert!((sphere_area(2) - 2.0 * PI).abs() < 1e-13);
        assert!((sphere_area(3) - 4.0 * PI).abs() < 1e-12);
        assert!((ball_volume(3) - 4.0 * PI / 3.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_power() {
        let p = ModelParams {
            power: 1.0,
            ..Default::default()
        };
        assert!(matches!(
            p.validate(),
            Err(Error::InvalidParameter { field: "power", .. })
        ));
    }

    #[test]
    fn light_cone() {
        let mut p = ModelParams::default();
        assert!((p.light_cone_radius(50.0) - 1.0).abs() < 1e-12);
        p.spacetime = Spacetime::AntiDeSitter;
        assert!((p.light_cone_radius(1.0) - (1f64.exp() - 1.0)).abs() < 1e-14);
    }
}
