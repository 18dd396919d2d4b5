//! Physical parameters, nondimensionalization, and the flat key-value
//! parameter-file format.
//!
//! All simulation code works with [`SystemParams`], the dimensionless set.
//! Lengths are scaled by the beam length `l`, time by the characteristic
//! scale `t_c = sqrt(rho*A*l^4 / (E*I))`, so the beam occupies `x in [0, 1]`
//! and the leading stiffness/inertia coefficients are unity.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Dimensioned description of the bench rig (SI units).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionedParams {
    /// Mass density of the strip, kg/m^3.
    pub density: f64,
    /// Cross-section area, m^2.
    pub cross_section_area: f64,
    /// Young's modulus, Pa.
    pub youngs_modulus: f64,
    /// Second moment of area, m^4.
    pub area_moment_inertia: f64,
    /// Beam length, m.
    pub length: f64,
    /// Tip magnet mass, kg.
    pub tip_mass: f64,
    /// Linearized magnetic spring stiffness at the tip, N/m.
    pub tip_stiffness: f64,
    /// Kick force magnitude, N.
    pub kick_force: f64,
    /// Strain-rate (material) damping coefficient, s.
    pub material_damping: f64,
    /// Viscous (ambient) damping coefficient, kg/(m s).
    pub viscous_damping: f64,
}

impl DimensionedParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("density", self.density),
            ("cross_section_area", self.cross_section_area),
            ("youngs_modulus", self.youngs_modulus),
            ("area_moment_inertia", self.area_moment_inertia),
            ("length", self.length),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::ParameterDomain(format!("{name} must be > 0, got {v}")));
            }
        }
        let nonneg = [
            ("tip_mass", self.tip_mass),
            ("tip_stiffness", self.tip_stiffness),
            ("kick_force", self.kick_force),
            ("material_damping", self.material_damping),
            ("viscous_damping", self.viscous_damping),
        ];
        for (name, v) in nonneg {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::ParameterDomain(format!("{name} must be >= 0, got {v}")));
            }
        }
        Ok(())
    }

    /// Characteristic time `t_c = sqrt(rho*A*l^4 / (E*I))` in seconds.
    pub fn time_scale(&self) -> f64 {
        let rho_a = self.density * self.cross_section_area;
        let ei = self.youngs_modulus * self.area_moment_inertia;
        (rho_a * self.length.powi(4) / ei).sqrt()
    }
}

/// Dimensionless system parameters used by every solver in the crate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    /// Viscous damping coefficient.
    pub cv: f64,
    /// Strain-rate damping coefficient.
    pub cm: f64,
    /// Tip mass ratio.
    pub m: f64,
    /// Tip spring stiffness (active inside the kicker gap).
    pub k: f64,
    /// Kick force magnitude.
    pub f: f64,
    /// Full gap width; the kicker occupies `|w(1)| <= d/2`.
    pub d: f64,
    /// Critical tip speed for firing the kick.
    pub vcr: f64,
    /// Number of modes retained in each modal basis.
    pub n_modes: usize,
}

impl SystemParams {
    pub fn validate(&self) -> Result<()> {
        let nonneg = [
            ("cv", self.cv),
            ("cm", self.cm),
            ("m", self.m),
            ("k", self.k),
            ("F", self.f),
        ];
        for (name, v) in nonneg {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::ParameterDomain(format!("{name} must be >= 0, got {v}")));
            }
        }
        if !(self.d.is_finite() && self.d > 0.0) {
            return Err(Error::ParameterDomain(format!("d must be > 0, got {}", self.d)));
        }
        if !(self.vcr.is_finite() && self.vcr > 0.0) {
            return Err(Error::ParameterDomain(format!("vcr must be > 0, got {}", self.vcr)));
        }
        if self.n_modes == 0 {
            return Err(Error::ParameterDomain("N must be >= 1".into()));
        }
        Ok(())
    }

    /// Copy with a different kick strength; everything else unchanged.
    pub fn with_kick(&self, f: f64) -> Self {
        Self { f, ..self.clone() }
    }
}

/// Scale a dimensioned parameter set to the dimensionless form.
///
/// The gap width `d` and critical speed `vcr` are rig settings rather than
/// beam properties, so they are passed already nondimensionalized (length
/// scale `l`, velocity scale `l/t_c`), as is the mode count.
pub fn nondimensionalize(
    p: &DimensionedParams,
    d: f64,
    vcr: f64,
    n_modes: usize,
) -> Result<SystemParams> {
    p.validate()?;
    let tc = p.time_scale();
    let rho_a = p.density * p.cross_section_area;
    let ei = p.youngs_modulus * p.area_moment_inertia;
    let l = p.length;
    let sys = SystemParams {
        cv: p.viscous_damping * tc / rho_a,
        cm: p.material_damping / tc,
        m: p.tip_mass / (rho_a * l),
        k: p.tip_stiffness * l.powi(3) / ei,
        f: p.kick_force * l.powi(2) / ei,
        d,
        vcr,
        n_modes,
    };
    sys.validate()?;
    Ok(sys)
}

const DIM_KEYS: [&str; 10] = [
    "dim.density",
    "dim.cross_section_area",
    "dim.youngs_modulus",
    "dim.area_moment_inertia",
    "dim.length",
    "dim.tip_mass",
    "dim.tip_stiffness",
    "dim.kick_force",
    "dim.material_damping",
    "dim.viscous_damping",
];

/// Parse flat `key = value` text (`#` comments, blank lines ignored) into a
/// string map, preserving nothing but the last assignment per key.
pub fn parse_key_values(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::Input(format!(
                "line {}: expected `key = value`, got {raw:?}",
                lineno + 1
            )));
        };
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(map)
}

fn get_f64(map: &BTreeMap<String, String>, key: &str) -> Result<f64> {
    let raw = map
        .get(key)
        .ok_or_else(|| Error::Input(format!("missing parameter key {key:?}")))?;
    raw.parse::<f64>()
        .map_err(|_| Error::Input(format!("key {key:?}: not a number: {raw:?}")))
}

/// Build [`SystemParams`] from parsed key-value pairs.
///
/// Plain keys `cv, cm, m, k, F, d, vcr, N` describe the dimensionless set
/// directly. If any `dim.*` key is present the full dimensioned block is
/// required instead and `cv, cm, m, k, F` are derived from it; `d`, `vcr`,
/// `N` always come from the plain keys.
pub fn params_from_map(map: &BTreeMap<String, String>) -> Result<SystemParams> {
    let d = get_f64(map, "d")?;
    let vcr = get_f64(map, "vcr")?;
    let n = get_f64(map, "N")?;
    if !(n.is_finite() && n >= 1.0 && n.fract() == 0.0) {
        return Err(Error::Input(format!("key \"N\": expected a positive integer, got {n}")));
    }
    let n_modes = n as usize;

    let has_dim = map.keys().any(|k| k.starts_with("dim."));
    if has_dim {
        let dim = DimensionedParams {
            density: get_f64(map, DIM_KEYS[0])?,
            cross_section_area: get_f64(map, DIM_KEYS[1])?,
            youngs_modulus: get_f64(map, DIM_KEYS[2])?,
            area_moment_inertia: get_f64(map, DIM_KEYS[3])?,
            length: get_f64(map, DIM_KEYS[4])?,
            tip_mass: get_f64(map, DIM_KEYS[5])?,
            tip_stiffness: get_f64(map, DIM_KEYS[6])?,
            kick_force: get_f64(map, DIM_KEYS[7])?,
            material_damping: get_f64(map, DIM_KEYS[8])?,
            viscous_damping: get_f64(map, DIM_KEYS[9])?,
        };
        nondimensionalize(&dim, d, vcr, n_modes)
    } else {
        let sys = SystemParams {
            cv: get_f64(map, "cv")?,
            cm: get_f64(map, "cm")?,
            m: get_f64(map, "m")?,
            k: get_f64(map, "k")?,
            f: get_f64(map, "F")?,
            d,
            vcr,
            n_modes,
        };
        sys.validate()?;
        Ok(sys)
    }
}

/// Parse a parameter file in the flat key-value format.
pub fn params_from_text(text: &str) -> Result<SystemParams> {
    params_from_map(&parse_key_values(text)?)
}

/// Serialize a dimensionless parameter set in the flat key-value format.
pub fn params_to_text(p: &SystemParams) -> String {
    format!(
        "cv = {:e}\ncm = {:e}\nm = {:e}\nk = {:e}\nF = {:e}\nd = {:e}\nvcr = {:e}\nN = {}\n",
        p.cv, p.cm, p.m, p.k, p.f, p.d, p.vcr, p.n_modes
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn desk_rig() -> DimensionedParams {
        // Steel strip: rho*A = 0.03 kg/m, E*I = 0.1 N m^2, l = 0.4 m.
        DimensionedParams {
            density: 7850.0,
            cross_section_area: 0.03 / 7850.0,
            youngs_modulus: 2.0e11,
            area_moment_inertia: 0.1 / 2.0e11,
            length: 0.4,
            tip_mass: 0.012,
            tip_stiffness: 1562.5,
            kick_force: 8.09375,
            material_damping: 2.631e-5,
            viscous_damping: 1.5394,
        }
    }

    #[test]
    fn desk_scale_time_constant() {
        let tc = desk_rig().time_scale();
        assert_relative_eq!(tc, 0.0877, max_relative = 1e-3);
    }

    #[test]
    fn nondimensionalization_matches_hand_formulas() {
        let p = desk_rig();
        let sys = nondimensionalize(&p, 0.2, 0.05, 25).unwrap();
        let tc = p.time_scale();
        let rho_a = p.density * p.cross_section_area;
        let ei = p.youngs_modulus * p.area_moment_inertia;
        assert_relative_eq!(sys.m, p.tip_mass / (rho_a * p.length), max_relative = 1e-14);
        assert_relative_eq!(sys.k, p.tip_stiffness * p.length.powi(3) / ei, max_relative = 1e-14);
        assert_relative_eq!(sys.f, p.kick_force * p.length.powi(2) / ei, max_relative = 1e-14);
        assert_relative_eq!(sys.cm, p.material_damping / tc, max_relative = 1e-14);
        assert_relative_eq!(sys.cv, p.viscous_damping * tc / rho_a, max_relative = 1e-14);
        // The chosen rig values land on the canonical dimensionless set.
        assert_relative_eq!(sys.m, 1.0, max_relative = 1e-3);
        assert_relative_eq!(sys.k, 1000.0, max_relative = 1e-3);
        assert_relative_eq!(sys.f, 12.95, max_relative = 1e-3);
        assert_relative_eq!(sys.cv, 4.5, max_relative = 1e-3);
        assert_relative_eq!(sys.cm, 3.0e-4, max_relative = 1e-3);
    }

    #[test]
    fn round_trip_through_redimensionalization() {
        let p = desk_rig();
        let sys = nondimensionalize(&p, 0.2, 0.05, 25).unwrap();
        // Invert the scaling by hand and compare with the original inputs.
        let tc = p.time_scale();
        let rho_a = p.density * p.cross_section_area;
        let ei = p.youngs_modulus * p.area_moment_inertia;
        let l = p.length;
        assert_relative_eq!(sys.m * rho_a * l, p.tip_mass, max_relative = 1e-12);
        assert_relative_eq!(sys.k * ei / l.powi(3), p.tip_stiffness, max_relative = 1e-12);
        assert_relative_eq!(sys.f * ei / l.powi(2), p.kick_force, max_relative = 1e-12);
        assert_relative_eq!(sys.cm * tc, p.material_damping, max_relative = 1e-12);
        assert_relative_eq!(sys.cv * rho_a / tc, p.viscous_damping, max_relative = 1e-12);
    }

    #[test]
    fn rejects_nonpositive_geometry() {
        let mut p = desk_rig();
        p.length = 0.0;
        assert!(matches!(p.validate(), Err(Error::ParameterDomain(_))));
        let mut p = desk_rig();
        p.density = f64::NAN;
        assert!(p.validate().is_err());
    }

    #[test]
    fn param_text_round_trip() {
        let sys = SystemParams {
            cv: 4.5,
            cm: 3.0e-4,
            m: 1.0,
            k: 1000.0,
            f: 12.95,
            d: 0.2,
            vcr: 0.05,
            n_modes: 25,
        };
        let text = params_to_text(&sys);
        let back = params_from_text(&text).unwrap();
        assert_eq!(sys, back);
    }

    #[test]
    fn dimensioned_block_takes_precedence() {
        let text = "\
# rig description
d = 0.2
vcr = 0.05
N = 25
dim.density = 7850
dim.cross_section_area = 3.821656050955414e-6
dim.youngs_modulus = 2e11
dim.area_moment_inertia = 5e-13
dim.length = 0.4
dim.tip_mass = 0.012
dim.tip_stiffness = 1562.5
dim.kick_force = 8.09375
dim.material_damping = 2.631e-5
dim.viscous_damping = 1.5394
";
        let sys = params_from_text(text).unwrap();
        assert_relative_eq!(sys.k, 1000.0, max_relative = 1e-3);
        assert_eq!(sys.n_modes, 25);
    }

    #[test]
    fn malformed_lines_are_rejected() {
        assert!(params_from_text("cv 4.5").is_err());
        assert!(params_from_text("cv = abc\ncm = 0\nm = 1\nk = 1\nF = 1\nd = 0.2\nvcr = 0.05\nN = 5").is_err());
        // Missing key.
        assert!(params_from_text("cv = 4.5").is_err());
    }
}
