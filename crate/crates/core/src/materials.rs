//! Phase and group refractive indices of cavity media.
//!
//! Analytic models use Sellmeier-type expansions in the wavelength expressed in
//! micrometres. Group indices come from a central finite difference
//! `n_g = n - λ dn/dλ` with a relative step of [`DEFAULT_RELATIVE_STEP`] unless the
//! model stores a group index directly.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;

/// Relative wavelength step used by [`MaterialDispersion::group_index`].
pub const DEFAULT_RELATIVE_STEP: f64 = 1e-4;

/// One additive term of `n²(λ)` with λ in micrometres.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields))]
pub enum SellmeierTerm {
    /// `b / (λ² - c)`
    Pole { b: f64, c: f64 },
    /// `b λ² / (λ² - c)`
    Resonance { b: f64, c: f64 },
    /// `coefficient · λ^exponent`
    Power { coefficient: f64, exponent: f64 },
}

impl SellmeierTerm {
    fn eval(&self, lambda_um: f64) -> f64 {
        let l2 = lambda_um * lambda_um;
        match *self {
            SellmeierTerm::Pole { b, c } => b / (l2 - c),
            SellmeierTerm::Resonance { b, c } => b * l2 / (l2 - c),
            SellmeierTerm::Power {
                coefficient,
                exponent,
            } => coefficient * math::powf(lambda_um, exponent),
        }
    }
}

/// `n² = constant + Σ terms`, valid on a closed wavelength and temperature box.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct SellmeierModel {
    pub constant: f64,
    pub terms: Vec<SellmeierTerm>,
    /// Wavelength validity in metres, inclusive.
    pub wavelength_range: (f64, f64),
    /// Temperature validity in kelvin, inclusive.
    pub temperature_range: (f64, f64),
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "type", rename_all = "snake_case"))]
pub enum DispersionModel {
    Sellmeier(SellmeierModel),
    /// Wavelength independent indices. Valid for every positive wavelength and temperature.
    Constant { phase_index: f64, group_index: f64 },
}

/// Refractive index model of one crystal axis / polarization.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MaterialDispersion {
    pub name: String,
    pub axis: String,
    pub model: DispersionModel,
    /// Literature source of the coefficients, if any.
    #[cfg_attr(feature = "serde", serde(default))]
    pub source: Option<String>,
}

impl MaterialDispersion {
    pub fn vacuum() -> Self {
        Self::constant("vacuum", 1.0)
    }

    /// Dispersion-free material; the group index equals the phase index.
    pub fn constant(name: &str, index: f64) -> Self {
        Self::constant_with_group(name, index, index)
    }

    pub fn constant_with_group(name: &str, phase_index: f64, group_index: f64) -> Self {
        MaterialDispersion {
            name: name.to_string(),
            axis: "isotropic".to_string(),
            model: DispersionModel::Constant {
                phase_index,
                group_index,
            },
            source: None,
        }
    }

    pub fn sellmeier(name: &str, axis: &str, model: SellmeierModel) -> Self {
        MaterialDispersion {
            name: name.to_string(),
            axis: axis.to_string(),
            model: DispersionModel::Sellmeier(model),
            source: None,
        }
    }

    pub fn label(&self) -> String {
        let mut s = self.name.clone();
        s.push('/');
        s.push_str(&self.axis);
        s
    }

    /// Checks the model's own invariants: sane ranges and `n > 1` at the corners of
    /// the validity box and a sweep through it.
    pub fn validate(&self) -> Result<()> {
        match &self.model {
            DispersionModel::Constant {
                phase_index,
                group_index,
            } => {
                if !(phase_index.is_finite() && *phase_index >= 1.0) {
                    return Err(Error::invalid("phase_index", "must be finite and >= 1"));
                }
                if !(group_index.is_finite() && *group_index > 0.0) {
                    return Err(Error::invalid("group_index", "must be finite and > 0"));
                }
            }
            DispersionModel::Sellmeier(m) => {
                let (lo, hi) = m.wavelength_range;
                if !(lo > 0.0 && hi > lo) {
                    return Err(Error::invalid("wavelength_range", "need 0 < min < max"));
                }
                let (tlo, thi) = m.temperature_range;
                if !(tlo > 0.0 && thi >= tlo) {
                    return Err(Error::invalid("temperature_range", "need 0 < min <= max"));
                }
                for k in 0..=32 {
                    let l = lo + (hi - lo) * (k as f64) / 32.0;
                    let n = self.phase_index(l, tlo)?;
                    if !(n.is_finite() && n > 1.0) {
                        return Err(Error::invalid(
                            "terms",
                            "phase index must exceed 1 across the validity range",
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    fn check_range(&self, wavelength: f64, temperature: f64) -> Result<()> {
        match &self.model {
            DispersionModel::Constant { .. } => {
                if !(wavelength > 0.0 && wavelength.is_finite()) {
                    return Err(self.out_of_range("wavelength", wavelength, 0.0, f64::INFINITY));
                }
                if !(temperature > 0.0 && temperature.is_finite()) {
                    return Err(self.out_of_range("temperature", temperature, 0.0, f64::INFINITY));
                }
            }
            DispersionModel::Sellmeier(m) => {
                let (lo, hi) = m.wavelength_range;
                if !(wavelength >= lo && wavelength <= hi) {
                    return Err(self.out_of_range("wavelength", wavelength, lo, hi));
                }
                let (tlo, thi) = m.temperature_range;
                if !(temperature >= tlo && temperature <= thi) {
                    return Err(self.out_of_range("temperature", temperature, tlo, thi));
                }
            }
        }
        Ok(())
    }

    fn out_of_range(&self, what: &'static str, value: f64, min: f64, max: f64) -> Error {
        Error::OutOfRange {
            material: self.label(),
            what,
            value,
            min,
            max,
        }
    }

    /// Phase index at `wavelength` (m) and `temperature` (K).
    pub fn phase_index(&self, wavelength: f64, temperature: f64) -> Result<f64> {
        self.check_range(wavelength, temperature)?;
        Ok(match &self.model {
            DispersionModel::Constant { phase_index, .. } => *phase_index,
            DispersionModel::Sellmeier(m) => sellmeier_index(m, wavelength),
        })
    }

    /// Group index with the default finite-difference step.
    pub fn group_index(&self, wavelength: f64, temperature: f64) -> Result<f64> {
        self.group_index_with_step(wavelength, temperature, DEFAULT_RELATIVE_STEP)
    }

    /// Group index `n - λ dn/dλ` from a central difference with step
    /// `relative_step · λ`. Both stencil points must lie inside the validity range.
    pub fn group_index_with_step(
        &self,
        wavelength: f64,
        temperature: f64,
        relative_step: f64,
    ) -> Result<f64> {
        self.check_range(wavelength, temperature)?;
        match &self.model {
            DispersionModel::Constant { group_index, .. } => Ok(*group_index),
            DispersionModel::Sellmeier(m) => {
                let h = wavelength * relative_step;
                self.check_range(wavelength - h, temperature)?;
                self.check_range(wavelength + h, temperature)?;
                let n = sellmeier_index(m, wavelength);
                let dn = (sellmeier_index(m, wavelength + h) - sellmeier_index(m, wavelength - h))
                    / (2.0 * h);
                Ok(n - wavelength * dn)
            }
        }
    }
}

fn sellmeier_index(m: &SellmeierModel, wavelength: f64) -> f64 {
    let um = wavelength * 1e6;
    let n2 = m.constant + m.terms.iter().map(|t| t.eval(um)).sum::<f64>();
    math::sqrt(n2)
}
