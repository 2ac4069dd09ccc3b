//! Dispersion data files and the material registry.
//!
//! Built-in files are compiled in. When `NARROWBAND_DATA_DIR` is set, every
//! `materials/*.toml` below it is loaded on top, replacing built-ins of the same
//! name.

use std::collections::BTreeMap;
use std::path::Path;

use narrowband_core::materials::{MaterialDispersion, SellmeierModel, SellmeierTerm};
use serde::Deserialize;

use crate::error::{Error, Result};

pub const DATA_DIR_ENV: &str = "NARROWBAND_DATA_DIR";

const BUILTIN: [(&str, &str); 2] = [
    ("ktp.toml", include_str!("../data/materials/ktp.toml")),
    ("bbo.toml", include_str!("../data/materials/bbo.toml")),
];

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct MaterialFile {
    version: u32,
    name: String,
    source: Option<String>,
    axis: BTreeMap<String, AxisFile>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct AxisFile {
    constant: f64,
    terms: Vec<SellmeierTerm>,
    wavelength_range_um: (f64, f64),
    temperature_range_k: (f64, f64),
}

/// Materials by `name/axis` key.
#[derive(Debug, Clone, Default)]
pub struct Registry {
    entries: BTreeMap<String, MaterialDispersion>,
}

impl Registry {
    /// Built-in data plus `NARROWBAND_DATA_DIR` overrides.
    pub fn load() -> Result<Self> {
        let mut r = Self::builtin()?;
        if let Some(dir) = std::env::var_os(DATA_DIR_ENV) {
            r.load_dir(Path::new(&dir).join("materials").as_path())?;
        }
        Ok(r)
    }

    pub fn builtin() -> Result<Self> {
        let mut r = Registry::default();
        for (name, text) in BUILTIN {
            r.add_file(Path::new(name), text)?;
        }
        Ok(r)
    }

    pub fn load_dir(&mut self, dir: &Path) -> Result<()> {
        let rd = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
        let mut paths: Vec<_> = rd
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "toml"))
            .collect();
        paths.sort();
        for p in paths {
            let text = std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
            self.add_file(&p, &text)?;
        }
        Ok(())
    }

    pub fn add_file(&mut self, path: &Path, text: &str) -> Result<()> {
        let file: MaterialFile = toml::from_str(text).map_err(|e| Error::Parse {
            path: path.into(),
            message: e.to_string(),
        })?;
        if file.version != 1 {
            return Err(Error::Parse {
                path: path.into(),
                message: format!("unsupported material file version {}", file.version),
            });
        }
        let name = file.name.to_ascii_lowercase();
        self.entries.retain(|k, _| !k.starts_with(&format!("{name}/")));
        for (axis, a) in file.axis {
            let model = SellmeierModel {
                constant: a.constant,
                terms: a.terms,
                wavelength_range: (a.wavelength_range_um.0 * 1e-6, a.wavelength_range_um.1 * 1e-6),
                temperature_range: a.temperature_range_k,
            };
            let mut m = MaterialDispersion::sellmeier(&name, &axis, model);
            m.source = file.source.clone();
            m.validate().map_err(|e| Error::Parse {
                path: path.into(),
                message: format!("axis {axis}: {e}"),
            })?;
            self.entries.insert(format!("{name}/{axis}"), m);
        }
        Ok(())
    }

    /// Looks up `name/axis`, case-insensitively. `vacuum` is always defined.
    pub fn get(&self, key: &str) -> Result<MaterialDispersion> {
        let k = key.trim().to_ascii_lowercase();
        if k == "vacuum" || k == "air" {
            return Ok(MaterialDispersion::vacuum());
        }
        self.entries
            .get(&k)
            .cloned()
            .ok_or_else(|| Error::UnknownMaterial(key.to_string()))
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(|s| s.as_str())
    }
}
