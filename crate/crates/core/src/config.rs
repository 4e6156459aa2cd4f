//! Run configuration: droplet field, proto-droplet and renderer settings.
//!
//! Configs are TOML files with `[field]`, `[proto]` and `[render]` tables.
//! Any key can be overridden with a dotted `section.key=value` string, which
//! takes precedence over the file. Omitted keys keep their defaults.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dropfield::FieldConfig;
use crate::error::{Error, Result};
use crate::protodrop::ProtoParams;
use crate::render::RenderParams;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub field: FieldConfig,
    pub proto: ProtoParams,
    pub render: RenderParams,
}

impl Config {
    pub fn validate(&self) -> Result<()> {
        self.field.validate()?;
        self.proto.validate()?;
        self.render.validate()
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        Self::resolve(Some(text), &[])
    }

    /// Reads `path` (if any), applies `overrides` in order, and validates.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let text = match path {
            Some(p) => Some(std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?),
            None => None,
        };
        Self::resolve(text.as_deref(), overrides)
    }

    fn resolve(text: Option<&str>, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = match text {
            Some(t) => t.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?,
            None => toml::Table::new(),
        };
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: Config = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config is plain data")
    }

    /// SHA-256 over the canonical JSON encoding, hex encoded.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config is plain data");
        hex::encode(Sha256::digest(&json))
    }
}

fn apply_override(table: &mut toml::Table, arg: &str) -> Result<()> {
    let (key, raw) = arg
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {arg:?} is not key=value")))?;
    let path: Vec<&str> = key.trim().split('.').collect();
    if path.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("override {arg:?} has an empty key")));
    }
    let raw = raw.trim();
    // Parse the value as a TOML literal; anything that is not one is a string.
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));

    let (last, parents) = path.split_last().expect("nonempty path");
    let mut cursor = table;
    for p in parents {
        cursor = cursor
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override {arg:?}: `{p}` is not a table")))?;
    }
    cursor.insert(last.to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_input_is_default() {
        assert_eq!(Config::load(None, &[]).unwrap(), Config::default());
    }

    #[test]
    fn overrides_beat_the_file() {
        let text = "[field]\np_r = 0.001\nseed = 3\n";
        let cfg = Config::resolve(Some(text), &["field.seed=9".into(), "render.dark_band=true".into()]).unwrap();
        assert_eq!(cfg.field.p_r, 0.001);
        assert_eq!(cfg.field.seed, 9);
        assert!(cfg.render.dark_band);
        assert_eq!(cfg.proto, ProtoParams::default());
    }

    #[test]
    fn arrays_and_floats_parse() {
        let cfg = Config::load(None, &["field.scale_range=[1.0, 2.0]".into(), "proto.radius_px=20".into()]).unwrap();
        assert_eq!(cfg.field.scale_range, [1.0, 2.0]);
        assert_eq!(cfg.proto.radius_px, 20.0);
    }

    #[test]
    fn unknown_keys_and_bad_values_are_errors() {
        assert!(Config::load(None, &["field.bogus=1".into()]).is_err());
        assert!(Config::load(None, &["field.p_r".into()]).is_err());
        assert!(matches!(Config::load(None, &["proto.radius_px=0.0".into()]), Err(Error::Param { name: "radius_px", .. })));
    }

    #[test]
    fn toml_round_trip_and_hash() {
        let mut cfg = Config::default();
        cfg.field.seed = 42;
        let back = Config::from_toml_str(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
        cfg.field.seed = 43;
        assert_ne!(back.hash(), cfg.hash());
    }

    #[test]
    fn shipped_default_file_matches_defaults() {
        let text = include_str!("../../../configs/default.toml");
        assert_eq!(Config::from_toml_str(text).unwrap(), Config::default());
    }
}
