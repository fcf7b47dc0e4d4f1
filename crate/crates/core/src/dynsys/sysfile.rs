//! Plain-text system definitions.
//!
//! ```text
//! # Arnold cat map
//! family = torus-linear
//! params = 2, 1, 1, 1
//! domain = torus
//! smoothness_r = inf
//! ```
//!
//! Composite systems add `variant = linear | translation | two-piece-swap`.
//! Plane systems may override the escape box with `bounds = lo, hi`.

use std::collections::BTreeMap;

use super::{Domain, Family, SmoothMap2D, Smoothness};
use crate::error::{Error, Result};

/// Parsed, not yet validated, system definition.
#[derive(Clone, Debug, PartialEq)]
pub struct SystemSpec {
    pub family: String,
    pub variant: Option<String>,
    pub params: Vec<f64>,
    pub domain: Option<String>,
    pub bounds: Option<(f64, f64)>,
    pub smoothness_r: f64,
}

fn parse_number(s: &str) -> Result<f64> {
    match s.trim() {
        "inf" | "infinity" | "∞" => Ok(f64::INFINITY),
        t => t.parse().map_err(|_| Error::Parse(format!("not a number: {t:?}"))),
    }
}

fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split([',', ' '])
        .filter(|t| !t.trim().is_empty())
        .map(parse_number)
        .collect()
}

pub fn parse_system(text: &str) -> Result<SystemSpec> {
    let mut kv = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("line {}: expected key = value", lineno + 1)))?;
        kv.insert(k.trim().to_string(), v.trim().to_string());
    }
    let family = kv.remove("family").ok_or_else(|| Error::Parse("missing family".into()))?;
    let params = kv.remove("params").map(|p| parse_list(&p)).transpose()?.unwrap_or_default();
    let smoothness_r = kv
        .remove("smoothness_r")
        .map(|s| parse_number(&s))
        .transpose()?
        .unwrap_or(f64::INFINITY);
    let bounds = match kv.remove("bounds") {
        Some(b) => match parse_list(&b)?.as_slice() {
            [lo, hi] => Some((*lo, *hi)),
            _ => return Err(Error::Parse("bounds needs two numbers".into())),
        },
        None => None,
    };
    let spec = SystemSpec {
        family,
        variant: kv.remove("variant"),
        params,
        domain: kv.remove("domain"),
        bounds,
        smoothness_r,
    };
    if let Some(k) = kv.keys().next() {
        return Err(Error::Parse(format!("unknown key {k:?}")));
    }
    Ok(spec)
}

impl SystemSpec {
    pub fn build(&self) -> Result<SmoothMap2D> {
        let p = &self.params;
        let need = |n: usize| -> Result<()> {
            if p.len() == n {
                Ok(())
            } else {
                Err(Error::InvalidParams(format!(
                    "family {} expects {n} params, got {}",
                    self.family,
                    p.len()
                )))
            }
        };
        let m = |p: &[f64]| [[p[0], p[1]], [p[2], p[3]]];
        let family = match (self.family.as_str(), self.variant.as_deref()) {
            ("torus-linear", None) => {
                need(4)?;
                Family::TorusLinear { matrix: m(p) }
            }
            ("torus-perturbed", None) => {
                need(5)?;
                Family::TorusPerturbed { matrix: m(p), amplitude: p[4] }
            }
            ("henon", None) => {
                need(2)?;
                Family::Henon { a: p[0], b: p[1] }
            }
            ("affine-horseshoe", None) => match p.len() {
                2 => Family::AffineHorseshoe { contraction: p[0], expansion: p[1], wobble: 0.0 },
                _ => {
                    need(3)?;
                    Family::AffineHorseshoe { contraction: p[0], expansion: p[1], wobble: p[2] }
                }
            },
            ("custom-composite", Some("linear")) => {
                need(4)?;
                Family::Linear { matrix: m(p) }
            }
            ("custom-composite", Some("translation")) => {
                need(2)?;
                Family::Translation { shift: [p[0], p[1]] }
            }
            ("custom-composite", Some("two-piece-swap")) => {
                need(4)?;
                Family::TwoPieceSwap { matrix: m(p) }
            }
            (f, v) => {
                return Err(Error::Parse(format!("unknown family {f:?} (variant {v:?})")));
            }
        };
        let smooth = Smoothness(self.smoothness_r);
        let map = SmoothMap2D::new(family.clone(), smooth)?;
        let declared = self.domain.as_deref();
        let expected = match map.domain() {
            Domain::Plane { .. } => "plane",
            Domain::Torus => "torus",
            Domain::TorusPair => "torus-pair",
        };
        if let Some(d) = declared {
            if d != expected {
                return Err(Error::InvalidParams(format!(
                    "family {} lives on {expected}, not {d}",
                    self.family
                )));
            }
        }
        match (self.bounds, map.domain()) {
            (Some((lo, hi)), Domain::Plane { .. }) => SmoothMap2D::with_domain(
                family,
                Domain::Plane { lo: [lo, lo], hi: [hi, hi] },
                smooth,
            ),
            (Some(_), _) => Err(Error::InvalidParams("bounds only apply to plane systems".into())),
            (None, _) => Ok(map),
        }
    }

    pub fn from_map(map: &SmoothMap2D) -> Self {
        let (domain, bounds) = match map.domain() {
            Domain::Plane { lo, hi } => ("plane", Some((lo[0], hi[0]))),
            Domain::Torus => ("torus", None),
            Domain::TorusPair => ("torus-pair", None),
        };
        SystemSpec {
            family: map.family().name().to_string(),
            variant: map.family().variant().map(str::to_string),
            params: map.family().params(),
            domain: Some(domain.to_string()),
            bounds,
            smoothness_r: map.smoothness().0,
        }
    }

    pub fn to_text(&self) -> String {
        let num = |v: f64| if v.is_infinite() { "inf".to_string() } else { format!("{v}") };
        let mut out = format!("family = {}\n", self.family);
        if let Some(v) = &self.variant {
            out += &format!("variant = {v}\n");
        }
        let ps: Vec<String> = self.params.iter().map(|&v| num(v)).collect();
        out += &format!("params = {}\n", ps.join(", "));
        if let Some(d) = &self.domain {
            out += &format!("domain = {d}\n");
        }
        if let Some((lo, hi)) = self.bounds {
            out += &format!("bounds = {}, {}\n", num(lo), num(hi));
        }
        out += &format!("smoothness_r = {}\n", num(self.smoothness_r));
        out
    }
}
