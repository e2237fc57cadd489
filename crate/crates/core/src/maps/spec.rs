//! JSON form of maps.
//!
//! ```json
//! {"type":"piecewise_affine_circle",
//!  "branches":[{"dom":["0","1/2"],"slope":"2","offset":"0"},
//!              {"dom":["1/2","1"],"slope":"2","offset":"-1"}]}
//! ```
//!
//! Other types: `piecewise_polynomial` (branches carry `coeffs`), `named`
//! (`doubling`, `tripling`, `times` with `m`, `rotation` with `alpha`,
//! `halving`, `identity`, `sine_surrogate` with `eps`) and `patched` (a `base`
//! plus a list of `patches`).

use serde_json::{json, Value};

use super::circle::{Branch, CircleMap, Piece};
use super::patched::{Patch, PatchedMap};
use super::poly::Poly;
use crate::error::{Error, Result};
use crate::scalar::{self, Scalar};

#[derive(Clone, Debug, PartialEq)]
pub enum MapSpec {
    Circle(CircleMap),
    Patched(PatchedMap),
}

impl MapSpec {
    pub fn into_patched(self) -> PatchedMap {
        match self {
            MapSpec::Circle(c) => PatchedMap::unpatched(c),
            MapSpec::Patched(p) => p,
        }
    }

    pub fn base(&self) -> &CircleMap {
        match self {
            MapSpec::Circle(c) => c,
            MapSpec::Patched(p) => p.base(),
        }
    }
}

fn field<'a>(v: &'a Value, k: &str) -> Result<&'a Value> {
    v.get(k).ok_or_else(|| Error::input(format!("missing field {k:?}")))
}

fn sfield(v: &Value, k: &str) -> Result<Scalar> {
    scalar::from_json(field(v, k)?)
}

fn dom(v: &Value) -> Result<(Scalar, Scalar)> {
    let d = field(v, "dom")?
        .as_array()
        .filter(|a| a.len() == 2)
        .ok_or_else(|| Error::input("\"dom\" must be [lo, hi]"))?;
    Ok((scalar::from_json(&d[0])?, scalar::from_json(&d[1])?))
}

fn branches(v: &Value) -> Result<&Vec<Value>> {
    field(v, "branches")?.as_array().ok_or_else(|| Error::input("\"branches\" must be an array"))
}

pub fn map_from_json(v: &Value) -> Result<MapSpec> {
    let ty = field(v, "type")?.as_str().ok_or_else(|| Error::input("\"type\" must be a string"))?;
    let reduce = v.get("mod1").and_then(Value::as_bool).unwrap_or(true);
    match ty {
        "piecewise_affine_circle" => {
            let mut out = Vec::new();
            for b in branches(v)? {
                let (lo, hi) = dom(b)?;
                out.push(Branch { lo, hi, piece: Piece::Affine { slope: sfield(b, "slope")?, offset: sfield(b, "offset")? } });
            }
            Ok(MapSpec::Circle(CircleMap::new(out, reduce)?))
        }
        "piecewise_polynomial" => {
            let mut out = Vec::new();
            for b in branches(v)? {
                let (lo, hi) = dom(b)?;
                let c = field(b, "coeffs")?
                    .as_array()
                    .ok_or_else(|| Error::input("\"coeffs\" must be an array"))?
                    .iter()
                    .map(scalar::from_json)
                    .collect::<Result<Vec<_>>>()?;
                out.push(Branch { lo, hi, piece: Piece::Poly(Poly::new(c)) });
            }
            Ok(MapSpec::Circle(CircleMap::new(out, reduce)?))
        }
        "named" => {
            let name = field(v, "name")?.as_str().ok_or_else(|| Error::input("\"name\" must be a string"))?;
            named(name, v).map(MapSpec::Circle)
        }
        "patched" => {
            let base = match map_from_json(field(v, "base")?)? {
                MapSpec::Circle(c) => c,
                MapSpec::Patched(_) => return Err(Error::input("nested patched maps are not supported")),
            };
            let mut ps = Vec::new();
            for p in field(v, "patches")?.as_array().ok_or_else(|| Error::input("\"patches\" must be an array"))? {
                ps.push(patch_from_json(p)?);
            }
            Ok(MapSpec::Patched(PatchedMap::new(base, ps)?))
        }
        other => Err(Error::input(format!("unknown map type {other:?}"))),
    }
}

fn named(name: &str, v: &Value) -> Result<CircleMap> {
    Ok(match name {
        "doubling" => CircleMap::doubling(),
        "tripling" => CircleMap::tripling(),
        "halving" => CircleMap::halving(),
        "identity" => CircleMap::identity(),
        "times" => {
            let m = field(v, "m")?.as_i64().filter(|m| *m != 0).ok_or_else(|| Error::input("\"m\" must be a nonzero integer"))?;
            CircleMap::times(m)
        }
        "rotation" => CircleMap::rotation(sfield(v, "alpha")?)?,
        "sine_surrogate" => CircleMap::doubling_with_sine_surrogate(sfield(v, "eps")?),
        other => return Err(Error::input(format!("unknown named map {other:?}"))),
    })
}

fn patch_from_json(p: &Value) -> Result<Patch> {
    let kind = field(p, "kind")?.as_str().unwrap_or("");
    match kind {
        "linearize" => Ok(Patch::Linearize {
            center: sfield(p, "center")?,
            radius: sfield(p, "radius")?,
            delta: sfield(p, "delta")?,
            raw_center: sfield(p, "raw_center")?,
            slope: sfield(p, "slope")?,
        }),
        "compress" => Ok(Patch::Compress {
            center: sfield(p, "center")?,
            half_width: sfield(p, "half_width")?,
            kappa: sfield(p, "kappa")?,
            delta: sfield(p, "delta")?,
        }),
        other => Err(Error::input(format!("unknown patch kind {other:?}"))),
    }
}

pub fn map_to_json(f: &CircleMap) -> Value {
    let affine = f.is_affine();
    let br: Vec<Value> = f
        .branches()
        .iter()
        .map(|b| {
            let d = json!([scalar::fmt(&b.lo), scalar::fmt(&b.hi)]);
            match &b.piece {
                Piece::Affine { slope, offset } => json!({"dom": d, "slope": scalar::fmt(slope), "offset": scalar::fmt(offset)}),
                Piece::Poly(q) => json!({"dom": d, "coeffs": q.coeffs().iter().map(scalar::fmt).collect::<Vec<_>>()}),
            }
        })
        .collect();
    json!({
        "type": if affine { "piecewise_affine_circle" } else { "piecewise_polynomial" },
        "mod1": f.reduces(),
        "branches": br,
    })
}

pub fn patched_to_json(g: &PatchedMap) -> Value {
    let ps: Vec<Value> = g
        .patches()
        .iter()
        .map(|p| match p {
            Patch::Linearize { center, radius, delta, raw_center, slope } => json!({
                "kind": "linearize", "center": scalar::fmt(center), "radius": scalar::fmt(radius),
                "delta": scalar::fmt(delta), "raw_center": scalar::fmt(raw_center), "slope": scalar::fmt(slope),
            }),
            Patch::Compress { center, half_width, kappa, delta } => json!({
                "kind": "compress", "center": scalar::fmt(center), "half_width": scalar::fmt(half_width),
                "kappa": scalar::fmt(kappa), "delta": scalar::fmt(delta),
            }),
        })
        .collect();
    json!({"type": "patched", "base": map_to_json(g.base()), "patches": ps})
}

pub fn patched_from_json(v: &Value) -> Result<PatchedMap> {
    Ok(map_from_json(v)?.into_patched())
}
