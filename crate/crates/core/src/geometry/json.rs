use serde_json::Value;

use super::{Halfspace, OrderingCone, Polyhedron};
use crate::error::{Error, Result};

/// Formats a finite number with 17 significant digits.
pub fn format_number(x: f64) -> String {
    if x == 0.0 {
        return "0.0000000000000000e0".to_string();
    }
    format!("{:.16e}", x)
}

pub(crate) fn write_list(out: &mut String, rows: &[Vec<f64>]) {
    out.push('[');
    for (i, r) in rows.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        out.push('[');
        for (k, x) in r.iter().enumerate() {
            if k > 0 {
                out.push(',');
            }
            out.push_str(&format_number(*x));
        }
        out.push(']');
    }
    out.push(']');
}

/// Serialises a polyhedron as
/// `{"halfspaces":[[a...,b]...],"vertices":[...],"directions":[...],"cone":{...}}`.
pub fn polyhedron_to_json(p: &Polyhedron) -> String {
    let hs: Vec<Vec<f64>> = p
        .halfspaces()
        .iter()
        .map(|h| {
            let mut r = h.normal.clone();
            r.push(h.offset);
            r
        })
        .collect();
    let mut out = String::new();
    out.push_str("{\"halfspaces\":");
    write_list(&mut out, &hs);
    out.push_str(",\"vertices\":");
    write_list(&mut out, p.vertices());
    out.push_str(",\"directions\":");
    write_list(&mut out, p.directions());
    out.push_str(",\"cone\":{\"generators\":");
    write_list(&mut out, p.cone().generators());
    out.push_str(",\"dual_generators\":");
    write_list(&mut out, p.cone().dual_generators());
    out.push_str("}}");
    out
}

fn read_list(v: &Value, key: &str) -> Result<Vec<Vec<f64>>> {
    let arr = v
        .get(key)
        .and_then(|a| a.as_array())
        .ok_or_else(|| Error::Parse(format!("missing array `{key}`")))?;
    arr.iter()
        .map(|row| {
            row.as_array()
                .ok_or_else(|| Error::Parse(format!("`{key}` entries must be arrays")))?
                .iter()
                .map(|x| {
                    x.as_f64()
                        .ok_or_else(|| Error::Parse(format!("non-numeric entry in `{key}`")))
                })
                .collect()
        })
        .collect()
}

/// Parses the format written by [`polyhedron_to_json`]. Without a `cone`
/// entry the ordering cone defaults to the nonnegative orthant.
pub fn parse_polyhedron(s: &str) -> Result<Polyhedron> {
    let v: Value = serde_json::from_str(s)?;
    parse_polyhedron_value(&v)
}

pub(crate) fn parse_polyhedron_value(v: &Value) -> Result<Polyhedron> {
    let hs = read_list(v, "halfspaces")?;
    let vertices = read_list(v, "vertices")?;
    let directions = read_list(v, "directions")?;
    let q = vertices
        .first()
        .map(|x| x.len())
        .ok_or_else(|| Error::Parse("polyhedron without vertices".into()))?;
    let cone = match v.get("cone") {
        Some(c) => {
            let duals = read_list(c, "dual_generators")?;
            let gens = read_list(c, "generators")?;
            let cone = OrderingCone::from_dual_generators(&duals)?;
            if gens.len() != cone.generators().len() {
                return Err(Error::Parse("inconsistent cone description".into()));
            }
            cone
        }
        None => OrderingCone::orthant(q),
    };
    let mut halfspaces = Vec::with_capacity(hs.len());
    for r in hs {
        if r.len() != q + 1 {
            return Err(Error::DimensionMismatch("halfspace row length".into()));
        }
        halfspaces.push(Halfspace {
            normal: r[..q].to_vec(),
            offset: r[q],
        });
    }
    if vertices.iter().chain(&directions).any(|x| x.len() != q) {
        return Err(Error::DimensionMismatch("generator length".into()));
    }
    Ok(Polyhedron::from_parts_unchecked(
        halfspaces, vertices, directions, cone,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_digits() {
        assert_eq!(format_number(0.1), "1.0000000000000001e-1");
        assert_eq!(format_number(-2.5), "-2.5000000000000000e0");
        let x = 1.0 / 3.0;
        assert_eq!(format_number(x).parse::<f64>().unwrap(), x);
    }

    #[test]
    fn round_trip_is_exact() {
        let c = OrderingCone::orthant(2);
        let p = Polyhedron::from_generators(&[vec![0.1, 1.0 / 3.0], vec![2.0, -0.7]], &[], &c).unwrap();
        let s = polyhedron_to_json(&p);
        let back = parse_polyhedron(&s).unwrap();
        assert_eq!(back.vertices(), p.vertices());
        assert_eq!(back.halfspaces(), p.halfspaces());
        assert_eq!(polyhedron_to_json(&back), s);
    }
}
