//! Plain and extended XYZ.
//!
//! Each frame is a count line, a comment line, and one `El x y z [fx fy fz]`
//! row per atom. The comment line holds whitespace-separated `key=value`
//! pairs (values may be double-quoted); `energy`, `dipole="x y z"` and `id`
//! are recognized and everything else is kept verbatim. A comment without any
//! `=` is taken as the frame id.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

use super::elements::is_element;
use super::structure::{Atom, Structure};
use crate::frame::Vec3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum XyzError {
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("line {line}: unknown element {symbol:?}")]
    UnknownElement { line: usize, symbol: String },
}

fn parse_error(line: usize, reason: impl Into<String>) -> XyzError {
    XyzError::Parse { line, reason: reason.into() }
}

/// `"cl"`, `"CL"` and `"Cl"` all name chlorine.
fn normalize_symbol(s: &str) -> String {
    let mut chars = s.chars();
    match chars.next() {
        Some(first) => first.to_ascii_uppercase().to_string() + &chars.as_str().to_ascii_lowercase(),
        None => String::new(),
    }
}

fn parse_float(token: &str, line: usize, what: &str) -> Result<f64, XyzError> {
    token.parse::<f64>().map_err(|_| parse_error(line, format!("{what}: {token:?} is not a number")))
}

/// Splits a comment line into `key=value` pairs and bare words.
fn tokenize_comment(text: &str, line: usize) -> Result<Vec<(String, Option<String>)>, XyzError> {
    let mut out = Vec::new();
    let mut chars = text.chars().peekable();
    loop {
        while chars.next_if(|c| c.is_whitespace()).is_some() {}
        if chars.peek().is_none() {
            return Ok(out);
        }
        let mut key = String::new();
        while let Some(c) = chars.next_if(|c| !c.is_whitespace() && *c != '=') {
            key.push(c);
        }
        if chars.next_if_eq(&'=').is_none() {
            out.push((key, None));
            continue;
        }
        let mut value = String::new();
        if chars.next_if_eq(&'"').is_some() {
            loop {
                match chars.next() {
                    Some('"') => break,
                    Some('\\') => match chars.next() {
                        Some(c) => value.push(c),
                        None => return Err(parse_error(line, "dangling escape in comment")),
                    },
                    Some(c) => value.push(c),
                    None => return Err(parse_error(line, "unterminated quote in comment")),
                }
            }
        } else {
            while let Some(c) = chars.next_if(|c| !c.is_whitespace()) {
                value.push(c);
            }
        }
        out.push((key, Some(value)));
    }
}

struct Comment {
    id: Option<String>,
    energy: Option<f64>,
    dipole: Option<Vec3>,
    properties: BTreeMap<String, String>,
}

fn parse_comment(text: &str, line: usize) -> Result<Comment, XyzError> {
    let mut c = Comment { id: None, energy: None, dipole: None, properties: BTreeMap::new() };
    let tokens = tokenize_comment(text, line)?;
    if tokens.iter().all(|(_, v)| v.is_none()) {
        let trimmed = text.trim();
        c.id = (!trimmed.is_empty()).then(|| trimmed.to_string());
        return Ok(c);
    }
    for (key, value) in tokens {
        let Some(value) = value else {
            c.properties.insert(key, String::new());
            continue;
        };
        match key.to_ascii_lowercase().as_str() {
            "energy" => c.energy = Some(parse_float(&value, line, "energy")?),
            "dipole" => {
                let v: Vec<f64> =
                    value.split_whitespace().map(|t| parse_float(t, line, "dipole")).collect::<Result<_, _>>()?;
                if v.len() != 3 {
                    return Err(parse_error(line, format!("dipole needs 3 components, got {}", v.len())));
                }
                c.dipole = Some(Vec3::new(v[0], v[1], v[2]));
            }
            "id" => c.id = Some(value),
            _ => {
                c.properties.insert(key, value);
            }
        }
    }
    Ok(c)
}

/// Parses every frame in `text`.
pub fn parse_xyz(text: &str) -> Result<Vec<Structure>, XyzError> {
    let normalized = text.replace("\r\n", "\n").replace('\r', "\n");
    let mut lines = normalized.split('\n').enumerate().map(|(i, l)| (i + 1, l)).peekable();
    let mut frames = Vec::new();
    loop {
        while lines.next_if(|(_, l)| l.trim().is_empty()).is_some() {}
        let Some((count_line, count_text)) = lines.next() else {
            return Ok(frames);
        };
        let count: usize = count_text
            .trim()
            .parse()
            .map_err(|_| parse_error(count_line, format!("expected an atom count, got {:?}", count_text.trim())))?;
        if count == 0 {
            return Err(parse_error(count_line, "frame has no atoms"));
        }
        let Some((comment_line, comment_text)) = lines.next() else {
            return Err(parse_error(count_line + 1, "missing comment line"));
        };
        let comment = parse_comment(comment_text, comment_line)?;
        let mut atoms = Vec::with_capacity(count);
        let mut forces = Vec::with_capacity(count);
        let mut with_forces = None;
        for k in 0..count {
            let Some((line, row)) = lines.next() else {
                return Err(parse_error(
                    comment_line + k + 1,
                    format!("expected {count} atom rows, file ended after {k}"),
                ));
            };
            let cols: Vec<&str> = row.split_whitespace().collect();
            let has_forces = match cols.len() {
                4 => false,
                7 => true,
                n => return Err(parse_error(line, format!("expected 4 or 7 columns, got {n}"))),
            };
            if *with_forces.get_or_insert(has_forces) != has_forces {
                return Err(parse_error(line, "force columns present on some rows only"));
            }
            let symbol = normalize_symbol(cols[0]);
            if !is_element(&symbol) {
                return Err(XyzError::UnknownElement { line, symbol: cols[0].to_string() });
            }
            let mut v = [0.0; 6];
            for (slot, tok) in v.iter_mut().zip(&cols[1..]) {
                *slot = parse_float(tok, line, "coordinate")?;
                if !slot.is_finite() {
                    return Err(parse_error(line, format!("non-finite value {tok:?}")));
                }
            }
            atoms.push(Atom::new(symbol, Vec3::new(v[0], v[1], v[2])));
            if has_forces {
                forces.push(Vec3::new(v[3], v[4], v[5]));
            }
        }
        frames.push(Structure {
            id: comment.id.unwrap_or_else(|| format!("frame{}", frames.len())),
            atoms,
            forces: with_forces.unwrap_or(false).then_some(forces),
            energy: comment.energy,
            dipole: comment.dipole,
            properties: comment.properties,
        });
    }
}

fn quote(value: &str) -> String {
    if !value.is_empty() && !value.contains(|c: char| c.is_whitespace() || c == '"' || c == '\\' || c == '=') {
        return value.to_string();
    }
    let mut out = String::from('"');
    for c in value.chars() {
        if c == '"' || c == '\\' {
            out.push('\\');
        }
        out.push(c);
    }
    out.push('"');
    out
}

/// Extended XYZ with shortest round-trip float formatting.
pub fn write_xyz(structures: &[Structure]) -> String {
    let mut out = String::new();
    for s in structures {
        let _ = writeln!(out, "{}", s.atoms.len());
        let mut comment = vec![format!("id={}", quote(&s.id))];
        if let Some(e) = s.energy {
            comment.push(format!("energy={e:?}"));
        }
        if let Some(d) = s.dipole {
            comment.push(format!("dipole=\"{:?} {:?} {:?}\"", d.x, d.y, d.z));
        }
        for (k, v) in &s.properties {
            comment.push(format!("{k}={}", quote(v)));
        }
        let _ = writeln!(out, "{}", comment.join(" "));
        for (i, a) in s.atoms.iter().enumerate() {
            let p = a.position;
            let _ = write!(out, "{} {:?} {:?} {:?}", a.element, p.x, p.y, p.z);
            if let Some(f) = s.forces.as_ref().map(|f| f[i]) {
                let _ = write!(out, " {:?} {:?} {:?}", f.x, f.y, f.z);
            }
            out.push('\n');
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_file() {
        let s = parse_xyz("1\n\nH 0 0 0\n").unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].atoms.len(), 1);
        assert_eq!(s[0].forces, None);
        assert_eq!(s[0].id, "frame0");
    }

    #[test]
    fn energy_and_dipole() {
        let text = "2\r\nenergy=-1.25 dipole=\"0.1 0.2 0.3\" pbc=\"F F F\"\r\nO 0 0 0 1 2 3\r\nh 1 0 0 -1 -2 -3\r\n";
        let s = &parse_xyz(text).unwrap()[0];
        assert_eq!(s.energy, Some(-1.25));
        assert_eq!(s.dipole, Some(Vec3::new(0.1, 0.2, 0.3)));
        assert_eq!(s.atoms[1].element, "H");
        assert_eq!(s.forces.as_ref().unwrap()[1], Vec3::new(-1.0, -2.0, -3.0));
        assert_eq!(s.properties["pbc"], "F F F");
    }

    #[test]
    fn plain_comment_is_the_id() {
        let s = parse_xyz("1\n water monomer \nO 0 0 0\n1\nx=1\nH 0 0 0").unwrap();
        assert_eq!(s[0].id, "water monomer");
        assert_eq!(s[1].id, "frame1");
    }

    #[test]
    fn errors_carry_line_numbers() {
        let cases = [
            ("x\n\n", 1),
            ("2\n\nH 0 0 0\n", 4),
            ("1\n\nH 0 0\n", 3),
            ("1\n\nH 0 zero 0\n", 3),
            ("2\n\nH 0 0 0 1 1 1\nH 0 0 0\n", 4),
            ("1\nenergy=\"1\nH 0 0 0\n", 2),
            ("0\n\n", 1),
        ];
        for (text, line) in cases {
            match parse_xyz(text) {
                Err(XyzError::Parse { line: l, .. }) => assert_eq!(l, line, "{text:?}"),
                other => panic!("{text:?}: {other:?}"),
            }
        }
        assert_eq!(parse_xyz("1\n\nXq 0 0 0\n"), Err(XyzError::UnknownElement { line: 3, symbol: "Xq".into() }));
    }

    #[test]
    fn awkward_ids_round_trip() {
        let mut s = parse_xyz("1\n\nH 0 0 0\n").unwrap();
        s[0].id = "a \"quoted\" id=with\\stuff".into();
        assert_eq!(parse_xyz(&write_xyz(&s)).unwrap(), s);
    }
}
