use std::io::{BufRead, Write};

use crate::basemesh::BaseMesh;
use crate::error::{Error, Result};
use crate::geom::{v3, V3};

/// Read a polygonal OBJ. Only `v` and `f` records are interpreted; face
/// corners may carry `/vt/vn` suffixes, which are ignored.
pub fn read_obj(reader: impl std::io::Read, path: &str) -> Result<BaseMesh> {
    let mut positions: Vec<V3> = Vec::new();
    let mut faces: Vec<Vec<u32>> = Vec::new();
    let buf = std::io::BufReader::new(reader);
    for (lineno, line) in buf.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        let mut it = line.split_whitespace();
        match it.next() {
            Some("v") => {
                let mut coord = |what: &str| -> Result<f64> {
                    it.next()
                        .ok_or_else(|| parse_err(path, lineno, &format!("missing {what}")))?
                        .parse::<f64>()
                        .map_err(|e| parse_err(path, lineno, &e.to_string()))
                };
                let x = coord("x")?;
                let y = coord("y")?;
                let z = coord("z")?;
                positions.push(v3(x, y, z));
            }
            Some("f") => {
                let mut corners = Vec::new();
                for tok in it {
                    let first = tok.split('/').next().unwrap_or("");
                    let idx: i64 = first
                        .parse()
                        .map_err(|_| parse_err(path, lineno, &format!("bad face index {tok:?}")))?;
                    let resolved = if idx > 0 {
                        idx - 1
                    } else if idx < 0 {
                        positions.len() as i64 + idx
                    } else {
                        return Err(parse_err(path, lineno, "face index 0"));
                    };
                    if resolved < 0 || resolved as usize >= positions.len() {
                        return Err(parse_err(path, lineno, &format!("face index {idx} out of range")));
                    }
                    corners.push(resolved as u32);
                }
                if corners.len() < 3 {
                    return Err(parse_err(path, lineno, "face with fewer than 3 corners"));
                }
                faces.push(corners);
            }
            _ => {}
        }
    }
    let mesh = BaseMesh::new(positions, &faces);
    mesh.validate()?;
    Ok(mesh)
}

pub fn load_obj(path: &std::path::Path) -> Result<BaseMesh> {
    read_obj(std::fs::File::open(path)?, &path.display().to_string())
}

fn parse_err(path: &str, lineno: usize, msg: &str) -> Error {
    Error::Parse {
        path: path.to_string(),
        line: lineno + 1,
        msg: msg.to_string(),
    }
}

/// Write a polygonal mesh. Output is deterministic: fixed float formatting,
/// vertices then faces in index order.
pub fn write_obj(mut w: impl Write, mesh: &BaseMesh) -> Result<()> {
    for p in &mesh.positions {
        writeln!(w, "v {} {} {}", fmt(p.x), fmt(p.y), fmt(p.z))?;
    }
    for f in 0..mesh.n_faces() as u32 {
        let mut line = String::from("f");
        for &v in mesh.face(f) {
            line.push(' ');
            line.push_str(&(v + 1).to_string());
        }
        writeln!(w, "{line}")?;
    }
    Ok(())
}

/// Fixed-width float formatting used by all emitted artifacts.
pub fn fmt(x: f64) -> String {
    let mut s = format!("{x:.9}");
    if s == "-0.000000000" {
        s = "0.000000000".to_string();
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let src = "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n";
        let mesh = read_obj(src.as_bytes(), "test.obj").unwrap();
        assert_eq!(mesh.n_vertices(), 4);
        assert_eq!(mesh.n_faces(), 1);
        let mut out = Vec::new();
        write_obj(&mut out, &mesh).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.contains("f 1 2 3 4"));
        let again = read_obj(text.as_bytes(), "round.obj").unwrap();
        assert_eq!(again.n_faces(), 1);
    }

    #[test]
    fn slash_and_negative_indices() {
        let src = "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1/1/1 2/2/2 -1/3/3\n";
        let mesh = read_obj(src.as_bytes(), "test.obj").unwrap();
        assert_eq!(mesh.face(0), &[0, 1, 2]);
    }

    #[test]
    fn bad_index_is_reported_with_line() {
        let src = "v 0 0 0\nf 1 2 9\n";
        let err = read_obj(src.as_bytes(), "bad.obj").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("bad.obj:2"), "{msg}");
    }
}
