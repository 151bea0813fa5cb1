//! ASCII mesh and point cloud formats: OBJ, OFF, PLY and `x y z` text.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{SurfaceShape, Vec3};
use crate::error::{Error, Result};

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn parse_f64(path: &Path, line: usize, tok: Option<&str>) -> Result<f64> {
    let tok = tok.ok_or_else(|| parse_err(path, line, "missing coordinate"))?;
    tok.parse()
        .map_err(|_| parse_err(path, line, format!("bad number '{tok}'")))
}

fn shape_id(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "shape".into())
}

/// Loads a shape, choosing the format from the file extension.
pub fn load_shape(path: &Path) -> Result<SurfaceShape> {
    let text = fs::read_to_string(path)?;
    let ext = path
        .extension()
        .map(|e| e.to_string_lossy().to_ascii_lowercase())
        .unwrap_or_default();
    match ext.as_str() {
        "obj" => parse_obj(path, &text),
        "off" => parse_off(path, &text),
        "ply" => parse_ply(path, &text),
        "xyz" | "txt" => parse_xyz(path, &text),
        other => Err(Error::Format(format!("unsupported shape extension '{other}'"))),
    }
}

/// Fan-triangulates polygons; supports `v/vt/vn` and negative indices.
pub fn parse_obj(path: &Path, text: &str) -> Result<SurfaceShape> {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let ln = ln + 1;
        let mut toks = line.split_whitespace();
        match toks.next() {
            Some("v") => {
                let x = parse_f64(path, ln, toks.next())?;
                let y = parse_f64(path, ln, toks.next())?;
                let z = parse_f64(path, ln, toks.next())?;
                vertices.push(Vec3::new(x, y, z));
            }
            Some("f") => {
                let mut poly = Vec::new();
                for t in toks {
                    let head = t.split('/').next().unwrap_or("");
                    let idx: i64 = head
                        .parse()
                        .map_err(|_| parse_err(path, ln, format!("bad face index '{t}'")))?;
                    let resolved = if idx > 0 {
                        idx - 1
                    } else if idx < 0 {
                        vertices.len() as i64 + idx
                    } else {
                        return Err(parse_err(path, ln, "face index 0 is invalid"));
                    };
                    if resolved < 0 {
                        return Err(parse_err(path, ln, format!("face index {idx} out of range")));
                    }
                    poly.push(resolved as usize);
                }
                if poly.len() < 3 {
                    return Err(parse_err(path, ln, "face needs at least 3 vertices"));
                }
                for i in 1..poly.len() - 1 {
                    faces.push([poly[0], poly[i], poly[i + 1]]);
                }
            }
            _ => {}
        }
    }
    finish(path, vertices, faces)
}

pub fn parse_off(path: &Path, text: &str) -> Result<SurfaceShape> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty());
    let (ln, header) = lines.next().ok_or_else(|| parse_err(path, 1, "empty file"))?;
    let mut counts_line = None;
    if let Some(rest) = header.strip_prefix("OFF") {
        if !rest.trim().is_empty() {
            counts_line = Some((ln, rest.trim()));
        }
    } else {
        return Err(parse_err(path, ln, "missing OFF header"));
    }
    let (ln, counts) = match counts_line {
        Some(c) => c,
        None => lines.next().ok_or_else(|| parse_err(path, ln, "missing counts"))?,
    };
    let nums: Vec<usize> = counts
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| parse_err(path, ln, "bad count")))
        .collect::<Result<_>>()?;
    if nums.len() < 2 {
        return Err(parse_err(path, ln, "expected vertex and face counts"));
    }
    let (nv, nf) = (nums[0], nums[1]);
    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (ln, l) = lines.next().ok_or_else(|| parse_err(path, ln, "truncated vertex list"))?;
        let mut t = l.split_whitespace();
        let x = parse_f64(path, ln, t.next())?;
        let y = parse_f64(path, ln, t.next())?;
        let z = parse_f64(path, ln, t.next())?;
        vertices.push(Vec3::new(x, y, z));
    }
    let mut faces = Vec::new();
    for _ in 0..nf {
        let (ln, l) = lines.next().ok_or_else(|| parse_err(path, ln, "truncated face list"))?;
        let idx: Vec<usize> = l
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| parse_err(path, ln, format!("bad index '{t}'"))))
            .collect::<Result<_>>()?;
        let n = *idx.first().ok_or_else(|| parse_err(path, ln, "empty face"))?;
        if n < 3 || idx.len() < n + 1 {
            return Err(parse_err(path, ln, "malformed face"));
        }
        let poly = &idx[1..=n];
        for i in 1..n - 1 {
            faces.push([poly[0], poly[i], poly[i + 1]]);
        }
    }
    finish(path, vertices, faces)
}

/// ASCII PLY with `x y z` vertex properties and an optional face list.
pub fn parse_ply(path: &Path, text: &str) -> Result<SurfaceShape> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    match lines.next() {
        Some((_, "ply")) => {}
        _ => return Err(parse_err(path, 1, "missing ply magic")),
    }
    let mut nv = 0usize;
    let mut nf = 0usize;
    let mut vertex_props: Vec<String> = Vec::new();
    let mut current = "";
    loop {
        let (ln, l) = lines.next().ok_or_else(|| parse_err(path, 0, "unterminated header"))?;
        let toks: Vec<&str> = l.split_whitespace().collect();
        match toks.as_slice() {
            ["format", fmt, ..] if *fmt != "ascii" => {
                return Err(parse_err(path, ln, format!("only ascii PLY is supported, got {fmt}")))
            }
            ["element", "vertex", n] => {
                nv = n.parse().map_err(|_| parse_err(path, ln, "bad vertex count"))?;
                current = "vertex";
            }
            ["element", "face", n] => {
                nf = n.parse().map_err(|_| parse_err(path, ln, "bad face count"))?;
                current = "face";
            }
            ["element", ..] => current = "other",
            ["property", .., name] if current == "vertex" => vertex_props.push(name.to_string()),
            ["end_header"] => break,
            _ => {}
        }
    }
    let col = |name: &str| vertex_props.iter().position(|p| p == name);
    let (cx, cy, cz) = match (col("x"), col("y"), col("z")) {
        (Some(x), Some(y), Some(z)) => (x, y, z),
        _ => return Err(parse_err(path, 0, "vertex element lacks x/y/z")),
    };
    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (ln, l) = lines.next().ok_or_else(|| parse_err(path, 0, "truncated vertex list"))?;
        let t: Vec<&str> = l.split_whitespace().collect();
        vertices.push(Vec3::new(
            parse_f64(path, ln, t.get(cx).copied())?,
            parse_f64(path, ln, t.get(cy).copied())?,
            parse_f64(path, ln, t.get(cz).copied())?,
        ));
    }
    let mut faces = Vec::new();
    for _ in 0..nf {
        let (ln, l) = lines.next().ok_or_else(|| parse_err(path, 0, "truncated face list"))?;
        let idx: Vec<usize> = l
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| parse_err(path, ln, "bad face index")))
            .collect::<Result<_>>()?;
        let n = *idx.first().ok_or_else(|| parse_err(path, ln, "empty face"))?;
        if n < 3 || idx.len() < n + 1 {
            return Err(parse_err(path, ln, "malformed face"));
        }
        for i in 2..n {
            faces.push([idx[1], idx[i], idx[i + 1]]);
        }
    }
    finish(path, vertices, faces)
}

/// Whitespace-separated `x y z` per line; blank lines and `#` comments skipped.
pub fn parse_xyz(path: &Path, text: &str) -> Result<SurfaceShape> {
    let mut vertices = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut t = line.split_whitespace();
        let x = parse_f64(path, ln + 1, t.next())?;
        let y = parse_f64(path, ln + 1, t.next())?;
        let z = parse_f64(path, ln + 1, t.next())?;
        vertices.push(Vec3::new(x, y, z));
    }
    Ok(SurfaceShape::cloud(shape_id(path), vertices))
}

fn finish(path: &Path, vertices: Vec<Vec3>, faces: Vec<[usize; 3]>) -> Result<SurfaceShape> {
    if faces.is_empty() {
        Ok(SurfaceShape::cloud(shape_id(path), vertices))
    } else {
        SurfaceShape::mesh_lossy(shape_id(path), vertices, faces)
    }
}

pub fn obj_string(shape: &SurfaceShape) -> String {
    let mut s = String::new();
    writeln!(s, "# {}", shape.id).unwrap();
    for v in &shape.vertices {
        writeln!(s, "v {:.9} {:.9} {:.9}", v.x, v.y, v.z).unwrap();
    }
    for f in shape.faces() {
        writeln!(s, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1).unwrap();
    }
    s
}

pub fn ply_string(points: &[Vec3]) -> String {
    let mut s = String::new();
    s.push_str("ply\nformat ascii 1.0\n");
    writeln!(s, "element vertex {}", points.len()).unwrap();
    s.push_str("property float x\nproperty float y\nproperty float z\nend_header\n");
    for p in points {
        writeln!(s, "{:.7} {:.7} {:.7}", p.x, p.y, p.z).unwrap();
    }
    s
}

pub fn xyz_string(points: &[Vec3]) -> String {
    let mut s = String::new();
    for p in points {
        writeln!(s, "{:.7} {:.7} {:.7}", p.x, p.y, p.z).unwrap();
    }
    s
}

/// Reads a point cloud from PLY or xyz text (faces, if any, are ignored).
pub fn load_points(path: &Path) -> Result<Vec<Vec3>> {
    Ok(load_shape(path)?.vertices)
}
