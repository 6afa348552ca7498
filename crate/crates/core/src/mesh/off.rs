//! ASCII OFF mesh files (triangles only).

use std::io::{Read, Write};
use std::path::Path;

use glam::DVec3;

use super::TriangleMesh;
use crate::error::{Error, Result};

pub fn write_off(mesh: &TriangleMesh, mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "OFF")?;
    writeln!(out, "{} {} 0", mesh.vertices().len(), mesh.faces().len())?;
    for v in mesh.vertices() {
        writeln!(out, "{} {} {}", v.x, v.y, v.z)?;
    }
    for f in mesh.faces() {
        writeln!(out, "3 {} {} {}", f[0], f[1], f[2])?;
    }
    Ok(())
}

pub fn save_off(mesh: &TriangleMesh, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    write_off(mesh, &mut w).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_off(path: impl AsRef<Path>) -> Result<TriangleMesh> {
    let path = path.as_ref();
    let mut text = String::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_string(&mut text))
        .map_err(|e| Error::io(path, e))?;
    read_off(&text)
}

pub fn read_off(text: &str) -> Result<TriangleMesh> {
    let bad = |d: String| Error::format("OFF mesh", d);
    let mut tokens = text
        .lines()
        .map(|l| l.split('#').next().unwrap_or(""))
        .flat_map(str::split_whitespace);
    match tokens.next() {
        Some("OFF") => {}
        other => return Err(bad(format!("expected OFF magic, found {other:?}"))),
    }
    let mut next_num = |what: &str| -> Result<&str> {
        tokens
            .next()
            .ok_or_else(|| bad(format!("unexpected end of file reading {what}")))
    };
    let parse_usize = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| bad(format!("bad integer {s:?}")))
    };
    let nv = parse_usize(next_num("vertex count")?)?;
    let nf = parse_usize(next_num("face count")?)?;
    let _ne = parse_usize(next_num("edge count")?)?;
    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let mut c = [0.0; 3];
        for x in &mut c {
            let s = next_num("vertex")?;
            *x = s
                .parse()
                .map_err(|_| bad(format!("bad coordinate {s:?}")))?;
        }
        vertices.push(DVec3::from_array(c));
    }
    let mut faces = Vec::with_capacity(nf);
    for _ in 0..nf {
        let k = parse_usize(next_num("face")?)?;
        if k != 3 {
            return Err(bad(format!(
                "only triangles are supported, found a {k}-gon"
            )));
        }
        let mut f = [0u32; 3];
        for x in &mut f {
            let s = next_num("face index")?;
            *x = s.parse().map_err(|_| bad(format!("bad index {s:?}")))?;
        }
        faces.push(f);
    }
    TriangleMesh::new(vertices, faces)
}
