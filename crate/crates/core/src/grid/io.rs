//! The `.cvg` grid container.
//!
//! ```text
//! CVG
//! version 1
//! endianness little
//! dims 32 32 32
//! spacing 1 1 1
//! origin -15.5 -15.5 -15.5
//! kind sdf
//! scale 1
//! offset 0
//! payload_offset 0000000143
//! end
//! <nx*ny*nz little-endian f32, x fastest>
//! ```
//!
//! Floating-point header fields use Rust's shortest round-trip formatting, so
//! a header survives a save/load cycle bit-exactly.

use std::io::{Read, Write};
use std::path::Path;

use super::{Geometry, GridHeader, Normalization, ValueKind, VoxelGrid};
use crate::error::{Error, Result};

pub const CVG_MAGIC: &str = "CVG";
pub const CVG_VERSION: u32 = 1;
const OFFSET_DIGITS: usize = 10;

fn header_text(header: &GridHeader, payload_offset: usize) -> String {
    let g = &header.geometry;
    format!(
        "{CVG_MAGIC}\nversion {}\nendianness little\ndims {} {} {}\nspacing {} {} {}\norigin {} {} {}\nkind {}\nscale {}\noffset {}\npayload_offset {:0width$}\nend\n",
        header.version,
        g.dims[0],
        g.dims[1],
        g.dims[2],
        g.spacing[0],
        g.spacing[1],
        g.spacing[2],
        g.origin[0],
        g.origin[1],
        g.origin[2],
        header.kind.as_str(),
        header.normalization.scale,
        header.normalization.offset,
        payload_offset,
        width = OFFSET_DIGITS,
    )
}

/// Serialize a grid into `out`.
pub fn write_grid(grid: &VoxelGrid, mut out: impl Write) -> std::io::Result<()> {
    let header = grid.header();
    // The offset field has fixed width, so the header length does not depend
    // on the value written into it.
    let len = header_text(&header, 0).len();
    out.write_all(header_text(&header, len).as_bytes())?;
    let mut payload = Vec::with_capacity(grid.len() * 4);
    for v in grid.data() {
        payload.extend_from_slice(&v.to_le_bytes());
    }
    out.write_all(&payload)
}

pub fn save_grid(grid: &VoxelGrid, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    write_grid(grid, &mut w).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_grid(path: impl AsRef<Path>) -> Result<VoxelGrid> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    read_grid(&bytes)
}

fn parse_triple<T: std::str::FromStr>(key: &str, rest: &[&str]) -> Result<[T; 3]> {
    if rest.len() != 3 {
        return Err(Error::format("cvg header", format!("{key} needs 3 values")));
    }
    let p = |s: &str| {
        s.parse::<T>()
            .map_err(|_| Error::format("cvg header", format!("bad {key} value {s:?}")))
    };
    Ok([p(rest[0])?, p(rest[1])?, p(rest[2])?])
}

fn parse_one<T: std::str::FromStr>(key: &str, rest: &[&str]) -> Result<T> {
    match rest {
        [v] => v
            .parse::<T>()
            .map_err(|_| Error::format("cvg header", format!("bad {key} value {v:?}"))),
        _ => Err(Error::format("cvg header", format!("{key} needs 1 value"))),
    }
}

/// Parse a complete `.cvg` byte buffer.
pub fn read_grid(bytes: &[u8]) -> Result<VoxelGrid> {
    let mut pos = 0usize;
    let mut next_line = || -> Result<&str> {
        let end = bytes[pos..]
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::format("cvg header", "unterminated header"))?;
        let line = std::str::from_utf8(&bytes[pos..pos + end])
            .map_err(|_| Error::format("cvg header", "header is not utf-8"))?;
        pos += end + 1;
        Ok(line)
    };

    if next_line()? != CVG_MAGIC {
        return Err(Error::format("cvg header", "missing CVG magic"));
    }

    let mut version = None;
    let mut dims = None;
    let mut spacing = None;
    let mut origin = None;
    let mut kind = None;
    let mut scale = 1.0f64;
    let mut offset = 0.0f64;
    let mut payload_offset = None;
    loop {
        let line = next_line()?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        let Some((&key, rest)) = fields.split_first() else {
            continue;
        };
        match key {
            "end" => break,
            "version" => {
                let v: u32 = parse_one(key, rest)?;
                if v != CVG_VERSION {
                    return Err(Error::VersionMismatch {
                        found: v,
                        expected: CVG_VERSION,
                    });
                }
                version = Some(v);
            }
            "endianness" => {
                if rest != ["little"] {
                    return Err(Error::format(
                        "cvg header",
                        "only little-endian payloads are supported",
                    ));
                }
            }
            "dims" => dims = Some(parse_triple::<usize>(key, rest)?),
            "spacing" => spacing = Some(parse_triple::<f64>(key, rest)?),
            "origin" => origin = Some(parse_triple::<f64>(key, rest)?),
            "kind" => {
                let s: String = parse_one(key, rest)?;
                kind =
                    Some(ValueKind::parse(&s).ok_or_else(|| {
                        Error::format("cvg header", format!("unknown kind {s:?}"))
                    })?);
            }
            "scale" => scale = parse_one(key, rest)?,
            "offset" => offset = parse_one(key, rest)?,
            "payload_offset" => payload_offset = Some(parse_one::<usize>(key, rest)?),
            other => {
                return Err(Error::format(
                    "cvg header",
                    format!("unknown field {other:?}"),
                ));
            }
        }
    }
    let missing = |f: &str| Error::format("cvg header", format!("missing {f}"));
    version.ok_or_else(|| missing("version"))?;
    let geometry = Geometry::new(
        dims.ok_or_else(|| missing("dims"))?,
        spacing.ok_or_else(|| missing("spacing"))?,
        origin.ok_or_else(|| missing("origin"))?,
    )?;
    let kind = kind.ok_or_else(|| missing("kind"))?;
    let payload_offset = payload_offset.ok_or_else(|| missing("payload_offset"))?;
    if payload_offset < pos || payload_offset > bytes.len() {
        return Err(Error::format(
            "cvg header",
            format!("payload_offset {payload_offset} outside file"),
        ));
    }

    let payload = &bytes[payload_offset..];
    let expected = geometry.len() * 4;
    if payload.len() < expected {
        return Err(Error::TruncatedPayload {
            expected,
            found: payload.len(),
        });
    }
    if payload.len() > expected {
        return Err(Error::PayloadMismatch {
            expected,
            found: payload.len(),
        });
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok(VoxelGrid::new(geometry, kind, data)?.with_normalization(Normalization { scale, offset }))
}
