//! MRtrix `.tck` streamline files.
//!
//! Layout: an ASCII header starting with `mrtrix tracks`, one `key: value`
//! pair per line, terminated by `END`. The `file: . <offset>` entry points at
//! the binary payload: little-endian float32 `(x, y, z)` triplets where a NaN
//! triplet closes the current track and an Inf triplet closes the stream.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::geometry::{Point3, Streamline};

const MAGIC: &str = "mrtrix tracks";

#[derive(Debug, Error, PartialEq)]
pub enum TckError {
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("unsupported datatype `{0}` (only Float32LE is supported)")]
    UnsupportedDatatype(String),
    #[error("stream truncated at byte {offset}: {reason}")]
    TruncatedStream { offset: usize, reason: &'static str },
    #[error("non-finite coordinate in track {track} outside a delimiter triplet")]
    NonFiniteCoordinate { track: usize },
    #[error("header declares {declared} tracks but the stream holds {found}")]
    CountMismatch { declared: usize, found: usize },
}

/// Parsed header fields in file order-independent form.
#[derive(Debug, Clone, Default)]
pub struct TckHeader {
    pub fields: BTreeMap<String, String>,
    pub data_offset: usize,
    pub declared_count: Option<usize>,
}

pub fn parse_header(bytes: &[u8]) -> Result<TckHeader, TckError> {
    let mut lines = HeaderLines { bytes, pos: 0 };
    match lines.next() {
        Some(first) if first.trim_end() == MAGIC => {}
        _ => return Err(TckError::MalformedHeader("missing `mrtrix tracks` magic line".into())),
    }

    let mut fields = BTreeMap::new();
    let mut saw_end = false;
    for line in lines.by_ref() {
        let line = line.trim_end();
        if line == "END" {
            saw_end = true;
            break;
        }
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once(':')
            .ok_or_else(|| TckError::MalformedHeader(format!("line without `key: value` form: {line:?}")))?;
        fields.insert(key.trim().to_string(), value.trim().to_string());
    }
    if !saw_end {
        return Err(TckError::MalformedHeader("missing END line".into()));
    }

    let datatype = fields
        .get("datatype")
        .ok_or_else(|| TckError::MalformedHeader("missing datatype".into()))?;
    if datatype != "Float32LE" {
        return Err(TckError::UnsupportedDatatype(datatype.clone()));
    }

    let file = fields
        .get("file")
        .ok_or_else(|| TckError::MalformedHeader("missing file entry".into()))?;
    let data_offset = match file.split_whitespace().collect::<Vec<_>>().as_slice() {
        [".", offset] => offset
            .parse::<usize>()
            .map_err(|_| TckError::MalformedHeader(format!("bad file offset {offset:?}")))?,
        _ => return Err(TckError::MalformedHeader(format!("unsupported file entry {file:?}"))),
    };
    if data_offset < lines.pos {
        return Err(TckError::MalformedHeader(format!(
            "data offset {data_offset} points inside the header ({} bytes)",
            lines.pos
        )));
    }

    let declared_count = match fields.get("count") {
        Some(c) => Some(
            c.parse::<usize>()
                .map_err(|_| TckError::MalformedHeader(format!("bad count {c:?}")))?,
        ),
        None => None,
    };

    Ok(TckHeader { fields, data_offset, declared_count })
}

struct HeaderLines<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Iterator for HeaderLines<'a> {
    type Item = String;

    fn next(&mut self) -> Option<String> {
        if self.pos >= self.bytes.len() {
            return None;
        }
        let rest = &self.bytes[self.pos..];
        let end = rest.iter().position(|&b| b == b'\n')?;
        self.pos += end + 1;
        Some(String::from_utf8_lossy(&rest[..end]).into_owned())
    }
}

/// Parse a complete `.tck` byte stream.
///
/// Tracks with fewer than two points are dropped; they still count towards the
/// header's declared `count`.
pub fn parse_tck(bytes: &[u8]) -> Result<Vec<Streamline>, TckError> {
    let header = parse_header(bytes)?;
    if header.data_offset > bytes.len() {
        return Err(TckError::TruncatedStream {
            offset: bytes.len(),
            reason: "data offset beyond end of file",
        });
    }

    let payload = &bytes[header.data_offset..];
    let mut tracks = Vec::new();
    let mut delimited = 0usize;
    let mut current: Vec<Point3> = Vec::new();
    let mut terminated = false;

    for (i, chunk) in payload.chunks(12).enumerate() {
        let offset = header.data_offset + i * 12;
        if chunk.len() < 12 {
            return Err(TckError::TruncatedStream { offset, reason: "partial coordinate triplet" });
        }
        let x = f32::from_le_bytes(chunk[0..4].try_into().unwrap());
        let y = f32::from_le_bytes(chunk[4..8].try_into().unwrap());
        let z = f32::from_le_bytes(chunk[8..12].try_into().unwrap());

        if x.is_nan() && y.is_nan() && z.is_nan() {
            delimited += 1;
            let points = std::mem::take(&mut current);
            if points.len() >= 2 {
                tracks.push(Streamline::new_unchecked(points));
            }
            continue;
        }
        if x.is_infinite() && y.is_infinite() && z.is_infinite() {
            terminated = true;
            break;
        }
        if !(x.is_finite() && y.is_finite() && z.is_finite()) {
            return Err(TckError::NonFiniteCoordinate { track: delimited });
        }
        current.push([x as f64, y as f64, z as f64]);
    }

    if !current.is_empty() {
        return Err(TckError::TruncatedStream {
            offset: bytes.len(),
            reason: "end of stream inside a track",
        });
    }
    if !terminated && header.declared_count.is_none() {
        // Unterminated streams are accepted only when the header lets us
        // confirm nothing is missing.
        return Err(TckError::TruncatedStream {
            offset: bytes.len(),
            reason: "missing Inf terminator",
        });
    }
    if let Some(declared) = header.declared_count {
        if declared != delimited {
            return Err(TckError::CountMismatch { declared, found: delimited });
        }
    }
    Ok(tracks)
}

/// Serialize streamlines as a `.tck` byte stream (coordinates rounded to f32).
pub fn write_tck(streamlines: &[Streamline]) -> Vec<u8> {
    let head = format!("{MAGIC}\ndatatype: Float32LE\ncount: {}\n", streamlines.len());
    // The offset's own digit count feeds back into the header length.
    let mut offset = head.len() + "file: . \nEND\n".len() + 1;
    loop {
        let total = head.len() + format!("file: . {offset}\nEND\n").len();
        if total == offset {
            break;
        }
        offset = total;
    }
    let mut out = format!("{head}file: . {offset}\nEND\n").into_bytes();
    debug_assert_eq!(out.len(), offset);

    let mut push = |x: f32, y: f32, z: f32| {
        out.extend_from_slice(&x.to_le_bytes());
        out.extend_from_slice(&y.to_le_bytes());
        out.extend_from_slice(&z.to_le_bytes());
    };
    for s in streamlines {
        for p in s.points() {
            push(p[0] as f32, p[1] as f32, p[2] as f32);
        }
        push(f32::NAN, f32::NAN, f32::NAN);
    }
    push(f32::INFINITY, f32::INFINITY, f32::INFINITY);
    out
}
