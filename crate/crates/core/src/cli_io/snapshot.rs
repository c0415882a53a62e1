//! Self-describing binary snapshot of a [`State`].
//!
//! ```text
//! magic      8 bytes  "MPESNAP\0"
//! version    u32
//! n_lat      u32
//! n_lon      u32
//! levels     u32
//! n_fields   u32      (4)
//! names      n_fields × (u8 length, UTF-8 bytes)   v_theta, v_phi, T, q
//! encoding   u8 length + "f64le"
//! time       f64
//! count      u64      n_fields · levels · n_lat · n_lon
//! payload    count × f64, field-major, then level, latitude, longitude
//! ```
//! All integers and floats are little-endian.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array3;

use crate::column::VField3D;
use crate::dynamics::State;
use crate::{Error, Result};

pub const MAGIC: [u8; 8] = *b"MPESNAP\0";
pub const VERSION: u32 = 1;
pub const FIELD_NAMES: [&str; 4] = ["v_theta", "v_phi", "T", "q"];
pub const ENCODING: &str = "f64le";

#[derive(Clone, Debug, PartialEq)]
pub struct SnapshotHeader {
    pub version: u32,
    pub n_lat: usize,
    pub n_lon: usize,
    pub levels: usize,
    pub fields: Vec<String>,
    pub encoding: String,
    pub time: f64,
    /// Number of payload elements declared by the header.
    pub count: u64,
}

impl SnapshotHeader {
    pub fn for_state(state: &State) -> Self {
        let (levels, n_lat, n_lon) = state.temp.dim();
        Self {
            version: VERSION,
            n_lat,
            n_lon,
            levels,
            fields: FIELD_NAMES.iter().map(|s| s.to_string()).collect(),
            encoding: ENCODING.into(),
            time: state.time,
            count: (FIELD_NAMES.len() * levels * n_lat * n_lon) as u64,
        }
    }

    fn write_to(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&MAGIC);
        for x in [
            self.version,
            self.n_lat as u32,
            self.n_lon as u32,
            self.levels as u32,
            self.fields.len() as u32,
        ] {
            out.extend_from_slice(&x.to_le_bytes());
        }
        for name in self.fields.iter().chain(std::iter::once(&self.encoding)) {
            out.push(name.len() as u8);
            out.extend_from_slice(name.as_bytes());
        }
        out.extend_from_slice(&self.time.to_le_bytes());
        out.extend_from_slice(&self.count.to_le_bytes());
    }
}

pub fn encode_snapshot(state: &State) -> Vec<u8> {
    let header = SnapshotHeader::for_state(state);
    let mut out = Vec::with_capacity(64 + 8 * header.count as usize);
    header.write_to(&mut out);
    for f in [&state.v.theta, &state.v.phi, &state.temp, &state.q] {
        for x in f.iter() {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
}

pub fn write_snapshot(state: &State, path: &Path) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(&encode_snapshot(state))?;
    f.sync_all()?;
    Ok(())
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Snapshot(format!("file ends inside the {what}")));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn string(&mut self, what: &str) -> Result<String> {
        let n = self.take(1, what)?[0] as usize;
        let b = self.take(n, what)?;
        String::from_utf8(b.to_vec()).map_err(|_| Error::Snapshot(format!("{what} is not UTF-8")))
    }
}

pub fn decode_header(buf: &[u8]) -> Result<(SnapshotHeader, usize)> {
    let mut c = Cursor { buf, pos: 0 };
    if c.take(8, "magic tag")? != MAGIC {
        return Err(Error::Snapshot("bad magic tag".into()));
    }
    let version = c.u32("header")?;
    if version != VERSION {
        return Err(Error::Snapshot(format!(
            "unsupported version {version} (expected {VERSION})"
        )));
    }
    let n_lat = c.u32("header")? as usize;
    let n_lon = c.u32("header")? as usize;
    let levels = c.u32("header")? as usize;
    let n_fields = c.u32("header")? as usize;
    let fields = (0..n_fields)
        .map(|_| c.string("field names"))
        .collect::<Result<Vec<_>>>()?;
    if fields != FIELD_NAMES {
        return Err(Error::Snapshot(format!("unexpected field list {fields:?}")));
    }
    let encoding = c.string("encoding tag")?;
    if encoding != ENCODING {
        return Err(Error::Snapshot(format!("unsupported encoding {encoding:?}")));
    }
    let time = c.f64("header")?;
    let count = c.u64("header")?;
    let expect = (n_fields * levels * n_lat * n_lon) as u64;
    if count != expect {
        return Err(Error::Snapshot(format!(
            "header declares {count} elements, dimensions imply {expect}"
        )));
    }
    Ok((
        SnapshotHeader {
            version,
            n_lat,
            n_lon,
            levels,
            fields,
            encoding,
            time,
            count,
        },
        c.pos,
    ))
}

pub fn decode_snapshot(buf: &[u8]) -> Result<(SnapshotHeader, State)> {
    let (h, start) = decode_header(buf)?;
    let payload = &buf[start..];
    let need = 8 * h.count as usize;
    if payload.len() != need {
        return Err(Error::Snapshot(format!(
            "payload holds {} bytes, header declares {need}",
            payload.len()
        )));
    }
    let n = h.levels * h.n_lat * h.n_lon;
    let mut vals = payload
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().unwrap()));
    let mut next = || {
        let v: Vec<f64> = vals.by_ref().take(n).collect();
        Array3::from_shape_vec((h.levels, h.n_lat, h.n_lon), v).expect("length checked above")
    };
    let (vt, vp, t, q) = (next(), next(), next(), next());
    let state = State {
        v: VField3D { theta: vt, phi: vp },
        temp: t,
        q,
        time: h.time,
    };
    Ok((h, state))
}

pub fn read_snapshot_with_header(path: &Path) -> Result<(SnapshotHeader, State)> {
    let mut buf = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut buf)?;
    decode_snapshot(&buf)
}

pub fn read_snapshot(path: &Path) -> Result<State> {
    Ok(read_snapshot_with_header(path)?.1)
}
