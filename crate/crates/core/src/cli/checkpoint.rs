//! VTXF checkpoints: a little-endian header followed by tagged sections.
//!
//! ```text
//! "VTXF" u32 version u32 complex_dim u32 grid[2d] u32 rank u32 n_chern i64 chern[n]
//! LENS u64 len  f64 lengths[2d]
//! LINK u64 len  u8 role, then per axis the Hermitian potential, (re, im) per entry
//! SECT u64 len  u32 count, then per section u32 rank u8 degree (re, im) values
//! METR u64 len  u8 present [f64 log_scale[sites] u8 has_matrix (re, im) entries]
//! ```
//!
//! Links are stored through their Hermitian logarithm, the potential.

use crate::bundle_fields::{BundleSpec, FormDegree, GaugeField, MatField, MetricField, Role, Section};
use crate::error::{Result, VortexError};
use crate::geometry::{LatticeTorus, C64};

pub const MAGIC: &[u8; 4] = b"VTXF";
pub const VERSION: u32 = 1;

/// Everything a run needs to resume: the connection, its sections and
/// optionally a metric.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub gauge: GaugeField,
    pub sections: Vec<Section>,
    pub metric: Option<MetricField>,
}

fn corrupt(section: &str, reason: impl Into<String>) -> VortexError {
    VortexError::CorruptCheckpoint { section: section.into(), reason: reason.into() }
}

fn role_code(r: Role) -> u8 {
    match r {
        Role::Primary => 0,
        Role::Auxiliary => 1,
        Role::HalfCanonical => 2,
        Role::Tensor => 3,
    }
}

fn role_from(c: u8) -> Option<Role> {
    Some(match c {
        0 => Role::Primary,
        1 => Role::Auxiliary,
        2 => Role::HalfCanonical,
        3 => Role::Tensor,
        _ => return None,
    })
}

fn put_c(out: &mut Vec<u8>, v: &[C64]) {
    for z in v {
        out.extend_from_slice(&z.re.to_le_bytes());
        out.extend_from_slice(&z.im.to_le_bytes());
    }
}

fn chunk(out: &mut Vec<u8>, tag: &[u8; 4], body: Vec<u8>) {
    out.extend_from_slice(tag);
    out.extend_from_slice(&(body.len() as u64).to_le_bytes());
    out.extend_from_slice(&body);
}

pub fn encode(cp: &Checkpoint) -> Vec<u8> {
    let g = &cp.gauge;
    let t = &g.torus;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(t.complex_dim() as u32).to_le_bytes());
    for &n in t.grid() {
        out.extend_from_slice(&(n as u32).to_le_bytes());
    }
    out.extend_from_slice(&(g.spec.rank as u32).to_le_bytes());
    out.extend_from_slice(&(g.spec.chern.len() as u32).to_le_bytes());
    for &c in &g.spec.chern {
        out.extend_from_slice(&c.to_le_bytes());
    }

    let mut lens = Vec::new();
    for &l in t.lengths() {
        lens.extend_from_slice(&l.to_le_bytes());
    }
    chunk(&mut out, b"LENS", lens);

    let mut link = vec![role_code(g.spec.role)];
    for p in &g.potential {
        put_c(&mut link, &p.data);
    }
    chunk(&mut out, b"LINK", link);

    let mut sect = (cp.sections.len() as u32).to_le_bytes().to_vec();
    for s in &cp.sections {
        sect.extend_from_slice(&(s.rank as u32).to_le_bytes());
        sect.push(match s.degree {
            FormDegree::Zero => 0,
            FormDegree::ZeroTwo => 1,
        });
        put_c(&mut sect, &s.values);
    }
    chunk(&mut out, b"SECT", sect);

    let mut metr = Vec::new();
    match &cp.metric {
        None => metr.push(0),
        Some(h) => {
            metr.push(1);
            metr.extend_from_slice(&(h.rank as u32).to_le_bytes());
            for v in &h.log_scale {
                metr.extend_from_slice(&v.to_le_bytes());
            }
            match &h.matrix {
                None => metr.push(0),
                Some(m) => {
                    metr.push(1);
                    put_c(&mut metr, &m.data);
                }
            }
        }
    }
    chunk(&mut out, b"METR", metr);
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    section: &'static str,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(corrupt(self.section, format!("truncated at byte {}", self.pos)));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn i64(&mut self) -> Result<i64> {
        Ok(i64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn complex(&mut self, n: usize) -> Result<Vec<C64>> {
        let mut v = Vec::with_capacity(n);
        for _ in 0..n {
            let re = self.f64()?;
            let im = self.f64()?;
            if !(re.is_finite() && im.is_finite()) {
                return Err(corrupt(self.section, "non-finite value"));
            }
            v.push(C64::new(re, im));
        }
        Ok(v)
    }
    /// Open the next chunk, which must carry `tag`, and return its reader.
    fn chunk(&mut self, tag: &'static str) -> Result<Reader<'a>> {
        self.section = tag;
        let got = self.take(4)?;
        if got != tag.as_bytes() {
            return Err(corrupt(tag, format!("expected section {tag}, found {:?}", String::from_utf8_lossy(got))));
        }
        let len = self.u64()? as usize;
        let body = self.take(len)?;
        Ok(Reader { buf: body, pos: 0, section: tag })
    }
    fn finish(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(corrupt(self.section, format!("{} trailing bytes", self.buf.len() - self.pos)));
        }
        Ok(())
    }
}

pub fn decode(bytes: &[u8]) -> Result<Checkpoint> {
    let mut r = Reader { buf: bytes, pos: 0, section: "header" };
    if r.take(4)? != MAGIC {
        return Err(corrupt("header", "bad magic"));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(corrupt("header", format!("unsupported version {version}")));
    }
    let dim = r.u32()? as usize;
    if dim != 1 && dim != 2 {
        return Err(corrupt("header", format!("complex dimension {dim}")));
    }
    let grid: Vec<usize> = (0..2 * dim).map(|_| r.u32().map(|n| n as usize)).collect::<Result<_>>()?;
    let rank = r.u32()? as usize;
    let nc = r.u32()? as usize;
    if nc != dim {
        return Err(corrupt("header", format!("{nc} Chern numbers for dimension {dim}")));
    }
    let chern: Vec<i64> = (0..nc).map(|_| r.i64()).collect::<Result<_>>()?;

    let mut lens = r.chunk("LENS")?;
    let lengths: Vec<f64> = (0..2 * dim).map(|_| lens.f64()).collect::<Result<_>>()?;
    lens.finish()?;
    let torus = LatticeTorus::new(dim, &grid, &lengths).map_err(|e| corrupt("LENS", e.to_string()))?;
    let sites = torus.sites();

    let mut link = r.chunk("LINK")?;
    let role = role_from(link.u8()?).ok_or_else(|| corrupt("LINK", "unknown bundle role"))?;
    let spec = BundleSpec::new(rank, chern, role).map_err(|e| corrupt("header", e.to_string()))?;
    let mut potential = Vec::with_capacity(2 * dim);
    for _ in 0..2 * dim {
        let data = link.complex(sites * rank * rank)?;
        let m = MatField { rank, data };
        check_hermitian(&m)?;
        potential.push(m);
    }
    link.finish()?;
    let gauge = GaugeField { torus: torus.clone(), spec, potential };

    let mut sect = r.chunk("SECT")?;
    let count = sect.u32()? as usize;
    let mut sections = Vec::with_capacity(count.min(64));
    for _ in 0..count {
        let srank = sect.u32()? as usize;
        let degree = match sect.u8()? {
            0 => FormDegree::Zero,
            1 => FormDegree::ZeroTwo,
            d => return Err(corrupt("SECT", format!("unknown form degree {d}"))),
        };
        if srank == 0 || srank > 64 {
            return Err(corrupt("SECT", format!("section rank {srank}")));
        }
        let values = sect.complex(sites * srank)?;
        sections.push(Section { torus: torus.clone(), rank: srank, degree, values });
    }
    sect.finish()?;

    let mut metr = r.chunk("METR")?;
    let metric = match metr.u8()? {
        0 => None,
        1 => {
            let mrank = metr.u32()? as usize;
            let log_scale: Vec<f64> = (0..sites).map(|_| metr.f64()).collect::<Result<_>>()?;
            if log_scale.iter().any(|v| !v.is_finite()) {
                return Err(corrupt("METR", "non-finite log scale"));
            }
            let mut h = MetricField::conformal(&torus, mrank, log_scale);
            match metr.u8()? {
                0 => {}
                1 => {
                    let data = metr.complex(sites * mrank * mrank)?;
                    h = h.with_matrix(MatField { rank: mrank, data }).map_err(|e| corrupt("METR", e.to_string()))?;
                }
                f => return Err(corrupt("METR", format!("bad matrix flag {f}"))),
            }
            Some(h)
        }
        f => return Err(corrupt("METR", format!("bad presence flag {f}"))),
    };
    metr.finish()?;
    r.section = "trailer";
    r.finish()?;
    Ok(Checkpoint { gauge, sections, metric })
}

/// Links `exp(i a A)` are unitary exactly when the potential is Hermitian.
fn check_hermitian(m: &MatField) -> Result<()> {
    let r = m.rank;
    for s in 0..m.sites() {
        let a = m.at(s);
        for i in 0..r {
            for j in 0..r {
                if (a[i * r + j] - a[j * r + i].conj()).norm() > 1e-12 {
                    return Err(corrupt("LINK", format!("link at site {s} is not unitary")));
                }
            }
        }
    }
    Ok(())
}

pub fn save(cp: &Checkpoint, path: &std::path::Path) -> Result<()> {
    super::output::write_atomic(path, &encode(cp))
}

pub fn restore(path: &std::path::Path) -> Result<Checkpoint> {
    decode(&std::fs::read(path)?)
}
