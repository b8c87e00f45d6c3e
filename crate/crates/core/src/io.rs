//! On-disk containers.
//!
//! Binary layout, all little-endian: a 16-byte header (12-byte magic, `u32`
//! version), then `f64 dt`, `f64 t0`, `u32 n_samples` and a payload that
//! depends on the container kind:
//!
//! * segments: `u32 n_segments`, `u8 flags` (bit 0 phases present, bit 1
//!   calibrated), then per segment an optional `f64` phase and `n_samples`
//!   `f64` values;
//! * kernel: `u64 n_segments_used`, then the `n x n` matrix row-major;
//! * basis: `u32 n_modes`, `u64 n_segments_used`, the eigenvalues, then each
//!   mode's weights.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::acf::{KernelMatrix, ModeBasis};
use crate::error::{Error, Result};
use crate::signal::{SampleGrid, SegmentSet, TemporalMode};

const VERSION: u32 = 1;
const SEGMENT_MAGIC: &[u8; 12] = b"TEMPMODE-SEG";
const KERNEL_MAGIC: &[u8; 12] = b"TEMPMODE-KER";
const BASIS_MAGIC: &[u8; 12] = b"TEMPMODE-BAS";
const FLAG_PHASE: u8 = 1;
const FLAG_CALIBRATED: u8 = 2;

struct Writer<W: Write>(W);

impl<W: Write> Writer<W> {
    fn bytes(&mut self, b: &[u8]) -> Result<()> {
        Ok(self.0.write_all(b)?)
    }
    fn u8(&mut self, v: u8) -> Result<()> {
        self.bytes(&[v])
    }
    fn u32(&mut self, v: usize) -> Result<()> {
        let v = u32::try_from(v).map_err(|_| Error::Format(format!("{v} exceeds u32")))?;
        self.bytes(&v.to_le_bytes())
    }
    fn u64(&mut self, v: usize) -> Result<()> {
        self.bytes(&(v as u64).to_le_bytes())
    }
    fn f64s(&mut self, v: &[f64]) -> Result<()> {
        // one write per slice keeps the buffered writer busy rather than chatty
        let mut buf = Vec::with_capacity(v.len() * 8);
        v.iter()
            .for_each(|x| buf.extend_from_slice(&x.to_le_bytes()));
        self.bytes(&buf)
    }
    fn header(&mut self, magic: &[u8; 12], grid: &SampleGrid) -> Result<()> {
        self.bytes(magic)?;
        self.bytes(&VERSION.to_le_bytes())?;
        self.f64s(&[grid.dt(), grid.t0()])?;
        self.u32(grid.n_samples())
    }
}

struct Reader<R: Read>(R);

impl<R: Read> Reader<R> {
    fn exact<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut b = [0u8; N];
        self.0.read_exact(&mut b).map_err(truncated)?;
        Ok(b)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.exact::<1>()?[0])
    }
    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.exact()?) as usize)
    }
    fn u64(&mut self) -> Result<usize> {
        usize::try_from(u64::from_le_bytes(self.exact()?))
            .map_err(|_| Error::Format("count exceeds address space".into()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.exact()?))
    }
    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let mut buf = vec![0u8; n * 8];
        self.0.read_exact(&mut buf).map_err(truncated)?;
        Ok(buf
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect())
    }
    fn header(&mut self, magic: &[u8; 12]) -> Result<SampleGrid> {
        let found: [u8; 12] = self.exact()?;
        if &found != magic {
            return Err(Error::Format(format!(
                "bad magic {:?}, expected {:?}",
                String::from_utf8_lossy(&found),
                String::from_utf8_lossy(magic)
            )));
        }
        let version = u32::from_le_bytes(self.exact()?);
        if version != VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let dt = self.f64()?;
        let t0 = self.f64()?;
        let n = self.u32()?;
        SampleGrid::new(dt, n, t0).map_err(|e| Error::Format(format!("header grid: {e}")))
    }
    fn finish(mut self) -> Result<()> {
        let mut extra = [0u8; 1];
        match self.0.read(&mut extra)? {
            0 => Ok(()),
            _ => Err(Error::Format("trailing bytes after payload".into())),
        }
    }
}

fn truncated(e: std::io::Error) -> Error {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        Error::Format("file truncated".into())
    } else {
        Error::Io(e)
    }
}

pub fn write_segments(set: &SegmentSet, w: impl Write) -> Result<()> {
    let mut w = Writer(w);
    w.header(SEGMENT_MAGIC, set.grid())?;
    w.u32(set.n_segments())?;
    let mut flags = 0;
    if set.phases().is_some() {
        flags |= FLAG_PHASE;
    }
    if set.is_calibrated() {
        flags |= FLAG_CALIBRATED;
    }
    w.u8(flags)?;
    for k in 0..set.n_segments() {
        if let Some(p) = set.phases() {
            w.f64s(&[p[k]])?;
        }
        w.f64s(set.segment_samples(k))?;
    }
    Ok(w.0.flush()?)
}

pub fn read_segments(r: impl Read) -> Result<SegmentSet> {
    let mut r = Reader(r);
    let grid = r.header(SEGMENT_MAGIC)?;
    let m = r.u32()?;
    let flags = r.u8()?;
    if flags & !(FLAG_PHASE | FLAG_CALIBRATED) != 0 {
        return Err(Error::Format(format!("unknown flags {flags:#04x}")));
    }
    let n = grid.n_samples();
    let mut data = Vec::with_capacity(m * n);
    let mut phases = (flags & FLAG_PHASE != 0).then(|| Vec::with_capacity(m));
    for _ in 0..m {
        if let Some(p) = phases.as_mut() {
            p.push(r.f64()?);
        }
        data.extend(r.f64s(n)?);
    }
    r.finish()?;
    SegmentSet::from_flat(grid, data, phases, flags & FLAG_CALIBRATED != 0)
        .map_err(|e| Error::Format(e.to_string()))
}

pub fn save_segments(set: &SegmentSet, path: &Path) -> Result<()> {
    write_segments(set, BufWriter::new(File::create(path)?))
}

pub fn load_segments(path: &Path) -> Result<SegmentSet> {
    read_segments(BufReader::new(File::open(path)?))
}

/// CSV variant: a `key=value` header row (`dt`, `t0`, `calibrated`,
/// `phase`), then one segment per row, led by its phase when present.
pub fn write_segments_csv(set: &SegmentSet, w: impl Write) -> Result<()> {
    let mut out = csv::WriterBuilder::new().flexible(true).from_writer(w);
    let g = set.grid();
    out.write_record([
        format!("dt={:e}", g.dt()),
        format!("t0={:e}", g.t0()),
        format!("calibrated={}", set.is_calibrated()),
        format!("phase={}", set.phases().is_some()),
    ])?;
    for k in 0..set.n_segments() {
        let lead = set.phases().map(|p| p[k]);
        let row = lead
            .iter()
            .chain(set.segment_samples(k))
            .map(|x| format!("{x:e}"));
        out.write_record(row)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_segments_csv(r: impl Read) -> Result<SegmentSet> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(r);
    let mut records = rdr.records();
    let head = records
        .next()
        .ok_or_else(|| Error::Format("empty CSV".into()))??;
    let field = |key: &str| -> Result<&str> {
        head.iter()
            .find_map(|f| f.strip_prefix(key).and_then(|s| s.strip_prefix('=')))
            .ok_or_else(|| Error::Format(format!("CSV header lacks {key}")))
    };
    let num = |key: &str| -> Result<f64> {
        field(key)?
            .parse()
            .map_err(|e| Error::Format(format!("{key}: {e}")))
    };
    let flag = |key: &str| -> Result<bool> {
        field(key)?
            .parse()
            .map_err(|e| Error::Format(format!("{key}: {e}")))
    };
    let (dt, t0) = (num("dt")?, num("t0")?);
    let (calibrated, with_phase) = (flag("calibrated")?, flag("phase")?);

    let mut data = Vec::new();
    let mut phases = Vec::new();
    let mut width = None;
    for rec in records {
        let rec = rec?;
        let mut vals = rec.iter().map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| Error::Format(format!("bad number {s:?}: {e}")))
        });
        if with_phase {
            phases.push(
                vals.next()
                    .ok_or_else(|| Error::Format("empty row".into()))??,
            );
        }
        let row = vals.collect::<Result<Vec<_>>>()?;
        if *width.get_or_insert(row.len()) != row.len() {
            return Err(Error::Format("ragged CSV rows".into()));
        }
        data.extend(row);
    }
    let n = width.ok_or_else(|| Error::Format("CSV has no segments".into()))?;
    let grid = SampleGrid::new(dt, n, t0).map_err(|e| Error::Format(e.to_string()))?;
    SegmentSet::from_flat(grid, data, with_phase.then_some(phases), calibrated)
        .map_err(|e| Error::Format(e.to_string()))
}

pub fn write_kernel(k: &KernelMatrix, w: impl Write) -> Result<()> {
    let mut w = Writer(w);
    w.header(KERNEL_MAGIC, k.grid())?;
    w.u64(k.n_segments_used())?;
    // symmetric, so column-major storage is also the row-major layout
    w.f64s(k.entries().as_slice())?;
    Ok(w.0.flush()?)
}

pub fn read_kernel(r: impl Read) -> Result<KernelMatrix> {
    let mut r = Reader(r);
    let grid = r.header(KERNEL_MAGIC)?;
    let used = r.u64()?;
    let n = grid.n_samples();
    let m = DMatrix::from_row_slice(n, n, &r.f64s(n * n)?);
    r.finish()?;
    KernelMatrix::new(grid, m, used).map_err(|e| Error::Format(e.to_string()))
}

pub fn write_basis(b: &ModeBasis, w: impl Write) -> Result<()> {
    let mut w = Writer(w);
    w.header(BASIS_MAGIC, b.grid())?;
    w.u32(b.len())?;
    w.u64(b.n_segments_used())?;
    w.f64s(b.eigenvalues())?;
    for m in b.modes() {
        w.f64s(m.weights())?;
    }
    Ok(w.0.flush()?)
}

pub fn read_basis(r: impl Read) -> Result<ModeBasis> {
    let mut r = Reader(r);
    let grid = r.header(BASIS_MAGIC)?;
    let k = r.u32()?;
    let used = r.u64()?;
    let eigenvalues = r.f64s(k)?;
    let modes = (0..k)
        .map(|_| {
            let w = r.f64s(grid.n_samples())?;
            TemporalMode::new(grid, w).map_err(|e| Error::Format(e.to_string()))
        })
        .collect::<Result<Vec<_>>>()?;
    r.finish()?;
    ModeBasis::from_parts(grid, eigenvalues, modes, used).map_err(|e| Error::Format(e.to_string()))
}

pub fn save_kernel(k: &KernelMatrix, path: &Path) -> Result<()> {
    write_kernel(k, BufWriter::new(File::create(path)?))
}

pub fn load_kernel(path: &Path) -> Result<KernelMatrix> {
    read_kernel(BufReader::new(File::open(path)?))
}

pub fn save_basis(b: &ModeBasis, path: &Path) -> Result<()> {
    write_basis(b, BufWriter::new(File::create(path)?))
}

pub fn load_basis(path: &Path) -> Result<ModeBasis> {
    read_basis(BufReader::new(File::open(path)?))
}
