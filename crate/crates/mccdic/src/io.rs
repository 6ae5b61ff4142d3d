//! File formats: MCT1 tensors, 8-bit PGM previews and the CSV tables.
//!
//! MCT1 layout: magic `MCT1`, `u32` LE rank, `rank` × `u64` LE dims, then
//! the `f64` LE payload in row-major order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use mccdic_core::learn::EpochLog;
use mccdic_core::solver::Objective;
use mccdic_core::Tensor;

use crate::error::{Error, Result};

pub const MCT_MAGIC: &[u8; 4] = b"MCT1";

/// Largest rank accepted when reading, to reject garbage headers early.
const MAX_RANK: u32 = 8;

pub fn encode_mct(t: &Tensor) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + 8 * t.shape().len() + 8 * t.len());
    out.extend_from_slice(MCT_MAGIC);
    out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
    for &d in t.shape() {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for &v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_mct(bytes: &[u8], path: &Path) -> Result<Tensor> {
    let bad = |m: &str| Error::format(path, m);
    if bytes.len() < 8 || &bytes[..4] != MCT_MAGIC {
        return Err(bad("not an MCT1 file"));
    }
    let rank = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if rank > MAX_RANK {
        return Err(bad(&format!("rank {rank} is too large")));
    }
    let header = 8 + 8 * rank as usize;
    if bytes.len() < header {
        return Err(bad("truncated header"));
    }
    let shape: Vec<usize> = bytes[8..header]
        .chunks_exact(8)
        .map(|c| u64::from_le_bytes(c.try_into().unwrap()) as usize)
        .collect();
    let len = shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| bad("dimensions overflow"))?;
    let payload = &bytes[header..];
    if Some(payload.len()) != len.checked_mul(8) {
        return Err(bad(&format!(
            "payload holds {} bytes, shape {shape:?} needs {}",
            payload.len(),
            len * 8
        )));
    }
    let data = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(Tensor::new(shape, data)?)
}

pub fn write_mct(path: &Path, t: &Tensor) -> Result<()> {
    std::fs::write(path, encode_mct(t)).map_err(|e| Error::io(path, e))
}

pub fn read_mct(path: &Path) -> Result<Tensor> {
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|f| BufReader::new(f).read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    decode_mct(&bytes, path)
}

/// Reads a 2-D image, accepting `[rows, cols]` or `[rows, cols, 1]`.
pub fn read_image(path: &Path) -> Result<Tensor> {
    let t = read_mct(path)?;
    match *t.shape() {
        [_, _] => Ok(t),
        [r, c, 1] => Ok(t.reshape(vec![r, c])?),
        ref s => Err(Error::format(
            path,
            format!("expected a 2-D image, got shape {s:?}"),
        )),
    }
}

/// Writes a binary 8-bit PGM, min-max scaled. The scale is recorded in a
/// header comment; returns `(min, max)`.
pub fn write_pgm(path: &Path, image: &Tensor) -> Result<(f64, f64)> {
    let (rows, cols) = image.spatial();
    if image.len() != rows * cols {
        return Err(Error::format(path, "PGM needs a single-channel image"));
    }
    let (lo, hi) = (image.min(), image.max());
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut out = format!("P5\n# min={lo:e} max={hi:e}\n{cols} {rows}\n255\n").into_bytes();
    out.extend(
        image
            .data()
            .iter()
            .map(|&v| (((v - lo) / span) * 255.0).round().clamp(0.0, 255.0) as u8),
    );
    std::fs::write(path, out).map_err(|e| Error::io(path, e))?;
    Ok((lo, hi))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(BufWriter::new(file)))
}

fn write_rows<I>(path: &Path, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let csv_err = |e: csv::Error| Error::format(path, e.to_string());
    let mut w = csv_writer(path)?;
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(&row).map_err(csv_err)?;
    }
    w.into_inner()
        .map_err(|e| Error::io(path, e.into_error()))?
        .flush()
        .map_err(|e| Error::io(path, e))
}

pub const TRACE_COLUMNS: [&str; 7] = ["iter", "objective", "fid1", "fid2", "l1_c", "l1_u", "l1_v"];

/// One row per trace entry; row 0 is the initialization.
pub fn write_trace_csv(path: &Path, trace: &[Objective]) -> Result<()> {
    let rows = trace.iter().enumerate().map(|(i, o)| {
        let mut row = vec![i.to_string()];
        row.extend([o.total, o.fid1, o.fid2, o.l1_c, o.l1_u, o.l1_v].map(|v| v.to_string()));
        row
    });
    write_rows(path, &TRACE_COLUMNS, rows)
}

pub const REPORT_COLUMNS: [&str; 5] = ["label", "psnr", "ssim", "rmse", "rmse_x100"];

#[derive(Debug, Clone, PartialEq)]
pub struct Quality {
    pub label: String,
    pub psnr: f64,
    pub ssim: f64,
    pub rmse: f64,
}

impl Quality {
    /// PSNR with the peak taken as `max(gt)`.
    pub fn measure(label: &str, x: &Tensor, gt: &Tensor) -> Result<Self> {
        use mccdic_core::metrics;
        Ok(Self {
            label: label.to_string(),
            psnr: metrics::psnr(x, gt, gt.max())?,
            ssim: metrics::ssim(x, gt)?,
            rmse: metrics::rmse(x, gt)?,
        })
    }
}

pub fn write_report_csv(path: &Path, rows: &[Quality]) -> Result<()> {
    let rows = rows.iter().map(|q| {
        vec![
            q.label.clone(),
            q.psnr.to_string(),
            q.ssim.to_string(),
            q.rmse.to_string(),
            (100.0 * q.rmse).to_string(),
        ]
    });
    write_rows(path, &REPORT_COLUMNS, rows)
}

pub const LEARN_COLUMNS: [&str; 7] = [
    "epoch",
    "objective",
    "fidelity",
    "recon_loss",
    "step_ref",
    "step_target",
    "step_recon",
];

pub fn write_learn_csv(path: &Path, log: &[EpochLog]) -> Result<()> {
    let rows = log.iter().map(|l| {
        let mut row = vec![l.epoch.to_string()];
        row.extend(
            [
                l.objective,
                l.fidelity,
                l.recon_loss,
                l.step_ref,
                l.step_target,
                l.step_recon,
            ]
            .map(|v| v.to_string()),
        );
        row
    });
    write_rows(path, &LEARN_COLUMNS, rows)
}
