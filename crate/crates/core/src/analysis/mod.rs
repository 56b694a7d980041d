//! Token-mixer identity probes, a Toeplitz-ness score, per-position loss
//! profiles and heatmap export.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::numerics::layers::{gelu, linear};
use crate::numerics::Matrix;
use crate::trainer::SegmentExample;

/// Share of squared mass allowed outside the band when estimating bandwidth.
pub const BAND_MASS_TAIL: f64 = 0.1;

#[derive(Clone, Debug, PartialEq)]
pub struct ProbeResult {
    pub block: usize,
    pub matrix: Matrix,
    pub diagonal_constancy: f64,
    pub bandwidth: usize,
}

/// Token-mixer feedforward of `block` applied to the `L x L` identity, no
/// layernorm and no residual: row `i` is the response to a unit impulse at
/// frame `i`.
pub fn identity_probe(params: &ModelParams, block: usize) -> Result<ProbeResult> {
    let b = params
        .blocks
        .get(block)
        .ok_or_else(|| Error::Range(format!("block {block} of {}", params.blocks.len())))?;
    let t = b
        .token
        .as_ref()
        .ok_or_else(|| Error::Capability("model has no token mixers to probe".into()))?;
    let eye = Matrix::identity(params.config.seq_len);
    let h = gelu(&linear(&eye, &t.w1.value, t.b1.value.data())?);
    let matrix = linear(&h, &t.w2.value, t.b2.value.data())?;
    Ok(ProbeResult {
        block,
        diagonal_constancy: diagonal_constancy(&matrix)?,
        bandwidth: bandwidth(&matrix)?,
        matrix,
    })
}

/// Probes every block.
pub fn probe_all(params: &ModelParams) -> Result<Vec<ProbeResult>> {
    (0..params.blocks.len()).map(|i| identity_probe(params, i)).collect()
}

fn check_square(m: &Matrix) -> Result<usize> {
    if m.rows() != m.cols() {
        return Err(Error::dim(format!("expected a square matrix, got {:?}", m.shape())));
    }
    Ok(m.rows())
}

/// `1 - within-diagonal variance / total variance`, each descending diagonal
/// weighted by its length. 1 for exactly Toeplitz (or constant) matrices,
/// near 0 for unstructured ones.
pub fn diagonal_constancy(m: &Matrix) -> Result<f64> {
    let n = check_square(m)?;
    if n == 0 {
        return Ok(1.0);
    }
    let mean = m.data().iter().map(|&v| v as f64).sum::<f64>() / (n * n) as f64;
    let total: f64 = m.data().iter().map(|&v| (v as f64 - mean).powi(2)).sum();
    if total == 0.0 {
        return Ok(1.0);
    }
    let mut within = 0f64;
    for d in -(n as isize - 1)..n as isize {
        let cells: Vec<f64> = (0..n)
            .filter_map(|i| {
                let j = i as isize + d;
                (0..n as isize).contains(&j).then(|| m.get(i, j as usize) as f64)
            })
            .collect();
        let mu = cells.iter().sum::<f64>() / cells.len() as f64;
        within += cells.iter().map(|v| (v - mu).powi(2)).sum::<f64>();
    }
    Ok((1.0 - within / total).clamp(0.0, 1.0))
}

/// Smallest `b` such that diagonals with `|offset| > b` carry less than
/// [`BAND_MASS_TAIL`] of the squared mass.
pub fn bandwidth(m: &Matrix) -> Result<usize> {
    let n = check_square(m)?;
    let mut by_offset = vec![0f64; n];
    for i in 0..n {
        for j in 0..n {
            by_offset[i.abs_diff(j)] += (m.get(i, j) as f64).powi(2);
        }
    }
    let total: f64 = by_offset.iter().sum();
    let mut outside = total;
    for (b, mass) in by_offset.iter().enumerate() {
        outside -= mass;
        if outside < BAND_MASS_TAIL * total || outside <= 0.0 {
            return Ok(b);
        }
    }
    Ok(n.saturating_sub(1))
}

/// Mean absolute error per segment position over the real frames of
/// `examples` (averaged over segments and mel bins). Positions that are
/// padding in every segment come out as NaN.
pub fn loss_profile(params: &ModelParams, examples: &[SegmentExample], batch_size: usize) -> Result<Vec<f64>> {
    if examples.is_empty() {
        return Err(Error::DegenerateInput("empty holdout".into()));
    }
    let l = params.config.seq_len;
    let mut sum = vec![0f64; l];
    let mut count = vec![0usize; l];
    for chunk in examples.chunks(batch_size.max(1)) {
        let ids: Vec<_> = chunk.iter().map(|e| e.ids.clone()).collect();
        let pred = params.predict(&ids)?;
        for (k, e) in chunk.iter().enumerate() {
            for t in (0..l).filter(|&t| e.mask[t]) {
                let err: f64 = pred
                    .row(k * l + t)
                    .iter()
                    .zip(e.target.row(t))
                    .map(|(a, b)| (a - b).abs() as f64)
                    .sum();
                sum[t] += err / e.target.cols() as f64;
                count[t] += 1;
            }
        }
    }
    if count.iter().all(|&c| c == 0) {
        return Err(Error::DegenerateInput("holdout has no real frames".into()));
    }
    Ok(sum.iter().zip(&count).map(|(s, &c)| s / c as f64).collect())
}

/// Mean profile over the outer twentieth at each end divided by the mean
/// over the middle half; `[0,10) + [190,200)` against `[50,150)` at L = 200.
pub fn edge_middle_ratio(profile: &[f64]) -> f64 {
    let l = profile.len();
    let edge = (l / 20).max(1);
    let mean = |xs: &mut dyn Iterator<Item = &f64>| {
        let v: Vec<f64> = xs.filter(|x| x.is_finite()).copied().collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    let e = mean(&mut profile[..edge].iter().chain(&profile[l - edge..]));
    let m = mean(&mut profile[l / 4..3 * l / 4].iter());
    e / m
}

/// Writes `path` as an 8-bit binary PGM (min-max scaled; a constant matrix
/// maps to 128) and the exact values as CSV next to it.
pub fn export_heatmap(m: &Matrix, path: &Path) -> Result<()> {
    let (lo, hi) = m
        .data()
        .iter()
        .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let pixels: Vec<u8> = m
        .data()
        .iter()
        .map(|&v| {
            if hi > lo {
                (((v - lo) as f64 / (hi - lo) as f64) * 255.0).round() as u8
            } else {
                128
            }
        })
        .collect();
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write!(f, "P5\n{} {}\n255\n", m.cols(), m.rows())?;
    f.write_all(&pixels)?;
    f.flush()?;
    write_matrix_csv(m, &path.with_extension("csv"))
}

pub fn write_matrix_csv(m: &Matrix, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_io)?;
    for r in 0..m.rows() {
        w.write_record(m.row(r).iter().map(|v| v.to_string())).map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_matrix_csv(path: &Path) -> Result<Matrix> {
    let mut r = csv::ReaderBuilder::new().has_headers(false).from_path(path).map_err(csv_io)?;
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_io)?;
        let row = rec
            .iter()
            .map(|s| s.parse::<f32>().map_err(|e| Error::format(format!("bad value {s:?}: {e}"))))
            .collect::<Result<Vec<f32>>>()?;
        rows.push(row);
    }
    Matrix::from_rows(&rows)
}

/// `position,loss` rows.
pub fn write_profile_csv(profile: &[f64], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_io)?;
    w.write_record(["position", "loss"]).map_err(csv_io)?;
    for (t, v) in profile.iter().enumerate() {
        w.write_record([t.to_string(), v.to_string()]).map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_io(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

#[cfg(test)]
mod tests;
