//! sLORETA source power from a fixed-orientation lead field.
//!
//! With `K` the M×V lead field and `H = I − 11ᵀ/M` the average-reference
//! projector, the minimum-norm operator is
//!
//! ```text
//! T = (HK)ᵀ [ (HK)(HK)ᵀ + αH ]⁺
//! ```
//!
//! and the standardized power at voxel `v` is `(Tx)_v² / R_vv` with
//! `R = T·HK` the resolution matrix. The pseudo-inverse is taken on the
//! average-reference subspace: adding `c·11ᵀ/M` to the bracket makes it
//! positive definite without changing `T`, because `(HK)ᵀ1 = 0`.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::montage::Montage;
use crate::pipelines::QuantityStats;

const LEADFIELD_MAGIC: &str = "LEADFIELD";
const KERNEL_MAGIC: &str = "SLORETA";
const FORMAT_VERSION: u32 = 1;
/// Eigenvalues below this fraction of the largest count as zero.
const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct LeadField {
    /// M×V gains (μV per unit source amplitude), rows in montage order.
    matrix: DMatrix<f64>,
    voxel_positions: Vec<[f64; 3]>,
}

impl LeadField {
    pub fn new(matrix: DMatrix<f64>, voxel_positions: Vec<[f64; 3]>) -> Result<Self> {
        if voxel_positions.len() != matrix.ncols() {
            return Err(Error::Model(format!(
                "{} voxel positions for {} lead-field columns",
                voxel_positions.len(),
                matrix.ncols()
            )));
        }
        if let Some(i) = matrix.iter().position(|v| !v.is_finite()) {
            let (row, col) = (i % matrix.nrows(), i / matrix.nrows());
            return Err(Error::Model(format!("non-finite gain at row {row}, voxel {col}")));
        }
        if let Some(v) = (0..matrix.ncols()).find(|&v| matrix.column(v).iter().all(|&g| g == 0.0)) {
            return Err(Error::Model(format!("voxel {v} has an all-zero gain column")));
        }
        Ok(LeadField {
            matrix,
            voxel_positions,
        })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn voxel_positions(&self) -> &[[f64; 3]] {
        &self.voxel_positions
    }

    pub fn electrode_count(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn voxel_count(&self) -> usize {
        self.matrix.ncols()
    }

    /// Checks the row count against a montage.
    pub fn check_montage(&self, montage: &Montage) -> Result<()> {
        if self.electrode_count() != montage.len() {
            return Err(Error::Model(format!(
                "lead field has {} rows, montage has {} electrodes",
                self.electrode_count(),
                montage.len()
            )));
        }
        Ok(())
    }

    /// Binary document: ASCII header line, then f32 LE gains row-major, then
    /// f32 LE voxel positions.
    pub fn to_bytes(&self) -> Vec<u8> {
        let (m, v) = self.matrix.shape();
        let mut out = format!("{LEADFIELD_MAGIC} {FORMAT_VERSION} {m} {v} fixed\n").into_bytes();
        for r in 0..m {
            for c in 0..v {
                out.extend_from_slice(&(self.matrix[(r, c)] as f32).to_le_bytes());
            }
        }
        for p in &self.voxel_positions {
            for x in p {
                out.extend_from_slice(&(*x as f32).to_le_bytes());
            }
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }
}

fn split_header(bytes: &[u8]) -> Result<(&str, &[u8])> {
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::parse("header", "missing header line"))?;
    let header = std::str::from_utf8(&bytes[..nl]).map_err(|_| Error::parse("header", "header is not ASCII"))?;
    Ok((header, &bytes[nl + 1..]))
}

fn parse_dim(field: Option<&str>, name: &str) -> Result<usize> {
    field
        .and_then(|s| s.parse().ok())
        .filter(|&n: &usize| n > 0)
        .ok_or_else(|| Error::parse("header", format!("bad or missing {name}")))
}

fn check_version(field: Option<&str>) -> Result<()> {
    match field.and_then(|s| s.parse::<u32>().ok()) {
        Some(FORMAT_VERSION) => Ok(()),
        other => Err(Error::parse("header", format!("unsupported format version {other:?}"))),
    }
}

/// Parses a lead-field document (see [`LeadField::to_bytes`]).
pub fn load_lead_field(bytes: &[u8]) -> Result<LeadField> {
    let (header, body) = split_header(bytes)?;
    let mut cols = header.split_whitespace();
    if cols.next() != Some(LEADFIELD_MAGIC) {
        return Err(Error::parse("header", format!("expected {LEADFIELD_MAGIC} magic")));
    }
    check_version(cols.next())?;
    let m = parse_dim(cols.next(), "electrode count")?;
    let v = parse_dim(cols.next(), "voxel count")?;
    match cols.next() {
        Some("fixed") => {}
        other => {
            return Err(Error::parse(
                "header",
                format!("unsupported orientation flag {other:?}; only fixed is supported"),
            ))
        }
    }
    let floats = body.len() / 4;
    let need = m * v + 3 * v;
    if floats < need || body.len() % 4 != 0 {
        let at = floats.min(need);
        let location = if at < m * v {
            format!("gain row {}, column {}", at / v, at % v)
        } else {
            let k = at - m * v;
            format!("voxel position {}, component {}", k / 3, k % 3)
        };
        return Err(Error::parse(
            location,
            format!("truncated: {} of {} values present", floats, need),
        ));
    }
    if floats > need {
        return Err(Error::parse("trailer", format!("{} unexpected trailing values", floats - need)));
    }
    let value = |k: usize| {
        let c = &body[4 * k..4 * k + 4];
        f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64
    };
    let mut matrix = DMatrix::zeros(m, v);
    for r in 0..m {
        for c in 0..v {
            let g = value(r * v + c);
            if !g.is_finite() {
                return Err(Error::parse(format!("gain row {r}, column {c}"), "non-finite value"));
            }
            matrix[(r, c)] = g;
        }
    }
    let positions = (0..v)
        .map(|j| std::array::from_fn(|k| value(m * v + 3 * j + k)))
        .collect();
    LeadField::new(matrix, positions)
}

pub fn read_lead_field(path: &Path) -> Result<LeadField> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    load_lead_field(&bytes)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Regularization {
    Fixed(f64),
    /// `trace(K·Kᵀ) / (100·M)`
    Auto,
}

impl std::str::FromStr for Regularization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(Regularization::Auto);
        }
        s.parse::<f64>()
            .ok()
            .filter(|a| *a >= 0.0 && a.is_finite())
            .map(Regularization::Fixed)
            .ok_or_else(|| Error::Config(format!("alpha must be 'auto' or a number >= 0, got {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SloretaKernel {
    /// V×M minimum-norm operator.
    operator: DMatrix<f64>,
    resolution_diag: Vec<f64>,
    alpha: f64,
}

pub fn auto_alpha(lead: &LeadField) -> f64 {
    lead.matrix.norm_squared() / (100.0 * lead.electrode_count() as f64)
}

/// Columns of `k` with their electrode mean removed.
fn average_reference(k: &DMatrix<f64>) -> DMatrix<f64> {
    let mut kc = k.clone();
    for mut col in kc.column_iter_mut() {
        let mean = col.mean();
        col.add_scalar_mut(-mean);
    }
    kc
}

pub fn compute_kernel(lead: &LeadField, regularization: Regularization) -> Result<SloretaKernel> {
    let alpha = match regularization {
        Regularization::Auto => auto_alpha(lead),
        Regularization::Fixed(a) if a >= 0.0 && a.is_finite() => a,
        Regularization::Fixed(a) => return Err(Error::Config(format!("alpha must be >= 0, got {a}"))),
    };
    let m = lead.electrode_count();
    let kc = average_reference(&lead.matrix);
    let centering = DMatrix::identity(m, m) - DMatrix::from_element(m, m, 1.0 / m as f64);
    let gram = &kc * kc.transpose() + &centering * alpha;
    let scale = match gram.trace() / m as f64 {
        s if s > 0.0 => s,
        _ => 1.0,
    };
    let system = &gram + DMatrix::from_element(m, m, scale / m as f64);

    let eig = SymmetricEigen::new(system.clone());
    let lmax = eig.eigenvalues.max();
    let lmin = eig.eigenvalues.min();
    if alpha == 0.0 && lmin <= RANK_TOLERANCE * lmax {
        return Err(Error::NumericalRank(format!(
            "average-referenced gram matrix has eigenvalue ratio {:.3e}",
            lmin / lmax
        )));
    }
    let solved = match system.clone().cholesky() {
        Some(ch) => ch.solve(&kc),
        None => {
            let floor = RANK_TOLERANCE * lmax;
            let inv_vals = eig.eigenvalues.map(|l| 1.0 / l.max(floor));
            let inv = &eig.eigenvectors * DMatrix::from_diagonal(&inv_vals) * eig.eigenvectors.transpose();
            inv * &kc
        }
    };
    // solved = A⁻¹·Kc (M×V), operator = solvedᵀ
    let operator = solved.transpose();
    let resolution_diag: Vec<f64> = (0..lead.voxel_count())
        .map(|v| solved.column(v).dot(&kc.column(v)))
        .collect();
    if let Some(v) = resolution_diag.iter().position(|&r| !(r > 0.0)) {
        return Err(Error::Model(format!(
            "resolution diagonal at voxel {v} is {} (must be positive)",
            resolution_diag[v]
        )));
    }
    Ok(SloretaKernel {
        operator,
        resolution_diag,
        alpha,
    })
}

impl SloretaKernel {
    pub fn operator(&self) -> &DMatrix<f64> {
        &self.operator
    }

    pub fn resolution_diag(&self) -> &[f64] {
        &self.resolution_diag
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn voxel_count(&self) -> usize {
        self.operator.nrows()
    }

    pub fn electrode_count(&self) -> usize {
        self.operator.ncols()
    }

    /// Standardized power `(Tx)_v² / R_vv` of one sample.
    pub fn power(&self, sample: &[f64]) -> Result<Vec<f64>> {
        if sample.len() != self.electrode_count() {
            return Err(Error::Contract(format!(
                "sample has {} values, kernel expects {}",
                sample.len(),
                self.electrode_count()
            )));
        }
        Ok(self
            .operator
            .row_iter()
            .zip(&self.resolution_diag)
            .map(|(row, r)| {
                let j: f64 = row.iter().zip(sample).map(|(a, b)| a * b).sum();
                j * j / r
            })
            .collect())
    }

    /// Mean standardized power over `n` samples with summed outer product `cov`
    /// (M×M row-major).
    pub fn power_from_covariance(&self, cov: &[f64], n: usize) -> Vec<f64> {
        let m = self.electrode_count();
        let c = DMatrix::from_row_slice(m, m, cov);
        let tc = &self.operator * c;
        (0..self.voxel_count())
            .map(|v| {
                let q = tc.row(v).dot(&self.operator.row(v));
                (q / n as f64 / self.resolution_diag[v]).max(0.0)
            })
            .collect()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let (v, m) = self.operator.shape();
        let mut out = format!("{KERNEL_MAGIC} {FORMAT_VERSION} {v} {m} {:?}\n", self.alpha).into_bytes();
        for r in 0..v {
            for c in 0..m {
                out.extend_from_slice(&self.operator[(r, c)].to_le_bytes());
            }
        }
        for r in &self.resolution_diag {
            out.extend_from_slice(&r.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (header, body) = split_header(bytes)?;
        let mut cols = header.split_whitespace();
        if cols.next() != Some(KERNEL_MAGIC) {
            return Err(Error::parse("header", format!("expected {KERNEL_MAGIC} magic")));
        }
        check_version(cols.next())?;
        let v = parse_dim(cols.next(), "voxel count")?;
        let m = parse_dim(cols.next(), "electrode count")?;
        let alpha: f64 = cols
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::parse("header", "bad alpha"))?;
        let need = 8 * (v * m + v);
        if body.len() != need {
            return Err(Error::parse("body", format!("expected {need} bytes, found {}", body.len())));
        }
        let vals: Vec<f64> = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(SloretaKernel {
            operator: DMatrix::from_row_slice(v, m, &vals[..v * m]),
            resolution_diag: vals[v * m..].to_vec(),
            alpha,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.to_bytes()).map_err(|e| Error::io(path, e))
    }
}

/// Source power for display: raw standardized power, or its clamped z-score
/// in [−1, 1] against a calibration baseline.
pub fn source_power(
    kernel: &SloretaKernel,
    sample: &[f64],
    baseline: Option<&QuantityStats>,
) -> Result<Vec<f64>> {
    let raw = kernel.power(sample)?;
    Ok(match baseline {
        None => raw,
        Some(stats) => normalize_sources(&raw, stats)?,
    })
}

pub fn normalize_sources(raw: &[f64], stats: &QuantityStats) -> Result<Vec<f64>> {
    if stats.mean.len() != raw.len() {
        return Err(Error::Contract("source baseline does not match the kernel".into()));
    }
    Ok(raw
        .iter()
        .enumerate()
        .map(|(v, &s)| {
            let z = (s - stats.mean[v]) / stats.std[v];
            z.clamp(-crate::pipelines::Z_CLAMP, crate::pipelines::Z_CLAMP) / crate::pipelines::Z_CLAMP
        })
        .collect())
}

/// Analytic single-shell lead field for desk-scale experiments: radial
/// dipoles on a Fibonacci lattice over the upper part of a sphere of radius
/// 0.75, infinite-medium potentials scaled to tens of μV.
pub fn spherical_lead_field(montage: &Montage, voxels: usize) -> Result<LeadField> {
    if voxels == 0 {
        return Err(Error::Config("need at least one voxel".into()));
    }
    const RADIUS: f64 = 0.75;
    const Z_MIN: f64 = -0.25;
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    let positions: Vec<[f64; 3]> = (0..voxels)
        .map(|i| {
            let z = 1.0 - (1.0 - Z_MIN) * (i as f64 + 0.5) / voxels as f64;
            let r = (1.0 - z * z).sqrt();
            let phi = golden * i as f64;
            [RADIUS * r * phi.cos(), RADIUS * r * phi.sin(), RADIUS * z]
        })
        .collect();
    let m = montage.len();
    let mut matrix = DMatrix::zeros(m, voxels);
    for (j, p) in positions.iter().enumerate() {
        let orient = p.map(|c| c / RADIUS);
        for (i, e) in montage.electrodes().iter().enumerate() {
            let d = [e.pos[0] - p[0], e.pos[1] - p[1], e.pos[2] - p[2]];
            let dist = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
            let proj = orient[0] * d[0] + orient[1] * d[1] + orient[2] * d[2];
            matrix[(i, j)] = 10.0 * proj / dist.powi(3);
        }
    }
    LeadField::new(matrix, positions)
}

/// Gaussian random lead field with voxel positions on the unit sphere.
pub fn random_lead_field(electrodes: usize, voxels: usize, seed: u64) -> LeadField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let matrix = DMatrix::from_fn(electrodes, voxels, |_, _| StandardNormal.sample(&mut rng));
    let positions = (0..voxels)
        .map(|j| {
            let a = j as f64 * 2.399963;
            let z = 1.0 - 2.0 * (j as f64 + 0.5) / voxels as f64;
            let r = (1.0 - z * z).sqrt();
            [r * a.cos(), r * a.sin(), z]
        })
        .collect();
    LeadField::new(matrix, positions).expect("gaussian columns are non-zero")
}
