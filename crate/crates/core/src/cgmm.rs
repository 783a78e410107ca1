//! Candidate-direction grid and the complex-Gaussian likelihood matrix.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{normalize_feature, FeatureSet};
use crate::scalar::{lit, to_f64, Real};

/// One record of a steering table: responses of both channels for one
/// direction and bin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SteeringRecord {
    pub direction_deg: f64,
    pub k: usize,
    pub re_a: f64,
    pub im_a: f64,
    pub re_b: f64,
    pub im_b: f64,
}

/// Per-direction, per-bin channel responses of one microphone pair.
#[derive(Debug, Clone, PartialEq)]
pub struct SteeringTable {
    pub pair_id: String,
    pub records: Vec<SteeringRecord>,
}

impl SteeringTable {
    pub fn new(pair_id: impl Into<String>, records: Vec<SteeringRecord>) -> Self {
        Self {
            pair_id: pair_id.into(),
            records,
        }
    }

    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.records {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(pair_id: impl Into<String>, input: impl Read) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let records = r
            .deserialize()
            .collect::<Result<Vec<SteeringRecord>, _>>()?;
        Ok(Self::new(pair_id, records))
    }

    /// Loads a `.json` array of records or a CSV file with header
    /// `direction_deg,k,re_a,im_a,re_b,im_b`.
    pub fn load(pair_id: impl Into<String>, path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path)?;
        if path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("json"))
        {
            let records = serde_json::from_reader(std::io::BufReader::new(file))?;
            Ok(Self::new(pair_id, records))
        } else {
            Self::read_csv(pair_id, std::io::BufReader::new(file))
        }
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::io::BufWriter::new(std::fs::File::create(path)?))
    }
}

/// Predicted normalized features `c_k^s` for `S` candidate directions.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateGrid<T> {
    pub pair_id: String,
    directions: Vec<f64>,
    bins: Vec<usize>,
    bin_index: HashMap<usize, usize>,
    /// Row-major `(bin index, direction)`.
    means: Vec<Complex<T>>,
}

impl<T: Real> CandidateGrid<T> {
    /// `means[b * S + s]` is the predicted feature at `bins[b]` for `directions[s]`.
    pub fn new(
        pair_id: impl Into<String>,
        directions: Vec<f64>,
        bins: Vec<usize>,
        means: Vec<Complex<T>>,
    ) -> Result<Self> {
        if directions.len() < 2 {
            return Err(Error::Config(format!(
                "candidate grid needs >= 2 directions, got {}",
                directions.len()
            )));
        }
        if directions.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Config(
                "directions must be strictly increasing".into(),
            ));
        }
        if means.len() != directions.len() * bins.len() {
            return Err(Error::Config(
                "predicted feature grid has wrong shape".into(),
            ));
        }
        let bin_index = bins.iter().enumerate().map(|(i, &k)| (k, i)).collect();
        Ok(Self {
            pair_id: pair_id.into(),
            directions,
            bins,
            bin_index,
            means,
        })
    }

    pub fn directions(&self) -> &[f64] {
        &self.directions
    }

    pub fn bins(&self) -> &[usize] {
        &self.bins
    }

    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }

    /// Predicted features at `bin` for every direction.
    pub fn means_at(&self, bin: usize) -> Option<&[Complex<T>]> {
        let s = self.directions.len();
        self.bin_index
            .get(&bin)
            .map(|&b| &self.means[b * s..(b + 1) * s])
    }
}

/// Ratio `B / A` per direction and bin, mapped into the unit disk like the observations.
pub fn predict_features<T: Real>(table: &SteeringTable) -> Result<CandidateGrid<T>> {
    let mut directions: Vec<f64> = table.records.iter().map(|r| r.direction_deg).collect();
    directions.sort_by(f64::total_cmp);
    directions.dedup();
    let mut bins: Vec<usize> = table.records.iter().map(|r| r.k).collect();
    bins.sort_unstable();
    bins.dedup();
    let s_count = directions.len();
    let mut means = vec![None; s_count * bins.len()];
    for r in &table.records {
        let s = directions
            .binary_search_by(|d| d.total_cmp(&r.direction_deg))
            .expect("direction collected above");
        let b = bins.binary_search(&r.k).expect("bin collected above");
        let a = Complex::new(lit::<T>(r.re_a), lit::<T>(r.im_a));
        let bb = Complex::new(lit::<T>(r.re_b), lit::<T>(r.im_b));
        if a.norm_sqr() == T::zero() {
            return Err(Error::ZeroResponse {
                direction_deg: r.direction_deg,
                bin: r.k,
            });
        }
        means[b * s_count + s] = Some(normalize_feature(bb / a));
    }
    let means = means
        .into_iter()
        .enumerate()
        .map(|(i, m)| m.ok_or(Error::MissingBin(bins[i / s_count])))
        .collect::<Result<Vec<_>>>()?;
    CandidateGrid::new(table.pair_id.clone(), directions, bins, means)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CgmmConfig {
    /// Shared component variance.
    pub variance: f64,
}

impl Default for CgmmConfig {
    fn default() -> Self {
        Self { variance: 0.1 }
    }
}

impl CgmmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.variance > 0.0 && self.variance.is_finite() {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "variance {} must be > 0",
                self.variance
            )))
        }
    }
}

/// Circular complex Gaussian density `exp(-|c - mean|^2 / var) / (pi var)`.
#[inline]
pub fn gaussian_prob<T: Real>(c: Complex<T>, mean: Complex<T>, variance: T) -> T {
    (-(c - mean).norm_sqr() / variance).exp() / (T::PI() * variance)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RowMeta {
    pub pair: usize,
    pub bin: usize,
    pub frame: usize,
}

/// Nonnegative `C x S` likelihood matrix, one row per observation.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbMatrix<T> {
    data: Vec<T>,
    rows: usize,
    cols: usize,
    meta: Vec<RowMeta>,
}

impl<T: Real> ProbMatrix<T> {
    /// Row-major data; every entry finite and nonnegative, every row with a positive entry.
    pub fn from_rows(data: Vec<T>, rows: usize, cols: usize) -> Result<Self> {
        let meta = (0..rows)
            .map(|i| RowMeta {
                pair: 0,
                bin: 0,
                frame: i,
            })
            .collect();
        Self::with_meta(data, rows, cols, meta)
    }

    pub fn with_meta(data: Vec<T>, rows: usize, cols: usize, meta: Vec<RowMeta>) -> Result<Self> {
        if data.len() != rows * cols || meta.len() != rows {
            return Err(Error::Config("probability matrix has wrong shape".into()));
        }
        if rows == 0 || cols == 0 {
            return Err(Error::NoFeatures);
        }
        for (i, row) in data.chunks_exact(cols).enumerate() {
            if row.iter().any(|v| !v.is_finite() || *v < T::zero())
                || !row.iter().any(|v| *v > T::zero())
            {
                return Err(Error::DegenerateRow(i));
            }
        }
        Ok(Self {
            data,
            rows,
            cols,
            meta,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.cols + j]
    }

    pub fn meta(&self) -> &[RowMeta] {
        &self.meta
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    /// Columns permuted so that new column `j` is old column `perm[j]`.
    pub fn permute_columns(&self, perm: &[usize]) -> Self {
        assert_eq!(perm.len(), self.cols);
        let data = (0..self.rows)
            .flat_map(|i| perm.iter().map(move |&j| self.get(i, j)))
            .collect();
        Self {
            data,
            rows: self.rows,
            cols: self.cols,
            meta: self.meta.clone(),
        }
    }

    pub fn write_csv(&self, mut out: impl Write) -> Result<()> {
        write!(out, "pair,k,p")?;
        for j in 0..self.cols {
            write!(out, ",g{j}")?;
        }
        writeln!(out)?;
        for (i, m) in self.meta.iter().enumerate() {
            write!(out, "{},{},{}", m.pair, m.bin, m.frame)?;
            for v in self.row(i) {
                write!(out, ",{:.12e}", to_f64(*v))?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// Evaluates every observation of every pair against that pair's grid and
/// stacks the rows.
pub fn build_prob_matrix<T: Real>(
    pairs: &[(&FeatureSet<T>, &CandidateGrid<T>)],
    cfg: &CgmmConfig,
) -> Result<ProbMatrix<T>> {
    cfg.validate()?;
    let Some((_, first)) = pairs.first() else {
        return Err(Error::NoFeatures);
    };
    if pairs
        .iter()
        .any(|(_, g)| g.directions() != first.directions())
    {
        return Err(Error::GridMismatch);
    }
    let cols = first.len();
    let var = lit::<T>(cfg.variance);
    let mut data = Vec::new();
    let mut meta = Vec::new();
    for (pair, (features, grid)) in pairs.iter().enumerate() {
        for o in &features.observations {
            let means = grid.means_at(o.bin).ok_or(Error::MissingBin(o.bin))?;
            data.extend(means.iter().map(|&m| gaussian_prob(o.value, m, var)));
            meta.push(RowMeta {
                pair,
                bin: o.bin,
                frame: o.frame,
            });
        }
    }
    let rows = meta.len();
    ProbMatrix::with_meta(data, rows, cols, meta)
}
