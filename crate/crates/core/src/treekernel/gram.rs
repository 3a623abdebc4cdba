use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rayon::prelude::*;

use super::{prepared_pair_kernel, KernelConfig, KernelError, PreparedPair};
use crate::corpus::QuestionPair;
use crate::syntax::TreeOptions;

const CACHE_MAGIC: &[u8; 8] = b"TKGRAM01";

/// Dense symmetric kernel matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    n: usize,
    values: Vec<f64>,
}

impl GramMatrix {
    /// Builds a symmetric matrix from a cell function evaluated on the upper
    /// triangle only; rows are computed in parallel and written in place.
    pub fn from_fn<F>(n: usize, f: F) -> Self
    where
        F: Fn(usize, usize) -> f64 + Sync,
    {
        let rows: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|i| (i..n).map(|j| f(i, j)).collect())
            .collect();
        let mut values = vec![0.0; n * n];
        for (i, row) in rows.into_iter().enumerate() {
            for (off, v) in row.into_iter().enumerate() {
                let j = i + off;
                values[i * n + j] = v;
                values[j * n + i] = v;
            }
        }
        Self { n, values }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self, KernelError> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(KernelError::Config("gram rows must form a square matrix".into()));
        }
        Ok(Self {
            n,
            values: rows.into_iter().flatten().collect(),
        })
    }

    /// Linear kernel `u·v` over row vectors.
    pub fn linear(vectors: &[Vec<f64>]) -> Self {
        Self::from_fn(vectors.len(), |i, j| dot(&vectors[i], &vectors[j]))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n..(i + 1) * self.n]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|i| (i..self.n).all(|j| self.get(i, j) == self.get(j, i)))
    }

    /// Writes `magic, n, cfg fingerprint` then the upper triangle (i ≤ j)
    /// row-major, all little-endian.
    pub fn save_cache(&self, path: &Path, cfg: &KernelConfig) -> Result<(), KernelError> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(CACHE_MAGIC)?;
        w.write_all(&(self.n as u64).to_le_bytes())?;
        w.write_all(&cfg.fingerprint().to_le_bytes())?;
        for i in 0..self.n {
            for j in i..self.n {
                w.write_all(&self.get(i, j).to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Loads a cache written by [`GramMatrix::save_cache`]; rejects caches
    /// produced under a different kernel configuration.
    pub fn load_cache(path: &Path, cfg: &KernelConfig) -> Result<Self, KernelError> {
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != CACHE_MAGIC {
            return Err(KernelError::Cache("bad magic".into()));
        }
        let mut word = [0u8; 8];
        r.read_exact(&mut word)?;
        let n = u64::from_le_bytes(word) as usize;
        r.read_exact(&mut word)?;
        if u64::from_le_bytes(word) != cfg.fingerprint() {
            return Err(KernelError::Cache("kernel configuration mismatch".into()));
        }
        let mut values = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                r.read_exact(&mut word)?;
                let v = f64::from_le_bytes(word);
                values[i * n + j] = v;
                values[j * n + i] = v;
            }
        }
        Ok(Self { n, values })
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn compute_prepared_gram(prepared: &[PreparedPair], cfg: &KernelConfig) -> GramMatrix {
    GramMatrix::from_fn(prepared.len(), |i, j| {
        prepared_pair_kernel(&prepared[i], &prepared[j], cfg)
    })
}

/// Pair-kernel Gram matrix over `pairs`.
pub fn compute_gram(pairs: &[QuestionPair], cfg: &KernelConfig) -> Result<GramMatrix, KernelError> {
    cfg.validate()?;
    if pairs.is_empty() {
        return Err(KernelError::Empty);
    }
    let prepared = pairs
        .par_iter()
        .map(|p| PreparedPair::new(p, cfg, TreeOptions::default()))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(compute_prepared_gram(&prepared, cfg))
}
