//! Data set types and their CSV layout.
//!
//! Disease maps use columns `x1, x2, y, y_e`; regression data sets use
//! `y, x1, …, xp`. A header row is required and columns are found by name.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::likelihoods::LikelihoodModel;

/// Areal counts with 2-d locations and expected counts.
#[derive(Debug, Clone, PartialEq)]
pub struct DiseaseMapData {
    /// One row per area.
    pub points: DMatrix<f64>,
    pub counts: Vec<f64>,
    pub exposure: Vec<f64>,
}

/// Binary outcomes with a covariate matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct GlmData {
    pub design: DMatrix<f64>,
    pub y: Vec<f64>,
}

struct Columns {
    headers: Vec<String>,
    rows: Vec<Vec<f64>>,
}

impl Columns {
    fn read<R: Read>(input: R, what: &str) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
        let headers: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
        let mut rows = Vec::new();
        for (r, record) in reader.records().enumerate() {
            let record = record?;
            let row = record
                .iter()
                .enumerate()
                .map(|(c, s)| {
                    s.parse::<f64>().map_err(|_| {
                        Error::contract(format!("{what}: row {} column `{}` is not a number: {s:?}", r + 1, headers[c]))
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            rows.push(row);
        }
        if rows.is_empty() {
            return Err(Error::contract(format!("{what}: no data rows")));
        }
        Ok(Self { headers, rows })
    }

    fn index(&self, name: &str, what: &str) -> Result<usize> {
        self.headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::contract(format!("{what}: missing column `{name}`")))
    }

    fn column(&self, name: &str, what: &str) -> Result<Vec<f64>> {
        let j = self.index(name, what)?;
        Ok(self.rows.iter().map(|r| r[j]).collect())
    }
}

impl DiseaseMapData {
    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// Poisson counts with log link and the expected counts as exposure.
    pub fn likelihood(&self) -> Result<LikelihoodModel> {
        LikelihoodModel::poisson_log(&self.counts, &vec![1; self.len()], Some(&self.exposure))
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["x1", "x2", "y", "y_e"])?;
        for i in 0..self.len() {
            w.write_record(&[
                self.points[(i, 0)].to_string(),
                self.points[(i, 1)].to_string(),
                self.counts[i].to_string(),
                self.exposure[i].to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let what = "disease-map data";
        let cols = Columns::read(input, what)?;
        let x1 = cols.column("x1", what)?;
        let x2 = cols.column("x2", what)?;
        let n = x1.len();
        Ok(Self {
            points: DMatrix::from_fn(n, 2, |i, j| if j == 0 { x1[i] } else { x2[i] }),
            counts: cols.column("y", what)?,
            exposure: cols.column("y_e", what)?,
        })
    }

    pub fn write_csv_file(&self, path: &Path) -> Result<()> {
        self.write_csv(BufWriter::new(File::create(path)?))
    }

    pub fn read_csv_file(path: &Path) -> Result<Self> {
        Self::read_csv(BufReader::new(File::open(path)?))
    }
}

impl GlmData {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn n_covariates(&self) -> usize {
        self.design.ncols()
    }

    pub fn likelihood(&self) -> Result<LikelihoodModel> {
        LikelihoodModel::bernoulli_logit(&self.y, &vec![1; self.len()])
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let p = self.n_covariates();
        let mut header = vec!["y".to_string()];
        header.extend((1..=p).map(|j| format!("x{j}")));
        w.write_record(&header)?;
        for i in 0..self.len() {
            let mut row = vec![self.y[i].to_string()];
            row.extend((0..p).map(|j| self.design[(i, j)].to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let what = "regression data";
        let cols = Columns::read(input, what)?;
        let y = cols.column("y", what)?;
        let p = cols.headers.iter().filter(|h| h.starts_with('x')).count();
        if p == 0 {
            return Err(Error::contract(format!("{what}: no covariate columns x1..xp")));
        }
        let idx = (1..=p)
            .map(|j| cols.index(&format!("x{j}"), what))
            .collect::<Result<Vec<usize>>>()?;
        let design = DMatrix::from_fn(y.len(), p, |i, j| cols.rows[i][idx[j]]);
        Ok(Self { design, y })
    }

    pub fn write_csv_file(&self, path: &Path) -> Result<()> {
        self.write_csv(BufWriter::new(File::create(path)?))
    }

    pub fn read_csv_file(path: &Path) -> Result<Self> {
        Self::read_csv(BufReader::new(File::open(path)?))
    }
}
