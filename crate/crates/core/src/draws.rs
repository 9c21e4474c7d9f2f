//! Posterior draws with per-draw sampler statistics, and their CSV form.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::sampler::DrawStats;

/// Statistic columns, in file order, after `chain__` and `draw__`.
pub const STAT_COLUMNS: [&str; 6] = [
    "accept_stat__",
    "treedepth__",
    "n_leapfrog__",
    "stepsize__",
    "divergent__",
    "energy__",
];

/// Rectangular table of draws: one row per (chain, draw).
#[derive(Debug, Clone, PartialEq)]
pub struct DrawsTable {
    pub names: Vec<String>,
    pub chain: Vec<usize>,
    pub draw: Vec<usize>,
    /// Rows are draws, columns follow `names`.
    pub values: DMatrix<f64>,
    pub stats: Vec<DrawStats>,
}

impl DrawsTable {
    pub fn new(
        names: Vec<String>,
        chain: Vec<usize>,
        draw: Vec<usize>,
        values: DMatrix<f64>,
        stats: Vec<DrawStats>,
    ) -> Result<Self> {
        let rows = values.nrows();
        if names.len() != values.ncols() {
            return Err(Error::contract(format!(
                "{} names for {} columns",
                names.len(),
                values.ncols()
            )));
        }
        if chain.len() != rows || draw.len() != rows || stats.len() != rows {
            return Err(Error::contract("chain, draw and stats must have one entry per row"));
        }
        let mut seen = std::collections::HashSet::new();
        for n in &names {
            if !seen.insert(n.as_str()) {
                return Err(Error::contract(format!("duplicate column name `{n}`")));
            }
            if n.ends_with("__") {
                return Err(Error::contract(format!("column name `{n}` is reserved")));
            }
        }
        Ok(Self {
            names,
            chain,
            draw,
            values,
            stats,
        })
    }

    pub fn rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        self.column_index(name)
            .map(|j| self.values.column(j).iter().copied().collect())
    }

    pub fn n_chains(&self) -> usize {
        let mut ids: Vec<usize> = self.chain.clone();
        ids.sort_unstable();
        ids.dedup();
        ids.len()
    }

    /// Draws of column `j` split by chain, chains in ascending id order.
    pub fn by_chain(&self, j: usize) -> Vec<Vec<f64>> {
        let mut ids: Vec<usize> = self.chain.clone();
        ids.sort_unstable();
        ids.dedup();
        ids.iter()
            .map(|&c| {
                (0..self.rows())
                    .filter(|&r| self.chain[r] == c)
                    .map(|r| self.values[(r, j)])
                    .collect()
            })
            .collect()
    }

    /// Divergent transitions per chain, chains in ascending id order.
    pub fn divergences_per_chain(&self) -> Vec<usize> {
        let mut ids: Vec<usize> = self.chain.clone();
        ids.sort_unstable();
        ids.dedup();
        ids.iter()
            .map(|&c| {
                (0..self.rows())
                    .filter(|&r| self.chain[r] == c && self.stats[r].divergent)
                    .count()
            })
            .collect()
    }

    /// Stacks tables with identical columns.
    pub fn concat(tables: &[DrawsTable]) -> Result<Self> {
        let Some(first) = tables.first() else {
            return Err(Error::contract("nothing to concatenate"));
        };
        if tables.iter().any(|t| t.names != first.names) {
            return Err(Error::contract("tables have different columns"));
        }
        let rows: usize = tables.iter().map(|t| t.rows()).sum();
        let cols = first.names.len();
        let mut values = DMatrix::zeros(rows, cols);
        let mut r0 = 0;
        for t in tables {
            values.rows_mut(r0, t.rows()).copy_from(&t.values);
            r0 += t.rows();
        }
        Self::new(
            first.names.clone(),
            tables.iter().flat_map(|t| t.chain.iter().copied()).collect(),
            tables.iter().flat_map(|t| t.draw.iter().copied()).collect(),
            values,
            tables.iter().flat_map(|t| t.stats.iter().copied()).collect(),
        )
    }

    /// Writes the table as CSV: `chain__, draw__`, the statistic columns,
    /// then one column per parameter. Floats use the shortest representation
    /// that parses back to the same value, so write → read → write is
    /// byte-identical.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<&str> = vec!["chain__", "draw__"];
        header.extend(STAT_COLUMNS);
        header.extend(self.names.iter().map(String::as_str));
        w.write_record(&header)?;
        for r in 0..self.rows() {
            let s = &self.stats[r];
            let mut rec = vec![
                self.chain[r].to_string(),
                self.draw[r].to_string(),
                s.accept_stat.to_string(),
                s.tree_depth.to_string(),
                s.n_leapfrog.to_string(),
                s.stepsize.to_string(),
                u8::from(s.divergent).to_string(),
                s.energy.to_string(),
            ];
            rec.extend(self.values.row(r).iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(input);
        let header: Vec<String> = rd.headers()?.iter().map(str::to_string).collect();
        let fixed = 2 + STAT_COLUMNS.len();
        let expected: Vec<&str> = ["chain__", "draw__"].into_iter().chain(STAT_COLUMNS).collect();
        if header.len() < fixed || header[..fixed] != expected[..] {
            return Err(Error::contract(format!(
                "draws CSV must start with columns {}",
                expected.join(",")
            )));
        }
        let names = header[fixed..].to_vec();
        let mut chain = Vec::new();
        let mut draw = Vec::new();
        let mut stats = Vec::new();
        let mut flat = Vec::new();
        for (line, rec) in rd.records().enumerate() {
            let rec = rec?;
            let field = |i: usize| -> Result<&str> {
                rec.get(i)
                    .ok_or_else(|| Error::contract(format!("row {} is short", line + 1)))
            };
            let num = |i: usize| -> Result<f64> {
                let s = field(i)?;
                s.parse::<f64>()
                    .map_err(|_| Error::contract(format!("row {}: `{s}` is not a number", line + 1)))
            };
            let int = |i: usize| -> Result<usize> {
                let s = field(i)?;
                s.parse::<usize>()
                    .map_err(|_| Error::contract(format!("row {}: `{s}` is not an integer", line + 1)))
            };
            chain.push(int(0)?);
            draw.push(int(1)?);
            stats.push(DrawStats {
                accept_stat: num(2)?,
                tree_depth: int(3)?,
                n_leapfrog: int(4)?,
                stepsize: num(5)?,
                divergent: int(6)? != 0,
                energy: num(7)?,
            });
            for j in 0..names.len() {
                flat.push(num(fixed + j)?);
            }
        }
        let rows = chain.len();
        let values = DMatrix::from_row_slice(rows, names.len(), &flat);
        Self::new(names, chain, draw, values, stats)
    }

    pub fn write_csv_file(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    pub fn read_csv_file(path: &Path) -> Result<Self> {
        Self::read_csv(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}
