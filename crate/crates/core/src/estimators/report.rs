use std::fmt::Write;

use serde::Serialize;

/// Fixed column order of every estimator table.
pub const CSV_HEADER: &str = "n,beta,observable,value,stderr,replicates,seed";

/// One estimator output line.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Row {
    pub n: u32,
    pub beta: f64,
    pub observable: String,
    pub value: f64,
    pub stderr: f64,
    pub replicates: u64,
    pub seed: u64,
}

impl Row {
    pub fn to_csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.n,
            float(self.beta),
            self.observable,
            float(self.value),
            float(self.stderr),
            self.replicates,
            self.seed
        )
    }
}

/// Rows of `n,beta,observable,value,stderr,replicates,seed`; floats carry
/// 17 significant digits.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CsvTable {
    rows: Vec<Row>,
}

impl CsvTable {
    pub fn new() -> Self {
        Self::default()
    }

    #[allow(clippy::too_many_arguments)]
    pub fn row(
        &mut self,
        n: u32,
        beta: f64,
        observable: &str,
        value: f64,
        stderr: f64,
        replicates: u64,
        seed: u64,
    ) {
        self.rows.push(Row {
            n,
            beta,
            observable: observable.to_string(),
            value,
            stderr,
            replicates,
            seed,
        });
    }

    pub fn extend(&mut self, other: &CsvTable) {
        self.rows.extend_from_slice(&other.rows);
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows(&self) -> &[Row] {
        &self.rows
    }

    pub fn render(&self) -> String {
        let mut out = format!("{CSV_HEADER}\n");
        for r in &self.rows {
            let _ = writeln!(out, "{}", r.to_csv_line());
        }
        out
    }
}

/// Scientific notation with 17 significant digits.
pub fn float(x: f64) -> String {
    format!("{x:.16e}")
}
