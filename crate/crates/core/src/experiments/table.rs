use serde::{Deserialize, Serialize};

/// Named numeric columns, written as CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(headers: &[&str]) -> Self {
        Self { headers: headers.iter().map(|h| h.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.headers.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.headers).expect("in-memory write");
        for row in &self.rows {
            w.write_record(row.iter().map(|x| format!("{x:e}"))).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
    }

    /// `(t, ccdf, stderr)` on a geometric grid.
    pub fn ccdf(c: &crate::estimators::EmpiricalCcdf, points: usize) -> Self {
        let mut t = Self::new(&["t", "ccdf", "stderr"]);
        for (x, p, s) in c.log_grid(points) {
            t.push(vec![x, p, s]);
        }
        t
    }
}
