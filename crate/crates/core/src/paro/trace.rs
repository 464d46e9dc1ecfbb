use std::fmt::Write as _;

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub iteration: usize,
    pub dofs: usize,
    pub eigenvalues: Vec<f64>,
    pub total_energy: Option<f64>,
    pub eta_total: f64,
    pub t_meshgen: f64,
    pub t_source: f64,
    pub t_project: f64,
}

/// Per-iteration convergence record.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    orbitals: usize,
    kohn_sham: bool,
    rows: Vec<TraceRow>,
}

impl Trace {
    pub fn new(orbitals: usize, kohn_sham: bool) -> Self {
        Self { orbitals, kohn_sham, rows: Vec::new() }
    }

    pub fn push(&mut self, row: TraceRow) {
        self.rows.push(row);
    }

    pub fn rows(&self) -> &[TraceRow] {
        &self.rows
    }

    pub fn last(&self) -> Option<&TraceRow> {
        self.rows.last()
    }

    pub fn header(&self) -> String {
        let mut h = String::from("iter,dofs");
        for i in 1..=self.orbitals {
            let _ = write!(h, ",lambda_{i}");
        }
        if self.kohn_sham {
            h.push_str(",e_tot");
        }
        h.push_str(",eta_total,t_meshgen,t_source,t_project");
        h
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.header();
        out.push('\n');
        for r in &self.rows {
            let _ = write!(out, "{},{}", r.iteration, r.dofs);
            for l in r.eigenvalues.iter().take(self.orbitals) {
                let _ = write!(out, ",{l:.15e}");
            }
            if self.kohn_sham {
                let _ = write!(out, ",{:.15e}", r.total_energy.unwrap_or(f64::NAN));
            }
            let _ = writeln!(out, ",{:.6e},{:.6e},{:.6e},{:.6e}", r.eta_total, r.t_meshgen, r.t_source, r.t_project);
        }
        out
    }
}
