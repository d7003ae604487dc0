//! Plot-ready CSV records.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

pub trait Record {
    const HEADER: &'static str;
    fn write_record<W: Write>(&self, out: &mut W) -> std::io::Result<()>;
}

pub fn write_rows<R: Record, W: Write>(rows: &[R], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{}", R::HEADER)?;
    for r in rows {
        r.write_record(&mut out)?;
    }
    out.flush()
}

pub fn write_file<R: Record>(rows: &[R], path: &Path) -> std::io::Result<()> {
    write_rows(rows, BufWriter::new(File::create(path)?))
}

#[derive(Clone, Debug, PartialEq)]
pub struct TradeoffRow {
    /// `ϑ_th`, `ζ_th` or `η`.
    pub threshold: f64,
    pub method: &'static str,
    pub r_s: f64,
    pub r_c: f64,
    pub feasible_frac: f64,
}

impl Record for TradeoffRow {
    const HEADER: &'static str = "threshold,method,R_s,R_c,feasible_frac";

    fn write_record<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(
            out,
            "{},{},{:.8},{:.8},{:.6}",
            self.threshold, self.method, self.r_s, self.r_c, self.feasible_frac
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RuntimeRow {
    pub method: &'static str,
    pub n_users: usize,
    /// Transmit array as `rows x cols`.
    pub mt_config: String,
    pub mean_seconds: f64,
    pub std_seconds: f64,
}

impl Record for RuntimeRow {
    const HEADER: &'static str = "method,n_users,mt_config,mean_seconds,std_seconds";

    fn write_record<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(
            out,
            "{},{},{},{:.9},{:.9}",
            self.method, self.n_users, self.mt_config, self.mean_seconds, self.std_seconds
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EstimationRow {
    pub users: usize,
    pub tau_p: usize,
    pub avg_error_norm: f64,
}

impl Record for EstimationRow {
    const HEADER: &'static str = "K,tau_p,avg_error_norm";

    fn write_record<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "{},{},{:.10}", self.users, self.tau_p, self.avg_error_norm)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CsiRow {
    pub chi: f64,
    pub rician: f64,
    pub r_c: f64,
}

impl Record for CsiRow {
    const HEADER: &'static str = "chi,rician,R_c";

    fn write_record<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "{},{},{:.8}", self.chi, self.rician, self.r_c)
    }
}

/// One design point of the feasibility table.
#[derive(Clone, Debug, PartialEq)]
pub struct FeasibilityRow {
    pub design_point: String,
    pub feasibility_rate: f64,
    pub avg_violation: f64,
    pub worst_violation: f64,
}

impl Record for FeasibilityRow {
    const HEADER: &'static str = "design_point,feasibility_rate,avg_violation,worst_violation";

    fn write_record<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(
            out,
            "{},{:.6},{:.8},{:.8}",
            self.design_point, self.feasibility_rate, self.avg_violation, self.worst_violation
        )
    }
}

/// Per-sample rates and constraint status.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleRow {
    pub sample: usize,
    pub r_s: f64,
    pub r_c: f64,
    pub feasible: bool,
    pub mean_violation: f64,
    pub max_violation: f64,
}

impl Record for SampleRow {
    const HEADER: &'static str = "sample,R_s,R_c,feasible,mean_violation,max_violation";

    fn write_record<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(
            out,
            "{},{:.8},{:.8},{},{:.8},{:.8}",
            self.sample,
            self.r_s,
            self.r_c,
            u8::from(self.feasible),
            self.mean_violation,
            self.max_violation
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tradeoff_rows_follow_the_header() {
        let rows = [TradeoffRow {
            threshold: 0.5,
            method: "stcib",
            r_s: 1.25,
            r_c: 3.0,
            feasible_frac: 0.98,
        }];
        let mut out = Vec::new();
        write_rows(&rows, &mut out).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "threshold,method,R_s,R_c,feasible_frac\n0.5,stcib,1.25000000,3.00000000,0.980000\n"
        );
    }
}
