//! CSV output: comma separated, `.` decimals, LF line endings, numbers with
//! 17 significant digits, `#`-prefixed trailer lines.

use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::experiments::{ConvergenceReport, ERROR_NORM};
use crate::grid::{Field, Grid1D};
use crate::models::{slow_manifold_c, FullState, RateConstants, ReducedState};

/// A parsed or to-be-written table.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    /// Comment lines without the leading `#` and one optional space.
    pub trailer: Vec<String>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|h| h.to_string()).collect(),
            ..Self::default()
        }
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[j]).collect())
    }

    pub fn write<W: Write>(&self, out: W) -> Result<()> {
        let mut w = BufWriter::new(out);
        writeln!(w, "{}", self.header.join(","))?;
        for row in &self.rows {
            if row.len() != self.header.len() {
                return Err(Error::DimensionMismatch { expected: self.header.len(), found: row.len() });
            }
            let cells: Vec<String> = row.iter().map(|v| format_number(*v)).collect();
            writeln!(w, "{}", cells.join(","))?;
        }
        for line in &self.trailer {
            writeln!(w, "# {line}")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_file(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            if !dir.as_os_str().is_empty() {
                fs::create_dir_all(dir)?;
            }
        }
        self.write(fs::File::create(path)?)
    }

    pub fn read<R: Read>(mut input: R) -> Result<Self> {
        let mut text = String::new();
        input.read_to_string(&mut text)?;
        let trailer = text
            .lines()
            .filter_map(|l| l.strip_prefix('#'))
            .map(|l| l.strip_prefix(' ').unwrap_or(l).to_string())
            .collect();
        let mut reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_reader(text.as_bytes());
        let header = reader.headers()?.iter().map(str::to_string).collect();
        let mut rows = Vec::new();
        for rec in reader.records() {
            let rec = rec?;
            let row = rec
                .iter()
                .map(|c| {
                    c.parse::<f64>()
                        .map_err(|e| Error::Config(format!("bad number `{c}`: {e}")))
                })
                .collect::<Result<Vec<f64>>>()?;
            rows.push(row);
        }
        Ok(Self { header, rows, trailer })
    }

    pub fn read_file(path: &Path) -> Result<Self> {
        Self::read(fs::File::open(path)?)
    }
}

/// Scientific notation with 17 significant digits; round-trips exactly.
pub fn format_number(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else {
        format!("{v:.16e}")
    }
}

/// Cell profiles of a spatial state. Reduced states get their `c*` column
/// from the slow manifold.
pub enum Profile<'a> {
    Full(&'a FullState),
    Reduced(&'a ReducedState, &'a RateConstants),
    SlowComplex { s: &'a Field, e: &'a Field, p: &'a Field },
}

pub fn profile_table(grid: &Grid1D, profile: Profile<'_>) -> Result<Table> {
    let x = grid.centers();
    let (mut table, cols): (Table, Vec<Vec<f64>>) = match profile {
        Profile::Full(st) => {
            let mut cols = vec![st.s.to_vec(), st.c_star.to_vec(), st.y_star.to_vec()];
            let mut header = vec!["x", "s", "c_star", "y_star"];
            if let Some(p) = &st.p {
                cols.push(p.to_vec());
                header.push("p");
            }
            (Table::new(&header), cols)
        }
        Profile::Reduced(st, rates) => {
            let c = slow_manifold_c(&st.s, &st.y_star, st.p.as_ref(), rates)?;
            let mut cols = vec![st.s.to_vec(), c.into_inner(), st.y_star.to_vec()];
            let mut header = vec!["x", "s", "c_star", "y_star"];
            if let Some(p) = &st.p {
                cols.push(p.to_vec());
                header.push("p");
            }
            (Table::new(&header), cols)
        }
        Profile::SlowComplex { s, e, p } => {
            (Table::new(&["x", "s", "e", "p"]), vec![s.to_vec(), e.to_vec(), p.to_vec()])
        }
    };
    for (a, xa) in x.iter().enumerate() {
        let mut row = vec![*xa];
        for c in &cols {
            if c.len() != x.len() {
                return Err(Error::DimensionMismatch { expected: x.len(), found: c.len() });
            }
            row.push(c[a]);
        }
        table.rows.push(row);
    }
    Ok(table)
}

pub fn convergence_table(report: &ConvergenceReport) -> Table {
    let rev = report.full.is_reversible();
    let mut header = vec!["epsilon", "err_s", "err_cstar", "err_ystar"];
    if rev {
        header.push("err_p");
    }
    let mut t = Table::new(&header);
    for r in &report.records {
        let mut row = vec![r.epsilon, r.err_s, r.err_cstar, r.err_ystar];
        if rev {
            row.push(r.err_p.unwrap_or(f64::NAN));
        }
        t.rows.push(row);
    }
    t.trailer.push(format!(
        "full={},reduced={},t_end={},error_norm={ERROR_NORM}",
        report.full,
        report.reduced,
        format_number(report.t_end)
    ));
    for r in report.records.iter().filter(|r| !r.ok()) {
        t.trailer.push(format!(
            "failed epsilon={}: {}",
            format_number(r.epsilon),
            r.failure.as_deref().unwrap_or("")
        ));
    }
    if report.records.iter().filter(|r| r.ok()).count() >= 2 {
        let slope = |s: Option<f64>| s.map_or("undefined".to_string(), format_number);
        let mut line = format!(
            "slope_s={},slope_cstar={},slope_ystar={}",
            slope(report.slope_s),
            slope(report.slope_cstar),
            slope(report.slope_ystar)
        );
        if rev {
            line.push_str(&format!(",slope_p={}", slope(report.slope_p)));
        }
        line.push_str(&format!(",slope_manifold={}", slope(report.slope_manifold)));
        t.trailer.push(line);
    }
    t
}

/// Raw and projected initial data side by side.
pub fn projection_table(
    grid: &Grid1D,
    raw: &FullState,
    projected: &ReducedState,
    c_star: &Field,
) -> Result<Table> {
    let rev = raw.p.is_some();
    let mut header = vec!["x", "s_raw", "c_star_raw", "y_star_raw"];
    if rev {
        header.push("p_raw");
    }
    header.extend(["s", "c_star", "y_star"]);
    if rev {
        header.push("p");
    }
    let mut t = Table::new(&header);
    for (a, x) in grid.centers().into_iter().enumerate() {
        let mut row = vec![x, raw.s[a], raw.c_star[a], raw.y_star[a]];
        if let Some(p) = &raw.p {
            row.push(p[a]);
        }
        row.extend([projected.s[a], c_star[a], projected.y_star[a]]);
        if let Some(p) = &projected.p {
            row.push(p[a]);
        }
        t.rows.push(row);
    }
    Ok(t)
}
