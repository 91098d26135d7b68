//! Versioned CSV files and the emitted plotting scripts.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::Result;

/// Bumped whenever a column is added, removed or reinterpreted.
pub const SCHEMA_VERSION: u32 = 1;

/// CSV file whose first line is `# holovr <name> schema v<N>`.
pub struct CsvSink {
    path: PathBuf,
    width: usize,
    w: csv::Writer<BufWriter<File>>,
}

impl CsvSink {
    pub fn create(dir: &Path, name: &str, columns: &[&str]) -> Result<Self> {
        let path = dir.join(format!("{name}.csv"));
        let mut f = BufWriter::new(File::create(&path)?);
        writeln!(f, "# holovr {name} schema v{SCHEMA_VERSION}")?;
        let mut w = csv::Writer::from_writer(f);
        w.write_record(columns)?;
        Ok(Self { path, width: columns.len(), w })
    }

    pub fn row(&mut self, fields: &[String]) -> Result<()> {
        assert_eq!(fields.len(), self.width, "row width differs from header in {}", self.path.display());
        self.w.write_record(fields)?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<PathBuf> {
        self.w.flush()?;
        Ok(self.path)
    }
}

/// Shorthand for building a row of mixed values.
#[macro_export]
macro_rules! csv_row {
    ($($v:expr),* $(,)?) => {
        [$($v.to_string()),*]
    };
}

/// Writes a matplotlib script that reads the suite's CSVs. It is written
/// only, never executed.
pub fn write_plot_script(dir: &Path, suite: &str, plots: &[PlotSpec]) -> Result<PathBuf> {
    let path = dir.join(format!("plot_{suite}.py"));
    let mut f = BufWriter::new(File::create(&path)?);
    writeln!(f, "# Plots for the {suite} suite. Run from the output directory.")?;
    writeln!(f, "import pandas as pd")?;
    writeln!(f, "import matplotlib.pyplot as plt\n")?;
    for (k, p) in plots.iter().enumerate() {
        writeln!(f, "df = pd.read_csv('{}.csv', comment='#')", p.file)?;
        if let Some(q) = p.query {
            writeln!(f, "df = df.query(\"{q}\")")?;
        }
        writeln!(f, "fig, ax = plt.subplots()")?;
        writeln!(
            f,
            "for key, g in df.groupby({}):\n    g = g.groupby('{x}', as_index=False)['{y}'].mean()\n    ax.plot(g['{x}'], g['{y}'], marker='o', label=str(key))",
            py_list(p.group),
            x = p.x,
            y = p.y
        )?;
        writeln!(f, "ax.set_xlabel('{}')\nax.set_ylabel('{}')", p.x, p.y)?;
        writeln!(f, "ax.legend(fontsize='small')\nfig.savefig('{suite}_{k}_{}.png', dpi=150)\n", p.y)?;
    }
    f.flush()?;
    Ok(path)
}

fn py_list(cols: &[&str]) -> String {
    let inner: Vec<String> = cols.iter().map(|c| format!("'{c}'")).collect();
    format!("[{}]", inner.join(", "))
}

/// One line chart: `y` against `x`, one curve per `group` combination.
pub struct PlotSpec {
    pub file: &'static str,
    pub x: &'static str,
    pub y: &'static str,
    pub group: &'static [&'static str],
    pub query: Option<&'static str>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_comment_then_columns() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = CsvSink::create(dir.path(), "t", &["a", "b"]).unwrap();
        s.row(&csv_row![1, 0.5]).unwrap();
        let p = s.finish().unwrap();
        let text = std::fs::read_to_string(p).unwrap();
        assert_eq!(text, format!("# holovr t schema v{SCHEMA_VERSION}\na,b\n1,0.5\n"));
    }

    #[test]
    fn plot_script_mentions_files() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_plot_script(
            dir.path(),
            "demo",
            &[PlotSpec { file: "demo_data", x: "delta", y: "delay", group: &["q_max"], query: None }],
        )
        .unwrap();
        let text = std::fs::read_to_string(p).unwrap();
        assert!(text.contains("pd.read_csv('demo_data.csv', comment='#')"));
        assert!(text.contains("groupby(['q_max'])"));
    }
}
