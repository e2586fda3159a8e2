//! Run directory layout: `config.resolved`, `manifest.json`, `digests.bin`,
//! one CSV per table and a gnuplot script per figure.

use std::path::{Path, PathBuf};

use exchain_core::experiments::Table;
use exchain_core::harness::{write_digests, RunManifest};

pub const CONFIG_FILE: &str = "config.resolved";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const DIGEST_FILE: &str = "digests.bin";

pub struct RunDir {
    pub path: PathBuf,
}

impl RunDir {
    pub fn create(path: &Path) -> std::io::Result<Self> {
        std::fs::create_dir_all(path)?;
        Ok(Self { path: path.to_path_buf() })
    }

    pub fn write_config(&self, text: &str) -> std::io::Result<()> {
        std::fs::write(self.path.join(CONFIG_FILE), text)
    }

    pub fn write_csv(&self, name: &str, table: &Table) -> std::io::Result<()> {
        std::fs::write(self.path.join(format!("{name}.csv")), table.to_csv())
    }

    /// A gnuplot script drawing columns `x:y` of each listed CSV.
    pub fn write_plot(&self, name: &str, plot: &Plot) -> std::io::Result<()> {
        std::fs::write(self.path.join(format!("{name}.gp")), plot.script(name))
    }

    pub fn write_manifest(&self, manifest: &RunManifest) -> std::io::Result<()> {
        let json = serde_json::to_string_pretty(manifest).map_err(std::io::Error::other)?;
        std::fs::write(self.path.join(MANIFEST_FILE), json)?;
        write_digests(&self.path.join(DIGEST_FILE), &manifest.replica_digests)
    }
}

pub struct Plot {
    pub title: &'static str,
    pub xlabel: &'static str,
    pub ylabel: &'static str,
    pub logx: bool,
    pub logy: bool,
    /// `(csv stem, x column, y column, style)`.
    pub series: Vec<(String, usize, usize, &'static str)>,
}

impl Plot {
    fn script(&self, name: &str) -> String {
        let mut s = String::new();
        s.push_str("set datafile separator ','\nset key autotitle columnhead\n");
        s.push_str(&format!("set terminal pngcairo size 800,600\nset output '{name}.png'\n"));
        s.push_str(&format!("set title '{}'\nset xlabel '{}'\nset ylabel '{}'\n", self.title, self.xlabel, self.ylabel));
        if self.logx {
            s.push_str("set logscale x\n");
        }
        if self.logy {
            s.push_str("set logscale y\n");
        }
        let parts: Vec<String> = self.series.iter().map(|(csv, x, y, style)| format!("'{csv}.csv' using {x}:{y} with {style}")).collect();
        s.push_str(&format!("plot {}\n", parts.join(", \\\n     ")));
        s
    }
}
