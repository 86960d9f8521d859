use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use tempfile::NamedTempFile;

use crate::error::{CliError, CliResult};

fn write_err(path: &Path, source: std::io::Error) -> CliError {
    CliError::Write { path: path.display().to_string(), source }
}

/// Write through a temp file in the target directory, then rename into place.
pub fn atomic_write(path: &Path, fill: impl FnOnce(&mut dyn Write) -> CliResult<()>) -> CliResult<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    std::fs::create_dir_all(&dir).map_err(|e| write_err(&dir, e))?;
    let mut tmp = NamedTempFile::new_in(&dir).map_err(|e| write_err(path, e))?;
    fill(tmp.as_file_mut())?;
    tmp.as_file_mut().flush().map_err(|e| write_err(path, e))?;
    tmp.persist(path).map_err(|e| write_err(path, e.error))?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    atomic_write(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value).map_err(|e| CliError::Input(e.to_string()))?;
        writeln!(w).map_err(|e| write_err(path, e))
    })
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    atomic_write(path, |w| w.write_all(text.as_bytes()).map_err(|e| write_err(path, e)))
}

/// `dir/stem.<suffix>` next to `path`.
pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "out".into());
    path.with_file_name(format!("{stem}.{suffix}"))
}

fn file_name(path: &Path) -> String {
    path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Plot of `J` and `|δJ|` against time from a diagnostics CSV.
pub fn gnuplot_flow(csv: &Path) -> String {
    let f = file_name(csv);
    format!(
        "set datafile separator ','\n\
         set key autotitle columnhead\n\
         set xlabel 't'\n\
         set multiplot layout 2,1\n\
         plot '{f}' using 't':'J' with lines\n\
         set logscale y\n\
         plot '{f}' using 't':'deltaJ' with lines\n\
         unset multiplot\n\
         pause -1\n"
    )
}

/// `ln λ_i` against time from a long-format trajectory CSV with `bubbles` rows per step.
pub fn gnuplot_shadow(csv: &Path, bubbles: usize) -> String {
    let f = file_name(csv);
    let curves: Vec<String> = (0..bubbles)
        .map(|i| format!("'{f}' using (column('i') == {i} ? column('t') : 1/0):(log(column('lambda'))) with lines title 'bubble {i}'"))
        .collect();
    format!(
        "set datafile separator ','\n\
         set xlabel 't'\n\
         set ylabel 'ln lambda'\n\
         plot {}\n\
         pause -1\n",
        curves.join(", \\\n     ")
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atomic_write_replaces_whole_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sub").join("x.json");
        write_json(&p, &serde_json::json!({"a": 1})).unwrap();
        write_json(&p, &serde_json::json!({"b": 2})).unwrap();
        let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&p).unwrap()).unwrap();
        assert_eq!(v, serde_json::json!({"b": 2}));
        assert_eq!(std::fs::read_dir(p.parent().unwrap()).unwrap().count(), 1);
    }

    #[test]
    fn failed_fill_leaves_no_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("y.csv");
        let r = atomic_write(&p, |_| Err(CliError::Numerical("stop".into())));
        assert!(r.is_err());
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
    }

    #[test]
    fn siblings_share_the_directory() {
        assert_eq!(sibling(Path::new("a/b/diag.csv"), "gp"), PathBuf::from("a/b/diag.gp"));
        assert!(gnuplot_shadow(Path::new("a/t.csv"), 2).contains("bubble 1"));
    }
}
