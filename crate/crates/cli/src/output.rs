//! Deterministic artifact emission: 17-significant-digit numbers, atomic
//! file replacement, no timestamps.

use std::fs;
use std::path::{Path, PathBuf};

use crate::CliError;

/// Round-trip-exact rendering for binary64 (17 significant digits).
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

/// Prints one stdout line; exits quietly when the reader has gone away
/// (e.g. output piped into `head`), instead of panicking on broken pipe.
pub fn emit(line: &str) {
    use std::io::Write;
    if writeln!(std::io::stdout(), "{line}").is_err() {
        std::process::exit(0);
    }
}

fn io_err(path: &Path, source: std::io::Error) -> CliError {
    CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes via a temp file in the same directory plus rename, so readers
/// never observe a partial file.
pub fn atomic_write(path: &Path, contents: &str) -> Result<(), CliError> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    if let Some(dir) = dir {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    let mut tmp: PathBuf = path.to_path_buf();
    let mut name = path
        .file_name()
        .ok_or_else(|| {
            io_err(
                path,
                std::io::Error::new(std::io::ErrorKind::InvalidInput, "path has no file name"),
            )
        })?
        .to_os_string();
    name.push(".tmp");
    tmp.set_file_name(name);
    fs::write(&tmp, contents).map_err(|e| io_err(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| io_err(path, e))?;
    Ok(())
}

/// CSV accumulator: header row up front, `\n` line endings, no quoting
/// (fields never contain commas).
pub struct Csv {
    body: String,
}

impl Csv {
    pub fn new(header: &str) -> Self {
        let mut body = String::with_capacity(4096);
        body.push_str(header);
        body.push('\n');
        Csv { body }
    }

    pub fn row(&mut self, fields: &[String]) {
        self.body.push_str(&fields.join(","));
        self.body.push('\n');
    }

    pub fn write(self, path: &Path) -> Result<(), CliError> {
        atomic_write(path, &self.body)?;
        emit(&format!("wrote {}", path.display()));
        Ok(())
    }
}

/// Gnuplot companion for sweep.csv: fitted rate against time step.
pub const DECAY_PLOT: &str = "\
# gnuplot script: decay-rate uniformity across time steps
set datafile separator \",\"
set logscale x
set xlabel \"dt\"
set ylabel \"fitted decay rate\"
set key off
set grid
set terminal svg size 640,480
set output \"decay.svg\"
plot \"sweep.csv\" skip 1 using 1:2 with linespoints pointtype 7
";
