//! Flat INI-style experiment configuration.
//!
//! Four sections, one level deep: `[model]`, `[run]`, `[certify]`,
//! `[output]`. Lines are `key = value`, full-line comments start with `#` or
//! `;`. Unknown sections, unknown keys, and duplicate keys are errors with
//! line numbers; values never span lines.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use viscostab::certification::GramianVariant;
use viscostab::SchemeId;

pub const DEFAULT_STEP_BUDGET: usize = 1_000_000;

#[derive(Debug, Clone)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl ConfigError {
    fn at(line: usize, message: impl Into<String>) -> Self {
        ConfigError {
            line: Some(line),
            message: message.into(),
        }
    }

    pub fn global(message: impl Into<String>) -> Self {
        ConfigError {
            line: None,
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(line) => write!(f, "line {line}: {}", self.message),
            None => write!(f, "{}", self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Wave,
    Beam,
}

#[derive(Debug, Clone)]
pub struct ModelSection {
    pub kind: ModelKind,
    pub n: usize,
    pub xi_p: usize,
    pub xi_q: usize,
    pub alpha: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Z0PolicyKind {
    /// Fixed profile `u(x) = sin(pi x / 2)`, `v = 0`.
    Smooth,
    HighestMode,
    RandomSeeded,
}

#[derive(Debug, Clone)]
pub struct RunSection {
    pub scheme: Option<SchemeId>,
    /// Time steps from `dt` (one entry) or `dt_list`.
    pub dts: Vec<f64>,
    pub dt_is_list: bool,
    pub t_final: Option<f64>,
    pub z0_policy: Z0PolicyKind,
    pub seed: u64,
    pub step_budget: usize,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            scheme: None,
            dts: Vec::new(),
            dt_is_list: false,
            t_final: None,
            z0_policy: Z0PolicyKind::Smooth,
            seed: 0,
            step_budget: DEFAULT_STEP_BUDGET,
        }
    }
}

impl RunSection {
    pub fn scheme(&self) -> Result<SchemeId, ConfigError> {
        self.scheme
            .ok_or_else(|| ConfigError::global("missing 'scheme' in [run]"))
    }

    pub fn t_final(&self) -> Result<f64, ConfigError> {
        self.t_final
            .ok_or_else(|| ConfigError::global("missing 't_final' in [run]"))
    }

    pub fn single_dt(&self) -> Result<f64, ConfigError> {
        if self.dt_is_list || self.dts.len() != 1 {
            return Err(ConfigError::global(
                "this command requires 'dt' in [run], not 'dt_list'",
            ));
        }
        Ok(self.dts[0])
    }

    pub fn dt_list(&self) -> Result<&[f64], ConfigError> {
        if self.dts.is_empty() {
            return Err(ConfigError::global(
                "missing 'dt' or 'dt_list' in [run]",
            ));
        }
        Ok(&self.dts)
    }
}

#[derive(Debug, Clone, Copy)]
pub enum HautusGrid {
    /// Grid derived from the model spectrum.
    Auto,
    Explicit {
        omega_min: f64,
        omega_max: f64,
        points: usize,
    },
}

#[derive(Debug, Clone, Default)]
pub struct CertifySection {
    pub hautus_grid: Option<HautusGrid>,
    pub beta_list: Option<Vec<f64>>,
    pub gramian_variants: Option<Vec<GramianVariant>>,
    pub t_final: Option<f64>,
    pub delta: Option<f64>,
}

impl CertifySection {
    pub fn any_enabled(&self) -> bool {
        self.hautus_grid.is_some()
            || self.beta_list.is_some()
            || self.gramian_variants.is_some()
    }
}

#[derive(Debug, Clone)]
pub struct OutputSection {
    pub directory: PathBuf,
    pub emit_plots: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            directory: PathBuf::from("out"),
            emit_plots: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub model: ModelSection,
    pub run: Option<RunSection>,
    pub certify: CertifySection,
    pub output: OutputSection,
}

impl ExperimentConfig {
    pub fn run(&self) -> Result<&RunSection, ConfigError> {
        self.run
            .as_ref()
            .ok_or_else(|| ConfigError::global("missing [run] section"))
    }
}

/// One parsed `key = value` entry, kept until its section is interpreted so
/// unknown keys can be reported with their line.
struct Entry {
    key: String,
    value: String,
    line: usize,
}

struct RawSection {
    name: String,
    line: usize,
    entries: Vec<Entry>,
}

fn split_sections(text: &str) -> Result<Vec<RawSection>, ConfigError> {
    let mut sections: Vec<RawSection> = Vec::new();
    for (idx, raw_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw_line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| ConfigError::at(line_no, "unterminated section header"))?
                .trim()
                .to_string();
            if !matches!(name.as_str(), "model" | "run" | "certify" | "output") {
                return Err(ConfigError::at(
                    line_no,
                    format!("unknown section [{name}]"),
                ));
            }
            if sections.iter().any(|s| s.name == name) {
                return Err(ConfigError::at(
                    line_no,
                    format!("duplicate section [{name}]"),
                ));
            }
            sections.push(RawSection {
                name,
                line: line_no,
                entries: Vec::new(),
            });
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            ConfigError::at(line_no, "expected 'key = value' or a section header")
        })?;
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        if key.is_empty() {
            return Err(ConfigError::at(line_no, "empty key"));
        }
        if value.is_empty() {
            return Err(ConfigError::at(line_no, format!("empty value for '{key}'")));
        }
        let section = sections.last_mut().ok_or_else(|| {
            ConfigError::at(line_no, "key before any section header")
        })?;
        if section.entries.iter().any(|e| e.key == key) {
            return Err(ConfigError::at(
                line_no,
                format!("duplicate key '{key}' in [{}]", section.name),
            ));
        }
        section.entries.push(Entry {
            key,
            value,
            line: line_no,
        });
    }
    Ok(sections)
}

/// Removes and returns the entry for `key`, so leftovers flag unknown keys.
fn take(entries: &mut Vec<Entry>, key: &str) -> Option<Entry> {
    entries
        .iter()
        .position(|e| e.key == key)
        .map(|i| entries.remove(i))
}

fn reject_leftovers(section: &str, entries: &[Entry]) -> Result<(), ConfigError> {
    if let Some(e) = entries.first() {
        return Err(ConfigError::at(
            e.line,
            format!("unknown key '{}' in [{section}]", e.key),
        ));
    }
    Ok(())
}

fn parse_f64(e: &Entry) -> Result<f64, ConfigError> {
    let v: f64 = e
        .value
        .parse()
        .map_err(|_| ConfigError::at(e.line, format!("'{}' is not a number", e.key)))?;
    if !v.is_finite() {
        return Err(ConfigError::at(e.line, format!("'{}' must be finite", e.key)));
    }
    Ok(v)
}

fn parse_usize(e: &Entry) -> Result<usize, ConfigError> {
    e.value
        .parse()
        .map_err(|_| ConfigError::at(e.line, format!("'{}' is not a nonnegative integer", e.key)))
}

fn parse_u64(e: &Entry) -> Result<u64, ConfigError> {
    e.value
        .parse()
        .map_err(|_| ConfigError::at(e.line, format!("'{}' is not a nonnegative integer", e.key)))
}

fn parse_bool(e: &Entry) -> Result<bool, ConfigError> {
    match e.value.to_ascii_lowercase().as_str() {
        "true" | "on" | "yes" | "1" => Ok(true),
        "false" | "off" | "no" | "0" => Ok(false),
        _ => Err(ConfigError::at(
            e.line,
            format!("'{}' must be a boolean (true/false/on/off)", e.key),
        )),
    }
}

fn parse_f64_list(e: &Entry) -> Result<Vec<f64>, ConfigError> {
    let mut out = Vec::new();
    for piece in e.value.split(',') {
        let piece = piece.trim();
        if piece.is_empty() {
            return Err(ConfigError::at(e.line, format!("empty entry in '{}'", e.key)));
        }
        let v: f64 = piece.parse().map_err(|_| {
            ConfigError::at(e.line, format!("'{piece}' in '{}' is not a number", e.key))
        })?;
        if !v.is_finite() {
            return Err(ConfigError::at(e.line, format!("'{}' must be finite", e.key)));
        }
        out.push(v);
    }
    Ok(out)
}

fn gcd(mut a: usize, mut b: usize) -> usize {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

fn parse_xi(e: &Entry) -> Result<(usize, usize), ConfigError> {
    let bad = || ConfigError::at(e.line, "xi must be a reduced fraction p/q with 0 < p < q");
    let (p, q) = e.value.split_once('/').ok_or_else(bad)?;
    let p: usize = p.trim().parse().map_err(|_| bad())?;
    let q: usize = q.trim().parse().map_err(|_| bad())?;
    if p == 0 || p >= q {
        return Err(bad());
    }
    if gcd(p, q) != 1 {
        return Err(ConfigError::at(
            e.line,
            format!("xi = {p}/{q} is not reduced (gcd {})", gcd(p, q)),
        ));
    }
    Ok((p, q))
}

fn parse_model(mut entries: Vec<Entry>, header_line: usize) -> Result<ModelSection, ConfigError> {
    let missing = |key: &str| {
        ConfigError::at(header_line, format!("missing '{key}' in [model]"))
    };
    let kind_entry = take(&mut entries, "kind").ok_or_else(|| missing("kind"))?;
    let kind = match kind_entry.value.as_str() {
        "wave" => ModelKind::Wave,
        "beam" => ModelKind::Beam,
        other => {
            return Err(ConfigError::at(
                kind_entry.line,
                format!("unknown model kind '{other}' (expected wave or beam)"),
            ))
        }
    };
    let n = parse_usize(&take(&mut entries, "n").ok_or_else(|| missing("n"))?)?;
    let (xi_p, xi_q) = parse_xi(&take(&mut entries, "xi").ok_or_else(|| missing("xi"))?)?;
    let alpha_entry = take(&mut entries, "alpha").ok_or_else(|| missing("alpha"))?;
    let alpha = parse_f64(&alpha_entry)?;
    if alpha < 0.0 {
        return Err(ConfigError::at(alpha_entry.line, "alpha must be >= 0"));
    }
    reject_leftovers("model", &entries)?;
    Ok(ModelSection {
        kind,
        n,
        xi_p,
        xi_q,
        alpha,
    })
}

fn parse_run(mut entries: Vec<Entry>) -> Result<RunSection, ConfigError> {
    let mut run = RunSection::default();
    if let Some(e) = take(&mut entries, "scheme") {
        let scheme = SchemeId::from_str(&e.value).map_err(|err| {
            ConfigError::at(e.line, err.to_string())
        })?;
        run.scheme = Some(scheme);
    }
    let dt = take(&mut entries, "dt");
    let dt_list = take(&mut entries, "dt_list");
    match (dt, dt_list) {
        (Some(e), None) => {
            let v = parse_f64(&e)?;
            if v <= 0.0 {
                return Err(ConfigError::at(e.line, "dt must be > 0"));
            }
            run.dts = vec![v];
            run.dt_is_list = false;
        }
        (None, Some(e)) => {
            let list = parse_f64_list(&e)?;
            if list.iter().any(|v| *v <= 0.0) {
                return Err(ConfigError::at(e.line, "dt_list entries must be > 0"));
            }
            let mut sorted = list.clone();
            sorted.sort_by(f64::total_cmp);
            sorted.dedup();
            if sorted.len() != list.len() {
                return Err(ConfigError::at(e.line, "dt_list entries must be distinct"));
            }
            run.dts = list;
            run.dt_is_list = true;
        }
        (Some(e), Some(_)) => {
            return Err(ConfigError::at(
                e.line,
                "give either 'dt' or 'dt_list', not both",
            ));
        }
        (None, None) => {}
    }
    if let Some(e) = take(&mut entries, "t_final") {
        let v = parse_f64(&e)?;
        if v <= 0.0 {
            return Err(ConfigError::at(e.line, "t_final must be > 0"));
        }
        run.t_final = Some(v);
    }
    if let Some(e) = take(&mut entries, "z0_policy") {
        run.z0_policy = match e.value.replace('-', "_").as_str() {
            "smooth" | "fixed_smooth" => Z0PolicyKind::Smooth,
            "highest_mode" => Z0PolicyKind::HighestMode,
            "random" | "random_seeded" => Z0PolicyKind::RandomSeeded,
            other => {
                return Err(ConfigError::at(
                    e.line,
                    format!(
                        "unknown z0_policy '{other}' (expected smooth, highest-mode, or random-seeded)"
                    ),
                ))
            }
        };
    }
    if let Some(e) = take(&mut entries, "seed") {
        run.seed = parse_u64(&e)?;
    }
    if let Some(e) = take(&mut entries, "step_budget") {
        let v = parse_usize(&e)?;
        if v == 0 {
            return Err(ConfigError::at(e.line, "step_budget must be >= 1"));
        }
        run.step_budget = v;
    }
    reject_leftovers("run", &entries)?;
    Ok(run)
}

fn parse_certify(mut entries: Vec<Entry>) -> Result<CertifySection, ConfigError> {
    let mut certify = CertifySection::default();
    if let Some(e) = take(&mut entries, "hautus_grid") {
        certify.hautus_grid = Some(if e.value == "auto" {
            HautusGrid::Auto
        } else {
            let parts = parse_f64_list(&e)?;
            if parts.len() != 3 {
                return Err(ConfigError::at(
                    e.line,
                    "hautus_grid must be 'auto' or 'omega_min, omega_max, points'",
                ));
            }
            let points = parts[2];
            if points.fract() != 0.0 || points < 2.0 {
                return Err(ConfigError::at(
                    e.line,
                    "hautus_grid points must be an integer >= 2",
                ));
            }
            if parts[0] >= parts[1] {
                return Err(ConfigError::at(
                    e.line,
                    "hautus_grid needs omega_min < omega_max",
                ));
            }
            HautusGrid::Explicit {
                omega_min: parts[0],
                omega_max: parts[1],
                points: points as usize,
            }
        });
    }
    if let Some(e) = take(&mut entries, "beta_list") {
        let list = parse_f64_list(&e)?;
        if list.iter().any(|b| *b <= 0.0) {
            return Err(ConfigError::at(e.line, "beta_list entries must be > 0"));
        }
        certify.beta_list = Some(list);
    }
    if let Some(e) = take(&mut entries, "gramian_variants") {
        let mut variants = Vec::new();
        for piece in e.value.split(',') {
            let name = piece.trim().replace('-', "_");
            let variant = match name.as_str() {
                "continuous" => GramianVariant::Continuous,
                "discrete_viscous" => GramianVariant::DiscreteViscous,
                "filtered" => GramianVariant::Filtered,
                other => {
                    return Err(ConfigError::at(
                        e.line,
                        format!(
                            "unknown gramian variant '{other}' (expected continuous, discrete_viscous, or filtered)"
                        ),
                    ))
                }
            };
            if variants.contains(&variant) {
                return Err(ConfigError::at(
                    e.line,
                    format!("duplicate gramian variant '{name}'"),
                ));
            }
            variants.push(variant);
        }
        certify.gramian_variants = Some(variants);
    }
    if let Some(e) = take(&mut entries, "t_final") {
        let v = parse_f64(&e)?;
        if v <= 0.0 {
            return Err(ConfigError::at(e.line, "t_final must be > 0"));
        }
        certify.t_final = Some(v);
    }
    if let Some(e) = take(&mut entries, "delta") {
        let v = parse_f64(&e)?;
        if v <= 0.0 {
            return Err(ConfigError::at(e.line, "delta must be > 0"));
        }
        certify.delta = Some(v);
    }
    reject_leftovers("certify", &entries)?;
    Ok(certify)
}

fn parse_output(mut entries: Vec<Entry>) -> Result<OutputSection, ConfigError> {
    let mut output = OutputSection::default();
    if let Some(e) = take(&mut entries, "directory") {
        output.directory = PathBuf::from(e.value);
    }
    if let Some(e) = take(&mut entries, "emit_plots") {
        output.emit_plots = parse_bool(&e)?;
    }
    reject_leftovers("output", &entries)?;
    Ok(output)
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let mut model = None;
    let mut run = None;
    let mut certify = CertifySection::default();
    let mut output = OutputSection::default();
    for section in split_sections(text)? {
        match section.name.as_str() {
            "model" => model = Some(parse_model(section.entries, section.line)?),
            "run" => run = Some(parse_run(section.entries)?),
            "certify" => certify = parse_certify(section.entries)?,
            "output" => output = parse_output(section.entries)?,
            _ => unreachable!("section names validated during splitting"),
        }
    }
    let model = model.ok_or_else(|| ConfigError::global("missing [model] section"))?;
    Ok(ExperimentConfig {
        model,
        run,
        certify,
        output,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const FULL: &str = "\
# experiment
[model]
kind = wave
n = 40
xi = 1/2
alpha = 1.0

[run]
scheme = viscous_damped
dt_list = 0.1, 0.05, 0.02
t_final = 5.0
z0_policy = highest-mode
seed = 7

[certify]
hautus_grid = auto
beta_list = 1.0, 2.0
gramian_variants = discrete_viscous, filtered
t_final = 4.0
delta = 1.0

[output]
directory = artifacts
emit_plots = on
";

    #[test]
    fn full_config_parses() {
        let cfg = parse_config(FULL).unwrap();
        assert_eq!(cfg.model.kind, ModelKind::Wave);
        assert_eq!(cfg.model.n, 40);
        assert_eq!((cfg.model.xi_p, cfg.model.xi_q), (1, 2));
        let run = cfg.run().unwrap();
        assert_eq!(run.scheme.unwrap(), SchemeId::ViscousDamped);
        assert_eq!(run.dts, vec![0.1, 0.05, 0.02]);
        assert!(run.dt_is_list);
        assert_eq!(run.z0_policy, Z0PolicyKind::HighestMode);
        assert_eq!(run.seed, 7);
        assert_eq!(run.step_budget, DEFAULT_STEP_BUDGET);
        assert_eq!(cfg.certify.beta_list.as_deref(), Some(&[1.0, 2.0][..]));
        assert_eq!(
            cfg.certify.gramian_variants.as_deref(),
            Some(&[GramianVariant::DiscreteViscous, GramianVariant::Filtered][..])
        );
        assert_eq!(cfg.output.directory, PathBuf::from("artifacts"));
        assert!(cfg.output.emit_plots);
    }

    #[test]
    fn minimal_config_defaults() {
        let cfg = parse_config("[model]\nkind = beam\nn = 12\nxi = 1/3\nalpha = 0.5\n").unwrap();
        assert!(cfg.run.is_none());
        assert!(!cfg.certify.any_enabled());
        assert_eq!(cfg.output.directory, PathBuf::from("out"));
    }

    #[test]
    fn rejects_unknown_key_with_line() {
        let err = parse_config("[model]\nkind = wave\nn = 8\nxi = 1/2\nalpha = 1\nbogus = 3\n")
            .unwrap_err();
        assert_eq!(err.line, Some(6));
        assert!(err.message.contains("bogus"));
    }

    #[test]
    fn rejects_duplicate_key() {
        let err = parse_config("[model]\nkind = wave\nkind = beam\n").unwrap_err();
        assert_eq!(err.line, Some(3));
        assert!(err.message.contains("duplicate key 'kind'"));
    }

    #[test]
    fn rejects_unknown_section() {
        let err = parse_config("[models]\nkind = wave\n").unwrap_err();
        assert_eq!(err.line, Some(1));
    }

    #[test]
    fn rejects_dt_and_dt_list_together() {
        let text = "[model]\nkind = wave\nn = 8\nxi = 1/2\nalpha = 1\n[run]\ndt = 0.1\ndt_list = 0.1, 0.2\n";
        let err = parse_config(text).unwrap_err();
        assert!(err.message.contains("not both"));
    }

    #[test]
    fn rejects_duplicate_dt_entries() {
        let text = "[model]\nkind = wave\nn = 8\nxi = 1/2\nalpha = 1\n[run]\ndt_list = 0.1, 0.1\n";
        let err = parse_config(text).unwrap_err();
        assert!(err.message.contains("distinct"));
    }

    #[test]
    fn rejects_unreduced_xi() {
        let err = parse_config("[model]\nkind = wave\nn = 8\nxi = 2/4\nalpha = 1\n").unwrap_err();
        assert!(err.message.contains("not reduced"));
    }

    #[test]
    fn rejects_key_outside_section() {
        let err = parse_config("kind = wave\n").unwrap_err();
        assert_eq!(err.line, Some(1));
        assert!(err.message.contains("before any section"));
    }
}
