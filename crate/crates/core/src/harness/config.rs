use std::path::Path;

use crate::{Error, Result};

use super::{snr_grid, ExperimentSpec, Mode};

/// Optional settings gathered from a config file or the command line.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigOverrides {
    pub k: Option<usize>,
    pub l: Option<usize>,
    pub t: Option<usize>,
    pub p: Option<u32>,
    pub q: Option<u32>,
    pub z_order: Option<u32>,
    pub punctured_y: Option<bool>,
    pub snr_from: Option<f64>,
    pub snr_to: Option<f64>,
    pub snr_step: Option<f64>,
    pub trials: Option<u64>,
    pub seed: Option<u64>,
    pub min_errors: Option<u64>,
}

fn parse<T: std::str::FromStr>(key: &str, value: &str, line: usize) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("line {line}: bad value {value:?} for {key}")))
}

fn parse_bool(key: &str, value: &str, line: usize) -> Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(Error::Config(format!(
            "line {line}: bad boolean {value:?} for {key}"
        ))),
    }
}

/// Parses `key = value` lines. Blank lines and `#` comments are skipped;
/// keys match the long CLI flags with or without dashes
/// (`snr-from`, `snr_from`).
pub fn parse_key_values(text: &str) -> Result<ConfigOverrides> {
    let mut out = ConfigOverrides::default();
    for (i, raw) in text.lines().enumerate() {
        let n = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {n}: expected key = value")))?;
        let key = key.trim().to_ascii_lowercase().replace('-', "_");
        let value = value.trim();
        match key.as_str() {
            "k" => out.k = Some(parse(&key, value, n)?),
            "l" => out.l = Some(parse(&key, value, n)?),
            "t" => out.t = Some(parse(&key, value, n)?),
            "p" => out.p = Some(parse(&key, value, n)?),
            "q" => out.q = Some(parse(&key, value, n)?),
            "z_order" => out.z_order = Some(parse(&key, value, n)?),
            "punctured_y" => out.punctured_y = Some(parse_bool(&key, value, n)?),
            "snr_from" => out.snr_from = Some(parse(&key, value, n)?),
            "snr_to" => out.snr_to = Some(parse(&key, value, n)?),
            "snr_step" => out.snr_step = Some(parse(&key, value, n)?),
            "trials" => out.trials = Some(parse(&key, value, n)?),
            "seed" => out.seed = Some(parse(&key, value, n)?),
            "min_errors" => out.min_errors = Some(parse(&key, value, n)?),
            other => return Err(Error::Config(format!("line {n}: unknown key {other:?}"))),
        }
    }
    Ok(out)
}

impl ConfigOverrides {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        parse_key_values(&text)
    }

    /// Fields set in `over` win over fields set in `self`.
    pub fn merged_with(self, over: ConfigOverrides) -> Self {
        Self {
            k: over.k.or(self.k),
            l: over.l.or(self.l),
            t: over.t.or(self.t),
            p: over.p.or(self.p),
            q: over.q.or(self.q),
            z_order: over.z_order.or(self.z_order),
            punctured_y: over.punctured_y.or(self.punctured_y),
            snr_from: over.snr_from.or(self.snr_from),
            snr_to: over.snr_to.or(self.snr_to),
            snr_step: over.snr_step.or(self.snr_step),
            trials: over.trials.or(self.trials),
            seed: over.seed.or(self.seed),
            min_errors: over.min_errors.or(self.min_errors),
        }
    }

    /// Fills unset fields from [`ExperimentSpec::default`] and validates.
    pub fn into_spec(self, mode: Mode) -> Result<ExperimentSpec> {
        let d = ExperimentSpec::default();
        let grid = match (self.snr_from, self.snr_to, self.snr_step) {
            (None, None, None) => d.snr_grid_db.clone(),
            (from, to, step) => snr_grid(
                from.unwrap_or(d.snr_grid_db[0]),
                to.unwrap_or(*d.snr_grid_db.last().unwrap()),
                step.unwrap_or(2.0),
            )?,
        };
        let spec = ExperimentSpec {
            k: self.k.unwrap_or(d.k),
            l: self.l.unwrap_or(d.l),
            t: self.t.unwrap_or(d.t),
            p: self.p.unwrap_or(d.p),
            q: self.q.unwrap_or(d.q),
            z_order: self.z_order.unwrap_or(d.z_order),
            punctured_y: self.punctured_y.unwrap_or(d.punctured_y),
            snr_grid_db: grid,
            trials_per_point: self.trials.unwrap_or(d.trials_per_point),
            master_seed: self.seed.unwrap_or(d.master_seed),
            min_errors: self.min_errors.unwrap_or(d.min_errors),
            mode,
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_file_format() {
        let text = "# desk config\nk = 3\nsnr-from=14\nsnr_to = 26 # inline\n\npunctured_y = yes\nseed=42\n";
        let o = parse_key_values(text).unwrap();
        assert_eq!(o.k, Some(3));
        assert_eq!(o.snr_from, Some(14.0));
        assert_eq!(o.snr_to, Some(26.0));
        assert_eq!(o.punctured_y, Some(true));
        assert_eq!(o.seed, Some(42));
    }

    #[test]
    fn rejects_garbage() {
        assert!(parse_key_values("k 3").is_err());
        assert!(parse_key_values("k = three").is_err());
        assert!(parse_key_values("colour = blue").is_err());
        assert!(parse_key_values("punctured_y = maybe").is_err());
    }

    #[test]
    fn cli_overrides_file() {
        let file = parse_key_values("k = 3\nl = 1\ntrials = 10").unwrap();
        let cli = ConfigOverrides {
            k: Some(4),
            ..Default::default()
        };
        let spec = file.merged_with(cli).into_spec(Mode::BerSweep).unwrap();
        assert_eq!((spec.k, spec.l, spec.trials_per_point), (4, 1, 10));
    }

    #[test]
    fn non_coprime_rejected_at_load() {
        let o = parse_key_values("p = 2\nq = 4").unwrap();
        assert!(o.into_spec(Mode::IdentifyRoundtrip).is_err());
    }
}
