//! `key=value` configuration: defaults, presets, file, environment, flags.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use dla1d::caricature::{Car1Config, Car2Config};
use dla1d::dla::{CheckpointGrid, Mode, RunConfig};
use dla1d::field::WindowMode;
use dla1d::rng::GSpec;
use sha2::{Digest, Sha256};

use crate::CliError;

/// Environment variable consulted for the master seed when no flag sets it.
pub const SEED_ENV: &str = "DLA1D_SEED";

pub const KEYS: &[&str] = &[
    "model",
    "mu",
    "D",
    "p_plus",
    "t_max",
    "grid_t0",
    "grid_ratio",
    "n_runs",
    "seed",
    "mode",
    "zone_width",
    "gap_min",
    "eps_sleep",
    "min_sleep",
    "eps_trunc",
    "window_override",
    "window_mode",
    "J",
    "x_init",
    "g_family",
    "g_params",
    "alpha_list",
    "q_list",
    "t_lo",
    "t_hi",
    "output_dir",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Model {
    Dla,
    Car1,
    Car2,
}

impl Model {
    pub fn as_str(&self) -> &'static str {
        match self {
            Model::Dla => "dla",
            Model::Car1 => "car1",
            Model::Car2 => "car2",
        }
    }
}

/// Fully resolved settings.
#[derive(Clone, Debug, PartialEq)]
pub struct Settings {
    pub model: Model,
    pub mu: f64,
    pub d: f64,
    pub p_plus: f64,
    pub t_max: f64,
    pub grid: CheckpointGrid,
    pub n_runs: u64,
    pub seed: u64,
    pub mode: Mode,
    pub zone_width: u64,
    pub gap_min: u64,
    pub eps_sleep: f64,
    pub min_sleep: f64,
    pub eps_trunc: f64,
    pub window_override: Option<u64>,
    /// `None` means automatic.
    pub window_mode: Option<WindowMode>,
    pub j: usize,
    pub x_init: Option<Vec<i64>>,
    pub g: GSpec,
    /// `None` means `{J, 2J, 4J, 8J}`.
    pub alpha_list: Option<Vec<u64>>,
    pub q_list: Vec<u32>,
    pub t_lo: f64,
    /// `None` means `t_max`.
    pub t_hi: Option<f64>,
    pub output_dir: PathBuf,
}

impl Default for Settings {
    fn default() -> Self {
        let run = RunConfig::new(0.5, 1e4);
        Self {
            model: Model::Dla,
            mu: run.mu,
            d: run.d,
            p_plus: run.p_plus,
            t_max: run.t_max,
            grid: run.grid,
            n_runs: 100,
            seed: 0,
            mode: run.mode,
            zone_width: run.zone_width,
            gap_min: run.gap_min,
            eps_sleep: run.eps_sleep,
            min_sleep: run.min_sleep,
            eps_trunc: run.eps_trunc,
            window_override: None,
            window_mode: None,
            j: 24,
            x_init: None,
            g: GSpec::Geometric { p: 0.5 },
            alpha_list: None,
            q_list: vec![1, 2],
            t_lo: 1e2,
            t_hi: None,
            output_dir: PathBuf::from("out"),
        }
    }
}

/// Raw `key → value` pairs with the layer that set them last.
pub type Layer = BTreeMap<String, String>;

/// Parses `key=value` tokens separated by whitespace or newlines; `#` starts a comment.
pub fn parse_text(text: &str) -> Result<Layer, CliError> {
    let mut out = Layer::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("");
        for token in line.split_whitespace() {
            let (k, v) = token.split_once('=').ok_or_else(|| {
                CliError::Config(format!("line {}: `{token}` is not key=value", lineno + 1))
            })?;
            if !KEYS.contains(&k) {
                return Err(CliError::Config(format!("line {}: unknown key `{k}`", lineno + 1)));
            }
            out.insert(k.to_string(), v.to_string());
        }
    }
    Ok(out)
}

/// Named parameter bundles for the three growth-law figures.
pub fn preset(name: &str) -> Result<Layer, CliError> {
    let (mu, n, t_lo) = match name {
        "fig1" => ("0.5", "1000", "100"),
        "fig2" => ("1", "1000", "100"),
        "fig3" => ("1.1", "100", "1000"),
        other => return Err(CliError::Config(format!("unknown preset `{other}` (fig1, fig2, fig3)"))),
    };
    Ok([
        ("model", "dla"),
        ("mu", mu),
        ("n_runs", n),
        ("t_max", "10000"),
        ("mode", "fast"),
        ("t_lo", t_lo),
        ("t_hi", "10000"),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v.to_string()))
    .collect())
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, CliError> {
    v.parse()
        .map_err(|_| CliError::Config(format!("`{key}`: cannot parse `{v}`")))
}

fn list<T: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<T>, CliError> {
    v.split(',').map(|x| num(key, x.trim())).collect()
}

fn optional(v: &str) -> bool {
    matches!(v, "" | "none" | "auto")
}

/// Applies `layer` on top of `base`.
pub fn apply(mut s: Settings, layer: &Layer) -> Result<Settings, CliError> {
    let mut g_family = s.g.family().to_string();
    let mut g_params = s.g.params();
    let mut g_touched = false;
    for (k, v) in layer {
        let v = v.as_str();
        match k.as_str() {
            "model" => {
                s.model = match v {
                    "dla" => Model::Dla,
                    "car1" => Model::Car1,
                    "car2" => Model::Car2,
                    _ => return Err(CliError::Config(format!("`model`: expected dla, car1 or car2, got `{v}`"))),
                }
            }
            "mu" => s.mu = num(k, v)?,
            "D" => s.d = num(k, v)?,
            "p_plus" => s.p_plus = num(k, v)?,
            "t_max" => s.t_max = num(k, v)?,
            "grid_t0" => s.grid.t0 = num(k, v)?,
            "grid_ratio" => s.grid.ratio = num(k, v)?,
            "n_runs" => s.n_runs = num(k, v)?,
            "seed" => s.seed = num(k, v)?,
            "mode" => {
                s.mode = match v {
                    "exact" => Mode::Exact,
                    "fast" => Mode::Fast,
                    _ => return Err(CliError::Config(format!("`mode`: expected exact or fast, got `{v}`"))),
                }
            }
            "zone_width" => s.zone_width = num(k, v)?,
            "gap_min" => s.gap_min = num(k, v)?,
            "eps_sleep" => s.eps_sleep = num(k, v)?,
            "min_sleep" => s.min_sleep = num(k, v)?,
            "eps_trunc" => s.eps_trunc = num(k, v)?,
            "window_override" => s.window_override = if optional(v) { None } else { Some(num(k, v)?) },
            "window_mode" => {
                s.window_mode = match v {
                    "auto" => None,
                    "safe" => Some(WindowMode::Safe),
                    "diffusive" => Some(WindowMode::Diffusive),
                    _ => {
                        return Err(CliError::Config(format!(
                            "`window_mode`: expected auto, safe or diffusive, got `{v}`"
                        )))
                    }
                }
            }
            "J" => s.j = num(k, v)?,
            "x_init" => s.x_init = if optional(v) { None } else { Some(list(k, v)?) },
            "g_family" => {
                g_family = v.to_string();
                g_touched = true;
            }
            "g_params" => {
                g_params = list(k, v)?;
                g_touched = true;
            }
            "alpha_list" => s.alpha_list = if optional(v) { None } else { Some(list(k, v)?) },
            "q_list" => s.q_list = list(k, v)?,
            "t_lo" => s.t_lo = num(k, v)?,
            "t_hi" => s.t_hi = if optional(v) { None } else { Some(num(k, v)?) },
            "output_dir" => s.output_dir = PathBuf::from(v),
            other => return Err(CliError::Config(format!("unknown key `{other}`"))),
        }
    }
    if g_touched {
        s.g = GSpec::from_parts(&g_family, &g_params)
            .map_err(|e| CliError::Config(format!("`g_family`/`g_params`: {e}")))?;
    }
    Ok(s)
}

/// Resolution order, lowest first: defaults, preset, file, seed from the
/// environment, flags.
pub fn resolve(
    preset_name: Option<&str>,
    file_text: Option<&str>,
    env_seed: Option<&str>,
    flags: &Layer,
) -> Result<Settings, CliError> {
    let mut s = Settings::default();
    if let Some(p) = preset_name {
        s = apply(s, &preset(p)?)?;
    }
    if let Some(text) = file_text {
        s = apply(s, &parse_text(text)?)?;
    }
    if let Some(seed) = env_seed.filter(|_| !flags.contains_key("seed")) {
        s.seed = num(SEED_ENV, seed)?;
    }
    s = apply(s, flags)?;
    // Pin derived defaults so the echo reloads to an identical value.
    s.alpha_list = Some(s.alphas());
    s.t_hi = Some(s.t_hi());
    s.validate()?;
    Ok(s)
}

fn list_str<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

impl Settings {
    pub fn t_hi(&self) -> f64 {
        self.t_hi.unwrap_or(self.t_max)
    }

    pub fn alphas(&self) -> Vec<u64> {
        self.alpha_list
            .clone()
            .unwrap_or_else(|| [1, 2, 4, 8].iter().map(|m| m * self.j as u64).collect())
    }

    pub fn run_config(&self) -> RunConfig {
        let mut c = RunConfig::new(self.mu, self.t_max);
        c.d = self.d;
        c.p_plus = self.p_plus;
        c.grid = self.grid;
        c.mode = self.mode;
        c.zone_width = self.zone_width;
        c.gap_min = self.gap_min;
        c.eps_sleep = self.eps_sleep;
        c.min_sleep = self.min_sleep;
        c.eps_trunc = self.eps_trunc;
        c.window_override = self.window_override;
        c.window_mode = self.window_mode;
        c
    }

    pub fn car1_config(&self) -> Car1Config {
        let mut c = Car1Config::new(self.mu, self.j, self.t_max);
        c.d = self.d;
        c.p_plus = self.p_plus;
        c.x_init = self.x_init.clone();
        c.grid = self.grid;
        c.eps_trunc = self.eps_trunc;
        c.window_override = self.window_override;
        c
    }

    pub fn car2_config(&self) -> Car2Config {
        let mut c = Car2Config::new(self.j, self.g.clone(), self.t_max);
        c.d = self.d;
        c.p_plus = self.p_plus;
        c.x_init = self.x_init.clone();
        c.grid = self.grid;
        c.alpha = self.alphas().first().copied();
        c.q_list = self.q_list.clone();
        c
    }

    /// `(t_lo, t_hi)` for the exponent fit; only commands that fit need it.
    pub fn fit_window(&self) -> Result<(f64, f64), CliError> {
        let (lo, hi) = (self.t_lo, self.t_hi());
        if !(lo < hi && hi <= self.t_max) {
            return Err(CliError::Config(format!(
                "`t_lo`/`t_hi`: need t_lo < t_hi <= t_max, got [{lo}, {hi}] with t_max={}",
                self.t_max
            )));
        }
        Ok((lo, hi))
    }

    /// Checks every constraint, naming the offending key.
    pub fn validate(&self) -> Result<(), CliError> {
        if self.n_runs == 0 {
            return Err(CliError::Config("`n_runs` must be >= 1".into()));
        }
        if self.t_lo.is_nan() || self.t_lo <= 0.0 {
            return Err(CliError::Config(format!("`t_lo` must be > 0, got {}", self.t_lo)));
        }
        match self.model {
            Model::Dla => {
                let c = self.run_config();
                c.validate()?;
                c.window()?;
            }
            Model::Car1 => {
                let c = self.car1_config();
                c.validate()?;
                c.window()?;
            }
            Model::Car2 => self.car2_config().validate()?,
        }
        Ok(())
    }

    /// Every setting with defaults resolved, one `key=value` per line, in key order.
    pub fn canonical(&self) -> String {
        let mut m: BTreeMap<&str, String> = BTreeMap::new();
        m.insert("model", self.model.as_str().into());
        m.insert("mu", self.mu.to_string());
        m.insert("D", self.d.to_string());
        m.insert("p_plus", self.p_plus.to_string());
        m.insert("t_max", self.t_max.to_string());
        m.insert("grid_t0", self.grid.t0.to_string());
        m.insert("grid_ratio", self.grid.ratio.to_string());
        m.insert("n_runs", self.n_runs.to_string());
        m.insert("seed", self.seed.to_string());
        m.insert("mode", self.mode.as_str().into());
        m.insert("zone_width", self.zone_width.to_string());
        m.insert("gap_min", self.gap_min.to_string());
        m.insert("eps_sleep", self.eps_sleep.to_string());
        m.insert("min_sleep", self.min_sleep.to_string());
        m.insert("eps_trunc", self.eps_trunc.to_string());
        m.insert(
            "window_override",
            self.window_override.map_or("none".into(), |w| w.to_string()),
        );
        m.insert(
            "window_mode",
            self.window_mode.map_or("auto".into(), |w| w.as_str().into()),
        );
        m.insert("J", self.j.to_string());
        m.insert("x_init", self.x_init.as_deref().map_or("none".into(), list_str));
        m.insert("g_family", self.g.family().into());
        m.insert("g_params", list_str(&self.g.params()));
        m.insert("alpha_list", list_str(&self.alphas()));
        m.insert("q_list", list_str(&self.q_list));
        m.insert("t_lo", self.t_lo.to_string());
        m.insert("t_hi", self.t_hi().to_string());
        m.insert("output_dir", self.output_dir.display().to_string());
        let mut out = String::new();
        for (k, v) in m {
            let _ = writeln!(out, "{k}={v}");
        }
        out
    }

    /// First 16 hex digits of the SHA-256 of the canonical echo, excluding
    /// `output_dir` so that relocating output keeps the hash.
    pub fn config_hash(&self) -> String {
        let body: String = self
            .canonical()
            .lines()
            .filter(|l| !l.starts_with("output_dir="))
            .map(|l| format!("{l}\n"))
            .collect();
        let digest = Sha256::digest(body.as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flags(pairs: &[(&str, &str)]) -> Layer {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn one_line_file_parses() {
        let s = resolve(None, Some("model=dla mu=0.5 t_max=10000 seed=7"), None, &Layer::new()).unwrap();
        assert_eq!(s.model, Model::Dla);
        assert_eq!((s.mu, s.t_max, s.seed), (0.5, 1e4, 7));
        assert_eq!(s.n_runs, Settings::default().n_runs);
    }

    #[test]
    fn negative_density_names_the_key() {
        let err = resolve(None, Some("mu=-1"), None, &Layer::new()).unwrap_err();
        assert!(err.to_string().contains("mu"), "{err}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn flags_override_file() {
        let s = resolve(None, Some("mu=0.5"), None, &flags(&[("mu", "0.7")])).unwrap();
        assert_eq!(s.mu, 0.7);
    }

    #[test]
    fn seed_precedence() {
        let f = Some("seed=1");
        assert_eq!(resolve(None, f, None, &Layer::new()).unwrap().seed, 1);
        assert_eq!(resolve(None, f, Some("2"), &Layer::new()).unwrap().seed, 2);
        assert_eq!(resolve(None, f, Some("2"), &flags(&[("seed", "3")])).unwrap().seed, 3);
    }

    #[test]
    fn unknown_and_malformed_keys_rejected() {
        assert!(parse_text("mu=0.5\nbogus=1").unwrap_err().to_string().contains("bogus"));
        assert!(parse_text("mu").is_err());
        assert!(resolve(None, Some("mu=abc"), None, &Layer::new()).unwrap_err().to_string().contains("mu"));
        assert!(resolve(None, Some("mode=slow"), None, &Layer::new()).is_err());
    }

    #[test]
    fn comments_and_blank_lines() {
        let l = parse_text("# header\n\nmu=0.3 # density\n  D=2\n").unwrap();
        assert_eq!(l.get("mu").unwrap(), "0.3");
        assert_eq!(l.get("D").unwrap(), "2");
    }

    #[test]
    fn presets() {
        let s = resolve(Some("fig3"), None, None, &Layer::new()).unwrap();
        assert_eq!((s.mu, s.n_runs, s.mode), (1.1, 100, Mode::Fast));
        assert_eq!(s.t_lo, 1e3);
        let s = resolve(Some("fig1"), Some("n_runs=5"), None, &Layer::new()).unwrap();
        assert_eq!((s.mu, s.n_runs), (0.5, 5));
        assert!(resolve(Some("fig9"), None, None, &Layer::new()).is_err());
    }

    #[test]
    fn fit_window_checked_only_on_request() {
        let s = resolve(None, Some("t_max=50"), None, &Layer::new()).unwrap();
        assert_eq!(s.t_hi(), 50.0);
        assert_eq!(s.fit_window().unwrap_err().exit_code(), 2);
        let s = resolve(None, Some("t_max=1e4 t_hi=1e5"), None, &Layer::new()).unwrap();
        assert!(s.fit_window().is_err());
        let s = resolve(None, Some("t_lo=10 t_max=1e3"), None, &Layer::new()).unwrap();
        assert_eq!(s.fit_window().unwrap(), (10.0, 1e3));
    }

    #[test]
    fn canonical_round_trips() {
        let s = resolve(
            None,
            Some("model=car2 J=3 x_init=1,2,3 g_family=zeta-truncated g_params=12,40 q_list=2,3"),
            None,
            &Layer::new(),
        )
        .unwrap();
        let again = resolve(None, Some(&s.canonical()), None, &Layer::new()).unwrap();
        assert_eq!(again, s);
        assert_eq!(again.config_hash(), s.config_hash());
        assert_eq!(s.config_hash().len(), 16);
    }

    #[test]
    fn hash_tracks_settings_but_not_output_dir() {
        let a = resolve(None, Some("mu=0.5"), None, &Layer::new()).unwrap();
        let b = resolve(None, Some("mu=0.5 output_dir=elsewhere"), None, &Layer::new()).unwrap();
        let c = resolve(None, Some("mu=0.6"), None, &Layer::new()).unwrap();
        assert_eq!(a.config_hash(), b.config_hash());
        assert_ne!(a.config_hash(), c.config_hash());
    }

    #[test]
    fn car2_settings() {
        let s = resolve(None, Some("model=car2 J=5 g_family=constant g_params=2"), None, &Layer::new()).unwrap();
        assert_eq!(s.alphas(), vec![5, 10, 20, 40]);
        assert_eq!(s.car2_config().g, GSpec::Constant(2));
        assert!(resolve(None, Some("model=car2 J=2 x_init=1,1,1"), None, &Layer::new()).is_err());
        assert!(resolve(None, Some("g_family=geometric g_params=1,2"), None, &Layer::new()).is_err());
    }
}
