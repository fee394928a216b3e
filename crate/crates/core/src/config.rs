//! Edit configuration and its flat `key = value` text form.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::error::{Error, Result};

/// A set of transformer layer indices, written as `20-45` or `1,3,5-7`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LayerSet(BTreeSet<usize>);

impl LayerSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inclusive range `first..=last`.
    pub fn range(first: usize, last: usize) -> Self {
        Self((first..=last).collect())
    }

    pub fn contains(&self, layer: usize) -> bool {
        self.0.contains(&layer)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().copied()
    }

    pub fn max(&self) -> Option<usize> {
        self.0.last().copied()
    }
}

impl FromIterator<usize> for LayerSet {
    fn from_iter<I: IntoIterator<Item = usize>>(iter: I) -> Self {
        Self(iter.into_iter().collect())
    }
}

impl fmt::Display for LayerSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let items: Vec<usize> = self.0.iter().copied().collect();
        let mut first = true;
        let mut i = 0;
        while i < items.len() {
            let start = items[i];
            let mut end = start;
            while i + 1 < items.len() && items[i + 1] == end + 1 {
                i += 1;
                end = items[i];
            }
            if !first {
                f.write_str(",")?;
            }
            first = false;
            if start == end {
                write!(f, "{start}")?;
            } else {
                write!(f, "{start}-{end}")?;
            }
            i += 1;
        }
        Ok(())
    }
}

impl FromStr for LayerSet {
    type Err = String;

    fn from_str(s: &str) -> core::result::Result<Self, String> {
        let mut set = BTreeSet::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let parse = |x: &str| {
                x.trim()
                    .parse::<usize>()
                    .map_err(|_| format!("`{x}` is not a layer index"))
            };
            match part.split_once('-') {
                Some((a, b)) => {
                    let (a, b) = (parse(a)?, parse(b)?);
                    if a > b {
                        return Err(format!("empty layer range `{part}`"));
                    }
                    set.extend(a..=b);
                }
                None => {
                    set.insert(parse(part)?);
                }
            }
        }
        Ok(Self(set))
    }
}

/// Every knob of a ReFlex edit.
#[derive(Debug, Clone, PartialEq)]
pub struct EditConfig {
    /// Number of sampling steps `T`.
    pub steps: usize,
    /// Step index of the latent features are extracted from.
    pub t_prime: usize,
    /// Scale for unmapped I2T-CA columns.
    pub alpha: f64,
    /// Number of top source I2I-SA entries replaced per row.
    pub top_k: usize,
    pub frac_ca: f64,
    pub frac_sa: f64,
    pub frac_res: f64,
    /// I2I-SA and residual fractions used when no source prompt is given.
    pub frac_sa_no_source: f64,
    pub frac_res_no_source: f64,
    /// Fraction of generation steps that use latent blending.
    pub m_frac: f64,
    /// Forward-interpolation steps before inversion.
    pub n_noising: usize,
    pub attn_layers: LayerSet,
    pub res_layers: LayerSet,
    /// First generation step with I2I-SA adaptation; `None` picks 2 when
    /// I2T-CA is injected and 4 otherwise.
    pub sa_adapt_start: Option<usize>,
    pub seed: u64,
    pub blended_word: Option<String>,
}

impl Default for EditConfig {
    fn default() -> Self {
        Self {
            steps: 28,
            t_prime: 14,
            alpha: 4.0,
            top_k: 20,
            frac_ca: 0.4,
            frac_sa: 0.25,
            frac_res: 0.15,
            frac_sa_no_source: 0.4,
            frac_res_no_source: 0.25,
            m_frac: 0.7,
            n_noising: 7,
            attn_layers: LayerSet::range(20, 45),
            res_layers: LayerSet::range(13, 19),
            sa_adapt_start: None,
            seed: 0,
            blended_word: None,
        }
    }
}

pub const CONFIG_KEYS: &[&str] = &[
    "T",
    "t_prime",
    "alpha",
    "k",
    "frac_ca",
    "frac_sa",
    "frac_res",
    "frac_sa_no_source",
    "frac_res_no_source",
    "m_frac",
    "n_noising",
    "attn_layers",
    "res_layers",
    "sa_adapt_start",
    "seed",
    "blended_word",
];

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::config(key, format!("`{value}` is not a valid number")))
}

impl EditConfig {
    /// Parses `key = value` lines on top of the defaults. `#` starts a comment.
    pub fn from_kv_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_kv_text(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply_kv_text(&mut self, text: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::config(
                    "<line>",
                    format!("line {} is not `key = value`: `{line}`", lineno + 1),
                )
            })?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    /// Sets one field from its text form. Does not validate cross-field constraints.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "T" | "steps" => self.steps = parse_num(key, value)?,
            "t_prime" => self.t_prime = parse_num(key, value)?,
            "alpha" => self.alpha = parse_num(key, value)?,
            "k" | "top_k" => self.top_k = parse_num(key, value)?,
            "frac_ca" => self.frac_ca = parse_num(key, value)?,
            "frac_sa" => self.frac_sa = parse_num(key, value)?,
            "frac_res" => self.frac_res = parse_num(key, value)?,
            "frac_sa_no_source" => self.frac_sa_no_source = parse_num(key, value)?,
            "frac_res_no_source" => self.frac_res_no_source = parse_num(key, value)?,
            "m_frac" => self.m_frac = parse_num(key, value)?,
            "n_noising" | "n" => self.n_noising = parse_num(key, value)?,
            "attn_layers" => {
                self.attn_layers = value.parse().map_err(|e| Error::config(key, e))?
            }
            "res_layers" => self.res_layers = value.parse().map_err(|e| Error::config(key, e))?,
            "sa_adapt_start" => {
                self.sa_adapt_start = match value {
                    "auto" | "" => None,
                    v => Some(parse_num(key, v)?),
                }
            }
            "seed" => self.seed = parse_num(key, value)?,
            "blended_word" => {
                self.blended_word = (!value.is_empty()).then(|| value.to_string());
            }
            _ => return Err(Error::config(key, "unknown config key")),
        }
        Ok(())
    }

    pub fn with_overrides<'a, I>(mut self, overrides: I) -> Result<Self>
    where
        I: IntoIterator<Item = (&'a str, &'a str)>,
    {
        for (k, v) in overrides {
            self.set(k, v)?;
        }
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::config("T", "must be at least 1"));
        }
        if self.t_prime == 0 || self.t_prime > self.steps {
            return Err(Error::config(
                "t_prime",
                format!("must satisfy 0 < t_prime <= T ({})", self.steps),
            ));
        }
        if !(self.alpha.is_finite() && self.alpha >= 1.0) {
            return Err(Error::config("alpha", "must be finite and >= 1"));
        }
        for (name, v) in [
            ("frac_ca", self.frac_ca),
            ("frac_sa", self.frac_sa),
            ("frac_res", self.frac_res),
            ("frac_sa_no_source", self.frac_sa_no_source),
            ("frac_res_no_source", self.frac_res_no_source),
            ("m_frac", self.m_frac),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::config(name, "must lie in [0, 1]"));
            }
        }
        if self.n_noising >= self.steps {
            return Err(Error::config(
                "n_noising",
                format!("must be < T ({})", self.steps),
            ));
        }
        Ok(())
    }

    /// Checks the layer sets against a model with `n_layers` layers.
    pub fn validate_layers(&self, n_layers: usize) -> Result<()> {
        for (name, set) in [("attn_layers", &self.attn_layers), ("res_layers", &self.res_layers)] {
            if let Some(max) = set.max() {
                if max >= n_layers {
                    return Err(Error::config(
                        name,
                        format!("layer {max} outside model range [0, {n_layers})"),
                    ));
                }
            }
        }
        Ok(())
    }

    /// `floor(frac * T)`.
    pub fn step_count(&self, frac: f64) -> usize {
        (frac * self.steps as f64) as usize
    }

    pub fn to_kv_text(&self) -> String {
        let mut s = String::new();
        let mut line = |k: &str, v: &dyn fmt::Display| {
            s.push_str(&format!("{k} = {v}\n"));
        };
        line("T", &self.steps);
        line("t_prime", &self.t_prime);
        line("alpha", &self.alpha);
        line("k", &self.top_k);
        line("frac_ca", &self.frac_ca);
        line("frac_sa", &self.frac_sa);
        line("frac_res", &self.frac_res);
        line("frac_sa_no_source", &self.frac_sa_no_source);
        line("frac_res_no_source", &self.frac_res_no_source);
        line("m_frac", &self.m_frac);
        line("n_noising", &self.n_noising);
        line("attn_layers", &self.attn_layers);
        line("res_layers", &self.res_layers);
        match self.sa_adapt_start {
            Some(v) => line("sa_adapt_start", &v),
            None => line("sa_adapt_start", &"auto"),
        }
        line("seed", &self.seed);
        line("blended_word", &self.blended_word.as_deref().unwrap_or(""));
        s
    }
}
