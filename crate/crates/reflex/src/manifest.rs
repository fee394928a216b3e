//! Benchmark manifests.
//!
//! One record per case, each opened by a `[case]` line and followed by
//! `key = value` lines. `#` starts a comment. Config overrides use a
//! `set.` prefix, e.g. `set.k = 10`. Relative paths resolve against the
//! manifest's directory.
//!
//! ```text
//! [case]
//! id = cat-to-dog
//! image = images/cat.png
//! source_prompt = a cat on a mat
//! target_prompt = a dog on a mat
//! blended_word = cat
//! edit_mask = masks/cat.png
//! set.alpha = 2
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use reflex_core::EditConfig;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BenchCase {
    pub id: String,
    pub image: PathBuf,
    pub source_prompt: Option<String>,
    pub target_prompt: String,
    pub blended_word: Option<String>,
    pub edit_mask: Option<PathBuf>,
    /// `(key, value)` pairs applied on top of the run config.
    pub overrides: Vec<(String, String)>,
}

impl BenchCase {
    pub fn config(&self, base: &EditConfig) -> reflex_core::Result<EditConfig> {
        let mut cfg = base.clone();
        if let Some(w) = &self.blended_word {
            cfg.blended_word = Some(w.clone());
        }
        cfg.with_overrides(self.overrides.iter().map(|(k, v)| (k.as_str(), v.as_str())))
    }
}

pub fn load_manifest(path: &Path) -> Result<Vec<BenchCase>> {
    let text = fs::read_to_string(path).map_err(Error::io(path))?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_manifest(&text, base, path)
}

/// Parses manifest text; `origin` only labels errors.
pub fn parse_manifest(text: &str, base: &Path, origin: &Path) -> Result<Vec<BenchCase>> {
    let err = |line: usize, reason: String| Error::Manifest {
        path: origin.into(),
        line,
        reason,
    };
    let mut cases: Vec<(usize, BenchCase)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if line == "[case]" {
            cases.push((line_no, BenchCase::default()));
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(err(line_no, format!("expected `key = value`, got `{line}`")));
        };
        let (key, value) = (key.trim(), value.trim());
        let Some((_, case)) = cases.last_mut() else {
            return Err(err(line_no, format!("`{key}` appears before any [case]")));
        };
        match key {
            "id" => case.id = value.into(),
            "image" => case.image = base.join(value),
            "source_prompt" => case.source_prompt = Some(value.into()),
            "target_prompt" => case.target_prompt = value.into(),
            "blended_word" => case.blended_word = Some(value.into()),
            "edit_mask" => case.edit_mask = Some(base.join(value)),
            _ => match key.strip_prefix("set.") {
                Some(k) => {
                    let mut probe = EditConfig::default();
                    probe
                        .set(k, value)
                        .map_err(|e| err(line_no, format!("override `{k}`: {e}")))?;
                    case.overrides.push((k.into(), value.into()));
                }
                None => return Err(err(line_no, format!("unknown key `{key}`"))),
            },
        }
    }
    for (line, case) in &cases {
        if case.id.is_empty() {
            return Err(err(*line, "case has no id".into()));
        }
        if case.image.as_os_str().is_empty() {
            return Err(err(*line, format!("case `{}` has no image", case.id)));
        }
        if case.target_prompt.is_empty() {
            return Err(err(*line, format!("case `{}` has no target_prompt", case.id)));
        }
    }
    Ok(cases.into_iter().map(|(_, c)| c).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Vec<BenchCase>> {
        parse_manifest(text, Path::new("/data"), Path::new("m.txt"))
    }

    #[test]
    fn empty_manifest() {
        assert!(parse("").unwrap().is_empty());
        assert!(parse("# only a comment\n\n").unwrap().is_empty());
    }

    #[test]
    fn full_record() {
        let cases = parse(
            "[case]\nid = a\nimage = img/a.png\nsource_prompt = a cat\n\
             target_prompt = a dog\nblended_word = cat\nedit_mask = m/a.png\nset.k = 10\n",
        )
        .unwrap();
        assert_eq!(
            cases,
            vec![BenchCase {
                id: "a".into(),
                image: "/data/img/a.png".into(),
                source_prompt: Some("a cat".into()),
                target_prompt: "a dog".into(),
                blended_word: Some("cat".into()),
                edit_mask: Some("/data/m/a.png".into()),
                overrides: vec![("k".into(), "10".into())],
            }]
        );
        let cfg = cases[0].config(&EditConfig::default()).unwrap();
        assert_eq!(cfg.top_k, 10);
        assert_eq!(cfg.blended_word.as_deref(), Some("cat"));
    }

    #[test]
    fn unknown_key_names_key_and_line() {
        let e = parse("[case]\nid = a\ncolour = red\n").unwrap_err();
        let msg = e.to_string();
        assert!(msg.contains("colour") && msg.contains(":3:"), "{msg}");
        let e = parse("[case]\nset.bogus = 1\n").unwrap_err();
        assert!(e.to_string().contains("bogus"));
    }

    #[test]
    fn missing_fields_are_rejected() {
        assert!(parse("[case]\nid = a\nimage = x.png\n").is_err());
        assert!(parse("id = a\n").is_err());
        assert!(parse("[case]\nid a\n").is_err());
    }
}
