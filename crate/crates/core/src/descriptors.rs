//! Named descriptor files: one `<name>\t<v1> <v2> …` record per line.
//!
//! Values are written in shortest round-trip form, so reloading is exact.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DescriptorSet {
    pub names: Vec<String>,
    pub vectors: Vec<Vec<f64>>,
}

impl DescriptorSet {
    pub fn push(&mut self, name: impl Into<String>, v: Vec<f64>) {
        self.names.push(name.into());
        self.vectors.push(v);
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let dim = self.vectors.first().map_or(0, Vec::len);
        let _ = writeln!(out, "# placerec descriptors dim={dim}");
        for (name, v) in self.names.iter().zip(&self.vectors) {
            out.push_str(name);
            out.push('\t');
            for (i, x) in v.iter().enumerate() {
                if i > 0 {
                    out.push(' ');
                }
                let _ = write!(out, "{x}");
            }
            out.push('\n');
        }
        out
    }

    pub fn parse_text(text: &str, origin: &str) -> Result<DescriptorSet> {
        let mut set = DescriptorSet::default();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let at = || format!("{origin}:{}", i + 1);
            let (name, values) = line
                .split_once('\t')
                .ok_or_else(|| Error::parse(at(), "expected `<name>\\t<values>`"))?;
            let v = values
                .split_whitespace()
                .map(|t| t.parse::<f64>().map_err(|_| Error::parse(at(), format!("invalid number {t:?}"))))
                .collect::<Result<Vec<f64>>>()?;
            if let Some(first) = set.vectors.first() {
                if first.len() != v.len() {
                    return Err(Error::parse(at(), format!("expected {} values, found {}", first.len(), v.len())));
                }
            }
            set.push(name, v);
        }
        Ok(set)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<DescriptorSet> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)?;
        DescriptorSet::parse_text(&text, &path.display().to_string())
    }
}
