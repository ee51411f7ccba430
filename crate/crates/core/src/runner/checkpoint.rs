//! Versioned plain-text checkpoints: one header line, then one number per
//! line.
//!
//! ```text
//! schema=1 kind=policy len=864 shape=policy:12x9x8 task=ab-conflict seed=0 digest=3f2a...
//! 0.123
//! ...
//! ```

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::merge::{ParamVector, ShapeTag};
use crate::value::{ExplicitValueModel, VALUE_KIND};
use crate::world::{TabularPolicy, POLICY_KIND};

pub const SCHEMA_VERSION: u32 = 1;

/// Where a checkpoint came from.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Provenance {
    pub task: String,
    pub seed: u64,
    /// Digest of the configuration that produced the parameters.
    pub digest: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ParamVector,
    pub provenance: Provenance,
}

impl Checkpoint {
    pub fn new(params: ParamVector, provenance: Provenance) -> Self {
        Self { params, provenance }
    }

    /// Model kind: the shape tag up to the first `:`.
    pub fn kind(&self) -> &str {
        kind_of(self.params.shape())
    }

    pub fn render(&self) -> String {
        let p = &self.provenance;
        let mut out = format!(
            "schema={SCHEMA_VERSION} kind={} len={} shape={} task={} seed={} digest={}\n",
            self.kind(),
            self.params.len(),
            self.params.shape().as_str(),
            token(&p.task),
            p.seed,
            token(&p.digest),
        );
        for x in self.params.values() {
            // `{}` on f64 prints the shortest decimal that parses back to
            // the same bits.
            out.push_str(&format!("{x}\n"));
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::Checkpoint("empty checkpoint".into()))?;
        let field = |name: &str| -> Result<&str> {
            header
                .split_whitespace()
                .find_map(|kv| kv.strip_prefix(name).and_then(|r| r.strip_prefix('=')))
                .ok_or_else(|| Error::Checkpoint(format!("header lacks {name}")))
        };
        let schema: u32 = field("schema")?
            .parse()
            .map_err(|_| Error::Checkpoint("unreadable schema version".into()))?;
        if schema != SCHEMA_VERSION {
            return Err(Error::Checkpoint(format!(
                "schema version {schema} is not supported (expected {SCHEMA_VERSION})"
            )));
        }
        let kind = field("kind")?;
        let len: usize = field("len")?
            .parse()
            .map_err(|_| Error::Checkpoint("unreadable length".into()))?;
        let shape = ShapeTag::new(field("shape")?);
        if kind_of(&shape) != kind {
            return Err(Error::Checkpoint(format!("kind {kind} disagrees with shape {}", shape.as_str())));
        }
        let values = lines
            .filter(|l| !l.trim().is_empty())
            .enumerate()
            .map(|(i, l)| {
                let x: f64 = l
                    .trim()
                    .parse()
                    .map_err(|_| Error::Checkpoint(format!("entry {i}: {l:?} is not a number")))?;
                if !x.is_finite() {
                    return Err(Error::Checkpoint(format!("entry {i} is not finite")));
                }
                Ok(x)
            })
            .collect::<Result<Vec<f64>>>()?;
        if values.len() != len {
            return Err(Error::Checkpoint(format!("expected {len} values, found {}", values.len())));
        }
        let provenance = Provenance {
            task: untoken(field("task")?),
            seed: field("seed")?
                .parse()
                .map_err(|_| Error::Checkpoint("unreadable seed".into()))?,
            digest: untoken(field("digest")?),
        };
        Ok(Self { params: ParamVector::new(shape, values)?, provenance })
    }
}

fn kind_of(shape: &ShapeTag) -> &str {
    shape.as_str().split(':').next().unwrap_or("")
}

fn token(s: &str) -> &str {
    if s.is_empty() {
        "-"
    } else {
        s
    }
}

fn untoken(s: &str) -> String {
    if s == "-" {
        String::new()
    } else {
        s.to_string()
    }
}

pub fn save_checkpoint(checkpoint: &Checkpoint, path: &Path) -> Result<()> {
    let p = &checkpoint.provenance;
    if p.task.contains(char::is_whitespace) || p.digest.contains(char::is_whitespace) {
        return Err(Error::Checkpoint("provenance fields must not contain whitespace".into()));
    }
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, checkpoint.render())?;
    Ok(())
}

/// Load a checkpoint, optionally insisting on a model kind.
pub fn load_checkpoint(path: &Path, kind: Option<&str>) -> Result<Checkpoint> {
    let text = fs::read_to_string(path).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
    let ck = Checkpoint::parse(&text).map_err(|e| match e {
        Error::Checkpoint(m) => Error::Checkpoint(format!("{}: {m}", path.display())),
        other => other,
    })?;
    if let Some(want) = kind {
        if ck.kind() != want {
            return Err(Error::Checkpoint(format!(
                "{}: holds a {} model, expected {want}",
                path.display(),
                ck.kind()
            )));
        }
    }
    Ok(ck)
}

pub fn save_policy(policy: &TabularPolicy, provenance: &Provenance, path: &Path) -> Result<()> {
    save_checkpoint(&Checkpoint::new(policy.to_param(), provenance.clone()), path)
}

pub fn load_policy(path: &Path) -> Result<TabularPolicy> {
    TabularPolicy::from_param(&load_checkpoint(path, Some(POLICY_KIND))?.params)
}

pub fn save_value(model: &ExplicitValueModel, provenance: &Provenance, path: &Path) -> Result<()> {
    save_checkpoint(&Checkpoint::new(model.to_param(), provenance.clone()), path)
}

pub fn load_value(path: &Path) -> Result<ExplicitValueModel> {
    ExplicitValueModel::from_param(&load_checkpoint(path, Some(VALUE_KIND))?.params)
}
