use std::io::{BufRead, Write};

use crate::error::{Error, Result};

/// θ snapshot with the settings needed to interpret it.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub mode: String,
    pub updates: u64,
    /// Free-form `key=value` lines describing the feature banks.
    pub banks: String,
    pub theta: Vec<f64>,
}

const MAGIC: &str = "# thermosched theta v1";

/// Text format: a magic line, `key=value` header lines, a `---` separator,
/// then one value per line in round-trip precision.
pub fn write_checkpoint<W: Write>(out: &mut W, ckpt: &Checkpoint) -> std::io::Result<()> {
    writeln!(out, "{MAGIC}")?;
    writeln!(out, "mode={}", ckpt.mode)?;
    writeln!(out, "dim={}", ckpt.theta.len())?;
    writeln!(out, "updates={}", ckpt.updates)?;
    writeln!(out, "banks={}", ckpt.banks)?;
    writeln!(out, "---")?;
    for v in &ckpt.theta {
        writeln!(out, "{v:?}")?;
    }
    Ok(())
}

pub fn read_checkpoint<R: BufRead>(input: R) -> Result<Checkpoint> {
    let bad = |m: String| Error::Parse { path: "checkpoint".into(), message: m };
    let mut lines = input.lines();
    let magic = lines.next().transpose()?.unwrap_or_default();
    if magic != MAGIC {
        return Err(bad(format!("unexpected header {magic:?}")));
    }
    let (mut mode, mut dim, mut updates, mut banks) = (None, None, 0u64, String::new());
    for line in lines.by_ref() {
        let line = line?;
        if line == "---" {
            break;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| bad(format!("malformed header line {line:?}")))?;
        match k {
            "mode" => mode = Some(v.to_string()),
            "dim" => dim = Some(v.parse::<usize>().map_err(|e| bad(e.to_string()))?),
            "updates" => updates = v.parse().map_err(|e: std::num::ParseIntError| bad(e.to_string()))?,
            "banks" => banks = v.to_string(),
            _ => return Err(bad(format!("unknown header key {k:?}"))),
        }
    }
    let dim = dim.ok_or_else(|| bad("missing dim".into()))?;
    let mut theta = Vec::with_capacity(dim);
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        theta.push(line.trim().parse::<f64>().map_err(|e| bad(e.to_string()))?);
    }
    if theta.len() != dim {
        return Err(Error::Dimension { expected: dim, got: theta.len() });
    }
    Ok(Checkpoint { mode: mode.ok_or_else(|| bad("missing mode".into()))?, updates, banks, theta })
}
