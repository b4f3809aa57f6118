//! Newline-delimited JSON trajectory logs: one interaction per line.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};
use sili_core::types::InteractionTrajectory;

pub fn write_trajectories<'a>(
    path: &Path,
    trajectories: impl IntoIterator<Item = &'a InteractionTrajectory>,
) -> Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut out = BufWriter::new(file);
    for t in trajectories {
        serde_json::to_writer(&mut out, t)?;
        out.write_all(b"\n")?;
    }
    out.flush().with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn read_trajectories(path: &Path) -> Result<Vec<InteractionTrajectory>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let t: InteractionTrajectory =
            serde_json::from_str(&line).with_context(|| format!("{}:{}", path.display(), n + 1))?;
        // Re-run constructor checks on untrusted input.
        out.push(InteractionTrajectory::new(t.index, t.transitions)?);
    }
    Ok(out)
}
