pub mod bench;
pub mod broker;
pub mod convert;
pub mod emulate;
pub mod query;

use std::io::Write;
use std::path::Path;

/// Writes report text to a file or stdout when no path is given.
pub fn write_output(path: Option<&Path>, content: &str) -> anyhow::Result<()> {
    match path {
        Some(path) => {
            std::fs::write(path, content)?;
            Ok(())
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(content.as_bytes())?;
            if !content.ends_with('\n') {
                stdout.write_all(b"\n")?;
            }
            Ok(())
        }
    }
}

/// Parses a comma-separated list of positive integers, e.g. `1,4,16`.
pub fn parse_usize_list(text: &str) -> anyhow::Result<Vec<usize>> {
    let mut out = Vec::new();
    for part in text.split(',') {
        let value: usize = part
            .trim()
            .parse()
            .map_err(|_| anyhow::anyhow!("invalid list entry {part:?}"))?;
        if value == 0 {
            anyhow::bail!("list entries must be positive, got 0");
        }
        out.push(value);
    }
    if out.is_empty() {
        anyhow::bail!("empty list");
    }
    Ok(out)
}
