use std::io::Read;
use std::path::PathBuf;

use clap::Args;
use fedmon_core::xform::{netlogger_to_json, parse_xml, xml_to_json};

use super::write_output;

#[derive(Args)]
pub struct ConvertArgs {
    /// Input file; stdin when omitted.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Output file; stdout when omitted.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Input format; `auto` sniffs XML by a leading `<`.
    #[arg(long, default_value = "auto", value_parser = ["auto", "xml", "netlogger"])]
    pub from: String,
}

pub fn run(args: ConvertArgs) -> anyhow::Result<()> {
    let text = match &args.input {
        Some(path) => std::fs::read_to_string(path)
            .map_err(|e| anyhow::anyhow!("cannot read {}: {e}", path.display()))?,
        None => {
            let mut buf = String::new();
            std::io::stdin().read_to_string(&mut buf)?;
            buf
        }
    };

    let format = match args.from.as_str() {
        "auto" => {
            if text.trim_start().starts_with('<') {
                "xml"
            } else {
                "netlogger"
            }
        }
        other => other,
    };

    let out = match format {
        "xml" => {
            let tree = parse_xml(&text)?;
            let mut s = xml_to_json(&tree).canonical_string();
            s.push('\n');
            s
        }
        _ => {
            // one JSON object per NetLogger event line; blank lines skipped
            let mut s = String::new();
            for (line_no, line) in text.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                let doc = netlogger_to_json(line)
                    .map_err(|e| anyhow::anyhow!("line {}: {e}", line_no + 1))?;
                s.push_str(&doc.canonical_string());
                s.push('\n');
            }
            s
        }
    };
    write_output(args.output.as_deref(), &out)
}
