use std::path::Path;

use anyhow::{bail, Context};
use otsopf::caseio::{load_case, load_switchable};
use otsopf::cases;
use otsopf::netmodel::{validate, Network, Severity};

use crate::CommonArgs;

/// Reads the case named by `--case`, applies the switchable sidecar and
/// rejects networks with validation errors.
pub fn load(args: &CommonArgs) -> anyhow::Result<Network> {
    let path = Path::new(&args.case);
    let mut net = if path.exists() {
        load_case(path)?
    } else if cases::text(&args.case).is_some() {
        log::info!("using bundled case {}", args.case);
        cases::load(&args.case)?
    } else {
        bail!("cannot read case {}: no such file or bundled case", args.case);
    };
    if let Some(sw) = &args.switchable {
        let text = std::fs::read_to_string(sw).with_context(|| format!("cannot read {}", sw.display()))?;
        net = load_switchable(&net, &text)?;
    }
    let problems = validate(&net);
    for p in problems.iter().filter(|p| p.severity == Severity::Warning) {
        log::warn!("{p}");
    }
    let errors: Vec<String> = problems
        .iter()
        .filter(|p| p.severity == Severity::Error)
        .map(|p| p.to_string())
        .collect();
    if !errors.is_empty() {
        bail!("invalid network:\n  {}", errors.join("\n  "));
    }
    Ok(net)
}
