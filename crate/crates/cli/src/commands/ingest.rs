use std::collections::HashSet;

use featdistill::embedstore::{group_by_bag, ingest_csv};
use featdistill::Error;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{start, write_report};
use crate::args::IngestArgs;
use crate::config::{flag_object, resolve};
use crate::CliResult;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestConfig {
    /// Names in label order; derived from the largest label when absent.
    pub class_names: Option<Vec<String>>,
    pub provenance: String,
}

#[derive(Serialize)]
struct IngestSummary {
    n: usize,
    d: usize,
    checksum: String,
    class_names: Vec<String>,
    n_bags: Option<usize>,
}

pub fn run(args: IngestArgs) -> CliResult<()> {
    let config: IngestConfig = resolve(args.common.config.as_deref(), flag_object(&args.flags, None))?;
    let mut run = start(&args.common, "ingest");
    run.input_file("csv", &args.input)?;
    let set = ingest_csv(&args.input, config.class_names.clone(), &config.provenance)?;

    if let Some(tiles) = &args.tiles {
        let bytes = run.input_file("tiles", tiles)?;
        let doc: Value = serde_json::from_slice(&bytes).map_err(|source| Error::Json {
            path: tiles.clone(),
            source,
        })?;
        let known: HashSet<&str> = doc["result"]["tiles"]
            .as_array()
            .map(|ts| ts.iter().filter_map(|t| t["sample_id"].as_str()).collect())
            .unwrap_or_default();
        let missing: Vec<&str> = set
            .meta()
            .iter()
            .map(|m| m.sample_id.as_str())
            .filter(|id| !known.contains(id))
            .collect();
        if !missing.is_empty() {
            return Err(Error::Invalid(format!(
                "{} sample ids have no tile in {}: {}",
                missing.len(),
                tiles.display(),
                missing.iter().take(5).copied().collect::<Vec<_>>().join(", ")
            ))
            .into());
        }
    }

    run.output_set("set", "set", &set)?;
    let summary = IngestSummary {
        n: set.n(),
        d: set.d(),
        checksum: featdistill::embedstore::checksum_hex(set.checksum()),
        class_names: set.class_names().to_vec(),
        n_bags: group_by_bag(&set).ok().map(|g| g.len()),
    };
    write_report(&mut run, "ingest", &config, &summary)?;
    eprintln!("ingest: {} rows x {} dims -> {}", set.n(), set.d(), run.path("set").display());
    run.finish(&config, args.common.seed.unwrap_or(0))?;
    Ok(())
}
