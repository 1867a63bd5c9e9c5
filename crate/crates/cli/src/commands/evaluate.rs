use featdistill::evalbench::{run_benchmark, BenchConfig};
use featdistill::robustness::{robustness_cv, RobustnessConfig};
use featdistill::simmetrics::{cka_report, DEFAULT_SUBSAMPLES};
use serde::{Deserialize, Serialize};

use super::{load_set, start, write_report};
use crate::args::{CkaArgs, EvalKnnArgs, RobustnessArgs};
use crate::config::{flag_object, resolve};
use crate::CliResult;

pub fn eval_knn(args: EvalKnnArgs) -> CliResult<()> {
    let config: BenchConfig = resolve(args.common.config.as_deref(), flag_object(&args.flags, args.common.seed))?;
    config.validate()?;
    let mut run = start(&args.common, "eval-knn");
    let set = load_set(&mut run, "input", &args.input)?;
    let result = run_benchmark::<f64>(&set, &config)?;
    eprintln!("eval-knn: {} units, accuracy {:.4} ± {:.4}", result.n_units, result.mean, result.std);
    write_report(&mut run, "eval-knn", &config, &result)?;
    run.finish(&config, config.seed)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CkaConfig {
    pub n_subsamples: usize,
    /// `None`: all aligned rows, capped at 2048.
    pub subsample_size: Option<usize>,
    pub seed: u64,
}

impl Default for CkaConfig {
    fn default() -> Self {
        Self {
            n_subsamples: DEFAULT_SUBSAMPLES,
            subsample_size: None,
            seed: 0,
        }
    }
}

pub fn cka(args: CkaArgs) -> CliResult<()> {
    let config: CkaConfig = resolve(args.common.config.as_deref(), flag_object(&args.flags, args.common.seed))?;
    let mut run = start(&args.common, "cka");
    let x = load_set(&mut run, "x", &args.x)?;
    let y = load_set(&mut run, "y", &args.y)?;
    let result = cka_report::<f64>(&x, &y, config.n_subsamples, config.subsample_size, config.seed)?;
    eprintln!("cka: {} aligned rows, {:.4} ± {:.4}", result.n_aligned, result.mean, result.std);
    write_report(&mut run, "cka", &config, &result)?;
    run.finish(&config, config.seed)?;
    Ok(())
}

pub fn robustness(args: RobustnessArgs) -> CliResult<()> {
    let config: RobustnessConfig = resolve(args.common.config.as_deref(), flag_object(&args.flags, args.common.seed))?;
    let mut run = start(&args.common, "robustness");
    let set = load_set(&mut run, "input", &args.input)?;
    let result = robustness_cv::<f64>(&set, &config)?;
    eprintln!("robustness: index {:.4} ± {:.4} over {} folds", result.mean, result.std, result.per_fold.len());
    write_report(&mut run, "robustness", &config, &result)?;
    run.finish(&config, config.seed)?;
    Ok(())
}
