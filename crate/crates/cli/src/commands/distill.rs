use featdistill::distill::{distill_fit, DistillConfig, StopReason};
use featdistill::embedstore::EmbeddingSet;
use serde::Serialize;

use super::{load_set, start, write_report};
use crate::args::DistillArgs;
use crate::config::{flag_object, resolve};
use crate::CliResult;

#[derive(Serialize)]
struct DistillSummary {
    n_pairs: usize,
    student_only: usize,
    teacher_only: usize,
    steps_run: usize,
    total_steps: usize,
    stop_reason: StopReason,
    initial_loss: Option<f64>,
    final_loss: Option<f64>,
}

pub fn run(args: DistillArgs) -> CliResult<()> {
    let config: DistillConfig = resolve(args.common.config.as_deref(), flag_object(&args.flags, args.common.seed))?;
    config.validate()?;
    let mut run = start(&args.common, "distill");
    let student = load_set(&mut run, "student", &args.student)?;
    let teacher = load_set(&mut run, "teacher", &args.teacher)?;

    let (fit, pairs) = distill_fit::<f64>(&student, &teacher, &config)?;

    let mut trace = Vec::new();
    for r in &fit.trace {
        serde_json::to_writer(&mut trace, r).expect("trace serializes");
        trace.push(b'\n');
    }
    run.output_file("trace", "trace.jsonl", &trace)?;
    run.output_json("model", "model.json", &fit.model)?;
    if args.project {
        let projected = fit.model.project(&student.to_matrix::<f64>())?;
        let set = EmbeddingSet::from_matrix(
            &projected,
            student.meta().to_vec(),
            student.class_names().to_vec(),
            format!("{} projected to teacher space", student.provenance()),
        )?;
        run.output_set("projected", "projected", &set)?;
    }
    let summary = DistillSummary {
        n_pairs: pairs.pairs.len(),
        student_only: pairs.student_only,
        teacher_only: pairs.teacher_only,
        steps_run: fit.steps_run,
        total_steps: fit.total_steps,
        stop_reason: fit.stop_reason,
        initial_loss: fit.trace.first().map(|r| r.loss),
        final_loss: fit.trace.last().map(|r| r.loss),
    };
    eprintln!(
        "distill: {} pairs, {} of {} steps ({:?}), loss {:.4} -> {:.4}",
        summary.n_pairs,
        summary.steps_run,
        summary.total_steps,
        summary.stop_reason,
        summary.initial_loss.unwrap_or(f64::NAN),
        summary.final_loss.unwrap_or(f64::NAN),
    );
    write_report(&mut run, "distill", &config, &summary)?;
    run.finish(&config, config.seed)?;
    Ok(())
}
