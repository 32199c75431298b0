//! Prints mean (sd) accuracy of the 10-fold protocol, averaged over ten
//! repetitions, for every simulation design.
//!
//! cargo run --release --example simulation_table

use fcpca::experiment::{grand_mean_accuracy, simulation_study, PipelineConfig};
use fcpca::simgen::ModelId;
use fcpca::Execution;

fn main() -> fcpca::Result<()> {
    let seeds: Vec<u64> = (1..=10).collect();
    let config = PipelineConfig::default();
    for model in ModelId::ALL.into_iter().skip(1) {
        let start = std::time::Instant::now();
        let reports = simulation_study(model, &seeds, 10, &config, Execution::Parallel)?;
        let fold_acc: Vec<f64> = reports.iter().flat_map(|r| r.accuracies()).collect();
        let (_, sd) = fcpca::dataio::mean_sd(&fold_acc);
        println!(
            "{:<8} {:.3} ({:.2})  [{:.1}s]",
            model.name(),
            grand_mean_accuracy(&reports),
            sd,
            start.elapsed().as_secs_f64()
        );
    }
    Ok(())
}
