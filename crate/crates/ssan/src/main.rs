use std::process::ExitCode;

use ssan::cli::{self, ParseFailure};
use ssan::experiment::{self, Outcome};

fn print_outcome(outcome: &Outcome) {
    match outcome {
        Outcome::GradientCheck(results) => {
            let mut worst: f64 = 0.0;
            for r in results {
                println!("{:<32} {:.3e}", r.name, r.max_relative_error);
                worst = worst.max(r.max_relative_error);
            }
            println!("max relative error {worst:.3e}");
        }
        Outcome::Synthesized(dir) => println!("wrote synthetic task to {}", dir.display()),
        Outcome::Aggregate(report) => {
            println!(
                "{:<16} {:>5} {:>9} {:>9} {:>11}",
                "variant", "runs", "mean", "std", "p vs full"
            );
            for v in &report.variants {
                let (mean, std) = v.summary.map_or((f64::NAN, f64::NAN), |s| (s.mean, s.std));
                let p = v.versus_full.map_or(String::from("-"), |w| format!("{:.3e}", w.p));
                println!(
                    "{:<16} {:>5} {:>9.4} {:>9.4} {:>11}",
                    v.variant,
                    v.accuracies.len(),
                    mean,
                    std,
                    p
                );
            }
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let spec = match cli::parse_args(std::env::args_os()) {
        Ok(spec) => spec,
        Err(ParseFailure::Clap(e)) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
        Err(ParseFailure::Resolve(e)) => {
            eprintln!("error: {e}");
            return e.into();
        }
    };
    match experiment::run_experiment(&spec) {
        Ok(outcome) => {
            print_outcome(&outcome);
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.into()
        }
    }
}
