//! Finite-difference check of every backward pass. Pass `--fault` to corrupt the swish
//! derivative and watch the check fail.

use bcresnet::gradcheck::{run, Fault, GradcheckOptions};

fn main() -> bcresnet::Result<()> {
    let fault = std::env::args().any(|a| a == "--fault");
    let opts = GradcheckOptions {
        fault: fault.then_some(Fault::SwishDerivative),
        ..GradcheckOptions::default()
    };
    let report = run(&opts)?;
    println!("{report}");
    std::process::exit(if report.passed() { 0 } else { 1 });
}
