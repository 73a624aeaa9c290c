//! Parameter and multiply counts for the BC-ResNet family.
//!
//! ```text
//! cargo run --example cost_report -- 1.5 100
//! ```

use bcresnet::model::{cost_report, ModelConfig};

fn main() -> bcresnet::Result<()> {
    let mut args = std::env::args().skip(1);
    let taus: Vec<f64> = match args.next() {
        Some(t) => vec![t.parse().expect("tau must be a number")],
        None => vec![1.0, 1.5, 2.0, 3.0, 6.0, 8.0],
    };
    let frames: usize = args
        .next()
        .map_or(100, |f| f.parse().expect("frames must be an integer"));

    if taus.len() == 1 {
        println!("{}", cost_report(&ModelConfig::bc_resnet(taus[0]), frames)?);
        return Ok(());
    }
    println!("{:>5} {:>10} {:>14}", "tau", "params", "mults");
    for tau in taus {
        let r = cost_report(&ModelConfig::bc_resnet(tau), frames)?;
        println!("{:>5} {:>10} {:>14}", tau, r.params, r.mults);
    }
    Ok(())
}
