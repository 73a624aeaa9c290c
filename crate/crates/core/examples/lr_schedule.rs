//! Prints the warmup-then-cosine learning rate at the start of every few epochs.
//!
//! ```text
//! cargo run --example lr_schedule -- 200
//! ```

use bcresnet::train::ScheduleConfig;

fn main() {
    let epochs: usize = std::env::args()
        .nth(1)
        .map_or(200, |e| e.parse().expect("epochs"));
    let schedule = ScheduleConfig::with_epochs(epochs);
    let step = (epochs / 20).max(1);
    for epoch in (0..=epochs).step_by(step) {
        let lr = schedule.lr_at(epoch as f64);
        let bar = "#".repeat((lr / schedule.peak_lr * 50.0).round() as usize);
        println!("epoch {epoch:>4}  lr {lr:.5}  {bar}");
    }
}
