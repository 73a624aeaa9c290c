//! Scans a Speech Commands directory, rebalances the unknown and silence classes and
//! prints per-class counts. Optionally writes the rebalanced manifest as CSV.
//!
//! ```text
//! cargo run --example speech_commands_manifest -- /data/speech_commands_v0.02 v2 manifest.csv
//! ```

use std::fs::File;

use bcresnet::dataset::{class_name, load_manifest, rebalance, Split, Version, N_CLASSES};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> bcresnet::Result<()> {
    let mut args = std::env::args().skip(1);
    let Some(root) = args.next() else {
        eprintln!("usage: speech_commands_manifest ROOT [v1|v2] [OUT.csv]");
        std::process::exit(2);
    };
    let version: Version = args.next().as_deref().unwrap_or("v2").parse()?;

    let raw = load_manifest(&root, version)?;
    let balanced = rebalance(&raw, &mut ChaCha8Rng::seed_from_u64(7))?;
    println!("{} background clips", raw.background.len());
    println!(
        "{:<10} {:>8} {:>8} {:>8} {:>8}",
        "class", "train", "balanced", "val", "test"
    );
    let counts = |m: &bcresnet::dataset::Manifest, s| m.class_counts(s);
    let (t0, t1, v, te) = (
        counts(&raw, Split::Train),
        counts(&balanced, Split::Train),
        counts(&balanced, Split::Val),
        counts(&balanced, Split::Test),
    );
    for c in 0..N_CLASSES {
        println!(
            "{:<10} {:>8} {:>8} {:>8} {:>8}",
            class_name(c),
            t0[c],
            t1[c],
            v[c],
            te[c]
        );
    }

    if let Some(out) = args.next() {
        balanced.write_csv(File::create(&out)?)?;
        println!("wrote {out}");
    }
    Ok(())
}
