//! Times full training epochs on random graphs of growing size. With two
//! edges per node the per-epoch cost should grow about linearly in n.
//!
//! cargo run --release --example epoch_scaling -- [max-n]

use gcn::model::GcnConfig;
use gcn::train::benchmark_epoch;
use gcn::Error;

fn main() -> gcn::Result<()> {
    let max_n: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(100_000);
    let config = GcnConfig {
        early_stop_window: None,
        ..GcnConfig::default()
    };
    let mut n = 1_000;
    let mut prev: Option<f64> = None;
    while n <= max_n {
        match benchmark_epoch(n, &config, 10) {
            Ok(r) => {
                let ratio = prev.map(|p| format!("{:.1}x", r.mean_s / p)).unwrap_or_default();
                println!("n={n:>8}  {:.4} s/epoch ± {:.4}  {ratio}", r.mean_s, r.std_s);
                prev = Some(r.mean_s);
            }
            Err(Error::OutOfMemory { bytes, .. }) => {
                println!("n={n:>8}  skipped, needs about {} MiB", bytes >> 20);
                break;
            }
            Err(e) => return Err(e),
        }
        n *= 10;
    }
    Ok(())
}
