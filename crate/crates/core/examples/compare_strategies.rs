//! One drop, three beamforming strategies, with and without rate reuse.
//!
//! cargo run --release -p gusim-core --example compare_strategies

use std::time::Instant;

use gusim::channel::ScenarioConfig;
use gusim::fairness::{run_realization, RealizationParams};
use gusim::StrategyKind;

fn main() -> gusim::Result<()> {
    let scenario = ScenarioConfig {
        num_subchannels: 13,
        num_bs_antennas: 16,
        num_user_antennas: 4,
        ..ScenarioConfig::uma()
    };
    println!(
        "{:<8} {:>6} {:>10} {:>9} {:>12}",
        "strategy", "reuse", "GM [Mbps]", "time [s]", "ZF solves"
    );
    for strategy in StrategyKind::ALL {
        for reuse in [true, false] {
            let params = RealizationParams {
                horizon: 12,
                reuse,
                ..RealizationParams::new(strategy, 10, 5.0)
            };
            let start = Instant::now();
            let r = run_realization(&scenario, &params, 1)?;
            println!(
                "{:<8} {:>6} {:>10.3} {:>9.3} {:>12}",
                strategy.to_string(),
                reuse,
                r.gm,
                start.elapsed().as_secs_f64(),
                r.stats.zf_computations
            );
        }
    }
    Ok(())
}
