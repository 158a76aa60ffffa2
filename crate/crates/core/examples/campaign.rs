// SPDX-License-Identifier: Apache-2.0

//! A small campaign into a scratch run directory: four fresh chips and one
//! chip for each of 1, 6 and 12 months.
//!
//!     cargo run --example campaign -- [out-dir]

use std::path::PathBuf;

use agewise::campaign::{cmd_campaign, report_dir, CampaignConfig, DEFAULT_CONFIG};

fn main() {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("agewise-campaign"));
    let cfg = CampaignConfig::parse(
        DEFAULT_CONFIG,
        &["seed=5".into(), "chips.counts=[4, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 0, 1]".into()],
    )
    .unwrap();
    let outcome = cmd_campaign(&cfg, &out, None).unwrap();
    println!("{} chips under {}", outcome.chips.len(), out.display());
    print!("{}", std::fs::read_to_string(report_dir(&out).join("summary.txt")).unwrap());
}
