//! Condition-level analysis: one-way ANOVA with Bonferroni-corrected pairwise
//! comparisons over per-participant scores.
//!
//!     cargo run --example anova

use pitchcoach::stats::{one_way_anova, render_anova_table, GroupedData};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let rows = [
        ("visual", [48.0, 52.5, 61.0, 44.2, 57.9, 50.3]),
        ("visual+haptic", [35.1, 41.8, 39.0, 30.6, 44.4, 37.2]),
        ("audio only", [66.3, 58.4, 71.9, 62.0, 69.5, 60.8]),
    ];
    let data = GroupedData::from_rows(
        rows.iter()
            .flat_map(|(label, vals)| vals.iter().map(move |&v| (*label, v))),
    )?;
    let result = one_way_anova(&data);
    print!("{}", render_anova_table("pitch deviation (cents)", &data, &result));
    Ok(())
}
