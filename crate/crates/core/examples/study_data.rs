//! Questionnaire and HbO ingestion feeding the condition comparison.
//!
//!     cargo run --example study_data

use pitchcoach::session::{ingest_hbo, ingest_questionnaire, QuestionnaireScales};
use pitchcoach::stats::{block_average_hbo, one_way_anova, GroupedData};

const QUESTIONNAIRE: &str = "\
participant_id,condition,instrument,item_1,item_2,item_3,item_4
p01,sync,GEQ,3,4,3,2
p02,sync,GEQ,4,4,3,3
p03,terminal,GEQ,2,1,2,2
p04,terminal,GEQ,1,2,2,1
p01,sync,IMI,6,7,5,
p03,terminal,IMI,4,3,4,
";

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (table, means) = ingest_questionnaire(QUESTIONNAIRE, &QuestionnaireScales::default())?;
    println!("{} questionnaire rows", table.rows.len());
    for m in &means {
        println!("  {} {:<8} {:?} mean {:.2} over {} items", m.participant_id, m.condition, m.instrument, m.mean, m.n_items);
    }
    let geq = GroupedData::from_rows(
        means
            .iter()
            .filter(|m| format!("{:?}", m.instrument) == "Geq")
            .map(|m| (m.condition.clone(), m.mean)),
    )?;
    let r = one_way_anova(&geq);
    println!("GEQ by condition: F({}, {}) = {:.3}, p = {:.4}", r.df_between, r.df_within, r.f_stat, r.p_value);

    // two channels at 10 Hz; a response block from 2 s to 4 s
    let mut csv = String::from("t_ms,S1_D1,S2_D1\n");
    for i in 0..60 {
        let t = i as f64 * 100.0;
        let bump = if (2000.0..4000.0).contains(&t) { 0.8 } else { 0.0 };
        csv.push_str(&format!("{t},{:.3},{:.3}\n", 0.1 + bump, 0.05 + bump / 2.0));
    }
    let series = ingest_hbo(&csv)?;
    let chans: Vec<usize> = ["S1_D1", "S2_D1"].iter().filter_map(|c| series.channel_index(c)).collect();
    let blocks = block_average_hbo(&series, &[(0.0, 2000.0), (2000.0, 2000.0), (4000.0, 2000.0), (9000.0, 500.0)], &chans);
    println!("HbO block means: {blocks:?}");
    Ok(())
}
