//! Word and character error rates for two systems, with the per-utterance
//! oracle and confidence-based selection.

use otfuse::eval::{
    confidence_select, edit_distance, error_rate, oracle_select, parse_references,
    selection_error_rate, HypothesisSet, Unit,
};

const REFS: &str = "utt1\tturn the lights off\nutt2\tplay some jazz\nutt3\twhat time is it\n";
const SYSTEM_A: &str = "utt1\tturn the light off\t0.9 0.8 0.4 0.9\n\
                        utt2\tplay some jazz\t0.9 0.9 0.7\n\
                        utt3\twhat time it\t0.6 0.5 0.6\n";
const SYSTEM_B: &str = "utt1\tturn the lights of\t0.7 0.7 0.6 0.5\n\
                        utt2\tplace some chess\t0.4 0.6 0.3\n\
                        utt3\twhat time is it\t0.9 0.9 0.8 0.9\n";

pub fn run_example() -> otfuse::Result<()> {
    let counts = edit_distance(&["a", "b", "c"], &["a", "x", "c", "d"]);
    println!("edit counts for abc -> axcd: {counts:?}");

    for unit in [Unit::Word, Unit::Char] {
        let refs = parse_references(REFS, unit)?;
        let sets = [
            HypothesisSet::parse("system_a", SYSTEM_A, unit)?,
            HypothesisSet::parse("system_b", SYSTEM_B, unit)?,
        ];
        println!("{unit:?} level:");
        for s in &sets {
            println!("  {:<10} {:5.1}%", s.system_name, 100.0 * error_rate(&refs, s)?);
        }
        let oracle = oracle_select(&sets, &refs)?;
        println!("  {:<10} {:5.1}%  picks {:?}", "oracle", 100.0 * oracle.wer, oracle.selection);
        let sbf = confidence_select(&sets)?;
        println!("  {:<10} {:5.1}%  picks {:?}", "confidence", 100.0 * selection_error_rate(&sets, &sbf, &refs)?, sbf);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().expect("wer_scoring example failed");
}
