mod common;

use common::criteria::highlight_validity;

#[test]
fn fuzzed_judge_output_never_stores_invalid_phrases() {
    highlight_validity(5000).unwrap();
}
