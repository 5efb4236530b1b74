mod support;

use support::Outcome;

fn assert_all(outcomes: Vec<Outcome>) {
    let failed: Vec<String> = outcomes
        .iter()
        .filter(|o| !o.pass)
        .map(|o| format!("{}: {:e}", o.name, o.value))
        .collect();
    assert!(failed.is_empty(), "{failed:#?}");
}

#[test]
fn adapter_variants_match_finite_differences() {
    assert_all(support::adapter_gradients());
}

#[test]
fn rga_path_matches_finite_differences() {
    assert_all(support::rga_gradients());
}

#[test]
fn decoder_and_classifier_match_finite_differences() {
    assert_all(support::head_gradients());
}

#[test]
fn losses_match_finite_differences() {
    assert_all(support::loss_gradients());
}
