mod common;

use waforensics::forge::random_script;

#[test]
fn random_scripts_match_their_ground_truth() {
    for seed in 0..20 {
        let script = random_script(seed, 80);
        let dir = tempfile::tempdir().unwrap();
        let (truth, bundle, analysis) = common::forge_and_analyze(&script, dir.path());
        let mismatches = common::oracle_mismatches(&truth, &bundle, &analysis);
        assert!(mismatches.is_empty(), "seed {seed}:\n{}", mismatches.join("\n"));
    }
}

#[test]
fn checker_notices_a_perturbed_truth() {
    let script = random_script(4, 80);
    let dir = tempfile::tempdir().unwrap();
    let (truth, bundle, analysis) = common::forge_and_analyze(&script, dir.path());
    assert!(common::oracle_mismatches(&truth, &bundle, &analysis).is_empty());

    let mut shifted = truth.clone();
    let entry = shifted.histories.values_mut().flatten().next().unwrap();
    entry.effective_time.0 += 1;
    assert!(!common::oracle_mismatches(&shifted, &bundle, &analysis).is_empty());

    let mut extra = truth.clone();
    extra.deleted_contacts.insert("393300000000@s.whatsapp.net".into());
    assert!(!common::oracle_mismatches(&extra, &bundle, &analysis).is_empty());

    let mut fewer = truth.clone();
    fewer.partners.pop_first();
    assert!(!common::oracle_mismatches(&fewer, &bundle, &analysis).is_empty());

    let mut rows = bundle.clone();
    rows.messages.pop();
    assert!(!common::oracle_mismatches(&truth, &rows, &analysis).is_empty());
}
