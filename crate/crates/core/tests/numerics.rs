mod common;

#[test]
fn objective_gradient_matches_finite_differences_8x8() {
    for (name, err) in common::gradient_errors(8, 40) {
        assert!(err < 1e-3, "{name}: {err:e}");
    }
}

#[test]
fn objective_gradient_matches_finite_differences_16x16() {
    for (name, err) in common::gradient_errors(16, 12) {
        assert!(err < 1e-3, "{name}: {err:e}");
    }
}

#[test]
fn numerical_identities() {
    let check = common::numerical_suite();
    assert!(check.pass, "{}", check.detail);
}
