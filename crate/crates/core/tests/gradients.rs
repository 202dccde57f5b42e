mod common;

#[test]
fn autodiff_matches_central_differences() {
    for (name, c) in common::gradient_suite(60, 11) {
        assert!(c.checked >= 60, "{name}: only {} usable coordinates ({} near kinks)", c.checked, c.kinks);
        assert!(c.failures.is_empty(), "{name}: {:#?}", c.failures);
    }
}
