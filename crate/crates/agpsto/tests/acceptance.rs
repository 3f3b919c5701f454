//! Acceptance suite — placeholder while the stack is under construction.
#[test]
fn acceptance_suite_placeholder() {}
