//! The sampled REINFORCE gradient against the exact gradient of E[R].

mod support;

#[test]
fn policy_gradient_is_unbiased_for_every_discount() {
    for (kind, checks) in support::estimator_suite() {
        for (d, c) in checks.iter().enumerate() {
            eprintln!(
                "{kind} dir {d}: exact {:.6} sampled {:.6} se {:.6} z {:.2}",
                c.exact,
                c.mean,
                c.std_error,
                c.z_score()
            );
            assert!(c.std_error > 0.0);
            assert!(c.z_score() <= 3.0, "{kind} direction {d}: {c:?}");
        }
        assert!(
            checks.iter().any(|c| c.exact.abs() > 3.0 * c.std_error),
            "{kind}: exact gradient indistinguishable from zero, oracle is vacuous"
        );
    }
}
