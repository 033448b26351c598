#[path = "support/gradcheck.rs"]
mod gradcheck;

use gradcheck::{check, random_cases, Report};

#[test]
fn analytic_gradients_match_central_differences() {
    let cases = random_cases(24, 2024);
    let mut total = Report::default();
    for case in &cases {
        let r = check(case);
        assert!(
            r.max_rel_error <= 1e-4,
            "{}: max relative error {:e} over {} parameters",
            case.name,
            r.max_rel_error,
            r.checked
        );
        total.merge(&r);
    }
    println!(
        "checked {} parameters, {} skipped at kinks, max relative error {:e}",
        total.checked, total.skipped_kinks, total.max_rel_error
    );
    assert!(total.skipped_kinks * 100 <= total.checked, "too many kink crossings");
}

#[test]
fn every_layer_kind_is_covered() {
    let names: Vec<String> = random_cases(24, 2024).into_iter().map(|c| c.name).collect();
    for kind in ["mlp", "cnn", "autoencoder"] {
        assert!(names.iter().filter(|n| n.starts_with(kind)).count() >= 8);
    }
}
