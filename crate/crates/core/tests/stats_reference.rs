//! Paired-test p-values against reference values from scipy.

mod common;

use coldstart_core::eval::stats::{cohens_d, paired_t_test, wilcoxon};
use common::cases;

#[test]
fn matches_reference_statistics() {
    for (i, c) in cases().iter().enumerate() {
        let t = paired_t_test(&c.a, &c.b).unwrap();
        assert!(
            (t.statistic - c.t).abs() < 1e-9,
            "case {i}: t {} vs {}",
            t.statistic,
            c.t
        );
        assert!(
            (t.p_value - c.t_p).abs() < 1e-6,
            "case {i}: t p {} vs {}",
            t.p_value,
            c.t_p
        );
        let w = wilcoxon(&c.a, &c.b).unwrap();
        assert_eq!(w.method, c.method, "case {i}");
        assert_eq!(w.statistic, c.w, "case {i}");
        assert!(
            (w.p_value - c.w_p).abs() < 1e-6,
            "case {i}: w p {} vs {}",
            w.p_value,
            c.w_p
        );
        let d = cohens_d(&c.a, &c.b).unwrap().unwrap();
        assert!((d - c.d).abs() < 1e-9, "case {i}: d {d} vs {}", c.d);
    }
}

#[test]
fn textbook_pairs() {
    let a = [1.0, 2.0, 3.0, 4.0, 5.0];
    let b = [2.0, 4.0, 6.0, 8.0, 10.0];
    let d = cohens_d(&a, &b).unwrap().unwrap();
    assert!((d + 1.897).abs() < 0.01);
    let t = paired_t_test(&a, &b).unwrap();
    assert!((t.statistic + 4.242640687119285).abs() < 1e-9);
    assert!((t.p_value - 0.013235599563682695).abs() < 1e-6);
    let w = wilcoxon(&a, &b).unwrap();
    assert!((w.p_value - 0.0625).abs() < 1e-12);
}
