//! Paired-test reference cases. Expected values were produced by scipy 1.15.3
//! (`scipy.stats.ttest_rel`, `scipy.stats.wilcoxon` with default arguments).

use coldstart_core::eval::stats::WilcoxonMethod;

pub struct Case {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub t: f64,
    pub t_p: f64,
    pub w: f64,
    pub w_p: f64,
    pub d: f64,
    pub method: WilcoxonMethod,
}

fn f(v: &[i32]) -> Vec<f64> {
    v.iter().map(|x| *x as f64).collect()
}

const A3: [f64; 80] = [
    0.3, 0.4, 0.2, 0.1, 0.2, 0.1, 0.3, 0.6, 0.2, 0.2, 0.4, 0.4, 0.3, 0.1, 0.3, 0.4, 0.0, 0.2, -0.1, 0.0, -0.1, 0.3,
    0.0, 0.4, 0.3, 0.3, -0.2, 0.2, 0.3, 0.3, 0.0, 0.2, 0.1, 0.1, 0.5, 0.1, 0.3, 0.5, 0.2, 0.3, 0.3, 0.3, 0.1, 0.3, 0.6,
    0.0, 0.5, 0.3, 0.2, 0.7, 0.5, 0.1, 0.3, 0.4, 0.3, 0.4, 0.3, 0.4, 0.6, 0.2, 0.3, 0.2, 0.3, 0.1, 0.2, 0.3, 0.5, 0.5,
    0.0, 0.1, 0.4, -0.1, 0.2, 0.3, 0.6, 0.4, 0.2, 0.2, 0.2, 0.6,
];
const B3: [f64; 80] = [
    0.2, 0.2, 0.3, 0.2, 0.2, 0.0, 0.2, 0.2, 0.5, 0.4, 0.2, 0.4, 0.2, 0.5, 0.2, 0.4, 0.0, 0.3, -0.1, -0.2, 0.2, 0.1,
    0.3, 0.7, 0.1, 0.1, 0.3, 0.3, 0.2, 0.2, 0.4, 0.4, 0.0, 0.2, 0.3, 0.0, 0.3, 0.1, 0.4, 0.3, 0.3, 0.1, 0.2, -0.1, 0.0,
    0.3, -0.2, 0.4, -0.1, 0.4, 0.1, 0.4, 0.3, -0.1, 0.5, 0.5, 0.2, 0.2, 0.2, 0.1, 0.5, 0.1, 0.2, 0.1, 0.1, 0.0, 0.5,
    0.2, 0.4, 0.3, 0.1, 0.2, 0.1, 0.3, 0.2, 0.2, 0.0, 0.1, 0.6, 0.1,
];

pub fn cases() -> Vec<Case> {
    vec![
        // distinct nonzero differences, exact null distribution
        Case {
            a: f(&[20, 15, 31, 12, 40, 22, 18, 27, 35, 16, 24, 29, 14, 33, 21]),
            b: f(&[17, 16, 24, 10, 29, 26, 13, 18, 41, 8, 11, 39, 2, 19, 6]),
            t: 2.6087102421535393,
            t_p: 0.0206246164867267,
            w: 21.0,
            w_p: 0.02557373046875,
            d: 0.6735660881960918,
            method: WilcoxonMethod::Exact,
        },
        // ties and a zero with n = 12: sign-flip enumeration
        Case {
            a: f(&[3, 5, 2, 4, 4, 6, 3, 5, 2, 7, 4, 3]),
            b: f(&[2, 5, 3, 2, 2, 4, 1, 3, 4, 4, 2, 1]),
            t: 2.9163598267661106,
            t_p: 0.01402852787070647,
            w: 8.0,
            w_p: 0.02734375,
            d: 0.841880565518612,
            method: WilcoxonMethod::Permutation,
        },
        // n = 80 with many ties and zeros: normal approximation
        Case {
            a: A3.to_vec(),
            b: B3.to_vec(),
            t: 1.6854734643073883,
            t_p: 0.0958436039051096,
            w: 944.0,
            w_p: 0.1608479120452806,
            d: 0.1884416620231693,
            method: WilcoxonMethod::Normal,
        },
        // ties with n = 15: normal approximation
        Case {
            a: f(&[12, 15, 9, 20, 14, 11, 18, 16, 13, 22, 17, 10, 19, 21, 8]),
            b: f(&[10, 16, 2, 14, 15, 5, 9, 20, 1, 9, 11, 14, 8, 25, 10]),
            t: 2.3703656305349385,
            t_p: 0.03266904760775675,
            w: 24.5,
            w_p: 0.04334793588605966,
            d: 0.6120257740989506,
            method: WilcoxonMethod::Normal,
        },
    ]
}
