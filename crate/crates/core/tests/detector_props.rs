mod common;

use nalgebra::DMatrix;
use proptest::prelude::*;

use common::{brute_armv, brute_ormv, brute_rmv, brute_row_vote, random_matrices, rows};
use topodetect::detector::{armv_among, detect, detect_armv, row_votes};
use topodetect::{Criterion, Signal, Verdict};

fn matrix_strategy(max_rows: usize, max_cols: usize) -> impl Strategy<Value = DMatrix<f64>> {
    (1..=max_rows, 1..=max_cols).prop_flat_map(|(r, c)| {
        prop_oneof![
            prop::collection::vec(0.0f64..1.0, r * c),
            prop::collection::vec((0u8..3).prop_map(f64::from), r * c),
        ]
        .prop_map(move |v| DMatrix::from_row_slice(r, c, &v))
    })
}

fn verdict(c: Criterion, m: &DMatrix<f64>) -> Verdict {
    detect(c, m, Signal::Angle).verdict
}

#[test]
fn exhaustive_three_by_three_over_small_values() {
    // every 3x3 matrix with entries in {0, 1, 2}
    for code in 0..3usize.pow(9) {
        let mut c = code;
        let m = DMatrix::from_fn(3, 3, |_, _| {
            let v = (c % 3) as f64;
            c /= 3;
            v
        });
        assert_eq!(verdict(Criterion::Rmv, &m), brute_rmv(&m), "{m}");
        assert_eq!(verdict(Criterion::Armv, &m), brute_armv(&m), "{m}");
        assert_eq!(verdict(Criterion::Ormv, &m), brute_ormv(&m), "{m}");
    }
}

#[test]
fn random_five_by_five_match_brute_force() {
    for m in random_matrices(2000, 5, 5, 42) {
        for c in Criterion::ALL {
            let expected = match c {
                Criterion::Rmv => brute_rmv(&m),
                Criterion::Armv => brute_armv(&m),
                Criterion::Ormv => brute_ormv(&m),
            };
            assert_eq!(verdict(c, &m), expected, "{c} on {m}");
        }
    }
}

proptest! {
    #[test]
    fn row_votes_match_sorting(m in matrix_strategy(6, 6)) {
        let expected: Vec<Option<usize>> = rows(&m).iter().map(|r| brute_row_vote(r)).collect();
        prop_assert_eq!(row_votes(&m), expected);
    }

    #[test]
    fn armv_invariant_under_positive_scaling(m in matrix_strategy(6, 6), exp in -20i32..20) {
        // powers of two scale exactly, so ties are preserved too
        let scaled = &m * 2f64.powi(exp);
        prop_assert_eq!(detect_armv(&scaled, Signal::Angle).verdict, detect_armv(&m, Signal::Angle).verdict);
    }

    #[test]
    fn ormv_conclusive_iff_all_votes_agree(m in matrix_strategy(6, 6)) {
        let votes: Vec<usize> = row_votes(&m).into_iter().flatten().collect();
        let agree = !votes.is_empty() && votes.iter().all(|&v| v == votes[0]);
        let ormv = verdict(Criterion::Ormv, &m);
        prop_assert_eq!(ormv != Verdict::Inconclusive, agree);
        // a unanimous verdict is also the plurality verdict
        if ormv != Verdict::Inconclusive {
            prop_assert_eq!(verdict(Criterion::Rmv, &m), ormv);
        }
    }

    #[test]
    fn armv_never_abstains_and_restriction_is_consistent(m in matrix_strategy(6, 6)) {
        let full = detect_armv(&m, Signal::Magnitude).verdict;
        prop_assert!(full != Verdict::Inconclusive);
        let all: Vec<usize> = (0..m.ncols()).collect();
        prop_assert_eq!(armv_among(&m, &all), full);
        // restricting to the winner and any other column keeps the winner
        let w = full.topology().unwrap();
        for o in 0..m.ncols() {
            let pair = [w.min(o), w.max(o)];
            let restricted = armv_among(&m, &pair);
            if restricted != full {
                // only a tie with a lower-index column can change the answer
                prop_assert!(o < w);
                prop_assert_eq!(m.column(o).sum(), m.column(w).sum());
            }
        }
    }

    #[test]
    fn adding_a_constant_row_changes_nothing(m in matrix_strategy(5, 5), c in 0.0f64..1.0) {
        let n = m.nrows();
        let mut ext = m.clone().insert_row(n, c);
        ext.row_mut(n).fill(c);
        prop_assert_eq!(verdict(Criterion::Rmv, &ext), verdict(Criterion::Rmv, &m));
        prop_assert_eq!(verdict(Criterion::Ormv, &ext), verdict(Criterion::Ormv, &m));
    }
}
