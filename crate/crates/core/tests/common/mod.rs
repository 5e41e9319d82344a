//! Brute-force reference implementations of the voting rules and a random matrix source.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use topodetect::Verdict;

/// Position of the smallest entry (lowest index on ties) by sorting; `None` if all entries are equal.
pub fn brute_row_vote(row: &[f64]) -> Option<usize> {
    let mut idx: Vec<usize> = (0..row.len()).collect();
    idx.sort_by(|&a, &b| row[a].total_cmp(&row[b]).then(a.cmp(&b)));
    let (lo, hi) = (row[*idx.first()?], row[*idx.last()?]);
    (lo != hi).then_some(idx[0])
}

pub fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|r| (0..m.ncols()).map(|c| m[(r, c)]).collect()).collect()
}

pub fn brute_rmv(m: &DMatrix<f64>) -> Verdict {
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for r in rows(m) {
        if let Some(q) = brute_row_vote(&r) {
            *counts.entry(q).or_default() += 1;
        }
    }
    let Some(&best) = counts.values().max() else {
        return Verdict::Inconclusive;
    };
    let winners: Vec<usize> = counts.iter().filter(|(_, &n)| n == best).map(|(&q, _)| q).collect();
    if winners.len() == 1 {
        Verdict::Topology(winners[0])
    } else {
        Verdict::Inconclusive
    }
}

pub fn brute_armv(m: &DMatrix<f64>) -> Verdict {
    let mut means = vec![0.0; m.ncols()];
    for (c, mean) in means.iter_mut().enumerate() {
        for r in 0..m.nrows() {
            *mean += m[(r, c)];
        }
        *mean /= m.nrows() as f64;
    }
    let mut idx: Vec<usize> = (0..means.len()).collect();
    idx.sort_by(|&a, &b| means[a].total_cmp(&means[b]).then(a.cmp(&b)));
    idx.first().map_or(Verdict::Inconclusive, |&q| Verdict::Topology(q))
}

pub fn brute_ormv(m: &DMatrix<f64>) -> Verdict {
    let votes: BTreeSet<usize> = rows(m).iter().filter_map(|r| brute_row_vote(r)).collect();
    match votes.len() {
        1 => Verdict::Topology(*votes.first().unwrap()),
        _ => Verdict::Inconclusive,
    }
}

/// Random non-negative matrices. Every other matrix uses small integers so ties and
/// constant rows occur often.
pub fn random_matrices(count: usize, rows: usize, cols: usize, seed: u64) -> Vec<DMatrix<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|k| {
            if k % 2 == 0 {
                DMatrix::from_fn(rows, cols, |_, _| rng.random::<f64>())
            } else {
                DMatrix::from_fn(rows, cols, |_, _| f64::from(rng.random_range(0u8..3)))
            }
        })
        .collect()
}
