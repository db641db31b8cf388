//! Independent reference computations the engine's answers are checked against.

use std::collections::{BTreeSet, HashMap};

use thematic_core::{Transcript, VerbatimCode};

fn fold(s: &str) -> Vec<char> {
    let joined = s.split_whitespace().collect::<Vec<_>>().join(" ");
    joined
        .chars()
        .map(|c| {
            let lower: Vec<char> = c.to_lowercase().collect();
            if lower.len() == 1 { lower[0] } else { c }
        })
        .collect()
}

/// Edit distance by the textbook recursion, memoized on suffix pairs.
pub fn levenshtein(a: &str, b: &str) -> usize {
    fn go(a: &[char], b: &[char], i: usize, j: usize, memo: &mut HashMap<(usize, usize), usize>) -> usize {
        if i == a.len() {
            return b.len() - j;
        }
        if j == b.len() {
            return a.len() - i;
        }
        if let Some(&v) = memo.get(&(i, j)) {
            return v;
        }
        let v = if a[i] == b[j] {
            go(a, b, i + 1, j + 1, memo)
        } else {
            1 + go(a, b, i + 1, j, memo).min(go(a, b, i, j + 1, memo)).min(go(a, b, i + 1, j + 1, memo))
        };
        memo.insert((i, j), v);
        v
    }
    let (a, b) = (fold(a), fold(b));
    go(&a, &b, 0, 0, &mut HashMap::new())
}

pub fn normalized(a: &str, b: &str) -> f64 {
    let denom = fold(a).len().max(fold(b).len());
    if denom == 0 {
        return 0.0;
    }
    levenshtein(a, b) as f64 / denom as f64
}

fn full_matrix(a: &[char], b: &[char]) -> usize {
    let mut m = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for (i, row) in m.iter_mut().enumerate() {
        row[0] = i;
    }
    for (j, cell) in m[0].iter_mut().enumerate() {
        *cell = j;
    }
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            let cost = usize::from(a[i - 1] != b[j - 1]);
            m[i][j] = (m[i - 1][j - 1] + cost).min(m[i - 1][j] + 1).min(m[i][j - 1] + 1);
        }
    }
    m[a.len()][b.len()]
}

/// Smallest normalized distance between the phrase and any window of any
/// paragraph whose length lies within `phrase_len * (1 ± band)`.
pub fn min_window_distance(phrase: &str, transcript: &Transcript, band: f64) -> f64 {
    let q = fold(phrase);
    let n = q.len() as f64;
    let lo = (n * (1.0 - band)).ceil().max(1.0) as usize;
    let hi = (n * (1.0 + band)).floor() as usize;
    let mut best = f64::INFINITY;
    for p in &transcript.paragraphs {
        let text = fold(&p.text);
        for start in 0..text.len() {
            for len in lo..=hi {
                if start + len > text.len() {
                    break;
                }
                let w = &text[start..start + len];
                let d = full_matrix(&q, w) as f64 / q.len().max(w.len()) as f64;
                best = best.min(d);
            }
        }
    }
    best
}

/// Paragraphs touched by at least one of the given codes.
pub fn covered_paragraphs<'a>(codes: impl IntoIterator<Item = &'a VerbatimCode>) -> BTreeSet<usize> {
    let mut out = BTreeSet::new();
    for c in codes {
        let mut p = c.location.paragraph_start;
        while p <= c.location.paragraph_end {
            out.insert(p);
            p += 1;
        }
    }
    out
}
