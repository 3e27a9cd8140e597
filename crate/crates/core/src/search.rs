use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

/// One retrieved unit (paragraph or document).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchHit {
    pub unit_id: String,
    /// Parent document of the unit (the unit itself for document indexes).
    pub doc_id: String,
    pub score: f64,
    /// 1-based.
    pub rank: usize,
}

/// Score descending, then id ascending.
pub(crate) fn by_score_then_id(a: (f64, &str), b: (f64, &str)) -> Ordering {
    b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1))
}

/// Keeps the best `k` of `items` under `cmp`, sorted.
pub(crate) fn top_k_by<T, F>(mut items: Vec<T>, k: usize, cmp: F) -> Vec<T>
where
    F: Fn(&T, &T) -> Ordering,
{
    if items.len() > k && k > 0 {
        items.select_nth_unstable_by(k - 1, &cmp);
        items.truncate(k);
    } else if k == 0 {
        items.clear();
    }
    items.sort_unstable_by(cmp);
    items
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn top_k_matches_full_sort() {
        let xs: Vec<(f64, String)> = (0..100).map(|i| (((i * 37) % 11) as f64, format!("u{i:03}"))).collect();
        let cmp = |a: &(f64, String), b: &(f64, String)| by_score_then_id((a.0, &a.1), (b.0, &b.1));
        let mut full = xs.clone();
        full.sort_by(cmp);
        for k in [0, 1, 5, 99, 100, 150] {
            let got = top_k_by(xs.clone(), k, cmp);
            assert_eq!(got, full[..k.min(100)].to_vec());
        }
    }
}
