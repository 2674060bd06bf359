use serde::{Deserialize, Serialize};

use crate::domain::{tiou, TimeRange};

/// A captioned time span, predicted or annotated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptionedSpan {
    pub range: TimeRange,
    pub caption: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SodaScore {
    pub precision: f64,
    pub recall: f64,
    pub f: f64,
    /// No predictions were given; all metrics are zero.
    pub empty_predictions: bool,
}

/// F1 over lowercased whitespace tokens, counting repeated tokens.
pub fn token_f1(candidate: &str, reference: &str) -> f64 {
    let toks = |s: &str| -> Vec<String> { s.split_whitespace().map(str::to_lowercase).collect() };
    let (c, r) = (toks(candidate), toks(reference));
    if c.is_empty() || r.is_empty() {
        return 0.0;
    }
    let mut remaining = r.clone();
    let mut common = 0usize;
    for t in &c {
        if let Some(pos) = remaining.iter().position(|x| x == t) {
            remaining.swap_remove(pos);
            common += 1;
        }
    }
    if common == 0 {
        return 0.0;
    }
    let p = common as f64 / c.len() as f64;
    let rc = common as f64 / r.len() as f64;
    2.0 * p * rc / (p + rc)
}

fn chronological(spans: &[CaptionedSpan]) -> Vec<&CaptionedSpan> {
    let mut v: Vec<&CaptionedSpan> = spans.iter().collect();
    v.sort_by(|a, b| {
        a.range
            .start_s
            .total_cmp(&b.range.start_s)
            .then(a.range.end_s.total_cmp(&b.range.end_s))
    });
    v
}

/// Best order-preserving one-to-one matching of predictions to references,
/// weighted by `tiou * cap_score`.
pub fn soda_style_score(
    predicted: &[CaptionedSpan],
    references: &[CaptionedSpan],
    cap_score: &dyn Fn(&str, &str) -> f64,
) -> SodaScore {
    if predicted.is_empty() {
        return SodaScore {
            empty_predictions: true,
            ..Default::default()
        };
    }
    if references.is_empty() {
        return SodaScore::default();
    }
    let p = chronological(predicted);
    let r = chronological(references);
    let mut s = vec![vec![0.0f64; r.len() + 1]; p.len() + 1];
    for i in 1..=p.len() {
        for j in 1..=r.len() {
            let w = tiou(&p[i - 1].range, &r[j - 1].range) * cap_score(&p[i - 1].caption, &r[j - 1].caption);
            s[i][j] = s[i - 1][j].max(s[i][j - 1]).max(s[i - 1][j - 1] + w);
        }
    }
    let total = s[p.len()][r.len()];
    let precision = total / p.len() as f64;
    let recall = total / r.len() as f64;
    let f = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    SodaScore {
        precision,
        recall,
        f,
        empty_predictions: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn span(s: f64, e: f64, c: &str) -> CaptionedSpan {
        CaptionedSpan {
            range: TimeRange::new(s, e).unwrap(),
            caption: c.into(),
        }
    }

    #[test]
    fn token_f1_examples() {
        assert_eq!(token_f1("a man runs", "A man runs"), 1.0);
        assert_eq!(token_f1("dog", "cat"), 0.0);
        // 1 common token: p = 1/2, r = 1/3
        assert!((token_f1("man sits", "a man runs") - 0.4).abs() < 1e-12);
        assert_eq!(token_f1("", "x"), 0.0);
    }

    #[test]
    fn self_match_and_disjoint() {
        let refs = vec![span(0.0, 5.0, "a man runs"), span(6.0, 9.0, "he falls down")];
        let s = soda_style_score(&refs, &refs, &token_f1);
        assert_eq!((s.precision, s.recall, s.f), (1.0, 1.0, 1.0));
        let far = vec![span(20.0, 25.0, "a man runs")];
        assert_eq!(soda_style_score(&far, &refs, &token_f1).f, 0.0);
        let none = soda_style_score(&[], &refs, &token_f1);
        assert!(none.empty_predictions);
        assert_eq!(none.f, 0.0);
    }

    #[test]
    fn crossing_pairs_are_not_both_matched() {
        // p0 fits r1 and p1 fits r0, but matching both would cross
        let refs = vec![span(0.0, 10.0, "x"), span(1.0, 11.0, "y")];
        let preds = vec![span(0.0, 10.0, "y"), span(1.0, 11.0, "x")];
        let s = soda_style_score(&preds, &refs, &token_f1);
        assert!((s.precision - 9.0 / 11.0 / 2.0).abs() < 1e-12);
    }

    /// Every order-preserving matching, by recursion over the first pair.
    fn brute_force(w: &[Vec<f64>], i: usize, j: usize) -> f64 {
        if i == w.len() || j == w[0].len() {
            return 0.0;
        }
        let skip_p = brute_force(w, i + 1, j);
        let skip_r = brute_force(w, i, j + 1);
        let take = w[i][j] + brute_force(w, i + 1, j + 1);
        skip_p.max(skip_r).max(take)
    }

    #[test]
    fn dp_equals_brute_force() {
        use rand::{Rng, SeedableRng};
        let words = ["man", "dog", "runs", "jumps", "ball", "park"];
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let gen = |rng: &mut rand_chacha::ChaCha8Rng, n: usize| -> Vec<CaptionedSpan> {
            let mut v: Vec<CaptionedSpan> = (0..n)
                .map(|_| {
                    let s = rng.random_range(0.0..20.0);
                    let len = rng.random_range(0.5..8.0);
                    let cap: Vec<&str> = (0..rng.random_range(1..4))
                        .map(|_| words[rng.random_range(0..words.len())])
                        .collect();
                    span(s, s + len, &cap.join(" "))
                })
                .collect();
            v.sort_by(|a, b| a.range.start_s.total_cmp(&b.range.start_s));
            v
        };
        for _ in 0..200 {
            let np = rng.random_range(1..=5);
            let nr = rng.random_range(1..=5);
            let (p, r) = (gen(&mut rng, np), gen(&mut rng, nr));
            let w: Vec<Vec<f64>> = p
                .iter()
                .map(|a| {
                    r.iter()
                        .map(|b| tiou(&a.range, &b.range) * token_f1(&a.caption, &b.caption))
                        .collect()
                })
                .collect();
            let total = brute_force(&w, 0, 0);
            let s = soda_style_score(&p, &r, &token_f1);
            assert!((s.precision - total / np as f64).abs() < 1e-9);
            assert!((s.recall - total / nr as f64).abs() < 1e-9);
            assert!((0.0..=1.0).contains(&s.f));
        }
    }

    #[test]
    fn shifting_everything_keeps_the_score() {
        let refs = vec![span(0.0, 5.0, "a man runs"), span(3.0, 9.0, "he falls down")];
        let preds = vec![span(1.0, 4.0, "a man walks"), span(4.0, 8.0, "falls down")];
        let shift = |v: &[CaptionedSpan]| -> Vec<CaptionedSpan> {
            v.iter()
                .map(|c| CaptionedSpan {
                    range: c.range.shifted(16.0),
                    caption: c.caption.clone(),
                })
                .collect()
        };
        let a = soda_style_score(&preds, &refs, &token_f1);
        let b = soda_style_score(&shift(&preds), &shift(&refs), &token_f1);
        assert!((a.f - b.f).abs() < 1e-12);
    }
}
