//! Sliding-window segmentation of speech regions and merging of similar neighbours.

use crate::embedding::{cosine_similarity, Embedding};
use crate::error::{Error, Result};
use crate::segment::Segment;

/// A segment and the embedding extracted from it.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddedSegment {
    pub segment: Segment,
    pub embedding: Embedding,
}

/// Windows at `start + k * shift` while they fit in their region; a region
/// shorter than the window is kept whole.
pub fn uniform_segments(speech: &[Segment], win_s: f64, shift_s: f64) -> Result<Vec<Segment>> {
    if !(win_s > 0.0 && shift_s > 0.0 && shift_s <= win_s && win_s.is_finite()) {
        return Err(Error::Parameter(format!(
            "window {win_s}s / shift {shift_s}s; need 0 < shift <= window"
        )));
    }
    // absorbs binary rounding of k * shift
    const EPS: f64 = 1e-9;
    let mut out = Vec::new();
    for region in speech {
        if region.duration() < win_s + EPS {
            out.push(*region);
            continue;
        }
        let mut k = 0usize;
        loop {
            let start = region.start_s + k as f64 * shift_s;
            if start + win_s > region.end_s + EPS {
                break;
            }
            out.push(Segment {
                start_s: start,
                end_s: (start + win_s).min(region.end_s),
            });
            k += 1;
        }
    }
    out.sort_by(|a, b| a.start_s.total_cmp(&b.start_s));
    Ok(out)
}

/// Repeatedly merge the most similar adjacent pair while its cosine similarity
/// exceeds `threshold`. Ties go to the leftmost pair; the merged embedding is the
/// plain mean of the two.
pub fn recursive_merge(segs: &[EmbeddedSegment], threshold: f64) -> Result<Vec<EmbeddedSegment>> {
    let mut out = segs.to_vec();
    let mut sims: Vec<f64> = out
        .windows(2)
        .map(|w| cosine_similarity(w[0].embedding.as_slice(), w[1].embedding.as_slice()))
        .collect::<Result<_>>()?;
    loop {
        let mut best: Option<(usize, f64)> = None;
        for (i, &s) in sims.iter().enumerate() {
            if s > threshold && best.is_none_or(|(_, b)| s > b) {
                best = Some((i, s));
            }
        }
        let Some((i, _)) = best else { break };
        let merged = EmbeddedSegment {
            segment: Segment {
                start_s: out[i].segment.start_s,
                end_s: out[i + 1].segment.end_s,
            },
            embedding: Embedding::mean([&out[i].embedding, &out[i + 1].embedding])?,
        };
        out[i] = merged;
        out.remove(i + 1);
        sims.remove(i);
        if i > 0 {
            sims[i - 1] = cosine_similarity(out[i - 1].embedding.as_slice(), out[i].embedding.as_slice())?;
        }
        if i < sims.len() {
            sims[i] = cosine_similarity(out[i].embedding.as_slice(), out[i + 1].embedding.as_slice())?;
        }
    }
    Ok(out)
}

/// Shrink time-sorted, partly overlapping segments so that neighbours meet at
/// the midpoint of their overlap. The result is index-aligned with the input;
/// a segment swallowed entirely by its neighbours comes back as `None`.
pub fn trim_to_midpoints(segs: &[Segment]) -> Vec<Option<Segment>> {
    (0..segs.len())
        .map(|i| {
            let s = segs[i];
            let start = match i.checked_sub(1).map(|p| segs[p]) {
                Some(p) if p.end_s > s.start_s => 0.5 * (p.end_s + s.start_s),
                _ => s.start_s,
            };
            let end = match segs.get(i + 1) {
                Some(n) if n.start_s < s.end_s => 0.5 * (s.end_s + n.start_s),
                _ => s.end_s,
            };
            (start < end).then_some(Segment { start_s: start, end_s: end })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn midpoint_trimming() {
        let segs = [
            Segment::new(0.0, 0.5).unwrap(),
            Segment::new(0.25, 1.0).unwrap(),
            Segment::new(2.0, 2.5).unwrap(),
        ];
        let t = trim_to_midpoints(&segs);
        assert_eq!(t[0], Some(Segment { start_s: 0.0, end_s: 0.375 }));
        assert_eq!(t[1], Some(Segment { start_s: 0.375, end_s: 1.0 }));
        assert_eq!(t[2], Some(segs[2]));
    }
    use proptest::prelude::*;

    fn seg(a: f64, b: f64) -> Segment {
        Segment::new(a, b).unwrap()
    }

    fn es(a: f64, b: f64, e: Vec<f64>) -> EmbeddedSegment {
        EmbeddedSegment {
            segment: seg(a, b),
            embedding: Embedding::new(e).unwrap(),
        }
    }

    #[test]
    fn uniform_examples() {
        let s = uniform_segments(&[seg(0.0, 2.0)], 0.5, 0.25).unwrap();
        assert_eq!(s.len(), 7);
        for (k, x) in s.iter().enumerate() {
            assert!((x.start_s - 0.25 * k as f64).abs() < 1e-12);
            assert!((x.duration() - 0.5).abs() < 1e-12);
        }
        assert_eq!(uniform_segments(&[seg(0.0, 1.0)], 1.5, 0.25).unwrap(), vec![seg(0.0, 1.0)]);
        assert!(uniform_segments(&[seg(0.0, 1.0)], 0.5, 0.75).is_err());
        assert!(uniform_segments(&[seg(0.0, 1.0)], 0.0, 0.0).is_err());
    }

    #[test]
    fn uniform_multiple_regions_sorted() {
        let s = uniform_segments(&[seg(5.0, 6.5), seg(0.0, 0.3)], 1.5, 0.25).unwrap();
        assert_eq!(s, vec![seg(0.0, 0.3), seg(5.0, 6.5)]);
    }

    #[test]
    fn merge_hand_trace() {
        let e = vec![1.0, 0.0];
        let f = vec![0.0, 1.0];
        let out = recursive_merge(
            &[es(0.0, 1.0, e.clone()), es(1.0, 2.0, e.clone()), es(2.0, 3.0, f.clone())],
            0.6,
        )
        .unwrap();
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].segment, seg(0.0, 2.0));
        assert_eq!(out[0].embedding.as_slice(), &e[..]);
        assert_eq!(out[1].embedding.as_slice(), &f[..]);
    }

    #[test]
    fn merge_identical_and_orthogonal() {
        let same: Vec<_> = (0..5).map(|i| es(i as f64, i as f64 + 1.0, vec![2.0, 1.0])).collect();
        let out = recursive_merge(&same, 0.6).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].segment, seg(0.0, 5.0));
        let orth: Vec<_> = (0..3)
            .map(|i| {
                let mut v = vec![0.0; 3];
                v[i] = 1.0;
                es(i as f64, i as f64 + 1.0, v)
            })
            .collect();
        assert_eq!(recursive_merge(&orth, 0.6).unwrap(), orth);
        assert!(recursive_merge(&[], 0.6).unwrap().is_empty());
    }

    #[test]
    fn best_pair_first() {
        // pairs (0,1) at 0.8 and (1,2) at 0.99 both clear 0.79; (1,2) goes first and
        // the merged mean is then only 0.756 from a
        let a = vec![1.0, 0.0];
        let b = vec![0.8, 0.6];
        let c = vec![0.8 * 0.99 - 0.6 * (1.0f64 - 0.99 * 0.99).sqrt(), 0.6 * 0.99 + 0.8 * (1.0f64 - 0.99 * 0.99).sqrt()];
        let out = recursive_merge(&[es(0.0, 1.0, a), es(1.0, 2.0, b), es(2.0, 3.0, c)], 0.79).unwrap();
        assert_eq!(out.len(), 2);
        assert_eq!(out[1].segment, seg(1.0, 3.0));
    }

    fn arb_segments() -> impl Strategy<Value = Vec<EmbeddedSegment>> {
        proptest::collection::vec(
            (0.1f64..1.0, proptest::collection::vec(-1.0f64..1.0, 4)),
            0..12,
        )
        .prop_map(|items| {
            let mut t = 0.0;
            items
                .into_iter()
                .filter(|(_, v)| v.iter().any(|x| x.abs() > 1e-3))
                .map(|(d, v)| {
                    let s = es(t, t + d, v);
                    t += d;
                    s
                })
                .collect()
        })
    }

    proptest! {
        #[test]
        fn merge_invariants(segs in arb_segments(), threshold in -0.5f64..0.95) {
            let out = recursive_merge(&segs, threshold).unwrap();
            if let (Some(first), Some(last)) = (segs.first(), segs.last()) {
                prop_assert_eq!(out[0].segment.start_s, first.segment.start_s);
                prop_assert_eq!(out.last().unwrap().segment.end_s, last.segment.end_s);
            }
            for w in out.windows(2) {
                let c = cosine_similarity(w[0].embedding.as_slice(), w[1].embedding.as_slice()).unwrap();
                prop_assert!(c <= threshold);
            }
            prop_assert_eq!(recursive_merge(&out, threshold).unwrap(), out);
        }
    }
}
