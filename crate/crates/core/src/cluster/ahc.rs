use super::{canonical_labels, Clustering};
use crate::embedding::{cosine_similarity, Embedding};
use crate::error::{Error, Result};
use crate::segment::Segment;
use crate::segmenter::EmbeddedSegment;

/// Agglomerate while the most similar pair of cluster centres has cosine
/// similarity `>= stop_threshold`. Centres are member means; ties go to the
/// lowest `(i, j)` pair.
pub fn ahc(xs: &[Embedding], stop_threshold: f64) -> Result<Clustering> {
    let n = xs.len();
    if n == 0 {
        return Ok(Clustering {
            labels: vec![],
            centers: vec![],
        });
    }
    // active clusters: member lists and centre sums
    let mut members: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    let mut centers: Vec<Embedding> = xs.to_vec();
    let mut sim = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            sim[i][j] = cosine_similarity(xs[i].as_slice(), xs[j].as_slice())?;
        }
    }
    let mut alive: Vec<bool> = vec![true; n];
    loop {
        let mut best: Option<(usize, usize, f64)> = None;
        for i in 0..n {
            if !alive[i] {
                continue;
            }
            for j in i + 1..n {
                if alive[j] && best.is_none_or(|(_, _, b)| sim[i][j] > b) {
                    best = Some((i, j, sim[i][j]));
                }
            }
        }
        let Some((i, j, s)) = best else { break };
        if s < stop_threshold {
            break;
        }
        let moved = std::mem::take(&mut members[j]);
        members[i].extend(moved);
        alive[j] = false;
        centers[i] = Embedding::mean(members[i].iter().map(|&m| &xs[m]))?;
        for o in 0..n {
            if alive[o] && o != i {
                let c = cosine_similarity(centers[i].as_slice(), centers[o].as_slice())?;
                let (a, b) = if o < i { (o, i) } else { (i, o) };
                sim[a][b] = c;
            }
        }
    }
    let mut labels = vec![0usize; n];
    for (c, m) in members.iter().enumerate() {
        for &x in m {
            labels[x] = c;
        }
    }
    Clustering::from_labels(xs, canonical_labels(&labels))
}

/// The two clusters with the most speech.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeakerSelection {
    pub center_a: Embedding,
    pub center_b: Embedding,
    /// Cluster indices of speakers A and B.
    pub clusters: (usize, usize),
}

/// Pick the two clusters with the largest total duration (ties to the lower index).
pub fn select_two_speakers(c: &Clustering, durations: &[f64]) -> Result<SpeakerSelection> {
    if durations.len() != c.labels.len() {
        return Err(Error::Shape(format!(
            "{} durations for {} segments",
            durations.len(),
            c.labels.len()
        )));
    }
    let k = c.num_clusters();
    if k < 2 {
        return Err(Error::InsufficientSpeakers(k));
    }
    let mut total = vec![0.0; k];
    for (&l, &d) in c.labels.iter().zip(durations) {
        total[l] += d;
    }
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| total[b].total_cmp(&total[a]).then(a.cmp(&b)));
    let (a, b) = (order[0], order[1]);
    Ok(SpeakerSelection {
        center_a: c.centers[a].clone(),
        center_b: c.centers[b].clone(),
        clusters: (a, b),
    })
}

/// Segments whose similarity to both centres exceeds `overlap_threshold` go to
/// both speakers; the rest go to the more similar centre (A on ties).
pub fn assign_with_overlap(
    segs: &[EmbeddedSegment],
    center_a: &Embedding,
    center_b: &Embedding,
    overlap_threshold: f64,
) -> Result<[Vec<Segment>; 2]> {
    let mut out = [Vec::new(), Vec::new()];
    for s in segs {
        let sa = cosine_similarity(s.embedding.as_slice(), center_a.as_slice())?;
        let sb = cosine_similarity(s.embedding.as_slice(), center_b.as_slice())?;
        if sa.min(sb) > overlap_threshold {
            out[0].push(s.segment);
            out[1].push(s.segment);
        } else if sa >= sb {
            out[0].push(s.segment);
        } else {
            out[1].push(s.segment);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn emb(v: &[f64]) -> Embedding {
        Embedding::new(v.to_vec()).unwrap()
    }

    fn unit(d: usize, i: usize) -> Vec<f64> {
        let mut v = vec![0.0; d];
        v[i] = 1.0;
        v
    }

    #[test]
    fn two_pairs_two_clusters() {
        let xs = vec![
            emb(&[1.0, 0.05, 0.0]),
            emb(&[0.0, 1.0, 0.1]),
            emb(&[0.98, 0.0, 0.02]),
            emb(&[0.05, 0.97, 0.0]),
        ];
        let c = ahc(&xs, 0.6).unwrap();
        assert_eq!(c.labels, vec![0, 1, 0, 1]);
    }

    #[test]
    fn identical_and_orthogonal() {
        let same = vec![emb(&[1.0, 2.0]); 5];
        assert_eq!(ahc(&same, 0.6).unwrap().num_clusters(), 1);
        let orth: Vec<_> = (0..4).map(|i| emb(&unit(4, i))).collect();
        let c = ahc(&orth, 0.6).unwrap();
        assert_eq!(c.labels, vec![0, 1, 2, 3]);
    }

    #[test]
    fn centres_are_member_means() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let xs: Vec<Embedding> = (0..30)
            .map(|i| {
                let mut v = unit(8, i % 3);
                v.iter_mut().for_each(|x| *x += rng.random_range(-0.3..0.3));
                emb(&v)
            })
            .collect();
        for thr in [0.2, 0.6, 0.9] {
            let c = ahc(&xs, thr).unwrap();
            for (k, center) in c.centers.iter().enumerate() {
                let members: Vec<&Embedding> = xs.iter().zip(&c.labels).filter(|(_, &l)| l == k).map(|(x, _)| x).collect();
                let mean = Embedding::mean(members).unwrap();
                for (a, b) in center.as_slice().iter().zip(mean.as_slice()) {
                    assert!((a - b).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn selection_by_duration() {
        let c = Clustering {
            labels: vec![0, 1, 2, 0, 1],
            centers: vec![emb(&[1.0, 0.0]), emb(&[0.0, 1.0]), emb(&[1.0, 1.0])],
        };
        // totals: 0 -> 0.5, 1 -> 10, 2 -> 8
        let sel = select_two_speakers(&c, &[0.25, 6.0, 8.0, 0.25, 4.0]).unwrap();
        assert_eq!(sel.clusters, (1, 2));
        let one = Clustering {
            labels: vec![0],
            centers: vec![emb(&[1.0])],
        };
        assert!(matches!(select_two_speakers(&one, &[1.0]), Err(Error::InsufficientSpeakers(1))));
        let two = Clustering {
            labels: vec![0, 1],
            centers: vec![emb(&[1.0, 0.0]), emb(&[0.0, 1.0])],
        };
        assert_eq!(select_two_speakers(&two, &[1.0, 1.0]).unwrap().clusters, (0, 1));
    }

    #[test]
    fn overlap_assignment_examples() {
        let a = emb(&[1.0, 0.0, 0.0]);
        let b = emb(&[0.0, 1.0, 0.0]);
        let seg = Segment::new(0.0, 1.0).unwrap();
        let es = |v: &[f64]| EmbeddedSegment {
            segment: seg,
            embedding: emb(v),
        };
        let r = assign_with_overlap(&[es(&[0.707, 0.707, 0.0])], &a, &b, 0.0).unwrap();
        assert_eq!((r[0].len(), r[1].len()), (1, 1));
        let r = assign_with_overlap(&[es(&[1.0, 0.0, 0.0])], &a, &b, 0.0).unwrap();
        assert_eq!((r[0].len(), r[1].len()), (1, 0));
        let r = assign_with_overlap(&[es(&[0.9, -0.1, 0.0])], &a, &b, 0.0).unwrap();
        assert_eq!((r[0].len(), r[1].len()), (1, 0));
    }

    #[test]
    fn overlap_symmetric_under_swap() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = emb(&[1.0, 0.2, -0.1, 0.0]);
        let b = emb(&[-0.1, 1.0, 0.3, 0.2]);
        let segs: Vec<EmbeddedSegment> = (0..50)
            .map(|i| EmbeddedSegment {
                segment: Segment::new(i as f64, i as f64 + 1.0).unwrap(),
                embedding: emb(&(0..4).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<_>>()),
            })
            .collect();
        let ab = assign_with_overlap(&segs, &a, &b, 0.0).unwrap();
        let ba = assign_with_overlap(&segs, &b, &a, 0.0).unwrap();
        assert_eq!(ab[0].len() + ab[1].len() >= segs.len(), true);
        let both = |r: &[Vec<Segment>; 2]| r[0].iter().filter(|s| r[1].contains(s)).count();
        assert_eq!(both(&ab), both(&ba));
    }
}
