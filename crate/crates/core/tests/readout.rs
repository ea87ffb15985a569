use std::collections::HashMap;

use lmsnn::readout::{self, classify_all, classify_confidence, classify_distance, classify_ngram, fit_labels, fit_ngrams};
use lmsnn::{Connection, LabelAssignment, NgramTable, SpikeRecord};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn record(counts: &[u32]) -> SpikeRecord {
    let mut events = Vec::new();
    for (i, &c) in counts.iter().enumerate() {
        for k in 0..c {
            events.push((k, i as u32));
        }
    }
    SpikeRecord::from_events(0, counts.len(), events)
}

fn sequence_record(n_neurons: usize, seq: &[u32]) -> SpikeRecord {
    let events = seq.iter().enumerate().map(|(t, &j)| (t as u32, j)).collect();
    SpikeRecord::from_events(0, n_neurons, events)
}

fn random_records(rng: &mut ChaCha8Rng, count: usize, n: usize, k: usize) -> Vec<(SpikeRecord, usize)> {
    (0..count)
        .map(|_| {
            let counts: Vec<u32> = (0..n)
                .map(|_| if rng.random::<f64>() < 0.3 { rng.random_range(0..6) } else { 0 })
                .collect();
            (record(&counts), rng.random_range(0..k))
        })
        .collect()
}

/// Naive per-neuron counting.
fn labels_oracle(records: &[(SpikeRecord, usize)], n: usize, k: usize) -> (Vec<Option<usize>>, Vec<f64>) {
    let mut per_class = vec![0usize; k];
    let mut totals = vec![vec![0.0; k]; n];
    for (r, c) in records {
        per_class[*c] += 1;
        for i in 0..n {
            totals[i][*c] += f64::from(r.counts[i]);
        }
    }
    let mut labels = vec![None; n];
    let mut proportions = vec![0.0; n * k];
    for i in 0..n {
        let sum: f64 = totals[i].iter().sum();
        if sum == 0.0 {
            continue;
        }
        let mut best = 0;
        let mut best_rate = -1.0;
        for c in 0..k {
            proportions[i * k + c] = totals[i][c] / sum;
            let rate = if per_class[c] > 0 { totals[i][c] / per_class[c] as f64 } else { 0.0 };
            if rate > best_rate {
                best_rate = rate;
                best = c;
            }
        }
        labels[i] = Some(best);
    }
    (labels, proportions)
}

fn assign_for(records: &[(SpikeRecord, usize)], k: usize) -> LabelAssignment {
    fit_labels(records.iter().map(|(r, c)| (r, *c)), k).unwrap()
}

#[test]
fn labels_match_counting_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let records = random_records(&mut rng, 60, 10, 4);
    let a = assign_for(&records, 4);
    let (labels, proportions) = labels_oracle(&records, 10, 4);
    assert_eq!(a.labels, labels);
    for (x, y) in a.proportions.iter().zip(&proportions) {
        assert!((x - y).abs() < 1e-12);
    }
    for i in 0..10 {
        let s: f64 = a.proportion_row(i).iter().sum();
        assert!(s == 0.0 || (s - 1.0).abs() < 1e-9);
    }
}

#[test]
fn label_examples() {
    let recs = vec![(record(&[0, 3, 0]), 3), (record(&[0, 1, 0]), 1), (record(&[0, 0, 0]), 0)];
    let a = assign_for(&recs, 4);
    assert_eq!(a.labels[0], None);
    assert_eq!(a.proportion_row(0), &[0.0; 4]);
    assert_eq!(a.labels[1], Some(3));
    assert!(fit_labels(std::iter::empty(), 4).is_err());
}

#[test]
fn all_scheme_examples() {
    let assign = LabelAssignment {
        n_classes: 3,
        n_neurons: 4,
        proportions: vec![0.0; 12],
        labels: vec![Some(0), Some(2), Some(2), Some(1)],
        mean_rates: vec![0.0; 12],
    };
    assert_eq!(classify_all(&record(&[0, 2, 1, 0]), &assign).class, 2);
    // Class 0 averages 2/1, class 2 averages 4/2: tie goes to class 0.
    assert_eq!(classify_all(&record(&[2, 4, 0, 0]), &assign).class, 0);
    let silent = classify_all(&record(&[0, 0, 0, 0]), &assign);
    assert!(silent.flagged);
    assert_eq!(silent.class, 0);
}

#[test]
fn all_and_confidence_match_their_oracles() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (n, k) = (25, 5);
    let train = random_records(&mut rng, 100, n, k);
    let a = assign_for(&train, k);
    for (r, _) in random_records(&mut rng, 100, n, k) {
        let mut sums = vec![0.0; k];
        let mut members = vec![0.0; k];
        let mut dot = vec![0.0; k];
        for i in 0..n {
            if let Some(c) = a.labels[i] {
                sums[c] += f64::from(r.counts[i]);
                members[c] += 1.0;
            }
            for c in 0..k {
                dot[c] += f64::from(r.counts[i]) * a.proportions[i * k + c];
            }
        }
        let avg: Vec<f64> = sums.iter().zip(&members).map(|(s, m)| if *m > 0.0 { s / m } else { 0.0 }).collect();
        let expect = |v: &[f64]| {
            let best = readout::argmax(v).unwrap();
            if v[best] > 0.0 { best } else { 0 }
        };
        assert_eq!(classify_all(&r, &a).class, expect(&avg));
        assert_eq!(classify_confidence(&r, &a).class, expect(&dot));
    }
}

#[test]
fn one_hot_proportions_make_all_and_confidence_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (k, per) = (4, 3);
    let n = k * per;
    let labels: Vec<Option<usize>> = (0..n).map(|i| Some(i % k)).collect();
    let mut proportions = vec![0.0; n * k];
    for i in 0..n {
        proportions[i * k + i % k] = 1.0;
    }
    let assign = LabelAssignment {
        n_classes: k,
        n_neurons: n,
        proportions,
        labels,
        mean_rates: vec![0.0; n * k],
    };
    for _ in 0..200 {
        let counts: Vec<u32> = (0..n).map(|_| rng.random_range(0..5)).collect();
        let r = record(&counts);
        assert_eq!(classify_all(&r, &assign), classify_confidence(&r, &assign));
    }
}

#[test]
fn distance_matches_nearest_neighbour_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (n_pre, n_post) = (30, 50);
    let w: Vec<f64> = (0..n_pre * n_post).map(|_| rng.random::<f64>()).collect();
    let mut conn = Connection::from_weights(n_pre, n_post, w).unwrap();
    conn.set_c_norm(Some(15.0));
    let labels: Vec<Option<usize>> = (0..n_post)
        .map(|j| if j % 7 == 3 { None } else { Some(j % 10) })
        .collect();
    let assign = LabelAssignment {
        n_classes: 10,
        n_neurons: n_post,
        proportions: vec![0.0; n_post * 10],
        labels: labels.clone(),
        mean_rates: vec![0.0; n_post * 10],
    };
    for _ in 0..20 {
        let image: Vec<f64> = (0..n_pre).map(|_| rng.random::<f64>()).collect();
        let s: f64 = image.iter().sum();
        let scaled: Vec<f64> = image.iter().map(|x| x * 15.0 / s).collect();
        let mut best = (f64::INFINITY, 0);
        for j in 0..n_post {
            if labels[j].is_none() {
                continue;
            }
            let d: f64 = (0..n_pre).map(|i| (conn.weight(i, j) - scaled[i]).powi(2)).sum();
            if d < best.0 {
                best = (d, j);
            }
        }
        let p = classify_distance(&image, &conn, &assign).unwrap();
        assert_eq!(p.class, labels[best.1].unwrap());
    }
}

#[test]
fn distance_examples() {
    let conn = Connection::from_weights(2, 3, vec![1.0, 0.0, 1.0, 0.0, 1.0, 0.0]).unwrap();
    let assign = LabelAssignment {
        n_classes: 3,
        n_neurons: 3,
        proportions: vec![0.0; 9],
        labels: vec![Some(1), Some(2), Some(0)],
        mean_rates: vec![0.0; 9],
    };
    assert_eq!(classify_distance(&[0.0, 1.0], &conn, &assign).unwrap().class, 2);
    // Neurons 0 and 2 share a filter; the lower index wins.
    assert_eq!(classify_distance(&[1.0, 0.0], &conn, &assign).unwrap().class, 1);
    let empty = LabelAssignment {
        labels: vec![None; 3],
        ..assign
    };
    assert!(matches!(
        classify_distance(&[1.0, 0.0], &conn, &empty),
        Err(lmsnn::Error::Contract(_))
    ));
}

#[test]
fn ngram_examples() {
    let t = fit_ngrams([(&sequence_record(6, &[2, 5, 2, 5]), 1)], 2, 3).unwrap();
    assert_eq!(t.counts.get(&vec![2, 5]), Some(&vec![0, 2, 0]));
    assert_eq!(t.counts.get(&vec![5, 2]), Some(&vec![0, 1, 0]));
    assert_eq!(t.counts.len(), 2);
    let short = fit_ngrams([(&sequence_record(6, &[4]), 0)], 2, 3).unwrap();
    assert_eq!(short.total_votes(), 0);

    let mut table = NgramTable::new(2, 5).unwrap();
    table.observe(&sequence_record(4, &[1, 3, 1]), 4).unwrap();
    assert_eq!(classify_ngram(&sequence_record(4, &[1, 3]), &table, None).class, 4);
    let unseen = classify_ngram(&sequence_record(4, &[0, 2]), &table, None);
    assert!(unseen.flagged);
    assert!(NgramTable::new(0, 5).is_err());
}

fn random_sequences(rng: &mut ChaCha8Rng, count: usize, n: u32, k: usize) -> Vec<(SpikeRecord, usize)> {
    (0..count)
        .map(|_| {
            let len = rng.random_range(0..12);
            let seq: Vec<u32> = (0..len).map(|_| rng.random_range(0..n)).collect();
            (sequence_record(n as usize, &seq), rng.random_range(0..k))
        })
        .collect()
}

#[test]
fn ngram_fit_and_classify_match_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (n, k) = (6, 4);
    for order in 1..=3 {
        let train = random_sequences(&mut rng, 100, n, k);
        let table = fit_ngrams(train.iter().map(|(r, c)| (r, *c)), order, k).unwrap();
        let mut oracle: HashMap<Vec<u32>, Vec<u64>> = HashMap::new();
        let mut mass = 0;
        for (r, c) in &train {
            let seq: Vec<u32> = r.sequence().collect();
            if seq.len() >= order {
                mass += seq.len() - order + 1;
                for s in 0..=seq.len() - order {
                    oracle.entry(seq[s..s + order].to_vec()).or_insert_with(|| vec![0; k])[*c] += 1;
                }
            }
        }
        assert_eq!(table.counts.len(), oracle.len());
        for (key, v) in &oracle {
            assert_eq!(table.counts.get(key), Some(v));
        }
        assert_eq!(table.total_votes(), mass as u64);

        for (r, _) in random_sequences(&mut rng, 200, n, k) {
            let seq: Vec<u32> = r.sequence().collect();
            let mut votes = vec![0u64; k];
            if seq.len() >= order {
                for s in 0..=seq.len() - order {
                    if let Some(v) = oracle.get(&seq[s..s + order]) {
                        for c in 0..k {
                            votes[c] += v[c];
                        }
                    }
                }
            }
            let p = classify_ngram(&r, &table, None);
            if votes.iter().all(|&v| v == 0) {
                assert!(p.flagged);
            } else {
                let max = *votes.iter().max().unwrap();
                assert_eq!(p.class, votes.iter().position(|&v| v == max).unwrap());
            }
        }
    }
}

#[test]
fn merged_tables_equal_a_single_fit() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let recs = random_sequences(&mut rng, 80, 5, 3);
    let whole = fit_ngrams(recs.iter().map(|(r, c)| (r, *c)), 2, 3).unwrap();
    let mut a = fit_ngrams(recs[..30].iter().map(|(r, c)| (r, *c)), 2, 3).unwrap();
    let b = fit_ngrams(recs[30..].iter().map(|(r, c)| (r, *c)), 2, 3).unwrap();
    a.merge(&b).unwrap();
    assert_eq!(a, whole);
}

proptest! {
    #[test]
    fn confidence_argmax_is_scale_invariant(
        seed in any::<u64>(),
        scale in 1u32..20,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let train = random_records(&mut rng, 40, 12, 4);
        let a = assign_for(&train, 4);
        let (r, _) = &random_records(&mut rng, 1, 12, 4)[0];
        let scaled = record(&r.counts.iter().map(|c| c * scale).collect::<Vec<_>>());
        prop_assert_eq!(classify_confidence(r, &a), classify_confidence(&scaled, &a));
    }

    #[test]
    fn labels_are_permutation_equivariant(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 9;
        let train = random_records(&mut rng, 30, n, 3);
        let mut perm: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
        let permuted: Vec<(SpikeRecord, usize)> = train
            .iter()
            .map(|(r, c)| (record(&perm.iter().map(|&p| r.counts[p]).collect::<Vec<_>>()), *c))
            .collect();
        let a = assign_for(&train, 3);
        let b = assign_for(&permuted, 3);
        for (i, &p) in perm.iter().enumerate() {
            prop_assert_eq!(b.labels[i], a.labels[p]);
        }
    }
}
