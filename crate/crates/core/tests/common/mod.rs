#![allow(dead_code)]

use std::collections::BTreeSet;

use lmxpairs_core::classifier::{GnbModel, Level, LEVELS};
use lmxpairs_core::lmx::SEP;
use lmxpairs_core::score::{NoteEvent, Score};
use lmxpairs_core::time::Time;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Everything a listener or reader would notice about one event.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct EventKey {
    pub onset: Time,
    pub staff: u8,
    pub voice: u8,
    pub grace: bool,
    pub midi: Option<u8>,
    pub spelled: Option<String>,
    pub duration: Time,
    pub chord: bool,
    pub tie_start: bool,
    pub tie_stop: bool,
    pub articulations: Vec<String>,
    pub dynamic: Option<String>,
}

pub fn canonical_events(s: &Score) -> Vec<EventKey> {
    let mut out: Vec<EventKey> = s
        .notes()
        .map(|n| {
            let mut articulations = n.articulations.clone();
            articulations.sort();
            EventKey {
                onset: n.onset,
                staff: n.staff,
                voice: n.voice,
                grace: n.grace,
                midi: n.pitch.map(|p| p.midi_number()),
                spelled: n.pitch.map(|p| p.to_string()),
                duration: n.duration,
                chord: n.chord,
                tie_start: n.tie_start,
                tie_stop: n.tie_stop,
                articulations,
                dynamic: n.dynamic.clone(),
            }
        })
        .collect();
    out.sort();
    out
}

/// Same measure grid, attributes and multiset of events. Layout, titles and
/// written-value spelling are ignored.
pub fn musically_equal(a: &Score, b: &Score) -> Result<(), String> {
    if a.staves != b.staves {
        return Err(format!("staves {} vs {}", a.staves, b.staves));
    }
    if a.measures.len() != b.measures.len() {
        return Err(format!("{} vs {} measures", a.measures.len(), b.measures.len()));
    }
    for (i, (x, y)) in a.measures.iter().zip(&b.measures).enumerate() {
        if (x.start, x.duration) != (y.start, y.duration) {
            return Err(format!("measure {i}: span {}+{} vs {}+{}", x.start, x.duration, y.start, y.duration));
        }
        if x.attributes != y.attributes {
            return Err(format!("measure {i}: attributes {:?} vs {:?}", x.attributes, y.attributes));
        }
    }
    let (ea, eb) = (canonical_events(a), canonical_events(b));
    if ea != eb {
        let first = ea.iter().zip(&eb).position(|(p, q)| p != q).unwrap_or(ea.len().min(eb.len()));
        return Err(format!("events differ at {first}: {:?} vs {:?}", ea.get(first), eb.get(first)));
    }
    Ok(())
}

pub fn timed_pitched(s: &Score) -> Vec<&NoteEvent> {
    s.notes().filter(|n| !n.grace && n.pitch.is_some()).collect()
}

/// Cuts at every boundary, takes the max over covering notes by linear scan.
pub fn skyline_oracle(s: &Score) -> Vec<(Option<u8>, Time)> {
    let notes = timed_pitched(s);
    let mut cuts: Vec<Time> = vec![Time::from_integer(0), s.total_duration()];
    for n in &notes {
        cuts.push(n.onset);
        cuts.push(n.end());
    }
    cuts.sort();
    cuts.dedup();
    let mut out: Vec<(Option<u8>, Time)> = Vec::new();
    for w in cuts.windows(2) {
        let top = notes.iter().filter(|n| n.onset <= w[0] && n.end() > w[0]).map(|n| n.pitch.unwrap().midi_number()).max();
        match out.last_mut() {
            Some(last) if last.0 == top => last.1 += w[1] - w[0],
            _ => out.push((top, w[1] - w[0])),
        }
    }
    out
}

pub fn random_model(rng: &mut ChaCha8Rng, dim: usize, classes: &[usize]) -> GnbModel {
    let mut priors = vec![0.0; LEVELS];
    for &k in classes {
        priors[k] = rng.random_range(0.05..1.0);
    }
    let z: f64 = priors.iter().sum();
    priors.iter_mut().for_each(|p| *p /= z);
    GnbModel {
        priors,
        means: (0..LEVELS).map(|_| (0..dim).map(|_| rng.random_range(-3.0..3.0)).collect()).collect(),
        variances: (0..LEVELS).map(|_| (0..dim).map(|_| rng.random_range(0.3..3.0)).collect()).collect(),
        floor: 0.1,
        temperature: rng.random_range(0.3..4.0),
    }
}

/// Direct Bayes rule: density products, power, normalize. No logs.
pub fn bayes_oracle(m: &GnbModel, f: &[f64]) -> Vec<f64> {
    let mut w: Vec<f64> = (0..LEVELS)
        .map(|k| {
            let mut p = m.priors[k];
            for (i, &x) in f.iter().enumerate() {
                let v = m.variances[k][i];
                p *= (-(x - m.means[k][i]).powi(2) / (2.0 * v)).exp() / (2.0 * std::f64::consts::PI * v).sqrt();
            }
            p.powf(1.0 / m.temperature)
        })
        .collect();
    let z: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= z);
    w
}

/// Every unordered pair, oriented from the higher label.
pub fn exhaustive(labels: &[Level], gap: u8) -> BTreeSet<(usize, usize)> {
    let mut out = BTreeSet::new();
    for i in 0..labels.len() {
        for j in i + 1..labels.len() {
            let (a, b) = (labels[i].get() as i32, labels[j].get() as i32);
            if (a - b).abs() >= gap.max(1) as i32 {
                out.insert(if a > b { (i, j) } else { (j, i) });
            }
        }
    }
    out
}

pub fn multisets(size: usize, from: u8) -> Vec<Vec<u8>> {
    if size == 0 {
        return vec![vec![]];
    }
    (from..=4)
        .flat_map(|first| {
            multisets(size - 1, first).into_iter().map(move |mut rest| {
                rest.insert(0, first);
                rest
            })
        })
        .collect()
}

/// Masks from the layout rule alone: everything through the first
/// `<level:e>` after `[SEP]` is context.
pub fn mask_oracle(ids: &[u32]) -> Vec<u8> {
    let sep = ids.iter().position(|&t| t == SEP).unwrap();
    (0..ids.len()).map(|i| u8::from(i <= sep + 1)).collect()
}

/// −log p(target), with the partition sum accumulated in sorted order.
pub fn ce_oracle(logits: &[f64], vocab: usize, targets: &[u32], mask: &[u8]) -> f64 {
    let mut total = 0.0;
    let mut n = 0.0;
    for t in 0..targets.len() {
        if mask[t] == 1 {
            continue;
        }
        let row = &logits[t * vocab..(t + 1) * vocab];
        let m = row.iter().cloned().fold(f64::MIN, f64::max);
        let mut terms: Vec<f64> = row.iter().map(|x| (x - m).exp()).collect();
        terms.sort_by(f64::total_cmp);
        let (mut s, mut c) = (0.0f64, 0.0f64);
        for x in terms {
            let y = x - c;
            let u = s + y;
            c = (u - s) - y;
            s = u;
        }
        total += m + s.ln() - row[targets[t] as usize];
        n += 1.0;
    }
    total / n
}
