use std::collections::HashMap;

use log::warn;

use super::*;
use crate::score::{Attributes, Clef, Measure, NoteEvent, Score};
use crate::time::{decompose, notated_duration, spell_duration, Time};

enum Item<'a> {
    Gap(Time),
    Notes(Vec<&'a NoteEvent>),
}

struct Group<'a> {
    onset: Time,
    staff: u8,
    voice: u8,
    seq: usize,
    item: Item<'a>,
}

/// Encodes a score as LMX tokens.
pub fn linearize(score: &Score) -> Result<TokenSequence, LmxError> {
    let mut tokens = Vec::new();
    let mut previous: Option<&Attributes> = None;
    for m in &score.measures {
        tokens.push(MEASURE.to_string());
        attribute_tokens(&mut tokens, m, previous, score.staves)?;
        previous = Some(&m.attributes);
        for g in groups(m)? {
            match g.item {
                Item::Gap(len) => {
                    tokens.push(FORWARD.into());
                    let parts = decompose(len).ok_or_else(|| unencodable(m, format!("forward of {len} quarters")))?;
                    for (t, dots) in parts {
                        push_type(&mut tokens, t.name(), dots);
                    }
                    push_voice_staff(&mut tokens, g.voice, g.staff);
                }
                Item::Notes(notes) => {
                    for (i, n) in notes.into_iter().enumerate() {
                        note_tokens(&mut tokens, m, n, i > 0)?;
                    }
                }
            }
        }
    }
    let seq = TokenSequence::new(tokens);
    Ok(match &score.metadata.source_id {
        Some(id) => seq.with_source(id.clone()),
        None => seq,
    })
}

fn unencodable(m: &Measure, element: String) -> LmxError {
    LmxError::Unencodable { element, measure: m.number.clone() }
}

fn attribute_tokens(out: &mut Vec<String>, m: &Measure, previous: Option<&Attributes>, staves: u8) -> Result<(), LmxError> {
    let a = &m.attributes;
    if previous.is_none_or(|p| p.fifths != a.fifths) {
        out.push(format!("key:fifths:{}", a.fifths));
    }
    if previous.is_none_or(|p| p.time != a.time) {
        out.push(TIME.into());
        out.push(format!("beats:{}", a.time.beats));
        out.push(format!("beat-type:{}", a.time.beat_type));
    }
    if previous.is_none_or(|p| p.clefs != a.clefs) {
        for s in 1..=staves.max(a.clefs.len() as u8) {
            let clef = a.clefs.get(s as usize - 1).cloned().unwrap_or_else(|| Clef::default_for_staff(s));
            if !matches!(clef.sign.as_str(), "G" | "F" | "C") {
                return Err(unencodable(m, format!("clef sign {:?}", clef.sign)));
            }
            out.push(format!("clef:{}{}", clef.sign, clef.line));
        }
    }
    Ok(())
}

/// Splits a measure into voice-local items and orders them by onset.
fn groups(m: &Measure) -> Result<Vec<Group<'_>>, LmxError> {
    let zero = Time::from_integer(0);
    let mut out: Vec<Group> = Vec::new();
    let mut cursor: HashMap<(u8, u8), Time> = HashMap::new();
    let mut last_group: HashMap<(u8, u8), usize> = HashMap::new();
    let mut seq = 0;
    let mut timed = false;
    for n in &m.notes {
        let key = (n.staff, n.voice);
        if n.chord {
            let gi = *last_group.get(&key).ok_or_else(|| unencodable(m, "chord note without an anchor".into()))?;
            match &mut out[gi].item {
                Item::Notes(v) => v.push(n),
                Item::Gap(_) => return Err(unencodable(m, "chord note without an anchor".into())),
            }
            continue;
        }
        let rel = n.onset - m.start;
        let cur = cursor.get(&key).copied().unwrap_or(zero);
        if rel < cur {
            return Err(unencodable(m, format!("overlap in staff {} voice {}", n.staff, n.voice)));
        }
        if rel > cur {
            out.push(Group { onset: cur, staff: n.staff, voice: n.voice, seq, item: Item::Gap(rel - cur) });
            seq += 1;
        }
        out.push(Group { onset: rel, staff: n.staff, voice: n.voice, seq, item: Item::Notes(vec![n]) });
        last_group.insert(key, out.len() - 1);
        seq += 1;
        if !n.grace {
            cursor.insert(key, rel + n.duration);
            timed = true;
        }
    }

    let reached = cursor.values().copied().max().unwrap_or(zero);
    let pad_needed = if timed {
        m.duration > reached
    } else {
        m.duration != m.attributes.time.measure_length()
    };
    if pad_needed {
        let key = (1, default_voice(1));
        let cur = cursor.get(&key).copied().unwrap_or(zero);
        out.push(Group { onset: cur, staff: 1, voice: key.1, seq, item: Item::Gap(m.duration - cur) });
    }

    out.sort_by_key(|a| (a.onset, a.staff, a.voice, a.seq));
    Ok(out)
}

fn push_type(out: &mut Vec<String>, name: &str, dots: u8) {
    out.push(name.into());
    for _ in 0..dots {
        out.push(DOT.into());
    }
}

fn push_voice_staff(out: &mut Vec<String>, voice: u8, staff: u8) {
    if voice != default_voice(staff) {
        out.push(format!("voice:{voice}"));
    }
    out.push(format!("staff:{staff}"));
}

fn note_tokens(out: &mut Vec<String>, m: &Measure, n: &NoteEvent, chord: bool) -> Result<(), LmxError> {
    if chord {
        out.push(CHORD.into());
    }
    if n.grace {
        out.push(GRACE.into());
    }
    match n.pitch {
        Some(p) => out.push(p.to_string()),
        None => out.push(REST.into()),
    }

    let (note_type, dots, tuplet) = if n.grace || notated_duration(n.note_type, n.dots, n.tuplet) == n.duration {
        (n.note_type, n.dots, n.tuplet)
    } else if let Some((t, d)) = spell_duration(n.duration) {
        (t, d, None)
    } else {
        let what = n.pitch.map(|p| p.to_string()).unwrap_or_else(|| REST.into());
        return Err(unencodable(m, format!("{what} lasting {} quarters", n.duration)));
    };
    push_type(out, note_type.name(), dots);
    if let Some(t) = tuplet {
        out.push(format!("tuplet:{}:{}", t.actual, t.normal));
    }
    if n.tie_stop {
        out.push(TIE_STOP.into());
    }
    if n.tie_start {
        out.push(TIE_START.into());
    }
    for a in &n.articulations {
        if ARTICULATIONS.contains(&a.as_str()) {
            out.push(a.clone());
        } else {
            warn!("measure {}: dropping unsupported articulation {a:?}", m.number);
        }
    }
    if let Some(d) = &n.dynamic {
        if DYNAMICS.contains(&d.as_str()) {
            out.push(format!("dynamics:{d}"));
        } else {
            warn!("measure {}: dropping unsupported dynamic {d:?}", m.number);
        }
    }
    push_voice_staff(out, n.voice, n.staff);
    Ok(())
}
