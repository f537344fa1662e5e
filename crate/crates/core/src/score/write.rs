use std::collections::BTreeMap;
use std::io;

use num_integer::Integer;
use quick_xml::events::{BytesDecl, BytesText, Event};
use quick_xml::Writer;

use super::{Attributes, Measure, NoteEvent, Score};
use crate::time::Time;

const DOCTYPE: &str = r#"score-partwise PUBLIC "-//Recordare//DTD MusicXML 4.0 Partwise//EN" "http://www.musicxml.org/dtds/partwise.dtd""#;

type W = Writer<Vec<u8>>;

/// Writes a partwise MusicXML 4.0 document. Divisions are chosen as the
/// least common denominator of every onset and duration in the score.
pub fn serialize_musicxml(score: &Score) -> Vec<u8> {
    let mut w = Writer::new_with_indent(Vec::new(), b' ', 2);
    write_document(&mut w, score).expect("writing to a Vec cannot fail");
    let mut out = w.into_inner();
    out.push(b'\n');
    out
}

fn divisions(score: &Score) -> i64 {
    let mut div = 1i64;
    for m in &score.measures {
        div = div.lcm(m.duration.denom());
        for n in &m.notes {
            div = div.lcm((n.onset - m.start).denom());
            if !n.grace {
                div = div.lcm(n.duration.denom());
            }
        }
    }
    div
}

fn text_el(w: &mut W, name: &str, text: &str) -> io::Result<()> {
    w.create_element(name).write_text_content(BytesText::new(text))?;
    Ok(())
}

fn write_document(w: &mut W, score: &Score) -> io::Result<()> {
    w.write_event(Event::Decl(BytesDecl::new("1.0", Some("UTF-8"), None)))?;
    w.write_event(Event::DocType(BytesText::from_escaped(DOCTYPE)))?;
    let div = divisions(score);
    w.create_element("score-partwise").with_attribute(("version", "4.0")).write_inner_content(|w| {
        if let Some(title) = &score.metadata.title {
            w.create_element("work").write_inner_content(|w| text_el(w, "work-title", title))?;
        }
        w.create_element("identification").write_inner_content(|w| {
            w.create_element("encoding").write_inner_content(|w| text_el(w, "software", "lmxpairs"))?;
            if let Some(genre) = &score.metadata.genre {
                w.create_element("miscellaneous").write_inner_content(|w| {
                    w.create_element("miscellaneous-field")
                        .with_attribute(("name", "genre"))
                        .write_text_content(BytesText::new(genre))?;
                    Ok(())
                })?;
            }
            Ok(())
        })?;
        w.create_element("part-list").write_inner_content(|w| {
            w.create_element("score-part")
                .with_attribute(("id", "P1"))
                .write_inner_content(|w| text_el(w, "part-name", "Piano"))?;
            Ok(())
        })?;
        w.create_element("part").with_attribute(("id", "P1")).write_inner_content(|w| {
            let mut previous: Option<&Attributes> = None;
            for (i, m) in score.measures.iter().enumerate() {
                let number = if m.number.is_empty() { (i + 1).to_string() } else { m.number.clone() };
                w.create_element("measure")
                    .with_attribute(("number", number.as_str()))
                    .write_inner_content(|w| write_measure(w, m, previous, score.staves, div))?;
                previous = Some(&m.attributes);
            }
            Ok(())
        })?;
        Ok(())
    })?;
    Ok(())
}

fn write_attributes(w: &mut W, m: &Measure, previous: Option<&Attributes>, staves: u8, div: i64) -> io::Result<()> {
    let a = &m.attributes;
    let first = previous.is_none();
    let key_changed = previous.is_none_or(|p| p.fifths != a.fifths);
    let time_changed = previous.is_none_or(|p| p.time != a.time);
    let clefs_changed = previous.is_none_or(|p| p.clefs != a.clefs);
    if !(first || key_changed || time_changed || clefs_changed) {
        return Ok(());
    }
    w.create_element("attributes").write_inner_content(|w| {
        if first {
            text_el(w, "divisions", &div.to_string())?;
        }
        if key_changed {
            w.create_element("key").write_inner_content(|w| text_el(w, "fifths", &a.fifths.to_string()))?;
        }
        if time_changed {
            w.create_element("time").write_inner_content(|w| {
                text_el(w, "beats", &a.time.beats.to_string())?;
                text_el(w, "beat-type", &a.time.beat_type.to_string())
            })?;
        }
        if first {
            text_el(w, "staves", &staves.to_string())?;
        }
        if clefs_changed {
            for (i, clef) in a.clefs.iter().enumerate() {
                w.create_element("clef")
                    .with_attribute(("number", (i + 1).to_string().as_str()))
                    .write_inner_content(|w| {
                        text_el(w, "sign", &clef.sign)?;
                        text_el(w, "line", &clef.line.to_string())
                    })?;
            }
        }
        Ok(())
    })?;
    Ok(())
}

fn ticks(t: Time, div: i64) -> i64 {
    let v = t * div;
    debug_assert!(v.is_integer());
    v.to_integer()
}

fn write_measure(w: &mut W, m: &Measure, previous: Option<&Attributes>, staves: u8, div: i64) -> io::Result<()> {
    write_attributes(w, m, previous, staves, div)?;

    let mut voices: BTreeMap<(u8, u8), Vec<&NoteEvent>> = BTreeMap::new();
    for n in &m.notes {
        voices.entry((n.staff, n.voice)).or_default().push(n);
    }
    let zero = Time::from_integer(0);
    let mut cursor = zero;
    let mut reached = zero;
    let count = voices.len();
    for (i, ((staff, voice), events)) in voices.into_iter().enumerate() {
        if cursor > zero {
            w.create_element("backup").write_inner_content(|w| text_el(w, "duration", &ticks(cursor, div).to_string()))?;
            cursor = zero;
        }
        for n in events {
            let rel = n.onset - m.start;
            if !n.chord && rel > cursor {
                write_forward(w, rel - cursor, voice, staff, div)?;
                cursor = rel;
            }
            if let Some(d) = &n.dynamic {
                w.create_element("direction").write_inner_content(|w| {
                    w.create_element("direction-type").write_inner_content(|w| {
                        w.create_element("dynamics").write_inner_content(|w| {
                            w.create_element(d.as_str()).write_empty()?;
                            Ok(())
                        })?;
                        Ok(())
                    })?;
                    text_el(w, "staff", &staff.to_string())
                })?;
            }
            write_note(w, n, div)?;
            if !n.chord && !n.grace {
                cursor = rel + n.duration;
            }
        }
        reached = reached.max(cursor);
        if i + 1 == count && m.duration > reached {
            write_forward(w, m.duration - cursor, voice, staff, div)?;
        }
    }
    Ok(())
}

fn write_forward(w: &mut W, gap: Time, voice: u8, staff: u8, div: i64) -> io::Result<()> {
    w.create_element("forward").write_inner_content(|w| {
        text_el(w, "duration", &ticks(gap, div).to_string())?;
        text_el(w, "voice", &voice.to_string())?;
        text_el(w, "staff", &staff.to_string())
    })?;
    Ok(())
}

fn write_note(w: &mut W, n: &NoteEvent, div: i64) -> io::Result<()> {
    w.create_element("note").write_inner_content(|w| {
        if n.grace {
            w.create_element("grace").write_empty()?;
        }
        if n.chord {
            w.create_element("chord").write_empty()?;
        }
        match n.pitch {
            Some(p) => {
                w.create_element("pitch").write_inner_content(|w| {
                    text_el(w, "step", &p.step.letter().to_string())?;
                    if p.alter != 0 {
                        text_el(w, "alter", &p.alter.to_string())?;
                    }
                    text_el(w, "octave", &p.octave.to_string())
                })?;
            }
            None => {
                w.create_element("rest").write_empty()?;
            }
        }
        if !n.grace {
            text_el(w, "duration", &ticks(n.duration, div).to_string())?;
        }
        if n.tie_stop {
            w.create_element("tie").with_attribute(("type", "stop")).write_empty()?;
        }
        if n.tie_start {
            w.create_element("tie").with_attribute(("type", "start")).write_empty()?;
        }
        text_el(w, "voice", &n.voice.to_string())?;
        text_el(w, "type", n.note_type.name())?;
        for _ in 0..n.dots {
            w.create_element("dot").write_empty()?;
        }
        if let Some(t) = n.tuplet {
            w.create_element("time-modification").write_inner_content(|w| {
                text_el(w, "actual-notes", &t.actual.to_string())?;
                text_el(w, "normal-notes", &t.normal.to_string())
            })?;
        }
        text_el(w, "staff", &n.staff.to_string())?;
        let articulations: Vec<&String> = n.articulations.iter().filter(|a| *a != "fermata").collect();
        let fermata = n.articulations.iter().any(|a| a == "fermata");
        if n.tie_start || n.tie_stop || !articulations.is_empty() || fermata {
            w.create_element("notations").write_inner_content(|w| {
                if n.tie_stop {
                    w.create_element("tied").with_attribute(("type", "stop")).write_empty()?;
                }
                if n.tie_start {
                    w.create_element("tied").with_attribute(("type", "start")).write_empty()?;
                }
                if !articulations.is_empty() {
                    w.create_element("articulations").write_inner_content(|w| {
                        for a in &articulations {
                            w.create_element(a.as_str()).write_empty()?;
                        }
                        Ok(())
                    })?;
                }
                if fermata {
                    w.create_element("fermata").write_empty()?;
                }
                Ok(())
            })?;
        }
        Ok(())
    })?;
    Ok(())
}
