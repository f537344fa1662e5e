use std::io::{Cursor, Read};
use std::path::Path;

use roxmltree::{Document, Node, ParsingOptions};

use super::{Attributes, Clef, Measure, Metadata, NoteEvent, Pitch, Score, ScoreError, Step, TimeSignature};
use crate::time::{notated_duration, spell_duration, NoteType, Time, Tuplet};

/// Reads `.musicxml`, `.xml` or compressed `.mxl` files. The file stem
/// becomes the score's source id.
pub fn read_score_file(path: &Path) -> Result<Score, ScoreError> {
    let bytes = std::fs::read(path)?;
    let is_mxl = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("mxl"));
    let xml = if is_mxl { unzip_mxl(&bytes)? } else { bytes };
    let mut score = parse_musicxml(&xml)?;
    score.metadata.source_id = path.file_stem().map(|s| s.to_string_lossy().into_owned());
    Ok(score)
}

/// Extracts the root document from an `.mxl` container, following
/// `META-INF/container.xml` when present.
pub fn unzip_mxl(bytes: &[u8]) -> Result<Vec<u8>, ScoreError> {
    let archive_err = |e: zip::result::ZipError| ScoreError::Archive(e.to_string());
    let mut archive = zip::ZipArchive::new(Cursor::new(bytes)).map_err(archive_err)?;

    let mut root_path = None;
    if let Ok(mut entry) = archive.by_name("META-INF/container.xml") {
        let mut text = String::new();
        entry.read_to_string(&mut text)?;
        let doc = Document::parse(&text).map_err(|e| ScoreError::Xml(e.to_string()))?;
        root_path = doc
            .descendants()
            .find(|n| n.has_tag_name("rootfile"))
            .and_then(|n| n.attribute("full-path"))
            .map(str::to_string);
    }
    let root_path = match root_path {
        Some(p) => p,
        None => archive
            .file_names()
            .filter_map(|n| n.ok().map(|n| n.into_owned()))
            .filter(|n| !n.starts_with("META-INF/"))
            .find(|n| n.ends_with(".xml") || n.ends_with(".musicxml"))
            .ok_or_else(|| ScoreError::Archive("no MusicXML document in archive".into()))?,
    };
    let mut entry = archive.by_name(&root_path).map_err(archive_err)?;
    let mut out = Vec::new();
    entry.read_to_end(&mut out)?;
    Ok(out)
}

/// Parses a partwise MusicXML document.
pub fn parse_musicxml(document: &[u8]) -> Result<Score, ScoreError> {
    let text = std::str::from_utf8(document).map_err(|e| ScoreError::Xml(format!("not UTF-8: {e}")))?;
    let text = text.trim_start_matches('\u{feff}');
    let opts = ParsingOptions { allow_dtd: true, ..ParsingOptions::default() };
    let doc = Document::parse_with_options(text, opts).map_err(|e| ScoreError::Xml(e.to_string()))?;
    let root = doc.root_element();
    if !root.has_tag_name("score-partwise") {
        return Err(ScoreError::Unsupported(format!("root element <{}>", root.tag_name().name())));
    }

    let metadata = parse_metadata(root);
    let parts: Vec<Node> = children(root, "part").collect();
    if parts.len() != 1 {
        return Err(ScoreError::Unsupported(format!("expected exactly one part, found {}", parts.len())));
    }

    let mut state = PartState {
        divisions: None,
        attributes: Attributes::piano_default(),
        staves: 1,
        max_staff: 1,
        start: Time::from_integer(0),
    };
    let mut measures = Vec::new();
    for m in children(parts[0], "measure") {
        measures.push(state.measure(m)?);
    }
    Ok(Score { metadata, staves: state.staves.max(state.max_staff), measures })
}

fn children<'a, 'i>(node: Node<'a, 'i>, tag: &'static str) -> impl Iterator<Item = Node<'a, 'i>> {
    node.children().filter(move |c| c.has_tag_name(tag))
}

fn child<'a, 'i>(node: Node<'a, 'i>, tag: &'static str) -> Option<Node<'a, 'i>> {
    children(node, tag).next()
}

fn child_text<'a>(node: Node<'a, '_>, tag: &'static str) -> Option<&'a str> {
    child(node, tag).and_then(|n| n.text()).map(str::trim)
}

fn parse_num<T: std::str::FromStr>(element: &str, value: &str) -> Result<T, ScoreError> {
    value
        .trim()
        .parse()
        .map_err(|_| ScoreError::InvalidValue { element: element.into(), value: value.into() })
}

fn parse_metadata(root: Node) -> Metadata {
    let title = child(root, "work")
        .and_then(|w| child_text(w, "work-title"))
        .or_else(|| child_text(root, "movement-title"))
        .map(str::to_string);
    let genre = child(root, "identification")
        .and_then(|i| child(i, "miscellaneous"))
        .and_then(|m| children(m, "miscellaneous-field").find(|f| f.attribute("name") == Some("genre")))
        .and_then(|f| f.text())
        .map(|t| t.trim().to_string());
    Metadata { title, genre, source_id: None }
}

struct PartState {
    /// Divisions per quarter note.
    divisions: Option<i64>,
    attributes: Attributes,
    staves: u8,
    max_staff: u8,
    start: Time,
}

struct PendingDynamic {
    staff: u8,
    name: String,
}

impl PartState {
    fn duration(&self, node: Node, measure: &str) -> Result<Time, ScoreError> {
        let text = child_text(node, "duration").ok_or_else(|| ScoreError::Malformed {
            measure: measure.into(),
            reason: format!("<{}> without <duration>", node.tag_name().name()),
        })?;
        let div = self.divisions.ok_or_else(|| ScoreError::MissingDivisions { measure: measure.into() })?;
        let value: f64 = parse_num("duration", text)?;
        if value.fract() != 0.0 || value < 0.0 {
            return Err(ScoreError::InvalidValue { element: "duration".into(), value: text.into() });
        }
        Ok(Time::new(value as i64, div))
    }

    fn attributes(&mut self, node: Node) -> Result<(), ScoreError> {
        if let Some(d) = child_text(node, "divisions") {
            let d: f64 = parse_num("divisions", d)?;
            if d <= 0.0 || d.fract() != 0.0 {
                return Err(ScoreError::InvalidValue { element: "divisions".into(), value: d.to_string() });
            }
            self.divisions = Some(d as i64);
        }
        if let Some(f) = child(node, "key").and_then(|k| child_text(k, "fifths")) {
            self.attributes.fifths = parse_num("fifths", f)?;
        }
        if let Some(t) = child(node, "time") {
            if let (Some(b), Some(bt)) = (child_text(t, "beats"), child_text(t, "beat-type")) {
                // Additive meters such as "3+2".
                let beats = b.split('+').map(|x| parse_num::<u32>("beats", x)).sum::<Result<u32, _>>()?;
                let beat_type = parse_num::<u32>("beat-type", bt)?;
                if beats == 0 || beat_type == 0 {
                    return Err(ScoreError::InvalidValue { element: "time".into(), value: format!("{b}/{bt}") });
                }
                self.attributes.time = TimeSignature { beats, beat_type };
            }
        }
        if let Some(s) = child_text(node, "staves") {
            self.staves = parse_num("staves", s)?;
            let n = self.staves as usize;
            while self.attributes.clefs.len() < n {
                let staff = self.attributes.clefs.len() as u8 + 1;
                self.attributes.clefs.push(Clef::default_for_staff(staff));
            }
        }
        for c in children(node, "clef") {
            let number: usize = c.attribute("number").map(|n| parse_num("clef", n)).transpose()?.unwrap_or(1);
            if number == 0 {
                return Err(ScoreError::InvalidValue { element: "clef".into(), value: "0".into() });
            }
            let sign = child_text(c, "sign").unwrap_or("G").to_string();
            let line = child_text(c, "line").map(|l| parse_num("line", l)).transpose()?.unwrap_or(match sign.as_str() {
                "F" => 4,
                "C" => 3,
                _ => 2,
            });
            while self.attributes.clefs.len() < number {
                let staff = self.attributes.clefs.len() as u8 + 1;
                self.attributes.clefs.push(Clef::default_for_staff(staff));
            }
            self.attributes.clefs[number - 1] = Clef { sign, line };
        }
        Ok(())
    }

    fn measure(&mut self, node: Node) -> Result<Measure, ScoreError> {
        let number = node.attribute("number").unwrap_or("").to_string();
        let zero = Time::from_integer(0);
        let mut cursor = zero;
        let mut reached = zero;
        let mut last_onset: Option<Time> = None;
        let mut notes: Vec<NoteEvent> = Vec::new();
        let mut pending: Vec<PendingDynamic> = Vec::new();

        for el in node.children().filter(|c| c.is_element()) {
            match el.tag_name().name() {
                "attributes" => self.attributes(el)?,
                "backup" => {
                    cursor -= self.duration(el, &number)?;
                    if cursor < zero {
                        return Err(ScoreError::Malformed { measure: number, reason: "<backup> before measure start".into() });
                    }
                }
                "forward" => {
                    cursor += self.duration(el, &number)?;
                    reached = reached.max(cursor);
                }
                "direction" => {
                    let staff = child_text(el, "staff").map(|s| parse_num("staff", s)).transpose()?.unwrap_or(1);
                    for dt in children(el, "direction-type") {
                        for dynamics in children(dt, "dynamics") {
                            for d in dynamics.children().filter(|d| d.is_element()) {
                                pending.push(PendingDynamic { staff, name: d.tag_name().name().to_string() });
                            }
                        }
                    }
                }
                "note" => {
                    let mut n = self.note(el, &number, cursor, last_onset)?;
                    if !n.chord {
                        last_onset = Some(n.onset);
                    }
                    if !n.chord && !n.grace {
                        cursor += n.duration;
                        reached = reached.max(cursor);
                    }
                    if !n.chord {
                        if let Some(i) = pending.iter().position(|p| p.staff == n.staff) {
                            n.dynamic = Some(pending.remove(i).name);
                        }
                    }
                    self.max_staff = self.max_staff.max(n.staff);
                    n.onset += self.start;
                    notes.push(n);
                }
                _ => {}
            }
        }
        for p in pending {
            log::warn!("measure {number}: dynamic '{}' has no following note on staff {}; dropped", p.name, p.staff);
        }

        let duration = if reached > zero { reached } else { self.attributes.time.measure_length() };
        let measure = Measure { number, start: self.start, duration, attributes: self.attributes.clone(), notes };
        self.start += duration;
        Ok(measure)
    }

    fn note(&self, el: Node, measure: &str, cursor: Time, last_onset: Option<Time>) -> Result<NoteEvent, ScoreError> {
        let grace = child(el, "grace").is_some();
        let chord = child(el, "chord").is_some();

        let pitch = match child(el, "pitch") {
            Some(p) => {
                let step_text = child_text(p, "step").unwrap_or("");
                let step = step_text
                    .chars()
                    .next()
                    .and_then(Step::from_letter)
                    .ok_or_else(|| ScoreError::InvalidValue { element: "step".into(), value: step_text.into() })?;
                let alter = match child_text(p, "alter") {
                    Some(a) => {
                        let v: f64 = parse_num("alter", a)?;
                        if v.fract() != 0.0 {
                            return Err(ScoreError::Unsupported(format!("microtonal alter {a} in measure {measure}")));
                        }
                        v as i8
                    }
                    None => 0,
                };
                let octave = parse_num("octave", child_text(p, "octave").unwrap_or(""))?;
                Some(Pitch::new(step, alter, octave)?)
            }
            None => {
                if child(el, "unpitched").is_some() {
                    log::warn!("measure {measure}: unpitched note treated as a rest");
                }
                None
            }
        };

        let note_type = match child_text(el, "type") {
            Some(t) => Some(NoteType::from_name(t).ok_or_else(|| ScoreError::Unsupported(format!("note type '{t}'")))?),
            None => None,
        };
        let dots = children(el, "dot").count() as u8;
        let tuplet = match child(el, "time-modification") {
            Some(tm) => {
                let actual = parse_num("actual-notes", child_text(tm, "actual-notes").unwrap_or(""))?;
                let normal = parse_num("normal-notes", child_text(tm, "normal-notes").unwrap_or(""))?;
                if actual == 0 || normal == 0 {
                    return Err(ScoreError::InvalidValue { element: "time-modification".into(), value: format!("{actual}:{normal}") });
                }
                Some(Tuplet { actual, normal })
            }
            None => None,
        };

        let (duration, note_type, dots) = if grace {
            let t = note_type.unwrap_or(NoteType::Eighth);
            (notated_duration(t, dots, tuplet), t, dots)
        } else {
            let d = self.duration(el, measure)?;
            if d <= Time::from_integer(0) {
                return Err(ScoreError::Malformed { measure: measure.into(), reason: "zero-length note".into() });
            }
            match note_type {
                Some(t) => (d, t, dots),
                None => match spell_duration(d) {
                    Some((t, k)) => (d, t, k),
                    None => (d, NoteType::Whole, 0),
                },
            }
        };

        let voice = child_text(el, "voice").map(|v| parse_num("voice", v)).transpose()?.unwrap_or(1);
        let staff: u8 = child_text(el, "staff").map(|s| parse_num("staff", s)).transpose()?.unwrap_or(1);
        if staff == 0 {
            return Err(ScoreError::InvalidValue { element: "staff".into(), value: "0".into() });
        }
        let tie_type = |kind: &str| children(el, "tie").any(|t| t.attribute("type") == Some(kind));

        let mut articulations = Vec::new();
        for notations in children(el, "notations") {
            for a in children(notations, "articulations") {
                articulations.extend(a.children().filter(|c| c.is_element()).map(|c| c.tag_name().name().to_string()));
            }
            if child(notations, "fermata").is_some() {
                articulations.push("fermata".into());
            }
        }

        let onset = if chord { last_onset.unwrap_or(cursor) } else { cursor };
        Ok(NoteEvent {
            onset,
            duration,
            pitch,
            voice,
            staff,
            chord,
            grace,
            tie_start: tie_type("start"),
            tie_stop: tie_type("stop"),
            note_type,
            dots,
            tuplet,
            articulations,
            dynamic: None,
        })
    }
}
