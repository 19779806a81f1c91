use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const ONSET_END: u8 = 0x15;
const FIELD_END: u8 = 0x14;
const TAL_END: u8 = 0x00;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    /// Seconds from the recording start.
    pub onset: f64,
    /// Seconds; 0 when the annotation carries no duration.
    pub duration: f64,
    pub text: String,
}

fn number(raw: &[u8], what: &str) -> Result<f64> {
    let s = std::str::from_utf8(raw).map_err(|_| Error::Tal(format!("{what} is not ASCII")))?;
    s.trim()
        .parse()
        .map_err(|_| Error::Tal(format!("{what} `{s}` is not a number")))
}

/// Parses the time-stamped annotation lists in one annotation-signal block.
/// Timekeeping entries (no text) are skipped; zero padding after the last
/// list is ignored.
pub fn parse_tal(block: &[u8]) -> Result<Vec<Annotation>> {
    let mut out = Vec::new();
    let mut rest = block;
    loop {
        // skip padding between and after lists
        let start = rest.iter().position(|&b| b != TAL_END).unwrap_or(rest.len());
        rest = &rest[start..];
        if rest.is_empty() {
            break;
        }
        let end = rest
            .iter()
            .position(|&b| b == TAL_END)
            .ok_or_else(|| Error::Tal("list not terminated by a zero byte".into()))?;
        let tal = &rest[..end];
        rest = &rest[end + 1..];

        let head_end = tal
            .iter()
            .position(|&b| b == FIELD_END)
            .ok_or_else(|| Error::Tal("missing 0x14 after the onset".into()))?;
        let head = &tal[..head_end];
        if !matches!(head.first(), Some(b'+') | Some(b'-')) {
            return Err(Error::Tal(format!(
                "onset must start with + or -, got {:?}",
                String::from_utf8_lossy(head)
            )));
        }
        let (onset, duration) = match head.iter().position(|&b| b == ONSET_END) {
            Some(p) => (number(&head[..p], "onset")?, number(&head[p + 1..], "duration")?),
            None => (number(head, "onset")?, 0.0),
        };

        let body = &tal[head_end + 1..];
        if body.last().is_some_and(|&b| b != FIELD_END) {
            return Err(Error::Tal("annotation text not terminated by 0x14".into()));
        }
        for text in body.split(|&b| b == FIELD_END).filter(|t| !t.is_empty()) {
            out.push(Annotation {
                onset,
                duration,
                text: String::from_utf8_lossy(text).into_owned(),
            });
        }
    }
    Ok(out)
}

/// Encodes one list per annotation.
pub fn write_tal(annotations: &[Annotation]) -> Vec<u8> {
    let mut out = Vec::new();
    for a in annotations {
        out.extend_from_slice(tal_onset(a.onset).as_bytes());
        if a.duration != 0.0 {
            out.push(ONSET_END);
            out.extend_from_slice(a.duration.to_string().as_bytes());
        }
        out.push(FIELD_END);
        out.extend_from_slice(a.text.as_bytes());
        out.push(FIELD_END);
        out.push(TAL_END);
    }
    out
}

pub(crate) fn tal_onset(onset: f64) -> String {
    if onset < 0.0 {
        onset.to_string()
    } else {
        format!("+{onset}")
    }
}

/// The timekeeping list that opens every annotation record.
pub(crate) fn timekeeping(onset: f64) -> Vec<u8> {
    let mut v = tal_onset(onset).into_bytes();
    v.extend_from_slice(&[FIELD_END, FIELD_END, TAL_END]);
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_stage_annotation() {
        let a = parse_tal(b"+0\x15 30\x14Sleep stage W\x14\x00").unwrap();
        assert_eq!(
            a,
            vec![Annotation {
                onset: 0.0,
                duration: 30.0,
                text: "Sleep stage W".into()
            }]
        );
    }

    #[test]
    fn empty_and_timekeeping_blocks() {
        assert!(parse_tal(&[0; 40]).unwrap().is_empty());
        assert!(parse_tal(b"+120\x14\x14\x00\0\0").unwrap().is_empty());
    }

    #[test]
    fn stacked_lists_stay_in_order() {
        let a = parse_tal(b"+0\x14\x14\x00+0\x1530\x14Sleep stage W\x14\x00+30\x1590\x14Sleep stage 1\x14\x00").unwrap();
        assert_eq!(a.len(), 2);
        assert_eq!(a[1].onset, 30.0);
        assert_eq!(a[1].text, "Sleep stage 1");
    }

    #[test]
    fn malformed_lists_are_rejected() {
        assert!(parse_tal(b"0\x14x\x14\x00").is_err());
        assert!(parse_tal(b"+0 no separator\x00").is_err());
        assert!(parse_tal(b"+0\x14x\x14").is_err());
        assert!(parse_tal(b"+zero\x14x\x14\x00").is_err());
    }

    #[test]
    fn write_then_parse() {
        let a = vec![
            Annotation {
                onset: 0.0,
                duration: 30.0,
                text: "Sleep stage W".into(),
            },
            Annotation {
                onset: 30.5,
                duration: 0.0,
                text: "Lights off".into(),
            },
        ];
        assert_eq!(parse_tal(&write_tal(&a)).unwrap(), a);
    }
}
