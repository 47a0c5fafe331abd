//! Line-oriented anchor clip files.
//!
//! ```text
//! clip <id> <n_frames> <n_anchors> <width> <height>
//! frame <index> x0 y0 x1 y1 ...
//! ```
//!
//! Blank lines and lines starting with `#` are ignored.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::Point2;
use crate::meshing::AnchorFrame;

#[derive(Debug, Clone, PartialEq)]
pub struct ClipFile {
    pub id: String,
    pub width: usize,
    pub height: usize,
    pub frames: Vec<AnchorFrame>,
}

impl ClipFile {
    pub fn new(id: impl Into<String>, frames: Vec<AnchorFrame>) -> Result<Self> {
        let id = id.into();
        if id.is_empty() || id.contains(char::is_whitespace) {
            return Err(Error::InvalidArgument(format!("clip id `{id}` must be a single token")));
        }
        let first = frames
            .first()
            .ok_or_else(|| Error::InvalidArgument("clip has no frames".into()))?;
        for pair in frames.windows(2) {
            first.check_compatible(&pair[1])?;
            if pair[1].index <= pair[0].index {
                return Err(Error::InvalidFrame(format!(
                    "frame indices must increase: {} follows {}",
                    pair[1].index, pair[0].index
                )));
            }
        }
        for f in &frames {
            f.validate()?;
        }
        Ok(Self {
            id,
            width: first.width,
            height: first.height,
            frames,
        })
    }

    pub fn anchor_count(&self) -> usize {
        self.frames[0].anchors.len()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(
            s,
            "clip {} {} {} {} {}",
            self.id,
            self.frames.len(),
            self.anchor_count(),
            self.width,
            self.height
        )
        .unwrap();
        for f in &self.frames {
            write!(s, "frame {}", f.index).unwrap();
            for p in &f.anchors {
                write!(s, " {} {}", p.x, p.y).unwrap();
            }
            s.push('\n');
        }
        s
    }

    pub fn read(path: &Path) -> Result<Self> {
        parse_clip(&std::fs::read_to_string(path)?)
    }
}

fn field<T: std::str::FromStr>(tok: Option<&str>, line: usize, what: &str) -> Result<T> {
    let tok = tok.ok_or_else(|| Error::Parse {
        line,
        message: format!("missing {what}"),
    })?;
    tok.parse().map_err(|_| Error::Parse {
        line,
        message: format!("{what}: cannot parse `{tok}`"),
    })
}

pub fn parse_clip(text: &str) -> Result<ClipFile> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

    let (hline, header) = lines.next().ok_or(Error::Parse {
        line: 1,
        message: "empty clip file".into(),
    })?;
    let mut toks = header.split_whitespace();
    if toks.next() != Some("clip") {
        return Err(Error::Parse {
            line: hline,
            message: "expected header `clip <id> <n_frames> <n_anchors> <width> <height>`".into(),
        });
    }
    let id: String = field(toks.next(), hline, "clip id")?;
    let n_frames: usize = field(toks.next(), hline, "n_frames")?;
    let n_anchors: usize = field(toks.next(), hline, "n_anchors")?;
    let width: usize = field(toks.next(), hline, "width")?;
    let height: usize = field(toks.next(), hline, "height")?;
    if let Some(extra) = toks.next() {
        return Err(Error::Parse {
            line: hline,
            message: format!("unexpected trailing field `{extra}` in header"),
        });
    }

    let mut frames = Vec::with_capacity(n_frames);
    for (line, body) in lines {
        let mut toks = body.split_whitespace();
        if toks.next() != Some("frame") {
            return Err(Error::Parse {
                line,
                message: "expected `frame <index> x y ...`".into(),
            });
        }
        let index: usize = field(toks.next(), line, "frame index")?;
        let coords: Vec<&str> = toks.collect();
        if coords.len() != 2 * n_anchors {
            return Err(Error::Parse {
                line,
                message: format!(
                    "frame {index} has {} coordinates, expected {} ({} anchors)",
                    coords.len(),
                    2 * n_anchors,
                    n_anchors
                ),
            });
        }
        let mut anchors = Vec::with_capacity(n_anchors);
        for (j, pair) in coords.chunks_exact(2).enumerate() {
            let x: f64 = field(Some(pair[0]), line, &format!("anchor {j} x"))?;
            let y: f64 = field(Some(pair[1]), line, &format!("anchor {j} y"))?;
            anchors.push(Point2::new(x, y));
        }
        let frame = AnchorFrame {
            index,
            width,
            height,
            anchors,
        };
        frame.validate().map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        if let Some(prev) = frames.last().map(|f: &AnchorFrame| f.index) {
            if index <= prev {
                return Err(Error::Parse {
                    line,
                    message: format!("frame index {index} does not follow {prev}"),
                });
            }
        }
        frames.push(frame);
    }
    if frames.len() != n_frames {
        return Err(Error::Parse {
            line: text.lines().count().max(1),
            message: format!("header declares {n_frames} frames, found {}", frames.len()),
        });
    }
    ClipFile::new(id, frames)
}

#[cfg(test)]
mod tests {
    use super::*;

    const TRIANGLE: &str = "clip tri 2 3 10 10\nframe 0 1 1 8 1 1 8\n# moved\nframe 1 2 1 9 1 2 8\n";

    #[test]
    fn parses_and_round_trips() {
        let clip = parse_clip(TRIANGLE).unwrap();
        assert_eq!(clip.id, "tri");
        assert_eq!(clip.frames.len(), 2);
        assert_eq!(clip.frames[1].anchors[1], Point2::new(9.0, 1.0));
        assert_eq!(parse_clip(&clip.to_text()).unwrap(), clip);
    }

    #[test]
    fn diagnostics_name_the_line() {
        let err = parse_clip("clip a 1 3 10 10\nframe 0 1 1 8 1 1\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        let err = parse_clip("clip a 1 3 10 10\nframe 0 1 1 8 x 1 8\n").unwrap_err();
        assert!(err.to_string().contains("anchor 1 y"), "{err}");
        let err = parse_clip("clip a 2 3 10 10\nframe 0 1 1 8 1 1 8\n").unwrap_err();
        assert!(err.to_string().contains("declares 2 frames"));
        let err = parse_clip("clip a 2 3 10 10\nframe 1 1 1 8 1 1 8\nframe 0 1 1 8 1 1 8\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }));
        let err = parse_clip("clip a 1 3 10 10\nframe 0 1 1 80 1 1 8\n").unwrap_err();
        assert!(err.to_string().contains("outside"));
        assert!(parse_clip("").is_err());
        assert!(parse_clip("clop a 1 3 10 10\n").is_err());
    }
}
