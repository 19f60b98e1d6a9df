use std::path::Path;

use super::anno::AnnoLine;
use super::cloud::{decode_cloud, frame_file};
use super::meta::MetaFile;
use super::sequence::{ANNO_FILE, META_FILE};

/// One problem found in a sequence directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub file: String,
    pub line: Option<usize>,
    pub frame: Option<usize>,
    pub message: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.file)?;
        if let Some(l) = self.line {
            write!(f, ":{l}")?;
        }
        if let Some(fr) = self.frame {
            write!(f, " (frame {fr})")?;
        }
        write!(f, ": {}", self.message)
    }
}

fn v(file: &str, line: Option<usize>, frame: Option<usize>, message: impl Into<String>) -> Violation {
    Violation { file: file.to_string(), line, frame, message: message.into() }
}

/// Checks a sequence directory and reports every violation found.
pub fn validate_sequence(dir: &Path) -> Vec<Violation> {
    let mut out = Vec::new();
    let meta: Option<MetaFile> = match std::fs::read_to_string(dir.join(META_FILE)) {
        Err(e) => {
            out.push(v(META_FILE, None, None, format!("cannot read: {e}")));
            None
        }
        Ok(text) => match serde_json::from_str::<MetaFile>(&text) {
            Err(e) => {
                out.push(v(META_FILE, None, None, e.to_string()));
                None
            }
            Ok(m) => {
                out.extend(m.problems().into_iter().map(|p| v(META_FILE, None, None, p)));
                Some(m)
            }
        },
    };

    let mut lines = 0;
    match std::fs::read_to_string(dir.join(ANNO_FILE)) {
        Err(e) => out.push(v(ANNO_FILE, None, None, format!("cannot read: {e}"))),
        Ok(text) => {
            for (i, line) in text.lines().enumerate() {
                lines += 1;
                let n = Some(i + 1);
                match serde_json::from_str::<AnnoLine>(line) {
                    Err(e) => out.push(v(ANNO_FILE, n, None, e.to_string())),
                    Ok(a) => {
                        if a.frame != i {
                            out.push(v(ANNO_FILE, n, Some(a.frame), format!("expected frame {i}")));
                        }
                        if i == 0 && !a.present {
                            out.push(v(ANNO_FILE, n, Some(a.frame), "frame 0 must be present"));
                        }
                        out.extend(a.problems().into_iter().map(|p| v(ANNO_FILE, n, Some(a.frame), p)));
                    }
                }
            }
            if let Some(m) = &meta {
                if lines != m.num_frames {
                    out.push(v(ANNO_FILE, None, None, format!("{lines} lines for num_frames = {}", m.num_frames)));
                }
            }
        }
    }

    let frames = meta.as_ref().map_or(lines, |m| m.num_frames.max(lines));
    for f in 0..frames {
        let name = frame_file(f);
        match std::fs::read(dir.join(&name)) {
            Err(e) => out.push(v(&name, None, Some(f), format!("cannot read: {e}"))),
            Ok(bytes) => {
                if let Err(m) = decode_cloud(&bytes) {
                    out.push(v(&name, None, Some(f), m));
                }
            }
        }
    }
    out
}
