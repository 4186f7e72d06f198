use std::io::{self, BufRead, Write};

use super::Frame;

/// Writes a binary P5 PGM with maxval 255; `comment` lines go in the header.
pub fn write_pgm<W: Write>(mut out: W, frame: &Frame, comment: Option<&str>) -> io::Result<()> {
    writeln!(out, "P5")?;
    if let Some(c) = comment {
        for line in c.lines() {
            writeln!(out, "# {line}")?;
        }
    }
    write!(out, "{} {}\n255\n", frame.width, frame.height)?;
    let bytes: Vec<u8> = frame
        .intensities
        .iter()
        .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    out.write_all(&bytes)
}

/// Reads a P5 PGM with maxval 255 into a frame with values `byte / 255`.
pub fn read_pgm<R: BufRead>(mut input: R) -> io::Result<Frame> {
    let invalid = |m: &str| io::Error::new(io::ErrorKind::InvalidData, m.to_string());
    let mut tokens = Vec::new();
    let mut line = String::new();
    while tokens.len() < 4 {
        line.clear();
        if input.read_line(&mut line)? == 0 {
            return Err(invalid("truncated PGM header"));
        }
        let content = line.split('#').next().unwrap_or("");
        tokens.extend(content.split_whitespace().map(str::to_owned));
    }
    if tokens[0] != "P5" {
        return Err(invalid("not a binary PGM (P5)"));
    }
    let parse = |s: &str| s.parse::<usize>().map_err(|_| invalid("bad PGM header number"));
    let (width, height, maxval) = (parse(&tokens[1])?, parse(&tokens[2])?, parse(&tokens[3])?);
    if maxval != 255 {
        return Err(invalid("only maxval 255 is supported"));
    }
    let mut bytes = vec![0u8; width * height];
    input.read_exact(&mut bytes)?;
    Ok(Frame {
        width,
        height,
        intensities: bytes.into_iter().map(|b| b as f64 / 255.0).collect(),
        truth: None,
    })
}
