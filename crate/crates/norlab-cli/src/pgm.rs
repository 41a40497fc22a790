//! Minimal PGM support: P2/P5 reading for pattern images and P2 writing
//! for weight-column export.

use std::path::Path;

use ndarray::Array2;
use nor_core::{NorError, Result};

/// Reads a PGM (P2 or P5) and thresholds it into a binary pattern: pixels
/// darker than half of maxval are "set" (value 1).
pub fn read_binary_pattern(path: &Path) -> Result<Array2<u8>> {
    let bytes = std::fs::read(path)?;
    let mut pos = 0usize;

    let mut next_token = |bytes: &[u8]| -> Result<String> {
        // skip whitespace and comment lines
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                break;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(NorError::Format("truncated PGM header".into()));
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };

    let magic = next_token(&bytes)?;
    if magic != "P2" && magic != "P5" {
        return Err(NorError::Format(format!("not a PGM file: magic {magic}")));
    }
    let parse = |s: String| -> Result<usize> {
        s.parse()
            .map_err(|_| NorError::Format(format!("bad PGM header token {s:?}")))
    };
    let width = parse(next_token(&bytes)?)?;
    let height = parse(next_token(&bytes)?)?;
    let maxval = parse(next_token(&bytes)?)?;
    if maxval == 0 || maxval > 255 {
        return Err(NorError::Format(format!("unsupported PGM maxval {maxval}")));
    }

    let mut pixels = Vec::with_capacity(width * height);
    if magic == "P2" {
        for _ in 0..width * height {
            pixels.push(parse(next_token(&bytes)?)? as u32);
        }
    } else {
        pos += 1; // single whitespace after maxval
        if bytes.len() < pos + width * height {
            return Err(NorError::Format("truncated PGM payload".into()));
        }
        pixels.extend(bytes[pos..pos + width * height].iter().map(|&b| b as u32));
    }
    let threshold = maxval as u32 / 2;
    let data: Vec<u8> = pixels.iter().map(|&p| u8::from(p <= threshold)).collect();
    Array2::from_shape_vec((height, width), data).map_err(|e| NorError::Format(e.to_string()))
}

/// Writes one weight column as a P2 image with the column minimum mapped
/// to 255 (white) and the maximum to 0 (black); a constant column renders
/// all white.
pub fn write_weight_image(path: &Path, values: &[f64], height: usize, width: usize) -> Result<()> {
    if values.len() != height * width {
        return Err(NorError::DimMismatch(format!(
            "{} values for a {height}x{width} image",
            values.len()
        )));
    }
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut text = format!("P2\n{width} {height}\n255\n");
    for row in 0..height {
        for col in 0..width {
            if col > 0 {
                text.push(' ');
            }
            let v = values[row * width + col];
            let level = if max > min {
                (255.0 * (max - v) / (max - min)).round() as u8
            } else {
                255
            };
            text.push_str(&level.to_string());
        }
        text.push('\n');
    }
    std::fs::write(path, text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ascii_round_trip_through_threshold() {
        let dir = std::env::temp_dir().join(format!("nor-pgm-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("col.pgm");
        // weights: 0 maps to white (255), max to black (0)
        let values = [0.0, 1.6, 0.8, 0.0];
        write_weight_image(&path, &values, 2, 2).unwrap();
        let pattern = read_binary_pattern(&path).unwrap();
        assert_eq!(pattern, ndarray::arr2(&[[0u8, 1], [1, 0]]));

        let flat = [0.7, 0.7];
        let p2 = dir.join("flat.pgm");
        write_weight_image(&p2, &flat, 1, 2).unwrap();
        let pattern = read_binary_pattern(&p2).unwrap();
        assert_eq!(pattern, ndarray::arr2(&[[0u8, 0]]));
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn comments_and_p5_are_handled() {
        let dir = std::env::temp_dir().join(format!("nor-pgm5-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let p2 = dir.join("c.pgm");
        std::fs::write(&p2, "P2\n# a comment\n2 1\n255\n0 255\n").unwrap();
        assert_eq!(read_binary_pattern(&p2).unwrap(), ndarray::arr2(&[[1u8, 0]]));

        let p5 = dir.join("b.pgm");
        let mut bytes = b"P5\n2 2\n255\n".to_vec();
        bytes.extend_from_slice(&[0, 255, 200, 10]);
        std::fs::write(&p5, bytes).unwrap();
        assert_eq!(
            read_binary_pattern(&p5).unwrap(),
            ndarray::arr2(&[[1u8, 0], [0, 1]])
        );
        std::fs::remove_dir_all(&dir).ok();
    }
}
