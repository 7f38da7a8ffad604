//! 8-bit grayscale images and binary PGM (P5) encoding.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};

/// Row-major 8-bit image; pixel `(x, y)` has its center at coordinates
/// `(x, y)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0; width * height],
        }
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: u8) {
        self.data[y * self.width + x] = v;
    }

    pub fn write_pgm<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        write!(w, "P5\n{} {}\n255\n", self.width, self.height)?;
        w.write_all(&self.data)
    }

    pub fn read_pgm<R: BufRead>(mut r: R) -> Result<Self> {
        let mut fields = Vec::with_capacity(4);
        let mut token = Vec::new();
        let mut byte = [0u8; 1];
        // Header: magic, width, height, maxval separated by whitespace, with
        // '#' comments; exactly one whitespace byte precedes the raster.
        while fields.len() < 4 {
            if r.read(&mut byte).map_err(|e| Error::io("<pgm>", e))? == 0 {
                return Err(Error::InvalidInput("truncated PGM header".into()));
            }
            let c = byte[0];
            if c == b'#' && token.is_empty() {
                let mut skip = Vec::new();
                r.read_until(b'\n', &mut skip)
                    .map_err(|e| Error::io("<pgm>", e))?;
                continue;
            }
            if c.is_ascii_whitespace() {
                if !token.is_empty() {
                    fields.push(String::from_utf8_lossy(&token).into_owned());
                    token.clear();
                }
            } else {
                token.push(c);
            }
        }
        if fields[0] != "P5" {
            return Err(Error::InvalidInput(format!(
                "unsupported PGM magic '{}'",
                fields[0]
            )));
        }
        let parse = |s: &str, what: &str| {
            s.parse::<usize>()
                .map_err(|_| Error::InvalidInput(format!("bad PGM {what} '{s}'")))
        };
        let width = parse(&fields[1], "width")?;
        let height = parse(&fields[2], "height")?;
        let maxval = parse(&fields[3], "maxval")?;
        if maxval == 0 || maxval > 255 {
            return Err(Error::InvalidInput(format!(
                "only 8-bit PGM is supported (maxval {maxval})"
            )));
        }
        let mut data = vec![0u8; width * height];
        r.read_exact(&mut data)
            .map_err(|e| Error::io("<pgm raster>", e))?;
        Ok(Self {
            width,
            height,
            data,
        })
    }
}
