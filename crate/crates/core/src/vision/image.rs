//! RGB images, binary masks and binary PPM (P6) I/O.

use std::io::{self, BufRead, Write};

use super::color::{rgb_to_lab, ColorClass};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

impl Image {
    pub fn filled(width: u32, height: u32, rgb: [u8; 3]) -> Self {
        let n = width as usize * height as usize;
        let mut data = Vec::with_capacity(3 * n);
        for _ in 0..n {
            data.extend_from_slice(&rgb);
        }
        Self { width, height, data }
    }

    pub fn from_raw(width: u32, height: u32, data: Vec<u8>) -> Option<Self> {
        (data.len() == 3 * width as usize * height as usize).then_some(Self { width, height, data })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn as_raw(&self) -> &[u8] {
        &self.data
    }

    pub fn get(&self, x: u32, y: u32) -> [u8; 3] {
        let i = 3 * (y as usize * self.width as usize + x as usize);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn put(&mut self, x: u32, y: u32, rgb: [u8; 3]) {
        let i = 3 * (y as usize * self.width as usize + x as usize);
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    pub(crate) fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    pub fn write_ppm<W: Write>(&self, mut w: W) -> io::Result<()> {
        write!(w, "P6\n{} {}\n255\n", self.width, self.height)?;
        w.write_all(&self.data)
    }

    pub fn read_ppm<R: BufRead>(mut r: R) -> io::Result<Self> {
        let bad = |msg: &str| io::Error::new(io::ErrorKind::InvalidData, msg.to_string());
        let mut fields = Vec::with_capacity(4);
        let mut token = Vec::new();
        // Header: magic, width, height, maxval separated by whitespace, with
        // `#` comments; exactly one whitespace byte precedes the raster.
        while fields.len() < 4 {
            let mut byte = [0u8; 1];
            r.read_exact(&mut byte)?;
            let c = byte[0];
            if c == b'#' && token.is_empty() {
                let mut skip = Vec::new();
                r.read_until(b'\n', &mut skip)?;
                continue;
            }
            if c.is_ascii_whitespace() {
                if !token.is_empty() {
                    fields.push(String::from_utf8(std::mem::take(&mut token)).map_err(|_| bad("non-ascii header"))?);
                }
            } else {
                token.push(c);
            }
        }
        if fields[0] != "P6" {
            return Err(bad("not a binary PPM (P6)"));
        }
        let parse = |s: &str| s.parse::<u32>().map_err(|_| bad("bad header number"));
        let (width, height, maxval) = (parse(&fields[1])?, parse(&fields[2])?, parse(&fields[3])?);
        if maxval != 255 {
            return Err(bad("only 8-bit PPM supported"));
        }
        let mut data = vec![0u8; 3 * width as usize * height as usize];
        r.read_exact(&mut data)?;
        Ok(Self { width, height, data })
    }
}

/// Row-major binary image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    pub width: u32,
    pub height: u32,
    bits: Vec<bool>,
}

impl Mask {
    pub fn new(width: u32, height: u32) -> Self {
        Self { width, height, bits: vec![false; width as usize * height as usize] }
    }

    pub fn get(&self, x: u32, y: u32) -> bool {
        self.bits[y as usize * self.width as usize + x as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, v: bool) {
        self.bits[y as usize * self.width as usize + x as usize] = v;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub(crate) fn bits(&self) -> &[bool] {
        &self.bits
    }
}

/// One mask per class; a pixel is set iff its Lab value lies inside the class box.
pub fn threshold(img: &Image, classes: &[ColorClass]) -> Vec<Mask> {
    let mut masks: Vec<Mask> = classes.iter().map(|_| Mask::new(img.width, img.height)).collect();
    // Rendered scenes are dominated by long runs of identical pixels.
    let mut prev: Option<[u8; 3]> = None;
    let mut hit = vec![false; classes.len()];
    for (i, px) in img.data.chunks_exact(3).enumerate() {
        let rgb = [px[0], px[1], px[2]];
        if prev != Some(rgb) {
            let lab = rgb_to_lab(rgb);
            for (h, c) in hit.iter_mut().zip(classes) {
                *h = c.contains(&lab);
            }
            prev = Some(rgb);
        }
        for (m, h) in masks.iter_mut().zip(&hit) {
            m.bits[i] = *h;
        }
    }
    masks
}
