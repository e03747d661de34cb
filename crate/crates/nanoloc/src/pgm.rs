//! 8-bit binary PGM (P5) frames.

use std::fs;
use std::io::Cursor;
use std::path::Path;

use image::codecs::pnm::{PnmDecoder, PnmEncoder, PnmSubtype, SampleEncoding};
use image::{ExtendedColorType, ImageDecoder, ImageEncoder};
use nanoloc_core::vision::Frame;

use crate::error::{Error, Result};

pub fn encode(frame: &Frame) -> Vec<u8> {
    let mut out = Vec::new();
    PnmEncoder::new(&mut out)
        .with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary))
        .write_image(
            frame.pixels(),
            frame.width() as u32,
            frame.height() as u32,
            ExtendedColorType::L8,
        )
        .expect("in-memory PGM encoding");
    out
}

pub fn decode(bytes: &[u8], path: &Path) -> Result<Frame> {
    let bad = |reason: String| Error::Format {
        path: path.to_path_buf(),
        offset: 0,
        reason,
    };
    if !bytes.starts_with(b"P5") {
        return Err(bad("not a binary PGM (expected P5 magic)".into()));
    }
    let dec = PnmDecoder::new(Cursor::new(bytes)).map_err(|e| bad(e.to_string()))?;
    if dec.color_type() != image::ColorType::L8 {
        return Err(bad(format!(
            "expected 8-bit gray samples, found {:?}",
            dec.color_type()
        )));
    }
    let (w, h) = dec.dimensions();
    let mut pixels = vec![0u8; dec.total_bytes() as usize];
    dec.read_image(&mut pixels)
        .map_err(|e| bad(e.to_string()))?;
    Frame::new(w as usize, h as usize, pixels).map_err(Error::from)
}

pub fn read(path: &Path) -> Result<Frame> {
    let bytes = fs::read(path).map_err(Error::io(path))?;
    decode(&bytes, path)
}

pub fn write(path: &Path, frame: &Frame) -> Result<()> {
    fs::write(path, encode(frame)).map_err(Error::io(path))
}
