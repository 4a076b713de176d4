//! Binary (P5) grayscale image export.

use std::path::Path;

use super::write_atomic;
use crate::error::Result;
use crate::scene::SceneImage;

/// Values are clamped to `[0, 1]` and scaled to `0..=255`; NaN maps to 0.
pub fn encode_pgm(image: &SceneImage) -> Vec<u8> {
    let side = image.side;
    let mut out = format!("P5\n{side} {side}\n255\n").into_bytes();
    out.extend(image.values.iter().map(|&v| {
        let v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
        (v * 255.0).round() as u8
    }));
    out
}

/// Returns the SHA-256 of the bytes written.
pub fn export_image_pgm(image: &SceneImage, path: &Path) -> Result<String> {
    let bytes = encode_pgm(image);
    write_atomic(path, &bytes)?;
    Ok(super::sha256_hex(&bytes))
}
