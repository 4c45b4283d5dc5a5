//! Indexed-PNG codec for layouts and the one-line ratio sidecar.

use super::{ClassRatios, LayoutError, SemanticLayout, NUM_CLASSES, PALETTE};
use png::{BitDepth, ColorType, Transformations};
use std::io::Cursor;

/// Encode a layout as an 8-bit indexed PNG whose palette is the class palette.
pub fn encode_png(layout: &SemanticLayout) -> Vec<u8> {
    let mut out = Vec::new();
    {
        let mut encoder = png::Encoder::new(&mut out, layout.width() as u32, layout.height() as u32);
        encoder.set_color(ColorType::Indexed);
        encoder.set_depth(BitDepth::Eight);
        encoder.set_palette(PALETTE.concat());
        // Writing into a Vec cannot fail for a well-formed header and buffer.
        let mut writer = encoder.write_header().expect("png header");
        writer
            .write_image_data(layout.labels())
            .expect("png image data");
        writer.finish().expect("png finish");
    }
    out
}

/// Decode any 8/16-bit PNG whose pixels use palette colors exactly.
pub fn decode_png(bytes: &[u8], meters_per_pixel: f64) -> Result<SemanticLayout, LayoutError> {
    let png_err = |e: png::DecodingError| LayoutError::Png(e.to_string());
    let mut decoder = png::Decoder::new(Cursor::new(bytes));
    decoder.set_transformations(Transformations::EXPAND | Transformations::STRIP_16);
    let mut reader = decoder.read_info().map_err(png_err)?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| LayoutError::Png("image too large".into()))?;
    let mut buf = vec![0u8; size];
    let info = reader.next_frame(&mut buf).map_err(png_err)?;
    let (width, height) = (info.width as usize, info.height as usize);
    let channels = match info.color_type {
        ColorType::Grayscale => 1,
        ColorType::GrayscaleAlpha => 2,
        ColorType::Rgb => 3,
        ColorType::Rgba => 4,
        ColorType::Indexed => {
            return Err(LayoutError::Png("palette expansion failed".into()));
        }
    };
    let mut labels = Vec::with_capacity(width * height);
    for y in 0..height {
        let row = &buf[y * info.line_size..y * info.line_size + width * channels];
        for x in 0..width {
            let px = &row[x * channels..(x + 1) * channels];
            let rgb = if channels < 3 {
                [px[0], px[0], px[0]]
            } else {
                [px[0], px[1], px[2]]
            };
            let id = PALETTE
                .iter()
                .position(|c| *c == rgb)
                .ok_or(LayoutError::UnknownColor { x, y, rgb })?;
            labels.push(id as u8);
        }
    }
    SemanticLayout::new(width, height, labels, meters_per_pixel)
}

/// Seven comma-separated decimals in class-id order, newline terminated.
///
/// Values are written in shortest round-trip form so parsing recovers them exactly.
pub fn ratio_line(ratios: &ClassRatios) -> String {
    let parts: Vec<String> = ratios.as_array().iter().map(|v| format!("{v}")).collect();
    format!("{}\n", parts.join(","))
}

pub fn parse_ratio_line(line: &str) -> Result<ClassRatios, LayoutError> {
    let values = line
        .trim()
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| LayoutError::RatioParse(format!("'{s}': {e}")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    if values.len() != NUM_CLASSES {
        return Err(LayoutError::RatioParse(format!(
            "expected {NUM_CLASSES} values, got {}",
            values.len()
        )));
    }
    ClassRatios::try_from(values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layout::{compute_ratios, LandClass};

    fn rgb_png(width: u32, height: u32, pixels: &[[u8; 3]]) -> Vec<u8> {
        let mut out = Vec::new();
        let mut enc = png::Encoder::new(&mut out, width, height);
        enc.set_color(ColorType::Rgb);
        enc.set_depth(BitDepth::Eight);
        let mut w = enc.write_header().unwrap();
        w.write_image_data(&pixels.concat()).unwrap();
        w.finish().unwrap();
        out
    }

    #[test]
    fn single_water_pixel_decodes_to_palette_color() {
        let layout = SemanticLayout::filled(1, 1, LandClass::Water, 0.5).unwrap();
        let bytes = encode_png(&layout);
        let mut decoder = png::Decoder::new(Cursor::new(bytes.as_slice()));
        decoder.set_transformations(Transformations::EXPAND);
        let mut reader = decoder.read_info().unwrap();
        let mut buf = vec![0; reader.output_buffer_size().unwrap()];
        let info = reader.next_frame(&mut buf).unwrap();
        assert_eq!(info.color_type, ColorType::Rgb);
        assert_eq!(&buf[..3], &[0, 191, 255]);
        assert_eq!(decode_png(&bytes, 0.5).unwrap(), layout);
    }

    #[test]
    fn unknown_color_names_pixel() {
        let mut pixels = vec![PALETTE[0]; 4];
        pixels[3] = [1, 2, 3];
        let bytes = rgb_png(2, 2, &pixels);
        assert_eq!(
            decode_png(&bytes, 0.5),
            Err(LayoutError::UnknownColor {
                x: 1,
                y: 1,
                rgb: [1, 2, 3]
            })
        );
    }

    #[test]
    fn hand_built_three_by_three() {
        // one pixel per class, padded with ground
        let table: [([u8; 3], u8); 9] = [
            ([85, 107, 47], 0),
            ([0, 255, 0], 1),
            ([255, 165, 0], 2),
            ([255, 0, 255], 3),
            ([200, 200, 200], 4),
            ([255, 255, 0], 5),
            ([0, 191, 255], 6),
            ([85, 107, 47], 0),
            ([85, 107, 47], 0),
        ];
        let pixels: Vec<[u8; 3]> = table.iter().map(|(c, _)| *c).collect();
        let expected: Vec<u8> = table.iter().map(|(_, id)| *id).collect();
        let layout = decode_png(&rgb_png(3, 3, &pixels), 0.5).unwrap();
        assert_eq!(layout.labels(), expected.as_slice());
    }

    #[test]
    fn ratio_line_round_trip() {
        let layout = SemanticLayout::new(3, 1, vec![0, 2, 6], 0.5).unwrap();
        let r = compute_ratios(&layout);
        let line = ratio_line(&r);
        assert_eq!(line.lines().count(), 1);
        assert_eq!(parse_ratio_line(&line).unwrap(), r);
        assert!(parse_ratio_line("0.5,0.5").is_err());
        assert!(parse_ratio_line("a,0,0,0,0,0,1").is_err());
    }
}
