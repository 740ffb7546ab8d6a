//! Embedded 5x7 monospace bitmap font and glyph atlas loading.
//!
//! The built-in face covers Latin letters, digits, and a handful of
//! punctuation marks; it is rendered by integer scaling so the artifact
//! carries no font dependencies. A directory of per-character PGM files
//! (named by hexadecimal code point, e.g. `0041.pgm` for `A`) can
//! substitute richer pre-rasterized faces.

use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::image::Image;

pub(crate) const BASE_WIDTH: usize = 5;
pub(crate) const BASE_HEIGHT: usize = 7;

/// Character used when the requested glyph is missing from the font.
pub const SUBSTITUTION_GLYPH: char = '?';

/// A rasterized monospace font: every glyph shares one cell size, values
/// are ink coverage in `[0, 1]`.
#[derive(Debug, Clone)]
pub struct RasterFont {
    glyph_height: usize,
    glyph_width: usize,
    glyphs: HashMap<char, Vec<f64>>,
}

impl RasterFont {
    /// Rasterize the built-in 5x7 face at an integer scale chosen so the
    /// glyph height is at least `target_height` (minimum scale 1).
    pub fn builtin(target_height: usize) -> RasterFont {
        let scale = (target_height / BASE_HEIGHT).max(1);
        let gh = BASE_HEIGHT * scale;
        let gw = BASE_WIDTH * scale;
        let mut glyphs = HashMap::new();
        for c in BUILTIN_CHARS.chars() {
            let rows = builtin_rows(c).expect("builtin charset is complete");
            let mut bitmap = vec![0.0; gh * gw];
            for (i, row) in rows.iter().enumerate() {
                for (j, cell) in row.chars().enumerate() {
                    if cell != ' ' {
                        for di in 0..scale {
                            for dj in 0..scale {
                                bitmap[(i * scale + di) * gw + (j * scale + dj)] = 1.0;
                            }
                        }
                    }
                }
            }
            glyphs.insert(c, bitmap);
        }
        RasterFont {
            glyph_height: gh,
            glyph_width: gw,
            glyphs,
        }
    }

    /// Load a glyph atlas: every `<hex codepoint>.pgm` in the directory
    /// becomes one glyph, bilinearly resized to `target_height`. Ink is
    /// dark in the files (0 = full ink), matching how text scans look.
    pub fn from_atlas(dir: impl AsRef<Path>, target_height: usize) -> Result<RasterFont> {
        let dir = dir.as_ref();
        let mut raw: Vec<(char, Image)> = Vec::new();
        let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
        for entry in entries {
            let entry = entry.map_err(|e| Error::io(dir, e))?;
            let path = entry.path();
            if path.extension().and_then(|s| s.to_str()) != Some("pgm") {
                continue;
            }
            let stem = match path.file_stem().and_then(|s| s.to_str()) {
                Some(s) => s,
                None => continue,
            };
            let code = u32::from_str_radix(stem, 16)
                .map_err(|_| Error::Format(format!("atlas file name {stem:?} is not hex")))?;
            let c = char::from_u32(code)
                .ok_or_else(|| Error::Format(format!("invalid code point {code:#x}")))?;
            raw.push((c, Image::load_pgm(&path)?));
        }
        if raw.is_empty() {
            return Err(Error::Format(format!(
                "no glyph PGMs found in {}",
                dir.display()
            )));
        }
        let aspect = raw[0].1.width() as f64 / raw[0].1.height() as f64;
        let gh = target_height.max(1);
        let gw = ((gh as f64 * aspect).round() as usize).max(1);
        let mut glyphs = HashMap::new();
        for (c, img) in raw {
            let mut bitmap = vec![0.0; gh * gw];
            for i in 0..gh {
                for j in 0..gw {
                    let y = (i as f64 + 0.5) / gh as f64 * img.height() as f64;
                    let x = (j as f64 + 0.5) / gw as f64 * img.width() as f64;
                    let v = img.sample_at(x, y, crate::image::BoundaryCondition::Reflexive);
                    bitmap[i * gw + j] = 1.0 - v; // dark pixels carry the ink
                }
            }
            glyphs.insert(c, bitmap);
        }
        Ok(RasterFont {
            glyph_height: gh,
            glyph_width: gw,
            glyphs,
        })
    }

    pub fn glyph_height(&self) -> usize {
        self.glyph_height
    }

    pub fn glyph_width(&self) -> usize {
        self.glyph_width
    }

    /// Horizontal advance per character (glyph plus gap).
    pub fn advance(&self) -> usize {
        self.glyph_width + self.gap()
    }

    /// Inter-character and inter-line spacing unit.
    pub fn gap(&self) -> usize {
        (self.glyph_width / BASE_WIDTH).max(1)
    }

    pub fn line_height(&self) -> usize {
        self.glyph_height + 2 * self.gap()
    }

    pub fn has_glyph(&self, c: char) -> bool {
        self.glyphs.contains_key(&c)
    }

    /// Glyph coverage for a character, substituting when missing. Returns
    /// the character actually rendered along with its bitmap.
    pub fn glyph(&self, c: char) -> (char, &[f64]) {
        if let Some(g) = self.glyphs.get(&c) {
            (c, g)
        } else {
            let g = self
                .glyphs
                .get(&SUBSTITUTION_GLYPH)
                .expect("substitution glyph present");
            (SUBSTITUTION_GLYPH, g)
        }
    }
}

pub(crate) const BUILTIN_CHARS: &str =
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789.,:;!?+-= ";

#[rustfmt::skip]
fn builtin_rows(c: char) -> Option<[&'static str; 7]> {
    let rows = match c {
        'A' => [" ### ", "#   #", "#   #", "#####", "#   #", "#   #", "#   #"],
        'B' => ["#### ", "#   #", "#   #", "#### ", "#   #", "#   #", "#### "],
        'C' => [" ### ", "#   #", "#    ", "#    ", "#    ", "#   #", " ### "],
        'D' => ["#### ", "#   #", "#   #", "#   #", "#   #", "#   #", "#### "],
        'E' => ["#####", "#    ", "#    ", "#### ", "#    ", "#    ", "#####"],
        'F' => ["#####", "#    ", "#    ", "#### ", "#    ", "#    ", "#    "],
        'G' => [" ### ", "#   #", "#    ", "# ###", "#   #", "#   #", " ### "],
        'H' => ["#   #", "#   #", "#   #", "#####", "#   #", "#   #", "#   #"],
        'I' => [" ### ", "  #  ", "  #  ", "  #  ", "  #  ", "  #  ", " ### "],
        'J' => ["  ###", "   # ", "   # ", "   # ", "   # ", "#  # ", " ##  "],
        'K' => ["#   #", "#  # ", "# #  ", "##   ", "# #  ", "#  # ", "#   #"],
        'L' => ["#    ", "#    ", "#    ", "#    ", "#    ", "#    ", "#####"],
        'M' => ["#   #", "## ##", "# # #", "# # #", "#   #", "#   #", "#   #"],
        'N' => ["#   #", "##  #", "# # #", "#  ##", "#   #", "#   #", "#   #"],
        'O' => [" ### ", "#   #", "#   #", "#   #", "#   #", "#   #", " ### "],
        'P' => ["#### ", "#   #", "#   #", "#### ", "#    ", "#    ", "#    "],
        'Q' => [" ### ", "#   #", "#   #", "#   #", "# # #", "#  # ", " ## #"],
        'R' => ["#### ", "#   #", "#   #", "#### ", "# #  ", "#  # ", "#   #"],
        'S' => [" ####", "#    ", "#    ", " ### ", "    #", "    #", "#### "],
        'T' => ["#####", "  #  ", "  #  ", "  #  ", "  #  ", "  #  ", "  #  "],
        'U' => ["#   #", "#   #", "#   #", "#   #", "#   #", "#   #", " ### "],
        'V' => ["#   #", "#   #", "#   #", "#   #", " # # ", " # # ", "  #  "],
        'W' => ["#   #", "#   #", "#   #", "# # #", "# # #", "# # #", " # # "],
        'X' => ["#   #", "#   #", " # # ", "  #  ", " # # ", "#   #", "#   #"],
        'Y' => ["#   #", "#   #", " # # ", "  #  ", "  #  ", "  #  ", "  #  "],
        'Z' => ["#####", "    #", "   # ", "  #  ", " #   ", "#    ", "#####"],
        'a' => ["     ", "     ", " ### ", "    #", " ####", "#   #", " ####"],
        'b' => ["#    ", "#    ", "#### ", "#   #", "#   #", "#   #", "#### "],
        'c' => ["     ", "     ", " ####", "#    ", "#    ", "#    ", " ####"],
        'd' => ["    #", "    #", " ####", "#   #", "#   #", "#   #", " ####"],
        'e' => ["     ", "     ", " ### ", "#   #", "#####", "#    ", " ### "],
        'f' => ["  ## ", " #   ", "#### ", " #   ", " #   ", " #   ", " #   "],
        'g' => ["     ", " ####", "#   #", "#   #", " ####", "    #", " ### "],
        'h' => ["#    ", "#    ", "#### ", "#   #", "#   #", "#   #", "#   #"],
        'i' => ["  #  ", "     ", " ##  ", "  #  ", "  #  ", "  #  ", " ### "],
        'j' => ["   # ", "     ", "  ## ", "   # ", "   # ", "#  # ", " ##  "],
        'k' => ["#    ", "#    ", "#  # ", "# #  ", "##   ", "# #  ", "#  # "],
        'l' => [" ##  ", "  #  ", "  #  ", "  #  ", "  #  ", "  #  ", " ### "],
        'm' => ["     ", "     ", "## # ", "# # #", "# # #", "# # #", "# # #"],
        'n' => ["     ", "     ", "#### ", "#   #", "#   #", "#   #", "#   #"],
        'o' => ["     ", "     ", " ### ", "#   #", "#   #", "#   #", " ### "],
        'p' => ["     ", "     ", "#### ", "#   #", "#### ", "#    ", "#    "],
        'q' => ["     ", "     ", " ####", "#   #", " ####", "    #", "    #"],
        'r' => ["     ", "     ", "# ## ", "##   ", "#    ", "#    ", "#    "],
        's' => ["     ", "     ", " ####", "#    ", " ### ", "    #", "#### "],
        't' => [" #   ", " #   ", "#### ", " #   ", " #   ", " #   ", "  ## "],
        'u' => ["     ", "     ", "#   #", "#   #", "#   #", "#   #", " ####"],
        'v' => ["     ", "     ", "#   #", "#   #", "#   #", " # # ", "  #  "],
        'w' => ["     ", "     ", "#   #", "#   #", "# # #", "# # #", " # # "],
        'x' => ["     ", "     ", "#   #", " # # ", "  #  ", " # # ", "#   #"],
        'y' => ["     ", "     ", "#   #", "#   #", " ####", "    #", " ### "],
        'z' => ["     ", "     ", "#####", "   # ", "  #  ", " #   ", "#####"],
        '0' => [" ### ", "#   #", "#  ##", "# # #", "##  #", "#   #", " ### "],
        '1' => ["  #  ", " ##  ", "  #  ", "  #  ", "  #  ", "  #  ", " ### "],
        '2' => [" ### ", "#   #", "    #", "   # ", "  #  ", " #   ", "#####"],
        '3' => [" ### ", "#   #", "    #", "  ## ", "    #", "#   #", " ### "],
        '4' => ["   # ", "  ## ", " # # ", "#  # ", "#####", "   # ", "   # "],
        '5' => ["#####", "#    ", "#### ", "    #", "    #", "#   #", " ### "],
        '6' => ["  ## ", " #   ", "#    ", "#### ", "#   #", "#   #", " ### "],
        '7' => ["#####", "    #", "   # ", "  #  ", " #   ", " #   ", " #   "],
        '8' => [" ### ", "#   #", "#   #", " ### ", "#   #", "#   #", " ### "],
        '9' => [" ### ", "#   #", "#   #", " ####", "    #", "   # ", " ##  "],
        '.' => ["     ", "     ", "     ", "     ", "     ", "  ## ", "  ## "],
        ',' => ["     ", "     ", "     ", "     ", "  ## ", "  ## ", " #   "],
        ':' => ["     ", "  ## ", "  ## ", "     ", "  ## ", "  ## ", "     "],
        ';' => ["     ", "  ## ", "  ## ", "     ", "  ## ", "  #  ", " #   "],
        '!' => ["  #  ", "  #  ", "  #  ", "  #  ", "  #  ", "     ", "  #  "],
        '?' => [" ### ", "#   #", "    #", "   # ", "  #  ", "     ", "  #  "],
        '+' => ["     ", "  #  ", "  #  ", "#####", "  #  ", "  #  ", "     "],
        '-' => ["     ", "     ", "     ", "#####", "     ", "     ", "     "],
        '=' => ["     ", "     ", "#####", "     ", "#####", "     ", "     "],
        ' ' => ["     ", "     ", "     ", "     ", "     ", "     ", "     "],
        _ => return None,
    };
    Some(rows)
}
