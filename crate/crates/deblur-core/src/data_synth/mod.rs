//! Synthetic training data: random-text sharp images pushed through the
//! forward model (with noise), and out-of-distribution "sanity" samples
//! built by patching natural images into a 3x3 grid and cropping.
//!
//! Everything here is a pure function of its seed, so a data stream can
//! be regenerated bit-identically from `(config, seed)`.

mod font;

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::forward_model::{add_noise, ForwardModel, NoiseSpec};
use crate::image::{BitDepth, Image};
use crate::rng::{derive_seed, rng_from_seed};

pub use font::{RasterFont, SUBSTITUTION_GLYPH};

/// Characters drawn by default: Latin letters, digits, and a few specials.
pub const DEFAULT_CHARSET: &str =
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789.,:;!?+-=";

/// Font selection for text rendering.
#[derive(Debug, Clone, PartialEq)]
pub enum FontId {
    /// The embedded 5x7 monospace bitmap face, integer-scaled.
    Builtin,
    /// A directory of per-character PGM glyphs (hex code point names).
    Atlas(PathBuf),
}

/// Parameters of random text generation and rasterization.
#[derive(Debug, Clone)]
pub struct TextSpec {
    pub charset: String,
    pub min_len: usize,
    pub max_len: usize,
    pub lines: usize,
    pub font: FontId,
    pub glyph_height: usize,
}

impl Default for TextSpec {
    fn default() -> Self {
        TextSpec {
            charset: DEFAULT_CHARSET.to_string(),
            min_len: 24,
            max_len: 36,
            lines: 2,
            font: FontId::Builtin,
            glyph_height: 14,
        }
    }
}

impl TextSpec {
    fn validate(&self) -> Result<()> {
        if self.charset.is_empty() {
            return Err(Error::InvalidConfig("charset must be nonempty".into()));
        }
        if self.min_len > self.max_len {
            return Err(Error::InvalidConfig(format!(
                "min_len {} exceeds max_len {}",
                self.min_len, self.max_len
            )));
        }
        if self.lines == 0 {
            return Err(Error::InvalidConfig("line count must be >= 1".into()));
        }
        Ok(())
    }

    fn load_font(&self) -> Result<RasterFont> {
        match &self.font {
            FontId::Builtin => Ok(RasterFont::builtin(self.glyph_height)),
            FontId::Atlas(dir) => RasterFont::from_atlas(dir, self.glyph_height),
        }
    }
}

/// Uniform random string: length uniform in `[min_len, max_len]`,
/// characters uniform over the charset.
pub fn random_text(spec: &TextSpec, seed: u64) -> String {
    let chars: Vec<char> = spec.charset.chars().collect();
    let mut rng = rng_from_seed(seed);
    let len = rng.gen_range(spec.min_len..=spec.max_len);
    (0..len)
        .map(|_| chars[rng.gen_range(0..chars.len())])
        .collect()
}

/// Rasterize text onto an `m x n` canvas: dark glyphs (0.1) on a light
/// background (0.9), lines centered horizontally, the block centered
/// vertically. Overflow is truncated; the returned ground truth is
/// exactly the rendered character sequence, newline-separated.
pub fn render_text_image(
    text: &str,
    spec: &TextSpec,
    dims: (usize, usize),
) -> Result<(Image, String)> {
    spec.validate()?;
    let font = spec.load_font()?;
    let (m, n) = dims;
    let mut canvas = Image::filled(m, n, BACKGROUND);

    let advance = font.advance();
    let margin = font.gap();
    let chars_per_line = if n > 2 * margin + font.glyph_width() {
        (n - 2 * margin - font.glyph_width()) / advance + 1
    } else {
        0
    };
    let line_height = font.line_height();
    let lines_that_fit = if m >= font.glyph_height() {
        (m / line_height).max(1)
    } else {
        0
    };
    let max_lines = spec.lines.min(lines_that_fit);

    if chars_per_line == 0 || max_lines == 0 || text.is_empty() {
        return Ok((canvas, String::new()));
    }

    // Hard breaks are honored; everything else wraps at the line width.
    let mut lines: Vec<Vec<char>> = Vec::new();
    'outer: for segment in text.split('\n') {
        let chars: Vec<char> = segment.chars().collect();
        if chars.is_empty() {
            lines.push(Vec::new());
        }
        for chunk in chars.chunks(chars_per_line) {
            if lines.len() == max_lines {
                break 'outer;
            }
            lines.push(chunk.to_vec());
        }
        if lines.len() == max_lines {
            break;
        }
    }

    let block_height = lines.len() * line_height - 2 * font.gap();
    let top = m.saturating_sub(block_height) / 2;

    let mut rendered = Vec::with_capacity(lines.len());
    for (li, line) in lines.iter().enumerate() {
        let line_width = if line.is_empty() {
            0
        } else {
            line.len() * advance - font.gap()
        };
        let left = n.saturating_sub(line_width) / 2;
        let y0 = top + li * line_height;
        let mut drawn = String::with_capacity(line.len());
        for (ci, &c) in line.iter().enumerate() {
            let (actual, glyph) = font.glyph(c);
            drawn.push(actual);
            let x0 = left + ci * advance;
            for gi in 0..font.glyph_height() {
                for gj in 0..font.glyph_width() {
                    let (pi, pj) = (y0 + gi, x0 + gj);
                    if pi < m && pj < n {
                        let cov = glyph[gi * font.glyph_width() + gj];
                        let v = BACKGROUND - INK_SPAN * cov;
                        if v < canvas.get(pi, pj) {
                            canvas.set(pi, pj, v);
                        }
                    }
                }
            }
        }
        rendered.push(drawn);
    }

    Ok((canvas, rendered.join("\n")))
}

const BACKGROUND: f64 = 0.9;
const INK_SPAN: f64 = 0.8;

/// One synthetic text sample: render a random string, push it through the
/// forward model, and add the model's amplitude-dependent noise.
pub fn synth_hdc_pair(
    model: &ForwardModel,
    spec: &TextSpec,
    dims: (usize, usize),
    seed: u64,
) -> Result<(Image, Image, String)> {
    let text = random_text(spec, derive_seed(seed, 1));
    let (sharp, ground_truth) = render_text_image(&text, spec, dims)?;
    let clean = model.apply(&sharp)?;
    let blurry = add_noise(
        &clean,
        &NoiseSpec {
            variance: model.noise_variance,
            seed: derive_seed(seed, 2),
        },
    );
    Ok((sharp, blurry, ground_truth))
}

/// Out-of-distribution sample: draw 9 corpus images with replacement,
/// tile them 3x3 (nearest-neighbor resized to uniform tiles), and take a
/// uniformly random `m x n` crop.
pub fn sanity_patchwork(corpus: &[Image], dims: (usize, usize), seed: u64) -> Result<Image> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let (m, n) = dims;
    let th = m.div_ceil(3);
    let tw = n.div_ceil(3);
    let mut rng = rng_from_seed(seed);

    let mut patchwork = Image::zeros(3 * th, 3 * tw);
    for tile in 0..9 {
        let src = &corpus[rng.gen_range(0..corpus.len())];
        let (ti, tj) = (tile / 3, tile % 3);
        for i in 0..th {
            for j in 0..tw {
                let si = i * src.height() / th;
                let sj = j * src.width() / tw;
                patchwork.set(ti * th + i, tj * tw + j, src.get(si, sj));
            }
        }
    }

    let oy = rng.gen_range(0..=(3 * th - m));
    let ox = rng.gen_range(0..=(3 * tw - n));
    patchwork.crop(oy, ox, m, n)
}

/// Category tag of a stream sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleCategory {
    SynthHdc,
    Sanity,
}

impl SampleCategory {
    pub fn as_str(self) -> &'static str {
        match self {
            SampleCategory::SynthHdc => "synth_hdc",
            SampleCategory::Sanity => "sanity",
        }
    }
}

/// One labeled training sample.
#[derive(Debug, Clone)]
pub struct Sample {
    pub index: usize,
    pub category: SampleCategory,
    pub seed: u64,
    pub sharp: Image,
    pub blurry: Image,
    /// Present for text samples only.
    pub ground_truth: Option<String>,
}

/// Configuration of a finite synthetic sample stream.
#[derive(Debug, Clone)]
pub struct StreamConfig {
    pub model: ForwardModel,
    pub text_spec: TextSpec,
    pub sanity_corpus: Vec<Image>,
    /// Number of synthetic text samples to emit.
    pub hdc_count: usize,
    /// Number of sanity samples to emit.
    pub sanity_count: usize,
    pub dims: (usize, usize),
    /// Whether sanity samples also receive the noise model.
    pub noisy_sanity: bool,
    pub seed: u64,
}

/// Finite iterator over stream samples in a seeded interleaving that
/// realizes the configured category counts exactly.
pub struct SampleStream {
    config: StreamConfig,
    labels: Vec<SampleCategory>,
    next: usize,
}

/// Build the sample stream; the interleaving is a seeded shuffle of the
/// exact label multiset, so any prefix approximates the configured ratio
/// and the totals are met exactly at exhaustion.
pub fn stream(config: StreamConfig) -> Result<SampleStream> {
    config.text_spec.validate()?;
    if config.sanity_count > 0 && config.sanity_corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if let Some(bg) = &config.model.sharp_background {
        if (bg.height(), bg.width()) != config.dims {
            return Err(Error::DimensionMismatch {
                expected_h: config.dims.0,
                expected_w: config.dims.1,
                got_h: bg.height(),
                got_w: bg.width(),
            });
        }
    }
    let mut labels = Vec::with_capacity(config.hdc_count + config.sanity_count);
    labels.extend(std::iter::repeat(SampleCategory::SynthHdc).take(config.hdc_count));
    labels.extend(std::iter::repeat(SampleCategory::Sanity).take(config.sanity_count));
    let mut rng = rng_from_seed(derive_seed(config.seed, 0));
    labels.shuffle(&mut rng);
    Ok(SampleStream {
        config,
        labels,
        next: 0,
    })
}

impl Iterator for SampleStream {
    type Item = Sample;

    fn next(&mut self) -> Option<Sample> {
        if self.next >= self.labels.len() {
            return None;
        }
        let index = self.next;
        self.next += 1;
        let category = self.labels[index];
        let seed = derive_seed(self.config.seed, 1 + index as u64);
        let sample = match category {
            SampleCategory::SynthHdc => {
                let (sharp, blurry, text) = synth_hdc_pair(
                    &self.config.model,
                    &self.config.text_spec,
                    self.config.dims,
                    seed,
                )
                .expect("stream config was validated");
                Sample {
                    index,
                    category,
                    seed,
                    sharp,
                    blurry,
                    ground_truth: Some(text),
                }
            }
            SampleCategory::Sanity => {
                let sharp = sanity_patchwork(
                    &self.config.sanity_corpus,
                    self.config.dims,
                    derive_seed(seed, 1),
                )
                .expect("corpus was validated");
                let clean = self
                    .config
                    .model
                    .apply(&sharp)
                    .expect("dims were validated");
                let blurry = if self.config.noisy_sanity {
                    add_noise(
                        &clean,
                        &NoiseSpec {
                            variance: self.config.model.noise_variance,
                            seed: derive_seed(seed, 2),
                        },
                    )
                } else {
                    clean
                };
                Sample {
                    index,
                    category,
                    seed,
                    sharp,
                    blurry,
                    ground_truth: None,
                }
            }
        };
        Some(sample)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let rest = self.labels.len() - self.next;
        (rest, Some(rest))
    }
}

/// Load every PGM in a directory (sorted by file name) as corpus images.
pub fn load_corpus(dir: impl AsRef<Path>) -> Result<Vec<Image>> {
    let dir = dir.as_ref();
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().and_then(|s| s.to_str()) == Some("pgm"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    paths.iter().map(Image::load_pgm).collect()
}

/// Write a stream to the dataset directory layout
/// `level_<k>/sample_<j>_{sharp,blurry}.pgm` (plus `sample_<j>.txt` for
/// text samples) and return manifest lines `index,category,seed`.
pub fn write_dataset(
    samples: impl IntoIterator<Item = Sample>,
    out_dir: impl AsRef<Path>,
    level: u32,
) -> Result<Vec<String>> {
    let level_dir = out_dir.as_ref().join(format!("level_{level}"));
    std::fs::create_dir_all(&level_dir).map_err(|e| Error::io(&level_dir, e))?;
    let mut manifest = Vec::new();
    for sample in samples {
        let j = sample.index;
        sample.sharp.save_pgm(
            level_dir.join(format!("sample_{j}_sharp.pgm")),
            BitDepth::Sixteen,
        )?;
        sample.blurry.save_pgm(
            level_dir.join(format!("sample_{j}_blurry.pgm")),
            BitDepth::Sixteen,
        )?;
        if let Some(text) = &sample.ground_truth {
            let path = level_dir.join(format!("sample_{j}.txt"));
            std::fs::write(&path, format!("{text}\n")).map_err(|e| Error::io(&path, e))?;
        }
        manifest.push(format!("{j},{},{}", sample.category.as_str(), sample.seed));
    }
    Ok(manifest)
}
