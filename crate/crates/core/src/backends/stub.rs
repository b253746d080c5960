use std::io::Cursor;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::{EmbedBackend, EmbedInput, EmbeddingVector, GenRequest, ImageBackend, ModelTag};
use crate::{Error, Result};

/// iTXt keyword under which stub images store their prompt.
pub const STUB_PROMPT_KEY: &str = "prompt";
pub const STUB_EMBED_DIM: usize = 256;
const STUB_SIDE: u32 = 8;

/// Deterministic generator: an 8x8 RGB PNG whose pixels come from
/// SHA-256(prompt, seed, width, height), with the prompt embedded as text.
#[derive(Clone, Copy, Debug, Default)]
pub struct StubImageBackend;

fn pixel_bytes(req: &GenRequest) -> Vec<u8> {
    let needed = (STUB_SIDE * STUB_SIDE * 3) as usize;
    let mut out = Vec::with_capacity(needed);
    let mut counter = 0u32;
    while out.len() < needed {
        let mut h = Sha256::new();
        h.update(req.prompt.as_bytes());
        h.update([0]);
        h.update(req.seed.to_le_bytes());
        h.update(req.width.to_le_bytes());
        h.update(req.height.to_le_bytes());
        h.update(counter.to_le_bytes());
        out.extend_from_slice(&h.finalize());
        counter += 1;
    }
    out.truncate(needed);
    out
}

impl ImageBackend for StubImageBackend {
    fn generate(&self, req: &GenRequest) -> Result<Vec<u8>> {
        req.validate()?;
        let mut bytes = Vec::new();
        let mut encoder = png::Encoder::new(&mut bytes, STUB_SIDE, STUB_SIDE);
        encoder.set_color(png::ColorType::Rgb);
        encoder.set_depth(png::BitDepth::Eight);
        encoder
            .add_itxt_chunk(STUB_PROMPT_KEY.to_string(), req.prompt.clone())
            .map_err(|e| Error::Protocol(format!("png text chunk: {e}")))?;
        let mut writer = encoder
            .write_header()
            .map_err(|e| Error::Protocol(format!("png header: {e}")))?;
        writer
            .write_image_data(&pixel_bytes(req))
            .map_err(|e| Error::Protocol(format!("png data: {e}")))?;
        writer.finish().map_err(|e| Error::Protocol(format!("png finish: {e}")))?;
        Ok(bytes)
    }
}

/// Extracts the prompt text a stub image was generated from.
pub fn read_stub_prompt(png_bytes: &[u8]) -> Result<String> {
    let reader = png::Decoder::new(Cursor::new(png_bytes))
        .read_info()
        .map_err(|e| Error::Protocol(format!("not a PNG: {e}")))?;
    let info = reader.info();
    if let Some(chunk) = info.utf8_text.iter().find(|c| c.keyword == STUB_PROMPT_KEY) {
        return chunk
            .get_text()
            .map_err(|e| Error::Protocol(format!("bad prompt chunk: {e}")));
    }
    if let Some(chunk) = info
        .uncompressed_latin1_text
        .iter()
        .find(|c| c.keyword == STUB_PROMPT_KEY)
    {
        return Ok(chunk.text.clone());
    }
    Err(Error::Protocol("image has no prompt metadata".into()))
}

/// Bag-of-words hash embedder. Text is lowercased and split into alphanumeric
/// tokens; each token is hashed (salted by the tag's family) to one of 256
/// buckets and counted. Images embed the prompt stored in their metadata, so a
/// stub image and its prompt have cosine 1 under the CLIP tags, while DINO
/// vectors land in a differently salted space. Images without that metadata
/// (real photos) get a non-negative pseudo-random vector keyed by their bytes.
#[derive(Clone, Copy, Debug, Default)]
pub struct StubEmbedBackend;

impl StubEmbedBackend {
    pub fn bucket(tag: ModelTag, token: &str) -> usize {
        let mut h = Sha256::new();
        h.update(tag.family().as_bytes());
        h.update([0]);
        h.update(token.as_bytes());
        let digest = h.finalize();
        let mut word = [0u8; 8];
        word.copy_from_slice(&digest[..8]);
        (u64::from_le_bytes(word) % STUB_EMBED_DIM as u64) as usize
    }

    pub fn tokens(text: &str) -> impl Iterator<Item = String> + '_ {
        text.split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty())
            .map(str::to_lowercase)
    }

    pub fn embed_text(&self, text: &str, tag: ModelTag) -> Result<EmbeddingVector> {
        let mut values = vec![0.0; STUB_EMBED_DIM];
        let mut any = false;
        for token in Self::tokens(text) {
            values[Self::bucket(tag, &token)] += 1.0;
            any = true;
        }
        if !any {
            return Err(Error::InvalidArgument(format!("no tokens to embed in {text:?}")));
        }
        EmbeddingVector::normalized(tag, values)
    }

    pub fn embed_image(&self, path: &Path, tag: ModelTag) -> Result<EmbeddingVector> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        match read_stub_prompt(&bytes) {
            Ok(prompt) => self.embed_text(&prompt, tag),
            Err(_) => Self::embed_opaque(&bytes, tag),
        }
    }

    fn embed_opaque(bytes: &[u8], tag: ModelTag) -> Result<EmbeddingVector> {
        let mut h = Sha256::new();
        h.update(tag.family().as_bytes());
        h.update([0]);
        h.update(bytes);
        let mut seed = [0u8; 32];
        seed.copy_from_slice(&h.finalize());
        let mut rng = ChaCha8Rng::from_seed(seed);
        let values = (0..STUB_EMBED_DIM).map(|_| rng.random::<f64>()).collect();
        EmbeddingVector::normalized(tag, values)
    }
}

impl EmbedBackend for StubEmbedBackend {
    fn embed(&self, input: EmbedInput<'_>, tag: ModelTag) -> Result<EmbeddingVector> {
        match input {
            EmbedInput::Text(text) => self.embed_text(text, tag),
            EmbedInput::Image(path) => self.embed_image(path, tag),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fsutil::sha256_hex;

    fn dot(a: &EmbeddingVector, b: &EmbeddingVector) -> f64 {
        a.values.iter().zip(&b.values).map(|(x, y)| x * y).sum()
    }

    #[test]
    fn same_request_same_bytes() {
        let req = GenRequest::new("a coral backpack on a rock", 11);
        let a = StubImageBackend.generate(&req).unwrap();
        let b = StubImageBackend.generate(&req).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn seeds_change_content_hash() {
        let a = StubImageBackend.generate(&GenRequest::new("a backpack", 1)).unwrap();
        let b = StubImageBackend.generate(&GenRequest::new("a backpack", 2)).unwrap();
        assert_ne!(sha256_hex(&a), sha256_hex(&b));
    }

    #[test]
    fn metadata_carries_prompt() {
        let prompt = "a children's storybook illustration of a trapezoidal coral embossed backpack";
        let bytes = StubImageBackend.generate(&GenRequest::new(prompt, 5)).unwrap();
        assert_eq!(read_stub_prompt(&bytes).unwrap(), prompt);
    }

    #[test]
    fn image_and_text_agree_under_clip() {
        let dir = tempfile::tempdir().unwrap();
        let prompt = "a olis backpack on a rock";
        let path = dir.path().join("x.png");
        std::fs::write(&path, StubImageBackend.generate(&GenRequest::new(prompt, 3)).unwrap()).unwrap();
        let img = StubEmbedBackend.embed(EmbedInput::Image(&path), ModelTag::ClipImage).unwrap();
        let txt = StubEmbedBackend.embed(EmbedInput::Text(prompt), ModelTag::ClipText).unwrap();
        assert!((dot(&img, &txt) - 1.0).abs() < 1e-12);
        let dino = StubEmbedBackend.embed(EmbedInput::Image(&path), ModelTag::Dino).unwrap();
        assert_ne!(dino.values, img.values);
        assert!((dino.norm() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn identical_text_identical_vectors() {
        let a = StubEmbedBackend.embed_text("A dog, sitting.", ModelTag::ClipText).unwrap();
        let b = StubEmbedBackend.embed_text("a dog sitting", ModelTag::ClipText).unwrap();
        assert_eq!(a, b);
        assert!(StubEmbedBackend.embed_text(" ,. ", ModelTag::ClipText).is_err());
    }

    #[test]
    fn image_without_metadata_is_keyed_by_content() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("plain.png");
        let mut bytes = Vec::new();
        {
            let mut enc = png::Encoder::new(&mut bytes, 1, 1);
            enc.set_color(png::ColorType::Grayscale);
            let mut w = enc.write_header().unwrap();
            w.write_image_data(&[0]).unwrap();
        }
        std::fs::write(&path, bytes).unwrap();
        let a = StubEmbedBackend.embed(EmbedInput::Image(&path), ModelTag::Dino).unwrap();
        let b = StubEmbedBackend.embed(EmbedInput::Image(&path), ModelTag::Dino).unwrap();
        assert_eq!(a, b);
        assert!((a.norm() - 1.0).abs() < 1e-9);
        assert!(a.values.iter().all(|v| *v >= 0.0));
        std::fs::write(dir.path().join("junk.png"), b"not a png").unwrap();
        assert!(StubEmbedBackend.embed(EmbedInput::Image(&dir.path().join("junk.png")), ModelTag::Dino).is_ok());
    }
}
