//! Deterministic procedural generation engine.
//!
//! Stands in for a diffusion backend behind the same request contract.
//! A 48-component latent (4x4 cells x RGB) is sampled from the prompt and
//! seed, optionally chained from a prior latent, optionally blended toward
//! the encoding of a canvas snapshot by the influence weight, and decoded to
//! pixels by a sum of sinusoids.

use std::f64::consts::TAU;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hash::{fnv1a64, Digest64, Fnv1a};
use crate::raster::{RasterImage, Rgba};

pub const LATENT_DIM: usize = 48;
/// Snapshot encoding grid is `GRID x GRID` cells.
pub const GRID: u32 = 4;
pub const DEFAULT_PERSISTENCE: f64 = 0.7;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("image is {width}x{height}, must be at least {min}x{min}")]
    TooSmall { width: u32, height: u32, min: u32 },
    #[error("image dimensions must be non-zero, got {width}x{height}")]
    ZeroSize { width: u32, height: u32 },
    #[error("influence weight {0} outside [0, 1]")]
    WeightOutOfRange(f64),
    #[error("persistence {0} outside [0, 1]")]
    PersistenceOutOfRange(f64),
    #[error("snapshot is {actual:?}, canvas is {expected:?}")]
    SnapshotDims { expected: (u32, u32), actual: (u32, u32) },
    #[error("latent must have {LATENT_DIM} components, got {0}")]
    LatentLength(usize),
    #[error("backend failure: {0}")]
    Backend(String),
}

/// 48 components, each within `[-1, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct LatentVector([f64; LATENT_DIM]);

impl LatentVector {
    pub const ZERO: LatentVector = LatentVector([0.0; LATENT_DIM]);

    /// Clamps every component into `[-1, 1]`; NaN maps to 0.
    pub fn new(mut components: [f64; LATENT_DIM]) -> Self {
        for c in &mut components {
            *c = if c.is_nan() { 0.0 } else { c.clamp(-1.0, 1.0) };
        }
        LatentVector(components)
    }

    pub fn splat(value: f64) -> Self {
        Self::new([value; LATENT_DIM])
    }

    pub fn components(&self) -> &[f64; LATENT_DIM] {
        &self.0
    }

    pub fn distance(&self, other: &LatentVector) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    /// FNV-1a over the big-endian IEEE-754 bits of each component.
    pub fn digest(&self) -> Digest64 {
        let mut h = Fnv1a::new();
        for c in &self.0 {
            h.write(&c.to_bits().to_be_bytes());
        }
        Digest64(h.finish())
    }
}

impl TryFrom<Vec<f64>> for LatentVector {
    type Error = EngineError;

    fn try_from(v: Vec<f64>) -> Result<Self, Self::Error> {
        let arr: [f64; LATENT_DIM] = v
            .try_into()
            .map_err(|v: Vec<f64>| EngineError::LatentLength(v.len()))?;
        Ok(LatentVector::new(arr))
    }
}

impl From<LatentVector> for Vec<f64> {
    fn from(l: LatentVector) -> Self {
        l.0.to_vec()
    }
}

/// One splitmix64 step: returns the advanced state and the mixed output.
pub fn prng_next(state: u64) -> (u64, u64) {
    let state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = state;
    z ^= z >> 30;
    z = z.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z ^= z >> 27;
    z = z.wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    (state, z)
}

/// Maps a 64-bit output to a uniform in `[0, 1)` from its top 53 bits.
pub fn unit_interval(value: u64) -> f64 {
    (value >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

pub fn prompt_seed(prompt: &str, seed: u64) -> u64 {
    fnv1a64(prompt.as_bytes()) ^ seed
}

/// Text-only sample: 48 uniforms from the prompt-seeded stream, mapped to
/// `[-1, 1)`.
pub fn fresh_latent(prompt: &str, seed: u64) -> LatentVector {
    let mut state = prompt_seed(prompt, seed);
    let mut out = [0.0; LATENT_DIM];
    for c in &mut out {
        let (next, value) = prng_next(state);
        state = next;
        *c = 2.0 * unit_interval(value) - 1.0;
    }
    LatentVector(out)
}

/// Cell `[start, end)` ranges along one axis; the last cell absorbs the
/// remainder.
fn grid_bounds(len: u32) -> [(u32, u32); GRID as usize] {
    let step = len / GRID;
    let mut out = [(0, 0); GRID as usize];
    for (i, b) in out.iter_mut().enumerate() {
        let i = i as u32;
        let end = if i == GRID - 1 { len } else { (i + 1) * step };
        *b = (i * step, end);
    }
    out
}

/// Encodes a canvas snapshot into latent space: mean RGB of each cell in a
/// 4x4 grid (alpha ignored), mapped from `[0, 255]` onto `[-1, 1]`.
/// Components are ordered by cell (row-major) then channel.
pub fn encode_snapshot(img: &RasterImage) -> Result<LatentVector, EngineError> {
    let (width, height) = img.dims();
    if width < GRID || height < GRID {
        return Err(EngineError::TooSmall {
            width,
            height,
            min: GRID,
        });
    }
    let xs = grid_bounds(width);
    let ys = grid_bounds(height);
    let mut out = [0.0; LATENT_DIM];
    let mut slot = 0;
    for &(y0, y1) in &ys {
        for &(x0, x1) in &xs {
            let mut sums = [0u64; 3];
            for y in y0..y1 {
                let row = &img.pixels()[(y * width) as usize..((y + 1) * width) as usize];
                for p in &row[x0 as usize..x1 as usize] {
                    sums[0] += u64::from(p.r);
                    sums[1] += u64::from(p.g);
                    sums[2] += u64::from(p.b);
                }
            }
            let count = u64::from(x1 - x0) * u64::from(y1 - y0);
            for sum in sums {
                // mean / 127.5 - 1 == (2 sum - 255 count) / (255 count)
                let num = 2.0 * sum as f64 - 255.0 * count as f64;
                out[slot] = (num / (255.0 * count as f64)).clamp(-1.0, 1.0);
                slot += 1;
            }
        }
    }
    Ok(LatentVector(out))
}

fn check_unit(value: f64, err: fn(f64) -> EngineError) -> Result<(), EngineError> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(err(value))
    }
}

/// `w * artist + (1 - w) * ai`, component-wise. `w = 0` returns `ai`
/// exactly and `w = 1` returns `artist` exactly.
pub fn blend_latent(artist: &LatentVector, ai: &LatentVector, w: f64) -> Result<LatentVector, EngineError> {
    check_unit(w, EngineError::WeightOutOfRange)?;
    if w == 0.0 {
        return Ok(*ai);
    }
    if w == 1.0 {
        return Ok(*artist);
    }
    let mut out = [0.0; LATENT_DIM];
    for (o, (a, g)) in out.iter_mut().zip(artist.0.iter().zip(&ai.0)) {
        *o = w * a + (1.0 - w) * g;
    }
    Ok(LatentVector::new(out))
}

/// One round of a text-conditioned latent chain.
pub fn iterate_latent(
    prev: &LatentVector,
    prompt: &str,
    seed: u64,
    persistence: f64,
) -> Result<LatentVector, EngineError> {
    check_unit(persistence, EngineError::PersistenceOutOfRange)?;
    if persistence == 1.0 {
        return Ok(*prev);
    }
    let fresh = fresh_latent(prompt, seed);
    if persistence == 0.0 {
        return Ok(fresh);
    }
    let mut out = [0.0; LATENT_DIM];
    for (o, (p, f)) in out.iter_mut().zip(prev.0.iter().zip(&fresh.0)) {
        *o = persistence * p + (1.0 - persistence) * f;
    }
    Ok(LatentVector::new(out))
}

#[derive(Clone, Copy)]
struct Wave {
    a: f64,
    b: f64,
    freq: f64,
    phase: f64,
}

/// Renders a latent as an opaque image. Each channel sums four sinusoidal
/// plane waves whose direction, frequency in `[1, 4]` and phase come from
/// sixteen consecutive components.
pub fn decode_latent(latent: &LatentVector, width: u32, height: u32) -> Result<RasterImage, EngineError> {
    if width == 0 || height == 0 {
        return Err(EngineError::ZeroSize { width, height });
    }
    let mut waves = [[Wave {
        a: 0.0,
        b: 0.0,
        freq: 0.0,
        phase: 0.0,
    }; 4]; 3];
    for (c, channel) in waves.iter_mut().enumerate() {
        for (k, wave) in channel.iter_mut().enumerate() {
            let base = c * 16 + k * 4;
            let p = &latent.0[base..base + 4];
            *wave = Wave {
                a: p[0],
                b: p[1],
                freq: 1.0 + 1.5 * (p[2] + 1.0),
                phase: p[3],
            };
        }
    }
    let (wf, hf) = (f64::from(width), f64::from(height));
    let channel_byte = |channel: &[Wave; 4], u: f64, v: f64| -> u8 {
        let mut sum = 0.0;
        for w in channel {
            sum += (TAU * (w.freq * (w.a * u + w.b * v) + w.phase)).sin();
        }
        let val = (0.5 + sum / 8.0).clamp(0.0, 1.0);
        (val * 255.0 + 0.5).floor() as u8
    };
    Ok(RasterImage::from_fn(width, height, |x, y| {
        let u = f64::from(x) / wf;
        let v = f64::from(y) / hf;
        Rgba::opaque(
            channel_byte(&waves[0], u, v),
            channel_byte(&waves[1], u, v),
            channel_byte(&waves[2], u, v),
        )
    }))
}

/// Whether a generation came from an explicit request or the background loop.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CycleMode {
    TurnTaking,
    Parallel,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GenerationRequest {
    pub prompt: String,
    pub seed: u64,
    pub influence_weight: f64,
    pub snapshot: Option<Arc<RasterImage>>,
    pub prior_latent: Option<LatentVector>,
}

impl GenerationRequest {
    pub fn text(prompt: impl Into<String>, seed: u64) -> Self {
        GenerationRequest {
            prompt: prompt.into(),
            seed,
            influence_weight: 0.0,
            snapshot: None,
            prior_latent: None,
        }
    }
}

/// Output of a backend call.
#[derive(Clone, Debug, PartialEq)]
pub struct Generated {
    pub latent: LatentVector,
    pub image: RasterImage,
}

/// A cached generation with full provenance.
#[derive(Clone, Debug)]
pub struct GeneratedCandidate {
    pub id: u64,
    pub image: Arc<RasterImage>,
    pub latent: LatentVector,
    pub request: GenerationRequest,
    pub created_at: u64,
    pub cycle_mode: CycleMode,
}

/// Anything that turns a request into an image at the given canvas size.
/// The procedural engine is the in-tree implementation; an external model
/// can be plugged in behind the same contract.
pub trait GenerationBackend: Send + Sync {
    fn generate(&self, request: &GenerationRequest, width: u32, height: u32) -> Result<Generated, EngineError>;
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProceduralEngine {
    pub persistence: f64,
}

impl Default for ProceduralEngine {
    fn default() -> Self {
        ProceduralEngine {
            persistence: DEFAULT_PERSISTENCE,
        }
    }
}

impl ProceduralEngine {
    pub fn new(persistence: f64) -> Result<Self, EngineError> {
        check_unit(persistence, EngineError::PersistenceOutOfRange)?;
        Ok(ProceduralEngine { persistence })
    }

    /// The latent a request resolves to, before decoding.
    pub fn resolve_latent(&self, request: &GenerationRequest, width: u32, height: u32) -> Result<LatentVector, EngineError> {
        check_unit(request.influence_weight, EngineError::WeightOutOfRange)?;
        let base = match &request.prior_latent {
            Some(prior) => iterate_latent(prior, &request.prompt, request.seed, self.persistence)?,
            None => fresh_latent(&request.prompt, request.seed),
        };
        match &request.snapshot {
            Some(snapshot) => {
                if snapshot.dims() != (width, height) {
                    return Err(EngineError::SnapshotDims {
                        expected: (width, height),
                        actual: snapshot.dims(),
                    });
                }
                let artist = encode_snapshot(snapshot)?;
                blend_latent(&artist, &base, request.influence_weight)
            }
            None => Ok(base),
        }
    }
}

impl GenerationBackend for ProceduralEngine {
    fn generate(&self, request: &GenerationRequest, width: u32, height: u32) -> Result<Generated, EngineError> {
        let latent = self.resolve_latent(request, width, height)?;
        let image = decode_latent(&latent, width, height)?;
        Ok(Generated { latent, image })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent splitmix64 written from the reference C source.
    fn reference_splitmix(seed: u64, n: usize) -> Vec<u64> {
        let mut x = seed;
        (0..n)
            .map(|_| {
                x = x.wrapping_add(0x9e3779b97f4a7c15);
                let mut z = x;
                z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
                z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
                z ^ (z >> 31)
            })
            .collect()
    }

    #[test]
    fn splitmix_golden_values() {
        // Published first outputs of splitmix64 seeded with 0.
        assert_eq!(prng_next(0).1, 0xe220_a839_7b1d_cdaf);
        let (s1, _) = prng_next(0);
        assert_eq!(prng_next(s1).1, 0x6e78_9e6a_a1b9_65f4);
        assert_eq!(prng_next(1).1, 0x910a_2dec_8902_5cc1);
        assert_ne!(prng_next(0).1, prng_next(1).1);
        assert_eq!(prng_next(42), prng_next(42));

        let mut state = 1234567;
        for expected in reference_splitmix(1234567, 16) {
            let (next, value) = prng_next(state);
            assert_eq!(value, expected);
            state = next;
        }
    }

    #[test]
    fn prompt_seed_examples() {
        assert_eq!(prompt_seed("", 0), 0xcbf29ce484222325);
        assert_eq!(prompt_seed("", 77), 0xcbf29ce484222325 ^ 77);
        assert_eq!(prompt_seed("a", 0), 0xaf63dc4c8601ec8c);
    }

    #[test]
    fn fresh_latent_is_deterministic_and_in_range() {
        let a = fresh_latent("joy in motion", 1);
        assert_eq!(a, fresh_latent("joy in motion", 1));
        let b = fresh_latent("joy in motion", 2);
        assert_ne!(a, b);
        for c in a.components().iter().chain(b.components()) {
            assert!((-1.0..1.0).contains(c));
        }
        // first component from the reference stream
        let first = reference_splitmix(prompt_seed("joy in motion", 1), 1)[0];
        assert_eq!(a.components()[0], 2.0 * ((first >> 11) as f64 / 9007199254740992.0) - 1.0);
    }

    #[test]
    fn encode_uniform_images() {
        let gray = RasterImage::filled(8, 8, Rgba::opaque(128, 128, 128));
        let l = encode_snapshot(&gray).unwrap();
        for c in l.components() {
            assert!((c - (128.0 / 127.5 - 1.0)).abs() < 1e-15);
        }
        let black = RasterImage::filled(5, 7, Rgba::BLACK);
        assert!(encode_snapshot(&black).unwrap().components().iter().all(|&c| c == -1.0));
        assert!(matches!(
            encode_snapshot(&RasterImage::filled(3, 8, Rgba::BLACK)),
            Err(EngineError::TooSmall { .. })
        ));
    }

    #[test]
    fn encode_half_black_half_white() {
        let img = RasterImage::from_fn(8, 8, |x, _| if x < 4 { Rgba::BLACK } else { Rgba::WHITE });
        let l = encode_snapshot(&img).unwrap();
        // brute force: cell (row, col) covers x in [2col, 2col+2)
        for row in 0..4 {
            for col in 0..4 {
                let mut sum = 0.0;
                for y in 2 * row..2 * row + 2 {
                    for x in 2 * col..2 * col + 2 {
                        sum += f64::from(img.get(x, y).unwrap().r);
                    }
                }
                let expected = (sum / 4.0) / 127.5 - 1.0;
                for ch in 0..3 {
                    assert_eq!(l.components()[((row * 4 + col) * 3 + ch) as usize], expected);
                }
            }
        }
    }

    #[test]
    fn encode_assigns_remainder_to_last_cells() {
        // 6 wide: cells are x=[0,1),[1,2),[2,3),[3,6)
        let img = RasterImage::from_fn(6, 4, |x, _| if x == 5 { Rgba::WHITE } else { Rgba::BLACK });
        let l = encode_snapshot(&img).unwrap();
        let last_col = l.components()[3 * 3];
        assert!((last_col - ((255.0 / 3.0) / 127.5 - 1.0)).abs() < 1e-12);
        assert_eq!(l.components()[2 * 3], -1.0);
    }

    #[test]
    fn blend_endpoints_and_midpoint() {
        let artist = LatentVector::splat(-1.0);
        let ai = LatentVector::splat(1.0);
        assert_eq!(blend_latent(&artist, &ai, 0.0).unwrap(), ai);
        assert_eq!(blend_latent(&artist, &ai, 1.0).unwrap(), artist);
        assert_eq!(blend_latent(&artist, &ai, 0.5).unwrap(), LatentVector::ZERO);
        assert!(matches!(blend_latent(&artist, &ai, 1.5), Err(EngineError::WeightOutOfRange(_))));
        assert!(blend_latent(&artist, &ai, -0.01).is_err());
    }

    #[test]
    fn iterate_endpoints_and_interior() {
        let prev = fresh_latent("prev", 9);
        assert_eq!(iterate_latent(&prev, "p", 3, 1.0).unwrap(), prev);
        assert_eq!(iterate_latent(&prev, "p", 3, 0.0).unwrap(), fresh_latent("p", 3));
        let it = iterate_latent(&prev, "p", 3, 0.7).unwrap();
        let fresh = fresh_latent("p", 3);
        for i in [0, 47] {
            let expected = 0.7 * prev.components()[i] + (1.0 - 0.7) * fresh.components()[i];
            assert_eq!(it.components()[i], expected);
        }
        assert!(iterate_latent(&prev, "p", 3, 1.1).is_err());
    }

    #[test]
    fn zero_latent_decodes_to_mid_gray() {
        let img = decode_latent(&LatentVector::ZERO, 9, 5).unwrap();
        assert!(img.pixels().iter().all(|&p| p == Rgba::opaque(128, 128, 128)));
        assert!(decode_latent(&LatentVector::ZERO, 0, 5).is_err());
    }

    #[test]
    fn phase_only_shifts_its_channel() {
        let mut c = [0.0; LATENT_DIM];
        // green channel, wave 0, phase
        c[16 + 3] = 0.25;
        let img = decode_latent(&LatentVector::new(c), 6, 6).unwrap();
        // sin(2pi * 0.25) = 1 -> 0.5 + 1/8 = 0.625 -> round(159.375) = 159
        for p in img.pixels() {
            assert_eq!((p.r, p.g, p.b, p.a), (128, 159, 128, 255));
        }
    }

    #[test]
    fn engine_endpoints() {
        let engine = ProceduralEngine::default();
        let snapshot = Arc::new(RasterImage::from_fn(16, 16, |x, y| Rgba::opaque((x * 16) as u8, (y * 16) as u8, 7)));
        let bare = GenerationRequest::text("a dog", 5);
        let mut with_snapshot = bare.clone();
        with_snapshot.snapshot = Some(snapshot.clone());

        let g0 = engine.generate(&bare, 16, 16).unwrap();
        let g_w0 = engine.generate(&with_snapshot, 16, 16).unwrap();
        assert_eq!(g0, g_w0);

        with_snapshot.influence_weight = 1.0;
        let g_w1 = engine.generate(&with_snapshot, 16, 16).unwrap();
        assert_eq!(g_w1.latent, encode_snapshot(&snapshot).unwrap());

        with_snapshot.prompt = "something else".into();
        with_snapshot.seed = 99;
        assert_eq!(engine.generate(&with_snapshot, 16, 16).unwrap().latent, g_w1.latent);

        assert!(matches!(
            engine.generate(&with_snapshot, 32, 32),
            Err(EngineError::SnapshotDims { .. })
        ));
    }

    #[test]
    fn latent_json_round_trip_and_length_check() {
        let l = fresh_latent("x", 1);
        let json = serde_json::to_string(&l).unwrap();
        let back: LatentVector = serde_json::from_str(&json).unwrap();
        assert_eq!(back, l);
        assert!(serde_json::from_str::<LatentVector>("[0.0, 1.0]").is_err());
    }
}
