//! Non-destructive layered canvas.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raster::{composite_over, decode_png, encode_png, RasterError, RasterImage, Rgba};

#[derive(Debug, Error)]
pub enum LayerError {
    #[error("unknown layer {0}")]
    UnknownLayer(LayerId),
    #[error("layer image is {actual:?}, canvas is {expected:?}")]
    DimensionMismatch { expected: (u32, u32), actual: (u32, u32) },
    #[error("opacity {0} outside [0, 1]")]
    OpacityOutOfRange(f64),
    #[error("layer index {index} out of range for {len} layers")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("brush radius must be at least 1, got {0}")]
    InvalidRadius(u32),
    #[error("invalid layer manifest: {0}")]
    Manifest(String),
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LayerId(pub u64);

impl std::fmt::Display for LayerId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerOrigin {
    ArtistDrawn,
    ImportedFrom { candidate: u64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub id: LayerId,
    pub image: RasterImage,
    pub opacity: f64,
    pub visible: bool,
    pub origin: LayerOrigin,
}

impl Layer {
    fn contributes(&self) -> bool {
        self.visible && self.opacity > 0.0
    }
}

/// Partial property update; `None` fields are left untouched.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LayerProps {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub opacity: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub visible: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub index: Option<usize>,
}

/// Ordered layers over an opaque background; index 0 is the bottom.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerStack {
    width: u32,
    height: u32,
    background: Rgba,
    layers: Vec<Layer>,
    next_id: u64,
}

impl LayerStack {
    /// The background alpha is forced to 255.
    pub fn new(width: u32, height: u32, background: Rgba) -> Self {
        LayerStack {
            width,
            height,
            background: Rgba { a: 255, ..background },
            layers: Vec::new(),
            next_id: 1,
        }
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn background(&self) -> Rgba {
        self.background
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    pub fn layer(&self, id: LayerId) -> Option<&Layer> {
        self.layers.iter().find(|l| l.id == id)
    }

    fn position(&self, id: LayerId) -> Result<usize, LayerError> {
        self.layers
            .iter()
            .position(|l| l.id == id)
            .ok_or(LayerError::UnknownLayer(id))
    }

    /// Appends `image` on top at full opacity, visible.
    pub fn add_layer(&mut self, image: RasterImage, origin: LayerOrigin) -> Result<LayerId, LayerError> {
        if image.dims() != self.dims() {
            return Err(LayerError::DimensionMismatch {
                expected: self.dims(),
                actual: image.dims(),
            });
        }
        let id = LayerId(self.next_id);
        self.next_id += 1;
        self.layers.push(Layer {
            id,
            image,
            opacity: 1.0,
            visible: true,
            origin,
        });
        Ok(id)
    }

    pub fn add_blank_layer(&mut self) -> LayerId {
        let image = RasterImage::transparent(self.width, self.height);
        self.add_layer(image, LayerOrigin::ArtistDrawn)
            .expect("blank layer matches canvas")
    }

    /// Hard-edged disc: every pixel whose integer center lies within
    /// `radius` of `(cx, cy)` gets `color` composited over it. Parts off
    /// the canvas are clipped.
    pub fn brush_stroke(&mut self, id: LayerId, cx: i64, cy: i64, radius: u32, color: Rgba) -> Result<(), LayerError> {
        if radius < 1 {
            return Err(LayerError::InvalidRadius(radius));
        }
        let idx = self.position(id)?;
        let r = i64::from(radius);
        let (w, h) = (i64::from(self.width), i64::from(self.height));
        let image = &mut self.layers[idx].image;
        for y in (cy - r).max(0)..=(cy + r).min(h - 1) {
            for x in (cx - r).max(0)..=(cx + r).min(w - 1) {
                let (dx, dy) = (x - cx, y - cy);
                if dx * dx + dy * dy <= r * r {
                    image.blend_pixel(x as u32, y as u32, color);
                }
            }
        }
        Ok(())
    }

    /// Composites `color` over the inclusive rectangle spanned by the two
    /// corners, clipped to the canvas.
    pub fn rect_fill(&mut self, id: LayerId, x0: i64, y0: i64, x1: i64, y1: i64, color: Rgba) -> Result<(), LayerError> {
        let idx = self.position(id)?;
        let (w, h) = (i64::from(self.width), i64::from(self.height));
        let (xa, xb) = (x0.min(x1).max(0), x0.max(x1).min(w - 1));
        let (ya, yb) = (y0.min(y1).max(0), y0.max(y1).min(h - 1));
        let image = &mut self.layers[idx].image;
        for y in ya..=yb {
            for x in xa..=xb {
                image.blend_pixel(x as u32, y as u32, color);
            }
        }
        Ok(())
    }

    /// Applies `props` atomically: all values are validated before any
    /// change. A new index is a stable move of the layer to that slot.
    pub fn set_layer_props(&mut self, id: LayerId, props: LayerProps) -> Result<(), LayerError> {
        let idx = self.position(id)?;
        if let Some(o) = props.opacity {
            if !(0.0..=1.0).contains(&o) {
                return Err(LayerError::OpacityOutOfRange(o));
            }
        }
        if let Some(index) = props.index {
            if index >= self.layers.len() {
                return Err(LayerError::IndexOutOfRange {
                    index,
                    len: self.layers.len(),
                });
            }
        }
        let layer = &mut self.layers[idx];
        if let Some(o) = props.opacity {
            layer.opacity = o;
        }
        if let Some(v) = props.visible {
            layer.visible = v;
        }
        if let Some(index) = props.index {
            let layer = self.layers.remove(idx);
            self.layers.insert(index, layer);
        }
        Ok(())
    }

    /// Composites visible layers bottom-to-top over the background. The
    /// result is fully opaque.
    pub fn flatten(&self) -> RasterImage {
        let mut out = RasterImage::filled(self.width, self.height, self.background);
        for layer in self.layers.iter().filter(|l| l.contributes()) {
            for (dst, &src) in out.pixels_mut().iter_mut().zip(layer.image.pixels()) {
                if src.a != 0 {
                    *dst = composite_over(src, layer.opacity, *dst);
                }
            }
        }
        out
    }

    /// Layers that currently contribute to `flatten`, bottom first.
    pub fn contributing_layers(&self) -> impl Iterator<Item = LayerId> + '_ {
        self.layers.iter().filter(|l| l.contributes()).map(|l| l.id)
    }

    /// Writes `manifest.json` plus one `layer-<id>.png` per layer.
    pub fn save_dir(&self, dir: &Path) -> Result<(), LayerError> {
        fs::create_dir_all(dir)?;
        let mut entries = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let file = format!("layer-{}.png", layer.id);
            fs::write(dir.join(&file), encode_png(&layer.image)?)?;
            entries.push(ManifestLayer {
                id: layer.id,
                file,
                opacity: layer.opacity,
                visible: layer.visible,
                origin: layer.origin,
            });
        }
        let manifest = Manifest {
            width: self.width,
            height: self.height,
            background: self.background,
            next_id: self.next_id,
            layers: entries,
        };
        let json = serde_json::to_vec_pretty(&manifest).map_err(|e| LayerError::Manifest(e.to_string()))?;
        fs::write(dir.join("manifest.json"), json)?;
        Ok(())
    }

    pub fn load_dir(dir: &Path) -> Result<Self, LayerError> {
        let raw = fs::read(dir.join("manifest.json"))?;
        let manifest: Manifest = serde_json::from_slice(&raw).map_err(|e| LayerError::Manifest(e.to_string()))?;
        let mut stack = LayerStack::new(manifest.width, manifest.height, manifest.background);
        for entry in manifest.layers {
            if !(0.0..=1.0).contains(&entry.opacity) {
                return Err(LayerError::OpacityOutOfRange(entry.opacity));
            }
            if stack.layer(entry.id).is_some() || entry.id.0 >= manifest.next_id {
                return Err(LayerError::Manifest(format!("bad layer id {}", entry.id)));
            }
            let image = decode_png(&fs::read(dir.join(&entry.file))?)?;
            if image.dims() != stack.dims() {
                return Err(LayerError::DimensionMismatch {
                    expected: stack.dims(),
                    actual: image.dims(),
                });
            }
            stack.layers.push(Layer {
                id: entry.id,
                image,
                opacity: entry.opacity,
                visible: entry.visible,
                origin: entry.origin,
            });
        }
        stack.next_id = manifest.next_id;
        Ok(stack)
    }
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    width: u32,
    height: u32,
    background: Rgba,
    next_id: u64,
    layers: Vec<ManifestLayer>,
}

#[derive(Serialize, Deserialize)]
struct ManifestLayer {
    id: LayerId,
    file: String,
    opacity: f64,
    visible: bool,
    origin: LayerOrigin,
}
