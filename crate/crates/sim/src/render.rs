use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::types::{ObjectKind, ObjectSpec, Scene, CANVAS};

pub const BACKGROUND: [u8; 3] = [30, 30, 30];
const INTERIOR: [u8; 3] = [12, 12, 12];
const NO_OBJECT: u32 = u32::MAX;

/// An RGB8 image in row-major HWC order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Frame {
    pub height: u32,
    pub width: u32,
    pub data: Vec<u8>,
}

impl Frame {
    pub fn filled(height: u32, width: u32, rgb: [u8; 3]) -> Self {
        let data = rgb
            .iter()
            .copied()
            .cycle()
            .take((height * width * 3) as usize)
            .collect();
        Self {
            height,
            width,
            data,
        }
    }

    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        let i = ((y * self.width + x) * 3) as usize;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    /// Planar CHW values in [0,1].
    pub fn to_chw(&self) -> Vec<f32> {
        let hw = (self.height * self.width) as usize;
        let mut out = vec![0.0; 3 * hw];
        for (p, px) in self.data.chunks_exact(3).enumerate() {
            for c in 0..3 {
                out[c * hw + p] = px[c] as f32 / 255.0;
            }
        }
        out
    }

    /// Quantizes planar CHW values in [0,1] to 8 bits.
    pub fn from_chw(height: u32, width: u32, chw: &[f32]) -> Self {
        let hw = (height * width) as usize;
        assert_eq!(chw.len(), 3 * hw, "CHW buffer length");
        let mut data = vec![0u8; 3 * hw];
        for p in 0..hw {
            for c in 0..3 {
                data[p * 3 + c] = (chw[c * hw + p].clamp(0.0, 1.0) * 255.0).round() as u8;
            }
        }
        Self {
            height,
            width,
            data,
        }
    }

    pub fn to_png_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        image::write_buffer_with_format(
            &mut std::io::Cursor::new(&mut out),
            &self.data,
            self.width,
            self.height,
            image::ExtendedColorType::Rgb8,
            image::ImageFormat::Png,
        )
        .map_err(|source| SimError::Image {
            path: "<memory>".into(),
            source,
        })?;
        Ok(out)
    }

    pub fn from_png_bytes(bytes: &[u8]) -> Result<Self> {
        let img = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)
            .map_err(|source| SimError::Image {
                path: "<memory>".into(),
                source,
            })?
            .to_rgb8();
        Ok(Self {
            height: img.height(),
            width: img.width(),
            data: img.into_raw(),
        })
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        let bytes = self.to_png_bytes()?;
        std::fs::write(path, bytes).map_err(|source| SimError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load_png(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|source| SimError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_png_bytes(&bytes).map_err(|e| match e {
            SimError::Image { source, .. } => SimError::Image {
                path: path.to_path_buf(),
                source,
            },
            other => other,
        })
    }
}

/// Inclusive pixel corners.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PixelBox {
    pub x_min: u32,
    pub y_min: u32,
    pub x_max: u32,
    pub y_max: u32,
}

impl PixelBox {
    pub fn area(&self) -> u32 {
        (self.x_max - self.x_min + 1) * (self.y_max - self.y_min + 1)
    }

    pub fn intersects(&self, o: &PixelBox) -> bool {
        self.x_min <= o.x_max
            && o.x_min <= self.x_max
            && self.y_min <= o.y_max
            && o.y_min <= self.y_max
    }
}

#[derive(Clone, Debug)]
pub struct Rendered {
    pub frame: Frame,
    /// Topmost object id per pixel.
    pub ids: Vec<u32>,
    pub boxes: BTreeMap<u32, PixelBox>,
}

impl Rendered {
    pub fn id_at(&self, x: u32, y: u32) -> Option<u32> {
        let id = self.ids[(y * self.frame.width + x) as usize];
        (id != NO_OBJECT).then_some(id)
    }
}

fn shade(rgb: [u8; 3], f: f64) -> [u8; 3] {
    rgb.map(|c| (c as f64 * f).round() as u8)
}

/// Colour of `o` at local offset `(u, v)` from its centre, if covered.
fn paint(o: &ObjectSpec, u: f64, v: f64) -> Option<[u8; 3]> {
    let (w, h) = o.size;
    let (hw, hh) = (w / 2.0, h / 2.0);
    let theta = -o.rotation.to_radians();
    let (s, c) = theta.sin_cos();
    let (u, v) = (u * c - v * s, u * s + v * c);
    if u.abs() > hw || v.abs() > hh {
        return None;
    }
    let rgb = o.color.rgb();
    let top = v + hh;
    let hit = match o.kind {
        ObjectKind::Square => true,
        ObjectKind::Circle => (u / hw).powi(2) + (v / hh).powi(2) <= 1.0,
        ObjectKind::Triangle => u.abs() <= hw * top / h,
        ObjectKind::Diamond => u.abs() / hw + v.abs() / hh <= 1.0,
        ObjectKind::Bottle => top >= 3.0 || u.abs() <= 1.2,
        ObjectKind::Kettle => {
            (top >= 2.0 && u.abs() <= hw - 2.0)
                || (top < 2.0 && u.abs() <= 1.5)
                || (u >= hw - 2.0 && (-1.5..=0.5).contains(&v))
        }
        ObjectKind::Pot => top < 1.5 || u.abs() <= hw - 1.5,
        ObjectKind::Dispenser => {
            top >= 3.0 || (top < 1.5 && (-1.0..=3.0).contains(&u)) || u.abs() <= 1.0
        }
        ObjectKind::Oven | ObjectKind::Fridge | ObjectKind::Dishwasher | ObjectKind::Safe => {
            let inner = u.abs() <= hw - 2.0 && v.abs() <= hh - 2.0;
            if !inner {
                return Some(shade(rgb, 0.55));
            }
            let door_edge = -hw + 2.0 + (1.0 - o.open_fraction) * (w - 4.0);
            return Some(if u <= door_edge && o.open_fraction < 1.0 {
                rgb
            } else {
                INTERIOR
            });
        }
    };
    hit.then_some(rgb)
}

/// Draw order: ascending z, with each container's contents right after it
/// when its door is at least half open. Contents of a mostly closed door are
/// skipped.
pub fn draw_order(scene: &Scene) -> Vec<&ObjectSpec> {
    let mut top: Vec<&ObjectSpec> = scene
        .objects
        .iter()
        .filter(|o| o.contained_in.is_none())
        .collect();
    top.sort_by_key(|o| o.z);
    let mut out = Vec::with_capacity(scene.objects.len());
    for o in top {
        out.push(o);
        if o.openable && o.open_fraction >= 0.5 {
            let mut inner: Vec<_> = scene.contents_of(o.id).collect();
            inner.sort_by_key(|i| i.z);
            out.extend(inner);
        }
    }
    out
}

/// Rasterizes `scene` at `resolution`×`resolution` by sampling pixel centres.
pub fn render(scene: &Scene, resolution: u32) -> Rendered {
    let r = resolution;
    let scale = CANVAS / r as f64;
    let mut frame = Frame::filled(r, r, BACKGROUND);
    let mut ids = vec![NO_OBJECT; (r * r) as usize];
    for o in draw_order(scene) {
        let (x0, y0, x1, y1) = o.extent();
        // Rotation can swing corners outside the axis-aligned extent.
        let pad = if o.rotation.rem_euclid(180.0) == 0.0 {
            0.0
        } else {
            (o.size.0 - o.size.1).abs() / 2.0 + 1.0
        };
        let px0 = ((x0 - pad) / scale - 0.5).floor().max(0.0) as u32;
        let py0 = ((y0 - pad) / scale - 0.5).floor().max(0.0) as u32;
        let px1 = (((x1 + pad) / scale).ceil().max(0.0) as u32).min(r);
        let py1 = (((y1 + pad) / scale).ceil().max(0.0) as u32).min(r);
        for py in py0..py1 {
            let sy = (py as f64 + 0.5) * scale;
            for px in px0..px1 {
                let sx = (px as f64 + 0.5) * scale;
                if let Some(rgb) = paint(o, sx - o.position.0, sy - o.position.1) {
                    let p = (py * r + px) as usize;
                    frame.data[p * 3..p * 3 + 3].copy_from_slice(&rgb);
                    ids[p] = o.id;
                }
            }
        }
    }
    let mut boxes: BTreeMap<u32, PixelBox> = BTreeMap::new();
    for (p, &id) in ids.iter().enumerate() {
        if id == NO_OBJECT {
            continue;
        }
        let (x, y) = (p as u32 % r, p as u32 / r);
        boxes
            .entry(id)
            .and_modify(|b| {
                b.x_min = b.x_min.min(x);
                b.x_max = b.x_max.max(x);
                b.y_min = b.y_min.min(y);
                b.y_max = b.y_max.max(y);
            })
            .or_insert(PixelBox {
                x_min: x,
                y_min: y,
                x_max: x,
                y_max: y,
            });
    }
    Rendered { frame, ids, boxes }
}
