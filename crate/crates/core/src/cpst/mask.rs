//! Binary instance masks, COCO-style run-length coding and the central
//! mask shrink.

use serde::{Deserialize, Serialize};

use super::CpstError;

/// Image dimensions in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ImageSize {
    pub height: usize,
    pub width: usize,
}

impl ImageSize {
    pub fn new(height: usize, width: usize) -> Self {
        Self { height, width }
    }

    pub fn pixel_count(&self) -> usize {
        self.height * self.width
    }
}

/// Inclusive pixel bounds of the set pixels of a mask. `u` is the column,
/// `v` the row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct PixelBounds {
    pub u_min: usize,
    pub u_max: usize,
    pub v_min: usize,
    pub v_max: usize,
}

/// One foreground instance from the 2D segmenter.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceMask {
    id: u32,
    class: String,
    size: ImageSize,
    // Row-major, `v * width + u`.
    pixels: Vec<bool>,
    bounds: PixelBounds,
}

impl InstanceMask {
    /// Builds a mask from a row-major pixel grid.
    pub fn new(id: u32, class: impl Into<String>, size: ImageSize, pixels: Vec<bool>) -> Result<Self, CpstError> {
        if size.height == 0 || size.width == 0 {
            return Err(CpstError::EmptyImage(id));
        }
        if pixels.len() != size.pixel_count() {
            return Err(CpstError::MaskLength {
                id,
                expected: size.pixel_count(),
                got: pixels.len(),
            });
        }
        let mut bounds: Option<PixelBounds> = None;
        for (i, _) in pixels.iter().enumerate().filter(|(_, set)| **set) {
            let (u, v) = (i % size.width, i / size.width);
            bounds = Some(match bounds {
                None => PixelBounds {
                    u_min: u,
                    u_max: u,
                    v_min: v,
                    v_max: v,
                },
                Some(b) => PixelBounds {
                    u_min: b.u_min.min(u),
                    u_max: b.u_max.max(u),
                    v_min: b.v_min.min(v),
                    v_max: b.v_max.max(v),
                },
            });
        }
        let bounds = bounds.ok_or(CpstError::EmptyMask(id))?;
        Ok(Self {
            id,
            class: class.into(),
            size,
            pixels,
            bounds,
        })
    }

    /// Builds a mask whose set pixels are the inclusive rectangle
    /// `[u0, u1] × [v0, v1]`, clipped to the image.
    pub fn from_rect(
        id: u32,
        class: impl Into<String>,
        size: ImageSize,
        (u0, u1): (usize, usize),
        (v0, v1): (usize, usize),
    ) -> Result<Self, CpstError> {
        let mut pixels = vec![false; size.pixel_count()];
        for v in v0..=v1.min(size.height.saturating_sub(1)) {
            for u in u0..=u1.min(size.width.saturating_sub(1)) {
                pixels[v * size.width + u] = true;
            }
        }
        Self::new(id, class, size, pixels)
    }

    /// Decodes uncompressed COCO run-length counts: column-major pixel
    /// order, alternating runs starting with a run of zeros.
    pub fn from_rle(id: u32, class: impl Into<String>, size: ImageSize, counts: &[u64]) -> Result<Self, CpstError> {
        let total: u64 = counts.iter().sum();
        if total != size.pixel_count() as u64 {
            return Err(CpstError::RleLength {
                id,
                expected: size.pixel_count(),
                got: total,
            });
        }
        let mut pixels = vec![false; size.pixel_count()];
        let mut pos = 0usize;
        for (run, &count) in counts.iter().enumerate() {
            let set = run % 2 == 1;
            for k in pos..pos + count as usize {
                if set {
                    let (u, v) = (k / size.height, k % size.height);
                    pixels[v * size.width + u] = true;
                }
            }
            pos += count as usize;
        }
        Self::new(id, class, size, pixels)
    }

    /// Inverse of [`from_rle`](Self::from_rle).
    pub fn to_rle(&self) -> Vec<u64> {
        let mut counts = Vec::new();
        let mut current = false;
        let mut run = 0u64;
        for u in 0..self.size.width {
            for v in 0..self.size.height {
                let set = self.get(u, v);
                if set != current {
                    counts.push(run);
                    run = 0;
                    current = set;
                }
                run += 1;
            }
        }
        counts.push(run);
        counts
    }

    pub fn id(&self) -> u32 {
        self.id
    }

    pub fn class(&self) -> &str {
        &self.class
    }

    pub fn size(&self) -> ImageSize {
        self.size
    }

    pub fn bounds(&self) -> PixelBounds {
        self.bounds
    }

    pub fn get(&self, u: usize, v: usize) -> bool {
        u < self.size.width && v < self.size.height && self.pixels[v * self.size.width + u]
    }

    pub fn pixel_count(&self) -> usize {
        self.pixels.iter().filter(|p| **p).count()
    }

    /// Iterates the set pixels as `(u, v)`.
    pub fn set_pixels(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let w = self.size.width;
        self.pixels
            .iter()
            .enumerate()
            .filter(|(_, set)| **set)
            .map(move |(i, _)| (i % w, i / w))
    }
}

/// The continuous rectangle kept by the shrink, in pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RetainedRegion {
    pub u_lo: f64,
    pub u_hi: f64,
    pub v_lo: f64,
    pub v_hi: f64,
}

impl RetainedRegion {
    pub fn center(&self) -> (f64, f64) {
        ((self.u_lo + self.u_hi) / 2.0, (self.v_lo + self.v_hi) / 2.0)
    }

    pub fn area(&self) -> f64 {
        (self.u_hi - self.u_lo) * (self.v_hi - self.v_lo)
    }
}

// Absorbs rounding in `u_min + ½(1 ± γ)Δu` so that integer-valued bounds
// keep their boundary pixel.
const PIXEL_EPS: f64 = 1e-9;

/// A mask restricted to its central retained rectangle.
#[derive(Debug, Clone, PartialEq)]
pub struct ShrunkMask {
    instance_id: u32,
    region: RetainedRegion,
    // Inclusive integer pixel window of the region, `None` when it holds
    // no pixel.
    window: Option<PixelBounds>,
    // Row-major crop of the source mask over `window`.
    crop: Vec<bool>,
    count: usize,
}

impl ShrunkMask {
    pub fn instance_id(&self) -> u32 {
        self.instance_id
    }

    pub fn region(&self) -> RetainedRegion {
        self.region
    }

    /// True when no source pixel survived the shrink.
    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn pixel_count(&self) -> usize {
        self.count
    }

    pub fn contains(&self, u: usize, v: usize) -> bool {
        match self.window {
            Some(w) if (w.u_min..=w.u_max).contains(&u) && (w.v_min..=w.v_max).contains(&v) => {
                let cols = w.u_max - w.u_min + 1;
                self.crop[(v - w.v_min) * cols + (u - w.u_min)]
            }
            _ => false,
        }
    }

    pub fn set_pixels(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let w = self.window;
        self.crop.iter().enumerate().filter(|(_, s)| **s).map(move |(i, _)| {
            let w = w.expect("non-empty crop implies a window");
            let cols = w.u_max - w.u_min + 1;
            (w.u_min + i % cols, w.v_min + i / cols)
        })
    }
}

/// Keeps the central `γ` fraction of the mask's pixel bounds on each axis:
/// `u ∈ [u_min + ½(1−γ)Δu, u_min + ½(1+γ)Δu]`, likewise for `v`, and
/// intersects that rectangle with the mask itself.
pub fn shrink_mask(mask: &InstanceMask, gamma: f64) -> Result<ShrunkMask, CpstError> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(CpstError::InvalidShrinkFactor(gamma));
    }
    let b = mask.bounds();
    let du = (b.u_max - b.u_min) as f64;
    let dv = (b.v_max - b.v_min) as f64;
    let region = RetainedRegion {
        u_lo: b.u_min as f64 + 0.5 * (1.0 - gamma) * du,
        u_hi: b.u_min as f64 + 0.5 * (1.0 + gamma) * du,
        v_lo: b.v_min as f64 + 0.5 * (1.0 - gamma) * dv,
        v_hi: b.v_min as f64 + 0.5 * (1.0 + gamma) * dv,
    };
    let u0 = (region.u_lo - PIXEL_EPS).ceil().max(b.u_min as f64) as usize;
    let u1 = (region.u_hi + PIXEL_EPS).floor().min(b.u_max as f64) as usize;
    let v0 = (region.v_lo - PIXEL_EPS).ceil().max(b.v_min as f64) as usize;
    let v1 = (region.v_hi + PIXEL_EPS).floor().min(b.v_max as f64) as usize;

    if u0 > u1 || v0 > v1 {
        return Ok(ShrunkMask {
            instance_id: mask.id(),
            region,
            window: None,
            crop: Vec::new(),
            count: 0,
        });
    }
    let window = PixelBounds {
        u_min: u0,
        u_max: u1,
        v_min: v0,
        v_max: v1,
    };
    let mut crop = Vec::with_capacity((u1 - u0 + 1) * (v1 - v0 + 1));
    for v in v0..=v1 {
        for u in u0..=u1 {
            crop.push(mask.get(u, v));
        }
    }
    let count = crop.iter().filter(|p| **p).count();
    Ok(ShrunkMask {
        instance_id: mask.id(),
        region,
        window: Some(window),
        crop,
        count,
    })
}
