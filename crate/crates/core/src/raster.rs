//! Agent-centric, heading-up BEV rasterization.
//!
//! Pixel `(row, col)` samples the agent-frame point
//! `x = (anchor_row − row)·res`, `y = (anchor_col − col)·res`, so the agent
//! faces the top row and its left is the image left. Polygons are filled by
//! integer scanlines at pixel centers (no anti-aliasing): a pixel is inside
//! when its center satisfies `x_enter <= col < x_exit` on its row.

use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{oriented_box, to_agent_frame, Point2, Polygon, Pose};
use crate::scene::{Category, Scene};

pub type Rgb = [f64; 3];

#[derive(Debug, Clone, PartialEq)]
pub struct Palette {
    pub background: Rgb,
    pub drivable_area: Rgb,
    pub walkway: Rgb,
    pub crosswalk: Rgb,
    pub target_vehicle: Rgb,
    pub other_vehicle: Rgb,
    pub pedestrian: Rgb,
    /// Per-step fade of history boxes toward the background, in (0, 1].
    pub fade: f64,
}

impl Default for Palette {
    fn default() -> Self {
        Self {
            background: [0.0, 0.0, 0.0],
            drivable_area: [0.35, 0.35, 0.35],
            walkway: [0.15, 0.45, 0.15],
            crosswalk: [0.85, 0.85, 0.85],
            target_vehicle: [1.0, 0.8, 0.0],
            other_vehicle: [0.0, 0.4, 1.0],
            pedestrian: [1.0, 0.2, 0.6],
            fade: 0.6,
        }
    }
}

impl Palette {
    pub fn category(&self, c: Category) -> Rgb {
        match c {
            Category::TargetVehicle => self.target_vehicle,
            Category::OtherVehicle => self.other_vehicle,
            Category::Pedestrian => self.pedestrian,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let entries = [
            self.background,
            self.drivable_area,
            self.walkway,
            self.crosswalk,
            self.other_vehicle,
            self.pedestrian,
        ];
        let in_unit = |c: &Rgb| c.iter().all(|v| (0.0..=1.0).contains(v));
        if !entries.iter().chain([&self.target_vehicle]).all(in_unit) {
            return Err(Error::InvalidArgument(
                "palette colors must lie in [0,1]".into(),
            ));
        }
        if entries.contains(&self.target_vehicle) {
            return Err(Error::InvalidArgument(
                "target color must be distinct".into(),
            ));
        }
        if !(self.fade > 0.0 && self.fade <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "fade must be in (0,1], got {}",
                self.fade
            )));
        }
        Ok(())
    }

    /// Category color aged `age` steps: background + fade^age·(color − background).
    pub fn faded(&self, color: Rgb, age: usize) -> Rgb {
        let f = self.fade.powi(age as i32);
        let bg = self.background;
        [0, 1, 2].map(|i| bg[i] + f * (color[i] - bg[i]))
    }
}

/// Canvas geometry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RasterConfig {
    pub size: usize,
    pub meters_per_pixel: f64,
    pub anchor: (usize, usize),
}

impl RasterConfig {
    /// Square canvas with the agent at three quarters down, horizontally centered.
    pub fn square(size: usize, meters_per_pixel: f64) -> Self {
        Self {
            size,
            meters_per_pixel,
            anchor: (size * 3 / 4, size / 2),
        }
    }
}

impl Default for RasterConfig {
    fn default() -> Self {
        Self::square(64, 0.5)
    }
}

pub const VEHICLE_LENGTH: f64 = 4.5;
pub const VEHICLE_WIDTH: f64 = 2.0;
pub const PEDESTRIAN_SIZE: f64 = 0.8;

fn footprint(category: Category) -> (f64, f64) {
    match category {
        Category::Pedestrian => (PEDESTRIAN_SIZE, PEDESTRIAN_SIZE),
        _ => (VEHICLE_LENGTH, VEHICLE_WIDTH),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    height: usize,
    width: usize,
    /// Row-major, channel-last.
    pixels: Vec<f64>,
    meters_per_pixel: f64,
    agent_pixel: (usize, usize),
}

impl Raster {
    pub fn filled(
        height: usize,
        width: usize,
        color: Rgb,
        meters_per_pixel: f64,
        agent_pixel: (usize, usize),
    ) -> Self {
        let pixels = std::iter::repeat_n(color, height * width)
            .flatten()
            .collect();
        Self {
            height,
            width,
            pixels,
            meters_per_pixel,
            agent_pixel,
        }
    }

    pub fn from_pixels(
        height: usize,
        width: usize,
        pixels: Vec<f64>,
        meters_per_pixel: f64,
        agent_pixel: (usize, usize),
    ) -> Result<Self> {
        if pixels.len() != height * width * 3 {
            return Err(Error::InvalidArgument(format!(
                "{} values for a {height}x{width}x3 raster",
                pixels.len()
            )));
        }
        if pixels.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidArgument(
                "raster values must lie in [0,1]".into(),
            ));
        }
        Ok(Self {
            height,
            width,
            pixels,
            meters_per_pixel,
            agent_pixel,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn meters_per_pixel(&self) -> f64 {
        self.meters_per_pixel
    }

    pub fn agent_pixel(&self) -> (usize, usize) {
        self.agent_pixel
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn get(&self, row: usize, col: usize) -> Rgb {
        let i = (row * self.width + col) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    fn set(&mut self, row: usize, col: usize, c: Rgb) {
        let i = (row * self.width + col) * 3;
        self.pixels[i..i + 3].copy_from_slice(&c);
    }

    /// Channel-first copy, `[3][H][W]`, for the convolutional encoder.
    pub fn to_chw(&self) -> Vec<f64> {
        let hw = self.height * self.width;
        let mut out = vec![0.0; 3 * hw];
        for (p, px) in self.pixels.chunks_exact(3).enumerate() {
            for c in 0..3 {
                out[c * hw + p] = px[c];
            }
        }
        out
    }

    /// Rotate the image by `quarter_turns` × 90° counter-clockwise. Square rasters only.
    pub fn rotated(&self, quarter_turns: usize) -> Raster {
        assert_eq!(self.height, self.width, "rotation needs a square raster");
        let n = self.height;
        let mut out = self.clone();
        for r in 0..n {
            for c in 0..n {
                let (sr, sc) = match quarter_turns % 4 {
                    0 => (r, c),
                    1 => (c, n - 1 - r),
                    2 => (n - 1 - r, n - 1 - c),
                    _ => (n - 1 - c, r),
                };
                out.set(r, c, self.get(sr, sc));
            }
        }
        out
    }

    /// Fill a polygon given in agent-frame meters.
    fn fill_polygon(&mut self, poly: &[Point2], color: Rgb) {
        if poly.len() < 3 {
            return;
        }
        let (ar, ac) = (self.agent_pixel.0 as f64, self.agent_pixel.1 as f64);
        let res = self.meters_per_pixel;
        // (col, row) in continuous pixel coordinates.
        let verts: Vec<(f64, f64)> = poly
            .iter()
            .map(|p| (ac - p.y / res, ar - p.x / res))
            .collect();
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for &(_, r) in &verts {
            lo = lo.min(r);
            hi = hi.max(r);
        }
        let r0 = lo.ceil().max(0.0) as usize;
        let r1 = (hi.floor() as i64).min(self.height as i64 - 1);
        if r1 < r0 as i64 {
            return;
        }
        let mut xs = Vec::with_capacity(8);
        for row in r0..=r1 as usize {
            let y = row as f64;
            xs.clear();
            for i in 0..verts.len() {
                let (x0, y0) = verts[i];
                let (x1, y1) = verts[(i + 1) % verts.len()];
                // Half-open in y so shared vertices count once.
                if (y0 <= y && y < y1) || (y1 <= y && y < y0) {
                    xs.push(x0 + (y - y0) * (x1 - x0) / (y1 - y0));
                }
            }
            xs.sort_by(f64::total_cmp);
            for span in xs.chunks_exact(2) {
                let c0 = span[0].ceil().max(0.0);
                let c1 = span[1].ceil().min(self.width as f64);
                let mut c = c0;
                while c < c1 {
                    self.set(row, c as usize, color);
                    c += 1.0;
                }
            }
        }
    }
}

pub fn rasterize(scene: &Scene, palette: &Palette, config: &RasterConfig) -> Result<Raster> {
    scene.validate()?;
    palette.validate()?;
    if !(config.meters_per_pixel > 0.0 && config.meters_per_pixel.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "resolution must be positive, got {}",
            config.meters_per_pixel
        )));
    }
    if config.size == 0 || config.anchor.0 >= config.size || config.anchor.1 >= config.size {
        return Err(Error::InvalidArgument(
            "anchor must lie inside the canvas".into(),
        ));
    }
    let target = scene.target();
    let frame: Pose = target.current().pose();
    let local = |poly: &Polygon| -> Result<Polygon> {
        poly.iter().map(|&p| to_agent_frame(p, &frame)).collect()
    };

    let mut raster = Raster::filled(
        config.size,
        config.size,
        palette.background,
        config.meters_per_pixel,
        config.anchor,
    );
    for (layer, color) in [
        (&scene.map.drivable_area, palette.drivable_area),
        (&scene.map.walkway, palette.walkway),
        (&scene.map.crosswalk, palette.crosswalk),
    ] {
        for poly in layer {
            raster.fill_polygon(&local(poly)?, color);
        }
    }

    let boxed = |state: &crate::scene::AgentState, category: Category| -> Result<Polygon> {
        let (l, w) = footprint(category);
        local(&oriented_box(&state.pose(), l, w))
    };

    // History, oldest age first; within an age, agents in scene order.
    let max_age = scene
        .agents
        .iter()
        .map(|a| a.history.len() - 1)
        .max()
        .unwrap_or(0);
    for age in (1..=max_age).rev() {
        for agent in &scene.agents {
            if let Some(idx) = agent.history.len().checked_sub(age + 1) {
                let color = palette.faded(palette.category(agent.category), age);
                raster.fill_polygon(&boxed(&agent.history[idx], agent.category)?, color);
            }
        }
    }
    for agent in scene.agents.iter().filter(|a| a.id != scene.target_id) {
        raster.fill_polygon(
            &boxed(agent.current(), agent.category)?,
            palette.category(agent.category),
        );
    }
    raster.fill_polygon(
        &boxed(target.current(), target.category)?,
        palette.target_vehicle,
    );
    Ok(raster)
}

/// Quantize to 8 bits with round-half-up.
pub fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8
}

pub fn raster_to_png(raster: &Raster, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes: Vec<u8> = raster.pixels.iter().map(|&v| quantize(v)).collect();
    image::save_buffer(
        path,
        &bytes,
        raster.width as u32,
        raster.height as u32,
        image::ColorType::Rgb8,
    )
    .map_err(|source| Error::Image {
        path: path.into(),
        source,
    })
}
