//! Layered synthetic scenes with exact flows and ground truth.

use std::path::{Path, PathBuf};

use flowseg::media_io::{save_flow, save_frame, save_mask, FlowDirection, FlowField, Frame, LabelMask};
use flowseg::pipeline::Sequence;

#[derive(Clone, Copy)]
pub struct Layer {
    pub x: i64,
    pub y: i64,
    pub width: i64,
    pub height: i64,
    pub velocity: (i64, i64),
    pub color: [f64; 3],
    /// Ground-truth label; occluders count as background.
    pub label: u16,
}

impl Layer {
    fn covers(&self, px: i64, py: i64, t: usize) -> bool {
        let x0 = self.x + self.velocity.0 * t as i64;
        let y0 = self.y + self.velocity.1 * t as i64;
        px >= x0 && px < x0 + self.width && py >= y0 && py < y0 + self.height
    }
}

/// Layers are listed back to front.
pub struct Scene {
    pub width: usize,
    pub height: usize,
    pub background: [f64; 3],
    pub layers: Vec<Layer>,
    pub num_labels: usize,
}

impl Scene {
    fn owner(&self, x: usize, y: usize, t: usize) -> Option<&Layer> {
        self.layers.iter().rev().find(|l| l.covers(x as i64, y as i64, t))
    }

    pub fn frame(&self, t: usize) -> Frame {
        let pixels = (0..self.width * self.height)
            .map(|i| self.owner(i % self.width, i / self.width, t).map_or(self.background, |l| l.color))
            .collect();
        Frame::new(self.width, self.height, pixels).unwrap()
    }

    pub fn truth(&self, t: usize) -> LabelMask {
        let labels = (0..self.width * self.height)
            .map(|i| self.owner(i % self.width, i / self.width, t).map_or(0, |l| l.label))
            .collect();
        LabelMask::new(self.width, self.height, self.num_labels, labels).unwrap()
    }

    fn flow(&self, t: usize, sign: f32, direction: FlowDirection) -> FlowField {
        let vectors = (0..self.width * self.height)
            .map(|i| {
                self.owner(i % self.width, i / self.width, t)
                    .map_or([0.0, 0.0], |l| [sign * l.velocity.0 as f32, sign * l.velocity.1 as f32])
            })
            .collect();
        FlowField::new(self.width, self.height, direction, vectors).unwrap()
    }

    /// Frame t to t+1.
    pub fn forward(&self, t: usize) -> FlowField {
        self.flow(t, 1.0, FlowDirection::Forward)
    }

    /// Frame t+1 to t.
    pub fn backward(&self, t: usize) -> FlowField {
        self.flow(t + 1, -1.0, FlowDirection::Backward)
    }

    pub fn sequence(&self, frames: usize) -> Sequence {
        Sequence::basic(
            (0..frames).map(|t| self.frame(t)).collect(),
            (0..frames - 1).map(|t| self.forward(t)).collect(),
            (0..frames - 1).map(|t| self.backward(t)).collect(),
            self.truth(0),
        )
        .unwrap()
    }

    pub fn truths(&self, frames: usize) -> Vec<LabelMask> {
        (0..frames).map(|t| self.truth(t)).collect()
    }
}

pub const BACKGROUND: [f64; 3] = [100.0, 100.0, 100.0];
pub const RED: [f64; 3] = [200.0, 30.0, 30.0];
pub const BLUE: [f64; 3] = [30.0, 30.0, 200.0];

/// 20x20 red square moving (6, 2) px per frame over a flat background.
pub fn translating_square() -> Scene {
    Scene {
        width: 96,
        height: 64,
        background: BACKGROUND,
        layers: vec![Layer { x: 8, y: 10, width: 20, height: 20, velocity: (6, 2), color: RED, label: 1 }],
        num_labels: 2,
    }
}

pub const TRANSLATING_FRAMES: usize = 10;

/// 12x12 red square moving right by 6 px per frame behind a static blue
/// bar; fully hidden in frames 6, 7 and 8, partially visible again in
/// frame 9.
pub fn occlusion() -> Scene {
    Scene {
        width: 96,
        height: 48,
        background: BACKGROUND,
        layers: vec![
            Layer { x: 4, y: 18, width: 12, height: 12, velocity: (6, 0), color: RED, label: 1 },
            Layer { x: 40, y: 0, width: 24, height: 48, velocity: (0, 0), color: BLUE, label: 0 },
        ],
        num_labels: 2,
    }
}

pub const OCCLUSION_FRAMES: usize = 13;
pub const OCCLUSION_HIDDEN: [usize; 3] = [6, 7, 8];
pub const OCCLUSION_REAPPEAR: usize = 9;

/// Writes frames, flows, the key-frame annotation and a sequence file into
/// `dir` and returns the sequence file path.
pub fn write_scene(scene: &Scene, frames: usize, dir: &Path, extra: &str) -> PathBuf {
    for t in 0..frames {
        save_frame(&scene.frame(t), dir.join(format!("frame_{t:03}.png"))).unwrap();
        save_mask(&scene.truth(t), dir.join(format!("gt_{t:03}.png"))).unwrap();
    }
    for t in 0..frames - 1 {
        save_flow(&scene.forward(t), dir.join(format!("fw_{t:03}.flo"))).unwrap();
        save_flow(&scene.backward(t), dir.join(format!("bw_{t:03}.flo"))).unwrap();
    }
    let path = dir.join("scene.seq");
    std::fs::write(
        &path,
        format!(
            "name = scene\nframe_glob = frame_*.png\nflow_fw_glob = fw_*.flo\n\
             flow_bw_glob = bw_*.flo\nannotation = gt_000.png\n{extra}"
        ),
    )
    .unwrap();
    path
}
