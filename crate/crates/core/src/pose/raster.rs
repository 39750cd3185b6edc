use image::{Rgb, RgbImage};

use super::{Joint, PoseFrame};

pub const DEFAULT_CONF_THRESHOLD: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Endpoint {
    Joint(usize),
    /// Midpoint of the two shoulders.
    ShoulderCenter,
}

use Endpoint::{Joint as J, ShoulderCenter};

/// The 13 limbs, in drawing order.
pub const LIMBS: [(Endpoint, Endpoint); 13] = [
    (J(0), J(1)),
    (J(1), J(2)),
    (J(1), J(5)),
    (J(2), J(3)),
    (J(3), J(4)),
    (J(5), J(6)),
    (J(6), J(7)),
    (ShoulderCenter, J(8)),
    (ShoulderCenter, J(11)),
    (J(8), J(9)),
    (J(9), J(10)),
    (J(11), J(12)),
    (J(12), J(13)),
];

pub const PALETTE: [[u8; 3]; 13] = [
    [255, 255, 255],
    [255, 0, 0],
    [0, 0, 255],
    [255, 128, 0],
    [255, 255, 0],
    [0, 128, 255],
    [0, 255, 255],
    [255, 0, 128],
    [128, 0, 255],
    [0, 255, 0],
    [128, 255, 0],
    [255, 0, 255],
    [0, 255, 128],
];

/// Stroke width: 3 px on a 256-pixel canvas, scaled with the shorter side.
pub fn line_thickness(width: usize, height: usize) -> f64 {
    3.0 * width.min(height) as f64 / 256.0
}

fn resolve(joints: &[Joint], e: Endpoint) -> Joint {
    match e {
        J(i) => joints[i],
        ShoulderCenter => {
            let (r, l) = (joints[2], joints[5]);
            Joint {
                x: 0.5 * (r.x + l.x),
                y: 0.5 * (r.y + l.y),
                confidence: r.confidence.min(l.confidence),
            }
        }
    }
}

/// Clips segment `p0-p1` to the rectangle; `None` if it lies outside.
fn clip(p0: (f64, f64), p1: (f64, f64), lo: (f64, f64), hi: (f64, f64)) -> Option<((f64, f64), (f64, f64))> {
    let (dx, dy) = (p1.0 - p0.0, p1.1 - p0.1);
    let mut t0: f64 = 0.0;
    let mut t1: f64 = 1.0;
    for (p, q) in [
        (-dx, p0.0 - lo.0),
        (dx, hi.0 - p0.0),
        (-dy, p0.1 - lo.1),
        (dy, hi.1 - p0.1),
    ] {
        if p == 0.0 {
            if q < 0.0 {
                return None;
            }
        } else {
            let r = q / p;
            if p < 0.0 {
                t0 = t0.max(r);
            } else {
                t1 = t1.min(r);
            }
        }
    }
    if t0 > t1 {
        return None;
    }
    Some(((p0.0 + t0 * dx, p0.1 + t0 * dy), (p0.0 + t1 * dx, p0.1 + t1 * dy)))
}

fn distance_to_segment(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (vx, vy) = (b.0 - a.0, b.1 - a.1);
    let len2 = vx * vx + vy * vy;
    let t = if len2 > 0.0 {
        (((p.0 - a.0) * vx + (p.1 - a.1) * vy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (p.0 - (a.0 + t * vx)).hypot(p.1 - (a.1 + t * vy))
}

/// Paints every pixel whose center lies within `radius` of the segment.
pub(crate) fn draw_segment(img: &mut RgbImage, a: (f64, f64), b: (f64, f64), radius: f64, color: [u8; 3]) {
    let (w, h) = (img.width() as f64, img.height() as f64);
    let margin = radius + 1.0;
    let Some((a, b)) = clip(a, b, (-margin, -margin), (w - 1.0 + margin, h - 1.0 + margin)) else {
        return;
    };
    let x0 = (a.0.min(b.0) - radius).floor().max(0.0) as u32;
    let x1 = (a.0.max(b.0) + radius).ceil().min(w - 1.0) as u32;
    let y0 = (a.1.min(b.1) - radius).floor().max(0.0) as u32;
    let y1 = (a.1.max(b.1) + radius).ceil().min(h - 1.0) as u32;
    for y in y0..=y1 {
        for x in x0..=x1 {
            if distance_to_segment((x as f64, y as f64), a, b) <= radius {
                img.put_pixel(x, y, Rgb(color));
            }
        }
    }
}

/// Renders every skeleton's limbs onto a black canvas. Limbs with an
/// endpoint below `conf_threshold` are skipped; coordinates outside the
/// canvas are clipped.
pub fn rasterize_pose(frame: &PoseFrame, width: usize, height: usize, conf_threshold: f64) -> RgbImage {
    assert!(width > 0 && height > 0, "canvas must be non-empty");
    let mut img = RgbImage::new(width as u32, height as u32);
    let radius = (line_thickness(width, height) / 2.0).max(0.5);
    for person in &frame.persons {
        for (limb, &(ea, eb)) in LIMBS.iter().enumerate() {
            let (a, b) = (resolve(&person.joints, ea), resolve(&person.joints, eb));
            if a.confidence < conf_threshold || b.confidence < conf_threshold {
                continue;
            }
            draw_segment(&mut img, (a.x, a.y), (b.x, b.y), radius, PALETTE[limb]);
        }
    }
    img
}

#[cfg(test)]
mod tests {
    use super::super::{Skeleton, JOINT_COUNT};
    use super::*;

    fn skeleton(conf: f64) -> Skeleton {
        let mut joints = [Joint {
            x: 0.0,
            y: 0.0,
            confidence: conf,
        }; JOINT_COUNT];
        for (i, j) in joints.iter_mut().enumerate() {
            j.x = 10.0 + (i % 4) as f64 * 5.0;
            j.y = 5.0 + i as f64 * 3.0;
        }
        Skeleton {
            bbox: [5.0, 5.0, 30.0, 50.0],
            joints,
        }
    }

    fn lit(img: &RgbImage) -> usize {
        img.pixels().filter(|p| p.0 != [0, 0, 0]).count()
    }

    #[test]
    fn empty_and_suppressed_frames_are_black() {
        let empty = PoseFrame {
            frame_index: 0,
            persons: vec![],
        };
        assert_eq!(lit(&rasterize_pose(&empty, 64, 64, 0.2)), 0);
        let dim = PoseFrame {
            frame_index: 0,
            persons: vec![skeleton(0.0)],
        };
        assert_eq!(lit(&rasterize_pose(&dim, 64, 64, 0.1)), 0);
        let bright = PoseFrame {
            frame_index: 0,
            persons: vec![skeleton(0.9)],
        };
        assert!(lit(&rasterize_pose(&bright, 64, 64, 0.1)) > 0);
    }

    #[test]
    fn wild_coordinates_are_clipped() {
        let mut s = skeleton(1.0);
        s.joints[0].x = -1e300;
        s.joints[1].y = 1e300;
        s.joints[4].x = f64::MAX;
        let f = PoseFrame {
            frame_index: 0,
            persons: vec![s],
        };
        let img = rasterize_pose(&f, 16, 9, 0.0);
        assert_eq!(img.dimensions(), (16, 9));
    }

    #[test]
    fn thickness_scales() {
        assert_eq!(line_thickness(256, 256), 3.0);
        assert_eq!(line_thickness(512, 1024), 6.0);
    }
}
