//! Deterministic orthographic wireframe renders of a scene from three fixed
//! viewpoints. Output is plain RGB rasterized with integer line drawing, so
//! identical inputs produce byte-identical images on every platform.

use crate::catalog::Catalog;
use crate::gateway::fnv1a64;
use crate::math::Vec3;
use crate::scenegen::{SceneConfig, SceneError};

pub const RENDER_SIZE: usize = 512;
/// Pixels per meter in the fixed orthographic projection.
const PIXELS_PER_METER: f64 = 150.0;
/// World point mapped to the image center.
const VIEW_CENTER: Vec3 = Vec3([0.3, 0.0, 0.4]);

const COLOR_TABLE: [u8; 3] = [130, 130, 130];
const COLOR_ROBOT: [u8; 3] = [60, 60, 170];
const PALETTE: [[u8; 3]; 8] = [
    [200, 60, 60],
    [60, 160, 60],
    [210, 140, 40],
    [120, 60, 180],
    [40, 160, 180],
    [180, 60, 140],
    [150, 120, 60],
    [90, 90, 90],
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Viewpoint {
    LeftOverhead,
    RightOverhead,
    TopDown,
}

impl Viewpoint {
    pub const ALL: [Viewpoint; 3] = [
        Viewpoint::LeftOverhead,
        Viewpoint::RightOverhead,
        Viewpoint::TopDown,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            Viewpoint::LeftOverhead => "left_overhead",
            Viewpoint::RightOverhead => "right_overhead",
            Viewpoint::TopDown => "top_down",
        }
    }

    /// Screen basis (right, up) for the orthographic projection.
    fn basis(&self) -> (Vec3, Vec3) {
        match self {
            // Looking straight down -Z: robot forward (+X) points up-screen.
            Viewpoint::TopDown => (Vec3::new(0.0, -1.0, 0.0), Vec3::X),
            // 45 degree elevation, +/-45 degree azimuth.
            Viewpoint::LeftOverhead => overhead_basis(std::f64::consts::FRAC_PI_4),
            Viewpoint::RightOverhead => overhead_basis(-std::f64::consts::FRAC_PI_4),
        }
    }
}

fn overhead_basis(azimuth: f64) -> (Vec3, Vec3) {
    let elevation = std::f64::consts::FRAC_PI_4;
    let dir = Vec3::new(
        -elevation.cos() * azimuth.cos(),
        -elevation.cos() * azimuth.sin(),
        -elevation.sin(),
    );
    let right = dir.cross(&Vec3::Z).normalized();
    let up = right.cross(&dir).normalized();
    (right, up)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ViewImage {
    pub viewpoint: Viewpoint,
    pub width: usize,
    pub height: usize,
    pub rgb: Vec<u8>,
}

impl ViewImage {
    fn blank(viewpoint: Viewpoint) -> ViewImage {
        ViewImage {
            viewpoint,
            width: RENDER_SIZE,
            height: RENDER_SIZE,
            rgb: vec![245; RENDER_SIZE * RENDER_SIZE * 3],
        }
    }

    pub fn digest(&self) -> String {
        format!("{:016x}", fnv1a64(&self.rgb))
    }

    fn put(&mut self, x: i64, y: i64, color: [u8; 3]) {
        if x < 0 || y < 0 || x >= self.width as i64 || y >= self.height as i64 {
            return;
        }
        let idx = (y as usize * self.width + x as usize) * 3;
        self.rgb[idx..idx + 3].copy_from_slice(&color);
    }

    fn line(&mut self, a: (i64, i64), b: (i64, i64), color: [u8; 3]) {
        let (mut x0, mut y0) = a;
        let (x1, y1) = b;
        let dx = (x1 - x0).abs();
        let dy = -(y1 - y0).abs();
        let sx = if x0 < x1 { 1 } else { -1 };
        let sy = if y0 < y1 { 1 } else { -1 };
        let mut err = dx + dy;
        loop {
            self.put(x0, y0, color);
            if x0 == x1 && y0 == y1 {
                break;
            }
            let e2 = 2 * err;
            if e2 >= dy {
                err += dy;
                x0 += sx;
            }
            if e2 <= dx {
                err += dx;
                y0 += sy;
            }
        }
    }
}

/// World point to pixel coordinates for a view basis.
pub fn project(point: &Vec3, viewpoint: Viewpoint) -> (i64, i64) {
    let (right, up) = viewpoint.basis();
    let rel = *point - VIEW_CENTER;
    let u = rel.dot(&right) * PIXELS_PER_METER;
    let v = rel.dot(&up) * PIXELS_PER_METER;
    (
        (RENDER_SIZE as f64 / 2.0 + u).round() as i64,
        (RENDER_SIZE as f64 / 2.0 - v).round() as i64,
    )
}

struct Segment {
    a: Vec3,
    b: Vec3,
    color: [u8; 3],
}

fn box_corners(center: Vec3, half: Vec3, q: &crate::math::Quat) -> [Vec3; 8] {
    let mut corners = [Vec3::ZERO; 8];
    for (i, corner) in corners.iter_mut().enumerate() {
        let sx = if i & 1 == 0 { -1.0 } else { 1.0 };
        let sy = if i & 2 == 0 { -1.0 } else { 1.0 };
        let sz = if i & 4 == 0 { -1.0 } else { 1.0 };
        let local = Vec3::new(sx * half.x(), sy * half.y(), sz * half.z());
        *corner = center + q.rotate(&local);
    }
    corners
}

fn box_segments(center: Vec3, half: Vec3, q: &crate::math::Quat, color: [u8; 3], out: &mut Vec<Segment>) {
    let corners = box_corners(center, half, q);
    for i in 0..8usize {
        for bit in [1usize, 2, 4] {
            let j = i | bit;
            if j != i {
                out.push(Segment {
                    a: corners[i],
                    b: corners[j],
                    color,
                });
            }
        }
    }
}

fn object_color(name: &str) -> [u8; 3] {
    PALETTE[(fnv1a64(name.as_bytes()) % PALETTE.len() as u64) as usize]
}

fn scene_segments(config: &SceneConfig, catalog: &Catalog) -> Result<Vec<Segment>, SceneError> {
    config.validate_with_catalog(catalog)?;
    let mut segments = Vec::new();

    // Table top and legs.
    let t = &config.table;
    let top = [
        Vec3::new(-t.length / 2.0, -t.width / 2.0, t.height),
        Vec3::new(t.length / 2.0, -t.width / 2.0, t.height),
        Vec3::new(t.length / 2.0, t.width / 2.0, t.height),
        Vec3::new(-t.length / 2.0, t.width / 2.0, t.height),
    ];
    for i in 0..4 {
        segments.push(Segment {
            a: top[i],
            b: top[(i + 1) % 4],
            color: COLOR_TABLE,
        });
        segments.push(Segment {
            a: top[i],
            b: Vec3::new(top[i].x(), top[i].y(), 0.0),
            color: COLOR_TABLE,
        });
    }

    // Robot base footprint and mast.
    let base = config.robot_base.p;
    let half = 0.1;
    let feet = [
        base + Vec3::new(-half, -half, 0.0),
        base + Vec3::new(half, -half, 0.0),
        base + Vec3::new(half, half, 0.0),
        base + Vec3::new(-half, half, 0.0),
    ];
    for i in 0..4 {
        segments.push(Segment {
            a: feet[i],
            b: feet[(i + 1) % 4],
            color: COLOR_ROBOT,
        });
    }
    segments.push(Segment {
        a: base,
        b: base + Vec3::new(0.0, 0.0, 0.8),
        color: COLOR_ROBOT,
    });

    // Objects, name-sorted for a stable draw order.
    let mut objects: Vec<_> = config.objects.iter().collect();
    objects.sort_by(|a, b| a.name.cmp(&b.name));
    for obj in objects {
        let record = catalog.get(&obj.asset_id).expect("resolved above");
        let half = record.nominal_dims * (obj.scale * 0.5);
        box_segments(
            obj.pose.p,
            half,
            &obj.pose.q,
            object_color(&obj.name),
            &mut segments,
        );
    }
    Ok(segments)
}

/// Render the three fixed viewpoints at 512x512.
pub fn render_views(config: &SceneConfig, catalog: &Catalog) -> Result<[ViewImage; 3], SceneError> {
    let segments = scene_segments(config, catalog)?;
    let mut images = Viewpoint::ALL.map(ViewImage::blank);
    for image in &mut images {
        let viewpoint = image.viewpoint;
        for seg in &segments {
            let a = project(&seg.a, viewpoint);
            let b = project(&seg.b, viewpoint);
            image.line(a, b, seg.color);
        }
    }
    Ok(images)
}

/// Binary PPM (P6) encoding.
pub fn write_ppm(image: &ViewImage) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", image.width, image.height).into_bytes();
    out.extend_from_slice(&image.rgb);
    out
}

/// SVG line rendering of the same projection.
pub fn write_svg(config: &SceneConfig, catalog: &Catalog, viewpoint: Viewpoint) -> Result<String, SceneError> {
    let segments = scene_segments(config, catalog)?;
    let mut out = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{0}\" height=\"{0}\" viewBox=\"0 0 {0} {0}\">\n",
        RENDER_SIZE
    );
    out.push_str(&format!(
        "<rect width=\"{0}\" height=\"{0}\" fill=\"rgb(245,245,245)\"/>\n",
        RENDER_SIZE
    ));
    for seg in &segments {
        let a = project(&seg.a, viewpoint);
        let b = project(&seg.b, viewpoint);
        out.push_str(&format!(
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"rgb({},{},{})\"/>\n",
            a.0, a.1, b.0, b.1, seg.color[0], seg.color[1], seg.color[2]
        ));
    }
    out.push_str("</svg>\n");
    Ok(out)
}
