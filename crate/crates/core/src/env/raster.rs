use ndarray::Array2;

const SUB: usize = 3;

/// Grayscale canvas over the world rectangle `[x0, x1] × [y0, y1]` (y up),
/// with 3×3 supersampled coverage.
#[derive(Clone, Debug)]
pub struct Canvas {
    width: usize,
    height: usize,
    bounds: [f64; 4],
    data: Vec<f32>,
}

impl Canvas {
    pub fn new(width: usize, height: usize, bounds: [f64; 4]) -> Self {
        Self {
            width,
            height,
            bounds,
            data: vec![0.0; width * height],
        }
    }

    fn px(&self) -> (f64, f64) {
        let [x0, x1, y0, y1] = self.bounds;
        ((x1 - x0) / self.width as f64, (y1 - y0) / self.height as f64)
    }

    /// Paints every pixel whose subsamples satisfy `inside`, within the
    /// world-space box `[bx0, bx1] × [by0, by1]`.
    fn paint(&mut self, bbox: [f64; 4], intensity: f32, inside: impl Fn(f64, f64) -> bool) {
        let [x0, _, _, y1] = self.bounds;
        let (pw, ph) = self.px();
        let [bx0, bx1, by0, by1] = bbox;
        let c0 = (((bx0 - x0) / pw).floor().max(0.0) as usize).min(self.width);
        let c1 = (((bx1 - x0) / pw).ceil().max(0.0) as usize).min(self.width);
        let r0 = (((y1 - by1) / ph).floor().max(0.0) as usize).min(self.height);
        let r1 = (((y1 - by0) / ph).ceil().max(0.0) as usize).min(self.height);
        for r in r0..r1 {
            for c in c0..c1 {
                let mut hits = 0;
                for sy in 0..SUB {
                    for sx in 0..SUB {
                        let x = x0 + (c as f64 + (sx as f64 + 0.5) / SUB as f64) * pw;
                        let y = y1 - (r as f64 + (sy as f64 + 0.5) / SUB as f64) * ph;
                        if inside(x, y) {
                            hits += 1;
                        }
                    }
                }
                if hits > 0 {
                    let v = intensity * hits as f32 / (SUB * SUB) as f32;
                    let p = &mut self.data[r * self.width + c];
                    *p = p.max(v);
                }
            }
        }
    }

    /// Axis-aligned rectangle centred at `(cx, cy)`.
    pub fn rect(&mut self, cx: f64, cy: f64, half_w: f64, half_h: f64, intensity: f32) {
        let bbox = [cx - half_w, cx + half_w, cy - half_h, cy + half_h];
        self.paint(bbox, intensity, |x, y| (x - cx).abs() <= half_w && (y - cy).abs() <= half_h);
    }

    pub fn disc(&mut self, cx: f64, cy: f64, radius: f64, intensity: f32) {
        let bbox = [cx - radius, cx + radius, cy - radius, cy + radius];
        let r2 = radius * radius;
        self.paint(bbox, intensity, |x, y| (x - cx).powi(2) + (y - cy).powi(2) <= r2);
    }

    /// Thick segment from `a` to `b`.
    pub fn segment(&mut self, a: [f64; 2], b: [f64; 2], half_width: f64, intensity: f32) {
        let bbox = [
            a[0].min(b[0]) - half_width,
            a[0].max(b[0]) + half_width,
            a[1].min(b[1]) - half_width,
            a[1].max(b[1]) + half_width,
        ];
        let d = [b[0] - a[0], b[1] - a[1]];
        let len2 = (d[0] * d[0] + d[1] * d[1]).max(1e-12);
        let hw2 = half_width * half_width;
        self.paint(bbox, intensity, |x, y| {
            let t = (((x - a[0]) * d[0] + (y - a[1]) * d[1]) / len2).clamp(0.0, 1.0);
            let (px, py) = (a[0] + t * d[0] - x, a[1] + t * d[1] - y);
            px * px + py * py <= hw2
        });
    }

    pub fn to_u8(&self) -> Array2<u8> {
        Array2::from_shape_fn((self.height, self.width), |(r, c)| {
            (self.data[r * self.width + c].clamp(0.0, 1.0) * 255.0).round() as u8
        })
    }
}
