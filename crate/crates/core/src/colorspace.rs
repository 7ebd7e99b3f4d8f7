//! sRGB ↔ CIELAB conversion and the CIEDE2000 color difference.
//!
//! Conversion uses the sRGB transfer function (0.04045 / 12.92 linear toe),
//! the sRGB→XYZ matrix for a D65 white and the 2° observer, and normalizes
//! XYZ by the matrix row sums so that every neutral sRGB input lands exactly
//! on the a* = b* = 0 axis.

use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::image::{ColorImage, Rgb};

const SRGB_TO_XYZ: [[f64; 3]; 3] = [
    [0.412453, 0.357580, 0.180423],
    [0.212671, 0.715160, 0.072169],
    [0.019334, 0.119193, 0.950227],
];

// CIE constants in exact rational form.
const EPSILON: f64 = 216.0 / 24389.0;
const KAPPA: f64 = 24389.0 / 27.0;

/// A CIELAB triplet.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Lab {
    pub l: f64,
    pub a: f64,
    pub b: f64,
}

impl Lab {
    pub const fn new(l: f64, a: f64, b: f64) -> Self {
        Self { l, a, b }
    }

    pub fn is_finite(&self) -> bool {
        self.l.is_finite() && self.a.is_finite() && self.b.is_finite()
    }

    pub fn chroma(&self) -> f64 {
        self.a.hypot(self.b)
    }
}

/// Lab image, same layout as [`ColorImage`].
#[derive(Debug, Clone, PartialEq)]
pub struct LabImage {
    pub width: u32,
    pub height: u32,
    pub pixels: Vec<Lab>,
}

fn white_point() -> [f64; 3] {
    SRGB_TO_XYZ.map(|row| row.iter().sum())
}

fn srgb_decode(c: f64) -> f64 {
    if c <= 0.04045 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

fn srgb_encode(c: f64) -> f64 {
    if c <= 0.0031308 {
        12.92 * c
    } else {
        1.055 * c.powf(1.0 / 2.4) - 0.055
    }
}

fn linear_lut() -> &'static [f64; 256] {
    static LUT: OnceLock<[f64; 256]> = OnceLock::new();
    LUT.get_or_init(|| std::array::from_fn(|i| srgb_decode(i as f64 / 255.0)))
}

fn lab_f(t: f64) -> f64 {
    if t > EPSILON {
        t.cbrt()
    } else {
        (KAPPA * t + 16.0) / 116.0
    }
}

fn lab_f_inv(f: f64) -> f64 {
    let t = f * f * f;
    if t > EPSILON {
        t
    } else {
        (116.0 * f - 16.0) / KAPPA
    }
}

/// Linear-light RGB in `[0,1]` to Lab.
pub fn linear_rgb_to_lab(rgb: [f64; 3]) -> Lab {
    let wp = white_point();
    let xyz: [f64; 3] = std::array::from_fn(|i| {
        SRGB_TO_XYZ[i]
            .iter()
            .zip(rgb)
            .map(|(m, c)| m * c)
            .sum::<f64>()
    });
    let fx = lab_f(xyz[0] / wp[0]);
    let fy = lab_f(xyz[1] / wp[1]);
    let fz = lab_f(xyz[2] / wp[2]);
    Lab {
        l: 116.0 * fy - 16.0,
        a: 500.0 * (fx - fy),
        b: 200.0 * (fy - fz),
    }
}

pub fn srgb_to_lab(c: Rgb) -> Lab {
    let lut = linear_lut();
    linear_rgb_to_lab(c.map(|v| lut[v as usize]))
}

pub fn rgb_to_lab(img: &ColorImage) -> LabImage {
    LabImage {
        width: img.width(),
        height: img.height(),
        pixels: img.pixels().iter().map(|&c| srgb_to_lab(c)).collect(),
    }
}

fn xyz_to_srgb_matrix() -> &'static [[f64; 3]; 3] {
    static INV: OnceLock<[[f64; 3]; 3]> = OnceLock::new();
    INV.get_or_init(|| invert3(&SRGB_TO_XYZ))
}

fn invert3(m: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let cof =
        |r0: usize, r1: usize, c0: usize, c1: usize| m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0];
    let det = m[0][0] * cof(1, 2, 1, 2) - m[0][1] * cof(1, 2, 0, 2) + m[0][2] * cof(1, 2, 0, 1);
    let adj = [
        [cof(1, 2, 1, 2), -cof(0, 2, 1, 2), cof(0, 1, 1, 2)],
        [-cof(1, 2, 0, 2), cof(0, 2, 0, 2), -cof(0, 1, 0, 2)],
        [cof(1, 2, 0, 1), -cof(0, 2, 0, 1), cof(0, 1, 0, 1)],
    ];
    adj.map(|row| row.map(|v| v / det))
}

/// Lab to gamma-encoded sRGB in `[0,1]`, unclamped.
pub fn lab_to_srgb_f64(lab: Lab) -> [f64; 3] {
    let wp = white_point();
    let fy = (lab.l + 16.0) / 116.0;
    let fx = fy + lab.a / 500.0;
    let fz = fy - lab.b / 200.0;
    let xyz = [
        lab_f_inv(fx) * wp[0],
        lab_f_inv(fy) * wp[1],
        lab_f_inv(fz) * wp[2],
    ];
    let inv = xyz_to_srgb_matrix();
    std::array::from_fn(|i| {
        let lin: f64 = inv[i].iter().zip(xyz).map(|(m, v)| m * v).sum();
        srgb_encode(lin.max(0.0))
    })
}

/// Lab to 8-bit sRGB; out-of-gamut channels are clamped to `[0,255]`.
pub fn lab_to_srgb(lab: Lab) -> Rgb {
    lab_to_srgb_f64(lab).map(|c| (c * 255.0).round().clamp(0.0, 255.0) as u8)
}

/// Parametric weighting factors kL, kC, kH.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightingFactors {
    pub kl: f64,
    pub kc: f64,
    pub kh: f64,
}

impl Default for WeightingFactors {
    fn default() -> Self {
        Self {
            kl: 1.0,
            kc: 1.0,
            kh: 1.0,
        }
    }
}

impl WeightingFactors {
    pub fn validate(&self) -> Result<()> {
        let ok = |k: f64| k.is_finite() && k > 0.0;
        if ok(self.kl) && ok(self.kc) && ok(self.kh) {
            Ok(())
        } else {
            Err(Error::InvalidWeights(self.kl, self.kc, self.kh))
        }
    }
}

/// CIEDE2000 result with every intermediate term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeltaE2000Breakdown {
    /// ΔL'
    pub dl: f64,
    /// ΔC'
    pub dc: f64,
    /// ΔH'
    pub dh: f64,
    pub sl: f64,
    pub sc: f64,
    pub sh: f64,
    pub rt: f64,
    pub k: WeightingFactors,
    pub value: f64,
}

impl DeltaE2000Breakdown {
    /// Recombines the weighted terms into ΔE00.
    pub fn recombine(&self) -> f64 {
        let l = self.dl / (self.k.kl * self.sl);
        let c = self.dc / (self.k.kc * self.sc);
        let h = self.dh / (self.k.kh * self.sh);
        (l * l + c * c + h * h + self.rt * c * h).max(0.0).sqrt()
    }
}

const POW25_7: f64 = 6_103_515_625.0; // 25^7

fn hue_deg(b: f64, a: f64) -> f64 {
    if a == 0.0 && b == 0.0 {
        return 0.0;
    }
    let h = b.atan2(a).to_degrees();
    if h < 0.0 {
        h + 360.0
    } else {
        h
    }
}

/// CIEDE2000 between two Lab colors.
///
/// Non-finite inputs or non-positive weighting factors are rejected.
pub fn delta_e_2000(p: Lab, q: Lab, k: WeightingFactors) -> Result<DeltaE2000Breakdown> {
    for c in [p, q] {
        if !c.is_finite() {
            return Err(Error::NonFinite(c.l, c.a, c.b));
        }
    }
    k.validate()?;
    Ok(breakdown(p, q, k))
}

/// ΔE00 value only; inputs are assumed finite.
pub fn delta_e_2000_value(p: Lab, q: Lab, k: WeightingFactors) -> f64 {
    breakdown(p, q, k).value
}

fn breakdown(p: Lab, q: Lab, k: WeightingFactors) -> DeltaE2000Breakdown {
    let c_mean = (p.chroma() + q.chroma()) / 2.0;
    let c7 = c_mean.powi(7);
    let g = 0.5 * (1.0 - (c7 / (c7 + POW25_7)).sqrt());

    let a1 = (1.0 + g) * p.a;
    let a2 = (1.0 + g) * q.a;
    let c1 = a1.hypot(p.b);
    let c2 = a2.hypot(q.b);
    let h1 = hue_deg(p.b, a1);
    let h2 = hue_deg(q.b, a2);

    let dl = q.l - p.l;
    let dc = c2 - c1;
    let cc = c1 * c2;
    let dh_angle = if cc == 0.0 {
        0.0
    } else {
        let d = h2 - h1;
        if d > 180.0 {
            d - 360.0
        } else if d < -180.0 {
            d + 360.0
        } else {
            d
        }
    };
    let dh = 2.0 * cc.sqrt() * (dh_angle.to_radians() / 2.0).sin();

    let l_mean = (p.l + q.l) / 2.0;
    let cp_mean = (c1 + c2) / 2.0;
    let h_mean = if cc == 0.0 {
        h1 + h2
    } else if (h1 - h2).abs() <= 180.0 {
        (h1 + h2) / 2.0
    } else if h1 + h2 < 360.0 {
        (h1 + h2 + 360.0) / 2.0
    } else {
        (h1 + h2 - 360.0) / 2.0
    };

    let t = 1.0 - 0.17 * (h_mean - 30.0).to_radians().cos()
        + 0.24 * (2.0 * h_mean).to_radians().cos()
        + 0.32 * (3.0 * h_mean + 6.0).to_radians().cos()
        - 0.20 * (4.0 * h_mean - 63.0).to_radians().cos();
    let d_theta = 30.0 * (-((h_mean - 275.0) / 25.0).powi(2)).exp();
    let cp7 = cp_mean.powi(7);
    let rc = 2.0 * (cp7 / (cp7 + POW25_7)).sqrt();
    let l50 = (l_mean - 50.0).powi(2);
    let sl = 1.0 + 0.015 * l50 / (20.0 + l50).sqrt();
    let sc = 1.0 + 0.045 * cp_mean;
    let sh = 1.0 + 0.015 * cp_mean * t;
    let rt = -(2.0 * d_theta).to_radians().sin() * rc;

    let mut out = DeltaE2000Breakdown {
        dl,
        dc,
        dh,
        sl,
        sc,
        sh,
        rt,
        k,
        value: 0.0,
    };
    out.value = out.recombine();
    out
}
