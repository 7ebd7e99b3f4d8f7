//! Heat-map rendering of [`DiffMap`]s.

use crate::error::{Error, Result};
use crate::image::{check_dims, ColorImage, Rgb};
use crate::scoring::DiffMap;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ColormapRange {
    /// Clamp ΔE to `[lo, hi]`.
    Fixed { lo: f64, hi: f64 },
    /// Scale by `[0, max]` of each map.
    PerImageMax,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ColormapSpec {
    stops: Vec<(f64, Rgb)>,
    range: ColormapRange,
}

pub const DEFAULT_STOPS: [(f64, Rgb); 5] = [
    (0.0, [0, 0, 139]),
    (0.25, [0, 255, 255]),
    (0.5, [0, 255, 0]),
    (0.75, [255, 255, 0]),
    (1.0, [255, 0, 0]),
];

impl Default for ColormapSpec {
    fn default() -> Self {
        Self {
            stops: DEFAULT_STOPS.to_vec(),
            range: ColormapRange::Fixed { lo: 0.0, hi: 50.0 },
        }
    }
}

impl ColormapSpec {
    pub fn new(stops: Vec<(f64, Rgb)>, range: ColormapRange) -> Result<Self> {
        if stops.len() < 2 {
            return Err(Error::Colormap("need at least two stops".into()));
        }
        if stops[0].0 != 0.0 || stops[stops.len() - 1].0 != 1.0 {
            return Err(Error::Colormap("stops must start at 0 and end at 1".into()));
        }
        if stops
            .windows(2)
            .any(|w| w[0].0.partial_cmp(&w[1].0) != Some(std::cmp::Ordering::Less))
        {
            return Err(Error::Colormap(
                "stop positions must be strictly increasing".into(),
            ));
        }
        if let ColormapRange::Fixed { lo, hi } = range {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::Colormap(format!(
                    "range must satisfy lo < hi, got {lo}:{hi}"
                )));
            }
        }
        Ok(Self { stops, range })
    }

    pub fn with_range(range: ColormapRange) -> Result<Self> {
        Self::new(DEFAULT_STOPS.to_vec(), range)
    }

    pub fn stops(&self) -> &[(f64, Rgb)] {
        &self.stops
    }

    pub fn range(&self) -> ColormapRange {
        self.range
    }

    /// Color at normalized position `t` in `[0,1]`.
    pub fn color_at(&self, t: f64) -> Rgb {
        let t = if t.is_nan() { 0.0 } else { t.clamp(0.0, 1.0) };
        let i = self
            .stops
            .partition_point(|s| s.0 <= t)
            .clamp(1, self.stops.len() - 1);
        let (p0, c0) = self.stops[i - 1];
        let (p1, c1) = self.stops[i];
        let f = (t - p0) / (p1 - p0);
        std::array::from_fn(|ch| {
            let v = c0[ch] as f64 + (c1[ch] as f64 - c0[ch] as f64) * f;
            (v + 0.5).floor().clamp(0.0, 255.0) as u8
        })
    }

    fn bounds(&self, map: &DiffMap) -> (f64, f64) {
        match self.range {
            ColormapRange::Fixed { lo, hi } => (lo, hi),
            ColormapRange::PerImageMax => (0.0, map.max()),
        }
    }
}

pub fn render_heatmap(map: &DiffMap, spec: &ColormapSpec) -> ColorImage {
    let (lo, hi) = spec.bounds(map);
    let pixels = map
        .values
        .iter()
        .map(|&v| {
            let t = if hi > lo {
                (v.clamp(lo, hi) - lo) / (hi - lo)
            } else {
                0.0
            };
            spec.color_at(t)
        })
        .collect();
    ColorImage::new(map.width, map.height, pixels)
}

/// Original, reconstruction and heat map side by side.
pub fn composite(
    original: &ColorImage,
    reconstructed: &ColorImage,
    heatmap: &ColorImage,
) -> Result<ColorImage> {
    check_dims(original.dims(), reconstructed.dims())?;
    check_dims(original.dims(), heatmap.dims())?;
    let w = original.width();
    Ok(ColorImage::from_fn(
        3 * w,
        original.height(),
        |x, y| match x / w {
            0 => original.get(x, y),
            1 => reconstructed.get(x - w, y),
            _ => heatmap.get(x - 2 * w, y),
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map(values: Vec<f64>) -> DiffMap {
        DiffMap {
            width: values.len() as u32,
            height: 1,
            values,
        }
    }

    #[test]
    fn zero_map_is_first_stop() {
        let img = render_heatmap(&map(vec![0.0; 6]), &ColormapSpec::default());
        assert!(img.pixels().iter().all(|&p| p == DEFAULT_STOPS[0].1));
    }

    #[test]
    fn hi_maps_to_last_stop() {
        let img = render_heatmap(&map(vec![50.0, 80.0]), &ColormapSpec::default());
        assert_eq!(img.pixels(), &[[255, 0, 0], [255, 0, 0]]);
    }

    #[test]
    fn halfway_is_rounded_midpoint() {
        // between (0,0,139) and (0,255,255): midpoint (0,127.5,197) → (0,128,197)
        let img = render_heatmap(&map(vec![6.25]), &ColormapSpec::default());
        assert_eq!(img.pixels()[0], [0, 128, 197]);
    }

    #[test]
    fn per_image_max_scales() {
        let spec = ColormapSpec::with_range(ColormapRange::PerImageMax).unwrap();
        let img = render_heatmap(&map(vec![0.0, 2.0, 4.0]), &spec);
        assert_eq!(img.pixels(), &[[0, 0, 139], [0, 255, 0], [255, 0, 0]]);
        let flat = render_heatmap(&map(vec![0.0, 0.0]), &spec);
        assert_eq!(flat.pixels(), &[[0, 0, 139]; 2]);
    }

    #[test]
    fn invalid_specs() {
        assert!(ColormapSpec::new(vec![(0.0, [0; 3])], ColormapRange::PerImageMax).is_err());
        assert!(ColormapSpec::new(
            vec![(0.1, [0; 3]), (1.0, [0; 3])],
            ColormapRange::PerImageMax
        )
        .is_err());
        assert!(ColormapSpec::new(
            vec![(0.0, [0; 3]), (0.0, [1; 3]), (1.0, [0; 3])],
            ColormapRange::PerImageMax
        )
        .is_err());
        assert!(ColormapSpec::with_range(ColormapRange::Fixed { lo: 5.0, hi: 5.0 }).is_err());
    }

    #[test]
    fn composite_layout() {
        let a = ColorImage::filled(2, 1, [1; 3]);
        let b = ColorImage::filled(2, 1, [2; 3]);
        let c = ColorImage::filled(2, 1, [3; 3]);
        let out = composite(&a, &b, &c).unwrap();
        assert_eq!(
            out.pixels(),
            &[[1; 3], [1; 3], [2; 3], [2; 3], [3; 3], [3; 3]]
        );
    }
}
