use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SIDE: usize = 28;
const CENTER: f64 = (SIDE as f64 - 1.0) / 2.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AugmentationKind {
    GaussianBlur {
        #[serde(default = "default_blur_sigma")]
        sigma: f64,
    },
    Affine {
        #[serde(default = "default_rotation")]
        rot_deg: (f64, f64),
        #[serde(default = "default_translation")]
        trans_frac: (f64, f64),
        #[serde(default = "default_scale")]
        scale: (f64, f64),
    },
}

fn default_blur_sigma() -> f64 {
    2.0
}
fn default_rotation() -> (f64, f64) {
    (-10.0, 10.0)
}
fn default_translation() -> (f64, f64) {
    (-0.1, 0.1)
}
fn default_scale() -> (f64, f64) {
    (0.9, 1.1)
}

impl AugmentationKind {
    pub fn blur() -> Self {
        AugmentationKind::GaussianBlur {
            sigma: default_blur_sigma(),
        }
    }

    pub fn affine() -> Self {
        AugmentationKind::Affine {
            rot_deg: default_rotation(),
            trans_frac: default_translation(),
            scale: default_scale(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            AugmentationKind::GaussianBlur { .. } => "blur",
            AugmentationKind::Affine { .. } => "affine",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let range_ok = |(lo, hi): (f64, f64)| lo.is_finite() && hi.is_finite() && lo <= hi;
        match *self {
            AugmentationKind::GaussianBlur { sigma } if !(sigma > 0.0 && sigma.is_finite()) => Err(
                Error::InvalidParameter(format!("blur sigma must be positive, got {sigma}")),
            ),
            AugmentationKind::Affine {
                rot_deg,
                trans_frac,
                scale,
            } if !(range_ok(rot_deg)
                && range_ok(trans_frac)
                && range_ok(scale)
                && scale.0 > 0.0) =>
            {
                Err(Error::InvalidParameter(
                    "affine ranges must be ordered, finite, with positive scale".into(),
                ))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentationSpec {
    #[serde(flatten)]
    pub kind: AugmentationKind,
    pub n_aug: usize,
    #[serde(default)]
    pub seed: u64,
}

impl AugmentationSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_aug == 0 {
            return Err(Error::InvalidParameter("n_aug must be at least 1".into()));
        }
        self.kind.validate()
    }
}

fn check_image(image: &[f64]) -> Result<()> {
    crate::error::ensure_dim(SIDE * SIDE, image.len())
}

/// Draws one augmentation of a flattened 28×28 image.
///
/// Affine draws consume the generator in the order rotation, x shift,
/// y shift, scale.
pub fn augment<R: Rng + ?Sized>(
    image: &[f64],
    kind: &AugmentationKind,
    rng: &mut R,
) -> Result<Vec<f64>> {
    check_image(image)?;
    kind.validate()?;
    match *kind {
        AugmentationKind::GaussianBlur { sigma } => gaussian_blur(image, sigma),
        AugmentationKind::Affine {
            rot_deg,
            trans_frac,
            scale,
        } => {
            let mut draw = |(lo, hi): (f64, f64)| {
                if lo == hi {
                    lo
                } else {
                    rng.random_range(lo..hi)
                }
            };
            let rot = draw(rot_deg);
            let tx = draw(trans_frac) * SIDE as f64;
            let ty = draw(trans_frac) * SIDE as f64;
            let s = draw(scale);
            affine_transform(image, rot, tx, ty, s)
        }
    }
}

/// Folds an out-of-range index back with edge-inclusive mirroring
/// (`d c b a | a b c d | d c b a`).
fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let m = i.rem_euclid(2 * n);
    (if m < n { m } else { 2 * n - 1 - m }) as usize
}

fn gaussian_weights(sigma: f64) -> Vec<f64> {
    let radius = (4.0 * sigma).ceil() as isize;
    let w: Vec<f64> = (-radius..=radius)
        .map(|k| (-(k * k) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|v| v / total).collect()
}

/// Separable Gaussian convolution with mirrored borders.
pub fn gaussian_blur(image: &[f64], sigma: f64) -> Result<Vec<f64>> {
    check_image(image)?;
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "blur sigma must be positive, got {sigma}"
        )));
    }
    let w = gaussian_weights(sigma);
    let radius = (w.len() / 2) as isize;
    let pass = |src: &[f64], along_rows: bool| -> Vec<f64> {
        let mut out = vec![0.0; SIDE * SIDE];
        for r in 0..SIDE {
            for c in 0..SIDE {
                let mut acc = 0.0;
                for (k, wk) in w.iter().enumerate() {
                    let off = k as isize - radius;
                    let (rr, cc) = if along_rows {
                        (r, reflect(c as isize + off, SIDE))
                    } else {
                        (reflect(r as isize + off, SIDE), c)
                    };
                    acc += wk * src[rr * SIDE + cc];
                }
                out[r * SIDE + c] = acc;
            }
        }
        out
    };
    let horizontal = pass(image, true);
    Ok(pass(&horizontal, false))
}

/// Rotates by `rot_deg`, scales by `scale` about the image center and shifts
/// by `(tx, ty)` pixels, by inverse-mapping each output pixel with bilinear
/// interpolation. Samples outside the frame read as 0; the result is clamped
/// to `[0, 1]`.
pub fn affine_transform(
    image: &[f64],
    rot_deg: f64,
    tx: f64,
    ty: f64,
    scale: f64,
) -> Result<Vec<f64>> {
    check_image(image)?;
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "scale must be positive, got {scale}"
        )));
    }
    let (sin, cos) = rot_deg.to_radians().sin_cos();
    let pixel = |r: isize, c: isize| -> f64 {
        if r < 0 || c < 0 || r >= SIDE as isize || c >= SIDE as isize {
            0.0
        } else {
            image[r as usize * SIDE + c as usize]
        }
    };
    let mut out = vec![0.0; SIDE * SIDE];
    for r in 0..SIDE {
        for c in 0..SIDE {
            // Output offset from center, undo the shift, then the rotation and scale.
            let x = c as f64 - CENTER - tx;
            let y = r as f64 - CENTER - ty;
            let sx = (cos * x + sin * y) / scale + CENTER;
            let sy = (-sin * x + cos * y) / scale + CENTER;
            let (c0, r0) = (sx.floor(), sy.floor());
            let (fx, fy) = (sx - c0, sy - r0);
            let (c0, r0) = (c0 as isize, r0 as isize);
            let v = (1.0 - fy) * ((1.0 - fx) * pixel(r0, c0) + fx * pixel(r0, c0 + 1))
                + fy * ((1.0 - fx) * pixel(r0 + 1, c0) + fx * pixel(r0 + 1, c0 + 1));
            out[r * SIDE + c] = v.clamp(0.0, 1.0);
        }
    }
    Ok(out)
}
