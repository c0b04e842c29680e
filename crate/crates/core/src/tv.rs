//! Isotropic total variation: forward-difference gradient with Neumann
//! boundary, its negative adjoint, and the ROF proximity operator solved
//! on the dual by projected gradient steps.

use crate::error::{Result, WimError};
use crate::image::Image;
use crate::prox::{ProxConfig, ProxOutcome, Regularizer};

/// Dual step size; the dual gradient is 8-Lipschitz so any step below 1/4
/// converges.
pub const DUAL_STEP: f64 = 0.248;

#[derive(Clone, Debug, PartialEq)]
pub struct VectorField {
    width: usize,
    height: usize,
    pub px: Vec<f64>,
    pub py: Vec<f64>,
}

impl VectorField {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            px: vec![0.0; width * height],
            py: vec![0.0; width * height],
        }
    }

    pub fn new(width: usize, height: usize, px: Vec<f64>, py: Vec<f64>) -> Result<Self> {
        if px.len() != width * height || py.len() != width * height {
            return Err(WimError::InvalidParameter("vector field size".into()));
        }
        Ok(Self {
            width,
            height,
            px,
            py,
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn dot(&self, other: &VectorField) -> f64 {
        let a: f64 = self.px.iter().zip(&other.px).map(|(a, b)| a * b).sum();
        let b: f64 = self.py.iter().zip(&other.py).map(|(a, b)| a * b).sum();
        a + b
    }

    /// Largest pointwise magnitude `sqrt(px^2 + py^2)`.
    pub fn max_norm(&self) -> f64 {
        self.px
            .iter()
            .zip(&self.py)
            .map(|(x, y)| x.hypot(*y))
            .fold(0.0, f64::max)
    }
}

pub fn grad(img: &Image) -> VectorField {
    let (w, h) = img.dims();
    let mut field = VectorField::zeros(w, h);
    grad_into(img.as_slice(), w, h, &mut field.px, &mut field.py);
    field
}

fn grad_into(u: &[f64], w: usize, h: usize, px: &mut [f64], py: &mut [f64]) {
    for y in 0..h {
        let row = y * w;
        for x in 0..w {
            let i = row + x;
            px[i] = if x + 1 < w { u[i + 1] - u[i] } else { 0.0 };
            py[i] = if y + 1 < h { u[i + w] - u[i] } else { 0.0 };
        }
    }
}

/// Negative adjoint of [`grad`]: `<grad u, p> = -<u, div p>`.
pub fn div(field: &VectorField) -> Image {
    let (w, h) = field.dims();
    let mut out = vec![0.0; w * h];
    div_into(&field.px, &field.py, w, h, &mut out);
    Image::new(w, h, out).expect("finite field")
}

fn div_into(px: &[f64], py: &[f64], w: usize, h: usize, out: &mut [f64]) {
    for y in 0..h {
        let row = y * w;
        let o = &mut out[row..row + w];
        let pxr = &px[row..row + w];
        if w == 1 {
            o[0] = 0.0;
        } else {
            o[0] = pxr[0];
            for x in 1..w - 1 {
                o[x] = pxr[x] - pxr[x - 1];
            }
            o[w - 1] = -pxr[w - 2];
        }
        if h == 1 {
            continue;
        }
        let cur = &py[row..row + w];
        if y == 0 {
            o.iter_mut().zip(cur).for_each(|(v, c)| *v += c);
        } else {
            let prev = &py[row - w..row];
            if y + 1 == h {
                o.iter_mut().zip(prev).for_each(|(v, p)| *v -= p);
            } else {
                for x in 0..w {
                    o[x] += cur[x] - prev[x];
                }
            }
        }
    }
}

/// Isotropic TV: sum of gradient magnitudes.
pub fn tv_norm(img: &Image) -> f64 {
    let g = grad(img);
    g.px.iter().zip(&g.py).map(|(x, y)| x.hypot(*y)).sum()
}

/// ROF denoiser `argmin 0.5||f - g||^2 + weight TV(f)` on the dual.
///
/// The dual variable is kept between calls, so repeated solves on slowly
/// changing inputs start close to their solution.
#[derive(Clone, Debug, Default)]
pub struct TvProx {
    dual: Option<VectorField>,
}

impl TvProx {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn dual(&self) -> Option<&VectorField> {
        self.dual.as_ref()
    }

    pub fn solve(&mut self, g: &Image, weight: f64, cfg: &ProxConfig) -> Result<ProxOutcome> {
        if !(weight > 0.0 && weight.is_finite()) {
            return Err(WimError::InvalidParameter(format!(
                "prox weight must be positive, got {weight}"
            )));
        }
        let (w, h) = g.dims();
        let mut p = match self.dual.take() {
            Some(p) if p.dims() == (w, h) => p,
            _ => VectorField::zeros(w, h),
        };
        let n = w * h;
        let inv_w = 1.0 / weight;
        let gs = g.as_slice();
        let mut d = vec![0.0; n];
        let mut residual = f64::INFINITY;
        let mut iterations = 0;
        while iterations < cfg.max_iters {
            div_into(&p.px, &p.py, w, h, &mut d);
            for (di, gi) in d.iter_mut().zip(gs) {
                *di -= gi * inv_w;
            }
            let mut change = 0.0f64;
            for y in 0..h {
                let row = y * w;
                for x in 0..w {
                    let i = row + x;
                    let gx = if x + 1 < w { d[i + 1] - d[i] } else { 0.0 };
                    let gy = if y + 1 < h { d[i + w] - d[i] } else { 0.0 };
                    let nx = p.px[i] + DUAL_STEP * gx;
                    let ny = p.py[i] + DUAL_STEP * gy;
                    let scale = (nx * nx + ny * ny).sqrt().max(1.0);
                    let (nx, ny) = (nx / scale, ny / scale);
                    change = change.max((nx - p.px[i]).abs()).max((ny - p.py[i]).abs());
                    p.px[i] = nx;
                    p.py[i] = ny;
                }
            }
            iterations += 1;
            residual = change;
            if change < cfg.tol {
                break;
            }
        }
        div_into(&p.px, &p.py, w, h, &mut d);
        let f: Vec<f64> = gs.iter().zip(&d).map(|(gi, di)| gi - weight * di).collect();
        self.dual = Some(p);
        Ok(ProxOutcome {
            image: Image::new(w, h, f)?,
            residual,
            iterations,
        })
    }
}

impl Regularizer for TvProx {
    fn value(&self, img: &Image) -> f64 {
        tv_norm(img)
    }

    fn prox(&mut self, g: &Image, weight: f64, cfg: &ProxConfig) -> Result<ProxOutcome> {
        self.solve(g, weight, cfg)
    }

    fn reset(&mut self) {
        self.dual = None;
    }

    fn name(&self) -> &'static str {
        "tv"
    }
}

/// Stateless TV proximity operator.
pub fn tv_prox(g: &Image, weight: f64, cfg: &ProxConfig) -> Result<Image> {
    Ok(TvProx::new().solve(g, weight, cfg)?.image)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prox::prox_objective;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(w: usize, h: usize, seed: u64) -> Image {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Image::from_fn(w, h, |_, _| rng.random())
    }

    #[test]
    fn grad_of_ramp_and_constant() {
        let ramp = Image::from_fn(8, 6, |x, _| x as f64);
        let g = grad(&ramp);
        for y in 0..6 {
            for x in 0..8 {
                let i = y * 8 + x;
                assert_eq!(g.px[i], if x < 7 { 1.0 } else { 0.0 });
                assert_eq!(g.py[i], 0.0);
            }
        }
        let c = grad(&Image::filled(5, 5, 0.3));
        assert!(c.px.iter().chain(&c.py).all(|&v| v == 0.0));
        assert!(div(&VectorField::zeros(4, 4)).as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn div_grad_is_neumann_laplacian() {
        let u = random_image(9, 7, 1);
        let lap = div(&grad(&u));
        for y in 0..7 {
            for x in 0..9 {
                let c = u.get(x, y);
                let mut expect = 0.0;
                if x > 0 {
                    expect += u.get(x - 1, y) - c;
                }
                if x + 1 < 9 {
                    expect += u.get(x + 1, y) - c;
                }
                if y > 0 {
                    expect += u.get(x, y - 1) - c;
                }
                if y + 1 < 7 {
                    expect += u.get(x, y + 1) - c;
                }
                assert!((lap.get(x, y) - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn tv_norm_of_step() {
        let m = 12;
        let step = Image::from_fn(m, m, |x, _| if x < 5 { 0.0 } else { 1.0 });
        assert!((tv_norm(&step) - m as f64).abs() < 1e-12);
        assert_eq!(tv_norm(&Image::filled(m, m, 0.7)), 0.0);
        let u = random_image(10, 10, 2);
        assert!((tv_norm(&u.scale(-2.5)) - 2.5 * tv_norm(&u)).abs() < 1e-10);
    }

    #[test]
    fn prox_edge_cases() {
        let g = random_image(16, 16, 3);
        let f = tv_prox(&g, 1e-12, &ProxConfig::default()).unwrap();
        assert!(f.max_abs_diff(&g) < 1e-8);
        let c = Image::filled(16, 16, 0.42);
        assert_eq!(tv_prox(&c, 0.5, &ProxConfig::default()).unwrap(), c);
        assert!(tv_prox(&g, 0.0, &ProxConfig::default()).is_err());
        assert!(tv_prox(&g, -1.0, &ProxConfig::default()).is_err());
    }

    #[test]
    fn prox_properties() {
        let g = random_image(24, 24, 4);
        let weight = 0.1;
        let mut solver = TvProx::new();
        let out = solver.solve(&g, weight, &ProxConfig::default()).unwrap();
        assert!(solver.dual().unwrap().max_norm() <= 1.0 + 1e-12);
        assert!((out.image.mean() - g.mean()).abs() < 1e-8);
        let obj = prox_objective(&solver, &out.image, &g, weight);
        assert!(obj <= weight * tv_norm(&g));
    }
}
