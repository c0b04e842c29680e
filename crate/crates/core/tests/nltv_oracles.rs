use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wim_core::image::Image;
use wim_core::nltv::{
    build_weights, nl_div, nl_grad, nltv_norm, select_neighbors, Filtering, NlWeightParams,
};

fn random_image(w: usize, h: usize, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Image::from_fn(w, h, |_, _| rng.random())
}

fn small() -> NlWeightParams {
    NlWeightParams {
        patch_size: 3,
        window_size: 7,
        ..NlWeightParams::default()
    }
}

#[test]
fn laplacian_matches_dense_matrix() {
    let n = 8;
    let gph = build_weights(&random_image(n, n, 1), &small()).unwrap();
    let p = n * n;
    // L = 2 (D - W) from the symmetric weights
    let mut lap = vec![vec![0.0; p]; p];
    for x in 0..p {
        for (y, w) in gph.neighbors(x) {
            lap[x][x] += 2.0 * w;
            lap[x][y] -= 2.0 * w;
        }
    }
    for x in 0..p {
        for y in 0..p {
            assert_eq!(lap[x][y], lap[y][x]);
        }
    }
    let u = random_image(n, n, 2);
    let got = nl_div(&nl_grad(&u, &gph).unwrap(), &gph).unwrap();
    for x in 0..p {
        let want: f64 = -lap[x].iter().zip(u.as_slice()).map(|(a, b)| a * b).sum::<f64>();
        assert!((got.as_slice()[x] - want).abs() < 1e-12);
    }
    // NL-TV norm from the definition
    let norm: f64 = (0..p)
        .map(|x| {
            gph.neighbors(x)
                .map(|(y, w)| w * (u.as_slice()[y] - u.as_slice()[x]).powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .sum();
    assert!((nltv_norm(&u, &gph).unwrap() - norm).abs() < 1e-12);
}

fn mirror(i: isize, n: usize) -> usize {
    let n = n as isize;
    let p = 2 * (n - 1);
    let i = i.rem_euclid(p);
    (if i >= n { p - i } else { i }) as usize
}

fn brute_d2(g: &Image, a: (usize, usize), b: (usize, usize), patch: usize, sigma: f64) -> f64 {
    let r = (patch / 2) as isize;
    let (w, h) = g.dims();
    let mut num = 0.0;
    let mut den = 0.0;
    for dy in -r..=r {
        for dx in -r..=r {
            let k = (-((dx * dx + dy * dy) as f64) / (2.0 * sigma * sigma)).exp();
            let va = g.get(mirror(a.0 as isize + dx, w), mirror(a.1 as isize + dy, h));
            let vb = g.get(mirror(b.0 as isize + dx, w), mirror(b.1 as isize + dy, h));
            num += k * (va - vb) * (va - vb);
            den += k;
        }
    }
    num / den
}

#[test]
fn selection_matches_brute_force() {
    let (w, h) = (24, 24);
    let guide = random_image(w, h, 3);
    let params = NlWeightParams::default();
    let sel = select_neighbors(&guide, &params).unwrap();
    let half = params.window_size as isize / 2;
    let (mut s1, mut s2, mut cnt) = (0.0, 0.0, 0.0);
    for y in 0..h {
        for x in 0..w {
            let mut cands = Vec::new();
            for cy in (y as isize - half).max(0)..=(y as isize + half).min(h as isize - 1) {
                for cx in (x as isize - half).max(0)..=(x as isize + half).min(w as isize - 1) {
                    let (cx, cy) = (cx as usize, cy as usize);
                    if (cx, cy) != (x, y) {
                        let d2 = brute_d2(&guide, (x, y), (cx, cy), params.patch_size, params.kernel_sigma);
                        s1 += d2.sqrt();
                        s2 += d2;
                        cnt += 1.0;
                        cands.push((d2, cy * w + cx));
                    }
                }
            }
            cands.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let mut want: Vec<usize> = cands[..params.m_best].iter().map(|c| c.1).collect();
            if x > 0 {
                want.push(y * w + x - 1);
            }
            if x + 1 < w {
                want.push(y * w + x + 1);
            }
            if y > 0 {
                want.push((y - 1) * w + x);
            }
            if y + 1 < h {
                want.push((y + 1) * w + x);
            }
            want.sort();
            want.dedup();
            let got = &sel.per_pixel[y * w + x];
            let got_idx: Vec<usize> = got.iter().map(|p| p.0).collect();
            assert_eq!(got_idx, want, "pixel ({x}, {y})");
            for &(i, d2) in got {
                let b = (i % w, i / w);
                assert!((d2 - brute_d2(&guide, (x, y), b, params.patch_size, params.kernel_sigma)).abs() < 1e-12);
            }
        }
    }
    let mean = s1 / cnt;
    let std = (s2 / cnt - mean * mean).sqrt();
    assert!((sel.distance_mean - mean).abs() < 1e-10);
    assert!((sel.distance_std - std).abs() < 1e-10);
}

#[test]
fn two_region_guide_links_within_regions() {
    let n = 32;
    let guide = Image::from_fn(n, n, |x, _| if x < n / 2 { 0.1 } else { 0.9 });
    let params = NlWeightParams {
        filtering: Filtering::Fixed(0.1),
        ..NlWeightParams::default()
    };
    let gph = build_weights(&guide, &params).unwrap();
    let margin = params.patch_size / 2 + params.window_size / 2;
    for y in 0..n {
        for x in 0..n {
            let left = x < n / 2;
            // far from the edge every patch in the window is identical
            let far = if left { x + margin < n / 2 } else { x >= n / 2 + margin };
            for (j, w) in gph.neighbors(y * n + x) {
                let jx = j % n;
                let adjacent = (jx as isize - x as isize).abs() + ((j / n) as isize - y as isize).abs() == 1;
                if far {
                    assert_eq!(left, jx < n / 2);
                    assert_eq!(w, 1.0);
                }
                if (jx < n / 2) != left && !adjacent {
                    panic!("non-adjacent cross-region edge ({x},{y}) -> {j}");
                }
                assert_eq!(gph.weight(j, y * n + x), Some(w));
            }
        }
    }
    // the only cross-edge links are adjacent pixels straddling the edge,
    // and their patches differ by a full step
    let a = (n / 2 - 1) + 5 * n;
    let w = gph.weight(a, a + 1).unwrap();
    assert!(w < 1e-6);
}
