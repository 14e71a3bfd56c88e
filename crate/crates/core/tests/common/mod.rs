#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use reflsm::grid::{gradient, Shape};
use reflsm::io::{write_pgm, RasterImage};
use reflsm::solver::{shrink_pair, Solver, SolverParams, SolverState};
use reflsm::spectral::{solve_helmholtz, NeumannSpectrum};
use reflsm::synth::NoiseSource;
use reflsm::{ScalarField, VectorField2};

pub fn shape(h: usize, w: usize) -> Shape {
    Shape::new(h, w).unwrap()
}

pub fn uniform_field(s: Shape, src: &mut NoiseSource, lo: f64, hi: f64) -> ScalarField {
    ScalarField::from_fn(s, |_, _| lo + (hi - lo) * src.uniform())
}

pub fn to_vec(f: &ScalarField) -> DVector<f64> {
    DVector::from_column_slice(f.as_slice())
}

pub fn from_vec(s: Shape, v: &DVector<f64>) -> ScalarField {
    ScalarField::new(s, v.iter().copied().collect()).unwrap()
}

fn reflect(i: isize, n: usize) -> usize {
    let p = 2 * n as isize;
    let j = i.rem_euclid(p) as usize;
    if j < n {
        j
    } else {
        2 * n - 1 - j
    }
}

/// Five-point Laplacian with zero-flux borders.
pub fn dense_laplacian(s: Shape) -> DMatrix<f64> {
    let (h, w) = (s.height(), s.width());
    let n = h * w;
    let mut l = DMatrix::zeros(n, n);
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let mut link = |j: usize| {
                l[(i, i)] -= 1.0;
                l[(i, j)] += 1.0;
            };
            if x > 0 {
                link(i - 1);
            }
            if x + 1 < w {
                link(i + 1);
            }
            if y > 0 {
                link(i - w);
            }
            if y + 1 < h {
                link(i + w);
            }
        }
    }
    l
}

/// Forward differences, zero in the last column (`dx`) or row (`dy`).
pub fn dense_diffs(s: Shape) -> (DMatrix<f64>, DMatrix<f64>) {
    let (h, w) = (s.height(), s.width());
    let n = h * w;
    let mut dx = DMatrix::zeros(n, n);
    let mut dy = DMatrix::zeros(n, n);
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if x + 1 < w {
                dx[(i, i)] = -1.0;
                dx[(i, i + 1)] = 1.0;
            }
            if y + 1 < h {
                dy[(i, i)] = -1.0;
                dy[(i, i + w)] = 1.0;
            }
        }
    }
    (dx, dy)
}

/// Separable Gaussian blur with mirrored borders, as a matrix.
pub fn dense_gaussian(s: Shape, sigma: f64) -> DMatrix<f64> {
    let r = (3.0 * sigma).ceil() as isize;
    let raw: Vec<f64> = (-r..=r)
        .map(|m| (-(m * m) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = raw.iter().sum();
    let taps: Vec<f64> = raw.iter().map(|t| t / total).collect();
    let (h, w) = (s.height(), s.width());
    let n = h * w;
    let mut g = DMatrix::zeros(n, n);
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            for (a, gy) in taps.iter().enumerate() {
                let yy = reflect(y as isize + a as isize - r, h);
                for (b, gx) in taps.iter().enumerate() {
                    let xx = reflect(x as isize + b as isize - r, w);
                    g[(i, yy * w + xx)] += gy * gx;
                }
            }
        }
    }
    g
}

/// Random mid-iteration state on a `16x16` grid.
pub struct RandomProblem {
    pub solver: Solver,
    pub state: SolverState,
}

pub fn random_problem(seed: u64, params: SolverParams) -> RandomProblem {
    let s = shape(16, 16);
    let mut src = NoiseSource::new(seed);
    let image = ScalarField::from_fn(s, |y, x| {
        let disk = ((y as f64 - 7.5).powi(2) + (x as f64 - 7.0).powi(2)) < 25.0;
        (if disk { -0.3 } else { -1.5 }) + 0.2 * (src.uniform() - 0.5)
    });
    let solver = Solver::new(image.clone(), params).unwrap();
    let mut state = solver.initialize();
    state.s_field = image.add(&uniform_field(s, &mut src, -0.3, 0.3));
    state.b_field = uniform_field(s, &mut src, -0.2, 0.2);
    state.u_field = uniform_field(s, &mut src, -0.95, 0.95);
    state.d_field = VectorField2 {
        x: uniform_field(s, &mut src, -0.2, 0.2),
        y: uniform_field(s, &mut src, -0.2, 0.2),
    };
    state.p_field = VectorField2 {
        x: uniform_field(s, &mut src, -0.1, 0.1),
        y: uniform_field(s, &mut src, -0.1, 0.1),
    };
    let stats = solver.region_stats(&state);
    state.c1 = stats.c1;
    state.c2 = stats.c2;
    state.m_val = stats.m_val();
    state.delta_c = stats.delta_c();
    RandomProblem { solver, state }
}

/// Dense reflectance operator and right-hand side for `prob`.
pub fn dense_reflectance_system(prob: &RandomProblem) -> (DMatrix<f64>, DVector<f64>) {
    let p = prob.solver.params();
    let st = &prob.state;
    let s = prob.solver.shape();
    let n = s.len();
    let lap = dense_laplacian(s);
    let (dx, dy) = dense_diffs(s);
    let g = dense_gaussian(s, p.sigma);
    let kx = &dx * &g;
    let ky = &dy * &g;
    let w = to_vec(&st.soft_mask());
    let wd = DMatrix::from_diagonal(&w);

    let mut a = DMatrix::identity(n, n) * (1.0 + p.lambda_i) - &lap * p.rho1;
    a += (kx.transpose() * &wd * &kx + ky.transpose() * &wd * &ky) * (2.0 * p.tau);

    let img = to_vec(prob.solver.image());
    let lx = &kx * &img;
    let ly = &ky * &img;
    let mut vx = DVector::zeros(n);
    let mut vy = DVector::zeros(n);
    for i in 0..n {
        let m = lx[i].hypot(ly[i]).max(p.eps_norm);
        vx[i] = p.alpha_mag * lx[i] / m;
        vy[i] = p.alpha_mag * ly[i] / m;
    }
    let fitted = to_vec(&st.fitted_reflectance());
    let dpx = to_vec(&st.d_field.x) - to_vec(&st.p_field.x);
    let dpy = to_vec(&st.d_field.y) - to_vec(&st.p_field.y);
    let rhs = fitted + (img - to_vec(&st.b_field)) * p.lambda_i
        + (dx.transpose() * dpx + dy.transpose() * dpy) * p.rho1
        + (kx.transpose() * w.component_mul(&vx) + ky.transpose() * w.component_mul(&vy))
            * (2.0 * p.tau);
    (a, rhs)
}

fn rel(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).norm() / b.norm().max(1e-300)
}

/// Relative gap between the CG S-step and a dense solve.
pub fn cg_vs_dense(seed: u64) -> f64 {
    let prob = random_problem(seed, SolverParams::default());
    let (a, rhs) = dense_reflectance_system(&prob);
    let dense = a.lu().solve(&rhs).unwrap();
    let cg = prob.solver.update_s(&prob.state);
    rel(&to_vec(&cg.solution), &dense)
}

/// Relative gap between the matrix-free operator and the dense one.
pub fn operator_vs_dense(seed: u64) -> f64 {
    let prob = random_problem(seed, SolverParams::default());
    let (a, _) = dense_reflectance_system(&prob);
    let system = prob.solver.reflectance_system(prob.state.soft_mask());
    let mut src = NoiseSource::new(seed ^ 0xABCD);
    let x = uniform_field(prob.solver.shape(), &mut src, -1.0, 1.0);
    rel(&to_vec(&system.apply(&x)), &(&a * to_vec(&x)))
}

/// `(asymmetry, min eigenvalue)` of the assembled S-operator.
pub fn spd_report(seed: u64) -> (f64, f64) {
    let prob = random_problem(seed, SolverParams::default());
    let (a, _) = dense_reflectance_system(&prob);
    let asym = (&a - a.transpose()).abs().max() / a.abs().max();
    let sym = (&a + a.transpose()) * 0.5;
    let min_eig = sym.symmetric_eigenvalues().min();
    (asym, min_eig)
}

/// Max-norm gap between the spectral and dense Helmholtz solves, relative
/// to the solution size.
pub fn helmholtz_vs_dense(seed: u64, c: f64, theta: f64) -> f64 {
    let s = shape(16, 16);
    let mut src = NoiseSource::new(seed);
    let rhs = uniform_field(s, &mut src, -1.0, 1.0);
    let spectral = solve_helmholtz(&rhs, c, theta, &NeumannSpectrum::new(s)).unwrap();
    let a = DMatrix::identity(s.len(), s.len()) * c - dense_laplacian(s) * theta;
    let dense = a.lu().solve(&to_vec(&rhs)).unwrap();
    (to_vec(&spectral) - &dense).amax() / dense.amax()
}

/// Worst gap between `shrink_pair` and a brute-force minimization of
/// `½|d - z|² + λ|d|` over a 401x401 grid, in units of the grid spacing.
pub fn shrink_vs_grid(seed: u64, cases: usize) -> f64 {
    let mut src = NoiseSource::new(seed);
    let (half, n) = (3.0, 401usize);
    let h = 2.0 * half / (n - 1) as f64;
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let z = (4.0 * src.uniform() - 2.0, 4.0 * src.uniform() - 2.0);
        let lambda = 1.5 * src.uniform();
        let mut best = (f64::INFINITY, 0.0, 0.0);
        for i in 0..n {
            let dx = -half + i as f64 * h;
            for j in 0..n {
                let dy = -half + j as f64 * h;
                let f = 0.5 * ((dx - z.0).powi(2) + (dy - z.1).powi(2)) + lambda * dx.hypot(dy);
                if f < best.0 {
                    best = (f, dx, dy);
                }
            }
        }
        let (sx, sy) = shrink_pair(z.0, z.1, lambda);
        worst = worst.max((sx - best.1).hypot(sy - best.2) / h);
    }
    worst
}

/// `|<∇f, v> + <f, div v>|` relative to `‖∇f‖‖v‖`.
pub fn adjointness_gap(seed: u64, s: Shape) -> f64 {
    let mut src = NoiseSource::new(seed);
    let f = uniform_field(s, &mut src, -1.0, 1.0);
    let v = VectorField2 {
        x: uniform_field(s, &mut src, -1.0, 1.0),
        y: uniform_field(s, &mut src, -1.0, 1.0),
    };
    let g = gradient(&f);
    let lhs = g.dot(&v);
    let rhs = -f.dot(&reflsm::grid::divergence(&v));
    (lhs - rhs).abs() / (g.norm_l2() * v.norm_l2()).max(1e-300)
}

/// Same identity for the smoothed structure operator and its adjoint.
pub fn structure_adjointness_gap(seed: u64, s: Shape, sigma: f64) -> f64 {
    use reflsm::prior::{structure_op, structure_op_adjoint};
    let k = reflsm::GaussianKernel::new(sigma).unwrap();
    let mut src = NoiseSource::new(seed);
    let f = uniform_field(s, &mut src, -1.0, 1.0);
    let v = VectorField2 {
        x: uniform_field(s, &mut src, -1.0, 1.0),
        y: uniform_field(s, &mut src, -1.0, 1.0),
    };
    let lhs = structure_op(&f, &k).dot(&v);
    let rhs = f.dot(&structure_op_adjoint(&v, &k));
    (lhs - rhs).abs() / (f.norm_l2() * v.norm_l2()).max(1e-300)
}

/// Worst relative error of the analytic energy gradient against central
/// differences over `probes` random (state, block, pixel) choices.
pub fn energy_gradient_error(seed: u64, probes: usize) -> f64 {
    let mut src = NoiseSource::new(seed);
    let mut worst = 0.0f64;
    let h = 1e-6;
    for probe in 0..probes {
        let prob = random_problem(seed.wrapping_add(probe as u64 / 10), SolverParams::default());
        let grad = prob.solver.energy_gradient(&prob.state);
        let block = (src.uniform() * 3.0) as usize;
        let i = (src.uniform() * prob.solver.shape().len() as f64) as usize;
        let eval = |delta: f64| {
            let mut st = prob.state.clone();
            let f = match block {
                0 => &mut st.s_field,
                1 => &mut st.b_field,
                _ => &mut st.u_field,
            };
            f.as_mut_slice()[i] += delta;
            prob.solver.total_energy(&st).total()
        };
        let fd = (eval(h) - eval(-h)) / (2.0 * h);
        let an = match block {
            0 => grad.s.as_slice()[i],
            1 => grad.b.as_slice()[i],
            _ => grad.u.as_slice()[i],
        };
        worst = worst.max((fd - an).abs() / an.abs().max(1e-2));
    }
    worst
}

/// Largest increase of the augmented Lagrangian caused by a single block
/// update (u before clipping, B, S, d) over `states` random states.
pub fn worst_block_increase(seed: u64, states: usize) -> f64 {
    let mut worst = f64::NEG_INFINITY;
    for k in 0..states {
        let prob = random_problem(seed + k as u64, SolverParams::default());
        let solver = &prob.solver;
        let mut st = prob.state.clone();

        let w = st.soft_mask();
        let before = solver.augmented_lagrangian(&st, &w);
        st.u_field = solver.update_u(&st).unwrap().unclipped;
        worst = worst.max(solver.augmented_lagrangian(&st, &w) - before);

        let mut st = prob.state.clone();
        let w = st.soft_mask();
        let before = solver.augmented_lagrangian(&st, &w);
        st.b_field = solver.update_b(&st.s_field).unwrap();
        worst = worst.max(solver.augmented_lagrangian(&st, &w) - before);

        let before = solver.augmented_lagrangian(&st, &w);
        st.s_field = solver.update_s(&st).solution;
        worst = worst.max(solver.augmented_lagrangian(&st, &w) - before);

        let before = solver.augmented_lagrangian(&st, &w);
        st.d_field = solver.update_d(&st.s_field, &st.p_field);
        worst = worst.max(solver.augmented_lagrangian(&st, &w) - before);
    }
    worst
}

pub fn fuzz_seeds() -> Vec<Vec<u8>> {
    let small = RasterImage::new(3, 4, 255, (0..12).map(|i| i * 20).collect()).unwrap();
    let wide = RasterImage::new(2, 2, 65535, vec![0, 1, 40000, 65535]).unwrap();
    let mut commented = b"P5 # magic\n# line\n4 3\n255\n".to_vec();
    commented.extend((0..12u8).map(|i| i * 20));
    vec![write_pgm(&small), write_pgm(&wide), commented]
}

const FUZZ_TOKENS: &[&[u8]] = &[
    b"#", b"\n", b" ", b"\t", b"\r", b"0", b"-1", b"65536", b"99999999999999999999", b"P2",
    b"P5", b"abc", b"\x00", b"\xff", b"255", b"65535", b"4294967296",
];

pub fn mutate_header(src: &mut NoiseSource, base: &[u8]) -> Vec<u8> {
    let mut b = base.to_vec();
    let header_len = b.len().min(24);
    let pick = |src: &mut NoiseSource, n: usize| (src.uniform() * n as f64) as usize;
    for _ in 0..1 + pick(src, 4) {
        let at = pick(src, header_len.max(1));
        match pick(src, 5) {
            0 if !b.is_empty() => {
                let at = at.min(b.len() - 1);
                b[at] = (src.uniform() * 256.0) as u8;
            }
            1 if !b.is_empty() => {
                b.remove(at.min(b.len() - 1));
            }
            2 => {
                let tok = FUZZ_TOKENS[pick(src, FUZZ_TOKENS.len())];
                let at = at.min(b.len());
                b.splice(at..at, tok.iter().copied());
            }
            3 => b.truncate(pick(src, b.len() + 1)),
            _ => {
                let at = at.min(b.len());
                b.insert(at, b"0123456789 #\n"[pick(src, 13)]);
            }
        }
    }
    b
}
