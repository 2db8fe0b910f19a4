use alphacap_core::engine::{default_support_radius, measure_symmetry, DiagnosticsSpec, StopSpec};
use alphacap_core::grid::{dist, Point};
use alphacap_core::init::{Ball, InitialCondition};
use alphacap_core::symmetry::{reflect_point, Hyperplane};
use alphacap_core::{
    apply_sharpening, convolve, Backend, Engine, GridSpec, Kernel, RuleKind, ScalarField,
    SharpeningRule,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_field(spec: GridSpec, seed: u64) -> ScalarField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = (0..spec.len()).map(|_| rng.random::<f64>()).collect();
    ScalarField::from_values(spec, values, 0).unwrap()
}

fn grid(dim: usize) -> GridSpec {
    match dim {
        1 => GridSpec::new(1, 64, 3.0).unwrap(),
        2 => GridSpec::new(2, 24, 3.0).unwrap(),
        _ => GridSpec::new(3, 10, 3.0).unwrap(),
    }
}

/// `h^d Σ g` over every offset realizable on the grid.
fn discrete_kernel_mass(kernel: &Kernel, spec: &GridSpec) -> f64 {
    let n = spec.cells_per_axis() as i64;
    let h = spec.cell_size();
    let dim = spec.dim();
    let span = 2 * n - 1;
    let total = span.pow(dim as u32);
    let mut sum = 0.0;
    for idx in 0..total {
        let mut rest = idx;
        let mut r2 = 0.0;
        for _ in 0..dim {
            let k = rest % span - (n - 1);
            rest /= span;
            r2 += (k as f64 * h).powi(2);
        }
        sum += kernel.eval_sq(r2);
    }
    sum * spec.cell_volume()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn reflection_is_an_isometric_involution(
        normal in prop::array::uniform3(-1.0f64..1.0),
        offset in -2.0f64..2.0,
        x in prop::array::uniform3(-3.0f64..3.0),
        y in prop::array::uniform3(-3.0f64..3.0),
    ) {
        prop_assume!(normal.iter().map(|c| c * c).sum::<f64>() > 1e-3);
        let h = Hyperplane::new(normal, offset).unwrap();
        let back = reflect_point(&reflect_point(&x, &h), &h);
        prop_assert!(dist(&back, &x) < 1e-12);
        let d0 = dist(&x, &y);
        let d1 = dist(&reflect_point(&x, &h), &reflect_point(&y, &h));
        prop_assert!((d0 - d1).abs() < 1e-12);
        prop_assert!((h.signed_distance(&reflect_point(&x, &h)) + h.signed_distance(&x)).abs() < 1e-12);
    }

    #[test]
    fn convolution_is_linear(
        dim in 1usize..=3,
        seeds in (0u64..1000, 0u64..1000),
        a in 0.0f64..1.0,
        b in 0.0f64..1.0,
        sigma in 0.2f64..1.0,
    ) {
        prop_assume!(a + b <= 1.0);
        let spec = grid(dim);
        let k = Kernel::gaussian(sigma).unwrap();
        let (p, q) = (random_field(spec, seeds.0), random_field(spec, seeds.1 + 1000));
        let mix: Vec<f64> = p.values().iter().zip(q.values()).map(|(x, y)| a * x + b * y).collect();
        let mix = ScalarField::from_values(spec, mix, 0).unwrap();
        let lhs = convolve(&mix, &k, Backend::Spectral).unwrap();
        let fp = convolve(&p, &k, Backend::Spectral).unwrap();
        let fq = convolve(&q, &k, Backend::Spectral).unwrap();
        let scale = fp.max_abs().max(fq.max_abs());
        for ((l, x), y) in lhs.values().iter().zip(fp.values()).zip(fq.values()) {
            prop_assert!((l - (a * x + b * y)).abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn convolution_mass_is_bounded_by_kernel_mass(
        dim in 1usize..=3,
        seed in 0u64..1000,
        sigma in 0.2f64..2.0,
    ) {
        let spec = grid(dim);
        let k = Kernel::gaussian(sigma).unwrap();
        let psi = random_field(spec, seed);
        let f = convolve(&psi, &k, Backend::Spectral).unwrap();
        let bound = psi.mass() * discrete_kernel_mass(&k, &spec);
        prop_assert!(f.mass() <= bound * (1.0 + 1e-9));
    }

    #[test]
    fn integer_shifts_commute_with_convolution(
        shift in (-4i64..=4, -4i64..=4),
        seed in 0u64..1000,
    ) {
        // Inputs live in the middle of the grid so shifted copies stay inside;
        // the kernel is narrow enough that the truncated tail is negligible.
        let spec = GridSpec::new(2, 32, 4.0).unwrap();
        let k = Kernel::gaussian(0.5).unwrap();
        prop_assert!(k.tail_fraction(2, 8.0) < 1e-8);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 32i64;
        let mut base = vec![0.0; spec.len()];
        let mut moved = vec![0.0; spec.len()];
        for i in 8..24 {
            for j in 8..24 {
                let v: f64 = rng.random();
                base[(j * n + i) as usize] = v;
                moved[((j + shift.1) * n + (i + shift.0)) as usize] = v;
            }
        }
        let f = convolve(&ScalarField::from_values(spec, base, 0).unwrap(), &k, Backend::Spectral).unwrap();
        let g = convolve(&ScalarField::from_values(spec, moved, 0).unwrap(), &k, Backend::Spectral).unwrap();
        let scale = f.max_abs();
        for i in 0..n {
            for j in 0..n {
                let (si, sj) = (i - shift.0, j - shift.1);
                if (0..n).contains(&si) && (0..n).contains(&sj) {
                    let a = g.values()[(j * n + i) as usize];
                    let b = f.values()[(sj * n + si) as usize];
                    prop_assert!((a - b).abs() <= 1e-12 * scale);
                }
            }
        }
    }

    #[test]
    fn volume_threshold_hits_alpha_on_random_fields(
        dim in 1usize..=3,
        seed in 0u64..1000,
        fraction in 0.01f64..0.6,
    ) {
        let spec = grid(dim);
        let f = random_field(spec, seed);
        let alpha = fraction * spec.domain_volume();
        let rule = SharpeningRule::new(RuleKind::VolumeThreshold { alpha }, 10.0).unwrap();
        let out = apply_sharpening(&f, &rule).unwrap();
        prop_assert!((out.field.mass() - alpha).abs() <= 1e-12 * alpha);
        prop_assert!(out.field.values().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn pointwise_rules_are_monotone(
        seed in 0u64..1000,
        slope in 0.5f64..8.0,
        intercept in -1.0f64..0.5,
        bump in 0.0f64..0.3,
    ) {
        let spec = grid(2);
        let f = random_field(spec, seed);
        let raised: Vec<f64> = f.values().iter().map(|v| v + bump).collect();
        let raised = ScalarField::from_values(spec, raised, 0).unwrap();
        let rule = SharpeningRule::new(RuleKind::ClippedLinear { slope, intercept }, 10.0).unwrap();
        let a = apply_sharpening(&f, &rule).unwrap().field;
        let b = apply_sharpening(&raised, &rule).unwrap().field;
        prop_assert!(a.values().iter().zip(b.values()).all(|(x, y)| x <= y));
    }
}

#[test]
fn spectral_convolution_is_bit_deterministic() {
    let spec = grid(3);
    let psi = random_field(spec, 5);
    let k = Kernel::inverse_square();
    let a = convolve(&psi, &k, Backend::Spectral).unwrap();
    let b = convolve(&psi, &k, Backend::Spectral).unwrap();
    assert_eq!(a.values(), b.values());
}

/// On a converged field whose slabs are all at most `ε/3` wide, a point that
/// is farther from the center by more than `2ε/3 + 2h` never carries more
/// activity.
#[test]
fn converged_field_decreases_along_rays() {
    let spec = GridSpec::new(2, 128, 4.0).unwrap();
    let h = spec.cell_size();
    let psi0 = InitialCondition::UnionOfBalls {
        balls: vec![
            Ball { center: vec![-1.0, 0.0], radius: 1.0 },
            Ball { center: vec![1.5, 0.0], radius: 0.6 },
        ],
    }
    .render(spec)
    .unwrap();
    let alpha = psi0.mass();
    let rule = SharpeningRule::new(RuleKind::VolumeThreshold { alpha }, default_support_radius(&psi0)).unwrap();
    let engine = Engine::new(&Kernel::gaussian(0.25).unwrap(), rule, spec, Backend::Spectral).unwrap();
    let run = engine.run(&psi0, &StopSpec::max_steps(60), &DiagnosticsSpec::none()).unwrap();
    let psi = &run.field;
    let rec = measure_symmetry(psi, &DiagnosticsSpec::every(1, 2)).unwrap();
    let p = rec.center.unwrap();
    let eps = 3.0 * rec.slab_width.max(h);
    let margin = 2.0 * eps / 3.0 + 2.0 * h;

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut compared = 0;
    for _ in 0..20_000 {
        let (i, j) = (rng.random_range(0..spec.len()), rng.random_range(0..spec.len()));
        let (x, y): (Point, Point) = (spec.center(i), spec.center(j));
        if dist(&x, &p) - dist(&y, &p) > margin {
            compared += 1;
            assert!(
                psi.values()[i] <= psi.values()[j] + 1e-9,
                "x = {x:?} ({}) vs y = {y:?} ({})",
                psi.values()[i],
                psi.values()[j]
            );
        }
    }
    assert!(compared > 5000);
}
