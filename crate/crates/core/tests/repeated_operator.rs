//! Measuring and then kicking with the same system operator leaves a
//! quadratic potential behind: with S₁ = S₂ = x the feedback term collapses
//! to −(i/ħ)M̃₁₂[x², ρ].

use collision_core::dynamics::{fit_generator, Candidate};
use collision_core::engine::generator_estimate;
use collision_core::linalg::{ops, CMat, TensorLayout, C64};
use collision_core::model::{
    AncillaOperator, AncillaSpec, CouplingSchedule, CycleSpec, PreparationFamily, SubInteraction, TauLaw,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn low_level_state(dim: usize, levels: usize, rng: &mut ChaCha8Rng) -> CMat {
    let a = CMat::from_fn(levels, levels, |_, _| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
    let small = &a * a.adjoint();
    let tr = small.trace();
    let mut out = CMat::zeros(dim, dim);
    out.view_mut((0, 0), (levels, levels)).copy_from(&(small / tr));
    out
}

#[test]
fn same_operator_feedback_is_a_quadratic_potential() {
    let (d, width, g2) = (16, 0.5, 0.6);
    let x = ops::position(d, 1.0);
    let p = ops::momentum(d, 1.0, 1.0);
    let s0 = &p * &p * C64::from(0.5);
    let cycle = CycleSpec {
        system_layout: TensorLayout::single(d),
        s0: s0.clone(),
        ancillas: vec![AncillaSpec {
            preparation: PreparationFamily::pure_gaussian(
                12,
                TauLaw::power(width, -1.0),
                TauLaw::constant(0.0),
                TauLaw::constant(0.0),
            ),
            m0: AncillaOperator::zero(12),
        }],
        substeps: vec![
            vec![SubInteraction {
                s_op: x.clone(),
                ancilla: 0,
                m_op: AncillaOperator::Momentum,
                schedule: CouplingSchedule::strong(1.0),
            }],
            vec![SubInteraction {
                s_op: x.clone(),
                ancilla: 0,
                m_op: AncillaOperator::Position,
                schedule: CouplingSchedule::constant(g2),
            }],
        ],
        hbar: 1.0,
    };
    cycle.validate().unwrap();

    let x2 = &x * &x;
    let cands = vec![
        Candidate::hamiltonian("s0", s0, 1.0),
        Candidate::hamiltonian("x", x.clone(), 1.0),
        Candidate::hamiltonian("x2", x2, 1.0),
        Candidate::dissipator("xx", x.clone(), x, 1.0),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let samples: Vec<(CMat, CMat)> = (0..4)
        .map(|_| {
            let rho = low_level_state(d, 5, &mut rng);
            let est = generator_estimate(&cycle, &rho, &[0.004, 0.002, 0.001]).unwrap();
            (rho, est.rate)
        })
        .collect();
    let fit = fit_generator(&samples, &cands).unwrap();
    assert!(fit.relative_residual < 1e-4, "residual {}", fit.relative_residual);

    // M̃₁₂ = (τ′ḡ₁ḡ₂/4ħ)⟨i[p, x]⟩ = ḡ₂/4
    let potential = fit.get("x2").unwrap();
    assert!((potential - g2 / 4.0).abs() < 1e-3, "{potential}");
    assert!((fit.get("s0").unwrap() - 1.0).abs() < 1e-3);
    assert!(fit.get("x").unwrap().abs() < 1e-3);
    // ½(ħ²/4D + ḡ₂²D/4)
    let rate = 0.5 * (1.0 / (4.0 * width) + g2 * g2 * width / 4.0);
    assert!((fit.get("xx").unwrap() - rate).abs() < 1e-3 * rate, "{}", fit.get("xx").unwrap());
}
