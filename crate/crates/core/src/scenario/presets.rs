//! Built-in scenarios, one per regime and construction the library covers.

use super::config::*;
use crate::dynamics::Regime;
use crate::error::{Error, Result};
use crate::model::{CouplingSchedule, GridSpec, SwitchingProfile, TauLaw};

type Builder = fn() -> ScenarioConfig;

const PRESETS: &[(&str, Builder)] = &[
    ("exact-unitary-qubit", exact_unitary_qubit),
    ("weak-potential", weak_potential),
    ("zeno-qubit", zeno_qubit),
    ("finite-decoherence-gaussian", finite_decoherence_gaussian),
    ("two-substep-feedback", two_substep_feedback),
    ("milburn-caves", milburn_caves),
    ("newton-pair", newton_pair),
    ("joint-measurement-entangler", joint_measurement_entangler),
    ("magnus-symmetric-switch", magnus_symmetric_switch),
    ("magnus-ramp", magnus_ramp),
    ("filtering-ensemble", filtering_ensemble),
    ("filtering-feedback", filtering_feedback),
];

pub fn list_presets() -> Vec<&'static str> {
    PRESETS.iter().map(|(n, _)| *n).collect()
}

pub fn preset(name: &str) -> Result<ScenarioConfig> {
    PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, b)| b())
        .ok_or_else(|| Error::InvalidArgument(format!("unknown preset `{name}`; try one of {}", list_presets().join(", "))))
}

fn term(s: OperatorExpr, ancilla: usize, m: AncillaOpExpr, schedule: CouplingSchedule) -> TermConfig {
    TermConfig {
        s,
        ancilla,
        m,
        schedule,
    }
}

fn gaussian_grid(mean: TauLaw, variance: TauLaw) -> AncillaConfig {
    AncillaConfig {
        preparation: PreparationExpr::MomentGaussian {
            mean,
            variance,
            grid: GridSpec::default(),
        },
        m0: None,
    }
}

/// Pure Gaussian meter whose width σ scales as `width`·τ′^`exponent`.
fn meter(dim: usize, width: f64, exponent: f64) -> AncillaConfig {
    AncillaConfig {
        preparation: PreparationExpr::PureGaussian {
            dim,
            width: TauLaw::power(width, exponent),
            mean_x: TauLaw::constant(0.0),
            mean_p: TauLaw::constant(0.0),
        },
        m0: None,
    }
}

fn plus_state() -> StateExpr {
    StateExpr::Pure {
        re: vec![1.0, 1.0],
        im: vec![],
    }
}

fn base(name: &str, description: &str, system: Vec<usize>, s0: OperatorExpr) -> ScenarioConfig {
    ScenarioConfig {
        name: name.into(),
        description: description.into(),
        hbar: 1.0,
        system,
        s0,
        ancillas: vec![],
        substeps: vec![],
        initial_state: StateExpr::MaximallyMixed { dim: 1 },
        sweep: SweepConfig {
            t: 1.0,
            taus: vec![],
            ns: vec![],
            limit_taus: vec![0.1, 0.01, 0.001],
        },
        mode: Mode::Unconditional,
        ensemble: None,
        filter: None,
        outputs: vec![],
        checks: vec![],
    }
}

fn exact_unitary_qubit() -> ScenarioConfig {
    let m = OperatorExpr::Diag {
        values: vec![1.0, 1.0, -1.0],
    };
    let mut c = base(
        "exact-unitary-qubit",
        "Ancilla prepared in a degenerate eigenspace of M that its free evolution preserves",
        vec![2],
        OperatorExpr::PauliX.scaled(0.5),
    );
    c.ancillas = vec![AncillaConfig {
        preparation: PreparationExpr::Eigenstate {
            operator: m.clone(),
            eigenvalue: 1.0,
        },
        m0: Some(AncillaOpExpr::Explicit {
            matrix: OperatorExpr::Matrix {
                re: vec![vec![0.0, 1.0, 0.0], vec![1.0, 0.0, 0.0], vec![0.0, 0.0, 0.0]],
                im: vec![],
            },
        }),
    }];
    c.substeps = vec![vec![term(
        OperatorExpr::PauliZ,
        0,
        AncillaOpExpr::Explicit { matrix: m },
        CouplingSchedule::constant(0.8),
    )]];
    c.initial_state = StateExpr::Pure {
        re: vec![0.6, 0.0],
        im: vec![0.0, 0.8],
    };
    c.sweep.t = 10.0;
    c.sweep.taus = vec![0.01];
    c.outputs = vec![SeriesRequest::Purity, SeriesRequest::Element { i: 0, j: 1 }];
    c.checks = vec![
        CheckConfig::PurityPreserved { tol: 1e-9 },
        CheckConfig::Regime {
            expected: Regime::ExactUnitary,
        },
    ];
    c
}

fn weak_potential() -> ScenarioConfig {
    let mut c = base(
        "weak-potential",
        "Fixed coupling to a Gaussian ancilla; the mean field becomes a potential",
        vec![2],
        OperatorExpr::PauliX.scaled(0.5),
    );
    c.ancillas = vec![gaussian_grid(TauLaw::constant(0.3), TauLaw::constant(0.5))];
    c.substeps = vec![vec![term(
        OperatorExpr::PauliZ,
        0,
        AncillaOpExpr::GridValue,
        CouplingSchedule::constant(1.0),
    )]];
    c.initial_state = plus_state();
    c.sweep.t = 2.0;
    c.sweep.ns = vec![32, 64, 128, 256, 512, 1024, 2048];
    c.outputs = vec![
        SeriesRequest::Purity,
        SeriesRequest::Observable {
            name: "sigma_x".into(),
            operator: OperatorExpr::PauliX,
        },
    ];
    c.checks = vec![
        CheckConfig::Regime {
            expected: Regime::EffectiveUnitary,
        },
        CheckConfig::MasterConvergence { tol: 5e-3 },
        CheckConfig::DissipatorsBelow { max: 1e-12 },
    ];
    c
}

fn zeno_qubit() -> ScenarioConfig {
    let mut c = base(
        "zeno-qubit",
        "Strong coupling to a fixed-width Gaussian ancilla; coherences freeze out",
        vec![2],
        OperatorExpr::Zero { dim: 2 },
    );
    c.ancillas = vec![gaussian_grid(TauLaw::constant(0.0), TauLaw::constant(0.09))];
    c.substeps = vec![vec![term(
        OperatorExpr::PauliZ,
        0,
        AncillaOpExpr::GridValue,
        CouplingSchedule::strong(1.0),
    )]];
    c.initial_state = plus_state();
    c.sweep.t = 1.0;
    c.sweep.taus = vec![0.05];
    c.outputs = vec![SeriesRequest::Coherence];
    c.checks = vec![
        CheckConfig::ZenoCurve { tol: 1e-9 },
        CheckConfig::Regime {
            expected: Regime::Zeno,
        },
    ];
    c
}

fn finite_decoherence_gaussian() -> ScenarioConfig {
    let mut c = base(
        "finite-decoherence-gaussian",
        "Strong coupling with mean ∝ τ′ and variance ∝ τ′: a finite potential plus dephasing",
        vec![2],
        OperatorExpr::PauliX.scaled(0.5),
    );
    c.ancillas = vec![gaussian_grid(
        TauLaw::power(0.4, 1.0),
        TauLaw::new(vec![(0.8, 1.0), (-0.16, 2.0)]),
    )];
    c.substeps = vec![vec![term(
        OperatorExpr::PauliZ,
        0,
        AncillaOpExpr::GridValue,
        CouplingSchedule::strong(1.0),
    )]];
    c.initial_state = plus_state();
    c.sweep.t = 2.0;
    c.sweep.taus = vec![0.02, 0.01, 0.005, 0.0025];
    c.outputs = vec![SeriesRequest::Purity, SeriesRequest::Coherence];
    c.checks = vec![
        CheckConfig::Regime {
            expected: Regime::FiniteDecoherence,
        },
        CheckConfig::MasterConvergence { tol: 5e-3 },
        CheckConfig::PurityDrop { min: 0.05 },
    ];
    c
}

fn two_substep_feedback() -> ScenarioConfig {
    let mut c = base(
        "two-substep-feedback",
        "Momentum then position coupling to one meter: measurement followed by feedback",
        vec![2],
        OperatorExpr::PauliX.scaled(0.3),
    );
    c.ancillas = vec![AncillaConfig {
        m0: Some(AncillaOpExpr::Scaled {
            factor: 0.2,
            of: Box::new(AncillaOpExpr::Position),
        }),
        ..meter(12, 0.5, -1.0)
    }];
    c.substeps = vec![
        vec![term(OperatorExpr::PauliZ, 0, AncillaOpExpr::Momentum, CouplingSchedule::strong(1.0))],
        vec![term(OperatorExpr::PauliX, 0, AncillaOpExpr::Position, CouplingSchedule::constant(0.6))],
    ];
    c.initial_state = StateExpr::Basis { dim: 2, index: 0 };
    c.sweep.t = 1.0;
    c.sweep.taus = vec![0.02, 0.01, 0.005];
    c.outputs = vec![
        SeriesRequest::Purity,
        SeriesRequest::Observable {
            name: "sigma_z".into(),
            operator: OperatorExpr::PauliZ,
        },
    ];
    c.checks = vec![
        CheckConfig::Regime {
            expected: Regime::FiniteDecoherence,
        },
        CheckConfig::FeedbackBound,
        CheckConfig::MasterConvergence { tol: 2e-2 },
    ];
    c
}

fn milburn_caves() -> ScenarioConfig {
    let d = 24;
    let x = OperatorExpr::PositionTruncated { dim: d, length: 1.0 };
    let p = OperatorExpr::MomentumTruncated { dim: d, length: 1.0 };
    let mut c = base(
        "milburn-caves",
        "Free particle continuously measured in position by a meter that also feeds back its position",
        vec![d],
        OperatorExpr::Product {
            factors: vec![p.clone(), p.clone()],
        }
        .scaled(0.5),
    );
    c.ancillas = vec![meter(8, 1.0, -1.0)];
    c.substeps = vec![
        vec![term(
            x.scaled(std::f64::consts::SQRT_2),
            0,
            AncillaOpExpr::Momentum,
            CouplingSchedule::strong(1.0),
        )],
        // restoring sign: the fed-back kick opposes the measured displacement
        vec![term(
            p.scaled(-1.0),
            0,
            AncillaOpExpr::Position,
            CouplingSchedule::constant(std::f64::consts::SQRT_2),
        )],
    ];
    c.initial_state = StateExpr::Coherent {
        dim: d,
        re: 0.5,
        im: 0.0,
    };
    c.sweep.t = 1.0;
    c.sweep.taus = vec![0.04, 0.02, 0.01, 0.005];
    c.outputs = vec![
        SeriesRequest::Purity,
        SeriesRequest::Observable {
            name: "x".into(),
            operator: OperatorExpr::PositionTruncated { dim: d, length: 1.0 },
        },
    ];
    c.checks = vec![
        CheckConfig::Leakage { max: 1e-6 },
        CheckConfig::FeedbackBound,
        CheckConfig::MasterConvergence { tol: 2e-2 },
    ];
    c
}

fn newton_pair() -> ScenarioConfig {
    let d = 8;
    let x = |f: usize| OperatorExpr::PositionTruncated { dim: d, length: 1.0 }.embed(f);
    let mut c = base(
        "newton-pair",
        "Two oscillators coupled only through two shared meters; a mutual x₁x₂ force emerges",
        vec![d, d],
        OperatorExpr::Zero { dim: d * d },
    );
    c.ancillas = vec![meter(8, 1.0, -1.0), meter(8, 1.0, -1.0)];
    c.substeps = vec![
        vec![
            term(x(0), 0, AncillaOpExpr::Momentum, CouplingSchedule::strong(1.0)),
            term(x(1), 1, AncillaOpExpr::Momentum, CouplingSchedule::strong(1.0)),
        ],
        vec![
            term(x(0), 1, AncillaOpExpr::Position, CouplingSchedule::constant(1.0)),
            term(x(1), 0, AncillaOpExpr::Position, CouplingSchedule::constant(1.0)),
        ],
    ];
    c.initial_state = StateExpr::Product {
        factors: vec![
            StateExpr::Coherent {
                dim: d,
                re: 0.4,
                im: 0.0,
            },
            StateExpr::Coherent {
                dim: d,
                re: 0.0,
                im: 0.3,
            },
        ],
    };
    c.sweep.t = 0.5;
    c.sweep.taus = vec![0.02, 0.01, 0.005];
    c.outputs = vec![SeriesRequest::Purity, SeriesRequest::Negativity { factor: 0 }];
    c.checks = vec![
        CheckConfig::FeedbackBound,
        CheckConfig::MasterConvergence { tol: 2e-2 },
    ];
    c
}

fn joint_measurement_entangler() -> ScenarioConfig {
    let mut c = base(
        "joint-measurement-entangler",
        "A joint σx⊗σx coupling to one ancilla yields an entangling effective Hamiltonian",
        vec![2, 2],
        OperatorExpr::Zero { dim: 4 },
    );
    c.ancillas = vec![gaussian_grid(TauLaw::constant(0.8), TauLaw::constant(0.3))];
    c.substeps = vec![vec![term(
        OperatorExpr::Kron {
            factors: vec![OperatorExpr::PauliX, OperatorExpr::PauliX],
        },
        0,
        AncillaOpExpr::GridValue,
        CouplingSchedule::constant(1.0),
    )]];
    c.initial_state = StateExpr::Basis { dim: 4, index: 0 };
    c.sweep.t = 1.0;
    c.sweep.taus = vec![0.001];
    c.outputs = vec![SeriesRequest::Negativity { factor: 0 }, SeriesRequest::Purity];
    c.checks = vec![
        CheckConfig::Regime {
            expected: Regime::EffectiveUnitary,
        },
        CheckConfig::DissipatorsBelow { max: 1e-12 },
        CheckConfig::Negativity { factor: 0, min: 0.01 },
    ];
    c
}

fn magnus_case(name: &str, description: &str, profile: SwitchingProfile, expected: f64) -> ScenarioConfig {
    let mut c = base(
        name,
        description,
        vec![2],
        OperatorExpr::PauliX,
    );
    c.ancillas = vec![gaussian_grid(TauLaw::constant(0.5), TauLaw::constant(0.2))];
    c.substeps = vec![vec![term(
        OperatorExpr::PauliZ,
        0,
        AncillaOpExpr::GridValue,
        CouplingSchedule::constant(1.0).with_profile(profile),
    )]];
    c.initial_state = plus_state();
    c.sweep.t = 1.0;
    c.sweep.taus = vec![0.01];
    c.outputs = vec![SeriesRequest::Purity];
    c.checks = vec![CheckConfig::MagnusSlope {
        expected,
        tol: 0.2,
        taus: vec![0.2, 0.1, 0.05, 0.025],
        slices: 64,
    }];
    c
}

fn magnus_symmetric_switch() -> ScenarioConfig {
    magnus_case(
        "magnus-symmetric-switch",
        "Symmetric switching inside each collision: the stepped and mean propagators differ at third order",
        SwitchingProfile::SymmetricBump,
        3.0,
    )
}

fn magnus_ramp() -> ScenarioConfig {
    magnus_case(
        "magnus-ramp",
        "Linearly ramped coupling: the second Magnus term survives and the defect is second order",
        SwitchingProfile::Ramp,
        2.0,
    )
}

fn filtering_base(name: &str, description: &str) -> ScenarioConfig {
    let mut c = base(name, description, vec![2], OperatorExpr::PauliX.scaled(0.4));
    c.ancillas = vec![meter(20, 1.0, -1.0)];
    c.substeps = vec![vec![term(
        OperatorExpr::PauliZ,
        0,
        AncillaOpExpr::Momentum,
        CouplingSchedule::strong(1.0),
    )]];
    c.initial_state = plus_state();
    c.sweep.t = 1.0;
    c.sweep.taus = vec![0.01];
    c.mode = Mode::Both;
    c.ensemble = Some(EnsembleConfig { n_traj: 512, seed: 7 });
    c.filter = Some(FilterConfig::default());
    c
}

fn filtering_ensemble() -> ScenarioConfig {
    let mut c = filtering_base(
        "filtering-ensemble",
        "Conditional trajectories from projective meter readout; their mean is the unconditional state",
    );
    c.outputs = vec![
        SeriesRequest::EnsembleElement { i: 0, j: 1 },
        SeriesRequest::Record { trajectories: 3 },
    ];
    c.checks = vec![
        CheckConfig::Completeness { tol: 1e-12 },
        CheckConfig::EnsembleBand { slack: 0.0 },
    ];
    c
}

fn filtering_feedback() -> ScenarioConfig {
    let mut c = filtering_base(
        "filtering-feedback",
        "Conditional trajectories with the measured current fed back through σy",
    );
    c.filter = Some(FilterConfig {
        feedback: Some(FeedbackConfig {
            s2: OperatorExpr::PauliY,
            g2: 0.5,
        }),
        ..FilterConfig::default()
    });
    c.outputs = vec![
        SeriesRequest::EnsembleElement { i: 0, j: 1 },
        SeriesRequest::EnsembleElement { i: 0, j: 0 },
        SeriesRequest::Record { trajectories: 3 },
    ];
    c.checks = vec![
        CheckConfig::Completeness { tol: 1e-12 },
        CheckConfig::FeedbackBand { slack: 1e-2 },
    ];
    c
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_preset_round_trips_and_builds() {
        for name in list_presets() {
            let c = preset(name).unwrap();
            assert_eq!(c.name, name);
            let back = ScenarioConfig::from_json(&c.to_json(), name).unwrap();
            assert_eq!(back, c);
            c.cycle().unwrap();
            c.initial_state().unwrap();
        }
        assert!(preset("nope").is_err());
    }
}
