mod common;

use common::*;
use s3fnet::fusion::FusionKind;

#[test]
fn every_layer_kind() {
    for (nodes, input, batch) in layer_cases() {
        for seed in GRAD_SEEDS {
            let err = stack_grad_error(&nodes, &input, batch, seed);
            assert!(err < LAYER_TOL, "{nodes:?} on {input:?} seed {seed}: rel err {err:.3e}");
        }
    }
}

#[test]
fn weighted_cross_entropy_gradient() {
    for seed in GRAD_SEEDS {
        let err = cross_entropy_grad_error(seed);
        assert!(err < 1e-6, "seed {seed}: {err:.3e}");
    }
}

#[test]
fn fusion_heads() {
    let kinds = [
        FusionKind::Concat,
        FusionKind::Bilinear { normalize: false },
        FusionKind::Bilinear { normalize: true },
    ];
    for kind in kinds {
        for seed in GRAD_SEEDS {
            let err = fusion_grad_error(kind, seed);
            assert!(err < LAYER_TOL, "{kind:?} seed {seed}: {err:.3e}");
        }
    }
}

#[test]
fn full_models_end_to_end() {
    for family in ALL_FAMILIES {
        for seed in GRAD_SEEDS {
            let err = model_grad_error(family, seed);
            assert!(err < MODEL_TOL, "{family:?} seed {seed}: {err:.3e}");
        }
    }
}
