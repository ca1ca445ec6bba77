use jcas_core::tradeoff::*;
use jcas_core::{GaussMarkovModel, Matrix, NoiseGain};
use proptest::prelude::*;

fn model_from(a: [f64; 4], l: [f64; 3], r: f64) -> GaussMarkovModel {
    let a = Matrix::from_row_slice(2, 2, &a);
    let lq = Matrix::from_row_slice(2, 2, &[l[0], 0.0, l[1], l[2]]);
    let q = &lq * lq.transpose() + Matrix::identity(2, 2) * 0.01;
    GaussMarkovModel::new(a, Matrix::identity(2, 2), q, Matrix::identity(2, 2) * r).unwrap()
}

fn gamma_grid() -> Vec<NoiseGain> {
    let mut g: Vec<NoiseGain> = log_grid(1.0, 1e4, 25).into_iter().map(|v| NoiseGain::new(v).unwrap()).collect();
    g.push(NoiseGain::Erased);
    g
}

#[test]
fn rates_are_monotone() {
    let ch = ChannelSpec::Gaussian { snr_db: 1.75 };
    let lambdas = linear_grid(0.0, 1.0, 101);
    let rates: Vec<f64> = lambdas.iter().map(|&l| bs_rate(&ch, l).unwrap()).collect();
    let step = rates[0] - rates[1];
    for w in rates.windows(2) {
        assert!(w[1] < w[0]);
        assert!((w[0] - w[1] - step).abs() < 1e-12, "bs_rate is affine in lambda");
    }
    let mb: Vec<f64> = gamma_grid().into_iter().map(|g| mb_rate(&ch, g).unwrap()).collect();
    assert!(mb.windows(2).all(|w| w[1] >= w[0]));
}

#[test]
fn curve_endpoints_share_rates() {
    let model = GaussMarkovModel::scalar(-1.15, 1.0, 0.2, 1.5);
    for ch in [ChannelSpec::Gaussian { snr_db: 1.75 }, ChannelSpec::Gaussian { snr_db: 20.0 }] {
        let bs = bs_curve(&model, &ch, &[0.0, 1.0]).unwrap();
        let mb = mb_curve(&model, &ch, &[NoiseGain::Finite(1.0), NoiseGain::Erased]).unwrap();
        let rate_at = |pts: &[RateDistortionPoint], param: f64| pts.iter().find(|p| p.param == param).unwrap().rate;
        assert_eq!(rate_at(&bs.inner, 1.0), 0.0);
        assert_eq!(rate_at(&mb, 1.0), 0.0);
        assert_eq!(rate_at(&bs.outer, 0.0), ch.full_capacity());
        assert_eq!(rate_at(&mb, f64::INFINITY), ch.full_capacity());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn inner_never_left_of_outer(
        a in prop::array::uniform4(-1.2f64..1.2),
        l in prop::array::uniform3(-1.0f64..1.0),
        r in 0.2f64..3.0,
    ) {
        let model = model_from(a, l, r);
        let ch = ChannelSpec::Noiseless { c0: 1.0 };
        let grid = linear_grid(0.0, 1.0, 21);
        let curve = bs_curve(&model, &ch, &grid).unwrap();
        let tr_q = model.q().trace();
        for lambda in &grid {
            let inner = curve.inner.iter().find(|p| p.param == *lambda).unwrap();
            let outer = curve.outer.iter().find(|p| p.param == *lambda).unwrap();
            prop_assert!(inner.distortion >= outer.distortion - 1e-10, "lambda {lambda}");
            if inner.is_finite() {
                prop_assert!(*lambda >= curve.critical_lambda - 1e-9);
            }
        }
        let mb = mb_curve(&model, &ChannelSpec::Gaussian { snr_db: 5.0 }, &gamma_grid()).unwrap();
        for p in curve.inner.iter().chain(&curve.outer).chain(&mb) {
            prop_assert!(p.rate >= 0.0);
            if p.is_finite() {
                prop_assert!(p.distortion >= tr_q - 1e-10);
            }
        }
    }
}
