use mia_core::metrics::{auc_roc, bootstrap_labeled, BootstrapConfig};
use rand::Rng;

use crate::{ensure, Check};

fn auc(m: &[f64], n: &[f64]) -> Result<f64, String> {
    auc_roc(m, n).map_err(|e| e.to_string())
}

pub fn check() -> Check {
    let separable = auc(&[0.1, 0.2, 0.3], &[1.0, 2.0, 3.0, 4.0])?;
    ensure(separable == 1.0, || format!("separable fixture gave {separable}"))?;
    let ties = auc(&[2.0; 5], &[2.0; 7])?;
    ensure(ties == 0.5, || format!("all-tie fixture gave {ties}"))?;
    // lower is member: (1,2) (1,4) (3,4) rank correctly, (3,2) does not
    let interleaved = auc(&[1.0, 3.0], &[2.0, 4.0])?;
    ensure(interleaved == 0.75, || format!("2x2 interleaved fixture gave {interleaved}"))?;

    let mut r = mia_core::rng::stream(5, "acceptance-metrics", 0);
    let m: Vec<f64> = (0..300).map(|_| r.random_range(0.0..3.0) + 0.3).collect();
    let n: Vec<f64> = (0..300).map(|_| r.random_range(0.0..3.0)).collect();
    let base = auc(&m, &n)?;
    type Transform = (&'static str, fn(f64) -> f64);
    let transforms: [Transform; 4] = [
        ("exp", f64::exp),
        ("cube", |x| x * x * x + 5.0 * x),
        ("affine", |x| 7.5 * x - 100.0),
        ("log1p", f64::ln_1p),
    ];
    for (name, f) in transforms {
        let t = auc(&m.iter().map(|&x| f(x)).collect::<Vec<_>>(), &n.iter().map(|&x| f(x)).collect::<Vec<_>>())?;
        ensure(t == base, || format!("{name} transform moved AUC {base} -> {t}"))?;
    }

    let mut r = mia_core::rng::stream(0, "acceptance-null-scores", 0);
    let samples: Vec<(f64, bool)> = (0..1000).map(|i| (r.random::<f64>(), i < 500)).collect();
    let cfg = BootstrapConfig {
        n_boot: 1000,
        seed: 0,
        ..BootstrapConfig::default()
    };
    let rep = bootstrap_labeled("null", &samples, &cfg).map_err(|e| e.to_string())?;
    ensure((rep.bootstrap_mean_auc - 0.5).abs() <= 0.04, || {
        format!("label-independent scores gave bootstrap mean AUC {}", rep.bootstrap_mean_auc)
    })?;
    Ok(format!(
        "separable 1.0, ties 0.5, interleaved 0.75; monotone-invariant ({base:.4}); null bootstrap mean {:.4} (500/500, 1000 boots)",
        rep.bootstrap_mean_auc
    ))
}
