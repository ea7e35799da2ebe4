//! `detgeom grad-check`: analytic gradients vs central finite differences
//! on seeded random box pairs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use detgeom::bbox::BBox;
use detgeom::loss::{loss, loss_value, LossKind};

use crate::config::RunConfig;
use crate::CliError;

fn sample_box(rng: &mut ChaCha8Rng) -> BBox {
    BBox::new(
        rng.gen_range(0.2..0.8),
        rng.gen_range(0.2..0.8),
        rng.gen_range(0.05..0.5),
        rng.gen_range(0.05..0.5),
    )
    .expect("sampled dims are positive")
}

pub fn run(
    config: &RunConfig,
    quiet: bool,
    kind: &str,
    n: usize,
    tol: f64,
    step: f64,
    seed_flag: Option<u64>,
) -> Result<(), CliError> {
    if tol <= 0.0 || !tol.is_finite() {
        return Err(CliError::usage(format!("--tol must be > 0, got {tol}")));
    }
    if step <= 0.0 || !step.is_finite() {
        return Err(CliError::usage(format!("--step must be > 0, got {step}")));
    }
    let kinds: Vec<LossKind> = if kind.eq_ignore_ascii_case("all") {
        LossKind::ALL.to_vec()
    } else {
        vec![kind
            .parse()
            .map_err(|e| CliError::usage(format!("--kind: {e}")))?]
    };
    if n == 0 {
        println!("warning: 0 samples requested; vacuous pass");
        return Ok(());
    }
    let seed = seed_flag.or(config.seed).unwrap_or(42);

    let mut all_pass = true;
    for kind in kinds {
        let mut spec = config.loss;
        spec.kind = kind;
        spec.validate()
            .map_err(|e| CliError::usage(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(kind as u64));
        let mut worst: f64 = 0.0;
        let mut failures = 0usize;
        let mut skipped = 0usize;
        let mut checked = 0usize;
        while checked < n {
            let gt = sample_box(&mut rng);
            let pred = sample_box(&mut rng);
            let result = loss(&gt, &pred, &spec).map_err(|e| CliError::usage(e.to_string()))?;
            if result.nonsmooth {
                skipped += 1;
                continue;
            }
            let analytic = result.grad.expect("gradient always computed");
            let p = pred.params();
            let mut pair_worst: f64 = 0.0;
            for i in 0..4 {
                let eval = |v: f64| -> f64 {
                    let mut q = p;
                    q[i] = v;
                    let b = BBox::new(q[0], q[1], q[2], q[3]).expect("perturbed box valid");
                    loss_value(&gt, &b, &spec).expect("spec already validated")
                };
                let fd = (eval(p[i] + step) - eval(p[i] - step)) / (2.0 * step);
                let scale = analytic[i].abs().max(fd.abs()).max(1.0);
                pair_worst = pair_worst.max((analytic[i] - fd).abs() / scale);
            }
            worst = worst.max(pair_worst);
            if pair_worst > tol {
                failures += 1;
                if failures <= 3 && !quiet {
                    println!("  FAIL {kind}: rel err {pair_worst:.3e} on gt={gt:?} pred={pred:?}");
                }
            }
            checked += 1;
        }
        all_pass &= failures == 0;
        if !quiet {
            println!(
                "{kind}: {} pairs, worst rel err {worst:.3e}, {failures} failures, {skipped} non-smooth skipped",
                n
            );
        }
    }
    if all_pass {
        if !quiet {
            println!("grad-check PASS");
        }
        Ok(())
    } else {
        Err(CliError::runtime("gradient check failed".to_string()))
    }
}
