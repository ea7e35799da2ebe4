//! `detgeom involution-check`: windowed involution vs the five-loop oracle.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use detgeom::involution::{
    involute, involute_reference, InvolutionError, InvolutionKernel, Tensor4,
};

use crate::CliError;

const TOLERANCE: f64 = 1e-6;

fn map_involution_error(e: InvolutionError) -> CliError {
    match e {
        InvolutionError::Io(_) => CliError::runtime(e.to_string()),
        _ => CliError::usage(e.to_string()),
    }
}

fn parse_dims(arg: &str) -> Result<(usize, usize, usize, usize), CliError> {
    let parts: Vec<&str> = arg.split(',').map(str::trim).collect();
    if parts.len() != 4 {
        return Err(CliError::usage(format!(
            "--dims: expected `n,c,h,w`, got `{arg}`"
        )));
    }
    let mut vals = [0usize; 4];
    for (i, part) in parts.iter().enumerate() {
        vals[i] = part
            .parse()
            .map_err(|_| CliError::usage(format!("--dims: invalid `{part}`")))?;
    }
    Ok((vals[0], vals[1], vals[2], vals[3]))
}

#[allow(clippy::too_many_arguments)]
pub fn run(
    quiet: bool,
    fixture: Option<&Path>,
    random: bool,
    dims: Option<&str>,
    k: usize,
    g: usize,
    kernel_choice: Option<&str>,
    seed: u64,
) -> Result<(), CliError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = match (fixture, random) {
        (Some(path), _) => Tensor4::load(path).map_err(map_involution_error)?,
        (None, true) => {
            let dims = parse_dims(dims.ok_or_else(|| {
                CliError::usage("--random needs --dims n,c,h,w".to_string())
            })?)?;
            Tensor4::random(dims, &mut rng).map_err(map_involution_error)?
        }
        (None, false) => {
            return Err(CliError::usage(
                "pass either --fixture <path> or --random --dims n,c,h,w".to_string(),
            ))
        }
    };
    let (_, c, h, w) = x.dims();
    if c % g != 0 {
        return Err(CliError::usage(format!(
            "channels ({c}) not divisible by groups ({g})"
        )));
    }

    let kernel_choice = kernel_choice.unwrap_or(if fixture.is_some() {
        "identity"
    } else {
        "random"
    });
    let kernel = match kernel_choice {
        "identity" => InvolutionKernel::delta(h, w, k, g).map_err(map_involution_error)?,
        "random" => {
            InvolutionKernel::random((h, w, k, g), &mut rng).map_err(map_involution_error)?
        }
        other => {
            return Err(CliError::usage(format!(
                "--kernel: expected identity|random, got `{other}`"
            )))
        }
    };

    let fast = involute(&x, &kernel).map_err(map_involution_error)?;
    let slow = involute_reference(&x, &kernel).map_err(map_involution_error)?;
    let deviation = fast
        .data()
        .iter()
        .zip(slow.data())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);

    if !quiet {
        println!("dims       {:?}", x.dims());
        println!("kernel     K={k} G={g} ({kernel_choice})");
        println!("deviation  {deviation:e}");
    }
    if deviation < TOLERANCE {
        if !quiet {
            println!("involution-check PASS");
        }
        Ok(())
    } else {
        Err(CliError::runtime(format!(
            "involution deviates from the oracle by {deviation:e} (tolerance {TOLERANCE:e})"
        )))
    }
}
