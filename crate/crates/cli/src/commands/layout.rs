//! `detgeom layout`: print the detection-head grids.

use detgeom::heads::grid_centers;

use crate::config::RunConfig;
use crate::CliError;

pub fn run(config: &RunConfig, quiet: bool) -> Result<(), CliError> {
    let layout = &config.layout;
    if !quiet {
        println!("input size {}", layout.input_size);
        println!("{:<6} {:>6} {:>6} {:>8} {:>10}  first -> last center", "head", "grid_h", "grid_w", "stride", "cells");
    }
    for head in &layout.heads {
        let centers =
            grid_centers(layout, &head.name).map_err(|e| CliError::usage(e.to_string()))?;
        let first = centers.first().expect("grids are non-empty");
        let last = centers.last().expect("grids are non-empty");
        println!(
            "{:<6} {:>6} {:>6} {:>8} {:>10}  ({}, {}) -> ({}, {})",
            head.name,
            head.grid_h,
            head.grid_w,
            head.stride,
            centers.len(),
            first.0,
            first.1,
            last.0,
            last.1
        );
    }
    Ok(())
}
