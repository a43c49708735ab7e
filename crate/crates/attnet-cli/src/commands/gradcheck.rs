use attnet::error::{Error, Result};
use attnet::model::gradcheck::gradient_check;
use attnet::model::{ModelConfig, Variant};

use super::parse_variant;

#[derive(clap::Args, Debug)]
pub struct GradcheckArgs {
    /// Seeds to check (0..n).
    #[arg(long, default_value_t = 20)]
    pub seeds: u64,
    /// Check only this variant; default covers full and no-projection.
    #[arg(long, value_parser = parse_variant)]
    pub variant: Option<Variant>,
    /// Relative-error tolerance.
    #[arg(long, default_value_t = 1e-4)]
    pub tol: f64,
    /// Central-difference step.
    #[arg(long, default_value_t = 1e-5)]
    pub h: f64,
    /// Test hook: corrupt one gradient path to prove the checker trips.
    #[cfg(debug_assertions)]
    #[arg(long, hide = true)]
    pub inject_sign_flip: bool,
}

fn check_config(variant: Variant) -> ModelConfig {
    ModelConfig {
        d: 4,
        k_td: 2,
        k_pc: 2,
        lambda: 0.4,
        window: 3,
        capacity: 6,
        variant,
        n_voc: 10,
        n_target: 3,
    }
}

pub fn run(args: GradcheckArgs) -> Result<()> {
    #[cfg(debug_assertions)]
    let inject = args.inject_sign_flip;
    #[cfg(not(debug_assertions))]
    let inject = false;

    let variants: Vec<Variant> = match args.variant {
        Some(v) => vec![v],
        None => vec![Variant::Full, Variant::NoProjection],
    };

    let mut all_passed = true;
    for variant in variants {
        let cfg = check_config(variant);
        let mut merged: Option<attnet::model::GradCheckReport> = None;
        for seed in 0..args.seeds {
            let report = gradient_check(&cfg, seed, args.h, args.tol, inject)?;
            match &mut merged {
                None => merged = Some(report),
                Some(m) => m.merge(&report),
            }
        }
        let merged = merged.ok_or_else(|| Error::usage("--seeds must be >= 1"))?;
        println!("variant {} ({} seeds):", variant.as_str(), args.seeds);
        for family in &merged.families {
            if family.frozen {
                println!("  {:<9} frozen (skipped; analytic gradient is zero)", family.name);
            } else {
                println!("  {:<9} max rel err {:.3e}", family.name, family.max_rel_err);
            }
        }
        let ok = merged.passed();
        println!(
            "  => {} (max {:.3e}, tol {:.1e})",
            if ok { "PASS" } else { "FAIL" },
            merged.max_rel_err(),
            args.tol
        );
        all_passed &= ok;
    }
    if !all_passed {
        return Err(Error::numeric("gradient check failed"));
    }
    Ok(())
}
