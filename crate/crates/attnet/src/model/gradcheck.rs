//! Backward-vs-central-difference verification over seeded random instances.

use crate::corpus::Polarity;
use crate::error::Result;
use crate::model::backward::backward;
use crate::model::config::ModelConfig;
use crate::model::forward::forward;
use crate::model::params::{init_params, ParamStore};
use crate::numeric::{relative_error, Rng};
use crate::train::instance_loss;

/// Worst relative error observed for one parameter family.
#[derive(Clone, Debug)]
pub struct FamilyCheck {
    pub name: String,
    pub max_rel_err: f64,
    /// Frozen families are skipped numerically; their analytic gradients are
    /// asserted to be exactly zero instead.
    pub frozen: bool,
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub seed: u64,
    pub tol: f64,
    pub families: Vec<FamilyCheck>,
}

impl GradCheckReport {
    pub fn max_rel_err(&self) -> f64 {
        self.families
            .iter()
            .filter(|f| !f.frozen)
            .map(|f| f.max_rel_err)
            .fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.max_rel_err() < self.tol
    }

    /// Merge per-family maxima across seeds.
    pub fn merge(&mut self, other: &GradCheckReport) {
        for (mine, theirs) in self.families.iter_mut().zip(&other.families) {
            debug_assert_eq!(mine.name, theirs.name);
            mine.max_rel_err = mine.max_rel_err.max(theirs.max_rel_err);
        }
    }
}

struct Probe {
    tokens: Vec<usize>,
    valid_len: usize,
    target: usize,
    present: bool,
    polarity: Option<Polarity>,
}

fn random_probe(config: &ModelConfig, rng: &mut Rng) -> Probe {
    let valid_len = 1 + rng.below(config.capacity);
    let mut tokens = vec![crate::corpus::NULL_INDEX; config.capacity];
    for slot in tokens.iter_mut().take(valid_len) {
        // Skip the reserved null index; repeated words are fine and exercise
        // column accumulation.
        *slot = 1 + rng.below(config.n_voc - 1);
    }
    let target = rng.below(config.n_target);
    let present = rng.chance(0.75);
    let polarity = present.then(|| *rng.pick(&Polarity::ALL));
    Probe {
        tokens,
        valid_len,
        target,
        present,
        polarity,
    }
}

fn probe_loss(store: &ParamStore, probe: &Probe) -> Result<f64> {
    let trace = forward(store, &probe.tokens, probe.valid_len, probe.target)?;
    instance_loss(&trace.td_probs, &trace.pc_probs, probe.present, probe.polarity)
}

/// Checks every trainable parameter entry of a freshly initialized store
/// against central differences on one random instance. `inject_sign_flip`
/// deliberately corrupts one gradient path (H_td) so callers can verify the
/// checker catches wrong gradients.
pub fn gradient_check(
    config: &ModelConfig,
    seed: u64,
    h: f64,
    tol: f64,
    inject_sign_flip: bool,
) -> Result<GradCheckReport> {
    let mut store = init_params(config, seed)?;
    let mut rng = Rng::stream(seed, "gradcheck/probe");
    let probe = random_probe(config, &mut rng);

    let trace = forward(&store, &probe.tokens, probe.valid_len, probe.target)?;
    let mut analytic = backward(&store, &trace, probe.present, probe.polarity)?;
    if inject_sign_flip {
        analytic.h_td.scale(-1.0);
    }

    let frozen = store.projections_frozen();
    let mut names: Vec<String> = Vec::new();
    analytic.for_each(|name, _| names.push(name.to_string()));

    let mut families = Vec::new();
    for name in names {
        let is_projection = name.starts_with("V_");
        if is_projection && frozen {
            let mut all_zero = true;
            analytic.for_each(|n, m| {
                if n == name {
                    all_zero = m.as_slice().iter().all(|&x| x == 0.0);
                }
            });
            families.push(FamilyCheck {
                name,
                max_rel_err: if all_zero { 0.0 } else { f64::INFINITY },
                frozen: true,
            });
            continue;
        }

        let mut grad_entries: Vec<f64> = Vec::new();
        analytic.for_each(|n, m| {
            if n == name {
                grad_entries = m.as_slice().to_vec();
            }
        });

        let mut max_err: f64 = 0.0;
        let len = grad_entries.len();
        for i in 0..len {
            let original = {
                let m = store.matrix_mut(&name).expect("family name");
                let v = m.as_mut_slice()[i];
                m.as_mut_slice()[i] = v + h;
                v
            };
            let plus = probe_loss(&store, &probe)?;
            store.matrix_mut(&name).unwrap().as_mut_slice()[i] = original - h;
            let minus = probe_loss(&store, &probe)?;
            store.matrix_mut(&name).unwrap().as_mut_slice()[i] = original;
            let numeric = (plus - minus) / (2.0 * h);
            max_err = max_err.max(relative_error(grad_entries[i], numeric));
        }
        families.push(FamilyCheck {
            name,
            max_rel_err: max_err,
            frozen: false,
        });
    }

    Ok(GradCheckReport {
        seed,
        tol,
        families,
    })
}

/// Runs `gradient_check` over several seeds, merging per-family maxima.
pub fn gradient_check_suite(
    config: &ModelConfig,
    seeds: impl IntoIterator<Item = u64>,
    h: f64,
    tol: f64,
) -> Result<GradCheckReport> {
    let mut merged: Option<GradCheckReport> = None;
    for seed in seeds {
        let report = gradient_check(config, seed, h, tol, false)?;
        match &mut merged {
            None => merged = Some(report),
            Some(m) => m.merge(&report),
        }
    }
    merged.ok_or_else(|| crate::error::Error::usage("gradient_check_suite needs at least one seed"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::config::Variant;

    fn small(variant: Variant) -> ModelConfig {
        ModelConfig {
            d: 3,
            k_td: 2,
            k_pc: 2,
            lambda: 0.4,
            window: 3,
            capacity: 5,
            variant,
            n_voc: 8,
            n_target: 3,
        }
    }

    #[test]
    fn full_variant_gradients_match_finite_differences() {
        for seed in [1, 2, 3, 4] {
            let report = gradient_check(&small(Variant::Full), seed, 1e-5, 1e-4, false).unwrap();
            assert!(
                report.passed(),
                "seed {seed}: max rel err {}",
                report.max_rel_err()
            );
        }
    }

    #[test]
    fn no_projection_gradients_match_and_v_is_frozen() {
        let report =
            gradient_check(&small(Variant::NoProjection), 9, 1e-5, 1e-4, false).unwrap();
        assert!(report.passed(), "max rel err {}", report.max_rel_err());
        let frozen: Vec<_> = report.families.iter().filter(|f| f.frozen).collect();
        assert_eq!(frozen.len(), 6); // V_td[0..3] and V_pc[0..3]
        assert!(frozen.iter().all(|f| f.max_rel_err == 0.0));
    }

    #[test]
    fn injected_sign_flip_is_caught() {
        let report = gradient_check(&small(Variant::Full), 3, 1e-5, 1e-4, true).unwrap();
        assert!(!report.passed(), "sign flip must fail the check");
    }
}
