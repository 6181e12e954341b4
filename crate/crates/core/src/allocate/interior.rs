use crate::error::{Error, Result};
use crate::model::{Allocation, SystemSpec};

use super::welfare::eval_welfare;

/// Per-queue view of the interiority condition `W'_i(0⁺) > μ`.
#[derive(Debug, Clone, PartialEq)]
pub struct InteriorEntry {
    pub marginal_welfare_at_zero: f64,
    pub served: bool,
    pub exceeds_shadow_price: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InteriorReport {
    pub entries: Vec<InteriorEntry>,
    /// `W'_i(0⁺) > μ` for every queue.
    pub hypothesis_holds: bool,
    pub all_served: bool,
    /// Every queue above the multiplier is served and every queue at or
    /// below it is not.
    pub consistent: bool,
}

/// Checks which queues clear the multiplier at zero rate and whether the
/// allocation serves exactly those. When the hypothesis holds for every
/// queue, a welfare optimum must serve all of them.
pub fn verify_interior(spec: &SystemSpec, allocation: &Allocation) -> Result<InteriorReport> {
    if allocation.rates.len() != spec.len() {
        return Err(Error::AllocationMismatch {
            rates: allocation.rates.len(),
            queues: spec.len(),
        });
    }
    let mu = allocation.shadow_price;
    let mut entries = Vec::with_capacity(spec.len());
    for (i, q) in spec.queues.iter().enumerate() {
        let at_zero = eval_welfare(0.0, q)?.marginal_welfare;
        entries.push(InteriorEntry {
            marginal_welfare_at_zero: at_zero,
            served: allocation.is_served(i),
            exceeds_shadow_price: at_zero > mu,
        });
    }
    let hypothesis_holds = entries.iter().all(|e| e.exceeds_shadow_price);
    let all_served = entries.iter().all(|e| e.served);
    let consistent = entries.iter().all(|e| e.served == e.exceeds_shadow_price);
    Ok(InteriorReport {
        entries,
        hypothesis_holds,
        all_served,
        consistent,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::allocate::solve_welfare;
    use crate::model::{DelayParams, DemandFamily, QueueSpec};

    #[test]
    fn isoelastic_queues_always_served() {
        let spec = SystemSpec::new(
            (0..3)
                .map(|i| {
                    QueueSpec::new(
                        format!("q{i}"),
                        1.0 + i as f64,
                        DemandFamily::Isoelastic {
                            elasticity: 1.5 + i as f64,
                        },
                        DelayParams::new(1.0, 0.1),
                    )
                })
                .collect(),
            0.2,
        );
        let a = solve_welfare(&spec).unwrap();
        let r = verify_interior(&spec, &a).unwrap();
        assert!(r.hypothesis_holds && r.all_served && r.consistent);
    }

    #[test]
    fn excluded_queue_is_reported() {
        let lu = |name: &str, v: f64| {
            QueueSpec::new(
                name,
                1.0,
                DemandFamily::LinearUniform { max_value: v },
                DelayParams::new(1.0, 0.2),
            )
        };
        let spec = SystemSpec::new(vec![lu("a", 20.0), lu("b", 1.0)], 0.1);
        let a = solve_welfare(&spec).unwrap();
        let r = verify_interior(&spec, &a).unwrap();
        assert!(!r.hypothesis_holds);
        assert!(!r.all_served);
        assert!(r.consistent);
        assert!(!r.entries[1].served);
    }
}
