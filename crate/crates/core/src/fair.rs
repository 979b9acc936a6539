//! Weighted max-min fair rate allocation by progressive filling.
//!
//! Every flow has an individual rate cap and consumes a set of shared
//! resources, each with a weight: a flow running at rate `r` uses `w * r` of a
//! resource it touches with weight `w`. A relayed flow, for example, crosses
//! the relay host's NIC twice and so carries weight 2 there.
//!
//! All unfrozen flows rise at the same pace. A flow freezes when it reaches
//! its cap or when one of its resources is exhausted. The result is the unique
//! max-min fair allocation in rate terms.

use alloc::vec;
use alloc::vec::Vec;

/// Relative slack used when deciding whether a cap or a resource is exhausted.
const EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct FlowDemand {
    /// Individual rate ceiling, bytes/s. May be infinite.
    pub cap: f64,
    /// `(resource index, weight)` pairs. Weights must be positive.
    pub uses: Vec<(usize, f64)>,
}

impl FlowDemand {
    pub fn new(cap: f64) -> Self {
        Self { cap, uses: Vec::new() }
    }

    pub fn using(mut self, resource: usize, weight: f64) -> Self {
        self.uses.push((resource, weight));
        self
    }
}

/// Returns one rate per flow. Resources with infinite capacity never bind.
/// A flow bounded by nothing finite gets `f64::INFINITY`.
pub fn max_min_allocate(flows: &[FlowDemand], capacities: &[f64]) -> Vec<f64> {
    let mut rates = vec![0.0f64; flows.len()];
    let mut frozen = vec![false; flows.len()];
    let mut remaining: Vec<f64> = capacities.to_vec();
    let mut active_weight = vec![0.0f64; capacities.len()];

    for (i, flow) in flows.iter().enumerate() {
        if flow.cap <= 0.0 {
            frozen[i] = true;
        }
    }

    loop {
        active_weight.iter_mut().for_each(|w| *w = 0.0);
        let mut any_active = false;
        for (flow, _) in flows.iter().zip(&frozen).filter(|(_, f)| !**f) {
            any_active = true;
            for &(r, w) in &flow.uses {
                active_weight[r] += w;
            }
        }
        if !any_active {
            break;
        }

        // Largest common increment before some constraint binds.
        let mut delta = f64::INFINITY;
        for (i, flow) in flows.iter().enumerate() {
            if !frozen[i] {
                delta = delta.min(flow.cap - rates[i]);
            }
        }
        for (r, &w) in active_weight.iter().enumerate() {
            if w > 0.0 && remaining[r].is_finite() {
                delta = delta.min(remaining[r].max(0.0) / w);
            }
        }

        if delta == f64::INFINITY {
            for (i, rate) in rates.iter_mut().enumerate() {
                if !frozen[i] {
                    *rate = f64::INFINITY;
                }
            }
            break;
        }

        for (i, rate) in rates.iter_mut().enumerate() {
            if !frozen[i] {
                *rate += delta;
            }
        }
        for (r, &w) in active_weight.iter().enumerate() {
            if w > 0.0 && remaining[r].is_finite() {
                remaining[r] -= delta * w;
            }
        }

        let saturated: Vec<bool> = remaining
            .iter()
            .zip(capacities)
            .map(|(rem, cap)| cap.is_finite() && *rem <= EPS * cap.max(1.0))
            .collect();

        let mut progressed = false;
        for (i, flow) in flows.iter().enumerate() {
            if frozen[i] {
                continue;
            }
            let at_cap = flow.cap.is_finite() && flow.cap - rates[i] <= EPS * flow.cap.max(1.0);
            let blocked = flow.uses.iter().any(|&(r, _)| saturated[r]);
            if at_cap || blocked {
                if at_cap {
                    rates[i] = flow.cap;
                }
                frozen[i] = true;
                progressed = true;
            }
        }
        if !progressed {
            // Rounding left the binding constraint a hair above its limit;
            // freeze the flows that set `delta` so the loop terminates.
            for (i, flow) in flows.iter().enumerate() {
                if !frozen[i] {
                    let tight = flow.uses.iter().any(|&(r, _)| {
                        active_weight[r] > 0.0 && remaining[r] <= delta * active_weight[r]
                    });
                    if tight || flow.cap - rates[i] <= delta {
                        frozen[i] = true;
                    }
                }
            }
        }
    }
    rates
}
