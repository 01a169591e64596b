use super::PolicyParams;
use crate::error::{Error, Result};
use crate::metrics::{improvement, DecisionHistory, MetricWindow};
use crate::model::{Configuration, MemoryLevel, OperatorConfig};

/// Post-processes a DS2 proposal operator by operator, trading scale-out for
/// more memory where the state backend is the bottleneck.
pub fn justin_scale(
    proposal: &Configuration,
    previous: &Configuration,
    history: &DecisionHistory,
    window: &MetricWindow,
    params: &PolicyParams,
) -> Result<Configuration> {
    match history.last() {
        Some(last)
            if last.config.timestamp == previous.timestamp
                && last.config.same_resources(previous) => {}
        _ => return Err(Error::InconsistentHistory),
    }
    if proposal.entries.len() != previous.entries.len() {
        return Err(Error::InvalidParameter(
            "proposal and previous configuration cover different operators".into(),
        ));
    }

    let mut next = proposal.clone();
    for (id, proposed) in &proposal.entries {
        let prev = previous.entry(id)?;
        // Sources emit no metrics and are never rescaled.
        let Some(w) = window.operators.get(id) else {
            continue;
        };
        let decided = match (w.hit_rate, w.access_latency) {
            (Some(theta), Some(tau)) => {
                branch(id, proposed, prev, theta, tau, history, params)?
            }
            _ => OperatorConfig::new(proposed.parallelism, MemoryLevel::None),
        };
        next.entries.insert(id.clone(), decided);
    }
    Ok(next)
}

fn branch(
    id: &str,
    proposed: &OperatorConfig,
    prev: &OperatorConfig,
    theta: f64,
    tau: f64,
    history: &DecisionHistory,
    params: &PolicyParams,
) -> Result<OperatorConfig> {
    if proposed.parallelism == prev.parallelism {
        return Ok(OperatorConfig {
            scaled_up: false,
            ..*prev
        });
    }
    let m = prev
        .level
        .level()
        .ok_or_else(|| Error::MissingMemoryLevel(id.to_string()))?;
    let headroom = m + 1 < params.max_level;
    let scale_up = OperatorConfig {
        parallelism: prev.parallelism,
        level: MemoryLevel::Level(m + 1),
        scaled_up: true,
    };
    let scale_out = |level: u8| OperatorConfig::new(proposed.parallelism, MemoryLevel::Level(level));

    Ok(if prev.scaled_up {
        if improvement(history, id, params.hysteresis)? {
            if headroom {
                scale_up
            } else {
                scale_out(m)
            }
        } else {
            scale_out(m.saturating_sub(1))
        }
    } else if (theta < params.delta_theta || tau > params.delta_tau) && headroom {
        scale_up
    } else {
        scale_out(m)
    })
}
