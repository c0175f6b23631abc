/// Constants of the embedded-pair step-size controller.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerParams {
    pub safety: f64,
    pub shrink_min: f64,
    pub grow_max: f64,
}

impl Default for ControllerParams {
    fn default() -> Self {
        Self {
            safety: 0.9,
            shrink_min: 0.2,
            grow_max: 5.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepDecision {
    pub accept: bool,
    pub h_next: f64,
}

/// Step-size proposal for an error estimate of the given order, before
/// clamping to `[h_min, h_max]`.
pub fn step_factor(params: &ControllerParams, err_norm: f64, order: u32) -> f64 {
    let raw = if err_norm == 0.0 {
        f64::INFINITY
    } else {
        params.safety * err_norm.powf(-1.0 / (order as f64 + 1.0))
    };
    raw.clamp(params.shrink_min, params.grow_max)
}

/// Accept iff `err_norm <= 1`; the next step is
/// `h * clamp(safety * err^(-1/(order+1)), shrink_min, grow_max)` clamped to
/// `[h_min, h_max]`.
pub fn step_controller(
    params: &ControllerParams,
    err_norm: f64,
    order: u32,
    h: f64,
    h_min: f64,
    h_max: f64,
) -> StepDecision {
    let accept = err_norm <= 1.0;
    let h_next = (h * step_factor(params, err_norm, order)).clamp(h_min, h_max);
    StepDecision { accept, h_next }
}
