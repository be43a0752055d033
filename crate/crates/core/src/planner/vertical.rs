use core::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VerticalState {
    Forward,
    Descending,
    Ascending,
}

impl fmt::Display for VerticalState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            VerticalState::Forward => "forward",
            VerticalState::Descending => "descending",
            VerticalState::Ascending => "ascending",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerticalSmConfig {
    pub min_bottom_clearance: f64,
    /// Closest the vehicle may come to the ceiling.
    pub min_top_clearance: f64,
    /// Vertical speed while searching.
    pub rate: f64,
}

impl Default for VerticalSmConfig {
    fn default() -> Self {
        Self { min_bottom_clearance: 0.5, min_top_clearance: 0.5, rate: 0.3 }
    }
}

/// Next state and the vertical velocity command. While free the vehicle
/// keeps its height; when blocked it sweeps down to the floor limit, then up
/// to the ceiling limit, and so on.
pub fn vertical_sm_step(
    state: VerticalState,
    cfg: &VerticalSmConfig,
    primitives_free: bool,
    bottom: f64,
    top: f64,
) -> (VerticalState, f64) {
    if primitives_free {
        return (VerticalState::Forward, 0.0);
    }
    let floor_reached = bottom <= cfg.min_bottom_clearance;
    let ceiling_reached = top <= cfg.min_top_clearance;
    let next = match state {
        VerticalState::Forward | VerticalState::Descending if floor_reached => VerticalState::Ascending,
        VerticalState::Forward | VerticalState::Descending => VerticalState::Descending,
        VerticalState::Ascending if ceiling_reached && !floor_reached => VerticalState::Descending,
        VerticalState::Ascending => VerticalState::Ascending,
    };
    let vz = match next {
        VerticalState::Descending => -cfg.rate,
        VerticalState::Ascending if ceiling_reached => 0.0,
        VerticalState::Ascending => cfg.rate,
        VerticalState::Forward => 0.0,
    };
    (next, vz)
}
