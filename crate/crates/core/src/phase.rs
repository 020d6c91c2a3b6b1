use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Phase {
    Exploration,
    Adaptation,
    Maturity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("year {0} precedes the first block")]
pub struct PhaseError(pub i32);

/// 2009–2011 exploration, 2012–2014 adaptation, 2015 onward maturity.
pub fn phase_of_year(year: i32) -> Result<Phase, PhaseError> {
    match year {
        ..=2008 => Err(PhaseError(year)),
        2009..=2011 => Ok(Phase::Exploration),
        2012..=2014 => Ok(Phase::Adaptation),
        _ => Ok(Phase::Maturity),
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Exploration => "exploration",
            Phase::Adaptation => "adaptation",
            Phase::Maturity => "maturity",
        })
    }
}
