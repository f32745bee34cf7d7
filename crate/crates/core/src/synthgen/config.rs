use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::PATCH;

/// Closed sampling interval `[min, max]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Span<T> {
    pub min: T,
    pub max: T,
}

impl<T> Span<T> {
    pub const fn new(min: T, max: T) -> Self {
        Span { min, max }
    }
}

impl<T: PartialOrd + fmt::Display> Span<T> {
    fn check(&self, name: &str) -> Result<()> {
        if self.min > self.max {
            return Err(Error::Config(format!("{name} range {self} is empty")));
        }
        Ok(())
    }
}

impl<T: fmt::Display> fmt::Display for Span<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{}", self.min, self.max)
    }
}

/// Parses `min,max` or a single value meaning `value,value`.
impl<T: FromStr> FromStr for Span<T> {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parse = |v: &str| {
            v.trim()
                .parse::<T>()
                .map_err(|_| Error::Config(format!("cannot parse {v:?} in range {s:?}")))
        };
        match s.split_once(',') {
            Some((a, b)) => Ok(Span::new(parse(a)?, parse(b)?)),
            None => {
                let v = parse(s)?;
                Ok(Span::new(v, parse(s)?))
            }
        }
    }
}

/// Parameters of the synthetic section generator. Lengths are in samples
/// (vertical) or traces (horizontal).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub height: usize,
    pub width: usize,
    /// Number of sections to generate.
    pub count: usize,
    pub thickness: Span<usize>,
    pub fold_amplitude: Span<f64>,
    pub fold_wavelength: Span<f64>,
    pub shear: Span<f64>,
    pub faults: Span<usize>,
    /// Fault dip from horizontal, degrees.
    pub dip: Span<f64>,
    pub throw: Span<usize>,
    /// Ricker peak period.
    pub period: Span<f64>,
    /// Noise sigma as a fraction of the section RMS.
    pub noise: Span<f64>,
    /// Square dilation radius applied to rasterized fault traces.
    pub dilation: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            height: 128,
            width: 128,
            count: 4000,
            thickness: Span::new(5, 20),
            fold_amplitude: Span::new(0.0, 10.0),
            fold_wavelength: Span::new(32.0, 128.0),
            shear: Span::new(-0.2, 0.2),
            faults: Span::new(1, 3),
            dip: Span::new(50.0, 85.0),
            throw: Span::new(3, 15),
            period: Span::new(12.0, 25.0),
            noise: Span::new(0.0, 0.1),
            dilation: 1,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.height < PATCH || self.width < PATCH {
            return Err(Error::Config(format!(
                "section {}x{} is smaller than the {PATCH}x{PATCH} patch",
                self.height, self.width
            )));
        }
        if self.count == 0 {
            return Err(Error::Config("section count must be at least 1".into()));
        }
        self.thickness.check("thickness")?;
        self.fold_amplitude.check("fold amplitude")?;
        self.fold_wavelength.check("fold wavelength")?;
        self.shear.check("shear")?;
        self.faults.check("fault count")?;
        self.dip.check("dip")?;
        self.throw.check("throw")?;
        self.period.check("period")?;
        self.noise.check("noise")?;
        if self.thickness.min == 0 {
            return Err(Error::Config("layer thickness must be at least 1 sample".into()));
        }
        if self.fold_wavelength.min <= 0.0 || self.period.min <= 0.0 {
            return Err(Error::Config("fold wavelength and wavelet period must be positive".into()));
        }
        if self.dip.min <= 0.0 || self.dip.max > 90.0 {
            return Err(Error::Config(format!("dip range {} must lie in (0, 90]", self.dip)));
        }
        if self.noise.min < 0.0 {
            return Err(Error::Config("noise fraction must be nonnegative".into()));
        }
        Ok(())
    }
}
