//! Physical configuration of the layered waveguide and the inclusion contrast.

use std::f64::consts::PI;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("interfaces must satisfy 0 < d1 < d2 < h (got d1={d1}, d2={d2}, h={h})")]
    BadInterfaces { d1: f64, d2: f64, h: f64 },
    #[error("{name} must be strictly positive (got {value})")]
    NonPositive { name: &'static str, value: f64 },
    #[error("depth {x3} outside the waveguide [0, {h}]")]
    DepthOutOfRange { x3: f64, h: f64 },
    #[error("inclusion box is degenerate or inverted")]
    DegenerateBox,
    #[error("inclusion box must lie strictly inside a single layer slab")]
    BoxSpansLayers,
    #[error("inclusion density must equal the host layer density (rho4={rho4}, host {host})")]
    DensityMismatch { rho4: f64, host: f64 },
}

/// Axis-aligned cuboid, `lo[i] <= hi[i]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxRegion {
    pub lo: [f64; 3],
    pub hi: [f64; 3],
}

impl BoxRegion {
    pub fn new(lo: [f64; 3], hi: [f64; 3]) -> Result<Self, ConfigError> {
        if lo.iter().zip(&hi).any(|(a, b)| a >= b) {
            return Err(ConfigError::DegenerateBox);
        }
        Ok(BoxRegion { lo, hi })
    }

    /// Closed-box membership.
    pub fn contains(&self, x: [f64; 3]) -> bool {
        (0..3).all(|i| x[i] >= self.lo[i] && x[i] <= self.hi[i])
    }

    pub fn side(&self, axis: usize) -> f64 {
        self.hi[axis] - self.lo[axis]
    }
}

/// Three-layer stratified waveguide: pressure-release top (`x3 = 0`),
/// rigid bottom (`x3 = h`), interfaces at `d1` and `d2`.
///
/// Layer `i` carries density `rho[i]`, sound speed `c[i]` and refractive
/// index `n[i]`; the background coefficient in layer `i` is
/// `q[i] = k[i]*n[i]` with `k[i] = 2*pi*f/c[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveguideConfig {
    pub h: f64,
    pub d1: f64,
    pub d2: f64,
    pub rho: [f64; 3],
    pub f: f64,
    pub c: [f64; 3],
    pub n: [f64; 3],
}

impl WaveguideConfig {
    pub fn new(
        h: f64,
        d1: f64,
        d2: f64,
        rho: [f64; 3],
        f: f64,
        c: [f64; 3],
        n: [f64; 3],
    ) -> Result<Self, ConfigError> {
        let cfg = WaveguideConfig { h, d1, d2, rho, f, c, n };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(0.0 < self.d1 && self.d1 < self.d2 && self.d2 < self.h) {
            return Err(ConfigError::BadInterfaces { d1: self.d1, d2: self.d2, h: self.h });
        }
        let checks: [(&'static str, f64); 10] = [
            ("f", self.f),
            ("rho1", self.rho[0]),
            ("rho2", self.rho[1]),
            ("rho3", self.rho[2]),
            ("c1", self.c[0]),
            ("c2", self.c[1]),
            ("c3", self.c[2]),
            ("n1", self.n[0]),
            ("n2", self.n[1]),
            ("n3", self.n[2]),
        ];
        for (name, value) in checks {
            if !(value > 0.0) || !value.is_finite() {
                return Err(ConfigError::NonPositive { name, value });
            }
        }
        Ok(())
    }

    pub fn wavenumber(&self, layer: usize) -> f64 {
        2.0 * PI * self.f / self.c[layer]
    }

    /// `q[i] = k[i]*n[i]`.
    pub fn q(&self, layer: usize) -> f64 {
        self.wavenumber(layer) * self.n[layer]
    }

    /// Layer membership for a depth. Exact interface hits belong to the
    /// lower-indexed layer; the choice is measure-zero but must be
    /// deterministic so quadrature nodes land consistently.
    pub fn layer_of(&self, x3: f64) -> usize {
        if x3 <= self.d1 {
            0
        } else if x3 <= self.d2 {
            1
        } else {
            2
        }
    }

    /// Interface depths bracketing each layer: `[0, d1, d2, h]`.
    pub fn interfaces(&self) -> [f64; 4] {
        [0.0, self.d1, self.d2, self.h]
    }

    /// Background coefficient at a depth.
    pub fn background_q(&self, x3: f64) -> Result<f64, ConfigError> {
        if !(0.0..=self.h).contains(&x3) {
            return Err(ConfigError::DepthOutOfRange { x3, h: self.h });
        }
        Ok(self.q(self.layer_of(x3)))
    }
}

/// Penetrable cuboid inclusion with constant interior coefficient `q4`.
///
/// The interior density must match the host layer (the solver implements
/// only the equal-density volume formulation).
#[derive(Debug, Clone, PartialEq)]
pub struct InclusionSpec {
    pub region: BoxRegion,
    pub q4: f64,
    pub rho4: f64,
}

impl InclusionSpec {
    pub fn new(
        cfg: &WaveguideConfig,
        region: BoxRegion,
        q4: f64,
        rho4: f64,
    ) -> Result<Self, ConfigError> {
        if !(q4 > 0.0) {
            return Err(ConfigError::NonPositive { name: "q4", value: q4 });
        }
        // the box must sit strictly inside the open slab of one layer
        let ifaces = cfg.interfaces();
        let layer = cfg.layer_of(region.lo[2]);
        if region.lo[2] <= ifaces[layer] && layer > 0 {
            return Err(ConfigError::BoxSpansLayers);
        }
        if !(region.lo[2] > if layer == 0 { -f64::INFINITY } else { ifaces[layer] }
            && region.hi[2] < ifaces[layer + 1])
        {
            return Err(ConfigError::BoxSpansLayers);
        }
        let host = cfg.rho[layer];
        if (rho4 - host).abs() > 1e-12 * host {
            return Err(ConfigError::DensityMismatch { rho4, host });
        }
        Ok(InclusionSpec { region, q4, rho4 })
    }

    pub fn host_layer(&self, cfg: &WaveguideConfig) -> usize {
        cfg.layer_of(self.region.lo[2])
    }

    /// Constant contrast value inside the box: `q_host^2 - q4^2`.
    pub fn q_tilde(&self, cfg: &WaveguideConfig) -> f64 {
        let qh = cfg.q(self.host_layer(cfg));
        qh * qh - self.q4 * self.q4
    }
}

/// Contrast field: zero outside the inclusion, constant inside.
pub fn contrast_q_tilde(cfg: &WaveguideConfig, inc: &InclusionSpec, x: [f64; 3]) -> f64 {
    if inc.region.contains(x) {
        inc.q_tilde(cfg)
    } else {
        0.0
    }
}
