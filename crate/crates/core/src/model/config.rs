use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Component counts of the two mixture configurations used for the four-layer ladder.
pub const K_ONE: [usize; 4] = [1, 1, 50, 1];
pub const K_TWO: [usize; 4] = [1, 5, 50, 1];

pub const DEFAULT_D_Z: usize = 4;
pub const DEFAULT_HIDDEN: usize = 64;
pub const DEFAULT_BLOCK_DEPTH: usize = 2;
pub const DEFAULT_SIGMA_X: f64 = 0.1;

/// One latent layer: width of `z_ℓ`, number of mixture components, and the width
/// of its network blocks.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LayerSpec {
    pub d_z: usize,
    pub k: usize,
    pub hidden: usize,
}

impl LayerSpec {
    pub fn is_mixture(&self) -> bool {
        self.k > 1
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    /// Layer 1 (closest to the data) first.
    pub layers: Vec<LayerSpec>,
    pub x_dim: usize,
    /// Fixed standard deviation of the Gaussian likelihood.
    pub sigma_x: f64,
    /// Hidden layers per network block.
    pub block_depth: usize,
    pub seed: u64,
}

impl ModelConfig {
    pub fn ladder(ks: &[usize], x_dim: usize, d_z: usize, hidden: usize) -> Self {
        ModelConfig {
            layers: ks.iter().map(|&k| LayerSpec { d_z, k, hidden }).collect(),
            x_dim,
            sigma_x: DEFAULT_SIGMA_X,
            block_depth: DEFAULT_BLOCK_DEPTH,
            seed: 0,
        }
    }

    pub fn k_one(x_dim: usize) -> Self {
        Self::ladder(&K_ONE, x_dim, DEFAULT_D_Z, DEFAULT_HIDDEN)
    }

    pub fn k_two(x_dim: usize) -> Self {
        Self::ladder(&K_TWO, x_dim, DEFAULT_D_Z, DEFAULT_HIDDEN)
    }

    /// A ladder with no mixture layers.
    pub fn vlae(layers: usize, x_dim: usize) -> Self {
        Self::ladder(&vec![1; layers], x_dim, DEFAULT_D_Z, DEFAULT_HIDDEN)
    }

    /// Single-layer Gaussian-mixture baseline whose encoder and decoder are as deep as
    /// the path from the data to ladder layer `matched_layer` (1-based).
    pub fn gm_dgm(k: usize, x_dim: usize, d_z: usize, hidden: usize, matched_layer: usize) -> Self {
        ModelConfig {
            layers: vec![LayerSpec { d_z, k, hidden }],
            x_dim,
            sigma_x: DEFAULT_SIGMA_X,
            block_depth: DEFAULT_BLOCK_DEPTH * matched_layer.max(1),
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_sigma_x(mut self, sigma_x: f64) -> Self {
        self.sigma_x = sigma_x;
        self
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn ks(&self) -> Vec<usize> {
        self.layers.iter().map(|l| l.k).collect()
    }

    /// Key-value form stored in checkpoint metadata.
    pub fn to_meta(&self) -> Vec<(String, String)> {
        let list = |f: fn(&LayerSpec) -> usize| {
            self.layers.iter().map(|l| f(l).to_string()).collect::<Vec<_>>().join(",")
        };
        vec![
            ("model.k".into(), list(|l| l.k)),
            ("model.d_z".into(), list(|l| l.d_z)),
            ("model.hidden".into(), list(|l| l.hidden)),
            ("model.x_dim".into(), self.x_dim.to_string()),
            ("model.sigma_x".into(), self.sigma_x.to_string()),
            ("model.block_depth".into(), self.block_depth.to_string()),
            ("model.seed".into(), self.seed.to_string()),
        ]
    }

    /// Inverse of [`ModelConfig::to_meta`].
    pub fn from_meta<'a>(get: impl Fn(&str) -> Option<&'a str>) -> Result<Self> {
        let field = |key: &str| get(key).ok_or_else(|| Error::Config(format!("missing `{key}`")));
        let bad = |key: &str, v: &str| Error::Config(format!("bad value `{v}` for `{key}`"));
        let list = |key: &str| -> Result<Vec<usize>> {
            let v = field(key)?;
            v.split(',').map(|x| x.trim().parse().map_err(|_| bad(key, v))).collect()
        };
        let scalar = |key: &str| -> Result<&str> { field(key) };
        let (ks, d_z, hidden) = (list("model.k")?, list("model.d_z")?, list("model.hidden")?);
        if ks.len() != d_z.len() || ks.len() != hidden.len() {
            return Err(Error::Config("model.k, model.d_z and model.hidden differ in length".into()));
        }
        let parse_usize = |key: &str| -> Result<usize> {
            let v = scalar(key)?;
            v.parse().map_err(|_| bad(key, v))
        };
        let sigma = scalar("model.sigma_x")?;
        let seed = scalar("model.seed")?;
        let config = ModelConfig {
            layers: ks
                .iter()
                .zip(&d_z)
                .zip(&hidden)
                .map(|((&k, &d_z), &hidden)| LayerSpec { d_z, k, hidden })
                .collect(),
            x_dim: parse_usize("model.x_dim")?,
            sigma_x: sigma.parse().map_err(|_| bad("model.sigma_x", sigma))?,
            block_depth: parse_usize("model.block_depth")?,
            seed: seed.parse().map_err(|_| bad("model.seed", seed))?,
        };
        config.validate()?;
        Ok(config)
    }

    /// Number of joint hard assignments across all mixture layers.
    pub fn combinations(&self) -> usize {
        self.layers.iter().map(|l| l.k).product()
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Config("at least one latent layer is required".into()));
        }
        if self.x_dim == 0 {
            return Err(Error::Config("x_dim must be positive".into()));
        }
        if !(self.sigma_x > 0.0) || !self.sigma_x.is_finite() {
            return Err(Error::Config(format!("sigma_x must be positive, got {}", self.sigma_x)));
        }
        if self.block_depth == 0 {
            return Err(Error::Config("block_depth must be at least 1".into()));
        }
        for (i, l) in self.layers.iter().enumerate() {
            if l.d_z == 0 || l.k == 0 || l.hidden == 0 {
                return Err(Error::Config(format!(
                    "layer {}: d_z, K and hidden must all be >= 1 (got {l:?})",
                    i + 1
                )));
            }
        }
        Ok(())
    }
}

/// Named model configurations understood by the command line.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    VlacKOne,
    VlacKTwo,
    GmDgm,
    Vlae,
    /// Ladder with the `k` vector taken from the run configuration.
    Custom,
}

impl Preset {
    pub const ALL: [Preset; 5] = [
        Preset::VlacKOne,
        Preset::VlacKTwo,
        Preset::GmDgm,
        Preset::Vlae,
        Preset::Custom,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::VlacKOne => "vlac-kone",
            Preset::VlacKTwo => "vlac-ktwo",
            Preset::GmDgm => "gm-dgm",
            Preset::Vlae => "vlae",
            Preset::Custom => "custom",
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Preset::ALL.iter().map(|p| p.name()).collect();
                Error::Config(format!("unknown preset `{s}` (expected one of {})", names.join(", ")))
            })
    }
}
