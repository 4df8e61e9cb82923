use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    pub seed: u64,
    pub threads: Option<usize>,
    pub out: PathBuf,
    pub cocycle: CocycleSettings,
    pub lyapunov: LyapunovSettings,
    pub rotation: RotationSettings,
    pub mfield: MFieldSettings,
    pub kotani: KotaniSettings,
    pub small_t: SmallTSettings,
    pub bands: BandSettings,
    pub strip_scan: StripScanSettings,
    pub phi_eps: PhiSettings,
    pub density: DensitySettings,
}

impl Default for Settings {
    fn default() -> Self {
        Settings {
            seed: 0,
            threads: None,
            out: PathBuf::from("out"),
            cocycle: CocycleSettings::default(),
            lyapunov: LyapunovSettings::default(),
            rotation: RotationSettings::default(),
            mfield: MFieldSettings::default(),
            kotani: KotaniSettings::default(),
            small_t: SmallTSettings::default(),
            bands: BandSettings::default(),
            strip_scan: StripScanSettings::default(),
            phi_eps: PhiSettings::default(),
            density: DensitySettings::default(),
        }
    }
}

/// Which cocycle a command runs on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CocycleSettings {
    /// `random`, `identity` or `strip`.
    pub family: String,
    pub tag: String,
    pub d: usize,
    pub period: usize,
    pub scale: f64,
    /// Energy of the strip transfer cocycle.
    pub energy: f64,
    /// `zero`, `constant:X`, `anderson:W:K` or a CSV/JSON table path.
    pub potential: String,
    /// `hermitian` or `real` for CSV tables.
    pub potential_kind: String,
}

impl Default for CocycleSettings {
    fn default() -> Self {
        CocycleSettings {
            family: "random".into(),
            tag: "SpR".into(),
            d: 1,
            period: 8,
            scale: 1.0,
            energy: 0.0,
            potential: "zero".into(),
            potential_kind: "hermitian".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LyapunovSettings {
    pub n: usize,
    pub samples: usize,
    /// `auto` or `qr`.
    pub method: String,
}

impl Default for LyapunovSettings {
    fn default() -> Self {
        LyapunovSettings { n: 10_000, samples: 8, method: "auto".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RotationSettings {
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub points: usize,
    pub t: f64,
    pub n: usize,
}

impl Default for RotationSettings {
    fn default() -> Self {
        RotationSettings { sigma_min: -3.0, sigma_max: 3.0, points: 200, t: 0.0, n: 4000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MFieldSettings {
    pub sigma: f64,
    pub t: f64,
    /// `plus` or `minus`.
    pub side: String,
    pub tol: f64,
    pub max_steps: usize,
}

impl Default for MFieldSettings {
    fn default() -> Self {
        MFieldSettings { sigma: 0.0, t: 0.1, side: "plus".into(), tol: 1e-9, max_steps: 100_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KotaniSettings {
    pub sigma: f64,
    pub t: f64,
    pub n: usize,
}

impl Default for KotaniSettings {
    fn default() -> Self {
        KotaniSettings { sigma: 0.0, t: 0.1, n: 4000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SmallTSettings {
    pub sigma: f64,
    pub t_list: Vec<f64>,
    pub n: usize,
}

impl Default for SmallTSettings {
    fn default() -> Self {
        SmallTSettings { sigma: 1.0, t_list: vec![0.2, 0.1, 0.05, 0.02], n: 20_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BandSettings {
    pub grid: usize,
    pub refine_tol: f64,
    /// Energy window for strip families.
    pub range: Option<[f64; 2]>,
}

impl Default for BandSettings {
    fn default() -> Self {
        BandSettings { grid: 4096, refine_tol: 1e-10, range: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StripScanSettings {
    pub range: [f64; 2],
    pub grid: usize,
    pub threshold: f64,
    pub n: usize,
    pub samples: usize,
}

impl Default for StripScanSettings {
    fn default() -> Self {
        StripScanSettings { range: [-3.0, 3.0], grid: 600, threshold: 1e-3, n: 10_000, samples: 8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhiSettings {
    pub epsilon: f64,
    pub eta: f64,
    pub nodes: usize,
}

impl Default for PhiSettings {
    fn default() -> Self {
        PhiSettings { epsilon: 0.2, eta: 0.05, nodes: 33 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DensitySettings {
    pub delta: f64,
    pub eta: f64,
    pub epsilon: f64,
    pub trials: usize,
}

impl Default for DensitySettings {
    fn default() -> Self {
        DensitySettings { delta: 0.5, eta: 0.05, epsilon: 0.2, trials: 100 }
    }
}

impl Settings {
    pub fn load(path: &Path) -> Result<Settings, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: &str| Err(CliError::Config(msg.to_string()));
        if self.cocycle.d == 0 {
            return bad("cocycle.d must be at least 1");
        }
        if self.cocycle.period == 0 {
            return bad("cocycle.period must be at least 1");
        }
        if self.threads == Some(0) {
            return bad("threads must be positive");
        }
        let positive = [
            ("mfield.tol", self.mfield.tol),
            ("bands.refine_tol", self.bands.refine_tol),
            ("strip_scan.threshold", self.strip_scan.threshold),
            ("phi_eps.epsilon", self.phi_eps.epsilon),
            ("phi_eps.eta", self.phi_eps.eta),
            ("density.delta", self.density.delta),
            ("density.eta", self.density.eta),
            ("density.epsilon", self.density.epsilon),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(CliError::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.strip_scan.range[1] <= self.strip_scan.range[0] {
            return bad("strip_scan.range must be increasing");
        }
        if self.rotation.sigma_max < self.rotation.sigma_min || self.rotation.points == 0 {
            return bad("rotation grid must be increasing and non-empty");
        }
        if self.small_t.t_list.iter().any(|t| !(*t > 0.0)) {
            return bad("small_t.t_list entries must be positive");
        }
        let p = &self.cocycle.potential;
        let builtin = p == "zero" || p.starts_with("constant:") || p.starts_with("anderson:");
        if !builtin && !Path::new(p).exists() {
            return Err(CliError::Config(format!("cocycle.potential: file '{p}' not found")));
        }
        Ok(())
    }
}
