use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use uavxai_nn::io::{load_weights_into, save_weights, Sidecar};
use uavxai_nn::{Branched, LayerSpec, Real, Tensor};

use crate::sim::{Action, Kinematics, LidarConfig, Observation, FRAMES};
use crate::{Error, Result};

pub const ACTION_DIMS: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvLayer {
    pub filters: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

/// Widths shared by the actor and critic trunks and heads.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetConfig {
    /// Applied to every frame, each followed by a ReLU.
    pub conv: Vec<ConvLayer>,
    pub gru_units: usize,
    pub hidden: Vec<usize>,
    /// Goal distance is divided by this before entering the nets.
    pub distance_scale: f64,
}

impl Default for NetConfig {
    fn default() -> Self {
        let conv = |filters| ConvLayer {
            filters,
            kernel: 3,
            stride: 2,
            padding: 1,
        };
        Self {
            conv: vec![conv(4), conv(8), conv(8)],
            gru_units: 48,
            hidden: vec![64, 64],
            distance_scale: 20.0,
        }
    }
}

impl NetConfig {
    fn trunk(&self) -> Vec<LayerSpec> {
        let mut per_frame = Vec::new();
        for c in &self.conv {
            per_frame.push(LayerSpec::Conv2d {
                filters: c.filters,
                kernel: c.kernel,
                stride: c.stride,
                padding: c.padding,
            });
            per_frame.push(LayerSpec::Relu);
        }
        per_frame.push(LayerSpec::Flatten);
        vec![
            LayerSpec::TimeDistributed { layers: per_frame },
            LayerSpec::Gru { units: self.gru_units },
        ]
    }

    fn head(&self, outputs: usize, squash: bool) -> Vec<LayerSpec> {
        let mut specs = Vec::new();
        for &units in &self.hidden {
            specs.push(LayerSpec::Dense { units });
            specs.push(LayerSpec::Relu);
        }
        specs.push(LayerSpec::Dense { units: outputs });
        if squash {
            specs.push(LayerSpec::Tanh);
        }
        specs
    }
}

pub fn stack_dims(lidar: &LidarConfig) -> [usize; 4] {
    [FRAMES, 1, lidar.height, lidar.width]
}

pub fn stack_tensor<F: Real>(obs: &Observation, dims: [usize; 4]) -> Result<Tensor<F>> {
    let data = obs.frames.iter().flat_map(|f| f.data.iter().map(|&v| F::of(v as f64))).collect();
    Ok(Tensor::new(dims.to_vec(), data)?)
}

/// Everything needed to rebuild a net from its weight file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Architecture {
    role: String,
    network: NetConfig,
    lidar: LidarConfig,
    kinematics: Kinematics,
}

pub(crate) fn write_pair(dir: &Path, stem: &str, bytes: &[u8], sidecar: &Sidecar) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(format!("{stem}.uavw")), bytes)?;
    std::fs::write(dir.join(format!("{stem}.json")), serde_json::to_vec_pretty(sidecar)?)?;
    Ok(())
}

fn read_pair(weights: &Path, role: &str) -> Result<(Architecture, Vec<u8>)> {
    let sidecar: Sidecar = serde_json::from_slice(&std::fs::read(weights.with_extension("json"))?)?;
    let arch: Architecture = serde_json::from_value(sidecar.architecture)?;
    if arch.role != role {
        return Err(Error::Architecture(format!("expected a {role} weight file, found {}", arch.role)));
    }
    Ok((arch, std::fs::read(weights)?))
}

macro_rules! net_common {
    ($ty:ident, $role:literal) => {
        impl $ty {
            pub fn net(&self) -> &Branched<f32> {
                &self.net
            }

            pub fn net_mut(&mut self) -> &mut Branched<f32> {
                &mut self.net
            }

            pub fn config(&self) -> &NetConfig {
                &self.config
            }

            pub fn lidar(&self) -> &LidarConfig {
                &self.lidar
            }

            pub fn kinematics(&self) -> &Kinematics {
                &self.kinematics
            }

            pub fn stack_dims(&self) -> [usize; 4] {
                stack_dims(&self.lidar)
            }

            pub fn stack<F: Real>(&self, obs: &Observation) -> Result<Tensor<F>> {
                stack_tensor(obs, self.stack_dims())
            }

            /// Bearing over π and distance over the configured scale.
            pub fn positional(&self, obs: &Observation) -> [f64; 2] {
                [obs.bearing / std::f64::consts::PI, obs.distance / self.config.distance_scale]
            }

            fn architecture(&self) -> Architecture {
                Architecture {
                    role: $role.into(),
                    network: self.config.clone(),
                    lidar: self.lidar,
                    kinematics: self.kinematics,
                }
            }

            pub fn weight_bytes(&self) -> Vec<u8> {
                save_weights(&self.net)
            }

            /// Writes `<stem>.uavw` and its `<stem>.json` sidecar.
            pub fn save(&self, dir: &Path, stem: &str, optimizer: serde_json::Value) -> Result<()> {
                let sidecar = Sidecar::new(serde_json::to_value(self.architecture())?, optimizer);
                write_pair(dir, stem, &self.weight_bytes(), &sidecar)
            }

            pub fn load(weights: &Path) -> Result<Self> {
                let (arch, bytes) = read_pair(weights, $role)?;
                let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
                let mut me = Self::new(&arch.network, &arch.lidar, arch.kinematics, &mut rng)?;
                load_weights_into(&mut me.net, &bytes)?;
                Ok(me)
            }
        }
    };
}

/// μ(s): depth stack + (bearing, distance) → tanh-squashed (v, ω).
#[derive(Clone, Debug)]
pub struct Actor {
    net: Branched<f32>,
    config: NetConfig,
    lidar: LidarConfig,
    kinematics: Kinematics,
}

net_common!(Actor, "actor");

impl Actor {
    pub fn new<R: Rng + ?Sized>(config: &NetConfig, lidar: &LidarConfig, kinematics: Kinematics, rng: &mut R) -> Result<Self> {
        let net = Branched::build(&stack_dims(lidar), &config.trunk(), 2, &config.head(ACTION_DIMS, true), rng)?;
        Ok(Self {
            net,
            config: config.clone(),
            lidar: *lidar,
            kinematics,
        })
    }

    /// Raw tanh outputs, each in [−1, 1].
    pub fn normalized(&self, obs: &Observation) -> Result<[f32; 2]> {
        let side = self.positional(obs).map(|v| v as f32);
        let out = self.net.infer(&self.stack(obs)?, &side)?;
        Ok([out.data()[0], out.data()[1]])
    }

    pub fn act(&self, obs: &Observation) -> Result<Action> {
        let n = self.normalized(obs)?;
        Ok(Action::from_normalized([n[0] as f64, n[1] as f64], &self.kinematics))
    }
}

/// Q(s, a) with `a` in normalised units.
#[derive(Clone, Debug)]
pub struct Critic {
    net: Branched<f32>,
    config: NetConfig,
    lidar: LidarConfig,
    kinematics: Kinematics,
}

net_common!(Critic, "critic");

impl Critic {
    pub fn new<R: Rng + ?Sized>(config: &NetConfig, lidar: &LidarConfig, kinematics: Kinematics, rng: &mut R) -> Result<Self> {
        let net = Branched::build(&stack_dims(lidar), &config.trunk(), 2 + ACTION_DIMS, &config.head(1, false), rng)?;
        Ok(Self {
            net,
            config: config.clone(),
            lidar: *lidar,
            kinematics,
        })
    }

    pub fn side(&self, obs: &Observation, action: [f32; 2]) -> [f32; 4] {
        let p = self.positional(obs);
        [p[0] as f32, p[1] as f32, action[0], action[1]]
    }

    pub fn q(&self, obs: &Observation, action: [f32; 2]) -> Result<f32> {
        Ok(self.net.infer(&self.stack(obs)?, &self.side(obs, action))?.data()[0])
    }
}
