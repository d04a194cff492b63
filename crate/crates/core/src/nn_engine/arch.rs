//! The three network layouts and the encoding of feature rows into network
//! inputs and targets.
//!
//! * `hr_fcnn`: one row per (day, slot); predicts the half-hourly load from
//!   calendar one-hots, slot one-hot, time of year, temperatures and the
//!   same-slot load of the previous day.
//! * `lr_fcnn`: one row per day; daily aggregates as in the low-resolution
//!   additive model.
//! * `mr_cnn`: a small dense branch on the calendar plus three convolution
//!   branches, one per intraday vector, each fed as two channels (values
//!   and slot positions).
//!
//! Continuous inputs are standardized with training statistics; the day of
//! week is one-hot; time of year is fed raw. The scalar peak target is
//! divided by its training mean so the ReLU output works on a unit scale.

use serde::{Deserialize, Serialize};

use super::{
    ordinal_decode, ordinal_encode, train, BranchSpec, LayerSpec, Loss, Network, NetworkSpec, OutputKind,
    Sample, Shape, TrainConfig,
};
use crate::error::{Error, Result};
use crate::features::{DailyRow, HighResRow};
use crate::ingest::SLOTS_PER_DAY;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    HrFcnn,
    LrFcnn,
    MrCnn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NnTarget {
    Dp,
    Ip,
}

/// Layer sizes of the architectures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchConfig {
    pub hidden: usize,
    pub dropout: f64,
    pub calendar_hidden: usize,
    pub conv1_filters: usize,
    pub conv1_kernel: usize,
    pub conv2_filters: usize,
    pub conv2_kernel: usize,
    pub head_hidden: usize,
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self {
            hidden: 50,
            dropout: 0.1,
            calendar_hidden: 16,
            conv1_filters: 8,
            conv1_kernel: 7,
            conv2_filters: 4,
            conv2_kernel: 5,
            head_hidden: 64,
        }
    }
}

fn output_layers(input: usize, target: NnTarget) -> (Vec<LayerSpec>, OutputKind) {
    match target {
        NnTarget::Dp => (
            vec![LayerSpec::Dense { input, output: 1 }, LayerSpec::Relu],
            OutputKind::DpScalar,
        ),
        NnTarget::Ip => (
            vec![
                LayerSpec::Dense {
                    input,
                    output: SLOTS_PER_DAY,
                },
                LayerSpec::Sigmoid,
            ],
            OutputKind::IpOrdinal48,
        ),
    }
}

pub const LR_INPUTS: usize = 7 + 1 + 6;
pub const HR_INPUTS: usize = 7 + SLOTS_PER_DAY + 1 + 3;
pub const CALENDAR_INPUTS: usize = 7 + 1;
pub const CONV_BRANCHES: [&str; 3] = ["matTem", "matTem95", "matLag"];

/// Number of raw inputs of a fully connected architecture.
pub fn input_width(arch: Architecture) -> usize {
    match arch {
        Architecture::HrFcnn => HR_INPUTS,
        Architecture::LrFcnn => LR_INPUTS,
        Architecture::MrCnn => CALENDAR_INPUTS,
    }
}

pub fn build_architecture(arch: Architecture, target: NnTarget) -> NetworkSpec {
    build_architecture_with(arch, target, input_width(arch), &ArchConfig::default())
}

/// Layout for `arch`; `n_inputs` is the width of the fully connected input
/// (or of the calendar branch for `mr_cnn`).
pub fn build_architecture_with(arch: Architecture, target: NnTarget, n_inputs: usize, cfg: &ArchConfig) -> NetworkSpec {
    match arch {
        Architecture::HrFcnn | Architecture::LrFcnn => {
            let (out, output) = output_layers(cfg.hidden, target);
            NetworkSpec {
                branches: vec![BranchSpec {
                    name: "inputs".into(),
                    input: Shape::flat(n_inputs),
                    layers: vec![],
                }],
                head: [
                    vec![
                        LayerSpec::Dense {
                            input: n_inputs,
                            output: cfg.hidden,
                        },
                        LayerSpec::Relu,
                        LayerSpec::Dropout { rate: cfg.dropout },
                    ],
                    out,
                ]
                .concat(),
                output,
            }
        }
        Architecture::MrCnn => {
            let mut branches = vec![BranchSpec {
                name: "calendar".into(),
                input: Shape::flat(n_inputs),
                layers: vec![
                    LayerSpec::Dense {
                        input: n_inputs,
                        output: cfg.calendar_hidden,
                    },
                    LayerSpec::Relu,
                ],
            }];
            let len1 = SLOTS_PER_DAY - cfg.conv1_kernel + 1;
            let len2 = len1.saturating_sub(cfg.conv2_kernel) + 1;
            for name in CONV_BRANCHES {
                branches.push(BranchSpec {
                    name: name.into(),
                    input: Shape {
                        channels: 2,
                        length: SLOTS_PER_DAY,
                    },
                    layers: vec![
                        LayerSpec::Conv1d {
                            channels_in: 2,
                            filters: cfg.conv1_filters,
                            kernel: cfg.conv1_kernel,
                            stride: 1,
                        },
                        LayerSpec::Relu,
                        LayerSpec::Conv1d {
                            channels_in: cfg.conv1_filters,
                            filters: cfg.conv2_filters,
                            kernel: cfg.conv2_kernel,
                            stride: 1,
                        },
                        LayerSpec::Relu,
                        LayerSpec::Flatten,
                    ],
                });
            }
            let concat = cfg.calendar_hidden + CONV_BRANCHES.len() * cfg.conv2_filters * len2;
            let (out, output) = output_layers(cfg.head_hidden, target);
            NetworkSpec {
                branches,
                head: [
                    vec![
                        LayerSpec::Dense {
                            input: concat,
                            output: cfg.head_hidden,
                        },
                        LayerSpec::Relu,
                        LayerSpec::Dropout { rate: cfg.dropout },
                    ],
                    out,
                ]
                .concat(),
                output,
            }
        }
    }
}

/// Mean and standard deviation from training data (sd floored at 1e-9).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: f64,
    pub sd: f64,
}

impl Standardizer {
    pub fn fit(values: impl IntoIterator<Item = f64>) -> Self {
        let v: Vec<f64> = values.into_iter().collect();
        let n = v.len().max(1) as f64;
        let mean = v.iter().sum::<f64>() / n;
        let sd = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
        Self {
            mean,
            sd: sd.max(1e-9),
        }
    }

    pub fn apply(&self, x: f64) -> f64 {
        (x - self.mean) / self.sd
    }
}

fn one_hot(k: usize, n: usize) -> impl Iterator<Item = f64> {
    (0..n).map(move |j| if j == k { 1.0 } else { 0.0 })
}

/// Training-fold statistics that turn feature rows into network inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Encoder {
    pub arch: Architecture,
    pub target: NnTarget,
    /// Standardizers of the continuous scalar inputs, in input order.
    pub scalars: Vec<Standardizer>,
    /// Standardizers of the intraday vectors (pooled over slots).
    pub vectors: Vec<Standardizer>,
    /// Training mean of the scalar target.
    pub target_scale: f64,
}

fn lr_scalars(r: &DailyRow) -> [f64; 6] {
    [r.dp24, r.ip24 as f64, r.temp_max, r.temp95_max, r.temp_min, r.temp95_min]
}

fn hr_scalars(r: &HighResRow) -> [f64; 3] {
    [r.temp, r.temp95, r.load24]
}

fn vectors_of(r: &DailyRow) -> [&Vec<f64>; 3] {
    [&r.mat_tem, &r.mat_tem95, &r.mat_lag]
}

fn scale_of(values: impl Iterator<Item = f64>) -> Result<f64> {
    let v: Vec<f64> = values.collect();
    let mean = v.iter().sum::<f64>() / v.len().max(1) as f64;
    if !(mean > 0.0) {
        return Err(Error::Parameter(format!(
            "scalar target needs a positive training mean, got {mean}"
        )));
    }
    Ok(mean)
}

impl Encoder {
    pub fn fit_daily(arch: Architecture, target: NnTarget, rows: &[DailyRow]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::InsufficientData("no training days".into()));
        }
        let (scalars, vectors) = match arch {
            Architecture::LrFcnn => (
                (0..6).map(|j| Standardizer::fit(rows.iter().map(|r| lr_scalars(r)[j]))).collect(),
                vec![],
            ),
            Architecture::MrCnn => (
                vec![],
                (0..3)
                    .map(|j| Standardizer::fit(rows.iter().flat_map(|r| vectors_of(r)[j].iter().copied())))
                    .collect(),
            ),
            Architecture::HrFcnn => {
                return Err(Error::Parameter("hr_fcnn is trained on half-hourly rows".into()))
            }
        };
        let target_scale = match target {
            NnTarget::Dp => scale_of(rows.iter().map(|r| r.dp))?,
            NnTarget::Ip => 1.0,
        };
        Ok(Self {
            arch,
            target,
            scalars,
            vectors,
            target_scale,
        })
    }

    pub fn fit_highres(rows: &[HighResRow]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::InsufficientData("no training rows".into()));
        }
        Ok(Self {
            arch: Architecture::HrFcnn,
            target: NnTarget::Dp,
            scalars: (0..3).map(|j| Standardizer::fit(rows.iter().map(|r| hr_scalars(r)[j]))).collect(),
            vectors: vec![],
            target_scale: scale_of(rows.iter().map(|r| r.load))?,
        })
    }

    pub fn daily_inputs(&self, r: &DailyRow) -> Vec<Vec<f64>> {
        match self.arch {
            Architecture::LrFcnn => {
                let mut x: Vec<f64> = one_hot(r.dow, 7).collect();
                x.push(r.toy);
                x.extend(lr_scalars(r).iter().zip(&self.scalars).map(|(v, s)| s.apply(*v)));
                vec![x]
            }
            _ => {
                let mut cal: Vec<f64> = one_hot(r.dow, 7).collect();
                cal.push(r.toy);
                let mut out = vec![cal];
                let slot_channel = (0..SLOTS_PER_DAY).map(|t| t as f64 / (SLOTS_PER_DAY - 1) as f64);
                for (v, s) in vectors_of(r).iter().zip(&self.vectors) {
                    let mut x: Vec<f64> = v.iter().map(|a| s.apply(*a)).collect();
                    x.extend(slot_channel.clone());
                    out.push(x);
                }
                out
            }
        }
    }

    pub fn highres_inputs(&self, r: &HighResRow) -> Vec<Vec<f64>> {
        let mut x: Vec<f64> = one_hot(r.dow, 7).chain(one_hot(r.t, SLOTS_PER_DAY)).collect();
        x.push(r.toy);
        x.extend(hr_scalars(r).iter().zip(&self.scalars).map(|(v, s)| s.apply(*v)));
        vec![x]
    }

    pub fn daily_target(&self, r: &DailyRow) -> Result<Vec<f64>> {
        match self.target {
            NnTarget::Dp => Ok(vec![r.dp / self.target_scale]),
            NnTarget::Ip => ordinal_encode(r.ip, SLOTS_PER_DAY),
        }
    }
}

/// A trained network with its encoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeuralModel {
    pub encoder: Encoder,
    pub network: Network,
    pub loss_trace: Vec<f64>,
}

fn loss_for(target: NnTarget) -> Loss {
    match target {
        NnTarget::Dp => Loss::Mse,
        NnTarget::Ip => Loss::OrdinalBce,
    }
}

impl NeuralModel {
    /// Train `lr_fcnn` or `mr_cnn` on daily rows.
    pub fn fit_daily(
        arch: Architecture,
        target: NnTarget,
        rows: &[DailyRow],
        train_cfg: &TrainConfig,
        arch_cfg: &ArchConfig,
    ) -> Result<Self> {
        let encoder = Encoder::fit_daily(arch, target, rows)?;
        let data = rows
            .iter()
            .map(|r| {
                Ok(Sample {
                    inputs: encoder.daily_inputs(r),
                    target: encoder.daily_target(r)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let spec = build_architecture_with(arch, target, input_width(arch), arch_cfg);
        let mut network = Network::new(spec, train_cfg.seed)?;
        let cfg = TrainConfig {
            loss: loss_for(target),
            ..train_cfg.clone()
        };
        let loss_trace = train(&mut network, &data, &cfg)?;
        Ok(Self {
            encoder,
            network,
            loss_trace,
        })
    }

    /// Train `hr_fcnn` on half-hourly rows (scalar load output).
    pub fn fit_highres(rows: &[HighResRow], train_cfg: &TrainConfig, arch_cfg: &ArchConfig) -> Result<Self> {
        let encoder = Encoder::fit_highres(rows)?;
        let data: Vec<Sample> = rows
            .iter()
            .map(|r| Sample {
                inputs: encoder.highres_inputs(r),
                target: vec![r.load / encoder.target_scale],
            })
            .collect();
        let spec = build_architecture_with(Architecture::HrFcnn, NnTarget::Dp, HR_INPUTS, arch_cfg);
        let mut network = Network::new(spec, train_cfg.seed)?;
        let cfg = TrainConfig {
            loss: Loss::Mse,
            ..train_cfg.clone()
        };
        let loss_trace = train(&mut network, &data, &cfg)?;
        Ok(Self {
            encoder,
            network,
            loss_trace,
        })
    }

    /// DP in original units, or the decoded IP slot, per daily row.
    pub fn predict_daily(&self, rows: &[DailyRow]) -> Result<Vec<f64>> {
        rows.iter()
            .map(|r| {
                let out = self.network.forward(&self.encoder.daily_inputs(r))?;
                Ok(match self.encoder.target {
                    NnTarget::Dp => out[0] * self.encoder.target_scale,
                    NnTarget::Ip => ordinal_decode(&out) as f64,
                })
            })
            .collect()
    }

    /// Half-hourly load in original units per row.
    pub fn predict_highres(&self, rows: &[HighResRow]) -> Result<Vec<f64>> {
        rows.iter()
            .map(|r| Ok(self.network.forward(&self.encoder.highres_inputs(r))?[0] * self.encoder.target_scale))
            .collect()
    }
}
