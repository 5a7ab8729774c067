//! Reference architectures and model construction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::actnorm::ActNorm;
use crate::flow::coupling::CouplingLayer;
use crate::flow::dequant::DequantStage;
use crate::flow::mask::Mask;
use crate::flow::model::{Flow, FlowModel};
use crate::flow::vec_coupling::VecCouplingLayer;
use crate::numerics::rng::RngStream;

/// Default parameter-init seed used when no training seed applies (loading
/// a checkpoint overwrites every parameter anyway).
pub const DEFAULT_INIT_SEED: u64 = 0x464C_4443;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ArchKind {
    DfldSimple,
    FldMultiscale,
    Flow2d(usize),
}

/// Parse an architecture name: `dfld-simple`, `fld-multiscale`, `flow2d(k)`.
pub fn parse_arch(name: &str) -> Result<ArchKind> {
    match name {
        "dfld-simple" => Ok(ArchKind::DfldSimple),
        "fld-multiscale" => Ok(ArchKind::FldMultiscale),
        _ => {
            if let Some(k) = name.strip_prefix("flow2d(").and_then(|s| s.strip_suffix(')')) {
                let layers: usize = k.trim().parse().map_err(|_| {
                    Error::config(format!("invalid coupling count in {name:?}"))
                })?;
                Ok(ArchKind::Flow2d(layers))
            } else {
                Err(Error::config(format!(
                    "unknown architecture {name:?}; valid: dfld-simple, fld-multiscale, flow2d(k)"
                )))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InputSpec {
    Image { channels: usize, height: usize, width: usize },
    Points { dim: usize },
}

impl InputSpec {
    pub fn describe(&self) -> String {
        match self {
            InputSpec::Image { channels, height, width } => {
                format!("images {channels}x{height}x{width}")
            }
            InputSpec::Points { dim } => format!("points dim {dim}"),
        }
    }
}

/// Architecture identity carried by models and checkpoints.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchDescriptor {
    pub name: String,
    pub input: InputSpec,
}

impl ArchDescriptor {
    pub fn image(name: &str, channels: usize, height: usize, width: usize) -> Result<ArchDescriptor> {
        let kind = parse_arch(name)?;
        match kind {
            ArchKind::Flow2d(_) => {
                return Err(Error::config(format!("{name} is a 2D architecture, not an image one")))
            }
            ArchKind::DfldSimple => {
                if height < 2 || width < 2 || channels == 0 {
                    return Err(Error::config(format!(
                        "dfld-simple requires images at least 2x2, got {channels}x{height}x{width}"
                    )));
                }
            }
            ArchKind::FldMultiscale => {
                if height % 4 != 0 || width % 4 != 0 || height < 4 || width < 4 || channels == 0 {
                    return Err(Error::config(format!(
                        "fld-multiscale requires H, W divisible by 4, got {height}x{width}"
                    )));
                }
            }
        }
        Ok(ArchDescriptor {
            name: name.to_string(),
            input: InputSpec::Image { channels, height, width },
        })
    }

    pub fn points(name: &str, dim: usize) -> Result<ArchDescriptor> {
        match parse_arch(name)? {
            ArchKind::Flow2d(_) => {
                if dim < 2 {
                    return Err(Error::config("flow2d requires dim >= 2"));
                }
                Ok(ArchDescriptor { name: name.to_string(), input: InputSpec::Points { dim } })
            }
            _ => Err(Error::config(format!("{name} is an image architecture"))),
        }
    }

    pub fn kind(&self) -> ArchKind {
        parse_arch(&self.name).expect("descriptor name already validated")
    }
}

/// Hidden widths follow the reference descriptors: dequantization subnets 16,
/// first-scale couplings 32, post-squeeze couplings 48, final block 64.
const DEQUANT_HIDDEN: usize = 16;
const SCALE1_HIDDEN: usize = 32;
const SCALE2_HIDDEN: usize = 48;
const SCALE3_HIDDEN: usize = 64;
const FLOW2D_HIDDEN: usize = 64;

pub fn build_model(desc: &ArchDescriptor) -> Result<FlowModel> {
    build_model_seeded(desc, DEFAULT_INIT_SEED)
}

/// Build with explicit parameter-init seed (used by training, where the two
/// D-FLD flows need independent initializations).
pub fn build_model_seeded(desc: &ArchDescriptor, init_seed: u64) -> Result<FlowModel> {
    let mut rng = RngStream::from_seed(init_seed);
    match (desc.kind(), &desc.input) {
        (ArchKind::DfldSimple, &InputSpec::Image { channels, .. }) => {
            let dequant = variational_dequant(channels, 4, &mut rng);
            let transforms = (0..8)
                .map(|i| {
                    Flow::Coupling(CouplingLayer::new(
                        channels,
                        SCALE1_HIDDEN,
                        Mask::checkerboard(i),
                        &mut rng,
                    ))
                })
                .collect();
            Ok(FlowModel::new(desc.clone(), Some(dequant), transforms))
        }
        (ArchKind::FldMultiscale, &InputSpec::Image { channels, .. }) => {
            let dequant = variational_dequant(channels, 4, &mut rng);
            let mut transforms = Vec::new();
            for i in 0..2 {
                transforms.push(Flow::Coupling(CouplingLayer::new(
                    channels,
                    SCALE1_HIDDEN,
                    Mask::checkerboard(i),
                    &mut rng,
                )));
            }
            transforms.push(Flow::Squeeze);
            for i in 0..2 {
                transforms.push(Flow::Coupling(CouplingLayer::new(
                    channels * 4,
                    SCALE2_HIDDEN,
                    Mask::channel(i),
                    &mut rng,
                )));
            }
            transforms.push(Flow::Squeeze);
            transforms.push(Flow::Split);
            for i in 0..4 {
                transforms.push(Flow::Coupling(CouplingLayer::new(
                    channels * 8,
                    SCALE3_HIDDEN,
                    Mask::channel(i),
                    &mut rng,
                )));
            }
            Ok(FlowModel::new(desc.clone(), Some(dequant), transforms))
        }
        (ArchKind::Flow2d(layers), &InputSpec::Points { dim }) => {
            let mut transforms = Vec::new();
            for i in 0..layers {
                transforms.push(Flow::ActNorm(ActNorm::new(dim)));
                transforms.push(Flow::VecCoupling(VecCouplingLayer::new(
                    dim,
                    FLOW2D_HIDDEN,
                    Mask::channel(i),
                    &mut rng,
                )));
            }
            Ok(FlowModel::new(desc.clone(), None, transforms))
        }
        _ => Err(Error::config(format!(
            "architecture {} does not match input {}",
            desc.name,
            desc.input.describe()
        ))),
    }
}

fn variational_dequant(channels: usize, layers: usize, rng: &mut RngStream) -> DequantStage {
    let couplings = (0..layers)
        .map(|i| {
            CouplingLayer::new_conditional(
                channels,
                channels,
                DEQUANT_HIDDEN,
                Mask::checkerboard(i),
                rng,
            )
        })
        .collect();
    DequantStage::variational(couplings)
}
