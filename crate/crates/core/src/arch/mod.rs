//! Search space: backbone, exit heads, quantization options, chromosome
//! encoding and expansion into layer graphs.

mod backbone;
mod chromosome;
mod graph;
mod space;

pub use backbone::{BackboneSpec, BlockSpec, MountPoint, OperatorKind, Shape};
pub use chromosome::{Chromosome, ChromosomeHash, ExitGene, MountGene};
pub use graph::{
    backbone_mount_macs, cumulative_macs, expand_layers, ExitSite, LayerGraph, LayerKind,
    LayerNode, Segment,
};
pub use space::{
    sample_architecture, search_space_size, search_space_size_binomial, valid_bits, Activation,
    EennArchitecture, ExitConfig, ExitHeadSpec, QuantScheme, SearchSpace, FULL_PRECISION_BITS,
};

#[derive(Debug, thiserror::Error)]
pub enum ArchError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("backbone line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invalid backbone: {0}")]
    InvalidBackbone(String),
    #[error("invalid exit head: {0}")]
    InvalidHead(String),
    #[error("invalid search space: {0}")]
    InvalidSpace(String),
    #[error("invalid architecture: {0}")]
    InvalidArchitecture(String),
    #[error("bit width {0} is not supported")]
    InvalidBits(u8),
    #[error("mount {0} is not on the backbone")]
    UnknownMount(String),
    #[error("malformed chromosome: {0}")]
    MalformedChromosome(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("exit {exit} out of range for {exits} exits")]
    ExitOutOfRange { exit: usize, exits: usize },
    #[error("search space size overflows u64 for H={h}, p={p}, q={q}")]
    Overflow { h: u64, p: u64, q: u64 },
}
