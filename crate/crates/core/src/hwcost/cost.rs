use serde::{Deserialize, Serialize};

use super::{AcceleratorSpec, HwError};
use crate::arch::LayerNode;

/// Where one input tensor of a layer lives when the layer starts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TensorSource {
    /// Already in the executing core's SRAM.
    Local,
    /// Produced on another core, `hops` away.
    Remote { hops: u32 },
    /// Read from off-chip memory.
    OffChip,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorInput {
    pub bits: u64,
    pub source: TensorSource,
}

/// Placement of a layer's input tensors. Weights always stream from off-chip
/// and the output stays in the executing core's SRAM unless it spills.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Residency {
    pub inputs: Vec<TensorInput>,
}

impl Residency {
    pub fn local(bits: u64) -> Self {
        Self {
            inputs: vec![TensorInput {
                bits,
                source: TensorSource::Local,
            }],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerCost {
    /// pJ.
    pub energy: f64,
    /// Cycles.
    pub latency: u64,
    pub compute_energy: f64,
    pub memory_energy: f64,
    pub noc_energy: f64,
    pub compute_cycles: u64,
    pub stall_cycles: u64,
    pub transfer_cycles: u64,
    pub utilization: f64,
    pub offchip_bits: u64,
    pub sram_bits: u64,
    pub noc_bit_hops: u64,
    /// Activations did not fit in SRAM and were streamed off-chip.
    pub spilled: bool,
}

impl LayerCost {
    pub fn zero() -> Self {
        Self {
            energy: 0.0,
            latency: 0,
            compute_energy: 0.0,
            memory_energy: 0.0,
            noc_energy: 0.0,
            compute_cycles: 0,
            stall_cycles: 0,
            transfer_cycles: 0,
            utilization: 1.0,
            offchip_bits: 0,
            sram_bits: 0,
            noc_bit_hops: 0,
            spilled: false,
        }
    }
}

/// Array tiling `(tiles over rows, tiles over columns)` for a matrix layer.
fn tiles(spec: &AcceleratorSpec, cout: u64, cin: u64) -> (u64, u64) {
    (cout.div_ceil(spec.array_rows), cin.div_ceil(spec.array_cols))
}

/// Fraction of the array doing useful work.
pub fn utilization(layer: &LayerNode, spec: &AcceleratorSpec) -> f64 {
    match layer.mapped_channels() {
        Some((cout, cin)) => {
            let (tr, tc) = tiles(spec, cout, cin);
            (cout as f64 / (spec.array_rows * tr) as f64) * (cin as f64 / (spec.array_cols * tc) as f64)
        }
        None => 1.0,
    }
}

/// `ceil(MACs / (MACs-per-cycle * U))`, in exact integer arithmetic.
pub fn compute_cycles(layer: &LayerNode, spec: &AcceleratorSpec) -> u64 {
    if layer.macs == 0 {
        return 0;
    }
    match layer.mapped_channels() {
        // MACs-per-cycle * U = rows*cols * cout*cin / (rows*tr * cols*tc) = cout*cin / (tr*tc)
        Some((cout, cin)) => {
            let (tr, tc) = tiles(spec, cout, cin);
            let num = layer.macs as u128 * tr as u128 * tc as u128;
            let den = cout as u128 * cin as u128;
            num.div_ceil(den) as u64
        }
        None => layer.macs.div_ceil(spec.macs_per_cycle),
    }
}

/// Energy and latency of `layer` on `core`.
pub fn layer_cost(
    layer: &LayerNode,
    core: usize,
    spec: &AcceleratorSpec,
    residency: &Residency,
) -> Result<LayerCost, HwError> {
    let kind = spec.core_kind(core).ok_or(HwError::UnknownCore(core))?;
    if !kind.runs(layer.kind) {
        return Err(HwError::IncompatibleCore {
            layer: layer.name.clone(),
            core,
        });
    }
    let b = layer.bits as u64;
    let weight_bits = layer.weight_elements() * b;
    let input_bits: u64 = residency.inputs.iter().map(|t| t.bits).sum();
    let output_bits = layer.output.elements() * b;
    let spilled = input_bits + output_bits + weight_bits > spec.sram_bits();
    if spilled {
        log::warn!(
            "layer {} needs {} bits of SRAM, more than {}; streaming activations off-chip",
            layer.name,
            input_bits + output_bits + weight_bits,
            spec.sram_bits()
        );
    }

    let mut offchip = weight_bits;
    let mut sram = weight_bits;
    let mut bit_hops = 0u64;
    let mut transfer = 0u64;
    for t in &residency.inputs {
        match (spilled, t.source) {
            (false, TensorSource::Local) => {}
            (true, _) | (false, TensorSource::OffChip) => {
                offchip += t.bits;
                sram += t.bits;
            }
            (false, TensorSource::Remote { hops }) => {
                sram += t.bits;
                bit_hops += t.bits * hops as u64;
                transfer += t.bits.div_ceil(spec.noc_bits_per_cycle) + hops as u64;
            }
        }
    }
    if spilled {
        offchip += output_bits;
    }

    let compute = compute_cycles(layer, spec);
    let stall = offchip.div_ceil(spec.offchip_bits_per_cycle);
    let e = &spec.energy;
    let scale = (b as f64 / 8.0).powi(2);
    let compute_energy = layer.macs as f64 * e.e_mac8 * scale;
    let memory_energy = sram as f64 * e.e_sram + offchip as f64 * e.e_dram;
    let noc_energy = bit_hops as f64 * e.e_noc;
    Ok(LayerCost {
        energy: compute_energy + memory_energy + noc_energy,
        latency: compute.max(stall) + transfer,
        compute_energy,
        memory_energy,
        noc_energy,
        compute_cycles: compute,
        stall_cycles: stall,
        transfer_cycles: transfer,
        utilization: utilization(layer, spec),
        offchip_bits: offchip,
        sram_bits: sram,
        noc_bit_hops: bit_hops,
        spilled,
    })
}
