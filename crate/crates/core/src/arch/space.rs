use std::collections::BTreeMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::chromosome::{Chromosome, ExitGene, MountGene};
use super::{ArchError, BackboneSpec};

/// Bit width standing for "not quantized".
pub const FULL_PRECISION_BITS: u8 = 32;

pub fn valid_bits(b: u8) -> bool {
    (2..=16).contains(&b) || b == FULL_PRECISION_BITS
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Relu6,
}

/// Exit classifier: max-pool to a fixed spatial size, then one or two linear
/// layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ExitHeadSpec {
    pub pooled: (u32, u32),
    pub linear_layers: u8,
    /// Width of the hidden layer; unused with a single linear layer.
    pub hidden: u32,
    #[serde(default)]
    pub activation: Activation,
}

impl ExitHeadSpec {
    pub const DEFAULT_HIDDEN: u32 = 128;

    pub fn single() -> Self {
        Self {
            pooled: (4, 4),
            linear_layers: 1,
            hidden: Self::DEFAULT_HIDDEN,
            activation: Activation::Relu6,
        }
    }

    pub fn double(hidden: u32) -> Self {
        Self {
            linear_layers: 2,
            hidden,
            ..Self::single()
        }
    }

    pub fn with_pooled(mut self, h: u32, w: u32) -> Self {
        self.pooled = (h, w);
        self
    }

    pub fn validate(&self) -> Result<(), ArchError> {
        if !(1..=2).contains(&self.linear_layers) {
            return Err(ArchError::InvalidHead(format!(
                "linear layer count {} not in {{1, 2}}",
                self.linear_layers
            )));
        }
        if self.pooled.0 == 0 || self.pooled.1 == 0 {
            return Err(ArchError::InvalidHead("pooled size must be positive".into()));
        }
        if self.linear_layers == 2 && self.hidden == 0 {
            return Err(ArchError::InvalidHead("hidden width must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantScheme {
    pub backbone_bits: u8,
    /// One entry per exit, final classifier included.
    pub exit_bits: Vec<u8>,
    /// Calibrated clip magnitudes keyed by layer name.
    #[serde(default)]
    pub clips: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExitConfig {
    /// Index into the backbone's mount list.
    pub mount: usize,
    pub head: ExitHeadSpec,
}

/// A backbone with early exits attached; one point of the search space.
#[derive(Debug, Clone, PartialEq)]
pub struct EennArchitecture {
    pub backbone: Arc<BackboneSpec>,
    pub exits: Vec<ExitConfig>,
    pub quant: QuantScheme,
}

impl EennArchitecture {
    pub fn new(
        backbone: Arc<BackboneSpec>,
        exits: Vec<ExitConfig>,
        quant: QuantScheme,
    ) -> Result<Self, ArchError> {
        let arch = Self {
            backbone,
            exits,
            quant,
        };
        arch.validate()?;
        Ok(arch)
    }

    /// Backbone plus its final classifier only.
    pub fn static_counterpart(&self) -> Self {
        let last = self.exits.last().expect("validated architecture has an exit").clone();
        Self {
            backbone: self.backbone.clone(),
            exits: vec![last],
            quant: QuantScheme {
                backbone_bits: self.quant.backbone_bits,
                exit_bits: vec![*self.quant.exit_bits.last().expect("one per exit")],
                clips: BTreeMap::new(),
            },
        }
    }

    /// Exit count `m`, final classifier included.
    pub fn exit_count(&self) -> usize {
        self.exits.len()
    }

    pub fn exit_labels(&self) -> Vec<&str> {
        self.exits
            .iter()
            .map(|e| self.backbone.mounts[e.mount].label.as_str())
            .collect()
    }

    pub fn validate(&self) -> Result<(), ArchError> {
        let mounts = self.backbone.mounts.len();
        if self.exits.is_empty() || self.exits.len() > mounts {
            return Err(ArchError::InvalidArchitecture(format!(
                "{} exits on a backbone with {} mounting points",
                self.exits.len(),
                mounts
            )));
        }
        for e in &self.exits {
            if e.mount >= mounts {
                return Err(ArchError::UnknownMount(format!("#{}", e.mount)));
            }
            e.head.validate()?;
        }
        if self.exits.windows(2).any(|w| w[1].mount <= w[0].mount) {
            return Err(ArchError::InvalidArchitecture(
                "exits must be strictly ordered by mount depth".into(),
            ));
        }
        if self.exits.last().map(|e| e.mount) != Some(mounts - 1) {
            return Err(ArchError::InvalidArchitecture(
                "the final mount must carry the last exit".into(),
            ));
        }
        if self.quant.exit_bits.len() != self.exits.len() {
            return Err(ArchError::InvalidArchitecture(format!(
                "{} exit bit widths for {} exits",
                self.quant.exit_bits.len(),
                self.exits.len()
            )));
        }
        let all_bits = std::iter::once(self.quant.backbone_bits).chain(self.quant.exit_bits.iter().copied());
        for b in all_bits {
            if !valid_bits(b) {
                return Err(ArchError::InvalidBits(b));
            }
        }
        Ok(())
    }
}

/// The search space: a fixed backbone, `p` head options and `q` bit-width
/// options per exit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub backbone: Arc<BackboneSpec>,
    pub heads: Vec<ExitHeadSpec>,
    pub quant_bits: Vec<u8>,
    pub backbone_bits: u8,
}

impl SearchSpace {
    pub fn new(
        backbone: Arc<BackboneSpec>,
        heads: Vec<ExitHeadSpec>,
        quant_bits: Vec<u8>,
        backbone_bits: u8,
    ) -> Result<Self, ArchError> {
        let space = Self {
            backbone,
            heads,
            quant_bits,
            backbone_bits,
        };
        space.validate()?;
        Ok(space)
    }

    /// Two head depths (one or two linear layers) and two precisions (8, 4 bit)
    /// on an 8-bit backbone.
    pub fn with_defaults(backbone: Arc<BackboneSpec>) -> Self {
        Self::new(
            backbone,
            vec![ExitHeadSpec::single(), ExitHeadSpec::double(ExitHeadSpec::DEFAULT_HIDDEN)],
            vec![8, 4],
            8,
        )
        .expect("default space is valid")
    }

    /// The bundled dense toy backbone with the default options, heads pooling
    /// to 1x1.
    pub fn toy() -> Self {
        Self::new(
            Arc::new(BackboneSpec::toy_dense()),
            vec![
                ExitHeadSpec::single().with_pooled(1, 1),
                ExitHeadSpec::double(32).with_pooled(1, 1),
            ],
            vec![8, 4],
            8,
        )
        .expect("toy space is valid")
    }

    pub fn validate(&self) -> Result<(), ArchError> {
        self.backbone.validate()?;
        if self.heads.is_empty() || self.heads.len() > u8::MAX as usize {
            return Err(ArchError::InvalidSpace("head option count must be in 1..=255".into()));
        }
        if self.quant_bits.is_empty() || self.quant_bits.len() > u8::MAX as usize {
            return Err(ArchError::InvalidSpace("bit-width option count must be in 1..=255".into()));
        }
        for h in &self.heads {
            h.validate()?;
        }
        for &b in self.quant_bits.iter().chain(std::iter::once(&self.backbone_bits)) {
            if !valid_bits(b) {
                return Err(ArchError::InvalidBits(b));
            }
        }
        Ok(())
    }

    /// `H`: optional mounting points.
    pub fn h(&self) -> usize {
        self.backbone.optional_mounts()
    }

    /// `p`: head options.
    pub fn p(&self) -> usize {
        self.heads.len()
    }

    /// `q`: bit-width options.
    pub fn q(&self) -> usize {
        self.quant_bits.len()
    }

    pub fn size(&self) -> Result<u64, ArchError> {
        search_space_size(self.h() as u64, self.p() as u64, self.q() as u64)
    }

    pub fn encode(&self, arch: &EennArchitecture) -> Result<Chromosome, ArchError> {
        arch.validate()?;
        if *arch.backbone != *self.backbone {
            return Err(ArchError::InvalidArchitecture(
                "architecture uses a different backbone".into(),
            ));
        }
        if arch.quant.backbone_bits != self.backbone_bits {
            return Err(ArchError::InvalidArchitecture(format!(
                "backbone precision {} is not the space's {}",
                arch.quant.backbone_bits, self.backbone_bits
            )));
        }
        let gene_of = |i: usize| -> Result<ExitGene, ArchError> {
            let head = self
                .heads
                .iter()
                .position(|h| *h == arch.exits[i].head)
                .ok_or_else(|| ArchError::InvalidArchitecture(format!("exit {i}: head not in space")))?;
            let quant = self
                .quant_bits
                .iter()
                .position(|&b| b == arch.quant.exit_bits[i])
                .ok_or(ArchError::InvalidBits(arch.quant.exit_bits[i]))?;
            Ok(ExitGene {
                head: head as u8,
                quant: quant as u8,
            })
        };
        let mut mounts = vec![MountGene::absent(); self.h()];
        let last_index = arch.exits.len() - 1;
        for i in 0..last_index {
            mounts[arch.exits[i].mount] = MountGene {
                present: true,
                gene: gene_of(i)?,
            };
        }
        Ok(Chromosome {
            mounts,
            last: gene_of(last_index)?,
        })
    }

    /// Total on correctly sized chromosomes: genes of absent mounts are ignored.
    pub fn decode(&self, chrom: &Chromosome) -> Result<EennArchitecture, ArchError> {
        if chrom.mounts.len() != self.h() {
            return Err(ArchError::MalformedChromosome(format!(
                "{} mount groups, space has {}",
                chrom.mounts.len(),
                self.h()
            )));
        }
        let mut exits = Vec::new();
        let mut bits = Vec::new();
        let mut push = |mount: usize, g: &ExitGene| -> Result<(), ArchError> {
            let head = *self.heads.get(g.head as usize).ok_or_else(|| {
                ArchError::MalformedChromosome(format!("head option {} out of range", g.head))
            })?;
            let b = *self.quant_bits.get(g.quant as usize).ok_or_else(|| {
                ArchError::MalformedChromosome(format!("quant option {} out of range", g.quant))
            })?;
            exits.push(ExitConfig { mount, head });
            bits.push(b);
            Ok(())
        };
        for (i, m) in chrom.mounts.iter().enumerate() {
            if m.present {
                push(i, &m.gene)?;
            }
        }
        push(self.h(), &chrom.last)?;
        EennArchitecture::new(
            self.backbone.clone(),
            exits,
            QuantScheme {
                backbone_bits: self.backbone_bits,
                exit_bits: bits,
                clips: BTreeMap::new(),
            },
        )
    }

    /// Uniform over present bits and option indices.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Chromosome {
        let gene = |rng: &mut R| ExitGene {
            head: rng.random_range(0..self.p()) as u8,
            quant: rng.random_range(0..self.q()) as u8,
        };
        let mounts = (0..self.h())
            .map(|_| {
                let present = rng.random_bool(0.5);
                let g = gene(rng);
                MountGene { present, gene: g }
            })
            .collect();
        let last = gene(rng);
        Chromosome { mounts, last }.canonical()
    }

    /// Backbone MACs up to each mount as a fraction of the whole backbone.
    pub fn mount_mac_fractions(&self) -> Vec<f64> {
        super::graph::backbone_mount_macs(&self.backbone)
            .map(|cum| {
                let total = *cum.last().unwrap_or(&1) as f64;
                cum.iter().map(|&c| c as f64 / total.max(1.0)).collect()
            })
            .unwrap_or_else(|_| vec![0.0; self.backbone.mounts.len()])
    }
}

/// Reproducible draw from `space` for a given seed.
pub fn sample_architecture(space: &SearchSpace, seed: u64) -> Chromosome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    space.sample(&mut rng)
}

/// Number of distinct architectures, `pq(1+pq)^H`.
pub fn search_space_size(h: u64, p: u64, q: u64) -> Result<u64, ArchError> {
    if p == 0 || q == 0 {
        return Err(ArchError::InvalidSpace("p and q must be >= 1".into()));
    }
    let overflow = || ArchError::Overflow { h, p, q };
    let pq = p.checked_mul(q).ok_or_else(overflow)?;
    let base = pq.checked_add(1).ok_or_else(overflow)?;
    let exp = u32::try_from(h).map_err(|_| overflow())?;
    let pow = base.checked_pow(exp).ok_or_else(overflow)?;
    pq.checked_mul(pow).ok_or_else(overflow)
}

/// The same count summed over the number of optional exits,
/// `sum_k C(H,k) (pq)^(k+1)`, used as a self-check.
pub fn search_space_size_binomial(h: u64, p: u64, q: u64) -> Result<u64, ArchError> {
    if p == 0 || q == 0 {
        return Err(ArchError::InvalidSpace("p and q must be >= 1".into()));
    }
    let overflow = || ArchError::Overflow { h, p, q };
    let pq = p.checked_mul(q).ok_or_else(overflow)?;
    let mut total: u64 = 0;
    let mut binom: u64 = 1;
    for k in 0..=h {
        if k > 0 {
            // C(h,k) = C(h,k-1) * (h-k+1) / k, exact at every step
            binom = binom
                .checked_mul(h - k + 1)
                .ok_or_else(overflow)?
                / k;
        }
        let exp = u32::try_from(k + 1).map_err(|_| overflow())?;
        let term = binom
            .checked_mul(pq.checked_pow(exp).ok_or_else(overflow)?)
            .ok_or_else(overflow)?;
        total = total.checked_add(term).ok_or_else(overflow)?;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn size_examples() {
        assert_eq!(search_space_size(0, 1, 1).unwrap(), 1);
        assert_eq!(search_space_size(2, 1, 1).unwrap(), 4);
        assert_eq!(search_space_size(10, 2, 2).unwrap(), 39_062_500);
        assert_eq!(search_space_size_binomial(10, 2, 2).unwrap(), 39_062_500);
        assert_eq!(search_space_size_binomial(2, 1, 1).unwrap(), 4);
    }

    #[test]
    fn size_overflow_is_reported() {
        assert!(matches!(
            search_space_size(64, 3, 3),
            Err(ArchError::Overflow { .. })
        ));
        assert!(matches!(
            search_space_size_binomial(64, 3, 3),
            Err(ArchError::Overflow { .. })
        ));
        assert!(search_space_size(5, 0, 1).is_err());
    }

    fn space() -> SearchSpace {
        SearchSpace::with_defaults(Arc::new(BackboneSpec::mobilenetv2_table3()))
    }

    #[test]
    fn sampling_is_seeded() {
        let s = space();
        assert_eq!(sample_architecture(&s, 11), sample_architecture(&s, 11));
    }

    #[test]
    fn degenerate_space_has_one_point() {
        let bb: BackboneSpec = "input 4 4 3\nconv2d 1 K 8 1\n".parse().unwrap();
        let s = SearchSpace::new(Arc::new(bb), vec![ExitHeadSpec::single()], vec![8], 8).unwrap();
        let first = sample_architecture(&s, 0);
        for seed in 0..50 {
            assert_eq!(sample_architecture(&s, seed), first);
        }
        assert_eq!(s.size().unwrap(), 1);
    }

    #[test]
    fn all_absent_decodes_to_single_exit() {
        let s = space();
        let chrom = Chromosome {
            mounts: vec![MountGene::absent(); s.h()],
            last: ExitGene { head: 1, quant: 1 },
        };
        let arch = s.decode(&chrom).unwrap();
        assert_eq!(arch.exit_count(), 1);
        assert_eq!(arch.exit_labels(), vec!["K"]);
        assert_eq!(arch.quant.exit_bits, vec![4]);
    }

    #[test]
    fn decode_rejects_wrong_length() {
        let s = space();
        let chrom = Chromosome {
            mounts: vec![MountGene::absent(); 3],
            last: ExitGene::default(),
        };
        assert!(matches!(s.decode(&chrom), Err(ArchError::MalformedChromosome(_))));
    }

    #[test]
    fn absent_genes_are_masked() {
        let s = space();
        let mut a = sample_architecture(&s, 3);
        let mut b = a.clone();
        for g in a.mounts.iter_mut().filter(|g| !g.present) {
            g.gene = ExitGene { head: 1, quant: 1 };
        }
        for g in b.mounts.iter_mut().filter(|g| !g.present) {
            g.gene = ExitGene { head: 0, quant: 0 };
        }
        assert_eq!(s.decode(&a).unwrap(), s.decode(&b).unwrap());
    }

    #[test]
    fn full_encoding_sets_every_bit() {
        let s = space();
        let chrom = Chromosome {
            mounts: vec![
                MountGene {
                    present: true,
                    gene: ExitGene { head: 0, quant: 1 }
                };
                s.h()
            ],
            last: ExitGene::default(),
        };
        let arch = s.decode(&chrom).unwrap();
        assert_eq!(arch.exit_count(), s.h() + 1);
        let back = s.encode(&arch).unwrap();
        assert!(back.mounts.iter().all(|m| m.present));
    }

    #[test]
    fn rejects_architecture_without_final_exit() {
        let bb = Arc::new(BackboneSpec::mobilenetv2_table3());
        let err = EennArchitecture::new(
            bb,
            vec![ExitConfig {
                mount: 2,
                head: ExitHeadSpec::single(),
            }],
            QuantScheme {
                backbone_bits: 8,
                exit_bits: vec![8],
                clips: BTreeMap::new(),
            },
        );
        assert!(err.is_err());
    }
}
