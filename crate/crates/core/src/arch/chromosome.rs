use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::ArchError;

/// Head and bit-width option indices for one exit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct ExitGene {
    pub head: u8,
    pub quant: u8,
}

/// Gene group of one optional mounting point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct MountGene {
    pub present: bool,
    pub gene: ExitGene,
}

impl MountGene {
    pub const fn absent() -> Self {
        Self {
            present: false,
            gene: ExitGene { head: 0, quant: 0 },
        }
    }
}

/// GA genotype: one group per optional mount plus the final exit's genes.
///
/// Flattened as `[present, head, quant] * H ++ [head, quant]`. Genes of
/// absent groups are carried but ignored when decoding.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "Vec<u8>", into = "Vec<u8>")]
pub struct Chromosome {
    pub mounts: Vec<MountGene>,
    pub last: ExitGene,
}

/// Stable 64-bit content hash of a canonical chromosome, as 16 hex digits.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ChromosomeHash(pub String);

impl fmt::Display for ChromosomeHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl ChromosomeHash {
    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn is_well_formed(s: &str) -> bool {
        s.len() == 16 && s.bytes().all(|b| b.is_ascii_hexdigit() && !b.is_ascii_uppercase())
    }
}

impl Chromosome {
    pub fn genes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.mounts.len() * 3 + 2);
        for m in &self.mounts {
            out.extend_from_slice(&[m.present as u8, m.gene.head, m.gene.quant]);
        }
        out.extend_from_slice(&[self.last.head, self.last.quant]);
        out
    }

    pub fn from_genes(genes: &[u8]) -> Result<Self, ArchError> {
        if genes.len() < 2 || (genes.len() - 2) % 3 != 0 {
            return Err(ArchError::MalformedChromosome(format!(
                "gene vector of length {} is not 3H+2",
                genes.len()
            )));
        }
        let h = (genes.len() - 2) / 3;
        let mut mounts = Vec::with_capacity(h);
        for g in genes[..3 * h].chunks_exact(3) {
            if g[0] > 1 {
                return Err(ArchError::MalformedChromosome(format!(
                    "present bit must be 0 or 1, got {}",
                    g[0]
                )));
            }
            mounts.push(MountGene {
                present: g[0] == 1,
                gene: ExitGene {
                    head: g[1],
                    quant: g[2],
                },
            });
        }
        Ok(Self {
            mounts,
            last: ExitGene {
                head: genes[3 * h],
                quant: genes[3 * h + 1],
            },
        })
    }

    /// Zero the genes of absent groups.
    pub fn canonical(mut self) -> Self {
        for m in &mut self.mounts {
            if !m.present {
                m.gene = ExitGene::default();
            }
        }
        self
    }

    pub fn is_canonical(&self) -> bool {
        self.mounts
            .iter()
            .all(|m| m.present || m.gene == ExitGene::default())
    }

    pub fn exit_count(&self) -> usize {
        1 + self.mounts.iter().filter(|m| m.present).count()
    }

    pub fn hash(&self) -> ChromosomeHash {
        let canon = self.clone().canonical();
        let digest = Sha256::digest(canon.genes());
        let hex: String = digest[..8].iter().map(|b| format!("{b:02x}")).collect();
        ChromosomeHash(hex)
    }
}

impl fmt::Display for Chromosome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let genes: Vec<String> = self.genes().iter().map(u8::to_string).collect();
        f.write_str(&genes.join(""))
    }
}

impl From<Chromosome> for Vec<u8> {
    fn from(c: Chromosome) -> Self {
        c.genes()
    }
}

impl TryFrom<Vec<u8>> for Chromosome {
    type Error = ArchError;

    fn try_from(v: Vec<u8>) -> Result<Self, Self::Error> {
        Chromosome::from_genes(&v)
    }
}
