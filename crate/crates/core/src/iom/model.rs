use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::iom::ArchConfig;
use crate::numerics::text::TextReader;
use crate::numerics::{Mlp, Tensor};

/// Representation network, objective head and discriminator.
///
/// The surrogate objective is `head(phi(x))`; the discriminator scores
/// representations and is only used for the invariance term.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IomModel {
    pub phi: Mlp,
    pub head: Mlp,
    pub disc: Mlp,
}

impl IomModel {
    pub fn new(phi: Mlp, head: Mlp, disc: Mlp) -> Result<Self> {
        let r = phi.output_dim();
        if head.input_dim() != r || disc.input_dim() != r {
            return Err(Error::Config(format!(
                "representation has {r} dims but head expects {} and discriminator {}",
                head.input_dim(),
                disc.input_dim()
            )));
        }
        if head.output_dim() != 1 || disc.output_dim() != 1 {
            return Err(Error::Config(
                "head and discriminator must produce one value per sample".into(),
            ));
        }
        Ok(Self { phi, head, disc })
    }

    /// Initializes `phi`, `head` and `disc`, in that order, from one stream.
    pub fn init<R: Rng + ?Sized>(input_dim: usize, arch: &ArchConfig, rng: &mut R) -> Result<Self> {
        let phi = Mlp::init(&arch.phi_sizes(input_dim), arch.leaky_slope, rng)?;
        let head = Mlp::init(&arch.head_sizes(), arch.leaky_slope, rng)?;
        let disc = Mlp::init(&arch.disc_sizes(), arch.leaky_slope, rng)?;
        Self::new(phi, head, disc)
    }

    pub fn input_dim(&self) -> usize {
        self.phi.input_dim()
    }

    pub fn represent(&self, x: &Tensor) -> Result<Tensor> {
        self.phi.predict(x)
    }

    /// Surrogate values `head(phi(x))`, one per row.
    pub fn predict(&self, x: &Tensor) -> Result<Vec<f64>> {
        let z = self.phi.predict(x)?;
        Ok(self.head.predict(&z)?.into_data())
    }

    /// Checksum of `phi` and `head` (the surrogate) only.
    pub fn surrogate_checksum(&self) -> u64 {
        self.phi.checksum() ^ self.head.checksum().rotate_left(21)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (name, net) in [
            ("phi", &self.phi),
            ("head", &self.head),
            ("disc", &self.disc),
        ] {
            s.push_str("model ");
            s.push_str(name);
            s.push('\n');
            crate::numerics::text::write_mlp(&mut s, net);
        }
        s
    }

    pub fn from_text(text: &str, source: &str) -> Result<Self> {
        let mut r = TextReader::new(text, source);
        let model = Self::read(&mut r)?;
        r.expect_end()?;
        Ok(model)
    }

    pub(crate) fn read(r: &mut TextReader<'_>) -> Result<Self> {
        let mut nets = Vec::with_capacity(3);
        for name in ["phi", "head", "disc"] {
            let fields = r.header("model")?;
            if fields != [name] {
                return Err(r.error(format!("expected `model {name}`")));
            }
            nets.push(r.read_mlp()?);
        }
        let disc = nets.pop().expect("three nets");
        let head = nets.pop().expect("three nets");
        let phi = nets.pop().expect("three nets");
        Self::new(phi, head, disc).map_err(|e| r.error(e.to_string()))
    }
}
