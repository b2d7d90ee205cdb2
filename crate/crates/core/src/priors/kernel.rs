//! Composite covariance kernels for the GP prior.
//!
//! Leaves are Linear / Polynomial / Matern / Periodic kernels; internal
//! nodes add or multiply two children. Sums and products of PSD kernels
//! stay PSD, so any sampled tree is a valid covariance function.

use crate::error::{Error, Result};
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MaternNu {
    Half,
    ThreeHalves,
    FiveHalves,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum BaseKernel {
    Linear {
        variance: f64,
        offset: f64,
    },
    Polynomial {
        variance: f64,
        offset: f64,
        degree: u32,
    },
    Matern {
        variance: f64,
        length_scale: f64,
        nu: MaternNu,
    },
    Periodic {
        variance: f64,
        length_scale: f64,
        period: f64,
    },
}

impl BaseKernel {
    pub fn eval(&self, t1: f64, t2: f64) -> f64 {
        let r = (t1 - t2).abs();
        match *self {
            BaseKernel::Linear { variance, offset } => variance * t1 * t2 + offset,
            BaseKernel::Polynomial {
                variance,
                offset,
                degree,
            } => (variance * t1 * t2 + offset).powi(degree as i32),
            BaseKernel::Matern {
                variance,
                length_scale,
                nu,
            } => {
                let s = r / length_scale;
                match nu {
                    MaternNu::Half => variance * (-s).exp(),
                    MaternNu::ThreeHalves => {
                        let z = 3.0f64.sqrt() * s;
                        variance * (1.0 + z) * (-z).exp()
                    }
                    MaternNu::FiveHalves => {
                        let z = 5.0f64.sqrt() * s;
                        variance * (1.0 + z + z * z / 3.0) * (-z).exp()
                    }
                }
            }
            BaseKernel::Periodic {
                variance,
                length_scale,
                period,
            } => {
                let s = (std::f64::consts::PI * r / period).sin();
                variance * (-2.0 * s * s / (length_scale * length_scale)).exp()
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            BaseKernel::Linear { variance, offset } => variance > 0.0 && offset >= 0.0,
            BaseKernel::Polynomial {
                variance,
                offset,
                degree,
            } => variance > 0.0 && offset >= 0.0 && (degree == 2 || degree == 3),
            BaseKernel::Matern {
                variance,
                length_scale,
                ..
            } => variance > 0.0 && length_scale > 0.0,
            BaseKernel::Periodic {
                variance,
                length_scale,
                period,
            } => variance > 0.0 && length_scale > 0.0 && period > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::config(format!("invalid kernel parameters: {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CompositeKernel {
    Leaf(BaseKernel),
    Add(Box<CompositeKernel>, Box<CompositeKernel>),
    Multiply(Box<CompositeKernel>, Box<CompositeKernel>),
}

impl CompositeKernel {
    pub fn eval(&self, t1: f64, t2: f64) -> f64 {
        match self {
            CompositeKernel::Leaf(k) => k.eval(t1, t2),
            CompositeKernel::Add(a, b) => a.eval(t1, t2) + b.eval(t1, t2),
            CompositeKernel::Multiply(a, b) => a.eval(t1, t2) * b.eval(t1, t2),
        }
    }

    pub fn leaf_count(&self) -> usize {
        match self {
            CompositeKernel::Leaf(_) => 1,
            CompositeKernel::Add(a, b) | CompositeKernel::Multiply(a, b) => {
                a.leaf_count() + b.leaf_count()
            }
        }
    }

    pub fn leaves(&self) -> Vec<&BaseKernel> {
        match self {
            CompositeKernel::Leaf(k) => vec![k],
            CompositeKernel::Add(a, b) | CompositeKernel::Multiply(a, b) => {
                let mut v = a.leaves();
                v.extend(b.leaves());
                v
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let count = self.leaf_count();
        if !(1..=6).contains(&count) {
            return Err(Error::config(format!("kernel leaf count {count} outside 1..=6")));
        }
        for leaf in self.leaves() {
            leaf.validate()?;
        }
        Ok(())
    }
}

/// Evaluate a composite kernel at two inputs.
pub fn kernel_eval(k: &CompositeKernel, t1: f64, t2: f64) -> f64 {
    k.eval(t1, t2)
}

/// Relative draw weights for each leaf kind. Zero excludes the kind.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelWeights {
    pub linear: f64,
    pub polynomial: f64,
    pub matern: f64,
    pub periodic: f64,
}

impl KernelWeights {
    /// Main-phase bank: Periodic 5, Matern 1.5, Linear 1.
    pub fn train_phase() -> Self {
        KernelWeights {
            linear: 1.0,
            polynomial: 0.0,
            matern: 1.5,
            periodic: 5.0,
        }
    }

    /// Fine-tune bank: Periodic 5, Matern 2, Polynomial 1.
    pub fn finetune_phase() -> Self {
        KernelWeights {
            linear: 0.0,
            polynomial: 1.0,
            matern: 2.0,
            periodic: 5.0,
        }
    }
}

/// Which kernel bank a draw uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Train,
    Finetune,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Linear,
    Polynomial,
    Matern,
    Periodic,
}

fn sample_kind<R: Rng>(w: &KernelWeights, rng: &mut R) -> Kind {
    let total = w.linear + w.polynomial + w.matern + w.periodic;
    let mut u = rng.gen_range(0.0..total);
    for (kind, weight) in [
        (Kind::Linear, w.linear),
        (Kind::Polynomial, w.polynomial),
        (Kind::Matern, w.matern),
        (Kind::Periodic, w.periodic),
    ] {
        if u < weight {
            return kind;
        }
        u -= weight;
    }
    Kind::Periodic
}

fn log_uniform<R: Rng>(lo: f64, hi: f64, rng: &mut R) -> f64 {
    (rng.gen_range(lo.ln()..hi.ln())).exp()
}

fn sample_leaf<R: Rng>(w: &KernelWeights, rng: &mut R) -> BaseKernel {
    match sample_kind(w, rng) {
        Kind::Linear => BaseKernel::Linear {
            variance: log_uniform(0.1, 10.0, rng),
            offset: log_uniform(0.01, 1.0, rng),
        },
        Kind::Polynomial => BaseKernel::Polynomial {
            variance: log_uniform(0.1, 2.0, rng),
            offset: log_uniform(0.01, 1.0, rng),
            degree: if rng.gen_bool(0.5) { 2 } else { 3 },
        },
        Kind::Matern => BaseKernel::Matern {
            variance: log_uniform(0.1, 10.0, rng),
            length_scale: log_uniform(0.05, 2.0, rng),
            nu: match rng.gen_range(0..3u8) {
                0 => MaternNu::Half,
                1 => MaternNu::ThreeHalves,
                _ => MaternNu::FiveHalves,
            },
        },
        // Period 1/m puts m whole cycles inside the normalized window, a
        // plausible seasonal fraction of the series.
        Kind::Periodic => BaseKernel::Periodic {
            variance: log_uniform(0.1, 10.0, rng),
            length_scale: log_uniform(0.05, 2.0, rng),
            period: 1.0 / f64::from(rng.gen_range(2..=48u32)),
        },
    }
}

/// Draw a composite kernel: leaf count uniform in 1..=6, each leaf kind by
/// the phase's bank weights, combinators uniform in {add, multiply}.
pub fn sample_kernel<R: Rng>(weights: &KernelWeights, rng: &mut R) -> CompositeKernel {
    let n_leaves = rng.gen_range(1..=6usize);
    let mut tree = CompositeKernel::Leaf(sample_leaf(weights, rng));
    for _ in 1..n_leaves {
        let leaf = CompositeKernel::Leaf(sample_leaf(weights, rng));
        tree = if rng.gen_bool(0.5) {
            CompositeKernel::Add(Box::new(tree), Box::new(leaf))
        } else {
            CompositeKernel::Multiply(Box::new(tree), Box::new(leaf))
        };
    }
    tree
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn closed_forms_at_zero_lag() {
        let p = BaseKernel::Periodic {
            variance: 2.5,
            length_scale: 0.7,
            period: 0.1,
        };
        assert_eq!(p.eval(0.3, 0.3), 2.5);
        let m = BaseKernel::Matern {
            variance: 1.3,
            length_scale: 0.5,
            nu: MaternNu::FiveHalves,
        };
        assert!((m.eval(0.2, 0.2) - 1.3).abs() < 1e-15);
    }

    #[test]
    fn matern_half_closed_form() {
        // sigma=1, l=1, r=1 -> e^-1
        let m = BaseKernel::Matern {
            variance: 1.0,
            length_scale: 1.0,
            nu: MaternNu::Half,
        };
        assert!((m.eval(0.0, 1.0) - (-1.0f64).exp()).abs() < 1e-12);
        assert!((m.eval(0.0, 1.0) - 0.367879).abs() < 1e-6);
    }

    #[test]
    fn combinators_are_pointwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let w = KernelWeights::train_phase();
        for _ in 0..50 {
            let a = CompositeKernel::Leaf(sample_leaf(&w, &mut rng));
            let b = CompositeKernel::Leaf(sample_leaf(&w, &mut rng));
            let t1 = rng.gen_range(0.0..1.0);
            let t2 = rng.gen_range(0.0..1.0);
            let add = CompositeKernel::Add(Box::new(a.clone()), Box::new(b.clone()));
            let mul = CompositeKernel::Multiply(Box::new(a.clone()), Box::new(b.clone()));
            assert_eq!(add.eval(t1, t2), a.eval(t1, t2) + b.eval(t1, t2));
            assert_eq!(mul.eval(t1, t2), a.eval(t1, t2) * b.eval(t1, t2));
        }
    }

    #[test]
    fn sampled_trees_are_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for phase in [KernelWeights::train_phase(), KernelWeights::finetune_phase()] {
            for _ in 0..200 {
                let k = sample_kernel(&phase, &mut rng);
                k.validate().unwrap();
                assert!((1..=6).contains(&k.leaf_count()));
            }
        }
    }

    #[test]
    fn single_leaf_tree_has_no_combinators() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let w = KernelWeights::train_phase();
        loop {
            let k = sample_kernel(&w, &mut rng);
            if k.leaf_count() == 1 {
                assert!(matches!(k, CompositeKernel::Leaf(_)));
                break;
            }
        }
    }

    #[test]
    fn train_phase_kind_frequencies() {
        // Leaf kinds proportional to 5 : 1.5 : 1 (periodic : matern : linear).
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let w = KernelWeights::train_phase();
        let n = 100_000;
        let (mut lin, mut per, mut mat, mut pol) = (0u32, 0u32, 0u32, 0u32);
        for _ in 0..n {
            match sample_kind(&w, &mut rng) {
                Kind::Linear => lin += 1,
                Kind::Periodic => per += 1,
                Kind::Matern => mat += 1,
                Kind::Polynomial => pol += 1,
            }
        }
        let total = f64::from(n);
        assert_eq!(pol, 0);
        assert!((f64::from(per) / total - 5.0 / 7.5).abs() < 0.02);
        assert!((f64::from(mat) / total - 1.5 / 7.5).abs() < 0.02);
        assert!((f64::from(lin) / total - 1.0 / 7.5).abs() < 0.02);
    }

    #[test]
    fn finetune_phase_excludes_linear_includes_polynomial() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let w = KernelWeights::finetune_phase();
        let mut saw_poly = false;
        for _ in 0..5_000 {
            let k = sample_kernel(&w, &mut rng);
            for leaf in k.leaves() {
                assert!(!matches!(leaf, BaseKernel::Linear { .. }));
                if matches!(leaf, BaseKernel::Polynomial { .. }) {
                    saw_poly = true;
                }
            }
        }
        assert!(saw_poly);
    }
}
