//! Instance families for simulation.
//!
//! Each family documents its exact distance from the tested property and
//! verifies the claim with the oracle when instantiated, so a simulation can
//! trust its ground-truth labels. Families are selected by id; the shared
//! experiment parameters `(n, m, K, eps)` feed into the construction.
//!
//! Shipped far families:
//!
//! * `paired_perturbation` -- `q` perturbs uniform `p` by `-+ 2 eps / n` on
//!   matched bin pairs, giving exact `d_TV = eps` (needs even `n`,
//!   `eps <= 0.5`).
//! * `disjoint_support` -- supports on opposite halves, distance 1.
//! * `diagonal_mixture` -- product mixed with a diagonal pairing; the
//!   marginal-product distance is `w (m-1)/m`, set slightly above `eps` and
//!   oracle-verified.
//! * `shifted_blocks` -- collection members uniform on shifted residue
//!   classes; disjoint supports give a median-oracle lower bound of 1/2 on
//!   the average distance to any common distribution.
//! * `hard_*` -- the lower-bound ensembles (normalized), labelled by their
//!   nominal case; soundness draws are random measures whose realized
//!   distance is not certified, and at the information-theoretic sample
//!   sizes these are *designed* to defeat testers.

use anyhow::{anyhow, bail, Result};
use disttest::hard_instances::{
    gen_independence_hard, gen_unequal_hard, Case, EnsembleSpec, OutOfRangePolicy, Variant,
};
use disttest::oracle::{
    collection_median_lower_bound, distance_to_marginal_product, Truth,
};
use disttest::prob::{
    sample_size_independence, sample_size_unequal, tv_distance, Categorical, CategoricalSampler,
    JointDistribution, JointSampler,
};
use disttest::testers::Tester;
use disttest::RngStream;

/// Shared experiment parameters handed to a family.
#[derive(Debug, Clone, Copy)]
pub struct FamilyParams {
    pub n: usize,
    pub m: Option<usize>,
    pub big_k: Option<u64>,
    pub eps: f64,
    pub delta: f64,
    /// Budget constant, needed by the hard ensembles to pick their `k`.
    pub budget_constant: f64,
}

/// A concrete instance a tester can draw samples from.
pub enum Instance {
    /// Two distributions on `[n]` (closeness, unequal).
    Pair { p: Categorical, q: Categorical },
    /// A joint distribution on `[n] x [m]` (independence, collections).
    Joint(JointDistribution),
}

impl Instance {
    /// Sampler for the p side (pairs) or the joint.
    pub fn pair(&self) -> Option<(&Categorical, &Categorical)> {
        match self {
            Instance::Pair { p, q } => Some((p, q)),
            Instance::Joint(_) => None,
        }
    }

    pub fn joint(&self) -> Option<&JointDistribution> {
        match self {
            Instance::Joint(j) => Some(j),
            Instance::Pair { .. } => None,
        }
    }
}

/// A named family with a ground-truth label.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Family {
    pub id: FamilyId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FamilyId {
    UniformEqual,
    PairedPerturbation,
    DisjointSupport,
    UniformProduct,
    RandomProduct,
    DiagonalMixture,
    IdenticalUniform,
    ShiftedBlocks,
    HardIndependence { variant: Variant, case: Case },
    HardUnequal { case: Case },
    /// Closeness pair fed through the pair-coin reduction, for exploring the
    /// closeness-to-independence embedding end to end.
    ReducedClosenessEqual,
}

impl Family {
    pub fn from_id(id: &str) -> Result<Family> {
        let id = match id {
            "uniform_equal" => FamilyId::UniformEqual,
            "paired_perturbation" => FamilyId::PairedPerturbation,
            "disjoint_support" => FamilyId::DisjointSupport,
            "uniform_product" => FamilyId::UniformProduct,
            "random_product" => FamilyId::RandomProduct,
            "diagonal_mixture" => FamilyId::DiagonalMixture,
            "identical_uniform" => FamilyId::IdenticalUniform,
            "shifted_blocks" => FamilyId::ShiftedBlocks,
            "reduced_closeness_equal" => FamilyId::ReducedClosenessEqual,
            "hard_independence_first_completeness" => FamilyId::HardIndependence {
                variant: Variant::FirstTerm,
                case: Case::Completeness,
            },
            "hard_independence_first_soundness" => FamilyId::HardIndependence {
                variant: Variant::FirstTerm,
                case: Case::Soundness,
            },
            "hard_independence_second_completeness" => FamilyId::HardIndependence {
                variant: Variant::SecondTerm,
                case: Case::Completeness,
            },
            "hard_independence_second_soundness" => FamilyId::HardIndependence {
                variant: Variant::SecondTerm,
                case: Case::Soundness,
            },
            "hard_unequal_completeness" => FamilyId::HardUnequal {
                case: Case::Completeness,
            },
            "hard_unequal_soundness" => FamilyId::HardUnequal {
                case: Case::Soundness,
            },
            other => bail!("unknown family '{other}'"),
        };
        Ok(Family { id })
    }

    pub fn name(&self) -> &'static str {
        match self.id {
            FamilyId::UniformEqual => "uniform_equal",
            FamilyId::PairedPerturbation => "paired_perturbation",
            FamilyId::DisjointSupport => "disjoint_support",
            FamilyId::UniformProduct => "uniform_product",
            FamilyId::RandomProduct => "random_product",
            FamilyId::DiagonalMixture => "diagonal_mixture",
            FamilyId::IdenticalUniform => "identical_uniform",
            FamilyId::ShiftedBlocks => "shifted_blocks",
            FamilyId::ReducedClosenessEqual => "reduced_closeness_equal",
            FamilyId::HardIndependence {
                variant: Variant::FirstTerm,
                case: Case::Completeness,
            } => "hard_independence_first_completeness",
            FamilyId::HardIndependence {
                variant: Variant::FirstTerm,
                case: Case::Soundness,
            } => "hard_independence_first_soundness",
            FamilyId::HardIndependence {
                variant: Variant::SecondTerm,
                case: Case::Completeness,
            } => "hard_independence_second_completeness",
            FamilyId::HardIndependence {
                variant: Variant::SecondTerm,
                case: Case::Soundness,
            } => "hard_independence_second_soundness",
            FamilyId::HardUnequal {
                case: Case::Completeness,
            } => "hard_unequal_completeness",
            FamilyId::HardUnequal {
                case: Case::Soundness,
            } => "hard_unequal_soundness",
        }
    }

    /// The verdict a correct tester should reach on this family.
    pub fn truth(&self) -> Truth {
        match self.id {
            FamilyId::UniformEqual
            | FamilyId::UniformProduct
            | FamilyId::RandomProduct
            | FamilyId::IdenticalUniform
            | FamilyId::ReducedClosenessEqual => Truth::ShouldYes,
            FamilyId::PairedPerturbation
            | FamilyId::DisjointSupport
            | FamilyId::DiagonalMixture
            | FamilyId::ShiftedBlocks => Truth::ShouldNo,
            FamilyId::HardIndependence { case, .. } | FamilyId::HardUnequal { case } => match case
            {
                Case::Completeness => Truth::ShouldYes,
                Case::Soundness => Truth::ShouldNo,
            },
        }
    }

    /// Whether the family produces pair instances (vs joint instances).
    pub fn is_pair(&self) -> bool {
        matches!(
            self.id,
            FamilyId::UniformEqual
                | FamilyId::PairedPerturbation
                | FamilyId::DisjointSupport
                | FamilyId::HardUnequal { .. }
        )
    }

    /// Draws one instance. Randomized families consume `rng`; fixed families
    /// ignore it. Distance claims are oracle-verified here.
    pub fn instantiate(&self, params: &FamilyParams, rng: &mut RngStream) -> Result<Instance> {
        let n = params.n;
        match self.id {
            FamilyId::UniformEqual => Ok(Instance::Pair {
                p: Categorical::uniform(n),
                q: Categorical::uniform(n),
            }),
            FamilyId::PairedPerturbation => {
                let p = Categorical::uniform(n);
                let q = paired_perturbation(n, params.eps)?;
                let d = tv_distance(&p, &q)?;
                if (d - params.eps).abs() > 1e-9 {
                    bail!(
                        "paired_perturbation distance {d} differs from eps {}",
                        params.eps
                    );
                }
                Ok(Instance::Pair { p, q })
            }
            FamilyId::DisjointSupport => {
                if n < 2 {
                    bail!("disjoint_support needs n >= 2");
                }
                let half = n / 2;
                let mut p = vec![0.0; n];
                let mut q = vec![0.0; n];
                for i in 0..half {
                    p[i] = 1.0 / half as f64;
                }
                for i in half..n {
                    q[i] = 1.0 / (n - half) as f64;
                }
                let p = Categorical::new(p)?;
                let q = Categorical::new(q)?;
                debug_assert!((tv_distance(&p, &q)? - 1.0).abs() < 1e-12);
                Ok(Instance::Pair { p, q })
            }
            FamilyId::UniformProduct => {
                let m = need_m(params)?;
                Ok(Instance::Joint(JointDistribution::uniform(n, m)))
            }
            FamilyId::RandomProduct => {
                let m = need_m(params)?;
                let u = random_dense(n, rng)?;
                let v = random_dense(m, rng)?;
                Ok(Instance::Joint(JointDistribution::product(&u, &v)))
            }
            FamilyId::DiagonalMixture => {
                let m = need_m(params)?;
                let joint = diagonal_mixture(n, m, params.eps)?;
                let d = distance_to_marginal_product(&joint);
                if d < params.eps {
                    bail!(
                        "diagonal_mixture marginal-product distance {d} below eps {}",
                        params.eps
                    );
                }
                Ok(Instance::Joint(joint))
            }
            FamilyId::IdenticalUniform => {
                let m = need_m(params)?;
                let members = vec![Categorical::uniform(n); m];
                Ok(Instance::Joint(collection_joint(&members)?))
            }
            FamilyId::ShiftedBlocks => {
                let m = need_m(params)?;
                if m < 2 || n < m {
                    bail!("shifted_blocks needs 2 <= m <= n");
                }
                let members: Vec<Categorical> = (0..m)
                    .map(|i| residue_class_uniform(n, m, i))
                    .collect::<disttest::Result<_>>()?;
                let bound = collection_median_lower_bound(&members)?;
                if bound < params.eps {
                    bail!(
                        "shifted_blocks median lower bound {bound} below eps {}",
                        params.eps
                    );
                }
                Ok(Instance::Joint(collection_joint(&members)?))
            }
            FamilyId::ReducedClosenessEqual => {
                // An equal pair; the runner feeds it through the pair-coin
                // reduction, yielding exactly uniform(n) x uniform(2).
                Ok(Instance::Pair {
                    p: Categorical::uniform(n),
                    q: Categorical::uniform(n),
                })
            }
            FamilyId::HardIndependence { variant, case } => {
                let m = need_m(params)?;
                let k = sample_size_independence(n, m, params.eps, params.delta, params.budget_constant)?;
                let spec = EnsembleSpec {
                    case,
                    variant,
                    n,
                    m,
                    k,
                    eps: params.eps,
                };
                let draw = gen_independence_hard(&spec, OutOfRangePolicy::default(), rng)?;
                Ok(Instance::Joint(draw.value.normalize_joint()?))
            }
            FamilyId::HardUnequal { case } => {
                let big_k = params
                    .big_k
                    .ok_or_else(|| anyhow!("family hard_unequal needs --big-k"))?;
                let k = sample_size_unequal(n, big_k, params.eps, params.delta, params.budget_constant)?;
                let draw = gen_unequal_hard(
                    n,
                    k,
                    big_k,
                    params.eps,
                    case,
                    OutOfRangePolicy::default(),
                    rng,
                )?;
                let (p, q) = draw.value;
                Ok(Instance::Pair {
                    p: p.normalize_categorical()?,
                    q: q.normalize_categorical()?,
                })
            }
        }
    }

    /// The families a given tester understands.
    pub fn supported(tester: Tester) -> &'static [&'static str] {
        match tester {
            Tester::Closeness => &[
                "uniform_equal",
                "paired_perturbation",
                "disjoint_support",
            ],
            Tester::Independence => &[
                "uniform_product",
                "random_product",
                "diagonal_mixture",
                "reduced_closeness_equal",
                "hard_independence_first_completeness",
                "hard_independence_first_soundness",
                "hard_independence_second_completeness",
                "hard_independence_second_soundness",
            ],
            Tester::Collections => &["identical_uniform", "shifted_blocks"],
            Tester::Unequal => &[
                "uniform_equal",
                "paired_perturbation",
                "disjoint_support",
                "hard_unequal_completeness",
                "hard_unequal_soundness",
            ],
        }
    }
}

/// `q` = uniform with `+2 eps/n` on even bins and `-2 eps/n` on odd bins:
/// exact total variation distance `eps` from uniform.
pub fn paired_perturbation(n: usize, eps: f64) -> Result<Categorical> {
    if n % 2 != 0 {
        bail!("paired_perturbation needs even n, got {n}");
    }
    if !(eps > 0.0 && eps <= 0.5) {
        bail!("paired_perturbation needs eps in (0, 0.5], got {eps}");
    }
    let base = 1.0 / n as f64;
    let bump = 2.0 * eps / n as f64;
    let probs = (0..n)
        .map(|i| if i % 2 == 0 { base + bump } else { base - bump })
        .collect();
    Ok(Categorical::new(probs)?)
}

/// Mixture of the uniform product with a diagonal pairing `(i, i mod m)`,
/// weighted so the marginal-product distance `w (m-1)/m` clears `eps` with a
/// 2% margin. Requires `m | n` so both marginals stay uniform.
pub fn diagonal_mixture(n: usize, m: usize, eps: f64) -> Result<JointDistribution> {
    if m < 2 || n % m != 0 {
        bail!("diagonal_mixture needs m >= 2 and m | n (got n={n}, m={m})");
    }
    let w = (eps * m as f64 / (m as f64 - 1.0) * 1.02).min(1.0);
    if w * (m as f64 - 1.0) / (m as f64) < eps {
        bail!("diagonal_mixture cannot reach distance {eps} with m={m}");
    }
    let uniform_cell = (1.0 - w) / (n * m) as f64;
    let mut probs = vec![uniform_cell; n * m];
    for i in 0..n {
        probs[i * m + (i % m)] += w / n as f64;
    }
    Ok(JointDistribution::new(n, m, probs)?)
}

/// Uniform distribution on the residue class `{x : x = shift (mod m)}`.
fn residue_class_uniform(n: usize, m: usize, shift: usize) -> disttest::Result<Categorical> {
    let count = (n - shift + m - 1) / m; // size of the class in [0, n)
    let mut probs = vec![0.0; n];
    let mut x = shift;
    while x < n {
        probs[x] = 1.0 / count as f64;
        x += m;
    }
    Categorical::new(probs)
}

/// The pair distribution of a collection: `(x, i)` with `i` uniform and
/// `x ~ member_i`.
fn collection_joint(members: &[Categorical]) -> Result<JointDistribution> {
    let m = members.len();
    let n = members[0].n();
    let mut probs = vec![0.0; n * m];
    for (i, member) in members.iter().enumerate() {
        for (x, &px) in member.probs().iter().enumerate() {
            probs[x * m + i] = px / m as f64;
        }
    }
    Ok(JointDistribution::new(n, m, probs)?)
}

fn random_dense(n: usize, rng: &mut RngStream) -> Result<Categorical> {
    use rand::Rng;
    let masses: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 0.05).collect();
    Ok(Categorical::normalized(masses)?)
}

fn need_m(params: &FamilyParams) -> Result<usize> {
    params.m.ok_or_else(|| anyhow!("this family needs --m"))
}

/// Convenience samplers for instances.
pub enum InstanceSampler {
    Pair {
        p: CategoricalSampler,
        q: CategoricalSampler,
    },
    Joint(JointSampler),
}

impl Instance {
    pub fn sampler(&self) -> InstanceSampler {
        match self {
            Instance::Pair { p, q } => InstanceSampler::Pair {
                p: CategoricalSampler::new(p),
                q: CategoricalSampler::new(q),
            },
            Instance::Joint(j) => InstanceSampler::Joint(JointSampler::new(j)),
        }
    }
}

/// Whether the runner should feed this family's pair through the
/// closeness-to-independence reduction.
pub fn uses_reduction(family: &Family) -> bool {
    matches!(family.id, FamilyId::ReducedClosenessEqual)
}
