//! Attack names on the command line and how they map onto library configurations.

use perturbkit::regress::RegressAttack;
use perturbkit::{AttackConfig, ClassifyAttack, DitherSchedule, Exponent, LossKind, Partition};

use crate::args::{AttackOpts, OnOff};
use crate::error::CliError;

pub const CLASSIFY_NAMES: &[&str] = &[
    "gnm",
    "min-norm",
    "fgsm",
    "bim",
    "pgd",
    "deepfool",
    "algo2",
    "iterative",
];
pub const REGRESS_NAMES: &[&str] = &[
    "quad-l2",
    "quad-l1",
    "quad-linf",
    "subset-quad",
    "subset-lin",
    "multi-subset",
    "linear",
    "random-subsets",
];

/// Steps used by `bim` and `pgd` when `--T` is absent.
const DEFAULT_PRESET_STEPS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Classification,
    Regression,
}

#[derive(Debug, Clone)]
pub enum Resolved {
    Classify(ClassifyAttack),
    Regress(RegressAttack),
}

impl Resolved {
    pub fn family(&self) -> Family {
        match self {
            Resolved::Classify(_) => Family::Classification,
            Resolved::Regress(_) => Family::Regression,
        }
    }
}

pub fn valid_names() -> String {
    let mut all: Vec<&str> = CLASSIFY_NAMES
        .iter()
        .chain(REGRESS_NAMES)
        .copied()
        .collect();
    all.push("random");
    all.join(", ")
}

/// Family an attack name belongs to; `random` follows the dataset.
pub fn family_of(name: &str, labelled: bool) -> Result<Family, CliError> {
    if CLASSIFY_NAMES.contains(&name) {
        Ok(Family::Classification)
    } else if REGRESS_NAMES.contains(&name) {
        Ok(Family::Regression)
    } else if name == "random" {
        Ok(if labelled {
            Family::Classification
        } else {
            Family::Regression
        })
    } else {
        Err(CliError::config(format!(
            "unknown attack `{name}`; valid names: {}",
            valid_names()
        )))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Radius {
    Eps,
    Value(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum DitherArg {
    None,
    First(Radius),
    All(Radius),
}

fn parse_dither(s: &str) -> Result<DitherArg, CliError> {
    let bad = || {
        CliError::config(format!(
            "bad --dither {s:?}; expected none, first=eps, first=<r>, all=eps or all=<r>"
        ))
    };
    if s == "none" {
        return Ok(DitherArg::None);
    }
    let (kind, value) = s.split_once('=').ok_or_else(bad)?;
    let radius = match value {
        "eps" => Radius::Eps,
        v => Radius::Value(v.parse().map_err(|_| bad())?),
    };
    match kind {
        "first" => Ok(DitherArg::First(radius)),
        "all" => Ok(DitherArg::All(radius)),
        _ => Err(bad()),
    }
}

fn schedule(d: DitherArg, eps: f64) -> DitherSchedule {
    let r = |r: Radius| match r {
        Radius::Eps => eps,
        Radius::Value(v) => v,
    };
    match d {
        DitherArg::None => DitherSchedule::None,
        DitherArg::First(x) => DitherSchedule::First(r(x)),
        DitherArg::All(x) => DitherSchedule::All(r(x)),
    }
}

/// Partition from `singletons`, `contiguous:<Z>` or a JSON file.
pub fn parse_partition(spec: Option<&str>, dim: usize) -> Result<Partition, CliError> {
    match spec {
        None | Some("singletons") => Ok(Partition::singletons(dim)),
        Some(s) => match s.strip_prefix("contiguous:") {
            Some(z) => {
                let z: usize = z
                    .parse()
                    .map_err(|_| CliError::config(format!("bad partition {s:?}")))?;
                Ok(Partition::contiguous(dim, z)?)
            }
            None => Ok(Partition::load(s, dim)?),
        },
    }
}

/// Builds the attack `name` at budget `eps` from the shared flags.
///
/// `eps` may be absent only for attacks without a budget (`min-norm`, `deepfool`).
pub fn resolve(
    name: &str,
    eps: Option<f64>,
    opts: &AttackOpts,
    labelled: bool,
    dim: usize,
) -> Result<Resolved, CliError> {
    let family = family_of(name, labelled)?;
    let need_eps = || {
        eps.ok_or_else(|| CliError::config(format!("attack `{name}` needs --eps")))
            .and_then(|e| {
                if e.is_finite() && e >= 0.0 {
                    Ok(e)
                } else {
                    Err(CliError::config(format!(
                        "--eps must be finite and >= 0, got {e}"
                    )))
                }
            })
    };
    let dither = opts.dither.as_deref().map(parse_dither).transpose()?;
    let early_stop = opts.early_stop.map(|v| v == OnOff::On);
    let p_or = |default: Exponent| opts.p.unwrap_or(default);
    let fixed_p = |p: Exponent| -> Result<(), CliError> {
        match opts.p {
            Some(q) if q != p => Err(CliError::config(format!(
                "attack `{name}` is defined for p = {p}, got --p {q}"
            ))),
            _ => Ok(()),
        }
    };
    let fixed_steps = |t: usize| -> Result<(), CliError> {
        match opts.steps {
            Some(s) if s != t => Err(CliError::config(format!(
                "attack `{name}` uses T = {t}, got --T {s}"
            ))),
            _ => Ok(()),
        }
    };
    let loss = |default: LossKind| opts.loss.unwrap_or(default);

    let iterative =
        |p: Exponent, eps: f64, steps: usize, default_dither: DitherArg, default_loss: LossKind| {
            let mut config = AttackConfig::new(p, eps, steps)
                .with_dither(schedule(dither.unwrap_or(default_dither), eps))
                .with_seed(opts.seed);
            if let Some(on) = early_stop {
                config = config.with_early_stop(on);
            }
            ClassifyAttack::Iterative {
                config,
                loss: loss(default_loss),
            }
        };

    if family == Family::Classification {
        let attack = match name {
            "gnm" => ClassifyAttack::Gnm {
                p: p_or(Exponent::INF),
                eps: need_eps()?,
                loss: loss(LossKind::Margin),
            },
            "min-norm" => ClassifyAttack::MinNorm {
                p: p_or(Exponent::TWO),
                loss: loss(LossKind::Margin),
            },
            "fgsm" => {
                fixed_p(Exponent::INF)?;
                fixed_steps(1)?;
                iterative(
                    Exponent::INF,
                    need_eps()?,
                    1,
                    DitherArg::None,
                    LossKind::CrossEntropy,
                )
            }
            "bim" | "pgd" => {
                fixed_p(Exponent::INF)?;
                let default = if name == "pgd" {
                    DitherArg::First(Radius::Eps)
                } else {
                    DitherArg::None
                };
                let steps = opts.steps.unwrap_or(DEFAULT_PRESET_STEPS);
                iterative(
                    Exponent::INF,
                    need_eps()?,
                    steps,
                    default,
                    LossKind::CrossEntropy,
                )
            }
            "algo2" => iterative(
                p_or(Exponent::INF),
                need_eps()?,
                opts.steps.unwrap_or(1),
                DitherArg::None,
                LossKind::Simplified,
            ),
            "iterative" => iterative(
                p_or(Exponent::INF),
                need_eps()?,
                opts.steps.unwrap_or(1),
                DitherArg::None,
                LossKind::Margin,
            ),
            "deepfool" => ClassifyAttack::DeepFool {
                p: p_or(Exponent::TWO),
                max_iter: opts.max_iter,
            },
            "random" => ClassifyAttack::Random {
                p: p_or(Exponent::INF),
                eps: need_eps()?,
                seed: opts.seed,
            },
            _ => unreachable!("family_of accepted {name}"),
        };
        if let ClassifyAttack::Iterative { config, .. } = &attack {
            config
                .validate()
                .map_err(|e| CliError::config(e.to_string()))?;
        }
        return Ok(Resolved::Classify(attack));
    }

    // Regression attacks carry a single dither radius.
    let radius = |eps: f64| match dither {
        None | Some(DitherArg::None) => 0.0,
        Some(DitherArg::First(r)) | Some(DitherArg::All(r)) => match r {
            Radius::Eps => eps,
            Radius::Value(v) => v,
        },
    };
    let partition = || parse_partition(opts.partition.as_deref(), dim);
    let attack = match name {
        "quad-l2" => {
            fixed_p(Exponent::TWO)?;
            RegressAttack::QuadL2 { eps: need_eps()? }
        }
        "quad-l1" => {
            fixed_p(Exponent::ONE)?;
            RegressAttack::QuadL1 { eps: need_eps()? }
        }
        "quad-linf" => {
            fixed_p(Exponent::INF)?;
            RegressAttack::QuadLinf { eps: need_eps()? }
        }
        "subset-quad" => {
            fixed_p(Exponent::INF)?;
            RegressAttack::SubsetQuad {
                partition: partition()?,
                eps: need_eps()?,
            }
        }
        "subset-lin" => {
            fixed_p(Exponent::INF)?;
            fixed_steps(1)?;
            let eps = need_eps()?;
            RegressAttack::SubsetLinear {
                partition: partition()?,
                eps,
                dither: radius(eps),
                seed: opts.seed,
            }
        }
        "multi-subset" => {
            fixed_p(Exponent::INF)?;
            let eps = need_eps()?;
            RegressAttack::MultiSubset {
                partition: partition()?,
                eps,
                steps: opts.steps.unwrap_or(1),
                dither: radius(eps),
                seed: opts.seed,
            }
        }
        "random-subsets" => {
            fixed_p(Exponent::INF)?;
            RegressAttack::RandomSubsets {
                partition: partition()?,
                eps: need_eps()?,
                steps: opts.steps.unwrap_or(1),
                seed: opts.seed,
            }
        }
        "linear" => {
            let eps = need_eps()?;
            // Regression has no class to flip, so --early-stop does not apply.
            let config = AttackConfig::new(p_or(Exponent::INF), eps, opts.steps.unwrap_or(1))
                .with_dither(schedule(dither.unwrap_or(DitherArg::None), eps))
                .with_seed(opts.seed);
            config
                .validate()
                .map_err(|e| CliError::config(e.to_string()))?;
            RegressAttack::Linear { config }
        }
        "random" => RegressAttack::Random {
            p: p_or(Exponent::INF),
            eps: need_eps()?,
            seed: opts.seed,
        },
        _ => unreachable!("family_of accepted {name}"),
    };
    if let RegressAttack::SubsetLinear { dither, eps, .. }
    | RegressAttack::MultiSubset { dither, eps, .. } = &attack
    {
        if !(*dither >= 0.0 && dither <= eps) {
            return Err(CliError::config(format!(
                "dither radius must lie in [0, eps = {eps}]"
            )));
        }
    }
    Ok(Resolved::Regress(attack))
}
