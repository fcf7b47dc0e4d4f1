use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Parser, Debug)]
#[command(name = "hyperdyn", version, about = "Hyperbolic dynamics toolkit for surface diffeomorphisms")]
pub struct Cli {
    /// System definition file (`key = value` lines).
    #[arg(long, global = true)]
    pub system: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads; 0 uses every core. Results do not depend on it.
    #[arg(long, global = true, default_value_t = 0)]
    pub workers: usize,
    /// Directory for reports, artifacts and the result cache.
    #[arg(long, global = true, default_value = "hyperdyn-out")]
    pub out: PathBuf,
    /// Recompute even when a cached result exists.
    #[arg(long, global = true)]
    pub no_cache: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug, Clone, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Periodic orbits of one period.
    Orbits {
        #[arg(long)]
        period: usize,
        /// Newton seeds per unit length.
        #[arg(long, default_value_t = 32)]
        density: usize,
    },
    /// Lyapunov exponents along an orbit and uniform rate bounds.
    Lyapunov {
        #[arg(long, default_value_t = 0.123456789)]
        x: f64,
        #[arg(long, default_value_t = 0.314159265)]
        y: f64,
        #[arg(long, default_value_t = 100_000)]
        n: usize,
        /// Length of the products in the uniform bounds.
        #[arg(long, default_value_t = 200)]
        bound_steps: usize,
        #[arg(long, default_value_t = 16)]
        grid: usize,
    },
    /// Grows a stable or unstable manifold of a periodic saddle.
    Manifold {
        #[arg(long, default_value_t = 1)]
        period: usize,
        /// Index of the orbit among those of the period.
        #[arg(long, default_value_t = 0)]
        orbit: usize,
        #[arg(long, value_enum, default_value_t = Kind::Unstable)]
        kind: Kind,
        /// Target arclength per branch.
        #[arg(long, default_value_t = 2.0)]
        length: f64,
        #[arg(long, default_value_t = 32)]
        density: usize,
    },
    /// Smale preorder graph and homoclinic classes of the saddles up to a period.
    Homoclinic {
        #[arg(long, default_value_t = 2)]
        max_period: usize,
        #[arg(long, default_value_t = 32)]
        density: usize,
        #[arg(long, value_enum, default_value_t = Plan::Hub)]
        plan: Plan,
        /// Largest manifold arclength per branch.
        #[arg(long, default_value_t = 8.0)]
        budget: f64,
    },
    /// Coded horseshoe from the fixed saddle and its homoclinic orbits.
    Horseshoe(HorseshoeArgs),
    /// Markov shift computations on an edge-list graph.
    Shift {
        #[command(subcommand)]
        op: ShiftOp,
    },
    /// Bowen-spanning, Katok and tail entropy estimates.
    Entropy {
        #[command(subcommand)]
        op: EntropyOp,
    },
    /// Laminations: transverse dimension, holonomy and tangency dimension.
    Lamination {
        #[command(subcommand)]
        op: LaminationOp,
    },
    /// Summary table of a system: periodic counts, rates and entropy.
    Report {
        #[arg(long, default_value_t = 3)]
        max_period: usize,
        #[arg(long, default_value_t = 20_000)]
        samples: usize,
    },
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct HorseshoeArgs {
    /// Window half-length.
    #[arg(long, default_value_t = 15)]
    pub m: usize,
    /// ε as a multiple of the endpoint mismatch.
    #[arg(long, default_value_t = 2.2)]
    pub factor: f64,
    /// Homoclinic orbits of the fixed saddle to use.
    #[arg(long, default_value_t = 1)]
    pub connections: usize,
    #[arg(long, default_value_t = 200)]
    pub samples: usize,
    #[arg(long, default_value_t = 40)]
    pub sample_len: usize,
}

#[derive(Subcommand, Debug, Clone, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShiftOp {
    /// Irreducible components.
    Scc(GraphArg),
    /// Period of every component.
    Period(GraphArg),
    /// Gurevich entropy.
    Entropy(GraphArg),
    /// Parry measure of an irreducible graph.
    Parry(GraphArg),
    /// Equilibrium state of an edge potential.
    Equilibrium {
        #[command(flatten)]
        graph: GraphArg,
        /// Lines `u v phi` (vertex labels as in the graph); other edges get 0.
        #[arg(long)]
        potential: PathBuf,
    },
    /// Entropy of every component and the maximizers.
    Census(GraphArg),
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct GraphArg {
    /// Edge list, one `u v` pair per line, `#` comments.
    #[arg(long)]
    pub graph: PathBuf,
}

#[derive(Subcommand, Debug, Clone, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EntropyOp {
    /// Slope of Bowen spanning counts on a uniform sample.
    Top {
        #[arg(long, value_delimiter = ',', default_value = "0.05")]
        eps: Vec<f64>,
        #[arg(long, default_value_t = 14)]
        n_max: usize,
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
    },
    /// Katok's formula along one orbit.
    Katok {
        #[arg(long, default_value_t = 0.05)]
        eps: f64,
        #[arg(long, default_value_t = 0.5)]
        tau: f64,
        #[arg(long, default_value_t = 14)]
        n_max: usize,
        #[arg(long, default_value_t = 1_000_000)]
        len: usize,
        #[arg(long, default_value_t = 0.123456789)]
        x: f64,
        #[arg(long, default_value_t = 0.314159265)]
        y: f64,
    },
    /// Entropy inside Bowen balls.
    Tail {
        #[arg(long, default_value_t = 0.05)]
        eps: f64,
        #[arg(long, value_delimiter = ',', default_value = "0.02,0.01")]
        deltas: Vec<f64>,
        #[arg(long, default_value_t = 10)]
        n_max: usize,
        #[arg(long, default_value_t = 5)]
        probes: usize,
        #[arg(long, default_value_t = 1000)]
        ball_samples: usize,
    },
}

#[derive(Subcommand, Debug, Clone, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum LaminationOp {
    /// Transverse dimension of the unstable lamination against h/λˢ.
    Dim {
        #[command(flatten)]
        horseshoe: HorseshoeArgs,
        #[arg(long, default_value_t = 0.2)]
        radius: f64,
        #[arg(long, default_value_t = 0.2)]
        transversal_radius: f64,
    },
    /// Holonomy between two segment transversals, with refinement.
    Holonomy {
        #[command(flatten)]
        horseshoe: HorseshoeArgs,
        /// Half-length of the unstable leaves.
        #[arg(long, default_value_t = 0.6)]
        radius: f64,
        /// `x0,y0,x1,y1`.
        #[arg(long, value_delimiter = ',', num_args = 4, default_value = "-0.05,0.02,1.05,0.02")]
        tau: Vec<f64>,
        #[arg(long, value_delimiter = ',', num_args = 4, default_value = "-0.05,0.2,1.05,0.2")]
        tau2: Vec<f64>,
        #[arg(long, default_value_t = 3)]
        levels: usize,
        #[arg(long, default_value_t = 0.1)]
        angle_min: f64,
    },
    /// Tangency dimension on the synthetic C^r model.
    Sard {
        #[arg(long)]
        r: f64,
        #[arg(long, default_value_t = 4096)]
        cantor: usize,
        #[arg(long, default_value_t = 1024)]
        uniform: usize,
        #[arg(long, default_value_t = 1e-3)]
        tangency_tol: f64,
    },
}

#[derive(ValueEnum, Debug, Clone, Copy, Serialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Stable,
    Unstable,
}

#[derive(ValueEnum, Debug, Clone, Copy, Serialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum Plan {
    Hub,
    AllPairs,
}

impl Command {
    /// Name used for the report files.
    pub fn stem(&self) -> String {
        match self {
            Command::Orbits { .. } => "orbits".into(),
            Command::Lyapunov { .. } => "lyapunov".into(),
            Command::Manifold { .. } => "manifold".into(),
            Command::Homoclinic { .. } => "homoclinic".into(),
            Command::Horseshoe(_) => "horseshoe".into(),
            Command::Shift { op } => format!("shift-{}", op.name()),
            Command::Entropy { op } => format!(
                "entropy-{}",
                match op {
                    EntropyOp::Top { .. } => "top",
                    EntropyOp::Katok { .. } => "katok",
                    EntropyOp::Tail { .. } => "tail",
                }
            ),
            Command::Lamination { op } => format!(
                "lamination-{}",
                match op {
                    LaminationOp::Dim { .. } => "dim",
                    LaminationOp::Holonomy { .. } => "holonomy",
                    LaminationOp::Sard { .. } => "sard",
                }
            ),
            Command::Report { .. } => "report".into(),
        }
    }

    pub fn needs_system(&self) -> bool {
        !matches!(self, Command::Shift { .. } | Command::Lamination { op: LaminationOp::Sard { .. } })
    }

    /// Input files whose contents enter the cache key.
    pub fn inputs(&self) -> Vec<PathBuf> {
        match self {
            Command::Shift { op } => match op {
                ShiftOp::Equilibrium { graph, potential } => vec![graph.graph.clone(), potential.clone()],
                ShiftOp::Scc(g) | ShiftOp::Period(g) | ShiftOp::Entropy(g) | ShiftOp::Parry(g) | ShiftOp::Census(g) => {
                    vec![g.graph.clone()]
                }
            },
            _ => Vec::new(),
        }
    }
}

impl ShiftOp {
    pub fn name(&self) -> &'static str {
        match self {
            ShiftOp::Scc(_) => "scc",
            ShiftOp::Period(_) => "period",
            ShiftOp::Entropy(_) => "entropy",
            ShiftOp::Parry(_) => "parry",
            ShiftOp::Equilibrium { .. } => "equilibrium",
            ShiftOp::Census(_) => "census",
        }
    }
}
