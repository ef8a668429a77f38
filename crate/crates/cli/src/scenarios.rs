//! The scenario registry. Exact analyses use every algorithm of a scenario;
//! the `algorithms` selection applies to the Monte Carlo part.

use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde_json::{json, Value};
use varorder::ergodicity::summability_certificate;
use varorder::exactify::{
    extract_kernel, marginal_kernel, stationary_distribution, y_marginal, FiniteAugmentedModel, KernelKind,
};
use varorder::markov::{
    compose, detailed_balance_check, flip_kernel, lazy_pair, max_detailed_balance_violation,
    off_diagonal_order_check, random_function, random_prob_vector, random_reversible_kernel, two_state_q0,
    variance, FiniteKernel, FunctionVector, ProbVector, StateSpace,
};
use varorder::pseudo_marginal::{gimh_as_freeze, AbcConfig, MatrixProposal};
use varorder::sampler::{
    run_scalar, AcceptCounts, Algorithm, AugmentedSampler, ChainState, MarginalMh, MatrixChain, RngStream,
};
use varorder::special::{
    gmtm_log_ratio, gmtm_rst_decomposition, rmcmc_log_ratio, FiniteGmtm, GaussianGmtm, GaussianRmcmc,
    GmtmModel, GmtmSampler, Involution, OmegaFamily, RmcmcModel, RmcmcSampler,
};
use varorder::toys;
use varorder::variance::{
    asvar_alternating, asvar_homogeneous, batch_means_variance, partial_sum_variances, AlternatingModel,
};
use varorder::{Error, Result};

use crate::config::Resolved;
use crate::error::{CliError, CliResult};
use crate::output::{Assertion, Outcome, Row};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ParamDefault {
    Float(f64),
    Int(u64),
    Text(&'static str),
}

impl ParamDefault {
    pub fn to_value(&self) -> Value {
        match self {
            ParamDefault::Float(x) => json!(x),
            ParamDefault::Int(x) => json!(x),
            ParamDefault::Text(x) => json!(x),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            ParamDefault::Float(_) => "a number",
            ParamDefault::Int(_) => "a non-negative integer",
            ParamDefault::Text(_) => "a string",
        }
    }
}

#[derive(Debug)]
pub struct ParamSpec {
    pub name: &'static str,
    pub default: ParamDefault,
    pub help: &'static str,
}

#[derive(Debug)]
pub struct Descriptor {
    pub id: &'static str,
    pub summary: &'static str,
    pub params: &'static [ParamSpec],
    pub algorithms: &'static [&'static str],
    pub default_chain_length: u64,
    pub run: fn(&Resolved) -> Result<Outcome>,
}

const fn param(name: &'static str, default: ParamDefault, help: &'static str) -> ParamSpec {
    ParamSpec { name, default, help }
}

use ParamDefault::{Float, Int, Text};

const TOY_PARAMS: &[ParamSpec] = &[
    param("toy", Text("all"), "registry toy name, or \"all\""),
    param("functions", Int(20), "random functions of y per toy"),
];

pub static REGISTRY: [Descriptor; 12] = [
    Descriptor {
        id: "remark14",
        summary: "Peskun-ordered components whose products reverse the variance ordering (I vs Pi before Q0)",
        params: &[param("eps", Float(0.5), "flip probability of Q0, in (0, 1)")],
        algorithms: &["P0Q0", "P1Q1"],
        default_chain_length: 1_000_000,
        run: reversed_products,
    },
    Descriptor {
        id: "flip-counterexample",
        summary: "alternating flip kernels: summability fails while Var(S_n)/n <= 1/n",
        params: &[param("n_max", Int(1000), "largest partial-sum length")],
        algorithms: &["flip"],
        default_chain_length: 0,
        run: flip_counterexample,
    },
    Descriptor {
        id: "theorem4-random-pairs",
        summary: "alternating variance ordering v(P1,Q1) <= v(P0,Q0) on random lazy pairs",
        params: &[
            param("pairs", Int(200), "number of random quadruples"),
            param("max_states", Int(6), "largest state space (smallest is 2)"),
        ],
        algorithms: &["P0Q0", "P1Q1"],
        default_chain_length: 0,
        run: random_lazy_pairs,
    },
    Descriptor {
        id: "freeze-vs-refresh",
        summary: "systematic refreshment has smaller asymptotic variance than the freeze algorithm",
        params: TOY_PARAMS,
        algorithms: &["freeze", "systematic_refresh"],
        default_chain_length: 1_000_000,
        run: freeze_vs_refresh,
    },
    Descriptor {
        id: "random-refresh",
        summary: "random refreshment versus freeze: variance ordering, invariance and reversibility",
        params: TOY_PARAMS,
        algorithms: &["freeze", "random_refresh"],
        default_chain_length: 1_000_000,
        run: random_refresh,
    },
    Descriptor {
        id: "gimh-exactness",
        summary: "GIMH and random refreshment leave pi* invariant in the y-marginal",
        params: &[],
        algorithms: &["freeze", "random_refresh"],
        default_chain_length: 1_000_000,
        run: gimh_exactness,
    },
    Descriptor {
        id: "mcwm-bias",
        summary: "MCWM (noisy refresh) has a y-marginal stationary law different from pi*",
        params: &[],
        algorithms: &["noisy"],
        default_chain_length: 1_000_000,
        run: mcwm_bias,
    },
    Descriptor {
        id: "marginal-mh-peskun",
        summary: "marginal MH dominates systematic refreshment off the diagonal and in variance",
        params: TOY_PARAMS,
        algorithms: &["marginal_mh", "systematic_refresh"],
        default_chain_length: 1_000_000,
        run: marginal_mh_peskun,
    },
    Descriptor {
        id: "gmtm-equivalence",
        summary: "GMTM equals systematic refreshment on its (R, S, T) embedding; one try is MH",
        params: &[param("tries", Int(3), "number of GMTM tries")],
        algorithms: &["uniform", "proposal", "target"],
        default_chain_length: 1_000_000,
        run: gmtm_equivalence,
    },
    Descriptor {
        id: "rmcmc-gaussian",
        summary: "r-MCMC with an involution targets a Gaussian",
        params: &[
            param("mean", Float(1.0), "target mean"),
            param("sd", Float(2.0), "target standard deviation"),
            param("step", Float(2.5), "random-walk scale"),
            param("c", Float(0.5), "centre of the reflect involution"),
        ],
        algorithms: &["negate", "reflect", "reciprocal"],
        default_chain_length: 1_000_000,
        run: rmcmc_gaussian,
    },
    Descriptor {
        id: "abc-random-refresh",
        summary: "ABC posterior sampled by random refreshment and by GIMH-ABC",
        params: &[
            param("kernel", Text("gaussian"), "\"gaussian\" or \"uniform\""),
            param("h", Float(0.5), "kernel bandwidth"),
            param("obs", Float(1.0), "observed summary"),
            param("prior_mean", Float(0.0), "prior mean"),
            param("prior_sd", Float(1.0), "prior standard deviation"),
            param("sim_sd", Float(1.0), "simulator noise"),
            param("n_obs", Int(1), "points per dataset"),
            param("N", Int(4), "simulated datasets per weight"),
            param("step", Float(1.0), "random-walk scale"),
        ],
        algorithms: &["random_refresh", "freeze"],
        default_chain_length: 1_000_000,
        run: abc_random_refresh,
    },
    Descriptor {
        id: "ergodicity-certificates",
        summary: "V-geometric certificates and covariance bounds for alternating chains",
        params: &[
            param("lambda", Float(0.5), "drift rate in (0, 1)"),
            param("lazy_pairs", Int(5), "random lazy pairs on 2..6 states"),
        ],
        algorithms: &["PQ"],
        default_chain_length: 0,
        run: ergodicity_certificates,
    },
];

pub fn registry() -> &'static [Descriptor] {
    &REGISTRY
}

pub fn find(id: &str) -> CliResult<&'static Descriptor> {
    REGISTRY.iter().find(|d| d.id == id).ok_or_else(|| {
        let names: Vec<&str> = REGISTRY.iter().map(|d| d.id).collect();
        CliError::Config(format!("unknown scenario '{id}'; available: {}", names.join(", ")))
    })
}

struct Rows<'a> {
    r: &'a Resolved,
    out: Outcome,
}

impl<'a> Rows<'a> {
    fn new(r: &'a Resolved) -> Self {
        Self { r, out: Outcome::default() }
    }

    fn row(&self, algorithm: &str, metric: &str, value: f64, method: &str) -> Row {
        Row {
            scenario: self.r.descriptor.id.to_string(),
            algorithm: algorithm.to_string(),
            metric: metric.to_string(),
            value,
            stderr: None,
            method: method.to_string(),
            seed: None,
            replicate: None,
        }
    }

    fn exact(&mut self, algorithm: &str, metric: &str, value: f64, method: &str) {
        let row = self.row(algorithm, metric, value, method);
        self.out.rows.push(row);
    }

    fn check(&mut self, a: Assertion) {
        self.out.assertions.push(a);
    }

    fn detail(&mut self, key: &str, value: Value) {
        self.out.details.insert(key.to_string(), value);
    }

    fn extend(&mut self, runs: Vec<McRun>) {
        for run in runs {
            self.out.rows.extend(run.rows);
            self.out.assertions.extend(run.assertions);
        }
    }

    fn finish(self) -> Outcome {
        self.out
    }
}

/// Rows and assertions of one (algorithm, replicate) simulation.
#[derive(Default)]
struct McRun {
    rows: Vec<Row>,
    assertions: Vec<Assertion>,
}

struct Replicate<'a> {
    r: &'a Resolved,
    algorithm: String,
    replicate: u32,
}

impl Replicate<'_> {
    fn seed(&self) -> u64 {
        self.r.replicate_seed(self.replicate)
    }

    fn stream(&self) -> RngStream {
        RngStream::new(self.seed(), self.r.stream_of(&self.algorithm))
    }

    fn row(&self, metric: &str, value: f64, stderr: Option<f64>, method: &str) -> Row {
        Row {
            scenario: self.r.descriptor.id.to_string(),
            algorithm: self.algorithm.clone(),
            metric: metric.to_string(),
            value,
            stderr,
            method: method.to_string(),
            seed: Some(self.seed()),
            replicate: Some(self.replicate),
        }
    }

    /// Mean and batch-means asymptotic variance of `trace`, plus acceptance rates.
    fn summarize(
        &self,
        label: &str,
        trace: &[f64],
        counts: Option<&AcceptCounts>,
    ) -> Result<(McRun, f64, f64)> {
        let n = trace.len() as f64;
        let bm = batch_means_variance(trace, batch_count(trace.len()))?;
        let mean = trace.iter().sum::<f64>() / n;
        let se = (bm.value / n).sqrt();
        let mut run = McRun::default();
        run.rows.push(self.row(&format!("mean_{label}"), mean, Some(se), "monte_carlo"));
        run.rows.push(self.row(&format!("asvar_{label}"), bm.value, bm.stderr(), "batch_means"));
        if let Some(counts) = counts {
            for (kind, (acc, total)) in &counts.0 {
                if *total > 0 {
                    let rate = *acc as f64 / *total as f64;
                    let se = (rate * (1.0 - rate) / *total as f64).sqrt();
                    run.rows.push(self.row(&format!("accept_rate_{kind}"), rate, Some(se), "monte_carlo"));
                }
            }
        }
        Ok((run, mean, se))
    }
}

/// `⌊√n⌋` batches, at least 2.
fn batch_count(n: usize) -> usize {
    ((n as f64).sqrt().floor() as usize).max(2)
}

/// Runs `job` for every selected algorithm and replicate on the current
/// rayon pool; results come back in (algorithm, replicate) order.
fn replicates(
    r: &Resolved,
    job: impl Fn(&Replicate<'_>) -> Result<McRun> + Send + Sync,
) -> Result<Vec<McRun>> {
    if r.chain_length == 0 {
        return Ok(Vec::new());
    }
    let jobs: Vec<Replicate<'_>> = r
        .algorithms
        .iter()
        .flat_map(|a| (0..r.replicates).map(move |i| Replicate { r, algorithm: a.clone(), replicate: i }))
        .collect();
    jobs.par_iter().map(job).collect()
}

fn within_se(rep: &Replicate<'_>, name: &str, estimate: f64, exact: f64, se: f64) -> Assertion {
    let z = (estimate - exact) / se;
    Assertion::new(
        format!("{} replicate {}: {name} within 3 standard errors", rep.algorithm, rep.replicate),
        z.abs() <= 3.0,
        "variance::batch_means_variance",
        3.0,
        format!("estimate {estimate}, exact {exact}, z = {z:.3}"),
    )
}

fn pm_one() -> FunctionVector {
    FunctionVector::new(vec![-1.0, 1.0]).expect("finite values")
}

fn lift(m: &FiniteAugmentedModel, h: &FunctionVector) -> FunctionVector {
    FunctionVector::new((0..m.n_joint()).map(|i| h.values()[m.split_index(i).0]).collect())
        .expect("finite values")
}

fn selected_toys(r: &Resolved) -> Result<Vec<(&'static str, FiniteAugmentedModel)>> {
    let name = r.text("toy");
    let all = toys::registry();
    if name == "all" {
        return Ok(all);
    }
    let names: Vec<&str> = all.iter().map(|(n, _)| *n).collect();
    match all.into_iter().find(|(n, _)| *n == name) {
        Some(t) => Ok(vec![t]),
        None => Err(Error::InvalidParameter(format!(
            "unknown toy '{name}'; available: all, {}",
            names.join(", ")
        ))),
    }
}

fn functions_for(r: &Resolved, toy_index: usize, ny: usize) -> Vec<FunctionVector> {
    let mut rng = RngStream::new(r.base_seed, toy_index as u64).rng();
    (0..r.int("functions").max(1)).map(|_| random_function(ny, &mut rng)).collect()
}

fn reversed_products(r: &Resolved) -> Result<Outcome> {
    let eps = r.float("eps");
    let q0 = two_state_q0(eps)?;
    let pi = ProbVector::uniform(2)?;
    let f = pm_one();
    let eye = FiniteKernel::identity(q0.space().clone());
    let big_pi = FiniteKernel::independent(q0.space().clone(), &pi)?;
    let pairs = [("P0Q0", eye.clone(), q0.clone()), ("P1Q1", big_pi.clone(), q0.clone())];
    let mut rows = Rows::new(r);
    let mut products = Vec::new();
    let mut values = Vec::new();
    for (name, p, q) in &pairs {
        let product = compose(p, q)?;
        let v = asvar_homogeneous(&product, &pi, &f)?.value;
        let v_rev = asvar_homogeneous(&compose(q, p)?, &pi, &f)?.value;
        let v_alt =
            asvar_alternating(&AlternatingModel::new(p.clone(), q.clone(), pi.clone(), f.clone())?)?.value;
        rows.exact(name, "asvar", v, "closed_form");
        rows.exact(name, "asvar_reversed_product", v_rev, "closed_form");
        rows.exact(name, "asvar_alternating", v_alt, "closed_form");
        rows.detail(&format!("v_{name}"), json!(v));
        products.push(product);
        values.push((v, v_rev));
    }
    let target = eps / (2.0 - eps);
    let var = variance(&pi, &f);
    rows.check(Assertion::new(
        "v(P0Q0) = v(Q0P0) = eps/(2 - eps)",
        (values[0].0 - target).abs() <= 1e-12 && (values[0].1 - target).abs() <= 1e-12,
        "variance::asvar_homogeneous",
        1e-12,
        format!("v(P0Q0) = {}, v(Q0P0) = {}, eps/(2 - eps) = {target}", values[0].0, values[0].1),
    ));
    rows.check(Assertion::new(
        "v(P1Q1) = Var_pi(f)",
        (values[1].0 - var).abs() <= 1e-12,
        "variance::asvar_homogeneous",
        1e-12,
        format!("v(P1Q1) = {}, Var_pi(f) = {var}", values[1].0),
    ));
    rows.check(Assertion::new(
        "P1 dominates P0 off the diagonal",
        off_diagonal_order_check(&eye, &big_pi, 1e-12)?.holds(),
        "markov::off_diagonal_order_check",
        1e-12,
        "P0 = I, P1 = Pi, Q0 = Q1",
    ));
    rows.check(Assertion::new(
        "variance ordering reversed: v(P1Q1) > v(P0Q0)",
        values[1].0 > values[0].0,
        "variance::asvar_homogeneous",
        0.0,
        format!("{} > {}", values[1].0, values[0].0),
    ));
    let runs = replicates(r, |rep| {
        let kernel = &products[if rep.algorithm == "P0Q0" { 0 } else { 1 }];
        let (trace, counts) =
            run_scalar(&MatrixChain { kernel }, 0usize, r.chain_length as usize, rep.stream(), &|x| {
                f.values()[*x]
            })?;
        Ok(rep.summarize("f", &trace, Some(&counts))?.0)
    })?;
    rows.extend(runs);
    Ok(rows.finish())
}

fn flip_counterexample(r: &Resolved) -> Result<Outcome> {
    let n_max = r.int("n_max").max(1) as usize;
    let pi = ProbVector::uniform(2)?;
    let m = AlternatingModel::new(flip_kernel(), flip_kernel(), pi, pm_one())?;
    let mut rows = Rows::new(r);
    let radius = m.spectral_radius()?;
    rows.exact("flip", "spectral_radius", radius, "eigenvalues");
    let outcome = asvar_alternating(&m);
    let fails = matches!(outcome, Err(Error::SummabilityFails { .. }));
    rows.check(Assertion::new(
        "summability condition fails",
        fails,
        "variance::asvar_alternating",
        varorder::tol::UNIT_EIGENVALUE,
        match &outcome {
            Ok(v) => format!("unexpected value {}", v.value),
            Err(e) => e.to_string(),
        },
    ));
    let sums = partial_sum_variances(&m, n_max);
    let mut worst = f64::NEG_INFINITY;
    for (i, s) in sums.iter().enumerate() {
        let n = i + 1;
        worst = worst.max(s / n as f64 - 1.0 / n as f64);
        if n <= 2 || is_power_of_ten(n) || n == n_max {
            rows.exact("flip", &format!("var_sn_over_n_{n}"), s / n as f64, "exact_partial_sums");
        }
    }
    rows.check(Assertion::new(
        "Var(S_n)/n <= 1/n for every n",
        worst <= 1e-15,
        "variance::partial_sum_variances",
        1e-15,
        format!("n <= {n_max}, max Var(S_n)/n - 1/n = {worst:e}"),
    ));
    Ok(rows.finish())
}

fn is_power_of_ten(mut n: usize) -> bool {
    while n >= 10 && n.is_multiple_of(10) {
        n /= 10;
    }
    n == 1
}

fn random_lazy_pairs(r: &Resolved) -> Result<Outcome> {
    let pairs = r.int("pairs").max(1);
    let max_states = r.int("max_states") as usize;
    if max_states < 2 {
        return Err(Error::InvalidParameter("max_states must be at least 2".into()));
    }
    let results: Vec<(usize, f64, f64, bool)> = (0..pairs)
        .into_par_iter()
        .map(|k| {
            let mut rng = RngStream::new(r.base_seed, k).rng();
            let n = 2 + (k as usize) % (max_states - 1);
            let space = Arc::new(StateSpace::anonymous(n)?);
            let pi = random_prob_vector(n, &mut rng)?;
            let p = random_reversible_kernel(&space, &pi, &mut rng)?;
            let q = random_reversible_kernel(&space, &pi, &mut rng)?;
            let f = random_function(n, &mut rng);
            let (p0, p1) = lazy_pair(&p, rng.random_range(0.01..0.99))?;
            let (q0, q1) = lazy_pair(&q, rng.random_range(0.01..0.99))?;
            let peskun = off_diagonal_order_check(&p0, &p1, 1e-12)?.holds()
                && off_diagonal_order_check(&q0, &q1, 1e-12)?.holds();
            let v0 = asvar_alternating(&AlternatingModel::new(p0, q0, pi.clone(), f.clone())?)?.value;
            let v1 = asvar_alternating(&AlternatingModel::new(p1, q1, pi, f)?)?.value;
            Ok((n, v0, v1, peskun))
        })
        .collect::<Result<_>>()?;
    let mut rows = Rows::new(r);
    let mut violations = 0;
    let mut worst = f64::NEG_INFINITY;
    for (k, (n, v0, v1, _)) in results.iter().enumerate() {
        rows.exact("P0Q0", &format!("asvar_pair_{k}_n{n}"), *v0, "closed_form");
        rows.exact("P1Q1", &format!("asvar_pair_{k}_n{n}"), *v1, "closed_form");
        worst = worst.max(v1 - v0);
        if *v1 > v0 + 1e-9 {
            violations += 1;
        }
    }
    rows.exact("P1Q1-P0Q0", "max_difference", worst, "closed_form");
    rows.check(Assertion::new(
        "P1 dominates P0 and Q1 dominates Q0 off the diagonal",
        results.iter().all(|x| x.3),
        "markov::off_diagonal_order_check",
        1e-12,
        format!("{pairs} lazy pairs"),
    ));
    rows.check(Assertion::new(
        "v(f, P1, Q1) <= v(f, P0, Q0)",
        violations == 0,
        "variance::asvar_alternating",
        1e-9,
        format!("{violations} violations in {pairs} quadruples, max v1 - v0 = {worst:e}"),
    ));
    Ok(rows.finish())
}

fn algorithm(name: &str) -> Algorithm {
    match name {
        "freeze" => Algorithm::Freeze,
        "systematic_refresh" => Algorithm::SystematicRefresh,
        "random_refresh" => Algorithm::RandomRefresh,
        "noisy" => Algorithm::Noisy,
        other => unreachable!("no augmented algorithm named {other}"),
    }
}

fn kind_of(alg: Algorithm) -> KernelKind {
    match alg {
        Algorithm::Freeze => KernelKind::Freeze,
        Algorithm::SystematicRefresh => KernelKind::SystematicRefresh,
        Algorithm::RandomRefresh => KernelKind::RandomRefresh,
        Algorithm::Noisy => KernelKind::Noisy,
    }
}

/// Exact variances of the freeze algorithm and `challenger` on the selected
/// toys, plus simulations on the first toy.
fn against_freeze(r: &Resolved, challenger: Algorithm, rows: &mut Rows<'_>) -> Result<()> {
    let toys = selected_toys(r)?;
    for (idx, (name, m)) in toys.iter().enumerate() {
        let pi = m.joint_pi();
        let freeze = extract_kernel(KernelKind::Freeze, m)?.kernel;
        let other = extract_kernel(kind_of(challenger), m)?.kernel;
        let mut worst = f64::NEG_INFINITY;
        for (j, h) in functions_for(r, idx, m.ny()).iter().enumerate() {
            let f = lift(m, h);
            let v1 = asvar_homogeneous(&freeze, &pi, &f)?.value;
            let v = asvar_homogeneous(&other, &pi, &f)?.value;
            rows.exact("freeze", &format!("{name}/asvar_f{j}"), v1, "closed_form");
            rows.exact(challenger.as_str(), &format!("{name}/asvar_f{j}"), v, "closed_form");
            worst = worst.max(v - v1);
        }
        rows.check(Assertion::new(
            format!("{name}: asvar({}) <= asvar(freeze)", challenger.as_str()),
            worst <= 1e-9,
            "exactify::extract_kernel + variance::asvar_homogeneous",
            1e-9,
            format!("max difference {worst:e}"),
        ));
    }
    let (name, m) = &toys[0];
    let h = functions_for(r, 0, m.ny()).swap_remove(0);
    let runs = replicates(r, |rep| {
        let sampler = AugmentedSampler::new(m, algorithm(&rep.algorithm));
        let initial = ChainState::augmented(m, 0, 0);
        let (trace, counts) =
            run_scalar(&sampler, initial, r.chain_length as usize, rep.stream(), &|s: &ChainState<
                usize,
                usize,
            >| {
                h.values()[s.y]
            })?;
        Ok(rep.summarize(&format!("{name}/f0"), &trace, Some(&counts))?.0)
    })?;
    rows.extend(runs);
    Ok(())
}

fn freeze_vs_refresh(r: &Resolved) -> Result<Outcome> {
    let mut rows = Rows::new(r);
    against_freeze(r, Algorithm::SystematicRefresh, &mut rows)?;
    for (name, m) in selected_toys(r)? {
        let a2 = extract_kernel(KernelKind::SystematicRefresh, &m)?;
        let ky = marginal_kernel(&a2, &m)?;
        rows.check(Assertion::new(
            format!("{name}: systematic-refresh y-kernel is pi*-reversible"),
            detailed_balance_check(&ky, m.pi_star(), 1e-12)?.holds(),
            "exactify::marginal_kernel + markov::detailed_balance_check",
            1e-12,
            format!("max violation {:e}", max_detailed_balance_violation(&ky, m.pi_star())?.2),
        ));
    }
    Ok(rows.finish())
}

fn random_refresh(r: &Resolved) -> Result<Outcome> {
    let mut rows = Rows::new(r);
    against_freeze(r, Algorithm::RandomRefresh, &mut rows)?;
    for (name, m) in selected_toys(r)? {
        let pi = m.joint_pi();
        let a3 = extract_kernel(KernelKind::RandomRefresh, &m)?.kernel;
        let p3 = extract_kernel(KernelKind::RandomRefreshComponent, &m)?.kernel;
        let residual = a3.invariance_residual(&pi);
        rows.check(Assertion::new(
            format!("{name}: random-refresh kernel is pi-invariant"),
            residual <= 1e-12,
            "markov::FiniteKernel::invariance_residual",
            1e-12,
            format!("residual {residual:e}"),
        ));
        rows.check(Assertion::new(
            format!("{name}: refresh component P3 is pi-reversible"),
            detailed_balance_check(&p3, &pi, 1e-12)?.holds(),
            "markov::detailed_balance_check",
            1e-12,
            format!("max violation {:e}", max_detailed_balance_violation(&p3, &pi)?.2),
        ));
        let violation = max_detailed_balance_violation(&a3, &pi)?.2;
        rows.exact("random_refresh", &format!("{name}/detailed_balance_violation"), violation, "exact");
        rows.check(Assertion::new(
            format!("{name}: random-refresh kernel P3Q is pi-reversible"),
            violation <= 1e-12,
            "markov::detailed_balance_check",
            1e-12,
            format!("max violation {violation:e}; P3 and Q are reversible but need not commute"),
        ));
        if m.weights_constant() {
            let a2 = extract_kernel(KernelKind::SystematicRefresh, &m)?.kernel;
            let gap = (a2.matrix() - a3.matrix()).amax();
            rows.check(Assertion::new(
                format!("{name}: constant weights make random and systematic refresh coincide"),
                gap <= 1e-14,
                "exactify::extract_kernel",
                1e-14,
                format!("max entry difference {gap:e}"),
            ));
        }
    }
    Ok(rows.finish())
}

/// Exact y-marginal stationary law of `kind` on the GIMH toy.
fn gimh_marginal(m: &FiniteAugmentedModel, kind: KernelKind) -> Result<ProbVector> {
    y_marginal(m, &stationary_distribution(&extract_kernel(kind, m)?.kernel)?)
}

/// Monte Carlo estimate of `P(y = 1)` from the generic GIMH sampler.
fn gimh_runs(r: &Resolved, exact: f64) -> Result<Vec<McRun>> {
    let (imp, s) = toys::gimh_toy();
    let model = gimh_as_freeze(imp.clone(), MatrixProposal(s));
    replicates(r, |rep| {
        let sampler = AugmentedSampler::new(&model, algorithm(&rep.algorithm));
        let initial = ChainState::augmented(&model, 0, imp.decode(0));
        let (trace, counts) = run_scalar(&sampler, initial, r.chain_length as usize, rep.stream(), &|st| {
            if st.y == 1 {
                1.0
            } else {
                0.0
            }
        })?;
        let (mut run, mean, se) = rep.summarize("y1", &trace, Some(&counts))?;
        run.assertions.push(within_se(rep, "P(y = 1)", mean, exact, se));
        Ok(run)
    })
}

fn gimh_exactness(r: &Resolved) -> Result<Outcome> {
    let m = toys::gimh_augmented();
    let mut rows = Rows::new(r);
    for (y, p) in m.pi_star().weights().iter().enumerate() {
        rows.exact("target", &format!("pi_star_y{y}"), *p, "exact");
    }
    for (alg, kind) in [("freeze", KernelKind::Freeze), ("random_refresh", KernelKind::RandomRefresh)] {
        let marginal = gimh_marginal(&m, kind)?;
        for (y, p) in marginal.weights().iter().enumerate() {
            rows.exact(alg, &format!("stationary_y{y}"), *p, "exact");
        }
        let tv = marginal.total_variation(m.pi_star());
        rows.exact(alg, "tv_from_pi_star", tv, "exact");
        rows.check(Assertion::new(
            format!("{alg}: y-marginal stationary law equals pi*"),
            tv <= 1e-12,
            "exactify::stationary_distribution + exactify::y_marginal",
            1e-12,
            format!("total variation {tv:e}"),
        ));
    }
    let pi1 = m.pi_star().weights()[1];
    rows.extend(gimh_runs(r, pi1)?);
    Ok(rows.finish())
}

fn mcwm_bias(r: &Resolved) -> Result<Outcome> {
    let m = toys::gimh_augmented();
    let mut rows = Rows::new(r);
    let noisy = gimh_marginal(&m, KernelKind::Noisy)?;
    for (y, (p, q)) in m.pi_star().weights().iter().zip(noisy.weights()).enumerate() {
        rows.exact("target", &format!("pi_star_y{y}"), *p, "exact");
        rows.exact("noisy", &format!("stationary_y{y}"), *q, "exact");
    }
    let gap = noisy.total_variation(m.pi_star());
    rows.exact("noisy", "tv_from_pi_star", gap, "exact");
    rows.detail("mcwm_tv_gap", json!(gap));
    rows.check(Assertion::new(
        "noisy y-marginal stationary law differs from pi*",
        gap > 0.0,
        "exactify::stationary_distribution + exactify::y_marginal",
        0.0,
        format!("total variation gap {gap}"),
    ));
    let noisy1 = noisy.weights()[1];
    rows.extend(gimh_runs(r, noisy1)?);
    Ok(rows.finish())
}

fn marginal_mh_peskun(r: &Resolved) -> Result<Outcome> {
    let toys = selected_toys(r)?;
    let mut rows = Rows::new(r);
    for (idx, (name, m)) in toys.iter().enumerate() {
        let ky = marginal_kernel(&extract_kernel(KernelKind::SystematicRefresh, m)?, m)?;
        let mh = extract_kernel(KernelKind::MarginalMh, m)?.kernel;
        rows.check(Assertion::new(
            format!("{name}: marginal MH dominates the systematic-refresh y-kernel off the diagonal"),
            off_diagonal_order_check(&ky, &mh, 1e-12)?.holds(),
            "markov::off_diagonal_order_check",
            1e-12,
            "P0 = systematic-refresh y-kernel, P1 = marginal MH",
        ));
        let mut worst = f64::NEG_INFINITY;
        for (j, h) in functions_for(r, idx, m.ny()).iter().enumerate() {
            let v_mh = asvar_homogeneous(&mh, m.pi_star(), h)?.value;
            let v2 = asvar_homogeneous(&ky, m.pi_star(), h)?.value;
            rows.exact("marginal_mh", &format!("{name}/asvar_f{j}"), v_mh, "closed_form");
            rows.exact("systematic_refresh", &format!("{name}/asvar_f{j}"), v2, "closed_form");
            worst = worst.max(v_mh - v2);
        }
        rows.check(Assertion::new(
            format!("{name}: asvar(marginal MH) <= asvar(systematic refresh)"),
            worst <= 1e-9,
            "variance::asvar_homogeneous",
            1e-9,
            format!("max difference {worst:e}"),
        ));
    }
    let (name, m) = &toys[0];
    let h = functions_for(r, 0, m.ny()).swap_remove(0);
    let proposal = MatrixProposal(m.marginal_proposal());
    let w = m.pi_star().weights().to_vec();
    let log_pi = move |y: &usize| w[*y].ln();
    let runs = replicates(r, |rep| {
        let n = r.chain_length as usize;
        let (trace, counts) = if rep.algorithm == "marginal_mh" {
            let stepper = MarginalMh { kernel: &proposal, log_pi_star: &log_pi };
            run_scalar(&stepper, 0usize, n, rep.stream(), &|y| h.values()[*y])?
        } else {
            let sampler = AugmentedSampler::new(m, Algorithm::SystematicRefresh);
            run_scalar(&sampler, ChainState::augmented(m, 0, 0), n, rep.stream(), &|s| h.values()[s.y])?
        };
        Ok(rep.summarize(&format!("{name}/f0"), &trace, Some(&counts))?.0)
    })?;
    rows.extend(runs);
    Ok(rows.finish())
}

fn omega_of(name: &str) -> OmegaFamily {
    match name {
        "uniform" => OmegaFamily::Uniform,
        "proposal" => OmegaFamily::Proposal,
        _ => OmegaFamily::Target,
    }
}

fn gmtm_equivalence(r: &Resolved) -> Result<Outcome> {
    let tries = r.int("tries") as usize;
    let mut rows = Rows::new(r);
    let mut models = Vec::new();
    for name in r.descriptor.algorithms {
        let base = toys::gmtm_toy(omega_of(name));
        let g = FiniteGmtm::new(base.pi_star, base.r_check, omega_of(name), tries)?;
        let direct = g.exact_kernel()?;
        let m = gmtm_rst_decomposition(&g).to_augmented()?;
        let ky = marginal_kernel(&extract_kernel(KernelKind::SystematicRefresh, &m)?, &m)?;
        let err = (direct.matrix() - ky.matrix()).amax();
        let residual = direct.invariance_residual(&g.pi_star);
        rows.exact(name, "embedding_max_error", err, "exact");
        rows.check(Assertion::new(
            format!("omega = {name}: GMTM kernel equals the systematic-refresh embedding"),
            err <= 1e-12,
            "special::FiniteGmtm::exact_kernel vs exactify::marginal_kernel",
            1e-12,
            format!("max entry difference {err:e}"),
        ));
        rows.check(Assertion::new(
            format!("omega = {name}: GMTM kernel is pi*-invariant"),
            residual <= 1e-12,
            "markov::FiniteKernel::invariance_residual",
            1e-12,
            format!("residual {residual:e}"),
        ));
        models.push(g);
    }
    let g1 = GaussianGmtm { mean: 0.0, sd: 1.0, step: 0.7, tries: 1, omega: OmegaFamily::Target };
    let mut rng = RngStream::new(r.base_seed, 100).rng();
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let y = rng.random_range(-2.0..2.0);
        let yn = g1.sample_r_check(&y, &mut rng)?;
        let lr = gmtm_log_ratio(&g1, &y, &[yn], &yn, &[y])?;
        let mh = g1.log_pi_star(&yn) + g1.log_r_check(&yn, &y) - g1.log_pi_star(&y) - g1.log_r_check(&y, &yn);
        worst = worst.max((lr.min(0.0).exp() - mh.min(0.0).exp()).abs());
    }
    rows.check(Assertion::new(
        "one-try GMTM acceptance equals MH acceptance",
        worst <= 1e-12,
        "special::gmtm_log_ratio",
        1e-12,
        format!("1000 tuples, max difference {worst:e}"),
    ));
    let runs = replicates(r, |rep| {
        let slot = r.descriptor.algorithms.iter().position(|a| *a == rep.algorithm).expect("known family");
        let g = &models[slot];
        let (trace, counts) =
            run_scalar(&GmtmSampler(g), 0usize, r.chain_length as usize, rep.stream(), &|y| *y as f64)?;
        let mut run = McRun::default();
        for (y, p) in g.pi_star.weights().iter().enumerate() {
            let ind: Vec<f64> = trace.iter().map(|x| if *x as usize == y { 1.0 } else { 0.0 }).collect();
            let (mut part, mean, se) =
                rep.summarize(&format!("y{y}"), &ind, if y == 0 { Some(&counts) } else { None })?;
            part.assertions.push(within_se(rep, &format!("P(y = {y})"), mean, *p, se));
            run.rows.append(&mut part.rows);
            run.assertions.append(&mut part.assertions);
        }
        Ok(run)
    })?;
    rows.extend(runs);
    Ok(rows.finish())
}

fn involution_of(name: &str, c: f64) -> Involution {
    match name {
        "reciprocal" => Involution::Reciprocal,
        "reflect" => Involution::ReflectAbout { c },
        _ => Involution::Negate,
    }
}

fn rmcmc_gaussian(r: &Resolved) -> Result<Outcome> {
    let (mean, sd, step, c) = (r.float("mean"), r.float("sd"), r.float("step"), r.float("c"));
    let mut rows = Rows::new(r);
    let mut rng = RngStream::new(r.base_seed, 100).rng();
    for name in r.descriptor.algorithms {
        let f = involution_of(name, c);
        let m = GaussianRmcmc::new(mean, sd, step, f)?;
        let mut worst = 0.0f64;
        for _ in 0..1000 {
            let y = mean + sd * rng.random_range(-2.0..2.0);
            let yn = m.sample_r_check(&y, &mut rng)?;
            let u = m.sample_s_check(&y, &yn, &mut rng)?;
            let a = rmcmc_log_ratio(&m, &y, &u, &yn)?;
            let b = rmcmc_log_ratio(&m, &yn, &f.apply(&u), &y)?;
            worst = worst.max(((a + b).exp() - 1.0).abs());
        }
        rows.check(Assertion::new(
            format!("{name}: pre-clamp ratios are reciprocal"),
            worst <= 1e-10,
            "special::rmcmc_log_ratio",
            1e-10,
            format!("1000 tuples, max |gamma * gamma' - 1| = {worst:e}"),
        ));
    }
    rows.exact("target", "mean", mean, "exact");
    rows.exact("target", "variance", sd * sd, "exact");
    let runs = replicates(r, |rep| {
        let m = GaussianRmcmc::new(mean, sd, step, involution_of(&rep.algorithm, c))?;
        let (trace, counts) =
            run_scalar(&RmcmcSampler(&m), mean, r.chain_length as usize, rep.stream(), &|y| *y)?;
        let (mut run, est, se) = rep.summarize("y", &trace, Some(&counts))?;
        run.assertions.push(within_se(rep, "mean", est, mean, se));
        let sq: Vec<f64> = trace.iter().map(|y| (y - mean).powi(2)).collect();
        let (part, var, var_se) = rep.summarize("sq_dev", &sq, None)?;
        run.rows.extend(part.rows);
        run.assertions.push(within_se(rep, "variance", var, sd * sd, var_se));
        Ok(run)
    })?;
    rows.extend(runs);
    Ok(rows.finish())
}

fn abc_random_refresh(r: &Resolved) -> Result<Outcome> {
    let config: AbcConfig = serde_json::from_value(Value::Object(r.params.clone().into_iter().collect()))
        .map_err(|e| Error::InvalidParameter(format!("ABC parameters: {e}")))?;
    let model = config.build()?;
    let mut rows = Rows::new(r);
    let exact = model.gaussian_posterior();
    if let Some((m, v)) = exact {
        rows.exact("target", "posterior_mean", m, "closed_form");
        rows.exact("target", "posterior_variance", v, "closed_form");
    }
    let obs = config.obs;
    let runs = replicates(r, |rep| {
        let sampler = AugmentedSampler::new(&model, algorithm(&rep.algorithm));
        let initial = ChainState::augmented(&model, obs, model.dataset_with_summary(obs));
        let (trace, counts) = run_scalar(&sampler, initial, r.chain_length as usize, rep.stream(), &|s| s.y)?;
        let (mut run, est, se) = rep.summarize("y", &trace, Some(&counts))?;
        if let Some((m, v)) = exact {
            run.assertions.push(within_se(rep, "posterior mean", est, m, se));
            let sq: Vec<f64> = trace.iter().map(|y| (y - m).powi(2)).collect();
            let (part, var, var_se) = rep.summarize("sq_dev", &sq, None)?;
            run.rows.extend(part.rows);
            run.assertions.push(within_se(rep, "posterior variance", var, v, var_se));
        }
        Ok(run)
    })?;
    rows.extend(runs);
    Ok(rows.finish())
}

fn ergodicity_certificates(r: &Resolved) -> Result<Outcome> {
    let lambda = r.float("lambda");
    let mut rng = RngStream::new(r.base_seed, 0).rng();
    let mut cases: Vec<(String, FiniteKernel, FiniteKernel, ProbVector, FunctionVector)> = Vec::new();
    let pi2 = ProbVector::uniform(2)?;
    let q0 = two_state_q0(0.5)?;
    cases.push((
        "pi-then-q0".into(),
        FiniteKernel::independent(q0.space().clone(), &pi2)?,
        q0,
        pi2,
        pm_one(),
    ));
    for k in 0..r.int("lazy_pairs") as usize {
        let n = 2 + k % 5;
        let space = Arc::new(StateSpace::anonymous(n)?);
        let pi = random_prob_vector(n, &mut rng)?;
        let p = random_reversible_kernel(&space, &pi, &mut rng)?;
        let q = random_reversible_kernel(&space, &pi, &mut rng)?;
        let (p0, _) = lazy_pair(&p, 0.3)?;
        let (q0, _) = lazy_pair(&q, 0.6)?;
        cases.push((format!("lazy-pair-{k}-n{n}"), p0, q0, pi, random_function(n, &mut rng)));
    }
    for (name, m) in toys::registry() {
        let p = extract_kernel(KernelKind::SystematicRefreshComponent, &m)?.kernel;
        let q = extract_kernel(KernelKind::Freeze, &m)?.kernel;
        let f = lift(&m, &random_function(m.ny(), &mut rng));
        cases.push((format!("{name}-P2-Q"), p, q, m.joint_pi(), f));
    }
    let mut rows = Rows::new(r);
    for (name, p, q, pi, f) in &cases {
        let v = FunctionVector::new((0..p.size()).map(|_| rng.random_range(1.0..4.0)).collect())?;
        let report = summability_certificate(p, q, pi, f, &v, lambda)?;
        let c = &report.certificate;
        for (metric, value) in [
            ("C", c.c),
            ("rho", c.rho),
            ("b", c.b),
            ("pi_V", report.pi_v),
            ("max_cov_over_bound", report.max_ratio),
        ] {
            rows.exact(name, metric, value, "certificate");
        }
        let drift = c.drift_holds(&compose(p, q)?);
        rows.check(Assertion::new(
            format!("{name}: drift PV <= lambda V + b"),
            drift,
            "ergodicity::DriftCertificate::drift_holds",
            1e-12,
            format!("lambda = {lambda}, b = {}", c.b),
        ));
        rows.check(Assertion::new(
            format!("{name}: |cov| <= c^2 (2 C rho^m)^(1/2) pi V for n <= 50"),
            report.holds,
            "ergodicity::summability_certificate",
            1e-12,
            format!("{} checks, max ratio {:.4}", report.checks.len(), report.max_ratio),
        ));
        let model = AlternatingModel::new(p.clone(), q.clone(), pi.clone(), f.clone())?;
        let consistent = asvar_alternating(&model).is_ok();
        rows.check(Assertion::new(
            format!("{name}: certificate implies a finite closed-form variance"),
            consistent,
            "variance::asvar_alternating",
            varorder::tol::UNIT_EIGENVALUE,
            format!("centered spectral radius {}", model.spectral_radius()?),
        ));
    }
    Ok(rows.finish())
}
