//! Genetic search over group-level diode states, plus an exhaustive oracle for tiny surfaces.

use std::collections::HashMap;

use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::{FieldEngine, FieldError, SourceModel};
use crate::grid::{FieldGrid, GridError};
use crate::metrics::{nmse, MetricsError};
use crate::num::Real;
use crate::surface::{expand_groups, ConfigMatrix, GroupLayout, SurfaceError, SurfaceSpec};

/// Largest search space `exhaustive_search` will enumerate.
pub const EXHAUSTIVE_LIMIT: u64 = 1 << 20;

#[derive(Debug, Error)]
pub enum OptimizerError {
    #[error("invalid GA parameters: {0}")]
    InvalidParams(String),
    #[error("search space {states}^{genes} exceeds 2^20 configurations")]
    SearchSpaceTooLarge { states: usize, genes: usize },
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Surface(#[from] SurfaceError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Grid(#[from] GridError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GAParams {
    pub population: usize,
    pub generations: usize,
    pub crossover_prob: f64,
    /// `None` means one over the chromosome length.
    pub mutation_prob_per_gene: Option<f64>,
    pub elitism: usize,
    pub tournament_size: usize,
    pub seed: u64,
    /// Initial individuals built by back-projecting the target onto the aperture; the rest of the
    /// initial population is uniformly random.
    pub informed_seeds: usize,
}

impl Default for GAParams {
    fn default() -> Self {
        GAParams {
            population: 100,
            generations: 350,
            crossover_prob: 0.9,
            mutation_prob_per_gene: None,
            elitism: 2,
            tournament_size: 2,
            seed: 42,
            informed_seeds: 4,
        }
    }
}

impl GAParams {
    pub fn validate(&self) -> Result<(), OptimizerError> {
        let bad = |m: String| Err(OptimizerError::InvalidParams(m));
        if self.population < 2 {
            return bad(format!("population {} < 2", self.population));
        }
        if self.elitism >= self.population {
            return bad(format!("elitism {} >= population {}", self.elitism, self.population));
        }
        if self.generations < 1 {
            return bad("generations must be at least 1".into());
        }
        if self.tournament_size < 1 {
            return bad("tournament_size must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.crossover_prob) {
            return bad(format!("crossover_prob {} outside [0, 1]", self.crossover_prob));
        }
        if let Some(p) = self.mutation_prob_per_gene {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("mutation_prob_per_gene {p} outside [0, 1]"));
            }
        }
        Ok(())
    }

    pub fn mutation_rate(&self, chromosome_len: usize) -> f64 {
        self.mutation_prob_per_gene
            .unwrap_or(1.0 / chromosome_len.max(1) as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GAResult {
    pub best_config: ConfigMatrix,
    /// One state per control group.
    pub best_genes: Vec<u8>,
    pub best_fitness: f64,
    /// Best fitness after each generation; entry 0 is the initial population.
    pub history: Vec<f64>,
    /// Number of field evaluations performed.
    pub evaluations: usize,
}

impl GAResult {
    /// `generation,best_fitness` rows, generations counted from 0.
    pub fn history_csv(&self) -> String {
        let mut s = String::from("generation,best_fitness\n");
        for (g, f) in self.history.iter().enumerate() {
            s.push_str(&format!("{g},{}\n", crate::grid::fmt_sig9(*f)));
        }
        s
    }
}

/// Surface, source and target bundled with a reusable field engine.
#[derive(Debug, Clone)]
pub struct FitnessProblem<T> {
    pub surface: SurfaceSpec<T>,
    pub layout: GroupLayout,
    pub source: SourceModel<T>,
    pub target: FieldGrid<T>,
    engine: FieldEngine<T>,
}

impl<T: Real> FitnessProblem<T> {
    pub fn new(surface: SurfaceSpec<T>, source: SourceModel<T>, target: &FieldGrid<T>) -> Result<Self, OptimizerError> {
        source.validate()?;
        let peak = target.max_magnitude();
        if peak <= T::zero() {
            return Err(MetricsError::AllZeroField.into());
        }
        let layout = GroupLayout::row_major(surface.rows, surface.cols, surface.group_size)?;
        let engine = FieldEngine::new(&surface, target.grid);
        Ok(FitnessProblem {
            layout,
            source,
            target: target.clone(),
            engine,
            surface,
        })
    }

    pub fn n_genes(&self) -> usize {
        self.layout.n_groups()
    }

    pub fn n_states(&self) -> usize {
        self.surface.cell.n_states()
    }

    pub fn expand(&self, genes: &[u8]) -> Result<ConfigMatrix, OptimizerError> {
        Ok(expand_groups(genes, &self.layout, self.n_states())?)
    }

    pub fn field(&self, config: &ConfigMatrix) -> Result<FieldGrid<T>, OptimizerError> {
        Ok(self.engine.field(&self.surface, config, &self.source)?)
    }

    /// `-nmse(target, field)`; zero only for a perfect match.
    pub fn fitness(&self, config: &ConfigMatrix) -> Result<T, OptimizerError> {
        let f = self.field(config)?;
        Ok(-nmse(&self.target, &f)?)
    }

    pub fn fitness_of_genes(&self, genes: &[u8]) -> Result<T, OptimizerError> {
        self.fitness(&self.expand(genes)?)
    }

    fn search_space(&self) -> Option<u64> {
        (self.n_states() as u64).checked_pow(u32::try_from(self.n_genes()).ok()?)
    }
}

/// One-off fitness of a full configuration against `target`.
pub fn fitness<T: Real>(
    config: &ConfigMatrix,
    target: &FieldGrid<T>,
    surface: &SurfaceSpec<T>,
    src: &SourceModel<T>,
) -> Result<T, OptimizerError> {
    config.check_states(surface.cell.n_states())?;
    FitnessProblem::new(surface.clone(), *src, target)?.fitness(config)
}

fn better(a: f64, b: f64) -> bool {
    // NaN never wins
    a > b || (b.is_nan() && !a.is_nan())
}

fn tournament(rng: &mut ChaCha8Rng, fitness: &[f64], size: usize) -> usize {
    let mut best = rng.gen_range(0..fitness.len());
    for _ in 1..size {
        let c = rng.gen_range(0..fitness.len());
        if better(fitness[c], fitness[best]) || (fitness[c] == fitness[best] && c < best) {
            best = c;
        }
    }
    best
}

fn mutate(rng: &mut ChaCha8Rng, genes: &mut [u8], rate: f64, n_states: usize) {
    for g in genes.iter_mut() {
        if rng.gen_bool(rate) {
            // uniform over the other states
            let r = rng.gen_range(0..n_states - 1) as u8;
            *g = if r >= *g { r + 1 } else { r };
        }
    }
}

/// Evaluates batches in parallel, results in input order. Small search spaces are memoised; lookups and
/// de-duplication happen on the calling thread so the evaluation count is deterministic.
struct Evaluator<'a, T> {
    problem: &'a FitnessProblem<T>,
    memo: Option<HashMap<Vec<u8>, f64>>,
    evaluations: usize,
}

impl<'a, T: Real> Evaluator<'a, T> {
    fn new(problem: &'a FitnessProblem<T>) -> Self {
        let small = problem.search_space().is_some_and(|s| s <= EXHAUSTIVE_LIMIT);
        Evaluator {
            problem,
            memo: small.then(HashMap::new),
            evaluations: 0,
        }
    }

    fn batch(&mut self, pop: &[Vec<u8>]) -> Result<Vec<f64>, OptimizerError> {
        let problem = self.problem;
        let eval = |g: &Vec<u8>| problem.fitness_of_genes(g).map(|f| f.to_f64_lossy());
        let Some(memo) = &mut self.memo else {
            self.evaluations += pop.len();
            return pop.par_iter().map(eval).collect();
        };
        let mut missing: Vec<&Vec<u8>> = Vec::new();
        for g in pop {
            if !memo.contains_key(g) && !missing.contains(&g) {
                missing.push(g);
            }
        }
        let fresh: Vec<f64> = missing.par_iter().map(|g| eval(g)).collect::<Result<_, _>>()?;
        self.evaluations += missing.len();
        for (g, f) in missing.into_iter().zip(fresh) {
            memo.insert(g.clone(), f);
        }
        Ok(pop.iter().map(|g| memo[g]).collect())
    }
}

/// Generational GA: tournament selection, uniform crossover, per-gene mutation, elitism.
/// All random draws come from one ChaCha stream in a fixed order, so results depend only on
/// `params` (including the seed), never on thread count.
/// Matched-filter starting points: the target magnitude is projected onto every cell, the source
/// phase is removed, and each group takes the state with the largest projection on the group sum.
/// Seed `i` rotates the projection by `i / count` of a state spacing so the roundings differ.
fn backprojected_seeds<T: Real>(problem: &FitnessProblem<T>, count: usize) -> Result<Vec<Vec<u8>>, OptimizerError> {
    if count == 0 {
        return Ok(Vec::new());
    }
    let surface = &problem.surface;
    let grid = problem.target.grid;
    let deg = std::f64::consts::PI / 180.0;
    let mut points = Vec::new();
    for i in 0..grid.n_front_rows() {
        let (st, _) = (grid.theta_deg(i) * deg).sin_cos();
        for j in 0..grid.n_phi() {
            let w = problem.target.at(i, j).norm().to_f64_lossy() * st;
            if w > 0.0 {
                let (sp, cp) = (grid.phi_deg(j) * deg).sin_cos();
                points.push((w, st * cp, st * sp));
            }
        }
    }
    let k = std::f64::consts::TAU / surface.wavelength_m().to_f64_lossy();
    let incident = crate::field::incident_weights(surface, &problem.source)?;
    let cells: Vec<Complex<f64>> = surface
        .positions()
        .into_par_iter()
        .zip(incident.into_par_iter())
        .map(|([x, y, _], inc)| {
            let (x, y) = (x.to_f64_lossy(), y.to_f64_lossy());
            let d: Complex<f64> = points
                .iter()
                .map(|&(w, u, v)| Complex::from_polar(w, -k * (x * u + y * v)))
                .sum();
            let inc = Complex::new(inc.re.to_f64_lossy(), inc.im.to_f64_lossy());
            if inc.norm() > 0.0 {
                d * inc.conj() / inc.norm()
            } else {
                Complex::new(0.0, 0.0)
            }
        })
        .collect();
    let mut groups = vec![Complex::new(0.0, 0.0); problem.layout.n_groups()];
    for (c, &g) in cells.iter().zip(&problem.layout.assignment) {
        groups[g] += c;
    }
    let states: Vec<Complex<f64>> = surface
        .cell
        .states
        .iter()
        .map(|s| Complex::from_polar(s.gamma_mag.to_f64_lossy(), s.gamma_phase_deg.to_f64_lossy() * deg))
        .collect();
    let spacing = std::f64::consts::TAU / states.len() as f64;
    Ok((0..count)
        .map(|i| {
            let rot = Complex::from_polar(1.0, spacing * i as f64 / count as f64);
            groups
                .iter()
                .map(|g| {
                    let want = (g * rot).conj();
                    let mut best = (f64::NEG_INFINITY, 0u8);
                    for (s, gamma) in states.iter().enumerate() {
                        let score = (gamma * want).re;
                        if score > best.0 {
                            best = (score, s as u8);
                        }
                    }
                    best.1
                })
                .collect()
        })
        .collect())
}

pub fn run_ga<T: Real>(problem: &FitnessProblem<T>, params: &GAParams) -> Result<GAResult, OptimizerError> {
    params.validate()?;
    let n_genes = problem.n_genes();
    let n_states = problem.n_states();
    let rate = params.mutation_rate(n_genes);
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut eval = Evaluator::new(problem);

    let mut pop = backprojected_seeds(problem, params.informed_seeds.min(params.population))?;
    while pop.len() < params.population {
        pop.push((0..n_genes).map(|_| rng.gen_range(0..n_states) as u8).collect());
    }
    let mut fit = eval.batch(&pop)?;
    let mut history = Vec::with_capacity(params.generations);

    let ranked = |fit: &[f64]| {
        let mut idx: Vec<usize> = (0..fit.len()).collect();
        idx.sort_by(|&a, &b| {
            if better(fit[a], fit[b]) {
                std::cmp::Ordering::Less
            } else if better(fit[b], fit[a]) {
                std::cmp::Ordering::Greater
            } else {
                a.cmp(&b)
            }
        });
        idx
    };
    history.push(fit[ranked(&fit)[0]]);

    for _ in 1..params.generations {
        let order = ranked(&fit);
        let mut next: Vec<Vec<u8>> = order[..params.elitism].iter().map(|&i| pop[i].clone()).collect();
        let mut next_fit: Vec<f64> = order[..params.elitism].iter().map(|&i| fit[i]).collect();
        let mut children = Vec::with_capacity(params.population - params.elitism);
        while next.len() + children.len() < params.population {
            let a = &pop[tournament(&mut rng, &fit, params.tournament_size)];
            let b = &pop[tournament(&mut rng, &fit, params.tournament_size)];
            let (mut c1, mut c2) = (a.clone(), b.clone());
            if rng.gen_bool(params.crossover_prob) {
                for k in 0..n_genes {
                    if rng.gen_bool(0.5) {
                        std::mem::swap(&mut c1[k], &mut c2[k]);
                    }
                }
            }
            mutate(&mut rng, &mut c1, rate, n_states);
            mutate(&mut rng, &mut c2, rate, n_states);
            children.push(c1);
            if next.len() + children.len() < params.population {
                children.push(c2);
            }
        }
        next_fit.extend(eval.batch(&children)?);
        next.extend(children);
        pop = next;
        fit = next_fit;
        history.push(fit[ranked(&fit)[0]]);
    }

    let best = ranked(&fit)[0];
    Ok(GAResult {
        best_config: problem.expand(&pop[best])?,
        best_genes: pop[best].clone(),
        best_fitness: fit[best],
        history,
        evaluations: eval.evaluations,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExhaustiveResult {
    pub best_config: ConfigMatrix,
    pub best_genes: Vec<u8>,
    pub best_fitness: f64,
    pub evaluations: usize,
}

/// Evaluates every group-state assignment; ties go to the lexicographically smallest chromosome.
pub fn exhaustive_search<T: Real>(problem: &FitnessProblem<T>) -> Result<ExhaustiveResult, OptimizerError> {
    let (s, g) = (problem.n_states(), problem.n_genes());
    let total = problem
        .search_space()
        .filter(|&t| t <= EXHAUSTIVE_LIMIT)
        .ok_or(OptimizerError::SearchSpaceTooLarge { states: s, genes: g })?;
    let decode = |mut idx: u64| {
        let mut genes = vec![0u8; g];
        for k in (0..g).rev() {
            genes[k] = (idx % s as u64) as u8;
            idx /= s as u64;
        }
        genes
    };
    let fits: Vec<f64> = (0..total)
        .into_par_iter()
        .map(|i| problem.fitness_of_genes(&decode(i)).map(|f| f.to_f64_lossy()))
        .collect::<Result<_, _>>()?;
    let mut best = 0usize;
    for (i, f) in fits.iter().enumerate() {
        if better(*f, fits[best]) {
            best = i;
        }
    }
    let genes = decode(best as u64);
    Ok(ExhaustiveResult {
        best_config: problem.expand(&genes)?,
        best_genes: genes,
        best_fitness: fits[best],
        evaluations: fits.len(),
    })
}
