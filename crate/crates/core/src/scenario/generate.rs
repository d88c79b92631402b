use std::collections::{BTreeMap, BTreeSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::focal::{kappa_generation, kappa_ratio, FocalState};
use super::location::{randomize_patch_location, LocationSchedule};
use super::losses::{const_target_node, max_target_node};
use super::{
    coalition_label, Coalition, GenerationLoss, OptimizerTrace, Parameterization, PatchSpec, ResidualRecord,
    ScenarioConfig, ScenarioInstance, ScenarioKind, ScenarioSeeds, StrengthRecord, Term, PIXEL_RANGE,
};
use crate::autodiff::{GradMode, Graph, NodeId};
use crate::error::{Error, Result};
use crate::micronet::synthetic::clipped_noise;
use crate::micronet::{build_prior_decoder, Model, PriorDecoder};
use crate::region::Region;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug)]
enum Objective {
    Max,
    Const(f64),
}

#[derive(Clone, Debug)]
struct Slot {
    name: &'static str,
    class: usize,
    objective: Objective,
    coalition: Coalition,
    constraints: Vec<Term>,
}

/// The slots and bookkeeping terms of one scenario kind.
#[derive(Clone, Debug)]
struct Recipe {
    slots: Vec<Slot>,
    residuals: Vec<(&'static str, Term, bool)>,
    strengths: Vec<(&'static str, Term)>,
}

const fn term(class: usize, with: Coalition, without: Coalition) -> Term {
    Term { class, with, without }
}

fn recipe(kind: ScenarioKind, a: usize, b: usize, config: &ScenarioConfig) -> Recipe {
    let gen = match config.generation_loss {
        GenerationLoss::Max => Objective::Max,
        GenerationLoss::Const => Objective::Const(config.confidence),
    };
    let slot = |name, class, objective, coalition, constraints| Slot {
        name,
        class,
        objective,
        coalition,
        constraints,
    };
    match kind {
        ScenarioKind::Null => Recipe {
            slots: vec![
                slot("f_a", a, gen, 0b01, vec![]),
                slot("f_null", b, gen, 0b11, vec![term(a, 0b11, 0b01), term(a, 0b10, 0)]),
            ],
            residuals: vec![("null_with_a", term(a, 0b11, 0b01), true), ("null_alone", term(a, 0b10, 0), true)],
            strengths: vec![("a_gain", term(a, 0b01, 0)), ("b_gain", term(b, 0b11, 0b01))],
        },
        ScenarioKind::ClassSingle => Recipe {
            slots: vec![slot("f_a", a, gen, 0b1, vec![term(b, 0b1, 0)])],
            residuals: vec![("b_shift", term(b, 0b1, 0), true)],
            strengths: vec![("a_gain", term(a, 0b1, 0))],
        },
        ScenarioKind::ClassDouble => Recipe {
            slots: vec![
                slot("f_a", a, gen, 0b01, vec![term(b, 0b11, 0b10)]),
                slot("f_b", b, gen, 0b10, vec![term(a, 0b11, 0b01)]),
            ],
            residuals: vec![
                ("cross_b", term(b, 0b11, 0b10), true),
                ("cross_a", term(a, 0b11, 0b01), true),
                ("b_from_f_a", term(b, 0b01, 0), false),
                ("a_from_f_b", term(a, 0b10, 0), false),
            ],
            strengths: vec![("a_gain", term(a, 0b01, 0)), ("b_gain", term(b, 0b10, 0))],
        },
        ScenarioKind::Saturation => {
            let c = Objective::Const(config.confidence);
            Recipe {
                slots: vec![
                    slot("f_a1", a, c, 0b01, vec![term(a, 0b11, 0b10)]),
                    slot("f_a2", a, c, 0b10, vec![term(a, 0b11, 0b01)]),
                ],
                residuals: vec![
                    ("drop_a1", term(a, 0b11, 0b10), true),
                    ("drop_a2", term(a, 0b11, 0b01), true),
                    ("singleton_gap", term(a, 0b01, 0b10), false),
                ],
                strengths: vec![("a1_gain", term(a, 0b01, 0)), ("a2_gain", term(a, 0b10, 0))],
            }
        }
    }
}

fn slot_names(kind: ScenarioKind) -> &'static [&'static str] {
    match kind {
        ScenarioKind::Null => &["f_a", "f_null"],
        ScenarioKind::ClassSingle => &["f_a"],
        ScenarioKind::ClassDouble => &["f_a", "f_b"],
        ScenarioKind::Saturation => &["f_a1", "f_a2"],
    }
}

/// Terms recorded for a kind, keyed by their record name; the flag marks
/// optimized residuals. Used when reloading an instance.
pub(crate) fn bookkeeping(kind: ScenarioKind, a: usize, b: usize) -> (Vec<(&'static str, Term, bool)>, Vec<(&'static str, Term)>) {
    let r = recipe(kind, a, b, &ScenarioConfig::default());
    (r.residuals, r.strengths)
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn derive_seeds(job: u64, slots: usize) -> ScenarioSeeds {
    let base = splitmix(job);
    ScenarioSeeds {
        job,
        reference: splitmix(base ^ 1),
        locations: splitmix(base ^ 2),
        patches: (0..slots as u64).map(|i| splitmix(base ^ (16 + i))).collect(),
    }
}

enum Param {
    Direct(Tensor),
    Prior(PriorDecoder),
}

struct SlotState {
    param: Param,
    velocity: Vec<Tensor>,
    region: Region,
}

impl SlotState {
    fn pixels(&self) -> Result<Tensor> {
        match &self.param {
            Param::Direct(t) => Ok(t.clone()),
            Param::Prior(d) => d.decode(),
        }
    }

    fn parameters(&self) -> Vec<&Tensor> {
        match &self.param {
            Param::Direct(t) => vec![t],
            Param::Prior(d) => d.parameters().iter().collect(),
        }
    }
}

/// One evaluation graph: fixed patches as constants, at most one trainable.
struct Built {
    graph: Graph,
    logits: BTreeMap<Coalition, NodeId>,
    trainable: Vec<NodeId>,
}

fn build(
    model: &Model,
    reference: &Tensor,
    base_logits: &Tensor,
    states: &[SlotState],
    fixed_pixels: &[Tensor],
    trainable: Option<usize>,
    coalitions: &BTreeSet<Coalition>,
) -> Result<Built> {
    let mut g = Graph::new();
    let bound = model.bind(&mut g, false);
    let x = g.constant(reference.clone());
    let mut patch_nodes = Vec::with_capacity(states.len());
    let mut params = Vec::new();
    for (i, s) in states.iter().enumerate() {
        let node = if Some(i) == trainable {
            match &s.param {
                Param::Direct(t) => {
                    let id = g.leaf(t.clone());
                    params.push(id);
                    id
                }
                Param::Prior(d) => {
                    let b = d.bind(&mut g, true);
                    params.extend_from_slice(b.parameter_ids());
                    d.apply(&mut g, &b)?
                }
            }
        } else {
            g.constant(fixed_pixels[i].clone())
        };
        patch_nodes.push(node);
    }
    let mut logits = BTreeMap::new();
    for &c in coalitions {
        let node = if c == 0 {
            g.constant(base_logits.clone())
        } else {
            let mut input = x;
            for (i, s) in states.iter().enumerate() {
                if c & (1 << i) != 0 {
                    input = g.assign(input, patch_nodes[i], s.region.origin())?;
                }
            }
            bound.apply(model, &mut g, input)?.logits
        };
        logits.insert(c, node);
    }
    Ok(Built {
        graph: g,
        logits,
        trainable: params,
    })
}

fn logit(values: &BTreeMap<Coalition, Tensor>, c: Coalition, class: usize) -> f64 {
    values[&c].data()[class]
}

fn term_gap(values: &BTreeMap<Coalition, Tensor>, t: &Term) -> f64 {
    logit(values, t.with, t.class) - logit(values, t.without, t.class)
}

fn is_converged(recipe: &Recipe, values: &BTreeMap<Coalition, Tensor>, config: &ScenarioConfig) -> bool {
    recipe
        .residuals
        .iter()
        .filter(|r| r.2)
        .all(|(_, t, _)| term_gap(values, t).abs() < config.epsilon_null)
        && recipe.strengths.iter().all(|(_, t)| term_gap(values, t) >= config.delta)
}

/// Logits of the canonical compositions of every coalition named in `terms`.
pub(crate) fn coalition_logits(
    model: &Model,
    instance: &ScenarioInstance,
    terms: impl Iterator<Item = Term>,
) -> Result<BTreeMap<Coalition, Tensor>> {
    let mut out = BTreeMap::new();
    for t in terms {
        for c in [t.with, t.without] {
            if let std::collections::btree_map::Entry::Vacant(e) = out.entry(c) {
                e.insert(model.logits(&instance.compose(c)?)?);
            }
        }
    }
    Ok(out)
}

/// Recomputes residual and strength records from the instance's patches.
pub(crate) fn records(
    model: &Model,
    instance: &ScenarioInstance,
    residuals: &[(&'static str, Term, bool)],
    strengths: &[(&'static str, Term)],
) -> Result<(BTreeMap<String, ResidualRecord>, BTreeMap<String, StrengthRecord>)> {
    let terms = residuals.iter().map(|r| r.1).chain(strengths.iter().map(|s| s.1));
    let values = coalition_logits(model, instance, terms)?;
    let res = residuals
        .iter()
        .map(|&(name, term, constrained)| {
            let value = term_gap(&values, &term).abs();
            (name.to_string(), ResidualRecord { term, value, constrained })
        })
        .collect();
    let str_ = strengths
        .iter()
        .map(|&(name, term)| (name.to_string(), StrengthRecord { term, value: term_gap(&values, &term) }))
        .collect();
    Ok((res, str_))
}

/// Runs the concurrent patch optimization for `kind`.
///
/// `b` is ignored for saturation. The result is a deterministic function of
/// `(model, kind, a, b, config, seed)`.
pub fn generate(
    model: &Model,
    kind: ScenarioKind,
    a: usize,
    b: usize,
    config: &ScenarioConfig,
    seed: u64,
) -> Result<ScenarioInstance> {
    config.validate()?;
    let k = model.classes();
    if a >= k || (kind.needs_second_class() && b >= k) {
        return Err(Error::Precondition(format!("targets ({a}, {b}) out of range for {k} classes")));
    }
    if kind.needs_second_class() && a == b {
        return Err(Error::Precondition(format!(
            "{} scenario needs distinct classes, got a = b = {a}",
            kind.as_str()
        )));
    }
    let recipe = recipe(kind, a, b, config);
    let names: Vec<&str> = slot_names(kind).to_vec();
    let n = recipe.slots.len();
    let seeds = derive_seeds(seed, n);
    let [c, h, w] = model.input_shape();
    let [ph, pw] = config.patch_size;

    let reference = clipped_noise(&mut ChaCha8Rng::seed_from_u64(seeds.reference), &[c, h, w], config.reference_noise);
    let base_logits = model.logits(&reference)?;
    let mut loc_rng = ChaCha8Rng::seed_from_u64(seeds.locations);
    let schedule = LocationSchedule {
        every: config.relocate_every,
        until: config.relocate_until,
    };
    let regions = randomize_patch_location(n, [ph, pw], [h, w], config.location_grid, &mut loc_rng)?;
    let mut states: Vec<SlotState> = Vec::with_capacity(n);
    for (i, region) in regions.into_iter().enumerate() {
        let param = match config.parameterization {
            Parameterization::Direct => Param::Direct(clipped_noise(
                &mut ChaCha8Rng::seed_from_u64(seeds.patches[i]),
                &[c, ph, pw],
                config.reference_noise,
            )),
            Parameterization::DeepPrior => {
                Param::Prior(build_prior_decoder(seeds.patches[i], [c, ph, pw], &config.prior)?)
            }
        };
        let s = SlotState {
            velocity: Vec::new(),
            param,
            region,
        };
        let velocity = s.parameters().iter().map(|p| Tensor::zeros(p.shape())).collect();
        states.push(SlotState { velocity, ..s });
    }

    let all_coalitions: BTreeSet<Coalition> = recipe
        .residuals
        .iter()
        .map(|r| r.1)
        .chain(recipe.strengths.iter().map(|s| s.1))
        .flat_map(|t| [t.with, t.without])
        .collect();
    let lr = config.learning_rate();
    let mut focal = FocalState::new(&config.focal);
    let mut trace = OptimizerTrace {
        every: config.trace_every,
        losses: names.iter().map(|n| (n.to_string(), Vec::new())).collect(),
        last_relocation: 0,
    };
    let mut steps = 0;
    let mut stopped_converged = false;

    'outer: for step in 0..config.max_steps {
        if step > 0 && schedule.due(step) {
            let regions = randomize_patch_location(n, [ph, pw], [h, w], config.location_grid, &mut loc_rng)?;
            for (s, r) in states.iter_mut().zip(regions) {
                s.region = r;
            }
            trace.last_relocation = step;
        }
        let constrained = step >= config.warmup_steps;
        for (si, slot) in recipe.slots.iter().enumerate() {
            let mut needed: BTreeSet<Coalition> = BTreeSet::from([slot.coalition]);
            if constrained {
                for t in &slot.constraints {
                    needed.insert(t.with);
                    needed.insert(t.without);
                }
            }
            if si == 0 {
                needed.extend(&all_coalitions);
            }
            let fixed: Vec<Tensor> = states
                .iter()
                .enumerate()
                .map(|(i, s)| if i == si { Ok(Tensor::scalar(0.0)) } else { s.pixels() })
                .collect::<Result<_>>()?;
            let mut built = build(model, &reference, &base_logits, &states, &fixed, Some(si), &needed)?;
            let values: BTreeMap<Coalition, Tensor> = built
                .logits
                .iter()
                .map(|(&c, &id)| Ok((c, built.graph.evaluate(id)?)))
                .collect::<Result<_>>()?;
            if si == 0 && is_converged(&recipe, &values, config) {
                stopped_converged = true;
                break 'outer;
            }

            let g = &mut built.graph;
            let z = built.logits[&slot.coalition];
            let gen_key = format!("{}:gen", slot.name);
            let kappa = kappa_generation(values[&slot.coalition].data(), slot.class);
            let w_gen = FocalState::generation_weight(&config.focal, focal.update(&gen_key, kappa));
            // The warm start is pure target maximization for every kind.
            let gen = match (constrained, slot.objective) {
                (false, _) | (true, Objective::Max) => max_target_node(g, z, slot.class)?,
                (true, Objective::Const(conf)) => const_target_node(g, z, slot.class, conf)?,
            };
            let mut loss = g.scale(gen, w_gen)?;
            if constrained {
                for t in &slot.constraints {
                    let key = format!("{}:{}:{}", slot.name, t.class, coalition_label(&names, t.with))
                        + &coalition_label(&names, t.without);
                    let kappa = kappa_ratio(
                        logit(&values, t.with, t.class),
                        logit(&values, t.without, t.class),
                        config.focal.guard,
                    );
                    let w = FocalState::constraint_weight(&config.focal, focal.update(&key, kappa));
                    let with = g.select(built.logits[&t.with], t.class)?;
                    let without = g.select(built.logits[&t.without], t.class)?;
                    let d = g.sub(with, without)?;
                    let sq = g.square(d)?;
                    let weighted = g.scale(sq, w)?;
                    loss = g.add(loss, weighted)?;
                }
            }
            let loss_value = g.value(loss)?.item();
            if step % config.trace_every == 0 {
                trace.losses.get_mut(slot.name).expect("slot series").push(loss_value);
            }
            let mut grads = g.gradient(loss, &built.trainable, GradMode::Standard)?;
            let grads: Vec<Tensor> = built.trainable.iter().map(|&id| grads.take(id).expect("requested")).collect();
            step_slot(&mut states[si], grads, lr, config.momentum)?;
        }
        focal.tick();
        steps = step + 1;
    }

    let patches = states
        .iter()
        .zip(&names)
        .map(|(s, name)| PatchSpec::new(name, s.region, config.parameterization, s.pixels()?))
        .collect::<Result<Vec<_>>>()?;
    let mut instance = ScenarioInstance {
        id: format!("{}-{seed:016x}", kind.as_str()),
        kind,
        target_a: a,
        target_b: kind.needs_second_class().then_some(b),
        confidence: recipe
            .slots
            .iter()
            .any(|s| matches!(s.objective, Objective::Const(_)))
            .then_some(config.confidence),
        reference,
        patches,
        residuals: BTreeMap::new(),
        strengths: BTreeMap::new(),
        epsilon_null: config.epsilon_null,
        delta: config.delta,
        converged: false,
        steps,
        trace,
        seeds,
    };
    let (res, str_) = records(model, &instance, &recipe.residuals, &recipe.strengths)?;
    instance.residuals = res;
    instance.strengths = str_;
    instance.converged = instance.meets_criteria();
    debug_assert!(!stopped_converged || instance.converged);
    Ok(instance)
}

impl ScenarioInstance {
    /// Constrained residuals below `epsilon_null` and every strength at least `delta`.
    pub fn meets_criteria(&self) -> bool {
        self.residuals
            .values()
            .filter(|r| r.constrained)
            .all(|r| r.value < self.epsilon_null)
            && self.strengths.values().all(|s| s.value >= self.delta)
    }
}

fn step_slot(state: &mut SlotState, grads: Vec<Tensor>, lr: f64, momentum: f64) -> Result<()> {
    let mut params: Vec<Tensor> = state.parameters().into_iter().cloned().collect();
    for ((p, v), g) in params.iter_mut().zip(&mut state.velocity).zip(&grads) {
        let pd = p.data_mut();
        let vd = v.data_mut();
        for ((x, m), &d) in pd.iter_mut().zip(vd.iter_mut()).zip(g.data()) {
            *m = momentum * *m + d;
            *x -= lr * *m;
        }
    }
    match &mut state.param {
        Param::Direct(t) => {
            let (lo, hi) = PIXEL_RANGE;
            *t = params.pop().expect("one tensor").map(|v| v.clamp(lo, hi));
        }
        Param::Prior(d) => d.set_parameters(params)?,
    }
    if state.parameters().iter().any(|p| !p.is_finite()) {
        return Err(Error::Precondition("patch parameters became non-finite".into()));
    }
    Ok(())
}

pub fn gen_null_feature(model: &Model, a: usize, b: usize, config: &ScenarioConfig, seed: u64) -> Result<ScenarioInstance> {
    generate(model, ScenarioKind::Null, a, b, config, seed)
}

pub fn gen_class_single(model: &Model, a: usize, b: usize, config: &ScenarioConfig, seed: u64) -> Result<ScenarioInstance> {
    generate(model, ScenarioKind::ClassSingle, a, b, config, seed)
}

pub fn gen_class_double(model: &Model, a: usize, b: usize, config: &ScenarioConfig, seed: u64) -> Result<ScenarioInstance> {
    generate(model, ScenarioKind::ClassDouble, a, b, config, seed)
}

pub fn gen_saturation(model: &Model, a: usize, config: &ScenarioConfig, seed: u64) -> Result<ScenarioInstance> {
    generate(model, ScenarioKind::Saturation, a, a, config, seed)
}
