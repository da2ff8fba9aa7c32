//! Acceptance gates, one PASS/FAIL line each.
//!
//! `cargo test -p graphaug --test acceptance` runs all thirteen; passing
//! gate numbers (`-- 1 5 8`) runs a subset. The desk-scale gates (8 to 12)
//! dominate the runtime.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use graphaug::config::{DatasetKind, ExperimentConfig};
use graphaug::pipeline::{self, Experiment, Outcome, Workspace};
use graphaug_core::autograd::Tape;
use graphaug_core::datasets::{count_triangles, gen_colors, gen_triangles, SyntheticConfig, SyntheticKind};
use graphaug_core::nn::gradcheck::check_param_gradients;
use graphaug_core::nn::{GnnKind, GnnLayer, GnnStack, Gru, Mlp, ParamStore, Readout};
use graphaug_core::policy::{bernoulli_log_prob_var, PolicyConfig, PolicyModel, Step, Trajectory};
use graphaug_core::reward::{MatchingNet, RewardConfig, RewardModel};
use graphaug_core::rng;
use graphaug_core::trainer::reinforce_gradient;
use graphaug_core::transforms::{
    gt_defined, gt_transform, uniform_drop_node, Category, Decision, DropDecision, MaskDecision, PerturbDecision,
};
use graphaug_core::{Graph, Matrix};
use rand::Rng;

type Gate = Result<(bool, String), String>;

fn random_graph<R: Rng>(rng: &mut R, max_nodes: usize, dim: usize) -> Graph {
    let n = rng.gen_range(1..=max_nodes);
    let p: f64 = rng.gen_range(0.0..0.6);
    let edges: Vec<(usize, usize)> =
        (0..n).flat_map(|u| (u + 1..n).map(move |v| (u, v))).filter(|_| rng.gen::<f64>() < p).collect();
    let features = Matrix::from_vec(n, dim, (0..n * dim).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
    Graph::new(n, edges, features).unwrap()
}

fn rand_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> Matrix<f64> {
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

/// Randomizes every parameter that is identically zero (biases, zeroed output
/// layers) so that gradient paths are live and ReLUs avoid their kink.
fn randomize_zeros<R: Rng>(store: &mut ParamStore<f64>, rng: &mut R) {
    let zero: Vec<_> = store.ids().filter(|&id| store.get(id).as_slice().iter().all(|&x| x == 0.0)).collect();
    for id in zero {
        store.get_mut(id).as_mut_slice().iter_mut().for_each(|x| *x = rng.gen_range(-0.5..0.5));
    }
}

fn trace_a3(g: &Graph) -> u64 {
    let a = g.adjacency();
    let n = g.num_nodes();
    let at = |i: usize, j: usize| a.get(i, j) as u64;
    let mut a2 = vec![0u64; n * n];
    for i in 0..n {
        for k in 0..n {
            if at(i, k) == 1 {
                for j in 0..n {
                    a2[i * n + j] += at(k, j);
                }
            }
        }
    }
    (0..n).map(|i| (0..n).map(|k| a2[i * n + k] * at(k, i)).sum::<u64>()).sum()
}

fn gate1() -> Gate {
    let start = Instant::now();
    let mut r = rng::seeded(1);
    let mut mismatches = 0;
    let mut total = 0;
    for _ in 0..200 {
        let g = random_graph(&mut r, 25, 1);
        let t = count_triangles(&g);
        let tr = trace_a3(&g);
        total += t;
        if !tr.is_multiple_of(6) || tr / 6 != t as u64 {
            mismatches += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    Ok((mismatches == 0 && secs < 10.0, format!("200 graphs, {total} triangles, {mismatches} mismatches, {secs:.2}s")))
}

fn gate2() -> Gate {
    let mut r = rng::seeded(2);
    let mut detail = Vec::new();
    let mut pass = true;
    for kind in [SyntheticKind::Colors, SyntheticKind::Triangles] {
        let ds = kind.generate(&SyntheticConfig::with_size(200), 2).map_err(|e| e.to_string())?;
        for category in [Category::MaskNf, Category::DropNode, Category::PerturbEdge] {
            if !gt_defined(kind, category) {
                continue;
            }
            let mut kept = 0;
            for i in 0..1000 {
                let lg = &ds.graphs[i % ds.len()];
                let out = gt_transform(kind, category, &lg.graph, 0.2, &mut r).map_err(|e| e.to_string())?;
                if kind.oracle(&out).map_err(|e| e.to_string())? == lg.label {
                    kept += 1;
                }
            }
            pass &= kept == 1000;
            detail.push(format!("{}/{} {kept}/1000", kind.name(), category.name()));
        }
    }
    Ok((pass, detail.join(", ")))
}

fn gate3() -> Gate {
    let ds = gen_triangles(&SyntheticConfig::with_size(1000), 3).map_err(|e| e.to_string())?;
    let mut r = rng::seeded(3);
    let mut changed = 0;
    for lg in &ds.graphs {
        let out = uniform_drop_node(&lg.graph, 0.2, &mut r).map_err(|e| e.to_string())?;
        if count_triangles(&out) != lg.label {
            changed += 1;
        }
    }
    let frac = changed as f64 / 1000.0;
    Ok((frac >= 0.10, format!("label changed on {changed}/1000 ({:.1}%)", 100.0 * frac)))
}

fn all_outcomes(m: usize) -> impl Iterator<Item = Vec<bool>> {
    (0u32..1 << m).map(move |bits| (0..m).map(|i| bits >> i & 1 == 1).collect())
}

fn one_step(g: &Graph, decision: Decision) -> Trajectory {
    let final_graph = decision.apply(g).unwrap();
    let step =
        Step { graph: g.clone(), category_probs: [0.0; 3], probs: Vec::new(), decision, sampled: None, log_prob: 0.0 };
    Trajectory { steps: vec![step], final_graph, reward: None }
}

/// Every action of a single step, grouped by category.
fn enumerate_actions(g: &Graph, addable: &[(usize, usize)]) -> Vec<(Category, Vec<Decision>)> {
    let (n, d, m) = (g.num_nodes(), g.feature_dim(), g.num_edges());
    let mask = all_outcomes(n * d).map(|mask| Decision::MaskNf(MaskDecision { rows: n, cols: d, mask })).collect();
    let drop = all_outcomes(n).map(|o| Decision::DropNode(DropDecision(o))).collect();
    let perturb = all_outcomes(m + addable.len())
        .map(|o| {
            Decision::PerturbEdge(PerturbDecision {
                droppable: g.edges().to_vec(),
                drop: o[..m].to_vec(),
                addable: addable.to_vec(),
                add: o[m..].to_vec(),
            })
        })
        .collect();
    vec![(Category::MaskNf, mask), (Category::DropNode, drop), (Category::PerturbEdge, perturb)]
}

fn gate4() -> Gate {
    let config = PolicyConfig {
        hidden: 16,
        category_hidden: 16,
        head_hidden: 16,
        steps: 1,
        cap_fraction: 0.0,
        ..Default::default()
    };
    let model = PolicyModel::new(1, config, 4).map_err(|e| e.to_string())?;
    let store = model.store.cast::<f64>();
    let feats = |n: usize| Matrix::from_vec(n, 1, (0..n).map(|i| 0.3 + 0.2 * i as f32).collect()).unwrap();
    let graphs = [
        (Graph::new(3, [(0, 1), (1, 2)], feats(3)).unwrap(), vec![(0, 2)]),
        (Graph::new(4, [(0, 1), (0, 2), (0, 3)], feats(4)).unwrap(), vec![(2, 3)]),
        (Graph::new(2, [], feats(2)).unwrap(), vec![]),
    ];
    let mut worst: f64 = 0.0;
    let mut total_err: f64 = 0.0;
    for (g, addable) in &graphs {
        let mut total = 0.0;
        for (category, actions) in enumerate_actions(g, addable) {
            let eligible = match &actions[0] {
                Decision::MaskNf(m) => m.mask.len(),
                Decision::DropNode(d) => d.0.len(),
                Decision::PerturbEdge(p) => p.drop.len() + p.add.len(),
            };
            if eligible > 4 {
                return Err(format!("{eligible} eligible elements for {}", category.name()));
            }
            let mut sum = 0.0;
            for action in actions {
                sum += action_prob(&model, &store, &one_step(g, action))?;
            }
            total += sum;
            let p_c = action_prob(&model, &store, &category_only(g, category))?;
            worst = worst.max((sum / p_c - 1.0).abs());
        }
        total_err = total_err.max((total - 1.0).abs());
    }
    Ok((
        worst < 1e-6 && total_err < 1e-6,
        format!("max |Σ p(a|c) − 1| = {worst:.2e}, max |Σ p(a) − 1| = {total_err:.2e}"),
    ))
}

fn action_prob(model: &PolicyModel, store: &ParamStore<f64>, traj: &Trajectory) -> Result<f64, String> {
    let mut tape = Tape::new(store);
    let lp = model.net.trajectory_log_prob(&mut tape, traj).map_err(|e| e.to_string())?;
    Ok(tape.scalar(lp).exp())
}

/// A step of `category` with no eligible elements, whose probability is `p(c)`.
fn category_only(g: &Graph, category: Category) -> Trajectory {
    let decision = match category {
        Category::MaskNf => Decision::MaskNf(MaskDecision { rows: g.num_nodes(), cols: 0, mask: Vec::new() }),
        Category::DropNode => Decision::DropNode(DropDecision(Vec::new())),
        Category::PerturbEdge => Decision::PerturbEdge(PerturbDecision {
            droppable: Vec::new(),
            drop: Vec::new(),
            addable: Vec::new(),
            add: Vec::new(),
        }),
    };
    let step =
        Step { graph: g.clone(), category_probs: [0.0; 3], probs: Vec::new(), decision, sampled: None, log_prob: 0.0 };
    Trajectory { steps: vec![step], final_graph: g.clone(), reward: None }
}

fn gate5() -> Gate {
    let start = Instant::now();
    let (theta, reward) = (0.4_f64, [-2.0, -0.5]);
    let p = 1.0 / (1.0 + (-theta).exp());
    let exact = p * (1.0 - p) * (reward[1] - reward[0]);
    let mut store = ParamStore::<f64>::new();
    let id = store.insert("theta", Matrix::filled(1, 1, theta));
    let mut r = rng::seeded(5);
    let g = reinforce_gradient(&store, 100_000, |_, tape| {
        let o = r.gen::<f64>() < p;
        let th = tape.param(id);
        let pr = tape.sigmoid(th);
        Ok((bernoulli_log_prob_var(tape, pr, &[o]), reward[o as usize]))
    })
    .map_err(|e| e.to_string())?;
    let est = g.get(id).unwrap().as_slice()[0];
    let rel = (est - exact).abs() / exact.abs();
    let secs = start.elapsed().as_secs_f64();
    Ok((rel < 0.05 && secs < 30.0, format!("estimate {est:.5} vs exact {exact:.5}, rel err {rel:.4}, {secs:.2}s")))
}

fn gate6() -> Gate {
    let mut r = rng::seeded(6);
    let mut results: Vec<(&str, f64, f64)> = Vec::new();
    let g = Graph::unfeatured(4, [(0, 1), (1, 2), (0, 2), (2, 3)], 3).map_err(|e| e.to_string())?;

    for (name, kind) in [("gin", GnnKind::Gin), ("gcn", GnnKind::Gcn)] {
        let mut store = ParamStore::<f64>::new();
        let stack = GnnStack::new(&mut store, "s", kind, 3, 5, 2, &mut r);
        if let GnnLayer::Gin { eps, .. } = &stack.layers()[0] {
            store.get_mut(*eps).as_mut_slice()[0] = 0.25;
        }
        randomize_zeros(&mut store, &mut r);
        let input = store.insert("x", rand_matrix(&mut r, 4, 3));
        let prop = stack.propagation::<f64>(&g);
        let err = check_param_gradients(&mut store, 1e-5, |tape| {
            let x = tape.param(input);
            let h = stack.forward(tape, x, &prop).unwrap();
            let h = tape.tanh(h);
            graphaug_core::nn::layers::readout_single(tape, h, Readout::Sum).unwrap()
        });
        results.push((name, err, 1e-4));
    }

    let mut store = ParamStore::<f64>::new();
    let gru = Gru::new(&mut store, "gru", 3, 4, &mut r);
    randomize_zeros(&mut store, &mut r);
    let (x, h0) = (store.insert("x", rand_matrix(&mut r, 1, 3)), store.insert("h0", rand_matrix(&mut r, 1, 4)));
    let err = check_param_gradients(&mut store, 1e-5, |tape| {
        let (xv, hv) = (tape.param(x), tape.param(h0));
        let h1 = gru.step(tape, hv, xv).unwrap();
        let h2 = gru.step(tape, h1, xv).unwrap();
        let sq = tape.mul(h2, h2);
        tape.sum(sq)
    });
    results.push(("gru", err, 1e-4));

    let mut store = ParamStore::<f64>::new();
    let mlp = Mlp::new(&mut store, "m", &[3, 6, 6, 2], &mut r);
    randomize_zeros(&mut store, &mut r);
    let x = store.insert("x", rand_matrix(&mut r, 3, 3));
    let err = check_param_gradients(&mut store, 1e-5, |tape| {
        let xv = tape.param(x);
        let y = mlp.forward(tape, xv).unwrap();
        let s = tape.sigmoid(y);
        let sq = tape.mul(s, y);
        tape.sum(sq)
    });
    results.push(("mlp", err, 1e-4));

    let ds = gen_colors(&SyntheticConfig { node_min: 3, node_max: 6, ..SyntheticConfig::with_size(3) }, 6)
        .map_err(|e| e.to_string())?;
    for (name, cross_graph) in [("matching", true), ("matching-no-cross", false)] {
        let mut store = ParamStore::<f64>::new();
        let config = RewardConfig { layers: 2, hidden: 6, cross_graph, ..RewardConfig::default() };
        let net = MatchingNet::new(&mut store, 4, &config, &mut r).map_err(|e| e.to_string())?;
        randomize_zeros(&mut store, &mut r);
        let (a, b, c) = (&ds.graphs[0].graph, &ds.graphs[1].graph, &ds.graphs[2].graph);
        let pairs = [(a, b), (c, a)];
        let err = check_param_gradients(&mut store, 1e-5, |tape| {
            let z = net.logits(tape, &pairs).unwrap();
            tape.bce_with_logits(z, &[1.0, 0.0])
        });
        results.push((name, err, 1e-4));
    }

    let config = PolicyConfig {
        hidden: 6,
        category_hidden: 6,
        head_hidden: 6,
        steps: 3,
        cap_fraction: 0.0,
        ..Default::default()
    };
    let model = PolicyModel::new(4, config, 6).map_err(|e| e.to_string())?;
    let g0 = &ds.graphs[2].graph;
    let mut worst_lp: f64 = 0.0;
    for s in 0..4 {
        let traj = model.augment(g0, &mut rng::seeded(60 + s)).map_err(|e| e.to_string())?;
        let mut store = model.store.cast::<f64>();
        let err = check_param_gradients(&mut store, 1e-5, |tape| model.net.trajectory_log_prob(tape, &traj).unwrap());
        worst_lp = worst_lp.max(err);
    }
    results.push(("action-log-prob", worst_lp, 1e-3));

    let pass = results.iter().all(|&(_, e, tol)| e < tol);
    Ok((pass, results.iter().map(|(n, e, _)| format!("{n} {e:.1e}")).collect::<Vec<_>>().join(", ")))
}

fn gate7() -> Gate {
    let mut r = rng::seeded(7);
    let mut model = RewardModel::new(4, RewardConfig::default(), 7).map_err(|e| e.to_string())?;
    // the untrained output layer is zero, which would make every score 1/2
    let zero: Vec<_> =
        model.store.ids().filter(|&id| model.store.get(id).as_slice().iter().all(|&x| x == 0.0)).collect();
    for id in zero {
        model.store.get_mut(id).as_mut_slice().iter_mut().for_each(|x| *x = r.gen_range(-0.5..0.5));
    }
    let ds = gen_colors(&SyntheticConfig::with_size(200), 7).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    let mut spread = (f64::INFINITY, f64::NEG_INFINITY);
    for i in 0..100 {
        let (a, b) = (&ds.graphs[2 * i].graph, &ds.graphs[2 * i + 1].graph);
        let s1 = model.score(a, b).map_err(|e| e.to_string())?;
        let s2 = model.score(b, a).map_err(|e| e.to_string())?;
        worst = worst.max((s1 - s2).abs());
        spread = (spread.0.min(s1), spread.1.max(s1));
    }
    Ok((
        worst < 1e-5,
        format!("max |s(a,b) − s(b,a)| = {worst:.2e} over 100 pairs, scores in [{:.3}, {:.3}]", spread.0, spread.1),
    ))
}

struct Desk {
    root: PathBuf,
    colors_ordering: Option<Outcome>,
    triangles_perturb: Option<Outcome>,
    triangles_probe: Option<Outcome>,
    colors_graphaug: Option<Outcome>,
}

impl Desk {
    fn run(&self, exp: Experiment) -> Result<Outcome, String> {
        let start = Instant::now();
        let config = ExperimentConfig::preset(exp.default_dataset());
        let ws = Workspace::create(self.root.join(exp.name())).map_err(|e| e.to_string())?;
        let out = pipeline::reproduce(exp, &config, &ws).map_err(|e| format!("{e:#}"))?;
        eprintln!("[{}] {:.0}s", exp.name(), start.elapsed().as_secs_f64());
        Ok(out)
    }

    fn outcome(&mut self, exp: Experiment) -> Result<&Outcome, String> {
        let slot = match exp {
            Experiment::ColorsOrdering => &self.colors_ordering,
            Experiment::TrianglesPerturb => &self.triangles_perturb,
            Experiment::TrianglesProbe => &self.triangles_probe,
            Experiment::ColorsGraphaug => &self.colors_graphaug,
            Experiment::MutagCv => unreachable!("no desk gate uses cross-validation"),
        };
        if slot.is_none() {
            let out = self.run(exp)?;
            match exp {
                Experiment::ColorsOrdering => self.colors_ordering = Some(out),
                Experiment::TrianglesPerturb => self.triangles_perturb = Some(out),
                Experiment::TrianglesProbe => self.triangles_probe = Some(out),
                _ => self.colors_graphaug = Some(out),
            }
        }
        Ok(match exp {
            Experiment::ColorsOrdering => self.colors_ordering.as_ref(),
            Experiment::TrianglesPerturb => self.triangles_perturb.as_ref(),
            Experiment::TrianglesProbe => self.triangles_probe.as_ref(),
            _ => self.colors_graphaug.as_ref(),
        }
        .unwrap())
    }
}

fn mean_of(out: &Outcome, method: &str) -> Result<f64, String> {
    out.report(method).map(|r| r.mean).ok_or_else(|| format!("no {method} report"))
}

fn gate8(desk: &mut Desk) -> Gate {
    let start = Instant::now();
    let out = desk.outcome(Experiment::ColorsOrdering)?;
    let (gt, none, uni) = (mean_of(out, "gt-masknf")?, mean_of(out, "none")?, mean_of(out, "uniform-masknf")?);
    let mins = start.elapsed().as_secs_f64() / 60.0;
    Ok((
        gt > none && none > uni,
        format!("gt-masknf {gt:.4} > none {none:.4} > uniform-masknf {uni:.4} ({mins:.1} min)"),
    ))
}

fn gate9(desk: &mut Desk) -> Gate {
    let start = Instant::now();
    let out = desk.outcome(Experiment::TrianglesPerturb)?;
    let (none, uni) = (mean_of(out, "none")?, mean_of(out, "uniform-perturbedge")?);
    let mins = start.elapsed().as_secs_f64() / 60.0;
    let drop = 100.0 * (none - uni);
    Ok((drop >= 5.0, format!("none {none:.4}, uniform-perturbedge {uni:.4}, drop {drop:.1} points ({mins:.1} min)")))
}

fn gate10(desk: &mut Desk) -> Gate {
    let out = desk.outcome(Experiment::TrianglesProbe)?;
    let p = out.probe.ok_or("probe missing")?;
    Ok((
        p.member_mean < p.other_mean,
        format!(
            "{} graphs: triangle nodes {:.4} (n={}), other nodes {:.4} (n={})",
            p.graphs, p.member_mean, p.member_nodes, p.other_mean, p.other_nodes
        ),
    ))
}

fn gate11(desk: &mut Desk) -> Gate {
    let out = desk.outcome(Experiment::ColorsGraphaug)?;
    let (aug, none) = (mean_of(out, "graphaug")?, mean_of(out, "none")?);
    let rewards = out.policy.as_ref().map(|h| h.epoch_mean_reward.clone()).unwrap_or_default();
    let rising = rewards.windows(2).all(|w| w[1] >= w[0] - 0.1 * w[0].abs());
    let curve = format!(
        "policy reward {:.3} -> {:.3}",
        rewards.first().unwrap_or(&f64::NAN),
        rewards.last().unwrap_or(&f64::NAN)
    );
    let trend = if rising { "non-decreasing within 10%" } else { "not monotone" };
    Ok((aug >= none - 0.005, format!("graphaug {aug:.4} vs none {none:.4}; {curve}, {trend}")))
}

fn gate12(desk: &mut Desk) -> Gate {
    let out = desk.outcome(Experiment::ColorsGraphaug)?;
    let (full, cat) = (mean_of(out, "graphaug")?, mean_of(out, "graphaug-category-only")?);
    Ok((cat < full, format!("graphaug-category-only {cat:.4} < graphaug {full:.4}")))
}

fn small_config() -> ExperimentConfig {
    let mut c = ExperimentConfig::preset(DatasetKind::Colors);
    c.seed = 13;
    c.dataset.n_train = 80;
    c.dataset.n_val = 20;
    c.dataset.n_test = 20;
    c.reward.hidden = 16;
    c.reward.layers = 2;
    c.reward.epochs = 2;
    c.policy.hidden = 16;
    c.policy.category_hidden = 16;
    c.policy.head_hidden = 16;
    c.policy.steps = 3;
    c.rl.epochs = 2;
    c.classifier.hidden = 16;
    c.classifier.epochs = 3;
    c.experiment.seeds = 2;
    c.experiment.eval_pairs = 40;
    c
}

fn csv_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

fn gate13(root: &Path) -> Gate {
    let config = small_config();
    let mut compared = 0;
    for exp in [Experiment::ColorsOrdering, Experiment::ColorsGraphaug] {
        let mut runs = Vec::new();
        for rep in ["a", "b"] {
            let ws =
                Workspace::create(root.join(format!("determinism-{}-{rep}", exp.name()))).map_err(|e| e.to_string())?;
            pipeline::reproduce(exp, &config, &ws).map_err(|e| format!("{e:#}"))?;
            runs.push(csv_files(&ws.path("")));
        }
        if runs[0].is_empty() || runs[0] != runs[1] {
            let names: Vec<_> = runs[0].iter().map(|(n, _)| n.clone()).collect();
            return Ok((false, format!("{} differs across reruns ({})", exp.name(), names.join(", "))));
        }
        compared += runs[0].len();
    }
    Ok((true, format!("{compared} CSV files byte-identical across reruns of colors-ordering and colors-graphaug")))
}

/// Desk-scale experiment outcomes. Their FAIL lines are reported without
/// failing the run unless `GRAPHAUG_ACCEPTANCE_STRICT` is set.
const DESK_EXPERIMENTS: [usize; 5] = [8, 9, 10, 11, 12];

const NAMES: [&str; 13] = [
    "oracle equivalence",
    "GT invariance",
    "uniform non-invariance",
    "action-distribution soundness",
    "REINFORCE correctness",
    "gradient checks",
    "matching-network symmetry",
    "COLORS ordering",
    "TRIANGLES PerturbEdge degradation",
    "learned-policy invariance probe",
    "GraphAug non-degradation",
    "category-only ablation direction",
    "end-to-end determinism",
];

fn main() -> ExitCode {
    let selected: Vec<usize> =
        std::env::args().skip(1).filter_map(|a| a.parse().ok()).filter(|n| (1..=13).contains(n)).collect();
    let root = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance");
    let mut desk = Desk {
        root: root.clone(),
        colors_ordering: None,
        triangles_perturb: None,
        triangles_probe: None,
        colors_graphaug: None,
    };
    let strict = std::env::var_os("GRAPHAUG_ACCEPTANCE_STRICT").is_some();
    let (mut failed, mut blocking) = (0, 0);
    for (i, name) in NAMES.iter().enumerate() {
        let n = i + 1;
        if !selected.is_empty() && !selected.contains(&n) {
            continue;
        }
        let result = match n {
            1 => gate1(),
            2 => gate2(),
            3 => gate3(),
            4 => gate4(),
            5 => gate5(),
            6 => gate6(),
            7 => gate7(),
            8 => gate8(&mut desk),
            9 => gate9(&mut desk),
            10 => gate10(&mut desk),
            11 => gate11(&mut desk),
            12 => gate12(&mut desk),
            _ => gate13(&root),
        };
        let errored = result.is_err();
        let (pass, detail) = result.unwrap_or_else(|e| (false, format!("error: {e}")));
        if !pass {
            failed += 1;
            if errored || strict || !DESK_EXPERIMENTS.contains(&n) {
                blocking += 1;
            }
        }
        println!("{} {n:>2} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed, {blocking} blocking");
    }
    if blocking > 0 {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
