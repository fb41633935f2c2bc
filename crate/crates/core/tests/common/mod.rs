//! Synthetic relations and brute-force oracles shared by the integration
//! tests and the acceptance binary. The oracles work on the raw CSV strings,
//! never on the dataset's encoded columns.
#![allow(dead_code, clippy::neg_cmp_op_on_partial_ord, clippy::too_many_arguments)]

use std::collections::{BTreeMap, BTreeSet, HashMap};

use claim_endorse::claim::MedianReference;
use claim_endorse::engine::{CollectSink, ComboClock, JsonlSink, Record};
use claim_endorse::measures::ScoreKey;
use claim_endorse::{
    build_order, AggFn, CacheParams, Dataset, EmbeddingTable, Engine, EngineOptions, PlanContext, PrecomputeCache,
    Schema, Strategy, Task, TaskConfig, TaskSpec,
};
use claim_endorse::dataset::AttrKind;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A relation kept as strings next to its ingested form.
#[derive(Debug, Clone)]
pub struct Relation {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
    pub schema: Schema,
}

impl Relation {
    pub fn dataset(&self) -> Dataset {
        Dataset::from_records(&self.header, &self.rows, &self.schema).expect("synthetic relation ingests")
    }

    pub fn col(&self, name: &str) -> usize {
        self.header.iter().position(|h| h == name).expect("known column")
    }

    fn cell(&self, row: usize, col: usize) -> Option<&str> {
        let s = self.rows[row][col].as_str();
        if self.schema.null_tokens.iter().any(|t| t == s) {
            None
        } else {
            Some(s)
        }
    }

    fn value(&self, row: usize) -> Option<f64> {
        self.cell(row, self.col(&self.schema.aggregate)).map(|s| s.parse().unwrap())
    }
}

/// Knobs for [`random_relation`].
#[derive(Debug, Clone, Copy)]
pub struct Shape {
    pub rows: usize,
    pub split_attrs: usize,
    pub min_cardinality: usize,
    pub max_cardinality: usize,
    pub null_rate: f64,
}

/// Columns `G` (g1/g2/g3), `F` (f0/f1, never split), `Y` (aggregate) and
/// split attributes `A0..`. The first rows guarantee both claim groups under
/// the filter `F = f0`.
pub fn random_relation(rng: &mut ChaCha8Rng, shape: Shape) -> Relation {
    let mut header: Vec<String> = vec!["G".into(), "F".into(), "Y".into()];
    let names: Vec<String> = (0..shape.split_attrs).map(|i| format!("A{i}")).collect();
    header.extend(names.iter().cloned());
    let cards: Vec<usize> = (0..shape.split_attrs)
        .map(|_| rng.gen_range(shape.min_cardinality..=shape.max_cardinality))
        .collect();
    let groups = ["g1", "g2", "g3"];
    let mut rows = Vec::with_capacity(shape.rows);
    for r in 0..shape.rows {
        let g = if r < 4 { groups[r % 2] } else { groups[rng.gen_range(0..3)] };
        let f = if r < 4 || rng.gen_bool(0.6) { "f0" } else { "f1" };
        let y = if r >= 4 && rng.gen_bool(shape.null_rate) {
            String::new()
        } else {
            // Quarter steps keep sums exact and make ties likely.
            format!("{}", rng.gen_range(0..400) as f64 / 4.0)
        };
        let mut row = vec![g.to_owned(), f.to_owned(), y];
        for &card in &cards {
            if rng.gen_bool(shape.null_rate) {
                row.push(String::new());
            } else {
                row.push(format!("v{}", rng.gen_range(0..card)));
            }
        }
        rows.push(row);
    }
    let schema = Schema::new("Y", "G", names).with_kind("Y", AttrKind::NumericRaw);
    Relation { header, rows, schema }
}

/// A task over [`random_relation`] output.
pub fn random_task(rng: &mut ChaCha8Rng, function: AggFn, m: usize) -> TaskSpec {
    let mut spec = TaskSpec::new(function, "g1", "g2").with_config(TaskConfig {
        k: rng.gen_range(1..=8),
        m,
        min_group: rng.gen_range(1..=4),
        median_reference: if rng.gen_bool(0.5) {
            MedianReference::Pooled
        } else {
            MedianReference::PerGroup
        },
        ..TaskConfig::default()
    });
    if rng.gen_bool(0.3) {
        spec = spec.with_filter("F", "f0");
    }
    spec
}

/// One endorsing value assignment as computed from raw strings.
#[derive(Debug, Clone, PartialEq)]
pub struct BruteRefinement {
    pub n1: usize,
    pub n2: usize,
    pub agg1: f64,
    pub agg2: f64,
    pub covered: usize,
    pub s1: Option<f64>,
    pub s2: Option<f64>,
    /// (above1, below1, above2, below2) for median tasks.
    pub split: Option<(usize, usize, usize, usize)>,
}

pub type Pairs = Vec<(String, String)>;

fn naive_aggregate(f: AggFn, values: &[f64], rows: usize) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    match f {
        AggFn::Count => rows as f64,
        AggFn::Sum => values.iter().sum(),
        AggFn::Average => values.iter().sum::<f64>() / values.len() as f64,
        AggFn::Median => {
            let n = sorted.len();
            if n % 2 == 1 {
                sorted[n / 2]
            } else {
                (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
            }
        }
        AggFn::Min => sorted[0],
        AggFn::Max => sorted[sorted.len() - 1],
    }
}

fn naive_sd(values: &[f64]) -> Option<f64> {
    if values.len() < 2 {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    Some((values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt())
}

fn subsets(items: &[usize], size: usize) -> Vec<Vec<usize>> {
    if size == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for (i, &first) in items.iter().enumerate() {
        for mut rest in subsets(&items[i + 1..], size - 1) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

/// Every endorsing refinement of up to `m` split attributes, found by
/// filtering rows for each value tuple that occurs in the relation.
pub fn brute_force(rel: &Relation, spec: &TaskSpec) -> BTreeMap<Pairs, BruteRefinement> {
    let cfg = &spec.config;
    let f = spec.query.function;
    let n_rows = rel.rows.len();
    let g = rel.col(&rel.schema.group_by);
    let null_label = rel.schema.null_label.clone();
    let filter: Vec<(usize, String)> = spec
        .query
        .filter
        .iter()
        .map(|(a, v)| (rel.col(a), v.clone()))
        .collect();
    let passes = |row: usize| filter.iter().all(|(c, v)| rel.cell(row, *c) == Some(v.as_str()));

    let split: Vec<usize> = rel
        .schema
        .split_attributes
        .iter()
        .map(|a| rel.col(a))
        .filter(|&c| {
            let distinct: BTreeSet<Option<&str>> = (0..n_rows).map(|r| rel.cell(r, c)).collect();
            distinct.len() > 1
        })
        .collect();

    let mut out = BTreeMap::new();
    for size in 1..=cfg.m {
        for cols in subsets(&split, size) {
            let tuples: BTreeSet<Vec<Option<&str>>> = (0..n_rows)
                .map(|r| cols.iter().map(|&c| rel.cell(r, c)).collect())
                .collect();
            for tuple in tuples {
                let matching: Vec<usize> = (0..n_rows)
                    .filter(|&r| passes(r) && cols.iter().zip(&tuple).all(|(&c, v)| rel.cell(r, c) == *v))
                    .collect();
                let side = |name: &str| -> (usize, Vec<f64>) {
                    let rows: Vec<usize> = matching
                        .iter()
                        .copied()
                        .filter(|&r| rel.cell(r, g) == Some(name))
                        .collect();
                    let values: Vec<f64> = rows.iter().filter_map(|&r| rel.value(r)).collect();
                    let n = if f == AggFn::Count { rows.len() } else { values.len() };
                    (n, values)
                };
                let (n1, v1) = side(&spec.claim.g1);
                let (n2, v2) = side(&spec.claim.g2);
                if n1 < cfg.min_group || n2 < cfg.min_group || n1 == 0 || n2 == 0 {
                    continue;
                }
                let agg1 = naive_aggregate(f, &v1, n1);
                let agg2 = naive_aggregate(f, &v2, n2);
                if !(agg1 > agg2) {
                    continue;
                }
                let (s1, s2) = if f == AggFn::Average {
                    (naive_sd(&v1), naive_sd(&v2))
                } else {
                    (None, None)
                };
                let split = (f == AggFn::Median).then(|| {
                    let (r1, r2) = match cfg.median_reference {
                        MedianReference::Pooled => {
                            let pooled: Vec<f64> = v1.iter().chain(&v2).copied().collect();
                            let m = naive_aggregate(AggFn::Median, &pooled, pooled.len());
                            (m, m)
                        }
                        MedianReference::PerGroup => (agg1, agg2),
                    };
                    let a1 = v1.iter().filter(|&&x| x > r1).count();
                    let a2 = v2.iter().filter(|&&x| x > r2).count();
                    (a1, v1.len() - a1, a2, v2.len() - a2)
                });
                let pairs: Pairs = cols
                    .iter()
                    .zip(&tuple)
                    .map(|(&c, v)| (rel.header[c].clone(), v.map_or_else(|| null_label.clone(), str::to_owned)))
                    .collect();
                out.insert(
                    pairs,
                    BruteRefinement {
                        n1,
                        n2,
                        agg1,
                        agg2,
                        covered: matching.len(),
                        s1,
                        s2,
                        split,
                    },
                );
            }
        }
    }
    out
}

pub fn close(a: f64, b: f64, rel: f64) -> bool {
    a == b || (a - b).abs() <= rel * a.abs().max(b.abs())
}

/// Entropy-based mutual information between the raw value tuple of `cols`
/// and the dataset's aggregate codes.
pub fn mi_oracle(rel: &Relation, ds: &Dataset, cols: &[&str]) -> f64 {
    let target = ds.column(ds.agg_attr());
    let idx: Vec<usize> = cols.iter().map(|c| rel.col(c)).collect();
    let n = rel.rows.len() as f64;
    let mut x: HashMap<Vec<Option<&str>>, f64> = HashMap::new();
    let mut y: HashMap<u32, f64> = HashMap::new();
    let mut xy: HashMap<(Vec<Option<&str>>, u32), f64> = HashMap::new();
    for (r, &t) in target.iter().enumerate() {
        let key: Vec<Option<&str>> = idx.iter().map(|&c| rel.cell(r, c)).collect();
        *x.entry(key.clone()).or_default() += 1.0;
        *y.entry(t).or_default() += 1.0;
        *xy.entry((key, t)).or_default() += 1.0;
    }
    let entropy = |counts: Vec<f64>| -> f64 {
        let mut terms: Vec<f64> = counts.iter().map(|&c| -(c / n) * (c / n).ln()).collect();
        terms.sort_by(f64::total_cmp);
        terms.iter().sum()
    };
    entropy(x.into_values().collect()) + entropy(y.into_values().collect()) - entropy(xy.into_values().collect())
}

/// One-way ANOVA F from explicit sums of squares over non-null values.
pub fn anova_oracle(rel: &Relation, cols: &[&str]) -> f64 {
    let idx: Vec<usize> = cols.iter().map(|c| rel.col(c)).collect();
    let mut groups: BTreeMap<Vec<Option<&str>>, Vec<f64>> = BTreeMap::new();
    for r in 0..rel.rows.len() {
        if let Some(v) = rel.value(r) {
            groups
                .entry(idx.iter().map(|&c| rel.cell(r, c)).collect())
                .or_default()
                .push(v);
        }
    }
    let all: Vec<f64> = groups.values().flatten().copied().collect();
    let n = all.len();
    let theta = groups.len();
    if theta < 2 || n <= theta {
        return 0.0;
    }
    let grand = all.iter().sum::<f64>() / n as f64;
    let mut ssb = 0.0;
    let mut ssw = 0.0;
    for values in groups.values() {
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        ssb += values.len() as f64 * (mean - grand).powi(2);
        ssw += values.iter().map(|v| (v - mean).powi(2)).sum::<f64>();
    }
    let msb = ssb / (theta - 1) as f64;
    let msw = ssw / (n - theta) as f64;
    if msw == 0.0 {
        return if msb > 0.0 { f64::INFINITY } else { 0.0 };
    }
    msb / msw
}

/// Density of Student's t with `df` degrees of freedom.
pub fn t_density(x: f64, df: f64) -> f64 {
    let ln_c = libm::lgamma((df + 1.0) / 2.0) - libm::lgamma(df / 2.0) - 0.5 * (df * std::f64::consts::PI).ln();
    (ln_c - (df + 1.0) / 2.0 * (1.0 + x * x / df).ln()).exp()
}

fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let m = (a + b) / 2.0;
    let (lm, rm) = ((a + m) / 2.0, (m + b) / 2.0);
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + simpson(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
}

/// Adaptive Simpson quadrature.
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    let (fa, fb, fm) = (f(a), f(b), f((a + b) / 2.0));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson(f, a, b, fa, fm, fb, whole, tol, 50)
}

/// P(|T| <= t) by integrating the density. The substitution x = u/(1-u)
/// keeps the integrand smooth on long intervals.
pub fn t_mass_oracle(t: f64, df: f64) -> f64 {
    let t = t.abs();
    let upper = t / (1.0 + t);
    let g = |u: f64| {
        let x = u / (1.0 - u);
        t_density(x, df) / ((1.0 - u) * (1.0 - u))
    };
    // Split the range so each piece is resolved independently.
    let pieces = 64;
    let mut total = 0.0;
    for i in 0..pieces {
        let a = upper * i as f64 / pieces as f64;
        let b = upper * (i + 1) as f64 / pieces as f64;
        total += integrate(&g, a, b, 1e-15);
    }
    (2.0 * total).min(1.0)
}

/// Welch statistic straight from the definition.
pub fn welch_oracle(mean1: f64, s1: f64, n1: usize, mean2: f64, s2: f64, n2: usize) -> (f64, f64) {
    let (a, b) = (s1 * s1 / n1 as f64, s2 * s2 / n2 as f64);
    let t = (mean1 - mean2) / (a + b).sqrt();
    let df = (a + b).powi(2) / (a.powi(2) / (n1 as f64 - 1.0) + b.powi(2) / (n2 as f64 - 1.0));
    (t, df)
}

/// Yates-corrected median-test statistic and its chi-square(1) CDF via erf.
pub fn median_oracle(a1: usize, b1: usize, a2: usize, b2: usize) -> f64 {
    let table = [[a1 as f64, b1 as f64], [a2 as f64, b2 as f64]];
    let total: f64 = table.iter().flatten().sum();
    let rows = [table[0][0] + table[0][1], table[1][0] + table[1][1]];
    let cols = [table[0][0] + table[1][0], table[0][1] + table[1][1]];
    let mut x = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            let e = rows[i] * cols[j] / total;
            if e == 0.0 {
                return 0.0;
            }
            x += ((table[i][j] - e).abs() - 0.5).powi(2) / e;
        }
    }
    libm::erf((x / 2.0).sqrt())
}

/// Everything needed to run the engine over one relation.
pub struct Setup {
    pub dataset: Dataset,
    pub task: Task,
    pub cache: PrecomputeCache,
    pub embeddings: Option<EmbeddingTable>,
}

impl Setup {
    pub fn new(dataset: Dataset, spec: &TaskSpec, embeddings: Option<EmbeddingTable>) -> Self {
        let task = spec.validate(&dataset).expect("task validates");
        let cache = PrecomputeCache::build(
            &dataset,
            CacheParams {
                m: task.config.m,
                ..CacheParams::default()
            },
            embeddings.as_ref(),
        );
        Self {
            dataset,
            task,
            cache,
            embeddings,
        }
    }

    pub fn ctx(&self) -> PlanContext<'_> {
        PlanContext {
            dataset: &self.dataset,
            task: &self.task,
            cache: &self.cache,
            embeddings: self.embeddings.as_ref(),
        }
    }

    /// A complete run on the combination clock, collected in memory.
    pub fn run(&self, strategy: &Strategy, seed: u64, options: EngineOptions) -> CollectSink {
        let mut order = build_order(strategy, &self.ctx(), seed).expect("plan builds");
        let engine = Engine::new(&self.dataset, &self.task, &self.cache, self.embeddings.as_ref(), options);
        let mut sink = CollectSink::default();
        engine
            .run(order.as_mut(), &mut sink, &ComboClock::millis())
            .expect("run completes");
        sink
    }

    /// A complete run serialized through the JSONL sink and parsed back.
    pub fn run_jsonl(&self, strategy: &Strategy, seed: u64, options: EngineOptions) -> Vec<Record> {
        let mut order = build_order(strategy, &self.ctx(), seed).expect("plan builds");
        let engine = Engine::new(&self.dataset, &self.task, &self.cache, self.embeddings.as_ref(), options);
        let mut sink = JsonlSink::new(Vec::new());
        engine
            .run(order.as_mut(), &mut sink, &ComboClock::millis())
            .expect("run completes");
        let text = String::from_utf8(sink.into_inner()).unwrap();
        claim_endorse::engine::sink::read_records(&text).expect("stream parses")
    }
}

/// Per-key top-k sums after each event of a parsed stream, recomputed from
/// scratch: sort the scores seen so far and add the best `k`, clamped at 0.
pub fn replay_sums(records: &[Record], k: usize) -> Vec<BTreeMap<ScoreKey, f64>> {
    let mut seen: BTreeMap<ScoreKey, Vec<f64>> = BTreeMap::new();
    let mut out = Vec::new();
    for record in records {
        let Record::Event(e) = record else { continue };
        for key in ScoreKey::ALL {
            if let Some(s) = e.scores.get(key) {
                seen.entry(key).or_default().push(s);
            }
        }
        out.push(
            seen.iter()
                .map(|(&key, scores)| {
                    let mut sorted = scores.clone();
                    sorted.sort_by(|a, b| b.total_cmp(a));
                    (key, sorted.iter().take(k).map(|s| s.max(0.0)).sum())
                })
                .collect(),
        );
    }
    out
}

/// Embedding vectors for every label of a dataset, drawn at random.
pub fn random_embeddings(ds: &Dataset, rng: &mut ChaCha8Rng) -> EmbeddingTable {
    let dim = 8;
    let mut entries = BTreeMap::new();
    let vector = |rng: &mut ChaCha8Rng| -> Vec<f64> { (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect() };
    for a in ds.attributes() {
        entries.insert(a.label.clone(), vector(rng));
        for code in ds.attribute(a.id).present_codes(ds.column(a.id)) {
            entries.insert(format!("{} {}", a.label, a.value_label(code)), vector(rng));
        }
    }
    EmbeddingTable::new(dim, entries).unwrap()
}

/// A relation with one planted attribute `P` that drives the aggregate and
/// carries large endorsing groups, among `noise` unrelated attributes.
pub fn planted_relation(rows: usize, noise: usize, seed: u64) -> Relation {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut header: Vec<String> = vec!["G".into(), "Y".into(), "P".into()];
    let names: Vec<String> = (0..noise).map(|i| format!("N{i}")).collect();
    header.extend(names.iter().cloned());
    let cards: Vec<usize> = (0..noise).map(|_| rng.gen_range(2..=4)).collect();
    let mut rows_out = Vec::with_capacity(rows);
    for _ in 0..rows {
        let g = ["g1", "g2", "g3"][rng.gen_range(0..3)];
        let p = rng.gen_range(0..10usize);
        let lift = if g == "g1" { 8.0 } else { 0.0 };
        let y = 10.0 * p as f64 + lift + rng.gen_range(-2.0..2.0);
        let mut row = vec![g.to_owned(), format!("{y:.3}"), format!("p{p}")];
        for &card in &cards {
            row.push(format!("x{}", rng.gen_range(0..card)));
        }
        rows_out.push(row);
    }
    let mut split = vec!["P".to_owned()];
    split.extend(names);
    let schema = Schema::new("Y", "G", split).with_kind("Y", AttrKind::NumericRaw);
    Relation {
        header,
        rows: rows_out,
        schema,
    }
}

/// A relation of `rows` rows and `attrs` split attributes with 8 to 16
/// values each, for timing the two kernel paths.
pub fn wide_relation(rows: usize, attrs: usize, seed: u64) -> Relation {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut header: Vec<String> = vec!["G".into(), "Y".into()];
    let names: Vec<String> = (0..attrs).map(|i| format!("A{i}")).collect();
    header.extend(names.iter().cloned());
    let cards: Vec<usize> = (0..attrs).map(|_| rng.gen_range(8..=16)).collect();
    let mut out = Vec::with_capacity(rows);
    for _ in 0..rows {
        let g = *["g1", "g2"].choose(&mut rng).unwrap();
        let mut row = vec![g.to_owned(), format!("{}", rng.gen_range(0..1000))];
        for &card in &cards {
            row.push(format!("v{}", rng.gen_range(0..card)));
        }
        out.push(row);
    }
    let schema = Schema::new("Y", "G", names).with_kind("Y", AttrKind::NumericRaw);
    Relation {
        header,
        rows: out,
        schema,
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Adds `by` to every non-null aggregate value of group `group`.
pub fn lift_group(rel: &mut Relation, group: &str, by: f64) {
    let (g, y) = (rel.col(&rel.schema.group_by), rel.col(&rel.schema.aggregate));
    for row in &mut rel.rows {
        if row[g] == group && !row[y].is_empty() {
            let v: f64 = row[y].parse().unwrap();
            row[y] = format!("{}", v + by);
        }
    }
}
