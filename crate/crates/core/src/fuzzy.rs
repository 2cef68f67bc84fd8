//! Mamdani fuzzy inference over piecewise-linear membership functions.
//!
//! Rule firing uses `min` for conjunction and implication and `max` for
//! aggregation. Aggregated output sets are kept as uniformly sampled curves
//! over the output universe and reduced to a crisp value with the center of
//! area method.

use std::collections::BTreeMap;

use serde::Deserialize;

use crate::error::{Error, Result};

/// Default number of samples used to represent an aggregated output set.
pub const DEFAULT_SAMPLES: usize = 1001;

/// A piecewise-linear membership function.
///
/// Breakpoints are nondecreasing. Coincident breakpoints produce a vertical
/// edge; the function then takes the higher value at the edge itself.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MembershipFunction {
    Triangular {
        a: f64,
        b: f64,
        c: f64,
    },
    Trapezoidal {
        a: f64,
        b: f64,
        c: f64,
        d: f64,
    },
    /// 1 up to `a`, falling linearly to 0 at `b`.
    ShoulderLeft {
        a: f64,
        b: f64,
    },
    /// 0 up to `a`, rising linearly to 1 at `b`.
    ShoulderRight {
        a: f64,
        b: f64,
    },
}

fn rise(x: f64, a: f64, b: f64) -> f64 {
    if x >= b {
        1.0
    } else if x <= a {
        0.0
    } else {
        (x - a) / (b - a)
    }
}

fn fall(x: f64, a: f64, b: f64) -> f64 {
    if x <= a {
        1.0
    } else if x >= b {
        0.0
    } else {
        (b - x) / (b - a)
    }
}

fn check_ascending(params: &[f64]) -> Result<()> {
    if params.iter().any(|p| !p.is_finite()) {
        return Err(Error::config(format!(
            "non-finite breakpoint in {params:?}"
        )));
    }
    if params.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::config(format!(
            "breakpoints not ascending: {params:?}"
        )));
    }
    Ok(())
}

impl MembershipFunction {
    pub fn triangular(a: f64, b: f64, c: f64) -> Result<Self> {
        check_ascending(&[a, b, c])?;
        Ok(Self::Triangular { a, b, c })
    }

    pub fn trapezoidal(a: f64, b: f64, c: f64, d: f64) -> Result<Self> {
        check_ascending(&[a, b, c, d])?;
        Ok(Self::Trapezoidal { a, b, c, d })
    }

    pub fn shoulder_left(a: f64, b: f64) -> Result<Self> {
        check_ascending(&[a, b])?;
        Ok(Self::ShoulderLeft { a, b })
    }

    pub fn shoulder_right(a: f64, b: f64) -> Result<Self> {
        check_ascending(&[a, b])?;
        Ok(Self::ShoulderRight { a, b })
    }

    /// Builds a function from its document form (`shape` plus `params`).
    pub fn from_shape(shape: &str, params: &[f64]) -> Result<Self> {
        let arity = |n: usize| {
            if params.len() == n {
                Ok(())
            } else {
                Err(Error::config(format!(
                    "shape `{shape}` takes {n} params, got {}",
                    params.len()
                )))
            }
        };
        match shape {
            "triangular" => {
                arity(3)?;
                Self::triangular(params[0], params[1], params[2])
            }
            "trapezoidal" => {
                arity(4)?;
                Self::trapezoidal(params[0], params[1], params[2], params[3])
            }
            "shoulder-left" => {
                arity(2)?;
                Self::shoulder_left(params[0], params[1])
            }
            "shoulder-right" => {
                arity(2)?;
                Self::shoulder_right(params[0], params[1])
            }
            other => Err(Error::config(format!("unknown shape `{other}`"))),
        }
    }

    /// Degree of membership of `x`, always in `[0, 1]`.
    pub fn degree(&self, x: f64) -> f64 {
        if x.is_nan() {
            return 0.0;
        }
        match *self {
            Self::Triangular { a, b, c } => {
                if x < a || x > c {
                    0.0
                } else if x <= b {
                    rise(x, a, b)
                } else {
                    fall(x, b, c)
                }
            }
            Self::Trapezoidal { a, b, c, d } => {
                if x < a || x > d {
                    0.0
                } else if x < b {
                    rise(x, a, b)
                } else if x <= c {
                    1.0
                } else {
                    fall(x, c, d)
                }
            }
            Self::ShoulderLeft { a, b } => fall(x, a, b),
            Self::ShoulderRight { a, b } => rise(x, a, b),
        }
    }

    pub fn breakpoints(&self) -> Vec<f64> {
        match *self {
            Self::Triangular { a, b, c } => vec![a, b, c],
            Self::Trapezoidal { a, b, c, d } => vec![a, b, c, d],
            Self::ShoulderLeft { a, b } | Self::ShoulderRight { a, b } => vec![a, b],
        }
    }
}

/// Evaluates `mf` at `x`.
pub fn membership(mf: &MembershipFunction, x: f64) -> f64 {
    mf.degree(x)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Label {
    pub name: String,
    pub mf: MembershipFunction,
}

/// Labeled fuzzy sets over a closed universe `[lo, hi]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FuzzyPartition {
    lo: f64,
    hi: f64,
    labels: Vec<Label>,
}

impl FuzzyPartition {
    pub fn new(lo: f64, hi: f64, labels: Vec<Label>) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::config(format!("bad universe [{lo}, {hi}]")));
        }
        if labels.is_empty() {
            return Err(Error::config("partition has no labels"));
        }
        for (i, l) in labels.iter().enumerate() {
            if labels[..i].iter().any(|o| o.name == l.name) {
                return Err(Error::config(format!("duplicate label `{}`", l.name)));
            }
            if l.mf.breakpoints().iter().any(|&p| p < lo || p > hi) {
                return Err(Error::config(format!(
                    "label `{}` extends outside [{lo}, {hi}]",
                    l.name
                )));
            }
        }
        Ok(Self { lo, hi, labels })
    }

    /// `names.len()` labels with peaks evenly spaced over `[lo, hi]`: shoulders
    /// at both ends and triangles in between. The result is a Ruspini
    /// partition.
    pub fn uniform(lo: f64, hi: f64, names: &[&str]) -> Result<Self> {
        if names.len() < 2 {
            return Err(Error::config("uniform partition needs at least two labels"));
        }
        let step = (hi - lo) / (names.len() - 1) as f64;
        let peak = |i: usize| {
            if i == names.len() - 1 {
                hi
            } else {
                lo + step * i as f64
            }
        };
        let labels = names
            .iter()
            .enumerate()
            .map(|(i, name)| {
                let mf = if i == 0 {
                    MembershipFunction::shoulder_left(lo, peak(1))
                } else if i == names.len() - 1 {
                    MembershipFunction::shoulder_right(peak(i - 1), hi)
                } else {
                    MembershipFunction::triangular(peak(i - 1), peak(i), peak(i + 1))
                }?;
                Ok(Label {
                    name: name.to_string(),
                    mf,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(lo, hi, labels)
    }

    pub fn universe(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn label_index(&self, name: &str) -> Option<usize> {
        self.labels.iter().position(|l| l.name == name)
    }

    fn check_in_universe(&self, x: f64) -> Result<()> {
        if x >= self.lo && x <= self.hi {
            Ok(())
        } else {
            Err(Error::OutOfRange {
                what: "fuzzy input",
                value: x,
                lo: self.lo,
                hi: self.hi,
            })
        }
    }

    /// Membership degree of `x` in every label, in partition order.
    pub fn degrees(&self, x: f64) -> Result<Vec<f64>> {
        self.check_in_universe(x)?;
        Ok(self.labels.iter().map(|l| l.mf.degree(x)).collect())
    }

    pub fn fuzzify(&self, x: f64) -> Result<Vec<(&str, f64)>> {
        self.check_in_universe(x)?;
        Ok(self
            .labels
            .iter()
            .map(|l| (l.name.as_str(), l.mf.degree(x)))
            .collect())
    }

    /// Each label's membership function sampled at `n` uniform points.
    pub fn sampled_curves(&self, n: usize) -> Vec<Vec<f64>> {
        let xs = linspace(self.lo, self.hi, n);
        self.labels
            .iter()
            .map(|l| xs.iter().map(|&x| l.mf.degree(x)).collect())
            .collect()
    }

    /// Universe endpoints, every breakpoint, and the midpoints between
    /// consecutive ones. Between two adjacent breakpoints each label is
    /// either zero or strictly positive, so these points witness every
    /// distinct zero/nonzero pattern of the labels.
    fn witness_points(&self) -> Vec<f64> {
        let mut pts: Vec<f64> = self
            .labels
            .iter()
            .flat_map(|l| l.mf.breakpoints())
            .chain([self.lo, self.hi])
            .collect();
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        let mids: Vec<f64> = pts.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        pts.extend(mids);
        pts.sort_by(f64::total_cmp);
        pts
    }
}

pub(crate) fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let last = (n - 1) as f64;
    (0..n)
        .map(|i| {
            if i + 1 == n {
                hi
            } else {
                lo + (hi - lo) * (i as f64 / last)
            }
        })
        .collect()
}

/// An output fuzzy set sampled at uniformly spaced points of its universe.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregatedFuzzySet {
    lo: f64,
    hi: f64,
    samples: Vec<f64>,
}

impl AggregatedFuzzySet {
    pub fn new(lo: f64, hi: f64, samples: Vec<f64>) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::config(format!("bad universe [{lo}, {hi}]")));
        }
        if samples.len() < 2 {
            return Err(Error::config(
                "an aggregated set needs at least two samples",
            ));
        }
        if samples.iter().any(|m| !(0.0..=1.0).contains(m)) {
            return Err(Error::config("sample outside [0, 1]"));
        }
        Ok(Self { lo, hi, samples })
    }

    /// `max` over the given labels of `partition`, each clipped at its
    /// firing strength.
    pub fn clipped(partition: &FuzzyPartition, firings: &[(usize, f64)], n: usize) -> Result<Self> {
        let curves = partition.sampled_curves(n);
        let mut samples = vec![0.0; n];
        for &(label, strength) in firings {
            let curve = curves
                .get(label)
                .ok_or_else(|| Error::config(format!("no label with index {label}")))?;
            clip_max_into(&mut samples, curve, strength.clamp(0.0, 1.0));
        }
        let (lo, hi) = partition.universe();
        Self::new(lo, hi, samples)
    }

    pub fn universe(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    /// The same curve over a universe shifted by `t`.
    pub fn translated(&self, t: f64) -> Self {
        Self {
            lo: self.lo + t,
            hi: self.hi + t,
            samples: self.samples.clone(),
        }
    }

    /// Value at fractional sample position `num / den`, linearly
    /// interpolated between neighbouring samples.
    fn at_fraction(&self, num: usize, den: usize) -> f64 {
        let scaled = num * (self.samples.len() - 1);
        let k = scaled / den;
        let rem = scaled % den;
        if rem == 0 {
            self.samples[k]
        } else {
            let f = rem as f64 / den as f64;
            self.samples[k] * (1.0 - f) + self.samples[k + 1] * f
        }
    }

    /// Membership at an arbitrary point of the universe (0 outside it).
    pub fn value_at(&self, x: f64) -> f64 {
        if !(x >= self.lo && x <= self.hi) {
            return 0.0;
        }
        let pos = (x - self.lo) / (self.hi - self.lo) * (self.samples.len() - 1) as f64;
        let k = (pos.floor() as usize).min(self.samples.len() - 2);
        let f = pos - k as f64;
        self.samples[k] * (1.0 - f) + self.samples[k + 1] * f
    }
}

fn clip_max_into(acc: &mut [f64], curve: &[f64], strength: f64) {
    for (a, &m) in acc.iter_mut().zip(curve) {
        let clipped = m.min(strength);
        if clipped > *a {
            *a = clipped;
        }
    }
}

/// Center-of-area defuzzification.
///
/// The set is read at `resolution` evenly spaced points of its universe and
/// the centroid `∫x·μ / ∫μ` is taken with trapezoid weights (half weight at
/// both endpoints).
pub fn defuzzify_coa(set: &AggregatedFuzzySet, resolution: usize) -> Result<f64> {
    if resolution < 3 {
        return Err(Error::config(format!("resolution {resolution} is below 3")));
    }
    let den_steps = resolution - 1;
    let mut moment = 0.0;
    let mut area = 0.0;
    for i in 0..resolution {
        let mu = set.at_fraction(i, den_steps);
        let w = if i == 0 || i == den_steps { 0.5 } else { 1.0 };
        moment += w * mu * i as f64;
        area += w * mu;
    }
    if area <= 0.0 {
        return Err(Error::DegenerateSet(String::new()));
    }
    let h = (set.hi - set.lo) / den_steps as f64;
    Ok((set.lo + h * (moment / area)).clamp(set.lo, set.hi))
}

/// An IF–THEN rule over named inputs and outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct FuzzyRule {
    pub antecedent: Vec<(String, String)>,
    pub consequent: Vec<(String, String)>,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
struct CompiledRule {
    antecedent: Vec<(usize, usize)>,
    consequent: Vec<(usize, usize)>,
    weight: f64,
}

/// Input and output partitions plus the rules linking them.
///
/// Construction validates every reference and checks that each output
/// receives at least one firing rule at every point of the input space.
#[derive(Debug, Clone, PartialEq)]
pub struct FuzzyRuleBase {
    inputs: Vec<(String, FuzzyPartition)>,
    outputs: Vec<(String, FuzzyPartition)>,
    rules: Vec<FuzzyRule>,
    compiled: Vec<CompiledRule>,
    samples: usize,
    // output index -> label index -> sampled curve
    curves: Vec<Vec<Vec<f64>>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LabelDoc {
    name: String,
    shape: String,
    params: Vec<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PartitionDoc {
    universe: [f64; 2],
    labels: Vec<LabelDoc>,
}

fn default_weight() -> f64 {
    1.0
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RuleDoc {
    #[serde(rename = "if")]
    antecedent: BTreeMap<String, String>,
    #[serde(rename = "then")]
    consequent: BTreeMap<String, String>,
    #[serde(default = "default_weight")]
    weight: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RuleBaseDoc {
    inputs: BTreeMap<String, PartitionDoc>,
    outputs: BTreeMap<String, PartitionDoc>,
    rules: Vec<RuleDoc>,
}

impl PartitionDoc {
    fn build(self) -> Result<FuzzyPartition> {
        let labels = self
            .labels
            .into_iter()
            .map(|l| {
                Ok(Label {
                    mf: MembershipFunction::from_shape(&l.shape, &l.params)
                        .map_err(|e| Error::config(format!("label `{}`: {e}", l.name)))?,
                    name: l.name,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        FuzzyPartition::new(self.universe[0], self.universe[1], labels)
    }
}

fn resolve(
    parts: &[(String, FuzzyPartition)],
    kind: &str,
    var: &str,
    label: &str,
) -> Result<(usize, usize)> {
    let v = parts
        .iter()
        .position(|(n, _)| n == var)
        .ok_or_else(|| Error::config(format!("unknown {kind} `{var}`")))?;
    let l = parts[v]
        .1
        .label_index(label)
        .ok_or_else(|| Error::config(format!("{kind} `{var}` has no label `{label}`")))?;
    Ok((v, l))
}

impl FuzzyRuleBase {
    pub fn new(
        inputs: Vec<(String, FuzzyPartition)>,
        outputs: Vec<(String, FuzzyPartition)>,
        rules: Vec<FuzzyRule>,
    ) -> Result<Self> {
        Self::with_samples(inputs, outputs, rules, DEFAULT_SAMPLES)
    }

    pub fn with_samples(
        inputs: Vec<(String, FuzzyPartition)>,
        outputs: Vec<(String, FuzzyPartition)>,
        rules: Vec<FuzzyRule>,
        samples: usize,
    ) -> Result<Self> {
        if samples < 3 {
            return Err(Error::config("sample count must be at least 3"));
        }
        if inputs.is_empty() || outputs.is_empty() {
            return Err(Error::config(
                "rule base needs at least one input and one output",
            ));
        }
        if rules.is_empty() {
            return Err(Error::config("rule base has no rules"));
        }
        let mut compiled = Vec::with_capacity(rules.len());
        for (i, r) in rules.iter().enumerate() {
            if !(r.weight > 0.0 && r.weight <= 1.0) {
                return Err(Error::config(format!(
                    "rule {i}: weight {} not in (0, 1]",
                    r.weight
                )));
            }
            if r.antecedent.is_empty() || r.consequent.is_empty() {
                return Err(Error::config(format!("rule {i}: empty if or then clause")));
            }
            let antecedent = r
                .antecedent
                .iter()
                .map(|(v, l)| resolve(&inputs, "input", v, l))
                .collect::<Result<Vec<_>>>()?;
            let consequent = r
                .consequent
                .iter()
                .map(|(v, l)| resolve(&outputs, "output", v, l))
                .collect::<Result<Vec<_>>>()?;
            compiled.push(CompiledRule {
                antecedent,
                consequent,
                weight: r.weight,
            });
        }
        let curves = outputs
            .iter()
            .map(|(_, p)| p.sampled_curves(samples))
            .collect();
        let rb = Self {
            inputs,
            outputs,
            rules,
            compiled,
            samples,
            curves,
        };
        rb.check_complete()?;
        Ok(rb)
    }

    /// Parses the JSON document form. Unknown fields are rejected.
    pub fn from_json(text: &str) -> Result<Self> {
        let doc: RuleBaseDoc =
            serde_json::from_str(text).map_err(|e| Error::config(format!("rule base: {e}")))?;
        let build = |m: BTreeMap<String, PartitionDoc>| {
            m.into_iter()
                .map(|(name, p)| {
                    let part = p
                        .build()
                        .map_err(|e| Error::config(format!("variable `{name}`: {e}")))?;
                    Ok((name, part))
                })
                .collect::<Result<Vec<_>>>()
        };
        let inputs = build(doc.inputs)?;
        let outputs = build(doc.outputs)?;
        let rules = doc
            .rules
            .into_iter()
            .map(|r| FuzzyRule {
                antecedent: r.antecedent.into_iter().collect(),
                consequent: r.consequent.into_iter().collect(),
                weight: r.weight,
            })
            .collect();
        Self::new(inputs, outputs, rules)
    }

    pub fn from_path(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn input(&self, name: &str) -> Option<&FuzzyPartition> {
        self.inputs.iter().find(|(n, _)| n == name).map(|(_, p)| p)
    }

    pub fn output(&self, name: &str) -> Option<&FuzzyPartition> {
        self.outputs.iter().find(|(n, _)| n == name).map(|(_, p)| p)
    }

    pub fn input_names(&self) -> impl Iterator<Item = &str> {
        self.inputs.iter().map(|(n, _)| n.as_str())
    }

    pub fn output_names(&self) -> impl Iterator<Item = &str> {
        self.outputs.iter().map(|(n, _)| n.as_str())
    }

    pub fn rules(&self) -> &[FuzzyRule] {
        &self.rules
    }

    pub fn sample_count(&self) -> usize {
        self.samples
    }

    fn firing_strengths(&self, degrees: &[Vec<f64>]) -> Vec<f64> {
        self.compiled
            .iter()
            .map(|r| {
                r.antecedent
                    .iter()
                    .map(|&(v, l)| degrees[v][l])
                    .fold(1.0, f64::min)
                    * r.weight
            })
            .collect()
    }

    fn check_complete(&self) -> Result<()> {
        let axes: Vec<Vec<f64>> = self
            .inputs
            .iter()
            .map(|(_, p)| p.witness_points())
            .collect();
        let mut idx = vec![0usize; axes.len()];
        loop {
            let degrees: Vec<Vec<f64>> = self
                .inputs
                .iter()
                .zip(&axes)
                .zip(&idx)
                .map(|(((_, p), pts), &i)| p.labels.iter().map(|l| l.mf.degree(pts[i])).collect())
                .collect();
            let strengths = self.firing_strengths(&degrees);
            for (o, (oname, _)) in self.outputs.iter().enumerate() {
                let covered = self
                    .compiled
                    .iter()
                    .zip(&strengths)
                    .any(|(r, &s)| s > 0.0 && r.consequent.iter().any(|&(ro, _)| ro == o));
                if !covered {
                    let at: Vec<String> = self
                        .inputs
                        .iter()
                        .zip(&axes)
                        .zip(&idx)
                        .map(|(((n, _), pts), &i)| format!("{n}={}", pts[i]))
                        .collect();
                    return Err(Error::config(format!(
                        "incomplete rule base: no rule for `{oname}` fires at {}",
                        at.join(", ")
                    )));
                }
            }
            // odometer over the witness grid
            let mut k = 0;
            loop {
                if k == idx.len() {
                    return Ok(());
                }
                idx[k] += 1;
                if idx[k] < axes[k].len() {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
        }
    }

    /// Runs inference with inputs given in declaration order.
    pub fn infer_ordered(&self, values: &[f64]) -> Result<Vec<AggregatedFuzzySet>> {
        if values.len() != self.inputs.len() {
            return Err(Error::config(format!(
                "expected {} inputs, got {}",
                self.inputs.len(),
                values.len()
            )));
        }
        let degrees = self
            .inputs
            .iter()
            .zip(values)
            .map(|((_, p), &x)| p.degrees(x))
            .collect::<Result<Vec<_>>>()?;
        let strengths = self.firing_strengths(&degrees);
        let mut acc = vec![vec![0.0; self.samples]; self.outputs.len()];
        for (r, &s) in self.compiled.iter().zip(&strengths) {
            if s <= 0.0 {
                continue;
            }
            for &(o, l) in &r.consequent {
                clip_max_into(&mut acc[o], &self.curves[o][l], s);
            }
        }
        Ok(self
            .outputs
            .iter()
            .zip(acc)
            .map(|((_, p), samples)| {
                let (lo, hi) = p.universe();
                AggregatedFuzzySet { lo, hi, samples }
            })
            .collect())
    }

    /// Runs inference and returns one aggregated set per output.
    pub fn infer(
        &self,
        inputs: &BTreeMap<String, f64>,
    ) -> Result<BTreeMap<String, AggregatedFuzzySet>> {
        if let Some(extra) = inputs.keys().find(|k| self.input(k).is_none()) {
            return Err(Error::config(format!("unknown input `{extra}`")));
        }
        let values = self
            .inputs
            .iter()
            .map(|(n, _)| {
                inputs
                    .get(n)
                    .copied()
                    .ok_or_else(|| Error::config(format!("missing input `{n}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        let sets = self.infer_ordered(&values)?;
        Ok(self
            .outputs
            .iter()
            .map(|(n, _)| n.clone())
            .zip(sets)
            .collect())
    }

    /// Inference followed by center-of-area defuzzification of every output,
    /// in declaration order.
    pub fn evaluate(&self, values: &[f64], resolution: usize) -> Result<Vec<f64>> {
        self.infer_ordered(values)?
            .iter()
            .zip(&self.outputs)
            .map(|(set, (name, _))| {
                defuzzify_coa(set, resolution).map_err(|e| match e {
                    Error::DegenerateSet(_) => Error::DegenerateSet(name.clone()),
                    e => e,
                })
            })
            .collect()
    }
}
