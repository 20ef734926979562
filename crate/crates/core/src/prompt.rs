//! Prompt matrix: axis vocabularies expanded into rendered generation
//! commands.
//!
//! A prompt is `<prefix> <subject> <v1>, <v2>, <v3> --ar <W:H>`, where the
//! three comma-separated clauses follow the template's axis order (minus the
//! aspect ratio, which is always last).

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_COMMAND_PREFIX: &str = "/imagine prompt:";
pub const DEFAULT_SUBJECT_CLAUSE: &str = "three construction workers at work";
const AR_FLAG: &str = " --ar ";

/// Default vocabulary file (10 x 10 x 10 x 3 = 3000 combinations).
pub const DEFAULT_VOCABULARY_TOML: &str = include_str!("../data/default_vocabulary.toml");

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PromptError {
    #[error("axis `{0}` is missing")]
    MissingAxis(AxisName),
    #[error("axis `{0}` is given more than once")]
    DuplicateAxis(AxisName),
    #[error("axis `{0}` has no values")]
    EmptyAxis(AxisName),
    #[error("axis `{axis}` repeats value {value:?}")]
    DuplicateValue { axis: AxisName, value: String },
    #[error("axis `{axis}` value {value:?} is invalid: {reason}")]
    InvalidValue {
        axis: AxisName,
        value: String,
        reason: &'static str,
    },
    #[error("aspect ratio {0:?} does not match <positive-int>:<positive-int>")]
    InvalidAspectRatio(String),
    #[error("axis order must name each axis exactly once, got {0:?}")]
    InvalidAxisOrder(Vec<AxisName>),
    #[error("unknown axis name {0:?}")]
    UnknownAxis(String),
    #[error("sample of {requested} requested but only {available} combinations exist")]
    SampleRange { requested: usize, available: usize },
    #[error("sample size must be at least 1")]
    EmptySample,
    #[error("invalid vocabulary config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AxisName {
    Location,
    WeatherLighting,
    CameraFilm,
    AspectRatio,
}

impl AxisName {
    pub const ALL: [AxisName; 4] = [
        AxisName::Location,
        AxisName::WeatherLighting,
        AxisName::CameraFilm,
        AxisName::AspectRatio,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AxisName::Location => "location",
            AxisName::WeatherLighting => "weather_lighting",
            AxisName::CameraFilm => "camera_film",
            AxisName::AspectRatio => "aspect_ratio",
        }
    }
}

impl fmt::Display for AxisName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AxisName {
    type Err = PromptError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AxisName::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| PromptError::UnknownAxis(s.to_string()))
    }
}

fn check_aspect_ratio(value: &str) -> Result<(), PromptError> {
    let bad = || PromptError::InvalidAspectRatio(value.to_string());
    let (w, h) = value.split_once(':').ok_or_else(bad)?;
    for part in [w, h] {
        if part.is_empty() || !part.bytes().all(|b| b.is_ascii_digit()) {
            return Err(bad());
        }
        match part.parse::<u64>() {
            Ok(n) if n > 0 => {}
            _ => return Err(bad()),
        }
    }
    Ok(())
}

fn check_value(axis: AxisName, value: &str) -> Result<(), PromptError> {
    let invalid = |reason| PromptError::InvalidValue {
        axis,
        value: value.to_string(),
        reason,
    };
    if value.trim().is_empty() {
        return Err(invalid("empty after trimming"));
    }
    if value != value.trim() {
        return Err(invalid("leading or trailing whitespace"));
    }
    if value.chars().any(char::is_control) {
        return Err(invalid("contains control characters"));
    }
    if value.contains(',') {
        return Err(invalid("contains a comma"));
    }
    if value.contains(AR_FLAG.trim()) {
        return Err(invalid("contains the --ar flag"));
    }
    if axis == AxisName::AspectRatio {
        check_aspect_ratio(value)?;
    }
    Ok(())
}

/// One parameter axis and its ordered vocabulary.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParameterAxis {
    name: AxisName,
    values: Vec<String>,
}

impl ParameterAxis {
    /// Values are trimmed, then checked: non-empty, pairwise distinct, free of
    /// commas and `--ar`, and `W:H` for the aspect-ratio axis.
    pub fn new<I, S>(name: AxisName, values: I) -> Result<Self, PromptError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let values: Vec<String> = values
            .into_iter()
            .map(|v| v.as_ref().trim().to_string())
            .collect();
        if values.is_empty() {
            return Err(PromptError::EmptyAxis(name));
        }
        let mut seen = HashSet::new();
        for v in &values {
            check_value(name, v)?;
            if !seen.insert(v.as_str()) {
                return Err(PromptError::DuplicateValue {
                    axis: name,
                    value: v.clone(),
                });
            }
        }
        Ok(Self { name, values })
    }

    pub fn name(&self) -> AxisName {
        self.name
    }

    pub fn values(&self) -> &[String] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub command_prefix: String,
    pub subject_clause: String,
    pub axis_order: Vec<AxisName>,
}

impl Default for PromptTemplate {
    fn default() -> Self {
        Self {
            command_prefix: DEFAULT_COMMAND_PREFIX.to_string(),
            subject_clause: DEFAULT_SUBJECT_CLAUSE.to_string(),
            axis_order: AxisName::ALL.to_vec(),
        }
    }
}

impl PromptTemplate {
    pub fn validate(&self) -> Result<(), PromptError> {
        let unique: HashSet<_> = self.axis_order.iter().collect();
        if self.axis_order.len() != 4 || unique.len() != 4 {
            return Err(PromptError::InvalidAxisOrder(self.axis_order.clone()));
        }
        Ok(())
    }
}

/// One chosen value per axis.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AxisValues {
    pub location: String,
    pub weather_lighting: String,
    pub camera_film: String,
    pub aspect_ratio: String,
}

impl AxisValues {
    pub fn get(&self, axis: AxisName) -> &str {
        match axis {
            AxisName::Location => &self.location,
            AxisName::WeatherLighting => &self.weather_lighting,
            AxisName::CameraFilm => &self.camera_film,
            AxisName::AspectRatio => &self.aspect_ratio,
        }
    }

    fn set(&mut self, axis: AxisName, value: String) {
        match axis {
            AxisName::Location => self.location = value,
            AxisName::WeatherLighting => self.weather_lighting = value,
            AxisName::CameraFilm => self.camera_film = value,
            AxisName::AspectRatio => self.aspect_ratio = value,
        }
    }
}

/// A fully instantiated prompt.
///
/// `combination` is this prompt's position in the full cartesian product
/// (equal to `id` for a full expansion, the drawn index for a sample).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptSpec {
    pub id: u64,
    pub combination: u64,
    pub values: AxisValues,
    pub rendered: String,
}

/// Renders the exact command string for one value per axis.
pub fn render(template: &PromptTemplate, values: &AxisValues) -> Result<String, PromptError> {
    template.validate()?;
    for axis in AxisName::ALL {
        check_value(axis, values.get(axis))?;
    }
    Ok(render_unchecked(template, values))
}

fn render_unchecked(template: &PromptTemplate, values: &AxisValues) -> String {
    let clauses: Vec<&str> = template
        .axis_order
        .iter()
        .filter(|a| **a != AxisName::AspectRatio)
        .map(|a| values.get(*a))
        .collect();
    format!(
        "{} {} {}{}{}",
        template.command_prefix,
        template.subject_clause,
        clauses.join(", "),
        AR_FLAG,
        values.aspect_ratio
    )
}

/// Validated template plus axes, in template axis order.
#[derive(Debug, Clone)]
pub struct PromptMatrix {
    template: PromptTemplate,
    axes: Vec<ParameterAxis>,
}

impl PromptMatrix {
    pub fn new(template: PromptTemplate, axes: Vec<ParameterAxis>) -> Result<Self, PromptError> {
        template.validate()?;
        let mut seen = HashSet::new();
        for axis in &axes {
            if !seen.insert(axis.name) {
                return Err(PromptError::DuplicateAxis(axis.name));
            }
            if axis.is_empty() {
                return Err(PromptError::EmptyAxis(axis.name));
            }
        }
        let mut ordered = Vec::with_capacity(4);
        for name in &template.axis_order {
            let axis = axes
                .iter()
                .find(|a| a.name == *name)
                .ok_or(PromptError::MissingAxis(*name))?;
            ordered.push(axis.clone());
        }
        Ok(Self {
            template,
            axes: ordered,
        })
    }

    /// Template and vocabulary from [`DEFAULT_VOCABULARY_TOML`].
    pub fn default_vocabulary() -> Self {
        VocabularyConfig::from_toml_str(DEFAULT_VOCABULARY_TOML)
            .and_then(|c| c.into_matrix())
            .expect("bundled vocabulary is valid")
    }

    pub fn template(&self) -> &PromptTemplate {
        &self.template
    }

    pub fn axes(&self) -> &[ParameterAxis] {
        &self.axes
    }

    pub fn cardinality(&self) -> usize {
        self.axes.iter().map(ParameterAxis::len).product()
    }

    /// Decodes a product index; the first axis in template order varies
    /// slowest.
    fn combination(&self, mut index: usize) -> AxisValues {
        let mut picks = [0usize; 4];
        for (slot, axis) in self.axes.iter().enumerate().rev() {
            picks[slot] = index % axis.len();
            index /= axis.len();
        }
        let mut values = AxisValues {
            location: String::new(),
            weather_lighting: String::new(),
            camera_film: String::new(),
            aspect_ratio: String::new(),
        };
        for (axis, pick) in self.axes.iter().zip(picks) {
            values.set(axis.name, axis.values[pick].clone());
        }
        values
    }

    fn spec(&self, id: usize, combination: usize) -> PromptSpec {
        let values = self.combination(combination);
        let rendered = render_unchecked(&self.template, &values);
        PromptSpec {
            id: id as u64,
            combination: combination as u64,
            values,
            rendered,
        }
    }

    pub fn expand_full(&self) -> Vec<PromptSpec> {
        (0..self.cardinality()).map(|i| self.spec(i, i)).collect()
    }

    /// `n` distinct combinations drawn without replacement by a seeded
    /// Fisher-Yates shuffle of the product indices; ids are re-densified in
    /// draw order.
    pub fn sample(&self, n: usize, seed: u64) -> Result<Vec<PromptSpec>, PromptError> {
        let available = self.cardinality();
        if n == 0 {
            return Err(PromptError::EmptySample);
        }
        if n > available {
            return Err(PromptError::SampleRange {
                requested: n,
                available,
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut indices: Vec<usize> = (0..available).collect();
        let (drawn, _) = indices.partial_shuffle(&mut rng, n);
        Ok(drawn
            .iter()
            .enumerate()
            .map(|(id, &combination)| self.spec(id, combination))
            .collect())
    }
}

/// Full cartesian expansion; see [`PromptMatrix::expand_full`].
pub fn expand_full(
    template: &PromptTemplate,
    axes: &[ParameterAxis],
) -> Result<Vec<PromptSpec>, PromptError> {
    Ok(PromptMatrix::new(template.clone(), axes.to_vec())?.expand_full())
}

/// Seeded sample; see [`PromptMatrix::sample`].
pub fn sample(
    template: &PromptTemplate,
    axes: &[ParameterAxis],
    n: usize,
    seed: u64,
) -> Result<Vec<PromptSpec>, PromptError> {
    PromptMatrix::new(template.clone(), axes.to_vec())?.sample(n, seed)
}

/// Writes one JSON object per line.
pub fn write_ndjson<W: std::io::Write>(mut out: W, specs: &[PromptSpec]) -> std::io::Result<()> {
    for spec in specs {
        serde_json::to_writer(&mut out, spec)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn read_ndjson<R: std::io::BufRead>(input: R) -> Result<Vec<PromptSpec>, PromptError> {
    let mut specs = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line.map_err(|e| PromptError::Config(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let spec: PromptSpec = serde_json::from_str(&line)
            .map_err(|e| PromptError::Config(format!("prompt line {}: {e}", i + 1)))?;
        specs.push(spec);
    }
    Ok(specs)
}

#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct TemplateOverrides {
    pub command_prefix: Option<String>,
    pub subject_clause: Option<String>,
    pub axis_order: Option<Vec<String>>,
}

#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct AxesTable {
    pub location: Option<Vec<String>>,
    pub weather_lighting: Option<Vec<String>>,
    pub camera_film: Option<Vec<String>>,
    pub aspect_ratio: Option<Vec<String>>,
}

/// TOML vocabulary: an optional `[template]` table and an `[axes]` table
/// with one array per axis.
#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct VocabularyConfig {
    #[serde(default)]
    pub template: TemplateOverrides,
    #[serde(default)]
    pub axes: AxesTable,
}

impl VocabularyConfig {
    pub fn from_toml_str(s: &str) -> Result<Self, PromptError> {
        toml::from_str(s).map_err(|e| PromptError::Config(e.to_string()))
    }

    pub fn template(&self) -> Result<PromptTemplate, PromptError> {
        let mut template = PromptTemplate::default();
        if let Some(p) = &self.template.command_prefix {
            template.command_prefix = p.clone();
        }
        if let Some(s) = &self.template.subject_clause {
            template.subject_clause = s.clone();
        }
        if let Some(order) = &self.template.axis_order {
            template.axis_order = order
                .iter()
                .map(|s| s.parse())
                .collect::<Result<_, _>>()?;
        }
        template.validate()?;
        Ok(template)
    }

    pub fn axes(&self) -> Result<Vec<ParameterAxis>, PromptError> {
        let table = [
            (AxisName::Location, &self.axes.location),
            (AxisName::WeatherLighting, &self.axes.weather_lighting),
            (AxisName::CameraFilm, &self.axes.camera_film),
            (AxisName::AspectRatio, &self.axes.aspect_ratio),
        ];
        table
            .into_iter()
            .map(|(name, values)| {
                let values = values.as_ref().ok_or(PromptError::MissingAxis(name))?;
                ParameterAxis::new(name, values)
            })
            .collect()
    }

    pub fn into_matrix(self) -> Result<PromptMatrix, PromptError> {
        PromptMatrix::new(self.template()?, self.axes()?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn axis(name: AxisName, values: &[&str]) -> ParameterAxis {
        ParameterAxis::new(name, values).unwrap()
    }

    fn axes(sizes: [usize; 4]) -> Vec<ParameterAxis> {
        AxisName::ALL
            .iter()
            .zip(sizes)
            .map(|(name, n)| {
                let values: Vec<String> = (0..n)
                    .map(|i| match name {
                        AxisName::AspectRatio => format!("{}:9", i + 1),
                        _ => format!("{name} value {i}"),
                    })
                    .collect();
                ParameterAxis::new(*name, values).unwrap()
            })
            .collect()
    }

    #[test]
    fn renders_reference_prompt() {
        let values = AxisValues {
            location: "on a highway bridge".into(),
            weather_lighting: "at sunset".into(),
            camera_film: "shot on 35mm film".into(),
            aspect_ratio: "16:9".into(),
        };
        let out = render(&PromptTemplate::default(), &values).unwrap();
        assert_eq!(
            out,
            "/imagine prompt: three construction workers at work on a highway bridge, at sunset, shot on 35mm film --ar 16:9"
        );
        assert_eq!(out, render(&PromptTemplate::default(), &values).unwrap());
    }

    #[test]
    fn rejects_zero_aspect_ratio() {
        let values = AxisValues {
            location: "a".into(),
            weather_lighting: "b".into(),
            camera_film: "c".into(),
            aspect_ratio: "0:9".into(),
        };
        assert_eq!(
            render(&PromptTemplate::default(), &values),
            Err(PromptError::InvalidAspectRatio("0:9".into()))
        );
        for bad in ["16x9", "16:", ":9", "-1:9", "1.5:1", "16:9:1"] {
            assert!(ParameterAxis::new(AxisName::AspectRatio, [bad]).is_err(), "{bad}");
        }
    }

    #[test]
    fn rejects_separator_values() {
        assert!(matches!(
            ParameterAxis::new(AxisName::Location, ["on a bridge, at noon"]),
            Err(PromptError::InvalidValue { .. })
        ));
        assert!(matches!(
            ParameterAxis::new(AxisName::CameraFilm, ["film --ar 1:1"]),
            Err(PromptError::InvalidValue { .. })
        ));
        assert!(matches!(
            ParameterAxis::new(AxisName::CameraFilm, ["  "]),
            Err(PromptError::InvalidValue { .. })
        ));
        assert!(matches!(
            ParameterAxis::new(AxisName::Location, ["a", " a "]),
            Err(PromptError::DuplicateValue { .. })
        ));
    }

    #[test]
    fn expansion_cardinality_and_order() {
        let specs = expand_full(&PromptTemplate::default(), &axes([2, 2, 2, 1])).unwrap();
        assert_eq!(specs.len(), 8);
        assert!(specs.iter().enumerate().all(|(i, s)| s.id == i as u64));
        // last axis in template order (aspect ratio, then camera) varies fastest
        assert_eq!(specs[0].values.camera_film, "camera_film value 0");
        assert_eq!(specs[1].values.camera_film, "camera_film value 1");
        assert_eq!(specs[2].values.weather_lighting, "weather_lighting value 1");
        assert_eq!(specs[4].values.location, "location value 1");
    }

    #[test]
    fn identity_expansion() {
        let specs = expand_full(&PromptTemplate::default(), &axes([1, 1, 1, 1])).unwrap();
        assert_eq!(specs.len(), 1);
        assert_eq!(specs[0].values.location, "location value 0");
        assert_eq!(specs[0].values.aspect_ratio, "1:9");
    }

    #[test]
    fn paper_sized_vocabulary_gives_3000() {
        let specs = expand_full(&PromptTemplate::default(), &axes([10, 10, 10, 3])).unwrap();
        assert_eq!(specs.len(), 3000);
        assert_eq!(PromptMatrix::default_vocabulary().cardinality(), 3000);
    }

    #[test]
    fn missing_and_duplicate_axes() {
        let mut a = axes([1, 1, 1, 1]);
        a.pop();
        assert_eq!(
            expand_full(&PromptTemplate::default(), &a),
            Err(PromptError::MissingAxis(AxisName::AspectRatio))
        );
        let mut a = axes([1, 1, 1, 1]);
        a.push(axis(AxisName::Location, &["x"]));
        assert_eq!(
            expand_full(&PromptTemplate::default(), &a),
            Err(PromptError::DuplicateAxis(AxisName::Location))
        );
        assert_eq!(
            ParameterAxis::new::<_, &str>(AxisName::CameraFilm, []),
            Err(PromptError::EmptyAxis(AxisName::CameraFilm))
        );
    }

    #[test]
    fn sample_bounds_and_determinism() {
        let a = axes([2, 3, 2, 2]);
        let t = PromptTemplate::default();
        let full = sample(&t, &a, 24, 9).unwrap();
        let mut combos: Vec<u64> = full.iter().map(|s| s.combination).collect();
        combos.sort_unstable();
        assert_eq!(combos, (0..24).collect::<Vec<_>>());
        assert_eq!(sample(&t, &a, 5, 7).unwrap(), sample(&t, &a, 5, 7).unwrap());
        assert_ne!(sample(&t, &a, 5, 7).unwrap(), sample(&t, &a, 5, 8).unwrap());
        assert_eq!(
            sample(&t, &a, 25, 1),
            Err(PromptError::SampleRange {
                requested: 25,
                available: 24
            })
        );
        let expanded = expand_full(&t, &a).unwrap();
        for s in sample(&t, &a, 10, 3).unwrap() {
            assert_eq!(expanded[s.combination as usize].rendered, s.rendered);
        }
    }

    #[test]
    fn axis_order_changes_clause_order() {
        let template = PromptTemplate {
            axis_order: vec![
                AxisName::CameraFilm,
                AxisName::AspectRatio,
                AxisName::Location,
                AxisName::WeatherLighting,
            ],
            ..PromptTemplate::default()
        };
        let specs = expand_full(&template, &axes([1, 1, 1, 1])).unwrap();
        assert_eq!(
            specs[0].rendered,
            "/imagine prompt: three construction workers at work camera_film value 0, location value 0, weather_lighting value 0 --ar 1:9"
        );
        let bad = PromptTemplate {
            axis_order: vec![AxisName::Location; 4],
            ..PromptTemplate::default()
        };
        assert!(matches!(bad.validate(), Err(PromptError::InvalidAxisOrder(_))));
    }

    #[test]
    fn vocabulary_config_missing_axis() {
        let cfg = VocabularyConfig::from_toml_str(
            "[axes]\nlocation=[\"a\"]\nweather_lighting=[\"b\"]\ncamera_film=[\"c\"]\n",
        )
        .unwrap();
        assert_eq!(
            cfg.into_matrix().unwrap_err(),
            PromptError::MissingAxis(AxisName::AspectRatio)
        );
    }

    #[test]
    fn ndjson_round_trip() {
        let specs = PromptMatrix::default_vocabulary().sample(4, 1).unwrap();
        let mut buf = Vec::new();
        write_ndjson(&mut buf, &specs).unwrap();
        assert_eq!(buf.iter().filter(|b| **b == b'\n').count(), 4);
        assert_eq!(read_ndjson(&buf[..]).unwrap(), specs);
    }
}
