//! Plain-text experiment configuration.
//!
//! Experiment files are `key = value` lines grouped under `[section]`
//! headers; arrays are comma-separated; `#` starts a comment. Tank parameter
//! files use the same line syntax without sections.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::plant::{InputSignal, TankParams};

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub key: String,
    pub value: String,
    pub line: usize,
}

/// Parsed `key = value` document, keyed by section name (`""` before any header).
#[derive(Debug, Clone, Default)]
pub struct Document {
    path: String,
    sections: BTreeMap<String, Vec<Entry>>,
    header_lines: BTreeMap<String, usize>,
}

impl Document {
    pub fn parse(path: &str, text: &str, allow_sections: bool) -> Result<Self> {
        let mut doc = Document {
            path: path.to_string(),
            ..Default::default()
        };
        let mut current = String::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            if let Some(rest) = body.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| doc.err(line, "unterminated section header"))?
                    .trim();
                if !allow_sections {
                    return Err(doc.err(line, "sections are not allowed in this file"));
                }
                if name.is_empty() {
                    return Err(doc.err(line, "empty section name"));
                }
                if doc.header_lines.insert(name.to_string(), line).is_some() {
                    return Err(doc.err(line, format!("duplicate section [{name}]")));
                }
                current = name.to_string();
                continue;
            }
            let (key, value) = body
                .split_once('=')
                .ok_or_else(|| doc.err(line, format!("expected 'key = value', found '{body}'")))?;
            let key = key.trim();
            if key.is_empty() {
                return Err(doc.err(line, "missing key before '='"));
            }
            let entries = doc.sections.entry(current.clone()).or_default();
            if let Some(prev) = entries.iter().find(|e| e.key == key) {
                let msg = format!("duplicate key '{key}' (first set on line {})", prev.line);
                return Err(doc.err(line, msg));
            }
            entries.push(Entry {
                key: key.to_string(),
                value: value.trim().to_string(),
                line,
            });
        }
        Ok(doc)
    }

    pub fn from_file(path: &Path, allow_sections: bool) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config {
            path: path.display().to_string(),
            line: 0,
            message: format!("cannot read file: {e}"),
        })?;
        Self::parse(&path.display().to_string(), &text, allow_sections)
    }

    pub fn err(&self, line: usize, message: impl Into<String>) -> Error {
        Error::Config {
            path: self.path.clone(),
            line,
            message: message.into(),
        }
    }

    /// Remove and return an entry.
    pub fn take(&mut self, section: &str, key: &str) -> Option<Entry> {
        let entries = self.sections.get_mut(section)?;
        let pos = entries.iter().position(|e| e.key == key)?;
        Some(entries.remove(pos))
    }

    fn section_line(&self, section: &str) -> usize {
        self.header_lines.get(section).copied().unwrap_or(0)
    }

    pub fn require(&mut self, section: &str, key: &str) -> Result<Entry> {
        self.take(section, key).ok_or_else(|| {
            let line = self.section_line(section);
            let place = if section.is_empty() {
                String::new()
            } else {
                format!(" in [{section}]")
            };
            self.err(line, format!("missing required key '{key}'{place}"))
        })
    }

    pub fn parse_value<T: FromStr>(&self, e: &Entry) -> Result<T> {
        e.value.parse().map_err(|_| {
            self.err(
                e.line,
                format!("cannot parse '{}' for key '{}'", e.value, e.key),
            )
        })
    }

    pub fn parse_list(&self, e: &Entry) -> Result<Vec<f64>> {
        e.value
            .split(',')
            .map(|s| {
                s.trim().parse::<f64>().map_err(|_| {
                    self.err(
                        e.line,
                        format!("cannot parse '{}' in list '{}'", s.trim(), e.key),
                    )
                })
            })
            .collect()
    }

    pub fn get<T: FromStr>(&mut self, section: &str, key: &str) -> Result<Option<(T, usize)>> {
        match self.take(section, key) {
            Some(e) => Ok(Some((self.parse_value(&e)?, e.line))),
            None => Ok(None),
        }
    }

    /// Fails on the first key nobody consumed.
    pub fn finish(self) -> Result<()> {
        let leftover = self
            .sections
            .iter()
            .flat_map(|(s, es)| es.iter().map(move |e| (s, e)))
            .min_by_key(|(_, e)| e.line);
        match leftover {
            Some((s, e)) => {
                let place = if s.is_empty() {
                    String::new()
                } else {
                    format!(" in [{s}]")
                };
                Err(self.err(e.line, format!("unknown key '{}'{place}", e.key)))
            }
            None => Ok(()),
        }
    }
}

/// Read a tank parameter file. Keys: `A_o1, A_o2, A_t1, A_t2, K_p, g_acc`.
pub fn load_tank_params(path: &Path) -> Result<TankParams> {
    let doc = Document::from_file(path, false)?;
    tank_params_from_doc(doc)
}

pub fn parse_tank_params(name: &str, text: &str) -> Result<TankParams> {
    tank_params_from_doc(Document::parse(name, text, false)?)
}

fn tank_params_from_doc(mut doc: Document) -> Result<TankParams> {
    let mut read = |key: &str| -> Result<f64> {
        let e = doc.require("", key)?;
        let v: f64 = doc.parse_value(&e)?;
        if !(v > 0.0 && v.is_finite()) {
            return Err(doc.err(e.line, format!("{key} must be positive, got {v}")));
        }
        Ok(v)
    };
    let params = TankParams {
        a_o1: read("A_o1")?,
        a_o2: read("A_o2")?,
        a_t1: read("A_t1")?,
        a_t2: read("A_t2")?,
        k_p: read("K_p")?,
        g_acc: read("g_acc")?,
    };
    doc.finish()?;
    Ok(params)
}

#[derive(Debug, Clone, PartialEq)]
pub enum PlantSpec {
    Chain,
    Tanks {
        params_path: PathBuf,
        params: TankParams,
    },
    Affine {
        weights: Vec<f64>,
        offset: f64,
        input_gain: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum QSpec {
    Identity,
    Scaled(f64),
    Diagonal(Vec<f64>),
}

impl FromStr for QSpec {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let s = s.trim();
        let (head, rest) = s.split_once(char::is_whitespace).unwrap_or((s, ""));
        match head {
            "identity" | "I" if rest.trim().is_empty() => Ok(QSpec::Identity),
            "scaled" => rest
                .trim()
                .parse()
                .map(QSpec::Scaled)
                .map_err(|_| format!("bad scale in Q spec '{s}'")),
            "diag" => rest
                .split(',')
                .map(|v| v.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map(QSpec::Diagonal)
                .map_err(|_| format!("bad diagonal in Q spec '{s}'")),
            _ => Err(format!(
                "unknown Q spec '{s}' (use identity, scaled <c> or diag <a,b,..>)"
            )),
        }
    }
}

impl QSpec {
    pub fn matrix(&self, n: usize) -> Result<nalgebra::DMatrix<f64>> {
        use nalgebra::{DMatrix, DVector};
        match self {
            QSpec::Identity => Ok(DMatrix::identity(n, n)),
            QSpec::Scaled(c) => Ok(DMatrix::identity(n, n) * *c),
            QSpec::Diagonal(d) if d.len() == n => {
                Ok(DMatrix::from_diagonal(&DVector::from_vec(d.clone())))
            }
            QSpec::Diagonal(d) => Err(Error::Argument(format!(
                "Q diagonal has {} entries, expected {n}",
                d.len()
            ))),
        }
    }
}

pub fn parse_input_signal(s: &str) -> std::result::Result<InputSignal, String> {
    let parts: Vec<&str> = s.split_whitespace().collect();
    let nums = |xs: &[&str]| -> std::result::Result<Vec<f64>, String> {
        xs.iter()
            .map(|x| {
                x.trim_end_matches(',')
                    .parse::<f64>()
                    .map_err(|_| format!("bad number '{x}' in input spec"))
            })
            .collect()
    };
    match parts.split_first() {
        Some((&"constant", rest)) if rest.len() == 1 => Ok(InputSignal::Constant(nums(rest)?[0])),
        Some((&"step", rest)) if rest.len() == 3 => {
            let v = nums(rest)?;
            Ok(InputSignal::Step {
                time: v[0],
                before: v[1],
                after: v[2],
            })
        }
        Some((&"sine", rest)) if rest.len() == 3 => {
            let v = nums(rest)?;
            Ok(InputSignal::Sine {
                amplitude: v[0],
                frequency: v[1],
                offset: v[2],
            })
        }
        _ => Err(format!(
            "unknown input spec '{s}' (use 'constant v', 'step t before after' or 'sine amp freq offset')"
        )),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LipschitzSource {
    /// Constants carried by the plant model (exact for synthetic plants).
    Plant,
    /// Sampling estimate over a box.
    Estimate {
        region: Vec<(f64, f64)>,
        samples: usize,
        input: f64,
    },
    Values(crate::plant::LipschitzConstants),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub source: String,
    pub plant: PlantSpec,
    pub input_bound: f64,
    pub n: usize,
    pub m: usize,
    pub t0: f64,
    pub eps: f64,
    pub mu_floor: f64,
    pub gain: Vec<f64>,
    pub q: QSpec,
    pub xi_hat0: Vec<f64>,
    pub nonlinearity_aware: bool,
    pub z0: Vec<f64>,
    pub t_end: f64,
    pub dt: f64,
    pub input: InputSignal,
    pub threshold: f64,
    pub lipschitz: LipschitzSource,
    pub require_certificate: bool,
    pub tau_span: f64,
    pub tau_points: usize,
    pub out_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let doc = Document::from_file(path, true)?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_document(doc, base)
    }

    /// Parse from text; relative file references resolve against `base`.
    pub fn parse(name: &str, text: &str, base: &Path) -> Result<Self> {
        Self::from_document(Document::parse(name, text, true)?, base)
    }

    fn from_document(mut doc: Document, base: &Path) -> Result<Self> {
        let source = doc.path.clone();

        // [observer] first: the gain fixes the order
        let gain_e = doc.require("observer", "gain")?;
        let gain = doc.parse_list(&gain_e)?;
        if gain.is_empty() {
            return Err(doc.err(gain_e.line, "gain must not be empty"));
        }
        let n = gain.len();
        if let Some((declared, line)) = doc.get::<usize>("observer", "n")? {
            if declared != n {
                return Err(doc.err(line, format!("n = {declared} but gain has {n} entries")));
            }
        }
        let q = match doc.take("observer", "q") {
            Some(e) => {
                let q: QSpec = e.value.parse().map_err(|m: String| doc.err(e.line, m))?;
                if let QSpec::Diagonal(d) = &q {
                    if d.len() != n {
                        return Err(doc.err(e.line, format!("Q diagonal needs {n} entries")));
                    }
                }
                q
            }
            None => QSpec::Identity,
        };
        let xi_hat0 = match doc.take("observer", "xihat0") {
            Some(e) => {
                let v = doc.parse_list(&e)?;
                if v.len() != n {
                    return Err(doc.err(e.line, format!("xihat0 needs {n} entries")));
                }
                if v[0] != 0.0 {
                    return Err(doc.err(e.line, "first component of xihat0 must be 0"));
                }
                v
            }
            None => vec![0.0; n],
        };

        let kind_e = doc.require("plant", "kind")?;
        let plant = match kind_e.value.as_str() {
            "chain" => PlantSpec::Chain,
            "tanks" => {
                if n != 2 {
                    return Err(doc.err(kind_e.line, "the tanks plant has order 2"));
                }
                let pe = doc.require("plant", "params")?;
                let params_path = base.join(&pe.value);
                if !params_path.is_file() {
                    return Err(doc.err(
                        pe.line,
                        format!("parameter file '{}' does not exist", params_path.display()),
                    ));
                }
                let params = load_tank_params(&params_path)?;
                PlantSpec::Tanks {
                    params_path,
                    params,
                }
            }
            "affine" => {
                let we = doc.require("plant", "weights")?;
                let weights = doc.parse_list(&we)?;
                if weights.len() != n {
                    return Err(doc.err(we.line, format!("weights need {n} entries")));
                }
                let offset = doc.get("plant", "offset")?.map_or(0.0, |v| v.0);
                let input_gain = doc.get("plant", "input_gain")?.map_or(0.0, |v| v.0);
                PlantSpec::Affine {
                    weights,
                    offset,
                    input_gain,
                }
            }
            other => {
                return Err(doc.err(
                    kind_e.line,
                    format!("unknown plant kind '{other}' (use chain, tanks or affine)"),
                ))
            }
        };
        let input_bound = match doc.get::<f64>("plant", "input_bound")? {
            Some((v, line)) if !(v >= 0.0) => {
                return Err(doc.err(line, "input_bound must be non-negative"))
            }
            Some((v, _)) => v,
            None => 0.0,
        };

        let m = match doc.get::<usize>("modulating", "order")? {
            Some((m, line)) if m < n => {
                return Err(doc.err(
                    line,
                    format!("modulating order {m} must be at least n = {n}"),
                ))
            }
            Some((m, _)) => m,
            None => n,
        };
        let t0 = doc.get("modulating", "t0")?.map_or(0.0, |v| v.0);
        let eps = match doc.get::<f64>("modulating", "eps")? {
            Some((e, line)) if !(e > 0.0 && e < 1.0) => {
                return Err(doc.err(line, format!("eps = {e} must lie in (0, 1)")))
            }
            Some((e, _)) => e,
            None => 0.01,
        };
        let mu_floor = doc
            .get("modulating", "mu_floor")?
            .map_or(crate::transform::DEFAULT_MU_FLOOR, |v| v.0);

        let nonlinearity_aware = doc
            .get("observer", "nonlinearity_aware")?
            .map_or(!matches!(plant, PlantSpec::Tanks { .. }), |v| v.0);

        let z0_e = doc.require("simulation", "z0")?;
        let z0 = doc.parse_list(&z0_e)?;
        if z0.len() != n {
            return Err(doc.err(z0_e.line, format!("z0 needs {n} entries")));
        }
        let t_end_e = doc.require("simulation", "t_end")?;
        let t_end: f64 = doc.parse_value(&t_end_e)?;
        if !(t_end > t0) {
            return Err(doc.err(t_end_e.line, "t_end must exceed t0"));
        }
        let dt = match doc.get::<f64>("simulation", "dt")? {
            Some((d, line)) if !(d > 0.0) => return Err(doc.err(line, "dt must be positive")),
            Some((d, _)) => d,
            None => crate::sim::DEFAULT_DT,
        };
        let input = match doc.take("simulation", "input") {
            Some(e) => parse_input_signal(&e.value).map_err(|m| doc.err(e.line, m))?,
            None => InputSignal::Constant(0.0),
        };
        let threshold = doc.get("simulation", "threshold")?.map_or(1e-3, |v| v.0);

        let lipschitz = match doc.take("certificate", "lipschitz") {
            Some(e) => match e.value.as_str() {
                "plant" => LipschitzSource::Plant,
                "estimate" => Self::estimate_source(&mut doc, n, input)?,
                "values" => {
                    let mut c = crate::plant::LipschitzConstants::default();
                    for (key, slot) in [
                        ("gamma_f", &mut c.gamma_f),
                        ("delta_f", &mut c.delta_f),
                        ("gamma_g", &mut c.gamma_g),
                        ("delta_g", &mut c.delta_g),
                    ] {
                        if let Some((v, _)) = doc.get("certificate", key)? {
                            *slot = v;
                        }
                    }
                    LipschitzSource::Values(c)
                }
                other => {
                    return Err(doc.err(
                        e.line,
                        format!(
                            "unknown lipschitz source '{other}' (use plant, estimate or values)"
                        ),
                    ))
                }
            },
            None if matches!(plant, PlantSpec::Tanks { .. }) => {
                Self::estimate_source(&mut doc, n, input)?
            }
            None => LipschitzSource::Plant,
        };
        let require_certificate = doc.get("certificate", "require")?.is_some_and(|v| v.0);
        let tau_span = doc.get("certificate", "tau_span")?.map_or(50.0, |v| v.0);
        let tau_points = doc.get("certificate", "tau_points")?.map_or(2000, |v| v.0);

        let out_dir = doc.take("output", "dir").map(|e| base.join(e.value));

        doc.finish()?;
        Ok(Self {
            source,
            plant,
            input_bound,
            n,
            m,
            t0,
            eps,
            mu_floor,
            gain,
            q,
            xi_hat0,
            nonlinearity_aware,
            z0,
            t_end,
            dt,
            input,
            threshold,
            lipschitz,
            require_certificate,
            tau_span,
            tau_points,
            out_dir,
        })
    }

    fn estimate_source(
        doc: &mut Document,
        n: usize,
        input: InputSignal,
    ) -> Result<LipschitzSource> {
        let re = doc.require("certificate", "region")?;
        let mut region = Vec::new();
        for part in re.value.split(',') {
            let (lo, hi) = part.split_once(':').ok_or_else(|| {
                doc.err(
                    re.line,
                    format!("region interval '{}' must be lo:hi", part.trim()),
                )
            })?;
            let lo: f64 = lo
                .trim()
                .parse()
                .map_err(|_| doc.err(re.line, "bad region bound"))?;
            let hi: f64 = hi
                .trim()
                .parse()
                .map_err(|_| doc.err(re.line, "bad region bound"))?;
            if !(hi > lo) {
                return Err(doc.err(re.line, "region intervals need lo < hi"));
            }
            region.push((lo, hi));
        }
        if region.len() != n {
            return Err(doc.err(re.line, format!("region needs {n} intervals")));
        }
        let samples = doc.get("certificate", "samples")?.map_or(200, |v| v.0);
        let input = doc
            .get("certificate", "lipschitz_input")?
            .map_or(input.raw(0.0), |v| v.0);
        Ok(LipschitzSource::Estimate {
            region,
            samples,
            input,
        })
    }
}
