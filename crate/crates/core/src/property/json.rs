//! JSON property files.
//!
//! ```json
//! {
//!   "format": "art-property",
//!   "version": 1,
//!   "properties": [
//!     {
//!       "input": { "lower": [0, 0.5], "upper": [5, 2.5] },
//!       "output": { "op": "not", "arg": { "op": "atom", "a": [1, -1], "b": 0 } }
//!     }
//!   ]
//! }
//! ```
//!
//! A bare property object or a bare list of properties is accepted too.

use serde::{Deserialize, Serialize};

use crate::error::{ArtError, Result};
use crate::interval::IntervalBox;

use super::{Atom, CorrectnessProperty, OutputPredicate};

pub const PROPERTY_FORMAT: &str = "art-property";
pub const PROPERTY_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase", deny_unknown_fields)]
pub enum PredicateJson {
    Atom { a: Vec<f64>, b: f64 },
    Not { arg: Box<PredicateJson> },
    And { args: Vec<PredicateJson> },
    Or { args: Vec<PredicateJson> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PropertyJson {
    pub input: IntervalBox,
    pub output: PredicateJson,
}

#[derive(Debug, Serialize, Deserialize)]
struct PropertyFile {
    format: String,
    version: u32,
    properties: Vec<PropertyJson>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum AnyPropertyDoc {
    File(PropertyFile),
    One(PropertyJson),
    Many(Vec<PropertyJson>),
}

impl PredicateJson {
    pub fn to_predicate(&self) -> Result<OutputPredicate> {
        Ok(match self {
            Self::Atom { a, b } => OutputPredicate::Atom(Atom::le(a.clone(), *b)?),
            Self::Not { arg } => arg.to_predicate()?.negate(),
            Self::And { args } => {
                OutputPredicate::and(args.iter().map(Self::to_predicate).collect::<Result<_>>()?)?
            }
            Self::Or { args } => {
                OutputPredicate::or(args.iter().map(Self::to_predicate).collect::<Result<_>>()?)?
            }
        })
    }

    pub fn from_predicate(p: &OutputPredicate) -> Self {
        match p {
            OutputPredicate::Atom(a) if a.is_strict() => {
                let n = a.negate();
                Self::Not {
                    arg: Box::new(Self::Atom {
                        a: n.coeffs().to_vec(),
                        b: n.bound(),
                    }),
                }
            }
            OutputPredicate::Atom(a) => Self::Atom {
                a: a.coeffs().to_vec(),
                b: a.bound(),
            },
            OutputPredicate::And(cs) => Self::And {
                args: cs.iter().map(Self::from_predicate).collect(),
            },
            OutputPredicate::Or(cs) => Self::Or {
                args: cs.iter().map(Self::from_predicate).collect(),
            },
        }
    }
}

impl PropertyJson {
    pub fn to_property(&self) -> Result<CorrectnessProperty> {
        let output = self.output.to_predicate()?;
        CorrectnessProperty::new(self.input.clone(), output)
    }
}

pub fn property_to_json(p: &CorrectnessProperty) -> PropertyJson {
    PropertyJson {
        input: p.input.clone(),
        output: PredicateJson::from_predicate(&p.output),
    }
}

fn json_err(text: &str, e: serde_json::Error) -> ArtError {
    let line = if e.line() == 0 {
        text.lines().count().max(1)
    } else {
        e.line()
    };
    ArtError::Parse {
        line,
        message: format!("column {}: {}", e.column(), e),
    }
}

pub fn parse_properties(text: &str) -> Result<Vec<CorrectnessProperty>> {
    // Untagged enums swallow the useful error, so try the canonical layout
    // first when the document declares a format.
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| json_err(text, e))?;
    let doc = if value.get("format").is_some() {
        let file: PropertyFile = serde_json::from_str(text).map_err(|e| json_err(text, e))?;
        if file.format != PROPERTY_FORMAT {
            return Err(ArtError::Parse {
                line: 1,
                message: format!("unknown format `{}`", file.format),
            });
        }
        if file.version != PROPERTY_VERSION {
            return Err(ArtError::Parse {
                line: 1,
                message: format!("unsupported property version {}", file.version),
            });
        }
        AnyPropertyDoc::File(file)
    } else {
        serde_json::from_value(value).map_err(|e| ArtError::Parse {
            line: 1,
            message: format!("not a property, list of properties, or property file: {e}"),
        })?
    };
    let props = match doc {
        AnyPropertyDoc::File(f) => f.properties,
        AnyPropertyDoc::One(p) => vec![p],
        AnyPropertyDoc::Many(ps) => ps,
    };
    props.iter().map(PropertyJson::to_property).collect()
}

pub fn write_properties(props: &[CorrectnessProperty]) -> String {
    let file = PropertyFile {
        format: PROPERTY_FORMAT.into(),
        version: PROPERTY_VERSION,
        properties: props.iter().map(property_to_json).collect(),
    };
    serde_json::to_string_pretty(&file).expect("property documents always serialize")
}
