//! Step-phase hierarchy: the binary mapping matrix, phase-label derivation,
//! and the differentiable step→phase transform used by the dependency loss.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{AutodiffError, Graph, Matrix, Tensor};

#[derive(Debug, Error)]
pub enum OntologyError {
    #[error("invalid ontology: {}", violations_text(.0))]
    Invalid(Vec<Violation>),
    #[error("step label {0} out of range for {1} steps")]
    StepOutOfRange(usize, usize),
    #[error("duplicate step/phase pair ({0}, {1})")]
    DuplicatePair(usize, usize),
    #[error("pair index out of range: step {step} (S={steps}), phase {phase} (P={phases})")]
    PairOutOfRange {
        step: usize,
        steps: usize,
        phase: usize,
        phases: usize,
    },
    #[error("failed to read ontology file: {0}")]
    Io(#[from] std::io::Error),
    #[error("failed to parse ontology JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
}

/// A single invariant violation found by validation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    /// Step row with no phase membership.
    UnmappedStep(usize),
    /// Phase column with no steps.
    EmptyPhase(usize),
    /// Name lists disagree with the matrix shape.
    ShapeMismatch { step_names: usize, phase_names: usize, rows: usize, cols: usize },
    /// More phases than steps, or an empty hierarchy.
    DegenerateShape { steps: usize, phases: usize },
}

fn violations_text(vs: &[Violation]) -> String {
    vs.iter()
        .map(|v| match v {
            Violation::UnmappedStep(s) => format!("step {s} unmapped"),
            Violation::EmptyPhase(p) => format!("phase {p} empty"),
            Violation::ShapeMismatch {
                step_names,
                phase_names,
                rows,
                cols,
            } => format!(
                "{step_names} step names / {phase_names} phase names vs {rows}x{cols} matrix"
            ),
            Violation::DegenerateShape { steps, phases } => {
                format!("need S >= P >= 1, got S={steps}, P={phases}")
            }
        })
        .collect::<Vec<_>>()
        .join("; ")
}

/// Step and phase vocabularies plus the binary membership matrix M, with
/// m[i][j] = 1 iff step i can occur in phase j. Immutable after construction.
#[derive(Debug, Clone)]
pub struct Ontology {
    step_names: Vec<String>,
    phase_names: Vec<String>,
    /// S×P, entries exactly 0.0 or 1.0.
    matrix: Matrix,
}

/// On-disk JSON form: names plus 0-based (step, phase) membership pairs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OntologyDoc {
    pub steps: Vec<String>,
    pub phases: Vec<String>,
    pub pairs: Vec<(usize, usize)>,
}

impl Ontology {
    /// Build and validate an ontology from names and membership pairs.
    pub fn new(
        step_names: Vec<String>,
        phase_names: Vec<String>,
        pairs: &[(usize, usize)],
    ) -> Result<Self, OntologyError> {
        let steps = step_names.len();
        let phases = phase_names.len();
        let mut matrix = Matrix::zeros((steps, phases));
        for &(s, p) in pairs {
            if s >= steps || p >= phases {
                return Err(OntologyError::PairOutOfRange {
                    step: s,
                    steps,
                    phase: p,
                    phases,
                });
            }
            if matrix[[s, p]] != 0.0 {
                return Err(OntologyError::DuplicatePair(s, p));
            }
            matrix[[s, p]] = 1.0;
        }
        let ontology = Ontology {
            step_names,
            phase_names,
            matrix,
        };
        let violations = ontology.validate();
        if violations.is_empty() {
            Ok(ontology)
        } else {
            Err(OntologyError::Invalid(violations))
        }
    }

    /// Build without validation; used to probe `validate` on bad inputs.
    pub fn new_unchecked(
        step_names: Vec<String>,
        phase_names: Vec<String>,
        matrix: Matrix,
    ) -> Self {
        Ontology {
            step_names,
            phase_names,
            matrix,
        }
    }

    /// All invariant violations; empty means the ontology is well formed.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let (rows, cols) = self.matrix.dim();
        if self.step_names.len() != rows || self.phase_names.len() != cols {
            out.push(Violation::ShapeMismatch {
                step_names: self.step_names.len(),
                phase_names: self.phase_names.len(),
                rows,
                cols,
            });
        }
        if rows < cols || cols < 1 {
            out.push(Violation::DegenerateShape {
                steps: rows,
                phases: cols,
            });
        }
        for s in 0..rows {
            if self.matrix.row(s).sum() == 0.0 {
                out.push(Violation::UnmappedStep(s));
            }
        }
        for p in 0..cols {
            if self.matrix.column(p).sum() == 0.0 {
                out.push(Violation::EmptyPhase(p));
            }
        }
        out
    }

    pub fn num_steps(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn num_phases(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn step_names(&self) -> &[String] {
        &self.step_names
    }

    pub fn phase_names(&self) -> &[String] {
        &self.phase_names
    }

    pub fn step_in_phase(&self, step: usize, phase: usize) -> bool {
        self.matrix[[step, phase]] == 1.0
    }

    /// The S×P membership matrix with 0/1 entries.
    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn phases_of_step(&self, step: usize) -> Vec<usize> {
        (0..self.num_phases())
            .filter(|&p| self.matrix[[step, p]] == 1.0)
            .collect()
    }

    pub fn steps_of_phase(&self, phase: usize) -> Vec<usize> {
        (0..self.num_steps())
            .filter(|&s| self.matrix[[s, phase]] == 1.0)
            .collect()
    }

    /// A step is ambiguous when it belongs to more than one phase.
    pub fn is_ambiguous(&self, step: usize) -> bool {
        self.matrix.row(step).sum() > 1.0
    }

    /// Phase labels looked up from step labels. Unambiguous steps map
    /// directly; ambiguous steps inherit the phase of the preceding frame.
    /// When no preceding frame applies (t = 0, or the preceding phase does
    /// not contain the step), the lowest-index containing phase is used, so
    /// the output never names a phase the step cannot occur in.
    pub fn derive_phase_labels(&self, steps: &[usize]) -> Result<Vec<usize>, OntologyError> {
        let mut out = Vec::with_capacity(steps.len());
        let mut prev: Option<usize> = None;
        for &s in steps {
            if s >= self.num_steps() {
                return Err(OntologyError::StepOutOfRange(s, self.num_steps()));
            }
            let phases = self.phases_of_step(s);
            let phase = if phases.len() == 1 {
                phases[0]
            } else {
                match prev {
                    Some(p) if phases.contains(&p) => p,
                    _ => phases[0],
                }
            };
            out.push(phase);
            prev = Some(phase);
        }
        Ok(out)
    }

    /// Differentiable transform of per-frame step probabilities into phase
    /// space: out[t][j] = Σ_i m[i][j]·probs[t][i]. No renormalization.
    pub fn phase_transform(
        &self,
        graph: &mut Graph,
        step_probs: Tensor,
    ) -> Result<Tensor, OntologyError> {
        let (_, cols) = graph.shape(step_probs);
        if cols != self.num_steps() {
            return Err(OntologyError::Invalid(vec![Violation::ShapeMismatch {
                step_names: self.num_steps(),
                phase_names: self.num_phases(),
                rows: 0,
                cols,
            }]));
        }
        Ok(graph.matmul_const(step_probs, &self.matrix)?)
    }

    /// Non-graph version of the transform, for evaluation and oracles.
    pub fn phase_transform_values(&self, step_probs: &Matrix) -> Matrix {
        step_probs.dot(&self.matrix)
    }

    pub fn to_doc(&self) -> OntologyDoc {
        let mut pairs = Vec::new();
        for s in 0..self.num_steps() {
            for p in 0..self.num_phases() {
                if self.matrix[[s, p]] == 1.0 {
                    pairs.push((s, p));
                }
            }
        }
        OntologyDoc {
            steps: self.step_names.clone(),
            phases: self.phase_names.clone(),
            pairs,
        }
    }

    pub fn from_doc(doc: &OntologyDoc) -> Result<Self, OntologyError> {
        Ontology::new(doc.steps.clone(), doc.phases.clone(), &doc.pairs)
    }

    pub fn load_json(path: &Path) -> Result<Self, OntologyError> {
        let text = std::fs::read_to_string(path)?;
        let doc: OntologyDoc = serde_json::from_str(&text)?;
        Ontology::from_doc(&doc)
    }

    pub fn save_json(&self, path: &Path) -> Result<(), OntologyError> {
        let text = serde_json::to_string_pretty(&self.to_doc())?;
        std::fs::write(path, text)?;
        Ok(())
    }
}

/// The 19-step, 5-phase cataract procedure hierarchy. Idle occurs in every
/// phase; Incision and Viscodilatation occur in both Opening and
/// Implantation; every other step belongs to exactly one phase.
pub fn builtin_cataracts_ontology() -> Ontology {
    let steps = [
        "Idle",
        "Toric Marking",
        "Implant Ejection",
        "Incision",
        "Viscodilatation",
        "Capsulorhexis",
        "Hydrodissection",
        "Nucleus Breaking",
        "Phacoemulsification",
        "Vitrectomy",
        "Irrigation/Aspiration",
        "Preparing Implant",
        "Manual Aspiration",
        "Implantation",
        "Positioning",
        "OVD Aspiration",
        "Suturing",
        "Sealing Control",
        "Wound Hydration",
    ];
    let phases = ["Idle", "Opening", "Phacoemulsification", "Implantation", "Closure"];
    let pairs: &[(usize, usize)] = &[
        (0, 0),
        (0, 1),
        (0, 2),
        (0, 3),
        (0, 4),
        (1, 1),
        (2, 1),
        (3, 1),
        (3, 3),
        (4, 1),
        (4, 3),
        (5, 1),
        (6, 1),
        (7, 2),
        (8, 2),
        (9, 2),
        (10, 2),
        (11, 3),
        (12, 3),
        (13, 3),
        (14, 3),
        (15, 3),
        (16, 4),
        (17, 4),
        (18, 4),
    ];
    Ontology::new(
        steps.iter().map(|s| s.to_string()).collect(),
        phases.iter().map(|s| s.to_string()).collect(),
        pairs,
    )
    .expect("builtin cataract ontology is well formed")
}

/// Resolves an ontology reference: `builtin:cataracts` or a JSON file path.
pub fn resolve_ontology_ref(reference: &str, base_dir: &Path) -> Result<Ontology, OntologyError> {
    if reference == "builtin:cataracts" {
        return Ok(builtin_cataracts_ontology());
    }
    let path = Path::new(reference);
    let path = if path.is_absolute() {
        path.to_path_buf()
    } else {
        base_dir.join(path)
    };
    Ontology::load_json(&path)
}
