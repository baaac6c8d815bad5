//! Compilation of query ASTs into linear step programs.
//!
//! A step program is the unit of batched execution: an ordered register
//! machine in which every step applies an optional n-ary projection and an
//! optional logic operation, writing one register. Registers are written in
//! topological order before any read, and the final step writes the target
//! register. Identical subtrees are emitted once and share a register.

use std::collections::HashMap;

use super::ast::{EntitySlot, QueryAst};
use crate::error::{NqeError, Result};
use crate::store::{EntityId, RelationId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RegisterId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LogicOp {
    And,
    Or,
    Not,
}

/// Logic half of a step. Empty `inputs` only occur in fused steps, where the
/// operand is the step's own projection result.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogicStep {
    pub op: LogicOp,
    pub inputs: Vec<RegisterId>,
}

/// Projection half of a step: an n-ary fact skeleton whose entity slots are
/// anchors, previously written registers, or the masked position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProjectionSpec {
    pub slots: Vec<SpecSlot>,
    pub relations: Vec<RelationId>,
    /// 1-based entity position of the mask.
    pub mask_pos: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpecSlot {
    Anchor(EntityId),
    Register(RegisterId),
    Mask,
}

impl ProjectionSpec {
    pub fn arity(&self) -> usize {
        self.slots.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Step {
    pub proj: Option<ProjectionSpec>,
    pub logic: Option<LogicStep>,
    pub out: RegisterId,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepProgram {
    pub steps: Vec<Step>,
    pub num_registers: usize,
    pub target: RegisterId,
}

impl StepProgram {
    /// Structural check: every step carries an operation, registers are
    /// written before read, and the last step writes the target.
    pub fn validate(&self) -> Result<()> {
        let mut written = vec![false; self.num_registers];
        let read_ok = |r: RegisterId, written: &[bool]| -> Result<()> {
            if (r.0 as usize) < written.len() && written[r.0 as usize] {
                Ok(())
            } else {
                Err(NqeError::InvalidQuery(format!(
                    "register {} read before written",
                    r.0
                )))
            }
        };
        for step in &self.steps {
            if step.proj.is_none() && step.logic.is_none() {
                return Err(NqeError::InvalidQuery(
                    "step with neither projection nor logic".into(),
                ));
            }
            if let Some(spec) = &step.proj {
                for slot in &spec.slots {
                    if let SpecSlot::Register(r) = slot {
                        read_ok(*r, &written)?;
                    }
                }
            }
            if let Some(logic) = &step.logic {
                if logic.inputs.is_empty() && step.proj.is_none() {
                    return Err(NqeError::InvalidQuery(
                        "logic step without inputs or a fused projection".into(),
                    ));
                }
                for r in &logic.inputs {
                    read_ok(*r, &written)?;
                }
            }
            if step.out.0 as usize >= self.num_registers {
                return Err(NqeError::InvalidQuery(format!(
                    "register {} out of range",
                    step.out.0
                )));
            }
            written[step.out.0 as usize] = true;
        }
        match self.steps.last() {
            Some(last) if last.out == self.target => Ok(()),
            _ => Err(NqeError::InvalidQuery(
                "last step does not write the target register".into(),
            )),
        }
    }

    /// Largest projection arity in the program, if any projection exists.
    pub fn max_arity(&self) -> Option<usize> {
        self.steps
            .iter()
            .filter_map(|s| s.proj.as_ref().map(ProjectionSpec::arity))
            .max()
    }
}

struct Compiler {
    steps: Vec<Step>,
    memo: HashMap<QueryAst, RegisterId>,
    fuse_not: bool,
}

impl Compiler {
    fn fresh(&self) -> RegisterId {
        RegisterId(self.steps.len() as u32)
    }

    fn emit(&mut self, ast: &QueryAst) -> RegisterId {
        if let Some(&reg) = self.memo.get(ast) {
            return reg;
        }
        let reg = match ast {
            QueryAst::Projection(p) => {
                let spec = self.lower_projection(p);
                let out = self.fresh();
                self.steps.push(Step {
                    proj: Some(spec),
                    logic: None,
                    out,
                });
                out
            }
            QueryAst::And(cs) | QueryAst::Or(cs) => {
                let inputs: Vec<RegisterId> = cs.iter().map(|c| self.emit(c)).collect();
                let op = if matches!(ast, QueryAst::And(_)) {
                    LogicOp::And
                } else {
                    LogicOp::Or
                };
                let out = self.fresh();
                self.steps.push(Step {
                    proj: None,
                    logic: Some(LogicStep { op, inputs }),
                    out,
                });
                out
            }
            QueryAst::Not(child) => {
                if self.fuse_not {
                    if let QueryAst::Projection(p) = child.as_ref() {
                        let spec = self.lower_projection(p);
                        let out = self.fresh();
                        self.steps.push(Step {
                            proj: Some(spec),
                            logic: Some(LogicStep {
                                op: LogicOp::Not,
                                inputs: Vec::new(),
                            }),
                            out,
                        });
                        self.memo.insert(ast.clone(), out);
                        return out;
                    }
                }
                let input = self.emit(child);
                let out = self.fresh();
                self.steps.push(Step {
                    proj: None,
                    logic: Some(LogicStep {
                        op: LogicOp::Not,
                        inputs: vec![input],
                    }),
                    out,
                });
                out
            }
        };
        self.memo.insert(ast.clone(), reg);
        reg
    }

    fn lower_projection(&mut self, p: &super::ast::Projection) -> ProjectionSpec {
        let slots = p
            .slots
            .iter()
            .map(|slot| match slot {
                EntitySlot::Anchor(e) => SpecSlot::Anchor(*e),
                EntitySlot::Target => SpecSlot::Mask,
                EntitySlot::Var(child) => SpecSlot::Register(self.emit(child)),
            })
            .collect();
        ProjectionSpec {
            slots,
            relations: p.relations.clone(),
            mask_pos: p.target_pos,
        }
    }
}

fn compile_with(ast: &QueryAst, fuse_not: bool) -> Result<StepProgram> {
    ast.validate()?;
    let mut c = Compiler {
        steps: Vec::new(),
        memo: HashMap::new(),
        fuse_not,
    };
    let target = c.emit(ast);
    let program = StepProgram {
        num_registers: c.steps.len(),
        steps: c.steps,
        target,
    };
    program.validate()?;
    Ok(program)
}

/// Compile an AST to a step program, one operator node per step.
pub fn compile(ast: &QueryAst) -> Result<StepProgram> {
    compile_with(ast, false)
}

/// Compile with negation fused into the projection step it negates
/// (`{P, Not}` steps); otherwise identical to [`compile`].
pub fn compile_fused(ast: &QueryAst) -> Result<StepProgram> {
    compile_with(ast, true)
}
