//! Solver-independent linear model with continuous and binary variables.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VarId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VarKind {
    Continuous,
    Binary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    pub kind: VarKind,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub name: String,
    pub terms: Vec<(VarId, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

impl Constraint {
    pub fn activity(&self, values: &[f64]) -> f64 {
        self.terms.iter().map(|(v, c)| c * values[v.0]).sum()
    }

    /// Amount by which `values` violate the row, zero when satisfied.
    pub fn violation(&self, values: &[f64]) -> f64 {
        let a = self.activity(values);
        match self.sense {
            Sense::Le => (a - self.rhs).max(0.0),
            Sense::Ge => (self.rhs - a).max(0.0),
            Sense::Eq => (a - self.rhs).abs(),
        }
    }
}

/// Variable and row counts by name prefix.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Census {
    pub variables: usize,
    pub binaries: usize,
    pub constraints: usize,
    pub variables_by_prefix: std::collections::BTreeMap<String, usize>,
    pub constraints_by_prefix: std::collections::BTreeMap<String, usize>,
}

fn prefix(name: &str) -> String {
    name.split('_').next().unwrap_or(name).to_string()
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MilpModel {
    vars: Vec<Variable>,
    by_name: HashMap<String, VarId>,
    constraints: Vec<Constraint>,
    objective: Vec<(VarId, f64)>,
}

impl MilpModel {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a variable. Names must be unique and LP-safe
    /// (ASCII letters, digits and underscores, not starting with a digit).
    pub fn add_var(&mut self, name: impl Into<String>, kind: VarKind, lower: f64, upper: f64) -> VarId {
        let name = name.into();
        debug_assert!(
            name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
                && !name.starts_with(|c: char| c.is_ascii_digit()),
            "variable name `{name}` is not LP-safe"
        );
        let (lower, upper) = match kind {
            VarKind::Binary => (lower.max(0.0), upper.min(1.0)),
            VarKind::Continuous => (lower, upper),
        };
        let id = VarId(self.vars.len());
        let prev = self.by_name.insert(name.clone(), id);
        assert!(prev.is_none(), "duplicate variable `{name}`");
        self.vars.push(Variable {
            name,
            kind,
            lower,
            upper,
        });
        id
    }

    pub fn add_constraint(&mut self, name: impl Into<String>, terms: Vec<(VarId, f64)>, sense: Sense, rhs: f64) {
        let name = name.into();
        debug_assert!(terms.iter().all(|(v, c)| v.0 < self.vars.len() && c.is_finite()));
        // Merge repeated variables so every row lists each column once.
        let mut merged: Vec<(VarId, f64)> = Vec::with_capacity(terms.len());
        for (v, c) in terms {
            match merged.iter_mut().find(|(w, _)| *w == v) {
                Some(slot) => slot.1 += c,
                None => merged.push((v, c)),
            }
        }
        merged.retain(|(_, c)| *c != 0.0);
        self.constraints.push(Constraint {
            name,
            terms: merged,
            sense,
            rhs,
        });
    }

    pub fn set_objective(&mut self, terms: Vec<(VarId, f64)>) {
        let mut dense = vec![0.0; self.vars.len()];
        for (v, c) in terms {
            dense[v.0] += c;
        }
        self.objective = dense
            .into_iter()
            .enumerate()
            .filter(|(_, c)| *c != 0.0)
            .map(|(k, c)| (VarId(k), c))
            .collect();
    }

    pub fn vars(&self) -> &[Variable] {
        &self.vars
    }

    pub fn var(&self, id: VarId) -> &Variable {
        &self.vars[id.0]
    }

    pub fn var_by_name(&self, name: &str) -> Option<VarId> {
        self.by_name.get(name).copied()
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn objective(&self) -> &[(VarId, f64)] {
        &self.objective
    }

    pub fn objective_value(&self, values: &[f64]) -> f64 {
        self.objective.iter().map(|(v, c)| c * values[v.0]).sum()
    }

    /// Largest row, bound or integrality violation and where it occurs.
    pub fn max_violation(&self, values: &[f64]) -> (f64, String) {
        let mut worst = (0.0, String::new());
        for c in &self.constraints {
            let v = c.violation(values);
            if v > worst.0 {
                worst = (v, c.name.clone());
            }
        }
        for (var, &x) in self.vars.iter().zip(values) {
            let mut v = (var.lower - x).max(x - var.upper).max(0.0);
            if var.kind == VarKind::Binary {
                v = v.max((x - x.round()).abs());
            }
            if v > worst.0 {
                worst = (v, var.name.clone());
            }
        }
        worst
    }

    pub fn census(&self) -> Census {
        let mut c = Census {
            variables: self.vars.len(),
            binaries: self.vars.iter().filter(|v| v.kind == VarKind::Binary).count(),
            constraints: self.constraints.len(),
            ..Census::default()
        };
        for v in &self.vars {
            *c.variables_by_prefix.entry(prefix(&v.name)).or_default() += 1;
        }
        for r in &self.constraints {
            *c.constraints_by_prefix.entry(prefix(&r.name)).or_default() += 1;
        }
        c
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rows_merge_repeated_terms() {
        let mut m = MilpModel::new();
        let x = m.add_var("x", VarKind::Continuous, 0.0, 10.0);
        let y = m.add_var("y", VarKind::Binary, -5.0, 5.0);
        m.add_constraint("c_1", vec![(x, 1.0), (y, 2.0), (x, 0.5), (y, -2.0)], Sense::Le, 3.0);
        assert_eq!(m.constraints()[0].terms, vec![(x, 1.5)]);
        assert_eq!((m.var(y).lower, m.var(y).upper), (0.0, 1.0));
    }

    #[test]
    fn violation_accounting() {
        let mut m = MilpModel::new();
        let x = m.add_var("x", VarKind::Continuous, 0.0, 1.0);
        let b = m.add_var("b", VarKind::Binary, 0.0, 1.0);
        m.add_constraint("ge_x", vec![(x, 1.0)], Sense::Ge, 0.5);
        m.add_constraint("eq_xb", vec![(x, 1.0), (b, -1.0)], Sense::Eq, 0.0);
        assert_eq!(m.max_violation(&[0.5, 0.5]).0, 0.5);
        assert_eq!(m.max_violation(&[1.0, 1.0]).0, 0.0);
        let (v, at) = m.max_violation(&[0.2, 0.2]);
        assert!((v - 0.3).abs() < 1e-15);
        assert_eq!(at, "ge_x");
    }

    #[test]
    fn census_groups_by_prefix() {
        let mut m = MilpModel::new();
        let a = m.add_var("h_1_2_0", VarKind::Continuous, 0.0, 1.0);
        m.add_var("h_1_2_1", VarKind::Continuous, 0.0, 1.0);
        m.add_var("kap_1_2_0", VarKind::Binary, 0.0, 1.0);
        m.add_constraint("relu_1", vec![(a, 1.0)], Sense::Le, 1.0);
        let c = m.census();
        assert_eq!(c.variables, 3);
        assert_eq!(c.binaries, 1);
        assert_eq!(c.variables_by_prefix["h"], 2);
        assert_eq!(c.constraints_by_prefix["relu"], 1);
    }
}
