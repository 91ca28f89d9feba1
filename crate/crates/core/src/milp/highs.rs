//! HiGHS adapter over its C API.
//!
//! Each solve creates and destroys its own instance; instances are never
//! shared across threads.

#![allow(non_upper_case_globals)]

use std::ffi::{c_void, CString};
use std::path::Path;

use highs_sys::*;

use super::model::{MilpModel, Sense, VarKind};
use super::{BackendStatus, MilpError, RawSolution, SolveOptions, SolverBackend};

/// Gap below which a MIP reported optimal by HiGHS is labelled `Optimal`
/// rather than `GapLimit`.
const PROVEN_GAP: f64 = 1e-9;

#[derive(Debug, Clone, Copy, Default)]
pub struct HighsBackend;

struct Instance(*mut c_void);

impl Instance {
    fn new() -> Result<Self, MilpError> {
        // SAFETY: Highs_create has no preconditions; null is checked below.
        let ptr = unsafe { Highs_create() };
        if ptr.is_null() {
            return Err(MilpError::Backend("Highs_create returned null".into()));
        }
        Ok(Instance(ptr))
    }

    fn set_bool(&self, name: &str, v: bool) -> Result<(), MilpError> {
        let c = CString::new(name).expect("option names have no NUL");
        // SAFETY: valid instance and NUL-terminated option name.
        let st = unsafe { Highs_setBoolOptionValue(self.0, c.as_ptr(), v as HighsInt) };
        check(st, name)
    }

    fn set_int(&self, name: &str, v: i64) -> Result<(), MilpError> {
        let c = CString::new(name).expect("option names have no NUL");
        let v = HighsInt::try_from(v).map_err(|_| MilpError::Backend(format!("option {name} out of range")))?;
        // SAFETY: as above.
        let st = unsafe { Highs_setIntOptionValue(self.0, c.as_ptr(), v) };
        check(st, name)
    }

    fn set_double(&self, name: &str, v: f64) -> Result<(), MilpError> {
        let c = CString::new(name).expect("option names have no NUL");
        // SAFETY: as above.
        let st = unsafe { Highs_setDoubleOptionValue(self.0, c.as_ptr(), v) };
        check(st, name)
    }

    fn double_info(&self, name: &str) -> Option<f64> {
        let c = CString::new(name).expect("info names have no NUL");
        let mut v = f64::NAN;
        // SAFETY: valid instance, NUL-terminated name, writable out-pointer.
        let st = unsafe { Highs_getDoubleInfoValue(self.0, c.as_ptr(), &mut v) };
        (st == kHighsStatusOk).then_some(v)
    }

    fn int_info(&self, name: &str) -> Option<HighsInt> {
        let c = CString::new(name).expect("info names have no NUL");
        let mut v: HighsInt = 0;
        // SAFETY: as above.
        let st = unsafe { Highs_getIntInfoValue(self.0, c.as_ptr(), &mut v) };
        (st == kHighsStatusOk).then_some(v)
    }

    fn configure(&self, opts: &SolveOptions) -> Result<(), MilpError> {
        self.set_bool("output_flag", false)?;
        self.set_double("mip_feasibility_tolerance", 1e-9)?;
        self.set_double("primal_feasibility_tolerance", 1e-9)?;
        self.set_double("mip_rel_gap", opts.mip_gap)?;
        self.set_int("random_seed", (opts.seed % (i32::MAX as u64)) as i64)?;
        if let Some(t) = opts.time_limit {
            self.set_double("time_limit", t)?;
        }
        if opts.threads > 0 {
            // The thread pool is process-wide in HiGHS; a refused change is
            // not fatal because results do not depend on it.
            if let Err(e) = self.set_int("threads", opts.threads as i64) {
                log::debug!("threads option ignored: {e}");
            }
        }
        Ok(())
    }

    fn run(&self, is_mip: bool) -> Result<RawSolution, MilpError> {
        // SAFETY: valid instance with a model loaded.
        let st = unsafe { Highs_run(self.0) };
        if st == kHighsStatusError {
            return Err(MilpError::Backend("Highs_run failed".into()));
        }
        // SAFETY: valid instance.
        let model_status = unsafe { Highs_getModelStatus(self.0) };
        // SAFETY: valid instance.
        let ncol = unsafe { Highs_getNumCol(self.0) } as usize;
        let has_primal = self.int_info("primal_solution_status") == Some(kHighsSolutionStatusFeasible);
        let values = if has_primal {
            let mut v = vec![0.0; ncol];
            // SAFETY: buffer holds num_col entries; other outputs may be null.
            let st = unsafe {
                Highs_getSolution(
                    self.0,
                    v.as_mut_ptr(),
                    std::ptr::null_mut(),
                    std::ptr::null_mut(),
                    std::ptr::null_mut(),
                )
            };
            check(st, "Highs_getSolution")?;
            Some(v)
        } else {
            None
        };
        // SAFETY: valid instance.
        let objective = unsafe { Highs_getObjectiveValue(self.0) };
        let (bound, gap) = if is_mip {
            (
                self.double_info("mip_dual_bound").unwrap_or(f64::NEG_INFINITY),
                self.double_info("mip_gap").unwrap_or(f64::INFINITY),
            )
        } else {
            (objective, 0.0)
        };
        let status = match model_status {
            kHighsModelStatusOptimal if gap <= PROVEN_GAP => BackendStatus::Optimal,
            kHighsModelStatusOptimal => BackendStatus::GapLimit,
            kHighsModelStatusModelEmpty => BackendStatus::Optimal,
            kHighsModelStatusTimeLimit => BackendStatus::TimeLimit,
            // Planning models are bounded, so the ambiguous verdict means
            // infeasible for them.
            kHighsModelStatusInfeasible | kHighsModelStatusUnboundedOrInfeasible => BackendStatus::Infeasible,
            other => return Err(MilpError::Backend(format!("HiGHS model status {other}"))),
        };
        let values = match status {
            BackendStatus::Infeasible => None,
            // An empty model has nothing to report but is trivially solved.
            _ if model_status == kHighsModelStatusModelEmpty => values.or_else(|| Some(vec![0.0; ncol])),
            _ => values,
        };
        let objective = if values.is_some() { objective } else { f64::NAN };
        Ok(RawSolution {
            status,
            values,
            objective,
            bound,
            gap,
        })
    }
}

impl Drop for Instance {
    fn drop(&mut self) {
        // SAFETY: pointer came from Highs_create and is destroyed once.
        unsafe { Highs_destroy(self.0) }
    }
}

fn check(status: HighsInt, what: &str) -> Result<(), MilpError> {
    if status == kHighsStatusError {
        Err(MilpError::Backend(format!("HiGHS rejected {what}")))
    } else {
        Ok(())
    }
}

fn to_int(n: usize) -> Result<HighsInt, MilpError> {
    HighsInt::try_from(n).map_err(|_| MilpError::Backend("model too large for HiGHS index type".into()))
}

impl SolverBackend for HighsBackend {
    fn name(&self) -> &'static str {
        "highs"
    }

    fn solve(&self, model: &MilpModel, opts: &SolveOptions) -> Result<RawSolution, MilpError> {
        let vars = model.vars();
        let rows = model.constraints();
        let mut cost = vec![0.0; vars.len()];
        for (v, c) in model.objective() {
            cost[v.0] = *c;
        }
        let lower: Vec<f64> = vars.iter().map(|v| v.lower).collect();
        let upper: Vec<f64> = vars.iter().map(|v| v.upper).collect();
        let integrality: Vec<HighsInt> = vars
            .iter()
            .map(|v| match v.kind {
                VarKind::Continuous => kHighsVarTypeContinuous,
                VarKind::Binary => kHighsVarTypeInteger,
            })
            .collect();
        let is_mip = vars.iter().any(|v| v.kind == VarKind::Binary);
        let mut row_lo = Vec::with_capacity(rows.len());
        let mut row_hi = Vec::with_capacity(rows.len());
        let mut start = Vec::with_capacity(rows.len());
        let mut index = Vec::new();
        let mut value = Vec::new();
        for r in rows {
            let (lo, hi) = match r.sense {
                Sense::Le => (f64::NEG_INFINITY, r.rhs),
                Sense::Ge => (r.rhs, f64::INFINITY),
                Sense::Eq => (r.rhs, r.rhs),
            };
            row_lo.push(lo);
            row_hi.push(hi);
            start.push(to_int(index.len())?);
            for (v, c) in &r.terms {
                index.push(to_int(v.0)?);
                value.push(*c);
            }
        }
        let inst = Instance::new()?;
        inst.configure(opts)?;
        // SAFETY: every array has the length HiGHS expects for the counts
        // passed; all buffers outlive the call.
        let st = unsafe {
            Highs_passMip(
                inst.0,
                to_int(vars.len())?,
                to_int(rows.len())?,
                to_int(index.len())?,
                kHighsMatrixFormatRowwise,
                kHighsObjSenseMinimize,
                0.0,
                cost.as_ptr(),
                lower.as_ptr(),
                upper.as_ptr(),
                row_lo.as_ptr(),
                row_hi.as_ptr(),
                start.as_ptr(),
                index.as_ptr(),
                value.as_ptr(),
                integrality.as_ptr(),
            )
        };
        check(st, "model")?;
        inst.run(is_mip)
    }

    fn solve_lp_file(&self, path: &Path, opts: &SolveOptions) -> Result<RawSolution, MilpError> {
        let c = CString::new(path.to_string_lossy().as_bytes())
            .map_err(|_| MilpError::Io(format!("{}: path contains NUL", path.display())))?;
        let inst = Instance::new()?;
        inst.configure(opts)?;
        // SAFETY: valid instance and NUL-terminated path.
        let st = unsafe { Highs_readModel(inst.0, c.as_ptr()) };
        if st == kHighsStatusError {
            return Err(MilpError::Io(format!("{}: HiGHS could not read the model", path.display())));
        }
        // Integrality is only known after reading; binaries make it a MIP.
        let is_mip = self::file_has_integers(path);
        inst.run(is_mip)
    }
}

fn file_has_integers(path: &Path) -> bool {
    std::fs::read_to_string(path)
        .map(|s| {
            s.lines()
                .any(|l| matches!(l.trim().to_ascii_lowercase().as_str(), "binaries" | "binary" | "generals" | "general"))
        })
        .unwrap_or(false)
}
