//! Formula sources shared by the sampling subcommands.

use std::path::Path;

use anyhow::{bail, Context, Result};
use exal_core::formula::{parse_dimacs, write_dimacs, CnfFormula};
use exal_core::tasks;

use crate::config::Params;

/// Schema entries for [`load_formula`], with per-command defaults for the
/// family and its size.
#[macro_export]
macro_rules! formula_schema {
    ($family:expr, $depth:expr, $branching:expr; $($extra:expr),* $(,)?) => {
        &[
            $crate::config::param("cnf", "", "DIMACS file; overrides `family`"),
            $crate::config::param("family", $family, "branch | split | bottom-up | half"),
            $crate::config::param("depth", $depth, "depth for branch and split"),
            $crate::config::param("branching", $branching, "branching factor for branch"),
            $crate::config::param("conj", "3", "conjunction size for split"),
            $crate::config::param("disj", "2", "disjunction size for split"),
            $crate::config::param("frac_start", "0.5", "starting fraction for bottom-up"),
            $crate::config::param("inferred", "20", "inferred variables for bottom-up"),
            $crate::config::param("in_degree", "3", "in-degree for bottom-up"),
            $crate::config::param("vars", "12", "variables for half"),
            $crate::config::param("target", "0.3", "formula probability for half"),
            $crate::config::param("formula_seed", "0", "generator seed"),
            $($extra),*
        ]
    };
}

pub fn load_formula(params: &Params) -> Result<CnfFormula> {
    if let Some(path) = params.get_opt::<String>("cnf")? {
        return read_dimacs(Path::new(&path));
    }
    let seed: u64 = params.get("formula_seed")?;
    let family: String = params.get("family")?;
    let formula = match family.as_str() {
        "branch" => tasks::gen_branch(params.get("depth")?, params.get("branching")?, seed)?,
        "split" => tasks::gen_split(params.get("depth")?, params.get("conj")?, params.get("disj")?, seed)?,
        "bottom-up" => tasks::gen_bottom_up(
            params.get("frac_start")?,
            params.get("inferred")?,
            params.get("in_degree")?,
            seed,
        )?,
        "half" => tasks::gen_half_models(params.get("vars")?, params.get("target")?, seed)?.0,
        _ => return Err(params.bad("family", "expected branch, split, bottom-up or half").into()),
    };
    Ok(formula)
}

pub fn read_dimacs(path: &Path) -> Result<CnfFormula> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    match parse_dimacs(&text) {
        Ok(f) => Ok(f),
        Err(e) => bail!("{}: {e}", path.display()),
    }
}

pub fn save_dimacs(formula: &CnfFormula, path: &Path) -> Result<()> {
    std::fs::write(path, write_dimacs(formula)).with_context(|| format!("writing {}", path.display()))
}
