use super::{AffineExpr, ConicError, ConicProgram};

/// Moves the quadratic objective into an epigraph cone.
///
/// `Σ ½qᵢxᵢ² ≤ t` is written as the rotated cone `‖(√(2qᵢ)·xᵢ, t − 1)‖ ≤ t + 1`
/// and the objective becomes linear. Row and variable handles of the input
/// stay valid; the epigraph variable is appended last.
pub fn quadratic_to_socp(program: &ConicProgram) -> Result<ConicProgram, ConicError> {
    program.validate()?;
    let mut out = program.clone();
    let quad = std::mem::take(&mut out.objective.quadratic);
    let t = out.add_var("quad_epigraph", 0.0, f64::INFINITY);
    out.add_objective_linear(t, 1.0);
    if quad.is_empty() {
        return Ok(out);
    }
    let mut body: Vec<AffineExpr> = quad
        .iter()
        .map(|&(v, q)| AffineExpr::new().term(v, (2.0 * q).sqrt()))
        .collect();
    body.push(AffineExpr::var(t).plus(-1.0));
    out.add_cone("quad_epigraph", AffineExpr::var(t).plus(1.0), body);
    Ok(out)
}

/// Replaces the objective by the constraint `objective ≤ bound`, leaving a
/// zero objective for the caller to fill. Used to optimise a secondary goal
/// over the (near-)optimal face of a solved program.
pub fn objective_level_set(program: &ConicProgram, bound: f64) -> Result<ConicProgram, ConicError> {
    let mut out = quadratic_to_socp(program)?;
    let objective = std::mem::take(&mut out.objective);
    out.add_linear(
        "objective_cap",
        objective.linear,
        super::Sense::Le,
        bound - objective.constant,
    );
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conic::{solve_continuous, Sense, SolveOptions};

    #[test]
    fn square_with_lower_bound() {
        let mut p = ConicProgram::new();
        let x = p.add_var("x", f64::NEG_INFINITY, f64::INFINITY);
        p.add_linear("lb", vec![(x, 1.0)], Sense::Ge, 3.0);
        p.add_objective_quadratic(x, 2.0);
        let socp = quadratic_to_socp(&p).unwrap();
        assert!(socp.objective().quadratic.is_empty());
        let sol = solve_continuous(&socp, &SolveOptions::default()).unwrap();
        assert!((sol.objective - 9.0).abs() < 1e-6);
        assert!((sol.primal[0] - 3.0).abs() < 1e-6);
    }

    #[test]
    fn zero_quadratic_adds_only_trivial_epigraph() {
        let mut p = ConicProgram::new();
        let x = p.add_var("x", 1.0, 2.0);
        p.add_objective_linear(x, 1.0);
        let socp = quadratic_to_socp(&p).unwrap();
        assert_eq!(socp.num_cones(), 0);
        assert_eq!(socp.num_vars(), 2);
        let sol = solve_continuous(&socp, &SolveOptions::default()).unwrap();
        assert!((sol.objective - 1.0).abs() < 1e-7);
    }

    #[test]
    fn generator_cost_agrees_with_vertex_formula() {
        // min 0.11 p² + 5 p over [0.5, 2]: unconstrained minimiser is negative,
        // so the optimum sits at p = 0.5.
        let mut p = ConicProgram::new();
        let g = p.add_var("p", 0.5, 2.0);
        p.add_objective_quadratic(g, 0.22);
        p.add_objective_linear(g, 5.0);
        let direct = solve_continuous(&p, &SolveOptions::default()).unwrap();
        let cone = solve_continuous(&quadratic_to_socp(&p).unwrap(), &SolveOptions::default()).unwrap();
        let exact = 0.11 * 0.25 + 2.5;
        assert!((direct.objective - exact).abs() < 1e-8);
        assert!((cone.objective - exact).abs() < 1e-8);
    }

    #[test]
    fn level_set_keeps_optimal_face() {
        // min (x − 1)² + y over y ∈ [0, 5], x ∈ [−5, 5], then maximise x on the face.
        let mut p = ConicProgram::new();
        let x = p.add_var("x", -5.0, 5.0);
        let y = p.add_var("y", 0.0, 5.0);
        p.add_objective_quadratic(x, 2.0);
        p.add_objective_linear(x, -2.0);
        p.add_objective_linear(y, 1.0);
        p.add_objective_constant(1.0);
        let mut face = objective_level_set(&p, 0.01).unwrap();
        face.add_objective_linear(x, -1.0);
        let sol = solve_continuous(&face, &SolveOptions::default()).unwrap();
        assert!((sol.primal[0] - 1.1).abs() < 1e-6);
        assert!(sol.primal[1].abs() < 1e-6);
    }

    #[test]
    fn indefinite_rejected() {
        let mut p = ConicProgram::new();
        let x = p.add_var("x", 0.0, 1.0);
        p.add_objective_quadratic(x, -1.0);
        assert!(matches!(quadratic_to_socp(&p), Err(ConicError::Unsupported(_))));
    }
}
