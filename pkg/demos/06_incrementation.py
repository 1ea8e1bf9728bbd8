"""
Substepping a hard refit
========================

A twisted and jittered grid is too far from its targets for a single Newton
solve.  The controller bisects the target increment after a failure and
doubles it again after two fast successes.
"""

from hexrefit import NonConvergenceError, RefitConfig, make_demo, quality_report, refit

mesh, cfg = make_demo("jittered-grid")
print("before:", quality_report(mesh).summary())

try:
    refit(RefitConfig.from_dict(dict(cfg, max_increments=1)).build_problem(mesh))
except NonConvergenceError as exc:
    print("single increment:", exc)

x, report = refit(RefitConfig.from_dict(cfg).build_problem(mesh))
for rec in report.increments:
    if rec.converged:
        print(f"  ok   alpha={rec.alpha:.4f} iters={rec.iterations:2d} |f|={rec.res_norm:.2e}")
    else:
        print(f"  fail alpha={rec.alpha:.4f} iters={rec.iterations:2d}")
print(f"{report.n_inc} accepted of {report.n_attempts} attempts")
print("after: ", quality_report(mesh, nodes=x).summary())
