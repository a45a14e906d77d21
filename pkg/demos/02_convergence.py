"""Convergence of prediction and correction under simultaneous refinement h = dt = 2^-k.

The prediction is first order in time; one defect-correction sweep restores
second order.  Run with ``python3 demos/02_convergence.py`` (about half a minute).
"""
# %%
from robindc import analysis
from robindc.problems import example_neumann, example_viscosity

levels = [3, 4, 5, 6, 7]
for make in (example_neumann, example_viscosity):
    problem = make()
    for scheme in ("prediction", "correction"):
        report = analysis.convergence_study(problem, scheme, levels, threads=2)
        print(f"\n## {problem.label}, {scheme}\n")
        print(report.to_markdown())

# %% The slope of a least-squares fit in log2 gives a single number per column.
# The oscillatory two-viscosity data is still pre-asymptotic here: the slopes overshoot the
# limiting orders (2 for the fields, 1 for the multiplier), which settle only near level 10.
fine = [5, 6, 7, 8]
report = analysis.convergence_study(example_viscosity(), "correction", fine, threads=2)
for col in ("e_u1", "e_w1", "e_lambda"):
    print(col, f"{analysis.fitted_rate(fine, report.column(col)):.2f}")
