"""
Numerical core: grid, solver, ensemble, statistics, weighting, analysis,
metrics and the experiment harness
"""
