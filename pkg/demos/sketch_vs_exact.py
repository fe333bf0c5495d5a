"""
Sketched influence against the exact answer
===========================================

A logistic fit on 2000 sparse rows with 500 columns. Exact generalized
leverage is still cheap here, so we can watch the sketch close in on it as
the projection gets wider.
"""

import numpy as np
from scipy import stats

from influence_sketching import (FitOptions, ProjectionSpec, exact_influence, fit_irls,
                                 influence_sketch, make_projection)
from influence_sketching.harness import SyntheticSpec, generate, top_overlap

data = generate(SyntheticSpec(n_train=2000, n_test=500, p=500, design="independent",
                              signal_scale=0.5, seed=1))
fit = fit_irls(data.X_train, data.y_train, opts=FitOptions())
exact = exact_influence(data.X_train, fit)
print(f"fit converged in {fit.n_iter} iterations")

for k in (32, 64, 128, 256, 500):
    omega = make_projection(ProjectionSpec(p=500, k=k, seed=7))
    timings = {}
    sketch = influence_sketch(data.X_train, fit, omega, timings=timings)
    r = stats.pearsonr(sketch.influence, exact.influence)[0]
    print(f"k={k:3d}  pearson {r:.4f}  top-100 overlap {top_overlap(sketch.influence, exact.influence, 100):3d}"
          f"  leverage loop {timings['leverage_loop'] * 1e3:.1f} ms")
