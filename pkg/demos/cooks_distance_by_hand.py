"""
Cook's distance without refitting
=================================

Delete each row, refit, measure how far the coefficients move. Then get the
same numbers from leverage and residuals alone.
"""

import numpy as np

from influence_sketching import SparseDesignMatrix, exact_cooks, exact_leverage, fit_irls

rng = np.random.default_rng(0)
x = rng.uniform(-2, 2, 30)
y = 1.5 * x + rng.normal(scale=0.5, size=30)
x[0], y[0] = 6.0, -3.0          # far out and off the line
X = np.column_stack([np.ones(30), x])

fit = fit_irls(SparseDesignMatrix(X), y, "linear")
print("coefficients:", fit.beta)

# brute force: one refit per row
gram = X.T @ X
brute = []
for i in range(len(y)):
    keep = np.arange(len(y)) != i
    beta_i = np.linalg.lstsq(X[keep], y[keep], rcond=None)[0]
    d = beta_i - fit.beta
    brute.append(d @ gram @ d)
brute = np.array(brute)

report = exact_cooks(fit, exact_leverage(X))
print("max difference vs brute force:", np.abs(report.influence - brute).max())

# row 0 should top the list
for i in report.top(3):
    print(f"row {i:2d}  leverage {report.leverage.values[i]:.3f}  "
          f"residual {report.pseudo_residuals[i]:+.3f}  influence {report.influence[i]:.3f}")
