"""
Finding flipped labels
======================

Plant label flips that favor unusual rows, score every training row, and see
what deleting the top of the ranking does to held-out accuracy.
Smaller than the acceptance runs so it finishes in a few seconds.
"""

from influence_sketching import ProjectionSpec, fit_irls, influence_sketch, make_projection
from influence_sketching.harness import (HARNESS_FIT, LabelNoise, SyntheticSpec, generate,
                                         run_displacement, run_mislabel_discrimination)

spec = SyntheticSpec(n_train=8000, n_test=4000, p=600, n_prototypes=1200,
                     label_noise=LabelNoise(0.05, "leverage_biased_flip"), seed=2)
data = generate(spec)
print(f"{int(data.noise_mask.sum())} of {len(data.y_train)} training labels flipped")

fit = fit_irls(data.X_train, data.y_train, opts=HARNESS_FIT)
report = influence_sketch(data.X_train, fit, make_projection(ProjectionSpec(p=600, k=256, seed=3)))

mis = run_mislabel_discrimination(data, report, data.noise_mask, fit=fit)
for name in ("very_high", "high", "not_high"):
    b = mis.metrics[name]
    print(f"{name:10s} {b['count']:5d} rows, flipped {b['rate']:.3f} +/- {2 * b['se']:.3f}")
print(f"AUC influence {mis.metrics['auc_influence']:.3f}, "
      f"squared residual {mis.metrics['auc_squared_residual']:.3f}")

# at this size accuracy moves by a few test rows either way; the coefficient shift is the
# steadier signal (the acceptance runs use 20000 rows and 5 seeds)
disp = run_displacement(data, HARNESS_FIT, report, fractions=(0.01, 0.05), base_fit=fit)
m = disp.metrics
print(f"baseline accuracy {m['baseline_accuracy']:.4f}")
for f in ("0.01", "0.05"):
    print(f"delete {float(f):.0%}: influential {m['influential_accuracy_change@' + f]:+.4f} "
          f"(|dbeta|_1 {m['influential_l1@' + f]:.1f}), random {m['random_accuracy_change@' + f]:+.4f} "
          f"(|dbeta|_1 {m['random_l1@' + f]:.1f})")
