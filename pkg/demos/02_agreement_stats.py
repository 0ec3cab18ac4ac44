"""Agreement rates, bootstrap intervals, thresholds, ROC, loss, heat maps.

A tour of the evaluation toolkit on a simulated rating panel: three
radiologists judge 200 studies for one finding, a model produces
confidences, and we ask whether the raters agree more with the model
than with each other.

Run: python demos/02_agreement_stats.py
"""

import numpy as np

from cxrmine import (
    RatingMatrix,
    aar,
    avg_radiologist_rate,
    bce_mean_loss,
    bootstrap_delta_ci,
    heatmap,
    roc_auc,
    select_threshold,
)

rng = np.random.default_rng(7)

# --- simulate a panel: ground truth, three imperfect raters, a model
n = 200
truth = rng.integers(0, 2, n)
raters = np.stack([truth ^ (rng.random(n) < flip) for flip in (0.12, 0.15, 0.18)], axis=1)
confidences = np.clip(truth * 0.55 + 0.2 + rng.normal(0, 0.18, n), 0, 1)

matrix = RatingMatrix(
    finding="pulmonary edema",
    studies=[f"S{i}" for i in range(n)],
    raters=["rad_a", "rad_b", "rad_c"],
    values=raters,
    report_opinion=truth,
)

# --- pick the model's operating point by maximizing AAR against the raters
threshold = select_threshold(confidences, matrix)
model = (confidences >= threshold).astype(int)
print(f"threshold maximizing AAR: {threshold:.3f}")

rater_cols = [raters[:, j] for j in range(3)]
print(f"model AAR vs the three raters: {aar(model, rater_cols):.3f}")
print(f"average radiologist rate:      {avg_radiologist_rate(matrix):.3f}")

# --- is the difference real? bootstrap the delta over the study axis
ci = bootstrap_delta_ci(model, matrix, n=10_000, level=0.95, seed=1)
verdict = "outside" if ci.lo > 0 or ci.hi < 0 else "inside"
print(f"delta = {ci.delta:+.3f}, 95% CI ({ci.lo:+.3f}, {ci.hi:+.3f}) "
      f"over {ci.n_resamples} resamples; zero is {verdict} the interval\n")

# --- threshold-free views of the same confidences
roc = roc_auc(confidences, truth)
print(f"AUC {roc.auc:.3f}; accuracy at sensitivity=specificity "
      f"{roc.accuracy_at_sens_eq_spec:.3f}")

# --- the training loss on one study's 40-long confidence vector
y = np.zeros(40)
y[[6, 26]] = 1  # two positive findings
p = np.full(40, 0.05)
p[[6, 26]] = 0.9
print(f"mean BCE for a well-predicted study: {bce_mean_loss(p, y):.4f}")
print(f"mean BCE at coin-flip confidence:    {bce_mean_loss(np.full(40, 0.5), y):.4f}")

# --- localization: weight feature maps by the output layer's weights
feature_maps = rng.normal(size=(1024, 10, 10))
weights = rng.normal(size=1024)
localization = heatmap(feature_maps, weights)
peak = np.unravel_index(np.argmax(localization), localization.shape)
print(f"heat map peak at cell {tuple(int(i) for i in peak)} "
      f"(value {localization[peak]:+.2f})")
