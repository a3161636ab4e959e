"""
Divergence of the stage-1 resample as the candidate pool grows
==============================================================

With the reference fixed, a larger candidate pool should let importance
resampling land closer to it. The sweep runs the same stage-1 resample over
a pool-size grid with paired randomness and reports the divergence trend.
"""

from popalign import convergence_sweep

# no weight truncation here: truncation removes a fixed slice of the
# target's support, a bias that stays constant as the pool grows and would
# hide the trend this sweep is about. full KDE fits for the same reason.
result = convergence_sweep(
    preset="shifted-gaussian",
    n_grid=(500, 2_000, 8_000, 32_000),
    d=1,
    m=20_000,
    n_dagger=20_000,
    retain_fraction=1.0,
    repetitions=5,
    seed=0,
    reference_size=20_000,
    kde_fit_subsample=None,
)

ns, medians = result.median_series("w1")
print("pool size -> median exact W1 to the reference")
for n, v in zip(ns, medians):
    print(f"  {n:6d}   {v:.4f}")

print("rows:")
for row in result.to_rows()[:5]:
    print(" ", {k: (round(v, 4) if isinstance(v, float) else v) for k, v in row.items()})

# the heavier-tailed presets show the same shape
for preset in ("mixture-skew", "heavy-tail"):
    r = convergence_sweep(
        preset=preset, n_grid=(500, 4_000, 16_000), d=1, m=10_000,
        n_dagger=10_000, retain_fraction=1.0, repetitions=3, seed=0,
        reference_size=10_000, kde_fit_subsample=None,
    )
    _, med = r.median_series("w1")
    print(preset, "medians:", [round(v, 4) for v in med])
