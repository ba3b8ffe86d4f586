#!/usr/bin/env python3
"""Strong temporal convergence against a coupled fine reference path.

Runs a reduced version of the temporal rate study (fewer paths and levels
than the full harness defaults, so it finishes in well under a minute) and
fits a log-log slope with np.polyfit.  The scheme is strong order 1/2, so
the mean *squared* L2 error should scale like k^1."""

import numpy as np

from sacpde.harness import ExperimentPlan, temporal_rate_study

plan = ExperimentPlan(
    kind="rate-time",
    solver="spectral",
    spectral_modes=64,
    d=1,
    R=2 * np.pi,
    T=0.25,
    j_fine=1024,
    levels=(16, 32, 64, 128),
    sigma="sine",
    sigma_amplitude=0.5,
    x0="cos",
    seed=7,
    n_paths=8,
)

report = temporal_rate_study(plan).report

print("   J        k       mean sup ||err||^2")
for lv in report["levels"]:
    print("%4d  %8.5f  %14.6e" % (lv["J"], lv["k"], lv["sup_l2_sq"]["mean"]))

ks = np.array([lv["k"] for lv in report["levels"]])
errs = np.array([lv["sup_l2_sq"]["mean"] for lv in report["levels"]])
slope = np.polyfit(np.log(ks), np.log(errs), 1)[0]
print()
print("fitted slope: %.3f  (harness fit %.3f +- %.3f, expect ~1 for order 1/2)"
      % (slope, report["slope_l2"]["slope"], report["slope_l2"]["ci95_halfwidth"]))
