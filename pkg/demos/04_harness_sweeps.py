"""
Query-budget and trade-off sweeps
=================================

The harness writes per-design rows, per-cell summaries and a metadata
sidecar, then reduces them to plot data. The same runs are available from
the command line as ``python -m lead.harness sweep-k`` and ``sweep-w``.
"""

from lead.harness import ExperimentConfig, emit_query_curve, emit_tradeoff_data, run_experiment

common = dict(n_designs=20, T_init=50, sigma_policy="sqrt_beta_t")

res = run_experiment(ExperimentConfig(strategies=["H", "S"], K_sweep=[1, 4, 16],
                                      output_dir="demo_results/sweep_k", **common), log=print)
print("strategy  K   mean reward   std   queries/design")
for s, k, mean, std, q in emit_query_curve(res, "demo_results/sweep_k/query_curve.csv"):
    print(f"{s:8s} {k:3d}  {mean:10.3f}  {std:6.3f}  {q:6.0f}")

# hydropathy (component 1) against staying near the hydrophobic mode
res = run_experiment(ExperimentConfig(strategies=["H"], evaluator="tradeoff",
                                      weight_sweep=[0, 0.5, 1],
                                      output_dir="demo_results/sweep_w", **common), log=print)
print("normalizers:", res["metadata"]["normalizers"])
print("   w   hydro reward   structure reward")
for w, m1, m2, s1, s2 in emit_tradeoff_data(res, "demo_results/sweep_w/tradeoff.csv"):
    print(f"{w:4.2f}  {m1:8.3f} +- {s1:.2f}  {m2:9.3f} +- {s2:.2f}")
