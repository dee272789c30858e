"""Rank-based comparison of methods over the bundled benchmark grids, plus the
dataset-size correlations."""

from agentfe.analysis import bundled, load_points, load_score_table, mrr, pearson, log_values

cls = load_score_table(bundled("classification_scores.csv"))
for rule in ("min-rank", "average-rank"):
    scores = mrr(cls, tie_rule=rule)
    print(rule, {m: round(v, 3) for m, v in scores.items()})

# regression cells are NRMSE, so lower is better
reg = load_score_table(bundled("regression_scores.csv"), higher_is_better=False)
print("regression", {m: round(v, 3) for m, v in mrr(reg).items()})

n, minutes = load_points(bundled("runtime_points.csv"))
print("runtime vs n      ", round(pearson(n, minutes), 4))
print("runtime vs log(n) ", round(pearson(log_values(n), minutes), 4))

for axis in ("n", "p"):
    x, count = load_points(bundled(f"feature_count_vs_{axis}.csv"))
    print(f"feature count vs log({axis})", round(pearson(log_values(x), count), 4))
