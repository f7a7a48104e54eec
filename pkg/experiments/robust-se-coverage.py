import sys

sys.path.append("../")

import numpy as np
import pandas as pd

from experiments.helpers import coverage_summary, run_replications

n_replications = 500
n_clusters = 30
cluster_size = 6
beta = np.array([10.0, 1.5])
G = np.array([[4.0, 0.5], [0.5, 1.0]])
resid_var = 2.0

summaries = {}
for random_effects in ["normal", "t"]:
    replications = run_replications(
        n_replications,
        n_clusters=n_clusters,
        cluster_size=cluster_size,
        beta=beta,
        G=G,
        resid_var=resid_var,
        random_effects=random_effects,
    )
    summaries[random_effects] = coverage_summary(replications, true_slope=beta[1])

print(pd.DataFrame(summaries).round(4))
