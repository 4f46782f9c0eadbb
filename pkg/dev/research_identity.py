import time

import clumping_utils as cu
import experiment_utils as eu
from clumping_utils import ContinuousQueueSpec

# How often max L_sys = c + max L_que as the horizon grows, and how far the
# system maximum sits from the continuous prediction.

def scan(spec, horizons, reps=200, seed=0):
    asym = cu.continuous_asymptotics(spec)
    for x in horizons:
        t0 = time.time()
        report = eu.system_queue_identity(spec, x, reps, seed)
        t1 = time.time()
        print(f"x={x:.0e}: identity {report.identity_rate:.3f}, "
              f"mean max {report.summary.mean:.3f} vs {cu.expected_max(asym, x):.3f}, "
              f"sup {report.sup_cdf_distance:.4f} ({t1-t0:.1f}s)")

if __name__ == "__main__":
    for c, mu in ((1, 0.5), (2, 0.25)):
        spec = ContinuousQueueSpec(lam=1 / 3, mu=mu, c=c)
        print(f"--- M/M/{c} lambda=1/3 mu={mu}")
        scan(spec, (1e4, 1e5, 1e6))
