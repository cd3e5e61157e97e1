"""One full iteration of the cascade at a single SNR, printed as a table.

    python3 demos/one_iteration.py [snr_db] [iteration]

Takes a few minutes on one core; the CNN trains seven times.
"""
import sys

from labelsr.pipeline import ExperimentConfig, run_iteration

snr = float(sys.argv[1]) if len(sys.argv) > 1 else -19.8
it = int(sys.argv[2]) if len(sys.argv) > 2 else 0

records = run_iteration(ExperimentConfig(), snr, it)
print(f"{'classifier':12s} {'stage':20s} {'F1':>6s} {'prec':>6s} {'rec':>6s} {'rej':>6s}")
for r in records:
    print(f"{r.classifier:12s} {r.stage:20s} {r.f1:6.3f} {r.precision:6.3f} {r.recall:6.3f} {r.rejected_fraction:6.3f}")
