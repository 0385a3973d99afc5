# Decoding error vs per-worker SNR for three encoders, worst-case stragglers.
# Writes a CSV next to this script; one decade of MSE per 10 dB is expected.
from pathlib import Path

from convcode.runtime import ExperimentConfig, NoiseModel, StragglerModel, sweep, write_csv

base = dict(operation="matmat", n=6, s=2, k_A=2, k_B=2, gamma_A="5/8", gamma_B="2/3",
            t=16, r=48, w=36, decoder="ls_direct", stragglers=StragglerModel("worst_case"))
schemes = {"all_ones": {}, "random": {"R_seed": 0, "R_trials": 20}, "random_kr": {"R_seed": 0}}
snrs = [60, 70, 80, 90, 100, 110, 120]

out = Path(__file__).with_name("noise_sweep.csv")
rows = []
for name, extra in schemes.items():
    cfg = ExperimentConfig(**base, scheme=name, noise=NoiseModel("awgn", 60.0, seed=1), **extra)
    rows += sweep(cfg, "snr_db", snrs, with_kappa=True)

print(f"{'scheme':<10} {'kappa':>9}  " + " ".join(f"{s:>9}" for s in snrs))
for name in schemes:
    mine = [r for r in rows if r["scheme"] == name]
    print(f"{name:<10} {float(mine[0]['kappa']):>9.2f}  " + " ".join(f"{float(r['mse_percent']):9.2e}" for r in mine))

write_csv(rows, out)
print("wrote", out)
