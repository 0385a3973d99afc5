# Two message blocks and two all-ones parity columns, surviving workers {2, 3}.
# At w = 0 the frequency matrix is [[2, 2], [2, 2]], singular, so the
# finite-q decoding matrices must get worse as q grows.
import numpy as np

from convcode import spectral
from convcode.expand import expand_subset
from convcode.polyalg import make_matvec_generator

G = make_matvec_generator(2, 2)
print(G.to_json())

lo, hi = spectral.theorem2_bounds(G, (2, 3))
print(f"frequency bounds: lambda_min >= {lo:.2e}, lambda_max <= {hi:.4f}")

print(f"{'q':>5} {'cond':>10} {'lambda_min':>12} {'lambda_max':>11}")
for q in (2, 5, 10, 30, 100, 300):
    c = spectral.cond(expand_subset(G, q, (2, 3)).data)
    emin, emax = spectral.gram_extreme_eigs(G, q, (2, 3))
    print(f"{q:>5} {c:>10.3f} {emin:>12.3e} {emax:>11.5f}")

# lambda_min shrinks roughly like 1/q^2
qs = np.array([30, 100, 300])
lm = np.array([spectral.gram_extreme_eigs(G, q, (2, 3))[0] for q in qs])
print("log-log slope of lambda_min:", np.polyfit(np.log(qs), np.log(lm), 1)[0].round(2))
