"""Random scaling search for n=12 workers, s=3 stragglers.

A finite frequency bound kappa_R certifies every q at once; the exact
kappa_worst at a few q values stays below it.  About a minute with 20 draws.
"""
import sys

from convcode import spectral
from convcode.polyalg import make_matvec_generator

trials = int(sys.argv[1]) if len(sys.argv) > 1 else 20
k, s = 9, 3

ones = make_matvec_generator(k, s)
print("all-ones kappa_R:", spectral.kappa_R(ones))

res = spectral.search_R(k + s, k, s, trials=trials, seed=0)
print(f"best of {trials} draws: kappa_R = {res.kappa:.2f} "
      f"(median draw {sorted(res.trial_kappas)[trials // 2]:.1f}, {sum(res.trial_seconds):.1f}s)")

G = make_matvec_generator(k, s, res.R)
for q in (2, 6, 11):
    kw = spectral.kappa_worst(G, q).kappa_worst
    print(f"  q={q:<3} kappa_worst = {kw:8.2f}   bound {res.kappa:.2f}")
