"""Worst-case condition number of the all-ones code, n=11 workers, 2 stragglers.

Every one of the 55 surviving 9-worker sets is checked with an SVD of its
decoding system.  Takes around ten seconds.
"""
import time

from convcode import spectral
from convcode.codec import MatMatPlan
from convcode.polyalg import min_q

q = min_q(3, 2, "2/5")
plan = MatMatPlan.standard(3, 3, 2, q, q, t=1, r=3 * q, w=3 * q)
print(f"q_A = q_B = {q}, z = {plan.z}, unknowns per subset = {plan.k * q * q}")

t0 = time.perf_counter()
rep = spectral.kappa_worst(plan)
print(f"kappa_worst = {rep.kappa_worst:.3f}  ({len(rep.subsets)} subsets, {time.perf_counter() - t0:.1f}s)")
print("hardest surviving set:", rep.argmax)
print("easiest surviving set:", rep.argmin, f"cond = {min(rep.conds):.3f}")
