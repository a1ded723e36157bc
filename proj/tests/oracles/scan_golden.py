"""Golden values for a 4-step selective scan (L=4, N=2, D=1).

Parameters are drawn from SplitMix64(42) in this order:
x (4, U(-1,1)), A (2, -U(0.5,2)), B (4x2 row-major, U(-1,1)),
C (4x2 row-major, U(-1,1)), delta (4, U(0.05,0.5)).
The recurrence is unrolled with plain floats.
"""
import math

MASK = (1 << 64) - 1


class SplitMix64:
    def __init__(self, seed):
        self.state = seed & MASK

    def next(self):
        self.state = (self.state + 0x9E3779B97F4A7C15) & MASK
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
        return z ^ (z >> 31)

    def uniform(self, lo=0.0, hi=1.0):
        return lo + (hi - lo) * ((self.next() >> 11) * 2.0**-53)


rng = SplitMix64(42)
x = [rng.uniform(-1, 1) for _ in range(4)]
A = [-rng.uniform(0.5, 2) for _ in range(2)]
B = [[rng.uniform(-1, 1) for _ in range(2)] for _ in range(4)]
C = [[rng.uniform(-1, 1) for _ in range(2)] for _ in range(4)]
delta = [rng.uniform(0.05, 0.5) for _ in range(4)]

h = [0.0, 0.0]
y = []
for k in range(4):
    for n in range(2):
        h[n] = math.exp(delta[k] * A[n]) * h[n] + delta[k] * B[k][n] * x[k]
    y.append(C[k][0] * h[0] + C[k][1] * h[1])

for k, v in enumerate(y):
    print(f"y[{k}] = {v!r}")
