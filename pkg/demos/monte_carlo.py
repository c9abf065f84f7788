"""Sample the alpha-stable process by subordination and compare with the kernel.

X = sqrt(2 S) Z with S one-sided stable of index alpha/2 and Z standard
normal has density p_alpha(1, .). The histogram is tested by chi-square and
the tail index is read off a log-log fit of the survival function.
"""
from fracheat.mc import SamplerConfig, histogram_compare, kernel_density, sample_position, tail_slope

for alpha in (0.5, 1.0, 1.5):
    X = sample_position(SamplerConfig(alpha, 1.0, 1, 10 ** 6, seed=1))[:, 0]
    h = histogram_compare(X, kernel_density(alpha))
    fit = tail_slope(X)
    print(f"alpha={alpha}: chi2={h.chi2:.1f} on {h.dof} dof, p={h.p_value:.3f}; tail slope {fit.slope:.3f}")

a = sample_position(SamplerConfig(1.2, 1.0, 2, 200_000, seed=9, workers=1))
b = sample_position(SamplerConfig(1.2, 1.0, 2, 200_000, seed=9, workers=2))
print("same seed, different worker count, identical bytes:", a.tobytes() == b.tobytes())
