"""Oscillation of a discrete solution over nested balls B(x, r0 / 2^l)."""
from degenlab import solver
from degenlab.geometry import parse_geometry

g = parse_geometry("Dsigma:0.5")
x, r0 = (0.2, 0.0), 0.02
p = solver.centered_problem(g, x, r0, (257, 257), seed=7)
rep = solver.oscillation_decay_run(p, x, r0, levels=3)
for lv in rep.levels:
    print(f"r={lv.r:.4g}  osc={lv.osc:.4f}  ratio={lv.ratio:.3f}  half={lv.half_measure}")
print("strictly decreasing:", rep.strictly_decreasing())
