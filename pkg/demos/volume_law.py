"""Compare the two-regime ball volume formula with grid-counted areas.

For each geometry the ball B((x1, 0), r) is measured on an 8-connected
lattice and divided by the regime formula.  The ratio should stay inside a
fixed band as r crosses from the small to the large regime.
"""
from degenlab import metric
from degenlab.geometry import parse_geometry

X1 = 0.05
RADII = (0.005, 0.01, 0.02, 0.04)

for spec in ("finite:1", "Dsigma:0.5", "Fks:1,0.5"):
    g = parse_geometry(spec)
    print(g.name)
    for r in RADII:
        analytic = metric.ball_volume(g, 2, X1, r)
        numeric = metric.ball_oracle(g, (X1, 0.0), r, 201).ball_area((X1, 0.0), r)
        print(f"  r={r:<6} {metric.regime(g, X1, r):>5}  formula={analytic:.3e}  "
              f"grid={numeric:.3e}  ratio={numeric / analytic:.3f}")
