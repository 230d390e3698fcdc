"""Summability verdicts for the lambda_j sequence across the model families."""
from degenlab import classifier as cl
from degenlab.geometry import parse_geometry

for spec in ("finite:1", "Dsigma:0.5", "Fks:1,0.5", "Fks:3,0.5", "Fks:3,1.5"):
    g = parse_geometry(spec)
    rep = cl.classify(g, table_rows=10)
    t = rep.tail
    print(f"{g.name:<28} verdict={rep.verdict:<13} method={t.method:<10} "
          f"B in [{t.B_range[0]:.3g}, {t.B_range[1]:.3g}]  sigma_min={rep.sigma_min:.3g}")
