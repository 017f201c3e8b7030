"""Grid-refinement study for the discrete field-equation residuals.

Samples an exact stationary configuration of the contact structure onto a
ladder of square grids and prints the max-norm of every residual slot plus
the observed convergence order between consecutive grids.  The interior
stencils are second order, so the orders should sit near 2.

Usage:
    python scripts/convergence_study.py [--k 1] [--grids 17,33,65,129]
"""

import argparse
import math

from jacobisigma import expr as ex
from jacobisigma import sigma as sg


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--k", type=int, default=1,
                    help="contact index (chart has 2k+1 coordinates)")
    ap.add_argument("--grids", default="17,33,65,129",
                    help="comma-separated square grid sizes")
    ap.add_argument("--variant", default="homogeneous",
                    choices=("homogeneous", "reduced"))
    args = ap.parse_args()

    J = sg.contact_pair(args.k)
    F = sg.contact_solution(args.k)
    if args.variant == "reduced":
        inv_s = ex.div(ex.ONE, F.s)
        F = sg.FieldConfiguration.build(
            F.chart, dict(F.x), s=F.s,
            pi={n: w.scale(inv_s) for n, w in F.pi.items()}, z=F.z)

    sizes = [int(s) for s in args.grids.split(",")]
    prev = None
    print(f"contact k={args.k}, variant={args.variant}")
    print(f"{'grid':>9}  {'max residual':>13}  {'order':>6}   worst slot")
    for nn in sizes:
        D = sg.sample_config(F, sg.SurfaceGrid(nn, nn))
        rep = sg.el_residual(J, D, variant=args.variant)
        worst = max(rep.norms, key=rep.norms.get)
        order = "" if prev is None else f"{math.log2(prev / rep.max_dev):6.2f}"
        print(f"{nn:>4} x {nn:<4} {rep.max_dev:13.3e}  {order:>6}   {worst}")
        prev = rep.max_dev


if __name__ == "__main__":
    main()
