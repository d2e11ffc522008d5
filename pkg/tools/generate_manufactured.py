#!/usr/bin/env python3
"""Derive the benchmark exact solutions and their source terms with sympy
and emit them as plain numpy code.

The output is committed as src/vmsflow/_manufactured.py; run this script
manually after editing the symbolic definitions:

    python3 tools/generate_manufactured.py

Solenoidality of each velocity field and the vanishing Taylor-Green source
are asserted symbolically here, so the committed module never contains a
field pair that fails them.
"""

from pathlib import Path

import sympy as sp
from sympy.printing.numpy import NumPyPrinter

X, Y, T, NU, A1, A2 = sp.symbols("x y t nu a1 a2", real=True)

OUT = Path(__file__).resolve().parent.parent / "src" / "vmsflow" / "_manufactured.py"

HEADER = '''"""Exact benchmark fields and consistent source terms (plain numpy).

Generated by tools/generate_manufactured.py; do not edit by hand.
All functions broadcast over array inputs; gradient functions return
row-major nested pairs ((d1/dx, d1/dy), (d2/dx, d2/dy)).
"""

import numpy as np

'''


def pycode(expr):
    code = NumPyPrinter().doprint(sp.expand(expr))
    return code.replace("numpy.", "np.")


def emit_fn(name, args, exprs, doc):
    body = pycode(exprs) if isinstance(exprs, sp.Expr) else None
    lines = [f"def {name}({', '.join(args)}):"]
    lines.append(f'    """{doc}"""')
    if body is not None:
        lines.append(f"    return {body}")
    elif isinstance(exprs[0], tuple):
        rows = [",\n            ".join(pycode(e) for e in row) for row in exprs]
        joined = "),\n           (".join(rows)
        lines.append(f"    return (({joined}))")
    else:
        joined = ",\n            ".join(pycode(e) for e in exprs)
        lines.append(f"    return ({joined})")
    return "\n".join(lines) + "\n\n\n"


def gradients(u1, u2):
    return ((sp.diff(u1, X), sp.diff(u1, Y)),
            (sp.diff(u2, X), sp.diff(u2, Y)))


def viscous_divergence(u1, u2, nu):
    """Components of div(2 nu sym grad u)."""
    s11, s12 = sp.diff(u1, X), (sp.diff(u1, Y) + sp.diff(u2, X)) / 2
    s22 = sp.diff(u2, Y)
    return (sp.diff(2 * nu * s11, X) + sp.diff(2 * nu * s12, Y),
            sp.diff(2 * nu * s12, X) + sp.diff(2 * nu * s22, Y))


def build_cavity():
    # classical regularized lid-driven cavity stream function
    # psi = 8 (x^4 - 2x^3 + x^2)(y^4 - y^2); lid speed 16 x^2 (1-x)^2
    psi = 8 * (X ** 4 - 2 * X ** 3 + X ** 2) * (Y ** 4 - Y ** 2)
    u1, u2 = sp.diff(psi, Y), -sp.diff(psi, X)
    p = sp.sin(sp.pi * X) * sp.sin(sp.pi * Y)

    assert sp.simplify(sp.diff(u1, X) + sp.diff(u2, Y)) == 0
    assert sp.expand(u1.subs(Y, 1) - 16 * X ** 2 * (1 - X) ** 2) == 0
    p_mean = sp.integrate(sp.integrate(p, (X, 0, 1)), (Y, 0, 1))
    assert p_mean == 4 / sp.pi ** 2

    visc = viscous_divergence(u1, u2, NU)
    conv_oseen = (A1 * sp.diff(u1, X) + A2 * sp.diff(u1, Y),
                  A1 * sp.diff(u2, X) + A2 * sp.diff(u2, Y))
    conv_ns = (u1 * sp.diff(u1, X) + u2 * sp.diff(u1, Y),
               u1 * sp.diff(u2, X) + u2 * sp.diff(u2, Y))
    grad_p = (sp.diff(p, X), sp.diff(p, Y))

    parts = [emit_fn("cavity_u", ("x", "y"), (u1, u2),
                     "Velocity of the regularized lid-driven cavity.")]
    parts.append(emit_fn("cavity_grad_u", ("x", "y"), gradients(u1, u2),
                         "Velocity gradient rows of the cavity field."))
    parts.append(emit_fn("cavity_p", ("x", "y"), p,
                         "Cavity pressure (mean 4/pi^2 over the unit square)."))
    parts.append(emit_fn("cavity_grad_p", ("x", "y"), grad_p,
                         "Cavity pressure gradient."))
    parts.append(emit_fn("cavity_visc_div", ("x", "y", "nu"), visc,
                         "div(2 nu sym grad u) for the cavity velocity."))
    parts.append(emit_fn(
        "cavity_f_oseen", ("x", "y", "nu", "a1", "a2"),
        (conv_oseen[0] - visc[0] + grad_p[0],
         conv_oseen[1] - visc[1] + grad_p[1]),
        "Source a.grad(u) - div(2 nu sym grad u) + grad(p)."))
    parts.append(emit_fn(
        "cavity_f_ns", ("x", "y", "nu"),
        (conv_ns[0] - visc[0] + grad_p[0],
         conv_ns[1] - visc[1] + grad_p[1]),
        "Source u.grad(u) - div(2 nu sym grad u) + grad(p)."))
    parts.append("CAVITY_P_MEAN = 4 / np.pi ** 2\n\n\n")
    return "".join(parts)


def build_taylor_green():
    decay = sp.exp(-2 * NU * T)
    u1 = sp.sin(X) * sp.cos(Y) * decay
    u2 = -sp.cos(X) * sp.sin(Y) * decay
    # this sign of p closes the momentum equation with zero source
    p = sp.Rational(1, 4) * (sp.cos(2 * X) + sp.cos(2 * Y)) * decay ** 2

    assert sp.simplify(sp.diff(u1, X) + sp.diff(u2, Y)) == 0
    visc = viscous_divergence(u1, u2, NU)
    f = (sp.diff(u1, T) + u1 * sp.diff(u1, X) + u2 * sp.diff(u1, Y)
         - visc[0] + sp.diff(p, X),
         sp.diff(u2, T) + u1 * sp.diff(u2, X) + u2 * sp.diff(u2, Y)
         - visc[1] + sp.diff(p, Y))
    assert sp.simplify(f[0]) == 0 and sp.simplify(f[1]) == 0
    energy = sp.integrate(sp.integrate(u1 ** 2 + u2 ** 2,
                                       (X, -sp.pi, sp.pi)),
                          (Y, -sp.pi, sp.pi))
    assert sp.simplify(energy - 2 * sp.pi ** 2 * sp.exp(-4 * NU * T)) == 0

    parts = [emit_fn("tg_u", ("x", "y", "t", "nu"), (u1, u2),
                     "Taylor-Green vortex velocity on [-pi, pi]^2.")]
    parts.append(emit_fn("tg_grad_u", ("x", "y", "t", "nu"),
                         gradients(u1, u2),
                         "Velocity gradient rows of the Taylor-Green field."))
    parts.append(emit_fn("tg_p", ("x", "y", "t", "nu"), p,
                         "Taylor-Green pressure (zero mean)."))
    parts.append(emit_fn("tg_grad_p", ("x", "y", "t", "nu"),
                         (sp.diff(p, X), sp.diff(p, Y)),
                         "Taylor-Green pressure gradient."))
    parts.append(emit_fn("tg_visc_div", ("x", "y", "t", "nu"), visc,
                         "div(2 nu sym grad u) for the Taylor-Green field."))
    parts.append(emit_fn("tg_f", ("x", "y", "t", "nu"),
                         (sp.simplify(f[0]), sp.simplify(f[1])),
                         "Taylor-Green source term (identically zero)."))
    parts.append(
        "def tg_kinetic_energy(t, nu):\n"
        '    """(1/2) L2 norm squared of the exact velocity: '
        'pi^2 e^{-4 nu t}."""\n'
        "    return np.pi ** 2 * np.exp(-4 * nu * t)\n"
    )
    return "".join(parts)


def main():
    text = HEADER + build_cavity() + build_taylor_green()
    OUT.write_text(text, encoding="utf-8")
    print(f"wrote {OUT}")


if __name__ == "__main__":
    main()
