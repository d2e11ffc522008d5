"""Exact benchmark fields and consistent source terms (plain numpy).

Generated by tools/generate_manufactured.py; do not edit by hand.
All functions broadcast over array inputs; gradient functions return
row-major nested pairs ((d1/dx, d1/dy), (d2/dx, d2/dy)).
"""

import numpy as np

def cavity_u(x, y):
    """Velocity of the regularized lid-driven cavity."""
    return (32*x**4*y**3 - 16*x**4*y - 64*x**3*y**3 + 32*x**3*y + 32*x**2*y**3 - 16*x**2*y,
            -32*x**3*y**4 + 32*x**3*y**2 + 48*x**2*y**4 - 48*x**2*y**2 - 16*x*y**4 + 16*x*y**2)


def cavity_grad_u(x, y):
    """Velocity gradient rows of the cavity field."""
    return ((128*x**3*y**3 - 64*x**3*y - 192*x**2*y**3 + 96*x**2*y + 64*x*y**3 - 32*x*y,
            96*x**4*y**2 - 16*x**4 - 192*x**3*y**2 + 32*x**3 + 96*x**2*y**2 - 16*x**2),
           (-96*x**2*y**4 + 96*x**2*y**2 + 96*x*y**4 - 96*x*y**2 - 16*y**4 + 16*y**2,
            -128*x**3*y**3 + 64*x**3*y + 192*x**2*y**3 - 96*x**2*y - 64*x*y**3 + 32*x*y))


def cavity_p(x, y):
    """Cavity pressure (mean 4/pi^2 over the unit square)."""
    return np.sin(np.pi*x)*np.sin(np.pi*y)


def cavity_grad_p(x, y):
    """Cavity pressure gradient."""
    return (np.pi*np.sin(np.pi*y)*np.cos(np.pi*x),
            np.pi*np.sin(np.pi*x)*np.cos(np.pi*y))


def cavity_visc_div(x, y, nu):
    """div(2 nu sym grad u) for the cavity velocity."""
    return (192*nu*x**4*y - 384*nu*x**3*y + 384*nu*x**2*y**3 - 384*nu*x*y**3 + 192*nu*x*y + 64*nu*y**3 - 32*nu*y,
            -384*nu*x**3*y**2 + 64*nu*x**3 + 576*nu*x**2*y**2 - 96*nu*x**2 - 192*nu*x*y**4 + 32*nu*x + 96*nu*y**4 - 96*nu*y**2)


def cavity_f_oseen(x, y, nu, a1, a2):
    """Source a.grad(u) - div(2 nu sym grad u) + grad(p)."""
    return (128*a1*x**3*y**3 - 64*a1*x**3*y - 192*a1*x**2*y**3 + 96*a1*x**2*y + 64*a1*x*y**3 - 32*a1*x*y + 96*a2*x**4*y**2 - 16*a2*x**4 - 192*a2*x**3*y**2 + 32*a2*x**3 + 96*a2*x**2*y**2 - 16*a2*x**2 - 192*nu*x**4*y + 384*nu*x**3*y - 384*nu*x**2*y**3 + 384*nu*x*y**3 - 192*nu*x*y - 64*nu*y**3 + 32*nu*y + np.pi*np.sin(np.pi*y)*np.cos(np.pi*x),
            -96*a1*x**2*y**4 + 96*a1*x**2*y**2 + 96*a1*x*y**4 - 96*a1*x*y**2 - 16*a1*y**4 + 16*a1*y**2 - 128*a2*x**3*y**3 + 64*a2*x**3*y + 192*a2*x**2*y**3 - 96*a2*x**2*y - 64*a2*x*y**3 + 32*a2*x*y + 384*nu*x**3*y**2 - 64*nu*x**3 - 576*nu*x**2*y**2 + 96*nu*x**2 + 192*nu*x*y**4 - 32*nu*x - 96*nu*y**4 + 96*nu*y**2 + np.pi*np.sin(np.pi*x)*np.cos(np.pi*y))


def cavity_f_ns(x, y, nu):
    """Source u.grad(u) - div(2 nu sym grad u) + grad(p)."""
    return (-192*nu*x**4*y + 384*nu*x**3*y - 384*nu*x**2*y**3 + 384*nu*x*y**3 - 192*nu*x*y - 64*nu*y**3 + 32*nu*y + 1024*x**7*y**6 - 512*x**7*y**4 + 512*x**7*y**2 - 3584*x**6*y**6 + 1792*x**6*y**4 - 1792*x**6*y**2 + 4608*x**5*y**6 - 2304*x**5*y**4 + 2304*x**5*y**2 - 2560*x**4*y**6 + 1280*x**4*y**4 - 1280*x**4*y**2 + 512*x**3*y**6 - 256*x**3*y**4 + 256*x**3*y**2 + np.pi*np.sin(np.pi*y)*np.cos(np.pi*x),
            384*nu*x**3*y**2 - 64*nu*x**3 - 576*nu*x**2*y**2 + 96*nu*x**2 + 192*nu*x*y**4 - 32*nu*x - 96*nu*y**4 + 96*nu*y**2 + 1024*x**6*y**7 - 1536*x**6*y**5 + 512*x**6*y**3 - 3072*x**5*y**7 + 4608*x**5*y**5 - 1536*x**5*y**3 + 3584*x**4*y**7 - 5376*x**4*y**5 + 1792*x**4*y**3 - 2048*x**3*y**7 + 3072*x**3*y**5 - 1024*x**3*y**3 + 512*x**2*y**7 - 768*x**2*y**5 + 256*x**2*y**3 + np.pi*np.sin(np.pi*x)*np.cos(np.pi*y))


CAVITY_P_MEAN = 4 / np.pi ** 2


def tg_u(x, y, t, nu):
    """Taylor-Green vortex velocity on [-pi, pi]^2."""
    return (np.exp(-2*nu*t)*np.sin(x)*np.cos(y),
            -np.exp(-2*nu*t)*np.sin(y)*np.cos(x))


def tg_grad_u(x, y, t, nu):
    """Velocity gradient rows of the Taylor-Green field."""
    return ((np.exp(-2*nu*t)*np.cos(x)*np.cos(y),
            -np.exp(-2*nu*t)*np.sin(x)*np.sin(y)),
           (np.exp(-2*nu*t)*np.sin(x)*np.sin(y),
            -np.exp(-2*nu*t)*np.cos(x)*np.cos(y)))


def tg_p(x, y, t, nu):
    """Taylor-Green pressure (zero mean)."""
    return (1/4)*np.exp(-4*nu*t)*np.cos(2*x) + (1/4)*np.exp(-4*nu*t)*np.cos(2*y)


def tg_grad_p(x, y, t, nu):
    """Taylor-Green pressure gradient."""
    return (-1/2*np.exp(-4*nu*t)*np.sin(2*x),
            -1/2*np.exp(-4*nu*t)*np.sin(2*y))


def tg_visc_div(x, y, t, nu):
    """div(2 nu sym grad u) for the Taylor-Green field."""
    return (-2*nu*np.exp(-2*nu*t)*np.sin(x)*np.cos(y),
            2*nu*np.exp(-2*nu*t)*np.sin(y)*np.cos(x))


def tg_f(x, y, t, nu):
    """Taylor-Green source term (identically zero)."""
    return (0,
            0)


def tg_kinetic_energy(t, nu):
    """(1/2) L2 norm squared of the exact velocity: pi^2 e^{-4 nu t}."""
    return np.pi ** 2 * np.exp(-4 * nu * t)
