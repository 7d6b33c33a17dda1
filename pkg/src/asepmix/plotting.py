"""Figure rendering for CLI payloads.

Each report subcommand can mirror its delimited output into a PNG next to
the data file.  Everything draws through the Agg backend so it works
headless; figures are intentionally plain (one axes, labeled columns).
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _col(header, rows, name):
    i = header.index(name)
    return np.array([row[i] for row in rows], dtype=np.float64)


def render(subcommand: str, header: list[str], rows: list, out_png, meta: dict):
    """Draw the standard figure for a subcommand; returns the path or None
    when there is nothing sensible to draw."""
    if not rows:
        return None
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    try:
        if subcommand == "gap":
            ax.semilogy(_col(header, rows, "k"), _col(header, rows, "abs_diff"),
                        "o", label="|formula - exact|")
            ax.set_xlabel("k")
            ax.set_ylabel("absolute difference")
        elif subcommand == "mix-exact":
            t = _col(header, rows, "t_chain")
            ax.semilogy(t, np.maximum(_col(header, rows, "d"), 1e-300), label="d(t)")
            ax.semilogy(t, np.maximum(_col(header, rows, "dbar"), 1e-300),
                        "--", label="pairwise d(t)")
            bound = _col(header, rows, "bound")
            if np.isfinite(bound).any():
                ax.semilogy(t, bound, ":", label="contraction bound")
            ax.set_xlabel("chain time")
            ax.set_ylabel("total variation")
        elif subcommand in ("mix-mc", "sweep"):
            tname = "t_norm" if "t_norm" in header else "t_chain"
            t = _col(header, rows, tname)
            if "N" in header:
                ns = _col(header, rows, "N")
                for nval in np.unique(ns):
                    sel = ns == nval
                    ax.plot(t[sel], _col(header, rows, "tv_upper")[sel], "o-",
                            label=f"upper N={int(nval)}")
                    ax.plot(t[sel], _col(header, rows, "tv_lower")[sel], "s--",
                            label=f"lower N={int(nval)}")
            else:
                ax.plot(t, _col(header, rows, "tv_upper"), "o-", label="upper")
                if "tv_lower" in header:
                    ax.plot(t, _col(header, rows, "tv_lower"), "s--", label="lower")
            ax.set_xlabel(tname)
            ax.set_ylabel("total variation bounds")
        elif subcommand == "hydro":
            xs = np.linspace(0.0, 1.0, len(header) - 1, endpoint=False)
            xs += 0.5 * (xs[1] - xs[0]) if len(xs) > 1 else 0.5
            for row in rows:
                ax.plot(xs, row[1:], label=f"t={row[0]:g}")
            ax.set_xlabel("x")
            ax.set_ylabel("density")
        elif subcommand == "profile":
            t = _col(header, rows, "t_macro")
            ax.plot(t, _col(header, rows, "ell"), label="left frontier")
            ax.plot(t, _col(header, rows, "r"), label="right frontier")
            ax.set_xlabel("macroscopic time")
            ax.set_ylabel("position")
        elif subcommand in ("simulate", "couple"):
            t = _col(header, rows, "t_chain")
            for name in header[1:]:
                if name.startswith(("ell", "r")):
                    ax.plot(t, _col(header, rows, name), label=name)
            ax.set_xlabel("chain time")
            ax.set_ylabel("frontier position")
        elif subcommand == "line":
            t = _col(header, rows, "t_chain")
            ax.plot(t, _col(header, rows, "pos_first"), label="first particle")
            ax.plot(t, _col(header, rows, "pos_last"), label="last particle")
            ax.set_xlabel("chain time")
            ax.set_ylabel("position")
        else:
            return None
        if ax.get_legend_handles_labels()[0]:
            ax.legend(fontsize=8)
        ax.set_title(f"asepmix {subcommand}")
        fig.tight_layout()
        fig.savefig(out_png, dpi=130)
        return out_png
    finally:
        plt.close(fig)
