"""Optional figure rendering for sweep results.

Kept separate from the result emission path: matplotlib is imported lazily so
the core library and CSV/JSON outputs carry no plotting dependency.
"""

from __future__ import annotations

from collections import defaultdict

_STYLES = {
    "with_dof": dict(marker="o", linestyle="-", color="tab:blue", label="with DoF completion"),
    "no_dof": dict(marker="s", linestyle="-", color="tab:red", label="without DoF completion"),
}


def render_sweep_figure(rows, sweep_kind: str, path: str) -> str:
    """Render MSE curves (one line per variant, dashed lower bounds) to a PNG."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    by_variant = defaultdict(list)
    for r in rows:
        by_variant[r.variant].append(r)

    fig, ax = plt.subplots(figsize=(6.0, 4.2))
    for variant, rs in sorted(by_variant.items()):
        rs = sorted(rs, key=lambda r: r.sweep_value)
        x = [r.sweep_value for r in rs]
        style = _STYLES.get(variant, dict(marker="x", label=variant))
        ax.semilogy(x, [r.mse_mean for r in rs], **style)
        ax.semilogy(
            x,
            [r.mse_lower_bound for r in rs],
            linestyle="--",
            color=style.get("color", "gray"),
            alpha=0.6,
            label=f"{style.get('label', variant)} (bound)",
        )
    ax.set_xlabel("number of users K" if sweep_kind == "users" else "SINR threshold (dB)")
    ax.set_ylabel("estimation MSE")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(fontsize=9)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
