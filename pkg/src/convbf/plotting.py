"""Figures for the command-line reports (non-interactive backend)."""
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
}


def likelihood_figure(path, trace, wpe_passes=()):
    """Log-likelihood per pass, with the passes that ran a WPE update marked."""
    trace = np.asarray(trace, dtype=float)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(5.0, 3.0))
        ax.plot(np.arange(len(trace)), trace, color="k", lw=1.2)
        # trace[k + 1] is the value after pass k
        marks = [k + 1 for k in wpe_passes if k + 1 < len(trace)]
        if marks:
            ax.plot(marks, trace[marks], "o", ms=3, color="C3", label="WPE pass")
            ax.legend(frameon=False)
        ax.set_xlabel("pass")
        ax.set_ylabel("log-likelihood")
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)
    return path


def metric_bars(path, table):
    """Grouped bars, one group per metric and one bar per estimate.

    ``table`` maps a metric name to a list of ``(label, value)`` pairs.
    """
    metrics = list(table)
    labels = [lab for lab, _ in table[metrics[0]]] if metrics else []
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(
            1, max(1, len(metrics)), figsize=(2.6 * max(1, len(metrics)), 2.8), squeeze=False
        )
        for ax, name in zip(axes[0], metrics):
            values = [v for _, v in table[name]]
            ax.bar(np.arange(len(values)), values, color=[f"C{i}" for i in range(len(values))])
            ax.set_xticks(np.arange(len(values)))
            ax.set_xticklabels(labels, rotation=30, ha="right")
            ax.set_title(name)
            ax.axhline(0.0, color="k", lw=0.6)
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)
    return path
