"""Plot the black-white accuracy gap from a bn_summary.csv.

usage: python tools/plot_bn.py runs/<run>/bn_summary.csv -o bn_gap.png
"""

import argparse
import math

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import pandas as pd  # noqa: E402


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("summary")
    ap.add_argument("-o", "--out", default="bn_gap.png")
    args = ap.parse_args()

    df = pd.read_csv(args.summary, na_values=["undefined", "nan"])
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for arch, g in df.groupby("arch", sort=False):
        g = g.sort_values("p")
        sem = g["diff_std"] / g["defined"].clip(lower=1).map(math.sqrt)
        ax.errorbar(g["p"], g["diff_mean"], yerr=sem, marker="o", capsize=3, label=arch)
    ax.set_xlabel("filling probability p")
    ax.set_ylabel("black - white test accuracy")
    ax.legend()
    fig.tight_layout()
    fig.savefig(args.out, dpi=150)


if __name__ == "__main__":
    main()
