"""Print the multiplication-count comparison between the normalized and
self-loop-weighted graph convolutions.

    python3 demos/opcount_table.py
"""
from vgcn.bench import (CountModel, analytic_mult_count, count_model_reduction, format_table,
                        measured_reduction, reduction_percentage)


def main():
    rows = []
    for ratio in (1 / 3, 0.5, 1, 2, 3):
        rows.append({"F'/F": f"{ratio:.2f}",
                     "headline_pct": reduction_percentage(1, ratio),
                     "count_model_F1_pct": count_model_reduction(1, ratio),
                     "count_model_F16_pct": count_model_reduction(16, 16 * ratio)})
    print(format_table(rows, ["F'/F", "headline_pct", "count_model_F1_pct",
                              "count_model_F16_pct"]))
    print()
    m = CountModel(100, 4, 8)
    print(f"M=100 F=4 F'=8: with degree {analytic_mult_count(m)}, without "
          f"{analytic_mult_count(CountModel(100, 4, 8, with_degree=False))}")
    print("measured on a 50-node self-loop graph, F=1:")
    for fp in (1, 2, 3):
        print(f"  F'={fp}: {measured_reduction((50, []), 1, fp):.2f}%")


if __name__ == "__main__":
    main()
