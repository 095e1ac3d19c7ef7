"""Index dataset/ into artifacts/dataset.csv, using every image for training."""
import csv
import os
import sys

ROOT = os.environ.get("AUTOIAD_WORKSPACE", os.getcwd())


def main():
    rows = []
    for dirpath, dirnames, filenames in os.walk(os.path.join(ROOT, "dataset")):
        dirnames.sort()
        rel = os.path.relpath(dirpath, ROOT).replace(os.sep, "/")
        if "ground_truth" in rel.split("/"):
            continue
        for name in sorted(filenames):
            if not name.lower().endswith(".png"):
                continue
            label = 0 if rel.endswith("/good") else 1
            rows.append((rel + "/" + name, "train", label))
    with open(os.path.join(ROOT, "artifacts", "dataset.csv"), "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["image_path", "split", "label"])
        w.writerows(rows)
    print("wrote artifacts/dataset.csv: %d rows" % len(rows))
    return 0


if __name__ == "__main__":
    sys.exit(main())
