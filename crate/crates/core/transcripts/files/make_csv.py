"""Index an MVTec-layout dataset under dataset/ into artifacts/dataset.csv."""
import csv
import os
import sys

ROOT = os.environ.get("AUTOIAD_WORKSPACE", os.getcwd())
DATA = "dataset"
IMAGE_EXT = (".png", ".jpg", ".jpeg", ".bmp")


def images(rel_dir):
    host = os.path.join(ROOT, rel_dir)
    if not os.path.isdir(host):
        return []
    return sorted(f for f in os.listdir(host) if f.lower().endswith(IMAGE_EXT))


def main():
    rows = []
    for name in images(os.path.join(DATA, "train", "good")):
        rows.append(("/".join([DATA, "train", "good", name]), "train", 0, ""))
    test_dir = os.path.join(ROOT, DATA, "test")
    kinds = sorted(os.listdir(test_dir)) if os.path.isdir(test_dir) else []
    for kind in kinds:
        label = 0 if kind == "good" else 1
        for name in images(os.path.join(DATA, "test", kind)):
            mask = ""
            if label:
                stem = os.path.splitext(name)[0]
                cand = "/".join([DATA, "ground_truth", kind, stem + "_mask.png"])
                if os.path.isfile(os.path.join(ROOT, cand)):
                    mask = cand
            rows.append(("/".join([DATA, "test", kind, name]), "test", label, mask))
    if not rows:
        print("no images found under dataset/", file=sys.stderr)
        return 1
    os.makedirs(os.path.join(ROOT, "artifacts"), exist_ok=True)
    with open(os.path.join(ROOT, "artifacts", "dataset.csv"), "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["image_path", "split", "label", "mask_path"])
        w.writerows(rows)
    n_train = sum(1 for r in rows if r[1] == "train")
    n_anom = sum(r[2] for r in rows)
    print("wrote artifacts/dataset.csv: %d rows (%d train, %d anomalous)" % (len(rows), n_train, n_anom))
    return 0


if __name__ == "__main__":
    sys.exit(main())
