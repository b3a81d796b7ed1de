#!/usr/bin/env python3
"""Download the two UCI benchmark files into data/.

Needs outbound network access; in offline environments fetch the files by
hand and drop them at the paths below.

  data/Skin_NonSkin.txt             245057 rows: B G R label(1=skin, 2=non-skin)
  data/breast-cancer-wisconsin.data 699 rows: id, 9 features, class(2=benign, 4=malignant)
"""

import os
import sys
import urllib.request

FILES = {
    "Skin_NonSkin.txt":
        "https://archive.ics.uci.edu/ml/machine-learning-databases/00229/Skin_NonSkin.txt",
    "breast-cancer-wisconsin.data":
        "https://archive.ics.uci.edu/ml/machine-learning-databases/"
        "breast-cancer-wisconsin/breast-cancer-wisconsin.data",
}


def main() -> int:
    out_dir = sys.argv[1] if len(sys.argv) > 1 else "data"
    os.makedirs(out_dir, exist_ok=True)
    status = 0
    for name, url in FILES.items():
        dest = os.path.join(out_dir, name)
        if os.path.exists(dest):
            print(f"{dest}: already present")
            continue
        try:
            print(f"fetching {url}")
            urllib.request.urlretrieve(url, dest)
            print(f"  -> {dest}")
        except Exception as exc:
            print(f"  failed: {exc}", file=sys.stderr)
            status = 1
    return status


if __name__ == "__main__":
    sys.exit(main())
