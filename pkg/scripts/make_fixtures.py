"""Write the fixture networks, specs and properties used in the README demos to data/."""
import argparse
import json
from pathlib import Path

from preimage.fixtures import F1_REGION, F1_SPEC, F2_REGION, f1, f2, f2_specs
from preimage.model import save_network
from preimage.oracle import exact_preimage_volume


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default=str(Path(__file__).resolve().parent.parent / "data"))
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    save_network(f1(), out / "f1.json")
    save_network(f1(), out / "f1.nnet")
    save_network(f2(), out / "f2.json")
    save_network(f2(), out / "f2.nnet")
    (out / "f1_spec.json").write_text(json.dumps(F1_SPEC.to_json()) + "\n")
    for k, spec in enumerate(f2_specs()):
        (out / f"f2_spec{k}.json").write_text(json.dumps(spec.to_json()) + "\n")

    # property calibrated at 90% of the exact proportion, so it holds
    frac = exact_preimage_volume(f1(), F1_REGION, F1_SPEC) / F1_REGION.volume
    prop = {"input_set": F1_REGION.to_json(), "output_spec": F1_SPEC.to_json(),
            "p": round(0.9 * frac, 6)}
    (out / "f1_property.json").write_text(json.dumps(prop, indent=2) + "\n")
    # general polytope input set: the part of [0, 2]^2 below x1 + x2 = 3
    spec0 = f2_specs()[0]
    poly = {"box": F2_REGION.to_json(), "halfspaces": [{"a": [-1.0, -1.0], "b": 3.0}]}
    prop = {"input_set": poly, "output_spec": spec0.to_json(), "p": 0.15}
    (out / "f2_polytope_property.json").write_text(json.dumps(prop, indent=2) + "\n")
    print(f"wrote fixtures to {out}")


if __name__ == "__main__":
    main()
