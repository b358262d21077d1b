"""Run the size/power configs and write one CSV + JSON per table.

    python3 scripts/run_tables.py                       # every configs/*.cfg, full replications
    python3 scripts/run_tables.py --replications 50 table1_formula
"""
import argparse
import logging
import pathlib
import time

from kronlss.harness import SimulationConfig, run_simulation

ROOT = pathlib.Path(__file__).resolve().parent.parent


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("names", nargs="*", help="config stems under configs/ (default: all)")
    ap.add_argument("--replications", type=int)
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--out-dir", default=str(ROOT / "results"))
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")
    out = pathlib.Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = [ROOT / "configs" / f"{n}.cfg" for n in args.names] or sorted((ROOT / "configs").glob("*.cfg"))
    for path in paths:
        cfg = SimulationConfig.load(path)
        if args.replications:
            cfg.replications = args.replications
        t0 = time.perf_counter()
        tab = run_simulation(cfg, threads=args.threads, progress=lambda k: logging.info("%s: %s done", path.stem, k))
        (out / f"{path.stem}.csv").write_text(tab.to_csv())
        (out / f"{path.stem}.json").write_text(tab.to_json(cfg))
        logging.info("%s finished in %.0fs", path.stem, time.perf_counter() - t0)


if __name__ == "__main__":
    main()
