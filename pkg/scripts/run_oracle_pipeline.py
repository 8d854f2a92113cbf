#!/usr/bin/env python3
"""Generate a synthetic corpus and run the full pipeline with the oracle scorer.

Usage: python scripts/run_oracle_pipeline.py [--seed 7] [--n-schemas 10]
       [--n-queries 100] [--out-dir out/oracle_demo]
"""

import argparse
from pathlib import Path

from structsql.cli import PipelineConfig, run_pipeline
from structsql.synth import generate_synthetic_corpus, write_corpus


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seed", type=int, default=7)
    parser.add_argument("--n-schemas", type=int, default=10)
    parser.add_argument("--n-queries", type=int, default=100)
    parser.add_argument("--beam", type=int, default=5)
    parser.add_argument("--out-dir", default="out/oracle_demo")
    args = parser.parse_args()

    out = Path(args.out_dir)
    corpus = generate_synthetic_corpus(
        args.seed, args.n_schemas, args.n_queries, with_values=True
    )
    paths = write_corpus(corpus, out / "data")
    config = PipelineConfig(
        data=str(paths["examples"]),
        tables=str(paths["tables"]),
        content=str(paths["content"]) if "content" in paths else None,
        out_dir=str(out / "run"),
        scorer="oracle",
        beam_width=args.beam,
        max_len=200,
        seed=args.seed,
    )
    report = run_pipeline(config)
    print(report.summary())
    print(f"\nartifacts under {out / 'run'}")


if __name__ == "__main__":
    main()
