import argparse
import shutil
import sys
from pathlib import Path

from colorama import Fore, Style, init as colorama_init
from dotenv import load_dotenv

from src.config import load_pipeline_config
from src.errors import EstimationError, InputError
from src.orchestrator import PipelineOrchestrator

load_dotenv()

TEMPLATE_DIR = Path(__file__).resolve().parent / "src" / "templates"

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_INPUT = 2
EXIT_ESTIMATION = 3

STEPS_FOR = {
    "simulate": ["simulate"],
    "balance": ["balance"],
    "decompose": ["decompose"],
    "cate": ["cate"],
    "ctfde": ["ctfde"],
    "sensitivity": ["sensitivity"],
    "report": ["balance", "decompose", "cate", "ctfde", "sensitivity"],
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cfa", description="Causal fairness analysis pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    init = sub.add_parser("init", help="Write the schema and pipeline templates")
    init.add_argument("--out", type=str, default=".")

    for name in STEPS_FOR:
        cmd = sub.add_parser(name)
        cmd.add_argument("--config", type=str, default=None)
        cmd.add_argument("--out", type=str, default=None)
        cmd.add_argument("--seed", type=int, default=None)
        cmd.add_argument("--impute", choices=["none", "simple"], default=None)
        cmd.add_argument("--threads", type=int, default=None)
        cmd.add_argument("--scm", type=str, default=None, help="Reference SCM name or YAML path")
        cmd.add_argument("--n", type=int, default=None, help="Rows to draw from the SCM")
    return parser


def write_templates(out_dir: str) -> int:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for source, target in (("schema_template.yaml", "schema.yaml"), ("pipeline_template.yaml", "pipeline.yaml")):
        destination = out / target
        if destination.exists():
            print(f"⚠️ {destination} already exists, leaving it untouched")
            continue
        shutil.copyfile(TEMPLATE_DIR / source, destination)
        print(f"✅ Wrote {destination}")
    return EXIT_OK


def fail(message: str, code: int) -> int:
    print(f"{Fore.RED}❌ {message}{Style.RESET_ALL}", file=sys.stderr)
    return code


def run(argv=None) -> int:
    colorama_init()
    args = build_parser().parse_args(argv)

    if args.command == "init":
        return write_templates(args.out)

    overrides = {
        "out": args.out, "seed": args.seed, "impute": args.impute,
        "threads": args.threads, "scm": args.scm, "n": args.n,
    }
    try:
        config = load_pipeline_config(args.config, overrides)
        if args.command == "simulate" and config.scm is None:
            return fail("simulate needs an SCM (--scm NAME|PATH or 'scm' in the config)", EXIT_INPUT)

        print(f"🚀 {args.command.upper()} -> {config.out}")
        result = PipelineOrchestrator(config, STEPS_FOR[args.command]).run()
    except InputError as e:
        return fail(f"Input error: {e}", EXIT_INPUT)
    except EstimationError as e:
        return fail(f"Estimation error: {e}", EXIT_ESTIMATION)
    except Exception as e:
        return fail(f"Pipeline failed: {type(e).__name__}: {e}", EXIT_FAILURE)

    print(f"\n✅ {len(result['artifacts'])} artifact(s) written to {config.out}")
    return EXIT_OK


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
