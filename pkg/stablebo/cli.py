"""명령행 진입점: solve / matrix / oracle / gen / scatter."""

import argparse
import json
import logging
import os
import sys

from . import config
from .certifier import BackendError, CertifierCapacityError
from .harness import (
    load_instances,
    load_record,
    load_spec,
    matrix_summary,
    run_bo_only,
    run_matrix,
    run_solve,
    scatter_export,
)
from .instances import KINDS, gen_instance
from .model import dump_model, save_model
from .oracle import grid_oracle

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_TIMEOUT = 3
EXIT_BACKEND = 4
EXIT_INTERNAL = 5


def _on_off(value: str) -> bool:
    if value not in ("on", "off"):
        raise argparse.ArgumentTypeError("on 또는 off")
    return value == "on"


def _widths(value: str) -> list[int]:
    try:
        return [int(w) for w in value.split(",") if w]
    except ValueError:
        raise argparse.ArgumentTypeError(f"쉼표로 구분한 정수 목록이어야 함: {value!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stablebo", description="구간 안정 최적값 인증 솔버")
    parser.add_argument("-v", "--verbose", action="store_true", help="DEBUG 로그 출력")
    parser.add_argument("-q", "--quiet", action="store_true", help="경고 이상만 출력")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="ε-정확 max-min 경계와 증인 계산")
    p.add_argument("--spec", required=True)
    p.add_argument("--model", help="명세의 model 경로 대신 사용할 모델 파일")
    p.add_argument("--eps", dest="epsilon")
    p.add_argument("--delta")
    p.add_argument("--bo-candidates", type=_on_off)
    p.add_argument("--bo-counterexamples", type=_on_off)
    p.add_argument("--seed", type=int)
    p.add_argument("--backend", choices=("builtin", "external"))
    p.add_argument("--solver-cmd")
    p.add_argument("--relu-cap", type=int)
    p.add_argument("--solve-timeout-s", type=float)
    p.add_argument("--budget-s", type=float)
    p.add_argument("--no-timings", action="store_true")
    p.add_argument("--no-reference", action="store_true", help="참고용 기본 BO 실행 생략")
    p.add_argument("--csv", help="지표 CSV 행을 쓸 경로")
    p.add_argument("--out", required=True)

    p = sub.add_parser("matrix", help="인스턴스별 (c, d) 2×2 실험 행렬")
    p.add_argument("--instances", required=True, help="문제 명세 JSON 디렉터리")
    p.add_argument("--out", required=True)
    p.add_argument("--budget-s", type=float, default=config.MATRIX_BUDGET_S)
    p.add_argument("--workers", type=int, default=config.MATRIX_WORKERS)
    p.add_argument("--no-timings", action="store_true")

    p = sub.add_parser("oracle", help="격자 전수 탐색 오라클")
    p.add_argument("--spec", required=True)
    p.add_argument("--model")
    p.add_argument("--pitch", type=float, default=1e-3)

    p = sub.add_parser("gen", help="벤치마크 인스턴스 생성")
    p.add_argument("--kind", required=True, choices=KINDS)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n", type=int, default=2)
    p.add_argument("--widths", type=_widths, default=[6])
    p.add_argument("--out", required=True)
    p.add_argument("--spec-out", help="정의역과 가드를 담은 문제 명세도 함께 씀")
    p.add_argument("--radius", default="1/10")

    p = sub.add_parser("scatter", help="(후보, 반례) 거리/값 차이 CSV")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--run", help="solve 결과 JSON")
    src.add_argument("--spec", help="이 명세를 BO 전용 모드로 풀어서 내보냄")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    return parser


def _overrides(args) -> dict:
    return {
        "model": os.path.abspath(args.model) if getattr(args, "model", None) else None,
        "epsilon": getattr(args, "epsilon", None),
        "delta": getattr(args, "delta", None),
        "use_bo_candidates": getattr(args, "bo_candidates", None),
        "use_bo_counterexamples": getattr(args, "bo_counterexamples", None),
        "seed": getattr(args, "seed", None),
        "backend": getattr(args, "backend", None),
        "solver_cmd": getattr(args, "solver_cmd", None),
        "relu_cap": getattr(args, "relu_cap", None),
        "timeout_s": getattr(args, "solve_timeout_s", None),
        "budget_s": getattr(args, "budget_s", None),
    }


def cmd_solve(args) -> int:
    spec = load_spec(args.spec, _overrides(args))
    result, indicators = run_solve(
        spec,
        out=args.out,
        csv_path=args.csv,
        timings=not args.no_timings,
        with_reference=not args.no_reference,
    )
    print(f"T = {result.T} (≈ {float(result.T):.6g}), 증인 = {[str(v) for v in result.witness or ()]}")
    print(f"결과 저장: {args.out}")
    return EXIT_OK


def cmd_matrix(args) -> int:
    instances = load_instances(args.instances)
    print(f"인스턴스 {len(instances)}개 × 4 조합 실행 중...")
    table = run_matrix(instances, args.out, args.budget_s, args.workers, not args.no_timings)
    print(f"완료! {len(table)}행 저장됨: {args.out}")
    print(matrix_summary(table).to_string(index=False))
    return EXIT_OK


def cmd_oracle(args) -> int:
    spec = load_spec(args.spec, _overrides(args))
    value, argmax, error = grid_oracle(spec.model, spec.guard, spec.domain, args.pitch)
    print(json.dumps({"value": value, "argmax": list(argmax), "error_bound": error}))
    return EXIT_OK


def cmd_gen(args) -> int:
    model, domain = gen_instance(args.kind, args.n, args.widths, args.seed)
    save_model(model, args.out)
    print(f"모델 저장: {args.out} (ReLU {model.relu_count}개)")
    if args.spec_out:
        spec = {
            "model": os.path.relpath(os.path.abspath(args.out), os.path.dirname(os.path.abspath(args.spec_out))),
            "domain": domain.to_dict(),
            "guard": {"kind": "abs", "radius": args.radius},
            "seed": args.seed,
        }
        os.makedirs(os.path.dirname(os.path.abspath(args.spec_out)), exist_ok=True)
        with open(args.spec_out, "w", encoding="utf-8") as f:
            json.dump(spec, f, indent=2)
            f.write("\n")
        print(f"명세 저장: {args.spec_out}")
    logger.debug("생성 모델: %s", dump_model(model))
    return EXIT_OK


def cmd_scatter(args) -> int:
    if args.run:
        record = load_record(args.run)
    else:
        record = run_bo_only(load_spec(args.spec, {"seed": args.seed}))
    df = scatter_export(record, args.out)
    print(f"쌍 {len(df)}개 저장: {args.out}")
    return EXIT_OK


COMMANDS = {
    "solve": cmd_solve,
    "matrix": cmd_matrix,
    "oracle": cmd_oracle,
    "gen": cmd_gen,
    "scatter": cmd_scatter,
}


def _fail(error: Exception, code: int) -> int:
    record = {"error": type(error).__name__, "message": str(error), "exit_code": code}
    print(json.dumps(record, ensure_ascii=False), file=sys.stderr)
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, format=config.LOG_FORMAT, stream=sys.stderr)
    try:
        return COMMANDS[args.command](args)
    except TimeoutError as e:
        return _fail(e, EXIT_TIMEOUT)
    except (BackendError, CertifierCapacityError) as e:
        return _fail(e, EXIT_BACKEND)
    except (ValueError, OSError) as e:
        return _fail(e, EXIT_INPUT)
    except ArithmeticError as e:
        logger.exception("내부 오류: %s", e)
        return _fail(e, EXIT_INTERNAL)
