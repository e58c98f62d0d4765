"""Collects one pass/fail line per acceptance criterion."""

RESULTS: dict[int, tuple[bool, str]] = {}


def record(n: int, ok: bool, detail: str) -> None:
    RESULTS[n] = (ok, detail)
    print(line(n))


def line(n: int) -> str:
    ok, detail = RESULTS[n]
    return f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"


def lines() -> list[str]:
    return [line(n) for n in sorted(RESULTS)]
