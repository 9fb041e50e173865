"""Time the hot kernels under numba and under the pure-numpy fallback.

    python benchmarks/compare_backends.py [repeats]
"""
import sys

from crlbdesign.bench import compare_backends


def main(repeats=5):
    res = compare_backends(repeats)
    numba_rows = dict(res.get("numba", []))
    print(f"{'kernel':<28}{'numba s':>12}{'numpy s':>12}{'speedup':>10}")
    for name, slow in res["numpy"]:
        fast = numba_rows.get(name)
        if fast is None:
            print(f"{name:<28}{'n/a':>12}{slow:>12.3g}{'':>10}")
        else:
            print(f"{name:<28}{fast:>12.3g}{slow:>12.3g}{slow / fast:>9.1f}x")


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 5)
