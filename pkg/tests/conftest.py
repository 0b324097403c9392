import sys
import textwrap

import pytest

from deltarenewal.model import parse_config

BUMP_B = "Piecewise(((x-0.2)**8*(1-x)**8*3000, x > 0.2), (0, True))"


def config_text(*, L=1.0, T=2.5, p="0", g="0", a_r="0", b_r="0", c_r="0",
                initial=(), fertility=(), boundary=(), numerics=None) -> str:
    """TOML document; atoms are ``(location, order, coefficient)`` triples."""
    out = [f"[domain]\nL = {L!r}\nT = {T!r}\n", "[rates]"]
    for name, val in (("p", p), ("g", g), ("a_r", a_r), ("b_r", b_r), ("c_r", c_r)):
        out.append(f'{name} = "{val}"')
    for kind, atoms in (("initial", initial), ("fertility", fertility), ("boundary", boundary)):
        for loc, order, coeff in atoms:
            out.append(f"\n[[atoms.{kind}]]\nlocation = {loc!r}\norder = {order}\ncoefficient = {coeff!r}")
    if numerics:
        out.append("\n[numerics]")
        out += [f"{k} = {v!r}" for k, v in numerics.items()]
    return "\n".join(out) + "\n"


def make_cfg(**kw):
    return parse_config(config_text(**kw))


DEMO = dict(L=1.0, T=2.5, p="-0.5 - 0.2*x + 0.1*cos(t)", a_r="x**8*(1-x)**8", b_r=BUMP_B,
            c_r="t**8/(1+t**8)", initial=[(0.25, 0, 1.0)], fertility=[(0.6, 0, 1.0)],
            boundary=[(2.0, 0, 1.0)])

SMOOTH = dict(L=1.0, T=1.5, p="-0.5 - 0.4*x + 0.2*cos(3*t)", g="x**2*t**2*(1 + x)",
              a_r="x**4*(1-x)**2*20 + 0.5*x**5", b_r="3*x**2*(1.2-x)",
              c_r="2*t**4/(1+t**4) + t**3")


def emission_cfg(n, m, T=0.45):
    """One initial atom of order ``m`` at 0.25 and one fertility atom of order ``n`` at 0.6."""
    return make_cfg(L=1.0, T=T, p="-0.5 - 0.4*x + 0.2*cos(3*t) + 0.3*x*t",
                    c_r="t**8/(1+t**8)", initial=[(0.25, m, 1.0)], fertility=[(0.6, n, 1.0)])


@pytest.fixture(scope="session")
def demo_cfg():
    return make_cfg(**DEMO)


@pytest.fixture(scope="session")
def smooth_cfg():
    return make_cfg(**SMOOTH)


@pytest.fixture(scope="session")
def demo_solution(demo_cfg):
    from deltarenewal.hybrid import solve

    return solve(demo_cfg)


def write(tmp_path, text, name="cfg.toml"):
    path = tmp_path / name
    path.write_text(textwrap.dedent(text))
    return path


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if not mod or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.verdict_line(k))
