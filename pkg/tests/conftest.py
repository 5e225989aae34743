import os
import random
import subprocess
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from codetime.hmm import warm_up_kernels


@pytest.fixture(scope="session", autouse=True)
def _compiled_kernels():
    # keep JIT compilation out of individual test timings
    warm_up_kernels()


_WORDS = ["widget", "parser", "cache", "query", "token",
          "handler", "buffer", "stream"]


def _java_body(n_fields: int, salt: int) -> str:
    rnd = random.Random(salt)
    lines = ["package demo;", "", f"public class K{salt % 97} {{"]
    for i in range(n_fields):
        w = rnd.choice(_WORDS)
        lines.append(f"    private int {w}{i} = {rnd.randrange(100)};")
        lines.append(f"    public int get{w.capitalize()}{i}() {{ return {w}{i}; }}")
    lines.append("}")
    return "\n".join(lines) + "\n"


def build_fixture_repo(path: str, n_commits: int = 60, seed: int = 4) -> str:
    """Synthetic single-author Java repository with varied commit gaps,
    some below the squash threshold."""
    rnd = random.Random(seed)
    os.makedirs(path)
    run = lambda *a, **kw: subprocess.run(a, cwd=path, check=True, **kw)
    run("git", "init", "-q", ".")
    run("git", "config", "user.email", "dev1@example.com")
    run("git", "config", "user.name", "Dev One")
    os.makedirs(os.path.join(path, "src"))
    t = 1609750800  # Monday 2021-01-04 09:00 UTC
    for i in range(n_commits):
        fname = os.path.join(path, "src", f"File{i % 7}.java")
        with open(fname, "w") as fh:
            fh.write(_java_body(rnd.randrange(3, 18), i))
        if i % 9 == 0:
            with open(os.path.join(path, "src", f"Extra{i}.java"), "w") as fh:
                fh.write(_java_body(4, 1000 + i))
        run("git", "add", "-A")
        t += rnd.choice([1, 3, 7, 15, 40, 90, 200]) * 60
        env = dict(
            os.environ,
            GIT_AUTHOR_DATE=f"{t} +0000",
            GIT_COMMITTER_DATE=f"{t} +0000",
        )
        subprocess.run(["git", "commit", "-q", "-m", f"change {i}"],
                       cwd=path, env=env, check=True)
    return path


@pytest.fixture(scope="session")
def fixture_repo(tmp_path_factory):
    return build_fixture_repo(str(tmp_path_factory.mktemp("repo") / "fix"))
