"""Reference runner shim.

Reads one job document from stdin, runs every test against the candidate and
writes one JSON result line per test to stdout, followed by a summary record.

Exit codes: 0 protocol complete, 1 internal failure, 2 malformed job.
"""

import io
import json
import math
import os
import re
import signal
import subprocess
import sys
import time
import traceback

STATUSES = ("pass", "wrong_answer", "runtime_error", "timeout", "setup_error")
MAX_CAPTURE = 1 << 20
DIAG_LIMIT = 16 * 1024
TOL = 1e-6

GUARD_SOURCE = r'''
import os, sys

def install(workdir):
    root = os.path.realpath(workdir)

    def inside(path):
        try:
            p = os.path.realpath(os.fsdecode(path))
        except Exception:
            return False
        return p == root or p.startswith(root + os.sep)

    write_flags = os.O_WRONLY | os.O_RDWR | os.O_CREAT | os.O_APPEND | os.O_TRUNC
    path_events = {"os.remove", "os.rmdir", "os.mkdir", "os.chmod", "os.chown",
                   "os.link", "os.symlink", "os.truncate", "os.utime", "shutil.rmtree",
                   "shutil.copyfile", "shutil.move"}
    two_path_events = {"os.rename"}
    blocked = {"socket.connect", "socket.bind", "socket.getaddrinfo", "socket.sendto",
               "socket.gethostbyname", "subprocess.Popen", "os.system", "os.exec",
               "os.fork", "os.forkpty", "os.posix_spawn", "os.spawn", "os.kill",
               "os.killpg", "ctypes.dlopen", "ctypes.cdata"}

    def hook(event, args):
        if event in blocked:
            raise PermissionError("sandbox: %s is not permitted" % event)
        if event == "open":
            path, mode, flags = (list(args) + [None, None, None])[:3]
            if isinstance(path, int) or path is None:
                return
            writing = False
            if isinstance(mode, str) and any(c in mode for c in "wax+"):
                writing = True
            if isinstance(flags, int) and flags & write_flags:
                writing = True
            if writing and not inside(path):
                raise PermissionError("sandbox: write outside working directory: %s" % (path,))
        elif event in path_events:
            if args and not isinstance(args[0], int) and not inside(args[0]):
                raise PermissionError("sandbox: %s outside working directory" % event)
        elif event in two_path_events:
            if any(not isinstance(a, int) and not inside(a) for a in args[:2]):
                raise PermissionError("sandbox: %s outside working directory" % event)

    sys.addaudithook(hook)
'''


class TestTimeout(BaseException):
    pass


class MalformedJob(Exception):
    pass


def emit(out, record):
    out.write(json.dumps(record, sort_keys=True, ensure_ascii=False) + "\n")
    out.flush()


def clip(text, limit=DIAG_LIMIT):
    if len(text) <= limit:
        return text
    return text[: limit // 2] + "\n...[truncated]...\n" + text[-limit // 2 :]


def normalize(text):
    text = text.replace("\r\n", "\n").replace("\r", "\n")
    lines = [line.rstrip() for line in text.split("\n")]
    while lines and lines[-1] == "":
        lines.pop()
    return "\n".join(lines)


def to_jsonable(value):
    if isinstance(value, bool) or value is None or isinstance(value, (int, str)):
        return value
    if isinstance(value, float):
        if math.isfinite(value):
            return value
        return repr(value)
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    return repr(value)


def values_match(actual, expected):
    if isinstance(actual, bool) or isinstance(expected, bool):
        return type(actual) is type(expected) and actual == expected
    if isinstance(actual, (int, float)) and isinstance(expected, (int, float)):
        return abs(actual - expected) <= TOL * max(1.0, abs(expected))
    if isinstance(actual, list) and isinstance(expected, list):
        return len(actual) == len(expected) and all(values_match(a, e) for a, e in zip(actual, expected))
    if isinstance(actual, dict) and isinstance(expected, dict):
        return actual.keys() == expected.keys() and all(values_match(actual[k], expected[k]) for k in actual)
    return actual == expected


def validate(job):
    if not isinstance(job, dict):
        raise MalformedJob("job must be an object")
    for key in ("source", "mode", "tests", "workdir"):
        if key not in job:
            raise MalformedJob("missing field %r" % key)
    if job["mode"] not in ("function_level", "full_program"):
        raise MalformedJob("unknown mode %r" % job["mode"])
    if job["mode"] == "function_level" and not job.get("entrypoint"):
        raise MalformedJob("function_level job needs an entrypoint")
    if not isinstance(job["tests"], list) or not job["tests"]:
        raise MalformedJob("tests must be a non-empty list")
    want = "function_call" if job["mode"] == "function_level" else "stdio"
    seen = set()
    for t in job["tests"]:
        if not isinstance(t, dict) or "id" not in t or "expected" not in t or "input" not in t:
            raise MalformedJob("test entries need id, input and expected")
        if t.get("kind") != want:
            raise MalformedJob("test %r has kind %r in %s job" % (t["id"], t.get("kind"), job["mode"]))
        if t["id"] in seen:
            raise MalformedJob("duplicate test id %r" % t["id"])
        seen.add(t["id"])
        if want == "function_call" and not isinstance(t["input"], list):
            raise MalformedJob("test %r input must be a list" % t["id"])
        if want == "stdio" and not (isinstance(t["input"], str) and isinstance(t["expected"], str)):
            raise MalformedJob("test %r input/expected must be strings" % t["id"])


def timeout_seconds(test):
    return max(int(test.get("timeout_ms") or 10000), 1) / 1000.0


def function_name(entrypoint):
    m = re.search(r"def\s+([A-Za-z_][A-Za-z0-9_]*)", entrypoint)
    return m.group(1) if m else entrypoint.strip()


def set_memory_limit(limit):
    if not limit:
        return
    try:
        import resource

        resource.setrlimit(resource.RLIMIT_AS, (limit, limit))
    except (ImportError, ValueError, OSError):
        pass


def install_guard(workdir):
    scope = {}
    exec(compile(GUARD_SOURCE, "<guard>", "exec"), scope)
    scope["install"](workdir)


def setup_failure(out, tests, diagnostic):
    for t in tests:
        emit(out, {"test_id": t["id"], "status": "setup_error", "actual": None,
                   "diagnostic": clip(diagnostic), "elapsed_ms": 0})


def run_function_level(job, out):
    tests = job["tests"]
    try:
        code = compile(job["source"], "candidate.py", "exec")
    except (SyntaxError, ValueError) as exc:
        setup_failure(out, tests, "".join(traceback.format_exception_only(type(exc), exc)))
        return

    def on_alarm(signum, frame):
        raise TestTimeout()

    signal.signal(signal.SIGALRM, on_alarm)
    set_memory_limit(job.get("memory_bytes"))
    install_guard(job["workdir"])

    namespace = {"__name__": "candidate"}
    real_stdout = sys.stdout
    sys.stdout = io.StringIO()
    try:
        signal.setitimer(signal.ITIMER_REAL, timeout_seconds(tests[0]))
        try:
            exec(code, namespace)
        finally:
            signal.setitimer(signal.ITIMER_REAL, 0)
        func = namespace.get(function_name(job["entrypoint"]))
        if not callable(func):
            raise NameError("entrypoint %r is not defined" % function_name(job["entrypoint"]))
    except BaseException as exc:  # noqa: B902 - candidate code may raise anything
        sys.stdout = real_stdout
        setup_failure(out, tests, "".join(traceback.format_exception(type(exc), exc, exc.__traceback__)))
        return
    finally:
        sys.stdout = real_stdout

    for t in tests:
        started = time.monotonic()
        status, actual, diagnostic = "pass", None, ""
        sys.stdout = io.StringIO()
        try:
            signal.setitimer(signal.ITIMER_REAL, timeout_seconds(t))
            try:
                result = func(*t["input"])
            finally:
                signal.setitimer(signal.ITIMER_REAL, 0)
            actual = to_jsonable(result)
            if not values_match(actual, t["expected"]):
                status = "wrong_answer"
        except TestTimeout:
            status = "timeout"
            diagnostic = "exceeded %d ms" % int(timeout_seconds(t) * 1000)
        except BaseException as exc:  # noqa: B902
            status = "runtime_error"
            diagnostic = "".join(traceback.format_exception(type(exc), exc, exc.__traceback__))
        finally:
            sys.stdout = real_stdout
        emit(out, {"test_id": t["id"], "status": status, "actual": actual,
                   "diagnostic": clip(diagnostic),
                   "elapsed_ms": int((time.monotonic() - started) * 1000)})


def child_preexec(memory_bytes):
    def run():
        os.setpgrp()
        try:
            import ctypes

            libc = ctypes.CDLL(None)
            libc.prctl(1, signal.SIGKILL)  # PR_SET_PDEATHSIG
        except Exception:
            pass
        set_memory_limit(memory_bytes)

    return run


def kill_group(proc):
    try:
        os.killpg(proc.pid, signal.SIGKILL)
    except OSError:
        pass


def run_full_program(job, out):
    tests = job["tests"]
    workdir = job["workdir"]
    try:
        compile(job["source"], "candidate.py", "exec")
    except (SyntaxError, ValueError) as exc:
        setup_failure(out, tests, "".join(traceback.format_exception_only(type(exc), exc)))
        return

    candidate = os.path.join(workdir, "candidate.py")
    launcher = os.path.join(workdir, "_launch.py")
    with open(candidate, "w", encoding="utf-8") as fh:
        fh.write(job["source"])
    with open(launcher, "w", encoding="utf-8") as fh:
        fh.write(GUARD_SOURCE)
        fh.write(
            "\nimport runpy\n"
            "_target = sys.argv[1]\n"
            "install(os.getcwd())\n"
            "sys.argv = [_target]\n"
            "runpy.run_path(_target, run_name='__main__')\n"
        )

    for t in tests:
        started = time.monotonic()
        limit = timeout_seconds(t)
        proc = subprocess.Popen(
            [sys.executable, "-I", "-B", launcher, candidate],
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            stderr=subprocess.PIPE,
            cwd=workdir,
            preexec_fn=child_preexec(job.get("memory_bytes")),
        )
        status, actual, diagnostic = "pass", None, ""
        try:
            stdout, stderr = proc.communicate(t["input"].encode("utf-8"), timeout=limit)
            actual = stdout[:MAX_CAPTURE].decode("utf-8", errors="replace")
            diagnostic = stderr[-DIAG_LIMIT:].decode("utf-8", errors="replace")
            if proc.returncode != 0:
                status = "runtime_error"
                if proc.returncode < 0:
                    diagnostic += "\nterminated by signal %d" % -proc.returncode
            elif normalize(actual) != normalize(t["expected"]):
                status = "wrong_answer"
        except subprocess.TimeoutExpired:
            kill_group(proc)
            proc.communicate()
            status = "timeout"
            diagnostic = "exceeded %d ms" % int(limit * 1000)
        emit(out, {"test_id": t["id"], "status": status, "actual": actual,
                   "diagnostic": clip(diagnostic),
                   "elapsed_ms": int((time.monotonic() - started) * 1000)})


def main():
    out = sys.stdout
    try:
        job = json.loads(sys.stdin.read())
        validate(job)
    except (ValueError, MalformedJob) as exc:
        emit(out, {"error": "malformed job: %s" % exc})
        return 2
    try:
        if job["mode"] == "function_level":
            run_function_level(job, out)
        else:
            run_full_program(job, out)
    except Exception:
        sys.stderr.write(traceback.format_exc())
        return 1
    emit(out, {"done": True, "count": len(job["tests"])})
    return 0


if __name__ == "__main__":
    sys.exit(main())
