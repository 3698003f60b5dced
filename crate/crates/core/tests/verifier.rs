use std::time::{Duration, Instant};

use serde_json::json;
use tddgen::problem::{ProblemMode, TestCase};
use tddgen::verifier::{
    Comparison, ExecutionLimits, ShimCommand, TestStatus, Verifier, VerifyError,
};

fn verifier() -> Verifier {
    Verifier::bundled().expect("shim installs")
}

fn quick_limits(per_test: u64) -> ExecutionLimits {
    ExecutionLimits {
        per_test_timeout: Duration::from_secs(per_test),
        total_suite_timeout: Duration::from_secs(30),
        ..ExecutionLimits::default()
    }
}

const ECHO: &str = "import sys\nsys.stdout.write(sys.stdin.read())\n";

#[test]
fn echo_program_passes() {
    let suite = [TestCase::stdio("t1", "a\n", "a")];
    let r = verifier()
        .verify(ECHO, &suite, ProblemMode::FullProgram, None)
        .unwrap();
    assert!(r.all_passed, "{r:?}");
    assert_eq!(r.statuses(), vec![TestStatus::Pass]);
}

#[test]
fn constant_function_gets_one_wrong_answer() {
    let suite = [
        TestCase::function_call("zero", vec![json!(5)], json!(0)),
        TestCase::function_call("one", vec![json!(5)], json!(1)),
    ];
    let src = "def f(x):\n    return 0\n";
    let r = verifier()
        .verify(src, &suite, ProblemMode::FunctionLevel, Some("def f(x):"))
        .unwrap();
    assert_eq!(
        r.statuses(),
        vec![TestStatus::Pass, TestStatus::WrongAnswer]
    );
    assert_eq!(r.failing_set.iter().collect::<Vec<_>>(), vec!["one"]);
    assert_eq!(r.results[1].actual, Some(json!(0)));
}

#[test]
fn infinite_loop_times_out_quickly() {
    let suite = [TestCase::function_call("t1", vec![], json!(1))];
    let v = verifier().limits(quick_limits(1));
    let start = Instant::now();
    let r = v
        .verify(
            "def f():\n    while True:\n        pass\n",
            &suite,
            ProblemMode::FunctionLevel,
            Some("def f():"),
        )
        .unwrap();
    assert!(
        start.elapsed() < Duration::from_secs(3),
        "{:?}",
        start.elapsed()
    );
    assert_eq!(r.statuses(), vec![TestStatus::Timeout]);

    let suite = [TestCase::stdio("t1", "", "1")];
    let start = Instant::now();
    let r = v
        .verify(
            "while True:\n    pass\n",
            &suite,
            ProblemMode::FullProgram,
            None,
        )
        .unwrap();
    assert!(
        start.elapsed() < Duration::from_secs(3),
        "{:?}",
        start.elapsed()
    );
    assert_eq!(r.statuses(), vec![TestStatus::Timeout]);
}

#[test]
fn raising_on_zero_then_passing() {
    let suite = [
        TestCase::function_call("t0", vec![json!(0)], json!(1.0)),
        TestCase::function_call("t1", vec![json!(1)], json!(1.0)),
    ];
    let r = verifier()
        .verify(
            "def inv(x):\n    return 1 / x\n",
            &suite,
            ProblemMode::FunctionLevel,
            Some("def inv(x):"),
        )
        .unwrap();
    assert_eq!(
        r.statuses(),
        vec![TestStatus::RuntimeError, TestStatus::Pass]
    );
    assert!(r.results[0].diagnostic.contains("ZeroDivisionError"));
}

#[test]
fn syntax_error_marks_every_test() {
    let suite: Vec<_> = (1..=3)
        .map(|i| TestCase::stdio(format!("t{i}"), "", ""))
        .collect();
    let r = verifier()
        .verify("def broken(:\n", &suite, ProblemMode::FullProgram, None)
        .unwrap();
    assert_eq!(r.statuses(), vec![TestStatus::SetupError; 3]);
    assert_eq!(r.failing_set.len(), 3);
    assert!(r.results[0].diagnostic.contains("SyntaxError"));
}

#[test]
fn missing_entrypoint_is_setup_error() {
    let suite = [TestCase::function_call("t1", vec![], json!(1))];
    let r = verifier()
        .verify(
            "def other():\n    return 1\n",
            &suite,
            ProblemMode::FunctionLevel,
            Some("def wanted():"),
        )
        .unwrap();
    assert_eq!(r.statuses(), vec![TestStatus::SetupError]);
}

#[test]
fn exact_mode_rejects_trailing_newline() {
    let suite = [TestCase::stdio("t1", "", "5")];
    let src = "print(5)\n";
    let normalized = verifier()
        .verify(src, &suite, ProblemMode::FullProgram, None)
        .unwrap();
    assert!(normalized.all_passed);
    let exact = verifier()
        .comparison(Comparison::Exact)
        .verify(src, &suite, ProblemMode::FullProgram, None)
        .unwrap();
    assert_eq!(exact.statuses(), vec![TestStatus::WrongAnswer]);
}

#[test]
fn writes_outside_workdir_are_blocked() {
    let target = tempfile::tempdir().unwrap();
    let victim = target.path().join("pwned.txt");
    let src = format!(
        "open({:?}, 'w').write('x')\nprint('done')\n",
        victim.display().to_string()
    );
    let suite = [TestCase::stdio("t1", "", "done")];
    let r = verifier()
        .verify(&src, &suite, ProblemMode::FullProgram, None)
        .unwrap();
    assert_eq!(r.statuses(), vec![TestStatus::RuntimeError]);
    assert!(r.results[0].diagnostic.contains("PermissionError"));
    assert!(!victim.exists());

    let func = format!(
        "import os\ndef f():\n    os.remove({:?})\n    return 1\n",
        target.path().join("keep").display().to_string()
    );
    std::fs::write(target.path().join("keep"), "k").unwrap();
    let suite = [TestCase::function_call("t1", vec![], json!(1))];
    let r = verifier()
        .verify(&func, &suite, ProblemMode::FunctionLevel, Some("def f():"))
        .unwrap();
    assert_eq!(r.statuses(), vec![TestStatus::RuntimeError]);
    assert!(target.path().join("keep").exists());
}

#[test]
fn writes_inside_workdir_are_allowed() {
    let src = "with open('scratch.txt', 'w') as f:\n    f.write('hi')\nprint(open('scratch.txt').read())\n";
    let suite = [TestCase::stdio("t1", "", "hi")];
    let r = verifier()
        .verify(src, &suite, ProblemMode::FullProgram, None)
        .unwrap();
    assert!(r.all_passed, "{r:?}");
}

#[test]
fn network_access_is_blocked() {
    let src =
        "import socket\ns = socket.socket()\ns.connect(('127.0.0.1', 9))\nprint('connected')\n";
    let suite = [TestCase::stdio("t1", "", "connected")];
    let r = verifier()
        .verify(src, &suite, ProblemMode::FullProgram, None)
        .unwrap();
    assert_eq!(r.statuses(), vec![TestStatus::RuntimeError]);
    assert!(r.results[0].diagnostic.contains("sandbox"));
}

#[test]
fn printing_in_function_mode_does_not_corrupt_protocol() {
    let suite = [TestCase::function_call("t1", vec![json!(2)], json!(4))];
    let src = "print('{\"done\": true}')\ndef sq(x):\n    print('noise')\n    return x * x\n";
    let r = verifier()
        .verify(src, &suite, ProblemMode::FunctionLevel, Some("def sq(x):"))
        .unwrap();
    assert!(r.all_passed, "{r:?}");
}

#[test]
fn reports_are_deterministic() {
    let suite = [
        TestCase::stdio("t1", "1 2\n", "3"),
        TestCase::stdio("t2", "2 2\n", "5"),
    ];
    let src = "a, b = map(int, input().split())\nprint(a + b)\n";
    let v = verifier();
    let a = v
        .verify(src, &suite, ProblemMode::FullProgram, None)
        .unwrap();
    let b = v
        .verify(src, &suite, ProblemMode::FullProgram, None)
        .unwrap();
    assert_eq!(a, b);
    assert_eq!(a.failing_set, b.failing_set);
}

#[test]
fn spawn_failure_is_infrastructure_error() {
    let v = Verifier::with_command(ShimCommand {
        program: "/nonexistent/python-for-tests".into(),
        args: vec![],
    });
    let suite = [TestCase::stdio("t1", "", "")];
    let err = v
        .verify("print()", &suite, ProblemMode::FullProgram, None)
        .unwrap_err();
    assert!(matches!(err, VerifyError::Spawn(_)));
}

#[test]
fn malformed_shim_output_is_protocol_error() {
    let v = Verifier::with_command(ShimCommand {
        program: "sh".into(),
        args: vec![
            "-c".into(),
            "cat > /dev/null; echo 'this is not json'".into(),
        ],
    });
    let suite = [TestCase::stdio("t1", "", "")];
    match v
        .verify("print()", &suite, ProblemMode::FullProgram, None)
        .unwrap_err()
    {
        VerifyError::Protocol(p) => assert_eq!(p.line, "this is not json"),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn suite_backstop_kills_a_stuck_runner() {
    let v = Verifier::with_command(ShimCommand {
        program: "sh".into(),
        args: vec!["-c".into(), "cat > /dev/null; sleep 30".into()],
    })
    .limits(ExecutionLimits {
        per_test_timeout: Duration::from_millis(200),
        total_suite_timeout: Duration::from_millis(500),
        ..ExecutionLimits::default()
    });
    let suite = [TestCase::stdio("t1", "", ""), TestCase::stdio("t2", "", "")];
    let start = Instant::now();
    let r = v
        .verify("print()", &suite, ProblemMode::FullProgram, None)
        .unwrap();
    assert!(start.elapsed() < Duration::from_secs(5));
    assert_eq!(r.statuses(), vec![TestStatus::Timeout; 2]);
}

#[test]
fn empty_suite_is_rejected() {
    let err = verifier()
        .verify("print()", &[], ProblemMode::FullProgram, None)
        .unwrap_err();
    assert!(matches!(err, VerifyError::InvalidRequest(_)));
}
