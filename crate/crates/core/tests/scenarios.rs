use dyrun::attacker::fuzz::{fuzz_attacks, FuzzConfig};
use dyrun::attacker::{parse_attack, run_attack, OR_HONEST, RPCATTACK_0, RPCATTACK_1};
use dyrun::exec::Execution;
use dyrun::level::Level;
use dyrun::term::HmacKeyUsage;
use dyrun::{Event, Protocol, RunVerdict, Usage, World};

#[test]
fn rpcattack_0_shape() {
    let prog = parse_attack(RPCATTACK_0, Protocol::RpcCorrect).unwrap();
    assert_eq!(prog.decls.len(), 11);
    assert_eq!(prog.commands.len(), 15);
    let again = parse_attack(&prog.to_string(), Protocol::RpcCorrect).unwrap();
    assert_eq!(again.to_string(), prog.to_string());
    assert_eq!(again.commands.len(), 15);
}

#[test]
fn scripts_are_deterministic_per_seed() {
    for (text, p) in [
        (RPCATTACK_0, Protocol::RpcCorrect),
        (RPCATTACK_1, Protocol::RpcFlawed),
        (OR_HONEST, Protocol::OtwayRees),
    ] {
        let prog = parse_attack(text, p).unwrap();
        let a = run_attack(&prog, p, 42);
        let b = run_attack(&prog, p, 42);
        assert_eq!(a.verdict, b.verdict);
        assert_eq!(a.cs.dump(), b.cs.dump());
    }
}

#[test]
fn otway_rees_session_key_drives_rpc_macs() {
    let mut out = run_attack(&parse_attack(OR_HONEST, Protocol::OtwayRees).unwrap(), Protocol::OtwayRees, 1);
    assert_eq!(out.verdict, RunVerdict::Ok);
    let (k, a, b) = out
        .cs
        .log()
        .iter()
        .find_map(|e| match e {
            Event::New(k, Usage::HmacKey(HmacKeyUsage::SessionKey(a, b))) => Some((k.clone(), a.clone(), b.clone())),
            _ => None,
        })
        .unwrap();
    let kb = out.cs.table().bytes_of(&k).unwrap().clone();
    let req = out.cs.to_string(b"get balance").unwrap();
    let treq = out.cs.term_of(&req).unwrap().clone();
    out.cs.log_event(Event::Request(a, b, treq)).unwrap();
    let tag = out.cs.to_string(dyrun::term::TAG_REQUEST).unwrap();
    let m = out.cs.pair(&tag, &req).unwrap();
    let mac = out.cs.hmac(&kb, &m).unwrap();
    assert!(out.cs.hmac_verify(&kb, &m, &mac).unwrap());
    assert!(out.cs.bytes_level(Level::Low, &mac));
    assert!(!out.cs.level(Level::Low, &k));
    assert!(out.cs.audit_now().is_empty());
}

#[test]
fn sequential_and_parallel_fuzzing_agree() {
    let mut cfg = FuzzConfig::new(Protocol::RpcFlawed, 300, 20, 9);
    cfg.exec = Execution::Sequential;
    let seq = fuzz_attacks(&cfg);
    cfg.exec = Execution::Parallel;
    let par = fuzz_attacks(&cfg);
    assert_eq!(seq, par);
    assert!(!seq.counterexamples.is_empty());
}

#[test]
fn flawed_counterexamples_replay() {
    let cfg = FuzzConfig::new(Protocol::RpcFlawed, 300, 30, 4);
    let report = fuzz_attacks(&cfg);
    for c in report.counterexamples.iter().take(10) {
        let prog = parse_attack(&c.script, Protocol::RpcFlawed).unwrap();
        let out = run_attack(&prog, Protocol::RpcFlawed, c.run_seed);
        assert_eq!(out.verdict, c.verdict);
        let fixed = run_attack(&prog, Protocol::RpcCorrect, c.run_seed);
        assert!(!fixed.verdict.is_assertion_failure(), "{}", c.script);
    }
}

#[test]
fn compromised_client_key_is_low() {
    let text = RPCATTACK_0.replacen("let s : session", "let s : session\nlet k : bytespub", 1)
        + "k = att_compromise_client(s)\n";
    let mut out = run_attack(&parse_attack(&text, Protocol::RpcCorrect).unwrap(), Protocol::RpcCorrect, 0);
    assert_eq!(out.verdict, RunVerdict::Ok);
    let k = out
        .cs
        .log()
        .iter()
        .find_map(|e| match e {
            Event::New(k, Usage::HmacKey(_)) => Some(k.clone()),
            _ => None,
        })
        .unwrap();
    assert!(out.cs.level(Level::Low, &k));
    assert!(out.cs.log().iter().any(|e| matches!(e, Event::Bad(_))));
}

#[test]
fn world_without_roles_finishes_ok() {
    let out = World::new(Protocol::RpcCorrect, 0).finish();
    assert_eq!(out.verdict, RunVerdict::Ok);
    assert_eq!(out.assertions_checked, 0);
}
