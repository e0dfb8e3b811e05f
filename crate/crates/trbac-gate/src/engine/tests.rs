use std::sync::Arc;

use super::*;
use crate::alert::AlertKind;
use crate::model::test_support::{lid, oid, rid, role_set, tid, uid};
use crate::model::{validate_policy, Permission, StoreBuilder};

const NOW: Timestamp = Timestamp(1_000_000);
const HOUR: u64 = 3_600_000;

fn fixture() -> PolicyStore {
    let store = StoreBuilder::new("acme")
        .locations(&["hq", "remote"])
        .task_with_perms("t1", 3, &[("read", "db1")], None)
        .task_with_perms("t2", 2, &[("write", "db1")], None)
        .task_with_perms("t-field", 2, &[("read", "sensor")], None)
        .task_with_perms("approve", 2, &[("write", "ledger")], Some("close"))
        .task_with_perms("audit", 2, &[("read", "ledger")], Some("close"))
        .role("clerk", &["t1"])
        .role("fieldagent", &["t-field"])
        .role_locations("fieldagent", &["hq"])
        .role("controller", &["approve", "audit"])
        .role_with_juniors("manager", &["clerk", "controller", "fieldagent"], &["t2"])
        .user("ada", &["clerk"])
        .user("bob", &["clerk"])
        .user("carol", &["controller"])
        .user("cass", &["controller"])
        .user("finn", &["fieldagent"])
        .user("meg", &["manager"])
        .sod("approve-audit", "close", &["approve", "audit"], SodMode::Dynamic)
        .tenant("umbrella")
        .task_with_perms("u-task", 1, &[("read", "u-db")], None)
        .role("u-role", &["u-task"])
        .user("eve", &["u-role"])
        .build();
    assert_eq!(validate_policy(&store), Vec::new());
    store
}

/// Login activates the full effective role set; meg's manager role
/// reaches every junior.
fn meg_session() -> Session {
    session_at("meg", &["manager", "clerk", "controller", "fieldagent"], "hq")
}

fn session_at(user: &str, roles: &[&str], location: &str) -> Session {
    Session {
        token: format!("tok-{user}"),
        user: uid(user),
        tenant: tid("acme"),
        active_roles: role_set(roles),
        location: lid(location),
        issued_at: NOW,
        expires_at: NOW.plus_millis(HOUR),
    }
}

fn expired_session(user: &str, roles: &[&str]) -> Session {
    let mut session = session_at(user, roles, "hq");
    session.issued_at = Timestamp(0);
    session.expires_at = Timestamp(1);
    session
}

fn read_db1() -> Permission {
    Permission::new("read", oid("db1"))
}

fn denied_reason(err: EngineError) -> (ReasonCode, AlertRecord) {
    match err {
        EngineError::Denied { reason, alert } => (reason, *alert),
        other => panic!("expected denial, got {other:?}"),
    }
}

#[test]
fn activation_with_mapping_yields_fresh_active_instance() {
    let store = fixture();
    let engine = Engine::new();
    let session = session_at("ada", &["clerk"], "hq");
    let inst = engine
        .activate_task(&store, &session, &tid_task("t1"), None, NOW)
        .unwrap();
    assert_eq!(inst.state, InstanceState::Active);
    assert_eq!(inst.usage_count, 0);
    assert_eq!(inst.holder, uid("ada"));
    assert!(inst.delegation_chain.is_empty());
    assert_eq!(engine.instance(&tid("acme"), &inst.id), Some(inst));
}

fn tid_task(raw: &str) -> crate::model::TaskId {
    crate::model::test_support::tkid(raw)
}

#[test]
fn activation_without_mapping_flags_a_malicious_insider() {
    let store = fixture();
    let engine = Engine::new();
    // t2 is granted to manager only.
    let session = session_at("ada", &["clerk"], "hq");
    let err = engine
        .activate_task(&store, &session, &tid_task("t2"), None, NOW)
        .unwrap_err();
    let (reason, alert) = denied_reason(err);
    assert_eq!(reason, ReasonCode::NoRoleTaskMapping);
    assert_eq!(alert.kind, AlertKind::MaliciousInsider);
    assert_eq!(alert.tenant, tid("acme"));
    assert_eq!(alert.actor.user, Some(uid("ada")));
    assert_eq!(alert.detail.endpoint, ACTIVATE_ENDPOINT);
}

#[test]
fn activation_of_unknown_or_foreign_task_reads_as_no_mapping() {
    let store = fixture();
    let engine = Engine::new();
    let session = session_at("ada", &["clerk"], "hq");
    for task in ["ghost", "u-task"] {
        let err = engine
            .activate_task(&store, &session, &tid_task(task), None, NOW)
            .unwrap_err();
        assert_eq!(err.denied_reason(), Some(ReasonCode::NoRoleTaskMapping));
    }
}

#[test]
fn expired_session_cannot_activate_and_alerts_unauthorized() {
    let store = fixture();
    let engine = Engine::new();
    let err = engine
        .activate_task(&store, &expired_session("ada", &["clerk"]), &tid_task("t1"), None, NOW)
        .unwrap_err();
    let (reason, alert) = denied_reason(err);
    assert_eq!(reason, ReasonCode::SessionExpired);
    assert_eq!(alert.kind, AlertKind::UnauthorizedAttempt);
}

#[test]
fn dynamic_sod_is_scoped_per_process_instance() {
    let store = fixture();
    let engine = Engine::new();
    let session = session_at("cass", &["controller"], "hq");

    // Hold and complete `approve` within process instance P.
    let inst = engine
        .activate_task(&store, &session, &tid_task("approve"), Some("P"), NOW)
        .unwrap();
    engine.complete_task(&store, &session, &inst.id, NOW).unwrap();

    // The conflicting task inside P is barred, even after completion.
    let err = engine
        .activate_task(&store, &session, &tid_task("audit"), Some("P"), NOW)
        .unwrap_err();
    let (reason, alert) = denied_reason(err);
    assert_eq!(reason, ReasonCode::SodViolation);
    assert_eq!(alert.kind, AlertKind::MaliciousInsider);

    // A different process instance, or no process instance, is fine.
    engine
        .activate_task(&store, &session, &tid_task("audit"), Some("Q"), NOW)
        .unwrap();
    engine
        .activate_task(&store, &session, &tid_task("audit"), None, NOW)
        .unwrap();

    // Re-acquiring the same task is not a conflict with itself.
    engine
        .activate_task(&store, &session, &tid_task("approve"), Some("P"), NOW)
        .unwrap();
}

#[test]
fn sod_violation_outranks_missing_mapping() {
    let store = fixture();
    let engine = Engine::new();
    let cass = session_at("cass", &["controller"], "hq");
    engine
        .activate_task(&store, &cass, &tid_task("approve"), Some("P"), NOW)
        .unwrap();
    // Drop the controller role: now `audit` has neither mapping nor SoD
    // clearance; precedence reports the SoD violation.
    let stripped = session_at("cass", &[], "hq");
    let err = engine
        .activate_task(&store, &stripped, &tid_task("audit"), Some("P"), NOW)
        .unwrap_err();
    assert_eq!(err.denied_reason(), Some(ReasonCode::SodViolation));
}

#[test]
fn permit_consumes_exactly_one_use() {
    let store = fixture();
    let engine = Engine::new();
    let session = session_at("ada", &["clerk"], "hq");
    let inst = engine
        .activate_task(&store, &session, &tid_task("t1"), None, NOW)
        .unwrap();
    let decision = engine
        .check_access(&store, &session, &inst.id, &read_db1(), NOW)
        .unwrap();
    assert_eq!(decision.verdict, Verdict::Permit);
    assert_eq!(decision.reason, ReasonCode::Ok);
    assert_eq!(decision.usage_after, 1);
    assert!(decision.alerts_emitted.is_empty());
}

#[test]
fn usage_limit_deactivates_exactly_at_the_limit() {
    let store = fixture();
    let engine = Engine::new();
    let session = session_at("meg", &["manager"], "hq");
    let inst = engine
        .activate_task(&store, &session, &tid_task("t2"), None, NOW)
        .unwrap();
    let perm = Permission::new("write", oid("db1"));

    // Limit 2: two permits, deactivation on the second.
    let first = engine.check_access(&store, &session, &inst.id, &perm, NOW).unwrap();
    assert_eq!((first.verdict, first.usage_after), (Verdict::Permit, 1));
    let second = engine.check_access(&store, &session, &inst.id, &perm, NOW).unwrap();
    assert_eq!((second.verdict, second.usage_after), (Verdict::Permit, 2));
    let snapshot = engine.instance(&tid("acme"), &inst.id).unwrap();
    assert_eq!(snapshot.state, InstanceState::Deactivated);

    // The next request denies without touching the count.
    let third = engine.check_access(&store, &session, &inst.id, &perm, NOW).unwrap();
    assert_eq!(third.verdict, Verdict::Deny);
    assert_eq!(third.reason, ReasonCode::UsageExhausted);
    assert_eq!(third.usage_after, 2);
    assert_eq!(third.alerts_emitted.len(), 1);
    assert_eq!(third.alerts_emitted[0].kind, AlertKind::MaliciousInsider);
}

#[test]
fn deny_leaves_instance_state_untouched() {
    let store = fixture();
    let engine = Engine::new();
    let session = session_at("ada", &["clerk"], "hq");
    let inst = engine
        .activate_task(&store, &session, &tid_task("t1"), None, NOW)
        .unwrap();
    let before = engine.snapshot();
    let decision = engine
        .check_access(
            &store,
            &session,
            &inst.id,
            &Permission::new("write", oid("db1")),
            NOW,
        )
        .unwrap();
    assert_eq!(decision.verdict, Verdict::Deny);
    assert_eq!(engine.snapshot(), before);
}

#[test]
fn location_restriction_applies_to_granting_roles() {
    let store = fixture();
    let engine = Engine::new();
    let at_hq = session_at("finn", &["fieldagent"], "hq");
    let inst = engine
        .activate_task(&store, &at_hq, &tid_task("t-field"), None, NOW)
        .unwrap();
    let perm = Permission::new("read", oid("sensor"));

    let ok = engine.check_access(&store, &at_hq, &inst.id, &perm, NOW).unwrap();
    assert_eq!(ok.verdict, Verdict::Permit);

    let remote = session_at("finn", &["fieldagent"], "remote");
    let denied = engine.check_access(&store, &remote, &inst.id, &perm, NOW).unwrap();
    assert_eq!(denied.verdict, Verdict::Deny);
    assert_eq!(denied.reason, ReasonCode::LocationForbidden);

    // An unrestricted role is location-free.
    let ada_remote = session_at("ada", &["clerk"], "remote");
    let ada_inst = engine
        .activate_task(&store, &ada_remote, &tid_task("t1"), None, NOW)
        .unwrap();
    let ok = engine
        .check_access(&store, &ada_remote, &ada_inst.id, &read_db1(), NOW)
        .unwrap();
    assert_eq!(ok.verdict, Verdict::Permit);
}

#[test]
fn permission_outside_the_task_is_no_mapping() {
    let store = fixture();
    let engine = Engine::new();
    let session = session_at("ada", &["clerk"], "hq");
    let inst = engine
        .activate_task(&store, &session, &tid_task("t1"), None, NOW)
        .unwrap();
    let decision = engine
        .check_access(
            &store,
            &session,
            &inst.id,
            &Permission::new("configure", oid("db1")),
            NOW,
        )
        .unwrap();
    assert_eq!(decision.verdict, Verdict::Deny);
    assert_eq!(decision.reason, ReasonCode::NoRoleTaskMapping);
}

#[test]
fn only_the_holder_may_use_an_instance() {
    let store = fixture();
    let engine = Engine::new();
    let ada = session_at("ada", &["clerk"], "hq");
    let bob = session_at("bob", &["clerk"], "hq");
    let inst = engine
        .activate_task(&store, &ada, &tid_task("t1"), None, NOW)
        .unwrap();
    let decision = engine
        .check_access(&store, &bob, &inst.id, &read_db1(), NOW)
        .unwrap();
    assert_eq!(decision.verdict, Verdict::Deny);
    assert_eq!(decision.reason, ReasonCode::NotHolder);
    assert_eq!(engine.instance(&tid("acme"), &inst.id).unwrap().usage_count, 0);
}

#[test]
fn cross_tenant_instances_do_not_exist() {
    let store = fixture();
    let engine = Engine::new();
    let ada = session_at("ada", &["clerk"], "hq");
    let inst = engine
        .activate_task(&store, &ada, &tid_task("t1"), None, NOW)
        .unwrap();
    let eve = Session {
        token: "tok-eve".to_string(),
        user: uid("eve"),
        tenant: tid("umbrella"),
        active_roles: role_set(&["u-role"]),
        location: lid("hq"),
        issued_at: NOW,
        expires_at: NOW.plus_millis(HOUR),
    };
    let err = engine
        .check_access(&store, &eve, &inst.id, &read_db1(), NOW)
        .unwrap_err();
    assert!(matches!(err, EngineError::UnknownInstance(_)));
    assert!(engine.instance(&tid("umbrella"), &inst.id).is_none());
}

#[test]
fn completion_revokes_rights_and_is_idempotent_only_once() {
    let store = fixture();
    let engine = Engine::new();
    let ada = session_at("ada", &["clerk"], "hq");
    let bob = session_at("bob", &["clerk"], "hq");
    let inst = engine
        .activate_task(&store, &ada, &tid_task("t1"), None, NOW)
        .unwrap();

    // A non-holder cannot complete.
    let err = engine.complete_task(&store, &bob, &inst.id, NOW).unwrap_err();
    assert_eq!(err.denied_reason(), Some(ReasonCode::NotHolder));

    let done = engine.complete_task(&store, &ada, &inst.id, NOW).unwrap();
    assert_eq!(done.state, InstanceState::Completed);

    // Revocation: every further check denies.
    let decision = engine
        .check_access(&store, &ada, &inst.id, &read_db1(), NOW)
        .unwrap();
    assert_eq!(decision.verdict, Verdict::Deny);
    assert_eq!(decision.reason, ReasonCode::TaskNotActive);

    let err = engine.complete_task(&store, &ada, &inst.id, NOW).unwrap_err();
    assert_eq!(err.denied_reason(), Some(ReasonCode::TaskNotActive));
}

#[test]
fn a_usage_exhausted_instance_can_still_be_completed() {
    let store = fixture();
    let engine = Engine::new();
    let meg = meg_session();
    let inst = engine
        .activate_task(&store, &meg, &tid_task("t2"), None, NOW)
        .unwrap();
    let perm = Permission::new("write", oid("db1"));
    for _ in 0..2 {
        engine.check_access(&store, &meg, &inst.id, &perm, NOW).unwrap();
    }
    assert_eq!(
        engine.instance(&tid("acme"), &inst.id).unwrap().state,
        InstanceState::Deactivated
    );
    let done = engine.complete_task(&store, &meg, &inst.id, NOW).unwrap();
    assert_eq!(done.state, InstanceState::Completed);
}

#[test]
fn delegation_moves_the_holder_and_conserves_usage() {
    let store = fixture();
    let engine = Engine::new();
    let ada = session_at("ada", &["clerk"], "hq");
    let meg = meg_session();
    let bob = session_at("bob", &["clerk"], "hq");

    let inst = engine
        .activate_task(&store, &ada, &tid_task("t1"), None, NOW)
        .unwrap();
    engine.check_access(&store, &ada, &inst.id, &read_db1(), NOW).unwrap();

    let delegated = engine
        .delegate_task(&store, &meg, &inst.id, &uid("bob"), NOW)
        .unwrap();
    assert_eq!(delegated.holder, uid("bob"));
    assert_eq!(delegated.usage_count, 1);
    assert_eq!(delegated.delegation_chain.len(), 1);
    let hop = &delegated.delegation_chain[0];
    assert_eq!((&hop.from, &hop.to, &hop.by), (&uid("ada"), &uid("bob"), &rid("manager")));

    // Rights moved with the instance.
    let ok = engine.check_access(&store, &bob, &inst.id, &read_db1(), NOW).unwrap();
    assert_eq!(ok.verdict, Verdict::Permit);
    let not_holder = engine.check_access(&store, &ada, &inst.id, &read_db1(), NOW).unwrap();
    assert_eq!(not_holder.reason, ReasonCode::NotHolder);
}

#[test]
fn a_peer_cannot_delegate() {
    let store = fixture();
    let engine = Engine::new();
    let ada = session_at("ada", &["clerk"], "hq");
    let bob = session_at("bob", &["clerk"], "hq");
    let inst = engine
        .activate_task(&store, &ada, &tid_task("t1"), None, NOW)
        .unwrap();
    let err = engine
        .delegate_task(&store, &bob, &inst.id, &uid("bob"), NOW)
        .unwrap_err();
    let (reason, alert) = denied_reason(err);
    assert_eq!(reason, ReasonCode::NotSuperior);
    assert_eq!(alert.kind, AlertKind::MaliciousInsider);
}

#[test]
fn the_actor_must_dominate_both_endpoints() {
    // meg's manager role dominates clerk but not another manager.
    let store = StoreBuilder::new("acme")
        .task("t1", 3)
        .role("clerk", &["t1"])
        .role_with_juniors("manager", &["clerk"], &[])
        .user("ada", &["clerk"])
        .user("meg", &["manager"])
        .user("max", &["manager"])
        .build();
    let engine = Engine::new();
    let ada = session_at("ada", &["clerk"], "hq");
    let meg = meg_session();
    let inst = engine
        .activate_task(&store, &ada, &tid_task("t1"), None, NOW)
        .unwrap();
    let err = engine
        .delegate_task(&store, &meg, &inst.id, &uid("max"), NOW)
        .unwrap_err();
    assert_eq!(err.denied_reason(), Some(ReasonCode::NotSuperior));
}

#[test]
fn delegation_respects_dynamic_sod_history_of_the_delegate() {
    let store = fixture();
    let engine = Engine::new();
    let carol = session_at("carol", &["controller"], "hq");
    let cass = session_at("cass", &["controller"], "hq");
    let meg = meg_session();

    // cass completed `audit` in P; delegating carol's `approve` in P to
    // cass would pair the conflict.
    let audit_inst = engine
        .activate_task(&store, &cass, &tid_task("audit"), Some("P"), NOW)
        .unwrap();
    engine.complete_task(&store, &cass, &audit_inst.id, NOW).unwrap();

    let approve_inst = engine
        .activate_task(&store, &carol, &tid_task("approve"), Some("P"), NOW)
        .unwrap();
    let err = engine
        .delegate_task(&store, &meg, &approve_inst.id, &uid("cass"), NOW)
        .unwrap_err();
    assert_eq!(err.denied_reason(), Some(ReasonCode::SodViolation));

    // A clean process instance delegates fine.
    let approve_q = engine
        .activate_task(&store, &carol, &tid_task("approve"), Some("Q"), NOW)
        .unwrap();
    engine
        .delegate_task(&store, &meg, &approve_q.id, &uid("cass"), NOW)
        .unwrap();
}

#[test]
fn delegation_error_cases() {
    let store = fixture();
    let engine = Engine::new();
    let ada = session_at("ada", &["clerk"], "hq");
    let meg = meg_session();
    let inst = engine
        .activate_task(&store, &ada, &tid_task("t1"), None, NOW)
        .unwrap();

    let err = engine
        .delegate_task(&store, &meg, &inst.id, &uid("nobody"), NOW)
        .unwrap_err();
    assert_eq!(err.denied_reason(), Some(ReasonCode::UnknownUser));

    engine.complete_task(&store, &ada, &inst.id, NOW).unwrap();
    let err = engine
        .delegate_task(&store, &meg, &inst.id, &uid("bob"), NOW)
        .unwrap_err();
    assert_eq!(err.denied_reason(), Some(ReasonCode::TaskNotActive));

    let err = engine
        .delegate_task(&store, &meg, &InstanceId::random(), &uid("bob"), NOW)
        .unwrap_err();
    assert!(matches!(err, EngineError::UnknownInstance(_)));
}

#[test]
fn a_delegate_without_a_granting_role_is_location_unconstrained() {
    let store = fixture();
    let engine = Engine::new();
    let finn = session_at("finn", &["fieldagent"], "hq");
    let meg = meg_session();
    let inst = engine
        .activate_task(&store, &finn, &tid_task("t-field"), None, NOW)
        .unwrap();
    engine
        .delegate_task(&store, &meg, &inst.id, &uid("bob"), NOW)
        .unwrap();
    // bob's clerk role does not grant t-field, so the fieldagent
    // restriction has no role to attach to: permitted even remotely.
    let bob_remote = session_at("bob", &["clerk"], "remote");
    let decision = engine
        .check_access(
            &store,
            &bob_remote,
            &inst.id,
            &Permission::new("read", oid("sensor")),
            NOW,
        )
        .unwrap();
    assert_eq!(decision.verdict, Verdict::Permit);
}

#[test]
fn deny_reason_precedence_is_fixed() {
    let store = fixture();
    let engine = Engine::new();
    let ada = session_at("ada", &["clerk"], "hq");
    let inst = engine
        .activate_task(&store, &ada, &tid_task("t1"), None, NOW)
        .unwrap();

    // Expired session and wrong holder: session-expired wins.
    let decision = engine
        .check_access(&store, &expired_session("bob", &["clerk"]), &inst.id, &read_db1(), NOW)
        .unwrap();
    assert_eq!(decision.reason, ReasonCode::SessionExpired);

    // Wrong holder and completed: not-holder wins.
    engine.complete_task(&store, &ada, &inst.id, NOW).unwrap();
    let bob = session_at("bob", &["clerk"], "hq");
    let decision = engine
        .check_access(&store, &bob, &inst.id, &read_db1(), NOW)
        .unwrap();
    assert_eq!(decision.reason, ReasonCode::NotHolder);

    // Location violation and wrong permission: location-forbidden wins.
    let finn_remote = session_at("finn", &["fieldagent"], "remote");
    let finn_hq = session_at("finn", &["fieldagent"], "hq");
    let field_inst = engine
        .activate_task(&store, &finn_hq, &tid_task("t-field"), None, NOW)
        .unwrap();
    let decision = engine
        .check_access(
            &store,
            &finn_remote,
            &field_inst.id,
            &Permission::new("configure", oid("sensor")),
            NOW,
        )
        .unwrap();
    assert_eq!(decision.reason, ReasonCode::LocationForbidden);
}

#[test]
fn racing_the_last_use_yields_exactly_one_permit() {
    let store = Arc::new(fixture());
    for _ in 0..100 {
        let engine = Arc::new(Engine::new());
        let session = session_at("meg", &["manager"], "hq");
        let inst = engine
            .activate_task(&store, &session, &tid_task("t2"), None, NOW)
            .unwrap();
        let perm = Permission::new("write", oid("db1"));
        // Burn all but one use.
        engine.check_access(&store, &session, &inst.id, &perm, NOW).unwrap();

        let barrier = Arc::new(std::sync::Barrier::new(2));
        let mut handles = Vec::new();
        for _ in 0..2 {
            let engine = engine.clone();
            let store = store.clone();
            let session = session.clone();
            let inst_id = inst.id.clone();
            let perm = perm.clone();
            let barrier = barrier.clone();
            handles.push(std::thread::spawn(move || {
                barrier.wait();
                engine
                    .check_access(&store, &session, &inst_id, &perm, NOW)
                    .unwrap()
            }));
        }
        let outcomes: Vec<AccessDecision> =
            handles.into_iter().map(|h| h.join().unwrap()).collect();
        let permits = outcomes.iter().filter(|d| d.verdict == Verdict::Permit).count();
        let exhausted = outcomes
            .iter()
            .filter(|d| d.reason == ReasonCode::UsageExhausted)
            .count();
        assert_eq!((permits, exhausted), (1, 1));
        assert_eq!(
            engine.instance(&tid("acme"), &inst.id).unwrap().usage_count,
            2
        );
    }
}

#[test]
fn snapshot_restore_round_trips() {
    let store = fixture();
    let engine = Engine::new();
    let ada = session_at("ada", &["clerk"], "hq");
    let cass = session_at("cass", &["controller"], "hq");
    let inst = engine
        .activate_task(&store, &ada, &tid_task("t1"), None, NOW)
        .unwrap();
    engine.check_access(&store, &ada, &inst.id, &read_db1(), NOW).unwrap();
    engine
        .activate_task(&store, &cass, &tid_task("approve"), Some("P"), NOW)
        .unwrap();

    let state = engine.snapshot();
    let restored = Engine::from_state(state.clone());
    assert_eq!(restored.snapshot(), state);

    // SoD history survives the round trip.
    let err = restored
        .activate_task(&store, &cass, &tid_task("audit"), Some("P"), NOW)
        .unwrap_err();
    assert_eq!(err.denied_reason(), Some(ReasonCode::SodViolation));
}
