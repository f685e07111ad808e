use crate::diag::Code;
use crate::{check_source, Diagnostic};

fn codes(src: &str) -> Vec<Code> {
    let d: Vec<Diagnostic> = check_source(src);
    let mut c: Vec<Code> = d.iter().map(|d| d.code).collect();
    c.sort();
    c
}

fn errors(src: &str) -> Vec<Code> {
    let mut c: Vec<Code> = check_source(src).into_iter().filter(|d| d.is_error()).map(|d| d.code).collect();
    c.sort();
    c
}

const GEM: &str = "asset contract Gem {}\n";

#[test]
fn fig1_is_clean() {
    assert_eq!(codes(include_str!("../../../../corpus/tvm.obs")), vec![]);
}

#[test]
fn auction_with_solution_has_no_errors() {
    assert_eq!(errors(include_str!("../../../../corpus/auction.obs")), vec![]);
}

#[test]
fn auction_without_refund_overwrites_max_bid() {
    let d: Vec<Diagnostic> =
        check_source(include_str!("../../../../corpus/auction_lost_asset.obs")).into_iter().filter(|d| d.is_error()).collect();
    assert_eq!(d.len(), 1, "{d:?}");
    assert_eq!(d[0].code, Code::AssetOverwrite);
    assert_eq!(d[0].span.line, 27);
}

#[test]
fn wallet_variants() {
    assert_eq!(codes(include_str!("../../../../corpus/wallet_receive.obs")), vec![]);
    assert_eq!(codes(include_str!("../../../../corpus/wallet_check.obs")), vec![Code::FieldEnd]);
}

#[test]
fn empty_body_on_stateless_contract() {
    assert_eq!(codes("contract A { transaction f() { } }"), vec![]);
}

#[test]
fn assignment_moves_ownership() {
    // temp takes m's ownership; the field is then Unowned and must be refilled
    let src = format!(
        "{GEM} asset contract W {{ Gem@Owned m; W() {{ m = new Gem(); }}
           transaction f() returns Gem@Owned {{ Gem temp = m; return temp; }} }}"
    );
    assert_eq!(codes(&src), vec![Code::FieldEnd]);
    let src = format!(
        "{GEM} asset contract W {{ Gem@Owned m; W() {{ m = new Gem(); }}
           transaction f(Gem@Owned >> Unowned g) returns Gem@Owned {{ Gem temp = m; m = g; return temp; }} }}"
    );
    assert_eq!(codes(&src), vec![]);
}

#[test]
fn overwriting_owned_asset() {
    let src = format!(
        "{GEM} asset contract W {{ Gem@Owned m; W() {{ m = new Gem(); }}
           transaction f(Gem@Owned >> Unowned g) {{ m = g; }} }}"
    );
    assert_eq!(codes(&src), vec![Code::AssetOverwrite]);
}

#[test]
fn owned_to_unowned_formal_keeps_ownership() {
    let src = format!(
        "{GEM} contract S {{ transaction look(Gem@Unowned g) {{ }} }}
         asset contract W {{ Gem@Owned m; W() {{ m = new Gem(); }}
           transaction f(S@Shared s) {{ s.look(m); [m@Owned]; }} }}"
    );
    assert_eq!(codes(&src), vec![]);
}

#[test]
fn passing_moved_value_is_arg_perm() {
    let src = format!(
        "{GEM} asset contract S {{ Gem@Owned g; S() {{ g = new Gem(); }}
           transaction take(Gem@Owned >> Unowned x) {{ disown x; }} }}
         contract U {{ transaction f(S@Shared s) {{ Gem a = new Gem(); s.take(a); s.take(a); }} }}"
    );
    assert_eq!(codes(&src), vec![Code::ArgPerm, Code::DisownAsset]);
}

#[test]
fn local_asset_going_out_of_scope() {
    let src = format!("{GEM} contract U {{ transaction f() {{ Gem a = new Gem(); }} }}");
    assert_eq!(codes(&src), vec![Code::AssetScope]);
    let src = format!("{GEM} contract U {{ transaction f() {{ Gem a = new Gem(); disown a; }} }}");
    assert_eq!(codes(&src), vec![Code::DisownAsset]);
    let src = format!("{GEM} contract U {{ transaction f() {{ if (true) {{ Gem a = new Gem(); }} }} }}");
    assert_eq!(codes(&src), vec![Code::AssetScope]);
    let src = format!("{GEM} contract U {{ transaction f() {{ new Gem(); }} }}");
    assert_eq!(codes(&src), vec![Code::AssetScope]);
}

#[test]
fn disown_rules() {
    let src = format!("{GEM} contract U {{ transaction f(Gem@Unowned g) {{ disown g; }} }}");
    assert_eq!(codes(&src), vec![Code::DisownUnowned]);
    let src = "contract P {} contract U { transaction f() { P p = new P(); disown p; } }";
    assert_eq!(codes(src), vec![]);
}

#[test]
fn revert_waives_obligations() {
    let src = format!("{GEM} contract U {{ transaction f() {{ Gem a = new Gem(); revert(\"no\"); }} }}");
    assert_eq!(codes(&src), vec![]);
}

#[test]
fn statements_after_return_warn() {
    let src = "contract U { transaction f() returns int { return 1; int x = 2; } }";
    assert_eq!(codes(src), vec![Code::Unreachable]);
}

#[test]
fn missing_return_value() {
    assert_eq!(codes("contract U { transaction f() returns int { } }"), vec![Code::TypeMismatch]);
    assert_eq!(codes("contract U { transaction f() returns int { return true; } }"), vec![Code::TypeMismatch]);
}

const SWITCH: &str = "contract L { state On; state Off; L() { ->Off; }
   transaction on(L@Off >> On this) { ->On; }
   transaction off(L@On >> Off this) { ->Off; } }\n";

#[test]
fn receiver_pre_violation() {
    let src = format!("{SWITCH} contract U {{ transaction f() {{ L l = new L(); l.off(); }} }}");
    assert_eq!(codes(&src), vec![Code::ReceiverPre]);
    let src = format!("{SWITCH} contract U {{ transaction f() {{ L l = new L(); l.on(); l.off(); }} }}");
    assert_eq!(codes(&src), vec![]);
}

#[test]
fn state_test_narrows_and_merges() {
    let src = format!(
        "{SWITCH} contract U {{ transaction f(L@On | Off >> Owned l) {{
            if (l in On) {{ l.off(); }} else {{ l.on(); l.off(); }}
            [l@Off];
        }} }}"
    );
    assert_eq!(codes(&src), vec![]);
    let src = format!(
        "{SWITCH} contract U {{ transaction f(L@Owned >> Owned l) {{
            if (l in On) {{ l.off(); }}
            [l@Off];
        }} }}"
    );
    assert_eq!(codes(&src), vec![Code::AssertFail]);
}

#[test]
fn state_test_on_stateless_contract() {
    let src = "contract P {} contract U { transaction f(P@Shared p) { if (p in S) { } } }";
    assert_eq!(codes(src), vec![Code::NoStates]);
}

#[test]
fn transition_requires_released_assets() {
    let src = format!(
        "{GEM} asset contract V {{ state A {{ Gem@Owned g; }} state B;
           V(Gem@Owned >> Unowned x) {{ ->A(g = x); }}
           transaction go(V@A >> B this) {{ ->B; }} }}"
    );
    assert_eq!(codes(&src), vec![Code::AssetTransition]);
    let src = format!(
        "{GEM} asset contract V {{ state A {{ Gem@Owned g; }} state B;
           V(Gem@Owned >> Unowned x) {{ ->A(g = x); }}
           transaction go(V@A >> B this) returns Gem@Owned {{ Gem out = g; ->B; return out; }} }}"
    );
    assert_eq!(codes(&src), vec![]);
}

#[test]
fn transition_field_initialisation_styles() {
    let base = "contract V { state A { int x; int y; } V() { ";
    assert_eq!(codes(&format!("{base} ->A(x = 1, y = 2); }} }}")), vec![]);
    assert_eq!(codes(&format!("{base} A::x = 1; A::y = 2; ->A; }} }}")), vec![]);
    assert_eq!(codes(&format!("{base} A::x = 1; ->A(y = 2); }} }}")), vec![]);
    assert_eq!(codes(&format!("{base} ->A(x = 1); }} }}")), vec![Code::UninitStateField]);
    assert_eq!(codes(&format!("{base} A::x = 1; ->A(x = 1, y = 2); }} }}")), vec![Code::MixedInit]);
    assert_eq!(
        codes(&format!("{base} A::x = 1; if (true) {{ ->A(y = 2); }} ->A(x = 3, y = 4); }} }}")),
        vec![Code::DanglingPreinit]
    );
}

#[test]
fn dangling_preinit_at_exit() {
    let src = "contract V { state A { int x; } state B; V() { ->B; }
       transaction f(V@Owned >> Owned this) { A::x = 1; } }";
    assert_eq!(codes(src), vec![Code::DanglingPreinit]);
}

#[test]
fn unowned_receiver_cannot_transition() {
    let src = "contract V { state A; state B; V() { ->A; } transaction f(V@Unowned this) { ->B; } }";
    assert_eq!(codes(src), vec![Code::TransitionUnowned]);
}

#[test]
fn constructor_must_reach_a_state() {
    let src = "contract V { state A; V() { if (true) { ->A; } } }";
    assert_eq!(codes(src), vec![Code::NoCtorState]);
}

#[test]
fn implicit_constructor_with_reference_field() {
    let src = "contract P {} contract V { P@Shared p; }";
    assert_eq!(codes(src), vec![Code::FieldEnd]);
}

#[test]
fn branch_loses_ownership() {
    let src = format!(
        "{GEM} contract S {{ transaction take(Gem@Owned >> Unowned g) {{ disown g; }} }}
         asset contract W {{ Gem@Owned m; W() {{ m = new Gem(); }}
           transaction f(S@Shared s, bool b) {{ if (b) {{ s.take(m); }} }} }}"
    );
    let c = codes(&src);
    assert!(c.contains(&Code::AssetLossBranch), "{c:?}");
}

#[test]
fn parameter_post_conditions() {
    let src = format!(
        "{GEM} contract S {{ transaction take(Gem@Owned >> Unowned g) {{ disown g; }} }}
         contract U {{ transaction f(S@Shared s, Gem@Owned g) {{ s.take(g); }} }}"
    );
    assert_eq!(codes(&src), vec![Code::ParamPost, Code::DisownAsset]);
    let src = format!("{GEM} contract U {{ transaction f(Gem@Owned >> Unowned g) {{ }} }}");
    assert_eq!(codes(&src), vec![Code::AssetScope]);
}

#[test]
fn receiver_post_condition() {
    let src = "contract V { state A; state B; V() { ->A; } transaction f(V@A >> B this) { } }";
    assert_eq!(codes(src), vec![Code::ReceiverPost]);
}

#[test]
fn arity_and_undefined_names() {
    let src = format!("{SWITCH} contract U {{ transaction f() {{ L l = new L(); l.on(1); }} }}");
    assert_eq!(codes(&src), vec![Code::Arity]);
    let src = "contract U { transaction f() { Nope n = new Nope(); } }";
    assert_eq!(codes(src), vec![Code::UndefContract, Code::UndefContract]);
    let src = "contract U { transaction f() { x = 1; } }";
    assert_eq!(codes(src), vec![Code::UndefName]);
}

#[test]
fn state_fields_need_exact_knowledge() {
    let src = "contract V { state A { int x; } state B; V() { ->B; }
       transaction f() returns int { return x; } }";
    assert_eq!(codes(src), vec![Code::UndefName]);
    let src = "contract V { state A { int x; } state B; V() { ->B; }
       transaction f() returns int { if (this in A) { return x; } return 0; } }";
    assert_eq!(codes(src), vec![]);
}

#[test]
fn assigning_a_parameter_is_rejected() {
    let src = "contract U { transaction f(int x) { x = 2; } }";
    assert_eq!(codes(src), vec![Code::TypeMismatch]);
}

#[test]
fn diagnostics_are_deterministic() {
    let src = include_str!("../../../../corpus/auction_lost_asset.obs");
    assert_eq!(check_source(src), check_source(src));
}
