//! Inputs shared by the benchmarks: the shipped corpus and a synthetic
//! program whose size scales with a parameter.

pub const CORPUS: &[(&str, &str)] = &[
    ("tvm", include_str!("../../../corpus/tvm.obs")),
    ("auction", include_str!("../../../corpus/auction.obs")),
    ("wallet_check", include_str!("../../../corpus/wallet_check.obs")),
    ("bonds", include_str!("../../../corpus/bonds.obs")),
];

pub const TVM: &str = include_str!("../../../corpus/tvm.obs");

/// A contract with `n` transactions, each a chain of nested state tests
/// over a switch, so checking time grows with both body size and merges.
pub fn synthetic(n: usize) -> String {
    let mut s = String::from(
        "asset contract Gem {}\n\
         contract L { state On; state Off; L() { ->Off; }\n\
           transaction on(L@Off >> On this) { ->On; }\n\
           transaction off(L@On >> Off this) { ->Off; } }\n\
         main asset contract M {\n  Gem@Owned g;\n  M() { g = new Gem(); }\n",
    );
    for i in 0..n {
        s.push_str(&format!(
            "  transaction t{i}(L@On | Off >> Off l, Gem@Owned >> Unowned x) returns Gem@Owned {{\n\
             \x20   if (l in On) {{ l.off(); }} else {{ if (l in Off) {{ l.on(); l.off(); }} }}\n\
             \x20   Gem out = g;\n    g = x;\n    return out;\n  }}\n"
        ));
    }
    s.push_str("}\n");
    s
}
