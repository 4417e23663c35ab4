//! Static verification: symbolic execution against possibly-imprecise specs.

mod exec;
mod state;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::ast::{Atom, Conjunct, Program, SourceLoc};
use crate::lexer::lex;
use crate::obligation::{Insertion, ObligationKey, ObligationKind};
use crate::parser::parse_formula;
use crate::pretty::pretty_print;

pub use state::SymState;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodStatus {
    Verified,
    VerifiedWithResiduals,
    StaticError,
}

impl MethodStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            MethodStatus::Verified => "verified",
            MethodStatus::VerifiedWithResiduals => "verified-with-residuals",
            MethodStatus::StaticError => "static-error",
        }
    }
}

/// An obligation left for run time.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResidualCheck {
    pub id: String,
    pub kind: ObligationKind,
    #[serde(rename = "payload_text", with = "payload_serde")]
    pub payload: Atom,
    pub line: u32,
    pub col: u32,
    pub insertion: Insertion,
    /// Position within the obligation sequence of its site.
    pub ordinal: u32,
}

impl ResidualCheck {
    pub fn site(&self) -> SourceLoc {
        SourceLoc::new(self.line, self.col)
    }

    pub fn key(&self) -> ObligationKey {
        ObligationKey::new(self.kind, self.site(), self.payload.to_string())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Reason {
    /// The prover refuted the obligation.
    Violated,
    /// Not provable and no imprecision to fall back on.
    Unprovable,
    /// Refuted under imprecision: the residual check always fails here.
    AlwaysFails,
    DuplicatePermission,
    VacuousPrecondition,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StaticDiagnostic {
    pub severity: Severity,
    pub reason: Reason,
    pub kind: Option<ObligationKind>,
    pub payload: Option<String>,
    pub line: u32,
    pub col: u32,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MethodReport {
    /// `Contract.method`.
    pub name: String,
    pub status: MethodStatus,
    pub residuals: Vec<ResidualCheck>,
    pub diagnostics: Vec<StaticDiagnostic>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProverStats {
    pub queries: u64,
    pub proved: u64,
    pub disproved: u64,
    pub unknown: u64,
}

impl ProverStats {
    fn add(&mut self, o: &ProverStats) {
        self.queries += o.queries;
        self.proved += o.proved;
        self.disproved += o.disproved;
        self.unknown += o.unknown;
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub digest: String,
    pub methods: Vec<MethodReport>,
    pub prover: ProverStats,
}

impl VerificationReport {
    pub fn has_static_error(&self) -> bool {
        self.methods.iter().any(|m| m.status == MethodStatus::StaticError)
    }

    pub fn residuals(&self) -> impl Iterator<Item = &ResidualCheck> {
        self.methods.iter().flat_map(|m| m.residuals.iter())
    }

    pub fn method(&self, name: &str) -> Option<&MethodReport> {
        self.methods.iter().find(|m| m.name == name)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct VerifyOptions {
    pub dump_constraints: bool,
}

/// Hex SHA-256 of the canonical rendering of `p`.
pub fn program_digest(p: &Program) -> String {
    let text = pretty_print(p);
    let hash = Sha256::digest(text.as_bytes());
    hash.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn verify_program(p: &Program) -> VerificationReport {
    verify_program_with(p, VerifyOptions::default()).0
}

/// Also returns the constraint dump when requested.
pub fn verify_program_with(p: &Program, opts: VerifyOptions) -> (VerificationReport, String) {
    let mut methods = Vec::new();
    let mut prover = ProverStats::default();
    let mut dump = String::new();
    for c in p.contracts.iter().filter(|c| !c.is_extern) {
        for m in &c.methods {
            let out = exec::verify_method(p, c, m, opts.dump_constraints);
            prover.add(&out.stats);
            dump.push_str(&out.dump);
            methods.push(out.report);
        }
    }
    // ids follow method order, then site, then position within the site
    let mut next = 0;
    for m in &mut methods {
        m.residuals
            .sort_by_key(|r| (r.site(), insertion_rank(r.insertion), r.ordinal));
        for r in &mut m.residuals {
            r.id = format!("c{next}");
            next += 1;
        }
    }
    let report = VerificationReport {
        digest: program_digest(p),
        methods,
        prover,
    };
    (report, dump)
}

fn insertion_rank(i: Insertion) -> u8 {
    match i {
        Insertion::AtEntry => 0,
        Insertion::BeforeStatement => 1,
        Insertion::LoopEnd => 2,
        Insertion::AtExit => 3,
    }
}

/// Parses a single atom such as `scratch >= quantity` or `acc(Count)`.
pub fn parse_atom(text: &str) -> Option<Atom> {
    let tokens = lex(text).ok()?;
    let f = parse_formula(&tokens).ok()?;
    match f.conjuncts.as_slice() {
        [Conjunct::Atom(a)] => Some(a.clone()),
        _ => None,
    }
}

mod payload_serde {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    use crate::ast::Atom;

    pub fn serialize<S: Serializer>(a: &Atom, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&a.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Atom, D::Error> {
        let text = String::deserialize(d)?;
        super::parse_atom(&text).ok_or_else(|| D::Error::custom(format!("bad payload `{text}`")))
    }
}
