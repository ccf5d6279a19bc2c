use std::collections::BTreeMap;

use serde_json::{json, Map, Value};

use super::{
    CatchClause, CatchPattern, Invocation, MethodBody, ProgramError, ProgramModel, Statement,
    WorkloadSpec, CATCH_ALL, FORMAT_VERSION,
};
use crate::model::MethodRef;

fn syntax(e: serde_json::Error) -> ProgramError {
    ProgramError::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    }
}

fn object<'a>(v: &'a Value, locus: &str) -> Result<&'a Map<String, Value>, ProgramError> {
    v.as_object()
        .ok_or_else(|| ProgramError::invalid(locus, "expected an object"))
}

fn array<'a>(v: &'a Value, locus: &str) -> Result<&'a Vec<Value>, ProgramError> {
    v.as_array()
        .ok_or_else(|| ProgramError::invalid(locus, "expected an array"))
}

fn string<'a>(v: &'a Value, locus: &str) -> Result<&'a str, ProgramError> {
    v.as_str()
        .ok_or_else(|| ProgramError::invalid(locus, "expected a string"))
}

fn count(v: &Value, locus: &str) -> Result<u32, ProgramError> {
    v.as_u64()
        .and_then(|n| u32::try_from(n).ok())
        .ok_or_else(|| ProgramError::invalid(locus, "expected a non-negative integer"))
}

fn method_ref(v: &Value, locus: &str) -> Result<MethodRef, ProgramError> {
    MethodRef::new(string(v, locus)?).map_err(|e| ProgramError::invalid(locus, e.to_string()))
}

fn check_version(doc: &Map<String, Value>) -> Result<(), ProgramError> {
    match doc.get("format_version").and_then(Value::as_u64) {
        Some(FORMAT_VERSION) => Ok(()),
        Some(v) => Err(ProgramError::invalid(
            "format_version",
            format!("unsupported version {v}"),
        )),
        None => Err(ProgramError::invalid(
            "format_version",
            "missing or not an integer",
        )),
    }
}

fn check_keys(obj: &Map<String, Value>, allowed: &[&str], locus: &str) -> Result<(), ProgramError> {
    for k in obj.keys() {
        if !allowed.contains(&k.as_str()) {
            return Err(ProgramError::invalid(
                locus,
                format!("unexpected key {k:?}"),
            ));
        }
    }
    Ok(())
}

/// Parses a program document:
///
/// ```json
/// {"format_version": 1, "entry": "main",
///  "methods": {"main": {"throws": [], "body": [{"call": "m0"}]}}}
/// ```
pub fn parse_program(text: &str) -> Result<ProgramModel, ProgramError> {
    let doc: Value = serde_json::from_str(text).map_err(syntax)?;
    let doc = object(&doc, "document")?;
    check_keys(doc, &["format_version", "entry", "methods"], "document")?;
    check_version(doc)?;
    let entry = method_ref(
        doc.get("entry")
            .ok_or_else(|| ProgramError::invalid("entry", "missing"))?,
        "entry",
    )?;
    let methods_v = doc
        .get("methods")
        .ok_or_else(|| ProgramError::invalid("methods", "missing"))?;
    let mut methods = BTreeMap::new();
    for (name, def) in object(methods_v, "methods")? {
        let locus = format!("methods.{name}");
        let name = MethodRef::new(name.clone())
            .map_err(|e| ProgramError::invalid(&locus, e.to_string()))?;
        let def = object(def, &locus)?;
        check_keys(def, &["throws", "body"], &locus)?;
        let mut throws = Vec::new();
        if let Some(t) = def.get("throws") {
            for (i, e) in array(t, &format!("{locus}.throws"))?.iter().enumerate() {
                throws.push(string(e, &format!("{locus}.throws[{i}]"))?.to_string());
            }
        }
        throws.sort();
        throws.dedup();
        let body_locus = format!("{locus}.body");
        let body = def
            .get("body")
            .ok_or_else(|| ProgramError::invalid(&body_locus, "missing"))?;
        let statements = parse_block(body, &body_locus)?;
        methods.insert(name, MethodBody { throws, statements });
    }
    ProgramModel::new(entry, methods)
}

fn parse_block(v: &Value, locus: &str) -> Result<Vec<Statement>, ProgramError> {
    array(v, locus)?
        .iter()
        .enumerate()
        .map(|(i, s)| parse_statement(s, &format!("{locus}[{i}]")))
        .collect()
}

fn parse_statement(v: &Value, locus: &str) -> Result<Statement, ProgramError> {
    let obj = object(v, locus)?;
    let only = |key: &str| check_keys(obj, &[key], locus);
    if let Some(tok) = obj.get("emit") {
        only("emit")?;
        return Ok(Statement::Emit(string(tok, locus)?.to_string()));
    }
    if let Some(target) = obj.get("call") {
        only("call")?;
        return Ok(Statement::Call(method_ref(target, locus)?));
    }
    if let Some(t) = obj.get("throw") {
        only("throw")?;
        return Ok(Statement::Throw(string(t, locus)?.to_string()));
    }
    if let Some(h) = obj.get("hang") {
        only("hang")?;
        if h != &Value::Bool(true) {
            return Err(ProgramError::invalid(locus, "hang must be true"));
        }
        return Ok(Statement::Hang);
    }
    if let Some(n) = obj.get("loop") {
        check_keys(obj, &["loop", "body"], locus)?;
        let body_locus = format!("{locus}.body");
        let body = obj
            .get("body")
            .ok_or_else(|| ProgramError::invalid(&body_locus, "missing"))?;
        return Ok(Statement::Loop {
            count: count(n, &format!("{locus}.loop"))?,
            body: parse_block(body, &body_locus)?,
        });
    }
    if let Some(body) = obj.get("try") {
        check_keys(obj, &["try", "catch"], locus)?;
        let body = parse_block(body, &format!("{locus}.try"))?;
        let mut catches = Vec::new();
        if let Some(cs) = obj.get("catch") {
            for (j, c) in array(cs, &format!("{locus}.catch"))?.iter().enumerate() {
                let cl = format!("{locus}.catch[{j}]");
                let c = object(c, &cl)?;
                check_keys(c, &["types", "body"], &cl)?;
                let types_v = c
                    .get("types")
                    .ok_or_else(|| ProgramError::invalid(&cl, "missing types"))?;
                let mut types = Vec::new();
                for (k, t) in array(types_v, &format!("{cl}.types"))?.iter().enumerate() {
                    let t = string(t, &format!("{cl}.types[{k}]"))?;
                    types.push(if t == CATCH_ALL {
                        CatchPattern::Any
                    } else {
                        CatchPattern::Type(t.to_string())
                    });
                }
                let body = match c.get("body") {
                    Some(b) => parse_block(b, &format!("{cl}.body"))?,
                    None => Vec::new(),
                };
                catches.push(CatchClause { types, body });
            }
        }
        return Ok(Statement::Try { body, catches });
    }
    Err(ProgramError::invalid(locus, "unknown statement kind"))
}

fn block_json(block: &[Statement]) -> Value {
    Value::Array(block.iter().map(statement_json).collect())
}

fn statement_json(s: &Statement) -> Value {
    match s {
        Statement::Emit(t) => json!({ "emit": t }),
        Statement::Call(m) => json!({ "call": m.as_str() }),
        Statement::Throw(t) => json!({ "throw": t }),
        Statement::Hang => json!({ "hang": true }),
        Statement::Loop { count, body } => json!({ "loop": count, "body": block_json(body) }),
        Statement::Try { body, catches } => {
            let catches: Vec<Value> = catches
                .iter()
                .map(|c| {
                    let types: Vec<&str> = c
                        .types
                        .iter()
                        .map(|t| match t {
                            CatchPattern::Any => CATCH_ALL,
                            CatchPattern::Type(t) => t.as_str(),
                        })
                        .collect();
                    json!({ "types": types, "body": block_json(&c.body) })
                })
                .collect();
            json!({ "try": block_json(body), "catch": catches })
        }
    }
}

/// Serializes a program back to its document form (pretty-printed).
pub fn program_to_json(program: &ProgramModel) -> String {
    let methods: Map<String, Value> = program
        .methods()
        .iter()
        .map(|(name, body)| {
            (
                name.to_string(),
                json!({ "throws": body.throws, "body": block_json(&body.statements) }),
            )
        })
        .collect();
    let doc = json!({
        "format_version": FORMAT_VERSION,
        "entry": program.entry().as_str(),
        "methods": methods,
    });
    serde_json::to_string_pretty(&doc).expect("json values always serialize")
}

/// Parses `{"format_version": 1, "invocations": [{"method": "main", "repeat": 2}]}`.
/// `repeat` defaults to 1.
pub fn parse_workload(text: &str, program: &ProgramModel) -> Result<WorkloadSpec, ProgramError> {
    let doc: Value = serde_json::from_str(text).map_err(syntax)?;
    let doc = object(&doc, "document")?;
    check_keys(doc, &["format_version", "invocations"], "document")?;
    check_version(doc)?;
    let invs = doc
        .get("invocations")
        .ok_or_else(|| ProgramError::invalid("invocations", "missing"))?;
    let mut invocations = Vec::new();
    for (i, inv) in array(invs, "invocations")?.iter().enumerate() {
        let locus = format!("invocations[{i}]");
        let obj = object(inv, &locus)?;
        check_keys(obj, &["method", "repeat"], &locus)?;
        let method = method_ref(
            obj.get("method")
                .ok_or_else(|| ProgramError::invalid(&locus, "missing method"))?,
            &format!("{locus}.method"),
        )?;
        let repeat = match obj.get("repeat") {
            Some(r) => count(r, &format!("{locus}.repeat"))?,
            None => 1,
        };
        invocations.push(Invocation { method, repeat });
    }
    let w = WorkloadSpec { invocations };
    w.validate(program)?;
    Ok(w)
}

pub fn workload_to_json(workload: &WorkloadSpec) -> String {
    let invs: Vec<Value> = workload
        .invocations
        .iter()
        .map(|i| json!({ "method": i.method.as_str(), "repeat": i.repeat }))
        .collect();
    serde_json::to_string_pretty(&json!({
        "format_version": FORMAT_VERSION,
        "invocations": invs,
    }))
    .expect("json values always serialize")
}

#[cfg(test)]
mod tests {
    use super::*;

    const CHAIN: &str = r#"{
      "format_version": 1,
      "entry": "m2",
      "methods": {
        "m2": {"body": [
          {"try": [{"call": "m1"}], "catch": [{"types": ["IOException"], "body": [{"emit": "recovered"}]}]},
          {"emit": "done"}
        ]},
        "m1": {"body": [{"call": "m0"}]},
        "m0": {"throws": ["IOException"], "body": [{"emit": "read"}]}
      }
    }"#;

    #[test]
    fn parses_minimal_program() {
        let text = r#"{"format_version": 1, "entry": "main", "methods": {
            "main": {"body": [{"call": "m0"}]},
            "m0": {"throws": ["IOException"], "body": [{"emit": "x"}]}}}"#;
        let p = parse_program(text).unwrap();
        assert_eq!(p.methods().len(), 2);
    }

    #[test]
    fn parses_three_method_chain() {
        let p = parse_program(CHAIN).unwrap();
        assert_eq!(p.methods().len(), 3);
        assert_eq!(p.entry().as_str(), "m2");
        let pts = p.enumerate_points("");
        assert_eq!(pts.len(), 1);
        assert_eq!(pts[0].method.as_str(), "m0");
    }

    #[test]
    fn missing_call_target_is_reported_with_locus() {
        let text = r#"{"format_version": 1, "entry": "main", "methods": {
            "main": {"body": [{"emit": "a"}, {"call": "ghost"}]}}}"#;
        match parse_program(text) {
            Err(ProgramError::Invalid { locus, message }) => {
                assert_eq!(locus, "methods.main.body[1]");
                assert!(message.contains("ghost"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_documents() {
        assert!(matches!(
            parse_program("{not json"),
            Err(ProgramError::Syntax { .. })
        ));
        let no_version = r#"{"entry": "main", "methods": {"main": {"body": [{"hang": true}]}}}"#;
        assert!(parse_program(no_version).is_err());
        let bad_stmt = r#"{"format_version": 1, "entry": "main",
            "methods": {"main": {"body": [{"jump": 3}]}}}"#;
        assert!(parse_program(bad_stmt).is_err());
        let empty_entry = r#"{"format_version": 1, "entry": "", "methods": {}}"#;
        assert!(parse_program(empty_entry).is_err());
    }

    #[test]
    fn json_round_trip() {
        let p = parse_program(CHAIN).unwrap();
        let again = parse_program(&program_to_json(&p)).unwrap();
        assert_eq!(p, again);
    }

    #[test]
    fn workload_parsing() {
        let p = parse_program(CHAIN).unwrap();
        let w = parse_workload(
            r#"{"format_version": 1, "invocations": [{"method": "m2", "repeat": 3}, {"method": "m1"}]}"#,
            &p,
        )
        .unwrap();
        assert_eq!(w.invocations.len(), 2);
        assert_eq!(w.invocations[1].repeat, 1);
        assert_eq!(parse_workload(&workload_to_json(&w), &p).unwrap(), w);
        assert!(parse_workload(
            r#"{"format_version": 1, "invocations": [{"method": "m9"}]}"#,
            &p
        )
        .is_err());
        assert!(parse_workload(
            r#"{"format_version": 1, "invocations": [{"method": "m2", "repeat": 0}]}"#,
            &p
        )
        .is_err());
    }
}
