//! Prompt construction and response parsing.

use std::fmt::Write;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;
use trajedit_core::Scene;
use trajedit_script::BUILTINS;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PromptOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coordinate_system: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub environment_description: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptRequest {
    pub instruction: String,
    pub scene: Scene,
    #[serde(default)]
    pub feedback_history: Vec<String>,
    #[serde(default)]
    pub overrides: PromptOverrides,
}

impl PromptRequest {
    pub fn new(instruction: impl Into<String>, scene: Scene) -> Self {
        Self {
            instruction: instruction.into(),
            scene,
            feedback_history: Vec::new(),
            overrides: PromptOverrides::default(),
        }
    }

    pub fn with_feedback(mut self, feedback: Vec<String>) -> Self {
        self.feedback_history = feedback;
        self
    }
}

const PREAMBLE: &str = "You are an intelligent assistant that modifies robotic trajectories as per instruction of a user. \
Your task is to generate a JSON object with the following contents:
1) A high-level plan on what points need to be changed based on the instruction. Think step by step.
2) AdaptScript code that changes the waypoints in accordance with the high-level plan.";

const FUNCTIONS: &str = "FUNCTIONS AVAILABLE:
detect_objects(object_name): returns a [x,y,z] coordinates if the object is present else returns None
get_trajectory(): returns the trajectory as a list of [x,y,z,velocity]";

pub const DEFAULT_COORDINATE_SYSTEM: &str = "The positive X axis is left, Negative X axis is right
The positive Y axis is front, Negative Y axis is back
The positive Z axis is up, Negative Z axis is down.";

/// Rule texts. The first is reworded to point at the language subset.
pub const RULES: &[&str] = &[
    "Use only the given functions and the builtins listed under LANGUAGE SUBSET for getting required data, do not implement dummy functions.",
    "Shift the points gradually if needed to ensure a smooth trajectory.",
    "Deduce from instruction if the goal point should be changed.",
    "Waypoints can be added or removed. Ensure that waypoints do not violate any constraints.",
    "Intermediate waypoints shall be modified to ensure a smooth trajectory.",
    "Store the new trajectory in a variable called modified_trajectory.",
    "If required, the changes in the velocity should be with respect to the original velocity, and velocity changes shall be smooth.",
];

const SUBSET: &str = "The code must be written in AdaptScript, a small indentation-delimited subset of Python. Indent blocks with spaces.
Statements:
    x = expr            (also x += expr, x -= expr, x *= expr, x /= expr)
    x[i] = expr         (also nested, e.g. t[i][0] = expr)
    for i in range(stop) / range(start, stop) / range(start, stop, step):
    if cond: ... elif cond: ... else: ...
    expression statements such as xs.append(v) or xs.extend(ys)
Expressions: numbers, strings, True, False, None, list literals [a, b], indexing t[i] (negative indices count from the end), slices t[i:j] with either bound optional, unary -, not, arithmetic + - * / % **, comparisons < <= > >= == != (compare with None using ==), and, or.
All numbers are floating point; list indices and range() arguments must be whole numbers.
Not available: def, lambda, while, import, return, classes, dicts, tuples, list comprehensions, `is`, `in` outside for-loops, `//`, attribute access other than .append and .extend, any function not listed below.
Builtin functions:";

const OUTPUT: &str = "OUTPUT STRUCTURE:
Return a single JSON object and nothing else:
{
\"high_level_plan\": \"Provide the details here\",
\"code\": \"Generate the AdaptScript code here as a single string\"
}
The functions `detect_objects()` and `get_trajectory()` are assumed to be predefined and should NOT be implemented. Just use these functions as they are. The code should focus on using these functions and the logic around them, without providing any dummy implementation for these functions.";

const EXAMPLES: &str = "IN-CONTEXT EXAMPLES OF HIGH-LEVEL PLANS:
EXAMPLE 1:
Instruction: Go left
High-level plan:
1) Shift the goal position left.
2) Keep the start position the same
3) modify the points in the middle to ensure a gradual and smooth change in the trajectory preserving the shape of the trajectory.

EXAMPLE 2:
Instruction: Walk further away from the box/ walk closer to the box
High-level plan:
1) Keep the goal position the same
2) Keep the starting position the same.
3) Identify the location of the box. Iterate over all the intermediate points increasing/decreasing their distance from the box.
4) Ensure that the shape of the trajectory is preserved. Smoothen the trajectory to remove abrupt changes";

/// Prefix of the line that carries the instruction; always the last line.
pub const INSTRUCTION_PREFIX: &str = "INSTRUCTION: ";

fn fmt_coord(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

/// Renders the environment section body, or `None` when there is nothing to say.
pub fn environment_text(scene: &Scene, overrides: &PromptOverrides) -> Option<String> {
    if let Some(text) = overrides
        .environment_description
        .as_deref()
        .filter(|s| !s.trim().is_empty())
    {
        return Some(text.trim().to_string());
    }
    if let Some(desc) = scene.description() {
        return Some(desc.trim().to_string());
    }
    if scene.objects().is_empty() {
        return None;
    }
    let lines: Vec<String> = scene
        .objects()
        .iter()
        .map(|o| {
            let p = o.position;
            format!(
                "{} at [{}, {}, {}]",
                o.label,
                fmt_coord(p[0]),
                fmt_coord(p[1]),
                fmt_coord(p[2])
            )
        })
        .collect();
    Some(lines.join("\n"))
}

pub fn build_prompt(req: &PromptRequest) -> String {
    let mut out = String::new();
    out.push_str(PREAMBLE);
    out.push_str("\n\n");
    out.push_str(FUNCTIONS);
    out.push_str("\n\nCOORDINATE SYSTEM:\n");
    let coords = req
        .overrides
        .coordinate_system
        .as_deref()
        .filter(|s| !s.trim().is_empty())
        .unwrap_or(DEFAULT_COORDINATE_SYSTEM);
    out.push_str(coords.trim());
    out.push_str("\n\n");
    if let Some(env) = environment_text(&req.scene, &req.overrides) {
        out.push_str("ENVIRONMENT DESCRIPTION:\n");
        out.push_str(&env);
        out.push_str("\n\n");
    }
    out.push_str("RULES:\n");
    for (i, r) in RULES.iter().enumerate() {
        let _ = writeln!(out, "{}. {r}", i + 1);
    }
    out.push_str("\nLANGUAGE SUBSET:\n");
    out.push_str(SUBSET);
    out.push('\n');
    for b in BUILTINS {
        let _ = writeln!(out, "    {}: {}", b.signature, b.summary);
    }
    out.push('\n');
    out.push_str(OUTPUT);
    out.push_str("\n\n");
    out.push_str(EXAMPLES);
    out.push_str("\n\n");
    if !req.feedback_history.is_empty() {
        out.push_str("FEEDBACK:\n");
        out.push_str(
            "Earlier proposals for this instruction were reviewed. Address every item below.\n",
        );
        for (i, f) in req.feedback_history.iter().enumerate() {
            let _ = writeln!(
                out,
                "{}. Original instruction: \"{}\". Feedback: \"{}\"",
                i + 1,
                req.instruction.trim(),
                f.trim()
            );
        }
        out.push('\n');
    }
    out.push_str(
        "Return a valid AdaptScript code and high-level plan according to the following instruction:\n",
    );
    out.push_str(INSTRUCTION_PREFIX);
    out.push_str(req.instruction.trim());
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposalText {
    pub high_level_plan: String,
    pub code: String,
    pub raw: String,
}

#[derive(Debug, Clone, PartialEq, Error, Serialize, Deserialize)]
#[error("could not parse the response: {message}")]
pub struct ParseFailure {
    pub message: String,
    pub raw: String,
}

const CODE_KEYS: &[&str] = &["code", "python_code", "Python code"];

pub fn parse_response(text: &str) -> Result<ProposalText, ParseFailure> {
    let fail = |message: String| ParseFailure {
        message,
        raw: text.to_string(),
    };
    let body = strip_fences(text);
    let Some(object) = first_object(body) else {
        return Err(fail("no JSON object found in the response".into()));
    };
    let value: Value = serde_json::from_str(object)
        .or_else(|_| serde_json::from_str(&escape_raw_controls(object)))
        .map_err(|e| fail(format!("the response object is not valid JSON: {e}")))?;
    let Value::Object(map) = value else {
        return Err(fail("the response is not a JSON object".into()));
    };
    let plan = match map.get("high_level_plan") {
        None => return Err(fail("missing key \"high_level_plan\"".into())),
        Some(v) => text_of(v).ok_or_else(|| fail("\"high_level_plan\" must be a string".into()))?,
    };
    let code = match CODE_KEYS.iter().find_map(|k| map.get(*k)) {
        None => return Err(fail("missing key \"code\"".into())),
        Some(Value::String(s)) => s.clone(),
        Some(_) => return Err(fail("\"code\" must be a string".into())),
    };
    let plan = plan.trim().to_string();
    let code = strip_fences(&code).trim().to_string();
    if plan.is_empty() {
        return Err(fail("\"high_level_plan\" is empty".into()));
    }
    if code.is_empty() {
        return Err(fail("\"code\" is empty".into()));
    }
    Ok(ProposalText {
        high_level_plan: plan,
        code,
        raw: text.to_string(),
    })
}

/// A plan may come back as one string or as a list of step strings.
fn text_of(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Array(items) => items
            .iter()
            .map(|i| i.as_str().map(str::to_string))
            .collect::<Option<Vec<_>>>()
            .map(|v| v.join("\n")),
        _ => None,
    }
}

/// Removes one surrounding ``` fence (with optional language tag).
fn strip_fences(text: &str) -> &str {
    let t = text.trim();
    let Some(rest) = t.strip_prefix("```") else {
        return t;
    };
    let rest = match rest.find('\n') {
        Some(i) => &rest[i + 1..],
        None => return t,
    };
    match rest.rfind("```") {
        Some(end) => rest[..end].trim(),
        None => rest.trim(),
    }
}

/// Slice of the first balanced `{...}`, skipping braces inside strings.
fn first_object(text: &str) -> Option<&str> {
    let start = text.find('{')?;
    let mut depth = 0usize;
    let mut in_str: Option<char> = None;
    let mut escaped = false;
    for (i, c) in text[start..].char_indices() {
        if let Some(q) = in_str {
            if escaped {
                escaped = false;
            } else if c == '\\' {
                escaped = true;
            } else if c == q {
                in_str = None;
            }
            continue;
        }
        match c {
            '"' => in_str = Some('"'),
            '{' => depth += 1,
            '}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(&text[start..start + i + 1]);
                }
            }
            _ => {}
        }
    }
    None
}

/// Models often put literal newlines and tabs inside JSON strings.
fn escape_raw_controls(object: &str) -> String {
    let mut out = String::with_capacity(object.len() + 16);
    let mut in_str = false;
    let mut escaped = false;
    for c in object.chars() {
        if in_str {
            if escaped {
                escaped = false;
                out.push(c);
                continue;
            }
            match c {
                '\\' => {
                    escaped = true;
                    out.push(c);
                }
                '"' => {
                    in_str = false;
                    out.push(c);
                }
                '\n' => out.push_str("\\n"),
                '\r' => out.push_str("\\r"),
                '\t' => out.push_str("\\t"),
                c => out.push(c),
            }
        } else {
            if c == '"' {
                in_str = true;
            }
            out.push(c);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use trajedit_core::SceneObject;

    fn last_line(s: &str) -> &str {
        s.lines().last().unwrap()
    }

    #[test]
    fn instruction_in_final_slot_once() {
        let p = build_prompt(&PromptRequest::new("Go left", Scene::empty()));
        assert_eq!(last_line(&p), "INSTRUCTION: Go left");
        assert_eq!(last_line(&p).matches("Go left").count(), 1);
        assert!(p.contains("EXAMPLE 1:\nInstruction: Go left"));
        assert!(p.contains("EXAMPLE 2:\nInstruction: Walk further away from the box"));
        assert!(!p.contains("ENVIRONMENT DESCRIPTION"));
        assert!(!p.contains("FEEDBACK:"));
    }

    #[test]
    fn feedback_section_restates_instruction() {
        let req = PromptRequest::new("Go left", Scene::empty())
            .with_feedback(vec!["also keep speed constant".into()]);
        let p = build_prompt(&req);
        let fb = &p[p.find("FEEDBACK:").unwrap()..p.rfind("Return a valid").unwrap()];
        assert!(fb.contains("\"also keep speed constant\""));
        assert!(fb.contains("Go left"));
    }

    #[test]
    fn environment_lists_objects() {
        let scene = Scene::new(vec![SceneObject::new("box", [1.0, 2.0, 0.0])], None).unwrap();
        let p = build_prompt(&PromptRequest::new("Go left", scene));
        assert!(p.contains("ENVIRONMENT DESCRIPTION:\nbox at [1, 2, 0]\n"));
    }

    #[test]
    fn description_wins_over_object_list() {
        let scene = Scene::new(
            vec![SceneObject::new("box", [1.0, 2.0, 0.0])],
            Some("A box sits on the floor.".into()),
        )
        .unwrap();
        let p = build_prompt(&PromptRequest::new("Go left", scene));
        assert!(p.contains("ENVIRONMENT DESCRIPTION:\nA box sits on the floor.\n"));
        assert!(!p.contains("box at ["));
    }

    #[test]
    fn sections_in_order() {
        let scene = Scene::new(vec![SceneObject::new("box", [1.0, 2.0, 0.0])], None).unwrap();
        let req = PromptRequest::new("Go left", scene).with_feedback(vec!["x".into()]);
        let p = build_prompt(&req);
        let order = [
            "You are an intelligent assistant",
            "Think step by step",
            "FUNCTIONS AVAILABLE:",
            "COORDINATE SYSTEM:",
            "ENVIRONMENT DESCRIPTION:",
            "RULES:",
            "LANGUAGE SUBSET:",
            "OUTPUT STRUCTURE:",
            "EXAMPLE 1:",
            "EXAMPLE 2:",
            "FEEDBACK:",
            "INSTRUCTION: Go left",
        ];
        let mut at = 0;
        for needle in order {
            let i = p[at..]
                .find(needle)
                .unwrap_or_else(|| panic!("{needle} missing or out of order"));
            at += i + needle.len();
        }
    }

    #[test]
    fn every_builtin_is_documented() {
        let p = build_prompt(&PromptRequest::new("Go left", Scene::empty()));
        for b in BUILTINS {
            assert!(p.contains(b.signature), "{}", b.name);
        }
    }

    #[test]
    fn overrides_replace_sections() {
        let mut req = PromptRequest::new("Go up", Scene::empty());
        req.overrides.coordinate_system = Some("Z is up.".into());
        req.overrides.environment_description = Some("An empty room.".into());
        let p = build_prompt(&req);
        assert!(p.contains("COORDINATE SYSTEM:\nZ is up.\n"));
        assert!(p.contains("ENVIRONMENT DESCRIPTION:\nAn empty room.\n"));
    }

    #[test]
    fn parse_plain_object() {
        let text = r#"{"high_level_plan": "1) keep it", "code": "modified_trajectory = get_trajectory()"}"#;
        let p = parse_response(text).unwrap();
        assert_eq!(p.high_level_plan, "1) keep it");
        assert_eq!(p.code, "modified_trajectory = get_trajectory()");
        assert_eq!(p.raw, text);
    }

    #[test]
    fn parse_fenced_object() {
        let inner = r#"{"high_level_plan": "1) keep it", "code": "modified_trajectory = get_trajectory()"}"#;
        let a = parse_response(inner).unwrap();
        let b = parse_response(&format!("```json\n{inner}\n```")).unwrap();
        assert_eq!((a.high_level_plan, a.code), (b.high_level_plan, b.code));
    }

    #[test]
    fn parse_rejects_prose() {
        let e = parse_response("Sure! Here is the plan you asked for.").unwrap_err();
        assert!(e.message.contains("no JSON object"));
        assert_eq!(e.raw, "Sure! Here is the plan you asked for.");
    }

    #[test]
    fn parse_accepts_alternate_keys_and_shapes() {
        let t = "Here you go:\n{\"high_level_plan\": [\"1) a\", \"2) b\"], \"Python code\": \"t = get_trajectory()\nmodified_trajectory = t\"} trailing";
        let p = parse_response(t).unwrap();
        assert_eq!(p.high_level_plan, "1) a\n2) b");
        assert_eq!(p.code, "t = get_trajectory()\nmodified_trajectory = t");
        let t = r#"{"high_level_plan": "p", "python_code": "```python\nx = 1\n```"}"#;
        assert_eq!(parse_response(t).unwrap().code, "x = 1");
    }

    #[test]
    fn parse_reports_missing_or_empty_fields() {
        assert!(parse_response(r#"{"code": "x = 1"}"#)
            .unwrap_err()
            .message
            .contains("high_level_plan"));
        assert!(parse_response(r#"{"high_level_plan": "p"}"#)
            .unwrap_err()
            .message
            .contains("code"));
        assert!(
            parse_response(r#"{"high_level_plan": " ", "code": "x = 1"}"#)
                .unwrap_err()
                .message
                .contains("empty")
        );
        assert!(parse_response(r#"{"high_level_plan": "p", "code": "x = {"#).is_err());
    }

    #[test]
    fn braces_inside_strings_do_not_end_the_object() {
        let t = r#"{"high_level_plan": "use } carefully", "code": "x = \"{\"\nmodified_trajectory = get_trajectory()"}"#;
        let p = parse_response(t).unwrap();
        assert_eq!(p.high_level_plan, "use } carefully");
    }
}
