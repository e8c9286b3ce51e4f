//! Composite reward for GUI-agent completions: action-type match, coordinate
//! grounding after rescaling, and tag-format compliance.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value as Json};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionType {
    Click,
    Hover,
    Drag,
    TypeText,
    PressEnter,
    Scroll,
    Hotkey,
    Wait,
    Answer,
}

impl ActionType {
    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "click" => ActionType::Click,
            "hover" => ActionType::Hover,
            "drag" => ActionType::Drag,
            "type_text" => ActionType::TypeText,
            "press_enter" => ActionType::PressEnter,
            "scroll" => ActionType::Scroll,
            "hotkey" => ActionType::Hotkey,
            "wait" => ActionType::Wait,
            "answer" => ActionType::Answer,
            _ => return None,
        })
    }

    pub fn is_pointer(self) -> bool {
        matches!(self, ActionType::Click | ActionType::Hover)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionPayload {
    pub action: ActionType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coordinate: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub from: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub to: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<String>,
}

impl ActionPayload {
    pub fn new(action: ActionType) -> Self {
        ActionPayload {
            action,
            coordinate: None,
            from: None,
            to: None,
            text: None,
            value: None,
        }
    }

    pub fn click(x: f64, y: f64) -> Self {
        ActionPayload {
            coordinate: Some([x, y]),
            ..Self::new(ActionType::Click)
        }
    }

    /// Reads a payload from a decoded dictionary. Returns `None` when the
    /// `action` key is missing or names an unknown action.
    pub fn from_json(v: &Json) -> Option<Self> {
        let obj = v.as_object()?;
        let action = ActionType::parse(obj.get("action")?.as_str()?)?;
        let point = |k: &str| -> Option<[f64; 2]> {
            let arr = obj.get(k)?.as_array()?;
            match arr.as_slice() {
                [x, y] => Some([x.as_f64()?, y.as_f64()?]),
                _ => None,
            }
        };
        let string = |k: &str| -> Option<String> {
            match obj.get(k)? {
                Json::String(s) => Some(s.clone()),
                Json::Null => None,
                other => Some(other.to_string()),
            }
        };
        Some(ActionPayload {
            action,
            coordinate: point("coordinate"),
            from: point("from"),
            to: point("to"),
            text: string("text"),
            value: string("value"),
        })
    }

    /// Accepts either a JSON object or a string holding a dictionary literal.
    pub fn from_json_or_literal(v: &Json) -> Option<Self> {
        match v {
            Json::String(s) => Self::from_json(&parse_dict_literal(s).ok()?),
            other => Self::from_json(other),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParsedCompletion {
    pub think: Option<String>,
    pub action: Option<ActionPayload>,
    pub format_ok: bool,
}

const TAGS: [&str; 4] = ["<think>", "</think>", "<action>", "</action>"];

fn between<'a>(text: &'a str, open: &str, close: &str) -> Option<&'a str> {
    let start = text.find(open)? + open.len();
    let len = text[start..].find(close)?;
    Some(&text[start..start + len])
}

/// Full-string template check: `<think>T</think>`, optional whitespace,
/// `<action>A</action>`, where neither body contains one of the four tags.
pub fn format_matches(text: &str) -> bool {
    let Some(rest) = text.strip_prefix("<think>") else {
        return false;
    };
    let Some(end_think) = rest.find("</think>") else {
        return false;
    };
    let think = &rest[..end_think];
    let rest = rest[end_think + "</think>".len()..].trim_start();
    let Some(rest) = rest.strip_prefix("<action>") else {
        return false;
    };
    let Some(body) = rest.strip_suffix("</action>") else {
        return false;
    };
    !TAGS.iter().any(|t| think.contains(t) || body.contains(t))
}

pub fn parse_completion(text: &str) -> ParsedCompletion {
    let think = between(text, "<think>", "</think>").map(str::to_string);
    let action = between(text, "<action>", "</action>")
        .and_then(|body| parse_dict_literal(body.trim()).ok())
        .and_then(|v| ActionPayload::from_json(&v));
    ParsedCompletion {
        think,
        action,
        format_ok: format_matches(text),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RewardError {
    #[error("coordinate or scale is not finite")]
    NonFinite,
    #[error("scale factors must be positive")]
    NonPositiveScale,
    #[error("mapped coordinate is out of the integer range")]
    OutOfRange,
}

/// Sign, integer mantissa and decimal exponent of the shortest decimal that
/// round-trips to `v`, so that `v` reads as `±mantissa × 10^exponent`.
fn decimal_parts(v: f64) -> (bool, u64, i32) {
    let text = format!("{:e}", v.abs());
    let (digits, exp) = text.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    let (int, frac) = digits.split_once('.').unwrap_or((digits, ""));
    let mantissa: u64 = format!("{int}{frac}").parse().expect("at most 17 digits");
    (v.is_sign_negative(), mantissa, exp - frac.len() as i32)
}

/// `floor(a * b)` for the decimal values `a` and `b` print as, computed
/// exactly in integers. `None` when the result leaves the safe range.
fn floor_product(a: f64, b: f64) -> Option<i64> {
    const LIMIT: u128 = 9_000_000_000_000_000;
    let (na, ma, ea) = decimal_parts(a);
    let (nb, mb, eb) = decimal_parts(b);
    let m = u128::from(ma) * u128::from(mb);
    if m == 0 {
        return Some(0);
    }
    let negative = na != nb;
    let e = ea + eb;
    let (q, exact) = if e >= 0 {
        let scaled = 10u128
            .checked_pow(e as u32)
            .and_then(|p| m.checked_mul(p))?;
        (scaled, true)
    } else if -e > 38 {
        (0, false)
    } else {
        let p = 10u128.pow((-e) as u32);
        (m / p, m % p == 0)
    };
    let q = if negative && !exact { q + 1 } else { q };
    if q >= LIMIT {
        return None;
    }
    Some(if negative { -(q as i64) } else { q as i64 })
}

/// `(floor(s_x * x), floor(s_y * y))`, exact for the decimal values given.
pub fn map_coordinates(coord: [f64; 2], scale: [f64; 2]) -> Result<[i64; 2], RewardError> {
    if coord.iter().chain(scale.iter()).any(|v| !v.is_finite()) {
        return Err(RewardError::NonFinite);
    }
    if scale.iter().any(|s| *s <= 0.0) {
        return Err(RewardError::NonPositiveScale);
    }
    let mut out = [0i64; 2];
    for i in 0..2 {
        out[i] = floor_product(scale[i], coord[i]).ok_or(RewardError::OutOfRange)?;
    }
    Ok(out)
}

pub fn reward_action(pred: &ParsedCompletion, gold: &ActionPayload) -> u8 {
    u8::from(
        pred.action
            .as_ref()
            .is_some_and(|a| a.action == gold.action),
    )
}

/// Inclusive point-in-box test after rescaling, gated on a type match.
pub fn reward_coordinate(
    pred: &ParsedCompletion,
    gold: &ActionPayload,
    bbox: [f64; 4],
    scale: [f64; 2],
) -> u8 {
    let Some(p) = &pred.action else { return 0 };
    if p.action != gold.action {
        return 0;
    }
    if !p.action.is_pointer() {
        return 1;
    }
    let Some(c) = p.coordinate else { return 0 };
    let Ok([x, y]) = map_coordinates(c, scale) else {
        return 0;
    };
    let (x, y) = (x as f64, y as f64);
    u8::from(bbox[0] <= x && x <= bbox[2] && bbox[1] <= y && y <= bbox[3])
}

pub fn reward_format(pred: &ParsedCompletion) -> u8 {
    u8::from(pred.format_ok)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardInput {
    pub completion: String,
    pub gold: ActionPayload,
    /// `(x1, y1, x2, y2)` in original pixel space.
    pub bbox: [f64; 4],
    /// `(s_x, s_y)`.
    pub scale: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub r_act: u8,
    pub r_coord: u8,
    pub r_fmt: u8,
    pub total: u8,
}

pub fn reward_total(input: &RewardInput) -> RewardBreakdown {
    let pred = parse_completion(&input.completion);
    let r_act = reward_action(&pred, &input.gold);
    let r_coord = reward_coordinate(&pred, &input.gold, input.bbox, input.scale);
    let r_fmt = reward_format(&pred);
    RewardBreakdown {
        r_act,
        r_coord,
        r_fmt,
        total: r_act + r_coord + r_fmt,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchRecord {
    pub line: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reward: Option<RewardBreakdown>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub n: usize,
    pub errors: usize,
    /// Means of `r_act`, `r_coord`, `r_fmt` and `total`; absent when `n = 0`.
    pub means: Option<[f64; 4]>,
}

fn batch_input(v: &Json) -> Result<RewardInput, String> {
    let obj = v.as_object().ok_or("expected an object")?;
    let completion = obj
        .get("completion")
        .and_then(Json::as_str)
        .ok_or("missing string field `completion`")?
        .to_string();
    let gold = obj
        .get("gold")
        .and_then(ActionPayload::from_json_or_literal)
        .ok_or("missing or unreadable `gold` action")?;
    let nums = |k: &str, n: usize| -> Result<Vec<f64>, String> {
        let arr = obj.get(k).and_then(Json::as_array);
        let vals: Option<Vec<f64>> = arr.and_then(|a| a.iter().map(Json::as_f64).collect());
        match vals {
            Some(v) if v.len() == n => Ok(v),
            _ => Err(alloc::format!("`{k}` must be an array of {n} numbers")),
        }
    };
    let b = nums("bbox", 4)?;
    let s = nums("scale", 2)?;
    if b[0] > b[2] || b[1] > b[3] {
        return Err("bbox corners are out of order".into());
    }
    if s.iter().any(|v| *v <= 0.0) {
        return Err("scale factors must be positive".into());
    }
    Ok(RewardInput {
        completion,
        gold,
        bbox: [b[0], b[1], b[2], b[3]],
        scale: [s[0], s[1]],
    })
}

/// Scores line-delimited records. Blank lines are skipped; malformed lines
/// yield an error record and do not stop the run.
pub fn score_batch(text: &str) -> (Vec<BatchRecord>, BatchSummary) {
    let mut records = Vec::new();
    let mut sums = [0u64; 4];
    let mut n = 0usize;
    for (i, raw) in text.lines().enumerate() {
        if raw.trim().is_empty() {
            continue;
        }
        let parsed = serde_json::from_str::<Json>(raw)
            .map_err(|e| e.to_string())
            .and_then(|v| batch_input(&v));
        match parsed {
            Ok(input) => {
                let r = reward_total(&input);
                for (s, v) in sums.iter_mut().zip([r.r_act, r.r_coord, r.r_fmt, r.total]) {
                    *s += u64::from(v);
                }
                n += 1;
                records.push(BatchRecord {
                    line: i + 1,
                    reward: Some(r),
                    error: None,
                });
            }
            Err(e) => records.push(BatchRecord {
                line: i + 1,
                reward: None,
                error: Some(e),
            }),
        }
    }
    let errors = records.iter().filter(|r| r.error.is_some()).count();
    let means = (n > 0).then(|| sums.map(|s| s as f64 / n as f64));
    (records, BatchSummary { n, errors, means })
}

/// Reads a Python-style dictionary literal: single or double quoted
/// strings, `True`/`False`/`None`, tuples as arrays, and bare words (read up
/// to the next delimiter) as strings.
pub fn parse_dict_literal(text: &str) -> Result<Json, String> {
    let mut p = LiteralParser {
        s: text.as_bytes(),
        src: text,
        i: 0,
    };
    let v = p.value()?;
    p.ws();
    if p.i != p.s.len() {
        return Err(alloc::format!("trailing input at byte {}", p.i));
    }
    Ok(v)
}

struct LiteralParser<'a> {
    s: &'a [u8],
    src: &'a str,
    i: usize,
}

impl LiteralParser<'_> {
    fn ws(&mut self) {
        while self.i < self.s.len() && self.s[self.i].is_ascii_whitespace() {
            self.i += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.ws();
        self.s.get(self.i).copied()
    }

    fn expect(&mut self, c: u8) -> Result<(), String> {
        if self.peek() == Some(c) {
            self.i += 1;
            Ok(())
        } else {
            Err(alloc::format!(
                "expected `{}` at byte {}",
                c as char,
                self.i
            ))
        }
    }

    fn value(&mut self) -> Result<Json, String> {
        match self.peek() {
            Some(b'{') => self.object(),
            Some(b'[') => self.sequence(b']'),
            Some(b'(') => self.sequence(b')'),
            Some(q @ (b'\'' | b'"')) => self.string(q).map(Json::String),
            Some(c) if c == b'-' || c == b'+' || c == b'.' || c.is_ascii_digit() => self.number(),
            Some(_) => Ok(self.word()),
            None => Err("unexpected end of input".into()),
        }
    }

    fn object(&mut self) -> Result<Json, String> {
        self.expect(b'{')?;
        let mut map = Map::new();
        loop {
            if self.peek() == Some(b'}') {
                self.i += 1;
                return Ok(Json::Object(map));
            }
            let key = match self.peek() {
                Some(q @ (b'\'' | b'"')) => self.string(q)?,
                _ => match self.word() {
                    Json::String(s) => s,
                    other => other.to_string(),
                },
            };
            self.expect(b':')?;
            let v = self.value()?;
            map.insert(key, v);
            match self.peek() {
                Some(b',') => self.i += 1,
                Some(b'}') => {}
                _ => return Err(alloc::format!("expected `,` or `}}` at byte {}", self.i)),
            }
        }
    }

    fn sequence(&mut self, close: u8) -> Result<Json, String> {
        self.i += 1;
        let mut items = Vec::new();
        loop {
            if self.peek() == Some(close) {
                self.i += 1;
                return Ok(Json::Array(items));
            }
            items.push(self.value()?);
            match self.peek() {
                Some(b',') => self.i += 1,
                Some(c) if c == close => {}
                _ => {
                    return Err(alloc::format!(
                        "expected `,` or `{}` at byte {}",
                        close as char,
                        self.i
                    ))
                }
            }
        }
    }

    fn string(&mut self, quote: u8) -> Result<String, String> {
        self.i += 1;
        let mut out = String::new();
        let mut chars = self.src[self.i..].char_indices();
        while let Some((off, c)) = chars.next() {
            match c {
                c if c as u32 == u32::from(quote) => {
                    self.i += off + 1;
                    return Ok(out);
                }
                '\\' => match chars.next() {
                    Some((_, 'n')) => out.push('\n'),
                    Some((_, 't')) => out.push('\t'),
                    Some((_, 'r')) => out.push('\r'),
                    Some((_, other)) => out.push(other),
                    None => break,
                },
                c => out.push(c),
            }
        }
        Err("unterminated string".into())
    }

    fn number(&mut self) -> Result<Json, String> {
        let start = self.i;
        while self.i < self.s.len()
            && matches!(
                self.s[self.i],
                b'0'..=b'9' | b'-' | b'+' | b'.' | b'e' | b'E'
            )
        {
            self.i += 1;
        }
        let lit = &self.src[start..self.i];
        let v: f64 = lit
            .parse()
            .map_err(|_| alloc::format!("bad number `{lit}`"))?;
        serde_json::Number::from_f64(v)
            .map(Json::Number)
            .ok_or_else(|| alloc::format!("bad number `{lit}`"))
    }

    fn word(&mut self) -> Json {
        let start = self.i;
        while self.i < self.s.len() && !matches!(self.s[self.i], b',' | b'}' | b']' | b')' | b':') {
            self.i += 1;
        }
        match self.src[start..self.i].trim() {
            "True" | "true" => Json::Bool(true),
            "False" | "false" => Json::Bool(false),
            "None" | "null" => Json::Null,
            w => Json::String(w.to_string()),
        }
    }
}
