//! Cyclomatic complexity cross-checked against a token-level keyword
//! counter that knows nothing about the syntax tree.

mod common;

use repograph_core::ingest::parse_python;

/// Blanks out string literals and comments, keeping line structure.
fn strip_strings_and_comments(src: &str) -> String {
    let chars: Vec<char> = src.chars().collect();
    let mut out = String::with_capacity(src.len());
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c == '#' {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        if c == '"' || c == '\'' {
            let triple = i + 2 < chars.len() && chars[i + 1] == c && chars[i + 2] == c;
            let q = if triple { 3 } else { 1 };
            i += q;
            while i < chars.len() {
                if chars[i] == '\\' {
                    i += 2;
                    continue;
                }
                if chars[i] == c && (!triple || (i + 2 < chars.len() && chars[i + 1] == c && chars[i + 2] == c)) {
                    i += q;
                    break;
                }
                if chars[i] == '\n' {
                    out.push('\n');
                }
                i += 1;
            }
            out.push_str(" _ ");
            continue;
        }
        out.push(c);
        i += 1;
    }
    out
}

fn keyword_branches(text: &str) -> u32 {
    let cleaned = strip_strings_and_comments(text);
    cleaned
        .split(|c: char| !(c.is_alphanumeric() || c == '_'))
        .filter(|t| matches!(*t, "if" | "elif" | "for" | "while" | "except" | "and" | "or" | "case"))
        .count() as u32
}

fn check_file(path: &str, src: &str) -> usize {
    let parsed = parse_python(path, src);
    assert!(!parsed.parse_failed, "{path}");
    let lines: Vec<&str> = src.lines().collect();
    let all: Vec<_> = parsed.all_functions().cloned().collect();
    let mut checked = 0;
    for f in &all {
        // lines of nested definitions belong to those definitions
        let nested: Vec<(u32, u32)> = all
            .iter()
            .filter(|g| {
                g.qualified_name != f.qualified_name
                    && g.start_line >= f.start_line
                    && g.end_line <= f.end_line
                    && g.qualified_name.starts_with(&f.qualified_name)
            })
            .map(|g| (g.start_line, g.end_line))
            .collect();
        let mut body = String::new();
        for ln in f.start_line..=f.end_line {
            let inside_nested = nested.iter().any(|&(s, e)| ln >= s && ln <= e);
            if !inside_nested {
                body.push_str(lines[(ln - 1) as usize]);
                body.push('\n');
            }
        }
        // decorator lines of nested definitions sit just above them
        let body: String = body
            .lines()
            .filter(|l| !l.trim_start().starts_with('@'))
            .collect::<Vec<_>>()
            .join("\n");
        assert_eq!(
            f.complexity,
            1 + keyword_branches(&body),
            "{}:\n{body}",
            f.qualified_name
        );
        checked += 1;
    }
    checked
}

#[test]
fn fixture_functions_agree_with_token_counter() {
    let mut total = 0;
    for tree in ["repo/c1", "repo/c2", "repo/c3"] {
        for (path, src) in common::read_tree_dir(&common::fixtures_dir().join(tree)) {
            if path.ends_with(".py") {
                total += check_file(&path, &src);
            }
        }
    }
    assert!(total >= 30);
}

#[test]
fn handwritten_samples_agree_with_token_counter() {
    let samples = [
        "def f(x):\n    if x:\n        return 1\n    return 0\n",
        "def g(a, b, c):\n    while a and b or c:\n        a -= 1\n    return [i for i in range(a) if i % 2 if i]\n",
        "def h(v):\n    match v:\n        case 1:\n            return 'one'\n        case [x, y] if x:\n            return 'pair'\n        case _:\n            return None\n",
        "async def k(s):\n    try:\n        async for item in s:\n            pass\n    except (ValueError, KeyError):\n        pass\n    except Exception:\n        raise\n    else:\n        return 2 if s else 3\n",
        "def m(x):\n    # if this comment counted we would see it\n    s = \"for while and or\"\n    if x:\n        pass\n    elif not x:\n        pass\n    return {k: v for k, v in x.items() if v}\n",
    ];
    for (i, src) in samples.iter().enumerate() {
        check_file(&format!("s{i}.py"), src);
    }
}
