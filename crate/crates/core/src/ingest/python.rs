//! Python source extraction on top of the tree-sitter grammar.
//!
//! Extraction rules:
//! - functions nested in functions are flattened into the file's function
//!   list with a qualified name that records the nesting; classes nested
//!   anywhere go to the file's class list;
//! - metrics of a function exclude the bodies of nested definitions;
//! - complexity counts `if`, `elif`, `for`, `while`, `except`, each `and` /
//!   `or`, conditional expressions, `case` arms, and comprehension `for` /
//!   `if` clauses;
//! - file-level string constants are strings outside any function and not
//!   used as a docstring or inside a decorator;
//! - imports are collected anywhere in the file, deduplicated in order.

use std::collections::{HashMap, HashSet};

use tree_sitter::{Node, Parser};

use super::types::{ClassInfo, FunctionInfo, Param, ParsedFile};

const MAX_CALLEE_LEN: usize = 120;

pub(crate) fn new_parser() -> Parser {
    let mut parser = Parser::new();
    parser
        .set_language(&tree_sitter_python::LANGUAGE.into())
        .expect("bundled python grammar is compatible");
    parser
}

pub(crate) fn line_count(source: &str) -> u32 {
    if source.is_empty() {
        return 0;
    }
    let newlines = source.bytes().filter(|&b| b == b'\n').count();
    (newlines + usize::from(!source.ends_with('\n'))) as u32
}

/// Parses one Python file. Never fails: unparseable input yields an empty
/// record with `parse_failed` set.
pub fn parse_python(path: &str, source: &str) -> ParsedFile {
    parse_with(&mut new_parser(), path, source)
}

pub(crate) fn parse_with(parser: &mut Parser, path: &str, source: &str) -> ParsedFile {
    let lines = line_count(source);
    let Some(tree) = parser.parse(source, None) else {
        return ParsedFile::empty(path, lines, true);
    };
    let root = tree.root_node();
    if root.has_error() {
        return ParsedFile::empty(path, lines, true);
    }
    let mut ex = Extractor {
        src: source,
        docstring_nodes: HashSet::new(),
        functions: Vec::new(),
        classes: Vec::new(),
        seen_names: HashMap::new(),
    };
    let module_docstring = ex.docstring_of(root);
    ex.scan(root, path.to_string(), None);

    let mut imports = Vec::new();
    collect_imports(root, source, &mut imports);
    let mut seen = HashSet::new();
    imports.retain(|i| seen.insert(i.clone()));

    let mut string_constants = Vec::new();
    ex.module_strings(root, &mut string_constants);

    ParsedFile {
        path: path.to_string(),
        module_docstring,
        functions: ex.functions,
        classes: ex.classes,
        imports,
        string_constants,
        line_count: lines,
        parse_failed: false,
    }
}

struct Extractor<'a> {
    src: &'a str,
    docstring_nodes: HashSet<usize>,
    functions: Vec<FunctionInfo>,
    classes: Vec<ClassInfo>,
    seen_names: HashMap<String, u32>,
}

impl<'a> Extractor<'a> {
    fn text(&self, node: Node) -> &'a str {
        &self.src[node.byte_range()]
    }

    fn unique_name(&mut self, candidate: String, line: u32) -> String {
        let count = self.seen_names.entry(candidate.clone()).or_insert(0);
        *count += 1;
        if *count == 1 {
            candidate
        } else {
            format!("{candidate}@{line}")
        }
    }

    /// Docstring of a module, class or function node; records the string
    /// node so it is not double counted as a constant.
    fn docstring_of(&mut self, node: Node) -> Option<String> {
        let body = match node.kind() {
            "module" => node,
            _ => node.child_by_field_name("body")?,
        };
        let mut cursor = body.walk();
        let first = body
            .named_children(&mut cursor)
            .find(|c| c.kind() != "comment")?;
        if first.kind() != "expression_statement" || first.named_child_count() != 1 {
            return None;
        }
        let s = first.named_child(0)?;
        if s.kind() != "string" {
            return None;
        }
        self.docstring_nodes.insert(s.id());
        Some(clean_docstring(&string_literal_value(self.text(s))))
    }

    fn decorators(&self, def: Node) -> Vec<String> {
        let Some(parent) = def.parent() else {
            return Vec::new();
        };
        if parent.kind() != "decorated_definition" {
            return Vec::new();
        }
        let mut cursor = parent.walk();
        parent
            .named_children(&mut cursor)
            .filter(|c| c.kind() == "decorator")
            .map(|d| {
                let t = self.text(d).trim();
                t.strip_prefix('@').unwrap_or(t).trim().to_string()
            })
            .collect()
    }

    fn scan(&mut self, node: Node, prefix: String, owner_class: Option<usize>) {
        let mut cursor = node.walk();
        let children: Vec<Node> = node.named_children(&mut cursor).collect();
        for child in children {
            match child.kind() {
                "function_definition" => {
                    let info = self.function(child, &prefix);
                    let qualified = info.qualified_name.clone();
                    match owner_class {
                        Some(ci) => self.classes[ci].methods.push(info),
                        None => self.functions.push(info),
                    }
                    if let Some(body) = child.child_by_field_name("body") {
                        self.scan(body, qualified, None);
                    }
                }
                "class_definition" => {
                    let info = self.class(child, &prefix);
                    let qualified = info.qualified_name.clone();
                    self.classes.push(info);
                    let ci = self.classes.len() - 1;
                    if let Some(body) = child.child_by_field_name("body") {
                        self.scan(body, qualified, Some(ci));
                    }
                }
                _ => self.scan(child, prefix.clone(), owner_class),
            }
        }
    }

    fn class(&mut self, node: Node, prefix: &str) -> ClassInfo {
        let name = node
            .child_by_field_name("name")
            .map(|n| self.text(n).to_string())
            .unwrap_or_default();
        let start_line = node.start_position().row as u32 + 1;
        let qualified_name = self.unique_name(format!("{prefix}::{name}"), start_line);
        let mut bases = Vec::new();
        if let Some(args) = node.child_by_field_name("superclasses") {
            let mut cursor = args.walk();
            for a in args.named_children(&mut cursor) {
                if a.kind() != "comment" {
                    bases.push(collapse_ws(self.text(a)));
                }
            }
        }
        ClassInfo {
            name,
            qualified_name,
            bases,
            docstring: self.docstring_of(node),
            decorators: self.decorators(node),
            methods: Vec::new(),
            start_line,
            end_line: node.end_position().row as u32 + 1,
        }
    }

    fn function(&mut self, node: Node, prefix: &str) -> FunctionInfo {
        let name = node
            .child_by_field_name("name")
            .map(|n| self.text(n).to_string())
            .unwrap_or_default();
        let start_line = node.start_position().row as u32 + 1;
        let qualified_name = self.unique_name(format!("{prefix}::{name}"), start_line);
        let mut cursor = node.walk();
        let is_async = node.children(&mut cursor).any(|c| c.kind() == "async");
        let params = node
            .child_by_field_name("parameters")
            .map(|p| self.params(p))
            .unwrap_or_default();
        let return_annotation = node
            .child_by_field_name("return_type")
            .map(|n| collapse_ws(self.text(n)));
        let docstring = self.docstring_of(node);
        let mut m = FunctionMetrics::default();
        self.walk_metrics(node, &mut m, true);
        FunctionInfo {
            name,
            qualified_name,
            is_async,
            params,
            return_annotation,
            docstring,
            decorators: self.decorators(node),
            calls: m.calls,
            assignments: m.assignments,
            control_flow: m.control_flow,
            try_except_blocks: m.try_blocks,
            lambdas: m.lambdas,
            comprehensions: m.comprehensions,
            string_constants: m.strings,
            complexity: 1 + m.branches,
            code_length: self.text(node).chars().count() as u32,
            start_line,
            end_line: node.end_position().row as u32 + 1,
        }
    }

    fn params(&self, node: Node) -> Vec<Param> {
        let mut out = Vec::new();
        let mut cursor = node.walk();
        for p in node.named_children(&mut cursor) {
            let param = match p.kind() {
                "identifier" | "list_splat_pattern" | "dictionary_splat_pattern" => Param {
                    name: self.text(p).to_string(),
                    annotation: None,
                },
                "typed_parameter" => {
                    let name = p
                        .named_child(0)
                        .map(|n| self.text(n).to_string())
                        .unwrap_or_default();
                    Param {
                        name,
                        annotation: p
                            .child_by_field_name("type")
                            .map(|t| collapse_ws(self.text(t))),
                    }
                }
                "default_parameter" | "typed_default_parameter" => Param {
                    name: p
                        .child_by_field_name("name")
                        .map(|n| self.text(n).to_string())
                        .unwrap_or_default(),
                    annotation: p
                        .child_by_field_name("type")
                        .map(|t| collapse_ws(self.text(t))),
                },
                _ => continue,
            };
            out.push(param);
        }
        out
    }

    fn walk_metrics(&self, node: Node, m: &mut FunctionMetrics, is_root: bool) {
        if !is_root
            && matches!(
                node.kind(),
                "function_definition" | "class_definition" | "decorated_definition"
            )
        {
            return;
        }
        if !node.is_named() {
            return;
        }
        match node.kind() {
            "call" => {
                if let Some(f) = node.child_by_field_name("function") {
                    let mut name = render_callee(f, self.src);
                    if name.len() > MAX_CALLEE_LEN {
                        name.truncate(floor_char_boundary(&name, MAX_CALLEE_LEN));
                    }
                    m.calls.push(name);
                }
            }
            "assignment" | "augmented_assignment" => m.assignments += 1,
            "if_statement" => {
                m.control_flow.push("if".into());
                m.branches += 1;
            }
            "for_statement" => {
                m.control_flow.push("for".into());
                m.branches += 1;
            }
            "while_statement" => {
                m.control_flow.push("while".into());
                m.branches += 1;
            }
            "with_statement" => m.control_flow.push("with".into()),
            "match_statement" => m.control_flow.push("match".into()),
            "try_statement" => m.try_blocks += 1,
            "elif_clause" | "except_clause" | "except_group_clause" | "boolean_operator"
            | "conditional_expression" | "case_clause" | "for_in_clause" | "if_clause" => {
                m.branches += 1
            }
            "lambda" => m.lambdas += 1,
            "list_comprehension" | "dictionary_comprehension" | "set_comprehension"
            | "generator_expression" => m.comprehensions += 1,
            "string" => {
                if !self.docstring_nodes.contains(&node.id()) {
                    let value = string_literal_value(self.text(node));
                    if !value.is_empty() {
                        m.strings.push(value);
                    }
                }
            }
            _ => {}
        }
        let mut cursor = node.walk();
        for child in node.children(&mut cursor) {
            self.walk_metrics(child, m, false);
        }
    }

    fn module_strings(&self, node: Node, out: &mut Vec<String>) {
        match node.kind() {
            "function_definition" | "decorator" => return,
            "string" => {
                if !self.docstring_nodes.contains(&node.id()) {
                    let value = string_literal_value(self.text(node));
                    if !value.is_empty() {
                        out.push(value);
                    }
                }
            }
            _ => {}
        }
        let mut cursor = node.walk();
        for child in node.children(&mut cursor) {
            self.module_strings(child, out);
        }
    }
}

#[derive(Default)]
struct FunctionMetrics {
    calls: Vec<String>,
    assignments: u32,
    control_flow: Vec<String>,
    try_blocks: u32,
    lambdas: u32,
    comprehensions: u32,
    strings: Vec<String>,
    branches: u32,
}

fn collect_imports(node: Node, src: &str, out: &mut Vec<String>) {
    let text = |n: Node| src[n.byte_range()].to_string();
    match node.kind() {
        "import_statement" => {
            let mut cursor = node.walk();
            for name in node.children_by_field_name("name", &mut cursor) {
                let target = match name.kind() {
                    "aliased_import" => name.child_by_field_name("name").map(text),
                    _ => Some(text(name)),
                };
                out.extend(target);
            }
            return;
        }
        "import_from_statement" => {
            let module = node
                .child_by_field_name("module_name")
                .map(text)
                .unwrap_or_default();
            let join = |name: &str| {
                if module.ends_with('.') {
                    format!("{module}{name}")
                } else {
                    format!("{module}.{name}")
                }
            };
            let mut cursor = node.walk();
            let mut any = false;
            for name in node.children_by_field_name("name", &mut cursor) {
                let n = match name.kind() {
                    "aliased_import" => name.child_by_field_name("name").map(text),
                    _ => Some(text(name)),
                };
                if let Some(n) = n {
                    out.push(join(&n));
                    any = true;
                }
            }
            let mut cursor = node.walk();
            if node
                .named_children(&mut cursor)
                .any(|c| c.kind() == "wildcard_import")
            {
                out.push(join("*"));
                any = true;
            }
            if !any {
                out.push(module);
            }
            return;
        }
        _ => {}
    }
    let mut cursor = node.walk();
    for child in node.named_children(&mut cursor) {
        collect_imports(child, src, out);
    }
}

/// Readable callee expression: `a.b`, `f().g`, `x[].y`, `str.join`, or
/// `<expr>` for anything more exotic.
fn render_callee(node: Node, src: &str) -> String {
    match node.kind() {
        "identifier" => src[node.byte_range()].to_string(),
        "attribute" => {
            let object = node
                .child_by_field_name("object")
                .map(|o| render_callee(o, src))
                .unwrap_or_else(|| "<expr>".into());
            let attr = node
                .child_by_field_name("attribute")
                .map(|a| &src[a.byte_range()])
                .unwrap_or("");
            format!("{object}.{attr}")
        }
        "call" => {
            let f = node
                .child_by_field_name("function")
                .map(|f| render_callee(f, src))
                .unwrap_or_else(|| "<expr>".into());
            format!("{f}()")
        }
        "subscript" => {
            let v = node
                .child_by_field_name("value")
                .map(|v| render_callee(v, src))
                .unwrap_or_else(|| "<expr>".into());
            format!("{v}[]")
        }
        "string" | "concatenated_string" => "str".into(),
        "parenthesized_expression" => node
            .named_child(0)
            .map(|c| render_callee(c, src))
            .unwrap_or_else(|| "<expr>".into()),
        _ => "<expr>".into(),
    }
}

/// Strips the prefix letters and quotes of a Python string literal.
pub(crate) fn string_literal_value(literal: &str) -> String {
    let body = literal.trim_start_matches(|c: char| c.is_ascii_alphabetic());
    for q in ["\"\"\"", "'''", "\"", "'"] {
        if body.len() >= 2 * q.len() && body.starts_with(q) && body.ends_with(q) {
            return body[q.len()..body.len() - q.len()].to_string();
        }
    }
    body.to_string()
}

fn clean_docstring(raw: &str) -> String {
    raw.lines()
        .map(str::trim)
        .collect::<Vec<_>>()
        .join("\n")
        .trim()
        .to_string()
}

fn collapse_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn floor_char_boundary(s: &str, mut i: usize) -> usize {
    while i > 0 && !s.is_char_boundary(i) {
        i -= 1;
    }
    i
}
