//! Concrete syntax trees for source documents.
//!
//! Parsing goes through tree-sitter grammars that are linked into the binary.
//! The resulting tree is copied into an immutable arena ([`SyntaxTree`]) so it
//! can be shared across threads and queried without holding on to the
//! tree-sitter objects, which are not `Send`.

use std::cell::RefCell;
use std::collections::HashMap;
use std::collections::VecDeque;
use std::fmt;
use std::path::Path;
use std::sync::{Mutex, OnceLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Lowercase language identifier, e.g. `python` or `rust`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LanguageId(String);

/// Language ids with a linked grammar.
pub const SUPPORTED_LANGUAGES: &[&str] = &[
    "python",
    "rust",
    "java",
    "cpp",
    "typescript",
    "go",
    "ruby",
    "csharp",
    "javascript",
    "kotlin",
    "php",
    "scala",
    "c",
    "tsx",
];

const NATURAL_LANGUAGES: &[&str] = &["text", "markdown", "natural"];

impl LanguageId {
    /// Builds an id, lowercasing and resolving a few common aliases
    /// (`c++`, `c#`, `js`, `ts`, `py`, ...).
    pub fn new(name: impl AsRef<str>) -> Self {
        let lower = name.as_ref().trim().to_ascii_lowercase();
        let canonical = match lower.as_str() {
            "c++" | "cxx" => "cpp",
            "c#" | "cs" | "c_sharp" => "csharp",
            "js" => "javascript",
            "ts" => "typescript",
            "py" => "python",
            "rs" => "rust",
            "rb" => "ruby",
            "kt" => "kotlin",
            "golang" => "go",
            "md" => "markdown",
            "txt" | "plaintext" => "text",
            other => other,
        };
        LanguageId(canonical.to_string())
    }

    pub fn unknown() -> Self {
        LanguageId("unknown".to_string())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// True when a grammar is linked for this language.
    pub fn is_supported(&self) -> bool {
        SUPPORTED_LANGUAGES.contains(&self.0.as_str())
    }

    /// Documents in these languages only ever receive left-to-right records.
    pub fn is_natural_language(&self) -> bool {
        NATURAL_LANGUAGES.contains(&self.0.as_str())
    }

    /// Human-facing name used in statistics tables.
    pub fn display_name(&self) -> &str {
        match self.0.as_str() {
            "python" => "Python",
            "rust" => "Rust",
            "java" => "Java",
            "cpp" => "C++",
            "typescript" => "TypeScript",
            "tsx" => "TSX",
            "go" => "Go",
            "ruby" => "Ruby",
            "csharp" => "C#",
            "javascript" => "JavaScript",
            "kotlin" => "Kotlin",
            "php" => "PHP",
            "scala" => "Scala",
            "c" => "C",
            other => other,
        }
    }

    fn grammar(&self) -> Option<tree_sitter::Language> {
        let lang = match self.0.as_str() {
            "python" => tree_sitter_python::LANGUAGE.into(),
            "rust" => tree_sitter_rust::LANGUAGE.into(),
            "java" => tree_sitter_java::LANGUAGE.into(),
            "cpp" => tree_sitter_cpp::LANGUAGE.into(),
            "typescript" => tree_sitter_typescript::LANGUAGE_TYPESCRIPT.into(),
            "tsx" => tree_sitter_typescript::LANGUAGE_TSX.into(),
            "go" => tree_sitter_go::LANGUAGE.into(),
            "ruby" => tree_sitter_ruby::LANGUAGE.into(),
            "csharp" => tree_sitter_c_sharp::LANGUAGE.into(),
            "javascript" => tree_sitter_javascript::LANGUAGE.into(),
            "kotlin" => tree_sitter_kotlin_ng::LANGUAGE.into(),
            "php" => tree_sitter_php::LANGUAGE_PHP.into(),
            "scala" => tree_sitter_scala::LANGUAGE.into(),
            "c" => tree_sitter_c::LANGUAGE.into(),
            _ => return None,
        };
        Some(lang)
    }
}

impl fmt::Display for LanguageId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Maps file extensions to languages. The default table covers every linked
/// grammar plus plain-text formats; entries can be added or overridden.
#[derive(Debug, Clone)]
pub struct LanguageRegistry {
    extensions: HashMap<String, LanguageId>,
}

impl Default for LanguageRegistry {
    fn default() -> Self {
        let table: &[(&str, &str)] = &[
            ("py", "python"),
            ("pyi", "python"),
            ("rs", "rust"),
            ("java", "java"),
            ("cc", "cpp"),
            ("cpp", "cpp"),
            ("cxx", "cpp"),
            ("hpp", "cpp"),
            ("hh", "cpp"),
            ("hxx", "cpp"),
            ("ts", "typescript"),
            ("mts", "typescript"),
            ("tsx", "tsx"),
            ("go", "go"),
            ("rb", "ruby"),
            ("cs", "csharp"),
            ("js", "javascript"),
            ("mjs", "javascript"),
            ("cjs", "javascript"),
            ("jsx", "javascript"),
            ("kt", "kotlin"),
            ("kts", "kotlin"),
            ("php", "php"),
            ("scala", "scala"),
            ("sc", "scala"),
            ("c", "c"),
            ("h", "c"),
            ("md", "markdown"),
            ("txt", "text"),
        ];
        let extensions = table
            .iter()
            .map(|(ext, lang)| (ext.to_string(), LanguageId::new(lang)))
            .collect();
        LanguageRegistry { extensions }
    }
}

impl LanguageRegistry {
    pub fn with_extension(mut self, ext: &str, lang: LanguageId) -> Self {
        self.extensions
            .insert(ext.trim_start_matches('.').to_ascii_lowercase(), lang);
        self
    }

    pub fn detect(&self, path: impl AsRef<Path>) -> Option<LanguageId> {
        let ext = path.as_ref().extension()?.to_str()?.to_ascii_lowercase();
        self.extensions.get(&ext).cloned()
    }
}

/// Half-open byte range `[start, end)` into a UTF-8 document.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CharSpan {
    pub start: usize,
    pub end: usize,
}

impl CharSpan {
    pub fn new(start: usize, end: usize) -> Self {
        debug_assert!(start <= end, "inverted span {start}..{end}");
        CharSpan { start, end }
    }

    /// The span covering all of `text`.
    pub fn full(text: &str) -> Self {
        CharSpan::new(0, text.len())
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }

    pub fn contains(&self, other: &CharSpan) -> bool {
        self.start <= other.start && other.end <= self.end
    }

    pub fn intersection_len(&self, other: &CharSpan) -> usize {
        let lo = self.start.max(other.start);
        let hi = self.end.min(other.end);
        hi.saturating_sub(lo)
    }

    /// Smallest span covering both.
    pub fn hull(&self, other: &CharSpan) -> CharSpan {
        CharSpan::new(self.start.min(other.start), self.end.max(other.end))
    }

    /// True when both ends fall on code-point boundaries of `text`.
    pub fn is_char_aligned(&self, text: &str) -> bool {
        self.end <= text.len() && text.is_char_boundary(self.start) && text.is_char_boundary(self.end)
    }

    pub fn slice<'a>(&self, text: &'a str) -> &'a str {
        &text[self.start..self.end]
    }
}

impl fmt::Display for CharSpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {})", self.start, self.end)
    }
}

#[derive(Debug, Error)]
#[error("{path}: content is not valid UTF-8")]
pub struct InvalidUtf8 {
    pub path: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceDocument {
    pub path: String,
    pub lang: LanguageId,
    pub content: String,
}

impl SourceDocument {
    pub fn new(path: impl Into<String>, lang: LanguageId, content: impl Into<String>) -> Self {
        SourceDocument { path: path.into(), lang, content: content.into() }
    }

    /// Rejects content that is not valid UTF-8.
    pub fn from_bytes(
        path: impl Into<String>,
        lang: LanguageId,
        bytes: Vec<u8>,
    ) -> Result<Self, InvalidUtf8> {
        let path = path.into();
        match String::from_utf8(bytes) {
            Ok(content) => Ok(SourceDocument { path, lang, content }),
            Err(_) => Err(InvalidUtf8 { path }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("no grammar registered for language `{0}`")]
    Unsupported(LanguageId),
    #[error("parser gave up on the document")]
    Aborted,
}

/// Index of a node inside its [`SyntaxTree`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(u32);

impl NodeId {
    pub const ROOT: NodeId = NodeId(0);

    pub fn index(self) -> usize {
        self.0 as usize
    }
}

const NO_PARENT: u32 = u32::MAX;

#[derive(Debug, Clone)]
struct NodeData {
    kind: &'static str,
    named: bool,
    error: bool,
    span: CharSpan,
    parent: u32,
    depth: u32,
    first_child: u32,
    child_count: u32,
}

/// Immutable concrete syntax tree.
///
/// Nodes are numbered breadth-first, so the children of every node occupy a
/// contiguous id range and their spans can be read as a slice.
#[derive(Debug, Clone)]
pub struct SyntaxTree {
    nodes: Vec<NodeData>,
    child_spans: Vec<CharSpan>,
    has_error: bool,
}

/// Owned node description, used to build trees by hand.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeSpec {
    pub kind: &'static str,
    pub named: bool,
    pub span: CharSpan,
    pub children: Vec<NodeSpec>,
}

impl NodeSpec {
    pub fn named(kind: &'static str, span: CharSpan, children: Vec<NodeSpec>) -> Self {
        NodeSpec { kind, named: true, span, children }
    }

    pub fn token(kind: &'static str, span: CharSpan) -> Self {
        NodeSpec { kind, named: false, span, children: Vec::new() }
    }
}

struct Builder {
    nodes: Vec<NodeData>,
    has_error: bool,
}

impl Builder {
    fn with_root(kind: &'static str, named: bool, error: bool, span: CharSpan) -> Self {
        let root = NodeData {
            kind,
            named,
            error,
            span,
            parent: NO_PARENT,
            depth: 0,
            first_child: 0,
            child_count: 0,
        };
        Builder { nodes: vec![root], has_error: error }
    }

    /// Appends children of `parent`, clamping their spans into the parent's
    /// span and behind their left sibling so the ordering invariants hold.
    fn push_children(
        &mut self,
        parent: u32,
        children: impl Iterator<Item = (&'static str, bool, bool, CharSpan)>,
    ) -> std::ops::Range<u32> {
        let first = self.nodes.len() as u32;
        let pspan = self.nodes[parent as usize].span;
        let depth = self.nodes[parent as usize].depth + 1;
        let mut cursor = pspan.start;
        for (kind, named, error, span) in children {
            let start = span.start.clamp(cursor, pspan.end);
            let end = span.end.clamp(start, pspan.end);
            cursor = end;
            self.has_error |= error;
            self.nodes.push(NodeData {
                kind,
                named,
                error,
                span: CharSpan::new(start, end),
                parent,
                depth,
                first_child: 0,
                child_count: 0,
            });
        }
        let last = self.nodes.len() as u32;
        let p = &mut self.nodes[parent as usize];
        p.first_child = first;
        p.child_count = last - first;
        first..last
    }

    fn finish(self) -> SyntaxTree {
        let child_spans = self.nodes.iter().map(|n| n.span).collect();
        SyntaxTree { nodes: self.nodes, child_spans, has_error: self.has_error }
    }
}

impl SyntaxTree {
    /// Builds a tree from an owned description. Child spans are clamped the
    /// same way parsed trees are.
    pub fn from_spec(root: &NodeSpec) -> SyntaxTree {
        let mut b = Builder::with_root(root.kind, root.named, false, root.span);
        let mut queue: VecDeque<(u32, &NodeSpec)> = VecDeque::from([(0, root)]);
        while let Some((id, spec)) = queue.pop_front() {
            let ids = b.push_children(
                id,
                spec.children.iter().map(|c| (c.kind, c.named, c.kind == "ERROR", c.span)),
            );
            queue.extend(ids.zip(spec.children.iter()));
        }
        b.finish()
    }

    fn from_ts(tree: &tree_sitter::Tree, kinds: &[&'static str], len: usize) -> SyntaxTree {
        let kind = |n: &tree_sitter::Node| kinds.get(n.kind_id() as usize).copied().unwrap_or_else(|| intern(n.kind()));
        let root = tree.root_node();
        let mut b = Builder::with_root(
            kind(&root),
            root.is_named(),
            root.is_error() || root.is_missing(),
            CharSpan::new(0, len),
        );
        let mut cursor = tree.walk();
        let mut queue: VecDeque<(u32, tree_sitter::Node)> = VecDeque::from([(0, root)]);
        let mut kids = Vec::new();
        while let Some((id, node)) = queue.pop_front() {
            kids.clear();
            kids.extend(node.children(&mut cursor));
            let ids = b.push_children(
                id,
                kids.iter().map(|c| {
                    (
                        kind(c),
                        c.is_named(),
                        c.is_error() || c.is_missing(),
                        CharSpan::new(c.start_byte(), c.end_byte()),
                    )
                }),
            );
            queue.extend(ids.zip(kids.iter().copied()));
        }
        b.has_error |= root.has_error();
        b.finish()
    }

    pub fn root(&self) -> SyntaxNode<'_> {
        SyntaxNode { tree: self, id: NodeId::ROOT }
    }

    pub fn node(&self, id: NodeId) -> SyntaxNode<'_> {
        assert!(id.index() < self.nodes.len(), "node id out of range");
        SyntaxNode { tree: self, id }
    }

    pub fn has_error(&self) -> bool {
        self.has_error
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.len() <= 1
    }

    pub fn span(&self) -> CharSpan {
        self.nodes[0].span
    }

    /// All nodes in pre-order (document order, parents before children).
    pub fn preorder(&self) -> Preorder<'_> {
        Preorder { tree: self, stack: vec![NodeId::ROOT] }
    }

    /// Pre-order walk that skips subtrees for which `descend` returns false.
    fn walk_pruned<'t>(
        &'t self,
        mut descend: impl FnMut(SyntaxNode<'t>) -> bool,
        mut visit: impl FnMut(SyntaxNode<'t>),
    ) {
        let mut stack = vec![NodeId::ROOT];
        while let Some(id) = stack.pop() {
            let node = self.node(id);
            if !descend(node) {
                continue;
            }
            visit(node);
            let d = &self.nodes[id.index()];
            stack.extend((d.first_child..d.first_child + d.child_count).rev().map(NodeId));
        }
    }
}

/// Borrowed view of one node.
#[derive(Clone, Copy)]
pub struct SyntaxNode<'t> {
    tree: &'t SyntaxTree,
    id: NodeId,
}

impl<'t> SyntaxNode<'t> {
    fn data(&self) -> &'t NodeData {
        &self.tree.nodes[self.id.index()]
    }

    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn kind(&self) -> &'static str {
        self.data().kind
    }

    /// False for keyword and punctuation tokens.
    pub fn is_named(&self) -> bool {
        self.data().named
    }

    /// Error or missing node inserted by error recovery.
    pub fn is_error(&self) -> bool {
        self.data().error
    }

    pub fn span(&self) -> CharSpan {
        self.data().span
    }

    pub fn depth(&self) -> usize {
        self.data().depth as usize
    }

    pub fn is_root(&self) -> bool {
        self.id == NodeId::ROOT
    }

    pub fn is_leaf(&self) -> bool {
        self.data().child_count == 0
    }

    pub fn child_count(&self) -> usize {
        self.data().child_count as usize
    }

    pub fn child(&self, i: usize) -> Option<SyntaxNode<'t>> {
        let d = self.data();
        (i < d.child_count as usize).then(|| SyntaxNode {
            tree: self.tree,
            id: NodeId(d.first_child + i as u32),
        })
    }

    pub fn children(&self) -> impl ExactSizeIterator<Item = SyntaxNode<'t>> + 't {
        let d = self.data();
        let tree = self.tree;
        (d.first_child..d.first_child + d.child_count).map(move |i| SyntaxNode { tree, id: NodeId(i) })
    }

    /// Spans of the direct children, in document order.
    pub fn child_spans(&self) -> &'t [CharSpan] {
        let d = self.data();
        let start = d.first_child as usize;
        &self.tree.child_spans[start..start + d.child_count as usize]
    }

    pub fn parent(&self) -> Option<SyntaxNode<'t>> {
        let p = self.data().parent;
        (p != NO_PARENT).then_some(SyntaxNode { tree: self.tree, id: NodeId(p) })
    }

    pub fn text<'a>(&self, source: &'a str) -> &'a str {
        self.span().slice(source)
    }
}

impl fmt::Debug for SyntaxNode<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{} {}", self.kind(), if self.is_named() { "" } else { "(anon)" }, self.span())
    }
}

impl PartialEq for SyntaxNode<'_> {
    fn eq(&self, other: &Self) -> bool {
        std::ptr::eq(self.tree, other.tree) && self.id == other.id
    }
}

impl Eq for SyntaxNode<'_> {}

pub struct Preorder<'t> {
    tree: &'t SyntaxTree,
    stack: Vec<NodeId>,
}

impl<'t> Iterator for Preorder<'t> {
    type Item = SyntaxNode<'t>;

    fn next(&mut self) -> Option<Self::Item> {
        let id = self.stack.pop()?;
        let d = &self.tree.nodes[id.index()];
        self.stack
            .extend((d.first_child..d.first_child + d.child_count).rev().map(NodeId));
        Some(SyntaxNode { tree: self.tree, id })
    }
}

/// Leaks each distinct node kind once; the set is bounded by the grammars.
fn intern(kind: &str) -> &'static str {
    static KINDS: OnceLock<Mutex<std::collections::HashSet<&'static str>>> = OnceLock::new();
    let mut set = KINDS.get_or_init(Default::default).lock().unwrap_or_else(|e| e.into_inner());
    if let Some(k) = set.get(kind) {
        return k;
    }
    let k: &'static str = Box::leak(kind.to_owned().into_boxed_str());
    set.insert(k);
    k
}

fn kind_table(grammar: &tree_sitter::Language) -> Vec<&'static str> {
    (0..grammar.node_kind_count() as u16)
        .map(|id| intern(grammar.node_kind_for_id(id).unwrap_or("")))
        .collect()
}

/// Reusable parser. Not shareable between threads; create one per worker.
pub struct SyntaxParser {
    parser: tree_sitter::Parser,
    current: Option<LanguageId>,
    kinds: Vec<&'static str>,
}

impl Default for SyntaxParser {
    fn default() -> Self {
        Self::new()
    }
}

impl SyntaxParser {
    pub fn new() -> Self {
        SyntaxParser { parser: tree_sitter::Parser::new(), current: None, kinds: Vec::new() }
    }

    pub fn parse(&mut self, doc: &SourceDocument) -> Result<SyntaxTree, ParseError> {
        if self.current.as_ref() != Some(&doc.lang) {
            let grammar = doc
                .lang
                .grammar()
                .ok_or_else(|| ParseError::Unsupported(doc.lang.clone()))?;
            self.parser
                .set_language(&grammar)
                .map_err(|_| ParseError::Unsupported(doc.lang.clone()))?;
            self.kinds = kind_table(&grammar);
            self.current = Some(doc.lang.clone());
        }
        let tree = self.parser.parse(&doc.content, None).ok_or(ParseError::Aborted)?;
        Ok(SyntaxTree::from_ts(&tree, &self.kinds, doc.content.len()))
    }
}

thread_local! {
    static PARSER: RefCell<SyntaxParser> = RefCell::new(SyntaxParser::new());
}

/// Parses with this thread's cached parser.
pub fn parse(doc: &SourceDocument) -> Result<SyntaxTree, ParseError> {
    if !doc.lang.is_supported() {
        return Err(ParseError::Unsupported(doc.lang.clone()));
    }
    PARSER.with(|p| p.borrow_mut().parse(doc))
}

/// A parse is valid when error recovery inserted no error or missing nodes.
/// This says nothing about whether the code compiles.
pub fn is_parse_valid(tree: &SyntaxTree) -> bool {
    !tree.has_error()
}

/// Maskable nodes: named, non-root and non-empty, in pre-order.
pub fn eligible_nodes(tree: &SyntaxTree) -> Vec<SyntaxNode<'_>> {
    eligible_nodes_within(tree, tree.span())
}

/// [`eligible_nodes`] restricted to nodes lying entirely inside `region`.
pub fn eligible_nodes_within(tree: &SyntaxTree, region: CharSpan) -> Vec<SyntaxNode<'_>> {
    let mut out = Vec::new();
    tree.walk_pruned(
        |n| n.span().intersection_len(&region) > 0,
        |n| {
            if n.is_named() && !n.is_root() && !n.span().is_empty() && region.contains(&n.span()) {
                out.push(n);
            }
        },
    );
    out
}

/// Deepest node whose span contains `span`. The root always qualifies.
pub fn lowest_subtree_containing(tree: &SyntaxTree, span: CharSpan) -> SyntaxNode<'_> {
    let mut node = tree.root();
    loop {
        let spans = node.child_spans();
        let next = if span.is_empty() {
            spans.iter().position(|c| c.contains(&span))
        } else {
            // Children are disjoint, so at most one can hold a non-empty span:
            // the last one starting at or before it.
            let k = spans.partition_point(|c| c.start <= span.start);
            (k > 0 && spans[k - 1].contains(&span)).then(|| k - 1)
        };
        match next {
            Some(i) => node = node.child(i).expect("child index in range"),
            None => return node,
        }
    }
}
