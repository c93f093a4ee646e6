//! Selection of the "middle" span for fill-in-the-middle examples.
//!
//! Three strategies are available:
//!
//! * **single node**: one named syntax node, drawn with probability
//!   proportional to its byte length;
//! * **aligned span**: a random character span snapped to the contiguous run
//!   of sibling subtrees that overlaps it best (intersection over union);
//! * **random characters**: two uniform code-point offsets, used for
//!   unsupported languages and files that fail to parse.
//!
//! Every function works on a `region` of the document so the same code
//! handles whole files and context-sized chunks of a file parsed once.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::syntax::{eligible_nodes_within, lowest_subtree_containing, CharSpan, SyntaxNode, SyntaxTree};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskStrategy {
    SingleNode,
    AlignedSpan,
    RandChar,
}

impl MaskStrategy {
    pub fn as_str(self) -> &'static str {
        match self {
            MaskStrategy::SingleNode => "single_node",
            MaskStrategy::AlignedSpan => "aligned_span",
            MaskStrategy::RandChar => "rand_char",
        }
    }

    pub fn is_syntax_aware(self) -> bool {
        self != MaskStrategy::RandChar
    }
}

impl std::str::FromStr for MaskStrategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "single_node" => Ok(MaskStrategy::SingleNode),
            "aligned_span" => Ok(MaskStrategy::AlignedSpan),
            "rand_char" => Ok(MaskStrategy::RandChar),
            other => Err(format!("unknown mask strategy `{other}`")),
        }
    }
}

impl std::fmt::Display for MaskStrategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A chosen middle span and how it was chosen.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskSpan {
    pub span: CharSpan,
    pub strategy: MaskStrategy,
    /// Kinds of the masked nodes; empty for random-character masks.
    pub node_kinds: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaskConfig {
    /// Probability of single-node masking among syntax-aware masks; the rest
    /// use aligned-span masking.
    pub single_node_fraction: f64,
    pub max_resample_attempts: u32,
}

impl Default for MaskConfig {
    fn default() -> Self {
        MaskConfig { single_node_fraction: 0.5, max_resample_attempts: 8 }
    }
}

impl MaskConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.single_node_fraction) {
            return Err(format!(
                "single_node_fraction must be in [0, 1], got {}",
                self.single_node_fraction
            ));
        }
        if self.max_resample_attempts == 0 {
            return Err("max_resample_attempts must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum MaskError {
    #[error("no eligible syntax node to mask")]
    NoEligibleNode,
    #[error("could not draw a non-degenerate mask")]
    MaskDegenerate,
    #[error("node has no children")]
    NoChildren,
}

/// Intersection over union of two byte ranges; 0 when both are empty.
pub fn iou(a: CharSpan, b: CharSpan) -> f64 {
    let (inter, union) = iou_parts(a, b);
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

fn iou_parts(a: CharSpan, b: CharSpan) -> (u64, u64) {
    let inter = a.intersection_len(&b) as u64;
    let union = (a.len() + b.len()) as u64 - inter;
    (inter, union)
}

/// Exact IoU ratio, comparable without rounding.
#[derive(Debug, Clone, Copy)]
struct Ratio {
    num: u64,
    den: u64,
}

impl Ratio {
    fn of(a: CharSpan, b: CharSpan) -> Ratio {
        let (num, den) = iou_parts(a, b);
        if den == 0 {
            Ratio { num: 0, den: 1 }
        } else {
            Ratio { num, den }
        }
    }

    fn cmp(&self, other: &Ratio) -> std::cmp::Ordering {
        (self.num as u128 * other.den as u128).cmp(&(other.num as u128 * self.den as u128))
    }

    fn value(&self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

/// Inclusive window `[first, last]` of sibling indices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChildWindow {
    pub first: usize,
    pub last: usize,
    pub iou: f64,
}

impl ChildWindow {
    /// The text covered by the window: from the first child's start to the
    /// last child's end, including anything between siblings.
    pub fn span(&self, children: &[CharSpan]) -> CharSpan {
        CharSpan::new(children[self.first].start, children[self.last].end)
    }
}

/// Finds the contiguous window of children whose covered span has the
/// largest IoU with `target`. Ties go to the smallest first index, then the
/// smallest last index.
///
/// For a fixed first child the IoU is unimodal in the window's end offset,
/// peaking where that offset crosses `target.end`, so only the two windows
/// ending on either side of it need to be checked. That gives
/// `O(n log n)` instead of the `O(n^2)` scan.
pub fn best_window(children: &[CharSpan], target: CharSpan) -> Option<ChildWindow> {
    if children.is_empty() {
        return None;
    }
    let ends: Vec<usize> = children.iter().map(|c| c.end).collect();
    let mut best: Option<(usize, usize, Ratio)> = None;
    for (i, first) in children.iter().enumerate() {
        let rest = &ends[i..];
        let p = i + rest.partition_point(|&e| e < target.end);
        let mut cands = [None, None];
        if p > i {
            // earliest j ending exactly where child p-1 ends
            let v = ends[p - 1];
            cands[0] = Some(i + rest.partition_point(|&e| e < v));
        }
        if p < ends.len() {
            cands[1] = Some(p);
        }
        for j in cands.into_iter().flatten() {
            let r = Ratio::of(CharSpan::new(first.start, ends[j]), target);
            let better = match &best {
                None => true,
                Some((_, _, b)) => r.cmp(b).is_gt(),
            };
            if better {
                best = Some((i, j, r));
            }
        }
    }
    let (first, last, r) = best.expect("non-empty children");
    if r.num == 0 {
        // every window ties at zero
        return Some(ChildWindow { first: 0, last: 0, iou: 0.0 });
    }
    Some(ChildWindow { first, last, iou: r.value() })
}

/// [`best_window`] over the children of a tree node.
pub fn best_child_window(parent: SyntaxNode<'_>, target: CharSpan) -> Result<ChildWindow, MaskError> {
    best_window(parent.child_spans(), target).ok_or(MaskError::NoChildren)
}

/// Code-point boundary offsets inside a region, inclusive of both ends.
struct Boundaries {
    region: CharSpan,
    offsets: Option<Vec<usize>>,
}

impl Boundaries {
    fn new(text: &str, region: CharSpan) -> Self {
        let slice = region.slice(text);
        let offsets = (!slice.is_ascii()).then(|| {
            slice
                .char_indices()
                .map(|(i, _)| region.start + i)
                .chain(std::iter::once(region.end))
                .collect()
        });
        Boundaries { region, offsets }
    }

    fn count(&self) -> usize {
        match &self.offsets {
            Some(v) => v.len(),
            None => self.region.len() + 1,
        }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let k = rng.random_range(0..self.count());
        match &self.offsets {
            Some(v) => v[k],
            None => self.region.start + k,
        }
    }

    /// Two independent uniform offsets, ordered.
    fn sample_span<R: Rng + ?Sized>(&self, rng: &mut R) -> CharSpan {
        let a = self.sample(rng);
        let b = self.sample(rng);
        CharSpan::new(a.min(b), a.max(b))
    }
}

/// Picks one eligible node inside `region` with probability proportional to
/// its byte length.
pub fn single_node_mask<R: Rng + ?Sized>(
    tree: &SyntaxTree,
    region: CharSpan,
    rng: &mut R,
) -> Result<MaskSpan, MaskError> {
    let nodes = eligible_nodes_within(tree, region);
    let mut cumulative = Vec::with_capacity(nodes.len());
    let mut total = 0u64;
    for n in &nodes {
        total += n.span().len() as u64;
        cumulative.push(total);
    }
    if total == 0 {
        return Err(MaskError::NoEligibleNode);
    }
    let r = rng.random_range(0..total);
    let k = cumulative.partition_point(|&c| c <= r);
    let node = nodes[k];
    Ok(MaskSpan {
        span: node.span(),
        strategy: MaskStrategy::SingleNode,
        node_kinds: vec![node.kind().to_string()],
    })
}

/// Aligned-span masking inside `region`.
///
/// Draws a random span, finds the lowest subtree containing it and masks the
/// window of that subtree's children (restricted to those inside `region`)
/// with the best IoU. A leaf subtree is masked whole. Draws that come out
/// empty or cover the entire region are retried up to
/// `cfg.max_resample_attempts` times.
pub fn aligned_span_mask<R: Rng + ?Sized>(
    tree: &SyntaxTree,
    text: &str,
    region: CharSpan,
    cfg: &MaskConfig,
    rng: &mut R,
) -> Result<MaskSpan, MaskError> {
    if region.is_empty() {
        return Err(MaskError::MaskDegenerate);
    }
    let bounds = Boundaries::new(text, region);
    for _ in 0..cfg.max_resample_attempts {
        let target = bounds.sample_span(rng);
        if target.is_empty() {
            continue;
        }
        let node = lowest_subtree_containing(tree, target);
        let picked = if node.is_leaf() {
            region
                .contains(&node.span())
                .then(|| (node.span(), vec![node.kind().to_string()]))
        } else {
            let spans = node.child_spans();
            let lo = spans.partition_point(|c| c.start < region.start);
            let hi = spans.partition_point(|c| c.end <= region.end);
            if lo >= hi {
                None
            } else {
                let inside = &spans[lo..hi];
                let w = best_window(inside, target).expect("non-empty window set");
                let kinds = (lo + w.first..=lo + w.last)
                    .map(|i| node.child(i).expect("child").kind().to_string())
                    .collect();
                Some((w.span(inside), kinds))
            }
        };
        match picked {
            Some((span, kinds)) if !span.is_empty() && span != region => {
                return Ok(MaskSpan { span, strategy: MaskStrategy::AlignedSpan, node_kinds: kinds });
            }
            _ => continue,
        }
    }
    Err(MaskError::MaskDegenerate)
}

/// Random-character masking: two uniform code-point offsets inside `region`,
/// redrawn until they differ.
pub fn rand_char_mask<R: Rng + ?Sized>(
    text: &str,
    region: CharSpan,
    rng: &mut R,
) -> Result<MaskSpan, MaskError> {
    if region.is_empty() {
        return Err(MaskError::MaskDegenerate);
    }
    let bounds = Boundaries::new(text, region);
    loop {
        let span = bounds.sample_span(rng);
        if !span.is_empty() {
            return Ok(MaskSpan { span, strategy: MaskStrategy::RandChar, node_kinds: Vec::new() });
        }
    }
}

/// Full selection policy for one region.
///
/// Without a valid parse (unsupported language, parser failure or error
/// nodes) the mask is random-character. Otherwise single-node or aligned-span
/// is drawn per `cfg`, falling back to random-character when the chosen
/// strategy cannot produce a mask.
pub fn select_mask<R: Rng + ?Sized>(
    text: &str,
    tree: Option<&SyntaxTree>,
    region: CharSpan,
    cfg: &MaskConfig,
    rng: &mut R,
) -> Result<MaskSpan, MaskError> {
    if region.is_empty() {
        return Err(MaskError::MaskDegenerate);
    }
    let tree = match tree {
        Some(t) if !t.has_error() => t,
        _ => return rand_char_mask(text, region, rng),
    };
    let u: f64 = rng.random();
    let chosen = if u < cfg.single_node_fraction {
        single_node_mask(tree, region, rng)
    } else {
        aligned_span_mask(tree, text, region, cfg, rng)
    };
    match chosen {
        Ok(m) => Ok(m),
        Err(e) => {
            log::debug!("syntax-aware mask failed ({e}); using random characters");
            rand_char_mask(text, region, rng)
        }
    }
}

/// Checks that an AST-derived mask equals one node's span or the covered
/// span of a contiguous sibling window somewhere in `tree`.
pub fn is_subtree_aligned(tree: &SyntaxTree, span: CharSpan) -> bool {
    tree.preorder().any(|n| {
        if n.span() == span {
            return true;
        }
        let spans = n.child_spans();
        if !n.span().contains(&span) || spans.is_empty() {
            return false;
        }
        let first = spans.iter().position(|c| c.start == span.start);
        let last = spans.iter().rposition(|c| c.end == span.end);
        matches!((first, last), (Some(i), Some(j)) if i <= j)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::StreamRng;
    use crate::syntax::{parse, LanguageId, NodeSpec, SourceDocument};

    fn sp(a: usize, b: usize) -> CharSpan {
        CharSpan::new(a, b)
    }

    fn exhaustive(children: &[CharSpan], target: CharSpan) -> (usize, usize) {
        let mut best = (0, 0);
        let mut best_v = -1.0;
        for i in 0..children.len() {
            for j in i..children.len() {
                let v = iou(sp(children[i].start, children[j].end), target);
                if v > best_v + 1e-15 {
                    best_v = v;
                    best = (i, j);
                }
            }
        }
        best
    }

    #[test]
    fn iou_closed_forms() {
        assert_eq!(iou(sp(0, 10), sp(0, 10)), 1.0);
        assert_eq!(iou(sp(0, 10), sp(10, 20)), 0.0);
        assert!((iou(sp(0, 20), sp(5, 25)) - 0.6).abs() < 1e-15);
        assert_eq!(iou(sp(3, 3), sp(3, 3)), 0.0);
    }

    #[test]
    fn worked_window_example() {
        let kids = [sp(0, 10), sp(10, 20), sp(20, 30)];
        let w = best_window(&kids, sp(5, 25)).unwrap();
        assert_eq!((w.first, w.last), (0, 2));
        assert!((w.iou - 20.0 / 30.0).abs() < 1e-15);
    }

    #[test]
    fn exact_child_match() {
        let kids = [sp(0, 4), sp(5, 9), sp(9, 15)];
        let w = best_window(&kids, sp(5, 9)).unwrap();
        assert_eq!((w.first, w.last, w.iou), (1, 1, 1.0));
    }

    #[test]
    fn tie_goes_to_earlier_window() {
        // a zero-width child makes (1,2) and (2,2) cover the same text
        let kids = [sp(0, 5), sp(5, 5), sp(5, 10)];
        let w = best_window(&kids, sp(5, 10)).unwrap();
        assert_eq!((w.first, w.last, w.iou), (1, 2, 1.0));
        assert_eq!((w.first, w.last), exhaustive(&kids, sp(5, 10)));
        // (0,0) and (0,1) tie at 1.0: shorter window wins
        let w = best_window(&kids, sp(0, 5)).unwrap();
        assert_eq!((w.first, w.last), (0, 0));
        assert_eq!((w.first, w.last), exhaustive(&kids, sp(0, 5)));
    }

    #[test]
    fn disjoint_target_returns_first_child() {
        let kids = [sp(0, 2), sp(2, 4)];
        let w = best_window(&kids, sp(6, 8)).unwrap();
        assert_eq!((w.first, w.last, w.iou), (0, 0, 0.0));
    }

    #[test]
    fn leaf_has_no_children() {
        let t = SyntaxTree::from_spec(&NodeSpec::named("leaf", sp(0, 3), vec![]));
        assert_eq!(best_child_window(t.root(), sp(0, 1)), Err(MaskError::NoChildren));
    }

    #[test]
    fn rand_char_single_byte() {
        let mut rng = StreamRng::new(1, "x");
        for _ in 0..50 {
            let m = rand_char_mask("a", sp(0, 1), &mut rng).unwrap();
            assert_eq!(m.span, sp(0, 1));
        }
        assert_eq!(rand_char_mask("", sp(0, 0), &mut rng), Err(MaskError::MaskDegenerate));
    }

    #[test]
    fn rand_char_respects_code_points() {
        let text = "héllo wörld ✓";
        let mut rng = StreamRng::new(3, "u");
        for _ in 0..500 {
            let m = rand_char_mask(text, CharSpan::full(text), &mut rng).unwrap();
            assert!(m.span.is_char_aligned(text));
        }
    }

    #[test]
    fn single_node_forced_when_one_candidate() {
        // root -> one named child with only anonymous children
        let root = NodeSpec::named(
            "root",
            sp(0, 12),
            vec![NodeSpec::named("stmt", sp(1, 11), vec![NodeSpec::token("kw", sp(1, 4))])],
        );
        let t = SyntaxTree::from_spec(&root);
        let mut rng = StreamRng::new(0, "s");
        for _ in 0..20 {
            let m = single_node_mask(&t, t.span(), &mut rng).unwrap();
            assert_eq!(m.span, sp(1, 11));
            assert_eq!(m.node_kinds, ["stmt"]);
        }
    }

    #[test]
    fn no_eligible_nodes() {
        let t = SyntaxTree::from_spec(&NodeSpec::named("root", sp(0, 3), vec![NodeSpec::token(";", sp(0, 1))]));
        let mut rng = StreamRng::new(0, "s");
        assert_eq!(single_node_mask(&t, t.span(), &mut rng), Err(MaskError::NoEligibleNode));
    }

    #[test]
    fn aligned_leaf_case() {
        let src = "foo_bar_baz = 1\n";
        let doc = SourceDocument::new("a.py", LanguageId::new("python"), src);
        let t = parse(&doc).unwrap();
        // a target strictly inside the identifier lands on that leaf
        let n = lowest_subtree_containing(&t, sp(2, 6));
        assert_eq!(n.kind(), "identifier");
        assert!(n.is_leaf());
    }

    #[test]
    fn aligned_never_masks_whole_region() {
        let src = "a = 1\nb = 2\nc = 3\n";
        let doc = SourceDocument::new("a.py", LanguageId::new("python"), src);
        let t = parse(&doc).unwrap();
        let cfg = MaskConfig::default();
        for s in 0..2000 {
            let mut rng = StreamRng::new(s, "a");
            if let Ok(m) = aligned_span_mask(&t, src, t.span(), &cfg, &mut rng) {
                assert_ne!(m.span, t.span());
                assert!(!m.span.is_empty());
                assert!(is_subtree_aligned(&t, m.span), "{:?}", m);
            }
        }
    }

    #[test]
    fn select_mask_broken_file_is_rand_char() {
        let src = "def f(:\n  return (\n";
        let doc = SourceDocument::new("a.py", LanguageId::new("python"), src);
        let t = parse(&doc).unwrap();
        assert!(t.has_error());
        for s in 0..200 {
            let mut rng = StreamRng::new(s, "b");
            let m = select_mask(src, Some(&t), t.span(), &MaskConfig::default(), &mut rng).unwrap();
            assert_eq!(m.strategy, MaskStrategy::RandChar);
        }
    }

    #[test]
    fn select_mask_forced_single_node() {
        let src = "def f(x):\n    return x * 2\n";
        let doc = SourceDocument::new("a.py", LanguageId::new("python"), src);
        let t = parse(&doc).unwrap();
        let cfg = MaskConfig { single_node_fraction: 1.0, ..MaskConfig::default() };
        for s in 0..200 {
            let mut rng = StreamRng::new(s, "f");
            let m = select_mask(src, Some(&t), t.span(), &cfg, &mut rng).unwrap();
            assert_eq!(m.strategy, MaskStrategy::SingleNode);
        }
    }

    #[test]
    fn region_restricts_masks() {
        let src = "a = 1\nb = 2\nc = 3\nd = 4\n";
        let doc = SourceDocument::new("a.py", LanguageId::new("python"), src);
        let t = parse(&doc).unwrap();
        let region = sp(6, 18);
        for s in 0..500 {
            let mut rng = StreamRng::new(s, "r");
            let m = select_mask(src, Some(&t), region, &MaskConfig::default(), &mut rng).unwrap();
            assert!(region.contains(&m.span));
            assert!(!m.span.is_empty());
        }
    }
}
