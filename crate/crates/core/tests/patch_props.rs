use proptest::prelude::*;

use mirror_core::model::Language;
use mirror_core::patchkit::{
    apply_patch, diff_trees, edits_to_patch, invert_patch, parse_unified_diff, strip_comments, FileTree, Fuzz,
    MemTree, SearchReplaceEdit,
};

fn line() -> impl Strategy<Value = String> {
    prop_oneof![
        Just(String::new()),
        "[a-d ]{1,6}",
        "x = [0-9]{1,2}",
        "[a-c]{1,3} # note",
    ]
}

fn file() -> impl Strategy<Value = String> {
    (prop::collection::vec(line(), 0..12), any::<bool>()).prop_map(|(lines, trailing)| {
        let mut s = lines.join("\n");
        if trailing && !s.is_empty() {
            s.push('\n');
        }
        s
    })
}

fn tree() -> impl Strategy<Value = MemTree> {
    prop::collection::btree_map(prop::sample::select(vec!["a.py", "b.py", "src/c.py"]), file(), 0..3).prop_map(
        |m| {
            let mut t = MemTree::new();
            for (p, c) in m {
                t.insert(p, &c);
            }
            t
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn apply_then_invert_restores_bytes(old in tree(), new in tree()) {
        let patch = diff_trees(&old, &new);
        prop_assume!(!patch.is_empty());
        let parsed = parse_unified_diff(&patch.render()).unwrap();
        let forward = apply_patch(&old, &parsed, Fuzz::STRICT).unwrap();
        prop_assert_eq!(&forward, &new);
        let back = apply_patch(&forward, &invert_patch(&parsed), Fuzz::STRICT).unwrap();
        prop_assert_eq!(back, old);
    }

    #[test]
    fn search_replace_matches_first_occurrence(body in file(), at in 0usize..64, len in 1usize..16, rep in "[x-z\n]{0,8}") {
        let start = at.min(body.len());
        let end = (start + len).min(body.len());
        prop_assume!(body.is_char_boundary(start) && body.is_char_boundary(end) && start < end);
        let search = &body[start..end];
        let tree = MemTree::new().with("f.py", &body);
        let edit = SearchReplaceEdit::new("f.py", search, rep.clone()).unwrap();
        let out = edits_to_patch(&tree, &[edit]).unwrap();
        let applied = apply_patch(&tree, &out.patch, Fuzz::STRICT).unwrap();
        prop_assert_eq!(applied.read("f.py").unwrap(), body.replacen(search, &rep, 1));
    }

    #[test]
    fn comment_stripping_is_idempotent(old in tree(), new in tree()) {
        let patch = diff_trees(&old, &new);
        let once = strip_comments(&patch, Language::Python).unwrap();
        let twice = strip_comments(&once, Language::Python).unwrap();
        prop_assert_eq!(once.render(), twice.render());
    }
}
