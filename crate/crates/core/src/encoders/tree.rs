use std::fmt::Write;

use crate::error::{Error, Result};

/// Unlabelled binary tree over token positions.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum BinaryTree {
    Leaf(usize),
    Branch(Box<BinaryTree>, Box<BinaryTree>),
}

impl BinaryTree {
    pub fn branch(left: BinaryTree, right: BinaryTree) -> Self {
        BinaryTree::Branch(Box::new(left), Box::new(right))
    }

    /// `((0 1) 2) ...`, fully nested to the left.
    pub fn left_branching(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptyTree);
        }
        Ok((1..n).fold(BinaryTree::Leaf(0), |acc, i| {
            BinaryTree::branch(acc, BinaryTree::Leaf(i))
        }))
    }

    /// `0 (1 (2 ...))`, fully nested to the right.
    pub fn right_branching(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptyTree);
        }
        Ok((0..n - 1).rev().fold(BinaryTree::Leaf(n - 1), |acc, i| {
            BinaryTree::branch(BinaryTree::Leaf(i), acc)
        }))
    }

    pub fn leaf_count(&self) -> usize {
        match self {
            BinaryTree::Leaf(_) => 1,
            BinaryTree::Branch(l, r) => l.leaf_count() + r.leaf_count(),
        }
    }

    /// Leaf positions read left to right.
    pub fn leaves(&self) -> Vec<usize> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves(&self, out: &mut Vec<usize>) {
        match self {
            BinaryTree::Leaf(i) => out.push(*i),
            BinaryTree::Branch(l, r) => {
                l.collect_leaves(out);
                r.collect_leaves(out);
            }
        }
    }

    /// True when the leaves are exactly `0..n` in order.
    pub fn is_well_formed(&self) -> bool {
        self.leaves().into_iter().enumerate().all(|(i, p)| i == p)
    }

    /// Checks that this tree covers a sentence of `n` tokens.
    pub fn validate(&self, n: usize) -> Result<()> {
        let leaves = self.leaf_count();
        if leaves != n || !self.is_well_formed() {
            return Err(Error::TreeMismatch { leaves, tokens: n });
        }
        Ok(())
    }

    /// Renders as `( ( a b ) c )` using `tokens` for the leaves.
    pub fn to_bracketed<S: AsRef<str>>(&self, tokens: &[S]) -> String {
        let mut out = String::new();
        self.write_bracketed(tokens, &mut out);
        out
    }

    fn write_bracketed<S: AsRef<str>>(&self, tokens: &[S], out: &mut String) {
        match self {
            BinaryTree::Leaf(i) => out.push_str(&tokens[*i].as_ref().to_lowercase()),
            BinaryTree::Branch(l, r) => {
                out.push_str("( ");
                l.write_bracketed(tokens, out);
                out.push(' ');
                r.write_bracketed(tokens, out);
                out.push_str(" )");
            }
        }
    }

    /// Graphviz description of the tree, for visual inspection.
    pub fn to_dot<S: AsRef<str>>(&self, tokens: &[S]) -> String {
        let mut out = String::from("digraph tree {\n  node [shape=plaintext];\n");
        let mut next = 0usize;
        self.write_dot(tokens, &mut out, &mut next);
        out.push_str("}\n");
        out
    }

    fn write_dot<S: AsRef<str>>(&self, tokens: &[S], out: &mut String, next: &mut usize) -> usize {
        let id = *next;
        *next += 1;
        match self {
            BinaryTree::Leaf(i) => {
                let label = tokens[*i].as_ref().replace('\\', "\\\\").replace('"', "\\\"");
                let _ = writeln!(out, "  n{id} [label=\"{label}\"];");
            }
            BinaryTree::Branch(l, r) => {
                let _ = writeln!(out, "  n{id} [label=\"\", shape=point];");
                let li = l.write_dot(tokens, out, next);
                let ri = r.write_dot(tokens, out, next);
                let _ = writeln!(out, "  n{id} -> n{li};\n  n{id} -> n{ri};");
            }
        }
        id
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use BinaryTree::Leaf;

    #[test]
    fn left_and_right_of_three() {
        assert_eq!(
            BinaryTree::left_branching(3).unwrap(),
            BinaryTree::branch(BinaryTree::branch(Leaf(0), Leaf(1)), Leaf(2))
        );
        assert_eq!(
            BinaryTree::right_branching(3).unwrap(),
            BinaryTree::branch(Leaf(0), BinaryTree::branch(Leaf(1), Leaf(2)))
        );
    }

    #[test]
    fn single_token_trees_are_leaves() {
        assert_eq!(BinaryTree::left_branching(1).unwrap(), Leaf(0));
        assert_eq!(BinaryTree::right_branching(1).unwrap(), Leaf(0));
    }

    #[test]
    fn zero_length_rejected() {
        assert!(BinaryTree::left_branching(0).is_err());
        assert!(BinaryTree::right_branching(0).is_err());
    }

    #[test]
    fn builders_are_well_formed() {
        for n in 1..10 {
            for t in [BinaryTree::left_branching(n), BinaryTree::right_branching(n)] {
                let t = t.unwrap();
                assert_eq!(t.leaf_count(), n);
                assert!(t.is_well_formed());
            }
        }
    }

    #[test]
    fn bracketed_rendering() {
        let t = BinaryTree::left_branching(3).unwrap();
        assert_eq!(t.to_bracketed(&["A", "b", "c"]), "( ( a b ) c )");
        assert_eq!(Leaf(0).to_bracketed(&["x"]), "x");
    }

    #[test]
    fn validate_catches_misordered_leaves() {
        let t = BinaryTree::branch(Leaf(1), Leaf(0));
        assert!(t.validate(2).is_err());
        assert!(BinaryTree::left_branching(3).unwrap().validate(4).is_err());
    }

    #[test]
    fn dot_output_has_every_token() {
        let t = BinaryTree::right_branching(3).unwrap();
        let dot = t.to_dot(&["a", "b", "c"]);
        assert!(dot.starts_with("digraph"));
        assert_eq!(dot.matches("->").count(), 4);
        assert!(dot.contains("\"c\""));
    }
}
