//! Bracketed tree reader: `(LABEL child child ...)` where each child is either
//! another bracketed node or a bare token.

use crate::error::ParseError;

/// A tree exactly as written, before binarization.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LabeledTree {
    Node {
        label: Option<String>,
        children: Vec<LabeledTree>,
    },
    Token(String),
}

impl LabeledTree {
    pub fn node(label: &str, children: Vec<LabeledTree>) -> Self {
        LabeledTree::Node {
            label: Some(label.to_string()),
            children,
        }
    }

    pub fn token(text: &str) -> Self {
        LabeledTree::Token(text.to_string())
    }

    pub fn label(&self) -> Option<&str> {
        match self {
            LabeledTree::Node { label, .. } => label.as_deref(),
            LabeledTree::Token(_) => None,
        }
    }

    /// Tokens in left-to-right order.
    pub fn tokens(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_tokens(&mut out);
        out
    }

    fn collect_tokens<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            LabeledTree::Token(t) => out.push(t),
            LabeledTree::Node { children, .. } => {
                for c in children {
                    c.collect_tokens(out);
                }
            }
        }
    }

    pub fn to_sexpr(&self) -> String {
        let mut s = String::new();
        self.write_sexpr(&mut s);
        s
    }

    fn write_sexpr(&self, out: &mut String) {
        match self {
            LabeledTree::Token(t) => out.push_str(t),
            LabeledTree::Node { label, children } => {
                out.push('(');
                if let Some(l) = label {
                    out.push_str(l);
                }
                for c in children {
                    out.push(' ');
                    c.write_sexpr(out);
                }
                out.push(')');
            }
        }
    }
}

struct Reader<'a> {
    text: &'a str,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn skip_ws(&mut self) {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&self) -> Option<u8> {
        self.bytes.get(self.pos).copied()
    }

    fn atom(&mut self) -> Result<&'a str, ParseError> {
        let start = self.pos;
        while let Some(b) = self.peek() {
            match b {
                b'(' => return Err(ParseError::ParenInToken { offset: self.pos }),
                b')' => break,
                b if b.is_ascii_whitespace() => break,
                _ => self.pos += 1,
            }
        }
        Ok(&self.text[start..self.pos])
    }

    /// Parses a node; the cursor sits on its opening parenthesis.
    fn node(&mut self) -> Result<LabeledTree, ParseError> {
        let open = self.pos;
        self.pos += 1;
        self.skip_ws();
        let label = match self.peek() {
            Some(b'(') | Some(b')') | None => None,
            Some(_) => Some(self.atom()?.to_string()),
        };
        let mut children = Vec::new();
        loop {
            self.skip_ws();
            match self.peek() {
                None => return Err(ParseError::Unbalanced { offset: self.pos }),
                Some(b')') => {
                    self.pos += 1;
                    break;
                }
                Some(b'(') => children.push(self.node()?),
                Some(_) => children.push(LabeledTree::Token(self.atom()?.to_string())),
            }
        }
        if children.is_empty() {
            return Err(ParseError::EmptyNode { offset: open });
        }
        Ok(LabeledTree::Node { label, children })
    }
}

/// Parses one bracketed tree. Offsets in errors are byte offsets into `text`.
pub fn parse_sexpr(text: &str) -> Result<LabeledTree, ParseError> {
    let mut r = Reader {
        text,
        bytes: text.as_bytes(),
        pos: 0,
    };
    r.skip_ws();
    let tree = match r.peek() {
        None => return Err(ParseError::Empty),
        Some(b'(') => r.node()?,
        Some(b')') => return Err(ParseError::Unbalanced { offset: r.pos }),
        Some(_) => return Err(ParseError::Unbalanced { offset: r.pos }),
    };
    r.skip_ws();
    match r.peek() {
        None => Ok(tree),
        Some(b')') => Err(ParseError::Unbalanced { offset: r.pos }),
        Some(_) => Err(ParseError::Trailing { offset: r.pos }),
    }
}
