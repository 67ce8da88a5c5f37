//! Complex-valued expressions in the coordinates `z`, `w` of `C^2`, used by the
//! `custom` structure and hypersurface families.
//!
//! Grammar: numbers, `i`, `pi`, the variables `z w zb wb x y u v`
//! (`zb = conj z`, `x + iy = z`, `u + iv = w`), the operators `+ - * / ^` and
//! the functions `exp log sqrt sin cos conj re im abs`.

use std::sync::Arc;

use crate::grid::Point2C;
use crate::{Error, Result, C64};

#[derive(Clone, Copy, Debug, PartialEq)]
enum Var {
    Z,
    W,
    Zb,
    Wb,
    X,
    Y,
    U,
    V,
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Func {
    Exp,
    Log,
    Sqrt,
    Sin,
    Cos,
    Conj,
    Re,
    Im,
    Abs,
}

#[derive(Clone, Debug)]
enum Node {
    Const(C64),
    Var(Var),
    Neg(Box<Node>),
    Bin(char, Box<Node>, Box<Node>),
    Call(Func, Box<Node>),
}

/// A parsed expression; cheap to clone and safe to share across threads.
#[derive(Clone, Debug)]
pub struct Expr {
    src: String,
    root: Arc<Node>,
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
}

fn lex(s: &str) -> Result<Vec<Tok>> {
    let mut out = Vec::new();
    let cs: Vec<char> = s.chars().collect();
    let mut k = 0;
    while k < cs.len() {
        let c = cs[k];
        if c.is_whitespace() {
            k += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = k;
            while k < cs.len() && (cs[k].is_ascii_digit() || cs[k] == '.') {
                k += 1;
            }
            if k < cs.len() && (cs[k] == 'e' || cs[k] == 'E') {
                let mut j = k + 1;
                if j < cs.len() && (cs[j] == '+' || cs[j] == '-') {
                    j += 1;
                }
                if j < cs.len() && cs[j].is_ascii_digit() {
                    k = j;
                    while k < cs.len() && cs[k].is_ascii_digit() {
                        k += 1;
                    }
                }
            }
            let txt: String = cs[start..k].iter().collect();
            let v = txt
                .parse::<f64>()
                .map_err(|_| Error::Expr(format!("bad number `{txt}`")))?;
            out.push(Tok::Num(v));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = k;
            while k < cs.len() && (cs[k].is_ascii_alphanumeric() || cs[k] == '_') {
                k += 1;
            }
            out.push(Tok::Ident(cs[start..k].iter().collect()));
        } else if "+-*/^".contains(c) {
            out.push(Tok::Op(c));
            k += 1;
        } else if c == '(' {
            out.push(Tok::LParen);
            k += 1;
        } else if c == ')' {
            out.push(Tok::RParen);
            k += 1;
        } else {
            return Err(Error::Expr(format!("unexpected character `{c}`")));
        }
    }
    Ok(out)
}

struct Parser {
    toks: Vec<Tok>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    // sum := term (('+'|'-') term)*
    fn sum(&mut self) -> Result<Node> {
        let mut lhs = self.term()?;
        while let Some(Tok::Op(op @ ('+' | '-'))) = self.peek().cloned() {
            self.pos += 1;
            let rhs = self.term()?;
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    // term := unary (('*'|'/') unary)*
    fn term(&mut self) -> Result<Node> {
        let mut lhs = self.unary()?;
        while let Some(Tok::Op(op @ ('*' | '/'))) = self.peek().cloned() {
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    // unary := '-' unary | power
    fn unary(&mut self) -> Result<Node> {
        match self.peek() {
            Some(Tok::Op('-')) => {
                self.pos += 1;
                Ok(Node::Neg(Box::new(self.unary()?)))
            }
            Some(Tok::Op('+')) => {
                self.pos += 1;
                self.unary()
            }
            _ => self.power(),
        }
    }

    // power := atom ('^' unary)?   (right associative)
    fn power(&mut self) -> Result<Node> {
        let base = self.atom()?;
        if let Some(Tok::Op('^')) = self.peek() {
            self.pos += 1;
            let exp = self.unary()?;
            return Ok(Node::Bin('^', Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node> {
        match self.next() {
            Some(Tok::Num(v)) => Ok(Node::Const(C64::new(v, 0.0))),
            Some(Tok::LParen) => {
                let e = self.sum()?;
                match self.next() {
                    Some(Tok::RParen) => Ok(e),
                    _ => Err(Error::Expr("missing `)`".into())),
                }
            }
            Some(Tok::Ident(name)) => {
                if let Some(f) = func(&name) {
                    if self.next() != Some(Tok::LParen) {
                        return Err(Error::Expr(format!("`{name}` needs an argument in parentheses")));
                    }
                    let arg = self.sum()?;
                    if self.next() != Some(Tok::RParen) {
                        return Err(Error::Expr(format!("missing `)` after argument of `{name}`")));
                    }
                    return Ok(Node::Call(f, Box::new(arg)));
                }
                ident(&name)
            }
            Some(t) => Err(Error::Expr(format!("unexpected token {t:?}"))),
            None => Err(Error::Expr("unexpected end of expression".into())),
        }
    }
}

fn func(name: &str) -> Option<Func> {
    Some(match name {
        "exp" => Func::Exp,
        "log" => Func::Log,
        "sqrt" => Func::Sqrt,
        "sin" => Func::Sin,
        "cos" => Func::Cos,
        "conj" => Func::Conj,
        "re" => Func::Re,
        "im" => Func::Im,
        "abs" => Func::Abs,
        _ => return None,
    })
}

fn ident(name: &str) -> Result<Node> {
    Ok(match name {
        "i" => Node::Const(C64::new(0.0, 1.0)),
        "pi" => Node::Const(C64::new(std::f64::consts::PI, 0.0)),
        "z" => Node::Var(Var::Z),
        "w" => Node::Var(Var::W),
        "zb" | "zbar" => Node::Var(Var::Zb),
        "wb" | "wbar" => Node::Var(Var::Wb),
        "x" => Node::Var(Var::X),
        "y" => Node::Var(Var::Y),
        "u" => Node::Var(Var::U),
        "v" => Node::Var(Var::V),
        _ => return Err(Error::Expr(format!("unknown identifier `{name}`"))),
    })
}

fn eval(node: &Node, p: &Point2C) -> C64 {
    match node {
        Node::Const(c) => *c,
        Node::Var(v) => match v {
            Var::Z => p.z,
            Var::W => p.w,
            Var::Zb => p.z.conj(),
            Var::Wb => p.w.conj(),
            Var::X => C64::new(p.z.re, 0.0),
            Var::Y => C64::new(p.z.im, 0.0),
            Var::U => C64::new(p.w.re, 0.0),
            Var::V => C64::new(p.w.im, 0.0),
        },
        Node::Neg(a) => -eval(a, p),
        Node::Bin(op, a, b) => {
            let (x, y) = (eval(a, p), eval(b, p));
            match op {
                '+' => x + y,
                '-' => x - y,
                '*' => x * y,
                '/' => x / y,
                _ => {
                    // integer powers stay exact at 0
                    if y.im == 0.0 && y.re.fract() == 0.0 && y.re.abs() < 64.0 {
                        x.powi(y.re as i32)
                    } else {
                        x.powc(y)
                    }
                }
            }
        }
        Node::Call(f, a) => {
            let x = eval(a, p);
            match f {
                Func::Exp => x.exp(),
                Func::Log => x.ln(),
                Func::Sqrt => x.sqrt(),
                Func::Sin => x.sin(),
                Func::Cos => x.cos(),
                Func::Conj => x.conj(),
                Func::Re => C64::new(x.re, 0.0),
                Func::Im => C64::new(x.im, 0.0),
                Func::Abs => C64::new(x.norm(), 0.0),
            }
        }
    }
}

impl Expr {
    pub fn parse(src: &str) -> Result<Self> {
        let mut p = Parser {
            toks: lex(src)?,
            pos: 0,
        };
        let root = p.sum()?;
        if p.pos != p.toks.len() {
            return Err(Error::Expr(format!("trailing input in `{src}`")));
        }
        Ok(Self {
            src: src.to_string(),
            root: Arc::new(root),
        })
    }

    pub fn source(&self) -> &str {
        &self.src
    }

    pub fn eval(&self, p: Point2C) -> C64 {
        eval(&self.root, &p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn at(s: &str, z: C64, w: C64) -> C64 {
        Expr::parse(s).unwrap().eval(Point2C::new(z, w))
    }

    #[test]
    fn arithmetic_and_precedence() {
        let o = C64::new(0.0, 0.0);
        assert_eq!(at("1 + 2*3", o, o), C64::new(7.0, 0.0));
        assert_eq!(at("-2^2", o, o), C64::new(-4.0, 0.0));
        assert_eq!(at("2^3^2", o, o), C64::new(512.0, 0.0));
        assert_eq!(at("(1+i)*(1-i)", o, o), C64::new(2.0, 0.0));
        assert!((at("1.5e-1 * 2", o, o).re - 0.3).abs() < 1e-15);
    }

    #[test]
    fn variables() {
        let z = C64::new(0.3, -0.2);
        let w = C64::new(-0.1, 0.4);
        assert_eq!(at("zb", z, w), z.conj());
        assert_eq!(at("x + i*y - z", z, w), C64::new(0.0, 0.0));
        assert!((at("w*wb", z, w) - w.norm_sqr()).norm() < 1e-15);
        assert!((at("re(z) + abs(w)^2", z, w) - (z.re + w.norm_sqr())).norm() < 1e-15);
        assert!((at("exp(i*pi)", z, w) + 1.0).norm() < 1e-15);
    }

    #[test]
    fn errors() {
        assert!(Expr::parse("1 +").is_err());
        assert!(Expr::parse("foo(z)").is_err());
        assert!(Expr::parse("(z").is_err());
        assert!(Expr::parse("z $ w").is_err());
        assert!(Expr::parse("exp z").is_err());
    }
}
