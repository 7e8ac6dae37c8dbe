use super::{Alphabet, Atom, Formula};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseError {
    #[error("empty formula")]
    Empty,
    #[error("expected {expected} at position {position}, found {found}")]
    Unexpected {
        position: usize,
        expected: &'static str,
        found: String,
    },
    #[error("unknown proposition `{name}` at position {position}")]
    UnknownProposition { name: String, position: usize },
    #[error("window [{start},{end}] at position {position} starts after it ends")]
    InvalidWindow {
        start: u32,
        end: u32,
        position: usize,
    },
    #[error("number at position {position} does not fit in 32 bits")]
    NumberOutOfRange { position: usize },
}

/// Parses `text` against a fixed set of propositions.
pub fn parse_twtl(text: &str, ap: &Alphabet) -> Result<Formula, ParseError> {
    let mut props = Props::Fixed(ap);
    Parser::new(text, &mut props).parse()
}

/// Parses `text`, collecting every identifier into a fresh alphabet in order of
/// first appearance.
pub fn parse_with_alphabet(text: &str) -> Result<(Formula, Alphabet), ParseError> {
    let mut props = Props::Open(Alphabet::default());
    let f = Parser::new(text, &mut props).parse()?;
    match props {
        Props::Open(ap) => Ok((f, ap)),
        Props::Fixed(_) => unreachable!(),
    }
}

enum Props<'a> {
    Fixed(&'a Alphabet),
    Open(Alphabet),
}

struct Parser<'s, 'p, 'a> {
    text: &'s str,
    pos: usize,
    props: &'p mut Props<'a>,
}

impl<'s, 'p, 'a> Parser<'s, 'p, 'a> {
    fn new(text: &'s str, props: &'p mut Props<'a>) -> Self {
        Parser { text, pos: 0, props }
    }

    fn parse(mut self) -> Result<Formula, ParseError> {
        self.skip_ws();
        if self.peek().is_none() {
            return Err(ParseError::Empty);
        }
        let f = self.seq()?;
        self.skip_ws();
        if self.peek().is_some() {
            return Err(self.unexpected("end of formula"));
        }
        Ok(f)
    }

    fn peek(&self) -> Option<char> {
        self.text[self.pos..].chars().next()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += c.len_utf8();
        Some(c)
    }

    fn skip_ws(&mut self) {
        while self.peek().is_some_and(char::is_whitespace) {
            self.bump();
        }
    }

    fn unexpected(&self, expected: &'static str) -> ParseError {
        let found = match self.peek() {
            Some(c) => format!("`{c}`"),
            None => "end of input".to_string(),
        };
        ParseError::Unexpected {
            position: self.pos,
            expected,
            found,
        }
    }

    /// Consumes `c` (or one of its aliases) after optional whitespace.
    fn eat(&mut self, accepted: &[char]) -> bool {
        self.skip_ws();
        match self.peek() {
            Some(c) if accepted.contains(&c) => {
                self.bump();
                true
            }
            _ => false,
        }
    }

    fn expect(&mut self, c: char, expected: &'static str) -> Result<(), ParseError> {
        if self.eat(&[c]) {
            Ok(())
        } else {
            Err(self.unexpected(expected))
        }
    }

    fn seq(&mut self) -> Result<Formula, ParseError> {
        let mut f = self.or()?;
        while self.eat(&['.', '·']) {
            f = Formula::concat(f, self.or()?);
        }
        Ok(f)
    }

    fn or(&mut self) -> Result<Formula, ParseError> {
        let mut f = self.and()?;
        while self.eat(&['|', '∨']) {
            f = Formula::or(f, self.and()?);
        }
        Ok(f)
    }

    fn and(&mut self) -> Result<Formula, ParseError> {
        let mut f = self.unary()?;
        while self.eat(&['&', '∧']) {
            f = Formula::and(f, self.unary()?);
        }
        Ok(f)
    }

    fn unary(&mut self) -> Result<Formula, ParseError> {
        if self.eat(&['!', '¬']) {
            return Ok(Formula::not(self.unary()?));
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<Formula, ParseError> {
        self.skip_ws();
        match self.peek() {
            Some('(') => {
                self.bump();
                let f = self.seq()?;
                self.expect(')', "`)`")?;
                Ok(f)
            }
            Some('[') => {
                self.bump();
                let inner = self.seq()?;
                self.expect(']', "`]`")?;
                self.expect('^', "`^`")?;
                self.expect('[', "`[`")?;
                self.skip_ws();
                let at = self.pos;
                let start = self.number()?;
                self.expect(',', "`,`")?;
                let end = self.number()?;
                self.expect(']', "`]`")?;
                if start > end {
                    return Err(ParseError::InvalidWindow {
                        start,
                        end,
                        position: at,
                    });
                }
                Ok(Formula::within(inner, start, end))
            }
            Some('H') => {
                let at = self.pos;
                self.bump();
                if !self.eat(&['^']) {
                    self.pos = at;
                    return Err(self.unexpected("a hold `H^d`"));
                }
                let duration = self.number()?;
                let negated = self.eat(&['!', '¬']);
                let atom = self.atom()?;
                Ok(Formula::Hold {
                    duration,
                    atom,
                    negated,
                })
            }
            _ => Err(self.unexpected("a hold, `[` or `(`")),
        }
    }

    fn number(&mut self) -> Result<u32, ParseError> {
        self.skip_ws();
        let start = self.pos;
        while self.peek().is_some_and(|c| c.is_ascii_digit()) {
            self.bump();
        }
        if start == self.pos {
            return Err(self.unexpected("a number"));
        }
        self.text[start..self.pos]
            .parse()
            .map_err(|_| ParseError::NumberOutOfRange { position: start })
    }

    fn atom(&mut self) -> Result<Atom, ParseError> {
        self.skip_ws();
        let start = self.pos;
        match self.peek() {
            Some(c) if c.is_alphabetic() || c == '_' => {}
            _ => return Err(self.unexpected("a proposition")),
        }
        while self.peek().is_some_and(|c| c.is_alphanumeric() || c == '_') {
            self.bump();
        }
        let name = &self.text[start..self.pos];
        if name == "true" {
            return Ok(Atom::True);
        }
        let index = match &mut *self.props {
            Props::Fixed(ap) => ap.index_of(name),
            Props::Open(ap) => Some(ap.insert(name.to_string())),
        };
        index
            .map(Atom::Prop)
            .ok_or_else(|| ParseError::UnknownProposition {
                name: name.to_string(),
                position: start,
            })
    }
}
