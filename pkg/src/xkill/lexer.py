"""SQL tokenizer shared by the DDL and query parsers."""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ParseError

_OPERATORS = [
    "<=", ">=", "<>", "!=", "||", "=", "<", ">", "(", ")", ",", ";", ".", "*",
    "+", "-", "/", "%",
]


@dataclass
class Token:
    kind: str  # IDENT, NUMBER, STRING, OP, PARAM, EOF
    value: str
    line: int
    column: int

    @property
    def upper(self) -> str:
        return self.value.upper()


def tokenize(text: str) -> list[Token]:
    tokens: list[Token] = []
    i, line, col = 0, 1, 1
    n = len(text)

    def advance(k: int) -> None:
        nonlocal i, line, col
        for _ in range(k):
            if i < n and text[i] == "\n":
                line += 1
                col = 1
            else:
                col += 1
            i += 1

    while i < n:
        c = text[i]
        if c in " \t\r\n":
            advance(1)
            continue
        if text.startswith("--", i):
            j = text.find("\n", i)
            advance((j - i) if j >= 0 else (n - i))
            continue
        if text.startswith("/*", i):
            j = text.find("*/", i)
            if j < 0:
                raise ParseError("unterminated comment", line, col)
            advance(j + 2 - i)
            continue
        start_line, start_col = line, col
        if c == "'":
            # SQL string literal with '' escaping
            j = i + 1
            buf = []
            while True:
                if j >= n:
                    raise ParseError("unterminated string literal", start_line, start_col)
                if text[j] == "'":
                    if j + 1 < n and text[j + 1] == "'":
                        buf.append("'")
                        j += 2
                        continue
                    break
                buf.append(text[j])
                j += 1
            tokens.append(Token("STRING", "".join(buf), start_line, start_col))
            advance(j + 1 - i)
            continue
        if c == '"':
            j = text.find('"', i + 1)
            if j < 0:
                raise ParseError("unterminated quoted identifier", start_line, start_col)
            tokens.append(Token("IDENT", text[i + 1:j], start_line, start_col))
            advance(j + 1 - i)
            continue
        if c.isdigit() or (c == "." and i + 1 < n and text[i + 1].isdigit()):
            j = i
            seen_dot = False
            while j < n and (text[j].isdigit() or (text[j] == "." and not seen_dot)):
                if text[j] == ".":
                    # keep "1." followed by non-digit out of the number
                    if j + 1 >= n or not text[j + 1].isdigit():
                        break
                    seen_dot = True
                j += 1
            tokens.append(Token("NUMBER", text[i:j], start_line, start_col))
            advance(j - i)
            continue
        if c.isalpha() or c == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            tokens.append(Token("IDENT", text[i:j], start_line, start_col))
            advance(j - i)
            continue
        if c in ":?$":
            # parameter markers: :name, ?, $1
            if c == ":" and i + 1 < n and (text[i + 1].isalpha() or text[i + 1] == "_"):
                j = i + 1
                while j < n and (text[j].isalnum() or text[j] == "_"):
                    j += 1
                tokens.append(Token("PARAM", text[i + 1:j], start_line, start_col))
                advance(j - i)
                continue
            if c == "$" and i + 1 < n and text[i + 1].isdigit():
                j = i + 1
                while j < n and text[j].isdigit():
                    j += 1
                tokens.append(Token("PARAM", text[i:j], start_line, start_col))
                advance(j - i)
                continue
            if c == "?":
                tokens.append(Token("PARAM", f"?{sum(1 for t in tokens if t.kind == 'PARAM') + 1}",
                                    start_line, start_col))
                advance(1)
                continue
        for op in _OPERATORS:
            if text.startswith(op, i):
                tokens.append(Token("OP", op, start_line, start_col))
                advance(len(op))
                break
        else:
            raise ParseError(f"unexpected character {c!r}", start_line, start_col)
    tokens.append(Token("EOF", "", line, col))
    return tokens


class TokenStream:
    """Cursor over a token list with the usual peek/expect helpers."""

    def __init__(self, tokens: list[Token]):
        self.tokens = tokens
        self.pos = 0

    def peek(self, ahead: int = 0) -> Token:
        return self.tokens[min(self.pos + ahead, len(self.tokens) - 1)]

    def next(self) -> Token:
        tok = self.peek()
        if tok.kind != "EOF":
            self.pos += 1
        return tok

    def at_keyword(self, *words: str) -> bool:
        tok = self.peek()
        return tok.kind == "IDENT" and tok.upper in words

    def accept_keyword(self, *words: str) -> Token | None:
        if self.at_keyword(*words):
            return self.next()
        return None

    def expect_keyword(self, word: str) -> Token:
        tok = self.accept_keyword(word)
        if tok is None:
            got = self.peek()
            raise ParseError(f"expected {word}, got {got.value!r}", got.line, got.column)
        return tok

    def at_op(self, *ops: str) -> bool:
        tok = self.peek()
        return tok.kind == "OP" and tok.value in ops

    def accept_op(self, *ops: str) -> Token | None:
        if self.at_op(*ops):
            return self.next()
        return None

    def expect_op(self, op: str) -> Token:
        tok = self.accept_op(op)
        if tok is None:
            got = self.peek()
            raise ParseError(f"expected {op!r}, got {got.value!r}", got.line, got.column)
        return tok

    def expect_ident(self) -> Token:
        tok = self.peek()
        if tok.kind != "IDENT":
            raise ParseError(f"expected identifier, got {tok.value!r}", tok.line, tok.column)
        return self.next()
