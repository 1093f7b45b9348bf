#include "mvr/dsl.hpp"

#include <cctype>
#include <set>
#include <sstream>

namespace mvr::dsl {

ExprPtr make_bool(bool v) { return std::make_shared<Expr>(Expr{Expr::BoolLit{v}}); }
ExprPtr make_int(long long v) { return std::make_shared<Expr>(Expr{Expr::IntLit{v}}); }
ExprPtr make_str(std::string v) { return std::make_shared<Expr>(Expr{Expr::StrLit{std::move(v)}}); }
ExprPtr make_var(std::string name) { return std::make_shared<Expr>(Expr{Expr::Var{std::move(name)}}); }
ExprPtr make_not(ExprPtr operand) { return std::make_shared<Expr>(Expr{Expr::Not{std::move(operand)}}); }
ExprPtr make_binary(BinOp op, ExprPtr lhs, ExprPtr rhs) {
    return std::make_shared<Expr>(Expr{Expr::Binary{op, std::move(lhs), std::move(rhs)}});
}

bool expr_equal(const Expr& a, const Expr& b) {
    if (a.node.index() != b.node.index()) return false;
    if (auto* ba = std::get_if<Expr::BoolLit>(&a.node))
        return ba->value == std::get<Expr::BoolLit>(b.node).value;
    if (auto* ia = std::get_if<Expr::IntLit>(&a.node))
        return ia->value == std::get<Expr::IntLit>(b.node).value;
    if (auto* sa = std::get_if<Expr::StrLit>(&a.node))
        return sa->value == std::get<Expr::StrLit>(b.node).value;
    if (auto* va = std::get_if<Expr::Var>(&a.node))
        return va->name == std::get<Expr::Var>(b.node).name;
    if (auto* na = std::get_if<Expr::Not>(&a.node))
        return expr_equal(*na->operand, *std::get<Expr::Not>(b.node).operand);
    const auto& xa = std::get<Expr::Binary>(a.node);
    const auto& xb = std::get<Expr::Binary>(b.node);
    return xa.op == xb.op && expr_equal(*xa.lhs, *xb.lhs) && expr_equal(*xa.rhs, *xb.rhs);
}

Arg Arg::str(std::string s) { Arg a; a.kind = Kind::Str; a.text = std::move(s); return a; }
Arg Arg::var(std::string name) { Arg a; a.kind = Kind::Var; a.text = std::move(name); return a; }
Arg Arg::boolean(bool v) { Arg a; a.kind = Kind::Bool; a.bool_value = v; return a; }
Arg Arg::integer(long long v) { Arg a; a.kind = Kind::Int; a.int_value = v; return a; }
Arg Arg::expression(ExprPtr e) { Arg a; a.kind = Kind::Expr; a.expr = std::move(e); return a; }

bool arg_equal(const Arg& a, const Arg& b) {
    if (a.kind != b.kind) return false;
    switch (a.kind) {
        case Arg::Kind::Str:
        case Arg::Kind::Var: return a.text == b.text;
        case Arg::Kind::Bool: return a.bool_value == b.bool_value;
        case Arg::Kind::Int: return a.int_value == b.int_value;
        case Arg::Kind::Expr: return expr_equal(*a.expr, *b.expr);
    }
    return false;
}

const Arg* Stmt::find_arg(const std::string& name) const {
    for (const auto& [n, a] : args)
        if (n == name) return &a;
    return nullptr;
}

bool stmt_equal(const Stmt& a, const Stmt& b) {
    if (a.target != b.target || a.op_name != b.op_name || a.args.size() != b.args.size())
        return false;
    for (size_t i = 0; i < a.args.size(); ++i)
        if (a.args[i].first != b.args[i].first || !arg_equal(a.args[i].second, b.args[i].second))
            return false;
    return true;
}

bool program_equal(const Program& a, const Program& b) {
    if (a.statements.size() != b.statements.size()) return false;
    for (size_t i = 0; i < a.statements.size(); ++i)
        if (!stmt_equal(a.statements[i], b.statements[i])) return false;
    return true;
}

ParseError::ParseError(Kind k, int ln, int col, const std::string& message)
    : std::runtime_error("line " + std::to_string(ln) + ", col " + std::to_string(col) + ": " +
                         message),
      kind(k),
      line(ln),
      column(col) {}

namespace {

enum class Tok {
    Ident, Int, Str, Assign, EqEq, NotEq, LParen, RParen, Comma,
    KwTrue, KwFalse, KwAnd, KwOr, KwNot, End,
};

struct Token {
    Tok kind;
    std::string text;
    long long int_value = 0;
    int column = 1;
};

class Lexer {
public:
    Lexer(const std::string& src, int line) : src_(src), line_(line) {}

    std::vector<Token> run() {
        std::vector<Token> out;
        while (true) {
            Token t = next();
            out.push_back(t);
            if (t.kind == Tok::End) break;
        }
        return out;
    }

private:
    [[noreturn]] void fail(const std::string& msg) {
        throw ParseError(ParseError::Kind::Syntax, line_, static_cast<int>(pos_) + 1, msg);
    }

    Token next() {
        while (pos_ < src_.size() && (src_[pos_] == ' ' || src_[pos_] == '\t')) ++pos_;
        int col = static_cast<int>(pos_) + 1;
        if (pos_ >= src_.size()) return {Tok::End, "", 0, col};
        char c = src_[pos_];
        if (c == '=') {
            if (pos_ + 1 < src_.size() && src_[pos_ + 1] == '=') {
                pos_ += 2;
                return {Tok::EqEq, "==", 0, col};
            }
            ++pos_;
            return {Tok::Assign, "=", 0, col};
        }
        if (c == '!') {
            if (pos_ + 1 < src_.size() && src_[pos_ + 1] == '=') {
                pos_ += 2;
                return {Tok::NotEq, "!=", 0, col};
            }
            fail("expected '=' after '!'");
        }
        if (c == '(') { ++pos_; return {Tok::LParen, "(", 0, col}; }
        if (c == ')') { ++pos_; return {Tok::RParen, ")", 0, col}; }
        if (c == ',') { ++pos_; return {Tok::Comma, ",", 0, col}; }
        if (c == '\'') {
            // single-quoted, no escapes; inner text kept verbatim
            size_t end = src_.find('\'', pos_ + 1);
            if (end == std::string::npos) fail("unterminated string literal");
            std::string inner = src_.substr(pos_ + 1, end - pos_ - 1);
            pos_ = end + 1;
            return {Tok::Str, inner, 0, col};
        }
        if (std::isdigit(static_cast<unsigned char>(c)) ||
            (c == '-' && pos_ + 1 < src_.size() &&
             std::isdigit(static_cast<unsigned char>(src_[pos_ + 1])))) {
            size_t start = pos_;
            if (c == '-') ++pos_;
            while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) ++pos_;
            std::string text = src_.substr(start, pos_ - start);
            return {Tok::Int, text, std::stoll(text), col};
        }
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            size_t start = pos_;
            while (pos_ < src_.size() && (std::isalnum(static_cast<unsigned char>(src_[pos_])) ||
                                          src_[pos_] == '_'))
                ++pos_;
            std::string text = src_.substr(start, pos_ - start);
            if (text == "True") return {Tok::KwTrue, text, 0, col};
            if (text == "False") return {Tok::KwFalse, text, 0, col};
            if (text == "and") return {Tok::KwAnd, text, 0, col};
            if (text == "or") return {Tok::KwOr, text, 0, col};
            if (text == "not") return {Tok::KwNot, text, 0, col};
            return {Tok::Ident, text, 0, col};
        }
        fail(std::string("unexpected character '") + c + "'");
    }

    const std::string& src_;
    int line_;
    size_t pos_ = 0;
};

class Parser {
public:
    Parser(std::vector<Token> tokens, int line) : tokens_(std::move(tokens)), line_(line) {}

    Stmt parse_stmt() {
        Stmt s;
        s.target = expect(Tok::Ident, "assignment target").text;
        expect(Tok::Assign, "'='");
        s.op_name = expect(Tok::Ident, "operation name").text;
        expect(Tok::LParen, "'('");
        if (s.op_name == "EVAL") {
            // exactly one positional expression argument
            s.args.emplace_back("", Arg::expression(std::make_shared<Expr>(parse_expression())));
        } else if (peek().kind != Tok::RParen) {
            parse_named_args(s);
        }
        expect(Tok::RParen, "')'");
        expect(Tok::End, "end of statement");
        return s;
    }

    Expr parse_expr_only() {
        Expr e = parse_expression();
        expect(Tok::End, "end of expression");
        return e;
    }

private:
    const Token& peek() const { return tokens_[pos_]; }
    Token advance() { return tokens_[pos_++]; }

    [[noreturn]] void fail(const std::string& msg) {
        throw ParseError(ParseError::Kind::Syntax, line_, peek().column, msg);
    }

    Token expect(Tok kind, const std::string& what) {
        if (peek().kind != kind) fail("expected " + what);
        return advance();
    }

    void parse_named_args(Stmt& s) {
        std::set<std::string> names;
        while (true) {
            Token name = expect(Tok::Ident, "argument name");
            if (!names.insert(name.text).second)
                throw ParseError(ParseError::Kind::Syntax, line_, name.column,
                                 "duplicate argument name \"" + name.text + "\"");
            expect(Tok::Assign, "'=' after argument name");
            s.args.emplace_back(name.text, parse_value());
            if (peek().kind == Tok::Comma) {
                advance();
                continue;
            }
            break;
        }
    }

    Arg parse_value() {
        const Token& t = peek();
        switch (t.kind) {
            case Tok::Str: return Arg::str(advance().text);
            case Tok::Ident: return Arg::var(advance().text);
            case Tok::KwTrue: advance(); return Arg::boolean(true);
            case Tok::KwFalse: advance(); return Arg::boolean(false);
            case Tok::Int: return Arg::integer(advance().int_value);
            default: fail("expected argument value");
        }
    }

    // or_expr := and_expr ('or' and_expr)*
    Expr parse_expression() { return *parse_or(); }

    ExprPtr parse_or() {
        ExprPtr lhs = parse_and();
        while (peek().kind == Tok::KwOr) {
            advance();
            lhs = make_binary(BinOp::Or, std::move(lhs), parse_and());
        }
        return lhs;
    }

    ExprPtr parse_and() {
        ExprPtr lhs = parse_not();
        while (peek().kind == Tok::KwAnd) {
            advance();
            lhs = make_binary(BinOp::And, std::move(lhs), parse_not());
        }
        return lhs;
    }

    ExprPtr parse_not() {
        if (peek().kind == Tok::KwNot) {
            advance();
            return make_not(parse_not());
        }
        return parse_comparison();
    }

    ExprPtr parse_comparison() {
        ExprPtr lhs = parse_primary();
        if (peek().kind == Tok::EqEq || peek().kind == Tok::NotEq) {
            BinOp op = advance().kind == Tok::EqEq ? BinOp::Eq : BinOp::Ne;
            return make_binary(op, std::move(lhs), parse_primary());
        }
        return lhs;
    }

    ExprPtr parse_primary() {
        const Token& t = peek();
        switch (t.kind) {
            case Tok::KwTrue: advance(); return make_bool(true);
            case Tok::KwFalse: advance(); return make_bool(false);
            case Tok::Int: return make_int(advance().int_value);
            case Tok::Str: return make_str(advance().text);
            case Tok::Ident: return make_var(advance().text);
            case Tok::LParen: {
                advance();
                ExprPtr inner = parse_or();
                expect(Tok::RParen, "')'");
                return inner;
            }
            default: fail("expected expression");
        }
    }

    std::vector<Token> tokens_;
    int line_;
    size_t pos_ = 0;
};

void collect_vars(const Expr& e, std::vector<std::string>& out) {
    if (auto* v = std::get_if<Expr::Var>(&e.node)) {
        out.push_back(v->name);
    } else if (auto* n = std::get_if<Expr::Not>(&e.node)) {
        collect_vars(*n->operand, out);
    } else if (auto* b = std::get_if<Expr::Binary>(&e.node)) {
        collect_vars(*b->lhs, out);
        collect_vars(*b->rhs, out);
    }
}

void validate(const Program& p, const std::vector<int>& line_numbers) {
    std::set<std::string> assigned = {"LEFT", "RIGHT"};
    for (size_t i = 0; i < p.statements.size(); ++i) {
        const Stmt& s = p.statements[i];
        int line = line_numbers[i];
        std::vector<std::string> used;
        for (const auto& [name, arg] : s.args) {
            if (arg.kind == Arg::Kind::Var) used.push_back(arg.text);
            if (arg.kind == Arg::Kind::Expr) collect_vars(*arg.expr, used);
        }
        for (const auto& v : used)
            if (!assigned.count(v))
                throw ParseError(ParseError::Kind::UseBeforeAssign, line, 1,
                                 "use of \"" + v + "\" before assignment");
        if (!assigned.insert(s.target).second)
            throw ParseError(ParseError::Kind::Reassignment, line, 1,
                             "reassignment of \"" + s.target + "\"");
    }
    if (p.statements.back().op_name != "RESULT")
        throw ParseError(ParseError::Kind::MissingResult, line_numbers.back(), 1,
                         "last statement must be RESULT");
}

bool blank(const std::string& s) {
    return s.find_first_not_of(" \t\r") == std::string::npos;
}

}  // namespace

Program parse_program(const std::string& source) {
    Program p;
    std::vector<int> line_numbers;
    std::istringstream in(source);
    std::string line_text;
    int line = 0;
    while (std::getline(in, line_text)) {
        ++line;
        if (!line_text.empty() && line_text.back() == '\r') line_text.pop_back();
        if (blank(line_text)) continue;
        Parser parser(Lexer(line_text, line).run(), line);
        p.statements.push_back(parser.parse_stmt());
        line_numbers.push_back(line);
    }
    if (p.statements.empty())
        throw ParseError(ParseError::Kind::Syntax, 1, 1, "empty program");
    validate(p, line_numbers);
    return p;
}

Expr parse_expr(const std::string& source) {
    Parser parser(Lexer(source, 1).run(), 1);
    return parser.parse_expr_only();
}

namespace {

// precedence: or=1, and=2, not=3, ==/!= = 4, atoms=6
int expr_prec(const Expr& e) {
    if (std::holds_alternative<Expr::Binary>(e.node)) {
        switch (std::get<Expr::Binary>(e.node).op) {
            case BinOp::Or: return 1;
            case BinOp::And: return 2;
            case BinOp::Eq:
            case BinOp::Ne: return 4;
        }
    }
    if (std::holds_alternative<Expr::Not>(e.node)) return 3;
    return 6;
}

std::string render_wrapped(const Expr& e, int min_prec) {
    std::string s = render_expr(e);
    if (expr_prec(e) < min_prec) return "(" + s + ")";
    return s;
}

std::string render_arg(const Arg& a) {
    switch (a.kind) {
        case Arg::Kind::Str: return "'" + a.text + "'";
        case Arg::Kind::Var: return a.text;
        case Arg::Kind::Bool: return a.bool_value ? "True" : "False";
        case Arg::Kind::Int: return std::to_string(a.int_value);
        case Arg::Kind::Expr: return render_expr(*a.expr);
    }
    return "";
}

}  // namespace

std::string render_expr(const Expr& e) {
    if (auto* b = std::get_if<Expr::BoolLit>(&e.node)) return b->value ? "True" : "False";
    if (auto* i = std::get_if<Expr::IntLit>(&e.node)) return std::to_string(i->value);
    if (auto* s = std::get_if<Expr::StrLit>(&e.node)) return "'" + s->value + "'";
    if (auto* v = std::get_if<Expr::Var>(&e.node)) return v->name;
    if (auto* n = std::get_if<Expr::Not>(&e.node)) return "not " + render_wrapped(*n->operand, 3);
    const auto& bin = std::get<Expr::Binary>(e.node);
    switch (bin.op) {
        case BinOp::Or: return render_wrapped(*bin.lhs, 1) + " or " + render_wrapped(*bin.rhs, 2);
        case BinOp::And: return render_wrapped(*bin.lhs, 2) + " and " + render_wrapped(*bin.rhs, 3);
        case BinOp::Eq: return render_wrapped(*bin.lhs, 6) + " == " + render_wrapped(*bin.rhs, 6);
        case BinOp::Ne: return render_wrapped(*bin.lhs, 6) + " != " + render_wrapped(*bin.rhs, 6);
    }
    return "";
}

std::string render_stmt(const Stmt& s) {
    std::string out = s.target + "=" + s.op_name + "(";
    for (size_t i = 0; i < s.args.size(); ++i) {
        if (i) out += ",";
        const auto& [name, arg] = s.args[i];
        if (!name.empty()) out += name + "=";
        out += render_arg(arg);
    }
    out += ")";
    return out;
}

std::string render_program(const Program& p) {
    std::string out;
    for (const auto& s : p.statements) {
        out += render_stmt(s);
        out += '\n';
    }
    return out;
}

}  // namespace mvr::dsl
